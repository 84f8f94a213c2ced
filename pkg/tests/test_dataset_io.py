import json
import shutil

import numpy as np
import pytest

from matsim.dataset_io import (
    DescriptorFileError,
    image_ref,
    label_for_ref,
    manifest_text,
    parse_dataset,
    ratio_filename,
    read_descriptors,
    read_descriptors_bin,
    read_descriptors_jsonl,
    validate_set_dir,
    write_descriptors_bin,
    write_descriptors_jsonl,
    write_set,
)
from matsim.errors import (
    DatasetValidationError,
    EmptyDatasetError,
    IncompleteSetError,
    SchemaVersionError,
)
from matsim.similarity import Descriptor


def unit_descriptor(seed, ref):
    v = np.random.default_rng(seed).normal(size=512)
    return Descriptor(values=v / np.linalg.norm(v), image_ref=ref)


class TestNaming:
    def test_ratio_filename_contract(self):
        assert ratio_filename(0.25) == "img_r025.png"
        assert ratio_filename(0.0) == "img_r000.png"
        assert ratio_filename(1.0) == "img_r100.png"

    def test_ref_roundtrip(self):
        ref = image_ref("00000007", 3, 0.75)
        assert ref == "set_00000007/scene_3/img_r075.png"
        label = label_for_ref(ref)
        assert label.set_id == "00000007"
        assert label.scene_index == 3
        assert label.ratio == 0.75


class TestWrittenTree:
    def test_file_census(self, tiny_dataset):
        set_dir = sorted(tiny_dataset.glob("set_*"))[0]
        pngs = list(set_dir.rglob("*.png"))
        jsons = list(set_dir.rglob("*.json"))
        assert len(pngs) == 36  # 30 images + 6 masks
        assert len(jsons) == 1

    def test_no_temp_dirs_left(self, tiny_dataset):
        assert not list(tiny_dataset.glob(".tmp-*"))

    def test_manifest_reparses_equal_and_byte_stable(self, tiny_dataset):
        set_dir = sorted(tiny_dataset.glob("set_*"))[0]
        text = (set_dir / "metadata.json").read_text(encoding="utf-8")
        manifest = json.loads(text)
        assert manifest_text(manifest) == text

    def test_validate_and_index(self, tiny_dataset):
        index = parse_dataset(tiny_dataset)
        assert len(index.sets) == 3
        assert not index.errors
        assert len(index.sets[0].image_refs) == 30
        assert len(index.vessel_sets) >= 1 and len(index.plain_sets) >= 1

    def test_labels_cover_every_ref(self, tiny_dataset):
        index = parse_dataset(tiny_dataset)
        labels = index.labels()
        assert len(labels) == 90
        for ref, label in labels.items():
            assert ref.startswith(f"set_{label.set_id}")


class TestValidationErrors:
    @pytest.fixture()
    def broken_root(self, tiny_dataset, tmp_path):
        root = tmp_path / "broken"
        shutil.copytree(tiny_dataset, root)
        return root

    def test_deleted_mask_names_scene(self, broken_root):
        set_dir = sorted(broken_root.glob("set_*"))[0]
        (set_dir / "scene_2" / "mask.png").unlink()
        with pytest.raises(DatasetValidationError, match="scene_2"):
            validate_set_dir(set_dir)

    def test_corrupted_json_reports_position(self, broken_root):
        set_dir = sorted(broken_root.glob("set_*"))[0]
        meta = set_dir / "metadata.json"
        meta.write_text(meta.read_text()[:40] + "}{boom", encoding="utf-8")
        with pytest.raises(DatasetValidationError, match=r"line \d+.*column \d+"):
            validate_set_dir(set_dir)

    def test_newer_major_schema_refused(self, broken_root):
        set_dir = sorted(broken_root.glob("set_*"))[0]
        meta = set_dir / "metadata.json"
        manifest = json.loads(meta.read_text())
        manifest["schema_version"] = "2.0"
        meta.write_text(manifest_text(manifest), encoding="utf-8")
        with pytest.raises(SchemaVersionError):
            validate_set_dir(set_dir)

    def test_missing_image_reported(self, broken_root):
        set_dir = sorted(broken_root.glob("set_*"))[0]
        (set_dir / "scene_0" / "img_r050.png").unlink()
        with pytest.raises(DatasetValidationError, match="img_r050"):
            validate_set_dir(set_dir)

    def test_parse_dataset_reports_but_keeps_going(self, broken_root):
        set_dir = sorted(broken_root.glob("set_*"))[0]
        (set_dir / "scene_1" / "mask.png").unlink()
        index = parse_dataset(broken_root)
        assert len(index.sets) == 2
        assert len(index.errors) == 1
        assert "scene_1" in index.errors[0][1]

    def test_empty_root(self, tmp_path):
        with pytest.raises(EmptyDatasetError):
            parse_dataset(tmp_path)
        with pytest.raises(EmptyDatasetError):
            parse_dataset(tmp_path / "missing")


class TestIncompleteWrite:
    def test_partial_outputs_rejected(self, tiny_dataset, desk_config):
        from matsim.scenes import generate_scene_set
        from matsim.tracer import RenderSettings, SetRenderResult, render_set
        from tests.conftest import DESK_SETTINGS

        scene_set = generate_scene_set(7, desk_config)
        settings = RenderSettings(seed=7, **DESK_SETTINGS)
        full = render_set(scene_set, settings, env_library=desk_config.env_library)
        partial = SetRenderResult(images=full.images[:5], masks=full.masks[:5])
        with pytest.raises(IncompleteSetError):
            write_set(scene_set, partial, tiny_dataset.parent / "x", settings, desk_config)


class TestDescriptorFiles:
    def test_jsonl_roundtrip(self, tmp_path):
        descs = [unit_descriptor(i, f"img{i}.png") for i in range(5)]
        p = tmp_path / "d.jsonl"
        write_descriptors_jsonl(p, descs)
        back = read_descriptors_jsonl(p)
        assert set(back) == {f"img{i}.png" for i in range(5)}
        np.testing.assert_allclose(back["img2.png"].values, descs[2].values, atol=1e-15)

    def test_duplicate_refs_rejected(self, tmp_path):
        p = tmp_path / "d.jsonl"
        d = unit_descriptor(0, "same.png")
        write_descriptors_jsonl(p, [d, d])
        with pytest.raises(DescriptorFileError, match="duplicate"):
            read_descriptors_jsonl(p)

    def test_norm_violation_rejected(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(json.dumps({"image_ref": "x", "descriptor": [0.5] * 512}) + "\n")
        from matsim.errors import NormError

        with pytest.raises(NormError):
            read_descriptors_jsonl(p)

    def test_wrong_dimension_rejected(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(json.dumps({"image_ref": "x", "descriptor": [1.0, 0.0]}) + "\n")
        with pytest.raises(DescriptorFileError, match="512"):
            read_descriptors_jsonl(p)

    def test_binary_roundtrip_with_refs_sidecar(self, tmp_path):
        descs = [unit_descriptor(i, f"img{i}.png") for i in range(4)]
        p = tmp_path / "d.desc.bin"
        write_descriptors_bin(p, descs)
        assert (tmp_path / "d.desc.bin.refs").exists()
        header = p.read_bytes()[:16]
        assert header[:8] == b"MSIMDESC"
        assert int.from_bytes(header[8:12], "little") == 4
        assert int.from_bytes(header[12:16], "little") == 512
        back = read_descriptors_bin(p)
        assert set(back) == {d.image_ref for d in descs}
        np.testing.assert_allclose(back["img1.png"].values, descs[1].values, atol=1e-6)

    def test_read_descriptors_dispatches_on_suffix(self, tmp_path):
        descs = [unit_descriptor(1, "a.png")]
        pj = tmp_path / "d.jsonl"
        pb = tmp_path / "d.desc.bin"
        write_descriptors_jsonl(pj, descs)
        write_descriptors_bin(pb, descs)
        assert set(read_descriptors(pj)) == {"a.png"}
        assert set(read_descriptors(pb)) == {"a.png"}

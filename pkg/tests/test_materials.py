import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matsim.errors import EmptyLibraryError, MapShapeError, MixKindError
from matsim.image_io import srgb_encode, write_png
from matsim.materials import (
    SET_RATIOS,
    MaterialSpec,
    MixtureRatio,
    TextureMap,
    combine_material_families,
    load_texture_map,
    load_textured_material,
    mix_materials,
    resample_map,
    sample_random_material,
)


def uniform_mat(mid="u", color=(0.2, 0.4, 0.6), rough=0.3, metal=0.1, trans=0.0, ior=1.5):
    return MaterialSpec(id=mid, kind="uniform", base_color=color, roughness=rough,
                        metallic=metal, transmission=trans, ior=ior)


def textured_mat(mid, rng, size=8):
    return MaterialSpec(
        id=mid, kind="textured",
        base_color=TextureMap(rng.uniform(0, 1, (size, size, 3))),
        roughness=TextureMap(rng.uniform(0, 1, (size, size))),
        metallic=float(rng.uniform()),
        transmission=0.0,
        normal=TextureMap(np.clip(rng.normal(0.5, 0.1, (size, size, 3)), 0, 1)),
    )


# ---------------------------------------------------------------------------
# oracle: plain per-pixel python loop for the affine blend

def mix_oracle(a: np.ndarray, b: np.ndarray, r: float) -> np.ndarray:
    out = np.empty_like(a)
    flat_a, flat_b, flat_o = a.ravel(), b.ravel(), out.ravel()
    for i in range(flat_a.size):
        flat_o[i] = (1.0 - r) * flat_a[i] + r * flat_b[i]
    return out


class TestMixMaterials:
    def test_endpoint_r0_is_a(self):
        a, b = uniform_mat("a"), uniform_mat("b", color=(0.9, 0.1, 0.2), rough=0.8)
        m = mix_materials(a, b, 0.0)
        assert m.base_color == a.base_color
        assert m.roughness == a.roughness
        assert m.metallic == a.metallic
        assert m.ior == a.ior

    def test_endpoint_r1_is_b(self):
        a, b = uniform_mat("a"), uniform_mat("b", color=(0.9, 0.1, 0.2), rough=0.8)
        m = mix_materials(a, b, 1.0)
        assert m.base_color == b.base_color
        assert m.roughness == b.roughness

    def test_midpoint_roughness(self):
        a = uniform_mat("a", rough=0.2)
        b = uniform_mat("b", rough=0.6)
        assert mix_materials(a, b, 0.5).roughness == pytest.approx(0.4, abs=1e-12)

    def test_set_ratio_list(self):
        assert SET_RATIOS == (0.0, 0.25, 0.5, 0.75, 1.0)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a, b = textured_mat("a", rng), textured_mat("b", rng)
        for r in (0.1, 0.25, 0.7):
            m1 = mix_materials(a, b, r)
            m2 = mix_materials(b, a, 1.0 - r)
            np.testing.assert_allclose(m1.base_color.data, m2.base_color.data, atol=1e-6)
            np.testing.assert_allclose(m1.roughness.data, m2.roughness.data, atol=1e-6)
            assert m1.ior == pytest.approx(m2.ior, abs=1e-6)

    def test_self_mix_identity(self):
        rng = np.random.default_rng(4)
        a = textured_mat("a", rng)
        for r in (0.0, 0.3, 1.0):
            m = mix_materials(a, a, r)
            np.testing.assert_allclose(m.base_color.data, a.base_color.data, atol=1e-6)
            np.testing.assert_allclose(m.normal.data, a.normal.data, atol=1e-6)

    def test_affine_vs_per_pixel_oracle(self):
        rng = np.random.default_rng(5)
        a, b = textured_mat("a", rng), textured_mat("b", rng)
        for r in (0.25, 0.5, 0.75):
            m = mix_materials(a, b, r)
            np.testing.assert_allclose(
                m.base_color.data, mix_oracle(a.base_color.data, b.base_color.data, r),
                atol=1e-6)
            np.testing.assert_allclose(
                m.roughness.data, mix_oracle(a.roughness.data, b.roughness.data, r),
                atol=1e-6)

    def test_kind_mismatch(self):
        rng = np.random.default_rng(6)
        with pytest.raises(MixKindError):
            mix_materials(uniform_mat("a"), textured_mat("b", rng), 0.5)

    def test_mixed_resolution_maps_resample(self):
        rng = np.random.default_rng(7)
        a = textured_mat("a", rng, size=4)
        b = textured_mat("b", rng, size=8)
        m = mix_materials(a, b, 0.5)
        assert (m.base_color.height, m.base_color.width) == (8, 8)

    def test_mix_id_encodes_parents_and_ratio(self):
        a, b = uniform_mat("left"), uniform_mat("right")
        m = mix_materials(a, b, 0.25)
        assert "left" in m.id and "right" in m.id and "0.25" in m.id

    @given(r=st.floats(0, 1), pa=st.floats(0, 1), pb=st.floats(0, 1))
    @settings(max_examples=60, deadline=None)
    def test_affine_property_scalars(self, r, pa, pb):
        a = uniform_mat("a", rough=pa)
        b = uniform_mat("b", rough=pb)
        m = mix_materials(a, b, r)
        assert m.roughness == pytest.approx((1 - r) * pa + r * pb, abs=1e-9)


class TestMixtureRatio:
    def test_range_enforced(self):
        with pytest.raises(ValueError):
            MixtureRatio(1.5)
        with pytest.raises(ValueError):
            MixtureRatio(-0.01)
        assert float(MixtureRatio(0.25)) == 0.25


class TestResampleMap:
    def test_constant_invariance(self):
        m = TextureMap(np.full((2, 2), 0.5))
        out = resample_map(m, 7, 7)
        np.testing.assert_array_equal(out.data, np.full((7, 7), 0.5))

    def test_identity_bitwise(self):
        rng = np.random.default_rng(8)
        m = TextureMap(rng.uniform(0, 1, (5, 9)))
        out = resample_map(m, 9, 5)
        assert out.data.tobytes() == m.data.tobytes()

    def test_hand_evaluated_bilinear(self):
        # oracle: endpoint-aligned linear interpolation of [0, 1] onto 3 samples
        def lerp_oracle(values, n):
            xs = [i * (len(values) - 1) / (n - 1) for i in range(n)]
            out = []
            for x in xs:
                i = int(np.floor(x))
                f = x - i
                j = min(i + 1, len(values) - 1)
                out.append((1 - f) * values[i] + f * values[j])
            return out

        m = TextureMap(np.array([[0.0, 1.0]]))
        out = resample_map(m, 3, 1)
        np.testing.assert_allclose(out.data[0], lerp_oracle([0.0, 1.0], 3), atol=1e-12)
        np.testing.assert_allclose(out.data[0], [0.0, 0.5, 1.0], atol=1e-12)

    def test_output_in_unit_range(self):
        rng = np.random.default_rng(9)
        m = TextureMap(rng.uniform(0, 1, (3, 3, 3)))
        out = resample_map(m, 11, 6)
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0


class TestTextureMapInvariants:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            TextureMap(np.array([[1.5]]))
        with pytest.raises(ValueError):
            TextureMap(np.array([[np.nan]]))

    def test_rejects_bad_shape(self):
        with pytest.raises(MapShapeError):
            TextureMap(np.zeros((2, 2, 4)))

    def test_immutable(self):
        m = TextureMap(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            m.data[0, 0] = 1.0

    def test_textured_material_requires_equal_map_sizes(self):
        rng = np.random.default_rng(10)
        with pytest.raises(MapShapeError):
            MaterialSpec(id="x", kind="textured",
                         base_color=TextureMap(rng.uniform(0, 1, (8, 8, 3))),
                         roughness=TextureMap(rng.uniform(0, 1, (4, 4))))


class TestCombineFamilies:
    def test_deterministic(self):
        rng = np.random.default_rng(11)
        a, b = textured_mat("a", rng, 4), textured_mat("b", rng, 4)
        m1 = combine_material_families(a, b, seed=99)
        m2 = combine_material_families(a, b, seed=99)
        np.testing.assert_array_equal(m1.base_color.data, m2.base_color.data)
        assert m1.ior == m2.ior

    def test_idempotent_on_equal_inputs(self):
        rng = np.random.default_rng(12)
        a = textured_mat("a", rng, 4)
        b = MaterialSpec(id="b", kind="textured", base_color=a.base_color,
                         roughness=a.roughness, metallic=a.metallic,
                         transmission=a.transmission, ior=a.ior, normal=a.normal)
        for seed in range(5):
            m = combine_material_families(a, b, seed=seed)
            np.testing.assert_allclose(m.base_color.data, a.base_color.data, atol=1e-12)
            np.testing.assert_allclose(m.roughness.data
                                       if hasattr(m.roughness, "data") else m.roughness,
                                       a.roughness.data, atol=1e-12)

    def test_choice_frequencies_one_third(self):
        # Monte Carlo against the declared uniform three-way choice
        a = MaterialSpec(id="a", kind="textured",
                         base_color=TextureMap(np.full((2, 2, 3), 0.0)),
                         roughness=TextureMap(np.full((2, 2), 0.0)))
        b = MaterialSpec(id="b", kind="textured",
                         base_color=TextureMap(np.full((2, 2, 3), 1.0)),
                         roughness=TextureMap(np.full((2, 2), 1.0)))
        counts = {0.0: 0, 1.0: 0, 0.5: 0}
        n = 1000
        for seed in range(n):
            m = combine_material_families(a, b, seed=seed)
            counts[float(m.roughness.data[0, 0])] += 1
        for c in counts.values():
            assert abs(c / n - 1 / 3) < 0.05

    def test_kind_mismatch(self):
        with pytest.raises(MixKindError):
            combine_material_families(uniform_mat("a"), uniform_mat("b"), 0)


class TestSampleRandomMaterial:
    def test_deterministic(self):
        m1 = sample_random_material(17)
        m2 = sample_random_material(17)
        assert m1 == m2

    def test_uniform_law_of_large_numbers(self):
        vals = [sample_random_material(seed).roughness for seed in range(10_000)]
        assert abs(np.mean(vals) - 0.5) < 0.02

    def test_ranges(self):
        for seed in range(50):
            m = sample_random_material(seed)
            assert 0 <= m.roughness <= 1 and 0 <= m.metallic <= 1
            assert 0 <= m.transmission <= 1 and 1.0 <= m.ior <= 2.5
            assert all(0 <= c <= 1 for c in m.base_color)

    def test_single_entry_library_no_combine(self):
        rng = np.random.default_rng(13)
        only = textured_mat("only", rng, 4)
        got = sample_random_material(5, kind="textured", library=[only],
                                     combine_probability=0.0)
        assert got is only

    def test_empty_library(self):
        with pytest.raises(EmptyLibraryError):
            sample_random_material(1, kind="textured", library=[])


class TestFileLoading:
    def test_png_roundtrip_8bit_linear(self, tmp_path):
        rng = np.random.default_rng(14)
        data = (rng.uniform(0, 1, (6, 5)) * 255).astype(np.uint8)
        p = tmp_path / "rough.png"
        write_png(p, data)
        m = load_texture_map(p)
        np.testing.assert_allclose(m.data, data / 255.0, atol=1e-7)

    def test_png_16bit(self, tmp_path):
        data = np.linspace(0, 65535, 12, dtype=np.uint16).reshape(3, 4)
        p = tmp_path / "metal.png"
        write_png(p, data)
        m = load_texture_map(p)
        np.testing.assert_allclose(m.data, data / 65535.0, atol=1e-7)

    def test_albedo_srgb_decode(self, tmp_path):
        # a mid-gray sRGB byte decodes below its encoded value in linear light
        data = np.full((2, 2, 3), 128, dtype=np.uint8)
        p = tmp_path / "albedo.png"
        write_png(p, data)
        m = load_texture_map(p, srgb=True)
        assert m.data[0, 0, 0] == pytest.approx(0.2158, abs=1e-3)

    def test_material_directory_loader(self, tmp_path):
        d = tmp_path / "brick"
        d.mkdir()
        write_png(d / "albedo.png", np.full((4, 4, 3), 200, dtype=np.uint8))
        write_png(d / "roughness.png", np.full((2, 2), 64, dtype=np.uint8))
        mat = load_textured_material(d)
        assert mat.kind == "textured"
        assert (mat.base_color.height, mat.base_color.width) == (4, 4)
        # optional map resampled to albedo size, absent ones take defaults
        assert (mat.roughness.height, mat.roughness.width) == (4, 4)
        assert mat.metallic == 0.0 and mat.transmission == 0.0 and mat.normal is None

    def test_missing_albedo_rejected(self, tmp_path):
        d = tmp_path / "empty"
        d.mkdir()
        write_png(d / "roughness.png", np.zeros((2, 2), dtype=np.uint8))
        with pytest.raises(MapShapeError):
            load_textured_material(d)

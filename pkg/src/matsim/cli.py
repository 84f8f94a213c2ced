"""Command-line entry points.

Subcommands: gen, render-one, describe, loss, eval, augment-preview,
validate. Every subcommand is deterministic given --seed and exits nonzero
on error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dataset_io, evaluation, similarity
from .environment import EnvironmentLibrary
from .errors import MatsimError
from .geometry import export_obj
from .image_io import read_png, read_png_float, write_png
from .materials import TEXTURED, UNIFORM, load_textured_material
from .scenes import GenConfig, generate_scene_set
from .tracer import RenderSettings, render_set


def _add_render_args(p: argparse.ArgumentParser, width=128, height=128, spp=32):
    p.add_argument("--width", type=int, default=width)
    p.add_argument("--height", type=int, default=height)
    p.add_argument("--spp", type=int, default=spp, help="samples per pixel")
    p.add_argument("--bounces", type=int, default=6)
    p.add_argument("--env-importance", action="store_true",
                   help="importance-sample the environment (reference mode is off)")


def _settings_from_args(args, seed) -> RenderSettings:
    return RenderSettings(width=args.width, height=args.height,
                          samples_per_pixel=args.spp, max_bounces=args.bounces,
                          seed=seed, env_importance=args.env_importance)


def _config_from_args(args) -> GenConfig:
    library = None
    kind = UNIFORM
    if getattr(args, "texture_lib", None):
        root = Path(args.texture_lib)
        library = [load_textured_material(d) for d in sorted(root.iterdir()) if d.is_dir()]
        kind = TEXTURED
    env_lib = EnvironmentLibrary(getattr(args, "hdri_dir", None),
                                 bake_height=getattr(args, "env_bake", 128))
    return GenConfig(
        vessel_probability=args.vessel_prob,
        material_kind=kind,
        material_library=library,
        env_library=env_lib,
        mesh_detail=args.mesh_detail,
        vessel_grid=(args.vessel_grid, args.vessel_grid),
        # probing at the render resolution makes the probe exact: the final
        # mask is the same deterministic ray set
        mask_probe_res=max(args.width, args.height),
    )


def _generate_one(seed: int, args, config: GenConfig) -> Path:
    scene_set = generate_scene_set(seed, config)
    settings = _settings_from_args(args, seed)
    result = render_set(scene_set, settings, env_library=config.env_library)
    out = dataset_io.write_set(scene_set, result, args.out, settings, config,
                               keep_linear=args.keep_linear, stats=args.stats)
    if args.dump_geometry:
        for k, scene in enumerate(scene_set.scenes):
            export_obj(scene.main_object, out / f"scene_{k}" / "main.obj", name="main")
            if scene.vessel is not None:
                export_obj(scene.vessel.mesh, out / f"scene_{k}" / "vessel.obj", name="vessel")
    return out


def cmd_gen(args) -> int:
    config = _config_from_args(args)
    for i in range(args.count):
        seed = args.seed + i
        out = _generate_one(seed, args, config)
        print(f"wrote {out}", file=sys.stderr)
    return 0


def cmd_render_one(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    dataset_io.check_schema_version(manifest)
    config = GenConfig.from_meta(manifest["gen_config"])
    settings = RenderSettings.from_meta(manifest["render_settings"])
    if args.spp is not None:
        settings = RenderSettings(width=settings.width, height=settings.height,
                                  samples_per_pixel=args.spp,
                                  max_bounces=settings.max_bounces, seed=settings.seed,
                                  env_importance=settings.env_importance)
    scene_set = generate_scene_set(manifest["seed"], config)
    result = render_set(scene_set, settings, env_library=config.env_library)
    out = dataset_io.write_set(scene_set, result, args.out, settings, config, stats=True)
    print(f"wrote {out}", file=sys.stderr)
    return 0


def _dataset_descriptors(index, mode: str, crop_pad: float = 0.0):
    for entry in index.sets:
        for k in range(6):
            mask = read_png(entry.path / f"scene_{k}" / "mask.png") > 0
            for ratio in (0.0, 0.25, 0.5, 0.75, 1.0):
                ref = dataset_io.image_ref(entry.set_id, k, ratio)
                img = read_png_float(entry.path / f"scene_{k}" / dataset_io.ratio_filename(ratio),
                                     srgb=True)
                pimg, pmask = evaluation.apply_attention(img, mask, mode, crop_pad=crop_pad)
                yield evaluation.baseline_descriptor(pimg, pmask > 0, image_ref=ref)


def _benchmark_descriptors(index_path: Path, index, mode: str, crop_pad: float = 0.0):
    for entry in index.entries:
        img, mask = evaluation.load_entry_arrays(index_path, entry)
        pimg, pmask = evaluation.apply_attention(img, mask, mode, crop_pad=crop_pad)
        yield evaluation.baseline_descriptor(pimg, pmask > 0, image_ref=entry.image)


def cmd_describe(args) -> int:
    if (args.dataset is None) == (args.benchmark is None):
        print("describe: pass exactly one of --dataset / --benchmark", file=sys.stderr)
        return 2
    if args.dataset:
        index = dataset_io.parse_dataset(args.dataset)
        for name, msg in index.errors:
            print(f"skipping invalid set {name}: {msg}", file=sys.stderr)
        descs = list(_dataset_descriptors(index, args.mode, args.crop_pad))
    else:
        bindex = evaluation.load_benchmark_csv(args.benchmark)
        descs = list(_benchmark_descriptors(Path(args.benchmark), bindex, args.mode,
                                            args.crop_pad))
    out = Path(args.out)
    if args.binary or out.name.endswith(".bin"):
        dataset_io.write_descriptors_bin(out, descs)
    else:
        dataset_io.write_descriptors_jsonl(out, descs)
    print(f"wrote {len(descs)} descriptors to {out}", file=sys.stderr)
    return 0


def cmd_loss(args) -> int:
    index = dataset_io.parse_dataset(args.dataset)
    for name, msg in index.errors:
        print(f"skipping invalid set {name}: {msg}", file=sys.stderr)
    descriptors = dataset_io.read_descriptors(args.descriptors)
    labels = index.labels()
    config = similarity.LossConfig(temperature=args.temperature,
                                   enumeration=args.enumeration)
    lines = []
    fixture = []
    means = []
    for b in range(args.batches):
        batch_seed = args.seed + b
        refs = similarity.sample_batch(index, batch_seed)
        fixture.append({"batch_seed": batch_seed, "refs": refs})
        missing = [r for r in refs if r not in descriptors]
        if missing:
            print(f"loss: descriptors missing for {missing[:3]}...", file=sys.stderr)
            return 1
        descs = [descriptors[r] for r in refs]
        labs = [labels[r] for r in refs]
        mean, records = similarity.batch_loss(descs, labs, config)
        means.append(mean)
        lines.append(json.dumps({
            "batch_seed": batch_seed,
            "mean_loss": mean,
            "gated_fraction": similarity.gated_fraction(records),
        }))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.dump_batches:
        Path(args.dump_batches).write_text(
            json.dumps({"batches": fixture}, indent=2) + "\n", encoding="utf-8")
    print(f"mean over {args.batches} batches: {float(np.mean(means)):.6f}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    index = evaluation.load_benchmark_csv(args.benchmark)
    if args.descriptors:
        descriptors = dataset_io.read_descriptors(args.descriptors)
        source = str(args.descriptors)
    else:
        descs = list(_benchmark_descriptors(Path(args.benchmark), index, args.mode,
                                            args.crop_pad))
        descriptors = {d.image_ref: d for d in descs}
        source = "baseline"
    sub = evaluation.top1_subclass(index, descriptors)
    allr = evaluation.top1_all(index, descriptors)
    report = {
        "preprocessing": args.mode,
        "descriptor_source": source,
        "top1_subclass": sub.to_meta(),
        "top1_all": allr.to_meta(),
    }
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.plot:
        _plot_per_class(sub, allr, args.plot)
    print(f"top1_subclass={sub.mean:.4f} top1_all={allr.mean:.4f}", file=sys.stderr)
    return 0


def _plot_per_class(sub, allr, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    keys = list(sub.per_class)
    x = np.arange(len(keys))
    fig, ax = plt.subplots(figsize=(max(6, len(keys) * 0.3), 4))
    ax.bar(x - 0.2, [sub.per_class[k] for k in keys], width=0.4, label="subclass")
    ax.bar(x + 0.2, [allr.per_class[k] for k in keys], width=0.4, label="all")
    ax.set_xticks(x)
    ax.set_xticklabels(keys, rotation=90, fontsize=6)
    ax.set_ylabel("top-1 accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_augment_preview(args) -> int:
    img = read_png_float(args.image, srgb=False)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    tiles = [img]
    for i in range(args.count):
        tiles.append(evaluation.augment(img, seed=args.seed + i))
    cols = min(4, len(tiles))
    rows = (len(tiles) + cols - 1) // cols
    h, w, _ = img.shape
    grid = np.zeros((rows * h, cols * w, 3))
    for i, tile in enumerate(tiles):
        r, c = divmod(i, cols)
        grid[r * h:(r + 1) * h, c * w:(c + 1) * w] = tile
    write_png(args.out, np.clip(np.rint(grid * 255), 0, 255).astype(np.uint8))
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    index = dataset_io.parse_dataset(args.dataset)
    for entry in index.sets:
        print(f"ok {entry.path.name} vessel={entry.vessel}")
    for name, msg in index.errors:
        print(f"INVALID {name}: {msg}")
    print(f"{len(index.sets)} valid, {len(index.errors)} invalid", file=sys.stderr)
    return 1 if index.errors else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matsim",
        description="Material-similarity set forge: generate, describe, score, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate and render sets")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vessel-prob", type=float, default=0.5)
    p.add_argument("--mesh-detail", type=int, default=24)
    p.add_argument("--vessel-grid", type=int, default=48)
    p.add_argument("--env-bake", type=int, default=128)
    p.add_argument("--hdri-dir", default=None, help="directory of .hdr panoramas")
    p.add_argument("--texture-lib", default=None,
                   help="directory of per-material map folders (switches to textured sampling)")
    p.add_argument("--keep-linear", action="store_true", help="also write .hdr linear images")
    p.add_argument("--stats", action="store_true",
                   help="write per-image stats sidecars (includes wall time, so trees "
                        "stop being byte-reproducible)")
    p.add_argument("--dump-geometry", action="store_true", help="export scene meshes as OBJ")
    _add_render_args(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("render-one", help="re-render a set from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--spp", type=int, default=None, help="override samples per pixel")
    p.set_defaults(func=cmd_render_one)

    p = sub.add_parser("describe", help="baseline descriptors for a dataset or benchmark")
    p.add_argument("--dataset", default=None)
    p.add_argument("--benchmark", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=evaluation.ATTENTION_MODES, default="none")
    p.add_argument("--crop-pad", type=float, default=0.0,
                   help="pad the crop bounding box by this fraction of its size")
    p.add_argument("--binary", action="store_true", help="write the packed .desc.bin format")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("loss", help="batch-loss report over seeded batches")
    p.add_argument("--descriptors", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--batches", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float, default=0.2)
    p.add_argument("--enumeration", choices=("all_triples", "chunks"), default="all_triples")
    p.add_argument("--out", default=None, help="write the JSONL report here instead of stdout")
    p.add_argument("--dump-batches", default=None,
                   help="write the sampled batch refs as a fixture JSON")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("eval", help="one-shot retrieval metrics on a benchmark")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--descriptors", default=None,
                   help="descriptor file; omitted -> baseline descriptors under --mode")
    p.add_argument("--mode", choices=evaluation.ATTENTION_MODES, default="none")
    p.add_argument("--crop-pad", type=float, default=0.0,
                   help="pad the crop bounding box by this fraction of its size")
    p.add_argument("--out", default=None)
    p.add_argument("--plot", default=None, help="write a per-class accuracy plot PNG")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment-preview", help="grid of augmented copies of an image")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=7)
    p.set_defaults(func=cmd_augment_preview)

    p = sub.add_parser("validate", help="validate a dataset tree")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MatsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Generating a small dataset tree on disk.

Drives the same machinery as the `matsim gen` command: seeded set
generation, rendering, atomic writes, then validation and an index walk.
"""

from matsim import GenConfig, RenderSettings, generate_scene_set, render_set
from matsim.dataset_io import parse_dataset, write_set
from matsim.environment import EnvironmentLibrary

from _common import OUT

root = OUT / "mini_dataset"
config = GenConfig(env_library=EnvironmentLibrary(bake_height=64), mesh_detail=16,
                   vessel_grid=(24, 24))
settings_proto = dict(width=64, height=64, samples_per_pixel=12)

for seed in (7, 8):
    scene_set = generate_scene_set(seed, config)
    settings = RenderSettings(seed=seed, **settings_proto)
    result = render_set(scene_set, settings, env_library=config.env_library)
    path = write_set(scene_set, result, root, settings, config)
    print(f"wrote {path.name} (vessel={scene_set.vessel})")

index = parse_dataset(root)
print(f"\nindex: {len(index.sets)} valid sets, {len(index.errors)} invalid")
print(f"vessel sets: {[s.set_id for s in index.vessel_sets]}")
print(f"plain sets : {[s.set_id for s in index.plain_sets]}")
print("first few image refs:")
for ref in index.image_refs[:5]:
    print(f"  {ref}")

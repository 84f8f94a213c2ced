"""A full generated scene, rendered.

Builds one set (six scenes, five ratios each) at preview resolution, renders
the first fixed-background scene across ratios, and saves the images plus
the main-object mask.
"""

import numpy as np

from matsim import GenConfig, RenderSettings, generate_scene_set, mix_materials, render
from matsim.environment import EnvironmentLibrary
from matsim.image_io import write_png
from matsim.tracer import image_seed

from _common import OUT

config = GenConfig(env_library=EnvironmentLibrary(bake_height=96), vessel_probability=1.0)
scene_set = generate_scene_set(12, config)
scene = scene_set.scenes[0]
print(f"set {scene_set.set_id}: vessel={scene_set.vessel}, "
      f"materials {scene_set.material_a.id} / {scene_set.material_b.id}")
print(f"scene 0 policy={scene.background_policy}, camera fov {scene.camera.vfov_deg:.1f} deg, "
      f"{len(scene.background_objects)} background objects")

tiles = []
for j, r in enumerate(scene_set.ratios):
    blended = mix_materials(scene_set.material_a, scene_set.material_b, r)
    out = render(scene, blended,
                 RenderSettings(width=128, height=128, samples_per_pixel=48,
                                seed=image_seed(12, 0, j)),
                 env_library=config.env_library)
    tiles.append(out.image_srgb)
    if j == 0:
        write_png(OUT / "scene_mask.png", out.mask)
        print(f"mask covers {(out.mask > 0).mean() * 100:.1f}% of the frame")
write_png(OUT / "scene_ratios.png", np.concatenate(tiles, axis=1))
print(f"wrote {OUT / 'scene_ratios.png'} and {OUT / 'scene_mask.png'}")

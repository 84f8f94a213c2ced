"""Materials and gradual blending.

Builds two materials, walks the five blend ratios, and renders a small strip
of spheres so the transition is visible. Everything lands in demos/out/.
"""

import numpy as np

from matsim import (
    MaterialSpec,
    RenderSettings,
    SET_RATIOS,
    mix_materials,
    render,
    sample_random_material,
    uniform_environment,
)
from matsim.image_io import write_png

from _common import OUT, sphere_scene

# two hand-picked endpoints: glossy red plastic and a rough blue surface
red = MaterialSpec(id="red-plastic", kind="uniform", base_color=(0.8, 0.05, 0.05),
                   roughness=0.25, metallic=0.0)
blue = MaterialSpec(id="blue-matte", kind="uniform", base_color=(0.1, 0.2, 0.85),
                    roughness=0.9, metallic=0.0)

print("blend walk:")
for r in SET_RATIOS:
    m = mix_materials(red, blue, r)
    print(f"  r={r:<5} base_color=({m.base_color[0]:.3f}, {m.base_color[1]:.3f}, "
          f"{m.base_color[2]:.3f}) roughness={m.roughness:.3f}  id={m.id}")

scene = sphere_scene()
env = uniform_environment(1.0)
tiles = []
for j, r in enumerate(SET_RATIOS):
    out = render(scene, mix_materials(red, blue, r),
                 RenderSettings(width=96, height=96, samples_per_pixel=32, seed=j),
                 env_override=env)
    tiles.append(out.image_srgb)
strip = np.concatenate(tiles, axis=1)
write_png(OUT / "mix_strip.png", strip)
print(f"wrote {OUT / 'mix_strip.png'}")

# random materials are seeded draws: same seed, same material
a = sample_random_material(42)
b = sample_random_material(42)
print(f"seeded sampling is pure: {a == b}")

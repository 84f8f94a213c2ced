"""Shared bits for the demo scripts."""

from pathlib import Path

import numpy as np

from matsim import MaterialSpec
from matsim.geometry import uv_sphere
from matsim.scenes import CameraSpec, EnvBinding, SceneSpec, UVTransform

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)


def sphere_scene(camera=None, radius=0.1):
    """Single sphere under an environment, no ground: the simplest stage."""
    cam = camera or CameraSpec((0.5, 0.0, 0.1), (0.0, 0.0, 0.0), 40.0)
    binding = EnvBinding("sky:1", 0.0, 1.0)
    identity = UVTransform.identity()
    white = MaterialSpec(id="white", kind="uniform", base_color=(1, 1, 1), roughness=1.0)
    return SceneSpec(
        index=0, background_policy="fixed", main_object=uv_sphere(radius, 48, 32),
        main_transform=np.eye(4), main_material_pair=(white, white),
        camera=cam, environment=binding, env_per_image=(binding,) * 5,
        uv_transform=identity, uv_per_image=(identity,) * 5,
    )

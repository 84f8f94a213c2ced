import numpy as np
import pytest

from matsim.environment import EnvironmentLibrary, uniform_environment
from matsim.materials import MaterialSpec
from matsim.scenes import CameraSpec, EnvBinding, GenConfig, SceneSpec, UVTransform, generate_scene_set
from matsim.dataset_io import write_set
from matsim.geometry import uv_sphere
from matsim.tracer import RenderSettings, render_set

DESK_SETTINGS = dict(width=48, height=48, samples_per_pixel=4, max_bounces=5)


def desk_gen_config() -> GenConfig:
    return GenConfig(env_library=EnvironmentLibrary(bake_height=64), mesh_detail=16,
                     vessel_grid=(24, 24), mask_probe_res=32)


@pytest.fixture(scope="session")
def desk_config():
    return desk_gen_config()


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, desk_config):
    """Three desk-scale rendered sets (seeds 7/8/9 give both vessel kinds)."""
    root = tmp_path_factory.mktemp("dataset")
    for seed in (7, 8, 9):
        scene_set = generate_scene_set(seed, desk_config)
        settings = RenderSettings(seed=seed, **DESK_SETTINGS)
        result = render_set(scene_set, settings, env_library=desk_config.env_library)
        write_set(scene_set, result, root, settings, desk_config)
    return root


def bare_sphere_scene(material_pair=None, camera=None, radius=0.1, detail=(48, 32)):
    """Sphere-and-environment scene for renderer oracles (no ground plane)."""
    sphere = uv_sphere(radius, *detail)
    cam = camera or CameraSpec((0.5, 0.0, 0.0), (0.0, 0.0, 0.0), 40.0)
    identity = UVTransform.identity()
    binding = EnvBinding("override", 0.0, 1.0)
    white = MaterialSpec(id="white", kind="uniform", base_color=(1, 1, 1), roughness=1.0)
    pair = material_pair or (white, white)
    return SceneSpec(
        index=0, background_policy="fixed", main_object=sphere,
        main_transform=np.eye(4), main_material_pair=pair,
        camera=cam, environment=binding, env_per_image=(binding,) * 5,
        uv_transform=identity, uv_per_image=(identity,) * 5,
    )

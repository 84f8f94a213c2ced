"""Material-similarity set forge.

Procedurally generates image sets of blended materials on procedural objects
(and inside transparent vessels) under varied panoramic lighting via a
built-in seeded CPU path tracer, and provides the contrastive similarity
loss plus a one-shot retrieval evaluation harness over descriptor files.
"""

from .environment import EnvironmentLibrary, EnvironmentSpec, sample_sky, uniform_environment
from .errors import MatsimError
from .evaluation import (
    ATTENTION_MODES,
    AugmentationConfig,
    BenchmarkIndex,
    apply_attention,
    augment,
    baseline_descriptor,
    load_benchmark_csv,
    top1_all,
    top1_subclass,
)
from .geometry import Mesh, export_obj, generate_primitive_object
from .image_io import tonemap
from .materials import (
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
from .scenes import GenConfig, SceneSet, SceneSpec, UVTransform, generate_scene_set, randomize_uv
from .similarity import (
    Descriptor,
    ImageLabel,
    LossConfig,
    TripletRecord,
    assign_roles,
    batch_loss,
    cosine_similarity,
    ground_truth_similarity,
    match_probability,
    sample_batch,
    triplet_loss,
)
from .tracer import RenderOutput, RenderSettings, compute_mask, image_seed, render, render_set
from .vessels import VesselProfile, generate_vessel

__version__ = "0.1.0"

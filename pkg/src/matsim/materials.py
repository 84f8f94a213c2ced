"""Material representations and the weighted-mixing operations.

A material is either *uniform* (one scalar per property over the whole
surface, plus an RGB base color) or *textured* (per-property 2D maps wrapped
onto the object at shading time). Gradual transitions between two materials
come from pixel-wise weighted addition of their parameters and maps.

Property set: base_color/albedo, roughness, metallic, transmission, ior,
and an optional normal map. Normal maps are stored encoded in [0,1]
(``n = 2 m - 1`` at decode time); mixes blend the encoded values and shading
renormalizes after decode. All values live in linear light; sRGB decode for
albedo maps happens at file-load time only.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np


from .errors import EmptyLibraryError, MapShapeError, MixKindError
from .image_io import read_hdr, read_png_float

UNIFORM = "uniform"
TEXTURED = "textured"

#: scalar fallbacks for maps the loader may not find (albedo is mandatory)
PROPERTY_DEFAULTS = {"roughness": 0.5, "metallic": 0.0, "transmission": 0.0}
FLAT_NORMAL = (0.5, 0.5, 1.0)
IOR_RANGE = (1.0, 2.5)

_SCALAR_PROPS = ("roughness", "metallic", "transmission")


@dataclass(frozen=True)
class TextureMap:
    """A 2D property map with float samples in [0, 1].

    ``data`` is (height, width) for single-channel maps or (height, width, 3)
    for color / encoded-normal maps. Immutable after construction.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] == 3:
            pass
        else:
            raise MapShapeError(f"texture map must be (h,w) or (h,w,3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise MapShapeError("texture map needs width, height >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("texture map samples must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("texture map samples must lie in [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]

    @staticmethod
    def constant(value, height: int = 1, width: int = 1) -> "TextureMap":
        """Build a constant map from a scalar or an RGB triple."""
        value = np.asarray(value, dtype=np.float64)
        if value.ndim == 0:
            return TextureMap(np.full((height, width), float(value)))
        return TextureMap(np.broadcast_to(value, (height, width, 3)).copy())


@dataclass(frozen=True)
class MixtureRatio:
    """Fraction of material B in a two-material blend."""

    r: float

    def __post_init__(self):
        if not (0.0 <= self.r <= 1.0):
            raise ValueError(f"mixture ratio must lie in [0, 1], got {self.r}")

    def __float__(self) -> float:
        return float(self.r)


#: the five blend fractions every generated set walks through
SET_RATIOS = (0.0, 0.25, 0.5, 0.75, 1.0)

Scalar = float
PropertyValue = Union[Scalar, TextureMap]


@dataclass(frozen=True)
class MaterialSpec:
    """Surface appearance parameters, uniform or textured.

    Uniform kind: ``base_color`` is an RGB triple and every property is a
    scalar. Textured kind: ``base_color`` is an albedo map; the other
    properties may be maps or scalars, and all present maps must share one
    resolution. ``id`` must be unique within a dataset.
    """

    id: str
    kind: str
    base_color: Union[tuple, TextureMap]
    roughness: PropertyValue = PROPERTY_DEFAULTS["roughness"]
    metallic: PropertyValue = PROPERTY_DEFAULTS["metallic"]
    transmission: PropertyValue = PROPERTY_DEFAULTS["transmission"]
    ior: float = 1.45
    normal: Optional[TextureMap] = None

    def __post_init__(self):
        if self.kind not in (UNIFORM, TEXTURED):
            raise ValueError(f"unknown material kind: {self.kind!r}")
        if not (IOR_RANGE[0] <= self.ior <= IOR_RANGE[1]):
            raise ValueError(f"ior {self.ior} outside {IOR_RANGE}")
        if self.kind == UNIFORM:
            color = tuple(float(c) for c in self.base_color)
            if len(color) != 3 or any(not (0.0 <= c <= 1.0) for c in color):
                raise ValueError(f"uniform base_color must be RGB in [0,1]^3, got {self.base_color}")
            object.__setattr__(self, "base_color", color)
            for name in _SCALAR_PROPS:
                v = getattr(self, name)
                if isinstance(v, TextureMap):
                    raise MixKindError(f"uniform material cannot carry a {name} map")
                if not (0.0 <= float(v) <= 1.0):
                    raise ValueError(f"{name}={v} outside [0, 1]")
                object.__setattr__(self, name, float(v))
            if self.normal is not None:
                raise MixKindError("uniform material cannot carry a normal map")
        else:
            if not isinstance(self.base_color, TextureMap) or self.base_color.channels != 3:
                raise MapShapeError("textured material needs a 3-channel albedo map")
            self._check_map_shapes()

    def _check_map_shapes(self):
        shape = None
        for m in self.maps().values():
            hw = (m.height, m.width)
            if shape is None:
                shape = hw
            elif hw != shape:
                raise MapShapeError(f"maps disagree on resolution: {shape} vs {hw}")

    def maps(self) -> dict:
        """All present TextureMaps keyed by property name."""
        out = {}
        for name in ("base_color", "roughness", "metallic", "transmission", "normal"):
            v = getattr(self, name)
            if isinstance(v, TextureMap):
                out[name] = v
        return out

    def property_names(self) -> tuple:
        return ("base_color", "roughness", "metallic", "transmission", "ior", "normal")


def resample_map(m: TextureMap, width: int, height: int) -> TextureMap:
    """Bilinearly resample a map to (width, height).

    Endpoint-aligned: source and target corner samples coincide, so constant
    maps stay constant and resampling to the same size is the identity.
    """
    if width < 1 or height < 1:
        raise ValueError("target resolution must be >= 1 in both axes")
    if width == m.width and height == m.height:
        return m
    src = m.data
    ys = _grid_coords(m.height, height)
    xs = _grid_coords(m.width, width)
    y0 = np.clip(np.floor(ys).astype(int), 0, m.height - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, m.width - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    y1 = np.minimum(y0 + 1, m.height - 1)
    x1 = np.minimum(x0 + 1, m.width - 1)
    if src.ndim == 3:
        fy = fy[:, :, None]
        fx = fx[:, :, None]
    c00 = src[y0[:, None], x0[None, :]]
    c01 = src[y0[:, None], x1[None, :]]
    c10 = src[y1[:, None], x0[None, :]]
    c11 = src[y1[:, None], x1[None, :]]
    # nested lerp keeps constants and on-grid samples bit-exact
    top = c00 + fx * (c01 - c00)
    bot = c10 + fx * (c11 - c10)
    out = top + fy * (bot - top)
    return TextureMap(np.clip(out, 0.0, 1.0))


def _grid_coords(src: int, dst: int) -> np.ndarray:
    if dst == 1:
        return np.array([(src - 1) / 2.0])
    return np.arange(dst, dtype=np.float64) * (src - 1) / (dst - 1)


def _as_ratio(r) -> float:
    if isinstance(r, MixtureRatio):
        return r.r
    r = float(r)
    MixtureRatio(r)  # range check
    return r


def _common_map_shape(a: MaterialSpec, b: MaterialSpec) -> tuple:
    hs, ws = [], []
    for mat in (a, b):
        for m in mat.maps().values():
            hs.append(m.height)
            ws.append(m.width)
    return (max(hs), max(ws)) if hs else (1, 1)


def _property_as_map(mat: MaterialSpec, name: str, height: int, width: int) -> Optional[TextureMap]:
    v = getattr(mat, name)
    if isinstance(v, TextureMap):
        return resample_map(v, width, height)
    if name == "normal":
        return None
    if name == "base_color":
        return TextureMap.constant(mat.base_color, height, width)
    return TextureMap.constant(float(v), height, width)


def _lerp_maps(ma: Optional[TextureMap], mb: Optional[TextureMap], r: float,
               default, height: int, width: int) -> Optional[TextureMap]:
    if ma is None and mb is None:
        return None
    if ma is None:
        ma = TextureMap.constant(default, height, width)
    if mb is None:
        mb = TextureMap.constant(default, height, width)
    if ma.data.shape != mb.data.shape:
        raise MapShapeError(f"resampled maps still disagree: {ma.data.shape} vs {mb.data.shape}")
    return TextureMap((1.0 - r) * ma.data + r * mb.data)


def mix_materials(a: MaterialSpec, b: MaterialSpec, r) -> MaterialSpec:
    """Blend two materials: every parameter and map sample gets
    ``(1 - r) * a + r * b``.

    Both inputs must share a kind; textured maps are first resampled to a
    common resolution. Normal maps blend in encoded space (shading
    renormalizes after decode). The result id records both parents and r.
    """
    if a.kind != b.kind:
        raise MixKindError(f"cannot mix kinds {a.kind!r} and {b.kind!r}")
    rv = _as_ratio(r)
    mix_id = f"mix({a.id},{b.id},r={rv:g})"
    if a.kind == UNIFORM:
        ca, cb = np.asarray(a.base_color), np.asarray(b.base_color)
        return MaterialSpec(
            id=mix_id,
            kind=UNIFORM,
            base_color=tuple((1.0 - rv) * ca + rv * cb),
            roughness=(1.0 - rv) * a.roughness + rv * b.roughness,
            metallic=(1.0 - rv) * a.metallic + rv * b.metallic,
            transmission=(1.0 - rv) * a.transmission + rv * b.transmission,
            ior=(1.0 - rv) * a.ior + rv * b.ior,
        )
    h, w = _common_map_shape(a, b)
    blended = {}
    for name in ("base_color", "roughness", "metallic", "transmission"):
        default = PROPERTY_DEFAULTS.get(name)
        blended[name] = _lerp_maps(
            _property_as_map(a, name, h, w), _property_as_map(b, name, h, w), rv, default, h, w
        )
    normal = _lerp_maps(
        a.normal and resample_map(a.normal, w, h),
        b.normal and resample_map(b.normal, w, h),
        rv, FLAT_NORMAL, h, w,
    )
    return MaterialSpec(
        id=mix_id,
        kind=TEXTURED,
        base_color=blended["base_color"],
        roughness=blended["roughness"],
        metallic=blended["metallic"],
        transmission=blended["transmission"],
        ior=(1.0 - rv) * a.ior + rv * b.ior,
        normal=normal,
    )


_COMBINE_PROPS = ("base_color", "roughness", "metallic", "transmission", "normal", "ior")


def combine_material_families(a: MaterialSpec, b: MaterialSpec, seed: int) -> MaterialSpec:
    """Shuffle two textured materials into a new one.

    Per property the output is a's value, b's value, or their 0.5-average,
    each with probability 1/3, drawn deterministically from ``seed``.
    """
    if a.kind != TEXTURED or b.kind != TEXTURED:
        raise MixKindError("combine_material_families needs two textured materials")
    rng = np.random.default_rng(seed)
    choices = rng.integers(0, 3, size=len(_COMBINE_PROPS))
    half = mix_materials(a, b, 0.5)
    picked = {}
    for name, c in zip(_COMBINE_PROPS, choices):
        src = (a, b, half)[c]
        picked[name] = getattr(src, name)
    # keep the map-resolution invariant: promote picked maps to one shape
    hs = [m.height for m in picked.values() if isinstance(m, TextureMap)]
    ws = [m.width for m in picked.values() if isinstance(m, TextureMap)]
    h, w = max(hs), max(ws)
    for name in ("base_color", "roughness", "metallic", "transmission", "normal"):
        v = picked[name]
        if isinstance(v, TextureMap):
            picked[name] = resample_map(v, w, h)
    return MaterialSpec(id=f"combine({a.id},{b.id},s={seed})", kind=TEXTURED, **picked)


def sample_random_material(
    seed: int,
    kind: str = UNIFORM,
    library: Optional[Sequence[MaterialSpec]] = None,
    combine_probability: float = 0.5,
) -> MaterialSpec:
    """Draw a random material, deterministically per seed.

    Uniform kind: every scalar is uniform over its declared range. Textured
    kind: uniform pick from ``library``, optionally crossed with a second
    pick via :func:`combine_material_families`.
    """
    rng = np.random.default_rng(seed)
    if kind == UNIFORM:
        color = rng.uniform(0.0, 1.0, size=3)
        return MaterialSpec(
            id=f"uniform:{seed}",
            kind=UNIFORM,
            base_color=tuple(color),
            roughness=float(rng.uniform(0.0, 1.0)),
            metallic=float(rng.uniform(0.0, 1.0)),
            transmission=float(rng.uniform(0.0, 1.0)),
            ior=float(rng.uniform(*IOR_RANGE)),
        )
    if kind != TEXTURED:
        raise ValueError(f"unknown material kind: {kind!r}")
    if not library:
        raise EmptyLibraryError("textured sampling needs a nonempty material library")
    first = library[int(rng.integers(len(library)))]
    if combine_probability > 0 and len(library) > 1 and rng.uniform() < combine_probability:
        second = library[int(rng.integers(len(library)))]
        return combine_material_families(first, second, seed=int(rng.integers(2**31)))
    return first


_MAP_FILE_STEMS = {
    "base_color": ("albedo", "base_color", "basecolor", "color", "diffuse"),
    "roughness": ("roughness", "rough"),
    "metallic": ("metallic", "metalness", "metal"),
    "transmission": ("transmission", "opacity_inv"),
    "normal": ("normal", "normal_gl", "nor"),
}


def load_texture_map(path: str | Path, srgb: bool = False) -> TextureMap:
    """Load one map from an 8/16-bit PNG or a float .hdr file.

    ``srgb=True`` decodes the transfer curve (use it for albedo); all other
    maps are read as linear data. HDR input is clipped to [0, 1]: radiance
    maps belong to environments, not surface properties.
    """
    path = Path(path)
    if path.suffix.lower() == ".hdr":
        data = np.clip(read_hdr(path), 0.0, 1.0).astype(np.float64)
    else:
        data = read_png_float(path, srgb=srgb)
    return TextureMap(data)


def load_textured_material(directory: str | Path, material_id: Optional[str] = None) -> MaterialSpec:
    """Assemble a textured material from a directory of map files.

    The albedo map is required; every other map is optional and falls back
    to its scalar default (roughness 0.5, metallic 0, transmission 0, flat
    normal). File stems are matched case-insensitively against common names
    (albedo/basecolor, roughness, metallic, transmission, normal).
    """
    directory = Path(directory)
    found = {}
    for f in sorted(directory.iterdir()):
        if f.suffix.lower() not in (".png", ".hdr"):
            continue
        stem = f.stem.lower()
        for prop, names in _MAP_FILE_STEMS.items():
            if prop not in found and any(stem == n or stem.endswith("_" + n) for n in names):
                found[prop] = load_texture_map(f, srgb=(prop == "base_color"))
    if "base_color" not in found:
        raise MapShapeError(f"no albedo/base_color map found in {directory}")
    h, w = found["base_color"].height, found["base_color"].width
    kwargs = {}
    for prop in ("roughness", "metallic", "transmission", "normal"):
        if prop in found:
            kwargs[prop] = resample_map(found[prop], w, h)
    return MaterialSpec(
        id=material_id or directory.name,
        kind=TEXTURED,
        base_color=found["base_color"],
        **kwargs,
    )


def material_meta(mat: MaterialSpec) -> dict:
    """Manifest form of a material: uniform parameter values are recorded
    in full, textured materials by id and map inventory."""
    meta = {"id": mat.id, "kind": mat.kind, "ior": mat.ior}
    if mat.kind == UNIFORM:
        meta.update(
            base_color=list(mat.base_color),
            roughness=mat.roughness,
            metallic=mat.metallic,
            transmission=mat.transmission,
        )
    else:
        meta["maps"] = {
            name: [m.height, m.width, m.channels] for name, m in mat.maps().items()
        }
        for name in _SCALAR_PROPS:
            v = getattr(mat, name)
            if not isinstance(v, TextureMap):
                meta[name] = float(v)
    return meta

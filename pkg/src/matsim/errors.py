"""Exception types shared across the package."""


class MatsimError(Exception):
    """Base class for all package errors."""


class MixKindError(MatsimError):
    """Materials of different kinds (uniform vs textured) cannot be mixed."""


class MapShapeError(MatsimError):
    """Texture maps disagree on resolution where they must match."""


class EmptyLibraryError(MatsimError):
    """A material or environment library required by sampling is empty."""


class GenerationError(MatsimError):
    """Procedural generation failed after bounded retries."""


class RenderError(MatsimError):
    """Rendering produced an invalid output (e.g. an empty object mask)."""


class CrossSetError(MatsimError):
    """Ground-truth similarity is only defined within one image set."""


class NormError(MatsimError):
    """A descriptor violates the unit-norm contract."""


class RoleOrderError(MatsimError):
    """Triplet roles violate sim(anchor, positive) >= sim(anchor, negative)."""


class BatchSizeError(MatsimError):
    """A batch is too small to enumerate triples."""


class SamplingError(MatsimError):
    """Batch sampling cannot honor its contract on this dataset."""


class EmptyMaskError(MatsimError):
    """An operation requiring a nonempty mask received an empty one."""


class BenchmarkIndexError(MatsimError):
    """A benchmark manifest violates the index invariants."""


class IncompleteSetError(MatsimError):
    """A set directory is missing rendered outputs."""


class EmptyDatasetError(MatsimError):
    """A dataset root contains no sets."""


class DatasetValidationError(MatsimError):
    """A dataset set directory failed validation."""


class DescriptorFileError(MatsimError):
    """A descriptor exchange file violates its contract."""


class SchemaVersionError(MatsimError):
    """Manifest schema major version is newer than this reader supports."""

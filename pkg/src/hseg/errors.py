"""Exception hierarchy shared across the package."""


class HsegError(Exception):
    """Base class for all package-specific errors."""


class IoError(HsegError):
    """A file could not be read or written."""


class FormatError(HsegError):
    """An image uses an unsupported bit depth or colorspace."""


class LengthMismatch(HsegError):
    """Run lengths do not sum to the expected bitmap size."""


class SchemaError(HsegError):
    """A JSON document does not match the expected schema."""


class DuplicateId(HsegError):
    """Two segments in a manifest share the same id."""


class DegenerateSegmentation(HsegError):
    """Filtering left no usable segments to explain with."""


class NothingToExpand(HsegError):
    """None of the requested parent segments has child segments."""


class ConfigError(HsegError):
    """Invalid or inconsistent run configuration."""


class SingularSystem(HsegError):
    """The unregularized normal equations are rank-deficient."""


class AdapterError(HsegError):
    """Base class for model-adapter failures."""


class TransportError(AdapterError):
    """The model endpoint could not be reached or timed out."""


class ProtocolError(AdapterError):
    """The model endpoint answered with a malformed payload."""


class ValidationError(AdapterError):
    """The model endpoint returned semantically invalid outputs."""

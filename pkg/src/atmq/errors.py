"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid physical or numerical configuration."""


class NumericalError(RuntimeError):
    """A quadrature, root solve or propagation diagnostic failed."""


class ModelInapplicableError(ValueError):
    """A transmittance model cannot be built from the given statistics."""


class SampleFileError(OSError):
    """Base class for sample-file format problems."""


class VersionError(SampleFileError):
    pass


class ChecksumError(SampleFileError):
    pass

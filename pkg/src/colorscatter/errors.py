"""Exception types shared across the package."""


class DataError(Exception):
    """Malformed or inconsistent input data (bad file, dimension mismatch, ...)."""


class DegenerateInputError(DataError):
    """Input is structurally valid but degenerate (empty raster, empty mask, ...)."""

class DensePathError(Exception):
    """Base class for every rejection raised by the package."""


class ShapeError(DensePathError, ValueError):
    pass


class SpecError(DensePathError, ValueError):
    pass


class DataError(DensePathError, ValueError):
    pass


class CheckpointError(DensePathError, ValueError):
    pass


class TrainingError(DensePathError, RuntimeError):
    pass

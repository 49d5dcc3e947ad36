from typing import Optional


class CnnMapError(Exception):
    """Base error; `hint` carries an optional remediation shown by the CLI."""

    def __init__(self, message: str, hint: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.hint = hint


class ConfigError(CnnMapError):
    pass


class DimensionError(CnnMapError):
    pass


class InvalidPoseError(CnnMapError):
    pass


class InvalidRotationError(CnnMapError):
    def __init__(self, message: str, residual: float, hint: Optional[str] = None):
        super().__init__(message, hint)
        self.residual = residual


class DatasetLayoutError(CnnMapError):
    pass


class DatasetParseError(CnnMapError):
    def __init__(self, message: str, path: str, line: Optional[int] = None, hint: Optional[str] = None):
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}", hint)
        self.path = path
        self.line = line


class MissingModalityError(CnnMapError):
    pass


class MapFormatError(CnnMapError):
    def __init__(self, message: str, offset: int, hint: Optional[str] = None):
        super().__init__(f"{message} (at byte {offset})", hint)
        self.offset = offset


class MapIntegrityError(CnnMapError):
    pass


class WeightShapeError(CnnMapError):
    def __init__(self, message: str, layer: str, hint: Optional[str] = None):
        super().__init__(message, hint)
        self.layer = layer


class UnsupportedModelError(CnnMapError):
    pass

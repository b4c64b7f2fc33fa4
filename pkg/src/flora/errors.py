"""Exception types raised across the floorplanner."""


class FloraError(Exception):
    """Base class for all floorplanner errors."""


class GeometryError(FloraError, ValueError):
    """Invalid geometric input (empty region, overlapping regions, ...)."""


class ParseError(FloraError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class LayoutValidationError(FloraError, ValueError):
    def __init__(self, message, pairs=()):
        self.pairs = tuple(pairs)
        super().__init__(message)


class NoRoomError(FloraError):
    """No legal anchor exists for a module."""


class InitFailure(FloraError):
    """Random initialization could not place every module."""

"""Exception hierarchy shared by all modules."""


class MeshFitError(Exception):
    """Base class; the CLI maps any subclass to a nonzero exit code."""


class ParseError(MeshFitError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class UnsupportedFormatError(MeshFitError):
    pass


class DegenerateFaceError(MeshFitError):
    def __init__(self, face_idx, message=None):
        self.face_idx = face_idx
        super().__init__(message or f"face {face_idx} is degenerate")


class NoNeighborError(MeshFitError):
    pass


class ZeroAreaError(MeshFitError):
    pass


class ProvenanceError(MeshFitError):
    pass


class EmptyInputError(MeshFitError):
    pass


class ShapeError(MeshFitError):
    pass


class ConfigError(MeshFitError, ValueError):
    """Invalid parameter or violated precondition on plain inputs."""


class PlanarityError(MeshFitError):
    pass


class DivergenceError(MeshFitError):
    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)

"""Exception hierarchy shared by the mesh, solver and descent layers."""


class CCBMError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(CCBMError):
    pass


class StarShapeViolation(GeometryError):
    pass


class GeometryOverlap(GeometryError):
    pass


class DegenerateEdge(GeometryError):
    pass


class EmptyPolyline(GeometryError):
    pass


class BadRadii(GeometryError, ValueError):
    pass


class MeshInversion(CCBMError):
    """A mesh update produced a triangle with non-positive signed area."""

    def __init__(self, message, min_area=None):
        super().__init__(message)
        self.min_area = min_area


class NumericalError(CCBMError):
    """Failure inside a linear solve or the descent loop."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration


class DegenerateTriangle(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class DirichletMismatch(NumericalError):
    pass


class MissingGeometry(NumericalError):
    pass


class StepCollapse(NumericalError):
    pass

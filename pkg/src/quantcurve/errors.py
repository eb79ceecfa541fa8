"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class EmptyWindowError(ValueError):
    """No sample point receives positive kernel weight at the evaluation point."""

    def __init__(self, theta):
        self.theta = theta
        super().__init__(
            f"empty window at alpha={theta.alpha}, h={theta.h}, x={tuple(theta.x)}: "
            "no observation has positive kernel weight (widen h)"
        )


class ConvergenceError(RuntimeError):
    """Newton iterations failed; carries the last iterate and its residual."""

    def __init__(self, message, iterate=None, residual=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class SingularMatrixError(RuntimeError):
    """The curvature matrix of a Bahadur decomposition is (nearly) singular."""

    def __init__(self, theta, min_eigenvalue):
        self.theta = theta
        self.min_eigenvalue = min_eigenvalue
        super().__init__(
            f"curvature matrix singular at alpha={theta.alpha}, h={theta.h}, "
            f"x={tuple(theta.x)} (min eigenvalue {min_eigenvalue:.3g})"
        )

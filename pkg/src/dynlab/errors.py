"""Exception types raised by dynlab operations."""


class DynlabError(Exception):
    """Base class for all dynlab errors."""


class ConstraintViolation(DynlabError):
    """One or more parameter inequalities failed.

    ``failures`` holds ``(name, lhs, rhs)`` triples for every failed
    inequality, not only the first one.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        lines = [f"{name}: lhs={lhs!r} rhs={rhs!r}" for name, lhs, rhs in self.failures]
        super().__init__("constraint violation(s): " + "; ".join(lines))

    @property
    def names(self):
        return [f[0] for f in self.failures]


class BranchMiss(DynlabError):
    """Point does not lie in the image of the requested inverse branch."""


class DepthTooSmall(DynlabError):
    """Requested truncation depth cannot meet the requested tolerance."""


class NotContracting(DynlabError):
    def __init__(self, eta):
        self.eta = float(eta)
        super().__init__(f"operator is not a contraction: eta={self.eta:.6g} >= 1")


class NoConvergence(DynlabError):
    def __init__(self, max_iters, residual=float("nan")):
        self.max_iters = max_iters
        self.residual = residual
        super().__init__(f"no convergence after {max_iters} iterations (residual {residual:.3g})")


class InvalidRho(DynlabError):
    """rho = lambda_c / l is too large for the transversality bound to be positive."""


class InsufficientDepth(DynlabError):
    pass


class FitDegenerate(DynlabError):
    pass


class AtomStarvation(DynlabError):
    """Too few atoms per ball for a trustworthy norm estimate."""

    def __init__(self, expected, r, floor=10.0):
        self.expected = float(expected)
        self.r = float(r)
        super().__init__(
            f"expected {self.expected:.3g} atoms per ball at r={self.r:.3g} (< {floor:g})"
        )

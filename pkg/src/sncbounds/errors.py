"""Exception hierarchy shared by the analysis and simulation modules."""


class SncError(Exception):
    """Base class for all toolkit errors."""


class ModelError(SncError):
    """Invalid model input (malformed document, bad matrix, bad field)."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ReducibleChainError(ModelError):
    """Transition matrix is not irreducible."""

    def __init__(self, unreachable):
        self.unreachable = sorted(unreachable)
        super().__init__(
            f"chain is reducible, states {self.unreachable} are not reachable "
            f"from every state"
        )


class ConvergenceError(SncError):
    """Iterative eigen-solve did not reach the target residual."""

    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"power iteration did not converge after {iterations} iterations "
            f"(last residual {residual:.3e})"
        )


class DivergenceError(SncError):
    """A series was evaluated at or beyond its radius of convergence."""

    def __init__(self, message, pole=None):
        self.pole = pole
        super().__init__(message)


class InstabilityError(SncError):
    """A server cannot drain its offered load at any positive theta."""

    def __init__(self, server, detail=""):
        self.server = server
        msg = f"server {server} is unstable (mean arrivals >= mean service)"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class SiteViolationError(SncError):
    """Martingale analysis requested at a server that violates H6/H7."""

    def __init__(self, report):
        self.report = report
        super().__init__(
            "martingale site h=%d not admissible: %s"
            % (report.h, "; ".join(report.violations))
        )


class StateSpaceCapError(SncError):
    """Joint state enumeration would exceed the configured cap."""

    def __init__(self, size, cap):
        self.size = size
        self.cap = cap
        super().__init__(
            f"joint state space has {size} states (cap {cap}); fall back to "
            f"the exp(theta*(sigma_S + sum sigma_A)) upper bound instead"
        )


class QuantileUnreachableError(SncError):
    """No target value below the search cap meets the requested epsilon."""

    def __init__(self, epsilon, cap):
        self.epsilon = epsilon
        self.cap = cap
        super().__init__(
            f"bound does not reach epsilon={epsilon:g} for values up to {cap}"
        )


class CounterOverflowError(SncError):
    """A 64-bit simulation counter would overflow."""

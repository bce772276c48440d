"""Exception types raised by the solver stack."""


class GabpError(Exception):
    """Base class for all package errors."""


class NonPositiveDiagonal(GabpError):
    def __init__(self, index, value):
        super().__init__(f"diagonal entry {index} is {value!r}; must be > 0")
        self.index = index
        self.value = value


class NoConvergence(GabpError):
    """Power iteration failed to settle within its iteration budget."""


class NumericalBreakdown(GabpError):
    def __init__(self, node, target=None, value=0.0):
        where = f"{node}->{target}" if target is not None else f"{node}"
        super().__init__(f"precision aggregate at {where} is {value!r} (below pivot floor)")
        self.node = node
        self.target = target
        self.value = value


class NotWalkSummableAfterLoading(GabpError):
    def __init__(self, rho):
        super().__init__(f"loaded model has rho(|R'|) = {rho:.6g} >= 1")
        self.rho = rho


class DimensionTooLarge(GabpError):
    def __init__(self, n, cap):
        super().__init__(f"dense diagnostic refused for n={n} (cap {cap})")
        self.n = n
        self.cap = cap

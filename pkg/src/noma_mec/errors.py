"""Exception types shared across the solvers."""


class NumericalFailure(RuntimeError):
    """A numerical routine lost a property it relies on (positive-definite
    shape matrix, finite gradients, a converging line search)."""


class CapabilityError(ValueError):
    """The request is outside what this implementation is sized for."""


class InfeasibleRecovery(RuntimeError):
    """Primal reconstruction could not meet the offloading rate constraints.

    Usually means the price-tie clustering tolerance is too coarse or the
    dual solve was stopped too early.
    """

class LabError(Exception):
    """Root of every error raised by the lab."""


class FlowTimeOverflow(LabError):
    def __init__(self, t: float, limit: float):
        super().__init__(f"flow-time overflow: |t| = {abs(t):.6g} exceeds {limit:.6g}")


class OffShellPoint(LabError):
    def __init__(self, energy: float, tol: float):
        super().__init__(f"off-shell point: p0 = {energy:.17g} is not within {tol:g} of 1/2")


class ReductionStall(LabError):
    def __init__(self, distance: float, radius: float):
        super().__init__(
            f"reduction stall: no cached word decreases d(g.i, i) = {distance:.6g} "
            f"(domain radius {radius:.6g}); increase the word cache length"
        )


class RejectionFailure(LabError):
    def __init__(self, rate: float):
        super().__init__(f"rejection failure: acceptance rate {rate:.4%} is below 1%")


class StencilUnstable(LabError):
    def __init__(self, order: int, coarse: float, fine: float, tol: float):
        super().__init__(
            f"stencil unstable: order {order} derivative levels {coarse:.6g} and {fine:.6g} "
            f"disagree beyond {tol:.3g}"
        )


class EnergyDriftExceeded(LabError):
    def __init__(self, drift: float, tol: float):
        super().__init__(f"energy drift exceeded: {drift:.3e} > {tol:.3e}")


class NegativeRadicand(LabError):
    def __init__(self, value: float):
        super().__init__(f"negative radicand: 2(p_eps(anchor) - eps V(x)) = {value:.6g}; eps is too large")


class NoDominantCoefficient(LabError):
    def __init__(self, J: int, floor: float):
        super().__init__(
            f"no dominant coefficient: all Jacobian coefficients of order <= {J} are below {floor:.6g}"
        )


class RootResidualError(LabError):
    def __init__(self, residual: float):
        super().__init__(f"companion roots rejected: relative residual {residual:.3e} exceeds 1e-10")


class ConfigConstraintError(LabError):
    def __init__(self, constraint: str, detail: str):
        self.constraint = constraint
        super().__init__(f"config violates constraint {constraint}: {detail}")


class InvariantViolation(LabError):
    def __init__(self, invariant: str, value: float, threshold: float):
        self.invariant = invariant
        super().__init__(f"invariant '{invariant}' failed: {value:.3e} > {threshold:.3e}")


class TrendNotDemonstrated(InvariantViolation):
    def __init__(self, experiment: str, subject: str, values: list[float]):
        self.invariant = f"{experiment} trend"
        shown = ", ".join(f"{v:.3e}" for v in values)
        LabError.__init__(self, f"trend not demonstrated: {experiment} {subject} over [{shown}]")

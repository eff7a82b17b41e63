import numpy as np
from loguru import logger
from scipy import stats

from src.application.dynamics.integrator import PerturbedFlowService, chart_deviation
from src.application.stability.transforms import StabilityService
from src.domain.hyperbolic import (
    ChartPhasePoint,
    GroupElement,
    algebra_log,
    canonicalize,
    flow_matrices,
    geodesic_flow,
    local_sasaki_distance,
    sasaki_norm,
    stable_matrices,
    to_chart,
    unit_element,
    unit_horocycle_unstable,
    unstable_matrices,
)
from src.domain.reports import InvariantCheck
from src.domain.surface import FuchsianGroup


def _check(invariant: str, value: float, threshold: float) -> InvariantCheck:
    passed = bool(np.isfinite(value) and value <= threshold)
    log = logger.debug if passed else logger.error
    log(f"{invariant}: {value:.3e} (threshold {threshold:.1e})")
    return InvariantCheck(invariant=invariant, value=float(value), threshold=threshold, passed=passed)


def _relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))))


class FlowCheckSuite:
    """Exact-flow algebra and integrator invariants on seeded Liouville samples."""

    def __init__(
        self,
        group: FuchsianGroup,
        flows: PerturbedFlowService,
        stability: StabilityService,
        seed: int,
        quick: bool = False,
    ):
        self.group = group
        self.flows = flows
        self.stability = stability
        self.potential = flows.potential
        self.seed = seed
        self.quick = quick

    def _sample(self, n: int, offset: int) -> np.ndarray:
        return self.group.sample_liouville_array(n, self.seed + offset).matrices

    def commutation(self) -> list[InvariantCheck]:
        n = 1_000 if self.quick else 10_000
        rng = np.random.default_rng(self.seed + 1)
        m = self._sample(n, 1)
        t = rng.uniform(-3.0, 3.0, n)
        tau = rng.uniform(-1.0, 1.0, n)
        unstable = _relative_gap(
            flow_matrices(unstable_matrices(m, tau), t), unstable_matrices(flow_matrices(m, t), np.exp(t) * tau)
        )
        stable = _relative_gap(
            flow_matrices(stable_matrices(m, tau), t), stable_matrices(flow_matrices(m, t), np.exp(-t) * tau)
        )
        return [
            _check("unstable commutation", float(unstable), 1e-12),
            _check("stable commutation", float(stable), 1e-12),
        ]

    def anosov_rate(self) -> InvariantCheck:
        g = GroupElement(self._sample(1, 2)[0])
        h = unit_horocycle_unstable(g, 1e-9)
        times = np.linspace(0.0, 5.0, 11)
        separation = [local_sasaki_distance(geodesic_flow(g, t), geodesic_flow(h, t)) for t in times]
        slope = stats.linregress(times, np.log(separation)).slope
        return _check("unstable growth exponent", abs(slope - 1.0), 0.01)

    def integrator(self) -> list[InvariantCheck]:
        cfg = self.flows.config
        starts = [to_chart(GroupElement(m)) for m in self._sample(2 if self.quick else 4, 3)]
        horizon = 5.0 if self.quick else 15.0
        drift = max(self.flows.perturbed_flow(p, 1e-2, horizon).energy_drift for p in starts)
        exact = max(self._unperturbed_gap(p, 10.0) for p in starts)
        reverse = max(self.flows.reversibility_error(p, 1e-2, 2.0) for p in starts)
        return [
            _check("energy drift", drift, 1e-9),
            _check("unperturbed consistency", exact, 1e-8),
            _check("reversibility", reverse, 10.0 * cfg.energy_tol),
        ]

    def _unperturbed_gap(self, p: ChartPhasePoint, t: float) -> float:
        """eps = 0 trajectory against the matrix flow, both seen in the reduced tile."""
        result = self.flows.perturbed_flow(p, 0.0, t)
        exact = GroupElement(result.transport.m @ geodesic_flow(unit_element(p), t).m)
        return chart_deviation(to_chart(exact), result.endpoint)

    def vector_field(self, eps: float = 1e-2, h: float = 1e-4) -> list[InvariantCheck]:
        n = 10 if self.quick else 100
        worst, speed = 0.0, 0.0
        for m in self._sample(n, 4):
            g = GroupElement(m)
            anchor = to_chart(g).scaled(1.02)
            field, c = self.flows.rescaled_vector_field(g, anchor, eps)
            ahead = self.flows.rescaled_flow(g, anchor, eps, h)
            behind = self.flows.rescaled_flow(g, anchor, eps, -h)
            estimate = (algebra_log(g, ahead) - algebra_log(g, behind)) / (2.0 * h)
            worst = max(worst, sasaki_norm(estimate - field.as_algebra()))
            speed = max(speed, abs(c - 1.0) / self.flows.speed_bound(anchor, eps))
        return [_check("vector field vs flow derivative", worst, 1e-6), _check("speed factor bound", speed, 1.0)]

    def cocycle(self) -> InvariantCheck:
        n = 10 if self.quick else 100
        rng = np.random.default_rng(self.seed + 5)
        worst = max(
            self.stability.beta_u_cocycle_residual(GroupElement(m), float(s))
            for m, s in zip(self._sample(n, 5), rng.uniform(0.1, 2.0, n))
        )
        return _check("beta cocycle", worst, 1e-8)

    def invariance(self) -> InvariantCheck:
        m = self._sample(100, 6)
        base = self.potential.f_V_matrices(m)
        worst = 0.0
        for sigma in self.group.side_pairings:
            moved = canonicalize(sigma @ m)
            worst = max(worst, float(np.max(np.abs(self.potential.f_V_matrices(moved) - base))))
        return _check("f_V Gamma-invariance", worst, 1e-10)

    def run(self) -> list[InvariantCheck]:
        logger.info("Running flow-check invariant suite")
        checks = [*self.commutation(), self.anosov_rate(), *self.integrator(), *self.vector_field()]
        checks += [self.cocycle(), self.invariance()]
        passed = sum(c.passed for c in checks)
        logger.info(f"Flow checks: {passed}/{len(checks)} passed")
        return checks

from functools import partial
from typing import NamedTuple

import numpy as np
from loguru import logger
from numpy.polynomial.legendre import leggauss
from scipy import stats

from src.application.cartan.cartan import split_good_intervals
from src.application.dynamics.integrator import PerturbedFlowService, TrajectoryResult, unperturbed_shift
from src.application.potential.derivatives import FlowDerivativeService
from src.application.stability.transforms import StabilityService
from src.domain.config import ExperimentConfig
from src.domain.hyperbolic import (
    SQRT2,
    ChartPhasePoint,
    GroupElement,
    flow_matrices,
    to_chart,
    unit_element,
    unit_horocycle_unstable,
    unstable_matrices,
)
from src.domain.observable import Observable
from src.domain.paths import FlowPath, PathKind, path_integral
from src.domain.reports import BirkhoffRow, EquidistReport, MixingRow, TrendRecord
from src.infrastructure.parallel.pool import WorkerPool

EVAL_CHUNK = 50_000
SHELL_BAND = 0.05
# resolution and batch size of the quiet-segment test for control points
SEGMENT_NODES = 200
SEGMENT_BATCH = 64


class LiouvilleReference(NamedTuple):
    mean: float
    mc_error: float
    minimum: float
    maximum: float


class TrendVerdict(NamedTuple):
    decreasing: bool
    steps_down: int
    steps: int


class WindowedAverage(NamedTuple):
    estimate: float
    coverage: float
    windows: int


def _evaluate(observable: Observable, m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float).reshape(-1, 2, 2)
    out = np.empty(len(m))
    for start in range(0, len(m), EVAL_CHUNK):
        out[start : start + EVAL_CHUNK] = observable.on_matrices(m[start : start + EVAL_CHUNK])
    return out


def _inverse(tau: float) -> float:
    return 1.0 / tau


def horocycle_integral(observable: Observable, g: GroupElement, low: float, high: float) -> float:
    """int_low^high a(H_u^tau g) dtau along the unit-speed unstable horocycle."""
    path = FlowPath(PathKind.HOROCYCLE, g.m)
    return path_integral(observable.field, observable.on_local, path, low, high)


def trend_verdict(values: list[float], errors: list[float], required: int = 2) -> TrendVerdict:
    """A step counts as down when the later upper bar sits below the earlier lower bar.

    Every window of three consecutive steps needs `required` downs; shorter sweeps need
    min(required, steps).
    """
    values, errors = np.asarray(values, dtype=float), np.asarray(errors, dtype=float)
    down = (values[1:] + errors[1:]) < (values[:-1] - errors[:-1])
    steps = len(down)
    if steps == 0:
        return TrendVerdict(False, 0, 0)
    if steps < 3:
        ok = int(down.sum()) >= min(required, steps)
    else:
        ok = all(int(down[k : k + 3].sum()) >= required for k in range(steps - 2))
    return TrendVerdict(bool(ok), int(down.sum()), steps)


def log_slope(parameters: list[float], values: list[float]) -> float | None:
    """log-log regression slope; None for fewer than two points or a non-positive value."""
    x, y = np.asarray(parameters, dtype=float), np.asarray(values, dtype=float)
    if len(x) < 2 or np.any(x <= 0.0) or np.any(y <= 0.0):
        return None
    return float(stats.linregress(np.log(x), np.log(y)).slope)


def trend_record(
    experiment: str,
    subject: str,
    parameters: list[float],
    values: list[float],
    errors: list[float],
    required: bool = True,
    passed: bool | None = None,
) -> TrendRecord:
    """Verdict row for a sweep ordered so that a passing trend decreases; passed defaults to the verdict."""
    verdict = trend_verdict(values, errors)
    return TrendRecord(
        experiment=experiment,
        subject=subject,
        parameters=[float(p) for p in parameters],
        values=[float(v) for v in values],
        errors=[float(e) for e in errors],
        decreasing=verdict.decreasing,
        steps_down=verdict.steps_down,
        steps=verdict.steps,
        slope=log_slope(parameters, values),
        required=required,
        passed=verdict.decreasing if passed is None else bool(passed),
    )


def envelope_bounds(reference: LiouvilleReference, mass: float) -> tuple[float, float]:
    """m min a + (1 - m) int a  and  m max a + (1 - m) int a for critical mass m."""
    if not 0.0 <= mass <= 1.0:
        raise ValueError(f"critical mass must lie in [0, 1], got {mass}")
    rest = (1.0 - mass) * reference.mean
    return mass * reference.minimum + rest, mass * reference.maximum + rest


def _trajectory_endpoint(flows: PerturbedFlowService, eps: float, T: float, start: ChartPhasePoint) -> TrajectoryResult:
    return flows.perturbed_flow(start, eps, T)


class EquidistributionLab:
    def __init__(
        self,
        flows: PerturbedFlowService,
        derivatives: FlowDerivativeService,
        stability: StabilityService,
    ):
        self.flows = flows
        self.derivatives = derivatives
        self.stability = stability
        self.group = flows.group
        self._references: dict[tuple[str, int, int], LiouvilleReference] = {}

    def liouville_reference(self, observable: Observable, n: int, seed: int) -> LiouvilleReference:
        key = (observable.id, n, seed)
        if key not in self._references:
            if n < 1000:
                raise ValueError(f"Liouville reference needs n >= 1000, got {n}")
            sample = self.group.sample_liouville_array(n, seed)
            values = _evaluate(observable, sample.matrices)
            self._references[key] = LiouvilleReference(
                mean=float(values.mean()),
                mc_error=float(values.std(ddof=1) / np.sqrt(n)),
                minimum=float(values.min()),
                maximum=float(values.max()),
            )
            logger.info(f"Liouville reference for {observable.id}: {self._references[key].mean:.6g} (n={n})")
        return self._references[key]

    def liouville_average(self, observable: Observable, n: int, seed: int) -> tuple[float, float]:
        ref = self.liouville_reference(observable, n, seed)
        return ref.mean, ref.mc_error

    def horocycle_birkhoff(self, observable: Observable, rho: GroupElement | ChartPhasePoint, T: float) -> float:
        if T <= 0:
            raise ValueError(f"horizon must be positive, got {T}")
        return horocycle_integral(observable, unit_element(rho), 0.0, T) / T

    def horocycle_profile(
        self, observable: Observable, rho: GroupElement | ChartPhasePoint, horizons: list[float]
    ) -> list[float]:
        """Running averages at every horizon, sharing the integral between checkpoints."""
        g = unit_element(rho)
        total, last, averages = 0.0, 0.0, []
        for T in sorted(horizons):
            total += horocycle_integral(observable, g, last, T)
            last = T
            averages.append(total / T)
        return averages

    def unique_ergodicity(
        self,
        observable: Observable,
        points: list[GroupElement],
        horizons: list[float],
        reference: LiouvilleReference,
    ) -> list[BirkhoffRow]:
        horizons = sorted(horizons)
        profiles = WorkerPool.map(partial(self.horocycle_profile, observable, horizons=horizons), points)
        deviations = np.abs(np.array(profiles) - reference.mean)
        # r(T0): worst deviation over the batch at any horizon >= T0
        envelope = np.maximum.accumulate(deviations.max(axis=0)[::-1])[::-1]
        rows = []
        for k, (g, profile) in enumerate(zip(points, profiles)):
            for j, T in enumerate(horizons):
                rows.append(
                    BirkhoffRow(
                        T=T,
                        point=k,
                        rho=list(g.entries()),
                        estimate=profile[j],
                        liouville_ref=reference.mean,
                        deviation=float(deviations[k, j]),
                        mc_error=reference.mc_error,
                        envelope=float(envelope[j]),
                    )
                )
        return rows

    def mixing_average(self, observable: Observable, rho: GroupElement | ChartPhasePoint, b: float, s: float) -> float:
        """(1/b) int_0^b a(H_u^s G^t rho) dt."""
        if not 0.0 < b <= 1.0:
            raise ValueError(f"b must lie in (0, 1], got {b}")
        if s < 0:
            raise ValueError(f"s must be >= 0, got {s}")
        path = FlowPath(PathKind.PUSHED_RAY, unit_element(rho).m, s / SQRT2)
        return path_integral(observable.field, observable.on_local, path, 0.0, b) / b

    def mixing_birkhoff_form(self, observable: Observable, rho: GroupElement | ChartPhasePoint, b: float, s: float) -> float:
        """Same window after tau = s e^{-t}, dropping the residual G^t: (1/b) int a(H_u^tau rho) dtau / tau."""
        g = unit_element(rho)
        if s == 0.0:
            return observable(g)
        path = FlowPath(PathKind.HOROCYCLE, g.m)
        return path_integral(observable.field, observable.on_local, path, s * np.exp(-b), s, weight=_inverse) / b

    def mixing_table(
        self,
        observable: Observable,
        points: list[GroupElement],
        b: float,
        s_list: list[float],
        reference: LiouvilleReference,
    ) -> list[MixingRow]:
        rows = []
        for k, g in enumerate(points):
            for s in sorted(s_list):
                direct = self.mixing_average(observable, g, b, s)
                change = self.mixing_birkhoff_form(observable, g, b, s)
                rows.append(
                    MixingRow(
                        s=s,
                        b=b,
                        point=k,
                        rho=list(g.entries()),
                        direct=direct,
                        birkhoff_form=change,
                        discrepancy=abs(direct - change),
                        liouville_ref=reference.mean,
                        deviation=abs(direct - reference.mean),
                        mc_error=reference.mc_error,
                    )
                )
        return rows

    def _check_start(self, rho0: ChartPhasePoint) -> None:
        if abs(rho0.p0 - 0.5) > SHELL_BAND:
            raise ValueError(f"start point must lie within {SHELL_BAND} of the unit layer, p0 = {rho0.p0:.6g}")

    def main_experiment(
        self,
        observable: Observable,
        rho0: ChartPhasePoint,
        eps0: float,
        nu1: float,
        nu2: float,
        c: float,
        config: ExperimentConfig,
        eps: float | None = None,
        control: bool = False,
    ) -> EquidistReport:
        """I(eps, b, T) = (1/b) int_0^b a(G_eps^T(G_0^s rho0)) ds with b = eps0^nu2, T = c |log eps0|."""
        self._check_start(rho0)
        eps = eps0 if eps is None else eps
        if eps != 0.0 and not eps0 ** (1.0 + nu1) * (1.0 - 1e-12) <= eps <= eps0:
            raise ValueError(f"eps = {eps} outside [eps0^(1+nu1), eps0] = [{eps0 ** (1.0 + nu1):.6g}, {eps0}]")
        b = eps0**nu2
        T = c * abs(np.log(eps0))

        in_K = self.derivatives.in_K_VJ(rho0, config.J, config.eta0)
        if not in_K and not control:
            logger.warning(f"Start point is not in K_V^{config.J}({config.eta0}); continuing")

        nodes, weights = leggauss(config.n_quad)
        s_nodes = 0.5 * b * (nodes + 1.0)
        starts = [unperturbed_shift(rho0, float(s)) for s in s_nodes]
        task = partial(_trajectory_endpoint, self.flows, eps, T)
        results = WorkerPool.map(task, starts)
        values = np.array([observable(r.element()) for r in results])
        estimate = float(values @ (0.5 * weights))

        reference = self.liouville_reference(observable, config.liouville_samples, config.seed)
        logger.info(f"I(eps={eps:g}, b={b:.4g}, T={T:.4g}) = {estimate:.6g} vs {reference.mean:.6g}")
        return EquidistReport(
            estimate=estimate,
            liouville_ref=reference.mean,
            deviation=abs(estimate - reference.mean),
            mc_error=reference.mc_error,
            eps=eps,
            eps0=eps0,
            b=b,
            T=T,
            c=c,
            nu1=nu1,
            nu2=nu2,
            rho0=rho0.as_array().tolist(),
            observable=observable.id,
            n_quad=config.n_quad,
            seed=config.seed,
            in_K=in_K,
            max_energy_drift=float(max(r.energy_drift for r in results)),
            control=control,
        )

    def _horocycle_shifts(self, rho0: ChartPhasePoint, eps: float, T: float, N: int, s: np.ndarray) -> tuple[GroupElement, np.ndarray]:
        norm = rho0.norm
        reference = self.stability.reference_point(rho0, eps, T)
        poly = self.stability.poly_PN(rho0, N)
        return reference, -eps * poly(s) * np.exp(T * norm) / norm**2

    def reparam_horocycle_average(
        self,
        observable: Observable,
        rho0: ChartPhasePoint,
        eps: float,
        b: float,
        T: float,
        N: int,
        n_quad: int = 64,
        track_time_shift: bool = True,
    ) -> float:
        """(1/b) int_0^b a(H_u^{-eps P(s) e^{T|xi0|}/|xi0|^2} rho(eps, T)) ds."""
        self._check_start(rho0)
        nodes, weights = leggauss(n_quad)
        s = 0.5 * b * (nodes + 1.0)
        reference, shifts = self._horocycle_shifts(rho0, eps, T, N, s)
        points = unstable_matrices(np.broadcast_to(reference.m, (len(s), 2, 2)), shifts / SQRT2)
        if track_time_shift:
            points = flow_matrices(points, s * rho0.norm)
        return float(_evaluate(observable, points) @ (0.5 * weights))

    def windowed_average(
        self,
        observable: Observable,
        rho0: ChartPhasePoint,
        eps: float,
        b: float,
        T: float,
        N: int,
        theta: float,
        J: int,
        eta0: float = 0.05,
    ) -> WindowedAverage:
        """Good windows of [0, b] mapped through the reparametrization onto horocycle segments."""
        poly = self.stability.poly_PN(rho0, N)
        split = split_good_intervals(poly, b, theta, J, eta0)
        windows = np.array(list(split.windows()))
        if not len(windows):
            return WindowedAverage(float("nan"), split.coverage_ratio, 0)

        reference, shifts = self._horocycle_shifts(rho0, eps, T, N, windows.ravel())
        means = []
        for low, high in zip(np.minimum(shifts[::2], shifts[1::2]), np.maximum(shifts[::2], shifts[1::2])):
            if high - low <= 1e-12:
                means.append(observable(unit_horocycle_unstable(reference, float(low))))
            else:
                means.append(horocycle_integral(observable, reference, float(low), float(high)) / (high - low))
        # windows share one length, so their horocycle means weigh equally
        estimate = float(np.mean(means))
        return WindowedAverage(estimate, split.coverage_ratio, len(windows))

    def critical_mass(self, n: int, J: int, eta0: float, seed: int) -> float:
        """Liouville fraction of the complement of K_V^J(eta0)."""
        sample = self.group.sample_liouville_array(n, seed)
        inside = self.derivatives.in_K_VJ_batch(sample.matrices, J, eta0)
        return float(1.0 - inside.mean())

    def quiet_segments(self, m: np.ndarray, length: float, threshold: float, count: int | None = None) -> np.ndarray:
        """Indices of the rows of m whose geodesic segment G^s m, s in [0, length], keeps |f_V| below threshold.

        Stops once count indices are found.
        """
        m = np.asarray(m, dtype=float).reshape(-1, 2, 2)
        s = np.linspace(0.0, length, SEGMENT_NODES)
        quiet: list[int] = []
        for start in range(0, len(m), SEGMENT_BATCH):
            block = np.arange(start, min(start + SEGMENT_BATCH, len(m)))
            along = flow_matrices(np.repeat(m[block], len(s), axis=0), np.tile(s, len(block)))
            f_V = self.flows.potential.f_V_matrices(along).reshape(len(block), len(s))
            quiet.extend(int(k) for k in block[np.max(np.abs(f_V), axis=1) < threshold])
            if count is not None and len(quiet) >= count:
                break
        return np.array(quiet, dtype=int)

    def sample_start_points(
        self,
        count: int,
        J: int,
        eta0: float,
        seed: int,
        near_critical: float | None = None,
        segment: float = 0.0,
        pool: int = 4000,
    ) -> list[ChartPhasePoint]:
        """Liouville points in K_V^J(eta0), or with all weighted derivatives below near_critical.

        Near-critical points can also be required to keep f_V below the same level along
        the geodesic segment of the given length that an experiment averages over.
        """
        sample = self.group.sample_liouville_array(pool, seed)
        value, _ = self.derivatives.derivative_table(sample.matrices, J, weighted=True, strict=False)
        size = np.max(np.abs(value), axis=1)
        keep = size < near_critical if near_critical is not None else size >= eta0
        index = np.flatnonzero(keep)
        if near_critical is not None and segment > 0.0:
            index = index[self.quiet_segments(sample.matrices[index], segment, near_critical, count)]
        chosen = sample.matrices[index[:count]]
        if len(chosen) < count:
            logger.warning(f"Only {len(chosen)} of {count} start points found in a pool of {pool}")
        return [to_chart(GroupElement(m)) for m in chosen]

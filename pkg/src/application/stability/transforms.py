import math
from typing import NamedTuple

import numpy as np
from loguru import logger
from scipy import stats

from src.application.dynamics.integrator import PerturbedFlowService, unperturbed_shift
from src.application.potential.derivatives import FlowDerivativeService
from src.domain.config import IntegratorConfig
from src.domain.hyperbolic import (
    SQRT2,
    ChartPhasePoint,
    GroupElement,
    algebra_log,
    frame_coefficients,
    geodesic_flow,
    unit_element,
    unit_horocycle_stable,
    unit_horocycle_unstable,
)
from src.domain.observable import Observable
from src.domain.paths import FlowPath, PathKind, path_integral
from src.domain.polynomial import FlowPolynomial
from src.domain.potential import TranslateTable
from src.domain.reports import StabilityComparison

GAMMA = 0.45
T_MAX = 30.0
N_QUAD = 2000
# max over d of |d/dd exp(1 - 1/(1 - (d/r)^2))| is about 2.17 / r
PROFILE_SLOPE = 2.2


class BetaValue(NamedTuple):
    value: float
    tail: float


class ConjugacyCheck(NamedTuple):
    corrected: float
    plain: float


def _decay(tau: float) -> float:
    return math.exp(-tau)


class StabilityService:
    """First-order Anosov conjugacy data for the perturbation eps V, and the structural comparison."""

    def __init__(
        self,
        flows: PerturbedFlowService,
        derivatives: FlowDerivativeService,
        t_max: float = T_MAX,
        n_quad: int = N_QUAD,
    ):
        self.flows = flows
        self.derivatives = derivatives
        self.potential = flows.potential
        self.t_max = t_max
        self.n_quad = n_quad

    def _check_quadrature(self, t_max: float, n_quad: int) -> None:
        if t_max < 20.0:
            raise ValueError(f"T_max must be >= 20, got {t_max}")
        if n_quad < 200:
            raise ValueError(f"n_quad must be >= 200, got {n_quad}")

    def _f_V_local(self, m: np.ndarray, table: TranslateTable) -> np.ndarray:
        return self.potential.local_fields(m, table)[1]

    def _weighted_integral(self, g: np.ndarray, a: float, b: float, n_quad: int, kind: PathKind = PathKind.GEODESIC) -> float:
        """int_a^b e^{-tau} f_V(G^{+-tau} g) dtau; n_quad caps the subdivisions of every piece."""
        path = FlowPath(kind, np.asarray(g, dtype=float))
        return path_integral(self.potential, self._f_V_local, path, a, b, weight=_decay, limit=n_quad)

    def _beta_matrices(self, m: np.ndarray, t_max: float | None, n_quad: int | None, kind: PathKind) -> np.ndarray:
        t_max, n_quad = t_max or self.t_max, n_quad or self.n_quad
        self._check_quadrature(t_max, n_quad)
        m = np.asarray(m, dtype=float).reshape(-1, 2, 2)
        if self.potential.is_constant:
            return np.zeros(len(m))
        return np.array([self._weighted_integral(g, 0.0, t_max, n_quad, kind) for g in m]) / SQRT2

    def beta_u_matrices(self, m: np.ndarray, t_max: float | None = None, n_quad: int | None = None) -> np.ndarray:
        return self._beta_matrices(m, t_max, n_quad, PathKind.GEODESIC)

    def beta_s_matrices(self, m: np.ndarray, t_max: float | None = None, n_quad: int | None = None) -> np.ndarray:
        return self._beta_matrices(m, t_max, n_quad, PathKind.REVERSED_GEODESIC)

    def tail_bound(self, t_max: float | None = None) -> float:
        sup_f = 0.0 if self.potential.is_constant else self.f_V_sup()
        return sup_f * float(np.exp(-(t_max or self.t_max))) / SQRT2

    def f_V_sup(self) -> float:
        # |f_V| <= |dV|_g
        return float(sum(abs(b.amplitude) * PROFILE_SLOPE / b.radius for b in self.potential.bumps))

    def beta_u(self, rho: GroupElement | ChartPhasePoint, t_max: float | None = None, n_quad: int | None = None) -> BetaValue:
        value = self.beta_u_matrices(unit_element(rho).m, t_max, n_quad)[0]
        return BetaValue(float(value), self.tail_bound(t_max))

    def beta_s(self, rho: GroupElement | ChartPhasePoint, t_max: float | None = None, n_quad: int | None = None) -> BetaValue:
        value = self.beta_s_matrices(unit_element(rho).m, t_max, n_quad)[0]
        return BetaValue(float(value), self.tail_bound(t_max))

    def beta_u_cocycle_residual(self, rho: GroupElement | ChartPhasePoint, s: float) -> float:
        """|e^{-s} beta_u(G^s rho) - beta_u(rho) + (1/sqrt 2) int_0^s e^{-tau} f_V(G^tau rho) dtau|."""
        if abs(s) > 5.0:
            raise ValueError(f"cocycle shift must satisfy |s| <= 5, got {s}")
        if s == 0.0:
            return 0.0
        g = unit_element(rho)
        shifted = geodesic_flow(g, s)
        lhs = np.exp(-s) * self.beta_u(shifted).value
        if s > 0:
            head = self._weighted_integral(g.m, 0.0, s, self.n_quad)
        else:
            head = -self._weighted_integral(g.m, s, 0.0, self.n_quad)

        rhs = self.beta_u(g).value - head / SQRT2
        return float(abs(lhs - rhs))

    def poly_PN(self, rho0: ChartPhasePoint, N: int) -> FlowPolynomial:
        if not 1 <= N <= 6:
            raise ValueError(f"N must be in [1, 6], got {N}")
        norm = rho0.norm
        if self.potential.is_constant:
            return FlowPolynomial.from_derivatives([0.0] * N, norm)
        value, error = self.derivatives.derivative_table(unit_element(rho0).m, N - 1, weighted=True, strict=False)
        if np.max(error) > self.derivatives.tol:
            logger.warning(f"P^{N} coefficients carry stencil error {np.max(error):.2e}")
        return FlowPolynomial.from_derivatives([float(d) for d in value[0]], norm)

    def taylor_residual(self, rho0: ChartPhasePoint, poly: FlowPolynomial, s: float) -> float:
        """|e^{-s|xi0|} beta_u(G^{s|xi0|} rho_hat) - beta_u(rho_hat) + P(s)|."""
        g = unit_element(rho0)
        shift = s * rho0.norm
        m = np.stack([g.m, geodesic_flow(g, shift).m])
        beta = self.beta_u_matrices(m)
        return float(abs(np.exp(-shift) * beta[1] - beta[0] + poly(s)))

    def reference_point(self, rho0: ChartPhasePoint, eps: float, T: float) -> GroupElement:
        """G_0^{T|xi0|} o H_u^{eps beta_u / |xi0|^2} applied to the normalized rho0."""
        g = unit_element(rho0)
        norm = rho0.norm
        shift = 0.0 if eps == 0.0 else eps * self.beta_u(g).value / norm**2
        return geodesic_flow(unit_horocycle_unstable(g, shift), T * norm)

    def approx_inverse_conjugacy(
        self, rho: GroupElement | ChartPhasePoint, anchor: ChartPhasePoint, eps: float
    ) -> GroupElement:
        """Stable after unstable horocycle step by eps beta / |xi1|^2."""
        g = unit_element(rho)
        if eps == 0.0 or self.potential.is_constant:
            return g
        scale = eps / anchor.norm**2
        pair = self.beta_u_matrices(g.m), self.beta_s_matrices(g.m)
        beta_u, beta_s = float(pair[0][0]), float(pair[1][0])
        return unit_horocycle_stable(unit_horocycle_unstable(g, scale * beta_u), scale * beta_s)

    def conjugacy_check(self, rho: ChartPhasePoint, anchor: ChartPhasePoint, eps: float, T: float) -> ConjugacyCheck:
        """Transverse distance from phi^T(rho) to G^T of the corrected and of the plain start."""
        target = self.flows.rescaled_flow(rho, anchor, eps, T, lifted=True)
        corrected = geodesic_flow(self.approx_inverse_conjugacy(rho, anchor, eps), T)
        plain = geodesic_flow(unit_element(rho), T)
        return ConjugacyCheck(_transverse(corrected, target), _transverse(plain, target))

    def stability_comparison(
        self,
        rho0: ChartPhasePoint,
        eps: float,
        s: float,
        T: float,
        N: int,
        observable: Observable,
        track_time_shift: bool = True,
        config: IntegratorConfig | None = None,
    ) -> StabilityComparison:
        norm = rho0.norm
        g = unit_element(rho0)
        start = geodesic_flow(g, s * norm)
        anchor = unperturbed_shift(rho0, s)
        lhs = observable(self.flows.rescaled_flow(start, anchor, eps, T * norm, config))

        poly = self.poly_PN(rho0, N)
        push = -eps * float(poly(s)) * np.exp(T * norm) / norm**2
        landing = unit_horocycle_unstable(self.reference_point(rho0, eps, T), push)
        if track_time_shift:
            landing = geodesic_flow(landing, s * norm)
        rhs = observable(landing)

        shape = predicted_shape(eps, s, T, N, norm)
        logger.debug(f"Comparison eps={eps:g} s={s:g} T={T:g} N={N}: gap {abs(lhs - rhs):.3e}")
        return StabilityComparison(
            eps=eps,
            s=s,
            T=T,
            N=N,
            lhs=lhs,
            rhs=rhs,
            gap=abs(lhs - rhs),
            bound=float("nan"),
            shape=shape,
            C1=float("nan"),
            gamma=GAMMA,
            norm_xi=norm,
            observable=observable.id,
            rho0=rho0.as_array().tolist(),
            track_time_shift=track_time_shift,
        )

    def sweep(
        self,
        points: list[ChartPhasePoint],
        eps_list: list[float],
        s_list: list[float],
        T_list: list[float],
        N_list: list[int],
        observable: Observable,
        track_time_shift: bool = True,
    ) -> list[StabilityComparison]:
        rows = [
            self.stability_comparison(rho, eps, s, T, N, observable, track_time_shift)
            for rho in points
            for T in sorted(T_list)
            for s in sorted(s_list)
            for N in sorted(N_list)
            for eps in sorted(eps_list, reverse=True)
        ]
        return fit_constant(rows)


def predicted_shape(eps: float, s: float, T: float, N: int, norm: float = 1.0, gamma: float = GAMMA) -> float:
    growth = np.exp(T * norm)
    return float(eps * T + eps ** (1.0 + gamma) * growth + s + s ** (N + 1) * eps * growth)


def fit_constant(rows: list[StabilityComparison]) -> list[StabilityComparison]:
    """Least-squares C1 through the origin, gap ~ C1 shape, written back into every row."""
    shapes = np.array([r.shape for r in rows])
    gaps = np.array([r.gap for r in rows])
    denom = float(shapes @ shapes)
    C1 = float(shapes @ gaps / denom) if denom > 0 else 0.0
    logger.info(f"Fitted C1 = {C1:.4g} over {len(rows)} comparisons")
    return [r.model_copy(update={"C1": C1, "bound": C1 * r.shape}) for r in rows]


def gap_slope(rows: list[StabilityComparison]) -> float | None:
    """log-log slope of the mean gap against eps; None while a mean gap vanishes."""
    eps = sorted({r.eps for r in rows})
    means = np.array([np.mean([r.gap for r in rows if r.eps == e]) for e in eps])
    if len(eps) < 2 or np.any(means <= 0.0):
        return None
    return float(stats.linregress(np.log(eps), np.log(means)).slope)


def _transverse(g: GroupElement, h: GroupElement) -> float:
    _, stable, unstable = frame_coefficients(algebra_log(g, h))
    return float(np.hypot(stable, unstable))

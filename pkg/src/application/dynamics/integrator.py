from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from loguru import logger
from scipy.integrate import solve_ivp

from src.domain.config import IntegratorConfig
from src.domain.errors import EnergyDriftExceeded, FlowTimeOverflow, NegativeRadicand
from src.domain.hyperbolic import (
    FLOW_GENERATOR,
    SQRT2,
    STABLE_GENERATOR,
    UNSTABLE_GENERATOR,
    ChartPhasePoint,
    GroupElement,
    chart_arrays,
    geodesic_flow,
    to_chart,
    unit_element,
)
from src.domain.potential import PotentialField

MAX_TRAJECTORY_TIME = 50.0
MAX_REDUCTIONS = 10_000


def transport_chart(point: ChartPhasePoint, gamma: np.ndarray) -> ChartPhasePoint:
    """Push (z, p) through the Moebius map gamma; the covector picks up conj(cz + d)^2."""
    a, b, c, d = np.asarray(gamma, dtype=float).ravel()
    z = point.z
    den = c * z + d
    moved = (a * z + b) / den
    p = complex(point.p_u, point.p_v) * np.conj(den) ** 2
    return ChartPhasePoint(moved.real, moved.imag, p.real, p.imag)


@dataclass(frozen=True, eq=False)
class TrajectoryResult:
    endpoint: ChartPhasePoint
    energy_drift: float
    steps: int
    transport: GroupElement = field(default_factory=GroupElement.identity)
    reductions: int = 0

    def lifted(self) -> ChartPhasePoint:
        """Endpoint on the continuous lift through the starting tile."""
        return transport_chart(self.endpoint, self.transport.inverse().m)

    def element(self) -> GroupElement:
        return unit_element(self.endpoint)


class FrameVector(NamedTuple):
    flow: float
    stable: float
    unstable: float

    def as_algebra(self) -> np.ndarray:
        return self.flow * FLOW_GENERATOR + self.stable * STABLE_GENERATOR + self.unstable * UNSTABLE_GENERATOR


class PerturbedFlowService:
    """Hamiltonian flow of p0 + eps V in the upper half-plane chart, and its energy-shell rescaling."""

    def __init__(self, potential: PotentialField, config: IntegratorConfig | None = None):
        self.potential = potential
        self.config = config or IntegratorConfig()
        group = potential.group
        self.group = group
        self.escape_cosh = float(np.cosh(group.domain_radius + potential.margin))

    def energy(self, point: ChartPhasePoint, eps: float) -> float:
        if eps == 0.0:
            return point.p0
        return point.p0 + eps * self.potential.eval_V(point.z)

    def _rhs(self, eps: float):
        def rhs(_, y):
            u, v, p_u, p_v = y
            v2 = v * v
            du, dv = v2 * p_u, v2 * p_v
            dp_u, dp_v = 0.0, -v * (p_u * p_u + p_v * p_v)
            if eps:
                _, gu, gv = self.potential.value_and_gradient(complex(u, v))
                dp_u -= eps * gu
                dp_v -= eps * gv
            return [du, dv, dp_u, dp_v]

        return rhs

    def _escape_event(self):
        bound = self.escape_cosh

        def escape(_, y):
            return bound - (1.0 + (y[0] ** 2 + (y[1] - 1.0) ** 2) / (2.0 * y[1]))

        escape.terminal = True
        escape.direction = -1
        return escape

    def _energy_series(self, ys: np.ndarray, eps: float) -> np.ndarray:
        u, v, p_u, p_v = ys
        kinetic = 0.5 * v**2 * (p_u**2 + p_v**2)
        if eps == 0.0:
            return kinetic
        return kinetic + eps * np.array([self.potential.eval_V(complex(a, b)) for a, b in zip(u, v)])

    def _reduce(self, point: ChartPhasePoint) -> tuple[ChartPhasePoint, np.ndarray]:
        root = np.sqrt(point.v)
        base = np.array([[root, point.u / root], [0.0, 1.0 / root]])
        _, gamma = self.group.reduce_matrices(base)
        return transport_chart(point, gamma), gamma

    def perturbed_flow(
        self, rho: ChartPhasePoint, eps: float, t: float, config: IntegratorConfig | None = None
    ) -> TrajectoryResult:
        cfg = config or self.config
        if eps < 0:
            raise ValueError(f"eps must be >= 0, got {eps}")
        if abs(t) > MAX_TRAJECTORY_TIME:
            raise FlowTimeOverflow(t, MAX_TRAJECTORY_TIME)
        if t == 0.0:
            return TrajectoryResult(endpoint=rho, energy_drift=0.0, steps=0)

        point, transport = rho, np.eye(2)
        start_cosh = 1.0 + (rho.u**2 + (rho.v - 1.0) ** 2) / (2.0 * rho.v)
        if start_cosh > self.escape_cosh:
            point, gamma = self._reduce(point)
            transport = gamma @ transport

        energy0 = self.energy(point, eps)
        rhs, escape = self._rhs(eps), self._escape_event()
        elapsed, steps, reductions, drift = 0.0, 0, 0, 0.0
        direction = np.sign(t)

        while direction * (t - elapsed) > 0:
            sol = solve_ivp(
                rhs,
                (elapsed, t),
                point.as_array(),
                method=cfg.method,
                rtol=cfg.rel_tol,
                atol=cfg.abs_tol,
                max_step=cfg.max_step,
                events=escape,
            )
            if sol.status < 0:
                raise RuntimeError(f"integration failed at t = {elapsed:.6g}: {sol.message}")
            steps += sol.t.size - 1
            checked = sol.y[:, :: cfg.energy_check_every]
            drift = max(drift, float(np.max(np.abs(self._energy_series(checked, eps) - energy0))))
            if drift > cfg.energy_tol:
                raise EnergyDriftExceeded(drift, cfg.energy_tol)

            point = ChartPhasePoint.from_array(sol.y[:, -1])
            elapsed = float(sol.t[-1])
            if sol.status == 1:
                reductions += 1
                if reductions > MAX_REDUCTIONS:
                    raise RuntimeError(f"more than {MAX_REDUCTIONS} reductions before t = {t}")
                point, gamma = self._reduce(point)
                transport = gamma @ transport

        final = abs(self.energy(point, eps) - energy0)
        drift = max(drift, final)
        if drift > cfg.energy_tol:
            raise EnergyDriftExceeded(drift, cfg.energy_tol)
        logger.debug(f"Trajectory eps={eps:g} t={t:g}: {steps} steps, {reductions} reductions, drift {drift:.2e}")
        return TrajectoryResult(
            endpoint=point,
            energy_drift=drift,
            steps=steps,
            transport=GroupElement(transport),
            reductions=reductions,
        )

    def _lift_to_shell(self, g: GroupElement, anchor: ChartPhasePoint, eps: float) -> ChartPhasePoint:
        """(theta^eps)^{-1}: scale the unit covector onto the energy level of the anchor."""
        point = to_chart(g)
        radicand = 2.0 * (self.energy(anchor, eps) - eps * self.potential.eval_V(point.z))
        if radicand <= 0:
            raise NegativeRadicand(radicand)
        return point.scaled(np.sqrt(radicand))

    def rescaled_trajectory(
        self,
        rho: GroupElement | ChartPhasePoint,
        anchor: ChartPhasePoint,
        eps: float,
        t: float,
        config: IntegratorConfig | None = None,
    ) -> TrajectoryResult:
        lifted = self._lift_to_shell(unit_element(rho), anchor, eps)
        result = self.perturbed_flow(lifted, eps, t / anchor.norm, config)
        return TrajectoryResult(
            endpoint=result.endpoint.normalized(),
            energy_drift=result.energy_drift,
            steps=result.steps,
            transport=result.transport,
            reductions=result.reductions,
        )

    def rescaled_flow(
        self,
        rho: GroupElement | ChartPhasePoint,
        anchor: ChartPhasePoint,
        eps: float,
        t: float,
        config: IntegratorConfig | None = None,
        lifted: bool = False,
    ) -> GroupElement:
        """phi^t = theta^eps o G_eps^{t/|xi_1|} o (theta^eps)^{-1} on the unit layer."""
        result = self.rescaled_trajectory(rho, anchor, eps, t, config)
        if lifted:
            return unit_element(result.lifted())
        return result.element()

    def rescaled_vector_field(
        self, rho: GroupElement | ChartPhasePoint, anchor: ChartPhasePoint, eps: float
    ) -> tuple[FrameVector, float]:
        """Y^eps on the frame (X0, Xs, Xu), and the speed factor c."""
        g = unit_element(rho)
        point = to_chart(g)
        anchor_kinetic = anchor.p0
        radicand = self.energy(anchor, eps) - eps * self.potential.eval_V(point.z)
        if radicand <= 0:
            raise NegativeRadicand(2.0 * radicand)
        c = float(np.sqrt(radicand / anchor_kinetic))
        if eps == 0.0:
            return FrameVector(c, 0.0, 0.0), c
        kappa = eps * self.potential.f_V(point) / (SQRT2 * c * anchor.norm**2)
        return FrameVector(c, -kappa, kappa), c

    def speed_bound(self, anchor: ChartPhasePoint, eps: float) -> float:
        """K eps with K = 2(|V|_inf + 1)/|xi_1|^2, the admissible |c - 1|."""
        return 2.0 * (self.potential.sup_bound + 1.0) / anchor.norm**2 * eps

    def reversibility_error(
        self, rho: ChartPhasePoint, eps: float, t: float, config: IntegratorConfig | None = None
    ) -> float:
        forward = self.perturbed_flow(rho, eps, t, config)
        back = self.perturbed_flow(forward.lifted(), eps, -t, config)
        return float(np.max(np.abs(back.lifted().as_array() - rho.as_array())))


def unperturbed_shift(rho: ChartPhasePoint, t: float) -> ChartPhasePoint:
    """G_0^t on the layer of rho: unit-speed geodesic flow run for time t |xi|."""
    norm = rho.norm
    moved = geodesic_flow(unit_element(rho), t * norm)
    u, v, p_u, p_v = chart_arrays(moved.m)
    return ChartPhasePoint(float(u), float(v), float(p_u), float(p_v)).scaled(norm)


def chart_deviation(a: ChartPhasePoint, b: ChartPhasePoint) -> float:
    return float(np.max(np.abs(a.as_array() - b.as_array())))


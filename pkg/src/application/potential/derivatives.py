from dataclasses import dataclass
from math import comb
from typing import NamedTuple

import numpy as np
from loguru import logger

from src.domain.errors import StencilUnstable
from src.domain.hyperbolic import (
    ChartPhasePoint,
    GroupElement,
    flow_matrices,
    matrices_from_chart,
    rotation_matrix,
    unit_element,
)
from src.domain.potential import Bump, PotentialField
from src.domain.reports import CriticalScanReport

MAX_ORDER = 6
ACCURACY = 8
DEFAULT_STEP = 0.02
DEFAULT_TOL = 1e-5
CHUNK = 4096


class DerivativeEstimate(NamedTuple):
    value: float
    error: float


def fornberg_weights(order: int, offsets: np.ndarray) -> np.ndarray:
    """Finite-difference weights for the order-th derivative at 0 on arbitrary offsets."""
    x = np.asarray(offsets, dtype=float)
    n = len(x)
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1, c4 = 1.0, x[0]
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, x[i]
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def stencil_half_width(order: int) -> int:
    points = 2 * ((order + 1) // 2) - 1 + ACCURACY
    return max(points // 2, 1)


@dataclass(frozen=True)
class StencilPlan:
    """Shared offsets for every order up to J at two Richardson levels (h and h/2)."""

    J: int
    step: float
    half_width: int
    fine_offsets: np.ndarray
    coarse_weights: np.ndarray
    fine_weights: np.ndarray

    @classmethod
    def build(cls, J: int, step: float) -> "StencilPlan":
        m = stencil_half_width(max(J, 1))
        coarse = step * np.arange(-m, m + 1)
        fine = 0.5 * step * np.arange(-2 * m, 2 * m + 1)
        coarse_w = np.stack([fornberg_weights(j, coarse) for j in range(J + 1)])
        fine_w = np.stack([fornberg_weights(j, fine[m : 3 * m + 1]) for j in range(J + 1)])
        return cls(J, step, m, fine, coarse_w, fine_w)

    def apply(self, samples: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """samples: (n, 4m + 1) on fine_offsets. Returns (value, error, coarse, fine), each (n, J + 1)."""
        m = self.half_width
        coarse = samples[:, ::2] @ self.coarse_weights.T
        fine = samples[:, m : 3 * m + 1] @ self.fine_weights.T
        gap = np.abs(fine - coarse)
        value = fine + (fine - coarse) / (2.0**ACCURACY - 1.0)
        roundoff = 10.0 * np.finfo(float).eps * np.abs(samples).max(axis=1, keepdims=True) * np.abs(self.fine_weights).sum(axis=1)
        value[:, 0] = samples[:, 2 * m]
        gap[:, 0] = 0.0
        error = gap / (2.0**ACCURACY - 1.0) + roundoff
        error[:, 0] = 0.0
        return value, error, coarse, fine


class FlowDerivativeService:
    """Derivatives of f_V along the exact geodesic flow, and the critical sets they define."""

    def __init__(self, potential: PotentialField, step: float = DEFAULT_STEP, tol: float = DEFAULT_TOL):
        self.potential = potential
        self.step = step
        self.tol = tol

    def _step_for(self, J: int) -> float:
        # wider spacing for high orders keeps the roundoff of h^-j in check
        return self.step * max(1.0, J / 2.0)

    def derivative_table(
        self,
        m: np.ndarray,
        J: int,
        weighted: bool = False,
        strict: bool = True,
        step: float | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        if not 0 <= J <= MAX_ORDER:
            raise ValueError(f"derivative order must be in [0, {MAX_ORDER}], got {J}")
        m = np.asarray(m, dtype=float).reshape(-1, 2, 2)
        plan = StencilPlan.build(J, step or self._step_for(J))
        values, errors = [], []
        for start in range(0, len(m), CHUNK):
            block = m[start : start + CHUNK]
            offsets = plan.fine_offsets
            shape = (len(block), len(offsets))
            moved = flow_matrices(np.broadcast_to(block[:, None], shape + (2, 2)), np.broadcast_to(offsets, shape))
            samples = self.potential.f_V_matrices(moved.reshape(-1, 2, 2)).reshape(len(block), len(offsets))
            if weighted:
                samples = samples * np.exp(-offsets)[None, :]
            value, error, coarse, fine = plan.apply(samples)
            if strict:
                bad = np.abs(fine - coarse) > 10.0 * self.tol * np.maximum(1.0, np.abs(value))
                bad[:, 0] = False
                if np.any(bad):
                    row, order = map(int, np.argwhere(bad)[0])
                    raise StencilUnstable(order, float(coarse[row, order]), float(fine[row, order]), self.tol)
            values.append(value)
            errors.append(error)
        return np.concatenate(values), np.concatenate(errors)

    def flow_derivative(
        self,
        rho: GroupElement | ChartPhasePoint,
        j: int,
        weighted: bool = False,
        step: float | None = None,
        strict: bool = True,
    ) -> DerivativeEstimate:
        """j-th derivative at s = 0 of f_V(G^s rho), or of e^{-s} f_V(G^s rho) when weighted."""
        g = unit_element(rho)
        value, error = self.derivative_table(g.m, j, weighted=weighted, strict=strict, step=step)
        return DerivativeEstimate(float(value[0, j]), float(error[0, j]))

    def binomial_recombination(self, rho: GroupElement | ChartPhasePoint, j: int, strict: bool = True) -> DerivativeEstimate:
        """(X0 - 1)^j f_V assembled from the unweighted family."""
        g = unit_element(rho)
        value, error = self.derivative_table(g.m, j, weighted=False, strict=strict)
        terms = np.array([comb(j, k) * (-1) ** (j - k) for k in range(j + 1)])
        return DerivativeEstimate(float(terms @ value[0]), float(np.abs(terms) @ error[0]))

    def in_K_VJ(self, rho: GroupElement | ChartPhasePoint, J: int, eta0: float) -> bool:
        if eta0 <= 0:
            raise ValueError(f"eta0 must be positive, got {eta0}")
        if self.potential.is_constant:
            return False
        value, _ = self.derivative_table(unit_element(rho).m, J, weighted=True, strict=False)
        return bool(np.max(np.abs(value[0])) >= eta0)

    def in_K_VJ_batch(self, m: np.ndarray, J: int, eta0: float) -> np.ndarray:
        value, _ = self.derivative_table(m, J, weighted=True, strict=False)
        return np.max(np.abs(value), axis=1) >= eta0

    def scan_grid(self, grid_size: int) -> tuple[np.ndarray, np.ndarray, tuple[float, float, float]]:
        """Domain grid in (u, log v, angle); returns (matrices, grid index, axis spacings)."""
        group = self.potential.group
        R = group.domain_radius
        us = np.linspace(-np.sinh(R), np.sinh(R), grid_size)
        logs = np.linspace(-R, R, grid_size)
        angles = np.arange(grid_size) * 2.0 * np.pi / grid_size

        U, L = np.meshgrid(us, logs, indexing="ij")
        v = np.exp(L)
        root = np.sqrt(v)
        zero = np.zeros_like(root)
        base = np.stack([np.stack([root, U / root], -1), np.stack([zero, 1.0 / root], -1)], -2)
        inside = group.contains(base)
        iu, il = np.nonzero(inside)

        mats = base[iu, il][:, None] @ rotation_matrix(angles / 2.0)[None]
        index = np.stack(
            [np.repeat(iu, grid_size), np.repeat(il, grid_size), np.tile(np.arange(grid_size), len(iu))], -1
        )
        du = float(us[1] - us[0])
        return mats.reshape(-1, 2, 2), index, (du, float(logs[1] - logs[0]), float(angles[1] - angles[0]))

    def scan_critical(self, J: int, grid_size: int, weighted: bool = False) -> CriticalScanReport:
        mats, index, spacing = self.scan_grid(grid_size)
        logger.info(f"Critical scan J={J} on {len(mats)} grid points")
        if self.potential.is_constant:
            scanned = np.zeros(len(mats))
        else:
            value, _ = self.derivative_table(mats, J, weighted=weighted, strict=False)
            scanned = np.max(np.abs(value), axis=1)

        cube = np.full((grid_size,) * 3, np.nan)
        cube[index[:, 0], index[:, 1], index[:, 2]] = scanned
        slopes = []
        for axis, step in enumerate(spacing):
            diff = np.abs(np.diff(cube, axis=axis)) / step
            if axis == 2:
                wrap = np.abs(cube[:, :, 0] - cube[:, :, -1]) / step
                diff = np.concatenate([diff, wrap[:, :, None]], axis=2)
            slopes.append(np.nanmax(diff) if np.any(np.isfinite(diff)) else 0.0)
        lipschitz = 2.0 * float(max(slopes))
        # h: the widest grid spacing
        h = float(max(spacing))
        margin = lipschitz * h

        best = int(np.argmin(scanned))
        iu, il, ia = index[best]
        R = self.potential.group.domain_radius
        argmin = [
            float(np.linspace(-np.sinh(R), np.sinh(R), grid_size)[iu]),
            float(np.exp(np.linspace(-R, R, grid_size)[il])),
            float(ia * 2.0 * np.pi / grid_size),
        ]
        minimum = float(scanned[best])
        verdict = "empty_evidence" if minimum > margin else "inconclusive"
        logger.success(f"Critical scan J={J}: min {minimum:.4e}, margin {margin:.4e} -> {verdict}")
        return CriticalScanReport(
            J=J,
            grid_size=grid_size,
            points=len(mats),
            weighted=weighted,
            min_over_grid=minimum,
            argmin=argmin,
            lipschitz=lipschitz,
            spacing=h,
            margin=margin,
            verdict=verdict,
        )

    def genericity_probe(self, extra: Bump, delta: float, J: int, grid_size: int) -> tuple[CriticalScanReport, CriticalScanReport]:
        """Scan V and V + delta W side by side."""
        base = self.scan_critical(J, grid_size)
        bumped = Bump(extra.u, extra.v, extra.radius, delta * extra.amplitude)
        other = FlowDerivativeService(self.potential.with_bumps([bumped]), self.step, self.tol)
        return base, other.scan_critical(J, grid_size)


def chart_direction(u: float, v: float, angle: float) -> GroupElement:
    """Unit point at u + iv whose direction makes the given angle with the vertical."""
    p_u, p_v = -np.sin(angle) / v, np.cos(angle) / v
    return GroupElement(matrices_from_chart(u, v, p_u, p_v))

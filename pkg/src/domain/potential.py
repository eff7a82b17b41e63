from dataclasses import dataclass

import numpy as np
from loguru import logger

from src.domain.errors import OffShellPoint
from src.domain.hyperbolic import SHELL_TOL, ChartPhasePoint, base_cosh_distance, chart_arrays
from src.domain.surface import FuchsianGroup


@dataclass(frozen=True)
class Bump:
    u: float
    v: float
    radius: float
    amplitude: float

    def __post_init__(self):
        if self.v <= 0 or self.radius <= 0:
            raise ValueError(f"bump needs v > 0 and radius > 0, got v={self.v}, radius={self.radius}")

    @property
    def center(self) -> complex:
        return complex(self.u, self.v)


@dataclass(frozen=True, eq=False)
class TranslateTable:
    centers: np.ndarray
    radii: np.ndarray
    amplitudes: np.ndarray

    def __len__(self) -> int:
        return len(self.centers)

    def subset(self, mask: np.ndarray) -> "TranslateTable":
        return TranslateTable(self.centers[mask], self.radii[mask], self.amplitudes[mask])


def _translate_table(bumps: tuple[Bump, ...], group: FuchsianGroup, reach: float) -> TranslateTable:
    """Every Gamma-translate of a bump centre lying within reach + radius of i."""
    centers, radii, amplitudes = [], [], []
    if bumps:
        elements = group.orbit_ball(reach + max(b.radius for b in bumps) + group.domain_radius)
        a, b, c, d = elements[:, 0, 0], elements[:, 0, 1], elements[:, 1, 0], elements[:, 1, 1]
        for bump in bumps:
            z = (a * bump.center + b) / (c * bump.center + d)
            keep = np.arccosh(1.0 + np.abs(z - 1j) ** 2 / (2.0 * z.imag)) <= reach + bump.radius
            centers.append(z[keep])
            radii.append(np.full(keep.sum(), bump.radius))
            amplitudes.append(np.full(keep.sum(), bump.amplitude))
    if not centers:
        return TranslateTable(np.zeros(0, dtype=complex), np.zeros(0), np.zeros(0))
    return TranslateTable(np.concatenate(centers), np.concatenate(radii), np.concatenate(amplitudes))


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Gamma-invariant sum of smooth bumps amplitude * exp(1 - 1/(1 - (d/radius)^2))."""

    bumps: tuple[Bump, ...]
    group: FuchsianGroup
    margin: float
    near: TranslateTable
    translate_list: TranslateTable

    @classmethod
    def from_bumps(cls, bumps: list[Bump], group: FuchsianGroup, margin: float = 2.0) -> "PotentialField":
        reduced = []
        for bump in bumps:
            root = np.sqrt(bump.v)
            base = np.array([[root, bump.u / root], [0.0, 1.0 / root]])
            m, _ = group.reduce_matrices(base)
            u, v, _, _ = chart_arrays(m)
            reduced.append(Bump(float(u), float(v), bump.radius, bump.amplitude))
        reduced = tuple(reduced)

        near = _translate_table(reduced, group, group.domain_radius + 0.01)
        full = _translate_table(reduced, group, group.domain_radius + margin)
        logger.debug(f"Potential with {len(reduced)} bumps: {len(near)} near / {len(full)} listed translates")
        return cls(bumps=reduced, group=group, margin=margin, near=near, translate_list=full)

    def with_bumps(self, extra: list[Bump]) -> "PotentialField":
        return PotentialField.from_bumps(list(self.bumps) + list(extra), self.group, self.margin)

    @property
    def is_constant(self) -> bool:
        return len(self.bumps) == 0

    @property
    def sup_bound(self) -> float:
        return float(sum(abs(b.amplitude) for b in self.bumps))

    @staticmethod
    def _evaluate(z: np.ndarray, table: TranslateTable) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if len(table) == 0:
            zero = np.zeros(z.shape)
            return zero, zero.copy(), zero.copy()

        u, v = z.real[:, None], z.imag[:, None]
        cu, cv = table.centers.real[None, :], table.centers.imag[None, :]
        delta = ((u - cu) ** 2 + (v - cv) ** 2) / (2.0 * v * cv)
        dist = np.arccosh(1.0 + delta)
        q = (dist / table.radii) ** 2
        inside = q < 1.0

        gap = np.where(inside, 1.0 - q, 1.0)
        profile = np.where(inside, table.amplitudes * np.exp(1.0 - 1.0 / gap), 0.0)
        d_profile = -profile / gap**2

        # d / sinh d -> 1 at the centre
        ratio = np.where(dist > 1e-8, dist / np.sinh(np.maximum(dist, 1e-300)), 1.0)
        dq_ddelta = 2.0 * ratio / table.radii**2
        ddelta_du = (u - cu) / (v * cv)
        ddelta_dv = (v - cv) / (v * cv) - delta / v

        value = profile.sum(axis=1)
        grad_u = (d_profile * dq_ddelta * ddelta_du).sum(axis=1)
        grad_v = (d_profile * dq_ddelta * ddelta_dv).sum(axis=1)
        return value, grad_u, grad_v

    def value_and_gradient(self, x: complex) -> tuple[float, float, float]:
        x = complex(x)
        cosh = 1.0 + abs(x - 1j) ** 2 / (2.0 * x.imag)
        if cosh <= np.cosh(self.group.domain_radius + self.margin):
            value, gu, gv = self._evaluate(np.array([x]), self.translate_list)
            return float(value[0]), float(gu[0]), float(gv[0])

        root = np.sqrt(x.imag)
        _, gamma = self.group.reduce_matrices(np.array([[root, x.real / root], [0.0, 1.0 / root]]))
        a, b, c, d = gamma.ravel()
        moved = (a * x + b) / (c * x + d)
        value, gu, gv = self._evaluate(np.array([moved]), self.near)
        # V_u - i V_v pulls back through the derivative 1/(cz + d)^2
        omega = complex(gu[0], -gv[0]) / (c * x + d) ** 2
        return float(value[0]), omega.real, -omega.imag

    def eval_V(self, x: complex) -> float:
        return self.value_and_gradient(x)[0]

    def grad_V(self, x: complex) -> tuple[float, float]:
        _, gu, gv = self.value_and_gradient(x)
        return gu, gv

    def f_V(self, rho: ChartPhasePoint) -> float:
        """g*(dV, xi_perp) with xi_perp the counterclockwise quarter turn of xi."""
        if abs(rho.p0 - 0.5) > SHELL_TOL:
            raise OffShellPoint(rho.p0, SHELL_TOL)
        gu, gv = self.grad_V(rho.z)
        return rho.v**2 * (-gu * rho.p_v + gv * rho.p_u)

    def local_fields(self, m: np.ndarray, table: TranslateTable) -> tuple[np.ndarray, np.ndarray]:
        """(V o pi, f_V) against an explicit translate table, with no reduction."""
        m = np.asarray(m, dtype=float).reshape(-1, 2, 2)
        u, v, p_u, p_v = chart_arrays(m)
        value, gu, gv = self._evaluate(u + 1j * v, table)
        return value, v**2 * (-gu * p_v + gv * p_u)

    def fields_on_matrices(self, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(V o pi, f_V) on a stack of group elements, after reduction to the domain."""
        m = np.asarray(m, dtype=float).reshape(-1, 2, 2)
        if self.is_constant:
            zero = np.zeros(len(m))
            return zero, zero.copy()
        far = base_cosh_distance(m) > np.cosh(self.group.domain_radius)
        if np.any(far):
            m = m.copy()
            m[far], _ = self.group.reduce_matrices(m[far])
        return self.local_fields(m, self.near)

    def f_V_matrices(self, m: np.ndarray) -> np.ndarray:
        return self.fields_on_matrices(m)[1]

    def V_matrices(self, m: np.ndarray) -> np.ndarray:
        return self.fields_on_matrices(m)[0]


DEFAULT_BUMPS = (
    Bump(u=0.3, v=1.4, radius=0.35, amplitude=1.0),
    Bump(u=-0.5, v=0.8, radius=0.5, amplitude=-0.7),
)


def default_potential(group: FuchsianGroup, margin: float = 2.0) -> PotentialField:
    return PotentialField.from_bumps(list(DEFAULT_BUMPS), group, margin)


def constant_potential(group: FuchsianGroup) -> PotentialField:
    return PotentialField.from_bumps([], group)

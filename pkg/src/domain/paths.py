"""Integrals of bump fields along flow lines, cut at the exact support crossings.

The bump profile is smooth but not analytic at the edge of its support, so a
fixed rule over a whole flow segment converges slowly. Each segment is split
into chunks short enough to be handled from one reduced anchor, every chunk is
cut where the base curve enters or leaves a translate's disk, and each
elementary piece goes to scipy's adaptive quadrature.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from loguru import logger
from scipy import integrate

from src.domain.hyperbolic import SQRT2, flow_matrices, unstable_matrices
from src.domain.potential import PotentialField, TranslateTable

QUAD_ABS = 1e-14
QUAD_REL = 1e-12
QUAD_LIMIT = 200
# base length of a chunk; anchors stay within half of it of every chunk point
CHUNK_LENGTH = 1.0

LocalIntegrand = Callable[[np.ndarray, TranslateTable], np.ndarray]
Weight = Callable[[float], float]


class PathKind(str, Enum):
    GEODESIC = "geodesic"
    REVERSED_GEODESIC = "reversed_geodesic"
    HOROCYCLE = "horocycle"
    PUSHED_RAY = "pushed_ray"


@dataclass(frozen=True, eq=False)
class FlowPath:
    """x -> g a_x, g a_{-x}, g n_{x / sqrt 2} (unit Sasaki speed) or g a_x n_shift."""

    kind: PathKind
    g: np.ndarray
    shift: float = 0.0

    @property
    def base_speed(self) -> float:
        match self.kind:
            case PathKind.HOROCYCLE:
                return 1.0 / SQRT2
            case PathKind.PUSHED_RAY:
                return float(np.sqrt(1.0 + self.shift**2))
        return 1.0

    def anchors(self, h: np.ndarray, x) -> np.ndarray:
        """The one-parameter part of the path, without the trailing n_shift."""
        x = np.asarray(x, dtype=float)
        stack = np.broadcast_to(h, x.shape + (2, 2))
        match self.kind:
            case PathKind.REVERSED_GEODESIC:
                return flow_matrices(stack, -x)
            case PathKind.HOROCYCLE:
                return unstable_matrices(stack, x / SQRT2)
        return flow_matrices(stack, x)

    def points(self, h: np.ndarray, x) -> np.ndarray:
        moved = self.anchors(h, x)
        if self.kind is PathKind.PUSHED_RAY:
            return unstable_matrices(moved, np.full(np.shape(x), self.shift))
        return moved

    def crossings(self, w: np.ndarray, cosh_radius: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Parameter interval (lo, hi) on which the base point of h P(x) lies in each disk.

        w holds the disk centres pulled back by h. Every case reduces to
        A y^2 - 2 B y + C < 0 in a curve coordinate y; empty intervals come
        back with lo = hi = 0.
        """
        u, v = w.real, w.imag
        size = np.abs(w) ** 2
        match self.kind:
            case PathKind.HOROCYCLE:
                A, B, C = size, u, 1.0 + size - 2.0 * cosh_radius * v
            case PathKind.PUSHED_RAY:
                p = complex(self.shift, 1.0) / (1.0 + self.shift**2)
                A = np.full_like(u, abs(p) ** 2)
                B = (p * np.conj(w)).real + (cosh_radius - 1.0) * p.imag * v
                C = size
            case _:
                A, B, C = np.ones_like(u), cosh_radius * v, size

        disc = B**2 - A * C
        hit = disc > 0.0
        if self.kind is not PathKind.HOROCYCLE:
            # y = e^{+-x} must be positive; both roots share the sign of B
            hit &= B > 0.0
        root = np.sqrt(np.where(hit, disc, 0.0))
        y_low = np.where(hit, (B - root) / A, 1.0)
        y_high = np.where(hit, (B + root) / A, 1.0)

        match self.kind:
            case PathKind.HOROCYCLE:
                lo, hi = SQRT2 * y_low, SQRT2 * y_high
            case PathKind.REVERSED_GEODESIC:
                lo, hi = -np.log(y_high), -np.log(y_low)
            case _:
                lo, hi = np.log(y_low), np.log(y_high)
        return np.where(hit, lo, 0.0), np.where(hit, hi, 0.0)


def pull_back(h: np.ndarray, z: np.ndarray) -> np.ndarray:
    """h^{-1} . z for a single element h."""
    (a, b), (c, d) = h
    return (d * z - b) / (-c * z + a)


def _smooth_integral(
    integrand: LocalIntegrand,
    path: FlowPath,
    low: float,
    high: float,
    weight: Weight | None,
    limit: int,
    epsabs: float,
    epsrel: float,
) -> float:
    table = TranslateTable(np.zeros(0, dtype=complex), np.zeros(0), np.zeros(0))

    def f(x: float) -> float:
        value = float(integrand(path.points(path.g, x), table)[0])
        return value if weight is None else value * weight(x)

    return float(integrate.quad(f, low, high, epsabs=epsabs, epsrel=epsrel, limit=limit)[0])


def path_integral(
    field: PotentialField | None,
    integrand: LocalIntegrand,
    path: FlowPath,
    low: float,
    high: float,
    weight: Weight | None = None,
    limit: int = QUAD_LIMIT,
    epsabs: float = QUAD_ABS,
    epsrel: float = QUAD_REL,
) -> float:
    """int_low^high weight(x) a(P(x)) dx for an integrand carried by the translates of field.

    A field of None marks an integrand that is smooth everywhere (the constant
    observable); it is integrated in one piece.
    """
    if high <= low:
        return 0.0
    if field is None:
        return _smooth_integral(integrand, path, low, high, weight, limit, epsabs, epsrel)
    table = field.translate_list
    if len(table) == 0:
        return 0.0

    step = min(CHUNK_LENGTH, field.margin) / path.base_speed
    chunks = max(1, int(np.ceil((high - low) / step)))
    edges = np.linspace(low, high, chunks + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    reduced, _ = field.group.reduce_matrices(path.points(path.g, mids))
    if path.kind is PathKind.PUSHED_RAY:
        reduced = unstable_matrices(reduced, np.full(chunks, -path.shift))
    cosh_radius = np.cosh(table.radii)

    total, pieces = 0.0, 0
    for k, mid in enumerate(mids):
        # h P(x - mid) is the path point at x, moved next to the domain
        h = reduced[k]
        lo, hi = path.crossings(pull_back(h, table.centers), cosh_radius)
        lo = np.maximum(lo, edges[k] - mid)
        hi = np.minimum(hi, edges[k + 1] - mid)
        hit = lo < hi
        if not np.any(hit):
            continue
        cuts = np.unique(np.concatenate([[edges[k] - mid, edges[k + 1] - mid], lo[hit], hi[hit]]))
        for a, b in zip(cuts[:-1], cuts[1:]):
            centre = 0.5 * (a + b)
            active = hit & (lo < centre) & (hi > centre)
            if not np.any(active):
                continue
            local = table.subset(active)

            def f(x: float, h=h, local=local, mid=mid) -> float:
                value = float(integrand(path.points(h, x), local)[0])
                return value if weight is None else value * weight(mid + x)

            total += integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)[0]
            pieces += 1
    logger.trace(f"{path.kind.value} integral over [{low:g}, {high:g}]: {chunks} chunks, {pieces} pieces")
    return float(total)

from dataclasses import dataclass, field
from math import factorial

import numpy as np
from numpy.polynomial import polynomial as npoly
from pydantic import BaseModel, Field

from src.domain.hyperbolic import SQRT2


class FlowPolynomial(BaseModel):
    """Horocycle reparametrization polynomial, P(0) = 0.

    coeffs[k] multiplies s^k. The stored polynomial carries the 1/sqrt(2) of
    beta_u so that e^{-s'} beta_u(G^{s'} rho) = beta_u(rho) - P(s) + O(s^{N+1});
    the Jacobian form drops that constant.
    """

    coeffs: list[float]
    derivatives: list[float] = Field(description="(X0 - 1)^p f_V at the normalized point, p < N")
    norm_xi: float
    scale: float = 1.0 / SQRT2

    @classmethod
    def from_derivatives(cls, derivatives: list[float], norm_xi: float, scale: float = 1.0 / SQRT2) -> "FlowPolynomial":
        coeffs = [0.0] + [
            scale * norm_xi ** (p + 1) / factorial(p + 1) * d for p, d in enumerate(derivatives)
        ]
        return cls(coeffs=coeffs, derivatives=list(derivatives), norm_xi=norm_xi, scale=scale)

    @property
    def N(self) -> int:
        return len(self.derivatives)

    def __call__(self, s):
        return npoly.polyval(s, self.coeffs)

    def derivative_coeffs(self) -> list[float]:
        return list(npoly.polyder(self.coeffs)) if self.N else [0.0]

    def derivative(self, s):
        return npoly.polyval(s, self.derivative_coeffs())

    def jacobian_coeffs(self) -> list[float]:
        """Coefficients norm_xi^{p+1}/p! (X0 - 1)^p f_V of P' without the beta normalization."""
        return [self.norm_xi ** (p + 1) / factorial(p) * d for p, d in enumerate(self.derivatives)] or [0.0]

    def jacobian(self, s):
        return npoly.polyval(s, self.jacobian_coeffs())


@dataclass(frozen=True)
class DiskSystem:
    centers: np.ndarray
    radii: np.ndarray
    H: float
    n: int
    roots: np.ndarray = field(repr=False)

    @property
    def total_radius(self) -> float:
        return float(np.sum(self.radii))

    @property
    def product_bound(self) -> float:
        return (self.H / np.e) ** self.n

    def covers(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if len(self.centers) == 0:
            return np.zeros(z.shape, dtype=bool)
        return np.any(np.abs(z[:, None] - self.centers[None, :]) <= self.radii[None, :], axis=1)

    def real_intervals(self, low: float, high: float) -> list[tuple[float, float]]:
        """Intersections of the disks with [low, high], merged."""
        pieces = []
        for c, r in zip(self.centers, self.radii):
            if abs(c.imag) >= r:
                continue
            half = float(np.sqrt(r**2 - c.imag**2))
            a, b = max(low, c.real - half), min(high, c.real + half)
            if a <= b:
                pieces.append((a, b))
        return merge_intervals(pieces)


def merge_intervals(pieces: list[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[tuple[float, float]] = []
    for a, b in sorted(pieces):
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


class ExceptionalCover(BaseModel):
    intervals: list[tuple[float, float]]
    total_length: float
    s0: float
    theta: float
    J: int
    dominant_index: int
    threshold: float
    method: str = "cartan"
    certified: bool = True
    c0: float = Field(description="total_length / s0^{1 + theta/(2(J+1))}")

    def contains(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        hit = np.zeros(s.shape, dtype=bool)
        for a, b in self.intervals:
            hit |= (s >= a) & (s <= b)
        return hit


class WindowSplit(BaseModel):
    b: float
    window_length: float
    components: list[tuple[float, float]]
    window_count: int
    coverage_ratio: float
    threshold: float

    def windows(self, limit: int | None = None):
        produced = 0
        for a, b in self.components:
            count = int(np.floor((b - a) / self.window_length))
            for k in range(count):
                if limit is not None and produced >= limit:
                    return
                start = a + k * self.window_length
                yield (start, start + self.window_length)
                produced += 1

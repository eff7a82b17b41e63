from itertools import combinations
from math import factorial

import numpy as np
from loguru import logger
from numpy.polynomial import polynomial as npoly
from scipy.linalg import companion

from src.domain.errors import NoDominantCoefficient, RootResidualError
from src.domain.polynomial import (
    DiskSystem,
    ExceptionalCover,
    FlowPolynomial,
    WindowSplit,
    merge_intervals,
)
from src.domain.reports import CartanCertificate, CoverCertificate

ROOT_RESIDUAL = 1e-10
MAX_S0 = 0.3
SCAN_POINTS = 100_000
COUNT_SLACK = 1e-12


def companion_roots(coeffs: list[float] | np.ndarray) -> np.ndarray:
    """Roots of sum coeffs[k] s^k from companion eigenvalues, gated on the relative residual."""
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=complex), "b")
    if len(coeffs) < 2:
        return np.zeros(0, dtype=complex)
    roots = np.linalg.eigvals(companion(coeffs[::-1]))
    scale = np.abs(coeffs) @ np.abs(roots[None, :]) ** np.arange(len(coeffs))[:, None]
    residual = np.abs(npoly.polyval(roots, coeffs)) / np.maximum(scale, np.finfo(float).tiny)
    worst = float(np.max(residual))
    if worst > ROOT_RESIDUAL:
        raise RootResidualError(worst)
    return roots


def _candidate_centers(points: np.ndarray) -> np.ndarray:
    """Centres of every minimal enclosing disk of one, two or three points."""
    centers = list(points)
    for a, b in combinations(points, 2):
        centers.append(0.5 * (a + b))
    for a, b, c in combinations(points, 3):
        d = 2.0 * (a.real * (b.imag - c.imag) + b.real * (c.imag - a.imag) + c.real * (a.imag - b.imag))
        if abs(d) < 1e-300:
            continue
        ux = (abs(a) ** 2 * (b.imag - c.imag) + abs(b) ** 2 * (c.imag - a.imag) + abs(c) ** 2 * (a.imag - b.imag)) / d
        uy = (abs(a) ** 2 * (c.real - b.real) + abs(b) ** 2 * (a.real - c.real) + abs(c) ** 2 * (b.real - a.real)) / d
        centers.append(complex(ux, uy))
    return np.array(centers, dtype=complex)


def cartan_disks(roots: list[complex] | np.ndarray, H: float) -> DiskSystem:
    """Greedy Cartan construction: peel off the largest k with k roots in a disk of radius kH/n, then double."""
    roots = np.asarray(roots, dtype=complex).ravel()
    n = len(roots)
    if H <= 0:
        raise ValueError(f"H must be positive, got {H}")
    if n < 1:
        raise ValueError("cartan_disks needs at least one root")

    remaining = roots.copy()
    centers, radii = [], []
    while len(remaining):
        candidates = _candidate_centers(remaining)
        distances = np.abs(candidates[:, None] - remaining[None, :])
        for k in range(len(remaining), 0, -1):
            radius = k * H / n
            counts = np.sum(distances <= radius * (1.0 + COUNT_SLACK), axis=1)
            hits = np.nonzero(counts >= k)[0]
            if len(hits):
                best = int(hits[0])
                chosen = np.argsort(distances[best], kind="stable")[:k]
                centers.append(candidates[best])
                radii.append(radius)
                remaining = np.delete(remaining, chosen)
                break

    radii = 2.0 * np.array(radii)
    return DiskSystem(centers=np.array(centers, dtype=complex), radii=radii, H=H, n=n, roots=roots)


def cartan_certificate(
    system: DiskSystem, samples: int, seed: int, instance: int = 0
) -> CartanCertificate:
    """Brute-force check of prod |z - z_i| > (H/e)^n on random points outside the disks."""
    rng = np.random.default_rng(seed)
    reach = float(np.max(np.abs(system.roots))) + 2.0 * system.H + 1.0
    bound = system.product_bound
    checked, violations, min_ratio = 0, 0, np.inf
    while checked < samples:
        z = rng.uniform(-reach, reach, samples) + 1j * rng.uniform(-reach, reach, samples)
        z = z[~system.covers(z)][: samples - checked]
        if not len(z):
            continue
        product = np.prod(np.abs(z[:, None] - system.roots[None, :]), axis=1)
        ratio = product / bound
        violations += int(np.sum(ratio <= 1.0))
        min_ratio = min(min_ratio, float(np.min(ratio)))
        checked += len(z)
    return CartanCertificate(
        instance=instance,
        degree=system.n,
        H=system.H,
        disks=len(system.radii),
        total_radius=system.total_radius,
        samples=checked,
        violations=violations,
        min_ratio=min_ratio,
    )


def coefficient_floor(eta0: float, J: int) -> float:
    return eta0 / (2.0 * factorial(J))


def dominant_index(coeffs: list[float], J: int, eta0: float) -> int:
    """First p <= J whose Jacobian coefficient clears eta0 / (2 J!)."""
    floor = coefficient_floor(eta0, J)
    for p, a in enumerate(coeffs[: J + 1]):
        if abs(a) >= floor:
            return p
    raise NoDominantCoefficient(J, floor)


def sublevel_intervals(coeffs: list[float], threshold: float, low: float, high: float) -> list[tuple[float, float]]:
    """Exact {s in [low, high] : |q(s)| <= threshold} from the roots of q -+ threshold."""
    breaks = [low, high]
    for shift in (-threshold, threshold):
        shifted = list(coeffs)
        shifted[0] += shift
        for r in companion_roots(shifted):
            if abs(r.imag) <= 1e-9 * max(1.0, abs(r)) and low < r.real < high:
                breaks.append(float(r.real))
    breaks = sorted(breaks)
    pieces = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if abs(npoly.polyval(0.5 * (a + b), coeffs)) <= threshold:
            pieces.append((a, b))
    # isolated touching points carry no length
    return merge_intervals(pieces)


def dense_scan(coeffs: list[float], threshold: float, s0: float, cover: list[tuple[float, float]]) -> bool:
    """No grid point at step s0 / 1e5 outside the cover lies in the sublevel set."""
    s = np.linspace(0.0, s0, SCAN_POINTS + 1)
    bad = np.abs(npoly.polyval(s, coeffs)) <= threshold
    for a, b in cover:
        bad &= ~((s >= a - 1e-15) & (s <= b + 1e-15))
    return not bool(np.any(bad))


def exceptional_cover(
    poly: FlowPolynomial, s0: float, theta: float, J: int, eta0: float = 0.05
) -> ExceptionalCover:
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    if not 0.0 < s0 <= MAX_S0:
        raise ValueError(f"s0 must lie in (0, {MAX_S0}], got {s0}")

    coeffs = poly.jacobian_coeffs()
    threshold = s0 ** (J + theta)
    p1 = dominant_index(coeffs, J, eta0)
    tail_max = float(sum(abs(a) * s0**p for p, a in enumerate(coeffs) if p > p1))
    method = "cartan"

    if p1 == 0:
        if abs(coeffs[0]) > threshold + tail_max:
            intervals = []
        else:
            intervals = sublevel_intervals(coeffs, threshold, 0.0, s0)
            method = "sublevel"
    else:
        leading = coeffs[p1]
        H = float(np.e * ((threshold + tail_max) / abs(leading)) ** (1.0 / p1))
        monic = np.array(coeffs[: p1 + 1]) / leading
        system = cartan_disks(companion_roots(monic), H)
        intervals = system.real_intervals(0.0, s0)

    total = float(sum(b - a for a, b in intervals))
    certified = dense_scan(coeffs, threshold, s0, intervals)
    if not certified:
        logger.warning(f"Dense scan found exceptional points outside the {method} cover (s0={s0:g})")
    return ExceptionalCover(
        intervals=intervals,
        total_length=total,
        s0=s0,
        theta=theta,
        J=J,
        dominant_index=p1,
        threshold=threshold,
        method=method,
        certified=certified,
        c0=total / s0 ** (1.0 + theta / (2.0 * (J + 1))),
    )


def split_good_intervals(poly: FlowPolynomial, b: float, theta: float, J: int, eta0: float = 0.05) -> WindowSplit:
    """Equal windows of length b^{1 + 2J + 2 theta} in the complement of the exceptional cover."""
    cover = exceptional_cover(poly, b, theta, J, eta0)
    components, cursor = [], 0.0
    for a, c in cover.intervals:
        if a > cursor:
            components.append((cursor, a))
        cursor = max(cursor, c)
    if cursor < b:
        components.append((cursor, b))

    length = b ** (1.0 + 2.0 * J + 2.0 * theta)
    count = sum(int(np.floor((c - a) / length)) for a, c in components)
    return WindowSplit(
        b=b,
        window_length=length,
        components=components,
        window_count=count,
        coverage_ratio=count * length / b,
        threshold=b ** (J + theta),
    )


def cover_certificate(cover: ExceptionalCover, instance: int) -> CoverCertificate:
    return CoverCertificate(
        instance=instance,
        s0=cover.s0,
        theta=cover.theta,
        J=cover.J,
        dominant_index=cover.dominant_index,
        intervals=[list(i) for i in cover.intervals],
        total_length=cover.total_length,
        c0=cover.c0,
        method=cover.method,
        certified=cover.certified,
    )


def random_root_sets(count: int, max_degree: int, seed: int) -> list[tuple[np.ndarray, float]]:
    """Random (roots, H) instances for the Cartan certificate batch."""
    rng = np.random.default_rng(seed)
    instances = []
    for _ in range(count):
        n = int(rng.integers(1, max_degree + 1))
        roots = rng.normal(size=n) + 1j * rng.normal(size=n)
        if rng.random() < 0.25:
            roots[: max(1, n // 2)] = roots[0]
        instances.append((roots, float(rng.uniform(0.1, 2.0))))
    return instances

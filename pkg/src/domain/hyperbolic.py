"""Unit cotangent bundle of the hyperbolic plane in the PSL(2, R) model.

A point of S*H is a unimodular 2x2 matrix g taken up to sign. Its base point
is g.i under the Moebius action and its direction is the tangent of the
geodesic t -> g a_t . i at t = 0, where a_t = diag(e^{t/2}, e^{-t/2}).
All flows act by right multiplication:

    geodesic            g a_t
    unstable horocycle  g [[1, 0], [s, 1]]
    stable horocycle    g [[1, s], [0, 1]]

Tangent vectors are written in left-invariant coordinates, i.e. as elements
of sl(2, R). The inner product <X, Y> = 2 tr(X Y^T) makes the frame
X0 = H/2, Xs = E/sqrt(2), Xu = F/sqrt(2) orthonormal; this is the Sasaki
metric on S*H.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import logm

from src.domain.errors import FlowTimeOverflow, OffShellPoint

DET_DRIFT = 1e-13
MAX_FLOW_TIME = 700.0
SHELL_TOL = 1e-9
SQRT2 = float(np.sqrt(2.0))

H_GEN = np.array([[1.0, 0.0], [0.0, -1.0]])
E_GEN = np.array([[0.0, 1.0], [0.0, 0.0]])
F_GEN = np.array([[0.0, 0.0], [1.0, 0.0]])

FLOW_GENERATOR = H_GEN / 2.0
STABLE_GENERATOR = E_GEN / SQRT2
UNSTABLE_GENERATOR = F_GEN / SQRT2


def canonicalize(m: np.ndarray) -> np.ndarray:
    """Renormalize det to 1 when it drifted and pick the sign with a > 0 (or a == 0, b > 0).

    Works on a single matrix or on a stack of shape (..., 2, 2).
    """
    m = np.array(m, dtype=float)
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    drift = np.abs(det - 1.0) > DET_DRIFT
    if np.any(drift):
        scale = np.where(drift, np.sqrt(np.abs(det)), 1.0)
        m = m / scale[..., None, None]
    a = m[..., 0, 0]
    b = m[..., 0, 1]
    flip = (a < 0) | ((a == 0) & (b < 0))
    return np.where(flip[..., None, None], -m, m)


def _check_time(t) -> None:
    worst = float(np.max(np.abs(t))) if np.ndim(t) else abs(float(t))
    if worst > MAX_FLOW_TIME:
        raise FlowTimeOverflow(worst, MAX_FLOW_TIME)


@dataclass(frozen=True, eq=False)
class GroupElement:
    m: np.ndarray

    def __post_init__(self):
        m = canonicalize(self.m)
        if m.shape != (2, 2):
            raise ValueError(f"GroupElement expects a 2x2 matrix, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "GroupElement":
        return cls(np.eye(2))

    @classmethod
    def from_entries(cls, a: float, b: float, c: float, d: float) -> "GroupElement":
        return cls(np.array([[a, b], [c, d]], dtype=float))

    def entries(self) -> tuple[float, float, float, float]:
        return tuple(float(x) for x in self.m.ravel())

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.m @ other.m)

    def inverse(self) -> "GroupElement":
        a, b, c, d = self.entries()
        return GroupElement.from_entries(d, -b, -c, a)

    def apply(self, z: complex) -> complex:
        a, b, c, d = self.entries()
        return (a * z + b) / (c * z + d)

    @property
    def base_point(self) -> complex:
        return self.apply(1j)

    def isclose(self, other: "GroupElement", tol: float = 1e-9) -> bool:
        return same_element(self.m, other.m, tol)


def same_element(m: np.ndarray, n: np.ndarray, tol: float = 1e-9) -> bool:
    """Entrywise equality up to the projective sign."""
    return bool(min(np.max(np.abs(m - n)), np.max(np.abs(m + n))) <= tol)


@dataclass(frozen=True)
class ChartPhasePoint:
    """Cotangent coordinates (u, v, p_u, p_v) over the upper half-plane."""

    u: float
    v: float
    p_u: float
    p_v: float

    def __post_init__(self):
        if not self.v > 0:
            raise ValueError(f"chart point needs v > 0, got v = {self.v}")

    @property
    def z(self) -> complex:
        return complex(self.u, self.v)

    @property
    def p0(self) -> float:
        return 0.5 * self.v**2 * (self.p_u**2 + self.p_v**2)

    @property
    def norm(self) -> float:
        return self.v * float(np.hypot(self.p_u, self.p_v))

    def scaled(self, k: float) -> "ChartPhasePoint":
        return ChartPhasePoint(self.u, self.v, k * self.p_u, k * self.p_v)

    def normalized(self) -> "ChartPhasePoint":
        return self.scaled(1.0 / self.norm)

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.p_u, self.p_v])

    @classmethod
    def from_array(cls, y) -> "ChartPhasePoint":
        return cls(float(y[0]), float(y[1]), float(y[2]), float(y[3]))


@dataclass(frozen=True, eq=False)
class AnosovFrame:
    """Flow, stable and unstable directions at a point, as elements of sl(2, R)."""

    at: GroupElement
    flow: np.ndarray
    stable: np.ndarray
    unstable: np.ndarray

    def pushforward(self, t: float) -> "AnosovFrame":
        return AnosovFrame(
            at=geodesic_flow(self.at, t),
            flow=pushforward(self.flow, t),
            stable=pushforward(self.stable, t),
            unstable=pushforward(self.unstable, t),
        )


def anosov_frame(g: GroupElement) -> AnosovFrame:
    return AnosovFrame(g, FLOW_GENERATOR.copy(), STABLE_GENERATOR.copy(), UNSTABLE_GENERATOR.copy())


def sasaki_inner(X: np.ndarray, Y: np.ndarray) -> float:
    return float(2.0 * np.trace(X @ Y.T))


def sasaki_norm(X: np.ndarray) -> float:
    return float(np.sqrt(max(sasaki_inner(X, X), 0.0)))


def frame_coefficients(X: np.ndarray) -> tuple[float, float, float]:
    """Coefficients of X on (X0, Xs, Xu)."""
    return (
        sasaki_inner(X, FLOW_GENERATOR),
        sasaki_inner(X, STABLE_GENERATOR),
        sasaki_inner(X, UNSTABLE_GENERATOR),
    )


def pushforward(X: np.ndarray, t: float) -> np.ndarray:
    """dG^t in left-invariant coordinates: X -> a_{-t} X a_t."""
    _check_time(t)
    scale = np.array([[1.0, np.exp(-t)], [np.exp(t), 1.0]])
    return X * scale


# batched flows on stacks of matrices, shape (n, 2, 2)

def flow_matrices(m: np.ndarray, t) -> np.ndarray:
    _check_time(t)
    t = np.asarray(t, dtype=float)
    out = np.array(m, dtype=float, copy=True)
    out[..., :, 0] *= np.asarray(np.exp(t / 2.0))[..., None]
    out[..., :, 1] *= np.asarray(np.exp(-t / 2.0))[..., None]
    return canonicalize(out)


def unstable_matrices(m: np.ndarray, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.array(m, dtype=float, copy=True)
    out[..., :, 0] += out[..., :, 1] * s[..., None]
    return canonicalize(out)


def stable_matrices(m: np.ndarray, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.array(m, dtype=float, copy=True)
    out[..., :, 1] += out[..., :, 0] * s[..., None]
    return canonicalize(out)


def geodesic_flow(g: GroupElement, t: float) -> GroupElement:
    return GroupElement(flow_matrices(g.m, t))


def horocycle_unstable(g: GroupElement, s: float) -> GroupElement:
    return GroupElement(unstable_matrices(g.m, s))


def horocycle_stable(g: GroupElement, s: float) -> GroupElement:
    return GroupElement(stable_matrices(g.m, s))


def unit_horocycle_unstable(g: GroupElement, tau: float) -> GroupElement:
    """Unstable horocycle at unit Sasaki speed."""
    return horocycle_unstable(g, tau / SQRT2)


def unit_horocycle_stable(g: GroupElement, tau: float) -> GroupElement:
    return horocycle_stable(g, tau / SQRT2)


def rotation_matrix(phi) -> np.ndarray:
    """Stack of [[cos phi, sin phi], [-sin phi, cos phi]]; turns directions by 2 phi counterclockwise."""
    phi = np.asarray(phi, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([np.stack([c, s], -1), np.stack([-s, c], -1)], -2)


def rotate_fiber(g: GroupElement, angle: float) -> GroupElement:
    return GroupElement(g.m @ rotation_matrix(angle / 2.0))


def chart_arrays(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    den = c * 1j + d
    z = (a * 1j + b) / den
    v = z.imag
    p = (1j / den**2) / v**2
    return z.real, v, p.real, p.imag


def matrices_from_chart(u, v, p_u, p_v) -> np.ndarray:
    """Inverse of chart_arrays; the covector only contributes its direction."""
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    w = v**2 * (np.asarray(p_u, dtype=float) + 1j * np.asarray(p_v, dtype=float))
    phi = (np.angle(w) - np.pi / 2.0) / 2.0
    root = np.sqrt(v)
    zero = np.zeros_like(root)
    upper = np.stack([np.stack([root, u / root], -1), np.stack([zero, 1.0 / root], -1)], -2)
    return canonicalize(upper @ rotation_matrix(phi))


def to_chart(g: GroupElement) -> ChartPhasePoint:
    u, v, p_u, p_v = chart_arrays(g.m)
    return ChartPhasePoint(float(u), float(v), float(p_u), float(p_v))


def from_chart(p: ChartPhasePoint) -> GroupElement:
    if abs(p.p0 - 0.5) > SHELL_TOL:
        raise OffShellPoint(p.p0, SHELL_TOL)
    return GroupElement(matrices_from_chart(p.u, p.v, p.p_u, p.p_v))


def perp_covector(p: ChartPhasePoint) -> ChartPhasePoint:
    """Rotate the covector a quarter turn counterclockwise in the conformal chart."""
    return ChartPhasePoint(p.u, p.v, -p.p_v, p.p_u)


def unstable_jacobian_growth(g: GroupElement, t: float) -> float:
    if t < 0:
        raise ValueError(f"unstable growth is defined for t >= 0, got t = {t}")
    # constant curvature: the factor does not depend on g
    return sasaki_norm(pushforward(UNSTABLE_GENERATOR, t)) / sasaki_norm(UNSTABLE_GENERATOR)


def hyperbolic_distance(z, w):
    z, w = np.asarray(z), np.asarray(w)
    arg = 1.0 + np.abs(z - w) ** 2 / (2.0 * z.imag * w.imag)
    return np.arccosh(np.maximum(arg, 1.0))


def base_cosh_distance(m: np.ndarray) -> np.ndarray:
    """cosh d(g.i, i) for a stack of unimodular matrices."""
    return 0.5 * np.sum(np.asarray(m) ** 2, axis=(-2, -1))


def algebra_log(g: GroupElement, h: GroupElement) -> np.ndarray:
    """log(g^{-1} h) in sl(2, R), for h close to g."""
    x = g.inverse().m @ h.m
    if np.trace(x) < 0:
        x = -x
    return np.real(logm(x))


def local_sasaki_distance(g: GroupElement, h: GroupElement) -> float:
    return sasaki_norm(algebra_log(g, h))


def unit_element(rho: "GroupElement | ChartPhasePoint") -> GroupElement:
    """Group element of the direction of rho (0-homogeneous in the covector)."""
    if isinstance(rho, GroupElement):
        return rho
    return GroupElement(matrices_from_chart(rho.u, rho.v, rho.p_u, rho.p_v))

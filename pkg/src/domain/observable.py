from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.domain.hyperbolic import ChartPhasePoint, GroupElement, matrices_from_chart
from src.domain.potential import Bump, PotentialField, TranslateTable

# pullback of this bump is the default test observable: wide enough to take
# varied values over most of the surface
OBSERVABLE_BUMP = Bump(u=0.2, v=1.1, radius=1.2, amplitude=1.0)


class ObservableKind(str, Enum):
    CONSTANT = "constant"
    V_PULLBACK = "V_pullback"
    F_V = "f_V_func"
    PRODUCT = "product"
    CUSTOM_BUMP = "custom_bump"


@dataclass(frozen=True, eq=False)
class Observable:
    """Gamma-invariant function on S*M, extended 0-homogeneously off the unit layer."""

    kind: ObservableKind
    potential: PotentialField
    auxiliary: PotentialField | None = None

    @property
    def id(self) -> str:
        return self.kind.value

    @property
    def field(self) -> PotentialField | None:
        """The bump field the observable is built from; None for the constant."""
        match self.kind:
            case ObservableKind.CONSTANT:
                return None
            case ObservableKind.CUSTOM_BUMP:
                return self.auxiliary
        return self.potential

    def _combine(self, value: np.ndarray, f: np.ndarray) -> np.ndarray:
        match self.kind:
            case ObservableKind.V_PULLBACK | ObservableKind.CUSTOM_BUMP:
                return value
            case ObservableKind.F_V:
                return f
            case ObservableKind.PRODUCT:
                return value * f
        raise ValueError(f"Unknown observable kind {self.kind}")

    def on_matrices(self, m: np.ndarray) -> np.ndarray:
        m = np.asarray(m, dtype=float).reshape(-1, 2, 2)
        if self.kind is ObservableKind.CONSTANT:
            return np.ones(len(m))
        return self._combine(*self.field.fields_on_matrices(m))

    def on_local(self, m: np.ndarray, table: TranslateTable) -> np.ndarray:
        """Values on elements already next to the domain, against the given translates."""
        m = np.asarray(m, dtype=float).reshape(-1, 2, 2)
        if self.kind is ObservableKind.CONSTANT:
            return np.ones(len(m))
        return self._combine(*self.field.local_fields(m, table))

    def __call__(self, g: GroupElement) -> float:
        return float(self.on_matrices(g.m)[0])

    def on_chart(self, p: ChartPhasePoint) -> float:
        return float(self.on_matrices(matrices_from_chart(p.u, p.v, p.p_u, p.p_v))[0])


def build_observable(kind: str | ObservableKind, potential: PotentialField) -> Observable:
    kind = ObservableKind(kind)
    auxiliary = None
    if kind is ObservableKind.CUSTOM_BUMP:
        auxiliary = PotentialField.from_bumps([OBSERVABLE_BUMP], potential.group, potential.margin)
    return Observable(kind=kind, potential=potential, auxiliary=auxiliary)

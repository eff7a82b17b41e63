from typing import Literal

from pydantic import Field

from src.infrastructure.storage.records import BaseRecord


class SurfaceInfo(BaseRecord):
    __artifact__ = "surface_info"

    surface: str
    generators: list[list[float]]
    traces: list[float]
    relation_residual: float
    domain_radius: float
    word_cache_size: int
    samples: int
    acceptance: float
    area_estimate: float
    area_exact: float


class InvariantCheck(BaseRecord):
    __artifact__ = "flow_check"

    invariant: str
    value: float
    threshold: float
    passed: bool


class CriticalScanReport(BaseRecord):
    __artifact__ = "critical_scan"

    J: int
    grid_size: int
    points: int
    weighted: bool = False
    min_over_grid: float = Field(description="min over the grid of max_{j<=J} |X0^j f_V|")
    argmin: list[float] = Field(description="(u, v, angle) of the grid minimum")
    lipschitz: float
    spacing: float
    margin: float
    verdict: Literal["empty_evidence", "inconclusive"]


class StabilityComparison(BaseRecord):
    __artifact__ = "stability_sweep"

    eps: float
    s: float
    T: float
    N: int
    lhs: float
    rhs: float
    gap: float
    bound: float
    shape: float
    C1: float
    gamma: float = 0.45
    norm_xi: float
    observable: str
    rho0: list[float]
    track_time_shift: bool = True


class CartanCertificate(BaseRecord):
    __artifact__ = "cartan_disks"

    instance: int
    degree: int
    H: float
    disks: int
    total_radius: float
    samples: int
    violations: int
    min_ratio: float = Field(description="min over outside samples of prod|z - z_i| / (H/e)^n")


class CoverCertificate(BaseRecord):
    __artifact__ = "exceptional_covers"

    instance: int
    s0: float
    theta: float
    J: int
    dominant_index: int
    intervals: list[list[float]]
    total_length: float
    c0: float
    method: str
    certified: bool


class EquidistReport(BaseRecord):
    __artifact__ = "equidistribution"

    estimate: float
    liouville_ref: float
    deviation: float
    mc_error: float
    eps: float
    eps0: float
    b: float
    T: float
    c: float
    nu1: float
    nu2: float
    rho0: list[float]
    observable: str
    n_quad: int
    seed: int
    in_K: bool
    max_energy_drift: float
    control: bool = False


class BirkhoffRow(BaseRecord):
    __artifact__ = "unique_ergodicity"

    T: float
    point: int
    rho: list[float]
    estimate: float
    liouville_ref: float
    deviation: float
    mc_error: float
    envelope: float = Field(description="worst deviation over the batch at horizons >= T")


class MixingRow(BaseRecord):
    __artifact__ = "mixing"

    s: float
    b: float
    point: int
    rho: list[float]
    direct: float
    birkhoff_form: float
    discrepancy: float
    liouville_ref: float
    deviation: float
    mc_error: float


class TrendRecord(BaseRecord):
    __artifact__ = "trend_verdicts"

    experiment: str
    subject: str = Field(description="batch mean, one start point, or the control contrast")
    parameters: list[float]
    values: list[float]
    errors: list[float]
    decreasing: bool
    steps_down: int
    steps: int
    slope: float | None = Field(default=None, description="log-log slope of values against parameters")
    required: bool
    passed: bool

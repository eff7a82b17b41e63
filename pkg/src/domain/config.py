from typing import Any, Literal

from pydantic import BaseModel, Field, field_validator, model_validator

from src.domain.errors import ConfigConstraintError
from src.domain.observable import ObservableKind
from src.infrastructure.settings import settings


class IntegratorConfig(BaseModel):
    order: Literal[5, 8] = 8
    rel_tol: float = Field(default=1e-12, gt=0)
    abs_tol: float = Field(default=1e-13, gt=0)
    max_step: float = Field(default=0.1, gt=0, le=0.1)
    energy_check_every: int = Field(default=1, ge=1)
    energy_tol: float = Field(default=1e-9, gt=0)

    @field_validator("order", mode="before")
    @classmethod
    def _order_from_text(cls, value: Any) -> Any:
        return int(value) if isinstance(value, str) else value

    @property
    def method(self) -> str:
        return "DOP853" if self.order == 8 else "RK45"

    def tightened(self, factor: float = 0.5) -> "IntegratorConfig":
        return self.model_copy(update={"rel_tol": self.rel_tol * factor, "abs_tol": self.abs_tol * factor})


INTEGRATOR_KEYS = {
    "integrator_order": "order",
    "rel_tol": "rel_tol",
    "abs_tol": "abs_tol",
    "max_step": "max_step",
    "energy_check_every": "energy_check_every",
    "energy_tol": "energy_tol",
}


class ExperimentConfig(BaseModel):
    surface: Literal["bolza"] = "bolza"
    group_file: str | None = None
    potential_file: str | None = None
    observable: ObservableKind = ObservableKind.CUSTOM_BUMP

    eps0_list: list[float] = [1e-2, 3e-3, 1e-3]
    c: float = 1.2
    nu1: float = 0.0
    nu2: float = 0.1
    J: int = Field(default=0, ge=0, le=6)
    eta0: float = Field(default=0.05, gt=0)
    N: int = Field(default=3, ge=1, le=6)
    theta: float = Field(default=0.5, gt=0, lt=1)
    n_quad: int = Field(default=64, ge=2)
    n_initial: int = Field(default=10, ge=1)
    liouville_samples: int = Field(default=100_000, ge=1000)

    integrator: IntegratorConfig = IntegratorConfig()

    stability_eps: list[float] = [1e-2, 3e-3, 1e-3]
    stability_s: list[float] = [0.05]
    stability_T: list[float] = [6.0]
    stability_N: list[int] = [3]

    birkhoff_T: list[float] = [1e2, 1e3, 1e4]
    birkhoff_points: int = Field(default=4, ge=1)
    mixing_b: float = Field(default=0.1, gt=0, le=1)
    mixing_s: list[float] = [1e2, 1e3, 1e4]

    scan_J: int = Field(default=3, ge=0, le=6)
    scan_grid: int = Field(default=64, ge=4)

    cartan_instances: int = Field(default=200, ge=1)
    cartan_samples: int = Field(default=100_000, ge=100)
    cover_instances: int = Field(default=50, ge=1)
    cover_s0: float = Field(default=0.1, gt=0, le=0.3)
    cover_J: int = Field(default=1, ge=0)
    cover_eta0: float = Field(default=0.05, gt=0)

    seed: int = settings.SEED
    output_dir: str = settings.OUTPUT_DIR

    @field_validator("eps0_list", "stability_eps")
    @classmethod
    def _positive_eps(cls, values: list[float]) -> list[float]:
        if not values or any(not 0 < v < 1 for v in values):
            raise ValueError(f"epsilon grids must be non-empty with values in (0, 1), got {values}")
        return values

    @model_validator(mode="after")
    def _dynamics_regime(self) -> "ExperimentConfig":
        load = self.nu1 + (3 * self.J + 1) * self.nu2
        if self.nu1 < 0:
            raise ConfigConstraintError("nu1 >= 0", f"nu1 = {self.nu1}")
        if self.nu2 <= 0:
            raise ConfigConstraintError("nu2 > 0", f"nu2 = {self.nu2}")
        if load >= 0.5:
            raise ConfigConstraintError("nu1 + (3J+1) nu2 < 1/2", f"got {load:.6g}")
        if self.c >= 1.5:
            raise ConfigConstraintError("c < 3/2", f"c = {self.c}")
        if self.c <= 1.0 + load:
            raise ConfigConstraintError("1 + nu1 + (3J+1) nu2 < c", f"c = {self.c} <= {1.0 + load:.6g}")
        return self

    @classmethod
    def from_flat(cls, values: dict[str, Any]) -> "ExperimentConfig":
        data = dict(values)
        integrator = {INTEGRATOR_KEYS[k]: data.pop(k) for k in list(data) if k in INTEGRATOR_KEYS}
        if integrator:
            data["integrator"] = integrator
        return cls(**data)

    def quick(self) -> "ExperimentConfig":
        """Reduced grids for CI runs."""
        return self.model_copy(
            update={
                "n_initial": 2,
                "n_quad": 16,
                "liouville_samples": 20_000,
                "stability_eps": self.stability_eps[:3],
                "birkhoff_T": [1e2, 1e3],
                "birkhoff_points": 2,
                "mixing_s": [1e2, 1e3],
                "scan_grid": 12,
                "cartan_instances": 20,
                "cartan_samples": 10_000,
                "cover_instances": 5,
            }
        )

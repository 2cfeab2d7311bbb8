import typing

import pydantic

from lab.dollard_qm import LongRangePotential
from lab.fock import GridRecipe
from lab.nrqed import ChargeProfile
from lab.softphoton import ChargedLeg, ProcessCurrents

__all__ = (
    "GridSection",
    "ModelSection",
    "ScanSection",
    "DollardSection",
    "LegSection",
    "YfsSection",
    "OutputSection",
    "RunConfig",
    "ResultManifest",
)

PositiveFloat = typing.Annotated[float, pydantic.Field(gt=0.0)]


class Section(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid", frozen=True)


class GridSection(Section):
    dimension: typing.Literal[1, 3] = 3
    ir_cutoff: PositiveFloat = 0.01
    uv_cutoff: PositiveFloat = 1.0
    points_per_decade: int = pydantic.Field(1, ge=1)
    directions: str = "axes"
    polarized: bool = False
    max_total: int = pydantic.Field(2, ge=0)
    max_per_mode: int = pydantic.Field(2, ge=1)

    @pydantic.model_validator(mode="after")
    def _cutoffs(self):
        if self.ir_cutoff >= self.uv_cutoff:
            raise ValueError(f"ir_cutoff ({self.ir_cutoff}) must be below uv_cutoff ({self.uv_cutoff})")
        return self

    def recipe(self) -> GridRecipe:
        return GridRecipe(
            self.dimension, self.ir_cutoff, self.uv_cutoff, self.points_per_decade, self.directions, self.polarized
        )


class ModelSection(Section):
    variant: typing.Literal["scalar", "transversal"] = "scalar"
    mass: PositiveFloat = 1.0
    coupling: float = 0.0
    profile: typing.Literal["gaussian", "flat", "dipole"] = "gaussian"
    profile_amplitude: float = 1.0
    profile_scale: PositiveFloat = 1.0
    a_squared: bool = False

    def charge_profile(self) -> ChargeProfile:
        return ChargeProfile(self.profile, self.profile_amplitude, self.profile_scale)


class ScanSection(Section):
    momenta: list[list[float]] = [[0.0, 0.0, 0.0]]
    ir_schedule: list[PositiveFloat] = []
    times: list[float] = [1.0, 2.0, 4.0, 8.0, 16.0]
    tol: PositiveFloat = 1e-10
    velocity_step: PositiveFloat | None = None
    leak_bound: PositiveFloat = 0.05

    @pydantic.field_validator("ir_schedule")
    @classmethod
    def _decreasing(cls, value: list[float]):
        if any(b >= a for a, b in zip(value[:-1], value[1:])):
            raise ValueError("the schedule must be strictly decreasing")
        return value


class DollardSection(Section):
    form: typing.Literal["coulomb_3d_radial", "regularized_coulomb_1d", "power_law"] = "regularized_coulomb_1d"
    strength: float = 0.2
    exponent: PositiveFloat = 1.0
    regulator: PositiveFloat = 1.0
    points: int = pydantic.Field(4096, ge=8)
    extent: PositiveFloat = 4096.0
    dt: PositiveFloat = 0.1
    mass: PositiveFloat = 1.0
    x0: float = 0.0
    p0: float = 1.0
    width: PositiveFloat = 10.0
    times: list[PositiveFloat] = [32.0, 64.0, 128.0, 256.0, 512.0]
    mass_loss_bound: PositiveFloat = 1e-3

    def potential(self) -> LongRangePotential:
        return LongRangePotential(self.form, self.strength, self.exponent, self.regulator)


class LegSection(Section):
    velocity: tuple[float, float, float]
    charge: float
    direction: typing.Literal["in", "out"] = "out"

    def leg(self) -> ChargedLeg:
        return ChargedLeg.from_velocity(self.velocity, self.charge, self.direction)


class YfsSection(Section):
    legs: list[LegSection] = []
    sigma0: PositiveFloat = 1.0
    resolution: PositiveFloat = 0.1
    uv_cutoff: PositiveFloat = 1.0
    ir_cutoffs: list[PositiveFloat] = [1e-3, 1e-4, 1e-5]
    n_max: int = pydantic.Field(40, ge=0)
    points_per_decade: int = pydantic.Field(2, ge=1)
    directions: str = "gauss8"
    scales: list[PositiveFloat] = [0.125, 0.0625, 0.03125, 0.015625, 0.0078125]
    profile_width: PositiveFloat = 0.1

    def process(self) -> ProcessCurrents:
        return ProcessCurrents(tuple(leg.leg() for leg in self.legs), self.sigma0)


class OutputSection(Section):
    directory: str = "results"
    formats: list[typing.Literal["csv", "svg"]] = ["csv"]


class RunConfig(Section):
    grid: GridSection = GridSection()
    model: ModelSection = ModelSection()
    scan: ScanSection = ScanSection()
    dollard: DollardSection = DollardSection()
    yfs: YfsSection = YfsSection()
    output: OutputSection = OutputSection()
    seed: int = 0
    threads: int = pydantic.Field(1, ge=1)


class ResultManifest(pydantic.BaseModel):
    config_hash: str
    command: str
    files: list[str]
    rows_ok: int
    rows_failed: int
    wall_clock: float
    versions: dict[str, str]

"""Fiber-model helpers shared by the nrqed-driven commands."""

import numpy as np

from common.const import *
from common.models import RunConfig
from lab import nrqed
from lab.errors import BadArgument, CapacityError
from lab.fock import ModeGrid, count_states

__all__ = ("fiber_params", "scan_momentum", "check_capacity")


def fiber_params(config: RunConfig) -> nrqed.NelsonFiberParams:
    grid = ModeGrid.build(config.grid.recipe())
    return nrqed.NelsonFiberParams(
        grid,
        mass=config.model.mass,
        coupling=config.model.coupling,
        profile=config.model.charge_profile(),
        variant=config.model.variant,
        max_total=config.grid.max_total,
        max_per_mode=config.grid.max_per_mode,
        a_squared=config.model.a_squared,
        hard_limit=METADATA["basis_hard_limit"],
    )


def scan_momentum(config: RunConfig) -> np.ndarray:
    if not config.scan.momenta:
        raise BadArgument("scan.momenta is empty.")
    p = np.asarray(config.scan.momenta[0], dtype=float)
    if p.shape != (config.grid.dimension,):
        raise BadArgument(f"Momentum {p.tolist()} is not a {config.grid.dimension}-vector.")
    return p


def check_capacity(params: nrqed.NelsonFiberParams, ir_cutoff: float):
    grid = params.grid.with_ir_cutoff(ir_cutoff)
    size = count_states(len(grid), params.max_total, params.max_per_mode)
    if size > params.hard_limit:
        raise CapacityError(
            f"Basis at λ={ir_cutoff} would hold {size} states (limit {params.hard_limit}).",
            size=size,
            limit=params.hard_limit,
            params={"modes": len(grid), "max_total": params.max_total, "max_per_mode": params.max_per_mode},
        )

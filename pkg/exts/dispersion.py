import functools
import math
from pathlib import Path

import numpy as np

import common.utils as utils
from common.models import RunConfig
from exts._fiber import check_capacity, fiber_params
from lab import nrqed
from lab.errors import BadArgument, ConvergenceError


def dispersion_point(params: nrqed.NelsonFiberParams, p: np.ndarray, step: float, tol: float, seed: int):
    """E(p), its residual, the Richardson group velocity and the order-e² oracle."""
    stencil = nrqed.velocity_stencil(p, step, richardson=True)
    table = nrqed.dispersion(params, stencil, tol=tol, seed=seed, step=step)
    if table.failures[0] is not None:
        raise ConvergenceError(
            f"Ground state at p={p.tolist()} failed: {table.failures[0]}", best_residual=math.nan, iterations=0
        )
    velocity, bound = nrqed.richardson_velocity(table, p)
    return table.energies[0], table.residuals[0], velocity, bound, nrqed.second_order_shift(params, p)


class Dispersion(utils.Command):
    name = "dispersion"
    help = "Fiber ground-state energy E(p) and group velocity over a momentum list."

    def prepare(self, config: RunConfig):
        params = fiber_params(config)
        check_capacity(params, params.grid.ir_cutoff)
        momenta = [np.asarray(p, dtype=float) for p in config.scan.momenta]
        if not momenta:
            raise BadArgument("scan.momenta is empty.")
        for p in momenta:
            if p.shape != (config.grid.dimension,):
                raise BadArgument(f"Momentum {p.tolist()} is not a {config.grid.dimension}-vector.")
        step = config.scan.velocity_step or 1e-2 * config.grid.uv_cutoff
        return params, momenta, step

    def compute(self, config: RunConfig, prepared, out_dir: Path) -> utils.CommandOutcome:
        params, momenta, step = prepared
        d = config.grid.dimension
        tasks = [
            functools.partial(dispersion_point, params, p, step, config.scan.tol, config.seed) for p in momenta
        ]
        results = utils.scan_executor(tasks, config.threads)

        header = (
            *(f"p{mu}" for mu in range(d)), "E", "residual", *(f"v{mu}" for mu in range(d)), "v_bound", "E_rs2"
        )
        rows = []
        for p, result in zip(momenta, results):
            if result.ok:
                energy, residual, velocity, bound, shift = result.value
                rows.append((*p, energy, residual, *velocity, bound, shift))
            else:
                rows.append((*p, *([math.nan] * (d + 4))))

        files = [utils.write_csv(out_dir / "dispersion.csv", header, rows)]
        if self.wants_svg(config):
            table = np.array(rows, dtype=float)
            files.append(
                utils.write_svg(
                    out_dir / "dispersion.svg",
                    {"E(p)": (np.linalg.norm(table[:, :d], axis=1), table[:, d])},
                    "|p|",
                    "E(p)",
                )
            )
        files += self.record_failures(out_dir, [f"p={p.tolist()}" for p in momenta], results)

        ok = sum(r.ok for r in results)
        return utils.CommandOutcome(files, ok, len(results) - ok)


def setup(lab_app):
    Dispersion(lab_app)

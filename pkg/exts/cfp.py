import math
from pathlib import Path

import numpy as np

import common.utils as utils
from common.models import RunConfig
from exts._fiber import check_capacity, fiber_params, scan_momentum
from lab import nrqed
from lab.errors import BadArgument

LADDER_HEADER = ("t", "cfp_residual", "bdg_residual", "cfp_cloud_norm", "bdg_cloud_norm", "cfp_leakage", "bdg_leakage")


def ladder_columns(vectors: list[nrqed.ApproximatingVector]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # distance to the next rung; the last rung has none
    residuals = np.append(nrqed.ladder_residuals(vectors), math.nan)
    return residuals, np.array([v.cloud_norm for v in vectors]), np.array([v.leakage for v in vectors])


class Cfp(utils.Command):
    name = "cfp"
    help = "Convergence of the CFP and BDG approximating vectors on a dyadic time ladder."

    def prepare(self, config: RunConfig):
        params = fiber_params(config)
        schedule = list(config.scan.ir_schedule)
        check_capacity(params, params.grid.ir_cutoff)
        if len(config.scan.times) < 2 or any(b <= a for a, b in zip(config.scan.times[:-1], config.scan.times[1:])):
            raise BadArgument("scan.times must hold at least two increasing times.")
        return params, scan_momentum(config), schedule

    def compute(self, config: RunConfig, prepared, out_dir: Path) -> utils.CommandOutcome:
        params, p, schedule = prepared
        times = list(config.scan.times)
        tol, seed = config.scan.tol, config.seed

        rng = np.random.default_rng(seed)
        phases = [nrqed.DollardPhases.random(rng) for _ in times]

        def velocity():
            return nrqed.velocity_at(params, p, tol=tol, seed=seed, step=config.scan.velocity_step)

        def cfp():
            return nrqed.cfp_ladder(params, p, times, velocity(), phases, tol, seed)

        def bdg():
            return nrqed.bdg_ladder(params, p, times, velocity(), phases, tol, seed, config.scan.leak_bound)

        def cloud_norms():
            return nrqed.cloud_norm_schedule(params, p, velocity(), schedule, times)

        tasks = [cfp, bdg] + ([cloud_norms] if schedule else [])
        results = utils.scan_executor(tasks, config.threads)
        labels = ["cfp ladder", "bdg ladder", "cloud norms"][: len(tasks)]

        nan = np.full(len(times), math.nan)
        cfp_cols = ladder_columns(results[0].value) if results[0].ok else (nan, nan, nan)
        bdg_cols = ladder_columns(results[1].value) if results[1].ok else (nan, nan, nan)
        rows = [
            (t, cfp_cols[0][i], bdg_cols[0][i], cfp_cols[1][i], bdg_cols[1][i], cfp_cols[2][i], bdg_cols[2][i])
            for i, t in enumerate(times)
        ]
        files = [utils.write_csv(out_dir / "cfp.csv", LADDER_HEADER, rows)]

        if schedule:
            header = ("lambda", "f_norm", *(f"bdg_norm_t{format(t, 'g')}" for t in times))
            if results[2].ok:
                norm_rows = [(r.ir_cutoff, r.cloud_norm, *r.bdg_norms) for r in results[2].value]
            else:
                norm_rows = [(lam, *([math.nan] * (len(times) + 1))) for lam in schedule]
            files.append(utils.write_csv(out_dir / "cloudnorm.csv", header, norm_rows))

        if self.wants_svg(config):
            files.append(
                utils.write_svg(
                    out_dir / "cfp.svg",
                    {"CFP": (times[:-1], cfp_cols[0][:-1]), "BDG": (times[:-1], bdg_cols[0][:-1])},
                    "t",
                    "residual to next rung",
                    logx=True,
                    logy=True,
                )
            )
        files += self.record_failures(out_dir, labels, results)

        ok = sum(r.ok for r in results)
        return utils.CommandOutcome(files, ok, len(results) - ok)


def setup(lab_app):
    Cfp(lab_app)

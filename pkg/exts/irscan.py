import functools
import math
from pathlib import Path

import numpy as np
import scipy.stats

import common.utils as utils
from common.models import RunConfig
from exts._fiber import check_capacity, fiber_params, scan_momentum
from lab import nrqed

HEADER = ("lambda", "E", "meanN", "vac_overlap", "dressedN", "residual")


def log_fit(cutoffs: np.ndarray, values: np.ndarray) -> dict[str, float]:
    """``values ≈ alpha + beta log(1/λ)`` over the rows that succeeded."""
    keep = np.isfinite(values)
    if keep.sum() < 2:
        return {}
    x, y = np.log(1.0 / cutoffs[keep]), values[keep]
    if np.ptp(y) == 0.0:
        return {"alpha": float(y[0]), "beta": 0.0, "r2": 1.0}
    fit = scipy.stats.linregress(x, y)
    return {"alpha": float(fit.intercept), "beta": float(fit.slope), "r2": float(fit.rvalue**2)}


class IrScan(utils.Command):
    name = "irscan"
    help = "Ground-state photon number, vacuum overlap and dressed photon number against the IR cutoff."

    def prepare(self, config: RunConfig):
        params = fiber_params(config)
        schedule = list(config.scan.ir_schedule) or [config.grid.ir_cutoff]
        check_capacity(params, min(schedule))
        return params, scan_momentum(config), schedule

    def compute(self, config: RunConfig, prepared, out_dir: Path) -> utils.CommandOutcome:
        params, p, schedule = prepared
        tasks = [
            functools.partial(
                nrqed.ir_scan_row, params, p, lam, None, config.scan.tol, config.seed, config.scan.leak_bound
            )
            for lam in schedule
        ]
        results = utils.scan_executor(tasks, config.threads)

        rows = []
        for lam, result in zip(schedule, results):
            if result.ok:
                r = result.value
                rows.append((r.ir_cutoff, r.energy, r.mean_photon_number, r.vacuum_overlap,
                             r.dressed_mean_photon_number, r.residual))
            else:
                rows.append((float(lam), *([math.nan] * 5)))

        table = np.array(rows, dtype=float)
        fit = log_fit(table[:, 0], table[:, 2])
        files = [utils.write_csv(out_dir / "irscan.csv", HEADER, rows, fit=fit)]
        if self.wants_svg(config):
            files.append(
                utils.write_svg(
                    out_dir / "irscan.svg",
                    {"<N>": (table[:, 0], table[:, 2]), "dressed <N>": (table[:, 0], table[:, 4])},
                    "IR cutoff λ",
                    "mean photon number",
                    logx=True,
                )
            )
        files += self.record_failures(out_dir, [f"lambda={lam}" for lam in schedule], results)

        ok = sum(r.ok for r in results)
        return utils.CommandOutcome(files, ok, len(results) - ok)


def setup(lab_app):
    IrScan(lab_app)

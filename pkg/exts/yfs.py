import functools
import math
from pathlib import Path

import numpy as np

import common.utils as utils
from common.models import RunConfig
from lab import softphoton
from lab.errors import BadArgument

HEADER = ("lambda", "exclusive", "inclusive", "soft_norm", "n_required", "tail")


def yfs_row(process: softphoton.ProcessCurrents, ir_cutoff: float, config: RunConfig):
    section = config.yfs
    result = softphoton.inclusive_partial_sum(
        process,
        ir_cutoff,
        section.resolution,
        section.uv_cutoff,
        section.n_max,
        points_per_decade=section.points_per_decade,
        directions=section.directions,
    )
    return result.exclusive, result.limit, result.soft_norm, result.n_required, result.tail


class Yfs(utils.Command):
    name = "yfs"
    help = "Exclusive and inclusive soft-photon cross sections against the IR cutoff."

    def prepare(self, config: RunConfig):
        section = config.yfs
        process = section.process()
        cutoffs = list(section.ir_cutoffs)
        if not cutoffs:
            raise BadArgument("yfs.ir_cutoffs is empty.")
        if not all(0.0 < lam < section.resolution <= section.uv_cutoff for lam in cutoffs):
            raise BadArgument("yfs needs every ir_cutoff < resolution <= uv_cutoff.")
        return process, cutoffs

    def compute(self, config: RunConfig, prepared, out_dir: Path) -> utils.CommandOutcome:
        process, cutoffs = prepared
        section = config.yfs
        grid = dict(points_per_decade=section.points_per_decade, directions=section.directions)

        tasks = [functools.partial(yfs_row, process, lam, config) for lam in cutoffs]
        tasks.append(
            functools.partial(softphoton.soft_exponent, process, min(cutoffs), section.uv_cutoff, **grid)
        )
        results = utils.scan_executor(tasks, config.threads)
        row_results, exponent = results[:-1], results[-1]

        rows = []
        for lam, result in zip(cutoffs, row_results):
            rows.append((lam, *result.value) if result.ok else (lam, math.nan, math.nan, math.nan, -1, math.nan))

        fit: dict[str, float] = {}
        if exponent.ok:
            fit["a"] = exponent.value.a
            fit["fit_residual"] = exponent.value.fit_residual
        table = np.array([r[:3] for r in rows], dtype=float)
        keep = np.isfinite(table[:, 1]) & (table[:, 1] > 0.0)
        if keep.sum() >= 2 and np.ptp(np.log(table[keep, 1])) > 0.0:
            slope = np.polyfit(np.log(table[keep, 0]), np.log(table[keep, 1]), 1)[0]
            fit["exclusive_power"] = float(slope)
        elif keep.sum() >= 2:
            fit["exclusive_power"] = 0.0

        files = [utils.write_csv(out_dir / "yfs.csv", HEADER, rows, fit=fit or None)]
        if self.wants_svg(config):
            files.append(
                utils.write_svg(
                    out_dir / "yfs.svg",
                    {"exclusive": (table[:, 0], table[:, 1]), "inclusive": (table[:, 0], table[:, 2])},
                    "IR cutoff λ",
                    "cross section",
                    logx=True,
                    logy=True,
                )
            )
        labels = [f"lambda={lam}" for lam in cutoffs] + ["soft exponent"]
        files += self.record_failures(out_dir, labels, results)

        ok = sum(r.ok for r in results)
        return utils.CommandOutcome(files, ok, len(results) - ok)


def setup(lab_app):
    Yfs(lab_app)

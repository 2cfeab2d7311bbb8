import functools
import math
from pathlib import Path

import numpy as np

import common.utils as utils
from common.models import RunConfig
from lab import dollard_qm
from lab.errors import BadArgument

HEADER = ("t", "plain_residual", "modified_residual", "plain_phase", "modified_phase")


class Dollard(utils.Command):
    name = "dollard"
    help = "Møller-limit residuals with and without the Dollard modifier for a 1D or radial potential."

    def prepare(self, config: RunConfig):
        section = config.dollard
        grid = dollard_qm.SpatialGrid(section.points, section.extent)
        kinetic_phase = section.dt * grid.p_max**2 / (2.0 * section.mass)
        if kinetic_phase >= 0.5:
            raise BadArgument(f"dollard.dt={section.dt} does not resolve the grid (dt·p_max²/2m = {kinetic_phase:.3f}).")
        times = list(section.times)
        if len(times) < 2 or any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise BadArgument("dollard.times must hold at least two increasing times.")
        packet = dollard_qm.gaussian_packet(grid, section.x0, section.p0, section.width)
        return section.potential(), packet, times

    def compute(self, config: RunConfig, prepared, out_dir: Path) -> utils.CommandOutcome:
        V, packet, times = prepared
        section = config.dollard
        run = functools.partial(
            dollard_qm.moller_residual,
            packet,
            V,
            times,
            dt=section.dt,
            mass=section.mass,
            mass_loss_bound=section.mass_loss_bound,
        )
        tasks = [functools.partial(run, modified=False), functools.partial(run, modified=True)]
        labels = ["plain", "modified"]
        if not V.long_range:
            tasks.append(
                functools.partial(dollard_qm.short_range_limit_gap, packet, V, times[-1], section.dt, section.mass)
            )
            labels.append("limit gap")
        results = utils.scan_executor(tasks, config.threads)

        nan = np.full(len(times), math.nan)
        plain = results[0].value if results[0].ok else None
        modified = results[1].value if results[1].ok else None
        columns = []
        for diag in (plain, modified):
            if diag is None:
                columns.append((nan, nan))
            else:
                columns.append((np.append(diag.consecutive(), math.nan), diag.phase_track))
        rows = [
            (t, columns[0][0][i], columns[1][0][i], columns[0][1][i], columns[1][1][i]) for i, t in enumerate(times)
        ]

        fit: dict[str, float] = {}
        if plain is not None and len(times) >= 5:
            try:
                slope, r2 = dollard_qm.coulomb_log_slope_fit(plain)
            except BadArgument:
                pass
            else:
                fit = {"slope": slope, "r2": r2, "expected": V.strength * section.mass / packet.mean_abs_momentum()}
        if len(results) > 2 and results[2].ok:
            fit["limit_gap"] = results[2].value

        files = [utils.write_csv(out_dir / "dollard.csv", HEADER, rows, fit=fit or None)]
        if self.wants_svg(config):
            files.append(
                utils.write_svg(
                    out_dir / "dollard.svg",
                    {"plain": (times[:-1], columns[0][0][:-1]), "modified": (times[:-1], columns[1][0][:-1])},
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
    Dollard(lab_app)

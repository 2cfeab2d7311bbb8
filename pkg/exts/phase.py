import functools
import math
from pathlib import Path

import numpy as np

import common.utils as utils
from common.models import RunConfig
from lab import softphoton
from lab.errors import BadArgument

PHASE_HEADER = ("eps", "coulomb_phase", "phase_step", "vacuum_overlap")
PROPAGATOR_HEADER = ("off_shell", "scaling", "free_scaling")


class Phase(utils.Command):
    name = "phase"
    help = "Coulomb phase and Weyl vacuum overlap under adiabatic switching, and the resummed propagator power."

    def prepare(self, config: RunConfig):
        section = config.yfs
        process = section.process()
        if len(process.legs) < 2:
            raise BadArgument("phase needs at least two legs in yfs.legs.")
        scales = list(section.scales)
        if any(not 0.0 < eps <= 1.0 for eps in scales):
            raise BadArgument("yfs.scales must lie in (0, 1].")
        softphoton.propagator_exponent(config.model.coupling)
        return process, scales

    def compute(self, config: RunConfig, prepared, out_dir: Path) -> utils.CommandOutcome:
        process, scales = prepared
        section = config.yfs
        first, second = process.legs[:2]

        def phase_at(eps: float) -> float:
            return softphoton.coulomb_phase(
                first, second, softphoton.SwitchingFunction(eps), profile_width=section.profile_width
            )

        def overlaps():
            return softphoton.weyl_vacuum_overlap(
                process, scales, section.uv_cutoff, section.points_per_decade, section.directions
            )

        tasks = [functools.partial(phase_at, eps) for eps in scales] + [overlaps]
        results = utils.scan_executor(tasks, config.threads)
        phases = np.array([r.value if r.ok else math.nan for r in results[:-1]])
        overlap = results[-1].value if results[-1].ok else np.full(len(scales), math.nan)

        # Φ(ε) - Φ(2ε) where the schedule holds both
        steps = []
        for eps, value in zip(scales, phases):
            partner = next((j for j, other in enumerate(scales) if math.isclose(other, 2.0 * eps)), None)
            steps.append(value - phases[partner] if partner is not None else math.nan)

        rows = [(eps, phases[i], steps[i], overlap[i]) for i, eps in enumerate(scales)]
        fit = {}
        if first.direction == second.direction and not np.isnan(steps).all():
            w = first.dot(second)
            fit["expected_step"] = (
                first.charge * second.charge * first.sign * second.sign * w * math.log(2.0)
                / (8.0 * math.pi * math.sinh(math.acosh(w)))
            )
        files = [utils.write_csv(out_dir / "phase.csv", PHASE_HEADER, rows, fit=fit or None)]

        e = config.model.coupling
        off_shell = np.logspace(0.0, -6.0, 7)
        files.append(
            utils.write_csv(
                out_dir / "propagator.csv",
                PROPAGATOR_HEADER,
                zip(off_shell, softphoton.resummed_propagator_scaling(off_shell, e), 1.0 / off_shell),
                fit={"exponent": softphoton.propagator_exponent(e)},
            )
        )

        if self.wants_svg(config):
            files.append(
                utils.write_svg(
                    out_dir / "phase.svg",
                    {"Coulomb phase": (scales, phases)},
                    "switching scale ε",
                    "phase",
                    logx=True,
                )
            )
        labels = [f"eps={eps}" for eps in scales] + ["vacuum overlap"]
        files += self.record_failures(out_dir, labels, results)

        ok = sum(r.ok for r in results)
        return utils.CommandOutcome(files, ok, len(results) - ok)


def setup(lab_app):
    Phase(lab_app)

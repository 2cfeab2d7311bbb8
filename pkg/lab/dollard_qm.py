"""
Long-range potential scattering on a periodic 1D grid.

H = p²/2m + e V(x) with ``V(x) = 1/(r0 + |x|)^α``. Propagation is Strang
split-step FFT; the free part and the Dollard phase are exact in momentum
space. The radial 3D problem is the odd sector of the 1D one (u(0) = 0).
"""

import dataclasses
import functools
import logging
import math
import typing

import numpy as np
import scipy.integrate
import scipy.stats

from lab.errors import AbsorptionError, BadArgument, DomainError, QuadratureError

__all__ = (
    "FORMS",
    "LongRangePotential",
    "SpatialGrid",
    "GridWavefunction",
    "MollerDiagnostics",
    "asymptotic_phase",
    "asymptotic_phase_formula",
    "limiting_phase",
    "dollard_modifier_apply",
    "gaussian_packet",
    "free_gaussian",
    "radial_projection",
    "apply_free",
    "absorbing_mask",
    "propagate_full",
    "moller_residual",
    "coulomb_log_slope_fit",
    "phase_aligned_distance",
    "short_range_limit_gap",
)

logger = logging.getLogger("irlab.dollard_qm")

FORMS = ("coulomb_3d_radial", "regularized_coulomb_1d", "power_law")


@dataclasses.dataclass(frozen=True)
class LongRangePotential:
    form: str = "regularized_coulomb_1d"
    strength: float = 0.0
    exponent: float = 1.0
    regulator: float = 1.0

    def __post_init__(self):
        if self.form not in FORMS:
            raise BadArgument(f"Potential form {self.form} does not exist (use one of {', '.join(FORMS)}).")
        if not self.regulator > 0.0:
            raise BadArgument(f"Regulator r0 must be positive, got {self.regulator}.")
        if not self.exponent > 0.0:
            raise BadArgument(f"Exponent must be positive, got {self.exponent}.")

    @property
    def alpha(self) -> float:
        return self.exponent if self.form == "power_law" else 1.0

    @property
    def long_range(self) -> bool:
        return self.alpha <= 1.0

    @property
    def range_class(self) -> str:
        return "long-range" if self.long_range else "short-range"

    @property
    def radial(self) -> bool:
        return self.form == "coulomb_3d_radial"

    def shape(self, x) -> np.ndarray:
        """``V(x)`` without the coupling."""
        return (self.regulator + np.abs(np.asarray(x, dtype=float))) ** -self.alpha

    def __call__(self, x) -> np.ndarray:
        return self.strength * self.shape(x)


def _closed_phase(V: LongRangePotential, speed: np.ndarray, t: float) -> np.ndarray:
    # e ∫_0^|t| V(speed τ) dτ, odd in t; speed = 0 keeps the particle at the origin
    T = abs(t)
    r0, alpha = V.regulator, V.alpha
    out = np.empty_like(speed, dtype=float)
    moving = speed > 0.0
    s = speed[moving]
    X = s * T
    if alpha == 1.0:
        out[moving] = np.log1p(X / r0) / s
    else:
        out[moving] = ((r0 + X) ** (1.0 - alpha) - r0 ** (1.0 - alpha)) / ((1.0 - alpha) * s)
    out[~moving] = T * r0**-alpha
    return math.copysign(1.0, t) * V.strength * out


def asymptotic_phase(V: LongRangePotential, p: float, t: float, mass: float = 1.0, method: str = "auto") -> float:
    """``φ_D(p, t) = e ∫_0^t V(pτ/m) dτ`` along the ballistic trajectory."""
    if p == 0.0:
        raise DomainError("Asymptotic phase needs p != 0 (the ballistic trajectory is degenerate).")
    if t < 0.0:
        raise BadArgument(f"Asymptotic phase needs t >= 0, got {t}.")
    if V.strength == 0.0 or t == 0.0:
        return 0.0

    speed = abs(p) / mass
    if method in ("auto", "closed"):
        return float(_closed_phase(V, np.array([speed]), t)[0])
    if method != "quad":
        raise BadArgument(f"Unknown phase method {method}.")

    value, err = scipy.integrate.quad(lambda tau: V.shape(speed * tau), 0.0, t, limit=400, epsabs=1e-13, epsrel=1e-12)
    if not err <= 1e-8 * max(1.0, abs(value)):
        raise QuadratureError(
            f"Asymptotic phase quadrature did not converge (estimate {value}, error {err}).",
            estimate=V.strength * value,
            error_bound=abs(V.strength) * err,
        )
    return float(V.strength * value)


def asymptotic_phase_formula(V: LongRangePotential) -> str:
    if V.alpha == 1.0:
        return "phi_D(p,t) = (e m/|p|) log(1 + |p| t/(m r0))"
    return "phi_D(p,t) = (e m/|p|) ((r0 + |p|t/m)^(1-a) - r0^(1-a))/(1-a)"


def limiting_phase(V: LongRangePotential, p, mass: float = 1.0) -> np.ndarray:
    """``lim_{t→∞} φ_D(p, t)``, finite for short-range forms only."""
    if V.long_range:
        raise DomainError(f"The asymptotic phase of a {V.range_class} potential diverges.")
    speed = np.abs(np.asarray(p, dtype=float)) / mass
    if np.any(speed == 0.0):
        raise DomainError("Limiting phase needs p != 0.")
    return V.strength * V.regulator ** (1.0 - V.alpha) / ((V.alpha - 1.0) * speed)


def dollard_modifier_apply(
    psi_hat: np.ndarray, momenta: np.ndarray, V: LongRangePotential, t: float, mass: float = 1.0
) -> np.ndarray:
    """Multiply each momentum bin by ``e^{-iφ_D(p, t)}``; negative t gives the inverse."""
    if V.strength == 0.0 or t == 0.0:
        return np.array(psi_hat, dtype=complex)
    phase = _closed_phase(V, np.abs(np.asarray(momenta, dtype=float)) / mass, t)
    return np.asarray(psi_hat, dtype=complex) * np.exp(-1j * phase)


@dataclasses.dataclass(frozen=True, eq=False)
class SpatialGrid:
    points: int
    extent: float

    def __post_init__(self):
        if self.points < 8:
            raise BadArgument(f"Grid needs at least 8 points, got {self.points}.")
        if not self.extent > 0.0:
            raise BadArgument(f"Grid extent must be positive, got {self.extent}.")

    @property
    def dx(self) -> float:
        return self.extent / self.points

    @functools.cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.extent + self.dx * np.arange(self.points)

    @functools.cached_property
    def momenta(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.dx)

    @property
    def p_max(self) -> float:
        return math.pi / self.dx


@dataclasses.dataclass(frozen=True, eq=False)
class GridWavefunction:
    grid: SpatialGrid
    amplitudes: np.ndarray
    absorbed: float = 0.0

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.grid.points:
            raise BadArgument(f"Wavefunction has {amps.shape[0]} samples for a grid of {self.grid.points}.")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx))

    def inner(self, other: "GridWavefunction") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.grid.dx)

    def distance(self, other: "GridWavefunction") -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes - other.amplitudes) ** 2) * self.grid.dx))

    def momentum_amplitudes(self) -> np.ndarray:
        return np.fft.fft(self.amplitudes)

    def mean_abs_momentum(self) -> float:
        weights = np.abs(self.momentum_amplitudes()) ** 2
        return float(np.sum(weights * np.abs(self.grid.momenta)) / np.sum(weights))

    def replace(self, amplitudes: np.ndarray, absorbed: float | None = None) -> "GridWavefunction":
        return GridWavefunction(self.grid, amplitudes, self.absorbed if absorbed is None else absorbed)


def gaussian_packet(grid: SpatialGrid, x0: float, p0: float, width: float) -> GridWavefunction:
    """Normalized Gaussian with position spread ``width`` and mean momentum ``p0``."""
    if not width > 0.0:
        raise BadArgument(f"Packet width must be positive, got {width}.")
    x = grid.x
    amps = np.exp(-((x - x0) ** 2) / (4.0 * width**2) + 1j * p0 * x)
    amps /= np.sqrt(np.sum(np.abs(amps) ** 2) * grid.dx)
    return GridWavefunction(grid, amps)


def free_gaussian(x: np.ndarray, t: float, x0: float, p0: float, width: float, mass: float = 1.0) -> np.ndarray:
    """Closed-form free evolution of the continuum Gaussian packet."""
    s = width**2 + 1j * t / (2.0 * mass)
    norm = (2.0 * np.pi * width**2) ** -0.25 * np.sqrt(width**2 / s)
    centre = x0 + p0 * t / mass
    return norm * np.exp(-((x - centre) ** 2) / (4.0 * s) + 1j * p0 * x - 1j * p0**2 * t / (2.0 * mass))


def radial_projection(psi: GridWavefunction) -> GridWavefunction:
    """Odd part of ψ, renormalized: the s-wave sector with u(0) = 0."""
    mirrored = np.roll(psi.amplitudes[::-1], 1)
    odd = 0.5 * (psi.amplitudes - mirrored)
    n = np.sqrt(np.sum(np.abs(odd) ** 2) * psi.grid.dx)
    if n == 0.0:
        raise BadArgument("Wavefunction has no odd component.")
    return psi.replace(odd / n)


def apply_free(psi: GridWavefunction, t: float, mass: float = 1.0) -> GridWavefunction:
    phase = np.exp(-1j * psi.grid.momenta**2 * t / (2.0 * mass))
    return psi.replace(np.fft.ifft(phase * np.fft.fft(psi.amplitudes)))


def absorbing_mask(grid: SpatialGrid, fraction: float = 0.1) -> np.ndarray:
    """1 inside, a cos^(1/8) ramp down to 0 over the outer ``fraction`` of each side."""
    half = 0.5 * grid.extent
    inner = (1.0 - fraction) * half
    s = np.clip((np.abs(grid.x) - inner) / (half - inner), 0.0, 1.0)
    return np.cos(0.5 * np.pi * s) ** 0.125


def propagate_full(
    psi: GridWavefunction,
    V: LongRangePotential,
    t: float,
    dt: float,
    mass: float = 1.0,
    absorber: bool = True,
    absorber_fraction: float = 0.1,
) -> GridWavefunction:
    """``e^{-itH} ψ`` by Strang splitting; mass eaten by the absorber accumulates in ``absorbed``."""
    grid = psi.grid
    if not dt > 0.0:
        raise BadArgument(f"Time step must be positive, got {dt}.")
    kinetic_phase = dt * grid.p_max**2 / (2.0 * mass)
    if kinetic_phase >= 0.5:
        raise BadArgument(
            f"Time step {dt} does not resolve the grid: dt·p_max²/2m = {kinetic_phase:.3f} >= 0.5."
        )
    if t == 0.0:
        return psi.replace(psi.amplitudes.copy())

    n_steps = math.ceil(abs(t) / dt - 1e-12)
    h = t / n_steps
    half_potential = np.exp(-0.5j * h * V(grid.x))
    kinetic = np.exp(-1j * h * grid.momenta**2 / (2.0 * mass))
    mask = absorbing_mask(grid, absorber_fraction) if absorber else None

    amps = np.array(psi.amplitudes, dtype=complex)
    absorbed = psi.absorbed
    for _ in range(n_steps):
        amps = half_potential * np.fft.ifft(kinetic * np.fft.fft(half_potential * amps))
        if mask is not None:
            before = np.sum(np.abs(amps) ** 2)
            amps *= mask
            absorbed += float(before - np.sum(np.abs(amps) ** 2)) * grid.dx

    return psi.replace(amps, absorbed)


@dataclasses.dataclass(frozen=True, eq=False)
class MollerDiagnostics:
    times: np.ndarray
    residuals: np.ndarray
    phase_track: np.ndarray
    modified: bool = False
    mass_loss: float = 0.0
    states: tuple[GridWavefunction, ...] = ()

    def consecutive(self) -> np.ndarray:
        return np.array([self.residuals[i, i + 1] for i in range(len(self.times) - 1)])


def moller_residual(
    psi0: GridWavefunction,
    V: LongRangePotential,
    times: typing.Sequence[float],
    modified: bool,
    dt: float,
    mass: float = 1.0,
    mass_loss_bound: float = 1e-3,
) -> MollerDiagnostics:
    """``ψ_t = U_full(-t) U_as(t) ψ0`` for every t and the plain L² residuals between them.

    ``U_as(t)`` is free evolution, preceded by the Dollard phase when ``modified``.
    """
    if V.radial:
        psi0 = radial_projection(psi0)
    grid = psi0.grid
    k = grid.momenta
    states = []
    loss = 0.0
    for t in times:
        psi_hat = np.fft.fft(psi0.amplitudes)
        if modified:
            psi_hat = dollard_modifier_apply(psi_hat, k, V, t, mass)
        psi_hat = psi_hat * np.exp(-1j * k**2 * t / (2.0 * mass))
        outgoing = GridWavefunction(grid, np.fft.ifft(psi_hat))
        back = propagate_full(outgoing, V, -t, dt, mass)
        if back.absorbed > mass_loss_bound:
            raise AbsorptionError(
                f"Packet lost {back.absorbed:.3e} of its norm to the absorber at t={t}"
                f" (bound {mass_loss_bound:.1e}); enlarge the grid.",
                mass_loss=back.absorbed,
                bound=mass_loss_bound,
            )
        loss = max(loss, back.absorbed)
        states.append(back)

    n = len(states)
    residuals = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            residuals[i, j] = residuals[j, i] = states[i].distance(states[j])

    steps = [float(np.angle(states[i].inner(states[i + 1]))) for i in range(n - 1)]
    phase_track = np.concatenate([[0.0], np.cumsum(steps)])
    logger.debug(f"Møller ladder ({'modified' if modified else 'plain'}), residuals {np.round(np.diag(residuals, 1), 6)}.")
    return MollerDiagnostics(np.asarray(times, dtype=float), residuals, phase_track, modified, loss, tuple(states))


def coulomb_log_slope_fit(diagnostics: MollerDiagnostics) -> tuple[float, float]:
    """Least-squares slope of the accumulated overlap phase against log t, and R²."""
    times = np.asarray(diagnostics.times, dtype=float)
    phases = np.asarray(diagnostics.phase_track, dtype=float)
    if times.shape[0] < 5 or np.any(times <= 0.0) or math.log2(times.max() / times.min()) < 4.0 - 1e-9:
        raise BadArgument("Log-slope fit needs positive times spanning at least 4 octaves.")
    if np.ptp(phases) == 0.0:
        return 0.0, 1.0

    fit = scipy.stats.linregress(np.log(times), phases)
    return float(fit.slope), float(fit.rvalue**2)


def phase_aligned_distance(a: GridWavefunction, b: GridWavefunction) -> float:
    """``min_θ ‖a - e^{iθ} b‖``."""
    gap = a.norm() ** 2 + b.norm() ** 2 - 2.0 * abs(a.inner(b))
    return math.sqrt(max(0.0, gap))


def short_range_limit_gap(
    psi0: GridWavefunction, V: LongRangePotential, t: float, dt: float, mass: float = 1.0
) -> float:
    """Distance at time t between the plain and the modified Møller states of a short-range potential.

    The modified run starts from ``e^{iφ_D(p, ∞)} ψ0`` so both runs tend to the same
    limit; the remaining gap is compared after global phase alignment.
    """
    if V.radial:
        psi0 = radial_projection(psi0)
    k = psi0.grid.momenta
    moving = k != 0.0
    phases = np.zeros_like(k)
    phases[moving] = limiting_phase(V, k[moving], mass)
    prephased = psi0.replace(np.fft.ifft(np.exp(1j * phases) * np.fft.fft(psi0.amplitudes)))

    plain = moller_residual(psi0, V, [t], modified=False, dt=dt, mass=mass).states[0]
    modified = moller_residual(prephased, V, [t], modified=True, dt=dt, mass=mass).states[0]
    return phase_aligned_distance(plain, modified)

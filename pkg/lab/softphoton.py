"""
Soft-photon bookkeeping for a hard process with classical charged legs.

Four-vectors use the metric (+,-,-,-) and photon directions ``k = (1, k̂)``.
The soft cloud of a process has one-photon amplitude
``ε·j(k̂) / (√2 |k|^{3/2})`` with the covariant soft current
``j(k̂) = Σ s q v_⊥/(v·k)`` (``s = +1`` for outgoing, ``-1`` for incoming legs),
so its squared norm on a shell ``λ < |k| <= Λ`` is ``a log(Λ/λ)``.
"""

import dataclasses
import logging
import math
import typing

import numpy as np
import scipy.integrate
import scipy.stats

from lab.errors import BadArgument, ConvergenceError, DomainError, QuadratureError
from lab.fock import CloudFunction, GridRecipe, ModeGrid, build_basis, coherent_state, vacuum

__all__ = (
    "DIRECTIONS",
    "SINGULAR_TOL",
    "COULOMB_PHASE_CONVENTION",
    "ChargedLeg",
    "ProcessCurrents",
    "SwitchingFunction",
    "SoftExponent",
    "InclusiveSum",
    "soft_current",
    "soft_cloud",
    "cloud_norm",
    "soft_exponent",
    "angular_soft_integral",
    "two_leg_soft_exponent",
    "exclusive_cross_section",
    "exclusive_exponent_fit",
    "inclusive_partial_sum",
    "inclusive_tail_bound",
    "coulomb_phase",
    "weyl_vacuum_overlap",
    "weyl_vacuum_overlap_fock",
    "propagator_exponent",
    "resummed_propagator_scaling",
)

logger = logging.getLogger("irlab.softphoton")

DIRECTIONS = ("in", "out")
SINGULAR_TOL = 1e-9
VELOCITY_TOL = 1e-12

COULOMB_PHASE_CONVENTION = (
    "Phi(eps) = (q1 q2/2) ∫∫ g_eps(x) g_eps(y) D(x-y) j1(x)·j2(y), D = (D_ret + D_adv)/2 = delta(x²)/(4π), "
    "j(x) = s v ∫dτ delta⁴(x - v τ) on the half-line s τ > 0, g_eps(x) = exp(-eps² |x|_E²/2), "
    "vertex regulator 1 - exp(-τ²/(2 l²)) on each ray"
)


@dataclasses.dataclass(frozen=True)
class ChargedLeg:
    four_velocity: tuple[float, float, float, float]
    charge: float
    direction: str = "out"

    def __post_init__(self):
        v = tuple(float(c) for c in self.four_velocity)
        if len(v) != 4:
            raise BadArgument(f"Four-velocity needs 4 components, got {len(v)}.")
        if self.direction not in DIRECTIONS:
            raise BadArgument(f"Leg direction {self.direction} does not exist (use in or out).")
        if v[0] < 1.0 - VELOCITY_TOL:
            raise DomainError(f"Four-velocity must have v⁰ >= 1, got {v[0]}.")
        square = v[0] ** 2 - v[1] ** 2 - v[2] ** 2 - v[3] ** 2
        if abs(square - 1.0) > VELOCITY_TOL * max(1.0, v[0] ** 2):
            raise DomainError(f"Four-velocity must satisfy v·v = 1, got {square!r}.")
        object.__setattr__(self, "four_velocity", v)

    @classmethod
    def from_velocity(cls, velocity: typing.Sequence[float], charge: float, direction: str = "out") -> "ChargedLeg":
        beta = np.asarray(velocity, dtype=float)
        speed = float(np.linalg.norm(beta))
        if speed >= 1.0:
            raise DomainError(f"Leg speed must be below 1, got {speed}.")
        gamma = 1.0 / math.sqrt(1.0 - speed**2)
        return cls((gamma, *(gamma * beta)), charge, direction)

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "out" else -1.0

    @property
    def spatial(self) -> np.ndarray:
        return np.array(self.four_velocity[1:])

    @property
    def velocity(self) -> np.ndarray:
        return self.spatial / self.four_velocity[0]

    def dot(self, other: "ChargedLeg") -> float:
        a, b = self.four_velocity, other.four_velocity
        return a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]

    def boost_z(self, rapidity: float) -> "ChargedLeg":
        ch, sh = math.cosh(rapidity), math.sinh(rapidity)
        v0, vx, vy, vz = self.four_velocity
        return dataclasses.replace(self, four_velocity=(ch * v0 + sh * vz, vx, vy, sh * v0 + ch * vz))

    def conjugated(self) -> "ChargedLeg":
        return dataclasses.replace(self, charge=-self.charge)


@dataclasses.dataclass(frozen=True)
class ProcessCurrents:
    legs: tuple[ChargedLeg, ...]
    sigma0: float = 1.0

    def __post_init__(self):
        legs = tuple(self.legs)
        if not legs:
            raise BadArgument("A process needs at least one charged leg.")
        if not self.sigma0 > 0.0:
            raise BadArgument(f"Hard cross section must be positive, got {self.sigma0}.")
        incoming = sum(leg.charge for leg in legs if leg.direction == "in")
        outgoing = sum(leg.charge for leg in legs if leg.direction == "out")
        if abs(incoming - outgoing) > 1e-12 * max(1.0, abs(incoming), abs(outgoing)):
            raise BadArgument(f"Process does not conserve charge: {incoming} in, {outgoing} out.")
        object.__setattr__(self, "legs", legs)

    def conjugated(self) -> "ProcessCurrents":
        return ProcessCurrents(tuple(leg.conjugated() for leg in self.legs), self.sigma0)

    def boosted(self, rapidity: float) -> "ProcessCurrents":
        return ProcessCurrents(tuple(leg.boost_z(rapidity) for leg in self.legs), self.sigma0)

    def scaled(self, factor: float) -> "ProcessCurrents":
        return ProcessCurrents(tuple(dataclasses.replace(l, charge=factor * l.charge) for l in self.legs), self.sigma0)


@dataclasses.dataclass(frozen=True)
class SwitchingFunction:
    scale: float
    profile: str = "gaussian"

    def __post_init__(self):
        if self.profile != "gaussian":
            raise BadArgument(f"Switching profile {self.profile} does not exist.")
        if not 0.0 < self.scale <= 1.0:
            raise BadArgument(f"Switching scale must lie in (0, 1], got {self.scale}.")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * self.scale**2 * np.sum(x**2, axis=-1))

    def along(self, leg: ChargedLeg, tau) -> np.ndarray:
        """``g_ε(v τ)`` on the leg's ray."""
        euclid = sum(c * c for c in leg.four_velocity)
        return np.exp(-0.5 * self.scale**2 * euclid * np.asarray(tau, dtype=float) ** 2)


@dataclasses.dataclass(frozen=True)
class SoftExponent:
    a: float
    fit_residual: float
    finite_part: float = 0.0


@dataclasses.dataclass(frozen=True, eq=False)
class InclusiveSum:
    partial_sums: np.ndarray
    limit: float
    n_required: int
    tail: float
    exclusive: float
    soft_norm: float


def _legs(process: ProcessCurrents | typing.Iterable[ChargedLeg]) -> tuple[ChargedLeg, ...]:
    return process.legs if isinstance(process, ProcessCurrents) else tuple(process)


def _currents(legs: typing.Sequence[ChargedLeg], directions: np.ndarray) -> np.ndarray:
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    out = np.zeros(dirs.shape)
    for leg in legs:
        v = leg.spatial
        along = dirs @ v
        vk = leg.four_velocity[0] - along
        if np.any(vk < SINGULAR_TOL):
            raise DomainError(f"Photon direction is collinear with a light-like leg (v·k = {vk.min():.3e}).")
        transversal = v[None, :] - along[:, None] * dirs
        out += leg.sign * leg.charge * transversal / vk[:, None]
    return out


def soft_current(process: ProcessCurrents | typing.Iterable[ChargedLeg], direction) -> np.ndarray:
    """Transversal soft current ``Σ s q v_⊥/(v·k)`` for one unit direction."""
    return _currents(_legs(process), direction)[0].astype(complex)


def soft_cloud(process: ProcessCurrents, grid: ModeGrid) -> CloudFunction:
    if grid.dimension != 3 or not grid.polarized:
        raise BadArgument("The soft cloud lives on a polarized 3-dimensional mode grid.")
    j = _currents(process.legs, grid.directions)
    projected = np.einsum("ij,ij->i", grid.polarizations, j)
    return CloudFunction(grid, projected / (math.sqrt(2.0) * grid.abs_momenta**1.5))


def _grid(lo: float, hi: float, points_per_decade: int, directions: str) -> ModeGrid:
    return ModeGrid.build(GridRecipe(3, lo, hi, points_per_decade, directions, polarized=True))


def cloud_norm(
    process: ProcessCurrents, lo: float, hi: float, points_per_decade: int = 2, directions: str = "gauss8"
) -> float:
    """``‖cloud‖²`` on the shell ``lo < |k| <= hi``; an empty shell has norm 0."""
    if not 0.0 < lo <= hi:
        raise BadArgument(f"Shell needs 0 < lo <= hi, got lo={lo}, hi={hi}.")
    if lo == hi:
        return 0.0
    return soft_cloud(process, _grid(lo, hi, points_per_decade, directions)).norm_squared()


def soft_exponent(
    process: ProcessCurrents,
    ir_cutoff: float,
    uv_cutoff: float,
    points_per_decade: int = 2,
    directions: str = "gauss8",
    max_fit_residual: float = 0.05,
) -> SoftExponent:
    """Log-shell coefficient ``a`` of ``‖cloud‖²_{λ<|k|<Λ} = c + a log(Λ/λ)``."""
    if not 0.0 < ir_cutoff < uv_cutoff or math.log10(uv_cutoff / ir_cutoff) < 2.0 - 1e-9:
        raise BadArgument(f"Soft exponent needs λ < Λ over at least 2 decades, got λ={ir_cutoff}, Λ={uv_cutoff}.")

    grid = _grid(ir_cutoff, uv_cutoff, points_per_decade, directions)
    cloud = soft_cloud(process, grid)
    edges = grid.recipe.radial_edges()[:-1]
    x = np.log(uv_cutoff / edges)
    y = np.array([cloud.norm_squared(lo, uv_cutoff) for lo in edges])
    if np.ptp(y) == 0.0:
        return SoftExponent(0.0, 0.0, float(y[0]))

    fit = scipy.stats.linregress(x, y)
    scale = float(np.abs(y).max())
    residual = float(np.abs(y - (fit.intercept + fit.slope * x)).max()) / scale
    if residual > max_fit_residual:
        raise QuadratureError(
            f"Cloud norm is not linear in log(Λ/λ) (fit residual {residual:.3f}); refine the grid.",
            estimate=float(fit.slope),
            error_bound=residual * scale,
        )
    logger.debug(f"Soft exponent a={fit.slope:.10g} on {len(grid)} modes ({directions}).")
    return SoftExponent(max(float(fit.slope), 0.0), residual, float(fit.intercept))


def angular_soft_integral(process: ProcessCurrents, tol: float = 1e-10) -> tuple[float, float]:
    """Independent oracle ``a = ½ ∫ dΩ |j_⊥(k̂)|²`` by adaptive 2D quadrature; returns (a, error)."""
    legs = process.legs

    def integrand(phi, theta):
        s = math.sin(theta)
        k = np.array([[s * math.cos(phi), s * math.sin(phi), math.cos(theta)]])
        j = _currents(legs, k)[0]
        return 0.5 * float(j @ j) * s

    value, error = scipy.integrate.dblquad(integrand, 0.0, math.pi, 0.0, 2.0 * math.pi, epsabs=tol, epsrel=tol)
    return float(value), float(error)


def two_leg_soft_exponent(process: ProcessCurrents) -> float:
    """Closed form ``(Q²/2) 4π [log((1+β)/(1-β))/β - 2]`` with β the relative speed of the legs."""
    if len(process.legs) != 2:
        raise BadArgument(f"Closed form needs exactly two legs, got {len(process.legs)}.")
    first, second = process.legs
    w = first.dot(second)
    beta = math.sqrt(max(0.0, 1.0 - 1.0 / (w * w)))
    if beta < 1e-8:
        return 0.0
    flow = first.sign * first.charge
    return 0.5 * flow**2 * 4.0 * math.pi * (math.log((1.0 + beta) / (1.0 - beta)) / beta - 2.0)


def exclusive_cross_section(
    process: ProcessCurrents, ir_cutoff: float, uv_cutoff: float, points_per_decade: int = 2, directions: str = "gauss8"
) -> float:
    """``σ0 exp(-‖cloud‖²_{λ<|k|<Λ})``: no photon above λ in the final state."""
    return process.sigma0 * math.exp(-cloud_norm(process, ir_cutoff, uv_cutoff, points_per_decade, directions))


def exclusive_exponent_fit(
    process: ProcessCurrents, ir_cutoffs: typing.Sequence[float], uv_cutoff: float, **grid
) -> tuple[float, float]:
    """Power ``a`` in ``σ(λ) ∝ λ^a`` from a log-log fit, and R²."""
    lam = np.asarray(ir_cutoffs, dtype=float)
    sigma = np.array([exclusive_cross_section(process, l, uv_cutoff, **grid) for l in lam])
    logs = np.log(sigma)
    if np.ptp(logs) == 0.0:
        return 0.0, 1.0
    fit = scipy.stats.linregress(np.log(lam), logs)
    return float(fit.slope), float(fit.rvalue**2)


def inclusive_tail_bound(soft_norm: float, n: int) -> float:
    """Relative weight of the emission terms beyond ``n`` photons."""
    return float(scipy.stats.poisson.sf(n, soft_norm)) if soft_norm > 0.0 else 0.0


def inclusive_partial_sum(
    process: ProcessCurrents,
    ir_cutoff: float,
    resolution: float,
    uv_cutoff: float,
    n_max: int,
    tail_tol: float = 1e-6,
    points_per_decade: int = 2,
    directions: str = "gauss8",
) -> InclusiveSum:
    """``Σ_{n<=n_max} (1/n!) ‖cloud‖²ⁿ_{λ<|k|<E} σ(λ)``; independent-photon emission statistics."""
    if not 0.0 < ir_cutoff < resolution <= uv_cutoff:
        raise BadArgument(f"Need λ < E <= Λ, got λ={ir_cutoff}, E={resolution}, Λ={uv_cutoff}.")
    if n_max < 0:
        raise BadArgument(f"n_max must be non-negative, got {n_max}.")

    grid = dict(points_per_decade=points_per_decade, directions=directions)
    exclusive = exclusive_cross_section(process, ir_cutoff, uv_cutoff, **grid)
    soft = cloud_norm(process, ir_cutoff, resolution, **grid)
    limit = process.sigma0 * math.exp(-cloud_norm(process, resolution, uv_cutoff, **grid))
    if soft > 0.0:
        # σ(λ) e^{x} P(N <= n) with N ~ Poisson(x) is the n-photon partial sum
        partial = exclusive * math.exp(soft) * scipy.stats.poisson.cdf(np.arange(n_max + 1), soft)
    else:
        partial = np.full(n_max + 1, exclusive)

    tails = [inclusive_tail_bound(soft, n) for n in range(n_max + 1)]
    n_required = next((n for n, tail in enumerate(tails) if tail <= tail_tol), None)
    if n_required is None:
        raise ConvergenceError(
            f"Inclusive sum up to n={n_max} leaves a relative tail {tails[-1]:.3e} above {tail_tol:.1e}.",
            best_residual=tails[-1],
            iterations=n_max,
        )
    return InclusiveSum(np.asarray(partial, dtype=float), limit, n_required, tails[-1], exclusive, soft)


def coulomb_phase(
    first: ChargedLeg,
    second: ChargedLeg,
    switching: SwitchingFunction,
    eps: float | None = None,
    profile_width: float = 0.1,
) -> float:
    """Adiabatically switched pair phase of two ray currents (see ``COULOMB_PHASE_CONVENTION``).

    The light-cone delta is done analytically: on the ray ``x = v1 τ`` it selects
    ``τ' = τ e^{±χ}`` on the other ray, ``cosh χ = v1·v2``. What remains is a
    one-dimensional integral in ``log τ``. An in-leg and an out-leg never meet on
    the light cone, so their phase is zero.
    """
    if eps is not None:
        switching = dataclasses.replace(switching, scale=eps)
    w = first.dot(second)
    if w - 1.0 < 1e-12:
        raise DomainError("Coulomb phase is undefined for legs with equal four-velocity.")
    if first.charge == 0.0 or second.charge == 0.0 or first.direction != second.direction:
        return 0.0

    chi = math.acosh(w)
    prefactor = first.charge * second.charge * first.sign * second.sign * w / (8.0 * math.pi * 2.0 * math.sinh(chi))
    width2 = 2.0 * profile_width**2

    def vertex(tau):
        return -math.expm1(-(tau * tau) / width2)

    def integrand(u):
        tau = math.exp(u)
        total = 0.0
        for shift in (chi, -chi):
            other = tau * math.exp(shift)
            total += vertex(other) * float(switching.along(second, other))
        return vertex(tau) * float(switching.along(first, tau)) * total

    lower = math.log(profile_width) - 12.0
    upper = math.log(1.0 / switching.scale) + 5.0
    value, error = scipy.integrate.quad(integrand, lower, upper, limit=400, epsabs=1e-13, epsrel=1e-11)
    if error > 1e-8 * max(1.0, abs(value)):
        raise QuadratureError(
            f"Coulomb phase quadrature did not converge at ε={switching.scale} (error {error:.3e}).",
            estimate=prefactor * value,
            error_bound=abs(prefactor) * error,
        )
    return prefactor * value


def weyl_vacuum_overlap(
    process: ProcessCurrents,
    scales: typing.Sequence[float],
    uv_cutoff: float,
    points_per_decade: int = 2,
    directions: str = "gauss8",
) -> np.ndarray:
    """``exp(-½‖cloud‖²)`` on the shell ``(εΛ, Λ)`` for each switching scale ε."""
    out = []
    for eps in scales:
        if not 0.0 < eps <= 1.0:
            raise BadArgument(f"Switching scale must lie in (0, 1], got {eps}.")
        out.append(math.exp(-0.5 * cloud_norm(process, eps * uv_cutoff, uv_cutoff, points_per_decade, directions)))
    return np.array(out)


def weyl_vacuum_overlap_fock(
    process: ProcessCurrents,
    ir_cutoff: float,
    uv_cutoff: float,
    max_total: int = 5,
    directions: str = "axes",
) -> tuple[float, float]:
    """``<Ω, W(g)Ω>`` in a truncated Fock space next to the analytic ``exp(-½‖g‖²)``."""
    grid = _grid(ir_cutoff, uv_cutoff, 1, directions)
    cloud = soft_cloud(process, grid)
    basis = build_basis(grid, max_total, max_total)
    overlap = vacuum(basis).inner(coherent_state(basis, cloud))
    return float(overlap.real), math.exp(-0.5 * cloud.norm_squared())


def propagator_exponent(e: float) -> float:
    """Anomalous exponent ``e²/(4π²)`` of the resummed charged propagator."""
    if abs(e) >= 2.0 * math.pi:
        raise BadArgument(f"Coupling must satisfy |e| < 2π, got {e}.")
    return e * e / (4.0 * math.pi**2)


def resummed_propagator_scaling(off_shell, e: float) -> np.ndarray:
    """``|p² - m²|^{-(1 - e²/4π²)}``."""
    x = np.abs(np.asarray(off_shell, dtype=float))
    if np.any(x == 0.0):
        raise DomainError("Propagator scaling is singular on shell (p² = m²).")
    return x ** -(1.0 - propagator_exponent(e))

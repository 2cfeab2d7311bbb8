"""
Non-relativistic QED at fixed total momentum.

Fiber Hamiltonians H(p) act on the photon Fock space only; the massive particle
is implicit. The default model is scalar (Nelson type, linear coupling); the
transversal variant couples through a polarized vector potential.
"""

import dataclasses
import functools
import logging
import math
import typing

import numpy as np
import scipy.sparse as sp

from lab import spectral
from lab.errors import BadArgument, DomainError, IrlabError, LeakageError, RangeError
from lab.fock import (
    BASIS_HARD_LIMIT,
    DENSE_LIMIT,
    CloudFunction,
    FockBasis,
    FockVector,
    ModeGrid,
    SparseOperator,
    build_basis,
    ladder_sum,
    number_operator,
    weyl_operator,
)

__all__ = (
    "ChargeProfile",
    "NelsonFiberParams",
    "DispersionTable",
    "DollardPhases",
    "IrScanRow",
    "CloudNormRow",
    "Dressing",
    "ApproximatingVector",
    "fiber_hamiltonian",
    "dispersion",
    "second_order_shift",
    "velocity_stencil",
    "group_velocity",
    "richardson_velocity",
    "velocity_at",
    "cloud_function",
    "soft_photon_frequencies",
    "infrared_split",
    "cloud_norm_schedule",
    "check_bdg_cloud_bounded",
    "dressed_hamiltonian",
    "ir_scan_row",
    "ir_scan",
    "cfp_fiber_vector",
    "bdg_fiber_vector",
    "cfp_ladder",
    "bdg_ladder",
    "phase_quotient_distance",
    "cauchy_residuals",
    "ladder_residuals",
)

logger = logging.getLogger("irlab.nrqed")

PROFILE_KINDS = ("gaussian", "flat", "dipole")
VARIANTS = ("scalar", "transversal")


@dataclasses.dataclass(frozen=True)
class ChargeProfile:
    """Form factor ρ̃(k); ``dipole`` vanishes at k = 0 and models a neutral atom."""

    kind: str = "gaussian"
    amplitude: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise BadArgument(f"Charge profile {self.kind} does not exist (use one of {', '.join(PROFILE_KINDS)}).")
        if not self.scale > 0.0:
            raise BadArgument(f"Charge profile scale must be positive, got {self.scale}.")

    def __call__(self, k: np.ndarray | float) -> np.ndarray:
        x = np.asarray(k, dtype=float) / self.scale
        if self.kind == "gaussian":
            return self.amplitude * np.exp(-(x**2))
        if self.kind == "flat":
            return self.amplitude * np.ones_like(x)
        return self.amplitude * x**2 * np.exp(-(x**2))

    @property
    def is_atom(self) -> bool:
        return self.kind == "dipole"

    @property
    def tag(self) -> str:
        return "atom" if self.is_atom else "electron"


@dataclasses.dataclass(frozen=True, eq=False)
class NelsonFiberParams:
    grid: ModeGrid
    mass: float = 1.0
    coupling: float = 0.0
    profile: ChargeProfile = ChargeProfile()
    variant: str = "scalar"
    max_total: int = 2
    max_per_mode: int = 2
    a_squared: bool = False
    hard_limit: int = BASIS_HARD_LIMIT

    def __post_init__(self):
        if not self.mass > 0.0:
            raise BadArgument(f"Mass must be positive, got {self.mass}.")
        if self.variant not in VARIANTS:
            raise BadArgument(f"Variant {self.variant} does not exist (use scalar or transversal).")
        if self.variant == "transversal" and not (self.grid.dimension == 3 and self.grid.polarized):
            raise BadArgument("The transversal variant needs a polarized 3-dimensional grid.")

    @functools.cached_property
    def basis(self) -> FockBasis:
        return build_basis(self.grid, self.max_total, self.max_per_mode, self.hard_limit)

    @functools.cached_property
    def mode_couplings(self) -> np.ndarray:
        """``√w ρ̃(k)/√(2|k|)`` per mode, the coefficient of ``a*_i + a_i``."""
        k = self.grid.abs_momenta
        return np.sqrt(self.grid.weights) * self.profile(k) / np.sqrt(2.0 * k)

    @property
    def is_atom(self) -> bool:
        return self.profile.is_atom

    def with_ir_cutoff(self, ir_cutoff: float) -> "NelsonFiberParams":
        return dataclasses.replace(self, grid=self.grid.with_ir_cutoff(ir_cutoff))

    def with_coupling(self, coupling: float) -> "NelsonFiberParams":
        return dataclasses.replace(self, coupling=coupling)


def _momentum(params: NelsonFiberParams, p: typing.Sequence[float] | np.ndarray | float) -> np.ndarray:
    vec = np.atleast_1d(np.asarray(p, dtype=float))
    if vec.shape != (params.grid.dimension,):
        raise BadArgument(f"Momentum {p} is not a {params.grid.dimension}-vector.")
    if not np.all(np.isfinite(vec)):
        raise BadArgument(f"Momentum {p} is not finite.")
    return vec


def _assemble(
    params: NelsonFiberParams, p: np.ndarray, shift: np.ndarray | None = None, couplings: np.ndarray | None = None
) -> SparseOperator:
    # every ladder operator enters as a_i - shift_i, so shift=None is H(p) and
    # shift=√w f is the exact conjugation W(f) H(p) W(f)*
    basis = params.basis
    grid = params.grid
    n = basis.size
    ident = sp.identity(n, dtype=complex, format="csr")
    phi = np.zeros(basis.n_modes, dtype=complex) if shift is None else np.asarray(shift, dtype=complex)
    shifted = bool(np.any(phi))

    def number_like(x: np.ndarray) -> sp.csr_matrix:
        diag = sp.diags((basis.states @ x).astype(complex), format="csr")
        if not shifted:
            return diag
        raising = ladder_sum(basis, x * phi)
        return diag - raising - raising.conj().T + float(x @ np.abs(phi) ** 2) * ident

    def field_like(c: np.ndarray) -> sp.csr_matrix:
        raising = ladder_sum(basis, c.astype(complex))
        out = raising + raising.conj().T
        if shifted:
            out = out - 2.0 * float(c @ phi.real) * ident
        return out

    e, m = params.coupling, params.mass
    c = params.mode_couplings if couplings is None else couplings
    H = number_like(grid.abs_momenta)
    for mu in range(grid.dimension):
        Q = p[mu] * ident - number_like(grid.momenta[:, mu])
        H = H + (Q @ Q) / (2.0 * m)
        if params.variant == "transversal" and e != 0.0:
            A = field_like(c * grid.polarizations[:, mu])
            H = H - (e / (2.0 * m)) * (Q @ A + A @ Q)
            if params.a_squared:
                H = H + (e**2 / (2.0 * m)) * (A @ A)

    if params.variant == "scalar" and e != 0.0:
        H = H + e * field_like(c)

    return SparseOperator(basis, H).as_hermitian()


def fiber_hamiltonian(params: NelsonFiberParams, p, split: float | None = None) -> SparseOperator:
    """H(p); with a ``split`` only the modes with ``|k| >= split`` stay coupled."""
    vec = _momentum(params, p)
    if split is None:
        return _assemble(params, vec)
    return _assemble(params, vec, couplings=params.mode_couplings * (params.grid.abs_momenta >= split))


def second_order_shift(params: NelsonFiberParams, p) -> float:
    """Rayleigh–Schrödinger shift of the vacuum level of H(p) through order e²."""
    vec = _momentum(params, p)
    grid = params.grid
    k = grid.abs_momenta
    m, e = params.mass, params.coupling
    gaps = k - grid.momenta @ vec / m + k**2 / (2.0 * m)
    c = params.mode_couplings

    if params.variant == "scalar":
        return float(-np.sum((e * c) ** 2 / gaps))

    elements = (e / m) * c * (grid.polarizations @ vec)
    shift = -np.sum(elements**2 / gaps)
    if params.a_squared:
        shift += e**2 / (2.0 * m) * np.sum(c**2 * np.sum(grid.polarizations**2, axis=1))
    return float(shift)


@dataclasses.dataclass(frozen=True, eq=False)
class DispersionTable:
    momenta: np.ndarray
    energies: np.ndarray
    velocities: np.ndarray
    residuals: np.ndarray
    failures: tuple[str | None, ...]
    step: float

    def __len__(self) -> int:
        return self.momenta.shape[0]

    def index_of(self, p) -> int | None:
        vec = np.atleast_1d(np.asarray(p, dtype=float))
        slack = 1e-12 * max(1.0, float(np.abs(vec).max(initial=0.0)))
        hits = np.flatnonzero(np.all(np.abs(self.momenta - vec) <= slack, axis=1))
        return int(hits[0]) if hits.size else None

    @property
    def failed(self) -> bool:
        return any(f is not None for f in self.failures)


def velocity_stencil(p, step: float, richardson: bool = False) -> list[np.ndarray]:
    """``p`` and its central-difference neighbours along every axis."""
    center = np.atleast_1d(np.asarray(p, dtype=float))
    points = [center]
    steps = (step, step / 2.0) if richardson else (step,)
    for h in steps:
        for mu in range(center.shape[0]):
            offset = np.zeros_like(center)
            offset[mu] = h
            points.extend((center + offset, center - offset))
    return points


def group_velocity(table: DispersionTable, p, step: float | None = None) -> np.ndarray:
    h = table.step if step is None else step
    center = np.atleast_1d(np.asarray(p, dtype=float))
    out = np.zeros_like(center)
    for mu in range(center.shape[0]):
        offset = np.zeros_like(center)
        offset[mu] = h
        plus, minus = table.index_of(center + offset), table.index_of(center - offset)
        if plus is None or minus is None:
            raise RangeError(f"Momentum {center.tolist()} is not interior to the table at step {h}.")
        for idx in (plus, minus):
            if table.failures[idx] is not None:
                raise RangeError(f"Neighbour {table.momenta[idx].tolist()} failed: {table.failures[idx]}")
        out[mu] = (table.energies[plus] - table.energies[minus]) / (2.0 * h)
    return out


def richardson_velocity(table: DispersionTable, p) -> tuple[np.ndarray, float]:
    """Step-halving extrapolation of v_p and the discretization bound ``|v_h - v_{h/2}|``."""
    coarse = group_velocity(table, p, table.step)
    fine = group_velocity(table, p, table.step / 2.0)
    return (4.0 * fine - coarse) / 3.0, float(np.max(np.abs(coarse - fine)))


def dispersion(
    params: NelsonFiberParams,
    p_list: typing.Iterable,
    tol: float = 1e-10,
    seed: int = 0,
    step: float | None = None,
) -> DispersionTable:
    """E(p) per momentum; failed rows carry NaN and a failure message."""
    momenta = np.array([_momentum(params, p) for p in p_list], dtype=float).reshape(-1, params.grid.dimension)
    energies = np.full(len(momenta), np.nan)
    residuals = np.full(len(momenta), np.nan)
    failures: list[str | None] = []

    for i, p in enumerate(momenta):
        try:
            result = spectral.lowest_eigenpair(fiber_hamiltonian(params, p), tol=tol, seed=seed)
        except IrlabError as exc:
            logger.warning(f"Dispersion row p={p.tolist()} failed: {exc}")
            failures.append(str(exc))
            continue
        energies[i] = result.eigenvalue
        residuals[i] = result.residual
        failures.append(None)

    table = DispersionTable(
        momenta,
        energies,
        np.full_like(momenta, np.nan),
        residuals,
        tuple(failures),
        1e-2 * params.grid.uv_cutoff if step is None else step,
    )
    for i, p in enumerate(momenta):
        try:
            table.velocities[i] = group_velocity(table, p)
        except RangeError:
            pass
    return table


def velocity_at(params: NelsonFiberParams, p, tol: float = 1e-10, seed: int = 0, step: float | None = None) -> np.ndarray:
    h = 1e-2 * params.grid.uv_cutoff if step is None else step
    table = dispersion(params, velocity_stencil(p, h), tol=tol, seed=seed, step=h)
    return group_velocity(table, p)


def cloud_function(params: NelsonFiberParams, p, v_p=None) -> CloudFunction:
    """Infrared cloud f_p on the grid.

    The radial factor is ``-e ρ̃(k) / (√2 |k|^{3/2})``. The transversal variant
    multiplies by ``ε·P_tr v / (1 - k̂·v)``; the scalar variant by
    ``-1 / (1 - k̂·v)``, the sign that makes ``W(f_p)`` cancel the infrared part
    of the ground-state cloud of the ``+e Φ`` coupling.
    """
    grid = params.grid
    if v_p is None:
        v_p = velocity_at(params, p)
    v = np.atleast_1d(np.asarray(v_p, dtype=float))
    if v.shape != (grid.dimension,):
        raise BadArgument(f"Velocity {v_p} is not a {grid.dimension}-vector.")
    speed = float(np.linalg.norm(v))
    if speed >= 1.0:
        raise DomainError(f"Group velocity |v_p|={speed} is not below the speed of light.")

    k = grid.abs_momenta
    radial = -params.coupling * params.profile(k) / (math.sqrt(2.0) * k**1.5)
    denominators = 1.0 - grid.directions @ v
    if params.variant == "scalar":
        amplitudes = -radial / denominators
    else:
        amplitudes = radial * (grid.polarizations @ v) / denominators
    return CloudFunction(grid, amplitudes.astype(complex))


def soft_photon_frequencies(params: NelsonFiberParams, v_p) -> np.ndarray:
    """``|k| - k·v_p + |k|²/2m``, the energy one extra photon adds to the fiber at velocity v_p."""
    grid = params.grid
    v = np.atleast_1d(np.asarray(v_p, dtype=float))
    if v.shape != (grid.dimension,):
        raise BadArgument(f"Velocity {v_p} is not a {grid.dimension}-vector.")
    k = grid.abs_momenta
    return k - grid.momenta @ v + k**2 / (2.0 * params.mass)


def infrared_split(grid: ModeGrid, t: float) -> float:
    """Cutoff separating the cloud a rung at time t carries from the one left to the dynamics.

    ``Λ r^{-(1 + log2 t)}`` with ``r`` the radial bin ratio, so the split moves one
    bin down per time octave and always falls on a bin edge. It never drops below
    λ; ``t <= 0`` keeps every mode.
    """
    if t <= 0.0:
        return grid.ir_cutoff
    per_decade = grid.recipe.points_per_decade if grid.recipe is not None else 1
    split = grid.uv_cutoff * 10.0 ** (-(1.0 + math.log2(t)) / per_decade)
    return max(split, grid.ir_cutoff)


@dataclasses.dataclass(frozen=True)
class CloudNormRow:
    ir_cutoff: float
    cloud_norm: float
    bdg_norms: tuple[float, ...]


def cloud_norm_schedule(
    params: NelsonFiberParams, p, v_p, schedule: typing.Sequence[float], times: typing.Sequence[float]
) -> list[CloudNormRow]:
    """``‖f_p‖²`` and ``‖(e^{-iωt} - 1) f_p‖²`` on the grid of each cutoff.

    ω is :func:`soft_photon_frequencies` at v_p.
    """
    if v_p is None:
        v_p = velocity_at(params, p)
    rows = []
    for ir_cutoff in schedule:
        local = params.with_ir_cutoff(ir_cutoff)
        f = cloud_function(local, p, v_p)
        omega = soft_photon_frequencies(local, v_p)
        bdg = tuple((f.free_evolved(t, omega) - f).norm_squared() for t in times)
        rows.append(CloudNormRow(float(ir_cutoff), f.norm_squared(), bdg))
    return rows


@dataclasses.dataclass(frozen=True, eq=False)
class Dressing:
    operator: SparseOperator
    bare: SparseOperator
    cloud: CloudFunction
    leakage: float
    method: str


def dressed_hamiltonian(
    params: NelsonFiberParams,
    p,
    v_p=None,
    method: str = "auto",
    leak_bound: float = 0.05,
    dense_limit: int = DENSE_LIMIT,
) -> Dressing:
    """``W(f_p) H(p) W(f_p)*``.

    ``dense`` conjugates numerically with the exponentiated Weyl matrix;
    ``substitution`` rebuilds H(p) with ``a_i -> a_i - √w_i f_i``, which is the
    same map before truncation and scales past the dense limit.
    """
    vec = _momentum(params, p)
    bare = fiber_hamiltonian(params, vec)
    f = cloud_function(params, vec, v_p)
    basis = params.basis
    if not np.any(f.amplitudes):
        return Dressing(bare, bare, f, 0.0, "identity")

    if method == "auto":
        method = "dense" if basis.size <= dense_limit else "substitution"
    if method not in ("dense", "substitution"):
        raise BadArgument(f"Unknown dressing method {method}.")

    weyl = weyl_operator(basis, f, method="dense" if method == "dense" else "krylov")
    leak = weyl.leakage()
    if leak > leak_bound:
        raise LeakageError(
            f"Cloud with ‖f_p‖²={f.norm_squared():.4g} leaks {leak:.3e} onto the truncation boundary"
            f" (bound {leak_bound:.1e}); increase max_total/max_per_mode"
            f" (now {basis.max_total}/{basis.max_per_mode}).",
            leakage=leak,
            bound=leak_bound,
        )

    if method == "dense":
        W = weyl.dense
        conjugated = W @ bare.to_dense() @ W.conj().T
        scale = max(bare.norm_bound(), 1.0)
        conjugated[np.abs(conjugated) < 1e-15 * scale] = 0.0
        operator = SparseOperator(basis, sp.csr_matrix(conjugated)).as_hermitian(tol=1e-9 * scale)
    else:
        operator = _assemble(params, vec, shift=f.coefficients)

    logger.debug(f"Dressed H(p) via {method}, ‖f_p‖²={f.norm_squared():.4g}, leakage {leak:.2e}.")
    return Dressing(operator, bare, f, leak, method)


@dataclasses.dataclass(frozen=True)
class IrScanRow:
    ir_cutoff: float
    energy: float
    mean_photon_number: float
    vacuum_overlap: float
    dressed_mean_photon_number: float
    residual: float
    velocity: tuple[float, ...] = ()
    leakage: float = math.nan
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def ir_scan_row(
    params: NelsonFiberParams,
    p,
    ir_cutoff: float,
    velocity=None,
    tol: float = 1e-10,
    seed: int = 0,
    leak_bound: float = 0.05,
) -> IrScanRow:
    local = params.with_ir_cutoff(ir_cutoff)
    vec = _momentum(local, p)
    ground = spectral.lowest_eigenpair(fiber_hamiltonian(local, vec), tol=tol, seed=seed)
    number = number_operator(local.basis)

    v_p = velocity_at(local, vec, tol=tol, seed=seed) if velocity is None else np.asarray(velocity, dtype=float)
    dressing = dressed_hamiltonian(local, vec, v_p, leak_bound=leak_bound)
    dressed = spectral.lowest_eigenpair(dressing.operator, tol=tol, seed=seed)

    return IrScanRow(
        ir_cutoff=float(ir_cutoff),
        energy=ground.eigenvalue,
        mean_photon_number=float(ground.eigenvector.expectation(number)),
        vacuum_overlap=min(1.0, float(abs(ground.eigenvector.amplitudes[0]) ** 2)),
        dressed_mean_photon_number=float(dressed.eigenvector.expectation(number)),
        residual=max(ground.residual, dressed.residual),
        velocity=tuple(float(x) for x in v_p),
        leakage=dressing.leakage,
    )


def ir_scan(
    params: NelsonFiberParams,
    p,
    schedule: typing.Sequence[float],
    velocity=None,
    tol: float = 1e-10,
    seed: int = 0,
    leak_bound: float = 0.05,
) -> list[IrScanRow]:
    """One row per cutoff of a strictly decreasing schedule; failures are marked, not raised."""
    if any(b >= a for a, b in zip(schedule[:-1], schedule[1:])):
        raise BadArgument("The λ schedule must be strictly decreasing.")

    rows = []
    for ir_cutoff in schedule:
        try:
            rows.append(ir_scan_row(params, p, ir_cutoff, velocity, tol, seed, leak_bound))
        except IrlabError as exc:
            logger.warning(f"IR scan row λ={ir_cutoff} failed: {exc}")
            nan = math.nan
            rows.append(IrScanRow(float(ir_cutoff), nan, nan, nan, nan, nan, error=str(exc)))
    return rows


@dataclasses.dataclass(frozen=True)
class DollardPhases:
    """Unit-modulus phases of the approximating vectors; left unspecified by the construction."""

    c_p: float = 0.0
    gamma_prime: float = 0.0
    gamma_double_prime: float = 0.0
    gamma: float = 0.0

    def factor(self, t: float) -> complex:
        return complex(np.exp(1j * (-self.c_p * t + self.gamma_prime + self.gamma_double_prime + self.gamma)))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "DollardPhases":
        return cls(*(float(x) for x in rng.uniform(-math.pi, math.pi, size=4)))


@dataclasses.dataclass(frozen=True, eq=False)
class ApproximatingVector:
    vector: FockVector
    time: float
    cloud_norm: float
    leakage: float
    energy: float
    phases: DollardPhases


def _phase(t: float, energy: float, phases: DollardPhases) -> complex:
    return complex(np.exp(-1j * t * energy)) * phases.factor(t)


def _splits(grid: ModeGrid, times: typing.Sequence[float], splits: typing.Sequence[float] | None) -> list[float]:
    if splits is None:
        return [infrared_split(grid, t) for t in times]
    if len(splits) != len(times):
        raise BadArgument(f"Got {len(splits)} splits for {len(times)} times.")
    for split in splits:
        if split < grid.ir_cutoff:
            raise BadArgument(f"Split {split} lies below the grid cutoff λ={grid.ir_cutoff}.")
    return [float(s) for s in splits]


def _rung(
    H: SparseOperator, moved: FockVector, t: float, energy: float, ph: DollardPhases, cloud_norm: float, tol: float
) -> ApproximatingVector:
    evolved = spectral.evolve(H, moved, -t, tol=tol).vector
    return ApproximatingVector(
        evolved * _phase(t, energy, ph), float(t), cloud_norm, moved.boundary_weight(), energy, ph
    )


def cfp_ladder(
    params: NelsonFiberParams,
    p,
    times: typing.Sequence[float],
    velocity=None,
    phases: typing.Sequence[DollardPhases] | None = None,
    tol: float = 1e-10,
    seed: int = 0,
    splits: typing.Sequence[float] | None = None,
) -> list[ApproximatingVector]:
    """``e^{itH(p)} W(e^{-iωt} f_p^{≥σ}) e^{-itE_σ} φ_p^σ`` for each t.

    φ_p^σ is the ground state of H(p) with the modes below σ uncoupled, E_σ its
    energy and f_p^{≥σ} the cloud on the modes above σ. The soft cloud below σ is
    left to the full dynamics. σ defaults to :func:`infrared_split` of each rung
    and ω is :func:`soft_photon_frequencies`.
    """
    vec = _momentum(params, p)
    grid = params.grid
    v_p = velocity_at(params, vec, tol=tol, seed=seed) if velocity is None else velocity
    H = fiber_hamiltonian(params, vec)
    f = cloud_function(params, vec, v_p)
    omega = soft_photon_frequencies(params, v_p)

    grounds: dict[float, spectral.EigResult] = {}
    out = []
    for i, (t, split) in enumerate(zip(times, _splits(grid, times, splits))):
        if split not in grounds:
            cut = H if split <= grid.abs_momenta.min() else fiber_hamiltonian(params, vec, split)
            grounds[split] = spectral.lowest_eigenpair(cut, tol=tol, seed=seed)
        ground = grounds[split]
        g = f.above(split).free_evolved(t, omega)
        moved = weyl_operator(params.basis, g).apply(ground.eigenvector)
        ph = phases[i] if phases is not None else DollardPhases()
        out.append(_rung(H, moved, t, ground.eigenvalue, ph, g.norm_squared(), tol))
        logger.debug(f"CFP rung t={t:g} split at {split:.4g}, ‖f‖²={out[-1].cloud_norm:.4g}.")
    return out


def bdg_ladder(
    params: NelsonFiberParams,
    p,
    times: typing.Sequence[float],
    velocity=None,
    phases: typing.Sequence[DollardPhases] | None = None,
    tol: float = 1e-10,
    seed: int = 0,
    leak_bound: float = 0.05,
    splits: typing.Sequence[float] | None = None,
) -> list[ApproximatingVector]:
    """``e^{itH(p)} W((e^{-iωt} - 1) f_p^{≥σ}) Φ_p`` with Φ_p the ground state of the dressed H(p).

    σ and ω as in :func:`cfp_ladder`; with σ = λ this is the plain BDG vector.
    """
    vec = _momentum(params, p)
    v_p = velocity_at(params, vec, tol=tol, seed=seed) if velocity is None else velocity
    dressing = dressed_hamiltonian(params, vec, v_p, leak_bound=leak_bound)
    ground = spectral.lowest_eigenpair(dressing.operator, tol=tol, seed=seed)
    omega = soft_photon_frequencies(params, v_p)

    out = []
    for i, (t, split) in enumerate(zip(times, _splits(params.grid, times, splits))):
        hard = dressing.cloud.above(split)
        g = hard.free_evolved(t, omega) - hard
        moved = weyl_operator(params.basis, g).apply(ground.eigenvector)
        ph = phases[i] if phases is not None else DollardPhases()
        out.append(_rung(dressing.bare, moved, t, ground.eigenvalue, ph, g.norm_squared(), tol))
    return out


def cfp_fiber_vector(
    params: NelsonFiberParams,
    p,
    t: float,
    ir_cutoff: float | None = None,
    velocity=None,
    phases: DollardPhases | None = None,
    tol: float = 1e-10,
    seed: int = 0,
) -> ApproximatingVector:
    """The CFP vector with φ_p and the cloud cut at ``ir_cutoff`` (default: the grid's λ).

    At t = 0 and the grid's λ this is ``W(f_p) φ_p``.
    """
    split = params.grid.ir_cutoff if ir_cutoff is None else ir_cutoff
    return cfp_ladder(params, p, [t], velocity, None if phases is None else [phases], tol, seed, [split])[0]


def check_bdg_cloud_bounded(
    params: NelsonFiberParams, p, v_p, schedule: typing.Sequence[float], t: float, bound: float = 0.2
) -> list[CloudNormRow]:
    """Raise DomainError unless ``‖(e^{-iωt} - 1) f_p‖²`` stays flat while ``‖f_p‖²`` grows.

    Compares the last step of a decreasing λ schedule: the BDG cloud may grow by
    at most ``bound`` times the growth of ``‖f_p‖²``.
    """
    if len(schedule) < 2:
        raise BadArgument("The boundedness check needs at least two cutoffs.")
    rows = cloud_norm_schedule(params, p, v_p, schedule, [t])
    before, after = rows[-2], rows[-1]
    growth = after.bdg_norms[0] - before.bdg_norms[0]
    cloud_growth = after.cloud_norm - before.cloud_norm
    if growth > bound * abs(cloud_growth) + 1e-12:
        raise DomainError(
            f"‖(e^{{-iωt}}-1)f_p‖² at t={t:g} grew by {growth:.3e} from λ={before.ir_cutoff:g} to"
            f" λ={after.ir_cutoff:g} while ‖f_p‖² grew by {cloud_growth:.3e} (bound {bound:g})."
        )
    return rows


def bdg_fiber_vector(
    params: NelsonFiberParams,
    p,
    t: float,
    velocity=None,
    phases: DollardPhases | None = None,
    tol: float = 1e-10,
    seed: int = 0,
    leak_bound: float = 0.05,
    schedule: typing.Sequence[float] | None = None,
    bound: float = 0.2,
) -> ApproximatingVector:
    """The BDG vector at the grid's λ; at t = 0 this is Φ_p.

    With a λ ``schedule`` the cloud is first checked with :func:`check_bdg_cloud_bounded`.
    """
    vec = _momentum(params, p)
    v_p = velocity_at(params, vec, tol=tol, seed=seed) if velocity is None else velocity
    if schedule is not None:
        check_bdg_cloud_bounded(params, vec, v_p, schedule, t, bound)
    ph = None if phases is None else [phases]
    return bdg_ladder(params, vec, [t], v_p, ph, tol, seed, leak_bound, [params.grid.ir_cutoff])[0]


def phase_quotient_distance(a: FockVector, b: FockVector) -> float:
    """``√(2 - 2|<a, b>|)`` for the normalized vectors; blind to global phases."""
    overlap = abs(a.inner(b)) / (a.norm() * b.norm())
    return math.sqrt(max(0.0, 2.0 - 2.0 * overlap))


def cauchy_residuals(vectors: typing.Sequence[FockVector | ApproximatingVector]) -> np.ndarray:
    vecs = [v.vector if isinstance(v, ApproximatingVector) else v for v in vectors]
    n = len(vecs)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = phase_quotient_distance(vecs[i], vecs[j])
    return out


def ladder_residuals(vectors: typing.Sequence[FockVector | ApproximatingVector]) -> np.ndarray:
    """Distances between consecutive rungs of a time ladder."""
    r = cauchy_residuals(vectors)
    return np.array([r[i, i + 1] for i in range(len(vectors) - 1)])

"""
Truncated bosonic Fock space over a finite photon mode grid.

Momentum integrals become quadrature sums, ``∫ dk F(k) ~ Σ_i w_i F(k_i)``. A mode
carries its quadrature weight and the smeared operators absorb ``√w_i`` so that
``a(g)``/``a*(h)`` obey ``[a(g), a*(h)] = <g, h> = Σ_i w_i conj(g_i) h_i`` on the
untruncated part of the space.
"""

import dataclasses
import functools
import logging
import math
import typing

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from lab.errors import BadArgument, CapacityError, LeakageError

__all__ = (
    "BASIS_HARD_LIMIT",
    "DENSE_LIMIT",
    "Mode",
    "GridRecipe",
    "ModeGrid",
    "FockBasis",
    "FockVector",
    "SparseOperator",
    "CloudFunction",
    "WeylOperator",
    "direction_set",
    "polarization_vectors",
    "count_states",
    "build_basis",
    "vacuum",
    "creation_op",
    "annihilation_op",
    "ladder_sum",
    "diagonal_operator",
    "smeared_field_ops",
    "free_photon_hamiltonian",
    "photon_momentum",
    "number_operator",
    "weyl_operator",
    "coherent_state",
    "weyl_cocycle_check",
)

logger = logging.getLogger("irlab.fock")

BASIS_HARD_LIMIT = 2_000_000
DENSE_LIMIT = 4096
HERMITIAN_TOL = 1e-12


@dataclasses.dataclass(frozen=True)
class Mode:
    index: int
    momentum: tuple[float, ...]
    polarization: int | None
    weight: float

    def __post_init__(self):
        if not self.momentum or math.hypot(*self.momentum) <= 0.0:
            raise BadArgument(f"Mode {self.index} has zero momentum.")
        if not self.weight > 0.0:
            raise BadArgument(f"Mode {self.index} has non-positive weight {self.weight}.")
        if self.polarization not in (None, 1, 2):
            raise BadArgument(f"Mode {self.index} has invalid polarization {self.polarization}.")

    @property
    def abs_momentum(self) -> float:
        return math.hypot(*self.momentum)

    @property
    def direction(self) -> np.ndarray:
        k = np.asarray(self.momentum, dtype=float)
        return k / np.linalg.norm(k)


def _lebedev(axes_w: float, edges_w: float | None, corners_w: float | None) -> tuple[np.ndarray, np.ndarray]:
    dirs: list[tuple[float, float, float]] = []
    weights: list[float] = []
    for axis in range(3):
        for sign in (1.0, -1.0):
            v = [0.0, 0.0, 0.0]
            v[axis] = sign
            dirs.append(tuple(v))
            weights.append(axes_w)
    if edges_w is not None:
        s = 1.0 / math.sqrt(2.0)
        for a, b in ((0, 1), (0, 2), (1, 2)):
            for sa in (1.0, -1.0):
                for sb in (1.0, -1.0):
                    v = [0.0, 0.0, 0.0]
                    v[a], v[b] = sa * s, sb * s
                    dirs.append(tuple(v))
                    weights.append(edges_w)
    if corners_w is not None:
        s = 1.0 / math.sqrt(3.0)
        for sx in (1.0, -1.0):
            for sy in (1.0, -1.0):
                for sz in (1.0, -1.0):
                    dirs.append((sx * s, sy * s, sz * s))
                    weights.append(corners_w)
    return np.array(dirs), 4.0 * math.pi * np.array(weights)


def _gauss_product(n_theta: int) -> tuple[np.ndarray, np.ndarray]:
    if n_theta < 2:
        raise BadArgument(f"Gauss direction set needs at least 2 polar nodes, got {n_theta}.")
    n_phi = 2 * n_theta
    u, wu = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * math.pi * (np.arange(n_phi) + 0.5) / n_phi
    sin_t = np.sqrt(1.0 - u**2)
    dirs = np.stack(
        [
            np.outer(sin_t, np.cos(phi)).ravel(),
            np.outer(sin_t, np.sin(phi)).ravel(),
            np.repeat(u, n_phi),
        ],
        axis=1,
    )
    weights = np.repeat(wu, n_phi) * (2.0 * math.pi / n_phi)
    return dirs, weights


@functools.cache
def direction_set(name: str, dimension: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions and solid-angle weights; the weights sum to the sphere area."""
    if dimension == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if dimension != 3:
        raise BadArgument(f"Dimension {dimension} is not supported (use 1 or 3).")

    if name == "axes":
        dirs, weights = _lebedev(1.0 / 6.0, None, None)
    elif name == "lebedev14":
        dirs, weights = _lebedev(1.0 / 15.0, None, 3.0 / 40.0)
    elif name == "lebedev26":
        dirs, weights = _lebedev(1.0 / 21.0, 4.0 / 105.0, 9.0 / 280.0)
    elif name.startswith("gauss") and name[5:].isdigit():
        dirs, weights = _gauss_product(int(name[5:]))
    else:
        raise BadArgument(f"Direction set {name} does not exist.")

    dirs.setflags(write=False)
    weights.setflags(write=False)
    return dirs, weights


def polarization_vectors(direction: typing.Sequence[float] | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal transversal pair completing ``k̂``.

    The first vector is the projection of the coordinate axis along which ``k̂``
    has its smallest component (lowest axis index on ties); the second is
    ``k̂ × e1``.
    """
    k = np.asarray(direction, dtype=float)
    k = k / np.linalg.norm(k)
    axis = int(np.argmin(np.abs(k)))
    e = np.zeros(3)
    e[axis] = 1.0
    e1 = e - (e @ k) * k
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(k, e1)
    return e1, e2


@dataclasses.dataclass(frozen=True)
class GridRecipe:
    dimension: int
    ir_cutoff: float
    uv_cutoff: float
    points_per_decade: int = 1
    directions: str = "axes"
    polarized: bool = False

    def radial_edges(self) -> np.ndarray:
        # anchored at the UV end so that grids for a decreasing λ schedule are nested
        decades = math.log10(self.uv_cutoff / self.ir_cutoff) * self.points_per_decade
        n_bins = round(decades) if abs(decades - round(decades)) < 1e-9 else math.ceil(decades)
        n_bins = max(n_bins, 1)
        edges = [self.uv_cutoff * 10.0 ** (-j / self.points_per_decade) for j in range(n_bins)]
        edges.append(self.ir_cutoff)
        return np.array(edges[::-1])


@dataclasses.dataclass(frozen=True, eq=False)
class ModeGrid:
    dimension: int
    modes: tuple[Mode, ...]
    ir_cutoff: float
    uv_cutoff: float
    recipe: GridRecipe | None = None

    def __post_init__(self):
        if self.dimension not in (1, 3):
            raise BadArgument(f"Grid dimension {self.dimension} is not supported (use 1 or 3).")
        if not 0.0 < self.ir_cutoff <= self.uv_cutoff:
            raise BadArgument(
                f"Cutoffs must satisfy 0 < λ <= Λ, got λ={self.ir_cutoff}, Λ={self.uv_cutoff}."
            )
        if not self.modes:
            raise BadArgument("Mode grid is empty.")

        seen = set()
        slack = 1e-12 * self.uv_cutoff
        for i, mode in enumerate(self.modes):
            if mode.index != i:
                raise BadArgument(f"Mode at position {i} carries index {mode.index}.")
            if len(mode.momentum) != self.dimension:
                raise BadArgument(f"Mode {i} is not {self.dimension}-dimensional.")
            if not self.ir_cutoff - slack <= mode.abs_momentum <= self.uv_cutoff + slack:
                raise BadArgument(f"Mode {i} with |k|={mode.abs_momentum} lies outside [λ, Λ].")
            key = (mode.momentum, mode.polarization)
            if key in seen:
                raise BadArgument(f"Mode {i} duplicates momentum and polarization of an earlier mode.")
            seen.add(key)

    @classmethod
    def build(cls, recipe: GridRecipe) -> "ModeGrid":
        """Logarithmic radial shells times a fixed direction set.

        Each radial bin ``[k_lo, k_hi]`` gets the node at which ``w = w_dir k^d log(k_hi/k_lo)``,
        so ``Σ w / |k|^d`` is exact bin by bin: log-divergent shell integrals are
        resolved with a single node per bin.
        """
        if recipe.points_per_decade < 1:
            raise BadArgument(f"Need at least one radial point per decade, got {recipe.points_per_decade}.")
        if not 0.0 < recipe.ir_cutoff < recipe.uv_cutoff:
            raise BadArgument(
                f"Grid needs 0 < λ < Λ, got λ={recipe.ir_cutoff}, Λ={recipe.uv_cutoff}."
            )
        if recipe.polarized and recipe.dimension != 3:
            raise BadArgument("Polarized modes need a 3-dimensional grid.")

        d = recipe.dimension
        dirs, dir_weights = direction_set(recipe.directions, d)
        edges = recipe.radial_edges()
        pols: tuple[int | None, ...] = (1, 2) if recipe.polarized else (None,)

        modes: list[Mode] = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            shell = (hi**d - lo**d) / d
            node = (shell / math.log(hi / lo)) ** (1.0 / d)
            for direction, w_dir in zip(dirs, dir_weights):
                momentum = tuple(float(c) for c in node * direction)
                for pol in pols:
                    modes.append(Mode(len(modes), momentum, pol, float(w_dir * shell)))

        return cls(d, tuple(modes), recipe.ir_cutoff, recipe.uv_cutoff, recipe)

    def with_ir_cutoff(self, ir_cutoff: float) -> "ModeGrid":
        if self.recipe is None:
            raise BadArgument("Only grids built from a recipe can be rebuilt at another cutoff.")
        return ModeGrid.build(dataclasses.replace(self.recipe, ir_cutoff=ir_cutoff))

    def __len__(self) -> int:
        return len(self.modes)

    @functools.cached_property
    def momenta(self) -> np.ndarray:
        return np.array([m.momentum for m in self.modes], dtype=float)

    @functools.cached_property
    def abs_momenta(self) -> np.ndarray:
        return np.linalg.norm(self.momenta, axis=1)

    @functools.cached_property
    def directions(self) -> np.ndarray:
        return self.momenta / self.abs_momenta[:, None]

    @functools.cached_property
    def weights(self) -> np.ndarray:
        return np.array([m.weight for m in self.modes], dtype=float)

    @functools.cached_property
    def polarizations(self) -> np.ndarray:
        """Polarization vector per mode, zero rows for scalar modes."""
        out = np.zeros((len(self.modes), 3))
        for i, mode in enumerate(self.modes):
            if mode.polarization is not None:
                out[i] = polarization_vectors(mode.momentum)[mode.polarization - 1]
        return out

    @property
    def polarized(self) -> bool:
        return any(m.polarization is not None for m in self.modes)

    def shell_mask(self, lo: float | None = None, hi: float | None = None) -> np.ndarray:
        """Modes whose node lies in ``(lo, hi]``."""
        k = self.abs_momenta
        mask = np.ones(len(k), dtype=bool)
        if lo is not None:
            mask &= k > lo
        if hi is not None:
            mask &= k <= hi
        return mask


def count_states(n_modes: int, max_total: int, max_per_mode: int) -> int:
    # coefficients of (1 + x + ... + x^cap)^M up to degree N, python ints
    ways = [1] + [0] * max_total
    for _ in range(n_modes):
        nxt = [0] * (max_total + 1)
        for total, count in enumerate(ways):
            if not count:
                continue
            for occ in range(min(max_per_mode, max_total - total) + 1):
                nxt[total + occ] += count
        ways = nxt
    return sum(ways)


def _compositions(total: int, n_modes: int, cap: int) -> typing.Iterator[tuple[int, ...]]:
    if n_modes == 1:
        if total <= cap:
            yield (total,)
        return
    for first in range(min(total, cap), -1, -1):
        rest = total - first
        if rest > cap * (n_modes - 1):
            break
        for tail in _compositions(rest, n_modes - 1, cap):
            yield (first, *tail)


class FockBasis:
    """Occupation-number basis, graded lexicographic: by total, then first mode descending."""

    def __init__(self, grid: ModeGrid, max_total: int, max_per_mode: int, states: np.ndarray):
        self.grid = grid
        self.max_total = max_total
        self.max_per_mode = max_per_mode
        self.states = states
        self.states.setflags(write=False)
        self._lookup = {row.tobytes(): i for i, row in enumerate(states)}
        self._raise_tables: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def n_modes(self) -> int:
        return self.states.shape[1]

    def __repr__(self) -> str:
        return (
            f"FockBasis(modes={self.n_modes}, max_total={self.max_total}, "
            f"max_per_mode={self.max_per_mode}, size={self.size})"
        )

    def index_of(self, occupation: typing.Sequence[int]) -> int | None:
        row = np.asarray(occupation, dtype=self.states.dtype)
        return self._lookup.get(row.tobytes())

    @functools.cached_property
    def totals(self) -> np.ndarray:
        return self.states.sum(axis=1)

    @functools.cached_property
    def boundary_mask(self) -> np.ndarray:
        """States from which some raising transition is dropped by the caps."""
        return (self.totals >= self.max_total) | (self.states >= self.max_per_mode).any(axis=1)

    def raise_table(self, mode_index: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(source, target, n_source)`` for every kept transition ``n_i -> n_i + 1``."""
        if not 0 <= mode_index < self.n_modes:
            raise BadArgument(f"Mode {mode_index} out of range for a grid with {self.n_modes} modes.")

        cached = self._raise_tables.get(mode_index)
        if cached is not None:
            return cached

        occ = self.states[:, mode_index]
        src = np.flatnonzero((occ < self.max_per_mode) & (self.totals < self.max_total))
        raised = self.states[src].copy()
        raised[:, mode_index] += 1
        dst = np.fromiter((self._lookup[row.tobytes()] for row in raised), dtype=np.int64, count=len(src))
        table = (src, dst, occ[src].astype(float))
        self._raise_tables[mode_index] = table
        return table


def build_basis(
    grid: ModeGrid, max_total: int, max_per_mode: int, hard_limit: int = BASIS_HARD_LIMIT
) -> FockBasis:
    if max_total < 0:
        raise BadArgument(f"max_total must be >= 0, got {max_total}.")
    if max_per_mode < 1:
        raise BadArgument(f"max_per_mode must be >= 1, got {max_per_mode}.")

    n_modes = len(grid.modes)
    size = count_states(n_modes, max_total, max_per_mode)
    if size > hard_limit:
        raise CapacityError(
            f"Basis with {n_modes} modes, N_max={max_total}, n_cap={max_per_mode} has {size} states,"
            f" above the limit of {hard_limit}.",
            size=size,
            limit=hard_limit,
            params={"modes": n_modes, "max_total": max_total, "max_per_mode": max_per_mode},
        )

    states = np.zeros((size, n_modes), dtype=np.int32)
    row = 0
    for total in range(max_total + 1):
        for occupation in _compositions(total, n_modes, max_per_mode):
            states[row] = occupation
            row += 1

    logger.debug(f"Built basis of {size} states over {n_modes} modes.")
    return FockBasis(grid, max_total, max_per_mode, states)


@dataclasses.dataclass(frozen=True, eq=False)
class FockVector:
    basis: FockBasis
    amplitudes: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.basis.size:
            raise BadArgument(f"Vector has {amps.shape[0]} amplitudes for a basis of {self.basis.size}.")
        if not np.all(np.isfinite(amps)):
            raise BadArgument("Vector has non-finite amplitudes.")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        if self.normalized and abs(self.norm() - 1.0) > 1e-12:
            raise BadArgument(f"Vector flagged normalized has norm {self.norm()}.")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "FockVector":
        n = self.norm()
        if n == 0.0:
            raise BadArgument("Cannot normalize the zero vector.")
        return FockVector(self.basis, self.amplitudes / n, normalized=True)

    def inner(self, other: "FockVector") -> complex:
        """``<self, other>``, antilinear in ``self``."""
        _same_basis(self.basis, other.basis)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def expectation(self, op: "SparseOperator") -> float | complex:
        value = complex(np.vdot(self.amplitudes, op.matrix @ self.amplitudes)) / self.norm() ** 2
        return value.real if op.hermitian else value

    def photon_number_distribution(self) -> np.ndarray:
        probs = np.abs(self.amplitudes) ** 2
        return np.bincount(self.basis.totals, weights=probs, minlength=self.basis.max_total + 1) / probs.sum()

    def boundary_weight(self) -> float:
        """Fraction of the norm sitting on states where the caps drop transitions."""
        probs = np.abs(self.amplitudes) ** 2
        return float(probs[self.basis.boundary_mask].sum() / probs.sum())

    def __add__(self, other: "FockVector") -> "FockVector":
        _same_basis(self.basis, other.basis)
        return FockVector(self.basis, self.amplitudes + other.amplitudes)

    def __sub__(self, other: "FockVector") -> "FockVector":
        _same_basis(self.basis, other.basis)
        return FockVector(self.basis, self.amplitudes - other.amplitudes)

    def __mul__(self, scalar: complex) -> "FockVector":
        return FockVector(self.basis, self.amplitudes * scalar)

    __rmul__ = __mul__


def vacuum(basis: FockBasis) -> FockVector:
    amps = np.zeros(basis.size, dtype=complex)
    amps[0] = 1.0
    return FockVector(basis, amps, normalized=True)


def _same_basis(a: FockBasis, b: FockBasis):
    if a is not b:
        raise BadArgument("Objects live on different Fock bases.")


@dataclasses.dataclass(frozen=True, eq=False)
class SparseOperator:
    basis: FockBasis
    matrix: sp.csr_matrix
    hermitian: bool = False

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        if m.shape != (self.basis.size, self.basis.size):
            raise BadArgument(f"Operator shape {m.shape} does not match basis size {self.basis.size}.")
        m.sum_duplicates()
        m.sort_indices()
        object.__setattr__(self, "matrix", m)
        if self.hermitian:
            defect = self.hermiticity_defect()
            if defect > HERMITIAN_TOL:
                raise BadArgument(f"Operator flagged hermitian has defect {defect:.3e}.")

    @classmethod
    def from_triplets(cls, basis: FockBasis, rows, cols, values, hermitian: bool = False) -> "SparseOperator":
        n = basis.size
        return cls(basis, sp.coo_matrix((values, (rows, cols)), shape=(n, n)).tocsr(), hermitian)

    @classmethod
    def zeros(cls, basis: FockBasis) -> "SparseOperator":
        return cls(basis, sp.csr_matrix((basis.size, basis.size), dtype=complex), True)

    @classmethod
    def identity(cls, basis: FockBasis) -> "SparseOperator":
        return cls(basis, sp.identity(basis.size, dtype=complex, format="csr"), True)

    def hermiticity_defect(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def as_hermitian(self, tol: float = 1e-10) -> "SparseOperator":
        """Re-verify hermiticity up to ``tol`` and symmetrize away the rounding."""
        defect = self.hermiticity_defect()
        if defect > tol:
            raise BadArgument(f"Operator is not hermitian, defect {defect:.3e} above {tol:.1e}.")
        return SparseOperator(self.basis, (self.matrix + self.matrix.conj().T) * 0.5, True)

    def adjoint(self) -> "SparseOperator":
        return SparseOperator(self.basis, self.matrix.conj().T.tocsr(), self.hermitian)

    def apply(self, vector: FockVector) -> FockVector:
        _same_basis(self.basis, vector.basis)
        return FockVector(self.basis, self.matrix @ vector.amplitudes)

    def norm_bound(self) -> float:
        """Max absolute row sum, an upper bound for the spectral norm."""
        if not self.matrix.nnz:
            return 0.0
        return float(abs(self.matrix).sum(axis=1).max())

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def __matmul__(self, other):
        if isinstance(other, FockVector):
            return self.apply(other)
        if isinstance(other, SparseOperator):
            _same_basis(self.basis, other.basis)
            return SparseOperator(self.basis, self.matrix @ other.matrix)
        return NotImplemented

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        _same_basis(self.basis, other.basis)
        return SparseOperator(self.basis, self.matrix + other.matrix, self.hermitian and other.hermitian)

    def __sub__(self, other: "SparseOperator") -> "SparseOperator":
        _same_basis(self.basis, other.basis)
        return SparseOperator(self.basis, self.matrix - other.matrix, self.hermitian and other.hermitian)

    def __mul__(self, scalar: complex) -> "SparseOperator":
        real = np.isreal(scalar)
        return SparseOperator(self.basis, self.matrix * scalar, self.hermitian and bool(real))

    __rmul__ = __mul__

    def __neg__(self) -> "SparseOperator":
        return self * -1.0


@dataclasses.dataclass(frozen=True, eq=False)
class CloudFunction:
    """One-photon amplitudes ``g(k_i)``, one per mode."""

    grid: ModeGrid
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != len(self.grid.modes):
            raise BadArgument(f"Cloud has {amps.shape[0]} amplitudes for {len(self.grid.modes)} modes.")
        if not np.all(np.isfinite(amps)):
            raise BadArgument("Cloud has non-finite amplitudes.")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zeros(cls, grid: ModeGrid) -> "CloudFunction":
        return cls(grid, np.zeros(len(grid.modes), dtype=complex))

    @property
    def coefficients(self) -> np.ndarray:
        """Amplitudes in the orthonormal discrete mode basis, ``√w_i g_i``."""
        return np.sqrt(self.grid.weights) * self.amplitudes

    def norm_squared(self, lo: float | None = None, hi: float | None = None) -> float:
        """``Σ w_i |g_i|²``, optionally restricted to the shell ``lo < |k| <= hi``."""
        dens = self.grid.weights * np.abs(self.amplitudes) ** 2
        if lo is not None or hi is not None:
            dens = dens[self.grid.shell_mask(lo, hi)]
        return float(dens.sum())

    def inner(self, other: "CloudFunction") -> complex:
        self._check(other)
        return complex(np.sum(self.grid.weights * np.conj(self.amplitudes) * other.amplitudes))

    def pointwise(self, factors: np.ndarray) -> "CloudFunction":
        return CloudFunction(self.grid, self.amplitudes * factors)

    def free_evolved(self, t: float, frequencies: np.ndarray | None = None) -> "CloudFunction":
        """``e^{-iω(k)t} g``; ω defaults to the free photon dispersion ``|k|``."""
        omega = self.grid.abs_momenta if frequencies is None else np.asarray(frequencies, dtype=float)
        if omega.shape != (len(self.grid.modes),):
            raise BadArgument(f"Got {omega.size} frequencies for {len(self.grid.modes)} modes.")
        return self.pointwise(np.exp(-1j * omega * t))

    def above(self, split: float) -> "CloudFunction":
        """The cloud on the modes with ``|k| >= split``, zero below."""
        return self.pointwise((self.grid.abs_momenta >= split).astype(float))

    def _check(self, other: "CloudFunction"):
        if other.grid is not self.grid:
            raise BadArgument("Cloud functions live on different mode grids.")

    def __add__(self, other: "CloudFunction") -> "CloudFunction":
        self._check(other)
        return CloudFunction(self.grid, self.amplitudes + other.amplitudes)

    def __sub__(self, other: "CloudFunction") -> "CloudFunction":
        self._check(other)
        return CloudFunction(self.grid, self.amplitudes - other.amplitudes)

    def __mul__(self, scalar: complex) -> "CloudFunction":
        return CloudFunction(self.grid, self.amplitudes * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "CloudFunction":
        return self * -1.0


def creation_op(basis: FockBasis, mode_index: int) -> SparseOperator:
    src, dst, n = basis.raise_table(mode_index)
    return SparseOperator.from_triplets(basis, dst, src, np.sqrt(n + 1.0))


def annihilation_op(basis: FockBasis, mode_index: int) -> SparseOperator:
    return creation_op(basis, mode_index).adjoint()


def ladder_sum(basis: FockBasis, coefficients: np.ndarray) -> sp.csr_matrix:
    """Raw ``Σ_i c_i a*_i``; zero coefficients are skipped."""
    coefficients = np.asarray(coefficients, dtype=complex)
    if coefficients.shape != (basis.n_modes,):
        raise BadArgument(f"Expected {basis.n_modes} coefficients, got shape {coefficients.shape}.")

    rows, cols, vals = [], [], []
    for i in np.flatnonzero(coefficients):
        src, dst, n = basis.raise_table(int(i))
        rows.append(dst)
        cols.append(src)
        vals.append(coefficients[i] * np.sqrt(n + 1.0))

    n = basis.size
    if not rows:
        return sp.csr_matrix((n, n), dtype=complex)
    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def diagonal_operator(basis: FockBasis, mode_values: np.ndarray) -> SparseOperator:
    """``Σ_i x_i n_i`` for real per-mode values ``x_i``."""
    diag = basis.states @ np.asarray(mode_values, dtype=float)
    return SparseOperator(basis, sp.diags(diag.astype(complex), format="csr"), True)


def _check_grid(basis: FockBasis, g: CloudFunction):
    if g.grid is not basis.grid:
        raise BadArgument("Cloud function and basis use different mode grids.")


def smeared_field_ops(basis: FockBasis, g: CloudFunction) -> tuple[SparseOperator, SparseOperator]:
    """``(a*(g), a(g))`` with ``a*(g) = Σ_i √w_i g_i a*_i`` and ``a(g) = a*(g)†``."""
    _check_grid(basis, g)
    up = SparseOperator(basis, ladder_sum(basis, g.coefficients))
    return up, up.adjoint()


def free_photon_hamiltonian(basis: FockBasis) -> SparseOperator:
    return diagonal_operator(basis, basis.grid.abs_momenta)


def photon_momentum(basis: FockBasis) -> tuple[SparseOperator, ...]:
    return tuple(diagonal_operator(basis, basis.grid.momenta[:, mu]) for mu in range(basis.grid.dimension))


def number_operator(basis: FockBasis) -> SparseOperator:
    return diagonal_operator(basis, np.ones(basis.n_modes))


@dataclasses.dataclass(frozen=True, eq=False)
class WeylOperator:
    """``W(g) = exp(a*(g) - a(g))`` as an action on vectors."""

    basis: FockBasis
    cloud: CloudFunction
    raising: SparseOperator
    lowering: SparseOperator
    method: str
    dense: np.ndarray | None = None
    tol: float = 1e-12

    @property
    def generator(self) -> SparseOperator:
        return self.raising - self.lowering

    def apply(self, vector: FockVector, leak_tol: float | None = None) -> FockVector:
        _same_basis(self.basis, vector.basis)
        if self.dense is not None:
            out = FockVector(self.basis, self.dense @ vector.amplitudes)
        else:
            from lab import spectral

            out = spectral.exp_antihermitian_apply(self.raising, self.lowering, vector, tol=self.tol).vector

        if leak_tol is not None:
            leak = out.boundary_weight()
            if leak > leak_tol:
                raise LeakageError(
                    f"Weyl operator leaks {leak:.3e} onto the truncation boundary (bound {leak_tol:.1e});"
                    f" raise max_total/max_per_mode (now {self.basis.max_total}/{self.basis.max_per_mode}).",
                    leakage=leak,
                    bound=leak_tol,
                )
        return out

    def leakage(self, vector: FockVector | None = None) -> float:
        """Boundary weight of ``W(g)ψ`` (``ψ`` defaults to the vacuum)."""
        return self.apply(vacuum(self.basis) if vector is None else vector).boundary_weight()

    def __matmul__(self, vector: FockVector) -> FockVector:
        return self.apply(vector)


def weyl_operator(
    basis: FockBasis,
    g: CloudFunction,
    method: str = "auto",
    dense_limit: int = DENSE_LIMIT,
    tol: float = 1e-12,
) -> WeylOperator:
    """Weyl operator of ``g``; dense exponential up to ``dense_limit`` states, Krylov above.

    The chosen backend is recorded in ``WeylOperator.method``.
    """
    up, down = smeared_field_ops(basis, g)
    if method == "auto":
        method = "dense" if basis.size <= dense_limit else "krylov"
    if method not in ("dense", "krylov"):
        raise BadArgument(f"Unknown exponential method {method}.")

    dense = None
    if method == "dense":
        dense = scipy.linalg.expm((up.matrix - down.matrix).toarray())
    logger.debug(f"Weyl operator on {basis.size} states via {method}, ‖g‖²={g.norm_squared():.4g}.")
    return WeylOperator(basis, g, up, down, method, dense, tol)


def coherent_state(basis: FockBasis, g: CloudFunction, leak_tol: float | None = None) -> FockVector:
    return weyl_operator(basis, g).apply(vacuum(basis), leak_tol=leak_tol)


def weyl_cocycle_check(basis: FockBasis, g: CloudFunction, h: CloudFunction, depth: int = 1) -> tuple[float, float]:
    """Phase θ and defect of ``W(g)W(h) ≈ e^{iθ} W(g+h)``; exact θ is ``-Im<g, h>``.

    Both sides act on every basis state with at most ``depth`` photons. θ is the
    common phase that best aligns all of them and the defect is the largest
    column residual ``‖W(g)W(h)e_j - e^{iθ} W(g+h)e_j‖``. Truncation errors grow
    towards ``basis.max_total``, so ``depth`` should stay well below it.
    """
    _check_grid(basis, g)
    _check_grid(basis, h)
    if not 0 <= depth <= basis.max_total:
        raise BadArgument(f"Cocycle depth must lie in [0, {basis.max_total}], got {depth}.")
    w_g, w_h, w_gh = weyl_operator(basis, g), weyl_operator(basis, h), weyl_operator(basis, g + h)

    columns = np.flatnonzero(basis.totals <= depth)
    pairs = []
    for j in columns:
        e_j = FockVector(basis, np.eye(1, basis.size, j, dtype=complex)[0])
        pairs.append((w_g.apply(w_h.apply(e_j)).amplitudes, w_gh.apply(e_j).amplitudes))

    overlap = sum(np.vdot(v, u) for u, v in pairs)
    theta = float(np.angle(overlap)) if abs(overlap) > 0.0 else 0.0
    rotation = np.exp(1j * theta)
    defect = max(float(np.linalg.norm(u - rotation * v)) for u, v in pairs)
    return theta, defect

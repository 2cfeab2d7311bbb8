"""Sparse spectral kernels: Lanczos ground states and Krylov propagation."""

import dataclasses
import logging

import numpy as np
import scipy.linalg

from lab.errors import BadArgument, ConvergenceError, PropagationError
from lab.fock import FockVector, SparseOperator

__all__ = (
    "EigResult",
    "PropagationResult",
    "lowest_eigenpair",
    "evolve",
    "exp_antihermitian_apply",
    "dense_lowest_eigenpair",
    "dense_evolve",
)

logger = logging.getLogger("irlab.spectral")

BREAKDOWN = 1e-13


@dataclasses.dataclass(frozen=True, eq=False)
class EigResult:
    eigenvalue: float
    eigenvector: FockVector
    residual: float
    iterations: int


@dataclasses.dataclass(frozen=True, eq=False)
class PropagationResult:
    vector: FockVector
    error_estimate: float
    steps: int


def _require_hermitian(H: SparseOperator):
    if not H.hermitian:
        raise BadArgument("Operator must carry the hermitian flag.")


def _start_vector(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _tridiagonal_eigh(alpha: np.ndarray, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if alpha.shape[0] == 1:
        return alpha.copy(), np.ones((1, 1))
    return scipy.linalg.eigh_tridiagonal(alpha, beta)


class _Lanczos:
    """Lanczos recursion with full (twice classical Gram–Schmidt) reorthogonalization."""

    def __init__(self, matrix, start: np.ndarray, max_dim: int, scale: float):
        n = start.shape[0]
        self.matrix = matrix
        self.max_dim = min(max_dim, n)
        self.V = np.zeros((n, self.max_dim + 1), dtype=complex)
        self.V[:, 0] = start
        self.alpha = np.zeros(self.max_dim)
        self.beta = np.zeros(self.max_dim)
        self.dim = 0
        self.exhausted = False
        self.threshold = BREAKDOWN * scale

    def step(self) -> bool:
        """Extend the basis by one vector; False once the space is invariant or full."""
        j = self.dim
        if self.exhausted or j >= self.max_dim:
            return False

        w = self.matrix @ self.V[:, j]
        self.alpha[j] = np.vdot(self.V[:, j], w).real
        basis = self.V[:, : j + 1]
        for _ in range(2):
            w -= basis @ (basis.conj().T @ w)

        b = float(np.linalg.norm(w))
        self.beta[j] = b
        self.dim = j + 1
        if b <= self.threshold or self.dim == self.V.shape[0]:
            self.exhausted = True
        else:
            self.V[:, j + 1] = w / b
        return True

    @property
    def basis(self) -> np.ndarray:
        return self.V[:, : self.dim]

    def tridiagonal(self) -> tuple[np.ndarray, np.ndarray]:
        return self.alpha[: self.dim], self.beta[: self.dim - 1]

    @property
    def last_beta(self) -> float:
        return 0.0 if self.exhausted else float(self.beta[self.dim - 1])


def lowest_eigenpair(
    H: SparseOperator,
    tol: float = 1e-10,
    max_iter: int = 3000,
    seed: int = 0,
    krylov_dim: int = 300,
    check_every: int = 10,
) -> EigResult:
    """Lowest eigenpair of a hermitian operator.

    Restarts from the current Ritz vector whenever the Krylov space reaches
    ``krylov_dim``; ``max_iter`` bounds the total number of matrix-vector products.
    """
    _require_hermitian(H)
    n = H.basis.size
    A = H.matrix
    scale = max(H.norm_bound(), 1.0)
    v = _start_vector(n, seed)

    iterations = 0
    best = np.inf
    while iterations < max_iter:
        lanczos = _Lanczos(A, v, min(krylov_dim, max_iter - iterations), scale)
        while lanczos.step():
            iterations += 1
            if lanczos.dim % check_every and not lanczos.exhausted and lanczos.dim < lanczos.max_dim:
                continue
            theta, S = _tridiagonal_eigh(*lanczos.tridiagonal())
            estimate = abs(lanczos.last_beta * S[-1, 0])
            if estimate <= 0.1 * tol or lanczos.exhausted or lanczos.dim == lanczos.max_dim:
                break

        theta, S = _tridiagonal_eigh(*lanczos.tridiagonal())
        y = lanczos.basis @ S[:, 0]
        y /= np.linalg.norm(y)
        Ay = A @ y
        energy = float(np.vdot(y, Ay).real)
        residual = float(np.linalg.norm(Ay - energy * y))
        best = min(best, residual)

        if residual <= tol:
            logger.debug(f"Lanczos converged: E={energy:.12g}, residual={residual:.2e}, {iterations} iterations.")
            return EigResult(energy, FockVector(H.basis, y, normalized=True), residual, iterations)
        v = y

    raise ConvergenceError(
        f"Lanczos did not reach residual {tol:.1e} in {max_iter} iterations (best {best:.3e}).",
        best_residual=best,
        iterations=iterations,
    )


def _krylov_evolve(A, vector: np.ndarray, t: float, tol: float, krylov_dim: int, scale: float):
    beta0 = float(np.linalg.norm(vector))
    if t == 0.0 or beta0 == 0.0:
        return vector.copy(), 0.0, 0

    sign = 1.0 if t > 0 else -1.0
    total = abs(t)
    done = 0.0
    tau = total
    v = vector.copy()
    error = 0.0
    steps = 0

    while done < total:
        beta = float(np.linalg.norm(v))
        lanczos = _Lanczos(A, v / beta, krylov_dim, scale)
        while lanczos.step():
            pass
        theta, S = _tridiagonal_eigh(*lanczos.tridiagonal())
        tau = min(tau, total - done)

        while True:
            coeffs = S @ (np.exp(-1j * sign * tau * theta) * S[0, :])
            estimate = beta * lanczos.last_beta * abs(coeffs[-1])
            if lanczos.exhausted or estimate <= tol * tau / total:
                break
            tau *= 0.5
            if tau < 1e-12 * total:
                raise PropagationError(
                    f"Krylov step underflow at t={sign * done:.6g} of {t:.6g} (estimate {estimate:.3e}).",
                    time_reached=sign * done,
                    step=tau,
                    error_estimate=estimate,
                )

        v = beta * (lanczos.basis @ coeffs)
        done += tau
        steps += 1
        if not lanczos.exhausted:
            error += estimate
            if estimate < 0.1 * tol * tau / total:
                tau *= 2.0

    return v, error, steps


def evolve(
    H: SparseOperator, vector: FockVector, t: float, tol: float = 1e-10, krylov_dim: int = 30
) -> PropagationResult:
    """``exp(-itH) ψ`` by Lanczos–Krylov steps with adaptive step size."""
    _require_hermitian(H)
    if vector.basis is not H.basis:
        raise BadArgument("Vector and operator live on different Fock bases.")

    out, error, steps = _krylov_evolve(
        H.matrix, vector.amplitudes, float(t), tol, krylov_dim, max(H.norm_bound(), 1.0)
    )
    return PropagationResult(FockVector(H.basis, out), error, steps)


def exp_antihermitian_apply(
    A_plus: SparseOperator, A_minus: SparseOperator, vector: FockVector, tol: float = 1e-12
) -> PropagationResult:
    """``exp(A_plus - A_minus) ψ`` with ``A_minus = A_plus†``.

    Runs :func:`evolve` on the hermitian ``i(A_plus - A_minus)`` for unit time.
    """
    if A_plus.basis is not A_minus.basis:
        raise BadArgument("Ladder operators live on different Fock bases.")
    mismatch = A_minus.matrix - A_plus.matrix.conj().T
    if mismatch.nnz and abs(mismatch).max() > 1e-12:
        raise BadArgument("A_minus must be the adjoint of A_plus.")

    generator = SparseOperator(A_plus.basis, 1j * (A_plus.matrix - A_minus.matrix), hermitian=True)
    return evolve(generator, vector, 1.0, tol=tol)


def dense_lowest_eigenpair(H: SparseOperator) -> EigResult:
    _require_hermitian(H)
    dense = H.to_dense()
    energies, vectors = scipy.linalg.eigh(dense)
    y = vectors[:, 0]
    residual = float(np.linalg.norm(dense @ y - energies[0] * y))
    return EigResult(float(energies[0]), FockVector(H.basis, y / np.linalg.norm(y), normalized=True), residual, 0)


def dense_evolve(H: SparseOperator, vector: FockVector, t: float) -> PropagationResult:
    _require_hermitian(H)
    energies, vectors = scipy.linalg.eigh(H.to_dense())
    out = vectors @ (np.exp(-1j * t * energies) * (vectors.conj().T @ vector.amplitudes))
    return PropagationResult(FockVector(H.basis, out), 0.0, 1)

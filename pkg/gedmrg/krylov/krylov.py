"""
Krylov-space solvers over matrix-free operators.

`lanczos` finds an extremal eigenpair of a Hermitian operator,
`generalized_lanczos` an extremal pair of A x = theta M x with M Hermitian
positive definite, and `conjugate_gradient` solves the M x = b systems the
generalized recursion needs. All three keep every basis vector and
reorthogonalize against the whole basis on each iteration.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from gedmrg.errors import NonHermitianError, NotPositiveDefiniteError

logger = logging.getLogger(__name__)

MODES = ("lowest", "highest")
# Relative size of an imaginary part that is logged, and one that is fatal.
IMAG_DEBUG_TOL = 1e-10
IMAG_ERROR_TOL = 1e-6
# A new Krylov direction shorter than this (relative to the spectral scale) is a breakdown.
BREAKDOWN_TOL = 1e-12


@dataclass
class LinearOperatorApplier:
    """
    A linear map given only through its action on vectors.

    Attributes:
        apply (callable): vector -> vector.
        dim (int): Length of the vectors it acts on.
        n_applies (int): Number of calls made so far.
    """
    apply: Callable[[np.ndarray], np.ndarray]
    dim: int
    n_applies: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"Operator dimension must be positive, got {self.dim}")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        self.n_applies += 1
        return np.asarray(self.apply(x))

    @classmethod
    def from_matrix(cls, matrix) -> "LinearOperatorApplier":
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Expected a square matrix, got shape {matrix.shape}")
        return cls(lambda x: matrix @ x, matrix.shape[0])

    def shifted(self, c: float) -> "LinearOperatorApplier":
        """The operator A + c I, evaluated on the fly."""
        return LinearOperatorApplier(lambda x: self(x) + c * x, self.dim)

    def to_dense(self) -> np.ndarray:
        eye = np.eye(self.dim, dtype=complex)
        return np.column_stack([self(eye[:, i]) for i in range(self.dim)])


@dataclass
class KrylovState:
    """
    Working storage shared by the standard and generalized recursions.

    `m_basis[j]` caches M q_j; in the standard recursion it is q_j itself.
    `beta[j]` couples basis vectors j and j + 1.
    """
    basis: List[np.ndarray] = field(default_factory=list)
    m_basis: List[np.ndarray] = field(default_factory=list)
    alpha: List[float] = field(default_factory=list)
    beta: List[float] = field(default_factory=list)
    residual: Optional[np.ndarray] = None
    iteration: int = 0

    def tridiagonal(self) -> np.ndarray:
        k = len(self.alpha)
        beta = np.asarray(self.beta[:k - 1], dtype=float)
        return np.diag(np.asarray(self.alpha, dtype=float)) + np.diag(beta, 1) + np.diag(beta, -1)

    def basis_matrix(self) -> np.ndarray:
        return np.column_stack(self.basis[:len(self.alpha)])

    def orthogonality_loss(self) -> float:
        k = len(self.alpha)
        Q = np.column_stack(self.basis[:k])
        MQ = np.column_stack(self.m_basis[:k])
        return float(np.max(np.abs(Q.conj().T @ MQ - np.eye(k))))


@dataclass
class EigSolveReport:
    """
    Outcome of a (generalized) Lanczos run.

    Attributes:
        theta (float): The tracked Ritz value.
        vector (np.ndarray): Ritz vector in the original space, unit norm (M-norm when generalized).
        residual_norm (float): Ritz residual at exit.
        iterations (int): Krylov dimension reached.
        converged (bool): Whether the residual met the tolerance.
        restarts (int): Breakdown restarts performed.
        orthogonality_loss (float): max |Q^H M Q - I| over the final basis.
        cg_iterations (int): Inner solver iterations summed over the run.
    """
    theta: float
    vector: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    restarts: int = 0
    orthogonality_loss: float = 0.0
    cg_iterations: int = 0

    def __post_init__(self) -> None:
        if self.residual_norm < 0:
            raise ValueError(f"residual_norm must be nonnegative, got {self.residual_norm}")


@dataclass
class CgResult:
    """
    Attributes:
        x (np.ndarray): Final iterate.
        converged (bool): Whether ||A x - b|| <= tol ||b|| was reached.
        iterations (int): CG steps taken.
        residual_norm (float): ||r|| of the final iterate (recurrence value).
        errors (list): Residual norm after every step, starting with the initial one.
    """
    x: np.ndarray
    converged: bool
    iterations: int
    residual_norm: float
    errors: List[float] = field(default_factory=list)


# Called once per iteration with (state, theta, ritz_vector, residual_norm).
KrylovRecord = Callable[[KrylovState, float, np.ndarray, float], None]


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got '{mode}'")


def _start_vector(v0, dim: int) -> np.ndarray:
    v = np.asarray(v0, dtype=complex).ravel()
    if v.shape != (dim,):
        raise ValueError(f"Start vector has length {v.size}, operator dimension is {dim}")
    if not np.any(v):
        raise ValueError("The start vector must be nonzero")
    return v


def _real_coefficient(value: complex, scale: float, name: str) -> float:
    imag = abs(value.imag)
    scale = max(scale, np.finfo(float).tiny)
    if imag > IMAG_ERROR_TOL * scale:
        raise NonHermitianError(f"{name} has imaginary part {imag:.3e} (scale {scale:.3e}); the operator is not Hermitian")
    if imag > IMAG_DEBUG_TOL * scale:
        logger.debug(f"{name} has imaginary part {imag:.3e}, dropped")
    return float(value.real)


def _extremal_ritz(alpha: List[float], beta: List[float], mode: str) -> Tuple[float, np.ndarray, float]:
    """Tracked eigenpair of T and the largest |eigenvalue| of T."""
    if len(alpha) == 1:
        return alpha[0], np.ones(1), abs(alpha[0])
    w, s = scipy.linalg.eigh_tridiagonal(np.asarray(alpha), np.asarray(beta[:len(alpha) - 1]))
    idx = 0 if mode == "lowest" else -1
    return float(w[idx]), s[:, idx], float(np.max(np.abs(w)))


def ritz_residual(beta_norm: float, r_next: Optional[np.ndarray], s: np.ndarray) -> float:
    """
    ||r_{j+1}|| |<e_j|s>|, the norm of A y - theta M y for the Ritz vector y = Q s.

    `beta_norm` is used when `r_next` is None.
    """
    norm = beta_norm if r_next is None else float(np.linalg.norm(r_next))
    return norm * abs(s[-1])


def _orthogonalize(u: np.ndarray, basis: List[np.ndarray], m_basis: List[np.ndarray]) -> np.ndarray:
    # Classical Gram-Schmidt, applied twice.
    Q = np.column_stack(basis)
    MQ = np.column_stack(m_basis)
    for _ in range(2):
        u = u - Q @ (MQ.conj().T @ u)
    return u


def _random_direction(rng: np.random.Generator, state: KrylovState, metric: Optional[LinearOperatorApplier]
                      ) -> Tuple[np.ndarray, np.ndarray]:
    dim = state.basis[0].size
    while True:
        u = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        u = _orthogonalize(u, state.basis, state.m_basis)
        mu = u if metric is None else metric(u)
        nrm2 = np.vdot(u, mu).real
        if nrm2 > BREAKDOWN_TOL:
            root = np.sqrt(nrm2)
            return u / root, mu / root


def lanczos(A: LinearOperatorApplier,
            v0,
            mode: str = "lowest",
            tol: float = 1e-10,
            max_iter: int = 60,
            seed: Optional[int] = 0,
            record: Optional[KrylovRecord] = None) -> EigSolveReport:
    """
    Extremal eigenpair of the Hermitian operator `A` by Lanczos with full reorthogonalization.

    Convergence is declared when the Ritz residual falls below tol * max|theta|.
    A Krylov space that fills the whole vector space gives the exact answer.

    Args:
        A: Hermitian operator.
        v0: Nonzero start vector.
        mode: 'lowest' or 'highest'.
        tol: Relative residual tolerance.
        max_iter: Krylov dimension cap.
        seed: Seed for breakdown restart vectors.
        record: Optional per-iteration callback.

    Raises:
        ValueError: On a zero start vector or an unknown mode.
        NonHermitianError: If a diagonal coefficient is markedly complex.
    """
    _check_mode(mode)
    v = _start_vector(v0, A.dim)
    q = v / np.linalg.norm(v)
    state = KrylovState(basis=[q], m_basis=[q])
    rng = np.random.default_rng(seed)
    restarts = 0
    max_iter = min(max_iter, A.dim)
    converged = False
    theta, s, residual = 0.0, np.ones(1), 0.0

    for j in range(max_iter):
        state.iteration = j + 1
        q = state.basis[j]
        w = A(q)
        a = _real_coefficient(np.vdot(q, w), float(np.linalg.norm(w)), "alpha")
        state.alpha.append(a)
        w = w - a * q
        if j > 0:
            w = w - state.beta[j - 1] * state.basis[j - 1]
        w = _orthogonalize(w, state.basis, state.m_basis)
        b = float(np.linalg.norm(w))
        state.residual = w

        theta, s, scale = _extremal_ritz(state.alpha, state.beta, mode)
        residual = ritz_residual(b, None, s)
        converged = residual <= tol * scale
        logger.debug(f"lanczos iteration {j + 1}: theta={theta:.12g} residual={residual:.3e}")
        if record is not None:
            record(state, theta, state.basis_matrix() @ s, residual)
        if converged or j + 1 == A.dim:
            converged = True if j + 1 == A.dim else converged
            break
        if j + 1 == max_iter:
            break
        if b <= BREAKDOWN_TOL * max(scale, 1.0):
            restarts += 1
            logger.warning(f"lanczos breakdown at iteration {j + 1} (beta={b:.3e}); restarting with a random vector")
            q_next, _ = _random_direction(rng, state, None)
            state.beta.append(0.0)
        else:
            q_next = w / b
            state.beta.append(b)
        state.basis.append(q_next)
        state.m_basis.append(q_next)

    y = state.basis_matrix() @ s
    y = y / np.linalg.norm(y)
    if not converged:
        logger.warning(f"lanczos stopped after {state.iteration} iterations with residual {residual:.3e}")
    return EigSolveReport(theta=theta, vector=y, residual_norm=residual, iterations=state.iteration,
                          converged=converged, restarts=restarts,
                          orthogonality_loss=state.orthogonality_loss())


def generalized_lanczos(A: LinearOperatorApplier,
                        M: LinearOperatorApplier,
                        solve_m: Callable[[np.ndarray], Union[np.ndarray, CgResult]],
                        u0,
                        mode: str = "highest",
                        tol: float = 1e-10,
                        max_iter: int = 60,
                        seed: Optional[int] = 0,
                        record: Optional[KrylovRecord] = None) -> EigSolveReport:
    """
    Extremal eigenpair of A x = theta M x with an M-orthonormal Krylov basis.

    The tridiagonal entries are computed directly as alpha_j = <q_j|A|q_j> and
    beta_j = <q_{j-1}|A|q_j>. The next direction is u = M^{-1} r with
    r = A q_j - alpha_j M q_j - beta_j M q_{j-1}, re-M-orthogonalized against the
    whole basis. The run converges when ||r|| |s_last| <= tol * max|theta|.

    Args:
        A: Hermitian operator.
        M: Hermitian positive definite operator.
        solve_m: Returns (an approximation of) M^{-1} b, or a CgResult holding it.
        u0: Nonzero start vector.
        mode: 'lowest' or 'highest'.
        tol: Relative residual tolerance.
        max_iter: Krylov dimension cap.
        seed: Seed for breakdown restart vectors.
        record: Optional per-iteration callback.

    Raises:
        ValueError: On a zero start vector or an unknown mode.
        NotPositiveDefiniteError: If <u0|M|u0> is not positive.
        NonHermitianError: If a tridiagonal coefficient is markedly complex.
    """
    _check_mode(mode)
    if M.dim != A.dim:
        raise ValueError(f"A has dimension {A.dim} but M has dimension {M.dim}")
    u = _start_vector(u0, A.dim)
    mu = M(u)
    nrm2 = np.vdot(u, mu).real
    if nrm2 <= 0:
        raise NotPositiveDefiniteError(
            f"<u0|M|u0> = {nrm2:.3e} is not positive; regularize the metric as sigma + eps*I")
    root = np.sqrt(nrm2)
    state = KrylovState(basis=[u / root], m_basis=[mu / root])
    rng = np.random.default_rng(seed)
    restarts = 0
    cg_iterations = 0
    max_iter = min(max_iter, A.dim)
    converged = False
    theta, s, residual = 0.0, np.ones(1), 0.0

    for j in range(max_iter):
        state.iteration = j + 1
        q = state.basis[j]
        aq = A(q)
        scale = float(np.linalg.norm(aq))
        state.alpha.append(_real_coefficient(np.vdot(q, aq), scale, "alpha"))
        r = aq - state.alpha[j] * state.m_basis[j]
        if j > 0:
            beta = _real_coefficient(np.vdot(state.basis[j - 1], aq), scale, "beta")
            state.beta[j - 1] = beta
            r = r - beta * state.m_basis[j - 1]
        state.residual = r

        theta, s, t_scale = _extremal_ritz(state.alpha, state.beta, mode)
        residual = ritz_residual(0.0, r, s)
        converged = residual <= tol * t_scale
        logger.debug(f"generalized lanczos iteration {j + 1}: theta={theta:.12g} residual={residual:.3e}")
        if record is not None:
            record(state, theta, state.basis_matrix() @ s, residual)
        if converged or j + 1 == A.dim:
            converged = True if j + 1 == A.dim else converged
            break
        if j + 1 == max_iter:
            break

        solved = solve_m(r)
        if isinstance(solved, CgResult):
            cg_iterations += solved.iterations
            solved = solved.x
        u = _orthogonalize(np.asarray(solved, dtype=complex), state.basis, state.m_basis)
        mu = M(u)
        nrm2 = np.vdot(u, mu).real
        if nrm2 <= (BREAKDOWN_TOL * max(t_scale, 1.0)) ** 2:
            restarts += 1
            logger.warning(f"generalized lanczos breakdown at iteration {j + 1}; restarting with a random vector")
            q_next, mq_next = _random_direction(rng, state, M)
        else:
            root = np.sqrt(nrm2)
            q_next, mq_next = u / root, mu / root
        # Filled in from <q_j|A|q_{j+1}> on the next iteration.
        state.beta.append(0.0)
        state.basis.append(q_next)
        state.m_basis.append(mq_next)

    y = state.basis_matrix() @ s
    y = y / np.sqrt(np.vdot(y, M(y)).real)
    if not converged:
        logger.warning(f"generalized lanczos stopped after {state.iteration} iterations with residual {residual:.3e}")
    return EigSolveReport(theta=theta, vector=y, residual_norm=residual, iterations=state.iteration,
                          converged=converged, restarts=restarts,
                          orthogonality_loss=state.orthogonality_loss(), cg_iterations=cg_iterations)


def conjugate_gradient(A: LinearOperatorApplier,
                       b,
                       x0=None,
                       tol: float = 1e-10,
                       max_iter: int = 200,
                       callback: Optional[Callable[[np.ndarray], None]] = None) -> CgResult:
    """
    Solves A x = b for Hermitian positive definite `A`.

    Stops when ||A x - b|| <= tol ||b||. After `max_iter` steps the last
    iterate is returned with `converged=False`.

    Raises:
        NotPositiveDefiniteError: If a search direction has <p|A|p> <= 0.
    """
    b = np.asarray(b, dtype=complex).ravel()
    if b.shape != (A.dim,):
        raise ValueError(f"Right-hand side has length {b.size}, operator dimension is {A.dim}")
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return CgResult(x=np.zeros_like(b), converged=True, iterations=0, residual_norm=0.0, errors=[0.0])

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex).ravel()
    r = b - A(x) if x0 is not None else b.copy()
    p = r.copy()
    rr = np.vdot(r, r).real
    errors = [float(np.sqrt(rr))]
    if errors[-1] <= tol * b_norm:
        return CgResult(x=x, converged=True, iterations=0, residual_norm=errors[-1], errors=errors)

    for k in range(1, max_iter + 1):
        ap = A(p)
        curvature = np.vdot(p, ap).real
        if curvature <= 0:
            raise NotPositiveDefiniteError(
                f"Conjugate gradient found <p|A|p> = {curvature:.3e} at step {k}; the operator is not "
                f"positive definite, regularize it as sigma + eps*I")
        step = rr / curvature
        x = x + step * p
        r = r - step * ap
        rr_next = np.vdot(r, r).real
        errors.append(float(np.sqrt(rr_next)))
        if callback is not None:
            callback(x)
        if errors[-1] <= tol * b_norm:
            logger.debug(f"conjugate gradient converged in {k} iterations")
            return CgResult(x=x, converged=True, iterations=k, residual_norm=errors[-1], errors=errors)
        p = r + (rr_next / rr) * p
        rr = rr_next

    logger.debug(f"conjugate gradient hit the cap of {max_iter} iterations, residual {errors[-1]:.3e}")
    return CgResult(x=x, converged=False, iterations=max_iter, residual_norm=errors[-1], errors=errors)

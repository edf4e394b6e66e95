"""
Brute-force dense references for the tensor network pipeline.

Everything here works on explicit state vectors and matrices, so the sizes are
bounded by `oracle_dense_limit()`. Site 0 is the most significant index of a
state vector, matching `gedmrg.mps.mps.to_dense`.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse

from gedmrg.config.config import oracle_dense_limit
from gedmrg.errors import DenseLimitError, NonHermitianError, NotPositiveDefiniteError
from gedmrg.mpo.mpo import SM, SP, SZ, XxzParams
from gedmrg.mps.mps import renyi_entropy_of_spectrum

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
KERNEL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DenseState:
    """
    Normalized state vector of `n_sites` sites of dimension `d`.
    """
    amplitudes: np.ndarray
    d: int
    n_sites: int

    def __post_init__(self) -> None:
        amplitudes = np.asarray(self.amplitudes, dtype=np.complex128).ravel()
        if amplitudes.size != self.d ** self.n_sites:
            raise ValueError(f"Expected {self.d ** self.n_sites} amplitudes, got {amplitudes.size}")
        if abs(np.linalg.norm(amplitudes) - 1.0) > 1e-12:
            raise ValueError("DenseState amplitudes must have unit norm, use DenseState.from_vector")
        object.__setattr__(self, "amplitudes", amplitudes)

    @classmethod
    def from_vector(cls, v, d: int = 2) -> "DenseState":
        v = np.asarray(v, dtype=np.complex128).ravel()
        n_sites = int(round(np.log(v.size) / np.log(d))) if v.size > 1 else 0
        if d ** n_sites != v.size:
            raise ValueError(f"Vector length {v.size} is not a power of {d}")
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            raise ValueError("Cannot normalize the zero vector")
        return cls(v / nrm, d, n_sites)


def _check_dimension(dim: int) -> None:
    limit = oracle_dense_limit()
    if dim > limit:
        raise DenseLimitError(f"Dense dimension {dim} exceeds the oracle limit {limit}")


def _check_region(region: Iterable[int], n_sites: int) -> List[int]:
    region = sorted(set(int(i) for i in region))
    if not region:
        raise ValueError("The region must be nonempty")
    if region[0] < 0 or region[-1] >= n_sites:
        raise ValueError(f"Region {region} is outside the chain of {n_sites} sites")
    return region


def _check_disjoint(region_a: Iterable[int], region_b: Iterable[int], n_sites: int) -> Tuple[List[int], List[int]]:
    region_a = _check_region(region_a, n_sites)
    region_b = _check_region(region_b, n_sites)
    if set(region_a) & set(region_b):
        raise ValueError(f"Regions {region_a} and {region_b} overlap")
    return region_a, region_b


def exact_ground_state(H: np.ndarray, d: int = 2) -> Tuple[float, DenseState]:
    """
    Lowest eigenpair of a dense Hermitian matrix.

    Raises:
        NonHermitianError: If H deviates from its adjoint by more than 1e-10.
        DenseLimitError: If H is larger than the oracle limit.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"H must be square, got shape {H.shape}")
    _check_dimension(H.shape[0])
    asymmetry = np.max(np.abs(H - H.conj().T), initial=0.0)
    if asymmetry > HERMITIAN_TOL:
        raise NonHermitianError(f"H is not Hermitian (max asymmetry {asymmetry:.3e})")
    w, v = scipy.linalg.eigh(H, subset_by_index=[0, 0])
    return float(w[0]), DenseState.from_vector(v[:, 0], d)


def _site_operator(op: np.ndarray, site: int, n_sites: int) -> scipy.sparse.csr_matrix:
    span = int(round(np.log2(op.shape[0])))
    return scipy.sparse.kron(scipy.sparse.kron(scipy.sparse.identity(2 ** site), op),
                             scipy.sparse.identity(2 ** (n_sites - site - span)), format="csr")


def xxz_dense_hamiltonian(p: XxzParams) -> np.ndarray:
    """Dense XXZ Hamiltonian built from Kronecker products, same conventions as `xxz_mpo`."""
    _check_dimension(2 ** p.N)
    hopping = 0.5 * (np.kron(SP, SM) + np.kron(SM, SP))
    bond = -p.J * (hopping + p.delta * np.kron(SZ, SZ))
    H = scipy.sparse.csr_matrix((2 ** p.N, 2 ** p.N), dtype=np.complex128)
    for i in range(p.N - 1):
        H = H + _site_operator(bond, i, p.N)
    if p.h != 0.0:
        for i in range(p.N):
            H = H + _site_operator(-2.0 * p.h * SZ, i, p.N)
    return H.toarray()


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """
    Traces out every subsystem not in `keep` from a density matrix on subsystems of sizes `dims`.
    """
    dims = list(dims)
    keep = sorted(set(keep))
    n = len(dims)
    t = np.asarray(rho).reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    for count, i in enumerate(sorted(traced, reverse=True)):
        t = np.trace(t, axis1=i, axis2=i + n - count)
    size = int(np.prod([dims[k] for k in keep]))
    return t.reshape(size, size)


def reduced_density(v: DenseState, region: Iterable[int]) -> np.ndarray:
    """
    Tr_complement |v><v| with the kept sites in increasing order.
    """
    region = _check_region(region, v.n_sites)
    traced = [i for i in range(v.n_sites) if i not in region]
    psi = v.amplitudes.reshape([v.d] * v.n_sites)
    m = np.transpose(psi, region + traced).reshape(v.d ** len(region), -1)
    return m @ m.conj().T


def _psd_eigh(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of the Hermitian part of `m` with rounding-level negative eigenvalues set to 0."""
    w, V = scipy.linalg.eigh(0.5 * (m + m.conj().T))
    return np.clip(w, 0.0, None), V


def _clip_psd(m: np.ndarray) -> np.ndarray:
    w, V = _psd_eigh(m)
    return (V * w) @ V.conj().T


def product_density(v: DenseState, region_a: Iterable[int], region_b: Iterable[int],
                    epsilon_each: float = 0.0) -> np.ndarray:
    """
    (rho_A + eps I) (x) (rho_B + eps I) with its legs ordered like the sorted union of A and B.
    """
    region_a, region_b = _check_disjoint(region_a, region_b, v.n_sites)
    rho_a = _clip_psd(reduced_density(v, region_a)) + epsilon_each * np.eye(v.d ** len(region_a))
    rho_b = _clip_psd(reduced_density(v, region_b)) + epsilon_each * np.eye(v.d ** len(region_b))
    sigma = np.kron(rho_a, rho_b)
    order = region_a + region_b
    perm = [order.index(site) for site in sorted(order)]
    k = len(order)
    t = sigma.reshape([v.d] * (2 * k)).transpose(perm + [k + p for p in perm])
    return t.reshape(sigma.shape)


def von_neumann_entropy_exact(rho: np.ndarray) -> float:
    return renyi_entropy_exact(rho, 1.0)


def renyi_entropy_exact(rho: np.ndarray, alpha: float) -> float:
    """Rényi entropy (natural log) of a dense density matrix; alpha=1 is von Neumann."""
    return renyi_entropy_of_spectrum(np.linalg.eigvalsh(rho), alpha)


def mutual_information_exact(v: DenseState, region_a: Iterable[int], region_b: Iterable[int]) -> float:
    """S(rho_A) + S(rho_B) - S(rho_AB), natural log."""
    region_a, region_b = _check_disjoint(region_a, region_b, v.n_sites)
    _check_dimension(v.d ** (len(region_a) + len(region_b)))
    s_a = von_neumann_entropy_exact(reduced_density(v, region_a))
    s_b = von_neumann_entropy_exact(reduced_density(v, region_b))
    s_ab = von_neumann_entropy_exact(reduced_density(v, region_a + region_b))
    return s_a + s_b - s_ab


def _inverse_sqrt(M: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    asymmetry = np.max(np.abs(M - M.conj().T), initial=0.0)
    if asymmetry > HERMITIAN_TOL * max(1.0, np.max(np.abs(M))):
        raise NonHermitianError(f"M is not Hermitian (max asymmetry {asymmetry:.3e})")
    w, V = scipy.linalg.eigh(M)
    if w[0] <= 0.0:
        raise NotPositiveDefiniteError(
            f"M is not positive definite (smallest eigenvalue {w[0]:.3e}); regularize it as sigma + eps*I")
    return (V / np.sqrt(w)) @ V.conj().T, (V * np.sqrt(w)) @ V.conj().T


def dense_generalized_eig(A: np.ndarray, M: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solves A x = lambda M x through the Hermitian form C = M^{-1/2} A M^{-1/2}.

    Returns:
        Ascending eigenvalues and the M-orthonormal eigenvectors (columns).

    Raises:
        NotPositiveDefiniteError: If M is singular or indefinite.
    """
    A = np.asarray(A, dtype=np.complex128)
    M = np.asarray(M, dtype=np.complex128)
    if A.shape != M.shape:
        raise ValueError(f"A and M must have the same shape, got {A.shape} and {M.shape}")
    _check_dimension(A.shape[0])
    inv_sqrt, _ = _inverse_sqrt(M)
    C = inv_sqrt @ A @ inv_sqrt
    theta, Y = scipy.linalg.eigh(0.5 * (C + C.conj().T))
    return theta, inv_sqrt @ Y


def max_divergence_exact(v: DenseState, region_a: Iterable[int], region_b: Iterable[int],
                         epsilon: float, regularization: str = "shift") -> float:
    """
    ln of the largest eigenvalue of sigma~^{-1/2} rho_AB sigma~^{-1/2}.

    Args:
        v: Pure state.
        region_a, region_b: Disjoint site sets.
        epsilon: Regularization; 0 restricts to the support of sigma.
        regularization: "shift" uses sigma + eps I; "product" uses
            (rho_A + eps I) (x) (rho_B + eps I).

    Rounding-level negative eigenvalues of sigma are set to 0 before the shift.

    Returns:
        D_infinity in natural-log units.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    if regularization not in ("shift", "product"):
        raise ValueError(f"Unknown regularization '{regularization}'")
    region_a, region_b = _check_disjoint(region_a, region_b, v.n_sites)
    union = sorted(region_a + region_b)
    _check_dimension(v.d ** len(union))
    rho = reduced_density(v, union)
    if regularization == "product":
        w, V = _psd_eigh(product_density(v, region_a, region_b, epsilon_each=epsilon))
    else:
        w, V = _psd_eigh(product_density(v, region_a, region_b))
        w = w + epsilon

    keep = w > 0.0 if epsilon > 0 else w > KERNEL_TOL * w[-1]
    P = V[:, keep] / np.sqrt(w[keep])
    lam = np.linalg.eigvalsh(P.conj().T @ rho @ P)[-1]
    logger.debug(f"max_divergence_exact A={region_a} B={region_b} eps={epsilon}: lambda={lam:.10f}")
    return float(np.log(lam))


def kernel_containment_violation(v: DenseState, region_a: Iterable[int], region_b: Iterable[int],
                                 kernel_tol: float = KERNEL_TOL) -> float:
    """
    max ||rho_AB w|| over eigenvectors w of rho_A (x) rho_B with eigenvalue below `kernel_tol`.
    """
    region_a, region_b = _check_disjoint(region_a, region_b, v.n_sites)
    rho = reduced_density(v, sorted(region_a + region_b))
    w, V = scipy.linalg.eigh(product_density(v, region_a, region_b))
    kernel = V[:, w < kernel_tol]
    if kernel.shape[1] == 0:
        return 0.0
    return float(np.max(np.linalg.norm(rho @ kernel, axis=0)))


@dataclass(frozen=True, eq=False)
class ConvergenceBoundInputs:
    """
    Data entering the Chebyshev bound on the extremal Ritz value.

    Attributes:
        spectrum: Descending eigenvalues of C = M^{-1/2} A M^{-1/2}.
        phi1: Angle between the start vector (in C-space) and the top eigenvector.
        rho1: Gap ratio (l1 - l2) / (l2 - ln).
        m: Krylov dimension.
    """
    spectrum: np.ndarray
    phi1: float
    rho1: float
    m: int

    def __post_init__(self) -> None:
        spectrum = np.asarray(self.spectrum, dtype=float)
        if spectrum.size < 2:
            raise ValueError("The bound needs at least two eigenvalues")
        if np.any(np.diff(spectrum) > 0):
            raise ValueError("spectrum must be sorted in descending order")
        if self.m < 1:
            raise ValueError(f"m must be at least 1, got {self.m}")
        object.__setattr__(self, "spectrum", spectrum)

    @classmethod
    def from_problem(cls, A: np.ndarray, M: np.ndarray, u0: np.ndarray, m: int) -> "ConvergenceBoundInputs":
        """
        Evaluates the bound inputs for the pencil (A, M) and start vector `u0`.
        """
        inv_sqrt, sqrt = _inverse_sqrt(np.asarray(M, dtype=np.complex128))
        C = inv_sqrt @ np.asarray(A, dtype=np.complex128) @ inv_sqrt
        lam, Y = scipy.linalg.eigh(0.5 * (C + C.conj().T))
        lam, Y = lam[::-1], Y[:, ::-1]
        v = sqrt @ np.asarray(u0, dtype=np.complex128)
        v = v / np.linalg.norm(v)
        cos_phi = min(1.0, abs(np.vdot(Y[:, 0], v)))
        gap = lam[1] - lam[-1]
        rho1 = (lam[0] - lam[1]) / gap if gap > 0 else np.inf
        return cls(lam, float(np.arccos(cos_phi)), float(rho1), m)


def chebyshev_bound(inp: ConvergenceBoundInputs) -> float:
    """
    Upper bound (l1 - ln) (tan(phi1) / c_{m-1}(1 + 2 rho1))**2 on l1 - theta1.

    Raises:
        ValueError: If l1 == l2, where the bound is undefined.
    """
    lam = inp.spectrum
    if not lam[0] > lam[1]:
        raise ValueError("The Chebyshev bound is undefined for a degenerate top eigenvalue")
    if inp.phi1 == 0.0:
        return 0.0
    spread = lam[0] - lam[-1]
    tan2 = np.tan(inp.phi1) ** 2
    if inp.m == 1:
        return float(spread * tan2)
    if np.isinf(inp.rho1):
        return 0.0
    with np.errstate(over="ignore"):
        c = np.cosh((inp.m - 1) * np.arccosh(1.0 + 2.0 * inp.rho1))
    if np.isinf(c):
        return 0.0
    return float(spread * tan2 / c ** 2)

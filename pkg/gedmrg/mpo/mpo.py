import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from gedmrg.config.config import oracle_dense_limit
from gedmrg.errors import DenseLimitError
from gedmrg.mps.mps import CanonicalForm, MatrixProductState, _from_arrays, compress, overlap
from gedmrg.tensor.tensor import DTYPE, Tensor

logger = logging.getLogger(__name__)

# 'p' is the outgoing (ket) leg, 'p*' the incoming (bra) leg.
MPO_LABELS = ("wL", "p", "p*", "wR")

SZ = np.diag([0.5, -0.5]).astype(DTYPE)
SP = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=DTYPE)
SM = SP.T.copy()


@dataclass(frozen=True, eq=False)
class MatrixProductOperator:
    """
    Finite open-boundary matrix product operator.

    Every site tensor has legs ('wL', 'p', 'p*', 'wR'), 'p' being the row
    (output) index of the represented matrix and 'p*' the column (input) index.

    Attributes:
        sites (tuple): Site tensors.
    """
    sites: Tuple[Tensor, ...]

    def __post_init__(self) -> None:
        sites = tuple(t if isinstance(t, Tensor) else Tensor(MPO_LABELS, t) for t in self.sites)
        if not sites:
            raise ValueError("A matrix product operator needs at least one site")
        for i, t in enumerate(sites):
            if t.labels != MPO_LABELS:
                raise ValueError(f"Site {i} has legs {t.labels}, expected {MPO_LABELS}")
            if t.dim("p") != t.dim("p*"):
                raise ValueError(f"Site {i} is not square: {t.dim('p')} x {t.dim('p*')}")
        if sites[0].dim("wL") != 1 or sites[-1].dim("wR") != 1:
            raise ValueError("Boundary bonds must have dimension 1")
        for i in range(len(sites) - 1):
            if sites[i].dim("wR") != sites[i + 1].dim("wL"):
                raise ValueError(
                    f"Bond {i + 1} mismatch: {sites[i].dim('wR')} vs {sites[i + 1].dim('wL')}")
            if sites[i + 1].dim("p") != sites[0].dim("p"):
                raise ValueError(f"Site {i + 1} has a different physical dimension")
        object.__setattr__(self, "sites", sites)

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "MatrixProductOperator":
        return cls(tuple(Tensor(MPO_LABELS, w) for w in arrays))

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def d(self) -> int:
        return self.sites[0].dim("p")

    @property
    def bond_dims(self) -> List[int]:
        return [t.dim("wR") for t in self.sites[:-1]]

    @property
    def bond_dim(self) -> int:
        return max(self.bond_dims, default=1)

    @property
    def arrays(self) -> List[np.ndarray]:
        return [t.data for t in self.sites]

    def __str__(self) -> str:
        return f"MatrixProductOperator(n_sites={self.n_sites}, d={self.d}, bond_dim={self.bond_dim})"


@dataclass(frozen=True)
class XxzParams:
    """
    H = -J sum_i (Sx Sx + Sy Sy + delta Sz Sz) - 2 h sum_i Sz on an open chain of N spins 1/2.
    """
    J: float = 1.0
    delta: float = 0.0
    h: float = 0.0
    N: int = 10

    def __post_init__(self) -> None:
        if self.N < 2:
            raise ValueError(f"The XXZ chain needs N >= 2, got {self.N}")

    @property
    def is_free_fermion(self) -> bool:
        return self.delta == 0.0 and self.h == 0.0


def nearest_neighbor_mpo(n_sites: int,
                         couplings: Sequence[Tuple[complex, np.ndarray, np.ndarray]],
                         onsite: Optional[np.ndarray] = None) -> MatrixProductOperator:
    """
    Builds sum_i sum_k c_k L_k(i) R_k(i+1) + sum_i onsite(i) with bond dimension len(couplings) + 2.

    Args:
        n_sites: Chain length.
        couplings: (c_k, L_k, R_k) triples of d x d operators.
        onsite: Optional d x d single-site term.
    """
    if n_sites < 1:
        raise ValueError(f"n_sites must be positive, got {n_sites}")
    ops = [np.asarray(op, dtype=DTYPE) for _, left, right in couplings for op in (left, right)]
    if onsite is not None:
        ops.append(np.asarray(onsite, dtype=DTYPE))
    if not ops:
        raise ValueError("nearest_neighbor_mpo needs at least one term")
    d = ops[0].shape[0]
    if any(op.shape != (d, d) for op in ops):
        raise ValueError("All local operators must be square with the same dimension")

    k = len(couplings)
    last = k + 1
    w = np.zeros((k + 2, k + 2, d, d), dtype=DTYPE)
    w[0, 0] = np.eye(d)
    w[last, last] = np.eye(d)
    for j, (coef, left, right) in enumerate(couplings):
        w[0, 1 + j] = coef * np.asarray(left, dtype=DTYPE)
        w[1 + j, last] = np.asarray(right, dtype=DTYPE)
    if onsite is not None:
        w[0, last] = onsite

    bulk = w.transpose(0, 2, 3, 1)
    arrays = [bulk.copy() for _ in range(n_sites)]
    arrays[0] = arrays[0][0:1]
    arrays[-1] = arrays[-1][..., last:last + 1]
    return MatrixProductOperator.from_arrays(arrays)


def xxz_mpo(p: XxzParams) -> MatrixProductOperator:
    """XXZ Hamiltonian as a bond-dimension-5 MPO; Sz = diag(1/2, -1/2), index 0 is spin up."""
    couplings = [(-p.J / 2, SP, SM), (-p.J / 2, SM, SP), (-p.J * p.delta, SZ, SZ)]
    return nearest_neighbor_mpo(p.N, couplings, onsite=-2.0 * p.h * SZ)


def identity_mpo(n_sites: int, d: int = 2) -> MatrixProductOperator:
    eye = np.eye(d, dtype=DTYPE).reshape(1, d, d, 1)
    return MatrixProductOperator.from_arrays([eye] * n_sites)


def mpo_scale(op: MatrixProductOperator, factor: complex) -> MatrixProductOperator:
    arrays = op.arrays
    return MatrixProductOperator.from_arrays([factor * arrays[0]] + arrays[1:])


def mpo_add(a: MatrixProductOperator, b: MatrixProductOperator) -> MatrixProductOperator:
    """Sum of two operators on the same chain; bond dimensions add."""
    if a.n_sites != b.n_sites or a.d != b.d:
        raise ValueError("mpo_add needs operators on the same chain")
    if a.n_sites == 1:
        return MatrixProductOperator.from_arrays([a.arrays[0] + b.arrays[0]])
    arrays = []
    for i, (x, y) in enumerate(zip(a.arrays, b.arrays)):
        if i == 0:
            arrays.append(np.concatenate([x, y], axis=3))
        elif i == a.n_sites - 1:
            arrays.append(np.concatenate([x, y], axis=0))
        else:
            w = np.zeros((x.shape[0] + y.shape[0], a.d, a.d, x.shape[3] + y.shape[3]), dtype=DTYPE)
            w[:x.shape[0], :, :, :x.shape[3]] = x
            w[x.shape[0]:, :, :, x.shape[3]:] = y
            arrays.append(w)
    return MatrixProductOperator.from_arrays(arrays)


def mpo_tensor_product(a: MatrixProductOperator, b: MatrixProductOperator) -> MatrixProductOperator:
    """a (x) b on the concatenated chain, a's sites first."""
    if a.d != b.d:
        raise ValueError(f"Physical dimensions differ: {a.d} vs {b.d}")
    return MatrixProductOperator(a.sites + b.sites)


def mpo_trace(op: MatrixProductOperator) -> complex:
    env = np.ones(1, dtype=DTYPE)
    for w in op.arrays:
        env = np.einsum("w,wppx->x", env, w)
    return complex(env[0])


def mpo_to_dense(op: MatrixProductOperator, dense_limit: Optional[int] = None) -> np.ndarray:
    """
    Dense matrix of `op`; rows are the 'p' legs, site 0 most significant.

    Raises:
        DenseLimitError: If d ** N exceeds `dense_limit` (default: the oracle dense limit).
    """
    if dense_limit is None:
        dense_limit = oracle_dense_limit()
    size = op.d ** op.n_sites
    if size > dense_limit:
        raise DenseLimitError(f"Dense operator of dimension {size} exceeds the limit {dense_limit}")
    acc = op.arrays[0][0]
    for w in op.arrays[1:]:
        rows, cols, _ = acc.shape
        acc = np.einsum("abw,wpqx->apbqx", acc, w).reshape(rows * w.shape[1], cols * w.shape[2], w.shape[3])
    return acc[:, :, 0]


def mpo_is_hermitian(op: MatrixProductOperator, tol: float = 1e-10) -> bool:
    dense = mpo_to_dense(op)
    return bool(np.max(np.abs(dense - dense.conj().T), initial=0.0) <= tol)


def mpo_apply(op: MatrixProductOperator, psi: MatrixProductState, chi_max: Optional[int] = None,
              cutoff: float = 0.0) -> Tuple[MatrixProductState, float]:
    """
    Applies `op` to `psi` and compresses the result.

    Returns:
        The normalized state op|psi> / ||op|psi>|| and the norm ||op|psi>||.

    Raises:
        ValueError: If the chains differ or op annihilates psi.
    """
    if op.n_sites != psi.n_sites or op.d != psi.d:
        raise ValueError("mpo_apply needs an operator and a state on the same chain")
    arrays = []
    for w, a in zip(op.arrays, psi.arrays):
        b = np.einsum("wpqx,aqb->awpbx", w, a)
        arrays.append(b.reshape(a.shape[0] * w.shape[0], w.shape[1], a.shape[2] * w.shape[3]))
    raw = _from_arrays(arrays, (), 0, CanonicalForm.NONE)
    nrm = float(np.sqrt(abs(overlap(raw, raw))))
    if nrm == 0.0:
        raise ValueError("The operator annihilates the state")
    compressed, _ = compress(raw, chi_max, cutoff)
    return compressed, nrm


def _validate_region(region: Sequence[int], n_sites: int) -> List[int]:
    region = [int(i) for i in region]
    if not region:
        raise ValueError("The region must be nonempty")
    if sorted(set(region)) != region:
        raise ValueError(f"The region must be sorted without repeats, got {region}")
    if region[0] < 0 or region[-1] >= n_sites:
        raise ValueError(f"Region {region} is outside the chain of {n_sites} sites")
    return region


def reduced_density_mpo(psi: MatrixProductState, region: Sequence[int],
                        normalize: bool = True) -> MatrixProductOperator:
    """
    Tr_complement |psi><psi| as an MPO on the sites of `region`.

    Each region site stacks the ket tensor with the conjugated bra tensor, the
    traced sites are absorbed as transfer matrices into the neighbouring
    bonds. Internal bonds therefore have dimension chi**2. `psi` need not be
    canonical or normalized.

    Args:
        psi: Pure state.
        region: Sorted site indices kept.
        normalize: Divide by the trace so that the result has unit trace.

    Raises:
        ValueError: If the region is empty, unsorted or out of range.
    """
    region = _validate_region(region, psi.n_sites)
    arrays = psi.arrays

    left = np.ones((1, 1), dtype=DTYPE)
    for a in arrays[:region[0]]:
        left = np.einsum("ab,apc,bpd->cd", left, a, a.conj())
    right = np.ones((1, 1), dtype=DTYPE)
    for a in reversed(arrays[region[-1] + 1:]):
        right = np.einsum("cpa,dpb,ab->cd", a, a.conj(), right)

    tensors = []
    for k, site in enumerate(region):
        a = arrays[site]
        w = np.einsum("lpr,mqs->lmpqrs", a, a.conj())
        if k == 0:
            w = np.einsum("lm,lmpqrs->pqrs", left, w)[None]
        else:
            w = w.reshape(a.shape[0] ** 2, psi.d, psi.d, a.shape[2], a.shape[2])
        if k == len(region) - 1:
            w = np.einsum("xpqcd,cd->xpq", w, right)[..., None]
        else:
            for traced in arrays[site + 1:region[k + 1]]:
                w = np.einsum("xpqcd,cse,dsf->xpqef", w, traced, traced.conj(), optimize=True)
            w = w.reshape(w.shape[0], psi.d, psi.d, -1)
        tensors.append(w)

    op = MatrixProductOperator.from_arrays(tensors)
    if normalize:
        trace = mpo_trace(op)
        if abs(trace) == 0.0:
            raise ValueError("Cannot normalize the reduced density of the zero state")
        op = mpo_scale(op, 1.0 / trace.real)
    logger.debug(f"reduced_density_mpo on {region}: bond dims {op.bond_dims}")
    return op


def product_density_mpo(psi: MatrixProductState, region_a: Sequence[int],
                        region_b: Sequence[int]) -> MatrixProductOperator:
    """
    rho_A (x) rho_B as an MPO on the sites of A followed by B.

    Raises:
        ValueError: If the regions overlap, are empty, or A is not entirely left of B.
    """
    region_a = _validate_region(region_a, psi.n_sites)
    region_b = _validate_region(region_b, psi.n_sites)
    if set(region_a) & set(region_b):
        raise ValueError(f"Regions {region_a} and {region_b} overlap")
    if region_a[-1] > region_b[0]:
        raise ValueError(f"Region A {region_a} must lie entirely left of region B {region_b}; "
                         f"interleaved regions are not supported")
    return mpo_tensor_product(reduced_density_mpo(psi, region_a), reduced_density_mpo(psi, region_b))

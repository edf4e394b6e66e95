import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.special import xlogy

from gedmrg.config.config import DENSE_STATE_LIMIT
from gedmrg.errors import DenseLimitError, NonCanonicalError
from gedmrg.tensor.tensor import (DTYPE, Tensor, _matrix_svd, contract, discarded_weight,
                                  truncation_rank)

logger = logging.getLogger(__name__)

SITE_LABELS = ("vL", "p", "vR")
# Schmidt values below this are kept but reported by kernel_flags.
KERNEL_THRESHOLD = 1e-14


class CanonicalForm(Enum):
    MIXED = "mixed-canonical-at-center"
    NONE = "none"


@dataclass(frozen=True, eq=False)
class MatrixProductState:
    """
    Finite open-boundary matrix product state.

    Every site tensor has legs ('vL', 'p', 'vR'). In mixed-canonical form the
    sites left of `center` are left isometries, the sites right of it are right
    isometries, and `schmidt[b]` holds the Schmidt values of the cut between
    sites b and b + 1. States in `CanonicalForm.NONE` carry no Schmidt data.

    Attributes:
        sites (tuple): The N site tensors.
        schmidt (tuple): N - 1 descending Schmidt value arrays, or empty.
        center (int): Orthogonality center.
        canonical_form (CanonicalForm): Whether the gauge above holds.
    """
    sites: Tuple[Tensor, ...]
    schmidt: Tuple[np.ndarray, ...]
    center: int
    canonical_form: CanonicalForm

    def __post_init__(self) -> None:
        sites = tuple(t if isinstance(t, Tensor) else Tensor(SITE_LABELS, t) for t in self.sites)
        if not sites:
            raise ValueError("A matrix product state needs at least one site")
        for i, t in enumerate(sites):
            if t.labels != SITE_LABELS:
                raise ValueError(f"Site {i} has legs {t.labels}, expected {SITE_LABELS}")
        if sites[0].dim("vL") != 1 or sites[-1].dim("vR") != 1:
            raise ValueError("Boundary bonds must have dimension 1")
        d = sites[0].dim("p")
        for i in range(len(sites) - 1):
            if sites[i].dim("vR") != sites[i + 1].dim("vL"):
                raise ValueError(
                    f"Bond {i + 1} mismatch: {sites[i].dim('vR')} vs {sites[i + 1].dim('vL')}")
            if sites[i + 1].dim("p") != d:
                raise ValueError(f"Site {i + 1} has physical dimension {sites[i + 1].dim('p')}, expected {d}")
        if not 0 <= self.center < len(sites):
            raise ValueError(f"center {self.center} out of range for {len(sites)} sites")

        schmidt = tuple(np.asarray(s, dtype=float).copy() for s in self.schmidt)
        if self.canonical_form is CanonicalForm.MIXED:
            if len(schmidt) != len(sites) - 1:
                raise ValueError(f"Expected {len(sites) - 1} Schmidt sequences, got {len(schmidt)}")
            for b, s in enumerate(schmidt):
                if s.shape != (sites[b].dim("vR"),):
                    raise ValueError(f"Schmidt sequence {b} has shape {s.shape}, bond is {sites[b].dim('vR')}")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "schmidt", schmidt)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def d(self) -> int:
        return self.sites[0].dim("p")

    @property
    def bond_dims(self) -> List[int]:
        """Internal bond dimensions, bond b sitting between sites b and b + 1."""
        return [t.dim("vR") for t in self.sites[:-1]]

    @property
    def chi(self) -> int:
        return max(self.bond_dims, default=1)

    @property
    def arrays(self) -> List[np.ndarray]:
        return [t.data for t in self.sites]

    def kernel_flags(self, bond: int) -> np.ndarray:
        """Boolean mask of the numerically vanishing Schmidt values at `bond` (1-based)."""
        return schmidt_values(self, bond) < KERNEL_THRESHOLD

    def is_canonical(self, tol: float = 1e-10) -> bool:
        """Checks the left/right isometry conditions around the center."""
        for i, a in enumerate(self.arrays):
            if i < self.center:
                gram = np.einsum("apb,apc->bc", a.conj(), a)
            elif i > self.center:
                gram = np.einsum("apb,cpb->ac", a, a.conj())
            else:
                continue
            if not np.allclose(gram, np.eye(gram.shape[0]), atol=tol, rtol=0.0):
                return False
        return True

    def __str__(self) -> str:
        return (f"MatrixProductState(n_sites={self.n_sites}, d={self.d}, chi={self.chi}, "
                f"center={self.center}, form={self.canonical_form.value})")


def _from_arrays(arrays: Sequence[np.ndarray], schmidt: Sequence[np.ndarray], center: int,
                 form: CanonicalForm = CanonicalForm.MIXED) -> MatrixProductState:
    return MatrixProductState(tuple(Tensor(SITE_LABELS, a) for a in arrays), tuple(schmidt), center, form)


def _left_qr_pass(arrays: List[np.ndarray]) -> None:
    for i in range(len(arrays) - 1):
        chi_l, d, chi_r = arrays[i].shape
        q, r = scipy.linalg.qr(arrays[i].reshape(chi_l * d, chi_r), mode="economic")
        arrays[i] = q.reshape(chi_l, d, q.shape[1])
        arrays[i + 1] = np.einsum("ab,bpc->apc", r, arrays[i + 1])
    nrm = np.linalg.norm(arrays[-1])
    if nrm == 0.0:
        raise ValueError("Cannot canonicalize the zero state")
    arrays[-1] = arrays[-1] / nrm


def _right_svd_pass(arrays: List[np.ndarray], chi_max: Optional[int], cutoff: float
                    ) -> Tuple[List[np.ndarray], List[float]]:
    n = len(arrays)
    schmidt: List[np.ndarray] = [np.ones(1)] * (n - 1)
    weights = [0.0] * (n - 1)
    for i in range(n - 1, 0, -1):
        chi_l, d, chi_r = arrays[i].shape
        u, s, vh = _matrix_svd(arrays[i].reshape(chi_l, d * chi_r))
        keep = truncation_rank(s, chi_max, cutoff)
        weights[i - 1] = discarded_weight(s, keep)
        s = s[:keep]
        s_norm = np.linalg.norm(s)
        if s_norm == 0.0:
            raise ValueError("Cannot canonicalize the zero state")
        s = s / s_norm
        arrays[i] = vh[:keep].reshape(keep, d, chi_r)
        arrays[i - 1] = np.einsum("apb,bc->apc", arrays[i - 1], u[:, :keep] * s)
        schmidt[i - 1] = s
    arrays[0] = arrays[0] / np.linalg.norm(arrays[0])
    return schmidt, weights


def _shift_right(arrays: List[np.ndarray], schmidt: List[np.ndarray], c: int) -> None:
    chi_l, d, chi_r = arrays[c].shape
    u, s, vh = _matrix_svd(arrays[c].reshape(chi_l * d, chi_r))
    s = s / np.linalg.norm(s)
    arrays[c] = u.reshape(chi_l, d, s.size)
    arrays[c + 1] = np.einsum("ab,bpc->apc", s[:, None] * vh, arrays[c + 1])
    schmidt[c] = s


def _shift_left(arrays: List[np.ndarray], schmidt: List[np.ndarray], c: int) -> None:
    chi_l, d, chi_r = arrays[c].shape
    u, s, vh = _matrix_svd(arrays[c].reshape(chi_l, d * chi_r))
    s = s / np.linalg.norm(s)
    arrays[c] = vh.reshape(s.size, d, chi_r)
    arrays[c - 1] = np.einsum("apb,bc->apc", arrays[c - 1], u * s)
    schmidt[c - 1] = s


def _move_center(arrays: List[np.ndarray], schmidt: List[np.ndarray], start: int, stop: int) -> None:
    for c in range(start, stop):
        _shift_right(arrays, schmidt, c)
    for c in range(start, stop, -1):
        _shift_left(arrays, schmidt, c)


def _full_canonical(arrays: Sequence[np.ndarray], center: int, chi_max: Optional[int] = None,
                    cutoff: float = 0.0) -> Tuple[MatrixProductState, List[float]]:
    arrays = [np.array(a, dtype=DTYPE) for a in arrays]
    _left_qr_pass(arrays)
    schmidt, weights = _right_svd_pass(arrays, chi_max, cutoff)
    _move_center(arrays, schmidt, 0, center)
    return _from_arrays(arrays, schmidt, center), weights


def from_dense_state(amplitudes, d: int, n_sites: int, chi_max: Optional[int] = None,
                     cutoff: float = 0.0) -> MatrixProductState:
    """
    Builds an MPS from a dense state vector by successive SVDs.

    Site 0 is the most significant index of `amplitudes`. The input is
    normalized; the result is mixed-canonical at the last site.

    Args:
        amplitudes: Complex vector of length d ** n_sites.
        d: Local dimension.
        n_sites: Number of sites.
        chi_max: Optional bond dimension cap.
        cutoff: Relative singular value cutoff.

    Raises:
        ValueError: If the length is not d ** n_sites or the vector is zero.
    """
    v = np.asarray(amplitudes, dtype=DTYPE).ravel()
    if v.size != d ** n_sites:
        raise ValueError(f"Expected {d}**{n_sites} = {d ** n_sites} amplitudes, got {v.size}")
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise ValueError("Cannot build a matrix product state from the zero vector")
    rest = (v / nrm).reshape(1, -1)
    arrays = []
    chi_l = 1
    total_weight = 0.0
    for _ in range(n_sites - 1):
        u, s, vh = _matrix_svd(rest.reshape(chi_l * d, -1))
        keep = truncation_rank(s, chi_max, cutoff)
        total_weight += discarded_weight(s, keep)
        arrays.append(u[:, :keep].reshape(chi_l, d, keep))
        rest = s[:keep, None] * vh[:keep]
        chi_l = keep
    arrays.append(rest.reshape(chi_l, d, 1))
    if total_weight > 0.0:
        logger.debug(f"from_dense_state discarded a total weight of {total_weight:.3e}")
    psi, _ = _full_canonical(arrays, n_sites - 1)
    return psi


def canonicalize(psi: MatrixProductState, new_center: int, refresh: bool = False) -> MatrixProductState:
    """
    Returns `psi` in mixed-canonical form with its center at `new_center`.

    A canonical input only moves the center with exact SVDs, so canonicalizing
    twice to the same center returns the input unchanged. A non-canonical input,
    or `refresh=True`, triggers a full QR/SVD pass that recomputes every
    Schmidt sequence and normalizes the state.

    Raises:
        ValueError: If `new_center` is out of range.
    """
    if not 0 <= new_center < psi.n_sites:
        raise ValueError(f"new_center {new_center} out of range for {psi.n_sites} sites")
    if refresh or psi.canonical_form is not CanonicalForm.MIXED:
        state, _ = _full_canonical(psi.arrays, new_center)
        return state
    if psi.center == new_center:
        return psi
    arrays = list(psi.arrays)
    schmidt = list(psi.schmidt)
    _move_center(arrays, schmidt, psi.center, new_center)
    return _from_arrays(arrays, schmidt, new_center)


def compress(psi: MatrixProductState, chi_max: Optional[int], cutoff: float = 0.0
             ) -> Tuple[MatrixProductState, List[float]]:
    """
    Truncates every bond of `psi` to at most `chi_max` Schmidt values.

    Returns:
        The normalized compressed state (center 0) and the relative discarded
        weight per bond, bond b between sites b and b + 1.
    """
    if chi_max is not None and chi_max < 1:
        raise ValueError(f"chi_max must be positive, got {chi_max}")
    state, weights = _full_canonical(psi.arrays, 0, chi_max, cutoff)
    logger.debug(f"compress to chi_max={chi_max}: max discarded weight {max(weights, default=0.0):.3e}")
    return state, weights


def schmidt_values(psi: MatrixProductState, bond: int) -> np.ndarray:
    """
    Schmidt values of the cut between sites bond - 1 and bond (1-based bond index).

    Raises:
        NonCanonicalError: If `psi` carries no Schmidt data.
        ValueError: If `bond` is outside 1..N-1.
    """
    if psi.canonical_form is not CanonicalForm.MIXED:
        raise NonCanonicalError("schmidt_values needs a mixed-canonical state, call canonicalize first")
    if not 1 <= bond <= psi.n_sites - 1:
        raise ValueError(f"bond must be in 1..{psi.n_sites - 1}, got {bond}")
    return psi.schmidt[bond - 1].copy()


def renyi_entropy_of_spectrum(probabilities, alpha: float) -> float:
    """
    Rényi entropy (natural log) of a probability vector; alpha=1 gives von Neumann.

    Raises:
        ValueError: If alpha <= 0.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    p = np.clip(np.asarray(probabilities, dtype=float), 0.0, None)
    p = p[p > 0.0]
    if p.size == 0:
        return 0.0
    if alpha == 1:
        return float(-np.sum(xlogy(p, p)))
    if np.isinf(alpha):
        return float(-np.log(np.max(p)))
    return float(np.log(np.sum(p ** alpha)) / (1.0 - alpha))


def entropy(psi: MatrixProductState, bond: int, alpha: float = 1.0) -> float:
    """Rényi entropy of order `alpha` of the bipartition at `bond`."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return renyi_entropy_of_spectrum(schmidt_values(psi, bond) ** 2, alpha)


def to_dense(psi: MatrixProductState, dense_limit: int = DENSE_STATE_LIMIT) -> np.ndarray:
    """
    Contracts `psi` into a dense vector, site 0 being the most significant index.

    Raises:
        DenseLimitError: If d ** N exceeds `dense_limit`.
    """
    size = psi.d ** psi.n_sites
    if size > dense_limit:
        raise DenseLimitError(f"Dense state of size {size} exceeds the limit {dense_limit}")
    acc = psi.sites[0].relabel({"p": "p0"})
    for i in range(1, psi.n_sites):
        acc = contract(acc, psi.sites[i].relabel({"p": f"p{i}"}), [("vR", "vL")])
    return acc.data.reshape(-1)


def _check_same_shape(a: MatrixProductState, b: MatrixProductState) -> None:
    if a.n_sites != b.n_sites or a.d != b.d:
        raise ValueError(f"Shape mismatch: ({a.n_sites} sites, d={a.d}) vs ({b.n_sites} sites, d={b.d})")


def overlap(a: MatrixProductState, b: MatrixProductState) -> complex:
    """<a|b>, computed with left transfer matrices."""
    _check_same_shape(a, b)
    env = np.ones((1, 1), dtype=DTYPE)
    for x, y in zip(a.arrays, b.arrays):
        env = np.einsum("ab,apc,bpd->cd", env, x.conj(), y)
    return complex(env[0, 0])


def expectation(psi: MatrixProductState, op) -> complex:
    """
    <psi|op|psi> for a MatrixProductOperator `op` on the same chain.
    """
    if op.n_sites != psi.n_sites or op.d != psi.d:
        raise ValueError(
            f"Operator on {op.n_sites} sites (d={op.d}) does not match state ({psi.n_sites} sites, d={psi.d})")
    env = np.ones((1, 1, 1), dtype=DTYPE)
    for a, w in zip(psi.arrays, op.arrays):
        env = np.einsum("awb,apc,wpqx,bqd->cxd", env, a.conj(), w, a, optimize=True)
    return complex(env[0, 0, 0])


def random_mps(n_sites: int, d: int, chi: int, seed=None) -> MatrixProductState:
    """
    Random complex MPS with bond dimensions min(chi, d**b, d**(N-b)), canonical at site 0.

    Args:
        n_sites: Number of sites.
        d: Local dimension.
        chi: Bond dimension cap.
        seed: Seed or numpy Generator.
    """
    if n_sites < 1 or d < 1 or chi < 1:
        raise ValueError(f"n_sites, d and chi must be positive, got {n_sites}, {d}, {chi}")
    rng = np.random.default_rng(seed)
    dims = [1] + [min(chi, d ** b, d ** (n_sites - b)) for b in range(1, n_sites)] + [1]
    arrays = [rng.normal(size=(dims[i], d, dims[i + 1])) + 1j * rng.normal(size=(dims[i], d, dims[i + 1]))
              for i in range(n_sites)]
    psi, _ = _full_canonical(arrays, 0)
    return psi


def product_mps(local_states: Sequence) -> MatrixProductState:
    """
    Product state from one local vector per site; each vector is normalized.

    Raises:
        ValueError: On an empty list, a zero vector or inconsistent dimensions.
    """
    if len(local_states) == 0:
        raise ValueError("product_mps needs at least one local state")
    vectors = [np.asarray(v, dtype=DTYPE).ravel() for v in local_states]
    d = vectors[0].size
    arrays = []
    for i, v in enumerate(vectors):
        if v.size != d:
            raise ValueError(f"Local state {i} has dimension {v.size}, expected {d}")
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            raise ValueError(f"Local state {i} is the zero vector")
        arrays.append((v / nrm).reshape(1, d, 1))
    schmidt = [np.ones(1) for _ in range(len(arrays) - 1)]
    return _from_arrays(arrays, schmidt, 0)


def local_expectation(psi: MatrixProductState, op, i: int) -> complex:
    """<psi|op_i|psi> for a d x d matrix acting on site i."""
    c = canonicalize(psi, i).arrays[i]
    return complex(np.einsum("apb,pq,aqb->", c.conj(), np.asarray(op), c))


def nearest_neighbor_correlation(psi: MatrixProductState, op_a, op_b, i: int) -> complex:
    """<psi|op_a_i op_b_{i+1}|psi>."""
    if not 0 <= i < psi.n_sites - 1:
        raise ValueError(f"Pair ({i}, {i + 1}) out of range for {psi.n_sites} sites")
    arrays = canonicalize(psi, i).arrays
    theta = np.einsum("apb,bqc->apqc", arrays[i], arrays[i + 1])
    return complex(np.einsum("apqc,pr,qs,arsc->", theta.conj(), np.asarray(op_a), np.asarray(op_b), theta))

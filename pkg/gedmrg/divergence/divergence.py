"""
Maximal Rényi divergence between rho_AB and rho_A (x) rho_B of a pure MPS.

D_inf = ln lambda, lambda being the largest eigenvalue of
sigma~^{-1/2} rho_AB sigma~^{-1/2}. Three routes are provided:

* `max_divergence_edge` for subsystems at both ends of the chain. sigma is
  diagonal in the product of the inner-edge Schmidt bases, so (sigma + eps I)^{-1/2}
  is absorbed into the state and the resulting traced operator is
  diagonalized by standard DMRG.
* `max_divergence_general` for any pair of non-interleaved regions, through
  generalized DMRG on rho_AB and sigma = rho_A (x) rho_B.
* `max_divergence_exact_mps`, the dense oracle.

All values are in natural-log units.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from gedmrg.config.config import EDGE_OPERATOR_BOND_LIMIT, SweepConfig, oracle_dense_limit
from gedmrg.dmrg.dmrg import DMRGEngine, generalized_dmrg
from gedmrg.errors import DenseLimitError
from gedmrg.mpo.mpo import XxzParams, mpo_to_dense, product_density_mpo, reduced_density_mpo
from gedmrg.mps.mps import CanonicalForm, MatrixProductState, _from_arrays, canonicalize, random_mps, to_dense
from gedmrg.oracle.free_fermions import free_fermion_mi, is_spin_exact
from gedmrg.oracle.oracle import DenseState, max_divergence_exact, von_neumann_entropy_exact

logger = logging.getLogger(__name__)

# Bond dimension cap of the random start vectors.
INITIAL_CHI = 8


class GeometryKind(Enum):
    AEB = "aeb"
    EAEBE = "eaebe"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Geometry:
    """
    Two disjoint nonempty regions of a chain of `n_sites` sites.

    Attributes:
        kind (GeometryKind): How the regions were placed.
        region_a (tuple): Sorted sites of A.
        region_b (tuple): Sorted sites of B.
        n_sites (int): Chain length.
    """
    kind: GeometryKind
    region_a: Tuple[int, ...]
    region_b: Tuple[int, ...]
    n_sites: int

    def __post_init__(self) -> None:
        region_a = tuple(sorted(set(int(i) for i in self.region_a)))
        region_b = tuple(sorted(set(int(i) for i in self.region_b)))
        if not region_a or not region_b:
            raise ValueError("Both regions must be nonempty")
        if set(region_a) & set(region_b):
            raise ValueError(f"Regions {list(region_a)} and {list(region_b)} overlap")
        if min(region_a[0], region_b[0]) < 0 or max(region_a[-1], region_b[-1]) >= self.n_sites:
            raise ValueError(f"Regions {list(region_a)}, {list(region_b)} are outside the chain of {self.n_sites} sites")
        object.__setattr__(self, "region_a", region_a)
        object.__setattr__(self, "region_b", region_b)

    @classmethod
    def aeb(cls, n_sites: int, ns: int) -> "Geometry":
        """A and B are the first and last `ns` sites."""
        if ns < 1 or 2 * ns > n_sites:
            raise ValueError(f"AEB needs 1 <= ns <= N/2, got ns={ns} for N={n_sites}")
        return cls(GeometryKind.AEB, tuple(range(ns)), tuple(range(n_sites - ns, n_sites)), n_sites)

    @classmethod
    def eaebe(cls, n_sites: int, ns: int) -> "Geometry":
        """
        A and B of `ns` sites separated from each other and from the edges by
        environments of (N - 2 ns) // 3 sites; leftover sites go to the leftmost segments.
        """
        rest = n_sites - 2 * ns
        if ns < 1 or rest < 3:
            raise ValueError(f"EAEBE needs ns >= 1 and at least 3 environment sites, got ns={ns} for N={n_sites}")
        segments = [rest // 3 + (1 if k < rest % 3 else 0) for k in range(3)]
        start_a = segments[0]
        start_b = start_a + ns + segments[1]
        return cls(GeometryKind.EAEBE, tuple(range(start_a, start_a + ns)),
                   tuple(range(start_b, start_b + ns)), n_sites)

    @classmethod
    def custom(cls, n_sites: int, region_a: Sequence[int], region_b: Sequence[int]) -> "Geometry":
        return cls(GeometryKind.CUSTOM, tuple(region_a), tuple(region_b), n_sites)

    @property
    def union(self) -> Tuple[int, ...]:
        return tuple(sorted(self.region_a + self.region_b))

    def __str__(self) -> str:
        return f"{self.kind.value}(N={self.n_sites}, A={list(self.region_a)}, B={list(self.region_b)})"


@dataclass
class DivergenceResult:
    """
    Attributes:
        d_infinity (float): ln(lam).
        lam (float): Largest eigenvalue of sigma~^{-1/2} rho sigma~^{-1/2}.
        method (str): 'edge', 'gdmrg' or 'exact'.
        epsilon (float): Regularization used.
        converged (bool): Whether the optimizer met its tolerance.
        diagnostics (dict): Sweeps, CG statistics, operator bond dimension, flags.
    """
    d_infinity: float
    lam: float
    method: str
    epsilon: float
    converged: bool
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.d_infinity < -10 * self.epsilon:
            logger.warning(f"{self.method}: D_inf={self.d_infinity:.3e} is below -10*epsilon")


def regularized_inverse_sqrt_schmidt(s, epsilon: float) -> np.ndarray:
    """
    (s**2 + epsilon)**(-1/2) elementwise: the spectrum of (rho + epsilon I)^{-1/2}
    in the Schmidt basis, rho having eigenvalues s**2. For sigma = rho_A (x) rho_B
    pass the products s_A[i] s_B[j].
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("Schmidt values must be nonnegative")
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    with np.errstate(divide="ignore"):
        return 1.0 / np.sqrt(s ** 2 + epsilon)


def _edge_operator_state(psi: MatrixProductState, ns: int, epsilon: float) -> MatrixProductState:
    """
    (sigma + eps I)^{-1/2} (x) 1_E |psi>, unnormalized.

    sigma = rho_A (x) rho_B is diagonal in the product of the inner-edge Schmidt
    bases, with entries (s_A[i] s_B[j])**2. The factor couples i and j, so the
    A-edge index is carried through E to the first site of B.
    """
    n = psi.n_sites
    psi = canonicalize(psi, ns, refresh=True)
    arrays = psi.arrays
    s_a = psi.schmidt[ns - 1]
    if n == 2 * ns:
        arrays[ns] = regularized_inverse_sqrt_schmidt(s_a * s_a, epsilon)[:, None, None] * arrays[ns]
        return _from_arrays(arrays, (), 0, CanonicalForm.NONE)

    s_b = psi.schmidt[n - ns - 1]
    g = regularized_inverse_sqrt_schmidt(np.outer(s_a, s_b), epsilon)
    eye = np.eye(s_a.size)
    for k in range(ns, n - ns):
        a = arrays[k]
        if k == ns:
            arrays[k] = np.einsum("ij,ipr->ipjr", eye, a).reshape(s_a.size, a.shape[1], s_a.size * a.shape[2])
        else:
            arrays[k] = np.einsum("ij,lpr->ilpjr", eye, a).reshape(s_a.size * a.shape[0], a.shape[1],
                                                                   s_a.size * a.shape[2])
    b = arrays[n - ns]
    arrays[n - ns] = (g[:, :, None, None] * b[None]).reshape(s_a.size * b.shape[0], b.shape[1], b.shape[2])
    return _from_arrays(arrays, (), 0, CanonicalForm.NONE)


def max_divergence_edge(psi: MatrixProductState, ns: int, epsilon: float, cfg: Optional[SweepConfig] = None,
                        max_operator_bond: int = EDGE_OPERATOR_BOND_LIMIT) -> DivergenceResult:
    """
    D_inf for A = first `ns` sites and B = last `ns` sites.

    sigma is regularized as rho_A (x) rho_B + eps I, the same shift used by
    `max_divergence_general` and the dense oracle. Its inverse square root is
    applied to the state, E is traced out, and the largest eigenvalue of the
    resulting operator on A u B is found with DMRG in highest mode. The operator
    bond between A and B is (chi_A chi_B)**2 for inner-edge bond dimensions chi_A, chi_B.

    Raises:
        ValueError: If 2 * ns > N, or the operator bond dimension exceeds `max_operator_bond`.
    """
    if ns < 1 or 2 * ns > psi.n_sites:
        raise ValueError(f"The edge method needs 1 <= ns <= N/2, got ns={ns} for N={psi.n_sites}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    cfg = cfg or SweepConfig()
    geom = Geometry.aeb(psi.n_sites, ns)
    stitched = _edge_operator_state(psi, ns, epsilon)
    op = reduced_density_mpo(stitched, geom.union, normalize=False)
    bond = op.bond_dim
    logger.info(f"edge operator on {2 * ns} sites has bond dimension {bond} (state chi={psi.chi})")
    if bond > max_operator_bond:
        raise ValueError(f"Edge operator bond dimension {bond} exceeds the limit {max_operator_bond}")

    psi0 = random_mps(2 * ns, psi.d, min(cfg.chi_max, INITIAL_CHI), seed=cfg.seed)
    result = DMRGEngine(op, psi0, cfg, mode="highest").run()
    lam = result.energy
    return DivergenceResult(d_infinity=float(np.log(lam)), lam=lam, method="edge", epsilon=epsilon,
                            converged=result.converged,
                            diagnostics={"sweeps": result.sweeps_used, "operator_bond_dim": bond,
                                         "cg_mean_iterations": 0.0, "local_misses": result.local_misses,
                                         "regularization_dominated": bool(epsilon > 0 and lam >= 0.5 / epsilon)})


def _ordered_regions(geom: Geometry) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    region_a, region_b = geom.region_a, geom.region_b
    if region_a[0] > region_b[-1]:
        region_a, region_b = region_b, region_a
    if region_a[-1] > region_b[0]:
        raise ValueError(f"Interleaved regions {list(geom.region_a)} and {list(geom.region_b)} are not supported")
    return region_a, region_b


def max_divergence_general(psi: MatrixProductState, geom: Geometry, epsilon: float,
                           cfg: Optional[SweepConfig] = None,
                           psi0: Optional[MatrixProductState] = None) -> DivergenceResult:
    """
    D_inf of any two non-interleaved regions by generalized DMRG with sigma + eps I.

    B lying left of A is handled by exchanging the roles of the regions.

    Args:
        psi: The state.
        geom: Regions and chain length.
        epsilon: Regularization, positive.
        cfg: Sweep parameters.
        psi0: Start vector on the |A| + |B| region sites; random when omitted.

    Raises:
        ValueError: For interleaved regions or a chain length mismatch.
        ConvergenceError: If an inner CG solve does not converge.
    """
    if geom.n_sites != psi.n_sites:
        raise ValueError(f"Geometry is for {geom.n_sites} sites, the state has {psi.n_sites}")
    cfg = cfg or SweepConfig()
    region_a, region_b = _ordered_regions(geom)
    rho = reduced_density_mpo(psi, region_a + region_b)
    sigma = product_density_mpo(psi, region_a, region_b)
    if psi0 is None:
        psi0 = random_mps(rho.n_sites, psi.d, min(cfg.chi_max, INITIAL_CHI), seed=cfg.seed)
    logger.info(f"generalized DMRG for {geom}: rho bond {rho.bond_dim}, sigma bond {sigma.bond_dim}")
    result = generalized_dmrg(rho, sigma, psi0, epsilon, mode="highest", cfg=cfg)
    return DivergenceResult(d_infinity=float(np.log(result.lam)), lam=result.lam, method="gdmrg",
                            epsilon=epsilon, converged=result.converged,
                            diagnostics={"sweeps": result.sweeps_used,
                                         "cg_mean_iterations": result.cg_mean_iterations,
                                         "local_misses": result.local_misses,
                                         "regularization_dominated": result.regularization_dominated})


def max_divergence_exact_mps(psi: MatrixProductState, geom: Geometry, epsilon: float,
                             regularization: str = "shift") -> DivergenceResult:
    """
    Dense reference for D_inf of `psi`; see `max_divergence_exact` for the regularizations.

    Raises:
        DenseLimitError: If the state or the reduced matrices are too large.
    """
    v = DenseState.from_vector(to_dense(psi), psi.d)
    d_inf = max_divergence_exact(v, geom.region_a, geom.region_b, epsilon, regularization=regularization)
    return DivergenceResult(d_infinity=d_inf, lam=float(np.exp(d_inf)), method="exact", epsilon=epsilon,
                            converged=True, diagnostics={"regularization": regularization})


def _region_entropy(psi: MatrixProductState, region: Sequence[int]) -> float:
    return von_neumann_entropy_exact(mpo_to_dense(reduced_density_mpo(psi, region)))


def mutual_information_vn(psi: MatrixProductState, geom: Geometry, params: Optional[XxzParams] = None) -> float:
    """
    S(rho_A) + S(rho_B) - S(rho_AB) in natural-log units.

    The reduced density matrices are densified from their MPOs. When A u B is
    too large for that and `params` describe the free-fermion point with
    regions where the fermionic entropies are exact, the free-fermion
    correlation matrix is used instead.

    Raises:
        DenseLimitError: If neither route applies.
    """
    if psi.d ** len(geom.union) <= oracle_dense_limit():
        return (_region_entropy(psi, geom.region_a) + _region_entropy(psi, geom.region_b)
                - _region_entropy(psi, geom.union))
    if (params is not None and params.is_free_fermion and params.N == psi.n_sites
            and is_spin_exact(psi.n_sites, geom.region_a, geom.region_b)):
        logger.info(f"A u B of {len(geom.union)} sites is too large for dense reduction, using free fermions")
        return free_fermion_mi(psi.n_sites, geom.region_a, geom.region_b, params.J)
    raise DenseLimitError(
        f"A u B has {len(geom.union)} sites, above the dense limit {oracle_dense_limit()}, "
        f"and no free-fermion route applies")

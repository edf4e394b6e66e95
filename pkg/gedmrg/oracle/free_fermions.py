"""
Free-fermion reference for the XXZ chain at delta = 0, h = 0.

The Jordan-Wigner transformation maps the chain to spinless fermions with
hopping -J/2 and open boundaries. Single-particle energies are
-J cos(k pi / (N + 1)); the ground state fills every strictly negative mode,
so for odd N the zero mode stays empty.

Entropies come from the restricted correlation matrix C_ij = <c_i^dag c_j>.
For a single interval the fermionic and spin reduced states coincide. For a
pure state a region and its complement share their entropy, so a region whose
complement is a single interval is also exact. Any other region yields the
fermionic entropy, which may differ from the spin one.
"""
import logging
from typing import Iterable, List

import numpy as np
import scipy.linalg
from scipy.special import xlogy

logger = logging.getLogger(__name__)


def hopping_matrix(n_sites: int, J: float = 1.0) -> np.ndarray:
    if n_sites < 2:
        raise ValueError(f"The chain needs at least 2 sites, got {n_sites}")
    off = np.full(n_sites - 1, -J / 2)
    return np.diag(off, 1) + np.diag(off, -1)


def single_particle_modes(n_sites: int, J: float = 1.0):
    """Ascending single-particle energies and the corresponding orthonormal modes (columns)."""
    return scipy.linalg.eigh(hopping_matrix(n_sites, J))


def free_fermion_correlation(n_sites: int, J: float = 1.0) -> np.ndarray:
    energies, modes = single_particle_modes(n_sites, J)
    filled = modes[:, energies < -1e-12]
    return filled.conj() @ filled.T


def free_fermion_ground_energy(n_sites: int, J: float = 1.0) -> float:
    energies, _ = single_particle_modes(n_sites, J)
    return float(np.sum(energies[energies < -1e-12]))


def _is_interval(sites: List[int]) -> bool:
    return not sites or sites[-1] - sites[0] == len(sites) - 1


def correlation_entropy(C: np.ndarray, region: Iterable[int]) -> float:
    """
    -sum [nu ln nu + (1 - nu) ln(1 - nu)] over the eigenvalues nu of C restricted to `region`.
    """
    region = sorted(set(region))
    if not region:
        return 0.0
    nu = np.clip(np.linalg.eigvalsh(C[np.ix_(region, region)]), 0.0, 1.0)
    return float(-np.sum(xlogy(nu, nu) + xlogy(1.0 - nu, 1.0 - nu)))


def region_entropy(C: np.ndarray, region: Iterable[int]) -> float:
    """Spin entropy of `region`, taken from the complement when only that one is an interval."""
    region = sorted(set(region))
    complement = [i for i in range(C.shape[0]) if i not in region]
    if not _is_interval(region) and _is_interval(complement):
        return correlation_entropy(C, complement)
    if not _is_interval(region):
        logger.debug(f"Region {region} is not an interval; returning the fermionic entropy")
    return correlation_entropy(C, region)


def is_spin_exact(n_sites: int, region_a: Iterable[int], region_b: Iterable[int]) -> bool:
    """True when every entropy entering free_fermion_mi equals its spin-chain value."""
    union = sorted(set(region_a) | set(region_b))
    complement = [i for i in range(n_sites) if i not in union]
    return (_is_interval(sorted(set(region_a))) and _is_interval(sorted(set(region_b)))
            and (_is_interval(union) or _is_interval(complement)))


def free_fermion_mi(n_sites: int, region_a: Iterable[int], region_b: Iterable[int], J: float = 1.0) -> float:
    """
    Mutual information S_A + S_B - S_AB of the half-filled free-fermion ground state.
    """
    region_a, region_b = sorted(set(region_a)), sorted(set(region_b))
    if not region_a or not region_b:
        raise ValueError("Both regions must be nonempty")
    if set(region_a) & set(region_b):
        raise ValueError(f"Regions {region_a} and {region_b} overlap")
    if region_a[0] < 0 or max(region_a[-1], region_b[-1]) >= n_sites or region_b[0] < 0:
        raise ValueError(f"Regions {region_a}, {region_b} are outside the chain of {n_sites} sites")
    C = free_fermion_correlation(n_sites, J)
    return (region_entropy(C, region_a) + region_entropy(C, region_b)
            - region_entropy(C, region_a + region_b))

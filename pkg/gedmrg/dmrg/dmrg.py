"""
Two-site sweep optimizers.

`DMRGEngine` finds an extremal eigenpair of a Hermitian MPO, the usual
ground-state search when `mode` is 'lowest'. `GeneralizedDMRGEngine`
optimizes the ratio <psi|rho|psi> / <psi|sigma + eps I|psi> site by site with
the generalized Lanczos solver, inverting the regularized metric with
conjugate gradient. Both sweep left to right over the pairs (i, i + 1) and
then back, and refresh the canonical form of the state they return.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from gedmrg.config.config import SweepConfig
from gedmrg.errors import ConvergenceError, NonHermitianError, StaleEnvironmentError
from gedmrg.krylov.krylov import (MODES, CgResult, EigSolveReport, LinearOperatorApplier,
                                  conjugate_gradient, generalized_lanczos, lanczos)
from gedmrg.mpo.mpo import MatrixProductOperator
from gedmrg.mps.mps import CanonicalForm, MatrixProductState, _from_arrays, canonicalize, expectation
from gedmrg.tensor.tensor import DTYPE, Tensor, svd

logger = logging.getLogger(__name__)

__all__ = ["SweepConfig", "Environment", "two_site_applier", "DmrgResult", "GdmrgResult",
           "DMRGEngine", "GeneralizedDMRGEngine", "dmrg_ground_state", "generalized_dmrg"]

HERMITIAN_SPOT_TOL = 1e-8
_APPLY_EXPR = "awb,wpqx,xrsy,cyd,bqsd->aprc"


class Environment:
    """
    Cached contractions of bra, operator and ket around a two-site block.

    `left[i]` contracts sites 0..i-1 and `right[i]` sites i+1..N-1, each with
    legs (bra bond, operator bond, ket bond). Entries that are not current are
    None. Every update bumps `version`, which invalidates appliers built from
    older versions.
    """

    def __init__(self, op: MatrixProductOperator, arrays: List[np.ndarray], center: int = 0) -> None:
        if op.n_sites != len(arrays):
            raise ValueError(f"Operator has {op.n_sites} sites, state has {len(arrays)}")
        self.op = op
        self.n_sites = op.n_sites
        self.version = 0
        self.left: List[Optional[np.ndarray]] = [None] * self.n_sites
        self.right: List[Optional[np.ndarray]] = [None] * self.n_sites
        self.left[0] = np.ones((1, 1, 1), dtype=DTYPE)
        self.right[-1] = np.ones((1, 1, 1), dtype=DTYPE)
        for i in range(center):
            self.update_left(i, arrays[i])
        for i in range(self.n_sites - 1, center, -1):
            self.update_right(i, arrays[i])

    def update_left(self, i: int, a: np.ndarray) -> None:
        """Absorbs the left isometry `a` of site i into left[i + 1]."""
        w = self.op.arrays[i]
        self.left[i + 1] = np.einsum("awb,apc,wpqx,bqd->cxd", self.left[i], a.conj(), w, a, optimize=True)
        self.version += 1

    def update_right(self, i: int, b: np.ndarray) -> None:
        """Absorbs the right isometry `b` of site i into right[i - 1]."""
        w = self.op.arrays[i]
        self.right[i - 1] = np.einsum("cxd,apc,wpqx,bqd->awb", self.right[i], b.conj(), w, b, optimize=True)
        self.version += 1


def two_site_applier(op: MatrixProductOperator, env: Environment, i: int) -> LinearOperatorApplier:
    """
    Effective operator of `op` on the block (i, i + 1).

    The vectors are flattened (left bond, p_i, p_i+1, right bond) tensors.

    Raises:
        ValueError: If i is out of range or the environments around the block are missing.
        StaleEnvironmentError: If `env` changes after the applier is built and it is called again.
    """
    if not 0 <= i < op.n_sites - 1:
        raise ValueError(f"Block ({i}, {i + 1}) out of range for {op.n_sites} sites")
    if env.op is not op:
        raise ValueError("The environment was built for a different operator")
    left, right = env.left[i], env.right[i + 1]
    if left is None or right is None:
        raise ValueError(f"Environments around block ({i}, {i + 1}) are not built")
    w1, w2 = op.arrays[i], op.arrays[i + 1]
    shape = (left.shape[2], w1.shape[2], w2.shape[2], right.shape[2])
    version = env.version
    path = np.einsum_path(_APPLY_EXPR, left, w1, w2, right, np.empty(shape, dtype=DTYPE), optimize="optimal")[0]

    def apply(x: np.ndarray) -> np.ndarray:
        if env.version != version:
            raise StaleEnvironmentError(
                f"Applier for block ({i}, {i + 1}) built at version {version}, environment is at {env.version}")
        theta = np.asarray(x, dtype=DTYPE).reshape(shape)
        return np.einsum(_APPLY_EXPR, left, w1, w2, right, theta, optimize=path).ravel()

    return LinearOperatorApplier(apply, int(np.prod(shape)))


def _check_hermitian(applier: LinearOperatorApplier, rng: np.random.Generator, name: str) -> None:
    x = rng.normal(size=applier.dim) + 1j * rng.normal(size=applier.dim)
    y = rng.normal(size=applier.dim) + 1j * rng.normal(size=applier.dim)
    ay = applier(y)
    lhs = np.vdot(x, ay)
    rhs = np.conj(np.vdot(y, applier(x)))
    scale = np.linalg.norm(x) * np.linalg.norm(ay) + np.finfo(float).tiny
    if abs(lhs - rhs) > HERMITIAN_SPOT_TOL * scale:
        raise NonHermitianError(f"The effective {name} operator is not Hermitian (mismatch {abs(lhs - rhs):.3e})")


@dataclass
class DmrgResult:
    """
    Attributes:
        energy (float): <psi|H|psi> of the returned state.
        psi (MatrixProductState): Optimized state, canonical at site 0.
        sweeps_used (int): Full sweeps performed.
        converged (bool): Whether the sweep tolerance was met.
        history (list): Last local eigenvalue of every sweep.
        max_truncation (float): Largest discarded weight of the final sweep.
        local_misses (int): Local solves that missed lanczos_tol after every restart.
    """
    energy: float
    psi: MatrixProductState
    sweeps_used: int
    converged: bool
    history: List[float] = field(default_factory=list)
    max_truncation: float = 0.0
    local_misses: int = 0


@dataclass
class GdmrgResult:
    """
    Attributes:
        lam (float): <psi|rho|psi> / <psi|sigma + eps I|psi> of the returned state.
        psi (MatrixProductState): The generalized eigenvector, canonical at site 0.
        sweeps_used (int): Full sweeps performed.
        converged (bool): Whether the sweep tolerance was met.
        history (list): Last local generalized eigenvalue of every sweep.
        regularization_dominated (bool): lam >= 0.5 / eps, the kernel of sigma dominates.
        cg_mean_iterations (float): Mean CG iterations per inner solve.
        local_misses (int): Local solves that missed lanczos_tol after every restart.
    """
    lam: float
    psi: MatrixProductState
    sweeps_used: int
    converged: bool
    history: List[float] = field(default_factory=list)
    regularization_dominated: bool = False
    cg_mean_iterations: float = 0.0
    local_misses: int = 0


class DMRGEngine:
    """
    Two-site DMRG for an extremal eigenpair of a Hermitian MPO.

    Attributes:
        op (MatrixProductOperator): The operator optimized.
        cfg (SweepConfig): Sweep parameters.
        mode (str): 'lowest' or 'highest'.
        arrays (list): Current site tensors.
        center (int): Current orthogonality center.
        history (list): Per-sweep values.
        local_values (list): Value of every local update.
    """

    def __init__(self, op: MatrixProductOperator, psi0: MatrixProductState, cfg: Optional[SweepConfig] = None,
                 mode: str = "lowest") -> None:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got '{mode}'")
        if op.n_sites != psi0.n_sites or op.d != psi0.d:
            raise ValueError(f"Operator ({op.n_sites} sites, d={op.d}) and state "
                             f"({psi0.n_sites} sites, d={psi0.d}) do not match")
        if psi0.n_sites < 2:
            raise ValueError("Two-site sweeps need at least 2 sites")
        self.op = op
        self.cfg = cfg or SweepConfig()
        self.mode = mode
        psi = canonicalize(psi0, 0, refresh=True)
        self.arrays = psi.arrays
        self.center = 0
        self.sweeps = 0
        self.converged = False
        self.history: List[float] = []
        self.local_values: List[float] = []
        self.local_misses = 0
        self.sweep_misses = 0
        self.truncation: List[float] = []
        self.rng = np.random.default_rng(self.cfg.seed)
        self._check_next = True
        self.environments = self._build_environments()

    def _build_environments(self) -> List[Environment]:
        return [Environment(self.op, self.arrays, self.center)]

    @property
    def n_sites(self) -> int:
        return len(self.arrays)

    def solve_local(self, i: int, theta0: np.ndarray) -> EigSolveReport:
        applier = two_site_applier(self.op, self.environments[0], i)
        if self._check_next:
            _check_hermitian(applier, self.rng, "two-site")
            self._check_next = False
        return self._restarted(lambda v: lanczos(applier, v, mode=self.mode, tol=self.cfg.lanczos_tol,
                                                 max_iter=self.cfg.lanczos_max_iter, seed=self.cfg.seed), theta0)

    def _restarted(self, solve: Callable[[np.ndarray], EigSolveReport], v0: np.ndarray) -> EigSolveReport:
        """Reruns `solve` from its own Ritz vector until the residual meets lanczos_tol."""
        report = solve(v0)
        iterations, cg_iterations = report.iterations, report.cg_iterations
        for _ in range(self.cfg.lanczos_max_restarts):
            if report.converged:
                break
            report = solve(report.vector)
            iterations += report.iterations
            cg_iterations += report.cg_iterations
        report.iterations, report.cg_iterations = iterations, cg_iterations
        return report

    def update_local(self, i: int, moving_right: bool) -> float:
        a, b = self.arrays[i], self.arrays[i + 1]
        theta0 = np.einsum("apb,bqc->apqc", a, b)
        report = self.solve_local(i, theta0.ravel())
        if not report.converged:
            self.local_misses += 1
            self.sweep_misses += 1
            logger.warning(f"local solve at block ({i}, {i + 1}) in sweep {self.sweeps + 1} stopped with residual "
                           f"{report.residual_norm:.3e} after {self.cfg.lanczos_max_restarts} restarts")
        theta = report.vector.reshape(theta0.shape)
        theta = theta / np.linalg.norm(theta)

        split = svd(Tensor(("vL", "p", "q", "vR"), theta), ["vL", "p"], self.cfg.chi_max, self.cfg.svd_cutoff)
        s = split.s / np.linalg.norm(split.s)
        u, vh = split.u.data, split.vh.data
        self.truncation.append(split.discarded_weight)
        if moving_right:
            self.arrays[i] = u
            self.arrays[i + 1] = np.einsum("b,bqc->bqc", s, vh)
            self.center = i + 1
            for env in self.environments:
                env.update_left(i, u)
        else:
            self.arrays[i] = np.einsum("apb,b->apb", u, s)
            self.arrays[i + 1] = vh
            self.center = i
            for env in self.environments:
                env.update_right(i + 1, vh)
        logger.debug(f"block ({i}, {i + 1}): value={report.theta:.12g} chi={s.size} "
                     f"krylov={report.iterations} discarded={split.discarded_weight:.2e}")
        self.local_values.append(report.theta)
        return report.theta

    def sweep(self) -> float:
        """One right sweep followed by one left sweep; returns the last local value."""
        self._check_next = True
        self.truncation = []
        self.sweep_misses = 0
        value = 0.0
        for i in range(self.n_sites - 1):
            value = self.update_local(i, moving_right=True)
        for i in range(self.n_sites - 2, -1, -1):
            value = self.update_local(i, moving_right=False)
        self.sweeps += 1
        self.history.append(value)
        return value

    def is_converged(self) -> bool:
        if self.sweeps < self.cfg.min_sweeps or len(self.history) < 2:
            return False
        delta = abs(self.history[-1] - self.history[-2])
        scale = abs(self.history[-1])
        if scale == 0.0:
            return delta == 0.0
        return delta / scale < self.cfg.energy_tol

    def state(self) -> MatrixProductState:
        raw = _from_arrays(self.arrays, (), self.center, CanonicalForm.NONE)
        return canonicalize(raw, 0, refresh=True)

    def _iterate(self) -> None:
        while self.sweeps < self.cfg.max_sweeps:
            value = self.sweep()
            logger.info(f"sweep {self.sweeps}: value={value:.12g} chi={max(a.shape[2] for a in self.arrays)} "
                        f"max discarded={max(self.truncation, default=0.0):.2e}")
            if self.is_converged():
                self.converged = True
                break
        if not self.converged:
            logger.warning(f"Sweeps did not converge within {self.cfg.max_sweeps} sweeps")
        elif self.sweep_misses:
            logger.warning(f"{self.sweep_misses} local solves of the final sweep missed the Lanczos tolerance")
            self.converged = False

    def run(self) -> DmrgResult:
        self._iterate()
        psi = self.state()
        energy = expectation(psi, self.op).real
        return DmrgResult(energy=energy, psi=psi, sweeps_used=self.sweeps, converged=self.converged,
                          history=list(self.history), max_truncation=max(self.truncation, default=0.0),
                          local_misses=self.local_misses)


class GeneralizedDMRGEngine(DMRGEngine):
    """
    Two-site optimization of <psi|rho|psi> / <psi|sigma + epsilon I|psi>.

    The regularized metric is applied on the fly as the sigma applier plus
    epsilon times the identity. Inner solves are conjugate gradient runs with
    tolerance cfg.cg_tol, warm-started from the previous solution.
    """

    def __init__(self, rho: MatrixProductOperator, sigma: MatrixProductOperator, psi0: MatrixProductState,
                 epsilon: float, cfg: Optional[SweepConfig] = None, mode: str = "highest") -> None:
        if not epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        if sigma.n_sites != rho.n_sites or sigma.d != rho.d:
            raise ValueError("rho and sigma must act on the same sites")
        self.sigma = sigma
        self.epsilon = epsilon
        self.cg_solves = 0
        self.cg_iterations = 0
        self._warm: Optional[np.ndarray] = None
        super().__init__(rho, psi0, cfg, mode)

    def _build_environments(self) -> List[Environment]:
        return [Environment(self.op, self.arrays, self.center), Environment(self.sigma, self.arrays, self.center)]

    def solve_local(self, i: int, theta0: np.ndarray) -> EigSolveReport:
        rho_env, sigma_env = self.environments
        A = two_site_applier(self.op, rho_env, i)
        S = two_site_applier(self.sigma, sigma_env, i)
        if self._check_next:
            _check_hermitian(A, self.rng, "rho")
            _check_hermitian(S, self.rng, "sigma")
            self._check_next = False
        M = S.shifted(self.epsilon)
        sweep = self.sweeps

        def solve_m(b: np.ndarray) -> CgResult:
            x0 = self._warm if self._warm is not None and self._warm.shape == b.shape else None
            result = conjugate_gradient(M, b, x0, tol=self.cfg.cg_tol, max_iter=self.cfg.cg_max_iter)
            self.cg_solves += 1
            self.cg_iterations += result.iterations
            if not result.converged:
                raise ConvergenceError(
                    f"Conjugate gradient did not reach {self.cfg.cg_tol:.1e} within {self.cfg.cg_max_iter} "
                    f"iterations at block ({i}, {i + 1}) in sweep {sweep}", position=i, sweep=sweep)
            self._warm = result.x
            return result

        report = self._restarted(
            lambda u: generalized_lanczos(A, M, solve_m, u, mode=self.mode, tol=self.cfg.lanczos_tol,
                                          max_iter=self.cfg.lanczos_max_iter, seed=self.cfg.seed), theta0)
        logger.debug(f"block ({i}, {i + 1}): {report.cg_iterations} CG iterations")
        return report

    @property
    def cg_mean_iterations(self) -> float:
        return self.cg_iterations / self.cg_solves if self.cg_solves else 0.0

    def run(self) -> GdmrgResult:
        self._iterate()
        psi = self.state()
        numerator = expectation(psi, self.op).real
        denominator = expectation(psi, self.sigma).real + self.epsilon
        lam = numerator / denominator
        dominated = lam >= 0.5 / self.epsilon
        if dominated:
            logger.warning(f"lambda={lam:.6g} is comparable to 1/epsilon={1 / self.epsilon:.3g}; "
                           f"the result is dominated by the regularization")
        logger.info(f"generalized sweeps finished: lambda={lam:.12g} after {self.sweeps} sweeps, "
                    f"{self.cg_mean_iterations:.1f} CG iterations per solve")
        return GdmrgResult(lam=lam, psi=psi, sweeps_used=self.sweeps, converged=self.converged,
                           history=list(self.history), regularization_dominated=dominated,
                           cg_mean_iterations=self.cg_mean_iterations, local_misses=self.local_misses)


def dmrg_ground_state(H: MatrixProductOperator, psi0: MatrixProductState, cfg: Optional[SweepConfig] = None,
                      mode: str = "lowest") -> Tuple[float, MatrixProductState]:
    """
    Extremal eigenvalue (lowest by default) of `H` and its MPS approximation.

    Returns:
        <psi|H|psi> and psi, canonical at site 0.

    Raises:
        NonHermitianError: If an effective operator fails the symmetry spot check.
    """
    result = DMRGEngine(H, psi0, cfg, mode).run()
    return result.energy, result.psi


def generalized_dmrg(rho: MatrixProductOperator, sigma: MatrixProductOperator, psi0: MatrixProductState,
                     epsilon: float, mode: str = "highest", cfg: Optional[SweepConfig] = None) -> GdmrgResult:
    """
    Extremal generalized eigenvalue of rho psi = lambda (sigma + epsilon I) psi over MPS.

    Raises:
        ConvergenceError: If an inner CG solve hits its cap; carries the block position and sweep.
        NonHermitianError: If rho or sigma fails the symmetry spot check.
    """
    return GeneralizedDMRGEngine(rho, sigma, psi0, epsilon, cfg, mode).run()

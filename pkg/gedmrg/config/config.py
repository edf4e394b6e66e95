import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

# Largest d**N accepted when an MPS or MPO is converted to a dense array.
DENSE_STATE_LIMIT = 2 ** 16
# Largest matrix dimension the brute-force oracle will diagonalize.
DEFAULT_ORACLE_DENSE_LIMIT = 2 ** 14
DENSE_LIMIT_ENV = "GEDMRG_DENSE_LIMIT"
# Largest internal bond of the operator the edge method diagonalizes.
EDGE_OPERATOR_BOND_LIMIT = 2 ** 14

METHODS = ("edge", "gdmrg", "exact", "vn", "free-fermion")
GEOMETRIES = ("aeb", "eaebe", "custom")


def oracle_dense_limit() -> int:
    """
    Returns the oracle dense limit, honouring the GEDMRG_DENSE_LIMIT override.

    Raises:
        ValueError: If the environment variable is set but not a positive integer.
    """
    raw = os.environ.get(DENSE_LIMIT_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_ORACLE_DENSE_LIMIT
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{DENSE_LIMIT_ENV} must be an integer, got '{raw}'")
    if value <= 0:
        raise ValueError(f"{DENSE_LIMIT_ENV} must be positive, got {value}")
    return value


@dataclass
class SweepConfig:
    """
    Parameters shared by the two-site sweep optimizers.

    Attributes:
        max_sweeps: Upper bound on full (right then left) sweeps.
        energy_tol: Relative change of the sweep value below which the run is converged.
        chi_max: Bond dimension cap applied after every two-site update.
        svd_cutoff: Relative singular value cutoff for the two-site split.
        lanczos_tol: Tolerance of the local (generalized) Lanczos solve.
        lanczos_max_iter: Krylov dimension cap of the local solve.
        lanczos_max_restarts: Restarts from the current Ritz vector while the local solve misses lanczos_tol.
        cg_tol_factor: Inner CG tolerance as a fraction of lanczos_tol.
        cg_max_iter: Iteration cap of every inner CG solve.
        min_sweeps: Sweeps performed before convergence is tested.
        seed: Seed of the random vectors used on Lanczos breakdown restarts.
    """
    max_sweeps: int = 50
    energy_tol: float = 1e-8
    chi_max: int = 32
    svd_cutoff: float = 1e-14
    lanczos_tol: float = 1e-10
    lanczos_max_iter: int = 60
    lanczos_max_restarts: int = 4
    cg_tol_factor: float = 0.01
    cg_max_iter: int = 200
    min_sweeps: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("energy_tol", "lanczos_tol", "cg_tol_factor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"SweepConfig.{name} must be positive, got {getattr(self, name)}")
        for name in ("max_sweeps", "chi_max", "lanczos_max_iter", "cg_max_iter"):
            if getattr(self, name) < 1:
                raise ValueError(f"SweepConfig.{name} must be at least 1, got {getattr(self, name)}")
        if self.lanczos_max_restarts < 0:
            raise ValueError(f"SweepConfig.lanczos_max_restarts must be nonnegative, got {self.lanczos_max_restarts}")
        if self.svd_cutoff < 0:
            raise ValueError(f"SweepConfig.svd_cutoff must be nonnegative, got {self.svd_cutoff}")
        if self.min_sweeps < 1:
            raise ValueError(f"SweepConfig.min_sweeps must be at least 1, got {self.min_sweeps}")

    @property
    def cg_tol(self) -> float:
        return self.cg_tol_factor * self.lanczos_tol


@dataclass
class RunConfig:
    """
    Fully resolved configuration of a CLI run.

    Attributes:
        model: Model name; only 'xxz' is available.
        J, h: XXZ coupling and longitudinal field.
        deltas: Anisotropy values, one sweep point each.
        n: Number of sites.
        geometry: One of 'aeb', 'eaebe', 'custom'.
        ns: Subsystem size for 'aeb' and 'eaebe'.
        region_a, region_b: Explicit regions for 'custom'.
        chi_s: Bond dimension cap of the ground state.
        chi_2: Bond dimension cap of the generalized eigenvector.
        epsilon: Regularization of sigma.
        methods: Requested measures, a subset of METHODS.
        output: CSV path; the metadata sidecar is written next to it.
        seed: Seed for the random initial states.
        jobs: Number of sweep points evaluated concurrently.
        max_sweeps: Sweep cap used by every optimizer.
    """
    model: str = "xxz"
    J: float = 1.0
    deltas: List[float] = field(default_factory=lambda: [0.0])
    h: float = 0.0
    n: int = 10
    geometry: str = "aeb"
    ns: int = 3
    region_a: Optional[List[int]] = None
    region_b: Optional[List[int]] = None
    chi_s: int = 32
    chi_2: int = 32
    epsilon: float = 1e-6
    methods: List[str] = field(default_factory=lambda: ["edge", "gdmrg", "exact", "vn"])
    output: str = "results.csv"
    seed: int = 0
    jobs: int = 1
    max_sweeps: int = 50

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        """
        Loads a JSON key-value configuration file.

        Args:
            path: Path of the JSON file.

        Raises:
            FileNotFoundError: If the file does not exist.
            ValueError: If the file contains unknown keys.
        """
        if not os.path.isfile(path):
            raise FileNotFoundError(f"The config file '{path}' does not exist.")
        with open(path, "r") as f:
            raw = json.load(f)
        return cls().merged(raw)

    def merged(self, overrides: Dict[str, Any]) -> "RunConfig":
        """
        Returns a copy with every non-None entry of `overrides` applied.

        Raises:
            ValueError: If an override names an unknown field.
        """
        known = {f.name for f in fields(self)}
        values = asdict(self)
        for key, value in overrides.items():
            if key not in known:
                raise ValueError(f"Unknown configuration key: {key}")
            if value is not None:
                values[key] = value
        if isinstance(values["deltas"], (int, float)):
            values["deltas"] = [values["deltas"]]
        return RunConfig(**values)

    def resolved(self) -> Dict[str, Any]:
        return asdict(self)

    def validate(self) -> None:
        """
        Checks that the requested methods fit the geometry and size.

        Raises:
            ValueError: On any incompatibility.
        """
        if self.model != "xxz":
            raise ValueError(f"Unknown model '{self.model}', only 'xxz' is available")
        if self.n < 2:
            raise ValueError(f"The chain needs at least 2 sites, got {self.n}")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"Unknown geometry '{self.geometry}'")
        if not self.deltas:
            raise ValueError("At least one delta is required")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"Unknown methods: {unknown}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.chi_s < 1 or self.chi_2 < 1:
            raise ValueError("Bond dimension caps must be positive")
        if self.jobs < 1:
            raise ValueError(f"jobs must be at least 1, got {self.jobs}")
        if self.geometry == "custom":
            if not self.region_a or not self.region_b:
                raise ValueError("Custom geometry needs region_a and region_b")
        if "edge" in self.methods and self.geometry != "aeb":
            raise ValueError("The edge method requires the 'aeb' geometry")
        if "exact" in self.methods and 2 ** self.n > oracle_dense_limit():
            raise ValueError(
                f"The exact method needs 2**{self.n} <= dense limit {oracle_dense_limit()}")

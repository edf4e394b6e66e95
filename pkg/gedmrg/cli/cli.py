"""
Batch driver: XXZ ground states, divergences and mutual informations over a delta sweep.

Usage:
    gedmrg --delta -2 --delta 0 --delta 2 --n 10 --geometry aeb --ns 3 \
        --method edge --method gdmrg --method exact --output results.csv

The results table is written as CSV; `<output>.json` holds the resolved
configuration, the package version and the convergence of every point.
"""
import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from gedmrg import __version__
from gedmrg.config.config import GEOMETRIES, METHODS, RunConfig, SweepConfig
from gedmrg.divergence.divergence import (Geometry, max_divergence_edge, max_divergence_exact_mps,
                                          max_divergence_general, mutual_information_vn)
from gedmrg.dmrg.dmrg import DMRGEngine, DmrgResult
from gedmrg.errors import GedmrgError
from gedmrg.mpo.mpo import SZ, XxzParams, xxz_mpo
from gedmrg.mps.mps import MatrixProductState, nearest_neighbor_correlation, random_mps
from gedmrg.oracle.free_fermions import free_fermion_mi

logger = logging.getLogger(__name__)

COLUMNS = ["delta", "N", "ns", "geometry", "method", "measure", "value", "converged", "sweeps",
           "cg_mean_iters", "runtime_seconds"]
# Ground state sweeps use a tighter tolerance than the default.
GROUND_STATE_TOL = 1e-10
INITIAL_CHI = 8


def point_seed(seed: int, index: int) -> int:
    """Seed of sweep point `index`, independent of how points are scheduled."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def build_geometry(cfg: RunConfig) -> Geometry:
    if cfg.geometry == "aeb":
        return Geometry.aeb(cfg.n, cfg.ns)
    if cfg.geometry == "eaebe":
        return Geometry.eaebe(cfg.n, cfg.ns)
    return Geometry.custom(cfg.n, cfg.region_a, cfg.region_b)


def ground_state(params: XxzParams, cfg: RunConfig, seed: int) -> DmrgResult:
    sweep_cfg = SweepConfig(max_sweeps=cfg.max_sweeps, energy_tol=GROUND_STATE_TOL, chi_max=cfg.chi_s, seed=seed)
    psi0 = random_mps(params.N, 2, min(cfg.chi_s, INITIAL_CHI), seed=seed)
    return DMRGEngine(xxz_mpo(params), psi0, sweep_cfg).run()


def average_szsz(psi: MatrixProductState) -> float:
    """<Sz_i Sz_i+1> averaged over the bonds of the chain."""
    return float(np.mean([nearest_neighbor_correlation(psi, SZ, SZ, i).real for i in range(psi.n_sites - 1)]))


def _free_fermion(psi: MatrixProductState, geom: Geometry, params: XxzParams) -> float:
    if not params.is_free_fermion:
        raise ValueError(f"The free-fermion reference needs delta=0 and h=0, got delta={params.delta}, h={params.h}")
    return free_fermion_mi(params.N, geom.region_a, geom.region_b, params.J)


def _measure(method: str, psi: MatrixProductState, geom: Geometry, params: XxzParams,
             cfg: RunConfig, seed: int) -> Tuple[str, float, bool, int, float]:
    """Returns (measure, value, converged, sweeps, cg_mean_iters) for one method."""
    sweep_cfg = SweepConfig(max_sweeps=cfg.max_sweeps, chi_max=cfg.chi_2, seed=seed)
    if method == "edge":
        result = max_divergence_edge(psi, cfg.ns, cfg.epsilon, sweep_cfg)
    elif method == "gdmrg":
        result = max_divergence_general(psi, geom, cfg.epsilon, sweep_cfg)
    elif method == "exact":
        result = max_divergence_exact_mps(psi, geom, cfg.epsilon)
    elif method == "vn":
        return "mutual_information", mutual_information_vn(psi, geom, params), True, 0, 0.0
    elif method == "free-fermion":
        return "mutual_information", _free_fermion(psi, geom, params), True, 0, 0.0
    else:
        raise ValueError(f"Unknown method '{method}'")
    if result.diagnostics.get("regularization_dominated"):
        logger.warning(f"{method} at delta={params.delta}: lambda={result.lam:.3e} is dominated by epsilon")
    return ("d_infinity", result.d_infinity, result.converged, result.diagnostics.get("sweeps", 0),
            result.diagnostics.get("cg_mean_iterations", 0.0))


def run_point(cfg: RunConfig, delta: float, index: int = 0) -> List[Dict[str, Any]]:
    """
    Evaluates every requested method at a single anisotropy.

    A failing method produces a non-converged record with a NaN value; the
    remaining methods still run.

    Returns:
        One record per (method, measure), including the ground state energy
        and the chain-averaged <Sz Sz> under method 'dmrg'.
    """
    seed = point_seed(cfg.seed, index)
    params = XxzParams(J=cfg.J, delta=delta, h=cfg.h, N=cfg.n)
    geom = build_geometry(cfg)
    base = {"delta": delta, "N": cfg.n, "ns": len(geom.region_a), "geometry": cfg.geometry}

    start = time.perf_counter()
    gs = ground_state(params, cfg, seed)
    elapsed = time.perf_counter() - start
    logger.info(f"delta={delta}: E0={gs.energy:.12f} after {gs.sweeps_used} sweeps (chi={gs.psi.chi})")
    records = [
        dict(base, method="dmrg", measure="energy", value=gs.energy, converged=gs.converged,
             sweeps=gs.sweeps_used, cg_mean_iters=0.0, runtime_seconds=elapsed),
        dict(base, method="dmrg", measure="szsz", value=average_szsz(gs.psi), converged=gs.converged,
             sweeps=gs.sweeps_used, cg_mean_iters=0.0, runtime_seconds=elapsed),
    ]

    for method in cfg.methods:
        start = time.perf_counter()
        try:
            measure, value, converged, sweeps, cg_mean = _measure(method, gs.psi, geom, params, cfg, seed)
        except (GedmrgError, ArithmeticError, ValueError) as e:
            logger.error(f"{method} failed at delta={delta}: {e}")
            measure = "mutual_information" if method in ("vn", "free-fermion") else "d_infinity"
            value, converged, sweeps, cg_mean = float("nan"), False, 0, 0.0
        records.append(dict(base, method=method, measure=measure, value=value, converged=converged,
                            sweeps=sweeps, cg_mean_iters=cg_mean, runtime_seconds=time.perf_counter() - start))
    return records


def _run_point_task(args: Tuple[RunConfig, float, int]) -> List[Dict[str, Any]]:
    return run_point(*args)


def run_sweep(cfg: RunConfig, point_runner: Callable = _run_point_task) -> pd.DataFrame:
    """
    Runs every delta of `cfg`, writes the CSV table and its JSON sidecar.

    Points run in a process pool when `cfg.jobs > 1`. Rows are sorted by
    delta, method and measure before writing.

    Raises:
        OSError: If the output cannot be written.
    """
    tasks = [(cfg, float(delta), index) for index, delta in enumerate(cfg.deltas)]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as executor:
            results = list(executor.map(point_runner, tasks))
    else:
        results = [point_runner(task) for task in tasks]

    df = pd.DataFrame([record for records in results for record in records], columns=COLUMNS)
    df = df.sort_values(["delta", "method", "measure"], kind="mergesort").reset_index(drop=True)
    df.to_csv(cfg.output, index=False)

    points = [{"delta": float(delta), "converged": bool(group["converged"].all())}
              for delta, group in df.groupby("delta", sort=True)]
    with open(f"{cfg.output}.json", "w") as f:
        json.dump({"config": cfg.resolved(), "version": __version__, "points": points,
                   "converged": all(p["converged"] for p in points)}, f, indent=2)
    logger.info(f"Wrote {len(df)} rows to {cfg.output}")
    return df


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gedmrg",
                                description="Maximal Renyi divergence of XXZ ground state subsystems.")
    p.add_argument("--config", default=None, help="JSON file with RunConfig keys; flags override it.")
    p.add_argument("--model", choices=["xxz"], default=None)
    p.add_argument("--J", type=float, default=None)
    p.add_argument("--delta", dest="deltas", type=float, action="append", default=None,
                   help="Anisotropy; repeat for a sweep.")
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--n", "--N", dest="n", type=int, default=None, help="Number of sites.")
    p.add_argument("--geometry", choices=GEOMETRIES, default=None)
    p.add_argument("--ns", type=int, default=None, help="Subsystem size for aeb and eaebe.")
    p.add_argument("--region-a", type=int, nargs="+", default=None)
    p.add_argument("--region-b", type=int, nargs="+", default=None)
    p.add_argument("--chi", type=int, default=None, help="Sets both --chi-s and --chi-2.")
    p.add_argument("--chi-s", type=int, default=None, help="Ground state bond dimension cap.")
    p.add_argument("--chi-2", type=int, default=None, help="Generalized eigenvector bond dimension cap.")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--method", dest="methods", choices=METHODS, action="append", default=None,
                   help="Measure to evaluate; repeatable.")
    p.add_argument("--output", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--sweeps", dest="max_sweeps", type=int, default=None)
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """
    Resolves the run configuration: defaults, then the --config file, then flags.

    Raises:
        FileNotFoundError: If --config names a missing file.
        ValueError: On unknown keys or incompatible settings.
    """
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {key: getattr(args, key) for key in ("model", "J", "deltas", "h", "n", "geometry", "ns",
                                                       "chi_s", "chi_2", "epsilon", "methods", "output",
                                                       "seed", "jobs", "max_sweeps")}
    overrides["region_a"] = args.region_a
    overrides["region_b"] = args.region_b
    if args.chi is not None:
        overrides["chi_s"] = overrides["chi_s"] or args.chi
        overrides["chi_2"] = overrides["chi_2"] or args.chi
    cfg = cfg.merged(overrides)
    cfg.validate()
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Returns:
        0 if every point and method converged, 1 otherwise, 2 on configuration or output errors.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except (FileNotFoundError, ValueError) as e:
        logger.error(str(e))
        return 2
    logger.info(f"Running {len(cfg.deltas)} points with methods {cfg.methods} on {build_geometry(cfg)}")
    try:
        df = run_sweep(cfg)
    except OSError as e:
        logger.error(f"Cannot write results: {e}")
        return 2
    return 0 if bool(df["converged"].all()) else 1


if __name__ == "__main__":
    sys.exit(main())

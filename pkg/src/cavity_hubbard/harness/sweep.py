"""Point evaluation and sweeps.

Points are split into ``workers`` contiguous chunks.  Inside a chunk the
ground-state solve of each point starts from the previous point's Ritz
vectors plus a small random admixture (so no eigenvector is missing from
the start block), which roughly halves the cost of dense U_l sweeps.
Results are therefore a function of (config, seed, workers).
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..eigensolver import ConvergenceError, lanczos_lowest, perturbed_start
from ..meanfield import mf_solve
from ..model import ModelParams, build_basis
from ..observables import compute_observables, k_grid
from ..phases import BracketError, bisect_root, classify, ferro_margin, peak_position, scaling_fit
from .config import RunConfig
from .io import artifact_version

log = logging.getLogger(__name__)


@dataclass
class PointResult:
    record: dict
    seconds: float
    vectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.record["status"] == "ok"


def point_params(cfg: RunConfig, **values) -> dict:
    p = {"L": cfg.L, "N": cfg.n_particles, "t": cfg.t, "U_s": cfg.U_s, "U_l": cfg.U_l}
    p.update(values)
    if "N" not in values and "L" in values:
        p["N"] = values["L"] if cfg.N is None else cfg.N
    return p


def expand_points(cfg: RunConfig) -> list[dict]:
    """Parameter dicts in output order (grid outer, sweep inner)."""
    if cfg.mode in ("ground", "observables") or (cfg.mode == "meanfield" and cfg.sweep is None):
        return [point_params(cfg)]
    if cfg.mode in ("sweep", "meanfield"):
        return [point_params(cfg, **{cfg.sweep.param: v}) for v in cfg.sweep.points()]
    if cfg.mode == "phase-diagram":
        return [
            point_params(cfg, **{cfg.grid.param: g, cfg.sweep.param: v})
            for g in cfg.grid.points()
            for v in cfg.sweep.points()
        ]
    raise ValueError(f"mode {cfg.mode} has no point list")


def _cavity_dict(cavity):
    return {"G": cavity.G, "kappa": cavity.kappa, "delta_tilde": cavity.delta_tilde}


def _input_echo(cfg: RunConfig, params: dict, cavity) -> dict:
    echo = dict(params)
    echo.update(_cavity_dict(cavity))
    echo.update(mode=cfg.mode, seed=cfg.seed, n_eigs=cfg.n_eigs, norm_mode=cfg.norm_mode, n_k=cfg.n_k)
    return echo


_basis_cache: dict = {}


def cached_basis(L: int, N: int):
    key = (L, N)
    if key not in _basis_cache:
        _basis_cache.clear()  # one size at a time keeps memory flat
        _basis_cache[key] = build_basis(L, N)
    return _basis_cache[key]


def solve_point(cfg: RunConfig, params: dict, v0=None, observables: bool = True) -> PointResult:
    """Ground state plus (optionally) every observable for one parameter point."""
    start = time.perf_counter()
    cavity = cfg.cavity_for(params["L"], params["U_l"])
    rec = {"input": _input_echo(cfg, params, cavity), "status": "ok", "error": None, "converged": False}
    vectors = None
    try:
        model = ModelParams(**params)
        cavity.check_consistent(model)
        basis = cached_basis(model.L, model.N)
        sol = lanczos_lowest(model, basis, cfg.n_eigs, seed=cfg.seed, v0=v0, ncv=cfg.ncv)
        vectors = sol.warm_start
        rec.update(
            converged=True,
            eigenvalues=[float(x) for x in sol.eigenvalues],
            gap=sol.gap,
            degenerate=sol.degenerate_flag,
            iterations=sol.iterations,
            restarts=sol.restarts,
            residual_max=float(np.max(sol.residual_norms)),
            ground_sx=sol.ground_sx,
            sector_sx=None if sol.sector_sx is None else [float(x) for x in sol.sector_sx],
        )
        if observables:
            rec.update(_observable_fields(sol.psi, basis, model, cavity, cfg))
    except ConvergenceError as err:
        rec.update(status="failed", error=f"ConvergenceError: {err}", best_residual=err.best_residual)
    except (ValueError, ArithmeticError, MemoryError) as err:
        rec.update(status="failed", error=f"{type(err).__name__}: {err}")
    return PointResult(rec, time.perf_counter() - start, vectors)


def _observable_fields(psi, basis, model, cavity, cfg: RunConfig) -> dict:
    obs = compute_observables(psi, basis, model, cavity, n_k=cfg.n_k, norm_mode=cfg.norm_mode)
    sz, sx = obs.structure["z"], obs.structure["x"]
    tz, hz = peak_position(sz)
    tx, hx = peak_position(sx)
    ph = obs.photons
    return {
        "theta_z": tz,
        "theta_x": tx,
        "label": classify(tz, tx),
        "peak_z": hz,
        "peak_x": hx,
        "S_z_at_0": sz.at(0.0),
        "S_z_at_pi": sz.at(math.pi),
        "S_x_at_0": sx.at(0.0),
        "S_x_at_pi": sx.at(math.pi),
        "margin_z": ferro_margin(sz),
        "margin_x": ferro_margin(sx),
        "n_photon": ph.photon_number,
        "n_photon_from_sx": ph.photon_number_from_sx,
        "mean_amplitude": [ph.mean_amplitude.real, ph.mean_amplitude.imag],
        "fluct_ratio": ph.fluctuation_ratio,
        "onsite_square": obs.onsite_square,
        "sum_rule_gap": obs.sum_rule_gap,
        "correlations": {a: [float(x) for x in c.values] for a, c in obs.correlations.items()},
        "structure": {a: [float(x) for x in s.values] for a, s in obs.structure.items()},
    }


def meanfield_point(cfg: RunConfig, params: dict) -> PointResult:
    start = time.perf_counter()
    cavity = cfg.cavity_for(params["L"], params["U_l"])
    rec = {
        "input": _input_echo(cfg, params, cavity) | {"damping": cfg.damping, "variant": cfg.variant},
        "status": "ok",
        "error": None,
        "converged": False,
    }
    try:
        sol = mf_solve(params["L"], params["N"], params["t"], cavity, damping=cfg.damping, variant=cfg.variant)
        best = sol.best
        rec.update(
            converged=best.converged,
            alpha=[best.alpha.real, best.alpha.imag],
            photon_number=best.photon_number,
            order_parameter=best.order_parameter,
            energy=best.energy,
            iterations=best.iterations,
            residual=best.residual,
            fixed_points=[
                {"alpha": [s.alpha.real, s.alpha.imag], "energy": s.energy} for s in sol.fixed_points
            ],
        )
    except (ValueError, ArithmeticError, RuntimeError) as err:
        rec.update(status="failed", error=f"{type(err).__name__}: {err}")
    return PointResult(rec, time.perf_counter() - start)


def run_chunk(cfg: RunConfig, points: list[dict], offset: int) -> list[PointResult]:
    """Evaluate consecutive points, chaining warm starts while L and N stay fixed."""
    out = []
    prev, prev_key = None, None
    for i, params in enumerate(points):
        if cfg.mode == "meanfield":
            out.append(meanfield_point(cfg, params))
            continue
        key = (params["L"], params["N"])
        v0 = None
        if cfg.warm_start and prev is not None and key == prev_key:
            v0 = perturbed_start(prev, np.random.default_rng([cfg.seed, offset + i]))
        res = solve_point(cfg, params, v0=v0, observables=cfg.mode != "ground")
        prev, prev_key = (res.vectors, key) if res.ok else (None, None)
        res.vectors = None
        out.append(res)
        log.info("point %d/%d %s (%.1fs)", offset + i + 1, offset + len(points), res.record["status"], res.seconds)
    return out


def _chunks(n: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, n))
    bounds = np.linspace(0, n, workers + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def run_points(cfg: RunConfig, points: list[dict]) -> list[PointResult]:
    spans = _chunks(len(points), cfg.workers)
    if len(spans) <= 1:
        return run_chunk(cfg, points, 0) if points else []
    with ProcessPoolExecutor(max_workers=len(spans)) as pool:
        futures = [pool.submit(run_chunk, cfg, points[a:b], a) for a, b in spans]
        results = []
        for fut in futures:  # input order, whatever the completion order
            results.extend(fut.result())
    return results


def run_sweep(cfg: RunConfig) -> list[PointResult]:
    """All points of a ground / observables / sweep / phase-diagram / meanfield config."""
    results = run_points(cfg, expand_points(cfg))
    for i, r in enumerate(results):
        r.record["index"] = i
        r.record["version"] = artifact_version()
    return results


def critical_coupling(cfg: RunConfig, L: int, axis: str, bracket, scan_count: int | None = None) -> dict:
    """Bisect the ferromagnetic crossing of ``S_axis`` in U_l at system size ``L``.

    Each evaluation is a full solve; consecutive evaluations warm-start from
    each other.  A coarse scan of ``scan_count`` points over the bracket
    first checks that the margin changes sign exactly once.
    """
    N = L if cfg.N is None else cfg.N
    state = {"prev": None}
    evaluations = []

    def margin(U):
        v0 = None
        if cfg.warm_start and state["prev"] is not None:
            v0 = perturbed_start(state["prev"], np.random.default_rng([cfg.seed, len(evaluations)]))
        res = solve_point(cfg, point_params(cfg, L=L, N=N, U_l=float(U)), v0=v0)
        if not res.ok:
            raise ConvergenceError(res.record["error"])
        state["prev"] = res.vectors
        value = res.record[f"margin_{axis}"]
        evaluations.append((float(U), float(value)))
        return value

    lo, hi = map(float, bracket)
    record = {"L": L, "N": N, "axis": axis, "bracket": [lo, hi], "status": "ok", "error": None}
    start = time.perf_counter()
    try:
        if scan_count:
            grid = np.linspace(lo, hi, scan_count)
            signs = np.sign([margin(u) for u in grid])
            flips = np.flatnonzero(signs[1:] * signs[:-1] < 0)
            record["scan_sign_changes"] = int(len(flips))
            if len(flips) == 0:
                raise BracketError(f"no sign change of the {axis} margin on [{lo}, {hi}]")
            lo, hi = float(grid[flips[0]]), float(grid[flips[0] + 1])
            state["prev"] = None
        width = 1e-3 * (abs(cfg.U_s) if cfg.U_s != 0 else abs(cfg.t))
        root, _ = bisect_root(margin, lo, hi, width)
        record["U_c"] = root
    except (ConvergenceError, BracketError, ValueError) as err:
        record.update(status="failed", error=f"{type(err).__name__}: {err}", U_c=None)
    record["evaluations"] = evaluations
    record["seconds"] = time.perf_counter() - start
    return record


def run_scaling(cfg: RunConfig) -> dict:
    """Critical coupling at every L in ``L_list`` followed by the 1/L fit."""
    per_L = [critical_coupling(cfg, L, cfg.axis, cfg.bracket, cfg.scan_count) for L in cfg.L_list]
    good = [(r["L"], r["U_c"]) for r in per_L if r["status"] == "ok"]
    fit = None
    if len(good) >= 3:
        f = scaling_fit(good)
        fit = {"a": f.a, "b": f.b, "c": f.c, "residual": f.residual, "points": [list(p) for p in f.points]}
    return {"per_L": per_L, "fit": fit, "version": artifact_version()}


def default_k_grid(cfg: RunConfig) -> list[float]:
    return [float(k) for k in k_grid(cfg.n_k)]

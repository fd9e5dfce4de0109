"""Run orchestration: manifests, the step loop, traces, and artifacts.

A :class:`RunManifest` names a scenario/scheme pair plus overrides; crossing
one with :func:`execute_run` produces a :class:`RunResult` holding the trace
records, final fields, and a summary dictionary.  Artifact layout (when an
output directory is given): ``trace.csv`` with one row per step including the
initial state, ``rho_final.csv`` with coordinate-indexed density values,
``slice_<axis>=<value>.csv`` per configured slice line, and ``summary.txt``
with ``key = value`` pairs.  Traces are bit-for-bit reproducible for a fixed
seed under single-threaded execution; wall-clock numbers live only in the
summary.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics, scenarios
from .diagnostics import EnergyRecord
from .fullrank import DivergenceError, SolverConfig, build_schur, imex_s_step, imex_step
from .grid import build_grid
from .lowrank import (
    LowRankConfig,
    factorize_micro,
    lowrank_macro_coupled_step,
    zero_micro_state,
)
from .ops import sample_material

SCHEMES = ("IMEX", "IMEX-S", "IMEX-BUG", "IMEX-S-BUG", "IMEX-aBUG", "IMEX-S-aBUG")

_CSV_FMT = "%.17g"


@dataclass
class RunManifest:
    """One run request: scenario, scheme, and overrides."""

    scenario: str
    scheme: str
    rank: Optional[int] = None
    tau: Optional[float] = None
    dt_mult: float = 1.0
    mesh_div: int = 1
    theta: Optional[float] = None
    epsilon: Optional[float] = None     # Knudsen number override
    unweighted: bool = False
    out: Optional[str] = None
    seed: int = 0
    bench: bool = False
    with_error: Optional[bool] = None   # None = automatic per reference kind
    max_steps: Optional[int] = None     # testing hook: stop the loop early

    def validate(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.scenario not in scenarios.scenario_names():
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.rank is not None and self.rank < 1:
            raise ValueError("rank override must be >= 1")
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau override must be positive")
        if self.dt_mult <= 0:
            raise ValueError("dt multiplier must be positive")
        if self.mesh_div < 1:
            raise ValueError("mesh divisor must be >= 1")
        if self.theta is not None and not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon override must be positive")
        if self.unweighted and "BUG" not in self.scheme:
            raise ValueError("--unweighted only applies to low-rank schemes")


@dataclass
class RunResult:
    manifest: RunManifest
    records: list
    rho_final: np.ndarray
    summary: dict
    grid: object
    scenario: object
    step_infos: list = field(default_factory=list)

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])


def default_theta(scheme: str) -> float:
    """1 for explicit-coupled schemes, 0 for Schur-type schemes."""
    return 0.0 if "IMEX-S" in scheme else 1.0


def execute_run(manifest: RunManifest) -> RunResult:
    """Execute one run and (optionally) write its artifacts."""
    manifest.validate()
    scen = scenarios.get_scenario(manifest.scenario, manifest.mesh_div)
    eps = manifest.epsilon if manifest.epsilon is not None else scen.epsilon
    grid, quad, material = scenarios.build_objects(scen, epsilon=eps)

    dt = scenarios.select_dt(scen, manifest.scheme, grid, material, eps) * manifest.dt_mult
    n_steps = max(1, math.ceil(scen.t_final / dt - 1e-9))
    if manifest.max_steps is not None:
        n_steps = min(n_steps, manifest.max_steps)
    theta = manifest.theta if manifest.theta is not None else default_theta(manifest.scheme)
    config = SolverConfig(epsilon=eps, dt=dt, scheme=manifest.scheme, theta=theta)

    rank = manifest.rank if manifest.rank is not None else scen.rank
    tau = manifest.tau if manifest.tau is not None else scen.tau
    lowrank_scheme = "BUG" in manifest.scheme
    integrator = None
    lr_config = None
    if lowrank_scheme:
        integrator = "BUG" if manifest.scheme.endswith("-BUG") else "aBUG"
        if integrator == "aBUG" and not manifest.unweighted and scenarios.ap_enrichment_active(
            scen, grid, material, eps
        ):
            integrator = "AP-aBUG"
        lr_config = LowRankConfig(integrator=integrator, rank=rank, tau=tau)

    def initial_state():
        rho0, G0 = scen.init(grid, quad, eps)
        if not lowrank_scheme:
            return np.asarray(rho0, dtype=float), np.asarray(G0, dtype=float)
        if np.any(G0):
            micro0 = factorize_micro(
                grid, quad, G0, rank, weighted=not manifest.unweighted, seed=manifest.seed
            )
        else:
            micro0 = zero_micro_state(
                grid, quad, rank, weighted=not manifest.unweighted, seed=manifest.seed
            )
        return np.asarray(rho0, dtype=float), micro0

    rho, micro = initial_state()

    schur = None
    if "IMEX-S" in manifest.scheme:
        schur = build_schur(grid, quad, material, config)

    records = [
        _record(0, 0.0, grid, quad, rho, micro, config, material, theta)
    ]
    step_infos = []
    status = "completed"
    failed_step = None

    def loop(rho, micro):
        nonlocal status, failed_step
        for k in range(1, n_steps + 1):
            t_next = k * dt
            try:
                if not lowrank_scheme:
                    if schur is None:
                        rho, micro = imex_step(
                            grid, quad, material, config, rho, micro, t_next
                        )
                    else:
                        rho, micro = imex_s_step(
                            grid, quad, material, config, schur, rho, micro, t_next
                        )
                else:
                    rho, micro, info = lowrank_macro_coupled_step(
                        grid, quad, material, config, lr_config, rho, micro, t_next, schur
                    )
                    step_infos.append(info)
            except (DivergenceError, np.linalg.LinAlgError):
                status = "diverged"
                failed_step = k
                break
            rec = _record(k, t_next, grid, quad, rho, micro, config, material, theta)
            if not all(
                np.isfinite(v)
                for v in (rec.energy, rec.rho_norm, rec.micro_norm_w, rec.mass)
            ):
                status = "diverged"
                failed_step = k
                break
            records.append(rec)
        return rho, micro

    t0 = time.perf_counter()
    rho, micro = loop(rho, micro)
    wall = time.perf_counter() - t0
    steps_done = records[-1].step

    summary = {
        "scenario": manifest.scenario,
        "scheme": manifest.scheme,
        "status": status,
        "dt": dt,
        "theta": theta,
        "steps_planned": n_steps,
        "steps_completed": steps_done,
        "t_final": steps_done * dt,
        "seed": manifest.seed,
        "rank_final": records[-1].rank,
        "energy_final": records[-1].energy,
        "total_wall_s": wall,
        "per_step_mean_s": wall / max(steps_done, 1),
    }
    if integrator is not None:
        summary["integrator"] = integrator
    if failed_step is not None:
        summary["failed_step"] = failed_step

    if status == "completed" and _want_error(manifest, scen):
        err, rel = _reference_error(scen, grid, quad, material, rho, summary["t_final"], eps)
        if err is not None:
            summary["l2_error"] = err
            summary["l2_error_rel"] = rel

    if manifest.bench and status == "completed":
        times = [wall]
        for _ in range(4):
            rho_b, micro_b = initial_state()
            del records[1:]
            step_infos.clear()
            t0 = time.perf_counter()
            loop(rho_b, micro_b)
            times.append(time.perf_counter() - t0)
        summary["bench_runs"] = times
        summary["bench_mean_s"] = sum(times) / len(times)

    result = RunResult(
        manifest=manifest,
        records=records,
        rho_final=rho,
        summary=summary,
        grid=grid,
        scenario=scen,
        step_infos=step_infos,
    )
    if manifest.out is not None:
        write_artifacts(result, Path(manifest.out))
    return result


def _want_error(manifest, scen) -> bool:
    if manifest.with_error is not None:
        return manifest.with_error
    return scen.reference in ("diffusion", "manufactured")


@np.errstate(over="ignore", invalid="ignore")
def _record(step, t, grid, quad, rho, micro, config, material, theta) -> EnergyRecord:
    from .lowrank import MicroStateLowRank

    is_lr = isinstance(micro, MicroStateLowRank)
    return EnergyRecord(
        step=step,
        time=t,
        dt=config.dt,
        energy=diagnostics.energy(grid, quad, rho, micro, config, material, theta),
        rho_norm=math.sqrt(grid.cell_volume) * float(np.linalg.norm(rho)),
        micro_norm_w=diagnostics.micro_norm_w(grid, quad, micro),
        rank=micro.rank if is_lr else min(grid.n_points, quad.n),
        zero_density_residual=diagnostics.zero_density_residual(quad, micro),
        mass=diagnostics.mass(grid, rho),
    )


# ---------------------------------------------------------------------------
# references
# ---------------------------------------------------------------------------

def _reference_error(scen, grid, quad, material, rho, t_final, eps):
    if scen.reference == "manufactured":
        ref = scen.exact_rho(t_final, grid.rho_coords)
    elif scen.reference == "diffusion":
        dt_ref = 0.75 * min(grid.spacing) ** 2
        n = max(1, math.ceil(t_final / dt_ref - 1e-9))
        rho0, _ = scen.init(grid, quad, eps)
        ref = diagnostics.diffusion_reference(
            grid, quad, material, np.asarray(rho0, dtype=float), t_final / n, n
        )
    elif scen.reference == "self":
        ref = _self_reference(scen, grid, quad, t_final, eps)
    else:
        return None, None
    err = diagnostics.l2_error(grid, rho, ref)
    scale = diagnostics.l2_error(grid, np.zeros_like(ref), ref)
    return err, err / scale if scale > 0 else math.inf


def _self_reference(scen, grid, quad, t_final, eps, refine: int = 4):
    """Full-rank explicit-coupled solution on a ``refine``-times finer mesh,
    restricted to the coincident density points of the coarse mesh."""
    fine_cells = tuple(c * refine for c in scen.cells)
    fine = build_grid(scen.dim, scen.bounds, fine_cells)
    material = sample_material(
        fine, scen.sigma_s, scen.sigma_a, scen.sigma_s_floor,
        phi=scen.phi_builder(fine) if scen.phi_builder else None,
    )
    rho0, G0 = scen.init(fine, quad, eps)
    dt = diagnostics.dt_explicit(fine, material, eps)
    n = max(1, math.ceil(t_final / dt - 1e-9))
    dt = t_final / n
    config = SolverConfig(epsilon=eps, dt=dt, scheme="IMEX")
    rho, G = np.asarray(rho0, dtype=float), np.asarray(G0, dtype=float)
    for k in range(1, n + 1):
        rho, G = imex_step(fine, quad, material, config, rho, G, k * dt)

    # match coarse density points to fine ones through half-step lattice indices
    lo = np.array([b[0] for b in fine.bounds])
    h_fine = np.array([fine.spacing[j] / 2 for j in range(fine.dim)])
    wrap = np.array([2 * c for c in fine_cells])
    fine_idx = np.rint((fine.rho_coords - lo[None, :]) / h_fine[None, :]).astype(int) % wrap
    coarse_idx = np.rint((grid.rho_coords - lo[None, :]) / h_fine[None, :]).astype(int) % wrap
    lut = {tuple(k): i for i, k in enumerate(fine_idx)}
    sel = np.array([lut[tuple(k)] for k in coarse_idx])
    return rho[sel]


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def write_artifacts(result: RunResult, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_trace(result.records, out_dir / "trace.csv")
    _write_density(result, out_dir / "rho_final.csv")
    for axis, value in result.scenario.slices:
        _write_slice(result, axis, value, out_dir)
    _write_summary(result.summary, out_dir / "summary.txt")


def _write_trace(records, path: Path):
    cols = (
        "step,time,dt,energy,rho_norm,micro_norm_w,rank,zero_density_residual,mass"
    )
    lines = [cols]
    for r in records:
        lines.append(
            ",".join(
                [
                    str(r.step),
                    _CSV_FMT % r.time,
                    _CSV_FMT % r.dt,
                    _CSV_FMT % r.energy,
                    _CSV_FMT % r.rho_norm,
                    _CSV_FMT % r.micro_norm_w,
                    str(r.rank),
                    _CSV_FMT % r.zero_density_residual,
                    _CSV_FMT % r.mass,
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n")


def _write_density(result: RunResult, path: Path):
    grid = result.grid
    coords = grid.rho_coords
    header = "x,rho" if grid.dim == 1 else "x,y,rho"
    lines = [header]
    for i in range(grid.n_points):
        vals = [_CSV_FMT % c for c in coords[i]] + [_CSV_FMT % result.rho_final[i]]
        lines.append(",".join(vals))
    path.write_text("\n".join(lines) + "\n")


def extract_slice(grid, rho, axis: str, value: float):
    """Density values along the mesh line of the rho family nearest ``value``.

    Returns ``(positions, values)`` sorted along the free coordinate.
    """
    if grid.dim != 2:
        raise ValueError("slices are defined for 2D grids")
    fixed = 0 if axis == "x" else 1
    free = 1 - fixed
    coords = grid.rho_coords
    span = grid.bounds[fixed][1] - grid.bounds[fixed][0]
    dist = np.abs(coords[:, fixed] - value)
    dist = np.minimum(dist, span - dist)  # periodic distance
    best = dist.min()
    mask = dist <= best + 1e-12
    order = np.argsort(coords[mask, free], kind="stable")
    return coords[mask][order][:, free], rho[mask][order]


def _write_slice(result: RunResult, axis: str, value: float, out_dir: Path):
    pos, vals = extract_slice(result.grid, result.rho_final, axis, value)
    free = "y" if axis == "x" else "x"
    lines = [f"{free},rho"]
    for p, v in zip(pos, vals):
        lines.append(f"{_CSV_FMT % p},{_CSV_FMT % v}")
    (out_dir / f"slice_{axis}={value:g}.csv").write_text("\n".join(lines) + "\n")


def _write_summary(summary: dict, path: Path):
    lines = []
    for key, val in summary.items():
        if isinstance(val, float):
            lines.append(f"{key} = {_CSV_FMT % val}")
        else:
            lines.append(f"{key} = {val}")
    path.write_text("\n".join(lines) + "\n")

"""Ensemble orchestration: plan files, trajectory fan-out with crash-safe
persistence, commutative aggregation, finite-size gap analysis and file
outputs.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import observables
from .errors import ConfigError, MonitoredChainError
from .model import OBSERVABLE_OCCUPATION, OBSERVABLES, ChainSpec
from .mps import TruncationPolicy
from .trajectory import make_backend, run_trajectory

WORKERS_ENV = "MONITORED_CHAIN_WORKERS"

_PLAN_SCHEMA = {
    "plan": {
        "master_seed",
        "trajectories_per_point",
        "backend",
        "output_dir",
        "burn_in_fraction",
        "sampling_interval",
    },
    "grid": {"L", "U", "gamma", "observable"},
    "dynamics": {"dt", "n_steps", "initial_state"},
    "truncation": {"chi_max", "svd_cutoff", "hard_limit"},
}

_PLAN_DEFAULTS = {
    "burn_in_fraction": 0.5,
    "sampling_interval": 1.0,
}


@dataclass(frozen=True)
class GridPoint:
    L: int
    U: float
    gamma: float
    observable: str

    def spec(self, dt: float, n_steps: int, initial_state: str) -> ChainSpec:
        return ChainSpec(
            L=self.L,
            U=self.U,
            gamma=self.gamma,
            observable=self.observable,
            dt=dt,
            n_steps=n_steps,
            initial_state=initial_state,
        )


@dataclass
class ExperimentPlan:
    points: list
    trajectories_per_point: int
    backend: str
    master_seed: int
    output_dir: str
    dt: float = 0.05
    n_steps: int = 200
    initial_state: str = "neel"
    burn_in_fraction: float = 0.5
    sampling_interval: float = 1.0
    chi_max: int = 256
    svd_cutoff: float = 1e-10
    hard_limit: float = 1e-4

    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(
            chi_max=self.chi_max, svd_cutoff=self.svd_cutoff, hard_limit=self.hard_limit
        )

    def spec_for(self, point: GridPoint) -> ChainSpec:
        return point.spec(self.dt, self.n_steps, self.initial_state)

    def to_dict(self) -> dict:
        return {
            "points": [vars(p) for p in self.points],
            "trajectories_per_point": self.trajectories_per_point,
            "backend": self.backend,
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "initial_state": self.initial_state,
            "burn_in_fraction": self.burn_in_fraction,
            "sampling_interval": self.sampling_interval,
            "chi_max": self.chi_max,
            "svd_cutoff": self.svd_cutoff,
            "hard_limit": self.hard_limit,
        }


def load_plan(path) -> ExperimentPlan:
    """Parse and validate a TOML plan; unknown keys are rejected loudly."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    for section, keys in raw.items():
        if section not in _PLAN_SCHEMA:
            raise ConfigError(f"unknown section [{section}] in plan file")
        unknown = set(keys) - _PLAN_SCHEMA[section]
        if unknown:
            raise ConfigError(
                f"unknown key(s) {sorted(unknown)} in section [{section}]"
            )
    plan_sec = raw.get("plan", {})
    grid_sec = raw.get("grid", {})
    dyn_sec = raw.get("dynamics", {})
    trunc_sec = raw.get("truncation", {})

    for key in ("master_seed", "trajectories_per_point", "backend", "output_dir"):
        if key not in plan_sec:
            raise ConfigError(f"missing required key '{key}' in section [plan]")
    if plan_sec["trajectories_per_point"] < 1:
        raise ConfigError("trajectories_per_point must be >= 1")

    def as_list(value):
        return value if isinstance(value, list) else [value]

    Ls = [int(x) for x in as_list(grid_sec.get("L", []))]
    Us = [float(x) for x in as_list(grid_sec.get("U", [0.0]))]
    gammas = [float(x) for x in as_list(grid_sec.get("gamma", [0.0]))]
    observables_grid = [str(x) for x in as_list(grid_sec.get("observable", [OBSERVABLE_OCCUPATION]))]
    if not Ls:
        raise ConfigError("grid.L must list at least one system size")
    for obs in observables_grid:
        if obs not in OBSERVABLES:
            raise ConfigError(f"grid.observable contains unknown kind {obs!r}")

    points = [
        GridPoint(L=L, U=U, gamma=g, observable=obs)
        for L, U, g, obs in product(Ls, Us, gammas, observables_grid)
    ]

    plan = ExperimentPlan(
        points=points,
        trajectories_per_point=int(plan_sec["trajectories_per_point"]),
        backend=str(plan_sec["backend"]),
        master_seed=int(plan_sec["master_seed"]),
        output_dir=str(plan_sec["output_dir"]),
        dt=float(dyn_sec.get("dt", 0.05)),
        n_steps=int(dyn_sec.get("n_steps", 200)),
        initial_state=str(dyn_sec.get("initial_state", "neel")),
        burn_in_fraction=float(plan_sec.get("burn_in_fraction", _PLAN_DEFAULTS["burn_in_fraction"])),
        sampling_interval=float(plan_sec.get("sampling_interval", _PLAN_DEFAULTS["sampling_interval"])),
        chi_max=int(trunc_sec.get("chi_max", 256)),
        svd_cutoff=float(trunc_sec.get("svd_cutoff", 1e-10)),
        hard_limit=float(trunc_sec.get("hard_limit", 1e-4)),
    )
    if not 0.0 <= plan.burn_in_fraction < 1.0:
        raise ConfigError("burn_in_fraction must lie in [0, 1)")
    if plan.sampling_interval <= 0:
        raise ConfigError("sampling_interval must be positive")
    validate_plan_compatibility(plan)
    return plan


def validate_plan_compatibility(plan: ExperimentPlan) -> None:
    """Raise early if any grid point cannot run on the selected backend."""
    if plan.backend not in ("dense", "gaussian", "mps"):
        raise ConfigError(f"unknown backend {plan.backend!r}")
    for point in plan.points:
        spec = plan.spec_for(point)  # runs ChainSpec invariants (gamma*dt etc.)
        if plan.backend == "gaussian":
            if point.U != 0.0:
                raise ConfigError(
                    f"grid point {point}: Gaussian backend requires U = 0"
                )
            if point.observable != OBSERVABLE_OCCUPATION:
                raise ConfigError(
                    f"grid point {point}: Gaussian backend requires occupation measurements"
                )
        if plan.backend == "dense" and spec.L > 12:
            raise ConfigError(f"grid point {point}: dense backend limited to L <= 12")


def trajectory_summary(record, burn_in_fraction: float) -> dict:
    """Late-time (post burn-in) averages of one trajectory's snapshots."""
    spec = record.spec
    t_total = spec.n_steps * spec.dt
    t_burn = burn_in_fraction * t_total
    late = [s for s in record.samples if s.time > t_burn]
    if not late:
        late = [record.samples[-1]]
    L = spec.L
    entropy = np.zeros(L - 1)
    spectrum = np.zeros(L)
    C_acc = np.zeros((L, L), dtype=complex)
    ng_acc = 0.0
    gap_acc = 0.0
    for snap in late:
        spec_nu = observables.orbital_spectrum(snap.correlation)
        entropy += snap.entropy
        spectrum += spec_nu.nu
        C_acc += snap.correlation
        ng_acc += observables.total_ng(spec_nu)
        gap_acc += observables.gap(spec_nu).delta_nu
    n = len(late)
    entropy /= n
    spectrum /= n
    C_acc /= n
    ng_mean = ng_acc / n
    delta_nu = gap_acc / n
    particles = float(np.real(np.trace(C_acc)))
    return {
        "n_late_samples": n,
        "n_events": len(record.events),
        "entropy_mean": entropy.tolist(),
        "spectrum_mean": spectrum.tolist(),
        "ng_mean": ng_mean,
        "ng_per_particle": ng_mean / particles if particles > 0 else 0.0,
        "delta_nu_mean": delta_nu,
        "slope_mean": delta_nu * L,
        "C_re": C_acc.real.tolist(),
        "C_im": C_acc.imag.tolist(),
        "particles": particles,
    }


class PointAccumulator:
    """Mergeable running sums for per-point means and standard errors."""

    _VECTORS = ("entropy_mean", "spectrum_mean")
    _SCALARS = ("ng_mean", "ng_per_particle", "delta_nu_mean", "slope_mean")

    def __init__(self, L: int):
        self.L = L
        self.n = 0
        self.sums = {k: 0.0 for k in self._SCALARS}
        self.sumsq = {k: 0.0 for k in self._SCALARS}
        for k, dim in (("entropy_mean", L - 1), ("spectrum_mean", L)):
            self.sums[k] = np.zeros(dim)
            self.sumsq[k] = np.zeros(dim)
        self.C_sum = np.zeros((L, L), dtype=complex)
        self.C_sumsq_re = np.zeros((L, L))
        self.C_sumsq_im = np.zeros((L, L))

    def add(self, summary: dict) -> None:
        self.n += 1
        for k in self._SCALARS:
            v = float(summary[k])
            self.sums[k] += v
            self.sumsq[k] += v * v
        for k in self._VECTORS:
            v = np.asarray(summary[k])
            self.sums[k] = self.sums[k] + v
            self.sumsq[k] = self.sumsq[k] + v * v
        C = np.asarray(summary["C_re"]) + 1j * np.asarray(summary["C_im"])
        self.C_sum = self.C_sum + C
        self.C_sumsq_re = self.C_sumsq_re + C.real**2
        self.C_sumsq_im = self.C_sumsq_im + C.imag**2

    def merge(self, other: "PointAccumulator") -> "PointAccumulator":
        if other.L != self.L:
            raise ConfigError("cannot merge accumulators of different sizes")
        out = PointAccumulator(self.L)
        out.n = self.n + other.n
        for k in self.sums:
            out.sums[k] = self.sums[k] + other.sums[k]
            out.sumsq[k] = self.sumsq[k] + other.sumsq[k]
        out.C_sum = self.C_sum + other.C_sum
        out.C_sumsq_re = self.C_sumsq_re + other.C_sumsq_re
        out.C_sumsq_im = self.C_sumsq_im + other.C_sumsq_im
        return out

    @staticmethod
    def _se(total, total_sq, n):
        if n < 2:
            return np.zeros_like(np.asarray(total, dtype=float))
        mean = total / n
        var = (total_sq - n * mean**2) / (n - 1)
        return np.sqrt(np.maximum(var, 0.0) / n)

    def aggregate(self) -> dict:
        n = self.n
        if n == 0:
            raise ConfigError("no successful trajectories to aggregate")
        out = {"n_traj": n}
        for k in self._SCALARS:
            out[k.replace("_mean", "")] = self.sums[k] / n
            out[k.replace("_mean", "") + "_se"] = float(
                self._se(self.sums[k], self.sumsq[k], n)
            )
        for k, name in (("entropy_mean", "entropy"), ("spectrum_mean", "spectrum")):
            out[name] = (self.sums[k] / n).tolist()
            out[name + "_se"] = self._se(self.sums[k], self.sumsq[k], n).tolist()
        C_mean = self.C_sum / n
        se_re = self._se(self.C_sum.real, self.C_sumsq_re, n)
        se_im = self._se(self.C_sum.imag, self.C_sumsq_im, n)
        out["C_re"] = C_mean.real.tolist()
        out["C_im"] = C_mean.imag.tolist()
        out["C_se"] = np.sqrt(se_re**2 + se_im**2).tolist()
        return out


def _run_single_trajectory(args: tuple) -> tuple:
    """Worker entry: run one trajectory and reduce it to its summary."""
    (point_idx, traj_idx, spec_dict, backend_name, policy_args, master_seed, sampling, burn_in) = args
    spec = ChainSpec.from_dict(spec_dict)
    policy = TruncationPolicy(**policy_args) if backend_name == "mps" else None
    backend = make_backend(backend_name, spec, policy)
    seed = (master_seed, point_idx, traj_idx)
    record = run_trajectory(backend, spec, seed=seed, sampling=sampling)
    return point_idx, traj_idx, trajectory_summary(record, burn_in)


def worker_count(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, explicit)
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_ensemble(plan: ExperimentPlan, workers: int | None = None, log=None) -> list[dict]:
    """Run every grid point; persist per-trajectory summaries incrementally.

    Completed trajectory indices found on disk are skipped, so an
    interrupted run resumes without recomputation and reproduces the
    uninterrupted aggregates.  Returns one result dict per point.
    """
    n_workers = worker_count(workers)
    out_dir = Path(plan.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for point_idx, point in enumerate(plan.points):
        spec = plan.spec_for(point)
        point_dir = out_dir / f"point_{point_idx:03d}"
        point_dir.mkdir(exist_ok=True)
        pending = []
        for traj_idx in range(plan.trajectories_per_point):
            if not (point_dir / f"traj_{traj_idx:05d}.json").exists():
                pending.append(traj_idx)
        policy_args = {
            "chi_max": plan.chi_max,
            "svd_cutoff": plan.svd_cutoff,
            "hard_limit": plan.hard_limit,
        }
        tasks = [
            (
                point_idx,
                traj_idx,
                spec.to_dict(),
                plan.backend,
                policy_args,
                plan.master_seed,
                plan.sampling_interval,
                plan.burn_in_fraction,
            )
            for traj_idx in pending
        ]
        failures: dict[int, str] = {}

        def finish(traj_idx, summary):
            path = point_dir / f"traj_{traj_idx:05d}.json"
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(summary, sort_keys=True))
            tmp.rename(path)

        if n_workers == 1 or len(tasks) <= 1:
            for task in tasks:
                try:
                    _, traj_idx, summary = _run_single_trajectory(task)
                    finish(traj_idx, summary)
                except MonitoredChainError as exc:
                    failures[task[1]] = str(exc)
                if log:
                    log(f"point {point_idx} trajectory {task[1]} done")
        else:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                futures = {pool.submit(_run_single_trajectory, t): t[1] for t in tasks}
                for fut, traj_idx in futures.items():
                    try:
                        _, idx, summary = fut.result()
                        finish(idx, summary)
                    except MonitoredChainError as exc:
                        failures[traj_idx] = str(exc)
                    if log:
                        log(f"point {point_idx} trajectory {traj_idx} done")

        acc = PointAccumulator(spec.L)
        n_loaded = 0
        for traj_idx in range(plan.trajectories_per_point):
            path = point_dir / f"traj_{traj_idx:05d}.json"
            if path.exists():
                acc.add(json.loads(path.read_text()))
                n_loaded += 1
        n_failed = plan.trajectories_per_point - n_loaded
        point_result = {
            "point_index": point_idx,
            "L": point.L,
            "U": point.U,
            "gamma": point.gamma,
            "observable": point.observable,
            "n_failed": n_failed,
            "failures": failures,
        }
        if n_failed > 0.05 * plan.trajectories_per_point:
            point_result["status"] = "failed"
            point_result["aggregate"] = None
        else:
            point_result["status"] = "ok"
            point_result["aggregate"] = acc.aggregate()
        results.append(point_result)
    return results


def emit_outputs(results: list[dict], plan: ExperimentPlan) -> dict:
    """Write per-point CSVs and a JSON summary; byte-stable for fixed inputs."""
    out_dir = Path(plan.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_header = "gamma,L,U,observable,ell_or_alpha,quantity,mean,stderr,n_traj\n"
    combined = [csv_header]
    for res in results:
        lines = [csv_header]
        csv_path = out_dir / f"point_{res['point_index']:03d}.csv"
        agg = res["aggregate"]
        if agg is not None:
            base = f"{res['gamma']!r},{res['L']},{res['U']!r},{res['observable']}"
            n = agg["n_traj"]
            for ell in range(1, res["L"]):
                lines.append(
                    f"{base},{ell},entropy,{agg['entropy'][ell - 1]!r},"
                    f"{agg['entropy_se'][ell - 1]!r},{n}\n"
                )
            for alpha in range(1, res["L"] + 1):
                lines.append(
                    f"{base},{alpha},spectrum,{agg['spectrum'][alpha - 1]!r},"
                    f"{agg['spectrum_se'][alpha - 1]!r},{n}\n"
                )
            for key in ("delta_nu", "slope", "ng", "ng_per_particle"):
                lines.append(f"{base},,{key},{agg[key]!r},{agg[key + '_se']!r},{n}\n")
        csv_path.write_text("".join(lines))
        combined.extend(lines[1:])
    (out_dir / "results.csv").write_text("".join(combined))

    from . import __version__ as pkg_version

    summary = {
        "plan": plan.to_dict(),
        "versions": {
            "monitored_chain": pkg_version,
            "numpy": np.__version__,
        },
        "master_seed": plan.master_seed,
        "reference_rates": {
            "interacting_occupation_gamma_c": 0.21,
            "free_current_gamma_c": 0.11,
            "note": "large-scale critical rates quoted for orientation; "
            "not reproducible at desk scale",
        },
        "points": [],
    }
    for res in results:
        entry = {
            k: res[k]
            for k in ("point_index", "L", "U", "gamma", "observable", "status", "n_failed")
        }
        if res["aggregate"] is not None:
            agg = res["aggregate"]
            entry["aggregate"] = agg
            profile = observables.EntropyProfile(S=np.asarray(agg["entropy"]), L=res["L"])
            try:
                fit = observables.cft_fit(profile, res["L"])
                entry["cft_fit"] = {
                    "alpha": fit.alpha,
                    "s0": fit.s0,
                    "residual": fit.residual,
                }
            except ConfigError:
                entry["cft_fit"] = None
        summary["points"].append(entry)
    (out_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1))
    return summary


def load_summary(results_dir) -> dict:
    path = Path(results_dir) / "summary.json"
    if not path.exists():
        raise ConfigError(f"no summary.json under {results_dir}")
    return json.loads(path.read_text())


def finite_size_scan(points: list[dict]) -> dict:
    """Gap-scaling analysis across system sizes at fixed measurement rates.

    ``points`` carry L, gamma, U, observable, delta_nu (and optionally its
    standard error).  For each rate: the gap per L, the size-rescaled slope
    delta_nu * L, and a linear extrapolation of the gap in 1/L.  The
    crossing estimate is where slope curves of consecutive sizes intersect.
    """
    groups: dict[tuple, list[dict]] = {}
    for p in points:
        groups.setdefault((p["U"], p["observable"]), []).append(p)
    out = {"groups": []}
    for (U, obs), entries in sorted(groups.items()):
        Ls = sorted({int(e["L"]) for e in entries})
        gammas = sorted({float(e["gamma"]) for e in entries})
        if len(Ls) < 2:
            out["groups"].append(
                {
                    "U": U,
                    "observable": obs,
                    "status": "undetermined",
                    "reason": "need at least two system sizes",
                }
            )
            continue
        table = {}
        for e in entries:
            table[(int(e["L"]), float(e["gamma"]))] = (
                float(e["delta_nu"]),
                float(e.get("delta_nu_se", 0.0)),
            )
        rows = []
        extrapolation = []
        for g in gammas:
            for L in Ls:
                if (L, g) not in table:
                    continue
                d, se = table[(L, g)]
                rows.append(
                    {"gamma": g, "L": L, "delta_nu": d, "delta_nu_se": se, "slope": d * L}
                )
            fit_pts = [(1.0 / L, table[(L, g)][0]) for L in Ls if (L, g) in table]
            if len(fit_pts) >= 2:
                x = np.array([p[0] for p in fit_pts])
                y = np.array([p[1] for p in fit_pts])
                slope_fit, intercept = np.polyfit(x, y, 1)
                extrapolation.append(
                    {"gamma": g, "gap_infinite_L": float(intercept), "d_gap_d_invL": float(slope_fit)}
                )
        crossings = []
        diagnostics = []
        for L1, L2 in zip(Ls[:-1], Ls[1:]):
            gs = [g for g in gammas if (L1, g) in table and (L2, g) in table]
            if len(gs) < 2:
                continue
            diff = [table[(L2, g)][0] * L2 - table[(L1, g)][0] * L1 for g in gs]
            flips = []
            for i in range(len(gs) - 1):
                if diff[i] <= 0.0 and diff[i + 1] > 0.0:
                    if diff[i + 1] == diff[i]:
                        flips.append(gs[i])
                    else:
                        t = -diff[i] / (diff[i + 1] - diff[i])
                        flips.append(gs[i] + t * (gs[i + 1] - gs[i]))
            if len(flips) == 1:
                crossings.append({"L_pair": [L1, L2], "gamma_star": flips[0]})
            else:
                diagnostics.append(
                    {
                        "L_pair": [L1, L2],
                        "sign_changes": len(flips),
                        "slope_difference": diff,
                        "gammas": gs,
                    }
                )
        group = {
            "U": U,
            "observable": obs,
            "rows": rows,
            "extrapolation": extrapolation,
            "crossings": crossings,
        }
        if crossings and not diagnostics:
            group["status"] = "ok"
            group["gamma_star"] = float(np.mean([c["gamma_star"] for c in crossings]))
            group["grid_resolution"] = float(
                max(np.diff(gammas)) if len(gammas) > 1 else 0.0
            )
        else:
            group["status"] = "undetermined"
            group["diagnostics"] = diagnostics
        out["groups"].append(group)
    return out


def scan_results_dir(results_dir) -> dict:
    """Run finite_size_scan over the aggregates saved in a results directory."""
    summary = load_summary(results_dir)
    points = []
    for entry in summary["points"]:
        if entry.get("status") != "ok":
            continue
        agg = entry["aggregate"]
        points.append(
            {
                "L": entry["L"],
                "U": entry["U"],
                "gamma": entry["gamma"],
                "observable": entry["observable"],
                "delta_nu": agg["delta_nu"],
                "delta_nu_se": agg["delta_nu_se"],
            }
        )
    return finite_size_scan(points)

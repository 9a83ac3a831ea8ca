"""Parameter sweeps over random scenarios with CSV output and a replayable manifest.

Result schema (``results.csv``), one row per (sweep value, seed, method):

=================  ============================================================
column             meaning
=================  ============================================================
experiment         experiment kind
sweep_param        scenario field being swept
sweep_value        its value in SI units (bit/s, Hz, or a count)
seed               scenario seed
method             ``alg1`` or ``greedy``
status             Converged / MaxIter / Infeasible for alg1; Feasible /
                   Unsatisfied for greedy; Error when the cell raised
iterations         alternating iterations (0 for greedy)
total_power_w      objective in W
total_power_dbw    the same in dBW
satisfaction       fraction of terminals meeting their demand
feasible           1 when every terminal is satisfied
conn_leo<i>        terminals associated with satellite i (1-based)
error              exception text, empty otherwise
=================  ============================================================

``convergence`` runs also write ``trace.csv`` (sweep_value, seed, iteration,
objective_w, objective_dbw).  ``summary.csv`` aggregates results per
(sweep value, method).  Every CSV starts with a ``# manifest`` comment line
holding the full experiment description, which is also written to
``manifest.json``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .kernels import BACKEND
from .alternating import AlgorithmConfig, run_algorithm1, to_dbw
from .errors import InfeasibleError
from .greedy import run_greedy
from .instance import ScenarioConfig, generate_scenario

KINDS = ("convergence", "demand", "bandwidth", "connections", "compare")
METHODS = ("alg1", "greedy")
DEFAULT_SEEDS = tuple(range(1, 31))

# scenario field swept by each kind; bandwidth sweeps vary satellite index 1
SWEEP_PARAM = {
    "convergence": "K",
    "demand": "demand_per_user",
    "bandwidth": "leo_bandwidth[1]",
    "connections": "leo_bandwidth[1]",
    "compare": "demand_per_user",
}

DEFAULT_SWEEPS = {
    "demand": [60e6, 70e6, 80e6, 90e6, 100e6, 110e6, 120e6],
    "bandwidth": [100e6, 200e6, 300e6, 400e6, 500e6, 600e6, 700e6],
    "connections": [100e6, 200e6, 300e6, 400e6, 500e6, 600e6, 700e6],
}

RESULT_COLUMNS = (
    "experiment",
    "sweep_param",
    "sweep_value",
    "seed",
    "method",
    "status",
    "iterations",
    "total_power_w",
    "total_power_dbw",
    "satisfaction",
    "feasible",
)
TRACE_COLUMNS = ("sweep_value", "seed", "iteration", "objective_w", "objective_dbw")


@dataclass
class ExperimentSpec:
    """A sweep over one scenario parameter and a list of seeds.

    ``sweep`` holds SI values.  When empty, the kind's default sweep is used
    (for ``convergence`` and ``compare`` a single point taken from ``base``).
    """

    kind: str
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    sweep: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: list(DEFAULT_SEEDS))
    out_dir: str = "results"
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    methods: tuple = METHODS
    strict: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if isinstance(self.base, dict):
            self.base = ScenarioConfig.from_dict(self.base)
        if isinstance(self.algorithm, dict):
            self.algorithm = AlgorithmConfig(**self.algorithm)
        if not self.sweep:
            self.sweep = list(DEFAULT_SWEEPS.get(self.kind, [self._base_value()]))
        self.sweep = sorted(float(v) for v in self.sweep)
        if any(not v > 0 for v in self.sweep):
            raise ValueError("sweep values must be positive")
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ValueError("at least one seed is required")
        self.methods = tuple(self.methods)
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ValueError(f"methods must be drawn from {METHODS}")

    @property
    def sweep_param(self) -> str:
        return SWEEP_PARAM[self.kind]

    def _base_value(self) -> float:
        if self.kind == "convergence":
            return float(self.base.K)
        if self.kind in ("bandwidth", "connections"):
            return float(self.base.bandwidths()[1])
        return float(self.base.demand_per_user)

    def scenario(self, value: float, seed: int) -> ScenarioConfig:
        """Scenario of one sweep cell."""
        if self.kind == "convergence":
            return self.base.replace(K=int(round(value)), seed=seed)
        if self.kind in ("bandwidth", "connections"):
            bw = self.base.bandwidths().copy()
            if bw.size < 2:
                raise ValueError("bandwidth sweeps need at least two satellites")
            bw[1] = value
            return self.base.replace(leo_bandwidth=bw.tolist(), seed=seed)
        return self.base.replace(demand_per_user=value, seed=seed)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "base": self.base.to_dict(),
            "sweep": list(self.sweep),
            "seeds": list(self.seeds),
            "out_dir": str(self.out_dir),
            "algorithm": dict(vars(self.algorithm)),
            "methods": list(self.methods),
            "strict": bool(self.strict),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        d["methods"] = tuple(d.get("methods", METHODS))
        return cls(**d)


def _result_row(spec_kind, param, value, seed, method, n_sat):
    row = dict.fromkeys(RESULT_COLUMNS, "")
    row.update(experiment=spec_kind, sweep_param=param, sweep_value=value, seed=seed, method=method)
    for i in range(n_sat):
        row[f"conn_leo{i + 1}"] = ""
    row["error"] = ""
    return row


def run_cell(spec_dict: dict, value: float, seed: int) -> tuple[list[dict], list[dict]]:
    """Solve one (sweep value, seed) cell; failures are captured in the rows."""
    spec = ExperimentSpec.from_dict(spec_dict)
    n_sat = spec.base.M
    rows, trace = [], []
    try:
        inst = generate_scenario(spec.scenario(value, seed))
    except Exception as exc:  # noqa: BLE001 - recorded per cell
        for method in spec.methods:
            row = _result_row(spec.kind, spec.sweep_param, value, seed, method, n_sat)
            row.update(status="Error", error=f"{type(exc).__name__}: {exc}")
            rows.append(row)
        return rows, trace
    for method in spec.methods:
        row = _result_row(spec.kind, spec.sweep_param, value, seed, method, n_sat)
        try:
            if method == "alg1":
                sol = run_algorithm1(inst, spec.algorithm)
                power = sol.objective
                row.update(
                    status=sol.status,
                    iterations=sol.iterations,
                    satisfaction=sol.satisfaction,
                    feasible=int(sol.satisfaction >= 1.0),
                )
                conns = sol.per_leo_connections
                for i, obj in enumerate(sol.objective_trace):
                    trace.append(
                        {"sweep_value": value, "seed": seed, "iteration": i, "objective_w": obj, "objective_dbw": to_dbw(obj)}
                    )
            else:
                res = run_greedy(inst, strict=spec.strict)
                power = res.total_power
                row.update(
                    status="Feasible" if res.feasible else "Unsatisfied",
                    iterations=0,
                    satisfaction=res.satisfaction,
                    feasible=int(res.feasible),
                )
                conns = np.sum(np.hstack((res.association.alpha, res.association.mu)), axis=1)
            row.update(total_power_w=power, total_power_dbw=to_dbw(power))
            for i, c in enumerate(conns):
                row[f"conn_leo{i + 1}"] = int(c)
        except Exception as exc:  # noqa: BLE001 - recorded per cell
            status = "Infeasible" if isinstance(exc, InfeasibleError) else "Error"
            row.update(status=status, satisfaction=0.0, feasible=0, error=f"{type(exc).__name__}: {exc}")
        rows.append(row)
    return rows, trace


def summarize(rows: list[dict], n_sat: int) -> list[dict]:
    """Per (sweep value, method) means over seeds and the fraction of feasible seeds."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["sweep_value"], r["method"]), []).append(r)
    out = []
    for (value, method), grp in sorted(groups.items()):
        ok = [r for r in grp if r["total_power_w"] != ""]
        power = np.array([r["total_power_w"] for r in ok], dtype=float)
        mean_w = float(power.mean()) if power.size else math.nan
        row = {
            "sweep_value": value,
            "method": method,
            "seeds": len(grp),
            "errors": sum(1 for r in grp if r["status"] in ("Error", "Infeasible")),
            "mean_power_w": mean_w,
            "mean_power_dbw": to_dbw(mean_w) if power.size else math.nan,
            "mean_satisfaction": float(np.mean([float(r["satisfaction"]) for r in grp])),
            "fraction_feasible": float(np.mean([int(r["feasible"]) for r in grp])),
        }
        for i in range(n_sat):
            col = f"conn_leo{i + 1}"
            vals = [r[col] for r in ok if r[col] != ""]
            row[f"mean_{col}"] = float(np.mean(vals)) if vals else math.nan
        out.append(row)
    return out


def _fmt(v):
    # repr keeps every float bit so replays compare exactly
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path: Path, rows: list[dict], columns, manifest_line: str) -> None:
    buf = io.StringIO()
    buf.write(f"# manifest {manifest_line}\n")
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _fmt(r.get(k, "")) for k in columns})
    path.write_text(buf.getvalue())


def read_csv(path) -> list[dict]:
    """Rows of a result CSV as strings, skipping the manifest comment."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def manifest(spec: ExperimentSpec) -> dict:
    return {"leoalloc_version": __version__, "backend": BACKEND, "spec": spec.to_dict()}


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> dict:
    """Run every cell of ``spec`` and write the result files into ``spec.out_dir``.

    Cells run in a process pool when ``jobs > 1``; output order does not
    depend on completion order.  Returns the paths written.
    """
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec_dict = spec.to_dict()
    cells = [(v, s) for v in spec.sweep for s in spec.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_cell, spec_dict, v, s) for v, s in cells]
            results = [f.result() for f in futures]
    else:
        results = [run_cell(spec_dict, v, s) for v, s in cells]

    rows = [r for res, _ in results for r in res]
    trace = [t for _, tr in results for t in tr]
    method_rank = {m: i for i, m in enumerate(METHODS)}
    rows.sort(key=lambda r: (r["sweep_value"], r["seed"], method_rank[r["method"]]))
    trace.sort(key=lambda t: (t["sweep_value"], t["seed"], t["iteration"]))

    man = manifest(spec)
    line = json.dumps(man, sort_keys=True)
    conn_cols = [f"conn_leo{i + 1}" for i in range(spec.base.M)]
    paths = {"manifest": out / "manifest.json", "results": out / "results.csv", "summary": out / "summary.csv"}
    paths["manifest"].write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    write_csv(paths["results"], rows, RESULT_COLUMNS + tuple(conn_cols) + ("error",), line)
    summary = summarize(rows, spec.base.M)
    if summary:
        write_csv(paths["summary"], summary, tuple(summary[0].keys()), line)
    if spec.kind == "convergence":
        paths["trace"] = out / "trace.csv"
        write_csv(paths["trace"], trace, TRACE_COLUMNS, line)
    return paths


def load_manifest(path, out_dir: str | os.PathLike | None = None) -> ExperimentSpec:
    """Rebuild the spec recorded in a manifest, optionally redirecting its output."""
    doc = json.loads(Path(path).read_text())
    spec = ExperimentSpec.from_dict(doc["spec"])
    if out_dir is not None:
        spec.out_dir = str(out_dir)
    return spec

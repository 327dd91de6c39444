"""Deterministic scenario runner, step logs and their verification."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import rng as rngmod
from .config import build_scenario, filter_options, resolve
from .filters import EXACT_FRAMEWORKS, MC_FRAMEWORKS, InconsistencyError, make_framework
from .models import generate_observations, initial_conditions, step_truth
from .sets import (
    ConstrainedZonotope,
    TAU_MEM,
    contains,
    count_outside,
    gnorm_proxy,
    interval_hull,
    project,
    sample_points,
)

log = logging.getLogger(__name__)

ORDER_TOL = 1e-9
MC_RATE_TARGET = 0.95


@dataclass
class StepRecord:
    """One (step, agent, framework) entry of a run log.

    ``incl_viol`` counts sampled points of the next-tighter framework's set
    that fall outside this one (centralized points tested on joint
    records, joint points on marginal records).
    """

    k: int
    agent: int
    framework: str
    contained: bool
    hull_lo: list[float]
    hull_hi: list[float]
    diameter: float
    gnorm: float | None
    n_gen: int
    n_con: int
    accepted: int | None
    micros: int
    truth: list[float] = field(default_factory=list)
    incl_viol: int | None = None
    incl_samples: int | None = None
    residual_violations: int | None = None


class SimulationError(RuntimeError):
    """A framework failed mid-run; ``records`` holds the log up to the failure."""

    def __init__(self, cause: InconsistencyError, records: list[StepRecord]):
        super().__init__(str(cause))
        self.cause = cause
        self.records = records


@dataclass
class RunResult:
    config: dict
    records: list[StepRecord]

    @property
    def state_dim(self) -> int:
        return len(self.records[0].hull_lo) if self.records else 0


def _describe(s, pos):
    hull = interval_hull(s)
    diam = float(np.max(hull.widths[list(pos)]))
    if isinstance(s, ConstrainedZonotope):
        return hull, diam, gnorm_proxy(project(s, pos)), s.n_gen, s.n_con
    return hull, diam, None, 0, 0


def run(config: dict) -> RunResult:
    """Run a configuration end to end; a pure function of ``config``.

    Raises:
        ConfigError: for invalid configurations.
        SimulationError: when a framework produces an empty set.
    """
    cfg = resolve(config)
    scenario = build_scenario(cfg)
    seed = cfg["seed"]
    opts = filter_options(cfg)
    init = cfg["init"]
    truth, boxes = initial_conditions(scenario, seed, init["state_low"], init["state_high"], init["box_radius"])
    names = [f for f in EXACT_FRAMEWORKS + MC_FRAMEWORKS if f in cfg["frameworks"]]
    frameworks = {n: make_framework(n, scenario, boxes, seed, opts) for n in names}
    pos = tuple(scenario.position_coords)
    agents = scenario.topology.agents
    n_incl = cfg["inclusion_samples"]
    check_cp = cfg["check_inclusion"] and {"centralized", "joint"} <= set(names)
    check_pd = cfg["check_inclusion"] and {"joint", "marginal"} <= set(names)
    records: list[StepRecord] = []

    for k in range(1, cfg["steps"] + 1):
        truth, inputs = step_truth(scenario, truth, seed, k)
        absolute, relative = generate_observations(scenario, truth, seed, k)
        micros = {}
        for name, fw in frameworks.items():
            t0 = time.perf_counter()
            try:
                fw.step(k, absolute, relative, inputs)
            except InconsistencyError as exc:
                raise SimulationError(exc, records) from exc
            micros[name] = int(round((time.perf_counter() - t0) * 1e6)) if cfg["record_timing"] else 0

        incl: dict[tuple[str, int], int] = {}
        if check_cp:
            cen = frameworks["centralized"]
            cloud = sample_points(cen.state.joint, n_incl, rngmod.stream(seed, "inclusion/centralized", k, 0))
            for i in agents:
                a, b = cen.state.layout[i]
                incl[("joint", i)] = count_outside(frameworks["joint"].estimate(i), cloud.points[:, a:b])
        if check_pd:
            for i in agents:
                pts = sample_points(frameworks["joint"].estimate(i), n_incl,
                                    rngmod.stream(seed, "inclusion/joint", k, i)).points
                incl[("marginal", i)] = count_outside(frameworks["marginal"].estimate(i), pts)

        for i in agents:
            for name, fw in frameworks.items():
                s = fw.estimate(i)
                hull, diam, gn, ng, nc = _describe(s, pos)
                records.append(StepRecord(
                    k=k, agent=i, framework=name,
                    contained=contains(s, truth[i]),
                    hull_lo=hull.lower.tolist(), hull_hi=hull.upper.tolist(),
                    diameter=diam, gnorm=gn, n_gen=ng, n_con=nc,
                    accepted=fw.accepted(i), micros=micros[name],
                    truth=[float(x) for x in truth[i]],
                    incl_viol=incl.get((name, i)),
                    incl_samples=n_incl if (name, i) in incl else None,
                    residual_violations=fw.residual_violations(i),
                ))
        log.debug("step %d done", k)
    return RunResult(cfg, records)


# -------------------------------------------------------------------- logs

def csv_header(state_dim: int) -> list[str]:
    return (["k", "agent", "framework", "contained"]
            + [f"hull_lo_{d}" for d in range(state_dim)]
            + [f"hull_hi_{d}" for d in range(state_dim)]
            + ["diameter", "gnorm", "n_gen", "n_con", "accepted", "micros"])


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def records_to_csv(records: Sequence[StepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    dim = len(records[0].hull_lo) if records else 0
    w.writerow(csv_header(dim))
    for r in records:
        w.writerow([_fmt(v) for v in
                    [r.k, r.agent, r.framework, r.contained, *r.hull_lo, *r.hull_hi,
                     r.diameter, r.gnorm, r.n_gen, r.n_con, r.accepted, r.micros]])
    return buf.getvalue()


def records_to_jsonl(records: Sequence[StepRecord]) -> str:
    return "".join(json.dumps(asdict(r)) + "\n" for r in records)


def write_logs(records: Sequence[StepRecord], csv_path, jsonl_path) -> None:
    with open(csv_path, "w", newline="") as fh:
        fh.write(records_to_csv(records))
    with open(jsonl_path, "w") as fh:
        fh.write(records_to_jsonl(records))


class LogFormatError(ValueError):
    """A log file is not in the documented format."""


def read_jsonl(path) -> list[StepRecord]:
    out = []
    names = set(StepRecord.__dataclass_fields__)
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                if set(d) != names:
                    raise LogFormatError(f"line {n}: unexpected fields {sorted(set(d) ^ names)}")
                out.append(StepRecord(**d))
            except (json.JSONDecodeError, TypeError) as exc:
                raise LogFormatError(f"line {n}: {exc}") from None
    return out


# ------------------------------------------------------------------ verify


@dataclass
class PropertyResult:
    name: str
    passed: bool
    checked: int
    detail: str = ""
    counterexample: tuple[int, int] | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        where = "" if self.counterexample is None else f" first at step {self.counterexample[0]}, agent {self.counterexample[1]}"
        return f"{status} {self.name} ({self.checked} checked){where}{': ' + self.detail if self.detail else ''}"


@dataclass
class Report:
    results: list[PropertyResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def text(self) -> str:
        lines = [r.line() for r in self.results]
        if self.passed:
            lines.append("all properties passed")
        return "\n".join(lines)


def _all(name, rows: Iterable[StepRecord], pred, detail="") -> PropertyResult:
    n = 0
    first = None
    bad = 0
    for r in rows:
        n += 1
        if not pred(r):
            bad += 1
            if first is None:
                first = (r.k, r.agent)
    return PropertyResult(name, bad == 0, n, f"{bad} violations" if bad else detail, first)


def _in_hull(r: StepRecord, tol=TAU_MEM) -> bool:
    t = np.asarray(r.truth)
    return bool(np.all(t >= np.asarray(r.hull_lo) - tol) and np.all(t <= np.asarray(r.hull_hi) + tol))


def verify(records: Sequence[StepRecord]) -> Report:
    """Evaluate the log invariants and the framework properties the log supports."""
    results: list[PropertyResult] = []
    by_fw: dict[str, list[StepRecord]] = {}
    for r in records:
        by_fw.setdefault(r.framework, []).append(r)
    if not by_fw:
        return Report([])
    results.append(_all("log.diameter_nonnegative", records, lambda r: r.diameter >= 0.0))
    # a contained truth must lie in the logged hull; for box estimates the two coincide
    results.append(_all(
        "log.containment_flags", records,
        lambda r: (_in_hull(r) if r.contained else True) and
                  (r.contained == _in_hull(r) if r.framework in MC_FRAMEWORKS else True),
    ))
    for name in EXACT_FRAMEWORKS:
        if name in by_fw:
            results.append(_all(f"soundness.{name}", by_fw[name], lambda r: r.contained))
    for name in MC_FRAMEWORKS:
        if name in by_fw:
            rows = by_fw[name]
            rate = sum(r.contained for r in rows) / len(rows)
            first = next(((r.k, r.agent) for r in rows if not r.contained), None)
            results.append(PropertyResult(f"mc.truth_in_box_rate.{name}", rate >= MC_RATE_TARGET, len(rows),
                                          f"rate {rate:.4f} (target {MC_RATE_TARGET})", first))
            results.append(_all(f"mc.residual_checks.{name}", rows, lambda r: r.residual_violations == 0))
    if any(r.incl_viol is not None for r in by_fw.get("joint", [])):
        results.append(_all("inclusion.centralized_in_joint",
                            [r for r in by_fw["joint"] if r.incl_viol is not None], lambda r: r.incl_viol == 0))
    if any(r.incl_viol is not None for r in by_fw.get("marginal", [])):
        results.append(_all("inclusion.joint_in_marginal",
                            [r for r in by_fw["marginal"] if r.incl_viol is not None], lambda r: r.incl_viol == 0))
    for lo_name, hi_name in (("centralized", "joint"), ("joint", "marginal"), ("mc_joint", "mc_marginal")):
        if lo_name in by_fw and hi_name in by_fw:
            hi_map = {(r.k, r.agent): r.diameter for r in by_fw[hi_name]}
            rows = [r for r in by_fw[lo_name] if (r.k, r.agent) in hi_map]
            results.append(_all(f"diameter.{lo_name}<={hi_name}", rows,
                                lambda r: r.diameter <= hi_map[(r.k, r.agent)] + ORDER_TOL))
    return Report(results)


def compare(records: Sequence[StepRecord], metric: str = "diameter",
            frameworks: Sequence[str] | None = None) -> str:
    """CSV with one ``metric`` column per framework, one row per (step, agent)."""
    if metric not in ("diameter", "gnorm"):
        raise ValueError("metric must be 'diameter' or 'gnorm'")
    present = [f for f in EXACT_FRAMEWORKS + MC_FRAMEWORKS if any(r.framework == f for r in records)]
    cols = present if frameworks is None else [f for f in frameworks if f in present]
    table: dict[tuple[int, int], dict[str, float]] = {}
    for r in records:
        if r.framework in cols:
            table.setdefault((r.k, r.agent), {})[r.framework] = getattr(r, metric)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "agent", *cols])
    for key in sorted(table):
        w.writerow([key[0], key[1], *(_fmt(table[key].get(c)) for c in cols)])
    return buf.getvalue()

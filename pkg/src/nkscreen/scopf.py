"""Security-constrained DC-OPF, in two formulations.

The full formulation dispatches against the base-case network limits plus
every post-contingency flow row of a reference region.  The classifier
formulation replaces those rows with the certified convex classifier's
predicted-feasible set, embedded exactly as ReLU-epigraph rows, so the whole
problem stays one LP.  Because certification makes the predicted set an
inner approximation of the region, every classifier dispatch is secure; the
price is occasional extra infeasibility and a small cost premium, which the
benchmark runner quantifies.
"""

from __future__ import annotations

import csv
import json
import time

from dataclasses import dataclass

import numpy as np

from .grid import Network, ptdf
from .icnn import ScaledClassifier
from .lp import LpProblem, LpStatus, solve
from .oracle import epigraph_constraints
from .region import ContingencyRegion


@dataclass
class ScopfResult:
    """One dispatch outcome: status, solution, and solve wall-clock."""

    status: LpStatus
    formulation: str
    p: np.ndarray | None = None
    cost: float | None = None
    runtime: float = 0.0

    def __bool__(self):
        return self.status is LpStatus.OPTIMAL


def region_inequalities(region: ContingencyRegion):
    """Region rows rewritten over full original injection coordinates.

    A region stored in reduced or standardized coordinates constrains
    u = (x[dim_map] - mu) / sigma; undoing that affine map gives rows
    G x <= h on the original injection x.
    """
    G = np.zeros((len(region.b), region.n_full))
    G[:, region.dim_map] = region.A / region.sigma
    h = region.b + region.A @ (region.mu / region.sigma)
    return G, h


def _finish(problem, backend, formulation, net):
    t0 = time.perf_counter()
    sol = solve(problem, backend=backend)
    runtime = time.perf_counter() - t0
    if sol.status is not LpStatus.OPTIMAL:
        return ScopfResult(sol.status, formulation, runtime=runtime)
    p = sol.x[:net.n].copy()
    return ScopfResult(LpStatus.OPTIMAL, formulation, p=p,
                       cost=float(net.cost @ p), runtime=runtime)


def solve_scopf_full(net: Network, demand, region: ContingencyRegion | None,
                     backend="auto") -> ScopfResult:
    """Dispatch against base-case limits plus every region row.

    With region None the security rows are dropped and this reduces to plain
    DC-OPF.  Reported runtime covers the LP solve only, so both formulations
    are timed on the same footing.
    """
    demand = np.asarray(demand, dtype=float)
    _, H = ptdf(net)
    Hd = H @ demand
    blocks = [H, -H]
    rhs = [net.f_upper + Hd, -net.f_lower - Hd]
    if region is not None:
        G, h = region_inequalities(region)
        blocks.append(G)
        rhs.append(h + G @ demand)
    blocks.append(np.ones((1, net.n)))
    rhs.append(np.array([demand.sum()]))
    A = np.vstack(blocks)
    b = np.concatenate(rhs)
    rel = ["<="] * (len(b) - 1) + ["="]
    problem = LpProblem(c=-net.cost, A=A, b=b, rel=rel, lb=net.pmin, ub=net.pmax)
    formulation = "dcopf" if region is None else "full"
    return _finish(problem, backend, formulation, net)


def solve_scopf_icnn(net: Network, demand, clf: ScaledClassifier,
                     backend="auto") -> ScopfResult:
    """Dispatch with the security rows replaced by the classifier set.

    The constraint forward(r * standardize(p - d)) <= 0 enters through the
    exact epigraph rows over auxiliary unit variables z (exact because the
    hidden-to-hidden weights are nonnegative); the standardization and the
    certified scale fold into the affine map from p to the network input.
    Only valid for certified classifiers: then any dispatch returned here
    satisfies the full region.
    """
    demand = np.asarray(demand, dtype=float)
    params = clf.params
    n_in = params.n_inputs
    dim_map = np.arange(n_in) if clf.dim_map is None else clf.dim_map
    mu = np.zeros(n_in) if clf.mu is None else clf.mu
    sigma = np.ones(n_in) if clf.sigma is None else clf.sigma
    shift = np.zeros(n_in) if clf.v is None else clf.v
    if len(dim_map) != n_in:
        raise ValueError("classifier transform does not match its input width")

    A_e, b_e, lb_e, ub_e = epigraph_constraints(params)
    nz = A_e.shape[1] - n_in
    A_u, A_z = A_e[:, :n_in], A_e[:, n_in:]

    # network input u = r * ((p - d)[dim_map] - mu) / sigma + shift = S p + s0
    S = np.zeros((n_in, net.n))
    S[np.arange(n_in), dim_map] = clf.r / sigma
    s0 = clf.r * (-demand[dim_map] - mu) / sigma + shift

    _, H = ptdf(net)
    Hd = H @ demand
    nv = net.n + nz

    def pad(block):
        out = np.zeros((len(block), nv))
        out[:, :net.n] = block
        return out

    blocks = [pad(H), pad(-H), np.hstack([A_u @ S, A_z])]
    rhs = [net.f_upper + Hd, -net.f_lower - Hd, b_e - A_u @ s0]
    # the certified set is the sublevel set intersected with the input box
    hi_ok = np.isfinite(ub_e[:n_in])
    lo_ok = np.isfinite(lb_e[:n_in])
    if hi_ok.any():
        blocks.append(pad(S[hi_ok]))
        rhs.append(ub_e[:n_in][hi_ok] - s0[hi_ok])
    if lo_ok.any():
        blocks.append(pad(-S[lo_ok]))
        rhs.append(s0[lo_ok] - lb_e[:n_in][lo_ok])
    balance = np.zeros((1, nv))
    balance[0, :net.n] = 1.0
    blocks.append(balance)
    rhs.append(np.array([demand.sum()]))

    A = np.vstack(blocks)
    b = np.concatenate(rhs)
    rel = ["<="] * (len(b) - 1) + ["="]
    lb = np.concatenate([net.pmin, np.zeros(nz)])
    ub = np.concatenate([net.pmax, np.full(nz, np.inf)])
    c = np.concatenate([-net.cost, np.zeros(nz)])
    problem = LpProblem(c=c, A=A, b=b, rel=rel, lb=lb, ub=ub)
    return _finish(problem, backend, "icnn", net)


def region_safe_for_dispatch(net: Network, region: ContingencyRegion, demands):
    """Whether a reduced region constrains dispatch exactly for these demands.

    Folding a constant injection dimension into b is only valid for points
    that hold the folded value.  A dispatch problem can move any coordinate
    with generation headroom, so the fold is exact for optimization only
    when every dropped bus has no generator and none of the demand
    instances load it: then its injection is structurally zero, matching
    the folded constant.
    """
    if region.dim == region.n_full:
        return True
    demands = np.atleast_2d(np.asarray(demands, dtype=float))
    dropped = np.setdiff1d(np.arange(region.n_full), region.dim_map)
    vals = region.dropped_values[dropped]
    if not np.allclose(vals, 0.0, atol=1e-12):
        return False
    if np.any(net.pmax[dropped] != 0.0) or np.any(net.pmin[dropped] != 0.0):
        return False
    return not np.any(demands[:, dropped] != 0.0)


def benchmark_scopf(net: Network, demands, region: ContingencyRegion,
                    clf: ScaledClassifier, backend="auto"):
    """Run both formulations over demand instances and compare.

    Returns (records, summary).  records holds one row per instance and
    formulation (for the CSV report); summary aggregates cost premium,
    infeasibility shares, soundness of the classifier dispatches against
    the region, and runtimes.  Runtime means cover only instances solved by
    both formulations, so neither side is charged for the other's
    infeasible cases.
    """
    demands = np.atleast_2d(np.asarray(demands, dtype=float))
    if not region_safe_for_dispatch(net, region, demands):
        raise ValueError(
            "region folds an injection dimension the dispatch problem can "
            "move; benchmark against the full-dimension region instead")
    records = []
    fulls, icnns = [], []
    for i, d in enumerate(demands):
        rf = solve_scopf_full(net, d, region, backend=backend)
        ri = solve_scopf_icnn(net, d, clf, backend=backend)
        fulls.append(rf)
        icnns.append(ri)
        for res in (rf, ri):
            records.append({
                "instance": i,
                "formulation": res.formulation,
                "status": res.status.name,
                "cost": "" if res.cost is None else repr(res.cost),
                "runtime": repr(res.runtime),
            })

    n = len(demands)
    both = [i for i in range(n) if fulls[i] and icnns[i]]
    n_full = sum(1 for r in fulls if r)
    n_icnn = sum(1 for r in icnns if r)
    nonconservative = sum(1 for i in range(n) if icnns[i] and not fulls[i])

    worst_violation = 0.0
    for i in range(n):
        if icnns[i]:
            margins = region.margins(region.project(icnns[i].p - demands[i]))
            worst_violation = max(worst_violation, float(margins.max()))

    excess = [(icnns[i].cost - fulls[i].cost) / max(abs(fulls[i].cost), 1e-12)
              for i in both]
    rt_full = [fulls[i].runtime for i in both]
    rt_icnn = [icnns[i].runtime for i in both]
    summary = {
        "instances": n,
        "feasible_full": n_full,
        "feasible_icnn": n_icnn,
        "extra_infeasible_fraction":
            (n_full - len(both)) / n_full if n_full else None,
        "conservativeness_violations": nonconservative,
        "max_region_violation": worst_violation,
        "mean_excess_cost": float(np.mean(excess)) if both else None,
        "max_excess_cost": float(np.max(excess)) if both else None,
        "mean_runtime_full": float(np.mean(rt_full)) if both else None,
        "mean_runtime_icnn": float(np.mean(rt_icnn)) if both else None,
        "speedup": (float(np.mean(rt_full) / np.mean(rt_icnn))
                    if both and np.mean(rt_icnn) > 0 else None),
        "runtime_note": "runtime means cover instances feasible under both "
                        "formulations only",
    }
    return records, summary


def save_benchmark(records, summary, csv_path, json_path):
    """Write the per-instance CSV and the summary JSON."""
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["instance", "formulation", "status", "cost", "runtime"])
        writer.writeheader()
        writer.writerows(records)
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")

"""Fairness, overhead, convergence and Pareto-distance metrics."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import analysis
from .topology import InterferenceGraph
from .trace import RunTrace

CONV_TOL = 0.05
CONV_WINDOW = 5
PARETO_TOL = 1e-4
NASH_TOL = 1e-8
NASH_MAX_ITER = 100_000


class InfeasibleError(ValueError):
    pass


def jain_weighted(g: InterferenceGraph, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (g.n,):
        raise ValueError("theta length does not match graph")
    w = (g.degree + 1) * theta
    sq = float(np.sum(w * w))
    if sq == 0.0:
        raise ValueError("Jain index undefined for an all-zero vector")
    return float(np.sum(w)) ** 2 / (g.n * sq)


def net_throughput(theta, l_s: int, overhead_bits: int) -> np.ndarray:
    if not 0 <= overhead_bits < l_s:
        raise ValueError("overhead must be in [0, l_s)")
    return np.asarray(theta, dtype=float) * (1.0 - overhead_bits / l_s)


def convergence_time(trace: RunTrace, tol: float = CONV_TOL, window: int = CONV_WINDOW,
                     leaders=None) -> int | None:
    """First iteration from which every leader stays within ``tol`` of RIM 2 for
    ``window`` iterations. ``None`` means never.

    ``leaders`` (1-based) pins the users to watch; by default each row is
    judged against the leader set recorded for it.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    dev = np.abs(trace.rim - analysis.RIM_SETPOINT)
    ok = np.zeros(len(trace), dtype=bool)
    for t in range(len(trace)):
        who = trace.leaders[t] if leaders is None else leaders
        idx = [l - 1 for l in who]
        ok[t] = bool(idx) and bool(np.all(dev[t, idx] <= tol))
    run = 0
    for t in range(len(trace)):
        run = run + 1 if ok[t] else 0
        if run >= window:
            return t - window + 1
    return None


def _stable(g: InterferenceGraph, y: np.ndarray) -> bool:
    return analysis.solve_nash(g, y, tol=NASH_TOL, max_iter=NASH_MAX_ITER).converged


def pareto_bracket(g: InterferenceGraph, theta, tol: float = PARETO_TOL) -> tuple[float, float]:
    """(lo, hi) with d = lo certified stable, d = hi not, and hi - lo <= tol."""
    theta = np.asarray(theta, dtype=float)
    if not _stable(g, theta):
        raise InfeasibleError("theta has no stable operating point")
    lo, hi = 1.0, 2.0
    while _stable(g, hi * theta):
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise InfeasibleError("theta is (numerically) zero; ray never leaves the region")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _stable(g, mid * theta):
            lo = mid
        else:
            hi = mid
    return lo, hi


def distance_to_pareto(g: InterferenceGraph, theta, tol: float = PARETO_TOL) -> float:
    """Largest d with a stable operating point achieving d * theta."""
    lo, hi = pareto_bracket(g, theta, tol)
    return 0.5 * (lo + hi)


def limiting_point(g: InterferenceGraph, theta, tol: float = PARETO_TOL) -> np.ndarray:
    """Operating point at the last stable scale along the ray."""
    lo, _ = pareto_bracket(g, theta, tol)
    return analysis.solve_nash(g, lo * np.asarray(theta, dtype=float),
                               tol=NASH_TOL, max_iter=NASH_MAX_ITER).q


@dataclass
class MetricsReport:
    n_users: int
    mean_theta: float
    total_theta: float
    mean_theta_net: float
    jain: float
    d_pareto: float | None
    t_conv_iter: int | None
    t_conv_s: float | None
    leader_count: int
    max_height: int
    outcome: str
    area: float | None = None
    ud: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, float):
                v = f"{v:.6g}"
            lines.append(f"{k} = {'none' if v is None else v}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def steady_theta(trace: RunTrace) -> np.ndarray:
    return trace.theta[trace.measure_start:].mean(axis=0)


def report(g: InterferenceGraph, trace: RunTrace, l_s: int = 2000, overhead_bits: int = 25,
           tol: float = CONV_TOL, window: int = CONV_WINDOW, area: float | None = None,
           pareto: bool = True) -> MetricsReport:
    """Summarize a run.

    Throughput, fairness and net throughput use the trace's measured rates
    after convergence. The Pareto distance is evaluated at the model
    throughput of the final MAPs, which is free of sampling noise.
    """
    theta = steady_theta(trace)
    t_conv = convergence_time(trace, tol, window)
    d = None
    if pareto and np.all(trace.final_q < 1.0):
        d = distance_to_pareto(g, analysis.throughput(g, trace.final_q))
    part = trace.partition
    return MetricsReport(
        n_users=g.n,
        mean_theta=float(theta.mean()),
        total_theta=float(theta.sum()),
        mean_theta_net=float(net_throughput(theta, l_s, overhead_bits).mean()),
        jain=jain_weighted(g, theta),
        d_pareto=d,
        t_conv_iter=t_conv,
        t_conv_s=None if t_conv is None else trace.time_s(t_conv),
        leader_count=len(part.leaders),
        max_height=part.max_height(),
        outcome=trace.outcome,
        area=area,
        ud=None if area is None else g.n / area,
    )

"""Leader election, leadership validation and PI-driven MAP tuning.

The engine works on what each user *knows* about its neighbors. In ideal
mode that knowledge is the ground truth every iteration; the packet
simulator fills the same structure from headers actually received, so the
two modes share one update path.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis
from .partition import TreePartition
from .topology import InterferenceGraph
from .trace import RunTrace

Q_MIN = 0.001
Q_MAX = 0.999
SETPOINT = analysis.RIM_SETPOINT

# default frame timing used for wall-clock columns of ideal traces
DEFAULT_L_F = 100
DEFAULT_SLOT_TIME = 2000 / 20e6


@dataclass(frozen=True)
class PiController:
    k_p: float
    k_i: float
    q: float
    e_prev: float
    setpoint: float = SETPOINT
    q_min: float = Q_MIN
    q_max: float = Q_MAX

    def __post_init__(self):
        if self.k_p <= 0 or self.k_i <= 0:
            raise ValueError("PI gains must be positive")


def pi_gains(n_l: int, multiplier: float = 1.0) -> tuple[float, float]:
    """Ziegler-Nichols gains for a leader of degree ``n_l``."""
    if n_l < 1:
        raise ValueError("an isolated user has no controller")
    k_p = 0.2 * n_l / (n_l + 1) ** 2
    k_i = 2.0 * n_l / (17.0 * (n_l + 1) ** 2)
    return multiplier * k_p, multiplier * k_i


def pi_step(ctrl: PiController, r_measured: float) -> PiController:
    # incremental form; clamping the stored output doubles as anti-windup
    e = ctrl.setpoint - r_measured
    q = ctrl.q + ctrl.k_p * (e - ctrl.e_prev) + ctrl.k_i * e
    q = min(max(q, ctrl.q_min), ctrl.q_max)
    return replace(ctrl, q=q, e_prev=e)


def _election_keys(degree: np.ndarray) -> np.ndarray:
    # lexicographic (degree, -id): larger key wins, equal degree -> smaller id wins
    n = degree.size
    return degree.astype(np.int64) * (n + 1) + (n - np.arange(n))


def elect_leaders(g: InterferenceGraph) -> TreePartition:
    """Preliminary election on true node degrees."""
    key = _election_keys(g.degree)
    is_leader = np.zeros(g.n, dtype=bool)
    parent = np.full(g.n, -1)
    for i in range(g.n):
        nbrs = np.flatnonzero(g.adjacency[i])
        if nbrs.size == 0 or key[i] > key[nbrs].max():
            is_leader[i] = True
        else:
            parent[i] = nbrs[np.argmax(key[nbrs])]
    return TreePartition.from_arrays(is_leader, parent)


@dataclass
class RunConfig:
    q_init: float = 0.05
    tol: float = 1e-3
    window: int = 5
    max_iter: int = 1000
    gain_multiplier: float = 1.0
    election_iter: int | None = None
    settle_iters: int = 0
    declare_margin: float = 1e-3
    q_min: float = Q_MIN
    q_max: float = Q_MAX

    def __post_init__(self):
        if self.tol <= 0 or self.window < 1 or self.max_iter < 1:
            raise ValueError("tol, window and max_iter must be positive")


class Knowledge:
    """Per directed edge (listener i, neighbor j): what i last learned about j."""

    def __init__(self, g: InterferenceGraph):
        csr = g.csr
        self.rows = np.repeat(np.arange(g.n), np.diff(csr.indptr))
        self.cols = csr.indices.astype(np.int64)
        e = self.rows.size
        self.known = np.zeros(e, dtype=bool)
        self.q = np.full(e, np.nan)
        self.nd = np.zeros(e, dtype=np.int64)
        self.declare = np.zeros(e, dtype=bool)
        self._edge = {(int(i), int(j)): k for k, (i, j) in enumerate(zip(self.rows, self.cols))}

    def edge(self, i: int, j: int) -> int:
        return self._edge[(i, j)]

    def fill_truth(self, q: np.ndarray, degree: np.ndarray, declare: np.ndarray) -> None:
        self.known[:] = True
        self.q[:] = q[self.cols]
        self.nd[:] = degree[self.cols]
        self.declare[:] = declare[self.cols]


@dataclass
class SaleState:
    g: InterferenceGraph
    q: np.ndarray
    degree: np.ndarray
    cfg: RunConfig
    is_leader: np.ndarray = None
    parent: np.ndarray = None
    declare: np.ndarray = None
    validated: np.ndarray = None
    controllers: dict[int, PiController] = field(default_factory=dict)
    measured_rim: np.ndarray = None
    elected: bool = False
    t: int = 0
    events: list[str] = field(default_factory=list)

    @classmethod
    def initial(cls, g: InterferenceGraph, cfg: RunConfig,
                degree: np.ndarray | None = None) -> "SaleState":
        n = g.n
        deg = np.array(g.degree if degree is None else degree, dtype=np.int64)
        return cls(g=g, q=np.full(n, float(cfg.q_init)), degree=deg, cfg=cfg,
                   is_leader=np.zeros(n, dtype=bool), parent=np.full(n, -1),
                   declare=np.zeros(n, dtype=bool), validated=np.zeros(n, dtype=bool),
                   measured_rim=np.zeros(n))

    @property
    def partition(self) -> TreePartition:
        return TreePartition.from_arrays(self.is_leader, self.parent)

    def leader_ids(self) -> tuple[int, ...]:
        return tuple(int(i) + 1 for i in np.flatnonzero(self.is_leader))

    def set_q(self, q) -> None:
        """Overwrite MAPs, keeping leader controllers in step."""
        self.q = np.array(q, dtype=float)
        for i, ctrl in self.controllers.items():
            self.controllers[i] = replace(ctrl, q=float(self.q[i]))

    def _controller(self, i: int, r: float, q: float) -> PiController | None:
        if self.degree[i] < 1:
            return None
        k_p, k_i = pi_gains(int(self.degree[i]), self.cfg.gain_multiplier)
        return PiController(k_p, k_i, q=q, e_prev=SETPOINT - r,
                            q_min=self.cfg.q_min, q_max=self.cfg.q_max)

    def _promote(self, i: int, r: float) -> None:
        self.is_leader[i] = True
        self.parent[i] = -1
        ctrl = self._controller(i, r, float(self.q[i]))
        if ctrl is None:
            self.controllers.pop(i, None)
            self.q[i] = self.cfg.q_max
        else:
            self.controllers[i] = ctrl

    def _demote(self, i: int, parent: int) -> None:
        self.is_leader[i] = False
        self.parent[i] = parent
        self.controllers.pop(i, None)


def measure_rim(state: SaleState, know: Knowledge) -> np.ndarray:
    q = state.q
    kq = know.q
    use = know.known & ~np.isnan(kq)
    qi = q[know.rows]
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(use, qi / (1.0 - kq) + kq / (1.0 - qi), 0.0)
    return np.bincount(know.rows, weights=term, minlength=state.g.n)


def _best_known_neighbor(know: Knowledge, i: int, n: int) -> tuple[int, int]:
    """(neighbor, key) with the largest election key among i's known neighbors."""
    lo = np.searchsorted(know.rows, i)
    hi = np.searchsorted(know.rows, i, side="right")
    known = know.known[lo:hi]
    if not known.any():
        return -1, -1
    keys = np.where(known, know.nd[lo:hi] * (n + 1) + (n - know.cols[lo:hi]), -1)
    k = int(np.argmax(keys))
    return int(know.cols[lo + k]), int(keys[k])


def run_election(state: SaleState, know: Knowledge, users=None, rim=None) -> None:
    """Preliminary election from each user's own degree and heard neighbor degrees.

    ``users`` restricts the comparison to a subset (local re-runs after a
    degree estimate changes); users whose role came from leadership
    validation are left alone.
    """
    n = state.g.n
    rim = state.measured_rim if rim is None else rim
    own_key = _election_keys(state.degree)
    first = not state.elected
    for i in range(n) if users is None else users:
        if state.validated[i]:
            continue
        b, b_key = _best_known_neighbor(know, i, n)
        if b < 0 or own_key[i] > b_key:
            if not state.is_leader[i]:
                state._promote(i, float(rim[i]))
                if not first:
                    state.events.append(f"elect:{i + 1}")
            elif i in state.controllers:
                k_p, k_i = pi_gains(int(state.degree[i]), state.cfg.gain_multiplier)
                state.controllers[i] = replace(state.controllers[i], k_p=k_p, k_i=k_i)
        else:
            if state.is_leader[i] and not first:
                state.events.append(f"resign:{i + 1}->{b + 1}")
            state._demote(i, b)
    if first:
        state.events.append("election:" + ",".join(map(str, state.leader_ids())))
    state.elected = True


def sale_iteration(state: SaleState, know: Knowledge | None = None) -> SaleState:
    """One synchronous SALE iteration; mutates and returns ``state``."""
    g = state.g
    cfg = state.cfg
    if know is None:
        know = Knowledge(g)
        know.fill_truth(state.q, state.degree, state.declare)
    state.events = []
    # (1) RIM from neighbor MAPs as known to each user
    r = measure_rim(state, know)
    state.measured_rim = r
    if not state.elected:
        if state.t >= (cfg.election_iter or 0):
            run_election(state, know, rim=r)
        else:
            state.t += 1
            return state
    q_old = state.q
    q_new = q_old.copy()
    # (2) leaders step their PI controllers
    for i in np.flatnonzero(state.is_leader):
        ctrl = state.controllers.get(int(i))
        if ctrl is None:
            continue
        ctrl = pi_step(ctrl, float(r[i]))
        state.controllers[int(i)] = ctrl
        q_new[i] = ctrl.q
    # (3) followers copy the parent's MAP as last heard
    for j in np.flatnonzero(~state.is_leader):
        p = state.parent[j]
        if p < 0:
            continue
        heard = know.q[know.edge(int(j), int(p))]
        if not np.isnan(heard):
            q_new[j] = heard
    state.q = q_new
    # (4) leadership validation on last round's declarations
    if state.declare.any():
        decl_nbr = know.known & know.declare
        smaller = np.bincount(know.rows, weights=decl_nbr & (know.cols < know.rows),
                              minlength=g.n) > 0
        winners = state.declare & ~smaller
        new = winners & ~state.is_leader
        if new.any():
            for w in np.flatnonzero(new):
                state._promote(int(w), float(r[w]))
                state.validated[w] = True
                state.events.append(f"declare:{w + 1}")
            quit_to = {}
            for k in np.flatnonzero(decl_nbr & new[know.cols]):
                i, w = int(know.rows[k]), int(know.cols[k])
                if state.is_leader[i] and not winners[i]:
                    quit_to[i] = min(quit_to.get(i, w), w)
            for i, w in sorted(quit_to.items()):
                state._demote(i, w)
                state.validated[i] = True
                state.events.append(f"handover:{i + 1}->{w + 1}")
    # (5) declare for the next round
    state.declare = r > SETPOINT + cfg.declare_margin
    state.t += 1
    return state


class Recorder:
    """Accumulates trace rows and applies the sustained-window stop rule."""

    def __init__(self, g: InterferenceGraph, cfg: RunConfig, mode: str,
                 slot_time: float, l_f: int):
        self.g, self.cfg, self.mode = g, cfg, mode
        self.slot_time, self.l_f = slot_time, l_f
        self.q, self.rim, self.theta, self.leaders, self.events = [], [], [], [], []
        self.streak = 0
        self.converged_at = None
        self.stop_at = None

    def record(self, state: SaleState, q_t, theta_t, leaders_t, declared_before) -> bool:
        """Add one row; return True when the run should stop."""
        r_t = analysis.rim_all(self.g, q_t)
        t = len(self.q)
        self.q.append(q_t)
        self.rim.append(r_t)
        self.theta.append(theta_t)
        self.leaders.append(leaders_t)
        self.events.append(list(state.events))
        active = [l - 1 for l in leaders_t if self.g.degree[l - 1] > 0]
        calm = (state.elected and active and not self.events[-1]
                and not (declared_before & ~state.is_leader).any()
                and not (state.declare & ~state.is_leader).any()
                and all(abs(r_t[l] - SETPOINT) <= self.cfg.tol for l in active))
        if self.converged_at is None:
            self.streak = self.streak + 1 if calm else 0
            if self.streak >= self.cfg.window:
                self.converged_at = t - self.cfg.window + 1
                self.events[self.converged_at].append("converged")
                self.stop_at = t + self.cfg.settle_iters
        return self.stop_at is not None and t >= self.stop_at

    def finish(self, state: SaleState) -> RunTrace:
        rim = np.array(self.rim)
        if self.converged_at is not None:
            outcome = "converged"
            start = self.converged_at + self.cfg.window
        else:
            outcome = "max-iterations"
            tail = rim[-50:]
            lead = [l - 1 for l in self.leaders[-1]]
            if lead and np.max(np.abs(tail[:, lead] - SETPOINT)) > 0.5:
                outcome = "oscillating"
            start = int(0.8 * len(rim))
        return RunTrace(n=self.g.n, mode=self.mode, slot_time=self.slot_time, l_f=self.l_f,
                        q=np.array(self.q), rim=rim, theta=np.array(self.theta),
                        leaders=self.leaders, events=self.events, outcome=outcome,
                        converged_at=self.converged_at, measure_start=min(start, len(rim) - 1),
                        partition=state.partition, final_q=state.q.copy(), state=state)


def run_ideal(g: InterferenceGraph, cfg: RunConfig | None = None,
              state: SaleState | None = None) -> RunTrace:
    """Iterate SALE with perfect neighbor knowledge until convergence."""
    cfg = cfg or RunConfig()
    state = state or SaleState.initial(g, cfg)
    rec = Recorder(g, cfg, "ideal", DEFAULT_SLOT_TIME, DEFAULT_L_F)
    know = Knowledge(g)
    for _ in range(cfg.max_iter):
        q_t = state.q.copy()
        declared_before = state.declare.copy()
        know.fill_truth(state.q, state.degree, state.declare)
        sale_iteration(state, know)
        leaders_t = state.leader_ids()
        if rec.record(state, q_t, analysis.throughput(g, q_t), leaders_t, declared_before):
            break
    return rec.finish(state)

"""Slot-level slotted-Aloha simulator carrying SALE state in packet headers.

A user transmits in a slot with probability equal to its MAP. A listener
decodes a header only when exactly one of its neighbors transmits, and a
transmission is a throughput success only when no neighbor of the sender
transmits. Every ``l_f`` slots each user runs its SALE role update from the
headers it heard; every ``l_nd`` slots it re-counts its neighbors.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .sale import Knowledge, Recorder, RunConfig, SaleState, run_election, sale_iteration
from .topology import InterferenceGraph
from .trace import RunTrace

MAP_BITS = 16
ND_BITS = 8
MAP_SCALE = (1 << MAP_BITS) - 1


@dataclass(frozen=True)
class FrameConfig:
    l_f: int = 100
    l_nd: int = 1000
    l_s: int = 2000
    header_overhead_bits: int = ND_BITS + MAP_BITS + 1
    r_b: float = 20e6
    seed: int = 0
    perfect_reception: bool = False
    quantize_map: bool = True

    def __post_init__(self):
        if self.l_f < 1 or self.l_nd < self.l_f or self.l_nd % self.l_f:
            raise ValueError("l_nd must be a positive multiple of l_f")
        if not 0 <= self.header_overhead_bits < self.l_s:
            raise ValueError("header overhead must be smaller than the packet")

    @property
    def slot_time(self) -> float:
        return self.l_s / self.r_b

    @property
    def frames_per_nd(self) -> int:
        return self.l_nd // self.l_f


def encode_map(q):
    return np.rint(np.clip(q, 0.0, 1.0) * MAP_SCALE).astype(np.int64)


def decode_map(code):
    return np.asarray(code, dtype=float) / MAP_SCALE


@dataclass(frozen=True)
class PacketHeader:
    sender: int
    nd: int
    map_code: int
    declare: bool

    @classmethod
    def build(cls, sender: int, nd: int, q: float, declare: bool) -> "PacketHeader":
        return cls(sender, min(int(nd), (1 << ND_BITS) - 1), int(encode_map(q)), bool(declare))

    @property
    def q(self) -> float:
        return float(decode_map(self.map_code))

    def subfields(self) -> int:
        """The 25 added header bits: nd | map | declare."""
        return (self.nd << (MAP_BITS + 1)) | (self.map_code << 1) | int(self.declare)

    @classmethod
    def from_subfields(cls, sender: int, bits: int) -> "PacketHeader":
        return cls(sender, bits >> (MAP_BITS + 1), (bits >> 1) & MAP_SCALE, bool(bits & 1))


@dataclass(frozen=True)
class SlotOutcome:
    transmitted: np.ndarray
    success: np.ndarray
    received: tuple[frozenset[int], ...]


def simulate_slot(g: InterferenceGraph, q, rng: np.random.Generator) -> SlotOutcome:
    q = np.asarray(q, dtype=float)
    tx = rng.random(g.n) < q
    busy = g.adjacency[:, tx].sum(axis=1)
    success = tx & (busy == 0)
    received = []
    for j in range(g.n):
        if not tx[j] and busy[j] == 1:
            sender = int(np.flatnonzero(g.adjacency[j] & tx)[0])
            received.append(frozenset({sender + 1}))
        else:
            received.append(frozenset())
    return SlotOutcome(tx, success, tuple(received))


def simulate_frame(adj: np.ndarray, q: np.ndarray, slots: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Run ``slots`` slots at fixed MAPs.

    Returns per-user success counts and an n x n matrix whose (j, i) entry
    counts the slots in which j decoded a header from i.
    """
    tx = rng.random((slots, q.size)) < q
    txf = tx.astype(float)
    busy = txf @ adj
    success = (tx & (busy == 0)).sum(axis=0)
    listen_ok = (~tx & (busy == 1)).astype(float)
    heard = (listen_ok.T @ txf) * adj
    return success, heard


def success_counts(g: InterferenceGraph, q, slots: int, rng: np.random.Generator,
                   chunk: int = 10_000) -> np.ndarray:
    """Throughput successes per user over ``slots`` independent slots."""
    q = np.asarray(q, dtype=float)
    adj = g.adjacency.astype(float)
    total = np.zeros(g.n, dtype=np.int64)
    done = 0
    while done < slots:
        k = min(chunk, slots - done)
        tx = rng.random((k, g.n)) < q
        busy = tx.astype(float) @ adj
        total += (tx & (busy == 0)).sum(axis=0)
        done += k
    return total


def estimate_nd(heard) -> int:
    return len(set(heard))


def run_frames(g: InterferenceGraph, cfg: FrameConfig | None = None,
               run_cfg: RunConfig | None = None) -> RunTrace:
    cfg = cfg or FrameConfig()
    run_cfg = run_cfg or RunConfig()
    if run_cfg.election_iter is None:
        run_cfg = replace(run_cfg, election_iter=cfg.frames_per_nd - 1)
    if run_cfg.q_init <= 0:
        raise ValueError("packet mode needs q_init > 0; a silent user is never heard")
    rng = np.random.default_rng(cfg.seed)
    adj = g.adjacency.astype(float)
    know = Knowledge(g)
    state = SaleState.initial(g, run_cfg, degree=np.zeros(g.n, dtype=np.int64))
    rec = Recorder(g, run_cfg, "packet", cfg.slot_time, cfg.l_f)
    window_heard = np.zeros(know.rows.size, dtype=bool)
    last_window = np.zeros(know.rows.size, dtype=bool)
    seen_nd = know.nd.copy()
    seen_deg = state.degree.copy()

    for t in range(run_cfg.max_iter):
        q_t = state.q.copy()
        declared_before = state.declare.copy()
        # headers carry values fixed for the whole frame
        sent_q = decode_map(encode_map(q_t)) if cfg.quantize_map else q_t
        sent_nd = np.minimum(state.degree, (1 << ND_BITS) - 1)
        success, heard = simulate_frame(adj, q_t, cfg.l_f, rng)
        if cfg.perfect_reception:
            got = np.ones(know.rows.size, dtype=bool)
        else:
            got = heard[know.rows, know.cols] > 0
        know.q[got] = sent_q[know.cols[got]]
        know.nd[got] = sent_nd[know.cols[got]]
        know.declare[:] = False
        know.declare[got] = state.declare[know.cols[got]]
        window_heard |= got
        know.known = last_window | window_heard

        boundary = (t + 1) % cfg.frames_per_nd == 0
        if not state.elected:
            # first window: advertise the running count of distinct senders
            state.degree = np.bincount(know.rows, weights=window_heard,
                                       minlength=g.n).astype(np.int64)
        if boundary:
            state.degree = np.bincount(know.rows, weights=window_heard,
                                       minlength=g.n).astype(np.int64)
            last_window = window_heard.copy()
            window_heard[:] = False
            know.known = last_window.copy()

        pending = []
        was_elected = state.elected
        if was_elected:
            changed = state.degree != seen_deg
            changed |= np.bincount(know.rows, weights=(know.nd != seen_nd) & know.known,
                                   minlength=g.n) > 0
            if changed.any():
                state.events = []
                run_election(state, know, users=[int(i) for i in np.flatnonzero(changed)])
                pending = list(state.events)
        sale_iteration(state, know)
        if state.elected and (pending or not was_elected):
            seen_deg = state.degree.copy()
            seen_nd = know.nd.copy()
        state.events = pending + state.events
        if rec.record(state, q_t, success / cfg.l_f, state.leader_ids(), declared_before):
            break
    return rec.finish(state)

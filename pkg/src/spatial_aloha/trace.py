from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .partition import TreePartition

_HANDOVER = re.compile(r"handover:(\d+)->(\d+)")


@dataclass
class RunTrace:
    """Per-iteration record of one SALE run.

    Row ``t`` holds the MAPs in force during iteration ``t``, the true RIM
    they induce, the throughput (model value in ideal mode, slot-counted
    in packet mode), the leader set used for the update, and event tags.
    """

    n: int
    mode: str
    slot_time: float
    l_f: int
    q: np.ndarray = field(repr=False)
    rim: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    leaders: list[tuple[int, ...]] = field(repr=False)
    events: list[list[str]] = field(repr=False)
    outcome: str = "max-iterations"
    converged_at: int | None = None
    measure_start: int | None = None
    partition: TreePartition | None = field(default=None, repr=False)
    final_q: np.ndarray | None = field(default=None, repr=False)
    state: Any = field(default=None, repr=False)

    def __len__(self):
        return self.q.shape[0]

    @property
    def iterations(self) -> int:
        return len(self)

    def time_s(self, t: int) -> float:
        return (t + 1) * self.l_f * self.slot_time

    def handovers(self) -> list[tuple[int, int, int]]:
        out = []
        for t, tags in enumerate(self.events):
            for tag in tags:
                m = _HANDOVER.fullmatch(tag)
                if m:
                    out.append((t, int(m.group(1)), int(m.group(2))))
        return out

    def columns(self) -> list[str]:
        idx = range(1, self.n + 1)
        return (["iteration", "time_s"] + [f"q_{i}" for i in idx]
                + [f"R_{i}" for i in idx] + [f"theta_{i}" for i in idx]
                + ["leaders", "events"])

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.columns())
        for t in range(len(self)):
            w.writerow([t, f"{self.time_s(t):.6g}"]
                       + [f"{x:.10g}" for x in self.q[t]]
                       + [f"{x:.10g}" for x in self.rim[t]]
                       + [f"{x:.10g}" for x in self.theta[t]]
                       + [";".join(map(str, self.leaders[t])), ";".join(self.events[t])])

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

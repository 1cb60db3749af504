"""Command-line experiment runner.

Scenario files are INI-style: ``key = value`` lines grouped under
``[run]``, ``[topology]``, ``[sale]``, ``[simnet]`` and ``[metrics]``.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import metrics, topology
from .sale import RunConfig, run_ideal
from .simnet import FrameConfig, run_frames

SWEEP_AXES = ("n_users", "area", "seed", "gain_multiplier", "l_f")
MODES = ("ideal", "packet")
EXPECT = ("converged", "unstable")

_KEYS = {
    "run": {"name": str, "mode": str, "seed": int, "expect": str},
    "topology": {"builtin": str, "file": str, "n_users": int, "area": float, "range": float},
    "sale": {"q_init": float, "tol": float, "window": int, "max_iter": int,
             "gain_multiplier": float, "settle_iters": int, "election_iter": int,
             "declare_margin": float},
    "simnet": {"l_f": int, "l_nd": int, "l_s": int, "header_overhead_bits": int,
               "r_b": float, "perfect_reception": bool, "quantize_map": bool},
    "metrics": {"conv_tol": float, "conv_window": int, "pareto": bool},
}


class ConfigError(ValueError):
    pass


@dataclass
class Scenario:
    name: str = "run"
    mode: str = "ideal"
    seed: int = 0
    expect: str = "converged"
    builtin: str | None = None
    file: str | None = None
    n_users: int | None = None
    area: float | None = None
    range: float = 5.0
    sale: dict = field(default_factory=dict)
    simnet: dict = field(default_factory=dict)
    conv_tol: float = metrics.CONV_TOL
    conv_window: int = metrics.CONV_WINDOW
    pareto: bool = True
    base_dir: Path = field(default_factory=Path.cwd)

    def graph(self) -> topology.InterferenceGraph:
        if self.builtin:
            if self.builtin not in topology.BUILTINS:
                raise ConfigError(f"unknown builtin topology {self.builtin!r}")
            return topology.BUILTINS[self.builtin]()
        if self.file:
            return topology.load(self.base_dir / self.file)
        if self.n_users is None or self.area is None:
            raise ConfigError("topology needs builtin, file, or n_users and area")
        return topology.random_geometric(self.n_users, self.area, self.range, self.seed)

    def run_config(self) -> RunConfig:
        return RunConfig(**self.sale)

    def frame_config(self) -> FrameConfig:
        opts = dict(self.simnet)
        opts.setdefault("l_f", 100)
        opts.setdefault("l_nd", 10 * opts["l_f"])
        return FrameConfig(seed=self.seed, **opts)


def _line_numbers(text: str) -> dict[tuple[str, str], int]:
    out, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
        elif section and "=" in s and not s.startswith(("#", ";")):
            out[(section, s.split("=", 1)[0].strip().lower())] = no
    return out


def _convert(kind, raw: str):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return kind(raw)


def parse_scenario(text: str, base_dir: Path | None = None) -> Scenario:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f"line {lineno}: " if lineno else ""
        raise ConfigError(f"{where}{exc.message.splitlines()[0]}") from None
    lines = _line_numbers(text)
    sc = Scenario(base_dir=base_dir or Path.cwd())
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            where = f"line {lines.get((section, key), '?')}"
            kind = _KEYS[section].get(key)
            if kind is None:
                raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
            try:
                value = _convert(kind, raw)
            except ValueError:
                raise ConfigError(f"{where}: bad value {raw!r} for {key}") from None
            if section in ("sale", "simnet"):
                getattr(sc, section)[key] = value
            else:
                setattr(sc, key, value)
    if sc.mode not in MODES:
        raise ConfigError(f"line {lines.get(('run', 'mode'), '?')}: mode must be ideal or packet")
    if sc.expect not in EXPECT:
        raise ConfigError(f"line {lines.get(('run', 'expect'), '?')}: expect must be "
                          "converged or unstable")
    return sc


def load_scenario(ref: str) -> Scenario:
    """Read a scenario file, or one of the shipped ones by name (``fig5``)."""
    path = Path(ref)
    if path.is_file():
        return parse_scenario(path.read_text(), path.parent)
    shipped = resources.files("spatial_aloha") / "scenarios" / f"{ref}.cfg"
    if shipped.is_file():
        return parse_scenario(shipped.read_text())
    raise ConfigError(f"no scenario file {ref!r}")


def shipped_scenarios() -> list[str]:
    folder = resources.files("spatial_aloha") / "scenarios"
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".cfg"))


@dataclass
class RunResult:
    scenario: Scenario
    report: metrics.MetricsReport
    ok: bool
    out_dir: Path | None


def run_scenario(sc: Scenario, out_dir: Path | None = None) -> RunResult:
    g = sc.graph()
    run_cfg = sc.run_config()
    if sc.mode == "ideal":
        trace = run_ideal(g, run_cfg)
    else:
        trace = run_frames(g, sc.frame_config(), run_cfg)
    converged = trace.outcome == "converged"
    fc = sc.frame_config()
    rep = metrics.report(g, trace, l_s=fc.l_s, overhead_bits=fc.header_overhead_bits,
                         tol=sc.conv_tol, window=sc.conv_window, area=sc.area,
                         pareto=sc.pareto and converged)
    ok = converged if sc.expect == "converged" else not converged
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        trace.to_csv(out_dir / "trace.csv")
        (out_dir / "metrics.txt").write_text(rep.to_text())
        (out_dir / "metrics.json").write_text(rep.to_json() + "\n")
    return RunResult(sc, rep, ok, out_dir)


def with_axis(sc: Scenario, axis: str, value: str) -> Scenario:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    sc = dataclasses.replace(sc, sale=dict(sc.sale), simnet=dict(sc.simnet))
    if axis in ("n_users", "area"):
        if sc.builtin or sc.file:
            raise ConfigError(f"axis {axis} needs a generated topology")
        setattr(sc, axis, int(value) if axis == "n_users" else float(value))
    elif axis == "seed":
        sc.seed = int(value)
    elif axis == "gain_multiplier":
        sc.sale["gain_multiplier"] = float(value)
    else:
        sc.simnet["l_f"] = int(value)
        sc.simnet.pop("l_nd", None)
    return sc


SUMMARY_COLUMNS = ("value", "users", "area", "ud", "total_theta", "jain", "d_pareto",
                   "t_conv_iter", "t_conv_s", "leaders", "max_height", "outcome")


def summary_rows(axis_values, results) -> list[dict]:
    rows = []
    for v, res in zip(axis_values, results):
        r = res.report
        rows.append({"value": v, "users": r.n_users, "area": r.area, "ud": r.ud,
                     "total_theta": r.total_theta, "jain": r.jain, "d_pareto": r.d_pareto,
                     "t_conv_iter": r.t_conv_iter, "t_conv_s": r.t_conv_s,
                     "leaders": r.leader_count, "max_height": r.max_height,
                     "outcome": r.outcome})
    return rows


def format_table(rows: list[dict]) -> str:
    def cell(x):
        if x is None:
            return "-"
        return f"{x:.4f}" if isinstance(x, float) else str(x)

    table = [list(SUMMARY_COLUMNS)] + [[cell(r[c]) for c in SUMMARY_COLUMNS] for r in rows]
    widths = [max(len(row[k]) for row in table) for k in range(len(SUMMARY_COLUMNS))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in table) + "\n"


def _job(args):
    sc, out = args
    return run_scenario(sc, out)


def sweep(base: Scenario, axis: str, values: list[str], out_root: Path | None = None,
          workers: int | None = None) -> list[RunResult]:
    scenarios = [with_axis(base, axis, v) for v in values]
    outs = [None if out_root is None else out_root / f"{axis}={v}" for v in values]
    if len(scenarios) <= 1 or workers == 1:
        return [run_scenario(s, o) for s, o in zip(scenarios, outs)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_job, zip(scenarios, outs)))


def _apply_overrides(sc: Scenario, args) -> Scenario:
    if args.mode:
        sc.mode = args.mode
    if args.seed is not None:
        sc.seed = args.seed
    return sc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", type=Path, default=Path("out"))

    p = argparse.ArgumentParser(prog="spatial-aloha", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run one scenario")
    run.add_argument("config", help=f"scenario file or shipped name ({', '.join(shipped_scenarios())})")

    sw = sub.add_parser("sweep", parents=[common], help="run a scenario over one parameter")
    sw.add_argument("config")
    sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--workers", type=int)

    gen = sub.add_parser("gen-topology", help="write a random connected geometric topology")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--area", type=float, required=True)
    gen.add_argument("--range", type=float, default=5.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen-topology":
            g = topology.random_geometric(args.n, args.area, args.range, args.seed)
            topology.save(g, args.out)
            print(f"wrote {args.out}: {g.n} users, {len(g.edges)} edges")
            return 0
        sc = _apply_overrides(load_scenario(args.config), args)
        if args.command == "run":
            res = run_scenario(sc, args.out_dir / sc.name)
            sys.stdout.write(res.report.to_text())
            if not res.ok:
                print(f"error: outcome {res.report.outcome}, expected {sc.expect}",
                      file=sys.stderr)
            return 0 if res.ok else 1
        values = [v.strip() for v in args.values.split(",") if v.strip()]
        root = args.out_dir / f"{sc.name}-{args.axis}"
        results = sweep(sc, args.axis, values, root, args.workers)
        rows = summary_rows(values, results)
        root.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        (root / "summary.csv").write_text(buf.getvalue())
        table = format_table(rows)
        (root / "summary.txt").write_text(table)
        sys.stdout.write(table)
        return 0 if all(r.ok for r in results) else 1
    except (ConfigError, topology.TopologyError, topology.GenerationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

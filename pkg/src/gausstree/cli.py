"""Command-line front end.

Exit codes: 0 success, 2 property violation, 3 resource or configuration
error (unreadable file, budget exceeded, unwritable output), 64 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, cantor
from . import montecarlo as mc
from . import sequences as seq
from . import trees, verdict, verify
from .errors import ConsistencyError, DomainError, ResourceError

SUBCOMMANDS = ("criterion", "simulate", "verify", "cantor", "report")
FORMATS = ("csv", "json")
DEFAULT_SEED = 12345
OUT_ENV = "GAUSSTREE_OUT"
DEFAULT_OUT = "gausstree-out"

EXIT_OK = 0
EXIT_VIOLATION = 2
EXIT_RESOURCE = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    """Everything one invocation needs; serialized verbatim into ``manifest.json``."""

    subcommand: str
    family: str | None = None
    seq_file: str | None = None
    tree: str = "binary"
    dmax: list | None = None
    dmin: list | None = None
    horizon: int = seq.DEFAULT_HORIZON
    tol: float = seq.DEFAULT_TOL
    depth: int = 10
    depths: list = field(default_factory=lambda: [8, 12, 16, 20])
    replicas: int = 100
    seed: int = DEFAULT_SEED
    statistic: str = "level_max_abs"
    tail_n: int = 0
    level: float = 0.99
    workers: int = 1
    out: str | None = None
    format: str = "csv"
    K: int | None = None
    dump: str | None = None
    families: list | None = None
    full: bool = False
    inject: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {self.subcommand!r}")
        if self.format not in FORMATS:
            raise UsageError(f"format must be one of {', '.join(FORMATS)}")
        if self.family is not None and self.seq_file is not None:
            raise UsageError("give either --family or --seq-file, not both")
        if (self.dmax is None) != (self.dmin is None):
            raise UsageError("--dmax and --dmin go together")
        if self.statistic not in mc.STATISTICS:
            raise UsageError(f"unknown statistic {self.statistic!r}")
        for name in ("horizon", "replicas", "workers"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")
        if self.depth < 0 or self.tail_n < 0:
            raise UsageError("depth and tail_n must be nonnegative")
        if not self.depths or min(self.depths) < 1:
            raise UsageError("depths must be a nonempty list of positive integers")
        if not self.tol > 0:
            raise UsageError("tol must be positive")
        if not 0 < self.level < 1:
            raise UsageError("level must lie in (0, 1)")
        if self.K is not None and self.K < 0:
            raise UsageError("K must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CliConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise UsageError(f"unknown config keys: {', '.join(sorted(extra))}")
        if "subcommand" not in d:
            raise UsageError("config needs a subcommand")
        try:
            return cls(**d)
        except TypeError as exc:  # wrongly typed values from a JSON config
            raise UsageError(f"bad config value: {exc}") from exc

    def out_dir(self) -> Path:
        return Path(self.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)

    def model(self) -> seq.SequenceModel:
        if self.seq_file is not None:
            try:
                return seq.load_sequence_file(self.seq_file)
            except OSError as exc:
                raise ResourceError(f"cannot read {self.seq_file}: {exc}") from exc
        if self.family is None:
            raise UsageError(f"{self.subcommand} needs --family or --seq-file")
        return seq.from_spec(self.family)

    def source(self) -> str:
        return self.family if self.seq_file is None else f"file {self.seq_file}"


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _inject_item(text: str):
    name, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("expected NAME=VALUE")
    try:
        return name.strip(), float(val)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value in {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    # every option defaults to SUPPRESS so that only flags actually given
    # override values coming from --config
    S = argparse.SUPPRESS
    common = _Parser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON file with CliConfig fields; flags win")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--format", choices=FORMATS, help="table format (default csv)")
    common.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_SEED})")
    common.add_argument("--workers", type=int, help="worker processes for Monte Carlo")

    seqopt = _Parser(add_help=False, argument_default=S)
    seqopt.add_argument("--family", help="built-in family, e.g. geometric:0.5, power:2, "
                        "harmonic, remark-lacunary, remark-even, spike, zero, constant:c,n, "
                        "finite:a1,a2,...")
    seqopt.add_argument("--seq-file", dest="seq_file", help="text file, one value per line")
    seqopt.add_argument("--horizon", type=int, help="terms summed before deciding")
    seqopt.add_argument("--tol", type=float, help="remainder tolerance for convergence")

    treeopt = _Parser(add_help=False, argument_default=S)
    treeopt.add_argument("--tree", help="binary, ternary, constant:q or profile:q1,q2,...")

    mcopt = _Parser(add_help=False, argument_default=S)
    mcopt.add_argument("--replicas", type=int, help="Monte Carlo replicas")
    mcopt.add_argument("--level", type=float, help="confidence level of the intervals")

    p = _Parser(prog="gausstree", description="Boundedness of Gaussian processes indexed by "
                "trees: criteria, Monte Carlo and Walsh series tools.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="subcommand", parser_class=_Parser, required=True)

    c = sub.add_parser("criterion", argument_default=S, parents=[common, seqopt, treeopt],
                       help="decide boundedness and print the condition table")
    c.add_argument("--dmax", type=_int_list, help="per-generation maximal degrees (general tree)")
    c.add_argument("--dmin", type=_int_list, help="per-generation minimal degrees (general tree)")

    s = sub.add_parser("simulate", argument_default=S, parents=[common, seqopt, treeopt, mcopt],
                       help="Monte Carlo moments of the level maxima")
    s.add_argument("--depth", type=int, help="deepest generation simulated")
    s.add_argument("--statistic", choices=mc.STATISTICS)
    s.add_argument("--tail-n", dest="tail_n", type=int, help="window start N for tail_sup")

    v = sub.add_parser("verify", argument_default=S, parents=[common],
                       help="run the property suite; exit 2 on any violation")
    v.add_argument("--families", nargs="*", help="families to check (default: all built-ins)")
    v.add_argument("--full", action="store_true", default=S, help="acceptance-scale Monte Carlo")
    v.add_argument("--inject", type=_inject_item, action="append",
                   help="fault injection NAME=VALUE (parseval, walsh, block, homogeneous)")

    k = sub.add_parser("cantor", argument_default=S, parents=[common, seqopt, mcopt],
                       help="Walsh coefficients, entropy integral and field simulation")
    k.add_argument("--K", type=int, help="number of Cantor coordinates (default: support)")
    k.add_argument("--dump", help="write one simulated field to this binary file")

    r = sub.add_parser("report", argument_default=S, parents=[common, seqopt, treeopt, mcopt],
                       help="sandwich experiment plus verdict")
    r.add_argument("--depths", type=_int_list, help="comma-separated depths (default 8,12,16,20)")
    return p


def config_from_args(argv=None) -> CliConfig:
    ns = vars(build_parser().parse_args(argv))
    base = {}
    path = ns.pop("config", None)
    if path is not None:
        try:
            base = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ResourceError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(base, dict):
            raise UsageError(f"{path}: config must be a JSON object")
        if base.get("subcommand", ns["subcommand"]) != ns["subcommand"]:
            raise UsageError(f"{path} is a {base['subcommand']!r} config")
    if "inject" in ns:
        ns["inject"] = dict(ns["inject"])
    return CliConfig.from_dict({**base, **ns})


# ---------------------------------------------------------------------------
# subcommands


def _checkpoints(n: int) -> list[int]:
    pts = {n}
    p = 1
    while p < n:
        pts.add(p)
        p *= 10
    return sorted(pts)


def cmd_criterion(cfg: CliConfig, out=sys.stdout) -> int:
    model = cfg.model()
    if cfg.dmax is not None:
        tree = (cfg.dmax, cfg.dmin)
        tree_label = f"dmax={cfg.dmax} dmin={cfg.dmin}"
    else:
        tree = trees.parse_tree(cfg.tree)
        tree_label = cfg.tree
    rep = verdict.boundedness_verdict(tree, model, cfg.horizon, cfg.tol)
    print(f"sequence: {cfg.source()}    tree: {tree_label}", file=out)
    print(f"decision: {rep.decision}  ({rep.criterion_used})", file=out)
    for note in rep.notes:
        print(f"  note: {note}", file=out)

    H = seq._effective_horizon(model, cfg.horizon)
    partial = np.cumsum(seq.q_terms(model, H))
    print("Q partial sums  sum_{l<L} Q_l/sqrt(l+1):", file=out)
    for L in _checkpoints(H):
        print(f"  L={L:<8d} {partial[L - 1]:.12g}", file=out)

    items = [rep]
    try:
        cond = seq.condition_report(model, cfg.horizon, cfg.tol)
    except DomainError as exc:
        print(f"condition table skipped: {exc}", file=out)
    else:
        print("conditions:", file=out)
        for name, statement, v in cond.table():
            print(f"  {name}  {v:<24s} {statement}", file=out)
        items.append(cond)
    verdict.report_emit(items, cfg.out_dir(), cfg.to_dict(), cfg.seed, cfg.format)
    return EXIT_OK


def _profile(cfg: CliConfig) -> trees.DegreeProfile:
    return trees.parse_tree(cfg.tree)


def cmd_simulate(cfg: CliConfig, out=sys.stdout) -> int:
    t0 = time.perf_counter()
    run = mc.RunConfig(_profile(cfg), cfg.model(), cfg.depth, cfg.replicas, cfg.seed,
                       cfg.statistic, tail_n=cfg.tail_n, level=cfg.level)
    stats = mc.estimate_moments(run, cfg.workers)
    print(f"{cfg.statistic} on {cfg.tree}, {cfg.source()}, R={cfg.replicas}, seed={cfg.seed}",
          file=out)
    print(f"{'depth':>5s} {'mean':>12s} {'E[M^2]':>12s} {'+/-':>10s}", file=out)
    for i, d in enumerate(stats.depths):
        print(f"{d:5d} {stats.mean[i]:12.6g} {stats.second_moment[i]:12.6g} "
              f"{stats.half_width[i]:10.3g}", file=out)
    verdict.report_emit([stats], cfg.out_dir(), cfg.to_dict(), cfg.seed, cfg.format,
                        time.perf_counter() - t0)
    return EXIT_OK


def _results_json(results) -> str:
    return verdict.json_text([asdict(r) for r in results])


def cmd_verify(cfg: CliConfig, out=sys.stdout) -> int:
    t0 = time.perf_counter()
    families = verify.DEFAULT_FAMILIES if cfg.families is None else cfg.families
    for name in families:
        seq.from_spec(name)  # reject unknown families before any work
    results = verify.run_suite(families, cfg.seed, cfg.workers, cfg.full, cfg.inject)
    body = verify.results_csv(results) if cfg.format == "csv" else _results_json(results)
    path = cfg.out_dir() / f"verify_results.{cfg.format}"
    verdict.atomic_write(path, body)
    verdict.write_manifest(cfg.out_dir(), [path], cfg.to_dict(), cfg.seed,
                           time.perf_counter() - t0)
    if not results:
        print("warning: empty family list, zero checks run", file=out)
        return EXIT_OK
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed", file=out)
    for r in failed:
        print(f"FAIL {r.name} [{r.family}] value={r.value:.3g} tol={r.tolerance:.3g} {r.detail}",
              file=out)
    return EXIT_VIOLATION if failed else EXIT_OK


def cmd_cantor(cfg: CliConfig, out=sys.stdout) -> int:
    model = cfg.model()
    if model.support is None:
        raise UsageError("cantor needs a finite-support sequence (finite:..., constant:c,n, "
                         "spike, zero or --seq-file)")
    K = model.support if cfg.K is None else cfg.K
    t0 = time.perf_counter()
    lhs, rhs, diff = cantor.parseval_check(model, K)
    i_quad = cantor.entropy_integral(model, "quadrature")
    i_block = cantor.entropy_integral(model, "blockwise")
    rows = [("K", K), ("parseval_walsh", lhs), ("parseval_l2", rhs), ("parseval_diff", diff),
            ("entropy_quadrature", i_quad), ("entropy_blockwise", i_block),
            ("entropy_diff", abs(i_quad - i_block))]
    print(f"sequence: {cfg.source()}    K={K}", file=out)
    print(f"Parseval: sum mult(m) a(m)^2 = {lhs:.15g}, sum alpha^2 = {rhs:.15g}, "
          f"diff {diff:.3g}", file=out)
    print(f"I(sigma): quadrature {i_quad:.12g}, blockwise {i_block:.12g}, "
          f"diff {abs(i_quad - i_block):.3g}", file=out)

    files = []
    if cfg.dump is not None:
        # field values at the identity point over independent draws
        at_id = np.empty(cfg.replicas)
        first = None
        for i in range(cfg.replicas):
            x = cantor.simulate_walsh_series(model, K, cfg.seed, call_id=i)
            at_id[i] = x[0]
            if first is None:
                first = x
        var = float(np.var(at_id, ddof=1)) if cfg.replicas > 1 else math.nan
        rows += [("field_points", first.size), ("field_draws", cfg.replicas),
                 ("variance_at_identity", var), ("variance_expected", rhs)]
        print(f"field: {first.size} points written to {cfg.dump}; variance at the identity "
              f"over {cfg.replicas} draws {var:.6g} (expected {rhs:.6g})", file=out)
        try:
            cantor.dump_field(first, cfg.dump, {"K": K, "seed": cfg.seed, "call_id": 0,
                                                "model": model.spec()})
        except OSError as exc:
            raise ResourceError(f"cannot write {cfg.dump}: {exc}") from exc

    if cfg.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("quantity", "value"))
        w.writerows((k, repr(v) if isinstance(v, float) else v) for k, v in rows)
        body = buf.getvalue()
    else:
        body = verdict.json_text(dict(rows))
    path = cfg.out_dir() / f"cantor.{cfg.format}"
    verdict.atomic_write(path, body)
    files.append(path)
    verdict.write_manifest(cfg.out_dir(), files, cfg.to_dict(), cfg.seed,
                           time.perf_counter() - t0)
    return EXIT_OK


def cmd_report(cfg: CliConfig, out=sys.stdout) -> int:
    t0 = time.perf_counter()
    model = cfg.model()
    profile = _profile(cfg)
    table = verdict.sandwich_experiment(profile, model, cfg.depths, cfg.replicas, cfg.seed,
                                        cfg.workers, cfg.level)
    rep = verdict.boundedness_verdict(profile, model, cfg.horizon, cfg.tol)
    print(f"sequence: {cfg.source()}    tree: {cfg.tree}    decision: {rep.decision} "
          f"({rep.criterion_used})", file=out)
    print(f"{'depth':>5s} {'Q_ref':>12s} {'sqrt E[M^2]':>12s} {'ratio':>9s}", file=out)
    for row in table.rows:
        print(f"{row.depth:5d} {row.q_ref:12.6g} {row.moment_est:12.6g} {row.ratio:9.4g}"
              + ("  (skipped)" if row.skipped else ""), file=out)
    print(f"ratio spread max/min: {table.spread:.4g}", file=out)
    verdict.report_emit([table, rep], cfg.out_dir(), cfg.to_dict(), cfg.seed, cfg.format,
                        time.perf_counter() - t0)
    return EXIT_OK


COMMANDS = {"criterion": cmd_criterion, "simulate": cmd_simulate, "verify": cmd_verify,
            "cantor": cmd_cantor, "report": cmd_report}


def run(cfg: CliConfig, out=None) -> int:
    return COMMANDS[cfg.subcommand](cfg, sys.stdout if out is None else out)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        return run(cfg)
    except SystemExit as exc:  # argparse: --help, --version, usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, DomainError) as exc:
        print(f"gausstree: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceError as exc:
        print(f"gausstree: resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except ConsistencyError as exc:
        print(f"gausstree: property violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())

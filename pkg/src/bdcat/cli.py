"""Batch command-line front end.

One binary with subcommands; every run takes a JSON config (--config) and
emits a single JSON or CSV document to --out (default: stdout).  Flags
override config values.  Exit codes: 0 success, 1 I/O or config error,
2 numerical non-convergence, 3 identity check beyond tolerance.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import popgen, serialize
from .duality import (
    siegmund_dual,
    verify_bar_identity,
    verify_duality,
    verify_ratio_identities,
)
from .errors import (
    BdcatError,
    NoConvergence,
    ParseError,
    QuadratureNoConvergence,
    SpecError,
    ValidationError,
)
from .generators import KINDS, build_generator
from .montecarlo import (
    SimConfig,
    estimate_absorption,
    estimate_stationary,
    excursion_statistics,
)
from .schedules import make_schedule
from .solvers import solve_absorption, solve_stationary_tail, stationary_distribution

_TOP_KEYS = {
    "version", "schedule", "moran", "diffusion", "process", "init",
    "level", "times", "target", "tol", "trunc", "imax", "sim", "label",
}
_SIM_KEYS = {"seed", "replicates", "horizon", "burn_in", "max_events"}


class RunConfig:
    """Validated config document plus the flag overrides that won."""

    def __init__(self, doc: dict, args):
        self.doc = doc
        self.args = args

    @classmethod
    def load(cls, args):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ParseError(f"cannot read config: {exc}") from exc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"config is not valid JSON: {exc.msg}",
                line=exc.lineno, column=exc.colno,
            ) from exc
        if not isinstance(doc, dict):
            raise ValidationError("config root must be an object")
        unknown = set(doc) - _TOP_KEYS
        if "sim" in doc and isinstance(doc["sim"], dict):
            unknown |= {f"sim.{k}" for k in set(doc["sim"]) - _SIM_KEYS}
        if unknown:
            msg = f"unknown config keys: {', '.join(sorted(unknown))}"
            if args.lenient:
                print(f"warning: {msg}", file=sys.stderr)
            else:
                raise ValidationError(msg)
        version = doc.get("version", 1)
        if version != 1:
            raise ValidationError(f"unsupported config version {version!r}")
        return cls(doc, args)

    def _require_block(self, name):
        blocks = [k for k in ("schedule", "moran", "diffusion") if k in self.doc]
        if blocks != [name]:
            raise ValidationError(
                f"this command needs exactly the '{name}' block, found: "
                f"{', '.join(blocks) or 'none'}"
            )

    def schedule(self):
        self._require_block("schedule")
        try:
            sched = make_schedule(self.doc["schedule"])
        except SpecError as exc:
            raise ValidationError(f"schedule: {exc}") from exc
        return sched

    def moran_params(self):
        self._require_block("moran")
        m = self.doc["moran"]
        try:
            return popgen.MoranParams(
                n=int(m["N"]), s=float(m["s"]), u=float(m["u"]),
                nu0=float(m["nu0"]) if "nu0" in m else None,
                nu1=float(m["nu1"]) if "nu1" in m else None,
            )
        except KeyError as exc:
            raise ValidationError(f"moran block is missing {exc}") from exc

    def diffusion_params(self):
        self._require_block("diffusion")
        d = self.doc["diffusion"]
        try:
            return popgen.DiffusionParams(
                sigma=float(d["sigma"]), theta=float(d["theta"]),
                nu0=float(d["nu0"]) if "nu0" in d else None,
                nu1=float(d["nu1"]) if "nu1" in d else None,
            )
        except KeyError as exc:
            raise ValidationError(f"diffusion block is missing {exc}") from exc

    def process(self, default):
        kind = self.doc.get("process", default)
        if kind not in KINDS:
            raise ValidationError(f"unknown process {kind!r}")
        return kind

    def tol(self, default):
        if self.args.tol is not None:
            return self.args.tol
        return float(self.doc.get("tol", default))

    def trunc(self):
        if self.args.trunc is not None:
            return self.args.trunc
        t = self.doc.get("trunc")
        return int(t) if t is not None else None

    def sim_config(self, **defaults):
        block = dict(self.doc.get("sim", {}))
        if self.args.seed is not None:
            block["seed"] = self.args.seed
        if self.args.replicates is not None:
            block["replicates"] = self.args.replicates
        merged = {**defaults, **block}
        return SimConfig(
            seed=int(merged.get("seed", 0)),
            replicates=int(merged.get("replicates", 1000)),
            max_events=int(merged.get("max_events", 10_000_000)),
            burn_in=float(merged.get("burn_in", 0.0)),
            horizon=(float(merged["horizon"]) if merged.get("horizon") is not None
                     else None),
        )

    def level(self):
        if "level" not in self.doc:
            raise ValidationError("this command needs 'level' in the config")
        return int(self.doc["level"])

    def init(self):
        if "init" not in self.doc:
            raise ValidationError("this command needs 'init' in the config")
        return int(self.doc["init"])

    def times(self):
        ts = self.doc.get("times", [0.1, 1.0, 10.0])
        return [float(t) for t in ts]


def _emit(args, text):
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_doc(args, doc, csv_text=None):
    if args.format == "csv":
        if csv_text is None:
            raise ValidationError("this command has no CSV form; use --format json")
        _emit(args, csv_text)
    else:
        _emit(args, serialize.dumps(doc) + "\n")


def _cmd_solve_b(cfg, args):
    v = solve_absorption(cfg.schedule(), tol=cfg.tol(1e-10))
    _emit_doc(args, serialize.solution_to_dict(v), serialize.solution_to_csv(v))
    return 0


def _cmd_solve_a(cfg, args):
    v = solve_stationary_tail(cfg.schedule(), tol=cfg.tol(1e-10))
    _emit_doc(args, serialize.solution_to_dict(v), serialize.solution_to_csv(v))
    return 0


def _cmd_stationary(cfg, args):
    gen = build_generator(cfg.process("catastrophe"), cfg.schedule(),
                          level=cfg.doc.get("level"), trunc=cfg.trunc())
    v = stationary_distribution(gen, tol=cfg.tol(1e-10))
    _emit_doc(args, serialize.solution_to_dict(v), serialize.solution_to_csv(v))
    return 0


def _cmd_dual(cfg, args):
    gen = build_generator(cfg.process("killed"), cfg.schedule(),
                          level=cfg.doc.get("level"), trunc=cfg.trunc())
    dual = siegmund_dual(gen)
    _emit_doc(args, serialize.generator_to_dict(dual),
              serialize.generator_to_csv(dual))
    return 0


def _cmd_verify_duality(cfg, args):
    sched = cfg.schedule()
    tol = cfg.tol(1e-8)
    times = cfg.times()
    reports = {}
    worst = 0.0
    for kind in ("killed", "catastrophe"):
        gen = build_generator(kind, sched, trunc=cfg.trunc())
        dual = siegmund_dual(gen).drop_isolated()
        rep = verify_duality(gen, dual, times, tol=tol,
                             keep_pairs=args.verbose)
        reports[kind] = serialize.duality_report_to_dict(rep, verbose=args.verbose)
        worst = max(worst, rep.max_discrepancy)
    doc = {
        "schema": serialize.JSON_SCHEMA,
        "kind": "duality_verification",
        "tol": tol,
        "max_discrepancy": worst,
        "passed": worst <= tol,
        "reports": reports,
    }
    _emit_doc(args, doc)
    return 0 if worst <= tol else 3


def _cmd_verify_theorem(cfg, args):
    sched = cfg.schedule()
    tol = cfg.tol(1e-9)
    closure = verify_ratio_identities(sched, tol=tol)
    doc = serialize.closure_report_to_dict(closure)
    n = sched.n
    if n is not None and n >= 2 and all(sched.mu(i) > 0 for i in range(1, n + 1)):
        bar = verify_bar_identity(sched, tol=tol)
        doc["bar_identity"] = serialize.bar_report_to_dict(bar)
        ok = closure.passed and bar.passed
    else:
        ok = closure.passed
    doc["passed"] = ok
    _emit_doc(args, doc)
    return 0 if ok else 3


def _cmd_simulate(cfg, args):
    target = cfg.doc.get("target", "absorption")
    log_fh = None
    on_path = None
    if args.log_paths:
        log_fh = open(args.log_paths, "w", encoding="utf-8")

        def on_path(rep, path):
            log_fh.write(serialize.path_to_line(path) + "\n")

    try:
        if target == "absorption":
            sim = cfg.sim_config()
            est = estimate_absorption(cfg.schedule(), cfg.init(), sim,
                                      trunc=cfg.trunc(), on_path=on_path)
            _emit_doc(args, serialize.estimate_to_dict(est))
            return 0
        if target == "stationary":
            sim = cfg.sim_config(horizon=50.0, burn_in=0.1)
            gen = build_generator(cfg.process("catastrophe"), cfg.schedule(),
                                  level=cfg.doc.get("level"), trunc=cfg.trunc())
            init = cfg.doc.get("init")
            est = estimate_stationary(gen, sim, init=init, on_path=on_path)
            _emit_doc(args, serialize.stationary_estimate_to_dict(est))
            return 0
        raise ValidationError(f"unknown simulate target {target!r}")
    finally:
        if log_fh is not None:
            log_fh.close()


def _cmd_excursions(cfg, args):
    sim = cfg.sim_config()
    stats = excursion_statistics(cfg.schedule(), cfg.level(), sim,
                                 trunc=cfg.trunc())
    _emit_doc(args, serialize.excursions_to_dict(stats))
    return 0


def _cmd_moran(cfg, args):
    params = cfg.moran_params()
    tol = cfg.tol(1e-9)
    table = popgen.finite_table(params)
    if args.strict_paper:
        a = solve_stationary_tail(popgen.pldasg_schedule(params))
        table["ancestral_unfit"] = [
            popgen.ancestral_type_prob_finite(a, i, strict_paper=True)
            for i in range(0, params.n + 1)
        ]
    report = popgen.finite_relations(params, tol=tol)
    doc = {
        "schema": serialize.JSON_SCHEMA,
        "kind": "moran",
        "table": table,
        "report": serialize.relation_report_to_dict(report),
        "passed": report.passed,
    }
    _emit_doc(args, doc, serialize.table_to_csv(table, "moran"))
    if args.format == "csv":
        return 0
    return 0 if report.passed else 3


def _cmd_diffusion(cfg, args):
    params = cfg.diffusion_params()
    tol = cfg.tol(1e-8)
    imax = int(cfg.doc.get("imax", 20))
    table = popgen.diffusion_table(params, imax=imax)
    if args.strict_paper:
        alpha = popgen.fearnhead_tails(params, imax=imax)
        table["ancestral_unfit"] = [
            popgen.ancestral_type_prob_diffusion(alpha, y, strict_paper=True)
            for y in table["y"]
        ]
    report = popgen.diffusion_relations(params, imax=imax, tol=tol)
    grid = {"y": table.pop("y"), "ancestral_unfit": table.pop("ancestral_unfit")}
    doc = {
        "schema": serialize.JSON_SCHEMA,
        "kind": "diffusion",
        "table": table,
        "ancestral_grid": grid,
        "report": serialize.relation_report_to_dict(report),
        "passed": report.passed,
    }
    csv_text = (serialize.table_to_csv(table, "diffusion")
                + serialize.table_to_csv(grid, "ancestral_grid"))
    _emit_doc(args, doc, csv_text)
    if args.format == "csv":
        return 0
    return 0 if report.passed else 3


_COMMANDS = {
    "solve-b": _cmd_solve_b,
    "solve-a": _cmd_solve_a,
    "stationary": _cmd_stationary,
    "dual": _cmd_dual,
    "verify-duality": _cmd_verify_duality,
    "verify-theorem": _cmd_verify_theorem,
    "simulate": _cmd_simulate,
    "excursions": _cmd_excursions,
    "moran": _cmd_moran,
    "diffusion": _cmd_diffusion,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bdcat",
        description=(
            "Birth-death processes with killing and catastrophes: solvers, "
            "Siegmund duality, Monte Carlo, and ancestral-graph tables."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="json")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--replicates", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--trunc", type=int, default=None)
        p.add_argument("--strict-paper", action="store_true", dest="strict_paper",
                       help="evaluate the unshifted ancestral-type sums")
        p.add_argument("--lenient", action="store_true",
                       help="warn on unknown config keys instead of failing")
        p.add_argument("--verbose", action="store_true",
                       help="include per-pair discrepancies in duality reports")
        p.add_argument("--log-paths", default=None, dest="log_paths",
                       help="write per-replicate event logs (JSON lines) here")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args)
        return _COMMANDS[args.command](cfg, args)
    except (NoConvergence, QuadratureNoConvergence) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BdcatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

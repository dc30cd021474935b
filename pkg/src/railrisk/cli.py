"""Command-line front end: ``railrisk <subcommand> [options]``.

Exit codes are 0 on success, 1 on usage errors, 2 when the configuration or
inputs fail validation and 3 when a pipeline stage raises.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .fixtures import FIXTURES
from .lgbn import GBNModel
from .lgbn.estimator import FITTERS, GaussianBayesianNetwork
from .lgbn.structure import build_structure
from .predict import (
    SCHEMES,
    ARModel,
    ExperimentConfig,
    fit_ar_model,
    make_supervised,
    run_experiment,
    scaled_split_counts,
    split,
    target_label,
    target_nodes,
    write_plot_data,
)
from .risk import LogisticParams, WeightRule, assess_series, compute_saturations, write_risks_csv
from .simulate import DemandProfile, read_snapshots_csv, run_simulation, write_snapshots_csv
from .topology import DEFAULT_TRANSFER_PENALTY, Network, NetworkError, load_network, network_from_dict, validate_network

log = logging.getLogger("railrisk")

OUTPUT_ENV = "RAILRISK_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_STAGE = 0, 1, 2, 3

CONFIG_KEYS = """\
config keys (JSON object; a flag overrides the key of the same name):
  topology          fixture name (toy, chongqing) or path to a topology JSON
  days              simulated operating days, 64 fifteen-minute slots each
  seed              integer seed of the demand noise
  schemes           list drawn from AR, GBN1, GBN2
  fitter            mle or nnls
  horizon           prediction horizon in slots (1 slot = 15 min)
  train_count       training samples (scaled down with test_count if short)
  test_count        test samples
  output_dir        directory receiving every artifact
  transfer_penalty  routing cost of a line change, in section-equivalents
  sw_scale          multiplier on stranded-passenger saturation (hours)
  profile           base_rate (persons/hour per unit-attraction pair),
                    peak_slots and peak_widths (slots), peak_gains (multipliers),
                    noise_sigma (lognormal sigma), attraction (class -> weight)
  logistic          {"a": slope, "b": offset} of f(x) = 1/(1+exp(-a x + b))
  weight_rule       {"thresholds": [load/capacity fractions],
                     "weights": [consequence per tier, dimensionless]}
"""


class UsageError(Exception):
    pass


class ValidationError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    topology: str = "chongqing"
    days: int = 30
    seed: int = 2023
    schemes: list[str] = field(default_factory=lambda: list(SCHEMES))
    fitter: str = "mle"
    horizon: int = 1
    train_count: int = 1600
    test_count: int = 320
    output_dir: str = ""
    transfer_penalty: float = DEFAULT_TRANSFER_PENALTY
    sw_scale: float = 1.0
    profile: dict = field(default_factory=dict)
    logistic: dict = field(default_factory=dict)
    weight_rule: dict = field(default_factory=dict)

    @classmethod
    def from_sources(cls, path: str | None, overrides: dict) -> "RunConfig":
        doc: dict = {}
        if path:
            try:
                doc = json.loads(Path(path).read_text(encoding="utf-8"))
            except OSError as e:
                raise ValidationError(f"cannot read config {path}: {e}") from e
            except json.JSONDecodeError as e:
                raise ValidationError(f"config {path} is not valid JSON: {e}") from e
            if not isinstance(doc, dict):
                raise ValidationError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        doc.update({k: v for k, v in overrides.items() if v is not None})
        if not doc.get("output_dir"):
            doc["output_dir"] = default_output_dir()
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def need(ok: bool, msg: str):
            if not ok:
                raise ValidationError(msg)

        need(isinstance(self.days, int) and self.days >= 1, "days must be an integer >= 1")
        need(isinstance(self.seed, int), "seed must be an integer")
        need(isinstance(self.horizon, int) and self.horizon >= 1, "horizon must be an integer >= 1")
        need(self.fitter in FITTERS, f"fitter must be one of {', '.join(FITTERS)}")
        need(isinstance(self.schemes, list) and len(self.schemes) > 0, "schemes must be a non-empty list")
        bad = [s for s in self.schemes if s not in SCHEMES]
        need(not bad, f"unknown schemes {bad}; choose from {', '.join(SCHEMES)}")
        need(self.train_count >= 1 and self.test_count >= 1, "train_count and test_count must be >= 1")
        need(self.transfer_penalty >= 0, "transfer_penalty must be >= 0")
        need(self.sw_scale > 0, "sw_scale must be > 0")
        for name, build in (("profile", self.demand_profile), ("logistic", self.logistic_params), ("weight_rule", self.rule)):
            try:
                build()
            except (TypeError, ValueError) as e:
                raise ValidationError(f"{name}: {e}") from e

    def demand_profile(self) -> DemandProfile:
        return DemandProfile.from_dict(self.profile)

    def logistic_params(self) -> LogisticParams:
        return LogisticParams(**self.logistic)

    def rule(self) -> WeightRule:
        kw = {k: tuple(v) for k, v in self.weight_rule.items()}
        return WeightRule(**kw)

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            days=self.days,
            seed=self.seed,
            horizon=self.horizon,
            fitter=self.fitter,
            schemes=tuple(self.schemes),
            train_count=self.train_count,
            test_count=self.test_count,
            transfer_penalty=self.transfer_penalty,
            sw_scale=self.sw_scale,
            profile=self.demand_profile(),
            logistic=self.logistic_params(),
            weight_rule=self.rule(),
        )


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV) or "railrisk_output"


def resolve_network(spec: str) -> Network:
    """Fixture name or topology file, validated."""
    try:
        net = network_from_dict(FIXTURES[spec]()) if spec in FIXTURES else load_network(spec)
    except NetworkError as e:
        detail = "; ".join(e.violations) if e.violations else str(e)
        raise ValidationError(f"invalid topology {spec}: {detail}") from e
    except OSError as e:
        raise ValidationError(f"cannot read topology {spec}: {e}") from e
    problems = validate_network(net)
    if problems:
        raise ValidationError(f"invalid topology {spec}: " + "; ".join(problems))
    return net


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{what} not found: {path}")
    return p


def _stage(name: str, fn: Callable, *args, **kwargs):
    log.info("stage %s", name)
    try:
        return fn(*args, **kwargs)
    except (ValidationError, UsageError):
        raise
    except Exception as e:  # surfaced with the stage name
        raise StageError(name, e) from e


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValidationError(f"cannot create output directory {out}: {e}") from e
    return out


def _load_any_model(path: str):
    doc = json.loads(_require_file(path, "model").read_text(encoding="utf-8"))
    if doc.get("scheme") == "AR":
        return "AR", ARModel.from_dict(doc)
    model = GBNModel.from_dict(doc)
    lags = 2 if any(n.endswith(":t1") for n in model.structure.roots) else 1
    return f"GBN{lags}", model


def _risks_and_sats(net: Network, cfg: RunConfig, flows):
    risks = assess_series(flows, net, cfg.rule(), cfg.logistic_params(), cfg.sw_scale)
    sats = [compute_saturations(f, net) for f in flows]
    return risks, sats


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_fixture(args) -> int:
    out = Path(args.output) if args.output else Path(default_output_dir()) / f"topology_{args.scale}.json"
    doc = FIXTURES[args.scale]()
    problems = validate_network(network_from_dict(doc))
    if problems:
        raise StageError("gen-fixture", ValueError("; ".join(problems)))
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise StageError("gen-fixture", e) from e
    print(out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    net = resolve_network(cfg.topology)
    out = _out_dir(cfg) / "snapshots.csv"
    flows = _stage("simulate", run_simulation, net, cfg.demand_profile(), cfg.days, cfg.seed, cfg.transfer_penalty)
    _stage("write-snapshots", write_snapshots_csv, flows, out)
    print(out)
    return EXIT_OK


def cmd_assess(args) -> int:
    cfg = _config(args)
    net = resolve_network(cfg.topology)
    snap = _require_file(args.snapshots, "snapshots")
    out = _out_dir(cfg) / "risks.csv"
    flows = _stage("read-snapshots", read_snapshots_csv, snap)
    risks = _stage("assess", assess_series, flows, net, cfg.rule(), cfg.logistic_params(), cfg.sw_scale)
    _stage("write-risks", write_risks_csv, risks, out)
    print(out)
    return EXIT_OK


def _train_one(net: Network, cfg: RunConfig, scheme: str, risks, sats):
    ds = make_supervised(risks, sats, scheme, cfg.horizon)
    n_train, n_test = scaled_split_counts(len(ds), cfg.train_count, cfg.test_count)
    train, _ = split(ds, n_train, n_test)
    if scheme == "AR":
        return fit_ar_model(train)
    structure = build_structure(net, lags=1 if scheme == "GBN1" else 2)
    return GaussianBayesianNetwork(structure, fitter=cfg.fitter).fit(train.training_frame()).model_


def cmd_train(args) -> int:
    cfg = _config(args)
    net = resolve_network(cfg.topology)
    snap = _require_file(args.snapshots, "snapshots")
    out = _out_dir(cfg)
    flows = _stage("read-snapshots", read_snapshots_csv, snap)
    risks, sats = _stage("assess", _risks_and_sats, net, cfg, flows)
    models = {s: _stage(f"train-{s}", _train_one, net, cfg, s, risks, sats) for s in cfg.schemes}
    for s, m in models.items():
        path = out / f"model_{s.lower()}.json"
        _stage("write-model", m.save, path)
        print(path)
    return EXIT_OK


def _predict_frame(net: Network, cfg: RunConfig, scheme: str, model, risks, sats):
    ds = make_supervised(risks, sats, scheme, cfg.horizon)
    targets = target_nodes(net)
    if scheme == "AR":
        pred = model.predict(ds.inputs)[targets]
    else:
        pred = GaussianBayesianNetwork.from_model(model, cfg.fitter).predict(ds.inputs, nodes=targets)
    return ds.target_slots, targets, pred


def cmd_predict(args) -> int:
    cfg = _config(args)
    net = resolve_network(cfg.topology)
    snap = _require_file(args.snapshots, "snapshots")
    try:
        scheme, model = _load_any_model(args.model)
    except (ValueError, KeyError) as e:
        raise ValidationError(f"cannot parse model {args.model}: {e}") from e
    out = _out_dir(cfg) / f"predictions_{scheme.lower()}.csv"
    flows = _stage("read-snapshots", read_snapshots_csv, snap)
    risks, sats = _stage("assess", _risks_and_sats, net, cfg, flows)
    slots, targets, pred = _stage("predict", _predict_frame, net, cfg, scheme, model, risks, sats)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot"] + [target_label(t) for t in targets])
        for k, slot in enumerate(slots):
            w.writerow([int(slot)] + [f"{pred[t].iloc[k]:.6f}" for t in targets])
    print(out)
    return EXIT_OK


def _write_report(result, out: Path) -> None:
    result.report.write_json(out / "report.json")
    result.report.write_csv(out / "report.csv")
    write_plot_data(result, out / "plot_data.csv")


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    net = resolve_network(cfg.topology)
    snap = _require_file(args.snapshots, "snapshots")
    exp = cfg.experiment()
    out = _out_dir(cfg)
    flows = _stage("read-snapshots", read_snapshots_csv, snap)
    result = _stage("evaluate", run_experiment, net, exp, flows)
    _stage("write-report", _write_report, result, out)
    print(result.report.format_table())
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    net = resolve_network(cfg.topology)
    exp = cfg.experiment()
    out = _out_dir(cfg)
    flows = _stage("simulate", run_simulation, net, exp.profile, exp.days, exp.seed, exp.transfer_penalty)
    result = _stage("experiment", run_experiment, net, exp, flows)

    def write_all():
        write_snapshots_csv(result.snapshots, out / "snapshots.csv")
        write_risks_csv(result.risks, out / "risks.csv")
        for scheme, m in result.models.items():
            (m if scheme == "AR" else m.model_).save(out / f"model_{scheme.lower()}.json")
        _write_report(result, out)
        (out / "config.json").write_text(json.dumps(exp.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    _stage("write-outputs", write_all)
    print(result.report.format_table())
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        scheme, model = _load_any_model(args.model)
    except (ValueError, KeyError) as e:
        raise ValidationError(f"cannot parse model {args.model}: {e}") from e
    node = args.node
    if scheme == "AR":
        known = list(model.coefficients)
        if node not in model.coefficients:
            raise ValidationError(_unknown(node, known))
        c0, c1, c2 = model.coefficients[node]
        print(f"{node}  (AR)  c0={c0:.6g}")
        rows = sorted([(f"{node}@t0", c1), (f"{node}@t1", c2)], key=lambda r: -r[1])
        _print_rows(rows)
        return EXIT_OK
    st = model.structure
    if node not in st.parents:
        raise ValidationError(_unknown(node, list(st.nodes)))
    if not st.parents[node]:
        print("root node: no CPD, sample mean/variance shown")
        mean, var = model.root_stats.get(node, (float("nan"), float("nan")))
        print(f"{node}  mean={mean:.6g}  variance={var:.6g}")
        return EXIT_OK
    cpd = model.cpds[node]
    print(f"{node}  beta0={cpd.beta0:.6g}  sigma2={cpd.sigma2:.6g}")
    order = np.argsort(-np.asarray(cpd.beta), kind="stable")
    _print_rows([(cpd.parent_order[k], float(cpd.beta[k])) for k in order])
    return EXIT_OK


def _unknown(node: str, known: Sequence[str]) -> str:
    near = difflib.get_close_matches(node, known, n=5, cutoff=0.5)
    hint = f"; did you mean: {', '.join(near)}" if near else ""
    return f"unknown node {node!r}{hint}"


def _print_rows(rows) -> None:
    width = max(len(p) for p, _ in rows)
    print("parent".ljust(width) + "  coefficient")
    for p, b in rows:
        print(f"{p.ljust(width)}  {b: .6g}")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _config(args) -> RunConfig:
    overrides = {
        "topology": getattr(args, "topology", None),
        "days": getattr(args, "days", None),
        "seed": getattr(args, "seed", None),
        "fitter": getattr(args, "fitter", None),
        "horizon": getattr(args, "horizon", None),
        "schemes": getattr(args, "scheme", None),
        "output_dir": getattr(args, "output_dir", None),
    }
    return RunConfig.from_sources(getattr(args, "config", None), overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="railrisk", description="Rail transit capacity risk simulation and prediction.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_, run_opts=True):
        p = sub.add_parser(name, help=help_, description=help_, epilog=CONFIG_KEYS if run_opts else None,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(func=fn)
        if run_opts:
            p.add_argument("--config", help="JSON run configuration")
            p.add_argument("--topology", help="fixture name or topology JSON path")
            p.add_argument("--output-dir", dest="output_dir", help=f"output directory (default ${OUTPUT_ENV} or ./railrisk_output)")
            p.add_argument("--seed", type=int, help="demand noise seed")
            p.add_argument("--days", type=int, help="simulated days (64 slots each)")
            p.add_argument("--scheme", action="append", choices=SCHEMES, help="scheme to run; repeat for several")
            p.add_argument("--fitter", choices=FITTERS, help="CPD fitting method")
            p.add_argument("--horizon", type=int, help="prediction horizon in 15-minute slots")
        return p

    p = add("gen-fixture", cmd_gen_fixture, "write a built-in topology as JSON", run_opts=False)
    p.add_argument("--scale", choices=sorted(FIXTURES), default="chongqing")
    p.add_argument("-o", "--output", help=f"output file (default <${OUTPUT_ENV}>/topology_<scale>.json)")

    add("simulate", cmd_simulate, "simulate flows and write snapshots.csv")
    p = add("assess", cmd_assess, "compute risks from snapshots and write risks.csv")
    p.add_argument("--snapshots", required=True)
    p = add("train", cmd_train, "fit one model per scheme and write model_<scheme>.json")
    p.add_argument("--snapshots", required=True)
    p = add("predict", cmd_predict, "predict line and global risk from snapshots with a saved model")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--model", required=True)
    p = add("evaluate", cmd_evaluate, "score every scheme on snapshots and write report files")
    p.add_argument("--snapshots", required=True)
    add("pipeline", cmd_pipeline, "simulate, assess, train, predict and report in one run")
    p = add("inspect", cmd_inspect, "print the CPD of one node of a saved model", run_opts=False)
    p.add_argument("--model", required=True)
    p.add_argument("--node", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as e:
        print(f"railrisk: invalid input: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as e:
        print(f"railrisk: {e}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: ingest, validate, train, evaluate, forecast, explain and
scenario.  Settings come from flags, optionally backed by a TOML file
(``--config``); flags win.  Every report carries the digest of the data it
read and of the settings that shape its content, and nothing that varies
between runs (timestamps, worker counts), so reruns are byte-identical.

Exit codes: 0 on success, 1 for domain errors, 2 for I/O or schema errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

from . import dataset as ds
from .errors import (
    DataError,
    InsufficientHistory,
    MedalForestError,
    MissingFile,
    SchemaViolation,
    UnknownNation,
)
from .evaluate import (
    PAPER_PROTOCOL_YEARS,
    EvaluationPlan,
    run_evaluation,
    scenario_delta,
    scenario_to_csv,
    scenario_to_text,
)
from .explain import (
    dumps_report,
    explanation_report,
    forest_shap,
    forest_shap_values,
    global_importance_matrix,
    report_to_text,
)
from .preprocess import build_design_matrix, fill_panel, fit_encoding_context, read_panel_csv, write_panel_csv
from .twostage import CLASSIFIER_TREES, REGRESSOR_TREES, TwoStageModel, fit_two_stage, forecast_games

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("medalforest")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    data: str | None = None
    seed: int = 0
    target_year: tuple = ()
    scenario: str = "actual"
    workers: int = 1
    format: str = "text"
    out: str | None = None
    trees_classifier: int = CLASSIFIER_TREES
    trees_regressor: int = REGRESSOR_TREES
    top_k: int = 17
    ci_pad: int = 2
    top_k_rank: str = "actual"
    zero_ci: str = "pad"
    regressor_rows: str = "actual"
    baselines: tuple = ()
    model: str | None = None
    nation: str | None = None

    def digest(self, fields):
        """Digest of the settings in ``fields`` (those that shape the output)."""
        payload = {f: _jsonable(getattr(self, f)) for f in sorted(fields)}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


# settings each command's output depends on
_MODEL_FIELDS = ("seed", "trees_classifier", "trees_regressor", "regressor_rows")
_EVAL_FIELDS = _MODEL_FIELDS + ("target_year", "top_k", "ci_pad", "top_k_rank", "zero_ci", "baselines")


def _year_list(text):
    if isinstance(text, int):
        return (text,)
    if isinstance(text, (list, tuple)):
        return tuple(int(y) for y in text)
    return tuple(int(y) for y in str(text).split(",") if y.strip())


def _name_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(text)
    return tuple(s.strip() for s in str(text).split(",") if s.strip())


_CONVERTERS = {
    "seed": int, "workers": int, "trees_classifier": int, "trees_regressor": int,
    "top_k": int, "ci_pad": int, "target_year": _year_list, "baselines": _name_list,
}


def build_config(args):
    """Merge built-in defaults, the optional TOML file and explicit flags."""
    values = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, "rb") as fh:
                values.update({k.replace("-", "_"): v for k, v in tomllib.load(fh).items()})
        except FileNotFoundError:
            raise MissingFile(args.config) from None
        except tomllib.TOMLDecodeError as exc:
            raise SchemaViolation(args.config, 0, str(exc)) from None
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise SchemaViolation(args.config, 0, f"unknown settings {unknown}")
    for name in known:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    for name, conv in _CONVERTERS.items():
        if name in values:
            values[name] = conv(values[name])
    if "scenario" in values:
        values["scenario"] = values["scenario"].replace("-", "_")
    return RunConfig(**values)


# ---------------------------------------------------------------------------
# Data access


@dataclasses.dataclass
class Panel:
    records: list
    events: dict
    digest: str
    raw: ds.RawDataset | None = None


def _map(raw, data_dir):
    mapping = Path(data_dir) / "mapping.csv"
    if mapping.is_file():
        raw = ds.apply_nation_mapping(raw, ds.load_mapping_rules(mapping))
    return raw


def load_panel(path):
    """Filled records from a raw input directory or a filled-panel CSV."""
    if path is None:
        raise DataError("no data given; pass --data")
    p = Path(path)
    if p.is_dir():
        raw = fill_panel(_map(ds.load_dataset(p), p))
        return Panel(list(raw.records), dict(raw.events_per_games), raw.digest(), raw)
    if not p.is_file():
        raise MissingFile(str(path))
    records, events = read_panel_csv(p)
    return Panel(records, events, hashlib.sha256(p.read_bytes()).hexdigest())


def _emit(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _header_lines(meta):
    return [f"# {k}: {_jsonable(v)}" for k, v in meta.items()]


def _load_model(cfg):
    if not cfg.model:
        raise DataError("no model given; pass --model")
    path = Path(cfg.model)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
        return TwoStageModel.from_dict(d), d
    except (ValueError, KeyError) as exc:
        raise SchemaViolation(path.name, 0, f"not a model file: {exc}") from None


def _target(cfg, model_dict=None):
    if cfg.target_year:
        return cfg.target_year[0]
    if model_dict is not None:
        return model_dict["target_year"]
    raise DataError("no target year given; pass --target-year")


def _slice(panel, year, model):
    recs = [r for r in panel.records if r.games_year == year]
    if not recs:
        raise InsufficientHistory(f"no nations listed for Games {year}")
    if year not in panel.events:
        raise SchemaViolation("events.csv", 0, f"no event count for Games {year}")
    ctx = model.ctx
    missing = year not in ctx.global_gdp_by_year
    if missing or (year not in ctx.global_gdp_precovid_by_year):
        # world GDP totals are known before the Games; add them if absent
        extra = fit_encoding_context(recs)
        gdp = dict(ctx.global_gdp_by_year)
        pre = dict(ctx.global_gdp_precovid_by_year)
        gdp.setdefault(year, extra.global_gdp_by_year[year])
        if year in extra.global_gdp_precovid_by_year:
            pre.setdefault(year, extra.global_gdp_precovid_by_year[year])
        model = dataclasses.replace(model, ctx=dataclasses.replace(ctx, global_gdp_by_year=gdp,
                                                                   global_gdp_precovid_by_year=pre))
    return recs, model, 3 * panel.events[year]


# ---------------------------------------------------------------------------
# Commands


def cmd_ingest(cfg):
    if not cfg.data or not Path(cfg.data).is_dir():
        raise MissingFile(cfg.data or "--data")
    raw = _map(ds.load_dataset(cfg.data), cfg.data)
    report = ds.validate_dataset(raw)
    filled = fill_panel(raw)
    out = Path(cfg.out) if cfg.out else Path("panel.csv")
    write_panel_csv(filled, out)
    meta = {"data_digest": filled.digest(), "panel": str(out)}
    if cfg.format == "json":
        _emit(json.dumps({**report.to_dict(), **meta}, indent=2, sort_keys=True), None)
    else:
        _emit(report.to_text() + "\n" + "\n".join(f"{k}: {v}" for k, v in meta.items()), None)
    return 0


def cmd_validate(cfg):
    if not cfg.data or not Path(cfg.data).is_dir():
        raise MissingFile(cfg.data or "--data")
    raw = _map(ds.load_dataset(cfg.data), cfg.data)
    report = ds.validate_dataset(raw)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) if cfg.format == "json" else report.to_text()
    _emit(text, cfg.out)
    return 0


def cmd_train(cfg):
    panel = load_panel(cfg.data)
    target = _target(cfg)
    train = [r for r in panel.records if r.games_year < target and r.medals is not None]
    if not train:
        raise InsufficientHistory(f"no Games before {target} to train on")
    extra = [r for r in panel.records if r.games_year == target]
    ctx = fit_encoding_context(train, extra)
    years = sorted({r.games_year for r in train})
    matrix = build_design_matrix(train, years, ctx)
    model = fit_two_stage(matrix, ctx, seed=cfg.seed, n_trees_classifier=cfg.trees_classifier,
                          n_trees_regressor=cfg.trees_regressor, regressor_rows=cfg.regressor_rows,
                          workers=cfg.workers)
    d = model.to_dict()
    d.update(target_year=target, data_digest=panel.digest, config_digest=cfg.digest(_MODEL_FIELDS))
    text = json.dumps(d, sort_keys=True, separators=(",", ":"))
    out = cfg.out or "model.json"
    Path(out).write_text(text, encoding="utf-8")
    print(f"model: {out}  trained on {len(train)} rows through {model.trained_through}; "
          f"{model.classifier.n_trees} classifier trees, {model.regressor.n_trees} regressor trees")
    return 0


def cmd_evaluate(cfg):
    panel = load_panel(cfg.data)
    plan = EvaluationPlan(
        target_games=cfg.target_year or PAPER_PROTOCOL_YEARS, seed=cfg.seed,
        n_trees_classifier=cfg.trees_classifier, n_trees_regressor=cfg.trees_regressor,
        workers=cfg.workers, ci_pad=cfg.ci_pad, top_k=cfg.top_k, top_k_rank_by=cfg.top_k_rank,
        zero_forecast_ci=cfg.zero_ci, regressor_rows=cfg.regressor_rows, baselines=cfg.baselines,
    )
    report = run_evaluation(panel.records, panel.events, plan, panel.digest)
    cfg_digest = cfg.digest(_EVAL_FIELDS)
    if cfg.format == "json":
        d = report.to_dict()
        d["config_digest"] = cfg_digest
        text = json.dumps(d, indent=2, sort_keys=True)
    elif cfg.format == "csv":
        text = "\n".join(_header_lines({"data_digest": panel.digest, "config_digest": cfg_digest})) + "\n"
        text += report.to_csv()
    else:
        text = report.to_text() + f"\nconfig digest: {cfg_digest}"
    _emit(text, cfg.out)
    return 0


FORECAST_COLUMNS = ("rank", "nation", "medals", "raw", "ci_low", "ci_high", "gate_open")


def _forecast_text(rows, meta):
    lines = [f"{'rank':>4s}  {'nation':8s} {'medals':>6s}  {'95% interval':>17s}"]
    for rank, f in enumerate(rows, start=1):
        ci = "0 medals, no CI" if f.ci_low is None else f"[{f.ci_low:7.2f}, {f.ci_high:7.2f}]"
        lines.append(f"{rank:>4d}  {f.nation:8s} {f.medals:>6d}  {ci:>17s}")
    lines.append("")
    lines.extend(f"{k}: {_jsonable(v)}" for k, v in meta.items())
    return "\n".join(lines)


def cmd_forecast(cfg):
    model, md = _load_model(cfg)
    panel = load_panel(cfg.data)
    year = _target(cfg, md)
    recs, model, total = _slice(panel, year, model)
    matrix = build_design_matrix(recs, [year], model.ctx, cfg.scenario)
    rows, scale = forecast_games(model, matrix, total, cfg.scenario)
    meta = {"games_year": year, "scenario": cfg.scenario, "total_medals": total, "scale": scale,
            "data_digest": panel.digest, "model_digest": _model_digest(md)}
    if cfg.format == "json":
        text = json.dumps({**meta, "forecasts": [{"rank": i, **f.to_dict()} for i, f in enumerate(rows, 1)]},
                          indent=2, sort_keys=True)
    elif cfg.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FORECAST_COLUMNS)
        for i, f in enumerate(rows, 1):
            w.writerow([i, f.nation, f.medals, repr(f.raw), "" if f.ci_low is None else repr(f.ci_low),
                        "" if f.ci_high is None else repr(f.ci_high), int(f.gate_open)])
        text = "\n".join(_header_lines(meta)) + "\n" + buf.getvalue()
    else:
        text = _forecast_text(rows, meta)
    _emit(text, cfg.out)
    return 0


def _model_digest(md):
    return hashlib.sha256(json.dumps(md, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def cmd_explain(cfg):
    model, md = _load_model(cfg)
    panel = load_panel(cfg.data)
    year = _target(cfg, md)
    recs, model, total = _slice(panel, year, model)
    matrix = build_design_matrix(recs, [year], model.ctx, cfg.scenario)
    rows, scale = forecast_games(model, matrix, total, cfg.scenario, with_ci=False)
    meta = {"data_digest": panel.digest, "model_digest": _model_digest(md)}
    if cfg.nation:
        nations = [n for n, _ in matrix.keys]
        if cfg.nation not in nations:
            raise UnknownNation(f"{cfg.nation} is not listed for Games {year}")
        j = nations.index(cfg.nation)
        fc = next(f for f in rows if f.nation == cfg.nation)
        attribution = forest_shap(model.regressor, matrix.X[j]) if fc.gate_open else None
        report = explanation_report(cfg.nation, cfg.scenario, attribution, scale, year)
        report["forecast_medals"] = fc.medals
        report.update(meta)
        text = dumps_report(report) if cfg.format == "json" else report_to_text(report, cfg.top_k)
    else:
        # global view: rows the gate lets through
        keep = [j for j, (n, _) in enumerate(matrix.keys) if next(f for f in rows if f.nation == n).gate_open]
        _, phi = forest_shap_values(model.regressor, matrix.X[keep])
        ranked = global_importance_matrix(phi, model.regressor.feature_names, cfg.top_k)
        report = {"games_year": year, "scenario": cfg.scenario, "n_rows": len(keep),
                  "importance": [{"feature": f, "mean_abs_shap": v} for f, v in ranked], **meta}
        if cfg.format == "json":
            text = json.dumps(report, indent=2, sort_keys=True)
        else:
            lines = [f"mean |SHAP| over {len(keep)} medal-gated nations, Games {year} ({cfg.scenario})"]
            lines += [f"  {i:>2d}. {f:<40s} {v:.4f}" for i, (f, v) in enumerate(ranked, 1)]
            lines += [f"{k}: {v}" for k, v in meta.items()]
            text = "\n".join(lines)
    _emit(text, cfg.out)
    return 0


def cmd_scenario(cfg):
    model, md = _load_model(cfg)
    panel = load_panel(cfg.data)
    year = _target(cfg, md)
    recs, model, total = _slice(panel, year, model)
    rows = scenario_delta(model, recs, year, total)
    meta = {"games_year": year, "total_medals": total, "data_digest": panel.digest,
            "model_digest": _model_digest(md)}
    if cfg.format == "json":
        text = json.dumps({**meta, "rows": [r.to_dict() for r in rows]}, indent=2, sort_keys=True)
    elif cfg.format == "csv":
        text = "\n".join(_header_lines(meta)) + "\n" + scenario_to_csv(rows)
    else:
        text = scenario_to_text(rows) + "\n\n" + "\n".join(f"{k}: {v}" for k, v in meta.items())
    _emit(text, cfg.out)
    return 0


COMMANDS = {
    "ingest": (cmd_ingest, "load, map, validate and fill raw CSVs; write the filled panel"),
    "validate": (cmd_validate, "report missing cells and invariant breaches"),
    "train": (cmd_train, "fit the two-stage model on Games before --target-year"),
    "evaluate": (cmd_evaluate, "expanding-window accuracy report"),
    "forecast": (cmd_forecast, "ranked medal forecast with intervals"),
    "explain": (cmd_explain, "SHAP attribution for --nation, or global importance"),
    "scenario": (cmd_scenario, "observed vs no-COVID forecast deltas"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", help="raw input directory or filled-panel CSV")
    common.add_argument("--config", help="TOML file with default settings")
    common.add_argument("--seed", type=int)
    common.add_argument("--target-year", dest="target_year",
                        help="Games year (comma-separated list for evaluate)")
    common.add_argument("--scenario", choices=["actual", "no-covid", "no_covid"])
    common.add_argument("--workers", type=int)
    common.add_argument("--format", choices=["csv", "json", "text"])
    common.add_argument("--out")
    common.add_argument("--trees-classifier", dest="trees_classifier", type=int)
    common.add_argument("--trees-regressor", dest="trees_regressor", type=int)
    common.add_argument("--top-k", dest="top_k", type=int)
    common.add_argument("--ci-pad", dest="ci_pad", type=int)
    common.add_argument("--top-k-rank", dest="top_k_rank", choices=["actual", "predicted"])
    common.add_argument("--zero-ci", dest="zero_ci", choices=["pad", "exclude"],
                        help="how zero-forecast nations enter interval coverage")
    common.add_argument("--regressor-rows", dest="regressor_rows", choices=["actual", "predicted"])
    common.add_argument("--baselines", help="comma list of extra stage-2 baselines: linear,tree")
    common.add_argument("--model", help="model file written by train")
    common.add_argument("--nation")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="medalforest", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return COMMANDS[args.command][0](cfg)
    except DataError as exc:
        print(_message(exc), file=sys.stderr)
        return 2
    except MedalForestError as exc:
        print(_message(exc), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"IOError: {exc}", file=sys.stderr)
        return 2


def _message(exc):
    text = str(exc)
    name = type(exc).__name__
    return text if text.startswith(name) else f"{name}: {text}"


if __name__ == "__main__":
    sys.exit(main())

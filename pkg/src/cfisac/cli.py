"""Command-line entry point: ``cfisac <subcommand> [options]``.

Every subcommand takes an optional YAML config (``--config``), dotted
overrides (``--set campaign.trials=50``) and an output run directory
(``--out``). The resolved config is written to ``<out>/config.yaml`` next to
the results, and all outputs are deterministic given the config.
"""
from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import logging
import sys
from pathlib import Path

import yaml

from . import harness
from .classifier import NoiseConfig, build_dataset, evaluate, train
from .localization import fused_to_csv
from .scenario import ScenarioConfig, generate_scenario, save_scenario
from .sensing import params_to_csv

log = logging.getLogger("cfisac")

DEFAULTS = {
    "campaign": harness.CampaignConfig().to_dict(),
    "classifier": {
        "n_samples_per_rru": 8000,
        "n_symbols": 1000,
        "impairment_scale": 0.4,
        "kind": "nearest-centroid",
        "path_noise": 0.01,
        "leakage": 0.0,
        "seed": 0,
        "save_dataset": False,
    },
    "compare": {"sigma_range": 0.5, "accuracy": 0.9},
}


class UsageError(Exception):
    pass


def _merge(base, extra, path=""):
    for key, value in (extra or {}).items():
        if key not in base:
            raise UsageError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise UsageError(f"config key {path + key!r} expects a mapping")
            _merge(base[key], value, path + key + ".")
        else:
            base[key] = value
    return base


def _set(cfg, dotted):
    if "=" not in dotted:
        raise UsageError(f"--set expects key=value, got {dotted!r}")
    key, raw = dotted.split("=", 1)
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise UsageError(f"unknown config key {key!r}")
        node = node[part]
    if parts[-1] not in node:
        raise UsageError(f"unknown config key {key!r}")
    node[parts[-1]] = yaml.safe_load(raw)


def load_config(args):
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            doc = yaml.safe_load(Path(args.config).read_text()) or {}
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a mapping")
        _merge(cfg, doc)
    for item in args.set or []:
        _set(cfg, item)
    if args.seed is not None:
        cfg["campaign"]["seed"] = args.seed
        cfg["classifier"]["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        cfg["campaign"]["trials"] = args.trials
    return cfg


def _campaign(cfg):
    return harness.CampaignConfig.from_dict(cfg["campaign"])


def _write(out: Path, name, text):
    path = out / name
    path.write_text(text)
    log.info("wrote %s", path)
    return path


def _prepare_out(args, cfg):
    out = Path(args.out or Path("runs") / args.command)
    out.mkdir(parents=True, exist_ok=True)
    _write(out, "config.yaml", yaml.safe_dump(cfg, sort_keys=True))
    return out


def cmd_gen_scenario(args, cfg, out):
    scfg = ScenarioConfig.from_dict(cfg["campaign"]["scenario"])
    seed = cfg["campaign"]["seed"]
    scenario = generate_scenario(scfg, seed)
    save_scenario(scenario, out / "scenario.yaml", scfg)
    print(f"scenario: {len(scenario.rrus)} RRUs ({len(scenario.downlink_ids)} downlink), "
          f"{len(scenario.static_reflectors)} static + {len(scenario.mobile_reflectors)} mobile reflectors")


def cmd_simulate(args, cfg, out):
    camp = _campaign(cfg)
    sigma = args.sigma_range if args.sigma_range is not None else camp.sigma_ranges[0]
    acc = args.accuracy if args.accuracy is not None else None
    result, info = harness.run_trial(camp, args.trial, sigma, acc, details=True)
    save_scenario(info["scenario"], out / "scenario.yaml", camp.scenario)
    _write(out, "hypotheses.csv", params_to_csv([h.params for h in info["hypotheses"]]))
    _write(out, "fused.csv", fused_to_csv(info["fused"]))
    doc = {k: v for k, v in dataclasses.asdict(result).items() if k != "elapsed"}
    doc["errors"] = list(doc["errors"])
    doc["matched_ids"] = list(doc["matched_ids"])
    _write(out, "trial.json", harness.dump_json(doc))
    print(f"trial {result.trial}: mode {result.mode}, sigma_range {result.sigma_range} m, "
          f"accuracy {result.accuracy}, idle {result.idle}")
    print(f"  hypotheses {result.n_hypotheses} (correct source {result.n_correct}), "
          f"LOS-rejected {result.n_los_rejected}, outliers {result.n_outliers}")
    print(f"  fused {len(info['fused'])}, matched {len(result.errors)}, misses {result.misses}, "
          f"false alarms {result.false_alarms}")
    for rid, err in zip(result.matched_ids, result.errors):
        print(f"  reflector {rid}: eps_p = {err:.4f} m")


def cmd_train_classifier(args, cfg, out):
    ccfg = cfg["classifier"]
    scfg = ScenarioConfig.from_dict(cfg["campaign"]["scenario"])
    scenario = generate_scenario(scfg, ccfg["seed"])
    dataset = build_dataset(scenario, ccfg["n_samples_per_rru"], ccfg["n_symbols"], ccfg["impairment_scale"],
                            NoiseConfig(path_noise=ccfg["path_noise"]), seed=ccfg["seed"],
                            leakage=ccfg["leakage"])
    model = train(dataset, ccfg["kind"], seed=ccfg["seed"])
    report = evaluate(model, dataset)
    _write(out, "model.json", model.to_json() + "\n")
    _write(out, "report.json", harness.dump_json(report.to_dict()))
    _write(out, "report.txt", report.table() + "\n")
    if ccfg.get("save_dataset"):
        _write(out, "dataset.json", dataset.to_json() + "\n")
    print(report.table())


def _write_campaign(out, reports, summary):
    points = "".join(r.points_csv() if i == 0 else r.points_csv().split("\n", 1)[1]
                     for i, r in enumerate(reports))
    errors = "".join(r.errors_csv() if i == 0 else r.errors_csv().split("\n", 1)[1]
                     for i, r in enumerate(reports))
    _write(out, "points.csv", points)
    _write(out, "errors.csv", errors)
    _write(out, "summary.json", harness.dump_json(summary))


def _num(v):
    return "nan" if v is None else f"{v:.3f}"


def _points_table(points):
    lines = [f"{'mode':6} {'sigma_r':>8} {'acc':>6} {'n':>6} {'mean':>8} {'median':>8} {'p90':>8} "
             f"{'miss':>6} {'FA':>5}"]
    for p in points:
        acc = "-" if p["accuracy"] is None else f"{p['accuracy']:.2f}"
        lines.append(f"{p['mode']:6} {p['sigma_range']:8.3f} {acc:>6} {p['n_errors']:6d} {_num(p['mean_error']):>8} "
                     f"{_num(p['median_error']):>8} {_num(p['p90_error']):>8} {p['misses']:6d} {p['false_alarms']:5d}")
    return "\n".join(lines)


def cmd_sweep(args, cfg, out):
    report = harness.run_campaign(_campaign(cfg))
    summary = report.summary()
    _write_campaign(out, [report], summary)
    print(_points_table(summary["points"]))


def cmd_compare(args, cfg, out):
    camp = _campaign(cfg)
    multi, single = harness.compare_modes(camp, cfg["compare"]["sigma_range"], cfg["compare"]["accuracy"])
    summary = harness.comparison_summary(multi, single)
    _write_campaign(out, [multi, single], summary)
    print(_points_table([summary["multi"], summary["single"]]))
    print(f"median ratio multi/single: {summary['median_ratio']}")


def cmd_report(args, cfg, out):
    run = Path(args.run)
    try:
        summary = json.loads((run / "summary.json").read_text())
    except OSError as exc:
        raise UsageError(f"no summary.json in {run}: {exc}") from exc
    if "points" in summary:
        text = _points_table(summary["points"])
    elif "multi" in summary:
        text = _points_table([summary["multi"], summary["single"]])
        text += f"\nmedian ratio multi/single: {summary['median_ratio']}"
    else:
        raise UsageError(f"{run / 'summary.json'} is not a campaign summary")
    _write(out, "report.txt", text + "\n")
    print(text)


COMMANDS = {
    "gen-scenario": cmd_gen_scenario,
    "simulate": cmd_simulate,
    "train-classifier": cmd_train_classifier,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="cfisac", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("gen-scenario", "sample a scenario and write it as YAML"),
        ("simulate", "run one trial and dump its intermediate results"),
        ("train-classifier", "build a fingerprint dataset, train and evaluate a classifier"),
        ("sweep", "error-injection sweep over sigma_range x classifier accuracy"),
        ("compare", "multi-RRU versus single-downlink comparison on shared seeds"),
        ("report", "tabulate the summary of an earlier sweep or compare run"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="run directory (default runs/<command>)")
        if name in ("sweep", "compare", "simulate"):
            p.add_argument("--trials", type=int)
        if name == "simulate":
            p.add_argument("--trial", type=int, default=0, help="trial index")
            p.add_argument("--sigma-range", type=float)
            p.add_argument("--accuracy", type=float)
        if name == "report":
            p.add_argument("run", help="run directory holding summary.json")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        out = _prepare_out(args, cfg)
        COMMANDS[args.command](args, cfg, out)
    except (UsageError, ValueError, KeyError, TypeError, harness.TrialError) as exc:
        print(f"cfisac {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

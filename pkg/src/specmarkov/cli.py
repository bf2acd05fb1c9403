"""Command-line entry point: ``specmarkov <command> ...``.

Commands: gen, ingest, train, finetune, eval, sweep-l, compare.
Exit codes: 0 success, 2 configuration/usage error, 3 data error,
4 numerical divergence. Errors are also reported on stderr as one JSON line.
"""

import argparse
import copy
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema

from . import evaluation, finetune, markov, mlp, statespace, traffic
from .errors import ConfigError, DataError, DivergenceError

OUTPUT_ENV = "SPECMARKOV_OUTPUT_DIR"

DEFAULTS = {
    "name": "experiment",
    "seed": 0,
    "state_space": {"variant": "smart", "order": 20, "max_states": None},
    "predictor": "markov",
    "finetune": {},
    "mlp": {},
    "horizons": 150,
    "stride": 1,
    "allow_same_trace": False,
}


def load_schema():
    text = resources.files("specmarkov").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_set(item):
    if "=" not in item:
        raise ConfigError(f"--set expects key.path=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    out = {}
    node = out
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return out


def resolve_config(path=None, overrides=()):
    """Defaults < config file < flag overrides, validated against the schema."""
    user = {}
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            user = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        base_dir = path.resolve().parent
    for item in overrides:
        user = _merge(user, item)
    schema = load_schema()
    try:
        jsonschema.validate(user, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    cfg = _merge(DEFAULTS, user)
    cfg.setdefault("output_dir", os.environ.get(OUTPUT_ENV, "specmarkov-out"))
    if cfg.get("sensing") is None:
        cfg["sensing"] = cfg["state_space"]["order"]
    for key in ("train", "test"):
        src = cfg.get(key)
        if src and "file" in src and not Path(src["file"]).is_absolute():
            src["file"] = str(base_dir / src["file"])
    cfg["_base_dir"] = str(base_dir)
    return cfg


def public_config(cfg):
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def load_source(src, seed, name):
    if src is None:
        raise ConfigError(f"config has no '{name}' traffic source")
    if "synthetic" in src:
        s = src["synthetic"]
        spec = traffic.SyntheticSpec(
            block_size=s["block_size"], n_slots=s["n_slots"],
            start_state=s.get("start_state", 1), outlier_rate=s.get("outlier_rate", 0.0),
            rng_seed=s.get("seed", seed))
        return traffic.generate_synthetic(spec)
    return traffic.load_trace(src["file"], src.get("format", "binary-lines"),
                              threshold=src.get("threshold"))


def build_space(cfg, train):
    ss = cfg["state_space"]
    if ss["variant"] == "full":
        return statespace.build_full(ss["order"])
    if ss["variant"] == "simple":
        return statespace.build_simple(ss["order"])
    return statespace.build_smart(train, ss["order"], ss.get("max_states"))


def finetune_config(cfg):
    opts = dict(cfg["finetune"])
    opts.setdefault("t_train", cfg["horizons"])
    return finetune.FinetuneConfig(**opts)


def mlp_config(cfg):
    opts = dict(cfg["mlp"])
    t_train = opts.pop("t_train", cfg["horizons"])
    if "hidden_sizes" in opts:
        opts["hidden_sizes"] = tuple(opts["hidden_sizes"])
    return mlp.MlpConfig(input_size=cfg["sensing"], output_size=t_train,
                         rng_seed=cfg["seed"], **opts)


def _output_dir(cfg):
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_any_model(path):
    path = Path(path)
    try:
        first = path.read_text(encoding="utf-8").split("\n", 1)[0]
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc.strerror}") from exc
    if first == mlp.FORMAT_TAG:
        return mlp.load_model(path)
    return markov.load_model(path)


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


# commands -----------------------------------------------------------------

def cmd_gen(args):
    spec = traffic.SyntheticSpec(args.block, args.slots, args.start, args.outlier, args.seed)
    trace = traffic.generate_synthetic(spec)
    traffic.save_trace(trace, args.out)
    return {"out": str(args.out), "n_slots": len(trace),
            "activation_fraction": trace.activation_fraction}


def cmd_ingest(args):
    if args.format == "csv-energy" and args.threshold is None:
        raise ConfigError("--threshold is required for csv-energy input")
    trace = traffic.load_trace(args.input, args.format, threshold=args.threshold)
    traffic.save_trace(trace, args.out)
    return {"out": str(args.out), "n_slots": len(trace),
            "activation_fraction": trace.activation_fraction}


def _fit_predictor(cfg, train, out):
    summary = {}
    predictor = cfg["predictor"]
    start = time.perf_counter()
    if predictor == "mlp":
        mc = mlp_config(cfg)
        X, Y = mlp.build_nn_pairs(train, mc.input_size, mc.output_size)
        model = mlp.train(mc, X, Y)
        mlp.write_loss_csv(out / "loss.csv", model)
        summary["final_loss"] = model.history["train_loss"][-1]
        summary["epochs_run"] = model.history["epochs_run"]
    else:
        space = build_space(cfg, train)
        model = markov.fit(space, train)
        summary["n_states"] = space.size
        if predictor == "ft-markov":
            fc = finetune_config(cfg)
            model = finetune.finetune(model, finetune.build_pairs(space, train, fc.t_train), fc)
            finetune.write_loss_csv(out / "loss.csv", model.meta["loss_history"])
            summary["final_loss"] = model.meta["final_loss"]
            summary["epochs_run"] = model.meta["epochs_run"]
    summary["training_time_s"] = time.perf_counter() - start
    return model, summary


def cmd_train(args, cfg):
    out = _output_dir(cfg)
    train = load_source(cfg.get("train"), cfg["seed"], "train")
    model, summary = _fit_predictor(cfg, train, out)
    model_path = Path(args.model_out) if args.model_out else out / "model.txt"
    if cfg["predictor"] == "mlp":
        mlp.save_model(model, model_path)
    else:
        markov.save_model(model, model_path)
    summary.update({"model": str(model_path), "predictor": cfg["predictor"],
                    "train_trace": train.name, "config": public_config(cfg)})
    _write_json(out / "summary.json", summary)
    return summary


def cmd_finetune(args, cfg):
    out = _output_dir(cfg)
    base = markov.load_model(args.model)
    train = load_source(cfg.get("train"), cfg["seed"], "train")
    fc = finetune_config(cfg)
    start = time.perf_counter()
    model = finetune.finetune(base, finetune.build_pairs(base.space, train, fc.t_train), fc)
    elapsed = time.perf_counter() - start
    model_path = Path(args.out) if args.out else out / "model-ft.txt"
    markov.save_model(model, model_path)
    finetune.write_loss_csv(out / "loss.csv", model.meta["loss_history"])
    summary = {"model": str(model_path), "n_states": model.size,
               "final_loss": model.meta["final_loss"], "epochs_run": model.meta["epochs_run"],
               "training_time_s": elapsed, "config": public_config(cfg)}
    _write_json(out / "summary-finetune.json", summary)
    return summary


def cmd_eval(args, cfg):
    out = _output_dir(cfg)
    model = load_any_model(args.model)
    predictor = "mlp" if isinstance(model, mlp.MlpModel) else cfg["predictor"]
    if predictor == "mlp" and not isinstance(model, mlp.MlpModel):
        raise ConfigError("predictor 'mlp' needs an MLP model file")
    test = load_source(cfg.get("test"), cfg["seed"], "test")
    train = load_source(cfg["train"], cfg["seed"], "train") if cfg.get("train") else None
    spec = evaluation.EvalSpec(predictor, cfg["sensing"], cfg["horizons"], test, train,
                               order=cfg["state_space"]["order"], stride=cfg["stride"],
                               allow_same_trace=cfg["allow_same_trace"])
    report = evaluation.evaluate(spec, model, name=args.name or cfg["name"])
    report_path = Path(args.report) if args.report else out / "report.csv"
    report.to_csv(report_path)
    report.aux_csv(report_path.with_suffix(".aux.csv"))
    result = {"report": str(report_path), "mean_success": report.mean_success,
              "n_positions": report.n_positions}
    if args.plot:
        svg = report_path.with_suffix(".svg")
        evaluation.render_svg([report], path=svg)
        result["plot"] = str(svg)
    _write_json(report_path.with_suffix(".json"),
                {**result, "metadata": report.metadata, "config": public_config(cfg)})
    return result


def _parse_cap(text):
    if text.lower() in ("unlimited", "none", "0"):
        return None
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"bad table cap {text!r}") from None


def cmd_sweep_l(args, cfg):
    out = _output_dir(cfg)
    train = load_source(cfg.get("train"), cfg["seed"], "train")
    test = load_source(cfg.get("test"), cfg["seed"], "test")
    caps = [_parse_cap(c) for c in args.L]
    path = Path(args.out) if args.out else out / "sweep-L.csv"
    rows = evaluation.sweep_L(train, test, cfg["state_space"]["order"], caps,
                              sensing=cfg["sensing"], t_max=cfg["horizons"],
                              stride=cfg["stride"], path=path)
    return {"csv": str(path),
            "rows": [{"L": c, "n_states": n, "mean_success": m} for c, n, m in rows]}


def cmd_compare(args):
    reports = [evaluation.EvalReport.from_csv(p) for p in args.reports]
    names = args.names or [r.name for r in reports]
    text = evaluation.compare(reports, names, path=args.out)
    result = {"csv": str(args.out) if args.out else None}
    if args.out is None:
        sys.stdout.write(text)
    if args.plot:
        evaluation.render_svg(reports, names, path=args.plot)
        result["plot"] = str(args.plot)
    return result


# argument parsing ---------------------------------------------------------

def _add_config_flags(p):
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. state_space.order=12 (repeatable)")
    p.add_argument("--predictor", choices=["markov", "ft-markov", "mlp"])
    p.add_argument("--variant", choices=["full", "simple", "smart"])
    p.add_argument("--order", type=int)
    p.add_argument("--max-states", type=int)
    p.add_argument("--sensing", type=int)
    p.add_argument("--horizons", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")


def _flag_overrides(args):
    over = [_parse_set(item) for item in args.set]
    flat = {}
    for flag, key in (("predictor", "predictor"), ("sensing", "sensing"),
                      ("horizons", "horizons"), ("seed", "seed"),
                      ("output_dir", "output_dir")):
        if getattr(args, flag) is not None:
            flat[key] = getattr(args, flag)
    ss = {}
    for flag, key in (("variant", "variant"), ("order", "order"), ("max_states", "max_states")):
        if getattr(args, flag) is not None:
            ss[key] = getattr(args, flag)
    if ss:
        flat["state_space"] = ss
    if flat:
        over.append(flat)
    return over


def build_parser():
    parser = argparse.ArgumentParser(prog="specmarkov", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic block-traffic trace")
    p.add_argument("--block", type=int, required=True)
    p.add_argument("--slots", type=int, required=True)
    p.add_argument("--start", type=int, default=1, choices=[0, 1])
    p.add_argument("--outlier", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ingest", help="convert an energy or binary file to a binary-lines trace")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=list(traffic.FORMATS), default="csv-energy")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the configured predictor")
    _add_config_flags(p)
    p.add_argument("--model-out")

    p = sub.add_parser("finetune", help="fine-tune a saved Markov model")
    _add_config_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out")

    p = sub.add_parser("eval", help="success rate per horizon on the test trace")
    _add_config_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--report")
    p.add_argument("--name")
    p.add_argument("--plot", action="store_true", help="also write an SVG chart")

    p = sub.add_parser("sweep-l", help="evaluate smart Markov under several table caps")
    _add_config_flags(p)
    p.add_argument("--L", nargs="+", required=True, help="caps; 'unlimited' for no cap")
    p.add_argument("--out")

    p = sub.add_parser("compare", help="merge report CSVs into one table / chart")
    p.add_argument("reports", nargs="+")
    p.add_argument("--names", nargs="+")
    p.add_argument("--out")
    p.add_argument("--plot")
    return parser


def _fail(kind, exc, code):
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            result = cmd_gen(args)
        elif args.command == "ingest":
            result = cmd_ingest(args)
        elif args.command == "compare":
            result = cmd_compare(args)
        else:
            cfg = resolve_config(args.config, _flag_overrides(args))
            handler = {"train": cmd_train, "finetune": cmd_finetune, "eval": cmd_eval,
                       "sweep-l": cmd_sweep_l}[args.command]
            result = handler(args, cfg)
    except ConfigError as exc:
        return _fail("config", exc, 2)
    except DivergenceError as exc:
        return _fail("divergence", exc, 4)
    except (DataError, OSError) as exc:
        return _fail("data", exc, 3)
    sys.stdout.write(json.dumps(result, sort_keys=True, default=str) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Every command takes its parameters from flags and/or a JSON run config
(``--config``); explicit flags win.  Outputs go to ``--out`` and are written
atomically.  CSVs carry only a header and data rows; a ``manifest.json``
beside them records the effective config and its hash.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or config error,
3 a check failed.
"""
import argparse
import hashlib
import json
import logging
import os
import sys

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import io as sio

log = logging.getLogger("symdiff")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3

HEADS = ["IT", "II", "IRS", "PL", "GPL"]
KINDS = ["RT", "RI", "RS"]


class ConfigError(Exception):
    pass


class CheckFailed(Exception):
    pass


def _section(props):
    return {"type": "object", "additionalProperties": False, "properties": props}


_INT = {"type": "integer"}
_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}
_BEAM = {"type": "integer", "minimum": 1}
_MODE = {"enum": ["greedy", "beam"]}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"type": "string"},
        "seed": _INT,
        "out": {"type": "string"},
        "threads": _POS_INT,
        "analyze_mixing": _section({"n": _INT, "eps_T": _NUM, "gap": _NUM, "t_max": _INT}),
        "sample_shuffle": _section({
            "kind": {"enum": KINDS}, "n": _INT, "T": _INT, "count": _POS_INT, "states": {"type": "boolean"},
        }),
        "train": _section({
            "n": _INT, "head": {"enum": HEADS}, "forward": {"enum": KINDS},
            "schedule": {"anyOf": [{"type": "array", "items": _INT}, {"type": "null"}]},
            "eps_T": _NUM, "gap": _NUM,
            "train_size": _POS_INT, "test_size": _POS_INT, "noise_std": _NUM,
            "batch_size": _POS_INT, "epochs": _POS_INT, "lr": _NUM, "weight_decay": _NUM,
            "beta1": _NUM, "beta2": _NUM, "eps": _NUM,
            "trajectories_per_sample": _POS_INT,
            "loss_mode": {"enum": ["full-trajectory", "random-timestep"]},
            "d_model": _POS_INT, "n_layers": _POS_INT, "n_heads": _POS_INT, "d_ff": _POS_INT,
        }),
        "eval": _section({
            "checkpoint": {"type": "string"}, "test_size": _POS_INT, "noise_std": _NUM,
            "mode": _MODE, "outer_beam": _BEAM, "inner_beam": _BEAM,
        }),
        "decode": _section({
            "checkpoint": {"type": "string"}, "input": {"type": "array", "items": _NUM},
            "mode": _MODE, "outer_beam": _BEAM, "inner_beam": _BEAM, "restarts": _POS_INT,
        }),
        "gradcheck": _section({
            "head": {"enum": HEADS + ["ALL", "all"]}, "n": _INT, "d_model": _POS_INT, "tol": _NUM,
        }),
        "oracle": _section({"n_max": _INT}),
    },
}

DEFAULTS = {
    "analyze_mixing": {"n": None, "eps_T": 0.005, "gap": 0.3, "t_max": None},
    "sample_shuffle": {"kind": "RS", "n": 5, "T": 3, "count": 1, "states": False},
    "train": {
        "n": 5, "head": "GPL", "forward": "RS", "schedule": None, "eps_T": 0.005, "gap": 0.3,
        "train_size": 2048, "test_size": 256, "noise_std": 0.0,
        "batch_size": 64, "epochs": 5, "lr": 1e-3, "weight_decay": 0.0,
        "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "trajectories_per_sample": 3,
        "loss_mode": "full-trajectory", "d_model": 32, "n_layers": 2, "n_heads": 2, "d_ff": 64,
    },
    "eval": {"checkpoint": None, "test_size": 256, "noise_std": 0.0, "mode": "beam", "outer_beam": 20, "inner_beam": 50},
    "decode": {"checkpoint": None, "input": None, "mode": "greedy", "outer_beam": 1, "inner_beam": 1, "restarts": 1},
    "gradcheck": {"head": "all", "n": 3, "d_model": 8, "tol": 1e-4},
    "oracle": {"n_max": 5},
}


def config_hash(doc):
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def load_run_config(path):
    """Read and schema-check a run config.  A missing file is an I/O error."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{path}: {exc.message}") from exc
    return doc


def _resolve(args, doc, section):
    """Defaults, then the config section, then any flags given explicitly."""
    params = dict(DEFAULTS[section])
    params.update(doc.get(section, {}))
    for key in list(params) + [k for k in vars(args) if k not in params]:
        value = getattr(args, key, None)
        if value is not None and key not in ("seed", "out", "threads", "config", "command", "func"):
            params[key] = value
    return params


class _Run:
    """Effective settings and output helpers for one command invocation."""

    def __init__(self, command, section, params, seed, out):
        self.command = command
        self.params = params
        self.seed = seed
        self.out = out
        self.effective = {"command": command, "seed": seed, section: params}
        self.hash = config_hash(self.effective)
        self.files = []

    def path(self, name):
        return os.path.join(self.out, name)

    def write_json(self, name, doc):
        doc = dict(doc, config_hash=self.hash)
        sio.write_json(self.path(name), doc)
        self.files.append(name)

    def write_csv(self, name, header, rows):
        sio.write_csv(self.path(name), header, rows)
        self.files.append(name)

    def finish(self):
        sio.write_json(self.path("manifest.json"), {
            "command": self.command,
            "config": self.effective,
            "config_hash": self.hash,
            "files": sorted(self.files),
        })


# -- commands -----------------------------------------------------------------

def cmd_analyze_mixing(run):
    from .mixing import eulerian, plan_schedule, tv_rs_between, tv_rs_to_uniform

    p = run.params
    n = p["n"]
    if n is None or n < 2:
        raise ConfigError("analyze-mixing needs --n >= 2")
    if not (0 < p["eps_T"] < 1 and 0 < p["gap"] < 1):
        raise ConfigError("eps_T and gap must lie in (0, 1)")
    T, schedule = plan_schedule(n, p["eps_T"], p["gap"])
    t_max = T + 5 if p["t_max"] is None else p["t_max"]
    if t_max < 1:
        raise ConfigError("t_max must be >= 1")
    table = eulerian(n, exact=False)
    curve = [(n, t, tv_rs_to_uniform(n, t, table)) for t in range(1, t_max + 1)]
    run.write_csv("tv_to_uniform.csv", ["n", "t", "tv_to_uniform"], curve)
    ts = range(t_max + 1)
    matrix = [[t] + [tv_rs_between(n, t, t2, table) for t2 in ts] for t in ts]
    run.write_csv("tv_pairwise.csv", ["t"] + [f"t{t2}" for t2 in ts], matrix)
    consecutive = [tv_rs_between(n, a, b, table) for a, b in schedule.intervals()]
    run.write_json("schedule.json", {
        "n": n, "eps_T": p["eps_T"], "gap": p["gap"], "T": T,
        "schedule": schedule.to_list(), "consecutive_tv": consecutive,
        "tv_T_to_uniform": tv_rs_to_uniform(n, T, table),
    })
    print(json.dumps({"T": T, "schedule": schedule.to_list()}))


def cmd_sample_shuffle(run):
    from .shuffles import forward_trajectory

    p = run.params
    if p["n"] < 1 or p["T"] < 0:
        raise ConfigError("need n >= 1 and T >= 0")
    rng = np.random.default_rng(run.seed)
    x0 = np.arange(1, p["n"] + 1, dtype=np.float64)
    trajs = [forward_trajectory(x0, p["kind"], p["T"], rng) for _ in range(p["count"])]
    run.write_json("trajectories.json", {
        "kind": p["kind"], "n": p["n"], "T": p["T"],
        "trajectories": [tr.to_json(include_states=p["states"]) for tr in trajs],
    })
    rows = [[i, " ".join(str(v + 1) for v in tr.orders[-1])] for i, tr in enumerate(trajs)]
    run.write_csv("final_orders.csv", ["sample", "order"], rows)


def _train_setup(p):
    from .diffusion import TrainConfig, check_head_schedule
    from .mixing import DenoisingSchedule, plan_schedule

    n = p["n"]
    if n is None or n < 2:
        raise ConfigError("train needs n >= 2")
    try:
        if p["schedule"] is None:
            if p["forward"] != "RS":
                raise ConfigError("schedule planning covers the riffle shuffle only; give an explicit schedule")
            _, schedule = plan_schedule(n, p["eps_T"], p["gap"])
        else:
            schedule = DenoisingSchedule(tuple(p["schedule"]))
        check_head_schedule(p["head"], p["forward"], schedule)
        cfg = TrainConfig(
            schedule=schedule, forward=p["forward"], batch_size=p["batch_size"], epochs=p["epochs"],
            lr=p["lr"], weight_decay=p["weight_decay"], beta1=p["beta1"], beta2=p["beta2"], eps=p["eps"],
            trajectories_per_sample=p["trajectories_per_sample"], loss_mode=p["loss_mode"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def cmd_train(run):
    from .diffusion import evaluate_dataset, make_sort_dataset, train
    from .model.checkpoint import save_checkpoint
    from .model.net import NetConfig, ScoreNet

    p = run.params
    cfg = _train_setup(p)
    try:
        net_cfg = NetConfig(head=p["head"], n=p["n"], d_model=p["d_model"], n_layers=p["n_layers"],
                            n_heads=p["n_heads"], d_ff=p["d_ff"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    data_rng, init_rng, train_rng, eval_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(run.seed).spawn(4))
    data = make_sort_dataset(p["n"], p["train_size"], data_rng, p["noise_std"])
    test = make_sort_dataset(p["n"], p["test_size"], data_rng, p["noise_std"])
    net = ScoreNet(net_cfg, init_rng)
    result = train(data, net, cfg, train_rng)
    log.info("trained %d steps in %.1fs", len(result.history), result.seconds)
    run.write_csv("loss_history.csv", ["step", "loss"], list(enumerate(result.history, 1)))
    metrics, _ = evaluate_dataset(net, test, cfg.schedule, eval_rng)
    save_checkpoint(run.path("checkpoint.json"), net, result.optimizer, train_rng,
                    extra={"train": p, "schedule": cfg.schedule.to_list(), "config_hash": run.hash})
    run.files.append("checkpoint.json")
    run.write_json("train_report.json", {
        "n": p["n"], "head": p["head"], "schedule": cfg.schedule.to_list(),
        "steps": len(result.history), "final_loss": result.history[-1],
        "held_out_greedy": metrics.to_dict(),
    })
    print(json.dumps({"final_loss": result.history[-1], "held_out_greedy": metrics.to_dict()}, sort_keys=True))


def _load_model(path):
    from .mixing import DenoisingSchedule
    from .model.checkpoint import load_checkpoint

    if path is None:
        raise ConfigError("--checkpoint is required")
    net, _, _, extra = load_checkpoint(path)
    if "schedule" not in extra:
        raise ConfigError(f"{path}: checkpoint has no schedule")
    return net, DenoisingSchedule(tuple(extra["schedule"])), extra


def _beams(p):
    if p["mode"] == "greedy":
        return 1, p["inner_beam"] if p["inner_beam"] is not None else 1
    if p["inner_beam"] < p["outer_beam"]:
        raise ConfigError("inner_beam must be >= outer_beam")
    return p["outer_beam"], p["inner_beam"]


def cmd_eval(run):
    from .diffusion import evaluate_dataset, make_sort_dataset

    p = run.params
    net, schedule, _ = _load_model(p.get("checkpoint"))
    outer, inner = _beams(p)
    data_rng, eval_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(run.seed).spawn(2))
    test = make_sort_dataset(net.config.n, p["test_size"], data_rng, p["noise_std"])
    metrics, rows = evaluate_dataset(net, test, schedule, eval_rng, outer, inner)
    header = ["sample", "truth", "predicted", "log_prob", "kendall_tau", "accuracy", "correctness"]
    run.write_csv("eval_samples.csv", header, [
        [i, " ".join(map(str, r["truth"])), " ".join(map(str, r["predicted"])),
         r["log_prob"], r["kendall_tau"], r["accuracy"], r["correctness"]]
        for i, r in enumerate(rows)
    ])
    run.write_json("eval.json", {
        "n": net.config.n,
        "model_checkpoint": os.path.basename(p["checkpoint"]),
        "schedule": schedule.to_list(),
        "decode": {"mode": p["mode"], "outer_beam": outer, "inner_beam": inner},
        "metrics": metrics.to_dict(),
        "per_sample_csv": "eval_samples.csv",
    })
    print(json.dumps(metrics.to_dict(), sort_keys=True))


def cmd_decode(run):
    from .diffusion import decode_beam

    p = run.params
    net, schedule, _ = _load_model(p.get("checkpoint"))
    if not p.get("input"):
        raise ConfigError("decode needs --input")
    X = np.asarray(p["input"], dtype=np.float64)[:, None]
    if X.shape[0] > net.config.n and net.head.value == "GPL":
        raise ConfigError(f"model handles lists of at most {net.config.n} objects")
    outer, inner = _beams(p)
    rng = np.random.default_rng(run.seed)
    res = decode_beam(net, X, schedule, outer, inner, restarts=p["restarts"], rng=rng)
    doc = {
        "input": X[:, 0].tolist(),
        "permutation": res.perm.to_one_based(),
        "output": X[res.perm.mapping, 0].tolist(),
        "log_prob": res.log_prob,
        "decode": {"mode": p["mode"], "outer_beam": outer, "inner_beam": inner, "restarts": p["restarts"]},
    }
    run.write_json("decode.json", doc)
    print(json.dumps({"permutation": doc["permutation"], "log_prob": doc["log_prob"]}))


def cmd_gradcheck(run):
    from .model.gradcheck import gradcheck_head

    p = run.params
    if not 2 <= p["n"] <= 4:
        raise ConfigError("gradcheck supports 2 <= n <= 4")
    heads = HEADS if p["head"].upper() == "ALL" else [p["head"].upper()]
    results = [gradcheck_head(h, n=p["n"], seed=run.seed, d_model=p["d_model"]) for h in heads]
    rows = [[r.head, r.n, r.n_params, r.max_rel_error, r.max_rel_error < p["tol"]] for r in results]
    run.write_csv("gradcheck.csv", ["head", "n", "n_params", "max_rel_error", "passed"], rows)
    for r in rows:
        print(f"{r[0]:4s} n={r[1]} params={r[2]} max_rel_error={r[3]:.3e} {'ok' if r[4] else 'FAIL'}")
    worst = max(r.max_rel_error for r in results)
    print(f"max rel error {worst:.3e}")
    if worst >= p["tol"]:
        raise CheckFailed(f"gradient error {worst:.3e} above {p['tol']}")


def cmd_oracle(run):
    from .oracle import ORACLE_MAX_N, run_oracles

    n_max = run.params["n_max"]
    if not 2 <= n_max <= ORACLE_MAX_N:
        raise ConfigError(f"--n-max must lie in [2, {ORACLE_MAX_N}]")
    results = run_oracles(n_max, seed=run.seed)
    run.write_csv("oracle.csv", ["check", "passed", "detail"], [[r.name, r.passed, r.detail] for r in results])
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        raise CheckFailed(", ".join(failed))


COMMANDS = {
    "analyze-mixing": ("analyze_mixing", cmd_analyze_mixing),
    "sample-shuffle": ("sample_shuffle", cmd_sample_shuffle),
    "train": ("train", cmd_train),
    "eval": ("eval", cmd_eval),
    "decode": ("decode", cmd_decode),
    "gradcheck": ("gradcheck", cmd_gradcheck),
    "oracle": ("oracle", cmd_oracle),
}


def _float_list(text):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from exc


def _int_list(text):
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}") from exc


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    g.add_argument("--out", default=None, help="output directory (default .)")
    g.add_argument("--threads", type=int, default=None, help="cap on BLAS/numba worker threads (default 1)")
    g.add_argument("--config", default=None, help="JSON run config")

    parser = argparse.ArgumentParser(prog="symdiff", description="Diffusion over permutation groups.",
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze-mixing", parents=[common], help="riffle-shuffle TV curves and schedule")
    p.add_argument("--n", type=int)
    p.add_argument("--eps-T", dest="eps_T", type=float)
    p.add_argument("--gap", type=float)
    p.add_argument("--t-max", dest="t_max", type=int)

    p = sub.add_parser("sample-shuffle", parents=[common], help="draw forward trajectories")
    p.add_argument("--kind", choices=KINDS, type=str.upper)
    p.add_argument("--n", type=int)
    p.add_argument("--T", dest="T", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--states", action="store_true", default=None)

    p = sub.add_parser("train", parents=[common], help="train a score network on scalar sorting")
    p.add_argument("--n", type=int)
    p.add_argument("--head", choices=HEADS, type=str.upper)
    p.add_argument("--forward", choices=KINDS, type=str.upper)
    p.add_argument("--schedule", type=_int_list, help="explicit timesteps, e.g. 0,3,10")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--train-size", dest="train_size", type=int)
    p.add_argument("--test-size", dest="test_size", type=int)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--loss", dest="loss_mode", choices=["full-trajectory", "random-timestep"])

    for name, helptext in (("eval", "evaluate a checkpoint on held-out lists"),
                           ("decode", "decode one list with a checkpoint")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--checkpoint")
        p.add_argument("--mode", choices=["greedy", "beam"])
        p.add_argument("--outer-beam", dest="outer_beam", type=int)
        p.add_argument("--inner-beam", dest="inner_beam", type=int)
        if name == "eval":
            p.add_argument("--test-size", dest="test_size", type=int)
            p.add_argument("--noise-std", dest="noise_std", type=float)
        else:
            p.add_argument("--input", type=_float_list, help="comma-separated scalars")
            p.add_argument("--restarts", type=int)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--head", type=str.upper, choices=HEADS + ["ALL"])
    p.add_argument("--n", type=int)

    p = sub.add_parser("oracle", parents=[common], help="brute-force checks over S_n")
    p.add_argument("--n-max", dest="n_max", type=int)
    return parser


def _setup_logging():
    level = os.environ.get("SYMDIFF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def run(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    section, func = COMMANDS[args.command]
    doc = load_run_config(args.config) if args.config else {}
    if doc.get("command") not in (None, args.command):
        raise ConfigError(f"config is for {doc['command']!r}, not {args.command!r}")
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    out = args.out if args.out is not None else doc.get("out", ".")
    threads = args.threads if args.threads is not None else doc.get("threads", 1)
    if threads < 1:
        raise ConfigError("--threads must be >= 1")
    params = _resolve(args, doc, section)
    invocation = _Run(args.command, section, params, seed, out)
    with threadpool_limits(limits=threads):
        func(invocation)
    invocation.finish()
    return EXIT_OK


def main(argv=None):
    try:
        return run(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except ConfigError as exc:
        print(f"symdiff: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckFailed as exc:
        print(f"symdiff: check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"symdiff: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

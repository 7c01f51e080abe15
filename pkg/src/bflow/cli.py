"""Command-line entry point: ingest, train, eval, sample, verify.

Configuration comes from a UTF-8 ``key = value`` file (one pair per line,
``#`` comments) plus ``--set key=value`` overrides; the resolved snapshot
is embedded in every checkpoint.  All commands taking ``--seed`` are
bit-reproducible.
"""

import argparse
import os
import sys

import numpy as np

from . import continuous as cts
from . import data
from . import discrete as dd
from . import discretised as dsc
from . import harness, training
from .numerics import Rng

RUN_CONFIG_KEYS = {
    "modality": str,
    "D": int,
    "K": int,
    "sigma1": float,
    "beta1": float,
    "schedule_preset": str,
    "batch_size": int,
    "steps": int,
    "learning_rate": float,
    "weight_decay": float,
    "adam_beta1": float,
    "adam_beta2": float,
    "ema_decay": float,
    "seed": int,
    "eval_every": int,
    "hidden": tuple,
    "activation": str,
    "time_feature": str,
    "n_freqs": int,
    "t_min": float,
    "recon_sigma": float,
    "dataset": str,
    "alphabet": str,
    "width": int,
    "height": int,
}
PATH_KEYS = ("dataset", "alphabet")
SHAPE_KEYS = ("width", "height")


def parse_config_text(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in RUN_CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, val)
    return out


def _coerce(key, val):
    kind = RUN_CONFIG_KEYS[key]
    if kind is tuple:
        return tuple(int(v) for v in val.split(",") if v.strip())
    if kind is int:
        return int(val)
    if kind is float:
        return float(val)
    return val


def load_run_config(path, overrides=()):
    with open(path, encoding="utf-8") as fh:
        cfg = parse_config_text(fh.read())
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, val = (part.strip() for part in item.split("=", 1))
        if key not in RUN_CONFIG_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, val)
    return cfg


def train_config_from_run(cfg):
    fields = {k: v for k, v in cfg.items() if k not in PATH_KEYS + SHAPE_KEYS}
    return training.TrainConfig(**fields)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(args):
    if args.modality == "discrete" and args.alphabet:
        alphabet = data.load_alphabet(args.alphabet)
        with open(args.input, encoding="utf-8") as fh:
            text = fh.read()
        if text.endswith("\n"):
            text = text[:-1]
        ds = data.ingest_text(text, alphabet, seq_len=args.dim)
    else:
        if args.modality != "continuous" and args.bins < 2:
            raise SystemExit("ingest: --bins is required for discretised/discrete byte data")
        if not args.dim:
            raise SystemExit("ingest: --dim is required for byte data")
        with open(args.input, "rb") as fh:
            raw = fh.read()
        ds = data.ingest_bytes(raw, args.dim, args.modality, K=args.bins)
    data.save_dataset(args.output, ds)
    print(f"wrote {args.output}: modality={ds.modality} D={ds.D} K={ds.K} items={ds.items.shape[0]}")
    return 0


def cmd_train(args):
    cfg = load_run_config(args.config, args.set or ())
    if "dataset" not in cfg:
        raise SystemExit("train: config must name a dataset")
    dataset_path = _resolve(cfg["dataset"], args.config)
    ds = data.load_dataset(dataset_path)
    config = train_config_from_run(cfg)
    if ds.modality != config.modality or ds.D != config.D or (config.modality != "continuous" and ds.K != config.K):
        raise SystemExit(
            f"train: dataset ({ds.modality}, D={ds.D}, K={ds.K}) does not match "
            f"config ({config.modality}, D={config.D}, K={config.K})"
        )
    result = training.train(Rng(config.seed), ds.items, config)
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "model.ckpt")
    training.save_checkpoint(ckpt_path, result, run_config=cfg)
    with open(os.path.join(args.out, "history.csv"), "w", encoding="utf-8") as fh:
        fh.write(training.history_to_csv(result.history))
    final_train = np.mean([h[1] for h in result.history[-min(50, len(result.history)):]])
    eval_losses = [h[2] for h in result.history if h[2] is not None]
    print(f"final train loss (50-step mean): {final_train:.6g}")
    print(f"final eval loss: {eval_losses[-1]:.6g}" if eval_losses else "final eval loss: n/a")
    print(f"checkpoint: {ckpt_path}")
    return 0


def cmd_eval(args):
    result, _ = training.load_checkpoint(args.checkpoint)
    ds = data.load_dataset(args.dataset)
    config = result.config
    if ds.modality != config.modality:
        raise SystemExit(f"eval: dataset modality {ds.modality} does not match checkpoint {config.modality}")
    n_values = tuple(int(v) for v in args.n.split(",") if v.strip())
    predictor = training.ema_predictor(result)
    rows = training.evaluate(Rng(args.seed), predictor, config, ds.items, n_values=n_values, passes=args.passes)
    print(training.format_eval_table(rows))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(training.eval_rows_to_csv(rows))
        print(f"csv: {args.out}")
    return 0


def _sample_shape(config_snapshot, D):
    width = config_snapshot.get("width", 0)
    height = config_snapshot.get("height", 0)
    if width and height and width * height == D:
        return width, height
    side = int(round(np.sqrt(D)))
    if side * side == D:
        return side, side
    return D, 1


def write_pgm(path, values, width, height):
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(np.asarray(values, dtype=np.uint8).tobytes())


def cmd_sample(args):
    result, header = training.load_checkpoint(args.checkpoint)
    config = result.config
    predictor = training.ema_predictor(result)
    rng = Rng(args.seed)
    os.makedirs(args.out, exist_ok=True)
    paths = []
    alphabet = None
    if config.modality == "discrete" and config.K == 27:
        alphabet = data.ALPHABET_27
    if args.alphabet:
        alphabet = data.load_alphabet(args.alphabet)
    for idx in range(args.count):
        srng = rng.split(idx)
        if config.modality == "discrete":
            out = dd.generate(srng, predictor, config.schedule, args.steps, config.K, config.D)
            if alphabet is not None and len(alphabet) == config.K:
                path = os.path.join(args.out, f"sample_{idx:03d}.txt")
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(data.decode_text(out, alphabet) + "\n")
            else:
                path = os.path.join(args.out, f"sample_{idx:03d}.pgm")
                scale = 255 // max(config.K - 1, 1)
                w, h = _sample_shape(header.get("run_config", {}), config.D)
                write_pgm(path, (out - 1) * scale, w, h)
        elif config.modality == "discretised":
            out = dsc.generate(srng, predictor, config.cts_config(), args.steps, config.K)
            w, h = _sample_shape(header.get("run_config", {}), config.D)
            path = os.path.join(args.out, f"sample_{idx:03d}.pgm")
            write_pgm(path, data.centres_to_bytes(out, config.K), w, h)
        else:
            out = cts.generate(srng, predictor, config.cts_config(), args.steps)
            w, h = _sample_shape(header.get("run_config", {}), config.D)
            path = os.path.join(args.out, f"sample_{idx:03d}.pgm")
            write_pgm(path, data.centres_to_bytes(out, 0), w, h)
        paths.append(path)
    for p in paths:
        print(p)
    return 0


def cmd_verify(args):
    try:
        reports = harness.run_all(args.seed, name_filter=args.filter)
    except ValueError as exc:
        raise SystemExit(f"verify: {exc}")
    for r in reports:
        print(r.summary())
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            for r in reports:
                fh.write(r.to_line() + "\n")
        print(f"report: {args.report}")
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} properties passed")
    return 1 if failed else 0


def _resolve(path, config_path):
    if os.path.isabs(path):
        return path
    return os.path.join(os.path.dirname(os.path.abspath(config_path)), path)


def build_parser():
    p = argparse.ArgumentParser(prog="bflow", description="Bayesian-flow generative modelling")
    sub = p.add_subparsers(dest="command", required=True)

    pi = sub.add_parser("ingest", help="convert raw text/bytes into a dataset file")
    pi.add_argument("--modality", required=True, choices=("continuous", "discretised", "discrete"))
    pi.add_argument("--input", required=True)
    pi.add_argument("--output", required=True)
    pi.add_argument("--alphabet", help="alphabet file for text ingestion (one symbol per line)")
    pi.add_argument("--bins", type=int, default=0, help="bin/class count K")
    pi.add_argument("--dim", type=int, default=0, help="values per item (or chunk length for raw text)")
    pi.set_defaults(func=cmd_ingest)

    pt = sub.add_parser("train", help="train a model from a config file")
    pt.add_argument("--config", required=True)
    pt.add_argument("--out", default="run")
    pt.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    pt.set_defaults(func=cmd_train)

    pe = sub.add_parser("eval", help="loss table for a checkpoint on a dataset")
    pe.add_argument("--checkpoint", required=True)
    pe.add_argument("--dataset", required=True)
    pe.add_argument("--n", default="10,25,50,100", help="comma-separated step counts")
    pe.add_argument("--passes", type=int, default=2)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--out", help="also write the table as CSV")
    pe.set_defaults(func=cmd_eval)

    ps = sub.add_parser("sample", help="generate samples from a checkpoint")
    ps.add_argument("--checkpoint", required=True)
    ps.add_argument("--count", type=int, default=1)
    ps.add_argument("--steps", type=int, default=100)
    ps.add_argument("--out", default="samples")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--alphabet", help="decode discrete samples as text with this alphabet")
    ps.set_defaults(func=cmd_sample)

    pv = sub.add_parser("verify", help="run the analytic-property verification suite")
    pv.add_argument("--seed", type=int, default=7)
    pv.add_argument("--filter", help="run only properties whose id contains this substring")
    pv.add_argument("--report", help="write line-delimited records here")
    pv.set_defaults(func=cmd_verify)

    pg = sub.add_parser("toys", help="write the bundled toy datasets into a directory")
    pg.add_argument("--out", default="toys")
    pg.set_defaults(func=lambda a: (print("\n".join(f"{k}: {v}" for k, v in data.write_toys(a.out).items())), 0)[1])

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

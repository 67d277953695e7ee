"""Command-line entry point: ``gbbm <subcommand> ...``.

Subcommands read a JSON experiment config (``--config``) and/or explicit
paths. Every file written embeds a short hash of the config that produced it.
Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 resource
limit.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import ansatz as az
from . import baselines as bl
from . import datasets as ds
from . import observables as ob
from . import sampler as sp
from . import training as tr
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .errors import ConfigError, GBBMError, NumericalError, ResourceLimitError, StateInvalidError

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_RESOURCE = 4

METRIC_COLUMNS = ["model", "sigma", "repetition", "mmd2", "strings", "redrawn"]
SUMMARY_COLUMNS = ["model", "sigma", "mean", "std", "repetitions"]


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if "seed" not in cfg:
        raise ConfigError("config must set an explicit integer 'seed'")
    return cfg


def _out_dir(cfg, override=None) -> Path:
    out = Path(override or cfg.get("output_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(block, key, where):
    if key not in block:
        raise ConfigError(f"missing '{key}' in {where}")
    return block[key]


def _load_dataset(path) -> ds.BitDataset:
    if not Path(path).exists():
        raise ConfigError(f"dataset not found: {path}")
    return ds.load(path)


def _write_csv(path, columns, rows, chash):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash: {chash}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        w.writerows(rows)


def _write_matrix(path, M, chash, title):
    np.savetxt(path, M, fmt="%.12g", header=f"config_hash: {chash}\n{title}")


# -- gen-data ---------------------------------------------------------------

def _generate(block, seed):
    kind = _require(block, "kind", "data.generator")
    rng = np.random.default_rng(seed)
    n = int(block.get("n_train", 1000)) + int(block.get("n_test", 1000))
    if kind == "gol":
        data = ds.gol_generate(int(block.get("rows", 6)), int(block.get("cols", 18)), int(block.get("steps", 1000)),
                               n, rng, wrap=bool(block.get("wrap", False)))
    elif kind == "ising":
        data = ds.ising_generate(
            int(block.get("rows", 14)), int(block.get("cols", 14)), float(block.get("J", 1.0)),
            float(block.get("h", 0.08)), float(block.get("T", 2.4)), int(block.get("warmup", 10**6)),
            int(block.get("thin", 2000)), n, rng, init=block.get("init", "random"),
        )
    elif kind == "uniform":
        data = bl.uniform_sample(int(_require(block, "d", "data.generator")), n, rng)
    else:
        raise ConfigError(f"unknown generator kind {kind!r}")
    data.metadata["seed"] = seed
    n_train = int(block.get("n_train", 1000))
    return ds.split(data, n_train / n)


def cmd_gen_data(args, cfg):
    chash = config_hash(cfg)
    block = _require(_require(cfg, "data", "config"), "generator", "data")
    train, test = _generate(block, int(cfg["seed"]))
    out = _out_dir(cfg, args.out)
    for name, part in (("train", train), ("test", test)):
        part.metadata["config_hash"] = chash
        ds.save(part, out / f"{name}.txt")
    print(f"wrote {len(train)} train and {len(test)} test rows of width {train.d} to {out}")
    return 0


# -- train ------------------------------------------------------------------

def _train_data(cfg, out):
    data = cfg.get("data", {})
    if "train" in data:
        return _load_dataset(data["train"])
    path = out / "train.txt"
    if path.exists():
        return ds.load(path)
    raise ConfigError("config has no data.train path and no generated train.txt in the output directory")


def _circuit(cfg, train):
    block = dict(_require(cfg, "circuit", "config"))
    layout = block.get("layout", az.CLEMENTS)
    d = int(block.get("d", train.d))
    if d != train.d:
        raise ConfigError(f"circuit width d={d} does not match dataset width {train.d}")
    layers = int(block.get("layers", 1))
    if layout == "chowliu":
        edges = bl.chow_liu_fit(train, float(block.get("smoothing", 1.0))).edges
        return az.graph_spec(d, edges, layers)
    if layout == "complete":
        return az.complete_graph_spec(d, layers, int(block.get("edge_seed", cfg["seed"])))
    if layout == "graph":
        return az.graph_spec(d, [tuple(e) for e in _require(block, "edges", "circuit")], layers)
    return az.clements_spec(d, layers)


def _bandwidths(block, train, seed):
    bw = block.get("bandwidths", "median")
    if bw == "median":
        base = tr.median_heuristic(train, int(block.get("pair_budget", 10_000)), np.random.default_rng([seed, 11]))
        return tr.default_bandwidths(base, int(block.get("n_bandwidths", 3)))
    return tuple(float(s) for s in bw)


def _train_config(cfg, spec, train) -> tr.TrainConfig:
    block = dict(cfg.get("train", {}))
    seed = int(cfg["seed"])
    known = {
        "strings_per_step", "learning_rate", "episodes", "kind", "max_locality", "resample_strings_each_step",
        "eval_interval", "lr_schedule", "init_scale", "checkpoint_interval",
    }
    extra = set(block) - known - {"bandwidths", "n_bandwidths", "pair_budget"}
    if extra:
        raise ConfigError(f"unknown train keys: {sorted(extra)}")
    kwargs = {k: block[k] for k in known if k in block}
    return tr.TrainConfig(spec, _bandwidths(block, train, seed), seed=seed, **kwargs)


def _merge_history(path, history, chash, eval_interval):
    # resumed runs append to the regular rows already on disk; the earlier run's
    # closing row is dropped so the file matches an uninterrupted run
    rows = []
    if path.exists():
        with open(path) as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            next(reader, None)
            first = history.rows[0]["episode"] if history.rows else 0
            rows = [r for r in reader if int(r[0]) < first and int(r[0]) % eval_interval == 0]
    new = [[r["episode"], f"{r['seconds']:.6f}"] + [repr(x) for x in r["loss"]] + [repr(r["total"])]
           for r in history.rows]
    _write_csv(path, history.columns(), rows + new, chash)


def cmd_train(args, cfg):
    chash = config_hash(cfg)
    out = _out_dir(cfg, args.out)
    train = _train_data(cfg, out)
    ckpt_path = out / "checkpoint.ckpt"
    if args.resume:
        ck = load_checkpoint(args.resume)
        if ck.config is None:
            raise ConfigError("checkpoint has no training config to resume from")
        config = ck.config
        if "train" in cfg and "episodes" in cfg["train"]:
            config = tr.TrainConfig.from_dict({**config.to_dict(), "episodes": int(cfg["train"]["episodes"])})
        if ck.spec.d != train.d:
            raise ConfigError(f"checkpoint width d={ck.spec.d} does not match dataset width {train.d}")
        start = dict(params=ck.params, optimizer=ck.optimizer, rng_state=ck.rng_state, start_episode=ck.episode)
    else:
        spec = _circuit(cfg, train)
        config = _train_config(cfg, spec, train)
        start = {}

    def on_checkpoint(result):
        save_checkpoint(Checkpoint.from_result(result, {"config_hash": chash}), ckpt_path)

    try:
        result = tr.train(config, train, callback=on_checkpoint, **start)
    except NumericalError:
        print(f"training diverged; last checkpoint (if any) is {ckpt_path}", file=sys.stderr)
        raise
    on_checkpoint(result)
    _merge_history(out / "history.csv", result.history, chash, config.eval_interval)
    print(f"trained {az.param_count(config.spec)} parameters for {result.episode} episodes; "
          f"final loss {result.history.totals[-1]:.6g}")
    return 0


# -- eval -------------------------------------------------------------------

def _eval_settings(args, cfg, test):
    block = dict(cfg.get("eval", {}))
    seed = int(cfg.get("seed", 0)) if args.seed is None else args.seed
    if args.bandwidths:
        sigmas = tuple(args.bandwidths)
    else:
        bw = block.get("bandwidths", "median")
        sigmas = _bandwidths({"bandwidths": bw}, test, seed) if bw == "median" else tuple(float(s) for s in bw)
    reps = args.repetitions if args.repetitions is not None else int(block.get("repetitions", 5))
    strings = args.strings if args.strings is not None else int(block.get("strings", 1000))
    return sigmas, reps, strings, seed


def estimate_table(model_values, test, sigmas, repetitions, strings, seed, kind=ob.PARITY,
                   max_locality=ob.DEFAULT_MAX_LOCALITY):
    """MMD^2 estimates per bandwidth and repetition.

    ``model_values(subsets)`` returns the model's string values. Returns rows
    ``(sigma, repetition, mmd2, strings, redrawn)``.
    """
    target = tr.TargetExpvals(test)
    rows = []
    for si, sigma in enumerate(sigmas):
        for rep in range(repetitions):
            rng = np.random.default_rng([seed, si, rep, 5])
            limit = max_locality if kind == ob.THRESHOLD else None
            subsets, redrawn = ob.sample_subsets(sigma, test.d, strings, rng, limit)
            resid = target(subsets) - model_values(subsets)
            rows.append((sigma, rep, float(np.mean(resid**2)), strings, redrawn))
    return rows


def _summaries(name, rows):
    out = []
    for sigma in sorted({r[0] for r in rows}):
        vals = np.array([r[2] for r in rows if r[0] == sigma])
        std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append([name, repr(sigma), repr(float(vals.mean())), repr(std), len(vals)])
    return out


def cmd_eval(args, cfg):
    chash = config_hash(cfg)
    out = _out_dir(cfg, args.out)
    test_path = args.test or cfg.get("data", {}).get("test") or out / "test.txt"
    test = _load_dataset(test_path)
    sigmas, reps, strings, seed = _eval_settings(args, cfg, test)
    models = []
    if args.checkpoint:
        ck = load_checkpoint(args.checkpoint)
        if ck.spec.d != test.d:
            raise ConfigError(f"checkpoint width d={ck.spec.d} does not match test width {test.d}")
        state = az.forward(ck.spec, ck.params)
        kind = ck.config.kind if ck.config else ob.PARITY
        locality = ck.config.max_locality if ck.config else ob.DEFAULT_MAX_LOCALITY
        models.append(("gbbm", lambda S: ob.expvals(state, S, kind, locality), kind, locality))
        mean, second, cov = ob.bit_moments(state, kind, locality)
        _write_matrix(out / "covariance_model.txt", cov, chash, "model bit covariance")
    for path in args.samples or []:
        samples = _load_dataset(path)
        if samples.d != test.d:
            raise ConfigError(f"sample file {path} has width {samples.d}, test set has {test.d}")
        models.append((Path(path).stem, tr.TargetExpvals(samples), ob.PARITY, None))
    if not models:
        raise ConfigError("eval needs --checkpoint and/or --samples")
    _write_matrix(out / "covariance_test.txt", ds.empirical_bit_covariance(test), chash, "empirical bit covariance")
    detail, summary = [], []
    for name, fn, kind, locality in models:
        rows = estimate_table(fn, test, sigmas, reps, strings, seed, kind, locality)
        detail += [[name, repr(s), r, repr(v), n, red] for s, r, v, n, red in rows]
        summary += _summaries(name, rows)
        redrawn = sum(r[4] for r in rows)
        if redrawn:
            print(f"{name}: {redrawn} strings above the locality cutoff were redrawn")
    _write_csv(out / "metrics.csv", METRIC_COLUMNS, detail, chash)
    _write_csv(out / "metrics_summary.csv", SUMMARY_COLUMNS, summary, chash)
    for row in summary:
        print(f"{row[0]:>12s}  sigma={float(row[1]):<8.4g} mmd2={float(row[2]):.6g} +- {float(row[3]):.2g}")
    return 0


# -- sample -----------------------------------------------------------------

def cmd_sample(args, cfg):
    chash = config_hash(cfg)
    ck = load_checkpoint(args.checkpoint)
    kind = args.kind or (ck.config.kind if ck.config else ob.PARITY)
    state = az.forward(ck.spec, ck.params)
    rng = np.random.default_rng(args.seed if args.seed is not None else int(cfg.get("seed", 0)))
    data = sp.sample(state, args.n, rng, kind, args.mode_limit)
    data.metadata.update({"config_hash": chash, "checkpoint": str(args.checkpoint)})
    out = Path(args.output) if args.output else _out_dir(cfg, args.out) / "samples.txt"
    ds.save(data, out)
    print(f"wrote {args.n} {kind} samples of width {state.d} to {out}")
    return 0


# -- baseline ---------------------------------------------------------------

def cmd_baseline(args, cfg):
    chash = config_hash(cfg)
    out = _out_dir(cfg, args.out)
    block = dict(cfg.get("baseline", {}))
    kind = args.kind or block.get("kind", "chowliu")
    n = args.n if args.n is not None else int(block.get("samples", 100_000))
    train = _load_dataset(args.train or cfg.get("data", {}).get("train") or out / "train.txt")
    rng = np.random.default_rng([int(cfg.get("seed", 0)) if args.seed is None else args.seed, 17])
    if kind == "chowliu":
        model = bl.chow_liu_fit(train, float(block.get("smoothing", 1.0)))
        model.save(out / "chowliu_model.json")
        with open(out / "chowliu_edges.json", "w") as fh:
            json.dump({"config_hash": chash, "circuit": az.graph_spec(train.d, model.edges).to_dict()}, fh, indent=1)
        samples = bl.tree_sample(model, n, rng)
        print("chow-liu edges: " + " ".join(f"{a}-{b}" for a, b in model.edges))
    elif kind == "uniform":
        samples = bl.uniform_sample(train.d, n, rng)
    else:
        raise ConfigError(f"unknown baseline kind {kind!r}")
    samples.metadata["config_hash"] = chash
    ds.save(samples, out / f"{kind}_samples.txt")
    test_path = args.test or cfg.get("data", {}).get("test")
    if test_path is None and (out / "test.txt").exists():
        test_path = out / "test.txt"
    if test_path is not None:
        test = _load_dataset(test_path)
        eval_args = argparse.Namespace(bandwidths=args.bandwidths, repetitions=None, strings=None, seed=args.seed)
        sigmas, reps, strings, seed = _eval_settings(eval_args, cfg, test)
        rows = estimate_table(tr.TargetExpvals(samples), test, sigmas, reps, strings, seed)
        _write_csv(out / f"{kind}_metrics.csv", SUMMARY_COLUMNS, _summaries(kind, rows), chash)
    print(f"wrote {n} {kind} baseline samples to {out}")
    return 0


# -- inspect ----------------------------------------------------------------

def cmd_inspect(args, cfg):
    ck = load_checkpoint(args.checkpoint)
    spec = ck.spec
    print(f"circuit: d={spec.d} layers={spec.layers} layout={spec.layout} edges={len(spec.edges)}")
    print(f"parameters: {ck.params.size}  episode: {ck.episode}  adam step: {ck.optimizer.step}")
    if ck.config is not None:
        c = ck.config
        print(f"training: kind={c.kind} lr={c.learning_rate} strings/step={c.strings_per_step} "
              f"episodes={c.episodes} seed={c.seed}")
        print("bandwidths: " + ", ".join(f"{s:.4g}" for s in c.bandwidths))
    state = az.forward(spec, ck.params)
    print(f"mean photon number: {state.photon_number():.6g}")
    if "config_hash" in ck.extra:
        print(f"config hash: {ck.extra['config_hash']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gbbm", description="Gaussian boson Born machine experiments")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS/LAPACK threads")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp_, config_required=False):
        sp_.add_argument("--config", required=config_required, help="JSON experiment config")
        sp_.add_argument("--out", help="output directory (overrides output_dir)")
        return sp_

    common(sub.add_parser("gen-data", help="generate train/test datasets"), True)
    t = common(sub.add_parser("train", help="train a circuit"), True)
    t.add_argument("--resume", help="checkpoint to continue from")

    e = common(sub.add_parser("eval", help="estimate MMD^2 against a test set"))
    e.add_argument("--checkpoint")
    e.add_argument("--samples", nargs="*", help="external sample files to score")
    e.add_argument("--test")
    e.add_argument("--bandwidths", type=float, nargs="+")
    e.add_argument("--repetitions", type=int)
    e.add_argument("--strings", type=int)
    e.add_argument("--seed", type=int)

    s = common(sub.add_parser("sample", help="draw samples from a checkpoint"))
    s.add_argument("--checkpoint", required=True)
    s.add_argument("-n", type=int, default=1000)
    s.add_argument("--kind", choices=ob.KINDS)
    s.add_argument("--output")
    s.add_argument("--seed", type=int)
    s.add_argument("--mode-limit", type=int, default=sp.DEFAULT_MODE_LIMIT)

    b = common(sub.add_parser("baseline", help="fit and sample a classical baseline"))
    b.add_argument("--kind", choices=("chowliu", "uniform"))
    b.add_argument("--train")
    b.add_argument("--test")
    b.add_argument("-n", type=int)
    b.add_argument("--bandwidths", type=float, nargs="+")
    b.add_argument("--seed", type=int)

    i = sub.add_parser("inspect", help="print a checkpoint summary")
    i.add_argument("checkpoint")
    i.set_defaults(config=None, out=None)
    return p


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "sample": cmd_sample,
    "baseline": cmd_baseline,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        if args.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                return COMMANDS[args.command](args, cfg)
        return COMMANDS[args.command](args, cfg)
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (NumericalError, StateInvalidError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (GBBMError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

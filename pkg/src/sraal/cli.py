"""Command-line entry points: run, score, init, gradcheck.

Every output file starts with a comment line carrying the resolved
configuration hash (and the seed where one participates), and all content
is formatted deterministically, so rerunning a command with the same inputs
reproduces the files byte for byte.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .active import LearningCurve, _counts, run_experiment
from .autodiff import grad_check
from .config import ConfigError, ExperimentConfig, config_from_dict, config_hash, load_config
from .datasets import DataError, generate, load_csv
from .indicators import entropy_indicators, oui_scores, sd_indicators
from .kcenter import EmbeddingSet, greedy_kcenter
from .losses import (
    LossWeights,
    disc_loss_graph,
    gen_adv_loss_graph,
    gen_objective_graph,
    stl_loss_graph,
    uir_loss_graph,
)
from .networks import (
    Architecture,
    adv_outputs_graph,
    discriminate_graph,
    init_sraal_params,
    lift_sraal_with,
    mlp_entries,
    sraal_entries,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CHECK = 4

GRADCHECK_TOLERANCE = 1e-4
WORKERS_ENV = "SRAAL_WORKERS"


def _fmt(x) -> str:
    return repr(float(x))


def _context_hash(command: str, payload: dict) -> str:
    blob = json.dumps({"command": command, **payload}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _file_sha(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# -- run ---------------------------------------------------------------


def _build_dataset(cfg: ExperimentConfig):
    ds = cfg.dataset
    if ds.kind == "csv":
        return load_csv(ds.path, has_labels=True, split_seed=ds.seed, checked=cfg.checked)
    return generate(ds.synthetic_spec(), checked=cfg.checked)


def _curve_path(out_dir: str, strategy: str, trial: int) -> str:
    return os.path.join(out_dir, f"curve_{strategy}_{trial}.csv")


def _write_curve(path: str, curve: LearningCurve, header: str) -> None:
    lines = [header, "iteration,labeled_fraction,test_accuracy,mean_indicator,disc_loss,seconds"]
    for r in curve.records:
        seconds = "" if r.seconds is None else _fmt(r.seconds)
        lines.append(
            f"{r.iteration},{_fmt(r.labeled_fraction)},{_fmt(r.test_accuracy)},"
            f"{_fmt(r.mean_indicator)},{_fmt(r.disc_loss)},{seconds}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _run_cell(cfg, dataset, strategy, trial):
    return strategy, trial, run_experiment(cfg, dataset, strategy, trial)


def run_cells(cfg: ExperimentConfig, dataset) -> dict:
    """All (strategy, trial) curves; worker count comes from SRAAL_WORKERS.

    Results merge by cell key, so the outcome is independent of scheduling.
    """
    cells = [(s, t) for s in cfg.strategies for t in range(cfg.trials)]
    workers = max(1, int(os.environ.get(WORKERS_ENV, "1")))
    curves = {}
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, cfg, dataset, s, t) for s, t in cells]
            for future in futures:
                strategy, trial, curve = future.result()
                curves[(strategy, trial)] = curve
    else:
        for s, t in cells:
            curves[(s, t)] = run_experiment(cfg, dataset, s, t)
    return curves


def summarize(cfg: ExperimentConfig, curves: dict, digest: str) -> dict:
    """Per-strategy mean and standard deviation of accuracy per budget point."""
    first = curves[(cfg.strategies[0], 0)]
    fractions = [r.labeled_fraction for r in first.records]
    strategies = {}
    for s in cfg.strategies:
        acc = np.array(
            [[r.test_accuracy for r in curves[(s, t)].records] for t in range(cfg.trials)]
        )
        strategies[s] = {
            "mean_accuracy": [float(v) for v in acc.mean(axis=0)],
            "std_accuracy": [float(v) for v in acc.std(axis=0)],
            "final_mean_accuracy": float(acc.mean(axis=0)[-1]),
            "final_std_accuracy": float(acc.std(axis=0)[-1]),
        }
    return {
        "command": "run",
        "config_hash": digest,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "labeled_fractions": [float(f) for f in fractions],
        "strategies": strategies,
    }


def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    if args.strategies is not None:
        cfg = replace(cfg, strategies=_parse_strategies(args.strategies))
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if cfg.trials < 1:
        raise ConfigError(f"trials: must be >= 1, got {cfg.trials}")
    digest = config_hash(cfg)
    dataset = _build_dataset(cfg)
    try:
        _counts(cfg, len(dataset.train_ids))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    curves = run_cells(cfg, dataset)
    os.makedirs(cfg.out_dir, exist_ok=True)
    for s in cfg.strategies:
        for t in range(cfg.trials):
            header = f"# sraal run config_hash={digest} seed={cfg.seed} strategy={s} trial={t}"
            _write_curve(_curve_path(cfg.out_dir, s, t), curves[(s, t)], header)
    summary = summarize(cfg, curves, digest)
    summary_path = os.path.join(cfg.out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(f"wrote {len(curves)} curves and {summary_path}")
    return EXIT_OK


def _parse_strategies(raw: str) -> tuple:
    names = tuple(s.strip() for s in raw.split(",") if s.strip())
    if not names:
        raise ConfigError("strategies: empty list")
    from .active import STRATEGIES

    for name in names:
        if name not in STRATEGIES:
            raise ConfigError(f"strategies: unknown strategy {name!r}; expected one of {STRATEGIES}")
    return names


# -- score -------------------------------------------------------------


def _read_prob_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip() and not line.startswith("#")]
    if not lines:
        raise DataError(f"{path}: empty file")
    header = lines[0].split(",")
    expected = [f"p{i}" for i in range(len(header))]
    if header != expected or len(header) < 2:
        raise DataError(f"{path}:1: header {header!r} does not match p0,...,p{{C-1}}")
    if len(lines) == 1:
        raise DataError(f"{path}: no data rows")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}")
        try:
            row = [float(c) for c in cells]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-numeric cell") from exc
        if any(v < -1e-9 or v > 1.0 + 1e-9 for v in row):
            raise DataError(f"{path}:{lineno}: probability outside [0, 1]")
        if abs(sum(row) - 1.0) > 1e-6:
            raise DataError(f"{path}:{lineno}: row sums to {sum(row)!r}, not 1")
        rows.append(row)
    return np.asarray(rows, dtype=np.float64)


def cmd_score(args) -> int:
    probs = _read_prob_csv(args.input)
    normalized = probs / probs.sum(axis=1, keepdims=True)
    oui = oui_scores(normalized)
    entropy = entropy_indicators(normalized)
    sd = sd_indicators(normalized)
    digest = _context_hash("score", {"input_sha256": _file_sha(args.input)})
    header = [f"p{i}" for i in range(probs.shape[1])] + ["oui", "entropy", "sd"]
    lines = [f"# sraal score config_hash={digest}", ",".join(header)]
    for i, row in enumerate(probs):
        cells = [_fmt(v) for v in row] + [_fmt(oui[i]), _fmt(entropy[i]), _fmt(sd[i])]
        lines.append(",".join(cells))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"scored {len(probs)} rows -> {args.out}")
    return EXIT_OK


# -- init --------------------------------------------------------------


def cmd_init(args) -> int:
    features = load_csv(args.embeddings, has_labels=False)
    n = len(features)
    if args.size > n:
        raise ConfigError(f"--size {args.size} exceeds the {n} embedded points")
    if not 1 <= args.seeds <= args.size:
        raise ConfigError(f"--seeds {args.seeds} outside [1, {args.size}]")
    embeddings = EmbeddingSet(features, np.arange(n))
    rng = np.random.default_rng(args.seed)
    selection = greedy_kcenter(embeddings, args.size, i=args.seeds, rng=rng)
    digest = _context_hash(
        "init",
        {
            "input_sha256": _file_sha(args.embeddings),
            "size": args.size,
            "seeds": args.seeds,
            "seed": args.seed,
        },
    )
    lines = [
        f"# sraal init config_hash={digest} seed={args.seed}",
        f"# covering_radius={_fmt(selection.radius)}",
        "order,id",
    ]
    lines += [f"{k},{cid}" for k, cid in enumerate(selection.chosen)]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"chose {args.size} centers, covering radius {selection.radius!r} -> {args.out}")
    return EXIT_OK


# -- gradcheck ---------------------------------------------------------

_GRADCHECK_ARCH = Architecture(latent_dim=3, trunk=(8,), decoder=(8,), discriminator=(8,), target=(8,))
_GRADCHECK_DIM = 6
_GRADCHECK_CLASSES = 3
_GRADCHECK_BATCH = 8


def _entry_subset(params, parts) -> dict:
    out = {}
    for part in parts:
        out.update(mlp_entries(part, getattr(params, part)))
    return out


def gradcheck_report(seed: int = 0, inits: int = 20) -> dict:
    """Max relative gradient error per loss over `inits` random initializations."""
    worst = {"uir": 0.0, "stl": 0.0, "disc": 0.0, "gen_adv": 0.0, "gen_total": 0.0}
    for trial in range(inits):
        rng = np.random.default_rng(np.random.SeedSequence((seed, trial)))
        params = init_sraal_params(_GRADCHECK_DIM, _GRADCHECK_CLASSES, _GRADCHECK_ARCH, rng)
        n = _GRADCHECK_BATCH
        d_z = _GRADCHECK_ARCH.latent_dim
        x_l = rng.standard_normal((n, _GRADCHECK_DIM))
        x_u = rng.standard_normal((n, _GRADCHECK_DIM))
        y_l = rng.integers(0, _GRADCHECK_CLASSES, n)
        noise = {key: rng.standard_normal((n, d_z)) for key in ("l_uir", "l_stl", "u_uir")}
        scores = rng.uniform(0.05, 0.95, n)
        u_l = rng.standard_normal((n, 2 * d_z))
        u_u = rng.standard_normal((n, 2 * d_z))
        weights = LossWeights(*rng.uniform(0.5, 1.5, 3))
        all_entries = sraal_entries(params)

        def lifted_with(tape, leaves):
            return lift_sraal_with(tape, params, leaves)

        cases = {
            "uir": (
                _entry_subset(params, ("trunk", "head_uir", "decoder_uir")),
                lambda tape, leaves: uir_loss_graph(
                    tape, lifted_with(tape, leaves), x_l, x_u, noise["l_uir"], noise["u_uir"]
                ),
            ),
            "stl": (
                _entry_subset(params, ("trunk", "head_stl", "decoder_stl")),
                lambda tape, leaves: stl_loss_graph(
                    tape, lifted_with(tape, leaves), x_l, y_l, noise["l_stl"], _GRADCHECK_CLASSES
                ),
            ),
            "disc": (
                _entry_subset(params, ("discriminator",)),
                lambda tape, leaves: disc_loss_graph(
                    tape,
                    discriminate_graph(tape, lifted_with(tape, leaves), tape.constant(u_l)),
                    discriminate_graph(tape, lifted_with(tape, leaves), tape.constant(u_u)),
                    scores,
                ),
            ),
            "gen_adv": (
                _entry_subset(params, ("trunk", "head_uir", "head_stl")),
                lambda tape, leaves: gen_adv_loss_graph(
                    tape, *adv_outputs_graph(tape, lifted_with(tape, leaves), x_l, x_u)
                ),
            ),
            "gen_total": (
                {k: v for k, v in all_entries.items() if not k.startswith("discriminator")},
                lambda tape, leaves: gen_objective_graph(
                    tape, lifted_with(tape, leaves), x_l, x_u, y_l, noise, weights,
                    _GRADCHECK_CLASSES,
                ),
            ),
        }
        for name, (subset, build) in cases.items():
            err = grad_check(build, subset, h=1e-5)
            if err > worst[name]:
                worst[name] = err
    return worst


def cmd_gradcheck(args) -> int:
    inits = args.trials if args.trials is not None else 20
    report = gradcheck_report(seed=args.seed if args.seed is not None else 0, inits=inits)
    failed = False
    for name, err in report.items():
        status = "ok" if err < GRADCHECK_TOLERANCE else "FAIL"
        failed = failed or status == "FAIL"
        print(f"{name}: max relative error {err:.3e} [{status}]")
    return EXIT_CHECK if failed else EXIT_OK


# -- parser ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sraal",
        description="Active-learning experiments with a state-relabeling adversarial sampler.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured experiment grid")
    p_run.add_argument("--config", help="TOML experiment configuration")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, help="master seed (overrides config)")
    p_run.add_argument("--trials", type=int, help="trial count (overrides config)")
    p_run.add_argument("--strategies", help="comma-separated strategies (overrides config)")
    p_run.set_defaults(func=cmd_run)

    p_score = sub.add_parser("score", help="append indicator columns to a probability CSV")
    p_score.add_argument("input", help="CSV with header p0,...,p{C-1}")
    p_score.add_argument("--out", required=True, help="output CSV path")
    p_score.set_defaults(func=cmd_score)

    p_init = sub.add_parser("init", help="greedy k-center pool initialization")
    p_init.add_argument("embeddings", help="CSV with header f0,...,f{d-1}")
    p_init.add_argument("--size", type=int, required=True, help="number of centers to choose")
    p_init.add_argument("--seeds", type=int, default=1, help="random starting points")
    p_init.add_argument("--seed", type=int, default=0)
    p_init.add_argument("--out", required=True, help="output file path")
    p_init.set_defaults(func=cmd_init)

    p_check = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--trials", type=int, help="random initializations (default 20)")
    p_check.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

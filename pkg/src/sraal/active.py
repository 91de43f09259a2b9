"""Pool state machine, training schedules, sampling strategies, experiments.

One experiment cell = (strategy, trial).  The flow per cell:

    init pools -> repeat { train target -> evaluate -> score unlabeled ->
                           train generator+discriminator -> select K ->
                           oracle labels them } until the budget is reached

Determinism: every cell derives its random streams from
(master seed, trial, strategy), except pool initialization which uses
(master seed, trial) only, so all strategies of a trial start from the same
labeled pool and any two runs with equal configuration match bitwise.

Selection direction for the adversarial family: the discriminator is trained
toward 1 on labeled samples and below the relabeled state on unlabeled ones,
so the K smallest outputs are the samples it is most confident are
unlabeled-like, i.e. least covered by the labeled pool.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .datasets import Dataset
from .indicators import entropy_indicators, oui_scores, sd_indicators
from .kcenter import EmbeddingSet, greedy_additions, greedy_kcenter
from .losses import LossWeights, disc_loss_graph, gen_objective_graph, one_hot, uir_loss_graph
from .networks import (
    Architecture,
    SraalParams,
    TargetParams,
    discriminate,
    encode,
    generator_entries,
    init_sraal_params,
    init_target_params,
    lift_mlp,
    lift_sraal,
    lift_target,
    mlp_entries,
    mlp_graph,
    target_entries,
    target_logits_graph,
    target_predict,
    unified_means,
)
from .optim import OptimState, optimizer_step

STRATEGIES = (
    "sraal",
    "sraal-no-oui",
    "sraal-no-stl",
    "sraal-entropy-indicator",
    "sraal-sd-indicator",
    "random",
    "entropy-topk",
    "kcenter-coreset",
)
_STRATEGY_INDEX = {name: k for k, name in enumerate(STRATEGIES)}
INIT_MODES = ("random", "kcenter")


@dataclass(frozen=True)
class Schedule:
    """Epoch counts and optimizer settings shared by all training loops."""

    target_epochs: int = 100
    sraal_epochs: int = 50
    uir_pretrain_epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3


@dataclass(frozen=True)
class PoolState:
    """Partition of the train ids into labeled and unlabeled, plus a counter."""

    labeled: np.ndarray
    unlabeled: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "labeled", np.sort(np.asarray(self.labeled, dtype=np.int64)))
        object.__setattr__(self, "unlabeled", np.sort(np.asarray(self.unlabeled, dtype=np.int64)))
        if np.intersect1d(self.labeled, self.unlabeled).size:
            raise ValueError("labeled and unlabeled pools overlap")
        for part in (self.labeled, self.unlabeled):
            if len(np.unique(part)) != len(part):
                raise ValueError("pool contains duplicate ids")


@dataclass
class TrialModels:
    """Models available to a selection strategy at one iteration."""

    target: TargetParams | None = None
    sraal: SraalParams | None = None


@dataclass
class CurveRecord:
    iteration: int
    labeled_fraction: float
    test_accuracy: float
    mean_indicator: float
    disc_loss: float
    seconds: float | None = None


@dataclass
class LearningCurve:
    strategy: str
    trial: int
    records: list


def indicator_for(strategy: str):
    """State-scoring function for a strategy (used in training and diagnostics)."""
    if strategy == "sraal-no-oui":
        return lambda probs: np.ones(len(np.atleast_2d(probs)))
    if strategy == "sraal-entropy-indicator":
        return entropy_indicators
    if strategy == "sraal-sd-indicator":
        return sd_indicators
    return oui_scores


def weights_for(strategy: str, weights: LossWeights) -> LossWeights:
    if strategy == "sraal-no-stl":
        return replace(weights, lambda2=0.0)
    return weights


def is_adversarial(strategy: str) -> bool:
    return strategy.startswith("sraal")


def init_pools(
    dataset: Dataset,
    m: int,
    mode: str,
    rng: np.random.Generator,
    arch: Architecture | None = None,
    schedule: Schedule | None = None,
) -> PoolState:
    """Initial labeled pool of size m, drawn uniformly or by greedy k-center.

    The k-center mode first fits the reconstruction branch on the whole train
    split (no labels involved) and covers its posterior-mean embedding.
    """
    n_train = len(dataset.train_ids)
    if not 1 <= m <= n_train:
        raise ValueError(f"initial pool size {m} outside [1, {n_train}]")
    if mode == "random":
        labeled = rng.choice(dataset.train_ids, size=m, replace=False)
    elif mode == "kcenter":
        params = pretrain_reconstructor(
            dataset, arch or Architecture(), schedule or Schedule(), rng
        )
        code_uir, _ = encode(params, dataset.features[dataset.train_ids])
        embeddings = EmbeddingSet(code_uir.mean, dataset.train_ids)
        labeled = np.asarray(greedy_kcenter(embeddings, m, i=1, rng=rng).chosen)
    else:
        raise ValueError(f"unknown init mode {mode!r}; expected one of {INIT_MODES}")
    unlabeled = np.setdiff1d(dataset.train_ids, labeled)
    return PoolState(labeled, unlabeled, 0)


def pretrain_reconstructor(
    dataset: Dataset, arch: Architecture, schedule: Schedule, rng: np.random.Generator
) -> SraalParams:
    """Fit the reconstruction branch on all train samples, labels untouched."""
    X = dataset.features[dataset.train_ids]
    params = init_sraal_params(dataset.feature_dim, dataset.n_classes, arch, rng)
    arrays = {}
    for part in ("trunk", "head_uir", "decoder_uir"):
        arrays.update(mlp_entries(part, getattr(params, part)))
    state = OptimState("adam", lr=schedule.learning_rate)
    for _ in range(schedule.uir_pretrain_epochs):
        order = rng.permutation(len(X))
        for s in range(0, len(X), schedule.batch_size):
            idx = order[s : s + schedule.batch_size]
            noise = rng.standard_normal((len(idx), arch.latent_dim))
            tape = Tape(checked=dataset.checked)
            lifted = lift_sraal(tape, params, train_generator=True, train_discriminator=False)
            loss = uir_loss_graph(tape, lifted, None, X[idx], None, noise)
            lifted_arrays = {}
            for part in ("trunk", "head_uir", "decoder_uir"):
                lifted_arrays.update(mlp_entries(part, getattr(lifted, part)))
            grads = ad.gradients(tape, loss, lifted_arrays)
            optimizer_step(state, arrays, grads)
    return params


def train_target(
    dataset: Dataset,
    pool: PoolState,
    schedule: Schedule,
    arch: Architecture,
    rng: np.random.Generator,
) -> TargetParams:
    """Cross-entropy training of the target classifier on the labeled pool only."""
    if len(pool.labeled) == 0:
        raise ValueError("labeled pool is empty")
    X = dataset.features[pool.labeled]
    y = dataset.labels_of(pool.labeled, allowed=pool.labeled)
    targets = one_hot(y, dataset.n_classes)
    params = init_target_params(dataset.feature_dim, dataset.n_classes, arch, rng)
    arrays = target_entries(params)
    state = OptimState("adam", lr=schedule.learning_rate)
    for _ in range(schedule.target_epochs):
        order = rng.permutation(len(X))
        for s in range(0, len(X), schedule.batch_size):
            idx = order[s : s + schedule.batch_size]
            tape = Tape(checked=dataset.checked)
            lifted = lift_target(tape, params)
            probs = ad.softmax(target_logits_graph(tape, lifted, tape.constant(X[idx])))
            ce = -ad.reduce_sum(tape.constant(targets[idx]) * ad.log(probs))
            loss = (1.0 / len(idx)) * ce
            grads = ad.gradients(tape, loss, target_entries(lifted))
            optimizer_step(state, arrays, grads)
    return params


def evaluate_target(params: TargetParams, dataset: Dataset) -> float:
    """Top-1 accuracy on the held-out test split."""
    probs = target_predict(params, dataset.features[dataset.test_ids])
    return float((probs.argmax(axis=1) == dataset.test_labels()).mean())


def _batch_cycler(n: int, batch_size: int, rng: np.random.Generator):
    while True:
        order = rng.permutation(n)
        for s in range(0, n, batch_size):
            yield order[s : s + batch_size]


def train_sraal(
    dataset: Dataset,
    pool: PoolState,
    scores: np.ndarray,
    weights: LossWeights,
    schedule: Schedule,
    arch: Architecture,
    rng: np.random.Generator,
    telemetry: dict | None = None,
) -> SraalParams:
    """Alternating generator/discriminator optimization for one iteration.

    `scores` holds the relabeled state of every unlabeled sample, aligned
    with pool.unlabeled; they stay frozen for the whole call.  Each minibatch
    pair does one generator step on the weighted total objective, then one
    discriminator step on the state-relabeled loss with the generator frozen.
    Latent samples are drawn fresh for every step.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(pool.unlabeled),):
        raise ValueError(
            f"need one score per unlabeled id: got {scores.shape}, expected ({len(pool.unlabeled)},)"
        )
    if not np.isfinite(scores).all():
        raise ValueError("indicator scores must be finite")
    X_l = dataset.features[pool.labeled]
    y_l = dataset.labels_of(pool.labeled, allowed=pool.labeled)
    X_u = dataset.features[pool.unlabeled]
    params = init_sraal_params(dataset.feature_dim, dataset.n_classes, arch, rng)
    if schedule.sraal_epochs == 0:
        return params
    gen_arrays = generator_entries(params)
    disc_arrays = dict(mlp_entries("discriminator", params.discriminator))
    gen_state = OptimState("adam", lr=schedule.learning_rate)
    disc_state = OptimState("adam", lr=schedule.learning_rate)
    lab_batches = _batch_cycler(len(X_l), schedule.batch_size, rng)
    d_z = arch.latent_dim
    disc_running: list[float] = []

    def draw_noise(n_l, n_u):
        return {
            "l_uir": rng.standard_normal((n_l, d_z)),
            "l_stl": rng.standard_normal((n_l, d_z)),
            "u_uir": rng.standard_normal((n_u, d_z)),
        }

    for epoch in range(schedule.sraal_epochs):
        last_epoch = epoch == schedule.sraal_epochs - 1
        order = rng.permutation(len(X_u))
        for s in range(0, len(X_u), schedule.batch_size):
            u_idx = order[s : s + schedule.batch_size]
            l_idx = next(lab_batches)

            tape = Tape(checked=dataset.checked)
            lifted = lift_sraal(tape, params, train_generator=True, train_discriminator=False)
            total = gen_objective_graph(
                tape, lifted, X_l[l_idx], X_u[u_idx], y_l[l_idx],
                draw_noise(len(l_idx), len(u_idx)), weights, dataset.n_classes,
            )
            grads = ad.gradients(tape, total, generator_entries(lifted))
            optimizer_step(gen_state, gen_arrays, grads)

            u_rep_l = unified_means(params, X_l[l_idx])
            u_rep_u = unified_means(params, X_u[u_idx])
            tape = Tape(checked=dataset.checked)
            disc_vars = lift_mlp(tape, params.discriminator, trainable=True)
            d_l = mlp_graph(tape, disc_vars, tape.constant(u_rep_l), final="sigmoid")
            d_u = mlp_graph(tape, disc_vars, tape.constant(u_rep_u), final="sigmoid")
            dloss = disc_loss_graph(tape, d_l, d_u, scores[u_idx])
            grads = ad.gradients(tape, dloss, dict(mlp_entries("discriminator", disc_vars)))
            optimizer_step(disc_state, disc_arrays, grads)
            if last_epoch:
                disc_running.append(float(dloss.value))

    if telemetry is not None:
        telemetry["disc_loss"] = float(np.mean(disc_running))
    return params


def select(
    strategy: str,
    dataset: Dataset,
    pool: PoolState,
    models: TrialModels,
    k: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """K unlabeled ids chosen by the strategy; ties break toward smaller ids."""
    unlabeled = pool.unlabeled
    if not 1 <= k <= len(unlabeled):
        raise ValueError(f"k={k} outside [1, {len(unlabeled)}]")
    if strategy == "random":
        return rng.choice(unlabeled, size=k, replace=False)
    if strategy == "entropy-topk":
        probs = target_predict(models.target, dataset.features[unlabeled])
        entropy = entropy_indicators(probs)
        order = np.lexsort((unlabeled, -entropy))
        return unlabeled[order[:k]]
    if strategy == "kcenter-coreset":
        train_ids = np.concatenate([pool.labeled, pool.unlabeled])
        train_ids.sort()
        embeddings = EmbeddingSet(dataset.features[train_ids], train_ids)
        centers = np.searchsorted(train_ids, pool.labeled).tolist()
        added = greedy_additions(embeddings, centers, k)
        return train_ids[added]
    if is_adversarial(strategy):
        u = unified_means(models.sraal, dataset.features[unlabeled])
        d = discriminate(models.sraal, u)
        order = np.lexsort((unlabeled, d))
        return unlabeled[order[:k]]
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


def oracle_label(pool: PoolState, ids) -> PoolState:
    """Move `ids` from unlabeled to labeled and advance the iteration counter."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("need at least one id to label")
    if len(np.unique(ids)) != len(ids):
        raise ValueError("duplicate ids in labeling request")
    if not np.isin(ids, pool.unlabeled).all():
        outside = ids[~np.isin(ids, pool.unlabeled)]
        raise ValueError(f"ids not in the unlabeled pool (already labeled?): {outside[:5].tolist()}")
    return PoolState(
        np.concatenate([pool.labeled, ids]),
        np.setdiff1d(pool.unlabeled, ids),
        pool.iteration + 1,
    )


def _counts(cfg, n_train: int) -> tuple[int, int, int]:
    m = int(round(cfg.labeled_fraction * n_train))
    k = int(round(cfg.step_fraction * n_train))
    budget = int(round(cfg.budget_fraction * n_train))
    if m < 1 or k < 1:
        raise ValueError(f"fractions too small for {n_train} train samples (M={m}, K={k})")
    if budget < m:
        raise ValueError(f"budget {budget} below the initial pool size {m}")
    if budget > n_train:
        raise ValueError(f"budget {budget} exceeds {n_train} train samples")
    return m, k, budget


def run_experiment(cfg, dataset: Dataset, strategy: str, trial: int) -> LearningCurve:
    """One (strategy, trial) cell; see the module docstring for the flow.

    `cfg` provides seed, fractions, init mode, weights, architecture,
    schedule, and the timing flag (an ExperimentConfig fits).
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    n_train = len(dataset.train_ids)
    m, k, budget = _counts(cfg, n_train)
    rounds = (budget - m) // k

    init_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, trial, 0)))
    rng = np.random.default_rng(
        np.random.SeedSequence((cfg.seed, trial, 1, _STRATEGY_INDEX[strategy]))
    )
    pool = init_pools(dataset, m, cfg.init, init_rng, arch=cfg.architecture, schedule=cfg.schedule)
    indicator = indicator_for(strategy)
    weights = weights_for(strategy, cfg.weights)

    records = []
    for it in range(rounds + 1):
        t0 = time.perf_counter() if cfg.timing else None
        target = train_target(dataset, pool, cfg.schedule, cfg.architecture, rng)
        accuracy = evaluate_target(target, dataset)
        probs_u = target_predict(target, dataset.features[pool.unlabeled])
        scores = indicator(probs_u)
        disc_diag = float("nan")
        models = TrialModels(target=target)
        if it < rounds:
            if is_adversarial(strategy):
                telemetry: dict = {}
                models.sraal = train_sraal(
                    dataset, pool, scores, weights, cfg.schedule, cfg.architecture, rng, telemetry
                )
                disc_diag = telemetry["disc_loss"]
            chosen = select(strategy, dataset, pool, models, k, rng)
        seconds = (time.perf_counter() - t0) if cfg.timing else None
        records.append(
            CurveRecord(
                iteration=it,
                labeled_fraction=len(pool.labeled) / n_train,
                test_accuracy=accuracy,
                mean_indicator=float(scores.mean()),
                disc_loss=disc_diag,
                seconds=seconds,
            )
        )
        if it < rounds:
            pool = oracle_label(pool, chosen)
    return LearningCurve(strategy, trial, records)

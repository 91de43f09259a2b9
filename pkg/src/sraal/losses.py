"""Training objectives for the generator, the discriminator, and the target.

Sign convention, applied once and everywhere: the two evidence-lower-bound
objectives are maximization targets, so this module returns their negations
and every quantity here is minimized.

The reconstruction likelihood is Gaussian with fixed unit variance, so up to
additive constants the per-sample reconstruction term is half the squared
error summed over feature dimensions.  The per-sample Kullback-Leibler term
against the standard-normal prior uses the closed form

    0.5 * sum(mean^2 + exp(log_var) - 1 - log_var).

The discriminator objective pushes outputs on labeled data toward 1 and
outputs on unlabeled data below that sample's relabeled state `s`:

    -mean(log d_L) - mean(log(s - d_U))

The log primitive clamps at 1e-12, which keeps the second term finite when
d_U >= s (the gradient is then zero, exactly the derivative of the clamped
forward).  With s identically 1 this reduces bitwise to the plain binary
adversarial loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var
from .networks import (
    LatentCode,
    SraalParams,
    decode_uir_graph,
    discriminate_graph,
    encode_graph,
    lift_sraal,
    reparameterize_graph,
    stl_logits_graph,
    unified_graph,
)


@dataclass(frozen=True)
class LossWeights:
    """Nonnegative mixing weights for the total generator objective."""

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(
            f"labels must lie in [0, {n_classes}); found range "
            f"[{labels.min()}, {labels.max()}] (negative means unlabeled)"
        )
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def kl_graph(tape: Tape, code: LatentCode) -> Var:
    """KL against the standard-normal prior, summed over every entry."""
    m, lv = code.mean, code.log_variance
    return 0.5 * ad.reduce_sum(m * m + ad.exp(lv) - 1.0 - lv)


def _recon_graph(tape: Tape, x_hat: Var, x: Var) -> Var:
    diff = x_hat - x
    return 0.5 * ad.reduce_sum(diff * diff)


def uir_loss_graph(
    tape: Tape,
    lifted: SraalParams,
    batch_l: np.ndarray | None,
    batch_u: np.ndarray | None,
    noise_l: np.ndarray | None,
    noise_u: np.ndarray | None,
    reduction: str = "mean",
) -> Var:
    """Reconstruction negative ELBO over both pools (either batch may be empty)."""
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    total = None
    for batch, noise in ((batch_l, noise_l), (batch_u, noise_u)):
        if batch is None or len(batch) == 0:
            continue
        x = tape.constant(batch)
        code_uir, _ = encode_graph(tape, lifted, x)
        z = reparameterize_graph(tape, code_uir, noise)
        x_hat = decode_uir_graph(tape, lifted, z)
        pool = _recon_graph(tape, x_hat, x) + kl_graph(tape, code_uir)
        if reduction == "mean":
            pool = (1.0 / len(batch)) * pool
        total = pool if total is None else total + pool
    if total is None:
        raise ValueError("both batches empty")
    return total


def stl_loss_graph(
    tape: Tape,
    lifted: SraalParams,
    batch_l: np.ndarray,
    labels: np.ndarray,
    noise_l: np.ndarray,
    n_classes: int,
    reduction: str = "mean",
) -> Var:
    """Cross-entropy plus KL on the label-trained code; labeled samples only."""
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    if len(batch_l) == 0:
        raise ValueError("labeled batch empty")
    targets = tape.constant(one_hot(labels, n_classes))
    x = tape.constant(batch_l)
    _, code_stl = encode_graph(tape, lifted, x)
    z = reparameterize_graph(tape, code_stl, noise_l)
    probs = ad.softmax(stl_logits_graph(tape, lifted, z))
    ce = -ad.reduce_sum(targets * ad.log(probs))
    pool = ce + kl_graph(tape, code_stl)
    if reduction == "mean":
        pool = (1.0 / len(batch_l)) * pool
    return pool


def disc_loss_graph(tape: Tape, d_l: Var, d_u: Var, scores: np.ndarray) -> Var:
    """State-relabeled discriminator loss; see module docstring."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size != d_u.value.shape[0]:
        raise ValueError(
            f"got {scores.size} indicator scores for {d_u.value.shape[0]} unlabeled outputs"
        )
    s = tape.constant(scores.reshape(d_u.value.shape))
    term_l = ad.reduce_mean(ad.log(d_l))
    term_u = ad.reduce_mean(ad.log(s - d_u))
    return -(term_l + term_u)


def gen_adv_loss_graph(tape: Tape, d_l: Var, d_u: Var) -> Var:
    """Generator adversarial loss: push both pools toward the labeled state."""
    return -(ad.reduce_mean(ad.log(d_l)) + ad.reduce_mean(ad.log(d_u)))


def gen_total_loss_graph(tape: Tape, weights: LossWeights, uir: Var, stl: Var, adv: Var) -> Var:
    return weights.lambda1 * uir + weights.lambda2 * stl + weights.lambda3 * adv


def gen_objective_graph(
    tape: Tape,
    lifted: SraalParams,
    x_l: np.ndarray,
    x_u: np.ndarray,
    labels: np.ndarray,
    noise: dict,
    weights: LossWeights,
    n_classes: int,
) -> Var:
    """Weighted total generator objective sharing one encode per pool.

    Equals lambda1*uir + lambda2*stl + lambda3*adv for the same latent draws
    (`noise` keys l_uir/l_stl/u_uir/u_stl); terms with zero weight are left
    out of the graph entirely, so ablations are exact, not approximate.
    """
    xl, xu = tape.constant(x_l), tape.constant(x_u)
    code_l_uir, code_l_stl = encode_graph(tape, lifted, xl)
    code_u_uir, code_u_stl = encode_graph(tape, lifted, xu)
    z_l_uir = reparameterize_graph(tape, code_l_uir, noise["l_uir"])
    z_u_uir = reparameterize_graph(tape, code_u_uir, noise["u_uir"])

    pool_l = (1.0 / len(x_l)) * (
        _recon_graph(tape, decode_uir_graph(tape, lifted, z_l_uir), xl) + kl_graph(tape, code_l_uir)
    )
    pool_u = (1.0 / len(x_u)) * (
        _recon_graph(tape, decode_uir_graph(tape, lifted, z_u_uir), xu) + kl_graph(tape, code_u_uir)
    )
    total = weights.lambda1 * (pool_l + pool_u)

    if weights.lambda2 != 0.0:
        z_l_stl = reparameterize_graph(tape, code_l_stl, noise["l_stl"])
        probs = ad.softmax(stl_logits_graph(tape, lifted, z_l_stl))
        ce = -ad.reduce_sum(tape.constant(one_hot(labels, n_classes)) * ad.log(probs))
        stl = (1.0 / len(x_l)) * (ce + kl_graph(tape, code_l_stl))
        total = total + weights.lambda2 * stl

    if weights.lambda3 != 0.0:
        # The adversarial path runs on posterior means: the discriminator sees
        # the same deterministic embedding it scores with at selection time,
        # and the latent signal is not buried under sampling noise.
        d_l = discriminate_graph(tape, lifted, unified_graph(tape, code_l_uir.mean, code_l_stl.mean))
        d_u = discriminate_graph(tape, lifted, unified_graph(tape, code_u_uir.mean, code_u_stl.mean))
        total = total + weights.lambda3 * gen_adv_loss_graph(tape, d_l, d_u)
    return total


def kl_gaussian(code: LatentCode) -> float:
    """Closed-form KL(q || standard normal) for one latent code; always >= 0."""
    m = np.asarray(code.mean, dtype=np.float64)
    lv = np.asarray(code.log_variance, dtype=np.float64)
    if m.shape != lv.shape:
        raise ValueError(f"mean shape {m.shape} != log_variance shape {lv.shape}")
    return float(0.5 * np.sum(m * m + np.exp(lv) - 1.0 - lv))


def uir_loss(
    params: SraalParams,
    batch_l,
    batch_u,
    noise_l,
    noise_u,
    reduction: str = "mean",
) -> float:
    tape = Tape()
    lifted = lift_sraal(tape, params, train_generator=False, train_discriminator=False)
    return float(uir_loss_graph(tape, lifted, _arr(batch_l), _arr(batch_u),
                                _arr(noise_l), _arr(noise_u), reduction).value)


def stl_loss(params: SraalParams, batch_l, labels, noise_l, reduction: str = "mean") -> float:
    tape = Tape()
    lifted = lift_sraal(tape, params, train_generator=False, train_discriminator=False)
    n_classes = params.decoder_stl.weights[-1].shape[1]
    return float(
        stl_loss_graph(
            tape, lifted, _arr(batch_l), np.asarray(labels), _arr(noise_l), n_classes, reduction
        ).value
    )


def disc_loss(d_l, d_u, s_u) -> float:
    d_l, d_u, s_u = _arr(d_l), _arr(d_u), _arr(s_u)
    if d_u.size != s_u.size:
        raise ValueError(f"{d_u.size} unlabeled outputs but {s_u.size} indicator scores")
    tape = Tape()
    return float(
        disc_loss_graph(
            tape,
            tape.constant(d_l.reshape(-1, 1)),
            tape.constant(d_u.reshape(-1, 1)),
            s_u,
        ).value
    )


def gen_adv_loss(d_l, d_u) -> float:
    tape = Tape()
    return float(
        gen_adv_loss_graph(
            tape,
            tape.constant(_arr(d_l).reshape(-1, 1)),
            tape.constant(_arr(d_u).reshape(-1, 1)),
        ).value
    )


def gen_total_loss(weights: LossWeights, uir: float, stl: float, adv: float) -> float:
    for name, value in (("uir", uir), ("stl", stl), ("adv", adv)):
        if not np.isfinite(value):
            raise ValueError(f"{name} component is not finite: {value}")
    return weights.lambda1 * uir + weights.lambda2 * stl + weights.lambda3 * adv


def _arr(x) -> np.ndarray | None:
    return None if x is None else np.asarray(x, dtype=np.float64)

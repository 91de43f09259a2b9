"""Parameter containers and forward passes for the five networks.

The generator half is a shared MLP trunk feeding two linear heads, each
emitting (mean, log-variance) for a diagonal Gaussian posterior: one latent
code is trained by reconstruction, the other by label prediction.  Their
samples are concatenated (reconstruction half first) into the unified
representation consumed by the discriminator.  The target model is an
independent MLP classifier.

Forward passes come in two flavours sharing one code path: `*_graph`
functions build nodes on a caller-supplied tape (used by training and by
gradient checks), and the plain-array wrappers run a throwaway tape and
return numpy values (used for scoring, selection, and evaluation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var


@dataclass
class LatentCode:
    """Gaussian posterior parameters for one encoder head.

    Entries are numpy arrays outside a tape and Vars inside one; either way
    mean and log_variance agree in length.
    """

    mean: object
    log_variance: object


@dataclass
class Mlp:
    """Per-layer weight matrices (in, out) and bias vectors (out,).

    Hidden layers use tanh (smooth activations keep the finite-difference
    gradient verification free of kink artifacts); the output layer is linear
    unless the forward call applies a final nonlinearity.  Entries are arrays
    for stored parameters and Vars once lifted onto a tape.
    """

    weights: list
    biases: list


@dataclass(frozen=True)
class Architecture:
    """Layer widths for all networks; latent_dim is the size of each code."""

    latent_dim: int = 8
    trunk: tuple = (64,)
    decoder: tuple = (64,)
    discriminator: tuple = (32,)
    target: tuple = (64,)


@dataclass
class SraalParams:
    """Generator (trunk, heads, decoders) plus discriminator parameters."""

    trunk: Mlp
    head_uir: Mlp
    head_stl: Mlp
    decoder_uir: Mlp
    decoder_stl: Mlp
    discriminator: Mlp
    latent_dim: int


@dataclass
class TargetParams:
    """MLP classifier mapping features to class logits."""

    net: Mlp
    n_classes: int


def init_mlp(sizes, rng: np.random.Generator) -> Mlp:
    """Xavier-normal weights, zero biases, for consecutive layer sizes."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = np.sqrt(1.0 / fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases)


DISC_BIAS_INIT = -3.0


def init_sraal_params(
    feature_dim: int, n_classes: int, arch: Architecture, rng: np.random.Generator
) -> SraalParams:
    d_z = arch.latent_dim
    trunk_sizes = (feature_dim, *arch.trunk)
    h = trunk_sizes[-1]
    params = SraalParams(
        trunk=init_mlp(trunk_sizes, rng),
        head_uir=init_mlp((h, 2 * d_z), rng),
        head_stl=init_mlp((h, 2 * d_z), rng),
        decoder_uir=init_mlp((d_z, *arch.decoder, feature_dim), rng),
        decoder_stl=init_mlp((d_z, n_classes), rng),
        discriminator=init_mlp((2 * d_z, *arch.discriminator, 1), rng),
        latent_dim=d_z,
    )
    # Start the discriminator output near 0 so the relabeled-state loss opens
    # inside its valid domain (output below every sample's state); the clamped
    # region of log(state - output) carries no gradient to recover from.
    params.discriminator.biases[-1][:] = DISC_BIAS_INIT
    return params


def init_target_params(
    feature_dim: int, n_classes: int, arch: Architecture, rng: np.random.Generator
) -> TargetParams:
    return TargetParams(init_mlp((feature_dim, *arch.target, n_classes), rng), n_classes)


def mlp_entries(prefix: str, mlp: Mlp):
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        yield f"{prefix}.w{i}", w
        yield f"{prefix}.b{i}", b


_SRAAL_PARTS = ("trunk", "head_uir", "head_stl", "decoder_uir", "decoder_stl", "discriminator")


def sraal_entries(params: SraalParams) -> dict:
    out = {}
    for part in _SRAAL_PARTS:
        out.update(mlp_entries(part, getattr(params, part)))
    return out


def generator_entries(params: SraalParams) -> dict:
    """All trainable generator arrays (everything except the discriminator)."""
    out = {}
    for part in _SRAAL_PARTS[:-1]:
        out.update(mlp_entries(part, getattr(params, part)))
    return out


def target_entries(params: TargetParams) -> dict:
    return dict(mlp_entries("target", params.net))


def lift_mlp(tape: Tape, mlp: Mlp, trainable: bool) -> Mlp:
    make = tape.parameter if trainable else tape.constant
    return Mlp([make(w) for w in mlp.weights], [make(b) for b in mlp.biases])


def lift_sraal(
    tape: Tape,
    params: SraalParams,
    train_generator: bool = True,
    train_discriminator: bool = True,
) -> SraalParams:
    """Put every parameter on the tape; frozen groups become constants."""
    return SraalParams(
        trunk=lift_mlp(tape, params.trunk, train_generator),
        head_uir=lift_mlp(tape, params.head_uir, train_generator),
        head_stl=lift_mlp(tape, params.head_stl, train_generator),
        decoder_uir=lift_mlp(tape, params.decoder_uir, train_generator),
        decoder_stl=lift_mlp(tape, params.decoder_stl, train_generator),
        discriminator=lift_mlp(tape, params.discriminator, train_discriminator),
        latent_dim=params.latent_dim,
    )


def lift_target(tape: Tape, params: TargetParams, trainable: bool = True) -> TargetParams:
    return TargetParams(lift_mlp(tape, params.net, trainable), params.n_classes)


def lift_sraal_with(tape: Tape, params: SraalParams, leaves: dict) -> SraalParams:
    """Lift params reusing caller-provided Vars by entry name, constants elsewhere.

    Lets a gradient check differentiate an arbitrary subset of parameters.
    """

    def pick(name, array):
        var = leaves.get(name)
        return var if var is not None else tape.constant(array)

    parts = {}
    for part in _SRAAL_PARTS:
        mlp = getattr(params, part)
        parts[part] = Mlp(
            [pick(f"{part}.w{i}", w) for i, w in enumerate(mlp.weights)],
            [pick(f"{part}.b{i}", b) for i, b in enumerate(mlp.biases)],
        )
    return SraalParams(latent_dim=params.latent_dim, **parts)


def mlp_graph(tape: Tape, mlp: Mlp, x: Var, final: str | None = None) -> Var:
    h = x
    last = len(mlp.weights) - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        h = ad.matmul(h, w) + b
        if i < last:
            h = ad.tanh(h)
    if final == "tanh":
        h = ad.tanh(h)
    elif final == "sigmoid":
        h = ad.sigmoid(h)
    elif final is not None:
        raise ValueError(f"unknown final activation {final!r}")
    return h


def encode_graph(tape: Tape, lifted: SraalParams, x: Var) -> tuple[LatentCode, LatentCode]:
    d_z = lifted.latent_dim
    h = mlp_graph(tape, lifted.trunk, x, final="tanh")
    codes = []
    for head in (lifted.head_uir, lifted.head_stl):
        stats = mlp_graph(tape, head, h)
        codes.append(
            LatentCode(
                mean=ad.slice_last(stats, 0, d_z),
                log_variance=ad.slice_last(stats, d_z, 2 * d_z),
            )
        )
    return codes[0], codes[1]


def reparameterize_graph(tape: Tape, code: LatentCode, noise: np.ndarray) -> Var:
    sigma = ad.exp(0.5 * code.log_variance)
    return code.mean + sigma * tape.constant(noise)


def unified_graph(tape: Tape, z_uir: Var, z_stl: Var) -> Var:
    return ad.concat(z_uir, z_stl)


def discriminate_graph(tape: Tape, lifted: SraalParams, u: Var) -> Var:
    return mlp_graph(tape, lifted.discriminator, u, final="sigmoid")


def decode_uir_graph(tape: Tape, lifted: SraalParams, z: Var) -> Var:
    return mlp_graph(tape, lifted.decoder_uir, z)


def stl_logits_graph(tape: Tape, lifted: SraalParams, z: Var) -> Var:
    return mlp_graph(tape, lifted.decoder_stl, z)


def target_logits_graph(tape: Tape, lifted: TargetParams, x: Var) -> Var:
    return mlp_graph(tape, lifted.net, x)


def adv_outputs_graph(
    tape: Tape, lifted: SraalParams, x_l: np.ndarray, x_u: np.ndarray
) -> tuple[Var, Var]:
    """Discriminator outputs on the posterior-mean unified representations.

    This is the adversarial path used in training and at selection time;
    sampling noise stays confined to the reconstruction/classification terms.
    """
    outs = []
    for x in (x_l, x_u):
        code_uir, code_stl = encode_graph(tape, lifted, tape.constant(x))
        u = unified_graph(tape, code_uir.mean, code_stl.mean)
        outs.append(discriminate_graph(tape, lifted, u))
    return outs[0], outs[1]


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


def mlp_np(mlp: Mlp, x: np.ndarray, final: str | None = None) -> np.ndarray:
    """Plain-array twin of mlp_graph; same op order, so results match bitwise."""
    h = x
    last = len(mlp.weights) - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        h = np.matmul(h, w) + b
        if i < last:
            h = np.tanh(h)
    if final == "tanh":
        h = np.tanh(h)
    elif final == "sigmoid":
        h = ad._stable_sigmoid(h)
    elif final is not None:
        raise ValueError(f"unknown final activation {final!r}")
    return h


def encode_np(params: SraalParams, x: np.ndarray) -> tuple[LatentCode, LatentCode]:
    d_z = params.latent_dim
    h = mlp_np(params.trunk, x, final="tanh")
    codes = []
    for head in (params.head_uir, params.head_stl):
        stats = mlp_np(head, h)
        codes.append(LatentCode(stats[..., :d_z].copy(), stats[..., d_z : 2 * d_z].copy()))
    return codes[0], codes[1]


def encode(params: SraalParams, x) -> tuple[LatentCode, LatentCode]:
    """Posterior parameters for one feature vector or a batch of them."""
    batch, squeeze = _as_batch(x)
    expected = params.trunk.weights[0].shape[0]
    if batch.shape[1] != expected:
        raise ad.ShapeMismatch(f"encode: feature dim {batch.shape[1]}, expected {expected}")
    uir, stl = encode_np(params, batch)

    def unwrap(code: LatentCode) -> LatentCode:
        if squeeze:
            return LatentCode(code.mean[0], code.log_variance[0])
        return code

    return unwrap(uir), unwrap(stl)


def reparameterize(code: LatentCode, noise) -> np.ndarray:
    """z = mean + exp(log_variance / 2) * noise."""
    mean = np.asarray(code.mean, dtype=np.float64)
    logvar = np.asarray(code.log_variance, dtype=np.float64)
    eps = np.asarray(noise, dtype=np.float64)
    if eps.shape != mean.shape:
        raise ad.ShapeMismatch(f"reparameterize: noise shape {eps.shape} != mean shape {mean.shape}")
    return mean + np.exp(0.5 * logvar) * eps


def unified_representation(z_uir, z_stl) -> np.ndarray:
    """Concatenate the two latent samples, reconstruction half first."""
    a = np.asarray(z_uir, dtype=np.float64)
    b = np.asarray(z_stl, dtype=np.float64)
    if a.shape != b.shape:
        raise ad.ShapeMismatch(f"unified_representation: shapes {a.shape} and {b.shape} differ")
    return np.concatenate([a, b], axis=-1)


def discriminate(params: SraalParams, u) -> np.ndarray:
    """Discriminator output in (0, 1) per row of `u`; scalar for a single vector."""
    batch, squeeze = _as_batch(u)
    out = mlp_np(params.discriminator, batch, final="sigmoid")[:, 0]
    return float(out[0]) if squeeze else out


def target_predict(params: TargetParams, x) -> np.ndarray:
    """Softmax class probabilities; rows sum to 1."""
    batch, squeeze = _as_batch(x)
    logits = mlp_np(params.net, batch)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=-1, keepdims=True)
    return probs[0] if squeeze else probs


def unified_means(params: SraalParams, x) -> np.ndarray:
    """Unified representation evaluated at the posterior means (no sampling).

    This is the deterministic embedding used at selection time and for
    pool initialization.
    """
    uir, stl = encode(params, x)
    return unified_representation(uir.mean, stl.mean)

"""Linear models and analytic gradients for weighted KL-term objectives.

Two parametric pieces cover every method in the package:

* ``LinearSoftmaxModel`` - a two-class linear head, ``probs = softmax2(x W + b)``,
  used for classifiers and discriminators.
* ``LinearTransform`` - an affine map ``y = x W + b`` that projects one
  feature block into another block's space.

Objectives are lists of :class:`KLTerm`. Each term is
``weight * sum_i kl2(left_i, right_i)`` where a side is either a constant
probability batch or a model applied to a batch. A batch is either raw
features or the concatenation ``[common ; T(raw)]`` of untouched common
columns with a transform's output. :func:`loss_and_grads` evaluates the sum
of terms and returns hand-derived gradients for the requested models, with
the chain rule flowing through softmax, clamping, swapping, concatenation,
and the transform. No autodiff is involved anywhere.

Gradient notes. For ``p = softmax(z)`` strictly inside the clamp interval the
Jacobian gives ``dL/dz_j = p_j * (g_j - sum_k g_k p_k)`` where ``g = dL/dp``;
rows whose raw softmax output left the clamp interval are locally constant,
so their gradient is zero. For a term ``kl2(a, b)`` the local derivatives are
``dKL/da = log(a/b) + 1`` and ``dKL/db = -a/b`` (the constant offset is
annihilated by the softmax Jacobian).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from . import __version__
from .errors import ConfigurationError, InvalidInputError
from .numerics import EPS, clamp_probs, require_finite

CHECKPOINT_FORMAT = 1


def _init_weights(rng: np.random.Generator, in_dim: int, out_dim: int) -> np.ndarray:
    # uniform in [-r, r] with r = 1/sqrt(in_dim); biases start at zero
    r = 1.0 / np.sqrt(in_dim)
    return rng.uniform(-r, r, size=(in_dim, out_dim))


@dataclass
class GradientBundle:
    """Gradients for one model; ``d_input`` is filled only by input_gradients."""

    d_weights: np.ndarray
    d_bias: np.ndarray
    d_input: np.ndarray | None = None

    def add_scaled(self, other: "GradientBundle", scale: float = 1.0) -> None:
        self.d_weights += scale * other.d_weights
        self.d_bias += scale * other.d_bias


@dataclass
class LinearSoftmaxModel:
    """Two-class linear head: ``classify(x) = softmax2(x @ weights + bias)``."""

    weights: np.ndarray  # (input_dim, 2)
    bias: np.ndarray     # (2,)

    def __post_init__(self):
        self.weights = require_finite("weights", self.weights)
        self.bias = require_finite("bias", self.bias)
        if self.weights.ndim != 2 or self.weights.shape[1] != 2 or self.bias.shape != (2,):
            raise InvalidInputError(
                f"linear softmax model: need weights (d, 2) and bias (2,), "
                f"got {self.weights.shape} and {self.bias.shape}"
            )

    @classmethod
    def initialize(cls, input_dim: int, rng: np.random.Generator) -> "LinearSoftmaxModel":
        if input_dim < 1:
            raise InvalidInputError(f"input_dim must be >= 1, got {input_dim}")
        return cls(weights=_init_weights(rng, input_dim, 2), bias=np.zeros(2))

    @property
    def input_dim(self) -> int:
        return self.weights.shape[0]

    def logits(self, x) -> np.ndarray:
        x = require_finite("inputs", x)
        if x.shape[-1] != self.input_dim:
            raise InvalidInputError(
                f"inputs have {x.shape[-1]} columns, model expects {self.input_dim}"
            )
        return x @ self.weights + self.bias

    def classify(self, x) -> np.ndarray:
        """Probability pairs for a batch (n, d) -> (n, 2), or one row (d,) -> (2,)."""
        z = self.logits(x)
        m = z.max(axis=-1, keepdims=True)
        e = np.exp(z - m)
        return clamp_probs(e / e.sum(axis=-1, keepdims=True))

    def apply_step(self, grads: GradientBundle, scale: float) -> None:
        """In-place parameter update ``theta += scale * grad``; rejects non-finite results."""
        self.weights = self.weights + scale * grads.d_weights
        self.bias = self.bias + scale * grads.d_bias
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise InvalidInputError("parameter update produced non-finite values")

    def copy(self) -> "LinearSoftmaxModel":
        return LinearSoftmaxModel(self.weights.copy(), self.bias.copy())


@dataclass
class LinearTransform:
    """Affine block map: ``transform(x) = x @ weights + bias``."""

    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray     # (out_dim,)

    def __post_init__(self):
        self.weights = require_finite("weights", self.weights)
        self.bias = require_finite("bias", self.bias)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise InvalidInputError(
                f"linear transform: need weights (in, out) and bias (out,), "
                f"got {self.weights.shape} and {self.bias.shape}"
            )

    @classmethod
    def initialize(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "LinearTransform":
        if in_dim < 1 or out_dim < 1:
            raise InvalidInputError(f"transform dims must be >= 1, got {in_dim} -> {out_dim}")
        return cls(weights=_init_weights(rng, in_dim, out_dim), bias=np.zeros(out_dim))

    @property
    def input_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights.shape[1]

    def transform(self, x) -> np.ndarray:
        x = require_finite("inputs", x)
        if x.shape[-1] != self.input_dim:
            raise InvalidInputError(
                f"inputs have {x.shape[-1]} columns, transform expects {self.input_dim}"
            )
        return x @ self.weights + self.bias

    def apply_step(self, grads: GradientBundle, scale: float) -> None:
        self.weights = self.weights + scale * grads.d_weights
        self.bias = self.bias + scale * grads.d_bias
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise InvalidInputError("parameter update produced non-finite values")

    def copy(self) -> "LinearTransform":
        return LinearTransform(self.weights.copy(), self.bias.copy())


Model = Union[LinearSoftmaxModel, LinearTransform]


# --------------------------------------------------------------------------
# Loss terms


@dataclass(frozen=True)
class RawBatch:
    """Feature rows fed to a softmax model unchanged."""

    x: np.ndarray  # (n, d)

    def __post_init__(self):
        x = require_finite("batch", self.x)
        if x.ndim != 2 or x.shape[0] < 1:
            raise InvalidInputError(f"batch must be a non-empty 2-D array, got shape {x.shape}")
        object.__setattr__(self, "x", x)


@dataclass(frozen=True)
class TransformedBatch:
    """Rows ``[common ; T(raw)]``: common columns pass through, a transform fills the rest."""

    common: np.ndarray  # (n, c)
    raw: np.ndarray     # (n, in_dim of the transform)
    transform: str = "F"

    def __post_init__(self):
        common = require_finite("common block", self.common)
        raw = require_finite("raw block", self.raw)
        if common.ndim != 2 or raw.ndim != 2 or common.shape[0] != raw.shape[0]:
            raise InvalidInputError(
                f"transformed batch blocks must be 2-D with equal rows, "
                f"got {common.shape} and {raw.shape}"
            )
        if common.shape[0] < 1:
            raise InvalidInputError("transformed batch must be non-empty")
        object.__setattr__(self, "common", common)
        object.__setattr__(self, "raw", raw)


Batch = Union[RawBatch, TransformedBatch]


@dataclass(frozen=True)
class ConstTarget:
    """A constant probability batch; no gradient flows into it."""

    probs: np.ndarray  # (2,) or (n, 2), already clamped

    def __post_init__(self):
        from .numerics import prob_pairs

        object.__setattr__(self, "probs", prob_pairs(self.probs))


@dataclass(frozen=True)
class ModelOutput:
    """A named softmax model applied to a batch, optionally with swapped outputs."""

    model: str
    batch: Batch
    swapped: bool = False


Side = Union[ConstTarget, ModelOutput]


@dataclass(frozen=True)
class KLTerm:
    """``weight * sum_i kl2(left_i, right_i)``; the weight carries sign and 1/batch."""

    weight: float
    left: Side
    right: Side
    name: str = ""


@dataclass
class LossResult:
    value: float
    term_values: np.ndarray  # weighted contribution of each term, in order
    grads: dict[str, GradientBundle] = field(default_factory=dict)


class _SideState:
    """Forward cache for one model side: inputs, probabilities, clamp mask."""

    __slots__ = ("model_name", "x_in", "probs", "clamped", "batch")

    def __init__(self, model_name, x_in, probs, clamped, batch):
        self.model_name = model_name
        self.x_in = x_in
        self.probs = probs
        self.clamped = clamped
        self.batch = batch


def _zero_bundle(model: Model) -> GradientBundle:
    return GradientBundle(np.zeros_like(model.weights), np.zeros_like(model.bias))


def _forward_side(models: Mapping[str, Model], side: Side):
    """Return (effective probs, state or None for constants)."""
    if isinstance(side, ConstTarget):
        return side.probs, None
    if side.model not in models:
        raise ConfigurationError(f"loss term references unbound model {side.model!r}")
    model = models[side.model]
    if not isinstance(model, LinearSoftmaxModel):
        raise ConfigurationError(f"model {side.model!r} is not a two-class head")
    batch = side.batch
    if isinstance(batch, TransformedBatch):
        if batch.transform not in models:
            raise ConfigurationError(f"loss term references unbound transform {batch.transform!r}")
        t = models[batch.transform]
        if not isinstance(t, LinearTransform):
            raise ConfigurationError(f"model {batch.transform!r} is not a transform")
        x_in = np.hstack([batch.common, t.transform(batch.raw)])
    else:
        x_in = batch.x
    z = model.logits(x_in)
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    p_raw = e / e.sum(axis=-1, keepdims=True)
    clamped = (p_raw[:, 1] <= EPS) | (p_raw[:, 1] >= 1.0 - EPS)
    probs = clamp_probs(p_raw)
    state = _SideState(side.model, x_in, probs, clamped, batch)
    eff = probs[:, ::-1] if side.swapped else probs
    return eff, state


def _needs_grad(side: Side, wrt: frozenset[str]) -> bool:
    if isinstance(side, ConstTarget):
        return False
    if side.model in wrt:
        return True
    return isinstance(side.batch, TransformedBatch) and side.batch.transform in wrt


def _backward_side(
    models: Mapping[str, Model],
    side: ModelOutput,
    state: _SideState,
    d_probs_eff: np.ndarray,
    wrt: frozenset[str],
    grads: dict[str, GradientBundle],
) -> None:
    g_p = d_probs_eff[:, ::-1] if side.swapped else d_probs_eff
    p = state.probs
    inner = (g_p * p).sum(axis=-1, keepdims=True)
    dz = p * (g_p - inner)
    if np.any(state.clamped):
        dz = np.where(state.clamped[:, None], 0.0, dz)
    model = models[side.model]
    if side.model in wrt:
        bundle = grads[side.model]
        bundle.d_weights += state.x_in.T @ dz
        bundle.d_bias += dz.sum(axis=0)
    batch = state.batch
    if isinstance(batch, TransformedBatch) and batch.transform in wrt:
        dx_in = dz @ model.weights.T
        c = batch.common.shape[1]
        d_out = dx_in[:, c:]
        bundle = grads[batch.transform]
        bundle.d_weights += batch.raw.T @ d_out
        bundle.d_bias += d_out.sum(axis=0)


def loss_and_grads(
    models: Mapping[str, Model],
    terms: Sequence[KLTerm],
    wrt: Sequence[str] = (),
) -> LossResult:
    """Evaluate a weighted KL-term objective with analytic gradients.

    Parameters
    ----------
    models : mapping of name to model; every name referenced by a term must
        be bound here.
    terms : the objective, as emitted by the ``objectives`` module.
    wrt : names whose gradients are wanted. Gradients chain through a
        transform whenever its name appears here, even if it only occurs
        inside another model's input batch.

    Returns
    -------
    LossResult with the total value, each term's weighted contribution, and
    one GradientBundle per requested name.
    """
    wrt_set = frozenset(wrt)
    for name in wrt_set:
        if name not in models:
            raise ConfigurationError(f"gradient requested for unbound model {name!r}")
    grads = {name: _zero_bundle(models[name]) for name in wrt_set}
    total = 0.0
    term_values = np.zeros(len(terms))
    for idx, term in enumerate(terms):
        a, state_a = _forward_side(models, term.left)
        b, state_b = _forward_side(models, term.right)
        log_ratio = np.log(a) - np.log(b)
        kl = np.sum(a * log_ratio, axis=-1)
        value = term.weight * float(np.sum(kl))
        term_values[idx] = value
        total += value
        if state_a is not None and _needs_grad(term.left, wrt_set):
            g_a = term.weight * (log_ratio + 1.0)
            if g_a.ndim == 1:
                g_a = np.broadcast_to(g_a, state_a.probs.shape)
            _backward_side(models, term.left, state_a, np.ascontiguousarray(g_a), wrt_set, grads)
        if state_b is not None and _needs_grad(term.right, wrt_set):
            g_b = term.weight * (-(a / b))
            if g_b.ndim == 1:
                g_b = np.broadcast_to(g_b, state_b.probs.shape)
            _backward_side(models, term.right, state_b, np.ascontiguousarray(g_b), wrt_set, grads)
    return LossResult(value=total, term_values=term_values, grads=grads)


def input_gradients(model: LinearSoftmaxModel, x, d_probs) -> GradientBundle:
    """Gradients of ``sum(d_probs * classify(x))`` including the input direction."""
    x = require_finite("inputs", np.atleast_2d(x))
    d_probs = require_finite("d_probs", d_probs)
    z = model.logits(x)
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    p_raw = e / e.sum(axis=-1, keepdims=True)
    clamped = (p_raw[:, 1] <= EPS) | (p_raw[:, 1] >= 1.0 - EPS)
    p = clamp_probs(p_raw)
    g_p = np.broadcast_to(d_probs, p.shape)
    dz = p * (g_p - (g_p * p).sum(axis=-1, keepdims=True))
    dz = np.where(clamped[:, None], 0.0, dz)
    return GradientBundle(
        d_weights=x.T @ dz,
        d_bias=dz.sum(axis=0),
        d_input=dz @ model.weights.T,
    )


# --------------------------------------------------------------------------
# Checkpoints

_MODEL_KINDS = {"LinearSoftmaxModel": LinearSoftmaxModel, "LinearTransform": LinearTransform}


def save_checkpoint(path, models: Mapping[str, Model], meta: Mapping | None = None) -> None:
    """Write models to a versioned ``.npz``; parameters round-trip bit-exactly."""
    arrays = {}
    kinds = {}
    for name, model in models.items():
        kinds[name] = type(model).__name__
        arrays[f"{name}.weights"] = model.weights
        arrays[f"{name}.bias"] = model.bias
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": __version__,
        "kinds": kinds,
        "meta": dict(meta or {}),
    }
    arrays["__header__"] = np.frombuffer(
        json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[dict[str, Model], dict]:
    """Load a checkpoint written by :func:`save_checkpoint`."""
    with np.load(path) as data:
        try:
            header = json.loads(bytes(data["__header__"]).decode("utf-8"))
        except KeyError:
            raise InvalidInputError(f"{path}: not a model checkpoint") from None
        if header.get("format") != CHECKPOINT_FORMAT:
            raise InvalidInputError(
                f"{path}: unsupported checkpoint format {header.get('format')!r}"
            )
        models: dict[str, Model] = {}
        for name, kind in header["kinds"].items():
            cls = _MODEL_KINDS[kind]
            models[name] = cls(
                weights=data[f"{name}.weights"].copy(), bias=data[f"{name}.bias"].copy()
            )
    return models, header["meta"]

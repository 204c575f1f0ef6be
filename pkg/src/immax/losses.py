"""Margin losses, IMMAX losses and the baseline zoo, with score gradients.

Binary losses take a real score ``h`` and a label ``y`` in {+1, -1}.
Multi-class losses take a score array of shape ``(..., c)`` and 0-based
labels. Predicted labels use the highest index to break ties.

Kink convention: every piecewise-linear loss uses its right derivative,
so the hinge has derivative 0 at ``u = 1`` and ``phi_margin`` has
derivative ``-1/rho`` on ``[0, rho)`` and 0 elsewhere.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

LN2 = math.log(2.0)


class InvalidMarginError(ValueError):
    pass


class LossConfigError(ValueError):
    pass


def _check_rho(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(~np.isfinite(rho)) or np.any(rho <= 0):
        raise InvalidMarginError(f"margins must be strictly positive, got {rho}")
    return rho


def _check_finite(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return scores


# ---------------------------------------------------------------------------
# rho-margin primitives


def phi_margin(u, rho):
    """rho-margin loss min(1, max(0, 1 - u/rho))."""
    rho = _check_rho(rho)
    return np.clip(1.0 - np.asarray(u, dtype=np.float64) / rho, 0.0, 1.0)


def phi_margin_grad(u, rho):
    rho = _check_rho(rho)
    u = np.asarray(u, dtype=np.float64)
    return np.where((u >= 0) & (u < rho), -1.0 / rho, 0.0)


def imbalanced_margin_binary(h, y, rho_plus, rho_minus):
    """Class-imbalanced (rho+, rho-)-margin loss, indexed by the true label."""
    h = np.asarray(h, dtype=np.float64)
    y = np.asarray(y)
    u = y * h
    return np.where(y == 1, phi_margin(u, rho_plus), phi_margin(u, rho_minus))


def imbalanced_margin_binary_by_prediction(h, y, rho_plus, rho_minus):
    """Same loss written with the predicted sign selecting the margin."""
    h = np.asarray(h, dtype=np.float64)
    u = np.asarray(y) * h
    return np.where(h >= 0, phi_margin(u, rho_plus), phi_margin(u, rho_minus))


def zero_one_binary(h, y):
    """1[sign(h) != y] with sign(0) = +1."""
    pred = np.where(np.asarray(h) >= 0, 1, -1)
    return (pred != np.asarray(y)).astype(np.float64)


def predict_multi(scores) -> np.ndarray:
    """argmax with ties resolved toward the highest class index."""
    scores = np.asarray(scores, dtype=np.float64)
    c = scores.shape[-1]
    return c - 1 - np.argmax(scores[..., ::-1], axis=-1)


def zero_one_multi(scores, y):
    return (predict_multi(scores) != np.asarray(y)).astype(np.float64)


def _rival(scores: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Highest-scoring label other than y (highest index on ties)."""
    masked = np.array(scores, dtype=np.float64, copy=True)
    np.put_along_axis(masked, y[..., None], -np.inf, axis=-1)
    return predict_multi(masked)


def multiclass_margin(scores, y):
    """h(x, y) - max_{y' != y} h(x, y')."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    own = np.take_along_axis(scores, y[..., None], axis=-1)[..., 0]
    other = np.take_along_axis(scores, _rival(scores, y)[..., None], axis=-1)[..., 0]
    return own - other


def imbalanced_margin_multi(scores, y, rho):
    """Multi-class class-imbalanced margin loss Phi_{rho_y}(margin)."""
    scores = np.asarray(scores, dtype=np.float64)
    rho = _check_rho(rho)
    if rho.shape[-1] != scores.shape[-1]:
        raise ValueError(f"need {scores.shape[-1]} margins, got {rho.shape[-1]}")
    y = np.asarray(y, dtype=np.int64)
    return phi_margin(multiclass_margin(scores, y), rho[y])


def imbalanced_margin_multi_by_prediction(scores, y, rho):
    """Same loss with the predicted label selecting the margin."""
    scores = np.asarray(scores, dtype=np.float64)
    rho = _check_rho(rho)
    if rho.shape[-1] != scores.shape[-1]:
        raise ValueError(f"need {scores.shape[-1]} margins, got {rho.shape[-1]}")
    y = np.asarray(y, dtype=np.int64)
    return phi_margin(multiclass_margin(scores, y), rho[predict_multi(scores)])


# ---------------------------------------------------------------------------
# convex surrogates Psi


class Surrogate(str, enum.Enum):
    HINGE = "hinge"
    LOGISTIC = "logistic"
    EXPONENTIAL = "exponential"


def surrogate_psi(kind, u):
    kind = Surrogate(kind)
    u = np.asarray(u, dtype=np.float64)
    if kind is Surrogate.HINGE:
        return np.maximum(0.0, 1.0 - u)
    if kind is Surrogate.LOGISTIC:
        # log2(1 + e^-u) evaluated in natural log, rescaled
        return np.logaddexp(0.0, -u) / LN2
    with np.errstate(over="ignore"):
        return np.exp(-u)


def surrogate_psi_grad(kind, u):
    kind = Surrogate(kind)
    u = np.asarray(u, dtype=np.float64)
    if kind is Surrogate.HINGE:
        return np.where(u < 1.0, -1.0, 0.0)
    if kind is Surrogate.LOGISTIC:
        return -np.exp(-np.logaddexp(0.0, u)) / LN2
    return -np.exp(-u)


# ---------------------------------------------------------------------------
# softmax-family building blocks


def _logsumexp(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=-1, keepdims=True)
    return (zmax + np.log(np.exp(z - zmax).sum(axis=-1, keepdims=True)))[..., 0]


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _onehot(y: np.ndarray, c: int) -> np.ndarray:
    return np.eye(c)[y]


def _ce_and_grad(z: np.ndarray, y: np.ndarray):
    own = np.take_along_axis(z, y[..., None], axis=-1)[..., 0]
    values = _logsumexp(z) - own
    return values, _softmax(z) - _onehot(y, z.shape[-1])


def immax_multi_loss(scores, y, rho_y):
    """log sum_j exp((h(x, j) - h(x, y)) / rho_y)."""
    scores = _check_finite(scores)
    rho_y = _check_rho(rho_y)
    y = np.asarray(y, dtype=np.int64)
    own = np.take_along_axis(scores, y[..., None], axis=-1)
    z = (scores - own) / np.asarray(rho_y)[..., None]
    return _logsumexp(z)


def cross_entropy(scores, y):
    scores = _check_finite(scores)
    return _ce_and_grad(scores, np.asarray(y, dtype=np.int64))[0]


def cost_sensitive_loss(h, y, c_plus, c_minus):
    """c+ 1[sign(h) != y, y=+1] + c- 1[sign(h) != y, y=-1]."""
    if c_plus <= 0 or c_minus <= 0:
        raise LossConfigError("costs must be positive")
    y = np.asarray(y)
    err = zero_one_binary(h, y)
    return np.where(y == 1, c_plus * err, c_minus * err)


# ---------------------------------------------------------------------------
# LossSpec


class LossKind(str, enum.Enum):
    PHI_MARGIN = "phi-margin"
    IMBALANCED_MARGIN_BINARY = "imbalanced-margin-binary"
    IMBALANCED_MARGIN_MULTI = "imbalanced-margin-multi"
    IMMAX_BINARY = "immax-binary"
    IMMAX_MULTI = "immax"
    CE = "ce"
    RW = "rw"
    BS = "bs"
    EQUAL = "equal"
    LA = "la"
    CB = "cb"
    FOCAL = "focal"
    LDAM = "ldam"
    COST_SENSITIVE = "cost-sensitive"
    HINGE = "hinge"
    LOGISTIC = "logistic"
    EXPONENTIAL = "exponential"


BINARY_KINDS = frozenset(
    {
        LossKind.PHI_MARGIN,
        LossKind.IMBALANCED_MARGIN_BINARY,
        LossKind.IMMAX_BINARY,
        LossKind.COST_SENSITIVE,
        LossKind.HINGE,
        LossKind.LOGISTIC,
        LossKind.EXPONENTIAL,
    }
)

# kinds whose formula reads the class counts m_k
COUNT_KINDS = frozenset(
    {LossKind.RW, LossKind.BS, LossKind.EQUAL, LossKind.LA, LossKind.CB, LossKind.LDAM}
)

_REQUIRED: dict[LossKind, tuple[str, ...]] = {
    LossKind.PHI_MARGIN: ("rho",),
    LossKind.IMBALANCED_MARGIN_BINARY: ("rho",),
    LossKind.IMBALANCED_MARGIN_MULTI: ("rho",),
    LossKind.IMMAX_MULTI: ("rho",),
    LossKind.IMMAX_BINARY: ("alpha",),
    LossKind.EQUAL: ("p", "eq_lambda"),
    LossKind.LA: ("tau",),
    LossKind.CB: ("gamma",),
    LossKind.FOCAL: ("gamma",),
    LossKind.LDAM: ("C",),
    LossKind.COST_SENSITIVE: ("c_plus", "c_minus"),
}

_CONFIG_ALIASES = {"cplus": "c_plus", "cminus": "c_minus", "lambda_eq": "eq_lambda"}


@dataclass(frozen=True)
class LossSpec:
    """A loss kind together with its hyperparameters.

    ``counts`` (class sizes m_k) is injected from the training data for the
    kinds whose formulas need it.
    """

    kind: LossKind
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        params = dict(self.params)
        if self.kind is LossKind.IMMAX_BINARY and "alpha" not in params and "rho" in params:
            rho = _check_rho(params["rho"])
            if rho.shape != (2,):
                raise LossConfigError("immax-binary rho must be (rho+, rho-)")
            params["alpha"] = float(rho[0] / rho.sum())
        if self.kind in (LossKind.HINGE, LossKind.LOGISTIC, LossKind.EXPONENTIAL):
            params.setdefault("rho", 1.0)
        if self.kind is LossKind.IMMAX_BINARY:
            params.setdefault("psi", "hinge")
        object.__setattr__(self, "params", params)
        self.validate()

    @property
    def is_binary(self) -> bool:
        return self.kind in BINARY_KINDS

    @property
    def needs_counts(self) -> bool:
        return self.kind in COUNT_KINDS

    def __getitem__(self, key):
        return self.params[key]

    def validate(self) -> None:
        p = self.params
        for name in _REQUIRED.get(self.kind, ()):
            if name not in p:
                raise LossConfigError(f"loss {self.kind.value!r} requires parameter {name!r}")
        k = self.kind
        if "rho" in p:
            _check_rho(p["rho"])
        if k is LossKind.IMBALANCED_MARGIN_BINARY and np.size(p["rho"]) != 2:
            raise LossConfigError("binary margin loss needs rho = (rho+, rho-)")
        if k is LossKind.IMMAX_BINARY:
            if not 0 < p["alpha"] < 1:
                raise LossConfigError("alpha must lie in (0, 1)")
            Surrogate(p["psi"])
        if k is LossKind.EQUAL and not (0 < p["p"] < 1 and 0 < p["eq_lambda"] < 1):
            raise LossConfigError("equal loss needs 0 < p < 1 and 0 < lambda < 1")
        if k is LossKind.LA and p["tau"] <= 0:
            raise LossConfigError("tau must be positive")
        if k is LossKind.CB and not 0 < p["gamma"] < 1:
            raise LossConfigError("class-balanced gamma must lie in (0, 1)")
        if k is LossKind.FOCAL and p["gamma"] < 0:
            raise LossConfigError("focal gamma must be non-negative")
        if k is LossKind.LDAM and p["C"] <= 0:
            raise LossConfigError("LDAM C must be positive")
        if k is LossKind.COST_SENSITIVE and (p["c_plus"] <= 0 or p["c_minus"] <= 0):
            raise LossConfigError("costs must be positive")
        if "counts" in p:
            counts = np.asarray(p["counts"], dtype=np.float64)
            if np.any(counts <= 0):
                raise LossConfigError("class counts must be positive")

    def with_counts(self, counts) -> "LossSpec":
        if not self.needs_counts:
            return self
        return LossSpec(self.kind, {**self.params, "counts": [int(c) for c in counts]})

    def counts(self) -> np.ndarray:
        if "counts" not in self.params:
            raise LossConfigError(f"loss {self.kind.value!r} needs class counts")
        return np.asarray(self.params["counts"], dtype=np.float64)

    # -- key=value config -------------------------------------------------

    @classmethod
    def from_config(cls, entries: Mapping[str, str]) -> "LossSpec":
        entries = dict(entries)
        if "loss" not in entries:
            raise LossConfigError("missing 'loss' entry")
        kind = LossKind(entries.pop("loss").strip().lower())
        params: dict[str, Any] = {}
        for key, raw in entries.items():
            key = _CONFIG_ALIASES.get(key, key)
            raw = str(raw).strip()
            if key == "psi":
                params[key] = raw.lower()
            elif key in ("rho", "counts"):
                vals = [float(v) for v in raw.split(",") if v.strip()]
                if key == "counts":
                    params[key] = [int(v) for v in vals]
                elif kind in (LossKind.PHI_MARGIN, LossKind.HINGE, LossKind.LOGISTIC,
                              LossKind.EXPONENTIAL) and len(vals) == 1:
                    params[key] = vals[0]
                else:
                    params[key] = vals
            else:
                params[key] = float(raw)
        return cls(kind, params)

    def to_config(self) -> dict[str, str]:
        out = {"loss": self.kind.value}
        for key in sorted(self.params):
            val = self.params[key]
            if isinstance(val, (list, tuple, np.ndarray)):
                out[key] = ",".join(repr(float(v)) if key != "counts" else str(int(v)) for v in val)
            elif isinstance(val, str):
                out[key] = val
            else:
                out[key] = repr(float(val))
        return out


# ---------------------------------------------------------------------------
# evaluation with gradients


def _binary_inputs(scores, y):
    h = _check_finite(scores)
    if h.ndim == 2 and h.shape[-1] == 1:
        h = h[..., 0]
    y = np.asarray(y)
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("binary losses expect labels in {+1, -1}")
    return h, y


def equal_weights(spec: LossSpec, y: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """w_j = 1 - beta 1[m_j/m < lambda] 1[y != j], shape (n, c)."""
    counts = spec.counts()
    rare = (counts / counts.sum()) < spec["eq_lambda"]
    c = counts.size
    not_target = 1.0 - _onehot(y, c)
    return 1.0 - np.asarray(beta, dtype=np.float64)[..., None] * rare[None, :] * not_target


def draw_equal_beta(spec: LossSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    return (rng.random(n) < spec["p"]).astype(np.float64)


def loss_and_grad(spec: LossSpec, scores, y, beta=None):
    """Per-example loss values and gradients with respect to the scores.

    Binary kinds: ``scores`` shape (n,), labels +-1, gradient shape (n,).
    Multi-class kinds: ``scores`` shape (n, c), 0-based labels, gradient
    shape (n, c). ``beta`` is the Bernoulli draw used by the EQUAL loss.
    """
    k = spec.kind
    p = spec.params
    if spec.is_binary:
        h, y = _binary_inputs(scores, y)
        u = y * h
        if k is LossKind.PHI_MARGIN:
            rho = p["rho"]
            return phi_margin(u, rho), y * phi_margin_grad(u, rho)
        if k is LossKind.IMBALANCED_MARGIN_BINARY:
            rp, rm = p["rho"]
            rho = np.where(y == 1, rp, rm)
            return phi_margin(u, rho), y * phi_margin_grad(u, rho)
        if k is LossKind.IMMAX_BINARY:
            a = p["alpha"]
            scale = np.where(y == 1, a, 1.0 - a)
            z = u / scale
            return surrogate_psi(p["psi"], z), y * surrogate_psi_grad(p["psi"], z) / scale
        if k is LossKind.COST_SENSITIVE:
            return cost_sensitive_loss(h, y, p["c_plus"], p["c_minus"]), np.zeros_like(h)
        rho = p["rho"]
        z = u / rho
        return surrogate_psi(k.value, z), y * surrogate_psi_grad(k.value, z) / rho

    s = _check_finite(scores)
    if s.ndim != 2:
        raise ValueError("multi-class losses expect scores of shape (n, c)")
    y = np.asarray(y, dtype=np.int64)
    n, c = s.shape
    if k is LossKind.IMBALANCED_MARGIN_MULTI:
        rho = _check_rho(p["rho"])
        if rho.size != c:
            raise ValueError(f"need {c} margins, got {rho.size}")
        rival = _rival(s, y)
        margin = np.take_along_axis(s, y[:, None], 1)[:, 0] - np.take_along_axis(s, rival[:, None], 1)[:, 0]
        d = phi_margin_grad(margin, rho[y])
        grad = d[:, None] * (_onehot(y, c) - _onehot(rival, c))
        return phi_margin(margin, rho[y]), grad
    if k is LossKind.IMMAX_MULTI:
        rho = _check_rho(p["rho"])
        if rho.size != c:
            raise ValueError(f"need {c} margins, got {rho.size}")
        ry = rho[y][:, None]
        own = np.take_along_axis(s, y[:, None], 1)
        z = (s - own) / ry
        return _logsumexp(z), (_softmax(z) - _onehot(y, c)) / ry
    if k is LossKind.CE:
        return _ce_and_grad(s, y)
    if k is LossKind.FOCAL:
        return _focal(s, y, p["gamma"])
    m = spec.counts()
    if m.size != c:
        raise ValueError(f"need {c} class counts, got {m.size}")
    if k is LossKind.RW:
        v, g = _ce_and_grad(s, y)
        w = (m.sum() / m)[y]
        return w * v, w[:, None] * g
    if k is LossKind.BS:
        return _ce_and_grad(s + np.log(m), y)
    if k is LossKind.LA:
        return _ce_and_grad(s + p["tau"] * np.log(m), y)
    if k is LossKind.CB:
        gamma = p["gamma"]
        w = ((1.0 - gamma) / (1.0 - gamma ** (m / m.sum())))[y]
        v, g = _ce_and_grad(s, y)
        return w * v, w[:, None] * g
    if k is LossKind.LDAM:
        delta = p["C"] / m ** 0.25
        return _ce_and_grad(s - delta[y][:, None] * _onehot(y, c), y)
    if k is LossKind.EQUAL:
        if beta is None:
            raise LossConfigError("equal loss needs a Bernoulli draw beta")
        w = equal_weights(spec, y, np.broadcast_to(beta, (n,)))
        own = np.take_along_axis(s, y[:, None], 1)[:, 0]
        # log sum_j w_j e^{h_j}; w_j may be 0, so mask before the log
        with np.errstate(divide="ignore"):
            z = s + np.log(w)
        values = _logsumexp(z) - own
        return values, _softmax(z) - _onehot(y, c)
    raise LossConfigError(f"unsupported loss kind {k.value!r}")


def _focal(s: np.ndarray, y: np.ndarray, gamma: float):
    n, c = s.shape
    logp_all = s - _logsumexp(s)[:, None]
    logp = np.take_along_axis(logp_all, y[:, None], 1)[:, 0]
    prob = np.exp(logp_all)
    p_y = np.exp(logp)
    # 1 - p_y as the mass of the other classes, to keep precision near p_y = 1
    rest = prob.sum(axis=1) - p_y
    rest = np.where(rest < 0, 0.0, rest)
    values = -(rest ** gamma) * logp
    with np.errstate(divide="ignore", invalid="ignore"):
        dpy = np.where(
            rest > 0,
            gamma * rest ** (gamma - 1.0) * p_y * logp - rest ** gamma,
            -(rest ** gamma) if gamma == 0 else 0.0,
        )
    grad = dpy[:, None] * (_onehot(y, c) - prob)
    return values, grad


def loss_value(spec: LossSpec, scores, y, beta=None):
    return loss_and_grad(spec, scores, y, beta)[0]


def loss_gradient(spec: LossSpec, scores, y, beta=None):
    return loss_and_grad(spec, scores, y, beta)[1]


def baseline_loss(spec: LossSpec, scores, y: int, class_counts=None, beta=None) -> float:
    """Loss of a single example; ``class_counts`` fills in m_k when needed."""
    if class_counts is not None and spec.needs_counts:
        spec = spec.with_counts(class_counts)
    scores = np.asarray(scores, dtype=np.float64)
    if spec.is_binary:
        return float(loss_value(spec, scores.reshape(1), np.array([y]))[0])
    b = None if beta is None else np.array([beta], dtype=np.float64)
    return float(loss_value(spec, scores[None, :], np.array([y]), b)[0])

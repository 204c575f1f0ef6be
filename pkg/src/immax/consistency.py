"""Exact risks on finite-support distributions with complete hypothesis sets.

A complete hypothesis set is realized by unconstrained per-point scores,
so best-in-class risks reduce to pointwise minimization of conditional
risks, done here in closed form and cross-checked on score grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .losses import (
    imbalanced_margin_binary,
    imbalanced_margin_multi,
    multiclass_margin,
    predict_multi,
)

SLACK_TOL = -1e-9
TIGHT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """Marginal weights p(x) and conditionals: eta(x) (binary) or rows p(y|x)."""

    weights: np.ndarray
    conditionals: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        cond = np.asarray(self.conditionals, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("weights must be a probability vector")
        if cond.shape[0] != w.size or cond.ndim not in (1, 2):
            raise ValueError("need one conditional per support point")
        if np.any(cond < 0) or np.any(cond > 1):
            raise ValueError("conditional probabilities must lie in [0, 1]")
        if cond.ndim == 2 and np.any(np.abs(cond.sum(axis=1) - 1) > 1e-12):
            raise ValueError("conditional rows must sum to 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "conditionals", cond)

    @property
    def is_binary(self) -> bool:
        return self.conditionals.ndim == 1

    @property
    def num_classes(self) -> int:
        return 2 if self.is_binary else self.conditionals.shape[1]


# ---------------------------------------------------------------------------
# binary


def conditional_risks_binary(eta, h, rho_plus: float, rho_minus: float) -> dict:
    """Closed-form conditional zero-one and (rho+, rho-)-margin risks."""
    eta = np.asarray(eta, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    zero_one = np.where(h < 0, eta, 1 - eta)
    margin = np.select(
        [h >= rho_plus, h >= 0, h >= -rho_minus],
        [1 - eta, eta * (1 - h / rho_plus) + (1 - eta), eta + (1 - eta) * (1 + h / rho_minus)],
        default=eta,
    )
    return {"zero_one": zero_one, "margin_loss": margin}


def conditional_risks_binary_direct(eta, h, rho_plus: float, rho_minus: float) -> dict:
    """E_y of the losses by summing over y in {+1, -1}."""
    eta = np.asarray(eta, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    ones = np.ones_like(h, dtype=np.int64)
    lp = imbalanced_margin_binary(h, ones, rho_plus, rho_minus)
    lm = imbalanced_margin_binary(h, -ones, rho_plus, rho_minus)
    zp = (h < 0).astype(np.float64)
    zm = (h >= 0).astype(np.float64)
    return {"zero_one": eta * zp + (1 - eta) * zm, "margin_loss": eta * lp + (1 - eta) * lm}


def best_conditional_binary(eta) -> np.ndarray:
    """inf_h of both conditional risks; they coincide at min(eta, 1 - eta)."""
    eta = np.asarray(eta, dtype=np.float64)
    return np.minimum(eta, 1 - eta)


def bayes_scores_binary(eta, rho_plus: float, rho_minus: float) -> np.ndarray:
    """Pointwise scores attaining the best conditional margin and zero-one risks."""
    eta = np.asarray(eta, dtype=np.float64)
    return np.where(eta >= 0.5, rho_plus, -2.0 * rho_minus)


def best_conditional_binary_numeric(eta: float, rho_plus: float, rho_minus: float,
                                    n_grid: int = 2001) -> dict:
    """Grid oracle over h, breakpoints included."""
    span = 3 * max(rho_plus, rho_minus)
    grid = np.unique(np.concatenate([
        np.linspace(-span, span, n_grid), [-rho_minus, -rho_minus - 1e-12, 0.0, rho_plus]
    ]))
    r = conditional_risks_binary_direct(np.full_like(grid, eta), grid, rho_plus, rho_minus)
    return {"zero_one": float(r["zero_one"].min()), "margin_loss": float(r["margin_loss"].min())}


def verify_h_consistency_binary(dist: FiniteDistribution, h, rho_plus: float,
                                rho_minus: float) -> dict:
    """Excess zero-one risk (lhs) against excess margin risk (rhs), gaps included."""
    if not dist.is_binary:
        raise ValueError("binary check needs a binary distribution")
    h = np.asarray(h, dtype=np.float64)
    eta, w = dist.conditionals, dist.weights
    cond = conditional_risks_binary(eta, h, rho_plus, rho_minus)
    best = best_conditional_binary(eta)
    gap01 = minimizability_gap(dist, "zero-one", (rho_plus, rho_minus))
    gapL = minimizability_gap(dist, "margin", (rho_plus, rho_minus))
    r01, rL = float(w @ cond["zero_one"]), float(w @ cond["margin_loss"])
    best_r = float(w @ best)
    lhs = r01 - (best_r + gap01) + gap01
    rhs = rL - (best_r + gapL) + gapL
    return {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs, "holds": rhs - lhs >= SLACK_TOL}


# ---------------------------------------------------------------------------
# multi-class


def conditional_risks_multi(p, scores, rho) -> dict:
    """Closed forms 1 - p(h|x) and 1 - p(h|x) min(1, margin(h)/rho_h), h = predicted class."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    rho = np.asarray(rho, dtype=np.float64)
    pred = predict_multi(scores)
    p_pred = np.take_along_axis(p, pred[:, None], 1)[:, 0]
    margin = multiclass_margin(scores, pred)
    return {
        "zero_one": 1 - p_pred,
        "margin_loss": 1 - p_pred * np.minimum(1.0, margin / rho[pred]),
    }


def conditional_risks_multi_direct(p, scores, rho) -> dict:
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    n, c = p.shape
    pred = predict_multi(scores)
    z01 = np.zeros(n)
    zL = np.zeros(n)
    for y in range(c):
        labels = np.full(n, y)
        z01 += p[:, y] * (pred != y)
        zL += p[:, y] * imbalanced_margin_multi(scores, labels, rho)
    return {"zero_one": z01, "margin_loss": zL}


def best_conditional_multi(p) -> np.ndarray:
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    return 1 - p.max(axis=1)


def bayes_scores_multi(p, rho) -> np.ndarray:
    """Scores putting the most likely class on top with margin exactly its rho."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    rho = np.asarray(rho, dtype=np.float64)
    top = p.shape[1] - 1 - np.argmax(p[:, ::-1], axis=1)
    scores = np.zeros_like(p)
    scores[np.arange(p.shape[0]), top] = rho[top]
    return scores


def best_conditional_multi_numeric(p, rho, n_grid: int = 201) -> dict:
    """Oracle over scores t e_k for every class k and t on a grid containing rho_k."""
    p = np.asarray(p, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    c = p.size
    best01 = bestL = math.inf
    for k in range(c):
        ts = np.unique(np.concatenate([np.linspace(-3 * rho[k], 3 * rho[k], n_grid), [rho[k]]]))
        scores = np.zeros((ts.size, c))
        scores[:, k] = ts
        r = conditional_risks_multi_direct(np.tile(p, (ts.size, 1)), scores, rho)
        best01 = min(best01, float(r["zero_one"].min()))
        bestL = min(bestL, float(r["margin_loss"].min()))
    return {"zero_one": best01, "margin_loss": bestL}


def verify_h_consistency_multi(dist: FiniteDistribution, scores, rho) -> dict:
    if dist.is_binary:
        raise ValueError("multi-class check needs conditional rows")
    w = dist.weights
    cond = conditional_risks_multi(dist.conditionals, scores, rho)
    best = float(w @ best_conditional_multi(dist.conditionals))
    gap01 = minimizability_gap(dist, "zero-one", rho)
    gapL = minimizability_gap(dist, "margin", rho)
    lhs = float(w @ cond["zero_one"]) - (best + gap01) + gap01
    rhs = float(w @ cond["margin_loss"]) - (best + gapL) + gapL
    return {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs, "holds": rhs - lhs >= SLACK_TOL}


# ---------------------------------------------------------------------------


def minimizability_gap(dist: FiniteDistribution, loss: str, rho,
                       hypothesis_class: str = "complete-pointwise") -> float:
    """Best-in-class risk minus the expected best conditional risk.

    The best-in-class risk is the risk of the pointwise minimizer, evaluated
    as a hypothesis; the second term is the closed-form pointwise infimum.
    """
    if hypothesis_class != "complete-pointwise":
        raise ValueError(f"unsupported hypothesis class {hypothesis_class!r}")
    if loss not in ("zero-one", "margin"):
        raise ValueError(f"unknown loss {loss!r}")
    key = "zero_one" if loss == "zero-one" else "margin_loss"
    w = dist.weights
    if dist.is_binary:
        rp, rm = rho
        h_star = bayes_scores_binary(dist.conditionals, rp, rm)
        best_in_class = float(w @ conditional_risks_binary_direct(dist.conditionals, h_star, rp, rm)[key])
        pointwise = float(w @ best_conditional_binary(dist.conditionals))
    else:
        h_star = bayes_scores_multi(dist.conditionals, rho)
        best_in_class = float(w @ conditional_risks_multi_direct(dist.conditionals, h_star, rho)[key])
        pointwise = float(w @ best_conditional_multi(dist.conditionals))
    return best_in_class - pointwise


# ---------------------------------------------------------------------------
# random trials


def random_binary_instance(rng: np.random.Generator, max_support: int = 10,
                           rho_range=(0.1, 10.0)):
    n = int(rng.integers(1, max_support + 1))
    dist = FiniteDistribution(_simplex(rng, n), rng.random(n))
    rho = tuple(float(v) for v in _log_uniform(rng, rho_range, 2))
    span = 3 * max(rho)
    h = rng.uniform(-span, span, n)
    return dist, h, rho


def random_multi_instance(rng: np.random.Generator, max_support: int = 10, max_classes: int = 5,
                          rho_range=(0.1, 10.0)):
    n = int(rng.integers(1, max_support + 1))
    c = int(rng.integers(2, max_classes + 1))
    cond = np.stack([_simplex(rng, c) for _ in range(n)])
    dist = FiniteDistribution(_simplex(rng, n), cond)
    rho = _log_uniform(rng, rho_range, c)
    scores = rng.normal(scale=2 * rho.max(), size=(n, c))
    return dist, scores, rho


def _simplex(rng, n):
    v = rng.dirichlet(np.ones(n))
    v[-1] = 1.0 - v[:-1].sum()
    return np.clip(v, 0.0, 1.0)


def _log_uniform(rng, bounds, size):
    lo, hi = bounds
    return np.exp(rng.uniform(math.log(lo), math.log(hi), size))


def run_trials(kind: str, trials: int = 1000, seed: int = 0, max_support: int = 10,
               max_classes: int = 5) -> dict:
    """Random instances plus, per instance, the Bayes-optimal hypothesis as tightness witness."""
    if kind not in ("binary", "multi"):
        raise ValueError("kind must be 'binary' or 'multi'")
    rng = np.random.default_rng(seed)
    worst = math.inf
    violations = 0
    tight_random = 0
    tight_witness = 0
    for _ in range(trials):
        if kind == "binary":
            dist, h, rho = random_binary_instance(rng, max_support)
            res = verify_h_consistency_binary(dist, h, *rho)
            wit = verify_h_consistency_binary(dist, bayes_scores_binary(dist.conditionals, *rho), *rho)
        else:
            dist, h, rho = random_multi_instance(rng, max_support, max_classes)
            res = verify_h_consistency_multi(dist, h, rho)
            wit = verify_h_consistency_multi(dist, bayes_scores_multi(dist.conditionals, rho), rho)
        worst = min(worst, res["slack"])
        violations += not res["holds"]
        tight_random += res["slack"] <= TIGHT_TOL
        tight_witness += abs(wit["slack"]) <= TIGHT_TOL and wit["holds"]
    return {
        "kind": kind,
        "trials": trials,
        "seed": seed,
        "worst_slack": worst,
        "violations": violations,
        "all_hold": violations == 0,
        "tight_random_instances": tight_random,
        "tight_witnesses": tight_witness,
    }


# ---------------------------------------------------------------------------
# cost-sensitive inconsistency


class ConsistentRegimeError(ValueError):
    pass


def inconsistency_threshold(c_plus: float, c_minus: float) -> float:
    if c_plus <= 0 or c_minus <= 0:
        raise ValueError("costs must be positive")
    if c_plus == c_minus:
        raise ConsistentRegimeError("consistent regime, no demo")
    return abs(c_plus - c_minus) / (2 * (c_plus + c_minus))


def _brute_force(c_plus: float, c_minus: float, eps: float) -> dict:
    # eta is pushed toward the cheaper label so the zero-one minimizer favors it
    eta = 0.5 - eps if c_plus > c_minus else 0.5 + eps
    zo = {+1: 1 - eta, -1: eta}
    cs = {+1: (1 - eta) * c_minus, -1: eta * c_plus}
    zo_min = min(zo.values())
    cs_min = min(cs.values())
    zo_set = {s for s, v in zo.items() if v == zo_min}
    cs_set = {s for s, v in cs.items() if v == cs_min}
    return {
        "eta": eta,
        "zero_one_risks": {"all_positive": zo[+1], "all_negative": zo[-1]},
        "cost_sensitive_risks": {"all_positive": cs[+1], "all_negative": cs[-1]},
        "zero_one_minimizer_sign": _sign_of(zo_set),
        "cost_sensitive_minimizer_sign": _sign_of(cs_set),
        "inconsistent": not (zo_set & cs_set),
    }


def _sign_of(signs: set) -> int:
    """+1 or -1 for a unique minimizer; 0 when both signs tie."""
    return next(iter(signs)) if len(signs) == 1 else 0


def bayes_inconsistency_demo(c_plus: float, c_minus: float, eps: float) -> dict:
    """Singleton distribution where the cost-sensitive minimizer misclassifies.

    For c+ > c- the construction uses eta = 1/2 - eps; the case c+ < c- is
    the mirror image with eta = 1/2 + eps.
    """
    threshold = inconsistency_threshold(c_plus, c_minus)
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    out = {"c_plus": c_plus, "c_minus": c_minus, "eps": eps, "threshold": threshold}
    out.update(_brute_force(c_plus, c_minus, eps))
    return out


def brute_force_threshold(c_plus: float, c_minus: float, tol: float = 1e-13) -> float:
    """Bisection on the brute-force verdict, independent of the closed form."""
    inconsistency_threshold(c_plus, c_minus)
    lo, hi = 0.0, 0.5
    if not _brute_force(c_plus, c_minus, 1e-15)["inconsistent"]:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _brute_force(c_plus, c_minus, mid)["inconsistent"]:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def scan_threshold(c_plus: float, c_minus: float, step: float = 1e-4) -> dict:
    """Scan eps over (0, 1/2) on a grid; report where the verdict flips."""
    eps = np.arange(step, 0.5, step)
    verdict = np.array([_brute_force(c_plus, c_minus, float(e))["inconsistent"] for e in eps])
    flips = np.flatnonzero(verdict[:-1] != verdict[1:])
    if flips.size == 0:
        return {"flip_between": None, "flips": 0}
    j = int(flips[0])
    return {"flip_between": [float(eps[j]), float(eps[j + 1])], "flips": int(flips.size)}

"""Central finite differences, shared by the gradient tests."""

from __future__ import annotations

import numpy as np

from immax.data import Dataset
from immax.losses import LossSpec, loss_and_grad
from immax.models import MLP, BinaryLinear, MultiLinear
from immax.training import objective_and_grad


STEP = 1e-6
RTOL = 1e-5


def fd_scores(fn, scores: np.ndarray, step: float = STEP) -> np.ndarray:
    """Per-example derivative of fn(scores) -> (n,) along every score column.

    Examples are independent, so one perturbation per column covers all rows.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        return (fn(scores + step) - fn(scores - step)) / (2 * step)
    out = np.empty_like(scores)
    for j in range(scores.shape[1]):
        e = np.zeros_like(scores)
        e[:, j] = step
        out[:, j] = (fn(scores + e) - fn(scores - e)) / (2 * step)
    return out


def fd_vector(fn, theta: np.ndarray, step: float = STEP) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    out = np.empty_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = step
        out[j] = (fn(theta + e) - fn(theta - e)) / (2 * step)
    return out


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Row-wise max|a - n| / max(1, max|a|): relative for O(1) gradients, absolute below."""
    a = np.atleast_2d(np.asarray(analytic, dtype=np.float64).T).T
    n = np.atleast_2d(np.asarray(numeric, dtype=np.float64).T).T
    a = a.reshape(a.shape[0], -1)
    n = n.reshape(n.shape[0], -1)
    return np.max(np.abs(a - n), axis=1) / np.maximum(1.0, np.max(np.abs(a), axis=1))


# ---------------------------------------------------------------------------
# loss and objective suites

KINK = 1e-3


def _binary_kinks(kind: str, p: dict, h: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Score values h where the loss is not differentiable, one column per kink."""
    if kind == "cost-sensitive":
        return np.zeros((h.size, 1))
    if kind == "phi-margin":
        return np.stack([np.zeros_like(h), y * p["rho"]], axis=1)
    if kind == "imbalanced-margin-binary":
        rho = np.where(y == 1, p["rho"][0], p["rho"][1])
        return np.stack([np.zeros_like(h), y * rho], axis=1)
    if kind == "immax-binary":
        if p.get("psi", "hinge") != "hinge":
            return np.full((h.size, 1), np.inf)
        return (y * np.where(y == 1, p["alpha"], 1 - p["alpha"]))[:, None]
    if kind == "hinge":
        return (y * p.get("rho", 1.0))[:, None]
    return np.full((h.size, 1), np.inf)


def _multi_far_from_kinks(kind: str, p: dict, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    if kind != "imbalanced-margin-multi":
        return np.ones(len(s), dtype=bool)
    own = s[np.arange(len(s)), y]
    others = np.sort(np.where(np.eye(s.shape[1], dtype=bool)[y], -np.inf, s), axis=1)
    margin = own - others[:, -1]
    rho_y = np.asarray(p["rho"])[y]
    return ((np.abs(margin) > KINK) & (np.abs(margin - rho_y) > KINK)
            & (others[:, -1] - others[:, -2] > KINK))


def check_loss(kind: str, params: dict, rng: np.random.Generator, n_points: int = 1000,
               num_classes: int = 3, counts=None) -> dict:
    """Analytic against finite-difference gradients at n_points random inputs."""
    spec = LossSpec(kind, params)
    if spec.needs_counts:
        spec = spec.with_counts(counts)
    kept_a, kept_n = [], []
    total = 0
    while total < n_points:
        if spec.is_binary:
            h = rng.normal(0, 2, 4 * n_points)
            y = rng.choice([-1, 1], h.size)
            keep = np.all(np.abs(h[:, None] - _binary_kinks(kind, spec.params, h, y)) > KINK, axis=1)
            h, y = h[keep], y[keep]
            analytic = loss_and_grad(spec, h, y)[1]
            numeric = fd_scores(lambda t: loss_and_grad(spec, t, y)[0], h)
        else:
            s = rng.normal(0, 2, (4 * n_points, num_classes))
            y = rng.integers(0, num_classes, len(s))
            keep = _multi_far_from_kinks(kind, spec.params, s, y)
            s, y = s[keep], y[keep]
            beta = (rng.random(len(s)) < spec.params.get("p", 0.5)).astype(float)
            analytic = loss_and_grad(spec, s, y, beta)[1]
            numeric = fd_scores(lambda t: loss_and_grad(spec, t, y, beta)[0], s)
        kept_a.append(analytic)
        kept_n.append(numeric)
        total += len(analytic)
    a = np.concatenate(kept_a)[:n_points]
    n = np.concatenate(kept_n)[:n_points]
    err = rel_error(a, n)
    return {"points": len(err), "max_rel_error": float(err.max())}


def _small_dataset(rng, n: int, dim: int, c: int) -> Dataset:
    y = np.r_[np.arange(c), rng.integers(0, c, n - c)]
    return Dataset(rng.normal(0, 1, (n, dim)), y, c)


def check_objective(which: str, rng: np.random.Generator, n_points: int = 1000,
                    lam: float = 0.05) -> dict:
    """FD check of the regularized objective gradient in the model parameters.

    which: "immax-binary-hinge", "immax-binary-logistic", "immax-multi" or
    "immax-multi-mlp".
    """
    dim, c = 3, 3
    errs = []
    while len(errs) < n_points:
        if which.startswith("immax-binary"):
            psi = which.rsplit("-", 1)[1]
            ds = _small_dataset(rng, 6, dim, 2)
            alpha = float(rng.uniform(0.1, 0.9))
            spec = LossSpec("immax-binary", {"alpha": alpha, "psi": psi})
            scorer = BinaryLinear(dim, rng.normal(0, 1, dim), float(rng.normal()))
        else:
            ds = _small_dataset(rng, 6, dim, c)
            spec = LossSpec("immax", {"rho": list(rng.uniform(0.2, 3.0, c))})
            scorer = (MLP(dim, 4, c, seed=int(rng.integers(1 << 30))) if which.endswith("mlp")
                      else MultiLinear(dim, c, rng.normal(0, 1, (c, dim)), rng.normal(0, 1, c)))
        theta = scorer.get_params()
        if which == "immax-binary-hinge":
            u = ds.signed_labels() * scorer.forward(ds.X)
            s = np.where(ds.signed_labels() == 1, alpha, 1 - alpha)
            if np.any(np.abs(u - s) < KINK):
                continue

        def f(t):
            scorer.set_params(t)
            return objective_and_grad(scorer, ds, spec, lam)[0]

        numeric = fd_vector(f, theta)
        scorer.set_params(theta)
        analytic = objective_and_grad(scorer, ds, spec, lam)[1]
        errs.append(float(rel_error(analytic[None, :], numeric[None, :])[0]))
    return {"points": len(errs), "max_rel_error": max(errs)}

"""Regularized ERM: IMMAX objectives, (sub)gradient training, evaluation, CV."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from .data import Dataset
from .losses import (
    LossConfigError,
    LossKind,
    LossSpec,
    Surrogate,
    draw_equal_beta,
    loss_and_grad,
)
from .models import MLP, BinaryLinear, MultiLinear, Scorer


class TrainingDiverged(RuntimeError):
    """Objective became non-finite; carries the last finite state."""

    def __init__(self, message: str, scorer: Scorer, trace: list):
        super().__init__(message)
        self.scorer = scorer
        self.trace = trace


class StratificationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# objectives


def _targets(spec: LossSpec, scorer: Scorer, dataset: Dataset) -> np.ndarray:
    binary_scorer = isinstance(scorer, BinaryLinear) or (isinstance(scorer, MLP) and scorer.binary)
    if spec.is_binary != binary_scorer:
        raise LossConfigError(
            f"loss {spec.kind.value!r} does not match scorer {scorer.kind}"
            + (" (binary output)" if binary_scorer else "")
        )
    return dataset.signed_labels() if spec.is_binary else dataset.y


def objective_and_grad(
    scorer: Scorer, dataset: Dataset, spec: LossSpec, lam: float, beta=None
) -> tuple[float, np.ndarray]:
    """lam * ||h||^2 + mean loss, with its gradient in the flat parameters.

    Count-based losses read m_k from ``spec`` when present (so minibatches
    use the full training counts) and from ``dataset`` otherwise.
    """
    if "counts" not in spec.params:
        spec = spec.with_counts(dataset.counts)
    y = _targets(spec, scorer, dataset)
    scores = scorer.forward(dataset.X)
    values, dscores = loss_and_grad(spec, scores, y, beta)
    m = len(dataset)
    theta = scorer.get_params()
    mask = scorer.penalty_mask()
    pen = theta * mask
    value = lam * float(pen @ pen) + float(values.mean())
    grad = scorer.backward(dataset.X, dscores / m) + 2.0 * lam * pen
    return value, grad


def objective(scorer: Scorer, dataset: Dataset, spec: LossSpec, lam: float, beta=None) -> float:
    return objective_and_grad(scorer, dataset, spec, lam, beta)[0]


def immax_binary_objective(
    scorer: BinaryLinear, dataset: Dataset, lam: float, alpha: float, psi: str = "hinge"
) -> float:
    spec = LossSpec(LossKind.IMMAX_BINARY, {"alpha": alpha, "psi": Surrogate(psi).value})
    return objective(scorer, dataset, spec, lam)


def immax_multi_objective(scorer: Scorer, dataset: Dataset, lam: float, rho) -> float:
    return objective(scorer, dataset, LossSpec(LossKind.IMMAX_MULTI, {"rho": list(rho)}), lam)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    loss: LossSpec
    lam: float = 1e-3
    optimizer: str = "gd"  # "gd" (full batch) or "sgd"
    batch_size: int | None = None
    schedule: str = "constant"  # or "cosine"
    lr: float = 1.0
    epochs: int = 500
    seed: int = 0
    norm_cap: float | None = None
    model: str = "linear"  # or "mlp"
    hidden: int = 16
    fit_bias: bool = True
    line_search: bool = True
    tol: float = 1e-10
    solver: str = "auto"  # "gd", "dual" (exact SMO for linear hinge) or "auto"

    def __post_init__(self):
        if self.lam < 0:
            raise LossConfigError("lambda must be non-negative")
        if self.epochs < 1:
            raise LossConfigError("epochs must be >= 1")
        if self.optimizer not in ("gd", "sgd"):
            raise LossConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in ("constant", "cosine"):
            raise LossConfigError(f"unknown schedule {self.schedule!r}")
        if self.model not in ("linear", "mlp"):
            raise LossConfigError(f"unknown model {self.model!r}")
        if self.solver not in ("auto", "gd", "dual"):
            raise LossConfigError(f"unknown solver {self.solver!r}")
        if self.solver == "dual" and not _dual_applicable(self):
            raise LossConfigError(
                "dual solver needs a linear binary scorer with bias, hinge surrogate, "
                "lambda > 0 and no norm cap"
            )


def _dual_applicable(config: "TrainConfig") -> bool:
    loss = config.loss
    hinge = loss.kind is LossKind.HINGE or (
        loss.kind is LossKind.IMMAX_BINARY and Surrogate(loss["psi"]) is Surrogate.HINGE
    )
    return (
        hinge and config.model == "linear" and config.fit_bias and config.lam > 0
        and config.norm_cap is None and config.optimizer == "gd"
    )


@dataclass
class TraceRow:
    epoch: int
    objective: float
    train_error: float


@dataclass
class TrainResult:
    scorer: Scorer
    trace: list[TraceRow]
    converged: bool
    reason: str

    @property
    def final_objective(self) -> float:
        return self.trace[-1].objective


def init_scorer(dataset: Dataset, config: TrainConfig) -> Scorer:
    binary = config.loss.is_binary
    if binary and not dataset.is_binary:
        raise LossConfigError("binary losses need a two-class dataset")
    if config.model == "mlp":
        out = 1 if binary else dataset.num_classes
        return MLP(dataset.dim, config.hidden, out, seed=config.seed)
    if binary:
        return BinaryLinear(dataset.dim, fit_bias=config.fit_bias)
    return MultiLinear(dataset.dim, dataset.num_classes, fit_bias=config.fit_bias)


def _project(theta: np.ndarray, mask: np.ndarray, cap: float | None) -> np.ndarray:
    if cap is None:
        return theta
    norm = np.linalg.norm(theta[mask])
    if norm <= cap:
        return theta
    out = theta.copy()
    out[mask] *= cap / norm
    return out


def train_error(scorer: Scorer, dataset: Dataset) -> float:
    return float(np.mean(scorer.predict(dataset.X) != dataset.y))


def train(dataset: Dataset, config: TrainConfig, scorer: Scorer | None = None) -> TrainResult:
    """Minimize the regularized objective; deterministic given ``config.seed``.

    Full-batch GD uses a backtracking (Armijo) step on the projected
    gradient mapping, so accepted steps never increase the objective.
    """
    if config.solver == "dual" or (config.solver == "auto" and scorer is None
                                   and _dual_applicable(config)):
        return train_dual(dataset, config)
    spec = config.loss.with_counts(dataset.counts)
    scorer = init_scorer(dataset, config) if scorer is None else scorer.copy()
    mask = scorer.penalty_mask()
    m = len(dataset)
    equal_rng = np.random.default_rng([config.seed, 1])
    shuffle_rng = np.random.default_rng([config.seed, 2])
    uses_beta = spec.kind is LossKind.EQUAL

    def fg(theta, beta, subset=None):
        scorer.set_params(theta)
        data = dataset if subset is None else dataset.subset(subset)
        b = None if beta is None else (beta if subset is None else beta[subset])
        return objective_and_grad(scorer, data, spec, config.lam, b)

    theta = _project(scorer.get_params(), mask, config.norm_cap)
    trace: list[TraceRow] = []
    beta = draw_equal_beta(spec, m, equal_rng) if uses_beta else None
    f, g = fg(theta, beta)
    if not math.isfinite(f):
        raise TrainingDiverged("initial objective is not finite", scorer, trace)
    trace.append(TraceRow(0, f, _err_at(scorer, theta, dataset)))
    step = config.lr
    reason = "epoch cap"
    converged = False

    for epoch in range(1, config.epochs + 1):
        last_theta, last_f = theta, f
        if config.optimizer == "gd":
            if config.line_search:
                accepted = False
                while step >= 1e-14:
                    cand = _project(theta - step * g, mask, config.norm_cap)
                    fc, gc = fg(cand, beta)
                    if math.isfinite(fc) and fc <= f - 1e-4 * float(g @ (theta - cand)):
                        accepted = True
                        break
                    step *= 0.5
                if not accepted:
                    scorer.set_params(theta)
                    converged, reason = True, "line search stalled"
                    break
                theta, f, g = cand, fc, gc
                step = min(step * 2.0, 1e6)
            else:
                theta = _project(theta - _lr(config, epoch - 1, config.epochs) * g, mask, config.norm_cap)
                f, g = fg(theta, beta)
        else:
            bs = config.batch_size or m
            if not 1 <= bs <= m:
                raise LossConfigError("batch size must lie in [1, m]")
            order = shuffle_rng.permutation(m)
            steps_per_epoch = math.ceil(m / bs)
            for j in range(steps_per_epoch):
                idx = order[j * bs:(j + 1) * bs]
                _, gb = fg(theta, beta, idx)
                it = (epoch - 1) * steps_per_epoch + j
                lr = _lr(config, it, config.epochs * steps_per_epoch)
                theta = _project(theta - lr * gb, mask, config.norm_cap)
            f, g = fg(theta, beta)

        if not math.isfinite(f):
            scorer.set_params(last_theta)
            raise TrainingDiverged(f"objective became non-finite at epoch {epoch}", scorer, trace)
        trace.append(TraceRow(epoch, f, _err_at(scorer, theta, dataset)))
        if uses_beta:
            beta = draw_equal_beta(spec, m, equal_rng)
            f, g = fg(theta, beta)
        elif abs(last_f - f) <= config.tol * max(abs(last_f), 1e-300):
            converged, reason = True, "relative change below tolerance"
            break

    scorer.set_params(theta)
    return TrainResult(scorer, trace, converged, reason)


def train_dual(dataset: Dataset, config: TrainConfig, gap_tol: float = 1e-8,
               max_iter: int = 1_000_000, trace_every: int = 50) -> TrainResult:
    """Exact solver for lam ||w||^2 + mean_i max(0, 1 - y_i h(x_i) / s_i).

    s_i is alpha / (1 - alpha) by class for the hinge IMMAX loss, or rho
    for the plain hinge. Sequential minimal optimization on the dual
    box-constrained QP with second-order working-set selection; the
    unpenalized bias is recovered from the KKT conditions.
    """
    if not dataset.is_binary:
        raise LossConfigError("dual solver is binary only")
    loss = config.loss
    y = dataset.signed_labels().astype(np.float64)
    if loss.kind is LossKind.IMMAX_BINARY:
        s = np.where(y > 0, loss["alpha"], 1.0 - loss["alpha"])
    else:
        s = np.full(y.size, float(loss["rho"]))
    X = dataset.X
    m = y.size
    lam = config.lam
    upper = 1.0 / (m * s)
    beta = np.zeros(m)
    w = np.zeros(dataset.dim)
    grad = -s.copy()
    sq = np.einsum("ij,ij->i", X, X)
    pos = y > 0
    scorer = BinaryLinear(dataset.dim)
    spec = loss

    def record(it, b):
        scorer.w, scorer.b = w.copy(), np.array([b])
        trace.append(TraceRow(it, objective(scorer, dataset, spec, lam), train_error(scorer, dataset)))

    trace: list[TraceRow] = []
    record(0, 0.0)
    converged = False
    it = 0
    hi = lo = 0.0
    while it < max_iter:
        up = np.where(pos, beta < upper, beta > 0)
        low = np.where(pos, beta > 0, beta < upper)
        v = -y * grad
        v_up = np.where(up, v, -np.inf)
        i = int(np.argmax(v_up))
        hi = v_up[i]
        lo = np.where(low, v, np.inf).min()
        if hi - lo < gap_tol:
            converged = True
            break
        gain = hi - v
        curv = np.maximum((sq[i] + sq - 2.0 * (X @ X[i])) / (2.0 * lam), 1e-12)
        j = int(np.argmin(np.where(low & (v < hi), -gain ** 2 / curv, np.inf)))
        delta = gain[j] / curv[j]
        delta = min(delta, upper[i] - beta[i] if pos[i] else beta[i],
                    beta[j] if pos[j] else upper[j] - beta[j])
        beta[i] += y[i] * delta
        beta[j] -= y[j] * delta
        dw = delta * (X[i] - X[j]) / (2.0 * lam)
        w += dw
        grad += y * (X @ dw)
        it += 1
        if it % trace_every == 0:
            record(it, _dual_bias(beta, upper, y, grad, hi, lo))
    b = _dual_bias(beta, upper, y, grad, hi, lo)
    record(it, b)
    return TrainResult(scorer, trace, converged,
                       "KKT violation below tolerance" if converged else "iteration cap")


def _dual_bias(beta, upper, y, grad, hi, lo) -> float:
    free = (beta > 1e-12 * upper) & (beta < upper * (1.0 - 1e-12))
    if free.any():
        return float(np.mean(-y[free] * grad[free]))
    return float(0.5 * (hi + lo))


def _lr(config: TrainConfig, it: int, total: int) -> float:
    if config.schedule == "cosine":
        return config.lr * 0.5 * (1.0 + math.cos(math.pi * it / max(total, 1)))
    return config.lr


def _err_at(scorer: Scorer, theta: np.ndarray, dataset: Dataset) -> float:
    scorer.set_params(theta)
    return train_error(scorer, dataset)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    zero_one_error: float
    per_class_errors: list[float]
    confusion: list[list[int]]

    def to_dict(self) -> dict:
        return {
            "zero_one_error": self.zero_one_error,
            "per_class_errors": self.per_class_errors,
            "confusion": self.confusion,
        }


def evaluate(scorer: Scorer, dataset: Dataset) -> EvalReport:
    """Zero-one error under sign(0)=+1 / highest-index tie-breaking."""
    c = dataset.num_classes
    pred = scorer.predict(dataset.X)
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (dataset.y, pred), 1)
    counts = confusion.sum(axis=1)
    per_class = [
        float(1.0 - confusion[k, k] / counts[k]) if counts[k] else float("nan") for k in range(c)
    ]
    return EvalReport(
        zero_one_error=float(np.mean(pred != dataset.y)),
        per_class_errors=per_class,
        confusion=confusion.tolist(),
    )


# ---------------------------------------------------------------------------
# hyperparameter grids and cross-validation

BASELINE_GRIDS: dict[str, dict[str, list[float]]] = {
    "equal": {
        "p": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        "eq_lambda": [v * 1e-3 for v in (0.176, 0.5, 0.8, 1.5, 1.76, 2.0, 3.0, 5.0)],
    },
    "la": {"tau": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
           + [1.5 + 0.5 * i for i in range(18)]},
    "cb": {"gamma": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99, 0.999, 0.9999]},
    "focal": {"gamma": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
              + [1.0 + 0.5 * i for i in range(19)]},
    "ldam": {"C": [10.0 ** e for e in range(-4, 5)] + [5 * 10.0 ** e for e in range(-4, 4)]},
}


def optimal_rho_center(counts) -> np.ndarray:
    """rho*_k = m_k^(1/3) / sum_j m_j^(1/3)."""
    c = np.asarray(counts, dtype=np.float64) ** (1.0 / 3.0)
    return c / c.sum()


def window(center: float, rel_width: float = 0.8, n_values: int = 10,
           lo: float = 0.0, hi: float = math.inf) -> list[float]:
    """n_values points in [center(1-w), center(1+w)], kept strictly inside (lo, hi)."""
    pts = np.linspace(center * (1 - rel_width), center * (1 + rel_width), n_values)
    pts = pts[(pts > lo) & (pts < hi)]
    return [float(v) for v in pts]


def immax_alpha_grid(counts, radii=None, rel_width: float = 0.8, n_values: int = 10) -> list[float]:
    """alpha = rho+/(rho+ + rho-) around its separable-case optimum."""
    m = np.asarray(counts, dtype=np.float64)
    r = np.ones(2) if radii is None else np.asarray(radii, dtype=np.float64)
    a = m ** (1 / 3) * r ** (2 / 3)
    center = float(a[0] / a.sum())
    return window(center, rel_width, n_values, 0.0, 1.0)


def immax_rho_grid(
    counts, rel_width: float = 0.8, n_values: int = 10, max_configs: int = 256,
    scale: float = 1.0,
) -> list[list[float]]:
    """Candidate rho vectors around rho*; full product when it is small enough.

    Otherwise the two most frequent classes get their own axis and every
    remaining class shares a single value, following the tied-minority
    reduction of the search space.
    """
    center = optimal_rho_center(counts) * scale
    c = center.size
    axes = [window(v, rel_width, n_values, 0.0) for v in center]
    if n_values ** c <= max_configs:
        return [list(p) for p in itertools.product(*axes)]
    order = np.argsort(-np.asarray(counts), kind="stable")
    head = list(order[:2])
    mults = np.array(window(1.0, rel_width, n_values, 0.0))
    out = []
    for a0, a1, t in itertools.product(mults, mults, mults):
        rho = center * t
        rho[head[0]] = center[head[0]] * a0
        rho[head[1]] = center[head[1]] * a1
        out.append([float(v) for v in rho])
    return out


def stratified_folds(dataset: Dataset, folds: int, seed: int) -> list[np.ndarray]:
    """Per-class round-robin assignment; every fold gets every class."""
    if folds < 2:
        raise StratificationError("need at least 2 folds")
    counts = dataset.counts
    if (counts < folds).any():
        k = int(np.argmax(counts < folds))
        raise StratificationError(f"class {k} has {counts[k]} examples, fewer than {folds} folds")
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(dataset), dtype=np.int64)
    offset = 0
    for idx in dataset.index_sets:
        perm = rng.permutation(idx)
        assignment[perm] = (np.arange(perm.size) + offset) % folds
        offset += perm.size
    return [np.flatnonzero(assignment == f) for f in range(folds)]


@dataclass
class CVRow:
    params: dict[str, Any]
    mean_error: float
    std_error: float
    fold_errors: list[float]


@dataclass
class CVResult:
    best: CVRow
    best_config: TrainConfig
    table: list[CVRow] = field(default_factory=list)


def cross_validate(
    dataset: Dataset,
    candidates: Sequence[tuple[dict[str, Any], TrainConfig]],
    folds: int = 5,
    seed: int = 0,
    prefer: Callable[[dict[str, Any]], float] | None = None,
) -> CVResult:
    """Stratified k-fold CV; the lowest mean validation error wins.

    Ties go to the candidate minimizing ``prefer(params)`` when given
    (e.g. distance to a theoretically motivated value), else the first.
    """
    if not candidates:
        raise ValueError("no candidate configurations")
    parts = stratified_folds(dataset, folds, seed)
    rows: list[CVRow] = []
    for params, config in candidates:
        errs = []
        for f in range(folds):
            val_idx = parts[f]
            tr_idx = np.sort(np.concatenate([parts[j] for j in range(folds) if j != f]))
            res = train(dataset.subset(tr_idx), config)
            errs.append(train_error(res.scorer, dataset.subset(val_idx)))
        rows.append(CVRow(dict(params), float(np.mean(errs)), float(np.std(errs)), errs))
    means = np.array([r.mean_error for r in rows])
    tied = np.flatnonzero(means <= means.min() + 1e-12)
    best_i = int(tied[0])
    if prefer is not None:
        best_i = int(tied[np.argmin([prefer(rows[i].params) for i in tied])])
    return CVResult(rows[best_i], candidates[best_i][1], rows)


def build_candidates(
    base: TrainConfig, grid: dict[str, Sequence[Any]], lam_grid: Sequence[float] | None = None,
    make_loss: Callable[[dict[str, Any]], LossSpec] | None = None,
) -> list[tuple[dict[str, Any], TrainConfig]]:
    """Cartesian product of a loss-parameter grid and a lambda grid."""
    lam_grid = list(lam_grid) if lam_grid is not None else [base.lam]
    keys = list(grid)
    out = []
    for values in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, values))
        if make_loss is not None:
            loss = make_loss(params)
        else:
            loss = LossSpec(base.loss.kind, {**base.loss.params, **params})
        for lam in lam_grid:
            out.append(({**params, "lam": lam}, replace(base, loss=loss, lam=lam)))
    return out

"""Desk-scale experiments: the separable-case boundary picture and benchmarks."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import (
    Dataset,
    GaussianClass,
    ImbalanceProfile,
    default_generators,
    generate_split,
)
from .losses import LossKind, LossSpec
from .margins import ldam_margins, optimal_separable_margins
from .models import BinaryLinear
from .training import (
    TrainConfig,
    build_candidates,
    cross_validate,
    evaluate,
    immax_alpha_grid,
    optimal_rho_center,
    train,
    train_error,
)


class NonSeparableWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BinarySetup:
    """Two isotropic Gaussians on the first axis with a long-tailed class split.

    Class 0 (label +1) is the majority. The test set keeps the training
    proportions at ``test_multiplier`` times the size.
    """

    ratio: float = 100.0
    max_class_size: int = 1980
    separation: float = 3.0
    scale: float = 1.0
    dim: int = 2
    test_multiplier: int = 100

    @property
    def profile(self) -> ImbalanceProfile:
        return ImbalanceProfile("long-tailed", self.ratio, 2, self.max_class_size)

    @property
    def generators(self) -> list[GaussianClass]:
        return default_generators(2, self.dim, self.separation, self.scale)

    def split(self, seed: int) -> tuple[Dataset, Dataset]:
        return generate_split(self.profile, self.generators, seed,
                              self.max_class_size * self.test_multiplier)


# well-separated classes so the training sample is linearly separable
FIGURE1_SETUP = BinarySetup(separation=8.0)


def gaussian_population_error(scorer: BinaryLinear, generators, priors) -> float:
    """Exact zero-one error of sign(w.x + b) under a mixture of isotropic Gaussians."""
    norm = float(np.linalg.norm(scorer.w))
    err = 0.0
    for k, (gen, prior) in enumerate(zip(generators, priors)):
        h_mean = float(scorer.w @ np.asarray(gen.mean) + scorer.b[0])
        if norm == 0:
            miss = float(h_mean < 0) if k == 0 else float(h_mean >= 0)
        else:
            z = h_mean / (gen.scale * norm)
            # class 0 is misclassified when h < 0, class 1 when h >= 0
            miss = 0.5 * math.erfc((z if k == 0 else -z) / math.sqrt(2))
        err += prior * miss
    return err


def boundary_offset(scorer: BinaryLinear, start, end) -> float:
    """Fraction t in start + t (end - start) where the decision boundary crosses."""
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    slope = float(scorer.w @ (end - start))
    if slope == 0:
        return math.nan
    return -float(scorer.w @ start + scorer.b[0]) / slope


@dataclass
class Boundary:
    name: str
    alpha: float
    w: list[float]
    b: float
    offset: float
    train_error: float
    test_error: float
    population_error: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Figure1Result:
    train: Dataset
    boundaries: list[Boundary]
    separable: bool
    verdicts: dict[str, bool] = field(default_factory=dict)
    majority_mean: list[float] = field(default_factory=list)
    minority_mean: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "counts": [int(c) for c in self.train.counts],
            "separable": self.separable,
            "majority_mean": self.majority_mean,
            "minority_mean": self.minority_mean,
            "boundaries": [b.to_dict() for b in self.boundaries],
            "verdicts": self.verdicts,
        }


def boundary_alphas(m_plus: int, m_minus: int) -> dict[str, float]:
    ldam = ldam_margins(m_plus, m_minus)
    return {
        "svm": 0.5,
        "immax": optimal_separable_margins(m_plus, m_minus).alpha,
        "ldam": ldam[0] / (ldam[0] + ldam[1]),
    }


def figure1(setup: BinarySetup = FIGURE1_SETUP, seed: int = 0, lam: float = 1e-3) -> Figure1Result:
    """Train hinge IMMAX at the three alpha choices and compare their boundaries.

    Offsets are measured on the segment from the majority mean (t = 0) to
    the minority mean (t = 1), so t > 1/2 means shifted toward the minority.
    """
    train_set, test_set = setup.split(seed)
    m_plus, m_minus = (int(c) for c in train_set.counts)
    gens = setup.generators
    priors = np.array([m_plus, m_minus], dtype=np.float64) / (m_plus + m_minus)
    major, minor = (0, 1) if m_plus >= m_minus else (1, 0)
    start, end = gens[major].mean, gens[minor].mean
    boundaries = []
    for name, alpha in boundary_alphas(m_plus, m_minus).items():
        res = train(train_set, TrainConfig(LossSpec(LossKind.IMMAX_BINARY, {"alpha": alpha}), lam=lam,
                                           seed=seed))
        sc = res.scorer
        boundaries.append(Boundary(
            name, alpha, [float(v) for v in sc.w], float(sc.b[0]),
            boundary_offset(sc, start, end), train_error(sc, train_set),
            evaluate(sc, test_set).zero_one_error, gaussian_population_error(sc, gens, priors),
        ))
    by = {b.name: b for b in boundaries}
    separable = bool(by["svm"].train_error == 0)
    if not separable:
        warnings.warn("training sample is not linearly separated by the alpha=0.5 solution; "
                      "proceeding with the soft-margin objective", NonSeparableWarning, stacklevel=2)
    verdicts = {k: bool(v) for k, v in {
        "immax_toward_minority": by["immax"].offset > by["svm"].offset,
        "ldam_opposite_side": by["ldam"].offset < by["svm"].offset,
        "immax_lowest_test_error": by["immax"].test_error <= min(by["svm"].test_error,
                                                               by["ldam"].test_error),
        "immax_lowest_population_error": by["immax"].population_error <= min(
            by["svm"].population_error, by["ldam"].population_error),
    }.items()}
    return Figure1Result(train_set, boundaries, separable, verdicts,
                         [float(v) for v in start], [float(v) for v in end])


# ---------------------------------------------------------------------------
# benchmarks


@dataclass
class BinaryBenchRow:
    seed: int
    alpha_cv: float
    error_svm: float
    error_cv: float
    error_immax_center: float
    error_ldam: float


def bench_binary(setup: BinarySetup = BinarySetup(), seeds=range(20), lam: float = 1e-3,
                 folds: int = 5, n_alpha: int = 10) -> dict:
    """Hinge IMMAX with CV-selected alpha against alpha = 1/2 and the LDAM alpha.

    CV ties are broken toward the separable-case alpha.
    """
    rows = []
    for seed in seeds:
        tr, te = setup.split(seed)
        m_plus, m_minus = (int(c) for c in tr.counts)
        alphas = boundary_alphas(m_plus, m_minus)
        base = TrainConfig(LossSpec(LossKind.IMMAX_BINARY, {"alpha": 0.5}), lam=lam, seed=seed)
        grid = immax_alpha_grid([m_plus, m_minus], n_values=n_alpha)
        cands = build_candidates(base, {"alpha": grid})
        cv = cross_validate(tr, cands, folds=folds, seed=seed,
                            prefer=lambda p: abs(p["alpha"] - alphas["immax"]))

        def test_err(alpha):
            cfg = TrainConfig(LossSpec(LossKind.IMMAX_BINARY, {"alpha": alpha}), lam=lam, seed=seed)
            return evaluate(train(tr, cfg).scorer, te).zero_one_error

        rows.append(BinaryBenchRow(
            seed, cv.best.params["alpha"], test_err(0.5), test_err(cv.best.params["alpha"]),
            test_err(alphas["immax"]), test_err(alphas["ldam"]),
        ))
    cols = ["error_svm", "error_cv", "error_immax_center", "error_ldam"]
    summary = {c: float(np.mean([getattr(r, c) for r in rows])) for c in cols}
    summary.update({c + "_std": float(np.std([getattr(r, c) for r in rows])) for c in cols})
    summary["cv_not_worse_than_svm"] = bool(summary["error_cv"] <= summary["error_svm"])
    return {"rows": rows, "summary": summary}


MULTI_LOSSES: dict[str, dict] = {
    "ce": {},
    "rw": {},
    "bs": {},
    "la": {"tau": 1.0},
    "cb": {"gamma": 0.999},
    "focal": {"gamma": 1.0},
    "ldam": {"C": 0.5},
    "equal": {"p": 0.9, "eq_lambda": 0.176e-3},
    "immax": {},
}


def bench_multi(num_classes: int = 4, ratio: float = 10.0, max_class_size: int = 500,
                seeds=range(3), lam: float = 1e-3, epochs: int = 300, rho_scale: float = 1.0,
                separation: float = 4.0) -> dict:
    """Linear multi-class scorers trained with each loss at fixed hyperparameters.

    IMMAX uses rho_k proportional to m_k^(1/3), scaled so sum(rho) = rho_scale * c.
    """
    profile = ImbalanceProfile("long-tailed", ratio, num_classes, max_class_size)
    gens = default_generators(num_classes, 2, separation)
    rows = []
    for seed in seeds:
        tr, te = generate_split(profile, gens, seed, max_class_size * 10)
        for name, params in MULTI_LOSSES.items():
            params = dict(params)
            if name == "immax":
                params["rho"] = list(optimal_rho_center(tr.counts) * rho_scale * num_classes)
            cfg = TrainConfig(LossSpec(LossKind(name), params), lam=lam, epochs=epochs, seed=seed)
            rep = evaluate(train(tr, cfg).scorer, te)
            rows.append({"seed": seed, "loss": name, "test_error": rep.zero_one_error,
                         "per_class_errors": rep.per_class_errors})
    summary = {}
    for name in MULTI_LOSSES:
        errs = [r["test_error"] for r in rows if r["loss"] == name]
        summary[name] = {"mean": float(np.mean(errs)), "std": float(np.std(errs))}
    return {"rows": rows, "summary": summary, "counts": profile.counts()}

"""Class-sensitive Rademacher complexity: estimates and closed-form bounds.

Estimation covers the l2-ball linear class only, where the inner supremum
is Lambda times a Euclidean norm. Sign vectors for Monte-Carlo trial t are
drawn from a generator seeded with (seed, t), so trials can be evaluated
in any order or in parallel with identical results.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .margins import renyi_d3, rho_heuristic

MAX_EXACT_SIGNS = 20
_CHUNK = 1 << 14


class EnumerationTooLarge(ValueError):
    pass


class Method(str, enum.Enum):
    EXACT = "exact"
    MONTE_CARLO = "monte-carlo"


@dataclass(frozen=True)
class ComplexityEstimate:
    value: float
    std_error: float
    trials: int
    method: Method

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "trials": self.trials,
                "method": self.method.value}


def _scaled_points(dataset: Dataset, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (dataset.num_classes,) or np.any(rho <= 0):
        raise ValueError(f"need {dataset.num_classes} positive margins")
    return dataset.X / rho[dataset.y][:, None]


def _all_signs(n: int):
    """Yield blocks of the 2^n sign vectors, each of shape (k, n)."""
    total = 1 << n
    bits = np.arange(n)
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total))[:, None]
        yield np.where((codes >> bits) & 1, 1.0, -1.0)


def _estimate(norm_of_signs, n_signs: int, scale: float, trials: int, exact: bool | None,
              seed: int) -> ComplexityEstimate:
    if exact is None:
        exact = n_signs <= MAX_EXACT_SIGNS
    if exact:
        if n_signs > MAX_EXACT_SIGNS:
            raise EnumerationTooLarge(
                f"exact enumeration needs at most {MAX_EXACT_SIGNS} sign variables, got {n_signs}"
            )
        total = sum(float(norm_of_signs(block).sum()) for block in _all_signs(n_signs))
        return ComplexityEstimate(scale * total / (1 << n_signs), 0.0, 1 << n_signs, Method.EXACT)
    if trials < 2:
        raise ValueError("Monte-Carlo estimation needs at least 2 trials")
    signs = np.stack([
        np.random.default_rng((seed, t)).choice((-1.0, 1.0), size=n_signs) for t in range(trials)
    ])
    vals = scale * norm_of_signs(signs)
    return ComplexityEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(trials)),
                              trials, Method.MONTE_CARLO)


def empirical_binary_complexity(
    dataset: Dataset, rho, Lambda: float = 1.0, trials: int = 1000,
    exact: bool | None = None, seed: int = 0,
) -> ComplexityEstimate:
    """(Lambda/m) E_sigma || sum_i sigma_i x_i / rho(i) ||, rho = (rho+, rho-).

    ``exact=None`` enumerates when m <= 20 and samples otherwise.
    """
    if not dataset.is_binary:
        raise ValueError("binary complexity needs a two-class dataset")
    if Lambda <= 0:
        raise ValueError("Lambda must be positive")
    Z = _scaled_points(dataset, rho)
    m = len(dataset)
    return _estimate(lambda S: np.linalg.norm(S @ Z, axis=1), m, Lambda / m, trials, exact, seed)


def empirical_multi_complexity(
    dataset: Dataset, rho, Lambda: float = 1.0, trials: int = 1000,
    exact: bool | None = None, seed: int = 0,
) -> ComplexityEstimate:
    """Multi-class version with independent signs eps_iy and features e_y (x) x."""
    if Lambda <= 0:
        raise ValueError("Lambda must be positive")
    Z = _scaled_points(dataset, rho)
    m, c = len(dataset), dataset.num_classes

    def norms(S):
        E = S.reshape(S.shape[0], m, c)
        # row y of the stacked vector is sum_i eps_iy z_i
        stacked = np.einsum("tic,id->tcd", E, Z)
        return np.sqrt(np.sum(stacked ** 2, axis=(1, 2)))

    return _estimate(norms, m * c, Lambda / m, trials, exact, seed)


# ---------------------------------------------------------------------------
# closed-form bounds


@dataclass(frozen=True)
class LinearBinaryBound:
    tight: float
    loose: float


def bound_linear_binary(counts, radii, rho, Lambda: float = 1.0) -> LinearBinaryBound:
    """(Lambda/m) sqrt(m+ r+^2/rho+^2 + m- r-^2/rho-^2) and its r = max radius form."""
    m_p, m_n = (float(v) for v in counts)
    r_p, r_n = (float(v) for v in radii)
    rho_p, rho_n = (float(v) for v in rho)
    if min(rho_p, rho_n) <= 0 or Lambda <= 0:
        raise ValueError("margins and Lambda must be positive")
    m = m_p + m_n
    if m <= 0:
        raise ValueError("need at least one example")
    tight = Lambda / m * math.sqrt(m_p * r_p ** 2 / rho_p ** 2 + m_n * r_n ** 2 / rho_n ** 2)
    r = max(r_p if m_p else 0.0, r_n if m_n else 0.0)
    loose = Lambda * r / m * math.sqrt(m_p / rho_p ** 2 + m_n / rho_n ** 2)
    return LinearBinaryBound(tight, loose)


def _kernel_inputs(counts, radii, rho):
    m = np.asarray(counts, dtype=np.float64)
    r = np.asarray(radii, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    if not (m.shape == r.shape == rho.shape) or m.ndim != 1:
        raise ValueError("counts, radii and margins must have equal length")
    if np.any(rho <= 0) or np.any(m < 0) or np.any(r < 0) or m.sum() <= 0:
        raise ValueError("need positive margins and non-negative counts and radii")
    return m, r, rho


def bound_kernel_l1(counts, radii_inf, rho, Lambda1: float, d: int, c: int) -> float:
    """(Lambda1 sqrt(2c)/m) sqrt(sum_k m_k r_k,inf^2/rho_k^2 log(2d))."""
    if d < 1:
        raise ValueError("d must be >= 1")
    m, r, rho = _kernel_inputs(counts, radii_inf, rho)
    return float(Lambda1 * math.sqrt(2 * c) / m.sum()
                 * math.sqrt(np.sum(m * r ** 2 / rho ** 2) * math.log(2 * d)))


def bound_kernel_l2(counts, radii, rho, Lambda2: float, c: int) -> float:
    """(Lambda2 sqrt(c)/m) sqrt(sum_k m_k r_k^2/rho_k^2)."""
    m, r, rho = _kernel_inputs(counts, radii, rho)
    return float(Lambda2 * math.sqrt(c) / m.sum() * math.sqrt(np.sum(m * r ** 2 / rho ** 2)))


def bound_kernel_l2_divergence_form(counts, radii, rho, Lambda2: float, c: int) -> float:
    """Same bound rewritten as (Lambda2 sqrt(c) r_bar/(m rho)) exp(D3(r || rho/rho))."""
    m, r, rho = _kernel_inputs(counts, radii, rho)
    heur = rho_heuristic(m, r)
    total = float(rho.sum())
    return float(Lambda2 * math.sqrt(c) * heur.r_bar / (m.sum() * total)
                 * math.exp(renyi_d3(heur.direction, rho / total)))


def enumerate_bound_gap(dataset: Dataset, rho, Lambda: float = 1.0) -> dict:
    """Exact empirical complexity next to the closed-form bound on the same sample."""
    est = empirical_binary_complexity(dataset, rho, Lambda, exact=True)
    b = bound_linear_binary(dataset.counts, dataset.radii, rho, Lambda)
    return {"exact": est.value, "tight_bound": b.tight, "loose_bound": b.loose}


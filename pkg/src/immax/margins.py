"""Optimal confidence margins, the rho-heuristic and margin-bound calculators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .models import BinaryLinear


class NotSeparableError(ValueError):
    pass


class BoundDomainError(ValueError):
    pass


def _positive(name: str, *values: float) -> None:
    for v in values:
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class SeparableMargins:
    rho_geom: float
    rho_plus: float
    rho_minus: float
    m_plus: float
    m_minus: float
    r_plus: float = 1.0
    r_minus: float = 1.0

    @property
    def alpha(self) -> float:
        return self.rho_plus / (self.rho_plus + self.rho_minus)

    def as_tuple(self) -> tuple[float, float]:
        return self.rho_plus, self.rho_minus


def optimal_separable_margins(
    m_plus: float, m_minus: float, r_plus: float = 1.0, r_minus: float = 1.0, rho_geom: float = 1.0
) -> SeparableMargins:
    """Minimizer of m+ r+^2/rho+^2 + m- r-^2/rho-^2 subject to rho+ + rho- = 2 rho_geom."""
    _positive("counts, radii and rho_geom", m_plus, m_minus, r_plus, r_minus, rho_geom)
    a_plus = m_plus ** (1 / 3) * r_plus ** (2 / 3)
    a_minus = m_minus ** (1 / 3) * r_minus ** (2 / 3)
    total = a_plus + a_minus
    return SeparableMargins(
        rho_geom,
        2 * a_plus / total * rho_geom,
        2 * a_minus / total * rho_geom,
        m_plus, m_minus, r_plus, r_minus,
    )


def ldam_margins(m_plus: float, m_minus: float, rho_geom: float = 1.0) -> tuple[float, float]:
    """Margins proportional to m^(-1/4), rescaled so that they sum to 2 rho_geom."""
    _positive("counts and rho_geom", m_plus, m_minus, rho_geom)
    q_plus, q_minus = m_plus ** 0.25, m_minus ** 0.25
    return 2 * q_minus / (q_plus + q_minus) * rho_geom, 2 * q_plus / (q_plus + q_minus) * rho_geom


def ordering_verdict(ours: tuple[float, float], other: tuple[float, float]) -> str:
    a = np.sign(ours[0] - ours[1])
    b = np.sign(other[0] - other[1])
    if a == 0 and b == 0:
        return "equal margins"
    if a == -b:
        return "opposite ordering"
    if a == b:
        return "same ordering"
    return "partial tie"


def compare_margins(m_plus: float, m_minus: float, r_plus: float = 1.0, r_minus: float = 1.0,
                    rho_geom: float = 1.0) -> dict:
    ours = optimal_separable_margins(m_plus, m_minus, r_plus, r_minus, rho_geom)
    ldam = ldam_margins(m_plus, m_minus, rho_geom)
    return {
        "inputs": {"m_plus": m_plus, "m_minus": m_minus, "r_plus": r_plus,
                   "r_minus": r_minus, "rho_geom": rho_geom},
        "ours": {"rho_plus": ours.rho_plus, "rho_minus": ours.rho_minus, "alpha": ours.alpha},
        "ldam": {"rho_plus": ldam[0], "rho_minus": ldam[1],
                 "alpha": ldam[0] / (ldam[0] + ldam[1])},
        "ordering_verdict": ordering_verdict(ours.as_tuple(), ldam),
    }


def geometric_margin(scorer: BinaryLinear, dataset: Dataset) -> float:
    """min_i y_i (w . x_i + b) / ||w||; requires every point strictly on its side."""
    norm = float(np.linalg.norm(scorer.w))
    if norm == 0:
        raise ValueError("geometric margin needs a nonzero weight vector")
    fm = dataset.signed_labels() * scorer.forward(dataset.X)
    if np.any(fm <= 0):
        raise NotSeparableError("not separable")
    return float(fm.min() / norm)


@dataclass(frozen=True)
class RhoHeuristic:
    direction: np.ndarray  # probability vector, the suggested rho / sum(rho)
    r_bar: float

    def margins(self, total: float) -> np.ndarray:
        return total * self.direction


def rho_heuristic(counts, radii) -> RhoHeuristic:
    m = np.asarray(counts, dtype=np.float64)
    r = np.asarray(radii, dtype=np.float64)
    if m.shape != r.shape or m.ndim != 1:
        raise ValueError("counts and radii must be vectors of equal length")
    if np.any(m <= 0) or np.any(r <= 0):
        raise ValueError("counts and radii must be positive")
    a = np.cbrt(m) * r ** (2 / 3)
    return RhoHeuristic(a / a.sum(), float(a.sum() ** 1.5))


def renyi_d3(p, q) -> float:
    """Order-3 Renyi divergence with 0/0 = 0 and x/0 = inf (returned as math.inf)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("p and q must have the same shape")
    for name, v in (("p", p), ("q", q)):
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} is not a probability vector")
    support = p > 0
    if np.any(q[support] == 0):
        return math.inf
    total = float(np.sum(p[support] ** 3 / q[support] ** 2))
    return max(0.0, 0.5 * math.log(total))


def lemma_d3_identity_check(counts, radii, rho) -> dict:
    """Both sides of sum_k m_k r_k^2/rho_k^2 = (r_bar/rho)^2 exp(2 D3(r || rho/rho))."""
    m = np.asarray(counts, dtype=np.float64)
    r = np.asarray(radii, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho <= 0):
        raise ValueError("margins must be positive")
    heur = rho_heuristic(m, r)
    total = float(rho.sum())
    lhs = float(np.sum(m * r ** 2 / rho ** 2))
    rhs = heur.r_bar ** 2 / total ** 2 * math.exp(2 * renyi_d3(heur.direction, rho / total))
    return {"lhs": lhs, "rhs": rhs, "abs_diff": abs(lhs - rhs)}


# ---------------------------------------------------------------------------
# margin bounds


def _check_delta(delta: float) -> None:
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")


def _loglog_term(r: float, rho: float, m: int) -> float:
    if rho > r:
        raise BoundDomainError(f"uniform bound needs rho <= r, got rho={rho} > r={r}")
    return math.sqrt(math.log(math.log2(2 * r / rho)) / m)


def margin_bound_binary(
    empirical_margin_loss: float,
    rad_term: float,
    m: int,
    delta: float,
    uniform: bool = False,
    r: tuple[float, float] | None = None,
    rho: tuple[float, float] | None = None,
    empirical: bool = False,
) -> float:
    """Zero-one risk bound from the (rho+, rho-)-margin loss and complexity.

    ``empirical`` selects the form stated with the empirical complexity,
    which pays a larger confidence term.
    """
    _check_delta(delta)
    if m < 1:
        raise ValueError("m must be positive")
    if not uniform:
        conf = 3 * math.sqrt(math.log(2 / delta) / (2 * m)) if empirical else \
            math.sqrt(math.log(1 / delta) / (2 * m))
        return empirical_margin_loss + 2 * rad_term + conf
    if r is None or rho is None:
        raise ValueError("uniform bound needs r = (r+, r-) and rho = (rho+, rho-)")
    loglog = _loglog_term(r[0], rho[0], m) + _loglog_term(r[1], rho[1], m)
    conf = 3 * math.sqrt(math.log(8 / delta) / (2 * m)) if empirical else \
        math.sqrt(math.log(4 / delta) / (2 * m))
    return empirical_margin_loss + 4 * rad_term + loglog + conf


def margin_bound_multi(
    empirical_margin_loss: float,
    rad_term: float,
    c: int,
    m: int,
    delta: float,
    uniform: bool = False,
    r=None,
    rho=None,
    empirical: bool = False,
) -> float:
    _check_delta(delta)
    if c < 2 or m < 1:
        raise ValueError("need c >= 2 and m >= 1")
    if not uniform:
        conf = 3 * math.sqrt(math.log(2 / delta) / (2 * m)) if empirical else \
            math.sqrt(math.log(1 / delta) / (2 * m))
        return empirical_margin_loss + 4 * math.sqrt(2 * c) * rad_term + conf
    if r is None or rho is None or len(r) != c or len(rho) != c:
        raise ValueError("uniform bound needs c radii and c margins")
    loglog = sum(_loglog_term(rk, pk, m) for rk, pk in zip(r, rho))
    log_mass = (c + 1) * math.log(2) if empirical else c * math.log(2)
    conf = 3 * math.sqrt((log_mass - math.log(delta)) / (2 * m)) if empirical else \
        math.sqrt((log_mass - math.log(delta)) / (2 * m))
    return empirical_margin_loss + 4 * c * math.sqrt(2 * c) * rad_term + loglog + conf

"""Drift conditions for two-action queueing models.

The checks answer three questions about a model:

1. Is always-green stable?  There must be ``v`` in the closed positive
   quadrant (not zero) that every green drift (interior and both edges)
   points against.
2. Do the two interior drifts share a direction ``l``?  ``rho`` is the
   smaller of the two projections on ``l``.
3. How much room is there?  ``(alpha0, alpha1)`` is the range of mixing
   weights ``delta`` for which ``delta*d_r + (1 - delta)*d_g`` has no
   negative coordinate, and the window of first-visit red probabilities
   that forces transience is ``(alpha0/rho, (alpha1 + rho - 1)/rho)``.

All verdicts use strict inequalities with no tolerance; the reports carry
the slack so callers can judge how close a verdict is.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from llp.errors import DomainError
from llp.models import (
    Action,
    LoadBalancing,
    ModelSpec,
    ServerAllocation,
    Vec2,
    drift,
    free_jump_law,
    region_drifts,
)

GRID_POINTS = 4096
ANGLE_TOL = 1e-10
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class Strategy(Enum):
    FIXED_AXIS1 = "fixed_axis1"
    FIXED_DIAGONAL = "fixed_diagonal"
    MAXIMIZE = "maximize"
    CUSTOM = "custom"


@dataclass(frozen=True)
class DirectionResult:
    l: Vec2
    rho: float


@dataclass(frozen=True)
class QuadrantInterval:
    alpha0: float
    alpha1: float


@dataclass(frozen=True)
class QWindow:
    q0: float
    q1: float

    def __contains__(self, q: float) -> bool:
        return self.q0 < q < self.q1


@dataclass(frozen=True)
class Inequality:
    label: str
    lhs: float
    rhs: float
    holds: bool

    @property
    def margin(self) -> float:
        """``rhs - lhs``; positive exactly when ``lhs < rhs`` holds."""
        return self.rhs - self.lhs


def _less(label: str, lhs: float, rhs: float) -> Inequality:
    return Inequality(label, float(lhs), float(rhs), bool(lhs < rhs))


@dataclass
class ConditionReport:
    drifts: dict
    green_vector: Vec2 | None
    direction: DirectionResult | None
    quadrant: QuadrantInterval | None
    cond_parameter2: bool
    cond_parameter4: bool
    cond_parameter5: bool
    q_window: QWindow | None
    inequalities: list[Inequality] = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return self.cond_parameter2 and self.cond_parameter4 and self.cond_parameter5

    def to_dict(self) -> dict:
        return {
            "drifts": {k: list(v) for k, v in self.drifts.items()},
            "green_vector": None if self.green_vector is None else list(self.green_vector),
            "direction": None
            if self.direction is None
            else {"l": list(self.direction.l), "rho": self.direction.rho},
            "quadrant": None if self.quadrant is None else asdict(self.quadrant),
            "cond_parameter2": self.cond_parameter2,
            "cond_parameter4": self.cond_parameter4,
            "cond_parameter5": self.cond_parameter5,
            "all_hold": self.all_hold,
            "q_window": None if self.q_window is None else asdict(self.q_window),
            "inequalities": [
                {"label": i.label, "lhs": i.lhs, "rhs": i.rhs, "holds": i.holds, "margin": i.margin}
                for i in self.inequalities
            ],
        }


def green_stability_vector(d_g, d_g_prime, d_g_dprime) -> Vec2 | None:
    """Find ``v >= 0, v != 0`` with ``<w, v> < 0`` for the three green drifts.

    Writing ``v = (t, 1)`` each half-plane becomes a condition on the slope
    ``t = v1/v2 in [0, inf)``; the three slope sets are intersected and the
    midpoint (or ``lo + 1`` for an unbounded set) is returned.  ``v = (1, 0)``
    is covered by the unbounded case.
    """
    lo, lo_closed, hi = 0.0, True, math.inf
    for w1, w2 in (d_g, d_g_prime, d_g_dprime):
        if w1 > 0:
            bound = -w2 / w1
            if bound < hi:
                hi = bound
        elif w1 < 0:
            bound = -w2 / w1
            if bound > lo or (bound == lo and lo_closed):
                lo, lo_closed = bound, False
        elif w2 >= 0:
            return None
    # upper bounds are always strict
    if lo >= hi:
        return None
    if math.isinf(hi):
        t = max(lo, 0.0) + 1.0
    else:
        t = 0.5 * (lo + hi)
    # extreme slopes can lose the strict inequality to rounding
    if any(w1 * t + w2 >= 0 for w1, w2 in (d_g, d_g_prime, d_g_dprime)):
        return None
    return Vec2(t, 1.0)


def _projections(d_r, d_g, l) -> float:
    return min(d_r[0] * l[0] + d_r[1] * l[1], d_g[0] * l[0] + d_g[1] * l[1])


def _maximize_direction(d_r, d_g) -> tuple[float, float]:
    def f(theta):
        return _projections(d_r, d_g, (math.cos(theta), math.sin(theta)))

    grid = np.linspace(0.0, 2 * math.pi, GRID_POINTS, endpoint=False)
    values = np.minimum(
        d_r[0] * np.cos(grid) + d_r[1] * np.sin(grid),
        d_g[0] * np.cos(grid) + d_g[1] * np.sin(grid),
    )
    k = int(np.argmax(values))
    step = 2 * math.pi / GRID_POINTS
    a, b = grid[k] - step, grid[k] + step
    # golden-section search; f is unimodal on one grid cell either side of the peak
    c, d = b - _INV_PHI * (b - a), a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > ANGLE_TOL:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    theta = 0.5 * (a + b)
    best = max((f(theta), theta), (float(values[k]), float(grid[k])))
    return best[1], best[0]


def common_direction(d_r, d_g, strategy: Strategy | str = Strategy.FIXED_AXIS1, l=None) -> DirectionResult | None:
    """Unit vector with positive projection on both drifts, or ``None``."""
    if d_r[0] == 0 and d_r[1] == 0 or d_g[0] == 0 and d_g[1] == 0:
        raise DomainError("drift vectors must be nonzero")
    strategy = Strategy(strategy)
    if strategy is Strategy.FIXED_AXIS1:
        unit = Vec2(1.0, 0.0)
    elif strategy is Strategy.FIXED_DIAGONAL:
        unit = Vec2(1 / math.sqrt(2), 1 / math.sqrt(2))
    elif strategy is Strategy.CUSTOM:
        if l is None:
            raise DomainError("custom strategy needs a direction l")
        norm = math.hypot(l[0], l[1])
        if norm == 0:
            raise DomainError("direction l must be nonzero")
        unit = Vec2(l[0] / norm, l[1] / norm)
    else:
        theta, _ = _maximize_direction(d_r, d_g)
        unit = Vec2(math.cos(theta), math.sin(theta))
    rho = _projections(d_r, d_g, unit)
    if not rho > 0:
        return None
    return DirectionResult(unit, rho)


def quadrant_interval(d_r, d_g) -> QuadrantInterval | None:
    """Range of ``delta`` in ``(0, 1]`` keeping ``delta*d_r + (1-delta)*d_g >= 0``."""
    lo, hi = 0.0, 1.0
    for a, b in zip(d_r, d_g):
        slope = a - b
        if slope > 0:
            lo = max(lo, -b / slope)
        elif slope < 0:
            hi = min(hi, b / -slope)
        elif b < 0:
            return None
    if lo >= hi:
        return None
    return QuadrantInterval(lo, hi)


def q_interval(quadrant: QuadrantInterval, rho: float) -> QWindow | None:
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    q0 = max(quadrant.alpha0 / rho, 0.0)
    q1 = min((quadrant.alpha1 + rho - 1.0) / rho, 1.0)
    if q0 >= q1 or q0 >= 1.0:
        return None
    return QWindow(q0, q1)


def alpha_bounds(q: float, rho: float) -> tuple[float, float]:
    """Bounds ``(q*rho, 1 - (1-q)*rho)`` on the long-run red frequency."""
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q}")
    if not 0.0 < rho <= 1.0:
        raise DomainError(f"rho must lie in (0, 1], got {rho}")
    return q * rho, 1.0 - (1.0 - q) * rho


def default_strategy(model: ModelSpec) -> Strategy:
    if isinstance(model, LoadBalancing):
        return Strategy.FIXED_AXIS1
    if isinstance(model, ServerAllocation):
        return Strategy.FIXED_DIAGONAL
    return Strategy.MAXIMIZE


def model1_check(model: ModelSpec, strategy: Strategy | str | None = None, l=None) -> ConditionReport:
    strategy = default_strategy(model) if strategy is None else Strategy(strategy)
    d_r = drift(free_jump_law(model, Action.RED))
    g_int, g_x, g_y = region_drifts(model, Action.GREEN)
    drifts = {"d_r": d_r, "d_g": g_int, "d_g_x_edge": g_x, "d_g_y_edge": g_y}

    v = green_stability_vector(g_int, g_x, g_y)
    inequalities = []
    if v is not None:
        for name, w in (("d_g", g_int), ("d_g_x_edge", g_x), ("d_g_y_edge", g_y)):
            inequalities.append(_less(f"<{name}, v> < 0", w.dot(v), 0.0))

    direction = common_direction(d_r, g_int, strategy, l)
    if direction is not None:
        inequalities.append(_less("rho > 0", 0.0, direction.rho))

    quadrant = quadrant_interval(d_r, g_int)
    cond5 = False
    window = None
    if direction is not None and quadrant is not None:
        ineq = _less("1 - alpha1 < rho - alpha0", 1.0 - quadrant.alpha1, direction.rho - quadrant.alpha0)
        inequalities.append(ineq)
        cond5 = ineq.holds
    report = ConditionReport(
        drifts=drifts,
        green_vector=v,
        direction=direction,
        quadrant=quadrant,
        cond_parameter2=v is not None,
        cond_parameter4=direction is not None,
        cond_parameter5=cond5,
        q_window=None,
        inequalities=inequalities,
    )
    if report.all_hold:
        window = q_interval(quadrant, direction.rho)
        report.q_window = window
    return report


@dataclass
class LemmaCheck:
    inequalities: list[Inequality]
    extra: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return all(i.holds for i in self.inequalities)

    def __getitem__(self, label: str) -> Inequality:
        for i in self.inequalities:
            if i.label == label:
                return i
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "all_pass": self.all_pass,
            "inequalities": [
                {"label": i.label, "lhs": i.lhs, "rhs": i.rhs, "holds": i.holds, "margin": i.margin}
                for i in self.inequalities
            ],
            **self.extra,
        }


def lemma_lb_check(params: LoadBalancing) -> LemmaCheck:
    """Sufficient parameter inequalities for the load-balancing example."""
    lam, mu1, mu2, mt, pr, pg = params.lam, params.mu1, params.mu2, params.mu_tilde, params.p_r, params.p_g
    gap = mu2 - lam * (1 - pg)
    checks = [
        _less("mu1 < lambda*p_r", mu1, lam * pr),
        _less("mu2 < lambda*(1-p_r)", mu2, lam * (1 - pr)),
        _less("mu1 < lambda*p_g", mu1, lam * pg),
        _less("mu2 > lambda*(1-p_g)", lam * (1 - pg), mu2),
    ]
    if gap != 0:
        threshold = lam * ((mu1 + mu2) * pg - mu1) / gap
        checks.append(_less("mu_tilde > threshold", threshold, mt))
    else:
        checks.append(Inequality("mu_tilde > threshold", math.inf, mt, False))
    bound = (lam * pr - mu1) * (pg - pr) / (lam + mu1 + mu2) + lam * (1 - pg)
    checks.append(_less("mu2 < bound", mu2, bound))
    return LemmaCheck(checks)


def lemma_sa_check(params: ServerAllocation) -> LemmaCheck:
    """Sufficient inequalities for server allocation, reported beside the direct check.

    The sufficient set does not by itself imply ``1 - alpha1 < rho - alpha0``
    (e.g. ``lam=1, mu=1.2``), so the direct verdict is co-reported and is
    the one downstream code should trust.
    """
    lam, mu, mt = params.lam, params.mu, params.mu_tilde
    checks = [
        _less("lambda < mu", lam, mu),
        _less("mu < 2*lambda", mu, 2 * lam),
        _less("2*lambda < mu_tilde", 2 * lam, mt),
    ]
    if mu != lam:
        checks.append(_less("mu_tilde > mu*lambda/(mu-lambda)", mu * lam / (mu - lam), mt))
    else:
        checks.append(Inequality("mu_tilde > mu*lambda/(mu-lambda)", math.inf, mt, False))
    rho = (2 * lam - mu) / (2 * lam + mu) / math.sqrt(2)
    checks.append(_less("(mu-lambda)/mu < rho", (mu - lam) / mu, rho))
    direct = model1_check(params, Strategy.FIXED_DIAGONAL)
    return LemmaCheck(checks, {"direct_parameter5": direct.cond_parameter5})

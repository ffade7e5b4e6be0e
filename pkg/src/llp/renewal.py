"""Finite-horizon estimators built on ladder (record) times.

The regenerative structure of a process with positive drift along ``l``
is carried by the record times: indices ``n`` at which the projection
``S_n = <X_n, l>`` beats every earlier value and is never reached again
afterwards.  On a simulated path the "never again" clause can only be
checked up to the horizon, so certification stops ``margin`` steps before
the end; late failures are exponentially rare, which makes the margin a
direct handle on the false-certification probability.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from llp.errors import DomainError, InsufficientDataError
from llp.models import Action, Vec2
from llp.process import Trajectory

MIN_CYCLES_FOR_CI = 30
MIN_TAIL_COUNT = 5
Z_95 = 1.959963984540054


@dataclass(frozen=True)
class ProjectedPath:
    values: np.ndarray
    l: Vec2

    @property
    def horizon(self) -> int:
        return len(self.values) - 1


@dataclass(frozen=True)
class RecordTimes:
    certified: np.ndarray
    censor_bound: int
    vacuous: bool = False  # the last index was certified with an empty future

    def __len__(self) -> int:
        return len(self.certified)


@dataclass(frozen=True)
class ConeSpec:
    l: Vec2
    restrict_quadrant: bool = True

    def __post_init__(self):
        _check_unit(self.l)


@dataclass(frozen=True)
class TailFit:
    slope: float
    r_squared: float
    n_points: int


@dataclass(frozen=True)
class CycleStats:
    gaps: np.ndarray
    scopes: np.ndarray
    displacements: np.ndarray  # shape (K, 2)
    tail_fit: TailFit | None

    def to_dict(self) -> dict:
        return {
            "gaps": self.gaps.tolist(),
            "scopes": self.scopes.tolist(),
            "displacements": self.displacements.tolist(),
            "tail_fit": None if self.tail_fit is None else vars(self.tail_fit),
        }


@dataclass(frozen=True)
class DriftEstimate:
    point: Vec2
    per_cycle_ci: Vec2 | None
    n_used: int
    cycle_estimate: Vec2 | None = None

    def to_dict(self) -> dict:
        return {
            "point": list(self.point),
            "per_cycle_ci": None if self.per_cycle_ci is None else list(self.per_cycle_ci),
            "cycle_estimate": None if self.cycle_estimate is None else list(self.cycle_estimate),
            "n_used": self.n_used,
        }


def _check_unit(l) -> None:
    if abs(math.hypot(l[0], l[1]) - 1.0) > 1e-12:
        raise DomainError(f"direction {tuple(l)} is not a unit vector")


def project(traj: Trajectory, l) -> ProjectedPath:
    _check_unit(l)
    states = traj.states
    return ProjectedPath(states[:, 0] * float(l[0]) + states[:, 1] * float(l[1]), Vec2(float(l[0]), float(l[1])))


def _prefix_max_before(values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values, dtype=float)
    out[0] = -np.inf
    if len(values) > 1:
        out[1:] = np.maximum.accumulate(values[:-1])
    return out


def _suffix_min_after(values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values, dtype=float)
    out[-1] = np.inf
    if len(values) > 1:
        out[:-1] = np.minimum.accumulate(values[::-1])[::-1][1:]
    return out


def record_times(path: ProjectedPath, margin: int) -> RecordTimes:
    """Indices that are strict running records and never undercut before the horizon."""
    if margin < 0:
        raise DomainError("margin must be nonnegative")
    s = np.asarray(path.values, dtype=float)
    horizon = len(s) - 1
    bound = horizon - margin
    idx = np.arange(len(s))
    ok = (s > _prefix_max_before(s)) & (_suffix_min_after(s) > s) & (idx <= bound)
    certified = idx[ok]
    return RecordTimes(certified, bound, bool(len(certified)) and certified[-1] == horizon)


def replay_record(path: ProjectedPath, n: int) -> bool:
    """Re-check both record clauses at ``n`` by direct loops over the path."""
    s = path.values
    return all(s[n] > s[k] for k in range(n)) and all(s[n + k] - s[n] > 0 for k in range(1, len(s) - n))


def success_time(traj: Trajectory, cone: ConeSpec, margin: int) -> int | None:
    """First index after which every increment stays in the cone.

    The index must also have both queues nonempty and a strictly record
    total queue length.  The cone is ``{z : <z, l> > 0}``, intersected with
    the closed positive quadrant when ``restrict_quadrant`` is set.
    """
    if margin < 0:
        raise DomainError("margin must be nonnegative")
    x = traj.states
    horizon = len(x) - 1
    total = (x[:, 0] + x[:, 1]).astype(float)
    proj = x[:, 0] * float(cone.l[0]) + x[:, 1] * float(cone.l[1])
    ok = (x[:, 0] > 0) & (x[:, 1] > 0) & (total > _prefix_max_before(total))
    ok &= _suffix_min_after(proj) > proj
    if cone.restrict_quadrant:
        ok &= _suffix_min_after(x[:, 0].astype(float)) >= x[:, 0]
        ok &= _suffix_min_after(x[:, 1].astype(float)) >= x[:, 1]
    ok &= np.arange(horizon + 1) <= horizon - margin
    hits = np.flatnonzero(ok)
    return int(hits[0]) if len(hits) else None


def estimate_alpha(traj: Trajectory) -> tuple[float, float]:
    """Empirical red frequency and its binomial standard error."""
    n = traj.horizon
    if n == 0:
        raise DomainError("empty trajectory")
    alpha = float(np.count_nonzero(traj.actions == int(Action.RED))) / n
    return alpha, math.sqrt(alpha * (1 - alpha) / n)


def estimate_drift(traj: Trajectory, records: RecordTimes | None = None) -> DriftEstimate:
    """Point estimate ``(X_H - X_0)/H`` plus a regenerative CI when cycles allow.

    With at least 30 complete cycles the cycle pairs
    ``(X_{T_{k+1}} - X_{T_k}, T_{k+1} - T_k)`` are treated as i.i.d. and
    the ratio estimator's 95% half-width comes from the delta method.
    """
    n = traj.horizon
    if n == 0:
        raise DomainError("empty trajectory")
    disp = traj.states[-1] - traj.states[0]
    point = Vec2(float(disp[0]) / n, float(disp[1]) / n)
    if records is None or len(records) - 1 < MIN_CYCLES_FOR_CI:
        return DriftEstimate(point, None, n)
    t = records.certified
    dx = np.diff(traj.states[t], axis=0).astype(float)
    dt = np.diff(t).astype(float)
    k = len(dt)
    ratio = dx.sum(axis=0) / dt.sum()
    resid = dx - np.outer(dt, ratio)
    se = resid.std(axis=0, ddof=1) / (dt.mean() * math.sqrt(k))
    return DriftEstimate(point, Vec2(*map(float, Z_95 * se)), k, Vec2(*map(float, ratio)))


def survival_tail_fit(gaps: np.ndarray) -> TailFit | None:
    """Least-squares line through ``log P(G > g)`` over levels with >= 5 exceedances."""
    gaps = np.asarray(gaps)
    if len(gaps) == 0:
        return None
    levels = np.unique(gaps)
    exceed = np.array([np.count_nonzero(gaps > g) for g in levels])
    keep = exceed >= MIN_TAIL_COUNT
    if np.count_nonzero(keep) < 3:
        return None
    x = levels[keep].astype(float)
    y = np.log(exceed[keep] / len(gaps))
    fit = stats.linregress(x, y)
    return TailFit(float(fit.slope), float(fit.rvalue**2), int(len(x)))


def cycle_stats(traj: Trajectory, records: RecordTimes) -> CycleStats:
    t = np.asarray(records.certified)
    if len(t) < 2:
        raise InsufficientDataError("need at least two certified record times")
    steps = np.diff(traj.states, axis=0).astype(float)
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(steps[:, 0], steps[:, 1]))])
    gaps = np.diff(t)
    return CycleStats(
        gaps=gaps,
        scopes=np.diff(cum[t]),
        displacements=np.diff(traj.states[t], axis=0),
        tail_fit=survival_tail_fit(gaps),
    )


def lag1_autocorrelation(x) -> float:
    x = np.asarray(x, dtype=float)
    if len(x) < 3:
        raise InsufficientDataError("need at least three observations")
    c = x - x.mean()
    denom = float(np.dot(c, c))
    if denom == 0.0:
        return 0.0
    return float(np.dot(c[:-1], c[1:]) / denom)


def escaped(states: np.ndarray, radius: int, burn_in: int) -> bool:
    """True when no state after ``burn_in`` has ``x1 + x2 <= radius``."""
    tail = states[burn_in + 1 :]
    return not bool(np.any(tail[:, 0] + tail[:, 1] <= radius))


def transience_probe(trajs, radius: int, burn_in: int) -> tuple[float, float]:
    """Fraction of runs that avoid ``{x1 + x2 <= radius}`` after ``burn_in``.

    Accepts trajectories or bare ``(H+1, 2)`` state arrays.  The fraction
    bounds the escape probability from below; the second value is its
    binomial standard error.
    """
    trajs = list(trajs)
    if not trajs:
        raise DomainError("no trajectories given")
    flags = []
    for tr in trajs:
        states = tr.states if isinstance(tr, Trajectory) else np.asarray(tr)
        if burn_in >= len(states) - 1:
            raise DomainError("burn_in must be smaller than the horizon")
        flags.append(escaped(states, radius, burn_in))
    p = float(np.mean(flags))
    return p, math.sqrt(p * (1 - p) / len(flags))

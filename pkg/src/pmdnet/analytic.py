"""Closed-form solutions on the two-ring product input space.

Input vectors live on the product of two unit circles, each discretised
into M positions, with nodes arranged on a matching ring.  Three candidate
stationary configurations exist: every node follows a single circle
(SINGLE, label "type1"), every node follows both (JOINT, "type2"), or the
nodes split half and half (SPLIT, "type3").  Their objective values have
closed forms in the squared radius of gyration of a circular arc, so the
optimal configuration as a function of (M, n) is exactly computable.

All values here omit a shared additive constant; only differences matter.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

TWO_PI = 2.0 * math.pi


class SolutionType(enum.Enum):
    # labels are the conventional short names used in CSV/CLI output
    SINGLE = "type1"   # every node attached to one subspace
    JOINT = "type2"    # every node attached to both subspaces
    SPLIT = "type3"    # half the nodes on each subspace

    @property
    def label(self) -> str:
        return self.value


ALL_TYPES = (SolutionType.SINGLE, SolutionType.JOINT, SolutionType.SPLIT)


@dataclass(frozen=True)
class AnalyticCase:
    m: float
    n: float
    stype: SolutionType
    value: float

    def __post_init__(self):
        if self.value > 0.0:
            raise ValueError(f"closed-form value must be <= 0, got {self.value}")


class OptimalType(NamedTuple):
    best: SolutionType
    ties: tuple[SolutionType, ...]


def radius_gyration(m: float) -> float:
    """Squared radius of gyration of M points evenly spread on an arc of
    the unit circle: ((M/2pi) sin(2pi/M))^2.  Increasing in M, -> 1."""
    if math.isinf(m):
        return 1.0
    if m < 1.0:
        raise ValueError(f"need M >= 1, got {m}")
    return ((m / TWO_PI) * math.sin(TWO_PI / m)) ** 2


def _split_factor(n: float) -> float:
    # 4n/(n+1), limit 4 as n -> infinity
    if math.isinf(n):
        return 4.0
    return 4.0 * n / (n + 1.0)


def _check_n(n: float) -> None:
    if not (n >= 1.0):
        raise ValueError(f"need n >= 1 (or inf), got {n}")


def solution_value(stype: SolutionType, m: float, n: float) -> float:
    """Objective value (constant omitted) of one candidate configuration."""
    _check_n(n)
    if stype is SolutionType.SINGLE:
        return -2.0 * radius_gyration(m)
    if stype is SolutionType.JOINT:
        return -4.0 * radius_gyration(math.sqrt(m))
    if stype is SolutionType.SPLIT:
        if m < 2.0:
            raise ValueError(f"split configuration needs M >= 2, got {m}")
        return -_split_factor(n) * radius_gyration(m / 2.0)
    raise TypeError(f"unknown solution type {stype!r}")


def make_case(stype: SolutionType, m: float, n: float) -> AnalyticCase:
    return AnalyticCase(m=m, n=n, stype=stype, value=solution_value(stype, m, n))


def optimal_type(m: float, n: float, tie_tol: float = 1e-9) -> OptimalType:
    """Configuration(s) with the lowest value at (M, n).

    `best` has the strictly lowest value (enum order breaks exact float
    ties); `ties` lists every type within tie_tol of the minimum, so exact
    analytic ties (they exist) are reported rather than hidden.
    """
    if m < 2.0:
        raise ValueError(f"need M >= 2, got {m}")
    values = [(solution_value(t, m, n), i, t) for i, t in enumerate(ALL_TYPES)]
    vmin = min(v for v, _, _ in values)
    best = min(values)[2]
    ties = tuple(t for v, _, t in values if v <= vmin + tie_tol)
    return OptimalType(best=best, ties=ties)


def stationary_scale(stype: SolutionType, n: float, attached_subspace: int = 1) -> tuple[float, float]:
    """Per-subspace factors multiplying the conditional input centroid in
    the stationary reference vectors.

    A detached subspace gets exactly 0; a node serving both gets (1, 1); a
    node serving one subspace of a split population amplifies it by
    2n/(n+1) (limit 2).
    """
    _check_n(n)
    if attached_subspace not in (1, 2):
        raise ValueError(f"attached_subspace must be 1 or 2, got {attached_subspace}")
    if stype is SolutionType.JOINT:
        return (1.0, 1.0)
    if stype is SolutionType.SINGLE:
        scale = 1.0
    elif stype is SolutionType.SPLIT:
        scale = 2.0 if math.isinf(n) else 2.0 * n / (n + 1.0)
    else:
        raise TypeError(f"unknown solution type {stype!r}")
    return (scale, 0.0) if attached_subspace == 1 else (0.0, scale)


def attachment_probability(n: int, n1: int) -> float:
    """Probability that n1 of n independent fair subspace choices pick
    subspace 1: C(n, n1) / 2^n.  Documented helper, not used elsewhere."""
    if n < 1 or math.isinf(n):
        raise ValueError(f"need finite n >= 1, got {n}")
    if not (0 <= n1 <= n):
        raise ValueError(f"need 0 <= n1 <= n, got n1={n1}")
    return math.comb(int(n), int(n1)) / 2.0 ** int(n)


@dataclass(frozen=True)
class PhaseBoundary:
    n: float
    m: float           # crossing point, located to 1e-6
    lower: SolutionType  # optimal just below m
    upper: SolutionType  # optimal just above m


@dataclass(frozen=True)
class PhaseDiagram:
    m_values: tuple[float, ...]
    n_values: tuple[float, ...]
    grid: tuple[tuple[OptimalType, ...], ...]   # [n index][m index]
    boundaries: tuple[PhaseBoundary, ...]


def _bisect_crossing(a: SolutionType, b: SolutionType, n: float, lo: float, hi: float, tol: float = 1e-6) -> float:
    """M where value(a) - value(b) changes sign inside (lo, hi)."""

    def diff(m):
        return solution_value(a, m, n) - solution_value(b, m, n)

    flo = diff(lo)
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fmid = diff(mid)
        if (flo <= 0.0) == (fmid <= 0.0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def phase_diagram(m_values, n_values) -> PhaseDiagram:
    """Optimal type over a grid, plus crossing points between consecutive
    grid columns whose winner differs."""
    m_values = tuple(float(m) for m in m_values)
    n_values = tuple(float(n) for n in n_values)
    if not m_values or not n_values:
        raise ValueError("need nonempty M and n ranges")
    grid = []
    boundaries = []
    for n in n_values:
        row = tuple(optimal_type(m, n) for m in m_values)
        grid.append(row)
        for j in range(len(m_values) - 1):
            a, b = row[j].best, row[j + 1].best
            if a is b:
                continue
            m_cross = _bisect_crossing(a, b, n, m_values[j], m_values[j + 1])
            boundaries.append(PhaseBoundary(n=n, m=m_cross, lower=a, upper=b))
    return PhaseDiagram(
        m_values=m_values,
        n_values=n_values,
        grid=tuple(grid),
        boundaries=tuple(boundaries),
    )


def value_table(m_values, n: float):
    """Rows (M, value_single, value_joint, value_split, winner_label) for
    CSV export; ties joined with '|'."""
    rows = []
    for m in m_values:
        m = float(m)
        vals = [solution_value(t, m, n) for t in ALL_TYPES]
        opt = optimal_type(m, n)
        label = "|".join(t.label for t in opt.ties) if len(opt.ties) > 1 else opt.best.label
        rows.append((m, vals[0], vals[1], vals[2], label))
    return rows


def integer_scan(n: float, m_lo: int = 4, m_hi: int = 100, tie_tol: float = 1e-9):
    """(M, ties) for integer M in [m_lo, m_hi].

    Textual summaries scan from M = 4 upward: below that the closed forms
    involve sub-2-point arcs (sqrt(M) < 2 or M/2 < 2) that no longer
    describe realisable ring configurations, and M = 2 produces a spurious
    JOINT optimum there.
    """
    return [(m, optimal_type(float(m), n, tie_tol).ties) for m in range(m_lo, m_hi + 1)]


def _ranges(ms: list[int]) -> list[tuple[int, int]]:
    runs = []
    for m in ms:
        if runs and m == runs[-1][1] + 1:
            runs[-1] = (runs[-1][0], m)
        else:
            runs.append((m, m))
    return runs


def describe_crossovers(n: float, m_lo: int = 4, m_hi: int = 100) -> str:
    """One-line summary of which type is optimal over integer M."""
    scan = integer_scan(n, m_lo, m_hi)
    n_label = "inf" if math.isinf(n) else f"{n:g}"
    parts = []
    for t in ALL_TYPES:
        ms = [m for m, ties in scan if t in ties]
        if not ms:
            parts.append(f"{t.label} never")
            continue
        spans = ", ".join(f"M={a}..{b}" if a != b else f"M={a}" for a, b in _ranges(ms))
        parts.append(f"{t.label} {spans}")
    return f"n={n_label}: " + "; ".join(parts)

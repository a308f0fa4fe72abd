"""Closed-form derivatives of the bound and their verification.

Per input vector the localized posteriors are cached in an ActivationState
together with the leakage-smoothed quantities needed by the derivative
formulas.  All neighbourhood sums run over the truncated sets from the
lattice module with a single dummy index; the quadruple-sum expansions
exist only in the test suite as an independent oracle.

Derivatives (empirical average over samples, windowed):

    dD1/dx'(y) = -(4 / (n M))        < f1(x, y) >
    dD2/dx'(y) = -(4 (n-1) / (n M^2)) < f2(x, y) >
    dD1/d(b, w)(y) = (2 / (n M))       < g1 (1 - Q) (1, x_win) >
    dD2/d(b, w)(y) = (4 (n-1) / (n M^2)) < g2 (1 - Q) (1, x_win) >
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse

from .activation import NodeParams, stable_sigmoid, window_denominators
from .lattice import Lattice, LeakageMatrix
from .objective import SampleSet, compute_D1_D2


@dataclass
class ActivationState:
    """Per-sample cache of activities, posteriors and residual quantities.

    P is sparse with row y' supported on N(y'); p holds the column sums
    (mass each node collects from every window containing it); d holds the
    full-dimensional residuals x - x'(y), zero off-window; dbar is the
    coherent residual computed both ways for self-checking.
    """

    lattice: Lattice
    x: np.ndarray
    x_windows: np.ndarray
    q: np.ndarray
    p_rows: sparse.csr_array
    p: np.ndarray
    d: np.ndarray
    d_win: np.ndarray
    e: np.ndarray
    le: np.ndarray
    ld: np.ndarray
    ltp: np.ndarray
    ple: np.ndarray
    pld: np.ndarray
    ptple: np.ndarray
    ptpld: np.ndarray
    dbar: np.ndarray
    dbar_from_pld: np.ndarray

    def node_flat(self, y) -> int:
        if isinstance(y, (int, np.integer)):
            return int(y)
        return self.lattice.flat(y)


def build_state(x: np.ndarray, lattice: Lattice, params: NodeParams, leakage: LeakageMatrix) -> ActivationState:
    """Evaluate and cache everything the derivative formulas need for one
    input vector."""
    xw = lattice.gather(x)
    logits = np.einsum("ij,ij->i", params.weights, xw) + params.biases
    q = stable_sigmoid(logits)
    denom = window_denominators(q, lattice)
    counts = np.diff(lattice.nbr_indptr)
    data = q[lattice.nbr_indices] / np.repeat(denom, counts)
    p_rows = sparse.csr_array(
        (data, lattice.nbr_indices, lattice.nbr_indptr),
        shape=(lattice.num_nodes, lattice.num_nodes),
    )
    p = np.asarray(p_rows.sum(axis=0)).reshape(-1)

    d_win = xw - params.ref_vectors
    d = lattice.scatter_rows(d_win)
    e = (d_win**2).sum(axis=1)

    le = leakage.apply(e)
    ld = leakage.apply(d)
    ltp = leakage.apply_transpose(p)
    ple = p_rows @ le
    pld = p_rows @ ld
    ptple = p_rows.T @ ple
    ptpld = p_rows.T @ pld
    dbar = d.T @ ltp
    dbar_from_pld = pld.sum(axis=0)

    return ActivationState(
        lattice=lattice, x=np.asarray(x, dtype=float).reshape(-1), x_windows=xw, q=q,
        p_rows=p_rows, p=p, d=d, d_win=d_win, e=e, le=le, ld=ld, ltp=ltp,
        ple=ple, pld=pld, ptple=ptple, ptpld=ptpld,
        dbar=dbar, dbar_from_pld=dbar_from_pld,
    )


def f1(state: ActivationState, y) -> np.ndarray:
    """(L^T p)_y d_y, the incoherent ref-vector derivative kernel."""
    i = state.node_flat(y)
    return state.ltp[i] * state.d[i]


def f2(state: ActivationState, y) -> np.ndarray:
    """(L^T p)_y dbar, the coherent ref-vector derivative kernel."""
    i = state.node_flat(y)
    return state.ltp[i] * state.dbar


def g1(state: ActivationState, y) -> float:
    """p_y (L e)_y - (P^T P L e)_y, the incoherent log-activity kernel."""
    i = state.node_flat(y)
    return float(state.p[i] * state.le[i] - state.ptple[i])


def g2(state: ActivationState, y) -> float:
    """(p_y (L d)_y - (P^T P L d)_y) . dbar, the coherent kernel."""
    i = state.node_flat(y)
    return float((state.p[i] * state.ld[i] - state.ptpld[i]) @ state.dbar)


class RefVectorGradients(NamedTuple):
    d1: np.ndarray  # (M, K) windowed
    d2: np.ndarray


class ProbGradients(NamedTuple):
    bias_d1: np.ndarray    # (M,)
    bias_d2: np.ndarray
    weight_d1: np.ndarray  # (M, K) windowed
    weight_d2: np.ndarray


@dataclass
class GradientSet:
    """All derivative components, split into the d1 and d2 contributions.

    Ref-vector and weight gradients are stored in windowed (M, K) layout;
    components outside a node's input window do not exist in this layout
    and are identically zero in the full-dimensional picture.
    """

    ref_d1: np.ndarray
    ref_d2: np.ndarray
    weight_d1: np.ndarray
    weight_d2: np.ndarray
    bias_d1: np.ndarray
    bias_d2: np.ndarray

    @property
    def ref_total(self) -> np.ndarray:
        return self.ref_d1 + self.ref_d2

    @property
    def weight_total(self) -> np.ndarray:
        return self.weight_d1 + self.weight_d2

    @property
    def bias_total(self) -> np.ndarray:
        return self.bias_d1 + self.bias_d2

    def all_finite(self) -> bool:
        return all(
            np.all(np.isfinite(a))
            for a in (self.ref_d1, self.ref_d2, self.weight_d1,
                      self.weight_d2, self.bias_d1, self.bias_d2)
        )


def _raw_contributions(state: ActivationState):
    """Per-sample kernels before coefficients: f1, f2 windowed and the g1,
    g2 chain-rule pieces for biases and weights."""
    lat = state.lattice
    f1w = state.ltp[:, None] * state.d_win
    f2w = state.ltp[:, None] * state.dbar[lat.win_idx]
    sig = 1.0 - state.q
    g1v = (state.p * state.le - state.ptple) * sig
    g2v = ((state.p[:, None] * state.ld - state.ptpld) @ state.dbar) * sig
    return f1w, f2w, g1v, g2v


def gradient_set_from_states(states, lattice: Lattice, n: float) -> GradientSet:
    """Average the per-sample kernels and apply the derivative coefficients."""
    m = lattice.num_nodes
    k = lattice.window_len
    acc_f1 = np.zeros((m, k))
    acc_f2 = np.zeros((m, k))
    acc_g1b = np.zeros(m)
    acc_g2b = np.zeros(m)
    acc_g1w = np.zeros((m, k))
    acc_g2w = np.zeros((m, k))
    count = 0
    for state in states:
        f1w, f2w, g1v, g2v = _raw_contributions(state)
        acc_f1 += f1w
        acc_f2 += f2w
        acc_g1b += g1v
        acc_g2b += g2v
        acc_g1w += g1v[:, None] * state.x_windows
        acc_g2w += g2v[:, None] * state.x_windows
        count += 1
    c_ref1 = -4.0 / (n * m) / count
    c_ref2 = -4.0 * (n - 1.0) / (n * m * m) / count
    c_prob1 = 2.0 / (n * m) / count
    c_prob2 = 4.0 * (n - 1.0) / (n * m * m) / count
    return GradientSet(
        ref_d1=c_ref1 * acc_f1,
        ref_d2=c_ref2 * acc_f2,
        weight_d1=c_prob1 * acc_g1w,
        weight_d2=c_prob2 * acc_g2w,
        bias_d1=c_prob1 * acc_g1b,
        bias_d2=c_prob2 * acc_g2b,
    )


def _states(samples: SampleSet, lattice: Lattice, params: NodeParams, leakage: LeakageMatrix):
    for x in samples.vectors:
        yield build_state(x, lattice, params, leakage)


def all_gradients(
    samples: SampleSet, lattice: Lattice, params: NodeParams, leakage: LeakageMatrix, n: float
) -> GradientSet:
    return gradient_set_from_states(_states(samples, lattice, params, leakage), lattice, n)


def grad_refvectors(
    samples: SampleSet, lattice: Lattice, params: NodeParams, leakage: LeakageMatrix, n: float
) -> RefVectorGradients:
    """Windowed derivatives of d1 and d2 with respect to the reference
    vectors."""
    gs = all_gradients(samples, lattice, params, leakage, n)
    return RefVectorGradients(d1=gs.ref_d1, d2=gs.ref_d2)


def grad_weights_biases(
    samples: SampleSet, lattice: Lattice, params: NodeParams, leakage: LeakageMatrix, n: float
) -> ProbGradients:
    """Derivatives with respect to biases and (windowed) weights, via the
    sigmoid chain rule d log Q = (1 - Q) (db + x . dw)."""
    gs = all_gradients(samples, lattice, params, leakage, n)
    return ProbGradients(
        bias_d1=gs.bias_d1, bias_d2=gs.bias_d2, weight_d1=gs.weight_d1, weight_d2=gs.weight_d2
    )


@dataclass(frozen=True)
class FDEntry:
    kind: str
    node: int
    component: int
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class FDReport:
    entries: list[FDEntry] = field(default_factory=list)
    step: float = 1e-5

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.entries), default=0.0)

    @property
    def worst(self) -> FDEntry | None:
        return max(self.entries, key=lambda e: e.rel_error, default=None)

    def passed(self, tol: float = 1e-5) -> bool:
        return self.max_rel_error <= tol

    def format_text(self, limit: int | None = None) -> str:
        lines = ["kind node comp analytic numeric rel_error"]
        entries = sorted(self.entries, key=lambda e: -e.rel_error)
        if limit is not None:
            entries = entries[:limit]
        for e in entries:
            lines.append(
                f"{e.kind} {e.node} {e.component} {e.analytic:.12e} {e.numeric:.12e} {e.rel_error:.3e}"
            )
        lines.append(f"max_rel_error {self.max_rel_error:.3e} over {len(self.entries)} components")
        return "\n".join(lines)


def _rel_error(a: float, b: float) -> float:
    return abs(a - b) / max(1e-8, abs(a), abs(b))


def finite_difference_check(
    samples: SampleSet,
    lattice: Lattice,
    params: NodeParams,
    leakage: LeakageMatrix,
    n: float,
    step: float = 1e-5,
    corrupt_first_component: bool = False,
) -> FDReport:
    """Compare every analytic derivative component against central finite
    differences of the objective.

    corrupt_first_component is a sensitivity self-test: it perturbs one
    analytic ref-vector component so the check must fail.
    """
    gs = all_gradients(samples, lattice, params, leakage, n)
    analytic = {
        "bias": gs.bias_total.copy(),
        "weight": gs.weight_total.copy(),
        "ref": gs.ref_total.copy(),
    }
    if corrupt_first_component:
        analytic["ref"].flat[0] = analytic["ref"].flat[0] * 1.1 + 1e-3

    arrays = {"bias": params.biases, "weight": params.weights, "ref": params.ref_vectors}
    report = FDReport(step=step)
    for kind, arr in arrays.items():
        flat = arr.reshape(-1)
        width = arr.shape[1] if arr.ndim == 2 else 1
        for idx in range(flat.shape[0]):
            orig = flat[idx]
            flat[idx] = orig + step
            f_plus = compute_D1_D2(samples, lattice, params, leakage, n).total
            flat[idx] = orig - step
            f_minus = compute_D1_D2(samples, lattice, params, leakage, n).total
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(analytic[kind].reshape(-1)[idx])
            report.entries.append(
                FDEntry(
                    kind=kind,
                    node=idx // width,
                    component=idx % width,
                    analytic=a,
                    numeric=numeric,
                    rel_error=_rel_error(a, numeric),
                )
            )
    return report

"""Offline comparators: the right-hand sides of the regret guarantees.

Everything here is computed by brute force, independently of the online
forecasters, so the regret checks compare two genuinely separate routes:

* :func:`best_constant`      convex search over a single value in [0,1]
* :func:`best_histogram`     best constant per box of an equal partition
* :func:`best_lipschitz_1d`  best slope-bounded function on a line, by
  projected subgradient descent with diminishing steps
* ``*_grid`` twins           exhaustive grid evaluation used to verify the
  search-based routes

The histogram and Lipschitz comparators consume (covariate, outcome)
pairs; the constant comparator consumes outcomes only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RejectedInputError
from .losses import LossSpec


@dataclass(frozen=True)
class Comparator:
    """Optimal cumulative loss of a comparator class on a fixed dataset."""

    kind: str
    value: float
    argmin: object = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "params": self.params, "loss": self.value}
        if self.argmin is not None:
            arg = self.argmin
            if isinstance(arg, np.ndarray):
                arg = arg.tolist()
            out["argmin"] = arg
        return out


def _weighted_objective(outcomes: np.ndarray, loss: LossSpec, weights):
    if weights is None:
        return lambda y: float(loss.value_array(y, outcomes).sum())
    w = np.asarray(weights, dtype=float)
    return lambda y: float(loss.value_array(y, outcomes) @ w)


def best_constant(outcomes, loss: LossSpec, weights=None) -> Comparator:
    """Minimize ``sum_t loss(y, y_t)`` over y in [0,1] by ternary search.

    The objective is convex, so bracketing on the two inner probe points is
    exact; ties shrink the bracket from the right, biasing flat minima
    toward the lower argmin.  Optional ``weights`` turn the sum into a
    weighted sum (used for expected-loss computations).
    """
    outcomes = np.asarray(outcomes, dtype=float)
    if outcomes.size == 0:
        raise RejectedInputError("best_constant needs a nonempty sequence")
    if outcomes.min() < 0.0 or outcomes.max() > 1.0:
        raise RejectedInputError("outcomes must lie in [0, 1]")
    g = _weighted_objective(outcomes, loss, weights)
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-14:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if g(m1) <= g(m2):
            hi = m2
        else:
            lo = m1
    y_star = 0.5 * (lo + hi)
    value = min(g(lo), g(y_star), g(hi))
    return Comparator("constant", value, argmin=y_star)


def best_constant_grid(outcomes, loss: LossSpec, step: float = 1e-4, weights=None) -> Comparator:
    """Same minimization on an explicit value grid; the verification twin."""
    outcomes = np.asarray(outcomes, dtype=float)
    if outcomes.size == 0:
        raise RejectedInputError("best_constant_grid needs a nonempty sequence")
    grid = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    w = np.ones(outcomes.size) if weights is None else np.asarray(weights, dtype=float)
    values = loss.value_array(grid[:, None], outcomes[None, :]) @ w
    k = int(values.argmin())
    return Comparator("constant", float(values[k]), argmin=float(grid[k]),
                      params={"step": step})


def best_histogram(xs, ys, n_boxes: int, d: int, loss: LossSpec) -> Comparator:
    """Best piecewise-constant predictor on an equal partition of [0,1]^d.

    ``n_boxes`` must be a d-th power, giving the same number of cells per
    axis; outcomes falling in each box get that box's best constant,
    empty boxes contribute nothing.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    if xs.shape[1] != d:
        raise RejectedInputError(f"covariates have dimension {xs.shape[1]}, expected {d}")
    per_axis = round(n_boxes ** (1.0 / d))
    if per_axis < 1 or per_axis ** d != n_boxes:
        raise RejectedInputError(f"{n_boxes} boxes cannot tile [0,1]^{d} evenly")
    idx = np.minimum((xs * per_axis).astype(int), per_axis - 1)
    flat = np.zeros(len(xs), dtype=int)
    for j in range(d):
        flat = flat * per_axis + idx[:, j]
    total = 0.0
    fits = {}
    for box in np.unique(flat):
        fit = best_constant(ys[flat == box], loss)
        fits[int(box)] = fit.argmin
        total += fit.value
    return Comparator("histogram", total, argmin=fits, params={"n_boxes": n_boxes, "d": d})


# -- slope-bounded regression on a line ---------------------------------


def _group_by_x(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim == 2:
        if xs.shape[1] != 1:
            raise RejectedInputError("the slope-bounded comparator supports d=1 only")
        xs = xs[:, 0]
    if xs.size == 0:
        raise RejectedInputError("need at least one data point")
    order = np.argsort(xs, kind="stable")
    xs, ys = xs[order], ys[order]
    u, gidx = np.unique(xs, return_inverse=True)
    starts = np.searchsorted(gidx, np.arange(len(u)))
    return u, xs, ys, gidx, starts


def _band_retract(g: np.ndarray, caps: np.ndarray) -> np.ndarray:
    """Nearest-in-spirit feasible point for the chain |f[i+1]-f[i]| <= caps[i].

    Returns the midpoint of the tightest slope-bounded envelopes above and
    below ``g`` (both computed with two running extrema), which is feasible,
    stays in the convex hull of ``g``'s values, and fixes feasible inputs.
    """
    if len(g) == 1:
        return g.copy()
    s = np.concatenate(([0.0], np.cumsum(caps)))
    below_fwd = np.minimum.accumulate(g - s) + s
    below_bwd = (np.minimum.accumulate((g + s)[::-1]) - s[::-1])[::-1]
    above_fwd = np.maximum.accumulate(g + s) - s
    above_bwd = (np.maximum.accumulate((g - s)[::-1]) + s[::-1])[::-1]
    return 0.5 * (np.minimum(below_fwd, below_bwd) + np.maximum(above_fwd, above_bwd))


def _unconstrained_minimizer(pts: np.ndarray, loss: LossSpec) -> float:
    """Exact minimizer of ``sum loss(c, pts)`` over an unconstrained c."""
    if loss.kind == "square":
        return float(pts.mean())
    if loss.kind == "absolute":
        return float(np.median(pts))
    # the check loss is minimized by an order statistic, not by the
    # interpolated quantile
    return float(np.quantile(pts, loss.alpha, method="inverted_cdf"))


def _polish_pass(f, caps, ys, starts, loss: LossSpec) -> np.ndarray:
    """Cyclic coordinate sweep with exact per-coordinate minimization.

    Each per-coordinate objective is convex, so its constrained optimum is
    the unconstrained one clipped into the interval the neighbors allow.
    """
    n = len(f)
    ends = np.concatenate((starts[1:], [len(ys)]))
    for i in range(n):
        lo, hi = 0.0, 1.0
        if i > 0:
            lo = max(lo, f[i - 1] - caps[i - 1])
            hi = min(hi, f[i - 1] + caps[i - 1])
        if i < n - 1:
            lo = max(lo, f[i + 1] - caps[i])
            hi = min(hi, f[i + 1] + caps[i])
        if lo > hi:  # numerical crumbs only; keep the current value
            continue
        c = _unconstrained_minimizer(ys[starts[i]:ends[i]], loss)
        f[i] = min(max(c, lo), hi)
    return f


def _chain_min_over_candidates(cands, caps, cost_fn):
    """Exact minimization when every variable is restricted to a finite set.

    ``cands[i]`` is a sorted array of admissible values for variable i and
    adjacent variables must differ by at most ``caps[i]``.  Classic chain
    decomposition with a monotone-deque window minimum; equivalent to
    enumerating every admissible assignment.  Returns ``(value, f)`` or
    ``(inf, None)`` when no assignment is feasible.
    """
    n = len(cands)
    V = cost_fn(0, cands[0])
    parents = []
    for i in range(1, n):
        prev, cur = cands[i - 1], cands[i]
        lows = np.searchsorted(prev, cur - caps[i - 1] - 1e-12, side="left")
        highs = np.searchsorted(prev, cur + caps[i - 1] + 1e-12, side="right")
        best = np.full(len(cur), math.inf)
        arg = np.zeros(len(cur), dtype=np.int64)
        dq: list = []  # indices into prev with increasing V
        k = 0
        for j in range(len(cur)):
            hi = highs[j]
            while k < hi:
                while dq and V[dq[-1]] >= V[k]:
                    dq.pop()
                dq.append(k)
                k += 1
            lo = lows[j]
            while dq and dq[0] < lo:
                dq.pop(0)
            if dq:
                best[j] = V[dq[0]]
                arg[j] = dq[0]
        parents.append(arg)
        V = cost_fn(i, cur) + best
    j = int(V.argmin())
    if not math.isfinite(V[j]):
        return math.inf, None
    value = float(V[j])
    f = np.empty(n)
    for i in range(n - 1, -1, -1):
        f[i] = cands[i][j]
        if i:
            j = int(parents[i - 1][j])
    return value, f


def best_lipschitz_1d(xs, ys, L: float, loss: LossSpec,
                      iters: int | None = None) -> Comparator:
    """Best L-slope-bounded predictor of y from a scalar covariate.

    Minimizes ``sum_t loss(f(x_t), y_t)`` over functions f: [0,1] -> [0,1]
    with ``|f(x) - f(x')| <= L |x - x'|``; on a line only the constraints
    between consecutive distinct covariates bind, so the problem is a
    convex program over one value per distinct x.

    Projected subgradient descent with diminishing steps runs first, from
    a retracted per-group fit.  Because plain subgradient iterations on a
    non-smooth chain stall well short of the optimum, the incumbent is
    then refined by two exact finite restrictions of the same program: a
    pattern search over a shrinking offset lattice around the incumbent
    (joint moves across all variables) and, on small inputs, the lattice
    of data-anchored values where an optimal vertex of the piecewise
    linear program must lie.  The best value seen is returned.
    """
    if L < 0:
        raise RejectedInputError("the slope bound L must be >= 0")
    u, xs1, ys1, gidx, starts = _group_by_x(xs, ys)
    n = len(u)
    if L == 0.0 or n == 1:
        fit = best_constant(ys1, loss)
        return Comparator("lipschitz", fit.value, argmin=(u, np.full(n, fit.argmin)),
                          params={"L": L})
    caps = L * np.diff(u)
    ends = np.concatenate((starts[1:], [len(ys1)]))

    def objective(f):
        return float(loss.value_array(f[gidx], ys1).sum())

    def group_cost(i, values):
        pts = ys1[starts[i]:ends[i]]
        return loss.value_array(values[:, None], pts[None, :]).sum(axis=1)

    # start from the per-group exact minimizers, made feasible
    f0 = np.empty(n)
    for i in range(n):
        f0[i] = _unconstrained_minimizer(ys1[starts[i]:ends[i]], loss)
    f = _band_retract(np.clip(f0, 0.0, 1.0), caps)
    best_f = f.copy()
    best_v = objective(f)

    if iters is None:
        iters = 1000 if len(ys1) <= 2000 else max(400, 2_000_000 // len(ys1))
    diameter = math.sqrt(n)
    for k in range(1, iters + 1):
        sg_data = loss.subgradient_array(f[gidx], ys1)
        sg = np.add.reduceat(sg_data, starts)
        norm = float(np.linalg.norm(sg))
        if norm == 0.0:
            break
        f = _band_retract(np.clip(f - (diameter / (norm * math.sqrt(k))) * sg, 0.0, 1.0), caps)
        v = objective(f)
        if v < best_v:
            best_v, best_f = v, f.copy()

    if n <= 20000:
        f = best_f.copy()
        for _ in range(4):
            f = _polish_pass(f, caps, ys1, starts, loss)
            v = objective(f)
            if v < best_v - 1e-15:
                best_v, best_f = v, f.copy()
            else:
                break

    if n <= 2000:
        offsets = np.array([-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0])
        eps = 0.25
        while eps > 1e-6:
            cands = [np.unique(np.clip(best_f[i] + eps * offsets, 0.0, 1.0))
                     for i in range(n)]
            v, g = _chain_min_over_candidates(cands, caps, group_cost)
            if g is not None and v < best_v - 1e-15:
                best_v, best_f = v, g
            else:
                eps /= 2.0

    if n <= 64 and len(ys1) <= 256:
        # a vertex of the piecewise-linear program anchors every value to a
        # data point, a box face, or a chain of tight slope constraints
        s = np.concatenate(([0.0], np.cumsum(caps)))
        anchors = np.unique(ys1)
        cands = []
        for i in range(n):
            vals = np.concatenate([
                anchors + d for d in np.unique(np.abs(s - s[i]))
            ] + [
                anchors - d for d in np.unique(np.abs(s - s[i]))
            ] + [np.array([0.0, 1.0, best_f[i]])])
            cands.append(np.unique(np.clip(vals, 0.0, 1.0)))
        v, g = _chain_min_over_candidates(cands, caps, group_cost)
        if g is not None and v < best_v:
            best_v, best_f = v, g

    return Comparator("lipschitz", best_v, argmin=(u, best_f), params={"L": L})


def lipschitz_grid_1d(xs, ys, L: float, loss: LossSpec, step: float = 0.02) -> Comparator:
    """Exhaustive minimization with every f-value restricted to a grid.

    Enumerates, via chain decomposition, exactly the same minimum a brute
    force scan over all grid assignments would find; the verification twin
    of :func:`best_lipschitz_1d`.
    """
    u, _, ys1, _, starts = _group_by_x(xs, ys)
    n = len(u)
    grid = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    m = len(grid)
    ends = np.concatenate((starts[1:], [len(ys1)]))

    def cost(i):
        pts = ys1[starts[i]:ends[i]]
        return loss.value_array(grid[:, None], pts[None, :]).sum(axis=1)

    V = cost(0)
    for i in range(1, n):
        reach = L * (u[i] - u[i - 1]) + 1e-12
        W = np.empty(m)
        for j in range(m):
            mask = np.abs(grid - grid[j]) <= reach
            W[j] = V[mask].min()
        V = cost(i) + W
    return Comparator("lipschitz_grid", float(V.min()), params={"L": L, "step": step})


# -- bound formulas -------------------------------------------------------


def constant_gap_bound(M: float, L: float, count: int, diam: float) -> float:
    """Cap on (best constant - best Lipschitz) over one region: M*L*count*diam."""
    return M * L * count * diam


def lipschitz_regret_bound(M: float, L: float, d: int, T: int) -> float:
    """Tree regret cap versus the L-Lipschitz class in dimension d."""
    return M * (3.0 + L) * (
        math.sqrt(T) + 2.0 * (3.0 * d) ** (d / (2.0 * (d + 2.0))) * T ** ((d + 1.0) / (d + 2.0))
    )

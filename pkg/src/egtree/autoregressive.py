"""Self-forecasting a series by aggregating lag-window tree forecasters.

A :class:`LaggedForecaster` of order ``d`` feeds the window of the last
``d`` observations (oldest first) as the covariate of a ``d``-dimensional
:class:`~egtree.tree.PartitionTree`, starting at its scheduled entry step.

A :class:`MetaForecaster` maintains the growing pool of lagged forecasters
prescribed by a schedule of entry steps ``t_1 = 2 < t_2 < t_3 < ...`` and
mixes their predictions with exponential weights.  With ``D_t`` active
members, learning rates ``eta_t = 2/sqrt(t)`` and per-step losses
``l_d = loss(f_d, y_t)``, the weights evolve as

    p'_d  propto  p_d^(eta_{t+1}/eta_t) * exp(-eta_{t+1} * l_d)

renormalized to sum to ``D_t / D_{t+1}``, while a member entering at step
``t+1`` receives weight ``1 / D_{t+1}``.  Weights are kept in the log
domain; the power-and-normalize update underflows otherwise.
"""

from __future__ import annotations

import math

from .errors import ContractViolationError, RejectedInputError
from .losses import LossSpec
from .tree import PartitionTree

POWERS_OF_TWO = "powers_of_two"
QUADRATIC = "quadratic"

_SCHEDULES = (POWERS_OF_TWO, QUADRATIC)


def entry_step(kind: str, d: int) -> int:
    """Entry step of the order-d forecaster under the named schedule."""
    if kind == POWERS_OF_TWO:
        return 2 ** d
    if kind == QUADRATIC:
        return 2 if d == 1 else d * d + 1
    raise RejectedInputError(f"unknown schedule {kind!r}")


def default_schedule(kind: str):
    """Infinite generator of entry steps t_1, t_2, ... for the schedule."""
    entry_step(kind, 1)  # validate the name eagerly
    d = 1
    while True:
        yield entry_step(kind, d)
        d += 1


def reweight(logw: list[float], losses: list[float], eta_t: float, eta_next: float) -> list[float]:
    """One exponential-weights step in the log domain, normalized to sum 1.

    Applies ``p' propto p^(eta_next/eta_t) * exp(-eta_next * loss)`` and
    returns log-weights whose exponentials sum to one; the caller rescales
    when the pool grows.
    """
    ratio = eta_next / eta_t
    out = [ratio * lw - eta_next * l for lw, l in zip(logw, losses)]
    m = max(out)
    lse = m + math.log(sum(math.exp(lw - m) for lw in out))
    return [lw - lse for lw in out]


class LaggedForecaster:
    """Order-d autoregressive wrapper around a partition tree.

    Inactive before ``start``; from then on each step consumes the lag
    window ``y[t-d] ... y[t-1]`` as covariate.
    """

    def __init__(self, d: int, start: int, loss: LossSpec, effective_range: bool = False):
        if start < d + 1:
            raise RejectedInputError(f"entry step {start} < d+1 = {d + 1}")
        self.d = d
        self.start = start
        self.tree = PartitionTree(d, loss, effective_range=effective_range)
        self._pending = None

    def predict(self, history: list) -> float:
        """Prediction from the last ``d`` entries of ``history``."""
        if len(history) < self.d:
            raise ContractViolationError(
                f"order-{self.d} forecaster asked to predict from {len(history)} observations"
            )
        pred, leaf = self.tree.predict(history[-self.d:])
        self._pending = (leaf, pred)
        return pred

    def update(self, outcome: float) -> None:
        if self._pending is None:
            raise ContractViolationError("update must follow predict")
        leaf, pred = self._pending
        self._pending = None
        self.tree.update(leaf, pred, outcome)


class MetaForecaster:
    """Exponentially weighted mixture over a growing pool of lag orders."""

    def __init__(
        self,
        loss: LossSpec,
        schedule: str = POWERS_OF_TWO,
        effective_range: bool = False,
        max_d: int | None = None,
    ):
        if schedule not in _SCHEDULES:
            raise RejectedInputError(f"unknown schedule {schedule!r}")
        if max_d is not None and max_d < 1:
            raise RejectedInputError("max_d must be >= 1")
        self.loss = loss
        self.schedule = schedule
        self.effective_range = effective_range
        self.max_d = max_d
        self.t = 1
        self.history: list = []
        self.experts: list[LaggedForecaster] = []
        self._logw: list[float] = []
        self._pending = None

    @property
    def n_active(self) -> int:
        return len(self.experts)

    @property
    def weights(self) -> list[float]:
        """Current mixture weights, one per active forecaster."""
        return [math.exp(lw) for lw in self._logw]

    def predict(self) -> float:
        """Mixture prediction for the current step (1/2 before any entry)."""
        if not self.experts:
            self._pending = ((), ())
            return 0.5
        preds = tuple(ex.predict(self.history) for ex in self.experts)
        weights = tuple(math.exp(lw) for lw in self._logw)
        y = 0.0
        for w, f in zip(weights, preds):
            y += w * f
        self._pending = (preds, weights)
        return min(max(y, 0.0), 1.0)

    def update(self, outcome: float) -> None:
        """Observe the step's outcome: feed members, reweight, admit entrants."""
        if not 0.0 <= outcome <= 1.0:
            raise RejectedInputError(f"outcome must lie in [0, 1], got {outcome!r}")
        if self._pending is None:
            raise ContractViolationError("update must follow predict")
        preds, _ = self._pending
        self._pending = None

        if self.experts:
            for ex in self.experts:
                ex.update(outcome)
            t = self.t
            self._logw = reweight(
                self._logw,
                [self.loss.value(f, outcome) for f in preds],
                2.0 / math.sqrt(t),
                2.0 / math.sqrt(t + 1.0),
            )

        self.history.append(outcome)
        self._admit(self.t + 1)
        self.t += 1

    def _admit(self, next_t: int) -> None:
        d_next = len(self.experts) + 1
        if self.max_d is not None and d_next > self.max_d:
            return
        if entry_step(self.schedule, d_next) != next_t:
            return
        self.experts.append(
            LaggedForecaster(d_next, next_t, self.loss, self.effective_range)
        )
        incumbents = d_next - 1
        if incumbents:
            shift = math.log(incumbents / d_next)
            self._logw = [lw + shift for lw in self._logw]
        self._logw.append(-math.log(d_next))

    @property
    def last_expert_preds(self) -> tuple:
        """Member predictions of the most recent predict() call."""
        if self._pending is None:
            raise ContractViolationError("no prediction pending")
        return self._pending[0]

    @property
    def last_weights(self) -> tuple:
        """Mixture weights used by the most recent predict() call."""
        if self._pending is None:
            raise ContractViolationError("no prediction pending")
        return self._pending[1]


def mixture_regret_bound(T: int, n_active: int) -> float:
    """Gap cap versus any active member: sqrt(T+1) * log(pool size).

    For a single-member pool the cap degenerates to 0; callers should then
    use :func:`mixture_regret_bound_raw`, whose Hoeffding term is positive.
    """
    return math.sqrt(T + 1.0) * math.log(n_active)


def mixture_regret_bound_raw(T: int, n_active: int, start: int) -> float:
    """Pre-simplification cap: log(D)/eta_{T+1} + (1/8) * sum eta_t."""
    tail = sum(2.0 / math.sqrt(t) for t in range(start, T + 1))
    return math.log(n_active) * math.sqrt(T + 1.0) / 2.0 + tail / 8.0


def combined_regret_bound(M: float, L: float, d: int, T: int, start: int, n_active: int) -> float:
    """End-to-end cap versus the order-d Lipschitz comparator."""
    from .oracles import lipschitz_regret_bound

    return start + mixture_regret_bound(T, n_active) + lipschitz_regret_bound(M, L, d, T)

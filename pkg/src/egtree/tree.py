"""Online regression tree with per-leaf constant-tracking forecasters.

The tree adaptively partitions the covariate cube [0,1]^d into half-open
dyadic boxes.  Every observation is routed to the unique leaf containing
its covariate; the leaf predicts with its own exponentiated-gradient
constant tracker (:mod:`egtree.eg`).  A leaf at depth ``h`` splits its box
at the midpoint of coordinate ``h mod d`` (coordinates cycle with depth)
as soon as its observation count satisfies

    count + 1 >= 1 / diam(box)^2

where ``diam`` is the Euclidean diameter of the box.  In effective-range
mode the bounding-box diameter of the covariates actually observed at the
leaf is used instead, so a degenerate stream (e.g. a constant covariate)
never forces a split.

Geometry is fully determined by depth: after ``h = k*d + r`` splits the
first ``r`` coordinates of a box have side ``2^-(k+1)`` and the remaining
``d - r`` have side ``2^-k``, hence ``diam <= sqrt(2d) * 2^(-h/d)``.
Boxes are therefore never stored per node; they are reconstructed while
descending from the root.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from . import eg
from .errors import ContractViolationError, RejectedInputError
from .losses import LossSpec


@dataclass(frozen=True, slots=True)
class Bin:
    """Axis-aligned box; upper faces are open except where they touch 1."""

    lo: tuple
    hi: tuple

    def contains(self, x) -> bool:
        for lo_j, hi_j, x_j in zip(self.lo, self.hi, x):
            if x_j < lo_j:
                return False
            if x_j >= hi_j and not (hi_j == 1.0 and x_j == 1.0):
                return False
        return True

    def side_lengths(self) -> tuple:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    def diameter(self) -> float:
        return math.sqrt(sum((h - l) ** 2 for l, h in zip(self.lo, self.hi)))


class TreeNode:
    """One tree node: depth/index pair, visit count, local forecaster."""

    __slots__ = ("h", "i", "count", "eg", "left", "right", "obs_lo", "obs_hi")

    def __init__(self, h: int, i: int, M: float):
        self.h = h
        self.i = i
        self.count = 0
        self.eg = eg.EgState(M=M)
        self.left = None
        self.right = None
        self.obs_lo = None  # per-coordinate min of observed covariates
        self.obs_hi = None  # per-coordinate max, effective-range mode only

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(frozen=True, slots=True)
class TreeStats:
    n_nodes: int
    height: int
    total_steps: int
    leaf_counts: tuple  # of (h, i, count)


class PartitionTree:
    """Covariate-partitioning forecaster over [0,1]^d.

    A single instance must be driven sequentially: each ``predict`` is
    followed by exactly one ``update`` with the leaf it returned.
    """

    def __init__(self, d: int, loss: LossSpec, effective_range: bool = False):
        if d < 1:
            raise RejectedInputError(f"dimension must be >= 1, got {d}")
        self.d = d
        self.loss = loss
        self.effective_range = effective_range
        self.root = TreeNode(0, 1, loss.M)
        self.n_nodes = 1
        self.height = 0
        self.total_steps = 0
        self._diam_sq = [float(d)]  # squared box diameter, indexed by depth
        self._pending = None

    # -- geometry ------------------------------------------------------

    def _diameter_sq(self, h: int) -> float:
        cache = self._diam_sq
        while len(cache) <= h:
            hh = len(cache)
            k, r = divmod(hh, self.d)
            cache.append(r * 4.0 ** -(k + 1) + (self.d - r) * 4.0 ** -k)
        return cache[h]

    def _check_point(self, x) -> tuple:
        x = tuple(float(v) for v in x)
        if len(x) != self.d:
            raise RejectedInputError(f"expected a point of dimension {self.d}, got {len(x)}")
        for v in x:
            if not 0.0 <= v <= 1.0:
                raise RejectedInputError(f"covariate {v!r} outside [0, 1]^d")
        return x

    # -- online protocol -----------------------------------------------

    def route(self, x) -> TreeNode:
        """Leaf whose box contains ``x``; cost proportional to the height."""
        x = self._check_point(x)
        node = self.root
        lo = [0.0] * self.d
        hi = [1.0] * self.d
        while node.left is not None:
            c = node.h % self.d
            mid = (lo[c] + hi[c]) / 2.0
            if x[c] < mid:
                node = node.left
                hi[c] = mid
            else:
                node = node.right  # midpoint ties fall in the right box
                lo[c] = mid
        return node

    def predict(self, x):
        """Return ``(prediction, leaf)`` and arm the leaf for ``update``."""
        x = self._check_point(x)
        leaf = self.route(x)
        self._pending = (leaf, x)
        return eg.predict(leaf.eg), leaf

    def update(self, leaf: TreeNode, pred: float, outcome: float) -> None:
        """Feed the observed outcome to the leaf that produced ``pred``.

        The leaf may split afterwards, in which case it becomes an inner
        node and its two children start with fresh forecasters.
        """
        if leaf.left is not None:
            raise ContractViolationError(
                f"node ({leaf.h},{leaf.i}) is no longer a leaf; stale reference"
            )
        if self._pending is None or self._pending[0] is not leaf:
            raise ContractViolationError("update must follow predict on the same leaf")
        _, x = self._pending
        self._pending = None

        if self.effective_range:
            if leaf.obs_lo is None:
                leaf.obs_lo = list(x)
                leaf.obs_hi = list(x)
            else:
                for j, v in enumerate(x):
                    if v < leaf.obs_lo[j]:
                        leaf.obs_lo[j] = v
                    elif v > leaf.obs_hi[j]:
                        leaf.obs_hi[j] = v

        leaf.eg = eg.update(leaf.eg, pred, outcome, self.loss)
        leaf.count += 1
        self.total_steps += 1

        if self.effective_range:
            diam_sq = sum((b - a) ** 2 for a, b in zip(leaf.obs_lo, leaf.obs_hi))
            if diam_sq <= 0.0:
                return  # zero observed range: the split threshold is infinite
        else:
            diam_sq = self._diameter_sq(leaf.h)
        if leaf.count + 1 >= 1.0 / diam_sq:
            self._split(leaf)

    def _split(self, node: TreeNode) -> None:
        M = self.loss.M
        node.left = TreeNode(node.h + 1, 2 * node.i - 1, M)
        node.right = TreeNode(node.h + 1, 2 * node.i, M)
        node.obs_lo = node.obs_hi = None
        self.n_nodes += 2
        if node.h + 1 > self.height:
            self.height = node.h + 1

    # -- inspection ------------------------------------------------------

    def stats(self) -> TreeStats:
        leaves = tuple(
            (node.h, node.i, node.count) for node, _ in self.walk() if node.is_leaf
        )
        return TreeStats(self.n_nodes, self.height, self.total_steps, leaves)

    def walk(self):
        """Depth-first iteration over ``(node, bin)`` pairs."""
        lo = [0.0] * self.d
        hi = [1.0] * self.d

        def visit(node):
            yield node, Bin(tuple(lo), tuple(hi))
            if node.left is None:
                return
            c = node.h % self.d
            mid = (lo[c] + hi[c]) / 2.0
            old_lo, old_hi = lo[c], hi[c]
            hi[c] = mid
            yield from visit(node.left)
            hi[c] = old_hi
            lo[c] = mid
            yield from visit(node.right)
            lo[c] = old_lo

        yield from visit(self.root)

    def node_bin(self, node: TreeNode) -> Bin:
        """Reconstruct the box of a node from its (depth, index) pair."""
        lo = [0.0] * self.d
        hi = [1.0] * self.d
        # bits of i-1, most significant first, encode the root-to-node path
        for level in range(node.h):
            right = (node.i - 1 >> (node.h - 1 - level)) & 1
            c = level % self.d
            mid = (lo[c] + hi[c]) / 2.0
            if right:
                lo[c] = mid
            else:
                hi[c] = mid
        return Bin(tuple(lo), tuple(hi))

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        nodes = []
        for node, box in self.walk():
            entry = {
                "h": node.h,
                "i": node.i,
                "count": node.count,
                "eg": {"t": node.eg.t, "G": node.eg.G, "M": node.eg.M},
                "bin": {"lo": list(box.lo), "hi": list(box.hi)},
            }
            if self.effective_range and node.obs_lo is not None:
                entry["obs_range"] = {"lo": list(node.obs_lo), "hi": list(node.obs_hi)}
            nodes.append(entry)
        return {
            "d": self.d,
            "loss": self.loss.to_dict(),
            "effective_range": self.effective_range,
            "total_steps": self.total_steps,
            "nodes": nodes,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "PartitionTree":
        tree = cls(
            d=int(data["d"]),
            loss=LossSpec.from_dict(data["loss"]),
            effective_range=bool(data.get("effective_range", False)),
        )
        by_key = {}
        for entry in data["nodes"]:
            node = TreeNode(int(entry["h"]), int(entry["i"]), tree.loss.M)
            node.count = int(entry["count"])
            e = entry["eg"]
            node.eg = eg.EgState(int(e["t"]), float(e["G"]), float(e["M"]))
            rng = entry.get("obs_range")
            if rng is not None:
                node.obs_lo = [float(v) for v in rng["lo"]]
                node.obs_hi = [float(v) for v in rng["hi"]]
            by_key[(node.h, node.i)] = node
        if (0, 1) not in by_key:
            raise RejectedInputError("serialized tree has no root node")
        for (h, i), node in by_key.items():
            left = by_key.get((h + 1, 2 * i - 1))
            right = by_key.get((h + 1, 2 * i))
            if (left is None) != (right is None):
                raise RejectedInputError(f"node ({h},{i}) has exactly one child")
            node.left, node.right = left, right
        tree.root = by_key[(0, 1)]
        tree.n_nodes = len(by_key)
        tree.height = max(h for h, _ in by_key)
        tree.total_steps = int(data.get("total_steps", sum(n.count for n in by_key.values())))
        return tree

    @classmethod
    def from_json(cls, text: str) -> "PartitionTree":
        return cls.from_dict(json.loads(text))


def node_count_bound(d: int, t: int) -> float:
    """Growth cap on the number of nodes after t steps: 1 + 8*(d*t)^(d/(d+2))."""
    return 1.0 + 8.0 * (d * t) ** (d / (d + 2.0))


def height_bound(d: int, t: int) -> float:
    """Growth cap on the tree height after t steps: 1 + (d/2)*log2(4*d*t)."""
    return 1.0 + 0.5 * d * math.log2(4.0 * d * t)


def diameter_bound(d: int, h: int) -> float:
    """Box-diameter cap at depth h: sqrt(2d) * 2^(-h/d)."""
    return math.sqrt(2.0 * d) * 2.0 ** (-h / d)

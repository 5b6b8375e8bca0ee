"""Multi-class gradient boosting with depth-limited regression trees.

Softmax cross-entropy loss, one tree per class per round, second-order
(Newton) leaf values and split gains.  Splits are searched exhaustively
over the distinct values of each column (quantile bins past ``max_bins``).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class GbtHyper:
    rounds: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_leaf: int = 5
    l2: float = 1.0
    max_bins: int = 256
    subsample: float = 1.0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Tree:
    """Flat array tree; ``feature == -1`` marks a leaf."""

    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    value: list[float]

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        while True:
            f = feat[node]
            inner = f >= 0
            if not inner.any():
                break
            rows = np.flatnonzero(inner)
            go_left = X[rows, f[rows]] <= thr[node[rows]]
            node[rows] = np.where(go_left, left[node[rows]], right[node[rows]])
        return np.asarray(self.value)[node]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            [int(v) for v in d["feature"]],
            [float(v) for v in d["threshold"]],
            [int(v) for v in d["left"]],
            [int(v) for v in d["right"]],
            [float(v) for v in d["value"]],
        )


def _bin_columns(X: np.ndarray, max_bins: int) -> tuple[np.ndarray, list[np.ndarray]]:
    cuts = []
    binned = np.empty(X.shape, dtype=np.int64)
    for j in range(X.shape[1]):
        col = X[:, j]
        uniq = np.unique(col)
        if uniq.size > max_bins:
            uniq = np.unique(np.quantile(col, np.linspace(0, 1, max_bins + 1)[1:], method="lower"))
        cuts.append(uniq)
        binned[:, j] = np.minimum(np.searchsorted(uniq, col, side="left"), uniq.size - 1)
    return binned, cuts


class _TreeBuilder:
    def __init__(self, binned, cuts, columns, hyper: GbtHyper):
        self.binned = binned
        self.cuts = cuts
        self.columns = columns
        self.hyper = hyper
        self.nbins = max(c.size for c in cuts)
        self.offset = np.arange(binned.shape[1]) * self.nbins

    def _best_split(self, rows, g, h):
        hp = self.hyper
        F = self.binned.shape[1]
        codes = (self.binned[rows] + self.offset).ravel()
        gw = np.repeat(g[rows], F)
        hw = np.repeat(h[rows], F)
        size = F * self.nbins
        G = np.bincount(codes, weights=gw, minlength=size).reshape(F, self.nbins)
        H = np.bincount(codes, weights=hw, minlength=size).reshape(F, self.nbins)
        C = np.bincount(codes, minlength=size).reshape(F, self.nbins)
        GL, HL, CL = G.cumsum(1), H.cumsum(1), C.cumsum(1)
        Gt, Ht, Ct = GL[:, -1:], HL[:, -1:], CL[:, -1:]
        GR, HR, CR = Gt - GL, Ht - HL, Ct - CL
        lam = hp.l2
        gain = GL**2 / (HL + lam) + GR**2 / (HR + lam) - Gt**2 / (Ht + lam)
        ok = (CL >= hp.min_leaf) & (CR >= hp.min_leaf)
        gain = np.where(ok, gain, -np.inf)
        flat = int(np.argmax(gain))
        j, b = divmod(flat, self.nbins)
        best = gain[j, b]
        if not np.isfinite(best) or best <= 1e-12:
            return None
        return j, b, float(best)

    def build(self, g, h, rows, gains: np.ndarray) -> Tree:
        hp = self.hyper
        tree = Tree([], [], [], [], [])

        def leaf_value(r):
            return float(-hp.learning_rate * g[r].sum() / (h[r].sum() + hp.l2))

        def grow(r, depth) -> int:
            node = len(tree.feature)
            tree.feature.append(-1)
            tree.threshold.append(0.0)
            tree.left.append(-1)
            tree.right.append(-1)
            tree.value.append(0.0)
            split = None
            if depth < hp.max_depth and r.size >= 2 * hp.min_leaf:
                split = self._best_split(r, g, h)
            if split is None:
                tree.value[node] = leaf_value(r)
                return node
            j, b, gain = split
            gains[j] += gain
            go_left = self.binned[r, j] <= b
            tree.feature[node] = int(self.columns[j])
            tree.threshold[node] = float(self.cuts[j][b])
            tree.left[node] = grow(r[go_left], depth + 1)
            tree.right[node] = grow(r[~go_left], depth + 1)
            return node

        grow(rows, 0)
        return tree


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class GradientBoostedClassifier:
    """Trees are stored as ``trees[round][class]``; feature ids index the
    full input matrix, so callers may restrict training to ``columns``."""

    def __init__(self, n_classes: int, n_inputs: int, base_scores, trees, learning_rate: float):
        self.n_classes = n_classes
        self.n_inputs = n_inputs
        self.base_scores = np.asarray(base_scores, dtype=float)
        self.trees: list[list[Tree]] = trees
        self.learning_rate = learning_rate
        self.split_gain = np.zeros(n_inputs)

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, n_classes: int, hyper: GbtHyper = GbtHyper(), columns=None) -> "GradientBoostedClassifier":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        n, p = X.shape
        columns = np.arange(p) if columns is None else np.asarray(columns, dtype=np.int64)
        counts = np.bincount(y, minlength=n_classes).astype(float)
        prior = (counts + 1.0) / (n + n_classes)
        base = np.log(prior)

        model = cls(n_classes, p, base, [], hyper.learning_rate)
        binned, cuts = _bin_columns(X[:, columns], hyper.max_bins)
        builder = _TreeBuilder(binned, cuts, columns, hyper)
        gains = np.zeros(columns.size)
        onehot = np.eye(n_classes)[y]
        scores = np.tile(base, (n, 1))
        rng = np.random.default_rng(hyper.seed)
        all_rows = np.arange(n)

        for _ in range(hyper.rounds):
            prob = softmax(scores)
            grad = prob - onehot
            hess = np.maximum(prob * (1.0 - prob), 1e-16)
            if hyper.subsample < 1.0:
                rows = np.sort(rng.choice(n, size=max(1, int(round(hyper.subsample * n))), replace=False))
            else:
                rows = all_rows
            round_trees = []
            for k in range(n_classes):
                tree = builder.build(grad[:, k], hess[:, k], rows, gains)
                scores[:, k] += tree.predict(X)
                round_trees.append(tree)
            model.trees.append(round_trees)
        model.split_gain[columns] = gains
        return model

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        scores = np.tile(self.base_scores, (X.shape[0], 1))
        for round_trees in self.trees:
            for k, tree in enumerate(round_trees):
                scores[:, k] += tree.predict(X)
        return scores

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.decision_function(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        """0-based class; the first maximum wins ties."""
        return np.argmax(self.decision_function(X), axis=1)

    def used_features(self) -> set[int]:
        return {f for rt in self.trees for t in rt for f in t.feature if f >= 0}

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "n_inputs": self.n_inputs,
            "learning_rate": self.learning_rate,
            "base_scores": self.base_scores.tolist(),
            "trees": [[t.to_dict() for t in rt] for rt in self.trees],
            "split_gain": self.split_gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GradientBoostedClassifier":
        model = cls(
            int(d["n_classes"]),
            int(d["n_inputs"]),
            d["base_scores"],
            [[Tree.from_dict(t) for t in rt] for rt in d["trees"]],
            float(d["learning_rate"]),
        )
        model.split_gain = np.asarray(d.get("split_gain", np.zeros(model.n_inputs)), dtype=float)
        return model

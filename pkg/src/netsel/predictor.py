"""Feature-based network predictor: balance, split, PCA, classifiers, evaluation.

Everything random draws from ``numpy.random.default_rng(seed)`` so a run is
reproducible from its seed alone. Labels are strings.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Optional, Sequence

import numpy as np

from .core import DegenerateCorpus, EmptyClass, MalformedFile, UnknownKind

MODEL_FORMAT = "netsel-model"
MODEL_VERSION = 1
KINDS = ("knn", "tree", "majority")


@dataclass
class LabeledCorpus:
    image_ids: list[Hashable]
    features: np.ndarray
    labels: list[str]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or len(self.features) != len(self.image_ids) or len(self.labels) != len(
            self.image_ids
        ):
            raise ValueError("image_ids, features and labels must align row by row")
        if len(set(self.image_ids)) != len(self.image_ids):
            raise ValueError("duplicate image ids in corpus")

    def __len__(self) -> int:
        return len(self.image_ids)

    def subset(self, rows: Sequence[int]) -> "LabeledCorpus":
        rows = list(rows)
        return LabeledCorpus(
            [self.image_ids[i] for i in rows],
            self.features[rows] if rows else np.empty((0, self.features.shape[1])),
            [self.labels[i] for i in rows],
        )

    def class_counts(self) -> dict[str, int]:
        return dict(sorted(Counter(self.labels).items()))


def balance(corpus: LabeledCorpus, seed: int = 42) -> LabeledCorpus:
    """Undersample every label to the rarest label's count; original row order kept."""
    counts = corpus.class_counts()
    if not counts or min(counts.values()) == 0:
        raise EmptyClass("cannot balance a corpus with an empty class")
    target = min(counts.values())
    rng = np.random.default_rng(seed)
    keep = []
    for label in counts:
        rows = [i for i, l in enumerate(corpus.labels) if l == label]
        keep.extend(rng.choice(rows, size=target, replace=False).tolist())
    return corpus.subset(sorted(keep))


def split(corpus: LabeledCorpus, train_fraction: float = 0.9, seed: int = 42) -> tuple[LabeledCorpus, LabeledCorpus]:
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(corpus)
    n_train = int(round(n * train_fraction))
    if n >= 2:
        n_train = min(max(n_train, 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    return corpus.subset(order[:n_train].tolist()), corpus.subset(order[n_train:].tolist())


@dataclass
class PcaModel:
    mean: np.ndarray
    scale: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def n_components(self) -> int:
        return len(self.components)

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "components": self.components.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        n_features = len(d["mean"])
        return cls(
            np.array(d["mean"], dtype=np.float64),
            np.array(d["scale"], dtype=np.float64),
            np.array(d["components"], dtype=np.float64).reshape(-1, n_features),
            np.array(d["explained_variance_ratio"], dtype=np.float64),
        )


def pca_fit(features: np.ndarray, variance_target: float = 0.95) -> PcaModel:
    """Standardize, eigendecompose the covariance, keep components up to ``variance_target``.

    Constant features standardize to 0. Each component's sign is fixed so its
    largest-magnitude loading is positive.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise DegenerateCorpus("PCA needs at least two rows")
    if not 0 < variance_target <= 1:
        raise ValueError(f"variance_target must be in (0, 1], got {variance_target}")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    z = (x - mean) / scale
    cov = z.T @ z / (len(z) - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order].T
    total = eigvals.sum()
    if total <= 0:
        raise DegenerateCorpus("every feature is constant")
    ratios = eigvals / total
    keep = int(np.searchsorted(np.cumsum(ratios), variance_target - 1e-12) + 1)
    keep = min(keep, len(ratios))
    comps = eigvecs[:keep]
    signs = np.sign(comps[np.arange(keep), np.abs(comps).argmax(axis=1)])
    comps = comps * signs[:, None]
    return PcaModel(mean, scale, comps, ratios[:keep])


def pca_transform(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project one vector or a row matrix onto the retained components."""
    return model.standardize(x) @ model.components.T


# -- classifiers -------------------------------------------------------------


def _majority_label(labels: Sequence[str]) -> str:
    counts = Counter(labels)
    return min(counts, key=lambda l: (-counts[l], l))


@dataclass
class MajorityClassifier:
    label: str
    kind: str = field(default="majority", init=False)

    def predict(self, x: np.ndarray) -> list[str]:
        return [self.label] * len(np.atleast_2d(x))

    def to_dict(self) -> dict:
        return {"label": self.label}

    @classmethod
    def from_dict(cls, d: dict) -> "MajorityClassifier":
        return cls(d["label"])


@dataclass
class KNearestClassifier:
    """Euclidean k-NN with plain majority vote.

    Neighbours are ranked by (distance, label, training row); vote ties go to
    the lexicographically smallest label.
    """

    points: np.ndarray
    labels: list[str]
    k: int = 5
    kind: str = field(default="knn", init=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        self.points = np.asarray(self.points, dtype=np.float64)

    def predict(self, x: np.ndarray) -> list[str]:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        k = min(self.k, len(self.points))
        label_rank = {l: i for i, l in enumerate(sorted(set(self.labels)))}
        ranks = np.array([label_rank[l] for l in self.labels])
        rows = np.arange(len(self.points))
        out = []
        for q in x:
            d2 = ((self.points - q) ** 2).sum(axis=1)
            nearest = np.lexsort((rows, ranks, d2))[:k]
            votes = Counter(self.labels[i] for i in nearest)
            out.append(min(votes, key=lambda l: (-votes[l], l)))
        return out

    def to_dict(self) -> dict:
        return {"k": self.k, "points": self.points.tolist(), "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, d: dict) -> "KNearestClassifier":
        pts = np.array(d["points"], dtype=np.float64)
        return cls(pts.reshape(len(d["labels"]), -1), list(d["labels"]), int(d["k"]))


def _gini(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=-1)
    safe = np.where(n > 0, n, 1)
    return 1.0 - ((counts / safe[..., None]) ** 2).sum(axis=-1)


@dataclass
class DecisionTreeClassifier:
    """CART-style tree on Gini impurity.

    Thresholds are midpoints between consecutive distinct values; a split
    must leave ``min_leaf`` rows per side and strictly reduce impurity. Ties
    between candidate splits go to the lower feature index, then the lower
    threshold. Nodes are stored flat; leaves have ``feature == -1``.
    """

    max_depth: int = 10
    min_leaf: int = 2
    nodes: list[dict] = field(default_factory=list)
    kind: str = field(default="tree", init=False)

    def fit(self, x: np.ndarray, labels: Sequence[str]) -> "DecisionTreeClassifier":
        x = np.asarray(x, dtype=np.float64)
        classes = sorted(set(labels))
        y = np.array([classes.index(l) for l in labels])
        self.nodes = []
        self._grow(x, y, classes, np.arange(len(y)), 0)
        return self

    def _leaf(self, y, classes, rows) -> int:
        counts = np.bincount(y[rows], minlength=len(classes))
        # argmax returns the first maximum, i.e. the lexicographically smallest label
        self.nodes.append({"feature": -1, "threshold": 0.0, "left": -1, "right": -1,
                           "label": classes[int(counts.argmax())]})
        return len(self.nodes) - 1

    def _best_split(self, x, y, n_classes, rows):
        parent = _gini(np.bincount(y[rows], minlength=n_classes))
        n = len(rows)
        best = None
        for f in range(x.shape[1]):
            order = rows[np.argsort(x[rows, f], kind="stable")]
            values = x[order, f]
            onehot = np.zeros((n, n_classes))
            onehot[np.arange(n), y[order]] = 1.0
            left = np.cumsum(onehot, axis=0)[:-1]
            right = onehot.sum(axis=0) - left
            n_left = np.arange(1, n)
            valid = (values[1:] > values[:-1]) & (n_left >= self.min_leaf) & (n - n_left >= self.min_leaf)
            if not valid.any():
                continue
            impurity = (n_left * _gini(left) + (n - n_left) * _gini(right)) / n
            impurity = np.where(valid, impurity, np.inf)
            i = int(impurity.argmin())
            gain = parent - impurity[i]
            if gain > 1e-12 and (best is None or impurity[i] < best[0] - 1e-12):
                best = (impurity[i], f, (values[i] + values[i + 1]) / 2.0)
        return best

    def _grow(self, x, y, classes, rows, depth) -> int:
        if depth >= self.max_depth or len(set(y[rows].tolist())) == 1 or len(rows) < 2 * self.min_leaf:
            return self._leaf(y, classes, rows)
        split_ = self._best_split(x, y, len(classes), rows)
        if split_ is None:
            return self._leaf(y, classes, rows)
        _, feature, threshold = split_
        node = len(self.nodes)
        self.nodes.append({"feature": feature, "threshold": float(threshold), "left": -1, "right": -1,
                           "label": None})
        go_left = x[rows, feature] <= threshold
        self.nodes[node]["left"] = self._grow(x, y, classes, rows[go_left], depth + 1)
        self.nodes[node]["right"] = self._grow(x, y, classes, rows[~go_left], depth + 1)
        return node

    def depth(self, node: int = 0) -> int:
        n = self.nodes[node]
        if n["feature"] < 0:
            return 0
        return 1 + max(self.depth(n["left"]), self.depth(n["right"]))

    def predict(self, x: np.ndarray) -> list[str]:
        out = []
        for q in np.atleast_2d(np.asarray(x, dtype=np.float64)):
            n = self.nodes[0]
            while n["feature"] >= 0:
                n = self.nodes[n["left"] if q[n["feature"]] <= n["threshold"] else n["right"]]
            out.append(n["label"])
        return out

    def to_dict(self) -> dict:
        return {"max_depth": self.max_depth, "min_leaf": self.min_leaf, "nodes": self.nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTreeClassifier":
        return cls(int(d["max_depth"]), int(d["min_leaf"]), [dict(n) for n in d["nodes"]])


Classifier = MajorityClassifier | KNearestClassifier | DecisionTreeClassifier


def train(kind: str, x: np.ndarray, labels: Sequence[str], hyper: Optional[dict] = None, seed: int = 42) -> Classifier:
    """Fit one classifier. All three kinds are deterministic; ``seed`` is accepted for API symmetry."""
    hyper = dict(hyper or {})
    if len(labels) == 0:
        raise DegenerateCorpus("empty training set")
    if kind == "majority":
        return MajorityClassifier(_majority_label(labels))
    if kind == "knn":
        return KNearestClassifier(np.asarray(x, dtype=np.float64), list(labels), int(hyper.get("k", 5)))
    if kind == "tree":
        return DecisionTreeClassifier(int(hyper.get("max_depth", 10)), int(hyper.get("min_leaf", 2))).fit(x, labels)
    raise UnknownKind(f"unknown classifier kind {kind!r}; expected one of {KINDS}")


@dataclass
class AccuracyReport:
    kind: str
    accuracy: float
    baseline_accuracy: float
    confusion: dict[tuple[str, str], int]
    n: int

    @property
    def delta(self) -> float:
        return self.accuracy - self.baseline_accuracy


def evaluate(model: Classifier, x: np.ndarray, labels: Sequence[str], baseline: Optional[Classifier] = None) -> AccuracyReport:
    """Top-1 accuracy plus confusion counts ``{(true, predicted): n}``.

    ``baseline`` is usually the Majority model fit on the same training set;
    without one the test set's own majority label is used.
    """
    if len(labels) == 0:
        raise DegenerateCorpus("empty test set")
    predicted = model.predict(x)
    confusion = dict(sorted(Counter(zip(labels, predicted)).items()))
    accuracy = sum(t == p for t, p in zip(labels, predicted)) / len(labels)
    base = baseline or MajorityClassifier(_majority_label(labels))
    base_pred = base.predict(x)
    base_acc = sum(t == p for t, p in zip(labels, base_pred)) / len(labels)
    return AccuracyReport(model.kind, accuracy, base_acc, confusion, len(labels))


def permuted_features(corpus: LabeledCorpus, seed: int = 42) -> LabeledCorpus:
    """Negative control: rows keep their labels but receive another row's features."""
    perm = np.random.default_rng(seed).permutation(len(corpus))
    return LabeledCorpus(corpus.image_ids, corpus.features[perm], corpus.labels)


@dataclass
class TrainingRun:
    pca: PcaModel
    models: dict[str, Classifier]
    reports: list[AccuracyReport]
    n_train: int


def run_training(
    corpus: LabeledCorpus,
    kinds: Sequence[str] = KINDS,
    hyper: Optional[dict] = None,
    seed: int = 42,
    train_fraction: float = 0.9,
    variance_target: float = 0.95,
    rebalance: bool = True,
) -> TrainingRun:
    """Split, rebalance the training part, fit PCA and each classifier, score on the held-out part.

    The Majority baseline is fit before rebalancing so it predicts the label
    that actually dominates the corpus.
    """
    train_set, test_set = split(corpus, train_fraction, seed)
    majority = train("majority", train_set.features, train_set.labels)
    fit_set = balance(train_set, seed) if rebalance else train_set
    pca = pca_fit(fit_set.features, variance_target)
    x_fit = pca_transform(pca, fit_set.features)
    x_test = pca_transform(pca, test_set.features)
    models, reports = {}, []
    for kind in kinds:
        model = majority if kind == "majority" else train(kind, x_fit, fit_set.labels, hyper, seed)
        models[kind] = model
        reports.append(evaluate(model, x_test, test_set.labels, baseline=majority))
    return TrainingRun(pca, models, reports, len(fit_set))


# -- persistence -------------------------------------------------------------


@dataclass
class Pipeline:
    """PCA followed by a classifier; what ``train`` writes and ``predict`` reads."""

    pca: PcaModel
    classifier: Classifier
    feature_names: list[str]

    def predict(self, features: np.ndarray) -> list[str]:
        return self.classifier.predict(pca_transform(self.pca, np.atleast_2d(features)))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "feature_names": self.feature_names,
            "pca": self.pca.to_dict(),
            "classifier": {"kind": self.classifier.kind, **self.classifier.to_dict()},
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "Pipeline":
        if d.get("format") != MODEL_FORMAT:
            raise MalformedFile("not a netsel model file")
        if d.get("version") != MODEL_VERSION:
            raise MalformedFile(f"unsupported model version {d.get('version')!r}")
        c = dict(d["classifier"])
        kind = c.pop("kind")
        loaders = {"majority": MajorityClassifier, "knn": KNearestClassifier, "tree": DecisionTreeClassifier}
        if kind not in loaders:
            raise UnknownKind(f"unknown classifier kind {kind!r}")
        return cls(PcaModel.from_dict(d["pca"]), loaders[kind].from_dict(c), list(d["feature_names"]))

    @classmethod
    def load(cls, path) -> "Pipeline":
        try:
            with open(Path(path)) as f:
                return cls.from_dict(json.load(f))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise MalformedFile(f"{path}: {exc!r}") from exc

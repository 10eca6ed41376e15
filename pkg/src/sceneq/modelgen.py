"""Distilled-model predicate construction.

Features come from a pluggable extractor: attribute units embed the
object crop plus its class-name text (D+T dims); relationship units embed
three patch versions (pair, masked-except-subject, masked-except-target)
plus both class names (3D+2T dims), which keeps direction visible to the
classifier. The classifier is a one-hidden-layer rectifier network with a
logistic output trained by full-batch gradient descent on class-weighted
cross-entropy, written out explicitly so gradients can be checked against
finite differences. Active learning rounds label the most uncertain pool
units and retrain from scratch with the same seed.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .errors import DegenerateLabelsError, LabelerError, TrainingError
from .storage import TupleView, sample_tuples
from .udfs import ModelArtifact, UdfCandidate, UdfKind, UdfSignature


@dataclass
class DistillConfig:
    n_labeled: int = 100
    al_rounds: int = 3
    al_batch: int = 10
    al_pool: int = 500
    hidden_dim: int = 128
    learning_rate: float = 1.0
    epochs: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.n_labeled < 2:
            raise ValueError("n_labeled must be >= 2")
        for name in ("al_batch", "al_pool", "hidden_dim", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.al_rounds < 0:
            raise ValueError("al_rounds must be >= 0")


class FeatureExtractor(Protocol):
    identity: str
    image_dim: int
    text_dim: int

    def embed_image(self, image: np.ndarray) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...


_EXTRACTORS: dict[str, FeatureExtractor] = {}


def register_extractor(extractor: FeatureExtractor):
    _EXTRACTORS[extractor.identity] = extractor


def get_extractor(identity: str) -> FeatureExtractor:
    if identity not in _EXTRACTORS:
        raise KeyError(f"no registered feature extractor {identity!r}; "
                       f"known: {sorted(_EXTRACTORS)}")
    return _EXTRACTORS[identity]


def feature_dim(extractor: FeatureExtractor, arity: int) -> int:
    d, t = extractor.image_dim, extractor.text_dim
    return d + t if arity == 1 else 3 * d + 2 * t


def build_features(unit: TupleView, extractor: FeatureExtractor,
                   db=None) -> np.ndarray:
    """Feature vector for one unit.

    Metadata-driven extractors may provide embed_unit_parts(unit) and skip
    pixel loading entirely; pixel extractors receive the actual patches.
    """
    if hasattr(extractor, "embed_unit_parts"):
        parts = list(extractor.embed_unit_parts(unit))
    elif unit.arity == 1:
        parts = [extractor.embed_image(unit.patch())]
    else:
        parts = [extractor.embed_image(unit.patch()),
                 extractor.embed_image(unit.patch(mask="keep_first")),
                 extractor.embed_image(unit.patch(mask="keep_second"))]
    parts.append(extractor.embed_text(unit.o0.oname))
    if unit.arity == 2:
        parts.append(extractor.embed_text(unit.o1.oname))
    vec = np.concatenate(parts)
    expected = feature_dim(extractor, unit.arity)
    if vec.shape != (expected,):
        raise ValueError(f"extractor {extractor.identity!r} produced "
                         f"{vec.shape}, expected ({expected},)")
    return vec


def features_matrix(units: Sequence[TupleView],
                    extractor: FeatureExtractor) -> np.ndarray:
    return np.stack([build_features(u, extractor) for u in units])


# ----------------------------------------------------------------- training


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -60, 60)))


def loss_and_grads(w1, b1, w2, b2, x, y, sample_weights):
    """Weighted binary cross-entropy and its analytic gradients.

    x: (n, d); y: (n,) in {0, 1}; sample_weights: (n,).
    Hidden layer is a rectifier, output logistic.
    """
    n = x.shape[0]
    hidden_pre = x @ w1.T + b1
    hidden = np.maximum(hidden_pre, 0.0)
    z = (hidden @ w2.T + b2).ravel()
    # log(1 + e^z) - y*z, stably
    losses = np.logaddexp(0.0, z) - y * z
    loss = float(np.sum(sample_weights * losses) / n)
    dz = sample_weights * (_sigmoid(z) - y) / n            # (n,)
    dw2 = (dz[None, :] @ hidden)                            # (1, h)
    db2 = np.array([dz.sum()])
    dhidden = np.outer(dz, w2.ravel())
    dhidden[hidden_pre <= 0] = 0.0
    dw1 = dhidden.T @ x
    db1 = dhidden.sum(axis=0)
    return loss, (dw1, db1, dw2, db2)


def class_weights(y: np.ndarray) -> np.ndarray:
    """Inverse-frequency weights, mean-normalized."""
    n = len(y)
    n_pos = int(y.sum())
    n_neg = n - n_pos
    w_pos = n / (2.0 * n_pos)
    w_neg = n / (2.0 * n_neg)
    return np.where(y > 0.5, w_pos, w_neg)


def train_classifier(features: np.ndarray, labels: Sequence[bool],
                     config: DistillConfig, extractor_id: str = "",
                     ) -> ModelArtifact:
    model, _ = train_with_history(features, labels, config, extractor_id)
    return model


def train_with_history(features, labels, config: DistillConfig,
                       extractor_id: str = ""):
    """Training entry point that also reports the per-epoch loss curve.

    The step size backtracks (halves) whenever a step would raise the loss
    by more than 1e-6, so the recorded curve is non-increasing within that
    slack for any input.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("features and labels disagree on sample count")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise DegenerateLabelsError(
            "training needs at least one positive and one negative")
    sw = class_weights(y)
    d = x.shape[1]
    h = config.hidden_dim
    rng = np.random.default_rng(config.seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / d), size=(h, d))
    b1 = np.zeros(h)
    w2 = rng.normal(0.0, np.sqrt(2.0 / h), size=(1, h))
    b2 = np.zeros(1)
    loss, grads = loss_and_grads(w1, b1, w2, b2, x, y, sw)
    history = [loss]
    for epoch in range(config.epochs):
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        lr = config.learning_rate
        for _ in range(40):
            n_w1 = w1 - lr * grads[0]
            n_b1 = b1 - lr * grads[1]
            n_w2 = w2 - lr * grads[2]
            n_b2 = b2 - lr * grads[3]
            new_loss, new_grads = loss_and_grads(n_w1, n_b1, n_w2, n_b2,
                                                 x, y, sw)
            if new_loss <= loss + 1e-6:
                break
            lr *= 0.5
        w1, b1, w2, b2 = n_w1, n_b1, n_w2, n_b2
        loss, grads = new_loss, new_grads
        history.append(loss)
    model = ModelArtifact(dims=(d, h, 1), weights=[w1, w2], biases=[b1, b2],
                          extractor_id=extractor_id)
    return model, history


# ----------------------------------------------------------- data collection


@dataclass
class TrainingSet:
    units: list[TupleView]
    labels: list[bool]
    class_counts: Counter = field(default_factory=Counter)

    def extend(self, units, labels):
        self.units.extend(units)
        self.labels.extend(labels)


def collect_training_set(signature: UdfSignature, description: str, db,
                         config: DistillConfig, gateway,
                         class_filter: Optional[set] = None) -> TrainingSet:
    """Object-aware bootstrap sample labeled by the vision-language client.

    Units whose labeling fails are skipped; a single-class outcome raises
    DegenerateLabelsError since no classifier can be trained from it.
    """
    from .storage import active_domains

    if class_filter is None:
        onames = active_domains(db)[0]
        class_filter = gateway.object_classes(signature, description, onames)
    units = sample_tuples(db, signature.arity, config.n_labeled,
                          class_filter=class_filter, seed=config.seed)
    kept, labels = [], []
    for unit in units:
        try:
            labels.append(bool(gateway.label(unit, signature, description)))
        except LabelerError:
            continue
        kept.append(unit)
    counts = Counter(u.o0.oname for u in kept)
    if sum(labels) == 0 or sum(labels) == len(labels):
        raise DegenerateLabelsError(
            f"labels for {signature.name!r} are all "
            f"{'positive' if labels and labels[0] else 'negative'}")
    return TrainingSet(units=kept, labels=labels, class_counts=counts)


def active_learning_loop(model: ModelArtifact, training_set: TrainingSet,
                         pool: list[TupleView], config: DistillConfig,
                         labeler: Callable[[TupleView], bool],
                         extractor: FeatureExtractor) -> ModelArtifact:
    """Uncertainty-driven refinement.

    Each round scores the remaining pool by |p - 0.5| (ties by unit id),
    labels the al_batch most uncertain units, and retrains from scratch
    with the same seed. An exhausted pool just ends the loop early.
    """
    pool = list(pool)
    for _ in range(config.al_rounds):
        if not pool:
            break
        probs = model.predict_proba(features_matrix(pool, extractor))
        order = sorted(range(len(pool)),
                       key=lambda i: (abs(probs[i] - 0.5), pool[i].uid))
        batch_idx = set(order[:config.al_batch])
        batch = [pool[i] for i in sorted(batch_idx)]
        pool = [u for i, u in enumerate(pool) if i not in batch_idx]
        new_units, new_labels = [], []
        for unit in batch:
            try:
                new_labels.append(bool(labeler(unit)))
            except LabelerError:
                continue
            new_units.append(unit)
        training_set.extend(new_units, new_labels)
        model = train_classifier(features_matrix(training_set.units, extractor),
                                 training_set.labels, config,
                                 extractor_id=extractor.identity)
    return model


def distill_udf(signature: UdfSignature, description: str, db,
                config: DistillConfig, gateway,
                extractor: FeatureExtractor) -> UdfCandidate:
    """Full distilled-model pipeline: bootstrap labels, train, refine."""
    training_set = collect_training_set(signature, description, db, config,
                                        gateway)
    model = train_classifier(features_matrix(training_set.units, extractor),
                             training_set.labels, config,
                             extractor_id=extractor.identity)
    labeled_uids = {u.uid for u in training_set.units}
    pool_seed = config.seed + 1
    pool = [u for u in sample_tuples(db, signature.arity, config.al_pool,
                                     seed=pool_seed)
            if u.uid not in labeled_uids]
    model = active_learning_loop(
        model, training_set, pool, config,
        labeler=lambda unit: gateway.label(unit, signature, description),
        extractor=extractor)
    return UdfCandidate(signature=signature, kind=UdfKind.DISTILLED_MODEL,
                        interpretation="distilled classifier over extractor "
                                       "features",
                        model=model,
                        label=f"{signature.name}:model")

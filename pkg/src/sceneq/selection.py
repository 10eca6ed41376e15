"""Budgeted active-learning choice among candidate predicate
implementations, with an always-available dummy fallback.

Each iteration samples n_s units from the unlabeled pool and picks one to
label: while positives lag negatives it hunts a likely positive, while
negatives are below t_n a likely negative (vision-language verdicts take
priority over the candidates' weighted vote in both hunts), and otherwise
the unit the weighted candidates disagree on most. After every label the
per-candidate weights become their F1 over the labeled set; the final
choice is the argmax weight with a deterministic tie-break that prefers
non-dummy candidates.

The session object is resumable: it exposes one pending unit at a time
and accepts labels or skips, so an interactive HTTP driver and the batch
driver produce identical trajectories for identical labels.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

from .errors import LabelerError, LabelerSkip
from .storage import TupleView
from .udfs import UdfCandidate, UdfKind, eval_udf, make_dummy


@dataclass
class SelectionConfig:
    b: int = 20
    n_s: int = 100
    t_n: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.b < 1:
            raise ValueError("b must be >= 1")
        if self.n_s < 1:
            raise ValueError("n_s must be >= 1")
        if self.t_n < 0:
            raise ValueError("t_n must be >= 0")


class Labeler(Protocol):
    provenance: str

    def label(self, unit: TupleView) -> bool: ...


def phase_for(n_pos: int, n_neg: int, t_n: int) -> str:
    """The iteration's sampling phase as a pure function of labeled-set
    sizes: positive-seek / negative-seek / disagreement."""
    if n_pos < n_neg:
        return "positive"
    if n_neg < t_n:
        return "negative"
    return "disagreement"


def vote_fraction(unit: TupleView, candidates: Sequence[UdfCandidate],
                  weights: Sequence[float], predict=None) -> float:
    """Weighted fraction of candidates voting true; uniform weights when
    all weights are zero (the vote is scale-invariant otherwise)."""
    predict = predict or (lambda c, u: eval_udf(c, u))
    total = sum(weights)
    if total <= 0:
        weights = [1.0] * len(candidates)
        total = float(len(candidates))
    acc = 0.0
    for cand, w in zip(candidates, weights):
        if w > 0 and predict(cand, unit):
            acc += w
    return acc / total


def disagreement_score(unit: TupleView, candidates: Sequence[UdfCandidate],
                       weights: Sequence[float], predict=None) -> float:
    """Weighted-vote variance p(1-p): 0 when unanimous, 0.25 at an even
    split."""
    p = vote_fraction(unit, candidates, weights, predict)
    return p * (1.0 - p)


def likelihood_rank(units: Sequence[TupleView],
                    candidates: Sequence[UdfCandidate],
                    weights: Sequence[float],
                    vlm: Callable[[TupleView], bool],
                    direction: str, predict=None) -> TupleView:
    """The sampled unit most likely in `direction` ('positive'/'negative').

    Vision-language verdicts trump the candidates' vote: the lowest-id
    unit whose verdict matches wins; with no match, the vote fraction
    decides (max for positive, min for negative; ties to lowest id)."""
    if not units:
        raise ValueError("units must be non-empty")
    want = direction == "positive"
    matching = []
    for unit in units:
        try:
            verdict = vlm(unit)
        except LabelerError:
            continue
        if verdict == want:
            matching.append(unit)
    if matching:
        return min(matching, key=lambda u: u.uid)
    sign = -1.0 if want else 1.0
    return min(units, key=lambda u: (sign * vote_fraction(u, candidates,
                                                          weights, predict),
                                     u.uid))


def f1_score(candidate: UdfCandidate, positives: Sequence[TupleView],
             negatives: Sequence[TupleView], predict=None) -> float:
    """F1 of the candidate's predictions against the labeled sets; 0 when
    precision + recall is 0."""
    if not positives and not negatives:
        raise ValueError("labeled set is empty")
    predict = predict or (lambda c, u: eval_udf(c, u))
    tp = sum(1 for u in positives if predict(candidate, u))
    fn = len(positives) - tp
    fp = sum(1 for u in negatives if predict(candidate, u))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


@dataclass
class IterationRecord:
    iteration: int
    phase: str
    unit_uid: tuple
    label: bool
    weights: tuple[float, ...]


@dataclass
class SelectionReport:
    candidate_labels: tuple[str, ...]
    chosen_index: int = -1
    chosen_label: str = ""
    weights: tuple[float, ...] = ()
    iterations: list[IterationRecord] = field(default_factory=list)
    budget: int = 0
    budget_used: int = 0
    warning: str = ""

    def to_record(self) -> dict:
        return {
            "candidates": list(self.candidate_labels),
            "chosen_index": self.chosen_index,
            "chosen": self.chosen_label,
            "weights": [round(w, 12) for w in self.weights],
            "budget": self.budget,
            "budget_used": self.budget_used,
            "warning": self.warning,
            "iterations": [
                {"iteration": it.iteration, "phase": it.phase,
                 "unit": list(it.unit_uid), "label": it.label,
                 "weights": [round(w, 12) for w in it.weights]}
                for it in self.iterations
            ],
        }


class SelectionSession:
    """Resumable run of the selection loop over one proposed predicate.

    Construction primes the first pending unit; provide_label/skip advance
    the state machine until the budget or pool runs out."""

    def __init__(self, candidates: Sequence[UdfCandidate], db, arity: int,
                 gateway, config: SelectionConfig,
                 class_filter: Optional[set] = None):
        if not candidates:
            raise ValueError("need at least one candidate")
        self.candidates = list(candidates)
        if not any(c.kind is UdfKind.DUMMY for c in self.candidates):
            self.candidates.append(make_dummy(candidates[0].signature))
        labels = [c.label for c in self.candidates]
        if len(set(labels)) != len(labels):
            raise ValueError(f"candidate labels must be unique, got {labels}")
        self.signature = self.candidates[0].signature
        self.db = db
        self.arity = arity
        self.gateway = gateway
        self.config = config
        self.rng = random.Random(config.seed)
        self.pool = db.eligible_units(arity, class_filter)
        self.positives: list[TupleView] = []
        self.negatives: list[TupleView] = []
        self.weights = [1.0 / len(self.candidates)] * len(self.candidates)
        self.report = SelectionReport(
            candidate_labels=tuple(c.label for c in self.candidates),
            budget=config.b)
        self._views: dict[tuple, TupleView] = {}
        self._preds: dict[tuple, bool] = {}
        self.pending: Optional[TupleView] = None
        self.phase: str = ""
        self.done = False
        if not self.pool:
            self._finish(warning="pool exhausted before any label")
        else:
            self._advance()

    # ------------------------------------------------------------ helpers

    def _view(self, uid) -> TupleView:
        if uid not in self._views:
            self._views[uid] = self.db.make_tuple(*uid)
        return self._views[uid]

    def _predict(self, candidate, unit) -> bool:
        key = (candidate.label, unit.uid)
        if key not in self._preds:
            self._preds[key] = eval_udf(candidate, unit)
        return self._preds[key]

    def _vlm(self, unit) -> bool:
        return self.gateway.label(unit, self.signature,
                                  self.signature.description)

    # ----------------------------------------------------------- lifecycle

    def _advance(self):
        if self.report.budget_used >= self.config.b or not self.pool:
            self._finish()
            return
        n = min(self.config.n_s, len(self.pool))
        sampled = [self._view(uid) for uid in self.rng.sample(self.pool, n)]
        self.phase = phase_for(len(self.positives), len(self.negatives),
                               self.config.t_n)
        if self.phase in ("positive", "negative"):
            self.pending = likelihood_rank(sampled, self.candidates,
                                           self.weights, self._vlm,
                                           self.phase, self._predict)
        else:
            self.pending = max(
                sampled,
                key=lambda u: (disagreement_score(u, self.candidates,
                                                  self.weights,
                                                  self._predict),
                               tuple(-v for v in u.uid)))
        # ties break toward the lowest unit id via the negated uid key

    def _finish(self, warning: str = ""):
        self.done = True
        self.pending = None
        if self.report.budget_used == 0:
            # nothing was labeled, so no candidate earned trust
            best = next(i for i, c in enumerate(self.candidates)
                        if c.kind is UdfKind.DUMMY)
            warning = warning or "no labels consumed"
        else:
            best = max(range(len(self.candidates)),
                       key=lambda i: (self.weights[i],
                                      self.candidates[i].kind
                                      is not UdfKind.DUMMY,
                                      -i))
        self.report.chosen_index = best
        self.report.chosen_label = self.candidates[best].label
        self.report.weights = tuple(self.weights)
        if warning:
            self.report.warning = warning

    def provide_label(self, uid, label: bool):
        if self.done or self.pending is None:
            raise LabelerError("session is not awaiting a label")
        if tuple(uid) != self.pending.uid:
            raise LabelerError(f"stale unit {uid}; pending is "
                               f"{self.pending.uid}")
        unit = self.pending
        (self.positives if label else self.negatives).append(unit)
        self.pool.remove(unit.uid)
        self.report.budget_used += 1
        self.weights = [f1_score(c, self.positives, self.negatives,
                                 self._predict)
                        for c in self.candidates]
        self.report.iterations.append(IterationRecord(
            iteration=self.report.budget_used, phase=self.phase,
            unit_uid=unit.uid, label=bool(label),
            weights=tuple(self.weights)))
        self._advance()

    def skip(self, uid=None):
        """Decline the pending unit: it leaves the pool, budget is kept."""
        if self.done or self.pending is None:
            raise LabelerError("session is not awaiting a label")
        if uid is not None and tuple(uid) != self.pending.uid:
            raise LabelerError(f"stale unit {uid}; pending is "
                               f"{self.pending.uid}")
        self.pool.remove(self.pending.uid)
        if self.pool:
            self._advance()
        else:
            self._finish(warning="pool exhausted"
                         if self.report.budget_used == 0 else "")

    def result(self) -> tuple[UdfCandidate, SelectionReport]:
        if not self.done:
            raise LabelerError("session still awaiting labels")
        return self.candidates[self.report.chosen_index], self.report


def select_udf(candidates: Sequence[UdfCandidate], db, arity: int,
               labeler: Labeler, gateway, config: SelectionConfig,
               class_filter: Optional[set] = None,
               ) -> tuple[UdfCandidate, SelectionReport]:
    """Batch driver: run a session to completion against a labeler.

    Labeler skips and failures drop the unit without consuming budget."""
    session = SelectionSession(candidates, db, arity, gateway, config,
                               class_filter)
    while not session.done:
        unit = session.pending
        try:
            label = labeler.label(unit)
        except (LabelerSkip, LabelerError):
            session.skip()
            continue
        session.provide_label(unit.uid, label)
    return session.result()

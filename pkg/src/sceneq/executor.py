"""Query evaluation over the scene-graph store.

A video matches when one injective assignment of query variables to its
object ids admits, for every region graph in order, a window of at least
``duration`` consecutive frames on which all of the graph's predicates
hold, with windows strictly ordered (a window must end before the next
one starts).

Two implementations share only the unit-level predicate semantics:
``evaluate`` precomputes per-predicate truth tables and chains windows
greedily by earliest end; ``evaluate_naive`` exhaustively enumerates
assignments and window tuples behind a size guard and exists purely as a
test oracle for ``evaluate``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .dsl import Query, validate
from .errors import NaiveSizeError, UnresolvedPredicateError
from .udfs import eval_udf

NAIVE_GUARD = 10 ** 6


@dataclass(frozen=True)
class MatchWitness:
    vid: int
    assignment: dict
    windows: tuple[tuple[int, int], ...]


def _check_resolved(query: Query, registry):
    missing = validate(query, registry)
    if missing:
        raise UnresolvedPredicateError(
            "unresolved predicates: "
            + ", ".join(f"{u.name}/{u.arity}" for u in missing))


def _predicate_table(db, registry, vid, pred):
    """Frame-level truth of one predicate over all unit instantiations in
    one video: {(fid, oids...) -> bool} for every eligible instantiation."""
    udf = registry.lookup(pred.name)
    table = {}
    for fid in db.fids(vid):
        oids = sorted(db.objects_in_frame(vid, fid))
        if pred.arity == 1:
            for oid in oids:
                table[(fid, oid)] = eval_udf(udf, db.make_tuple(vid, fid, oid))
        else:
            for a in oids:
                for b in oids:
                    if a != b:
                        table[(fid, a, b)] = eval_udf(
                            udf, db.make_tuple(vid, fid, a, b))
    return table


def _assignments(variables, oids):
    """Injective assignments of query variables to object ids."""
    return [dict(zip([v.index for v in variables], combo))
            for combo in itertools.permutations(oids, len(variables))]


def _ok_frames(graph, assignment, tables, fids):
    """Frames on which every predicate of the graph holds under the
    assignment; predicates over objects absent from a frame are false."""
    ok = []
    for fid in fids:
        good = True
        for pred in graph.predicates:
            if pred.arity == 1:
                key = (fid, assignment[pred.args[0].index])
            else:
                key = (fid, assignment[pred.args[0].index],
                       assignment[pred.args[1].index])
            if not tables[pred.name].get(key, False):
                good = False
                break
        ok.append(good)
    return ok


def _runs(ok):
    """Maximal runs of consecutive True as (start, end) frame indices."""
    runs = []
    start = None
    for i, val in enumerate(ok):
        if val and start is None:
            start = i
        elif not val and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(ok) - 1))
    return runs


def _earliest_end_chain(graphs, oks):
    """Greedy feasibility: for each graph in order, take the earliest
    window of exactly its duration starting after the previous end."""
    windows = []
    next_start = 0
    for graph, ok in zip(graphs, oks):
        d = graph.duration
        found = None
        for s, e in _runs(ok):
            lo = max(s, next_start)
            if lo + d - 1 <= e:
                found = (lo, lo + d - 1)
                break
        if found is None:
            return None
        windows.append(found)
        next_start = found[1] + 1
    return tuple(windows)


def evaluate(query: Query, db, registry) -> set[int]:
    """Video ids admitting a match witness."""
    _check_resolved(query, registry)
    variables = query.variables()
    result = set()
    for vid in db.vids:
        fids = db.fids(vid)
        oids = sorted({oid for fid in fids
                       for oid in db.objects_in_frame(vid, fid)})
        if len(oids) < len(variables) or not fids:
            continue
        tables = {}
        for pred in query.predicates():
            if pred.name not in tables:
                tables[pred.name] = _predicate_table(db, registry, vid, pred)
        for assignment in _assignments(variables, oids):
            oks = [_ok_frames(g, assignment, tables, fids)
                   for g in query.graphs]
            if _earliest_end_chain(query.graphs, oks) is not None:
                result.add(vid)
                break
    return result


def find_witness(query: Query, db, registry, vid: int):
    """First witness in a given video under deterministic enumeration
    order, or None. Diagnostic companion to evaluate()."""
    _check_resolved(query, registry)
    variables = query.variables()
    fids = db.fids(vid)
    oids = sorted({oid for fid in fids
                   for oid in db.objects_in_frame(vid, fid)})
    if len(oids) < len(variables) or not fids:
        return None
    tables = {pred.name: _predicate_table(db, registry, vid, pred)
              for pred in query.predicates()}
    for assignment in _assignments(variables, oids):
        oks = [_ok_frames(g, assignment, tables, fids) for g in query.graphs]
        windows = _earliest_end_chain(query.graphs, oks)
        if windows is not None:
            return MatchWitness(vid=vid, assignment=dict(assignment),
                                windows=windows)
    return None


# ----------------------------------------------------------------- oracle


def _all_windows(ok, duration):
    """Every (start, end) with end-start+1 >= duration and all frames in
    between true, in start-then-end order."""
    windows = []
    for s, e in _runs(ok):
        for a in range(s, e - duration + 2):
            for b in range(a + duration - 1, e + 1):
                windows.append((a, b))
    return windows


def _naive_window_lists(query: Query, db, registry):
    """Per-video, per-assignment valid-window lists plus the total
    assignment x window-combination count."""
    variables = query.variables()
    memo = {}

    def unit_true(pred, vid, fid, oids_):
        key = (pred.name, vid, fid, oids_)
        if key not in memo:
            objs = db.objects_in_frame(vid, fid)
            if any(o not in objs for o in oids_):
                memo[key] = False
            else:
                memo[key] = eval_udf(registry.lookup(pred.name),
                                     db.make_tuple(vid, fid, *oids_))
        return memo[key]

    by_vid = {}
    total_combos = 0
    for vid in db.vids:
        fids = db.fids(vid)
        oids = sorted({oid for fid in fids
                       for oid in db.objects_in_frame(vid, fid)})
        if len(oids) < len(variables) or not fids:
            continue
        per_assignment = []
        for assignment in _assignments(variables, oids):
            window_lists = []
            for graph in query.graphs:
                ok = []
                for fid in fids:
                    ok.append(all(unit_true(
                        pred, vid, fid,
                        tuple(assignment[v.index] for v in pred.args))
                        for pred in graph.predicates))
                window_lists.append(_all_windows(ok, graph.duration))
            combos = 1
            for wl in window_lists:
                combos *= max(1, len(wl))
            total_combos += combos
            per_assignment.append(window_lists)
        by_vid[vid] = per_assignment
    return by_vid, total_combos


def naive_combo_count(query: Query, db, registry) -> int:
    """Size estimate evaluate_naive would face; lets tests refuse queries
    that would trip the guard before paying for the enumeration."""
    _check_resolved(query, registry)
    _, total = _naive_window_lists(query, db, registry)
    return total


def evaluate_naive(query: Query, db, registry) -> set[int]:
    """Brute-force oracle: enumerate injective assignments and all valid
    window tuples per graph (strictly ordered), refusing inputs whose
    assignment x window-combination count exceeds NAIVE_GUARD."""
    _check_resolved(query, registry)
    by_vid, total_combos = _naive_window_lists(query, db, registry)
    if total_combos > NAIVE_GUARD:
        raise NaiveSizeError(
            f"{total_combos} assignment x window combinations exceed "
            f"the {NAIVE_GUARD} guard")

    def chain(window_lists, gi, min_start):
        if gi == len(window_lists):
            return True
        for s, e in window_lists[gi]:
            if s >= min_start and chain(window_lists, gi + 1, e + 1):
                return True
        return False

    result = set()
    for vid, per_assignment in by_vid.items():
        for window_lists in per_assignment:
            if chain(window_lists, 0, 0):
                result.add(vid)
                break
    return result

"""Selection-quality study: how often budgeted active learning picks the
best (or a near-best) candidate from a planted-accuracy lineup.

    python scripts/selection_study.py [--seeds 50] [--budget 20]

Prints the fraction of runs choosing the best candidate and the fraction
within 80% of the best candidate's true F1.
"""

import argparse
import time

from sceneq import testkit
from sceneq.gateway import Gateway, MockClient
from sceneq.selection import SelectionConfig, select_udf
from sceneq.udfs import UdfKind, eval_udf


class OracleUser:
    provenance = "oracle"

    def __init__(self, rules, concept):
        self.rules = rules
        self.concept = concept

    def label(self, unit):
        return self.rules.holds_view(self.concept, unit)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, default=50)
    parser.add_argument("--budget", type=int, default=20)
    parser.add_argument("--concept", default="near")
    parser.add_argument("--accuracies", type=float, nargs="*",
                        default=[0.95, 0.8, 0.6, 0.5])
    args = parser.parse_args()

    dataset = testkit.build_dataset(testkit.SyntheticSpec(seed=42))
    db = dataset.to_db()
    views = [db.make_tuple(*u) for u in db.eligible_units(2)[:2000]]
    truth = {v.uid: dataset.rules.holds_view(args.concept, v) for v in views}

    def true_f1(cand):
        tp = fp = fn = 0
        for v in views:
            pred = (True if cand.kind is UdfKind.DUMMY
                    else eval_udf(cand, v))
            tp += pred and truth[v.uid]
            fp += pred and not truth[v.uid]
            fn += (not pred) and truth[v.uid]
        return 2 * tp / (2 * tp + fp + fn) if tp else 0.0

    picked_best = 0
    within_80 = 0
    t0 = time.time()
    for seed in range(args.seeds):
        cands = [testkit.planted_candidate(args.concept, 2, acc,
                                           salt=seed * 11 + i)
                 for i, acc in enumerate(args.accuracies)]
        gw = Gateway(MockClient(rules=dataset.rules))
        chosen, report = select_udf(
            cands, db, 2, OracleUser(dataset.rules, args.concept), gw,
            SelectionConfig(b=args.budget, seed=seed))
        scores = {c.label: true_f1(c) for c in cands}
        best = max(scores.values())
        got = true_f1(chosen)
        picked_best += got >= best - 1e-12
        within_80 += got >= 0.8 * best
    n = args.seeds
    print(f"concept={args.concept} budget={args.budget} "
          f"candidates={args.accuracies} + dummy")
    print(f"best pick rate:       {picked_best}/{n} "
          f"({100 * picked_best / n:.0f}%)")
    print(f"within 80% of best:   {within_80}/{n} "
          f"({100 * within_80 / n:.0f}%)")
    print(f"elapsed: {time.time() - t0:.1f}s")


if __name__ == "__main__":
    main()

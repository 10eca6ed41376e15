"""Build the parity-test workspace: a small dataset with one withheld
concept, mock fixtures, per-seed server configs, and the oracle
batch-mode results the UI-driven sessions must reproduce.

The withheld concepts are restricted to sign-comparison rules
(left_of/right_of/behind/front_of) so the browser-side oracle can
recompute labels from bbox metadata with bit-identical arithmetic.

Usage: python3 prepare_parity.py <out_dir>
"""

import json
import sys
from pathlib import Path

from sceneq import testkit
from sceneq.orchestrator import Engine, PipelineConfig

SEEDS = [0, 1, 2]
SIGN_CONCEPTS = {"left_of", "right_of", "behind", "front_of"}


def pick_case(dataset):
    for suite_seed in range(50):
        cases = testkit.build_e2e_suite(dataset, n_cases=1, seed=suite_seed)
        if set(cases[0].missing) <= SIGN_CONCEPTS:
            return cases[0]
    raise RuntimeError("no sign-comparison case found")


def main():
    out = Path(sys.argv[1])
    out.mkdir(parents=True, exist_ok=True)
    dataset = testkit.build_dataset(testkit.SyntheticSpec(
        seed=42, n_videos=6, n_frames=32, n_objects=4))
    case = pick_case(dataset)
    manifest = dataset.write(out / "data", exclude_concepts=case.missing)
    fixture = testkit.write_mock_fixture(
        out / "fixtures.json",
        testkit.mock_fixture_for_cases([case], dataset))

    expected = {}
    for seed in SEEDS:
        raw = {
            "manifest": str(manifest),
            "fixtures": str(fixture),
            "strategy": "program",
            "labeler": "interactive",
            "seed": seed,
            "selection": {"b": 8, "seed": seed},
            "programgen": {"seed": seed},
            "distill": {"seed": seed},
        }
        (out / f"config_seed{seed}.json").write_text(json.dumps(raw))
        batch = Engine(PipelineConfig.from_dict(
            {**raw, "labeler": "oracle"}))
        expected[str(seed)] = batch.run_query(case.nl_text).to_record()

    (out / "expected.json").write_text(json.dumps({
        "nl_text": case.nl_text,
        "missing": list(case.missing),
        "seeds": SEEDS,
        "expected": expected,
    }, indent=2))
    print(out)


if __name__ == "__main__":
    main()

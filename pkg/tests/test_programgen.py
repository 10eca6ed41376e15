import json

import pytest

from sceneq import testkit
from sceneq.gateway import Gateway, MockClient
from sceneq.programgen import (
    Discarded,
    ProgramGenConfig,
    Verified,
    generate,
    generate_concrete,
    instantiate_parameters,
    rewrite_signature,
    verify_syntax,
)
from sceneq.storage import sample_tuples
from sceneq.udfs import (
    ParameterSpec,
    UdfCandidate,
    UdfKind,
    UdfRegistry,
    UdfSignature,
    eval_udf,
)

BEHIND = UdfSignature("behind", 2, "Whether o0 is behind o1")
RED = UdfSignature("red", 1, "Whether o0 is red")


class TestRewriteSignature:
    def test_relationship_argument_list(self):
        text = rewrite_signature(BEHIND)
        assert text.startswith("py_behind(img, o0_oname, o0_x1")
        for arg in ("o0_o1_rnames", "o1_o0_rnames", "height", "width",
                    "**kwargs"):
            assert arg in text

    def test_attribute_prefix_list(self):
        text = rewrite_signature(RED)
        assert text == ("py_red(img, o0_oname, o0_x1, o0_y1, o0_x2, o0_y2, "
                        "o0_anames, height, width, **kwargs)")

    def test_rewriting_rewritten_refused(self):
        with pytest.raises(ValueError, match="already"):
            rewrite_signature(UdfSignature("py_red", 1, "Whether o0 is red"))


def program_response(entries):
    return json.dumps({"answer": entries})


def entry(script, interpretation="an interpretation", **kwargs):
    return {"semantic_interpretation": interpretation,
            "function_implementation": script, **kwargs}


BROKEN_SCRIPT = (
    "def py_behind(img, o0_oname, o0_x1, o0_y1, o0_x2, o0_y2, o0_anames, "
    "o1_oname, o1_x1, o1_y1, o1_x2, o1_y2, o1_anames, o0_o1_rnames, "
    "o1_o0_rnames, height, width, **kwargs):\n"
    "    return 1 / 0 > 0\n")

NUMBER_SCRIPT = BROKEN_SCRIPT.replace("1 / 0 > 0", "42")

PIXEL_SCRIPT = (
    "def py_behind(img, o0_oname, o0_x1, o0_y1, o0_x2, o0_y2, o0_anames, "
    "o1_oname, o1_x1, o1_y1, o1_x2, o1_y2, o1_anames, o0_o1_rnames, "
    "o1_o0_rnames, height, width, **kwargs):\n"
    "    return float(np.mean(img)) > 10\n")

REUSE_SCRIPT = (
    "def py_behind(img, o0_oname, o0_x1, o0_y1, o0_x2, o0_y2, o0_anames, "
    "o1_oname, o1_x1, o1_y1, o1_x2, o1_y2, o1_anames, o0_o1_rnames, "
    "o1_o0_rnames, height, width, **kwargs):\n"
    "    return 'left_of' in o1_o0_rnames\n")


def program_candidate(script, params=(), name="behind"):
    sig = BEHIND if name == "behind" else UdfSignature(
        name, 2, f"Whether {name} holds")
    return UdfCandidate(signature=sig, kind=UdfKind.PROGRAM,
                        program_source=script, params=tuple(params),
                        label=f"{name}:prog0")


class TestVerifySyntax:
    def test_healthy_script_verified_first_trial(self, db):
        config = ProgramGenConfig(seed=1)
        outcome = verify_syntax(
            program_candidate(testkit.correct_program_script("behind")),
            db, config)
        assert isinstance(outcome, Verified)

    def test_always_failing_discarded_after_trials(self, db):
        config = ProgramGenConfig(max_trials=5, seed=1)
        client = MockClient({"generate_programs":
                             {"behind": [program_response(
                                 [entry(BROKEN_SCRIPT)])]}})
        calls_before = len(client.calls)
        outcome = verify_syntax(program_candidate(BROKEN_SCRIPT), db, config,
                                gateway=Gateway(client))
        assert isinstance(outcome, Discarded)
        assert "ZeroDivision" in outcome.reason
        # 5 trials = 4 repair requests
        assert len(client.calls) - calls_before == 4

    def test_number_return_repaired(self, db):
        config = ProgramGenConfig(seed=1)
        client = MockClient({"generate_programs": {"behind": [
            program_response([entry(
                testkit.correct_program_script("behind"))])]}})
        outcome = verify_syntax(program_candidate(NUMBER_SCRIPT), db, config,
                                gateway=Gateway(client))
        assert isinstance(outcome, Verified)
        assert "cy1" in outcome.candidate.program_source

    def test_without_gateway_single_trial(self, db):
        config = ProgramGenConfig(seed=1)
        outcome = verify_syntax(program_candidate(NUMBER_SCRIPT), db, config)
        assert isinstance(outcome, Discarded)
        assert "expected bool" in outcome.reason


class TestGenerate:
    def make_gateway(self, entries):
        client = MockClient({"generate_programs":
                             {"behind": [program_response(entries)]}})
        return Gateway(client)

    def test_three_candidate_fixture(self, fresh_db):
        entries = [
            entry(testkit.correct_program_script("behind"),
                  "centroid y compare"),
            entry(testkit.planted_program("behind", 2, 0.7, salt=3),
                  "noisy variant"),
            entry(REUSE_SCRIPT, "reuse left_of as building block"),
        ]
        reg = UdfRegistry()
        out = generate(BEHIND, BEHIND.description, fresh_db, reg,
                       ProgramGenConfig(seed=2), self.make_gateway(entries))
        assert len(out) == 3
        assert all(c.kind is UdfKind.PROGRAM for c in out)
        assert out[2].interpretation.startswith("reuse")

    def test_pixel_script_rejected_when_pixels_disallowed(self, fresh_db):
        entries = [entry(PIXEL_SCRIPT),
                   entry(testkit.correct_program_script("behind"))]
        config = ProgramGenConfig(allow_pixels=False, seed=2)
        out = generate(BEHIND, BEHIND.description, fresh_db, UdfRegistry(),
                       config, self.make_gateway(entries))
        assert len(out) == 1
        assert "np.mean" not in out[0].program_source

    def test_every_verified_candidate_runs_on_fresh_samples(self, fresh_db):
        entries = [entry(testkit.correct_program_script("behind")),
                   entry(testkit.planted_program("behind", 2, 0.9, salt=5))]
        out = generate(BEHIND, BEHIND.description, fresh_db, UdfRegistry(),
                       ProgramGenConfig(seed=2), self.make_gateway(entries))
        fresh = sample_tuples(fresh_db, 2, 100, seed=777)
        for cand in out:
            for unit in fresh:
                assert isinstance(eval_udf(cand, unit), bool)


class TestInstantiateParameters:
    def margin_candidate(self, n_params=1):
        params = [ParameterSpec("margin", 0.1, 0.0, 0.5)]
        if n_params == 2:
            params.append(ParameterSpec("scale", 1.0, 0.5, 2.0))
        script = (
            "def py_behind(img, o0_oname, o0_x1, o0_y1, o0_x2, o0_y2, "
            "o0_anames, o1_oname, o1_x1, o1_y1, o1_x2, o1_y2, o1_anames, "
            "o0_o1_rnames, o1_o0_rnames, height, width, **kwargs):\n"
            "    return (o0_y1 + o0_y2) / 2 < (o1_y1 + o1_y2) / 2\n")
        return program_candidate(script, params=params)

    def test_empty_params_single_concrete(self):
        cand = program_candidate(testkit.correct_program_script("behind"))
        out = instantiate_parameters(cand, ProgramGenConfig(seed=0))
        assert len(out) == 1 and out[0].bound_params == {}

    def test_default_plus_five_samples(self):
        out = instantiate_parameters(self.margin_candidate(),
                                     ProgramGenConfig(seed=0))
        assert len(out) == 6
        assert out[0].bound_params == {"margin": 0.1}
        for c in out[1:]:
            assert 0.0 <= c.bound_params["margin"] <= 0.5

    def test_two_params_still_six_joint_assignments(self):
        out = instantiate_parameters(self.margin_candidate(n_params=2),
                                     ProgramGenConfig(seed=0))
        assert len(out) == 6
        assert set(out[0].bound_params) == {"margin", "scale"}

    def test_instantiation_deterministic(self):
        a = instantiate_parameters(self.margin_candidate(),
                                   ProgramGenConfig(seed=9))
        b = instantiate_parameters(self.margin_candidate(),
                                   ProgramGenConfig(seed=9))
        assert [c.bound_params for c in a] == [c.bound_params for c in b]
        c = instantiate_parameters(self.margin_candidate(),
                                   ProgramGenConfig(seed=10))
        assert [x.bound_params for x in a] != [x.bound_params for x in c]

    def test_candidate_count_bound(self, fresh_db):
        entries = [entry(testkit.correct_program_script("behind"),
                         kwargs={"m": {"default": 0.1, "min": 0.0,
                                       "max": 1.0}})
                   for _ in range(4)]
        client = MockClient({"generate_programs":
                             {"behind": [program_response(entries)]}})
        config = ProgramGenConfig(k=3, n_param_samples=5, seed=0)
        out = generate_concrete(BEHIND, BEHIND.description, fresh_db,
                                UdfRegistry(), config, Gateway(client))
        assert len(out) <= config.k * (1 + config.n_param_samples)

import json
from pathlib import Path

import pytest

from sceneq import testkit
from sceneq.errors import GatewayError
from sceneq.gateway import (
    PARAMS_RULE_ALLOWED,
    PIXELS_RULE_FORBIDDEN,
    SCHEMA_DOC_ARITY2,
    Gateway,
    MockClient,
    TEMPLATES,
    decide_udf_type,
    extract_json,
    parse_proposal,
    relevant_object_classes,
    render,
    request_program_candidates,
    translate_query,
    vlm_label,
)
from sceneq.udfs import UdfRegistry, UdfSignature, make_value_lookup

GOLDEN = Path(__file__).parent / "golden"

GOLDEN_SLOTS = {
    "parse_query": dict(fps=25.0,
                        udf_list="near(o0, o1): Whether o0 is near o1",
                        nl_query="a car near a truck"),
    "propose_udfs": dict(udf_list="near(o0, o1): Whether o0 is near o1",
                         nl_query="a car behind a truck"),
    "generate_programs": dict(
        k=10,
        rewritten_signature="py_behind(img, o0_oname, o0_x1, o0_y1, o0_x2, "
                            "o0_y2, o0_anames, o1_oname, o1_x1, o1_y1, "
                            "o1_x2, o1_y2, o1_anames, o0_o1_rnames, "
                            "o1_o0_rnames, height, width, **kwargs)",
        description="Whether o0 is behind o1",
        schema_doc=SCHEMA_DOC_ARITY2,
        onames=["box", "disc"], anames=["color_red"], rnames=["near"],
        params_rule=PARAMS_RULE_ALLOWED, pixels_rule=PIXELS_RULE_FORBIDDEN),
    "decide_udf_type": dict(description="Whether o0 is behind o1",
                            concepts=["box", "near", "color_red"]),
    "filter_object_classes": dict(onames=["person", "food", "car"],
                                  signature="eating(o0, o1)",
                                  description="Whether o0 is eating o1"),
    "vlm_label_attribute": dict(signature="color_red(o0)",
                                description="Whether the color of o0 is red"),
    "vlm_label_relationship": dict(signature="behind(o0, o1)",
                                   description="Whether o0 is behind o1",
                                   o0_oname="box", o0_bbox=[10, 10, 30, 30],
                                   o1_oname="disc", o1_bbox=[50, 10, 70, 30]),
}


def small_registry():
    reg = UdfRegistry()
    for name, arity in (("car", 1), ("truck", 1), ("far", 2)):
        reg.register(make_value_lookup(
            UdfSignature(name, arity, f"Whether {name} holds")))
    return reg


EXAMPLE_DSL = ("(car(o0), truck(o1), far(o0, o1)); "
               "Duration((near(o0, o1)), 240)")


class TestTemplates:
    @pytest.mark.parametrize("template_id", sorted(TEMPLATES))
    def test_rendered_prompt_matches_golden(self, template_id):
        rendered = render(template_id, **GOLDEN_SLOTS[template_id])
        assert rendered == (GOLDEN / f"{template_id}.txt").read_text()

    def test_missing_slot_rejected(self):
        with pytest.raises(GatewayError, match="missing slots"):
            render("parse_query", fps=25.0)

    def test_attribute_label_prompt_has_no_second_bbox(self):
        text = render("vlm_label_attribute",
                      **GOLDEN_SLOTS["vlm_label_attribute"])
        assert "o1" not in text and "blue" not in text


class TestMockClient:
    def test_ordered_responses_then_repeat_last(self):
        client = MockClient({"parse_query": {"q": ["a", "b"]}})
        out = [client.complete("p", template_id="parse_query", key="q")
               for _ in range(4)]
        assert out == ["a", "b", "b", "b"]

    def test_determinism_across_instances(self):
        fixture = {"parse_query": {"q": ["a", "b"]}}
        c1 = MockClient(fixture)
        c2 = MockClient(fixture)
        seq1 = [c1.complete("p", template_id="parse_query", key="q")
                for _ in range(3)]
        seq2 = [c2.complete("p", template_id="parse_query", key="q")
                for _ in range(3)]
        assert seq1 == seq2

    def test_unscripted_key_errors(self):
        client = MockClient({})
        with pytest.raises(GatewayError, match="no scripted response"):
            client.complete("p", template_id="parse_query", key="q")


class TestTranslateQuery:
    def test_example_query_dsl_branch(self):
        reg = small_registry()
        reg.register(make_value_lookup(
            UdfSignature("near", 2, "Whether o0 is near o1")))
        client = MockClient({"parse_query": {
            "the query": [f"PARSE_YES\n{EXAMPLE_DSL}"]}})
        outcome = translate_query("the query", reg, 25.0, client)
        assert outcome.kind == "dsl"
        assert len(outcome.query.graphs) == 2
        assert outcome.query.graphs[1].duration == 240
        assert outcome.retries == 0

    def test_unregistered_predicate_returns_proposals(self):
        reg = small_registry()  # no 'near'
        client = MockClient({
            "parse_query": {"q": [f"PARSE_YES\n{EXAMPLE_DSL}"]},
            "propose_udfs": {"q": [json.dumps({"answer": [
                {"signature": "near(o0, o1)",
                 "description": "Whether o0 is near o1"}]})]},
        })
        outcome = translate_query("q", reg, 25.0, client)
        assert outcome.kind == "proposals"
        prop = outcome.proposals[0]
        assert (prop.signature_text, prop.description) == \
            ("near(o0, o1)", "Whether o0 is near o1")

    def test_parse_no_goes_to_proposals(self):
        reg = small_registry()
        client = MockClient({
            "parse_query": {"q": ["PARSE_NO"]},
            "propose_udfs": {"q": [json.dumps({"answer": [
                {"signature": "near(o0, o1)",
                 "description": "Whether o0 is near o1"}]})]},
        })
        assert translate_query("q", reg, 25.0, client).kind == "proposals"

    def test_malformed_then_correct_retries_once(self):
        reg = small_registry()
        client = MockClient({"parse_query": {"q": [
            "PARSE_YES\n(car(o0), truck(o1)",  # unbalanced
            "PARSE_YES\n(car(o0), truck(o1), far(o0, o1))"]}})
        outcome = translate_query("q", reg, 25.0, client)
        assert outcome.kind == "dsl"
        assert outcome.retries == 1

    def test_exhausted_retries(self):
        reg = small_registry()
        client = MockClient({"parse_query": {"q": ["nonsense"]}})
        with pytest.raises(GatewayError, match="failed after 5"):
            translate_query("q", reg, 25.0, client)

    def test_never_returns_invalid_dsl_branch(self):
        # post-verification: the dsl branch always validates
        reg = small_registry()
        client = MockClient({
            "parse_query": {"q": ["PARSE_YES\n(unknown(o0))"]},
            "propose_udfs": {"q": [json.dumps({"answer": [
                {"signature": "unknown(o0)",
                 "description": "Whether o0 is unknown"}]})]},
        })
        outcome = translate_query("q", reg, 25.0, client)
        assert outcome.kind == "proposals"


SIG = UdfSignature("behind", 2, "Whether o0 is behind o1")
DOMAINS = ({"box"}, {"near"}, {"color_red"})


def program_response(entries):
    return json.dumps({"answer": entries})


def centroid_entry(**kwargs):
    return {"semantic_interpretation": "compare centroid y",
            "function_implementation": testkit.correct_program_script("behind"),
            **kwargs}


class TestRequestProgramCandidates:
    def request(self, client, k=10, allow_params=True):
        return request_program_candidates(
            SIG, SIG.description, SCHEMA_DOC_ARITY2, DOMAINS, k,
            allow_params, False, client,
            rewritten_signature="py_behind(...)")

    def test_three_candidates_one_with_params(self):
        entries = [
            centroid_entry(),
            {"semantic_interpretation": "bottom edge compare",
             "function_implementation": "def py_behind(...): pass",
             "kwargs": {}},
            {"semantic_interpretation": "margin compare",
             "function_implementation": "def py_behind(...): pass",
             "kwargs": {"margin": {"default": 0.1, "min": 0, "max": 0.5}}},
        ]
        client = MockClient({"generate_programs":
                             {"behind": [program_response(entries)]}})
        drafts, dropped = self.request(client)
        assert len(drafts) == 3 and dropped == 0
        assert drafts[2].params[0].name == "margin"
        assert (drafts[2].params[0].default, drafts[2].params[0].min,
                drafts[2].params[0].max) == (0.1, 0.0, 0.5)

    def test_missing_kwargs_block_means_empty_params(self):
        client = MockClient({"generate_programs":
                             {"behind": [program_response([centroid_entry()])]}})
        drafts, _ = self.request(client)
        assert drafts[0].params == ()

    def test_min_above_max_drops_candidate(self):
        entries = [
            centroid_entry(kwargs={"m": {"default": 0.5, "min": 1.0,
                                         "max": 0.0}}),
            centroid_entry(),
        ]
        client = MockClient({"generate_programs":
                             {"behind": [program_response(entries)]}})
        drafts, dropped = self.request(client)
        assert len(drafts) == 1 and dropped == 1

    def test_zero_parseable_after_retries_errors(self):
        client = MockClient({"generate_programs": {"behind": ["garbage"]}})
        with pytest.raises(GatewayError, match="no parseable"):
            self.request(client)

    def test_k_caps_candidates(self):
        entries = [centroid_entry() for _ in range(6)]
        client = MockClient({"generate_programs":
                             {"behind": [program_response(entries)]}})
        drafts, _ = self.request(client, k=4)
        assert len(drafts) == 4


class TestDecideUdfType:
    def test_program(self):
        client = MockClient({"decide_udf_type": {"behind": ["programUDF"]}})
        assert decide_udf_type(SIG, SIG.description, DOMAINS, client) == \
            "program"

    def test_model_case_insensitive(self):
        client = MockClient({"decide_udf_type": {"behind": ["'ModelUDF'"]}})
        assert decide_udf_type(SIG, SIG.description, DOMAINS, client) == \
            "model"

    def test_unusable_after_retries(self):
        client = MockClient({"decide_udf_type": {"behind": ["maybe"]}})
        with pytest.raises(GatewayError):
            decide_udf_type(SIG, SIG.description, DOMAINS, client)


class TestRelevantObjectClasses:
    EATING = UdfSignature("eating", 2, "Whether o0 is eating o1")
    ONAMES = {"person", "food", "sandwich", "dish", "car", "window"}

    def test_scripted_subset(self):
        client = MockClient({"filter_object_classes": {"eating": [
            json.dumps({"answer": ["person", "food", "sandwich", "dish"]})]}})
        out = relevant_object_classes(self.EATING, self.EATING.description,
                                      self.ONAMES, client)
        assert out == {"person", "food", "sandwich", "dish"}

    def test_unknown_classes_fall_back_to_all(self):
        client = MockClient({"filter_object_classes": {"eating": [
            json.dumps({"answer": ["alien", "ghost"]})]}})
        out = relevant_object_classes(self.EATING, self.EATING.description,
                                      self.ONAMES, client)
        assert out == self.ONAMES

    def test_all_classes_returned_verbatim(self):
        client = MockClient({"filter_object_classes": {"eating": [
            json.dumps({"answer": sorted(self.ONAMES)})]}})
        assert relevant_object_classes(self.EATING, self.EATING.description,
                                       self.ONAMES, client) == self.ONAMES

    def test_parse_failure_falls_back(self):
        client = MockClient({"filter_object_classes": {"eating": ["oops"]}})
        assert relevant_object_classes(self.EATING, self.EATING.description,
                                       self.ONAMES, client) == self.ONAMES


class TestVlmLabel:
    def test_zero_fliprate_matches_rules(self, db, dataset):
        client = MockClient(rules=dataset.rules, flip_rate=0.0)
        sig = UdfSignature("near", 2, testkit.CONCEPT_DESCRIPTIONS["near"])
        for uid in db.eligible_units(2)[:50]:
            unit = db.make_tuple(*uid)
            assert vlm_label(unit, sig, sig.description, client) == \
                dataset.rules.holds_view("near", unit)

    def test_fliprate_agreement_within_binomial_bound(self, db, dataset):
        client = MockClient(rules=dataset.rules, flip_rate=0.15, seed=3)
        sig = UdfSignature("near", 2, testkit.CONCEPT_DESCRIPTIONS["near"])
        units = [db.make_tuple(*u) for u in db.eligible_units(2)[:1000]]
        agree = sum(
            vlm_label(u, sig, sig.description, client) ==
            dataset.rules.holds_view("near", u)
            for u in units)
        assert abs(agree / 1000 - 0.85) < 0.03

    def test_arity_mismatch_rejected(self, db):
        client = MockClient()
        sig = UdfSignature("near", 2, "Whether o0 is near o1")
        unit = db.make_tuple(*db.eligible_units(1)[0])
        with pytest.raises(ValueError):
            vlm_label(unit, sig, sig.description, client)


def test_extract_json_handles_fences():
    assert extract_json('```json\n{"answer": [1]}\n```') == {"answer": [1]}
    assert extract_json('prefix {"answer": []} suffix') == {"answer": []}
    with pytest.raises(ValueError):
        extract_json("no json here")


def test_parse_proposal_validation():
    prop = parse_proposal("near(o0, o1)", "Whether o0 is near o1")
    assert (prop.name, prop.arity) == ("near", 2)
    with pytest.raises(ValueError):
        parse_proposal("near(o0, o1)", "checks nearness")
    with pytest.raises(ValueError):
        parse_proposal("near[o0]", "Whether o0 is near")


def test_gateway_bundle_delegates(db, dataset):
    client = MockClient({"parse_query": {"q": ["PARSE_YES\n(box(o0))"]}},
                        rules=dataset.rules)
    reg = UdfRegistry()
    reg.register(make_value_lookup(UdfSignature("box", 1,
                                                "Whether o0 is a box")))
    gw = Gateway(client, fps=24.0)
    assert gw.translate("q", reg).kind == "dsl"

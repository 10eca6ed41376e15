"""Model-client boundary: prompt assembly, response parsing, retry loops.

All language/vision-model traffic flows through a ModelClient. Tests use
deterministic mocks driven by fixture files mapping (template id, concept
key) to an ordered response list; production use points the HTTP client
at a chat-completions endpoint via environment variables. Every loop
feeds the failure message back verbatim and gives up after a bounded
number of trials (default 5).
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol

from .dsl import Query, parse, validate
from .errors import GatewayError, LabelerError, PixelsUnavailableError
from .udfs import ParameterSpec, UdfSignature

DEFAULT_MAX_RETRIES = 5
DEFAULT_FPS = 25.0

TEMPLATES = {
    "parse_query": (
        "Each video segment is a sequence of N frames. The visual content of "
        "each frame is represented by a region graph: A region graph contains "
        "a set of objects in a frame, along with a set of relationships "
        "between those objects. Objects can optionally have attributes. In "
        "our DSL, we use a variable o to represent an object in a query. "
        "Different variables represent different objects. All predicates of a "
        "region graph are connected by commas. Then, region graphs are "
        "connected in temporal sequence with semicolons. Region graphs that "
        "appear earlier in the sequence represent temporally earlier frames "
        "in the video. We further use the notation Duration(g, d) to require "
        "that the region graph g exist in at least d consecutive frames. "
        "Negation operation is not supported in our DSL. Remember to always "
        "add parentheses around comma-connected predicates. Assume the video "
        "segments capture {fps} frames per second.\n"
        "\n"
        "A function can take one of the following two formats, depending on "
        "if it is a relationship predicate or an attribute predicate:\n"
        "- relationship predicate: relationshipName(o0, o1). For example, "
        "jumping_in(o0, o1) checks whether o0 is jumping in o1.\n"
        "- attribute predicate: key_value(o0). For example, color_bronze(o0) "
        "checks whether the color of o0 is bronze.\n"
        "\n"
        "You have access to the following functions:\n"
        "{udf_list}\n"
        "\n"
        "For text-to-DSL translation tasks, only use the functions you have "
        "been provided with. Reply PARSE_YES followed by the DSL query on the "
        "next line when the text is successfully translated into the DSL and "
        "verified by the provided functions, or PARSE_NO if parsing the user "
        "input requires new predicates that are not listed in the current "
        "functions list. The predicates MUST be selected from the provided "
        "functions.\n"
        "\n"
        "User query: {nl_query}\n"
    ),
    "propose_udfs": (
        "You have access to the following functions:\n"
        "{udf_list}\n"
        "\n"
        "For function proposal tasks, only use the functions you have been "
        "provided with. Please propose the new functions that are necessary "
        "to parse the user query, and also include a brief description for "
        "each proposed function that explains its purpose as described in "
        "the query. The function description should always start with the "
        "word \"Whether\" and not contain other comments, explanations, or "
        "reasoning.\n"
        "Let's think step by step. Based on the existing functions, determine "
        "what new functions are needed. The proposed function must follow "
        "the format. Don't propose functions that contain changes in states. "
        "If you have those, propose a separate function for each state "
        "instead. Propose as few functions as possible while ensuring that "
        "the user's intent can be precisely captured.\n"
        "Format your answer as JSON:\n"
        "```json\n"
        "{{\"answer\": [{{\"signature\": \"function_name(o0, o1)\", "
        "\"description\": \"Whether ...\"}}]}}\n"
        "```\n"
        "\n"
        "User query: {nl_query}\n"
    ),
    "generate_programs": (
        "Generate {k} Python functions with different, diverse semantic "
        "interpretations for the following Python task. Each generation "
        "should include the semantic interpretation and the Python function "
        "implementation, formatted as a dictionary. The response should "
        "strictly adhere to the formats described below:\n"
        "- Task: Write a python function called '{rewritten_signature}' that "
        "determines \"{description}\".\n"
        "- Each interpretation should offer a different but reasonable "
        "understanding of the task, not just superficial differences like "
        "variable names. Seek interpretations that vary in logic and "
        "conceptual understanding of the task. Consider geometric, visual, "
        "and spatial perspectives. Include assumptions or constraints where "
        "relevant.\n"
        "- Prioritize generating functions that are likely to see frequent "
        "use, starting with the most common.\n"
        "\n"
        "{schema_doc}"
        "- Available object names: {onames}\n"
        "- Available attribute names: {anames}\n"
        "- Available relationship names: {rnames}\n"
        "- The origin (x, y) = (0, 0) is located at the top left corner. The "
        "x axis is oriented from left to right; the y axis is oriented from "
        "top to bottom.\n"
        "\n"
        "- The function should return a boolean value, indicating whether "
        "the predicate is true or false.\n"
        "{params_rule}"
        "{pixels_rule}"
        "- The function should only contain the implementation itself, with "
        "no other comments, inline comments, syntax highlighter, "
        "explanations, reasoning, or dialogue.\n"
        "\n"
        "- Use the following output format:\n"
        "```json\n"
        "{{\"answer\": [{{\"semantic_interpretation\": \"interpretation\", "
        "\"function_implementation\": \"def ...\", \"kwargs\": "
        "{{\"arg_name\": {{\"min\": 0, \"max\": 1, \"default\": 0.5}}}}}}]}}\n"
        "```\n"
    ),
    "decide_udf_type": (
        "You are tasked with creating a solution to determine "
        "\"{description}\". You can choose to use either a python function "
        "or a computer vision model.\n"
        "1. Python function: This approach is suitable for tasks that can be "
        "determined based on any of the following:\n"
        "- Existing concepts of objects. You can only leverage concepts from "
        "the following predefined list: {concepts}. These concepts are "
        "pre-extracted for each object in the image. Concepts not listed are "
        "not available.\n"
        "- Bounding box coordinates of objects.\n"
        "- Statistical analysis of pixel values in the image using computer "
        "vision libraries.\n"
        "2. Computer vision model: This approach is suitable for tasks that "
        "require understanding the visual content and contextual "
        "interpretation of the image.\n"
        "Please specify your choice by responding with 'programUDF' to use "
        "the Python function or 'modelUDF' to use the computer vision model. "
        "Choose the approach that you believe will achieve the highest "
        "accuracy for the task. Consider only the effectiveness of each "
        "approach without concern for computational resources, time, or "
        "other constraints. Please respond with the answer only, and do not "
        "output any other responses or any explanations.\n"
    ),
    "filter_object_classes": (
        "Given a list of object classes: {onames}, and a function "
        "\"{signature}\" that determines \"{description}\", assume that "
        "objects are chosen from the object classes listed above. Your task "
        "is to identify and list all object classes that can possibly be "
        "involved in this concept. It's LIFE THREATENING not to remove "
        "object classes that can possibly be involved in this concept.\n"
        "Please format your answer in the JSON format shown below:\n"
        "```json\n"
        "{{\"answer\": [\"object_class1\", \"object_class2\"]}}\n"
        "```\n"
    ),
    "vlm_label_attribute": (
        "Concept: {signature}\n"
        "The image shows one object cropped from a video frame.\n"
        "{description}? Answer yes or no.\n"
    ),
    "vlm_label_relationship": (
        "Concept: {signature}\n"
        "The image shows two objects cropped from a video frame. The subject "
        "o0 is outlined by a red box and the target o1 is outlined by a blue "
        "box.\n"
        "o0 is a {o0_oname} with bounding box {o0_bbox}. o1 is a {o1_oname} "
        "with bounding box {o1_bbox}.\n"
        "{description}? Answer yes or no.\n"
    ),
}

SCHEMA_DOC_ARITY2 = (
    "- The input to the function contains the following parameters:\n"
    "    - img: np.ndarray of shape (H, W, C). The image is in the RGB color "
    "space, where H is the height, W is the width, and C is the number of "
    "channels.\n"
    "    - o0_oname: str. The class name of object o0.\n"
    "    - o0_x1: int. The x-coordinate of the top-left corner of the "
    "bounding box of object o0.\n"
    "    - o0_y1: int. The y-coordinate of the top-left corner of the "
    "bounding box of object o0.\n"
    "    - o0_x2: int. The x-coordinate of the bottom-right corner of the "
    "bounding box of object o0.\n"
    "    - o0_y2: int. The y-coordinate of the bottom-right corner of the "
    "bounding box of object o0.\n"
    "    - o0_anames: List[str]. The list of attribute names of object o0.\n"
    "    - o1_oname: str. The class name of object o1.\n"
    "    - o1_x1: int. The x-coordinate of the top-left corner of the "
    "bounding box of object o1.\n"
    "    - o1_y1: int. The y-coordinate of the top-left corner of the "
    "bounding box of object o1.\n"
    "    - o1_x2: int. The x-coordinate of the bottom-right corner of the "
    "bounding box of object o1.\n"
    "    - o1_y2: int. The y-coordinate of the bottom-right corner of the "
    "bounding box of object o1.\n"
    "    - o1_anames: List[str]. The list of attribute names of object o1.\n"
    "    - o0_o1_rnames: List[str]. The list of relationship names between "
    "object o0 and object o1, where object o0 is the subject and object o1 "
    "is the target.\n"
    "    - o1_o0_rnames: List[str]. The list of relationship names between "
    "object o1 and object o0, where object o1 is the subject and object o0 "
    "is the target.\n"
    "    - height: int. The height of the frame.\n"
    "    - width: int. The width of the frame.\n"
    "    - **kwargs: Optional numeric parameters that can be adjusted as "
    "needed.\n"
)

SCHEMA_DOC_ARITY1 = (
    "- The input to the function contains the following parameters:\n"
    "    - img: np.ndarray of shape (H, W, C). The image is in the RGB color "
    "space, where H is the height, W is the width, and C is the number of "
    "channels.\n"
    "    - o0_oname: str. The class name of object o0.\n"
    "    - o0_x1: int. The x-coordinate of the top-left corner of the "
    "bounding box of object o0.\n"
    "    - o0_y1: int. The y-coordinate of the top-left corner of the "
    "bounding box of object o0.\n"
    "    - o0_x2: int. The x-coordinate of the bottom-right corner of the "
    "bounding box of object o0.\n"
    "    - o0_y2: int. The y-coordinate of the bottom-right corner of the "
    "bounding box of object o0.\n"
    "    - o0_anames: List[str]. The list of attribute names of object o0.\n"
    "    - height: int. The height of the frame.\n"
    "    - width: int. The width of the frame.\n"
    "    - **kwargs: Optional numeric parameters that can be adjusted as "
    "needed.\n"
)

PARAMS_RULE_ALLOWED = (
    "- Include '**kwargs' in the function's arguments only if necessary. "
    "Only arguments of numeric data types are allowed in '**kwargs'. String, "
    "boolean, or object data types are not allowed in '**kwargs'. When "
    "using kwargs, also emit a \"kwargs\" dictionary giving each "
    "parameter's default, minimum, and maximum values.\n"
)
PARAMS_RULE_FORBIDDEN = (
    "- Do not use '**kwargs'; the function must not take tunable "
    "parameters. Emit an empty \"kwargs\" dictionary.\n"
)
PIXELS_RULE_ALLOWED = (
    "- You may read the img argument and analyze pixel values with the "
    "provided math and np helpers. No imports are available.\n"
)
PIXELS_RULE_FORBIDDEN = (
    "- Do not read the img argument; it is unavailable for this dataset. "
    "Use only bounding boxes, names, and frame dimensions.\n"
)

_SLOT = re.compile(r"{([a-z0-9_]+)}")


def render(template_id: str, **slots) -> str:
    """Fill a template; every slot must be supplied."""
    if template_id not in TEMPLATES:
        raise GatewayError(f"unknown template {template_id!r}")
    template = TEMPLATES[template_id]
    needed = set(_SLOT.findall(template.replace("{{", "").replace("}}", "")))
    missing = needed - set(slots)
    if missing:
        raise GatewayError(
            f"template {template_id!r} missing slots: {sorted(missing)}")
    return template.format(**{k: slots[k] for k in needed})


# ------------------------------------------------------------------ clients


class ModelClient(Protocol):
    identity: str

    def complete(self, prompt: str, context=(), template_id: str = "",
                 key: str = "") -> str: ...

    def label_image(self, image, text: str, unit=None) -> bool: ...


class MockClient:
    """Deterministic scripted client.

    ``fixture`` maps template id -> {concept key -> [ordered responses]};
    calls past the end of a list repeat its last entry, and a "*" key
    catches any concept. Image labeling answers from a ground-truth rule
    set (duck-typed ``holds_view``) with an optional seeded flip rate.
    """

    def __init__(self, fixture: Optional[dict] = None, rules=None,
                 flip_rate: float = 0.0, seed: int = 0,
                 identity: str = "mock"):
        self.fixture = fixture or {}
        self.rules = rules
        self.flip_rate = flip_rate
        self.seed = seed
        self.identity = identity
        self._counters: dict[tuple[str, str], int] = {}
        self.calls: list[tuple[str, str]] = []

    @classmethod
    def from_file(cls, path: Path, rules=None, flip_rate: float = 0.0,
                  seed: int = 0) -> "MockClient":
        return cls(json.loads(Path(path).read_text()), rules=rules,
                   flip_rate=flip_rate, seed=seed)

    def complete(self, prompt: str, context=(), template_id: str = "",
                 key: str = "") -> str:
        self.calls.append((template_id, key))
        table = self.fixture.get(template_id, {})
        responses = table.get(key)
        if responses is None:
            responses = table.get("*")
        if not responses:
            raise GatewayError(
                f"mock has no scripted response for ({template_id!r}, {key!r})")
        counter = self._counters.get((template_id, key), 0)
        self._counters[(template_id, key)] = counter + 1
        return responses[min(counter, len(responses) - 1)]

    def label_image(self, image, text: str, unit=None) -> bool:
        if self.rules is None or unit is None:
            raise GatewayError("mock labeling needs rules and a unit")
        m = re.search(r"Concept:\s*([A-Za-z_][A-Za-z0-9_]*)", text)
        if not m:
            raise GatewayError("labeling prompt carries no concept line")
        concept = m.group(1)
        truth = self.rules.holds_view(concept, unit)
        if self.flip_rate > 0:
            from .testkit import unit_hash01
            if unit_hash01(self.seed, f"vlm:{concept}", unit.uid) < self.flip_rate:
                return not truth
        return truth


class HttpChatClient:
    """Chat-completions transport configured by environment variables:
    SCENEQ_LLM_ENDPOINT, SCENEQ_LLM_MODEL, SCENEQ_LLM_API_KEY,
    SCENEQ_LLM_TIMEOUT. Never exercised by the test suite."""

    def __init__(self):
        self.endpoint = os.environ.get("SCENEQ_LLM_ENDPOINT", "")
        self.model = os.environ.get("SCENEQ_LLM_MODEL", "")
        self.api_key = os.environ.get("SCENEQ_LLM_API_KEY", "")
        self.timeout = float(os.environ.get("SCENEQ_LLM_TIMEOUT", "60"))
        if not self.endpoint or not self.model:
            raise GatewayError("SCENEQ_LLM_ENDPOINT and SCENEQ_LLM_MODEL "
                               "must be set for the HTTP client")
        self.identity = f"http:{self.model}"

    def _post(self, messages) -> str:
        import httpx

        resp = httpx.post(
            self.endpoint,
            json={"model": self.model, "messages": messages},
            headers={"Authorization": f"Bearer {self.api_key}"},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    def complete(self, prompt: str, context=(), template_id: str = "",
                 key: str = "") -> str:
        messages = [{"role": "user", "content": prompt}]
        for i, text in enumerate(context):
            role = "assistant" if i % 2 == 0 else "user"
            messages.append({"role": role, "content": text})
        return self._post(messages)

    def label_image(self, image, text: str, unit=None) -> bool:
        import base64
        import io

        from PIL import Image as PilImage

        if image is None:
            raise GatewayError("HTTP labeling requires a frame image")
        buf = io.BytesIO()
        PilImage.fromarray(image).save(buf, format="PNG")
        payload = base64.b64encode(buf.getvalue()).decode()
        messages = [{"role": "user", "content": [
            {"type": "text", "text": text},
            {"type": "image_url",
             "image_url": {"url": f"data:image/png;base64,{payload}"}},
        ]}]
        answer = self._post(messages).strip().lower()
        return answer.startswith("yes") or " yes" in answer


# ------------------------------------------------------------- parsing aids


def extract_json(text: str):
    """Pull the first JSON object out of a response, tolerating fences."""
    fenced = re.search(r"```(?:json)?\s*(.*?)```", text, re.DOTALL)
    if fenced:
        text = fenced.group(1)
    start = text.find("{")
    end = text.rfind("}")
    if start == -1 or end == -1 or end < start:
        raise ValueError("no JSON object in response")
    return json.loads(text[start:end + 1])


@dataclass(frozen=True)
class UdfProposal:
    name: str
    arity: int
    description: str

    @property
    def signature_text(self) -> str:
        args = "o0" if self.arity == 1 else "o0, o1"
        return f"{self.name}({args})"

    def to_signature(self) -> UdfSignature:
        return UdfSignature(self.name, self.arity, self.description)


_SIG_TEXT = re.compile(
    r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(\s*o0\s*(?:,\s*o1\s*)?\)\s*$")


def parse_proposal(signature_text: str, description: str) -> UdfProposal:
    m = _SIG_TEXT.match(signature_text)
    if not m:
        raise ValueError(f"bad proposal signature {signature_text!r}")
    if not description.startswith("Whether"):
        raise ValueError(f"proposal description must start with 'Whether': "
                         f"{description!r}")
    arity = 2 if "o1" in signature_text else 1
    return UdfProposal(m.group(1), arity, description)


@dataclass
class TranslationOutcome:
    kind: str                       # "dsl" | "proposals"
    dsl_text: str = ""
    query: Optional[Query] = None
    proposals: tuple[UdfProposal, ...] = ()
    retries: int = 0


@dataclass
class ProgramDraft:
    interpretation: str
    script: str
    params: tuple[ParameterSpec, ...] = ()


# ----------------------------------------------------------------- gateway ops


def _propose(nl_text: str, registry, client, max_retries: int,
             retries_so_far: int) -> TranslationOutcome:
    prompt = render("propose_udfs", udf_list=registry.descriptions_block(),
                    nl_query=nl_text)
    context = []
    for attempt in range(max_retries):
        resp = client.complete(prompt, context, template_id="propose_udfs",
                               key=nl_text)
        try:
            payload = extract_json(resp)
            raw = payload["answer"]
            proposals = tuple(parse_proposal(item["signature"],
                                             item["description"])
                              for item in raw)
            if not proposals:
                raise ValueError("empty proposal list")
            return TranslationOutcome(kind="proposals", proposals=proposals,
                                      retries=retries_so_far + attempt)
        except (ValueError, KeyError, TypeError) as exc:
            context.extend([resp, f"Error: {exc}. Please try again."])
    raise GatewayError(f"no usable UDF proposals after {max_retries} attempts")


def translate_query(nl_text: str, registry, fps: float, client,
                    max_retries: int = DEFAULT_MAX_RETRIES) -> TranslationOutcome:
    """NL -> DSL with post-verification.

    Returns the dsl branch only when the text parses and every predicate
    resolves; unresolved predicates or an explicit PARSE_NO switch to the
    proposals branch. Parse and validation errors are appended to the
    context verbatim for the next attempt.
    """
    if max_retries < 1:
        raise ValueError("max_retries must be >= 1")
    prompt = render("parse_query", fps=fps,
                    udf_list=registry.descriptions_block(), nl_query=nl_text)
    context = []
    for attempt in range(max_retries):
        resp = client.complete(prompt, context, template_id="parse_query",
                               key=nl_text)
        if "PARSE_NO" in resp:
            return _propose(nl_text, registry, client, max_retries, attempt)
        try:
            if "PARSE_YES" not in resp:
                raise ValueError(
                    "response must contain PARSE_YES or PARSE_NO")
            dsl_text = resp.split("PARSE_YES", 1)[1].strip()
            query = parse(dsl_text)
        except Exception as exc:
            context.extend([resp, f"Error: {exc}. Please try again."])
            continue
        unresolved = validate(query, registry)
        if unresolved:
            return _propose(nl_text, registry, client, max_retries, attempt)
        return TranslationOutcome(kind="dsl", dsl_text=dsl_text, query=query,
                                  retries=attempt)
    raise GatewayError(f"translation failed after {max_retries} attempts")


def _parse_param_specs(raw: dict) -> tuple[ParameterSpec, ...]:
    specs = []
    for name, bounds in (raw or {}).items():
        specs.append(ParameterSpec(name=name,
                                   default=float(bounds["default"]),
                                   min=float(bounds["min"]),
                                   max=float(bounds["max"])))
    return tuple(specs)


def request_program_candidates(signature: UdfSignature, description: str,
                               schema_doc: str, domains, k: int,
                               allow_params: bool, allow_pixels: bool,
                               client, rewritten_signature: str,
                               max_retries: int = DEFAULT_MAX_RETRIES,
                               ) -> tuple[list[ProgramDraft], int]:
    """Ask for k program candidates; returns (parsed drafts, dropped count).

    Individual candidates with unparseable structure or invalid parameter
    specs are dropped and counted; a response with zero usable candidates
    is retried with the error appended, then errors out.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    onames, rnames, anames = domains
    prompt = render(
        "generate_programs", k=k, rewritten_signature=rewritten_signature,
        description=description, schema_doc=schema_doc,
        onames=sorted(onames), anames=sorted(anames), rnames=sorted(rnames),
        params_rule=PARAMS_RULE_ALLOWED if allow_params else PARAMS_RULE_FORBIDDEN,
        pixels_rule=PIXELS_RULE_ALLOWED if allow_pixels else PIXELS_RULE_FORBIDDEN)
    context = []
    dropped = 0
    for attempt in range(max_retries):
        resp = client.complete(prompt, context, template_id="generate_programs",
                               key=signature.name)
        try:
            payload = extract_json(resp)
            raw = payload["answer"]
            if not isinstance(raw, list) or not raw:
                raise ValueError("'answer' must be a non-empty list")
        except (ValueError, KeyError) as exc:
            context.extend([resp, f"Error: {exc}. Please try again."])
            continue
        drafts = []
        for item in raw[:k]:
            try:
                drafts.append(ProgramDraft(
                    interpretation=str(item["semantic_interpretation"]),
                    script=str(item["function_implementation"]),
                    params=_parse_param_specs(item.get("kwargs", {}))))
            except (ValueError, KeyError, TypeError):
                dropped += 1
        if drafts:
            return drafts, dropped
        context.extend([resp, "Error: no usable candidates. Please try again."])
    raise GatewayError(
        f"no parseable program candidates for {signature.name!r} "
        f"after {max_retries} attempts")


def decide_udf_type(signature: UdfSignature, description: str, domains,
                    client, max_retries: int = DEFAULT_MAX_RETRIES) -> str:
    """'program' or 'model', from a scripted one-word reply."""
    onames, rnames, anames = domains
    concepts = sorted(onames) + sorted(rnames) + sorted(anames)
    prompt = render("decide_udf_type", description=description,
                    concepts=concepts)
    context = []
    for _ in range(max_retries):
        resp = client.complete(prompt, context, template_id="decide_udf_type",
                               key=signature.name)
        word = re.sub(r"[^a-z]", "", resp.lower())
        if word == "programudf":
            return "program"
        if word == "modeludf":
            return "model"
        context.extend([resp, "Error: respond with 'programUDF' or "
                              "'modelUDF' only."])
    raise GatewayError(f"no usable UDF-type decision for {signature.name!r} "
                       f"after {max_retries} attempts")


def relevant_object_classes(signature: UdfSignature, description: str,
                            onames: set, client) -> set:
    """Classes plausibly involved in the concept; anything unusable falls
    back to all classes so sampling never silently narrows to nothing."""
    if not onames:
        raise ValueError("onames must be non-empty")
    prompt = render("filter_object_classes", onames=sorted(onames),
                    signature=signature.render(), description=description)
    try:
        resp = client.complete(prompt, template_id="filter_object_classes",
                               key=signature.name)
        answer = set(extract_json(resp)["answer"])
    except Exception:
        return set(onames)
    chosen = answer & set(onames)
    return chosen if chosen else set(onames)


def vlm_label(unit, signature: UdfSignature, description: str, client,
              db=None, max_retries: int = DEFAULT_MAX_RETRIES) -> bool:
    """One boolean verdict for one unit from the vision-language client.

    Attributes send a cropped object patch; relationships send the pair
    patch with red/blue overlays plus class names and bbox coordinates in
    the text. Mock clients may ignore the (possibly absent) image."""
    if unit.arity != signature.arity:
        raise ValueError("unit arity does not match the signature")
    if signature.arity == 1:
        text = render("vlm_label_attribute", signature=signature.render(),
                      description=description)
    else:
        text = render("vlm_label_relationship", signature=signature.render(),
                      description=description,
                      o0_oname=unit.o0.oname, o0_bbox=list(unit.o0.bbox),
                      o1_oname=unit.o1.oname, o1_bbox=list(unit.o1.bbox))
    try:
        image = unit.patch(overlay=(signature.arity == 2))
    except PixelsUnavailableError:
        image = None
    last = None
    for _ in range(max_retries):
        try:
            return bool(client.label_image(image, text, unit=unit))
        except Exception as exc:
            last = exc
    raise LabelerError(f"labeling failed for unit {unit.uid}: {last}")


@dataclass
class Gateway:
    """Bundle of client + loop settings passed around the pipeline."""

    client: ModelClient
    fps: float = DEFAULT_FPS
    max_retries: int = DEFAULT_MAX_RETRIES

    def translate(self, nl_text: str, registry) -> TranslationOutcome:
        return translate_query(nl_text, registry, self.fps, self.client,
                               self.max_retries)

    def program_candidates(self, signature, description, schema_doc, domains,
                           k, allow_params, allow_pixels, rewritten_signature):
        return request_program_candidates(
            signature, description, schema_doc, domains, k, allow_params,
            allow_pixels, self.client, rewritten_signature, self.max_retries)

    def decide_type(self, signature, description, domains) -> str:
        return decide_udf_type(signature, description, domains, self.client,
                               self.max_retries)

    def object_classes(self, signature, description, onames) -> set:
        return relevant_object_classes(signature, description, onames,
                                       self.client)

    def label(self, unit, signature, description, db=None) -> bool:
        return vlm_label(unit, signature, description, self.client, db=db,
                         max_retries=self.max_retries)

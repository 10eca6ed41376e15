"""End-to-end pipeline: translate, build missing predicates, select,
materialize, re-translate, execute.

Missing predicates are built strictly in proposal order. A proposal whose
selection lands on the dummy stays registered as a dummy (the predicate
is semantically removed) and is flagged in the result rather than treated
as an error; a proposal that fails to build twice aborts the query.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

from . import modelgen, programgen, testkit
from .errors import DegenerateLabelsError, GatewayError, SceneqError
from .executor import evaluate
from .gateway import Gateway, HttpChatClient, MockClient, UdfProposal
from .modelgen import DistillConfig
from .programgen import ProgramGenConfig
from .selection import (
    SelectionConfig,
    SelectionReport,
    SelectionSession,
    select_udf,
)
from .storage import ingest_dataset, materialize_udf
from .udfs import (
    UdfCandidate,
    UdfKind,
    UdfRegistry,
    UdfSignature,
    make_dummy,
    make_value_lookup,
)

STRATEGIES = ("program", "model", "llm", "both")


class PipelineError(SceneqError):
    pass


@dataclass
class PipelineConfig:
    manifest: Path
    strategy: str = "both"
    generation_enabled: bool = True
    labeler: str = "oracle"            # oracle | interactive | vlm
    fixtures: Optional[Path] = None    # mock client scripts; None -> HTTP
    fps: float = 25.0
    seed: int = 0
    vlm_flip_rate: float = 0.0
    extractor: str = "synthetic"       # synthetic | meancolor
    max_rounds: int = 5
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    programgen: ProgramGenConfig = field(default_factory=ProgramGenConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.labeler not in ("oracle", "interactive", "vlm"):
            raise ValueError("labeler must be oracle, interactive, or vlm")

    @classmethod
    def from_file(cls, path: Path) -> "PipelineConfig":
        raw = json.loads(Path(path).read_text())
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        kwargs = dict(raw)
        if "selection" in kwargs:
            kwargs["selection"] = SelectionConfig(**kwargs["selection"])
        if "programgen" in kwargs:
            kwargs["programgen"] = ProgramGenConfig(**kwargs["programgen"])
        if "distill" in kwargs:
            kwargs["distill"] = DistillConfig(**kwargs["distill"])
        kwargs["manifest"] = Path(kwargs["manifest"])
        if kwargs.get("fixtures"):
            kwargs["fixtures"] = Path(kwargs["fixtures"])
        return cls(**kwargs)


@dataclass
class QueryResult:
    nl_text: str
    dsl_text: str
    matched_vids: list[int]
    generated: list[dict]
    selection_reports: list[dict]
    translation_retries: int
    timings: dict = field(default_factory=dict)

    def to_record(self, include_timings: bool = False) -> dict:
        record = {
            "nl_text": self.nl_text,
            "dsl_text": self.dsl_text,
            "matched_vids": self.matched_vids,
            "generated": self.generated,
            "selection_reports": self.selection_reports,
            "translation_retries": self.translation_retries,
        }
        if include_timings:
            record["timings"] = self.timings
        return record

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_record(include_timings), indent=2,
                          sort_keys=True)


class VlmLabeler:
    """User-role labeler backed by the vision-language client."""

    provenance = "vlm"

    def __init__(self, gateway: Gateway, signature: UdfSignature):
        self.gateway = gateway
        self.signature = signature

    def label(self, unit) -> bool:
        return self.gateway.label(unit, self.signature,
                                  self.signature.description)


class Engine:
    """Ingested dataset plus registry, gateway, labelers, and extractor.

    Reusable across run_query calls; each module-level run_query builds a
    fresh engine so repeated runs are bit-identical.
    """

    def __init__(self, config: PipelineConfig, client=None):
        self.config = config
        self.db = ingest_dataset(config.manifest)
        self.registry = UdfRegistry()
        self.declaration = None
        self.rules = None
        manifest = self.db.manifest
        decl_name = manifest.get("declaration")
        if decl_name:
            self.declaration = testkit.load_declaration(
                Path(config.manifest).parent / decl_name)
            self.rules = testkit.rules_from_declaration(self.declaration)
        if client is None:
            if config.fixtures is not None:
                client = MockClient.from_file(config.fixtures,
                                              rules=self.rules,
                                              flip_rate=config.vlm_flip_rate,
                                              seed=config.seed)
            else:
                client = HttpChatClient()
        self.gateway = Gateway(client, fps=config.fps)
        self._prepopulate(manifest.get("udfs", []))
        if config.extractor == "meancolor":
            self.extractor = testkit.MeanColorExtractor(seed=config.seed)
        else:
            if self.rules is None:
                raise PipelineError("synthetic extractor needs a dataset "
                                    "declaration")
            self.extractor = testkit.SyntheticHashExtractor(
                self.rules, seed=config.seed)
        modelgen.register_extractor(self.extractor)
        # interactive selection plugs in here; see service.serve
        self.session_driver: Optional[Callable[[SelectionSession], None]] = None

    def _prepopulate(self, entries: list[dict]):
        """Register manifest-declared UDFs; program entries are executed
        over the whole dataset right away and swapped for value-lookups."""
        for entry in entries:
            signature = UdfSignature(entry["name"], int(entry["arity"]),
                                     entry["description"])
            kind = entry.get("kind", "value_lookup")
            if kind == "value_lookup":
                self.registry.register(make_value_lookup(signature))
            elif kind == "program":
                script = entry.get("script")
                if script is None:
                    script_path = Path(self.config.manifest).parent / \
                        entry["script_path"]
                    script = script_path.read_text()
                candidate = UdfCandidate(signature=signature,
                                         kind=UdfKind.PROGRAM,
                                         program_source=script,
                                         interpretation=entry.get(
                                             "interpretation", ""))
                self.registry.register(candidate)
                materialize_udf(self.db, candidate, self.registry)
            else:
                raise PipelineError(f"unknown manifest UDF kind {kind!r}")

    # ------------------------------------------------------------- labelers

    def labeler_for(self, proposal: UdfProposal):
        mode = self.config.labeler
        if mode == "oracle":
            if self.rules is None:
                raise PipelineError("oracle labeler needs a dataset "
                                    "declaration")
            try:
                return testkit.OracleLabeler(proposal.name, self.rules,
                                             seed=self.config.seed)
            except KeyError as exc:
                raise PipelineError(str(exc)) from exc
        if mode == "vlm":
            return VlmLabeler(self.gateway, proposal.to_signature())
        raise PipelineError("interactive labeling requires the service "
                            "driver")

    # ------------------------------------------------------------ building

    def build_candidates(self, proposal: UdfProposal) -> list[UdfCandidate]:
        signature = proposal.to_signature()
        strategy = self.config.strategy
        kinds = {"program": ("program",), "model": ("model",),
                 "both": ("program", "model")}.get(strategy)
        if kinds is None:  # llm strategy: ask which class to build
            from .storage import active_domains

            decision = self.gateway.decide_type(signature,
                                                proposal.description,
                                                active_domains(self.db))
            kinds = (decision,)
        candidates: list[UdfCandidate] = []
        if "program" in kinds:
            pg_config = self.config.programgen
            if pg_config.allow_pixels and not self.db.has_images:
                pg_config = replace(pg_config, allow_pixels=False)
            candidates.extend(programgen.generate_concrete(
                signature, proposal.description, self.db, self.registry,
                pg_config, self.gateway))
        if "model" in kinds:
            try:
                candidates.append(modelgen.distill_udf(
                    signature, proposal.description, self.db,
                    self.config.distill, self.gateway, self.extractor))
            except (DegenerateLabelsError, GatewayError):
                pass  # falls through to dummy-only selection
        return candidates

    def select(self, candidates: list[UdfCandidate], proposal: UdfProposal,
               ) -> tuple[UdfCandidate, SelectionReport]:
        signature = proposal.to_signature()
        if not candidates:
            dummy = make_dummy(signature)
            report = SelectionReport(candidate_labels=(dummy.label,),
                                     chosen_index=0, chosen_label=dummy.label,
                                     weights=(0.0,), budget=self.config.selection.b,
                                     warning="no candidates generated; dummy "
                                             "chosen without labeling")
            return dummy, report
        if self.session_driver is not None:
            session = SelectionSession(candidates, self.db, signature.arity,
                                       self.gateway, self.config.selection)
            self.session_driver(session)
            return session.result()
        return select_udf(candidates, self.db, signature.arity,
                          self.labeler_for(proposal), self.gateway,
                          self.config.selection)

    def build_udf(self, proposal: UdfProposal,
                  ) -> tuple[UdfCandidate, SelectionReport]:
        if not self.config.generation_enabled:
            dummy = make_dummy(proposal.to_signature())
            report = SelectionReport(candidate_labels=(dummy.label,),
                                     chosen_index=0, chosen_label=dummy.label,
                                     weights=(0.0,),
                                     warning="generation disabled; predicate "
                                             "dummied")
            return dummy, report
        candidates = self.build_candidates(proposal)
        return self.select(candidates, proposal)

    # ------------------------------------------------------------- pipeline

    def run_query(self, nl_text: str) -> QueryResult:
        timings = {}
        generated = []
        reports = []
        failures: dict[str, int] = {}
        t0 = time.perf_counter()
        outcome = self.gateway.translate(nl_text, self.registry)
        timings["translate_s"] = time.perf_counter() - t0
        rounds = 0
        while outcome.kind == "proposals":
            rounds += 1
            if rounds > self.config.max_rounds:
                raise PipelineError(f"still unresolved after "
                                    f"{self.config.max_rounds} build rounds")
            for proposal in outcome.proposals:
                if proposal.name in self.registry:
                    continue
                t1 = time.perf_counter()
                try:
                    winner, report = self.build_udf(proposal)
                except SceneqError as exc:
                    failures[proposal.name] = failures.get(proposal.name, 0) + 1
                    if failures[proposal.name] >= 2:
                        raise PipelineError(
                            f"building {proposal.name!r} failed twice: "
                            f"{exc}") from exc
                    continue
                self.registry.register(winner)
                if winner.kind is not UdfKind.DUMMY:
                    materialize_udf(self.db, winner, self.registry)
                generated.append({
                    "name": proposal.name,
                    "arity": proposal.arity,
                    "kind": winner.kind.value,
                    "label": winner.label,
                    "dummied": winner.kind is UdfKind.DUMMY,
                })
                reports.append(report.to_record())
                timings[f"build_{proposal.name}_s"] = \
                    time.perf_counter() - t1
            t2 = time.perf_counter()
            outcome = self.gateway.translate(nl_text, self.registry)
            timings["translate_s"] += time.perf_counter() - t2
        t3 = time.perf_counter()
        vids = evaluate(outcome.query, self.db, self.registry)
        timings["execute_s"] = time.perf_counter() - t3
        timings["total_s"] = time.perf_counter() - t0
        return QueryResult(nl_text=nl_text, dsl_text=outcome.dsl_text,
                           matched_vids=sorted(vids), generated=generated,
                           selection_reports=reports,
                           translation_retries=outcome.retries,
                           timings=timings)


def run_query(nl_text: str, config: PipelineConfig, client=None) -> QueryResult:
    """Fresh-engine run; identical config + fixtures + seed produce an
    identical result record (timings excluded from the canonical form)."""
    return Engine(config, client=client).run_query(nl_text)

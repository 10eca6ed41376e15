"""Deterministic synthetic datasets with declared ground-truth rules.

Objects move on seeded linear trajectories with wall bounces and carry
latent color/shape bits. Every relationship/attribute row emitted agrees
with a named concept rule, and the rules stay recomputable from records
alone (geometry) or from the declaration's latents (color/shape), which
is what makes oracle labelers and brute-force cross-checks possible.

Rule formulas are written with plain arithmetic (no math.hypot) so that
generated program scripts can mirror them expression-for-expression.
"""

from __future__ import annotations

import hashlib
import json
import random

import numpy as np
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from PIL import Image

from .storage import (
    AttributeRecord,
    FrameRecord,
    ObjectRecord,
    RelationshipRecord,
    ScenegraphDb,
    TupleView,
)
from .udfs import UdfCandidate, UdfKind, UdfSignature

ONAMES = ("box", "disc", "bar")
COLORS = ("red", "green", "blue", "gray")
SHAPES = ("cube", "sphere")

PALETTE = {
    "red": (200, 30, 30),
    "green": (30, 200, 30),
    "blue": (30, 30, 200),
    "gray": (128, 128, 128),
}

NEAR_FRAC = 0.2     # of the frame diagonal
FAR_FRAC = 0.4
LARGE_FRAC = 0.018  # of the frame area

CONCEPT_DESCRIPTIONS = {
    "near": "Whether o0 is near o1",
    "far": "Whether o0 is far from o1",
    "left_of": "Whether o0 is to the left of o1",
    "right_of": "Whether o0 is to the right of o1",
    "behind": "Whether o0 is behind o1",
    "front_of": "Whether o0 is in front of o1",
    "location_left": "Whether o0 is in the left half of the frame",
    "location_top": "Whether o0 is in the top half of the frame",
    "large": "Whether o0 is large",
    "color_red": "Whether the color of o0 is red",
    "color_green": "Whether the color of o0 is green",
    "color_blue": "Whether the color of o0 is blue",
    "color_gray": "Whether the color of o0 is gray",
    "shape_cube": "Whether the shape of o0 is cube",
    "shape_sphere": "Whether the shape of o0 is sphere",
}

GEOMETRY_RELATIONSHIPS = ("near", "far", "left_of", "right_of", "behind",
                          "front_of")
GEOMETRY_ATTRIBUTES = ("location_left", "location_top", "large")
LATENT_ATTRIBUTES = tuple(f"color_{c}" for c in COLORS) + \
    tuple(f"shape_{s}" for s in SHAPES)


@dataclass
class SyntheticSpec:
    seed: int = 42
    n_videos: int = 10
    n_frames: int = 64
    n_objects: int = 5
    width: int = 320
    height: int = 240
    render_images: bool = False


def unit_hash01(seed, tag, uid) -> float:
    """Stable per-unit pseudo-uniform value in [0, 1); independent of
    call order and process, unlike the builtin salted hash()."""
    digest = hashlib.md5(f"{seed}|{tag}|{uid}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2.0 ** 64


def _centroid(bbox):
    x1, y1, x2, y2 = bbox
    return (x1 + x2) / 2, (y1 + y2) / 2


class ConceptRules:
    """Named ground-truth predicates over bboxes and latents."""

    def __init__(self, width: int, height: int, latents: dict):
        self.width = width
        self.height = height
        self.latents = latents  # (vid, oid) -> {"color": ..., "shape": ...}
        self.diag = (width * width + height * height) ** 0.5

    def arity(self, name: str) -> int:
        if name in GEOMETRY_RELATIONSHIPS:
            return 2
        if name in GEOMETRY_ATTRIBUTES or name in LATENT_ATTRIBUTES:
            return 1
        raise KeyError(f"unknown concept {name!r}")

    def names(self) -> list[str]:
        return list(GEOMETRY_RELATIONSHIPS + GEOMETRY_ATTRIBUTES +
                    LATENT_ATTRIBUTES)

    def holds(self, name: str, vid: int, oid0: int, bbox0,
              oid1: Optional[int] = None, bbox1=None) -> bool:
        cx0, cy0 = _centroid(bbox0)
        if name in GEOMETRY_RELATIONSHIPS:
            cx1, cy1 = _centroid(bbox1)
            if name == "near":
                d = ((cx0 - cx1) ** 2 + (cy0 - cy1) ** 2) ** 0.5
                return d < NEAR_FRAC * self.diag
            if name == "far":
                d = ((cx0 - cx1) ** 2 + (cy0 - cy1) ** 2) ** 0.5
                return d > FAR_FRAC * self.diag
            if name == "left_of":
                return cx0 < cx1
            if name == "right_of":
                return cx0 > cx1
            if name == "behind":
                return cy0 < cy1
            if name == "front_of":
                return cy0 > cy1
        if name == "location_left":
            return cx0 < self.width / 2
        if name == "location_top":
            return cy0 < self.height / 2
        if name == "large":
            x1, y1, x2, y2 = bbox0
            return (x2 - x1) * (y2 - y1) > LARGE_FRAC * self.width * self.height
        if name in LATENT_ATTRIBUTES:
            latent = self.latents[(vid, oid0)]
            kind, _, value = name.partition("_")
            return latent[kind] == value
        raise KeyError(f"unknown concept {name!r}")

    def holds_view(self, name: str, view: TupleView) -> bool:
        if self.arity(name) == 1:
            return self.holds(name, view.vid, view.o0.oid, view.o0.bbox)
        return self.holds(name, view.vid, view.o0.oid, view.o0.bbox,
                          view.o1.oid, view.o1.bbox)


@dataclass
class SyntheticDataset:
    spec: SyntheticSpec
    frames: list[FrameRecord]
    objects: list[ObjectRecord]
    relationships: list[RelationshipRecord]
    attributes: list[AttributeRecord]
    latents: dict
    rules: ConceptRules

    def declaration(self, excluded=()) -> dict:
        included = [c for c in self.rules.names() if c not in set(excluded)]
        rel = [r for r in self.relationships if r.rname not in set(excluded)]
        att = [a for a in self.attributes if a.aname not in set(excluded)]
        return {
            "seed": self.spec.seed,
            "n_videos": self.spec.n_videos,
            "n_frames": self.spec.n_frames,
            "n_objects": self.spec.n_objects,
            "width": self.spec.width,
            "height": self.spec.height,
            "onames": sorted({o.oname for o in self.objects}),
            "concepts": {c: {"arity": self.rules.arity(c),
                             "description": CONCEPT_DESCRIPTIONS[c]}
                         for c in self.rules.names()},
            "included_concepts": included,
            "excluded_concepts": sorted(set(excluded)),
            "rule_constants": {"near_frac": NEAR_FRAC, "far_frac": FAR_FRAC,
                               "large_frac": LARGE_FRAC},
            "row_counts": {
                "frames": len(self.frames),
                "objects": len(self.objects),
                "relationships": len(rel),
                "attributes": len(att),
            },
            "latents": {f"{vid}:{oid}": dict(lat)
                        for (vid, oid), lat in sorted(self.latents.items())},
        }

    def write(self, out_dir: Path, exclude_concepts=()) -> Path:
        """Write dataset files, manifest and declaration; returns the
        manifest path. Excluded concepts lose their table rows (their
        rules stay in the declaration) and their value-lookup entries."""
        out_dir = Path(out_dir)
        excluded = set(exclude_concepts)
        rel = [r for r in self.relationships if r.rname not in excluded]
        att = [a for a in self.attributes if a.aname not in excluded]
        db = ScenegraphDb.from_records(self.spec.width, self.spec.height,
                                       self.frames, self.objects, rel, att,
                                       root_dir=out_dir, check=False)
        udf_entries = []
        for oname in sorted({o.oname for o in self.objects}):
            udf_entries.append({"name": oname, "arity": 1,
                                "kind": "value_lookup",
                                "description": f"Whether o0 is a {oname}"})
        for concept in self.rules.names():
            if concept in excluded:
                continue
            udf_entries.append({"name": concept,
                                "arity": self.rules.arity(concept),
                                "kind": "value_lookup",
                                "description": CONCEPT_DESCRIPTIONS[concept]})
        manifest_path = db.save(out_dir, extra_manifest={
            "udfs": udf_entries,
            "declaration": "declaration.json",
        })
        decl = self.declaration(excluded)
        (out_dir / "declaration.json").write_text(
            json.dumps(decl, indent=2, sort_keys=True) + "\n")
        if self.spec.render_images:
            self._render_frames(out_dir)
        return manifest_path

    def _render_frames(self, out_dir: Path):
        spec = self.spec
        by_frame: dict[tuple[int, int], list[ObjectRecord]] = {}
        for o in self.objects:
            by_frame.setdefault((o.vid, o.fid), []).append(o)
        for f in self.frames:
            im = Image.new("RGB", (spec.width, spec.height), (0, 0, 0))
            px = im.load()
            for o in sorted(by_frame.get((f.vid, f.fid), []),
                            key=lambda o: o.oid):
                color = PALETTE[self.latents[(o.vid, o.oid)]["color"]]
                x1, y1, x2, y2 = o.bbox
                for y in range(y1, y2):
                    for x in range(x1, x2):
                        px[x, y] = color
            path = out_dir / "frames" / str(f.vid)
            path.mkdir(parents=True, exist_ok=True)
            im.save(path / f"{f.fid}.png")

    def to_db(self, exclude_concepts=()) -> ScenegraphDb:
        excluded = set(exclude_concepts)
        rel = [r for r in self.relationships if r.rname not in excluded]
        att = [a for a in self.attributes if a.aname not in excluded]
        return ScenegraphDb.from_records(self.spec.width, self.spec.height,
                                         self.frames, self.objects, rel, att,
                                         check=False)


def build_dataset(spec: SyntheticSpec) -> SyntheticDataset:
    """Simulate trajectories and emit all four tables plus latents."""
    rng = random.Random(spec.seed)
    frames, objects, relationships, attributes = [], [], [], []
    latents = {}
    rules = ConceptRules(spec.width, spec.height, latents)
    for vid in range(spec.n_videos):
        movers = []
        for oid in range(spec.n_objects):
            w = rng.randint(16, 56)
            h = rng.randint(16, 56)
            x = rng.uniform(0, spec.width - w)
            y = rng.uniform(0, spec.height - h)
            vx = rng.uniform(-6, 6)
            vy = rng.uniform(-6, 6)
            movers.append([x, y, vx, vy, w, h])
            latents[(vid, oid)] = {"color": rng.choice(COLORS),
                                   "shape": rng.choice(SHAPES)}
        for fid in range(spec.n_frames):
            image_ref = (f"frames/{vid}/{fid}.png"
                         if spec.render_images else None)
            frames.append(FrameRecord(vid=vid, fid=fid, image_ref=image_ref))
            bboxes = {}
            for oid, m in enumerate(movers):
                x, y, vx, vy, w, h = m
                x1 = int(round(x))
                y1 = int(round(y))
                x1 = min(max(x1, 0), spec.width - w)
                y1 = min(max(y1, 0), spec.height - h)
                bbox = (x1, y1, x1 + w, y1 + h)
                bboxes[oid] = bbox
                rec = ObjectRecord(vid=vid, fid=fid, oid=oid,
                                   oname=ONAMES[oid % len(ONAMES)], bbox=bbox)
                objects.append(rec)
                # advance with wall bounces
                x += vx
                y += vy
                if x < 0 or x > spec.width - w:
                    vx = -vx
                    x = min(max(x, 0), spec.width - w)
                if y < 0 or y > spec.height - h:
                    vy = -vy
                    y = min(max(y, 0), spec.height - h)
                m[0], m[1], m[2], m[3] = x, y, vx, vy
            for oid, bbox in bboxes.items():
                for name in GEOMETRY_ATTRIBUTES:
                    if rules.holds(name, vid, oid, bbox):
                        attributes.append(AttributeRecord(vid=vid, fid=fid,
                                                          oid=oid, aname=name))
                for name in LATENT_ATTRIBUTES:
                    if rules.holds(name, vid, oid, bbox):
                        attributes.append(AttributeRecord(vid=vid, fid=fid,
                                                          oid=oid, aname=name))
            for oid0, bbox0 in bboxes.items():
                for oid1, bbox1 in bboxes.items():
                    if oid0 == oid1:
                        continue
                    for name in GEOMETRY_RELATIONSHIPS:
                        if rules.holds(name, vid, oid0, bbox0, oid1, bbox1):
                            relationships.append(
                                RelationshipRecord(vid=vid, fid=fid, oid1=oid0,
                                                   rname=name, oid2=oid1))
    return SyntheticDataset(spec=spec, frames=frames, objects=objects,
                            relationships=relationships,
                            attributes=attributes, latents=latents,
                            rules=rules)


def generate(spec: SyntheticSpec, out_dir: Path, exclude_concepts=()) -> Path:
    """Build and write a dataset; returns the manifest path."""
    return build_dataset(spec).write(out_dir, exclude_concepts)


def load_declaration(path: Path) -> dict:
    return json.loads(Path(path).read_text())


def rules_from_declaration(decl: dict) -> ConceptRules:
    latents = {}
    for key, lat in decl.get("latents", {}).items():
        vid, _, oid = key.partition(":")
        latents[(int(vid), int(oid))] = lat
    return ConceptRules(decl["width"], decl["height"], latents)


# ---------------------------------------------------------------- labelers


class OracleLabeler:
    """Plays the user/VLM role in tests: ground-truth rule plus an
    optional seeded flip rate."""

    provenance = "oracle"

    def __init__(self, concept: str, rules: ConceptRules,
                 flip_rate: float = 0.0, seed: int = 0):
        if concept not in rules.names():
            raise KeyError(f"no rule declared for concept {concept!r}")
        self.concept = concept
        self.rules = rules
        self.flip_rate = flip_rate
        self.seed = seed

    def label(self, view: TupleView) -> bool:
        truth = self.rules.holds_view(self.concept, view)
        if self.flip_rate > 0 and unit_hash01(
                self.seed, f"flip:{self.concept}", view.uid) < self.flip_rate:
            return not truth
        return truth


def oracle_labeler(concept: str, declaration: dict, flip_rate: float = 0.0,
                   seed: int = 0) -> OracleLabeler:
    return OracleLabeler(concept, rules_from_declaration(declaration),
                         flip_rate=flip_rate, seed=seed)


# ------------------------------------------------------- program scripts


_RULE_BODIES_ARITY2 = {
    "near": ("d = ((cx0 - cx1) ** 2 + (cy0 - cy1) ** 2) ** 0.5\n"
             "    return d < {frac} * (width ** 2 + height ** 2) ** 0.5"),
    "far": ("d = ((cx0 - cx1) ** 2 + (cy0 - cy1) ** 2) ** 0.5\n"
            "    return d > {frac} * (width ** 2 + height ** 2) ** 0.5"),
    "left_of": "return cx0 < cx1",
    "right_of": "return cx0 > cx1",
    "behind": "return cy0 < cy1",
    "front_of": "return cy0 > cy1",
}


def correct_program_script(concept: str) -> str:
    """Program source matching the declared rule expression-for-expression."""
    if concept in GEOMETRY_RELATIONSHIPS:
        frac = {"near": NEAR_FRAC, "far": FAR_FRAC}.get(concept)
        body = _RULE_BODIES_ARITY2[concept].format(frac=frac)
        return (
            f"def py_{concept}(img, o0_oname, o0_x1, o0_y1, o0_x2, o0_y2, "
            f"o0_anames, o1_oname, o1_x1, o1_y1, o1_x2, o1_y2, o1_anames, "
            f"o0_o1_rnames, o1_o0_rnames, height, width, **kwargs):\n"
            f"    cx0 = (o0_x1 + o0_x2) / 2\n"
            f"    cy0 = (o0_y1 + o0_y2) / 2\n"
            f"    cx1 = (o1_x1 + o1_x2) / 2\n"
            f"    cy1 = (o1_y1 + o1_y2) / 2\n"
            f"    {body}\n"
        )
    if concept == "location_left":
        body = "return (o0_x1 + o0_x2) / 2 < width / 2"
    elif concept == "location_top":
        body = "return (o0_y1 + o0_y2) / 2 < height / 2"
    elif concept == "large":
        body = (f"return (o0_x2 - o0_x1) * (o0_y2 - o0_y1) > "
                f"{LARGE_FRAC} * width * height")
    else:
        raise KeyError(f"no program form for concept {concept!r}")
    return (
        f"def py_{concept}(img, o0_oname, o0_x1, o0_y1, o0_x2, o0_y2, "
        f"o0_anames, height, width, **kwargs):\n"
        f"    {body}\n"
    )


def planted_program(concept: str, arity: int, accuracy: float,
                    salt: int, name: Optional[str] = None) -> str:
    """A script that agrees with the concept rule with the given
    probability, flipped by a stable hash of the bbox coordinates.

    Only works for geometry concepts whose truth is computable inside the
    sandbox; accuracy=0.5 yields an (approximately) coin-flip predictor.
    """
    name = name or concept
    flip_threshold = int(round((1.0 - accuracy) * 1000003))
    if arity == 2:
        truth = _RULE_BODIES_ARITY2[concept].format(
            frac={"near": NEAR_FRAC, "far": FAR_FRAC}.get(concept))
        truth = truth.replace("return ", "truth = ", 1)
        coords = ("o0_x1 * 73856093 + o0_y1 * 19349663 + o0_x2 * 83492791 "
                  "+ o0_y2 * 15485863 + o1_x1 * 49979687 + o1_y1 * 67867967 "
                  "+ o1_x2 * 32452843 + o1_y2 * 86028121")
        return (
            f"def py_{name}(img, o0_oname, o0_x1, o0_y1, o0_x2, o0_y2, "
            f"o0_anames, o1_oname, o1_x1, o1_y1, o1_x2, o1_y2, o1_anames, "
            f"o0_o1_rnames, o1_o0_rnames, height, width, **kwargs):\n"
            f"    cx0 = (o0_x1 + o0_x2) / 2\n"
            f"    cy0 = (o0_y1 + o0_y2) / 2\n"
            f"    cx1 = (o1_x1 + o1_x2) / 2\n"
            f"    cy1 = (o1_y1 + o1_y2) / 2\n"
            f"    {truth}\n"
            f"    h = ({coords} + {salt}) % 1000003\n"
            f"    if h < {flip_threshold}:\n"
            f"        return not truth\n"
            f"    return truth\n"
        )
    base = correct_program_script(concept)
    body = base.split(":\n", 1)[1]
    body = body.replace("return ", "truth = ", 1).rstrip("\n")
    coords = ("o0_x1 * 73856093 + o0_y1 * 19349663 + o0_x2 * 83492791 "
              "+ o0_y2 * 15485863")
    return (
        f"def py_{name}(img, o0_oname, o0_x1, o0_y1, o0_x2, o0_y2, "
        f"o0_anames, height, width, **kwargs):\n"
        f"{body}\n"
        f"    h = ({coords} + {salt}) % 1000003\n"
        f"    if h < {flip_threshold}:\n"
        f"        return not truth\n"
        f"    return truth\n"
    )


def planted_candidate(concept: str, arity: int, accuracy: float, salt: int,
                      label: Optional[str] = None) -> UdfCandidate:
    sig = UdfSignature(concept, arity, CONCEPT_DESCRIPTIONS[concept])
    return UdfCandidate(signature=sig, kind=UdfKind.PROGRAM,
                        interpretation=f"planted accuracy {accuracy}",
                        program_source=planted_program(concept, arity,
                                                       accuracy, salt),
                        label=label or f"{concept}:acc{accuracy}:s{salt}")


# ------------------------------------------------------ query generation


def random_query(rng: random.Random, arity1_names, arity2_names,
                 max_vars: int = 3, max_graphs: int = 3,
                 max_preds: int = 3, durations=(1, 1, 1, 5, 10, 20)):
    """Seeded valid Query over the given predicate names."""
    from .dsl import Predicate, Query, RegionGraphSpec, Variable

    arity1_names = sorted(arity1_names)
    arity2_names = sorted(arity2_names)
    n_vars = rng.randint(1, max_vars) if arity2_names else 1
    if n_vars == 1 and not arity1_names:
        n_vars = 2
    variables = [Variable(i) for i in range(n_vars)]
    graphs = []
    unused = set(range(n_vars))
    for gi in range(rng.randint(1, max_graphs)):
        preds = []
        seen = set()
        for _ in range(rng.randint(1, max_preds)):
            use_pair = n_vars >= 2 and arity2_names and \
                (not arity1_names or rng.random() < 0.5)
            if use_pair:
                name = rng.choice(arity2_names)
                a, b = rng.sample(variables, 2)
                pred = Predicate(name, (a, b))
            else:
                name = rng.choice(arity1_names)
                pred = Predicate(name, (rng.choice(variables),))
            if pred not in seen:
                seen.add(pred)
                preds.append(pred)
                unused -= {v.index for v in pred.args}
        graphs.append(RegionGraphSpec(tuple(preds), rng.choice(durations)))
    # force any unused variable into the last graph so indices stay contiguous
    for idx in sorted(unused):
        others = [v for v in variables if v.index != idx]
        if arity2_names and others:
            extra = Predicate(rng.choice(arity2_names),
                              (Variable(idx), rng.choice(others)))
        else:
            extra = Predicate(rng.choice(arity1_names), (Variable(idx),))
        last = graphs[-1]
        if extra not in last.predicates:
            graphs[-1] = RegionGraphSpec(last.predicates + (extra,),
                                         last.duration)
    return Query(tuple(graphs))


def registered_names_by_arity(registry) -> tuple[list[str], list[str]]:
    names1, names2 = [], []
    for name in registry.names():
        if registry.lookup(name).signature.arity == 1:
            names1.append(name)
        else:
            names2.append(name)
    return names1, names2


# --------------------------------------------------------- end-to-end fixtures


@dataclass(frozen=True)
class E2eCase:
    """One synthetic NL query with withheld concepts and frozen truth."""

    index: int
    nl_text: str
    dsl_text: str
    missing: tuple[str, ...]
    gt_vids: tuple[int, ...]
    dummied_vids: tuple[int, ...]
    attempt_seed: int


def _vid_set_f1(predicted, truth) -> float:
    predicted, truth = set(predicted), set(truth)
    tp = len(predicted & truth)
    if tp == 0:
        return 0.0
    precision = tp / len(predicted)
    recall = tp / len(truth)
    return 2 * precision * recall / (precision + recall)


def full_registry(dataset: SyntheticDataset, exclude=(), dummies=()):
    """Value-lookup registry over class names and declared concepts;
    `dummies` names get always-true entries instead."""
    from .udfs import UdfRegistry, make_dummy, make_value_lookup

    reg = UdfRegistry()
    for oname in sorted({o.oname for o in dataset.objects}):
        reg.register(make_value_lookup(
            UdfSignature(oname, 1, f"Whether o0 is a {oname}")))
    for concept in dataset.rules.names():
        if concept in exclude:
            continue
        sig = UdfSignature(concept, dataset.rules.arity(concept),
                           CONCEPT_DESCRIPTIONS[concept])
        if concept in dummies:
            reg.register(make_dummy(sig))
        else:
            reg.register(make_value_lookup(sig))
    return reg


def _e2e_query(rng: random.Random):
    """Query shape for the self-enhancement suite: a latent-attribute +
    relationship core so results are selective, always >= 1 relationship."""
    from .dsl import Predicate, Query, RegionGraphSpec, Variable

    o0, o1 = Variable(0), Variable(1)
    rels = list(GEOMETRY_RELATIONSHIPS)
    first = [Predicate(f"color_{rng.choice(COLORS)}", (o0,)),
             Predicate(f"shape_{rng.choice(SHAPES)}", (o0,)),
             Predicate(rng.choice(rels), (o0, o1))]
    if rng.random() < 0.4:
        extra_rel = Predicate(rng.choice(rels), (o0, o1))
        if extra_rel not in first:
            first.append(extra_rel)
    if rng.random() < 0.6:
        first.append(Predicate(f"color_{rng.choice(COLORS)}", (o1,)))
    graphs = [RegionGraphSpec(tuple(first), rng.choice((1, 1, 4)))]
    if rng.random() < 0.7:
        second = [Predicate(rng.choice(("near", "far")), (o0, o1))]
        if second[0] not in first:
            graphs.append(RegionGraphSpec(tuple(second),
                                          rng.choice((4, 8, 16))))
    return Query(tuple(graphs))


def build_e2e_suite(dataset: SyntheticDataset, n_cases: int = 10,
                    seed: int = 0, min_missing: int = 1,
                    max_missing: int = 3) -> list[E2eCase]:
    """Target queries for the self-enhancement experiment.

    Each case withholds 1-3 of its geometry relationship concepts and is
    admitted only when (a) the ground-truth query matches at least 5% of
    the videos, (b) dummying the withheld predicates degrades the video-set
    F1 to <= 0.6, and (c) the brute-force evaluator's size guard holds, so
    oracle cross-checks stay tractable. Seeds retry until all constraints
    hold; the admitted attempt seed is recorded.
    """
    import itertools

    from .dsl import print_query
    from .executor import evaluate

    db = dataset.to_db()
    reg_full = full_registry(dataset)
    min_positive = max(1, -(-dataset.spec.n_videos * 5 // 100))
    n_vids = dataset.spec.n_videos
    cases = []
    attempt = 0
    while len(cases) < n_cases:
        attempt += 1
        if attempt > 500 * n_cases:
            raise RuntimeError("could not satisfy e2e fixture constraints")
        rng = random.Random(f"{seed}|case{len(cases)}|try{attempt}")
        query = _e2e_query(rng)
        rel_names = sorted({p.name for p in query.predicates()
                            if p.arity == 2})
        if len(rel_names) < min_missing:
            continue
        gt = evaluate(query, db, reg_full)
        # F1 of a dummied superset d >= gt can only drop to 0.6 when the
        # result can grow enough: 2g/(g+d) <= 0.6 needs d >= 7g/3
        if not (min_positive <= len(gt) < n_vids) or \
                len(gt) * 7 / 3 > n_vids:
            continue
        # cycle the preferred number of withheld concepts through 1..3
        desired = min(max_missing, len(rel_names),
                      min_missing + len(cases) % max_missing)
        found = None
        for size in range(desired, min_missing - 1, -1):
            for missing in itertools.combinations(rel_names, size):
                dummied = evaluate(query, db,
                                   full_registry(dataset, dummies=missing))
                if _vid_set_f1(dummied, gt) <= 0.6:
                    found = (tuple(missing), dummied)
                    break
            if found:
                break
        if found is None:
            continue
        missing, dummied = found
        dsl_text = print_query(query)
        cases.append(E2eCase(
            index=len(cases),
            nl_text=f"clip request {len(cases)}: find videos matching "
                    f"{dsl_text}",
            dsl_text=dsl_text,
            missing=missing,
            gt_vids=tuple(sorted(gt)),
            dummied_vids=tuple(sorted(dummied)),
            attempt_seed=attempt))
    return cases


def flawed_program_entries(concept: str, arity: int, salt_base: int):
    """Plausible-but-wrong candidates accompanying the correct program."""
    entries = [
        {"semantic_interpretation": f"noisy variant a of {concept}",
         "function_implementation": planted_program(concept, arity, 0.65,
                                                    salt_base + 1),
         "kwargs": {}},
        {"semantic_interpretation": f"noisy variant b of {concept}",
         "function_implementation": planted_program(concept, arity, 0.55,
                                                    salt_base + 2),
         "kwargs": {}},
        {"semantic_interpretation": f"coin-flip variant of {concept}",
         "function_implementation": planted_program(concept, arity, 0.5,
                                                    salt_base + 3),
         "kwargs": {}},
    ]
    if arity == 2 and concept in ("near", "far"):
        cmp_op = "<" if concept == "near" else ">"
        entries.append({
            "semantic_interpretation": f"threshold-parameterized {concept}",
            "function_implementation": (
                f"def py_{concept}(img, o0_oname, o0_x1, o0_y1, o0_x2, "
                f"o0_y2, o0_anames, o1_oname, o1_x1, o1_y1, o1_x2, o1_y2, "
                f"o1_anames, o0_o1_rnames, o1_o0_rnames, height, width, "
                f"**kwargs):\n"
                f"    margin = kwargs.get('margin', 0.35)\n"
                f"    cx0 = (o0_x1 + o0_x2) / 2\n"
                f"    cy0 = (o0_y1 + o0_y2) / 2\n"
                f"    cx1 = (o1_x1 + o1_x2) / 2\n"
                f"    cy1 = (o1_y1 + o1_y2) / 2\n"
                f"    d = ((cx0 - cx1) ** 2 + (cy0 - cy1) ** 2) ** 0.5\n"
                f"    return d {cmp_op} margin * "
                f"(width ** 2 + height ** 2) ** 0.5\n"),
            "kwargs": {"margin": {"default": 0.35, "min": 0.05,
                                  "max": 0.5}},
        })
    return entries


def mock_fixture_for_cases(cases, dataset: SyntheticDataset) -> dict:
    """MockClient fixture covering translation, proposals, and program
    generation for every concept any case withholds."""
    fixture = {"parse_query": {}, "propose_udfs": {},
               "generate_programs": {}, "decide_udf_type": {},
               "filter_object_classes": {}}
    onames = sorted({o.oname for o in dataset.objects})
    all_missing = set()
    for case in cases:
        fixture["parse_query"][case.nl_text] = \
            [f"PARSE_YES\n{case.dsl_text}"]
        proposals = [{"signature": proposal_signature_text(name, dataset),
                      "description": CONCEPT_DESCRIPTIONS[name]}
                     for name in case.missing]
        fixture["propose_udfs"][case.nl_text] = \
            [json.dumps({"answer": proposals})]
        all_missing.update(case.missing)
    for i, concept in enumerate(sorted(all_missing)):
        arity = dataset.rules.arity(concept)
        entries = [{"semantic_interpretation": f"exact rule for {concept}",
                    "function_implementation":
                        correct_program_script(concept),
                    "kwargs": {}}]
        entries.extend(flawed_program_entries(concept, arity, salt_base=13 * i))
        fixture["generate_programs"][concept] = \
            [json.dumps({"answer": entries})]
        fixture["decide_udf_type"][concept] = ["programUDF"]
        fixture["filter_object_classes"][concept] = \
            [json.dumps({"answer": onames})]
    return fixture


def proposal_signature_text(name: str, dataset: SyntheticDataset) -> str:
    args = "o0" if dataset.rules.arity(name) == 1 else "o0, o1"
    return f"{name}({args})"


def write_mock_fixture(path, fixture: dict):
    Path(path).write_text(json.dumps(fixture, indent=2, sort_keys=True))
    return Path(path)


# ----------------------------------------------------------- feature extractors


class SyntheticHashExtractor:
    """Deterministic stand-in for a pretrained vision extractor.

    Embeddings are seeded-hash unit vectors combined from the unit's class
    name, planted latent bits, and quantized bbox geometry; quantization
    buckets are aligned with the declared rule thresholds (e.g. distance
    buckets of 0.05 x diagonal) so declared concepts stay linearly
    recoverable. Works straight off unit metadata via embed_unit_parts, so
    it needs no rendered frames.
    """

    def __init__(self, rules: ConceptRules, seed: int = 0,
                 image_dim: int = 16, text_dim: int = 8):
        self.rules = rules
        self.seed = seed
        self.image_dim = image_dim
        self.text_dim = text_dim
        self.identity = f"synthetic:d{image_dim}t{text_dim}s{seed}"
        self._cache: dict[tuple[str, int], "np.ndarray"] = {}

    def _hvec(self, key: str, dim: int):
        cached = self._cache.get((key, dim))
        if cached is None:
            digest = hashlib.md5(f"{self.seed}|{key}".encode()).digest()
            rng = np.random.RandomState(int.from_bytes(digest[:4], "big"))
            vec = rng.standard_normal(dim)
            cached = vec / np.linalg.norm(vec)
            self._cache[(key, dim)] = cached
        return cached

    def embed_text(self, text: str):
        return self._hvec(f"text:{text}", self.text_dim)

    def embed_image(self, image):
        raise NotImplementedError(
            "synthetic extractor embeds unit metadata, not pixels")

    def _object_vec(self, vid, oid, oname, bbox):
        x1, y1, x2, y2 = bbox
        cx, cy = (x1 + x2) / 2, (y1 + y2) / 2
        w, h = self.rules.width, self.rules.height
        lat = self.rules.latents.get((vid, oid), {"color": "none",
                                                  "shape": "none"})
        area_bucket = int((x2 - x1) * (y2 - y1) / (0.5 * LARGE_FRAC * w * h))
        vec = (self._hvec(f"class:{oname}", self.image_dim)
               + self._hvec(f"color:{lat['color']}", self.image_dim)
               + self._hvec(f"shape:{lat['shape']}", self.image_dim)
               + area_bucket * self._hvec("basis:area", self.image_dim)
               + int(8 * cx / w) * self._hvec("basis:cx", self.image_dim)
               + int(8 * cy / h) * self._hvec("basis:cy", self.image_dim)
               + (1 if cx < w / 2 else -1) * self._hvec("basis:lefthalf",
                                                        self.image_dim)
               + (1 if cy < h / 2 else -1) * self._hvec("basis:tophalf",
                                                        self.image_dim))
        return vec / np.linalg.norm(vec)

    def _pair_vec(self, unit: TupleView):
        cx0, cy0 = _centroid(unit.o0.bbox)
        cx1, cy1 = _centroid(unit.o1.bbox)
        dx, dy = cx1 - cx0, cy1 - cy0
        dist = (dx * dx + dy * dy) ** 0.5
        dist_bucket = int(dist / (0.05 * self.rules.diag))
        sgn = lambda v: (v > 0) - (v < 0)
        vec = (self._hvec("pair", self.image_dim)
               + dist_bucket * self._hvec("basis:dist", self.image_dim)
               + int(8 * dx / self.rules.width) * self._hvec("basis:dx",
                                                             self.image_dim)
               + int(8 * dy / self.rules.height) * self._hvec("basis:dy",
                                                              self.image_dim)
               + sgn(dx) * self._hvec("basis:sgn_dx", self.image_dim)
               + sgn(dy) * self._hvec("basis:sgn_dy", self.image_dim))
        return vec / np.linalg.norm(vec)

    def embed_unit_parts(self, unit: TupleView):
        if unit.arity == 1:
            return [self._object_vec(unit.vid, unit.o0.oid, unit.o0.oname,
                                     unit.o0.bbox)]
        subject = self._object_vec(unit.vid, unit.o0.oid, unit.o0.oname,
                                   unit.o0.bbox)
        target = self._object_vec(unit.vid, unit.o1.oid, unit.o1.oname,
                                  unit.o1.bbox)
        role_s = self._hvec("role:subject", self.image_dim)
        role_t = self._hvec("role:target", self.image_dim)
        return [
            self._pair_vec(unit),
            (subject + role_s) / np.linalg.norm(subject + role_s),
            (target + role_t) / np.linalg.norm(target + role_t),
        ]


class MeanColorExtractor:
    """Tiny pixel-reading extractor for rendered-frame smoke tests."""

    image_dim = 8
    text_dim = 4

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.identity = f"meancolor:s{seed}"

    def embed_image(self, image):
        arr = np.asarray(image, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError("expected an (H, W, 3) image")
        h, w = arr.shape[:2]
        means = arr.reshape(-1, 3).mean(axis=0) / 255.0
        nonzero = float((arr.sum(axis=2) > 0).mean())
        vec = np.array([means[0], means[1], means[2], arr.std() / 255.0,
                        nonzero, h / 1000.0, w / 1000.0, 1.0])
        return vec

    def embed_text(self, text: str):
        digest = hashlib.md5(f"{self.seed}|{text}".encode()).digest()
        rng = np.random.RandomState(int.from_bytes(digest[:4], "big"))
        vec = rng.standard_normal(self.text_dim)
        return vec / np.linalg.norm(vec)

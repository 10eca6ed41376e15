"""Scene-graph relational store.

Four tables (frames, objects, relationships, attributes) loaded from a
manifest of line-delimited JSON record files. Pixels are never stored in
the tables: a frame row carries an ``image_ref`` path and images are
loaded lazily on demand so pixel-free datasets are first-class.

Writes go through a single lock (materialization holds it for its batch
insert); reads are lock-free over immutable snapshots.
"""

from __future__ import annotations

import json
import random
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw

from .errors import (
    EmptyPopulationError,
    IngestError,
    MaterializeError,
    PixelsUnavailableError,
)

Bbox = tuple[int, int, int, int]


@dataclass(frozen=True)
class FrameRecord:
    vid: int
    fid: int
    image_ref: Optional[str] = None


@dataclass(frozen=True)
class ObjectRecord:
    vid: int
    fid: int
    oid: int
    oname: str
    bbox: Bbox


@dataclass(frozen=True)
class RelationshipRecord:
    vid: int
    fid: int
    oid1: int
    rname: str
    oid2: int


@dataclass(frozen=True)
class AttributeRecord:
    vid: int
    fid: int
    oid: int
    aname: str


@dataclass(frozen=True)
class ObjectView:
    """One object's columns as seen by a UDF."""

    oid: int
    oname: str
    bbox: Bbox
    anames: frozenset[str]


class TupleView:
    """The evaluation unit handed to UDFs.

    Arity 1 wraps a single object occurrence, arity 2 an ordered pair of
    distinct objects in the same frame. All derived fields (attribute and
    relationship name sets) are snapshots taken at construction time.
    """

    __slots__ = ("vid", "fid", "height", "width", "o0", "o1",
                 "o0_o1_rnames", "o1_o0_rnames", "uid", "_db")

    def __init__(self, db, vid, fid, o0, o1=None,
                 o0_o1_rnames=None, o1_o0_rnames=None):
        self.vid = vid
        self.fid = fid
        self.height = db.height
        self.width = db.width
        self.o0 = o0
        self.o1 = o1
        self.o0_o1_rnames = o0_o1_rnames
        self.o1_o0_rnames = o1_o0_rnames
        self._db = db
        if o1 is None:
            self.uid = (vid, fid, o0.oid)
        else:
            self.uid = (vid, fid, o0.oid, o1.oid)

    @property
    def arity(self) -> int:
        return 1 if self.o1 is None else 2

    def frame_image(self) -> np.ndarray:
        """Load the full frame as an (H, W, 3) uint8 array."""
        return self._db.load_frame(self.vid, self.fid)

    def patch(self, overlay: bool = False, mask: Optional[str] = None) -> np.ndarray:
        bboxes = [self.o0.bbox] if self.o1 is None else [self.o0.bbox, self.o1.bbox]
        return get_frame_patch(self._db, self.vid, self.fid, bboxes,
                               overlay=overlay, mask=mask)

    def __repr__(self):
        return f"TupleView(uid={self.uid})"


# Canonical column order for each table's JSONL serialization.
_FRAME_COLS = ("vid", "fid", "image_ref")
_OBJECT_COLS = ("vid", "fid", "oid", "oname", "x1", "y1", "x2", "y2")
_REL_COLS = ("vid", "fid", "oid1", "rname", "oid2")
_ATTR_COLS = ("vid", "fid", "oid", "aname")


def _dump_row(cols: Sequence[str], values: dict) -> str:
    return json.dumps({c: values[c] for c in cols}, separators=(", ", ": "))


def _frame_row(r: FrameRecord) -> str:
    return _dump_row(_FRAME_COLS, {"vid": r.vid, "fid": r.fid, "image_ref": r.image_ref})


def _object_row(r: ObjectRecord) -> str:
    x1, y1, x2, y2 = r.bbox
    return _dump_row(_OBJECT_COLS, {"vid": r.vid, "fid": r.fid, "oid": r.oid,
                                    "oname": r.oname, "x1": x1, "y1": y1,
                                    "x2": x2, "y2": y2})


def _rel_row(r: RelationshipRecord) -> str:
    return _dump_row(_REL_COLS, {"vid": r.vid, "fid": r.fid, "oid1": r.oid1,
                                 "rname": r.rname, "oid2": r.oid2})


def _attr_row(r: AttributeRecord) -> str:
    return _dump_row(_ATTR_COLS, {"vid": r.vid, "fid": r.fid, "oid": r.oid,
                                  "aname": r.aname})


class ScenegraphDb:
    """In-memory scene-graph store with lookup indices."""

    def __init__(self, width: int, height: int, root_dir: Optional[Path] = None):
        self.width = width
        self.height = height
        self.root_dir = Path(root_dir) if root_dir is not None else None
        self.frames: list[FrameRecord] = []
        self.objects: list[ObjectRecord] = []
        self.relationships: list[RelationshipRecord] = []
        self.attributes: list[AttributeRecord] = []
        self.materialized: set[str] = set()
        self._write_lock = threading.Lock()
        self._image_cache: OrderedDict[tuple[int, int], np.ndarray] = OrderedDict()
        self._rebuild_indices()

    # ---------------------------------------------------------------- indices

    def _rebuild_indices(self):
        self._frame_by_key: dict[tuple[int, int], FrameRecord] = {}
        self._fids_by_vid: dict[int, list[int]] = {}
        self._objects_by_frame: dict[tuple[int, int], dict[int, ObjectRecord]] = {}
        self._anames_by_obj: dict[tuple[int, int, int], set[str]] = {}
        self._rnames_by_pair: dict[tuple[int, int, int, int], set[str]] = {}
        for f in self.frames:
            self._frame_by_key[(f.vid, f.fid)] = f
            self._fids_by_vid.setdefault(f.vid, []).append(f.fid)
        for o in self.objects:
            self._objects_by_frame.setdefault((o.vid, o.fid), {})[o.oid] = o
        for a in self.attributes:
            self._anames_by_obj.setdefault((a.vid, a.fid, a.oid), set()).add(a.aname)
        for r in self.relationships:
            self._rnames_by_pair.setdefault(
                (r.vid, r.fid, r.oid1, r.oid2), set()).add(r.rname)
        for fids in self._fids_by_vid.values():
            fids.sort()

    @property
    def vids(self) -> list[int]:
        return sorted(self._fids_by_vid)

    def fids(self, vid: int) -> list[int]:
        return self._fids_by_vid.get(vid, [])

    def objects_in_frame(self, vid: int, fid: int) -> dict[int, ObjectRecord]:
        return self._objects_by_frame.get((vid, fid), {})

    # ------------------------------------------------------------ population

    @classmethod
    def from_records(cls, width, height, frames, objects, relationships,
                     attributes, root_dir=None, check=True) -> "ScenegraphDb":
        db = cls(width, height, root_dir=root_dir)
        db.frames = list(frames)
        db.objects = list(objects)
        db.relationships = list(relationships)
        db.attributes = list(attributes)
        db._rebuild_indices()
        if check:
            db._check_invariants()
        return db

    def _check_invariants(self):
        seen = set()
        for f in self.frames:
            if (f.vid, f.fid) in seen:
                raise IngestError(f"duplicate frame (vid={f.vid}, fid={f.fid})")
            seen.add((f.vid, f.fid))
        for vid, fids in self._fids_by_vid.items():
            if fids != list(range(len(fids))):
                raise IngestError(f"frame ids for vid={vid} not contiguous from 0")
        seen = set()
        for o in self.objects:
            key = (o.vid, o.fid, o.oid)
            if key in seen:
                raise IngestError(f"duplicate object {key}")
            seen.add(key)
            self._check_object(o)
        seen = set()
        for r in self.relationships:
            key = (r.vid, r.fid, r.oid1, r.rname, r.oid2)
            if key in seen:
                raise IngestError(f"duplicate relationship {key}")
            seen.add(key)
            self._check_relationship(r)
        seen = set()
        for a in self.attributes:
            key = (a.vid, a.fid, a.oid, a.aname)
            if key in seen:
                raise IngestError(f"duplicate attribute {key}")
            seen.add(key)
            if a.oid not in self.objects_in_frame(a.vid, a.fid):
                raise IngestError(
                    f"attribute row (vid={a.vid}, fid={a.fid}, oid={a.oid}, "
                    f"aname={a.aname!r}) references missing object")

    def _check_object(self, o: ObjectRecord):
        x1, y1, x2, y2 = o.bbox
        where = f"(vid={o.vid}, fid={o.fid}, oid={o.oid})"
        if (o.vid, o.fid) not in self._frame_by_key:
            raise IngestError(f"object {where} references missing frame")
        if not (x1 < x2 and y1 < y2):
            raise IngestError(f"object {where} has degenerate bbox {o.bbox}")
        if x1 < 0 or y1 < 0 or x2 > self.width or y2 > self.height:
            raise IngestError(f"object {where} bbox {o.bbox} outside "
                              f"{self.width}x{self.height} frame")

    def _check_relationship(self, r: RelationshipRecord):
        where = f"(vid={r.vid}, fid={r.fid}, {r.oid1}-{r.rname!r}->{r.oid2})"
        if r.oid1 == r.oid2:
            raise IngestError(f"relationship {where} relates an object to itself")
        objs = self.objects_in_frame(r.vid, r.fid)
        if r.oid1 not in objs or r.oid2 not in objs:
            raise IngestError(f"relationship {where} references missing object")

    # --------------------------------------------------------------- queries

    def anames_of(self, vid, fid, oid) -> set[str]:
        return self._anames_by_obj.get((vid, fid, oid), set())

    def rnames_of(self, vid, fid, oid1, oid2) -> set[str]:
        return self._rnames_by_pair.get((vid, fid, oid1, oid2), set())

    def make_tuple(self, vid, fid, oid0, oid1=None) -> TupleView:
        objs = self.objects_in_frame(vid, fid)
        rec0 = objs[oid0]
        o0 = ObjectView(oid0, rec0.oname, rec0.bbox,
                        frozenset(self.anames_of(vid, fid, oid0)))
        if oid1 is None:
            return TupleView(self, vid, fid, o0)
        rec1 = objs[oid1]
        o1 = ObjectView(oid1, rec1.oname, rec1.bbox,
                        frozenset(self.anames_of(vid, fid, oid1)))
        return TupleView(self, vid, fid, o0, o1,
                         o0_o1_rnames=frozenset(self.rnames_of(vid, fid, oid0, oid1)),
                         o1_o0_rnames=frozenset(self.rnames_of(vid, fid, oid1, oid0)))

    def eligible_units(self, arity: int,
                       class_filter: Optional[set[str]] = None) -> list[tuple]:
        """Unit ids in canonical order: object occurrences (arity 1) or
        ordered same-frame pairs of distinct objects (arity 2)."""
        units = []
        if arity == 1:
            for o in sorted(self.objects, key=lambda o: (o.vid, o.fid, o.oid)):
                if class_filter is None or o.oname in class_filter:
                    units.append((o.vid, o.fid, o.oid))
            return units
        if arity != 2:
            raise ValueError(f"arity must be 1 or 2, got {arity}")
        for (vid, fid), objs in sorted(self._objects_by_frame.items()):
            oids = sorted(oid for oid, rec in objs.items()
                          if class_filter is None or rec.oname in class_filter)
            for a in oids:
                for b in oids:
                    if a != b:
                        units.append((vid, fid, a, b))
        return units

    # ---------------------------------------------------------------- pixels

    def load_frame(self, vid: int, fid: int) -> np.ndarray:
        key = (vid, fid)
        cached = self._image_cache.get(key)
        if cached is not None:
            self._image_cache.move_to_end(key)
            return cached
        rec = self._frame_by_key.get(key)
        if rec is None or rec.image_ref is None:
            raise PixelsUnavailableError(
                f"no frame image for (vid={vid}, fid={fid})")
        path = Path(rec.image_ref)
        if self.root_dir is not None and not path.is_absolute():
            path = self.root_dir / path
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        self._image_cache[key] = arr
        if len(self._image_cache) > 128:
            self._image_cache.popitem(last=False)
        return arr

    @property
    def has_images(self) -> bool:
        return any(f.image_ref is not None for f in self.frames)

    # ------------------------------------------------------------- mutation

    def insert_attributes(self, rows: Iterable[AttributeRecord]):
        with self._write_lock:
            for a in rows:
                self.attributes.append(a)
                self._anames_by_obj.setdefault(
                    (a.vid, a.fid, a.oid), set()).add(a.aname)

    def insert_relationships(self, rows: Iterable[RelationshipRecord]):
        with self._write_lock:
            for r in rows:
                self.relationships.append(r)
                self._rnames_by_pair.setdefault(
                    (r.vid, r.fid, r.oid1, r.oid2), set()).add(r.rname)

    # -------------------------------------------------------- serialization

    def save(self, out_dir: Path, manifest_name: str = "manifest.json",
             extra_manifest: Optional[dict] = None) -> Path:
        """Write the four tables in canonical order plus a manifest."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        tables = {
            "frames.jsonl": (sorted(self.frames, key=lambda r: (r.vid, r.fid)),
                             _frame_row),
            "objects.jsonl": (sorted(self.objects,
                                     key=lambda r: (r.vid, r.fid, r.oid)),
                              _object_row),
            "relationships.jsonl": (sorted(self.relationships,
                                           key=lambda r: (r.vid, r.fid, r.oid1,
                                                          r.rname, r.oid2)),
                                    _rel_row),
            "attributes.jsonl": (sorted(self.attributes,
                                        key=lambda r: (r.vid, r.fid, r.oid,
                                                       r.aname)),
                                 _attr_row),
        }
        for name, (rows, fmt) in tables.items():
            text = "".join(fmt(r) + "\n" for r in rows)
            (out_dir / name).write_text(text)
        manifest = {
            "width": self.width,
            "height": self.height,
            "frames": "frames.jsonl",
            "objects": "objects.jsonl",
            "relationships": "relationships.jsonl",
            "attributes": "attributes.jsonl",
        }
        if extra_manifest:
            manifest.update(extra_manifest)
        path = out_dir / manifest_name
        path.write_text(json.dumps(manifest, indent=2) + "\n")
        return path


# ------------------------------------------------------------------ ingest


def _load_rows(path: Path, table: str):
    if not path.exists():
        raise IngestError(f"record file not found: {path}")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise IngestError(
                    f"{table} line {lineno}: malformed record ({exc})") from exc
    return rows


def _field(row, name, table, lineno):
    if name not in row:
        raise IngestError(f"{table} line {lineno}: missing field {name!r}")
    return row[name]


def ingest_dataset(manifest_path: Path) -> ScenegraphDb:
    """Load and validate a dataset from its manifest file.

    Rejects on the first invariant violation, reporting the offending
    table, line and record key.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise IngestError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise IngestError(f"malformed manifest: {exc}") from exc
    root = manifest_path.parent
    for key in ("width", "height", "frames", "objects", "relationships",
                "attributes"):
        if key not in manifest:
            raise IngestError(f"manifest missing key {key!r}")

    frames = []
    for lineno, row in _load_rows(root / manifest["frames"], "frames"):
        frames.append(FrameRecord(vid=int(_field(row, "vid", "frames", lineno)),
                                  fid=int(_field(row, "fid", "frames", lineno)),
                                  image_ref=row.get("image_ref")))
    objects = []
    for lineno, row in _load_rows(root / manifest["objects"], "objects"):
        bbox = tuple(int(_field(row, k, "objects", lineno))
                     for k in ("x1", "y1", "x2", "y2"))
        objects.append(ObjectRecord(vid=int(row["vid"]), fid=int(row["fid"]),
                                    oid=int(_field(row, "oid", "objects", lineno)),
                                    oname=str(_field(row, "oname", "objects", lineno)),
                                    bbox=bbox))
    relationships = []
    for lineno, row in _load_rows(root / manifest["relationships"], "relationships"):
        relationships.append(
            RelationshipRecord(vid=int(row["vid"]), fid=int(row["fid"]),
                               oid1=int(_field(row, "oid1", "relationships", lineno)),
                               rname=str(_field(row, "rname", "relationships", lineno)),
                               oid2=int(_field(row, "oid2", "relationships", lineno))))
    attributes = []
    for lineno, row in _load_rows(root / manifest["attributes"], "attributes"):
        attributes.append(
            AttributeRecord(vid=int(row["vid"]), fid=int(row["fid"]),
                            oid=int(_field(row, "oid", "attributes", lineno)),
                            aname=str(_field(row, "aname", "attributes", lineno))))

    db = ScenegraphDb.from_records(int(manifest["width"]), int(manifest["height"]),
                                   frames, objects, relationships, attributes,
                                   root_dir=root)
    db.manifest = manifest
    return db


# ------------------------------------------------------------------- query ops


def active_domains(db: ScenegraphDb) -> tuple[set[str], set[str], set[str]]:
    """Distinct (onames, rnames, anames) currently present in the tables."""
    onames = {o.oname for o in db.objects}
    rnames = {r.rname for r in db.relationships}
    anames = {a.aname for a in db.attributes}
    return onames, rnames, anames


def sample_tuples(db: ScenegraphDb, arity: int, n: int,
                  class_filter: Optional[set[str]] = None,
                  seed: int = 0) -> list[TupleView]:
    """Uniform without-replacement sample of eligible units.

    Returns fewer than ``n`` views when the eligible population is smaller;
    errors when it is empty. Deterministic for a fixed seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    units = db.eligible_units(arity, class_filter)
    if not units:
        raise EmptyPopulationError(
            f"no eligible units for arity={arity}, class_filter={class_filter}")
    rng = random.Random(seed)
    chosen = units if len(units) <= n else rng.sample(units, n)
    return [db.make_tuple(*u) for u in chosen]


def materialize_udf(db: ScenegraphDb, udf, registry) -> int:
    """Evaluate ``udf`` over every eligible unit and persist true results
    as relationship/attribute rows, then swap the registry entry for a
    value-lookup of the same name. Refused if the name already names a
    materialized or ingested concept of its arity.
    """
    from .udfs import eval_udf, make_value_lookup

    name = udf.signature.name
    arity = udf.signature.arity
    _, rnames, anames = active_domains(db)
    existing = rnames if arity == 2 else anames
    if name in db.materialized or name in existing:
        raise MaterializeError(f"{name!r} is already materialized")
    units = db.eligible_units(arity)
    rows = []
    for u in units:
        view = db.make_tuple(*u)
        try:
            result = eval_udf(udf, view)
        except Exception as exc:
            raise MaterializeError(
                f"evaluation of {name!r} failed on unit {u}: {exc}") from exc
        if result:
            if arity == 1:
                rows.append(AttributeRecord(vid=u[0], fid=u[1], oid=u[2],
                                            aname=name))
            else:
                rows.append(RelationshipRecord(vid=u[0], fid=u[1], oid1=u[2],
                                               rname=name, oid2=u[3]))
    if arity == 1:
        db.insert_attributes(rows)
    else:
        db.insert_relationships(rows)
    db.materialized.add(name)
    registry.replace(make_value_lookup(udf.signature))
    return len(rows)


# ------------------------------------------------------------------- patches


def get_frame_patch(db: ScenegraphDb, vid: int, fid: int,
                    bboxes: Sequence[Bbox], overlay: bool = False,
                    mask: Optional[str] = None) -> np.ndarray:
    """Crop the minimal axis-aligned box containing all ``bboxes``.

    overlay draws a red outline around the first bbox and a blue one
    around the second; mask='keep_first' blacks out everything except the
    first bbox region ('keep_second' analogous). Masking happens before
    the overlay so outlines stay visible on masked patches.
    """
    if not 1 <= len(bboxes) <= 2:
        raise ValueError("expected 1 or 2 bboxes")
    for b in bboxes:
        x1, y1, x2, y2 = b
        if not (0 <= x1 < x2 <= db.width and 0 <= y1 < y2 <= db.height):
            raise ValueError(f"bbox {b} out of bounds for "
                             f"{db.width}x{db.height} frame")
    frame = db.load_frame(vid, fid).copy()
    if mask is not None:
        if mask == "keep_first":
            keep = bboxes[0]
        elif mask == "keep_second":
            if len(bboxes) < 2:
                raise ValueError("mask='keep_second' needs two bboxes")
            keep = bboxes[1]
        else:
            raise ValueError(f"unknown mask mode {mask!r}")
        kx1, ky1, kx2, ky2 = keep
        kept = frame[ky1:ky2, kx1:kx2].copy()
        frame[:] = 0
        frame[ky1:ky2, kx1:kx2] = kept
    if overlay:
        im = Image.fromarray(frame)
        draw = ImageDraw.Draw(im)
        colors = [(255, 0, 0), (0, 0, 255)]
        for b, color in zip(bboxes, colors):
            x1, y1, x2, y2 = b
            draw.rectangle([x1, y1, x2 - 1, y2 - 1], outline=color, width=2)
        frame = np.asarray(im)
    x1 = min(b[0] for b in bboxes)
    y1 = min(b[1] for b in bboxes)
    x2 = max(b[2] for b in bboxes)
    y2 = max(b[3] for b in bboxes)
    return frame[y1:y2, x1:x2]

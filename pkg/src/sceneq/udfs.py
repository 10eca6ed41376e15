"""Unified predicate UDF scheme and the evaluation entry point.

Every predicate in a query resolves to one UdfCandidate of kind
value-lookup, program, distilled-model, or dummy. Object-class UDFs are
not generated or executed here: object rows arrive through ingestion and
class predicates resolve as value-lookups against ``oname``.
"""

from __future__ import annotations

import io
import json
import threading
from pathlib import Path
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import RegistryError
from .sandbox import DEFAULT_TIMEOUT_S, CompiledProgram, NoPixels
from .storage import TupleView

# Rewritten argument lists handed to program UDFs; attribute UDFs receive
# the single-object prefix, relationship UDFs the full list.
PROGRAM_ARGS_ARITY1 = (
    "img", "o0_oname", "o0_x1", "o0_y1", "o0_x2", "o0_y2", "o0_anames",
    "height", "width",
)
PROGRAM_ARGS_ARITY2 = (
    "img", "o0_oname", "o0_x1", "o0_y1", "o0_x2", "o0_y2", "o0_anames",
    "o1_oname", "o1_x1", "o1_y1", "o1_x2", "o1_y2", "o1_anames",
    "o0_o1_rnames", "o1_o0_rnames", "height", "width",
)


class UdfKind(Enum):
    VALUE_LOOKUP = "value_lookup"
    PROGRAM = "program"
    DISTILLED_MODEL = "distilled_model"
    DUMMY = "dummy"


@dataclass(frozen=True)
class UdfSignature:
    name: str
    arity: int
    description: str

    def __post_init__(self):
        if self.arity not in (1, 2):
            raise ValueError(f"arity must be 1 or 2, got {self.arity}")
        if not self.description.startswith("Whether"):
            raise ValueError(
                f"description for {self.name!r} must start with 'Whether'")

    def render(self) -> str:
        args = "o0" if self.arity == 1 else "o0, o1"
        return f"{self.name}({args})"


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    default: float
    min: float
    max: float

    def __post_init__(self):
        if not (self.min <= self.default <= self.max):
            raise ValueError(
                f"parameter {self.name!r} violates min <= default <= max: "
                f"{self.min}, {self.default}, {self.max}")


@dataclass
class ModelArtifact:
    """One-hidden-layer binary classifier (rectifier hidden, logistic out)."""

    dims: tuple[int, ...]            # (input, hidden, 1)
    weights: list[np.ndarray]        # per layer, shape (out, in)
    biases: list[np.ndarray]         # per layer, shape (out,)
    extractor_id: str
    threshold: float = 0.5

    def __post_init__(self):
        if len(self.weights) != len(self.dims) - 1:
            raise ValueError("weight count does not match dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[i + 1], self.dims[i]):
                raise ValueError(f"layer {i} weight shape {w.shape} != "
                                 f"({self.dims[i + 1]}, {self.dims[i]})")
            if b.shape != (self.dims[i + 1],):
                raise ValueError(f"layer {i} bias shape mismatch")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = np.maximum(x @ w.T + b, 0.0)
        z = x @ self.weights[-1].T + self.biases[-1]
        return (1.0 / (1.0 + np.exp(-z))).ravel()

    FORMAT_TAG = "sceneq-mlp v1"

    def to_bytes(self) -> bytes:
        """Versioned flat text layout: header lines (format tag, extractor
        id, threshold, dims) then one row-major line of 17-digit floats per
        weight matrix / bias vector, layer by layer."""
        out = io.StringIO()
        out.write(self.FORMAT_TAG + "\n")
        out.write(self.extractor_id + "\n")
        out.write(f"{self.threshold!r}\n")
        out.write(" ".join(str(d) for d in self.dims) + "\n")
        for w, b in zip(self.weights, self.biases):
            out.write(" ".join(f"{v:.17g}" for v in w.ravel()) + "\n")
            out.write(" ".join(f"{v:.17g}" for v in b.ravel()) + "\n")
        return out.getvalue().encode()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelArtifact":
        lines = data.decode().splitlines()
        if lines[0] != cls.FORMAT_TAG:
            raise ValueError(f"unknown model format {lines[0]!r}")
        extractor_id = lines[1]
        threshold = float(lines[2])
        dims = tuple(int(t) for t in lines[3].split())
        weights, biases = [], []
        row = 4
        for i in range(len(dims) - 1):
            w = np.array([float(t) for t in lines[row].split()])
            weights.append(w.reshape(dims[i + 1], dims[i]))
            biases.append(np.array([float(t) for t in lines[row + 1].split()]))
            row += 2
        return cls(dims=dims, weights=weights, biases=biases,
                   extractor_id=extractor_id, threshold=threshold)


@dataclass
class UdfCandidate:
    """One concrete implementation of a predicate.

    Exactly the fields of its kind are populated: program candidates carry
    source, parameter specs and bound values; model candidates carry the
    trained artifact; value-lookups just the concept name they test.
    """

    signature: UdfSignature
    kind: UdfKind
    interpretation: str = ""
    program_source: Optional[str] = None
    params: tuple[ParameterSpec, ...] = ()
    bound_params: dict = field(default_factory=dict)
    model: Optional[ModelArtifact] = None
    lookup_name: Optional[str] = None
    label: str = ""
    timeout_s: float = DEFAULT_TIMEOUT_S
    _compiled: Optional[CompiledProgram] = field(
        default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.label:
            self.label = f"{self.signature.name}:{self.kind.value}"
        if self.kind is UdfKind.PROGRAM:
            if not self.program_source:
                raise ValueError("program candidate needs program_source")
            by_name = {p.name: p for p in self.params}
            for name, value in self.bound_params.items():
                spec = by_name.get(name)
                if spec is None:
                    raise ValueError(f"bound value for undeclared parameter "
                                     f"{name!r}")
                if not (spec.min <= value <= spec.max):
                    raise ValueError(f"bound value {value} for {name!r} "
                                     f"outside [{spec.min}, {spec.max}]")
        elif self.kind is UdfKind.DISTILLED_MODEL:
            if self.model is None:
                raise ValueError("distilled-model candidate needs a model")
        elif self.kind is UdfKind.VALUE_LOOKUP:
            if self.lookup_name is None:
                raise ValueError("value-lookup candidate needs lookup_name")

    @property
    def entry_point(self) -> str:
        return f"py_{self.signature.name}"

    def compiled(self) -> CompiledProgram:
        if self._compiled is None:
            self._compiled = CompiledProgram(self.program_source,
                                             self.entry_point)
        return self._compiled


def make_dummy(signature: UdfSignature) -> UdfCandidate:
    """Always-true candidate; choosing it amounts to deleting the predicate."""
    return UdfCandidate(signature=signature, kind=UdfKind.DUMMY,
                        interpretation="always true",
                        label=f"{signature.name}:dummy")


def make_value_lookup(signature: UdfSignature,
                      lookup_name: Optional[str] = None) -> UdfCandidate:
    return UdfCandidate(signature=signature, kind=UdfKind.VALUE_LOOKUP,
                        lookup_name=lookup_name or signature.name,
                        interpretation="membership test over stored rows",
                        label=f"{signature.name}:lookup")


def program_kwargs(view: TupleView, allow_pixels: bool = True) -> dict:
    """Build the rewritten-signature argument dict for a program call."""
    if allow_pixels:
        try:
            img = view.frame_image()
        except Exception:
            img = NoPixels("this dataset stores no frame images")
    else:
        img = NoPixels("pixel access is disabled for this dataset")
    o0 = view.o0
    kwargs = {
        "img": img,
        "o0_oname": o0.oname,
        "o0_x1": o0.bbox[0], "o0_y1": o0.bbox[1],
        "o0_x2": o0.bbox[2], "o0_y2": o0.bbox[3],
        "o0_anames": sorted(o0.anames),
        "height": view.height, "width": view.width,
    }
    if view.o1 is not None:
        o1 = view.o1
        kwargs.update({
            "o1_oname": o1.oname,
            "o1_x1": o1.bbox[0], "o1_y1": o1.bbox[1],
            "o1_x2": o1.bbox[2], "o1_y2": o1.bbox[3],
            "o1_anames": sorted(o1.anames),
            "o0_o1_rnames": sorted(view.o0_o1_rnames),
            "o1_o0_rnames": sorted(view.o1_o0_rnames),
        })
    return kwargs


def eval_udf(udf: UdfCandidate, view: TupleView,
             allow_pixels: bool = True) -> bool:
    """Evaluate one candidate on one unit.

    Value-lookup checks stored rows (for arity 1 both the object class
    name and its attribute set); dummy is constant true; programs run in
    the sandbox; models threshold the predicted probability.
    """
    if view.arity != udf.signature.arity:
        raise ValueError(f"unit arity {view.arity} does not match "
                         f"{udf.signature.render()}")
    if udf.kind is UdfKind.DUMMY:
        return True
    if udf.kind is UdfKind.VALUE_LOOKUP:
        name = udf.lookup_name
        if view.arity == 1:
            return name == view.o0.oname or name in view.o0.anames
        return name in view.o0_o1_rnames
    if udf.kind is UdfKind.PROGRAM:
        kwargs = program_kwargs(view, allow_pixels=allow_pixels)
        kwargs.update(udf.bound_params)
        return udf.compiled().call(kwargs, timeout_s=udf.timeout_s)
    if udf.kind is UdfKind.DISTILLED_MODEL:
        from .modelgen import build_features, get_extractor
        extractor = get_extractor(udf.model.extractor_id)
        feats = build_features(view, extractor)
        p = udf.model.predict_proba(feats)[0]
        return bool(p >= udf.model.threshold)
    raise ValueError(f"unknown UDF kind {udf.kind}")


def save_candidate(candidate: UdfCandidate, directory) -> Path:
    """Persist a candidate: a JSON metadata record plus, depending on the
    kind, the script text (<label>.py) or the model artifact (<label>.mlp)
    alongside it. Returns the metadata path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = candidate.label.replace(":", "_").replace("/", "_")
    meta = {
        "name": candidate.signature.name,
        "arity": candidate.signature.arity,
        "description": candidate.signature.description,
        "kind": candidate.kind.value,
        "interpretation": candidate.interpretation,
        "label": candidate.label,
    }
    if candidate.kind is UdfKind.PROGRAM:
        (directory / f"{stem}.py").write_text(candidate.program_source)
        meta["script"] = f"{stem}.py"
        meta["params"] = [{"name": p.name, "default": p.default,
                           "min": p.min, "max": p.max}
                          for p in candidate.params]
        meta["bound_params"] = dict(candidate.bound_params)
    elif candidate.kind is UdfKind.DISTILLED_MODEL:
        (directory / f"{stem}.mlp").write_bytes(candidate.model.to_bytes())
        meta["model"] = f"{stem}.mlp"
    elif candidate.kind is UdfKind.VALUE_LOOKUP:
        meta["lookup_name"] = candidate.lookup_name
    path = directory / f"{stem}.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_candidate(metadata_path) -> UdfCandidate:
    """Inverse of save_candidate."""
    metadata_path = Path(metadata_path)
    meta = json.loads(metadata_path.read_text())
    signature = UdfSignature(meta["name"], int(meta["arity"]),
                             meta["description"])
    kind = UdfKind(meta["kind"])
    kwargs = dict(signature=signature, kind=kind,
                  interpretation=meta.get("interpretation", ""),
                  label=meta.get("label", ""))
    if kind is UdfKind.PROGRAM:
        kwargs["program_source"] = \
            (metadata_path.parent / meta["script"]).read_text()
        kwargs["params"] = tuple(ParameterSpec(**p) for p in meta["params"])
        kwargs["bound_params"] = meta.get("bound_params", {})
    elif kind is UdfKind.DISTILLED_MODEL:
        kwargs["model"] = ModelArtifact.from_bytes(
            (metadata_path.parent / meta["model"]).read_bytes())
    elif kind is UdfKind.VALUE_LOOKUP:
        kwargs["lookup_name"] = meta["lookup_name"]
    return UdfCandidate(**kwargs)


class UdfRegistry:
    """Name -> candidate mapping consulted by the validator and executor."""

    def __init__(self):
        self._entries: dict[str, UdfCandidate] = {}
        self._lock = threading.Lock()

    def register(self, udf: UdfCandidate):
        with self._lock:
            if udf.signature.name in self._entries:
                raise RegistryError(
                    f"UDF {udf.signature.name!r} is already registered")
            self._entries[udf.signature.name] = udf

    def replace(self, udf: UdfCandidate):
        """Swap an existing entry; only materialization may do this."""
        with self._lock:
            self._entries[udf.signature.name] = udf

    def get(self, name: str) -> Optional[UdfCandidate]:
        return self._entries.get(name)

    def lookup(self, name: str) -> UdfCandidate:
        udf = self.get(name)
        if udf is None:
            raise RegistryError(f"no UDF named {name!r}")
        return udf

    def names(self) -> list[str]:
        return sorted(self._entries)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self):
        return len(self._entries)

    def descriptions_block(self) -> str:
        """One line per UDF, 'name(args): description', for prompts."""
        lines = []
        for name in self.names():
            udf = self._entries[name]
            lines.append(f"{udf.signature.render()}: {udf.signature.description}")
        return "\n".join(lines)

"""Program-based predicate candidates: solicitation, syntax verification
with per-candidate repair, and parameter instantiation.

Verification runs each candidate on a small sample of real units with
default parameters and checks it returns a boolean without raising; a
failing candidate gets its error fed back to the client for a repaired
script, up to the trial bound, then is discarded. Parameters are
instantiated jointly: one all-defaults assignment plus n_param_samples
seeded uniform draws over each [min, max] range.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Optional

from .errors import EmptyPopulationError, GatewayError
from .gateway import SCHEMA_DOC_ARITY1, SCHEMA_DOC_ARITY2, Gateway
from .storage import active_domains, sample_tuples
from .udfs import (
    PROGRAM_ARGS_ARITY1,
    PROGRAM_ARGS_ARITY2,
    UdfCandidate,
    UdfKind,
    UdfSignature,
    eval_udf,
)


@dataclass
class ProgramGenConfig:
    k: int = 10
    allow_pixels: bool = False
    allow_params: bool = True
    n_param_samples: int = 5
    syntax_sample_size: int = 10
    max_trials: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("k", "n_param_samples", "syntax_sample_size",
                     "max_trials"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def rewrite_signature(signature: UdfSignature) -> str:
    """Column-level signature handed to the program generator, e.g.
    behind(o0, o1) -> py_behind(img, o0_oname, ..., height, width, **kwargs).
    Refuses to rewrite an already-rewritten name."""
    if signature.name.startswith("py_"):
        raise ValueError(f"{signature.name!r} is already a rewritten "
                         f"signature")
    args = (PROGRAM_ARGS_ARITY1 if signature.arity == 1
            else PROGRAM_ARGS_ARITY2)
    return f"py_{signature.name}({', '.join(args)}, **kwargs)"


@dataclass(frozen=True)
class Verified:
    candidate: UdfCandidate


@dataclass(frozen=True)
class Discarded:
    candidate: UdfCandidate
    reason: str


def verify_syntax(candidate: UdfCandidate, db, config: ProgramGenConfig,
                  gateway: Optional[Gateway] = None):
    """Execute the candidate on sampled units with default parameters.

    Checks it loads, runs on real data, and returns booleans. On failure,
    the error is sent back for a repaired script when a gateway is given;
    after max_trials the candidate is Discarded with the last reason.
    Outcomes are values, never exceptions.
    """
    arity = candidate.signature.arity
    try:
        sample = sample_tuples(db, arity, config.syntax_sample_size,
                               seed=config.seed)
    except EmptyPopulationError:
        return Discarded(candidate, "no units of the required arity to "
                                    "verify against")
    current = candidate
    reason = "unverified"
    for trial in range(config.max_trials):
        try:
            trial_candidate = replace(
                current,
                bound_params={p.name: p.default for p in current.params},
                _compiled=None)
            for unit in sample:
                eval_udf(trial_candidate, unit,
                         allow_pixels=config.allow_pixels)
            return Verified(current)
        except Exception as exc:
            reason = str(exc)
        if gateway is None or trial == config.max_trials - 1:
            break
        repaired = _request_repair(current, reason, db, config, gateway)
        if repaired is None:
            break
        current = repaired
    return Discarded(current, reason)


def _request_repair(candidate: UdfCandidate, error: str, db,
                    config: ProgramGenConfig,
                    gateway: Gateway) -> Optional[UdfCandidate]:
    """One repair attempt: re-request the candidate with the error text
    appended; unusable responses end the repair loop."""
    signature = candidate.signature
    schema_doc = (SCHEMA_DOC_ARITY1 if signature.arity == 1
                  else SCHEMA_DOC_ARITY2)
    try:
        drafts, _ = gateway.program_candidates(
            signature, f"{signature.description} (previous attempt failed "
                       f"with: {error})",
            schema_doc, active_domains(db), 1, config.allow_params,
            config.allow_pixels, rewrite_signature(signature))
    except GatewayError:
        return None
    draft = drafts[0]
    try:
        return UdfCandidate(signature=signature, kind=UdfKind.PROGRAM,
                            interpretation=draft.interpretation,
                            program_source=draft.script, params=draft.params,
                            label=candidate.label)
    except ValueError:
        return None


def generate(signature: UdfSignature, description: str, db, registry,
             config: ProgramGenConfig, gateway: Gateway,
             verify: bool = True) -> list[UdfCandidate]:
    """Solicit k candidates, verify each (with repair), and return the
    survivors carrying interpretation, script, and parameter specs."""
    schema_doc = (SCHEMA_DOC_ARITY1 if signature.arity == 1
                  else SCHEMA_DOC_ARITY2)
    drafts, dropped = gateway.program_candidates(
        signature, description, schema_doc, active_domains(db), config.k,
        config.allow_params, config.allow_pixels,
        rewrite_signature(signature))
    candidates = []
    for i, draft in enumerate(drafts):
        try:
            candidate = UdfCandidate(
                signature=signature, kind=UdfKind.PROGRAM,
                interpretation=draft.interpretation,
                program_source=draft.script,
                params=draft.params if config.allow_params else (),
                label=f"{signature.name}:prog{i}")
        except ValueError:
            continue
        if not verify:
            candidates.append(candidate)
            continue
        outcome = verify_syntax(candidate, db, config, gateway)
        if isinstance(outcome, Verified):
            candidates.append(outcome.candidate)
    return candidates


def instantiate_parameters(candidate: UdfCandidate,
                           config: ProgramGenConfig) -> list[UdfCandidate]:
    """Concrete candidates from one verified script.

    Empty parameter list -> the candidate itself with empty bindings.
    Otherwise one all-defaults binding plus n_param_samples joint draws,
    each parameter uniform over its [min, max], seeded per candidate."""
    if not candidate.params:
        return [replace(candidate, bound_params={}, _compiled=None)]
    concrete = [replace(
        candidate,
        bound_params={p.name: p.default for p in candidate.params},
        label=f"{candidate.label}:default", _compiled=None)]
    rng = random.Random(f"{config.seed}|{candidate.label}")
    for i in range(config.n_param_samples):
        bound = {p.name: rng.uniform(p.min, p.max) for p in candidate.params}
        concrete.append(replace(candidate, bound_params=bound,
                                label=f"{candidate.label}:s{i}",
                                _compiled=None))
    return concrete


def generate_concrete(signature: UdfSignature, description: str, db, registry,
                      config: ProgramGenConfig,
                      gateway: Gateway) -> list[UdfCandidate]:
    """generate + instantiate, bounded by k * (1 + n_param_samples)."""
    out = []
    for candidate in generate(signature, description, db, registry, config,
                              gateway):
        out.extend(instantiate_parameters(candidate, config))
    return out

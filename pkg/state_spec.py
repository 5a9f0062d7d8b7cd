"""
Parser for the command-line state grammar.

    spec      := family "(" args ")" { "+" modifier "(" args ")" }
    args      := [ key "=" value { "," key "=" value } ]
    family    := bsv | singlet | sep | vacuum | fock
    modifier  := noise | loss

Examples: ``bsv(gain=0.8)``, ``singlet(n=1)``, ``sep(seed=7,terms=4)``,
``bsv(gain=0.8)+noise(p=0.9)``, ``singlet(n=2)+loss(etaA=0.8,etaB=1.0)``.
Modifiers are applied left to right.
"""

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

from errors import StateSpecError
from fock_core import OccupationState, QuantumState, Truncation, fock_state
from states import (
    TAIL_MASS_WARNING,
    BsvParams,
    LossSpec,
    NoiseSpec,
    apply_loss,
    bsv,
    bsv_min_truncation,
    mix_white_noise,
    random_separable,
    singlet_sector,
    vacuum,
)

logger = logging.getLogger(__name__)

_REQUIRED = object()

FAMILIES: Dict[str, Dict[str, Tuple[type, Any]]] = {
    "bsv": {"gain": (float, _REQUIRED)},
    "singlet": {"n": (int, _REQUIRED)},
    "sep": {"seed": (int, 0), "terms": (int, 1)},
    "vacuum": {},
    "fock": {"ah": (int, 0), "av": (int, 0), "bh": (int, 0), "bv": (int, 0)},
}

MODIFIERS: Dict[str, Dict[str, Tuple[type, Any]]] = {
    "noise": {"p": (float, _REQUIRED)},
    "loss": {"etaA": (float, 1.0), "etaB": (float, 1.0)},
}

_TERM = re.compile(r"\s*([A-Za-z_]\w*)\s*\(([^()]*)\)\s*")
_ARG = re.compile(r"\s*([A-Za-z_]\w*)\s*=\s*(\S+?)\s*$")


@dataclass(frozen=True)
class Term:
    name: str
    params: Dict[str, Any] = field(default_factory=dict)

    def __str__(self) -> str:
        args = ",".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.name}({args})"


@dataclass(frozen=True)
class StateSpec:
    family: Term
    modifiers: Tuple[Term, ...] = ()

    def __str__(self) -> str:
        return "+".join(str(t) for t in (self.family, *self.modifiers))


def _parse_value(kind: type, key: str, raw: str):
    try:
        value = kind(raw)
    except ValueError:
        raise StateSpecError(f"invalid {kind.__name__} value", token=f"{key}={raw}") from None
    if not math.isfinite(value):
        raise StateSpecError(f"non-finite {kind.__name__} value", token=f"{key}={raw}")
    return value


def _parse_term(name: str, body: str, schema: Dict[str, Tuple[type, Any]]) -> Term:
    given = {}
    if body.strip():
        for piece in body.split(","):
            match = _ARG.match(piece)
            if not match:
                raise StateSpecError(f"malformed argument in {name}(...)", token=piece.strip())
            key, raw = match.groups()
            if key not in schema:
                raise StateSpecError(f"unknown parameter for {name}", token=key)
            if key in given:
                raise StateSpecError(f"repeated parameter for {name}", token=key)
            given[key] = _parse_value(schema[key][0], key, raw)

    params = {}
    for key, (kind, default) in schema.items():
        if key in given:
            params[key] = given[key]
        elif default is _REQUIRED:
            raise StateSpecError(f"missing parameter {key!r}", token=f"{name}({body})")
        else:
            params[key] = default
    return Term(name, params)


def parse_state_spec(text: str) -> StateSpec:
    """Parse a state spec; errors name the offending token."""
    if not text or not text.strip():
        raise StateSpecError("empty state spec", token=text or "")
    terms = []
    pos = 0
    while True:
        match = _TERM.match(text, pos)
        if not match:
            raise StateSpecError("expected name(key=value,...)", token=text[pos:].strip() or text)
        terms.append(match)
        pos = match.end()
        if pos == len(text):
            break
        if text[pos] != "+":
            raise StateSpecError("unexpected text", token=text[pos:])
        pos += 1

    first = terms[0]
    family = first.group(1)
    if family not in FAMILIES:
        raise StateSpecError("unknown state family", token=family)
    modifiers = []
    for match in terms[1:]:
        name = match.group(1)
        if name not in MODIFIERS:
            raise StateSpecError("unknown modifier", token=name)
        modifiers.append(_parse_term(name, match.group(2), MODIFIERS[name]))
    return StateSpec(_parse_term(family, first.group(2), FAMILIES[family]), tuple(modifiers))


def with_parameter(spec: StateSpec, target: str, value: float) -> StateSpec:
    """Copy of spec with NAME.KEY set to value.

    NAME is the family or a modifier; a missing modifier is appended with
    its defaults (so ``noise.p`` can be swept on a spec without ``+noise``).
    """
    value = float(value)
    name, _, key = target.partition(".")
    if not key:
        raise StateSpecError("sweep target must be NAME.KEY", token=target)

    def updated(term: Term, schema) -> Term:
        if key not in schema:
            raise StateSpecError(f"unknown parameter for {name}", token=key)
        kind = schema[key][0]
        if kind is int and not value.is_integer():
            raise StateSpecError(f"{name}.{key} takes integer values", token=f"{key}={value!r}")
        params = dict(term.params)
        params[key] = kind(value)
        return Term(term.name, params)

    if name == spec.family.name:
        return StateSpec(updated(spec.family, FAMILIES[name]), spec.modifiers)
    if name not in MODIFIERS:
        raise StateSpecError("sweep target is neither the family nor a modifier", token=name)
    modifiers = list(spec.modifiers)
    positions = [k for k, t in enumerate(modifiers) if t.name == name]
    if not positions:
        defaults = {k: d for k, (_, d) in MODIFIERS[name].items() if d is not _REQUIRED}
        modifiers.append(Term(name, defaults))
        positions = [len(modifiers) - 1]
    last = positions[-1]
    modifiers[last] = updated(modifiers[last], MODIFIERS[name])
    return StateSpec(spec.family, tuple(modifiers))


def split_trailing_noise(spec: StateSpec) -> Tuple[StateSpec, Optional[float]]:
    """(spec without a final noise modifier, its p), or (spec, None)."""
    if spec.modifiers and spec.modifiers[-1].name == "noise":
        return StateSpec(spec.family, spec.modifiers[:-1]), float(spec.modifiers[-1].params["p"])
    return spec, None


def required_truncation(spec: StateSpec, tail_tolerance: float = TAIL_MASS_WARNING) -> int:
    """Smallest n_max per beam that holds the family without truncation error."""
    family, params = spec.family.name, spec.family.params
    if family == "bsv":
        return max(1, bsv_min_truncation(params["gain"], tail_tolerance))
    if family == "singlet":
        return max(1, params["n"])
    if family == "fock":
        return max(1, params["ah"] + params["av"], params["bh"] + params["bv"])
    return 1


def build_family_state(term: Term, truncation: Truncation,
                       tail_warning: float = TAIL_MASS_WARNING) -> QuantumState:
    """State of the family named by term."""
    p = term.params
    if term.name == "bsv":
        return bsv(BsvParams(p["gain"], truncation), tail_warning)
    if term.name == "singlet":
        return singlet_sector(p["n"], truncation)
    if term.name == "sep":
        return random_separable(p["seed"], p["terms"], truncation)
    if term.name == "vacuum":
        return vacuum(truncation)
    if term.name == "fock":
        return fock_state(OccupationState(p["ah"], p["av"], p["bh"], p["bv"]), truncation)
    raise StateSpecError("unknown state family", token=term.name)


def apply_modifier(state: QuantumState, term: Term) -> QuantumState:
    """Apply one noise or loss modifier."""
    if term.name == "noise":
        return mix_white_noise(state, NoiseSpec(term.params["p"]))
    if term.name == "loss":
        return apply_loss(state, LossSpec(term.params["etaA"], term.params["etaB"]))
    raise StateSpecError("unknown modifier", token=term.name)


def build_state(spec: StateSpec, truncation: Truncation,
                tail_warning: float = TAIL_MASS_WARNING) -> QuantumState:
    """Family state with the modifiers applied left to right."""
    state = build_family_state(spec.family, truncation, tail_warning)
    for term in spec.modifiers:
        state = apply_modifier(state, term)
    logger.debug("Built %s at n_max=%d (%s)", spec, truncation.n_max_per_beam, state.kind.value)
    return state

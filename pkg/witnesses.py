"""
The ten Stokes-operator separability conditions.

Every condition is a function of a fixed set of first and second moments
(StokesMoments).  Moments are linear in the state, so the moments of a
convex mixture are the same mixture of moments; the witnesses themselves
are not linear (squares, square roots, absolute values).

Conditions (O = Θ for the standard family, O = S for the normalized one;
⟨O^X⟩² means Σ_i ⟨O_i^X⟩²):

    SIMON   Σ⟨(O_i^A + O_i^B)²⟩                 >= 2⟨N^A + N^B⟩  | 2⟨Π(1/N)Π⟩^A + 2⟨Π(1/N)Π⟩^B
    GEN     same lhs                            >= SIMON rhs + ⟨N^A - N^B⟩² | ⟨Π^A - Π^B⟩²
    CAUCHY  Σ|⟨O_i^A O_i^B⟩|                    <= ⟨N^A N^B⟩  | ⟨Π^A Π^B⟩
    VAR     Σ Var(O_i^A + O_i^B)                >= SIMON rhs
    VAR_IMPROVED  same lhs >= SIMON rhs + (sqrt(⟨N^A²⟩ - ⟨Θ^A⟩²) - sqrt(⟨N^B²⟩ - ⟨Θ^B⟩²))²
                  (normalized: sqrt(⟨Π^A⟩ - ⟨S^A⟩²) - sqrt(⟨Π^B⟩ - ⟨S^B⟩²))
"""

import logging
from dataclasses import dataclass, fields
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from errors import NumericalGuardError
from fock_core import Beam, QuantumState, SparseOperator, Truncation, expectation
from stokes import StokesSet, stokes_set

logger = logging.getLogger(__name__)

VIOLATION_TOLERANCE = 1e-9
SQRT_CLAMP_TOLERANCE = 1e-10
DOMINANCE_TOLERANCE = 1e-12


class Direction(Enum):
    GEQ = ">="
    LEQ = "<="


class Family(Enum):
    STANDARD = "standard"
    NORMALIZED = "normalized"


class WitnessId(Enum):
    SIMON_STD = "SIMON_STD"
    SIMON_NORM = "SIMON_NORM"
    GEN_STD = "GEN_STD"
    GEN_NORM = "GEN_NORM"
    CAUCHY_STD = "CAUCHY_STD"
    CAUCHY_NORM = "CAUCHY_NORM"
    VAR_STD = "VAR_STD"
    VAR_NORM = "VAR_NORM"
    VAR_IMPROVED_STD = "VAR_IMPROVED_STD"
    VAR_IMPROVED_NORM = "VAR_IMPROVED_NORM"

    @property
    def direction(self) -> Direction:
        return Direction.LEQ if self.name.startswith("CAUCHY") else Direction.GEQ

    @property
    def family(self) -> Family:
        return Family.NORMALIZED if self.name.endswith("_NORM") else Family.STANDARD

    @property
    def base(self) -> Optional["WitnessId"]:
        """The weaker condition an improved condition tightens."""
        return _IMPROVED_BASE.get(self)


_IMPROVED_BASE = {
    WitnessId.VAR_IMPROVED_STD: WitnessId.VAR_STD,
    WitnessId.VAR_IMPROVED_NORM: WitnessId.VAR_NORM,
}

WITNESS_IDS = tuple(WitnessId)


@dataclass(frozen=True)
class WitnessReport:
    id: WitnessId
    lhs: float
    rhs: float
    margin: float
    entangled: bool


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BeamMoments:
    theta: np.ndarray      # ⟨Θ_i⟩
    theta_sq: np.ndarray   # ⟨Θ_i²⟩
    s: np.ndarray          # ⟨S_i⟩
    s_sq: np.ndarray       # ⟨S_i²⟩
    n: float               # ⟨N⟩
    n_sq: float            # ⟨N²⟩
    pi: float              # ⟨Π⟩
    inv_n: float           # ⟨Π (1/N) Π⟩


@dataclass(frozen=True, eq=False)
class StokesMoments:
    a: BeamMoments
    b: BeamMoments
    theta_ab: np.ndarray   # ⟨Θ_i^A Θ_i^B⟩
    s_ab: np.ndarray       # ⟨S_i^A S_i^B⟩
    n_ab: float            # ⟨N^A N^B⟩
    pi_ab: float           # ⟨Π^A Π^B⟩

    def mix(self, other: "StokesMoments", p: float) -> "StokesMoments":
        """Moments of p ρ_self + (1 - p) ρ_other."""
        def combine(x, y):
            return p * x + (1.0 - p) * y

        def combine_beam(x: BeamMoments, y: BeamMoments) -> BeamMoments:
            return BeamMoments(**{f.name: combine(getattr(x, f.name), getattr(y, f.name))
                                  for f in fields(BeamMoments)})

        return StokesMoments(
            a=combine_beam(self.a, other.a),
            b=combine_beam(self.b, other.b),
            theta_ab=combine(self.theta_ab, other.theta_ab),
            s_ab=combine(self.s_ab, other.s_ab),
            n_ab=float(combine(self.n_ab, other.n_ab)),
            pi_ab=float(combine(self.pi_ab, other.pi_ab)),
        )


def _product(left: SparseOperator, right: SparseOperator) -> SparseOperator:
    """Product of two commuting Hermitian observables."""
    return left.compose(right).mark_hermitian(check=False)


def _beam_moments(ev, ops: StokesSet) -> BeamMoments:
    return BeamMoments(
        theta=np.array([ev(op) for op in ops.standard]),
        theta_sq=np.array([ev(_product(op, op)) for op in ops.standard]),
        s=np.array([ev(op) for op in ops.normalized]),
        s_sq=np.array([ev(_product(op, op)) for op in ops.normalized]),
        n=ev(ops.number),
        n_sq=ev(_product(ops.number, ops.number)),
        pi=ev(ops.vacuum_projector),
        inv_n=ev(ops.pi_invN_pi),
    )


def _moments(ev, truncation: Truncation) -> StokesMoments:
    ops_a = stokes_set(Beam.A, truncation)
    ops_b = stokes_set(Beam.B, truncation)
    return StokesMoments(
        a=_beam_moments(ev, ops_a),
        b=_beam_moments(ev, ops_b),
        theta_ab=np.array([ev(_product(x, y)) for x, y in zip(ops_a.standard, ops_b.standard)]),
        s_ab=np.array([ev(_product(x, y)) for x, y in zip(ops_a.normalized, ops_b.normalized)]),
        n_ab=ev(_product(ops_a.number, ops_b.number)),
        pi_ab=ev(_product(ops_a.vacuum_projector, ops_b.vacuum_projector)),
    )


def state_moments(state: QuantumState) -> StokesMoments:
    """Every moment the ten conditions need, evaluated exactly."""
    return _moments(lambda op: expectation(state, op), state.truncation)


def white_noise_moments(truncation: Truncation) -> StokesMoments:
    """Moments of the maximally mixed state, from operator traces."""
    dim = truncation.dimension
    return _moments(lambda op: float(np.real(op.trace())) / dim, truncation)


# ---------------------------------------------------------------------------
# Conditions
# ---------------------------------------------------------------------------

def _guarded_sqrt(value: float, label: str, strict: bool, tolerance: float) -> float:
    if value >= 0.0:
        return float(np.sqrt(value))
    if value < -tolerance and strict:
        raise NumericalGuardError(f"negative square-root argument {value!r} for {label}")
    logger.debug("Clamped square-root argument %.3g for %s", value, label)
    return 0.0


@dataclass(frozen=True)
class _FamilyTerms:
    sum_sq: float        # Σ⟨(O^A + O^B)²⟩
    variance: float      # Σ Var(O^A + O^B)
    cross_abs: float     # Σ|⟨O^A O^B⟩|
    bound: float         # SIMON rhs
    imbalance: float     # GEN extra term
    cauchy_rhs: float
    local_a: float       # ⟨N^A²⟩ - ⟨Θ^A⟩²  or  ⟨Π^A⟩ - ⟨S^A⟩²
    local_b: float


def _family_terms(m: StokesMoments, family: Family) -> _FamilyTerms:
    if family is Family.STANDARD:
        first_a, first_b = m.a.theta, m.b.theta
        sq_a, sq_b, cross = m.a.theta_sq, m.b.theta_sq, m.theta_ab
        bound = 2.0 * (m.a.n + m.b.n)
        imbalance = (m.a.n - m.b.n) ** 2
        cauchy_rhs = m.n_ab
        local_a = m.a.n_sq - float(np.sum(first_a ** 2))
        local_b = m.b.n_sq - float(np.sum(first_b ** 2))
    else:
        first_a, first_b = m.a.s, m.b.s
        sq_a, sq_b, cross = m.a.s_sq, m.b.s_sq, m.s_ab
        bound = 2.0 * (m.a.inv_n + m.b.inv_n)
        imbalance = (m.a.pi - m.b.pi) ** 2
        cauchy_rhs = m.pi_ab
        local_a = m.a.pi - float(np.sum(first_a ** 2))
        local_b = m.b.pi - float(np.sum(first_b ** 2))
    sum_sq = float(np.sum(sq_a + sq_b + 2.0 * cross))
    return _FamilyTerms(
        sum_sq=sum_sq,
        variance=sum_sq - float(np.sum((first_a + first_b) ** 2)),
        cross_abs=float(np.sum(np.abs(cross))),
        bound=float(bound),
        imbalance=float(imbalance),
        cauchy_rhs=float(cauchy_rhs),
        local_a=float(local_a),
        local_b=float(local_b),
    )


def _lhs_rhs(witness: WitnessId, terms: _FamilyTerms, strict: bool, clamp: float) -> Tuple[float, float]:
    kind = witness.name.rsplit("_", 1)[0]
    if kind == "SIMON":
        return terms.sum_sq, terms.bound
    if kind == "GEN":
        return terms.sum_sq, terms.bound + terms.imbalance
    if kind == "CAUCHY":
        return terms.cross_abs, terms.cauchy_rhs
    if kind == "VAR":
        return terms.variance, terms.bound
    root_a = _guarded_sqrt(terms.local_a, f"{witness.value} beam A", strict, clamp)
    root_b = _guarded_sqrt(terms.local_b, f"{witness.value} beam B", strict, clamp)
    return terms.variance, terms.bound + (root_a - root_b) ** 2


def make_report(witness: WitnessId, lhs: float, rhs: float,
                tolerance: float = VIOLATION_TOLERANCE) -> WitnessReport:
    margin = rhs - lhs if witness.direction is Direction.GEQ else lhs - rhs
    return WitnessReport(witness, float(lhs), float(rhs), float(margin), bool(margin > tolerance))


def evaluate_moments(moments: StokesMoments, ids: Optional[Iterable[WitnessId]] = None,
                     strict: bool = True, tolerance: float = VIOLATION_TOLERANCE,
                     sqrt_clamp: float = SQRT_CLAMP_TOLERANCE) -> List[WitnessReport]:
    """Reports for the requested conditions (all ten by default), in WitnessId order."""
    wanted = set(WITNESS_IDS if ids is None else ids)
    per_family = {family: _family_terms(moments, family) for family in Family}
    reports = []
    for witness in WITNESS_IDS:
        if witness not in wanted:
            continue
        lhs, rhs = _lhs_rhs(witness, per_family[witness.family], strict, sqrt_clamp)
        reports.append(make_report(witness, lhs, rhs, tolerance))
    return reports


def eval_witness(witness: WitnessId, state: QuantumState, tolerance: float = VIOLATION_TOLERANCE,
                 sqrt_clamp: float = SQRT_CLAMP_TOLERANCE) -> WitnessReport:
    return evaluate_moments(state_moments(state), [witness], True, tolerance, sqrt_clamp)[0]


def eval_all(state: QuantumState, tolerance: float = VIOLATION_TOLERANCE,
             sqrt_clamp: float = SQRT_CLAMP_TOLERANCE) -> List[WitnessReport]:
    return evaluate_moments(state_moments(state), None, True, tolerance, sqrt_clamp)


# ---------------------------------------------------------------------------
# Cross-checks
# ---------------------------------------------------------------------------

def _family_ops(state: QuantumState, family: Family):
    ops_a = stokes_set(Beam.A, state.truncation)
    ops_b = stokes_set(Beam.B, state.truncation)
    if family is Family.STANDARD:
        return ops_a, ops_b, ops_a.standard, ops_b.standard
    return ops_a, ops_b, ops_a.normalized, ops_b.normalized


def lhs_crosscheck_variance(state: QuantumState, family: Family) -> Tuple[float, float]:
    """Σ Var(O^A + O^B) directly and as local variances plus twice the covariance."""
    family = Family(family)
    _, _, obs_a, obs_b = _family_ops(state, family)
    direct = 0.0
    decomposed = 0.0
    for x, y in zip(obs_a, obs_b):
        total = x + y
        direct += expectation(state, _product(total, total)) - expectation(state, total) ** 2
        mean_x, mean_y = expectation(state, x), expectation(state, y)
        var_x = expectation(state, _product(x, x)) - mean_x ** 2
        var_y = expectation(state, _product(y, y)) - mean_y ** 2
        cov = expectation(state, _product(x, y)) - mean_x * mean_y
        decomposed += var_x + var_y + 2.0 * cov
    return float(direct), float(decomposed)


def lhs_crosscheck_local_variance(state: QuantumState, family: Family) -> Dict[Beam, Tuple[float, float]]:
    """Per beam: Σ_i Var(O_i) directly and through the Stokes operator identity.

    standard:   ⟨N²⟩ + 2⟨N⟩ - Σ⟨Θ_i⟩²
    normalized: ⟨Π⟩ + 2⟨Π(1/N)Π⟩ - Σ⟨S_i⟩²
    """
    family = Family(family)
    result = {}
    for beam in Beam:
        ops = stokes_set(beam, state.truncation)
        observables = ops.standard if family is Family.STANDARD else ops.normalized
        means = np.array([expectation(state, op) for op in observables])
        direct = sum(expectation(state, _product(op, op)) for op in observables) - float(np.sum(means ** 2))
        if family is Family.STANDARD:
            n = expectation(state, ops.number)
            identity = expectation(state, _product(ops.number, ops.number)) + 2.0 * n
        else:
            identity = expectation(state, ops.vacuum_projector) + 2.0 * expectation(state, ops.pi_invN_pi)
        result[beam] = (float(direct), float(identity - np.sum(means ** 2)))
    return result


def covariance_bound(state: QuantumState, family: Family,
                     sqrt_clamp: float = SQRT_CLAMP_TOLERANCE) -> Tuple[float, float]:
    """(Σ_i Cov(O_i^A, O_i^B), sqrt(local_A) sqrt(local_B)); |cov| <= bound for separable states."""
    family = Family(family)
    moments = state_moments(state)
    terms = _family_terms(moments, family)
    if family is Family.STANDARD:
        first_a, first_b, cross = moments.a.theta, moments.b.theta, moments.theta_ab
    else:
        first_a, first_b, cross = moments.a.s, moments.b.s, moments.s_ab
    covariance = float(np.sum(cross - first_a * first_b))
    bound = (_guarded_sqrt(terms.local_a, "covariance bound beam A", True, sqrt_clamp)
             * _guarded_sqrt(terms.local_b, "covariance bound beam B", True, sqrt_clamp))
    return covariance, bound


def check_dominance(reports: Sequence[WitnessReport],
                    tolerance: float = DOMINANCE_TOLERANCE) -> List[str]:
    """Violations of rhs dominance or detection containment of improved over base conditions."""
    by_id = {r.id: r for r in reports}
    problems = []
    for improved, base in _IMPROVED_BASE.items():
        if improved not in by_id or base not in by_id:
            continue
        new, old = by_id[improved], by_id[base]
        if new.rhs - old.rhs < -tolerance:
            problems.append(f"{improved.value} rhs {new.rhs!r} below {base.value} rhs {old.rhs!r}")
        if old.entangled and not new.entangled:
            problems.append(f"{base.value} detects but {improved.value} does not")
    return problems


def detection_threshold(values: Sequence[float], entangled: Sequence[bool]) -> Tuple[Optional[float], bool]:
    """(p*, upper_interval) for a grid.

    p* is the smallest grid value such that every grid value >= p* is
    detected (None if the largest value is not); upper_interval is True when
    the detected set is exactly {v >= p*}.
    """
    order = np.argsort(np.asarray(values, dtype=float), kind="stable")
    vals = np.asarray(values, dtype=float)[order]
    flags = np.asarray(entangled, dtype=bool)[order]
    if flags.size == 0 or not flags[-1]:
        return None, not flags.any()
    undetected = np.flatnonzero(~flags)
    start = 0 if undetected.size == 0 else undetected[-1] + 1
    p_star = float(vals[start])
    return p_star, bool(flags[start:].all() and not flags[:start].any())


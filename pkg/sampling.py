"""
Finite-shot polarization measurements with photon-number-resolving detectors.

In basis i each beam's two modes are rotated to (i, i⊥) and the four photon
numbers are recorded.  Standard and normalized Stokes values of a shot come
from the same counts: θ_i = n_i - n_i⊥ and s_i = θ_i / (n_i + n_i⊥), with
s_i = 0 on an empty beam (the vacuum is projected out).

Random streams: SeedSequence(seed).spawn(4); child k-1 draws the shots of
basis k (k = 1, 2, 3) and child 3 drives the bootstrap.  Results therefore do
not depend on the order in which bases are sampled.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional

import numpy as np

from errors import InsufficientShotsError
from fock_core import QuantumState, Truncation, beam_basis, beam_block_slice, iter_blocks
from stokes import STOKES_INDICES, StokesIndex, rotation_unitary
from witnesses import (
    VIOLATION_TOLERANCE,
    BeamMoments,
    StokesMoments,
    WitnessId,
    evaluate_moments,
)

logger = logging.getLogger(__name__)

BOOTSTRAP_RESAMPLES = 200
MIN_SHOTS = 30
_BOOTSTRAP_STREAM = 3


@dataclass(frozen=True)
class SampleRecord:
    basis: StokesIndex
    n_A_i: int
    n_A_iperp: int
    n_B_i: int
    n_B_iperp: int


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Shots of one basis; counts[:, :] = (n_A_i, n_A_iperp, n_B_i, n_B_iperp)."""

    basis: StokesIndex
    counts: np.ndarray

    def __len__(self) -> int:
        return int(self.counts.shape[0])

    def __iter__(self) -> Iterator[SampleRecord]:
        for row in self.counts:
            yield SampleRecord(self.basis, *(int(v) for v in row))


@dataclass(frozen=True)
class EstimateReport:
    id: WitnessId
    lhs_hat: float
    rhs_hat: float
    margin_hat: float
    stderr: float
    shots: int


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(4)[index])


def born_distribution(state: QuantumState, basis: StokesIndex) -> np.ndarray:
    """Joint outcome probabilities P[j_A, j_B] over the rotated per-beam bases.

    j indexes the per-beam canonical basis with n_H read as n_i.
    """
    basis = StokesIndex(basis)
    truncation = state.truncation
    n_max = truncation.n_max_per_beam
    dim = truncation.beam_dimension
    unitary = rotation_unitary(basis, n_max)
    unitary_h = unitary.conj().T.tocsr()

    if state.is_pure:
        psi = state.amplitude_matrix()
        rotated = (unitary_h @ np.asarray(unitary_h @ psi).T).T
        probs = np.abs(rotated) ** 2
    else:
        # measurement projectors are block-diagonal in (N^A, N^B)
        rho = state.matrix
        diagonal = np.real(rho.diagonal())
        probs = np.zeros((dim, dim))
        blocks = {n: unitary[beam_block_slice(n), beam_block_slice(n)].toarray() for n in range(n_max + 1)}
        for n_a, n_b, idx in iter_blocks(truncation):
            if not np.any(diagonal[idx] > 0.0):
                continue
            rho_block = rho[idx][:, idx].toarray()
            w = np.kron(blocks[n_a], blocks[n_b])
            block_probs = np.real(np.sum(w.conj() * (rho_block @ w), axis=0))
            probs[beam_block_slice(n_a), beam_block_slice(n_b)] = block_probs.reshape(n_a + 1, n_b + 1)

    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def _outcome_table(n_max: int) -> np.ndarray:
    return np.array(beam_basis(n_max), dtype=np.int64)


def sample_counts(state: QuantumState, basis: StokesIndex, shots: int, seed: int) -> SampleBatch:
    """Draw shots i.i.d. from the exact four-count distribution of basis i."""
    basis = StokesIndex(basis)
    if shots < 1:
        raise InsufficientShotsError(f"shots must be >= 1, got {shots!r}")
    probs = born_distribution(state, basis)
    dim = state.truncation.beam_dimension
    rng = _stream(seed, int(basis) - 1)
    draws = rng.choice(probs.size, size=shots, p=probs.ravel())
    j_a, j_b = np.divmod(draws, dim)
    table = _outcome_table(state.truncation.n_max_per_beam)
    counts = np.hstack([table[j_a], table[j_b]])
    return SampleBatch(basis, counts)


def sample_all(state: QuantumState, shots: int, seed: int) -> Dict[StokesIndex, SampleBatch]:
    return {basis: sample_counts(state, basis, shots, seed) for basis in STOKES_INDICES}


def empirical_distribution(batch: SampleBatch, truncation: Truncation) -> np.ndarray:
    """Observed outcome frequencies laid out like born_distribution."""
    dim = truncation.beam_dimension
    n_a_i, n_a_perp, n_b_i, n_b_perp = batch.counts.T
    n_a, n_b = n_a_i + n_a_perp, n_b_i + n_b_perp
    j_a = n_a * (n_a + 1) // 2 + n_a_i
    j_b = n_b * (n_b + 1) // 2 + n_b_i
    freq = np.bincount(j_a * dim + j_b, minlength=dim * dim).astype(float)
    return (freq / freq.sum()).reshape(dim, dim)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

# per-shot features, averaged into moments
_FEATURES = (
    "theta_a", "theta_a_sq", "theta_b", "theta_b_sq", "theta_ab",
    "s_a", "s_a_sq", "s_b", "s_b_sq", "s_ab",
    "n_a", "n_a_sq", "n_b", "n_b_sq", "n_ab",
    "pi_a", "pi_b", "pi_ab", "inv_a", "inv_b",
)
_COL = {name: k for k, name in enumerate(_FEATURES)}


def shot_features(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    n_a = counts[:, 0] + counts[:, 1]
    n_b = counts[:, 2] + counts[:, 3]
    theta_a = counts[:, 0] - counts[:, 1]
    theta_b = counts[:, 2] - counts[:, 3]
    s_a = np.divide(theta_a, n_a, out=np.zeros_like(theta_a), where=n_a > 0)
    s_b = np.divide(theta_b, n_b, out=np.zeros_like(theta_b), where=n_b > 0)
    pi_a = (n_a > 0).astype(float)
    pi_b = (n_b > 0).astype(float)
    inv_a = np.divide(1.0, n_a, out=np.zeros_like(n_a), where=n_a > 0)
    inv_b = np.divide(1.0, n_b, out=np.zeros_like(n_b), where=n_b > 0)
    return np.column_stack([
        theta_a, theta_a ** 2, theta_b, theta_b ** 2, theta_a * theta_b,
        s_a, s_a ** 2, s_b, s_b ** 2, s_a * s_b,
        n_a, n_a ** 2, n_b, n_b ** 2, n_a * n_b,
        pi_a, pi_b, pi_a * pi_b, inv_a, inv_b,
    ])


def moments_from_means(means: np.ndarray, shots: np.ndarray) -> StokesMoments:
    """StokesMoments from per-basis feature means (rows ordered by basis 1, 2, 3).

    Number-type moments are measured in every basis and pooled, weighted by shots.
    """
    weights = np.asarray(shots, dtype=float) / float(np.sum(shots))

    def col(name):
        return means[:, _COL[name]]

    def pooled(name):
        return float(weights @ col(name))

    def beam(x):
        return BeamMoments(
            theta=col(f"theta_{x}"), theta_sq=col(f"theta_{x}_sq"),
            s=col(f"s_{x}"), s_sq=col(f"s_{x}_sq"),
            n=pooled(f"n_{x}"), n_sq=pooled(f"n_{x}_sq"),
            pi=pooled(f"pi_{x}"), inv_n=pooled(f"inv_{x}"),
        )

    return StokesMoments(
        a=beam("a"), b=beam("b"),
        theta_ab=col("theta_ab"), s_ab=col("s_ab"),
        n_ab=pooled("n_ab"), pi_ab=pooled("pi_ab"),
    )


def estimate_all(samples: Mapping[StokesIndex, SampleBatch], seed: int = 0,
                 resamples: int = BOOTSTRAP_RESAMPLES, min_shots: int = MIN_SHOTS,
                 tolerance: float = VIOLATION_TOLERANCE,
                 ids: Optional[List[WitnessId]] = None) -> List[EstimateReport]:
    """Plug-in estimates of every condition with bootstrap standard errors.

    The bootstrap resamples shots with replacement within each basis
    (multinomial counts over the distinct observed records).
    """
    missing = [b for b in STOKES_INDICES if b not in samples]
    if missing:
        raise InsufficientShotsError(f"no samples for bases {[int(b) for b in missing]}")
    shots = np.array([len(samples[b]) for b in STOKES_INDICES])
    if shots.min() < min_shots:
        raise InsufficientShotsError(f"need at least {min_shots} shots per basis, got {int(shots.min())}")

    unique_features, unique_counts = [], []
    for basis in STOKES_INDICES:
        rows, counts = np.unique(samples[basis].counts, axis=0, return_counts=True)
        unique_features.append(shot_features(rows))
        unique_counts.append(counts)

    means = np.vstack([c @ f / c.sum() for f, c in zip(unique_features, unique_counts)])
    point = evaluate_moments(moments_from_means(means, shots), ids, strict=False, tolerance=tolerance)

    rng = _stream(seed, _BOOTSTRAP_STREAM)
    resampled = [rng.multinomial(n, c / n, size=resamples) @ f / n
                 for f, c, n in zip(unique_features, unique_counts, shots)]
    margins = np.empty((resamples, len(point)))
    for r in range(resamples):
        boot = np.vstack([block[r] for block in resampled])
        reports = evaluate_moments(moments_from_means(boot, shots), ids, strict=False, tolerance=tolerance)
        margins[r] = [rep.margin for rep in reports]
    stderr = margins.std(axis=0)

    return [
        EstimateReport(rep.id, rep.lhs, rep.rhs, rep.margin, float(err), int(shots.min()))
        for rep, err in zip(point, stderr)
    ]


def estimate_witness(witness: WitnessId, samples: Mapping[StokesIndex, SampleBatch], seed: int = 0,
                     resamples: int = BOOTSTRAP_RESAMPLES, min_shots: int = MIN_SHOTS) -> EstimateReport:
    return estimate_all(samples, seed, resamples, min_shots, ids=[witness])[0]

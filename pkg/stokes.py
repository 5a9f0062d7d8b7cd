"""
Standard and normalized Stokes operators for one beam.

Conventions (per beam, modes H and V):
    Θ3 = a†_H a_H - a†_V a_V
    Θ1 = a†_H a_V + a†_V a_H
    Θ2 = -i (a†_H a_V - a†_V a_H)
so that on one photon (Θ1, Θ2, Θ3) are the Pauli matrices.  Any other sign
choice leaves every separability condition unchanged (they use squares and
sums over i).

Normalized operators S_i = Π (Θ_i / N) Π, with 1/N equal to 1/n on the
n >= 1 blocks and 0 on the vacuum, Π = 1 - |Ω><Ω|.
"""

import logging
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from fock_core import (
    Beam,
    LadderKind,
    Polarization,
    SparseOperator,
    Truncation,
    beam_block_slice,
    beam_diagonal,
    beam_ladder_matrix,
    beam_photon_numbers,
    number_op,
)

logger = logging.getLogger(__name__)

IDENTITY_TOLERANCE = 1e-12


class StokesIndex(IntEnum):
    DIAGONAL = 1     # D / A
    CIRCULAR = 2     # R / L
    RECTILINEAR = 3  # H / V


STOKES_INDICES = tuple(StokesIndex)


@lru_cache(maxsize=None)
def beam_stokes_matrices(n_max: int) -> Dict[str, sp.csr_matrix]:
    """Per-beam matrices: theta1..3, s1..3, number, vacuum projector, inverse number."""
    a_h = beam_ladder_matrix(Polarization.H, LadderKind.LOWER, n_max)
    a_v = beam_ladder_matrix(Polarization.V, LadderKind.LOWER, n_max)
    ad_h = beam_ladder_matrix(Polarization.H, LadderKind.RAISE, n_max)
    ad_v = beam_ladder_matrix(Polarization.V, LadderKind.RAISE, n_max)

    numbers = beam_photon_numbers(n_max).astype(float)
    occupied = (numbers > 0).astype(float)
    inverse = np.divide(1.0, numbers, out=np.zeros_like(numbers), where=numbers > 0)

    pi = beam_diagonal(occupied)
    inv_n = beam_diagonal(inverse)
    hv = (ad_h @ a_v).tocsr()
    vh = (ad_v @ a_h).tocsr()

    theta = {
        StokesIndex.DIAGONAL: (hv + vh).tocsr(),
        StokesIndex.CIRCULAR: (-1j * (hv - vh)).tocsr(),
        StokesIndex.RECTILINEAR: ((ad_h @ a_h) - (ad_v @ a_v)).tocsr(),
    }
    matrices = {f"theta{int(i)}": m for i, m in theta.items()}
    for i, m in theta.items():
        matrices[f"s{int(i)}"] = (pi @ (m @ inv_n) @ pi).tocsr()
    matrices["number"] = beam_diagonal(numbers)
    matrices["vacuum_projector"] = pi
    matrices["pi_inv_n_pi"] = (pi @ inv_n @ pi).tocsr()
    return matrices


def _local(beam: Beam, name: str, truncation: Truncation) -> SparseOperator:
    factor = beam_stokes_matrices(truncation.n_max_per_beam)[name]
    return SparseOperator.local(beam, factor, truncation, hermitian=True)


def stokes_standard(beam: Beam, index: StokesIndex, truncation: Truncation) -> SparseOperator:
    """Standard Stokes operator Θ_index of one beam."""
    return _local(beam, f"theta{int(StokesIndex(index))}", truncation)


def stokes_normalized(beam: Beam, index: StokesIndex, truncation: Truncation) -> SparseOperator:
    """Normalized Stokes operator S_index = Π Θ_index (1/N) Π of one beam."""
    return _local(beam, f"s{int(StokesIndex(index))}", truncation)


def vacuum_projector(beam: Beam, truncation: Truncation) -> SparseOperator:
    """Π, the projector off the beam vacuum."""
    return _local(beam, "vacuum_projector", truncation)


def pi_inverse_number_pi(beam: Beam, truncation: Truncation) -> SparseOperator:
    """Π (1/N) Π of one beam."""
    return _local(beam, "pi_inv_n_pi", truncation)


@dataclass(frozen=True, eq=False)
class StokesSet:
    beam: Beam
    standard: Tuple[SparseOperator, SparseOperator, SparseOperator]
    normalized: Tuple[SparseOperator, SparseOperator, SparseOperator]
    vacuum_projector: SparseOperator
    number: SparseOperator
    pi_invN_pi: SparseOperator

    def theta(self, index: StokesIndex) -> SparseOperator:
        return self.standard[int(index) - 1]

    def s(self, index: StokesIndex) -> SparseOperator:
        return self.normalized[int(index) - 1]


@lru_cache(maxsize=None)
def stokes_set(beam: Beam, truncation: Truncation) -> StokesSet:
    return StokesSet(
        beam=beam,
        standard=tuple(stokes_standard(beam, i, truncation) for i in STOKES_INDICES),
        normalized=tuple(stokes_normalized(beam, i, truncation) for i in STOKES_INDICES),
        vacuum_projector=vacuum_projector(beam, truncation),
        number=number_op(beam, truncation),
        pi_invN_pi=pi_inverse_number_pi(beam, truncation),
    )


@dataclass(frozen=True)
class IdentityReport:
    n_max: int
    standard_deviation: float
    normalized_deviation: float
    squared: bool = True
    tolerance: float = IDENTITY_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.standard_deviation < self.tolerance and self.normalized_deviation < self.tolerance


def identity_deviations(beam: Beam, truncation: Truncation, squared: bool = True) -> Tuple[float, float]:
    """Max elementwise deviations of ΣΘ² - N(N+2) and ΣS² - (Π + 2Π(1/N)Π) for one beam.

    With squared=False the normalized identity is checked in its unsquared
    form ΣS_i, which does not hold once a beam can carry a photon.
    """
    ops = stokes_set(beam, truncation)
    eye = SparseOperator.identity(truncation)
    theta_sq = SparseOperator.zero(truncation)
    s_sum = SparseOperator.zero(truncation)
    for i in range(3):
        theta_sq = theta_sq + ops.standard[i] @ ops.standard[i]
        s_sum = s_sum + (ops.normalized[i] @ ops.normalized[i] if squared else ops.normalized[i])
    standard = theta_sq - ops.number @ (ops.number + eye.scale(2.0))
    normalized = s_sum - (ops.vacuum_projector + ops.pi_invN_pi.scale(2.0))
    return standard.max_abs(), normalized.max_abs()


def verify_identities(truncation: Truncation, squared: bool = True,
                      tolerance: float = IDENTITY_TOLERANCE) -> IdentityReport:
    deviations = [identity_deviations(beam, truncation, squared) for beam in Beam]
    report = IdentityReport(
        n_max=truncation.n_max_per_beam,
        standard_deviation=max(d[0] for d in deviations),
        normalized_deviation=max(d[1] for d in deviations),
        squared=squared,
        tolerance=tolerance,
    )
    if not squared and report.normalized_deviation >= tolerance:
        logger.warning("Unsquared normalized identity fails (deviation %.3g), as expected",
                       report.normalized_deviation)
    return report


@lru_cache(maxsize=None)
def rotation_unitary(index: StokesIndex, n_max: int) -> sp.csr_matrix:
    """Per-beam passive rotation taking the H/V mode pair to the (i, i⊥) pair.

    Column (n_H = k, n_V = n - k) is the Fock state with k photons in mode i
    and n - k in mode i⊥, so U Θ3 U† = Θ_i.
    """
    index = StokesIndex(index)
    matrices = beam_stokes_matrices(n_max)
    if index is StokesIndex.RECTILINEAR:
        return sp.identity(matrices["number"].shape[0], dtype=complex, format="csr")
    if index is StokesIndex.DIAGONAL:
        generator = -1j * (np.pi / 4) * matrices["theta2"]
    else:
        generator = 1j * (np.pi / 4) * matrices["theta1"]
    generator = generator.toarray()
    blocks = []
    for n in range(n_max + 1):
        block = beam_block_slice(n)
        blocks.append(la.expm(generator[block, block]))
    return sp.block_diag(blocks, format="csr")

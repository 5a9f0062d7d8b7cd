"""
State constructors: vacuum, Fock states, polarization singlet sectors,
four-mode bright squeezed vacuum, random separable mixtures, white noise
and per-beam photon loss.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import comb

from errors import InvalidStateError
from fock_core import (
    Beam,
    OccupationState,
    Polarization,
    QuantumState,
    SparseOperator,
    Truncation,
    basis_index,
    beam_basis,
    beam_index,
    fock_state,
)

logger = logging.getLogger(__name__)

TAIL_MASS_WARNING = 1e-6


@dataclass(frozen=True)
class BsvParams:
    gain: float
    truncation: Truncation


@dataclass(frozen=True)
class NoiseSpec:
    p: float
    model: str = "white"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise InvalidStateError(f"noise weight p must lie in [0, 1], got {self.p!r}")
        if self.model != "white":
            raise InvalidStateError(f"unsupported noise model {self.model!r}")


@dataclass(frozen=True)
class LossSpec:
    eta_A: float = 1.0
    eta_B: float = 1.0

    def __post_init__(self):
        for name, eta in (("eta_A", self.eta_A), ("eta_B", self.eta_B)):
            if not 0.0 <= eta <= 1.0:
                raise InvalidStateError(f"{name} must lie in [0, 1], got {eta!r}")


def vacuum(truncation: Truncation) -> QuantumState:
    return fock_state(OccupationState(0, 0, 0, 0), truncation)


def maximally_mixed(truncation: Truncation) -> QuantumState:
    dim = truncation.dimension
    matrix = sp.identity(dim, dtype=complex, format="csr") / dim
    return QuantumState.mixed(matrix, truncation)


def _singlet_amplitudes(n: int, truncation: Truncation):
    """Indices and amplitudes of the normalized n-pair singlet.

    (a†_H b†_V - a†_V b†_H)^n |Ω> = n! Σ_k (-1)^(n-k) |k, n-k, n-k, k>,
    so every component has the same magnitude.
    """
    indices = np.array(
        [basis_index(OccupationState(k, n - k, n - k, k), truncation) for k in range(n + 1)],
        dtype=np.int64,
    )
    signs = np.array([(-1.0) ** (n - k) for k in range(n + 1)])
    return indices, signs / np.sqrt(n + 1)


def singlet_sector(n: int, truncation: Truncation) -> QuantumState:
    """Normalized state ∝ (a†_H b†_V - a†_V b†_H)^n |Ω>."""
    if n < 0 or n > truncation.n_max_per_beam:
        raise InvalidStateError(
            f"singlet sector n={n} exceeds truncation n_max={truncation.n_max_per_beam}"
        )
    vector = np.zeros(truncation.dimension, dtype=complex)
    indices, amps = _singlet_amplitudes(n, truncation)
    vector[indices] = amps
    return QuantumState.pure(vector, truncation)


def bsv_sector_weights(gain: float, n_max: int) -> np.ndarray:
    """Probabilities (n+1) tanh^(2n)Γ / cosh^4 Γ of the n-pair sectors, n <= n_max."""
    t2 = np.tanh(gain) ** 2
    n = np.arange(n_max + 1)
    return (n + 1) * t2 ** n / np.cosh(gain) ** 4


def bsv_tail_mass(gain: float, n_max: int) -> float:
    return float(max(0.0, 1.0 - bsv_sector_weights(gain, n_max).sum()))


def bsv_min_truncation(gain: float, tail_tolerance: float = TAIL_MASS_WARNING, limit: int = 200) -> int:
    """Smallest n_max whose BSV tail mass is below tail_tolerance."""
    if not np.isfinite(gain) or gain < 0:
        raise InvalidStateError(f"gain must be nonnegative, got {gain!r}")
    t2 = np.tanh(gain) ** 2
    remaining = 1.0
    scale = np.cosh(gain) ** -4
    for n in range(limit + 1):
        remaining -= (n + 1) * t2 ** n * scale
        if remaining < tail_tolerance:
            return n
    raise InvalidStateError(f"gain {gain!r} needs n_max beyond {limit}")


def bsv(params: BsvParams, tail_warning: float = TAIL_MASS_WARNING) -> QuantumState:
    """Four-mode bright squeezed vacuum (Type-II PDC output).

    |BSV> = cosh^-2 Γ Σ_n sqrt(n+1) tanh^n Γ |ψ_n>, |ψ_n> the normalized n-pair
    singlet, renormalized on the truncated space.
    """
    gain = float(params.gain)
    truncation = params.truncation
    if not np.isfinite(gain) or gain < 0:
        raise InvalidStateError(f"gain must be nonnegative, got {gain!r}")
    weights = bsv_sector_weights(gain, truncation.n_max_per_beam)
    tail = max(0.0, 1.0 - float(weights.sum()))
    if tail >= tail_warning:
        logger.warning(
            "BSV gain %.3g truncated at n_max=%d discards probability %.3g; n_max=%d needed",
            gain, truncation.n_max_per_beam, tail, bsv_min_truncation(gain, tail_warning),
        )

    vector = np.zeros(truncation.dimension, dtype=complex)
    for n, weight in enumerate(weights):
        if weight == 0.0:
            continue
        indices, amps = _singlet_amplitudes(n, truncation)
        vector[indices] = np.sqrt(weight) * amps
    vector /= np.linalg.norm(vector)
    return QuantumState.pure(vector, truncation, tail_mass=tail)


def _random_beam_state(rng: np.random.Generator, dim: int) -> np.ndarray:
    amps = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return amps / np.linalg.norm(amps)


def random_separable(seed: int, terms: int, truncation: Truncation) -> QuantumState:
    """Σ_λ p_λ |φ_λ><φ_λ| ⊗ |χ_λ><χ_λ| with Haar-random beam states and Dirichlet(1) weights."""
    if terms < 1:
        raise InvalidStateError(f"terms must be >= 1, got {terms!r}")
    rng = np.random.default_rng(seed)
    dim = truncation.beam_dimension
    weights = rng.dirichlet(np.ones(terms))
    rho = np.zeros((truncation.dimension, truncation.dimension), dtype=complex)
    for weight in weights:
        product = np.kron(_random_beam_state(rng, dim), _random_beam_state(rng, dim))
        rho += weight * np.outer(product, product.conj())
    return QuantumState.mixed(sp.csr_matrix(rho), truncation)


def random_pure_product(seed: int, truncation: Truncation) -> QuantumState:
    rng = np.random.default_rng(seed)
    dim = truncation.beam_dimension
    return QuantumState.pure(np.kron(_random_beam_state(rng, dim), _random_beam_state(rng, dim)), truncation)


def mix_white_noise(state: QuantumState, spec: NoiseSpec) -> QuantumState:
    """p ρ + (1 - p) 1/d on the truncated space."""
    if spec.p == 1.0:
        return state
    dim = state.dimension
    noise = sp.identity(dim, dtype=complex, format="csr") / dim
    matrix = spec.p * state.density_matrix() + (1.0 - spec.p) * noise
    return QuantumState.mixed(matrix.tocsr(), state.truncation, tail_mass=spec.p * state.tail_mass)


@lru_cache(maxsize=None)
def _beam_loss_kraus(polarization: Polarization, eta: float, k: int, n_max: int) -> sp.csr_matrix:
    """E_k = Σ_n sqrt(C(n,k) η^(n-k) (1-η)^k) |n-k><n| on one mode of a beam."""
    dim = (n_max + 1) * (n_max + 2) // 2
    rows, cols, vals = [], [], []
    for col, (n_h, n_v) in enumerate(beam_basis(n_max)):
        n = n_h if polarization is Polarization.H else n_v
        if n < k:
            continue
        amp = np.sqrt(comb(n, k, exact=True) * eta ** (n - k) * (1.0 - eta) ** k)
        if amp == 0.0:
            continue
        target = beam_index(n_h - k, n_v) if polarization is Polarization.H else beam_index(n_h, n_v - k)
        rows.append(target)
        cols.append(col)
        vals.append(amp)
    return sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(dim, dim))


def _lose_mode(rho: sp.csr_matrix, beam: Beam, polarization: Polarization, eta: float,
               truncation: Truncation) -> sp.csr_matrix:
    n_max = truncation.n_max_per_beam
    out = sp.csr_matrix(rho.shape, dtype=complex)
    for k in range(n_max + 1):
        kraus = SparseOperator.local(beam, _beam_loss_kraus(polarization, eta, k, n_max), truncation).matrix
        if kraus.nnz == 0:
            continue
        out = out + kraus @ rho @ kraus.conj().T
    return out.tocsr()


def apply_loss(state: QuantumState, spec: LossSpec) -> QuantumState:
    """Pure-loss channel with transmission eta_A on both A modes and eta_B on both B modes."""
    rho = state.density_matrix()
    for beam, eta in ((Beam.A, spec.eta_A), (Beam.B, spec.eta_B)):
        if eta == 1.0:
            continue
        for polarization in Polarization:
            rho = _lose_mode(rho, beam, polarization, float(eta), state.truncation)
    rho.eliminate_zeros()
    return QuantumState.mixed(rho, state.truncation, tail_mass=state.tail_mass)

"""
Truncated four-mode Fock space for two polarized beams (A and B).

Each beam carries two polarization modes (H, V) and is truncated by its
TOTAL photon number, n_AH + n_AV <= n_max (same for B).  The per-beam basis
is ordered by (n_total, n_H); the full basis is the Kronecker product of the
two beam bases, so the canonical order is lexicographic in
(n_A_total, n_AH, n_B_total, n_BH) and

    index(n_AH, n_AV, n_BH, n_BV) = i_A * D1 + i_B,   D1 = (n+1)(n+2)/2.

Operators are kept as sums of local products c * (A ⊗ B) where A and B are
per-beam scipy.sparse matrices (None stands for the beam identity).  Pure
state expectations are then contractions with the D1 x D1 amplitude matrix,
which keeps large truncations cheap.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from typing import Dict, Iterator, List, NamedTuple, Optional, Tuple, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from errors import InvalidStateError, NumericalGuardError, TruncationMismatchError

logger = logging.getLogger(__name__)

HERMITIAN_TOLERANCE = 1e-14
NORM_TOLERANCE = 1e-12
PSD_TOLERANCE = 1e-10
PSD_CHECK_MAX_DIMENSION = 1024
EXPECTATION_IMAG_TOLERANCE = 1e-10


def configure_numerics(hermitian_tolerance: Optional[float] = None,
                       psd_check_max_dimension: Optional[int] = None) -> None:
    """Override the process-wide Hermiticity tolerance and PSD-check size limit."""
    global HERMITIAN_TOLERANCE, PSD_CHECK_MAX_DIMENSION
    if hermitian_tolerance is not None:
        HERMITIAN_TOLERANCE = float(hermitian_tolerance)
    if psd_check_max_dimension is not None:
        PSD_CHECK_MAX_DIMENSION = int(psd_check_max_dimension)


class Beam(Enum):
    A = "A"
    B = "B"


class Polarization(Enum):
    H = "H"
    V = "V"


class LadderKind(Enum):
    RAISE = "raise"
    LOWER = "lower"


class StateKind(Enum):
    PURE = "pure"
    MIXED = "mixed"


@dataclass(frozen=True)
class ModeId:
    beam: Beam
    polarization: Polarization

    @property
    def label(self) -> str:
        return f"{self.beam.value}{self.polarization.value}"


MODES = tuple(ModeId(beam, pol) for beam in Beam for pol in Polarization)


@dataclass(frozen=True)
class Truncation:
    """Maximum total photon number carried by each beam."""

    n_max_per_beam: int

    def __post_init__(self):
        n = self.n_max_per_beam
        if isinstance(n, bool) or int(n) != n or n < 0:
            raise ValueError(f"n_max_per_beam must be a nonnegative integer, got {n!r}")
        object.__setattr__(self, "n_max_per_beam", int(n))

    @property
    def beam_dimension(self) -> int:
        n = self.n_max_per_beam
        return (n + 1) * (n + 2) // 2

    @property
    def dimension(self) -> int:
        return self.beam_dimension ** 2


class OccupationState(NamedTuple):
    n_AH: int
    n_AV: int
    n_BH: int
    n_BV: int

    @property
    def n_A(self) -> int:
        return self.n_AH + self.n_AV

    @property
    def n_B(self) -> int:
        return self.n_BH + self.n_BV


# ---------------------------------------------------------------------------
# Per-beam building blocks (two polarization modes, total photons <= n_max).
# Cached matrices are shared: treat them as read-only.
# ---------------------------------------------------------------------------

def beam_index(n_h: int, n_v: int) -> int:
    """Position of (n_h, n_v) in the single-beam basis, ordered by photon number."""
    n = n_h + n_v
    return n * (n + 1) // 2 + n_h


@lru_cache(maxsize=None)
def beam_basis(n_max: int) -> Tuple[Tuple[int, int], ...]:
    """Per-beam occupations (n_H, n_V) in canonical order."""
    return tuple((n_h, n - n_h) for n in range(n_max + 1) for n_h in range(n + 1))


@lru_cache(maxsize=None)
def beam_photon_numbers(n_max: int) -> np.ndarray:
    numbers = np.array([n_h + n_v for n_h, n_v in beam_basis(n_max)], dtype=np.int64)
    numbers.setflags(write=False)
    return numbers


def beam_block_slice(n: int) -> slice:
    """Contiguous per-beam index range of the n-photon block."""
    start = n * (n + 1) // 2
    return slice(start, start + n + 1)


@lru_cache(maxsize=None)
def beam_ladder_matrix(polarization: Polarization, kind: LadderKind, n_max: int) -> sp.csr_matrix:
    """a† or a for one polarization mode of a beam; raising past n_max gives zero."""
    dim = (n_max + 1) * (n_max + 2) // 2
    rows, cols, vals = [], [], []
    for col, (n_h, n_v) in enumerate(beam_basis(n_max)):
        if n_h + n_v >= n_max:
            continue
        if polarization is Polarization.H:
            target, amp = beam_index(n_h + 1, n_v), np.sqrt(n_h + 1)
        else:
            target, amp = beam_index(n_h, n_v + 1), np.sqrt(n_v + 1)
        rows.append(target)
        cols.append(col)
        vals.append(amp)
    raise_op = sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(dim, dim))
    if kind is LadderKind.RAISE:
        return raise_op
    return raise_op.conj().T.tocsr()


def beam_diagonal(values) -> sp.csr_matrix:
    return sp.diags(np.asarray(values, dtype=complex), format="csr")


# ---------------------------------------------------------------------------
# Basis enumeration
# ---------------------------------------------------------------------------

def enumerate_basis(truncation: Truncation) -> List[OccupationState]:
    """All occupation tuples within the truncation, in canonical order."""
    beam = beam_basis(truncation.n_max_per_beam)
    return [OccupationState(a_h, a_v, b_h, b_v) for a_h, a_v in beam for b_h, b_v in beam]


def basis_index(occupation: OccupationState, truncation: Truncation) -> int:
    """Row of an occupation in the four-mode basis."""
    n_max = truncation.n_max_per_beam
    if min(occupation) < 0 or occupation.n_A > n_max or occupation.n_B > n_max:
        raise InvalidStateError(f"{tuple(occupation)} lies outside truncation n_max={n_max}")
    i_a = beam_index(occupation.n_AH, occupation.n_AV)
    i_b = beam_index(occupation.n_BH, occupation.n_BV)
    return i_a * truncation.beam_dimension + i_b


def occupation_at(index: int, truncation: Truncation) -> OccupationState:
    """Inverse of basis_index."""
    if not 0 <= index < truncation.dimension:
        raise IndexError(f"basis index {index} out of range for dimension {truncation.dimension}")
    beam = beam_basis(truncation.n_max_per_beam)
    i_a, i_b = divmod(index, truncation.beam_dimension)
    return OccupationState(*beam[i_a], *beam[i_b])


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

Factor = Optional[sp.csr_matrix]
Term = Tuple[complex, Factor, Factor]


def _mul_factor(left: Factor, right: Factor) -> Factor:
    if left is None:
        return right
    if right is None:
        return left
    return (left @ right).tocsr()


def _adjoint_factor(factor: Factor) -> Factor:
    if factor is None:
        return None
    return factor.conj().T.tocsr()


def _full_factor(factor: Factor, dim: int) -> sp.csr_matrix:
    if factor is None:
        return sp.identity(dim, dtype=complex, format="csr")
    return factor


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Operator on the truncated space as a sum of terms c * (A ⊗ B)."""

    truncation: Truncation
    terms: Tuple[Term, ...]
    hermitian_flag: bool = False

    @classmethod
    def local(cls, beam: Beam, factor: sp.spmatrix, truncation: Truncation,
              hermitian: bool = False) -> "SparseOperator":
        factor = sp.csr_matrix(factor, dtype=complex)
        term = (1.0 + 0j, factor, None) if beam is Beam.A else (1.0 + 0j, None, factor)
        return cls(truncation, (term,), hermitian)

    @classmethod
    def product(cls, factor_a: sp.spmatrix, factor_b: sp.spmatrix, truncation: Truncation,
                hermitian: bool = False) -> "SparseOperator":
        term = (1.0 + 0j, sp.csr_matrix(factor_a, dtype=complex), sp.csr_matrix(factor_b, dtype=complex))
        return cls(truncation, (term,), hermitian)

    @classmethod
    def identity(cls, truncation: Truncation) -> "SparseOperator":
        return cls(truncation, ((1.0 + 0j, None, None),), True)

    @classmethod
    def zero(cls, truncation: Truncation) -> "SparseOperator":
        return cls(truncation, (), True)

    @property
    def dimension(self) -> int:
        return self.truncation.dimension

    def _check_compatible(self, other: "SparseOperator"):
        if not isinstance(other, SparseOperator):
            raise TypeError(f"expected SparseOperator, got {type(other).__name__}")
        if other.truncation != self.truncation:
            raise TruncationMismatchError(
                f"incompatible truncations: n_max={self.truncation.n_max_per_beam} "
                f"vs n_max={other.truncation.n_max_per_beam}"
            )

    def compose(self, other: "SparseOperator") -> "SparseOperator":
        """Operator product self @ other."""
        self._check_compatible(other)
        terms = tuple(
            (c1 * c2, _mul_factor(a1, a2), _mul_factor(b1, b2))
            for c1, a1, b1 in self.terms
            for c2, a2, b2 in other.terms
        )
        return SparseOperator(self.truncation, terms, False)

    def add(self, other: "SparseOperator") -> "SparseOperator":
        self._check_compatible(other)
        return SparseOperator(self.truncation, self.terms + other.terms,
                              self.hermitian_flag and other.hermitian_flag)

    def scale(self, factor: complex) -> "SparseOperator":
        factor = complex(factor)
        terms = tuple((c * factor, a, b) for c, a, b in self.terms)
        return SparseOperator(self.truncation, terms, self.hermitian_flag and factor.imag == 0.0)

    def adjoint(self) -> "SparseOperator":
        terms = tuple((np.conj(c), _adjoint_factor(a), _adjoint_factor(b)) for c, a, b in self.terms)
        return SparseOperator(self.truncation, terms, self.hermitian_flag)

    def mark_hermitian(self, check: bool = True, tolerance: Optional[float] = None) -> "SparseOperator":
        """Return this operator flagged Hermitian (verified on the materialized matrix if check)."""
        if check and not self.is_hermitian(tolerance):
            raise NumericalGuardError("operator is not Hermitian within tolerance")
        return SparseOperator(self.truncation, self.terms, True)

    def __matmul__(self, other: "SparseOperator") -> "SparseOperator":
        return self.compose(other)

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        return self.add(other)

    def __sub__(self, other: "SparseOperator") -> "SparseOperator":
        return self.add(other.scale(-1.0))

    def __neg__(self) -> "SparseOperator":
        return self.scale(-1.0)

    def __mul__(self, factor: complex) -> "SparseOperator":
        return self.scale(factor)

    __rmul__ = __mul__

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Materialized full-space matrix."""
        dim = self.truncation.beam_dimension
        total = sp.csr_matrix((self.dimension, self.dimension), dtype=complex)
        for c, a, b in self.terms:
            total = total + c * sp.kron(_full_factor(a, dim), _full_factor(b, dim), format="csr")
        total.eliminate_zeros()
        return total.tocsr()

    def to_scipy(self) -> sp.csr_matrix:
        return self.matrix

    def entries(self) -> Dict[Tuple[int, int], complex]:
        """Nonzero (row, col) -> amplitude map of the materialized matrix."""
        coo = self.matrix.tocoo()
        return {(int(r), int(c)): complex(v) for r, c, v in zip(coo.row, coo.col, coo.data)}

    def max_abs(self) -> float:
        data = self.matrix.data
        return float(np.abs(data).max()) if data.size else 0.0

    def is_hermitian(self, tolerance: Optional[float] = None) -> bool:
        tolerance = HERMITIAN_TOLERANCE if tolerance is None else tolerance
        diff = (self.matrix - self.matrix.conj().T).tocsr()
        return diff.nnz == 0 or float(np.abs(diff.data).max()) <= tolerance

    def trace(self) -> complex:
        dim = self.truncation.beam_dimension
        total = 0j
        for c, a, b in self.terms:
            tr_a = dim if a is None else a.diagonal().sum()
            tr_b = dim if b is None else b.diagonal().sum()
            total += c * tr_a * tr_b
        return complex(total)

    def apply(self, vector: np.ndarray) -> np.ndarray:
        """Action on a full-space vector."""
        dim = self.truncation.beam_dimension
        psi = np.asarray(vector, dtype=complex).reshape(dim, dim)
        out = np.zeros_like(psi)
        for c, a, b in self.terms:
            out += c * _apply_local_product(a, b, psi)
        return out.reshape(-1)


def _apply_local_product(a: Factor, b: Factor, psi: np.ndarray) -> np.ndarray:
    """(A ⊗ B) vec(Ψ) in matrix form: A Ψ Bᵀ."""
    out = psi if a is None else a @ psi
    if b is not None:
        out = (b @ out.T).T
    return np.asarray(out)


def identity(truncation: Truncation) -> SparseOperator:
    """Identity on the truncated space."""
    return SparseOperator.identity(truncation)


def ladder(mode: ModeId, kind: LadderKind, truncation: Truncation) -> SparseOperator:
    """Creation or annihilation operator of one mode, cut at the beam truncation."""
    factor = beam_ladder_matrix(mode.polarization, kind, truncation.n_max_per_beam)
    return SparseOperator.local(mode.beam, factor, truncation)


@lru_cache(maxsize=None)
def number_op(beam: Beam, truncation: Truncation) -> SparseOperator:
    """N^X = a†_XH a_XH + a†_XV a_XV (diagonal)."""
    numbers = beam_photon_numbers(truncation.n_max_per_beam)
    return SparseOperator.local(beam, beam_diagonal(numbers), truncation, hermitian=True)


def compose(*ops: SparseOperator) -> SparseOperator:
    if not ops:
        raise ValueError("compose needs at least one operator")
    result = ops[0]
    for op in ops[1:]:
        result = result.compose(op)
    return result


def add(*ops: SparseOperator) -> SparseOperator:
    if not ops:
        raise ValueError("add needs at least one operator")
    result = ops[0]
    for op in ops[1:]:
        result = result.add(op)
    return result


def scale(op: SparseOperator, factor: complex) -> SparseOperator:
    return op.scale(factor)


def adjoint(op: SparseOperator) -> SparseOperator:
    return op.adjoint()


def commutator(left: SparseOperator, right: SparseOperator) -> SparseOperator:
    return left.compose(right) - right.compose(left)


def _factor_is_block_diagonal(factor: Factor, numbers: np.ndarray) -> bool:
    if factor is None:
        return True
    coo = factor.tocoo()
    nonzero = coo.data != 0
    return bool(np.all(numbers[coo.row[nonzero]] == numbers[coo.col[nonzero]]))


def is_block_diagonal(op: SparseOperator) -> bool:
    """True iff no element connects different (N^A, N^B) blocks."""
    numbers = beam_photon_numbers(op.truncation.n_max_per_beam)
    if all(_factor_is_block_diagonal(a, numbers) and _factor_is_block_diagonal(b, numbers)
           for _, a, b in op.terms):
        return True
    # terms may cancel: fall back to the materialized matrix
    coo = op.matrix.tocoo()
    dim = op.truncation.beam_dimension
    row_a, row_b = np.divmod(coo.row, dim)
    col_a, col_b = np.divmod(coo.col, dim)
    return bool(np.all(numbers[row_a] == numbers[col_a]) and np.all(numbers[row_b] == numbers[col_b]))


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure vector or sparse density matrix over the truncated basis."""

    kind: StateKind
    truncation: Truncation
    vector: Optional[np.ndarray] = None
    matrix: Optional[sp.csr_matrix] = None
    tail_mass: float = 0.0

    def __post_init__(self):
        dim = self.truncation.dimension
        if self.kind is StateKind.PURE:
            if self.vector is None or self.vector.shape != (dim,):
                raise TruncationMismatchError(f"pure state vector must have shape ({dim},)")
            self.vector.setflags(write=False)
        else:
            if self.matrix is None or self.matrix.shape != (dim, dim):
                raise TruncationMismatchError(f"density matrix must have shape ({dim}, {dim})")

    @classmethod
    def pure(cls, vector, truncation: Truncation, tail_mass: float = 0.0,
             validate: bool = True) -> "QuantumState":
        state = cls(StateKind.PURE, truncation, vector=np.array(vector, dtype=complex), tail_mass=float(tail_mass))
        if validate:
            state.validate()
        return state

    @classmethod
    def mixed(cls, matrix, truncation: Truncation, tail_mass: float = 0.0,
              validate: bool = True) -> "QuantumState":
        state = cls(StateKind.MIXED, truncation, matrix=sp.csr_matrix(matrix, dtype=complex),
                    tail_mass=float(tail_mass))
        if validate:
            state.validate()
        return state

    @property
    def is_pure(self) -> bool:
        return self.kind is StateKind.PURE

    @property
    def dimension(self) -> int:
        return self.truncation.dimension

    def validate(self, psd_max_dimension: Optional[int] = None) -> None:
        if psd_max_dimension is None:
            psd_max_dimension = PSD_CHECK_MAX_DIMENSION
        data = self.vector if self.is_pure else self.matrix.data
        if not np.all(np.isfinite(data)):
            raise NumericalGuardError(f"{self.kind.value} state has non-finite entries")
        if self.is_pure:
            norm = np.linalg.norm(self.vector)
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise InvalidStateError(f"pure state norm {norm!r} differs from 1")
            return

        rho = self.matrix
        diff = (rho - rho.conj().T).tocsr()
        if diff.nnz and float(np.abs(diff.data).max()) > NORM_TOLERANCE:
            raise InvalidStateError("density matrix is not Hermitian")
        trace = rho.diagonal().sum()
        if abs(trace - 1.0) > NORM_TOLERANCE:
            raise InvalidStateError(f"density matrix trace {trace!r} differs from 1")
        if self.dimension <= psd_max_dimension:
            min_eig = float(la.eigvalsh(rho.toarray()).min())
            if min_eig < -PSD_TOLERANCE:
                raise InvalidStateError(f"density matrix has negative eigenvalue {min_eig!r}")
        else:
            logger.debug("Skipping PSD check for dimension %d", self.dimension)

    def amplitude_matrix(self) -> np.ndarray:
        """Pure amplitudes as a D1 x D1 matrix Ψ[i_A, i_B]."""
        if not self.is_pure:
            raise InvalidStateError("amplitude matrix is only defined for pure states")
        dim = self.truncation.beam_dimension
        return self.vector.reshape(dim, dim)

    def density_matrix(self) -> sp.csr_matrix:
        if not self.is_pure:
            return self.matrix
        col = sp.csr_matrix(self.vector.reshape(-1, 1))
        return (col @ col.conj().T).tocsr()

    def as_mixed(self) -> "QuantumState":
        if not self.is_pure:
            return self
        return QuantumState(StateKind.MIXED, self.truncation, matrix=self.density_matrix(),
                            tail_mass=self.tail_mass)

    @cached_property
    def _coo(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self.matrix.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data

    def purity(self) -> float:
        if self.is_pure:
            return 1.0
        rho = self.matrix
        return float(np.real(rho.multiply(rho.T).sum()))

    def fidelity(self, other: "QuantumState") -> float:
        if other.truncation != self.truncation:
            raise TruncationMismatchError("fidelity between states of different truncations")
        if self.is_pure and other.is_pure:
            return float(abs(np.vdot(self.vector, other.vector)) ** 2)
        if self.is_pure or other.is_pure:
            pure, mixed = (self, other) if self.is_pure else (other, self)
            return float(np.real(np.vdot(pure.vector, mixed.matrix @ pure.vector)))
        sqrt_rho = la.sqrtm(self.matrix.toarray())
        inner = la.sqrtm(sqrt_rho @ other.matrix.toarray() @ sqrt_rho)
        return float(np.real(np.trace(inner)) ** 2)

    def triples(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(row, col, value) triples; pure states use col = 0."""
        if self.is_pure:
            rows = np.flatnonzero(self.vector)
            return rows, np.zeros_like(rows), self.vector[rows]
        return self._coo


def fock_state(occupation: OccupationState, truncation: Truncation) -> QuantumState:
    vector = np.zeros(truncation.dimension, dtype=complex)
    vector[basis_index(OccupationState(*occupation), truncation)] = 1.0
    return QuantumState.pure(vector, truncation)


def state_from_triples(rows, cols, values, truncation: Truncation, kind: StateKind,
                       tail_mass: float = 0.0) -> QuantumState:
    dim = truncation.dimension
    values = np.asarray(values, dtype=complex)
    if kind is StateKind.PURE:
        vector = np.zeros(dim, dtype=complex)
        vector[np.asarray(rows, dtype=np.int64)] = values
        return QuantumState.pure(vector, truncation, tail_mass)
    matrix = sp.csr_matrix((values, (rows, cols)), shape=(dim, dim))
    return QuantumState.mixed(matrix, truncation, tail_mass)


def operator_triples(op: SparseOperator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    coo = op.matrix.tocoo()
    return coo.row, coo.col, coo.data


# ---------------------------------------------------------------------------
# Expectation values
# ---------------------------------------------------------------------------

def _gather(factor: Factor, rows: np.ndarray, cols: np.ndarray) -> Union[np.ndarray, float]:
    """factor[rows, cols] elementwise, identity handled without indexing."""
    if factor is None:
        return (rows == cols).astype(float)
    return np.asarray(factor[rows, cols]).ravel()


def expectation(state: QuantumState, op: SparseOperator) -> Union[float, complex]:
    """<ψ|O|ψ> or Tr(O ρ); real for Hermitian-flagged operators."""
    if state.truncation != op.truncation:
        raise TruncationMismatchError(
            f"state n_max={state.truncation.n_max_per_beam} vs operator "
            f"n_max={op.truncation.n_max_per_beam}"
        )
    total = 0j
    if state.is_pure:
        psi = state.amplitude_matrix()
        for c, a, b in op.terms:
            total += c * np.vdot(psi, _apply_local_product(a, b, psi))
    else:
        rows, cols, data = state._coo
        if data.size:
            dim = state.truncation.beam_dimension
            row_a, row_b = np.divmod(rows, dim)
            col_a, col_b = np.divmod(cols, dim)
            # Tr(O ρ) = Σ O[c, r] ρ[r, c]
            for c, a, b in op.terms:
                weights = _gather(a, col_a, row_a) * _gather(b, col_b, row_b)
                total += c * np.sum(weights * data)
    total = complex(total)
    if op.hermitian_flag:
        if abs(total.imag) > EXPECTATION_IMAG_TOLERANCE:
            raise NumericalGuardError(
                f"Hermitian operator has complex expectation {total!r}"
            )
        return total.real
    return total


def iter_blocks(truncation: Truncation) -> Iterator[Tuple[int, int, np.ndarray]]:
    """Yield (n_A, n_B, full-space indices) for every (N^A, N^B) block."""
    dim = truncation.beam_dimension
    n_max = truncation.n_max_per_beam
    for n_a in range(n_max + 1):
        idx_a = np.arange(dim)[beam_block_slice(n_a)]
        for n_b in range(n_max + 1):
            idx_b = np.arange(dim)[beam_block_slice(n_b)]
            yield n_a, n_b, (idx_a[:, None] * dim + idx_b[None, :]).ravel()

import logging
import os
import re
import sys
from datetime import datetime
from typing import IO, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from fock_core import QuantumState, SparseOperator, StateKind, Truncation, operator_triples, state_from_triples
from sampling import EstimateReport, SampleBatch
from version import APP_NAME, __version__
from witnesses import WitnessReport

logger = logging.getLogger(__name__)

Target = Union[str, IO[str], None]

WITNESS_COLUMNS = ["id", "lhs", "rhs", "margin", "entangled"]
SWEEP_COLUMNS = ["param", "value"] + WITNESS_COLUMNS
SAMPLE_COLUMNS = ["basis", "n_A_i", "n_A_iperp", "n_B_i", "n_B_iperp"]
ESTIMATE_COLUMNS = ["id", "lhs_hat", "rhs_hat", "margin_hat", "stderr", "shots"]
IDENTITY_COLUMNS = ["n_max", "beam", "identity", "max_deviation"]
TRIPLE_COLUMNS = ["row", "col", "re", "im"]

_TRIPLE_HEADER = re.compile(r"#\s*truncation\s+n_max=(\d+)\s+kind=(\w+)(?:\s+tail_mass=(\S+))?")


class DataManager:
    """Writes and reads every CSV the lab produces.

    Output targets are file paths or open text streams; None means stdout.
    """

    def __init__(self, save_directory: str = "results", float_format: str = "%.17g"):
        self.save_directory = save_directory
        self.float_format = float_format

    def _write_frame(self, frame: pd.DataFrame, target: Target, header_line: Optional[str] = None) -> str:
        if target is None:
            target = sys.stdout
        if isinstance(target, str):
            parent = os.path.dirname(target)
            if parent:
                os.makedirs(parent, exist_ok=True)
            with open(target, "w", newline="", encoding="utf-8") as f:
                self._write_frame(frame, f, header_line)
            logger.info("Results saved to: %s", target)
            return target
        if header_line is not None:
            target.write(header_line + "\n")
        frame.to_csv(target, index=False, float_format=self.float_format, lineterminator="\n")
        return getattr(target, "name", "<stream>")

    # ------------------------------------------------------------------
    # Frames
    # ------------------------------------------------------------------

    @staticmethod
    def witness_frame(reports: Iterable[WitnessReport]) -> pd.DataFrame:
        rows = [
            {"id": r.id.value, "lhs": r.lhs, "rhs": r.rhs, "margin": r.margin, "entangled": r.entangled}
            for r in reports
        ]
        return pd.DataFrame(rows, columns=WITNESS_COLUMNS)

    @staticmethod
    def sweep_frame(rows: Iterable[Tuple[str, float, WitnessReport]]) -> pd.DataFrame:
        records = [
            {"param": param, "value": float(value), "id": r.id.value, "lhs": r.lhs, "rhs": r.rhs,
             "margin": r.margin, "entangled": r.entangled}
            for param, value, r in rows
        ]
        return pd.DataFrame(records, columns=SWEEP_COLUMNS)

    @staticmethod
    def samples_frame(batches: Iterable[SampleBatch]) -> pd.DataFrame:
        blocks = []
        for batch in batches:
            block = pd.DataFrame(batch.counts, columns=SAMPLE_COLUMNS[1:])
            block.insert(0, "basis", int(batch.basis))
            blocks.append(block)
        if not blocks:
            return pd.DataFrame(columns=SAMPLE_COLUMNS)
        return pd.concat(blocks, ignore_index=True)

    @staticmethod
    def estimate_frame(estimates: Iterable[EstimateReport]) -> pd.DataFrame:
        rows = [
            {"id": e.id.value, "lhs_hat": e.lhs_hat, "rhs_hat": e.rhs_hat, "margin_hat": e.margin_hat,
             "stderr": e.stderr, "shots": e.shots}
            for e in estimates
        ]
        return pd.DataFrame(rows, columns=ESTIMATE_COLUMNS)

    @staticmethod
    def identity_frame(rows: Iterable[Tuple[int, str, str, float]]) -> pd.DataFrame:
        return pd.DataFrame(list(rows), columns=IDENTITY_COLUMNS)

    # ------------------------------------------------------------------
    # Writers
    # ------------------------------------------------------------------

    def save_witness_reports(self, reports: Sequence[WitnessReport], target: Target = None) -> str:
        return self._write_frame(self.witness_frame(reports), target)

    def save_sweep(self, rows: Sequence[Tuple[str, float, WitnessReport]], target: Target = None) -> str:
        return self._write_frame(self.sweep_frame(rows), target)

    def save_samples(self, batches: Sequence[SampleBatch], target: Target = None) -> str:
        return self._write_frame(self.samples_frame(batches), target)

    def save_estimates(self, estimates: Sequence[EstimateReport], target: Target = None) -> str:
        return self._write_frame(self.estimate_frame(estimates), target)

    def save_identities(self, rows: Sequence[Tuple[int, str, str, float]], target: Target = None) -> str:
        return self._write_frame(self.identity_frame(rows), target)

    @staticmethod
    def _triple_frame(rows, cols, values) -> pd.DataFrame:
        values = np.asarray(values, dtype=complex)
        return pd.DataFrame({
            "row": np.asarray(rows, dtype=np.int64),
            "col": np.asarray(cols, dtype=np.int64),
            "re": values.real,
            "im": values.imag,
        }, columns=TRIPLE_COLUMNS)

    def save_state_csv(self, state: QuantumState, target: Target = None) -> str:
        header = (f"# truncation n_max={state.truncation.n_max_per_beam} kind={state.kind.value} "
                  f"tail_mass={self.float_format % state.tail_mass}")
        return self._write_frame(self._triple_frame(*state.triples()), target, header)

    def save_operator_csv(self, op: SparseOperator, target: Target = None) -> str:
        header = f"# truncation n_max={op.truncation.n_max_per_beam} kind=operator"
        return self._write_frame(self._triple_frame(*operator_triples(op)), target, header)

    # ------------------------------------------------------------------
    # Readers
    # ------------------------------------------------------------------

    def load_frame(self, filepath: str) -> pd.DataFrame:
        return pd.read_csv(filepath, float_precision="round_trip")

    def load_state_csv(self, filepath: str) -> QuantumState:
        with open(filepath, "r", encoding="utf-8") as f:
            header = f.readline().strip()
        match = _TRIPLE_HEADER.match(header)
        if not match or match.group(2) not in ("pure", "mixed"):
            raise ValueError(f"{filepath}: not a state file (header {header!r})")
        truncation = Truncation(int(match.group(1)))
        kind = StateKind(match.group(2))
        tail_mass = float(match.group(3)) if match.group(3) else 0.0
        frame = pd.read_csv(filepath, skiprows=1, float_precision="round_trip")
        values = frame["re"].to_numpy() + 1j * frame["im"].to_numpy()
        return state_from_triples(frame["row"].to_numpy(), frame["col"].to_numpy(), values,
                                  truncation, kind, tail_mass)

    # ------------------------------------------------------------------
    # Reports
    # ------------------------------------------------------------------

    def export_summary_report(self, lines: List[str], filepath: Optional[str] = None,
                              title: str = "Sweep Summary Report") -> str:
        """Write a plain-text summary; defaults to a timestamped file in save_directory."""
        if filepath is None:
            os.makedirs(self.save_directory, exist_ok=True)
            timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
            filepath = os.path.join(self.save_directory, f"sweep_summary_{timestamp}.txt")
        else:
            parent = os.path.dirname(filepath)
            if parent:
                os.makedirs(parent, exist_ok=True)

        with open(filepath, "w", encoding="utf-8") as f:
            f.write(f"{APP_NAME} {__version__} - {title}\n")
            f.write("=" * 50 + "\n\n")
            for line in lines:
                f.write(f"{line}\n")

        logger.info("Summary report saved to: %s", filepath)
        return filepath

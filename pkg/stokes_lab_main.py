"""
Command-line front end of the Stokes witness lab.

    python stokes_lab_main.py identities --nmax 4
    python stokes_lab_main.py witness --state "singlet(n=1)" --nmax 2
    python stokes_lab_main.py sweep --state "bsv(gain=0.8)" --sweep noise.p --grid 0:1:0.01
    python stokes_lab_main.py sample --state "singlet(n=1)" --shots 100000 --seed 7
    python stokes_lab_main.py config --out my_config.json

Exit codes: 0 success, 1 usage or input error, 2 numerical guard tripped.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from data_manager import DataManager
from errors import NumericalGuardError
from fock_core import Beam, Truncation, configure_numerics
from sampling import estimate_all, sample_all
from state_spec import (
    StateSpec,
    build_state,
    parse_state_spec,
    required_truncation,
    split_trailing_noise,
    with_parameter,
)
from states import NoiseSpec
from stokes import STOKES_INDICES, identity_deviations, stokes_normalized, stokes_standard
from version import APP_NAME, __version__
from witnesses import (
    WITNESS_IDS,
    WitnessId,
    WitnessReport,
    check_dominance,
    detection_threshold,
    eval_all,
    evaluate_moments,
    state_moments,
    white_noise_moments,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_GUARD = 2


@dataclass(frozen=True)
class SweepSpec:
    state: StateSpec
    target: str
    start: float
    stop: float
    step: float
    n_max: Optional[int] = None
    witnesses: Tuple[WitnessId, ...] = WITNESS_IDS

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"grid step must be positive, got {self.step!r}")
        if self.stop < self.start:
            raise ValueError(f"grid stop {self.stop!r} is below start {self.start!r}")

    def values(self) -> np.ndarray:
        count = int(np.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return np.round(self.start + self.step * np.arange(count), 12)


def parse_grid(text: str) -> Tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must be START:STOP:STEP, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ValueError(f"grid must be START:STOP:STEP, got {text!r}") from None
    return start, stop, step


def parse_witness_ids(text: Optional[str]) -> Tuple[WitnessId, ...]:
    if not text:
        return WITNESS_IDS
    ids = []
    for token in text.split(","):
        token = token.strip().upper()
        try:
            ids.append(WitnessId(token))
        except ValueError:
            raise ValueError(f"unknown witness id {token!r}") from None
    return tuple(w for w in WITNESS_IDS if w in ids)


class StokesLab:
    """Runs the lab commands with one configuration and one DataManager."""

    def __init__(self, config: Config):
        self.config = config
        numerics = config.get_numerics()
        configure_numerics(numerics["hermitian_tolerance"], numerics["psd_check_max_dimension"])
        self.tolerance = float(numerics["violation_tolerance"])
        self.sqrt_clamp = float(numerics["sqrt_clamp_tolerance"])
        self.tail_warning = float(numerics["tail_mass_warning"])
        data_settings = config.get("data_settings")
        self.data_manager = DataManager(data_settings["save_directory"], data_settings["float_format"])

    def _truncation(self, spec: StateSpec, n_max: Optional[int]) -> Truncation:
        if n_max is None:
            n_max = required_truncation(spec, self.tail_warning)
            logger.info("Using n_max=%d for %s", n_max, spec)
        return Truncation(n_max)

    def _evaluate(self, spec: StateSpec, truncation: Truncation) -> List[WitnessReport]:
        state = build_state(spec, truncation, self.tail_warning)
        return eval_all(state, self.tolerance, self.sqrt_clamp)

    # ------------------------------------------------------------------
    # Commands
    # ------------------------------------------------------------------

    def cmd_identities(self, n_max: int, out=None, unsquared: bool = False,
                       dump_operators: Optional[str] = None) -> int:
        limit = int(self.config.get("cli", "max_identity_nmax"))
        if n_max > limit:
            logger.error("n_max=%d exceeds the identity check limit %d", n_max, limit)
            return EXIT_USAGE
        truncation = Truncation(n_max)
        tolerance = float(self.config.get("numerics", "identity_tolerance"))
        rows = []
        worst = 0.0
        for beam in Beam:
            standard, normalized = identity_deviations(beam, truncation, squared=True)
            rows.append((n_max, beam.value, "sum_theta_squared", standard))
            rows.append((n_max, beam.value, "sum_S_squared", normalized))
            worst = max(worst, standard, normalized)
            if unsquared:
                _, diagnostic = identity_deviations(beam, truncation, squared=False)
                rows.append((n_max, beam.value, "sum_S_unsquared", diagnostic))
        self.data_manager.save_identities(rows, out)
        if dump_operators:
            self.dump_operators(truncation, dump_operators)
        if worst >= tolerance:
            logger.error("Identity violated at n_max=%d: max deviation %.3g", n_max, worst)
            return EXIT_GUARD
        logger.info("Identities hold at n_max=%d (max deviation %.3g)", n_max, worst)
        return EXIT_OK

    def dump_operators(self, truncation: Truncation, directory: str) -> List[str]:
        """Write every Stokes operator of both beams as a row,col,re,im file."""
        paths = []
        for beam in Beam:
            for index in STOKES_INDICES:
                for prefix, build in (("theta", stokes_standard), ("S", stokes_normalized)):
                    name = f"{prefix}{int(index)}_{beam.value}.csv"
                    paths.append(self.data_manager.save_operator_csv(build(beam, index, truncation),
                                                                     os.path.join(directory, name)))
        return paths

    def cmd_witness(self, state_text: str, n_max: Optional[int] = None, out=None,
                    dump_state: Optional[str] = None) -> int:
        spec = parse_state_spec(state_text)
        truncation = self._truncation(spec, n_max)
        state = build_state(spec, truncation, self.tail_warning)
        reports = eval_all(state, self.tolerance, self.sqrt_clamp)
        for problem in check_dominance(reports):
            logger.error("Dominance check failed: %s", problem)
        self.data_manager.save_witness_reports(reports, out)
        if dump_state:
            self.data_manager.save_state_csv(state, dump_state)
        detected = sum(r.entangled for r in reports)
        logger.info("%s: %d of %d conditions detect entanglement", spec, detected, len(reports))
        return EXIT_OK

    def _sweep_points(self, sweep: SweepSpec, truncation: Truncation,
                      values: np.ndarray) -> List[List[WitnessReport]]:
        workers = max(1, int(self.config.get("cli", "workers")))
        base, trailing_p = split_trailing_noise(with_parameter(sweep.state, sweep.target, float(values[0])))

        if sweep.target == "noise.p" and trailing_p is not None:
            # moments are linear in the state
            for value in values:
                NoiseSpec(float(value))
            signal = state_moments(build_state(base, truncation, self.tail_warning))
            noise = white_noise_moments(truncation)
            logger.info("Noise sweep over %d points from precomputed moments", len(values))

            def evaluate(value):
                return evaluate_moments(signal.mix(noise, float(value)), None, True,
                                        self.tolerance, self.sqrt_clamp)
        else:
            def evaluate(value):
                return self._evaluate(with_parameter(sweep.state, sweep.target, float(value)), truncation)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(evaluate, values))

    def sweep_summary(self, sweep: SweepSpec, truncation: Truncation, values: np.ndarray,
                      points: Sequence[Sequence[WitnessReport]]) -> Tuple[List[str], bool]:
        lines = [
            f"State: {sweep.state}",
            f"Swept parameter: {sweep.target} over {sweep.start!r}:{sweep.stop!r}:{sweep.step!r} "
            f"({len(values)} points)",
            f"Truncation: n_max={truncation.n_max_per_beam}",
            "",
            "Detection thresholds (smallest value above which every grid point is detected):",
        ]
        thresholds = {}
        for k, witness in enumerate(WITNESS_IDS):
            flags = [point[k].entangled for point in points]
            p_star, interval = detection_threshold(values, flags)
            thresholds[witness] = p_star
            if witness in sweep.witnesses:
                shown = "none" if p_star is None else repr(p_star)
                shape = "upper interval" if interval else "NOT an upper interval"
                lines.append(f"  {witness.value:<18} p* = {shown:<22} {shape}")

        ok = True
        lines.append("")
        lines.append("Dominance and detection containment (improved vs base):")
        for value, point in zip(values, points):
            for problem in check_dominance(point):
                ok = False
                lines.append(f"  at {value!r}: {problem}")
        for improved in (WitnessId.VAR_IMPROVED_STD, WitnessId.VAR_IMPROVED_NORM):
            base = improved.base
            p_new, p_old = thresholds[improved], thresholds[base]
            if p_old is not None and (p_new is None or p_new > p_old):
                ok = False
                lines.append(f"  threshold of {improved.value} ({p_new!r}) above {base.value} ({p_old!r})")
        lines.append("  OK" if ok else "  FAILED")
        return lines, ok

    def cmd_sweep(self, sweep: SweepSpec, out=None, summary: Optional[str] = None) -> int:
        values = sweep.values()
        if sweep.n_max is None:
            n_max = max(required_truncation(with_parameter(sweep.state, sweep.target, float(v)), self.tail_warning)
                        for v in values)
            logger.info("Using n_max=%d for the sweep", n_max)
        else:
            n_max = sweep.n_max
        truncation = Truncation(n_max)

        points = self._sweep_points(sweep, truncation, values)
        rows = [(sweep.target, float(value), report)
                for value, point in zip(values, points)
                for report in point if report.id in sweep.witnesses]
        self.data_manager.save_sweep(rows, out)

        lines, ok = self.sweep_summary(sweep, truncation, values, points)
        for line in lines:
            if line:
                logger.info(line)
        if summary:
            self.data_manager.export_summary_report(lines, summary)
        if not ok:
            logger.error("Improved conditions failed the dominance check")
            return EXIT_GUARD
        return EXIT_OK

    def cmd_sample(self, state_text: str, shots: int, seed: int, n_max: Optional[int] = None,
                   out=None, samples_out: Optional[str] = None) -> int:
        spec = parse_state_spec(state_text)
        truncation = self._truncation(spec, n_max)
        state = build_state(spec, truncation, self.tail_warning)
        sampling = self.config.get_sampling()
        samples = sample_all(state, shots, seed)
        logger.info("Sampled %d shots per basis from %s (seed %d)", shots, spec, seed)
        estimates = estimate_all(samples, seed, int(sampling["bootstrap_resamples"]),
                                 int(sampling["min_shots"]), self.tolerance)
        self.data_manager.save_estimates(estimates, out)
        if samples_out:
            self.data_manager.save_samples(list(samples.values()), samples_out)
        return EXIT_OK

    def cmd_config(self, out: str) -> int:
        path = Config().save_config(out)
        logger.info("Default configuration written to %s", path)
        return EXIT_OK


# ----------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------

class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="stokes_lab_main.py", description=f"{APP_NAME} - {__doc__.strip().splitlines()[0]}")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {__version__}")
    parser.add_argument("--config", default=None, help="JSON configuration file (defaults otherwise)")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("identities", help="verify the Stokes operator identities")
    p.add_argument("--nmax", type=int, required=True)
    p.add_argument("--unsquared", action="store_true", help="also report the unsquared normalized form")
    p.add_argument("--dump-operators", default=None, metavar="DIR", help="write each Stokes operator as a CSV file")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=lambda lab, a: lab.cmd_identities(a.nmax, a.out, a.unsquared, a.dump_operators))

    p = commands.add_parser("witness", help="evaluate all ten conditions on a state")
    p.add_argument("--state", required=True)
    p.add_argument("--nmax", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--dump-state", default=None)
    p.set_defaults(handler=lambda lab, a: lab.cmd_witness(a.state, a.nmax, a.out, a.dump_state))

    p = commands.add_parser("sweep", help="evaluate the conditions over a parameter grid")
    p.add_argument("--state", required=True)
    p.add_argument("--sweep", required=True, help="NAME.KEY, e.g. noise.p, bsv.gain, loss.etaA")
    p.add_argument("--grid", required=True, help="START:STOP:STEP")
    p.add_argument("--nmax", type=int, default=None)
    p.add_argument("--witnesses", default=None, help="comma-separated ids (default: all)")
    p.add_argument("--out", default=None)
    p.add_argument("--summary", default=None)
    p.set_defaults(handler=_run_sweep)

    p = commands.add_parser("sample", help="simulate photon-counting measurements and estimate the conditions")
    p.add_argument("--state", required=True)
    p.add_argument("--shots", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--nmax", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--samples-out", default=None)
    p.set_defaults(handler=lambda lab, a: lab.cmd_sample(a.state, a.shots, a.seed, a.nmax, a.out, a.samples_out))

    p = commands.add_parser("config", help="write the default configuration")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=lambda lab, a: lab.cmd_config(a.out))
    return parser


def _run_sweep(lab: StokesLab, args) -> int:
    start, stop, step = parse_grid(args.grid)
    sweep = SweepSpec(
        state=parse_state_spec(args.state),
        target=args.sweep,
        start=start,
        stop=stop,
        step=step,
        n_max=args.nmax,
        witnesses=parse_witness_ids(args.witnesses),
    )
    return lab.cmd_sweep(sweep, args.out, args.summary)


def setup_logging(verbose: bool = False) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("[%(asctime)s] %(message)s", "%H:%M:%S"))
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, handlers=[handler], force=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.verbose)
    try:
        lab = StokesLab(Config(args.config))
        return args.handler(lab, args)
    except NumericalGuardError as e:
        logger.error("Numerical guard tripped: %s", e)
        return EXIT_GUARD
    except (ValueError, OSError) as e:
        logger.error("Error: %s", e)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

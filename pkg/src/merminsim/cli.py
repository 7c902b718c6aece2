"""Command-line interface: enumerate, simulate, verify, scan.

Exit codes: 0 success, 1 I/O error, 2 configuration error, 3 verification
failure. Machine-readable outputs are byte-stable for identical inputs;
the run timestamp lives only in the manifest.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence, Union

from . import __version__
from .exact import (
    ALL_SETTING_PAIRS,
    CaseStats,
    DegenerateConditioningError,
    JointTable,
    conditional_stats,
    detector_invariance_check,
    enumerate_joint,
)
from .model import (
    ConfigurationError,
    DetectorModel,
    ExperimentConfig,
    SourceDistribution,
    builtin_distribution,
    cell_at,
    encode_cell,
    switch_digit,
    N_CELLS,
)
from .montecarlo import (
    EstimatedCaseStats,
    SimulationPlan,
    TallyCounts,
    estimate_stats,
    run_trials,
)
from .stats import (
    NoCoincidencesError,
    compare,
    settings_independence_test,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_VERIFY = 3

DEFAULT_N_TRIALS = 1_000_000
DEFAULT_SEED = 0
INDEPENDENCE_ALPHA = 1e-3
INVARIANCE_GRID = (Fraction(0), Fraction(1, 5), Fraction(1, 2))
TARGET_CASE_A = Fraction(1)
TARGET_CASE_B = Fraction(1, 4)

_STAT_FIELDS = (
    "p_same_case_a",
    "p_same_case_b",
    "eta_a",
    "eta_b",
    "eta_u_a",
    "eta_u_b",
    "eta_f_a",
    "eta_f_b",
)


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------


def _as_int(value: Any, name: str) -> int:
    if isinstance(value, bool):
        raise ConfigurationError(f"{name}: expected an integer, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, Fraction) and value.denominator == 1:
        return value.numerator
    raise ConfigurationError(f"{name}: expected an integer, got {value!r}")


def _build_source(spec: Any) -> SourceDistribution:
    if not isinstance(spec, dict):
        raise ConfigurationError("source: expected an object")
    if "builtin" in spec:
        return builtin_distribution(spec["builtin"], spec.get("state"))
    if "entries" in spec:
        entries = spec["entries"]
        if not isinstance(entries, list):
            raise ConfigurationError("source.entries: expected a list")
        built = []
        for i, entry in enumerate(entries):
            if not isinstance(entry, dict) or "state" not in entry or "weight" not in entry:
                raise ConfigurationError(
                    f"source.entries[{i}]: expected an object with state and weight"
                )
            built.append((entry["state"], entry["weight"]))
        return SourceDistribution.from_entries(built)
    raise ConfigurationError("source: needs either a builtin name or an entries list")


def _build_detector(spec: Any, name: str) -> DetectorModel:
    if spec is None:
        return DetectorModel()
    if not isinstance(spec, dict):
        raise ConfigurationError(f"{name}: expected an object")
    try:
        return DetectorModel(spec.get("failure_probability", Fraction(0)))
    except ConfigurationError as exc:
        raise ConfigurationError(f"{name}.failure_probability: {exc}") from None


def load_config(path: Union[str, Path]) -> tuple[ExperimentConfig, dict]:
    """Parse and validate a JSON experiment description.

    Decimal literals are read exactly (0.1 means 1/10) and weights accept
    "num/den" strings. Returns the config and the raw document, which
    carries optional seed / n_trials defaults and feeds the run manifest.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    if "source" not in doc:
        raise ConfigurationError(f"{path}: missing source")
    try:
        source = _build_source(doc["source"])
        source.validate()
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}: source: {type(exc).__name__}: {exc}") from None
    try:
        config = ExperimentConfig(
            source=source,
            detector_a=_build_detector(doc.get("detector_a"), "detector_a"),
            detector_b=_build_detector(doc.get("detector_b"), "detector_b"),
        )
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}: {type(exc).__name__}: {exc}") from None
    return config, doc


# ---------------------------------------------------------------------------
# Rendering helpers
# ---------------------------------------------------------------------------


def _frac_str(value: Union[Fraction, None]) -> Union[str, None]:
    if value is None:
        return None
    return f"{value.numerator}/{value.denominator}"


def _jsonable(obj: Any) -> Any:
    """Recursively convert Fractions to num/den strings for JSON output."""
    if isinstance(obj, Fraction):
        return _frac_str(obj)
    if isinstance(obj, dict):
        return {key: _jsonable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(value) for value in obj]
    return obj


def _exact_field_json(value: Union[Fraction, None]) -> dict:
    return {
        "fraction": _frac_str(value),
        "value": None if value is None else float(value),
    }


def _case_stats_json(stats: CaseStats) -> dict:
    out = {name: _exact_field_json(getattr(stats, name)) for name in _STAT_FIELDS}
    out["coincidence_rate"] = {
        f"{sa.digit}{sb.digit}": _exact_field_json(stats.coincidence_rate[(sa, sb)])
        for sa, sb in ALL_SETTING_PAIRS
    }
    return out


def _estimate_json(est) -> dict:
    return {
        "value": est.value,
        "se": est.se,
        "ci95": None if est.ci_low is None else [est.ci_low, est.ci_high],
        "successes": est.successes,
        "trials": est.trials,
    }


def _estimated_stats_json(stats: EstimatedCaseStats) -> dict:
    out = {name: _estimate_json(getattr(stats, name)) for name in _STAT_FIELDS}
    out["coincidence_rate"] = {
        f"{sa.digit}{sb.digit}": _estimate_json(stats.coincidence_rate[(sa, sb)])
        for sa, sb in ALL_SETTING_PAIRS
    }
    out["n_trials"] = stats.n_trials
    return out


def _write_json(path: Path, obj: Any) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _csv_num(value: Union[float, Fraction, None]) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _fmt(value: Union[float, Fraction, None]) -> str:
    if value is None:
        return "undefined"
    return f"{float(value):.6f}"


def _print_exact_stats(stats: CaseStats) -> None:
    print(f"{'field':<24}{'value':>12}  exact")
    for name in _STAT_FIELDS:
        value = getattr(stats, name)
        print(f"{name:<24}{_fmt(value):>12}  {_frac_str(value) or 'undefined'}")
    for sa, sb in ALL_SETTING_PAIRS:
        value = stats.coincidence_rate[(sa, sb)]
        name = f"coincidence_rate[{sa.digit}{sb.digit}]"
        print(f"{name:<24}{_fmt(value):>12}  {_frac_str(value) or 'undefined'}")


def _print_estimates(stats: EstimatedCaseStats) -> None:
    print(f"{'field':<24}{'estimate':>12}{'se':>12}  95% CI")
    rows = [(name, getattr(stats, name)) for name in _STAT_FIELDS]
    rows += [
        (f"coincidence_rate[{sa.digit}{sb.digit}]", stats.coincidence_rate[(sa, sb)])
        for sa, sb in ALL_SETTING_PAIRS
    ]
    for name, est in rows:
        if not est.defined:
            print(f"{name:<24}{'undefined':>12}")
            continue
        ci = f"[{est.ci_low:.6f}, {est.ci_high:.6f}]"
        print(f"{name:<24}{est.value:>12.6f}{est.se:>12.2g}  {ci}")


def _tally_rows(tally: TallyCounts) -> list[list[Any]]:
    rows = []
    for index in range(N_CELLS):
        swa, swb, oa, ob = cell_at(index)
        rows.append(
            [
                switch_digit(swa),
                switch_digit(swb),
                oa.letter,
                ob.letter,
                encode_cell(swa, swb, oa, ob),
                int(tally.counts[index]),
            ]
        )
    return rows


def _joint_rows(table: JointTable) -> list[list[Any]]:
    rows = []
    for index in range(N_CELLS):
        key = cell_at(index)
        swa, swb, oa, ob = key
        rows.append(
            [
                switch_digit(swa),
                switch_digit(swb),
                oa.letter,
                ob.letter,
                encode_cell(*key),
                _csv_num(table.prob[key]),
            ]
        )
    return rows


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a run's report files bit for bit
    (given the same build); the timestamp is the one non-reproducible
    field and lives only here."""

    command: str
    config_path: str
    config: dict
    seed: int
    n_trials: int
    n_streams: int
    outputs: dict
    tool: str = "merminsim"
    version: str = __version__
    timestamp: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat()
    )

    def as_dict(self) -> dict:
        return asdict(self)


def _manifest(args, doc: dict, n: int, seed: int, streams: int, outputs: dict) -> RunManifest:
    return RunManifest(
        command=args.command,
        config_path=str(args.config),
        config=_jsonable(doc),
        seed=seed,
        n_trials=n,
        n_streams=streams,
        outputs=outputs,
    )


def _resolve_run_params(args, doc: dict) -> tuple[int, int]:
    n = args.n if args.n is not None else _as_int(doc.get("n_trials", DEFAULT_N_TRIALS), "n_trials")
    seed = args.seed if args.seed is not None else _as_int(doc.get("seed", DEFAULT_SEED), "seed")
    if n < 0:
        raise ConfigurationError(f"n_trials must be >= 0, got {n}")
    return n, seed


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_enumerate(args) -> int:
    config, _ = load_config(args.config)
    table = enumerate_joint(config)
    stats = conditional_stats(table)

    print(f"exact analysis of {args.config}")
    _print_exact_stats(stats)

    out = _out_dir(args)
    stats_path = out / "case_stats.json"
    joint_path = out / "joint_table.csv"
    _write_json(stats_path, _case_stats_json(stats))
    _write_csv(
        joint_path,
        ["switch_a", "switch_b", "outcome_a", "outcome_b", "cell", "probability"],
        _joint_rows(table),
    )
    print(f"wrote {stats_path} and {joint_path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config, doc = load_config(args.config)
    n, seed = _resolve_run_params(args, doc)
    plan = SimulationPlan(config, n_trials=n, seed=seed, n_streams=args.streams)
    tally = run_trials(plan)
    stats = estimate_stats(tally)

    print(f"simulated {n} trials (seed {seed}, {args.streams} stream(s))")
    _print_estimates(stats)

    out = _out_dir(args)
    tally_path = out / "tally.csv"
    stats_path = out / "mc_stats.json"
    manifest_path = out / "run_manifest.json"
    _write_csv(
        tally_path,
        ["switch_a", "switch_b", "outcome_a", "outcome_b", "cell", "count"],
        _tally_rows(tally),
    )
    _write_json(stats_path, _estimated_stats_json(stats))
    outputs = {"tally_csv": str(tally_path), "stats_json": str(stats_path)}
    _write_json(manifest_path, _manifest(args, doc, n, seed, args.streams, outputs).as_dict())
    print(f"wrote {tally_path}, {stats_path} and {manifest_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    config, doc = load_config(args.config)
    n, seed = _resolve_run_params(args, doc)

    exact = conditional_stats(enumerate_joint(config))
    tally = run_trials(SimulationPlan(config, n_trials=n, seed=seed, n_streams=args.streams))
    estimated = estimate_stats(tally)

    checks: list[tuple[str, bool, str]] = []

    report = compare(exact, estimated, threshold=args.threshold)
    zs = [abs(row.z) for row in report.rows if row.z is not None]
    worst = max(zs) if zs else 0.0
    checks.append(
        (
            "mc-vs-exact",
            report.all_pass,
            f"{len(report.rows)} fields, worst |z| = {worst:.2f}, threshold {args.threshold}",
        )
    )

    independence_json: Union[dict, None] = None
    try:
        independence = settings_independence_test(tally)
        checks.append(
            (
                "settings-independence",
                independence.p_value > INDEPENDENCE_ALPHA,
                f"chi2 = {independence.statistic:.3f}, dof {independence.degrees_of_freedom}, "
                f"p = {independence.p_value:.4g} (alpha {INDEPENDENCE_ALPHA})",
            )
        )
        independence_json = {
            "statistic": independence.statistic,
            "degrees_of_freedom": independence.degrees_of_freedom,
            "p_value": independence.p_value,
            "observed": {
                f"{sa.digit}{sb.digit}": count
                for (sa, sb), count in sorted(
                    independence.observed.items(), key=lambda kv: (kv[0][0].digit, kv[0][1].digit)
                )
            },
            "expected": independence.expected,
        }
    except NoCoincidencesError:
        checks.append(("settings-independence", False, "no coincidences in tally"))

    invariance = detector_invariance_check(config, INVARIANCE_GRID)
    grid_text = ", ".join(_frac_str(p) for p in INVARIANCE_GRID)
    checks.append(
        (
            "detector-invariance",
            invariance.passed,
            f"failure probabilities {{{grid_text}}}; conditionals "
            f"{'unchanged' if invariance.conditionals_invariant else 'CHANGED'}, "
            f"coincidence scaling {'exact' if invariance.coincidence_scaling_exact else 'BROKEN'}, "
            f"eta = eta_u * eta_f {'exact' if invariance.eta_multiplicative else 'BROKEN'}",
        )
    )

    for name, passed, detail in checks:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")

    matches = exact.p_same_case_a == TARGET_CASE_A and exact.p_same_case_b == TARGET_CASE_B
    gap_text = (
        "matches the target device statistics"
        if matches
        else "deviates from the target device statistics (the conundrum gap)"
    )
    print(
        f"NOTE mermin-target: case-a same-colour = {_frac_str(exact.p_same_case_a) or 'undefined'}, "
        f"case-b same-colour = {_frac_str(exact.p_same_case_b) or 'undefined'} "
        f"vs targets {_frac_str(TARGET_CASE_A)} and {_frac_str(TARGET_CASE_B)}; {gap_text}"
    )

    out = _out_dir(args)
    report_path = out / "verify_report.json"
    _write_json(
        report_path,
        {
            "config_path": str(args.config),
            "config": _jsonable(doc),
            "seed": seed,
            "n_trials": n,
            "n_streams": args.streams,
            "threshold": args.threshold,
            "checks": [
                {"name": name, "passed": passed, "detail": detail}
                for name, passed, detail in checks
            ],
            "comparison": [
                {
                    "name": row.name,
                    "exact": _frac_str(row.exact),
                    "estimate": row.estimate,
                    "se": row.se,
                    "z": row.z,
                    "passed": row.passed,
                    "note": row.note,
                }
                for row in report.rows
            ],
            "independence": independence_json,
            "mermin_target": {
                "case_a": _frac_str(exact.p_same_case_a),
                "case_b": _frac_str(exact.p_same_case_b),
                "target_case_a": _frac_str(TARGET_CASE_A),
                "target_case_b": _frac_str(TARGET_CASE_B),
                "matches": matches,
            },
        },
    )
    print(f"wrote {report_path}")

    return EXIT_OK if all(passed for _, passed, _ in checks) else EXIT_VERIFY


def _parse_grid(text: str) -> tuple[Fraction, ...]:
    try:
        values = tuple(Fraction(part.strip()) for part in text.split(",") if part.strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigurationError(f"grid: cannot parse {text!r}") from None
    if not values:
        raise ConfigurationError("grid: no values given")
    for value in values:
        if not 0 <= value < 1:
            raise ConfigurationError(f"grid: value {value} outside [0, 1)")
    return values


def cmd_scan(args) -> int:
    config, _ = load_config(args.config)
    grid = _parse_grid(args.grid)

    header = [
        "p",
        "eta_a",
        "eta_b",
        "eta_u",
        "p_same_case_a",
        "p_same_case_b",
        "mean_coincidence_rate",
    ]
    rows = []
    print(",".join(header))
    for p in grid:
        if args.parameter == "p_a":
            swept = config.with_failure_probabilities(p, config.detector_b.failure_probability)
        elif args.parameter == "p_b":
            swept = config.with_failure_probabilities(config.detector_a.failure_probability, p)
        else:
            swept = config.with_failure_probabilities(p, p)
        stats = conditional_stats(enumerate_joint(swept))
        mean_rate = sum(stats.coincidence_rate.values(), Fraction(0)) / len(
            stats.coincidence_rate
        )
        row = [
            _csv_num(p),
            _csv_num(stats.eta_a),
            _csv_num(stats.eta_b),
            _csv_num(stats.eta_u_a),
            _csv_num(stats.p_same_case_a),
            _csv_num(stats.p_same_case_b),
            _csv_num(mean_rate),
        ]
        rows.append(row)
        print(",".join(row))

    out = _out_dir(args)
    scan_path = out / "scan.csv"
    _write_csv(scan_path, header, rows)
    print(f"wrote {scan_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="merminsim",
        description=(
            "Exact analysis and Monte Carlo simulation of a three-setting, "
            "two-lamp correlation device with detector-failure and "
            "no-flash-instruction variants."
        ),
    )
    parser.add_argument("--version", action="version", version=f"merminsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", required=True, help="JSON experiment description")
        sp.add_argument("--out-dir", default=".", help="directory for report files")

    def add_run(sp):
        sp.add_argument("--n", type=int, default=None, help="number of trials")
        sp.add_argument("--seed", type=int, default=None, help="64-bit RNG seed")
        sp.add_argument("--streams", type=int, default=1, help="parallel stream count")

    sp = sub.add_parser("enumerate", help="exact statistics by enumeration")
    add_common(sp)
    sp.set_defaults(func=cmd_enumerate)

    sp = sub.add_parser("simulate", help="Monte Carlo run with estimates and CIs")
    add_common(sp)
    add_run(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="exact + simulation cross checks")
    add_common(sp)
    add_run(sp)
    sp.add_argument(
        "--threshold", type=float, default=5.0, help="|z| pass threshold for field comparisons"
    )
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("scan", help="exact statistics over a failure-probability grid")
    add_common(sp)
    sp.add_argument(
        "--parameter",
        required=True,
        choices=("p_a", "p_b", "p_both"),
        help="which detector failure probability to sweep",
    )
    sp.add_argument(
        "--grid",
        required=True,
        help="comma-separated probabilities in [0, 1), e.g. 0,0.25,0.5 or 0,1/4,1/2",
    )
    sp.set_defaults(func=cmd_scan)

    return parser


def main(argv: Union[Sequence[str], None] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DegenerateConditioningError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

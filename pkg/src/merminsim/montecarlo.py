"""Seeded Monte Carlo trial engine with deterministic parallel reduction.

Randomness is counter based: draw j of trial i is a 64-bit avalanche hash
of (seed, 8 * i + j), the splitmix64 output function applied to a strided
counter. Trial i therefore owns its randomness regardless of scheduling,
so any partition of the trial range into streams produces bitwise
identical tallies, and tallies merge as a commutative monoid.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Union

import numpy as np

from .model import (
    COLORS,
    CellKey,
    ExperimentConfig,
    FAILURE,
    N_CELLS,
    Outcome,
    SETTINGS,
    Setting,
    cell_at,
    cell_index,
    decode_cell,
    outcome_index,
)

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Counter stride per trial; lanes 0-4 are consumed (state, A-failure,
# A-setting, B-failure, B-setting), the rest are reserved headroom.
_LANES = 8
_MAX_TRIALS = 1 << 60

_CHUNK = 1 << 19

_I64_MAX = (1 << 63) - 1

# Cells pairing a failed switch with a flash can never be produced.
_INVALID_CELLS = np.array(
    [
        (swa is FAILURE and oa.is_flash) or (swb is FAILURE and ob.is_flash)
        for (swa, swb, oa, ob) in (cell_at(i) for i in range(N_CELLS))
    ]
)


def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorized over uint64."""
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _uniforms(seed: int, counters: np.ndarray) -> np.ndarray:
    """IEEE doubles in [0, 1), one per counter, as a pure function of
    (seed, counter)."""
    state = (counters + np.uint64(1)) * np.uint64(_GAMMA) + np.uint64(seed)
    bits = _mix64(state)
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0**-53)


@dataclass(frozen=True, eq=False)
class TallyCounts:
    """Trial counts per (switch_a, switch_b, outcome_a, outcome_b) cell.

    counts is a read-only int64 vector over the 144-cell codec of
    model.cell_index; counts sum to n_trials and no failure-with-flash
    cell is ever nonzero. Tallies form a commutative monoid under merge
    with the empty tally as identity.
    """

    counts: np.ndarray
    n_trials: int

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64).copy()
        if counts.shape != (N_CELLS,):
            raise ValueError(f"counts must have shape ({N_CELLS},)")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        if int(counts.sum()) != self.n_trials:
            raise ValueError("counts do not sum to n_trials")
        if counts[_INVALID_CELLS].any():
            raise ValueError("a failed switch cannot coincide with a flash")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TallyCounts):
            return NotImplemented
        return self.n_trials == other.n_trials and bool(
            np.array_equal(self.counts, other.counts)
        )

    @classmethod
    def empty(cls) -> "TallyCounts":
        return cls(np.zeros(N_CELLS, dtype=np.int64), 0)

    @classmethod
    def from_mapping(cls, counts: Mapping[Union[CellKey, str], int]) -> "TallyCounts":
        arr = np.zeros(N_CELLS, dtype=np.int64)
        for key, value in counts.items():
            cell = decode_cell(key) if isinstance(key, str) else key
            arr[cell_index(*cell)] += value
        return cls(arr, int(arr.sum()))

    def count(self, swa, swb, oa, ob) -> int:
        return int(self.counts[cell_index(swa, swb, oa, ob)])

    def as_mapping(self) -> dict[CellKey, int]:
        return {cell_at(i): int(self.counts[i]) for i in range(N_CELLS)}


def merge(t1: TallyCounts, t2: TallyCounts) -> TallyCounts:
    """Entrywise sum; associative and commutative, identity = empty tally."""
    if t1.n_trials > _I64_MAX - t2.n_trials:
        raise OverflowError("merged tally would exceed 64-bit counts")
    return TallyCounts(t1.counts + t2.counts, t1.n_trials + t2.n_trials)


@dataclass(frozen=True)
class SimulationPlan:
    """A fully reproducible run: results are a pure function of
    (config, n_trials, seed), independent of n_streams and scheduling."""

    config: ExperimentConfig
    n_trials: int
    seed: int
    n_streams: int = 1

    def __post_init__(self) -> None:
        if self.n_trials < 0:
            raise ValueError("n_trials must be >= 0")
        if self.n_trials >= _MAX_TRIALS:
            raise ValueError(f"n_trials must be below 2^60, got {self.n_trials}")
        if self.n_streams < 1:
            raise ValueError("n_streams must be >= 1")


def _sampler_tables(config: ExperimentConfig):
    """Cumulative state thresholds and per-switch outcome lookup tables.

    Thresholds come from exact cumulative fractions rendered to float64,
    so the last threshold is exactly 1.0.
    """
    entries = config.source.renormalized()
    acc = Fraction(0)
    cum = []
    for _, weight in entries:
        acc += weight
        cum.append(float(acc))
    assert cum[-1] == 1.0
    cum_arr = np.array(cum, dtype=np.float64)

    n_code = outcome_index(Outcome.NO_FLASH)
    table_a = np.full((len(entries), 4), n_code, dtype=np.int64)
    table_b = np.full((len(entries), 4), n_code, dtype=np.int64)
    for row, (state, _) in enumerate(entries):
        for s in SETTINGS:
            table_a[row, s.value] = outcome_index(state.alice.outcome_at(s))
            table_b[row, s.value] = outcome_index(state.bob.outcome_at(s))

    p_a = float(config.detector_a.failure_probability)
    p_b = float(config.detector_b.failure_probability)
    return cum_arr, table_a, table_b, p_a, p_b


def _run_range(lo: int, hi: int, seed: int, tables) -> np.ndarray:
    cum, table_a, table_b, p_a, p_b = tables
    counts = np.zeros(N_CELLS, dtype=np.int64)
    for start in range(lo, hi, _CHUNK):
        stop = min(start + _CHUNK, hi)
        trial = np.arange(start, stop, dtype=np.uint64)
        base = trial * np.uint64(_LANES)

        u_state = _uniforms(seed, base)
        u_fail_a = _uniforms(seed, base + np.uint64(1))
        u_set_a = _uniforms(seed, base + np.uint64(2))
        u_fail_b = _uniforms(seed, base + np.uint64(3))
        u_set_b = _uniforms(seed, base + np.uint64(4))

        state = np.searchsorted(cum, u_state, side="right")
        sw_a = np.where(u_fail_a < p_a, 0, 1 + (u_set_a * 3.0).astype(np.int64))
        sw_b = np.where(u_fail_b < p_b, 0, 1 + (u_set_b * 3.0).astype(np.int64))
        out_a = table_a[state, sw_a]
        out_b = table_b[state, sw_b]

        cell = ((sw_a * 4 + sw_b) * 3 + out_a) * 3 + out_b
        counts += np.bincount(cell, minlength=N_CELLS)
    return counts


def _worker_cap() -> int:
    raw = os.environ.get("MERMIN_SIM_THREADS")
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ValueError(f"MERMIN_SIM_THREADS must be an integer, got {raw!r}")
        if cap >= 1:
            return cap
    return os.cpu_count() or 1


def run_trials(plan: SimulationPlan) -> TallyCounts:
    """Simulate plan.n_trials independent trials into a tally.

    Per trial: a pair state is drawn by weight, then each side
    independently draws failure (probability p) before a uniform setting,
    and the outcome is the instruction lookup with failure forcing
    NoFlash. The trial range is split into plan.n_streams blocks whose
    partial tallies are merged; the result is bitwise identical for any
    stream count because every trial owns its counters.
    """
    plan.config.validate()
    if plan.n_trials == 0:
        return TallyCounts.empty()
    tables = _sampler_tables(plan.config)
    seed = plan.seed & _MASK64

    bounds = [plan.n_trials * s // plan.n_streams for s in range(plan.n_streams + 1)]
    blocks = [
        (lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo
    ]
    workers = min(len(blocks), _worker_cap())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(
                pool.map(lambda block: _run_range(*block, seed, tables), blocks)
            )
    else:
        partials = [_run_range(lo, hi, seed, tables) for lo, hi in blocks]

    counts = np.zeros(N_CELLS, dtype=np.int64)
    for partial in partials:
        counts += partial
    return TallyCounts(counts, plan.n_trials)


# ---------------------------------------------------------------------------
# Frequency estimates with sampling uncertainty.
# ---------------------------------------------------------------------------

# Two-sided 95% normal quantile used by the Wilson score interval.
Z_95 = 1.959963984540054


def wilson_interval(
    successes: int, trials: int, z: float = Z_95
) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Stays inside [0, 1] and behaves at the extremes: k = 0 gives a lower
    bound of exactly 0 and k = n an upper bound of exactly 1.
    """
    if trials <= 0:
        raise ValueError("wilson_interval needs at least one trial")
    p_hat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p_hat + z2 / (2.0 * trials)) / denom
    margin = (z / denom) * math.sqrt(
        p_hat * (1.0 - p_hat) / trials + z2 / (4.0 * trials * trials)
    )
    # The bounds are exactly 0 / 1 at the extremes; keep them free of
    # float round-off there.
    low = 0.0 if successes == 0 else max(0.0, center - margin)
    high = 1.0 if successes == trials else min(1.0, center + margin)
    return (low, high)


@dataclass(frozen=True)
class Estimate:
    """A relative frequency with its standard error and Wilson 95% CI.

    value is None when the conditioning count is zero (undefined, not 0).
    """

    value: Union[float, None]
    se: Union[float, None]
    ci_low: Union[float, None]
    ci_high: Union[float, None]
    successes: int
    trials: int

    @property
    def defined(self) -> bool:
        return self.value is not None


def _undefined(successes: int = 0) -> Estimate:
    return Estimate(None, None, None, None, successes, 0)


def _proportion(successes: int, trials: int, scale: float = 1.0) -> Estimate:
    if trials == 0:
        return _undefined(successes)
    p_hat = successes / trials
    se = scale * math.sqrt(p_hat * (1.0 - p_hat) / trials)
    lo, hi = wilson_interval(successes, trials)
    return Estimate(
        value=scale * p_hat,
        se=se,
        ci_low=min(1.0, scale * lo),
        ci_high=min(1.0, scale * hi),
        successes=successes,
        trials=trials,
    )


@dataclass(frozen=True)
class EstimatedCaseStats:
    """CaseStats estimated from a tally, field for field, with errors."""

    p_same_case_a: Estimate
    p_same_case_b: Estimate
    eta_a: Estimate
    eta_b: Estimate
    eta_u_a: Estimate
    eta_u_b: Estimate
    eta_f_a: Estimate
    eta_f_b: Estimate
    coincidence_rate: Mapping[tuple[Setting, Setting], Estimate]
    n_trials: int


def estimate_stats(tally: TallyCounts) -> EstimatedCaseStats:
    """Relative-frequency estimates of every CaseStats field.

    Conditionals are computed over double-flash events only; a field whose
    conditioning count is zero comes back undefined. coincidence_rate
    estimates use the known 1/9 aiming probability as denominator (the
    scaled estimator 9 k / n), matching the exact definition.
    """
    n = tally.n_trials
    grid = tally.counts.reshape(4, 4, 3, 3)
    color_hi = len(COLORS)  # colours occupy outcome codes 0..1

    flash_a = int(grid[:, :, :color_hi, :].sum())
    flash_b = int(grid[:, :, :, :color_hi].sum())
    ok_a = n - int(grid[0, :, :, :].sum())
    ok_b = n - int(grid[:, 0, :, :].sum())

    same_a = 0
    both_a = 0
    for s in SETTINGS:
        d = s.value
        both_a += int(grid[d, d, :color_hi, :color_hi].sum())
        same_a += int(grid[d, d, 0, 0] + grid[d, d, 1, 1])

    same_b = 0
    both_b = 0
    coincidence: dict[tuple[Setting, Setting], Estimate] = {}
    for sa in SETTINGS:
        for sb in SETTINGS:
            pair_both = int(grid[sa.value, sb.value, :color_hi, :color_hi].sum())
            coincidence[(sa, sb)] = _proportion(pair_both, n, scale=9.0)
            if sa is not sb:
                both_b += pair_both
                same_b += int(
                    grid[sa.value, sb.value, 0, 0] + grid[sa.value, sb.value, 1, 1]
                )

    return EstimatedCaseStats(
        p_same_case_a=_proportion(same_a, both_a),
        p_same_case_b=_proportion(same_b, both_b),
        eta_a=_proportion(flash_a, n),
        eta_b=_proportion(flash_b, n),
        eta_u_a=_proportion(flash_a, ok_a),
        eta_u_b=_proportion(flash_b, ok_b),
        eta_f_a=_proportion(ok_a, n),
        eta_f_b=_proportion(ok_b, n),
        coincidence_rate=coincidence,
        n_trials=n,
    )

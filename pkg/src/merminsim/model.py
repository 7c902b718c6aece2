"""Domain model for a three-setting, two-lamp correlation device.

A source fires particle pairs at two unconnected detectors. Each detector
has a switch with three measurement positions and two lamps (green and
red). Every particle carries a deterministic instruction set fixing the
lamp for each switch position; an instruction may also be "do not flash".
Detector-side unreliability is kept separate from the particle: it is a
fourth switch position (digit 0) that yields no flash whatever arrives,
so the same instruction-set types serve every model variant.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Iterator, Union


class ConfigurationError(ValueError):
    """An experiment description is invalid (source, detector, or name)."""


class DistributionError(ConfigurationError):
    """A source distribution violates one of its invariants."""


class EmptyDistributionError(DistributionError):
    pass


class NegativeWeightError(DistributionError):
    pass


class WeightSumMismatchError(DistributionError):
    pass


class DuplicateStateError(DistributionError):
    pass


# Absolute slack allowed on the weight sum of a source distribution. The
# exact analyzer renormalizes by the exact rational sum, so tolerated
# decimal round-off never leaks into results.
WEIGHT_SUM_TOLERANCE = Fraction(1, 10**12)


class Outcome(Enum):
    """Lamp behaviour of one detector on one trial. NoFlash is a real
    outcome, never a missing value."""

    GREEN = "G"
    RED = "R"
    NO_FLASH = "N"

    @property
    def letter(self) -> str:
        return self.value

    @property
    def is_flash(self) -> bool:
        return self is not Outcome.NO_FLASH

    @classmethod
    def from_letter(cls, letter: str) -> "Outcome":
        try:
            return cls(letter)
        except ValueError:
            raise ConfigurationError(
                f"unknown outcome letter {letter!r} (expected G, R or N)"
            ) from None


OUTCOMES = (Outcome.GREEN, Outcome.RED, Outcome.NO_FLASH)
COLORS = (Outcome.GREEN, Outcome.RED)


class Setting(Enum):
    """One of the three measurement positions of a detector switch.

    The failure position 0 is deliberately not a Setting; see FAILURE.
    """

    S1 = 1
    S2 = 2
    S3 = 3

    @property
    def digit(self) -> int:
        return self.value


SETTINGS = (Setting.S1, Setting.S2, Setting.S3)


class _FailurePosition(Enum):
    """Singleton marker for switch position 0 (apparatus failed to select
    a measurement setting; the detector cannot flash)."""

    FAILURE = 0


FAILURE = _FailurePosition.FAILURE

SwitchPosition = Union[Setting, _FailurePosition]

SWITCH_POSITIONS: tuple[SwitchPosition, ...] = (FAILURE,) + SETTINGS


def switch_digit(sw: SwitchPosition) -> int:
    return 0 if sw is FAILURE else sw.value


def switch_from_digit(digit: int) -> SwitchPosition:
    if digit == 0:
        return FAILURE
    try:
        return Setting(digit)
    except ValueError:
        raise ConfigurationError(f"unknown switch digit {digit!r}") from None


class SetClass(Enum):
    """Classification of an instruction set by its outcome pattern."""

    HOMOGENEOUS = "homogeneous"
    TWO_ONE = "two_one"
    WITH_NO_FLASH = "with_no_flash"


@dataclass(frozen=True)
class InstructionSet:
    """Per-particle instructions: one outcome for each of the three settings.

    The canonical text form is three letters over {G,R,N} ordered by
    setting, e.g. "GGR" flashes green at settings 1 and 2, red at 3.
    """

    outcomes: tuple[Outcome, Outcome, Outcome]

    def __post_init__(self) -> None:
        outcomes = tuple(self.outcomes)
        if len(outcomes) != 3 or not all(isinstance(o, Outcome) for o in outcomes):
            raise ConfigurationError(
                f"instruction set needs exactly three outcomes, got {self.outcomes!r}"
            )
        object.__setattr__(self, "outcomes", outcomes)

    @classmethod
    def parse(cls, text: str) -> "InstructionSet":
        if len(text) != 3:
            raise ConfigurationError(
                f"instruction set text must be 3 letters, got {text!r}"
            )
        return cls(tuple(Outcome.from_letter(ch) for ch in text))

    def outcome_at(self, setting: Setting) -> Outcome:
        return self.outcomes[setting.value - 1]

    def classify(self) -> SetClass:
        if any(o is Outcome.NO_FLASH for o in self.outcomes):
            return SetClass.WITH_NO_FLASH
        if self.outcomes[0] is self.outcomes[1] is self.outcomes[2]:
            return SetClass.HOMOGENEOUS
        return SetClass.TWO_ONE

    def encode(self) -> str:
        return "".join(o.letter for o in self.outcomes)

    def __str__(self) -> str:
        return self.encode()


def outcome_for(s: InstructionSet, k: Setting) -> Outcome:
    """Outcome dictated by instruction set s at switch position k."""
    return s.outcome_at(k)


def classify(s: InstructionSet) -> SetClass:
    """Homogeneous, two-one, or contains a no-flash instruction."""
    return s.classify()


@dataclass(frozen=True)
class PairState:
    """Hidden state of one emitted pair: the two instruction sets.

    Text form "XXX-YYY" puts detector A's particle first, e.g. "GNR-GGR".
    """

    alice: InstructionSet
    bob: InstructionSet

    @classmethod
    def parse(cls, text: str) -> "PairState":
        parts = text.split("-")
        if len(parts) != 2:
            raise ConfigurationError(
                f"pair state text must look like XXX-YYY, got {text!r}"
            )
        return cls(InstructionSet.parse(parts[0]), InstructionSet.parse(parts[1]))

    def swapped(self) -> "PairState":
        return PairState(self.bob, self.alice)

    def encode(self) -> str:
        return f"{self.alice}-{self.bob}"

    def __str__(self) -> str:
        return self.encode()


WeightLike = Union[Fraction, int, float, str]


def as_fraction(value: WeightLike) -> Fraction:
    """Coerce a probability-like value to an exact Fraction.

    Floats go through their shortest decimal representation, so 0.1 means
    exactly 1/10. Strings accept both "0.25" and "num/den" forms.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ConfigurationError(f"cannot interpret {value!r} as a probability")
    if isinstance(value, int):
        return Fraction(value)
    try:
        if isinstance(value, float):
            return Fraction(repr(value))
        if isinstance(value, str):
            return Fraction(value)
    except (ValueError, ZeroDivisionError):
        raise ConfigurationError(f"cannot parse {value!r} as a rational") from None
    raise ConfigurationError(f"cannot interpret {value!r} as a rational")


@dataclass(frozen=True)
class SourceDistribution:
    """Weighted list of pair states emitted by the source."""

    entries: tuple[tuple[PairState, Fraction], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(tuple(e) for e in self.entries))

    @classmethod
    def from_entries(
        cls, entries: Iterable[tuple[Union[PairState, str], WeightLike]]
    ) -> "SourceDistribution":
        built = []
        for state, weight in entries:
            if isinstance(state, str):
                state = PairState.parse(state)
            built.append((state, as_fraction(weight)))
        return cls(tuple(built))

    def validate(self) -> None:
        """Raise a DistributionError naming the offending entry, if any."""
        if not self.entries:
            raise EmptyDistributionError("source distribution has no entries")
        seen: set[PairState] = set()
        total = Fraction(0)
        for index, (state, weight) in enumerate(self.entries):
            if weight < 0:
                raise NegativeWeightError(
                    f"entry {index} ({state}) has negative weight {weight}"
                )
            if state in seen:
                raise DuplicateStateError(f"entry {index} duplicates state {state}")
            seen.add(state)
            total += weight
        if abs(total - 1) > WEIGHT_SUM_TOLERANCE:
            raise WeightSumMismatchError(
                f"weights sum to {total} (~{float(total):.12g}), expected 1"
            )

    def total_weight(self) -> Fraction:
        return sum((w for _, w in self.entries), Fraction(0))

    def renormalized(self) -> tuple[tuple[PairState, Fraction], ...]:
        """Entries with weights divided by the exact total, summing to 1."""
        total = self.total_weight()
        if total == 0:
            raise WeightSumMismatchError("weights sum to 0; cannot renormalize")
        return tuple((state, weight / total) for state, weight in self.entries)

    def swapped(self) -> "SourceDistribution":
        return SourceDistribution(
            tuple((state.swapped(), w) for state, w in self.entries)
        )


@dataclass(frozen=True)
class DetectorModel:
    """Apparatus-side unreliability of one detector.

    With probability failure_probability the switch lands on position 0
    and the detector cannot flash; otherwise each of the three settings
    is selected with probability (1 - p) / 3.
    """

    failure_probability: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        p = as_fraction(self.failure_probability)
        if not 0 <= p <= 1:
            raise ConfigurationError(f"failure probability {p} outside [0, 1]")
        object.__setattr__(self, "failure_probability", p)

    @property
    def fair_efficiency(self) -> Fraction:
        return 1 - self.failure_probability


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines the statistics of one experiment.

    settings_law is provenance only: the three real settings are always
    independently uniform per detector, which makes the nine setting
    pairs equiprobable when both failure probabilities are zero.
    """

    source: SourceDistribution
    detector_a: DetectorModel = DetectorModel()
    detector_b: DetectorModel = DetectorModel()
    settings_law: str = "uniform"

    def validate(self) -> None:
        self.source.validate()

    def with_failure_probabilities(
        self, p_a: WeightLike, p_b: WeightLike
    ) -> "ExperimentConfig":
        return ExperimentConfig(
            source=self.source,
            detector_a=DetectorModel(as_fraction(p_a)),
            detector_b=DetectorModel(as_fraction(p_b)),
            settings_law=self.settings_law,
        )


@dataclass(frozen=True)
class TrialRecord:
    """One trial: realized switch positions and lamp outcomes, e.g. 21GR.

    A side whose switch landed on position 0 necessarily shows NoFlash.
    """

    switch_a: SwitchPosition
    switch_b: SwitchPosition
    outcome_a: Outcome
    outcome_b: Outcome

    def __post_init__(self) -> None:
        if self.switch_a is FAILURE and self.outcome_a is not Outcome.NO_FLASH:
            raise ValueError("detector A failed but reports a flash")
        if self.switch_b is FAILURE and self.outcome_b is not Outcome.NO_FLASH:
            raise ValueError("detector B failed but reports a flash")

    def encode(self) -> str:
        return encode_cell(self.switch_a, self.switch_b, self.outcome_a, self.outcome_b)

    def __str__(self) -> str:
        return self.encode()


def _sets(*texts: str) -> tuple[InstructionSet, ...]:
    return tuple(InstructionSet.parse(t) for t in texts)


def _pairs(*texts: str) -> tuple[PairState, ...]:
    return tuple(PairState.parse(t) for t in texts)


# The six no-N sets where one colour appears once and the other twice.
TWO_ONE_SETS = _sets("RRG", "RGR", "RGG", "GRR", "GRG", "GGR")

# All eight instruction sets without a no-flash entry.
ALL_EIGHT_SETS = _sets("RRR", "RRG", "RGR", "RGG", "GRR", "GRG", "GGR", "GGG")

# The twelve-state roster that keeps case-a correlation perfect while
# bringing the detected case-b same-colour rate down to 1/4: each two-one
# set is paired with a copy whose doubled colour is replaced by N on one
# side, the last six rows being the first six after particle exchange.
TABLE1_PAIRS = _pairs(
    "NRG-GRG",
    "NGR-RGR",
    "RNG-RRG",
    "GNR-GGR",
    "RGN-RGG",
    "GRN-GRR",
    "GRG-NRG",
    "RGR-NGR",
    "RRG-RNG",
    "GGR-GNR",
    "RGG-RGN",
    "GRR-GRN",
)

ALL_INSTRUCTION_SETS = tuple(
    InstructionSet(combo) for combo in itertools.product(OUTCOMES, repeat=3)
)

BUILTIN_NAMES = ("table1_uniform", "two_one_uniform", "all_eight_uniform", "single")


def builtin_distribution(
    name: str, state: Union[PairState, str, None] = None
) -> SourceDistribution:
    """One of the named source distributions.

    "single" takes the pair state as a second argument or inline as
    "single:XXX-YYY"; the other builtins take no argument.
    """
    if name.startswith("single:") and state is None:
        name, state = "single", name.split(":", 1)[1]
    if name == "table1_uniform":
        weight = Fraction(1, 12)
        return SourceDistribution(tuple((p, weight) for p in TABLE1_PAIRS))
    if name == "two_one_uniform":
        weight = Fraction(1, 6)
        return SourceDistribution(
            tuple((PairState(s, s), weight) for s in TWO_ONE_SETS)
        )
    if name == "all_eight_uniform":
        weight = Fraction(1, 8)
        return SourceDistribution(
            tuple((PairState(s, s), weight) for s in ALL_EIGHT_SETS)
        )
    if name == "single":
        if state is None:
            raise ConfigurationError('builtin "single" requires a pair state')
        if isinstance(state, str):
            state = PairState.parse(state)
        return SourceDistribution(((state, Fraction(1)),))
    raise ConfigurationError(
        f"unknown builtin distribution {name!r} (expected one of {', '.join(BUILTIN_NAMES)})"
    )


def validate(distribution: SourceDistribution) -> None:
    """Module-level alias for SourceDistribution.validate."""
    distribution.validate()


# ---------------------------------------------------------------------------
# Cell codec shared by the exact analyzer, the tally engine and the reports.
# A cell is (switch_a, switch_b, outcome_a, outcome_b); its text form is the
# digit-digit-letter-letter quadruple like "21GR", with digit 0 for failure.
# ---------------------------------------------------------------------------

CellKey = tuple[SwitchPosition, SwitchPosition, Outcome, Outcome]

N_CELLS = 4 * 4 * 3 * 3

_OUTCOME_INDEX = {o: i for i, o in enumerate(OUTCOMES)}


def outcome_index(o: Outcome) -> int:
    return _OUTCOME_INDEX[o]


def cell_index(
    swa: SwitchPosition, swb: SwitchPosition, oa: Outcome, ob: Outcome
) -> int:
    return ((switch_digit(swa) * 4 + switch_digit(swb)) * 3 + outcome_index(oa)) * 3 + outcome_index(ob)


def cell_at(index: int) -> CellKey:
    if not 0 <= index < N_CELLS:
        raise IndexError(f"cell index {index} out of range")
    index, ob = divmod(index, 3)
    index, oa = divmod(index, 3)
    ia, ib = divmod(index, 4)
    return (
        switch_from_digit(ia),
        switch_from_digit(ib),
        OUTCOMES[oa],
        OUTCOMES[ob],
    )


def iter_cells() -> Iterator[CellKey]:
    """All 144 cells in index order."""
    for index in range(N_CELLS):
        yield cell_at(index)


def encode_cell(
    swa: SwitchPosition, swb: SwitchPosition, oa: Outcome, ob: Outcome
) -> str:
    return f"{switch_digit(swa)}{switch_digit(swb)}{oa.letter}{ob.letter}"


def decode_cell(text: str) -> CellKey:
    if len(text) != 4:
        raise ConfigurationError(f"cell text must be 4 characters, got {text!r}")
    return (
        switch_from_digit(int(text[0])),
        switch_from_digit(int(text[1])),
        Outcome.from_letter(text[2]),
        Outcome.from_letter(text[3]),
    )

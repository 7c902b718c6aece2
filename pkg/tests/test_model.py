import itertools
from fractions import Fraction

import pytest

from merminsim.model import (
    ALL_EIGHT_SETS,
    ALL_INSTRUCTION_SETS,
    ConfigurationError,
    DetectorModel,
    DuplicateStateError,
    EmptyDistributionError,
    FAILURE,
    InstructionSet,
    N_CELLS,
    NegativeWeightError,
    Outcome,
    PairState,
    SETTINGS,
    SetClass,
    Setting,
    SourceDistribution,
    TABLE1_PAIRS,
    TWO_ONE_SETS,
    TrialRecord,
    WeightSumMismatchError,
    as_fraction,
    builtin_distribution,
    cell_at,
    cell_index,
    classify,
    decode_cell,
    encode_cell,
    iter_cells,
    outcome_for,
    validate,
)


GGR = InstructionSet.parse("GGR")
GNR = InstructionSet.parse("GNR")


class TestOutcomeFor:
    def test_ggr_setting_3_is_red(self):
        assert outcome_for(GGR, Setting.S3) is Outcome.RED

    def test_homogeneous_rrr(self):
        assert outcome_for(InstructionSet.parse("RRR"), Setting.S2) is Outcome.RED

    def test_gnr_setting_2_is_noflash(self):
        assert outcome_for(GNR, Setting.S2) is Outcome.NO_FLASH

    def test_flash_only_sets_never_yield_noflash(self):
        for s in ALL_EIGHT_SETS:
            for k in SETTINGS:
                assert outcome_for(s, k).is_flash


class TestClassify:
    def test_examples(self):
        assert classify(GGR) is SetClass.TWO_ONE
        assert classify(InstructionSet.parse("GGG")) is SetClass.HOMOGENEOUS
        assert classify(GNR) is SetClass.WITH_NO_FLASH

    def test_partition_of_all_27_sets(self):
        # Oracle: enumerate the 3^3 outcome maps directly and count patterns.
        counts = {SetClass.HOMOGENEOUS: 0, SetClass.TWO_ONE: 0, SetClass.WITH_NO_FLASH: 0}
        for letters in itertools.product("GRN", repeat=3):
            if "N" in letters:
                expected = SetClass.WITH_NO_FLASH
            elif letters[0] == letters[1] == letters[2]:
                expected = SetClass.HOMOGENEOUS
            else:
                expected = SetClass.TWO_ONE
            got = classify(InstructionSet.parse("".join(letters)))
            assert got is expected
            counts[got] += 1
        assert counts == {
            SetClass.HOMOGENEOUS: 2,
            SetClass.TWO_ONE: 6,
            SetClass.WITH_NO_FLASH: 19,
        }
        assert len(ALL_INSTRUCTION_SETS) == 27


class TestBuiltinDistributions:
    def test_table1_uniform(self):
        d = builtin_distribution("table1_uniform")
        assert len(d.entries) == 12
        assert all(w == Fraction(1, 12) for _, w in d.entries)
        assert d.entries[0][0] == PairState.parse("NRG-GRG")
        d.validate()

    def test_two_one_uniform(self):
        d = builtin_distribution("two_one_uniform")
        assert len(d.entries) == 6
        assert all(w == Fraction(1, 6) for _, w in d.entries)
        assert all(state.alice == state.bob for state, _ in d.entries)
        assert tuple(state.alice for state, _ in d.entries) == TWO_ONE_SETS

    def test_all_eight_uniform(self):
        d = builtin_distribution("all_eight_uniform")
        assert len(d.entries) == 8
        assert d.total_weight() == 1

    def test_single(self):
        d = builtin_distribution("single", "GNR-GGR")
        assert d.entries == ((PairState.parse("GNR-GGR"), Fraction(1)),)
        inline = builtin_distribution("single:GNR-GGR")
        assert inline == d

    def test_single_without_state_rejected(self):
        with pytest.raises(ConfigurationError):
            builtin_distribution("single")

    def test_unknown_name_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown builtin"):
            builtin_distribution("uniform_table")


class TestValidate:
    def test_builtins_validate(self):
        for name in ("table1_uniform", "two_one_uniform", "all_eight_uniform"):
            validate(builtin_distribution(name))

    def test_weight_sum_mismatch_names_total(self):
        d = SourceDistribution.from_entries([("GGR-GGR", "1/2")])
        with pytest.raises(WeightSumMismatchError, match="1/2"):
            d.validate()

    def test_negative_weight_names_entry(self):
        d = SourceDistribution.from_entries(
            [("GGR-GGR", Fraction(11, 10)), ("RRR-RRR", Fraction(-1, 10))]
        )
        with pytest.raises(NegativeWeightError, match="entry 1 .RRR-RRR."):
            d.validate()

    def test_empty_distribution(self):
        with pytest.raises(EmptyDistributionError):
            SourceDistribution(()).validate()

    def test_duplicate_state_names_entry(self):
        d = SourceDistribution.from_entries(
            [("GGR-GGR", "1/2"), ("GGR-GGR", "1/2")]
        )
        with pytest.raises(DuplicateStateError, match="GGR-GGR"):
            d.validate()

    def test_tolerates_tiny_decimal_slack(self):
        weights = [Fraction("0.333333333333333")] * 3
        d = SourceDistribution.from_entries(
            [(f"{t}-{t}", w) for t, w in zip(("RRG", "RGR", "RGG"), weights)]
        )
        d.validate()
        total = sum(w for _, w in d.renormalized())
        assert total == 1


class TestTable1Balance:
    def test_columns_balanced_per_side(self):
        # Each switch column sees N exactly twice and G/R five times each,
        # identically for both particles of the roster.
        for side in ("alice", "bob"):
            for setting in SETTINGS:
                letters = [
                    getattr(pair, side).outcome_at(setting).letter
                    for pair in TABLE1_PAIRS
                ]
                assert letters.count("N") == 2
                assert letters.count("G") == 5
                assert letters.count("R") == 5

    def test_last_six_rows_are_first_six_swapped(self):
        assert TABLE1_PAIRS[6:] == tuple(p.swapped() for p in TABLE1_PAIRS[:6])


class TestEncodings:
    def test_instruction_set_round_trip(self):
        for letters in itertools.product("GRN", repeat=3):
            text = "".join(letters)
            assert InstructionSet.parse(text).encode() == text

    def test_pair_state_round_trip(self):
        assert str(PairState.parse("GNR-GGR")) == "GNR-GGR"

    def test_bad_texts_rejected(self):
        with pytest.raises(ConfigurationError):
            InstructionSet.parse("GG")
        with pytest.raises(ConfigurationError):
            InstructionSet.parse("GGX")
        with pytest.raises(ConfigurationError):
            PairState.parse("GGRGGR")

    def test_trial_record_encoding(self):
        rec = TrialRecord(Setting.S2, Setting.S1, Outcome.GREEN, Outcome.RED)
        assert rec.encode() == "21GR"
        failed = TrialRecord(FAILURE, Setting.S1, Outcome.NO_FLASH, Outcome.GREEN)
        assert failed.encode() == "01NG"

    def test_trial_record_failure_forces_noflash(self):
        with pytest.raises(ValueError):
            TrialRecord(FAILURE, Setting.S1, Outcome.GREEN, Outcome.GREEN)
        with pytest.raises(ValueError):
            TrialRecord(Setting.S1, FAILURE, Outcome.GREEN, Outcome.GREEN)

    def test_cell_codec_round_trip(self):
        seen = set()
        for index, key in enumerate(iter_cells()):
            assert cell_at(index) == key
            assert cell_index(*key) == index
            text = encode_cell(*key)
            assert decode_cell(text) == key
            seen.add(text)
        assert len(seen) == N_CELLS


class TestFractions:
    def test_string_forms(self):
        assert as_fraction("1/3") == Fraction(1, 3)
        assert as_fraction("0.25") == Fraction(1, 4)

    def test_float_uses_decimal_reading(self):
        assert as_fraction(0.1) == Fraction(1, 10)

    def test_rejects_garbage(self):
        with pytest.raises(ConfigurationError):
            as_fraction("one third")
        with pytest.raises(ConfigurationError):
            as_fraction(float("nan"))


class TestDetectorAndConfig:
    def test_failure_probability_bounds(self):
        DetectorModel(Fraction(1))
        DetectorModel(0)
        with pytest.raises(ConfigurationError):
            DetectorModel(Fraction(3, 2))
        with pytest.raises(ConfigurationError):
            DetectorModel(-0.1)

    def test_fair_efficiency(self):
        assert DetectorModel(Fraction(1, 5)).fair_efficiency == Fraction(4, 5)

    def test_with_failure_probabilities(self):
        from merminsim.model import ExperimentConfig

        cfg = ExperimentConfig(source=builtin_distribution("table1_uniform"))
        swept = cfg.with_failure_probabilities("1/5", 0.5)
        assert swept.detector_a.failure_probability == Fraction(1, 5)
        assert swept.detector_b.failure_probability == Fraction(1, 2)
        assert swept.source is cfg.source

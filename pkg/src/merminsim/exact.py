"""Exact statistics by full enumeration, in rational arithmetic.

Every quantity produced here is a Fraction obtained by summing finitely
many products of exact weights and switch probabilities, so equalities
like "the case-b same-colour rate is exactly 1/4" are decidable with no
tolerance. This module is the oracle the Monte Carlo engine is validated
against.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Mapping, Sequence, Union

from .model import (
    ALL_EIGHT_SETS,
    COLORS,
    CellKey,
    ConfigurationError,
    ExperimentConfig,
    FAILURE,
    InstructionSet,
    Outcome,
    SETTINGS,
    SetClass,
    Setting,
    SwitchPosition,
    WeightLike,
    as_fraction,
    iter_cells,
)


class DegenerateConditioningError(ValueError):
    """A requested statistic conditions on an event of probability zero."""


SettingPair = tuple[Setting, Setting]

CASE_B_PAIRS: tuple[SettingPair, ...] = tuple(
    (a, b) for a in SETTINGS for b in SETTINGS if a is not b
)

ALL_SETTING_PAIRS: tuple[SettingPair, ...] = tuple(
    (a, b) for a in SETTINGS for b in SETTINGS
)


@dataclass(frozen=True)
class JointTable:
    """Exact joint law of (switch_a, switch_b, outcome_a, outcome_b).

    Total over all 144 cells; probabilities sum to exactly 1, and any
    cell pairing a failed switch with a flash has probability 0.
    """

    prob: Mapping[CellKey, Fraction]

    def probability(
        self, swa: SwitchPosition, swb: SwitchPosition, oa: Outcome, ob: Outcome
    ) -> Fraction:
        return self.prob[(swa, swb, oa, ob)]

    def total(self) -> Fraction:
        return sum(self.prob.values(), Fraction(0))


def enumerate_joint(config: ExperimentConfig) -> JointTable:
    """Full joint distribution of one experiment.

    Each source entry contributes its (renormalized) weight spread over
    the independent per-side switch laws: failure with probability p,
    otherwise each setting with probability (1 - p) / 3. Outcomes are the
    deterministic instruction lookups, with failure forcing NoFlash.
    """
    config.validate()
    entries = config.source.renormalized()

    def switch_law(p: Fraction) -> list[tuple[SwitchPosition, Fraction]]:
        per_setting = (1 - p) / 3
        law: list[tuple[SwitchPosition, Fraction]] = [(FAILURE, p)]
        law.extend((s, per_setting) for s in SETTINGS)
        return [(sw, q) for sw, q in law if q != 0]

    law_a = switch_law(config.detector_a.failure_probability)
    law_b = switch_law(config.detector_b.failure_probability)

    prob: dict[CellKey, Fraction] = {key: Fraction(0) for key in iter_cells()}
    for state, weight in entries:
        for swa, qa in law_a:
            oa = Outcome.NO_FLASH if swa is FAILURE else state.alice.outcome_at(swa)
            wa = weight * qa
            for swb, qb in law_b:
                ob = Outcome.NO_FLASH if swb is FAILURE else state.bob.outcome_at(swb)
                prob[(swa, swb, oa, ob)] += wa * qb
    return JointTable(prob=MappingProxyType(prob))


@dataclass(frozen=True)
class CaseStats:
    """Conditional statistics of an experiment, as exact rationals.

    p_same_case_a / p_same_case_b are the same-colour probabilities among
    double flashes at equal / different settings. eta_a and eta_b are the
    per-detector flash probabilities, factored as eta = eta_u * eta_f:
    eta_f = 1 - p is the apparatus part and eta_u the particle part (the
    chance the instruction at the selected setting is not N).

    coincidence_rate maps each setting pair to the probability that a
    trial aimed at that pair yields two flashes: the both-flash mass of
    the pair divided by the 1/9 chance of aiming at it. It equals the
    realized-pair conditional when p_a = p_b = 0 and scales by
    (1 - p_a)(1 - p_b) under detector failure, while the case conditionals
    and eta_u do not move.

    A field is None (never zero) when its conditioning event has
    probability zero.
    """

    p_same_case_a: Union[Fraction, None]
    p_same_case_b: Union[Fraction, None]
    eta_a: Fraction
    eta_b: Fraction
    eta_u_a: Union[Fraction, None]
    eta_u_b: Union[Fraction, None]
    eta_f_a: Fraction
    eta_f_b: Fraction
    coincidence_rate: Mapping[SettingPair, Fraction]


def conditional_stats(table: JointTable) -> CaseStats:
    """CaseStats of a joint table that sums to exactly 1."""
    if table.total() != 1:
        raise ValueError("joint table does not sum to 1")
    prob = table.prob

    def both_flash_mass(sa: Setting, sb: Setting) -> Fraction:
        return sum(
            (prob[(sa, sb, ca, cb)] for ca in COLORS for cb in COLORS), Fraction(0)
        )

    def same_color_mass(sa: Setting, sb: Setting) -> Fraction:
        return sum((prob[(sa, sb, c, c)] for c in COLORS), Fraction(0))

    same_a = sum((same_color_mass(s, s) for s in SETTINGS), Fraction(0))
    both_a = sum((both_flash_mass(s, s) for s in SETTINGS), Fraction(0))
    same_b = sum((same_color_mass(sa, sb) for sa, sb in CASE_B_PAIRS), Fraction(0))
    both_b = sum((both_flash_mass(sa, sb) for sa, sb in CASE_B_PAIRS), Fraction(0))

    eta_a = sum(
        (p for (swa, _, oa, _), p in prob.items() if oa.is_flash), Fraction(0)
    )
    eta_b = sum(
        (p for (_, _, _, ob), p in prob.items() if ob.is_flash), Fraction(0)
    )
    fail_a = sum(
        (p for (swa, _, _, _), p in prob.items() if swa is FAILURE), Fraction(0)
    )
    fail_b = sum(
        (p for (_, swb, _, _), p in prob.items() if swb is FAILURE), Fraction(0)
    )
    eta_f_a = 1 - fail_a
    eta_f_b = 1 - fail_b

    coincidence = {
        (sa, sb): 9 * both_flash_mass(sa, sb) for sa, sb in ALL_SETTING_PAIRS
    }

    return CaseStats(
        p_same_case_a=same_a / both_a if both_a else None,
        p_same_case_b=same_b / both_b if both_b else None,
        eta_a=eta_a,
        eta_b=eta_b,
        eta_u_a=eta_a / eta_f_a if eta_f_a else None,
        eta_u_b=eta_b / eta_f_b if eta_f_b else None,
        eta_f_a=eta_f_a,
        eta_f_b=eta_f_b,
        coincidence_rate=MappingProxyType(coincidence),
    )


def case_b_same_fraction(s: InstructionSet) -> Fraction:
    """Fraction of the six different-setting pairs giving equal colours
    when both particles carry instruction set s.

    Only defined for sets without a no-flash entry; mixed cases belong to
    enumerate_joint.
    """
    if s.classify() is SetClass.WITH_NO_FLASH:
        raise ValueError(
            f"{s} contains a no-flash instruction; case-b fraction is defined "
            "for flash-only sets"
        )
    same = sum(1 for sa, sb in CASE_B_PAIRS if s.outcome_at(sa) is s.outcome_at(sb))
    return Fraction(same, len(CASE_B_PAIRS))


@dataclass(frozen=True)
class MinCaseBResult:
    minimum: Fraction
    support: tuple[InstructionSet, ...]
    vertex_values: Mapping[InstructionSet, Fraction]


def min_case_b_no_noflash() -> MinCaseBResult:
    """Minimum case-b same-colour rate over sources of identical no-N pairs.

    The rate of a mixture is linear in the weights, so the minimum is
    attained on vertex classes: evaluate the eight flash-only instruction
    sets and keep those achieving the smallest value (the six two-one
    sets, at exactly 1/3; the two homogeneous sets sit at 1).
    """
    vertex_values = {s: case_b_same_fraction(s) for s in ALL_EIGHT_SETS}
    minimum = min(vertex_values.values())
    support = tuple(s for s in ALL_EIGHT_SETS if vertex_values[s] == minimum)
    return MinCaseBResult(
        minimum=minimum,
        support=support,
        vertex_values=MappingProxyType(vertex_values),
    )


@dataclass(frozen=True)
class DetectorInvarianceReport:
    """Exact comparison of one source under a sweep of detector failure
    probabilities (applied to both detectors).

    conditionals_invariant: p_same_case_a, p_same_case_b, eta_u_a and
    eta_u_b are identical, as exact rationals, at every swept p and at the
    p = 0 baseline. coincidence_scaling_exact: every coincidence_rate cell
    equals (1 - p)^2 times its baseline value. eta_multiplicative:
    eta = eta_u * eta_f holds exactly per detector at every swept p.
    """

    p_values: tuple[Fraction, ...]
    baseline: CaseStats
    stats_by_p: tuple[CaseStats, ...]
    conditionals_invariant: bool
    coincidence_scaling_exact: bool
    eta_multiplicative: bool

    @property
    def passed(self) -> bool:
        return (
            self.conditionals_invariant
            and self.coincidence_scaling_exact
            and self.eta_multiplicative
        )


def detector_invariance_check(
    config: ExperimentConfig, p_values: Sequence[WeightLike]
) -> DetectorInvarianceReport:
    """Sweep both detectors' failure probabilities and report what moves.

    Detector-side loss must leave every conditional and the unfair
    efficiencies untouched, scaling only the coincidence rates; this is
    the exact statement behind "blaming the detectors keeps the statistics
    of the detected sample intact".
    """
    ps = tuple(as_fraction(p) for p in p_values)
    for p in ps:
        if p == 1:
            raise DegenerateConditioningError(
                "failure probability 1 leaves no detected events to condition on"
            )
        if not 0 <= p < 1:
            raise ConfigurationError(f"failure probability {p} outside [0, 1)")

    baseline = conditional_stats(
        enumerate_joint(config.with_failure_probabilities(0, 0))
    )
    stats_by_p = tuple(
        conditional_stats(enumerate_joint(config.with_failure_probabilities(p, p)))
        for p in ps
    )

    conditionals_invariant = all(
        st.p_same_case_a == baseline.p_same_case_a
        and st.p_same_case_b == baseline.p_same_case_b
        and st.eta_u_a == baseline.eta_u_a
        and st.eta_u_b == baseline.eta_u_b
        for st in stats_by_p
    )
    coincidence_scaling_exact = all(
        st.coincidence_rate[pair] == (1 - p) * (1 - p) * baseline.coincidence_rate[pair]
        for p, st in zip(ps, stats_by_p)
        for pair in ALL_SETTING_PAIRS
    )
    eta_multiplicative = all(
        st.eta_a == st.eta_u_a * st.eta_f_a and st.eta_b == st.eta_u_b * st.eta_f_b
        for st in stats_by_p
    )

    return DetectorInvarianceReport(
        p_values=ps,
        baseline=baseline,
        stats_by_p=stats_by_p,
        conditionals_invariant=conditionals_invariant,
        coincidence_scaling_exact=coincidence_scaling_exact,
        eta_multiplicative=eta_multiplicative,
    )

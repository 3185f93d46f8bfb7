"""
NV-center constants and optically induced flip-flop rates.

Frequencies are in GHz, fields in tesla. The optical pumping rate never
appears explicitly: every rate here is a probability per optical cycle, and
the number of cycles in one laser pulse is the calibration constant ``kappa``
carried by :class:`~nvreadout.pulses.ReadoutParams`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class DegenerateRates(ValueError):
    """The decrementing flip-flop probability vanished; no finite ratio exists."""


@dataclass(frozen=True)
class PhysicsParams:
    """
    Excited-state and polarization constants of one NV center.

    Attributes:
        D_es: excited-state zero-field splitting (GHz).
        A_es: perpendicular excited-state hyperfine coupling (GHz).
        gyromag: g_e * mu_B / h (GHz/T).
        P_e0: electron population left in m_s = 0 by optical pumping.
        charge_fidelity: NV- fraction; the rest is a static dark NV0 mixture.
        residual_split: share of the unpolarized electron population placed
            in m_s = -1 (the remainder goes to m_s = +1).
    """

    D_es: float = 1.42
    A_es: float = 0.040
    gyromag: float = 27.992
    P_e0: float = 0.81
    charge_fidelity: float = 0.75
    residual_split: float = 0.5

    def __post_init__(self):
        if self.D_es < 0 or self.A_es <= 0 or self.gyromag <= 0:
            raise ValueError("frequencies must be positive")
        for name in ("P_e0", "charge_fidelity", "residual_split"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class FlipFlopProbs:
    """Flip-flop probabilities; p_minus raises m_I, p_plus lowers it."""

    p_plus: float
    p_minus: float

    @property
    def ratio(self) -> float:
        return self.p_minus / self.p_plus


@dataclass(frozen=True)
class NuclearDistribution:
    pi_minus1: float
    pi_0: float
    pi_plus1: float
    degenerate: bool = False

    def as_tuple(self) -> tuple[float, float, float]:
        """Populations ordered m_I = -1, 0, +1."""
        return (self.pi_minus1, self.pi_0, self.pi_plus1)


def check_field(B0: float) -> float:
    if not math.isfinite(B0) or abs(B0) > 1.0:
        raise ValueError(f"|B0| must be at most 1 T, got {B0}")
    return float(B0)


def eslac_field(params: PhysicsParams) -> float:
    """Field (T) of the excited-state level anti-crossing."""
    return params.D_es / params.gyromag


def flip_flop_probabilities(B0: float, params: PhysicsParams) -> FlipFlopProbs:
    """Flip-flop probability per optical cycle for both transitions.

    p_plus peaks at -B_ESLAC and p_minus at +B_ESLAC, where it equals one.
    """
    B0 = check_field(B0)
    two_a2 = 2.0 * params.A_es**2
    zeeman = params.gyromag * B0
    p_plus = two_a2 / (two_a2 + (params.D_es + zeeman) ** 2)
    p_minus = two_a2 / (two_a2 + (params.D_es - zeeman) ** 2)
    return FlipFlopProbs(p_plus=p_plus, p_minus=p_minus)


def per_readout_flip_probs(B0: float, params: PhysicsParams, readout) -> FlipFlopProbs:
    """Flip-flop probabilities accumulated over one readout laser pulse."""
    return scale_flip_probs(flip_flop_probabilities(B0, params), readout.kappa)


def scale_flip_probs(probs: FlipFlopProbs, cycles: float) -> FlipFlopProbs:
    if cycles < 0:
        raise ValueError("cycle count must be non-negative")
    return FlipFlopProbs(
        p_plus=min(1.0, cycles * probs.p_plus),
        p_minus=min(1.0, cycles * probs.p_minus),
    )


def ladder_steady_state(p_plus: float, p_minus: float) -> NuclearDistribution:
    """Stationary distribution of the three-level m_I birth-death ladder."""
    if p_plus < 0 or p_minus < 0:
        raise ValueError("probabilities must be non-negative")
    if p_plus == 0.0:
        if p_minus == 0.0:
            raise DegenerateRates("both flip-flop probabilities vanish")
        return NuclearDistribution(0.0, 0.0, 1.0, degenerate=True)
    r = p_minus / p_plus
    # Normalise by the largest weight so r**2 cannot overflow.
    if r <= 1.0:
        w = (1.0, r, r * r)
    else:
        w = (1.0 / (r * r), 1.0 / r, 1.0)
    total = math.fsum(w)
    return NuclearDistribution(w[0] / total, w[1] / total, w[2] / total)


def dnp_steady_state(B0: float, params: PhysicsParams) -> NuclearDistribution:
    """Nuclear polarization reached by continuous optical pumping at ``B0``.

    Raises:
        DegenerateRates: if p_plus is exactly zero. The exception carries no
            payload; call :func:`ladder_steady_state` directly to obtain the
            flagged all-up distribution instead.
    """
    probs = flip_flop_probabilities(B0, params)
    if probs.p_plus == 0.0:
        raise DegenerateRates("p_plus vanished at this field")
    return ladder_steady_state(probs.p_plus, probs.p_minus)

"""
State space and pulse primitives as classical stochastic maps.

The nine bright levels are the (m_s, m_I) products ordered lexicographically,
followed by one aggregate dark level for NV0. Every primitive is a
column-stochastic 10x10 matrix acting on population vectors, plus the mean
photon number it emits conditioned on the input level.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .physics import PhysicsParams, flip_flop_probabilities, scale_flip_probs

SPIN_VALUES = (-1, 0, 1)
N_BRIGHT = 9
DARK = 9
N_LEVELS = 10
STOCHASTIC_TOL = 1e-12


def level_index(m_s: int, m_I: int) -> int:
    if m_s not in SPIN_VALUES or m_I not in SPIN_VALUES:
        raise ValueError(f"invalid level ({m_s}, {m_I})")
    return (m_s + 1) * 3 + (m_I + 1)


def level_of(index: int) -> tuple[int, int]:
    """Inverse of :func:`level_index` for bright levels."""
    if not 0 <= index < N_BRIGHT:
        raise ValueError(f"{index} is not a bright level")
    return index // 3 - 1, index % 3 - 1


LEVEL_NAMES = tuple(f"|{ms:+d},{mi:+d}>" for ms in SPIN_VALUES for mi in SPIN_VALUES) + ("dark",)


@dataclass(frozen=True)
class TransitionLabel:
    """A hyperfine-selective transition.

    MW labels flip the electron between m_s = 0 and ``branch`` for one m_I.
    RF labels flip the nucleus between ``nuclear_pair`` inside one m_s manifold.
    """

    name: str
    kind: str
    branch: int = 0
    m_I: int = 0
    m_s: int = 0
    nuclear_pair: tuple[int, int] = (0, 0)

    def levels(self) -> tuple[int, int]:
        if self.kind == "MW":
            return level_index(0, self.m_I), level_index(self.branch, self.m_I)
        return level_index(self.m_s, self.nuclear_pair[0]), level_index(self.m_s, self.nuclear_pair[1])

    def neighbours(self) -> list[TransitionLabel]:
        """Adjacent hyperfine lines a selective MW pulse can drive by mistake.

        RF lines sit megahertz apart, far outside the width of an RF pi pulse,
        so they get no crosstalk partners.
        """
        if self.kind != "MW":
            return []
        return [
            TransitionLabel(f"{self.name}~{m}", "MW", branch=self.branch, m_I=m)
            for m in (self.m_I - 1, self.m_I + 1)
            if m in SPIN_VALUES
        ]


MWB = TransitionLabel("MWB", "MW", branch=-1, m_I=1)
MWC = TransitionLabel("MWC", "MW", branch=-1, m_I=0)
MWE = TransitionLabel("MWE", "MW", branch=-1, m_I=-1)
# Only the m_s = -1 branch labels are pinned down; these two are placeholders.
MWA = TransitionLabel("MWA", "MW", branch=1, m_I=1)
MWD = TransitionLabel("MWD", "MW", branch=1, m_I=-1)
RFA = TransitionLabel("RFA", "RF", m_s=-1, nuclear_pair=(1, 0))
RFB = TransitionLabel("RFB", "RF", m_s=-1, nuclear_pair=(0, -1))

TRANSITIONS = {t.name: t for t in (MWA, MWB, MWC, MWD, MWE, RFA, RFB)}


@dataclass(frozen=True)
class GateParams:
    pi_fidelity: float = 1.0
    crosstalk: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.pi_fidelity <= 1.0:
            raise ValueError("pi_fidelity must lie in [0, 1]")
        if not 0.0 <= self.crosstalk <= 1.0 - self.pi_fidelity + 1e-12:
            raise ValueError("crosstalk must lie in [0, 1 - pi_fidelity]")


@dataclass(frozen=True)
class ReadoutParams:
    """Laser-pulse parameters.

    ``kappa`` is the effective number of optical cycles in one readout pulse;
    an initialization pulse is credited ``kappa * t_init / t_read`` cycles.
    ``dark_brightness`` defaults to the m_s = +-1 brightness when None.
    """

    alpha0: float = 0.02
    contrast: float = 0.28
    kappa: float = 3.8
    repump_prob: float = 0.9
    t_read: float = 350.0
    t_init: float = 850.0
    background: float = 0.0
    dark_brightness: float | None = None

    def __post_init__(self):
        if self.alpha0 < 0:
            raise ValueError("alpha0 must be non-negative")
        if not 0.0 <= self.contrast <= 1.0:
            raise ValueError("contrast must lie in [0, 1]")
        if not 0.0 <= self.repump_prob <= 1.0:
            raise ValueError("repump_prob must lie in [0, 1]")
        if self.kappa < 0 or self.t_read <= 0 or self.t_init < 0 or self.background < 0:
            raise ValueError("kappa, durations and background must be non-negative")

    @property
    def dim_yield(self) -> float:
        return self.alpha0 * (1.0 - self.contrast)

    @property
    def dark_yield(self) -> float:
        return self.dim_yield if self.dark_brightness is None else self.dark_brightness


@dataclass(frozen=True, eq=False)
class StochasticMap:
    """Column-stochastic transition matrix with per-input-level photon yield."""

    matrix: np.ndarray
    photon_yield: np.ndarray = field(default_factory=lambda: np.zeros(N_LEVELS))

    def __post_init__(self):
        self.matrix.setflags(write=False)
        self.photon_yield.setflags(write=False)

    def then(self, other: StochasticMap) -> StochasticMap:
        """Apply ``self`` first, then ``other``."""
        yield_ = self.photon_yield + self.matrix.T @ other.photon_yield
        return StochasticMap(other.matrix @ self.matrix, yield_)

    def apply(self, p: np.ndarray) -> np.ndarray:
        return self.matrix @ p

    def is_stochastic(self, tol: float = STOCHASTIC_TOL) -> bool:
        m = self.matrix
        return bool(np.all(m >= 0) and np.allclose(m.sum(axis=0), 1.0, rtol=0, atol=tol))


def identity_map() -> StochasticMap:
    return StochasticMap(np.eye(N_LEVELS))


def compose(*maps: StochasticMap) -> StochasticMap:
    """Compose maps in application order."""
    out = identity_map()
    for m in maps:
        out = out.then(m)
    return out


def _swap_matrix(i: int, j: int, prob: float) -> np.ndarray:
    m = np.eye(N_LEVELS)
    m[i, i] = m[j, j] = 1.0 - prob
    m[i, j] = m[j, i] = prob
    return m


def _pi_map(label: TransitionLabel, g: GateParams) -> StochasticMap:
    m = _swap_matrix(*label.levels(), g.pi_fidelity)
    if g.crosstalk > 0:
        for nb in label.neighbours():
            m = _swap_matrix(*nb.levels(), g.crosstalk) @ m
    return StochasticMap(m)


@lru_cache(maxsize=256)
def mw_pi_map(label: TransitionLabel, g: GateParams) -> StochasticMap:
    """Selective MW pi pulse on one hyperfine line."""
    if label.kind != "MW":
        raise ValueError(f"{label.name} is not a MW transition")
    return _pi_map(label, g)


@lru_cache(maxsize=256)
def rf_pi_map(label: TransitionLabel, g: GateParams) -> StochasticMap:
    """RF pi pulse on a nuclear pair, conditional on the electron manifold."""
    if label.kind != "RF":
        raise ValueError(f"{label.name} is not a RF transition")
    return _pi_map(label, g)


def gate_map(label: TransitionLabel, g: GateParams) -> StochasticMap:
    return mw_pi_map(label, g) if label.kind == "MW" else rf_pi_map(label, g)


def cnot_store_map(g: GateParams) -> StochasticMap:
    """RFA then RFB: |-1,+1> -> |-1,-1>, m_s = 0 untouched."""
    return rf_pi_map(RFA, g).then(rf_pi_map(RFB, g))


def swap_correct_map(g: GateParams) -> StochasticMap:
    """MWC then RFB: moves buffer population |0,0> back to |-1,-1>."""
    return mw_pi_map(MWC, g).then(rf_pi_map(RFB, g))


def electron_distribution(phys: PhysicsParams) -> dict[int, float]:
    """Electron populations left by optical pumping, keyed by m_s."""
    residual = 1.0 - phys.P_e0
    return {
        0: phys.P_e0,
        -1: residual * phys.residual_split,
        1: residual * (1.0 - phys.residual_split),
    }


def repump_matrix(phys: PhysicsParams, repump_prob: float) -> np.ndarray:
    """With probability ``repump_prob`` reset the electron to the pumped distribution."""
    target = electron_distribution(phys)
    m = np.eye(N_LEVELS)
    for m_I in SPIN_VALUES:
        for src in SPIN_VALUES:
            col = level_index(src, m_I)
            m[col, col] = 1.0 - repump_prob
            for dst, w in target.items():
                m[level_index(dst, m_I), col] += repump_prob * w
    return m


def backaction_matrix(p_plus: float, p_minus: float) -> np.ndarray:
    """One coarse-grained step of the m_I ladder in every electron manifold."""
    m = np.eye(N_LEVELS)
    for m_s in SPIN_VALUES:
        for m_I in SPIN_VALUES:
            up = p_minus if m_I < 1 else 0.0
            down = p_plus if m_I > -1 else 0.0
            total = up + down
            if total > 1.0:
                up, down = up / total, down / total
            col = level_index(m_s, m_I)
            m[col, col] = max(0.0, 1.0 - up - down)  # rounding can leave -1e-17
            if up:
                m[level_index(m_s, m_I + 1), col] = up
            if down:
                m[level_index(m_s, m_I - 1), col] = down
    return m


def photon_yield_vector(r: ReadoutParams) -> np.ndarray:
    y = np.full(N_LEVELS, r.dim_yield)
    for m_I in SPIN_VALUES:
        y[level_index(0, m_I)] = r.alpha0
    y[DARK] = r.dark_yield
    return y + r.background


def laser_pulse_map(B0: float, phys: PhysicsParams, r: ReadoutParams, role: str = "readout") -> StochasticMap:
    """Readout or initialization laser pulse.

    Repumping acts on m_s only and backaction on m_I only, so the two factors
    commute. The dark level is absorbing and the photon yield is evaluated on
    the input level.
    """
    if role == "readout":
        cycles = r.kappa
    elif role == "init":
        cycles = r.kappa * r.t_init / r.t_read
    else:
        raise ValueError(f"unknown laser role {role!r}")
    probs = scale_flip_probs(flip_flop_probabilities(B0, phys), cycles)
    m = backaction_matrix(probs.p_plus, probs.p_minus) @ repump_matrix(phys, r.repump_prob)
    return StochasticMap(m, photon_yield_vector(r))

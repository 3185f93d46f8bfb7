"""
Execute pulse sequences on population vectors.

Two backends share the same map construction: :func:`propagate` pushes the
full probability vector through every map and reports expected counts, while
:func:`sample` walks individual trajectories and draws Poisson photon counts.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .physics import PhysicsParams
from .protocols import Gate, Laser, PulseSequence, Wait
from .pulses import (
    DARK,
    N_LEVELS,
    SPIN_VALUES,
    TRANSITIONS,
    GateParams,
    ReadoutParams,
    StochasticMap,
    electron_distribution,
    gate_map,
    identity_map,
    laser_pulse_map,
    level_index,
)

NORM_TOL = 1e-12
SHARD_SIZE = 4096


@dataclass(frozen=True, eq=False)
class PopulationState:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (N_LEVELS,):
            raise ValueError(f"expected {N_LEVELS} populations, got shape {p.shape}")
        if np.any(p < -NORM_TOL) or abs(p.sum() - 1.0) > NORM_TOL:
            raise ValueError("populations must be non-negative and sum to one")
        object.__setattr__(self, "p", p)

    @classmethod
    def pure(cls, m_s: int, m_I: int) -> PopulationState:
        p = np.zeros(N_LEVELS)
        p[level_index(m_s, m_I)] = 1.0
        return cls(p)

    def nuclear(self) -> np.ndarray:
        """Bright-level m_I marginal, ordered -1, 0, +1 (not renormalised)."""
        return self.p[:9].reshape(3, 3).sum(axis=0)

    def electron(self) -> np.ndarray:
        return self.p[:9].reshape(3, 3).sum(axis=1)

    @property
    def dark(self) -> float:
        return float(self.p[DARK])


@dataclass(frozen=True)
class InitialCondition:
    """Product state: electron x nuclear on NV-, plus a static NV0 weight.

    ``electron`` and ``nuclear`` are ordered (-1, 0, +1).
    """

    electron: tuple[float, float, float] = (0.0, 1.0, 0.0)
    nuclear: tuple[float, float, float] = (0.0, 0.0, 1.0)
    charge_fidelity: float = 1.0

    def __post_init__(self):
        for name in ("electron", "nuclear"):
            v = getattr(self, name)
            if len(v) != 3 or min(v) < 0 or abs(sum(v) - 1.0) > 1e-9:
                raise ValueError(f"{name} must be a 3-entry probability vector")
        if not 0.0 <= self.charge_fidelity <= 1.0:
            raise ValueError("charge_fidelity must lie in [0, 1]")

    @classmethod
    def from_physics(cls, phys: PhysicsParams, nuclear=(0.0, 0.0, 1.0)) -> InitialCondition:
        e = electron_distribution(phys)
        return cls((e[-1], e[0], e[1]), tuple(nuclear), phys.charge_fidelity)


def initial_state(ic: InitialCondition) -> PopulationState:
    p = np.zeros(N_LEVELS)
    for i, m_s in enumerate(SPIN_VALUES):
        for j, m_I in enumerate(SPIN_VALUES):
            p[level_index(m_s, m_I)] = ic.electron[i] * ic.nuclear[j]
    p *= ic.charge_fidelity
    p[DARK] = 1.0 - ic.charge_fidelity
    p /= p.sum()
    return PopulationState(p)


@dataclass(frozen=True, eq=False)
class ExpectedTrace:
    counts: np.ndarray
    final_state: PopulationState

    def __len__(self) -> int:
        return len(self.counts)


@dataclass(frozen=True, eq=False)
class ShotTraces:
    shots: np.ndarray
    seed: int

    @property
    def n_shots(self) -> int:
        return self.shots.shape[0]

    def mean(self) -> np.ndarray:
        return self.shots.mean(axis=0)


class MapCache:
    """Resolves sequence steps to stochastic maps for one parameter set."""

    def __init__(self, B0: float, phys: PhysicsParams, readout: ReadoutParams, gates: GateParams):
        self.B0, self.phys, self.readout, self.gates = B0, phys, readout, gates
        self._maps: dict = {}

    def __call__(self, step) -> StochasticMap:
        key = step
        if key not in self._maps:
            self._maps[key] = self._build(step)
        return self._maps[key]

    def _build(self, step) -> StochasticMap:
        if isinstance(step, Laser):
            return laser_pulse_map(self.B0, self.phys, self.readout, step.role)
        if isinstance(step, Gate):
            return gate_map(TRANSITIONS[step.label], step.params or self.gates)
        if isinstance(step, Wait):
            return identity_map()
        raise TypeError(f"unknown step {step!r}")


def _as_vector(state) -> np.ndarray:
    if isinstance(state, PopulationState):
        return state.p.copy()
    return PopulationState(np.asarray(state, dtype=float)).p.copy()


def propagate(
    seq: PulseSequence,
    state0,
    B0: float,
    phys: PhysicsParams,
    readout: ReadoutParams,
    gates: GateParams,
    check_norm: bool = False,
) -> ExpectedTrace:
    """Expected photon counts per readout slot.

    The count of a slot is the photon yield of the readout laser evaluated on
    the state just before that laser acts.
    """
    maps = MapCache(B0, phys, readout, gates)
    p = _as_vector(state0)
    counts = []
    for step in seq.steps:
        m = maps(step)
        if isinstance(step, Laser) and step.role == "readout":
            counts.append(float(m.photon_yield @ p))
        p = m.matrix @ p
        if check_norm and abs(p.sum() - 1.0) > NORM_TOL:
            raise FloatingPointError("population normalization drifted")
    p = np.clip(p, 0.0, None)
    return ExpectedTrace(np.array(counts), PopulationState(p / p.sum()))


def _sample_shard(seq, p0, maps, n, rng) -> np.ndarray:
    cum0 = np.cumsum(p0)
    level = np.minimum(np.searchsorted(cum0, rng.random(n), side="right"), N_LEVELS - 1)
    out = np.zeros((n, seq.readout_slots), dtype=np.int64)
    slot = 0
    cache = {}
    for step in seq.steps:
        m = maps(step)
        if isinstance(step, Laser) and step.role == "readout":
            out[:, slot] = rng.poisson(m.photon_yield[level])
            slot += 1
        key = id(m)
        if key not in cache:
            # rows: cumulative probability per source level
            cache[key] = np.cumsum(m.matrix, axis=0).T.copy()
        cum = cache[key][level]
        u = rng.random(n)
        level = np.minimum((u[:, None] >= cum).sum(axis=1), N_LEVELS - 1)
    return out


def sample(
    seq: PulseSequence,
    ic: InitialCondition,
    B0: float,
    phys: PhysicsParams,
    readout: ReadoutParams,
    gates: GateParams,
    n_shots: int,
    seed: int,
    workers: int = 1,
) -> ShotTraces:
    """Monte Carlo photon counts, one row per shot.

    Shots are cut into fixed-size shards, each seeded from ``(seed, shard)``,
    so the output does not depend on ``workers``.
    """
    if n_shots < 1:
        raise ValueError("n_shots must be at least 1")
    p0 = initial_state(ic).p
    maps = MapCache(B0, phys, readout, gates)
    for step in seq.steps:
        maps(step)  # fill the cache before any worker reads it
    sizes = [min(SHARD_SIZE, n_shots - k) for k in range(0, n_shots, SHARD_SIZE)]
    rngs = [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,))) for k in range(len(sizes))]

    def run(k):
        return _sample_shard(seq, p0, maps, sizes[k], rngs[k])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(k) for k in range(len(sizes))]
    return ShotTraces(np.vstack(parts), seed)

"""
Pulse-sequence builders and wall-clock accounting.

A sequence is an immutable tuple of primitives. Gates carry a ``role`` tag
(prep, store, readout, ec, polarize) so that timing and golden-file output can
tell an error-correction MWC apart from any other selective MW pulse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .pulses import TRANSITIONS

PREPS = (0, -1)


class InvalidN(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    label: str
    role: str = "gate"
    params: object = None  # optional GateParams override for this pulse

    def __post_init__(self):
        if self.label not in TRANSITIONS:
            raise ValueError(f"unknown transition {self.label!r}")


@dataclass(frozen=True)
class Laser:
    role: str = "readout"

    def __post_init__(self):
        if self.role not in ("init", "readout"):
            raise ValueError(f"unknown laser role {self.role!r}")


@dataclass(frozen=True)
class Wait:
    duration: float  # ns

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("wait duration must be non-negative")


Step = Union[Gate, Laser, Wait]


@dataclass(frozen=True)
class PulseSequence:
    steps: tuple = ()
    N: int = 0
    N_r: int = 0
    prep: int | None = None
    trailing_ec: bool = False

    @property
    def readout_slots(self) -> int:
        return sum(1 for s in self.steps if isinstance(s, Laser) and s.role == "readout")

    @property
    def ec_blocks(self) -> int:
        return sum(1 for s in self.steps if isinstance(s, Gate) and s.role == "ec" and s.label == "MWC")

    def __add__(self, other: PulseSequence) -> PulseSequence:
        return PulseSequence(self.steps + other.steps, N=self.N + other.N)

    def __len__(self) -> int:
        return len(self.steps)

    def labels(self) -> list[str]:
        """Compact step names, e.g. ``['init', 'MWB', 'RFA', ...]``."""
        out = []
        for s in self.steps:
            if isinstance(s, Laser):
                out.append("init" if s.role == "init" else "read")
            elif isinstance(s, Gate):
                out.append(s.label)
            else:
                out.append("wait")
        return out

    def to_text(self, timing: TimingBudget | None = None) -> str:
        """Line-oriented dump: ``kind label duration_ns``, one primitive per line."""
        timing = timing or TimingBudget()
        lines = [f"# N={self.N} N_r={self.N_r} prep={self.prep}"]
        for s in self.steps:
            if isinstance(s, Laser):
                kind, label = "laser", s.role
            elif isinstance(s, Gate):
                kind, label = "gate", f"{s.label}:{s.role}"
            else:
                kind, label = "wait", "-"
            lines.append(f"{kind} {label} {timing.step_duration(s):.3f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> PulseSequence:
        steps = []
        meta = {"N": 0, "N_r": 0, "prep": None}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, value = item.partition("=")
                    if key in meta:
                        meta[key] = None if value == "None" else int(value)
                continue
            kind, label, duration = line.split()
            if kind == "laser":
                steps.append(Laser(label))
            elif kind == "gate":
                name, _, role = label.partition(":")
                steps.append(Gate(name, role or "gate"))
            elif kind == "wait":
                steps.append(Wait(float(duration)))
            else:
                raise ValueError(f"unknown primitive {kind!r}")
        return cls(tuple(steps), **meta)


@dataclass(frozen=True)
class TimingBudget:
    """Durations in ns.

    ``readout_overhead`` is the dead time charged to every readout slot on top
    of the MWE pulse and the laser; its default makes 2300 slots last 3.2 ms.
    """

    t_init: float = 850.0
    t_read: float = 350.0
    t_mw_selective: float = 399.0
    t_rf_ringdown: float = 20_000.0
    t_ec: float = 30_000.0
    readout_overhead: float = field(default=None)

    def __post_init__(self):
        if self.readout_overhead is None:
            object.__setattr__(self, "readout_overhead", pinned_overhead(3.2e6, 2300, self.t_read, self.t_mw_selective))
        for name in ("t_init", "t_read", "t_mw_selective", "t_rf_ringdown", "t_ec", "readout_overhead"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def t_rf_pi(self) -> float:
        """RF pi-pulse length implied by the correction block budget."""
        return max(0.0, self.t_ec - self.t_rf_ringdown - self.t_mw_selective)

    def step_duration(self, step: Step) -> float:
        if isinstance(step, Wait):
            return step.duration
        if isinstance(step, Laser):
            if step.role == "init":
                return self.t_init
            return self.t_read + self.readout_overhead
        if step.role == "ec":
            # the whole block costs t_ec, split across its two pulses
            return self.t_mw_selective if step.label.startswith("MW") else self.t_ec - self.t_mw_selective
        if step.label.startswith("MW"):
            return self.t_mw_selective
        return self.t_rf_pi + self.t_rf_ringdown


def pinned_overhead(total_ns: float, n_readouts: int, t_read: float, t_mw: float) -> float:
    """Dead time per slot such that ``n_readouts`` slots take ``total_ns``."""
    return total_ns / n_readouts - t_read - t_mw


def sequence_duration(seq: PulseSequence, timing: TimingBudget | None = None) -> float:
    """Wall-clock length of ``seq`` in microseconds."""
    timing = timing or TimingBudget()
    return sum(timing.step_duration(s) for s in seq.steps) / 1000.0


def _check_prep(prep: int) -> int:
    if prep not in PREPS:
        raise ValueError(f"prep must be 0 or -1, got {prep}")
    return prep


def _preamble(prep: int) -> list[Step]:
    steps: list[Step] = [Laser("init")]
    if _check_prep(prep) == -1:
        steps.append(Gate("MWB", "prep"))
    steps += [Gate("RFA", "store"), Gate("RFB", "store")]
    return steps


READ_SLOT = (Gate("MWE", "readout"), Laser("readout"))
EC_BLOCK = (Gate("MWC", "ec"), Gate("RFB", "ec"))


def build_repetitive_readout(prep: int, N: int) -> PulseSequence:
    """Init, optional MWB, CNOT store, then N x (MWE, readout laser)."""
    if N < 1:
        raise InvalidN(f"N must be at least 1, got {N}")
    steps = _preamble(prep) + list(READ_SLOT) * N
    return PulseSequence(tuple(steps), N=N, N_r=0, prep=prep)


def build_error_corrected(prep: int, N: int, N_r: int, trailing_ec: bool = False) -> PulseSequence:
    """Repetitive readout with a MWC+RFB correction after every ``N_r`` slots.

    No block follows the final slot unless ``trailing_ec`` is set, since a
    correction there cannot change any count.
    """
    if N < 1:
        raise InvalidN(f"N must be at least 1, got {N}")
    if N_r < 1:
        raise InvalidN(f"N_r must be at least 1, got {N_r}")
    steps = _preamble(prep)
    for k in range(1, N + 1):
        steps += READ_SLOT
        if k % N_r == 0 and (k < N or trailing_ec):
            steps += EC_BLOCK
    return PulseSequence(tuple(steps), N=N, N_r=N_r, prep=prep, trailing_ec=trailing_ec)


def build_dnp_eslac(n_pulses: int) -> PulseSequence:
    """Bare initialization pulses; polarization comes from the flip-flops."""
    if n_pulses < 1:
        raise InvalidN(f"n_pulses must be at least 1, got {n_pulses}")
    return PulseSequence((Laser("init"),) * n_pulses)


SWAP_LADDER = (("MWB", "RFA"), ("MWE", "RFB"))


def build_swap_polarization(n_rounds: int) -> PulseSequence:
    """Alternate +1 -> 0 and -1 -> 0 nuclear transfers, each after a repump."""
    if n_rounds < 1:
        raise InvalidN(f"n_rounds must be at least 1, got {n_rounds}")
    steps: list[Step] = []
    for k in range(n_rounds):
        mw, rf = SWAP_LADDER[k % 2]
        steps += [Laser("init"), Gate(mw, "polarize"), Gate(rf, "polarize")]
    return PulseSequence(tuple(steps))


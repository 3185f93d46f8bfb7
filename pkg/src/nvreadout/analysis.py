"""
Fidelity metrics, saturation fits, error-correction comparisons and the
calibration routines that pin kappa, contrast and A_es to measured targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq, least_squares

from .physics import PhysicsParams, flip_flop_probabilities
from .protocols import Gate, Laser, PulseSequence, build_error_corrected, build_repetitive_readout
from .pulses import GateParams, ReadoutParams
from .simulator import InitialCondition, ShotTraces, initial_state, propagate


class LengthMismatch(ValueError):
    pass


class FitDiverged(RuntimeError):
    pass


class NoBracket(RuntimeError):
    pass


class Unreachable(ValueError):
    pass


# ----------------------------------------------------------------------------
# Readout fidelity


def readout_fidelity(C0, C1):
    """F = (1 + (C0 + C1) / (C0 - C1)**2) ** -1/2, defined as 0 when C0 == C1.

    Accepts scalars or arrays.
    """
    C0 = np.asarray(C0, dtype=float)
    C1 = np.asarray(C1, dtype=float)
    if np.any(C0 < 0) or np.any(C1 < 0):
        raise ValueError("counts must be non-negative")
    diff = np.abs(C0 - C1)
    # |d| / sqrt(d^2 + S) is the same expression without the 1/d^2 overflow
    denom = np.sqrt(diff * diff + C0 + C1)
    F = np.divide(diff, denom, out=np.zeros_like(denom), where=diff > 0)
    return float(F) if F.ndim == 0 else F


def _pair(trace0, trace1) -> tuple[np.ndarray, np.ndarray]:
    t0 = np.asarray(getattr(trace0, "counts", trace0), dtype=float)
    t1 = np.asarray(getattr(trace1, "counts", trace1), dtype=float)
    if t0.shape != t1.shape:
        raise LengthMismatch(f"trace lengths differ: {t0.shape} vs {t1.shape}")
    return t0, t1


def cumulative_signal(trace0, trace1) -> np.ndarray:
    """C0 - C1 summed over the first N slots, for every N."""
    t0, t1 = _pair(trace0, trace1)
    return np.cumsum(t0 - t1)


@dataclass(frozen=True, eq=False)
class FidelityCurve:
    N: np.ndarray
    F: np.ndarray
    sigma: np.ndarray | None = None
    C0: np.ndarray | None = None
    C1: np.ndarray | None = None

    def __post_init__(self):
        if len(self.N) != len(self.F):
            raise LengthMismatch("N and F differ in length")
        if len(self.N) and np.any(np.diff(self.N) <= 0):
            raise ValueError("N must be strictly increasing")

    @property
    def index_opt(self) -> int:
        return int(np.argmax(self.F))

    @property
    def f_max(self) -> float:
        return float(self.F[self.index_opt])

    @property
    def n_opt(self) -> int:
        return int(self.N[self.index_opt])


def fidelity_vs_N(trace0, trace1) -> FidelityCurve:
    """Fidelity of the cumulative totals after every prefix of the traces."""
    t0, t1 = _pair(trace0, trace1)
    C0, C1 = np.cumsum(t0), np.cumsum(t1)
    N = np.arange(1, len(t0) + 1)
    return FidelityCurve(N, readout_fidelity(C0, C1), C0=C0, C1=C1)


def brightness_equivalent(F_plain: float, F_target: float) -> float:
    """Brightness factor s with max_N F(s C0, s C1) = F_target.

    Scaling both counts by s divides (C0 + C1) / (C0 - C1)**2 by s, so the
    optimal N does not move and s follows in closed form.
    """
    if not (0 < F_plain < 1 and 0 < F_target < 1):
        raise ValueError("fidelities must lie in (0, 1)")
    return (1.0 / F_plain**2 - 1.0) / (1.0 / F_target**2 - 1.0)


# ----------------------------------------------------------------------------
# Saturation fit


@dataclass(frozen=True)
class SaturationFit:
    amplitude: float
    n_1e: float
    residual_norm: float
    low_confidence: bool = False

    def model(self, N) -> np.ndarray:
        return saturation_model(np.asarray(N, dtype=float), self.amplitude, self.n_1e)


def saturation_model(N, amplitude, n_1e):
    return amplitude * -np.expm1(-N / n_1e)


def fit_saturation(signal, N=None, max_nfev: int = 5000) -> SaturationFit:
    """Least-squares fit of ``A (1 - exp(-N / N_1e))``.

    Starts from the final value and the N at which the data first reach a
    third of it. The result is flagged low-confidence when the data never
    bend far enough to pin N_1e (N_1e beyond twice the window); N_1e is
    then best read as a lower bound.
    """
    y = np.asarray(signal, dtype=float)
    if len(y) < 3:
        raise ValueError("need at least 3 points")
    N = np.arange(1, len(y) + 1, dtype=float) if N is None else np.asarray(N, dtype=float)
    if np.allclose(y, 0):
        raise FitDiverged("signal is identically zero")

    a0 = y[-1]
    crossed = np.nonzero(np.abs(y) >= abs(a0) / 3.0)[0]
    n_third = N[crossed[0]] if len(crossed) else N[-1]
    tau0 = max(n_third / -math.log(2.0 / 3.0), N[0])

    scale = max(abs(a0), np.max(np.abs(y)))

    def residual(theta):
        amp, log_tau = theta
        return (saturation_model(N, amp * scale, math.exp(log_tau)) - y) / scale

    log_tau_max = math.log(1e4 * N[-1])
    start = np.array([a0 / scale, min(math.log(tau0), log_tau_max - 1.0)])
    r0 = np.linalg.norm(residual(start))
    sol = least_squares(
        residual,
        start,
        method="trf",
        bounds=([-np.inf, math.log(1e-3 * N[0])], [np.inf, log_tau_max]),
        max_nfev=max_nfev,
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
    )
    r1 = np.linalg.norm(sol.fun)
    if not np.all(np.isfinite(sol.x)) or r1 > r0 * (1 + 1e-12) or sol.status < 0:
        raise FitDiverged(f"saturation fit failed: {sol.message}")
    n_1e = math.exp(sol.x[1])
    return SaturationFit(
        amplitude=float(sol.x[0] * scale),
        n_1e=float(n_1e),
        residual_norm=float(r1 * scale),
        low_confidence=bool(n_1e > 2.0 * N[-1]),
    )


# ----------------------------------------------------------------------------
# Error-correction comparison


@dataclass(frozen=True)
class ImprovementResult:
    F_plain_max: float
    N_plain_opt: int
    F_ec_max: float
    N_ec_opt: int
    ratio: float
    percent: float

    @property
    def brightness_factor(self) -> float:
        return brightness_equivalent(self.F_plain_max, self.F_ec_max)


def improvement(plain: FidelityCurve, ec: FidelityCurve) -> ImprovementResult:
    """Compare the peak fidelities of two curves."""
    if len(plain.F) == 0 or len(ec.F) == 0:
        raise ValueError("curves must be non-empty")
    ratio = ec.f_max / plain.f_max if plain.f_max > 0 else math.inf
    return ImprovementResult(
        F_plain_max=plain.f_max,
        N_plain_opt=plain.n_opt,
        F_ec_max=ec.f_max,
        N_ec_opt=ec.n_opt,
        ratio=ratio,
        percent=100.0 * (ratio - 1.0),
    )


def ladder_generator(p_plus: float, p_minus: float) -> np.ndarray:
    """Rate matrix of the m_I ladder (columns -1, 0, +1), rates per readout."""
    return np.array(
        [
            [-p_minus, p_plus, 0.0],
            [p_minus, -p_minus - p_plus, p_plus],
            [0.0, p_minus, -p_plus],
        ]
    )


def ideal_ec_populations(N: int, N_r, p_plus: float, p_minus: float, start: int) -> np.ndarray:
    """P(m_I = -1) seen by each of N readouts of the bare nuclear chain.

    Between readouts the ladder evolves for one unit of time at rates
    ``p_minus`` (up) and ``p_plus`` (down), so two flips can land inside one
    readout window. After every ``N_r`` readouts the buffer population is
    moved to -1 without error; ``N_r`` of None or inf disables correction.
    """
    for p in (p_plus, p_minus):
        if not 0.0 <= p <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
    period = 0 if N_r is None or N_r == math.inf else int(N_r)
    state = np.array([1.0, 0.0, 0.0]) if start == -1 else np.array([0.0, 0.0, 1.0])
    step = expm(ladder_generator(p_plus, p_minus))
    if period:
        repump = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        block = repump @ np.linalg.matrix_power(step, period)
    else:
        period, block = N, np.linalg.matrix_power(step, N)
    period = min(period, N)
    within = _matrix_powers(step, period)
    n_periods = -(-N // period)
    starts = _matrix_powers(block, n_periods) @ state
    # P(-1) at slot j of period q is row 0 of step^j applied to the period's start
    out = np.einsum("jb,qb->qj", within[:, 0, :], starts).ravel()
    return out[:N]


def _matrix_powers(m: np.ndarray, n: int) -> np.ndarray:
    """Stack of m**0 .. m**(n-1), built by doubling."""
    out = np.empty((n, 3, 3))
    out[0] = np.eye(3)
    filled, power = 1, m
    while filled < n:
        take = min(filled, n - filled)
        out[filled : filled + take] = power @ out[:take]
        filled += take
        power = power @ power
    return out


def ideal_ec_curve(N: int, N_r, p_plus: float, p_minus: float, unit: float) -> FidelityCurve:
    """Fidelity curve of the ideal-operations model.

    A readout yields ``unit`` photons unless the nucleus sits in -1, where it
    yields none; C0 starts in +1 and C1 in -1.
    """
    c0 = unit * (1.0 - ideal_ec_populations(N, N_r, p_plus, p_minus, start=1))
    c1 = unit * (1.0 - ideal_ec_populations(N, N_r, p_plus, p_minus, start=-1))
    return fidelity_vs_N(c0, c1)


def ideal_ec_model(N: int, N_r, p_plus: float, p_minus: float, unit: float) -> float:
    """Fidelity after exactly N readouts of the ideal-operations model."""
    return float(ideal_ec_curve(N, N_r, p_plus, p_minus, unit).F[-1])


def ideal_ec_scaling(N_r_values: Sequence[int], p_minus: float, unit: float, p_plus: float = 0.0) -> list[float]:
    """F_max improvement of the ideal-operations model for each N_r.

    Windows are sized from the loss rates: about 20 / p_minus readouts for
    the plain chain and 40 / (p_minus**2 N_r) with correction.
    """
    if p_minus <= 0:
        raise ValueError("p_minus must be positive")
    plain = ideal_ec_curve(int(min(20 / p_minus, 1e6)) + 10, None, p_plus, p_minus, unit)
    out = []
    for n_r in N_r_values:
        n = int(min(40 / (p_minus * p_minus * n_r), 2e6)) + 10
        out.append(ideal_ec_curve(n, n_r, p_plus, p_minus, unit).f_max / plain.f_max)
    return out


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


# ----------------------------------------------------------------------------
# Simulated curves


@dataclass(frozen=True)
class Model:
    """Everything :func:`propagate` needs apart from the sequence."""

    B0: float
    phys: PhysicsParams = PhysicsParams()
    readout: ReadoutParams = ReadoutParams()
    gates: GateParams = GateParams()
    nuclear: tuple = (0.0, 0.0, 1.0)

    def at(self, B0: float) -> Model:
        return replace(self, B0=B0)

    def initial(self):
        return initial_state(InitialCondition.from_physics(self.phys, self.nuclear))


def simulate_pair(model: Model, N: int, N_r: int = 0, trailing_ec: bool = False):
    """Expected traces for both preparations (|0>_e first)."""
    traces = []
    for prep in (0, -1):
        if N_r:
            seq = build_error_corrected(prep, N, N_r, trailing_ec)
        else:
            seq = build_repetitive_readout(prep, N)
        traces.append(propagate(seq, model.initial(), model.B0, model.phys, model.readout, model.gates))
    return traces[0], traces[1]


def scan_traces(model: Model, N_r: int = 0, n_max: int | None = None, cap: int = 200_000):
    """Expected traces over a window long enough to contain the fidelity peak.

    With ``n_max`` None the window doubles from 1000 until the peak sits in
    its first 60 percent.
    """
    n = n_max or 1000
    while True:
        t0, t1 = simulate_pair(model, n, N_r)
        curve = fidelity_vs_N(t0.counts, t1.counts)
        if n_max is not None or curve.n_opt <= 0.6 * n or n >= cap:
            return t0, t1, curve
        n = min(2 * n, cap)


def scan_fidelity(model: Model, N_r: int = 0, n_max: int | None = None, cap: int = 200_000) -> FidelityCurve:
    return scan_traces(model, N_r, n_max, cap)[2]


def simulated_n1e(model: Model, kappa: float, window: int) -> SaturationFit:
    m = replace(model, readout=replace(model.readout, kappa=kappa))
    t0, t1 = simulate_pair(m, window)
    return fit_saturation(cumulative_signal(t0, t1))


# ----------------------------------------------------------------------------
# Calibration


def calibrate_kappa(
    target_n1e: float,
    model: Model,
    bracket: tuple[float, float] = (1e-3, 1e3),
    rtol: float = 1e-3,
    window_factor: float = 3.0,
    max_window: int = 20_000,
) -> float:
    """kappa whose simulated plain-readout saturation scale equals ``target_n1e``.

    More optical cycles per pulse means faster depolarization, so the fitted
    N_1e falls monotonically with kappa, so a bracketed root search on
    log(kappa) is safe.
    """
    if target_n1e <= 0:
        raise ValueError("target must be positive")
    window = int(min(max(window_factor * target_n1e, 50), max_window))

    def gap(log_k):
        return math.log(simulated_n1e(model, math.exp(log_k), window).n_1e / target_n1e)

    lo, hi = math.log(bracket[0]), math.log(bracket[1])
    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo < 0 or g_hi > 0:
        raise NoBracket(
            f"N_1e = {target_n1e:g} is outside the range reachable for kappa in {bracket}"
        )
    log_k = brentq(gap, lo, hi, xtol=rtol * 0.1, rtol=1e-12)
    return math.exp(log_k)


def calibrate_contrast(target_F_single: float, alpha0: float, dim0: float = 0.0, dim1: float = 1.0) -> float:
    """Contrast c reproducing a single-readout fidelity.

    Single-readout counts are ``alpha0 * (1 - c * dim)``, where ``dim`` is
    the fraction of the population that reads dim for each preparation. The
    defaults describe an ideal readout, C0 = alpha0 and C1 = alpha0 (1 - c).
    """
    if not 0.0 < target_F_single < 1.0:
        raise ValueError("target fidelity must lie in (0, 1)")
    delta = dim1 - dim0
    if alpha0 <= 0 or delta <= 0:
        raise Unreachable("preparations are indistinguishable")
    k = 1.0 / target_F_single**2 - 1.0
    a = k * alpha0 * delta**2
    s = dim0 + dim1
    c = (-s + math.sqrt(s * s + 8.0 * a)) / (2.0 * a)
    if not 0.0 < c <= 1.0:
        raise Unreachable(f"F = {target_F_single} needs contrast {c:.3f} outside (0, 1]")
    return c


def conventional_dim_fractions(model: Model) -> tuple[float, float]:
    """Fraction of population reading dim in a one-pulse readout, per preparation.

    The preparations mirror the repetitive protocol: initialize, then either
    leave the electron alone or apply MWB.
    """
    probe = replace(model, readout=replace(model.readout, alpha0=1.0, contrast=1.0, dark_brightness=0.0, background=0.0))
    dims = []
    for prep in (0, -1):
        steps = [Laser("init")] + ([Gate("MWB", "prep")] if prep == -1 else []) + [Laser("readout")]
        tr = propagate(PulseSequence(tuple(steps), N=1), probe.initial(), probe.B0, probe.phys, probe.readout, probe.gates)
        dims.append(1.0 - float(tr.counts[0]))
    return dims[0], dims[1]


def calibrate_contrast_model(target_F_single: float, model: Model) -> float:
    """Contrast that makes the simulated one-pulse readout reach ``target_F_single``."""
    dim0, dim1 = conventional_dim_fractions(model)
    return calibrate_contrast(target_F_single, model.readout.alpha0, dim0, dim1)


@dataclass(frozen=True)
class JointFit:
    kappa: float
    A_es: float
    F_plain: float
    N_plain: int


def calibrate_joint(
    target_n1e: float,
    high: Model,
    B_moderate: float,
    target_F_plain: float,
    A_bracket: tuple[float, float] = (0.02, 1.0),
    rtol: float = 1e-3,
) -> JointFit:
    """Fit (kappa, A_es) to a high-field N_1e and a moderate-field plain F_max.

    For each trial A_es, kappa is re-solved so the high-field saturation scale
    stays on target; A_es is then root-solved until the plain peak fidelity at
    ``B_moderate`` matches. A larger A_es flattens the field dependence of the
    flip-flop rates, so that peak rises monotonically with it.
    """
    cache: dict[float, tuple[float, FidelityCurve]] = {}

    def solve(A):
        if A not in cache:
            m = replace(high, phys=replace(high.phys, A_es=A))
            kappa = None
            if cache:
                # N_1e scales roughly as 1 / (kappa p_minus); start from the nearest solution
                A0 = min(cache, key=lambda a: abs(math.log(a / A)))
                p0 = flip_flop_probabilities(high.B0, replace(high.phys, A_es=A0)).p_minus
                guess = cache[A0][0] * p0 / flip_flop_probabilities(high.B0, m.phys).p_minus
                try:
                    kappa = calibrate_kappa(target_n1e, m, bracket=(guess / 2, guess * 2), rtol=rtol)
                except NoBracket:
                    pass
            if kappa is None:
                kappa = calibrate_kappa(target_n1e, m, rtol=rtol)
            m = replace(m, readout=replace(m.readout, kappa=kappa))
            cache[A] = (kappa, scan_fidelity(m.at(B_moderate)))
        return cache[A]

    def gap(log_A):
        return math.log(solve(math.exp(log_A))[1].f_max / target_F_plain)

    lo, hi = (math.log(a) for a in A_bracket)
    if gap(lo) > 0 or gap(hi) < 0:
        raise NoBracket(f"plain F_max = {target_F_plain} unreachable for A_es in {A_bracket}")
    A = math.exp(brentq(gap, lo, hi, xtol=1e-3))
    kappa, curve = solve(A)
    return JointFit(kappa=kappa, A_es=A, F_plain=curve.f_max, N_plain=curve.n_opt)


# ----------------------------------------------------------------------------
# Bootstrap


def bootstrap_se(
    shots,
    statistic: Callable[..., float],
    n_resamples: int = 1000,
    seed: int = 0,
) -> float:
    """Nonparametric bootstrap standard error of ``statistic``.

    ``shots`` is one ShotTraces (or 2-D array) or a sequence of them; each is
    resampled over its rows independently and passed positionally.
    """
    if isinstance(shots, (ShotTraces, np.ndarray)):
        shots = [shots]
    arrays = [np.asarray(getattr(s, "shots", s)) for s in shots]
    if any(a.shape[0] < 100 for a in arrays):
        raise ValueError("bootstrap needs at least 100 shots per trace set")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    stats = np.empty(n_resamples)
    for b in range(n_resamples):
        resampled = [a[rng.integers(0, a.shape[0], a.shape[0])] for a in arrays]
        stats[b] = statistic(*resampled)
    return float(stats.std(ddof=1))

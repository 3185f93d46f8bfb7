"""
Scenario execution behind the command-line front end.

``run_scenario`` simulates both preparations and returns trace and summary
rows, ``run_sweep`` repeats that over one axis, and ``run_calibration``
walks the contrast -> kappa -> moderate-field check -> joint-fit chain.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis as an
from .config import ScenarioConfig, with_overrides
from .protocols import build_error_corrected, build_repetitive_readout, sequence_duration
from .simulator import InitialCondition, sample

log = logging.getLogger(__name__)


def model_of(cfg: ScenarioConfig, B0: float | None = None) -> an.Model:
    return an.Model(
        B0=cfg.field.B0 if B0 is None else B0,
        phys=cfg.physics,
        readout=cfg.readout,
        gates=cfg.gates,
        nuclear=tuple(cfg.initial.nuclear),
    )


def variants(cfg: ScenarioConfig) -> list[tuple[str, int]]:
    p = cfg.protocol
    if p.kind == "repetitive":
        return [("plain", 0)]
    out = [("plain", 0)] if p.baseline else []
    return out + [("ec", p.N_r)]


def _sequence(prep: int, N: int, N_r: int):
    return build_error_corrected(prep, N, N_r) if N_r else build_repetitive_readout(prep, N)


def _window(model: an.Model, N: int, N_r: int) -> int:
    if N:
        return N
    return len(an.scan_traces(model, N_r)[0])


@dataclass
class VariantResult:
    name: str
    N_r: int
    c0: np.ndarray
    c1: np.ndarray
    c0_se: np.ndarray
    c1_se: np.ndarray
    curve: an.FidelityCurve
    shots: dict = field(default_factory=dict)


def simulate_variant(cfg: ScenarioConfig, model: an.Model, name: str, N_r: int, N: int, seed=None) -> VariantResult:
    """Mean counts for both preparations with the configured backend."""
    n = _window(model, N, N_r)
    if cfg.simulation.backend == "expectation":
        t0, t1 = an.simulate_pair(model, n, N_r)
        zero = np.zeros(n)
        return VariantResult(name, N_r, t0.counts, t1.counts, zero, zero.copy(), an.fidelity_vs_N(t0, t1))
    ic = InitialCondition.from_physics(model.phys, model.nuclear)
    seed = cfg.simulation.seed if seed is None else seed
    means, ses, shots = [], [], {}
    for k, prep in enumerate((0, -1)):
        # distinct but reproducible streams per preparation
        sub = int(np.random.SeedSequence([seed, k, N_r]).generate_state(1)[0])
        tr = sample(_sequence(prep, n, N_r), ic, model.B0, model.phys, model.readout, model.gates,
                    cfg.simulation.n_shots, sub, workers=cfg.simulation.workers)
        means.append(tr.mean())
        ses.append(tr.shots.std(axis=0, ddof=1) / math.sqrt(tr.n_shots) if tr.n_shots > 1 else np.zeros(n))
        shots[prep] = tr.shots
    curve = an.fidelity_vs_N(means[0], means[1])
    return VariantResult(name, N_r, means[0], means[1], ses[0], ses[1], curve, shots)


@dataclass
class RunResult:
    trace_rows: list
    summary_rows: list
    variants: list


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    model = model_of(cfg)
    results = [simulate_variant(cfg, model, name, N_r, cfg.protocol.N) for name, N_r in variants(cfg)]
    plain = next((r for r in results if r.name == "plain"), None)
    trace_rows, summary_rows = [], []
    for r in results:
        signal = an.cumulative_signal(r.c0, r.c1)
        for i in range(len(r.c0)):
            trace_rows.append({
                "variant": r.name, "N_r": r.N_r, "N": i + 1,
                "c0": float(r.c0[i]), "c1": float(r.c1[i]),
                "c0_se": float(r.c0_se[i]), "c1_se": float(r.c1_se[i]),
                "signal": float(signal[i]), "F": float(r.curve.F[i]),
            })
        fit = an.fit_saturation(signal)
        seq = _sequence(0, r.curve.n_opt, r.N_r)
        summary_rows.append({
            "variant": r.name, "N_r": r.N_r, "B0": cfg.field.B0,
            "F_max": r.curve.f_max, "N_opt": r.curve.n_opt,
            "N_1e": fit.n_1e, "N_1e_low_confidence": fit.low_confidence,
            "duration_us": sequence_duration(seq, cfg.timing),
            "improvement": r.curve.f_max / plain.curve.f_max if plain else None,
        })
    return RunResult(trace_rows, summary_rows, results)


# ----------------------------------------------------------------------------
# Sweeps


def _point(cfg: ScenarioConfig, axis: str, value, index: int) -> list[dict]:
    spec = cfg.sweep
    N = cfg.protocol.N
    if axis == "B0":
        model = model_of(cfg, float(value))
        periods = spec.N_r or ((cfg.protocol.N_r,) if cfg.protocol.N_r else ())
    elif axis == "N_r":
        model = model_of(cfg)
        periods = (int(value),)
    else:
        model = model_of(cfg)
        N = int(value)
        periods = spec.N_r or ((cfg.protocol.N_r,) if cfg.protocol.N_r else ())
    seed = cfg.simulation.seed + 7919 * index
    plain = simulate_variant(cfg, model, "plain", 0, N, seed=seed).curve
    rows = [{"axis": axis, "value": value, "variant": "plain", "N_r": 0,
             "F_max": plain.f_max, "N_opt": plain.n_opt, "improvement": 1.0}]
    for n_r in periods:
        ec = simulate_variant(cfg, model, "ec", n_r, N, seed=seed).curve
        rows.append({"axis": axis, "value": value, "variant": "ec", "N_r": n_r,
                     "F_max": ec.f_max, "N_opt": ec.n_opt, "improvement": ec.f_max / plain.f_max})
    return rows


def run_sweep(cfg: ScenarioConfig) -> list[dict]:
    """Long-format rows, ordered by axis value then N_r regardless of threading."""
    spec = cfg.sweep
    if spec is None:
        raise ValueError("configuration has no [sweep] section")
    jobs = list(enumerate(spec.values))
    if cfg.simulation.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.simulation.workers) as pool:
            parts = list(pool.map(lambda iv: _point(cfg, spec.axis, iv[1], iv[0]), jobs))
    else:
        parts = [_point(cfg, spec.axis, v, i) for i, v in jobs]
    return [row for part in parts for row in part]


# ----------------------------------------------------------------------------
# Calibration


@dataclass
class CalibrationReport:
    config: ScenarioConfig
    rows: list
    moderate_ok: bool | None = None


def _moderate_check(cfg: ScenarioConfig, m) -> tuple[bool, an.FidelityCurve]:
    curve = an.scan_fidelity(model_of(cfg, m.B0))
    lo, hi = m.N_opt_range
    ok = abs(curve.f_max - m.F_plain) <= m.F_tolerance and lo <= curve.n_opt <= hi
    return ok, curve


def run_calibration(cfg: ScenarioConfig) -> CalibrationReport:
    """Fit contrast, then kappa, then fall back to a joint (kappa, A_es) fit.

    The joint fit only runs when moderate-field targets are given and the
    single global kappa misses them.
    """
    t = cfg.targets
    if t is None:
        raise ValueError("configuration has no [targets] section")
    rows = []
    if t.F_single is not None:
        alpha0 = t.alpha0 if t.alpha0 is not None else cfg.readout.alpha0
        cfg = with_overrides(cfg, readout={"alpha0": alpha0})
        if t.contrast_model == "simulated":
            c = an.calibrate_contrast_model(t.F_single, model_of(cfg, t.B0))
        else:
            c = an.calibrate_contrast(t.F_single, alpha0)
        cfg = with_overrides(cfg, readout={"contrast": c})
        rows.append({"step": "contrast", "parameter": "contrast", "value": c,
                     "note": f"F_single={t.F_single:g} alpha0={alpha0:g} model={t.contrast_model}"})
        log.info("contrast = %.6g", c)
    moderate_ok = None
    if t.N_1e is not None:
        kappa = an.calibrate_kappa(t.N_1e, model_of(cfg, t.B0))
        cfg = with_overrides(cfg, readout={"kappa": kappa})
        rows.append({"step": "kappa", "parameter": "kappa", "value": kappa,
                     "note": f"N_1e={t.N_1e:g} at B0={t.B0:g} T"})
        log.info("kappa = %.6g", kappa)
        m = t.moderate
        if m is not None:
            moderate_ok, curve = _moderate_check(cfg, m)
            rows.append({"step": "check", "parameter": "F_plain", "value": curve.f_max,
                         "note": f"N_opt={curve.n_opt} at B0={m.B0:g} T; {'ok' if moderate_ok else 'miss'}"})
            if not moderate_ok:
                log.info("global kappa misses the moderate-field targets; fitting (kappa, A_es)")
                jf = an.calibrate_joint(t.N_1e, model_of(cfg, t.B0), m.B0, m.F_plain, tuple(m.A_es_bracket))
                cfg = with_overrides(cfg, physics={"A_es": jf.A_es}, readout={"kappa": jf.kappa})
                moderate_ok, curve = _moderate_check(cfg, m)
                rows += [
                    {"step": "joint", "parameter": "A_es", "value": jf.A_es, "note": "GHz"},
                    {"step": "joint", "parameter": "kappa", "value": jf.kappa, "note": ""},
                    {"step": "joint", "parameter": "F_plain", "value": curve.f_max,
                     "note": f"N_opt={curve.n_opt}; {'ok' if moderate_ok else 'miss'}"},
                ]
    return CalibrationReport(replace(cfg, targets=None), rows, moderate_ok)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvreadout.physics import PhysicsParams
from nvreadout.protocols import Gate, Laser, PulseSequence, build_error_corrected, build_repetitive_readout
from nvreadout.pulses import DARK, GateParams, ReadoutParams, level_index
from nvreadout.simulator import (
    InitialCondition,
    PopulationState,
    initial_state,
    propagate,
    sample,
)

SLOT = PulseSequence((Gate("MWE", "readout"), Laser("readout")), N=1)


class TestInitialState:
    def test_pure(self):
        ic = InitialCondition((0.0, 1.0, 0.0), (0.0, 0.0, 1.0), 1.0)
        assert np.array_equal(initial_state(ic).p, PopulationState.pure(0, 1).p)

    def test_residual_split(self):
        ic = InitialCondition.from_physics(PhysicsParams(charge_fidelity=1.0))
        p = initial_state(ic).p
        assert p[level_index(0, 1)] == pytest.approx(0.81)
        assert p[level_index(-1, 1)] == pytest.approx(0.095)
        assert p[level_index(1, 1)] == pytest.approx(0.095)

    def test_charge_mixture(self):
        p = initial_state(InitialCondition.from_physics(PhysicsParams())).p
        assert p[DARK] == pytest.approx(0.25)
        assert p.sum() == pytest.approx(1.0, abs=1e-15)

    def test_invalid(self):
        with pytest.raises(ValueError):
            InitialCondition(nuclear=(0.5, 0.6, 0.0))
        with pytest.raises(ValueError):
            PopulationState(np.ones(10))


class TestPropagate:
    phys = PhysicsParams()

    def test_no_readouts(self):
        seq = PulseSequence((Gate("MWB"),))
        tr = propagate(seq, PopulationState.pure(0, 1), 0.1, self.phys, ReadoutParams(), GateParams())
        assert len(tr.counts) == 0
        assert tr.final_state.p[level_index(-1, 1)] == 1.0

    def test_mwe_skips_wrong_line(self):
        r = ReadoutParams(kappa=0.0)
        tr = propagate(SLOT, PopulationState.pure(0, 1), 0.1, self.phys, r, GateParams())
        assert tr.counts[0] == pytest.approx(0.02)

    def test_mwe_darkens(self):
        r = ReadoutParams(kappa=0.0, contrast=0.3)
        tr = propagate(SLOT, PopulationState.pure(0, -1), 0.1, self.phys, r, GateParams())
        assert tr.counts[0] == pytest.approx(0.02 * 0.7)

    def test_count_is_yield_dot_state(self):
        from nvreadout.pulses import laser_pulse_map, mw_pi_map, MWE

        r = ReadoutParams(kappa=2.0)
        g = GateParams(0.9, 0.05)
        p0 = initial_state(InitialCondition.from_physics(self.phys, (0.2, 0.3, 0.5))).p
        tr = propagate(SLOT, p0, 0.05, self.phys, r, g)
        p1 = mw_pi_map(MWE, g).apply(p0)
        assert tr.counts[0] == pytest.approx(laser_pulse_map(0.05, self.phys, r).photon_yield @ p1, rel=1e-14)

    @given(st.integers(1, 40), st.integers(0, 6), st.floats(0.0, 0.3), st.floats(0, 20))
    @settings(max_examples=40, deadline=None)
    def test_normalization(self, N, N_r, B0, kappa):
        seq = build_error_corrected(-1, N, N_r) if N_r else build_repetitive_readout(-1, N)
        r = ReadoutParams(kappa=kappa)
        p0 = initial_state(InitialCondition.from_physics(self.phys))
        # check_norm raises if the sum drifts by more than 1e-12 at any step
        tr = propagate(seq, p0, B0, self.phys, r, GateParams(0.95, 0.03), check_norm=True)
        assert len(tr.counts) == N
        assert np.all(tr.counts >= 0)

    def test_difference_decays(self, preset_model):
        m = preset_model.at(0.244)
        seq0, seq1 = build_repetitive_readout(0, 4000), build_repetitive_readout(-1, 4000)
        c0 = propagate(seq0, m.initial(), m.B0, m.phys, m.readout, m.gates).counts
        c1 = propagate(seq1, m.initial(), m.B0, m.phys, m.readout, m.gates).counts
        d = c0 - c1
        assert np.all(d[5:] >= -1e-15)
        assert np.all(np.diff(d[5:]) <= 1e-15)
        assert d[-1] < 0.2 * d[5]


class TestSample:
    phys = PhysicsParams()
    r = ReadoutParams(kappa=2.0)
    g = GateParams(0.95, 0.02)

    def run(self, n, seed, workers=1, r=None, N=20):
        ic = InitialCondition.from_physics(self.phys)
        return sample(build_error_corrected(-1, N, 4), ic, 0.082, self.phys, r or self.r, self.g, n, seed, workers)

    def test_deterministic(self):
        a, b = self.run(500, 3), self.run(500, 3)
        assert np.array_equal(a.shots, b.shots)
        assert not np.array_equal(a.shots, self.run(500, 4).shots)

    def test_worker_count_irrelevant(self):
        a = self.run(9000, 11, workers=1)
        b = self.run(9000, 11, workers=3)
        assert np.array_equal(a.shots, b.shots)

    def test_dark_readout(self):
        r = ReadoutParams(alpha0=0.0, kappa=2.0)
        assert not self.run(300, 1, r=r).shots.any()

    def test_shape_and_type(self):
        tr = self.run(123, 0, N=7)
        assert tr.shots.shape == (123, 7)
        assert tr.shots.dtype.kind == "i" and tr.shots.min() >= 0

    def test_mean_converges(self):
        # bright enough that the Poisson noise is small relative to the yield
        r = ReadoutParams(alpha0=5.0, kappa=2.0)
        tr = self.run(10_000, 5, r=r)
        ic = InitialCondition.from_physics(self.phys)
        ref = propagate(build_error_corrected(-1, 20, 4), initial_state(ic), 0.082, self.phys, r, self.g).counts
        se = tr.shots.std(axis=0, ddof=1) / np.sqrt(tr.n_shots)
        assert np.mean(np.abs(tr.mean() - ref) < 3 * se) >= 0.9

    def test_rejects_zero_shots(self):
        with pytest.raises(ValueError):
            self.run(0, 0)

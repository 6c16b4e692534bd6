import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twosite_polymer.analytic import Beta
from twosite_polymer.ensemble import ModelParams
from twosite_polymer.sde import (
    NoiseIncrement,
    PolymerState,
    StepError,
    StepScheme,
    _integrate_block,
    derive_observables,
    simulate_path,
    step,
    step_block,
    time_grid,
)

ZERO = NoiseIncrement(0.0, 0.0)


def test_state_validation():
    with pytest.raises(ValueError):
        PolymerState(t=0.0, x1=-0.1, x2=0.0)
    with pytest.raises(ValueError):
        PolymerState(t=0.0, x1=float("inf"), x2=0.0)


def test_euler_zero_noise_relaxation():
    out = step(PolymerState(0.0, 1.0, 0.0), 0.1, ZERO, StepScheme.EULER, Beta(1.0))
    assert (out.t, out.x1, out.x2) == (0.1, 0.9, 0.1)


@pytest.mark.parametrize("dt", [1e-3, 0.05, 0.7, 2.0])
def test_splitting_symmetric_fixed_point_beta_zero(dt):
    out = step(PolymerState(0.0, 1.0, 1.0), dt, ZERO, StepScheme.SPLITTING, Beta(0.0))
    assert (out.x1, out.x2) == (1.0, 1.0)
    assert out.t == dt


def test_milstein_hand_computed():
    b, dt, db = 0.8, 0.01, 0.07
    out = step(
        PolymerState(0.0, 2.0, 0.5), dt, NoiseIncrement(db, -db),
        StepScheme.MILSTEIN, Beta(b),
    )
    c = 0.5 * b * b
    assert out.x1 == pytest.approx(
        2.0 + (0.5 - 2.0) * dt + b * 2.0 * db + c * 2.0 * (db * db - dt), rel=1e-15
    )
    assert out.x2 == pytest.approx(
        0.5 + (2.0 - 0.5) * dt + b * 0.5 * (-db) + c * 0.5 * (db * db - dt), rel=1e-15
    )


def test_euler_clamps_at_zero():
    # large negative increment drives x1 through zero
    out = step(PolymerState(0.0, 1.0, 0.0), 0.01, NoiseIncrement(-5.0, 0.0),
               StepScheme.EULER, Beta(1.0))
    assert out.x1 == 0.0


def test_splitting_stays_positive_under_extreme_noise():
    state = PolymerState(0.0, 1.0, 0.0)
    rng = np.random.default_rng(5)
    for _ in range(200):
        noise = NoiseIncrement(*(rng.standard_normal(2) * 0.5))
        state = step(state, 0.05, noise, StepScheme.SPLITTING, Beta(2.0))
    assert state.x1 > 0.0 and state.x2 > 0.0


def test_step_overflow_raises_step_error():
    with pytest.raises(StepError) as info:
        step(PolymerState(0.0, 1e308, 0.0), 1.0, NoiseIncrement(800.0, 0.0),
             StepScheme.SPLITTING, Beta(2.0))
    assert info.value.t == 1.0


def test_derive_observables_examples():
    assert derive_observables(PolymerState(0.0, 1.0, 0.0)) == (1.0, 1.0, 1.0, 0.0)
    z, n, overlap, log_z = derive_observables(PolymerState(0.0, 1.0, 1.0))
    assert (z, n, overlap) == (2.0, 2.0, 0.5)
    z, n, overlap, log_z = derive_observables(PolymerState(0.0, 3.0, 1.0))
    assert (z, n, overlap) == (4.0, 10.0, 10.0 / 16.0)
    assert log_z == pytest.approx(math.log(4.0), rel=1e-15)


def test_derive_observables_rejects_zero_mass():
    with pytest.raises(ValueError):
        derive_observables(PolymerState(0.0, 0.0, 0.0))


@settings(max_examples=300, deadline=None)
@given(
    st.floats(min_value=0.0, max_value=1e6),
    st.floats(min_value=1e-12, max_value=1e6),
)
def test_overlap_range_property(x1, x2):
    obs = derive_observables(PolymerState(0.0, x1, x2))
    assert 0.5 - 1e-12 <= obs.overlap <= 1.0 + 1e-12


def test_time_grid_validation():
    n, rec = time_grid(dt=1e-3, horizon=2.0, stride=0.1)
    assert n == 2000
    assert rec[0] == 0 and rec[-1] == 2000 and len(rec) == 21
    with pytest.raises(ValueError):
        time_grid(dt=1e-3, horizon=2.0005, stride=0.1)  # horizon not on the grid
    with pytest.raises(ValueError):
        time_grid(dt=1e-3, horizon=2.0, stride=0.00035)  # stride not a multiple
    with pytest.raises(ValueError):
        time_grid(dt=1e-3, horizon=2.0, stride=0.3)  # horizon not on the stride
    with pytest.raises(ValueError):
        time_grid(dt=0.2, horizon=2.0, stride=0.1)  # stride below dt


def _params(**kw):
    base = dict(beta=Beta(0.0), dt=1e-3, horizon=2.0, n_paths=1,
                scheme=StepScheme.SPLITTING, output_stride=0.1, master_seed=9)
    base.update(kw)
    return ModelParams(**base)


def test_zero_noise_reduction_splitting():
    """With no noise the flow is the deterministic linear system:
    x1 - x2 = exp(-2t), x1 + x2 = 1, hence overlap (1 + exp(-4t))/2."""
    series = simulate_path(_params(), path_seed=0)
    diff = series.x1 - series.x2
    assert np.max(np.abs(diff - np.exp(-2.0 * series.times))) < 1e-9
    assert np.max(np.abs(series.z - 1.0)) < 1e-12
    ref = 0.5 * (1.0 + np.exp(-4.0 * series.times))
    assert np.max(np.abs(series.overlap - ref)) < 1e-9


def test_zero_noise_reduction_euler_first_order():
    dt = 1e-3
    series = simulate_path(_params(scheme=StepScheme.EULER, dt=dt), path_seed=0)
    diff = series.x1 - series.x2
    err = np.max(np.abs(diff - np.exp(-2.0 * series.times)))
    assert err < 5.0 * dt  # O(dt) accuracy
    assert np.max(np.abs(series.z - 1.0)) < 1e-12


def test_simulate_path_repeatable_bitwise():
    params = _params(beta=Beta(1.0), dt=2e-3, horizon=1.0, master_seed=77)
    a = simulate_path(params, path_seed=3)
    b = simulate_path(params, path_seed=3)
    assert np.array_equal(a.x1, b.x1) and np.array_equal(a.x2, b.x2)
    c = simulate_path(params, path_seed=4)
    assert not np.array_equal(a.x1, c.x1)


def test_simulate_path_matches_ensemble_lane():
    """A path re-simulated alone consumes the same stream as its ensemble
    lane; states agree to vectorization roundoff."""
    params = _params(beta=Beta(1.0), dt=2e-3, horizon=1.0, master_seed=123)
    n_steps, record = time_grid(params.dt, params.horizon, params.output_stride)
    rx1, rx2, _ = _integrate_block(
        beta=params.beta, dt=params.dt, n_steps=n_steps, scheme=params.scheme,
        master_seed=params.master_seed, path_lo=0, block_size=5, record_steps=record,
    )
    for i in range(5):
        solo = simulate_path(params, path_seed=i)
        np.testing.assert_allclose(solo.x1, rx1[i], rtol=1e-12, atol=1e-300)
        np.testing.assert_allclose(solo.x2, rx2[i], rtol=1e-12, atol=1e-300)


def test_block_invalid_state_reports_path_and_time(monkeypatch):
    import twosite_polymer.sde as sde_mod

    real = sde_mod.step_block

    def broken(x1, x2, db1, db2, dt, beta, scheme):
        y1, y2, nc = real(x1, x2, db1, db2, dt, beta, scheme)
        if len(y1) > 2:
            y1 = y1.copy()
            y1[2] = np.nan
        return y1, y2, nc

    monkeypatch.setattr(sde_mod, "step_block", broken)
    with pytest.raises(StepError) as info:
        _integrate_block(
            beta=Beta(1.0), dt=0.01, n_steps=10, scheme=StepScheme.SPLITTING,
            master_seed=1, path_lo=100, block_size=4,
            record_steps=np.array([0, 10]),
        )
    assert info.value.path_index == 102
    assert info.value.t == pytest.approx(0.1)


def test_strong_self_convergence():
    """Richardson-style study on a fixed Brownian path: coarser steps are
    compared against a 64x finer reference driven by aggregated
    increments; the error should drop at strong order >= 1/2 (observed
    ~1 for this system), so halving dt cuts it by at least ~40%."""
    beta = Beta(1.0)
    t_end = 1.0
    n_fine = 2048
    dt_fine = t_end / n_fine
    rng = np.random.default_rng(42)
    errors = {StepScheme.EULER: [], StepScheme.SPLITTING: []}
    n_rep = 8
    for _ in range(n_rep):
        fine = rng.standard_normal((2, n_fine)) * math.sqrt(dt_fine)
        finals = {}
        for n_steps in (n_fine, 32, 64, 128):
            m = n_fine // n_steps
            inc = fine.reshape(2, n_steps, m).sum(axis=2)
            for scheme in errors:
                x1, x2 = np.array([1.0]), np.array([0.0])
                for k in range(n_steps):
                    x1, x2, _ = step_block(
                        x1, x2, inc[0, k : k + 1], inc[1, k : k + 1],
                        t_end / n_steps, beta, scheme,
                    )
                finals[(scheme, n_steps)] = (x1[0], x2[0])
        for scheme in errors:
            ref = finals[(scheme, n_fine)]
            errors[scheme].append([
                math.hypot(finals[(scheme, n)][0] - ref[0],
                           finals[(scheme, n)][1] - ref[1])
                for n in (32, 64, 128)
            ])
    for scheme, errs in errors.items():
        avg = np.mean(errs, axis=0)  # dt = 1/32, 1/64, 1/128
        assert avg[1] < 0.75 * avg[0], (scheme, avg)
        assert avg[2] < 0.75 * avg[1], (scheme, avg)

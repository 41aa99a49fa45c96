import numpy as np
import pytest

from lindlearn import dataset as ds
from lindlearn.integrate import IntegrationPlan, integrate, propagate, uniform_times
from lindlearn.superop import compile_model, operator_frame


def decay(t, y):
    return -y


def test_rk4_exponential():
    plan = IntegrationPlan((1.0,), substeps_per_interval=10, method="rk4")
    (y,) = integrate(decay, 1.0, plan)
    assert abs(y - 0.367879) < 1e-6


def test_rk4_order():
    errs = []
    for m in (10, 20):
        (y,) = integrate(decay, 1.0, IntegrationPlan((1.0,), substeps_per_interval=m))
        errs.append(abs(y - np.exp(-1)))
    assert 12 <= errs[0] / errs[1] <= 20


def test_euler_first_order():
    (y,) = integrate(decay, 1.0, IntegrationPlan((1.0,), substeps_per_interval=4, method="euler"))
    assert np.isclose(y, 0.75 ** 4)


def test_dense_trace_and_observation_times():
    plan = IntegrationPlan((0.5, 1.0), substeps_per_interval=5)
    out, (t, y) = integrate(decay, np.array([1.0, 2.0]), plan, dense=True)
    assert out.shape == (2, 2)
    assert len(t) == 11 and np.isclose(t[-1], 1.0)
    np.testing.assert_allclose(y[5], out[0])


def test_nonuniform_grid_is_allowed():
    plan = IntegrationPlan((0.1, 0.15, 1.0), substeps_per_interval=20)
    out = integrate(decay, 1.0, plan)
    np.testing.assert_allclose(out, np.exp(-np.array([0.1, 0.15, 1.0])), atol=1e-8)


def test_observation_at_start_is_initial_state():
    out = integrate(decay, 3.0, IntegrationPlan((0.0, 1.0)))
    assert out[0] == 3.0


def test_non_finite_aborts():
    with pytest.raises(FloatingPointError, match="t="), np.errstate(over="ignore", invalid="ignore"):
        integrate(lambda t, y: y ** 3, 10.0, IntegrationPlan((1.0,), substeps_per_interval=3))


@pytest.mark.parametrize("kwargs", [
    dict(observation_times=()),
    dict(observation_times=(1.0, 0.5)),
    dict(observation_times=(1.0,), substeps_per_interval=0),
    dict(observation_times=(1.0,), method="rk45"),
    dict(observation_times=(-1.0,)),
    dict(observation_times=(2.0,), t_end=1.0),
])
def test_plan_validation(kwargs):
    with pytest.raises(ValueError):
        IntegrationPlan(**kwargs)


def test_uniform_times():
    np.testing.assert_allclose(uniform_times(20.0, 4), [0, 5, 10, 15])


def test_lindblad_propagation_structure():
    preset = ds.load_preset("spin32-tdep")
    model = ds.sample_ground_truth(preset, 2)
    probe = ds.build_probe(preset, 2)
    system = compile_model(model.with_probe(probe))
    frame = operator_frame(model)
    rho0 = ds.sample_initial_state("haar_pure", 5)
    times = uniform_times(20.0, 100)
    X = propagate(system, model.theta, frame.to_real(rho0), IntegrationPlan(tuple(times)), probe=probe)
    worst = 0.0
    for x in X:
        rho = frame.from_real(x)
        assert abs(np.trace(rho) - 1) <= 1e-10
        assert np.max(np.abs(rho - rho.conj().T)) <= 1e-10
        worst = min(worst, np.linalg.eigvalsh(rho).min())
    assert worst >= -1e-6
    X2 = propagate(system, model.theta, frame.to_real(rho0), IntegrationPlan(tuple(times)), probe=probe)
    np.testing.assert_array_equal(X, X2)


def test_propagate_batch_matches_single():
    preset = ds.load_preset("spin32-tdep")
    model = ds.sample_ground_truth(preset, 2)
    probes = [ds.build_probe(preset, 2, b) for b in range(3)]
    system = compile_model(model.with_probe(probes[0]))
    frame = operator_frame(model)
    X0 = np.stack([frame.to_real(ds.sample_initial_state("haar_pure", 1, batch=b)) for b in range(3)], axis=1)
    plan = IntegrationPlan((0.5, 1.0, 2.0))
    batch = propagate(system, model.theta, X0, plan, probe=probes)
    for b in range(3):
        single = propagate(system, model.theta, X0[:, b], plan, probe=probes[b])
        np.testing.assert_allclose(batch[..., b], single, rtol=0, atol=1e-14)
    with pytest.raises(ValueError):
        propagate(system, model.theta, X0, plan, probe=probes[:2])

import numpy as np

from lindlearn import adjoint as adj
from lindlearn import dataset as ds
from lindlearn.superop import compile_model


def spin_problem(seed, n_ts=10, n_bs=2, t_final=5.0, probe="tdep", perturb=0.05):
    """A small spin-3/2 learning problem with a parameter point off the truth."""
    preset = ds.load_preset("spin32-tdep").updated(n_ts=n_ts, n_bs=n_bs, t_final=t_final, probe=probe)
    truth = ds.sample_ground_truth(preset, seed)
    data = ds.generate_dataset(truth, preset, seed)
    system = compile_model(truth.with_probe(data.batches[0].probe))
    problems = adj.prepare_batch(system, data.batches, preset.substeps, preset.method)
    rng = np.random.default_rng(seed)
    theta = truth.theta * (1 + perturb * rng.normal(size=truth.n_params))
    theta[truth.n_alpha:] = np.abs(theta[truth.n_alpha:])
    return system, problems, theta, truth, data


def central_fd(fun, theta, step):
    g = np.zeros_like(theta)
    for j in range(len(theta)):
        e = np.zeros_like(theta)
        e[j] = step
        g[j] = (fun(theta + e) - fun(theta - e)) / (2 * step)
    return g


def max_rel_err(g, ref, floor=1e-8):
    return float(np.max(np.abs(g - ref) / np.maximum(np.abs(ref), floor)))

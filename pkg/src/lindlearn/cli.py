"""Command-line front end (``lindlearn <command> ...``).

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from . import dataset as ds_mod
from . import efficiency as eff
from .engine import (LindbladModel, load_model, model_to_dict, save_model, spectral_analysis,
                     vectorize_liouvillian)
from .operators import PAULI
from .trainer import OptimizerConfig, train

OUTPUT_ENV = "LINDLEARN_OUTPUT"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- helpers ----------------------------------------------------------------------

def demo_model(name: str, gamma: float = 0.1) -> LindbladModel:
    """Small built-in models; ``qubit-dephasing`` is ``H = 0`` with ``J = sqrt(gamma) Z``."""
    if name != "qubit-dephasing":
        raise UsageError(f"unknown demo model {name!r}")
    z = PAULI[3]
    return LindbladModel.from_terms([("Z0", 0.0, z)], [("Z0", gamma, z)], family="pauli", n_sites=1)


def _out_dir(args, name: str) -> Path:
    base = args.out or os.path.join(os.environ.get(OUTPUT_ENV, "lindlearn-out"), name)
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _manifest(path: Path, command: str, config: dict) -> None:
    _write_json(path / "manifest.json", {
        "command": command,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config,
    })


def _preset(args) -> ds_mod.ExperimentPreset:
    try:
        preset = ds_mod.load_preset(args.preset)
    except FileNotFoundError as exc:
        raise UsageError(f"unknown preset {args.preset!r}") from exc
    if getattr(args, "config", None):
        with open(args.config) as fh:
            over = json.load(fh)
        try:
            preset = preset.updated(**over)
        except TypeError as exc:
            raise UsageError(f"bad preset override: {exc}") from exc
    return preset


def _opt_config(args, **defaults) -> OptimizerConfig:
    vals = dict(defaults)
    for key in ("optimizer", "lr", "epochs", "loss", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            vals[{"optimizer": "name", "loss": "loss_kind"}.get(key, key)] = v
    if getattr(args, "freeze_alpha", False):
        vals["freeze_alpha"] = True
    if getattr(args, "no_early_stop", False):
        vals["early_stop"] = False
    return OptimizerConfig(**vals)


def _plot_lines(path: Path, series: dict, xlabel: str, ylabel: str, logy: bool = True) -> bool:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return False
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, (x, y) in series.items():
        ax.plot(x, y, label=str(label))
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def _train_outputs(out: Path, report, ds, plot: bool) -> dict:
    report.export_log(out / "log.csv")
    report.save(out / "report.json")
    if any(r.status == "ok" for r in report.results):
        save_model(report.best_model(), out / "model_learned.json")
    if report.pred_mean is not None:
        with open(out / "predictions.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["batch", "time", "observable", "real", "pred_mean", "pred_std"])
            for s, b in enumerate(ds.batches):
                for n, t in enumerate(b.times):
                    for k, lab in enumerate(b.observables):
                        w.writerow([s, repr(float(t)), lab, repr(float(b.values[n, k])),
                                    repr(float(report.pred_mean[s, n, k])), repr(float(report.pred_std[s, n, k]))])
    if plot:
        loss_s = {f"init {r.index}": (np.arange(len(r.losses)), r.losses) for r in report.results}
        _plot_lines(out / "loss.png", loss_s, "epoch", "loss")
        if report.truth is not None:
            err = {}
            for r in report.results:
                err[f"E_alpha {r.index}"] = (np.arange(len(r.e_alpha)), r.e_alpha)
                err[f"E_gamma {r.index}"] = (np.arange(len(r.e_gamma)), r.e_gamma)
            _plot_lines(out / "errors.png", err, "epoch", "relative error")
    ea, eg = report.final_errors()
    return {"E_alpha": ea, "E_gamma": eg,
            "final_loss": [float(r.losses[-1]) for r in report.results],
            "status": [r.status for r in report.results]}


def _run_training(preset, seed, data_seed, cfg, n_ini, out: Path, plot: bool, log=print) -> dict:
    truth = ds_mod.sample_ground_truth(preset, data_seed)
    ds = ds_mod.generate_dataset(truth, preset, data_seed)
    ds_mod.save_dataset(ds, out / "dataset.json")
    save_model(truth, out / "model_true.json")

    def cb(i, e, lv, params):
        if e % 100 == 0:
            log(f"  init {i} epoch {e} loss {lv:.3e}")

    report = train(preset.family, ds, cfg, n_ini=n_ini, rng_seed=seed, truth=truth, callback=cb)
    summary = _train_outputs(out, report, ds, plot)
    _write_json(out / "summary.json", summary)
    failed = [r for r in report.results if r.status != "ok"]
    if failed:
        raise FloatingPointError(f"{len(failed)} initialization(s) diverged")
    return summary


# -- commands ---------------------------------------------------------------------

def cmd_gen_model(args) -> int:
    if args.demo:
        model = demo_model(args.demo, args.gamma)
    else:
        source = _preset(args) if args.preset else args.family
        model = ds_mod.sample_ground_truth(source, args.seed)
    path = Path(args.out) if args.out else _out_dir(args, "gen-model") / "model.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, path)
    print(path)
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    preset = _preset(args)
    model = load_model(args.model) if args.model else ds_mod.sample_ground_truth(preset, args.seed)
    out = _out_dir(args, f"gen-dataset-{preset.name}-{args.seed}")
    data = ds_mod.generate_dataset(model, preset, args.seed)
    ds_mod.save_dataset(data, out / "dataset.json")
    ds_mod.export_table(data, out / "table.csv")
    save_model(model, out / "model.json")
    _manifest(out, "gen-dataset", {"preset": preset.to_dict(), "seed": args.seed, "model": args.model})
    print(out)
    return EXIT_OK


def cmd_train(args) -> int:
    data = ds_mod.load_dataset(args.dataset)
    truth = load_model(args.truth) if args.truth else data.model
    cfg = _opt_config(args)
    out = _out_dir(args, "train")
    _manifest(out, "train", {"dataset": str(args.dataset), "seed": args.seed, "n_ini": args.n_ini,
                             "optimizer": cfg.to_dict()})
    report = train(data.preset.family, data, cfg, n_ini=args.n_ini, rng_seed=args.seed, truth=truth)
    summary = _train_outputs(out, report, data, args.plot)
    _write_json(out / "summary.json", summary)
    print(json.dumps(summary))
    return EXIT_NUMERIC if any(s != "ok" for s in summary["status"]) else EXIT_OK


def cmd_spectrum(args) -> int:
    if args.demo:
        model = demo_model(args.demo, args.gamma)
    elif args.model:
        model = load_model(args.model)
    elif args.preset:
        model = ds_mod.sample_ground_truth(_preset(args), args.seed)
    else:
        raise UsageError("give --model, --preset or --demo")
    spec = spectral_analysis(vectorize_liouvillian(model.with_probe(None)))
    result = {
        "dim": model.dim,
        "delta1": spec.delta1,
        "delta2": spec.delta2,
        "t_dc": spec.t_dc,
        "gapless": spec.gapless,
        "gap_multiplicity": spec.gap_multiplicity,
        "condition": spec.condition,
        "eigenvalues_re": [float(w.real) for w in spec.eigenvalues],
        "eigenvalues_im": [float(w.imag) for w in spec.eigenvalues],
    }
    if args.out:
        out = _out_dir(args, "spectrum")
        _write_json(out / "spectrum.json", result)
    print(f"Delta1 = {spec.delta1:.12g}")
    print(f"Delta2 = {spec.delta2:.12g}")
    print(f"t_dc = {spec.t_dc:.12g}")
    return EXIT_OK


def _closed_form_outputs(out: Path, kinds, plot: bool) -> dict:
    grid = np.linspace(0.1, 10.0, 1000)
    with open(out / "eta_closed_form.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_N_over_t_dc"] + [f"eta_{k}" for k in kinds])
        vals = {k: eff.eta_closed_form(grid, k) for k in kinds}
        for i, t in enumerate(grid):
            w.writerow([repr(float(t))] + [repr(float(vals[k][i])) for k in kinds])
    optima = {k: eff.find_optimal_tN(k) for k in kinds}
    if plot:
        _plot_lines(out / "eta_closed_form.png", {k: (grid, vals[k] / vals[k].max()) for k in kinds},
                    "t_N / t_dc", "eta (normalized)", logy=False)
    return optima


def cmd_efficiency(args) -> int:
    out = _out_dir(args, "efficiency")
    kinds = [args.kind] if args.kind else ["MAE", "MSE"]
    optima = _closed_form_outputs(out, kinds, args.plot)
    result = {"argmax_t_N_over_t_dc": optima}
    if args.preset:
        preset = _preset(args)
        model = ds_mod.sample_ground_truth(preset, args.seed)
        t_dc = eff.dissipative_time(model)
        p = eff.window_preset(preset, args.tN * t_dc, args.n_points)
        data = ds_mod.generate_dataset(model, p, args.seed)
        result["t_dc"] = t_dc
        result["eta_numeric"] = {k: eff.eta_numeric(model, data, k) for k in kinds}
    _write_json(out / "efficiency.json", result)
    _manifest(out, "efficiency", {k: v for k, v in vars(args).items() if k != "func"})
    for k, v in optima.items():
        print(f"argmax t_N ({k}) = {v:.4f} t_dc")
    return EXIT_OK


FIGURES = {
    "fig2": [("spin32-tdep", dict(name="adam", lr=1e-2, epochs=5000), 3)],
    "fig4": [("chain5-tindep", dict(name="lbfgs", epochs=1500), 2)],
    "figS2": [
        ("spin32-tindep", dict(name="adam", lr=1e-2, epochs=5000), 3),
        ("chain5-tdep-global", dict(name="lbfgs", epochs=300), 1),
        ("chain5-tdep-local", dict(name="lbfgs", epochs=1500), 1),
    ],
}


def _reproduce_fig5(args, out: Path) -> None:
    kinds = [args.kind] if args.kind else ["MAE", "MSE"]
    optima = _closed_form_outputs(out, kinds, args.plot)
    for k, v in optima.items():
        print(f"argmax t_N ({k}) = {v:.4f} t_dc")
    _write_json(out / "optima.json", optima)
    if args.closed_form_only:
        return
    kind = args.kind or "MSE"
    preset = ds_mod.load_preset("spin32-efficiency")
    model = ds_mod.sample_ground_truth(preset, args.data_seed)
    t_dc = eff.dissipative_time(model)
    cfg = _opt_config(args, **eff.SWEEP_DEFAULTS)
    n_ini = args.n_ini or 10
    rep = eff.sweep_tN(preset, [0.5, 1.0, 1.7, 3.3], 15, cfg.epochs, n_ini, model, seed=args.seed,
                       kind=kind, config=cfg, t_dc=t_dc)
    rep.export_eta(out / "eta_tN.csv")
    rep.export_curves(out / "egamma_tN.csv", "t_N_over_t_dc")
    repN = eff.sweep_N(preset, [10, 15, 25, 40], 1.7, cfg.epochs, n_ini, model, seed=args.seed,
                       kind=kind, config=cfg, t_dc=t_dc)
    repN.export_curves(out / "egamma_N.csv", "N")
    if args.plot:
        _plot_lines(out / "egamma_tN.png", {k: (np.arange(len(v[0])), rep.mean_curve(k)) for k, v in rep.curves.items()},
                    "epoch", "mean E_gamma")
        _plot_lines(out / "egamma_N.png", {k: (np.arange(len(v[0])), repN.mean_curve(k)) for k, v in repN.curves.items()},
                    "epoch", "mean E_gamma")
    _write_json(out / "fig5.json", {
        "t_dc": t_dc,
        "tN_final_mean_E_gamma": {str(k): rep.final_mean(k) for k in rep.curves},
        "tN_eta_numeric": {str(k): float(v) for k, v in zip(rep.tN_grid, rep.eta_numeric)},
        "N_final_mean_E_gamma": {str(k): repN.final_mean(k) for k in repN.curves},
    })


def cmd_reproduce(args) -> int:
    out = _out_dir(args, f"reproduce-{args.figure}")
    _manifest(out, f"reproduce {args.figure}", {k: v for k, v in vars(args).items() if k != "func"})
    marker = out / "FAILED"
    if marker.exists():
        marker.unlink()
    try:
        if args.figure == "fig5":
            _reproduce_fig5(args, out)
        else:
            for name, defaults, n_ini in FIGURES[args.figure]:
                sub = out / name
                sub.mkdir(exist_ok=True)
                preset = ds_mod.load_preset(name)
                cfg = _opt_config(args, **defaults)
                print(f"{name}: {cfg.name}, {cfg.epochs} epochs, N_ini={args.n_ini or n_ini}")
                summary = _run_training(preset, args.seed, args.data_seed, cfg, args.n_ini or n_ini, sub, args.plot)
                print(f"{name}: E_alpha={summary['E_alpha']:.4g} E_gamma={summary['E_gamma']:.4g}")
    except FloatingPointError as exc:
        marker.write_text(f"numerical failure: {exc}\n")
        raise
    except Exception:
        marker.write_text(traceback.format_exc())
        raise
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def _add_opt_flags(p):
    p.add_argument("--optimizer", choices=["adam", "gd", "lbfgs"])
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--loss", choices=["MSE", "MAE"])
    p.add_argument("--workers", type=int, help="initializations trained concurrently")
    p.add_argument("--no-early-stop", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lindlearn", description="Learn Lindblad model coefficients from observable time series.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-model", help="sample a ground-truth model")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset")
    g.add_argument("--family", choices=list(ds_mod.FAMILIES))
    g.add_argument("--demo", choices=["qubit-dephasing"])
    p.add_argument("--gamma", type=float, default=0.1, help="dissipation strength of the demo model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file overriding preset fields")
    p.add_argument("--out", help="output file")
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("gen-dataset", help="simulate a dataset for a preset")
    p.add_argument("--preset", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", help="model file (default: sampled from the preset's prior)")
    p.add_argument("--config", help="JSON file overriding preset fields")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", help="fit a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--truth", help="reference model for relative errors (default: the dataset's model)")
    p.add_argument("--n-ini", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--freeze-alpha", action="store_true")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--out")
    _add_opt_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("spectrum", help="Liouvillian gap and dissipative time")
    p.add_argument("--model")
    p.add_argument("--preset")
    p.add_argument("--demo", choices=["qubit-dephasing"])
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("efficiency", help="closed-form and numeric learning efficiency")
    p.add_argument("--kind", choices=["MAE", "MSE"])
    p.add_argument("--preset", help="also evaluate eta numerically for this preset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tN", type=float, default=1.7, help="window in units of t_dc")
    p.add_argument("--n-points", type=int, default=15)
    p.add_argument("--plot", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_efficiency)

    p = sub.add_parser("reproduce", help="run a figure's experiment")
    p.add_argument("figure", choices=["fig2", "fig4", "figS2", "fig5"])
    p.add_argument("--seed", type=int, default=0, help="initialization seed")
    p.add_argument("--data-seed", type=int, default=1, help="ground truth and dataset seed")
    p.add_argument("--n-ini", type=int)
    p.add_argument("--kind", choices=["MAE", "MSE"])
    p.add_argument("--closed-form-only", action="store_true", help="fig5: skip the training sweeps")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--out")
    _add_opt_flags(p)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"lindlearn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"lindlearn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

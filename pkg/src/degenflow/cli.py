"""Command-line front door.

Usage: degenflow <command> --config FILE [--seed N] [--out DIR]
[--threads N].  Commands run a batch job described by the config and
emit a JSON report, CSV data series, rendered figures, and a plot
script into the output directory.  Exit status: 0 success, 2 when a
model violates a standing assumption, 1 on internal errors.
"""

import argparse
import os
import sys
import traceback

import numpy as np

from . import __version__, calibration, classify, config as cfgmod, edge, empirics
from . import hitting, kernels, presets, report
from .errors import AssumptionViolated, DegenflowError
from .model import check_tangency


def _simulate_path(model, x0, dt, horizon, seed, record_every=None):
    n_steps = int(round(horizon / dt))
    if record_every is None:
        record_every = max(1, n_steps // 20000)
    if model.dim == 1:
        P, DP, Q, DQ = kernels.pack1d(model)
        x, y, _ = kernels.sim1d(
            P, DP, Q, DQ, float(x0), dt, n_steps, record_every,
            kernels.path_seed(seed, 0), 1.0, kernels._CUBIC,
        )
        x = x.reshape(-1, 1)
        y = y.reshape(-1, 1)
    else:
        C, CD = kernels.pack2d(model)
        v0, mode0 = empirics._pack_start(np.asarray(x0, dtype=float))
        x, y, _, _ = kernels.sim2d(
            C, CD, v0, mode0, dt, n_steps, record_every,
            kernels.path_seed(seed, 0), 1.0, kernels._CUBIC,
        )
    times = np.arange(x.shape[0]) * dt * record_every
    return times, x, y


def _preset_meta(cfg):
    if "preset" in cfg.model_spec:
        return presets.get_preset(cfg.model_spec["preset"])
    return {}


def _start_point(cfg, model):
    x0 = cfg.params.get("x0", _preset_meta(cfg).get("x0"))
    if x0 is None:
        x0 = 0.5 if model.dim == 1 else (0.5, 0.5)
    return x0


def cmd_classify(cfg, model, out):
    if model.dim == 1:
        scen = classify.classify_1d(model)
        payload = scen.summary()
    else:
        scen = classify.classify(model)
        payload = scen.summary()
        try:
            ba = classify.choose_betas(
                scen.vertex_spectra, espec=scen.edge_spectra,
                attractors=scen.attractors)
            payload["betas"] = list(ba.beta)
            payload["beta_slack"] = ba.slack
        except DegenflowError as exc:
            payload["betas"] = None
            payload["beta_note"] = str(exc)
    report.write_json(os.path.join(out, "report.json"), payload)
    if model.dim == 2:
        rows = [
            (s.k, s.lam1, s.lam2, s.kind)
            for s in sorted(scen.vertex_spectra, key=lambda s: s.k)
        ]
        report.write_csv(
            os.path.join(out, "vertex_spectra.csv"),
            ["k", "lam1", "lam2", "kind"], rows,
        )
    return payload


def cmd_simulate(cfg, model, out):
    p = cfg.params
    times, x, y = _simulate_path(model, _start_point(cfg, model), p["dt"],
                                 p["horizon"], cfg.seed)
    header = ["t"] + [f"x{i+1}" for i in range(x.shape[1])] + [
        f"y{i+1}" for i in range(y.shape[1])]
    rows = [tuple([t]) + tuple(xi) + tuple(yi) for t, xi, yi in zip(times, x, y)]
    report.write_csv(os.path.join(out, "trajectory.csv"), header, rows)
    report.figure_trajectory(out, times, x)
    if model.dim == 1:
        report.write_plot_script(out, [("trajectory.csv", "line", "t", "x1", "trajectory")])
    else:
        report.write_plot_script(out, [("trajectory.csv", "line", "x1", "x2", "trajectory")])
    payload = {"n_recorded": int(x.shape[0]), "final_state": x[-1].tolist()}
    report.write_json(os.path.join(out, "report.json"), payload)
    return payload


def cmd_cycle_analysis(cfg, model, out):
    p = cfg.params
    meta = _preset_meta(cfg)
    scen = classify.classify(model)
    times, x, y = _simulate_path(model, _start_point(cfg, model), p["dt"],
                                 p["horizon"], cfg.seed)
    rec = empirics.detect_cycling(times, y, p.get("cycle_r", meta.get("cycle_r", p["r"])))
    report.write_csv(
        os.path.join(out, "epochs.csv"),
        ["time", "edge", "depth"],
        list(zip(rec.times, rec.labels, rec.depths)),
    )
    payload = {
        "case": scen.case,
        "n_epochs": int(len(rec.times)),
        "edge_sequence_head": [int(v) for v in rec.labels[:12]],
    }
    if scen.case == "II":
        quad = scen.quad
        checkpoints = np.linspace(0.2, 1.0, 9) * times[-1]
        dists, fracs = [], []
        for tc in checkpoints:
            m = times <= tc
            mes = empirics.empirical_measure(times[m], x[m], bins=p["bins"], r0=p["r0"])
            vv, cmass = mes.vertex_vector()
            dists.append(empirics.gamma_distance([vv], quad)[0])
            fracs.append(float(cmass + np.sum(mes.edge_mass)))
        report.write_csv(
            os.path.join(out, "gamma_distance.csv"),
            ["t", "distance", "boundary_mass"],
            list(zip(checkpoints, dists, fracs)),
        )
        report.figure_series(out, checkpoints, dists, "t",
                             "distance to limit family", "gamma_distance")
        payload["gamma_distance_final"] = float(dists[-1])
        payload["quad_mu"] = [list(map(float, row)) for row in quad.mu]
        report.write_plot_script(out, [
            ("gamma_distance.csv", "line", "t", "distance", "gamma distance"),
            ("epochs.csv", "scatter", "time", "edge", "epochs"),
        ])
    else:
        report.write_plot_script(out, [("epochs.csv", "scatter", "time", "edge", "epochs")])
    report.write_json(os.path.join(out, "report.json"), payload)
    return payload


def cmd_convergence(cfg, model, out):
    p = cfg.params
    meta = _preset_meta(cfg)
    if model.dim == 1:
        scen = classify.classify_1d(model)
        attractors = scen.attractors
    else:
        attractors = classify.classify(model).attractors
    est = empirics.estimate_convergence(
        model, _start_point(cfg, model), attractors,
        n_runs=int(p.get("n_runs", meta.get("n_runs", p["runs"]))),
        horizon=p["horizon"], dt=p["dt"],
        trap_radius=p["trap_radius"], seed=cfg.seed,
    )
    labels = sorted(est.probabilities)
    report.write_csv(
        os.path.join(out, "convergence.csv"),
        ["attractor", "probability", "std_error"],
        [(k, est.probabilities[k], est.std_errors[k]) for k in labels],
    )
    report.figure_bars(out, labels, [est.probabilities[k] for k in labels],
                       [est.std_errors[k] for k in labels],
                       "capture frequency", "convergence")
    report.write_plot_script(out, [])
    payload = {
        "probabilities": est.probabilities,
        "std_errors": est.std_errors,
        "unresolved": est.unresolved,
        "n_runs": est.n_runs,
    }
    report.write_json(os.path.join(out, "report.json"), payload)
    return payload


def cmd_hitting_verify(cfg, model, out):
    p = cfg.params
    meta = _preset_meta(cfg).get("hitting", {})
    scen = classify.classify(model)
    ba = classify.choose_betas(scen.vertex_spectra, espec=scen.edge_spectra,
                               attractors=scen.attractors)
    r = p.get("r", meta.get("r", 0.15))
    eps = p.get("eps", meta.get("eps", 0.2))
    tuned = hitting.tune_parameters(scen, r=r, eps=eps)
    geom = hitting.build_geometry(scen, tuned)
    correctors = {
        k: edge.solve_corrector(model, k)
        for k in range(4)
        if geom.edge_class[k] == hitting.EDGE_GLUED
    }
    phi = hitting.extended_lyapunov(ba, correctors, geom)
    rng = np.random.default_rng(cfg.seed)
    samp = np.vstack([
        hitting.sample_region(geom, hitting.IN_SIGMA_O, 200, rng),
        hitting.sample_Q(geom, 200, rng),
    ])
    shift = hitting.calibrate_shift(phi, samp)
    spec = hitting.HittingSpec(lyapunov=phi, geometry=geom, K=tuned["K"], T=tuned["T"])
    n_paths = int(p.get("n_paths", meta.get("n_paths", 120)))
    cond = hitting.verify_conditions(
        spec, model, n_grid=int(p["n_grid"]), n_starts=int(p["n_starts"]),
        n_paths=n_paths, dt=p["dt"], seed=cfg.seed,
    )
    starts = [
        np.array([u, d])
        for u, d in zip(
            rng.uniform(0.3, 0.7, size=5),
            np.exp(np.linspace(np.log(geom.r_prime) - 1, np.log(geom.r_prime) - 7, 5)),
        )
    ]
    bound = hitting.validate_bound(spec, model, starts, n_paths=n_paths,
                                   dt=p["dt"], seed=cfg.seed + 1)
    sample_rows = []
    for j, row in enumerate(bound.rows):
        for t in row["samples"]:
            sample_rows.append((j, row["start"][0], row["start"][1], t))
    report.write_csv(os.path.join(out, "hitting_samples.csv"),
                     ["start_index", "x1", "x2", "time"], sample_rows)
    brows = [{k: v for k, v in row.items() if k != "samples"} for row in bound.rows]
    payload = {
        "tuned": tuned,
        "shift": shift,
        "conditions": cond.rows,
        "all_conditions_passed": cond.all_passed,
        "bound_rows": brows,
        "bound_passed": bound.all_passed,
    }
    report.write_json(os.path.join(out, "report.json"), payload)
    report.figure_bars(
        out, [f"start {j}" for j in range(len(brows))],
        [r_["mean"] for r_ in brows],
        [3 * r_["se"] for r_ in brows], "mean hitting time", "hitting_times",
    )
    report.write_plot_script(out, [
        ("hitting_samples.csv", "scatter", "start_index", "time", "hitting times"),
    ])
    return payload


def cmd_calc_tests(cfg, model, out):
    rows = calibration.check_exit_bounds_suite(seed=cfg.seed)
    lab = calibration.DriftMartingaleLab(nu=0.0, A=1.0, z_star=1.0, z_low=-1.0,
                                         n_paths=20000, seed=cfg.seed)
    rows.append({"name": "exponential_martingale",
                 **calibration.check_exponential_martingale(lab, 1.0, 3.0)})
    arc = calibration.arcsine_scenario(seed=cfg.seed, runs=2000, n_values=4000)
    rows.append({
        "name": "arcsine_occupation",
        "statistic": arc["ks_distance"],
        "bound": 0.02,
        "max_window": arc["max_window"],
        "min_window": arc["min_window"],
        "passed": bool(arc["ks_distance"] < 0.02
                       and arc["max_window"] > 0.95 and arc["min_window"] < 0.05),
    })
    hs = np.sort(arc["H"])
    grid = np.arange(1, len(hs) + 1) / len(hs)
    report.write_csv(os.path.join(out, "arcsine_cdf.csv"),
                     ["H", "empirical_cdf", "arcsine_cdf"],
                     list(zip(hs, grid, calibration.arcsine_cdf(hs))))
    report.write_csv(
        os.path.join(out, "suite.csv"),
        ["name", "passed"],
        [(r["name"], int(r["passed"])) for r in rows],
    )
    report.figure_series(out, hs, grid - calibration.arcsine_cdf(hs), "H",
                         "empirical minus exact CDF", "arcsine_deviation")
    report.write_plot_script(out, [
        ("arcsine_cdf.csv", "line", "H", "empirical_cdf", "arcsine cdf"),
    ])
    payload = {"rows": rows, "all_passed": all(r["passed"] for r in rows)}
    report.write_json(os.path.join(out, "report.json"), payload)
    return payload


_COMMANDS = {
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "cycle-analysis": cmd_cycle_analysis,
    "convergence": cmd_convergence,
    "hitting-verify": cmd_hitting_verify,
    "calc-tests": cmd_calc_tests,
}


def run(cfg):
    """Execute a parsed config; returns the report payload."""
    out = cfg.out
    os.makedirs(out, exist_ok=True)
    model = cfgmod.build_model(cfg)
    check_tangency(model)
    report.write_metadata(out, __version__, cfg)
    payload = _COMMANDS[cfg.command](cfg, model, out)
    return payload


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="degenflow",
        description="batch analysis of boundary-degenerate diffusions",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker pool cap for compiled kernels")
    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = cfgmod.parse_config(fh.read())
        if cfg.command != args.command:
            cfg.command = args.command
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        elif "DEGENFLOW_OUT" in os.environ and cfg.out == "out":
            cfg.out = os.environ["DEGENFLOW_OUT"]
        if args.threads is not None:
            cfg.threads = args.threads
        if cfg.threads > 1:
            try:
                import numba

                numba.set_num_threads(cfg.threads)
            except Exception:
                pass
        run(cfg)
    except AssumptionViolated as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return 2
    except DegenflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

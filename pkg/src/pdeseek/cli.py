"""Experiment harness: side-by-side comparisons, sweeps, seeking runs, signals.

Every command is deterministic under fixed (flags, seed); the only
non-reproducible bytes are the wall_time column values of sweep CSVs. Exit
codes: 0 ok, 2 validation problem, 3 numerical blowup, 4 training divergence.
"""

import argparse
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .core import (NumericalBlowup, Scenario, TrainingDivergence,
                   ValidationError, load_scenario, validate_scenario,
                   write_columns_csv, write_field_csv, write_trace_csv)
from .dither import (analytic_dither, demod_curvature, demod_gradient,
                     diffusion_residual_certificate, distributed_dither,
                     numeric_dither, rad_series_dither, stefan_series_dither,
                     stefan_continuation_dither)
from .pde_solvers import solve_ibvp, stefan_front
from .pinn import (TrainConfig, desk_config, extract_signal, mse,
                   paper_config, train)
from .simloop import run_closed_loop

FIVE_CLASSES = ("diffusion", "rad", "transport", "wave", "stefan")
ES_CLASSES = FIVE_CLASSES + ("distributed_delay",)


def default_scenario(pde_class, seed=0):
    """Reference operating point per class (the study defaults)."""
    if pde_class == "diffusion":
        return Scenario(seed=seed)
    if pde_class == "transport":
        return Scenario(pde_class="transport", domain=3.0, t_end=100.0, seed=seed)
    if pde_class == "wave":
        return Scenario(pde_class="wave", n_x=128, dt=1.0 / 128.0,
                        meas_delay=10.0, t_end=120.0, seed=seed)
    if pde_class == "rad":
        return Scenario(pde_class="rad", t_end=100.0, seed=seed)
    if pde_class == "stefan":
        return Scenario(pde_class="stefan", t_end=60.0, seed=seed)
    if pde_class == "distributed_delay":
        return Scenario(pde_class="distributed_delay", t_end=100.0, seed=seed)
    raise ValidationError(
        f"unknown class {pde_class!r}; seeking runs support {', '.join(ES_CLASSES)}")


def _config_for(scale, seed, **overrides):
    if scale == "paper":
        return paper_config(seed=seed, **overrides)
    return desk_config(seed=seed, **overrides)


def cmd_compare(args):
    """Numeric vs trained-network solve of the shared comparison problem."""
    cls = args.pde
    if cls not in FIVE_CLASSES:
        raise ValidationError(
            f"compare supports {', '.join(FIVE_CLASSES)}; got {cls!r}")
    seed = args.seed if args.seed is not None else 42
    scen = default_scenario(cls, seed)
    w5 = 5.0 * scen.omega

    def drive(t):
        return math.sin(w5 * t)

    window = 2.0 * (2.0 * math.pi / w5)
    n_x = 64
    n_t_out = 33
    dt_solve = {"diffusion": 2e-4, "rad": 2e-4, "stefan": 2e-4,
                "wave": (scen.domain if cls != "stefan" else 1.0) / n_x,
                "transport": window / (n_t_out - 1)}[cls]
    steps = max(1, int(round(window / dt_solve)))
    dt_solve = window / steps
    stride = max(1, steps // (n_t_out - 1))
    t_out = np.arange(0, steps + 1, stride) * dt_solve
    x, t_out, numeric = solve_ibvp(cls, scen, drive, n_x, dt_solve, t_out)

    cfg = _config_for(args.scale, seed)
    trained = train(cls, scen, cfg, mode="ibvp", drive=drive)
    from .pinn import _forward
    X, T = np.meshgrid(x, t_out, indexing="ij")
    pts = np.column_stack([X.ravel(), T.ravel()])
    S, _ = _forward(trained.net, pts)
    predicted = S[0][:, 0].reshape(X.shape).T  # (n_t, n_x)
    err = np.abs(predicted - numeric)

    out = args.out_dir
    write_field_csv(os.path.join(out, f"compare_{cls}_numeric.csv"), x, t_out, numeric)
    write_field_csv(os.path.join(out, f"compare_{cls}_pinn.csv"), x, t_out, predicted)
    write_field_csv(os.path.join(out, f"compare_{cls}_abserr.csv"), x, t_out, err)
    print(f"compare {cls}: mean_abs_err={np.mean(err):.6g} max_abs_err={np.max(err):.6g}")

    if cls == "stefan":
        # trajectory-route baseline: trained boundary signal against the
        # continuation reference, side by side with the truncated series
        traj = train(cls, scen, _config_for(args.scale, seed), mode="trajectory")
        tg = np.linspace(0.0, scen.dither_period(), 201)
        front = stefan_front(tg, scen.front_scale, scen.front_rate)
        ref = stefan_continuation_dither(tg, front, scen.amp, scen.omega)
        net_err = float(np.mean(np.abs(extract_signal(traj, tg) - ref)))
        series_err = float(np.mean(np.abs(
            stefan_series_dither(tg, scen.amp, scen.omega) - ref)))
        print(f"compare stefan trajectory: net_mean_err={net_err:.6g} "
              f"series_mean_err={series_err:.6g}")
    return 0


def _sweep_cell(cls, scen, base, param, value, seed):
    cfg = TrainConfig(**{**base, "seed": seed})
    if param == "eta":
        cfg.eta = value
    else:
        cfg.batch = int(value)
    cfg.validate()
    start = time.perf_counter()
    trained = train(cls, scen, cfg, mode="trajectory")
    elapsed = time.perf_counter() - start
    tg = np.linspace(0.0, scen.dither_period(), 201)
    return mse(extract_signal(trained, tg), analytic_dither(cls, scen, tg)), elapsed


def cmd_sweep(args):
    """Hyperparameter sweep over learning rate or batch size."""
    if args.param == "eta":
        values = [8e-3, 1e-3, 1e-4]
    else:
        values = [32, 128, 512]
    if args.values:
        values = [float(v) if args.param == "eta" else int(v)
                  for v in args.values.split(",")]
    if len(values) < 2:
        raise ValidationError("sweep needs at least 2 values")
    if args.seeds < 1:
        raise ValidationError("sweep needs at least 1 seed")
    base_seed = args.seed if args.seed is not None else 42
    seeds = [base_seed + i for i in range(args.seeds)]
    cls = args.pde
    scen = default_scenario(cls, base_seed)
    scen = Scenario(**{**scen.__dict__, "domain": 1.0, "t_end": scen.dither_period()})
    validate_scenario(scen)
    base = dict(iterations=args.iterations, n_residual=512, batch=512,
                n_bc=128, width=32, hidden_layers=3)

    cells = [(value, seed) for value in values for seed in seeds]
    results = {}
    with ThreadPoolExecutor(max_workers=min(4, os.cpu_count() or 1)) as pool:
        futs = {cell: pool.submit(_sweep_cell, cls, scen, base, args.param,
                                  cell[0], cell[1])
                for cell in cells}
        for cell, fut in futs.items():
            try:
                results[cell] = fut.result()
            except (TrainingDivergence, NumericalBlowup):
                results[cell] = (float("nan"), float("nan"))

    rows_value, rows_seed, rows_mse, rows_wall = [], [], [], []
    for value, seed in cells:
        m, wall = results[(value, seed)]
        rows_value.append(value)
        rows_seed.append(seed)
        rows_mse.append(m)
        rows_wall.append(wall)
    path = os.path.join(args.out_dir, f"sweep_{args.param}.csv")
    write_columns_csv(path, ("value", "seed", "mse", "wall_time"),
                      (rows_value, rows_seed, rows_mse, rows_wall))
    for value in values:
        cell_mse = [results[(value, s)][0] for s in seeds]
        print(f"sweep {args.param}={value:g}: median_mse={np.median(cell_mse):.6g}")
    return 0


def cmd_es(args):
    """Closed-loop seeking run; writes the signal trace and prints bands."""
    if args.scenario:
        scen = load_scenario(args.scenario)
        if args.pde and args.pde != scen.pde_class:
            raise ValidationError(
                f"--pde {args.pde!r} conflicts with scenario class {scen.pde_class!r}")
    else:
        if not args.pde:
            raise ValidationError(
                f"es needs --pde or --scenario; classes: {', '.join(ES_CLASSES)}")
        scen = default_scenario(args.pde, args.seed if args.seed is not None else 0)
    if args.t_end:
        scen = Scenario(**{**scen.__dict__, "t_end": args.t_end})
    validate_scenario(scen)
    trace = run_closed_loop(scen)
    path = os.path.join(args.out_dir, f"es_{scen.pde_class}_trace.csv")
    write_trace_csv(trace, path)

    tail = slice(int(0.9 * len(trace)), None)
    band_theta = float(np.mean(np.abs(trace.Theta[tail] - scen.theta_star)))
    band_y = float(np.mean(np.abs(trace.y[tail] - scen.y_star)))
    band_input = float(np.mean(np.abs(trace.theta[tail] - scen.theta_star)))
    init_err = abs(scen.theta_hat0 - scen.theta_star)
    theta_hat_final = float(np.mean(np.abs(
        (trace.theta[tail] - trace.S[tail]) - scen.theta_star)))
    first_order = scen.amp + 1.0 / scen.omega
    second_order = scen.amp**2 + 1.0 / scen.omega**2
    print(f"es {scen.pde_class}: final-band |Theta-opt|={band_theta:.4g} "
          f"|y-opt|={band_y:.4g} |theta-opt|={band_input:.4g}")
    print(f"   orders: O(a + 1/w)={first_order:.4g} O(a^2 + 1/w^2)={second_order:.4g}")
    converged = theta_hat_final < 0.1 * init_err if init_err > 0 else True
    print(f"   converged={converged} (estimate band {theta_hat_final:.4g} "
          f"vs initial error {init_err:.4g})")
    return 0


def cmd_dither(args):
    """Trajectory signal by two routes over two dither periods."""
    cls = args.pde
    if cls not in ES_CLASSES:
        raise ValidationError(f"unknown class {cls!r}; expected {', '.join(ES_CLASSES)}")
    seed = args.seed if args.seed is not None else 42
    scen = default_scenario(cls, seed)
    scen = Scenario(**{**scen.__dict__, "domain": 1.0 if cls != "transport" else 1.0})
    period = scen.dither_period()
    tg = np.linspace(0.0, 2.0 * period, 401)

    if cls == "distributed_delay":
        s_analytic = distributed_dither(tg, scen.amp, scen.omega, scen.domain)
    else:
        s_analytic = analytic_dither(cls, scen, tg)

    method = args.method
    if method == "analytic":
        s_method = s_analytic.copy()
    elif method == "numeric":
        if cls == "diffusion":
            resid, face, slope = diffusion_residual_certificate(
                scen.amp, scen.omega, scen.domain)
            raise ValidationError(
                "numeric route refuses the diffusion class: marching the "
                "sideways problem is ill posed; use --method analytic, whose "
                f"residual certificate here is {resid:.3g} (face {face:.3g}, "
                f"slope {slope:.3g})")
        if cls == "distributed_delay":
            # direct quadrature of the measure average
            xi = np.linspace(0.0, scen.domain, 2049)
            s_method = np.array([np.trapezoid(scen.amp * np.sin(scen.omega * (t + xi)), xi)
                                 / scen.domain for t in tg])
        else:
            s_method = numeric_dither(cls, scen, tg)
    else:  # pinn
        if cls == "distributed_delay":
            raise ValidationError(
                "pinn route needs a PDE field; distributed_delay supports "
                "analytic and numeric")
        cfg = _config_for(args.scale, seed)
        trained = train(cls, scen, cfg, mode="trajectory")
        s_method = extract_signal(trained, tg)

    err = np.abs(s_method - s_analytic)
    out = args.out or os.path.join(args.out_dir, f"dither_{cls}_{method}.csv")
    write_columns_csv(out, ("t", "S_analytic", "S_method", "abs_err"),
                      (tg, s_analytic, s_method, err))
    print(f"dither {cls} {method}: max_abs_err={np.max(err):.6g} "
          f"mse={np.mean(err**2):.6g}")

    if cls in ("rad", "stefan") and method == "analytic":
        # truncation tail study for the series routes
        orders = list(range(0, 11)) if cls == "rad" else list(range(1, 7))
        tails = []
        prev = None
        for n in orders:
            if cls == "rad":
                cur = rad_series_dither(tg, scen.amp, scen.omega, scen.domain,
                                        scen.eps, scen.adv, scen.reaction, n_terms=n)
            else:
                cur = stefan_series_dither(tg, scen.amp, scen.omega, n_terms=n)
            tails.append(0.0 if prev is None else float(np.max(np.abs(cur - prev))))
            prev = cur
        tail_path = out.replace(".csv", "_tail.csv")
        write_columns_csv(tail_path, ("n_max", "tail"), (orders, tails))
        print(f"dither {cls} series tail at n_max={orders[-1]}: {tails[-1]:.3g}")
    if cls == "stefan" and method in ("numeric", "pinn"):
        front = stefan_front(tg, scen.front_scale, scen.front_rate)
        ref = stefan_continuation_dither(tg, front, scen.amp, scen.omega)
        print(f"dither stefan note: series-vs-continuation gap "
              f"{np.max(np.abs(s_analytic - ref)):.3g}; method-vs-continuation "
              f"{np.max(np.abs(s_method - ref)):.3g}")
    return 0


def cmd_pinn_train(args):
    """Train one network and persist its loss history and boundary trace."""
    cls = args.pde
    if cls not in FIVE_CLASSES:
        raise ValidationError(
            f"pinn-train supports {', '.join(FIVE_CLASSES)}; got {cls!r}")
    seed = args.seed if args.seed is not None else 42
    scen = default_scenario(cls, seed)
    cfg = _config_for(args.scale, seed)
    if args.mode == "ibvp":
        w5 = 5.0 * scen.omega
        trained = train(cls, scen, cfg, mode="ibvp", drive=lambda t: math.sin(w5 * t))
    else:
        trained = train(cls, scen, cfg, mode="trajectory")
    hist = np.array(trained.history)
    loss_path = os.path.join(args.out_dir, f"pinn_{cls}_{args.mode}_loss.csv")
    write_columns_csv(loss_path, ("step", "total", "pde", "bc", "ic", "data"),
                      tuple(hist[:, i] for i in range(6)))
    tg = np.linspace(0.0, scen.dither_period(), 201)
    sig = extract_signal(trained, tg)
    sig_path = os.path.join(args.out_dir, f"pinn_{cls}_{args.mode}_signal.csv")
    write_columns_csv(sig_path, ("t", "S"), (tg, sig))
    print(f"pinn-train {cls} {args.mode}: final_total={hist[-1, 1]:.6g} "
          f"first_total={hist[0, 1]:.6g}")
    if args.mode == "trajectory":
        print(f"   extracted-signal mse vs analytic: "
              f"{mse(sig, analytic_dither(cls, scen, tg)):.6g}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="pdeseek",
        description="Extremum seeking through PDE actuators: solvers, "
                    "trajectory signals, networks, closed loops.")
    p.add_argument("--seed", type=int, default=None, help="base RNG seed")
    p.add_argument("--out-dir", default=os.environ.get("PDESEEK_OUT", "."),
                   help="output directory (env PDESEEK_OUT)")
    p.add_argument("--scale", choices=("desk", "paper"), default="desk",
                   help="training size: desk (CI) or paper (full)")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compare", help="numeric vs network on the shared IBVP")
    c.add_argument("--pde", required=True)
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep", help="hyperparameter sweep")
    s.add_argument("--param", choices=("eta", "batch"), required=True)
    s.add_argument("--values", default=None, help="comma-separated override")
    s.add_argument("--seeds", type=int, default=3)
    s.add_argument("--pde", default="transport")
    s.add_argument("--iterations", type=int, default=1500)
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("es", help="closed-loop seeking run")
    e.add_argument("--pde", default=None)
    e.add_argument("--scenario", default=None, help="scenario file (ini)")
    e.add_argument("--t-end", type=float, default=None)
    e.set_defaults(func=cmd_es)

    d = sub.add_parser("dither", help="trajectory-generation signal routes")
    d.add_argument("--pde", required=True)
    d.add_argument("--method", choices=("analytic", "numeric", "pinn"),
                   required=True)
    d.add_argument("--out", default=None)
    d.set_defaults(func=cmd_dither)

    t = sub.add_parser("pinn-train", help="train one network, write history")
    t.add_argument("--pde", required=True)
    t.add_argument("--mode", choices=("trajectory", "ibvp"), default="trajectory")
    t.set_defaults(func=cmd_pinn_train)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    os.makedirs(args.out_dir, exist_ok=True)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalBlowup as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except TrainingDivergence as exc:
        print(f"training divergence: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

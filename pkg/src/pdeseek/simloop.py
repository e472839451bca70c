"""Closed-loop driver, averaged-system verifier, decay-functional monitor.

The loop wires plant, static map, trajectory signal and controller at one
shared dt. Plants start on the trajectory-consistent state (field = dither
trajectory field + initial estimate) so runs begin settled rather than with
an actuation transient; delay histories are initialized the same way.
"""

import math

import numpy as np

from .core import (Field, NumericalBlowup, SimTrace, ValidationError,
                   uniform_grid, validate_scenario)
from .dither import (diffusion_dither_derivatives, diffusion_dither_field,
                     distributed_dither, rad_series_dither,
                     stefan_continuation_dither, transport_dither, wave_dither)
from .escontrol import (EsState, StaticMap, backstepping_forward,
                        control_diffusion_fullstate,
                        control_diffusion_measured, control_distributed,
                        control_rad, control_stefan,
                        control_transport_predictor, control_wave,
                        corner_thresholds, lowpass_step, lyapunov_weights)
from .pde_solvers import (DiffusionSolver, RadSolver, StefanSolver,
                          TransportDelay, WaveSolver, stefan_front)


def _trace_arrays(n):
    return {name: np.zeros(n) for name in
            ("t", "theta", "Theta", "y", "U", "S", "Hhat", "G")}


def _curvature_field(values, dx):
    """Second spatial difference with zero-slope ghost left, one-sided right."""
    out = np.empty_like(values)
    out[0] = (2.0 * values[1] - 2.0 * values[0]) / dx**2
    out[1:-1] = (values[:-2] - 2.0 * values[1:-1] + values[2:]) / dx**2
    out[-1] = (2.0 * values[-1] - 5.0 * values[-2] + 4.0 * values[-3]
               - values[-4]) / dx**2
    return out


def run_closed_loop(scen, fullstate_reconstruct="spatial"):
    """Run the seeking loop for the scenario's class; returns a SimTrace.

    The diffusion class uses the measured-output law; the full-state form is
    exercised by `diffusion_law_equivalence`. fullstate_reconstruct picks how
    wave and stefan rebuild the highest time derivative their laws need:
    "spatial" applies the plant operator to the current snapshot (wave
    acceleration = curvature of the position error; stefan rate = scaled
    curvature), "backward" differences two consecutive snapshots. Both
    cancel the unknown optimizer offset because the operator is a pure
    second derivative. The spatial default matters for the wave class: a
    backward difference of the drive-face velocity error hands the just
    applied control back to the damping term at gain corner/dt, which
    diverges. The rad law always differences snapshots: its reaction term
    does not annihilate constants, so the operator route would need the
    unknown optimizer.
    """
    validate_scenario(scen)
    if fullstate_reconstruct not in ("spatial", "backward"):
        raise ValidationError(
            f"fullstate_reconstruct must be 'spatial' or 'backward', got {fullstate_reconstruct!r}")
    cls = scen.pde_class
    dt = scen.dt
    steps = int(round(scen.t_end / dt))
    n_log = steps + 1
    cols = _trace_arrays(n_log)
    qmap = StaticMap(scen.curvature, scen.theta_star, scen.y_star)
    a, w, D = scen.amp, scen.omega, scen.domain
    shift = scen.meas_delay  # dither advance under measurement delay
    dither_on = a != 0.0
    if cls == "distributed_delay":
        # |uniform-measure transfer|^2: the advanced-average signal form
        # round-trips through the measured window to exactly a sin(w t)
        dist_gamma = (2.0 - 2.0 * math.cos(w * D)) / (w * D) ** 2
        if dist_gamma < 1e-12:
            raise ValidationError(
                "dither frequency is unobservable through the uniform measure "
                "window (omega * domain at a multiple of 2 pi)")

    def dither(t):
        if not dither_on:
            return 0.0
        ts = t + shift
        if cls == "diffusion":
            return float(diffusion_dither_field(D, ts, a, w))
        if cls == "transport":
            return float(transport_dither(ts, a, w, D))
        if cls == "wave":
            return float(wave_dither(ts, a, w, D))
        if cls == "rad":
            return float(rad_series_dither(ts, a, w, D, scen.eps, scen.adv, scen.reaction))
        if cls == "stefan":
            s = stefan_front(t, scen.front_scale, scen.front_rate)
            return float(stefan_continuation_dither(ts, s, a, w))
        return float(distributed_dither(ts, a, w, D, gamma=dist_gamma))

    # predictor window: the plant delay for delay classes, else the
    # measurement delay when one is configured
    if cls in ("transport", "distributed_delay"):
        pred_window = D + shift
    else:
        pred_window = shift
    pred_len = int(round(pred_window / dt)) + 1 if pred_window > 0 else 0
    es = EsState(dt=dt, corner=scen.corner, gain=scen.gain,
                 theta_hat=scen.theta_hat0, predictor_len=pred_len)
    # estimate window prefilled from the settled pre-trajectory, so the
    # period averages start at their design values instead of ramping
    # through raw-demodulation scale (8 y / a^2) while the window fills
    if dither_on:
        n_hist = int(math.ceil(2.0 * math.pi / (w * dt))) + 1
        for i in range(n_hist):
            tau = (i - n_hist) * dt
            es.update_estimates(qmap(scen.theta_hat0 + a * math.sin(w * tau)),
                                tau, a, w)

    # plant construction with trajectory-consistent initial state
    x = uniform_grid(D, scen.n_x)
    prev_u_field = None
    prev_alpha = None
    if cls == "diffusion":
        init = (diffusion_dither_field(x, shift, a, w) if dither_on else np.zeros_like(x)) \
            + scen.theta_hat0
        plant = DiffusionSolver(D, scen.n_x, dt, init=init)
    elif cls == "rad":
        init = (rad_series_dither(shift, a, w, x, scen.eps, scen.adv, scen.reaction)
                if dither_on else np.zeros_like(x)) + scen.theta_hat0
        plant = RadSolver(D, scen.n_x, dt, scen.eps, scen.adv, scen.reaction, init=init)
    elif cls == "wave":
        dx = D / scen.n_x
        if dt > dx:
            raise ValidationError(
                f"wave run needs dt <= {dx:.6g} (CFL at n_x={scen.n_x}), got {dt}")
        init = (a * np.cos(w * x) * math.sin(w * shift) if dither_on else np.zeros_like(x)) \
            + scen.theta_hat0
        vel = a * w * np.cos(w * x) * math.cos(w * shift) if dither_on else np.zeros_like(x)
        plant = WaveSolver(D, scen.n_x, dt, init=init, init_velocity=vel)
    elif cls == "stefan":
        z = uniform_grid(1.0, scen.n_x)
        s0 = scen.front_scale
        init = (diffusion_dither_field(z * s0, shift, a, w) if dither_on
                else np.zeros_like(z)) + scen.theta_hat0
        plant = StefanSolver(scen.front_scale, scen.front_rate, scen.n_x, dt, init=init)
    else:
        n_delay = int(round(D / dt))
        hist_t = (np.arange(n_delay + 1) - n_delay) * dt
        hist = scen.theta_hat0 + np.array([dither(tv) for tv in hist_t])
        plant = TransportDelay(D, dt, init=hist if dither_on or scen.theta_hat0 else 0.0)
        if cls == "distributed_delay":
            # measure-averaged readout needs the whole window, keep our own copy
            window = list(hist)

    # measurement delay history: plant output back-extrapolated on the
    # steady trajectory Theta(s) = theta_hat0 + a sin(w (s + shift))
    meas_steps = int(round(shift / dt))
    meas_hist = [scen.theta_hat0 + (a * math.sin(w * (i - meas_steps) * dt + w * shift)
                                    if dither_on else 0.0)
                 for i in range(meas_steps)]

    def readout():
        if cls == "distributed_delay":
            # uniform measure: trapezoid average of the input over [t-D, t]
            return float(np.trapezoid(window, dx=dt) / D)
        return plant.readout()

    theta_hat_prev = scen.theta_hat0
    for k in range(n_log):
        t = k * dt
        S = dither(t)
        theta = es.theta_hat + S
        Theta = readout()
        if meas_steps:
            meas_hist.append(Theta)
            Theta_meas = meas_hist.pop(0)
        else:
            Theta_meas = Theta
        try:
            y = qmap(Theta_meas)
        except OverflowError:
            raise NumericalBlowup(f"plant output overflowed at step {k}") from None
        if not math.isfinite(y):
            raise NumericalBlowup(f"plant output diverged at step {k}")
        if dither_on:
            es.update_estimates(y, t, a, w)
        else:
            es.grad = es.curv = es.grad_raw = es.curv_raw = 0.0

        if cls == "diffusion":
            U = control_diffusion_measured(es, Theta, a * math.sin(w * t) if dither_on else 0.0)
        elif cls == "transport":
            U = control_transport_predictor(es)
        elif cls == "distributed_delay":
            U = control_distributed(es, D)
        elif cls == "rad":
            alpha = plant.values
            beta = (rad_series_dither(t + shift, a, w, x, scen.eps, scen.adv, scen.reaction)
                    if dither_on else np.zeros_like(x))
            bar = alpha - beta
            if prev_alpha is None:
                u_field = np.zeros_like(x)
            else:
                u_field = (bar - prev_alpha) / dt
            prev_alpha = bar
            U = control_rad(es, x, u_field, scen.eps, scen.adv, scen.reaction)
        elif cls == "wave":
            beta_t = (a * w * np.cos(w * x) * math.cos(w * (t + shift))
                      if dither_on else np.zeros_like(x))
            u_field = plant.velocity - beta_t
            if fullstate_reconstruct == "spatial":
                beta = (a * np.cos(w * x) * math.sin(w * (t + shift))
                        if dither_on else np.zeros_like(x))
                u_t_field = _curvature_field(plant.values - beta, D / scen.n_x)
            else:
                u_t_field = (np.zeros_like(x) if prev_u_field is None
                             else (u_field - prev_u_field) / dt)
                prev_u_field = u_field
            U = control_wave(es, x, u_field, u_t_field, scen.wave_rho)
        else:  # stefan
            s_now = plant.front(t)
            xs = plant.z * s_now
            beta = (diffusion_dither_field(xs, t + shift, a, w)
                    if dither_on else np.zeros_like(xs))
            bar = plant.values - beta
            if fullstate_reconstruct == "spatial":
                u_field = _curvature_field(bar, s_now / scen.n_x)
            else:
                u_field = (np.zeros_like(xs) if prev_alpha is None
                           else (bar - prev_alpha) / dt)
                prev_alpha = bar
            U = control_stefan(es, xs, u_field)

        cols["t"][k] = t
        cols["theta"][k] = theta
        cols["Theta"][k] = Theta
        cols["y"][k] = y
        cols["U"][k] = U
        cols["S"][k] = S
        cols["Hhat"][k] = es.curv
        cols["G"][k] = es.grad

        if k < steps:
            theta_next = es.theta_hat + dither(t + dt)
            if not math.isfinite(theta_next):
                raise NumericalBlowup(f"control signal diverged at step {k}")
            if cls == "distributed_delay":
                window.pop(0)
                window.append(theta_next)
            plant.step(theta_next)
    return SimTrace(**cols)


def _curvature_field_hi(values, dx):
    """Fourth-order interior curvature, falling back to _curvature_field near faces.

    The equivalence study needs a reconstruction discretized independently of
    the measured form: trapezoid against the plain 3-point stencil telescopes
    algebraically onto the boundary terms, which collapses both laws to the
    same arithmetic and leaves no refinement trend to observe.
    """
    out = _curvature_field(values, dx)
    out[2:-2] = (-values[:-4] + 16.0 * values[1:-3] - 30.0 * values[2:-2]
                 + 16.0 * values[3:-1] - values[4:]) / (12.0 * dx * dx)
    return out


def diffusion_law_equivalence(scen, reconstruct="spatial"):
    """Measured-output loop with a shadow full-state law on the same states.

    Both laws see identical plant trajectories; the shadow keeps its own
    filter. Returns the two filtered control series and their max gap, which
    quantifies the discrete integration-by-parts identity between the forms.
    """
    validate_scenario(scen)
    if scen.pde_class != "diffusion":
        raise ValidationError("equivalence study is defined for the diffusion class")
    if reconstruct not in ("spatial", "backward"):
        raise ValidationError(f"reconstruct must be 'spatial' or 'backward', got {reconstruct!r}")
    dt = scen.dt
    steps = int(round(scen.t_end / dt))
    qmap = StaticMap(scen.curvature, scen.theta_star, scen.y_star)
    a, w, D = scen.amp, scen.omega, scen.domain
    x = uniform_grid(D, scen.n_x)
    dx = D / scen.n_x
    es = EsState(dt=dt, corner=scen.corner, gain=scen.gain, theta_hat=scen.theta_hat0)
    shadow = EsState(dt=dt, corner=scen.corner, gain=scen.gain, theta_hat=scen.theta_hat0)
    n_hist = int(math.ceil(2.0 * math.pi / (w * dt))) + 1
    for i in range(n_hist):
        tau = (i - n_hist) * dt
        es.update_estimates(qmap(scen.theta_hat0 + a * math.sin(w * tau)), tau, a, w)
    init = diffusion_dither_field(x, 0.0, a, w) + scen.theta_hat0
    plant = DiffusionSolver(D, scen.n_x, dt, init=init)
    u_main = np.zeros(steps + 1)
    u_shadow = np.zeros(steps + 1)
    prev_bar = None
    for k in range(steps + 1):
        t = k * dt
        S = float(diffusion_dither_field(D, t, a, w))
        Theta = plant.readout()
        try:
            y = qmap(Theta)
        except OverflowError:
            raise NumericalBlowup(f"plant output overflowed at step {k}") from None
        if not math.isfinite(y):
            raise NumericalBlowup(f"plant output diverged at step {k}")
        es.update_estimates(y, t, a, w)
        shadow.grad, shadow.curv = es.grad, es.curv

        alpha = plant.values
        beta, beta_t, _, beta_xx = diffusion_dither_derivatives(x, t, a, w)
        bar = alpha - beta
        if reconstruct == "spatial":
            u_field = _curvature_field_hi(bar, dx)
        else:
            u_field = np.zeros_like(bar) if prev_bar is None else (bar - prev_bar) / dt
            prev_bar = bar
        u_main[k] = control_diffusion_measured(es, Theta, a * math.sin(w * t))
        u_shadow[k] = control_diffusion_fullstate(shadow, x, u_field)

        if k < steps:
            plant.step(es.theta_hat + float(diffusion_dither_field(D, t + dt, a, w)))
    return {"U_measured": u_main, "U_fullstate": u_shadow,
            "max_gap": float(np.max(np.abs(u_main - u_shadow)))}


def run_average_system(scen, theta0, horizon, n_x=None):
    """Averaged error dynamics of the diffusion loop (no sinusoids).

    States: scalar offset, heat field on (0, D) with zero-slope face, and the
    driven-end value following the filtered feedback ODE, advanced with the
    exact exponential step. Returns times, the energy-like functional, its
    fitted decay rate, the decay-functional series, and the corner report.
    """
    if scen.pde_class != "diffusion":
        raise ValidationError("averaged system is defined for the diffusion class")
    n_x = n_x or scen.n_x
    dt = scen.dt
    steps = int(round(horizon / dt))
    D = scen.domain
    x = uniform_grid(D, n_x)
    gh = scen.gain * scen.curvature
    c = scen.corner
    solver = DiffusionSolver(D, n_x, dt)
    theta_av = float(theta0)
    boundary = 0.0  # u_av at the driven end, its own ODE state
    wa, wb, wd = lyapunov_weights(scen.gain, scen.curvature, D, c)
    t_arr = np.zeros(steps + 1)
    psi = np.zeros(steps + 1)
    upsilon = np.zeros(steps + 1)

    def functionals(k, t):
        u = solver.values
        ux = np.gradient(u, x)
        psi[k] = (theta_av**2 + np.trapezoid(u**2, x) + np.trapezoid(ux**2, x) + u[-1]**2)
        wfield = backstepping_forward(x, u, theta_av, scen.gain, scen.curvature)
        wx = np.gradient(wfield, x)
        upsilon[k] = (0.5 * theta_av**2 + 0.5 * wa * np.trapezoid(wfield**2, x)
                      + 0.5 * wb * np.trapezoid(wx**2, x) + 0.5 * wd * wfield[-1]**2)
        t_arr[k] = t

    functionals(0, 0.0)
    for k in range(steps):
        u = solver.values
        bracket = gh * (theta_av + float(np.trapezoid((D - x) * u, x)))
        boundary_new = lowpass_step(boundary, bracket, c, dt)
        theta_av += dt * solver.readout()
        solver.step(boundary_new)
        boundary = boundary_new
        if not math.isfinite(theta_av):
            raise NumericalBlowup(f"averaged offset diverged at step {k}")
        functionals(k + 1, (k + 1) * dt)

    # fitted exponential rate over the positive stretch of the series
    mask = psi > psi[0] * 1e-12
    mu = 0.0
    if np.count_nonzero(mask) > 2:
        coef = np.polyfit(t_arr[mask], np.log(psi[mask]), 1)
        mu = -float(coef[0])
    c1, c2, clears = corner_thresholds(scen.gain, scen.curvature, D, c)
    return {"t": t_arr, "psi": psi, "upsilon": upsilon, "mu": mu,
            "corner_thresholds": (c1, c2), "corner_clears": clears}


def lyapunov_monitor(x, u_field, theta_av, gain, curvature, corner, domain=None):
    """Decay functional of one averaged-system state.

    Transforms the field, then evaluates
    theta^2/2 + (wa/2)||w||^2 + (wb/2)||w_x||^2 + (wd/2) w(end)^2.
    """
    x = np.asarray(x, dtype=float)
    D = domain if domain is not None else float(x[-1])
    wa, wb, wd = lyapunov_weights(gain, curvature, D, corner)
    wfield = backstepping_forward(x, u_field, theta_av, gain, curvature)
    wx = np.gradient(wfield, x)
    return float(0.5 * theta_av**2 + 0.5 * wa * np.trapezoid(wfield**2, x)
                 + 0.5 * wb * np.trapezoid(wx**2, x) + 0.5 * wd * wfield[-1]**2)

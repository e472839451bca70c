"""Trajectory-generation signals for the perturbation loop.

Each actuator class needs the boundary signal S(t) whose cascade output is
the plain sinusoid a sin(omega t) at the measured face. Transport, wave and
diffusion have closed forms; the reaction-advection-diffusion and moving-
boundary classes use truncated series. `numeric_dither` provides the
independent numeric route used to cross-check every closed form.
"""

import math

import numpy as np

from .core import STREAM_TEST_POINTS, NumericalBlowup, ValidationError, rng_stream
from .pde_solvers import StefanSolver, stefan_front


def transport_dither(t, amp, omega, domain):
    """Advance by the transport time: a sin(omega (t + domain))."""
    return amp * np.sin(omega * (np.asarray(t, dtype=float) + domain))


def wave_dither(t, amp, omega, domain):
    """a cos(omega domain) sin(omega t)."""
    return amp * math.cos(omega * domain) * np.sin(omega * np.asarray(t, dtype=float))


def diffusion_dither(t, amp, omega, domain):
    """Boundary value of the diffusion trajectory field at x = domain."""
    return diffusion_dither_field(domain, t, amp, omega)


def diffusion_dither_field(x, t, amp, omega):
    """Trajectory field (a/2)[e^{kx} sin(wt+kx) + e^{-kx} sin(wt-kx)], k = sqrt(w/2).

    Satisfies u_t = u_xx with u(0,t) = a sin(wt) and u_x(0,t) = 0.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    k = math.sqrt(omega / 2.0)
    return 0.5 * amp * (np.exp(k * x) * np.sin(omega * t + k * x)
                        + np.exp(-k * x) * np.sin(omega * t - k * x))


def diffusion_dither_derivatives(x, t, amp, omega):
    """(value, d/dt, d/dx, d2/dx2) of the diffusion trajectory field, hand coded."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    k = math.sqrt(omega / 2.0)
    ep, em = np.exp(k * x), np.exp(-k * x)
    sp_, sm = np.sin(omega * t + k * x), np.sin(omega * t - k * x)
    cp, cm = np.cos(omega * t + k * x), np.cos(omega * t - k * x)
    val = 0.5 * amp * (ep * sp_ + em * sm)
    dt_ = 0.5 * amp * omega * (ep * cp + em * cm)
    dx = 0.5 * amp * k * (ep * (sp_ + cp) - em * (sm + cm))
    # each branch telescopes: d/dx of +-k e^{+-kx}(s± + c±) = 2 k^2 e^{+-kx} c±
    dxx = amp * k * k * (ep * cp + em * cm)
    return val, dt_, dx, dxx


def wave_dither_field(x, t, amp, omega):
    """a cos(omega x) sin(omega t); u_tt = u_xx with sinusoid and zero slope at x = 0."""
    return amp * np.cos(omega * np.asarray(x, dtype=float)) * np.sin(omega * np.asarray(t, dtype=float))


def transport_dither_field(x, t, amp, omega):
    """a sin(omega (t + x)); u_t = u_x with the sinusoid at x = 0."""
    return amp * np.sin(omega * (np.asarray(t, dtype=float) + np.asarray(x, dtype=float)))


def rad_series_dither(t, amp, omega, domain, eps, adv, reaction, n_terms=10):
    """Truncated power series for the reaction-advection-diffusion trajectory signal.

    Double binomial sum over even/odd powers of the domain length with the
    drift prefactor e^{adv domain / (2 eps)}; out-of-range binomials drop out.
    Truncation default keeps terms through k = 10.
    """
    t = np.asarray(t, dtype=float)
    xi = adv * adv / (4.0 * eps) - reaction
    st, ct = np.sin(omega * t), np.cos(omega * t)
    total = np.zeros(np.broadcast(st, np.asarray(domain, dtype=float)).shape)
    try:
        for k in range(n_terms + 1):
            ssin = 0.0
            scos = 0.0
            for n in range(k + 1):
                if 2 * n <= k:
                    ssin += math.comb(k, 2 * n) * xi ** (k - 2 * n) * omega ** (2 * n)
                if 2 * n + 1 <= k:
                    scos += math.comb(k, 2 * n + 1) * xi ** (k - 2 * n - 1) * omega ** (2 * n + 1)
            a2k = (amp / eps**k) * (st * ssin + ct * scos)
            total = total + a2k * domain ** (2 * k) / math.factorial(2 * k)
            total = total + (adv / (2.0 * eps)) * a2k * domain ** (2 * k + 1) / math.factorial(2 * k + 1)
        total = np.exp(adv * np.asarray(domain, dtype=float) / (2.0 * eps)) * total
    except (OverflowError, ZeroDivisionError) as exc:
        # python scalars overflow loudly, eps**k can underflow to exact zero
        raise NumericalBlowup(f"series truncation overflowed: {exc}") from exc
    if not np.all(np.isfinite(total)):
        raise NumericalBlowup("series truncation overflowed; lower n_terms")
    return total


def stefan_series_dither(t, amp, omega, n_terms=6):
    """Truncated series - sum_i d^i/dt^i [-a sin(wt)]^{2i-1} / (2i-1)!.

    The i = 0 term vanishes (reciprocal factorial of -1). Each odd sine power
    expands into a finite sum of odd-harmonic sinusoids, so the i-th time
    derivative is exact: the phase steps by a quarter period per derivative.
    """
    t = np.asarray(t, dtype=float)
    total = np.zeros_like(t)
    phase = (np.sin, np.cos, lambda z: -np.sin(z), lambda z: -np.cos(z))
    try:
        for i in range(1, n_terms + 1):
            m = i - 1
            inner = np.zeros_like(t)
            for j in range(m + 1):
                harm = (2 * j + 1) * omega
                coeff = ((-1.0) ** j * math.comb(2 * m + 1, m - j)
                         * harm**i / 4.0**m)
                inner = inner + coeff * phase[i % 4](harm * t)
            total = total + amp ** (2 * i - 1) / math.factorial(2 * i - 1) * inner
    except OverflowError as exc:
        raise NumericalBlowup(f"series truncation overflowed: {exc}") from exc
    if not np.all(np.isfinite(total)):
        raise NumericalBlowup("series truncation overflowed; lower n_terms")
    return total


def series_truncation_tail(pde_class, scen, t, orders):
    """Convergence proxy for the truncated series routes.

    For each truncation order n in `orders`, returns max_t |S_{n+1} - S_n|,
    the magnitude of the first dropped term. Only the two series classes
    ('rad', 'stefan') have one.
    """
    t = np.asarray(t, dtype=float)
    if pde_class == "rad":
        def at(n):
            return rad_series_dither(t, scen.amp, scen.omega, scen.domain,
                                     scen.eps, scen.adv, scen.reaction, n_terms=n)
    elif pde_class == "stefan":
        def at(n):
            return stefan_series_dither(t, scen.amp, scen.omega, n_terms=n)
    else:
        raise ValidationError(f"{pde_class!r} has no series route to truncate")
    return np.array([float(np.max(np.abs(at(n + 1) - at(n)))) for n in orders])


def stefan_continuation_dither(t, front_pos, amp, omega):
    """Moving-boundary trajectory signal: diffusion trajectory field at x = s(t).

    The trajectory field that produces a sin(wt) at x = 0 under the heat
    equation is independent of where the driven boundary sits, so evaluating
    it on the front gives the exact drive for the shrinking domain.
    """
    return diffusion_dither_field(front_pos, t, amp, omega)


def distributed_dither(t, amp, omega, domain, measure="uniform", gamma=1.0):
    """Signal for distributed (measure-averaged) transport delays.

    measure "uniform" averages the advanced sinusoid over delays [0, domain];
    "point" is the single-delay transport form. gamma rescales for the
    measure's frequency response (1 keeps the raw average).
    """
    t = np.asarray(t, dtype=float)
    if measure == "point":
        return transport_dither(t, amp, omega, domain) / gamma
    if measure == "uniform":
        return (amp / (gamma * omega * domain)) * (np.cos(omega * t) - np.cos(omega * (t + domain)))
    raise ValidationError(f"unknown delay measure {measure!r}")


def demod_gradient(t, amp, omega):
    """(2/a) sin(wt); multiplies the output to estimate the gradient."""
    if amp == 0:
        raise ValidationError("demodulation undefined for zero dither amplitude")
    return (2.0 / amp) * np.sin(omega * np.asarray(t, dtype=float))


def demod_curvature(t, amp, omega):
    """-(8/a^2) cos(2wt); multiplies the output to estimate the curvature."""
    if amp == 0:
        raise ValidationError("demodulation undefined for zero dither amplitude")
    return -(8.0 / amp**2) * np.cos(2.0 * omega * np.asarray(t, dtype=float))


def analytic_dither(pde_class, scen, t):
    """Closed-form / series route for the class described by the scenario."""
    a, w, D = scen.amp, scen.omega, scen.domain
    if pde_class == "transport":
        return transport_dither(t, a, w, D)
    if pde_class == "wave":
        return wave_dither(t, a, w, D)
    if pde_class == "diffusion":
        return diffusion_dither(t, a, w, D)
    if pde_class == "rad":
        return rad_series_dither(t, a, w, D, scen.eps, scen.adv, scen.reaction)
    if pde_class == "stefan":
        return stefan_series_dither(t, a, w)
    raise ValidationError(f"unknown pde_class {pde_class!r}")


# ---------------------------------------------------------------------------
# Numeric oracle route. Never reuses the closed forms: transport and wave
# march the trajectory problem on a grid, the moving-boundary case inverts a
# measured frequency response, and diffusion (sideways heat problem, ill
# posed to march) certifies a candidate by interior residual instead.
# ---------------------------------------------------------------------------

def _transport_numeric(t, amp, omega, domain):
    # method of characteristics: u_t = u_x carries face data unchanged along
    # x + t = const, so the foot of the characteristic through (domain, t) is
    # (0, t + domain). Exact for this class; no grid, no interpolation.
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return amp * np.sin(omega * (t + domain))


def _wave_numeric(t, amp, omega, domain, n_t=4096):
    # march u_xx = u_tt in x (well posed for the hyperbolic class): leapfrog
    # with x as the evolution direction, Cauchy data at x = 0:
    # u(0, tau) = a sin(w tau), u_x(0, tau) = 0.
    t = np.atleast_1d(np.asarray(t, dtype=float))
    pad = domain + 0.5
    lo, hi = float(np.min(t)) - pad, float(np.max(t)) + pad
    tau = np.linspace(lo, hi, n_t + 1)
    dtau = tau[1] - tau[0]
    n_steps = int(math.ceil(domain / dtau))
    dx = domain / n_steps
    u_prev = amp * np.sin(omega * tau)
    # first x step from the zero-slope condition: u(dx) = u(0) + dx^2/2 u_tt
    utt = np.zeros_like(tau)
    utt[1:-1] = (u_prev[:-2] - 2.0 * u_prev[1:-1] + u_prev[2:]) / dtau**2
    u_cur = u_prev + 0.5 * dx * dx * utt
    for _ in range(n_steps - 1):
        utt[1:-1] = (u_cur[:-2] - 2.0 * u_cur[1:-1] + u_cur[2:]) / dtau**2
        u_next = 2.0 * u_cur - u_prev + dx * dx * utt
        u_prev, u_cur = u_cur, u_next
    # domain of dependence shrinks by one node per step from each end
    valid = slice(n_steps, n_t + 1 - n_steps)
    return np.interp(t, tau[valid], u_cur[valid])


def _stefan_numeric(t, scen, n_x=96, n_periods=10):
    # frequency-response inversion: drive the moving-boundary plant with the
    # frozen-front diffusion signal, demodulate the measured face at w, then
    # rescale/rephase the drive so the face response is exactly a sin(w t).
    # The front drift is slow next to the dither, so one global correction
    # over a few periods captures it.
    t = np.atleast_1d(np.asarray(t, dtype=float))
    a, w = scen.amp, scen.omega
    period = 2.0 * math.pi / w
    dt = period / 256.0
    horizon = n_periods * period
    steps = int(round(horizon / dt))
    solver = StefanSolver(scen.front_scale, scen.front_rate, n_x, dt)
    ts = np.arange(steps + 1) * dt
    drive = stefan_continuation_dither(ts, stefan_front(ts, scen.front_scale, scen.front_rate), a, w)
    out = np.empty(steps + 1)
    out[0] = solver.readout()
    for k in range(steps):
        out[k + 1] = solver.step(drive[k + 1])
    # demodulate the last two periods against sin / cos at w
    mask = ts >= horizon - 2.0 * period
    tt, yy = ts[mask], out[mask]
    cs = 2.0 * np.trapezoid(yy * np.sin(w * tt), tt) / (tt[-1] - tt[0])
    cc = 2.0 * np.trapezoid(yy * np.cos(w * tt), tt) / (tt[-1] - tt[0])
    resp_amp = math.hypot(cs, cc)
    resp_phase = math.atan2(cc, cs)
    # measured face shows resp_amp sin(wt + resp_phase); correct the drive
    front = stefan_front(t, scen.front_scale, scen.front_rate)
    return (a / resp_amp) * stefan_continuation_dither(t - resp_phase / w, front, a, w)


def diffusion_residual_certificate(amp, omega, domain, n_points=1000, seed=0):
    """Certificate that the closed-form diffusion trajectory field is a solution.

    Marching the sideways problem amplifies high frequencies, so the numeric
    route for this class checks the candidate instead: substitute the hand
    coded derivatives into u_t - u_xx at random interior space-time points,
    and evaluate the two conditions at the measured face (value tracks the
    demodulation sinusoid, slope vanishes). Returns (residual, face, slope),
    residual normalized by the field scale. The derivatives themselves are
    cross-checked against finite differences elsewhere, so a sign slip in
    either the field or a derivative shows up here as an O(1) residual.
    """
    rng = rng_stream(seed, STREAM_TEST_POINTS)
    period = 2.0 * math.pi / omega
    xs = rng.uniform(0.0, domain, n_points)
    ts = rng.uniform(0.0, period, n_points)
    val, dt_, _, dxx = diffusion_dither_derivatives(xs, ts, amp, omega)
    scale = float(np.max(np.abs(val)))
    resid = float(np.max(np.abs(dt_ - dxx))) / scale
    tg = np.linspace(0.0, period, 257)
    v0, _, dx0, _ = diffusion_dither_derivatives(np.zeros_like(tg), tg, amp, omega)
    face = float(np.max(np.abs(v0 - amp * np.sin(omega * tg))))
    slope = float(np.max(np.abs(dx0)))
    return resid, face, slope


def numeric_dither(pde_class, scen, t):
    """Independent numeric evaluation of the trajectory signal.

    Supported: transport (characteristics; cross-check against the ring-buffer
    plant lives in the solver tests), wave (sideways leapfrog), stefan
    (frozen-front frequency inversion against the marched plant). diffusion is
    not marched (sideways heat is ill posed); cross-check that class with
    `diffusion_residual_certificate` instead. The advection-reaction class has
    no trustworthy inversion target, so only the series route exists for it;
    use its truncation tail as the convergence check.
    """
    if pde_class == "transport":
        return _transport_numeric(t, scen.amp, scen.omega, scen.domain)
    if pde_class == "wave":
        return _wave_numeric(t, scen.amp, scen.omega, scen.domain)
    if pde_class == "stefan":
        return _stefan_numeric(t, scen)
    if pde_class == "diffusion":
        raise ValidationError(
            "no numeric dither route for 'diffusion': marching the trajectory "
            "field sideways is ill posed. Validate the analytic signal with "
            "diffusion_residual_certificate (residual of the closed-form field "
            "under the heat operator) instead.")
    if pde_class == "rad":
        raise ValidationError(
            "no numeric dither route for 'rad': use the analytic series and "
            "check its truncation tail (series_truncation_tail).")
    raise ValidationError(f"no numeric dither route for {pde_class!r}")



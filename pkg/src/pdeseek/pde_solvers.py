"""Actuator dynamics solvers for the five PDE classes.

Every cascade solver shares the same layout: the controlled signal enters as
a Dirichlet value at the far boundary, the measured output is the near-face
value at x = 0, and the near face carries a homogeneous Neumann condition
(second order via ghost node). Parabolic classes advance with Crank-Nicolson,
transport is an exact delay line, the wave equation uses the explicit
velocity-Verlet form of the central-difference scheme.
"""

import math

import numpy as np

from .core import Field, NumericalBlowup, ValidationError, uniform_grid


def tdma(lower, diag, upper, rhs):
    """Thomas algorithm for a tridiagonal system.

    Parameters
    ----------
    lower : array, sub-diagonal (len n-1)
    diag : array, main diagonal (len n)
    upper : array, super-diagonal (len n-1)
    rhs : array, right-hand side (len n)

    Returns
    -------
    array, solution vector
    """
    n = len(rhs)
    w = np.empty(n - 1)
    g = np.empty(n)
    w[0] = upper[0] / diag[0]
    g[0] = rhs[0] / diag[0]
    for i in range(1, n - 1):
        den = diag[i] - lower[i - 1] * w[i - 1]
        w[i] = upper[i] / den
        g[i] = (rhs[i] - lower[i - 1] * g[i - 1]) / den
    g[n - 1] = (rhs[n - 1] - lower[n - 2] * g[n - 2]) / (diag[n - 1] - lower[n - 2] * w[n - 2])
    out = np.empty(n)
    out[n - 1] = g[n - 1]
    for i in range(n - 2, -1, -1):
        out[i] = g[i] - w[i] * out[i + 1]
    return out


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise NumericalBlowup(f"{what} produced non-finite values")


def _operator_matrix(n, dx, eps, adv, reaction, neumann_left):
    """Dense operator for eps*u_xx + adv*u_x + reaction*u on the unknown nodes.

    Unknowns are nodes 0..n-1; the node to the right of the last unknown is a
    known Dirichlet value whose coupling is returned separately. With
    neumann_left the ghost point mirrors node 1, which also zeroes the
    centered first difference at node 0.
    """
    L = np.zeros((n, n))
    idx = np.arange(n)
    L[idx, idx] = -2.0 * eps / dx**2 + reaction
    L[idx[:-1], idx[:-1] + 1] = eps / dx**2 + adv / (2.0 * dx)
    L[idx[1:], idx[1:] - 1] = eps / dx**2 - adv / (2.0 * dx)
    if neumann_left:
        L[0, :] = 0.0
        L[0, 0] = -2.0 * eps / dx**2 + reaction
        if n > 1:
            L[0, 1] = 2.0 * eps / dx**2
    coupling = np.zeros(n)
    coupling[n - 1] = eps / dx**2 + adv / (2.0 * dx)
    return L, coupling


class _CrankNicolson:
    """Crank-Nicolson stepper with one Dirichlet-coupled boundary.

    The tridiagonal system has constant coefficients, so the update is
    prefactored once into a dense propagator: new = P @ old + q * (bc_old +
    bc_new). Identical in exact arithmetic to re-solving each step.
    """

    def __init__(self, n, dx, dt, eps, adv, reaction, neumann_left):
        L, coupling = _operator_matrix(n, dx, eps, adv, reaction, neumann_left)
        r = 0.5 * dt
        left = np.eye(n) - r * L
        self.propagator = np.linalg.solve(left, np.eye(n) + r * L)
        self.bc_vector = np.linalg.solve(left, r * coupling)

    def step(self, interior, bc_old, bc_new):
        return self.propagator @ interior + self.bc_vector * (bc_old + bc_new)


class DiffusionSolver:
    """Heat equation u_t = u_xx on (0, domain), Neumann at 0, Dirichlet drive at domain."""

    def __init__(self, domain, n_x, dt, init=None):
        if n_x < 2:
            raise ValidationError("diffusion solver needs n_x >= 2")
        self.x = uniform_grid(domain, n_x)
        self.dt = dt
        self.n_x = n_x
        dx = domain / n_x
        self._cn = _CrankNicolson(n_x, dx, dt, 1.0, 0.0, 0.0, neumann_left=True)
        values = np.zeros(n_x + 1) if init is None else np.asarray(init, dtype=float).copy()
        if values.shape != self.x.shape:
            raise ValidationError("initial profile has wrong length")
        self.values = values
        self._bc = float(values[-1])

    def field(self):
        return Field(self.x, self.values.copy())

    def readout(self):
        return float(self.values[0])

    def step(self, boundary_value):
        new_int = self._cn.step(self.values[:-1], self._bc, boundary_value)
        self.values = np.append(new_int, boundary_value)
        self._bc = float(boundary_value)
        _check_finite(self.values, "diffusion step")
        return self.readout()


class RadSolver:
    """u_t = eps u_xx + adv u_x + reaction u, same boundary layout as diffusion."""

    def __init__(self, domain, n_x, dt, eps, adv, reaction, init=None):
        if not eps > 0:
            raise ValidationError("rad solver needs eps > 0")
        self.x = uniform_grid(domain, n_x)
        self.dt = dt
        self.n_x = n_x
        dx = domain / n_x
        self._cn = _CrankNicolson(n_x, dx, dt, eps, adv, reaction, neumann_left=True)
        values = np.zeros(n_x + 1) if init is None else np.asarray(init, dtype=float).copy()
        if values.shape != self.x.shape:
            raise ValidationError("initial profile has wrong length")
        self.values = values
        self._bc = float(values[-1])

    def field(self):
        return Field(self.x, self.values.copy())

    def readout(self):
        return float(self.values[0])

    def step(self, boundary_value):
        new_int = self._cn.step(self.values[:-1], self._bc, boundary_value)
        self.values = np.append(new_int, boundary_value)
        self._bc = float(boundary_value)
        _check_finite(self.values, "rad step")
        return self.readout()


class TransportDelay:
    """Pure transport: the output is the input delayed by domain length.

    Realized as an exact ring buffer of domain/dt samples, so a sinusoid in
    gives the identically shifted sinusoid out, to rounding.
    """

    def __init__(self, domain, dt, init=0.0):
        steps = domain / dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValidationError(f"transport needs domain/dt integer, got {steps!r}")
        self.n_delay = int(round(steps))
        if np.ndim(init) == 0:
            self.buffer = [float(init)] * self.n_delay
            self._out = float(init)
        else:
            # history init: init[i] = input at t = (i - n_delay) dt, i = 0..n_delay
            if len(init) != self.n_delay + 1:
                raise ValidationError(f"history length {len(init)} != {self.n_delay + 1}")
            self.buffer = [float(v) for v in init[1:]]
            self._out = float(init[0])
        self._head = 0

    def readout(self):
        return self._out

    def step(self, boundary_value):
        # pop the sample pushed n_delay steps ago, push the new one
        self._out = self.buffer[self._head]
        self.buffer[self._head] = float(boundary_value)
        self._head = (self._head + 1) % self.n_delay
        if not math.isfinite(self._out):
            raise NumericalBlowup("transport step produced non-finite values")
        return self._out


class WaveSolver:
    """u_tt = u_xx, Neumann at 0, Dirichlet drive at domain, explicit central scheme.

    Velocity-Verlet form of the leapfrog update; requires dt <= dx (CFL).
    State is the displacement and velocity profile at the same nodes.
    """

    def __init__(self, domain, n_x, dt, init=None, init_velocity=None):
        dx = domain / n_x
        if dt > dx + 1e-15:
            raise ValidationError(f"wave CFL violated: dt={dt} > dx={dx}")
        self.x = uniform_grid(domain, n_x)
        self.dt = dt
        self.n_x = n_x
        self._dx2 = dx * dx
        self.values = np.zeros(n_x + 1) if init is None else np.asarray(init, dtype=float).copy()
        self.velocity = (np.zeros(n_x + 1) if init_velocity is None
                         else np.asarray(init_velocity, dtype=float).copy())
        if self.values.shape != self.x.shape or self.velocity.shape != self.x.shape:
            raise ValidationError("initial profiles have wrong length")
        self._bc = float(self.values[-1])

    def field(self):
        return Field(self.x, self.values.copy())

    def velocity_field(self):
        return Field(self.x, self.velocity.copy())

    def readout(self):
        return float(self.values[0])

    def _laplacian(self, u):
        # on the non-driven nodes 0..n_x-1; node n_x is the Dirichlet drive
        lap = np.empty(self.n_x)
        lap[0] = (2.0 * u[1] - 2.0 * u[0]) / self._dx2
        lap[1:] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / self._dx2
        return lap

    def step(self, boundary_value):
        u, v, dt = self.values, self.velocity, self.dt
        acc0 = self._laplacian(u)
        new = np.empty_like(u)
        new[:-1] = u[:-1] + dt * v[:-1] + 0.5 * dt * dt * acc0
        new[-1] = boundary_value
        acc1 = self._laplacian(new)
        vel = np.empty_like(v)
        vel[:-1] = v[:-1] + 0.5 * dt * (acc0 + acc1)
        vel[-1] = (boundary_value - self._bc) / dt
        self.values, self.velocity = new, vel
        self._bc = float(boundary_value)
        _check_finite(self.values, "wave step")
        return self.readout()

    def energy(self):
        ux = np.gradient(self.values, self.x)
        return 0.5 * np.trapezoid(self.velocity**2, self.x) + 0.5 * np.trapezoid(ux**2, self.x)


def stefan_front(t, front_scale, front_rate):
    """Prescribed front position front_scale * exp(-front_rate * t)."""
    return front_scale * np.exp(-front_rate * np.asarray(t, dtype=float))


class StefanSolver:
    """Heat equation on the shrinking interval (0, s(t)) with prescribed front.

    Solved in the front-normalized coordinate z = x / s(t) on the unit
    interval, where the chain rule adds an advection term:
    A_t = A_zz / s(t)^2 - front_rate * z * A_z. The drive is the Dirichlet
    value at the front (z = 1); the readout stays at x = 0. Coefficients are
    time dependent, so each step assembles and solves its own tridiagonal
    system (Crank-Nicolson in time).
    """

    def __init__(self, front_scale, front_rate, n_x, dt, init=None, floor=1e-6):
        if not front_scale > 0:
            raise ValidationError("stefan solver needs front_scale > 0")
        self.front_scale = front_scale
        self.front_rate = front_rate
        self.n_x = n_x
        self.dt = dt
        self.floor = floor
        self.z = uniform_grid(1.0, n_x)
        self.t = 0.0
        values = np.zeros(n_x + 1) if init is None else np.asarray(init, dtype=float).copy()
        if values.shape != self.z.shape:
            raise ValidationError("initial profile has wrong length")
        self.values = values
        self._bc = float(values[-1])

    def front(self, t=None):
        return float(stefan_front(self.t if t is None else t, self.front_scale, self.front_rate))

    def physical_nodes(self):
        return self.z * self.front()

    def field(self):
        # profile over the physical (moving) domain
        return Field(self.physical_nodes(), self.values.copy())

    def readout(self):
        return float(self.values[0])

    def _diagonals(self, t):
        # tridiagonal of A_zz / s^2 - front_rate * z * A_z on unknowns 0..n-1
        n = self.n_x
        dz = 1.0 / n
        s = self.front(t)
        if s < self.floor:
            raise NumericalBlowup(f"stefan front collapsed below floor at t={t}")
        diff = 1.0 / (s * s * dz * dz)
        advz = -self.front_rate * self.z[:n] / (2.0 * dz)
        diag = np.full(n, -2.0 * diff)
        lower = diff - advz[1:]
        upper = diff + advz[:-1]
        upper[0] = 2.0 * diff  # ghost mirror, advection vanishes at z = 0
        coupling = diff + advz[n - 1]
        return lower, diag, upper, coupling

    def step(self, boundary_value):
        r = 0.5 * self.dt
        lo0, di0, up0, cp0 = self._diagonals(self.t)
        lo1, di1, up1, cp1 = self._diagonals(self.t + self.dt)
        u = self.values[:-1]
        rhs = u + r * (di0 * u)
        rhs[:-1] += r * up0 * u[1:]
        rhs[1:] += r * lo0 * u[:-1]
        rhs[-1] += r * (cp0 * self._bc + cp1 * boundary_value)
        new_int = tdma(-r * lo1, 1.0 - r * di1, -r * up1, rhs)
        self.values = np.append(new_int, boundary_value)
        self._bc = float(boundary_value)
        self.t += self.dt
        _check_finite(self.values, "stefan step")
        return self.readout()


# ---------------------------------------------------------------------------
# Manufactured solutions (oracles for the order-of-accuracy checks)
# ---------------------------------------------------------------------------

def manufactured_diffusion(x, t, domain):
    """exp(-(pi/(2 domain))^2 t) cos(pi x / (2 domain)); satisfies both BCs with zero drive."""
    k = math.pi / (2.0 * domain)
    return np.exp(-(k * k) * t) * np.cos(k * np.asarray(x))


def manufactured_wave(x, t, omega):
    """cos(omega x) sin(omega t); Neumann at 0, drive cos(omega domain) sin(omega t)."""
    return np.cos(omega * np.asarray(x)) * math.sin(omega * t)


def convergence_errors_diffusion(domain, grids, t_final, dt_coarse):
    """Max-node error against the manufactured solution on successive grids.

    dt scales with dx^2 so both error terms shrink by 4x per halving.
    """
    errs = []
    for i, n_x in enumerate(grids):
        dt = dt_coarse / 4.0**i
        steps = int(round(t_final / dt))
        solver = DiffusionSolver(domain, n_x, dt,
                                 init=manufactured_diffusion(uniform_grid(domain, n_x), 0.0, domain))
        for k in range(steps):
            solver.step(0.0)
        exact = manufactured_diffusion(solver.x, steps * dt, domain)
        errs.append(float(np.max(np.abs(solver.values - exact))))
    return errs


def convergence_errors_wave(domain, omega, grids, t_final, dt_coarse):
    """Same refinement study for the wave scheme; dt scales with dx."""
    errs = []
    for i, n_x in enumerate(grids):
        dt = dt_coarse / 2.0**i
        steps = int(round(t_final / dt))
        x = uniform_grid(domain, n_x)
        solver = WaveSolver(domain, n_x, dt,
                            init=manufactured_wave(x, 0.0, omega),
                            init_velocity=omega * np.cos(omega * x))
        for k in range(steps):
            solver.step(manufactured_wave(domain, (k + 1) * dt, omega))
        exact = manufactured_wave(solver.x, steps * dt, omega)
        errs.append(float(np.max(np.abs(solver.values - exact))))
    return errs


def stefan_front_tracking(front_scale, front_rate, n_x, t_final, drive, dt_factor=0.25):
    """Independent Stefan oracle on a fixed physical grid with a tracked front.

    Explicit FTCS away from the front; the last interior node next to the
    front uses the unequal-spacing (Shortley-Weller) second difference with
    the Dirichlet drive value imposed at the exact front position. Nodes at
    or beyond the front hold the drive value. Returns the final profile on
    the active physical nodes.
    """
    x = uniform_grid(front_scale, n_x)
    dx = front_scale / n_x
    dt = dt_factor * dx * dx
    steps = int(round(t_final / dt))
    dt = t_final / steps
    u = np.zeros(n_x + 1)
    t = 0.0
    for _ in range(steps):
        g = float(drive(t))
        s = float(stefan_front(t, front_scale, front_rate))
        active = int(np.floor(s / dx - 1e-12))  # last node strictly inside
        active = min(active, n_x - 1)
        h = s - x[active]
        if h < 0.5 * dx:
            # cell against the front too thin for the explicit stability
            # budget: hold that node at the drive value and move the
            # unequal-spacing stencil one node in
            u[active] = g
            active -= 1
            h += dx
        if active < 1:
            raise NumericalBlowup("front tracking domain collapsed")
        lap = np.zeros(n_x + 1)
        lap[0] = (2.0 * u[1] - 2.0 * u[0]) / (dx * dx)
        lap[1:active] = (u[0:active - 1] - 2.0 * u[1:active] + u[2:active + 1]) / (dx * dx)
        lap[active] = 2.0 * (u[active - 1] / (dx * (dx + h))
                             - u[active] / (dx * h)
                             + g / (h * (dx + h)))
        u = u + dt * lap
        t += dt
        s_new = float(stefan_front(t, front_scale, front_rate))
        u[x >= s_new] = float(drive(t))
        _check_finite(u, "stefan front tracking")
    s = float(stefan_front(t, front_scale, front_rate))
    mask = x <= s
    return x[mask], u[mask], t


# ---------------------------------------------------------------------------
# Initial-boundary-value solves for the side-by-side comparison harness.
# Layout here differs from the cascade: the drive enters at x = 0 (Dirichlet),
# the far end is homogeneous Dirichlet, the initial state is zero.
# ---------------------------------------------------------------------------

def _dirichlet_both_cn(n_unknown, dx, dt, eps, adv, reaction):
    L, coupling_right = _operator_matrix(n_unknown, dx, eps, adv, reaction, neumann_left=False)
    coupling_left = np.zeros(n_unknown)
    coupling_left[0] = eps / dx**2 - adv / (2.0 * dx)
    r = 0.5 * dt
    left = np.eye(n_unknown) - r * L
    propagator = np.linalg.solve(left, np.eye(n_unknown) + r * L)
    qL = np.linalg.solve(left, r * coupling_left)
    qR = np.linalg.solve(left, r * coupling_right)
    return propagator, qL, qR


def solve_ibvp(pde_class, scen, drive, n_x, dt, t_out):
    """March the comparison problem and sample it on the output times.

    Parameters
    ----------
    pde_class : one of the five class names
    scen : Scenario carrying domain and class parameters
    drive : callable t -> left boundary value
    n_x : spatial cells
    dt : time step (wave obeys CFL, transport is exact on characteristics)
    t_out : array of output times, multiples of dt

    Returns
    -------
    (x, t_out, values) with values shaped (len(t_out), n_x + 1). For the
    stefan class x is the front-normalized coordinate on [0, 1].
    """
    length = 1.0 if pde_class == "stefan" else scen.domain
    x = uniform_grid(length, n_x)
    t_out = np.asarray(t_out, dtype=float)
    steps = int(round(t_out[-1] / dt))
    out_idx = {int(round(t / dt)): j for j, t in enumerate(t_out)}
    values = np.zeros((len(t_out), n_x + 1))

    if pde_class == "transport":
        # exact solution on characteristics: drive(t - x) once the inflow arrives
        for j, t in enumerate(t_out):
            values[j] = [drive(t - xv) if t - xv >= 0.0 else 0.0 for xv in x]
        return x, t_out, values

    if pde_class == "wave":
        dx = length / n_x
        if dt > dx + 1e-15:
            raise ValidationError(f"wave CFL violated: dt={dt} > dx={dx}")
        u = np.zeros(n_x + 1)
        v = np.zeros(n_x + 1)
        if 0 in out_idx:
            values[out_idx[0]] = u
        bc_old = drive(0.0)
        for k in range(steps):
            lap = np.zeros(n_x + 1)
            lap[1:-1] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / (dx * dx)
            new = u + dt * v + 0.5 * dt * dt * lap
            new[0] = drive((k + 1) * dt)
            new[-1] = 0.0
            lap2 = np.zeros(n_x + 1)
            lap2[1:-1] = (new[:-2] - 2.0 * new[1:-1] + new[2:]) / (dx * dx)
            v = v + 0.5 * dt * (lap + lap2)
            v[0] = (new[0] - bc_old) / dt
            v[-1] = 0.0
            bc_old = new[0]
            u = new
            _check_finite(u, "wave comparison solve")
            if (k + 1) in out_idx:
                values[out_idx[k + 1]] = u
        return x, t_out, values

    if pde_class == "stefan":
        # front-normalized coordinate; variable coefficients, per-step solve
        u = np.zeros(n_x + 1)
        dz = 1.0 / n_x
        z = x
        if 0 in out_idx:
            values[out_idx[0]] = u
        for k in range(steps):
            t0, t1 = k * dt, (k + 1) * dt
            s0 = float(stefan_front(t0, scen.front_scale, scen.front_rate))
            s1 = float(stefan_front(t1, scen.front_scale, scen.front_rate))
            r = 0.5 * dt

            def diags(s):
                diff = 1.0 / (s * s * dz * dz)
                advz = -scen.front_rate * z[1:-1] / (2.0 * dz)
                diag = np.full(n_x - 1, -2.0 * diff)
                lower = diff - advz[1:]
                upper = diff + advz[:-1]
                cL = diff - advz[0]
                cR = diff + advz[-1]
                return lower, diag, upper, cL, cR

            lo0, di0, up0, cL0, cR0 = diags(s0)
            lo1, di1, up1, cL1, cR1 = diags(s1)
            ui = u[1:-1]
            rhs = ui + r * di0 * ui
            rhs[:-1] += r * up0 * ui[1:]
            rhs[1:] += r * lo0 * ui[:-1]
            rhs[0] += r * (cL0 * drive(t0) + cL1 * drive(t1))
            new_int = tdma(-r * lo1, 1.0 - r * di1, -r * up1, rhs)
            u = np.concatenate(([drive(t1)], new_int, [0.0]))
            _check_finite(u, "stefan comparison solve")
            if (k + 1) in out_idx:
                values[out_idx[k + 1]] = u
        return x, t_out, values

    # diffusion and rad share the constant-coefficient path
    if pde_class == "diffusion":
        eps, adv, reaction = 1.0, 0.0, 0.0
    elif pde_class == "rad":
        eps, adv, reaction = scen.eps, scen.adv, scen.reaction
    else:
        raise ValidationError(f"unknown pde_class {pde_class!r}")
    dx = length / n_x
    propagator, qL, qR = _dirichlet_both_cn(n_x - 1, dx, dt, eps, adv, reaction)
    u = np.zeros(n_x + 1)
    if 0 in out_idx:
        values[out_idx[0]] = u
    for k in range(steps):
        b_old, b_new = drive(k * dt), drive((k + 1) * dt)
        new_int = propagator @ u[1:-1] + qL * (b_old + b_new)
        u = np.concatenate(([b_new], new_int, [0.0]))
        _check_finite(u, "comparison solve")
        if (k + 1) in out_idx:
            values[out_idx[k + 1]] = u
    return x, t_out, values

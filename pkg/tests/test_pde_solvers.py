"""Plant solvers: exactness, scheme order, degenerations, blowup guards."""

import math

import numpy as np
import pytest

from pdeseek.core import NumericalBlowup, Scenario, ValidationError, uniform_grid
from pdeseek.pde_solvers import (DiffusionSolver, RadSolver, StefanSolver,
                                 TransportDelay, WaveSolver,
                                 convergence_errors_diffusion,
                                 convergence_errors_wave,
                                 manufactured_diffusion, manufactured_wave,
                                 solve_ibvp, stefan_front,
                                 stefan_front_tracking, tdma)


def test_tdma_matches_dense_solve():
    rng = np.random.default_rng(3)
    n = 17
    lo = rng.uniform(0.1, 1.0, n - 1)
    up = rng.uniform(0.1, 1.0, n - 1)
    di = rng.uniform(3.0, 4.0, n)  # diagonally dominant
    rhs = rng.standard_normal(n)
    dense = np.diag(di) + np.diag(lo, -1) + np.diag(up, 1)
    assert np.allclose(tdma(lo, di, up, rhs), np.linalg.solve(dense, rhs),
                       atol=1e-13)


# ---------------------------------------------------------------- diffusion

def test_diffusion_zero_input_zero_field():
    s = DiffusionSolver(1.0, 32, 0.01)
    for _ in range(50):
        s.step(0.0)
    assert np.all(s.values == 0.0)


def test_diffusion_constant_steady_state():
    s = DiffusionSolver(1.0, 32, 0.01, init=np.full(33, 0.7))
    for _ in range(50):
        s.step(0.7)
    assert np.allclose(s.values, 0.7, atol=1e-12)


def test_diffusion_readout_is_measured_face():
    s = DiffusionSolver(1.0, 16, 0.01, init=np.linspace(0.3, 0.9, 17))
    assert s.readout() == s.values[0]


def test_diffusion_manufactured_convergence():
    errs = convergence_errors_diffusion(1.0, [16, 32, 64], 0.1, 4e-3)
    for coarse, fine in zip(errs, errs[1:]):
        assert 3.5 <= coarse / fine <= 4.5


def test_diffusion_neumann_face_slope_second_order():
    # ghost-node convention: the one-sided slope at x=0 shrinks ~4x per refinement
    slopes = []
    for n_x in (32, 64):
        s = DiffusionSolver(1.0, n_x, 1e-3)
        for k in range(400):
            s.step(0.2 * math.sin(10.0 * (k + 1) * 1e-3))
        dx = 1.0 / n_x
        u = s.values
        slopes.append(abs(-3 * u[0] + 4 * u[1] - u[2]) / (2 * dx))
    assert slopes[0] / slopes[1] > 2.5
    assert slopes[1] < 1e-4


def test_diffusion_blowup_detection():
    s = DiffusionSolver(1.0, 16, 0.01)
    with pytest.raises(NumericalBlowup):
        s.step(float("nan"))
        s.step(0.0)


def test_diffusion_linearity():
    rng = np.random.default_rng(5)
    i1, i2 = rng.standard_normal(17), rng.standard_normal(17)
    b1, b2 = 0.4, -0.2
    sa = DiffusionSolver(1.0, 16, 0.01, init=i1)
    sb = DiffusionSolver(1.0, 16, 0.01, init=i2)
    sc = DiffusionSolver(1.0, 16, 0.01, init=i1 + i2)
    for _ in range(5):
        sa.step(b1)
        sb.step(b2)
        sc.step(b1 + b2)
    assert np.allclose(sa.values + sb.values, sc.values, atol=1e-12)


# ---------------------------------------------------------------- transport

def test_transport_impulse_delay():
    d = TransportDelay(3.0, 0.01)  # 300 steps
    outs = [d.step(1.0 if k == 0 else 0.0) for k in range(400)]
    nonzero = [k for k, v in enumerate(outs) if v != 0.0]
    assert nonzero == [300]


def test_transport_sinusoid_identity():
    a, w, D, dt = 0.2, 10.0, 1.0, 0.005
    d = TransportDelay(D, dt)
    n = 600
    outs = np.empty(n)
    for k in range(n):
        outs[k] = d.step(a * math.sin(w * k * dt))
    ks = np.arange(n)
    mask = ks * dt >= D
    expect = a * np.sin(w * (ks[mask] - round(D / dt)) * dt)
    assert np.max(np.abs(outs[mask] - expect)) < 1e-12


def test_transport_constant_fill():
    d = TransportDelay(0.5, 0.01)
    outs = [d.step(1.0) for _ in range(60)]
    assert outs[49] == 0.0
    assert outs[50] == 1.0


def test_transport_divisibility_error():
    with pytest.raises(ValidationError):
        TransportDelay(1.0, 0.003)


def test_transport_buffer_length_constant():
    d = TransportDelay(1.0, 0.25)
    for _ in range(10):
        d.step(1.0)
    assert len(d.buffer) == 4


def test_transport_blowup():
    d = TransportDelay(0.1, 0.05)
    with pytest.raises(NumericalBlowup):
        d.step(float("inf"))
        d.step(0.0)
        d.step(0.0)


# ---------------------------------------------------------------- wave

def test_wave_zero_stays_zero():
    s = WaveSolver(1.0, 32, 1.0 / 64)
    for _ in range(100):
        s.step(0.0)
    assert np.all(s.values == 0.0)


def test_wave_cfl_construction_error():
    with pytest.raises(ValidationError):
        WaveSolver(1.0, 16, 0.5)


def test_wave_manufactured_convergence():
    errs = convergence_errors_wave(1.0, 2.0, [16, 32, 64], 0.5, 1.0 / 32)
    for coarse, fine in zip(errs, errs[1:]):
        assert 3.5 <= coarse / fine <= 4.5


def test_wave_energy_drift_with_frozen_boundary():
    # standing wave, boundary pinned at its initial value
    omega = math.pi / 2  # cos(omega x) hits zero slope only at x=0
    x = uniform_grid(1.0, 64)
    s = WaveSolver(1.0, 64, 1.0 / 128,
                   init=np.cos(omega * x),
                   init_velocity=np.zeros(65))
    e0 = s.energy()
    periods = 10
    steps = int(round(periods * (2 * math.pi / omega) / (1.0 / 128)))
    for _ in range(steps):
        s.step(s.values[-1])
    assert abs(s.energy() - e0) / e0 <= 0.01


def test_wave_linearity():
    rng = np.random.default_rng(8)
    i1, i2 = rng.standard_normal(33), rng.standard_normal(33)
    v1, v2 = rng.standard_normal(33), rng.standard_normal(33)
    sa = WaveSolver(1.0, 32, 1.0 / 64, init=i1, init_velocity=v1)
    sb = WaveSolver(1.0, 32, 1.0 / 64, init=i2, init_velocity=v2)
    sc = WaveSolver(1.0, 32, 1.0 / 64, init=i1 + i2, init_velocity=v1 + v2)
    for k in range(20):
        sa.step(0.3 * k)
        sb.step(-0.1 * k)
        sc.step(0.2 * k)
    assert np.allclose(sa.values + sb.values, sc.values, atol=1e-12)


# ---------------------------------------------------------------- rad

def test_rad_degenerates_to_diffusion():
    init = np.sin(np.linspace(0, 3, 25))
    r = RadSolver(1.0, 24, 0.01, eps=1.0, adv=0.0, reaction=0.0, init=init.copy())
    d = DiffusionSolver(1.0, 24, 0.01, init=init.copy())
    for k in range(40):
        bc = 0.3 * math.sin(0.7 * k)
        r.step(bc)
        d.step(bc)
    assert np.allclose(r.values, d.values, atol=1e-12)


def test_rad_growth_bounded_by_reaction_rate():
    # zero boundary drive, nonzero interior: ||u(t)|| <= e^{lam t} ||u0|| (1+tol)
    lam, dt, steps = 0.8, 0.005, 200
    x = uniform_grid(1.0, 32)
    init = np.sin(math.pi * x)
    r = RadSolver(1.0, 32, dt, eps=1.0, adv=0.0, reaction=lam, init=init)
    n0 = np.linalg.norm(init)
    for _ in range(steps):
        r.step(0.0)
    bound = math.exp(lam * steps * dt) * n0 * 1.01
    assert np.linalg.norm(r.values) <= bound


def test_rad_uniform_exponential_manufactured():
    # u = e^{lam t} (constant in x) solves the system when the drive matches
    lam, dt = 0.8, 0.01
    r = RadSolver(1.0, 16, dt, eps=1.0, adv=0.0, reaction=lam,
                  init=np.ones(17))
    for k in range(100):
        r.step(math.exp(lam * (k + 1) * dt))
    exact = math.exp(lam * 100 * dt)
    assert np.max(np.abs(r.values - exact)) < 5e-5 * exact  # second order in dt


def test_rad_linearity():
    rng = np.random.default_rng(13)
    i1, i2 = rng.standard_normal(17), rng.standard_normal(17)
    mk = lambda init: RadSolver(1.0, 16, 0.01, eps=1.0, adv=0.2, reaction=0.3,
                                init=init)
    sa, sb, sc = mk(i1), mk(i2), mk(i1 + i2)
    for _ in range(10):
        sa.step(0.5)
        sb.step(-0.1)
        sc.step(0.4)
    assert np.allclose(sa.values + sb.values, sc.values, atol=1e-12)


# ---------------------------------------------------------------- stefan

def test_stefan_frozen_front_equals_diffusion():
    scale = 0.8
    init = np.cos(np.linspace(0, 2, 25))
    st = StefanSolver(scale, 0.0, 24, 0.005, init=init.copy())
    di = DiffusionSolver(scale, 24, 0.005, init=init.copy())
    for k in range(60):
        bc = 0.2 * math.sin(3.0 * k * 0.005)
        st.step(bc)
        di.step(bc)
    assert np.max(np.abs(st.values - di.values)) < 1e-10


def test_stefan_zero_stays_zero():
    st = StefanSolver(1.0, 0.02, 16, 0.005)
    for _ in range(100):
        st.step(0.0)
    assert np.all(st.values == 0.0)


def test_stefan_front_position():
    st = StefanSolver(1.0, 0.02, 16, 0.005)
    for _ in range(100):
        st.step(0.1)
    t = 100 * 0.005
    assert st.front() == pytest.approx(math.exp(-0.02 * t))
    assert st.physical_nodes()[-1] == pytest.approx(st.front())


def test_stefan_front_collapse_raises():
    st = StefanSolver(1.0, 5.0, 16, 0.5, floor=1e-2)
    with pytest.raises(NumericalBlowup):
        for _ in range(100):
            st.step(0.0)


def test_stefan_matches_front_tracking_oracle():
    # independent explicit front-tracking discretization, coarse comparison
    drive = lambda t: 0.3 * math.sin(4.0 * t)
    t_final = 0.5
    st = StefanSolver(1.0, 0.1, 64, 1e-3)
    steps = int(round(t_final / 1e-3))
    for k in range(steps):
        st.step(drive((k + 1) * 1e-3))
    x_ref, u_ref, t_ref = stefan_front_tracking(1.0, 0.1, 64, t_final, drive)
    ours = np.interp(x_ref, st.physical_nodes(), st.values)
    assert np.max(np.abs(ours - u_ref)) <= 1e-3


def test_stefan_linearity():
    rng = np.random.default_rng(21)
    i1, i2 = rng.standard_normal(17), rng.standard_normal(17)
    mk = lambda init: StefanSolver(1.0, 0.05, 16, 0.005, init=init)
    sa, sb, sc = mk(i1), mk(i2), mk(i1 + i2)
    for _ in range(10):
        sa.step(0.2)
        sb.step(0.3)
        sc.step(0.5)
    assert np.allclose(sa.values + sb.values, sc.values, atol=1e-12)


# ---------------------------------------------------------------- shared IBVP

def test_solve_ibvp_transport_exact_characteristics():
    scen = Scenario(pde_class="transport", domain=1.0)
    drive = lambda t: math.sin(7.0 * t)
    t_out = np.array([0.0, 0.4, 1.3])
    x, t, vals = solve_ibvp("transport", scen, drive, 16, 0.01, t_out)
    for i, tv in enumerate(t_out):
        expect = np.where(tv - x >= 0.0, np.sin(7.0 * (tv - x)), 0.0)
        assert np.max(np.abs(vals[i] - expect)) < 1e-12


def test_solve_ibvp_zero_drive_everywhere_zero():
    scen = Scenario()
    for cls in ("diffusion", "rad", "wave", "stefan"):
        s = Scenario(**{**scen.__dict__, "pde_class": cls,
                        "dt": 0.002, "n_x": 16})
        x, t, vals = solve_ibvp(cls, s, lambda t: 0.0, 16, 0.002,
                                np.array([0.0, 0.05, 0.1]))
        assert np.all(vals == 0.0), cls


def test_solve_ibvp_diffusion_face_values():
    scen = Scenario()
    drive = lambda t: math.sin(50.0 * t)
    t_out = np.linspace(0.0, 0.25, 6)
    x, t, vals = solve_ibvp("diffusion", scen, drive, 32, 1e-4, t_out)
    drv = np.array([drive(tv) for tv in t_out])
    assert np.max(np.abs(vals[:, 0] - drv)) < 1e-12  # driven face
    assert np.max(np.abs(vals[:, -1])) < 1e-12       # far homogeneous face

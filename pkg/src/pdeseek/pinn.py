"""Physics-informed network, written from scratch on numpy.

A tanh MLP maps (x, t) to a scalar field value. The forward pass carries five
streams per layer (value, d/dx, d/dt, d2/dx2, d2/dt2) propagated with the
exact chain rule, so the PDE residual uses floating-point-exact derivatives
of the network rather than finite differences. The loss gradient is a hand
written reverse pass over the same streams. Training is plain Adam on fresh
uniform collocation draws every iteration.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (STREAM_BOUNDARY, STREAM_COLLOCATION, STREAM_DATA,
                   STREAM_INITIAL, STREAM_NET_INIT, TrainingDivergence,
                   ValidationError, rng_stream)
from .pde_solvers import stefan_front

STREAMS = 5  # value, x, t, xx, tt


@dataclass
class Net:
    """Tanh MLP with an input affine map onto [-1, 1]^2.

    weights[i] has shape (n_in, n_out); hidden layers apply tanh, the last
    layer is linear with scalar output. in_shift/in_scale hold the box
    normalization; derivative streams are seeded with in_scale so every
    returned derivative is with respect to the physical inputs.
    """
    weights: list
    biases: list
    in_shift: np.ndarray
    in_scale: np.ndarray

    def parameter_vector(self):
        return np.concatenate([w.ravel() for w in self.weights]
                              + [b.ravel() for b in self.biases])


def init_net(hidden_layers, width, box, seed):
    """Glorot-uniform init from the seeded net-init stream.

    box = (x_lo, x_hi, t_lo, t_hi) defines the input normalization.
    """
    rng = rng_stream(seed, STREAM_NET_INIT)
    sizes = [2] + [width] * hidden_layers + [1]
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    x_lo, x_hi, t_lo, t_hi = box
    shift = np.array([0.5 * (x_lo + x_hi), 0.5 * (t_lo + t_hi)])
    scale = np.array([2.0 / (x_hi - x_lo) if x_hi > x_lo else 1.0,
                      2.0 / (t_hi - t_lo) if t_hi > t_lo else 1.0])
    return Net(weights, biases, shift, scale)


def _forward(net, pts):
    """Propagate the five streams; returns (streams, caches).

    streams is (5, N, 1): value, u_x, u_t, u_xx, u_tt at the N points.
    caches hold what the reverse pass needs per layer.
    """
    n = pts.shape[0]
    S = np.zeros((STREAMS, n, 2))
    S[0] = (pts - net.in_shift) * net.in_scale
    S[1, :, 0] = net.in_scale[0]
    S[2, :, 1] = net.in_scale[1]
    caches = []
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        A = (S.reshape(STREAMS * n, -1) @ W).reshape(STREAMS, n, -1)
        A[0] += b
        if i == last:
            caches.append((S, W, None, None))
            S = A
        else:
            z = np.tanh(A[0])
            s1 = 1.0 - z * z
            out = np.empty_like(A)
            out[0] = z
            out[1] = s1 * A[1]
            out[2] = s1 * A[2]
            s2 = -2.0 * z * s1
            out[3] = s2 * A[1] ** 2 + s1 * A[3]
            out[4] = s2 * A[2] ** 2 + s1 * A[4]
            caches.append((S, W, A, z))
            S = out
    return S, caches


def _backward(net, caches, g_out):
    """Reverse pass: adjoints of the five output streams -> parameter grads."""
    g_w = [None] * len(net.weights)
    g_b = [None] * len(net.biases)
    G = g_out
    for i in range(len(net.weights) - 1, -1, -1):
        S_in, W, A, z = caches[i]
        n = S_in.shape[1]
        if A is not None:
            # through the tanh block: G arrives w.r.t. the block outputs
            s1 = 1.0 - z * z
            s2 = -2.0 * z * s1
            s3 = -2.0 * s1 * s1 - 2.0 * z * s2
            gA = np.empty_like(G)
            gA[0] = (G[0] * s1 + G[1] * s2 * A[1] + G[2] * s2 * A[2]
                     + G[3] * (s3 * A[1] ** 2 + s2 * A[3])
                     + G[4] * (s3 * A[2] ** 2 + s2 * A[4]))
            gA[1] = G[1] * s1 + G[3] * 2.0 * s2 * A[1]
            gA[2] = G[2] * s1 + G[4] * 2.0 * s2 * A[2]
            gA[3] = G[3] * s1
            gA[4] = G[4] * s1
        else:
            gA = G
        g_w[i] = S_in.reshape(STREAMS * n, -1).T @ gA.reshape(STREAMS * n, -1)
        g_b[i] = gA[0].sum(axis=0)
        if i:
            G = (gA.reshape(STREAMS * n, -1) @ W.T).reshape(STREAMS, n, -1)
    return g_w, g_b


def forward_with_derivatives(net, x, t):
    """(u, u_x, u_t, u_xx, u_tt) of the network at points (x, t).

    Scalars in, scalars out; arrays in, arrays out.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    pts = np.column_stack([np.atleast_1d(x).ravel(),
                           np.atleast_1d(np.asarray(t, dtype=float)).ravel()
                           * np.ones(np.atleast_1d(x).size)])
    S, _ = _forward(net, pts)
    out = tuple(S[k][:, 0] for k in range(STREAMS))
    if scalar:
        return tuple(float(v[0]) for v in out)
    return out


@dataclass
class Condition:
    """One quadratic penalty: mean over pts of (sum_k coeff_k * stream_k - target)^2.

    coeff values may be scalars or per-point arrays (variable-coefficient
    operators). group names the loss row it accumulates into.
    """
    pts: np.ndarray
    coeffs: dict
    target: np.ndarray
    group: str
    weight: float = 1.0


_STREAM_INDEX = {"u": 0, "ux": 1, "ut": 2, "uxx": 3, "utt": 4}


def loss_and_grads(net, conditions):
    """Total loss, per-group breakdown, and parameter gradients."""
    parts = {"pde": 0.0, "bc": 0.0, "ic": 0.0, "data": 0.0}
    g_w = [np.zeros_like(w) for w in net.weights]
    g_b = [np.zeros_like(b) for b in net.biases]
    total = 0.0
    for cond in conditions:
        n = cond.pts.shape[0]
        if n == 0:
            raise ValidationError(f"empty point set for loss group {cond.group!r}")
        S, caches = _forward(net, cond.pts)
        resid = -np.asarray(cond.target, dtype=float).reshape(n, 1)
        for name, coeff in cond.coeffs.items():
            c = np.asarray(coeff, dtype=float)
            if c.ndim:
                c = c.reshape(n, 1)
            resid = resid + c * S[_STREAM_INDEX[name]]
        term = float(np.mean(resid**2))
        parts[cond.group] += cond.weight * term
        total += cond.weight * term
        seed = (2.0 * cond.weight / n) * resid
        G = np.zeros_like(S)
        for name, coeff in cond.coeffs.items():
            c = np.asarray(coeff, dtype=float)
            if c.ndim:
                c = c.reshape(n, 1)
            G[_STREAM_INDEX[name]] += c * seed
        dw, db = _backward(net, caches, G)
        for i in range(len(g_w)):
            g_w[i] += dw[i]
            g_b[i] += db[i]
    return total, parts, (g_w, g_b)


def loss_only(net, conditions):
    """Loss and breakdown without gradients (evaluation path)."""
    parts = {"pde": 0.0, "bc": 0.0, "ic": 0.0, "data": 0.0}
    total = 0.0
    for cond in conditions:
        n = cond.pts.shape[0]
        if n == 0:
            raise ValidationError(f"empty point set for loss group {cond.group!r}")
        S, _ = _forward(net, cond.pts)
        resid = -np.asarray(cond.target, dtype=float).reshape(n, 1)
        for name, coeff in cond.coeffs.items():
            c = np.asarray(coeff, dtype=float)
            if c.ndim:
                c = c.reshape(n, 1)
            resid = resid + c * S[_STREAM_INDEX[name]]
        term = float(np.mean(resid**2))
        parts[cond.group] += cond.weight * term
        total += cond.weight * term
    return total, parts


class Adam:
    """Standard Adam over the (weights, biases) structure."""

    def __init__(self, net, eta, beta1=0.9, beta2=0.999, eps=1e-8):
        self.eta, self.beta1, self.beta2, self.eps = eta, beta1, beta2, eps
        self.m_w = [np.zeros_like(w) for w in net.weights]
        self.v_w = [np.zeros_like(w) for w in net.weights]
        self.m_b = [np.zeros_like(b) for b in net.biases]
        self.v_b = [np.zeros_like(b) for b in net.biases]
        self.t = 0

    def step(self, net, grads):
        g_w, g_b = grads
        for g in g_w + g_b:
            if not np.all(np.isfinite(g)):
                raise TrainingDivergence("non-finite gradient in optimizer step")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for ms, vs, ps, gs in ((self.m_w, self.v_w, net.weights, g_w),
                               (self.m_b, self.v_b, net.biases, g_b)):
            for m, v, p, g in zip(ms, vs, ps, gs):
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                p -= self.eta * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class TrainConfig:
    """Training hyperparameters.

    n_residual is the size of the interior collocation draw; batch overrides
    it per iteration when set (the quantity swept in the batch-size study).
    Fresh uniform points are drawn for every term on every iteration.
    """
    eta: float = 1e-3       # initial rate; decays geometrically to eta*eta_decay
    eta_decay: float = 1.0  # final/initial ratio, 1 keeps the rate constant
    iterations: int = 5000
    hidden_layers: int = 3
    width: int = 32
    n_residual: int = 2000
    n_bc: int = 256
    n_ic: int = 256
    n_data: int = 0
    batch: int = 0  # 0 means n_residual
    seed: int = 42
    weight_pde: float = 1.0
    # face misfit is amplified exponentially by the trajectory continuation,
    # so the boundary group carries extra weight by default
    weight_bc: float = 10.0
    weight_ic: float = 1.0
    weight_data: float = 1.0
    t_pad: float = 0.2  # trajectory-mode collocation margin, fraction of a period
    # averaged weights over the trailing fraction of iterations are returned
    # instead of the last iterate; fresh collocation draws every step keep the
    # tail in a noise ball around the optimum and the average sits near its
    # center. 0 disables.
    tail_average: float = 0.2
    log_every: int = 100

    def validate(self):
        if not self.eta > 0:
            raise ValidationError(f"eta must be > 0, got {self.eta}")
        if not 0 < self.eta_decay <= 1:
            raise ValidationError(f"eta_decay must be in (0, 1], got {self.eta_decay}")
        if not 0.0 <= self.tail_average <= 1.0:
            raise ValidationError(
                f"tail_average must be in [0, 1], got {self.tail_average}")
        for name in ("iterations", "hidden_layers", "width", "n_residual", "n_bc"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        return self


def desk_config(**overrides):
    return TrainConfig(**overrides).validate()


def paper_config(**overrides):
    """Full-size configuration: 5x100 net, 40000 iterations, 10000 points."""
    base = dict(hidden_layers=5, width=100, iterations=40000, n_residual=10000,
                eta=1e-3)
    base.update(overrides)
    return TrainConfig(**base).validate()


@dataclass
class TrainedNet:
    net: Net
    history: list          # rows (step, total, pde, bc, ic, data)
    final_parts: dict
    mode: str
    pde_class: str
    box: tuple
    extract_x: object = None  # callable t -> abscissa for extraction
    # diffusion trajectory mode trains the bounded phase field v with
    # u = e^{kappa x} v, kappa = sqrt(omega/2); 0 means the raw field
    envelope_kappa: float = 0.0


def _pde_condition(pde_class, mode, scen, pts, weight, kappa=0.0):
    x, t = pts[:, 0], pts[:, 1]
    if pde_class == "diffusion" or (pde_class == "stefan" and mode == "trajectory"):
        if kappa:
            # envelope-factored residual: with u = e^{kappa x} v the heat
            # operator becomes v_t - v_xx - 2 kappa v_x - kappa^2 v
            coeffs = {"ut": 1.0, "uxx": -1.0, "ux": -2.0 * kappa, "u": -kappa * kappa}
        else:
            coeffs = {"ut": 1.0, "uxx": -1.0}
    elif pde_class == "wave":
        coeffs = {"utt": 1.0, "uxx": -1.0}
    elif pde_class == "transport":
        # trajectory advances along characteristics, the plant solve is causal
        coeffs = {"ut": 1.0, "ux": -1.0} if mode == "trajectory" else {"ut": 1.0, "ux": 1.0}
    elif pde_class == "rad":
        coeffs = {"ut": 1.0, "uxx": -scen.eps, "ux": -scen.adv, "u": -scen.reaction}
    elif pde_class == "stefan":
        # front-normalized coordinate, variable coefficients
        s = stefan_front(t, scen.front_scale, scen.front_rate)
        coeffs = {"ut": 1.0, "uxx": -1.0 / s**2, "ux": scen.front_rate * x}
    else:
        raise ValidationError(f"unknown pde_class {pde_class!r}")
    return Condition(pts, coeffs, np.zeros(len(pts)), "pde", weight)


def train(pde_class, scen, cfg, mode="trajectory", drive=None):
    """Fit the network to the class PDE in one of two problem modes.

    trajectory: impose only the two measured-face conditions
    (u(0,t) = a sin(w t), u_x(0,t) = 0; transport drops the slope condition)
    on the box x in [0, L], t in a window padding one dither period by 20%
    on both sides. The signal of interest is then the trace u(L, t) (moving
    front: u(s(t), t)). For diffusion the continuation grows like
    e^{sqrt(w/2) x}, and a small net spends its whole capacity on that
    envelope; the net therefore learns the bounded phase field v with
    u = e^{kappa x} v (kappa = sqrt(w/2)), the residual and face conditions
    transformed exactly, and extraction scales the trace back.

    ibvp: the side-by-side comparison problem with drive(t) at x = 0,
    homogeneous Dirichlet at x = L, zero initial state.
    """
    cfg.validate()
    if mode not in ("trajectory", "ibvp"):
        raise ValidationError(f"mode must be 'trajectory' or 'ibvp', got {mode!r}")
    period = 2.0 * math.pi / scen.omega
    if pde_class == "stefan":
        length = scen.front_scale if mode == "trajectory" else 1.0
    else:
        length = scen.domain
    if mode == "trajectory":
        t_lo, t_hi = -cfg.t_pad * period, (1.0 + cfg.t_pad) * period
        # finite propagation speed: the face data must cover the
        # characteristics that feed the far-face trace (transport runs
        # one way, the wave cone opens both ways)
        if pde_class == "transport":
            t_hi += length
        elif pde_class == "wave":
            t_lo -= length
            t_hi += length
    else:
        if drive is None:
            raise ValidationError("ibvp mode needs a drive callable")
        t_lo, t_hi = 0.0, 2.0 * (2.0 * math.pi / (5.0 * scen.omega))
    kappa = (math.sqrt(scen.omega / 2.0)
             if pde_class == "diffusion" and mode == "trajectory" else 0.0)
    box = (0.0, length, t_lo, t_hi)
    net = init_net(cfg.hidden_layers, cfg.width, box, cfg.seed)
    opt = Adam(net, cfg.eta)
    rng_col = rng_stream(cfg.seed, STREAM_COLLOCATION)
    rng_bc = rng_stream(cfg.seed, STREAM_BOUNDARY)
    rng_ic = rng_stream(cfg.seed, STREAM_INITIAL)
    n_batch = cfg.batch or cfg.n_residual
    history = []
    parts = {}
    avg_from = (cfg.iterations - max(1, int(round(cfg.tail_average * cfg.iterations)))
                if cfg.tail_average > 0.0 else cfg.iterations)
    avg_w = avg_b = None
    n_avg = 0

    for it in range(cfg.iterations):
        pts = np.column_stack([rng_col.uniform(0.0, length, n_batch),
                               rng_col.uniform(t_lo, t_hi, n_batch)])
        conds = [_pde_condition(pde_class, mode, scen, pts, cfg.weight_pde, kappa)]
        tb = rng_bc.uniform(t_lo, t_hi, cfg.n_bc)
        face = np.column_stack([np.zeros(cfg.n_bc), tb])
        if mode == "trajectory":
            conds.append(Condition(face, {"u": 1.0},
                                   scen.amp * np.sin(scen.omega * tb), "bc", cfg.weight_bc))
            # differentiated face data: pins the face slope in t with no new
            # information, tightens the continuation anchor
            conds.append(Condition(face, {"ut": 1.0},
                                   scen.amp * scen.omega * np.cos(scen.omega * tb),
                                   "bc", cfg.weight_bc))
            if pde_class != "transport":
                # with the envelope factored out, u_x(0) = 0 reads
                # v_x(0) + kappa v(0) = 0
                slope = {"ux": 1.0, "u": kappa} if kappa else {"ux": 1.0}
                conds.append(Condition(face, slope,
                                       np.zeros(cfg.n_bc), "bc", cfg.weight_bc))
        else:
            conds.append(Condition(face, {"u": 1.0},
                                   np.array([drive(tv) for tv in tb]), "bc", cfg.weight_bc))
            if pde_class != "transport":
                far = np.column_stack([np.full(cfg.n_bc, length), tb])
                conds.append(Condition(far, {"u": 1.0},
                                       np.zeros(cfg.n_bc), "bc", cfg.weight_bc))
            xi_pts = np.column_stack([rng_ic.uniform(0.0, length, cfg.n_ic),
                                      np.zeros(cfg.n_ic)])
            conds.append(Condition(xi_pts, {"u": 1.0},
                                   np.zeros(cfg.n_ic), "ic", cfg.weight_ic))
            if pde_class == "wave":
                conds.append(Condition(xi_pts, {"ut": 1.0},
                                       np.zeros(cfg.n_ic), "ic", cfg.weight_ic))
        total, parts, grads = loss_and_grads(net, conds)
        if not math.isfinite(total) or total > 1e6:
            err = TrainingDivergence(f"loss {total!r} at iteration {it}")
            err.history = history
            raise err
        if it % cfg.log_every == 0 or it == cfg.iterations - 1:
            history.append((it, total, parts["pde"], parts["bc"], parts["ic"], parts["data"]))
        if cfg.eta_decay < 1.0 and cfg.iterations > 1:
            opt.eta = cfg.eta * cfg.eta_decay ** (it / (cfg.iterations - 1.0))
        opt.step(net, grads)
        if it >= avg_from:
            if avg_w is None:
                avg_w = [w.copy() for w in net.weights]
                avg_b = [b.copy() for b in net.biases]
            else:
                for acc, w in zip(avg_w, net.weights):
                    acc += w
                for acc, b in zip(avg_b, net.biases):
                    acc += b
            n_avg += 1

    if n_avg:
        net.weights = [w / n_avg for w in avg_w]
        net.biases = [b / n_avg for b in avg_b]

    if pde_class == "stefan" and mode == "trajectory":
        def extract_x(t):
            return stefan_front(t, scen.front_scale, scen.front_rate)
    else:
        def extract_x(t):
            return np.full_like(np.asarray(t, dtype=float), length)
    return TrainedNet(net, history, parts, mode, pde_class, box,
                      envelope_kappa=kappa, extract_x=extract_x)


def extract_signal(trained, t_grid, at_x=None):
    """Trace of the trained field on the extraction abscissa.

    Default abscissa is the far boundary (moving front for the stefan
    trajectory mode); at_x overrides it with a fixed position.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0:
        return np.zeros(0)
    x = np.full_like(t_grid, at_x) if at_x is not None else trained.extract_x(t_grid)
    pts = np.column_stack([x, t_grid])
    S, _ = _forward(trained.net, pts)
    out = S[0][:, 0].copy()
    if trained.envelope_kappa:
        out *= np.exp(trained.envelope_kappa * x)
    return out


def mse(pred, ref):
    """Mean squared difference; lengths must match."""
    pred = np.asarray(pred, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if pred.shape != ref.shape or pred.size == 0:
        raise ValidationError(f"mse needs equal nonempty shapes, got {pred.shape} and {ref.shape}")
    return float(np.mean((pred - ref) ** 2))

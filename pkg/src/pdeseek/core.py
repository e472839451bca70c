"""Shared types, scenario configuration, deterministic RNG streams, CSV persistence."""

import configparser
import dataclasses
import math

import numpy as np

PDE_CLASSES = ("diffusion", "transport", "wave", "rad", "stefan")
# scenarios also accept the measure-averaged delay variant (uniform measure)
SCENARIO_CLASSES = PDE_CLASSES + ("distributed_delay",)

# Named RNG streams. Every stochastic operation draws from an explicit stream
# keyed by (seed, stream id) through a counter-based generator, so adding a new
# consumer never perturbs existing draws.
STREAM_NET_INIT = 1
STREAM_COLLOCATION = 2
STREAM_BOUNDARY = 3
STREAM_INITIAL = 4
STREAM_DATA = 5
STREAM_TEST_POINTS = 6


class ValidationError(ValueError):
    """A scenario or configuration value violates its contract."""


class NumericalBlowup(RuntimeError):
    """A solver or closed loop produced non-finite values."""


class TrainingDivergence(RuntimeError):
    """Network training lost finiteness of its loss."""


def rng_stream(seed, stream):
    """Deterministic generator for one named stream of one seed.

    Philox is counter-based: the (seed, stream) pair is the key, so streams
    are independent and reproducible regardless of draw order elsewhere.
    """
    key = np.array([np.uint64(seed), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclasses.dataclass
class Scenario:
    """Full description of one closed-loop experiment.

    Defaults reproduce the reference operating point: quadratic map with
    curvature -2 peaking at (2, 5), dither 0.2*sin(10 t), lowpass corner 10,
    integrator gain 0.2, unit domain.
    """

    pde_class: str = "diffusion"
    domain: float = 1.0          # actuator domain length D
    curvature: float = -2.0      # quadratic map curvature, < 0 seeks a maximum
    theta_star: float = 2.0      # unknown optimizer location
    y_star: float = 5.0          # unknown optimum value
    amp: float = 0.2             # dither amplitude a (0.0 switches dither off)
    omega: float = 10.0          # dither frequency
    corner: float = 10.0         # lowpass corner c of the control filter
    gain: float = 0.2            # integrator gain K
    theta_hat0: float = 0.0      # initial parameter estimate
    eps: float = 1.0             # reaction-advection-diffusion: diffusivity
    adv: float = 0.2             # reaction-advection-diffusion: advection
    reaction: float = 0.3        # reaction-advection-diffusion: reaction
    front_scale: float = 1.0     # stefan: front position scale k_t
    front_rate: float = 0.02     # stefan: front decay rate k_b
    meas_delay: float = 0.0      # extra measurement delay D_t (hyperbolic runs)
    wave_rho: str = "affine"     # wave kernel: "affine" (stabilizing), "const", "zero"
    n_x: int = 128
    dt: float = 0.005
    t_end: float = 100.0
    seed: int = 0

    def dither_period(self):
        return 2.0 * math.pi / self.omega

    def xi(self):
        """Shifted reaction coefficient adv^2/(4 eps) - reaction."""
        return self.adv * self.adv / (4.0 * self.eps) - self.reaction


def validate_scenario(scen, reject_zero_amp=False):
    """Raise ValidationError on any violated scenario invariant.

    amp == 0.0 exactly is tolerated as the documented dither-off case unless
    reject_zero_amp is set (the file loader sets it).
    """
    if scen.pde_class not in SCENARIO_CLASSES:
        raise ValidationError(
            f"unknown pde_class {scen.pde_class!r}, expected one of {SCENARIO_CLASSES}")
    if not scen.domain > 0:
        raise ValidationError(f"domain must be > 0, got {scen.domain}")
    if not scen.omega > 0:
        raise ValidationError(f"omega must be > 0, got {scen.omega}")
    if not scen.corner > 0:
        raise ValidationError(f"corner must be > 0, got {scen.corner}")
    if not scen.gain > 0:
        raise ValidationError(f"gain must be > 0, got {scen.gain}")
    if reject_zero_amp and scen.amp == 0.0:
        raise ValidationError("amp must be nonzero in scenario files")
    if not scen.curvature < 0:
        raise ValidationError(f"curvature must be < 0 (maximum seeking), got {scen.curvature}")
    if not scen.dt > 0:
        raise ValidationError(f"dt must be > 0, got {scen.dt}")
    if scen.n_x < 8:
        raise ValidationError(f"n_x must be >= 8, got {scen.n_x}")
    if not scen.t_end >= scen.dither_period():
        raise ValidationError(
            f"t_end must cover one dither period {scen.dither_period():.6g}, got {scen.t_end}")
    if scen.pde_class in ("transport", "distributed_delay"):
        ratio = scen.domain / scen.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError(
                f"{scen.pde_class} needs domain/dt integer, got {ratio!r}")
    if scen.meas_delay < 0:
        raise ValidationError(f"meas_delay must be >= 0, got {scen.meas_delay}")
    if scen.meas_delay > 0:
        ratio = scen.meas_delay / scen.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError(f"meas_delay/dt must be integer, got {ratio!r}")
    if scen.pde_class == "rad":
        if not scen.eps > 0:
            raise ValidationError(f"eps must be > 0, got {scen.eps}")
        if scen.xi() > 1e-12:
            raise ValidationError(
                f"adv^2/(4 eps) - reaction must be <= 0, got {scen.xi()}")
    if scen.pde_class == "stefan":
        if not scen.front_scale > 0:
            raise ValidationError(f"front_scale must be > 0, got {scen.front_scale}")
        if scen.front_rate < 0:
            raise ValidationError(f"front_rate must be >= 0, got {scen.front_rate}")
    if scen.pde_class == "wave" and scen.dt > scen.domain / scen.n_x:
        raise ValidationError(
            f"wave CFL needs dt <= dx = {scen.domain / scen.n_x:.6g}, got dt={scen.dt}")
    if scen.wave_rho not in ("affine", "const", "zero"):
        raise ValidationError(
            f"wave_rho must be 'affine', 'const', or 'zero', got {scen.wave_rho!r}")
    return scen


# scenario file schema: section -> key -> (attribute, parser)
_SCHEMA = {
    "scenario": {"pde_class": ("pde_class", str), "seed": ("seed", int)},
    "plant": {
        "domain": ("domain", float), "eps": ("eps", float), "adv": ("adv", float),
        "reaction": ("reaction", float), "front_scale": ("front_scale", float),
        "front_rate": ("front_rate", float), "meas_delay": ("meas_delay", float),
    },
    "map": {
        "curvature": ("curvature", float), "theta_star": ("theta_star", float),
        "y_star": ("y_star", float),
    },
    "dither": {"amp": ("amp", float), "omega": ("omega", float)},
    "control": {
        "corner": ("corner", float), "gain": ("gain", float),
        "theta_hat0": ("theta_hat0", float), "wave_rho": ("wave_rho", str),
    },
    "grid": {"n_x": ("n_x", int), "dt": ("dt", float), "t_end": ("t_end", float)},
}


def load_scenario(path=None, overrides=None):
    """Build a Scenario from an INI file, defaults, and keyword overrides.

    Sections and keys outside the schema are rejected. Omitted keys keep
    their defaults. `overrides` is applied after the file, before validation.
    """
    scen = Scenario()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ValidationError(f"cannot read scenario file {path}")
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ValidationError(f"unknown section [{section}] in {path}")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ValidationError(f"unknown key {key!r} in section [{section}] of {path}")
                attr, parse = _SCHEMA[section][key]
                try:
                    setattr(scen, attr, parse(raw))
                except ValueError as exc:
                    raise ValidationError(f"bad value for {section}.{key}: {raw!r}") from exc
    if overrides:
        for attr, value in overrides.items():
            if not hasattr(scen, attr):
                raise ValidationError(f"unknown scenario override {attr!r}")
            setattr(scen, attr, value)
    return validate_scenario(scen, reject_zero_amp=path is not None)


@dataclasses.dataclass
class Field:
    """One-dimensional profile sampled on uniformly spaced nodes."""

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.x.shape != self.values.shape or self.x.ndim != 1:
            raise ValidationError("field nodes and values must be equal-length 1-D arrays")

    @property
    def spacing(self):
        return self.x[1] - self.x[0]

    def copy(self):
        return Field(self.x.copy(), self.values.copy())


def uniform_grid(length, n_x):
    return np.linspace(0.0, length, n_x + 1)


TRACE_COLUMNS = ("t", "theta", "Theta", "y", "U", "S", "Hhat", "G")


@dataclasses.dataclass
class SimTrace:
    """Column-oriented log of one closed-loop run."""

    t: np.ndarray
    theta: np.ndarray
    Theta: np.ndarray
    y: np.ndarray
    U: np.ndarray
    S: np.ndarray
    Hhat: np.ndarray
    G: np.ndarray

    def columns(self):
        return {name: getattr(self, name) for name in TRACE_COLUMNS}

    def __len__(self):
        return len(self.t)


def _fmt(value):
    # 17 significant digits round-trips IEEE doubles exactly
    return format(float(value), ".17g")


def write_trace_csv(trace, path):
    cols = trace.columns()
    n = len(trace)
    if n == 0:
        raise ValidationError("refusing to write an empty trace")
    with open(path, "w") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt(cols[name][i]) for name in TRACE_COLUMNS) + "\n")


def read_trace_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != TRACE_COLUMNS:
            raise ValidationError(f"unexpected trace header {header} in {path}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=float)
    if data.size == 0:
        data = data.reshape(0, len(TRACE_COLUMNS))
    return SimTrace(*(data[:, i].copy() for i in range(len(TRACE_COLUMNS))))


def write_field_csv(path, x, t, values):
    """Write a space-time grid as rows of x, t, value.

    x: (n_x,), t: (n_t,), values: (n_t, n_x); row order is t-major so columns
    of equal t are contiguous.
    """
    values = np.asarray(values)
    if values.shape != (len(t), len(x)):
        raise ValidationError(f"field grid shape {values.shape} != ({len(t)}, {len(x)})")
    with open(path, "w") as fh:
        fh.write("x,t,value\n")
        for j, tj in enumerate(t):
            for i, xi in enumerate(x):
                fh.write(f"{_fmt(xi)},{_fmt(tj)},{_fmt(values[j, i])}\n")


def write_columns_csv(path, header, columns):
    """Write named columns of equal length with full-precision floats."""
    n = len(columns[0])
    for col in columns:
        if len(col) != n:
            raise ValidationError("column length mismatch")
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(
                c[i] if isinstance(c[i], str) else _fmt(c[i]) for c in columns) + "\n")

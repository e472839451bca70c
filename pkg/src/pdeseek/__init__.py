"""Extremum seeking through PDE actuator dynamics.

A static quadratic map sits behind a PDE (delay line, heat layer, wave
channel, reaction-advection-diffusion layer, or a melting front). The
package provides the actuator solvers, the trajectory-generation signals
needed to push the dither through the dynamics (closed forms, numeric
references, and trained networks), the boundary-compensation control laws,
closed-loop simulation, and an averaged-system verifier.
"""

from .core import (Field, NumericalBlowup, Scenario, SimTrace,
                   TrainingDivergence, ValidationError, load_scenario,
                   read_trace_csv, rng_stream, uniform_grid,
                   validate_scenario, write_field_csv, write_trace_csv)
from .dither import (analytic_dither, demod_curvature, demod_gradient,
                     diffusion_dither, diffusion_residual_certificate,
                     distributed_dither, numeric_dither, rad_series_dither,
                     stefan_continuation_dither, stefan_series_dither,
                     transport_dither, wave_dither)
from .escontrol import (StaticMap, backstepping_forward,
                        backstepping_inverse, backstepping_inverse_discrete,
                        backstepping_residual, corner_thresholds, estimates,
                        lowpass_step, lyapunov_weights)
from .pde_solvers import (DiffusionSolver, RadSolver, StefanSolver,
                          TransportDelay, WaveSolver, solve_ibvp,
                          stefan_front, tdma)
from .pinn import (Adam, Condition, Net, TrainConfig, TrainedNet,
                   desk_config, extract_signal, forward_with_derivatives,
                   init_net, loss_and_grads, loss_only, mse, paper_config,
                   train)
from .simloop import (diffusion_law_equivalence, lyapunov_monitor,
                      run_average_system, run_closed_loop)

__version__ = "0.1.0"

__all__ = [
    "Adam", "Condition", "DiffusionSolver", "Field", "Net",
    "NumericalBlowup", "RadSolver", "Scenario", "SimTrace", "StaticMap",
    "StefanSolver", "TrainConfig", "TrainedNet", "TrainingDivergence",
    "TransportDelay", "ValidationError", "WaveSolver", "analytic_dither",
    "backstepping_forward", "backstepping_inverse",
    "backstepping_inverse_discrete", "backstepping_residual",
    "corner_thresholds", "demod_curvature", "demod_gradient", "desk_config",
    "diffusion_dither", "diffusion_law_equivalence",
    "diffusion_residual_certificate", "distributed_dither", "estimates",
    "extract_signal", "forward_with_derivatives", "init_net",
    "load_scenario", "loss_and_grads", "loss_only", "lowpass_step",
    "lyapunov_monitor", "lyapunov_weights", "mse", "numeric_dither",
    "paper_config", "rad_series_dither", "read_trace_csv", "rng_stream",
    "run_average_system", "run_closed_loop", "solve_ibvp", "stefan_front",
    "stefan_continuation_dither", "stefan_series_dither", "tdma", "train",
    "transport_dither", "uniform_grid", "validate_scenario", "wave_dither",
    "write_field_csv", "write_trace_csv",
]

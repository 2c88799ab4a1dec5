"""Neural semi-Lagrangian solver with a classical grid baseline."""
from .characteristics import AdvectionField, Domain, FlowConfig, diffusion_feet, foot, wrap_periodic
from .classical import Grid, GridField, lagrange3_interp, sl_run, sl_sweep_step
from .driver import NslConfig, NslTrajectory, init_fit, nsl_step, run
from .fit import BoundaryCondition, FitConfig, fit_least_squares, natural_grad_direction
from .metrics import ErrorReport, convergence_slope, relative_error, volume_negative
from .network import ActivationKind, NetworkSpec, forward, init_params, param_jacobian
from .numerics import RngStream, rng_uniform, spd_solve
from .sampling import AdaptiveConfig, ParamSpace, adaptive_sample, gradient_focus, uniform_sample
from .scenarios import SCENARIO_NAMES, Scenario, exact_eval, make_scenario, vlasov_reference

__version__ = "0.1.0"

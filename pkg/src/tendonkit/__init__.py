"""tendonkit: modeling, control and simulation of coupled tendon-driven arms."""

from .controller import (Controller, ControllerConfig, MeasuredState, Reference, computed_torque,
                         control_step, tension_command, torque_from_tension)
from .dynamics import (bias_forces, effective_mass, effective_mass_field, forward_dynamics, gravity_vector,
                       inertia_matrix, inverse_dynamics, max_contact_force, operational_inertia)
from .errors import TendonkitError
from .kinematics import (end_effector_position, forward_kinematics, muscle_jacobian, muscle_jacobian_fd,
                         point_jacobian, wire_lengths)
from .model import RobotModel, bundled_model, load_model, load_model_file, moving_part_mass
from .scenario import ScenarioSpec, load_scenario, load_scenario_file
from .sim import apply_plane_contact, run_scenario, wire_transmission
from .tension import TensionProblem, TensionSolver, solve_tension
from .trace import Trace, summarize

__version__ = "0.1.0"

__all__ = [
    "Controller", "ControllerConfig", "MeasuredState", "Reference", "RobotModel", "ScenarioSpec",
    "TendonkitError", "TensionProblem", "TensionSolver", "Trace", "apply_plane_contact", "bias_forces",
    "bundled_model", "computed_torque", "control_step", "effective_mass", "effective_mass_field",
    "end_effector_position", "forward_dynamics", "forward_kinematics", "gravity_vector", "inertia_matrix",
    "inverse_dynamics", "load_model", "load_model_file", "load_scenario", "load_scenario_file",
    "max_contact_force", "moving_part_mass", "muscle_jacobian", "muscle_jacobian_fd", "operational_inertia",
    "point_jacobian", "run_scenario", "solve_tension", "summarize", "tension_command", "torque_from_tension",
    "wire_lengths", "wire_transmission",
]

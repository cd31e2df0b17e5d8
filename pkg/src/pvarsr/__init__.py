"""Data-driven modeling and control toolkit for grid-connected PV plants.

Pipeline: simulate physical dq-frame plant models, identify sparse
dynamics from the sampled data with per-state adaptive thresholds, design
PI current controllers from the identified coefficients, and validate the
assembled data-driven loops against the physical ones, including fault
replay.
"""

from .arsr import ArsrConfig, ArsrReport, adaptive_sindy, per_state_rmse, scalar_lambda_sweep
from .control import (ControllerGains, assemble_data_driven_system,
                      closed_loop_step_response, design_current_controller,
                      design_from_model, extract_plant_params)
from .evaluation import ComparisonReport, compare_models, fault_study
from .features import FeatureLibrary, LibrarySpec, TermDescriptor, build_library, evaluate_library, term_name
from .plant import (CLOSED_LOOP, SINGLE_STAGE, TWO_STAGE, PlantParameters,
                    Schema, closed_loop_rhs, controller_outputs,
                    default_parameters, single_stage_rhs, two_stage_rhs)
from .regression import SparseModel, least_squares, load_model, save_model, simulate_identified, stlsq
from .simulator import (FaultSpec, ReferenceSchedule, Trajectory, integrate,
                        numeric_derivatives, simulate, split_train_test)

__version__ = "0.1.0"

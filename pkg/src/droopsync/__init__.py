"""droopsync: simulation and gain synthesis for distributed secondary
frequency control of droop-based inverter microgrids under communication
delays."""

from .comms import (BufferHorizonError, DelayBounds, DelayTrace,
                    HistoryBuffer, buffer_query, generate_delay_trace)
from .controller import (AgentState, LeaderReference, agent_step,
                         consensus_rate, ism_rate, sign_select,
                         verify_gain_condition)
from .engine import InitialState, SimulationError, Trajectory, run
from .lmi import (CertificateCheck, LkWeights, LmiCertificate,
                  SynthesisError, SynthesisOptions, assemble_xi,
                  assemble_xi_completed, build_error_series,
                  certify_matrix, check_certificate, evaluate_lk_functional,
                  lk_weights_from_certificate, scalar_gain_ceiling,
                  synthesize_gains)
from .metrics import settling_time, sharing_error, summarize, window_metrics
from .output import read_csv, write_csv, write_svg
from .plant import (DgParams, DisturbanceBound, LoadComponent, LoadProfile,
                    LoadRamp, disturbance_rate, droop_equilibrium,
                    droop_steady_state, plant_derivatives, power_flow,
                    sharing_ratio)
from .scenario import (Event, Scenario, ScenarioError, load_gains_file,
                       load_scenario, packaged_scenario_path,
                       scenario_from_dict)
from .topology import (CommTopology, ElectricalGraph, GainSet, TopologyError,
                       disagreement_matrix, error_dynamics_matrix,
                       follower_matrix, pinned_matrix, reduced_error_matrix)

__version__ = "0.1.0"

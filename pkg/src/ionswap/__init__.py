"""Simulation and analysis of fast physical ion swapping in a segmented
Paul trap: calibrated surrogate potentials, voltage waveforms and filter
distortion, classical crystal dynamics with per-mode excitation, a
shuttling/qubit sequence engine, process tomography, and sideband
thermometry."""

from .dynamics import (CrystalState, ExcitationReport, ModeSet, Trajectory,
                       find_equilibrium, integrate, mode_excitation,
                       normal_modes)
from .filters import FilterModel, apply_filter
from .qubits import FieldMap, QubitRegister, ReadoutModel, ramsey_field_scan
from .sequences import (SequenceEngine, World, build_swap_tomography,
                        build_three_ion_reorder, validate)
from .thermometry import RabiDataset, fit_phonon_number, rabi_model
from .tomography import (chi_from_states, process_fidelity, readout_correct,
                         state_from_counts, truth_table_from_runs)
from .trap import TrapGeometry, VoltageAssignment, calibrate, potential
from .waveforms import (SwapRampParams, VoltageSchedule, separation_schedule,
                        swap_schedule, transport_schedule)

__version__ = "0.1.0"

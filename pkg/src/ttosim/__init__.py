"""Tree tensor operator simulation of boundary-driven open spin chains."""

from .channels import (KrausSet, LindbladSpec, apply_dissipative_step,
                       build_dissipator, kraus_from_channel)
from .evolution import (EnvironmentCache, HamTerm, HamiltonianSpec,
                        TrotterStepper, effective_apply, tdvp_half_sweep,
                        tdvp_unitary, trotter_step)
from .linalg import (DenseTensor, KrylovError, SvdResult, arnoldi_expv,
                     contract, hermitian_eig, krylov_expv, matrix_exp,
                     trace_norm, truncated_svd)
from .models import (XXZParams, boundary_drive, initial_state, xxz_hamiltonian)
from .observables import (MeasurementRecord, entanglement_of_formation,
                          entropies, local_expectation, log_negativity,
                          measure, mutual_information, spin_current)
from .oracle import (DenseLiouvillian, build_liouvillian, dense_observables,
                     evolve_exact, exact_trajectory, export_reference_trajectory,
                     stationary_state, two_qubit_eof)
from .recordsio import read_records, write_records
from .tree import (TTOState, canonical_ensemble, compress, contract_to_dense,
                   from_product_state, install_gauge, load_state, pad_to_caps,
                   route_leg_to_root, save_state)

__version__ = "0.1.0"

"""Information obtainable from n identical copies of a quantum state.

Exact n-copy measurement channels, their capacity over discretized state
ensembles, the large-n distinguishability estimates, and Monte Carlo
identification experiments.
"""

__version__ = "0.1.0"

from qdistinct.asymptotics import (AsymptoticValidityWarning, i_sup_ndim, i_sup_qubit, omega_max,  # noqa: E402
                                   w_max_ndim, w_max_qubit, w_ndim, w_qubit)
from qdistinct.capacity import (CapacityResult, KKTReport, SolverConfig, blahut_arimoto,  # noqa: E402
                                capacity_sweep, kkt_verify)
from qdistinct.geometry import (AngleInterval, DiscreteEnsemble, SphericalDomain,  # noqa: E402
                                uniform_angle_grid, uniform_domain_grid)
from qdistinct.information import (MeasurementChannel, asymptotic_marginal, individual_information,  # noqa: E402
                                   mutual_information, output_marginal)
from qdistinct.prob_kernel import OutcomeCounts, StatePoint, binomial_pmf, multinomial_pmf  # noqa: E402
from qdistinct.simulator import (SimulationConfig, SimulationReport, build_codebook,  # noqa: E402
                                 error_vs_load_sweep, run_experiment)

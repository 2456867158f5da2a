"""Classical-chain reductions of the reservoir dynamics."""

from .clock import (ClockVariant, FrontierReport, build_ancilla_clock_ctmc, clock_aggregates,
                    effective_up_rate, frontier_count, off_principal_bound,
                    principal_populations_formula, verify_frontier_convergence)
from .ctmc import ChainReport, CtmcModel, ReducibleChain, ctmc_stationary
from .statecond import (build_reduced_state_cond_chain, ghz_population, imperfect_sync_correction,
                        kappa_hat_u, llp_exact, llp_leading_order, optimal_rates_state_cond,
                        state_cond_predicted_error)
from .wave import (build_qutrit_aggregate_chain, build_qutrit_sequential_chain,
                   build_qutrit_wave_chain_full, ghz_estimate_method2, lattice_crossing_rate,
                   lattice_denominator, lattice_expected_time, lattice_relative_populations,
                   sequential_closed_form, sequential_first_order)

__all__ = [
    "ChainReport", "ClockVariant", "CtmcModel", "FrontierReport", "ReducibleChain",
    "build_ancilla_clock_ctmc", "build_qutrit_aggregate_chain", "build_qutrit_sequential_chain",
    "build_qutrit_wave_chain_full", "build_reduced_state_cond_chain", "clock_aggregates",
    "ctmc_stationary", "effective_up_rate", "frontier_count", "ghz_estimate_method2",
    "ghz_population", "imperfect_sync_correction", "kappa_hat_u", "lattice_crossing_rate",
    "lattice_denominator", "lattice_expected_time", "lattice_relative_populations",
    "llp_exact", "llp_leading_order", "off_principal_bound", "optimal_rates_state_cond",
    "principal_populations_formula", "sequential_closed_form", "sequential_first_order",
    "state_cond_predicted_error", "verify_frontier_convergence",
]

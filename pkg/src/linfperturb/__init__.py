"""Singular-vector perturbation bounds, Monte Carlo verification and spectral recovery."""

__version__ = "0.1.0"

from .bounds import (BoundParams, BoundReport, StabilityReport, bound_report,
                     calibrated_constant, coordinate_bound, davis_kahan, estimate_T,
                     linf_corollary, linf_main, linf_refined, ovw_l2,
                     singular_tail_bound, stability_check)
from .cluster import (CliquePartition, HiddenPartition, PlantedGraph, RecoveryResult,
                      SpectralClique, clique_partition, fsc, hidden_partition,
                      ith_clique, planted_clique_graph, planted_partition_graph, score)
from .complete import (ApproximateAndRound, CompletionConfig, ObservationModel,
                       approximate_and_round, check_recovery, complete_noisy, observe,
                       shift_for_nonzero, unshift)
from .linalg import (SpectralDecomposition, align_sign, leave_one_out_vector,
                     low_rank_truncate, read_matrix, spectral_decompose, spectral_norm,
                     symmetrize, vector_metrics, write_matrix, zero_out)
from .models import (NoiseSpec, PartitionSpec, SignalSummary, adjacency_transform,
                     clique_signal, draw_noise, integer_block_signal, make_rng,
                     partition_signal, rect_signal_summary, signal_summary)
from .verify import (SweepResult, TrialRecord, aggregate, leave_alpha_out, run_trials,
                     verify_delocalization, verify_deterministic, verify_facts,
                     verify_singular_tails)

//! Surrogate-assisted NSGA-II over early-exit genomes.

pub mod archive;
pub mod engine;
pub mod metrics;
pub mod nsga2;
pub mod surrogate;

pub use archive::{
    append_entry, first_admissible_iteration, Archive, ArchiveEntry, ARCHIVE_VERSION,
};
pub use engine::{
    candidate_seed, hypervolume_trace, search_loop, select_final, train_candidate, EntrySink,
    IterationLog, Objective, Pick, SearchConfig, SearchOutcome,
};
pub use metrics::{
    admissible_ratio, dominates, fcm, hypervolume, kendall_tau, knee_index, nearest_to,
    pareto_indices, select_tradeoff,
};
pub use nsga2::{
    crossover_mutate, crowded_order, crowding_distance, mutate, nondominated_sort,
    nsga2_generation, rank_and_crowding, two_point_crossover, GaParams,
};
pub use surrogate::{
    cross_validate, fit_and_switch_surrogates, select_surrogate, Family, Selected, Surrogate,
};

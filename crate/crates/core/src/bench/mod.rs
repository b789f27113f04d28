//! Benchmark generation, evaluation metrics and exact oracles.

mod assignment;
mod metrics;
mod mixture;
mod pair;
mod problems;

pub use assignment::{discrete_ot_oracle, matching_cost, solve_assignment, squared_distances, MAX_ORACLE_SIZE};
pub use metrics::{cos_sim, evaluate, l2_uvp, EvalReport, N_EVAL};
pub use mixture::{Gaussian, GaussianMixture};
pub use pair::{
    gaussian_half_w2, gaussian_ot_map, make_pair_brenier, make_pair_pullback, total_variance, AffineMap,
    GroundTruthPair, PointMap, Side, TransportMap,
};
pub use problems::{multi_problem, pair_problem, random_spd, MultiProblem};

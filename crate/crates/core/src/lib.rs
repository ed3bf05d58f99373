//! Analytical detection theory and Monte Carlo validation for diffusive
//! molecular links with decode-and-forward relays.
//!
//! The pipeline runs from the channel (per-slot arrival probabilities of a
//! drifting Brownian molecule) through received-count moments and optimal
//! thresholds to per-node detection rates, end-to-end error probability and
//! capacity. [`monte_carlo`] simulates the same chains trial by trial.

pub mod capacity;
pub mod channel;
pub mod detection;
pub mod error;
pub mod moments;
pub mod monte_carlo;
pub mod performance;
pub mod quadrature;
pub mod special;

pub use capacity::{
    budget_sweep, capacity, mutual_information, BudgetPoint, BudgetSweep, CapacityResult,
};
pub use channel::{
    arrival_probability, arrival_profile, hitting_time_pdf, ArrivalProfile, DiffusionLink,
};
pub use detection::{
    brute_force_prior_ratio, decide, effective_prior_ratio, optimal_threshold, EffectiveOdds,
    NodePerformance, Rates, ThresholdEntry, ThresholdSchedule,
};
pub use error::{Error, Result};
pub use moments::{hypothesis_moments, EmissionSchedule, HypothesisMoments, MsiParams};
pub use monte_carlo::{simulate_chain, Estimate, SimConfig, SimReport};
pub use performance::{
    brute_force_relayed_rates, chain_rates, error_probability, relayed_rates, single_link_rates,
    system_metrics, ChainConfig, ChainModel, ChainReport, RelayMode,
};
pub use special::q_function;

//! Effective capacity of renewal reward service processes, with HARQ link
//! models and Monte Carlo cross-checks.
//!
//! The effective capacity at QoS exponent `θ` is `ln ζ / θ`, where `ζ` is
//! the spectral root of the renewal equation. [`renewal`] covers constant
//! rewards, [`reward`] state-dependent rewards, [`finite_time`] the
//! finite-horizon mgf, [`harq`] maps HARQ schemes onto reward tables,
//! [`mc`] estimates what has no closed form and [`rate_opt`] searches rate
//! grids.

pub mod error;
pub mod finite_time;
pub mod harq;
pub mod mc;
pub mod numeric;
pub mod rate_opt;
pub mod renewal;
pub mod reward;

pub use error::{Error, Result};
pub use finite_time::{
    effective_capacity_finite, phi_determinant, phi_enumeration, phi_recursion, PhiSeries,
};
pub use harq::{
    ec_max_arrival, ec_outage, interarrival_pmf_from_outage, ltat_harq, outage_closed_form,
    outage_curve_closed_form, reward_table_outage, Fading, HarqConfig, HarqTable, OutageCurve,
    Scheme,
};
pub use mc::{
    estimate_mgf_finite, estimate_reward_table, sample_episode, McEstimate, McParams, McTable,
};
pub use rate_opt::{evaluate_rates, optimize_rates, Optimum, RateGrid, RatePoint};
pub use renewal::{
    approx_constant, bounds_constant, effective_capacity_constant, pmf_moments,
    solve_zeta_constant, solve_zeta_continuous, EcResult, InterarrivalPmf,
};
pub use reward::{
    approx_variable, bounds_variable, coefficients_a, effective_capacity_variable, ltat,
    solve_zeta_variable, solve_zeta_variable_continuous, RewardEntry, RewardTable,
};

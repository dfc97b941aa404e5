//! Simulation designs and the Monte Carlo harness.

mod designs;
mod monte_carlo;

pub use designs::{
    gen_kang_schafer, gen_kang_schafer_rng, gen_qin_zhang, gen_qin_zhang_rng, kang_schafer_x, OrSetting, SimDesign,
    QZ_MODERATE,
};
pub use monte_carlo::{
    fmt_num, replicate_rng, run_monte_carlo, CellSummary, Moments, MonteCarloOptions, MonteCarloReport,
    ReplicateEstimate,
};

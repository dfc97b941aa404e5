//! Point estimators of `nu^0`, `nu^1` and the ATT, and influence-function variance estimates.

mod basic;
mod bundle;
mod influence;
mod output;
mod tilde_h;

pub use basic::{
    hir_weights, nu0_aipw, nu0_ipw, nu1_aipw_sp, nu1_np, nu_or, odds_weights, sp_denominator_gap, tau0,
    AipwFlavor, HirWeights,
};
pub use bundle::{evaluate_cell, CellEstimate, CellSpec};
pub use influence::{influence_values, influence_variance, project_on_scores, InfluenceKind};
pub use output::{EstimatorKind, EstimatorOutput};
pub use tilde_h::{build_tilde_h, nu_reg, ControlVariates, HBlock, RegEstimate, TildeH};

//! Outcome regression, propensity score and augmented propensity score models.

mod augmented;
mod general;
mod outcome;
mod propensity;
mod regressors;

pub use augmented::{fit_aug_ps, AugVariant, AugmentedPsFit};
pub use general::fit_aug_ps_general;
pub use outcome::{fit_or, OutcomeFit};
pub use propensity::{fit_ps, fit_ps_with, Link, Probit, PropensityFit};
pub use regressors::{build_regressors, RegressorKind, RegressorSpec, RowFn, Term};

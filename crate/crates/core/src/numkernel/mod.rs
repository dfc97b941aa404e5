//! Dense linear algebra and binary-regression kernels shared by the model fits.

mod binary;
mod design;
mod lstsq;
mod pca;

pub use binary::{
    expit, fit_binary, fit_logistic, logit, BinaryFit, BinaryFitOptions, BinaryLink, LinkEval,
    LogisticFit, Logit,
};
pub use design::{dot, mean, ColumnKind, ColumnLabel, DesignMatrix};
pub use lstsq::{
    detect_redundancy, independent_columns, solve_least_squares, solve_or_min_norm,
    LeastSquaresFit, OrderedQr, DEFAULT_RANK_TOL,
};
pub use pca::{pca_filter, PcaTransform};

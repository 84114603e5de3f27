//! Model fitters used inside test statistics: cross-validated lasso for
//! gaussian and binomial responses, GLM deviance, and a random forest with
//! out-of-bag permutation importance.

mod forest;
mod glm;
mod lasso;

pub use forest::{fit_forest, forest_importance, oob_predictions, ForestFit, ForestTask, Tree};
pub use glm::{glm_deviance, GlmFit};
pub use lasso::{fit_lasso, fit_lasso_cv, lasso_lambda_max, LassoFit};

/// Response family for penalized and unpenalized GLM fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    Binomial,
}

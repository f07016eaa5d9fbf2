//! Descriptive statistics, hypothesis tests and least-squares regression.

pub mod descriptive;
pub mod hypothesis;
pub mod ols;
pub mod special;

pub use descriptive::{descriptive_stats, DescriptiveStats};
pub use hypothesis::{anova_oneway, paired_t_test, unpaired_t_test, AnovaResult, TTestResult};
pub use ols::{deviation_regression, ols_fit, RegressionResult};

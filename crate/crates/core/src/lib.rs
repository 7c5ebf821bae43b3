//! Example-based explanations for tabular regression models.
//!
//! A subject's value is estimated from comparable examples in four ways:
//! similarity-weighted averaging, a linear regression over the comparables,
//! local linear adjustments, and piecewise-linear counterfactual traces that
//! follow the model's decision surface from each comparable to the subject.

pub mod baselines;
pub mod comparables;
pub mod evaluation;
pub mod explain;
pub mod linalg;
pub mod methods;
pub mod optim;
pub mod predictors;
pub mod schema;
pub mod trace;

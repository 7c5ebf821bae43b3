use std::fmt;

use cxai_core::baselines::BaselineError;
use cxai_core::evaluation::EvalError;
use cxai_core::explain::ExplainError;
use cxai_core::predictors::PredictError;
use cxai_core::schema::{IngestError, SchemaError};
use cxai_core::trace::TraceError;

/// Exit-code class attached to an error as anyhow context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Config,
    Data,
    Predictor,
    Bind,
}

impl Failure {
    pub fn code(self) -> u8 {
        match self {
            Failure::Config => 2,
            Failure::Data => 3,
            Failure::Predictor => 4,
            Failure::Bind => 5,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Failure::Config => "configuration error",
            Failure::Data => "data error",
            Failure::Predictor => "predictor error",
            Failure::Bind => "cannot bind",
        })
    }
}

impl std::error::Error for Failure {}

fn of_baseline(e: &BaselineError) -> Failure {
    match e {
        BaselineError::Predict(_) => Failure::Predictor,
        _ => Failure::Data,
    }
}

fn of_trace(e: &TraceError) -> Failure {
    match e {
        TraceError::InvalidConfig(_) => Failure::Config,
        TraceError::Predict(_) => Failure::Predictor,
        TraceError::Baseline(b) => of_baseline(b),
        _ => Failure::Data,
    }
}

fn of_explain(e: &ExplainError) -> Failure {
    match e {
        ExplainError::InvalidRequest(_) => Failure::Config,
        ExplainError::Predict(_) => Failure::Predictor,
        ExplainError::Trace(t) => of_trace(t),
        ExplainError::Baseline(b) => of_baseline(b),
        _ => Failure::Data,
    }
}

/// Exit code for an error: explicit context wins, then the typed source.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return f.code();
    }
    let class = if let Some(e) = err.downcast_ref::<ExplainError>() {
        Some(of_explain(e))
    } else if let Some(e) = err.downcast_ref::<EvalError>() {
        Some(match e {
            EvalError::InvalidSpec(_) => Failure::Config,
            EvalError::Explain(e) => of_explain(e),
            _ => Failure::Data,
        })
    } else if err.downcast_ref::<PredictError>().is_some() {
        Some(Failure::Predictor)
    } else if err.downcast_ref::<IngestError>().is_some() || err.downcast_ref::<SchemaError>().is_some() {
        Some(Failure::Data)
    } else {
        err.downcast_ref::<TraceError>().map(of_trace)
    };
    class.map_or(1, Failure::code)
}

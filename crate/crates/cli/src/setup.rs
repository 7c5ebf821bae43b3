//! Turning flags, environment and spec files into an explanation context.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use cxai_core::evaluation::{SensitivitySpec, SweepSpec, SyntheticTask};
use cxai_core::explain::ExplainContext;
use cxai_core::predictors::{fit_knn, Predictor, RemotePredictor, SyntheticPredictor, PREDICTOR_URL_ENV};
use cxai_core::schema::{load_csv, AttributeSchema, Standardizer};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::args::DataArgs;
use crate::failure::Failure;

const DEFAULT_KNN_K: usize = 5;
const REMOTE_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorSpec {
    Knn(usize),
    Synthetic(PathBuf),
    Remote(String),
}

impl PredictorSpec {
    /// Flag first, then the environment, then the config file.
    pub fn resolve(flag: Option<&str>, env_url: Option<String>, file: Option<&str>) -> Result<Self> {
        let env_url = env_url.filter(|u| !u.is_empty());
        let text = match (flag, &env_url, file) {
            (Some(f), _, _) => f.to_string(),
            (None, Some(url), _) => return Ok(PredictorSpec::Remote(url.clone())),
            (None, None, Some(f)) => f.to_string(),
            (None, None, None) => {
                return Err(anyhow::anyhow!("no predictor given: pass --predictor or set {PREDICTOR_URL_ENV}")
                    .context(Failure::Config))
            }
        };
        Self::parse(&text, env_url)
    }

    fn parse(text: &str, env_url: Option<String>) -> Result<Self> {
        let config = |msg: String| Err(anyhow::anyhow!(msg).context(Failure::Config));
        if text == "remote" {
            return match env_url {
                Some(url) => Ok(PredictorSpec::Remote(url)),
                None => config(format!("--predictor remote needs {PREDICTOR_URL_ENV} to be set")),
            };
        }
        if text.starts_with("http://") || text.starts_with("https://") {
            return Ok(PredictorSpec::Remote(text.to_string()));
        }
        if let Some(path) = text.strip_prefix("synthetic:") {
            return Ok(PredictorSpec::Synthetic(PathBuf::from(path)));
        }
        if text == "knn" {
            return Ok(PredictorSpec::Knn(DEFAULT_KNN_K));
        }
        if let Some(k) = text.strip_prefix("knn:") {
            return match k.parse::<usize>() {
                Ok(k) if k > 0 => Ok(PredictorSpec::Knn(k)),
                _ => config(format!("bad k-NN size `{k}`")),
            };
        }
        config(format!(
            "unknown predictor `{text}` (expected knn[:K], synthetic:<file>, an http(s) URL, or remote)"
        ))
    }
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {what} {}", path.display()))
        .context(Failure::Config)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {what} {}", path.display()))
        .context(Failure::Config)
}

/// Dataset section of a config file; relative paths resolve against that file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub dataset: PathBuf,
    pub schema: PathBuf,
    #[serde(default)]
    pub predictor: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateFile {
    #[serde(default)]
    pub task: Option<SyntheticTask>,
    #[serde(default)]
    pub data: Option<DataSection>,
    pub sweep: SweepSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityFile {
    #[serde(default)]
    pub task: Option<SyntheticTask>,
    #[serde(default)]
    pub data: Option<DataSection>,
    pub sensitivity: SensitivitySpec,
}

pub fn read_evaluate_file(path: &Path) -> Result<EvaluateFile> {
    read_json(path, "evaluate spec")
}

pub fn read_sensitivity_file(path: &Path) -> Result<SensitivityFile> {
    read_json(path, "sensitivity spec")
}

fn env_url() -> Option<String> {
    std::env::var(PREDICTOR_URL_ENV).ok()
}

/// Builds the context from flags alone.
pub fn context_from_flags(data: &DataArgs) -> Result<ExplainContext> {
    let (Some(dataset), Some(schema)) = (&data.dataset, &data.schema) else {
        bail!(anyhow::anyhow!("--dataset and --schema are both required").context(Failure::Config));
    };
    let spec = PredictorSpec::resolve(data.predictor.as_deref(), env_url(), None)?;
    load_context(dataset, schema, &spec, data.predictor_timeout)
}

/// Flags win over the config file's `data` section, which wins over its synthetic `task`.
pub fn context_for_spec(
    data: &DataArgs,
    spec_path: &Path,
    section: Option<&DataSection>,
    task: Option<&SyntheticTask>,
) -> Result<ExplainContext> {
    if data.dataset.is_some() || data.schema.is_some() {
        return context_from_flags(data);
    }
    let base = spec_path.parent().unwrap_or(Path::new("."));
    if let Some(section) = section {
        let predictor = PredictorSpec::resolve(data.predictor.as_deref(), env_url(), section.predictor.as_deref())?;
        return load_context(
            &base.join(&section.dataset),
            &base.join(&section.schema),
            &predictor,
            data.predictor_timeout,
        );
    }
    match task {
        Some(task) => task.build().context(Failure::Config),
        None => Err(anyhow::anyhow!("the config file needs a `task` or `data` section, or pass --dataset and --schema")
            .context(Failure::Config)),
    }
}

fn load_context(dataset: &Path, schema: &Path, spec: &PredictorSpec, timeout_secs: f64) -> Result<ExplainContext> {
    let schema = AttributeSchema::load(schema).context(Failure::Data)?;
    let rows = load_csv(dataset, &schema).context(Failure::Data)?;
    let standardizer = Standardizer::fit(&rows).context(Failure::Data)?;
    let predictor: Arc<dyn Predictor> = match spec {
        PredictorSpec::Knn(k) => Arc::new(fit_knn(&rows, &standardizer, *k).context(Failure::Config)?),
        PredictorSpec::Synthetic(path) => Arc::new(read_json::<SyntheticPredictor>(path, "synthetic model")?),
        PredictorSpec::Remote(url) => {
            if !(timeout_secs > 0.0 && timeout_secs.is_finite()) {
                bail!(anyhow::anyhow!("--predictor-timeout must be positive").context(Failure::Config));
            }
            Arc::new(RemotePredictor::new(
                url.clone(),
                standardizer.dim(),
                Duration::from_secs_f64(timeout_secs),
                REMOTE_RETRIES,
            ))
        }
    };
    let id = dataset
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    tracing::info!(dataset = %dataset.display(), rows = rows.len(), predictor = %predictor.description(), "loaded");
    ExplainContext::with_standardizer(id, rows, standardizer, predictor).context(Failure::Config)
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use cxai_core::evaluation::{run_sensitivity, run_sweep};
use cxai_core::explain::{ExplainOptions, Explanation, SubjectRef};
use cxai_core::schema::{AttributeSchema, Instance};
use cxai_service::{AppState, SessionStore};
use serde::Serialize;

use crate::args::{Command, EvaluateArgs, ExplainArgs, ExplainFormat, ReportFormat, SensitivityArgs, ServeArgs};
use crate::failure::Failure;
use crate::setup::{context_for_spec, context_from_flags, read_evaluate_file, read_sensitivity_file};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Explain(a) => explain(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Sensitivity(a) => sensitivity(&a),
        Command::Serve(a) => serve(&a),
    }
}

fn config_err(msg: String) -> anyhow::Error {
    anyhow::anyhow!(msg).context(Failure::Config)
}

/// Parses `name=value,name=value` against the schema.
pub fn parse_inline(schema: &AttributeSchema, text: &str) -> Result<Instance> {
    let mut pairs = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| config_err(format!("expected name=value, got `{part}`")))?;
        let (name, value) = (name.trim(), value.trim());
        let idx = schema
            .index_of(name)
            .ok_or_else(|| config_err(format!("unknown attribute `{name}`")))?;
        let parsed = schema.parse_value(idx, value).context(Failure::Config)?;
        pairs.push((name, parsed));
    }
    Instance::from_named(schema, pairs, None).context(Failure::Config)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    Ok(buf)
}

fn comparables_csv(doc: &Explanation) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "row",
        "id",
        "distance",
        "similarity",
        "actual_value",
        "ai_prediction",
        "relative_error",
        "adjusted_value",
        "seed",
    ])?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for c in &doc.comparables {
        w.write_record([
            c.row.map(|r| r.to_string()).unwrap_or_default(),
            c.id.clone().unwrap_or_default(),
            c.distance.to_string(),
            c.similarity.to_string(),
            c.actual_value.to_string(),
            c.ai_prediction.to_string(),
            opt(c.relative_error),
            opt(c.adjusted_value),
            doc.seed.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

fn explain(args: &ExplainArgs) -> Result<()> {
    let ctx = context_from_flags(&args.data)?;
    let subject = match (&args.subject, &args.values) {
        (Some(id), _) => SubjectRef::Id(id.clone()),
        (None, Some(values)) => SubjectRef::Inline(parse_inline(&ctx.dataset.schema, values)?),
        (None, None) => return Err(config_err("pass --subject or --values".into())),
    };
    let mut opts = ExplainOptions::new(args.method, args.k, args.seed);
    args.desiderata.apply(&mut opts.desiderata);
    let doc = ctx.explain(&subject, &opts)?;
    let bytes = match args.format {
        ExplainFormat::Json => pretty_json(&doc)?,
        ExplainFormat::Csv => comparables_csv(&doc)?,
    };
    emit(args.out.as_deref(), &bytes)
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir` and returns both payloads.
fn write_report<T: Serialize>(
    dir: &Path,
    stem: &str,
    report: &T,
    csv: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> Result<(Vec<u8>, Vec<u8>)> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut csv_bytes = Vec::new();
    csv(&mut csv_bytes)?;
    let json_bytes = pretty_json(report)?;
    for (ext, bytes) in [("csv", &csv_bytes), ("json", &json_bytes)] {
        let path = dir.join(format!("{stem}.{ext}"));
        let mut f = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        f.write_all(bytes)?;
        f.flush()?;
    }
    tracing::info!(dir = %dir.display(), stem, "report written");
    Ok((csv_bytes, json_bytes))
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let file = read_evaluate_file(&args.spec)?;
    let ctx = context_for_spec(&args.data, &args.spec, file.data.as_ref(), file.task.as_ref())?;
    let mut spec = file.sweep;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    args.desiderata.apply(&mut spec.desiderata);
    let report = run_sweep(&ctx, &spec)?;
    let (csv, json) = write_report(&args.out, "report", &report, |buf| Ok(report.write_csv(buf)?))?;
    match args.format {
        ReportFormat::Table => emit(None, report.summary_table().as_bytes()),
        ReportFormat::Json => emit(None, &json),
        ReportFormat::Csv => emit(None, &csv),
    }
}

fn sensitivity(args: &SensitivityArgs) -> Result<()> {
    let file = read_sensitivity_file(&args.spec)?;
    let ctx = context_for_spec(&args.data, &args.spec, file.data.as_ref(), file.task.as_ref())?;
    let mut spec = file.sensitivity;
    if let Some(seed) = args.seed {
        spec.seeds = vec![seed];
    }
    args.desiderata.apply(&mut spec.base);
    let report = run_sensitivity(&ctx, &spec)?;
    let (csv, json) = write_report(&args.out, "sensitivity", &report, |buf| Ok(report.write_csv(buf)?))?;
    match args.format {
        ReportFormat::Table => emit(None, report.summary_table().as_bytes()),
        ReportFormat::Json => emit(None, &json),
        ReportFormat::Csv => emit(None, &csv),
    }
}

fn serve(args: &ServeArgs) -> Result<()> {
    let ctx = context_from_flags(&args.data)?;
    let sessions = match &args.session_log {
        Some(path) => SessionStore::with_log(path)
            .with_context(|| format!("opening session log {}", path.display()))
            .context(Failure::Config)?,
        None => SessionStore::in_memory(),
    };
    let state = Arc::new(AppState::new(vec![ctx], sessions));
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .with_context(|| format!("binding {}:{}", args.host, args.port))
            .context(Failure::Bind)?;
        let addr = listener.local_addr()?;
        emit(None, format!("{}\n", serde_json::json!({"listening": addr.to_string()})).as_bytes())?;
        let shutdown = async {
            if tokio::signal::ctrl_c().await.is_ok() {
                tracing::info!("interrupt received, draining requests");
            }
        };
        cxai_service::serve(listener, state, shutdown).await?;
        tracing::info!("stopped");
        Ok(())
    })
}

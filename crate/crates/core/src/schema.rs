//! Attribute schemas, tabular ingestion and feature standardization.
//!
//! Every other module works in the encoded space produced by [`Standardizer`]:
//! numeric attributes are z-scored with training-set statistics and categorical
//! attributes become one-hot blocks. The [`FeatureLayout`] records which encoded
//! columns belong to which attribute so that distances, sparsity counts and
//! adjustments can treat a one-hot block as a single attribute.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Encoded feature vector (z-scored numerics, one-hot categoricals).
pub type StandardizedVector = Vec<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("schema must declare at least one attribute")]
    NoAttributes,
    #[error("attribute name must be nonempty")]
    EmptyName,
    #[error("duplicate attribute name `{0}`")]
    DuplicateAttribute(String),
    #[error("categorical attribute `{0}` needs at least two distinct levels")]
    TooFewLevels(String),
    #[error("expected {expected} attribute values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("value `{value}` is not a declared level of `{attribute}`")]
    UnknownLevel { attribute: String, value: String },
    #[error("attribute `{attribute}` expects a {expected} value")]
    WrongKind {
        attribute: String,
        expected: &'static str,
    },
    #[error("non-finite value for `{0}`")]
    NonFinite(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("invalid schema document: {0}")]
    Document(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: {detail}")]
    Parse {
        row: usize,
        column: String,
        detail: String,
    },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("attribute `{0}` has zero variance")]
    DegenerateAttribute(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Numeric { unit: String },
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub kind: AttributeKind,
    #[serde(default)]
    pub display_precision: u32,
}

impl AttributeDef {
    pub fn numeric(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Numeric { unit: unit.into() },
            display_precision: 2,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Categorical {
                levels: levels.into_iter().map(Into::into).collect(),
            },
            display_precision: 0,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, AttributeKind::Numeric { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct AttributeSchema {
    pub attributes: Vec<AttributeDef>,
    pub target_name: String,
    pub target_unit: String,
}

#[derive(Deserialize)]
struct RawSchema {
    attributes: Vec<AttributeDef>,
    target_name: String,
    #[serde(default)]
    target_unit: String,
}

impl TryFrom<RawSchema> for AttributeSchema {
    type Error = SchemaError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        AttributeSchema::new(raw.attributes, raw.target_name, raw.target_unit)
    }
}

impl AttributeSchema {
    pub fn new(
        attributes: Vec<AttributeDef>,
        target_name: impl Into<String>,
        target_unit: impl Into<String>,
    ) -> Result<Self, SchemaError> {
        if attributes.is_empty() {
            return Err(SchemaError::NoAttributes);
        }
        let mut seen = HashSet::new();
        for attr in &attributes {
            if attr.name.trim().is_empty() {
                return Err(SchemaError::EmptyName);
            }
            if !seen.insert(attr.name.as_str()) {
                return Err(SchemaError::DuplicateAttribute(attr.name.clone()));
            }
            if let AttributeKind::Categorical { levels } = &attr.kind {
                let distinct: HashSet<&str> = levels.iter().map(String::as_str).collect();
                if distinct.len() < 2 || distinct.len() != levels.len() {
                    return Err(SchemaError::TooFewLevels(attr.name.clone()));
                }
            }
        }
        Ok(Self {
            attributes,
            target_name: target_name.into(),
            target_unit: target_unit.into(),
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self, SchemaError> {
        serde_json::from_str(text).map_err(|e| SchemaError::Document(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_json_str(&text)?)
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Parses one textual cell for attribute `index`.
    pub fn parse_value(&self, index: usize, text: &str) -> Result<Value, SchemaError> {
        let attr = &self.attributes[index];
        let text = text.trim();
        match &attr.kind {
            AttributeKind::Numeric { .. } => {
                let v: f64 = text.parse().map_err(|_| SchemaError::WrongKind {
                    attribute: attr.name.clone(),
                    expected: "numeric",
                })?;
                if !v.is_finite() {
                    return Err(SchemaError::NonFinite(attr.name.clone()));
                }
                Ok(Value::Number(v))
            }
            AttributeKind::Categorical { levels } => {
                if levels.iter().any(|l| l == text) {
                    Ok(Value::Level(text.to_string()))
                } else {
                    Err(SchemaError::UnknownLevel {
                        attribute: attr.name.clone(),
                        value: text.to_string(),
                    })
                }
            }
        }
    }
}

/// Raw attribute value: a number for numeric attributes, a level name for categoricals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Level(String),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            Value::Level(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => write!(f, "{v}"),
            Value::Level(l) => f.write_str(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub values: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

impl Instance {
    /// Builds an instance, checking it against `schema`.
    ///
    /// Numbers given for a categorical attribute are accepted when their
    /// textual form names a declared level (`3` for level `"3"`).
    pub fn new(schema: &AttributeSchema, values: Vec<Value>, id: Option<String>) -> Result<Self, SchemaError> {
        if values.len() != schema.len() {
            return Err(SchemaError::DimensionMismatch {
                expected: schema.len(),
                got: values.len(),
            });
        }
        let mut checked = Vec::with_capacity(values.len());
        for (attr, value) in schema.attributes.iter().zip(values) {
            let value = match (&attr.kind, value) {
                (AttributeKind::Numeric { .. }, Value::Number(v)) => {
                    if !v.is_finite() {
                        return Err(SchemaError::NonFinite(attr.name.clone()));
                    }
                    Value::Number(v)
                }
                (AttributeKind::Numeric { .. }, Value::Level(_)) => {
                    return Err(SchemaError::WrongKind {
                        attribute: attr.name.clone(),
                        expected: "numeric",
                    })
                }
                (AttributeKind::Categorical { levels }, value) => {
                    let text = value.to_string();
                    if !levels.contains(&text) {
                        return Err(SchemaError::UnknownLevel {
                            attribute: attr.name.clone(),
                            value: text,
                        });
                    }
                    Value::Level(text)
                }
            };
            checked.push(value);
        }
        Ok(Self { values: checked, id })
    }

    /// Builds an instance from `name -> value` pairs; every attribute must be present.
    pub fn from_named<'a>(
        schema: &AttributeSchema,
        pairs: impl IntoIterator<Item = (&'a str, Value)>,
        id: Option<String>,
    ) -> Result<Self, SchemaError> {
        let mut slots: Vec<Option<Value>> = vec![None; schema.len()];
        for (name, value) in pairs {
            let idx = schema
                .index_of(name)
                .ok_or_else(|| SchemaError::UnknownAttribute(name.to_string()))?;
            slots[idx] = Some(value);
        }
        let mut values = Vec::with_capacity(slots.len());
        for (slot, attr) in slots.into_iter().zip(&schema.attributes) {
            values.push(slot.ok_or_else(|| SchemaError::UnknownAttribute(attr.name.clone()))?);
        }
        Self::new(schema, values, id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub instance: Instance,
    pub actual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: AttributeSchema,
    pub rows: Vec<Row>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(schema: AttributeSchema, rows: Vec<Row>, provenance: impl Into<String>) -> Result<Self, IngestError> {
        if rows.is_empty() {
            return Err(IngestError::EmptyDataset);
        }
        for (i, row) in rows.iter().enumerate() {
            Instance::new(&schema, row.instance.values.clone(), None)?;
            if !row.actual.is_finite() {
                return Err(IngestError::Parse {
                    row: i,
                    column: schema.target_name.clone(),
                    detail: "non-finite target".into(),
                });
            }
        }
        Ok(Self {
            schema,
            rows,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Looks a row up by instance id, falling back to its positional index.
    pub fn find(&self, id: &str) -> Option<usize> {
        self.rows
            .iter()
            .position(|r| r.instance.id.as_deref() == Some(id))
            .or_else(|| id.parse::<usize>().ok().filter(|&i| i < self.rows.len()))
    }
}

pub const ID_COLUMN: &str = "id";

/// Reads a CSV file whose header contains every schema attribute plus the target column.
pub fn load_csv(path: impl AsRef<Path>, schema: &AttributeSchema) -> Result<Dataset, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    parse_csv(file, schema, path.display().to_string())
}

/// Parses CSV from any reader. Row ids come from an `id` column when the header
/// has one that is not an attribute, otherwise from zero-based row positions.
pub fn parse_csv<R: Read>(reader: R, schema: &AttributeSchema, provenance: impl Into<String>) -> Result<Dataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column_of = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let attr_cols = schema
        .attributes
        .iter()
        .map(|a| column_of(&a.name))
        .collect::<Result<Vec<_>, _>>()?;
    let target_col = column_of(&schema.target_name)?;
    let id_col = headers
        .iter()
        .position(|h| h == ID_COLUMN)
        .filter(|_| schema.index_of(ID_COLUMN).is_none());

    let mut rows = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let cell = |col: usize, name: &str| {
            record.get(col).filter(|c| !c.is_empty()).ok_or_else(|| IngestError::Parse {
                row: row_idx,
                column: name.to_string(),
                detail: "missing value".into(),
            })
        };
        let mut values = Vec::with_capacity(schema.len());
        for (i, (&col, attr)) in attr_cols.iter().zip(&schema.attributes).enumerate() {
            let text = cell(col, &attr.name)?;
            let value = schema.parse_value(i, text).map_err(|e| IngestError::Parse {
                row: row_idx,
                column: attr.name.clone(),
                detail: e.to_string(),
            })?;
            values.push(value);
        }
        let target_text = cell(target_col, &schema.target_name)?;
        let actual: f64 = target_text
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| IngestError::Parse {
                row: row_idx,
                column: schema.target_name.clone(),
                detail: format!("cannot parse `{target_text}` as a finite number"),
            })?;
        rows.push(Row {
            instance: Instance {
                values,
                id: Some(match id_col.and_then(|c| record.get(c)).filter(|c| !c.is_empty()) {
                    Some(id) => id.to_string(),
                    None => row_idx.to_string(),
                }),
            },
            actual,
        });
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    Ok(Dataset {
        schema: schema.clone(),
        rows,
        provenance: provenance.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Numeric,
    Categorical,
}

/// Encoded columns `start..start + len` belonging to one schema attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub attribute: usize,
    pub start: usize,
    pub len: usize,
    pub kind: BlockKind,
}

impl FeatureBlock {
    pub fn columns(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }

    /// Weight of each column in L1 measurements. A one-hot level switch moves
    /// two columns by 1, so categorical columns count half.
    pub fn column_weight(&self) -> f64 {
        match self.kind {
            BlockKind::Numeric => 1.0,
            BlockKind::Categorical => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    blocks: Vec<FeatureBlock>,
    dim: usize,
}

impl FeatureLayout {
    /// Layout with `dim` independent numeric columns.
    pub fn numeric(dim: usize) -> Self {
        let blocks = (0..dim)
            .map(|i| FeatureBlock {
                attribute: i,
                start: i,
                len: 1,
                kind: BlockKind::Numeric,
            })
            .collect();
        Self { blocks, dim }
    }

    pub fn from_schema(schema: &AttributeSchema) -> Self {
        let mut start = 0;
        let mut blocks = Vec::with_capacity(schema.len());
        for (i, attr) in schema.attributes.iter().enumerate() {
            let (len, kind) = match &attr.kind {
                AttributeKind::Numeric { .. } => (1, BlockKind::Numeric),
                AttributeKind::Categorical { levels } => (levels.len(), BlockKind::Categorical),
            };
            blocks.push(FeatureBlock {
                attribute: i,
                start,
                len,
                kind,
            });
            start += len;
        }
        Self { blocks, dim: start }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[FeatureBlock] {
        &self.blocks
    }

    /// Per-column L1 weight, see [`FeatureBlock::column_weight`].
    pub fn column_weights(&self) -> Vec<f64> {
        let mut w = vec![1.0; self.dim];
        for block in &self.blocks {
            for c in block.columns() {
                w[c] = block.column_weight();
            }
        }
        w
    }

    /// Size of the change in one attribute between two encoded vectors.
    pub fn block_change(&self, block: &FeatureBlock, a: &[f64], b: &[f64]) -> f64 {
        block.column_weight() * block.columns().map(|c| (a[c] - b[c]).abs()).sum::<f64>()
    }

    /// Standardized Manhattan distance with one-hot blocks counted as one unit per level switch.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.blocks.iter().map(|blk| self.block_change(blk, a, b)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnEncoding {
    ZScore { mean: f64, std: f64 },
    OneHot { levels: Vec<String> },
}

/// Training-set statistics mapping raw instances to the encoded space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    schema: AttributeSchema,
    layout: FeatureLayout,
    encodings: Vec<ColumnEncoding>,
    target_mean: f64,
    target_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Standardizer {
    /// Fits z-score statistics (population std) for numeric attributes and
    /// one-hot maps for categoricals.
    pub fn fit(dataset: &Dataset) -> Result<Self, IngestError> {
        if dataset.rows.is_empty() {
            return Err(IngestError::EmptyDataset);
        }
        let schema = dataset.schema.clone();
        let mut encodings = Vec::with_capacity(schema.len());
        for (i, attr) in schema.attributes.iter().enumerate() {
            let enc = match &attr.kind {
                AttributeKind::Numeric { .. } => {
                    let col = dataset.rows.iter().map(|r| r.instance.values[i].as_number().unwrap_or(f64::NAN));
                    let (mean, std) = mean_std(col);
                    if !(std > 1e-12 * mean.abs().max(1.0)) {
                        return Err(IngestError::DegenerateAttribute(attr.name.clone()));
                    }
                    ColumnEncoding::ZScore { mean, std }
                }
                AttributeKind::Categorical { levels } => ColumnEncoding::OneHot { levels: levels.clone() },
            };
            encodings.push(enc);
        }
        let (target_mean, target_std) = mean_std(dataset.rows.iter().map(|r| r.actual));
        Ok(Self {
            layout: FeatureLayout::from_schema(&schema),
            schema,
            encodings,
            target_mean,
            target_std,
        })
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn encodings(&self) -> &[ColumnEncoding] {
        &self.encodings
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    /// Spread of the training targets; used to put trace losses on a unit scale.
    /// Falls back to 1 for a constant target column.
    pub fn target_scale(&self) -> f64 {
        if self.target_std > 0.0 {
            self.target_std
        } else {
            1.0
        }
    }

    pub fn standardize(&self, x: &Instance) -> Result<StandardizedVector, SchemaError> {
        if x.values.len() != self.schema.len() {
            return Err(SchemaError::DimensionMismatch {
                expected: self.schema.len(),
                got: x.values.len(),
            });
        }
        let mut out = vec![0.0; self.dim()];
        for ((block, enc), (value, attr)) in self
            .layout
            .blocks()
            .iter()
            .zip(&self.encodings)
            .zip(x.values.iter().zip(&self.schema.attributes))
        {
            match (enc, value) {
                (ColumnEncoding::ZScore { mean, std }, Value::Number(v)) => {
                    out[block.start] = (v - mean) / std;
                }
                (ColumnEncoding::OneHot { levels }, value) => {
                    let text = value.to_string();
                    let pos = levels.iter().position(|l| *l == text).ok_or_else(|| SchemaError::UnknownLevel {
                        attribute: attr.name.clone(),
                        value: text.clone(),
                    })?;
                    out[block.start + pos] = 1.0;
                }
                (ColumnEncoding::ZScore { .. }, Value::Level(_)) => {
                    return Err(SchemaError::WrongKind {
                        attribute: attr.name.clone(),
                        expected: "numeric",
                    })
                }
            }
        }
        Ok(out)
    }

    /// Raw value of attribute `attr` for an encoded vector. One-hot blocks decode
    /// to their largest coordinate (first level on ties).
    pub fn raw_value(&self, attr: usize, z: &[f64]) -> Value {
        let block = &self.layout.blocks()[attr];
        match &self.encodings[attr] {
            ColumnEncoding::ZScore { mean, std } => Value::Number(mean + z[block.start] * std),
            ColumnEncoding::OneHot { levels } => {
                let mut best = 0;
                for (j, c) in block.columns().enumerate() {
                    if z[c] > z[block.start + best] {
                        best = j;
                    }
                }
                Value::Level(levels[best].clone())
            }
        }
    }

    pub fn destandardize(&self, z: &[f64]) -> Result<Instance, SchemaError> {
        if z.len() != self.dim() {
            return Err(SchemaError::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        let values = (0..self.schema.len()).map(|i| self.raw_value(i, z)).collect();
        Ok(Instance { values, id: None })
    }

    pub fn standardize_dataset(&self, dataset: &Dataset) -> Result<Vec<StandardizedVector>, SchemaError> {
        dataset.rows.iter().map(|r| self.standardize(&r.instance)).collect()
    }
}

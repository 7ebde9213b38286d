//! Measure, plan and potential files.
//!
//! Measure JSON is `{"dim", "points", "masses", "label"}`; measure CSV has a
//! header row, then one row per atom with the coordinates followed by the
//! mass. CSV carries no label, so loaded CSV measures take the file stem.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use hbary_core::{CostTensor, DiscreteMeasure, PlanAtom, Potentials, TransportPlan, TwoMarginalPlan};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Key reserved for the pair header of two-marginal files.
pub const PAIR_KEY: &str = "marginal_pair";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureFormat {
    Json,
    Csv,
}

impl MeasureFormat {
    pub fn from_path(path: &Path) -> CliResult<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("json") => Ok(Self::Json),
            Some("csv") => Ok(Self::Csv),
            _ => Err(CliError::Validation(format!(
                "cannot infer measure format of {}; use .json or .csv",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
    pub label: String,
}

impl MeasureFile {
    pub fn from_measure(m: &DiscreteMeasure) -> Self {
        Self {
            dim: m.dim(),
            points: m.points().map(<[f64]>::to_vec).collect(),
            masses: m.masses().to_vec(),
            label: m.label().to_string(),
        }
    }

    pub fn into_measure(self) -> CliResult<DiscreteMeasure> {
        if let Some(j) = self.points.iter().position(|p| p.len() != self.dim) {
            return Err(CliError::Validation(format!(
                "point {j} has {} coordinates, expected {}",
                self.points[j].len(),
                self.dim
            )));
        }
        if self.points.len() != self.masses.len() {
            return Err(CliError::Validation(format!(
                "{} points but {} masses",
                self.points.len(),
                self.masses.len()
            )));
        }
        let coords = self.points.into_iter().flatten().collect();
        Ok(DiscreteMeasure::new(self.dim, coords, self.masses, self.label)?)
    }
}

pub(crate) fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::parse(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::parse(path, e))
}

pub fn parse_measure_csv(text: &str, label: &str) -> Result<DiscreteMeasure, String> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let width = reader.headers().map_err(|e| e.to_string())?.len();
    if width < 2 {
        return Err(format!("need at least one coordinate column and a mass column, found {width} columns"));
    }
    let dim = width - 1;
    let mut coords = Vec::new();
    let mut masses = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("row {}: {e}", row + 1))?;
        if record.len() != width {
            return Err(format!("row {} has {} fields, expected {width}", row + 1, record.len()));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| format!("row {}, column {}: cannot parse {field:?}", row + 1, col + 1))?;
            if col < dim {
                coords.push(v);
            } else {
                masses.push(v);
            }
        }
    }
    DiscreteMeasure::new(dim, coords, masses, label).map_err(|e| e.to_string())
}

pub fn measure_to_csv(m: &DiscreteMeasure) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=m.dim()).map(|k| format!("x{k}")).collect();
    header.push("mass".into());
    w.write_record(&header).expect("in-memory write");
    for (p, mass) in m.points().zip(m.masses()) {
        let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        row.push(mass.to_string());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn load_measure(path: &Path, format: MeasureFormat) -> CliResult<DiscreteMeasure> {
    let text = read_text(path)?;
    match format {
        MeasureFormat::Json => {
            let file: MeasureFile = serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))?;
            file.into_measure()
        }
        MeasureFormat::Csv => {
            let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or("measure");
            parse_measure_csv(&text, label).map_err(|e| CliError::parse(path, e))
        }
    }
}

pub fn save_measure(m: &DiscreteMeasure, path: &Path, format: MeasureFormat) -> CliResult<()> {
    match format {
        MeasureFormat::Json => write_json(path, &MeasureFile::from_measure(m)),
        MeasureFormat::Csv => write_text(path, &measure_to_csv(m)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomRecord {
    pub idx: Vec<usize>,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    #[serde(rename = "marginal_pair", default, skip_serializing_if = "Option::is_none")]
    pub marginal_pair: Option<[String; 2]>,
    pub atoms: Vec<AtomRecord>,
    pub value: f64,
}

impl PlanFile {
    pub fn from_plan(plan: &TransportPlan) -> Self {
        Self {
            marginal_pair: None,
            atoms: plan
                .atoms
                .iter()
                .map(|a| AtomRecord {
                    idx: a.index.clone(),
                    mass: a.mass,
                })
                .collect(),
            value: plan.value,
        }
    }

    pub fn from_pair(plan: &TwoMarginalPlan, labels: [String; 2]) -> Self {
        Self {
            marginal_pair: Some(labels),
            atoms: plan
                .atoms
                .iter()
                .map(|((k, j), m)| AtomRecord { idx: vec![*k, *j], mass: *m })
                .collect(),
            value: plan.value,
        }
    }

    /// Rebuilds the plan against `tensor`; the stored value is recomputed.
    pub fn into_plan(self, tensor: &CostTensor) -> CliResult<TransportPlan> {
        let atoms = self
            .atoms
            .into_iter()
            .map(|a| PlanAtom { index: a.idx, mass: a.mass })
            .collect();
        Ok(TransportPlan::new(atoms, tensor)?)
    }
}

/// Potentials keyed by marginal label, optionally with a pair header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PotentialsFile {
    pub marginal_pair: Option<[String; 2]>,
    pub by_label: BTreeMap<String, Vec<f64>>,
}

impl PotentialsFile {
    pub fn from_potentials(p: &Potentials, labels: &[&str]) -> Self {
        Self {
            marginal_pair: None,
            by_label: labels.iter().map(|l| l.to_string()).zip(p.phi.iter().cloned()).collect(),
        }
    }

    pub fn from_pair(p: &TwoMarginalPlan, labels: [String; 2]) -> Self {
        let by_label = [(labels[0].clone(), p.potentials.0.clone()), (labels[1].clone(), p.potentials.1.clone())]
            .into_iter()
            .collect();
        Self {
            marginal_pair: Some(labels),
            by_label,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        if let Some(pair) = &self.marginal_pair {
            map.insert(PAIR_KEY.into(), serde_json::json!(pair));
        }
        for (k, v) in &self.by_label {
            map.insert(k.clone(), serde_json::json!(v));
        }
        serde_json::Value::Object(map)
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self, String> {
        let serde_json::Value::Object(map) = value else {
            return Err("potentials file must be a JSON object".into());
        };
        let mut out = Self::default();
        for (k, v) in map {
            if k == PAIR_KEY {
                out.marginal_pair = Some(serde_json::from_value(v).map_err(|e| format!("{PAIR_KEY}: {e}"))?);
            } else {
                out.by_label.insert(k.clone(), serde_json::from_value(v).map_err(|e| format!("{k}: {e}"))?);
            }
        }
        Ok(out)
    }

    /// Potentials in the order of `measures`, matched by label.
    pub fn into_potentials(mut self, measures: &[DiscreteMeasure]) -> CliResult<Potentials> {
        let mut phi = Vec::with_capacity(measures.len());
        for m in measures {
            let v = self
                .by_label
                .remove(m.label())
                .ok_or_else(|| CliError::Validation(format!("no potential for marginal {:?}", m.label())))?;
            if v.len() != m.len() {
                return Err(CliError::Validation(format!(
                    "potential for {:?} has {} entries, marginal has {} atoms",
                    m.label(),
                    v.len(),
                    m.len()
                )));
            }
            phi.push(v);
        }
        let masses: Vec<&[f64]> = measures.iter().map(|m| m.masses()).collect();
        Ok(Potentials::new(phi, &masses))
    }
}

pub fn save_potentials(p: &PotentialsFile, path: &Path) -> CliResult<()> {
    write_json(path, &p.to_json())
}

pub fn load_potentials(path: &Path) -> CliResult<PotentialsFile> {
    let v: serde_json::Value = read_json(path)?;
    PotentialsFile::from_json(v).map_err(|e| CliError::parse(path, e))
}

pub fn save_plan(p: &PlanFile, path: &Path) -> CliResult<()> {
    write_json(path, p)
}

pub fn load_plan(path: &Path) -> CliResult<PlanFile> {
    read_json(path)
}

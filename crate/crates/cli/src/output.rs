//! Trajectory CSV files and run summaries.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use tango_core::optimizers::TrajectoryRecord;

/// Renders a real with 17 significant digits in scientific notation.
pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn trajectory_header(param_dim: usize) -> Vec<String> {
    let mut h = vec!["step".to_string(), "t".to_string()];
    h.extend((0..param_dim).map(|i| format!("theta_{i}")));
    h.push("v_norm".into());
    h.push("loss".into());
    h
}

pub fn write_trajectory<W: Write>(out: W, record: &TrajectoryRecord) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(record.param_dim))?;
    for row in &record.rows {
        let mut fields = vec![row.step.to_string(), real(row.t)];
        fields.extend(row.theta.iter().map(|x| real(*x)));
        fields.push(real(row.v_norm));
        fields.push(real(row.loss));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_file(path: &Path, record: &TrajectoryRecord) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_trajectory(std::io::BufWriter::new(file), record)
        .with_context(|| format!("writing {}", path.display()))
}

/// One line per entry, `key = value`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(pub Vec<(String, String)>);

impl KeyValues {
    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) -> &mut Self {
        self.0.push((key.into(), value.into()));
        self
    }

    pub fn real(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.push(key, real(value))
    }

    pub fn reals(&mut self, key: impl Into<String>, values: &[f64]) -> &mut Self {
        let body: Vec<String> = values.iter().map(|v| real(*v)).collect();
        self.push(key, format!("[{}]", body.join(", ")))
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub model: String,
    pub optimizer: String,
    pub seed: u64,
    pub horizon: f64,
    pub steps: usize,
    pub final_theta: Vec<f64>,
    pub final_loss: f64,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.push("name", self.name.clone())
            .push("model", self.model.clone())
            .push("optimizer", self.optimizer.clone())
            .push("seed", self.seed.to_string())
            .real("horizon", self.horizon)
            .push("steps", self.steps.to_string())
            .reals("final_theta", &self.final_theta)
            .real("final_loss", self.final_loss)
            .push("wall_time_s", format!("{:.3}", self.wall_time_s));
        kv
    }

    /// Writes `<stem>.summary.txt` and `<stem>.summary.json` in `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        write_text(
            &dir.join(format!("{stem}.summary.txt")),
            &self.key_values().render(),
        )?;
        write_json(&dir.join(format!("{stem}.summary.json")), self)
    }
}

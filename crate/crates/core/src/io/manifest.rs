//! Run manifests: everything needed to reproduce a command's outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::scenario::{Prepared, Scenario};
use crate::io::units::{Dimension, Units};
use crate::measurement::MeasurementSchedule;

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario: String,
    pub scenario_sha256: String,
    pub code_version: String,
    /// Resolved parameters; internal units unless the key names a unit.
    pub parameters: BTreeMap<String, Value>,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn new(command: &str, scenario: &Scenario) -> Self {
        let u = &scenario.units;
        let mut parameters = BTreeMap::new();
        parameters.insert("mass_u".into(), json!(u.mass_u));
        parameters.insert("time_unit_s".into(), json!(u.time_unit));
        parameters.insert("length_unit_m".into(), json!(crate::io::units::LENGTH_UNIT));
        parameters.insert(
            "packets".into(),
            Value::Array(
                scenario
                    .packets
                    .iter()
                    .map(|p| {
                        json!({
                            "x_focus": p.x_focus,
                            "t_focus": p.t_focus,
                            "delta_x": p.delta_x,
                            "v_mean": p.v_mean,
                            "weight": [p.weight.re, p.weight.im],
                        })
                    })
                    .collect(),
            ),
        );
        parameters.insert(
            "grid".into(),
            json!({
                "x_min": scenario.grid.x_min,
                "x_max": scenario.grid.x_max,
                "n_points": scenario.grid.n_points,
                "absorbing_layer": scenario.grid.absorbing_layer,
            }),
        );
        parameters.insert("t_end".into(), json!(scenario.schedule.t_end));
        Self {
            command: command.into(),
            scenario: scenario.name.clone(),
            scenario_sha256: scenario.hash.clone(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            parameters,
            started_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_clock_s: 0.0,
            warnings: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_initial_state(&mut self, _scenario: &Scenario, p: &Prepared) {
        let d = &p.diagnostics;
        self.parameters.insert("t_start".into(), json!(p.t_start));
        self.parameters.insert("k0".into(), json!(d.k0));
        self.parameters.insert("mean_h0".into(), json!(d.mean_h0));
        self.parameters.insert("delta_h0".into(), json!(d.delta_h0));
        self.parameters.insert("e_max_99".into(), json!(d.e_max_99));
        self.parameters.insert("neg_k_fraction".into(), json!(p.start.neg_k_fraction));
        self.parameters.insert("right_norm_start".into(), json!(p.start.right_norm));
    }

    pub fn add_schedule(&mut self, units: &Units, s: &MeasurementSchedule) {
        self.parameters.insert(
            "schedule".into(),
            json!({
                "model": s.model.name(),
                "delta_t": s.delta_t,
                "delta_t_s": units.to_si(Dimension::Time, s.delta_t),
                "v0": s.v0,
                "alpha": s.alpha,
                "inner_dt": s.inner_dt,
                "t_end": s.t_end,
            }),
        );
    }

    /// Records wall-clock time and checksums of `files`.
    pub fn finish(&mut self, wall_clock_s: f64, files: &[PathBuf]) -> Result<()> {
        self.wall_clock_s = wall_clock_s;
        self.outputs = files.iter().map(|f| checksum(f)).collect::<Result<_>>()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Io(std::io::Error::other(e)))
    }
}

fn checksum(path: &Path) -> Result<OutputFile> {
    let bytes = std::fs::read(path)?;
    Ok(OutputFile {
        path: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

//! Scenario files.
//!
//! A scenario is an INI document with flat sections. Dimensioned values carry
//! a unit suffix (`23.5 um`, `0.365 cm/s`, `0.266 ns`, `3e7 hbar/s`); unknown
//! sections and keys are errors.
//!
//! ```ini
//! [scenario]
//! name = example
//!
//! [particle]
//! mass_u = 22.98977
//!
//! [packet.1]
//! x_focus = -500 um
//! t_focus = 0 s
//! delta_x = 23.5 um
//! velocity = 0.365 cm/s
//! weight = 1
//!
//! [grid]
//! x_min = -1400 um
//! x_max = 400 um
//! n_points = 4096
//! absorbing_layer = 150 um
//!
//! [schedule]
//! model = projection
//! delta_t = 2 ms
//! t_end = 0.45 s
//! ```
//!
//! Further sections: `[sweep]` (ladder in multiples of `hbar / Delta H0`),
//! `[bounds]` and `[ideal]`; see [`Scenario`] for every key.

use std::sync::Arc;

use ini::{Ini, ParseOption};
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::analysis::{log_ladder, log_ladder_open, SweepConfig};
use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, WaveFunction};
use crate::io::units::{Dimension, Units};
use crate::measurement::{MeasurementModel, MeasurementSchedule};
use crate::packets::{packet_diagnostics, FreeState, GaussianSpec, PacketDiagnostics, StartReport};

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub absorbing_layer: Option<f64>,
}

/// Strength of the absorbing potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingSpec {
    Absolute(f64),
    /// Multiple of the initial energy spread.
    OverDeltaH0(f64),
}

impl CouplingSpec {
    pub fn resolve(self, delta_h0: f64) -> f64 {
        match self {
            CouplingSpec::Absolute(v) => v,
            CouplingSpec::OverDeltaH0(m) => m * delta_h0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub model: Option<MeasurementModel>,
    pub delta_t: Option<f64>,
    pub v0: Option<CouplingSpec>,
    pub alpha: Option<f64>,
    /// `None` selects the latest admissible start automatically.
    pub t_start: Option<f64>,
    pub t_end: f64,
    pub sample_dt: Option<f64>,
    pub inner_dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Ladder bounds in multiples of `hbar / Delta H0(0)`.
    pub ladder_min: f64,
    pub ladder_max: f64,
    pub per_decade: usize,
    pub include_max: bool,
    pub alpha: f64,
    pub sample_dt: Option<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            ladder_min: 0.1,
            ladder_max: 10.0,
            per_decade: 8,
            include_max: true,
            alpha: 20.0,
            sample_dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsSpec {
    pub v0_over_dh0: Vec<f64>,
    /// Samples are taken every `alpha / V0`.
    pub alpha: f64,
    pub t_end: Option<f64>,
}

impl Default for BoundsSpec {
    fn default() -> Self {
        Self {
            v0_over_dh0: vec![3.0, 10.0, 30.0],
            alpha: 20.0,
            t_end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdealSpec {
    pub points: usize,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
}

impl Default for IdealSpec {
    fn default() -> Self {
        Self {
            points: 4001,
            t_min: None,
            t_max: None,
        }
    }
}

/// Parsed scenario with every value in internal units.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub units: Units,
    pub packets: Vec<GaussianSpec>,
    pub grid: GridConfig,
    pub schedule: ScheduleConfig,
    pub sweep: SweepSpec,
    pub bounds: BoundsSpec,
    pub ideal: IdealSpec,
    /// SHA-256 of the document text and the applied overrides.
    pub hash: String,
}

/// The validated initial state of a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: Arc<SpatialGrid>,
    pub state: FreeState,
    pub t_start: f64,
    pub psi0: WaveFunction,
    pub diagnostics: PacketDiagnostics,
    pub start: StartReport,
}

const SECTION_KEYS: &[(&str, &[&str])] = &[
    ("scenario", &["name"]),
    ("particle", &["mass_u"]),
    ("packet", &["x_focus", "t_focus", "delta_x", "velocity", "weight", "weight_im"]),
    ("grid", &["x_min", "x_max", "n_points", "absorbing_layer"]),
    (
        "schedule",
        &["model", "delta_t", "v0", "v0_over_dh0", "alpha", "t_start", "t_end", "sample_dt", "inner_dt"],
    ),
    ("sweep", &["ladder_min", "ladder_max", "per_decade", "include_max", "alpha", "sample_dt"]),
    ("bounds", &["v0_over_dh0", "alpha", "t_end"]),
    ("ideal", &["points", "t_min", "t_max"]),
];

fn section_kind(name: &str) -> Option<&'static str> {
    let base = match name.split_once('.') {
        Some(("packet", label)) if !label.is_empty() => "packet",
        Some(_) => return None,
        None => name,
    };
    SECTION_KEYS.iter().find(|(s, _)| *s == base).map(|(s, _)| *s)
}

fn allowed_keys(kind: &str) -> &'static [&'static str] {
    SECTION_KEYS
        .iter()
        .find(|(s, _)| *s == kind)
        .map(|(_, k)| *k)
        .unwrap_or(&[])
}

/// Ordered `(section, key, value)` triples with overrides applied.
#[derive(Debug, Clone, Default)]
struct Document {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl Document {
    fn parse(text: &str) -> Result<Self> {
        let opt = ParseOption {
            enabled_quote: false,
            enabled_escape: false,
            ..ParseOption::default()
        };
        let ini = Ini::load_from_str_opt(text, opt).map_err(|e| Error::Scenario(format!("parse error: {e}")))?;
        let mut doc = Document::default();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::Scenario(format!("key '{k}' appears before any section")));
                }
                continue;
            };
            if doc.sections.iter().any(|(s, _)| s == section) {
                return Err(Error::Scenario(format!("section [{section}] appears twice")));
            }
            let mut entries: Vec<(String, String)> = Vec::new();
            for (k, v) in props.iter() {
                if entries.iter().any(|(e, _)| e == k) {
                    return Err(Error::Scenario(format!("key '{k}' repeated in [{section}]")));
                }
                entries.push((k.to_string(), v.trim().to_string()));
            }
            doc.sections.push((section.to_string(), entries));
        }
        Ok(doc)
    }

    /// Applies `section.key=value`.
    fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("override '{spec}' is not key=value")))?;
        let (section, key) = path
            .trim()
            .rsplit_once('.')
            .ok_or_else(|| Error::InvalidArgument(format!("override key '{path}' must be section.key")))?;
        let value = value.trim().to_string();
        match self.sections.iter_mut().find(|(s, _)| s == section) {
            Some((_, entries)) => match entries.iter_mut().find(|(k, _)| k == key) {
                Some(entry) => entry.1 = value,
                None => entries.push((key.to_string(), value)),
            },
            None => self.sections.push((section.to_string(), vec![(key.to_string(), value)])),
        }
        Ok(())
    }

    fn check_keys(&self) -> Result<()> {
        let mut unknown = Vec::new();
        for (section, entries) in &self.sections {
            let Some(kind) = section_kind(section) else {
                unknown.push(format!("[{section}]"));
                continue;
            };
            let allowed = allowed_keys(kind);
            for (k, _) in entries {
                if !allowed.contains(&k.as_str()) {
                    unknown.push(format!("{section}.{k}"));
                }
            }
        }
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Scenario(format!("unknown keys: {}", unknown.join(", "))))
        }
    }

    fn section(&self, name: &str) -> Option<&[(String, String)]> {
        self.sections.iter().find(|(s, _)| s == name).map(|(_, e)| e.as_slice())
    }
}

struct Section<'a> {
    name: &'a str,
    entries: &'a [(String, String)],
}

impl<'a> Section<'a> {
    fn get(&self, key: &str) -> Option<&'a str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn required(&self, key: &str) -> Result<&'a str> {
        self.get(key)
            .ok_or_else(|| Error::Scenario(format!("missing required key {}.{key}", self.name)))
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Scenario(format!("{}.{key} = '{v}' is not a number", self.name)))
            })
            .transpose()
    }

    fn integer(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| Error::Scenario(format!("{}.{key} = '{v}' is not a non-negative integer", self.name)))
            })
            .transpose()
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Scenario(format!("{}.{key} = '{v}' is not a boolean", self.name))),
            })
            .transpose()
    }

    fn quantity(&self, units: &Units, dim: Dimension, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| units.parse(dim, v).map_err(|e| Error::Scenario(format!("{}.{key}: {e}", self.name))))
            .transpose()
    }

    fn required_quantity(&self, units: &Units, dim: Dimension, key: &str) -> Result<f64> {
        self.required(key)?;
        Ok(self.quantity(units, dim, key)?.unwrap_or_default())
    }
}

const EMPTY: &[(String, String)] = &[];

fn section<'a>(doc: &'a Document, name: &'a str) -> Section<'a> {
    Section {
        name,
        entries: doc.section(name).unwrap_or(EMPTY),
    }
}

fn required_section<'a>(doc: &'a Document, name: &'a str) -> Result<Section<'a>> {
    doc.section(name)
        .map(|entries| Section { name, entries })
        .ok_or_else(|| Error::Scenario(format!("missing section [{name}]")))
}

/// Parses a scenario document and applies `section.key=value` overrides.
pub fn parse_scenario(text: &str, overrides: &[String]) -> Result<Scenario> {
    let mut doc = Document::parse(text)?;
    for o in overrides {
        doc.apply_override(o)?;
    }
    doc.check_keys()?;

    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    for o in overrides {
        hasher.update(b"\n--override ");
        hasher.update(o.as_bytes());
    }
    let hash = hex::encode(hasher.finalize());

    let name = required_section(&doc, "scenario")?.required("name")?.to_string();
    let particle = required_section(&doc, "particle")?;
    let mass_u = particle
        .number("mass_u")?
        .ok_or_else(|| Error::Scenario("missing required key particle.mass_u".into()))?;
    let units = Units::for_mass(mass_u)?;

    let mut packets = Vec::new();
    for (sname, entries) in &doc.sections {
        if section_kind(sname) != Some("packet") {
            continue;
        }
        let s = Section { name: sname, entries };
        let re = s.number("weight")?.unwrap_or(1.0);
        let im = s.number("weight_im")?.unwrap_or(0.0);
        let spec = GaussianSpec::new(
            s.required_quantity(&units, Dimension::Length, "x_focus")?,
            s.quantity(&units, Dimension::Time, "t_focus")?.unwrap_or(0.0),
            s.required_quantity(&units, Dimension::Length, "delta_x")?,
            s.required_quantity(&units, Dimension::Velocity, "velocity")?,
        )
        .with_weight(Complex64::new(re, im));
        packets.push(spec);
    }
    if packets.is_empty() {
        return Err(Error::Scenario("at least one [packet.<label>] section is required".into()));
    }

    let g = required_section(&doc, "grid")?;
    let absorbing_layer = match g.get("absorbing_layer") {
        None | Some("none") => None,
        Some(_) => g.quantity(&units, Dimension::Length, "absorbing_layer")?,
    };
    let grid = GridConfig {
        x_min: g.required_quantity(&units, Dimension::Length, "x_min")?,
        x_max: g.required_quantity(&units, Dimension::Length, "x_max")?,
        n_points: g
            .integer("n_points")?
            .ok_or_else(|| Error::Scenario("missing required key grid.n_points".into()))?,
        absorbing_layer,
    };

    let s = required_section(&doc, "schedule")?;
    let model = s.get("model").map(str::parse::<MeasurementModel>).transpose().map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Scenario(m),
        other => other,
    })?;
    let v0 = match (s.quantity(&units, Dimension::Rate, "v0")?, s.number("v0_over_dh0")?) {
        (Some(_), Some(_)) => {
            return Err(Error::Scenario("give schedule.v0 or schedule.v0_over_dh0, not both".into()))
        }
        (Some(v), None) => Some(CouplingSpec::Absolute(v)),
        (None, Some(m)) => Some(CouplingSpec::OverDeltaH0(m)),
        (None, None) => None,
    };
    let t_start = match s.get("t_start") {
        None | Some("auto") => None,
        Some(_) => s.quantity(&units, Dimension::Time, "t_start")?,
    };
    let schedule = ScheduleConfig {
        model,
        delta_t: s.quantity(&units, Dimension::Time, "delta_t")?,
        v0,
        alpha: s.number("alpha")?,
        t_start,
        t_end: s.required_quantity(&units, Dimension::Time, "t_end")?,
        sample_dt: s.quantity(&units, Dimension::Time, "sample_dt")?,
        inner_dt: s.quantity(&units, Dimension::Time, "inner_dt")?,
    };

    let sw = section(&doc, "sweep");
    let d = SweepSpec::default();
    let sweep = SweepSpec {
        ladder_min: sw.number("ladder_min")?.unwrap_or(d.ladder_min),
        ladder_max: sw.number("ladder_max")?.unwrap_or(d.ladder_max),
        per_decade: sw.integer("per_decade")?.unwrap_or(d.per_decade),
        include_max: sw.boolean("include_max")?.unwrap_or(d.include_max),
        alpha: sw.number("alpha")?.unwrap_or(d.alpha),
        sample_dt: sw.quantity(&units, Dimension::Time, "sample_dt")?,
    };
    if !(sweep.ladder_min > 0.0) || !(sweep.ladder_max > sweep.ladder_min) || sweep.per_decade == 0 {
        return Err(Error::Scenario(
            "sweep ladder needs 0 < ladder_min < ladder_max and per_decade >= 1".into(),
        ));
    }

    let b = section(&doc, "bounds");
    let db = BoundsSpec::default();
    let v0_over_dh0 = match b.get("v0_over_dh0") {
        None => db.v0_over_dh0,
        Some(list) => list
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| *v > 0.0 && v.is_finite())
                    .ok_or_else(|| Error::Scenario(format!("bounds.v0_over_dh0: '{x}' is not a positive number")))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let bounds = BoundsSpec {
        v0_over_dh0,
        alpha: b.number("alpha")?.unwrap_or(db.alpha),
        t_end: b.quantity(&units, Dimension::Time, "t_end")?,
    };

    let i = section(&doc, "ideal");
    let ideal = IdealSpec {
        points: i.integer("points")?.unwrap_or(IdealSpec::default().points),
        t_min: i.quantity(&units, Dimension::Time, "t_min")?,
        t_max: i.quantity(&units, Dimension::Time, "t_max")?,
    };
    if ideal.points < 2 {
        return Err(Error::Scenario("ideal.points must be at least 2".into()));
    }

    Ok(Scenario {
        name,
        units,
        packets,
        grid,
        schedule,
        sweep,
        bounds,
        ideal,
        hash,
    })
}

impl Scenario {
    pub fn build_grid(&self) -> Result<Arc<SpatialGrid>> {
        let g = SpatialGrid::new(self.grid.x_min, self.grid.x_max, self.grid.n_points)?;
        let g = match self.grid.absorbing_layer {
            Some(w) => g.with_absorbing_layer(w)?,
            None => g,
        };
        Ok(Arc::new(g))
    }

    /// Builds the grid and the initial state, and runs the start checks.
    pub fn prepare(&self) -> Result<Prepared> {
        let grid = self.build_grid()?;
        let state = FreeState::new(self.packets.clone())?;
        let t_start = match self.schedule.t_start {
            Some(t) => t,
            None => state.auto_start_time(&grid)?,
        };
        let start = state.check_start(&grid, t_start)?;
        if !(self.schedule.t_end > t_start) {
            return Err(Error::Validation(format!(
                "t_end = {} must exceed the start time {t_start}",
                self.schedule.t_end
            )));
        }
        let psi0 = state.wave_function(&grid, t_start)?;
        let diagnostics = packet_diagnostics(&psi0)?;
        Ok(Prepared {
            grid,
            state,
            t_start,
            psi0,
            diagnostics,
            start,
        })
    }

    /// Measurement schedule for `model`, or for the scenario's own model.
    pub fn schedule_for(&self, model: Option<MeasurementModel>, delta_h0: f64) -> Result<MeasurementSchedule> {
        let s = &self.schedule;
        let model = model
            .or(s.model)
            .ok_or_else(|| Error::InvalidArgument("no model given on the command line or in [schedule]".into()))?;
        let v0 = s.v0.map(|c| c.resolve(delta_h0));
        let need_v0 = || v0.ok_or_else(|| Error::Scenario(format!("{model} model needs schedule.v0 or schedule.v0_over_dh0")));
        let mut sched = match model {
            MeasurementModel::Projection => MeasurementSchedule::projection(
                s.delta_t.ok_or_else(|| Error::Scenario("projection model needs schedule.delta_t".into()))?,
                s.t_end,
            ),
            MeasurementModel::Kicked => {
                let v0 = need_v0()?;
                match (s.delta_t, s.alpha) {
                    (Some(dt), Some(alpha)) => MeasurementSchedule {
                        alpha: Some(alpha),
                        ..MeasurementSchedule::kicked(v0, dt, s.t_end)
                    },
                    (Some(dt), None) => MeasurementSchedule::kicked(v0, dt, s.t_end),
                    (None, Some(alpha)) => MeasurementSchedule::kicked_alpha(v0, alpha, s.t_end),
                    (None, None) => {
                        return Err(Error::Scenario("kicked model needs schedule.delta_t or schedule.alpha".into()))
                    }
                }
            }
            MeasurementModel::Continuous => {
                let v0 = need_v0()?;
                let sample = s
                    .sample_dt
                    .or(s.delta_t)
                    .or(s.alpha.map(|a| a / v0))
                    .ok_or_else(|| Error::Scenario("continuous model needs schedule.sample_dt".into()))?;
                MeasurementSchedule::continuous(v0, sample, s.t_end)
            }
        };
        if let Some(h) = s.inner_dt {
            sched = sched.with_inner_dt(h);
        }
        Ok(sched)
    }

    /// Ladder abscissae in internal time units.
    pub fn ladder(&self, delta_h0: f64) -> Vec<f64> {
        let unit = 1.0 / delta_h0;
        let raw = if self.sweep.include_max {
            log_ladder(self.sweep.ladder_min, self.sweep.ladder_max, self.sweep.per_decade)
        } else {
            log_ladder_open(self.sweep.ladder_min, self.sweep.ladder_max, self.sweep.per_decade)
        };
        raw.into_iter().map(|x| x * unit).collect()
    }

    pub fn sweep_config(&self, prepared: &Prepared, model: MeasurementModel, workers: usize) -> Result<SweepConfig> {
        let sample_dt = match model {
            MeasurementModel::Continuous => self
                .sweep
                .sample_dt
                .or(self.schedule.sample_dt)
                .ok_or_else(|| Error::Scenario("continuous sweeps need sweep.sample_dt".into()))?,
            _ => self.sweep.sample_dt.or(self.schedule.sample_dt).unwrap_or(f64::NAN),
        };
        Ok(SweepConfig {
            state: prepared.state.clone(),
            grid: prepared.grid.clone(),
            t_start: prepared.t_start,
            t_end: self.schedule.t_end,
            model,
            ladder: self.ladder(prepared.diagnostics.delta_h0),
            alpha: self.sweep.alpha,
            sample_dt,
            workers,
        })
    }
}

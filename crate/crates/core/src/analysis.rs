//! Coupling sweeps, the commutator bound series and the two-level mapping.

use std::sync::Arc;

use rayon::prelude::*;

use crate::distributions::{binned_l1_distance, linspace, mean_arrival, normalize_record, zeno_ideal_distribution, TimeDistribution};
use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, WaveFunction};
use crate::measurement::{commutator_bound, run_measurement, run_measurement_observed, MeasurementModel, MeasurementSchedule};
use crate::packets::{packet_diagnostics, FreeState};

/// Detected fraction above which a non-flagged row enters the fit.
pub const FIT_DETECTED_MIN: f64 = 0.95;

/// Relative slack of the commutator bound check.
pub const BOUND_RTOL: f64 = 1e-6;

/// `per_decade` logarithmically spaced values from `lo` up to `hi`
/// inclusive (when `hi` falls on the lattice).
pub fn log_ladder(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = ((hi / lo).log10() * per_decade as f64 + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| lo * 10f64.powf(i as f64 / per_decade as f64))
        .collect()
}

/// `per_decade` values per decade on `[lo, hi)`.
pub fn log_ladder_open(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let mut v = log_ladder(lo, hi, per_decade);
    if let Some(&last) = v.last() {
        if (last / hi - 1.0).abs() < 1e-9 {
            v.pop();
        }
    }
    v
}

/// Default abscissa ladder: 8 per decade over `[0.1, 10] / Delta H0`.
pub fn default_ladder(delta_h0: f64) -> Vec<f64> {
    log_ladder(0.1 / delta_h0, 10.0 / delta_h0, 8)
}

/// Abscissa of a schedule: `delta_t` for the pulsed models, `1/(2 V0)` for
/// continuous absorption.
pub fn abscissa(schedule: &MeasurementSchedule) -> f64 {
    match schedule.model {
        MeasurementModel::Continuous => 0.5 / schedule.v0.unwrap_or(f64::NAN),
        _ => schedule.delta_t,
    }
}

/// Slope of the delay law for a model.
pub fn delay_law_slope(model: MeasurementModel) -> f64 {
    match model {
        MeasurementModel::Continuous => 1.0,
        _ => 0.5,
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub state: FreeState,
    pub grid: Arc<SpatialGrid>,
    pub t_start: f64,
    pub t_end: f64,
    pub model: MeasurementModel,
    /// Abscissa values: `delta_t` for projection and kicked runs,
    /// `1/(2 V0)` for continuous runs.
    pub ladder: Vec<f64>,
    /// Kicked runs use `V0 = alpha / delta_t`.
    pub alpha: f64,
    /// Reporting interval of continuous runs.
    pub sample_dt: f64,
    pub workers: usize,
}

impl SweepConfig {
    pub fn schedule(&self, x: f64) -> MeasurementSchedule {
        match self.model {
            MeasurementModel::Projection => MeasurementSchedule::projection(x, self.t_end),
            MeasurementModel::Kicked => MeasurementSchedule::kicked_alpha(self.alpha / x, self.alpha, self.t_end),
            MeasurementModel::Continuous => MeasurementSchedule::continuous(0.5 / x, self.sample_dt, self.t_end),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub model: MeasurementModel,
    pub abscissa: f64,
    pub delta_t: f64,
    pub v0: Option<f64>,
    pub alpha: Option<f64>,
    pub mean_t: Option<f64>,
    pub detected_fraction: f64,
    pub reflection_flag: bool,
    pub l1_to_zeno_ideal: Option<f64>,
    /// `mean_t - (<t>_Zeno + slope * abscissa)` with the law's slope.
    pub law_residual: Option<f64>,
    /// Residual against the fitted line.
    pub fit_residual: Option<f64>,
}

impl SweepRow {
    pub fn non_reflective(&self) -> bool {
        !self.reflection_flag && self.detected_fraction > FIT_DETECTED_MIN && self.mean_t.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub n_points: usize,
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::NoFit(format!("{n} points")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::NoFit("abscissae coincide".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Ok(LinearFit {
        slope,
        intercept,
        rms_residual: (rss / nf).sqrt(),
        n_points: n,
    })
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub model: MeasurementModel,
    /// Sorted by abscissa.
    pub rows: Vec<SweepRow>,
    pub fit: LinearFit,
    pub zeno_mean: f64,
    pub zeno_width: f64,
}

/// Reference Zeno-limit density on `[t_start, t_end]`, sampled finely
/// enough for bins of width `finest`.
pub fn zeno_reference(state: &FreeState, t_start: f64, t_end: f64, finest: f64) -> Result<TimeDistribution> {
    let n = (((t_end - t_start) / (0.25 * finest)).ceil() as usize).clamp(2001, 400_001);
    zeno_ideal_distribution(state, &linspace(t_start, t_end, n))
}

fn row_from_run(
    cfg: &SweepConfig,
    x: f64,
    psi0: &WaveFunction,
    zeno: &TimeDistribution,
    zeno_mean: f64,
) -> Result<SweepRow> {
    let schedule = cfg.schedule(x);
    let rec = run_measurement(psi0, &schedule)?;
    let (mean_t, l1) = match normalize_record(&rec) {
        Ok(d) => (Some(mean_arrival(&d)), Some(binned_l1_distance(&d, zeno)?)),
        Err(Error::NothingDetected(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(SweepRow {
        model: cfg.model,
        abscissa: x,
        delta_t: schedule.delta_t,
        v0: schedule.v0,
        alpha: schedule.alpha,
        mean_t,
        detected_fraction: rec.detected_fraction,
        reflection_flag: rec.reflection_flag,
        l1_to_zeno_ideal: l1,
        law_residual: mean_t.map(|m| m - zeno_mean - delay_law_slope(cfg.model) * x),
        fit_residual: None,
    })
}

/// One run per ladder value, concurrently on `workers` threads, followed by
/// a least-squares line over the non-reflective rows.
pub fn delay_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.ladder.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "a sweep needs at least 4 couplings, got {}",
            cfg.ladder.len()
        )));
    }
    if cfg.ladder.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument("ladder values must be positive".into()));
    }
    let psi0 = cfg.state.wave_function(&cfg.grid, cfg.t_start)?;
    let finest = cfg
        .ladder
        .iter()
        .map(|&x| cfg.schedule(x).delta_t)
        .fold(f64::INFINITY, f64::min);
    let zeno = zeno_reference(&cfg.state, cfg.t_start, cfg.t_end, finest)?;
    let zeno_mean = mean_arrival(&zeno);
    let zeno_width = crate::distributions::arrival_width(&zeno);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let mut rows: Vec<SweepRow> = pool.install(|| {
        cfg.ladder
            .par_iter()
            .map(|&x| row_from_run(cfg, x, &psi0, &zeno, zeno_mean))
            .collect::<Result<Vec<_>>>()
    })?;
    rows.sort_by(|a, b| a.abscissa.total_cmp(&b.abscissa));

    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.non_reflective())
        .map(|r| (r.abscissa, r.mean_t.unwrap_or(f64::NAN)))
        .unzip();
    if xs.is_empty() {
        return Err(Error::NoFit("every row is reflective".into()));
    }
    let fit = fit_line(&xs, &ys)?;
    for r in &mut rows {
        r.fit_residual = r.mean_t.map(|m| m - fit.intercept - fit.slope * r.abscissa);
    }
    Ok(SweepResult {
        model: cfg.model,
        rows,
        fit,
        zeno_mean,
        zeno_width,
    })
}

#[derive(Debug, Clone, Default)]
pub struct BoundSeries {
    pub v0: f64,
    pub times: Vec<f64>,
    pub ratio_dh0_v0: Vec<f64>,
    pub commutator_lhs: Vec<f64>,
    pub bound_rhs: Vec<f64>,
    pub n_plus: Vec<f64>,
    /// On-grid norm at each sample.
    pub survival: Vec<f64>,
}

impl BoundSeries {
    /// Samples where `commutator_lhs` exceeds `bound_rhs (1 + BOUND_RTOL)`
    /// by more than `atol`.
    pub fn violations(&self, atol: f64) -> Vec<usize> {
        self.commutator_lhs
            .iter()
            .zip(&self.bound_rhs)
            .enumerate()
            .filter(|(_, (l, r))| **l > **r * (1.0 + BOUND_RTOL) + atol)
            .map(|(i, _)| i)
            .collect()
    }

    /// Largest `Delta H0 / V0` over samples whose survival is at least
    /// `min_survival`.
    pub fn max_ratio(&self, min_survival: f64) -> f64 {
        self.ratio_dh0_v0
            .iter()
            .zip(&self.survival)
            .filter(|(_, s)| **s >= min_survival)
            .map(|(r, _)| *r)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn initial_ratio(&self) -> f64 {
        self.ratio_dh0_v0.first().copied().unwrap_or(f64::NAN)
    }
}

/// Continuous run at `v0` recording the commutator bound quantities at the
/// start and at every reporting edge.
pub fn zeno_bound_series(psi0: &WaveFunction, v0: f64, sample_dt: f64, t_end: f64) -> Result<BoundSeries> {
    if !(v0 > 0.0) {
        return Err(Error::InvalidSchedule(format!("V0 = {v0} must be positive")));
    }
    let schedule = MeasurementSchedule::continuous(v0, sample_dt, t_end);
    let mut series = BoundSeries {
        v0,
        ..Default::default()
    };
    run_measurement_observed(psi0, &schedule, |psi| {
        let norm = psi.total_norm();
        if !(norm > 0.0) {
            return Ok(());
        }
        let b = commutator_bound(psi, v0)?;
        series.times.push(b.time);
        series.ratio_dh0_v0.push(b.delta_h0 / v0);
        series.commutator_lhs.push(b.commutator);
        series.bound_rhs.push(b.bound);
        series.n_plus.push(b.n_plus);
        series.survival.push(norm);
        Ok(())
    })?;
    Ok(series)
}

/// Initial energy spread.
pub fn initial_delta_h0(psi0: &WaveFunction) -> Result<f64> {
    Ok(packet_diagnostics(psi0)?.delta_h0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchulmanMap {
    pub v0: f64,
    pub delta_t: f64,
    /// `delta_t * V0`, identically 1.
    pub product: f64,
    pub warning: Option<String>,
}

/// Ratio `gamma / Omega` above which the mapping is flagged.
pub const WEAK_DRIVING_LIMIT: f64 = 0.1;

/// Effective absorbing strength `V0 = Omega^2 / (2 gamma)` of a driven
/// two-level detector and the matching pulse period `delta_t = 1 / V0`.
pub fn schulman_map(omega: f64, gamma: f64) -> Result<SchulmanMap> {
    if !(omega > 0.0) || !(gamma > 0.0) || !omega.is_finite() || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "omega = {omega} and gamma = {gamma} must be positive"
        )));
    }
    let v0 = omega * omega / (2.0 * gamma);
    let delta_t = 2.0 * gamma / (omega * omega);
    let ratio = gamma / omega;
    let warning = (ratio > WEAK_DRIVING_LIMIT)
        .then(|| format!("gamma/omega = {ratio:.3} is not small; the weak-driving mapping is unreliable"));
    Ok(SchulmanMap {
        v0,
        delta_t,
        product: v0 * delta_t,
        warning,
    })
}

//! Operational detection models.
//!
//! All three remove norm from the detection region `x >= 0`:
//!
//! * projection: free evolution for `delta_t`, then every amplitude at
//!   `x >= 0` is set to zero;
//! * kicked: the same cycle, but the right amplitudes are multiplied by
//!   `exp(-V0 delta_t)` (the impulsive form of `-i V0 Theta(x)`);
//! * continuous: the absorbing potential `-i V0 Theta(x)` is on at all times,
//!   integrated with a symmetric split step of length `inner_dt`.
//!
//! Removed norm is collected per reporting interval `delta_t` and attributed
//! to the interval's right edge, which for the pulsed models is the instant of
//! the pulse.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{apply_kinetic, sum_sq, FreePropagator, SpatialGrid, WaveFunction};
use crate::packets::{packet_diagnostics, NEG_K_LIMIT};

/// Edge density that aborts a run.
pub const BOUNDARY_LEAK_LIMIT: f64 = 1e-8;

/// Undetected norm above which a finished run counts as reflective.
pub const REFLECTION_THRESHOLD: f64 = 0.01;

/// Run length, in classical crossing times, after which reflection is judged.
pub const REFLECTION_WINDOW: f64 = 3.0;

/// Kick strength `V0 delta_t` below which a kicked schedule gets a warning.
pub const KICK_RATIO_WARN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MeasurementModel {
    Projection,
    Kicked,
    Continuous,
}

impl MeasurementModel {
    pub fn name(self) -> &'static str {
        match self {
            MeasurementModel::Projection => "projection",
            MeasurementModel::Kicked => "kicked",
            MeasurementModel::Continuous => "continuous",
        }
    }
}

impl std::str::FromStr for MeasurementModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projection" => Ok(MeasurementModel::Projection),
            "kicked" => Ok(MeasurementModel::Kicked),
            "continuous" => Ok(MeasurementModel::Continuous),
            other => Err(Error::InvalidArgument(format!(
                "unknown model '{other}' (expected projection, kicked or continuous)"
            ))),
        }
    }
}

impl std::fmt::Display for MeasurementModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSchedule {
    pub model: MeasurementModel,
    /// Pulse period, or the reporting interval for the continuous model.
    pub delta_t: f64,
    pub v0: Option<f64>,
    /// Set when `delta_t` was derived as `alpha / V0`.
    pub alpha: Option<f64>,
    pub t_end: f64,
    /// Split-step length for the continuous model.
    pub inner_dt: Option<f64>,
}

impl MeasurementSchedule {
    pub fn projection(delta_t: f64, t_end: f64) -> Self {
        Self {
            model: MeasurementModel::Projection,
            delta_t,
            v0: None,
            alpha: None,
            t_end,
            inner_dt: None,
        }
    }

    pub fn kicked(v0: f64, delta_t: f64, t_end: f64) -> Self {
        Self {
            model: MeasurementModel::Kicked,
            delta_t,
            v0: Some(v0),
            alpha: None,
            t_end,
            inner_dt: None,
        }
    }

    /// Kicked schedule with `delta_t = alpha / V0`.
    pub fn kicked_alpha(v0: f64, alpha: f64, t_end: f64) -> Self {
        Self {
            alpha: Some(alpha),
            ..Self::kicked(v0, alpha / v0, t_end)
        }
    }

    /// Continuous absorption reported every `sample_dt`. The split step is
    /// the largest divisor of `sample_dt` not exceeding `1/(20 V0)`.
    pub fn continuous(v0: f64, sample_dt: f64, t_end: f64) -> Self {
        Self {
            model: MeasurementModel::Continuous,
            delta_t: sample_dt,
            v0: Some(v0),
            alpha: None,
            t_end,
            inner_dt: None,
        }
    }

    pub fn with_inner_dt(mut self, inner_dt: f64) -> Self {
        self.inner_dt = Some(inner_dt);
        self
    }

    /// Checks the schedule and returns non-fatal warnings.
    pub fn validate(&self, t_start: f64) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if !(self.delta_t > 0.0) || !self.delta_t.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "delta_t = {} must be positive",
                self.delta_t
            )));
        }
        if !(self.t_end > t_start) {
            return Err(Error::InvalidSchedule(format!(
                "t_end = {} must exceed the start time {}",
                self.t_end, t_start
            )));
        }
        match self.model {
            MeasurementModel::Projection => {}
            MeasurementModel::Kicked | MeasurementModel::Continuous => {
                let v0 = self.v0.ok_or_else(|| {
                    Error::InvalidSchedule(format!("{} model requires V0", self.model))
                })?;
                if !(v0 >= 0.0) || !v0.is_finite() {
                    return Err(Error::InvalidSchedule(format!("V0 = {v0} must be >= 0")));
                }
                if self.model == MeasurementModel::Kicked {
                    if v0 == 0.0 {
                        return Err(Error::InvalidSchedule("kicked model requires V0 > 0".into()));
                    }
                    let ratio = v0 * self.delta_t;
                    if ratio < KICK_RATIO_WARN {
                        warnings.push(format!(
                            "kick strength V0*delta_t = {ratio:.3} is not large; pulses only partly remove the right component"
                        ));
                    }
                }
                if let Some(alpha) = self.alpha {
                    if ((v0 * self.delta_t) - alpha).abs() > 1e-9 * alpha.abs().max(1.0) {
                        return Err(Error::InvalidSchedule(format!(
                            "delta_t * V0 = {} does not match alpha = {alpha}",
                            v0 * self.delta_t
                        )));
                    }
                    if alpha < 10.0 {
                        warnings.push(format!("alpha = {alpha} is below 10"));
                    }
                }
                if self.model == MeasurementModel::Continuous {
                    let h = self.resolve_inner_dt(v0);
                    if v0 > 0.0 && h > 1.0 / (20.0 * v0) * (1.0 + 1e-12) {
                        return Err(Error::StepTooLarge {
                            inner_dt: h,
                            limit: 1.0 / (20.0 * v0),
                        });
                    }
                    if h > self.delta_t * (1.0 + 1e-12) {
                        return Err(Error::InvalidSchedule(format!(
                            "inner_dt = {h} exceeds the reporting interval {}",
                            self.delta_t
                        )));
                    }
                }
            }
        }
        Ok(warnings)
    }

    fn resolve_inner_dt(&self, v0: f64) -> f64 {
        match self.inner_dt {
            Some(h) => h,
            None => {
                let cap = if v0 > 0.0 { 1.0 / (20.0 * v0) } else { self.delta_t };
                self.delta_t / (self.delta_t / cap).ceil().max(1.0)
            }
        }
    }

    /// `V0 delta_t` for kicked schedules.
    pub fn kick_ratio(&self) -> Option<f64> {
        match self.model {
            MeasurementModel::Kicked => self.v0.map(|v| v * self.delta_t),
            _ => None,
        }
    }

    pub fn n_bins(&self, t_start: f64) -> usize {
        ((self.t_end - t_start) / self.delta_t - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone)]
pub struct DetectionRecord {
    pub t_start: f64,
    /// Right edges of the reporting intervals.
    pub t_bins: Vec<f64>,
    /// Norm removed from `x >= 0` in each interval.
    pub removed: Vec<f64>,
    /// On-grid norm at each right edge.
    pub survival: Vec<f64>,
    /// Cumulative norm absorbed by the left boundary strip (never detected).
    pub escaped: f64,
    pub initial_norm: f64,
    pub detected_fraction: f64,
    pub schedule: MeasurementSchedule,
    pub reflection_flag: bool,
    /// Classical time for the initial state to reach the origin.
    pub crossing_time: f64,
    pub warnings: Vec<String>,
}

impl DetectionRecord {
    /// Norm that was neither detected nor is still on the grid's interior
    /// moving in: `N(t_end) + escaped`, relative to the initial norm.
    pub fn undetected_fraction(&self) -> f64 {
        let end = self.survival.last().copied().unwrap_or(self.initial_norm);
        (end + self.escaped) / self.initial_norm
    }

    /// First moment over the detection instants.
    pub fn mean_detection_time(&self) -> Option<f64> {
        let total: f64 = self.removed.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        Some(
            self.t_bins
                .iter()
                .zip(&self.removed)
                .map(|(t, r)| t * r)
                .sum::<f64>()
                / total,
        )
    }
}

/// Sets every amplitude at `x >= 0` to zero and returns the removed norm.
pub fn project_left(psi: &WaveFunction) -> (WaveFunction, f64) {
    let mut out = psi.clone();
    let removed = project_in_place(&mut out);
    (out, removed)
}

fn project_in_place(psi: &mut WaveFunction) -> f64 {
    let split = psi.grid().split_index();
    let dx = psi.grid().dx();
    let right = &mut psi.amplitudes_mut()[split..];
    let removed = sum_sq(right) * dx;
    right.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
    removed
}

/// Multiplies the amplitudes at `x >= 0` by `factor` and returns the norm
/// lost.
fn damp_right(psi: &mut WaveFunction, factor: f64) -> f64 {
    let split = psi.grid().split_index();
    let dx = psi.grid().dx();
    let right = &mut psi.amplitudes_mut()[split..];
    let before = sum_sq(right);
    right.iter_mut().for_each(|a| *a *= factor);
    (before - sum_sq(right)) * dx
}

/// One unit `exp(-i H0 dt) exp(-i V dt)` of the kicked model: the right
/// amplitudes are damped by `exp(-V0 delta_t)`, then the state moves freely
/// for `delta_t`. Returns the norm removed by the kick.
pub fn kicked_step(psi: &WaveFunction, v0: f64, delta_t: f64) -> (WaveFunction, f64) {
    let mut out = psi.clone();
    let removed = damp_right(&mut out, (-v0 * delta_t).exp());
    FreePropagator::new(out.grid_arc().clone(), delta_t).apply(&mut out);
    (out, removed)
}

/// One symmetric split step for `H0 - i V0 Theta(x)`: half kick, free step,
/// half kick. Returns the norm decrease.
pub fn continuous_step(psi: &WaveFunction, v0: f64, inner_dt: f64) -> Result<(WaveFunction, f64)> {
    if v0 > 0.0 && inner_dt > 1.0 / (20.0 * v0) * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge {
            inner_dt,
            limit: 1.0 / (20.0 * v0),
        });
    }
    let mut out = psi.clone();
    let mut prop = FreePropagator::new(out.grid_arc().clone(), inner_dt);
    let half = (-0.5 * v0 * inner_dt).exp();
    let mut removed = damp_right(&mut out, half);
    prop.apply(&mut out);
    removed += damp_right(&mut out, half);
    Ok((out, removed))
}

/// Free evolution over one reporting interval, split into substeps short
/// enough for the absorbing strips, with the boundary guard after each one.
struct FreeStepper {
    prop: FreePropagator,
    substeps: usize,
}

/// Norm lost to the boundary strips during a call.
#[derive(Debug, Default, Clone, Copy)]
struct StripLoss {
    right: f64,
    left: f64,
}

impl FreeStepper {
    fn new(grid: &Arc<SpatialGrid>, dt: f64) -> Self {
        let substeps = match grid.max_layer_substep() {
            Some(h) => (dt / h).ceil().max(1.0) as usize,
            None => 1,
        };
        Self {
            prop: FreePropagator::new(grid.clone(), dt / substeps as f64),
            substeps,
        }
    }

    fn advance(&mut self, psi: &mut WaveFunction, loss: &mut StripLoss) -> Result<()> {
        for _ in 0..self.substeps {
            self.prop.apply(psi);
            guard_and_absorb(psi, loss)?;
        }
        Ok(())
    }
}

fn guard_and_absorb(psi: &mut WaveFunction, loss: &mut StripLoss) -> Result<()> {
    let edge = psi.edge_density();
    if edge > BOUNDARY_LEAK_LIMIT {
        return Err(Error::BoundaryLeak {
            time: psi.time(),
            density: edge,
            threshold: BOUNDARY_LEAK_LIMIT,
        });
    }
    let grid = psi.grid_arc().clone();
    if let Some(layer) = grid.layer() {
        let dx = grid.dx();
        let mask = layer.mask();
        let amps = psi.amplitudes_mut();
        let (l_end, r_start) = (layer.left_end(), layer.right_start());
        let mut left = 0.0;
        for (a, &m) in amps[..l_end].iter_mut().zip(&mask[..l_end]) {
            let before = a.norm_sqr();
            *a *= m;
            left += before - a.norm_sqr();
        }
        let mut right = 0.0;
        for (a, &m) in amps[r_start..].iter_mut().zip(&mask[r_start..]) {
            let before = a.norm_sqr();
            *a *= m;
            right += before - a.norm_sqr();
        }
        loss.left += left * dx;
        loss.right += right * dx;
    }
    Ok(())
}

/// Runs `schedule` from `psi0` and collects the detection record.
pub fn run_measurement(psi0: &WaveFunction, schedule: &MeasurementSchedule) -> Result<DetectionRecord> {
    run_measurement_observed(psi0, schedule, |_| Ok(()))
}

/// Like [`run_measurement`], calling `observe` with the state at the start
/// and at every reporting edge.
pub fn run_measurement_observed<F>(
    psi0: &WaveFunction,
    schedule: &MeasurementSchedule,
    mut observe: F,
) -> Result<DetectionRecord>
where
    F: FnMut(&WaveFunction) -> Result<()>,
{
    let t_start = psi0.time();
    let warnings = schedule.validate(t_start)?;
    let initial_norm = psi0.total_norm();
    if !(initial_norm > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let leak = psi0.edge_density();
    if leak > BOUNDARY_LEAK_LIMIT {
        return Err(Error::BoundaryLeak {
            time: t_start,
            density: leak,
            threshold: BOUNDARY_LEAK_LIMIT,
        });
    }
    let crossing_time = classical_crossing_time(psi0);

    let grid = psi0.grid_arc().clone();
    let n_bins = schedule.n_bins(t_start);
    let dt = schedule.delta_t;
    let mut psi = psi0.clone();
    let mut t_bins = Vec::with_capacity(n_bins);
    let mut removed = Vec::with_capacity(n_bins);
    let mut survival = Vec::with_capacity(n_bins);
    let mut loss = StripLoss::default();

    observe(&psi)?;
    match schedule.model {
        MeasurementModel::Projection | MeasurementModel::Kicked => {
            let mut stepper = FreeStepper::new(&grid, dt);
            let factor = match schedule.model {
                MeasurementModel::Kicked => Some((-schedule.v0.unwrap_or(0.0) * dt).exp()),
                _ => None,
            };
            for j in 1..=n_bins {
                let before_right = loss.right;
                stepper.advance(&mut psi, &mut loss)?;
                let t = t_start + j as f64 * dt;
                psi.set_time(t);
                let kick = match factor {
                    Some(f) => damp_right(&mut psi, f),
                    None => project_in_place(&mut psi),
                };
                t_bins.push(t);
                removed.push(kick + (loss.right - before_right));
                survival.push(psi.total_norm());
                observe(&psi)?;
            }
        }
        MeasurementModel::Continuous => {
            let v0 = schedule.v0.unwrap_or(0.0);
            let mut h = schedule.resolve_inner_dt(v0);
            if let Some(max_h) = grid.max_layer_substep() {
                h = h.min(max_h);
            }
            let per_bin = (dt / h - 1e-9).ceil().max(1.0) as usize;
            let h = dt / per_bin as f64;
            let mut prop = FreePropagator::new(grid.clone(), h);
            let half = (-0.5 * v0 * h).exp();
            for j in 1..=n_bins {
                let before_right = loss.right;
                let mut absorbed = 0.0;
                for _ in 0..per_bin {
                    absorbed += damp_right(&mut psi, half);
                    prop.apply(&mut psi);
                    guard_and_absorb(&mut psi, &mut loss)?;
                    absorbed += damp_right(&mut psi, half);
                }
                let t = t_start + j as f64 * dt;
                psi.set_time(t);
                t_bins.push(t);
                removed.push(absorbed + (loss.right - before_right));
                survival.push(psi.total_norm());
                observe(&psi)?;
            }
        }
    }

    let detected_fraction = removed.iter().sum::<f64>() / initial_norm;
    let end = survival.last().copied().unwrap_or(initial_norm);
    let undetected = (end + loss.left) / initial_norm;
    let window_passed = schedule.t_end - t_start >= REFLECTION_WINDOW * crossing_time;
    Ok(DetectionRecord {
        t_start,
        t_bins,
        removed,
        survival,
        escaped: loss.left,
        initial_norm,
        detected_fraction,
        schedule: schedule.clone(),
        reflection_flag: window_passed && undetected > REFLECTION_THRESHOLD,
        crossing_time,
        warnings,
    })
}

/// `max(0, -<x>) / <k>` for the current state, or infinity if it does not
/// move right.
pub fn classical_crossing_time(psi: &WaveFunction) -> f64 {
    let n = psi.total_norm();
    let dx = psi.grid().dx();
    let mean_x: f64 = psi
        .amplitudes()
        .iter()
        .zip(psi.grid().x_values())
        .map(|(a, &x)| a.norm_sqr() * x)
        .sum::<f64>()
        * dx
        / n;
    let k0 = packet_diagnostics(psi).map(|d| d.k0).unwrap_or(0.0);
    if k0 > 0.0 {
        (-mean_x).max(0.0) / k0
    } else {
        f64::INFINITY
    }
}

/// Multiplies momentum amplitudes by `k^power` (zero for `k <= 0`) and
/// renormalizes. Returns the new state and the constant `C` it was divided
/// by.
pub fn momentum_power_transform(psi: &WaveFunction, power: f64) -> Result<(WaveFunction, f64)> {
    let diag = packet_diagnostics(psi)?;
    if diag.neg_k_fraction >= NEG_K_LIMIT {
        return Err(Error::NegativeMomentum {
            fraction: diag.neg_k_fraction,
            limit: NEG_K_LIMIT,
        });
    }
    let coeffs: Vec<Complex64> = psi
        .to_momentum()
        .into_iter()
        .zip(psi.grid().k_values())
        .map(|(c, &k)| if k > 0.0 { c * k.powf(power) } else { Complex64::new(0.0, 0.0) })
        .collect();
    let mut out = WaveFunction::from_momentum(psi.grid_arc().clone(), &coeffs, psi.time())?;
    let norm = out.normalize()?;
    Ok((out, norm.sqrt()))
}

/// The `psi~(k) -> k^(1/2) psi~(k) / C` state transform.
pub fn operator_normalize(psi: &WaveFunction) -> Result<(WaveFunction, f64)> {
    momentum_power_transform(psi, 0.5)
}

/// Quantities entering the Robertson-Schroedinger bound for the current
/// state, all with the state normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutatorBound {
    pub time: f64,
    pub delta_h0: f64,
    pub n_plus: f64,
    /// `|<[V, H0]>|`
    pub commutator: f64,
    /// `2 |Delta V_I| Delta H0` with `|Delta V_I| = V0 (N+ - N+^2)^(1/2)`
    pub bound: f64,
}

/// Evaluates `<psi| V H0 - H0 V |psi> / <psi|psi>` for `V = -i V0 Theta(x)`
/// with `H0` applied in the momentum basis and `V` in the position basis.
pub fn commutator_expectation(psi: &WaveFunction, v0: f64) -> Result<Complex64> {
    let norm = psi.total_norm();
    if !(norm > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let grid = psi.grid();
    let split = grid.split_index();
    let amps = psi.amplitudes();
    let minus_iv0 = Complex64::new(0.0, -v0);

    let h_psi = apply_kinetic(grid, amps);
    let v_h_psi: Complex64 = amps[split..]
        .iter()
        .zip(&h_psi[split..])
        .map(|(a, b)| a.conj() * minus_iv0 * b)
        .sum();

    let mut v_psi = vec![Complex64::new(0.0, 0.0); amps.len()];
    for (dst, a) in v_psi[split..].iter_mut().zip(&amps[split..]) {
        *dst = minus_iv0 * a;
    }
    let h_v_psi = apply_kinetic(grid, &v_psi);
    let h_v: Complex64 = amps.iter().zip(&h_v_psi).map(|(a, b)| a.conj() * b).sum();

    Ok((v_h_psi - h_v) * grid.dx() / norm)
}

pub fn commutator_bound(psi: &WaveFunction, v0: f64) -> Result<CommutatorBound> {
    let diag = packet_diagnostics(psi)?;
    let norm = psi.total_norm();
    let n_plus = (psi.right_norm() / norm).clamp(0.0, 1.0);
    let delta_v = v0 * (n_plus - n_plus * n_plus).max(0.0).sqrt();
    let commutator = commutator_expectation(psi, v0)?.norm();
    Ok(CommutatorBound {
        time: psi.time(),
        delta_h0: diag.delta_h0,
        n_plus,
        commutator,
        bound: 2.0 * delta_v * diag.delta_h0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packets::{gaussian_packet, GaussianSpec};

    fn grid(x_min: f64, x_max: f64, n: usize) -> Arc<SpatialGrid> {
        Arc::new(SpatialGrid::new(x_min, x_max, n).unwrap())
    }

    fn left_packet() -> (Arc<SpatialGrid>, WaveFunction) {
        let g = grid(-80.0, 80.0, 2048);
        let psi = gaussian_packet(GaussianSpec::new(-30.0, 0.0, 2.0, 1.0), &g, 0.0).unwrap();
        (g, psi)
    }

    #[test]
    fn projection_of_left_packet_is_identity() {
        let (_, psi) = left_packet();
        let (out, removed) = project_left(&psi);
        assert!(removed < 1e-9);
        for (a, b) in out.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert_eq!(out.time(), psi.time());
    }

    #[test]
    fn projection_of_right_packet_removes_everything() {
        let g = grid(-80.0, 80.0, 2048);
        let psi = gaussian_packet(GaussianSpec::new(30.0, 0.0, 2.0, 1.0), &g, 0.0).unwrap();
        let (out, removed) = project_left(&psi);
        assert!((removed - psi.total_norm()).abs() < 1e-12);
        assert!(out.total_norm() < 1e-40);
    }

    #[test]
    fn projection_is_idempotent() {
        let g = grid(-40.0, 40.0, 1024);
        let psi = gaussian_packet(GaussianSpec::new(0.0, 0.0, 2.0, 1.0), &g, 0.0).unwrap();
        let (once, r1) = project_left(&psi);
        let (_, r2) = project_left(&once);
        assert!(r1 > 0.4);
        assert_eq!(r2, 0.0);
    }

    #[test]
    fn strong_kick_equals_projection() {
        let g = grid(-40.0, 40.0, 1024);
        let psi = gaussian_packet(GaussianSpec::new(0.0, 0.0, 2.0, 1.0), &g, 0.0).unwrap();
        let (kicked, rk) = kicked_step(&psi, 50.0, 1.0);
        let (proj, rp) = project_left(&psi);
        let proj = crate::packets::free_evolve(&proj, 1.0);
        assert!((rk - rp).abs() < 1e-12);
        for (a, b) in kicked.amplitudes().iter().zip(proj.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn kick_on_uniform_right_density() {
        let g = grid(-8.0, 8.0, 64);
        let mut amps = vec![Complex64::new(0.0, 0.0); 64];
        // uniform density on both halves, total norm 1
        let a = (1.0f64 / 16.0).sqrt();
        amps.iter_mut().for_each(|z| *z = Complex64::new(a, 0.0));
        let psi = WaveFunction::new(g, amps, 0.0).unwrap();
        assert!((psi.right_norm() - 0.5).abs() < 1e-14);
        let (_, removed) = kicked_step(&psi, 1.0, 1.0);
        let oracle = 0.5 * (1.0 - (-2.0f64).exp());
        assert!((removed - oracle).abs() < 1e-14);
        assert!((removed - 0.4323).abs() < 1e-4);
    }

    #[test]
    fn continuous_step_without_potential_is_unitary() {
        let (_, psi) = left_packet();
        let (out, removed) = continuous_step(&psi, 0.0, 0.5).unwrap();
        assert_eq!(removed, 0.0);
        assert!((out.total_norm() - psi.total_norm()).abs() < 1e-12);
    }

    #[test]
    fn continuous_step_rejects_large_steps() {
        let (_, psi) = left_packet();
        assert!(matches!(
            continuous_step(&psi, 1.0, 0.1),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn continuous_decay_rate_inside_absorber() {
        // slow broad packet deep inside x > 0: norm decays as exp(-2 V0 t)
        let g = grid(-100.0, 300.0, 4096);
        let mut psi = gaussian_packet(GaussianSpec::new(150.0, 0.0, 20.0, 0.0), &g, 0.0).unwrap();
        let v0 = 0.05;
        let h = 1.0 / (20.0 * v0);
        let steps = 40;
        for _ in 0..steps {
            psi = continuous_step(&psi, v0, h).unwrap().0;
        }
        let t = steps as f64 * h;
        let expected = (-2.0 * v0 * t).exp();
        assert!((psi.total_norm() / expected - 1.0).abs() < 1e-6, "{} vs {expected}", psi.total_norm());
    }

    #[test]
    fn continuous_step_is_second_order() {
        // the step error is second order once h * k_max^2 is small
        let g = grid(-40.0, 40.0, 256);
        let psi0 = gaussian_packet(GaussianSpec::new(-1.0, 0.0, 1.5, 1.0), &g, 0.0).unwrap();
        let (v0, t) = (0.5, 0.8);
        let evolve = |h: f64| {
            let mut psi = psi0.clone();
            for _ in 0..(t / h).round() as usize {
                psi = continuous_step(&psi, v0, h).unwrap().0;
            }
            psi
        };
        let h = 0.004;
        let reference = evolve(h / 16.0);
        let err = |psi: &WaveFunction| {
            psi.amplitudes()
                .iter()
                .zip(reference.amplitudes())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        let ratio = err(&evolve(h)) / err(&evolve(h / 2.0));
        assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn run_before_arrival_detects_nothing() {
        let (_, psi) = left_packet();
        let sched = MeasurementSchedule::projection(0.5, 5.0);
        let rec = run_measurement(&psi, &sched).unwrap();
        assert!(rec.detected_fraction < 1e-6);
        assert!(!rec.reflection_flag);
        assert_eq!(rec.t_bins.len(), 10);
        assert!((rec.t_bins[9] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn survival_non_increasing_and_removed_accounted() {
        let g = Arc::new(
            SpatialGrid::new(-120.0, 80.0, 2048)
                .unwrap()
                .with_absorbing_layer(20.0)
                .unwrap(),
        );
        let psi = gaussian_packet(GaussianSpec::new(-30.0, 0.0, 3.0, 1.0), &g, 0.0).unwrap();
        for sched in [
            MeasurementSchedule::projection(1.0, 80.0),
            MeasurementSchedule::kicked(2.0, 1.0, 80.0),
            MeasurementSchedule::continuous(0.3, 1.0, 80.0),
        ] {
            let rec = run_measurement(&psi, &sched).unwrap();
            assert!(rec.removed.iter().all(|&r| r >= -1e-14));
            assert!(rec.survival.windows(2).all(|w| w[1] <= w[0] + 1e-14));
            let lost = rec.initial_norm - rec.survival.last().unwrap();
            let accounted: f64 = rec.removed.iter().sum::<f64>() + rec.escaped;
            assert!((lost - accounted).abs() < 1e-10, "{}: {lost} vs {accounted}", sched.model);
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(MeasurementSchedule::projection(0.0, 1.0).validate(0.0).is_err());
        assert!(MeasurementSchedule::projection(0.1, -1.0).validate(0.0).is_err());
        let mut k = MeasurementSchedule::kicked(1.0, 1.0, 5.0);
        k.v0 = None;
        assert!(k.validate(0.0).is_err());
        let w = MeasurementSchedule::kicked(1.0, 1.0, 5.0).validate(0.0).unwrap();
        assert_eq!(w.len(), 1);
        let w = MeasurementSchedule::kicked_alpha(10.0, 5.0, 5.0).validate(0.0).unwrap();
        assert!(w.iter().any(|s| s.contains("alpha")));
        let c = MeasurementSchedule::continuous(1.0, 1.0, 5.0);
        assert!(c.validate(0.0).is_ok());
        assert!(c.clone().with_inner_dt(0.2).validate(0.0).is_err());
        assert!(MeasurementSchedule::continuous(0.001, 1.0, 5.0)
            .with_inner_dt(2.0)
            .validate(0.0)
            .is_err());
    }

    #[test]
    fn operator_normalization_of_narrow_packet() {
        let g = grid(-800.0, 800.0, 8192);
        let psi = gaussian_packet(GaussianSpec::new(-300.0, 0.0, 50.0, 2.0), &g, 0.0).unwrap();
        let (out, c) = operator_normalize(&psi).unwrap();
        assert!((out.total_norm() - 1.0).abs() < 1e-12);
        assert!((c - 2.0f64.sqrt()).abs() < 1e-3);
        // overlap with the original is a unit-modulus factor
        let ov: Complex64 = out
            .amplitudes()
            .iter()
            .zip(psi.amplitudes())
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * g.dx();
        assert!(ov.norm() > 1.0 - 1e-4);
    }

    #[test]
    fn operator_normalization_rejects_negative_momenta() {
        let g = grid(-40.0, 40.0, 1024);
        let psi = gaussian_packet(GaussianSpec::new(-10.0, 0.0, 1.0, 0.5), &g, 0.0).unwrap();
        assert!(matches!(operator_normalize(&psi), Err(Error::NegativeMomentum { .. })));
    }

    #[test]
    fn commutator_vanishes_away_from_origin_and_obeys_bound() {
        let (_, psi) = left_packet();
        let b = commutator_bound(&psi, 1.0).unwrap();
        assert!(b.commutator < 1e-8);
        let g = grid(-40.0, 40.0, 1024);
        let psi = gaussian_packet(GaussianSpec::new(-1.0, 0.0, 1.5, 1.2), &g, 0.0).unwrap();
        let b = commutator_bound(&psi, 2.0).unwrap();
        assert!(b.commutator > 1e-3);
        assert!(b.commutator <= b.bound * (1.0 + 1e-6));
        // <[V, H0]> is real for V = -i V0 Theta
        let c = commutator_expectation(&psi, 2.0).unwrap();
        assert!(c.im.abs() < 1e-10 * c.norm());
    }
}

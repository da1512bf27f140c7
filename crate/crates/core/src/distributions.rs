//! Ideal arrival-time densities of the free state and normalization of
//! detection records.
//!
//! With `psi~(k, t)` the momentum amplitude of the freely moving state, the
//! ideal densities at the origin are
//!
//! * flux: `J(t) = Im[psi*(0, t) d_x psi(0, t)]`,
//! * Kijowski: `Pi_K(t) = |(2 pi)^(-1/2) int dk k^(1/2) psi~(k, t)|^2`,
//! * Zeno limit: `Pi_N(t) = |(2 pi)^(-1/2) int dk k psi~(k, t)|^2 / k0` with
//!   `k0 = <k>`.
//!
//! The momentum integrals run over `k > 0` by midpoint quadrature.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measurement::DetectionRecord;
use crate::packets::{FreeState, NEG_K_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistributionKind {
    Flux,
    Kijowski,
    ZenoIdeal,
    Operational,
}

impl DistributionKind {
    pub fn name(self) -> &'static str {
        match self {
            DistributionKind::Flux => "flux",
            DistributionKind::Kijowski => "kijowski",
            DistributionKind::ZenoIdeal => "zeno_ideal",
            DistributionKind::Operational => "operational",
        }
    }

    pub fn is_ideal(self) -> bool {
        self != DistributionKind::Operational
    }
}

impl std::fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct TimeDistribution {
    pub kind: DistributionKind,
    pub t_values: Vec<f64>,
    /// Density per unit time.
    pub density: Vec<f64>,
    /// 1 for ideal kinds.
    pub detected_fraction: f64,
    /// For operational densities, the width of the bin ending at each
    /// `t_values[i]`; `None` for densities sampled pointwise.
    pub bin_width: Option<f64>,
    /// Trapezoid integral before any renormalization (ideal kinds).
    pub raw_integral: Option<f64>,
    pub renormalized: bool,
    pub metadata: String,
}

impl TimeDistribution {
    /// Total mass: the bin sum for binned densities, otherwise the
    /// trapezoid rule.
    pub fn integral(&self) -> f64 {
        match self.bin_width {
            Some(w) => self.density.iter().sum::<f64>() * w,
            None => trapezoid(&self.t_values, &self.density),
        }
    }

    pub fn min_density(&self) -> f64 {
        self.density.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Time of the largest density value.
    pub fn peak_time(&self) -> f64 {
        let mut best = 0;
        for (i, &d) in self.density.iter().enumerate() {
            if d > self.density[best] {
                best = i;
            }
        }
        self.t_values[best]
    }

    /// Copy scaled to unit integral.
    pub fn renormalize(&self) -> Result<TimeDistribution> {
        let total = self.integral();
        if !(total.abs() > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let mut out = self.clone();
        out.density.iter_mut().for_each(|d| *d /= total);
        out.renormalized = true;
        Ok(out)
    }

    /// Piecewise-linear interpolant, zero outside the sampled span.
    fn value_at(&self, t: f64) -> f64 {
        let ts = &self.t_values;
        let n = ts.len();
        if n == 0 || t < ts[0] || t > ts[n - 1] {
            return 0.0;
        }
        let j = ts.partition_point(|&x| x <= t);
        if j == 0 {
            return self.density[0];
        }
        if j >= n {
            return self.density[n - 1];
        }
        let (t0, t1) = (ts[j - 1], ts[j]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        self.density[j - 1] * (1.0 - w) + self.density[j] * w
    }

    /// Exact integral of the piecewise-linear interpolant over `[a, b]`.
    fn integrate_between(&self, a: f64, b: f64) -> f64 {
        let ts = &self.t_values;
        if ts.len() < 2 || b <= a {
            return 0.0;
        }
        let a = a.max(ts[0]);
        let b = b.min(ts[ts.len() - 1]);
        if b <= a {
            return 0.0;
        }
        let mut knots = vec![a];
        let lo = ts.partition_point(|&x| x <= a);
        let hi = ts.partition_point(|&x| x < b);
        knots.extend_from_slice(&ts[lo..hi]);
        knots.push(b);
        knots
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.value_at(w[0]) + self.value_at(w[1])))
            .sum()
    }
}

pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// `n` evenly spaced times from `t0` to `t1` inclusive.
pub fn linspace(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t0],
        _ => {
            let h = (t1 - t0) / (n - 1) as f64;
            (0..n).map(|i| t0 + i as f64 * h).collect()
        }
    }
}

/// Midpoint rule on `[k_lo, k_hi]` with `k_lo >= 0`.
#[derive(Debug, Clone)]
pub struct MomentumQuadrature {
    pub k: Vec<f64>,
    pub h: f64,
    base: Vec<Complex64>,
}

/// Fewest nodes used by [`MomentumQuadrature::for_state`].
pub const MIN_QUADRATURE_NODES: usize = 1024;

impl MomentumQuadrature {
    /// Nodes dense enough that the implied spatial period `2 pi / h` covers
    /// twice the state's extent at every requested time.
    pub fn for_state(state: &FreeState, t_values: &[f64]) -> Self {
        Self::with_refinement(state, t_values, 1)
    }

    /// As [`MomentumQuadrature::for_state`] with `refine` times more nodes.
    pub fn with_refinement(state: &FreeState, t_values: &[f64], refine: usize) -> Self {
        let (lo, hi) = state.momentum_support();
        let (lo, hi) = (lo.max(0.0), hi.max(0.0));
        let extent = t_values
            .iter()
            .map(|&t| state.spatial_extent(t))
            .fold(0.0, f64::max)
            .max(1e-300);
        let h_max = PI / extent;
        let n = (((hi - lo) / h_max).ceil() as usize).max(MIN_QUADRATURE_NODES) * refine.max(1);
        Self::new(state, lo, hi, n)
    }

    pub fn new(state: &FreeState, k_lo: f64, k_hi: f64, n: usize) -> Self {
        let h = (k_hi - k_lo) / n as f64;
        let k: Vec<f64> = (0..n).map(|i| k_lo + (i as f64 + 0.5) * h).collect();
        let base = k.iter().map(|&kk| state.momentum_amplitude(kk, 0.0)).collect();
        Self { k, h, base }
    }

    /// `(2 pi)^(-1/2) int dk w(k) psi~(k, t)` for weights `w` sampled at the
    /// nodes.
    pub fn amplitude(&self, weights: &[f64], t: f64) -> Complex64 {
        let sum: Complex64 = self
            .k
            .iter()
            .zip(&self.base)
            .zip(weights)
            .map(|((&k, &c), &w)| c * w * Complex64::from_polar(1.0, -0.5 * k * k * t))
            .sum();
        sum * self.h / (2.0 * PI).sqrt()
    }

    fn powers(&self, p: f64) -> Vec<f64> {
        self.k.iter().map(|&k| k.powf(p)).collect()
    }
}

fn ideal(kind: DistributionKind, t_values: &[f64], density: Vec<f64>, metadata: String) -> TimeDistribution {
    let raw = trapezoid(t_values, &density);
    TimeDistribution {
        kind,
        t_values: t_values.to_vec(),
        density,
        detected_fraction: 1.0,
        bin_width: None,
        raw_integral: Some(raw),
        renormalized: false,
        metadata,
    }
}

fn check_times(t_values: &[f64]) -> Result<()> {
    if t_values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("t_values must be strictly increasing".into()));
    }
    Ok(())
}

fn check_negative_momenta(state: &FreeState) -> Result<()> {
    let fraction = state.negative_momentum_fraction();
    if fraction >= NEG_K_LIMIT {
        return Err(Error::NegativeMomentum {
            fraction,
            limit: NEG_K_LIMIT,
        });
    }
    Ok(())
}

/// Probability current at the origin from the analytic state.
pub fn ideal_flux(state: &FreeState, t_values: &[f64]) -> Result<TimeDistribution> {
    check_times(t_values)?;
    let density = t_values
        .par_iter()
        .map(|&t| {
            let (psi, slope) = state.amplitude_and_slope(0.0, t);
            (psi.conj() * slope).im
        })
        .collect();
    Ok(ideal(DistributionKind::Flux, t_values, density, "flux at x = 0".into()))
}

pub fn kijowski_distribution(state: &FreeState, t_values: &[f64]) -> Result<TimeDistribution> {
    let quad = MomentumQuadrature::for_state(state, t_values);
    kijowski_with(state, &quad, t_values)
}

pub fn kijowski_with(
    state: &FreeState,
    quad: &MomentumQuadrature,
    t_values: &[f64],
) -> Result<TimeDistribution> {
    check_times(t_values)?;
    check_negative_momenta(state)?;
    let w = quad.powers(0.5);
    let density = t_values
        .par_iter()
        .map(|&t| quad.amplitude(&w, t).norm_sqr())
        .collect();
    Ok(ideal(
        DistributionKind::Kijowski,
        t_values,
        density,
        format!("k^(1/2) amplitude, {} momentum nodes", quad.k.len()),
    ))
}

/// Zeno-limit density with the `1/k0` prefactor; its raw integral is kept in
/// `raw_integral`.
pub fn zeno_ideal_distribution(state: &FreeState, t_values: &[f64]) -> Result<TimeDistribution> {
    let quad = MomentumQuadrature::for_state(state, t_values);
    zeno_ideal_with(state, &quad, t_values)
}

pub fn zeno_ideal_with(
    state: &FreeState,
    quad: &MomentumQuadrature,
    t_values: &[f64],
) -> Result<TimeDistribution> {
    check_times(t_values)?;
    let k0 = state.mean_k();
    if !(k0 > 0.0) {
        return Err(Error::InvalidPacket(format!("mean wavenumber k0 = {k0} must be positive")));
    }
    check_negative_momenta(state)?;
    let w = quad.powers(1.0);
    let density = t_values
        .par_iter()
        .map(|&t| quad.amplitude(&w, t).norm_sqr() / k0)
        .collect();
    Ok(ideal(
        DistributionKind::ZenoIdeal,
        t_values,
        density,
        format!("k amplitude / k0, k0 = {k0:.17e}, {} momentum nodes", quad.k.len()),
    ))
}

/// [`zeno_ideal_distribution`] rescaled to unit integral over `t_values`.
pub fn zeno_ideal_renormalized(state: &FreeState, t_values: &[f64]) -> Result<TimeDistribution> {
    zeno_ideal_distribution(state, t_values)?.renormalize()
}

/// Detection record as a density: `removed[i] / (delta_t * total removed)`
/// on the bin ending at `t_bins[i]`.
pub fn normalize_record(rec: &DetectionRecord) -> Result<TimeDistribution> {
    let total: f64 = rec.removed.iter().sum();
    let fraction = total / rec.initial_norm;
    if !(fraction > 1e-6) {
        return Err(Error::NothingDetected(fraction));
    }
    let dt = rec.schedule.delta_t;
    Ok(TimeDistribution {
        kind: DistributionKind::Operational,
        t_values: rec.t_bins.clone(),
        density: rec.removed.iter().map(|r| r / (dt * total)).collect(),
        detected_fraction: fraction,
        bin_width: Some(dt),
        raw_integral: None,
        renormalized: false,
        metadata: format!("{} model, delta_t = {dt:.17e}", rec.schedule.model),
    })
}

/// First moment divided by the total mass. Binned densities place each bin's
/// mass at its right edge.
pub fn mean_arrival(d: &TimeDistribution) -> f64 {
    match d.bin_width {
        Some(_) => {
            let total: f64 = d.density.iter().sum();
            d.t_values.iter().zip(&d.density).map(|(t, p)| t * p).sum::<f64>() / total
        }
        None => {
            let tp: Vec<f64> = d.t_values.iter().zip(&d.density).map(|(t, p)| t * p).collect();
            trapezoid(&d.t_values, &tp) / trapezoid(&d.t_values, &d.density)
        }
    }
}

/// Standard deviation about [`mean_arrival`].
pub fn arrival_width(d: &TimeDistribution) -> f64 {
    let m = mean_arrival(d);
    let second = match d.bin_width {
        Some(_) => {
            let total: f64 = d.density.iter().sum();
            d.t_values
                .iter()
                .zip(&d.density)
                .map(|(t, p)| (t - m).powi(2) * p)
                .sum::<f64>()
                / total
        }
        None => {
            let y: Vec<f64> = d
                .t_values
                .iter()
                .zip(&d.density)
                .map(|(t, p)| (t - m).powi(2) * p)
                .collect();
            trapezoid(&d.t_values, &y) / trapezoid(&d.t_values, &d.density)
        }
    };
    second.max(0.0).sqrt()
}

/// `int |d1 - d2| dt` with both densities read as piecewise-linear functions
/// of their samples (zero outside their spans), integrated exactly on the
/// merged knot set. Fails if the spans do not overlap.
pub fn l1_distance(d1: &TimeDistribution, d2: &TimeDistribution) -> Result<f64> {
    let span = |d: &TimeDistribution| -> Result<(f64, f64)> {
        match (d.t_values.first(), d.t_values.last()) {
            (Some(&a), Some(&b)) => Ok((a, b)),
            _ => Err(Error::DisjointSupports),
        }
    };
    let (a1, b1) = span(d1)?;
    let (a2, b2) = span(d2)?;
    if a1.max(a2) > b1.min(b2) {
        return Err(Error::DisjointSupports);
    }
    let mut knots: Vec<f64> = d1.t_values.iter().chain(&d2.t_values).copied().collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let diff = |t: f64| d1.value_at(t) - d2.value_at(t);
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        // one-sided limits so that jumps at span ends are not smeared
        let eps = (t1 - t0) * 1e-12;
        let f0 = diff(t0 + eps);
        let f1 = diff(t1 - eps);
        let h = t1 - t0;
        total += if f0 * f1 >= 0.0 {
            0.5 * h * (f0.abs() + f1.abs())
        } else {
            0.5 * h * (f0 * f0 + f1 * f1) / (f0.abs() + f1.abs())
        };
    }
    Ok(total)
}

/// `sum_i |m_i - P_i| + (ideal mass outside the bins)`, where `m_i` is the
/// mass of bin `i` of the binned density `binned` and `P_i` the integral of
/// `reference` over the same bin.
pub fn binned_l1_distance(binned: &TimeDistribution, reference: &TimeDistribution) -> Result<f64> {
    let w = binned.bin_width.ok_or_else(|| {
        Error::InvalidArgument("binned_l1_distance needs a binned first argument".into())
    })?;
    let (Some(&first), Some(&last)) = (binned.t_values.first(), binned.t_values.last()) else {
        return Err(Error::DisjointSupports);
    };
    let (Some(&r0), Some(&r1)) = (reference.t_values.first(), reference.t_values.last()) else {
        return Err(Error::DisjointSupports);
    };
    if (first - w).max(r0) > last.min(r1) {
        return Err(Error::DisjointSupports);
    }
    let mut total = 0.0;
    let mut covered = 0.0;
    for (&t, &rho) in binned.t_values.iter().zip(&binned.density) {
        let p = reference.integrate_between(t - w, t);
        covered += p;
        total += (rho * w - p).abs();
    }
    let outside = reference.integrate_between(r0, r1) - covered;
    Ok(total + outside.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packets::GaussianSpec;

    fn pointwise(t: Vec<f64>, density: Vec<f64>) -> TimeDistribution {
        TimeDistribution {
            kind: DistributionKind::Kijowski,
            t_values: t,
            density,
            detected_fraction: 1.0,
            bin_width: None,
            raw_integral: None,
            renormalized: false,
            metadata: String::new(),
        }
    }

    fn fast_packet() -> FreeState {
        FreeState::single(GaussianSpec::new(-50.0, 0.0, 2.0, 5.0)).unwrap()
    }

    #[test]
    fn quadrature_reproduces_analytic_amplitude() {
        let s = fast_packet();
        let ts = linspace(5.0, 15.0, 11);
        let q = MomentumQuadrature::for_state(&s, &ts);
        let ones = vec![1.0; q.k.len()];
        for &t in &ts {
            let a = q.amplitude(&ones, t);
            let b = s.amplitude(0.0, t);
            assert!((a - b).norm() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn flux_from_quadrature_matches_analytic_slope() {
        let s = fast_packet();
        let ts = linspace(5.0, 15.0, 41);
        let q = MomentumQuadrature::for_state(&s, &ts);
        let ones = vec![1.0; q.k.len()];
        let kw = q.powers(1.0);
        let j = ideal_flux(&s, &ts).unwrap();
        for (i, &t) in ts.iter().enumerate() {
            let psi = q.amplitude(&ones, t);
            let dpsi = Complex64::new(0.0, 1.0) * q.amplitude(&kw, t);
            assert!(((psi.conj() * dpsi).im - j.density[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn flux_negligible_long_before_arrival() {
        let s = fast_packet();
        let j = ideal_flux(&s, &linspace(-20.0, -10.0, 50)).unwrap();
        assert!(j.density.iter().all(|d| d.abs() < 1e-30));
    }

    #[test]
    fn fast_narrow_packet_flux_integral_and_peak() {
        let s = fast_packet();
        let ts = linspace(0.0, 20.0, 4001);
        let j = ideal_flux(&s, &ts).unwrap();
        assert!((j.integral() - 1.0).abs() < 1e-6);
        assert!((j.peak_time() - 10.0).abs() < 0.1);
    }

    #[test]
    fn ideal_distributions_normalized_and_positive() {
        let s = fast_packet();
        let ts = linspace(0.0, 20.0, 4001);
        let k = kijowski_distribution(&s, &ts).unwrap();
        let n = zeno_ideal_distribution(&s, &ts).unwrap();
        assert!(k.min_density() >= 0.0 && n.min_density() >= 0.0);
        assert!((k.integral() - 1.0).abs() < 1e-3);
        // int Pi_N dt = <k>/k0 exactly
        assert!((n.integral() - 1.0).abs() < 1e-8);
        assert_eq!(n.raw_integral, Some(n.integral()));
    }

    #[test]
    fn quadrature_self_convergence() {
        let s = FreeState::new(vec![
            GaussianSpec::new(0.0, 0.0, 1.0, 6.0).with_weight(Complex64::new(0.5f64.sqrt(), 0.0)),
            GaussianSpec::new(0.0, 0.0, 1.0, 3.0).with_weight(Complex64::new(0.5f64.sqrt(), 0.0)),
        ])
        .unwrap();
        let ts = linspace(-4.0, 6.0, 201);
        let q1 = MomentumQuadrature::for_state(&s, &ts);
        let q2 = MomentumQuadrature::with_refinement(&s, &ts, 2);
        let a = kijowski_with(&s, &q1, &ts).unwrap();
        let b = kijowski_with(&s, &q2, &ts).unwrap();
        let d = a
            .density
            .iter()
            .zip(&b.density)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn quasi_monochromatic_limit() {
        // delta_k / k = 0.005
        let s = FreeState::single(GaussianSpec::new(-2000.0, 0.0, 20.0, 5.0)).unwrap();
        let ts = linspace(340.0, 460.0, 2401);
        let j = ideal_flux(&s, &ts).unwrap();
        let k = kijowski_distribution(&s, &ts).unwrap();
        let n = zeno_ideal_distribution(&s, &ts).unwrap();
        assert!(l1_distance(&j, &k).unwrap() < 0.01);
        assert!(l1_distance(&k, &n).unwrap() < 0.01);
        assert!(l1_distance(&j, &n).unwrap() < 0.01);
    }

    #[test]
    fn rejects_negative_momenta() {
        let s = FreeState::single(GaussianSpec::new(-10.0, 0.0, 1.0, 0.5)).unwrap();
        let ts = linspace(0.0, 10.0, 11);
        assert!(matches!(kijowski_distribution(&s, &ts), Err(Error::NegativeMomentum { .. })));
        assert!(matches!(zeno_ideal_distribution(&s, &ts), Err(Error::NegativeMomentum { .. })));
        let back = FreeState::single(GaussianSpec::new(10.0, 0.0, 1.0, -3.0)).unwrap();
        assert!(zeno_ideal_distribution(&back, &ts).is_err());
    }

    #[test]
    fn mean_of_symmetric_and_peaked_densities() {
        let ts = linspace(0.0, 10.0, 1001);
        let tri: Vec<f64> = ts.iter().map(|&t| (1.0 - (t - 5.0).abs() / 2.0).max(0.0)).collect();
        assert!((mean_arrival(&pointwise(ts.clone(), tri)) - 5.0).abs() < 1e-12);
        let spike: Vec<f64> = ts.iter().map(|&t| if (t - 5.0).abs() < 1e-9 { 100.0 } else { 0.0 }).collect();
        assert!((mean_arrival(&pointwise(ts, spike)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn l1_identities() {
        let ts = linspace(0.0, 10.0, 101);
        let a: Vec<f64> = ts.iter().map(|&t| if t < 2.0 { 0.5 } else { 0.0 }).collect();
        let b: Vec<f64> = ts.iter().map(|&t| if t > 8.0 { 0.5 } else { 0.0 }).collect();
        let da = pointwise(ts.clone(), a);
        let db = pointwise(ts.clone(), b);
        assert_eq!(l1_distance(&da, &da).unwrap(), 0.0);
        // each ramp-edged box carries mass 1 +- one half-step triangle
        let d = l1_distance(&da, &db).unwrap();
        assert!((d - (da.integral() + db.integral())).abs() < 1e-12);
        assert!((d - 2.0).abs() < 0.06);
        let far = pointwise(linspace(20.0, 30.0, 11), vec![0.1; 11]);
        assert!(matches!(l1_distance(&da, &far), Err(Error::DisjointSupports)));
    }

    #[test]
    fn l1_handles_sign_changes_exactly() {
        let ts = vec![0.0, 1.0];
        let a = pointwise(ts.clone(), vec![1.0, -1.0]);
        let z = pointwise(ts, vec![0.0, 0.0]);
        assert!((l1_distance(&a, &z).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn binned_l1_against_matching_reference() {
        let ts = linspace(0.0, 10.0, 10001);
        let dens: Vec<f64> = ts.iter().map(|&t| (-(t - 5.0f64).powi(2)).exp() / PI.sqrt()).collect();
        let reference = pointwise(ts, dens);
        let w = 0.5;
        let bins: Vec<f64> = (1..=20).map(|i| i as f64 * w).collect();
        let masses: Vec<f64> = bins.iter().map(|&t| reference.integrate_between(t - w, t) / w).collect();
        let binned = TimeDistribution {
            kind: DistributionKind::Operational,
            t_values: bins,
            density: masses,
            detected_fraction: 1.0,
            bin_width: Some(w),
            raw_integral: None,
            renormalized: false,
            metadata: String::new(),
        };
        assert!(binned_l1_distance(&binned, &reference).unwrap() < 1e-12);
        assert!(binned_l1_distance(&reference, &binned).is_err());
    }

    #[test]
    fn renormalized_variant_integrates_to_one() {
        let s = fast_packet();
        let ts = linspace(6.0, 14.0, 801);
        let r = zeno_ideal_renormalized(&s, &ts).unwrap();
        assert!(r.renormalized);
        assert!((r.integral() - 1.0).abs() < 1e-12);
        assert!(r.raw_integral.unwrap() < 1.0);
    }
}

//! Minimum-uncertainty Gaussian packets with closed-form free evolution.
//!
//! A packet is specified by its focus, the place and time where it is
//! minimal: at `t = t_focus` it is a real Gaussian of spread `delta_x`
//! centred on `x_focus`, times `exp(i v (x - x_focus))`. In momentum space
//!
//! ```text
//! psi~(k, t) = (2 pi s_k^2)^(-1/4) exp(-(k - v)^2 / (4 s_k^2))
//!              exp(-i k x_focus) exp(-i k^2 (t - t_focus) / 2),   s_k = 1 / (2 delta_x)
//! ```
//!
//! A [`FreeState`] is a normalized weighted sum of such packets. It serves as
//! both the initial condition of a run and the free reference state the
//! ideal distributions are built from.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{FreePropagator, SpatialGrid, WaveFunction};

/// Boundary density allowed when a packet is laid onto a grid.
pub const CONSTRUCTION_LEAK_LIMIT: f64 = 1e-10;

/// Negative-momentum mass above which a state is rejected.
pub const NEG_K_LIMIT: f64 = 1e-6;

/// Right norm allowed at the start of a run on top of twice the
/// negative-momentum mass; the latter sits in `x > 0` at any early enough time
/// and can never be removed by moving the start further back.
pub const START_RIGHT_NORM_LIMIT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub x_focus: f64,
    pub t_focus: f64,
    pub delta_x: f64,
    /// Mean velocity, equal to the mean wavenumber in internal units.
    pub v_mean: f64,
    pub weight: Complex64,
}

impl GaussianSpec {
    pub fn new(x_focus: f64, t_focus: f64, delta_x: f64, v_mean: f64) -> Self {
        Self {
            x_focus,
            t_focus,
            delta_x,
            v_mean,
            weight: Complex64::new(1.0, 0.0),
        }
    }

    pub fn with_weight(mut self, weight: Complex64) -> Self {
        self.weight = weight;
        self
    }

    pub fn sigma_k(&self) -> f64 {
        0.5 / self.delta_x
    }

    /// Position spread at time `t`.
    pub fn spread_at(&self, t: f64) -> f64 {
        let r = (t - self.t_focus) / (2.0 * self.delta_x * self.delta_x);
        self.delta_x * (1.0 + r * r).sqrt()
    }

    pub fn center_at(&self, t: f64) -> f64 {
        self.x_focus + self.v_mean * (t - self.t_focus)
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta_x > 0.0) || !self.delta_x.is_finite() {
            return Err(Error::InvalidPacket(format!(
                "delta_x = {} must be positive",
                self.delta_x
            )));
        }
        if ![self.x_focus, self.t_focus, self.v_mean, self.weight.re, self.weight.im]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidPacket("non-finite packet parameter".into()));
        }
        Ok(())
    }

    /// Unit-norm amplitude and its x-derivative at `(x, t)`.
    fn amplitude_and_slope(&self, x: f64, t: f64) -> (Complex64, Complex64) {
        let s2 = self.delta_x * self.delta_x;
        let tau = t - self.t_focus;
        let a = Complex64::new(1.0, tau / (2.0 * s2));
        let xi = x - self.x_focus;
        let u = xi - self.v_mean * tau;
        let phase = Complex64::new(0.0, self.v_mean * xi - 0.5 * self.v_mean * self.v_mean * tau);
        let expo = -Complex64::new(u * u, 0.0) / (4.0 * s2 * a) + phase;
        let psi = (2.0 * PI * s2).powf(-0.25) / a.sqrt() * expo.exp();
        let slope = psi * (-Complex64::new(u, 0.0) / (2.0 * s2 * a) + Complex64::new(0.0, self.v_mean));
        (psi, slope)
    }

    /// Unit-norm momentum amplitude at `(k, t)`.
    fn momentum_amplitude(&self, k: f64, t: f64) -> Complex64 {
        let sk = self.sigma_k();
        let dk = k - self.v_mean;
        let mag = (2.0 * PI * sk * sk).powf(-0.25) * (-dk * dk / (4.0 * sk * sk)).exp();
        Complex64::from_polar(mag, -k * self.x_focus - 0.5 * k * k * (t - self.t_focus))
    }

    /// Exponent coefficients of `conj(psi~_self) psi~_other` written as
    /// `exp(-A k^2 + B k + C)`.
    fn product_coefficients(&self, other: &Self) -> (Complex64, Complex64, f64) {
        let (si, sj) = (self.sigma_k(), other.sigma_k());
        let a = Complex64::new(
            0.25 / (si * si) + 0.25 / (sj * sj),
            -0.5 * (other.t_focus - self.t_focus),
        );
        let b = Complex64::new(
            0.5 * self.v_mean / (si * si) + 0.5 * other.v_mean / (sj * sj),
            self.x_focus - other.x_focus,
        );
        let c = -0.25 * self.v_mean * self.v_mean / (si * si)
            - 0.25 * other.v_mean * other.v_mean / (sj * sj);
        (a, b, c)
    }

    /// `<psi_self | psi_other>` and `<psi_self | k | psi_other>` for unit
    /// weights.
    fn overlap_moments(&self, other: &Self) -> (Complex64, Complex64) {
        let (si, sj) = (self.sigma_k(), other.sigma_k());
        let pref = (2.0 * PI * si * si).powf(-0.25) * (2.0 * PI * sj * sj).powf(-0.25);
        let (a, b, c) = self.product_coefficients(other);
        let gauss = (Complex64::new(PI, 0.0) / a).sqrt() * (b * b / (4.0 * a) + c).exp() * pref;
        (gauss, gauss * b / (2.0 * a))
    }
}

/// Normalized superposition of Gaussian packets with analytic free evolution.
#[derive(Debug, Clone)]
pub struct FreeState {
    parts: Vec<GaussianSpec>,
    scale: f64,
    mean_k: f64,
}

impl FreeState {
    pub fn new(parts: Vec<GaussianSpec>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidPacket("at least one packet is required".into()));
        }
        for p in &parts {
            p.validate()?;
        }
        if parts.iter().all(|p| p.weight.norm() == 0.0) {
            return Err(Error::InvalidPacket("all packet weights are zero".into()));
        }
        let mut norm = Complex64::new(0.0, 0.0);
        let mut first = Complex64::new(0.0, 0.0);
        for pi in &parts {
            for pj in &parts {
                let (o, m) = pi.overlap_moments(pj);
                let w = pi.weight.conj() * pj.weight;
                norm += w * o;
                first += w * m;
            }
        }
        let norm = norm.re;
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidPacket("superposition has zero norm".into()));
        }
        Ok(Self {
            parts,
            scale: norm.sqrt().recip(),
            mean_k: first.re / norm,
        })
    }

    pub fn single(spec: GaussianSpec) -> Result<Self> {
        Self::new(vec![spec])
    }

    pub fn parts(&self) -> &[GaussianSpec] {
        &self.parts
    }

    /// Exact mean wavenumber `<k>` (conserved by free motion).
    pub fn mean_k(&self) -> f64 {
        self.mean_k
    }

    pub fn amplitude(&self, x: f64, t: f64) -> Complex64 {
        self.amplitude_and_slope(x, t).0
    }

    /// `psi_f(x, t)` and `d psi_f / dx`.
    pub fn amplitude_and_slope(&self, x: f64, t: f64) -> (Complex64, Complex64) {
        let mut psi = Complex64::new(0.0, 0.0);
        let mut slope = Complex64::new(0.0, 0.0);
        for p in &self.parts {
            let (a, s) = p.amplitude_and_slope(x, t);
            psi += p.weight * a;
            slope += p.weight * s;
        }
        (psi * self.scale, slope * self.scale)
    }

    pub fn momentum_amplitude(&self, k: f64, t: f64) -> Complex64 {
        let sum: Complex64 = self
            .parts
            .iter()
            .map(|p| p.weight * p.momentum_amplitude(k, t))
            .sum();
        sum * self.scale
    }

    /// Range of k holding all but a negligible part of the momentum density.
    pub fn momentum_support(&self) -> (f64, f64) {
        let lo = self
            .parts
            .iter()
            .map(|p| p.v_mean - 12.0 * p.sigma_k())
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .parts
            .iter()
            .map(|p| p.v_mean + 12.0 * p.sigma_k())
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Fraction of the momentum density at `k < 0`, by midpoint quadrature.
    pub fn negative_momentum_fraction(&self) -> f64 {
        let (lo, _) = self.momentum_support();
        if lo >= 0.0 {
            return 0.0;
        }
        let m = 8192;
        let h = -lo / m as f64;
        let mass: f64 = (0..m)
            .map(|i| {
                let k = lo + (i as f64 + 0.5) * h;
                self.momentum_amplitude(k, 0.0).norm_sqr()
            })
            .sum();
        (mass * h).clamp(0.0, 1.0)
    }

    /// Largest distance from the origin reached by any part's centre plus
    /// ten spreads, used to size momentum quadratures.
    pub fn spatial_extent(&self, t: f64) -> f64 {
        self.parts
            .iter()
            .map(|p| p.center_at(t).abs() + 10.0 * p.spread_at(t))
            .fold(0.0, f64::max)
    }

    /// Time needed by the slowest part to bring its centre from its position
    /// at `t_start` to the origin (zero for parts already past it).
    pub fn classical_crossing_time(&self, t_start: f64) -> f64 {
        self.parts
            .iter()
            .filter(|p| p.v_mean > 0.0)
            .map(|p| (-p.center_at(t_start)).max(0.0) / p.v_mean)
            .fold(0.0, f64::max)
    }

    /// Samples the analytic state on the grid at time `t`. Fails when the
    /// packet reaches the absorbing strips or the grid edges.
    pub fn wave_function(&self, grid: &Arc<SpatialGrid>, t: f64) -> Result<WaveFunction> {
        let amps: Vec<Complex64> = grid.x_values().iter().map(|&x| self.amplitude(x, t)).collect();
        let mut psi = WaveFunction::new(grid.clone(), amps, t)?;
        let leak = psi.boundary_density();
        if leak > CONSTRUCTION_LEAK_LIMIT {
            return Err(Error::PacketLeak {
                density: leak,
                threshold: CONSTRUCTION_LEAK_LIMIT,
            });
        }
        psi.normalize()?;
        Ok(psi)
    }

    /// Checks that the state at `t_start` is fit to start a run: it has no
    /// relevant negative momenta, and it sits to the left of the origin and
    /// clear of the grid boundary.
    pub fn check_start(&self, grid: &Arc<SpatialGrid>, t_start: f64) -> Result<StartReport> {
        let psi = self.wave_function(grid, t_start)?;
        let neg_k_fraction = self.negative_momentum_fraction();
        if neg_k_fraction >= NEG_K_LIMIT {
            return Err(Error::NegativeMomentum {
                fraction: neg_k_fraction,
                limit: NEG_K_LIMIT,
            });
        }
        let right_norm = psi.right_norm();
        let right_norm_limit = START_RIGHT_NORM_LIMIT + 2.0 * neg_k_fraction;
        if right_norm > right_norm_limit {
            return Err(Error::Validation(format!(
                "initial right norm {right_norm:.3e} exceeds {right_norm_limit:.3e}; start earlier"
            )));
        }
        let (interior_left, _) = grid.interior();
        let left_margin = self
            .parts
            .iter()
            .map(|p| p.center_at(t_start) - 6.0 * p.spread_at(t_start) - interior_left)
            .fold(f64::INFINITY, f64::min);
        let origin_margin = self
            .parts
            .iter()
            .map(|p| -(p.center_at(t_start) + 6.0 * p.spread_at(t_start)))
            .fold(f64::INFINITY, f64::min);
        Ok(StartReport {
            t_start,
            right_norm,
            right_norm_limit,
            boundary_density: psi.boundary_density(),
            neg_k_fraction,
            left_margin,
            origin_margin,
        })
    }

    /// Latest start time, going back from the earliest focus in steps of a
    /// twentieth of the fastest part's focus-to-origin time scale, at which
    /// [`FreeState::check_start`] passes.
    pub fn auto_start_time(&self, grid: &Arc<SpatialGrid>) -> Result<f64> {
        let t_ref = self
            .parts
            .iter()
            .map(|p| p.t_focus)
            .fold(f64::INFINITY, f64::min);
        let step = self
            .parts
            .iter()
            .filter(|p| p.v_mean > 0.0)
            .map(|p| p.spread_at(t_ref).max(p.x_focus.abs()) / p.v_mean)
            .fold(0.0, f64::max)
            / 20.0;
        if !(step > 0.0) {
            return Err(Error::Validation(
                "no part moves towards the origin; cannot choose a start time".into(),
            ));
        }
        let mut last_err = None;
        for j in 0..2000 {
            let t = t_ref - j as f64 * step;
            match self.check_start(grid, t) {
                Ok(_) => return Ok(t),
                Err(e @ Error::PacketLeak { .. }) => return Err(e),
                Err(e @ Error::NegativeMomentum { .. }) => return Err(e),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap_or_else(|| Error::Validation("no valid start time".into())))
    }
}

/// Outcome of [`FreeState::check_start`].
#[derive(Debug, Clone, Copy)]
pub struct StartReport {
    pub t_start: f64,
    pub right_norm: f64,
    pub right_norm_limit: f64,
    pub boundary_density: f64,
    pub neg_k_fraction: f64,
    /// Distance between the leftmost `centre - 6 spread` and the interior edge.
    pub left_margin: f64,
    /// Distance between the rightmost `centre + 6 spread` and the origin;
    /// negative when a tail already overlaps it.
    pub origin_margin: f64,
}

/// Single packet evaluated at `t` on `grid`.
pub fn gaussian_packet(spec: GaussianSpec, grid: &Arc<SpatialGrid>, t: f64) -> Result<WaveFunction> {
    FreeState::single(spec)?.wave_function(grid, t)
}

/// Weighted sum of packets at `t`, renormalized.
pub fn superpose(parts: &[GaussianSpec], grid: &Arc<SpatialGrid>, t: f64) -> Result<WaveFunction> {
    FreeState::new(parts.to_vec())?.wave_function(grid, t)
}

/// Exact free evolution by `dt` (which may be negative).
pub fn free_evolve(psi: &WaveFunction, dt: f64) -> WaveFunction {
    let mut out = psi.clone();
    if dt != 0.0 {
        FreePropagator::new(psi.grid_arc().clone(), dt).apply(&mut out);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketDiagnostics {
    pub k0: f64,
    pub mean_h0: f64,
    pub delta_h0: f64,
    pub neg_k_fraction: f64,
    pub e_max_99: f64,
}

/// Moments of the momentum density `|psi~(k)|^2 dk / N`.
pub fn packet_diagnostics(psi: &WaveFunction) -> Result<PacketDiagnostics> {
    let coeffs = psi.to_momentum();
    let k = psi.grid().k_values();
    let weights: Vec<f64> = coeffs.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let mut k1 = 0.0;
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    let mut neg = 0.0;
    for (&w, &kj) in weights.iter().zip(k) {
        let p = w / total;
        let e = 0.5 * kj * kj;
        k1 += p * kj;
        e1 += p * e;
        e2 += p * e * e;
        if kj < 0.0 {
            neg += p;
        }
    }
    let mut by_energy: Vec<(f64, f64)> = weights
        .iter()
        .zip(k)
        .map(|(&w, &kj)| (0.5 * kj * kj, w / total))
        .collect();
    by_energy.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    let mut e_max_99 = by_energy.last().map(|e| e.0).unwrap_or(0.0);
    for (e, p) in by_energy {
        acc += p;
        if acc >= 0.99 {
            e_max_99 = e;
            break;
        }
    }
    Ok(PacketDiagnostics {
        k0: k1,
        mean_h0: e1,
        delta_h0: (e2 - e1 * e1).max(0.0).sqrt(),
        neg_k_fraction: neg.clamp(0.0, 1.0),
        e_max_99,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(x_min: f64, x_max: f64, n: usize) -> Arc<SpatialGrid> {
        Arc::new(SpatialGrid::new(x_min, x_max, n).unwrap())
    }

    fn position_moments(psi: &WaveFunction) -> (f64, f64) {
        let dx = psi.grid().dx();
        let n = psi.total_norm();
        let (mut m1, mut m2) = (0.0, 0.0);
        for (a, &x) in psi.amplitudes().iter().zip(psi.grid().x_values()) {
            let p = a.norm_sqr() * dx / n;
            m1 += p * x;
            m2 += p * x * x;
        }
        (m1, (m2 - m1 * m1).sqrt())
    }

    #[test]
    fn focus_is_peak_with_nominal_spread() {
        let g = grid(-20.0, 20.0, 1024);
        let spec = GaussianSpec::new(0.0, 0.0, 1.5, 2.0);
        let psi = gaussian_packet(spec, &g, 0.0).unwrap();
        assert!((psi.total_norm() - 1.0).abs() < 1e-12);
        let (mean, spread) = position_moments(&psi);
        assert!(mean.abs() < 1e-10);
        assert!((spread - 1.5).abs() < 1e-10);
        let peak = psi
            .amplitudes()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap()
            .0;
        assert_eq!(g.x_values()[peak], 0.0);
    }

    #[test]
    fn density_is_symmetric_about_focus_time() {
        let g = grid(-40.0, 40.0, 1024);
        let spec = GaussianSpec::new(0.0, 0.0, 1.0, 0.0);
        let a = gaussian_packet(spec, &g, 3.0).unwrap();
        let b = gaussian_packet(spec, &g, -3.0).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x.norm_sqr() - y.norm_sqr()).abs() < 1e-13);
        }
        let (_, s) = position_moments(&a);
        assert!((s - spec.spread_at(3.0)).abs() < 1e-10);
    }

    #[test]
    fn analytic_matches_spectral_evolution() {
        let g = grid(-60.0, 60.0, 2048);
        let spec = GaussianSpec::new(-20.0, 0.0, 1.2, 1.5);
        let t0 = gaussian_packet(spec, &g, 0.0).unwrap();
        for t in [0.5, 4.0, 12.0] {
            let numeric = free_evolve(&t0, t);
            let exact = gaussian_packet(spec, &g, t).unwrap();
            let err = numeric
                .amplitudes()
                .iter()
                .zip(exact.amplitudes())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "t = {t}: {err:e}");
            assert!((numeric.time() - t).abs() < 1e-15);
        }
    }

    #[test]
    fn free_evolve_zero_and_reverse() {
        let g = grid(-30.0, 30.0, 512);
        let psi = gaussian_packet(GaussianSpec::new(-5.0, 1.0, 1.0, 1.0), &g, 0.0).unwrap();
        let same = free_evolve(&psi, 0.0);
        assert_eq!(same.amplitudes(), psi.amplitudes());
        let back = free_evolve(&free_evolve(&psi, 2.5), -2.5);
        for (a, b) in back.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn superpose_single_and_collinear() {
        let g = grid(-30.0, 30.0, 512);
        let spec = GaussianSpec::new(-5.0, 0.0, 1.0, 1.0);
        let one = gaussian_packet(spec, &g, 0.0).unwrap();
        let sup = superpose(&[spec], &g, 0.0).unwrap();
        let pair = superpose(&[spec, spec], &g, 0.0).unwrap();
        for ((a, b), c) in one.amplitudes().iter().zip(sup.amplitudes()).zip(pair.amplitudes()) {
            assert!((a - b).norm() < 1e-13);
            assert!((a - c).norm() < 1e-13);
        }
        let zero = spec.with_weight(Complex64::new(0.0, 0.0));
        assert!(superpose(&[zero, zero], &g, 0.0).is_err());
        assert!(superpose(&[], &g, 0.0).is_err());
    }

    #[test]
    fn analytic_norm_and_mean_k_match_grid() {
        let g = grid(-40.0, 40.0, 2048);
        let w = Complex64::new(0.6, 0.2);
        let parts = vec![
            GaussianSpec::new(-8.0, 0.5, 1.0, 2.0),
            GaussianSpec::new(-6.0, -1.0, 0.8, 3.0).with_weight(w),
        ];
        let state = FreeState::new(parts).unwrap();
        let amps: Vec<_> = g.x_values().iter().map(|&x| state.amplitude(x, 0.3)).collect();
        let raw = WaveFunction::new(g.clone(), amps, 0.3).unwrap();
        assert!((raw.total_norm() - 1.0).abs() < 1e-12);
        let d = packet_diagnostics(&raw).unwrap();
        assert!((d.k0 - state.mean_k()).abs() < 1e-10);
    }

    #[test]
    fn slope_matches_finite_difference() {
        let state = FreeState::single(GaussianSpec::new(-3.0, 0.5, 0.7, 2.0)).unwrap();
        let h = 1e-5;
        for x in [-4.0, -3.0, -1.5, 0.0] {
            let (_, s) = state.amplitude_and_slope(x, 1.2);
            let fd = (state.amplitude(x + h, 1.2) - state.amplitude(x - h, 1.2)) / (2.0 * h);
            assert!((s - fd).norm() < 1e-7 * (1.0 + s.norm()));
        }
    }

    #[test]
    fn diagnostics_limits() {
        let g = grid(-400.0, 400.0, 4096);
        // narrow band: delta_x large
        let psi = gaussian_packet(GaussianSpec::new(-100.0, 0.0, 40.0, 1.5), &g, 0.0).unwrap();
        let d = packet_diagnostics(&psi).unwrap();
        assert!((d.k0 - 1.5).abs() < 1e-10);
        assert!(d.delta_h0 < 0.02 * d.mean_h0);
        assert!(d.neg_k_fraction < 1e-12);
        assert!(d.e_max_99 >= d.mean_h0);

        let g = grid(-40.0, 40.0, 1024);
        let psi = gaussian_packet(GaussianSpec::new(0.0, 0.0, 1.0, 0.0), &g, 0.0).unwrap();
        let d = packet_diagnostics(&psi).unwrap();
        assert!(d.k0.abs() < 1e-12);
        // the k = 0 mode counts as non-negative: half of the rest is negative
        let p0 = g.dk() / ((2.0 * std::f64::consts::PI).sqrt() * 0.5);
        assert!((d.neg_k_fraction - 0.5 * (1.0 - p0)).abs() < 1e-9);
        assert!(packet_diagnostics(&WaveFunction::zeros(g, 0.0)).is_err());
    }

    #[test]
    fn leaking_packet_rejected() {
        let g = grid(-10.0, 10.0, 256);
        let err = gaussian_packet(GaussianSpec::new(-9.0, 0.0, 1.0, 1.0), &g, 0.0).unwrap_err();
        assert!(matches!(err, Error::PacketLeak { .. }));
        assert!(gaussian_packet(GaussianSpec::new(0.0, 0.0, -1.0, 1.0), &g, 0.0).is_err());
    }
}

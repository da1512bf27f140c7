//! Uniform position grid, its conjugate momentum grid, and the complex wave
//! functions that live on it.
//!
//! The discrete transform is normalized so that
//!
//! ```text
//! psi~(k_j) = dx / sqrt(2 pi) * sum_n psi(x_n) exp(-i k_j x_n)
//! ```
//!
//! which makes `sum |psi|^2 dx == sum |psi~|^2 dk` hold exactly (up to
//! rounding). Momentum arrays are kept in FFT order, matching
//! [`SpatialGrid::k_values`].
//!
//! Internal units are hbar = m = 1 throughout.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Per-substep damping exponent at the outer edge of an absorbing layer.
const LAYER_STRENGTH: f64 = 6.0;

/// Smallest grid accepted.
pub const MIN_POINTS: usize = 16;

/// Absorbing strips at both grid edges.
///
/// The strips sit outside the physical region: the left strip lies inside
/// `x < 0`, the right strip inside `x >= 0`. They exist only to keep
/// fast components from wrapping around the periodic spectral grid.
#[derive(Debug, Clone)]
pub struct AbsorbingLayer {
    width: f64,
    left_end: usize,
    right_start: usize,
    mask: Vec<f64>,
}

impl AbsorbingLayer {
    pub fn width(&self) -> f64 {
        self.width
    }

    /// Multiplicative factor applied to the amplitude at each node, once per
    /// free-evolution substep.
    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    /// Nodes `0..left_end` form the left strip.
    pub fn left_end(&self) -> usize {
        self.left_end
    }

    /// Nodes `right_start..n` form the right strip.
    pub fn right_start(&self) -> usize {
        self.right_start
    }
}

#[derive(Clone)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
    dx: f64,
    dk: f64,
    x: Vec<f64>,
    k: Vec<f64>,
    split: usize,
    /// exp(-i k_j x_min), the offset phase of the transform.
    shift: Vec<Complex64>,
    layer: Option<AbsorbingLayer>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpatialGrid")
            .field("x_min", &self.x_min)
            .field("x_max", &self.x_max)
            .field("n_points", &self.n_points)
            .field("dx", &self.dx)
            .field("split", &self.split)
            .field("layer_width", &self.layer.as_ref().map(|l| l.width))
            .finish()
    }
}

/// Builds a grid on `[x_min, x_max)` with `n_points` nodes.
pub fn make_grid(x_min: f64, x_max: f64, n_points: usize) -> Result<SpatialGrid> {
    SpatialGrid::new(x_min, x_max, n_points)
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidGrid("grid bounds must be finite".into()));
        }
        if x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "x_max ({x_max}) must exceed x_min ({x_min})"
            )));
        }
        if !(x_min < 0.0 && 0.0 < x_max) {
            return Err(Error::InvalidGrid(format!(
                "origin must lie strictly inside ({x_min}, {x_max})"
            )));
        }
        if n_points < MIN_POINTS || !n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_points = {n_points} must be a power of two >= {MIN_POINTS}"
            )));
        }

        let dx = (x_max - x_min) / n_points as f64;
        let dk = 2.0 * PI / (n_points as f64 * dx);
        let x: Vec<f64> = (0..n_points).map(|i| x_min + i as f64 * dx).collect();
        let half = n_points / 2;
        let k: Vec<f64> = (0..n_points)
            .map(|j| {
                if j < half {
                    j as f64 * dk
                } else {
                    (j as f64 - n_points as f64) * dk
                }
            })
            .collect();
        // first node with x >= 0; nodes within rounding of the origin count as x = 0
        let split = x
            .iter()
            .position(|&xi| xi >= -1e-12 * dx)
            .expect("origin lies inside the grid");
        let shift = k
            .iter()
            .map(|&kj| Complex64::from_polar(1.0, -kj * x_min))
            .collect();

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n_points);
        let inverse = planner.plan_fft_inverse(n_points);

        Ok(Self {
            x_min,
            x_max,
            n_points,
            dx,
            dk,
            x,
            k,
            split,
            shift,
            layer: None,
            forward,
            inverse,
        })
    }

    /// Adds absorbing strips of the given width at both edges. Each strip must
    /// stay on its own side of the origin.
    pub fn with_absorbing_layer(mut self, width: f64) -> Result<Self> {
        if width <= 0.0 {
            self.layer = None;
            return Ok(self);
        }
        if self.x_min + width >= 0.0 || self.x_max - width <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "absorbing layer of width {width} reaches the origin"
            )));
        }
        if width < 4.0 * self.dx {
            return Err(Error::InvalidGrid(format!(
                "absorbing layer of width {width} spans fewer than four nodes"
            )));
        }
        let left_edge = self.x_min + width;
        let right_edge = self.x_max - width;
        let mask: Vec<f64> = self
            .x
            .iter()
            .map(|&xi| {
                let depth = if xi < left_edge {
                    (left_edge - xi) / width
                } else if xi > right_edge {
                    (xi - right_edge) / width
                } else {
                    0.0
                };
                (-LAYER_STRENGTH * depth * depth).exp()
            })
            .collect();
        let left_end = self.x.iter().position(|&xi| xi >= left_edge).unwrap_or(0);
        let right_start = self
            .x
            .iter()
            .position(|&xi| xi > right_edge)
            .unwrap_or(self.n_points);
        self.layer = Some(AbsorbingLayer {
            width,
            left_end,
            right_start,
            mask,
        });
        Ok(self)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dk(&self) -> f64 {
        self.dk
    }

    pub fn x_values(&self) -> &[f64] {
        &self.x
    }

    /// Momentum grid in FFT order: `0, dk, ..., (n/2-1) dk, -n/2 dk, ..., -dk`.
    pub fn k_values(&self) -> &[f64] {
        &self.k
    }

    /// Largest representable |k|.
    pub fn k_max(&self) -> f64 {
        PI / self.dx
    }

    /// Index of the first node with x >= 0. Nodes at or beyond it form the
    /// detection region, so the node at x = 0 counts as "right".
    pub fn split_index(&self) -> usize {
        self.split
    }

    pub fn layer(&self) -> Option<&AbsorbingLayer> {
        self.layer.as_ref()
    }

    /// Largest free-evolution substep for which the fastest grid mode crosses
    /// at most a quarter of an absorbing strip.
    pub fn max_layer_substep(&self) -> Option<f64> {
        self.layer
            .as_ref()
            .map(|l| l.width / (4.0 * self.k_max()))
    }

    /// Physical region, i.e. the grid minus the absorbing strips.
    pub fn interior(&self) -> (f64, f64) {
        match &self.layer {
            Some(l) => (self.x_min + l.width, self.x_max - l.width),
            None => (self.x_min, self.x_max),
        }
    }

    pub(crate) fn fft_forward(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, scratch);
    }

    pub(crate) fn fft_inverse(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(buf, scratch);
    }

    pub(crate) fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    pub(crate) fn new_scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.scratch_len()]
    }
}

#[derive(Debug, Clone)]
pub struct WaveFunction {
    grid: Arc<SpatialGrid>,
    amplitudes: Vec<Complex64>,
    time: f64,
}

impl WaveFunction {
    pub fn new(grid: Arc<SpatialGrid>, amplitudes: Vec<Complex64>, time: f64) -> Result<Self> {
        if amplitudes.len() != grid.n_points() {
            return Err(Error::InvalidGrid(format!(
                "{} amplitudes for a grid of {} nodes",
                amplitudes.len(),
                grid.n_points()
            )));
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidGrid("non-finite amplitude".into()));
        }
        Ok(Self {
            grid,
            amplitudes,
            time,
        })
    }

    pub fn zeros(grid: Arc<SpatialGrid>, time: f64) -> Self {
        let n = grid.n_points();
        Self {
            grid,
            amplitudes: vec![Complex64::new(0.0, 0.0); n],
            time,
        }
    }

    /// Builds a state from momentum amplitudes laid out like
    /// [`SpatialGrid::k_values`].
    pub fn from_momentum(grid: Arc<SpatialGrid>, coeffs: &[Complex64], time: f64) -> Result<Self> {
        if coeffs.len() != grid.n_points() {
            return Err(Error::InvalidGrid(format!(
                "{} momentum coefficients for a grid of {} nodes",
                coeffs.len(),
                grid.n_points()
            )));
        }
        let scale = grid.dk() / (2.0 * PI).sqrt();
        let mut buf: Vec<Complex64> = coeffs
            .iter()
            .zip(&grid.shift)
            .map(|(c, s)| c * s.conj())
            .collect();
        let mut scratch = grid.new_scratch();
        grid.fft_inverse(&mut buf, &mut scratch);
        buf.iter_mut().for_each(|a| *a *= scale);
        Self::new(grid, buf, time)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    /// Momentum amplitudes psi~(k) in FFT order.
    pub fn to_momentum(&self) -> Vec<Complex64> {
        let g = &*self.grid;
        let scale = g.dx() / (2.0 * PI).sqrt();
        let mut buf = self.amplitudes.clone();
        let mut scratch = g.new_scratch();
        g.fft_forward(&mut buf, &mut scratch);
        buf.iter_mut()
            .zip(&g.shift)
            .for_each(|(a, s)| *a *= s * scale);
        buf
    }

    /// Norm on `x >= 0`.
    pub fn right_norm(&self) -> f64 {
        sum_sq(&self.amplitudes[self.grid.split..]) * self.grid.dx
    }

    /// Norm on `x < 0`.
    pub fn left_norm(&self) -> f64 {
        sum_sq(&self.amplitudes[..self.grid.split]) * self.grid.dx
    }

    pub fn total_norm(&self) -> f64 {
        self.left_norm() + self.right_norm()
    }

    /// Rescales to unit norm and returns the previous norm.
    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.total_norm();
        if n <= 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let s = n.sqrt().recip();
        self.amplitudes.iter_mut().for_each(|a| *a *= s);
        Ok(n)
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.amplitudes.iter_mut().for_each(|a| *a *= factor);
    }

    /// Position density |psi|^2 at the two outermost nodes.
    pub fn edge_density(&self) -> f64 {
        let a = &self.amplitudes;
        a[0].norm_sqr().max(a[a.len() - 1].norm_sqr())
    }

    /// Largest position density inside the absorbing strips, or at the edge
    /// nodes when the grid has none.
    pub fn boundary_density(&self) -> f64 {
        match self.grid.layer() {
            Some(l) => self.amplitudes[..l.left_end()]
                .iter()
                .chain(&self.amplitudes[l.right_start()..])
                .map(|a| a.norm_sqr())
                .fold(self.edge_density(), f64::max),
            None => self.edge_density(),
        }
    }
}

pub(crate) fn sum_sq(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Momentum-space norm `sum |psi~|^2 dk`.
pub fn momentum_norm(coeffs: &[Complex64], dk: f64) -> f64 {
    sum_sq(coeffs) * dk
}

/// Exact free evolution `exp(-i k^2 dt / 2)` for a fixed step, with cached
/// phases and FFT scratch space.
pub struct FreePropagator {
    grid: Arc<SpatialGrid>,
    dt: f64,
    phases: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl FreePropagator {
    pub fn new(grid: Arc<SpatialGrid>, dt: f64) -> Self {
        let inv_n = 1.0 / grid.n_points() as f64;
        let phases = grid
            .k_values()
            .iter()
            .map(|&k| Complex64::from_polar(inv_n, -0.5 * k * k * dt))
            .collect();
        let scratch = grid.new_scratch();
        Self {
            grid,
            dt,
            phases,
            scratch,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn apply(&mut self, psi: &mut WaveFunction) {
        debug_assert!(Arc::ptr_eq(&self.grid, &psi.grid) || psi.grid.n_points() == self.grid.n_points());
        self.apply_slice(&mut psi.amplitudes);
        psi.time += self.dt;
    }

    pub(crate) fn apply_slice(&mut self, buf: &mut [Complex64]) {
        self.grid.fft_forward(buf, &mut self.scratch);
        buf.iter_mut()
            .zip(&self.phases)
            .for_each(|(a, p)| *a *= p);
        self.grid.fft_inverse(buf, &mut self.scratch);
    }
}

/// Applies the kinetic operator `H0 = k^2 / 2` to position amplitudes.
pub fn apply_kinetic(grid: &SpatialGrid, amplitudes: &[Complex64]) -> Vec<Complex64> {
    let mut buf = amplitudes.to_vec();
    let mut scratch = grid.new_scratch();
    grid.fft_forward(&mut buf, &mut scratch);
    let inv_n = 1.0 / grid.n_points() as f64;
    buf.iter_mut()
        .zip(grid.k_values())
        .for_each(|(a, &k)| *a *= 0.5 * k * k * inv_n);
    grid.fft_inverse(&mut buf, &mut scratch);
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn grid_arithmetic() {
        let g = make_grid(-10.0, 10.0, 16).unwrap();
        assert!((g.dx() - 1.25).abs() < 1e-15);
        assert!((g.dk() - 2.0 * PI / 20.0).abs() < 1e-15);
        assert_eq!(g.split_index(), 8);
        assert_eq!(g.x_values()[8], 0.0);

        let g = make_grid(-1000.0, 200.0, 4096).unwrap();
        assert!((g.dx() - 0.29296875).abs() < 1e-12);
        assert!(g.x_values()[g.split_index()] >= 0.0);
        assert!(g.x_values()[g.split_index() - 1] < 0.0);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(make_grid(-10.0, 10.0, 17).is_err());
        assert!(make_grid(-10.0, 10.0, 8).is_err());
        assert!(make_grid(10.0, -10.0, 16).is_err());
        assert!(make_grid(1.0, 10.0, 16).is_err());
        assert!(make_grid(-10.0, -1.0, 16).is_err());
    }

    #[test]
    fn k_grid_in_fft_order() {
        let g = make_grid(-10.0, 10.0, 16).unwrap();
        let k = g.k_values();
        assert_eq!(k[0], 0.0);
        assert!((k[7] - 7.0 * g.dk()).abs() < 1e-14);
        assert!((k[8] + 8.0 * g.dk()).abs() < 1e-14);
        assert!((k[15] + g.dk()).abs() < 1e-14);
    }

    #[test]
    fn constant_maps_to_zero_momentum() {
        let g = Arc::new(make_grid(-10.0, 10.0, 64).unwrap());
        let psi = WaveFunction::new(g, vec![c(1.0, 0.0); 64], 0.0).unwrap();
        let m = psi.to_momentum();
        assert!(m[0].norm() > 1.0);
        assert!(m[1..].iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn plane_wave_maps_to_single_mode() {
        let g = Arc::new(make_grid(-10.0, 10.0, 64).unwrap());
        let k0 = 5.0 * g.dk();
        let amps = g.x_values().iter().map(|&x| Complex64::from_polar(1.0, k0 * x)).collect();
        let psi = WaveFunction::new(g, amps, 0.0).unwrap();
        let m = psi.to_momentum();
        for (j, z) in m.iter().enumerate() {
            if j == 5 {
                assert!(z.norm() > 1.0);
            } else {
                assert!(z.norm() < 1e-12, "mode {j}: {z}");
            }
        }
    }

    #[test]
    fn norms_scale_quadratically() {
        let g = Arc::new(make_grid(-8.0, 8.0, 32).unwrap());
        let amps: Vec<_> = (0..32).map(|i| c(i as f64 * 0.1, -0.05 * i as f64)).collect();
        let mut psi = WaveFunction::new(g.clone(), amps, 0.0).unwrap();
        let n1 = psi.total_norm();
        psi.scale(c(2.0, 0.0));
        assert!((psi.total_norm() - 4.0 * n1).abs() < 1e-12 * n1);
        assert_eq!(WaveFunction::zeros(g, 0.0).total_norm(), 0.0);
    }

    #[test]
    fn right_and_left_partition_total() {
        let g = Arc::new(make_grid(-8.0, 8.0, 32).unwrap());
        let amps: Vec<_> = (0..32).map(|i| c((i as f64).sin(), (i as f64).cos())).collect();
        let psi = WaveFunction::new(g, amps, 0.0).unwrap();
        assert_eq!(psi.right_norm() + psi.left_norm(), psi.total_norm());
    }

    #[test]
    fn origin_node_counts_as_right() {
        let g = Arc::new(make_grid(-8.0, 8.0, 32).unwrap());
        let mut amps = vec![c(0.0, 0.0); 32];
        amps[g.split_index()] = c(1.0, 0.0);
        let psi = WaveFunction::new(g.clone(), amps, 0.0).unwrap();
        assert_eq!(g.x_values()[g.split_index()], 0.0);
        assert_eq!(psi.right_norm(), psi.total_norm());
    }

    #[test]
    fn layer_stays_off_origin() {
        let g = make_grid(-10.0, 10.0, 256).unwrap();
        assert!(g.clone().with_absorbing_layer(10.0).is_err());
        let g = g.with_absorbing_layer(2.0).unwrap();
        let l = g.layer().unwrap();
        assert!(g.x_values()[l.left_end() - 1] < -8.0);
        assert!(g.x_values()[l.right_start()] > 8.0);
        assert_eq!(l.mask()[128], 1.0);
        assert!(l.mask()[0] < 1e-2);
        assert_eq!(g.interior(), (-8.0, 8.0));
    }

    #[test]
    fn kinetic_operator_on_plane_wave() {
        let g = make_grid(-10.0, 10.0, 64).unwrap();
        let k0 = 3.0 * g.dk();
        let amps: Vec<_> = g.x_values().iter().map(|&x| Complex64::from_polar(1.0, k0 * x)).collect();
        let h = apply_kinetic(&g, &amps);
        for (a, b) in h.iter().zip(&amps) {
            assert!((a - b * (0.5 * k0 * k0)).norm() < 1e-12);
        }
    }
}

//! Frequency grids for sweeps.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_FMIN_HZ: f64 = 0.01;
pub const DEFAULT_FMAX_HZ: f64 = 1000.0;
pub const DEFAULT_POINTS: usize = 400;

/// Strictly increasing list of positive frequencies in Hz. Point `f`
/// maps to the Laplace variable `s = j 2 pi f` (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points_hz: Vec<f64>,
}

impl FrequencyGrid {
    pub fn from_points(points_hz: Vec<f64>) -> Result<Self> {
        if points_hz.len() < 2 {
            return Err(Error::config("grid: needs at least 2 points"));
        }
        for w in points_hz.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::config("grid: points must be strictly increasing"));
            }
        }
        if !(points_hz[0] > 0.0) || !points_hz.iter().all(|f| f.is_finite()) {
            return Err(Error::config("grid: points must be finite and > 0"));
        }
        Ok(FrequencyGrid { points_hz })
    }

    pub fn points_hz(&self) -> &[f64] {
        &self.points_hz
    }

    pub fn len(&self) -> usize {
        self.points_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points_hz.is_empty()
    }

    /// `s = j 2 pi f` for every grid point.
    pub fn laplace_points(&self) -> Vec<Complex64> {
        self.points_hz
            .iter()
            .map(|f| Complex64::new(0.0, 2.0 * std::f64::consts::PI * f))
            .collect()
    }
}

impl Default for FrequencyGrid {
    /// 400 log-spaced points over 0.01 Hz - 1 kHz, spanning the
    /// synchronization and (sub)transient ranges.
    fn default() -> Self {
        make_freq_grid(DEFAULT_FMIN_HZ, DEFAULT_FMAX_HZ, DEFAULT_POINTS).expect("default grid")
    }
}

/// Logarithmically spaced grid with both endpoints included exactly.
pub fn make_freq_grid(fmin_hz: f64, fmax_hz: f64, n_points: usize) -> Result<FrequencyGrid> {
    if !(fmin_hz > 0.0) || !(fmin_hz < fmax_hz) {
        return Err(Error::config(format!(
            "grid: need 0 < fmin < fmax, got fmin={fmin_hz}, fmax={fmax_hz}"
        )));
    }
    if n_points < 2 {
        return Err(Error::config("grid: n_points must be >= 2"));
    }
    let (lmin, lmax) = (fmin_hz.ln(), fmax_hz.ln());
    let mut pts = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let t = k as f64 / (n_points - 1) as f64;
        pts.push((lmin + t * (lmax - lmin)).exp());
    }
    pts[0] = fmin_hz;
    pts[n_points - 1] = fmax_hz;
    FrequencyGrid::from_points(pts)
}

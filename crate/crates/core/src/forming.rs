//! Voltage sensitivity and the Forming Index.
//!
//! `S_v(s) = [I + L_g Z(s) Y(s)]^-1` maps grid-voltage perturbations to
//! converter terminal-voltage perturbations across a line. Its maximum
//! singular value per frequency is the Forming Index; `FI <= 1` labels
//! grid-forming (GFM) behavior, `FI > 1` grid-following (GFL).

use num_complex::Complex64;
use rayon::prelude::*;

use crate::converter::AdmittanceModel;
use crate::error::{Error, Result};
use crate::freq::FrequencyGrid;
use crate::line::{eval_z, LineParams};
use crate::linalg::{ident2, invert2, sv2_extremes, CMat2};

/// `S_v(s) = [I + l_g Z(s) Y(s)]^-1`.
pub fn sensitivity(y: &AdmittanceModel, line: &LineParams, s: Complex64) -> Result<CMat2> {
    let ym = y.eval(s)?;
    let bracket = ident2() + eval_z(s, line.tau, line.omega0) * ym * Complex64::new(line.l_g, 0.0);
    invert2(&bracket, "sensitivity bracket", s)
}

/// Forming Index at a single frequency: max singular value of `S_v(j 2 pi f)`.
pub fn forming_index_at(y: &AdmittanceModel, line: &LineParams, f_hz: f64) -> Result<f64> {
    let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f_hz);
    let sv = sensitivity(y, line, s)?;
    Ok(sv2_extremes(&sv).0)
}

/// Forming-index sweep result over a frequency grid.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub grid: FrequencyGrid,
    /// `FI(f)` per grid point, finite and >= 0.
    pub values: Vec<f64>,
    /// Strategy tag of the swept model.
    pub strategy: String,
    pub line: LineParams,
}

/// Sweep `FI` over the grid. Points evaluate independently; result order
/// follows the grid regardless of scheduling.
pub fn forming_index_sweep(
    model: &AdmittanceModel,
    line: &LineParams,
    grid: &FrequencyGrid,
) -> Result<SweepResult> {
    let values: Result<Vec<f64>> = grid
        .points_hz()
        .par_iter()
        .map(|f| {
            forming_index_at(model, line, *f)
                .map_err(|e| Error::numerical(format!("{e} (f = {f} Hz)")))
        })
        .collect();
    Ok(SweepResult {
        grid: grid.clone(),
        values: values?,
        strategy: model.spec().strategy.name().to_string(),
        line: *line,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfmLabel {
    Gfm,
    Gfl,
}

impl GfmLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            GfmLabel::Gfm => "GFM",
            GfmLabel::Gfl => "GFL",
        }
    }
}

/// A maximal frequency band with a constant GFM/GFL label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub f_low: f64,
    pub f_high: f64,
    pub label: GfmLabel,
}

/// GFM/GFL classification of a sweep: bands partition the grid range;
/// crossovers are the interpolated frequencies where `FI` crosses 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub bands: Vec<Band>,
    pub crossovers: Vec<f64>,
}

fn label_of(fi: f64) -> GfmLabel {
    // FI = 1 exactly counts as forming
    if fi <= 1.0 {
        GfmLabel::Gfm
    } else {
        GfmLabel::Gfl
    }
}

/// Label the sweep per the `FI <= 1` rule. Crossovers are located by linear
/// interpolation in (log f, FI) between adjacent points straddling 1.
pub fn classify(sweep: &SweepResult) -> Classification {
    let f = sweep.grid.points_hz();
    let v = &sweep.values;
    let mut bands = Vec::new();
    let mut crossovers = Vec::new();
    let mut band_start = f[0];
    let mut band_label = label_of(v[0]);
    for k in 1..v.len() {
        let label = label_of(v[k]);
        if label != band_label {
            let t = (1.0 - v[k - 1]) / (v[k] - v[k - 1]);
            let fx = (f[k - 1].ln() + t * (f[k].ln() - f[k - 1].ln())).exp();
            crossovers.push(fx);
            bands.push(Band { f_low: band_start, f_high: fx, label: band_label });
            band_start = fx;
            band_label = label;
        }
    }
    bands.push(Band {
        f_low: band_start,
        f_high: f[f.len() - 1],
        label: band_label,
    });
    Classification { bands, crossovers }
}

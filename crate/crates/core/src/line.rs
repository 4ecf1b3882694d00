//! dq-frame line impedance in its canonical normalized form.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{invert2, CMat2};

/// Interconnection line parameters in per-unit, plus the base frequency.
///
/// `tau` is the resistance-to-inductance ratio of the line; the same ratio
/// convention is reused for converter output filters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineParams {
    /// Per-unit line inductance, > 0.
    pub l_g: f64,
    /// R/L ratio, >= 0.
    pub tau: f64,
    /// Base angular frequency in rad/s, > 0.
    pub omega0: f64,
}

impl LineParams {
    pub fn new(l_g: f64, tau: f64, omega0: f64) -> Result<Self> {
        if !(l_g > 0.0) {
            return Err(Error::config(format!("line.l_g: must be > 0, got {l_g}")));
        }
        if !(tau >= 0.0) {
            return Err(Error::config(format!("line.tau: must be >= 0, got {tau}")));
        }
        if !(omega0 > 0.0) {
            return Err(Error::config(format!("line.omega0: must be > 0, got {omega0}")));
        }
        Ok(LineParams { l_g, tau, omega0 })
    }
}

/// Normalized dq line impedance
/// `Z(s) = [[s/w0 + tau, -1], [1, s/w0 + tau]]`.
///
/// The physical line relation is `dI = Z(s)^-1 (dU_send - dU_recv) / L_g`;
/// the `1/L_g` factor is applied by callers. `Z` is a normal matrix, so both
/// its singular values equal `|s/w0 + tau ± j|`.
pub fn eval_z(s: Complex64, tau: f64, omega0: f64) -> CMat2 {
    let z = s / omega0 + tau;
    CMat2::new(
        z,
        Complex64::new(-1.0, 0.0),
        Complex64::new(1.0, 0.0),
        z,
    )
}

/// `Z(s)^-1`, shared by every network-side evaluation.
pub fn eval_z_inv(s: Complex64, tau: f64, omega0: f64) -> Result<CMat2> {
    invert2(&eval_z(s, tau, omega0), "line impedance", s)
}

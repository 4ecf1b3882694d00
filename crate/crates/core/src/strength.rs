//! System Strength and Grid Strength sweeps with their singular-value
//! lower bounds.
//!
//! Per frequency:
//!
//! * `kappa(w) = sigma_min[Y~cl(jw)]` — system strength; `1/kappa` is the
//!   worst-case gain from a multi-bus current disturbance to the bus
//!   voltage vector;
//! * `alpha(w) = sigma_min[B~net(jw)]` — grid strength of the network
//!   subsystem with retained-device dynamics ignored;
//! * `bound_alpha = sigma_min(B1) - sigma_max(B2 B3 / B4) * sigma_max(S_v)`;
//! * `bound_kappa = sigma_min(Z^-1) * alpha - sigma_max(Y~de)`, the
//!   factored chain evaluated with the computed `alpha` and written
//!   division-free (identical algebraically, also valid at `alpha = 0`).
//!
//! The bounds hold as theorems; a violation beyond rounding indicates an
//! implementation bug. Negative bound values make the inequality vacuous
//! and are reported as-is with a `vacuous` flag.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::freq::FrequencyGrid;
use crate::linalg::{invert, sv2_extremes, svd_extremes, CMat2};
use crate::network::NetworkModel;

/// Frequency-indexed strength results.
#[derive(Debug, Clone)]
pub struct StrengthSweep {
    pub grid: FrequencyGrid,
    pub kappa: Vec<f64>,
    pub alpha: Vec<f64>,
    pub bound_kappa: Vec<f64>,
    pub bound_alpha: Vec<f64>,
    /// `sigma_max[S_v]` of the extra device at `l_g = 1/B4`; 1 when the
    /// case has no extra device.
    pub sv_max: Vec<f64>,
    /// True where either bound is negative (inequality vacuous).
    pub vacuous: Vec<bool>,
    /// Retained bus ids, for comparison compatibility checks.
    pub retained: Vec<u32>,
}

struct PointStrength {
    kappa: f64,
    alpha: f64,
    bound_kappa: f64,
    bound_alpha: f64,
    sv_max: f64,
}

fn real_svd_extremes(m: &nalgebra::DMatrix<f64>) -> (f64, f64) {
    let svd = m.clone().svd(false, false);
    let mut smax = 0.0f64;
    let mut smin = f64::INFINITY;
    for v in svd.singular_values.iter() {
        smax = smax.max(*v);
        smin = smin.min(*v);
    }
    (smax, smin)
}

fn point_strength(
    model: &NetworkModel,
    smin_b1: f64,
    smax_coupling: f64,
    s: Complex64,
) -> Result<PointStrength> {
    let absorbed = model.absorb_device(s)?;
    let yde = model.device_block(s)?;
    let ycl = &absorbed.y_net + &yde;

    let (_, kappa) = svd_extremes(&ycl)?;
    let (_, alpha) = svd_extremes(&absorbed.b_net)?;
    let sv: CMat2 = model.extra_sensitivity(s)?;
    let sv_max = sv2_extremes(&sv).0;

    let bound_alpha = smin_b1 - smax_coupling * sv_max;

    let (_, smin_zi) = sv2_extremes(&model.z_inv(s)?);
    let mut smax_yde = 0.0f64;
    for m in model.devices() {
        let y = m.eval(s)?;
        smax_yde = smax_yde.max(sv2_extremes(&y).0);
    }
    let bound_kappa = smin_zi * alpha - smax_yde;

    Ok(PointStrength { kappa, alpha, bound_kappa, bound_alpha, sv_max })
}

/// Sweep strength metrics and bounds over the grid.
pub fn strength_sweep(model: &NetworkModel, grid: &FrequencyGrid) -> Result<StrengthSweep> {
    let b1 = model.blocks().b1();
    let (_, smin_b1) = real_svd_extremes(&b1);
    let smax_coupling = match model.blocks().coupling() {
        Some(c) => real_svd_extremes(&c).0,
        None => 0.0,
    };
    let points: Result<Vec<PointStrength>> = grid
        .laplace_points()
        .par_iter()
        .map(|s| {
            point_strength(model, smin_b1, smax_coupling, *s).map_err(|e| {
                Error::numerical(format!("{e} (f = {} Hz)", s.im / (2.0 * std::f64::consts::PI)))
            })
        })
        .collect();
    let points = points?;
    Ok(StrengthSweep {
        grid: grid.clone(),
        kappa: points.iter().map(|p| p.kappa).collect(),
        alpha: points.iter().map(|p| p.alpha).collect(),
        bound_kappa: points.iter().map(|p| p.bound_kappa).collect(),
        bound_alpha: points.iter().map(|p| p.bound_alpha).collect(),
        sv_max: points.iter().map(|p| p.sv_max).collect(),
        vacuous: points
            .iter()
            .map(|p| p.bound_kappa < 0.0 || p.bound_alpha < 0.0)
            .collect(),
        retained: model.retained().to_vec(),
    })
}

/// Per-frequency bound verification entry.
#[derive(Debug, Clone, Copy)]
pub struct Prop1Point {
    pub f_hz: f64,
    pub sv_max: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub bound_kappa: f64,
    pub bound_alpha: f64,
    pub kappa_ok: bool,
    pub alpha_ok: bool,
    pub vacuous: bool,
}

/// Bound-verification report plus the frequency bands where the extra
/// device behaves as grid-forming through its network coupling.
#[derive(Debug, Clone)]
pub struct Prop1Report {
    pub points: Vec<Prop1Point>,
    pub all_satisfied: bool,
    /// Contiguous grid bands with `sigma_max(S_v) <= 1`.
    pub gfm_bands: Vec<(f64, f64)>,
}

/// Check the strength bounds at every grid point. Requires an extra device.
///
/// Satisfaction allows a relative rounding slack of 1e-9; the inequalities
/// themselves are exact.
pub fn prop1_check(model: &NetworkModel, grid: &FrequencyGrid) -> Result<Prop1Report> {
    if model.extra().is_none() {
        return Err(Error::config("bound check: case has no extra device"));
    }
    let sweep = strength_sweep(model, grid)?;
    let slack = |b: f64| 1e-9 * b.abs().max(1.0);
    let mut points = Vec::with_capacity(grid.len());
    for (k, f) in grid.points_hz().iter().enumerate() {
        points.push(Prop1Point {
            f_hz: *f,
            sv_max: sweep.sv_max[k],
            kappa: sweep.kappa[k],
            alpha: sweep.alpha[k],
            bound_kappa: sweep.bound_kappa[k],
            bound_alpha: sweep.bound_alpha[k],
            kappa_ok: sweep.kappa[k] >= sweep.bound_kappa[k] - slack(sweep.bound_kappa[k]),
            alpha_ok: sweep.alpha[k] >= sweep.bound_alpha[k] - slack(sweep.bound_alpha[k]),
            vacuous: sweep.vacuous[k],
        });
    }
    let all_satisfied = points.iter().all(|p| p.kappa_ok && p.alpha_ok);
    let mut gfm_bands = Vec::new();
    let mut start: Option<f64> = None;
    for p in &points {
        if p.sv_max <= 1.0 {
            start.get_or_insert(p.f_hz);
        } else if let Some(s0) = start.take() {
            gfm_bands.push((s0, p.f_hz));
        }
    }
    if let Some(s0) = start {
        gfm_bands.push((s0, *grid.points_hz().last().expect("non-empty grid")));
    }
    Ok(Prop1Report { points, all_satisfied, gfm_bands })
}

/// Per-frequency strength deltas between two scenarios (A minus B).
#[derive(Debug, Clone)]
pub struct StrengthComparison {
    pub a: StrengthSweep,
    pub b: StrengthSweep,
    pub d_kappa: Vec<f64>,
    pub d_alpha: Vec<f64>,
    pub min_kappa_a: f64,
    pub min_kappa_b: f64,
    pub min_alpha_a: f64,
    pub min_alpha_b: f64,
}

/// Compare two cases over the same grid. The cases must share the retained
/// bus ordering.
pub fn compare_scenarios(
    model_a: &NetworkModel,
    model_b: &NetworkModel,
    grid: &FrequencyGrid,
) -> Result<StrengthComparison> {
    if model_a.retained() != model_b.retained() {
        return Err(Error::config(format!(
            "compare: retained bus sets differ ({:?} vs {:?})",
            model_a.retained(),
            model_b.retained()
        )));
    }
    let a = strength_sweep(model_a, grid)?;
    let b = strength_sweep(model_b, grid)?;
    let d_kappa: Vec<f64> = a.kappa.iter().zip(&b.kappa).map(|(x, y)| x - y).collect();
    let d_alpha: Vec<f64> = a.alpha.iter().zip(&b.alpha).map(|(x, y)| x - y).collect();
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(StrengthComparison {
        min_kappa_a: min(&a.kappa),
        min_kappa_b: min(&b.kappa),
        min_alpha_a: min(&a.alpha),
        min_alpha_b: min(&b.alpha),
        a,
        b,
        d_kappa,
        d_alpha,
    })
}

/// Worst-case disturbance gain consistency: `sigma_max(Y~cl^-1) * sigma_min(Y~cl) = 1`
/// wherever the closed loop is invertible.
pub fn inverse_gain_product(model: &NetworkModel, s: Complex64) -> Result<f64> {
    let ycl = model.closed_loop(s)?;
    let (_, kappa) = svd_extremes(&ycl)?;
    let inv = invert(&ycl, "closed-loop inverse", s)?;
    let (gain, _) = svd_extremes(&inv)?;
    Ok(gain * kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::converter::{
        build_admittance, ConverterSpec, DroopParams, FilterParams, OperatingPoint, Strategy,
    };
    use crate::freq::make_freq_grid;
    use crate::network::{NetworkModel, SusceptanceBlocks};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    const W0: f64 = 2.0 * std::f64::consts::PI * 60.0;

    fn static_dev(g: f64) -> crate::converter::AdmittanceModel {
        let spec = ConverterSpec::new(
            Strategy::StaticAdmittance { g },
            FilterParams::default(),
            OperatingPoint::no_load(),
        )
        .unwrap();
        build_admittance(&spec, W0).unwrap()
    }

    fn single_bus_model(g: f64, b: f64, tau: f64) -> NetworkModel {
        let blocks =
            SusceptanceBlocks::from_matrix(DMatrix::from_row_slice(1, 1, &[b]), false).unwrap();
        NetworkModel::from_parts(blocks, vec![1], vec![static_dev(g)], None, tau, W0).unwrap()
    }

    #[test]
    fn synthetic_diagonal_closed_loop() {
        // B1 = 0: Ycl = g I, kappa = g
        let model = single_bus_model(2.5, 0.0, 0.1);
        let grid = make_freq_grid(1.0, 10.0, 3).unwrap();
        let sweep = strength_sweep(&model, &grid).unwrap();
        for k in &sweep.kappa {
            assert_relative_eq!(*k, 2.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn single_bus_hand_value_near_dc() {
        // Ycl(0) = 2I + Z(0)^-1 with tau = 0.1:
        // Z(0)^-1 = [[0.1, 1], [-1, 0.1]] / 1.01, a normal matrix, so
        // kappa = hypot(2 + 0.1/1.01, 1/1.01)
        let model = single_bus_model(2.0, 1.0, 0.1);
        let ycl = model.closed_loop(Complex64::new(0.0, 0.0)).unwrap();
        let (_, kappa) = svd_extremes(&ycl).unwrap();
        let want = (2.0 + 0.1 / 1.01f64).hypot(1.0 / 1.01);
        assert_relative_eq!(kappa, want, max_relative = 1e-12);
    }

    fn two_bus_model_with_extra(extra: crate::converter::AdmittanceModel) -> NetworkModel {
        // retained buses 1,2; extra bus 3; line weights chosen to keep the
        // coupling mild so bounds stay non-vacuous at some frequencies
        let b = DMatrix::from_row_slice(
            3,
            3,
            &[
                3.0, -1.0, -0.5, //
                -1.0, 2.5, -0.5, //
                -0.5, -0.5, 1.0,
            ],
        );
        let blocks = SusceptanceBlocks::from_matrix(b, true).unwrap();
        NetworkModel::from_parts(
            blocks,
            vec![1, 2],
            vec![static_dev(0.5), static_dev(0.8)],
            Some((3, extra)),
            0.1,
            W0,
        )
        .unwrap()
    }

    #[test]
    fn bounds_hold_on_small_case() {
        let spec = ConverterSpec::with_defaults(Strategy::Droop(DroopParams::default())).unwrap();
        let model = two_bus_model_with_extra(build_admittance(&spec, W0).unwrap());
        let grid = make_freq_grid(0.05, 500.0, 40).unwrap();
        let report = prop1_check(&model, &grid).unwrap();
        assert!(report.all_satisfied);
        assert!(!report.points.is_empty());
    }

    #[test]
    fn zero_extra_device_gives_unit_sensitivity_bound() {
        let model = two_bus_model_with_extra(static_dev(0.0));
        let grid = make_freq_grid(1.0, 100.0, 5).unwrap();
        let sweep = strength_sweep(&model, &grid).unwrap();
        let b1 = model.blocks().b1();
        let coup = model.blocks().coupling().unwrap();
        let smin_b1 = real_svd_extremes(&b1).1;
        let smax_c = real_svd_extremes(&coup).0;
        for k in 0..grid.len() {
            assert_relative_eq!(sweep.sv_max[k], 1.0, max_relative = 1e-14);
            assert_relative_eq!(sweep.bound_alpha[k], smin_b1 - smax_c, max_relative = 1e-12);
        }
    }

    #[test]
    fn bound_alpha_moves_against_sv() {
        // shrinking a forming extra device towards zero admittance raises
        // sigma_max(S_v) towards 1 and must lower bound_alpha
        let full = two_bus_model_with_extra(static_dev(3.0));
        let shrunk = two_bus_model_with_extra(static_dev(3.0).scaled(0.1));
        let grid = make_freq_grid(0.1, 200.0, 25).unwrap();
        let sa = strength_sweep(&full, &grid).unwrap();
        let sb = strength_sweep(&shrunk, &grid).unwrap();
        let mut strict = 0;
        for k in 0..grid.len() {
            if sb.sv_max[k] > sa.sv_max[k] {
                assert!(
                    sb.bound_alpha[k] < sa.bound_alpha[k],
                    "bound_alpha must drop when sv_max rises (k = {k})"
                );
                strict += 1;
            }
        }
        assert!(strict > 0, "test never exercised a strict sv_max increase");
    }

    #[test]
    fn inverse_gain_identity() {
        let spec = ConverterSpec::with_defaults(Strategy::Droop(DroopParams::default())).unwrap();
        let model = two_bus_model_with_extra(build_admittance(&spec, W0).unwrap());
        for f in [0.3, 7.0, 120.0] {
            let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
            let p = inverse_gain_product(&model, s).unwrap();
            assert_relative_eq!(p, 1.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn scale_covariance() {
        // scaling every branch weight and every device admittance by c
        // scales kappa and alpha by c
        let c = 2.0;
        let spec = ConverterSpec::with_defaults(Strategy::Droop(DroopParams::default())).unwrap();
        let extra = build_admittance(&spec, W0).unwrap();
        let base = two_bus_model_with_extra(extra.clone());
        let scaled_blocks =
            SusceptanceBlocks::from_matrix(base.blocks().matrix() * c, true).unwrap();
        let scaled = NetworkModel::from_parts(
            scaled_blocks,
            vec![1, 2],
            vec![static_dev(0.5).scaled(c), static_dev(0.8).scaled(c)],
            Some((3, extra.scaled(c))),
            0.1,
            W0,
        )
        .unwrap();
        let grid = make_freq_grid(0.5, 300.0, 9).unwrap();
        let sa = strength_sweep(&base, &grid).unwrap();
        let sb = strength_sweep(&scaled, &grid).unwrap();
        for k in 0..grid.len() {
            assert_relative_eq!(sb.kappa[k], c * sa.kappa[k], max_relative = 1e-10);
            assert_relative_eq!(sb.alpha[k], c * sa.alpha[k], max_relative = 1e-10);
        }
    }

    #[test]
    fn compare_identical_cases_gives_zero_deltas() {
        let spec = ConverterSpec::with_defaults(Strategy::Droop(DroopParams::default())).unwrap();
        let m = two_bus_model_with_extra(build_admittance(&spec, W0).unwrap());
        let grid = make_freq_grid(1.0, 50.0, 7).unwrap();
        let cmp = compare_scenarios(&m, &m, &grid).unwrap();
        assert!(cmp.d_kappa.iter().all(|d| *d == 0.0));
        assert!(cmp.d_alpha.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn compare_rejects_mismatched_retained_sets() {
        let spec = ConverterSpec::with_defaults(Strategy::Droop(DroopParams::default())).unwrap();
        let a = two_bus_model_with_extra(build_admittance(&spec, W0).unwrap());
        let b = single_bus_model(1.0, 0.5, 0.1);
        let grid = make_freq_grid(1.0, 50.0, 3).unwrap();
        assert!(compare_scenarios(&a, &b, &grid).is_err());
    }

    #[test]
    fn prop1_requires_extra_device() {
        let model = single_bus_model(1.0, 0.5, 0.1);
        let grid = make_freq_grid(1.0, 50.0, 3).unwrap();
        assert!(prop1_check(&model, &grid).is_err());
    }
}

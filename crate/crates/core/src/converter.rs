//! Small-signal admittance models of grid-connected converters.
//!
//! Every supported control strategy is described by a documented surrogate
//! block diagram, linearized about an operating point and closed into a
//! 2x2 admittance transfer matrix
//!
//! ```text
//!   dI_absorbed = Y(s) dU        (load convention)
//! ```
//!
//! The load convention (positive current flowing *into* the device) is what
//! makes the downstream sensitivity and network formulas hold without sign
//! fixes.
//!
//! Surrogate structure. Each strategy produces blocks `A(s)`, `B(s)` of the
//! output-current relation `dI_out = A(s) dU + B(s) dI_out`; elimination
//! gives `dI_out = (I - B)^-1 A dU` and `Y(s) = -(I - B)^-1 A(s)`.
//! Three reusable pieces appear throughout:
//!
//! * filter admittance  `G_f(s) = [l_f Z_tf(s)]^-1`, `tf = r_f / l_f`;
//! * measurement low-pass `F(s) = w_f / (s + w_f)`;
//! * synchronization loop `H(s)` defined by
//!   `dtheta' = w0 (kp dUq_c + x)`, `x' = ki dUq_c`, `dUq_c = dUq - ud0 dtheta`,
//!   giving `H(s) = w0 (kp s + ki) / (s^2 + ud0 w0 (kp s + ki))`.
//!
//! EMF-based strategies treat the internal voltage phasor at angle zero, so
//! its perturbation is `dE_dq = [dE, E0 dtheta]` with `E0` the steady EMF
//! magnitude implied by the operating point and the output filter.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::line::eval_z;
use crate::linalg::{ident2, invert2, is_finite_mat2, CMat2};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Steady-state terminal voltage and output current (converter -> grid),
/// per-unit, in the global dq frame.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPoint {
    pub ud: f64,
    pub uq: f64,
    pub id: f64,
    pub iq: f64,
}

impl OperatingPoint {
    pub fn new(ud: f64, uq: f64, id: f64, iq: f64) -> Result<Self> {
        let op = OperatingPoint { ud, uq, id, iq };
        op.validate()?;
        Ok(op)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ud.hypot(self.uq) > 0.0) {
            return Err(Error::config(
                "operating_point: terminal voltage magnitude must be > 0 \
                 (linearization about zero voltage is rejected)",
            ));
        }
        if ![self.ud, self.uq, self.id, self.iq].iter().all(|v| v.is_finite()) {
            return Err(Error::config("operating_point: entries must be finite"));
        }
        Ok(())
    }

    /// Loaded default used for strategy sweeps: 0.5 pu active export.
    pub fn loaded_default() -> Self {
        OperatingPoint { ud: 1.0, uq: 0.0, id: 0.5, iq: 0.0 }
    }

    /// No-load point for analytic unit checks.
    pub fn no_load() -> Self {
        OperatingPoint { ud: 1.0, uq: 0.0, id: 0.0, iq: 0.0 }
    }
}

/// Output filter of an EMF- or virtual-admittance-based converter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub l_f: f64,
    pub r_f: f64,
}

impl FilterParams {
    pub fn new(l_f: f64, r_f: f64) -> Result<Self> {
        if !(l_f > 0.0) {
            return Err(Error::config(format!("filter.l_f: must be > 0, got {l_f}")));
        }
        if !(r_f >= 0.0) {
            return Err(Error::config(format!("filter.r_f: must be >= 0, got {r_f}")));
        }
        Ok(FilterParams { l_f, r_f })
    }

    pub fn tau_f(&self) -> f64 {
        self.r_f / self.l_f
    }
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams { l_f: 0.1, r_f: 0.01 }
    }
}

/// Linearization of the instantaneous powers
/// `P = Ud Id + Uq Iq`, `Q = Uq Id - Ud Iq`
/// as row vectors over `[dUd, dUq, dId, dIq]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerJacobians {
    pub dp: [f64; 4],
    pub dq: [f64; 4],
}

pub fn linearize_power(op: &OperatingPoint) -> Result<PowerJacobians> {
    op.validate()?;
    Ok(PowerJacobians {
        dp: [op.id, op.iq, op.ud, op.uq],
        dq: [-op.iq, op.id, op.uq, -op.ud],
    })
}

macro_rules! params_struct {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident : $default:expr),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
        #[serde(deny_unknown_fields, default)]
        pub struct $name {
            $($(#[$fmeta])* pub $field: f64,)+
        }
        impl Default for $name {
            fn default() -> Self {
                Self { $($field: $default,)+ }
            }
        }
    };
}

params_struct!(
    /// P-f and Q-E droop with first-order power filtering.
    DroopParams {
        /// Frequency droop gain (pu frequency per pu power).
        m_p: 0.05,
        /// Voltage droop gain.
        m_q: 0.05,
        /// Power measurement low-pass corner, rad/s.
        omega_f: TWO_PI * 5.0,
    }
);

params_struct!(
    /// Swing-equation emulation: `dw = -dP / (T_J s + D_p)`, Q channel as droop.
    VsgParams {
        /// Inertia constant, s.
        t_j: 4.0,
        /// Damping coefficient.
        d_p: 20.0,
        m_q: 0.05,
        omega_f: TWO_PI * 5.0,
    }
);

params_struct!(
    /// Oscillator-based control: droop P channel plus first-order voltage
    /// amplitude dynamics `dE = -eta dQ / (s + eta alpha)`.
    VocParams {
        m_p: 0.05,
        omega_f: TWO_PI * 5.0,
        eta: 0.05,
        alpha: 10.0,
    }
);

params_struct!(
    /// Pure angle-forming: unfiltered `dtheta = -w0 m_p dP / s`, fixed EMF magnitude.
    VfcParams {
        m_p: 0.05,
    }
);

params_struct!(
    /// PLL-synchronized constant-power control (current source).
    PllPqParams {
        /// Power-loop PI proportional gain.
        kp_pq: 0.25,
        /// Power-loop PI integral gain.
        ki_pq: 50.0,
        /// Closed current-loop bandwidth, rad/s.
        omega_i: TWO_PI * 300.0,
        kp_pll: 0.47,
        ki_pll: 42.0,
    }
);

params_struct!(
    /// PLL-synchronized P + AC-voltage-magnitude control.
    PllPvParams {
        kp_pq: 0.25,
        ki_pq: 50.0,
        /// Voltage-loop PI gains.
        kp_v: 0.25,
        ki_v: 50.0,
        omega_i: TWO_PI * 300.0,
        kp_pll: 0.47,
        ki_pll: 42.0,
    }
);

params_struct!(
    /// PLL-synchronized current-vector control emulating a voltage source
    /// behind a virtual admittance `Y_v(s) = G_f(s)`; EMF reference from the
    /// droop laws.
    PllGfmParams {
        m_p: 0.05,
        m_q: 0.05,
        omega_f: TWO_PI * 5.0,
        omega_i: TWO_PI * 300.0,
        kp_pll: 0.47,
        ki_pll: 42.0,
    }
);

/// User-supplied admittance evaluator for the `custom` strategy.
#[derive(Clone)]
pub struct CustomModel(pub Arc<dyn Fn(Complex64) -> Result<CMat2> + Send + Sync>);

impl fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomModel(..)")
    }
}

/// Control strategy tag plus its parameters.
#[derive(Debug, Clone)]
pub enum Strategy {
    Droop(DroopParams),
    Vsg(VsgParams),
    Voc(VocParams),
    Vfc(VfcParams),
    PllPq(PllPqParams),
    PllPv(PllPvParams),
    PllGfm(PllGfmParams),
    /// Fixed internal EMF behind the output filter; the admittance is the
    /// passive branch admittance. With a tiny filter this doubles as the
    /// infinite-bus surrogate.
    IdealSource,
    /// `Y(s) = g * I` for every `s`; `g = 0` models an open connection.
    StaticAdmittance { g: f64 },
    Custom(CustomModel),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Droop(_) => "droop",
            Strategy::Vsg(_) => "vsg",
            Strategy::Voc(_) => "voc",
            Strategy::Vfc(_) => "vfc",
            Strategy::PllPq(_) => "pll_pq",
            Strategy::PllPv(_) => "pll_pv",
            Strategy::PllGfm(_) => "pll_gfm",
            Strategy::IdealSource => "ideal_source",
            Strategy::StaticAdmittance { .. } => "static_admittance",
            Strategy::Custom(_) => "custom",
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("params.{name}: must be > 0, got {v}")))
            }
        };
        match self {
            Strategy::Droop(p) => {
                positive("m_p", p.m_p)?;
                positive("m_q", p.m_q)?;
                positive("omega_f", p.omega_f)
            }
            Strategy::Vsg(p) => {
                positive("t_j", p.t_j)?;
                positive("d_p", p.d_p)?;
                positive("m_q", p.m_q)?;
                positive("omega_f", p.omega_f)
            }
            Strategy::Voc(p) => {
                positive("m_p", p.m_p)?;
                positive("omega_f", p.omega_f)?;
                positive("eta", p.eta)?;
                positive("alpha", p.alpha)
            }
            Strategy::Vfc(p) => positive("m_p", p.m_p),
            Strategy::PllPq(p) => {
                positive("kp_pq", p.kp_pq)?;
                positive("ki_pq", p.ki_pq)?;
                positive("omega_i", p.omega_i)?;
                positive("kp_pll", p.kp_pll)?;
                positive("ki_pll", p.ki_pll)
            }
            Strategy::PllPv(p) => {
                positive("kp_pq", p.kp_pq)?;
                positive("ki_pq", p.ki_pq)?;
                positive("kp_v", p.kp_v)?;
                positive("ki_v", p.ki_v)?;
                positive("omega_i", p.omega_i)?;
                positive("kp_pll", p.kp_pll)?;
                positive("ki_pll", p.ki_pll)
            }
            Strategy::PllGfm(p) => {
                positive("m_p", p.m_p)?;
                positive("m_q", p.m_q)?;
                positive("omega_f", p.omega_f)?;
                positive("omega_i", p.omega_i)?;
                positive("kp_pll", p.kp_pll)?;
                positive("ki_pll", p.ki_pll)
            }
            Strategy::IdealSource => Ok(()),
            Strategy::StaticAdmittance { g } => {
                if *g >= 0.0 && g.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config(format!("params.g: must be >= 0, got {g}")))
                }
            }
            Strategy::Custom(_) => Ok(()),
        }
    }
}

/// Full converter description: strategy, output filter, operating point.
#[derive(Debug, Clone)]
pub struct ConverterSpec {
    pub strategy: Strategy,
    pub filter: FilterParams,
    pub op: OperatingPoint,
}

impl ConverterSpec {
    pub fn new(strategy: Strategy, filter: FilterParams, op: OperatingPoint) -> Result<Self> {
        strategy.validate()?;
        op.validate()?;
        Ok(ConverterSpec { strategy, filter, op })
    }

    pub fn with_defaults(strategy: Strategy) -> Result<Self> {
        ConverterSpec::new(strategy, FilterParams::default(), OperatingPoint::loaded_default())
    }
}

/// Compiled admittance evaluator. Immutable after construction; safe to
/// evaluate concurrently at distinct `s`. Real-coefficient dynamics give
/// `Y(conj(s)) = conj(Y(s))`. Pure integrators (droop angle, PLL) put poles
/// at `s = 0`, which is excluded from evaluation grids.
#[derive(Debug, Clone)]
pub struct AdmittanceModel {
    spec: ConverterSpec,
    omega0: f64,
    /// Steady EMF magnitude implied by the operating point and filter.
    e0: f64,
    /// Post-scaling of the admittance (used by covariance checks and
    /// device-inflation studies).
    scale: f64,
}

/// Compile a converter spec into its admittance model for base frequency
/// `omega0` (rad/s).
pub fn build_admittance(spec: &ConverterSpec, omega0: f64) -> Result<AdmittanceModel> {
    if !(omega0 > 0.0) {
        return Err(Error::config(format!("omega0: must be > 0, got {omega0}")));
    }
    spec.strategy.validate()?;
    spec.op.validate()?;
    let e0 = steady_emf_magnitude(&spec.op, &spec.filter);
    Ok(AdmittanceModel { spec: spec.clone(), omega0, e0, scale: 1.0 })
}

/// Steady EMF magnitude `||U0 + [[r_f, -l_f], [l_f, r_f]] I0||`.
fn steady_emf_magnitude(op: &OperatingPoint, f: &FilterParams) -> f64 {
    let ed = op.ud + f.r_f * op.id - f.l_f * op.iq;
    let eq = op.uq + f.l_f * op.id + f.r_f * op.iq;
    ed.hypot(eq)
}

/// Column-times-row outer product of two real pairs into a complex 2x2,
/// scaled by a complex gain.
fn outer(gain: Complex64, col: [f64; 2], row: [f64; 2]) -> CMat2 {
    CMat2::new(
        gain * col[0] * row[0],
        gain * col[0] * row[1],
        gain * col[1] * row[0],
        gain * col[1] * row[1],
    )
}

struct OpRows {
    pu: [f64; 2],
    pi: [f64; 2],
    qu: [f64; 2],
    qi: [f64; 2],
    /// J I0 = [-iq0, id0]: current-vector rotation under a frame-angle change.
    ji0: [f64; 2],
    /// J U0 = [-uq0, ud0].
    ju0: [f64; 2],
}

fn op_rows(op: &OperatingPoint) -> OpRows {
    OpRows {
        pu: [op.id, op.iq],
        pi: [op.ud, op.uq],
        qu: [-op.iq, op.id],
        qi: [op.uq, -op.ud],
        ji0: [-op.iq, op.id],
        ju0: [-op.uq, op.ud],
    }
}

fn pll_transfer(s: Complex64, kp: f64, ki: f64, ud0: f64, omega0: f64) -> Complex64 {
    let num = omega0 * (kp * s + ki);
    num / (s * s + ud0 * num)
}

impl AdmittanceModel {
    pub fn spec(&self) -> &ConverterSpec {
        &self.spec
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    /// Same model with the admittance multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut m = self.clone();
        m.scale *= c;
        m
    }

    /// Filter branch admittance `G_f(s) = [l_f Z_tf(s)]^-1`.
    fn filter_admittance(&self, s: Complex64) -> Result<CMat2> {
        let f = &self.spec.filter;
        let z = eval_z(s, f.tau_f(), self.omega0) * Complex64::new(f.l_f, 0.0);
        invert2(&z, "filter admittance", s)
    }

    /// Strategy blocks `A(s)`, `B(s)` of `dI_out = A dU + B dI_out`.
    /// `None` for strategies evaluated directly (static, custom).
    fn blocks(&self, s: Complex64) -> Result<Option<(CMat2, CMat2)>> {
        let op = &self.spec.op;
        let r = op_rows(op);
        let w0 = self.omega0;
        let e0 = self.e0;
        let blocks = match &self.spec.strategy {
            Strategy::Droop(p) => {
                let g = self.filter_admittance(s)?;
                let f = p.omega_f / (s + p.omega_f);
                let ep = -w0 * p.m_p * f / s;
                let eq = -p.m_q * f;
                let au = outer(ep, [0.0, e0], r.pu) + outer(eq, [1.0, 0.0], r.qu) - ident2();
                let bi = outer(ep, [0.0, e0], r.pi) + outer(eq, [1.0, 0.0], r.qi);
                Some((g * au, g * bi))
            }
            Strategy::Vsg(p) => {
                let g = self.filter_admittance(s)?;
                let f = p.omega_f / (s + p.omega_f);
                let ep = -w0 / (s * (p.t_j * s + p.d_p));
                let eq = -p.m_q * f;
                let au = outer(ep, [0.0, e0], r.pu) + outer(eq, [1.0, 0.0], r.qu) - ident2();
                let bi = outer(ep, [0.0, e0], r.pi) + outer(eq, [1.0, 0.0], r.qi);
                Some((g * au, g * bi))
            }
            Strategy::Voc(p) => {
                let g = self.filter_admittance(s)?;
                let f = p.omega_f / (s + p.omega_f);
                let ep = -w0 * p.m_p * f / s;
                let eq = -p.eta / (s + p.eta * p.alpha);
                let au = outer(ep, [0.0, e0], r.pu) + outer(eq, [1.0, 0.0], r.qu) - ident2();
                let bi = outer(ep, [0.0, e0], r.pi) + outer(eq, [1.0, 0.0], r.qi);
                Some((g * au, g * bi))
            }
            Strategy::Vfc(p) => {
                let g = self.filter_admittance(s)?;
                let ep = -w0 * p.m_p / s;
                let au = outer(ep, [0.0, e0], r.pu) - ident2();
                let bi = outer(ep, [0.0, e0], r.pi);
                Some((g * au, g * bi))
            }
            Strategy::PllPq(p) => {
                let ti = p.omega_i / (s + p.omega_i);
                let pi_gain = p.kp_pq + p.ki_pq / s;
                let h = pll_transfer(s, p.kp_pll, p.ki_pll, op.ud, w0);
                let mu = outer(-pi_gain, [1.0, 0.0], r.pu) + outer(pi_gain, [0.0, 1.0], r.qu);
                let mi = outer(-pi_gain, [1.0, 0.0], r.pi) + outer(pi_gain, [0.0, 1.0], r.qi);
                let a = mu * ti + outer(h, r.ji0, [0.0, 1.0]);
                let b = mi * ti;
                Some((a, b))
            }
            Strategy::PllPv(p) => {
                let ti = p.omega_i / (s + p.omega_i);
                let pi_p = p.kp_pq + p.ki_pq / s;
                let pi_v = p.kp_v + p.ki_v / s;
                let h = pll_transfer(s, p.kp_pll, p.ki_pll, op.ud, w0);
                let umag = op.ud.hypot(op.uq);
                let vu = [op.ud / umag, op.uq / umag];
                let mu = outer(-pi_p, [1.0, 0.0], r.pu) + outer(-pi_v, [0.0, 1.0], vu);
                let mi = outer(-pi_p, [1.0, 0.0], r.pi);
                let a = mu * ti + outer(h, r.ji0, [0.0, 1.0]);
                let b = mi * ti;
                Some((a, b))
            }
            Strategy::PllGfm(p) => {
                let yv = self.filter_admittance(s)?;
                let ti = p.omega_i / (s + p.omega_i);
                let f = p.omega_f / (s + p.omega_f);
                let h = pll_transfer(s, p.kp_pll, p.ki_pll, op.ud, w0);
                let ep = -w0 * p.m_p * f / s;
                let eq = -p.m_q * f;
                // terminal voltage seen in the PLL frame: (I - JU0 [0, H]) dU
                let rot = outer(h, r.ju0, [0.0, 1.0]);
                let inner = outer(ep, [0.0, e0], r.pu) + outer(eq, [1.0, 0.0], r.qu)
                    - ident2()
                    + rot;
                let a = yv * inner * ti + outer(h, r.ji0, [0.0, 1.0]);
                let b = yv
                    * (outer(ep, [0.0, e0], r.pi) + outer(eq, [1.0, 0.0], r.qi))
                    * ti;
                Some((a, b))
            }
            Strategy::IdealSource => {
                // fixed EMF: dI_out = G_f (0 - dU)
                let g = self.filter_admittance(s)?;
                Some((-g, CMat2::zeros()))
            }
            Strategy::StaticAdmittance { .. } | Strategy::Custom(_) => None,
        };
        Ok(blocks)
    }

    /// Evaluate `Y(s)`. Deterministic: equal `s` gives bit-identical results.
    pub fn eval(&self, s: Complex64) -> Result<CMat2> {
        let scale = Complex64::new(self.scale, 0.0);
        let y = match &self.spec.strategy {
            Strategy::StaticAdmittance { g } => ident2() * Complex64::new(*g, 0.0),
            Strategy::Custom(f) => (f.0)(s)?,
            _ => {
                let (a, b) = self.blocks(s)?.expect("block strategies return blocks");
                let elim = invert2(&(ident2() - b), "admittance elimination", s)?;
                -(elim * a)
            }
        };
        let y = y * scale;
        if !is_finite_mat2(&y) {
            return Err(Error::numerical_at("admittance evaluation produced non-finite entries", s));
        }
        Ok(y)
    }
}

/// Parse a strategy name + JSON parameter map into a `Strategy`.
///
/// This is the schema used by case files and standalone device files; the
/// filter keys `l_f`/`r_f` live in the same map and are returned separately.
pub fn strategy_from_json(name: &str, params: &serde_json::Value) -> Result<(Strategy, FilterParams)> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields, default)]
    struct FilterJson {
        l_f: f64,
        r_f: f64,
    }
    impl Default for FilterJson {
        fn default() -> Self {
            let d = FilterParams::default();
            FilterJson { l_f: d.l_f, r_f: d.r_f }
        }
    }

    // Split the map into filter keys and strategy keys so each side can use
    // deny_unknown_fields independently.
    let obj = match params {
        serde_json::Value::Null => serde_json::Map::new(),
        serde_json::Value::Object(m) => m.clone(),
        _ => return Err(Error::config("params: must be an object")),
    };
    let mut filter_map = serde_json::Map::new();
    let mut strat_map = serde_json::Map::new();
    for (k, v) in obj {
        if k == "l_f" || k == "r_f" {
            filter_map.insert(k, v);
        } else {
            strat_map.insert(k, v);
        }
    }
    let fj: FilterJson = serde_json::from_value(serde_json::Value::Object(filter_map))
        .map_err(|e| Error::config(format!("params: {e}")))?;
    let filter = FilterParams::new(fj.l_f, fj.r_f)?;

    fn parse<T: serde::de::DeserializeOwned>(m: serde_json::Map<String, serde_json::Value>) -> Result<T> {
        serde_json::from_value(serde_json::Value::Object(m))
            .map_err(|e| Error::config(format!("params: {e}")))
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields, default)]
    struct StaticJson {
        g: f64,
    }
    impl Default for StaticJson {
        fn default() -> Self {
            StaticJson { g: 1.0 }
        }
    }
    #[derive(Deserialize, Default)]
    #[serde(deny_unknown_fields)]
    struct EmptyJson {}

    let strategy = match name {
        "droop" => Strategy::Droop(parse(strat_map)?),
        "vsg" => Strategy::Vsg(parse(strat_map)?),
        "voc" => Strategy::Voc(parse(strat_map)?),
        "vfc" => Strategy::Vfc(parse(strat_map)?),
        "pll_pq" => Strategy::PllPq(parse(strat_map)?),
        "pll_pv" => Strategy::PllPv(parse(strat_map)?),
        "pll_gfm" => Strategy::PllGfm(parse(strat_map)?),
        "ideal_source" => {
            let _: EmptyJson = parse(strat_map)?;
            Strategy::IdealSource
        }
        "static_admittance" => {
            let sj: StaticJson = parse(strat_map)?;
            Strategy::StaticAdmittance { g: sj.g }
        }
        "custom" => {
            return Err(Error::config(
                "strategy: custom models cannot be loaded from files; supply them through the API",
            ))
        }
        other => return Err(Error::config(format!("strategy: unknown strategy '{other}'"))),
    };
    strategy.validate()?;
    Ok((strategy, filter))
}

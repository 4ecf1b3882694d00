//! Frequency-domain analysis toolkit for grid-forming behavior of power
//! converters and formation capability of power systems.
//!
//! Device level: a converter's small-signal admittance `Y(s)` and line
//! parameters define the voltage sensitivity matrix
//! `S_v(s) = [I + L_g Z(s) Y(s)]^-1`; the Forming Index `FI(w)` is the
//! maximum singular value of `S_v(jw)`. `FI <= 1` means the converter
//! rejects grid voltage variation (grid-forming), `FI > 1` means it
//! follows and amplifies it (grid-following).
//!
//! System level: a reduced susceptance matrix plus per-bus device
//! admittances form the closed-loop network admittance. System strength
//! `kappa(w)` and grid strength `alpha(w)` are minimum singular values of
//! the closed-loop and network-only matrices; lower bounds link them to
//! the forming behavior of an additional converter.
//!
//! Time domain: step-disturbance voltage responses come from numerical
//! inversion of the same frequency-domain evaluators along a shifted
//! Bromwich contour.

pub mod converter;
pub mod error;
pub mod forming;
pub mod freq;
pub mod line;
pub mod linalg;
pub mod network;
pub mod strength;
pub mod time_domain;

pub use converter::{
    build_admittance, linearize_power, AdmittanceModel, ConverterSpec, CustomModel,
    DroopParams, FilterParams, OperatingPoint, PllGfmParams, PllPqParams, PllPvParams,
    PowerJacobians, Strategy, VfcParams, VocParams, VsgParams,
};
pub use error::{Error, Result};
pub use forming::{classify, forming_index_sweep, sensitivity, Band, Classification, GfmLabel, SweepResult};
pub use freq::{make_freq_grid, FrequencyGrid};
pub use line::{eval_z, eval_z_inv, LineParams};
pub use linalg::{kron_block, svd_extremes, CMat, CMat2};
pub use network::{
    build_susceptance, ieee39_case, load_case, load_case_str, Branch, Device, NetworkCase,
    NetworkModel, SusceptanceBlocks,
};
pub use strength::{
    compare_scenarios, prop1_check, strength_sweep, Prop1Point, Prop1Report, StrengthComparison,
    StrengthSweep,
};
pub use time_domain::{
    ilt_bromwich, step_response, Axis, DisturbanceSpec, IltOptions, TimeSeries,
};

//! Multi-bus network model: case ingestion, reduced susceptance blocks,
//! per-bus device blocks, Kron absorption of the extra device, and the
//! closed-loop admittance.
//!
//! Case data is branch-level (per-unit inductances with a uniform R/L
//! ratio). The reduced susceptance matrix comes from the weighted branch
//! Laplacian (weight `1/l_pu`) with all buses other than the retained set
//! and the optional extra bus eliminated by Schur complement.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;

use crate::converter::{
    build_admittance, strategy_from_json, AdmittanceModel, ConverterSpec, OperatingPoint,
};
use crate::error::{Error, Result};
use crate::line::{eval_z, eval_z_inv};
use crate::linalg::{fro_norm, ident2, invert2, kron_block, solve, CMat, CMat2};

/// A branch between two buses with per-unit inductance `l_pu > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub l_pu: f64,
}

/// A device placement: converter spec attached to a bus.
#[derive(Debug, Clone)]
pub struct Device {
    pub bus: u32,
    pub spec: ConverterSpec,
}

/// Validated network case. Devices are stored in retained order.
#[derive(Debug, Clone)]
pub struct NetworkCase {
    pub omega0: f64,
    /// Uniform R/L ratio shared by every branch.
    pub tau: f64,
    pub buses: Vec<u32>,
    /// Parallel branches are merged by the loader.
    pub branches: Vec<Branch>,
    pub devices: Vec<Device>,
    pub retained: Vec<u32>,
    pub extra_device: Option<Device>,
}

// ---------------------------------------------------------------- JSON --

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchJson {
    from: u32,
    to: u32,
    l_pu: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceJson {
    bus: u32,
    strategy: String,
    #[serde(default)]
    params: serde_json::Value,
    #[serde(default)]
    operating_point: Option<OperatingPoint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseJson {
    #[serde(default = "default_omega0")]
    omega0_rad_s: f64,
    tau: f64,
    buses: Vec<u32>,
    branches: Vec<BranchJson>,
    devices: Vec<DeviceJson>,
    retained: Vec<u32>,
    #[serde(default)]
    extra_device: Option<DeviceJson>,
}

fn default_omega0() -> f64 {
    2.0 * std::f64::consts::PI * 60.0
}

fn device_from_json(d: &DeviceJson, path: &str) -> Result<Device> {
    let (strategy, filter) = strategy_from_json(&d.strategy, &d.params)
        .map_err(|e| Error::config(format!("{path}: {e}")))?;
    let op = d.operating_point.unwrap_or_else(OperatingPoint::loaded_default);
    let spec = ConverterSpec::new(strategy, filter, op)
        .map_err(|e| Error::config(format!("{path}: {e}")))?;
    Ok(Device { bus: d.bus, spec })
}

/// Load and validate a case from a JSON string.
pub fn load_case_str(json: &str) -> Result<NetworkCase> {
    let cj: CaseJson =
        serde_json::from_str(json).map_err(|e| Error::config(format!("case: {e}")))?;
    let mut devices = Vec::with_capacity(cj.devices.len());
    for (i, d) in cj.devices.iter().enumerate() {
        devices.push(device_from_json(d, &format!("devices[{i}]"))?);
    }
    let extra_device = match &cj.extra_device {
        Some(d) => Some(device_from_json(d, "extra_device")?),
        None => None,
    };
    let mut branches = Vec::with_capacity(cj.branches.len());
    for (i, b) in cj.branches.iter().enumerate() {
        if !(b.l_pu > 0.0) {
            return Err(Error::config(format!(
                "branches[{i}].l_pu: must be > 0, got {}",
                b.l_pu
            )));
        }
        if b.from == b.to {
            return Err(Error::config(format!(
                "branches[{i}]: self-loop on bus {}",
                b.from
            )));
        }
        branches.push(Branch { from: b.from, to: b.to, l_pu: b.l_pu });
    }
    let case = NetworkCase {
        omega0: cj.omega0_rad_s,
        tau: cj.tau,
        buses: cj.buses,
        branches,
        devices,
        retained: cj.retained,
        extra_device,
    };
    case.validated()
}

/// Load and validate a case from a file path.
pub fn load_case(path: &std::path::Path) -> Result<NetworkCase> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("case: cannot read {}: {e}", path.display())))?;
    load_case_str(&text)
}

/// The bundled IEEE 39-bus case: standard public line reactances, buses
/// 1-8 as PLL-PQ devices, bus 39 as a stiff-source surrogate, and an
/// additional PLL-PQ converter at bus 9.
pub fn ieee39_case() -> NetworkCase {
    load_case_str(include_str!("../data/ieee39.json")).expect("bundled case is valid")
}

impl NetworkCase {
    /// Validate invariants, merge parallel branches, and order devices by
    /// the retained list.
    pub fn validated(mut self) -> Result<Self> {
        if !(self.omega0 > 0.0) {
            return Err(Error::config(format!("omega0_rad_s: must be > 0, got {}", self.omega0)));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::config(format!("tau: must be >= 0, got {}", self.tau)));
        }
        if self.buses.is_empty() {
            return Err(Error::config("buses: must not be empty"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.buses {
            if !seen.insert(*b) {
                return Err(Error::config(format!("buses: duplicate id {b}")));
            }
        }
        if self.retained.is_empty() {
            return Err(Error::config("retained: must list at least one bus"));
        }
        let mut ret_seen = std::collections::BTreeSet::new();
        for b in &self.retained {
            if !seen.contains(b) {
                return Err(Error::config(format!("retained: bus {b} is not in buses")));
            }
            if !ret_seen.insert(*b) {
                return Err(Error::config(format!("retained: duplicate bus {b}")));
            }
        }
        if let Some(x) = &self.extra_device {
            if !seen.contains(&x.bus) {
                return Err(Error::config(format!("extra_device.bus: bus {} is not in buses", x.bus)));
            }
            if ret_seen.contains(&x.bus) {
                return Err(Error::config(format!(
                    "extra_device.bus: bus {} is already retained",
                    x.bus
                )));
            }
        }
        for (i, b) in self.branches.iter().enumerate() {
            if !seen.contains(&b.from) || !seen.contains(&b.to) {
                return Err(Error::config(format!(
                    "branches[{i}]: endpoint not in buses ({}-{})",
                    b.from, b.to
                )));
            }
        }
        // merge parallel branches: weights 1/l add
        let mut merged: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for b in &self.branches {
            let key = (b.from.min(b.to), b.from.max(b.to));
            *merged.entry(key).or_insert(0.0) += 1.0 / b.l_pu;
        }
        self.branches = merged
            .into_iter()
            .map(|((from, to), w)| Branch { from, to, l_pu: 1.0 / w })
            .collect();
        // connectivity over all buses
        let mut adj: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for b in &self.branches {
            adj.entry(b.from).or_default().push(b.to);
            adj.entry(b.to).or_default().push(b.from);
        }
        let mut visited = std::collections::BTreeSet::new();
        let mut queue = VecDeque::from([self.buses[0]]);
        visited.insert(self.buses[0]);
        while let Some(u) = queue.pop_front() {
            for v in adj.get(&u).into_iter().flatten() {
                if visited.insert(*v) {
                    queue.push_back(*v);
                }
            }
        }
        if visited.len() != self.buses.len() {
            return Err(Error::config("branches: graph is disconnected"));
        }
        // exactly one device per retained bus
        let mut by_bus: BTreeMap<u32, Device> = BTreeMap::new();
        for (i, d) in self.devices.iter().enumerate() {
            if !ret_seen.contains(&d.bus) {
                return Err(Error::config(format!(
                    "devices[{i}].bus: bus {} is not a retained bus",
                    d.bus
                )));
            }
            if by_bus.insert(d.bus, d.clone()).is_some() {
                return Err(Error::config(format!(
                    "devices[{i}].bus: duplicate device for bus {}",
                    d.bus
                )));
            }
        }
        let mut ordered = Vec::with_capacity(self.retained.len());
        for b in &self.retained {
            match by_bus.remove(b) {
                Some(d) => ordered.push(d),
                None => return Err(Error::config(format!("devices: retained bus {b} has no device"))),
            }
        }
        self.devices = ordered;
        Ok(self)
    }

    /// Replace (or install) the device at `bus`; `bus` may be a retained bus
    /// or the extra bus.
    pub fn set_device(&mut self, bus: u32, spec: ConverterSpec) -> Result<()> {
        if let Some(d) = self.devices.iter_mut().find(|d| d.bus == bus) {
            d.spec = spec;
            return Ok(());
        }
        match &mut self.extra_device {
            Some(x) if x.bus == bus => {
                x.spec = spec;
                Ok(())
            }
            _ => Err(Error::config(format!(
                "device override: bus {bus} holds no device (retained or extra)"
            ))),
        }
    }
}

// ---------------------------------------------------- susceptance blocks --

/// Reduced susceptance matrix and its partition. With an extra bus the
/// matrix is `(n+1) x (n+1)` and splits as `[[B1, B2], [B3, B4]]`; without
/// one it is just `B1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SusceptanceBlocks {
    b: DMatrix<f64>,
    n: usize,
    has_extra: bool,
}

impl SusceptanceBlocks {
    /// Wrap an explicitly built matrix (synthetic cases, tests).
    pub fn from_matrix(b: DMatrix<f64>, has_extra: bool) -> Result<Self> {
        if b.nrows() != b.ncols() || b.nrows() == 0 {
            return Err(Error::config("susceptance: matrix must be square and non-empty"));
        }
        let n = b.nrows() - usize::from(has_extra);
        if n == 0 {
            return Err(Error::config("susceptance: needs at least one retained bus"));
        }
        let sym_err = (&b - b.transpose()).norm();
        if sym_err > 1e-9 * b.norm().max(1.0) {
            return Err(Error::config(format!(
                "susceptance: matrix is not symmetric (deviation {sym_err:e})"
            )));
        }
        Ok(SusceptanceBlocks { b, n, has_extra })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_extra(&self) -> bool {
        self.has_extra
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn b1(&self) -> DMatrix<f64> {
        self.b.view((0, 0), (self.n, self.n)).into_owned()
    }

    /// Column coupling block; zero when there is no extra bus.
    pub fn b2(&self) -> DMatrix<f64> {
        if self.has_extra {
            self.b.view((0, self.n), (self.n, 1)).into_owned()
        } else {
            DMatrix::zeros(self.n, 1)
        }
    }

    pub fn b3(&self) -> DMatrix<f64> {
        if self.has_extra {
            self.b.view((self.n, 0), (1, self.n)).into_owned()
        } else {
            DMatrix::zeros(1, self.n)
        }
    }

    pub fn b4(&self) -> Option<f64> {
        self.has_extra.then(|| self.b[(self.n, self.n)])
    }

    /// `B2 B3 / B4`, the rank-one coupling of the extra bus; `None` without one.
    pub fn coupling(&self) -> Option<DMatrix<f64>> {
        let b4 = self.b4()?;
        Some(self.b2() * self.b3() / b4)
    }
}

/// Build the reduced susceptance blocks of a case: weighted-Laplacian
/// assembly with weight `1/l_pu`, then Schur-complement elimination of all
/// buses that are neither retained nor the extra bus.
pub fn build_susceptance(case: &NetworkCase) -> Result<SusceptanceBlocks> {
    let index: BTreeMap<u32, usize> =
        case.buses.iter().enumerate().map(|(i, b)| (*b, i)).collect();
    let nb = case.buses.len();
    let mut lap = DMatrix::<f64>::zeros(nb, nb);
    for b in &case.branches {
        let (i, j) = (index[&b.from], index[&b.to]);
        let w = 1.0 / b.l_pu;
        lap[(i, i)] += w;
        lap[(j, j)] += w;
        lap[(i, j)] -= w;
        lap[(j, i)] -= w;
    }
    let mut keep: Vec<usize> = case.retained.iter().map(|b| index[b]).collect();
    let has_extra = case.extra_device.is_some();
    if let Some(x) = &case.extra_device {
        keep.push(index[&x.bus]);
    }
    let elim: Vec<usize> = (0..nb).filter(|i| !keep.contains(i)).collect();

    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| lap[(rows[r], cols[c])])
    };
    let a = pick(&keep, &keep);
    let b = if elim.is_empty() {
        a
    } else {
        let ab = pick(&keep, &elim);
        let cb = pick(&elim, &keep);
        let d = pick(&elim, &elim);
        let lu = d.lu();
        let x = lu
            .solve(&cb)
            .ok_or_else(|| Error::config("susceptance: isolated interior subnetwork (singular interior block)"))?;
        a - ab * x
    };
    SusceptanceBlocks::from_matrix(b, has_extra)
}

// ----------------------------------------------------------- the model --

/// Result of absorbing the extra device into the network at one `s`.
#[derive(Debug, Clone)]
pub struct Absorbed {
    /// `B~net = B1 (x) I2 - (B2 B3 / B4) (x) S_v(s)`, size 2n x 2n.
    pub b_net: CMat,
    /// `Y~net = (I_n (x) Z^-1(s)) B~net`.
    pub y_net: CMat,
}

/// Compiled network: susceptance blocks plus per-bus admittance models.
/// Immutable after compilation; per-frequency evaluations are independent.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    omega0: f64,
    tau: f64,
    blocks: SusceptanceBlocks,
    retained: Vec<u32>,
    devices: Vec<AdmittanceModel>,
    extra: Option<(u32, AdmittanceModel)>,
}

impl NetworkModel {
    pub fn compile(case: &NetworkCase) -> Result<Self> {
        let blocks = build_susceptance(case)?;
        let mut devices = Vec::with_capacity(case.devices.len());
        for d in &case.devices {
            let m = build_admittance(&d.spec, case.omega0)
                .map_err(|e| Error::config(format!("device at bus {}: {e}", d.bus)))?;
            devices.push(m);
        }
        let extra = match &case.extra_device {
            Some(x) => Some((
                x.bus,
                build_admittance(&x.spec, case.omega0)
                    .map_err(|e| Error::config(format!("extra device at bus {}: {e}", x.bus)))?,
            )),
            None => None,
        };
        Ok(NetworkModel {
            omega0: case.omega0,
            tau: case.tau,
            blocks,
            retained: case.retained.clone(),
            devices,
            extra,
        })
    }

    /// Assemble a model from explicit parts (synthetic studies, tests).
    pub fn from_parts(
        blocks: SusceptanceBlocks,
        retained: Vec<u32>,
        devices: Vec<AdmittanceModel>,
        extra: Option<(u32, AdmittanceModel)>,
        tau: f64,
        omega0: f64,
    ) -> Result<Self> {
        if devices.len() != blocks.n() || retained.len() != blocks.n() {
            return Err(Error::config(format!(
                "model: need one device and one id per retained bus ({} buses, {} devices, {} ids)",
                blocks.n(),
                devices.len(),
                retained.len()
            )));
        }
        if blocks.has_extra() != extra.is_some() {
            return Err(Error::config("model: extra device presence must match the blocks"));
        }
        Ok(NetworkModel { omega0, tau, blocks, retained, devices, extra })
    }

    pub fn n(&self) -> usize {
        self.blocks.n()
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn blocks(&self) -> &SusceptanceBlocks {
        &self.blocks
    }

    pub fn retained(&self) -> &[u32] {
        &self.retained
    }

    pub fn devices(&self) -> &[AdmittanceModel] {
        &self.devices
    }

    pub fn extra(&self) -> Option<&(u32, AdmittanceModel)> {
        self.extra.as_ref()
    }

    /// Replace the extra device model (scenario studies).
    pub fn with_extra_model(mut self, model: AdmittanceModel) -> Result<Self> {
        match &mut self.extra {
            Some((_, m)) => {
                *m = model;
                Ok(self)
            }
            None => Err(Error::config("model: case has no extra device to replace")),
        }
    }

    pub fn z_inv(&self, s: Complex64) -> Result<CMat2> {
        eval_z_inv(s, self.tau, self.omega0)
    }

    /// Block-diagonal device admittance `Y~de(s)`, 2n x 2n, retained order.
    pub fn device_block(&self, s: Complex64) -> Result<CMat> {
        let n = self.n();
        let mut out = CMat::zeros(2 * n, 2 * n);
        for (k, m) in self.devices.iter().enumerate() {
            let y = m.eval(s).map_err(|e| {
                Error::numerical(format!("device at bus {}: {e}", self.retained[k]))
            })?;
            for r in 0..2 {
                for c in 0..2 {
                    out[(2 * k + r, 2 * k + c)] = y[(r, c)];
                }
            }
        }
        Ok(out)
    }

    /// Sensitivity of the extra device seen through its network coupling,
    /// i.e. the line-parameter identification `l_g = 1 / B4`.
    pub fn extra_sensitivity(&self, s: Complex64) -> Result<CMat2> {
        match (&self.extra, self.blocks.b4()) {
            (Some((bus, m)), Some(b4)) => {
                if !(b4 > 0.0) {
                    return Err(Error::config(format!(
                        "extra device at bus {bus}: B4 = {b4} must be > 0"
                    )));
                }
                let y = m.eval(s)?;
                let bracket =
                    ident2() + eval_z(s, self.tau, self.omega0) * y * Complex64::new(1.0 / b4, 0.0);
                invert2(&bracket, "extra-device sensitivity", s)
            }
            _ => Ok(ident2()),
        }
    }

    /// Absorb the extra device into the network, computing both printed
    /// forms of the reduced admittance and checking they agree to rtol 1e-9.
    pub fn absorb_device(&self, s: Complex64) -> Result<Absorbed> {
        let zi = self.z_inv(s)?;
        let b1 = self.blocks.b1();
        let eye_n = DMatrix::<f64>::identity(self.n(), self.n());

        let (b_net, y_net) = match (&self.extra, self.blocks.b4()) {
            (Some((bus, m)), Some(b4)) => {
                if !(b4 > 0.0) {
                    return Err(Error::config(format!(
                        "extra device at bus {bus}: B4 = {b4} must be > 0"
                    )));
                }
                // factored form through the sensitivity identity
                let sv = self.extra_sensitivity(s)?;
                let coupling = self.blocks.coupling().expect("extra present");
                let b_net = kron_block(&b1, &ident2()) - kron_block(&coupling, &sv);
                let y_net = kron_block(&eye_n, &zi) * &b_net;

                // direct Kron-elimination form
                let yx = m.eval(s)?;
                let bracket = invert2(&(zi * Complex64::new(b4, 0.0) + yx), "kron bracket", s)?;
                let direct = kron_block(&b1, &zi)
                    - kron_block(&self.blocks.b2(), &zi)
                        * CMat::from_fn(2, 2, |r, c| bracket[(r, c)])
                        * kron_block(&self.blocks.b3(), &zi);

                let diff = fro_norm(&(&direct - &y_net));
                let scale = fro_norm(&direct).max(fro_norm(&y_net)).max(1e-300);
                if diff > 1e-9 * scale {
                    return Err(Error::numerical_at(
                        format!(
                            "reduced-network dual forms disagree (rel {:.3e}); \
                             admittance convention bug or inconsistent device model",
                            diff / scale
                        ),
                        s,
                    ));
                }
                (b_net, y_net)
            }
            _ => {
                let b_net = kron_block(&b1, &ident2());
                let y_net = kron_block(&b1, &zi);
                (b_net, y_net)
            }
        };
        Ok(Absorbed { b_net, y_net })
    }

    /// Closed-loop admittance `Y~cl(s) = Y~net(s) + Y~de(s)`, 2n x 2n.
    pub fn closed_loop(&self, s: Complex64) -> Result<CMat> {
        let absorbed = self.absorb_device(s)?;
        Ok(absorbed.y_net + self.device_block(s)?)
    }

    /// Frequency shape of a unit disturbance-current injection at `bus`,
    /// expressed over the retained buses (2n x 1). Injection at the extra
    /// bus maps through the Kron coupling.
    pub fn injection_shape(&self, bus: u32, direction: [f64; 2], s: Complex64) -> Result<CMat> {
        let n = self.n();
        if let Some(k) = self.retained.iter().position(|b| *b == bus) {
            let mut v = CMat::zeros(2 * n, 1);
            v[(2 * k, 0)] = Complex64::new(direction[0], 0.0);
            v[(2 * k + 1, 0)] = Complex64::new(direction[1], 0.0);
            return Ok(v);
        }
        match (&self.extra, self.blocks.b4()) {
            (Some((xbus, m)), Some(b4)) if *xbus == bus => {
                let zi = self.z_inv(s)?;
                let yx = m.eval(s)?;
                let bracket = invert2(&(zi * Complex64::new(b4, 0.0) + yx), "kron bracket", s)?;
                let dir = bracket
                    * nalgebra::Vector2::new(
                        Complex64::new(direction[0], 0.0),
                        Complex64::new(direction[1], 0.0),
                    );
                let spread = kron_block(&self.blocks.b2(), &zi); // 2n x 2
                let mut v = CMat::zeros(2, 1);
                v[(0, 0)] = dir[0];
                v[(1, 0)] = dir[1];
                Ok(-(spread * v))
            }
            _ => Err(Error::config(format!(
                "disturbance bus {bus} is neither retained nor the extra bus"
            ))),
        }
    }

    /// Retained-bus voltage response `dU = Y~cl^-1(s) i` for an injection
    /// shape `i` (2n x 1).
    pub fn voltage_response(&self, s: Complex64, injection: &CMat) -> Result<CMat> {
        let ycl = self.closed_loop(s)?;
        solve(&ycl, injection, "closed-loop response", s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::converter::{ConverterSpec, FilterParams, Strategy};
    use approx::assert_relative_eq;

    const W0: f64 = 2.0 * std::f64::consts::PI * 60.0;

    fn minimal_case_json() -> String {
        serde_json::json!({
            "tau": 0.1,
            "buses": [1, 2],
            "branches": [{"from": 1, "to": 2, "l_pu": 0.5}],
            "devices": [{"bus": 1, "strategy": "static_admittance", "params": {"g": 1.0}}],
            "retained": [1],
            "extra_device": {"bus": 2, "strategy": "droop", "params": {}}
        })
        .to_string()
    }

    #[test]
    fn minimal_case_loads() {
        let case = load_case_str(&minimal_case_json()).unwrap();
        assert_eq!(case.retained, vec![1]);
        assert_eq!(case.extra_device.as_ref().unwrap().bus, 2);
        assert_relative_eq!(case.omega0, W0, max_relative = 1e-12);
    }

    #[test]
    fn zero_inductance_branch_rejected() {
        let bad = minimal_case_json().replace("0.5", "0.0");
        let err = load_case_str(&bad).unwrap_err();
        assert!(err.to_string().contains("l_pu"), "{err}");
    }

    #[test]
    fn disconnected_graph_rejected() {
        let json = serde_json::json!({
            "tau": 0.1,
            "buses": [1, 2, 3],
            "branches": [{"from": 1, "to": 2, "l_pu": 0.5}],
            "devices": [{"bus": 1, "strategy": "static_admittance"}],
            "retained": [1]
        })
        .to_string();
        let err = load_case_str(&json).unwrap_err();
        assert!(err.to_string().contains("disconnected"), "{err}");
    }

    #[test]
    fn duplicate_device_rejected() {
        let json = serde_json::json!({
            "tau": 0.1,
            "buses": [1, 2],
            "branches": [{"from": 1, "to": 2, "l_pu": 0.5}],
            "devices": [
                {"bus": 1, "strategy": "static_admittance"},
                {"bus": 1, "strategy": "droop"}
            ],
            "retained": [1, 2]
        })
        .to_string();
        let err = load_case_str(&json).unwrap_err();
        assert!(err.to_string().contains("duplicate device"), "{err}");
    }

    #[test]
    fn unknown_top_level_key_rejected() {
        let json = minimal_case_json().replace("\"tau\"", "\"bogus\": 1, \"tau\"");
        assert!(load_case_str(&json).is_err());
    }

    #[test]
    fn parallel_branches_merge() {
        let json = serde_json::json!({
            "tau": 0.1,
            "buses": [1, 2],
            "branches": [
                {"from": 1, "to": 2, "l_pu": 1.0},
                {"from": 2, "to": 1, "l_pu": 1.0}
            ],
            "devices": [{"bus": 1, "strategy": "static_admittance"}],
            "retained": [1]
        })
        .to_string();
        let case = load_case_str(&json).unwrap();
        assert_eq!(case.branches.len(), 1);
        assert_relative_eq!(case.branches[0].l_pu, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn susceptance_single_branch() {
        let json = minimal_case_json();
        let case = load_case_str(&json).unwrap();
        let blocks = build_susceptance(&case).unwrap();
        let b = blocks.matrix();
        assert_relative_eq!(b[(0, 0)], 2.0, max_relative = 1e-12);
        assert_relative_eq!(b[(0, 1)], -2.0, max_relative = 1e-12);
        assert_relative_eq!(b[(1, 1)], 2.0, max_relative = 1e-12);
        assert_eq!(blocks.b4(), Some(2.0));
    }

    #[test]
    fn susceptance_triangle_schur() {
        // unit-branch triangle, eliminate bus 3:
        // [[2,-1],[-1,2]] - (1/2)[[1],[1]][[1,1]] = [[1.5,-1.5],[-1.5,1.5]]
        let json = serde_json::json!({
            "tau": 0.0,
            "buses": [1, 2, 3],
            "branches": [
                {"from": 1, "to": 2, "l_pu": 1.0},
                {"from": 2, "to": 3, "l_pu": 1.0},
                {"from": 1, "to": 3, "l_pu": 1.0}
            ],
            "devices": [
                {"bus": 1, "strategy": "static_admittance"},
                {"bus": 2, "strategy": "static_admittance"}
            ],
            "retained": [1, 2]
        })
        .to_string();
        let case = load_case_str(&json).unwrap();
        let b = build_susceptance(&case).unwrap();
        let m = b.matrix();
        assert_relative_eq!(m[(0, 0)], 1.5, max_relative = 1e-12);
        assert_relative_eq!(m[(0, 1)], -1.5, max_relative = 1e-12);
        assert_relative_eq!(m[(1, 0)], -1.5, max_relative = 1e-12);
        assert_relative_eq!(m[(1, 1)], 1.5, max_relative = 1e-12);
    }

    #[test]
    fn susceptance_star_center_eliminated() {
        // three unit branches to an eliminated hub: B = (1/3)(3I - ones)
        let json = serde_json::json!({
            "tau": 0.0,
            "buses": [1, 2, 3, 9],
            "branches": [
                {"from": 9, "to": 1, "l_pu": 1.0},
                {"from": 9, "to": 2, "l_pu": 1.0},
                {"from": 9, "to": 3, "l_pu": 1.0}
            ],
            "devices": [
                {"bus": 1, "strategy": "static_admittance"},
                {"bus": 2, "strategy": "static_admittance"},
                {"bus": 3, "strategy": "static_admittance"}
            ],
            "retained": [1, 2, 3]
        })
        .to_string();
        let case = load_case_str(&json).unwrap();
        let b = build_susceptance(&case).unwrap();
        let m = b.matrix();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 2.0 / 3.0 } else { -1.0 / 3.0 };
                assert_relative_eq!(m[(i, j)], want, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn ieee39_case_loads_and_reduces() {
        let case = ieee39_case();
        assert_eq!(case.buses.len(), 39);
        assert_eq!(case.retained, vec![1, 2, 3, 4, 5, 6, 7, 8, 39]);
        assert_eq!(case.extra_device.as_ref().unwrap().bus, 9);
        let blocks = build_susceptance(&case).unwrap();
        assert_eq!(blocks.n(), 9);
        // bus 9 couples through branches 8-9 (0.0363) and 9-39 (0.0250)
        let b4 = blocks.b4().unwrap();
        assert_relative_eq!(b4, 1.0 / 0.0363 + 1.0 / 0.0250, max_relative = 1e-9);
    }

    #[test]
    fn device_block_of_static_units_is_identity() {
        let json = serde_json::json!({
            "tau": 0.1,
            "buses": [1, 2],
            "branches": [{"from": 1, "to": 2, "l_pu": 1.0}],
            "devices": [
                {"bus": 1, "strategy": "static_admittance"},
                {"bus": 2, "strategy": "static_admittance"}
            ],
            "retained": [1, 2]
        })
        .to_string();
        let model = NetworkModel::compile(&load_case_str(&json).unwrap()).unwrap();
        let yde = model.device_block(Complex64::new(0.0, 10.0)).unwrap();
        assert_eq!(yde, CMat::identity(4, 4));
    }

    #[test]
    fn absorb_without_extra_is_pure_network() {
        let json = serde_json::json!({
            "tau": 0.1,
            "buses": [1, 2],
            "branches": [{"from": 1, "to": 2, "l_pu": 1.0}],
            "devices": [
                {"bus": 1, "strategy": "static_admittance"},
                {"bus": 2, "strategy": "static_admittance", "params": {"g": 2.0}}
            ],
            "retained": [1, 2]
        })
        .to_string();
        let model = NetworkModel::compile(&load_case_str(&json).unwrap()).unwrap();
        let s = Complex64::new(0.0, 55.0);
        let a = model.absorb_device(s).unwrap();
        let zi = model.z_inv(s).unwrap();
        let want = kron_block(&model.blocks().b1(), &zi);
        assert!(fro_norm(&(&a.y_net - &want)) < 1e-14 * fro_norm(&want));
        assert_eq!(a.b_net, kron_block(&model.blocks().b1(), &ident2()));
    }

    #[test]
    fn absorb_zero_extra_is_passive_kron_reduction() {
        // Y_extra = 0 gives S_v = I and B~net = (B1 - B2 B3 / B4) (x) I2
        let json = serde_json::json!({
            "tau": 0.1,
            "buses": [1, 2, 3],
            "branches": [
                {"from": 1, "to": 3, "l_pu": 0.4},
                {"from": 2, "to": 3, "l_pu": 0.8}
            ],
            "devices": [
                {"bus": 1, "strategy": "static_admittance"},
                {"bus": 2, "strategy": "static_admittance"}
            ],
            "retained": [1, 2],
            "extra_device": {"bus": 3, "strategy": "static_admittance", "params": {"g": 0.0}}
        })
        .to_string();
        let case = load_case_str(&json).unwrap();
        let model = NetworkModel::compile(&case).unwrap();
        let blocks = model.blocks();
        let s = Complex64::new(0.0, 31.0);
        let a = model.absorb_device(s).unwrap();
        let reduced = blocks.b1() - blocks.coupling().unwrap();
        let want = kron_block(&reduced, &ident2());
        assert!(fro_norm(&(&a.b_net - &want)) < 1e-12 * fro_norm(&want).max(1.0));
    }

    #[test]
    fn closed_loop_degenerate_single_bus() {
        // synthetic: B1 = b scalar, one static device g: Ycl = g I + b Z^-1
        let blocks =
            SusceptanceBlocks::from_matrix(DMatrix::from_row_slice(1, 1, &[0.7]), false).unwrap();
        let spec = ConverterSpec::new(
            Strategy::StaticAdmittance { g: 2.0 },
            FilterParams::default(),
            crate::converter::OperatingPoint::no_load(),
        )
        .unwrap();
        let dev = build_admittance(&spec, W0).unwrap();
        let model =
            NetworkModel::from_parts(blocks, vec![1], vec![dev], None, 0.1, W0).unwrap();
        let s = Complex64::new(0.0, 12.0);
        let ycl = model.closed_loop(s).unwrap();
        let zi = model.z_inv(s).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let want = zi[(r, c)] * 0.7 + if r == c { Complex64::new(2.0, 0.0) } else { Complex64::new(0.0, 0.0) };
                assert_relative_eq!(ycl[(r, c)].re, want.re, max_relative = 1e-12);
                assert_relative_eq!(ycl[(r, c)].im, want.im, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn dual_form_check_catches_inconsistent_custom_device() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Arc;
        // a stateful evaluator returning different matrices per call breaks
        // the two-form agreement
        let counter = Arc::new(AtomicUsize::new(0));
        let c2 = counter.clone();
        let custom = crate::converter::CustomModel(Arc::new(move |_s| {
            let k = c2.fetch_add(1, Ordering::SeqCst);
            Ok(ident2() * Complex64::new(1.0 + 0.5 * k as f64, 0.0))
        }));
        let json = serde_json::json!({
            "tau": 0.1,
            "buses": [1, 2],
            "branches": [{"from": 1, "to": 2, "l_pu": 0.5}],
            "devices": [{"bus": 1, "strategy": "static_admittance"}],
            "retained": [1],
            "extra_device": {"bus": 2, "strategy": "static_admittance"}
        })
        .to_string();
        let case = load_case_str(&json).unwrap();
        let mut model = NetworkModel::compile(&case).unwrap();
        let spec = ConverterSpec::new(
            Strategy::Custom(custom),
            FilterParams::default(),
            crate::converter::OperatingPoint::no_load(),
        )
        .unwrap();
        model = model.with_extra_model(build_admittance(&spec, W0).unwrap()).unwrap();
        let err = model.absorb_device(Complex64::new(0.0, 10.0)).unwrap_err();
        assert!(err.to_string().contains("dual forms disagree"), "{err}");
    }

    #[test]
    fn set_device_rejects_unknown_bus() {
        let mut case = load_case_str(&minimal_case_json()).unwrap();
        let spec = ConverterSpec::with_defaults(Strategy::IdealSource).unwrap();
        assert!(case.set_device(999, spec.clone()).is_err());
        assert!(case.set_device(2, spec).is_ok());
    }
}

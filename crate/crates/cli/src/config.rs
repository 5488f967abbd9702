//! Run configuration: a TOML file whose every key is optional.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rydq_core::ensemble::{CloudGeometry, TrapMetadata};
use rydq_core::interactions::{self, Branch, PairModel};
use rydq_core::prep::PrepConfig;
use rydq_core::qubit::{MeasurementChannel, RabiConfig, RamseyConfig};
use rydq_core::telegraph::{self, TelegraphParams, Window};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("`{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub interactions: InteractionsSection,
    pub ensemble: EnsembleSection,
    pub prep: PrepSection,
    pub telegraph: TelegraphSection,
    pub readout: ReadoutSection,
    pub qubit: QubitSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 20_200_416,
            output_dir: PathBuf::from("rydq-out"),
            interactions: Default::default(),
            ensemble: Default::default(),
            prep: Default::default(),
            telegraph: Default::default(),
            readout: Default::default(),
            qubit: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InteractionsSection {
    pub rprime_c6_axial: f64,
    pub rprime_anisotropy: f64,
    pub rrprime_c6: f64,
    pub rrprime_c3: f64,
    pub three_photon_linewidth: f64,
    pub plus_branch_radius: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub r_points: usize,
    pub theta_points: usize,
}

impl Default for InteractionsSection {
    fn default() -> Self {
        Self {
            rprime_c6_axial: interactions::RPRIME_C6_AXIAL,
            rprime_anisotropy: interactions::RPRIME_ANISOTROPY,
            rrprime_c6: interactions::RRPRIME_C6,
            rrprime_c3: interactions::RRPRIME_C3,
            three_photon_linewidth: interactions::THREE_PHOTON_LINEWIDTH,
            plus_branch_radius: interactions::PLUS_BRANCH_RADIUS,
            r_min: 2.0,
            r_max: 30.0,
            r_points: 281,
            theta_points: 91,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
    pub n_atoms: u64,
    pub probe_angle_deg: f64,
    pub cross_section_reduction: f64,
    pub wavelength: f64,
    pub n_pairs: u64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let g = CloudGeometry::measured();
        Self {
            sigma_x: g.sigma_x,
            sigma_y: g.sigma_y,
            sigma_z: g.sigma_z,
            n_atoms: g.n_atoms,
            probe_angle_deg: g.probe_angle_xy.to_degrees(),
            cross_section_reduction: g.cross_section_reduction,
            wavelength: g.wavelength,
            n_pairs: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepSection {
    pub delta_e: f64,
    pub delta_r: f64,
    pub delta_r_sign: f64,
    pub omega_p_peak: f64,
    pub omega_c_peak: f64,
    pub omega_mw: f64,
    pub duration: f64,
    pub gamma_e: f64,
    pub ramp_time: f64,
    pub mw_ramp_time: f64,
    pub mw_rampdown: bool,
    pub dt: f64,
    pub scan_half_span: f64,
    pub scan_points: usize,
}

impl Default for PrepSection {
    fn default() -> Self {
        let p = PrepConfig::default();
        Self {
            delta_e: p.delta_e,
            delta_r: p.delta_r,
            delta_r_sign: p.delta_r_sign,
            omega_p_peak: p.omega_p_peak,
            omega_c_peak: p.omega_c_peak,
            omega_mw: p.omega_mw,
            duration: p.duration,
            gamma_e: p.gamma_e,
            ramp_time: p.ramp_time,
            mw_ramp_time: p.mw_ramp_time,
            mw_rampdown: p.mw_rampdown,
            dt: 2e-3,
            scan_half_span: 3.0,
            scan_points: 61,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TelegraphSection {
    pub r_high: f64,
    /// Calibrated against `target_fd` when absent.
    pub r_low: Option<f64>,
    pub target_fd: f64,
    pub gamma_loss: f64,
    pub gamma_imp: f64,
    pub f_prep: f64,
    pub collection_eff: f64,
    pub detection_eff: f64,
    pub impurity_in_unprepared_fraction: bool,
    pub window_len: f64,
    pub n_shots: usize,
    pub trace_shots: usize,
    pub trace_len: f64,
}

impl Default for TelegraphSection {
    fn default() -> Self {
        let p = TelegraphParams::default();
        Self {
            r_high: p.r_high,
            r_low: None,
            target_fd: rydq_core::readout::TARGET_FD,
            gamma_loss: p.gamma_loss,
            gamma_imp: p.gamma_imp,
            f_prep: p.f_prep,
            collection_eff: p.collection_eff,
            detection_eff: p.detection_eff,
            impurity_in_unprepared_fraction: p.impurity_in_unprepared_fraction,
            window_len: telegraph::WINDOW_LEN,
            n_shots: 100_000,
            trace_shots: 20_000,
            trace_len: 18.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutSection {
    /// Optimal balanced-fidelity threshold when absent.
    pub threshold: Option<u64>,
    pub table_shots: usize,
    pub fit_shots: usize,
    pub fit_starts: Vec<f64>,
    pub fit_restarts: usize,
    pub fit_gamma_imp: bool,
    pub sweep_rates: Vec<f64>,
    pub sweep_windows: Vec<f64>,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        Self {
            threshold: None,
            table_shots: 100_000,
            fit_shots: 2000,
            fit_starts: vec![0.0, 6.0, 12.0, 18.0],
            fit_restarts: 8,
            fit_gamma_imp: false,
            sweep_rates: (2..=16).map(f64::from).collect(),
            sweep_windows: (6..=16).map(|k| 0.5 * f64::from(k)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QubitSection {
    pub omega: f64,
    pub mw_frequency: f64,
    pub spectator_suppression: f64,
    pub b_field_gauss: f64,
    pub n_repetitions: u64,
    pub rabi_t_max: f64,
    pub rabi_points: usize,
    /// Detection fidelity of the operating point when absent.
    pub f_det: Option<f64>,
    pub t2_star: f64,
    pub amplitude: f64,
    pub n_phases: usize,
    pub ramsey_shots_per_phase: u64,
    pub ramsey_taus: Vec<f64>,
    pub washout_pairs: u64,
    pub washout_t_max: f64,
    pub washout_points: usize,
}

impl Default for QubitSection {
    fn default() -> Self {
        let r = RabiConfig::default();
        let s = RamseyConfig::default();
        Self {
            omega: r.omega,
            mw_frequency: r.mw_frequency,
            spectator_suppression: r.spectator_suppression,
            b_field_gauss: 9.0,
            n_repetitions: r.n_repetitions,
            rabi_t_max: 0.6,
            rabi_points: 61,
            f_det: None,
            t2_star: s.t2_star,
            amplitude: s.amplitude,
            n_phases: s.phase_grid.len(),
            ramsey_shots_per_phase: 150,
            ramsey_taus: (0..8).map(|k| 3.0 * f64::from(k)).collect(),
            washout_pairs: 20_000,
            washout_t_max: 0.5,
            washout_points: 101,
        }
    }
}

fn core_error(section: &str, e: rydq_core::Error) -> ConfigError {
    match e {
        rydq_core::Error::InvalidParameter { name, reason } => {
            invalid(format!("{section}.{name}"), reason)
        }
        other => invalid(section, other.to_string()),
    }
}

fn check(cond: bool, field: &str, reason: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(invalid(field, reason))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fails only for seeds above i64::MAX, which TOML integers cannot hold.
    pub fn to_toml_string(&self) -> Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let i = &self.interactions;
        self.pair_model(Branch::Plus)
            .map_err(|e| core_error("interactions", e))?;
        self.rprime_model()
            .map_err(|e| core_error("interactions", e))?;
        check(
            i.three_photon_linewidth > 0.0,
            "interactions.three_photon_linewidth",
            "must be > 0",
        )?;
        check(
            i.plus_branch_radius > 0.0,
            "interactions.plus_branch_radius",
            "must be > 0",
        )?;
        check(
            i.r_min > 0.0 && i.r_max > i.r_min,
            "interactions.r_max",
            "need 0 < r_min < r_max",
        )?;
        check(i.r_points >= 2, "interactions.r_points", "must be >= 2")?;
        check(i.theta_points >= 2, "interactions.theta_points", "must be >= 2")?;

        self.geometry()
            .validate()
            .map_err(|e| core_error("ensemble", e))?;
        check(self.ensemble.n_pairs >= 1000, "ensemble.n_pairs", "must be >= 1000")?;

        self.prep_config()
            .validate()
            .map_err(|e| core_error("prep", e))?;
        let p = &self.prep;
        check(p.dt > 0.0 && p.dt <= p.duration, "prep.dt", "must lie in (0, duration]")?;
        check(p.scan_half_span > 0.0, "prep.scan_half_span", "must be > 0")?;
        check(p.scan_points >= 3, "prep.scan_points", "must be >= 3")?;

        let t = &self.telegraph;
        self.telegraph_params(t.r_low.unwrap_or(0.5 * t.r_high))
            .validate()
            .map_err(|e| core_error("telegraph", e))?;
        check(
            (0.5..1.0).contains(&t.target_fd),
            "telegraph.target_fd",
            "must lie in [0.5, 1)",
        )?;
        Window::new(0.0, t.window_len).map_err(|_| invalid("telegraph.window_len", "must be > 0"))?;
        check(t.n_shots > 0, "telegraph.n_shots", "must be > 0")?;
        check(t.trace_shots > 0, "telegraph.trace_shots", "must be > 0")?;
        check(t.trace_len > 0.0, "telegraph.trace_len", "must be > 0")?;

        let r = &self.readout;
        check(r.table_shots > 0, "readout.table_shots", "must be > 0")?;
        check(r.fit_shots > 0, "readout.fit_shots", "must be > 0")?;
        check(
            !r.fit_starts.is_empty() && r.fit_starts.iter().all(|s| s.is_finite() && *s >= 0.0),
            "readout.fit_starts",
            "need at least one finite start >= 0",
        )?;
        check(
            !r.sweep_rates.is_empty() && r.sweep_rates.iter().all(|x| *x > 0.0),
            "readout.sweep_rates",
            "need positive rates",
        )?;
        check(
            !r.sweep_windows.is_empty() && r.sweep_windows.iter().all(|x| *x > 0.0),
            "readout.sweep_windows",
            "need positive window lengths",
        )?;

        let q = &self.qubit;
        self.rabi_config()
            .validate()
            .map_err(|e| core_error("qubit", e))?;
        self.ramsey_config()
            .validate()
            .map_err(|e| core_error("qubit", e))?;
        check(
            q.b_field_gauss.is_finite() && q.b_field_gauss >= 0.0,
            "qubit.b_field_gauss",
            "must be >= 0",
        )?;
        if let Some(fd) = q.f_det {
            MeasurementChannel::new(t.f_prep, fd).map_err(|e| core_error("qubit", e))?;
            check(fd > 0.5, "qubit.f_det", "must exceed 0.5")?;
        }
        check(q.rabi_t_max > 0.0, "qubit.rabi_t_max", "must be > 0")?;
        check(q.rabi_points >= 8, "qubit.rabi_points", "must be >= 8")?;
        check(q.n_phases >= 3, "qubit.n_phases", "must be >= 3")?;
        check(
            q.ramsey_shots_per_phase >= 1,
            "qubit.ramsey_shots_per_phase",
            "must be >= 1",
        )?;
        check(
            q.ramsey_taus.len() >= 5 && q.ramsey_taus.iter().all(|x| *x >= 0.0),
            "qubit.ramsey_taus",
            "need at least 5 delays >= 0",
        )?;
        check(q.washout_pairs >= 1000, "qubit.washout_pairs", "must be >= 1000")?;
        check(q.washout_t_max > 0.0, "qubit.washout_t_max", "must be > 0")?;
        check(q.washout_points >= 2, "qubit.washout_points", "must be >= 2")
    }

    pub fn pair_model(&self, branch: Branch) -> rydq_core::Result<PairModel> {
        PairModel::exchange_plus_vdw(
            self.interactions.rrprime_c6,
            self.interactions.rrprime_c3,
            branch,
        )
    }

    pub fn rprime_model(&self) -> rydq_core::Result<PairModel> {
        PairModel::anisotropic_vdw(
            self.interactions.rprime_c6_axial,
            self.interactions.rprime_anisotropy,
        )
    }

    pub fn geometry(&self) -> CloudGeometry {
        let e = &self.ensemble;
        CloudGeometry {
            sigma_x: e.sigma_x,
            sigma_y: e.sigma_y,
            sigma_z: e.sigma_z,
            n_atoms: e.n_atoms,
            probe_angle_xy: e.probe_angle_deg.to_radians(),
            cross_section_reduction: e.cross_section_reduction,
            wavelength: e.wavelength,
            metadata: TrapMetadata::default(),
        }
    }

    pub fn prep_config(&self) -> PrepConfig {
        let p = &self.prep;
        PrepConfig {
            delta_e: p.delta_e,
            delta_r: p.delta_r,
            delta_r_sign: p.delta_r_sign,
            omega_p_peak: p.omega_p_peak,
            omega_c_peak: p.omega_c_peak,
            omega_mw: p.omega_mw,
            duration: p.duration,
            three_photon_detuning: 0.0,
            gamma_e: p.gamma_e,
            ramp_time: p.ramp_time,
            mw_ramp_time: p.mw_ramp_time,
            mw_rampdown: p.mw_rampdown,
            custom: None,
        }
    }

    pub fn telegraph_params(&self, r_low: f64) -> TelegraphParams {
        let t = &self.telegraph;
        TelegraphParams {
            r_high: t.r_high,
            r_low,
            gamma_loss: t.gamma_loss,
            gamma_imp: t.gamma_imp,
            f_prep: t.f_prep,
            collection_eff: t.collection_eff,
            detection_eff: t.detection_eff,
            impurity_in_unprepared_fraction: t.impurity_in_unprepared_fraction,
        }
    }

    /// Rabi drive with the spectator detuned by the P3/2 Zeeman splitting.
    pub fn rabi_config(&self) -> RabiConfig {
        let q = &self.qubit;
        let split = rydq_core::qubit::zeeman_splittings(q.b_field_gauss.max(0.0))
            .map(|z| z.p32_mhz)
            .unwrap_or(f64::NAN);
        RabiConfig {
            omega: q.omega,
            mw_frequency: q.mw_frequency,
            spectator_detuning: split,
            spectator_suppression: q.spectator_suppression,
            include_spectator: true,
            n_repetitions: q.n_repetitions,
        }
    }

    pub fn ramsey_config(&self) -> RamseyConfig {
        let q = &self.qubit;
        let n = q.n_phases.max(1);
        RamseyConfig {
            t2_star: q.t2_star,
            amplitude: q.amplitude,
            phase_grid: (0..n)
                .map(|k| 2.0 * std::f64::consts::PI * k as f64 / n as f64)
                .collect(),
        }
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON form. The
    /// output directory is a location, not content, and is left out.
    pub fn hash(&self) -> String {
        let content = RunConfig {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let canonical = serde_json::to_vec(&content).expect("config is serializable");
        let digest = Sha256::digest(&canonical);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::from_toml_str(&text, path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProvenanceEntry {
    pub value: serde_json::Value,
    pub default: serde_json::Value,
    pub source: &'static str,
}

const MEASURED: &str = "measured value of the experiment";
const CALIBRATED: &str = "calibrated so that the model reproduces a measured figure of merit";
const CHOICE: &str = "modelling or numerical choice";
const DERIVED: &str = "derived from other defaults";
const ARTIFACT: &str = "run plumbing";

fn source_of(key: &str) -> &'static str {
    match key {
        "master_seed" => ARTIFACT,
        "interactions.rprime_c6_axial"
        | "interactions.rprime_anisotropy"
        | "interactions.rrprime_c6"
        | "interactions.rrprime_c3"
        | "interactions.three_photon_linewidth"
        | "interactions.plus_branch_radius" => MEASURED,
        "ensemble.sigma_x" | "ensemble.sigma_y" | "ensemble.sigma_z" | "ensemble.n_atoms"
        | "ensemble.probe_angle_deg" | "ensemble.cross_section_reduction"
        | "ensemble.wavelength" => MEASURED,
        "prep.delta_e" | "prep.delta_r" | "prep.omega_c_peak" | "prep.duration" => MEASURED,
        "prep.omega_p_peak" | "prep.omega_mw" | "prep.ramp_time" | "prep.mw_ramp_time"
        | "prep.mw_rampdown" | "prep.gamma_e" | "prep.delta_r_sign" => CHOICE,
        "telegraph.r_high" | "telegraph.gamma_loss" | "telegraph.gamma_imp"
        | "telegraph.f_prep" | "telegraph.collection_eff" | "telegraph.detection_eff"
        | "telegraph.window_len" | "telegraph.target_fd" => MEASURED,
        "telegraph.r_low" => CALIBRATED,
        "readout.threshold" | "readout.fit_starts" | "readout.fit_shots" => CHOICE,
        "qubit.omega" | "qubit.mw_frequency" | "qubit.spectator_suppression"
        | "qubit.n_repetitions" | "qubit.t2_star" | "qubit.amplitude" => MEASURED,
        "qubit.b_field_gauss" => CALIBRATED,
        "qubit.f_det" => DERIVED,
        _ => CHOICE,
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, serde_json::Value>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, child, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

/// Flattened keys, without the output directory.
fn flat(cfg: &RunConfig) -> BTreeMap<String, serde_json::Value> {
    let mut out = BTreeMap::new();
    flatten(
        "",
        &serde_json::to_value(cfg).expect("config is serializable"),
        &mut out,
    );
    out.remove("output_dir");
    out
}

/// Value, default and source class of every configuration key.
pub fn provenance(cfg: &RunConfig) -> BTreeMap<String, ProvenanceEntry> {
    let defaults = flat(&RunConfig::default());
    flat(cfg)
        .into_iter()
        .map(|(k, value)| {
            let entry = ProvenanceEntry {
                default: defaults.get(&k).cloned().unwrap_or(serde_json::Value::Null),
                source: source_of(&k),
                value,
            };
            (k, entry)
        })
        .collect()
}

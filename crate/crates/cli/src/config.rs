//! Experiment configuration: one JSON document, validated before anything runs.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use qfsim_core::control::{ControlMode, ControlScheme, CorrectionRule};
use qfsim_core::filter::{FilterMode, Integrator, PhaseLaw};
use qfsim_core::lindblad::{laser_modified_generator, make_rf_generator, rf_laser_amplitude, Drive, GeneratorSpec};
use qfsim_core::linops::qubit;
use qfsim_core::squeeze::{make_squeeze, SqueezeParams};
use qfsim_core::{CMat, DensityMatrix, Error as CoreError, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    Master,
    Count,
    Homodyne,
    LoCount,
    Squeezed,
    Control,
    DaviesOracle,
    Stats,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Master => "master",
            Experiment::Count => "count",
            Experiment::Homodyne => "homodyne",
            Experiment::LoCount => "lo_count",
            Experiment::Squeezed => "squeezed",
            Experiment::Control => "control",
            Experiment::DaviesOracle => "davies_oracle",
            Experiment::Stats => "stats",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Excited,
    Ground,
    Plus,
    PlusY,
    Mixed,
    Bloch { theta: f64, phi: f64 },
}

/// Operator carried by the side channel; the forward channel always carries
/// the lowering operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideCoupling {
    Decay,
    SigmaX,
    SigmaY,
    SigmaZ,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub omega: f64,
    pub kappa_f: f64,
    pub kappa_s: f64,
    pub n: f64,
    pub c_re: f64,
    pub c_im: f64,
    pub phi0: f64,
    pub omega_lo: f64,
    pub epsilon: f64,
    pub initial: InitialState,
    pub coupling: SideCoupling,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            omega: 1.0,
            kappa_f: 0.5f64.sqrt(),
            kappa_s: 0.5f64.sqrt(),
            n: 0.0,
            c_re: 0.0,
            c_im: 0.0,
            phi0: 0.0,
            omega_lo: 0.0,
            epsilon: 0.1,
            initial: InitialState::Excited,
            coupling: SideCoupling::Decay,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorName {
    EulerMaruyama,
    Milstein,
    #[default]
    Exponential,
}

impl From<IntegratorName> for Integrator {
    fn from(n: IntegratorName) -> Self {
        match n {
            IntegratorName::EulerMaruyama => Integrator::EulerMaruyama,
            IntegratorName::Milstein => Integrator::Milstein,
            IntegratorName::Exponential => Integrator::Exponential,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Correction interval; defaults to `dt`.
    pub tau: Option<f64>,
    pub n_traj: u64,
    pub seed: u64,
    pub integrator: IntegratorName,
    /// Ensemble output keeps every `stride`-th grid point.
    pub stride: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 1.0,
            tau: None,
            n_traj: 100,
            seed: 0,
            integrator: IntegratorName::Exponential,
            stride: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlModeName {
    EssentiallyCommutative,
    #[default]
    UnsqueezedDecay,
    Squeezed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    #[default]
    Feedback,
    Identity,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub mode: ControlModeName,
    pub rule: RuleName,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub physics: Physics,
    pub numerics: Numerics,
    pub control: ControlSection,
    pub output: OutputSpec,
}

#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    Parse(String),
    Constraint { rule: &'static str, detail: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Constraint { rule, detail } => write!(f, "config violates the {rule} rule: {detail}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn constraint(rule: &'static str, detail: impl Into<String>) -> ConfigError {
    ConfigError::Constraint {
        rule,
        detail: detail.into(),
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.physics;
        let n = &self.numerics;
        let finite = [
            p.omega, p.kappa_f, p.kappa_s, p.n, p.c_re, p.c_im, p.phi0, p.omega_lo, p.epsilon, n.dt, n.horizon,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(constraint("finiteness", "all numeric fields must be finite"));
        }
        let total = p.kappa_f * p.kappa_f + p.kappa_s * p.kappa_s;
        if (total - 1.0).abs() > 1e-9 {
            return Err(constraint(
                "normalization",
                format!("kappa_f^2 + kappa_s^2 must equal 1, got {total}"),
            ));
        }
        if p.omega != 0.0 && p.kappa_f == 0.0 {
            return Err(constraint("laser drive", "a nonzero omega needs kappa_f != 0"));
        }
        if p.n < 0.0 {
            return Err(constraint("occupation", format!("n must be non-negative, got {}", p.n)));
        }
        self.squeeze()?;
        if !(p.epsilon > 0.0) {
            return Err(constraint(
                "oscillator scale",
                format!("epsilon must be positive, got {}", p.epsilon),
            ));
        }
        if !(n.dt > 0.0) {
            return Err(constraint("time step", format!("dt must be positive, got {}", n.dt)));
        }
        if !(n.horizon >= 0.0) {
            return Err(constraint(
                "horizon",
                format!("T must be non-negative, got {}", n.horizon),
            ));
        }
        qfsim_core::filter::grid_steps(n.dt, n.horizon).map_err(|e| constraint("grid", e.to_string()))?;
        if n.stride == 0 {
            return Err(constraint("stride", "stride must be at least 1"));
        }
        if let Some(tau) = n.tau {
            if !(tau > 0.0) {
                return Err(constraint(
                    "correction interval",
                    format!("tau must be positive, got {tau}"),
                ));
            }
        }
        if let InitialState::Bloch { theta, phi } = p.initial {
            if !(theta.is_finite() && phi.is_finite()) {
                return Err(constraint("finiteness", "Bloch angles must be finite"));
            }
        }
        if self.experiment == Some(Experiment::Control) {
            let scheme = self
                .control_scheme()
                .map_err(|e| constraint("control", e.to_string()))?;
            scheme
                .steps_per_interval(n.dt)
                .map_err(|e| constraint("correction interval", e.to_string()))?;
        }
        Ok(())
    }

    pub fn squeeze(&self) -> Result<SqueezeParams, ConfigError> {
        let p = &self.physics;
        make_squeeze(p.n, C64::new(p.c_re, p.c_im)).map_err(|e| match e {
            CoreError::FockCondition(r) => constraint(
                "Fock condition",
                format!(
                    "n(n+1) must equal |c|^2 (n = {}, |c|^2 = {}, residual {r:e})",
                    p.n,
                    p.c_re * p.c_re + p.c_im * p.c_im
                ),
            ),
            other => constraint("squeezing", other.to_string()),
        })
    }

    pub fn initial_state(&self) -> DensityMatrix {
        match self.physics.initial {
            InitialState::Excited => qubit::excited(),
            InitialState::Ground => qubit::ground(),
            InitialState::Plus => qubit::plus(),
            InitialState::PlusY => qubit::plus_y(),
            InitialState::Mixed => DensityMatrix::maximally_mixed(2),
            InitialState::Bloch { theta, phi } => qubit::bloch(theta, phi),
        }
    }

    /// Two-channel generator: forward `κ_f σ₋` carrying the laser, side
    /// `κ_s` times the configured operator.
    pub fn generator(&self) -> qfsim_core::Result<GeneratorSpec> {
        let p = &self.physics;
        let kf = C64::new(p.kappa_f, 0.0);
        let ks = C64::new(p.kappa_s, 0.0);
        let side = match p.coupling {
            SideCoupling::Decay => return make_rf_generator(p.omega, kf, ks),
            SideCoupling::SigmaX => qubit::sigma_x(),
            SideCoupling::SigmaY => qubit::sigma_y(),
            SideCoupling::SigmaZ => qubit::sigma_z(),
        };
        let gen = GeneratorSpec::new(CMat::zeros(2), vec![qubit::lowering().scale(kf), side.scale(ks)])?
            .with_forward(0)?
            .with_side(1)?;
        if p.omega == 0.0 {
            return Ok(gen);
        }
        laser_modified_generator(&gen, Drive::Constant(rf_laser_amplitude(p.omega, kf)))
    }

    pub fn phase(&self) -> PhaseLaw {
        PhaseLaw {
            phi0: self.physics.phi0,
            omega_lo: self.physics.omega_lo,
        }
    }

    /// Filter mode of the trajectory experiments.
    pub fn filter_mode(&self, experiment: Experiment) -> qfsim_core::Result<FilterMode> {
        Ok(match experiment {
            Experiment::Homodyne => FilterMode::Homodyne { phase: self.phase() },
            Experiment::LoCount => FilterMode::LoCounting {
                epsilon: self.physics.epsilon,
                phase: self.phase(),
            },
            Experiment::Squeezed => {
                FilterMode::Squeezed(self.squeeze().map_err(|e| CoreError::InvalidSpec(e.to_string()))?)
            }
            _ => FilterMode::Counting,
        })
    }

    pub fn control_scheme(&self) -> qfsim_core::Result<ControlScheme> {
        let mode = match self.control.mode {
            ControlModeName::EssentiallyCommutative => ControlMode::EssentiallyCommutative,
            ControlModeName::UnsqueezedDecay => ControlMode::UnsqueezedDecay,
            ControlModeName::Squeezed => {
                ControlMode::Squeezed(self.squeeze().map_err(|e| CoreError::InvalidSpec(e.to_string()))?)
            }
        };
        let rule = match self.control.rule {
            RuleName::Feedback => CorrectionRule::Feedback,
            RuleName::Identity => CorrectionRule::Identity,
        };
        Ok(ControlScheme::new(mode, self.numerics.tau.unwrap_or(self.numerics.dt))?
            .with_rule(rule)
            .with_integrator(self.numerics.integrator.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config_str(r#"{"experiment": "master"}"#).unwrap();
        assert_eq!(cfg.numerics.dt, 1e-3);
        assert_eq!(cfg.numerics.seed, 0);
        assert_eq!(cfg.experiment, Some(Experiment::Master));
        assert_eq!(cfg.output.formats, vec![Format::Csv, Format::Json]);
    }

    #[test]
    fn normalization_rule_is_named() {
        let kf = 0.6f64;
        let ks = (0.9 - kf * kf).sqrt();
        let text = format!(r#"{{"physics": {{"kappa_f": {kf}, "kappa_s": {ks}}}}}"#);
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.contains("normalization"), "{err}");
    }

    #[test]
    fn fock_rule_is_named() {
        let err = parse_config_str(r#"{"physics": {"n": 1, "c_re": 2}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("Fock condition"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let err = parse_config_str("{\n  \"numerics\": {\"dtt\": 0.1}\n}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("dtt") && err.contains("line 2"), "{err}");
        assert!(parse_config_str(r#"{"extra": 1}"#).is_err());
    }

    #[test]
    fn grid_and_interval_rules() {
        assert!(parse_config_str(r#"{"numerics": {"dt": 0.3, "T": 1.0}}"#).is_err());
        let err = parse_config_str(r#"{"experiment": "control", "numerics": {"tau": 0.0025}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("correction interval"), "{err}");
    }

    #[test]
    fn generators_follow_the_coupling_choice() {
        let cfg = parse_config_str(r#"{"physics": {"coupling": "sigma_x", "omega": 0}}"#).unwrap();
        let g = cfg.generator().unwrap();
        assert!(g.side_coupling().unwrap().hermitian_residual() < 1e-15);
        let rf = ExperimentConfig::default().generator().unwrap();
        assert!(rf.drive().is_some());
    }

    #[test]
    fn bloch_initial_state_parses() {
        let cfg = parse_config_str(r#"{"physics": {"initial": {"bloch": {"theta": 1.0, "phi": 0.5}}}}"#).unwrap();
        assert!((cfg.initial_state().purity() - 1.0).abs() < 1e-12);
    }
}

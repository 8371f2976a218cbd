//! Experiment runners. Each one writes its files under the output directory
//! and reports named metrics with the bounds they are checked against.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use qfsim_core::control::{effective_generator, freezing_error, ControlLoop, CorrectionRule};
use qfsim_core::davies::{davies_generator, DaviesProcess, RfParams, SimplexQuadrature};
use qfsim_core::filter::{trajectory_rng, Filter, FilterSpec, MeasurementRecord};
use qfsim_core::lindblad::propagate_master;
use qfsim_core::linops::qubit;
use qfsim_core::stats::{
    coincidence_rate, extract_intervals, fold_ordered, ks_distance, martingale_residual, mean_and_stderr, pearson,
    EnsembleSummary, StateAccumulator,
};
use qfsim_core::{superop_exp, CMat, DensityMatrix, Error as CoreError, C64};

use crate::config::{ConfigError, Experiment, ExperimentConfig, Format, SideCoupling};
use crate::output::{write_ensemble, write_json, write_states, write_table, write_with};

/// Acceptance-style metric: `pass` is `value ≤ bound` unless stated otherwise.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Metric {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }

    /// Reported without a bound; always passes unless non-finite.
    fn info(name: &str, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: f64::INFINITY,
            pass: value.is_finite(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub experiment: Experiment,
    pub metrics: Vec<Metric>,
    /// Paths relative to the output directory, in write order.
    pub files: Vec<String>,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.metrics.iter().all(|m| m.pass)
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    /// A numeric guard tripped; the message carries trajectory, step and state.
    Numeric(String),
    Other(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Numeric(m) => write!(f, "numeric guard: {m}"),
            RunError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Other(format!("I/O error: {e}"))
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NumericGuard { .. }
            | CoreError::RateTooLarge(_)
            | CoreError::ImpossibleJump { .. }
            | CoreError::NonFinite => RunError::Numeric(e.to_string()),
            CoreError::InvalidSpec(_)
            | CoreError::Normalization(_)
            | CoreError::DivergentDrive
            | CoreError::FockCondition(_)
            | CoreError::NegativeOccupation(_)
            | CoreError::ComplexSqueezing(_)
            | CoreError::NotEssentiallyCommutative
            | CoreError::MissingSideCoupling
            | CoreError::MissingForwardCoupling
            | CoreError::ZeroDrive => RunError::Config(ConfigError::Constraint {
                rule: "model",
                detail: e.to_string(),
            }),
            other => RunError::Other(other.to_string()),
        }
    }
}

/// Adds the trajectory index, the failing step and the last good state to a
/// numeric error.
fn with_context(index: u64, last: Option<(usize, &DensityMatrix)>, e: CoreError) -> CoreError {
    let state = last.map_or_else(String::new, |(_, s)| {
        let entries: Vec<String> = s.mat().as_slice().iter().map(|z| z.to_string()).collect();
        format!("; state before the step (row-major) [{}]", entries.join(", "))
    });
    let at = last.map_or(0, |(k, _)| k);
    match e {
        CoreError::NumericGuard { step, reason } => CoreError::NumericGuard {
            step,
            reason: format!("trajectory {index}: {reason}{state}"),
        },
        CoreError::ImpossibleJump { step } => CoreError::NumericGuard {
            step,
            reason: format!("trajectory {index}: record demands an impossible jump{state}"),
        },
        CoreError::RateTooLarge(_) | CoreError::NonFinite => CoreError::NumericGuard {
            step: at,
            reason: format!("trajectory {index}: {e}{state}"),
        },
        other => other,
    }
}

struct Sink<'a> {
    dir: &'a Path,
    csv: bool,
    files: Vec<String>,
}

impl Sink<'_> {
    fn path(&mut self, name: &str) -> Option<PathBuf> {
        if !self.csv {
            return None;
        }
        self.files.push(name.to_string());
        Some(self.dir.join(name))
    }
}

/// Runs `experiment` with `cfg` and writes its files under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, experiment: Experiment, out_dir: &Path) -> Result<RunReport, RunError> {
    if let Some(declared) = cfg.experiment {
        if declared != experiment {
            return Err(RunError::Config(ConfigError::Constraint {
                rule: "experiment",
                detail: format!(
                    "config declares {} but {} was requested",
                    declared.name(),
                    experiment.name()
                ),
            }));
        }
    }
    let mut cfg = cfg.clone();
    cfg.experiment = Some(experiment);
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut sink = Sink {
        dir: out_dir,
        csv: cfg.output.formats.contains(&Format::Csv),
        files: Vec::new(),
    };
    let metrics = match experiment {
        Experiment::Master => master(&cfg, &mut sink)?,
        Experiment::Count | Experiment::Homodyne | Experiment::LoCount | Experiment::Squeezed => {
            trajectories(&cfg, experiment, &mut sink)?
        }
        Experiment::Control => control(&cfg, &mut sink)?,
        Experiment::DaviesOracle => davies_oracle(&cfg, &mut sink)?,
        Experiment::Stats => stats(&cfg, &mut sink)?,
    };
    let mut files = sink.files;
    if cfg.output.formats.contains(&Format::Json) {
        files.push("summary.json".into());
        let summary = json!({
            "experiment": experiment.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "seed": cfg.numerics.seed,
            "config": cfg,
            "metrics": metrics,
            "files": files,
        });
        write_json(&out_dir.join("summary.json"), &summary)?;
    }
    Ok(RunReport {
        experiment,
        metrics,
        files,
    })
}

fn grid(cfg: &ExperimentConfig) -> Vec<f64> {
    let n = &cfg.numerics;
    let steps = (n.horizon / n.dt).round() as usize;
    (0..=steps).step_by(n.stride).map(|k| k as f64 * n.dt).collect()
}

fn master(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Vec<Metric>, RunError> {
    let gen = cfg.generator()?;
    let rho0 = cfg.initial_state();
    let times = grid(cfg);
    let states: Vec<DensityMatrix> = times
        .iter()
        .map(|&t| propagate_master(&gen, &rho0, t))
        .collect::<Result<_, _>>()?;
    let mats: Vec<CMat> = states.iter().map(|s| s.mat().clone()).collect();
    if let Some(p) = sink.path("state.csv") {
        write_states(&p, gen.dim(), &times, &mats)?;
    }
    let trace_err = mats
        .iter()
        .map(|m| (m.trace() - C64::new(1.0, 0.0)).norm())
        .fold(0.0, f64::max);
    let min_eig = states.iter().map(|s| s.min_eigenvalue()).fold(f64::INFINITY, f64::min);
    Ok(vec![
        Metric::at_most("max_trace_error", trace_err, 1e-10),
        Metric::at_most("negativity", (-min_eig).max(0.0), 1e-10),
    ])
}

/// Per-trajectory results kept for the ensemble and the martingale checks.
struct Member {
    sampled: Vec<CMat>,
    full: Option<Vec<CMat>>,
    record: MeasurementRecord,
    innovation_sum: f64,
    martingale_end: f64,
}

fn trajectories(cfg: &ExperimentConfig, experiment: Experiment, sink: &mut Sink) -> Result<Vec<Metric>, RunError> {
    let gen = cfg.generator()?;
    let rho0 = cfg.initial_state();
    let n = &cfg.numerics;
    let spec = FilterSpec::new(cfg.filter_mode(experiment)?, n.dt, n.horizon)?.with_integrator(n.integrator.into());
    let filter = Filter::new(&spec, &gen)?;
    let stride = n.stride;
    let times = grid(cfg);
    let all_times: Vec<f64> = (0..=filter.steps()).map(|k| k as f64 * n.dt).collect();
    let observable = qubit::sigma_z();
    let seed = n.seed;

    let mut acc = StateAccumulator::new(gen.dim(), times.len());
    let mut innovation_sums = Vec::new();
    let mut martingales = Vec::new();
    let records_dir = sink.csv.then(|| sink.dir.join("records"));
    if let Some(d) = &records_dir {
        std::fs::create_dir_all(d)?;
    }
    let mut trajectory0 = None;
    let mut record_files = Vec::new();
    fold_ordered(
        n.n_traj,
        |i| {
            let mut rng = trajectory_rng(seed, i);
            let mut sampled = Vec::with_capacity(times.len());
            let mut full = Vec::with_capacity(filter.steps() + 1);
            let mut last: Option<(usize, DensityMatrix)> = None;
            let out = filter
                .run(&rho0, &mut rng, |k, s| {
                    if k % stride == 0 {
                        sampled.push(s.mat().clone());
                    }
                    full.push(s.clone());
                    last = Some((k, s.clone()));
                })
                .map_err(|e| with_context(i, last.as_ref().map(|(k, s)| (*k, s)), e))?;
            let m = martingale_residual(&full, n.dt, filter.generator(), &observable)?;
            Ok(Member {
                sampled,
                full: (i == 0).then(|| full.iter().map(|s| s.mat().clone()).collect()),
                record: out.record,
                innovation_sum: out.innovations.iter().sum(),
                martingale_end: *m.last().unwrap_or(&0.0),
            })
        },
        |i, member| {
            if let Some(d) = &records_dir {
                let name = format!("record_{i:05}.csv");
                write_with(&d.join(&name), |w| member.record.write_csv(w))
                    .map_err(|e| CoreError::InvalidSpec(format!("cannot write {name}: {e}")))?;
                record_files.push(format!("records/{name}"));
            }
            innovation_sums.push(member.innovation_sum);
            martingales.push(member.martingale_end);
            if member.full.is_some() {
                trajectory0 = member.full;
            }
            acc.add(&member.sampled)
        },
    )
    .map_err(RunError::from)?;
    sink.files.extend(record_files);

    if let (Some(states), Some(p)) = (&trajectory0, sink.path("trajectory.csv")) {
        write_states(&p, gen.dim(), &all_times, states)?;
    }
    let summary = if acc.count() >= 2 {
        Some(acc.finish(times, seed)?)
    } else {
        None
    };
    if let Some(p) = sink.path("ensemble.csv") {
        write_ensemble(&p, gen.dim(), summary.as_ref())?;
    }

    let mut metrics = Vec::new();
    if let Some(s) = &summary {
        let last = s.times.len() - 1;
        let target = propagate_master(filter.generator(), &rho0, s.times[last])?;
        metrics.push(Metric::at_most(
            "ensemble_bound_ratio",
            s.bound_ratio(last, target.mat(), 3.0, 5.0 * n.dt),
            1.0,
        ));
        metrics.push(Metric::at_most("innovation_z", z_score(&innovation_sums), 3.0));
        metrics.push(Metric::at_most("martingale_z", z_score(&martingales), 3.0));
    }
    Ok(metrics)
}

/// `|mean| / stderr`; zero when the sample has no spread and zero mean.
fn z_score(xs: &[f64]) -> f64 {
    let (m, se) = mean_and_stderr(xs);
    if se == 0.0 && m == 0.0 {
        0.0
    } else {
        m.abs() / se
    }
}

fn control(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Vec<Metric>, RunError> {
    let gen = cfg.generator()?;
    let rho0 = cfg.initial_state();
    let n = &cfg.numerics;
    let scheme = cfg.control_scheme()?;
    let lp = ControlLoop::new(&scheme, &gen, n.horizon, n.dt)?;
    let seed = n.seed;
    let mut acc = StateAccumulator::new(gen.dim(), lp.intervals() + 1);
    let mut errors = Vec::new();
    let records_dir = sink.csv.then(|| sink.dir.join("records"));
    if let Some(d) = &records_dir {
        std::fs::create_dir_all(d)?;
    }
    let mut record_files = Vec::new();
    fold_ordered(
        n.n_traj,
        |i| {
            let run = lp.run(&rho0, seed, i).map_err(|e| with_context(i, None, e))?;
            let err = freezing_error(&run, &rho0)?;
            Ok((run, err))
        },
        |i, (run, err)| {
            if let Some(d) = &records_dir {
                let name = format!("record_{i:05}.csv");
                write_with(&d.join(&name), |w| run.record.write_csv(w))
                    .map_err(|e| CoreError::InvalidSpec(format!("cannot write {name}: {e}")))?;
                record_files.push(format!("records/{name}"));
            }
            errors.push(err);
            let mats: Vec<CMat> = run.states.into_iter().map(DensityMatrix::into_mat).collect();
            acc.add(&mats)
        },
    )
    .map_err(RunError::from)?;
    sink.files.extend(record_files);

    let summary: Option<EnsembleSummary> = if acc.count() >= 2 {
        Some(acc.finish(lp.times(), seed)?)
    } else {
        None
    };
    if let Some(p) = sink.path("ensemble.csv") {
        write_ensemble(&p, gen.dim(), summary.as_ref())?;
    }
    if let Some(p) = sink.path("freezing.csv") {
        let rows: Vec<Vec<f64>> = errors.iter().enumerate().map(|(i, &e)| vec![i as f64, e]).collect();
        write_table(&p, &["trajectory", "freezing_error"], &rows)?;
    }

    let mut metrics = Vec::new();
    if let Some(s) = &summary {
        metrics.push(Metric::info("mean_freezing_error", mean_and_stderr(&errors).0));
        let means: Vec<DensityMatrix> = s.mean.iter().map(DensityMatrix::normalize).collect::<Result<_, _>>()?;
        metrics.push(Metric::info(
            "mean_state_error",
            qfsim_core::control::time_averaged_distance(&s.times, &means, &rho0)?,
        ));
        let target_gen = match scheme.rule {
            CorrectionRule::Feedback => effective_generator(&scheme, &gen)?,
            CorrectionRule::Identity => {
                let spec = FilterSpec::new(scheme.mode.filter_mode(), n.dt, n.horizon)?;
                Filter::new(&spec, &gen)?.generator().clone()
            }
        };
        let last = s.times.len() - 1;
        let target = propagate_master(&target_gen, &rho0, s.times[last])?;
        metrics.push(Metric::at_most(
            "effective_bound_ratio",
            s.bound_ratio(last, target.mat(), 3.0, 5.0 * n.dt),
            1.0,
        ));
    }
    Ok(metrics)
}

fn rf_params(cfg: &ExperimentConfig, experiment: Experiment) -> Result<RfParams, RunError> {
    let p = &cfg.physics;
    if p.coupling != SideCoupling::Decay {
        return Err(RunError::Config(ConfigError::Constraint {
            rule: "model",
            detail: format!("{} needs the decay side coupling", experiment.name()),
        }));
    }
    Ok(RfParams::from_rabi(
        p.omega,
        C64::new(p.kappa_f, 0.0),
        C64::new(p.kappa_s, 0.0),
    )?)
}

fn davies_oracle(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Vec<Metric>, RunError> {
    let params = rf_params(cfg, Experiment::DaviesOracle)?;
    let process = DaviesProcess::new(params);
    let rho0 = cfg.initial_state();
    let n = &cfg.numerics;
    let times = grid(cfg);
    let later = cfg.physics.omega != 0.0;
    let ground = qubit::ground();
    let mut rows = Vec::with_capacity(times.len());
    for &x in &times {
        let (cdf_later, density_later) = if later {
            (
                process.waiting_time_cdf(x, false, &ground)?,
                process.waiting_time_density(x, false, &ground)?,
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        rows.push(vec![
            x,
            process.waiting_time_cdf(x, true, &rho0)?,
            process.waiting_time_density(x, true, &rho0)?,
            cdf_later,
            density_later,
        ]);
    }
    if let Some(p) = sink.path("waiting_time.csv") {
        write_table(
            &p,
            &["x", "cdf_first", "density_first", "cdf_later", "density_later"],
            &rows,
        )?;
    }

    const MAX_CLICKS: usize = 8;
    let quad = SimplexQuadrature {
        seed: n.seed,
        ..SimplexQuadrature::default()
    };
    let quadrature = process.click_count_probabilities(rho0.mat(), n.horizon, MAX_CLICKS, &quad)?;
    let exact = process.click_count_probabilities_exact(rho0.mat(), n.horizon, MAX_CLICKS)?;
    if let Some(p) = sink.path("click_counts.csv") {
        let rows: Vec<Vec<f64>> = (0..=MAX_CLICKS)
            .map(|k| vec![k as f64, quadrature[k], exact[k]])
            .collect();
        write_table(&p, &["k", "probability", "probability_exact"], &rows)?;
    }
    let total: f64 = quadrature.iter().sum();

    let gen = cfg.generator()?;
    let full = davies_generator(&params);
    let mut identity = 0.0f64;
    for t in [0.1, 1.0, 5.0] {
        let a = superop_exp(&full, t)?;
        let b = superop_exp(&gen.superop()?, t)?;
        identity = identity.max(a.max_abs_diff(&b));
    }
    Ok(vec![
        Metric::at_most("normalization_error", (total - 1.0).abs(), 1e-4),
        Metric::at_most("master_identity", identity, 1e-10),
    ])
}

fn stats(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Vec<Metric>, RunError> {
    let params = rf_params(cfg, Experiment::Stats)?;
    let gen = cfg.generator()?;
    let rho0 = cfg.initial_state();
    let n = &cfg.numerics;
    let spec = FilterSpec::new(qfsim_core::filter::FilterMode::Counting, n.dt, n.horizon)?
        .with_integrator(n.integrator.into());
    let filter = Filter::new(&spec, &gen)?;
    let seed = n.seed;
    let mut clicks: Vec<Vec<f64>> = Vec::new();
    fold_ordered(
        n.n_traj,
        |i| {
            let mut rng = trajectory_rng(seed, i);
            let mut last: Option<(usize, DensityMatrix)> = None;
            let out = filter
                .run(&rho0, &mut rng, |k, s| last = Some((k, s.clone())))
                .map_err(|e| with_context(i, last.as_ref().map(|(k, s)| (*k, s)), e))?;
            Ok(out.record.click_times())
        },
        |_, c| {
            clicks.push(c);
            Ok(())
        },
    )
    .map_err(RunError::from)?;

    if let Some(p) = sink.path("intervals.csv") {
        write_with(&p, |w| {
            writeln!(w, "trajectory,click,start,interval")?;
            for (i, c) in clicks.iter().enumerate() {
                let mut prev = 0.0;
                for (j, &t) in c.iter().enumerate() {
                    writeln!(w, "{i},{j},{prev:?},{:?}", t - prev)?;
                    prev = t;
                }
            }
            Ok(())
        })?;
    }

    let sample = extract_intervals(&clicks);
    let process = DaviesProcess::new(params);
    let ground = qubit::ground();
    let mut metrics = vec![Metric::info("subsequent_intervals", sample.subsequent.len() as f64)];
    if cfg.physics.omega != 0.0 && !sample.subsequent.is_empty() {
        let cdf_err = std::cell::RefCell::new(None);
        let ks = ks_distance(&sample.subsequent, |x| {
            process.waiting_time_cdf(x, false, &ground).unwrap_or_else(|e| {
                cdf_err.borrow_mut().get_or_insert(e);
                f64::NAN
            })
        })?;
        if let Some(e) = cdf_err.into_inner() {
            return Err(e.into());
        }
        metrics.push(Metric::at_most("ks_distance", ks, 0.02));
    }
    let r = if sample.pairs.len() >= 3 {
        pearson(&sample.pairs).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    metrics.push(Metric::at_most("interval_correlation", r.abs(), 0.03));
    let wide = coincidence_rate(&clicks, n.dt, 4.0 * n.dt)?;
    let narrow = coincidence_rate(&clicks, n.dt, 2.0 * n.dt)?;
    metrics.push(Metric::info("coincidence_4dt", wide));
    metrics.push(Metric::info("coincidence_2dt", narrow));
    let ratio = wide / narrow;
    metrics.push(Metric {
        name: "coincidence_ratio".into(),
        value: ratio,
        bound: 2.0,
        pass: (ratio - 2.0).abs() <= 0.6,
    });
    Ok(metrics)
}

//! Measure-and-correct feedback: run the filter for an interval τ, rotate the
//! state back by a unitary built from the record increment, repeat.

use crate::error::{Error, Result};
use crate::filter::{trajectory_rng, Filter, FilterMode, FilterSpec, Integrator, MeasurementRecord, StepInput};
use crate::lindblad::{Drive, GeneratorSpec};
use crate::linops::{mat_exp, trace_distance, CMat, DensityMatrix, C64, I};
use crate::squeeze::{effective_coupling, quadrature_parts, SqueezeParams};
use crate::stats::{fold_ordered, EnsembleSummary, StateAccumulator};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ControlMode {
    /// Selfadjoint or skew-selfadjoint side coupling.
    EssentiallyCommutative,
    /// Side channel observed in vacuum.
    UnsqueezedDecay,
    /// Side channel observed in a squeezed field (real `c`).
    Squeezed(SqueezeParams),
}

impl ControlMode {
    pub fn filter_mode(&self) -> FilterMode {
        match *self {
            ControlMode::EssentiallyCommutative => FilterMode::EssentiallyCommutative,
            ControlMode::UnsqueezedDecay => FilterMode::UnsqueezedDecay,
            ControlMode::Squeezed(p) => FilterMode::Squeezed(p),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CorrectionRule {
    /// `U_c = exp(iΔ·O)` with the mode's correction observable `O`.
    #[default]
    Feedback,
    /// No correction; the run is the bare filtered trajectory.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlScheme {
    pub mode: ControlMode,
    pub tau: f64,
    pub rule: CorrectionRule,
    pub integrator: Integrator,
}

impl ControlScheme {
    pub fn new(mode: ControlMode, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "correction interval must be positive, got {tau}"
            )));
        }
        Ok(Self {
            mode,
            tau,
            rule: CorrectionRule::Feedback,
            integrator: Integrator::default(),
        })
    }

    pub fn with_rule(mut self, rule: CorrectionRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    /// Grid steps per correction interval.
    pub fn steps_per_interval(&self, dt: f64) -> Result<usize> {
        let ratio = self.tau / dt;
        let m = ratio.round();
        if !(m >= 1.0) || (ratio - m).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidSpec(format!(
                "correction interval {} is not a positive multiple of dt = {dt}",
                self.tau
            )));
        }
        Ok(m as usize)
    }
}

/// Hermitian `O` with `U_c = exp(iΔ·O)`, `Δ` the physical record increment.
pub fn correction_observable(scheme: &ControlScheme, gen: &GeneratorSpec) -> Result<CMat> {
    let vs = gen.side_coupling().ok_or(Error::MissingSideCoupling)?;
    match scheme.mode {
        ControlMode::EssentiallyCommutative => {
            let scale = vs.max_abs().max(1.0);
            if vs.hermitian_residual() <= 1e-10 * scale {
                Ok(vs.hermitian_part())
            } else {
                let k = vs.scale(-I);
                if k.hermitian_residual() <= 1e-10 * scale {
                    Ok(k.hermitian_part())
                } else {
                    Err(Error::NotEssentiallyCommutative)
                }
            }
        }
        ControlMode::UnsqueezedDecay => Ok(quadrature_parts(vs).0),
        ControlMode::Squeezed(p) => {
            if !p.is_real() {
                return Err(Error::ComplexSqueezing(p.c().im));
            }
            let eff = effective_coupling(&p, gen)?;
            Ok(eff.w_i.scale_re(-1.0 / p.amplification().sqrt()))
        }
    }
}

pub fn correction_unitary(scheme: &ControlScheme, gen: &GeneratorSpec, delta: f64) -> Result<CMat> {
    if scheme.rule == CorrectionRule::Identity {
        return Ok(CMat::identity(gen.dim()));
    }
    let o = correction_observable(scheme, gen)?;
    mat_exp(&o.scale(I * delta))
}

/// Generator that the ensemble mean of the controlled state follows as τ → 0.
pub fn effective_generator(scheme: &ControlScheme, gen: &GeneratorSpec) -> Result<GeneratorSpec> {
    let vs = gen.side_coupling().ok_or(Error::MissingSideCoupling)?.clone();
    let keep: Vec<usize> = gen.forward_index().into_iter().collect();
    let mut out = gen.restricted_to(&keep)?;
    match scheme.mode {
        ControlMode::EssentiallyCommutative => {}
        ControlMode::UnsqueezedDecay => {
            out.push_coupling(quadrature_parts(&vs).1)?;
        }
        ControlMode::Squeezed(p) => {
            let (vr, _) = quadrature_parts(&vs);
            out.push_coupling(vr.scale_re(1.0 / p.amplification().sqrt()))?;
        }
    }
    Ok(out)
}

/// Post-correction states at multiples of τ, with the full record.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlledRun {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Record increment `Δ` of each interval.
    pub increments: Vec<f64>,
    pub record: MeasurementRecord,
    pub seed: u64,
    pub index: u64,
}

/// Controlled run driven by stream 0 of `seed`.
pub fn run_control_loop(
    scheme: &ControlScheme,
    gen: &GeneratorSpec,
    rho0: &DensityMatrix,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<ControlledRun> {
    ControlLoop::new(scheme, gen, horizon, dt)?.run(rho0, seed, 0)
}

/// A filter and correction prepared for repeated runs.
#[derive(Clone, Debug)]
pub struct ControlLoop {
    filter: Filter,
    per_interval: usize,
    observable: CMat,
    rule: CorrectionRule,
    tau: f64,
}

impl ControlLoop {
    pub fn new(scheme: &ControlScheme, gen: &GeneratorSpec, horizon: f64, dt: f64) -> Result<Self> {
        let spec = FilterSpec::new(scheme.mode.filter_mode(), dt, horizon)?.with_integrator(scheme.integrator);
        let filter = Filter::new(&spec, gen)?;
        let per_interval = scheme.steps_per_interval(dt)?;
        if filter.steps() % per_interval != 0 {
            return Err(Error::InvalidSpec(format!(
                "horizon {horizon} is not a multiple of the correction interval {}",
                scheme.tau
            )));
        }
        Ok(Self {
            filter,
            per_interval,
            observable: correction_observable(scheme, gen)?,
            rule: scheme.rule,
            tau: scheme.tau,
        })
    }

    pub fn intervals(&self) -> usize {
        self.filter.steps() / self.per_interval
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.intervals()).map(|k| k as f64 * self.tau).collect()
    }

    pub fn run(&self, rho0: &DensityMatrix, seed: u64, index: u64) -> Result<ControlledRun> {
        let mut rng = trajectory_rng(seed, index);
        let n = self.filter.steps();
        let mut values = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(self.intervals() + 1);
        let mut increments = Vec::with_capacity(self.intervals());
        let mut rho = rho0.clone();
        states.push(rho.clone());
        let mut delta = 0.0;
        for k in 0..n {
            let draw: f64 = rng.sample(StandardNormal);
            let out = self.filter.step(k, &rho, StepInput::Draw(draw)).map_err(|e| match e {
                Error::NumericGuard { reason, .. } => Error::NumericGuard { step: k, reason },
                other => other,
            })?;
            delta += out.value;
            values.push(out.value);
            rho = out.state;
            if (k + 1) % self.per_interval == 0 {
                if self.rule == CorrectionRule::Feedback {
                    let u = mat_exp(&self.observable.scale(I * delta))?;
                    rho = DensityMatrix::normalize(&CMat::sandwich(&u, rho.mat()))?;
                }
                increments.push(delta);
                states.push(rho.clone());
                delta = 0.0;
            }
        }
        Ok(ControlledRun {
            times: self.times(),
            states,
            increments,
            record: MeasurementRecord::new(self.filter.spec().mode.kind(), self.filter.spec().dt, values)?,
            seed,
            index,
        })
    }
}

/// Time average of `D(ρ_t, ρ0)` over the run's grid (trapezoid rule); a
/// single-point run returns that point's distance.
pub fn freezing_error(run: &ControlledRun, rho0: &DensityMatrix) -> Result<f64> {
    time_averaged_distance(&run.times, &run.states, rho0)
}

pub fn time_averaged_distance(times: &[f64], states: &[DensityMatrix], rho0: &DensityMatrix) -> Result<f64> {
    if states.is_empty() || states.len() != times.len() {
        return Err(Error::InsufficientData("run has no states".into()));
    }
    let d: Vec<f64> = states.iter().map(|s| trace_distance(s, rho0)).collect::<Result<_>>()?;
    if d.len() == 1 {
        return Ok(d[0]);
    }
    let span = times[times.len() - 1] - times[0];
    let area: f64 = times
        .windows(2)
        .zip(d.windows(2))
        .map(|(t, x)| 0.5 * (t[1] - t[0]) * (x[0] + x[1]))
        .sum();
    Ok(area / span)
}

/// Ensemble of controlled runs: the mean state at multiples of τ and each
/// run's freezing error.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlEnsemble {
    pub summary: EnsembleSummary,
    pub freezing_errors: Vec<f64>,
}

impl ControlEnsemble {
    /// Time-averaged distance of the mean state from `ρ0`.
    pub fn mean_state_error(&self, rho0: &DensityMatrix) -> Result<f64> {
        let states: Vec<DensityMatrix> = self
            .summary
            .mean
            .iter()
            .map(DensityMatrix::normalize)
            .collect::<Result<_>>()?;
        time_averaged_distance(&self.summary.times, &states, rho0)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn control_ensemble(
    scheme: &ControlScheme,
    gen: &GeneratorSpec,
    rho0: &DensityMatrix,
    horizon: f64,
    dt: f64,
    n: u64,
    seed: u64,
) -> Result<ControlEnsemble> {
    let lp = ControlLoop::new(scheme, gen, horizon, dt)?;
    let mut acc = StateAccumulator::new(rho0.dim(), lp.intervals() + 1);
    let mut errors = Vec::with_capacity(n as usize);
    fold_ordered(
        n,
        |i| {
            let run = lp.run(rho0, seed, i)?;
            let err = freezing_error(&run, rho0)?;
            let mats: Vec<CMat> = run.states.into_iter().map(DensityMatrix::into_mat).collect();
            Ok((mats, err))
        },
        |_, (mats, err)| {
            errors.push(err);
            acc.add(&mats)
        },
    )?;
    Ok(ControlEnsemble {
        summary: acc.finish(lp.times(), seed)?,
        freezing_errors: errors,
    })
}

/// Laser pulse on the forward channel, of the given width starting at
/// `start`, whose effect tends to `U_c = exp(iΔ·O)` as the width shrinks.
///
/// Over the pulse the drive `h` contributes the Hamiltonian
/// `i(h̄V_f − hV_f†)`; `h` is solved so that this equals `−Δ·O/width`.
pub fn correction_pulse(
    scheme: &ControlScheme,
    gen: &GeneratorSpec,
    delta: f64,
    start: f64,
    width: f64,
) -> Result<Drive> {
    if !(width > 0.0) {
        return Err(Error::InvalidSpec(format!("pulse width must be positive, got {width}")));
    }
    let vf = gen.forward_coupling().ok_or(Error::MissingForwardCoupling)?;
    let target = correction_observable(scheme, gen)?.scale_re(-delta / width);
    let p = (vf - &vf.adjoint()).scale(I);
    let q = vf + &vf.adjoint();
    let dot = |a: &CMat, b: &CMat| -> f64 { (&a.adjoint() * b).trace().re };
    let (pp, pq, qq) = (dot(&p, &p), dot(&p, &q), dot(&q, &q));
    let det = pp * qq - pq * pq;
    if !(det > 1e-24 * (pp * qq).max(1e-300)) || pp == 0.0 {
        return Err(Error::InvalidSpec(
            "forward coupling cannot generate the correction (kappa_f = 0)".into(),
        ));
    }
    let (tp, tq) = (dot(&p, &target), dot(&q, &target));
    let x = (qq * tp - pq * tq) / det;
    let y = (pp * tq - pq * tp) / det;
    let mut fit = p.scale_re(x);
    fit.add_scaled(C64::new(y, 0.0), &q);
    let residual = (&fit - &target).max_abs();
    if residual > 1e-9 * target.max_abs().max(1.0) {
        return Err(Error::InvalidSpec(format!(
            "correction is outside the span of the forward-channel drive (residual {residual:e})"
        )));
    }
    Ok(Drive::Pulse {
        amplitude: C64::new(x, y),
        start,
        width,
    })
}

/// Haar-random pure state.
pub fn haar_pure_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DensityMatrix> {
    let psi: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    DensityMatrix::pure(&psi.iter().map(|z| z / norm).collect::<Vec<_>>())
}

//! Quantum filters: the conditioned state under photon counting, counting
//! after mixing with a local oscillator, homodyne detection, squeezed-noise
//! quadrature observation and the two essentially commutative schemes.
//!
//! All diffusive modes share the normalized form
//! `dρ = L(ρ)dt + (Aρ + ρA† − Tr(Aρ + ρA†)ρ) dW`, with record
//! `dỸ = Tr(Aρ + ρA†)dt + dW`; only the gain operator `A`, the generator and
//! the record scale differ between modes.
//!
//! Counting modes under the exponential scheme draw the number of clicks in
//! each step from its exact law (Dyson terms of the one-step propagator), so
//! the conditioned state and its ensemble mean carry no time-step error. The
//! first-order schemes use a Bernoulli click with `p = rate·dt`.

use std::borrow::Cow;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lindblad::{lindblad_action, GeneratorSpec};
use crate::linops::{dyson_blocks, mat_exp, superop_exp, CMat, DensityMatrix, SuperOp, C64, I, ZERO};
use crate::squeeze::{effective_coupling, SqueezeParams};

/// Largest admissible jump probability per step.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;

/// Click counts per step resolved by the exponential counting scheme; the
/// last class lumps together this many clicks or more.
pub const MAX_BIN_CLICKS: usize = 4;

/// Number of grid steps covering `[0, horizon]`; fails unless the horizon is
/// an integer multiple of `dt`.
pub fn grid_steps(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidSpec(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "horizon must be non-negative, got {horizon}"
        )));
    }
    let n = (horizon / dt).round();
    if (n * dt - horizon).abs() > 1e-9 * horizon.max(dt) {
        return Err(Error::InvalidSpec(format!(
            "horizon {horizon} is not an integer multiple of dt {dt}"
        )));
    }
    Ok(n as usize)
}

/// Independent random stream for trajectory `index` of an ensemble seeded by
/// `seed`: ChaCha8 keyed by the seed, with the trajectory index as stream id.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordKind {
    Counting,
    Diffusive,
}

/// Per-step increments of the observed process on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    kind: RecordKind,
    dt: f64,
    values: Vec<f64>,
}

impl MeasurementRecord {
    pub fn new(kind: RecordKind, dt: f64, values: Vec<f64>) -> Result<Self> {
        grid_steps(dt, 0.0)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if kind == RecordKind::Counting && values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidSpec("counting increments must be 0 or 1".into()));
        }
        Ok(Self { kind, dt, values })
    }

    pub fn kind(&self) -> RecordKind {
        self.kind
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.values.len() as f64 * self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Grid times at which clicks were registered (end of the step, repeated
    /// for steps with several clicks).
    pub fn click_times(&self) -> Vec<f64> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= 1.0)
            .flat_map(|(k, &v)| std::iter::repeat_n((k + 1) as f64 * self.dt, v as usize))
            .collect()
    }

    /// Sum of the increments over steps `[from, to)`.
    pub fn increment(&self, from: usize, to: usize) -> f64 {
        self.values[from..to].iter().sum()
    }

    /// CSV with header `step,t,value`; floats in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,t,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{:?},{:?}", k, k as f64 * self.dt, v)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(kind: RecordKind, dt: f64, r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        if header.as_deref().map(str::trim) != Some("step,t,value") {
            return Err(Error::InvalidSpec("record CSV must start with `step,t,value`".into()));
        }
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::InvalidSpec(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            let bad = || Error::InvalidSpec(format!("malformed record row {}", row + 2));
            if fields.len() != 3 || fields[0].parse::<usize>().ok() != Some(values.len()) {
                return Err(bad());
            }
            values.push(fields[2].parse::<f64>().map_err(|_| bad())?);
        }
        Self::new(kind, dt, values)
    }
}

/// Filtered states on the grid with the record that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub record: MeasurementRecord,
    pub states: Vec<DensityMatrix>,
    /// Record increment minus its predicted drift, per step.
    pub innovations: Vec<f64>,
    pub seed: u64,
    pub index: u64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|k| k as f64 * self.record.dt()).collect()
    }
}

/// Local-oscillator phase `φ_t = φ₀ + ω_lo t`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PhaseLaw {
    pub phi0: f64,
    pub omega_lo: f64,
}

impl PhaseLaw {
    pub fn fixed(phi0: f64) -> Self {
        Self { phi0, omega_lo: 0.0 }
    }

    /// `w_t = e^{iφ_t}`
    pub fn at(&self, t: f64) -> C64 {
        C64::from_polar(1.0, self.phi0 + self.omega_lo * t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FilterMode {
    Counting,
    LoCounting { epsilon: f64, phase: PhaseLaw },
    Homodyne { phase: PhaseLaw },
    Squeezed(SqueezeParams),
    EssentiallyCommutative,
    UnsqueezedDecay,
}

impl FilterMode {
    pub fn kind(&self) -> RecordKind {
        match self {
            FilterMode::Counting | FilterMode::LoCounting { .. } => RecordKind::Counting,
            _ => RecordKind::Diffusive,
        }
    }
}

/// Time-stepping scheme for the filter equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Explicit Euler–Maruyama; states leaving the state space are projected back.
    EulerMaruyama,
    /// Strong order one, in Kraus form `MρM†` with
    /// `M = I + K dt + A dY + ½A²(dY² − dt)`.
    Milstein,
    /// `M = exp(A dY − ½(A² + A†A)dt + K' dt)`, exact for commuting or
    /// anti-Hermitian gains and positivity preserving.
    #[default]
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterSpec {
    pub mode: FilterMode,
    pub dt: f64,
    pub horizon: f64,
    pub integrator: Integrator,
}

impl FilterSpec {
    pub fn new(mode: FilterMode, dt: f64, horizon: f64) -> Result<Self> {
        grid_steps(dt, horizon)?;
        if let FilterMode::LoCounting { epsilon, .. } = mode {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Error::InvalidSpec(format!("epsilon must be positive, got {epsilon}")));
            }
        }
        Ok(Self {
            mode,
            dt,
            horizon,
            integrator: Integrator::default(),
        })
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn steps(&self) -> usize {
        grid_steps(self.dt, self.horizon).unwrap_or(0)
    }
}

/// How the monitored channel enters the step.
#[derive(Clone, Debug)]
enum Channel {
    /// Jump operator `C = V_mon + shift`.
    Jump { c: CMat, shift: C64 },
    /// Gain operator `A`; physical record = `scale · dỸ`.
    Diffusive { a: CMat, scale: f64 },
}

/// Operators of one step, evaluated at a given time.
#[derive(Clone, Debug)]
struct StepOps {
    h: CMat,
    couplings: Vec<CMat>,
    mon: usize,
    channel: Channel,
    /// `−iH − ½Σ_{j≠mon} V_j†V_j`
    k_others: CMat,
    /// First-order Kraus no-jump factor for counting modes.
    no_jump: Option<CMat>,
    /// Maps taking the state to its unnormalized part with exactly `n` clicks
    /// in the step (last entry: at least `n`), for the exponential scheme.
    count_maps: Option<Vec<SuperOp>>,
}

impl StepOps {
    fn others(&self) -> impl Iterator<Item = &CMat> {
        let mon = self.mon;
        self.couplings
            .iter()
            .enumerate()
            .filter(move |(j, _)| *j != mon)
            .map(|(_, v)| v)
    }
}

/// Where the record comes from.
pub enum StepInput {
    /// Uniform draw in `[0, 1)` for counting, standard normal for diffusive modes.
    Draw(f64),
    /// Replay a recorded increment (dN or physical dY).
    Replay(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub state: DensityMatrix,
    /// dN or the physical dY.
    pub value: f64,
    pub innovation: f64,
}

/// A filter prepared for one generator and mode.
#[derive(Clone, Debug)]
pub struct Filter {
    spec: FilterSpec,
    gen: GeneratorSpec,
    side: usize,
    cached: Option<StepOps>,
}

impl Filter {
    pub fn new(spec: &FilterSpec, gen: &GeneratorSpec) -> Result<Self> {
        grid_steps(spec.dt, spec.horizon)?;
        let side = gen.side_index().ok_or(Error::MissingSideCoupling)?;
        let effective = match spec.mode {
            FilterMode::Squeezed(sq) => {
                if !sq.is_real() {
                    return Err(Error::ComplexSqueezing(sq.c().im));
                }
                effective_coupling(&sq, gen)?.generator
            }
            _ => gen.clone(),
        };
        if spec.mode == FilterMode::EssentiallyCommutative {
            commuting_observable(&gen.couplings()[side])?;
        }
        let mut filter = Self {
            spec: *spec,
            gen: effective,
            side,
            cached: None,
        };
        let static_phase = match spec.mode {
            FilterMode::Homodyne { phase } | FilterMode::LoCounting { phase, .. } => phase.omega_lo == 0.0,
            _ => true,
        };
        if filter.gen.is_time_independent() && static_phase {
            filter.cached = Some(filter.build_ops(0.0)?);
        }
        Ok(filter)
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    /// Generator whose semigroup the unconditional state follows.
    pub fn generator(&self) -> &GeneratorSpec {
        &self.gen
    }

    pub fn steps(&self) -> usize {
        self.spec.steps()
    }

    /// Physical record = `record_scale · dỸ`.
    pub fn record_scale(&self) -> f64 {
        match self.spec.mode {
            FilterMode::Squeezed(sq) => sq.amplification().sqrt(),
            _ => 1.0,
        }
    }

    fn build_ops(&self, t: f64) -> Result<StepOps> {
        let h = self.gen.hamiltonian_at(t);
        let couplings = self.gen.couplings_at(t);
        let mon = self.side;
        let vs = couplings[mon].clone();
        let dim = h.dim();
        let channel = match self.spec.mode {
            FilterMode::Counting => Channel::Jump { c: vs, shift: ZERO },
            FilterMode::LoCounting { epsilon, phase } => {
                let shift = phase.at(t) / epsilon;
                let mut c = vs;
                c.add_scaled(shift, &CMat::identity(dim));
                Channel::Jump { c, shift }
            }
            FilterMode::Homodyne { phase } => Channel::Diffusive {
                a: vs.scale(phase.at(t).conj()),
                scale: 1.0,
            },
            FilterMode::Squeezed(_) => Channel::Diffusive {
                a: vs,
                scale: self.record_scale(),
            },
            FilterMode::EssentiallyCommutative => Channel::Diffusive {
                a: commuting_observable(&vs)?.scale(-I),
                scale: 1.0,
            },
            FilterMode::UnsqueezedDecay => Channel::Diffusive {
                a: vs.scale(-I),
                scale: 1.0,
            },
        };
        let mut k_others = h.scale(-I);
        for (j, v) in couplings.iter().enumerate() {
            if j != mon {
                k_others.add_scaled(C64::new(-0.5, 0.0), &(&v.adjoint() * v));
            }
        }
        let mut ops = StepOps {
            h,
            couplings,
            mon,
            channel,
            k_others,
            no_jump: None,
            count_maps: None,
        };
        if let Channel::Jump { shift, .. } = &ops.channel {
            let dt = self.spec.dt;
            match self.spec.integrator {
                Integrator::EulerMaruyama => {}
                Integrator::Milstein => {
                    let mut m = CMat::identity(dim);
                    m.add_scaled(C64::new(dt, 0.0), &no_jump_exponent(&ops, *shift));
                    ops.no_jump = Some(m);
                }
                Integrator::Exponential => ops.count_maps = Some(self.count_maps(t + 0.5 * dt)?),
            }
        }
        Ok(ops)
    }

    fn count_maps(&self, t: f64) -> Result<Vec<SuperOp>> {
        let dt = self.spec.dt;
        let full = self.gen.superop_at(t);
        let mut c = self.gen.couplings_at(t)[self.side].clone();
        if let FilterMode::LoCounting { epsilon, phase } = self.spec.mode {
            c.add_scaled(phase.at(t) / epsilon, &CMat::identity(c.dim()));
        }
        let jump = SuperOp::conjugation(&c);
        let mut maps = dyson_blocks(&full.sub(&jump), &jump, dt, MAX_BIN_CLICKS - 1)?;
        let mut rest = superop_exp(&full, dt)?;
        for m in &maps {
            rest = rest.sub(m);
        }
        maps.push(rest);
        Ok(maps)
    }

    fn ops_at(&self, t: f64) -> Result<Cow<'_, StepOps>> {
        match &self.cached {
            Some(ops) => Ok(Cow::Borrowed(ops)),
            None => Ok(Cow::Owned(self.build_ops(t)?)),
        }
    }

    /// Advances the state across step `k` (from `t = k·dt` to `(k+1)·dt`).
    pub fn step(&self, k: usize, rho: &DensityMatrix, input: StepInput) -> Result<StepOutput> {
        let t = k as f64 * self.spec.dt;
        let ops = self.ops_at(t)?;
        let out = match &ops.channel {
            Channel::Jump { c, .. } => self.jump_step(k, &ops, c, rho, input),
            Channel::Diffusive { a, scale } => self.diffusive_step(&ops, a, *scale, rho, input),
        }?;
        Ok(out)
    }

    fn jump_step(
        &self,
        k: usize,
        ops: &StepOps,
        c: &CMat,
        rho: &DensityMatrix,
        input: StepInput,
    ) -> Result<StepOutput> {
        let dt = self.spec.dt;
        let r = rho.mat();
        let jumped = CMat::sandwich(c, r);
        let rate = jumped.trace().re.max(0.0);
        let p = rate * dt;
        if p > MAX_JUMP_PROBABILITY {
            return Err(Error::RateTooLarge(p));
        }
        if let Some(maps) = &ops.count_maps {
            return self.binned_jump_step(k, maps, r, input);
        }
        let click = match input {
            StepInput::Draw(u) => u < p,
            StepInput::Replay(v) => v == 1.0,
        };
        let dn = if click { 1.0 } else { 0.0 };
        let state = if click {
            if !(rate > 0.0) {
                return Err(Error::ImpossibleJump { step: k });
            }
            DensityMatrix::normalize(&jumped.scale_re(1.0 / rate))
        } else {
            match &ops.no_jump {
                Some(m) => {
                    let mut next = CMat::sandwich(m, r);
                    for v in ops.others() {
                        next.add_scaled(C64::new(dt, 0.0), &CMat::sandwich(v, r));
                    }
                    DensityMatrix::normalize(&next)
                }
                None => {
                    let mut drift = lindblad_action(&ops.h, &ops.couplings, r);
                    drift -= &jumped;
                    drift.add_scaled(C64::new(rate, 0.0), r);
                    let mut next = r.clone();
                    next.add_scaled(C64::new(dt, 0.0), &drift);
                    DensityMatrix::project(&next)
                }
            }
        };
        let state = state.map_err(|e| guard(k, e))?;
        Ok(StepOutput {
            state,
            value: dn,
            innovation: dn - p,
        })
    }

    /// Samples the number of clicks in the step from its exact law and
    /// conditions the state on it.
    fn binned_jump_step(&self, k: usize, maps: &[SuperOp], r: &CMat, input: StepInput) -> Result<StepOutput> {
        let parts: Vec<CMat> = maps.iter().map(|m| m.apply(r)).collect::<Result<_>>()?;
        let weights: Vec<f64> = parts.iter().map(|m| m.trace().re.max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        let n = match input {
            // click classes first, so a draw below P(click) clicks
            StepInput::Draw(u) => {
                let target = u * total;
                let mut acc = 0.0;
                let mut pick = 0;
                for (i, w) in weights.iter().enumerate().skip(1) {
                    acc += w;
                    if target < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            }
            StepInput::Replay(v) => {
                if !(v >= 0.0 && v.fract() == 0.0) {
                    return Err(Error::InvalidSpec(format!(
                        "click count {v} at step {k} is not a count"
                    )));
                }
                (v as usize).min(weights.len() - 1)
            }
        };
        if !(weights[n] > 0.0) {
            return Err(Error::ImpossibleJump { step: k });
        }
        let mean: f64 = weights.iter().enumerate().map(|(i, w)| i as f64 * w).sum::<f64>() / total;
        let state = DensityMatrix::normalize(&parts[n].scale_re(1.0 / weights[n])).map_err(|e| guard(k, e))?;
        let dn = n as f64;
        Ok(StepOutput {
            state,
            value: dn,
            innovation: dn - mean,
        })
    }

    fn diffusive_step(
        &self,
        ops: &StepOps,
        a: &CMat,
        scale: f64,
        rho: &DensityMatrix,
        input: StepInput,
    ) -> Result<StepOutput> {
        let dt = self.spec.dt;
        let r = rho.mat();
        let ar = a * r;
        let mut gain = ar.clone();
        gain += &ar.adjoint();
        let m = gain.trace().re;
        let (dw, dy_norm) = match input {
            StepInput::Draw(xi) => {
                let dw = xi * dt.sqrt();
                (dw, m * dt + dw)
            }
            StepInput::Replay(v) => {
                let dy = v / scale;
                (dy - m * dt, dy)
            }
        };
        let next = match self.spec.integrator {
            Integrator::EulerMaruyama => {
                let mut b = gain;
                b.add_scaled(C64::new(-m, 0.0), r);
                let mut next = r.clone();
                next.add_scaled(C64::new(dt, 0.0), &lindblad_action(&ops.h, &ops.couplings, r));
                next.add_scaled(C64::new(dw, 0.0), &b);
                DensityMatrix::project(&next)
            }
            Integrator::Milstein => {
                let mut k = ops.k_others.clone();
                k.add_scaled(C64::new(-0.5, 0.0), &(&a.adjoint() * a));
                let mut mk = CMat::identity(r.dim());
                mk.add_scaled(C64::new(dt, 0.0), &k);
                mk.add_scaled(C64::new(dy_norm, 0.0), a);
                mk.add_scaled(C64::new(0.5 * (dy_norm * dy_norm - dt), 0.0), &(a * a));
                self.kraus_update(ops, &mk, r)
            }
            Integrator::Exponential => {
                let mut x = ops.k_others.scale_re(dt);
                x.add_scaled(C64::new(dy_norm, 0.0), a);
                let mut sq = a * a;
                sq += &(&a.adjoint() * a);
                x.add_scaled(C64::new(-0.5 * dt, 0.0), &sq);
                let mk = mat_exp(&x)?;
                self.kraus_update(ops, &mk, r)
            }
        };
        let state = next.map_err(|e| guard(0, e))?;
        Ok(StepOutput {
            state,
            value: scale * dy_norm,
            innovation: scale * dw,
        })
    }

    fn kraus_update(&self, ops: &StepOps, m: &CMat, r: &CMat) -> Result<DensityMatrix> {
        let mut next = CMat::sandwich(m, r);
        for v in ops.others() {
            next.add_scaled(C64::new(self.spec.dt, 0.0), &CMat::sandwich(v, r));
        }
        DensityMatrix::normalize(&next)
    }

    /// Runs the filter from `ρ0`, generating the record from `rng`. The
    /// observer sees every grid state in order.
    pub fn run<R: Rng + ?Sized>(
        &self,
        rho0: &DensityMatrix,
        rng: &mut R,
        mut observe: impl FnMut(usize, &DensityMatrix),
    ) -> Result<RunOutput> {
        self.check_dim(rho0)?;
        let n = self.steps();
        let counting = self.spec.mode.kind() == RecordKind::Counting;
        let mut values = Vec::with_capacity(n);
        let mut innovations = Vec::with_capacity(n);
        let mut rho = rho0.clone();
        observe(0, &rho);
        for k in 0..n {
            let draw = if counting {
                rng.random::<f64>()
            } else {
                rng.sample::<f64, _>(StandardNormal)
            };
            let out = self.step(k, &rho, StepInput::Draw(draw)).map_err(|e| relabel(k, e))?;
            values.push(out.value);
            innovations.push(out.innovation);
            rho = out.state;
            observe(k + 1, &rho);
        }
        Ok(RunOutput {
            record: MeasurementRecord {
                kind: self.spec.mode.kind(),
                dt: self.spec.dt,
                values,
            },
            innovations,
            final_state: rho,
        })
    }

    /// Filters a supplied record.
    pub fn replay(
        &self,
        rho0: &DensityMatrix,
        record: &MeasurementRecord,
        mut observe: impl FnMut(usize, &DensityMatrix),
    ) -> Result<RunOutput> {
        self.check_dim(rho0)?;
        if (record.dt() - self.spec.dt).abs() > 1e-15 * self.spec.dt {
            return Err(Error::InvalidSpec("record grid differs from the filter grid".into()));
        }
        if record.kind() != self.spec.mode.kind() {
            return Err(Error::InvalidSpec("record kind does not match the filter mode".into()));
        }
        let mut innovations = Vec::with_capacity(record.len());
        let mut rho = rho0.clone();
        observe(0, &rho);
        for (k, &v) in record.values().iter().enumerate() {
            let out = self.step(k, &rho, StepInput::Replay(v)).map_err(|e| relabel(k, e))?;
            innovations.push(out.innovation);
            rho = out.state;
            observe(k + 1, &rho);
        }
        Ok(RunOutput {
            record: record.clone(),
            innovations,
            final_state: rho,
        })
    }

    fn check_dim(&self, rho0: &DensityMatrix) -> Result<()> {
        if rho0.dim() != self.gen.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.gen.dim(),
                found: rho0.dim(),
            });
        }
        Ok(())
    }
}

/// Record and innovations of one filter run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub record: MeasurementRecord,
    pub innovations: Vec<f64>,
    pub final_state: DensityMatrix,
}

/// `K' = −iH − ½Σ_j V_j†V_j − s̄V_mon` for jump operator `V_mon + s`. The
/// uniform damping `−|s|²/2` of the no-jump branch is left out: it scales the
/// whole unnormalized state and drops out on normalization.
fn no_jump_exponent(ops: &StepOps, shift: C64) -> CMat {
    let v = &ops.couplings[ops.mon];
    let mut k = ops.k_others.clone();
    k.add_scaled(C64::new(-0.5, 0.0), &(&v.adjoint() * v));
    k.add_scaled(-shift.conj(), v);
    k
}

/// Hermitian observable `K` with `V_s = K` or `V_s = iK`.
fn commuting_observable(vs: &CMat) -> Result<CMat> {
    let scale = vs.max_abs().max(1.0);
    if vs.hermitian_residual() <= 1e-10 * scale {
        return Ok(vs.hermitian_part());
    }
    let k = vs.scale(-I);
    if k.hermitian_residual() <= 1e-10 * scale {
        return Ok(k.hermitian_part());
    }
    Err(Error::NotEssentiallyCommutative)
}

fn guard(step: usize, e: Error) -> Error {
    match e {
        Error::InvalidState(reason) => Error::NumericGuard { step, reason },
        other => other,
    }
}

fn relabel(step: usize, e: Error) -> Error {
    match e {
        Error::NumericGuard { reason, .. } => Error::NumericGuard { step, reason },
        Error::ImpossibleJump { .. } => Error::ImpossibleJump { step },
        other => other,
    }
}

/// Simulates trajectory `index` of the ensemble seeded by `seed`.
pub fn simulate_member(
    spec: &FilterSpec,
    gen: &GeneratorSpec,
    rho0: &DensityMatrix,
    seed: u64,
    index: u64,
) -> Result<Trajectory> {
    let filter = Filter::new(spec, gen)?;
    let mut rng = trajectory_rng(seed, index);
    let mut states = Vec::with_capacity(filter.steps() + 1);
    let out = filter.run(rho0, &mut rng, |_, s| states.push(s.clone()))?;
    Ok(Trajectory {
        record: out.record,
        states,
        innovations: out.innovations,
        seed,
        index,
    })
}

/// Simulates the trajectory determined by `seed` (stream 0).
pub fn simulate_trajectory(
    spec: &FilterSpec,
    gen: &GeneratorSpec,
    rho0: &DensityMatrix,
    seed: u64,
) -> Result<Trajectory> {
    simulate_member(spec, gen, rho0, seed, 0)
}

/// Filters a supplied record, e.g. one produced by another detection scheme.
pub fn replay_record(
    spec: &FilterSpec,
    gen: &GeneratorSpec,
    rho0: &DensityMatrix,
    record: &MeasurementRecord,
) -> Result<Trajectory> {
    let filter = Filter::new(spec, gen)?;
    let mut states = Vec::with_capacity(record.len() + 1);
    let out = filter.replay(rho0, record, |_, s| states.push(s.clone()))?;
    Ok(Trajectory {
        record: out.record,
        states,
        innovations: out.innovations,
        seed: 0,
        index: 0,
    })
}

/// LO-counting record rescaled to a diffusive one: `dW^ε = ε·dN − dt/ε`.
pub fn scaled_lo_record(record: &MeasurementRecord, epsilon: f64) -> Result<MeasurementRecord> {
    if record.kind() != RecordKind::Counting {
        return Err(Error::InvalidSpec("expected a counting record".into()));
    }
    let dt = record.dt();
    let values = record.values().iter().map(|dn| epsilon * dn - dt / epsilon).collect();
    MeasurementRecord::new(RecordKind::Diffusive, dt, values)
}

fn one_step(
    mode: FilterMode,
    gen: &GeneratorSpec,
    rho: &DensityMatrix,
    t: f64,
    dt: f64,
    integrator: Integrator,
    input: StepInput,
) -> Result<StepOutput> {
    // place the step on a grid whose k-th step starts at t
    let k = (t / dt).round();
    let spec = FilterSpec {
        mode,
        dt,
        horizon: dt * (k + 1.0),
        integrator,
    };
    Filter::new(&spec, gen)?.step(k as usize, rho, input)
}

/// One photon-counting step; `draw` is uniform in `[0, 1)`.
pub fn counting_step(
    gen: &GeneratorSpec,
    rho: &DensityMatrix,
    t: f64,
    dt: f64,
    draw: f64,
    integrator: Integrator,
) -> Result<(DensityMatrix, f64)> {
    let out = one_step(FilterMode::Counting, gen, rho, t, dt, integrator, StepInput::Draw(draw))?;
    Ok((out.state, out.value))
}

/// One step of counting after mixing with a local oscillator of amplitude `w/ε`.
#[allow(clippy::too_many_arguments)]
pub fn lo_counting_step(
    gen: &GeneratorSpec,
    rho: &DensityMatrix,
    t: f64,
    dt: f64,
    epsilon: f64,
    w: C64,
    draw: f64,
    integrator: Integrator,
) -> Result<(DensityMatrix, f64)> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidSpec(format!("epsilon must be positive, got {epsilon}")));
    }
    let mode = FilterMode::LoCounting {
        epsilon,
        phase: PhaseLaw::fixed(w.arg()),
    };
    let out = one_step(mode, gen, rho, t, dt, integrator, StepInput::Draw(draw))?;
    Ok((out.state, out.value))
}

/// One homodyne step at phase `φ` driven by the Wiener increment `dw`.
pub fn homodyne_step(
    gen: &GeneratorSpec,
    rho: &DensityMatrix,
    t: f64,
    dt: f64,
    phi: f64,
    dw: f64,
    integrator: Integrator,
) -> Result<(DensityMatrix, f64)> {
    let mode = FilterMode::Homodyne {
        phase: PhaseLaw::fixed(phi),
    };
    let out = one_step(mode, gen, rho, t, dt, integrator, StepInput::Draw(dw / dt.sqrt()))?;
    Ok((out.state, out.value))
}

/// One squeezed-noise step; returns the physical record increment.
pub fn squeezed_step(
    gen: &GeneratorSpec,
    rho: &DensityMatrix,
    t: f64,
    dt: f64,
    sq: &SqueezeParams,
    dw: f64,
    integrator: Integrator,
) -> Result<(DensityMatrix, f64)> {
    let out = one_step(
        FilterMode::Squeezed(*sq),
        gen,
        rho,
        t,
        dt,
        integrator,
        StepInput::Draw(dw / dt.sqrt()),
    )?;
    Ok((out.state, out.value))
}

/// One step of the non-informative filter for a (skew-)selfadjoint coupling.
pub fn essentially_commutative_step(
    gen: &GeneratorSpec,
    rho: &DensityMatrix,
    t: f64,
    dt: f64,
    dw: f64,
    integrator: Integrator,
) -> Result<(DensityMatrix, f64)> {
    let out = one_step(
        FilterMode::EssentiallyCommutative,
        gen,
        rho,
        t,
        dt,
        integrator,
        StepInput::Draw(dw / dt.sqrt()),
    )?;
    Ok((out.state, out.value))
}

/// One step of the decay filter observing the `V_I` quadrature.
pub fn unsqueezed_decay_step(
    gen: &GeneratorSpec,
    rho: &DensityMatrix,
    t: f64,
    dt: f64,
    dw: f64,
    integrator: Integrator,
) -> Result<(DensityMatrix, f64)> {
    let out = one_step(
        FilterMode::UnsqueezedDecay,
        gen,
        rho,
        t,
        dt,
        integrator,
        StepInput::Draw(dw / dt.sqrt()),
    )?;
    Ok((out.state, out.value))
}

/// Drift `Tr(Aρ + ρA†)` of the normalized record for a diffusive mode at time `t`.
pub fn record_drift(filter: &Filter, rho: &DensityMatrix, t: f64) -> Result<f64> {
    let ops = filter.ops_at(t)?;
    match &ops.channel {
        Channel::Diffusive { a, .. } => {
            let ar = a * rho.mat();
            Ok(2.0 * ar.trace().re)
        }
        Channel::Jump { c, .. } => Ok(CMat::sandwich(c, rho.mat()).trace().re),
    }
}

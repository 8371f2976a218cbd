//! Lindblad generators in the Schrödinger picture.
//!
//! A generator is a Hamiltonian plus coupling operators `V_j`; its action is
//! `L(ρ) = −i[H, ρ] + Σ_j (V_j ρ V_j† − ½{V_j†V_j, ρ})`. One coupling may be
//! marked as the forward channel and carry a laser amplitude `h(t)`, which
//! turns it into `V_f + h(t)` and adds `(i/2)(h̄ V_f − h V_f†)` to the
//! Hamiltonian.

use crate::error::{Error, Result};
use crate::linops::{qubit, superop_exp, CMat, DensityMatrix, SuperOp, C64, I, ONE, ZERO};

const NORMALIZATION_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-10;

/// Laser amplitude `h(t)` attached to the forward coupling.
#[derive(Clone, Debug, PartialEq)]
pub enum Drive {
    Constant(C64),
    /// `amplitude · e^{i·frequency·t}`
    Rotating {
        amplitude: C64,
        frequency: f64,
    },
    /// `amplitude` on `[start, start + width)`, zero elsewhere.
    Pulse {
        amplitude: C64,
        start: f64,
        width: f64,
    },
    Sum(Vec<Drive>),
}

impl Drive {
    pub fn at(&self, t: f64) -> C64 {
        match self {
            Drive::Constant(h) => *h,
            Drive::Rotating { amplitude, frequency } => amplitude * C64::from_polar(1.0, frequency * t),
            Drive::Pulse {
                amplitude,
                start,
                width,
            } => {
                if t >= *start && t < start + width {
                    *amplitude
                } else {
                    ZERO
                }
            }
            Drive::Sum(parts) => parts.iter().map(|d| d.at(t)).sum(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Drive::Constant(_) => true,
            Drive::Rotating { frequency, .. } => *frequency == 0.0,
            Drive::Pulse { .. } => false,
            Drive::Sum(parts) => parts.iter().all(Drive::is_constant),
        }
    }

    /// Times at which the drive jumps discontinuously.
    fn breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Drive::Pulse { start, width, .. } => {
                out.push(*start);
                out.push(start + width);
            }
            Drive::Sum(parts) => parts.iter().for_each(|p| p.breakpoints(out)),
            _ => {}
        }
    }
}

/// Hamiltonian, couplings and optional laser drive defining a Lindblad generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    hamiltonian: CMat,
    couplings: Vec<CMat>,
    forward: Option<usize>,
    side: Option<usize>,
    drive: Option<Drive>,
}

impl GeneratorSpec {
    pub fn new(hamiltonian: CMat, couplings: Vec<CMat>) -> Result<Self> {
        let dim = hamiltonian.dim();
        if !hamiltonian.is_finite() || couplings.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let residual = hamiltonian.hermitian_residual();
        if residual > HERMITIAN_TOL {
            return Err(Error::NotHermitian(residual));
        }
        if let Some(v) = couplings.iter().find(|v| v.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.dim(),
            });
        }
        Ok(Self {
            hamiltonian,
            couplings,
            forward: None,
            side: None,
            drive: None,
        })
    }

    /// Forward coupling `κ_f V` and side coupling `κ_s V` with `|κ_f|² + |κ_s|² = 1`
    /// and no Hamiltonian.
    pub fn two_channel(v: CMat, kappa_f: C64, kappa_s: C64) -> Result<Self> {
        check_normalization(kappa_f, kappa_s)?;
        let dim = v.dim();
        let mut gen = Self::new(CMat::zeros(dim), vec![v.scale(kappa_f), v.scale(kappa_s)])?;
        gen.forward = Some(0);
        gen.side = Some(1);
        Ok(gen)
    }

    /// Spontaneous decay of a two-level atom split over forward and side channels.
    pub fn spontaneous_decay(kappa_f: C64, kappa_s: C64) -> Result<Self> {
        Self::two_channel(qubit::lowering(), kappa_f, kappa_s)
    }

    pub fn with_forward(mut self, index: usize) -> Result<Self> {
        self.check_channel(index)?;
        self.forward = Some(index);
        Ok(self)
    }

    pub fn with_side(mut self, index: usize) -> Result<Self> {
        self.check_channel(index)?;
        self.side = Some(index);
        Ok(self)
    }

    pub fn with_hamiltonian(mut self, h: CMat) -> Result<Self> {
        let residual = h.hermitian_residual();
        if residual > HERMITIAN_TOL {
            return Err(Error::NotHermitian(residual));
        }
        if h.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: h.dim(),
            });
        }
        self.hamiltonian = h;
        Ok(self)
    }

    fn check_channel(&self, index: usize) -> Result<()> {
        if index >= self.couplings.len() {
            return Err(Error::InvalidChannel {
                index,
                count: self.couplings.len(),
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &CMat {
        &self.hamiltonian
    }

    /// Undriven couplings.
    pub fn couplings(&self) -> &[CMat] {
        &self.couplings
    }

    pub fn forward_index(&self) -> Option<usize> {
        self.forward
    }

    pub fn side_index(&self) -> Option<usize> {
        self.side
    }

    pub fn drive(&self) -> Option<&Drive> {
        self.drive.as_ref()
    }

    pub fn forward_coupling(&self) -> Option<&CMat> {
        self.forward.map(|i| &self.couplings[i])
    }

    pub fn side_coupling(&self) -> Option<&CMat> {
        self.side.map(|i| &self.couplings[i])
    }

    pub fn is_time_independent(&self) -> bool {
        self.drive.as_ref().is_none_or(Drive::is_constant)
    }

    pub fn drive_at(&self, t: f64) -> C64 {
        self.drive.as_ref().map_or(ZERO, |d| d.at(t))
    }

    /// `H + (i/2)(h̄ V_f − h V_f†)` at time `t`.
    pub fn hamiltonian_at(&self, t: f64) -> CMat {
        let mut h = self.hamiltonian.clone();
        if let (Some(f), Some(_)) = (self.forward, &self.drive) {
            let amp = self.drive_at(t);
            if amp != ZERO {
                let vf = &self.couplings[f];
                h.add_scaled(I * 0.5 * amp.conj(), vf);
                h.add_scaled(-I * 0.5 * amp, &vf.adjoint());
            }
        }
        h
    }

    /// Couplings at time `t`, the forward one shifted by `h(t)·I`.
    pub fn couplings_at(&self, t: f64) -> Vec<CMat> {
        let mut vs = self.couplings.clone();
        if let (Some(f), Some(_)) = (self.forward, &self.drive) {
            let amp = self.drive_at(t);
            if amp != ZERO {
                vs[f].add_scaled(amp, &CMat::identity(self.dim()));
            }
        }
        vs
    }

    /// Same generator with every coupling but `keep` removed; the drive is kept
    /// only when the forward coupling survives.
    pub fn restricted_to(&self, keep: &[usize]) -> Result<Self> {
        let mut couplings = Vec::new();
        let mut forward = None;
        let mut side = None;
        for &k in keep {
            self.check_channel(k)?;
            if Some(k) == self.forward {
                forward = Some(couplings.len());
            }
            if Some(k) == self.side {
                side = Some(couplings.len());
            }
            couplings.push(self.couplings[k].clone());
        }
        Ok(Self {
            hamiltonian: self.hamiltonian.clone(),
            couplings,
            drive: forward.and(self.drive.clone()),
            forward,
            side,
        })
    }

    /// Replaces coupling `index` by `v`.
    pub fn with_coupling(mut self, index: usize, v: CMat) -> Result<Self> {
        self.check_channel(index)?;
        if v.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.dim(),
            });
        }
        self.couplings[index] = v;
        Ok(self)
    }

    /// Appends a coupling and returns its index.
    pub fn push_coupling(&mut self, v: CMat) -> Result<usize> {
        if v.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.dim(),
            });
        }
        self.couplings.push(v);
        Ok(self.couplings.len() - 1)
    }

    /// Superoperator of the Schrödinger-picture generator at time `t`.
    pub fn superop_at(&self, t: f64) -> SuperOp {
        let mut s = SuperOp::hamiltonian(&self.hamiltonian_at(t));
        for v in self.couplings_at(t) {
            s.add_assign(&SuperOp::dissipator(&v));
        }
        s
    }

    /// Superoperator of a time-independent generator.
    pub fn superop(&self) -> Result<SuperOp> {
        if !self.is_time_independent() {
            return Err(Error::TimeDependent);
        }
        Ok(self.superop_at(0.0))
    }

    /// Heisenberg-picture generator at time `t` (Hilbert–Schmidt dual).
    pub fn heisenberg_superop_at(&self, t: f64) -> SuperOp {
        self.superop_at(t).dual()
    }

    /// `L_t(ρ)` for an arbitrary matrix.
    pub fn action(&self, rho: &CMat, t: f64) -> Result<CMat> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: rho.dim(),
            });
        }
        Ok(lindblad_action(&self.hamiltonian_at(t), &self.couplings_at(t), rho))
    }

    /// Heisenberg action `L_t†(X) = i[H, X] + Σ V†XV − ½{V†V, X}`.
    pub fn heisenberg_action(&self, x: &CMat, t: f64) -> Result<CMat> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        let h = self.hamiltonian_at(t);
        let mut out = CMat::commutator(&h, x).scale(I);
        for v in self.couplings_at(t) {
            let vd = v.adjoint();
            let vdv = &vd * &v;
            out += &(&(&vd * x) * &v);
            out.add_scaled(C64::new(-0.5, 0.0), &CMat::anticommutator(&vdv, x));
        }
        Ok(out)
    }
}

/// `−i[H, ρ] + Σ_j V_j ρ V_j† − ½{V_j†V_j, ρ}`
pub fn lindblad_action(h: &CMat, couplings: &[CMat], rho: &CMat) -> CMat {
    let mut out = CMat::commutator(h, rho).scale(-I);
    for v in couplings {
        out += &dissipator_action(v, rho);
    }
    out
}

/// `L_W(ρ) = WρW† − ½{W†W, ρ}`
pub fn dissipator_action(w: &CMat, rho: &CMat) -> CMat {
    let wd = w.adjoint();
    let wdw = &wd * w;
    let mut out = &(w * rho) * &wd;
    out.add_scaled(C64::new(-0.5, 0.0), &CMat::anticommutator(&wdw, rho));
    out
}

fn check_normalization(kappa_f: C64, kappa_s: C64) -> Result<()> {
    let total = kappa_f.norm_sqr() + kappa_s.norm_sqr();
    if !total.is_finite() || (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Normalization(total));
    }
    Ok(())
}

/// Resonance-fluorescence generator with Rabi frequency `omega`.
///
/// The laser amplitude on the forward channel is `z = −iΩ/(2κ̄_f)`, giving
/// `L(ρ) = iΩ/2·[V + V†, ρ] − ½{V†V, ρ} + VρV†`.
pub fn make_rf_generator(omega: f64, kappa_f: C64, kappa_s: C64) -> Result<GeneratorSpec> {
    check_normalization(kappa_f, kappa_s)?;
    if !omega.is_finite() {
        return Err(Error::NonFinite);
    }
    let gen = GeneratorSpec::spontaneous_decay(kappa_f, kappa_s)?;
    if omega == 0.0 {
        return Ok(gen);
    }
    if kappa_f == ZERO {
        return Err(Error::DivergentDrive);
    }
    laser_modified_generator(&gen, Drive::Constant(rf_laser_amplitude(omega, kappa_f)))
}

/// `z = −iΩ/(2κ̄_f)`
pub fn rf_laser_amplitude(omega: f64, kappa_f: C64) -> C64 {
    -I * omega / (kappa_f.conj() * 2.0)
}

/// Attaches the laser amplitude `h` to the forward coupling (adding to any
/// drive already present).
pub fn laser_modified_generator(gen: &GeneratorSpec, h: Drive) -> Result<GeneratorSpec> {
    if gen.forward.is_none() {
        return Err(Error::MissingForwardCoupling);
    }
    let mut out = gen.clone();
    out.drive = Some(match out.drive.take() {
        None => h,
        Some(Drive::Sum(mut parts)) => {
            parts.push(h);
            Drive::Sum(parts)
        }
        Some(existing) => Drive::Sum(vec![existing, h]),
    });
    Ok(out)
}

/// `L_t(ρ)`; traceless and Hermitian for Hermitian `ρ`.
pub fn apply_generator(gen: &GeneratorSpec, rho: &DensityMatrix, t: f64) -> Result<CMat> {
    gen.action(rho.mat(), t)
}

/// Generator split into a smooth part and the jump part of one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct UnraveledGenerator {
    pub smooth: SuperOp,
    pub jump: SuperOp,
}

/// `𝓙(ρ) = V_ch ρ V_ch†` and `𝓛 = L − 𝓙` at time `t`.
pub fn unravel_at(gen: &GeneratorSpec, channel: usize, t: f64) -> Result<UnraveledGenerator> {
    gen.check_channel(channel)?;
    let v = &gen.couplings_at(t)[channel];
    let jump = SuperOp::conjugation(v);
    let smooth = gen.superop_at(t).sub(&jump);
    Ok(UnraveledGenerator { smooth, jump })
}

/// Unraveling of a time-independent generator.
pub fn unravel(gen: &GeneratorSpec, channel: usize) -> Result<UnraveledGenerator> {
    if !gen.is_time_independent() {
        return Err(Error::TimeDependent);
    }
    unravel_at(gen, channel, 0.0)
}

/// `exp(tL) ρ0` for a time-independent generator.
pub fn propagate_master(gen: &GeneratorSpec, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let l = gen.superop()?;
    let rho = superop_exp(&l, t)?.apply(rho0.mat())?;
    DensityMatrix::normalize(&rho)
}

/// Propagates a possibly time-dependent generator from `t0` to `t1` with
/// piecewise-constant exponentials evaluated at interval midpoints. Drive
/// discontinuities are always used as interval boundaries, so box pulses are
/// integrated exactly.
pub fn propagate_piecewise(
    gen: &GeneratorSpec,
    rho0: &DensityMatrix,
    t0: f64,
    t1: f64,
    max_step: f64,
) -> Result<DensityMatrix> {
    if !(t1 >= t0) {
        return Err(Error::NegativeTime(t1 - t0));
    }
    if !(max_step > 0.0) {
        return Err(Error::InvalidSpec("max_step must be positive".into()));
    }
    let mut cuts = vec![t0, t1];
    if let Some(d) = &gen.drive {
        d.breakpoints(&mut cuts);
    }
    cuts.retain(|&c| c >= t0 && c <= t1);
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let mut rho = rho0.mat().clone();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = ((b - a) / max_step).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        for k in 0..n {
            let mid = a + (k as f64 + 0.5) * h;
            rho = superop_exp(&gen.superop_at(mid), h)?.apply(&rho)?;
        }
    }
    DensityMatrix::normalize(&rho)
}

/// Stationary state: the normalized null vector of the generator.
pub fn steady_state(gen: &GeneratorSpec) -> Result<DensityMatrix> {
    let l = gen.superop()?;
    let svd = l.matrix().to_nalgebra().svd(false, true);
    let v_t = svd.v_t.ok_or(Error::NonFinite)?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::NonFinite)?;
    let null: Vec<C64> = v_t.row(idx).iter().map(|z| z.conj()).collect();
    let rho = CMat::unvectorize(&null)?;
    let tr = rho.trace();
    DensityMatrix::normalize(&rho.scale(ONE / tr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::qubit::{excited, ground, lowering, sigma_x};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rf(omega: f64, kf2: f64) -> GeneratorSpec {
        make_rf_generator(omega, c(kf2.sqrt(), 0.0), c((1.0 - kf2).sqrt(), 0.0)).unwrap()
    }

    /// Direct evaluation of iΩ/2·[V+V†, ρ] − ½{V†V, ρ} + VρV†.
    fn rf_by_hand(omega: f64, rho: &CMat) -> CMat {
        let v = lowering();
        let x = &v + &v.adjoint();
        let mut out = CMat::commutator(&x, rho).scale(c(0.0, 0.5 * omega));
        out += &dissipator_action(&v, rho);
        out
    }

    #[test]
    fn pure_decay_at_unit_rate() {
        let l = apply_generator(&rf(0.0, 0.5), &excited(), 0.0).unwrap();
        assert_abs_diff_eq!(l[(0, 0)].re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 1)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn driven_ground_state_gets_imaginary_coherences() {
        let l = apply_generator(&rf(2.0, 0.5), &ground(), 0.0).unwrap();
        assert!((l[(0, 1)] - c(0.0, 1.0)).norm() < 1e-14);
        assert!((l[(1, 0)] - c(0.0, -1.0)).norm() < 1e-14);
        assert!(l[(0, 0)].norm() < 1e-15 && l[(1, 1)].norm() < 1e-15);
        // cross-check against the superoperator applied to basis matrices
        let s = rf(2.0, 0.5).superop().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut e = CMat::zeros(2);
                e[(i, j)] = ONE;
                let via_super = s.apply(&e).unwrap();
                assert!((&via_super - &rf_by_hand(2.0, &e)).max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rf_on_maximally_mixed_state() {
        let mixed = DensityMatrix::maximally_mixed(2);
        let l = apply_generator(&rf(1.0, 0.3), &mixed, 0.0).unwrap();
        let oracle = rf(1.0, 0.3).superop().unwrap().apply(mixed.mat()).unwrap();
        assert!((&l - &oracle).max_abs() < 1e-15);
        assert!((&l - &rf_by_hand(1.0, mixed.mat())).max_abs() < 1e-15);
        assert_abs_diff_eq!(l[(0, 0)].re, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_generator_and_dark_ground_state() {
        let g = GeneratorSpec::new(CMat::zeros(2), vec![CMat::zeros(2)]).unwrap();
        assert_eq!(apply_generator(&g, &excited(), 0.0).unwrap().max_abs(), 0.0);
        let decay = GeneratorSpec::spontaneous_decay(c(0.6, 0.0), c(0.8, 0.0)).unwrap();
        assert_eq!(apply_generator(&decay, &ground(), 0.0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            make_rf_generator(1.0, c(0.6, 0.0), c(0.7, 0.0)),
            Err(Error::Normalization(_))
        ));
        assert_eq!(make_rf_generator(1.0, ZERO, ONE), Err(Error::DivergentDrive));
        assert!(make_rf_generator(0.0, ZERO, ONE).is_ok());
        let not_herm = CMat::qubit(ZERO, ONE, ZERO, ZERO);
        assert!(matches!(
            GeneratorSpec::new(not_herm, vec![]),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn zero_laser_leaves_generator_unchanged() {
        let base = GeneratorSpec::spontaneous_decay(c(0.6, 0.0), c(0.8, 0.0)).unwrap();
        let lm = laser_modified_generator(&base, Drive::Constant(ZERO)).unwrap();
        assert!(lm.superop().unwrap().max_abs_diff(&base.superop().unwrap()) == 0.0);
    }

    #[test]
    fn constant_laser_reproduces_resonance_fluorescence() {
        let (kf, ks, omega) = (0.6, 0.8, 1.7);
        let base = GeneratorSpec::spontaneous_decay(c(kf, 0.0), c(ks, 0.0)).unwrap();
        let h = Drive::Constant(c(0.0, -omega / (2.0 * kf)));
        let lm = laser_modified_generator(&base, h).unwrap();
        let direct = make_rf_generator(omega, c(kf, 0.0), c(ks, 0.0)).unwrap();
        assert!(lm.superop().unwrap().max_abs_diff(&direct.superop().unwrap()) < 1e-14);
    }

    #[test]
    fn complex_kappa_keeps_rabi_form() {
        let kf = C64::from_polar(0.6, 0.9);
        let ks = C64::from_polar(0.8, -0.3);
        let g = make_rf_generator(1.3, kf, ks).unwrap();
        let rho = crate::linops::qubit::plus_y().into_mat();
        let l = g.action(&rho, 0.0).unwrap();
        assert!((&l - &rf_by_hand(1.3, &rho)).max_abs() < 1e-14);
    }

    #[test]
    fn rotating_laser_hamiltonian_at_zero() {
        let (kf, ks, omega) = (0.6, 0.8, 1.2);
        let base = GeneratorSpec::spontaneous_decay(c(kf, 0.0), c(ks, 0.0)).unwrap();
        let h = Drive::Rotating {
            amplitude: c(0.0, -omega / (2.0 * kf)),
            frequency: 3.0,
        };
        let lm = laser_modified_generator(&base, h).unwrap();
        assert!(!lm.is_time_independent());
        // H̃ = (i/2)(h̄ V_f − h V_f†) with h = −iΩ/(2κ_f) gives −(Ω/4)(V + V†)
        let expected = sigma_x().scale_re(-omega / 4.0);
        assert!((&lm.hamiltonian_at(0.0) - &expected).max_abs() < 1e-15);
        assert_eq!(lm.superop(), Err(Error::TimeDependent));
    }

    #[test]
    fn unraveling_splits_generator() {
        let g = rf(1.0, 1.0 - 0.64);
        let u = unravel(&g, 1).unwrap();
        let jumped = u.jump.apply(excited().mat()).unwrap();
        assert_abs_diff_eq!(jumped[(1, 1)].re, 0.64, epsilon = 1e-15);
        assert_eq!(jumped[(0, 0)], ZERO);
        assert!(u.smooth.add(&u.jump).max_abs_diff(&g.superop().unwrap()) < 1e-14);
        let mixed = DensityMatrix::maximally_mixed(2);
        assert_abs_diff_eq!(u.jump.apply(mixed.mat()).unwrap().trace().re, 0.32, epsilon = 1e-15);
        assert!(matches!(unravel(&g, 5), Err(Error::InvalidChannel { .. })));
    }

    #[test]
    fn master_propagation() {
        let decay = GeneratorSpec::spontaneous_decay(c(0.6, 0.0), c(0.8, 0.0)).unwrap();
        assert_eq!(propagate_master(&decay, &excited(), 0.0).unwrap(), excited());
        let rho = propagate_master(&decay, &excited(), 1.5).unwrap();
        assert_abs_diff_eq!(rho.mat()[(0, 0)].re, (-1.5f64).exp(), epsilon = 1e-12);
        assert!(matches!(
            propagate_master(&decay, &excited(), -1.0),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn steady_state_population() {
        // two-level Bloch equations: ρ_ee = (Ω²/4) / (Ω²/2 + 1/4)
        for &omega in &[0.5, 1.0, 3.0] {
            let ss = steady_state(&rf(omega, 0.5)).unwrap();
            let expected = 0.25 * omega * omega / (0.5 * omega * omega + 0.25);
            assert_abs_diff_eq!(ss.mat()[(0, 0)].re, expected, epsilon = 1e-10);
            let l = apply_generator(&rf(omega, 0.5), &ss, 0.0).unwrap();
            assert!(l.max_abs() < 1e-10);
        }
        let strong = steady_state(&rf(200.0, 0.5)).unwrap();
        assert!((strong.mat()[(0, 0)].re - 0.5).abs() < 1e-4);
    }

    #[test]
    fn heisenberg_dual_annihilates_identity() {
        let g = rf(1.3, 0.4);
        let id = CMat::identity(2);
        assert!(g.heisenberg_action(&id, 0.0).unwrap().max_abs() < 1e-14);
        let via_super = g.heisenberg_superop_at(0.0).apply(&id).unwrap();
        assert!(via_super.max_abs() < 1e-14);
    }

    #[test]
    fn piecewise_matches_exact_for_constant_drive() {
        let g = rf(1.0, 0.5);
        let a = propagate_piecewise(&g, &excited(), 0.0, 2.0, 0.3).unwrap();
        let b = propagate_master(&g, &excited(), 2.0).unwrap();
        assert!((a.mat() - b.mat()).max_abs() < 1e-12);
    }
}

//! Exact counting statistics of the resonantly driven two-level atom.
//!
//! Side-channel clicks form a Davies process. Between clicks the state evolves
//! under `Z_t = exp(t(L₀ + J_f))`, where `L₀(ρ) = Kρ + ρK†` with
//! `K = −½(|z|² + V†V + 2z V_f†)` and `J_f`, `J_s` are the jump maps of the
//! forward and side channels. A click applies `J_s`. Everything here is in the
//! Schrödinger picture.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lindblad::rf_laser_amplitude;
use crate::linops::{
    dyson_blocks, mat_exp, qubit, superop_exp, CMat, DensityMatrix, SpectralExp, SuperOp, C64, ONE, ZERO,
};

const NORMALIZATION_TOL: f64 = 1e-12;

/// Laser amplitude and channel weights of the driven atom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RfParams {
    z: C64,
    kappa_f: C64,
    kappa_s: C64,
}

impl RfParams {
    pub fn new(z: C64, kappa_f: C64, kappa_s: C64) -> Result<Self> {
        if !(z.is_finite() && kappa_f.is_finite() && kappa_s.is_finite()) {
            return Err(Error::NonFinite);
        }
        let total = kappa_f.norm_sqr() + kappa_s.norm_sqr();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Normalization(total));
        }
        Ok(Self { z, kappa_f, kappa_s })
    }

    /// Parameters for Rabi frequency `omega`, using `z = −iΩ/(2κ̄_f)`.
    pub fn from_rabi(omega: f64, kappa_f: C64, kappa_s: C64) -> Result<Self> {
        if omega != 0.0 && kappa_f == ZERO {
            return Err(Error::DivergentDrive);
        }
        let z = if omega == 0.0 {
            ZERO
        } else {
            rf_laser_amplitude(omega, kappa_f)
        };
        Self::new(z, kappa_f, kappa_s)
    }

    pub fn z(&self) -> C64 {
        self.z
    }

    pub fn kappa_f(&self) -> C64 {
        self.kappa_f
    }

    pub fn kappa_s(&self) -> C64 {
        self.kappa_s
    }

    pub fn forward_coupling(&self) -> CMat {
        qubit::lowering().scale(self.kappa_f)
    }

    pub fn side_coupling(&self) -> CMat {
        qubit::lowering().scale(self.kappa_s)
    }
}

/// Ordered side-channel click times on `[0, horizon)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpRecord {
    times: Vec<f64>,
    horizon: f64,
}

impl JumpRecord {
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        let bad = Error::InvalidJumpRecord { horizon };
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(bad);
        }
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0 && *t < horizon)) {
            return Err(bad);
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad);
        }
        Ok(Self { times, horizon })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `K = −½(|z|²I + V†V + 2zV_f†)`
fn no_jump_exponent(p: &RfParams) -> CMat {
    let v = qubit::lowering();
    let mut k = CMat::identity(2).scale_re(p.z.norm_sqr());
    k += &(&v.adjoint() * &v);
    k.add_scaled(p.z * 2.0, &p.forward_coupling().adjoint());
    k.scale_re(-0.5)
}

/// `B_t = exp(tK)`, evaluated in closed form.
pub fn no_jump_contraction(p: &RfParams, t: f64) -> Result<CMat> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let damp = (-0.5 * t * p.z.norm_sqr()).exp();
    let half = (-0.5 * t).exp();
    let corner = p.z * p.kappa_f.conj() * 2.0 * (half - 1.0);
    Ok(CMat::qubit(C64::new(half, 0.0), corner, ZERO, ONE).scale_re(damp))
}

/// Generator of `ρ ↦ B_t ρ B_t†`.
pub fn no_jump_generator(p: &RfParams) -> SuperOp {
    let k = no_jump_exponent(p);
    SuperOp::left(&k).add(&SuperOp::right(&k.adjoint()))
}

/// `(J_f, J_s)` with `J_f(ρ) = (z + V_f)ρ(z + V_f)†` and `J_s(ρ) = V_sρV_s†`.
pub fn jump_maps(p: &RfParams) -> (SuperOp, SuperOp) {
    let mut shifted = p.forward_coupling();
    shifted.add_scaled(p.z, &CMat::identity(2));
    (SuperOp::conjugation(&shifted), SuperOp::conjugation(&p.side_coupling()))
}

/// `L₀ + J_f`, the generator between side-channel clicks.
pub fn between_jumps_generator(p: &RfParams) -> SuperOp {
    no_jump_generator(p).add(&jump_maps(p).0)
}

/// `Z_t = exp(t(L₀ + J_f))`
pub fn between_jumps_map(p: &RfParams, t: f64) -> Result<SuperOp> {
    superop_exp(&between_jumps_generator(p), t)
}

/// `L₀ + J_f + J_s`; coincides with the resonance-fluorescence generator.
pub fn davies_generator(p: &RfParams) -> SuperOp {
    let (_, js) = jump_maps(p);
    between_jumps_generator(p).add(&js)
}

/// Precomputed between-click propagator with the quantities derived from it.
#[derive(Clone, Debug)]
pub struct DaviesProcess {
    params: RfParams,
    generator: SuperOp,
    side_jump: SuperOp,
    side: CMat,
    spectral: Option<SpectralExp>,
}

impl DaviesProcess {
    pub fn new(params: RfParams) -> Self {
        let generator = between_jumps_generator(&params);
        let side = params.side_coupling();
        let side_jump = SuperOp::conjugation(&side);
        let spectral = SpectralExp::new(generator.matrix());
        Self {
            params,
            generator,
            side_jump,
            side,
            spectral,
        }
    }

    pub fn params(&self) -> &RfParams {
        &self.params
    }

    /// `Z_t(σ)` for any matrix `σ`.
    pub fn propagate(&self, t: f64, sigma: &CMat) -> Result<CMat> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        let map = match &self.spectral {
            Some(s) => SuperOp::from_matrix(2, s.exp(t))?,
            None => superop_exp(&self.generator, t)?,
        };
        map.apply(sigma)
    }

    /// `J_s(σ)`
    pub fn side_jump(&self, sigma: &CMat) -> CMat {
        CMat::sandwich(&self.side, sigma)
    }

    /// Density of observing exactly the clicks in `record` and no others.
    pub fn exclusive_density(&self, record: &JumpRecord, rho0: &DensityMatrix) -> Result<f64> {
        self.exclusive_density_from(record, rho0.mat())
    }

    fn exclusive_density_from(&self, record: &JumpRecord, sigma: &CMat) -> Result<f64> {
        let mut state = sigma.clone();
        let mut last = 0.0;
        for &t in record.times() {
            state = self.side_jump(&self.propagate(t - last, &state)?);
            last = t;
        }
        let state = self.propagate(record.horizon() - last, &state)?;
        Ok(state.trace().re.max(0.0))
    }

    /// Density of the time to the next click from the (unnormalized) state `σ`:
    /// `Tr J_s(Z_x σ)`.
    fn click_density_from(&self, x: f64, sigma: &CMat) -> Result<f64> {
        Ok(self.side_jump(&self.propagate(x, sigma)?).trace().re)
    }

    /// `∫₀ˣ Tr J_s(Z_s σ) ds`
    fn click_cdf_from(&self, x: f64, sigma: &CMat) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::NegativeTime(x));
        }
        let integrated = match &self.spectral {
            Some(s) => {
                let mut m = CMat::zeros(4);
                for (l, p) in s.eigenvalues().iter().zip(s.covariants()) {
                    m.add_scaled(integrated_exp(*l, x), p);
                }
                m
            }
            None => integrated_exp_van_loan(self.generator.matrix(), x)?,
        };
        let state = SuperOp::from_matrix(2, integrated)?.apply(sigma)?;
        Ok(self.side_jump(&state).trace().re)
    }

    /// Waiting-time density: from `ρ0` for the first interval, from the
    /// post-click ground state otherwise.
    pub fn waiting_time_density(&self, x: f64, first: bool, rho0: &DensityMatrix) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::NegativeTime(x));
        }
        let sigma = self.interval_start(first, rho0)?;
        Ok(self.click_density_from(x, &sigma)?.max(0.0))
    }

    /// Waiting-time distribution function `F(x) = ∫₀ˣ z(x') dx'`.
    pub fn waiting_time_cdf(&self, x: f64, first: bool, rho0: &DensityMatrix) -> Result<f64> {
        let sigma = self.interval_start(first, rho0)?;
        Ok(self.click_cdf_from(x, &sigma)?.clamp(0.0, 1.0))
    }

    fn interval_start(&self, first: bool, rho0: &DensityMatrix) -> Result<CMat> {
        if first {
            return Ok(rho0.mat().clone());
        }
        if self.params.z == ZERO {
            return Err(Error::ZeroDrive);
        }
        Ok(qubit::ground().into_mat())
    }

    /// Cut-off standing in for the infinite waiting time: `50 / min |Re λ|`
    /// over the eigenvalues of `L₀ + J_f`.
    pub fn tail_horizon(&self) -> Result<f64> {
        let eigs: Vec<C64> = match &self.spectral {
            Some(s) => s.eigenvalues().to_vec(),
            None => {
                let schur = nalgebra::Schur::try_new(self.generator.matrix().to_nalgebra(), 1e-15, 10_000)
                    .ok_or(Error::NonFinite)?;
                schur.eigenvalues().ok_or(Error::NonFinite)?.iter().copied().collect()
            }
        };
        let slowest = eigs.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
        if slowest < 1e-12 {
            return Err(Error::ZeroDrive);
        }
        Ok(50.0 / slowest)
    }

    /// Probabilities of exactly `k = 0..=max_clicks` clicks on `[0, horizon)`
    /// starting from `σ`, by simplex quadrature.
    pub fn click_count_probabilities(
        &self,
        sigma: &CMat,
        horizon: f64,
        max_clicks: usize,
        quad: &SimplexQuadrature,
    ) -> Result<Vec<f64>> {
        if !(horizon >= 0.0) {
            return Err(Error::NegativeTime(horizon));
        }
        let mut out = Vec::with_capacity(max_clicks + 1);
        for k in 0..=max_clicks {
            let p = if k <= quad.trapezoid_max_clicks {
                self.nested_trapezoid(sigma, 0.0, horizon, k, quad.trapezoid_points)?
            } else {
                self.monte_carlo_simplex(sigma, horizon, k, quad.mc_samples, quad.seed)?
            };
            out.push(p);
        }
        Ok(out)
    }

    fn nested_trapezoid(&self, state: &CMat, from: f64, horizon: f64, remaining: usize, points: usize) -> Result<f64> {
        if remaining == 0 {
            return Ok(self.propagate(horizon - from, state)?.trace().re);
        }
        let len = horizon - from;
        if len <= 0.0 {
            return Ok(0.0);
        }
        let h = len / (points - 1) as f64;
        let mut acc = 0.0;
        for i in 0..points {
            let t = from + h * i as f64;
            let w = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
            let next = self.side_jump(&self.propagate(t - from, state)?);
            acc += w * self.nested_trapezoid(&next, t, horizon, remaining - 1, points)?;
        }
        Ok(acc * h)
    }

    fn monte_carlo_simplex(&self, sigma: &CMat, horizon: f64, k: usize, samples: usize, seed: u64) -> Result<f64> {
        if samples == 0 {
            return Err(Error::InsufficientData("zero Monte Carlo samples".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut times = vec![0.0; k];
        let mut acc = 0.0;
        for _ in 0..samples {
            for t in times.iter_mut() {
                *t = rng.random::<f64>() * horizon;
            }
            times.sort_by(|a, b| a.total_cmp(b));
            if times.windows(2).any(|w| w[0] >= w[1]) {
                continue;
            }
            let record = JumpRecord {
                times: times.clone(),
                horizon,
            };
            acc += self.exclusive_density_from(&record, sigma)?;
        }
        let volume = horizon.powi(k as i32) / (1..=k).map(|j| j as f64).product::<f64>();
        Ok(volume * acc / samples as f64)
    }

    /// Exact click-count probabilities from the block exponential of the
    /// bidiagonal generator with `L₀ + J_f` on the diagonal and `J_s` below it.
    pub fn click_count_probabilities_exact(&self, sigma: &CMat, horizon: f64, max_clicks: usize) -> Result<Vec<f64>> {
        if !(horizon >= 0.0) {
            return Err(Error::NegativeTime(horizon));
        }
        let rho = sigma.clone();
        dyson_blocks(&self.generator, &self.side_jump, horizon, max_clicks)?
            .iter()
            .map(|e| Ok(e.apply(&rho)?.trace().re))
            .collect()
    }

    /// Samples side-channel click times on `[0, horizon)` by inverting the
    /// exact waiting-time distribution from the current conditional state.
    pub fn sample_clicks<R: Rng + ?Sized>(
        &self,
        rho0: &DensityMatrix,
        horizon: f64,
        rng: &mut R,
    ) -> Result<JumpRecord> {
        if !(horizon >= 0.0) {
            return Err(Error::NegativeTime(horizon));
        }
        let mut times = Vec::new();
        let mut now = 0.0;
        let mut state = rho0.mat().clone();
        loop {
            let remaining = horizon - now;
            let u: f64 = rng.random();
            if u >= self.click_cdf_from(remaining, &state)? {
                break;
            }
            let (mut lo, mut hi) = (0.0, remaining);
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                if self.click_cdf_from(mid, &state)? < u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let x = 0.5 * (lo + hi);
            now += x;
            if now >= horizon || times.last().is_some_and(|&t| now <= t) {
                break;
            }
            times.push(now);
            let jumped = self.side_jump(&self.propagate(x, &state)?);
            let tr = jumped.trace().re;
            if !(tr > 0.0) {
                break;
            }
            state = jumped.scale_re(1.0 / tr);
        }
        JumpRecord::new(times, horizon)
    }
}

/// Quadrature settings for integrating exclusive densities over click simplices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexQuadrature {
    pub trapezoid_points: usize,
    pub trapezoid_max_clicks: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for SimplexQuadrature {
    fn default() -> Self {
        Self {
            trapezoid_points: 64,
            trapezoid_max_clicks: 3,
            mc_samples: 1_000_000,
            seed: 0,
        }
    }
}

/// `∫₀ˣ e^{sλ} ds`
fn integrated_exp(l: C64, x: f64) -> C64 {
    let lx = l * x;
    if lx.norm() < 1e-8 {
        C64::new(x, 0.0) * (ONE + lx * 0.5)
    } else {
        ((lx).exp() - ONE) / l
    }
}

/// `∫₀ˣ exp(sG) ds` as the upper-right block of `exp(x·[[G, I], [0, 0]])`.
fn integrated_exp_van_loan(g: &CMat, x: f64) -> Result<CMat> {
    let n = g.dim();
    let mut big = CMat::zeros(2 * n);
    for r in 0..n {
        for c in 0..n {
            big[(r, c)] = g[(r, c)] * x;
        }
        big[(r, n + r)] = C64::new(x, 0.0);
    }
    let e = mat_exp(&big)?;
    Ok(CMat::from_fn(n, |r, c| e[(r, n + c)]))
}

/// Density of the exact click set `ω` (see [`DaviesProcess::exclusive_density`]).
pub fn exclusive_density(p: &RfParams, record: &JumpRecord, rho0: &DensityMatrix) -> Result<f64> {
    DaviesProcess::new(*p).exclusive_density(record, rho0)
}

/// Waiting-time distribution (see [`DaviesProcess::waiting_time_cdf`]).
pub fn waiting_time_cdf(p: &RfParams, x: f64, first: bool, rho0: &DensityMatrix) -> Result<f64> {
    DaviesProcess::new(*p).waiting_time_cdf(x, first, rho0)
}

/// Waiting-time density (see [`DaviesProcess::waiting_time_density`]).
pub fn waiting_time_density(p: &RfParams, x: f64, first: bool, rho0: &DensityMatrix) -> Result<f64> {
    DaviesProcess::new(*p).waiting_time_density(x, first, rho0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::make_rf_generator;
    use crate::linops::qubit::{excited, ground};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rf(omega: f64, ks2: f64) -> RfParams {
        RfParams::from_rabi(omega, c((1.0 - ks2).sqrt(), 0.0), c(ks2.sqrt(), 0.0)).unwrap()
    }

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + h * i as f64)).sum();
        h * (0.5 * f(a) + inner + 0.5 * f(b))
    }

    #[test]
    fn contraction_closed_form_example() {
        let p = RfParams::new(ONE, c(0.6, 0.0), c(0.8, 0.0)).unwrap();
        let b = no_jump_contraction(&p, 1.0).unwrap();
        assert_abs_diff_eq!(b[(0, 0)].re, 0.367879, epsilon = 5e-7);
        // 1.2·(e^{-1/2} − 1)·e^{-1/2}
        assert_abs_diff_eq!(b[(0, 1)].re, -0.2863815, epsilon = 5e-7);
        assert_abs_diff_eq!(b[(1, 1)].re, 0.606531, epsilon = 5e-7);
        assert_eq!(b[(1, 0)], ZERO);
        let series = mat_exp(&no_jump_exponent(&p)).unwrap();
        assert!((&b - &series).max_abs() < 1e-14);
    }

    #[test]
    fn contraction_edge_cases() {
        let p = rf(1.3, 0.4);
        assert_eq!(no_jump_contraction(&p, 0.0).unwrap(), CMat::identity(2));
        assert!(matches!(no_jump_contraction(&p, -0.1), Err(Error::NegativeTime(_))));
        let b = no_jump_contraction(&p, 0.8).unwrap();
        let sigma_max = crate::linops::hermitian_eigenvalues(&(&b.adjoint() * &b))[1];
        assert!(sigma_max <= 1.0 + 1e-14);
    }

    #[test]
    fn side_jump_lands_in_ground_state() {
        let p = rf(1.0, 0.64);
        let (_, js) = jump_maps(&p);
        let rho = DensityMatrix::maximally_mixed(2);
        let j = js.apply(rho.mat()).unwrap();
        assert_abs_diff_eq!(j[(1, 1)].re, 0.32, epsilon = 1e-15);
        assert!(DensityMatrix::normalize(&j).unwrap() == ground());
        assert!(js.compose(&js).matrix().max_abs() == 0.0);
    }

    #[test]
    fn forward_jump_without_laser_is_decay() {
        let p = RfParams::new(ZERO, c(0.6, 0.0), c(0.8, 0.0)).unwrap();
        let (jf, _) = jump_maps(&p);
        let j = jf.apply(excited().mat()).unwrap();
        assert_abs_diff_eq!(j[(1, 1)].re, 0.36, epsilon = 1e-15);
    }

    #[test]
    fn davies_generator_is_the_master_generator() {
        for &(omega, ks2) in &[(1.0, 0.5), (2.5, 0.2), (0.0, 0.7)] {
            let p = rf(omega, ks2);
            let gen = make_rf_generator(omega, p.kappa_f(), p.kappa_s()).unwrap();
            let diff = davies_generator(&p).max_abs_diff(&gen.superop().unwrap());
            assert!(diff < 1e-14);
        }
    }

    #[test]
    fn between_jumps_map_is_subtrace_preserving() {
        let p = rf(1.0, 0.5);
        assert_eq!(between_jumps_map(&p, 0.0).unwrap(), SuperOp::identity(2));
        for &t in &[0.1, 1.0, 4.0] {
            let z = between_jumps_map(&p, t).unwrap();
            for rho in [excited(), ground(), DensityMatrix::maximally_mixed(2)] {
                assert!(z.apply(rho.mat()).unwrap().trace().re <= 1.0 + 1e-14);
            }
        }
    }

    #[test]
    fn spectral_and_series_propagation_agree() {
        let d = DaviesProcess::new(rf(1.0, 0.5));
        assert!(d.spectral.is_some());
        let z = between_jumps_map(&rf(1.0, 0.5), 2.3).unwrap();
        let a = d.propagate(2.3, excited().mat()).unwrap();
        let b = z.apply(excited().mat()).unwrap();
        assert!((&a - &b).max_abs() < 1e-12);
    }

    #[test]
    fn later_interval_density_uses_ground_state() {
        let p = rf(1.0, 0.5);
        let d = DaviesProcess::new(p);
        let z = between_jumps_map(&p, 0.7).unwrap().apply(ground().mat()).unwrap();
        let expected = p.kappa_s().norm_sqr() * z[(0, 0)].re;
        let got = d.waiting_time_density(0.7, false, &excited()).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-14);
    }

    #[test]
    fn waiting_time_density_integrates_to_one() {
        let d = DaviesProcess::new(rf(1.0, 0.5));
        let xmax = d.tail_horizon().unwrap();
        let f = |x: f64| d.waiting_time_density(x, false, &excited()).unwrap();
        let total = trapezoid(f, 0.0, xmax, 40_000);
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(
            d.waiting_time_cdf(xmax, false, &excited()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn cdf_matches_quadrature_of_density() {
        let d = DaviesProcess::new(rf(1.0, 0.5));
        let rho0 = excited();
        assert_eq!(d.waiting_time_cdf(0.0, false, &rho0).unwrap(), 0.0);
        for &x in &[0.5, 1.0, 2.0] {
            for first in [false, true] {
                let f = |s: f64| d.waiting_time_density(s, first, &rho0).unwrap();
                let quad = trapezoid(f, 0.0, x, 4000);
                let cdf = d.waiting_time_cdf(x, first, &rho0).unwrap();
                assert_abs_diff_eq!(cdf, quad, epsilon = 1e-6);
            }
        }
        let mut prev = 0.0;
        for i in 0..200 {
            let v = d.waiting_time_cdf(0.1 * i as f64, false, &rho0).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn van_loan_and_spectral_integrals_agree() {
        let p = rf(1.7, 0.3);
        let d = DaviesProcess::new(p);
        let g = between_jumps_generator(&p);
        let vl = integrated_exp_van_loan(g.matrix(), 1.9).unwrap();
        let state = SuperOp::from_matrix(2, vl).unwrap().apply(ground().mat()).unwrap();
        let expected = d.side_jump(&state).trace().re;
        assert_abs_diff_eq!(
            d.click_cdf_from(1.9, ground().mat()).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_drive_later_intervals_rejected() {
        let p = RfParams::new(ZERO, c(0.6, 0.0), c(0.8, 0.0)).unwrap();
        assert_eq!(waiting_time_cdf(&p, 1.0, false, &excited()), Err(Error::ZeroDrive));
        // first interval from the excited state is plain exponential decay
        let f = waiting_time_cdf(&p, 1.0, true, &excited()).unwrap();
        assert_abs_diff_eq!(f, 0.64 * (1.0 - (-1.0f64).exp()), epsilon = 1e-12);
    }

    #[test]
    fn exclusive_density_edge_cases() {
        let p = rf(1.0, 0.5);
        let rho0 = excited();
        let empty = JumpRecord::new(vec![], 1.5).unwrap();
        let no_click = between_jumps_map(&p, 1.5)
            .unwrap()
            .apply(rho0.mat())
            .unwrap()
            .trace()
            .re;
        assert_abs_diff_eq!(exclusive_density(&p, &empty, &rho0).unwrap(), no_click, epsilon = 1e-12);
        let dark = RfParams::from_rabi(1.0, ONE, ZERO).unwrap();
        let rec = JumpRecord::new(vec![0.2, 0.9], 1.5).unwrap();
        assert_eq!(exclusive_density(&dark, &rec, &rho0).unwrap(), 0.0);
        assert!(JumpRecord::new(vec![0.5, 0.2], 1.0).is_err());
        assert!(JumpRecord::new(vec![1.0], 1.0).is_err());
    }

    #[test]
    fn coincident_clicks_are_suppressed() {
        let p = rf(1.0, 0.5);
        let d = DaviesProcess::new(p);
        let rho0 = excited();
        let dens = |gap: f64| {
            let rec = JumpRecord::new(vec![0.3, 0.3 + gap], 1.0).unwrap();
            d.exclusive_density(&rec, &rho0).unwrap()
        };
        assert!(dens(1e-9) < 1e-15);
        // the density vanishes quadratically in the gap
        let ratio = dens(2e-3) / dens(1e-3);
        assert_abs_diff_eq!(ratio, 4.0, epsilon = 0.01);
    }

    #[test]
    fn exact_click_counts_sum_to_one() {
        let d = DaviesProcess::new(rf(1.0, 0.5));
        let probs = d.click_count_probabilities_exact(excited().mat(), 1.0, 8).unwrap();
        assert_abs_diff_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(probs.iter().all(|&p| p >= -1e-15));
        let no_click = between_jumps_map(d.params(), 1.0)
            .unwrap()
            .apply(excited().mat())
            .unwrap()
            .trace()
            .re;
        assert_abs_diff_eq!(probs[0], no_click, epsilon = 1e-12);
    }

    #[test]
    fn quadrature_agrees_with_exact_counts() {
        let d = DaviesProcess::new(rf(1.0, 0.5));
        let quad = SimplexQuadrature {
            mc_samples: 20_000,
            ..SimplexQuadrature::default()
        };
        let approx = d.click_count_probabilities(excited().mat(), 1.0, 4, &quad).unwrap();
        let exact = d.click_count_probabilities_exact(excited().mat(), 1.0, 4).unwrap();
        for k in 0..=3 {
            assert_abs_diff_eq!(approx[k], exact[k], epsilon = 5e-5);
        }
        assert!((approx[4] - exact[4]).abs() < 0.1 * exact[4] + 1e-9);
    }

    #[test]
    fn measure_family_is_consistent_across_horizons() {
        // P(no click on [0, t)) computed at horizon t + s by summing over all
        // click patterns on [t, t + s)
        let d = DaviesProcess::new(rf(1.0, 0.5));
        let (t, s) = (0.8, 0.7);
        let after_t = d.propagate(t, excited().mat()).unwrap();
        let direct = after_t.trace().re;
        let extended: f64 = d.click_count_probabilities_exact(&after_t, s, 12).unwrap().iter().sum();
        assert_abs_diff_eq!(direct, extended, epsilon = 1e-9);
    }

    #[test]
    fn sampler_reproduces_click_count_law() {
        let d = DaviesProcess::new(rf(1.0, 0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 4000;
        let mut zero = 0usize;
        for _ in 0..n {
            if d.sample_clicks(&excited(), 1.0, &mut rng).unwrap().is_empty() {
                zero += 1;
            }
        }
        let p0 = d.click_count_probabilities_exact(excited().mat(), 1.0, 0).unwrap()[0];
        let sigma = (p0 * (1.0 - p0) / n as f64).sqrt();
        assert!(((zero as f64 / n as f64) - p0).abs() < 4.0 * sigma);
    }
}

use proptest::prelude::*;
use qfsim_core::davies::{davies_generator, RfParams};
use qfsim_core::filter::{Filter, FilterMode, FilterSpec, Integrator, PhaseLaw, RecordKind, StepInput};
use qfsim_core::lindblad::{make_rf_generator, unravel, GeneratorSpec};
use qfsim_core::linops::qubit::{lowering, sigma_x, sigma_z};
use qfsim_core::linops::{mat_exp, superop_exp, trace_distance, CMat, DensityMatrix, SuperOp, C64};
use qfsim_core::squeeze::{
    complex_structure, covariance_matrix, det2, effective_coupling, ito_table_from_coeffs, make_squeeze, mul2,
    quadrature_coeffs, quadrature_parts, squeezed_ito_coeffs, SqueezeParams,
};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn mat2() -> impl Strategy<Value = CMat> {
    prop::collection::vec(-1.0f64..1.0, 8)
        .prop_map(|v| CMat::qubit(c(v[0], v[1]), c(v[2], v[3]), c(v[4], v[5]), c(v[6], v[7])))
}

fn hermitian() -> impl Strategy<Value = CMat> {
    mat2().prop_map(|m| m.hermitian_part())
}

fn state() -> impl Strategy<Value = DensityMatrix> {
    (mat2(), 0.0f64..1.0).prop_map(|(m, mix)| {
        let pos = &m * &m.adjoint();
        let mut r = pos.scale_re(1.0 / pos.trace().re.max(1e-12));
        r = r.scale_re(1.0 - mix);
        r.add_scaled(c(0.5 * mix, 0.0), &CMat::identity(2));
        DensityMatrix::normalize(&r).unwrap()
    })
}

fn generator() -> impl Strategy<Value = GeneratorSpec> {
    (hermitian(), mat2(), mat2()).prop_map(|(h, a, b)| GeneratorSpec::new(h, vec![a, b]).unwrap())
}

/// RF model with `κ_f = cos θ`, `κ_s = sin θ` up to a phase.
fn rf_model() -> impl Strategy<Value = GeneratorSpec> {
    (0.0f64..2.0, 0.2f64..1.3, -3.0f64..3.0).prop_map(|(omega, theta, phase)| {
        make_rf_generator(omega, c(theta.cos(), 0.0), C64::from_polar(theta.sin(), phase)).unwrap()
    })
}

fn fock_params() -> impl Strategy<Value = SqueezeParams> {
    (0.0f64..20.0, prop::bool::ANY).prop_map(|(n, neg)| {
        let c0 = (n * (n + 1.0)).sqrt();
        make_squeeze(n, c(if neg { -c0 } else { c0 }, 0.0)).unwrap()
    })
}

fn taylor(a: &CMat) -> CMat {
    let mut sum = CMat::identity(2);
    let mut term = CMat::identity(2);
    for k in 1..80 {
        term = (&term * a).scale_re(1.0 / k as f64);
        sum += &term;
    }
    sum
}

/// `Σ_{k≤K} D_k(t)` with `D_0(t) = e^{t𝓛}` and
/// `D_k(t) = ∫₀ᵗ e^{(t−s)𝓛} 𝓙 D_{k−1}(s) ds`, by the trapezoid rule on a grid.
fn dyson_by_convolution(smooth: &SuperOp, jump: &SuperOp, t: f64, k_max: usize, points: usize) -> SuperOp {
    let h = t / points as f64;
    let free: Vec<SuperOp> = (0..=points)
        .map(|i| superop_exp(smooth, i as f64 * h).unwrap())
        .collect();
    let mut prev = free.clone();
    let mut total = free[points].clone();
    for _ in 0..k_max {
        let fed: Vec<SuperOp> = prev.iter().map(|d| jump.compose(d)).collect();
        let mut next = Vec::with_capacity(points + 1);
        for i in 0..=points {
            let mut acc = SuperOp::zero(smooth.dim());
            for j in 0..=i {
                let w = if j == 0 || j == i { 0.5 } else { 1.0 } * h;
                acc.add_assign(&free[i - j].compose(&fed[j]).scale_re(w));
            }
            if i == 0 {
                acc = SuperOp::zero(smooth.dim());
            }
            next.push(acc);
        }
        total.add_assign(&next[points]);
        prev = next;
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mat_exp_matches_taylor_series(m in mat2(), scale in 0.0f64..5.0) {
        let norm = m.norm_one().max(1e-12);
        let a = m.scale_re(scale / norm);
        prop_assert!((&mat_exp(&a).unwrap() - &taylor(&a)).max_abs() < 1e-10);
    }

    #[test]
    fn semigroup_preserves_trace(g in generator(), rho in state(), t in 0.0f64..10.0) {
        let out = superop_exp(&g.superop().unwrap(), t).unwrap().apply(rho.mat()).unwrap();
        prop_assert!((out.trace().re - 1.0).abs() < 1e-9);
        prop_assert!(out.trace().im.abs() < 1e-9);
    }

    #[test]
    fn trace_distance_is_a_metric(a in state(), b in state(), d in state()) {
        let ab = trace_distance(&a, &b).unwrap();
        prop_assert!((ab - trace_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ab <= trace_distance(&a, &d).unwrap() + trace_distance(&d, &b).unwrap() + 1e-12);
        prop_assert!(trace_distance(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn generator_is_traceless_and_hermitian(g in generator(), x in hermitian()) {
        let out = g.action(&x, 0.0).unwrap();
        prop_assert!(out.trace().norm() < 1e-12);
        prop_assert!(out.hermitian_residual() < 1e-12);
        let dual = g.heisenberg_action(&CMat::identity(2), 0.0).unwrap();
        prop_assert!(dual.max_abs() < 1e-12);
    }

    #[test]
    fn rf_master_equation_is_the_davies_semigroup(g in rf_model(), t in 0.0f64..5.0) {
        // rebuild the Davies parameters from the generator's couplings
        let kf = g.forward_coupling().unwrap()[(1, 0)];
        let ks = g.side_coupling().unwrap()[(1, 0)];
        let z = g.drive_at(0.0);
        let p = RfParams::new(z, kf, ks).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        let a = superop_exp(&davies_generator(&p), t).unwrap().apply(rho.mat()).unwrap();
        let b = superop_exp(&g.superop().unwrap(), t).unwrap().apply(rho.mat()).unwrap();
        prop_assert!((&a - &b).max_abs() < 1e-10);
    }

    #[test]
    fn squeezed_table_from_quadrature_coefficients(p in fock_params()) {
        let q = quadrature_coeffs(&p);
        let direct = squeezed_ito_coeffs(&p);
        let derived = ito_table_from_coeffs(&q);
        prop_assert!((direct.create_create - derived.create_create).norm() < 1e-10);
        prop_assert!((direct.create_annihilate - derived.create_annihilate).norm() < 1e-10 * (1.0 + p.n()));
        prop_assert!((direct.annihilate_create - derived.annihilate_create).norm() < 1e-10 * (1.0 + p.n()));
        prop_assert!((direct.annihilate_annihilate - derived.annihilate_annihilate).norm() < 1e-10 * (1.0 + p.n()));
        prop_assert!((q.nu.norm_sqr() - q.mu.norm_sqr() - 1.0).abs() < 1e-10 * (1.0 + p.n()));
        let j = complex_structure(&p);
        let j2 = mul2(&j, &j);
        prop_assert!((j2[0][0] + 1.0).abs() < 1e-10 && (j2[1][1] + 1.0).abs() < 1e-10);
        prop_assert!(j2[0][1].abs() < 1e-10 && j2[1][0].abs() < 1e-10);
    }

    #[test]
    fn unit_determinant_iff_fock(n in 0.0f64..10.0, re in -10.0f64..10.0, im in -10.0f64..10.0) {
        let fock = make_squeeze(n, C64::from_polar((n * (n + 1.0)).sqrt(), im)).unwrap();
        prop_assert!((det2(&covariance_matrix(&fock)) - 1.0).abs() < 1e-10 * (1.0 + n).powi(2));
        let other = SqueezeParams::unchecked(n, c(re, im));
        let det = det2(&covariance_matrix(&other));
        let fock_ok = other.fock_residual().abs() < 1e-10;
        prop_assert_eq!(fock_ok, (det - 1.0).abs() < 1e-10);
    }

    #[test]
    fn squeezed_quadratures_scale_with_amplification(p in fock_params()) {
        prop_assume!(p.c().re >= 0.0);
        let gen = GeneratorSpec::spontaneous_decay(c(0.0, 0.0), c(1.0, 0.0)).unwrap();
        let eff = effective_coupling(&p, &gen).unwrap();
        let (vr, vi) = quadrature_parts(gen.side_coupling().unwrap());
        let s = p.amplification();
        prop_assert!((eff.w_i.frobenius_norm() - s.sqrt() * vi.frobenius_norm()).abs() < 1e-9 * s);
        prop_assert!((eff.w_r.frobenius_norm() - vr.frobenius_norm() / s.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn filter_steps_keep_valid_states(
        rho in state(),
        mode_ix in 0usize..6,
        integ_ix in 0usize..3,
        draw in 0.0f64..1.0,
        xi in -4.0f64..4.0,
    ) {
        let kf = c(0.5f64.sqrt(), 0.0);
        let rf = make_rf_generator(1.0, kf, kf).unwrap();
        let commuting = GeneratorSpec::new(sigma_z().scale_re(0.3), vec![lowering().scale_re(0.6), sigma_x().scale_re(0.8)])
            .unwrap()
            .with_forward(0)
            .unwrap()
            .with_side(1)
            .unwrap();
        let (mode, gen) = match mode_ix {
            0 => (FilterMode::Counting, &rf),
            1 => (FilterMode::LoCounting { epsilon: 0.3, phase: PhaseLaw::fixed(0.4) }, &rf),
            2 => (FilterMode::Homodyne { phase: PhaseLaw::fixed(-0.7) }, &rf),
            3 => (FilterMode::Squeezed(make_squeeze(1.0, c(2f64.sqrt(), 0.0)).unwrap()), &rf),
            4 => (FilterMode::EssentiallyCommutative, &commuting),
            _ => (FilterMode::UnsqueezedDecay, &rf),
        };
        let integ = [Integrator::EulerMaruyama, Integrator::Milstein, Integrator::Exponential][integ_ix];
        let spec = FilterSpec::new(mode, 1e-3, 1.0).unwrap().with_integrator(integ);
        let f = Filter::new(&spec, gen).unwrap();
        let input = if mode.kind() == RecordKind::Counting { StepInput::Draw(draw) } else { StepInput::Draw(xi) };
        let out = f.step(0, &rho, input).unwrap();
        prop_assert!((out.state.mat().trace().re - 1.0).abs() < 1e-12);
        prop_assert!(out.state.mat().hermitian_residual() < 1e-12);
        prop_assert!(out.state.min_eigenvalue() >= -1e-8);
        if mode == FilterMode::Counting {
            prop_assert_eq!(out.value * out.value, out.value);
        }
    }
}

#[test]
fn dyson_series_matches_the_semigroup() {
    let kf = c(0.6, 0.0);
    let gen = make_rf_generator(1.3, kf, c(0.8, 0.0)).unwrap();
    let parts = unravel(&gen, gen.side_index().unwrap()).unwrap();
    let sum = dyson_by_convolution(&parts.smooth, &parts.jump, 1.0, 6, 400);
    let exact = superop_exp(&gen.superop().unwrap(), 1.0).unwrap();
    assert!(sum.max_abs_diff(&exact) < 1e-4, "{}", sum.max_abs_diff(&exact));
}

#[test]
fn counting_records_satisfy_the_counting_rule() {
    let kf = c(0.5f64.sqrt(), 0.0);
    let gen = make_rf_generator(1.0, kf, kf).unwrap();
    let spec = FilterSpec::new(FilterMode::Counting, 1e-3, 20.0).unwrap();
    for seed in 0..5 {
        let t = qfsim_core::filter::simulate_trajectory(&spec, &gen, &DensityMatrix::maximally_mixed(2), seed).unwrap();
        assert!(t.record.values().iter().all(|v| v * v == *v));
        assert!(!t.record.click_times().is_empty());
    }
}

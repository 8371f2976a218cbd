//! Squeezed white noise with parameters `(n, c)` satisfying `n(n+1) = |c|²`.

use crate::error::{Error, Result};
use crate::lindblad::GeneratorSpec;
use crate::linops::{CMat, C64, I};

const FOCK_TOL: f64 = 1e-10;

/// Mean quasiparticle number `n` and squeezing amplitude `c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SqueezeParams {
    n: f64,
    c: C64,
}

impl SqueezeParams {
    /// Validated pure squeezed noise.
    pub fn new(n: f64, c: C64) -> Result<Self> {
        if !(n.is_finite() && c.is_finite()) {
            return Err(Error::NonFinite);
        }
        if n < 0.0 {
            return Err(Error::NegativeOccupation(n));
        }
        let p = Self { n, c };
        let residual = p.fock_residual();
        if residual.abs() > FOCK_TOL {
            return Err(Error::FockCondition(residual));
        }
        Ok(p)
    }

    /// Squeezed noise with real `c = √(n(n+1))`.
    pub fn real(n: f64) -> Result<Self> {
        if n < 0.0 {
            return Err(Error::NegativeOccupation(n));
        }
        Self::new(n, C64::new((n * (n + 1.0)).sqrt(), 0.0))
    }

    pub fn vacuum() -> Self {
        Self {
            n: 0.0,
            c: C64::new(0.0, 0.0),
        }
    }

    /// Skips the Fock-condition check; only for probing the algebra with
    /// invalid parameters.
    pub fn unchecked(n: f64, c: C64) -> Self {
        Self { n, c }
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn c(&self) -> C64 {
        self.c
    }

    /// `n(n+1) − |c|²`
    pub fn fock_residual(&self) -> f64 {
        self.n * (self.n + 1.0) - self.c.norm_sqr()
    }

    /// Variance amplification `s = 2n + 1 + 2 Re c` of the observed quadrature.
    pub fn amplification(&self) -> f64 {
        2.0 * self.n + 1.0 + 2.0 * self.c.re
    }

    pub fn is_real(&self) -> bool {
        self.c.im == 0.0
    }
}

/// `(n, c)` from the CLI-style pair `(n, Re c, Im c)`.
pub fn make_squeeze(n: f64, c: C64) -> Result<SqueezeParams> {
    SqueezeParams::new(n, c)
}

/// `Q = [[2n+1+2a, 2b], [2b, 2n+1−2a]]` with `c = a + ib`.
pub fn covariance_matrix(p: &SqueezeParams) -> [[f64; 2]; 2] {
    let (a, b) = (p.c.re, p.c.im);
    let d = 2.0 * p.n + 1.0;
    [[d + 2.0 * a, 2.0 * b], [2.0 * b, d - 2.0 * a]]
}

/// `J = J₀ Q` with `J₀ = [[0, −1], [1, 0]]`.
pub fn complex_structure(p: &SqueezeParams) -> [[f64; 2]; 2] {
    let q = covariance_matrix(p);
    [[-q[1][0], -q[1][1]], [q[0][0], q[0][1]]]
}

pub fn det2(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn mul2(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Squeezed annihilator as a combination `A₀ = μ·A_s† + ν·A_s` of vacuum fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadCoeffs {
    pub mu: C64,
    pub nu: C64,
}

/// `μ = (n + c)/√s`, `ν = (n + 1 + c)/√s`
pub fn quadrature_coeffs(p: &SqueezeParams) -> QuadCoeffs {
    let root = p.amplification().sqrt();
    QuadCoeffs {
        mu: (p.c + p.n) / root,
        nu: (p.c + p.n + 1.0) / root,
    }
}

/// Coefficients of `dt` in the products of squeezed field increments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ItoTable {
    /// `dA†dA†`
    pub create_create: C64,
    /// `dA†dA`
    pub create_annihilate: C64,
    /// `dA dA†`
    pub annihilate_create: C64,
    /// `dA dA`
    pub annihilate_annihilate: C64,
}

/// `{c̄, n, n+1, c}`
pub fn squeezed_ito_coeffs(p: &SqueezeParams) -> ItoTable {
    ItoTable {
        create_create: p.c.conj(),
        create_annihilate: C64::new(p.n, 0.0),
        annihilate_create: C64::new(p.n + 1.0, 0.0),
        annihilate_annihilate: p.c,
    }
}

/// Products of `A₀ = μA† + νA` and `A₀† = μ̄A + ν̄A†` evaluated with the
/// vacuum table, where only `dA dA† = dt` survives.
pub fn ito_table_from_coeffs(q: &QuadCoeffs) -> ItoTable {
    // write dA₀ = x·dA + y·dA† and keep only the coefficient pair (x of the
    // left factor, y of the right factor)
    let ann = (q.nu, q.mu);
    let cre = (q.mu.conj(), q.nu.conj());
    let product = |l: (C64, C64), r: (C64, C64)| l.0 * r.1;
    ItoTable {
        create_create: product(cre, cre),
        create_annihilate: product(cre, ann),
        annihilate_create: product(ann, cre),
        annihilate_annihilate: product(ann, ann),
    }
}

/// Hermitian parts `(X_R, X_I)` with `X = X_R + i X_I`.
pub fn quadrature_parts(x: &CMat) -> (CMat, CMat) {
    let xd = x.adjoint();
    let re = (x + &xd).scale_re(0.5);
    let im = (x - &xd).scale(-I * 0.5);
    (re, im)
}

/// Coupling seen by the system under squeezed noise.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveCoupling {
    /// `V_nc = ((n+1+c̄)V_s − (n+c)V_s†)/√s`
    pub v_nc: CMat,
    pub w_r: CMat,
    pub w_i: CMat,
    /// Generator with the side coupling replaced by `V_nc`.
    pub generator: GeneratorSpec,
}

pub fn effective_coupling(p: &SqueezeParams, gen: &GeneratorSpec) -> Result<EffectiveCoupling> {
    let side = gen.side_index().ok_or(Error::MissingSideCoupling)?;
    let vs = &gen.couplings()[side];
    let root = p.amplification().sqrt();
    let mut v_nc = vs.scale((p.c.conj() + p.n + 1.0) / root);
    v_nc.add_scaled(-(p.c + p.n) / root, &vs.adjoint());
    let (w_r, w_i) = quadrature_parts(&v_nc);
    let generator = gen.clone().with_coupling(side, v_nc.clone())?;
    Ok(EffectiveCoupling {
        v_nc,
        w_r,
        w_i,
        generator,
    })
}

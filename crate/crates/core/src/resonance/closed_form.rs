//! Closed-form resonance response of a single clamped soft segment of
//! length `2a` with unit coefficients, attached to a stiff cross of total
//! length 2 per cell.
//!
//! The transverse response involves `mu1 = sqrt(lambda + sqrt(lambda))` and
//! `mu2^2 = lambda - sqrt(lambda)`, which changes sign at `lambda = 1`. All
//! formulas below are written in terms of
//!
//! ```text
//! s2 = sin(mu2 a) / mu2      c2 = cos(mu2 a)
//! ```
//!
//! which are entire functions of `mu2^2` (they become `sinh(nu a)/nu` and
//! `cosh(nu a)` for `lambda < 1`), so one code path covers both branches and
//! the branch point without special cases.

use std::f64::consts::PI;

use crate::error::{Error, PoleKind, Result};

/// Relative distance to a pole below which the closed forms refuse to evaluate.
pub const POLE_TOL: f64 = 1e-8;

/// Which form the `mu2` terms take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mu2Branch {
    /// `lambda > 1`: trigonometric.
    Oscillatory,
    /// `0 < lambda < 1`: hyperbolic, `mu2 = i nu`.
    Hyperbolic,
    /// `lambda = 1`: `mu2 = 0`.
    BranchPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormParams {
    pub a: f64,
    pub lambda: f64,
    pub mu1: f64,
    /// `|mu2|`; the branch flag says whether it is real or imaginary.
    pub mu2: f64,
    pub branch: Mu2Branch,
}

impl ClosedFormParams {
    pub fn new(lambda: f64, a: f64) -> Result<Self> {
        check_args(lambda, a)?;
        let r = lambda.sqrt();
        let m2 = lambda - r;
        let branch = if m2 > 0.0 {
            Mu2Branch::Oscillatory
        } else if m2 < 0.0 {
            Mu2Branch::Hyperbolic
        } else {
            Mu2Branch::BranchPoint
        };
        Ok(ClosedFormParams { a, lambda, mu1: (lambda + r).sqrt(), mu2: m2.abs().sqrt(), branch })
    }

    /// Signed `mu2^2`.
    pub fn mu2_sq(&self) -> f64 {
        self.lambda - self.lambda.sqrt()
    }

    /// `m`-th clamped longitudinal eigenvalue, `m >= 1`.
    pub fn lambda_m(&self, m: usize) -> f64 {
        longitudinal_pole(m, self.a)
    }

    /// Asymptotic transverse pole location in `sqrt(lambda)`.
    pub fn big_lambda_n(&self, n: usize) -> f64 {
        PI / (2.0 * self.a) + PI / self.a * n as f64
    }
}

fn check_args(lambda: f64, a: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be non-negative, got {lambda}")));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("half length must be positive, got {a}")));
    }
    Ok(())
}

pub fn longitudinal_pole(m: usize, a: f64) -> f64 {
    let x = PI * (m as f64 - 0.5) / a;
    x * x
}

/// Longitudinal poles in `(0, lambda_max]`.
pub fn longitudinal_poles(a: f64, lambda_max: f64) -> Vec<f64> {
    (1..).map(|m| longitudinal_pole(m, a)).take_while(|&l| l <= lambda_max).collect()
}

/// `(sin(mu a)/mu, cos(mu a))` as functions of signed `mu^2`.
pub fn s2_c2(mu2_sq: f64, a: f64) -> (f64, f64) {
    let x2 = mu2_sq * a * a;
    if x2.abs() < 1e-3 {
        let x4 = x2 * x2;
        let x6 = x4 * x2;
        let s = a * (1.0 - x2 / 6.0 + x4 / 120.0 - x6 / 5040.0);
        let c = 1.0 - x2 / 2.0 + x4 / 24.0 - x6 / 720.0;
        (s, c)
    } else if mu2_sq > 0.0 {
        let m = mu2_sq.sqrt();
        ((m * a).sin() / m, (m * a).cos())
    } else {
        let m = (-mu2_sq).sqrt();
        ((m * a).sinh() / m, (m * a).cosh())
    }
}

fn cos_signed(mu2_sq: f64, y: f64) -> f64 {
    s2_c2(mu2_sq, y.abs()).1
}

/// `2 lambda + 2 sqrt(lambda) tan(sqrt(lambda) a)`.
pub fn beta1_closed(lambda: f64, a: f64) -> Result<f64> {
    check_args(lambda, a)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let r = lambda.sqrt();
    let c = (r * a).cos();
    if c.abs() < POLE_TOL {
        return Err(Error::Pole { lambda, kind: PoleKind::Longitudinal });
    }
    Ok(2.0 * lambda + 2.0 * r * (r * a).sin() / c)
}

/// Integral of the longitudinal response `cos(sqrt(l) y)/cos(sqrt(l) a) - 1` over `[-a, a]`.
pub fn u_mean_closed(lambda: f64, a: f64) -> Result<f64> {
    check_args(lambda, a)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let r = lambda.sqrt();
    let c = (r * a).cos();
    if c.abs() < POLE_TOL {
        return Err(Error::Pole { lambda, kind: PoleKind::Longitudinal });
    }
    Ok(2.0 * (r * a).tan() / r - 2.0 * a)
}

/// Longitudinal response at `y`.
pub fn u_profile_closed(lambda: f64, a: f64, y: f64) -> Result<f64> {
    check_args(lambda, a)?;
    let r = lambda.sqrt();
    let c = (r * a).cos();
    if c.abs() < POLE_TOL {
        return Err(Error::Pole { lambda, kind: PoleKind::Longitudinal });
    }
    Ok((r * y).cos() / c - 1.0)
}

/// Transverse amplitude profile `A cos(mu1 y) + B cos(mu2 y)`, equal to one
/// at `y = +-a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseMode {
    pub params: ClosedFormParams,
    /// Coefficient of `cos(mu1 y)`.
    pub amp_a: f64,
    /// Coefficient of `cos(mu2 y)` (`cosh(nu y)` below the branch point).
    pub amp_b: f64,
    /// Integral of `V = Vhat - 1` over `[-a, a]`.
    pub mean_v: f64,
    /// `sin(mu1 a) * s2 / den`, the reduced response that enters beta2.
    response: f64,
}

impl TransverseMode {
    pub fn profile(&self, y: f64) -> f64 {
        self.amp_a * (self.params.mu1 * y).cos() + self.amp_b * cos_signed(self.params.mu2_sq(), y)
    }

    /// The characteristic-equation residual `A sin(mu1 a) - B mu1 s2`,
    /// i.e. the second amplitude relation divided by `mu2`.
    pub fn amplitude_residual(&self) -> f64 {
        let p = &self.params;
        let (s2, _) = s2_c2(p.mu2_sq(), p.a);
        self.amp_a * (p.mu1 * p.a).sin() - self.amp_b * p.mu1 * s2
    }
}

/// Reduced transverse denominator `mu1 cos(mu1 a) s2 + c2 sin(mu1 a)`;
/// its zeros are the clamped transverse eigenvalues.
pub fn transverse_denominator(lambda: f64, a: f64) -> f64 {
    let r = lambda.sqrt();
    let mu1 = (lambda + r).sqrt();
    let (s2, c2) = s2_c2(lambda - r, a);
    mu1 * (mu1 * a).cos() * s2 + c2 * (mu1 * a).sin()
}

pub fn transverse_mode_closed(lambda: f64, a: f64) -> Result<TransverseMode> {
    let params = ClosedFormParams::new(lambda, a)?;
    let (s2, c2) = s2_c2(params.mu2_sq(), a);
    let sin1 = (params.mu1 * a).sin();
    let den = params.mu1 * (params.mu1 * a).cos() * s2 + c2 * sin1;
    if lambda == 0.0 {
        // V-hat is identically one
        return Ok(TransverseMode { params, amp_a: 0.0, amp_b: 1.0, mean_v: 0.0, response: 0.0 });
    }
    if den.abs() < POLE_TOL * (sin1 * s2).abs() || den == 0.0 {
        return Err(Error::Pole { lambda, kind: PoleKind::Transverse });
    }
    let response = sin1 * s2 / den;
    Ok(TransverseMode {
        params,
        amp_a: params.mu1 * s2 / den,
        amp_b: sin1 / den,
        mean_v: 4.0 * response - 2.0 * a,
        response,
    })
}

/// `2 lambda + 4 lambda / (mu1 cot(mu1 a) + mu2 cot(mu2 a))`, continued
/// through `lambda = 1` and into the hyperbolic branch.
pub fn beta2_closed(lambda: f64, a: f64) -> Result<f64> {
    let m = transverse_mode_closed(lambda, a)?;
    Ok(2.0 * lambda + 4.0 * lambda * m.response)
}

/// Clamped transverse eigenvalues in `(0, lambda_max]`, located by sign
/// changes of [`transverse_denominator`] on `samples` points and bisection.
pub fn transverse_poles(a: f64, lambda_max: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(100);
    let mut out = Vec::new();
    let mut lo = lambda_max * 1e-9;
    let mut flo = transverse_denominator(lo, a);
    for i in 1..=n {
        let hi = lambda_max * i as f64 / n as f64;
        let fhi = transverse_denominator(hi, a);
        if flo == 0.0 {
            out.push(lo);
        } else if flo * fhi < 0.0 {
            out.push(bisect_root(|l| transverse_denominator(l, a), lo, hi, 1e-13));
        }
        lo = hi;
        flo = fhi;
    }
    out
}

/// Root of a continuous function with a sign change on `[lo, hi]`.
pub fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * mid.abs().max(1e-300) {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

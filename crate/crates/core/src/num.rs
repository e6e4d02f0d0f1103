//! Scalar abstraction and the handful of special functions the estimators
//! need (log-gamma, regularized incomplete beta, normal/t tail areas).
//!
//! Everything here is generic over [`Real`] so the numeric kernels work for
//! `f32` and `f64` alike; the pipeline pins [`crate::Scalar`] = `f64`.

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + NumCast + std::fmt::Debug + Send + Sync + 'static {
    /// Shorthand for lossy conversion from `f64` literals.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    /// Lossy conversion to `f64` for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        NumCast::from(self).expect("scalar convertible to f64")
    }
}

impl<T> Real for T where T: Float + FromPrimitive + NumCast + std::fmt::Debug + Send + Sync + 'static {}

/// Natural log of the gamma function (Lanczos approximation, g = 5, n = 6).
///
/// Accurate to ~1e-10 relative for x > 0, which is ample for p-values.
pub fn ln_gamma<F: Real>(x: F) -> F {
    debug_assert!(x > F::zero());
    const COEF: [f64; 6] = [
        76.180_091_729_471_46,
        -86.505_320_329_416_77,
        24.014_098_240_830_91,
        -1.231_739_572_450_155,
        0.120_865_097_386_617_7e-2,
        -0.539_523_938_495_3e-5,
    ];
    let x64 = x;
    let mut y = x64;
    let tmp = x64 + F::of(5.5);
    let tmp = tmp - (x64 + F::of(0.5)) * tmp.ln();
    let mut ser = F::of(1.000_000_000_190_015);
    for c in COEF {
        y = y + F::one();
        ser = ser + F::of(c) / y;
    }
    -tmp + (F::of(2.506_628_274_631_000_5) * ser / x64).ln()
}

/// Continued-fraction evaluation for the incomplete beta function.
fn beta_cf<F: Real>(a: F, b: F, x: F) -> F {
    let max_iter = 200;
    let eps = F::of(3e-16);
    let fpmin = F::of(1e-300);

    let qab = a + b;
    let qap = a + F::one();
    let qam = a - F::one();
    let mut c = F::one();
    let mut d = F::one() - qab * x / qap;
    if d.abs() < fpmin {
        d = fpmin;
    }
    d = F::one() / d;
    let mut h = d;
    for m in 1..=max_iter {
        let m_f = F::of(m as f64);
        let m2 = m_f + m_f;
        let aa = m_f * (b - m_f) * x / ((qam + m2) * (a + m2));
        d = F::one() + aa * d;
        if d.abs() < fpmin {
            d = fpmin;
        }
        c = F::one() + aa / c;
        if c.abs() < fpmin {
            c = fpmin;
        }
        d = F::one() / d;
        h = h * d * c;
        let aa = -(a + m_f) * (qab + m_f) * x / ((a + m2) * (qap + m2));
        d = F::one() + aa * d;
        if d.abs() < fpmin {
            d = fpmin;
        }
        c = F::one() + aa / c;
        if c.abs() < fpmin {
            c = fpmin;
        }
        d = F::one() / d;
        let del = d * c;
        h = h * del;
        if (del - F::one()).abs() < eps {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn inc_beta<F: Real>(a: F, b: F, x: F) -> F {
    if x <= F::zero() {
        return F::zero();
    }
    if x >= F::one() {
        return F::one();
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (F::one() - x).ln();
    let front = ln_front.exp();
    // Use the continued fraction directly where it converges fast.
    if x < (a + F::one()) / (a + b + F::of(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        F::one() - front * beta_cf(b, a, F::one() - x) / b
    }
}

/// Two-sided p-value for a t statistic with `dof` degrees of freedom.
pub fn t_two_sided_p<F: Real>(t: F, dof: F) -> F {
    if !t.is_finite() || dof <= F::zero() {
        return F::nan();
    }
    let x = dof / (dof + t * t);
    inc_beta(dof / F::of(2.0), F::of(0.5), x)
}

/// Complementary error function (Chebyshev fit; ~1.2e-7 relative error).
pub fn erfc<F: Real>(x: F) -> F {
    let z = x.abs();
    let t = F::one() / (F::one() + z / F::of(2.0));
    let poly = F::of(-1.26551223)
        + t * (F::of(1.00002368)
            + t * (F::of(0.37409196)
                + t * (F::of(0.09678418)
                    + t * (F::of(-0.18628806)
                        + t * (F::of(0.27886807)
                            + t * (F::of(-1.13520398)
                                + t * (F::of(1.48851587)
                                    + t * (F::of(-0.82215223) + t * F::of(0.17087277)))))))));
    let ans = t * (-z * z + poly).exp();
    if x >= F::zero() {
        ans
    } else {
        F::of(2.0) - ans
    }
}

/// Two-sided p-value for a standard-normal statistic (Wald test).
pub fn normal_two_sided_p<F: Real>(z: F) -> F {
    erfc(z.abs() / F::of(std::f64::consts::SQRT_2))
}

/// Maximizes a unimodal function on `[lo, hi]` by golden-section search.
///
/// Returns `(argmax, max)`. `tol` is the absolute width of the final
/// bracketing interval; the iteration cap guards against tolerances finer
/// than the float spacing at the bracket.
pub fn golden_section_max<F: Real>(mut lo: F, mut hi: F, tol: F, mut f: impl FnMut(F) -> F) -> (F, F) {
    let inv_phi = F::of(0.618_033_988_749_894_9);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iterations = 0;
    while (hi - lo).abs() > tol && iterations < 256 {
        iterations += 1;
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = (lo + hi) / F::of(2.0);
    (mid, f(mid))
}

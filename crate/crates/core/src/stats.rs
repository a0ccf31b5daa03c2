//! Pearson correlation with exact Student-t significance testing.

use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("sequences have different lengths: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("zero variance in input sequence")]
    ZeroVariance,
    #[error("non-positive entry {value} at index {index}")]
    NonPositive { index: usize, value: f64 },
}

/// Sample Pearson correlation coefficient, in [−1, 1].
pub fn pearson<R: Real>(x: &[R], y: &[R]) -> Result<R, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewPoints(n));
    }
    let nf = R::from_usize(n).unwrap();
    let mx = x.iter().copied().sum::<R>() / nf;
    let my = y.iter().copied().sum::<R>() / nf;
    let mut sxy = R::zero();
    let mut sxx = R::zero();
    let mut syy = R::zero();
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == R::zero() || syy == R::zero() {
        return Err(StatsError::ZeroVariance);
    }
    let rho = sxy / (sxx * syy).sqrt();
    Ok(rho.max(-R::one()).min(R::one()))
}

/// Two-sided p-value under the null of zero correlation, via the exact
/// Student-t distribution with n − 2 degrees of freedom.
pub fn pearson_p_value<R: Real>(rho: R, n: usize) -> Result<R, StatsError> {
    if n < 3 {
        return Err(StatsError::TooFewPoints(n));
    }
    let rho64 = rho.to_f64().unwrap();
    if rho64.abs() >= 1.0 {
        return Ok(R::zero());
    }
    let df = (n - 2) as f64;
    let t = rho64 * (df / (1.0 - rho64 * rho64)).sqrt();
    Ok(R::from_f64_c(student_t_two_sided_p(t.abs(), df)))
}

/// P(|T| > t) for Student's t with `df` degrees of freedom:
/// I_{df/(df+t²)}(df/2, 1/2).
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    regularized_incomplete_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Elementwise natural logarithm; rejects non-positive entries.
pub fn log_transform<R: Real>(x: &[R]) -> Result<Vec<R>, StatsError> {
    x.iter()
        .enumerate()
        .map(|(index, &v)| {
            if v <= R::zero() {
                Err(StatsError::NonPositive {
                    index,
                    value: v.to_f64().unwrap_or(f64::NAN),
                })
            } else {
                Ok(v.ln())
            }
        })
        .collect()
}

/// Regularized incomplete beta function I_x(a, b), by the continued fraction
/// expansion with modified Lentz iteration. Relative accuracy ~1e-10.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-14;
    const TINY: f64 = 1e-30;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation of ln Γ(x).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEFFS {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

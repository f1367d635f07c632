//! Gamma and Mittag-Leffler functions on the non-positive real axis.
//!
//! `E_{α,β}(z) = Σ_k z^k / Γ(αk + β)` is evaluated for `0 < α ≤ 1`, `β > 0`
//! and `z ≤ 0` by one of three branches:
//!
//! - [`Branch::Series`]: the power series with Neumaier summation, accepted
//!   only while the largest term stays small enough that cancellation cannot
//!   spoil the result;
//! - [`Branch::Asymptotic`]: `-Σ_{k=1..K} (-x)^{-k} / Γ(β - αk)` with `x = -z`,
//!   accepted when the first omitted term and the exponentially small
//!   remainder are both below tolerance;
//! - [`Branch::Integral`]: the real-line integral representation
//!   `E_{α,β}(-x) = (1/π) ∫_0^∞ e^{-r} r^{α-β} (r^α sin πβ + x sin π(β-α))
//!   / (r^{2α} + 2x r^α cos πα + x²) dr`, valid for `β < 1 + α` and reached
//!   for larger `β` through `E_{α,β}(z) = (E_{α,β-α}(z) - 1/Γ(β-α)) / z`.
//!
//! `α = 1, β = 1` is the exponential and reported as [`Branch::Exponential`].

mod quad;

use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::fmt;

/// Gamma function.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / (sin_pi(x) * gamma(1.0 - x))
    } else {
        libm::tgamma(x)
    }
}

/// Natural logarithm of `|Γ(x)|`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        (PI / sin_pi(x).abs()).ln() - ln_gamma(1.0 - x)
    } else {
        libm::lgamma(x)
    }
}

/// Reciprocal Gamma function, entire: zero at the non-positive integers.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.round() {
        return 0.0;
    }
    if x >= 0.5 {
        if x > 170.0 {
            (-libm::lgamma(x)).exp()
        } else {
            1.0 / libm::tgamma(x)
        }
    } else {
        // reflection: 1/Γ(x) = Γ(1-x) sin(πx) / π
        let y = 1.0 - x;
        let s = sin_pi(x);
        if y > 170.0 {
            s.signum() * (libm::lgamma(y) + s.abs().ln() - PI.ln()).exp()
        } else {
            libm::tgamma(y) * s / PI
        }
    }
}

/// `sin(πx)` with exact zeros at the integers.
fn sin_pi(x: f64) -> f64 {
    let n = x.round();
    let r = x - n;
    let s = (PI * r).sin();
    if (n as i64) % 2 == 0 {
        s
    } else {
        -s
    }
}

/// Validated Mittag-Leffler query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlQuery {
    pub alpha: f64,
    pub beta: f64,
    pub z: f64,
}

impl MlQuery {
    pub fn new(alpha: f64, beta: f64, z: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("alpha = {alpha} outside (0, 1]")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("beta = {beta} must be positive")));
        }
        if !(z <= 0.0) || !z.is_finite() {
            return Err(Error::Domain(format!("z = {z} must be finite and non-positive")));
        }
        Ok(Self { alpha, beta, z })
    }
}

/// Evaluation branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Series,
    Asymptotic,
    Integral,
    Exponential,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Series => "series",
            Branch::Asymptotic => "asymptotic",
            Branch::Integral => "integral",
            Branch::Exponential => "exponential",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Branch selection parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlOptions {
    /// The series is attempted only for `|z| ≤ z_switch`.
    pub z_switch: f64,
    /// Number of terms `K` of the asymptotic expansion.
    pub asymptotic_terms: usize,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self { z_switch: 12.0, asymptotic_terms: 20 }
    }
}

/// Value together with the branch that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlValue {
    pub value: f64,
    pub branch: Branch,
}

// largest series term tolerated, absolute and relative to the sum
const SERIES_MAX_TERM: f64 = 1e3;
const SERIES_MAX_GROWTH: f64 = 1e2;
const INTEGRAL_REL_TOL: f64 = 1e-14;
// beyond this r the factor e^{-r} makes the integrand negligible
const INTEGRAL_R_MAX: f64 = 80.0;

/// `E_{α,β}(z)` with default options.
pub fn ml_eval(q: &MlQuery) -> Result<f64> {
    ml_eval_with(q, &MlOptions::default()).map(|v| v.value)
}

/// `E_{α,β}(-x)` for `x ≥ 0`; shorthand used by the kernels.
pub fn ml_neg(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    ml_eval(&MlQuery::new(alpha, beta, -x)?)
}

/// `E_{α,β}(z)` and the branch used.
pub fn ml_eval_with(q: &MlQuery, opts: &MlOptions) -> Result<MlValue> {
    let (a, b, x) = (q.alpha, q.beta, -q.z);
    if x == 0.0 {
        return Ok(MlValue { value: rgamma(b), branch: Branch::Series });
    }
    if a == 1.0 && b == 1.0 {
        return Ok(MlValue { value: (-x).exp(), branch: Branch::Exponential });
    }
    if x <= opts.z_switch {
        if let Some(v) = series(a, b, x) {
            return Ok(MlValue { value: v, branch: Branch::Series });
        }
    }
    if x >= opts.z_switch {
        if let Some(v) = asymptotic(a, b, x, opts.asymptotic_terms) {
            return Ok(MlValue { value: v, branch: Branch::Asymptotic });
        }
    }
    integral(a, b, x).map(|v| MlValue { value: v, branch: Branch::Integral })
}

/// Evaluates with a forced branch; fails when that branch cannot certify the
/// requested accuracy at this point.
pub fn ml_eval_branch(q: &MlQuery, branch: Branch, opts: &MlOptions) -> Result<f64> {
    let (a, b, x) = (q.alpha, q.beta, -q.z);
    let refuse = |what: &str| Error::Accuracy(format!("{what} branch not valid at alpha={a}, beta={b}, z={}", q.z));
    match branch {
        Branch::Series => {
            if x == 0.0 {
                Ok(rgamma(b))
            } else {
                series(a, b, x).ok_or_else(|| refuse("series"))
            }
        }
        Branch::Asymptotic => {
            if x == 0.0 {
                return Err(refuse("asymptotic"));
            }
            asymptotic(a, b, x, opts.asymptotic_terms).ok_or_else(|| refuse("asymptotic"))
        }
        Branch::Integral => {
            if x == 0.0 {
                Ok(rgamma(b))
            } else {
                integral(a, b, x)
            }
        }
        Branch::Exponential => {
            if a == 1.0 && b == 1.0 {
                Ok((-x).exp())
            } else {
                Err(refuse("exponential"))
            }
        }
    }
}

/// Power series with Neumaier compensation; `None` when the terms grow too
/// large for double precision to resolve the alternating sum.
fn series(a: f64, b: f64, x: f64) -> Option<f64> {
    let lx = x.ln();
    // past this index the term ratio x / (αk)^α is below one
    let k_peak = x.powf(1.0 / a) / a + 1.0;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut max_term = 0.0f64;
    let mut k = 0usize;
    loop {
        let arg = a * k as f64 + b;
        let direct = x.powi(k as i32) * rgamma(arg);
        let signed = if direct.is_finite() && arg <= 170.0 {
            direct
        } else {
            (k as f64 * lx - ln_gamma(arg)).exp() * rgamma(arg).signum()
        };
        let mag = signed.abs();
        let term = if k % 2 == 0 { signed } else { -signed };
        max_term = max_term.max(mag);
        if max_term > SERIES_MAX_TERM {
            return None;
        }
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        if k as f64 > k_peak && mag <= 1e-17 * (sum + comp).abs().max(1e-300) {
            break;
        }
        k += 1;
        if k > 100_000 {
            return None;
        }
    }
    let total = sum + comp;
    if max_term > SERIES_MAX_GROWTH * total.abs() {
        return None;
    }
    Some(total)
}

/// Asymptotic expansion for large `x`; `None` when either remainder is not
/// negligible.
fn asymptotic(a: f64, b: f64, x: f64, terms: usize) -> Option<f64> {
    if terms == 0 {
        return None;
    }
    let term = |k: usize| -> f64 {
        // -(-x)^{-k} / Γ(β - αk)
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        sign * (-(k as f64) * x.ln()).exp() * rgamma(b - a * k as f64)
    };
    let mut sum = 0.0;
    for k in 1..=terms {
        sum += term(k);
    }
    if sum == 0.0 || !sum.is_finite() {
        return None;
    }
    let next = term(terms + 1).abs().max(term(terms + 2).abs());
    let ln_size = sum.abs().ln().abs();
    if a < 1.0 {
        let s = (PI * a).sin();
        if next > 1e-15 * sum.abs() * s {
            return None;
        }
        let need = 40.0 + 2.0 * (1.0 / s).ln() + ln_size + ((a - b) / a).abs() * x.max(1.0).ln();
        if x.powf(1.0 / a) < need {
            return None;
        }
    } else {
        if next > 1e-15 * sum.abs() {
            return None;
        }
        let need = 40.0 + ln_size + (1.0 - b).abs() * x.max(1.0).ln();
        if x < need {
            return None;
        }
    }
    Some(sum)
}

fn integral(a: f64, b: f64, x: f64) -> Result<f64> {
    if a < 1.0 && b > 1.0 && b <= 1.0 + 0.5 * a {
        return real_line(a, b, x);
    }
    if b > 1.0 && x < 1.0 {
        // each downward step divides by x
        let steps = ((b - 1.0) / a).ceil();
        if steps * (1.0 / x).ln() > 4.0 * std::f64::consts::LN_10 {
            return Err(Error::Accuracy(format!(
                "integral for E_({a},{b})(-{x}) needs {steps} reductions that amplify by 1/x"
            )));
        }
    }
    if b > 1.0 {
        // E_{α,β}(-x) = (1/Γ(β-α) - E_{α,β-α}(-x)) / x
        let lower = if a == 1.0 && b < 2.0 {
            integral_alpha_one(b, x)?
        } else {
            integral(a, b - a, x)?
        };
        if a == 1.0 && b < 2.0 {
            return Ok(lower);
        }
        return Ok((rgamma(b - a) - lower) / x);
    }
    if a == 1.0 {
        // upward recurrence E_{1,β}(-x) = 1/Γ(β) - x E_{1,β+1}(-x)
        let upper = integral_alpha_one(b + 1.0, x)?;
        return Ok(rgamma(b) - x * upper);
    }
    real_line(a, b, x)
}

/// `E_{1,β}(-x) = (1/Γ(β-1)) ∫_0^1 e^{-xv} (1-v)^{β-2} dv` for `1 < β < 2`
/// and `β ≥ 2` alike, after the substitution `1 - v = w^p`, `p = 1/(β-1)`.
fn integral_alpha_one(b: f64, x: f64) -> Result<f64> {
    let p = 1.0 / (b - 1.0);
    let f = |w: f64| p * (-x * (1.0 - w.powf(p))).exp();
    let (v, _) = quad::tanh_sinh(f, 0.0, 1.0, INTEGRAL_REL_TOL, 1e-300)
        .ok_or_else(|| Error::Accuracy(format!("integral for E_(1,{b})(-{x}) did not converge")))?;
    Ok(v * rgamma(b - 1.0))
}

/// Real-line representation for `0 < α < 1`, `0 < β < 1 + α`, `x > 0`.
fn real_line(a: f64, b: f64, x: f64) -> Result<f64> {
    // r = s^m removes the endpoint factor r^{α-β}
    let m = 1.0 / (1.0 + a - b);
    let (sb, sba, ca, sa) = ((PI * b).sin(), (PI * (b - a)).sin(), (PI * a).cos(), sin_pi(a));
    let f = |s: f64| -> f64 {
        let r = s.powf(m);
        let ra = s.powf(m * a);
        let num = ra * sb + x * sba;
        let den = (ra + x * ca).powi(2) + (x * sa).powi(2);
        m * (-r).exp() * num / den
    };
    let mut pts: Vec<f64> = vec![1.0, 4.0, 16.0, 40.0];
    let scale = x.powf(1.0 / a);
    pts.extend([0.1 * scale, scale, 10.0 * scale]);
    if ca < 0.0 {
        let rs = (x * -ca).powf(1.0 / a);
        let w = rs * (PI * (1.0 - a)).tan() / a;
        pts.extend([rs, rs + w, rs + 3.0 * w]);
        if rs > w {
            pts.push(rs - w);
        }
        if rs > 3.0 * w {
            pts.push(rs - 3.0 * w);
        }
    }
    pts.retain(|p| p.is_finite() && *p > 0.0 && *p < INTEGRAL_R_MAX);
    pts.push(INTEGRAL_R_MAX);
    pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    pts.dedup_by(|p, q| (*p - *q).abs() <= 1e-12 * q.abs());
    // the resonance near r^α = x|cos πα| is conditioned like 1/sin πα
    let tol = INTEGRAL_REL_TOL.max(8.0 * f64::EPSILON / sa);
    let mut total = 0.0;
    let mut unresolved = 0.0;
    let mut lo = 0.0;
    for &p in &pts {
        let hi = p.powf(1.0 / m);
        if hi <= lo {
            continue;
        }
        let (v, delta, ok) = quad::tanh_sinh_best(f, lo, hi, tol, 1e-300).ok_or_else(|| {
            Error::Accuracy(format!("integral for E_({a},{b})(-{x}) is not finite on [{lo}, {hi}]"))
        })?;
        if !ok {
            unresolved += delta;
        }
        total += v;
        lo = hi;
    }
    // pieces that stalled at their rounding floor are fine if small overall
    if unresolved > 1e-12 * total.abs() {
        return Err(Error::Accuracy(format!(
            "integral for E_({a},{b})(-{x}) did not converge: {:e} +- {:e}",
            total / PI,
            unresolved / PI
        )));
    }
    Ok(total / PI)
}

/// Two-sided envelope `m1/(1+z) ≤ E_{α,β}(-z) ≤ m2/(1+z)` on sampled `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeConstants {
    pub m1: f64,
    pub m2: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Largest sampled `z`.
    pub grid_max: f64,
}

impl EnvelopeConstants {
    /// Whether `E_{α,β}(-z)` lies inside the envelope at `z`.
    pub fn brackets(&self, z: f64) -> Result<bool> {
        let g = ml_neg(self.alpha, self.beta, z)? * (1.0 + z);
        Ok(self.m1 <= g && g <= self.m2)
    }
}

/// `n` samples on `[0, grid_max]`: zero followed by `n - 1` log-spaced points
/// from `min(1e-4, grid_max·1e-6)` to `grid_max`.
pub fn log_samples(grid_max: f64, n: usize) -> Vec<f64> {
    let lo = (1e-4f64).min(grid_max * 1e-6);
    let mut out = Vec::with_capacity(n);
    out.push(0.0);
    let m = n.saturating_sub(1);
    let (l0, l1) = (lo.ln(), grid_max.ln());
    for i in 0..m {
        let f = if m == 1 { 1.0 } else { i as f64 / (m - 1) as f64 };
        out.push((l0 + f * (l1 - l0)).exp());
    }
    if let Some(last) = out.last_mut() {
        *last = grid_max;
    }
    out
}

/// Envelope of `E_{α,α}`.
pub fn estimate_envelope(alpha: f64, grid_max: f64, n_samples: usize) -> Result<EnvelopeConstants> {
    estimate_envelope_beta(alpha, alpha, grid_max, n_samples)
}

/// Envelope of `E_{α,β}`: sampled minimum of `E_{α,β}(-z)(1+z)` shrunk by 1%
/// and sampled maximum grown by 1%.
pub fn estimate_envelope_beta(alpha: f64, beta: f64, grid_max: f64, n_samples: usize) -> Result<EnvelopeConstants> {
    if n_samples < 100 {
        return Err(Error::Domain(format!("n_samples = {n_samples} must be at least 100")));
    }
    if !(grid_max > 0.0) || !grid_max.is_finite() {
        return Err(Error::Domain(format!("grid_max = {grid_max} must be positive")));
    }
    MlQuery::new(alpha, beta, 0.0)?;
    let zs = log_samples(grid_max, n_samples);
    let vals = crate::par::map_range(zs.len(), |i| ml_neg(alpha, beta, zs[i]).map(|e| e * (1.0 + zs[i])));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vals {
        let v = v?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(lo > 0.0) {
        return Err(Error::Accuracy(format!(
            "E_({alpha},{beta})(-z)(1+z) reaches {lo:e} on [0, {grid_max}]; no positive lower constant"
        )));
    }
    Ok(EnvelopeConstants { m1: 0.99 * lo, m2: 1.01 * hi, alpha, beta, grid_max })
}

/// `E_{α,1}(-λ t^α) / E_{α,1}(-λ T^α)`.
pub fn kernel_ratio(alpha: f64, lambda: f64, t: f64, horizon: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda = {lambda} must be positive")));
    }
    if !(t >= 0.0 && t <= horizon) {
        return Err(Error::Domain(format!("t = {t} outside [0, {horizon}]")));
    }
    let den = ml_neg(alpha, 1.0, lambda * horizon.powf(alpha))?;
    if den < 1e-300 {
        return Err(Error::Overflow { lambda, denominator: den });
    }
    let num = ml_neg(alpha, 1.0, lambda * t.powf(alpha))?;
    Ok(num / den)
}

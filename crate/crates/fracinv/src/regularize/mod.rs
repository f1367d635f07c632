//! Backward reconstruction: filtered spectral operators, the Picard solver
//! for the regularised integral equation, the forward solver and the explicit
//! error bounds.
//!
//! Per mode the kernel is `e_j(τ) = E_{α,1}(-λ_j τ^α)` and the regularised
//! solution satisfies
//! `u_j(t) = A_j(t) (φ̂_j - ∫_0^T e_j(T-s) f_j(s) ds) + ∫_0^t e_j(t-s) f_j(s) ds`
//! with a filter-dependent multiplier `A_j(t)`.

mod bounds;
mod solver;
mod source;

pub use bounds::{theoretical_bound, BoundContext, BoundMethod};
pub use solver::{solve_backward, solve_forward, BackwardSolver, PicardOptions, SolveResult};
pub use source::{
    manufactured_exact, sine_product_coefficient, FnSource, LinearSource, ManufacturedSource, Source, ZeroSource,
};

use crate::artifact::{fmt_f64, KeyValues};
use crate::error::{Error, FilterViolation, Result};
use crate::mlf::{estimate_envelope_beta, ml_neg, EnvelopeConstants};
use crate::spectral::{ModeSet, SpectralField};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Kernel denominators below this are treated as overflow of `1/e_j(T)`.
const MIN_DENOMINATOR: f64 = 1e-300;

/// Uniform time grid on `[0, T]` with an odd number of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_nodes: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Domain(format!("horizon T = {horizon} must be positive")));
        }
        if n_nodes < 3 || n_nodes % 2 == 0 {
            return Err(Error::Resolution(format!("time grid needs an odd node count >= 3, got {n_nodes}")));
        }
        let h = horizon / (n_nodes - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_nodes).map(|i| i as f64 * h).collect();
        nodes[n_nodes - 1] = horizon;
        Ok(Self { horizon, nodes })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.horizon / (self.nodes.len() - 1) as f64
    }

    /// Index of the node equal to `t` (to `1e-9·h`).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let h = self.step();
        let i = (t / h).round();
        if i < 0.0 || i as usize >= self.nodes.len() || (t - self.nodes[i as usize]).abs() > 1e-9 * h {
            return Err(Error::NodeMismatch(t));
        }
        Ok(i as usize)
    }
}

/// Data of a backward problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub dim: usize,
    pub alpha: f64,
    pub horizon: f64,
    pub source: Arc<dyn Source>,
    /// Declared global Lipschitz constant `K` of the source in `u`.
    pub lipschitz: f64,
    /// Estimated final data.
    pub phi_hat: SpectralField,
}

impl ProblemSpec {
    /// Requires `0 < α < 1` and `T > 0`.
    pub fn new(alpha: f64, horizon: f64, source: Arc<dyn Source>, lipschitz: f64, phi_hat: SpectralField) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1)")));
        }
        Self::build(alpha, horizon, source, lipschitz, phi_hat)
    }

    /// As [`ProblemSpec::new`] but also admits `α = 1`, where every kernel is
    /// the exponential `e^{-λt}`. Meant for consistency checks against the
    /// classical backward heat problem.
    pub fn with_unit_order(alpha: f64, horizon: f64, source: Arc<dyn Source>, lipschitz: f64, phi_hat: SpectralField) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1]")));
        }
        Self::build(alpha, horizon, source, lipschitz, phi_hat)
    }

    fn build(alpha: f64, horizon: f64, source: Arc<dyn Source>, lipschitz: f64, phi_hat: SpectralField) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Domain(format!("horizon T = {horizon} must be positive")));
        }
        if !(lipschitz >= 0.0) {
            return Err(Error::Domain(format!("Lipschitz constant {lipschitz} must be nonnegative")));
        }
        Ok(Self { dim: phi_hat.dim(), alpha, horizon, source, lipschitz, phi_hat })
    }

    /// `e_j(τ) = E_{α,1}(-λ τ^α)`.
    pub fn kernel(&self, lambda: f64, tau: f64) -> Result<f64> {
        kernel(self.alpha, lambda, tau)
    }
}

pub(crate) fn kernel(alpha: f64, lambda: f64, tau: f64) -> Result<f64> {
    if tau == 0.0 {
        return Ok(1.0);
    }
    ml_neg(alpha, 1.0, lambda * tau.powf(alpha))
}

/// Multipliers `L_j` of a general filter on an explicit mode set.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralFilter {
    pub modes: Arc<ModeSet>,
    pub multipliers: Vec<f64>,
    pub c_dagger: f64,
    pub c_ddagger: f64,
    pub q: f64,
    pub label: String,
}

/// Regularisation applied to the amplification `e_j(t)/e_j(T)`.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterSpec {
    /// Keep exactly the listed modes.
    Truncation(Arc<ModeSet>),
    /// `e_j(t) / (θ + e_j(T))` on the modes of the data.
    QuasiBoundary { theta: f64 },
    /// `L_j e_j(t)/e_j(T)`.
    General(GeneralFilter),
}

impl FilterSpec {
    pub fn truncation_rect(cutoff: &[u32]) -> Result<Self> {
        Ok(FilterSpec::Truncation(Arc::new(ModeSet::rect(cutoff)?)))
    }

    pub fn truncation_ball(dim: usize, gamma: f64) -> Result<Self> {
        Ok(FilterSpec::Truncation(Arc::new(ModeSet::ball(dim, gamma)?)))
    }

    pub fn quasi_boundary(theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::Domain(format!("QBV parameter theta = {theta} must be positive")));
        }
        Ok(FilterSpec::QuasiBoundary { theta })
    }

    /// General filter with multipliers `l(j)` evaluated on `modes`.
    pub fn general<F>(modes: Arc<ModeSet>, l: F, c_dagger: f64, c_ddagger: f64, q: f64, label: &str) -> Self
    where
        F: Fn(&crate::spectral::ModeIndex) -> f64,
    {
        let multipliers = modes.modes().iter().map(l).collect();
        FilterSpec::General(GeneralFilter { modes, multipliers, c_dagger, c_ddagger, q, label: label.to_string() })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FilterSpec::Truncation(_) => "truncation",
            FilterSpec::QuasiBoundary { .. } => "quasi-boundary",
            FilterSpec::General(_) => "general",
        }
    }

    /// Modes the filtered operator acts on; data modes outside are dropped.
    pub fn active_modes(&self, data_modes: &Arc<ModeSet>) -> Arc<ModeSet> {
        match self {
            FilterSpec::Truncation(m) => m.clone(),
            FilterSpec::QuasiBoundary { .. } => data_modes.clone(),
            FilterSpec::General(g) => g.modes.clone(),
        }
    }

    /// Multiplier `A_j(t)` for active-mode index `i` from `e_j(t)`, `e_j(T)`.
    pub(crate) fn multiplier(&self, i: usize, lambda: f64, e_t: f64, e_horizon: f64) -> Result<f64> {
        let ratio = |e_t: f64| -> Result<f64> {
            if e_horizon < MIN_DENOMINATOR {
                return Err(Error::Overflow { lambda, denominator: e_horizon });
            }
            Ok(e_t / e_horizon)
        };
        match self {
            FilterSpec::Truncation(_) => ratio(e_t),
            FilterSpec::QuasiBoundary { theta } => Ok(e_t / (theta + e_horizon)),
            FilterSpec::General(g) => {
                let l = g.multipliers[i];
                if l == 0.0 {
                    Ok(0.0)
                } else {
                    Ok(l * ratio(e_t)?)
                }
            }
        }
    }

    /// Key-value description for run manifests.
    pub fn describe(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("filter", self.kind_name());
        match self {
            FilterSpec::Truncation(m) => {
                match m.shape() {
                    crate::spectral::ModeShape::Rect(n) => {
                        let s: Vec<String> = n.iter().map(|c| c.to_string()).collect();
                        kv.set("filter_cutoff", s.join(","));
                    }
                    crate::spectral::ModeShape::Ball(g) => {
                        kv.set("filter_gamma", fmt_f64(*g));
                    }
                    crate::spectral::ModeShape::Explicit => {}
                }
                kv.set("filter_modes", m.len());
            }
            FilterSpec::QuasiBoundary { theta } => {
                kv.set("filter_theta", fmt_f64(*theta));
            }
            FilterSpec::General(g) => {
                kv.set("filter_label", &g.label);
                kv.set("filter_modes", g.modes.len());
                kv.set("filter_c_dagger", fmt_f64(g.c_dagger));
                kv.set("filter_c_ddagger", fmt_f64(g.c_ddagger));
                kv.set("filter_q", fmt_f64(g.q));
            }
        }
        kv
    }
}

fn check_time(t: f64, horizon: f64) -> Result<()> {
    if !(t >= 0.0 && t <= horizon) {
        return Err(Error::Domain(format!("t = {t} outside [0, {horizon}]")));
    }
    Ok(())
}

/// Filtered amplification operator applied to `g` at time `t`.
pub fn op_a(t: f64, g: &SpectralField, spec: &ProblemSpec, filter: &FilterSpec) -> Result<SpectralField> {
    check_time(t, spec.horizon)?;
    let active = filter.active_modes(spec.phi_hat.modes());
    let coeffs = crate::par::map_range(active.len(), |i| -> Result<f64> {
        let j = &active.modes()[i];
        let c = g.get(j);
        if c == 0.0 {
            return Ok(0.0);
        }
        let lambda = active.eigenvalues()[i];
        let m = filter.multiplier(i, lambda, spec.kernel(lambda, t)?, spec.kernel(lambda, spec.horizon)?)?;
        Ok(m * c)
    });
    SpectralField::from_coeffs(active, coeffs.into_iter().collect::<Result<_>>()?)
}

/// Forward propagator: multiplies mode `j` by `e_j(t)`.
pub fn op_b(t: f64, g: &SpectralField, spec: &ProblemSpec) -> Result<SpectralField> {
    check_time(t, spec.horizon)?;
    let lambdas = g.modes().eigenvalues();
    let coeffs = crate::par::map_range(g.coeffs().len(), |i| -> Result<f64> {
        Ok(spec.kernel(lambdas[i], t)? * g.coeffs()[i])
    });
    SpectralField::from_coeffs(g.modes().clone(), coeffs.into_iter().collect::<Result<_>>()?)
}

/// `op_a(t, op_b(s, g))`.
pub fn op_d(t: f64, s: f64, g: &SpectralField, spec: &ProblemSpec, filter: &FilterSpec) -> Result<SpectralField> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("s = {s} must be positive")));
    }
    op_a(t, &op_b(s, g, spec)?, spec, filter)
}

/// `Q = 2 M2 T sqrt(2 (M1²(1-α)² + M2²)) / (M1 (1-α))`.
pub fn contraction_constant(alpha: f64, horizon: f64, env: &EnvelopeConstants) -> f64 {
    let (m1, m2) = (env.m1, env.m2);
    let a1 = 1.0 - alpha;
    2.0 * m2 * horizon * (2.0 * (m1 * m1 * a1 * a1 + m2 * m2)).sqrt() / (m1 * a1)
}

/// Envelope of `E_{α,1}(-z)(1+z)` on `[0, 1e6]`, cached per `α`.
pub fn envelope_beta_one(alpha: f64) -> Result<EnvelopeConstants> {
    static CACHE: OnceLock<Mutex<HashMap<u64, EnvelopeConstants>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(e) = cache.lock().expect("envelope cache").get(&alpha.to_bits()) {
        return Ok(*e);
    }
    let env = estimate_envelope_beta(alpha, 1.0, 1e6, 600)?;
    cache.lock().expect("envelope cache").insert(alpha.to_bits(), env);
    Ok(env)
}

/// Certified constants of a filter on its active modes.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    /// `max L_j e_j(t)/e_j(T)` over the checked modes and times.
    pub c_dagger: f64,
    /// Smallest `C‡` with `1 - L_j ≤ C‡ λ_j^q`, including modes outside the
    /// active set (where `L_j = 0`).
    pub c_ddagger: f64,
    pub q: f64,
    pub modes_checked: usize,
    pub times_checked: usize,
}

/// Checks the filter conditions `L_j e_j(t)/e_j(T) ≤ C†` and
/// `0 ≤ 1 - L_j ≤ C‡ λ_j^q` on the active modes and the given times.
///
/// Truncation and quasi-boundary filters are certified with `q = 1`; for the
/// quasi-boundary filter `C† ≤ M2/θ` is also checked. A general filter is
/// checked against its declared constants.
pub fn verify_filter(filter: &FilterSpec, spec: &ProblemSpec, times: &[f64]) -> Result<FilterReport> {
    let active = filter.active_modes(spec.phi_hat.modes());
    let horizon = spec.horizon;
    let mut violations = Vec::new();
    let mut c_dagger = 0.0f64;
    let mut c_ddagger = 0.0f64;
    let q = match filter {
        FilterSpec::General(g) => g.q,
        _ => 1.0,
    };
    for (i, j) in active.modes().iter().enumerate() {
        let lambda = active.eigenvalues()[i];
        let e_horizon = spec.kernel(lambda, horizon)?;
        let l = match filter {
            FilterSpec::Truncation(_) => 1.0,
            FilterSpec::QuasiBoundary { theta } => e_horizon / (theta + e_horizon),
            FilterSpec::General(g) => g.multipliers[i],
        };
        let mut flag = |t: f64, what: String| {
            violations.push(FilterViolation { mode: j.components().to_vec(), t, what });
        };
        if !(0.0..=1.0).contains(&l) {
            flag(horizon, format!("multiplier {l} outside [0, 1]"));
            continue;
        }
        let gap = (1.0 - l) / lambda.powf(q);
        c_ddagger = c_ddagger.max(gap);
        if let FilterSpec::General(g) = filter {
            if 1.0 - l > g.c_ddagger * lambda.powf(q) * (1.0 + 1e-12) {
                flag(horizon, format!("1 - L = {} exceeds C‡ λ^q = {}", 1.0 - l, g.c_ddagger * lambda.powf(q)));
            }
        }
        for &t in times {
            let m = filter.multiplier(i, lambda, spec.kernel(lambda, t)?, e_horizon)?;
            c_dagger = c_dagger.max(m);
            if let FilterSpec::General(g) = filter {
                if m > g.c_dagger * (1.0 + 1e-12) {
                    flag(t, format!("L e(t)/e(T) = {m} exceeds C† = {}", g.c_dagger));
                }
            }
        }
    }
    // modes outside the active set have L = 0
    let outside = smallest_eigenvalue_outside(&active);
    if let Some(lambda_out) = outside {
        let need = lambda_out.powf(-q);
        c_ddagger = c_ddagger.max(need);
        if let FilterSpec::General(g) = filter {
            if need > g.c_ddagger * (1.0 + 1e-12) {
                violations.push(FilterViolation {
                    mode: vec![],
                    t: horizon,
                    what: format!("discarded modes with lambda = {lambda_out} need C‡ >= {need}"),
                });
            }
        }
    }
    if let FilterSpec::QuasiBoundary { theta } = filter {
        if spec.alpha < 1.0 {
            let env = envelope_beta_one(spec.alpha)?;
            if c_dagger > env.m2 / theta * (1.0 + 1e-12) {
                violations.push(FilterViolation {
                    mode: vec![],
                    t: 0.0,
                    what: format!("C† = {c_dagger} exceeds M2/theta = {}", env.m2 / theta),
                });
            }
        }
    }
    if !violations.is_empty() {
        return Err(Error::FilterViolation(violations));
    }
    Ok(FilterReport { c_dagger, c_ddagger, q, modes_checked: active.len(), times_checked: times.len() })
}

/// Smallest `|j|²` not contained in `modes`; `None` only for an empty
/// dimension.
fn smallest_eigenvalue_outside(modes: &ModeSet) -> Option<f64> {
    let d = modes.dim();
    if d == 0 {
        return None;
    }
    // any mode outside has some component beyond the per-axis maximum or is
    // a hole inside the bounding box
    let maxes = modes.max_per_axis();
    let mut best = maxes.iter().map(|&m| (m as f64 + 1.0).powi(2) + (d as f64 - 1.0)).fold(f64::INFINITY, f64::min);
    if modes.is_empty() {
        return Some(d as f64);
    }
    let boxed = ModeSet::rect(maxes).ok()?;
    for (j, &l) in boxed.modes().iter().zip(boxed.eigenvalues()) {
        if l < best && !modes.contains(j) {
            best = l;
        }
    }
    Some(best)
}

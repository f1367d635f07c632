//! Noisy observations on uniform midpoint grids and the discrete spectral
//! estimators built from them.
//!
//! Grid point `k` (1-based per axis) sits at `x_k = (2k - 1)π / (2n)`.
//! Values are stored row-major with axis 0 slowest, matching
//! [`crate::spectral::synthesize_on_grid`].

use crate::artifact::{fmt_f64, write_atomic, KeyValues};
use crate::error::{Error, Result};
use crate::spectral::{analyse, synthesize_on_grid, ModeIndex, ModeSet, SpectralField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Uniform midpoint grid with `n[i]` points on axis `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    n: Vec<usize>,
    axes: Vec<Vec<f64>>,
}

pub fn make_grid(n: &[usize]) -> Result<GridSpec> {
    if n.is_empty() || n.contains(&0) {
        return Err(Error::Shape(format!("grid sizes {n:?} must be positive")));
    }
    let axes = n
        .iter()
        .map(|&m| (1..=m).map(|k| (2 * k - 1) as f64 * PI / (2 * m) as f64).collect())
        .collect();
    Ok(GridSpec { n: n.to_vec(), axes })
}

impl GridSpec {
    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        &self.axes[i]
    }

    pub fn axes(&self) -> Vec<&[f64]> {
        self.axes.iter().map(|a| a.as_slice()).collect()
    }

    /// Zero-based multi-index of flat position `flat`.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut k = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            k[a] = flat % self.n[a];
            flat /= self.n[a];
        }
        k
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat).iter().enumerate().map(|(a, &k)| self.axes[a][k]).collect()
    }

    /// `π^d / Π n_i`, the cell volume of the grid.
    pub fn cell_volume(&self) -> f64 {
        self.n.iter().map(|&m| PI / m as f64).product()
    }
}

/// Per-point noise scale: one value for every point, or one per point.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    Scalar(f64),
    PerPoint(Vec<f64>),
}

impl NoiseSpec {
    fn expand(&self, len: usize) -> Result<Vec<f64>> {
        let v = match self {
            NoiseSpec::Scalar(e) => vec![*e; len],
            NoiseSpec::PerPoint(v) => {
                if v.len() != len {
                    return Err(Error::Shape(format!("{} noise scales for {len} grid points", v.len())));
                }
                v.clone()
            }
        };
        if v.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(Error::Domain("noise scales must be finite and nonnegative".into()));
        }
        Ok(v)
    }
}

/// Where a noise realisation came from: a base seed and a replication index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRecord {
    pub seed: u64,
    pub replication: u64,
}

impl SeedRecord {
    pub fn new(seed: u64, replication: u64) -> Self {
        Self { seed, replication }
    }

    fn key(&self) -> u64 {
        splitmix(self.seed ^ splitmix(self.replication.wrapping_add(0x632B_E59B_D9B4_E019)))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE5_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal draw for grid point `index`: every point has its own
/// ChaCha8 stream, so draws do not depend on evaluation order.
pub fn standard_normal(seed: SeedRecord, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.key());
    rng.set_stream(index);
    rng.sample(StandardNormal)
}

/// `len` independent standard normal draws, one per grid point.
pub fn standard_normals(seed: SeedRecord, len: usize) -> Vec<f64> {
    crate::par::map_range(len, |k| standard_normal(seed, k as u64))
}

/// Noisy samples `Φ_k = φ(x_k) + ε_k W_k` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub eps: Vec<f64>,
    pub eps_max: f64,
    pub seed: SeedRecord,
}

/// Observes a pointwise function.
pub fn observe<F>(phi: F, grid: &GridSpec, noise: &NoiseSpec, seed: SeedRecord) -> Result<ObservationSet>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let clean = crate::par::map_range(grid.len(), |k| phi(&grid.point(k)));
    observe_values(clean, grid, noise, seed)
}

/// Observes a spectral field (exact on the grid via separable synthesis).
pub fn observe_field(phi: &SpectralField, grid: &GridSpec, noise: &NoiseSpec, seed: SeedRecord) -> Result<ObservationSet> {
    if phi.dim() != grid.dim() {
        return Err(Error::Shape(format!("{}-d field on a {}-d grid", phi.dim(), grid.dim())));
    }
    let clean = synthesize_on_grid(phi, &grid.axes())?;
    observe_values(clean, grid, noise, seed)
}

/// Adds seeded noise to clean grid values.
pub fn observe_values(clean: Vec<f64>, grid: &GridSpec, noise: &NoiseSpec, seed: SeedRecord) -> Result<ObservationSet> {
    if clean.len() != grid.len() {
        return Err(Error::Shape(format!("{} values for {} grid points", clean.len(), grid.len())));
    }
    let eps = noise.expand(grid.len())?;
    let w = standard_normals(seed, grid.len());
    let values = clean.iter().zip(&eps).zip(&w).map(|((c, e), w)| c + e * w).collect();
    let eps_max = eps.iter().copied().fold(0.0, f64::max);
    Ok(ObservationSet { grid: grid.clone(), values, eps, eps_max, seed })
}

impl ObservationSet {
    /// Sidecar path holding the seed metadata: `<path>.meta`.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    }

    pub fn to_csv(&self) -> String {
        let d = self.grid.dim();
        let mut s = String::new();
        for i in 1..=d {
            s.push_str(&format!("k_{i},"));
        }
        for i in 1..=d {
            s.push_str(&format!("x_{i},"));
        }
        s.push_str("phi_obs,eps\n");
        for (flat, (v, e)) in self.values.iter().zip(&self.eps).enumerate() {
            let k = self.grid.unflatten(flat);
            for &ki in &k {
                s.push_str(&(ki + 1).to_string());
                s.push(',');
            }
            for (a, &ki) in k.iter().enumerate() {
                s.push_str(&fmt_f64(self.grid.axis(a)[ki]));
                s.push(',');
            }
            s.push_str(&fmt_f64(*v));
            s.push(',');
            s.push_str(&fmt_f64(*e));
            s.push('\n');
        }
        s
    }

    pub fn metadata(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("dim", self.grid.dim().to_string());
        let n: Vec<String> = self.grid.n().iter().map(|c| c.to_string()).collect();
        kv.set("n", n.join(","));
        kv.set("eps_max", fmt_f64(self.eps_max));
        kv.set("seed", self.seed.seed.to_string());
        kv.set("replication", self.seed.replication.to_string());
        kv.set("rng", "ChaCha8, one stream per grid point, standard normal");
        kv
    }

    /// Writes the CSV and its `.meta` sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())?;
        self.metadata().write(&Self::sidecar_path(path))
    }

    pub fn read(path: &Path) -> Result<ObservationSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let meta = KeyValues::read(&Self::sidecar_path(path))?;
        Self::parse(&text, &meta, &path.display().to_string())
    }

    pub fn parse(text: &str, meta: &KeyValues, source_name: &str) -> Result<ObservationSet> {
        let perr = |line: usize, message: String| Error::Parse { source_name: source_name.to_string(), line, message };
        let get = |k: &str| meta.get(k).ok_or_else(|| perr(0, format!("metadata key {k} missing")));
        let n: Vec<usize> = get("n")?
            .split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|e| perr(0, format!("n: {e}"))))
            .collect::<Result<_>>()?;
        let seed = get("seed")?.parse::<u64>().map_err(|e| perr(0, format!("seed: {e}")))?;
        let rep = get("replication")?.parse::<u64>().map_err(|e| perr(0, format!("replication: {e}")))?;
        let grid = make_grid(&n)?;
        let d = grid.dim();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
        let mut want: Vec<String> = (1..=d).map(|i| format!("k_{i}")).collect();
        want.extend((1..=d).map(|i| format!("x_{i}")));
        want.push("phi_obs".into());
        want.push("eps".into());
        if header.iter().ne(want.iter().map(|s| s.as_str())) {
            return Err(perr(1, format!("header must be {}", want.join(","))));
        }
        let mut values = vec![f64::NAN; grid.len()];
        let mut eps = vec![f64::NAN; grid.len()];
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| perr(line, e.to_string()))?;
            let mut flat = 0usize;
            for a in 0..d {
                let k: usize = rec[a].parse().map_err(|e| perr(line, format!("k_{}: {e}", a + 1)))?;
                if k == 0 || k > n[a] {
                    return Err(perr(line, format!("k_{} = {k} outside 1..={}", a + 1, n[a])));
                }
                flat = flat * n[a] + (k - 1);
            }
            values[flat] = rec[2 * d].parse().map_err(|e| perr(line, format!("phi_obs: {e}")))?;
            eps[flat] = rec[2 * d + 1].parse().map_err(|e| perr(line, format!("eps: {e}")))?;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(perr(0, "not every grid point has an observation".into()));
        }
        let eps_max = eps.iter().copied().fold(0.0, f64::max);
        Ok(ObservationSet { grid, values, eps, eps_max, seed: SeedRecord::new(seed, rep) })
    }
}

/// `Σ_k ξ_j(x_k) ξ_m(x_k)` by direct summation over the grid.
pub fn aliasing_coefficient(j: &ModeIndex, m: &ModeIndex, grid: &GridSpec) -> Result<f64> {
    check_dims(j, m, grid)?;
    let mut total = 1.0;
    for a in 0..grid.dim() {
        let (ja, ma) = (j.components()[a] as f64, m.components()[a] as f64);
        let s: f64 = grid.axis(a).iter().map(|&x| (ja * x).sin() * (ma * x).sin()).sum();
        total *= 2.0 / PI * s;
    }
    Ok(total)
}

/// Closed form of [`aliasing_coefficient`]: per axis
/// `(n/π)[δ(j - m = 2ln)(-1)^l - δ(j + m = 2l'n)(-1)^{l'}]`.
pub fn aliasing_closed_form(j: &ModeIndex, m: &ModeIndex, grid: &GridSpec) -> Result<f64> {
    check_dims(j, m, grid)?;
    let mut total = 1.0;
    for a in 0..grid.dim() {
        let n = grid.n()[a] as i64;
        let (ja, ma) = (j.components()[a] as i64, m.components()[a] as i64);
        let parity = |v: i64| -> f64 {
            if v.rem_euclid(2 * n) != 0 {
                0.0
            } else if (v / (2 * n)).rem_euclid(2) == 0 {
                1.0
            } else {
                -1.0
            }
        };
        total *= n as f64 / PI * (parity(ja - ma) - parity(ja + ma));
        if total == 0.0 {
            return Ok(0.0);
        }
    }
    Ok(total)
}

fn check_dims(j: &ModeIndex, m: &ModeIndex, grid: &GridSpec) -> Result<()> {
    if j.dim() != grid.dim() || m.dim() != grid.dim() {
        return Err(Error::Shape(format!("modes {j}, {m} on a {}-d grid", grid.dim())));
    }
    Ok(())
}

/// Discrete coefficients `(π^d/Π n) Σ_k Φ_k ξ_j(x_k)` for every mode of `modes`.
pub fn estimate_on(obs: &ObservationSet, modes: Arc<ModeSet>) -> Result<SpectralField> {
    if modes.dim() != obs.grid.dim() {
        return Err(Error::Shape(format!("{}-d modes for a {}-d grid", modes.dim(), obs.grid.dim())));
    }
    let d = obs.grid.dim();
    let scale: Vec<f64> = obs.grid.n().iter().map(|&m| PI / m as f64).collect();
    Ok(analyse(&obs.values, &obs.grid.axes(), &vec![None; d], &scale, &modes))
}

/// Rectangle estimator with cutoffs `cutoff[i] < n[i]`.
pub fn estimate_rect(obs: &ObservationSet, cutoff: &[u32]) -> Result<SpectralField> {
    if cutoff.len() != obs.grid.dim() {
        return Err(Error::Shape(format!("{} cutoffs for a {}-d grid", cutoff.len(), obs.grid.dim())));
    }
    for (a, (&c, &n)) in cutoff.iter().zip(obs.grid.n()).enumerate() {
        if c as usize >= n {
            return Err(Error::Shape(format!("cutoff N_{} = {c} must be below n_{} = {n}", a + 1, a + 1)));
        }
    }
    estimate_on(obs, Arc::new(ModeSet::rect(cutoff)?))
}

/// Spectral-ball estimator over `|j|² ≤ gamma`.
pub fn estimate_ball(obs: &ObservationSet, gamma: f64) -> Result<SpectralField> {
    estimate_on(obs, Arc::new(ModeSet::ball(obs.grid.dim(), gamma)?))
}

/// Which discrete estimator to apply.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorSpec {
    Rectangle(Vec<u32>),
    Ball(f64),
}

impl EstimatorSpec {
    pub fn apply(&self, obs: &ObservationSet) -> Result<SpectralField> {
        match self {
            EstimatorSpec::Rectangle(n) => estimate_rect(obs, n),
            EstimatorSpec::Ball(g) => estimate_ball(obs, *g),
        }
    }

    pub fn mode_set(&self, dim: usize) -> Result<ModeSet> {
        match self {
            EstimatorSpec::Rectangle(n) => ModeSet::rect(n),
            EstimatorSpec::Ball(g) => ModeSet::ball(dim, *g),
        }
    }
}

/// Monte-Carlo mean with a 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub mean: f64,
    pub ci_halfwidth: f64,
    pub replications: usize,
}

pub fn mean_and_ci(samples: &[f64]) -> RiskEstimate {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    RiskEstimate { mean, ci_halfwidth: 1.96 * (var / n as f64).sqrt(), replications: n }
}

/// `E‖φ̂ - φ‖²_{L²}` over `replications` independent noise draws.
pub fn empirical_risk(
    phi_true: &SpectralField,
    grid: &GridSpec,
    noise: &NoiseSpec,
    estimator: &EstimatorSpec,
    replications: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    if replications < 30 {
        return Err(Error::Domain(format!("replications = {replications} must be at least 30")));
    }
    let clean = synthesize_on_grid(phi_true, &grid.axes())?;
    let errs = crate::par::map_range(replications, |r| -> Result<f64> {
        let obs = observe_values(clean.clone(), grid, noise, SeedRecord::new(seed, r as u64))?;
        let est = estimator.apply(&obs)?;
        Ok(est.distance(phi_true, 0.0).powi(2))
    });
    let errs: Vec<f64> = errs.into_iter().collect::<Result<_>>()?;
    Ok(mean_and_ci(&errs))
}

/// Riemann zeta `ζ(s)` for real `s > 1` (Euler–Maclaurin, 20 direct terms).
pub fn zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(Error::Domain(format!("zeta needs s > 1, got {s}")));
    }
    const N: usize = 20;
    let n = N as f64;
    let head: f64 = (1..N).map(|k| (k as f64).powf(-s)).sum();
    // Bernoulli numbers B_2..B_12
    let b = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0];
    let mut tail = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // rising factorial s(s+1)…(s+2k-2) / (2k)!
    let mut coef = s;
    let mut fact = 2.0;
    for (k, bk) in b.iter().enumerate() {
        let k = k + 1;
        tail += bk / fact * coef * n.powf(-s - (2 * k - 1) as f64);
        coef *= (s + (2 * k - 1) as f64) * (s + (2 * k) as f64);
        fact *= ((2 * k + 1) * (2 * k + 2)) as f64;
    }
    Ok(head + tail)
}

/// `C0 = 2ζ(θ) + 4ζ(θ/2)²`, finite for `θ > 2`.
pub fn constant_c0(theta: f64) -> Result<f64> {
    if !(theta > 2.0) {
        return Err(Error::Unsupported(format!("C0 needs smoothness theta > 2, got {theta}")));
    }
    Ok(2.0 * zeta(theta)? + 4.0 * zeta(theta / 2.0)?.powi(2))
}

/// Right-hand side of the 2-D rectangle-estimator risk bound:
/// `(2π²ε² + 2C0²‖φ‖²_θ) N1N2/(n1n2) + 2[(N1+1)^{-2θ} + (N2+1)^{-2θ}]‖φ‖²_θ`.
pub fn rect_risk_bound(eps_max: f64, n: &[usize], cutoff: &[u32], theta: f64, phi_norm_theta: f64) -> Result<f64> {
    if n.len() != 2 || cutoff.len() != 2 {
        return Err(Error::Unsupported("the rectangle risk bound is two-dimensional".into()));
    }
    let c0 = constant_c0(theta)?;
    let p2 = phi_norm_theta.powi(2);
    let ratio = (cutoff[0] as f64 * cutoff[1] as f64) / (n[0] as f64 * n[1] as f64);
    let tail: f64 = cutoff.iter().map(|&c| (c as f64 + 1.0).powf(-2.0 * theta)).sum();
    Ok((2.0 * PI * PI * eps_max * eps_max + 2.0 * c0 * c0 * p2) * ratio + 2.0 * tail * p2)
}

/// Smoothness indices of the ball-estimator bounds: `μ_i > 1/2` per axis and
/// `μ° ≥ d·max μ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSmoothness {
    pub mu: Vec<f64>,
    pub mu_circ: f64,
}

impl BallSmoothness {
    pub fn new(mu: Vec<f64>, mu_circ: f64) -> Result<Self> {
        if mu.is_empty() || mu.iter().any(|&m| !(m > 0.5)) {
            return Err(Error::Unsupported(format!("every mu_i must exceed 1/2, got {mu:?}")));
        }
        let need = mu.len() as f64 * mu.iter().copied().fold(0.0, f64::max);
        if mu_circ < need {
            return Err(Error::Unsupported(format!("mu_circ = {mu_circ} must be at least d*max(mu) = {need}")));
        }
        Ok(Self { mu, mu_circ })
    }

    /// `μ_i = 1/2 + 1/(4d)` on every axis and `μ° = d·μ_i`.
    pub fn default_for_dim(d: usize) -> Self {
        let m = 0.5 + 0.25 / d as f64;
        Self { mu: vec![m; d], mu_circ: d as f64 * m }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `C(μ) = d^{-max μ/2} Π_i Σ_{l≥1} (2l-1)^{-2μ_i}`.
    pub fn c_mu(&self) -> Result<f64> {
        let d = self.dim() as f64;
        let mmax = self.mu.iter().copied().fold(0.0, f64::max);
        let mut p = 1.0;
        for &m in &self.mu {
            p *= (1.0 - 2f64.powf(-2.0 * m)) * zeta(2.0 * m)?;
        }
        Ok(d.powf(-mmax / 2.0) * p)
    }

    /// `C̄ = 8π^d ε²·2π^{d/2}/(dΓ(d/2)) + 16 C(μ)² π^{d/2}/(dΓ(d/2)) ‖φ‖²_{μ°}`.
    pub fn c_bar(&self, eps_max: f64, phi_norm_mu_circ: f64) -> Result<f64> {
        let d = self.dim() as f64;
        let sphere = PI.powf(d / 2.0) / (d * crate::mlf::gamma(d / 2.0));
        let c = self.c_mu()?;
        Ok(8.0 * PI.powf(d) * eps_max * eps_max * 2.0 * sphere + 16.0 * c * c * sphere * phi_norm_mu_circ.powi(2))
    }

    fn grid_factor(&self, n: &[usize]) -> Result<f64> {
        if n.len() != self.dim() {
            return Err(Error::Shape(format!("{} grid sizes for {} smoothness indices", n.len(), self.dim())));
        }
        Ok(n.iter().zip(&self.mu).map(|(&ni, &m)| (ni as f64).powf(-4.0 * m)).product())
    }

    /// L² risk bound `C̄ γ^{d/2} Π n^{-4μ} + 4γ^{-μ°}‖φ‖²_{μ°}`.
    pub fn risk_bound_l2(&self, eps_max: f64, n: &[usize], gamma: f64, phi_norm_mu_circ: f64) -> Result<f64> {
        let d = self.dim() as f64;
        let cb = self.c_bar(eps_max, phi_norm_mu_circ)?;
        Ok(cb * gamma.powf(d / 2.0) * self.grid_factor(n)? + 4.0 * gamma.powf(-self.mu_circ) * phi_norm_mu_circ.powi(2))
    }

    /// `H^σ` risk bound `C̄ γ^{σ+d/2}/4 Π n^{-4μ} + γ^{-μ°}‖φ‖²_{μ°+σ}`.
    pub fn risk_bound_h_sigma(
        &self,
        eps_max: f64,
        n: &[usize],
        gamma: f64,
        sigma: f64,
        phi_norm_mu_circ: f64,
        phi_norm_mu_circ_sigma: f64,
    ) -> Result<f64> {
        let d = self.dim() as f64;
        let cb = self.c_bar(eps_max, phi_norm_mu_circ)?;
        Ok(cb * gamma.powf(sigma + d / 2.0) / 4.0 * self.grid_factor(n)?
            + gamma.powf(-self.mu_circ) * phi_norm_mu_circ_sigma.powi(2))
    }
}

/// `⌊ln n⌋`, at least 1.
pub fn default_cutoff(n: usize) -> u32 {
    ((n as f64).ln().floor() as u32).max(1)
}

/// Smallest `γ` (an attained `|j|²`) whose ball holds at least
/// `Π ⌊ln n_i⌋` modes.
pub fn default_ball_gamma(n: &[usize]) -> f64 {
    let d = n.len();
    let target: usize = n.iter().map(|&m| default_cutoff(m) as usize).product();
    let mut gamma = d as f64;
    loop {
        let count = ModeSet::ball(d, gamma).map(|b| b.len()).unwrap_or(0);
        if count >= target {
            return gamma;
        }
        gamma += 1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mi(j: &[u32]) -> ModeIndex {
        ModeIndex::new(j.to_vec()).unwrap()
    }

    #[test]
    fn grids() {
        let g = make_grid(&[2]).unwrap();
        assert_relative_eq!(g.axis(0)[0], PI / 4.0);
        assert_relative_eq!(g.axis(0)[1], 3.0 * PI / 4.0);
        let g = make_grid(&[1, 1]).unwrap();
        assert_eq!(g.point(0), vec![PI / 2.0, PI / 2.0]);
        let g = make_grid(&[50]).unwrap();
        assert_eq!(g.len(), 50);
        assert_relative_eq!(g.axis(0)[0], PI / 100.0);
        let g = make_grid(&[3, 4]).unwrap();
        assert_eq!(g.unflatten(7), vec![1, 3]);
    }

    #[test]
    fn zero_noise_is_exact() {
        let g = make_grid(&[7, 5]).unwrap();
        let f = |x: &[f64]| x[0].sin() * x[1].cos();
        let obs = observe(f, &g, &NoiseSpec::Scalar(0.0), SeedRecord::new(1, 0)).unwrap();
        for (k, v) in obs.values.iter().enumerate() {
            assert_eq!(*v, f(&g.point(k)));
        }
    }

    #[test]
    fn observations_are_deterministic() {
        let g = make_grid(&[20, 20]).unwrap();
        let a = observe(|x| x[0], &g, &NoiseSpec::Scalar(0.1), SeedRecord::new(9, 3)).unwrap();
        let b = observe(|x| x[0], &g, &NoiseSpec::Scalar(0.1), SeedRecord::new(9, 3)).unwrap();
        let c = observe(|x| x[0], &g, &NoiseSpec::Scalar(0.1), SeedRecord::new(9, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn aliasing_examples() {
        let g = make_grid(&[8, 8]).unwrap();
        let want = 64.0 / (PI * PI);
        assert_relative_eq!(aliasing_coefficient(&mi(&[1, 1]), &mi(&[1, 1]), &g).unwrap(), want, max_relative = 1e-12);
        assert!(aliasing_coefficient(&mi(&[1, 1]), &mi(&[2, 1]), &g).unwrap().abs() < 1e-12);
        assert_relative_eq!(aliasing_coefficient(&mi(&[1, 1]), &mi(&[17, 1]), &g).unwrap(), -want, max_relative = 1e-12);
        assert_relative_eq!(aliasing_closed_form(&mi(&[1, 1]), &mi(&[17, 1]), &g).unwrap(), -want);
        // both conditions hold when j = m = n
        assert_relative_eq!(aliasing_closed_form(&mi(&[8, 1]), &mi(&[8, 1]), &g).unwrap(), 2.0 * want);
        assert!(aliasing_coefficient(&mi(&[8, 1]), &mi(&[8, 1]), &g).unwrap() - 2.0 * want < 1e-10);
    }

    #[test]
    fn rect_estimator_examples() {
        let g = make_grid(&[50, 50]).unwrap();
        let exact = Arc::new(ModeSet::explicit(2, vec![mi(&[1, 1])]).unwrap());
        let phi = SpectralField::from_coeffs(exact, vec![1.0]).unwrap();
        let obs = observe_field(&phi, &g, &NoiseSpec::Scalar(0.0), SeedRecord::new(0, 0)).unwrap();
        let est = estimate_rect(&obs, &[3, 3]).unwrap();
        for (m, c) in est.modes().modes().iter().zip(est.coeffs()) {
            let want = if *m == mi(&[1, 1]) { 1.0 } else { 0.0 };
            assert!((c - want).abs() < 1e-10, "{m} {c}");
        }
        // pure alias of (1,1)
        let alias = SpectralField::single(mi(&[101, 1]), 1.0);
        let obs = observe_field(&alias, &g, &NoiseSpec::Scalar(0.0), SeedRecord::new(0, 0)).unwrap();
        let est = estimate_rect(&obs, &[3, 3]).unwrap();
        assert!((est.get(&mi(&[1, 1])) + 1.0).abs() < 1e-10);
        assert!(estimate_rect(&obs, &[50, 3]).is_err());
        let zero = observe(|_| 0.0, &g, &NoiseSpec::Scalar(0.0), SeedRecord::new(0, 0)).unwrap();
        assert!(estimate_rect(&zero, &[3, 3]).unwrap().coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn ball_estimator_examples() {
        let g = make_grid(&[50, 50]).unwrap();
        let phi = SpectralField::single(mi(&[1, 1]), 1.0);
        let obs = observe_field(&phi, &g, &NoiseSpec::Scalar(0.0), SeedRecord::new(0, 0)).unwrap();
        assert!(estimate_ball(&obs, 1.5).unwrap().modes().is_empty());
        let est = estimate_ball(&obs, 2.0).unwrap();
        assert_eq!(est.modes().len(), 1);
        assert!((est.coeffs()[0] - 1.0).abs() < 1e-10);
        let g3 = make_grid(&[20, 20, 20]).unwrap();
        let phi3 = SpectralField::single(mi(&[1, 1, 1]), 1.0);
        let obs3 = observe_field(&phi3, &g3, &NoiseSpec::Scalar(0.0), SeedRecord::new(0, 0)).unwrap();
        let est3 = estimate_ball(&obs3, 3.0).unwrap();
        assert!((est3.coeffs()[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn zeta_values() {
        assert_relative_eq!(zeta(2.0).unwrap(), PI * PI / 6.0, max_relative = 1e-14);
        assert_relative_eq!(zeta(4.0).unwrap(), PI.powi(4) / 90.0, max_relative = 1e-14);
        // ζ(3/2), mpmath
        assert_relative_eq!(zeta(1.5).unwrap(), 2.612_375_348_685_488, max_relative = 1e-13);
        assert!(zeta(1.0).is_err());
        assert!(constant_c0(2.0).is_err());
    }

    #[test]
    fn ball_constants() {
        // d = 1, μ = 1: C = 1·(1 - 1/4)ζ(2) = π²/8
        let s = BallSmoothness::new(vec![1.0], 1.0).unwrap();
        assert_relative_eq!(s.c_mu().unwrap(), PI * PI / 8.0, max_relative = 1e-13);
        assert!(BallSmoothness::new(vec![0.5, 1.0], 2.0).is_err());
        assert!(BallSmoothness::new(vec![1.0, 1.0], 1.5).is_err());
        let s = BallSmoothness::default_for_dim(2);
        assert!(BallSmoothness::new(s.mu.clone(), s.mu_circ).is_ok());
    }

    #[test]
    fn default_schedules() {
        assert_eq!(default_cutoff(25), 3);
        assert_eq!(default_cutoff(50), 3);
        assert_eq!(default_cutoff(100), 4);
        assert_eq!(default_cutoff(200), 5);
        let g = default_ball_gamma(&[50, 50]);
        assert!(ModeSet::ball(2, g).unwrap().len() >= 9);
        assert!(ModeSet::ball(2, g - 1.0).unwrap().len() < 9);
    }

    #[test]
    fn csv_round_trip() {
        let g = make_grid(&[4, 3]).unwrap();
        let obs = observe(|x| x[0] * x[1], &g, &NoiseSpec::Scalar(0.2), SeedRecord::new(5, 2)).unwrap();
        let back = ObservationSet::parse(&obs.to_csv(), &obs.metadata(), "mem").unwrap();
        assert_eq!(back, obs);
    }
}

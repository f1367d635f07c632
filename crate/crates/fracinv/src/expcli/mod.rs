//! Experiment harness: scenario files, manufactured-solution runs, metrics,
//! convergence studies, the ill-posedness demonstration and report writers.

mod metrics;
mod study;
mod svg;

pub use metrics::{
    compute_metrics, run_scenario, scenario_bound, write_report, ExactSolution, ManufacturedExact, MetricRecord, RunOutcome,
    ScenarioReport, SummaryRow,
};
pub use study::{
    convergence_study, illposed_demo, least_squares_slope, write_convergence, write_illposed, ConvergenceReport, ConvergenceRow,
    IllposedReport, IllposedRow,
};
pub use svg::{LinePlot, Series};

use crate::artifact::{fmt_f64, KeyValues};
use crate::error::{Error, Result};
use crate::observe::{default_ball_gamma, default_cutoff, make_grid, BallSmoothness, EstimatorSpec, GridSpec, SeedRecord};
use crate::regularize::{FilterSpec, ManufacturedSource, ProblemSpec, Source, TimeGrid};
use crate::spectral::SpectralField;
use std::path::Path;
use std::sync::Arc;

/// Discrete estimator of the final data.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorKind {
    /// Rectangle; `None` means `N_i = ⌊ln n_i⌋`.
    Rect(Option<Vec<u32>>),
    /// Spectral ball `|j|² ≤ γ`; `None` selects a default radius.
    Ball(Option<f64>),
}

/// Regularisation used by the backward solve.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterKind {
    /// Keep exactly the estimator's modes.
    Truncation,
    /// Quasi-boundary with parameter `θ`; `None` means `θ = γ^{-μ°/3}`.
    QuasiBoundary(Option<f64>),
}

/// Flat experiment description; see [`Scenario::parse`] for the file format.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub alpha: f64,
    pub horizon: f64,
    /// Grid points per axis.
    pub n: Vec<usize>,
    /// Noise standard deviation at every grid point.
    pub eps: f64,
    /// Lipschitz coupling `κ` of the manufactured source.
    pub coupling: f64,
    pub estimator: EstimatorKind,
    pub filter: FilterKind,
    pub n_t: usize,
    pub seeds: Vec<u64>,
    pub replications: usize,
    pub times: Vec<f64>,
    /// Sobolev index of the `err_Hsigma` column.
    pub sigma: f64,
    /// Assumed smoothness `θ > 2` of the data in the truncation bound.
    pub smoothness: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Keep observations and trajectories of every run for output.
    pub save_runs: bool,
}

const KEYS: &[&str] = &[
    "name",
    "dim",
    "alpha",
    "T",
    "n",
    "eps",
    "coupling",
    "source",
    "estimator",
    "cutoff",
    "gamma",
    "filter",
    "theta",
    "n_t",
    "seeds",
    "replications",
    "times",
    "sigma",
    "smoothness",
    "tol",
    "max_iter",
    "save_runs",
];

fn parse_err(source_name: &str, message: String) -> Error {
    Error::Parse { source_name: source_name.to_string(), line: 0, message }
}

fn parse_one<T: std::str::FromStr>(kv: &KeyValues, key: &str, src: &str) -> Result<Option<T>> {
    match kv.get(key) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| parse_err(src, format!("invalid value `{v}` for `{key}`"))),
    }
}

fn parse_list<T: std::str::FromStr>(kv: &KeyValues, key: &str, src: &str) -> Result<Option<Vec<T>>> {
    match kv.get(key) {
        None => Ok(None),
        Some(v) => v
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| parse_err(src, format!("invalid list entry `{}` for `{key}`", s.trim()))))
            .collect::<Result<Vec<T>>>()
            .map(Some),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Scenario {
    /// Case 1 of the reproduction: `d = 1`, `α = 0.3`, `n = 50`, `ε = 0.01`.
    pub fn case_one() -> Self {
        Self::base("case1", 1, 0.3, vec![50], 0.01)
    }

    /// Case 2: `d = 2`, `α = 0.5`, `n = 50 × 50`, `ε = 0.015`.
    pub fn case_two() -> Self {
        Self::base("case2", 2, 0.5, vec![50, 50], 0.015)
    }

    fn base(name: &str, dim: usize, alpha: f64, n: Vec<usize>, eps: f64) -> Self {
        Self {
            name: name.to_string(),
            dim,
            alpha,
            horizon: 1.0,
            n,
            eps,
            coupling: 0.0,
            estimator: EstimatorKind::Rect(None),
            filter: FilterKind::Truncation,
            n_t: 201,
            seeds: vec![1],
            replications: 1,
            times: vec![0.3, 0.5, 0.8],
            sigma: 1.0,
            smoothness: 3.0,
            tol: 1e-10,
            max_iter: 200,
            save_runs: false,
        }
    }

    /// Parses `key = value` lines. Required: `name`, `dim`, `alpha`, `n`
    /// (one size for every axis or one per axis). Lists are comma-separated.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let kv = KeyValues::parse(text, source_name)?;
        for (k, _) in kv.iter() {
            if !KEYS.contains(&k) {
                return Err(parse_err(source_name, format!("unknown key `{k}`")));
            }
        }
        let src = source_name;
        let need = |k: &str| parse_err(src, format!("missing required key `{k}`"));
        let name: String = kv.get("name").ok_or_else(|| need("name"))?.to_string();
        let dim: usize = parse_one(&kv, "dim", src)?.ok_or_else(|| need("dim"))?;
        let alpha: f64 = parse_one(&kv, "alpha", src)?.ok_or_else(|| need("alpha"))?;
        let mut n: Vec<usize> = parse_list(&kv, "n", src)?.ok_or_else(|| need("n"))?;
        if n.len() == 1 && dim > 1 {
            n = vec![n[0]; dim];
        }
        let mut s = Self::base(&name, dim, alpha, n, parse_one(&kv, "eps", src)?.unwrap_or(0.0));
        if let Some(v) = kv.get("source") {
            if v != "manufactured" {
                return Err(parse_err(src, format!("unsupported source `{v}` (only `manufactured`)")));
            }
        }
        s.horizon = parse_one(&kv, "T", src)?.unwrap_or(s.horizon);
        s.coupling = parse_one(&kv, "coupling", src)?.unwrap_or(s.coupling);
        let cutoff: Option<Vec<u32>> = parse_list(&kv, "cutoff", src)?;
        let gamma: Option<f64> = parse_one(&kv, "gamma", src)?;
        s.estimator = match kv.get("estimator").unwrap_or("rect") {
            "rect" => {
                let c = cutoff.map(|c| if c.len() == 1 && dim > 1 { vec![c[0]; dim] } else { c });
                EstimatorKind::Rect(c)
            }
            "ball" => EstimatorKind::Ball(gamma),
            other => return Err(parse_err(src, format!("unknown estimator `{other}` (rect | ball)"))),
        };
        s.filter = match kv.get("filter").unwrap_or("truncation") {
            "truncation" => FilterKind::Truncation,
            "quasi-boundary" | "qbv" => FilterKind::QuasiBoundary(parse_one(&kv, "theta", src)?),
            other => return Err(parse_err(src, format!("unknown filter `{other}` (truncation | quasi-boundary)"))),
        };
        s.n_t = parse_one(&kv, "n_t", src)?.unwrap_or(s.n_t);
        s.seeds = parse_list(&kv, "seeds", src)?.unwrap_or(s.seeds);
        s.replications = parse_one(&kv, "replications", src)?.unwrap_or(s.replications);
        s.times = parse_list(&kv, "times", src)?.unwrap_or(s.times);
        s.sigma = parse_one(&kv, "sigma", src)?.unwrap_or(s.sigma);
        s.smoothness = parse_one(&kv, "smoothness", src)?.unwrap_or(s.smoothness);
        s.tol = parse_one(&kv, "tol", src)?.unwrap_or(s.tol);
        s.max_iter = parse_one(&kv, "max_iter", src)?.unwrap_or(s.max_iter);
        s.save_runs = parse_one(&kv, "save_runs", src)?.unwrap_or(s.save_runs);
        s.validate().map_err(|e| parse_err(src, e.to_string()))?;
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(',') {
            return Err(Error::Domain(format!("scenario name `{}` must be nonempty and comma-free", self.name)));
        }
        if self.dim == 0 || self.n.len() != self.dim {
            return Err(Error::Shape(format!("{} grid sizes for dimension {}", self.n.len(), self.dim)));
        }
        if self.n.iter().any(|&m| m < 2) {
            return Err(Error::Domain(format!("grid sizes {:?} must be at least 2", self.n)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if !(self.horizon > 0.0) || !(self.eps >= 0.0) || !(self.coupling >= 0.0) {
            return Err(Error::Domain("T must be positive; eps and coupling nonnegative".into()));
        }
        if self.seeds.is_empty() || self.replications == 0 {
            return Err(Error::Domain("at least one seed and one replication are required".into()));
        }
        if let EstimatorKind::Rect(Some(c)) = &self.estimator {
            if c.len() != self.dim {
                return Err(Error::Shape(format!("{} cutoffs for dimension {}", c.len(), self.dim)));
            }
        }
        TimeGrid::new(self.horizon, self.n_t)?;
        for &t in &self.times {
            if !(t >= 0.0 && t <= self.horizon) {
                return Err(Error::Domain(format!("reported time {t} outside [0, T]")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        make_grid(&self.n)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.n_t)
    }

    /// Every `(seed, replication)` pair, seeds outermost.
    pub fn runs(&self) -> Vec<SeedRecord> {
        self.seeds
            .iter()
            .flat_map(|&s| (0..self.replications as u64).map(move |r| SeedRecord::new(s, r)))
            .collect()
    }

    pub fn source(&self) -> Arc<dyn Source> {
        Arc::new(ManufacturedSource::new(self.dim, self.alpha, self.coupling))
    }

    /// Ball radius in use: explicit, the quasi-boundary schedule
    /// `(Π n)^{1/(μ°+d)}`, or the smallest ball holding `Π ⌊ln n_i⌋` modes.
    pub fn ball_gamma(&self) -> f64 {
        match (&self.estimator, &self.filter) {
            (EstimatorKind::Ball(Some(g)), _) => *g,
            (_, FilterKind::QuasiBoundary(_)) => {
                let s = BallSmoothness::default_for_dim(self.dim);
                let prod: f64 = self.n.iter().map(|&m| m as f64).product();
                prod.powf(1.0 / (s.mu_circ + self.dim as f64))
            }
            _ => default_ball_gamma(&self.n),
        }
    }

    pub fn estimator_spec(&self) -> EstimatorSpec {
        match &self.estimator {
            EstimatorKind::Rect(Some(c)) => EstimatorSpec::Rectangle(c.clone()),
            EstimatorKind::Rect(None) => EstimatorSpec::Rectangle(self.n.iter().map(|&m| default_cutoff(m)).collect()),
            EstimatorKind::Ball(_) => EstimatorSpec::Ball(self.ball_gamma()),
        }
    }

    /// QBV parameter in use: explicit or `γ^{-μ°/3}`.
    pub fn qbv_theta(&self) -> Option<f64> {
        match self.filter {
            FilterKind::Truncation => None,
            FilterKind::QuasiBoundary(Some(t)) => Some(t),
            FilterKind::QuasiBoundary(None) => {
                let s = BallSmoothness::default_for_dim(self.dim);
                Some(self.ball_gamma().powf(-s.mu_circ / 3.0))
            }
        }
    }

    pub fn filter_spec(&self) -> Result<FilterSpec> {
        match self.filter {
            FilterKind::Truncation => Ok(FilterSpec::Truncation(Arc::new(self.estimator_spec().mode_set(self.dim)?))),
            FilterKind::QuasiBoundary(_) => FilterSpec::quasi_boundary(self.qbv_theta().expect("qbv")),
        }
    }

    /// Problem with `phi_hat` as final data.
    pub fn problem(&self, phi_hat: SpectralField) -> Result<ProblemSpec> {
        ProblemSpec::new(self.alpha, self.horizon, self.source(), self.coupling, phi_hat)
    }

    /// The scenario as `key = value` pairs (re-parsable).
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("name", &self.name);
        kv.set("dim", self.dim);
        kv.set("alpha", fmt_f64(self.alpha));
        kv.set("T", fmt_f64(self.horizon));
        kv.set("n", join(&self.n));
        kv.set("eps", fmt_f64(self.eps));
        kv.set("coupling", fmt_f64(self.coupling));
        kv.set("source", "manufactured");
        match &self.estimator {
            EstimatorKind::Rect(c) => {
                kv.set("estimator", "rect");
                if let Some(c) = c {
                    kv.set("cutoff", join(c));
                }
            }
            EstimatorKind::Ball(g) => {
                kv.set("estimator", "ball");
                if let Some(g) = g {
                    kv.set("gamma", fmt_f64(*g));
                }
            }
        }
        match self.filter {
            FilterKind::Truncation => {
                kv.set("filter", "truncation");
            }
            FilterKind::QuasiBoundary(t) => {
                kv.set("filter", "quasi-boundary");
                if let Some(t) = t {
                    kv.set("theta", fmt_f64(t));
                }
            }
        }
        kv.set("n_t", self.n_t);
        kv.set("seeds", join(&self.seeds));
        kv.set("replications", self.replications);
        kv.set("times", self.times.iter().map(|&t| fmt_f64(t)).collect::<Vec<_>>().join(","));
        kv.set("sigma", fmt_f64(self.sigma));
        kv.set("smoothness", fmt_f64(self.smoothness));
        kv.set("tol", fmt_f64(self.tol));
        kv.set("max_iter", self.max_iter);
        kv.set("save_runs", self.save_runs);
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let text = "# case 2\nname = c2\ndim = 2\nalpha = 0.5\nn = 50\neps = 0.015\nseeds = 1, 2,3\ntimes = 0.3,0.5\n";
        let s = Scenario::parse(text, "mem").unwrap();
        assert_eq!(s.n, vec![50, 50]);
        assert_eq!(s.seeds, vec![1, 2, 3]);
        assert_eq!(s.estimator_spec(), EstimatorSpec::Rectangle(vec![3, 3]));
        let again = Scenario::parse(&s.to_key_values().render(), "mem").unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn parse_errors() {
        assert!(Scenario::parse("name = a\ndim = 1\nalpha = 0.3\n", "mem").is_err());
        assert!(Scenario::parse("name = a\ndim = 1\nalpha = 0.3\nn = 50\nbogus = 1\n", "mem").is_err());
        assert!(Scenario::parse("name = a\ndim = 1\nalpha = 1.3\nn = 50\n", "mem").is_err());
        assert!(Scenario::parse("name = a\ndim = 1\nalpha = 0.3\nn = 50\nn_t = 200\n", "mem").is_err());
        assert!(Scenario::parse("name = a\ndim = 1\nalpha = 0.3\nn = x\n", "mem").is_err());
    }

    #[test]
    fn default_schedules() {
        let mut s = Scenario::case_one();
        s.estimator = EstimatorKind::Ball(None);
        s.filter = FilterKind::QuasiBoundary(None);
        let g = s.ball_gamma();
        assert!((g - 50f64.powf(1.0 / 1.75)).abs() < 1e-12);
        assert!((s.qbv_theta().unwrap() - g.powf(-0.25)).abs() < 1e-12);
        assert_eq!(Scenario::case_two().runs().len(), 1);
    }
}

//! Scenario runs, error metrics and report files.

use super::svg::{LinePlot, Series};
use super::{EstimatorKind, FilterKind, Scenario};
use crate::artifact::{fmt_f64, write_atomic, KeyValues};
use crate::error::{Error, Result};
use crate::observe::{mean_and_ci, observe, BallSmoothness, GridSpec, ObservationSet, RiskEstimate, SeedRecord};
use crate::regularize::{
    envelope_beta_one, manufactured_exact, sine_product_coefficient, theoretical_bound, verify_filter, BackwardSolver,
    BoundContext, BoundMethod, FilterSpec, PicardOptions, SolveResult,
};
use crate::spectral::{synthesize_on_grid, ModeIndex, SpectralField};
use std::path::Path;
use std::sync::Arc;

/// Reference solution used for error metrics.
pub trait ExactSolution: Sync {
    fn value(&self, t: f64, x: &[f64]) -> f64;
    /// Spectral coefficients of `u(t, ·)`.
    fn field(&self, t: f64) -> Result<SpectralField>;
}

/// `u(t, x) = t Π sin x_i`.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedExact {
    pub dim: usize,
}

impl ExactSolution for ManufacturedExact {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        manufactured_exact(t, x)
    }

    fn field(&self, t: f64) -> Result<SpectralField> {
        Ok(SpectralField::single(ModeIndex::new(vec![1; self.dim])?, t * sine_product_coefficient(self.dim)))
    }
}

/// Errors of a trajectory at one time node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub t: f64,
    /// `sqrt(mean over grid points (ũ - u)²)`.
    pub err_rms: f64,
    /// Spectral `L²` norm of the coefficient difference.
    pub err_l2: f64,
    pub err_h_sigma: Option<f64>,
    /// Square root of the mean-squared theoretical bound.
    pub bound: Option<f64>,
}

/// Metrics of `traj` against `exact` at the nodes `times`.
pub fn compute_metrics(
    traj: &SolveResult,
    exact: &dyn ExactSolution,
    grid: &GridSpec,
    times: &[f64],
    sigma: Option<f64>,
    bound: Option<f64>,
) -> Result<Vec<MetricRecord>> {
    let axes = grid.axes();
    times
        .iter()
        .map(|&t| {
            let u = traj.at(t)?;
            let vals = synthesize_on_grid(u, &axes)?;
            let sq: f64 = vals.iter().enumerate().map(|(k, v)| (v - exact.value(t, &grid.point(k))).powi(2)).sum();
            let ex = exact.field(t)?;
            Ok(MetricRecord {
                t,
                err_rms: (sq / grid.len() as f64).sqrt(),
                err_l2: u.distance(&ex, 0.0),
                err_h_sigma: sigma.map(|s| u.distance(&ex, s)),
                bound,
            })
        })
        .collect()
}

/// Outcome of one `(seed, replication)` run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: SeedRecord,
    pub metrics: Vec<MetricRecord>,
    pub iterations: usize,
    pub contraction_ratios: Vec<f64>,
    pub error: Option<String>,
    pub observations: Option<ObservationSet>,
    pub solution: Option<SolveResult>,
}

impl RunOutcome {
    /// `seed` or `seed:replication` when replications are in use.
    pub fn label(&self, replications: usize) -> String {
        if replications > 1 {
            format!("{}:{}", self.seed.seed, self.seed.replication)
        } else {
            self.seed.seed.to_string()
        }
    }
}

/// Aggregate over successful runs at one time node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub t: f64,
    pub err_rms: RiskEstimate,
    pub err_l2: RiskEstimate,
    /// `sqrt(mean err_L2²)`.
    pub err_rms_l2: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub runs: Vec<RunOutcome>,
    pub summary: Vec<SummaryRow>,
    pub bound: Option<f64>,
    pub bound_note: String,
    pub manifest: KeyValues,
}

impl ScenarioReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn summary_at(&self, t: f64) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| (r.t - t).abs() < 1e-12)
    }

    /// `sup_t sqrt(mean ‖ũ(t) - u(t)‖²)` over the reported times.
    pub fn err_xt(&self) -> f64 {
        self.summary.iter().map(|r| r.err_rms_l2).fold(f64::NAN, f64::max)
    }
}

/// Mean-squared error bound of the scenario's method with the exact
/// solution's norms, or an explanation why no bound applies.
pub fn scenario_bound(s: &Scenario) -> std::result::Result<f64, String> {
    let inner = || -> Result<f64> {
        let exact = ManufacturedExact { dim: s.dim };
        let ctx = BoundContext {
            alpha: s.alpha,
            horizon: s.horizon,
            lipschitz: s.coupling,
            envelope: envelope_beta_one(s.alpha)?,
        };
        let phi = exact.field(s.horizon)?;
        let u0 = exact.field(0.0)?;
        let tgrid = s.time_grid()?;
        let sup_norm = |sigma: f64| -> Result<f64> {
            let mut m = 0.0f64;
            for &t in tgrid.nodes() {
                m = m.max(exact.field(t)?.sobolev_norm(sigma));
            }
            Ok(m)
        };
        let smooth = BallSmoothness::default_for_dim(s.dim);
        let method = match (&s.estimator, &s.filter) {
            (EstimatorKind::Rect(_), FilterKind::Truncation) => {
                let cutoff = match s.estimator_spec() {
                    crate::observe::EstimatorSpec::Rectangle(c) => c,
                    _ => unreachable!(),
                };
                BoundMethod::TruncationRect {
                    n: s.n.clone(),
                    cutoff,
                    eps_max: s.eps,
                    theta: s.smoothness,
                    phi_norm_theta: phi.sobolev_norm(s.smoothness),
                    u_norm_theta: sup_norm(s.smoothness)?,
                }
            }
            (EstimatorKind::Ball(_), FilterKind::QuasiBoundary(_)) => BoundMethod::QuasiBoundaryL2 {
                n: s.n.clone(),
                eps_max: s.eps,
                gamma: s.ball_gamma(),
                theta_reg: s.qbv_theta().expect("qbv"),
                smoothness: smooth.clone(),
                phi_norm_mu_circ: phi.sobolev_norm(smooth.mu_circ),
                u0_norm_h1: u0.sobolev_norm(1.0),
            },
            (EstimatorKind::Ball(_), FilterKind::Truncation) => {
                let filter = s.filter_spec()?;
                let spec = s.problem(phi.clone())?;
                let r = verify_filter(&filter, &spec, tgrid.nodes())?;
                BoundMethod::GeneralFilter {
                    n: s.n.clone(),
                    eps_max: s.eps,
                    gamma: s.ball_gamma(),
                    sigma: 0.0,
                    smoothness: smooth.clone(),
                    c_dagger: r.c_dagger,
                    c_ddagger: r.c_ddagger,
                    q: r.q,
                    phi_norm_mu_circ: phi.sobolev_norm(smooth.mu_circ),
                    phi_norm_sigma_mu_circ: phi.sobolev_norm(smooth.mu_circ),
                    u0_norm_sigma_2q: u0.sobolev_norm(2.0 * r.q),
                }
            }
            (EstimatorKind::Rect(_), FilterKind::QuasiBoundary(_)) => {
                return Err(Error::Unsupported("no bound for the quasi-boundary filter on rectangle data".into()))
            }
        };
        theoretical_bound(&ctx, &method)
    };
    inner().map_err(|e| e.to_string())
}

fn run_one(s: &Scenario, solver: &BackwardSolver, seed: SeedRecord, bound: Option<f64>) -> RunOutcome {
    let exact = ManufacturedExact { dim: s.dim };
    let mut out = RunOutcome {
        seed,
        metrics: Vec::new(),
        iterations: 0,
        contraction_ratios: Vec::new(),
        error: None,
        observations: None,
        solution: None,
    };
    let attempt = || -> Result<(ObservationSet, SolveResult, Vec<MetricRecord>)> {
        let grid = s.grid()?;
        let obs = observe(|x| exact.value(s.horizon, x), &grid, &crate::observe::NoiseSpec::Scalar(s.eps), seed)?;
        let phi_hat = s.estimator_spec().apply(&obs)?;
        let mut res = solver.solve(&phi_hat, &PicardOptions { tol: s.tol, max_iter: s.max_iter })?;
        res.manifest.set("seed", seed.seed);
        res.manifest.set("replication", seed.replication);
        let metrics = compute_metrics(&res, &exact, &grid, &s.times, Some(s.sigma), bound)?;
        Ok((obs, res, metrics))
    };
    match attempt() {
        Ok((obs, res, metrics)) => {
            out.metrics = metrics;
            out.iterations = res.iterations;
            out.contraction_ratios = res.contraction_ratios.clone();
            if s.save_runs {
                out.observations = Some(obs);
                out.solution = Some(res);
            }
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

/// Observes, estimates, solves and measures every `(seed, replication)` run.
/// A failing run is recorded and does not stop the others.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioReport> {
    s.validate()?;
    let tgrid = s.time_grid()?;
    for &t in &s.times {
        tgrid.index_of(t)?;
    }
    let modes = Arc::new(s.estimator_spec().mode_set(s.dim)?);
    let filter: FilterSpec = s.filter_spec()?;
    let spec = s.problem(SpectralField::zeros(modes.clone()))?;
    let solver = BackwardSolver::new(&spec, &filter, &tgrid)?;
    let (bound, bound_note) = match scenario_bound(s) {
        Ok(b) => (Some(b.sqrt()), "sqrt of mean-squared bound".to_string()),
        Err(e) => (None, e),
    };
    let seeds = s.runs();
    let runs = crate::par::map_range(seeds.len(), |i| run_one(s, &solver, seeds[i], bound));

    let mut summary = Vec::new();
    for (k, &t) in s.times.iter().enumerate() {
        let ok: Vec<&MetricRecord> = runs.iter().filter(|r| r.error.is_none()).map(|r| &r.metrics[k]).collect();
        if ok.is_empty() {
            continue;
        }
        let rms: Vec<f64> = ok.iter().map(|m| m.err_rms).collect();
        let l2: Vec<f64> = ok.iter().map(|m| m.err_l2).collect();
        let ms = l2.iter().map(|v| v * v).sum::<f64>() / l2.len() as f64;
        summary.push(SummaryRow { t, err_rms: mean_and_ci(&rms), err_l2: mean_and_ci(&l2), err_rms_l2: ms.sqrt(), bound });
    }

    let mut manifest = s.to_key_values();
    for (k, v) in filter.describe().iter() {
        manifest.set(k, v);
    }
    manifest.set("active_modes", solver.active_modes().len());
    manifest.set("estimator_modes", modes.len());
    manifest.set("runs", runs.len());
    let failures = runs.iter().filter(|r| r.error.is_some()).count();
    manifest.set("failures", failures);
    manifest.set("bound", bound.map(fmt_f64).unwrap_or_default());
    manifest.set("bound_note", bound_note.replace('\n', " "));
    for (i, w) in solver.warnings().iter().enumerate() {
        manifest.set(&format!("warning.{i}"), w);
    }
    let max_iter = runs.iter().map(|r| r.iterations).max().unwrap_or(0);
    let max_ratio = runs.iter().flat_map(|r| r.contraction_ratios.iter().copied()).fold(0.0, f64::max);
    manifest.set("iterations_max", max_iter);
    manifest.set("contraction_ratio_max", fmt_f64(max_ratio));
    for r in &runs {
        if let Some(e) = &r.error {
            manifest.set(&format!("failure.{}", r.label(s.replications)), e.replace('\n', " "));
        }
    }
    Ok(ScenarioReport { scenario: s.clone(), runs, summary, bound, bound_note, manifest })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Shape(format!("csv encoding: {e}"));
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(&r).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| Error::Shape(format!("csv encoding: {e}")))
}

/// `metrics.csv` content: `scenario,seed,t,err_rms,err_L2,err_Hsigma,bound`.
pub fn metrics_csv(report: &ScenarioReport) -> Result<Vec<u8>> {
    let s = &report.scenario;
    let mut rows = Vec::new();
    for r in &report.runs {
        for m in &r.metrics {
            rows.push(vec![
                s.name.clone(),
                r.label(s.replications),
                fmt_f64(m.t),
                fmt_f64(m.err_rms),
                fmt_f64(m.err_l2),
                opt(m.err_h_sigma),
                opt(m.bound),
            ]);
        }
    }
    csv_bytes(&["scenario", "seed", "t", "err_rms", "err_L2", "err_Hsigma", "bound"], rows)
}

fn summary_csv(report: &ScenarioReport) -> Result<Vec<u8>> {
    let rows = report
        .summary
        .iter()
        .map(|r| {
            vec![
                report.scenario.name.clone(),
                fmt_f64(r.t),
                r.err_rms.replications.to_string(),
                fmt_f64(r.err_rms.mean),
                fmt_f64(r.err_rms.ci_halfwidth),
                fmt_f64(r.err_l2.mean),
                fmt_f64(r.err_l2.ci_halfwidth),
                fmt_f64(r.err_rms_l2),
                opt(r.bound),
            ]
        })
        .collect();
    csv_bytes(
        &["scenario", "t", "runs", "err_rms_mean", "err_rms_ci", "err_L2_mean", "err_L2_ci", "err_L2_rms", "bound"],
        rows,
    )
}

/// Writes `metrics.csv`, `summary.csv`, `manifest.txt`, optionally
/// `errors.svg`, and the per-run artifacts when the scenario keeps them.
pub fn write_report(report: &ScenarioReport, dir: &Path, svg: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("metrics.csv"), &metrics_csv(report)?)?;
    write_atomic(&dir.join("summary.csv"), &summary_csv(report)?)?;
    report.manifest.write(&dir.join("manifest.txt"))?;
    if svg {
        let mut plot = LinePlot::new(&format!("{}: error against time", report.scenario.name), "t", "error");
        plot.push(Series::new("mean err_rms", report.summary.iter().map(|r| (r.t, r.err_rms.mean)).collect()));
        plot.push(Series::new("mean err_L2", report.summary.iter().map(|r| (r.t, r.err_l2.mean)).collect()));
        if let Some(b) = report.bound {
            plot.push(Series::new("bound", report.summary.iter().map(|r| (r.t, b)).collect()));
            plot.log_y = true;
        }
        write_atomic(&dir.join("errors.svg"), plot.render().as_bytes())?;
    }
    for r in &report.runs {
        let sub = dir.join("runs").join(r.label(report.scenario.replications).replace(':', "-"));
        if let Some(obs) = &r.observations {
            obs.write(&sub.join("observations.csv"))?;
        }
        if let Some(sol) = &r.solution {
            sol.write_dir(&sub.join("trajectory"))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observe::make_grid;
    use crate::regularize::SolveResult;
    use crate::spectral::ModeSet;

    fn exact_modes(dim: usize) -> Result<Arc<ModeSet>> {
        Ok(Arc::new(ModeSet::explicit(dim, vec![ModeIndex::new(vec![1; dim])?])?))
    }

    fn constant_traj(fields: Vec<SpectralField>, times: Vec<f64>) -> SolveResult {
        SolveResult {
            times,
            trajectory: fields,
            iterations: 1,
            contraction_ratios: vec![],
            residual: 0.0,
            warnings: vec![],
            manifest: KeyValues::new(),
        }
    }

    #[test]
    fn exact_trajectory_has_zero_error() {
        let ex = ManufacturedExact { dim: 2 };
        let times = vec![0.0, 0.5, 1.0];
        let traj = constant_traj(times.iter().map(|&t| ex.field(t).unwrap()).collect(), times.clone());
        let grid = make_grid(&[8, 8]).unwrap();
        for m in compute_metrics(&traj, &ex, &grid, &times, Some(1.0), None).unwrap() {
            assert!(m.err_rms < 1e-15 && m.err_l2 == 0.0 && m.err_h_sigma == Some(0.0));
        }
    }

    #[test]
    fn single_mode_discrepancy() {
        struct Zero;
        impl ExactSolution for Zero {
            fn value(&self, _t: f64, _x: &[f64]) -> f64 {
                0.0
            }
            fn field(&self, _t: f64) -> Result<SpectralField> {
                Ok(SpectralField::single(ModeIndex::new(vec![1, 1])?, 0.0))
            }
        }
        let delta = 0.25;
        let u = SpectralField::single(ModeIndex::new(vec![1, 1]).unwrap(), delta);
        let traj = constant_traj(vec![u.clone(), u.clone(), u], vec![0.0, 0.5, 1.0]);
        let grid = make_grid(&[16, 16]).unwrap();
        let m = compute_metrics(&traj, &Zero, &grid, &[0.5], Some(1.0), None).unwrap()[0];
        assert!((m.err_l2 - delta).abs() < 1e-15);
        assert!((m.err_h_sigma.unwrap() - 2f64.sqrt() * delta).abs() < 1e-15);
        assert!(matches!(compute_metrics(&traj, &Zero, &grid, &[0.3], None, None), Err(Error::NodeMismatch(_))));
    }

    #[test]
    fn constant_offset_is_rms() {
        struct Offset;
        impl ExactSolution for Offset {
            fn value(&self, _t: f64, _x: &[f64]) -> f64 {
                -0.125
            }
            fn field(&self, _t: f64) -> Result<SpectralField> {
                exact_modes(1).map(SpectralField::zeros)
            }
        }
        let u = SpectralField::zeros(exact_modes(1).unwrap());
        let traj = constant_traj(vec![u.clone(), u.clone(), u], vec![0.0, 0.5, 1.0]);
        let grid = make_grid(&[10]).unwrap();
        let m = compute_metrics(&traj, &Offset, &grid, &[1.0], None, None).unwrap()[0];
        assert!((m.err_rms - 0.125).abs() < 1e-15);
    }
}

//! Convergence studies and the ill-posedness demonstration.

use super::metrics::{run_scenario, write_report, ScenarioReport};
use super::svg::{LinePlot, Series};
use super::{EstimatorKind, FilterKind, Scenario};
use crate::artifact::{fmt_f64, write_atomic, KeyValues};
use crate::error::{Error, Result};
use crate::observe::{estimate_rect, make_grid, mean_and_ci, observe_values, NoiseSpec, RiskEstimate, SeedRecord};
use crate::regularize::{envelope_beta_one, op_a, FilterSpec, LinearSource, ProblemSpec};
use crate::spectral::{ModeSet, SpectralField};
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} abscissae for {} ordinates", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientPoints(format!("a slope needs two points, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints("all abscissae coincide".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n: usize,
    /// Cutoffs, or `gamma/theta` for ball schedules.
    pub schedule: String,
    pub report: ScenarioReport,
    pub err_xt: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub name: String,
    pub rows: Vec<ConvergenceRow>,
    /// Slope of `ln err_xt` against `ln n`.
    pub error_slope: f64,
    pub bound_slope: Option<f64>,
    pub error_nonincreasing: bool,
    pub bound_strictly_decreasing: Option<bool>,
    pub manifest: KeyValues,
}

/// Runs `base` at every grid size in `ns` (all axes equal) with the default
/// schedule for the base's method, and fits log-log slopes.
pub fn convergence_study(base: &Scenario, ns: &[usize]) -> Result<ConvergenceReport> {
    if ns.len() < 3 {
        return Err(Error::InsufficientPoints(format!("a convergence study needs at least 3 sizes, got {}", ns.len())));
    }
    let mut rows = Vec::new();
    for &n in ns {
        let mut s = base.clone();
        s.name = format!("{}-n{n}", base.name);
        s.n = vec![n; base.dim];
        if let EstimatorKind::Rect(_) = s.estimator {
            s.estimator = EstimatorKind::Rect(None);
        } else {
            s.estimator = EstimatorKind::Ball(None);
        }
        if let FilterKind::QuasiBoundary(_) = s.filter {
            s.filter = FilterKind::QuasiBoundary(None);
        }
        let schedule = match (&s.estimator, s.qbv_theta()) {
            (EstimatorKind::Rect(_), _) => match s.estimator_spec() {
                crate::observe::EstimatorSpec::Rectangle(c) => c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x"),
                _ => unreachable!(),
            },
            (_, Some(th)) => format!("gamma={} theta={}", fmt_f64(s.ball_gamma()), fmt_f64(th)),
            (_, None) => format!("gamma={}", fmt_f64(s.ball_gamma())),
        };
        let report = run_scenario(&s)?;
        let err_xt = report.err_xt();
        let bound = report.bound;
        rows.push(ConvergenceRow { n, schedule, report, err_xt, bound });
    }
    let ln_n: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ln_e: Vec<f64> = rows.iter().map(|r| r.err_xt.ln()).collect();
    let error_slope = least_squares_slope(&ln_n, &ln_e)?;
    let bounds: Option<Vec<f64>> = rows.iter().map(|r| r.bound).collect();
    let bound_slope = match &bounds {
        Some(b) => Some(least_squares_slope(&ln_n, &b.iter().map(|v| v.ln()).collect::<Vec<_>>())?),
        None => None,
    };
    let error_nonincreasing = rows.windows(2).all(|w| w[1].err_xt <= w[0].err_xt);
    let bound_strictly_decreasing = bounds.as_ref().map(|b| b.windows(2).all(|w| w[1] < w[0]));

    let mut manifest = base.to_key_values();
    manifest.set("study", "convergence");
    manifest.set("ns", ns.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","));
    manifest.set("error_slope", fmt_f64(error_slope));
    manifest.set("bound_slope", bound_slope.map(fmt_f64).unwrap_or_default());
    manifest.set("error_nonincreasing", error_nonincreasing);
    manifest.set("bound_strictly_decreasing", bound_strictly_decreasing.map(|b| b.to_string()).unwrap_or_default());
    manifest.set("failures", rows.iter().map(|r| r.report.failures()).sum::<usize>());
    Ok(ConvergenceReport { name: base.name.clone(), rows, error_slope, bound_slope, error_nonincreasing, bound_strictly_decreasing, manifest })
}

/// Writes `convergence.csv`, `manifest.txt`, one report directory per size
/// and optionally `convergence.svg`.
pub fn write_convergence(report: &ConvergenceReport, dir: &Path, svg: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let enc = |e: csv::Error| Error::Shape(format!("csv encoding: {e}"));
    w.write_record(["scenario", "n", "schedule", "runs", "failures", "err_xt", "bound"]).map_err(enc)?;
    for r in &report.rows {
        w.write_record([
            report.name.clone(),
            r.n.to_string(),
            r.schedule.clone(),
            r.report.runs.len().to_string(),
            r.report.failures().to_string(),
            fmt_f64(r.err_xt),
            r.bound.map(fmt_f64).unwrap_or_default(),
        ])
        .map_err(enc)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Shape(format!("csv encoding: {e}")))?;
    write_atomic(&dir.join("convergence.csv"), &bytes)?;
    report.manifest.write(&dir.join("manifest.txt"))?;
    for r in &report.rows {
        write_report(&r.report, &dir.join(format!("n{}", r.n)), svg)?;
    }
    if svg {
        let mut plot = LinePlot::new(&format!("{}: convergence", report.name), "n", "error");
        plot.log_x = true;
        plot.log_y = true;
        plot.push(Series::new("err_xt", report.rows.iter().map(|r| (r.n as f64, r.err_xt)).collect()));
        if report.rows.iter().all(|r| r.bound.is_some()) {
            plot.push(Series::new("bound", report.rows.iter().map(|r| (r.n as f64, r.bound.unwrap())).collect()));
        }
        write_atomic(&dir.join("convergence.svg"), plot.render().as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IllposedRow {
    pub n: usize,
    /// `‖φ^{n,n}‖²` over the seeds.
    pub phi_sq: RiskEstimate,
    /// `π²(n-1)²/n³`.
    pub phi_sq_expected: f64,
    /// `‖A(0) φ^{n,n}‖` over the seeds.
    pub u0_norm: RiskEstimate,
    pub u0_sq_mean: f64,
    /// `(2/3) π² T^{2α} λ²_{n-1,n-1} / (M2² n³)`.
    pub u0_sq_lower_bound: f64,
    /// `1/E_{α,1}(-λ_{n-1,n-1} T^α)`.
    pub amplification: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IllposedReport {
    pub alpha: f64,
    pub horizon: f64,
    /// Source coupling `𝔎` of the example.
    pub coupling: f64,
    pub rows: Vec<IllposedRow>,
    pub manifest: KeyValues,
}

/// Pure-noise data `Φ = (n²)^{-1/4} W` on `n × n` grids, estimated on the
/// full rectangle `N = n - 1` and propagated back to `t = 0` without
/// regularisation. The reported norm is that of `A(0) φ^{n,n}`.
pub fn illposed_demo(ns: &[usize], alpha: f64, seed: u64, replications: usize) -> Result<IllposedReport> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Domain(format!("the example needs 0 < alpha < 1/2, got {alpha}")));
    }
    if replications == 0 || ns.iter().any(|&n| n < 2) {
        return Err(Error::Domain("need replications >= 1 and grid sizes >= 2".into()));
    }
    let horizon = 1.0;
    let env = envelope_beta_one(alpha)?;
    let (m1, m2) = (env.m1, env.m2);
    let a = 1.0 - 2.0 * alpha;
    let coupling = m1 / (2.0 * m2 * horizon) * (a / (a + m2 * m2)).sqrt();
    let mut rows = Vec::new();
    for &n in ns {
        let grid = make_grid(&[n, n])?;
        let cutoff = [n as u32 - 1, n as u32 - 1];
        let modes = Arc::new(ModeSet::rect(&cutoff)?);
        let ones = SpectralField::from_coeffs(modes.clone(), vec![1.0; modes.len()])?;
        let spec = ProblemSpec::new(alpha, horizon, Arc::new(LinearSource(coupling)), coupling, ones.clone())?;
        let mult = op_a(0.0, &ones, &spec, &FilterSpec::Truncation(modes.clone()))?;
        let noise = NoiseSpec::Scalar((n as f64).powf(-0.5));
        let draws = crate::par::map_range(replications, |r| -> Result<(f64, f64)> {
            let obs = observe_values(vec![0.0; grid.len()], &grid, &noise, SeedRecord::new(seed, r as u64))?;
            let phi = estimate_rect(&obs, &cutoff)?;
            let phi_sq: f64 = phi.coeffs().iter().map(|c| c * c).sum();
            let u0: f64 = phi.coeffs().iter().zip(mult.coeffs()).map(|(c, m)| (c * m).powi(2)).sum::<f64>().sqrt();
            Ok((phi_sq, u0))
        });
        let draws: Vec<(f64, f64)> = draws.into_iter().collect::<Result<_>>()?;
        let phi_sq: Vec<f64> = draws.iter().map(|d| d.0).collect();
        let u0: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let nf = n as f64;
        let lambda = 2.0 * (nf - 1.0).powi(2);
        let last = mult.coeffs()[mult.coeffs().len() - 1];
        rows.push(IllposedRow {
            n,
            phi_sq: mean_and_ci(&phi_sq),
            phi_sq_expected: PI * PI * (nf - 1.0).powi(2) / nf.powi(3),
            u0_norm: mean_and_ci(&u0),
            u0_sq_mean: u0.iter().map(|v| v * v).sum::<f64>() / u0.len() as f64,
            u0_sq_lower_bound: 2.0 / 3.0 * PI * PI * horizon.powf(2.0 * alpha) * lambda * lambda / (m2 * m2 * nf.powi(3)),
            amplification: last,
        });
    }
    let mut manifest = KeyValues::new();
    manifest.set("study", "illposed");
    manifest.set("alpha", fmt_f64(alpha));
    manifest.set("T", fmt_f64(horizon));
    manifest.set("coupling", fmt_f64(coupling));
    manifest.set("m1", fmt_f64(m1));
    manifest.set("m2", fmt_f64(m2));
    manifest.set("seed", seed);
    manifest.set("replications", replications);
    manifest.set("ns", ns.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","));
    Ok(IllposedReport { alpha, horizon, coupling, rows, manifest })
}

/// Writes `illposed.csv`, `manifest.txt` and optionally `illposed.svg`.
pub fn write_illposed(report: &IllposedReport, dir: &Path, svg: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let enc = |e: csv::Error| Error::Shape(format!("csv encoding: {e}"));
    w.write_record([
        "n",
        "phi_sq_mean",
        "phi_sq_ci",
        "phi_sq_expected",
        "u0_norm_mean",
        "u0_norm_ci",
        "u0_sq_mean",
        "u0_sq_lower_bound",
        "amplification",
    ])
    .map_err(enc)?;
    for r in &report.rows {
        w.write_record([
            r.n.to_string(),
            fmt_f64(r.phi_sq.mean),
            fmt_f64(r.phi_sq.ci_halfwidth),
            fmt_f64(r.phi_sq_expected),
            fmt_f64(r.u0_norm.mean),
            fmt_f64(r.u0_norm.ci_halfwidth),
            fmt_f64(r.u0_sq_mean),
            fmt_f64(r.u0_sq_lower_bound),
            fmt_f64(r.amplification),
        ])
        .map_err(enc)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Shape(format!("csv encoding: {e}")))?;
    write_atomic(&dir.join("illposed.csv"), &bytes)?;
    report.manifest.write(&dir.join("manifest.txt"))?;
    if svg {
        let mut plot = LinePlot::new("unregularised backward solve of noise data", "n", "norm");
        plot.log_x = true;
        plot.log_y = true;
        plot.push(Series::new("mean |phi|^2", report.rows.iter().map(|r| (r.n as f64, r.phi_sq.mean)).collect()));
        plot.push(Series::new("mean |u(0)|", report.rows.iter().map(|r| (r.n as f64, r.u0_norm.mean)).collect()));
        write_atomic(&dir.join("illposed.svg"), plot.render().as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|v| (3.0 * v.powf(-0.5)).ln()).collect();
        assert!((least_squares_slope(&x, &y).unwrap() + 0.5).abs() < 1e-14);
        assert!(least_squares_slope(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn too_few_sizes() {
        assert!(matches!(convergence_study(&Scenario::case_one(), &[50]), Err(Error::InsufficientPoints(_))));
    }

    #[test]
    fn illposed_expected_input_norm() {
        let r = illposed_demo(&[16], 0.3, 7, 4).unwrap();
        let expected = PI * PI * 225.0 / 4096.0;
        assert!((r.rows[0].phi_sq_expected - expected).abs() < 1e-15);
        assert!((expected - 0.542).abs() < 1e-3);
        assert!(illposed_demo(&[16], 0.6, 7, 4).is_err());
    }
}

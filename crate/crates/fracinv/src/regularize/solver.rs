//! Picard iteration for the filtered integral equation and the forward solve.

use super::{contraction_constant, envelope_beta_one, kernel, FilterSpec, ProblemSpec, Source, TimeGrid};
use crate::artifact::{fmt_f64, KeyValues};
use crate::error::{Error, Result};
use crate::spectral::{project, project_values, synthesize_on_grid, ModeSet, QuadratureRule, SpectralField};
use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

/// Stopping rule of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    /// Bound on `sup_t ‖u^{(m+1)}(t) - u^{(m)}(t)‖_{L²}`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200 }
    }
}

/// Trajectory on every node of the time grid with iteration diagnostics.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub times: Vec<f64>,
    pub trajectory: Vec<SpectralField>,
    pub iterations: usize,
    /// `‖update_m‖ / ‖update_{m-1}‖` for every iteration after the first.
    pub contraction_ratios: Vec<f64>,
    /// Norm of the last update.
    pub residual: f64,
    pub warnings: Vec<String>,
    pub manifest: KeyValues,
}

impl SolveResult {
    /// Field at the grid node `t`.
    pub fn at(&self, t: f64) -> Result<&SpectralField> {
        let n = self.times.len();
        let h = self.times[n - 1] / (n - 1) as f64;
        let i = (t / h).round();
        if i < 0.0 || i as usize >= n || (self.times[i as usize] - t).abs() > 1e-9 * h {
            return Err(Error::NodeMismatch(t));
        }
        Ok(&self.trajectory[i as usize])
    }

    /// Writes `u_t0000.csv`, `u_t0001.csv`, … and `manifest.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, u) in self.trajectory.iter().enumerate() {
            u.write_csv(&dir.join(format!("u_t{i:04}.csv")))?;
        }
        self.manifest.write(&dir.join("manifest.txt"))
    }
}

/// Quadrature weights `w[i][k]` with `∫_0^{t_i} g ≈ Σ_k w[i][k] g(t_k)`:
/// trapezoid on one interval, composite Simpson for an even number of
/// intervals, and Simpson followed by the 3/8 rule otherwise.
fn cumulative_weights(n_t: usize, h: f64) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(n_t);
    rows.push(vec![0.0]);
    for i in 1..n_t {
        let mut w = vec![0.0; i + 1];
        if i == 1 {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        } else {
            let simpson_end = if i % 2 == 0 { i } else { i - 3 };
            for k in (0..simpson_end).step_by(2) {
                w[k] += h / 3.0;
                w[k + 1] += 4.0 * h / 3.0;
                w[k + 2] += h / 3.0;
            }
            if i % 2 == 1 {
                let k = i - 3;
                for (o, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                    w[k + o] += 3.0 * h / 8.0 * c;
                }
            }
        }
        rows.push(w);
    }
    rows
}

/// How the source enters the per-mode integrals.
enum SourceForm {
    Zero,
    /// `f_j(t_k) = h[k][j] + c·u_j(t_k)`.
    Affine { h: Vec<Vec<f64>>, c: f64 },
    /// Pointwise evaluation on the tensor quadrature grid.
    Nonlinear { rule: QuadratureRule },
}

/// Kernel tables and quadrature shared by every solve on one mode set.
/// Trajectory, iteration count, contraction ratios and final update size.
type Picard = (Vec<Vec<f64>>, usize, Vec<f64>, f64);

struct Engine {
    alpha: f64,
    times: Vec<f64>,
    modes: Arc<ModeSet>,
    /// `kernel[j][m] = e_j(t_m)`.
    kernel: Vec<Arc<Vec<f64>>>,
    weights: Vec<Vec<f64>>,
    source: Arc<dyn Source>,
    form: SourceForm,
}

impl Engine {
    fn new(alpha: f64, tgrid: &TimeGrid, modes: Arc<ModeSet>, source: Arc<dyn Source>, rule: Option<QuadratureRule>) -> Result<Self> {
        let times = tgrid.nodes().to_vec();
        let n_t = times.len();
        // one table per distinct eigenvalue
        let mut distinct: Vec<f64> = modes.eigenvalues().to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let tables = crate::par::map_range(distinct.len(), |i| -> Result<Vec<f64>> {
            times.iter().map(|&t| kernel(alpha, distinct[i], t)).collect()
        });
        let mut by_lambda = HashMap::new();
        for (l, t) in distinct.iter().zip(tables) {
            by_lambda.insert(l.to_bits(), Arc::new(t?));
        }
        let kernel_rows = modes.eigenvalues().iter().map(|l| by_lambda[&l.to_bits()].clone()).collect();
        let weights = cumulative_weights(n_t, tgrid.step());
        let form = if source.is_zero() {
            SourceForm::Zero
        } else if let Some(c) = source.affine_coefficient() {
            let exact: Option<Vec<Vec<f64>>> = times.iter().map(|&t| source.affine_part_coefficients(t, &modes)).collect();
            let h = match exact {
                Some(h) => h,
                None => {
                    let rule = rule.unwrap_or_else(|| QuadratureRule::default_for_dim(modes.dim()));
                    let rows = crate::par::map_range(n_t, |k| -> Result<Vec<f64>> {
                        let t = times[k];
                        let src = &source;
                        Ok(project(|x| src.eval(t, x, 0.0), modes.clone(), &rule)?.coeffs().to_vec())
                    });
                    rows.into_iter().collect::<Result<_>>()?
                }
            };
            SourceForm::Affine { h, c }
        } else {
            SourceForm::Nonlinear { rule: rule.unwrap_or_else(|| QuadratureRule::default_for_dim(modes.dim())) }
        };
        Ok(Self { alpha, times, modes, kernel: kernel_rows, weights, source, form })
    }

    fn n_t(&self) -> usize {
        self.times.len()
    }

    /// Source coefficients `F[k][j]` along the trajectory `u[k][j]`.
    fn source_coefficients(&self, u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match &self.form {
            SourceForm::Zero => Ok(vec![vec![0.0; self.modes.len()]; self.n_t()]),
            SourceForm::Affine { h, c } => Ok(h
                .iter()
                .zip(u)
                .map(|(hk, uk)| hk.iter().zip(uk).map(|(a, b)| a + c * b).collect())
                .collect()),
            SourceForm::Nonlinear { rule } => {
                let d = self.modes.dim();
                let axes: Vec<&[f64]> = vec![rule.nodes(); d];
                let n = rule.n_nodes();
                let rows = crate::par::map_range(self.n_t(), |k| -> Result<Vec<f64>> {
                    let t = self.times[k];
                    let field = SpectralField::from_coeffs(self.modes.clone(), u[k].clone())?;
                    let vals = synthesize_on_grid(&field, &axes)?;
                    let mut x = vec![0.0; d];
                    let f: Vec<f64> = vals
                        .iter()
                        .enumerate()
                        .map(|(flat, &v)| {
                            let mut r = flat;
                            for a in (0..d).rev() {
                                x[a] = rule.nodes()[r % n];
                                r /= n;
                            }
                            self.source.eval(t, &x, v)
                        })
                        .collect();
                    Ok(project_values(&f, self.modes.clone(), rule)?.coeffs().to_vec())
                });
                rows.into_iter().collect()
            }
        }
    }

    /// `I[i][j] = ∫_0^{t_i} e_j(t_i - s) F_j(s) ds`.
    fn duhamel(&self, f: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = self.modes.len();
        let rows = crate::par::map_range(self.n_t(), |i| {
            let mut out = vec![0.0; m];
            for (k, &w) in self.weights[i].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (j, o) in out.iter_mut().enumerate() {
                    *o += w * self.kernel[j][i - k] * f[k][j];
                }
            }
            out
        });
        rows
    }

    fn fields(&self, u: Vec<Vec<f64>>) -> Result<Vec<SpectralField>> {
        u.into_iter().map(|c| SpectralField::from_coeffs(self.modes.clone(), c)).collect()
    }

    /// Plain Picard iteration of `u ↦ step(I)` where `I` is the Duhamel
    /// integral of the source along `u`.
    fn iterate<S>(&self, mut u: Vec<Vec<f64>>, opts: &PicardOptions, step: S) -> Result<Picard>
    where
        S: Fn(&[Vec<f64>]) -> Vec<Vec<f64>>,
    {
        if !(opts.tol > 0.0) || opts.max_iter == 0 {
            return Err(Error::Domain(format!("invalid Picard options {opts:?}")));
        }
        if matches!(self.form, SourceForm::Zero) {
            return Ok((u, 1, Vec::new(), 0.0));
        }
        let mut ratios = Vec::new();
        let mut prev: Option<f64> = None;
        let mut above = 0;
        for it in 1..=opts.max_iter {
            let f = self.source_coefficients(&u)?;
            let next = step(&self.duhamel(&f));
            let update = u
                .iter()
                .zip(&next)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            u = next;
            if !update.is_finite() {
                return Err(Error::NonContraction { ratios });
            }
            if let Some(p) = prev {
                if p > 0.0 {
                    let r = update / p;
                    ratios.push(r);
                    above = if r > 1.0 { above + 1 } else { 0 };
                    if above >= 3 {
                        return Err(Error::NonContraction { ratios });
                    }
                }
            }
            if update <= opts.tol {
                return Ok((u, it, ratios, update));
            }
            prev = Some(update);
        }
        Err(Error::MaxIterations { tol: opts.tol, max_iter: opts.max_iter, last_update: prev.unwrap_or(f64::NAN) })
    }
}

fn contraction_warnings(alpha: f64, horizon: f64, lipschitz: f64, manifest: &mut KeyValues) -> Result<Vec<String>> {
    let mut warnings = Vec::new();
    if alpha < 1.0 {
        let q = contraction_constant(alpha, horizon, &envelope_beta_one(alpha)?);
        manifest.set("contraction_constant", fmt_f64(q));
        if lipschitz * q >= 1.0 {
            warnings.push(format!("K*Q = {} >= 1: contraction is not guaranteed", lipschitz * q));
        }
    }
    Ok(warnings)
}

/// Backward solver for a fixed problem, filter and time grid. Kernel tables,
/// filter multipliers and the projected source are computed once, so
/// [`BackwardSolver::solve`] can be called for many data sets on the same
/// mode set.
pub struct BackwardSolver {
    engine: Engine,
    filter: FilterSpec,
    /// `mult[i][j] = A_j(t_i)`.
    mult: Vec<Vec<f64>>,
    base_manifest: KeyValues,
    warnings: Vec<String>,
}

impl BackwardSolver {
    pub fn new(spec: &ProblemSpec, filter: &FilterSpec, tgrid: &TimeGrid) -> Result<Self> {
        Self::with_quadrature(spec, filter, tgrid, None)
    }

    /// As [`BackwardSolver::new`] with an explicit spatial rule for projecting
    /// the source.
    pub fn with_quadrature(spec: &ProblemSpec, filter: &FilterSpec, tgrid: &TimeGrid, rule: Option<QuadratureRule>) -> Result<Self> {
        check_grid(spec, tgrid)?;
        let modes = filter.active_modes(spec.phi_hat.modes());
        if modes.dim() != spec.dim {
            return Err(Error::Shape(format!("{}-d filter for a {}-d problem", modes.dim(), spec.dim)));
        }
        let engine = Engine::new(spec.alpha, tgrid, modes.clone(), spec.source.clone(), rule)?;
        let n_t = engine.n_t();
        let mut mult = vec![vec![0.0; modes.len()]; n_t];
        for j in 0..modes.len() {
            let lambda = modes.eigenvalues()[j];
            let e = &engine.kernel[j];
            for (i, row) in mult.iter_mut().enumerate() {
                row[j] = filter.multiplier(j, lambda, e[i], e[n_t - 1])?;
            }
        }
        let mut manifest = KeyValues::new();
        manifest.set("solver", "backward");
        manifest.set("alpha", fmt_f64(spec.alpha));
        manifest.set("T", fmt_f64(spec.horizon));
        manifest.set("n_t", n_t);
        manifest.set("dim", spec.dim);
        manifest.set("lipschitz", fmt_f64(spec.lipschitz));
        for (k, v) in filter.describe().iter() {
            manifest.set(k, v);
        }
        manifest.set("active_modes", modes.len());
        let warnings = contraction_warnings(spec.alpha, spec.horizon, spec.lipschitz, &mut manifest)?;
        Ok(Self { engine, filter: filter.clone(), mult, base_manifest: manifest, warnings })
    }

    pub fn filter(&self) -> &FilterSpec {
        &self.filter
    }

    pub fn active_modes(&self) -> &Arc<ModeSet> {
        &self.engine.modes
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Regularised trajectory for the final data `phi_hat`; coefficients
    /// outside the active mode set are ignored.
    pub fn solve(&self, phi_hat: &SpectralField, opts: &PicardOptions) -> Result<SolveResult> {
        let e = &self.engine;
        if phi_hat.dim() != e.modes.dim() {
            return Err(Error::Shape(format!("{}-d data for a {}-d solver", phi_hat.dim(), e.modes.dim())));
        }
        let phi = phi_hat.restrict_to(&e.modes);
        let phi = phi.coeffs();
        let last = e.n_t() - 1;
        let step = |duh: &[Vec<f64>]| -> Vec<Vec<f64>> {
            let tail = &duh[last];
            self.mult
                .iter()
                .zip(duh)
                .map(|(a, d)| (0..phi.len()).map(|j| a[j] * (phi[j] - tail[j]) + d[j]).collect())
                .collect()
        };
        let zero = vec![vec![0.0; phi.len()]; e.n_t()];
        let start = step(&zero);
        let (u, iterations, ratios, residual) = e.iterate(start, opts, step)?;
        let mut manifest = self.base_manifest.clone();
        manifest.set("iterations", iterations);
        manifest.set("residual", fmt_f64(residual));
        Ok(SolveResult {
            times: e.times.clone(),
            trajectory: e.fields(u)?,
            iterations,
            contraction_ratios: ratios,
            residual,
            warnings: self.warnings.clone(),
            manifest,
        })
    }
}

fn check_grid(spec: &ProblemSpec, tgrid: &TimeGrid) -> Result<()> {
    if (tgrid.horizon() - spec.horizon).abs() > 1e-12 * spec.horizon {
        return Err(Error::Shape(format!("time grid horizon {} differs from T = {}", tgrid.horizon(), spec.horizon)));
    }
    Ok(())
}

/// One-shot backward solve from `spec.phi_hat`.
pub fn solve_backward(spec: &ProblemSpec, filter: &FilterSpec, tgrid: &TimeGrid, opts: &PicardOptions) -> Result<SolveResult> {
    BackwardSolver::new(spec, filter, tgrid)?.solve(&spec.phi_hat, opts)
}

/// Direct problem from the initial field `u0` on its own mode set;
/// `spec.phi_hat` is not used.
pub fn solve_forward(u0: &SpectralField, spec: &ProblemSpec, tgrid: &TimeGrid, opts: &PicardOptions) -> Result<SolveResult> {
    check_grid(spec, tgrid)?;
    let e = Engine::new(spec.alpha, tgrid, u0.modes().clone(), spec.source.clone(), None)?;
    let c0 = u0.coeffs();
    let step = |duh: &[Vec<f64>]| -> Vec<Vec<f64>> {
        duh.iter()
            .enumerate()
            .map(|(i, d)| (0..c0.len()).map(|j| e.kernel[j][i] * c0[j] + d[j]).collect())
            .collect()
    };
    let zero = vec![vec![0.0; c0.len()]; e.n_t()];
    let start = step(&zero);
    let (u, iterations, ratios, residual) = e.iterate(start, opts, step)?;
    let mut manifest = KeyValues::new();
    manifest.set("solver", "forward");
    manifest.set("alpha", fmt_f64(spec.alpha));
    manifest.set("T", fmt_f64(spec.horizon));
    manifest.set("n_t", e.n_t());
    manifest.set("dim", u0.dim());
    manifest.set("lipschitz", fmt_f64(spec.lipschitz));
    let warnings = contraction_warnings(e.alpha, spec.horizon, spec.lipschitz, &mut manifest)?;
    manifest.set("iterations", iterations);
    manifest.set("residual", fmt_f64(residual));
    Ok(SolveResult { times: e.times.clone(), trajectory: e.fields(u)?, iterations, contraction_ratios: ratios, residual, warnings, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_integrate_cubics_exactly() {
        let h = 0.1;
        let w = cumulative_weights(12, h);
        for (i, row) in w.iter().enumerate().skip(2) {
            let t = i as f64 * h;
            let got: f64 = row.iter().enumerate().map(|(k, w)| w * (k as f64 * h).powi(3)).sum();
            assert!((got - t.powi(4) / 4.0).abs() < 1e-14, "i = {i}");
        }
        let got: f64 = w[1].iter().enumerate().map(|(k, w)| w * (k as f64 * h)).sum();
        assert!((got - h * h / 2.0).abs() < 1e-16);
    }
}

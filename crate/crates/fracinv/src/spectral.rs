//! Sine eigenbasis of the Dirichlet Laplacian on `Ω = (0, π)^d`.
//!
//! Eigenpairs are `λ_j = Σ j_i²` and `ξ_j(x) = (2/π)^{d/2} Π sin(j_i x_i)`.
//! A [`SpectralField`] stores coefficients on an explicit finite [`ModeSet`];
//! tensor-grid data is laid out row-major with axis 0 slowest.

use crate::artifact::{fmt_f64, write_atomic};
use crate::error::{Error, Result};
use std::collections::HashMap;
use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

/// Multi-index `j ∈ ℕ^d` of one sine mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex(Vec<u32>);

impl ModeIndex {
    pub fn new(j: Vec<u32>) -> Result<Self> {
        if j.is_empty() || j.contains(&0) {
            return Err(Error::Domain(format!("mode index {j:?} must be non-empty with components >= 1")));
        }
        Ok(Self(j))
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|j|² = Σ j_i²`.
    pub fn eigenvalue(&self) -> f64 {
        self.0.iter().map(|&c| (c as f64) * (c as f64)).sum()
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Eigenvalue of the negative Laplacian for mode `j`.
pub fn eigenvalue(j: &ModeIndex) -> f64 {
    j.eigenvalue()
}

/// One-dimensional normalised sine `√(2/π) sin(j x)`.
pub fn basis_1d(j: u32, x: f64) -> f64 {
    FRAC_2_PI.sqrt() * (j as f64 * x).sin()
}

/// `ξ_j(x)`.
pub fn eigenfunction_eval(j: &ModeIndex, x: &[f64]) -> f64 {
    debug_assert_eq!(j.dim(), x.len());
    j.0.iter().zip(x).map(|(&c, &xi)| basis_1d(c, xi)).product()
}

/// How a mode set was built.
#[derive(Debug, Clone, PartialEq)]
pub enum ModeShape {
    /// `1 ≤ j_i ≤ N_i` for each axis.
    Rect(Vec<u32>),
    /// `|j|² ≤ γ`.
    Ball(f64),
    Explicit,
}

/// Finite, ordered set of modes of one dimension.
#[derive(Debug, Clone)]
pub struct ModeSet {
    dim: usize,
    shape: ModeShape,
    modes: Vec<ModeIndex>,
    lambdas: Vec<f64>,
    index: HashMap<ModeIndex, usize>,
    max_per_axis: Vec<u32>,
}

impl PartialEq for ModeSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.modes == other.modes
    }
}

impl ModeSet {
    fn build(dim: usize, shape: ModeShape, modes: Vec<ModeIndex>) -> Self {
        let lambdas = modes.iter().map(|m| m.eigenvalue()).collect();
        let index = modes.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        let mut max_per_axis = vec![0u32; dim];
        for m in &modes {
            for (a, &c) in max_per_axis.iter_mut().zip(m.components()) {
                *a = (*a).max(c);
            }
        }
        Self { dim, shape, modes, lambdas, index, max_per_axis }
    }

    /// All `j` with `1 ≤ j_i ≤ n[i]`, last axis fastest.
    pub fn rect(n: &[u32]) -> Result<Self> {
        if n.is_empty() || n.contains(&0) {
            return Err(Error::Shape(format!("rectangle cutoffs {n:?} must be positive")));
        }
        let mut modes = Vec::new();
        let mut cur = vec![1u32; n.len()];
        loop {
            modes.push(ModeIndex(cur.clone()));
            let mut ax = n.len();
            loop {
                if ax == 0 {
                    return Ok(Self::build(n.len(), ModeShape::Rect(n.to_vec()), modes));
                }
                ax -= 1;
                if cur[ax] < n[ax] {
                    cur[ax] += 1;
                    break;
                }
                cur[ax] = 1;
            }
        }
    }

    /// All `j ∈ ℕ^dim` with `|j|² ≤ gamma`, in lexicographic order; empty when
    /// `gamma < dim`.
    pub fn ball(dim: usize, gamma: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("dimension must be positive".into()));
        }
        let mut modes = Vec::new();
        if gamma >= dim as f64 {
            let jmax = (gamma - (dim as f64 - 1.0)).sqrt().floor() as u32;
            let mut cur = vec![1u32; dim];
            fill_ball(&mut cur, 0, gamma, jmax, &mut modes);
        }
        Ok(Self::build(dim, ModeShape::Ball(gamma), modes))
    }

    pub fn explicit(dim: usize, modes: Vec<ModeIndex>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("dimension must be positive".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for m in &modes {
            if m.dim() != dim {
                return Err(Error::Shape(format!("mode {m} has dimension {} instead of {dim}", m.dim())));
            }
            if !seen.insert(m.clone()) {
                return Err(Error::Shape(format!("mode {m} listed twice")));
            }
        }
        Ok(Self::build(dim, ModeShape::Explicit, modes))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &ModeShape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn position(&self, j: &ModeIndex) -> Option<usize> {
        self.index.get(j).copied()
    }

    pub fn contains(&self, j: &ModeIndex) -> bool {
        self.index.contains_key(j)
    }

    /// Largest component per axis (0 for an empty set).
    pub fn max_per_axis(&self) -> &[u32] {
        &self.max_per_axis
    }

    /// Largest eigenvalue in the set (0 for an empty set).
    pub fn max_eigenvalue(&self) -> f64 {
        self.lambdas.iter().copied().fold(0.0, f64::max)
    }

    /// Row-major offsets of every mode inside the dense box `Π [1, max_i]`.
    fn dense_offsets(&self) -> Vec<usize> {
        let dims: Vec<usize> = self.max_per_axis.iter().map(|&m| m as usize).collect();
        self.modes
            .iter()
            .map(|m| {
                let mut off = 0usize;
                for (&c, &n) in m.components().iter().zip(&dims) {
                    off = off * n + (c as usize - 1);
                }
                off
            })
            .collect()
    }
}

fn fill_ball(cur: &mut Vec<u32>, ax: usize, gamma: f64, jmax: u32, out: &mut Vec<ModeIndex>) {
    let dim = cur.len();
    let used: f64 = cur[..ax].iter().map(|&c| (c as f64).powi(2)).sum();
    // remaining axes need at least 1 each
    let rest = (dim - ax - 1) as f64;
    for c in 1..=jmax {
        let v = used + (c as f64).powi(2);
        if v + rest > gamma {
            break;
        }
        cur[ax] = c;
        if ax + 1 == dim {
            out.push(ModeIndex(cur.clone()));
        } else {
            fill_ball(cur, ax + 1, gamma, jmax, out);
        }
    }
    cur[ax] = 1;
}

/// Real coefficients on a shared mode set.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    modes: Arc<ModeSet>,
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(modes: Arc<ModeSet>) -> Self {
        let n = modes.len();
        Self { modes, coeffs: vec![0.0; n] }
    }

    pub fn from_coeffs(modes: Arc<ModeSet>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != modes.len() {
            return Err(Error::Shape(format!("{} coefficients for {} modes", coeffs.len(), modes.len())));
        }
        Ok(Self { modes, coeffs })
    }

    /// Field with a single mode `j` of value `c` (a one-element explicit set).
    pub fn single(j: ModeIndex, c: f64) -> Self {
        let dim = j.dim();
        let modes = Arc::new(ModeSet::explicit(dim, vec![j]).expect("single mode"));
        Self { modes, coeffs: vec![c] }
    }

    pub fn modes(&self) -> &Arc<ModeSet> {
        &self.modes
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.modes.dim()
    }

    /// Coefficient of `j`, zero when `j` is outside the mode set.
    pub fn get(&self, j: &ModeIndex) -> f64 {
        self.modes.position(j).map_or(0.0, |i| self.coeffs[i])
    }

    pub fn set(&mut self, j: &ModeIndex, value: f64) -> Result<()> {
        let i = self.modes.position(j).ok_or_else(|| Error::Shape(format!("mode {j} not in the mode set")))?;
        self.coeffs[i] = value;
        Ok(())
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn sobolev_norm(&self, sigma: f64) -> f64 {
        sobolev_norm(self, sigma)
    }

    /// Coefficients on another mode set: shared modes copied, others zero.
    pub fn restrict_to(&self, modes: &Arc<ModeSet>) -> SpectralField {
        if Arc::ptr_eq(modes, &self.modes) || **modes == *self.modes {
            return Self { modes: modes.clone(), coeffs: self.coeffs.clone() };
        }
        let coeffs = modes.modes().iter().map(|j| self.get(j)).collect();
        Self { modes: modes.clone(), coeffs }
    }

    /// `H^σ` norm of `self - other` over the union of both mode sets.
    pub fn distance(&self, other: &SpectralField, sigma: f64) -> f64 {
        let mut acc = 0.0;
        for (j, (&c, &lam)) in self.modes.modes().iter().zip(self.coeffs.iter().zip(self.modes.eigenvalues())) {
            let d = c - other.get(j);
            acc += lam.powf(sigma) * d * d;
        }
        for (j, (&c, &lam)) in other.modes.modes().iter().zip(other.coeffs.iter().zip(other.modes.eigenvalues())) {
            if !self.modes.contains(j) {
                acc += lam.powf(sigma) * c * c;
            }
        }
        acc.sqrt()
    }

    pub fn scaled(&self, s: f64) -> SpectralField {
        Self { modes: self.modes.clone(), coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    /// Dense coefficient box `Π [1, max_i]` (row-major) and its dimensions.
    fn dense(&self) -> (Vec<f64>, Vec<usize>) {
        let dims: Vec<usize> = self.modes.max_per_axis().iter().map(|&m| m as usize).collect();
        let mut data = vec![0.0; dims.iter().product()];
        for (off, &c) in self.modes.dense_offsets().into_iter().zip(&self.coeffs) {
            data[off] = c;
        }
        (data, dims)
    }

    /// Writes the CSV form (`j_1..j_d,coeff` with header).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut s = String::new();
        for i in 1..=d {
            s.push_str(&format!("j_{i},"));
        }
        s.push_str("coeff\n");
        for (j, &c) in self.modes.modes().iter().zip(&self.coeffs) {
            for comp in j.components() {
                s.push_str(&comp.to_string());
                s.push(',');
            }
            s.push_str(&fmt_f64(c));
            s.push('\n');
        }
        s
    }

    /// Reads the CSV form back; the mode set is explicit in file order.
    pub fn read_csv(path: &Path) -> Result<SpectralField> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn parse_csv(text: &str, source_name: &str) -> Result<SpectralField> {
        let perr = |line: usize, message: String| Error::Parse { source_name: source_name.to_string(), line, message };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
        let d = header.len().saturating_sub(1);
        let header_ok = d >= 1
            && header.iter().take(d).enumerate().all(|(i, h)| h == format!("j_{}", i + 1))
            && &header[d] == "coeff";
        if !header_ok {
            return Err(perr(1, format!("header must be j_1..j_d,coeff, found {:?}", header)));
        }
        let mut modes = Vec::new();
        let mut coeffs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| perr(i + 2, e.to_string()))?;
            let j: Vec<u32> = (0..d)
                .map(|a| rec[a].parse::<u32>().map_err(|e| perr(i + 2, e.to_string())))
                .collect::<Result<_>>()?;
            modes.push(ModeIndex::new(j).map_err(|e| perr(i + 2, e.to_string()))?);
            coeffs.push(rec[d].parse::<f64>().map_err(|e| perr(i + 2, e.to_string()))?);
        }
        let set = ModeSet::explicit(d, modes).map_err(|e| perr(0, e.to_string()))?;
        SpectralField::from_coeffs(Arc::new(set), coeffs)
    }
}

/// `sqrt(Σ λ_j^σ c_j²)`.
pub fn sobolev_norm(u: &SpectralField, sigma: f64) -> f64 {
    u.coeffs
        .iter()
        .zip(u.modes.eigenvalues())
        .map(|(c, l)| l.powf(sigma) * c * c)
        .sum::<f64>()
        .sqrt()
}

/// `Σ_j c_j ξ_j(x)`.
pub fn synthesize(u: &SpectralField, x: &[f64]) -> f64 {
    u.modes.modes().iter().zip(&u.coeffs).map(|(j, &c)| c * eigenfunction_eval(j, x)).sum()
}

/// One-dimensional composite Simpson rule on `[0, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn simpson(n_nodes: usize) -> Result<Self> {
        if n_nodes < 3 || n_nodes % 2 == 0 {
            return Err(Error::Resolution(format!("Simpson rule needs an odd node count >= 3, got {n_nodes}")));
        }
        let h = PI / (n_nodes - 1) as f64;
        let nodes = (0..n_nodes).map(|i| i as f64 * h).collect();
        let weights = (0..n_nodes)
            .map(|i| {
                let c = if i == 0 || i == n_nodes - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * h / 3.0
            })
            .collect();
        Ok(Self { nodes, weights })
    }

    /// Default resolution: 401 nodes per axis for `d ≤ 2`, 101 for `d ≥ 3`.
    pub fn default_for_dim(dim: usize) -> Self {
        Self::simpson(default_nodes(dim)).expect("odd default")
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check_resolution(&self, modes: &ModeSet) -> Result<()> {
        let need = 2 * modes.max_per_axis().iter().copied().max().unwrap_or(0) as usize + 1;
        if self.n_nodes() < need {
            return Err(Error::Resolution(format!(
                "{} nodes per axis cannot resolve modes up to {} (need {need})",
                self.n_nodes(),
                (need - 1) / 2
            )));
        }
        Ok(())
    }
}

pub fn default_nodes(dim: usize) -> usize {
    if dim <= 2 {
        401
    } else {
        101
    }
}

/// Contracts axis `ax` of a row-major tensor with the `rows × shape[ax]`
/// matrix `mat`; returns the new tensor with `shape[ax]` replaced by `rows`.
pub(crate) fn contract_axis(data: &[f64], shape: &[usize], ax: usize, mat: &[f64], rows: usize) -> (Vec<f64>, Vec<usize>) {
    let cols = shape[ax];
    debug_assert_eq!(mat.len(), rows * cols);
    let outer: usize = shape[..ax].iter().product();
    let inner: usize = shape[ax + 1..].iter().product();
    let mut out = vec![0.0; outer * rows * inner];
    let block_in = cols * inner;
    let block_out = rows * inner;
    crate::par::for_each_chunk_mut(&mut out, block_out.max(1), |o, dst| {
        let src = &data[o * block_in..(o + 1) * block_in];
        for r in 0..rows {
            let d = &mut dst[r * inner..(r + 1) * inner];
            for c in 0..cols {
                let w = mat[r * cols + c];
                if w == 0.0 {
                    continue;
                }
                let s = &src[c * inner..(c + 1) * inner];
                for (di, si) in d.iter_mut().zip(s) {
                    *di += w * si;
                }
            }
        }
    });
    let mut new_shape = shape.to_vec();
    new_shape[ax] = rows;
    (out, new_shape)
}

/// Values of `f` on the tensor grid `nodes^d` (row-major).
pub(crate) fn tabulate<F>(f: &F, axes: &[&[f64]]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let shape: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let total: usize = shape.iter().product();
    let first = shape[0];
    let inner = total / first.max(1);
    let mut out = vec![0.0; total];
    crate::par::for_each_chunk_mut(&mut out, inner.max(1), |i0, dst| {
        let mut x = vec![0.0; axes.len()];
        let mut idx = vec![0usize; axes.len()];
        idx[0] = i0;
        for v in dst.iter_mut() {
            for (a, &k) in idx.iter().enumerate() {
                x[a] = axes[a][k];
            }
            *v = f(&x);
            for a in (1..axes.len()).rev() {
                idx[a] += 1;
                if idx[a] < axes[a].len() {
                    break;
                }
                idx[a] = 0;
            }
        }
    });
    out
}

/// Per-axis basis matrices `rows = j = 1..jmax`, `cols = points`, each entry
/// `scale · √(2/π) sin(j x_k) · w_k`.
fn analysis_matrix(jmax: usize, points: &[f64], weights: Option<&[f64]>, scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; jmax * points.len()];
    for j in 0..jmax {
        for (k, &x) in points.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[k]);
            m[j * points.len() + k] = scale * basis_1d(j as u32 + 1, x) * w;
        }
    }
    m
}

/// Coefficients `Σ_k weight_k · value_k · ξ_j(x_k)` for every mode of `modes`,
/// where the weights factor per axis. Shared by quadrature projection and the
/// discrete estimators.
pub(crate) fn analyse(values: &[f64], axes: &[&[f64]], axis_weights: &[Option<&[f64]>], axis_scale: &[f64], modes: &Arc<ModeSet>) -> SpectralField {
    if modes.is_empty() {
        return SpectralField::zeros(modes.clone());
    }
    let mut data = values.to_vec();
    let mut shape: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    for ax in (0..axes.len()).rev() {
        let jmax = modes.max_per_axis()[ax] as usize;
        let mat = analysis_matrix(jmax, axes[ax], axis_weights[ax], axis_scale[ax]);
        let (d, s) = contract_axis(&data, &shape, ax, &mat, jmax);
        data = d;
        shape = s;
    }
    let coeffs = modes.dense_offsets().into_iter().map(|o| data[o]).collect();
    SpectralField { modes: modes.clone(), coeffs }
}

/// `⟨f, ξ_j⟩` by tensor Simpson quadrature for every mode of `modes`.
pub fn project<F>(f: F, modes: Arc<ModeSet>, rule: &QuadratureRule) -> Result<SpectralField>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    rule.check_resolution(&modes)?;
    let d = modes.dim();
    let axes: Vec<&[f64]> = vec![rule.nodes(); d];
    let values = tabulate(&f, &axes);
    project_values(&values, modes, rule)
}

/// Projection of values already tabulated on the tensor Simpson grid.
pub fn project_values(values: &[f64], modes: Arc<ModeSet>, rule: &QuadratureRule) -> Result<SpectralField> {
    rule.check_resolution(&modes)?;
    let d = modes.dim();
    let expect = rule.n_nodes().pow(d as u32);
    if values.len() != expect {
        return Err(Error::Shape(format!("{} grid values for {expect} nodes", values.len())));
    }
    let axes: Vec<&[f64]> = vec![rule.nodes(); d];
    let weights: Vec<Option<&[f64]>> = vec![Some(rule.weights()); d];
    Ok(analyse(values, &axes, &weights, &vec![1.0; d], &modes))
}

/// Values of `u` on the tensor grid `axes[0] × … × axes[d-1]` (row-major).
pub fn synthesize_on_grid(u: &SpectralField, axes: &[&[f64]]) -> Result<Vec<f64>> {
    if axes.len() != u.dim() {
        return Err(Error::Shape(format!("{} axes for a {}-dimensional field", axes.len(), u.dim())));
    }
    let total: usize = axes.iter().map(|a| a.len()).product();
    if u.modes.is_empty() {
        return Ok(vec![0.0; total]);
    }
    let (mut data, mut shape) = u.dense();
    for ax in 0..axes.len() {
        let jmax = shape[ax];
        let pts = axes[ax];
        // rows = points, cols = modes
        let mut mat = vec![0.0; pts.len() * jmax];
        for (k, &x) in pts.iter().enumerate() {
            for j in 0..jmax {
                mat[k * jmax + j] = basis_1d(j as u32 + 1, x);
            }
        }
        let (d, s) = contract_axis(&data, &shape, ax, &mat, pts.len());
        data = d;
        shape = s;
    }
    Ok(data)
}

//! Source terms `f(t, x, u)`.

use crate::mlf::gamma;
use crate::spectral::{ModeIndex, ModeSet};
use std::f64::consts::FRAC_PI_2;
use std::fmt;

/// Right-hand side of the governing equation.
///
/// A source whose dependence on `u` is affine, `f = h(t, x) + c·u`, reports
/// `c` through [`Source::affine_coefficient`]; the solver then works with
/// `f_j = h_j + c·u_j` directly and projects `h` only once.
pub trait Source: Send + Sync + fmt::Debug {
    fn eval(&self, t: f64, x: &[f64], u: f64) -> f64;

    fn affine_coefficient(&self) -> Option<f64> {
        None
    }

    fn is_zero(&self) -> bool {
        false
    }

    /// Exact coefficients of `h(t, ·)` on `modes`, when known in closed form.
    fn affine_part_coefficients(&self, _t: f64, _modes: &ModeSet) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroSource;

impl Source for ZeroSource {
    fn eval(&self, _t: f64, _x: &[f64], _u: f64) -> f64 {
        0.0
    }

    fn affine_coefficient(&self) -> Option<f64> {
        Some(0.0)
    }

    fn is_zero(&self) -> bool {
        true
    }

    fn affine_part_coefficients(&self, _t: f64, modes: &ModeSet) -> Option<Vec<f64>> {
        Some(vec![0.0; modes.len()])
    }
}

/// `f = c·u`.
#[derive(Debug, Clone, Copy)]
pub struct LinearSource(pub f64);

impl Source for LinearSource {
    fn eval(&self, _t: f64, _x: &[f64], u: f64) -> f64 {
        self.0 * u
    }

    fn affine_coefficient(&self) -> Option<f64> {
        Some(self.0)
    }

    fn is_zero(&self) -> bool {
        self.0 == 0.0
    }

    fn affine_part_coefficients(&self, _t: f64, modes: &ModeSet) -> Option<Vec<f64>> {
        Some(vec![0.0; modes.len()])
    }
}

/// Source making `u(t, x) = t Π sin x_i` an exact solution:
/// `f = Π sin x_i (1 + d t^α / Γ(1+α)) + κ (u - t Π sin x_i)`.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedSource {
    pub dim: usize,
    pub alpha: f64,
    /// Lipschitz coupling `κ`; zero gives a source independent of `u`.
    pub coupling: f64,
}

impl ManufacturedSource {
    pub fn new(dim: usize, alpha: f64, coupling: f64) -> Self {
        Self { dim, alpha, coupling }
    }

    /// Time factor of the `u`-independent part.
    fn time_factor(&self, t: f64) -> f64 {
        1.0 + self.dim as f64 * t.powf(self.alpha) / gamma(1.0 + self.alpha) - self.coupling * t
    }
}

/// `t Π sin x_i`.
pub fn manufactured_exact(t: f64, x: &[f64]) -> f64 {
    t * x.iter().map(|v| v.sin()).product::<f64>()
}

/// Coefficient of `Π sin x_i` on the mode `(1, …, 1)`: `(π/2)^{d/2}`.
pub fn sine_product_coefficient(dim: usize) -> f64 {
    FRAC_PI_2.powf(dim as f64 / 2.0)
}

impl Source for ManufacturedSource {
    fn eval(&self, t: f64, x: &[f64], u: f64) -> f64 {
        let s: f64 = x.iter().map(|v| v.sin()).product();
        s * self.time_factor(t) + self.coupling * u
    }

    fn affine_coefficient(&self) -> Option<f64> {
        Some(self.coupling)
    }

    fn affine_part_coefficients(&self, t: f64, modes: &ModeSet) -> Option<Vec<f64>> {
        let ones = ModeIndex::new(vec![1; self.dim]).ok()?;
        let mut out = vec![0.0; modes.len()];
        if let Some(i) = modes.position(&ones) {
            out[i] = sine_product_coefficient(self.dim) * self.time_factor(t);
        }
        Some(out)
    }
}

/// Arbitrary pointwise source given by a closure.
pub struct FnSource<F> {
    f: F,
    affine: Option<f64>,
}

impl<F> FnSource<F>
where
    F: Fn(f64, &[f64], f64) -> f64 + Send + Sync,
{
    /// General, possibly nonlinear source.
    pub fn new(f: F) -> Self {
        Self { f, affine: None }
    }

    /// Declares `f(t, x, u) = f(t, x, 0) + c·u`.
    pub fn affine(f: F, c: f64) -> Self {
        Self { f, affine: Some(c) }
    }
}

impl<F> fmt::Debug for FnSource<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnSource").field("affine", &self.affine).finish_non_exhaustive()
    }
}

impl<F> Source for FnSource<F>
where
    F: Fn(f64, &[f64], f64) -> f64 + Send + Sync,
{
    fn eval(&self, t: f64, x: &[f64], u: f64) -> f64 {
        (self.f)(t, x, u)
    }

    fn affine_coefficient(&self) -> Option<f64> {
        self.affine
    }
}

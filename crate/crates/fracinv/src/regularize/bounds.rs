//! Explicit right-hand sides of the error estimates, as mean-squared bounds.

use super::contraction_constant;
use crate::error::{Error, Result};
use crate::mlf::EnvelopeConstants;
use crate::observe::{constant_c0, BallSmoothness};
use std::f64::consts::PI;

/// Problem constants entering every bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundContext {
    pub alpha: f64,
    pub horizon: f64,
    pub lipschitz: f64,
    /// Envelope of `E_{α,1}`.
    pub envelope: EnvelopeConstants,
}

impl BoundContext {
    pub fn contraction_constant(&self) -> f64 {
        contraction_constant(self.alpha, self.horizon, &self.envelope)
    }

    /// `1 - K²Q²`, or `Unsupported` when `K·Q ≥ 1`.
    fn contraction_gap(&self) -> Result<f64> {
        let kq = self.lipschitz * self.contraction_constant();
        if kq >= 1.0 {
            return Err(Error::Unsupported(format!("K*Q = {kq} >= 1; no error bound")));
        }
        Ok(1.0 - kq * kq)
    }
}

/// Method and schedule whose bound is requested. Norm arguments are the
/// norms themselves, not their squares.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundMethod {
    /// Rectangle truncation with cutoffs `N_i < n_i` and smoothness `θ > 2`.
    TruncationRect {
        n: Vec<usize>,
        cutoff: Vec<u32>,
        eps_max: f64,
        theta: f64,
        phi_norm_theta: f64,
        /// `sup_t ‖u(t)‖_{H^θ}`.
        u_norm_theta: f64,
    },
    /// Quasi-boundary filter with ball estimator, `L²` error.
    QuasiBoundaryL2 {
        n: Vec<usize>,
        eps_max: f64,
        gamma: f64,
        theta_reg: f64,
        smoothness: BallSmoothness,
        phi_norm_mu_circ: f64,
        u0_norm_h1: f64,
    },
    /// Quasi-boundary filter with ball estimator, `H^σ` error.
    QuasiBoundaryHSigma {
        n: Vec<usize>,
        eps_max: f64,
        gamma: f64,
        theta_reg: f64,
        sigma: f64,
        smoothness: BallSmoothness,
        phi_norm_mu_circ: f64,
        phi_norm_sigma_mu_circ: f64,
        u0_norm_sigma_1: f64,
    },
    /// General filter with constants `C†`, `C‡`, `q`, `H^σ` error.
    GeneralFilter {
        n: Vec<usize>,
        eps_max: f64,
        gamma: f64,
        sigma: f64,
        smoothness: BallSmoothness,
        c_dagger: f64,
        c_ddagger: f64,
        q: f64,
        phi_norm_mu_circ: f64,
        phi_norm_sigma_mu_circ: f64,
        u0_norm_sigma_2q: f64,
    },
}

fn check_ball(n: &[usize], gamma: f64, s: &BallSmoothness) -> Result<()> {
    if n.len() != s.dim() {
        return Err(Error::Shape(format!("{} grid sizes for {} smoothness indices", n.len(), s.dim())));
    }
    if gamma < n.len() as f64 {
        return Err(Error::Unsupported(format!("gamma = {gamma} leaves the spectral ball empty")));
    }
    Ok(())
}

/// `C̄ γ^{σ+d/2} Π n^{-4μ} + 4γ^{-μ°}‖φ‖²_{σ+μ°}`.
fn ball_term(eps_max: f64, n: &[usize], gamma: f64, sigma: f64, s: &BallSmoothness, phi_mu: f64, phi_sigma_mu: f64) -> Result<f64> {
    check_ball(n, gamma, s)?;
    let d = n.len() as f64;
    let grid: f64 = n.iter().zip(&s.mu).map(|(&ni, &m)| (ni as f64).powf(-4.0 * m)).product();
    Ok(s.c_bar(eps_max, phi_mu)? * gamma.powf(sigma + d / 2.0) * grid + 4.0 * gamma.powf(-s.mu_circ) * phi_sigma_mu.powi(2))
}

/// Mean-squared error bound of `method`: `sup_t E‖ũ(t) - u(t)‖²` in `L²`
/// (or `H^σ`).
pub fn theoretical_bound(ctx: &BoundContext, method: &BoundMethod) -> Result<f64> {
    let gap = ctx.contraction_gap()?;
    let (m1, m2) = (ctx.envelope.m1, ctx.envelope.m2);
    match method {
        BoundMethod::TruncationRect { n, cutoff, eps_max, theta, phi_norm_theta, u_norm_theta } => {
            if n.len() != cutoff.len() || n.is_empty() {
                return Err(Error::Shape(format!("{} grid sizes for {} cutoffs", n.len(), cutoff.len())));
            }
            if cutoff.iter().zip(n).any(|(&c, &m)| c == 0 || c as usize >= m) {
                return Err(Error::Unsupported(format!("cutoffs {cutoff:?} must lie in [1, n_i) for n = {n:?}")));
            }
            let c0 = constant_c0(*theta)?;
            let lambda_n: f64 = cutoff.iter().map(|&c| (c as f64).powi(2)).sum();
            let amp = m2 * (1.0 + lambda_n * ctx.horizon.powf(ctx.alpha)) / m1;
            let ratio: f64 = cutoff.iter().zip(n).map(|(&c, &m)| c as f64 / m as f64).product();
            let variance = 4.0 * amp * amp * (PI * PI * eps_max * eps_max + c0 * c0 * phi_norm_theta.powi(2)) * ratio;
            let tail: f64 = cutoff.iter().map(|&c| (c as f64 + 1.0).powf(-2.0 * theta)).sum();
            Ok(2.0 * (variance + 2.0 * tail * u_norm_theta.powi(2)) / gap)
        }
        BoundMethod::QuasiBoundaryL2 { n, eps_max, gamma, theta_reg, smoothness, phi_norm_mu_circ, u0_norm_h1 } => {
            if !(*theta_reg > 0.0) {
                return Err(Error::Unsupported(format!("QBV parameter {theta_reg} must be positive")));
            }
            let data = ball_term(*eps_max, n, *gamma, 0.0, smoothness, *phi_norm_mu_circ, *phi_norm_mu_circ)?;
            let bias = theta_reg * m2 * m2 / (2.0 * m1) * (1.0 + ctx.horizon.powf(ctx.alpha)) * u0_norm_h1.powi(2);
            Ok((4.0 * m2 * m2 / theta_reg.powi(2) * data + bias) / gap)
        }
        BoundMethod::QuasiBoundaryHSigma {
            n,
            eps_max,
            gamma,
            theta_reg,
            sigma,
            smoothness,
            phi_norm_mu_circ,
            phi_norm_sigma_mu_circ,
            u0_norm_sigma_1,
        } => {
            if !(*theta_reg > 0.0) {
                return Err(Error::Unsupported(format!("QBV parameter {theta_reg} must be positive")));
            }
            let data = ball_term(*eps_max, n, *gamma, *sigma, smoothness, *phi_norm_mu_circ, *phi_norm_sigma_mu_circ)?;
            let bias = theta_reg * m2 * m2 / (2.0 * m1) * (1.0 + ctx.horizon.powf(ctx.alpha)) * u0_norm_sigma_1.powi(2);
            Ok((4.0 * m2 * m2 / theta_reg.powi(2) * data + bias) / gap)
        }
        BoundMethod::GeneralFilter {
            n,
            eps_max,
            gamma,
            sigma,
            smoothness,
            c_dagger,
            c_ddagger,
            q,
            phi_norm_mu_circ,
            phi_norm_sigma_mu_circ,
            u0_norm_sigma_2q,
        } => {
            if !(*c_dagger > 0.0 && *c_ddagger > 0.0 && *q > 0.0) {
                return Err(Error::Unsupported("filter constants must be positive".into()));
            }
            let data = ball_term(*eps_max, n, *gamma, *sigma, smoothness, *phi_norm_mu_circ, *phi_norm_sigma_mu_circ)?;
            Ok((4.0 * c_dagger * c_dagger * data + (m2 * c_ddagger * u0_norm_sigma_2q).powi(2)) / gap)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularize::envelope_beta_one;

    fn ctx(alpha: f64, k: f64) -> BoundContext {
        BoundContext { alpha, horizon: 1.0, lipschitz: k, envelope: envelope_beta_one(alpha).unwrap() }
    }

    fn trunc(n: usize, cutoff: u32) -> BoundMethod {
        BoundMethod::TruncationRect {
            n: vec![n],
            cutoff: vec![cutoff],
            eps_max: 0.01,
            theta: 3.0,
            phi_norm_theta: 1.0,
            u_norm_theta: 1.0,
        }
    }

    #[test]
    fn truncation_bias_dominates_for_large_grids() {
        let c = ctx(0.3, 0.0);
        let b = theoretical_bound(&c, &trunc(1_000_000_000, 1)).unwrap();
        // 2·(2·2^{-6})·‖u‖² is the residual floor
        assert!((b - 4.0 * 2f64.powi(-6)).abs() / b < 1e-3, "{b}");
        let b25 = theoretical_bound(&c, &trunc(25, 3)).unwrap();
        let b50 = theoretical_bound(&c, &trunc(50, 3)).unwrap();
        assert!(b50 < b25);
    }

    #[test]
    fn rejected_hypotheses() {
        assert!(matches!(theoretical_bound(&ctx(0.3, 10.0), &trunc(50, 3)), Err(Error::Unsupported(_))));
        assert!(matches!(theoretical_bound(&ctx(0.3, 0.0), &trunc(3, 3)), Err(Error::Unsupported(_))));
        let qbv = BoundMethod::QuasiBoundaryL2 {
            n: vec![50],
            eps_max: 0.01,
            gamma: 4.0,
            theta_reg: 0.0,
            smoothness: BallSmoothness::default_for_dim(1),
            phi_norm_mu_circ: 1.0,
            u0_norm_h1: 1.0,
        };
        assert!(matches!(theoretical_bound(&ctx(0.3, 0.0), &qbv), Err(Error::Unsupported(_))));
    }

    #[test]
    fn qbv_bound_decreases_with_default_schedule() {
        let s = BallSmoothness::default_for_dim(1);
        let c = ctx(0.3, 0.0);
        let mut last = f64::INFINITY;
        for n in [1usize << 10, 1 << 14, 1 << 18] {
            let gamma = (n as f64).powf(1.0 / (s.mu_circ + 1.0));
            let theta_reg = gamma.powf(-s.mu_circ / 3.0);
            let m = BoundMethod::QuasiBoundaryL2 {
                n: vec![n],
                eps_max: 0.01,
                gamma,
                theta_reg,
                smoothness: s.clone(),
                phi_norm_mu_circ: 1.0,
                u0_norm_h1: 1.0,
            };
            let b = theoretical_bound(&c, &m).unwrap();
            assert!(b < last);
            last = b;
        }
    }
}

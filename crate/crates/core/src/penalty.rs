//! Minimax concave penalty and the proximal step for the pairwise fusion
//! variables.

use crate::error::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 3.0;
pub const DEFAULT_ETA: f64 = 1.0;

/// Fusion strength λ, MCP concavity γ and ADMM augmentation η.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl PenaltyConfig {
    pub fn new(lambda: f64, gamma: f64, eta: f64) -> Result<Self> {
        let cfg = PenaltyConfig { lambda, gamma, eta };
        cfg.check()?;
        Ok(cfg)
    }

    /// γ = 3, η = 1.
    pub fn with_lambda(lambda: f64) -> Result<Self> {
        Self::new(lambda, DEFAULT_GAMMA, DEFAULT_ETA)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.gamma > 1.0 && self.gamma * self.eta > 1.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma must exceed max(1, 1/eta), got gamma = {}, eta = {}",
                self.gamma, self.eta
            )));
        }
        Ok(())
    }

    pub fn at_lambda(&self, lambda: f64) -> Self {
        PenaltyConfig { lambda, ..*self }
    }
}

/// p_γ(t, λ) = λ∫₀ᵗ (1 − x/(γλ))₊ dx for t ≥ 0.
pub fn mcp_value(t: f64, cfg: &PenaltyConfig) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "MCP argument must be non-negative, got {t}"
        )));
    }
    Ok(mcp(t, cfg.lambda, cfg.gamma))
}

#[inline]
pub(crate) fn mcp(t: f64, lambda: f64, gamma: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else if t <= gamma * lambda {
        lambda * t - t * t / (2.0 * gamma)
    } else {
        0.5 * gamma * lambda * lambda
    }
}

/// d/dt p_γ(t, λ) = (λ − t/γ)₊.
pub fn mcp_derivative(t: f64, cfg: &PenaltyConfig) -> f64 {
    (cfg.lambda - t / cfg.gamma).max(0.0)
}

/// Elementwise sign(x)·max(|x| − τ, 0).
pub fn soft_threshold(x: &[f64], tau: f64) -> Vec<f64> {
    assert!(tau >= 0.0, "threshold must be non-negative");
    x.iter().map(|&v| soft(v, tau)).collect()
}

#[inline]
pub(crate) fn soft(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Scalar MCP threshold rule: soft(δ, λ/η)/(1 − 1/(γη)) when |δ| ≤ γλ,
/// δ otherwise.
pub fn fusion_update_scalar(delta: f64, cfg: &PenaltyConfig) -> f64 {
    if delta.abs() <= cfg.gamma * cfg.lambda {
        soft(delta, cfg.lambda / cfg.eta) / (1.0 - 1.0 / (cfg.gamma * cfg.eta))
    } else {
        delta
    }
}

/// Minimizer of p_γ(‖v‖₁, λ) + (η/2)‖v − δ‖₂².
///
/// In one dimension this is [`fusion_update_scalar`]. In higher dimensions
/// the quadratic part of the MCP couples the coordinates through ‖v‖₁, so the
/// minimizer is found exactly by searching over the common soft-threshold
/// level, on which the objective is piecewise quadratic.
pub fn fusion_update(delta: &[f64], cfg: &PenaltyConfig) -> Vec<f64> {
    let mut out = vec![0.0; delta.len()];
    fusion_update_into(delta, cfg, &mut out);
    out
}

pub(crate) fn fusion_update_into(delta: &[f64], cfg: &PenaltyConfig, out: &mut [f64]) {
    debug_assert_eq!(delta.len(), out.len());
    if delta.len() == 1 {
        out[0] = fusion_update_scalar(delta[0], cfg);
        return;
    }
    let l1: f64 = delta.iter().map(|v| v.abs()).sum();
    if cfg.lambda == 0.0 || l1 == 0.0 {
        out.copy_from_slice(delta);
        return;
    }
    let c = best_threshold(delta, cfg);
    for (o, &d) in out.iter_mut().zip(delta) {
        *o = soft(d, c);
    }
}

/// Objective of the fusion subproblem after thresholding all of δ at `c`.
fn threshold_objective(abs: &[f64], c: f64, cfg: &PenaltyConfig) -> f64 {
    let mut s = 0.0;
    let mut dist = 0.0;
    for &a in abs {
        if a > c {
            s += a - c;
            dist += c * c;
        } else {
            dist += a * a;
        }
    }
    mcp(s, cfg.lambda, cfg.gamma) + 0.5 * cfg.eta * dist
}

fn best_threshold(delta: &[f64], cfg: &PenaltyConfig) -> f64 {
    let mut abs: Vec<f64> = delta.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| b.total_cmp(a));
    let top = abs[0];
    let (lambda, gamma, eta) = (cfg.lambda, cfg.gamma, cfg.eta);
    let knee = gamma * lambda;

    let mut candidates: Vec<f64> = Vec::with_capacity(3 * abs.len() + 1);
    candidates.push(0.0);
    let mut partial = 0.0;
    for k in 1..=abs.len() {
        partial += abs[k - 1];
        let kf = k as f64;
        candidates.push(abs[k - 1]);
        // ‖v‖₁ = S_k − k·c reaches the MCP knee
        candidates.push((partial - knee) / kf);
        // stationary point of the shrinking branch with k active coordinates
        let curvature = eta - kf / gamma;
        if curvature != 0.0 {
            candidates.push((lambda - partial / gamma) / curvature);
        }
    }
    let mut best_c = 0.0;
    let mut best = threshold_objective(&abs, 0.0, cfg);
    for c in candidates {
        let c = c.clamp(0.0, top);
        if !c.is_finite() {
            continue;
        }
        let f = threshold_objective(&abs, c, cfg);
        if f < best {
            best = f;
            best_c = c;
        }
    }
    best_c
}

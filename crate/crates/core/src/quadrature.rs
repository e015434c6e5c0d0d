//! Discrete-ordinate velocity sets.

use crate::basis::GaussRule;
use crate::error::{Error, Result};

/// Ordinates `v_l` with weights `ω_l` for the normalized velocity average
/// `⟨η⟩_h = Σ_l ω_l η(v_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    v_sq_exact: f64,
    v_sq: f64,
    v_inf: f64,
}

impl VelocityQuadrature {
    /// Validates weights and symmetry. `v_sq_exact` is the analytic `⟨v²⟩` of
    /// the continuous model, which the discrete second moment must reproduce.
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>, v_sq_exact: f64) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                found: weights.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        for (i, (&v, &w)) in nodes.iter().zip(&weights).enumerate() {
            let mirrored = nodes
                .iter()
                .zip(&weights)
                .any(|(&u, &wu)| (u + v).abs() < 1e-14 && (wu - w).abs() < 1e-15);
            if !mirrored {
                return Err(Error::InvalidParameter(format!("ordinate {i} has no mirror image")));
            }
        }
        let v_sq: f64 = nodes.iter().zip(&weights).map(|(v, w)| w * v * v).sum();
        if (v_sq - v_sq_exact).abs() > 1e-13 {
            return Err(Error::InvalidParameter(format!(
                "discrete second moment {v_sq} differs from {v_sq_exact}"
            )));
        }
        let v_inf = nodes.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(VelocityQuadrature {
            nodes,
            weights,
            v_sq_exact,
            v_sq,
            v_inf,
        })
    }

    /// One-group slab geometry: 16-point Gauss–Legendre on `[-1, 1]` with the
    /// weights halved, `⟨v²⟩ = 1/3`.
    pub fn slab(points: usize) -> Self {
        let rule = GaussRule::legendre(points);
        let weights = rule.weights.iter().map(|w| 0.5 * w).collect();
        Self::new(rule.nodes, weights, 1.0 / 3.0).expect("Gauss-Legendre ordinates are valid")
    }

    pub fn slab16() -> Self {
        Self::slab(16)
    }

    /// Telegraph model: `v = ±1` with weight 1/2 each, `⟨v²⟩ = 1`.
    pub fn telegraph() -> Self {
        Self::new(vec![-1.0, 1.0], vec![0.5, 0.5], 1.0).expect("telegraph ordinates are valid")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, l: usize) -> f64 {
        self.nodes[l]
    }

    pub fn weight(&self, l: usize) -> f64 {
        self.weights[l]
    }

    /// Analytic `⟨v²⟩`.
    pub fn v_sq_exact(&self) -> f64 {
        self.v_sq_exact
    }

    /// `Σ_l ω_l v_l²`.
    pub fn v_sq(&self) -> f64 {
        self.v_sq
    }

    pub fn v_inf(&self) -> f64 {
        self.v_inf
    }

    /// `⟨η(v)⟩_h`.
    pub fn average(&self, eta: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&v, &w)| w * eta(v)).sum()
    }
}

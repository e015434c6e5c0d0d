//! Close-loop treatment of inflow (Dirichlet) boundaries.

use std::fmt;
use std::sync::Arc;

use crate::basis::left_trace;
use crate::dg_ops::DGOperatorSet;
use crate::error::{Error, Result};
use crate::quadrature::VelocityQuadrature;

pub type KineticFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Incoming distributions `f_L(v, t)` (used for `v ≥ 0`) and `f_R(v, t)`
/// (used for `v < 0`), plus the penalty coefficient `c_R`.
#[derive(Clone)]
pub struct InflowData {
    pub f_left: KineticFn,
    pub f_right: KineticFn,
    pub penalty: f64,
}

impl fmt::Debug for InflowData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InflowData").field("penalty", &self.penalty).finish_non_exhaustive()
    }
}

impl InflowData {
    pub fn new(
        f_left: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        f_right: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        InflowData {
            f_left: Arc::new(f_left),
            f_right: Arc::new(f_right),
            penalty: 1.0,
        }
    }

    /// Isotropic constant inflow on both ends.
    pub fn isotropic(left: f64, right: f64) -> Self {
        Self::new(move |_, _| left, move |_, _| right)
    }

    pub fn with_penalty(mut self, c_r: f64) -> Result<Self> {
        if !(c_r >= 0.0) {
            return Err(Error::InvalidParameter(format!("penalty must be non-negative, got {c_r}")));
        }
        self.penalty = c_r;
        Ok(self)
    }
}

/// Interior traces at the two domain ends: `x_{1/2}⁺` and `x_{N+1/2}⁻`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTraces {
    pub rho_left: f64,
    pub g_left: Vec<f64>,
    pub rho_right: f64,
    pub g_right: Vec<f64>,
}

impl EdgeTraces {
    /// Reads the traces from modal coefficient vectors.
    pub fn from_coeffs(rho: &[f64], g: &[&[f64]], dofs: usize) -> Self {
        let left = |c: &[f64]| (0..dofs).map(|j| c[j] * left_trace(j)).sum::<f64>();
        let right = |c: &[f64]| c[c.len() - dofs..].iter().sum::<f64>();
        EdgeTraces {
            rho_left: left(rho),
            g_left: g.iter().map(|c| left(c)).collect(),
            rho_right: right(rho),
            g_right: g.iter().map(|c| right(c)).collect(),
        }
    }
}

/// `ρ_L, g_L` and `ρ_R, g_R` of the close-loop construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValues {
    pub rho_l: f64,
    pub g_l: Vec<f64>,
    pub rho_r: f64,
    pub g_r: Vec<f64>,
    /// `ρ_h(x_{N+1/2}⁻)` the values were built from.
    pub rho_right_trace: f64,
}

/// Applies the close-loop formulas with the half-range integrals
/// `∫₀¹ · dv` replaced by `2 Σ_{v_l ≥ 0} ω_l ·` (the weights are normalized
/// to total mass 1 while the integrals are over `dv`).
pub fn close_loop_values(
    traces: &EdgeTraces,
    inflow: &InflowData,
    epsilon: f64,
    quad: &VelocityQuadrature,
    t: f64,
) -> Result<BoundaryValues> {
    if quad.nodes().iter().any(|&v| v == 0.0) {
        return Err(Error::InvalidParameter(
            "inflow boundaries need ordinates without v = 0".into(),
        ));
    }
    let nv = quad.len();
    let (mut in_l, mut out_l, mut in_r, mut out_r) = (0.0, 0.0, 0.0, 0.0);
    for l in 0..nv {
        let (v, w) = (quad.node(l), quad.weight(l));
        if v > 0.0 {
            in_l += w * (inflow.f_left)(v, t);
            out_r += w * traces.g_right[l];
        } else {
            out_l += w * traces.g_left[l];
            in_r += w * (inflow.f_right)(v, t);
        }
    }
    let rho_l = 0.5 * (traces.rho_left + 2.0 * in_l + 2.0 * epsilon * out_l);
    let rho_r = 0.5 * (traces.rho_right + 2.0 * in_r + 2.0 * epsilon * out_r);
    let mut g_l = vec![0.0; nv];
    let mut g_r = vec![0.0; nv];
    for l in 0..nv {
        let v = quad.node(l);
        if v > 0.0 {
            g_l[l] = ((inflow.f_left)(v, t) - rho_l) / epsilon;
            g_r[l] = (traces.rho_right + epsilon * traces.g_right[l] - rho_r) / epsilon;
        } else {
            g_l[l] = (traces.rho_left + epsilon * traces.g_left[l] - rho_l) / epsilon;
            g_r[l] = ((inflow.f_right)(v, t) - rho_r) / epsilon;
        }
    }
    Ok(BoundaryValues {
        rho_l,
        g_l,
        rho_r,
        g_r,
        rho_right_trace: traces.rho_right,
    })
}

/// Weak-form flux data contributed by the boundary values.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTerms {
    /// Added to `D⁻ρ`: `−ρ_L φ(−1)` in the first cell, `ρ_R φ(1)` in the last.
    pub dminus: Vec<f64>,
    /// Added to `v_l D^up g_l`.
    pub upwind: Vec<Vec<f64>>,
    /// `c_R ρ_R φ(1)` in the last cell; subtracted from the ρ flux.
    pub rho_data: Vec<f64>,
}

pub fn boundary_terms(
    values: &BoundaryValues,
    ops: &DGOperatorSet,
    quad: &VelocityQuadrature,
    penalty: f64,
) -> BoundaryTerms {
    let el = ops.left_edge();
    let er = ops.right_edge();
    let dminus = el.iter().zip(&er).map(|(a, b)| -values.rho_l * a + values.rho_r * b).collect();
    let upwind = (0..quad.len())
        .map(|l| {
            let v = quad.node(l);
            if v >= 0.0 {
                el.iter().map(|a| -v * values.g_l[l] * a).collect()
            } else {
                er.iter().map(|b| v * values.g_r[l] * b).collect()
            }
        })
        .collect();
    let rho_data = er.iter().map(|b| penalty * values.rho_r * b).collect();
    BoundaryTerms {
        dminus,
        upwind,
        rho_data,
    }
}

/// Weak-form flux accumulators produced by the boundary-open operators.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxAccumulators {
    /// `D⁻ρ`.
    pub dminus_rho: Vec<f64>,
    /// `D⁺⟨vg⟩_h`.
    pub dplus_j: Vec<f64>,
    /// `v_l D^up g_l` per ordinate.
    pub upwind: Vec<Vec<f64>>,
}

/// Injects the modified boundary fluxes, including the full penalty term
/// `c_R(ρ_R − ρ⁻_{N+1/2})` on the right edge of the ρ flux.
pub fn apply_boundary_fluxes(
    acc: &mut FluxAccumulators,
    values: &BoundaryValues,
    ops: &DGOperatorSet,
    quad: &VelocityQuadrature,
    penalty: f64,
) {
    let terms = boundary_terms(values, ops, quad, penalty);
    acc.dminus_rho.iter_mut().zip(&terms.dminus).for_each(|(a, b)| *a += b);
    for (u, t) in acc.upwind.iter_mut().zip(&terms.upwind) {
        u.iter_mut().zip(t).for_each(|(a, b)| *a += b);
    }
    let er = ops.right_edge();
    let jump = penalty * (values.rho_r - values.rho_right_trace);
    acc.dplus_j.iter_mut().zip(&er).for_each(|(a, b)| *a += jump * b);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg_ops::assemble_operators;
    use crate::field::DGDegree;
    use crate::material::MaterialCoefficients;
    use crate::mesh::{BoundaryKind, Mesh1D};

    fn zero_traces(nv: usize) -> EdgeTraces {
        EdgeTraces {
            rho_left: 0.0,
            g_left: vec![0.0; nv],
            rho_right: 0.0,
            g_right: vec![0.0; nv],
        }
    }

    #[test]
    fn unit_inflow_into_empty_slab() {
        let quad = VelocityQuadrature::slab16();
        let inflow = InflowData::isotropic(1.0, 0.0);
        let b = close_loop_values(&zero_traces(16), &inflow, 1.0, &quad, 0.0).unwrap();
        assert!((b.rho_l - 0.5).abs() < 1e-15);
        for (l, &v) in quad.nodes().iter().enumerate() {
            let e = if v > 0.0 { 0.5 } else { -0.5 };
            assert!((b.g_l[l] - e).abs() < 1e-15);
        }
        assert_eq!(b.rho_r, 0.0);
        assert!(b.g_r.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn compatible_data_reproduces_traces() {
        let quad = VelocityQuadrature::slab16();
        let eps = 0.3;
        // f = ρ + εg with ⟨g⟩ = 0 on both ends
        let g: Vec<f64> = quad.nodes().iter().map(|v| v * 0.7).collect();
        let traces = EdgeTraces {
            rho_left: 2.0,
            g_left: g.clone(),
            rho_right: -1.0,
            g_right: g.clone(),
        };
        let inflow = InflowData::new(move |v, _| 2.0 + eps * 0.7 * v, move |v, _| -1.0 + eps * 0.7 * v);
        let b = close_loop_values(&traces, &inflow, eps, &quad, 0.0).unwrap();
        assert!((b.rho_l - 2.0).abs() < 1e-14);
        assert!((b.rho_r + 1.0).abs() < 1e-14);
        for l in 0..16 {
            assert!((b.g_l[l] - g[l]).abs() < 1e-13);
            assert!((b.g_r[l] - g[l]).abs() < 1e-13);
        }
    }

    #[test]
    fn boundary_g_is_mean_free() {
        let quad = VelocityQuadrature::slab16();
        let mut seed = 11u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..20 {
            let traces = EdgeTraces {
                rho_left: rnd(),
                g_left: (0..16).map(|_| rnd()).collect(),
                rho_right: rnd(),
                g_right: (0..16).map(|_| rnd()).collect(),
            };
            let (a, b) = (rnd(), rnd());
            let inflow = InflowData::new(move |v, _| a + v * v, move |v, _| b - v);
            let eps = 10f64.powf(-3.0 * rnd().abs());
            let bv = close_loop_values(&traces, &inflow, eps, &quad, 0.0).unwrap();
            let ml: f64 = (0..16).map(|l| quad.weight(l) * bv.g_l[l]).sum();
            let mr: f64 = (0..16).map(|l| quad.weight(l) * bv.g_r[l]).sum();
            let scale = bv.g_l.iter().chain(&bv.g_r).fold(1.0f64, |m, g| m.max(g.abs()));
            assert!(ml.abs() < 1e-14 * scale && mr.abs() < 1e-14 * scale);
        }
    }

    #[test]
    fn penalty_changes_only_last_cell_flux() {
        let mesh = Mesh1D::uniform(0.0, 1.0, 4, BoundaryKind::Inflow).unwrap();
        let coef = MaterialCoefficients::constant(1.0, 0.0, 1.0).unwrap();
        let ops = assemble_operators(&mesh, DGDegree::new(1).unwrap(), &coef).unwrap();
        let quad = VelocityQuadrature::telegraph();
        let values = BoundaryValues {
            rho_l: 1.0,
            g_l: vec![-0.5, 0.5],
            rho_r: 0.25,
            g_r: vec![0.1, -0.1],
            rho_right_trace: 0.75,
        };
        let acc = FluxAccumulators {
            dminus_rho: vec![0.0; 8],
            dplus_j: vec![0.0; 8],
            upwind: vec![vec![0.0; 8]; 2],
        };
        let (mut off, mut on) = (acc.clone(), acc);
        apply_boundary_fluxes(&mut off, &values, &ops, &quad, 0.0);
        apply_boundary_fluxes(&mut on, &values, &ops, &quad, 1.0);
        assert_eq!(off.dminus_rho, on.dminus_rho);
        assert_eq!(off.upwind, on.upwind);
        for k in 0..8 {
            let e = if k >= 6 { 0.25 - 0.75 } else { 0.0 };
            assert!((on.dplus_j[k] - off.dplus_j[k] - e).abs() < 1e-15);
        }
        // left edge of D⁻ρ sees −ρ_L φ_k(−1), right edge ρ_R φ_k(1)
        assert_eq!(off.dminus_rho, vec![-1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.25, 0.25]);
        // v = −1 uses g_R on the right, v = +1 uses g_L on the left
        assert_eq!(off.upwind[0], vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.1, -0.1]);
        assert_eq!(off.upwind[1], vec![-0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_ordinate_is_rejected() {
        let quad = VelocityQuadrature::slab(3);
        assert!(close_loop_values(&zero_traces(3), &InflowData::isotropic(1.0, 1.0), 1.0, &quad, 0.0).is_err());
    }
}

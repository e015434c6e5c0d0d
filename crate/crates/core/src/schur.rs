//! Schur-complement solve of one implicit stage.
//!
//! With `a = a_ii Δt` the coupled stage system is
//!
//! ```text
//! (M + aΣ_a + aP) ρ + a D⁺ Σ_l ω_l v_l g_l = r_ρ
//! a v_l D⁻ ρ + Θ g_l                      = r_l,   Θ = ε²(M + aΣ_a) + aΣ_s
//! ```
//!
//! Eliminating `g_l` leaves `ℋ ρ = r_ρ − a D⁺ Θ⁻¹ Σ ω_l v_l r_l` with
//! `ℋ = M + aΣ_a + aP − ⟨v²⟩_h a² D⁺ Θ⁻¹ D⁻`.

use nalgebra::{DMatrix, DVector};

use crate::blocks::{solve_checked, BlockDiag, BlockTri, BlockTriCholesky};
use crate::dg_ops::DGOperatorSet;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::quadrature::VelocityQuadrature;

/// Relative residual accepted for the `ℋ` solve.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Factorizations for one value of `a_ii Δt`.
#[derive(Debug, Clone)]
pub struct SchurStageSolver {
    a_dt: f64,
    epsilon: f64,
    penalty: f64,
    dofs: usize,
    theta: BlockDiag,
    theta_inv: BlockDiag,
    h: BlockTri,
    h_factor: BlockTriCholesky,
    dminus: BlockTri,
    dplus: BlockTri,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// `M + aΣ_a + aP`, the ρ–ρ block of the stage system.
fn rho_block(a_dt: f64, penalty: f64, ops: &DGOperatorSet) -> BlockDiag {
    let mut m = ops.mass.add_scaled(a_dt, &ops.sigma_a);
    if penalty != 0.0 && !ops.is_periodic() {
        let outer = ops.reference.right_outer();
        let last = m.block_mut(ops.cells() - 1);
        for (b, o) in last.iter_mut().zip(outer) {
            *b += a_dt * penalty * o;
        }
    }
    m
}

/// `Θ = ε²(M + aΣ_a) + aΣ_s`.
pub fn theta_matrix(a_dt: f64, epsilon: f64, ops: &DGOperatorSet) -> BlockDiag {
    ops.mass
        .add_scaled(a_dt, &ops.sigma_a)
        .scaled(epsilon * epsilon)
        .add_scaled(a_dt, &ops.sigma_s)
}

impl SchurStageSolver {
    /// Factorizes `Θ` blockwise and assembles and factorizes `ℋ`. `penalty` is
    /// the right-boundary coefficient `c_R` (ignored on periodic meshes).
    pub fn prepare(
        a_dt: f64,
        epsilon: f64,
        ops: &DGOperatorSet,
        quad: &VelocityQuadrature,
        penalty: f64,
    ) -> Result<Self> {
        if !(a_dt >= 0.0) || !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Schur preparation needs a_dt >= 0 and epsilon > 0 (got {a_dt}, {epsilon})"
            )));
        }
        let theta = theta_matrix(a_dt, epsilon, ops);
        let theta_inv = theta.spd_inverse("Theta")?;
        let mut h = ops
            .dplus
            .upper_diag_lower(&theta_inv, &ops.dminus)
            .scaled(-quad.v_sq() * a_dt * a_dt);
        h.add_diag(&rho_block(a_dt, penalty, ops), 1.0);
        let h_factor = BlockTriCholesky::factor(&h, "H")?;
        Ok(SchurStageSolver {
            a_dt,
            epsilon,
            penalty,
            dofs: ops.dofs(),
            theta,
            theta_inv,
            h,
            h_factor,
            dminus: ops.dminus.clone(),
            dplus: ops.dplus.clone(),
            nodes: quad.nodes().to_vec(),
            weights: quad.weights().to_vec(),
        })
    }

    pub fn a_dt(&self) -> f64 {
        self.a_dt
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn h_matrix(&self) -> &BlockTri {
        &self.h
    }

    pub fn theta(&self) -> &BlockDiag {
        &self.theta
    }

    /// Solves the stage system for weak-form right-hand sides.
    pub fn solve_weak(&self, rhs_rho: &[f64], rhs_g: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if rhs_g.len() != self.nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.nodes.len(),
                found: rhs_g.len(),
            });
        }
        let n = rhs_rho.len();
        let a = self.a_dt;
        let mut g: Vec<Vec<f64>> = rhs_g.iter().map(|r| vec![0.0; r.len()]).collect();
        let wv: Vec<f64> = self.weights.iter().zip(&self.nodes).map(|(w, v)| w * v).collect();
        let mut jt = vec![0.0; n];
        match self.dofs {
            1 => theta_solve_all::<1>(&self.theta_inv, rhs_g, &wv, &mut g, &mut jt),
            2 => theta_solve_all::<2>(&self.theta_inv, rhs_g, &wv, &mut g, &mut jt),
            3 => theta_solve_all::<3>(&self.theta_inv, rhs_g, &wv, &mut g, &mut jt),
            _ => {
                for (l, (gl, rl)) in g.iter_mut().zip(rhs_g).enumerate() {
                    self.theta_inv.apply_add(rl, gl);
                    jt.iter_mut().zip(gl.iter()).for_each(|(j, v)| *j += wv[l] * v);
                }
            }
        }
        let mut b = rhs_rho.to_vec();
        self.dplus.apply_scaled_add(-a, &jt, &mut b);
        let rho = solve_checked(&self.h, &self.h_factor, &b, RESIDUAL_TOL)?;
        let w = self.theta_inv.apply(&self.dminus.apply(&rho));
        for (gl, v) in g.iter_mut().zip(&self.nodes) {
            let c = a * v;
            gl.iter_mut().zip(&w).for_each(|(g, wv)| *g -= c * wv);
        }
        Ok((rho, g))
    }

    /// Field-valued wrapper around [`SchurStageSolver::solve_weak`].
    pub fn solve_stage(&self, rhs_rho: &[f64], rhs_g: &[Vec<f64>]) -> Result<(Field, Vec<Field>)> {
        let (rho, g) = self.solve_weak(rhs_rho, rhs_g)?;
        let d = self.dofs;
        Ok((
            Field::from_coeffs(d, rho)?,
            g.into_iter().map(|v| Field::from_coeffs(d, v)).collect::<Result<_>>()?,
        ))
    }
}

/// `y_l = Θ⁻¹ r_l` for every ordinate, cell by cell, with `jt += Σ_l c_l y_l`.
fn theta_solve_all<const D: usize>(theta_inv: &BlockDiag, rhs: &[Vec<f64>], c: &[f64], y: &mut [Vec<f64>], jt: &mut [f64]) {
    for (cell, jc) in jt.chunks_exact_mut(D).enumerate() {
        let tb = &theta_inv.block(cell)[..D * D];
        let r0 = cell * D;
        for ((rl, yl), cl) in rhs.iter().zip(y.iter_mut()).zip(c) {
            let r = &rl[r0..r0 + D];
            let out = &mut yl[r0..r0 + D];
            for i in 0..D {
                let mut acc = 0.0;
                for j in 0..D {
                    acc += tb[i * D + j] * r[j];
                }
                out[i] = acc;
                jc[i] += cl * acc;
            }
        }
    }
}

/// Largest dimension accepted by [`full_system_solve`].
pub const DENSE_LIMIT: usize = 4000;

/// Dense assembly of the full coupled stage matrix `ℒ` acting on `(ρ, g_1, …, g_{N_v})`.
pub fn full_system_matrix(
    a_dt: f64,
    epsilon: f64,
    ops: &DGOperatorSet,
    quad: &VelocityQuadrature,
    penalty: f64,
) -> Result<DMatrix<f64>> {
    let n = ops.dim();
    let nv = quad.len();
    let dim = n * (nv + 1);
    if dim > DENSE_LIMIT {
        return Err(Error::TooLarge { dim, limit: DENSE_LIMIT });
    }
    let mut l = DMatrix::<f64>::zeros(dim, dim);
    let put = |l: &mut DMatrix<f64>, r0: usize, c0: usize, m: &[f64], s: f64| {
        for i in 0..n {
            for j in 0..n {
                l[(r0 + i, c0 + j)] += s * m[i * n + j];
            }
        }
    };
    put(&mut l, 0, 0, &rho_block(a_dt, penalty, ops).to_dense(), 1.0);
    let dp = ops.dplus.to_dense();
    let dm = ops.dminus.to_dense();
    let th = theta_matrix(a_dt, epsilon, ops).to_dense();
    for (k, (&v, &w)) in quad.nodes().iter().zip(quad.weights()).enumerate() {
        let off = n * (k + 1);
        put(&mut l, 0, off, &dp, a_dt * w * v);
        put(&mut l, off, 0, &dm, a_dt * v);
        put(&mut l, off, off, &th, 1.0);
    }
    Ok(l)
}

/// Test oracle: dense LU solve of the unreduced stage system.
pub fn full_system_solve(
    rhs_rho: &[f64],
    rhs_g: &[Vec<f64>],
    a_dt: f64,
    epsilon: f64,
    ops: &DGOperatorSet,
    quad: &VelocityQuadrature,
    penalty: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let l = full_system_matrix(a_dt, epsilon, ops, quad, penalty)?;
    let n = ops.dim();
    let mut b = rhs_rho.to_vec();
    for r in rhs_g {
        b.extend_from_slice(r);
    }
    let x = l
        .lu()
        .solve(&DVector::from_vec(b))
        .ok_or(Error::Singular("full stage system"))?;
    let rho = x.rows(0, n).iter().copied().collect();
    let g = (0..quad.len())
        .map(|k| x.rows(n * (k + 1), n).iter().copied().collect())
        .collect();
    Ok((rho, g))
}

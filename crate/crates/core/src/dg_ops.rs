//! DG mass matrices and the discrete derivative operators.
//!
//! All matrices act on modal coefficients and are in weak form: row `(i, k)`
//! of `D⁻ u` is `(D⁻ u, φ_{i,k})`. Strong-form fields are recovered with
//! `M⁻¹`.

use crate::basis::{left_trace, right_trace, BasisTable};
use crate::blocks::{BlockDiag, BlockTri};
use crate::error::{Error, Result};
use crate::field::{DGDegree, Field};
use crate::material::MaterialCoefficients;
use crate::mesh::{BoundaryKind, Mesh1D};
use crate::quadrature::VelocityQuadrature;

/// Element matrices on the reference cell, independent of `h`.
///
/// `stiff[k][j] = ∫ φ_k' φ_j dξ`; the flux blocks are those of the periodic
/// operators (row = test index, column = trial index).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBlocks {
    pub dofs: usize,
    pub mass: Vec<f64>,
    pub stiff: Vec<f64>,
    pub dminus_diag: Vec<f64>,
    pub dminus_lower: Vec<f64>,
    pub dplus_diag: Vec<f64>,
    pub dplus_upper: Vec<f64>,
}

impl ReferenceBlocks {
    pub fn new(dofs: usize) -> Self {
        let d = dofs;
        let mut stiff = vec![0.0; d * d];
        let mut mass = vec![0.0; d * d];
        for k in 0..d {
            for j in 0..d {
                // ∫ P_k' P_j = 2 for j < k with k + j odd
                stiff[k * d + j] = if j < k && (k + j) % 2 == 1 { 2.0 } else { 0.0 };
            }
            // ½ ∫ φ_k² dξ, so that the physical mass block is h · mass
            mass[k * d + k] = 1.0 / (2 * k + 1) as f64;
        }
        let mut dminus_diag = vec![0.0; d * d];
        let mut dminus_lower = vec![0.0; d * d];
        let mut dplus_diag = vec![0.0; d * d];
        let mut dplus_upper = vec![0.0; d * d];
        for k in 0..d {
            for j in 0..d {
                let s = stiff[k * d + j];
                dminus_diag[k * d + j] = -s + right_trace(j) * right_trace(k);
                dminus_lower[k * d + j] = -right_trace(j) * left_trace(k);
                dplus_diag[k * d + j] = -s - left_trace(j) * left_trace(k);
                dplus_upper[k * d + j] = left_trace(j) * right_trace(k);
            }
        }
        ReferenceBlocks {
            dofs,
            mass,
            stiff,
            dminus_diag,
            dminus_lower,
            dplus_diag,
            dplus_upper,
        }
    }

    /// `e_R e_Rᵀ`: the own right-trace term `φ_j(1) φ_k(1)`.
    pub fn right_outer(&self) -> Vec<f64> {
        let d = self.dofs;
        (0..d * d).map(|q| right_trace(q % d) * right_trace(q / d)).collect()
    }
}

/// Assembled operators for one mesh, degree and set of coefficients.
#[derive(Debug, Clone)]
pub struct DGOperatorSet {
    pub mesh: Mesh1D,
    pub degree: DGDegree,
    pub reference: ReferenceBlocks,
    pub mass: BlockDiag,
    /// Diagonal of `M`, cell-major.
    pub mass_diag: Vec<f64>,
    pub sigma_s: BlockDiag,
    pub sigma_a: BlockDiag,
    /// Weak-form load `(G, φ)`.
    pub source: Vec<f64>,
    /// Alternating flux `ρ̆ = ρ⁻`. Inflow meshes: no boundary-edge terms.
    pub dminus: BlockTri,
    /// Alternating flux `ĝ = g⁺`. Inflow meshes keep own traces at both ends.
    pub dplus: BlockTri,
    /// Left-trace (`v ≥ 0`) upwind stencil, without the factor `v`.
    pub dup_pos: BlockTri,
    /// Right-trace (`v < 0`) upwind stencil, without the factor `v`.
    pub dup_neg: BlockTri,
    pub epsilon: f64,
    pub sigma_m: f64,
}

/// Builds every operator of the scheme on `mesh`.
pub fn assemble_operators(
    mesh: &Mesh1D,
    degree: DGDegree,
    coefficients: &MaterialCoefficients,
) -> Result<DGOperatorSet> {
    let d = degree.dofs();
    let n = mesh.cells();
    let s = d * d;
    let reference = ReferenceBlocks::new(d);
    let table = BasisTable::new(d, degree.rule());

    let mut mass = BlockDiag::zeros(n, d);
    let mut mass_diag = vec![0.0; n * d];
    let mut sigma_s = BlockDiag::zeros(n, d);
    let mut sigma_a = BlockDiag::zeros(n, d);
    let mut source = vec![0.0; n * d];
    let mut samples = Vec::with_capacity(n * table.rule.len());
    for i in 0..n {
        let h = mesh.width(i);
        for k in 0..d {
            mass.block_mut(i)[k * d + k] = h * reference.mass[k * d + k];
            mass_diag[i * d + k] = h * reference.mass[k * d + k];
        }
        for (q, (&xi, &w)) in table.rule.nodes.iter().zip(&table.rule.weights).enumerate() {
            let x = mesh.map(i, xi);
            samples.push(x);
            let (ss, sa, g) = (coefficients.sigma_s(x), coefficients.sigma_a(x), coefficients.source(x));
            let phi = table.row(q);
            let jac = 0.5 * h * w;
            for k in 0..d {
                source[i * d + k] += jac * g * phi[k];
                for j in 0..d {
                    let pp = jac * phi[k] * phi[j];
                    sigma_s.block_mut(i)[k * d + j] += ss * pp;
                    sigma_a.block_mut(i)[k * d + j] += sa * pp;
                }
            }
        }
    }
    let sigma_m = coefficients.validate_on(samples)?;

    let periodic = mesh.boundary() == BoundaryKind::Periodic;
    let mut dminus = BlockTri::zeros(n, d, periodic);
    let mut dplus = BlockTri::zeros(n, d, periodic);
    for i in 0..n {
        dminus.diag_block_mut(i).copy_from_slice(&reference.dminus_diag);
        dplus.diag_block_mut(i).copy_from_slice(&reference.dplus_diag);
        if i > 0 || periodic {
            dminus.lower_block_mut(i).copy_from_slice(&reference.dminus_lower);
        }
        if i + 1 < n || periodic {
            dplus.upper_block_mut(i).copy_from_slice(&reference.dplus_upper);
        }
    }
    let (dup_pos, dup_neg) = (dminus.clone(), dplus.clone());
    if !periodic {
        // the right-edge value of ρ̆ is boundary data; ĝ there is the own trace
        let outer = reference.right_outer();
        for q in 0..s {
            dminus.diag[(n - 1) * s + q] -= outer[q];
            dplus.diag[(n - 1) * s + q] += outer[q];
        }
    }
    Ok(DGOperatorSet {
        mesh: mesh.clone(),
        degree,
        reference,
        mass,
        mass_diag,
        sigma_s,
        sigma_a,
        source,
        dminus,
        dplus,
        dup_pos,
        dup_neg,
        epsilon: coefficients.epsilon(),
        sigma_m,
    })
}

impl DGOperatorSet {
    pub fn dofs(&self) -> usize {
        self.degree.dofs()
    }

    pub fn cells(&self) -> usize {
        self.mesh.cells()
    }

    pub fn dim(&self) -> usize {
        self.cells() * self.dofs()
    }

    pub fn is_periodic(&self) -> bool {
        self.mesh.is_periodic()
    }

    /// `M⁻¹ w` as a Field.
    pub fn strong(&self, weak: Vec<f64>) -> Field {
        let mut c = weak;
        c.iter_mut().zip(&self.mass_diag).for_each(|(a, m)| *a /= m);
        Field::from_coeffs(self.dofs(), c).expect("dimension matches mesh")
    }

    /// Upwind stencil for a velocity of the given sign.
    pub fn upwind(&self, v: f64) -> &BlockTri {
        if v >= 0.0 {
            &self.dup_pos
        } else {
            &self.dup_neg
        }
    }

    /// Weak-form `v · D^up(g; v)` added into `out` (no boundary data).
    pub fn upwind_weak_add(&self, g: &[f64], v: f64, out: &mut [f64]) {
        self.upwind(v).apply_bidiag_scaled_add(v >= 0.0, v, g, out);
    }

    /// Weak-form vector with `φ_k(−1)` in the first cell.
    pub fn left_edge(&self) -> Vec<f64> {
        let d = self.dofs();
        let mut e = vec![0.0; self.dim()];
        for k in 0..d {
            e[k] = left_trace(k);
        }
        e
    }

    /// Weak-form vector with `φ_k(1)` in the last cell.
    pub fn right_edge(&self) -> Vec<f64> {
        let d = self.dofs();
        let mut e = vec![0.0; self.dim()];
        let off = self.dim() - d;
        for k in 0..d {
            e[off + k] = right_trace(k);
        }
        e
    }
}

/// `M⁻¹` times the weak upwind derivative `v ∂_x g` (homogeneous boundary data
/// on inflow meshes).
pub fn apply_upwind(g: &Field, v: f64, ops: &DGOperatorSet) -> Field {
    let mut w = vec![0.0; ops.dim()];
    ops.upwind_weak_add(g.coeffs(), v, &mut w);
    ops.strong(w)
}

/// `Σ_l ω_l g_l`.
pub fn velocity_average(g: &[Field], quad: &VelocityQuadrature) -> Result<Field> {
    if g.len() != quad.len() {
        return Err(Error::DimensionMismatch {
            expected: quad.len(),
            found: g.len(),
        });
    }
    let mut avg = Field::zeros(g[0].cells(), g[0].dofs());
    for (l, gl) in g.iter().enumerate() {
        avg.axpy(quad.weight(l), gl);
    }
    Ok(avg)
}

/// Weak-form `D^up(g_l; v_l) − ⟨D^up(g; v)⟩_h` for every ordinate at once.
pub fn b_hv_weak_all(g: &[&[f64]], ops: &DGOperatorSet, quad: &VelocityQuadrature) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(g.len());
    let mut avg = vec![0.0; ops.dim()];
    for (l, gl) in g.iter().enumerate() {
        let mut w = vec![0.0; ops.dim()];
        ops.upwind_weak_add(gl, quad.node(l), &mut w);
        let wl = quad.weight(l);
        avg.iter_mut().zip(&w).for_each(|(a, b)| *a += wl * b);
        out.push(w);
    }
    for w in &mut out {
        w.iter_mut().zip(&avg).for_each(|(a, b)| *a -= b);
    }
    out
}

/// `(I − Π) D^up(g; v_l)` as a Field.
pub fn b_hv(g: &[Field], l: usize, ops: &DGOperatorSet, quad: &VelocityQuadrature) -> Field {
    let refs: Vec<&[f64]> = g.iter().map(|f| f.coeffs()).collect();
    let mut all = b_hv_weak_all(&refs, ops, quad);
    ops.strong(all.swap_remove(l))
}

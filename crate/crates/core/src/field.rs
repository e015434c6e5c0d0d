//! Piecewise-polynomial fields in the Legendre modal basis and the kinetic state.

use crate::basis::{legendre, legendre_norm_sq, BasisTable, GaussRule};
use crate::error::{Error, Result};
use crate::mesh::Mesh1D;
use crate::quadrature::VelocityQuadrature;

/// Polynomial degree of the DG space (0, 1 or 2 for the shipped schemes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DGDegree(usize);

impl DGDegree {
    pub fn new(degree: usize) -> Result<Self> {
        if degree > 2 {
            return Err(Error::InvalidParameter(format!(
                "polynomial degree {degree} not supported (0..=2)"
            )));
        }
        Ok(DGDegree(degree))
    }

    /// The space used by the order-`k` scheme, i.e. degree `k - 1`.
    pub fn for_order(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("scheme order must be >= 1".into()));
        }
        Self::new(k - 1)
    }

    pub fn degree(self) -> usize {
        self.0
    }

    pub fn dofs(self) -> usize {
        self.0 + 1
    }

    /// Per-cell rule used for projections and weighted mass matrices.
    pub fn rule(self) -> GaussRule {
        GaussRule::legendre(self.0 + 3)
    }
}

/// Modal coefficients, cell-major: entry `i * dofs + j` multiplies `P_j` on cell `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    dofs: usize,
    coeffs: Vec<f64>,
}

impl Field {
    pub fn zeros(cells: usize, dofs: usize) -> Self {
        Field {
            dofs,
            coeffs: vec![0.0; cells * dofs],
        }
    }

    pub fn from_coeffs(dofs: usize, coeffs: Vec<f64>) -> Result<Self> {
        if dofs == 0 || coeffs.len() % dofs != 0 {
            return Err(Error::DimensionMismatch {
                expected: dofs,
                found: coeffs.len(),
            });
        }
        Ok(Field { dofs, coeffs })
    }

    pub fn dofs(&self) -> usize {
        self.dofs
    }

    pub fn cells(&self) -> usize {
        self.coeffs.len() / self.dofs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.coeffs[i * self.dofs..(i + 1) * self.dofs]
    }

    /// Value at reference coordinate `xi` in cell `i`.
    pub fn eval_ref(&self, i: usize, xi: f64) -> f64 {
        self.cell(i)
            .iter()
            .enumerate()
            .map(|(j, c)| c * legendre(j, xi))
            .sum()
    }

    /// Value at physical `x`; interior edges take the right cell.
    pub fn eval(&self, mesh: &Mesh1D, x: f64) -> Option<f64> {
        let i = mesh.locate(x)?;
        let xi = (2.0 * (x - mesh.center(i)) / mesh.width(i)).clamp(-1.0, 1.0);
        Some(self.eval_ref(i, xi))
    }

    /// `(u, v)` for two fields on the same mesh.
    pub fn inner(&self, other: &Field, mesh: &Mesh1D) -> f64 {
        let mut s = 0.0;
        for i in 0..self.cells() {
            let h = mesh.width(i);
            for j in 0..self.dofs {
                let k = i * self.dofs + j;
                s += 0.5 * h * legendre_norm_sq(j) * self.coeffs[k] * other.coeffs[k];
            }
        }
        s
    }

    pub fn l2_norm(&self, mesh: &Mesh1D) -> f64 {
        self.inner(self, mesh).sqrt()
    }

    /// `∫ u dx`.
    pub fn integral(&self, mesh: &Mesh1D) -> f64 {
        (0..self.cells()).map(|i| mesh.width(i) * self.coeffs[i * self.dofs]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn axpy(&mut self, a: f64, x: &Field) {
        for (y, xv) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *y += a * xv;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= a);
    }

    /// Per-cell L² projection of `f` computed with a `degree + 3`-point Gauss rule.
    pub fn project(mesh: &Mesh1D, degree: DGDegree, f: impl Fn(f64) -> f64) -> Self {
        Self::project_with(mesh, degree, &BasisTable::new(degree.dofs(), degree.rule()), f)
    }

    pub fn project_with(
        mesh: &Mesh1D,
        degree: DGDegree,
        table: &BasisTable,
        f: impl Fn(f64) -> f64,
    ) -> Self {
        let dofs = degree.dofs();
        let mut coeffs = vec![0.0; mesh.cells() * dofs];
        for i in 0..mesh.cells() {
            for (q, (&xi, &w)) in table.rule.nodes.iter().zip(&table.rule.weights).enumerate() {
                let fx = f(mesh.map(i, xi));
                for j in 0..dofs {
                    coeffs[i * dofs + j] += w * fx * table.value(q, j);
                }
            }
            for j in 0..dofs {
                coeffs[i * dofs + j] /= legendre_norm_sq(j);
            }
        }
        Field { dofs, coeffs }
    }
}

/// Full unknown at one time level: `ρ_h` and one `g_h` field per ordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    pub rho: Field,
    pub g: Vec<Field>,
    pub time: f64,
}

impl KineticState {
    pub fn zeros(cells: usize, dofs: usize, ordinates: usize) -> Self {
        KineticState {
            rho: Field::zeros(cells, dofs),
            g: vec![Field::zeros(cells, dofs); ordinates],
            time: 0.0,
        }
    }

    pub fn ordinates(&self) -> usize {
        self.g.len()
    }

    /// `⟨g⟩_h = Σ_l ω_l g_l`.
    pub fn g_average(&self, quad: &VelocityQuadrature) -> Field {
        let mut avg = Field::zeros(self.rho.cells(), self.rho.dofs());
        for (l, g) in self.g.iter().enumerate() {
            avg.axpy(quad.weight(l), g);
        }
        avg
    }

    /// Current `j = ⟨v g⟩_h`.
    pub fn current(&self, quad: &VelocityQuadrature) -> Field {
        let mut j = Field::zeros(self.rho.cells(), self.rho.dofs());
        for (l, g) in self.g.iter().enumerate() {
            j.axpy(quad.weight(l) * quad.node(l), g);
        }
        j
    }

    pub fn is_finite(&self) -> bool {
        self.rho.coeffs().iter().all(|c| c.is_finite())
            && self.g.iter().all(|g| g.coeffs().iter().all(|c| c.is_finite()))
    }
}

/// L² projection of `ρ(x, 0)` and of `g(x, v_l, 0)` for every ordinate.
pub fn project_initial(
    rho0: impl Fn(f64) -> f64,
    g0: impl Fn(f64, f64) -> f64,
    mesh: &Mesh1D,
    degree: DGDegree,
    quad: &VelocityQuadrature,
) -> KineticState {
    let table = BasisTable::new(degree.dofs(), degree.rule());
    let rho = Field::project_with(mesh, degree, &table, &rho0);
    let g = quad
        .nodes()
        .iter()
        .map(|&v| Field::project_with(mesh, degree, &table, |x| g0(x, v)))
        .collect();
    KineticState { rho, g, time: 0.0 }
}

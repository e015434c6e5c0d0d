//! Fourier and energy stability analysis for constant scattering `σ_s = σ_m`
//! and `σ_a = 0` on uniform periodic meshes.
//!
//! A Fourier mode `exp(𝒾κx_m)` with discrete wave number `ξ = κh` turns every
//! block-banded operator into a `k × k` symbol; the one-step map then acts on
//! `V = (ρ̂, ĝ_1, …, ĝ_{N_v})` of length `k(N_v + 1)`.

use std::io::Write;

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;

use crate::basis::{legendre, legendre_derivative, GaussRule};
use crate::dg_ops::DGOperatorSet;
use crate::error::{Error, Result};
use crate::field::KineticState;
use crate::mesh::BoundaryKind;
use crate::quadrature::VelocityQuadrature;
use crate::tableau::ButcherTableau;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Reference-cell symbols of one Fourier mode.
#[derive(Debug, Clone)]
pub struct HatMatrices {
    /// `½∫φ_iφ_j`.
    pub mass: CMatrix,
    pub dminus: CMatrix,
    pub dplus: CMatrix,
    /// Per-ordinate transport symbols with the ordinate average split off
    /// ordinate by ordinate (the `Û_l` of the block-diagonal form).
    pub u: Vec<CMatrix>,
}

fn check_k(k: usize) -> Result<()> {
    if (1..=3).contains(&k) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("DG order k must be 1, 2 or 3, got {k}")))
    }
}

/// Symbols for DG order `k` (degree `k − 1`) at wave number `xi`.
pub fn build_hat_matrices(xi: f64, k: usize, quad: &VelocityQuadrature) -> Result<HatMatrices> {
    check_k(k)?;
    let rule = GaussRule::legendre(k + 1);
    let e_minus = Complex::from_polar(1.0, -xi);
    let e_plus = Complex::from_polar(1.0, xi);
    let (l1, lm1) = (|i: usize| legendre(i, 1.0), |i: usize| legendre(i, -1.0));
    let mass = CMatrix::from_fn(k, k, |i, j| if i == j { c(1.0 / (2 * i + 1) as f64) } else { c(0.0) });
    let stiff = |i: usize, j: usize| rule.integrate(|x| legendre(j, x) * legendre_derivative(i, x));
    let dminus = CMatrix::from_fn(k, k, |i, j| c(-stiff(i, j) + l1(j) * l1(i)) - e_minus * (l1(j) * lm1(i)));
    let dplus = CMatrix::from_fn(k, k, |i, j| c(-stiff(i, j) - lm1(j) * lm1(i)) + e_plus * (lm1(j) * l1(i)));
    let upwind = |v: f64| if v >= 0.0 { &dminus } else { &dplus };
    let mut avg = CMatrix::zeros(k, k);
    for (&v, &w) in quad.nodes().iter().zip(quad.weights()) {
        avg += upwind(v) * c(w * v);
    }
    let u = quad.nodes().iter().map(|&v| upwind(v) * c(v) - &avg).collect();
    Ok(HatMatrices { mass, dminus, dplus, u })
}

/// Parameters of one amplification-matrix evaluation.
#[derive(Debug, Clone)]
pub struct FourierConfig {
    /// IMEX order.
    pub p: usize,
    /// DG order (polynomial degree `k − 1`).
    pub k: usize,
    pub quad: VelocityQuadrature,
    pub sigma_m: f64,
    pub epsilon: f64,
    pub h: f64,
    pub dt: f64,
    pub xi_samples: usize,
    pub tol: f64,
}

impl FourierConfig {
    /// Slab 16-point ordinates, `σ_m = ε = h = Δt = 1`, 100 wave numbers.
    pub fn new(p: usize, k: usize) -> Result<Self> {
        check_k(k)?;
        ButcherTableau::for_order(p)?;
        Ok(FourierConfig {
            p,
            k,
            quad: VelocityQuadrature::slab16(),
            sigma_m: 1.0,
            epsilon: 1.0,
            h: 1.0,
            dt: 1.0,
            xi_samples: 100,
            tol: 1e-10,
        })
    }

    pub fn with_physical(mut self, epsilon: f64, sigma_m: f64, h: f64, dt: f64) -> Self {
        self.epsilon = epsilon;
        self.sigma_m = sigma_m;
        self.h = h;
        self.dt = dt;
        self
    }

    /// Representative with `α = log₁₀(ε/(σ_m h))`, `β = log₁₀(Δt/(εh))`,
    /// taking `ε = h = 1`.
    pub fn with_alpha_beta(self, alpha: f64, beta: f64) -> Self {
        self.with_physical(1.0, 10f64.powf(-alpha), 1.0, 10f64.powf(beta))
    }

    pub fn alpha(&self) -> f64 {
        (self.epsilon / (self.sigma_m * self.h)).log10()
    }

    pub fn beta(&self) -> f64 {
        (self.dt / (self.epsilon * self.h)).log10()
    }

    /// `k (N_v + 1)`.
    pub fn dim(&self) -> usize {
        self.k * (self.quad.len() + 1)
    }

    /// `ξ_j = 2πj / xi_samples`, `j = 0, …, xi_samples − 1` (`2π` aliases `0`).
    pub fn wave_numbers(&self) -> Vec<f64> {
        (0..self.xi_samples)
            .map(|j| 2.0 * std::f64::consts::PI * j as f64 / self.xi_samples as f64)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        check_k(self.k)?;
        let ok = [self.sigma_m, self.epsilon, self.h, self.dt].iter().all(|v| *v > 0.0 && v.is_finite());
        if !ok || self.xi_samples == 0 {
            return Err(Error::InvalidParameter(
                "Fourier analysis needs positive sigma_m, epsilon, h, dt and at least one wave number".into(),
            ));
        }
        Ok(())
    }
}

/// Mode-space operators of the stage equations, applied blockwise to the
/// columns of `n × c` matrices.
struct ModeOperators {
    k: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `h M̂`.
    mass: CMatrix,
    dminus: CMatrix,
    dplus: CMatrix,
    /// `v_l D^up_l`.
    vup: Vec<CMatrix>,
    eps: f64,
    sigma: f64,
}

impl ModeOperators {
    fn new(cfg: &FourierConfig, xi: f64) -> Result<Self> {
        let hat = build_hat_matrices(xi, cfg.k, &cfg.quad)?;
        let vup = cfg
            .quad
            .nodes()
            .iter()
            .map(|&v| if v >= 0.0 { &hat.dminus * c(v) } else { &hat.dplus * c(v) })
            .collect();
        Ok(ModeOperators {
            k: cfg.k,
            nodes: cfg.quad.nodes().to_vec(),
            weights: cfg.quad.weights().to_vec(),
            mass: hat.mass * c(cfg.h),
            dminus: hat.dminus,
            dplus: hat.dplus,
            vup,
            eps: cfg.epsilon,
            sigma: cfg.sigma_m,
        })
    }

    fn dim(&self) -> usize {
        self.k * (self.nodes.len() + 1)
    }

    fn rows(&self, b: usize) -> std::ops::Range<usize> {
        b * self.k..(b + 1) * self.k
    }

    /// `diag(M, ε²M, …, ε²M) X`.
    fn mass_apply(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(x.nrows(), x.ncols());
        let e2 = c(self.eps * self.eps);
        for b in 0..=self.nodes.len() {
            let r = self.rows(b);
            let s = if b == 0 { c(1.0) } else { e2 };
            out.rows_mut(r.start, self.k).copy_from(&(&self.mass * x.rows(r.start, self.k) * s));
        }
        out
    }

    /// Implicit part: `(D⁺ Σ ω v ĝ, v_l D⁻ ρ̂ + σ_m M ĝ_l)`.
    fn implicit_apply(&self, x: &CMatrix) -> CMatrix {
        let k = self.k;
        let mut out = CMatrix::zeros(x.nrows(), x.ncols());
        let mut j = CMatrix::zeros(k, x.ncols());
        let dr = &self.dminus * x.rows(0, k);
        for (l, (&v, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let xg = x.rows((l + 1) * k, k);
            j += xg * c(w * v);
            let gl = &dr * c(v) + &self.mass * xg * c(self.sigma);
            out.rows_mut((l + 1) * k, k).copy_from(&gl);
        }
        out.rows_mut(0, k).copy_from(&(&self.dplus * j));
        out
    }

    /// Explicit transport `(0, v_l D^up_l ĝ_l − Σ ω v D^up ĝ)`.
    fn explicit_apply(&self, x: &CMatrix) -> CMatrix {
        let k = self.k;
        let mut out = CMatrix::zeros(x.nrows(), x.ncols());
        let mut avg = CMatrix::zeros(k, x.ncols());
        for (l, w) in self.weights.iter().enumerate() {
            let wl = &self.vup[l] * x.rows((l + 1) * k, k);
            avg += &wl * c(*w);
            out.rows_mut((l + 1) * k, k).copy_from(&wl);
        }
        for l in 0..self.nodes.len() {
            let mut rows = out.rows_mut((l + 1) * k, k);
            rows -= &avg;
        }
        out
    }

    fn dense(&self, f: impl Fn(&CMatrix) -> CMatrix) -> CMatrix {
        f(&CMatrix::identity(self.dim(), self.dim()))
    }
}

/// `G_L` and `G_R` of the first-order scheme: `G_L V^{n+1} = G_R V^n`.
pub fn first_order_blocks(cfg: &FourierConfig, xi: f64) -> Result<(CMatrix, CMatrix)> {
    cfg.validate()?;
    let ops = ModeOperators::new(cfg, xi)?;
    let n0 = ops.dense(|x| ops.mass_apply(x));
    let gl = &n0 + ops.dense(|x| ops.implicit_apply(x)) * c(cfg.dt);
    let gr = &n0 - ops.dense(|x| ops.explicit_apply(x)) * c(cfg.epsilon * cfg.dt);
    Ok((gl, gr))
}

/// One-step map assembled stage by stage for an arbitrary ARS tableau:
/// `V⁽ⁱ⁾ = S_i Vⁿ` with `S_0 = I` and
/// `(N + a_ii Δt F_I) S_i = N − Δt Σ_{j<i} (a_ij F_I + ε ã_ij F_E) S_j`.
pub fn stage_composition(cfg: &FourierConfig, tableau: &ButcherTableau, xi: f64) -> Result<CMatrix> {
    cfg.validate()?;
    if !tableau.has_constant_diagonal() {
        return Err(Error::InvalidParameter("tableau needs a constant implicit diagonal".into()));
    }
    let ops = ModeOperators::new(cfg, xi)?;
    let n = ops.dim();
    let dt = cfg.dt;
    let n0 = ops.dense(|x| ops.mass_apply(x));
    let a = tableau.implicit_diagonal() * dt;
    let lu = (&n0 + ops.dense(|x| ops.implicit_apply(x)) * c(a)).lu();
    let s = tableau.stages;
    let mut stage = CMatrix::identity(n, n);
    let mut imp: Vec<CMatrix> = Vec::with_capacity(s);
    let mut exp: Vec<CMatrix> = Vec::with_capacity(s);
    for i in 0..s {
        if i > 0 {
            let mut rhs = n0.clone();
            for j in 0..i {
                let (ai, ae) = (tableau.a_imp[i][j], tableau.a_exp[i][j]);
                if ai != 0.0 {
                    rhs -= &imp[j] * c(dt * ai);
                }
                if ae != 0.0 {
                    rhs -= &exp[j] * c(cfg.epsilon * dt * ae);
                }
            }
            stage = lu.solve(&rhs).ok_or(Error::Singular("Fourier stage matrix"))?;
        }
        if i + 1 < s {
            imp.push(ops.implicit_apply(&stage));
            exp.push(ops.explicit_apply(&stage));
        }
    }
    Ok(stage)
}

/// Amplification matrix `G^{(p,k)}(ξ)`: `G_L⁻¹ G_R` for `p = 1`, the composed
/// stage maps of the ARS tableau otherwise.
pub fn amplification_matrix(cfg: &FourierConfig, xi: f64) -> Result<CMatrix> {
    if cfg.p == 1 {
        let (gl, gr) = first_order_blocks(cfg, xi)?;
        return gl.lu().solve(&gr).ok_or(Error::Singular("G_L"));
    }
    stage_composition(cfg, &ButcherTableau::for_order(cfg.p)?, xi)
}

pub use crate::eigen::eigenvalues;

pub fn spectral_radius(m: &CMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().fold(0.0f64, |r, z| r.max(z.norm())))
}

/// `max_ξ ρ(G(ξ))` over the sampled wave numbers. The operators are real, so
/// `G(2π − ξ)` is the conjugate of `G(ξ)` and only `ξ ≤ π` is evaluated.
pub fn max_modulus(cfg: &FourierConfig) -> Result<f64> {
    let tab = if cfg.p == 1 { None } else { Some(ButcherTableau::for_order(cfg.p)?) };
    let mut worst = 0.0f64;
    let xis = cfg.wave_numbers();
    let half = cfg.xi_samples / 2 + 1;
    for &xi in xis.iter().take(half) {
        let g = match &tab {
            None => amplification_matrix(cfg, xi)?,
            Some(t) => stage_composition(cfg, t, xi)?,
        };
        worst = worst.max(spectral_radius(&g)?);
    }
    Ok(worst)
}

/// Sampling of the `(α, β)` plane and of `ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    pub step: f64,
    pub xi_samples: usize,
}

impl GridSpec {
    /// `α ∈ [−5, 5]`, `β ∈ [−5, 4]`, spacing 1/4, 32 wave numbers.
    pub fn coarse() -> Self {
        GridSpec {
            alpha: (-5.0, 5.0),
            beta: (-5.0, 4.0),
            step: 0.25,
            xi_samples: 32,
        }
    }

    /// Same window at spacing 1/20 with 100 wave numbers.
    pub fn paper() -> Self {
        GridSpec {
            step: 0.05,
            xi_samples: 100,
            ..Self::coarse()
        }
    }

    fn axis((lo, hi): (f64, f64), step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    }

    pub fn alphas(&self) -> Vec<f64> {
        Self::axis(self.alpha, self.step)
    }

    pub fn betas(&self) -> Vec<f64> {
        Self::axis(self.beta, self.step)
    }
}

/// Scan result, row-major in `α` then `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityGrid {
    pub p: usize,
    pub k: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `NaN` where the eigenvalue iteration failed.
    pub max_modulus: Vec<f64>,
    pub stable: Vec<bool>,
}

impl StabilityGrid {
    fn index(&self, ia: usize, ib: usize) -> usize {
        ia * self.betas.len() + ib
    }

    pub fn is_stable(&self, ia: usize, ib: usize) -> bool {
        self.stable[self.index(ia, ib)]
    }

    pub fn modulus(&self, ia: usize, ib: usize) -> f64 {
        self.max_modulus[self.index(ia, ib)]
    }

    /// Points where the eigenvalue iteration failed.
    pub fn failures(&self) -> usize {
        self.max_modulus.iter().filter(|m| m.is_nan()).count()
    }

    /// Largest `β` with every grid `β' ≤ β` stable in column `ia`; `None` if
    /// the lowest `β` is already unstable.
    pub fn stable_ceiling(&self, ia: usize) -> Option<f64> {
        let n = (0..self.betas.len()).take_while(|&ib| self.is_stable(ia, ib)).count();
        (n > 0).then(|| self.betas[n - 1])
    }

    /// Spread `max − min` of the stable ceilings over the columns `α ≥ alpha_min`;
    /// zero means the boundary is a horizontal line there. `None` if some such
    /// column has no stable point at the bottom of the grid.
    pub fn transport_ceiling_spread(&self, alpha_min: f64) -> Option<f64> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (ia, a) in self.alphas.iter().enumerate() {
            if *a < alpha_min - 1e-12 {
                continue;
            }
            let c = self.stable_ceiling(ia)?;
            lo = lo.min(c);
            hi = hi.max(c);
        }
        (hi >= lo).then(|| hi - lo)
    }

    /// Largest `α_k` such that every column `α ≤ α_k` is stable for all
    /// `β ≤ beta_max`; `None` if the first column is not.
    pub fn unconditional_alpha(&self, beta_max: f64) -> Option<f64> {
        let col_ok = |ia: usize| {
            self.betas
                .iter()
                .enumerate()
                .filter(|(_, b)| **b <= beta_max + 1e-12)
                .all(|(ib, _)| self.is_stable(ia, ib))
        };
        let n = (0..self.alphas.len()).take_while(|&ia| col_ok(ia)).count();
        (n > 0).then(|| self.alphas[n - 1])
    }

    /// CSV with header `alpha,beta,max_modulus,stable`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "alpha,beta,max_modulus,stable")?;
        for (ia, a) in self.alphas.iter().enumerate() {
            for (ib, b) in self.betas.iter().enumerate() {
                let i = self.index(ia, ib);
                writeln!(w, "{a:.16e},{b:.16e},{:.16e},{}", self.max_modulus[i], u8::from(self.stable[i]))?;
            }
        }
        Ok(())
    }
}

/// Scans the `(α, β)` grid for the IMEX`p`-DG`k` scheme. A point is stable iff
/// `max_ξ ρ(G) ≤ 1 + tol`; failed eigenvalue iterations count as unstable.
pub fn scan_stability(template: &FourierConfig, spec: &GridSpec) -> Result<StabilityGrid> {
    template.validate()?;
    let alphas = spec.alphas();
    let betas = spec.betas();
    let mut cfg = template.clone();
    cfg.xi_samples = spec.xi_samples;
    let points: Vec<(f64, f64)> = alphas.iter().flat_map(|&a| betas.iter().map(move |&b| (a, b))).collect();
    let moduli: Vec<f64> = points
        .par_iter()
        .map(|&(a, b)| max_modulus(&cfg.clone().with_alpha_beta(a, b)).unwrap_or(f64::NAN))
        .collect();
    let stable = moduli.iter().map(|m| *m <= 1.0 + template.tol).collect();
    Ok(StabilityGrid {
        p: template.p,
        k: template.k,
        alphas,
        betas,
        max_modulus: moduli,
        stable,
    })
}

/// Time step used by the IMEX`k`-DG`k` scheme in the numerical experiments.
pub fn cfl_dt(k: usize, epsilon: f64, h: f64, boundary: BoundaryKind) -> Result<f64> {
    check_k(k)?;
    if !(epsilon > 0.0) || !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("cfl_dt needs positive epsilon and h, got {epsilon}, {h}")));
    }
    let cap = 0.75 * h;
    let e2h = epsilon * epsilon * h;
    let dt = match k {
        1 if epsilon <= 0.5 * h => cap,
        1 => cap.min(e2h / (epsilon - 0.5 * h)),
        2 if epsilon <= 0.025 * h => {
            if boundary == BoundaryKind::Inflow {
                0.1 * h
            } else {
                cap
            }
        }
        2 => cap.min((e2h / 10f64.sqrt()) / (epsilon - 0.025 * h)),
        _ if epsilon <= 0.05 * h => cap,
        _ => cap.min(0.1 * e2h / (epsilon - 0.05 * h)),
    };
    Ok(dt)
}

/// Power of `ε` multiplying the `g` term of the discrete energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyScaling {
    /// `ε²|||g|||²`, the quantity the stability proof controls.
    #[default]
    EpsilonSquared,
    /// `ε|||g|||²`.
    Epsilon,
}

/// `E_μ = ‖ρ‖² + ε^q |||g|||² + (1 − μ) Δt |||g|||²_s`.
pub fn energy(
    state: &KineticState,
    mu: f64,
    dt: f64,
    ops: &DGOperatorSet,
    quad: &VelocityQuadrature,
    scaling: EnergyScaling,
) -> f64 {
    let quadratic = |m: &crate::blocks::BlockDiag, x: &[f64]| -> f64 {
        let mx = m.apply(x);
        mx.iter().zip(x).map(|(a, b)| a * b).sum()
    };
    let rho = quadratic(&ops.mass, state.rho.coeffs());
    let (mut g2, mut gs) = (0.0, 0.0);
    for (g, w) in state.g.iter().zip(quad.weights()) {
        g2 += w * quadratic(&ops.mass, g.coeffs());
        gs += w * quadratic(&ops.sigma_s, g.coeffs());
    }
    let eps = ops.epsilon;
    let weight = match scaling {
        EnergyScaling::EpsilonSquared => eps * eps,
        EnergyScaling::Epsilon => eps,
    };
    rho + weight * g2 + (1.0 - mu) * dt * gs
}

/// Outcome of the first-order energy stability theorem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TheoremBound {
    Unconditional,
    MaxDt(f64),
}

impl TheoremBound {
    pub fn allows(&self, dt: f64) -> bool {
        match self {
            TheoremBound::Unconditional => true,
            TheoremBound::MaxDt(b) => dt <= *b,
        }
    }
}

/// `μ`-stability of IMEX1-DG1: unconditional for `ε/(σ_m h) ≤ (1 − μ)/(2v_∞)`,
/// else `Δt ≤ 2ε²h / (2εv_∞ − (1 − μ)σ_m h)`.
pub fn mu_stable_dt(mu: f64, epsilon: f64, sigma_m: f64, h: f64, v_inf: f64) -> TheoremBound {
    if sigma_m > 0.0 && epsilon / (sigma_m * h) <= (1.0 - mu) / (2.0 * v_inf) {
        return TheoremBound::Unconditional;
    }
    TheoremBound::MaxDt(2.0 * epsilon * epsilon * h / (2.0 * epsilon * v_inf - (1.0 - mu) * sigma_m * h))
}

/// The bound optimized over `μ` (attained at `μ = 0`); `σ_m = 0` gives
/// `Δt ≤ εh / v_∞`.
pub fn theorem_stable_dt(epsilon: f64, sigma_m: f64, h: f64, v_inf: f64) -> TheoremBound {
    mu_stable_dt(0.0, epsilon, sigma_m, h, v_inf)
}

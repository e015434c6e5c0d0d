//! Stage loop of the fully discrete IMEX-DG-S scheme.
//!
//! With stage weights from an ARS tableau, stage `i` solves (weak form)
//!
//! ```text
//! M ρ⁽ⁱ⁾   = M ρⁿ − Δt Σ_{j≤i} a_ij L⁽ʲ⁾ + Δt c̃_i G
//! ε² M g_l⁽ⁱ⁾ = ε² M g_lⁿ − εΔt Σ_{j<i} ã_ij B_l⁽ʲ⁾ − Δt Σ_{j≤i} a_ij K_l⁽ʲ⁾
//! ```
//!
//! where `L = D⁺⟨vg⟩ + Σ_a ρ + P ρ − b_ρ`, `K_l = v_l(D⁻ρ + d) + Σ_s g_l + ε²Σ_a g_l`
//! and `B_l = (I − Π) D^up(g; v_l)`, boundary data included.

use crate::blocks::BlockDiag;
use crate::boundary::{boundary_terms, close_loop_values, BoundaryTerms, EdgeTraces, InflowData};
use crate::dg_ops::DGOperatorSet;
use crate::error::{Error, Result};
use crate::field::{Field, KineticState};
use crate::quadrature::VelocityQuadrature;
use crate::schur::SchurStageSolver;
use crate::tableau::ButcherTableau;

/// A configured one-step map `(ρⁿ, gⁿ) ↦ (ρⁿ⁺¹, gⁿ⁺¹)`.
#[derive(Debug, Clone)]
pub struct ImexStepper {
    ops: DGOperatorSet,
    quad: VelocityQuadrature,
    tableau: ButcherTableau,
    dt: f64,
    inflow: Option<InflowData>,
    schur: SchurStageSolver,
    /// `Σ_s + ε² Σ_a`.
    sigma_g: BlockDiag,
}

/// Per-stage quantities reused by later stages.
#[derive(Default)]
struct StageData {
    /// `L` (ρ equation implicit part).
    l_rho: Option<Vec<f64>>,
    /// `K_l`.
    k: Option<Vec<Vec<f64>>>,
    /// `B_l`.
    b: Option<Vec<Vec<f64>>>,
}

impl ImexStepper {
    pub fn new(
        ops: DGOperatorSet,
        quad: VelocityQuadrature,
        tableau: ButcherTableau,
        dt: f64,
        inflow: Option<InflowData>,
    ) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        if ops.is_periodic() == inflow.is_some() {
            return Err(Error::InvalidParameter(
                "inflow data must be given exactly when the mesh has inflow boundaries".into(),
            ));
        }
        if !tableau.has_constant_diagonal() {
            return Err(Error::InvalidParameter("tableau needs a constant implicit diagonal".into()));
        }
        let eps = ops.epsilon;
        let penalty = inflow.as_ref().map_or(0.0, |f| f.penalty);
        let schur = SchurStageSolver::prepare(tableau.implicit_diagonal() * dt, eps, &ops, &quad, penalty)?;
        let sigma_g = ops.sigma_s.add_scaled(eps * eps, &ops.sigma_a);
        Ok(ImexStepper {
            ops,
            quad,
            tableau,
            dt,
            inflow,
            schur,
            sigma_g,
        })
    }

    pub fn ops(&self) -> &DGOperatorSet {
        &self.ops
    }

    pub fn quadrature(&self) -> &VelocityQuadrature {
        &self.quad
    }

    pub fn tableau(&self) -> &ButcherTableau {
        &self.tableau
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn schur(&self) -> &SchurStageSolver {
        &self.schur
    }

    fn penalty(&self) -> f64 {
        self.inflow.as_ref().map_or(0.0, |f| f.penalty)
    }

    /// Boundary data built from the given stage values at time `t`.
    fn terms(&self, rho: &[f64], g: &[Vec<f64>], t: f64) -> Result<Option<BoundaryTerms>> {
        let Some(inflow) = &self.inflow else {
            return Ok(None);
        };
        let refs: Vec<&[f64]> = g.iter().map(|v| v.as_slice()).collect();
        let traces = EdgeTraces::from_coeffs(rho, &refs, self.ops.dofs());
        let values = close_loop_values(&traces, inflow, self.ops.epsilon, &self.quad, t)?;
        Ok(Some(boundary_terms(&values, &self.ops, &self.quad, self.penalty())))
    }

    /// `D⁻ρ + d`.
    fn dminus_rho(&self, rho: &[f64], terms: Option<&BoundaryTerms>) -> Vec<f64> {
        let mut w = self.ops.dminus.apply(rho);
        if let Some(t) = terms {
            w.iter_mut().zip(&t.dminus).for_each(|(a, b)| *a += b);
        }
        w
    }

    fn l_rho(&self, rho: &[f64], g: &[Vec<f64>], terms: Option<&BoundaryTerms>) -> Vec<f64> {
        let n = rho.len();
        let mut j = vec![0.0; n];
        for (l, gl) in g.iter().enumerate() {
            let c = self.quad.weight(l) * self.quad.node(l);
            j.iter_mut().zip(gl).for_each(|(a, b)| *a += c * b);
        }
        let mut out = self.ops.dplus.apply(&j);
        self.ops.sigma_a.apply_add(rho, &mut out);
        if let Some(t) = terms {
            let pen = self.penalty();
            let s = self.ops.dofs();
            // implicit part c_R ρ⁻ e_R and the data c_R ρ_R e_R
            let trace: f64 = rho[n - s..].iter().sum();
            for k in n - s..n {
                out[k] += pen * trace;
            }
            out.iter_mut().zip(&t.rho_data).for_each(|(a, b)| *a -= b);
        }
        out
    }

    fn k_terms(&self, rho: &[f64], g: &[Vec<f64>], terms: Option<&BoundaryTerms>) -> Vec<Vec<f64>> {
        let dr = self.dminus_rho(rho, terms);
        g.iter()
            .enumerate()
            .map(|(l, gl)| {
                let v = self.quad.node(l);
                let mut k: Vec<f64> = dr.iter().map(|a| v * a).collect();
                self.sigma_g.apply_add(gl, &mut k);
                k
            })
            .collect()
    }

    fn b_terms(&self, g: &[Vec<f64>], terms: Option<&BoundaryTerms>) -> Vec<Vec<f64>> {
        let n = self.ops.dim();
        let mut avg = vec![0.0; n];
        let mut out: Vec<Vec<f64>> = g
            .iter()
            .enumerate()
            .map(|(l, gl)| {
                let v = self.quad.node(l);
                let mut w = vec![0.0; n];
                self.ops.upwind_weak_add(gl, v, &mut w);
                if let Some(t) = terms {
                    w.iter_mut().zip(&t.upwind[l]).for_each(|(a, b)| *a += b);
                }
                let om = self.quad.weight(l);
                avg.iter_mut().zip(&w).for_each(|(a, b)| *a += om * b);
                w
            })
            .collect();
        for w in &mut out {
            w.iter_mut().zip(&avg).for_each(|(a, b)| *a -= b);
        }
        out
    }

    /// Implicit stage terms read off the solved stage equations:
    /// `a_ii Δt K = r_g − ε² M g + a_ii Δt v d` and `a_ii Δt L = r_ρ − M ρ − a_ii Δt b_ρ`.
    /// This matches evaluating `K` and `L` directly up to the solver residual.
    #[allow(clippy::too_many_arguments)]
    fn recover_implicit(
        &self,
        i: usize,
        rho: &[f64],
        g: &[Vec<f64>],
        mut r_rho: Vec<f64>,
        mut r_g: Vec<Vec<f64>>,
        terms: Option<&BoundaryTerms>,
        out: &mut StageData,
    ) {
        let c = 1.0 / (self.tableau.a_imp[i][i] * self.dt);
        let mass = &self.ops.mass_diag;
        let e2 = self.ops.epsilon * self.ops.epsilon;
        for ((r, x), m) in r_rho.iter_mut().zip(rho).zip(mass) {
            *r = c * (*r - m * x);
        }
        for ((rl, gl), v) in r_g.iter_mut().zip(g).zip(self.quad.nodes()) {
            for ((r, x), m) in rl.iter_mut().zip(gl).zip(mass) {
                *r = c * (*r - e2 * m * x);
            }
            if let Some(tm) = terms {
                rl.iter_mut().zip(&tm.dminus).for_each(|(r, d)| *r += v * d);
            }
        }
        if let Some(tm) = terms {
            r_rho.iter_mut().zip(&tm.rho_data).for_each(|(r, b)| *r -= b);
        }
        out.l_rho = Some(r_rho);
        out.k = Some(r_g);
    }

    /// Advances `state` by one time step.
    pub fn step(&self, state: &KineticState) -> Result<KineticState> {
        let t = &self.tableau;
        let s = t.stages;
        let dt = self.dt;
        let eps = self.ops.epsilon;
        let nv = self.quad.len();
        if state.ordinates() != nv {
            return Err(Error::DimensionMismatch {
                expected: nv,
                found: state.ordinates(),
            });
        }
        let mass = &self.ops.mass_diag;
        let m_rho: Vec<f64> = state.rho.coeffs().iter().zip(mass).map(|(a, m)| a * m).collect();
        let m_g: Vec<Vec<f64>> = state
            .g
            .iter()
            .map(|g| g.coeffs().iter().zip(mass).map(|(a, m)| eps * eps * a * m).collect())
            .collect();

        let mut rho_stage: Vec<Vec<f64>> = vec![state.rho.coeffs().to_vec()];
        let mut g_stage: Vec<Vec<Vec<f64>>> = vec![state.g.iter().map(|g| g.coeffs().to_vec()).collect()];
        let mut data: Vec<StageData> = Vec::with_capacity(s);
        let terms0 = self.terms(&rho_stage[0], &g_stage[0], state.time)?;

        for i in 0..s {
            if i > 0 {
                let a_ii = t.a_imp[i][i];
                let terms_i = self.terms(&rho_stage[i - 1], &g_stage[i - 1], state.time + t.c_imp[i] * dt)?;
                let mut r_rho = m_rho.clone();
                let cs = dt * t.c_exp[i];
                r_rho.iter_mut().zip(&self.ops.source).for_each(|(r, gsrc)| *r += cs * gsrc);
                if let Some(tm) = &terms_i {
                    r_rho.iter_mut().zip(&tm.rho_data).for_each(|(r, b)| *r += dt * a_ii * b);
                }
                let mut r_g = m_g.clone();
                for (j, dj) in data.iter().enumerate() {
                    let (ae, ai) = (t.a_exp[i][j], t.a_imp[i][j]);
                    if ai != 0.0 {
                        let c = dt * ai;
                        let l = dj.l_rho.as_ref().expect("implicit stage data");
                        r_rho.iter_mut().zip(l).for_each(|(r, v)| *r -= c * v);
                        for (rl, kl) in r_g.iter_mut().zip(dj.k.as_ref().expect("implicit stage data")) {
                            rl.iter_mut().zip(kl).for_each(|(r, v)| *r -= c * v);
                        }
                    }
                    if ae != 0.0 {
                        let c = eps * dt * ae;
                        for (rl, bl) in r_g.iter_mut().zip(dj.b.as_ref().expect("explicit stage data")) {
                            rl.iter_mut().zip(bl).for_each(|(r, v)| *r -= c * v);
                        }
                    }
                }
                if let Some(tm) = &terms_i {
                    for (l, rl) in r_g.iter_mut().enumerate() {
                        let c = dt * a_ii * self.quad.node(l);
                        rl.iter_mut().zip(&tm.dminus).for_each(|(r, v)| *r -= c * v);
                    }
                }
                let (rho, g) = self
                    .schur
                    .solve_weak(&r_rho, &r_g)
                    .map_err(|e| Error::Stage { stage: i + 1, source: Box::new(e) })?;
                let need_imp = (i + 1..s).any(|r| t.a_imp[r][i] != 0.0);
                let need_exp = (i + 1..s).any(|r| t.a_exp[r][i] != 0.0);
                // The explicit operator of a solved stage uses that stage's own
                // boundary values. Near an inflow edge εg_L = f_L − ρ_L is O(1), so
                // lagging it by a stage leaves an explicit diffusion flux in the
                // end cells that blows up in the diffusive limit for p ≥ 2.
                let b = if need_exp {
                    let own = self.terms(&rho, &g, state.time + t.c_exp[i] * dt)?;
                    Some(self.b_terms(&g, own.as_ref()))
                } else {
                    None
                };
                data.push(StageData {
                    b,
                    ..Default::default()
                });
                if need_imp {
                    self.recover_implicit(i, &rho, &g, r_rho, r_g, terms_i.as_ref(), &mut data[i]);
                }
                rho_stage.push(rho);
                g_stage.push(g);
                continue;
            }
            if s == 1 {
                break;
            }
            // explicit first stage; its implicit terms only matter for tableaus
            // whose first implicit column is nonzero
            let need_imp = (1..s).any(|r| t.a_imp[r][0] != 0.0);
            let tm = terms0.as_ref();
            data.push(StageData {
                l_rho: need_imp.then(|| self.l_rho(&rho_stage[0], &g_stage[0], tm)),
                k: need_imp.then(|| self.k_terms(&rho_stage[0], &g_stage[0], tm)),
                b: Some(self.b_terms(&g_stage[0], tm)),
            });
        }

        let d = self.ops.dofs();
        let rho = Field::from_coeffs(d, rho_stage.pop().expect("final stage"))?;
        let g = g_stage
            .pop()
            .expect("final stage")
            .into_iter()
            .map(|v| Field::from_coeffs(d, v))
            .collect::<Result<Vec<_>>>()?;
        let next = KineticState {
            rho,
            g,
            time: state.time + dt,
        };
        Ok(next)
    }

    /// Runs `steps` steps, failing on the first non-finite state.
    pub fn run(&self, state: &KineticState, steps: usize) -> Result<KineticState> {
        let mut s = state.clone();
        for n in 0..steps {
            s = self.step(&s)?;
            if !s.is_finite() {
                return Err(Error::NonFinite { step: n + 1 });
            }
        }
        Ok(s)
    }

    /// Steps until `t_end`, shortening the last step if needed.
    pub fn run_to(&self, state: &KineticState, t_end: f64) -> Result<KineticState> {
        let remaining = t_end - state.time;
        if remaining <= 0.0 {
            return Ok(state.clone());
        }
        let steps = (remaining / self.dt - 1e-9).ceil().max(1.0) as usize;
        let exact = (remaining / self.dt - steps as f64).abs() < 1e-9;
        if exact {
            return self.run(state, steps);
        }
        let s = self.run(state, steps - 1)?;
        let last = t_end - s.time;
        let short = ImexStepper::new(self.ops.clone(), self.quad.clone(), self.tableau.clone(), last, self.inflow.clone())?;
        let out = short.step(&s)?;
        if !out.is_finite() {
            return Err(Error::NonFinite { step: steps });
        }
        Ok(out)
    }

    /// `max_l ‖M⁻¹(Σ_s g_l) + v_l M⁻¹(D⁻ρ + d)‖ / ‖M⁻¹(D⁻ρ + d)‖` in L².
    pub fn local_equilibrium_residual(&self, state: &KineticState) -> Result<f64> {
        let g: Vec<Vec<f64>> = state.g.iter().map(|f| f.coeffs().to_vec()).collect();
        let terms = self.terms(state.rho.coeffs(), &g, state.time)?;
        let dr = self.ops.strong(self.dminus_rho(state.rho.coeffs(), terms.as_ref()));
        let norm = dr.l2_norm(&self.ops.mesh);
        let mut worst = 0.0f64;
        for (l, gl) in g.iter().enumerate() {
            let mut r = self.ops.strong(self.ops.sigma_s.apply(gl));
            r.axpy(self.quad.node(l), &dr);
            worst = worst.max(r.l2_norm(&self.ops.mesh));
        }
        Ok(if norm > 0.0 { worst / norm } else { worst })
    }
}

/// One step of the scheme; convenience wrapper around [`ImexStepper`].
pub fn step(
    state: &KineticState,
    dt: f64,
    tableau: &ButcherTableau,
    ops: &DGOperatorSet,
    quad: &VelocityQuadrature,
    inflow: Option<&InflowData>,
) -> Result<KineticState> {
    ImexStepper::new(ops.clone(), quad.clone(), tableau.clone(), dt, inflow.cloned())?.step(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg_ops::assemble_operators;
    use crate::field::{project_initial, DGDegree};
    use crate::material::MaterialCoefficients;
    use crate::mesh::{BoundaryKind, Mesh1D};
    use crate::schur::full_system_solve;
    use std::f64::consts::PI;

    fn periodic_ops(n: usize, deg: usize, eps: f64) -> DGOperatorSet {
        let mesh = Mesh1D::uniform(0.0, 2.0 * PI, n, BoundaryKind::Periodic).unwrap();
        let coef = MaterialCoefficients::constant(1.0, 0.0, eps).unwrap();
        assemble_operators(&mesh, DGDegree::new(deg).unwrap(), &coef).unwrap()
    }

    #[test]
    fn zero_state_stays_zero() {
        let ops = periodic_ops(6, 2, 0.1);
        let quad = VelocityQuadrature::slab16();
        for p in 1..=3 {
            let st = ImexStepper::new(ops.clone(), quad.clone(), ButcherTableau::for_order(p).unwrap(), 0.1, None).unwrap();
            let z = KineticState::zeros(6, 3, 16);
            let next = st.step(&z).unwrap();
            assert_eq!(next.rho, z.rho);
            assert_eq!(next.g, z.g);
        }
    }

    #[test]
    fn constant_density_is_steady() {
        let ops = periodic_ops(5, 1, 0.5);
        let quad = VelocityQuadrature::telegraph();
        for p in 1..=3 {
            for dt in [1e-3, 0.5, 10.0] {
                let st = ImexStepper::new(ops.clone(), quad.clone(), ButcherTableau::for_order(p).unwrap(), dt, None).unwrap();
                let s0 = project_initial(|_| 3.0, |_, _| 0.0, &ops.mesh, ops.degree, &quad);
                let s1 = st.step(&s0).unwrap();
                for (a, b) in s1.rho.coeffs().iter().zip(s0.rho.coeffs()) {
                    assert!((a - b).abs() < 1e-13);
                }
                assert!(s1.g.iter().all(|g| g.max_abs() < 1e-13));
            }
        }
    }

    #[test]
    fn imex1_step_matches_dense_solve() {
        let ops = periodic_ops(4, 0, 1.0);
        let quad = VelocityQuadrature::slab16();
        let dt = 0.2;
        let s0 = project_initial(f64::sin, |x, v| -v * x.cos(), &ops.mesh, ops.degree, &quad);
        let st = ImexStepper::new(ops.clone(), quad.clone(), ButcherTableau::imex1(), dt, None).unwrap();
        let s1 = st.step(&s0).unwrap();
        // first-order scheme assembled directly: explicit transport from gⁿ
        let m = &ops.mass_diag;
        let r_rho: Vec<f64> = s0.rho.coeffs().iter().zip(m).map(|(a, b)| a * b).collect();
        let refs: Vec<&[f64]> = s0.g.iter().map(|g| g.coeffs()).collect();
        let b = crate::dg_ops::b_hv_weak_all(&refs, &ops, &quad);
        let r_g: Vec<Vec<f64>> = (0..16)
            .map(|l| (0..4).map(|k| s0.g[l].coeffs()[k] * m[k] - dt * b[l][k]).collect())
            .collect();
        let (rho, g) = full_system_solve(&r_rho, &r_g, dt, 1.0, &ops, &quad, 0.0).unwrap();
        let scale = rho.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in s1.rho.coeffs().iter().zip(&rho) {
            assert!((a - b).abs() < 1e-11 * scale);
        }
        for (gl, gd) in s1.g.iter().zip(&g) {
            for (a, b) in gl.coeffs().iter().zip(gd) {
                assert!((a - b).abs() < 1e-11 * scale);
            }
        }
    }

    /// One ARS step assembled stage by stage with the dense coupled solve and
    /// implicit terms evaluated from their definitions.
    fn dense_ars_step(s0: &KineticState, dt: f64, t: &ButcherTableau, ops: &DGOperatorSet, quad: &VelocityQuadrature) -> (Vec<f64>, Vec<Vec<f64>>) {
        let eps = ops.epsilon;
        let m = &ops.mass_diag;
        let nv = quad.len();
        let mut rho = vec![s0.rho.coeffs().to_vec()];
        let mut g = vec![s0.g.iter().map(|f| f.coeffs().to_vec()).collect::<Vec<_>>()];
        let mut ls: Vec<Vec<f64>> = Vec::new();
        let mut ks: Vec<Vec<Vec<f64>>> = Vec::new();
        let mut bs: Vec<Vec<Vec<f64>>> = Vec::new();
        for i in 0..t.stages {
            if i > 0 {
                let mut r_rho: Vec<f64> = rho[0].iter().zip(m).map(|(a, b)| a * b).collect();
                let mut r_g: Vec<Vec<f64>> = g[0].iter().map(|gl| gl.iter().zip(m).map(|(a, b)| eps * eps * a * b).collect()).collect();
                for j in 0..i {
                    for k in 0..r_rho.len() {
                        r_rho[k] -= dt * t.a_imp[i][j] * ls[j][k];
                        for l in 0..nv {
                            r_g[l][k] -= dt * t.a_imp[i][j] * ks[j][l][k] + eps * dt * t.a_exp[i][j] * bs[j][l][k];
                        }
                    }
                }
                let (r, gg) = full_system_solve(&r_rho, &r_g, t.a_imp[i][i] * dt, eps, ops, quad, 0.0).unwrap();
                rho.push(r);
                g.push(gg);
            }
            let (ri, gi) = (&rho[i], &g[i]);
            let refs: Vec<&[f64]> = gi.iter().map(|v| v.as_slice()).collect();
            bs.push(crate::dg_ops::b_hv_weak_all(&refs, ops, quad));
            let mut jv = vec![0.0; ri.len()];
            for l in 0..nv {
                for k in 0..ri.len() {
                    jv[k] += quad.weight(l) * quad.node(l) * gi[l][k];
                }
            }
            let mut li = ops.dplus.apply(&jv);
            ops.sigma_a.apply_add(ri, &mut li);
            ls.push(li);
            let dr = ops.dminus.apply(ri);
            let sg = ops.sigma_s.add_scaled(eps * eps, &ops.sigma_a);
            ks.push(
                (0..nv)
                    .map(|l| {
                        let mut k: Vec<f64> = dr.iter().map(|a| quad.node(l) * a).collect();
                        sg.apply_add(&gi[l], &mut k);
                        k
                    })
                    .collect(),
            );
        }
        (rho.pop().unwrap(), g.pop().unwrap())
    }

    #[test]
    fn multistage_steps_match_dense_stage_solves() {
        let mesh = Mesh1D::uniform(0.0, 2.0 * PI, 5, BoundaryKind::Periodic).unwrap();
        let coef = MaterialCoefficients::new(|x| 1.0 + 0.5 * x.sin(), |x| 0.2 + 0.1 * x.cos(), 0.3).unwrap();
        let ops = assemble_operators(&mesh, DGDegree::new(1).unwrap(), &coef).unwrap();
        let quad = VelocityQuadrature::slab(4);
        let s0 = project_initial(|x| 1.0 + x.sin(), |x, v| v * x.cos(), &ops.mesh, ops.degree, &quad);
        for tab in [ButcherTableau::ars222(), ButcherTableau::ars443()] {
            let dt = 0.05;
            let st = ImexStepper::new(ops.clone(), quad.clone(), tab.clone(), dt, None).unwrap();
            let s1 = st.step(&s0).unwrap();
            let (rho, g) = dense_ars_step(&s0, dt, &tab, &ops, &quad);
            for (a, b) in s1.rho.coeffs().iter().zip(&rho) {
                assert!((a - b).abs() < 1e-11, "{}: {a} vs {b}", tab.name);
            }
            for (gl, gd) in s1.g.iter().zip(&g) {
                for (a, b) in gl.coeffs().iter().zip(gd) {
                    assert!((a - b).abs() < 1e-11, "{}: {a} vs {b}", tab.name);
                }
            }
        }
    }

    #[test]
    fn mismatched_boundary_setup_is_rejected() {
        let ops = periodic_ops(4, 0, 1.0);
        let quad = VelocityQuadrature::telegraph();
        let r = ImexStepper::new(ops, quad, ButcherTableau::imex1(), 0.1, Some(InflowData::isotropic(1.0, 0.0)));
        assert!(r.is_err());
    }
}

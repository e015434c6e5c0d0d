//! The work behind each subcommand, returning data plus its CSV rendering.

use crate::config::RunConfig;
use crate::csv::{num, Table};
use crate::references::{self, ReferenceSpec};
use crate::CliError;
use kinetic_dg::basis::GaussRule;
use kinetic_dg::field::KineticState;
use kinetic_dg::mesh::Mesh1D;
use kinetic_dg::quadrature::VelocityQuadrature;
use kinetic_dg::reference::{Profile, ReferenceCache};
use kinetic_dg::stability::{
    energy, scan_stability, theorem_stable_dt, EnergyScaling, FourierConfig, GridSpec, StabilityGrid, TheoremBound,
};

/// Gauss points used to sample every coarse cell in the convergence tables.
pub const CONVERGENCE_SAMPLES: usize = 10;

/// Final DG state together with its mesh.
#[derive(Debug, Clone)]
pub struct Solution {
    pub mesh: Mesh1D,
    pub quad: VelocityQuadrature,
    pub state: KineticState,
    pub dt: f64,
}

/// One output point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: f64,
    pub rho: f64,
    /// `⟨vg⟩`.
    pub j: f64,
}

/// `(cell, reference coordinate, x)` at `n` Gauss points per cell.
fn gauss_points(mesh: &Mesh1D, n: usize) -> Vec<(usize, f64, f64)> {
    let rule = GaussRule::legendre(n);
    (0..mesh.cells())
        .flat_map(|i| rule.nodes.iter().map(move |&xi| (i, xi, mesh.map(i, xi))))
        .collect()
}

impl Solution {
    /// `ρ` and `j` at the Gauss points of every cell (as many as unknowns per cell).
    pub fn samples(&self) -> Vec<Sample> {
        let j = self.state.current(&self.quad);
        gauss_points(&self.mesh, self.state.rho.dofs())
            .into_iter()
            .map(|(i, xi, x)| Sample {
                x,
                rho: self.state.rho.eval_ref(i, xi),
                j: j.eval_ref(i, xi),
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut t = Table::new(&["x", "rho", "j"]);
        for s in self.samples() {
            t.row([num(s.x), num(s.rho), num(s.j)]);
        }
        t.into_string()
    }

    /// Largest `|ρ − ρ_ref|` and `|j − j_ref|` over the sample points kept by
    /// `keep`, interpolating the reference linearly. The current error is `NaN`
    /// when the reference has no current.
    pub fn distance_to(&self, reference: &Profile, keep: impl Fn(f64) -> bool) -> (f64, f64) {
        let mut e_rho = 0.0f64;
        let mut e_j = 0.0f64;
        for s in self.samples().into_iter().filter(|s| keep(s.x)) {
            e_rho = e_rho.max((s.rho - reference.interpolate(&reference.rho, s.x)).abs());
            if let Some(j) = &reference.j {
                e_j = e_j.max((s.j - reference.interpolate(j, s.x)).abs());
            }
        }
        (e_rho, if reference.j.is_some() { e_j } else { f64::NAN })
    }
}

/// Runs `cfg` to its final time.
pub fn solve(cfg: &RunConfig) -> Result<Solution, CliError> {
    let run = cfg.prepare()?;
    let state = run.finish()?;
    Ok(Solution {
        dt: run.dt(),
        mesh: run.mesh,
        quad: run.quad,
        state,
    })
}

/// `‖ρ_h − ρ_{h/2}‖_∞` and `max_l ‖g_{l,h} − g_{l,h/2}‖_∞`, sampled at
/// [`CONVERGENCE_SAMPLES`] Gauss points of each coarse cell.
///
/// Piecewise-constant solutions are compared through cell averages instead:
/// pointwise, a constant per cell differs from its refinement by about
/// `h|ρ'|/4`, which would hide the scheme error entirely.
pub fn richardson_errors(coarse: &Solution, fine: &Solution) -> (f64, f64) {
    if coarse.state.rho.dofs() == 1 {
        return average_errors(coarse, fine);
    }
    let mut e_rho = 0.0f64;
    let mut e_g = 0.0f64;
    for (i, xi, x) in gauss_points(&coarse.mesh, CONVERGENCE_SAMPLES) {
        let f = fine.mesh.locate(x).expect("sample inside the fine mesh");
        let fxi = (2.0 * (x - fine.mesh.center(f)) / fine.mesh.width(f)).clamp(-1.0, 1.0);
        e_rho = e_rho.max((coarse.state.rho.eval_ref(i, xi) - fine.state.rho.eval_ref(f, fxi)).abs());
        for (gc, gf) in coarse.state.g.iter().zip(&fine.state.g) {
            e_g = e_g.max((gc.eval_ref(i, xi) - gf.eval_ref(f, fxi)).abs());
        }
    }
    (e_rho, e_g)
}

/// Coarse cell averages against the width-weighted mean of the fine cells
/// whose centres they contain.
fn average_errors(coarse: &Solution, fine: &Solution) -> (f64, f64) {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); coarse.mesh.cells()];
    for f in 0..fine.mesh.cells() {
        let c = coarse.mesh.locate(fine.mesh.center(f)).expect("nested meshes");
        members[c].push(f);
    }
    let mean = |field: &kinetic_dg::field::Field, cells: &[usize]| {
        let w: f64 = cells.iter().map(|&f| fine.mesh.width(f)).sum();
        cells.iter().map(|&f| fine.mesh.width(f) * field.cell(f)[0]).sum::<f64>() / w
    };
    let mut e_rho = 0.0f64;
    let mut e_g = 0.0f64;
    for (i, cells) in members.iter().enumerate() {
        e_rho = e_rho.max((coarse.state.rho.cell(i)[0] - mean(&fine.state.rho, cells)).abs());
        for (gc, gf) in coarse.state.g.iter().zip(&fine.state.g) {
            e_g = e_g.max((gc.cell(i)[0] - mean(gf, cells)).abs());
        }
    }
    (e_rho, e_g)
}

/// One line of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub e_rho: f64,
    /// `log₂(E_{N/2}/E_N)`; `NaN` on the first row.
    pub order_rho: f64,
    pub e_g: f64,
    pub order_g: f64,
}

/// Richardson table over the uniform meshes `levels` (each twice the previous).
/// The finest level only serves as the partner of the one before it.
pub fn converge(cfg: &RunConfig, levels: &[usize]) -> Result<Vec<ConvergenceRow>, CliError> {
    if levels.len() < 2 {
        return Err(CliError::Config("a convergence study needs at least two levels".into()));
    }
    if levels.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(CliError::Config(format!("levels must double, got {levels:?}")));
    }
    if !cfg.mesh.segments.is_empty() {
        return Err(CliError::Config("convergence studies need a uniform mesh".into()));
    }
    let runs = levels
        .iter()
        .map(|n| solve(&cfg.with_overrides(&[format!("mesh.cells={n}")])?))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len() - 1);
    for (w, &n) in runs.windows(2).zip(levels) {
        let (e_rho, e_g) = richardson_errors(&w[0], &w[1]);
        let order = |prev: f64, cur: f64| (prev / cur).log2();
        let (order_rho, order_g) = match rows.last() {
            Some(p) => (order(p.e_rho, e_rho), order(p.e_g, e_g)),
            None => (f64::NAN, f64::NAN),
        };
        rows.push(ConvergenceRow {
            cells: n,
            e_rho,
            order_rho,
            e_g,
            order_g,
        });
    }
    Ok(rows)
}

/// Zero errors give `0/0`, reported as `NaN` like the missing first order.
pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut t = Table::new(&["N", "Erho", "order_rho", "Eg", "order_g"]);
    for r in rows {
        t.row([r.cells.to_string(), num(r.e_rho), num(r.order_rho), num(r.e_g), num(r.order_g)]);
    }
    t.into_string()
}

/// Scans the stability plane of IMEX`p`-DG`k`.
pub fn stability_map(p: usize, k: usize, spec: &GridSpec) -> Result<StabilityGrid, CliError> {
    if !(spec.step > 0.0) || spec.xi_samples == 0 {
        return Err(CliError::Config(format!(
            "grid spacing and wave-number count must be positive, got {} and {}",
            spec.step, spec.xi_samples
        )));
    }
    let template = FourierConfig::new(p, k).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(scan_stability(&template, spec)?)
}

pub fn stability_csv(grid: &StabilityGrid) -> String {
    let mut out = Vec::new();
    grid.write_csv(&mut out).expect("writing to memory");
    String::from_utf8(out).expect("CSV is ASCII")
}

/// Energy history of a run.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub dt: f64,
    pub bound: TheoremBound,
    /// `(step, time, E)` starting with the initial state.
    pub history: Vec<(usize, f64, f64)>,
}

impl EnergyReport {
    /// True if `E` never grows by more than `slack` relative.
    pub fn non_increasing(&self, slack: f64) -> bool {
        self.history.windows(2).all(|w| w[1].2 <= w[0].2 * (1.0 + slack))
    }

    pub fn to_csv(&self) -> String {
        let mut t = Table::new(&["step", "time", "energy"]);
        for &(n, time, e) in &self.history {
            t.row([n.to_string(), num(time), num(e)]);
        }
        t.into_string()
    }
}

/// Tracks `E = ‖ρ‖² + ε²|||g|||² + Δt|||g|||²_s` over `steps` steps (default:
/// up to the final time). With `theorem_fraction`, the step is that fraction
/// of the first-order stability bound, when the bound is finite.
pub fn energy_check(cfg: &RunConfig, theorem_fraction: Option<f64>, steps: Option<usize>) -> Result<EnergyReport, CliError> {
    let mut run = cfg.prepare()?;
    let ops = run.stepper.ops();
    let bound = theorem_stable_dt(ops.epsilon, ops.sigma_m, run.mesh.h_min(), run.quad.v_inf());
    if let (Some(f), TheoremBound::MaxDt(b)) = (theorem_fraction, bound) {
        let dt = f * b;
        if !(dt > 0.0) {
            return Err(CliError::Config(format!("theorem fraction {f} gives no usable step")));
        }
        let sets = [format!("time.dt={dt:e}")];
        run = cfg.with_overrides(&sets)?.prepare()?;
    }
    let dt = run.dt();
    let steps = steps.unwrap_or_else(|| (run.t_end / dt - 1e-9).ceil().max(0.0) as usize);
    let e = |s: &KineticState| energy(s, 0.0, dt, run.stepper.ops(), &run.quad, EnergyScaling::EpsilonSquared);
    let mut state = run.state.clone();
    let mut history = vec![(0, state.time, e(&state))];
    for n in 1..=steps {
        state = run.stepper.step(&state)?;
        if !state.is_finite() {
            return Err(kinetic_dg::Error::NonFinite { step: n }.into());
        }
        history.push((n, state.time, e(&state)));
    }
    Ok(EnergyReport { dt, bound, history })
}

/// Local-equilibrium residuals and the distance to the diffusion limit.
#[derive(Debug, Clone)]
pub struct ApReport {
    /// `(step, time, residual)`.
    pub residuals: Vec<(usize, f64, f64)>,
    /// `‖ρ − ρ_diffusion‖_∞` at the final time.
    pub rho_vs_limit: f64,
    pub solution: Solution,
}

impl ApReport {
    pub fn to_csv(&self) -> String {
        let mut t = Table::new(&["step", "time", "residual"]);
        for &(n, time, r) in &self.residuals {
            t.row([n.to_string(), num(time), num(r)]);
        }
        t.into_string()
    }
}

/// Default limit reference: diffusion solver on a grid 50 times finer than
/// the smallest cell.
pub fn default_limit_reference(cfg: &RunConfig) -> Result<ReferenceSpec, CliError> {
    Ok(ReferenceSpec::diffusion(cfg.mesh()?.h_min() / 50.0))
}

/// Steps `cfg` to its final time (at least one step), recording the residual
/// of `σ_s g_l = −v_l ∂_x ρ` after every step, then compares `ρ` with the
/// diffusion limit.
pub fn ap_check(cfg: &RunConfig, limit: ReferenceSpec, cache: Option<&ReferenceCache>) -> Result<ApReport, CliError> {
    let run = cfg.prepare()?;
    let dt = run.dt();
    let steps = ((run.t_end / dt - 1e-9).ceil() as usize).max(1);
    let mut state = run.state.clone();
    let mut residuals = Vec::with_capacity(steps);
    for n in 1..=steps {
        state = run.stepper.step(&state)?;
        residuals.push((n, state.time, run.stepper.local_equilibrium_residual(&state)?));
    }
    let mut at_final = cfg.clone();
    at_final.time.t_end = state.time;
    let reference = match cache {
        Some(c) => references::cached(&at_final, limit, c)?,
        None => references::compute(&at_final, limit)?,
    };
    let solution = Solution {
        mesh: run.mesh,
        quad: run.quad,
        state,
        dt,
    };
    let (rho_vs_limit, _) = solution.distance_to(&reference, |_| true);
    Ok(ApReport {
        residuals,
        rho_vs_limit,
        solution,
    })
}

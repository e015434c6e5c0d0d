//! Fine-grid finite-difference references for a run configuration.

use crate::config::{BoundaryChoice, DtPolicy, DtRule, RunConfig};
use crate::CliError;
use kinetic_dg::reference::{
    diffusion_fd, kinetic_fd, DiffusionBoundary, FdBoundary, FdGrid, Profile, ReferenceCache,
};

/// Which reference solver, on what grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceSpec {
    /// Upwind scheme for the kinetic equation.
    Kinetic { dx: f64, dt: f64 },
    /// Central scheme for the diffusion limit.
    Diffusion { dx: f64, dt: f64 },
}

impl ReferenceSpec {
    /// Kinetic reference with `Δt = c ε Δx`.
    pub fn kinetic(dx: f64, courant: f64, epsilon: f64) -> Self {
        ReferenceSpec::Kinetic { dx, dt: courant * epsilon * dx }
    }

    /// Diffusion reference with `Δt = Δx²/4`.
    pub fn diffusion(dx: f64) -> Self {
        ReferenceSpec::Diffusion { dx, dt: 0.25 * dx * dx }
    }
}

/// The reference used for each preset. Example 2 uses a coarser grid than the
/// published one so it runs in seconds.
pub fn preset_reference(name: &str) -> Option<ReferenceSpec> {
    Some(match name {
        "example2" => ReferenceSpec::kinetic(11.0 / 8000.0, 0.5, 1.0),
        "example3" => ReferenceSpec::kinetic(1.0 / 4000.0, 0.1, 1e-2),
        "example4" => ReferenceSpec::diffusion(1.0 / 2000.0),
        "example4-kinetic" => ReferenceSpec::kinetic(1.0 / 2000.0, 0.5, 1.0),
        "example5" => ReferenceSpec::kinetic(1.0 / 1000.0, 0.05, 0.7),
        "example5-diffusive" => ReferenceSpec::diffusion(1.0 / 1000.0),
        _ => return None,
    })
}

/// Solves the reference problem described by `cfg` up to its final time.
pub fn compute(cfg: &RunConfig, spec: ReferenceSpec) -> Result<Profile, CliError> {
    let [a, b] = cfg.mesh.domain;
    let coeff = cfg.coefficients()?;
    let quad = cfg.quadrature();
    let t_end = cfg.time.t_end;
    let init = cfg.initial.clone();
    match spec {
        ReferenceSpec::Kinetic { dx, dt } => {
            let grid = FdGrid::with_spacing(a, b, dx, dt, t_end)?;
            let boundary = match cfg.inflow()? {
                Some(data) => FdBoundary::Inflow(data),
                None => FdBoundary::Periodic,
            };
            let eps = cfg.material.epsilon;
            let sol = kinetic_fd(&coeff, &quad, |x, v| init.rho(x) + eps * init.g(x, v), &boundary, &grid)?;
            Ok(sol.profile(&quad))
        }
        ReferenceSpec::Diffusion { dx, dt } => {
            let grid = FdGrid::with_spacing(a, b, dx, dt, t_end)?;
            let boundary = match (cfg.mesh.boundary, &cfg.inflow) {
                (BoundaryChoice::Inflow, Some(f)) => DiffusionBoundary::Dirichlet {
                    left: f.left,
                    right: f.right,
                },
                _ => DiffusionBoundary::Periodic,
            };
            Ok(diffusion_fd(&coeff, quad.v_sq(), |x| init.rho(x), boundary, &grid)?)
        }
    }
}

/// Text identifying the reference problem: the configuration without the
/// DG discretization choices, plus the reference grid.
pub fn description(cfg: &RunConfig, spec: ReferenceSpec) -> String {
    let mut c = cfg.clone();
    c.scheme.order = 1;
    c.scheme.time_order = None;
    c.mesh.cells = Some(2);
    c.mesh.segments.clear();
    c.time.dt = DtPolicy::Rule(DtRule::Cfl);
    c.time.cfl_cap = None;
    c.output = Default::default();
    format!("{}\n{spec:?}\n", c.to_toml())
}

/// [`compute`] through an on-disk cache.
pub fn cached(cfg: &RunConfig, spec: ReferenceSpec, cache: &ReferenceCache) -> Result<Profile, CliError> {
    let mut failure = None;
    let profile = cache.get_or_compute(&description(cfg, spec), || {
        compute(cfg, spec).map_err(|e| match e {
            CliError::Solver(s) => s,
            other => {
                let msg = other.to_string();
                failure = Some(other);
                kinetic_dg::Error::InvalidParameter(msg)
            }
        })
    });
    match (profile, failure) {
        (Ok(p), _) => Ok(p),
        (Err(_), Some(e)) => Err(e),
        (Err(e), None) => Err(e.into()),
    }
}

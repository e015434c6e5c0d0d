//! The numerical experiments of the method paper as ready-made configurations.

use crate::config::*;
use crate::CliError;
use std::f64::consts::PI;

/// Preset names accepted by [`preset`].
pub const NAMES: [&str; 7] = [
    "example1",
    "example2",
    "example3",
    "example4",
    "example4-kinetic",
    "example5",
    "example5-diffusive",
];

fn base(order: usize, domain: [f64; 2], cells: usize, boundary: BoundaryChoice, epsilon: f64, t_end: f64) -> RunConfig {
    RunConfig {
        scheme: SchemeConfig { order, time_order: None },
        model: ModelConfig::default(),
        mesh: MeshConfig {
            domain,
            cells: Some(cells),
            segments: Vec::new(),
            boundary,
        },
        material: MaterialConfig {
            epsilon,
            sigma_s: FunctionSpec::constant(1.0),
            sigma_a: FunctionSpec::constant(0.0),
            source: FunctionSpec::constant(0.0),
            sigma_m: None,
        },
        inflow: None,
        initial: InitialData::Zero {},
        time: TimeConfig {
            t_end,
            dt: DtPolicy::Rule(DtRule::Cfl),
            cfl_cap: None,
        },
        output: OutputConfig::default(),
    }
}

fn inflow(left: f64, right: f64) -> Option<InflowConfig> {
    Some(InflowConfig { left, right, penalty: 1.0 })
}

pub fn preset(name: &str) -> Result<RunConfig, CliError> {
    let cfg = match name {
        // smooth periodic problem of the accuracy tables
        "example1" => RunConfig {
            initial: InitialData::Sine {},
            ..base(1, [0.0, 2.0 * PI], 10, BoundaryChoice::Periodic, 0.5, 1.0)
        },
        // two materials: pure absorber on [0,1], strong scatterer on [1,11]
        "example2" => {
            let mut c = base(3, [0.0, 11.0], 0, BoundaryChoice::Inflow, 1.0, 1.5);
            c.mesh.cells = None;
            c.mesh.segments = vec![Segment { end: 1.0, cells: 20 }, Segment { end: 11.0, cells: 20 }];
            c.material.sigma_s = FunctionSpec::Piecewise {
                breaks: vec![1.0],
                values: vec![0.0, 100.0],
            };
            c.material.sigma_a = FunctionSpec::Piecewise {
                breaks: vec![1.0],
                values: vec![1.0, 0.0],
            };
            c.inflow = inflow(5.0, 0.0);
            c
        }
        // σ_s = 1 + 100x², unit source
        "example3" => {
            let mut c = base(3, [0.0, 1.0], 40, BoundaryChoice::Inflow, 1e-2, 0.4);
            c.material.sigma_s = FunctionSpec::Polynomial {
                coefficients: vec![1.0, 0.0, 100.0],
            };
            c.material.source = FunctionSpec::constant(1.0);
            c.inflow = inflow(0.0, 0.0);
            c
        }
        // diffusive regime; Δt = 0.25h unless the CFL rule is stricter
        "example4" => {
            let mut c = base(3, [0.0, 1.0], 40, BoundaryChoice::Inflow, 1e-8, 0.25);
            c.inflow = inflow(1.0, 0.0);
            c.time.cfl_cap = Some(0.25);
            c
        }
        "example4-kinetic" => RunConfig {
            inflow: inflow(1.0, 0.0),
            ..base(3, [0.0, 1.0], 40, BoundaryChoice::Inflow, 1.0, 0.4)
        },
        // telegraph Riemann problem
        "example5" | "example5-diffusive" => {
            let (domain, cells, eps) = if name == "example5" {
                ([-1.0, 1.0], 80, 0.7)
            } else {
                ([-2.0, 2.0], 160, 1e-6)
            };
            let mut c = base(3, domain, cells, BoundaryChoice::Inflow, eps, 0.15);
            c.model.velocity = Velocity::Telegraph;
            c.initial = InitialData::Riemann {
                left: 2.0,
                right: 1.0,
                at: 0.0,
            };
            c.inflow = inflow(2.0, 1.0);
            c
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown preset `{other}` (known: {})",
                NAMES.join(", ")
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

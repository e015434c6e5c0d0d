use clap::{Args, Parser, Subcommand, ValueEnum};
use kinetic_dg::stability::GridSpec;
use kinetic_dg_cli::commands;
use kinetic_dg_cli::config::RunConfig;
use kinetic_dg_cli::presets;
use kinetic_dg_cli::references::{self, ReferenceSpec};
use kinetic_dg_cli::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Asymptotic-preserving IMEX-DG solver for 1D kinetic transport.
#[derive(Parser)]
#[command(name = "kinetic-dg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run to the final time and write `x,rho,j` at the cell Gauss points.
    Solve(RunArgs),
    /// Richardson convergence table `N,Erho,order_rho,Eg,order_g`.
    Converge {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated cell counts, each twice the previous.
        #[arg(long, value_delimiter = ',', default_value = "10,20,40,80,160,320")]
        levels: Vec<usize>,
    },
    /// Fourier stability scan over the (alpha, beta) plane.
    StabilityMap {
        /// DG order k.
        #[arg(long)]
        order: usize,
        /// IMEX order p (defaults to k).
        #[arg(long)]
        time_order: Option<usize>,
        #[arg(long, value_enum, default_value_t = Resolution::Coarse)]
        resolution: Resolution,
        /// Grid spacing for `--resolution custom`.
        #[arg(long)]
        spacing: Option<f64>,
        /// Wave numbers per point for `--resolution custom`.
        #[arg(long)]
        xi_samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Energy history `step,time,energy`.
    EnergyCheck {
        #[command(flatten)]
        run: RunArgs,
        /// Use this fraction of the first-order stability bound as the step.
        #[arg(long)]
        theorem_fraction: Option<f64>,
        /// Number of steps (default: up to the final time).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Local-equilibrium residual per step and distance to the diffusion limit.
    ApCheck {
        #[command(flatten)]
        run: RunArgs,
        /// Diffusion reference spacing (default: smallest cell / 50).
        #[arg(long)]
        reference_dx: Option<f64>,
        /// Cache directory for reference solutions.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Fine-grid finite-difference reference `x,rho,j` for a preset.
    Reference {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Print the resolved configuration as TOML.
    ShowConfig(RunArgs),
    /// List the preset names.
    Presets,
}

#[derive(Clone, Copy, ValueEnum)]
enum Resolution {
    /// Spacing 1/4, 32 wave numbers.
    Coarse,
    /// Spacing 1/20, 100 wave numbers (hours of compute).
    Paper,
    Custom,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Override a key, e.g. `--set material.epsilon=1e-6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let cfg = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                RunConfig::from_toml(&text)?
            }
            (None, Some(name)) => presets::preset(name)?,
            (None, None) => return Err(CliError::Config("give --config or --preset".into())),
        };
        cfg.with_overrides(&self.sets)
    }

    fn destination(&self, cfg: &RunConfig) -> Option<PathBuf> {
        self.out.clone().or_else(|| cfg.output.path.as_ref().map(PathBuf::from))
    }
}

fn emit(text: &str, out: Option<PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = args.load()?;
            let sol = commands::solve(&cfg)?;
            emit(&sol.to_csv(), args.destination(&cfg))
        }
        Command::Converge { run, levels } => {
            let cfg = run.load()?;
            let rows = commands::converge(&cfg, &levels)?;
            emit(&commands::convergence_csv(&rows), run.destination(&cfg))
        }
        Command::StabilityMap {
            order,
            time_order,
            resolution,
            spacing,
            xi_samples,
            out,
        } => {
            let spec = match resolution {
                Resolution::Coarse => GridSpec::coarse(),
                Resolution::Paper => GridSpec::paper(),
                Resolution::Custom => GridSpec {
                    step: spacing.ok_or_else(|| CliError::Config("--resolution custom needs --spacing".into()))?,
                    xi_samples: xi_samples.unwrap_or(GridSpec::coarse().xi_samples),
                    ..GridSpec::coarse()
                },
            };
            let grid = commands::stability_map(time_order.unwrap_or(order), order, &spec)?;
            match grid.unconditional_alpha(spec.beta.1) {
                Some(a) => eprintln!("stable for every beta up to alpha = {a}"),
                None => eprintln!("no unconditionally stable column"),
            }
            if grid.failures() > 0 {
                eprintln!("{} points where the eigenvalue iteration failed", grid.failures());
            }
            emit(&commands::stability_csv(&grid), out)
        }
        Command::EnergyCheck {
            run,
            theorem_fraction,
            steps,
        } => {
            let cfg = run.load()?;
            let report = commands::energy_check(&cfg, theorem_fraction, steps)?;
            eprintln!(
                "dt = {:e}, bound {:?}, non-increasing: {}",
                report.dt,
                report.bound,
                report.non_increasing(1e-12)
            );
            emit(&report.to_csv(), run.destination(&cfg))
        }
        Command::ApCheck {
            run,
            reference_dx,
            cache,
        } => {
            let cfg = run.load()?;
            let limit = match reference_dx {
                Some(dx) => ReferenceSpec::diffusion(dx),
                None => commands::default_limit_reference(&cfg)?,
            };
            let cache = cache.map(kinetic_dg::reference::ReferenceCache::new);
            let report = commands::ap_check(&cfg, limit, cache.as_ref())?;
            let worst = report.residuals.iter().map(|r| r.2).fold(0.0, f64::max);
            eprintln!("max residual {worst:e}, |rho - rho_limit|_inf = {:e}", report.rho_vs_limit);
            emit(&report.to_csv(), run.destination(&cfg))
        }
        Command::Reference { run, cache } => {
            let cfg = run.load()?;
            let name = run.preset.as_deref().unwrap_or_default();
            let spec = references::preset_reference(name)
                .ok_or_else(|| CliError::Config(format!("no reference is defined for `{name}`")))?;
            let profile = match cache {
                Some(dir) => references::cached(&cfg, spec, &kinetic_dg::reference::ReferenceCache::new(dir))?,
                None => references::compute(&cfg, spec)?,
            };
            emit(&profile.to_csv(), run.destination(&cfg))
        }
        Command::ShowConfig(args) => {
            let cfg = args.load()?;
            emit(&cfg.to_toml(), args.out.clone())
        }
        Command::Presets => {
            for name in presets::NAMES {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

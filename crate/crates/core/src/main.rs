use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};

use relsim::dynamics::{self, Evolver, Scheme, Stepper, WaveState};
use relsim::entangle::DEFAULT_EPSILON;
use relsim::experiments::{
    self, Artifacts, Config, DispersionConfig, DoubleSlitConfig, ExperimentError, Result,
};
use relsim::geometry::{self, ShortcutMode};
use relsim::relgraph::{self, RelationalGraph, DEFAULT_MAX_VERTICES};
use relsim::BUILD_ID;

const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "relsim",
    about = "Quantum dynamics on relational graphs",
    disable_version_flag = true
)]
struct Cli {
    /// Print the build identifier.
    #[arg(long, short = 'V')]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Euler,
    Cayley,
    Exact,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Euler => Scheme::Euler,
            SchemeArg::Cayley => Scheme::Cayley,
            SchemeArg::Exact => Scheme::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Hops,
    Resistance,
}

#[derive(Clone, Copy, ValueEnum)]
enum Oracle {
    PathSum,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Direct,
    TwoHop,
}

#[derive(Subcommand)]
enum Command {
    /// Print the edge list of a hypercubic lattice.
    Lattice {
        /// Side lengths, first axis fastest, e.g. `8,8`.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long)]
        periodic: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve a wave localized at one vertex and write the final amplitudes.
    Evolve {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        t: u64,
        #[arg(long, value_enum, default_value = "cayley")]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 0)]
        source: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump one column of the t-tick propagator, or compare it with the
    /// walk enumeration.
    Kernel {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        t: u64,
        #[arg(long, value_enum, default_value = "euler")]
        scheme: SchemeArg,
        #[arg(long, value_enum)]
        oracle: Option<Oracle>,
        #[arg(long, default_value_t = 0)]
        source: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance between two vertices.
    Distance {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, num_args = 2, value_names = ["X", "Y"], required = true)]
        pair: Vec<usize>,
        #[arg(long, value_enum, default_value = "hops")]
        metric: Metric,
    },
    /// Antipodal chord sweep on a ring.
    Shortcut {
        #[arg(long)]
        n: Option<usize>,
        /// Comma-separated chord conductances.
        #[arg(long, value_delimiter = ',')]
        w: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Singlet, measurement interaction, collapse.
    Epr {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-slit interference on a rectangle.
    Doubleslit {
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        t: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plane-wave phase advance on a ring.
    Dispersion {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        t: Option<u64>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant suite.
    Check,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn max_vertices() -> Result<usize> {
    match std::env::var("RELSIM_MAX_VERTICES") {
        Ok(v) => v.trim().parse().map_err(|_| {
            ExperimentError::InvalidConfig(format!("RELSIM_MAX_VERTICES = {v:?} is not a count"))
        }),
        Err(_) => Ok(DEFAULT_MAX_VERTICES),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| ExperimentError::InvalidConfig(format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<RelationalGraph> {
    Ok(relgraph::from_edge_list_capped(
        &read_text(path)?,
        max_vertices()?,
    )?)
}

fn load_config(path: Option<&PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::parse(&read_text(p)?),
        None => Ok(Config::default()),
    }
}

/// Applies a flag on top of the config; flags win and disagreements are
/// reported on stderr.
fn overlay<T: ToString>(cfg: &mut Config, key: &str, flag: Option<T>) {
    let Some(flag) = flag else { return };
    let value = flag.to_string();
    if let Some(old) = cfg.get(key) {
        if old != value {
            eprintln!("note: flag --{key} = {value} overrides config value {old}");
        }
    }
    cfg.set(key, value);
}

fn emit(out: Option<&PathBuf>, body: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, body)?,
        None => io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

/// Writes all artifacts into `out`, or the first file to stdout and the
/// manifest to stderr.
fn emit_artifacts(out: Option<&PathBuf>, artifacts: &Artifacts) -> Result<()> {
    match out {
        Some(dir) => artifacts.write_to(dir)?,
        None => {
            if let Some((_, body)) = artifacts.files.first() {
                io::stdout().write_all(body.as_bytes())?;
            }
            eprintln!("{}", artifacts.manifest.line());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    if cli.version {
        println!("{BUILD_ID}");
        return Ok(ExitCode::SUCCESS);
    }
    let Some(command) = cli.command else {
        let _ = Cli::command().print_help();
        return Ok(ExitCode::from(EXIT_USAGE));
    };
    match command {
        Command::Lattice {
            dims,
            periodic,
            out,
        } => {
            let g = relgraph::build_lattice_capped(&dims, periodic, max_vertices()?)?;
            emit(out.as_ref(), &g.to_edge_list())?;
        }
        Command::Evolve {
            graph,
            mu,
            t,
            scheme,
            source,
            out,
        } => {
            let g = load_graph(&graph)?;
            let stepper = Stepper::new(scheme.into(), mu)?;
            let evolver = Evolver::new(&g, stepper)?;
            if stepper.scheme() == Scheme::Euler {
                if let Some(w) = dynamics::euler_stability_warning(evolver.laplacian(), mu) {
                    eprintln!("warning: {w}");
                }
            }
            let end = evolver.run(&WaveState::localized(g.n_spatial(), source)?, t)?;
            let mut buf = Vec::new();
            end.write_csv(&mut buf)?;
            emit(out.as_ref(), &String::from_utf8_lossy(&buf))?;
        }
        Command::Kernel {
            graph,
            mu,
            t,
            scheme,
            oracle,
            source,
            out,
        } => {
            let g = load_graph(&graph)?;
            let scheme: Scheme = scheme.into();
            match oracle {
                Some(Oracle::PathSum) => {
                    if scheme != Scheme::Euler {
                        return Err(ExperimentError::InvalidConfig(format!(
                            "the path-sum oracle reproduces the euler kernel, not {scheme}"
                        )));
                    }
                    let ticks = u32::try_from(t).unwrap_or(u32::MAX);
                    let walks = dynamics::path_sum_kernel(&g, mu, ticks)?;
                    let power = dynamics::kernel_matrix(&g, mu, t, scheme)?;
                    let dev = dynamics::max_deviation(&power, &walks);
                    emit(out.as_ref(), &format!("max_deviation {dev:.6e}\n"))?;
                }
                None => {
                    if source >= g.n_spatial() {
                        return Err(dynamics::DynamicsError::InvalidVertex(source).into());
                    }
                    let k = dynamics::kernel_matrix(&g, mu, t, scheme)?;
                    let column: Vec<_> = k.column(source).iter().copied().collect();
                    let mut buf = Vec::new();
                    dynamics::write_amplitudes_csv(&mut buf, &column)?;
                    emit(out.as_ref(), &String::from_utf8_lossy(&buf))?;
                }
            }
        }
        Command::Distance {
            graph,
            pair,
            metric,
        } => {
            let g = load_graph(&graph)?;
            let (x, y) = (pair[0], pair[1]);
            match metric {
                Metric::Hops => println!("{}", geometry::shortest_path_distance(&g, x, y)?),
                Metric::Resistance => {
                    println!("{:?}", geometry::resistance_distance(&g, x, y, None)?)
                }
            }
        }
        Command::Shortcut {
            n,
            w,
            mode,
            config,
            out,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            cfg.expect_keys(&["n", "w", "mode"])?;
            overlay(&mut cfg, "n", n);
            overlay(
                &mut cfg,
                "w",
                w.map(|ws| ws.iter().map(f64::to_string).collect::<Vec<_>>().join(",")),
            );
            overlay(
                &mut cfg,
                "mode",
                mode.map(|m| match m {
                    ModeArg::Direct => "direct",
                    ModeArg::TwoHop => "two-hop",
                }),
            );
            let n = cfg.parsed::<usize>("n")?.unwrap_or(100);
            let w_list = match cfg.get("w") {
                Some(list) => list
                    .split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|_| {
                            ExperimentError::InvalidConfig(format!("w entry {s:?} is not a number"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
                None => vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            };
            let mode = match cfg.get("mode").unwrap_or("direct") {
                "direct" => ShortcutMode::Direct,
                "two-hop" => ShortcutMode::TwoHop,
                other => {
                    return Err(ExperimentError::InvalidConfig(format!(
                        "unknown mode {other:?}"
                    )))
                }
            };
            emit_artifacts(
                out.as_ref(),
                &experiments::run_shortcut(n, &w_list, mode)?.artifacts(),
            )?;
        }
        Command::Epr {
            seed,
            eps,
            config,
            out,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            cfg.expect_keys(&["seed", "eps"])?;
            overlay(&mut cfg, "seed", seed);
            overlay(&mut cfg, "eps", eps);
            let seed = cfg.parsed("seed")?.unwrap_or(0);
            let eps = cfg.parsed("eps")?.unwrap_or(DEFAULT_EPSILON);
            emit_artifacts(
                out.as_ref(),
                &experiments::run_epr_scenario(seed, eps)?.artifacts(),
            )?;
        }
        Command::Doubleslit { mu, t, config, out } => {
            let mut cfg = load_config(config.as_ref())?;
            overlay(&mut cfg, "mu", mu);
            overlay(&mut cfg, "ticks", t);
            let report = experiments::run_double_slit(&DoubleSlitConfig::from_config(&cfg)?)?;
            emit_artifacts(out.as_ref(), &report.artifacts())?;
        }
        Command::Dispersion {
            n,
            m,
            mu,
            t,
            scheme,
            config,
            out,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            overlay(&mut cfg, "n", n);
            overlay(&mut cfg, "m", m);
            overlay(&mut cfg, "mu", mu);
            overlay(&mut cfg, "ticks", t);
            overlay(&mut cfg, "scheme", scheme.map(Scheme::from));
            let report = experiments::run_dispersion(&DispersionConfig::from_config(&cfg)?)?;
            emit_artifacts(out.as_ref(), &report.artifacts())?;
        }
        Command::Check => {
            let results = experiments::run_checks();
            for c in &results {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            if !results.iter().all(|c| c.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

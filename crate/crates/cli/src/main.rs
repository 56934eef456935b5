use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cvqkd_core::config::{ConfigMap, Param, RunConfig};
use cvqkd_core::driver::{
    evaluate_point, gnuplot_script, max_secure_distance, optimize, regime_name, sweep, write_sweep_csv, Axis,
    PointReport,
};
use cvqkd_core::gaussian::channel_output_covariance;
use cvqkd_core::mc::{simulate, write_samples, SimConfig};
use cvqkd_core::{Error, Result};

const WORKERS_VAR: &str = "CVQKD_WORKERS";

#[derive(Parser)]
#[command(name = "cvqkd", version, about = "Finite-size CV-QKD key rates with noiseless-amplifier post-selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override one configuration entry, `key=value`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut map = ConfigMap::load(&self.config)?;
        for o in &self.overrides {
            map.apply_override(o)?;
        }
        RunConfig::from_map(&map)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the key rate at the configured operating point.
    Keyrate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Sweep one parameter and write CSV rows.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// distance, cutoff, kappa, gain, chi or blocksize.
        #[arg(long)]
        axis: String,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// Optimise these parameters at every point (comma list of chi, gain, cutoff).
        #[arg(long)]
        optimize: Option<String>,
        /// Also emit the no-post-selection series.
        #[arg(long)]
        baseline: bool,
        /// Output file; standard output if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a gnuplot script for the CSV to this path.
        #[arg(long, requires = "out")]
        gnuplot: Option<PathBuf>,
    },
    /// Maximise the key rate over the listed parameters.
    Optimize {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        vary: String,
    },
    /// Largest distance with a positive finite-size key rate.
    MaxDistance {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Monte-Carlo heterodyne sampling with the post-selection filter.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn num(x: f64) -> String {
    format!("{x:.11e}")
}

fn print_report(w: &mut impl Write, r: &PointReport) -> io::Result<()> {
    let k = &r.key;
    let lines = [
        ("distance_km", num(r.distance_km)),
        ("transmissivity", num(r.transmissivity)),
        ("excess_noise", num(r.excess_noise)),
        ("chi", num(r.chi)),
        ("gain", num(r.filter.gain)),
        ("cutoff", num(r.filter.cutoff)),
        ("kappa", num(r.filter.kappa())),
        ("regime", regime_name(k.regime).to_string()),
        ("fast_path", r.fast_path.to_string()),
        ("a_ps", num(r.m_ps.a)),
        ("b_ps", num(r.m_ps.b)),
        ("c_ps", num(r.m_ps.c)),
        ("p_s", num(k.success_probability)),
        ("i_ab", num(r.info.i_ab)),
        ("chi_e", num(r.info.chi_e)),
        ("k_asym", num(k.k_asym)),
        ("n_eff", num(k.n_eff)),
        ("delta", num(k.delta)),
        ("k_fs", num(k.k_fs)),
        ("rate", num(k.floored_rate())),
        ("secure", k.secure.to_string()),
    ];
    for (key, v) in lines {
        writeln!(w, "{key} = {v}")?;
    }
    Ok(())
}

fn configure_workers() -> Result<()> {
    let Ok(raw) = std::env::var(WORKERS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{WORKERS_VAR} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    configure_workers()?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Keyrate { cfg } => {
            let r = evaluate_point(&cfg.load()?)?;
            print_report(&mut out, &r)?;
        }
        Command::Sweep {
            cfg,
            axis,
            from,
            to,
            steps,
            optimize,
            baseline,
            out: path,
            gnuplot,
        } => {
            let c = cfg.load()?;
            let axis = Axis::parse(&axis)?;
            let vary = match optimize {
                Some(list) => Param::parse_list(&list)?,
                None => Vec::new(),
            };
            let rows = sweep(&c, axis, from, to, steps, &vary, baseline)?;
            match &path {
                Some(p) => write_sweep_csv(BufWriter::new(File::create(p)?), axis, &rows)?,
                None => write_sweep_csv(&mut out, axis, &rows)?,
            }
            if let (Some(script), Some(csv)) = (gnuplot, &path) {
                std::fs::write(script, gnuplot_script(&csv.to_string_lossy(), axis))?;
            }
        }
        Command::Optimize { cfg, vary } => {
            let c = cfg.load()?;
            let vary = Param::parse_list(&vary)?;
            let best = optimize(&c, &vary)?;
            // No feasible node at all: surface the starting point's own error.
            let report = match best.report {
                Some(r) => r,
                None => evaluate_point(&best.config)?,
            };
            writeln!(out, "evaluations = {}", best.evaluations)?;
            print_report(&mut out, &report)?;
        }
        Command::MaxDistance { cfg } => {
            let d = max_secure_distance(&cfg.load()?)?;
            writeln!(out, "max_distance_km = {}", num(d.km))?;
            writeln!(out, "bracket_km = {} {}", num(d.bracket.0), num(d.bracket.1))?;
            writeln!(out, "reached_limit = {}", d.reached_limit)?;
            writeln!(out, "evaluations = {}", d.evaluations)?;
            print_report(&mut out, &d.report)?;
        }
        Command::Simulate {
            cfg,
            samples,
            seed,
            out: path,
        } => {
            let c = cfg.load()?;
            let m = channel_output_covariance(c.chi, &c.channel.model()?)?;
            let sim = SimConfig {
                shards: c.mc.shards,
                ..SimConfig::new(samples.unwrap_or(c.mc.samples), seed.unwrap_or(c.mc.seed), c.filter)
            };
            let result = simulate(&m, &sim)?;
            write_samples(&path, &result, &m, &sim)?;
            summarize(&mut out, &path, &result)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn summarize(w: &mut impl Write, path: &Path, r: &cvqkd_core::mc::SimOutput) -> io::Result<()> {
    let m = &r.moments;
    writeln!(w, "samples_file = {}", path.display())?;
    writeln!(w, "accepted = {}", r.accepted_count)?;
    writeln!(w, "p_s = {} +- {}", num(r.success_probability), num(r.success_probability_se))?;
    writeln!(w, "a_ps = {} +- {}", num(m.covariance.a), num(m.std_error[0]))?;
    writeln!(w, "b_ps = {} +- {}", num(m.covariance.b), num(m.std_error[1]))?;
    writeln!(w, "c_ps = {} +- {}", num(m.covariance.c), num(m.std_error[2]))
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

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use motjvie::kernel::PlaneWaveSpec;
use motjvie::march::EngineKind;
use motjvie::stability::PdsaMethod;
use motjvie_cli::bench::{bench_engine, bench_kernel, render, BenchSpec};
use motjvie_cli::config::parse_time;
use motjvie_cli::{exit_code, frequency_grid, init_threads, RunConfig};

#[derive(Parser)]
#[command(name = "motjvie", version, about = "Transient scattering by voxelized dielectrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Dense,
    MatrixFree,
}

#[derive(Subcommand)]
enum Command {
    /// March a configured scatterer and write probe time series.
    Run {
        config: PathBuf,
        /// Override the configured engine.
        #[arg(long)]
        engine: Option<String>,
    },
    /// Time the history evaluation over grid sizes.
    Bench {
        /// Cube edge voxel counts.
        #[arg(long, value_delimiter = ',', default_value = "8,12,16,24")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "hierarchical")]
        engines: Vec<String>,
        #[arg(long, default_value_t = 12.0)]
        eps: f64,
        /// Minimum seconds of timed steps per engine and grid.
        #[arg(long, default_value_t = 0.5)]
        min_time: f64,
    },
    /// Positive-definiteness report of the stability matrices.
    Pdsa {
        config: PathBuf,
        /// Matrix indices to check; defaults to the last one.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long, value_enum, default_value = "matrix-free")]
        method: Method,
    },
    /// Frequency responses of a probe time-series file.
    Spectrum {
        series: PathBuf,
        #[arg(long, default_value = "2lm")]
        sigma: String,
        #[arg(long, default_value = "3.42lm")]
        t0: String,
        #[arg(long, default_value_t = 1.0)]
        e0: f64,
        #[arg(long, default_value_t = 0.0)]
        f_min: f64,
        #[arg(long, default_value_t = 9e8)]
        f_max: f64,
        #[arg(long, default_value_t = 181)]
        count: usize,
        /// Trailing fraction of the series under the cosine taper.
        #[arg(long, default_value_t = 0.2)]
        taper: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Print the hierarchical level plan of a configured grid.
    Plan { config: PathBuf },
}

fn execute(cli: Cli) -> motjvie::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Run { config, engine } => {
            let mut cfg = RunConfig::load(&config)?;
            if engine.is_some() {
                cfg.solver.engine = engine;
                cfg.validate()?;
            }
            let out = motjvie_cli::run::run(&cfg)?;
            print!("{}", out.summary.render());
        }
        Command::Bench { sizes, engines, eps, min_time } => {
            let engines: Vec<EngineKind> = engines.iter().map(|e| e.parse()).collect::<motjvie::Result<_>>()?;
            let spec = BenchSpec { min_time: Duration::from_secs_f64(min_time), ..BenchSpec::default() };
            let mut rows = Vec::new();
            for &engine in &engines {
                for &n in &sizes {
                    let k = Arc::new(bench_kernel(n, eps)?);
                    rows.push(bench_engine(&k, engine, spec)?);
                }
            }
            print!("{}", render(&rows));
        }
        Command::Pdsa { config, n, method } => {
            let cfg = RunConfig::load(&config)?;
            let method = match method {
                Method::Dense => PdsaMethod::Dense,
                Method::MatrixFree => PdsaMethod::MatrixFree,
            };
            print!("{}", motjvie_cli::pdsa(&cfg, &n, method)?.render());
        }
        Command::Spectrum { series, sigma, t0, e0, f_min, f_max, count, taper, out } => {
            let c0 = motjvie::C0;
            let wave = PlaneWaveSpec {
                e0,
                sigma: parse_time(&sigma)? * c0,
                t0: parse_time(&t0)? * c0,
                ..PlaneWaveSpec::default()
            };
            let spectra = motjvie_cli::spectrum(&series, &wave, &frequency_grid(f_min, f_max, count), taper)?;
            match out {
                Some(p) => motjvie_cli::write_spectrum_file(&p, &spectra)?,
                None => motjvie::post::write_spectra(&spectra, std::io::stdout().lock())?,
            }
            for s in &spectra {
                if let Some(f) = s.excluded.first() {
                    eprintln!("probe {:?}: {} frequencies from {f:.4e} Hz excluded", s.probe, s.excluded.len());
                }
            }
        }
        Command::Plan { config } => {
            let cfg = RunConfig::load(&config)?;
            print!("{}", motjvie_cli::plan(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

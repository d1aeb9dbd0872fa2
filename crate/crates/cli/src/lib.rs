//! Command-line front end: configuration, runs, benchmarks, stability
//! reports and spectra.

pub mod bench;
pub mod config;
pub mod run;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use motjvie::hier::plan_levels;
use motjvie::kernel::PlaneWaveSpec;
use motjvie::post::{frequency_response, read_time_series, taper, write_spectra, Spectrum};
use motjvie::stability::{pdsa_check, PdsaMethod, PdsaReport};
use motjvie::Error;

pub use config::RunConfig;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Process exit code for a failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Index { .. }
        | Error::LinearIndex(..)
        | Error::OffCenter { .. }
        | Error::Format(_)
        | Error::Io(_) => EXIT_CONFIG,
        Error::Assembly { .. } | Error::Singular(_) | Error::March { .. } | Error::Dimension { .. } | Error::Undefined(_) => {
            EXIT_NUMERICAL
        }
    }
}

/// Thread count from `MOTJVIE_THREADS`, applied to the global pool.
pub fn init_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("MOTJVIE_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("MOTJVIE_THREADS='{v}' is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

/// PDSA of the configured (regularized, truncated) kernel. An empty `n_list`
/// checks `D_ℓ` only.
pub fn pdsa(cfg: &RunConfig, n_list: &[usize], method: PdsaMethod) -> motjvie::Result<PdsaReport> {
    let grid = cfg.build_grid()?;
    let kernel = run::load_or_assemble(cfg, &grid)?;
    let (kernel, _) = run::prepare_kernel(cfg, kernel)?;
    let list = if n_list.is_empty() { vec![kernel.ell] } else { n_list.to_vec() };
    pdsa_check(&kernel, &list, method)
}

/// Level table of the configured grid.
pub fn plan(cfg: &RunConfig) -> motjvie::Result<String> {
    let grid = cfg.build_grid()?;
    let kernel = run::load_or_assemble(cfg, &grid)?;
    Ok(plan_levels(&kernel)?.dump())
}

/// Tapered frequency responses of every probe in a time-series file.
pub fn spectrum(
    series: &Path,
    wave: &PlaneWaveSpec,
    freqs: &[f64],
    taper_fraction: f64,
) -> motjvie::Result<Vec<Spectrum>> {
    let s = read_time_series(BufReader::new(File::open(series)?))?;
    let s = if taper_fraction > 0.0 { taper(&s, taper_fraction) } else { s };
    (0..s.probes.len()).map(|p| frequency_response(&s, p, wave, freqs)).collect()
}

pub fn write_spectrum_file(path: &Path, spectra: &[Spectrum]) -> motjvie::Result<()> {
    write_spectra(spectra, std::io::BufWriter::new(File::create(path)?))
}

/// `count` evenly spaced frequencies from `f_min` to `f_max`.
pub fn frequency_grid(f_min: f64, f_max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![f_min],
        _ => (0..count).map(|i| f_min + (f_max - f_min) * i as f64 / (count - 1) as f64).collect(),
    }
}

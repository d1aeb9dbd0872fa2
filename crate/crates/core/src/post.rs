//! Probing, windowing, frequency responses and error metrics.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;
use crate::kernel::{incident_spectrum_magnitude, PlaneWaveSpec};
use crate::{C0, EPS0};

/// Samples of `J` at a set of probe voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    /// Time step in seconds.
    pub dt: f64,
    /// Step index of the first sample.
    pub start: usize,
    /// Probe coordinates in meters (voxel centers).
    pub probes: Vec<[f64; 3]>,
    /// Relative permittivity at each probe.
    pub eps_r: Vec<f64>,
    /// `samples[p][i]` is the `(x, y, z)` sample of probe `p` at step `start + i`.
    pub samples: Vec<Vec<[f64; 3]>>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Raw basis coefficients and the spline-evaluated current at the nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRecord {
    pub raw: TimeSeries,
    /// `(J_n + J_{n−1})/2`.
    pub spline: TimeSeries,
}

/// Sample a voxel-major history (`history[n−1]` is `J_n`) at voxel centers.
pub fn probe(history: &[Vec<f64>], grid: &VoxelGrid, dt: f64, points: &[[f64; 3]]) -> Result<ProbeRecord> {
    let mut voxels = Vec::with_capacity(points.len());
    for &p in points {
        let i = grid.nearest_voxel(p);
        let c = grid.center(i);
        if (0..3).any(|a| (c[a] - p[a]).abs() > 1e-9 * grid.spacing[a]) {
            return Err(Error::OffCenter { point: p, nearest: c });
        }
        voxels.push(i);
    }
    let m = grid.len();
    if let Some(bad) = history.iter().find(|j| j.len() != 3 * m) {
        return Err(Error::Dimension { expected: 3 * m, got: bad.len() });
    }
    let raw: Vec<Vec<[f64; 3]>> =
        voxels.iter().map(|&i| history.iter().map(|j| [j[3 * i], j[3 * i + 1], j[3 * i + 2]]).collect()).collect();
    let spline = raw
        .iter()
        .map(|s| {
            (0..s.len())
                .map(|n| {
                    let prev = if n == 0 { [0.0; 3] } else { s[n - 1] };
                    [0, 1, 2].map(|a| 0.5 * (s[n][a] + prev[a]))
                })
                .collect()
        })
        .collect();
    let base = TimeSeries {
        dt,
        start: 1,
        probes: points.to_vec(),
        eps_r: voxels.iter().map(|&i| grid.eps_r[i]).collect(),
        samples: raw,
    };
    Ok(ProbeRecord { spline: TimeSeries { samples: spline, ..base.clone() }, raw: base })
}

/// Apply a `cos²(πτ/2)` ramp to the last `⌈fraction·N⌉` samples.
pub fn taper(series: &TimeSeries, fraction: f64) -> TimeSeries {
    let n = series.len();
    let count = ((fraction * n as f64).ceil() as usize).clamp(1, n.max(1));
    let mut out = series.clone();
    for s in &mut out.samples {
        for i in 1..=count.min(n) {
            let w = (0.5 * PI * i as f64 / count as f64).cos().powi(2);
            let v = &mut s[n - count + i - 1];
            *v = v.map(|x| x * w);
        }
        if let Some(last) = s.last_mut() {
            *last = [0.0; 3];
        }
    }
    out
}

/// Incident magnitudes below this fraction of `E₀` are excluded. Round-off
/// in the sampled series leaves an absolute spectral noise near `1e−15 E₀`,
/// so this keeps the normalized response accurate to about `1e−6`.
pub const SPECTRUM_FLOOR: f64 = 1e-9;

/// `|H^α(f)|` at one probe.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub probe: [f64; 3],
    pub freqs: Vec<f64>,
    pub h: Vec<[f64; 3]>,
    /// Requested frequencies dropped because the incident spectrum is below
    /// [`SPECTRUM_FLOOR`].
    pub excluded: Vec<f64>,
}

impl Spectrum {
    pub fn combined(&self) -> Vec<f64> {
        self.h.iter().map(|h| combined_magnitude(h[0], h[1], h[2])).collect()
    }
}

/// `Σ x_n e^{−j2πf t_n} Δt` with times in lightmeters, `t_n = (start + n)Δt`.
pub fn dft_at(x: &[f64], dt: f64, start: usize, f: f64) -> (f64, f64) {
    let dt_lm = dt * C0;
    let w = 2.0 * PI * f * dt;
    let (mut re, mut im) = (0.0, 0.0);
    for (n, v) in x.iter().enumerate() {
        let ph = w * (start + n) as f64;
        re += v * ph.cos();
        im -= v * ph.sin();
    }
    (re * dt_lm, im * dt_lm)
}

/// `|DFT(J^α)| / (ε₀(ε_r−1)|e^i(f)|)` for probe `p` of an (already tapered)
/// series.
pub fn frequency_response(series: &TimeSeries, p: usize, wave: &PlaneWaveSpec, freqs: &[f64]) -> Result<Spectrum> {
    let eps_r = *series.eps_r.get(p).ok_or_else(|| Error::Config(format!("no probe {p}")))?;
    if !(eps_r > 1.0) {
        return Err(Error::Config(format!("probe {p} lies in the background (eps_r = {eps_r})")));
    }
    let comp: Vec<Vec<f64>> = (0..3).map(|a| series.samples[p].iter().map(|s| s[a]).collect()).collect();
    let mut out = Spectrum { probe: series.probes[p], freqs: Vec::new(), h: Vec::new(), excluded: Vec::new() };
    for &f in freqs {
        let inc = incident_spectrum_magnitude(wave, f);
        if !(inc > SPECTRUM_FLOOR * wave.e0.abs()) {
            out.excluded.push(f);
            continue;
        }
        let scale = EPS0 * (eps_r - 1.0) * inc;
        let h = [0, 1, 2].map(|a| {
            let (re, im) = dft_at(&comp[a], series.dt, series.start, f);
            re.hypot(im) / scale
        });
        out.freqs.push(f);
        out.h.push(h);
    }
    Ok(out)
}

/// `√(Σ(|H|−|H_ref|)² / Σ|H_ref|²)` per frequency over all probes and components.
pub fn l2_relative_error(h: &[Spectrum], reference: &[Spectrum]) -> Result<Vec<f64>> {
    if h.len() != reference.len() || h.is_empty() {
        return Err(Error::Config("probe sets differ".into()));
    }
    let nf = reference[0].freqs.len();
    if h.iter().chain(reference).any(|s| s.freqs != reference[0].freqs) {
        return Err(Error::Config("frequency lists differ".into()));
    }
    (0..nf)
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for (a, b) in h.iter().zip(reference) {
                for c in 0..3 {
                    num += (a.h[i][c] - b.h[i][c]).powi(2);
                    den += b.h[i][c].powi(2);
                }
            }
            if den == 0.0 {
                Err(Error::Undefined(format!("reference vanishes at {} Hz", reference[0].freqs[i])))
            } else {
                Ok((num / den).sqrt())
            }
        })
        .collect()
}

pub fn combined_magnitude(hx: f64, hy: f64, hz: f64) -> f64 {
    (hx * hx + hy * hy + hz * hz).sqrt()
}

fn fmt_point(p: [f64; 3]) -> String {
    format!("({:.16e},{:.16e},{:.16e})", p[0], p[1], p[2])
}

fn parse_point(s: &str) -> Result<[f64; 3]> {
    let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
    let v: Vec<f64> = inner.split(',').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("bad coordinate {s:?}: {e}")))?;
    v.try_into().map_err(|_| Error::Format(format!("expected three coordinates in {s:?}")))
}

pub fn write_time_series<W: Write>(series: &TimeSeries, mut out: W) -> Result<()> {
    let probes: Vec<String> = series.probes.iter().map(|p| fmt_point(*p)).collect();
    writeln!(out, "# dt={:.16e} probes={}", series.dt, probes.join(";"))?;
    let eps: Vec<String> = series.eps_r.iter().map(|e| format!("{e:.16e}")).collect();
    writeln!(out, "# eps_r={}", eps.join(";"))?;
    for i in 0..series.len() {
        write!(out, "{}", series.start + i)?;
        for s in &series.samples {
            for v in s[i] {
                write!(out, " {v:.16e}")?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_time_series<R: BufRead>(input: R) -> Result<TimeSeries> {
    let mut dt = None;
    let mut probes = Vec::new();
    let mut eps_r = Vec::new();
    let mut start = None;
    let mut samples: Vec<Vec<[f64; 3]>> = Vec::new();
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            for field in h.split_whitespace() {
                if let Some(v) = field.strip_prefix("dt=") {
                    dt = Some(v.parse::<f64>().map_err(|e| Error::Format(format!("bad dt: {e}")))?);
                } else if let Some(v) = field.strip_prefix("probes=") {
                    probes = v.split(';').filter(|s| !s.is_empty()).map(parse_point).collect::<Result<_>>()?;
                    samples = vec![Vec::new(); probes.len()];
                } else if let Some(v) = field.strip_prefix("eps_r=") {
                    eps_r = v
                        .split(';')
                        .map(|x| x.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Format(format!("bad eps_r: {e}")))?;
                }
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let step: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad step index in {line:?}")))?;
        start.get_or_insert(step);
        let vals: Vec<f64> = it
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("bad sample: {e}")))?;
        if vals.len() != 3 * probes.len() {
            return Err(Error::Format(format!("step {step}: {} values for {} probes", vals.len(), probes.len())));
        }
        for (p, s) in samples.iter_mut().enumerate() {
            s.push([vals[3 * p], vals[3 * p + 1], vals[3 * p + 2]]);
        }
    }
    let dt = dt.ok_or_else(|| Error::Format("missing dt header".into()))?;
    if eps_r.len() != probes.len() {
        eps_r = vec![f64::NAN; probes.len()];
    }
    Ok(TimeSeries { dt, start: start.unwrap_or(1), probes, eps_r, samples })
}

pub fn write_spectra<W: Write>(spectra: &[Spectrum], mut out: W) -> Result<()> {
    writeln!(out, "# f_Hz |Hx| |Hy| |Hz| |H|")?;
    for s in spectra {
        writeln!(out, "# probe={}", fmt_point(s.probe))?;
        if !s.excluded.is_empty() {
            writeln!(out, "# excluded {} frequencies from {:.6e} Hz (incident spectrum below floor)", s.excluded.len(), s.excluded[0])?;
        }
        for (f, h) in s.freqs.iter().zip(&s.h) {
            writeln!(out, "{f:.16e} {:.16e} {:.16e} {:.16e} {:.16e}", h[0], h[1], h[2], combined_magnitude(h[0], h[1], h[2]))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(vals: Vec<f64>) -> TimeSeries {
        TimeSeries {
            dt: 1e-11,
            start: 1,
            probes: vec![[0.0; 3]],
            eps_r: vec![2.0],
            samples: vec![vals.into_iter().map(|v| [v, 0.0, 0.0]).collect()],
        }
    }

    #[test]
    fn spline_of_single_coefficient() {
        let g = VoxelGrid::empty([2, 1, 1], [0.01; 3]);
        let mut hist = vec![vec![0.0; 6]; 9];
        hist[4][3] = 1.0;
        let r = probe(&hist, &g, 1e-11, &[g.center(1)]).unwrap();
        let x: Vec<f64> = r.spline.samples[0].iter().map(|s| s[0]).collect();
        assert_eq!(x, vec![0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0]);
        assert!(matches!(probe(&hist, &g, 1e-11, &[[0.004, 0.005, 0.005]]), Err(Error::OffCenter { .. })));
    }

    #[test]
    fn taper_window_values() {
        let t = taper(&series(vec![1.0; 10]), 0.2);
        let x: Vec<f64> = t.samples[0].iter().map(|s| s[0]).collect();
        assert_eq!(&x[..8], &[1.0; 8]);
        assert!((x[8] - 0.5).abs() < 1e-15);
        assert_eq!(x[9], 0.0);
        let t = taper(&series(vec![1.0; 10]), 1e-9);
        assert_eq!(t.samples[0].iter().map(|s| s[0]).sum::<f64>(), 9.0);
    }

    #[test]
    fn l2_examples() {
        let s = |v: f64| Spectrum { probe: [0.0; 3], freqs: vec![1.0], h: vec![[v, 0.0, 0.0]], excluded: vec![] };
        assert_eq!(l2_relative_error(&[s(3.0)], &[s(4.0)]).unwrap(), vec![0.25]);
        assert_eq!(l2_relative_error(&[s(8.0)], &[s(4.0)]).unwrap(), vec![1.0]);
        assert_eq!(l2_relative_error(&[s(4.0)], &[s(4.0)]).unwrap(), vec![0.0]);
        assert!(l2_relative_error(&[s(1.0)], &[s(0.0)]).is_err());
        assert_eq!(combined_magnitude(3.0, 4.0, 0.0), 5.0);
    }

    #[test]
    fn band_edge_exclusion_near_900_mhz() {
        let w = PlaneWaveSpec::default();
        let freqs: Vec<f64> = (0..=100).map(|i| i as f64 * 1e7).collect();
        let s = frequency_response(&series(vec![0.0; 20]), 0, &w, &freqs).unwrap();
        let edge = s.excluded[0];
        assert!((8.5e8..=9.2e8).contains(&edge), "{edge}");
        assert!(s.h.iter().all(|h| *h == [0.0; 3]));
    }

    #[test]
    fn file_roundtrip() {
        let mut s = series(vec![1.0 / 3.0, -2.5e-17, 7.0]);
        s.probes = vec![[0.005, 0.015, 0.025]];
        let mut buf = Vec::new();
        write_time_series(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# dt=9.9999999999999994e-12 probes=("));
        assert_eq!(read_time_series(buf.as_slice()).unwrap(), s);
    }
}

//! Run configuration: a sectioned TOML file.
//!
//! ```toml
//! [grid]
//! shape = "cube"          # cube | sphere | slab | map
//! counts = [20, 20, 20]
//! box = [0.2, 0.2, 0.2]   # meters
//! eps = 12.0
//!
//! [time]
//! dt = "1 lm"             # or "3.3e-11 s", or a bare number of seconds
//! steps = 1500
//!
//! [solver]
//! engine = "hierarchical"
//!
//! [excitation]
//! sigma = "2 lm"
//! t0 = "3.42 lm"
//!
//! [regularization]
//! order = 3
//! delta = "auto"
//! ```

use std::path::{Path, PathBuf};

use motjvie::grid::{build_grid, ShapeSpec, VoxelGrid};
use motjvie::kernel::PlaneWaveSpec;
use motjvie::march::{EngineKind, SolverKind};
use motjvie::{Error, Result, C0};
use serde::Deserialize;

/// A number of seconds, or a string with an `s` or `lm` suffix.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum TimeValue {
    Seconds(f64),
    Text(String),
}

impl TimeValue {
    pub fn seconds(&self) -> Result<f64> {
        match self {
            TimeValue::Seconds(s) => Ok(*s),
            TimeValue::Text(t) => parse_time(t),
        }
    }

    pub fn lightmeters(&self) -> Result<f64> {
        Ok(self.seconds()? * C0)
    }
}

/// Parse `"<x> lm"`, `"<x> s"` or `"<x>"` (seconds) into seconds.
pub fn parse_time(text: &str) -> Result<f64> {
    let t = text.trim();
    let (num, scale) = if let Some(v) = t.strip_suffix("lm") {
        (v, 1.0 / C0)
    } else if let Some(v) = t.strip_suffix('s') {
        (v, 1.0)
    } else {
        (t, 1.0)
    };
    let x: f64 = num.trim().parse().map_err(|_| Error::Config(format!("cannot parse time '{text}'")))?;
    Ok(x * scale)
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_shape")]
    pub shape: String,
    pub counts: [usize; 3],
    #[serde(rename = "box")]
    pub extent: [f64; 3],
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Shape center; defaults to the box center.
    pub center: Option<[f64; 3]>,
    /// Cube edge; defaults to the smallest box extent.
    pub edge: Option<f64>,
    /// Sphere diameter; defaults to the smallest box extent.
    pub diameter: Option<f64>,
    /// Slab layering axis (0, 1, 2), layer bounds and permittivities.
    pub axis: Option<usize>,
    pub bounds: Option<Vec<f64>>,
    pub layers: Option<Vec<f64>>,
    /// Explicit permittivity per voxel, linear-index order.
    pub map: Option<Vec<f64>>,
}

fn default_shape() -> String {
    "cube".into()
}

fn default_eps() -> f64 {
    12.0
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: TimeValue,
    pub steps: usize,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub engine: Option<String>,
    /// `auto`, `direct` or `iterative` lag-0 solve.
    pub z0: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExcitationSection {
    pub e0: Option<f64>,
    pub sigma: Option<TimeValue>,
    pub t0: Option<TimeValue>,
    pub k_hat: Option<[f64; 3]>,
    pub p_hat: Option<[f64; 3]>,
    /// Gauss points per axis for the voxel integral.
    pub quadrature: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    /// Probe coordinates in meters; must be voxel centers.
    #[serde(default)]
    pub points: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum DeltaValue {
    Value(f64),
    Text(String),
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegularizationSection {
    #[serde(default = "default_order")]
    pub order: usize,
    pub delta: DeltaValue,
    /// Use the literal `+δ/8` last four-tap coefficient.
    #[serde(default)]
    pub literal_fir4: bool,
}

fn default_order() -> usize {
    3
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    pub eps: f64,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Spline-evaluated probe samples.
    pub series: Option<PathBuf>,
    /// Raw basis coefficients at the probes.
    pub raw: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub cache: Option<PathBuf>,
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub time: TimeSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub excitation: ExcitationSection,
    #[serde(default)]
    pub probes: ProbeSection,
    pub regularization: Option<RegularizationSection>,
    pub truncation: Option<TruncationSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub kernel: KernelSection,
}

/// The regularization to apply once `M` is known.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regularization {
    pub order: usize,
    pub delta: f64,
    pub literal_fir4: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt()? <= 0.0 {
            return Err(Error::Config("dt must be positive".into()));
        }
        self.engine()?;
        self.solver_kind()?;
        self.wave()?.validate()?;
        if let Some(r) = &self.regularization {
            self.regularization_for(1)?;
            if !(2..=4).contains(&r.order) {
                return Err(Error::Config(format!("regularization order {} not in 2..=4", r.order)));
            }
        }
        if let Some(t) = &self.truncation {
            if !(t.eps > 0.0) {
                return Err(Error::Config("truncation eps must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> Result<f64> {
        self.time.dt.seconds()
    }

    pub fn engine(&self) -> Result<EngineKind> {
        self.solver.engine.as_deref().unwrap_or("hierarchical").parse()
    }

    pub fn solver_kind(&self) -> Result<SolverKind> {
        match self.solver.z0.as_deref().unwrap_or("auto") {
            "auto" => Ok(SolverKind::Auto),
            "direct" => Ok(SolverKind::Direct),
            "iterative" => Ok(SolverKind::Iterative),
            other => Err(Error::Config(format!("unknown lag-0 solver '{other}'"))),
        }
    }

    pub fn wave(&self) -> Result<PlaneWaveSpec> {
        let d = PlaneWaveSpec::default();
        let e = &self.excitation;
        Ok(PlaneWaveSpec {
            e0: e.e0.unwrap_or(d.e0),
            sigma: e.sigma.as_ref().map_or(Ok(d.sigma), TimeValue::lightmeters)?,
            t0: e.t0.as_ref().map_or(Ok(d.t0), TimeValue::lightmeters)?,
            k_hat: e.k_hat.unwrap_or(d.k_hat),
            p_hat: e.p_hat.unwrap_or(d.p_hat),
        })
    }

    pub fn quadrature_order(&self) -> usize {
        self.excitation.quadrature.unwrap_or(2)
    }

    pub fn shape(&self) -> Result<ShapeSpec> {
        let g = &self.grid;
        let center = g.center.unwrap_or(g.extent.map(|e| 0.5 * e));
        let min_extent = g.extent.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(match g.shape.as_str() {
            "cube" => ShapeSpec::Cube { center, edge: g.edge.unwrap_or(min_extent), eps: g.eps },
            "sphere" => ShapeSpec::Sphere { center, diameter: g.diameter.unwrap_or(min_extent), eps: g.eps },
            "slab" => ShapeSpec::LayeredSlab {
                axis: g.axis.unwrap_or(2),
                bounds: g.bounds.clone().ok_or_else(|| Error::Config("slab needs 'bounds'".into()))?,
                eps: g.layers.clone().ok_or_else(|| Error::Config("slab needs 'layers'".into()))?,
            },
            "map" => ShapeSpec::ExplicitMap(g.map.clone().ok_or_else(|| Error::Config("map shape needs 'map'".into()))?),
            other => return Err(Error::Config(format!("unknown shape '{other}'"))),
        })
    }

    pub fn build_grid(&self) -> Result<VoxelGrid> {
        build_grid(&self.shape()?, self.grid.counts, self.grid.extent)
    }

    /// Filter order and strength for a grid of `m` voxels; `delta = "auto"`
    /// uses the recommended strength with the three-tap filter.
    pub fn regularization_for(&self, m: usize) -> Result<Option<Regularization>> {
        let Some(r) = &self.regularization else { return Ok(None) };
        Ok(Some(match &r.delta {
            DeltaValue::Value(d) => Regularization { order: r.order, delta: *d, literal_fir4: r.literal_fir4 },
            DeltaValue::Text(t) if t == "auto" => {
                Regularization { order: 3, delta: motjvie::stability::recommend_delta(m), literal_fir4: false }
            }
            DeltaValue::Text(t) => return Err(Error::Config(format!("delta must be a number or 'auto', got '{t}'"))),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        [grid]
        counts = [4, 4, 4]
        box = [0.04, 0.04, 0.04]
        [time]
        dt = "0.01 lm"
        steps = 10
    "#;

    #[test]
    fn time_suffixes() {
        assert!((parse_time("1 lm").unwrap() * C0 - 1.0).abs() < 1e-15);
        assert_eq!(parse_time("2e-9 s").unwrap(), 2e-9);
        assert_eq!(parse_time("3e-9").unwrap(), 3e-9);
        assert!(parse_time("fast").is_err());
    }

    #[test]
    fn defaults_follow_the_documented_pulse() {
        let c = RunConfig::from_toml(BASE).unwrap();
        let w = c.wave().unwrap();
        assert_eq!((w.sigma, w.t0, w.e0), (2.0, 3.42, 1.0));
        assert_eq!(c.engine().unwrap(), EngineKind::Hierarchical);
        assert!((c.dt().unwrap() * C0 - 0.01).abs() < 1e-15);
        assert_eq!(c.build_grid().unwrap().eps_r, vec![12.0; 64]);
    }

    #[test]
    fn auto_delta_uses_three_taps() {
        let c = RunConfig::from_toml(&format!("{BASE}\n[regularization]\norder = 2\ndelta = \"auto\"\n")).unwrap();
        let r = c.regularization_for(1_000_000).unwrap().unwrap();
        assert_eq!(r.order, 3);
        assert!((r.delta - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_toml(&format!("{BASE}\n[solver]\nengine = \"magic\"\n")).is_err());
        assert!(RunConfig::from_toml(&format!("{BASE}\n[bogus]\nx = 1\n")).is_err());
        assert!(RunConfig::from_toml("[grid]\ncounts = [1,1]\n").is_err());
    }
}

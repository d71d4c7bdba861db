//! Run configuration: a TOML file, optional `key=value` overrides, and a
//! content hash stamped on every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datahub::{FeatureCatalog, FeatureKind, SynthParams};
use crate::density::DEFAULT_COVERAGE_RADIUS_M;
use crate::error::{Error, Result};
use crate::evaluate::{SurvivalParams, SweepSpec};
use crate::explain::ShapMethod;
use crate::geogrid::{build_grid, build_grid_in_region, BBox, HexGrid, ProjectedPoint, Projection, DEFAULT_EDGE_M};
use crate::optimizer::SolverKind;
use crate::riskmodel::{SplitRule, TrainHyper};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub sites: Option<PathBuf>,
    pub incidents: Option<PathBuf>,
    /// Pre-trained model; when set, later stages load it instead of training.
    pub model: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub edge_m: f64,
    /// Study area as `[min_x, min_y, max_x, max_y]` in meters from the origin.
    pub bbox: Option<[f64; 4]>,
    /// Study area polygon, `[x, y]` vertices in meters; takes precedence over `bbox`.
    pub polygon: Option<Vec<[f64; 2]>>,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            origin_lat: 40.0,
            origin_lon: -80.0,
            edge_m: DEFAULT_EDGE_M,
            bbox: None,
            polygon: None,
        }
    }
}

impl RegionConfig {
    pub fn projection(&self) -> Result<Projection> {
        Projection::new(self.origin_lat, self.origin_lon)
    }

    pub fn build_grid(&self) -> Result<HexGrid> {
        if let Some(poly) = &self.polygon {
            let pts: Vec<ProjectedPoint> = poly.iter().map(|&[x, y]| ProjectedPoint::new(x, y)).collect();
            return build_grid_in_region(&pts, self.edge_m);
        }
        let [a, b, c, d] = self
            .bbox
            .ok_or_else(|| Error::Config("missing required field `region.bbox` or `region.polygon`".into()))?;
        build_grid(BBox::new(a, b, c, d)?, self.edge_m)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogConfig {
    /// Feature names in column order; empty selects the built-in OSM catalog.
    pub features: Vec<String>,
}

impl CatalogConfig {
    pub fn build(&self) -> Result<FeatureCatalog> {
        if self.features.is_empty() {
            Ok(FeatureCatalog::osm_default())
        } else {
            FeatureCatalog::from_names(FeatureKind::Poi, &self.features)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeployArea {
    /// Held-out cells only.
    Test,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub method: ShapMethod,
    /// Background rows sampled from the training cells.
    pub background: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { method: ShapMethod::Sampled { n_perm: 512 }, background: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateConfig {
    pub count: usize,
    pub sets: usize,
    pub radius_m: f64,
    pub area: DeployArea,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self { count: 1000, sets: 10, radius_m: DEFAULT_COVERAGE_RADIUS_M, area: DeployArea::Test }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub n: usize,
    pub d_min_m: f64,
    pub solvers: Vec<SolverKind>,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self { n: 20, d_min_m: 1.2 * DEFAULT_COVERAGE_RADIUS_M, solvers: vec![SolverKind::Sip, SolverKind::Random] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub d_min_m: Vec<f64>,
    pub solvers: Vec<SolverKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let s = SweepSpec::default();
        Self { n_values: s.n_values, d_min_m: s.d_min_m, solvers: s.solvers }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Not part of the config hash.
    pub out_dir: PathBuf,
    pub paths: PathsConfig,
    pub region: RegionConfig,
    pub catalog: CatalogConfig,
    pub synth: Option<SynthParams>,
    pub split: SplitRule,
    pub train: TrainHyper,
    pub explain: ExplainConfig,
    pub candidates: CandidateConfig,
    pub optimize: OptimizeConfig,
    pub sweep: SweepConfig,
    pub coverage_radius_m: f64,
    pub survival: SurvivalParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            paths: PathsConfig::default(),
            region: RegionConfig::default(),
            catalog: CatalogConfig::default(),
            synth: None,
            split: SplitRule::MedianEast,
            train: TrainHyper::default(),
            explain: ExplainConfig::default(),
            candidates: CandidateConfig::default(),
            optimize: OptimizeConfig::default(),
            sweep: SweepConfig::default(),
            coverage_radius_m: DEFAULT_COVERAGE_RADIUS_M,
            survival: SurvivalParams::default(),
        }
    }
}

/// Sets `path` (dotted) inside a TOML table. The value is parsed as TOML and
/// falls back to a plain string.
fn set_dotted(root: &mut toml::Table, path: &str, raw: &str) -> Result<()> {
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("malformed override key {path:?}")));
    }
    let mut table = root;
    for k in &keys[..keys.len() - 1] {
        let entry = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {path:?}: `{k}` is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            set_dotted(&mut table, k.trim(), v.trim())?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("`{field}` {why}")));
        if !(self.region.edge_m.is_finite() && self.region.edge_m > 0.0) {
            return bad("region.edge_m", "must be positive");
        }
        if self.candidates.sets == 0 {
            return bad("candidates.sets", "must be at least 1");
        }
        if !(self.candidates.radius_m > 0.0) {
            return bad("candidates.radius_m", "must be positive");
        }
        if !(self.coverage_radius_m > 0.0) {
            return bad("coverage_radius_m", "must be positive");
        }
        if self.explain.background == 0 {
            return bad("explain.background", "must be at least 1");
        }
        if let ShapMethod::Sampled { n_perm: 0 } = self.explain.method {
            return bad("explain.method.n_perm", "must be at least 1");
        }
        if self.optimize.solvers.is_empty() {
            return bad("optimize.solvers", "must not be empty");
        }
        if self.sweep.n_values.is_empty() || self.sweep.d_min_m.is_empty() || self.sweep.solvers.is_empty() {
            return bad("sweep", "needs n_values, d_min_m and solvers");
        }
        if self.sweep.d_min_m.iter().chain([&self.optimize.d_min_m]).any(|d| !(*d >= 0.0)) {
            return bad("d_min_m", "values must be non-negative");
        }
        self.survival.validate().map_err(|e| Error::Config(format!("`survival` {e}")))
    }

    /// SHA-256 over the canonical JSON of everything except `out_dir`, as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn require<'a, T>(value: &'a Option<T>, field: &str) -> Result<&'a T> {
        value.as_ref().ok_or_else(|| Error::Config(format!("missing required field `{field}`")))
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            n_values: self.sweep.n_values.clone(),
            d_min_m: self.sweep.d_min_m.clone(),
            solvers: self.sweep.solvers.clone(),
            coverage_radius_m: self.coverage_radius_m,
            survival: self.survival,
        }
    }
}

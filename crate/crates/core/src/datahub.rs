//! Site and incident ingestion, per-cell feature matrices, and a seeded
//! synthetic city generator.

use std::collections::HashMap;
use std::io::{Read, Write};

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::artifact::{csv_reader, csv_writer, ArtifactMeta};
use crate::error::{Error, Result};
use crate::geogrid::{clip_convex, BBox, CellId, HexGrid, ProjectedPoint, Projection};
use crate::seed::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Poi,
    Building,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
}

/// Ordered feature list; position defines the matrix column.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCatalog {
    features: Vec<FeatureDef>,
    index: HashMap<String, usize>,
}

const OSM_POIS: &[&str] = &[
    "place of worship", "grave yard", "post office", "childcare", "courthouse", "fire station",
    "library", "police", "public building", "cinema", "bar", "restaurant", "fountain",
    "fast food", "cafe", "ice cream", "dentist", "recycling", "dojo", "pharmacy", "atm", "clock",
    "parking entrance", "bicycle parking", "car rental", "pub", "veterinary", "post box", "fuel",
    "clinic", "bench", "bank", "parking", "social facility", "marketplace",
    "sanitary dump station", "telephone", "nightclub", "drinking water", "shower",
    "bicycle rental", "charging station", "loading dock", "theatre", "community centre",
    "car wash", "bicycle repair station", "compressed air", "letter box", "bbq", "doctors",
    "planetarium", "training", "animal boarding", "internet cafe", "prep school", "gambling",
    "driving school", "events venue", "waste basket", "parking space", "waste disposal",
    "weighbridge", "public bookcase", "vending machine", "stage", "ranger station",
    "animal shelter", "exhibition centre", "arts centre", "kindergarten", "bus station",
    "townhall", "prison", "studio", "payment centre",
];

const OSM_BUILDINGS: &[&str] = &[
    "house", "bunker", "office", "commercial", "shelter", "residential", "public", "roof",
    "university", "dormitory", "chapel", "greenhouse", "apartments", "garage", "shed", "retail",
    "static caravan", "church", "terrace", "service", "school", "hospital", "industrial",
    "pavilion", "stadium", "hotel", "cabin", "toilets", "college", "warehouse", "sports centre",
    "detached", "boathouse", "barn", "riding hall", "construction", "ship", "ruins",
];

/// Canonical form of a feature name: trimmed, lower-case, spaces as underscores.
pub fn normalize_feature_name(name: &str) -> String {
    name.trim().to_lowercase().split_whitespace().collect::<Vec<_>>().join("_")
}

impl FeatureCatalog {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyInput("feature catalog has no entries".into()));
        }
        let mut index = HashMap::with_capacity(features.len());
        let features: Vec<FeatureDef> = features
            .into_iter()
            .map(|f| FeatureDef { name: normalize_feature_name(&f.name), kind: f.kind })
            .collect();
        for (i, f) in features.iter().enumerate() {
            if f.name.is_empty() {
                return Err(Error::InvalidInput("empty feature name in catalog".into()));
            }
            if index.insert(f.name.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate feature {:?} in catalog", f.name)));
            }
        }
        Ok(Self { features, index })
    }

    pub fn from_names<S: AsRef<str>>(kind: FeatureKind, names: &[S]) -> Result<Self> {
        Self::new(
            names.iter().map(|n| FeatureDef { name: n.as_ref().to_string(), kind }).collect(),
        )
    }

    /// The OpenStreetMap POI and building types: 76 POI and 38 distinct
    /// building types.
    pub fn osm_default() -> Self {
        let defs = OSM_POIS
            .iter()
            .map(|n| FeatureDef { name: n.to_string(), kind: FeatureKind::Poi })
            .chain(
                OSM_BUILDINGS
                    .iter()
                    .map(|n| FeatureDef { name: n.to_string(), kind: FeatureKind::Building }),
            )
            .collect();
        Self::new(defs).expect("built-in catalog is valid")
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(&normalize_feature_name(name)).copied()
    }

    pub fn name(&self, column: usize) -> &str {
        &self.features[column].name
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub id: usize,
    /// Catalog column.
    pub feature: usize,
    pub lat: f64,
    pub lon: f64,
    pub location: ProjectedPoint,
    /// Position of the containing cell in the grid's cell list.
    pub cell: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncidentRecord {
    pub id: usize,
    pub lat: f64,
    pub lon: f64,
    pub location: ProjectedPoint,
    pub cell: usize,
    pub timestamp: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SiteFormat {
    Csv,
    GeoJson,
}

#[derive(Clone, Debug)]
pub struct SiteIngest {
    pub sites: Vec<SiteRecord>,
    /// `counts[cell][feature]`, rows in grid cell order.
    pub counts: Vec<Vec<u32>>,
    pub skipped_unknown: usize,
    pub skipped_unparsable: usize,
    pub out_of_bounds: usize,
}

#[derive(Clone, Debug)]
pub struct IncidentIngest {
    pub incidents: Vec<IncidentRecord>,
    pub y: Vec<u32>,
    pub excluded: usize,
    pub skipped_unparsable: usize,
}

struct RawSite {
    feature: String,
    lat: f64,
    lon: f64,
}

fn parse_coord(s: Option<&str>) -> Option<f64> {
    s.and_then(|v| v.trim().parse::<f64>().ok()).filter(|v| v.is_finite())
}

fn header_positions(headers: &csv::StringRecord, wanted: &[&str]) -> Result<Vec<Option<usize>>> {
    Ok(wanted
        .iter()
        .map(|w| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(w)))
        .collect())
}

fn read_site_csv<R: Read>(reader: R, unparsable: &mut usize) -> Result<Vec<RawSite>> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let pos = header_positions(&headers, &["feature", "lat", "lon"])?;
    let (Some(fi), Some(lai), Some(loi)) = (pos[0], pos[1], pos[2]) else {
        return Err(Error::InvalidInput(format!(
            "sites CSV header must contain feature,lat,lon; got {headers:?}"
        )));
    };
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let parsed = rec.ok().and_then(|rec| {
            let feature = rec.get(fi)?.to_string();
            Some(RawSite { feature, lat: parse_coord(rec.get(lai))?, lon: parse_coord(rec.get(loi))? })
        });
        match parsed {
            Some(site) => out.push(site),
            None => {
                warn!("sites row {}: unparsable, skipped", row + 1);
                *unparsable += 1;
            }
        }
    }
    Ok(out)
}

fn read_site_geojson<R: Read>(reader: R, unparsable: &mut usize) -> Result<Vec<RawSite>> {
    let doc: serde_json::Value = serde_json::from_reader(reader)?;
    let features = doc
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| Error::InvalidInput("GeoJSON input must be a FeatureCollection".into()))?;
    let mut out = Vec::new();
    for (i, feat) in features.iter().enumerate() {
        let parsed = (|| {
            let geom = feat.get("geometry")?;
            if geom.get("type")?.as_str()? != "Point" {
                return None;
            }
            let coords = geom.get("coordinates")?.as_array()?;
            let lon = coords.first()?.as_f64()?;
            let lat = coords.get(1)?.as_f64()?;
            let name = feat.get("properties")?.get("feature")?.as_str()?;
            Some(RawSite { feature: name.to_string(), lat, lon })
        })();
        match parsed {
            Some(site) if site.lat.is_finite() && site.lon.is_finite() => out.push(site),
            _ => {
                warn!("GeoJSON feature {i}: not a point with a `feature` property, skipped");
                *unparsable += 1;
            }
        }
    }
    Ok(out)
}

/// Reads sites, bins them on `grid` and counts them per (cell, feature).
pub fn ingest_sites<R: Read>(
    reader: R,
    format: SiteFormat,
    catalog: &FeatureCatalog,
    grid: &HexGrid,
    projection: &Projection,
) -> Result<SiteIngest> {
    let mut skipped_unparsable = 0;
    let raw = match format {
        SiteFormat::Csv => read_site_csv(reader, &mut skipped_unparsable)?,
        SiteFormat::GeoJson => read_site_geojson(reader, &mut skipped_unparsable)?,
    };
    let mut counts = vec![vec![0u32; catalog.len()]; grid.len()];
    let mut sites = Vec::with_capacity(raw.len());
    let mut skipped_unknown = 0;
    let mut out_of_bounds = 0;
    for r in raw {
        let Some(feature) = catalog.position(&r.feature) else {
            skipped_unknown += 1;
            continue;
        };
        let location = projection.project(r.lat, r.lon);
        let Ok(cell) = grid.locate_index(&location) else {
            out_of_bounds += 1;
            continue;
        };
        counts[cell][feature] += 1;
        sites.push(SiteRecord { id: sites.len(), feature, lat: r.lat, lon: r.lon, location, cell });
    }
    if skipped_unknown > 0 {
        warn!("{skipped_unknown} site rows with features outside the catalog were skipped");
    }
    if out_of_bounds > 0 {
        warn!("{out_of_bounds} site rows outside the grid were skipped");
    }
    if sites.is_empty() {
        return Err(Error::EmptyInput("no valid site rows".into()));
    }
    Ok(SiteIngest { sites, counts, skipped_unknown, skipped_unparsable, out_of_bounds })
}

/// Reads incidents (`lat,lon[,timestamp]`) and counts them per cell.
pub fn ingest_incidents<R: Read>(
    reader: R,
    grid: &HexGrid,
    projection: &Projection,
) -> Result<IncidentIngest> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let pos = header_positions(&headers, &["lat", "lon", "timestamp"])?;
    let (Some(lai), Some(loi)) = (pos[0], pos[1]) else {
        return Err(Error::InvalidInput(format!(
            "incidents CSV header must contain lat,lon; got {headers:?}"
        )));
    };
    let mut y = vec![0u32; grid.len()];
    let mut incidents = Vec::new();
    let mut excluded = 0;
    let mut skipped_unparsable = 0;
    for (row, rec) in rdr.records().enumerate() {
        let parsed = rec.ok().and_then(|rec| {
            let lat = parse_coord(rec.get(lai))?;
            let lon = parse_coord(rec.get(loi))?;
            let ts = pos[2]
                .and_then(|i| rec.get(i))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            Some((lat, lon, ts))
        });
        let Some((lat, lon, timestamp)) = parsed else {
            warn!("incidents row {}: unparsable, skipped", row + 1);
            skipped_unparsable += 1;
            continue;
        };
        let location = projection.project(lat, lon);
        match grid.locate_index(&location) {
            Ok(cell) => {
                y[cell] += 1;
                incidents.push(IncidentRecord {
                    id: incidents.len(),
                    lat,
                    lon,
                    location,
                    cell,
                    timestamp,
                });
            }
            Err(_) => excluded += 1,
        }
    }
    if excluded > 0 {
        warn!("{excluded} incidents outside the grid were excluded");
    }
    if incidents.is_empty() {
        return Err(Error::EmptyInput("no valid incident rows".into()));
    }
    Ok(IncidentIngest { incidents, y, excluded, skipped_unparsable })
}

/// Per-cell feature counts `X` and incident counts `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub cell_ids: Vec<CellId>,
    pub feature_names: Vec<String>,
    pub counts: Vec<Vec<u32>>,
    pub y: Vec<u32>,
}

impl FeatureMatrix {
    pub fn assemble(
        grid: &HexGrid,
        catalog: &FeatureCatalog,
        counts: Vec<Vec<u32>>,
        y: Vec<u32>,
    ) -> Result<Self> {
        if counts.len() != grid.len() || y.len() != grid.len() {
            return Err(Error::Consistency(format!(
                "feature matrix has {} count rows and {} targets for {} cells",
                counts.len(),
                y.len(),
                grid.len()
            )));
        }
        if counts.iter().any(|row| row.len() != catalog.len()) {
            return Err(Error::Consistency("count row width differs from catalog".into()));
        }
        Ok(Self {
            cell_ids: grid.cells().iter().map(|c| c.id).collect(),
            feature_names: catalog.names(),
            counts,
            y,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row_f64(&self, cell: usize) -> Vec<f64> {
        self.counts[cell].iter().map(|&c| f64::from(c)).collect()
    }

    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        (0..self.n_cells()).map(|i| self.row_f64(i)).collect()
    }

    pub fn targets_f64(&self) -> Vec<f64> {
        self.y.iter().map(|&v| f64::from(v)).collect()
    }

    /// Writes `cell_id, y, <features...>` after the metadata line.
    pub fn write_csv<W: Write>(&self, w: W, meta: &ArtifactMeta) -> Result<()> {
        let mut wtr = csv_writer(w, meta)?;
        let mut header = vec!["cell_id".to_string(), "y".to_string()];
        header.extend(self.feature_names.iter().cloned());
        wtr.write_record(&header)?;
        for (i, id) in self.cell_ids.iter().enumerate() {
            let mut rec = vec![id.to_string(), self.y[i].to_string()];
            rec.extend(self.counts[i].iter().map(|c| c.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "cell_id" || &headers[1] != "y" {
            return Err(Error::InvalidInput("feature matrix header must start with cell_id,y".into()));
        }
        let feature_names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
        let bad = |row: usize| Error::InvalidInput(format!("feature matrix row {row} is malformed"));
        let mut cell_ids = Vec::new();
        let mut counts = Vec::new();
        let mut y = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(bad(i + 1));
            }
            cell_ids.push(rec[0].parse()?);
            y.push(rec[1].parse().map_err(|_| bad(i + 1))?);
            let row: std::result::Result<Vec<u32>, _> = rec.iter().skip(2).map(str::parse).collect();
            counts.push(row.map_err(|_| bad(i + 1))?);
        }
        Ok(Self { cell_ids, feature_names, counts, y })
    }
}

// ---------------------------------------------------------------------------
// Synthetic cities
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    Linear,
    /// Mean becomes `cap * (1 - exp(-linear / cap))` for positive linear terms.
    Saturating { cap: f64 },
}

impl Nonlinearity {
    fn apply(&self, linear: f64) -> f64 {
        match *self {
            Nonlinearity::Linear => linear,
            Nonlinearity::Saturating { cap } if linear > 0.0 => cap * (1.0 - (-linear / cap).exp()),
            Nonlinearity::Saturating { .. } => linear,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    /// Mean sites per full cell at unit urbanization, per catalog column.
    pub intensity: Vec<f64>,
    /// Ground-truth linear weights, per catalog column.
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    /// Urbanization floor added everywhere.
    pub base_urbanization: f64,
    pub hotspots: usize,
    pub hotspot_peak: f64,
    pub hotspot_sigma_m: f64,
    /// Gamma shape of the per-(cell, feature) intensity multiplier; 0 disables it.
    pub dispersion: f64,
    /// Standard deviation of incident offsets around their anchor site.
    pub incident_jitter_m: f64,
}

impl SynthParams {
    /// Uniform city with the given intensities and weights and no spatial structure.
    pub fn flat(intensity: Vec<f64>, weights: Vec<f64>, bias: f64) -> Self {
        Self {
            intensity,
            weights,
            bias,
            nonlinearity: Nonlinearity::Linear,
            base_urbanization: 1.0,
            hotspots: 0,
            hotspot_peak: 0.0,
            hotspot_sigma_m: 1.0,
            dispersion: 0.0,
            incident_jitter_m: 0.0,
        }
    }

    fn validate(&self, catalog: &FeatureCatalog) -> Result<()> {
        let m = catalog.len();
        if self.intensity.len() != m || self.weights.len() != m {
            return Err(Error::InvalidInput(format!(
                "generator parameters cover {} intensities and {} weights for {m} features",
                self.intensity.len(),
                self.weights.len()
            )));
        }
        if self.intensity.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("site intensities must be finite and non-negative".into()));
        }
        if self.weights.iter().any(|v| !v.is_finite()) || !self.bias.is_finite() {
            return Err(Error::InvalidInput("weights and bias must be finite".into()));
        }
        let nonneg = [self.base_urbanization, self.hotspot_peak, self.dispersion, self.incident_jitter_m];
        if nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "urbanization, hotspot peak, dispersion and jitter must be non-negative".into(),
            ));
        }
        if self.hotspots > 0 && !(self.hotspot_sigma_m > 0.0) {
            return Err(Error::InvalidInput("hotspot sigma must be positive".into()));
        }
        if let Nonlinearity::Saturating { cap } = self.nonlinearity {
            if !(cap > 0.0) {
                return Err(Error::InvalidInput("saturation cap must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub nonlinearity: Nonlinearity,
    /// Poisson mean of the incident count, per grid cell.
    pub cell_means: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SynthCity {
    pub sites: Vec<SiteRecord>,
    pub incidents: Vec<IncidentRecord>,
    pub truth: GroundTruth,
    /// Site counts per (cell, feature) as generated.
    pub counts: Vec<Vec<u32>>,
    /// Incident counts per cell as generated.
    pub y: Vec<u32>,
}

impl SynthCity {
    pub fn write_sites_csv<W: Write>(&self, w: W, catalog: &FeatureCatalog, meta: &ArtifactMeta) -> Result<()> {
        let mut wtr = csv_writer(w, meta)?;
        wtr.write_record(["feature", "lat", "lon"])?;
        for s in &self.sites {
            wtr.write_record([catalog.name(s.feature), &s.lat.to_string(), &s.lon.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_incidents_csv<W: Write>(&self, w: W, meta: &ArtifactMeta) -> Result<()> {
        let mut wtr = csv_writer(w, meta)?;
        wtr.write_record(["lat", "lon"])?;
        for inc in &self.incidents {
            wtr.write_record([inc.lat.to_string(), inc.lon.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Cell polygon clipped to the grid bbox, shrunk slightly so sampled points
/// stay strictly inside the box.
fn sampling_region(grid: &HexGrid, cell: usize) -> Vec<ProjectedPoint> {
    let b = grid.bbox();
    let inset = 1e-3;
    let rect = [
        ProjectedPoint::new(b.min_x + inset, b.min_y + inset),
        ProjectedPoint::new(b.max_x - inset, b.min_y + inset),
        ProjectedPoint::new(b.max_x - inset, b.max_y - inset),
        ProjectedPoint::new(b.min_x + inset, b.max_y - inset),
    ];
    clip_convex(&grid.cell(cell).polygon, &rect)
}

fn region_bounds(region: &[ProjectedPoint]) -> BBox {
    BBox::enclosing(region.iter(), 0.0).unwrap_or(BBox {
        min_x: region[0].x,
        min_y: region[0].y,
        max_x: region[0].x,
        max_y: region[0].y,
    })
}

/// Uniform point in the cell's sampling region that bins back to `cell`.
fn sample_in_cell<R: Rng>(
    rng: &mut R,
    grid: &HexGrid,
    cell: usize,
    bounds: &BBox,
) -> Option<ProjectedPoint> {
    for _ in 0..256 {
        let p = ProjectedPoint::new(
            rng.random_range(bounds.min_x..=bounds.max_x),
            rng.random_range(bounds.min_y..=bounds.max_y),
        );
        if grid.bbox().contains(&p) && grid.locate_index(&p).ok() == Some(cell) {
            return Some(p);
        }
    }
    None
}

fn draw_poisson<R: Rng>(rng: &mut R, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as u32
}

/// Generates a seeded city on `grid`: sites by per-cell Poisson counts with
/// uniform in-cell positions, incidents by a Poisson count per cell with mean
/// `max(0, g(w·X + bias))`, each incident anchored at a positively weighted
/// site (plus jitter) when the cell has one.
pub fn synth_city(
    seed: u64,
    grid: &HexGrid,
    catalog: &FeatureCatalog,
    params: &SynthParams,
    projection: &Projection,
) -> Result<SynthCity> {
    params.validate(catalog)?;
    let mut rng = rng_from_seed(seed);
    let bbox = grid.bbox();
    let m = catalog.len();

    let hotspots: Vec<(ProjectedPoint, f64)> = (0..params.hotspots)
        .map(|_| {
            let c = ProjectedPoint::new(
                rng.random_range(bbox.min_x..=bbox.max_x),
                rng.random_range(bbox.min_y..=bbox.max_y),
            );
            (c, params.hotspot_peak * rng.random_range(0.5..=1.0))
        })
        .collect();
    let urbanization = |p: &ProjectedPoint| -> f64 {
        let two_s2 = 2.0 * params.hotspot_sigma_m * params.hotspot_sigma_m;
        params.base_urbanization
            + hotspots
                .iter()
                .map(|(c, peak)| peak * (-(p.distance(c).powi(2)) / two_s2).exp())
                .sum::<f64>()
    };
    let gamma = if params.dispersion > 0.0 {
        Some(Gamma::new(params.dispersion, 1.0 / params.dispersion).expect("positive shape"))
    } else {
        None
    };

    let mut sites: Vec<SiteRecord> = Vec::new();
    let mut counts = vec![vec![0u32; m]; grid.len()];
    let mut site_range = Vec::with_capacity(grid.len());
    for cell in 0..grid.len() {
        let region = sampling_region(grid, cell);
        let start = sites.len();
        if !region.is_empty() {
            let area_frac = crate::geogrid::polygon_area(&region) / grid.cell(cell).area;
            let bounds = region_bounds(&region);
            let u = urbanization(&grid.cell(cell).center);
            for j in 0..m {
                let mult = gamma.as_ref().map_or(1.0, |g| g.sample(&mut rng));
                let n = draw_poisson(&mut rng, params.intensity[j] * u * mult * area_frac);
                for _ in 0..n {
                    let Some(p) = sample_in_cell(&mut rng, grid, cell, &bounds) else { continue };
                    let (lat, lon) = projection.unproject(p);
                    counts[cell][j] += 1;
                    sites.push(SiteRecord { id: sites.len(), feature: j, lat, lon, location: p, cell });
                }
            }
        }
        site_range.push(start..sites.len());
    }

    let jitter = (params.incident_jitter_m > 0.0)
        .then(|| Normal::new(0.0, params.incident_jitter_m).expect("positive std"));
    let mut incidents = Vec::new();
    let mut y = vec![0u32; grid.len()];
    let mut cell_means = Vec::with_capacity(grid.len());
    for cell in 0..grid.len() {
        let linear: f64 = params.bias
            + counts[cell].iter().zip(&params.weights).map(|(&x, w)| f64::from(x) * w).sum::<f64>();
        let mean = params.nonlinearity.apply(linear).max(0.0);
        cell_means.push(mean);
        let n = draw_poisson(&mut rng, mean);
        if n == 0 {
            continue;
        }
        let anchors = &sites[site_range[cell].clone()];
        let anchor_weights: Vec<f64> =
            anchors.iter().map(|s| params.weights[s.feature].max(0.0)).collect();
        let total_w: f64 = anchor_weights.iter().sum();
        let region = sampling_region(grid, cell);
        let bounds = region_bounds(&region);
        for _ in 0..n {
            let location = if total_w > 0.0 {
                let mut pick = rng.random_range(0.0..total_w);
                let mut chosen = anchors.len() - 1;
                for (i, w) in anchor_weights.iter().enumerate() {
                    if pick < *w {
                        chosen = i;
                        break;
                    }
                    pick -= w;
                }
                let base = anchors[chosen].location;
                let mut loc = base;
                if let Some(noise) = &jitter {
                    for _ in 0..32 {
                        let p = ProjectedPoint::new(base.x + noise.sample(&mut rng), base.y + noise.sample(&mut rng));
                        if grid.bbox().contains(&p) && grid.locate_index(&p).ok() == Some(cell) {
                            loc = p;
                            break;
                        }
                    }
                }
                loc
            } else {
                match sample_in_cell(&mut rng, grid, cell, &bounds) {
                    Some(p) => p,
                    None => grid.cell(cell).center,
                }
            };
            let (lat, lon) = projection.unproject(location);
            y[cell] += 1;
            incidents.push(IncidentRecord {
                id: incidents.len(),
                lat,
                lon,
                location,
                cell,
                timestamp: None,
            });
        }
    }

    Ok(SynthCity {
        sites,
        incidents,
        truth: GroundTruth {
            feature_names: catalog.names(),
            weights: params.weights.clone(),
            bias: params.bias,
            nonlinearity: params.nonlinearity.clone(),
            cell_means,
        },
        counts,
        y,
    })
}

//! Attribution-weighted incident density around candidate AED sites.
//!
//! For a candidate `k` with disk `A_k` of radius `r_A`:
//!
//! ```text
//! S_k = Σ_i ω_ik ρ_ik,  ω_ik = |I_i ∩ A_k| / |A_k|,  ρ_ik = Σ_{p ∈ I_i, |p-k| ≤ r_A} φ_p / |I_i|
//! ```
//!
//! `|A_k|` is the polygonized disk area so the weights of an interior disk
//! sum to one.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{csv_reader, csv_writer, ArtifactMeta};
use crate::datahub::SiteRecord;
use crate::error::{Error, Result};
use crate::explain::SiteShareMap;
use crate::geogrid::{disk_area, overlap_area, CellId, GridSignature, HexGrid, ProjectedPoint, Projection};
use crate::seed::rng_from_seed;

/// Coverage radius, 4 minutes at 4 m/s.
pub const DEFAULT_COVERAGE_RADIUS_M: f64 = 960.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSite {
    pub id: usize,
    /// Site the candidate was drawn from, when it came from a site list.
    pub site_id: Option<usize>,
    pub lat: f64,
    pub lon: f64,
    pub location: ProjectedPoint,
    pub radius: f64,
    pub score: f64,
}

/// Draws `count` distinct sites uniformly; candidates keep site order.
pub fn sample_candidates(sites: &[SiteRecord], count: usize, radius: f64, seed: u64) -> Result<Vec<CandidateSite>> {
    if count > sites.len() {
        return Err(Error::InvalidInput(format!(
            "cannot sample {count} candidates from {} sites",
            sites.len()
        )));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidInput(format!("candidate radius must be positive, got {radius}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut picked = rand::seq::index::sample(&mut rng, sites.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .enumerate()
        .map(|(k, i)| {
            let s = &sites[i];
            CandidateSite {
                id: k,
                site_id: Some(s.id),
                lat: s.lat,
                lon: s.lon,
                location: s.location,
                radius,
                score: 0.0,
            }
        })
        .collect())
}

/// Per-cell lists of site locations and shares, bound to one grid.
#[derive(Clone, Debug)]
pub struct SiteIndex {
    signature: GridSignature,
    by_cell: Vec<Vec<(ProjectedPoint, f64)>>,
}

impl SiteIndex {
    pub fn new(grid: &HexGrid, sites: &[SiteRecord], shares: &SiteShareMap) -> Result<Self> {
        let by_id: std::collections::HashMap<usize, &SiteRecord> = sites.iter().map(|s| (s.id, s)).collect();
        let mut by_cell = vec![Vec::new(); grid.len()];
        for share in &shares.shares {
            let site = by_id
                .get(&share.site_id)
                .ok_or_else(|| Error::Consistency(format!("share for unknown site {}", share.site_id)))?;
            if site.cell >= grid.len() || !grid.cell(site.cell).contains(&site.location) {
                return Err(Error::Consistency(format!(
                    "site {} is not binned on this grid",
                    site.id
                )));
            }
            by_cell[site.cell].push((site.location, share.phi));
        }
        Ok(Self { signature: grid.signature(), by_cell })
    }

    pub fn signature(&self) -> GridSignature {
        self.signature
    }

    /// Scales every share, keeping locations.
    pub fn scaled(&self, c: f64) -> Self {
        let by_cell = self
            .by_cell
            .iter()
            .map(|v| v.iter().map(|&(p, phi)| (p, phi * c)).collect())
            .collect();
        Self { signature: self.signature, by_cell }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapTerm {
    pub cell: usize,
    pub cell_id: CellId,
    pub omega: f64,
    /// Share mass per square meter of cell.
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct OverlapDecomposition {
    pub terms: Vec<OverlapTerm>,
}

impl OverlapDecomposition {
    pub fn score(&self) -> f64 {
        self.terms.iter().map(|t| t.omega * t.rho).sum()
    }

    pub fn omega_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.omega).sum()
    }
}

pub fn score_candidate(
    candidate: &CandidateSite,
    grid: &HexGrid,
    index: &SiteIndex,
) -> Result<(f64, OverlapDecomposition)> {
    if index.signature != grid.signature() {
        return Err(Error::Consistency("site index was built on a different grid".into()));
    }
    let (center, r) = (candidate.location, candidate.radius);
    if !(r.is_finite() && r > 0.0) || !center.is_finite() {
        return Err(Error::InvalidInput(format!("candidate {} has invalid geometry", candidate.id)));
    }
    let disk = disk_area(r);
    let mut terms = Vec::new();
    for i in grid.cells_near(&center, r) {
        let cell = grid.cell(i);
        let a = overlap_area(cell, &center, r)?;
        if a <= 0.0 {
            continue;
        }
        let mass: f64 = index.by_cell[i]
            .iter()
            .filter(|(p, _)| p.distance(&center) <= r)
            .map(|&(_, phi)| phi)
            .sum();
        terms.push(OverlapTerm { cell: i, cell_id: cell.id, omega: a / disk, rho: mass / cell.area });
    }
    let decomposition = OverlapDecomposition { terms };
    let s = decomposition.score();
    if !s.is_finite() {
        return Err(Error::Consistency(format!("candidate {} has non-finite score", candidate.id)));
    }
    Ok((s, decomposition))
}

/// Scores every candidate in parallel; input order is preserved.
pub fn score_all(candidates: &[CandidateSite], grid: &HexGrid, index: &SiteIndex) -> Result<Vec<CandidateSite>> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no candidates to score".into()));
    }
    candidates
        .par_iter()
        .map(|c| {
            let (score, _) = score_candidate(c, grid, index)
                .map_err(|e| Error::Candidate { candidate: c.id, source: Box::new(e) })?;
            Ok(CandidateSite { score, ..c.clone() })
        })
        .collect()
}

pub fn write_candidates_csv<W: Write>(w: W, candidates: &[CandidateSite], meta: &ArtifactMeta) -> Result<()> {
    let mut wtr = csv_writer(w, meta)?;
    wtr.write_record(["candidate_id", "lat", "lon", "s_k"])?;
    for c in candidates {
        wtr.write_record([c.id.to_string(), c.lat.to_string(), c.lon.to_string(), c.score.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_candidates_csv<R: Read>(r: R, projection: &Projection, radius: f64) -> Result<Vec<CandidateSite>> {
    #[derive(Deserialize)]
    struct Row {
        candidate_id: usize,
        lat: f64,
        lon: f64,
        s_k: f64,
    }
    let mut out = Vec::new();
    for row in csv_reader(r).deserialize() {
        let row: Row = row?;
        out.push(CandidateSite {
            id: row.candidate_id,
            site_id: None,
            lat: row.lat,
            lon: row.lon,
            location: projection.project(row.lat, row.lon),
            radius,
            score: row.s_k,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("candidate file has no rows".into()));
    }
    Ok(out)
}

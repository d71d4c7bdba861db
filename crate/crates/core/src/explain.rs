//! Shapley attribution of model predictions to input features, and the
//! equal split of a cell's feature attribution over that feature's sites.
//!
//! Features outside a coalition are substituted from background rows
//! (interventional expectation), so `value_fn(∅)` is the mean background
//! prediction and serves as the baseline φ₀.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{csv_writer, ArtifactMeta};
use crate::datahub::SiteRecord;
use crate::error::{Error, Result};
use crate::geogrid::CellId;
use crate::seed::{derive_seed, rng_from_seed};

/// Largest feature count accepted by [`exact_shapley`].
pub const EXACT_FEATURE_LIMIT: usize = 15;

pub trait Predictor: Sync {
    fn n_features(&self) -> usize;
    fn predict_row(&self, x: &[f64]) -> f64;
}

/// Adapts a closure into a [`Predictor`].
pub struct FnPredictor<F> {
    n_features: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnPredictor<F> {
    pub fn new(n_features: usize, f: F) -> Self {
        Self { n_features, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Predictor for FnPredictor<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundSet {
    rows: Vec<Vec<f64>>,
    seed: Option<u64>,
}

impl BackgroundSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("background set is empty".into()));
        }
        let m = rows[0].len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidInput("background rows differ in length".into()));
        }
        Ok(Self { rows, seed: None })
    }

    /// Uniform sample of at most `size` rows without replacement.
    pub fn sample(rows: &[Vec<f64>], size: usize, seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidInput("background size must be positive".into()));
        }
        let chosen = if size >= rows.len() {
            rows.to_vec()
        } else {
            let mut rng = rng_from_seed(seed);
            let mut idx = rand::seq::index::sample(&mut rng, rows.len(), size).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| rows[i].clone()).collect()
        };
        let mut bg = Self::new(chosen)?;
        bg.seed = Some(seed);
        Ok(bg)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn check(&self, model: &dyn Predictor, x: &[f64]) -> Result<()> {
        let m = model.n_features();
        if x.len() != m || self.rows[0].len() != m {
            return Err(Error::InvalidInput(format!(
                "input has {} features, background {}, model {m}",
                x.len(),
                self.rows[0].len()
            )));
        }
        Ok(())
    }

    fn mean_prediction(&self, model: &dyn Predictor) -> f64 {
        self.rows.iter().map(|b| model.predict_row(b)).sum::<f64>() / self.rows.len() as f64
    }
}

fn masked_value(model: &dyn Predictor, x: &[f64], keep: impl Fn(usize) -> bool, bg: &BackgroundSet) -> f64 {
    let mut z = vec![0.0; x.len()];
    let total: f64 = bg
        .rows
        .iter()
        .map(|b| {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = if keep(j) { x[j] } else { b[j] };
            }
            model.predict_row(&z)
        })
        .sum();
    total / bg.rows.len() as f64
}

/// Mean model output with features in `subset` taken from `x` and the rest
/// from each background row.
pub fn value_fn(model: &dyn Predictor, x: &[f64], subset: &[bool], bg: &BackgroundSet) -> Result<f64> {
    bg.check(model, x)?;
    if subset.len() != x.len() {
        return Err(Error::InvalidInput("subset mask length differs from feature count".into()));
    }
    if subset.iter().all(|&k| k) {
        return Ok(model.predict_row(x));
    }
    Ok(masked_value(model, x, |j| subset[j], bg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyValues {
    /// φ₀ = value_fn(∅).
    pub base: f64,
    pub phi: Vec<f64>,
    pub prediction: f64,
    /// Per-feature standard errors; `None` for exact enumeration.
    pub std_err: Option<Vec<f64>>,
}

impl ShapleyValues {
    pub fn residual(&self) -> f64 {
        self.prediction - self.base - self.phi.iter().sum::<f64>()
    }
}

/// Shapley values by enumerating all 2^M coalitions.
pub fn exact_shapley(model: &dyn Predictor, x: &[f64], bg: &BackgroundSet) -> Result<ShapleyValues> {
    bg.check(model, x)?;
    let m = x.len();
    if m > EXACT_FEATURE_LIMIT {
        return Err(Error::TooManyFeatures { features: m, limit: EXACT_FEATURE_LIMIT });
    }
    let full = (1usize << m) - 1;
    let values: Vec<f64> = (0..=full)
        .map(|mask| {
            if mask == full {
                model.predict_row(x)
            } else {
                masked_value(model, x, |j| mask >> j & 1 == 1, bg)
            }
        })
        .collect();

    // |S|! (M - |S| - 1)! / M! for |S| = 0..M-1.
    let mut fact = vec![1.0f64; m + 1];
    for k in 1..=m {
        fact[k] = fact[k - 1] * k as f64;
    }
    let weight: Vec<f64> =
        (0..m).map(|s| fact[s] * fact[m - s - 1] / fact[m]).collect();

    let phi = (0..m)
        .map(|j| {
            let bit = 1usize << j;
            (0..=full)
                .filter(|mask| mask & bit == 0)
                .map(|mask| weight[mask.count_ones() as usize] * (values[mask | bit] - values[mask]))
                .sum()
        })
        .collect();
    Ok(ShapleyValues { base: values[0], phi, prediction: values[full], std_err: None })
}

/// Permutation-sampling Shapley estimate. Each sampled ordering draws one
/// background row and walks features from background to `x` in that order.
pub fn sampled_shapley(
    model: &dyn Predictor,
    x: &[f64],
    bg: &BackgroundSet,
    n_perm: usize,
    seed: u64,
) -> Result<ShapleyValues> {
    bg.check(model, x)?;
    if n_perm == 0 {
        return Err(Error::InvalidInput("n_perm must be at least 1".into()));
    }
    let m = x.len();
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..m).collect();
    let mut sum = vec![0.0; m];
    let mut sum_sq = vec![0.0; m];
    let mut z = vec![0.0; m];
    for _ in 0..n_perm {
        let b = &bg.rows[rng.random_range(0..bg.rows.len())];
        order.shuffle(&mut rng);
        z.copy_from_slice(b);
        let mut prev = model.predict_row(&z);
        for &j in &order {
            z[j] = x[j];
            let cur = model.predict_row(&z);
            let d = cur - prev;
            sum[j] += d;
            sum_sq[j] += d * d;
            prev = cur;
        }
    }
    let n = n_perm as f64;
    let phi: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_err = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, sq)| {
            if n_perm < 2 {
                return f64::NAN;
            }
            let mean = s / n;
            let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    Ok(ShapleyValues {
        base: bg.mean_prediction(model),
        phi,
        prediction: model.predict_row(x),
        std_err: Some(std_err),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapMethod {
    Exact,
    Sampled { n_perm: usize },
}

/// Attributions for a set of grid cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    pub base: f64,
    pub method: ShapMethod,
    pub feature_names: Vec<String>,
    /// Grid positions of the attributed cells.
    pub cells: Vec<usize>,
    pub cell_ids: Vec<CellId>,
    /// `phi[row][feature]`, rows aligned with `cells`.
    pub phi: Vec<Vec<f64>>,
    pub predictions: Vec<f64>,
    /// Reconstruction residual before normalization (zero up to rounding for exact).
    pub residuals: Vec<f64>,
}

impl ShapAttribution {
    pub fn row_for_cell(&self, cell: usize) -> Option<usize> {
        self.cells.iter().position(|&c| c == cell)
    }

    pub fn write_csv<W: Write>(&self, w: W, meta: &ArtifactMeta) -> Result<()> {
        let mut wtr = csv_writer(w, meta)?;
        wtr.write_record(["cell_id", "feature", "phi"])?;
        for (row, id) in self.cell_ids.iter().enumerate() {
            for (j, name) in self.feature_names.iter().enumerate() {
                wtr.write_record([id.to_string(), name.clone(), self.phi[row][j].to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Spreads `residual` over features in proportion to `|φ_j|` (evenly when
/// every φ_j is zero) so the values sum exactly to the prediction gap.
fn absorb_residual(phi: &mut [f64], residual: f64) {
    let total: f64 = phi.iter().map(|p| p.abs()).sum();
    if total > 0.0 {
        for p in phi.iter_mut() {
            *p += residual * p.abs() / total;
        }
    } else if !phi.is_empty() {
        let each = residual / phi.len() as f64;
        phi.iter_mut().for_each(|p| *p += each);
    }
}

/// Attributes every listed cell. Sampled cells use independent streams
/// seeded from `(seed, cell)`; results do not depend on scheduling.
pub fn explain_cells(
    model: &dyn Predictor,
    rows: &[Vec<f64>],
    cells: &[usize],
    cell_ids: &[CellId],
    feature_names: &[String],
    bg: &BackgroundSet,
    method: ShapMethod,
    seed: u64,
) -> Result<ShapAttribution> {
    if cells.is_empty() {
        return Err(Error::EmptyInput("no cells to explain".into()));
    }
    if cells.len() != cell_ids.len() || cells.len() != rows.len() {
        return Err(Error::InvalidInput("cells, ids and rows must align".into()));
    }
    let base = bg.mean_prediction(model);
    let results: Vec<Result<ShapleyValues>> = cells
        .par_iter()
        .zip(rows.par_iter())
        .map(|(&cell, x)| match method {
            ShapMethod::Exact => exact_shapley(model, x, bg),
            ShapMethod::Sampled { n_perm } => {
                sampled_shapley(model, x, bg, n_perm, derive_seed(seed, "shap-cell", cell as u64))
            }
        })
        .collect();
    let mut phi = Vec::with_capacity(cells.len());
    let mut predictions = Vec::with_capacity(cells.len());
    let mut residuals = Vec::with_capacity(cells.len());
    for r in results {
        let sv = r?;
        let residual = sv.prediction - base - sv.phi.iter().sum::<f64>();
        let mut values = sv.phi;
        if matches!(method, ShapMethod::Sampled { .. }) {
            absorb_residual(&mut values, residual);
        }
        phi.push(values);
        predictions.push(sv.prediction);
        residuals.push(residual);
    }
    Ok(ShapAttribution {
        base,
        method,
        feature_names: feature_names.to_vec(),
        cells: cells.to_vec(),
        cell_ids: cell_ids.to_vec(),
        phi,
        predictions,
        residuals,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteShare {
    pub site_id: usize,
    pub cell: usize,
    pub feature: usize,
    pub phi: f64,
}

/// Per-site shares φ_p; sites in cells without an attribution are absent.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SiteShareMap {
    pub shares: Vec<SiteShare>,
}

impl SiteShareMap {
    pub fn get(&self, site_id: usize) -> Option<f64> {
        self.shares.iter().find(|s| s.site_id == site_id).map(|s| s.phi)
    }

    pub fn write_csv<W: Write>(
        &self,
        w: W,
        sites: &[SiteRecord],
        feature_names: &[String],
        meta: &ArtifactMeta,
    ) -> Result<()> {
        let by_id: HashMap<usize, &SiteRecord> = sites.iter().map(|s| (s.id, s)).collect();
        let mut wtr = csv_writer(w, meta)?;
        wtr.write_record(["site_id", "feature", "lat", "lon", "phi_p"])?;
        for share in &self.shares {
            let site = by_id
                .get(&share.site_id)
                .ok_or_else(|| Error::Consistency(format!("unknown site {}", share.site_id)))?;
            wtr.write_record([
                share.site_id.to_string(),
                feature_names[share.feature].clone(),
                site.lat.to_string(),
                site.lon.to_string(),
                share.phi.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Splits each φ_ij equally across the `X_ij` sites of feature `j` in cell `i`.
/// `counts` is indexed by grid position and must agree with the site list.
pub fn share_to_sites(
    attribution: &ShapAttribution,
    counts: &[Vec<u32>],
    sites: &[SiteRecord],
) -> Result<SiteShareMap> {
    let mut tally: HashMap<(usize, usize), u32> = HashMap::new();
    for s in sites {
        *tally.entry((s.cell, s.feature)).or_default() += 1;
    }
    for (row, &cell) in attribution.cells.iter().enumerate() {
        let cell_counts = counts.get(cell).ok_or_else(|| {
            Error::Consistency(format!("no feature counts for cell {}", attribution.cell_ids[row]))
        })?;
        for (j, &x) in cell_counts.iter().enumerate() {
            let seen = tally.get(&(cell, j)).copied().unwrap_or(0);
            if seen != x {
                return Err(Error::Consistency(format!(
                    "cell {} feature {}: {seen} sites but count {x}",
                    attribution.cell_ids[row], attribution.feature_names[j]
                )));
            }
        }
    }
    let row_of: HashMap<usize, usize> =
        attribution.cells.iter().enumerate().map(|(r, &c)| (c, r)).collect();
    let shares = sites
        .iter()
        .filter_map(|s| {
            let row = *row_of.get(&s.cell)?;
            let x = counts[s.cell][s.feature];
            Some(SiteShare {
                site_id: s.id,
                cell: s.cell,
                feature: s.feature,
                phi: attribution.phi[row][s.feature] / f64::from(x),
            })
        })
        .collect();
    Ok(SiteShareMap { shares })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRank {
    pub feature: String,
    pub column: usize,
    pub mean_abs_phi: f64,
}

/// Features by descending mean |φ| over cells; ties keep catalog order.
pub fn rank_features(attribution: &ShapAttribution) -> Result<Vec<FeatureRank>> {
    if attribution.phi.is_empty() {
        return Err(Error::EmptyInput("attribution covers no cells".into()));
    }
    let n = attribution.phi.len() as f64;
    let mut ranks: Vec<FeatureRank> = attribution
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| FeatureRank {
            feature: name.clone(),
            column: j,
            mean_abs_phi: attribution.phi.iter().map(|row| row[j].abs()).sum::<f64>() / n,
        })
        .collect();
    ranks.sort_by(|a, b| b.mean_abs_phi.total_cmp(&a.mean_abs_phi));
    Ok(ranks)
}

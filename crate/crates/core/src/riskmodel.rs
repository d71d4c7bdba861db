//! MLP regression from per-cell feature counts to incident counts.
//!
//! Hidden layers use ReLU, the output is linear. Inputs are standardized
//! with train-split statistics; targets are fit raw with mean-squared error
//! by seeded mini-batch SGD with momentum.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datahub::FeatureMatrix;
use crate::error::{Error, Result};
use crate::explain::Predictor;
use crate::geogrid::{CellId, HexGrid};
use crate::seed::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Parameter gradients laid out like [`Mlp::parameters`].
pub type Gradient = Vec<f64>;

impl Mlp {
    /// He-initialized network with zero biases.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut mlp = Self::zeros(sizes)?;
        for layer in &mut mlp.layers {
            let scale = (2.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                let z: f64 = StandardNormal.sample(rng);
                *w = z * scale;
            }
        }
        Ok(mlp)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidInput(format!("invalid layer sizes {sizes:?}")));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(Error::InvalidInput("regression network must have one output".into()));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if li < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Post-activation outputs of every layer, input first.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.apply(acts.last().unwrap(), &mut out);
            if li < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_parameters());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_parameters(), "parameter vector length");
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
    }

    fn add_scaled(&mut self, step: &[f64]) {
        let mut off = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w += step[off];
                off += 1;
            }
        }
    }

    /// Mean-squared error over the batch and its gradient by back-propagation.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[f64]) -> (f64, Gradient) {
        let n = xs.len() as f64;
        let mut grad = vec![0.0; self.n_parameters()];
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let start = *acc;
                *acc += l.weights.len() + l.bias.len();
                Some(start)
            })
            .collect();
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let acts = self.activations(x);
            let pred = acts.last().unwrap()[0];
            let err = pred - y;
            loss += err * err;
            // dL/d(pre-activation) of the current layer.
            let mut delta = vec![2.0 * err / n];
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let off = offsets[li];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = off + o * layer.inputs;
                    for (g, v) in grad[row..row + layer.inputs].iter_mut().zip(input) {
                        *g += d * v;
                    }
                    grad[off + layer.weights.len() + o] += d;
                }
                if li == 0 {
                    break;
                }
                let mut prev = vec![0.0; layer.inputs];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // ReLU derivative, using the post-activation value.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        (loss / n, grad)
    }
}

/// Per-feature standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits mean and population std; constant columns get std 1.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let m = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; m];
        for r in rows {
            for (a, v) in mean.iter_mut().zip(r) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= n);
        let mut var = vec![0.0; m];
        for r in rows {
            for ((s, v), mu) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - mu) * (v - mu);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SplitRule {
    /// Cells whose center lies strictly east of `x_m` train; the rest test.
    EastOf { x_m: f64 },
    /// Threshold at the median cell-center easting.
    MedianEast,
    Explicit { train: Vec<CellId>, test: Vec<CellId> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub rule: SplitRule,
    pub train: Vec<CellId>,
    pub test: Vec<CellId>,
}

pub fn split_cells(grid: &HexGrid, rule: &SplitRule) -> Result<SplitSpec> {
    let (train, test): (Vec<CellId>, Vec<CellId>) = match rule {
        SplitRule::EastOf { x_m } => {
            let (tr, te): (Vec<_>, Vec<_>) = grid.cells().iter().partition(|c| c.center.x > *x_m);
            (tr.iter().map(|c| c.id).collect(), te.iter().map(|c| c.id).collect())
        }
        SplitRule::MedianEast => {
            let mut xs: Vec<f64> = grid.cells().iter().map(|c| c.center.x).collect();
            xs.sort_by(f64::total_cmp);
            let median = if xs.is_empty() { 0.0 } else { xs[(xs.len() - 1) / 2] };
            return split_cells(grid, &SplitRule::EastOf { x_m: median }).map(|s| SplitSpec {
                rule: rule.clone(),
                ..s
            });
        }
        SplitRule::Explicit { train, test } => {
            let tr: HashSet<_> = train.iter().collect();
            let te: HashSet<_> = test.iter().collect();
            if tr.len() != train.len() || te.len() != test.len() {
                return Err(Error::InvalidSplit("duplicate cell ids in explicit split".into()));
            }
            if tr.intersection(&te).next().is_some() {
                return Err(Error::InvalidSplit("train and test cells overlap".into()));
            }
            if let Some(id) = train.iter().chain(test).find(|id| grid.index_of(**id).is_none()) {
                return Err(Error::InvalidSplit(format!("cell {id} is not in the grid")));
            }
            if tr.len() + te.len() != grid.len() {
                return Err(Error::InvalidSplit("explicit split does not cover every cell".into()));
            }
            let mut train = train.clone();
            let mut test = test.clone();
            train.sort();
            test.sort();
            (train, test)
        }
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidSplit(format!(
            "split leaves {} train and {} test cells",
            train.len(),
            test.len()
        )));
    }
    Ok(SplitSpec { rule: rule.clone(), train, test })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 penalty coefficient on all parameters.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 2000,
            batch_size: 16,
            weight_decay: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub train_r2: f64,
    pub train_mae: f64,
    /// `None` when the test targets have zero variance.
    pub test_r2: Option<f64>,
    pub test_mae: f64,
    /// Mean batch loss per epoch, in standardized target units.
    pub loss_curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedRiskModel {
    pub sizes: Vec<usize>,
    pub mlp: Mlp,
    pub normalizer: Normalizer,
    pub seed: u64,
    pub split: SplitSpec,
    pub feature_names: Vec<String>,
}

impl TrainedRiskModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.normalizer.mean.len() {
            return Err(Error::InvalidInput(format!(
                "feature row has {} entries, model expects {}",
                x.len(),
                self.normalizer.mean.len()
            )));
        }
        Ok(self.mlp.forward(&self.normalizer.apply(x)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        if model.mlp.sizes() != model.sizes || model.normalizer.mean.len() != model.sizes[0] {
            return Err(Error::InvalidInput("model document is internally inconsistent".into()));
        }
        Ok(model)
    }
}

impl Predictor for TrainedRiskModel {
    fn n_features(&self) -> usize {
        self.sizes[0]
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.mlp.forward(&self.normalizer.apply(x))
    }
}

/// Coefficient of determination and mean absolute error.
pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<(f64, f64)> {
    if y_true.len() != y_pred.len() || y_true.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "metrics need equal lengths of at least 2, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::DegenerateTarget("targets have zero variance".into()));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    let mae = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).abs()).sum::<f64>() / n;
    Ok((1.0 - ss_res / ss_tot, mae))
}

fn mae(y_true: &[f64], y_pred: &[f64]) -> f64 {
    y_true.iter().zip(y_pred).map(|(y, p)| (y - p).abs()).sum::<f64>() / y_true.len().max(1) as f64
}

fn rows_for(matrix: &FeatureMatrix, ids: &[CellId]) -> Result<Vec<usize>> {
    let pos: HashMap<CellId, usize> =
        matrix.cell_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    ids.iter()
        .map(|id| {
            pos.get(id)
                .copied()
                .ok_or_else(|| Error::Consistency(format!("split cell {id} missing from matrix")))
        })
        .collect()
}

pub fn train(
    matrix: &FeatureMatrix,
    split: &SplitSpec,
    hyper: &TrainHyper,
) -> Result<(TrainedRiskModel, FitReport)> {
    if hyper.batch_size == 0 || hyper.epochs == 0 {
        return Err(Error::InvalidInput("batch size and epochs must be positive".into()));
    }
    if !(hyper.learning_rate > 0.0) || !(0.0..1.0).contains(&hyper.momentum) {
        return Err(Error::InvalidInput("learning rate must be positive, momentum in [0, 1)".into()));
    }
    if !(hyper.weight_decay >= 0.0 && hyper.weight_decay.is_finite()) {
        return Err(Error::InvalidInput("weight decay must be non-negative".into()));
    }
    let train_rows = rows_for(matrix, &split.train)?;
    let test_rows = rows_for(matrix, &split.test)?;
    if train_rows.len() < 2 {
        return Err(Error::DegenerateTarget("fewer than two training cells".into()));
    }
    let raw_x: Vec<Vec<f64>> = train_rows.iter().map(|&i| matrix.row_f64(i)).collect();
    let train_y: Vec<f64> = train_rows.iter().map(|&i| f64::from(matrix.y[i])).collect();
    if train_y.iter().all(|&v| v == train_y[0]) {
        return Err(Error::DegenerateTarget("training targets are constant".into()));
    }

    let normalizer = Normalizer::fit(&raw_x);
    let train_x: Vec<Vec<f64>> = raw_x.iter().map(|r| normalizer.apply(r)).collect();

    let mut rng = rng_from_seed(hyper.seed);
    let mut sizes = vec![matrix.n_features()];
    sizes.extend(&hyper.hidden);
    sizes.push(1);
    let mut mlp = Mlp::new(&sizes, &mut rng)?;
    // Fit standardized targets; the scale is folded into the output layer afterwards.
    let y_scale = Normalizer::fit(&train_y.iter().map(|&v| vec![v]).collect::<Vec<_>>());
    let (y_mean, y_std) = (y_scale.mean[0], y_scale.std[0]);
    let scaled_y: Vec<f64> = train_y.iter().map(|v| (v - y_mean) / y_std).collect();

    let mut velocity = vec![0.0; mlp.n_parameters()];
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut loss_curve = Vec::with_capacity(hyper.epochs);
    let mut bx = Vec::with_capacity(hyper.batch_size);
    let mut by = Vec::with_capacity(hyper.batch_size);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(hyper.batch_size) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.push(train_x[i].clone());
                by.push(scaled_y[i]);
            }
            let (loss, mut grad) = mlp.loss_and_gradient(&bx, &by);
            if hyper.weight_decay > 0.0 {
                for (g, p) in grad.iter_mut().zip(mlp.parameters()) {
                    *g += hyper.weight_decay * p;
                }
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            for (v, g) in velocity.iter_mut().zip(&grad) {
                *v = hyper.momentum * *v - hyper.learning_rate * g;
            }
            mlp.add_scaled(&velocity);
            epoch_loss += loss;
            batches += 1;
        }
        loss_curve.push(epoch_loss / batches as f64);
    }
    let out = mlp.layers.last_mut().unwrap();
    out.weights.iter_mut().for_each(|w| *w *= y_std);
    out.bias[0] = out.bias[0] * y_std + y_mean;

    let model = TrainedRiskModel {
        sizes,
        mlp,
        normalizer,
        seed: hyper.seed,
        split: split.clone(),
        feature_names: matrix.feature_names.clone(),
    };
    if model.mlp.parameters().iter().any(|p| !p.is_finite()) {
        return Err(Error::Divergence { epoch: hyper.epochs - 1 });
    }

    let train_pred: Vec<f64> = train_rows.iter().map(|&i| model.predict_row(&matrix.row_f64(i))).collect();
    let (train_r2, train_mae) = metrics(&train_y, &train_pred)?;
    let test_y: Vec<f64> = test_rows.iter().map(|&i| f64::from(matrix.y[i])).collect();
    let test_pred: Vec<f64> = test_rows.iter().map(|&i| model.predict_row(&matrix.row_f64(i))).collect();
    let test_r2 = match metrics(&test_y, &test_pred) {
        Ok((r2, _)) => Some(r2),
        Err(Error::DegenerateTarget(_)) | Err(Error::InvalidInput(_)) => None,
        Err(e) => return Err(e),
    };
    let report = FitReport { train_r2, train_mae, test_r2, test_mae: mae(&test_y, &test_pred), loss_curve };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datahub::{FeatureCatalog, FeatureKind};
    use crate::geogrid::{build_grid_in_region, ProjectedPoint};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn metric_hand_values() {
        let y = [0.0, 2.0];
        assert_eq!(metrics(&y, &y).unwrap(), (1.0, 0.0));
        // Predicting the mean: MAE 1, R² exactly 0.
        let (r2, mae) = metrics(&y, &[1.0, 1.0]).unwrap();
        assert_eq!(r2, 0.0);
        assert_eq!(mae, 1.0);
        assert!(matches!(metrics(&[3.0, 3.0], &[1.0, 2.0]), Err(Error::DegenerateTarget(_))));
        assert!(matches!(metrics(&[1.0], &[1.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn metric_example_with_negative_r2() {
        // y = [0, 2], yhat = [1, 1]: SS_res = 2, SS_tot = 2.
        let (r2, mae) = metrics(&[0.0, 2.0], &[2.0, 0.0]).unwrap();
        assert!((r2 - (1.0 - 8.0 / 2.0)).abs() < 1e-15);
        assert!((mae - 2.0).abs() < 1e-15);
        let (r2, _) = metrics(&[0.0, 2.0, 1.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!(r2.abs() < 1e-15);
    }

    fn grid177() -> HexGrid {
        // Rectangle with its north-east corner cut off, as along a coastline.
        let region = [(0.0, 0.0), (42_500.0, 0.0), (42_500.0, 17_000.0), (39_500.0, 20_000.0), (0.0, 20_000.0)]
            .map(|(x, y)| ProjectedPoint::new(x, y));
        build_grid_in_region(&region, 1410.0).unwrap()
    }

    #[test]
    fn median_split_partitions_cells() {
        let grid = grid177();
        let s = split_cells(&grid, &SplitRule::MedianEast).unwrap();
        assert!(!s.train.is_empty() && !s.test.is_empty());
        assert_eq!(s.train.len() + s.test.len(), grid.len());
        let tr: HashSet<_> = s.train.iter().collect();
        assert!(s.test.iter().all(|id| !tr.contains(id)));
        assert_eq!(s, split_cells(&grid, &SplitRule::MedianEast).unwrap());
    }

    #[test]
    fn threshold_east_of_everything_is_invalid() {
        let grid = grid177();
        let r = split_cells(&grid, &SplitRule::EastOf { x_m: 1e9 });
        assert!(matches!(r, Err(Error::InvalidSplit(_))));
    }

    #[test]
    fn explicit_split_is_validated() {
        let grid = grid177();
        let ids: Vec<CellId> = grid.cells().iter().map(|c| c.id).collect();
        let ok = SplitRule::Explicit { train: ids[..10].to_vec(), test: ids[10..].to_vec() };
        assert_eq!(split_cells(&grid, &ok).unwrap().train.len(), 10);
        let overlap = SplitRule::Explicit { train: ids[..11].to_vec(), test: ids[10..].to_vec() };
        assert!(matches!(split_cells(&grid, &overlap), Err(Error::InvalidSplit(_))));
        let missing = SplitRule::Explicit { train: ids[..10].to_vec(), test: ids[11..].to_vec() };
        assert!(matches!(split_cells(&grid, &missing), Err(Error::InvalidSplit(_))));
    }

    #[test]
    fn tuned_threshold_reproduces_83_94_split() {
        let grid = grid177();
        assert_eq!(grid.len(), 177);
        let mut xs: Vec<f64> = grid.cells().iter().map(|c| c.center.x).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let found = xs.iter().find_map(|&x| {
            let s = split_cells(&grid, &SplitRule::EastOf { x_m: x }).ok()?;
            (s.train.len() == 83 && s.test.len() == 94).then_some(x)
        });
        assert_eq!(found, Some(grid.origin().x), "no easting threshold gives 83/94");
    }

    #[test]
    fn constant_network_outputs_bias() {
        let mut mlp = Mlp::zeros(&[3, 4, 1]).unwrap();
        mlp.layers[1].bias[0] = 2.5;
        assert_eq!(mlp.forward(&[1.0, -7.0, 100.0]), 2.5);
        assert_eq!(mlp.forward(&[0.0, 0.0, 0.0]), 2.5);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mlp = Mlp::new(&[5, 8, 1], &mut rng).unwrap();
        for b in &mut mlp.layers[0].bias {
            *b = rng.random_range(-0.5..0.5);
        }
        let xs: Vec<Vec<f64>> =
            (0..6).map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..3.0)).collect();
        let (_, analytic) = mlp.loss_and_gradient(&xs, &ys);
        let base = mlp.parameters();
        let h = 1e-4;
        let mut numeric = vec![0.0; base.len()];
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            mlp.set_parameters(&p);
            let up = mlp.loss_and_gradient(&xs, &ys).0;
            p[i] -= 2.0 * h;
            mlp.set_parameters(&p);
            let down = mlp.loss_and_gradient(&xs, &ys).0;
            numeric[i] = (up - down) / (2.0 * h);
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
            + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        assert!(diff / scale <= 1e-4, "relative error {}", diff / scale);
    }

    #[test]
    fn normalizer_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> =
            (0..30).map(|_| (0..4).map(|_| rng.random_range(0.0..50.0)).collect()).collect();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * 7.5).collect()).collect();
        let a = Normalizer::fit(&rows);
        let b = Normalizer::fit(&scaled);
        for (r, s) in rows.iter().zip(&scaled) {
            for (u, v) in a.apply(r).iter().zip(b.apply(s)) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    fn linear_matrix(grid: &HexGrid) -> FeatureMatrix {
        let catalog = FeatureCatalog::from_names(FeatureKind::Poi, &["a", "b", "c"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let counts: Vec<Vec<u32>> = (0..grid.len())
            .map(|_| (0..3).map(|_| rng.random_range(0..30)).collect())
            .collect();
        let y = counts.iter().map(|r| r[0]).collect();
        FeatureMatrix::assemble(grid, &catalog, counts, y).unwrap()
    }

    #[test]
    fn noiseless_linear_target_is_learned() {
        let grid = grid177();
        let fm = linear_matrix(&grid);
        let split = split_cells(&grid, &SplitRule::MedianEast).unwrap();
        let hyper = TrainHyper { epochs: 600, seed: 4, ..TrainHyper::default() };
        let (model, report) = train(&fm, &split, &hyper).unwrap();
        assert!(report.test_r2.unwrap() >= 0.99, "{report:?}");
        assert!(report.train_mae >= 0.0);
        // Seeded determinism.
        let (again, _) = train(&fm, &split, &hyper).unwrap();
        assert_eq!(model.mlp.parameters(), again.mlp.parameters());
        let x = fm.row_f64(0);
        assert_eq!(model.predict(&x).unwrap().to_bits(), model.predict(&x).unwrap().to_bits());
        assert!(matches!(model.predict(&x[..2]), Err(Error::InvalidInput(_))));
        let back = TrainedRiskModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back.predict(&x).unwrap().to_bits(), model.predict(&x).unwrap().to_bits());
    }

    #[test]
    fn constant_targets_are_rejected() {
        let grid = grid177();
        let mut fm = linear_matrix(&grid);
        fm.y.iter_mut().for_each(|v| *v = 4);
        let split = split_cells(&grid, &SplitRule::MedianEast).unwrap();
        let r = train(&fm, &split, &TrainHyper { epochs: 2, ..TrainHyper::default() });
        assert!(matches!(r, Err(Error::DegenerateTarget(_))));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let grid = grid177();
        let fm = linear_matrix(&grid);
        let split = split_cells(&grid, &SplitRule::MedianEast).unwrap();
        let hyper = TrainHyper { epochs: 200, learning_rate: 10.0, ..TrainHyper::default() };
        assert!(matches!(train(&fm, &split, &hyper), Err(Error::Divergence { .. })));
    }
}

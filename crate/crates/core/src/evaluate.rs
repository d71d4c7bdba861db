//! Plan evaluation against historical incidents, and parameter sweeps.
//!
//! Coverage counts incidents whose nearest selected AED is within `C_R`
//! (closed). Survival is the logistic response
//!
//! ```text
//! s(t) = 1 / (1 + exp(b0 + b_aed t_AED + b_cpr t_CPR))  if t_AED < cutoff, else 0
//! ```
//!
//! with `t_AED` the walking time from the nearest AED.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{csv_writer, ArtifactMeta};
use crate::density::{CandidateSite, DEFAULT_COVERAGE_RADIUS_M};
use crate::error::{Error, Result};
use crate::geogrid::ProjectedPoint;
use crate::optimizer::{build_conflicts, solve, DeploymentPlan, SolverKind};
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CprRule {
    EqualToAed,
    Fixed { minutes: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalParams {
    pub intercept: f64,
    pub aed_coef: f64,
    pub cpr_coef: f64,
    pub cutoff_min: f64,
    pub speed_mps: f64,
    pub cpr_rule: CprRule,
}

impl Default for SurvivalParams {
    fn default() -> Self {
        Self {
            intercept: -0.26,
            aed_coef: 0.106,
            cpr_coef: 0.139,
            cutoff_min: 4.0,
            speed_mps: 4.0,
            cpr_rule: CprRule::EqualToAed,
        }
    }
}

impl SurvivalParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.intercept, self.aed_coef, self.cpr_coef].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("survival coefficients must be finite".into()));
        }
        if !(self.speed_mps.is_finite() && self.speed_mps > 0.0) {
            return Err(Error::InvalidInput(format!("speed must be positive, got {}", self.speed_mps)));
        }
        if !(self.cutoff_min.is_finite() && self.cutoff_min > 0.0) {
            return Err(Error::InvalidInput(format!("cutoff must be positive, got {}", self.cutoff_min)));
        }
        if let CprRule::Fixed { minutes } = self.cpr_rule {
            if !(minutes.is_finite() && minutes >= 0.0) {
                return Err(Error::InvalidInput(format!("fixed CPR time must be non-negative, got {minutes}")));
            }
        }
        Ok(())
    }

    /// Minutes to cover `distance_m` at the responder speed.
    pub fn minutes(&self, distance_m: f64) -> f64 {
        distance_m / self.speed_mps / 60.0
    }

    /// Radius reachable before the cutoff.
    pub fn reach_m(&self) -> f64 {
        self.speed_mps * self.cutoff_min * 60.0
    }

    pub fn probability(&self, t_aed: f64, t_cpr: f64) -> f64 {
        if !(t_aed < self.cutoff_min) {
            return 0.0;
        }
        1.0 / (1.0 + (self.intercept + self.aed_coef * t_aed + self.cpr_coef * t_cpr).exp())
    }

    /// Survival for an AED `t_aed` minutes away, with `t_CPR` from the rule.
    pub fn at(&self, t_aed: f64) -> f64 {
        let t_cpr = match self.cpr_rule {
            CprRule::EqualToAed => t_aed,
            CprRule::Fixed { minutes } => minutes,
        };
        self.probability(t_aed, t_cpr)
    }
}

fn nearest(aeds: &[ProjectedPoint], p: &ProjectedPoint) -> Option<f64> {
    aeds.iter().map(|a| a.distance(p)).min_by(f64::total_cmp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub count: usize,
    /// Positions in the incident list.
    pub covered: Vec<usize>,
}

pub fn coverage(aeds: &[ProjectedPoint], incidents: &[ProjectedPoint], radius: f64) -> Result<Coverage> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidInput(format!("coverage radius must be positive, got {radius}")));
    }
    if aeds.is_empty() {
        log::warn!("coverage of an empty plan is zero");
    }
    let covered: Vec<usize> = incidents
        .iter()
        .enumerate()
        .filter(|(_, h)| nearest(aeds, h).is_some_and(|d| d <= radius))
        .map(|(i, _)| i)
        .collect();
    Ok(Coverage { count: covered.len(), covered })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Survival {
    pub mean: f64,
    pub values: Vec<f64>,
}

pub fn survival(aeds: &[ProjectedPoint], incidents: &[ProjectedPoint], params: &SurvivalParams) -> Result<Survival> {
    params.validate()?;
    if aeds.is_empty() {
        log::warn!("survival under an empty plan is zero");
    }
    let values: Vec<f64> = incidents
        .iter()
        .map(|h| nearest(aeds, h).map_or(0.0, |d| params.at(params.minutes(d))))
        .collect();
    let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
    Ok(Survival { mean, values })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncidentOutcome {
    pub incident: usize,
    /// `None` when the plan is empty.
    pub nearest_m: Option<f64>,
    pub t_aed_min: Option<f64>,
    pub covered: bool,
    pub survival: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub solver: String,
    pub n: usize,
    pub d_min_m: f64,
    pub aeds: usize,
    pub incidents: usize,
    pub coverage_radius_m: f64,
    pub coverage_count: usize,
    pub coverage_fraction: f64,
    pub mean_survival: f64,
    pub outcomes: Vec<IncidentOutcome>,
}

pub fn evaluate_plan(
    plan: &DeploymentPlan,
    candidates: &[CandidateSite],
    incidents: &[ProjectedPoint],
    radius: f64,
    params: &SurvivalParams,
) -> Result<EvaluationReport> {
    let aeds = plan.locations(candidates);
    let cov = coverage(&aeds, incidents, radius)?;
    let surv = survival(&aeds, incidents, params)?;
    let mut covered = vec![false; incidents.len()];
    cov.covered.iter().for_each(|&i| covered[i] = true);
    let outcomes = incidents
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let d = nearest(&aeds, h);
            IncidentOutcome {
                incident: i,
                nearest_m: d,
                t_aed_min: d.map(|d| params.minutes(d)),
                covered: covered[i],
                survival: surv.values[i],
            }
        })
        .collect();
    Ok(EvaluationReport {
        solver: plan.solver.name().to_string(),
        n: plan.n,
        d_min_m: plan.d_min,
        aeds: aeds.len(),
        incidents: incidents.len(),
        coverage_radius_m: radius,
        coverage_count: cov.count,
        coverage_fraction: if incidents.is_empty() { 0.0 } else { cov.count as f64 / incidents.len() as f64 },
        mean_survival: surv.mean,
        outcomes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub n_values: Vec<usize>,
    pub d_min_m: Vec<f64>,
    pub solvers: Vec<SolverKind>,
    pub coverage_radius_m: f64,
    pub survival: SurvivalParams,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            n_values: vec![5, 10, 20, 40, 60, 80, 100],
            d_min_m: vec![0.0, 600.0, 800.0, 960.0, 1000.0, 1200.0, 1400.0, 1600.0],
            solvers: vec![SolverKind::Sip, SolverKind::Random],
            coverage_radius_m: DEFAULT_COVERAGE_RADIUS_M,
            survival: SurvivalParams::default(),
        }
    }
}

/// One (set, N, D_min, solver) evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub set: usize,
    pub solver: SolverKind,
    pub n: usize,
    pub d_min_m: f64,
    pub objective: Option<f64>,
    pub coverage: Option<usize>,
    pub survival: Option<f64>,
    pub error: Option<String>,
}

/// Aggregate over candidate sets for one (solver, N, D_min).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub solver: SolverKind,
    pub n: usize,
    pub d_min_m: f64,
    pub sets: usize,
    pub coverage_mean: f64,
    pub coverage_std: f64,
    pub survival_mean: f64,
    pub survival_std: f64,
    pub pct_increase_vs_random: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub rows: Vec<SweepRow>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn check_spec(spec: &SweepSpec, sets: &[Vec<CandidateSite>]) -> Result<()> {
    if sets.is_empty() || spec.n_values.is_empty() || spec.d_min_m.is_empty() || spec.solvers.is_empty() {
        return Err(Error::EmptyInput("sweep needs candidate sets, N values, D_min values and solvers".into()));
    }
    if !(spec.coverage_radius_m.is_finite() && spec.coverage_radius_m > 0.0) {
        return Err(Error::InvalidInput("coverage radius must be positive".into()));
    }
    spec.survival.validate()
}

/// Runs every (set, N, D_min, solver) combination. A failing cell records its
/// error and the sweep continues. Random plans depend only on (set, N), so
/// they coincide across D_min values.
pub fn sweep(
    sets: &[Vec<CandidateSite>],
    incidents: &[ProjectedPoint],
    spec: &SweepSpec,
    seed: u64,
) -> Result<SweepResult> {
    check_spec(spec, sets)?;
    let jobs: Vec<(usize, f64)> =
        (0..sets.len()).flat_map(|s| spec.d_min_m.iter().map(move |&d| (s, d))).collect();
    let per_job: Vec<Vec<SweepCell>> = jobs
        .par_iter()
        .map(|&(set, d_min)| {
            let candidates = &sets[set];
            let scores: Vec<f64> = candidates.iter().map(|c| c.score).collect();
            let graph = build_conflicts(candidates, d_min).map_err(|e| e.to_string());
            let mut cells = Vec::new();
            for &n in &spec.n_values {
                for &solver in &spec.solvers {
                    let plan_seed = derive_seed(seed, "random-plan", ((set as u64) << 32) | n as u64);
                    let outcome = graph.as_ref().map_err(Clone::clone).and_then(|g| {
                        let run = || -> Result<_> {
                            let plan = solve(solver, g, &scores, n, plan_seed)?;
                            let aeds = plan.locations(candidates);
                            let cov = coverage(&aeds, incidents, spec.coverage_radius_m)?;
                            let surv = survival(&aeds, incidents, &spec.survival)?;
                            Ok((plan.objective, cov.count, surv.mean))
                        };
                        run().map_err(|e| e.to_string())
                    });
                    cells.push(match outcome {
                        Ok((objective, cov, surv)) => SweepCell {
                            set,
                            solver,
                            n,
                            d_min_m: d_min,
                            objective: Some(objective),
                            coverage: Some(cov),
                            survival: Some(surv),
                            error: None,
                        },
                        Err(e) => {
                            log::warn!("sweep cell set={set} n={n} d_min={d_min} solver={}: {e}", solver.name());
                            SweepCell {
                                set,
                                solver,
                                n,
                                d_min_m: d_min,
                                objective: None,
                                coverage: None,
                                survival: None,
                                error: Some(e),
                            }
                        }
                    });
                }
            }
            cells
        })
        .collect();
    let mut cells: Vec<SweepCell> = per_job.into_iter().flatten().collect();
    cells.sort_by(|a, b| {
        (a.solver, a.n, a.set)
            .cmp(&(b.solver, b.n, b.set))
            .then(a.d_min_m.total_cmp(&b.d_min_m))
    });
    let rows = aggregate(&cells, spec);
    Ok(SweepResult { cells, rows })
}

fn aggregate(cells: &[SweepCell], spec: &SweepSpec) -> Vec<SweepRow> {
    // Keyed by (solver, n, d_min bits) for deterministic order.
    let mut groups: BTreeMap<(SolverKind, usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let d_pos = |d: f64| spec.d_min_m.iter().position(|&x| x.to_bits() == d.to_bits()).unwrap_or(usize::MAX);
    for c in cells {
        if let (Some(cov), Some(surv)) = (c.coverage, c.survival) {
            let g = groups.entry((c.solver, c.n, d_pos(c.d_min_m))).or_default();
            g.0.push(cov as f64);
            g.1.push(surv);
        }
    }
    let random_mean: BTreeMap<(usize, usize), f64> = groups
        .iter()
        .filter(|((s, _, _), _)| *s == SolverKind::Random)
        .map(|(&(_, n, d), (cov, _))| ((n, d), mean_std(cov).0))
        .collect();
    groups
        .iter()
        .map(|(&(solver, n, d), (cov, surv))| {
            let (coverage_mean, coverage_std) = mean_std(cov);
            let (survival_mean, survival_std) = mean_std(surv);
            SweepRow {
                solver,
                n,
                d_min_m: spec.d_min_m[d],
                sets: cov.len(),
                coverage_mean,
                coverage_std,
                survival_mean,
                survival_std,
                pct_increase_vs_random: random_mean
                    .get(&(n, d))
                    .filter(|&&r| r > 0.0)
                    .map(|&r| (coverage_mean - r) / r * 100.0),
            }
        })
        .collect()
}

impl SweepResult {
    pub fn write_summary_csv<W: Write>(&self, w: W, meta: &ArtifactMeta) -> Result<()> {
        let mut wtr = csv_writer(w, meta)?;
        wtr.write_record([
            "solver",
            "n",
            "d_min_m",
            "coverage_mean",
            "coverage_std",
            "survival_mean",
            "survival_std",
            "pct_increase_vs_random",
        ])?;
        for r in &self.rows {
            wtr.write_record([
                r.solver.name().to_string(),
                r.n.to_string(),
                r.d_min_m.to_string(),
                r.coverage_mean.to_string(),
                r.coverage_std.to_string(),
                r.survival_mean.to_string(),
                r.survival_std.to_string(),
                r.pct_increase_vs_random.map(|p| p.to_string()).unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// One line per (set, solver, N, D_min) for plotting.
    pub fn write_long_csv<W: Write>(&self, w: W, meta: &ArtifactMeta) -> Result<()> {
        let mut wtr = csv_writer(w, meta)?;
        wtr.write_record(["set", "solver", "n", "d_min_m", "objective", "coverage", "survival", "error"])?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for c in &self.cells {
            wtr.write_record([
                c.set.to_string(),
                c.solver.name().to_string(),
                c.n.to_string(),
                c.d_min_m.to_string(),
                opt(c.objective.map(|v| v.to_string())),
                opt(c.coverage.map(|v| v.to_string())),
                opt(c.survival.map(|v| v.to_string())),
                opt(c.error.clone()),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64, y: f64) -> ProjectedPoint {
        ProjectedPoint::new(x, y)
    }

    #[test]
    fn survival_reference_values() {
        let p = SurvivalParams::default();
        assert!((p.probability(0.0, 0.0) - 0.564_636_291_8).abs() < 1e-9);
        let expect = 1.0 / (1.0 + 0.23f64.exp());
        assert!((p.probability(2.0, 2.0) - expect).abs() < 1e-12);
        assert!((p.probability(2.0, 2.0) - 0.4428).abs() < 1e-4);
        assert_eq!(p.at(4.0), 0.0);
        assert_eq!(p.at(9.0), 0.0);
        assert!(p.at(3.999) > 0.0);
    }

    #[test]
    fn fixed_cpr_rule_is_used() {
        let p = SurvivalParams { cpr_rule: CprRule::Fixed { minutes: 1.0 }, ..SurvivalParams::default() };
        let expect = 1.0 / (1.0 + (-0.26 + 0.106 * 2.0 + 0.139f64).exp());
        assert!((p.at(2.0) - expect).abs() < 1e-12);
        let bad = SurvivalParams { speed_mps: 0.0, ..SurvivalParams::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn coverage_boundaries() {
        let inc = vec![pt(0.0, 0.0), pt(960.0, 0.0), pt(960.000_001, 0.0)];
        let c = coverage(&[pt(0.0, 0.0)], &inc, 960.0).unwrap();
        assert_eq!(c.covered, vec![0, 1]);
        assert_eq!(coverage(&[pt(5.0, 5.0)], &[pt(5.0, 5.0)], 1e-3).unwrap().count, 1);
        assert_eq!(coverage(&[], &inc, 960.0).unwrap().count, 0);
        assert!(survival(&[], &inc, &SurvivalParams::default()).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(coverage(&[pt(0.0, 0.0)], &inc, 0.0).is_err());
    }

    #[test]
    fn coverage_matches_all_pairs_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut p = || pt(rng.random_range(0.0..5000.0), rng.random_range(0.0..5000.0));
        let inc: Vec<_> = (0..50).map(|_| p()).collect();
        let aeds: Vec<_> = (0..5).map(|_| p()).collect();
        let mut expect = 0;
        for h in &inc {
            if aeds.iter().any(|a| (a.x - h.x).powi(2) + (a.y - h.y).powi(2) <= 960.0 * 960.0) {
                expect += 1;
            }
        }
        assert_eq!(coverage(&aeds, &inc, 960.0).unwrap().count, expect);
    }

    #[test]
    fn positive_survival_implies_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let params = SurvivalParams::default();
        let inc: Vec<_> = (0..400).map(|_| pt(rng.random_range(0.0..6000.0), rng.random_range(0.0..6000.0))).collect();
        let aeds: Vec<_> = (0..6).map(|_| pt(rng.random_range(0.0..6000.0), rng.random_range(0.0..6000.0))).collect();
        let cov = coverage(&aeds, &inc, params.reach_m()).unwrap();
        let surv = survival(&aeds, &inc, &params).unwrap();
        for (i, &s) in surv.values.iter().enumerate() {
            if s > 0.0 {
                assert!(cov.covered.contains(&i));
            }
        }
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }

    fn toy_sets(n_sets: usize) -> (Vec<Vec<CandidateSite>>, Vec<ProjectedPoint>) {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let inc: Vec<_> = (0..300).map(|_| pt(rng.random_range(0.0..8000.0), rng.random_range(0.0..4000.0))).collect();
        let sets = (0..n_sets)
            .map(|_| {
                (0..40)
                    .map(|k| {
                        let p = pt(rng.random_range(0.0..8000.0), rng.random_range(0.0..4000.0));
                        let score = inc.iter().filter(|h| h.distance(&p) <= 960.0).count() as f64;
                        CandidateSite { id: k, site_id: None, lat: 0.0, lon: 0.0, location: p, radius: 960.0, score }
                    })
                    .collect()
            })
            .collect();
        (sets, inc)
    }

    #[test]
    fn sweep_grid_cardinality_and_independence() {
        let (sets, inc) = toy_sets(2);
        let spec = SweepSpec {
            n_values: vec![3, 6],
            d_min_m: vec![0.0, 1200.0],
            solvers: vec![SolverKind::Exact, SolverKind::Random],
            ..SweepSpec::default()
        };
        let full = sweep(&sets, &inc, &spec, 1).unwrap();
        assert_eq!(full.cells.len(), 16);
        assert_eq!(full.rows.len(), 8);
        let fewer = sweep(&sets, &inc, &SweepSpec { d_min_m: vec![1200.0], ..spec.clone() }, 1).unwrap();
        assert!(fewer.cells.len() < full.cells.len());
        for c in &fewer.cells {
            assert!(full.cells.contains(c));
        }
        assert_eq!(full, sweep(&sets, &inc, &spec, 1).unwrap());
        for r in full.rows.iter().filter(|r| r.solver == SolverKind::Random) {
            assert_eq!(r.pct_increase_vs_random, Some(0.0));
        }
    }

    #[test]
    fn degenerate_sweep_equals_direct_evaluation() {
        let (sets, inc) = toy_sets(1);
        let spec = SweepSpec { n_values: vec![5], d_min_m: vec![0.0], solvers: vec![SolverKind::Exact], ..SweepSpec::default() };
        let res = sweep(&sets, &inc, &spec, 9).unwrap();
        let graph = build_conflicts(&sets[0], 0.0).unwrap();
        let scores: Vec<f64> = sets[0].iter().map(|c| c.score).collect();
        let plan = crate::optimizer::solve_exact(&graph, &scores, 5).unwrap();
        let report = evaluate_plan(&plan, &sets[0], &inc, 960.0, &SurvivalParams::default()).unwrap();
        assert_eq!(res.cells.len(), 1);
        assert_eq!(res.cells[0].coverage, Some(report.coverage_count));
        assert_eq!(res.cells[0].survival, Some(report.mean_survival));
        assert_eq!(res.rows[0].coverage_std, 0.0);
    }

    #[test]
    fn failing_cells_are_recorded() {
        let (sets, inc) = toy_sets(1);
        let spec = SweepSpec { n_values: vec![5, 50], d_min_m: vec![0.0], solvers: vec![SolverKind::Random], ..SweepSpec::default() };
        let res = sweep(&sets, &inc, &spec, 9).unwrap();
        assert_eq!(res.cells.len(), 2);
        assert!(res.cells.iter().any(|c| c.n == 50 && c.error.is_some()));
        assert!(res.cells.iter().any(|c| c.n == 5 && c.coverage.is_some()));
        let mut buf = Vec::new();
        res.write_long_csv(&mut buf, &ArtifactMeta::detached(9)).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn survival_decreases_then_vanishes(a in 0.0f64..3.99, b in 0.0f64..3.99, cut in 4.0f64..20.0) {
                let p = SurvivalParams::default();
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                prop_assume!(hi - lo > 1e-9);
                prop_assert!(p.at(lo) > p.at(hi));
                let fixed = SurvivalParams { cpr_rule: CprRule::Fixed { minutes: 1.5 }, ..p };
                prop_assert!(fixed.at(lo) > fixed.at(hi));
                prop_assert_eq!(p.at(cut), 0.0);
            }

            #[test]
            fn adding_an_aed_never_hurts(seed in 0u64..5000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut p = || pt(rng.random_range(0.0..4000.0), rng.random_range(0.0..4000.0));
                let inc: Vec<_> = (0..60).map(|_| p()).collect();
                let mut aeds: Vec<_> = (0..3).map(|_| p()).collect();
                let params = SurvivalParams::default();
                let c0 = coverage(&aeds, &inc, 960.0).unwrap().count;
                let s0 = survival(&aeds, &inc, &params).unwrap();
                aeds.push(p());
                prop_assert!(coverage(&aeds, &inc, 960.0).unwrap().count >= c0);
                let s1 = survival(&aeds, &inc, &params).unwrap();
                for (a, b) in s0.values.iter().zip(&s1.values) {
                    prop_assert!(b >= a);
                }
            }
        }
    }
}

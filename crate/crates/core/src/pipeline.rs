//! Stage orchestration. Each stage computes its inputs from upstream stages
//! on demand, writes its artifacts under the output directory, and tags any
//! failure with its stage name.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::artifact::{csv_writer, to_json_with_meta, ArtifactMeta};
use crate::config::{DeployArea, RunConfig};
use crate::datahub::{
    ingest_incidents, ingest_sites, synth_city, FeatureCatalog, FeatureMatrix, IncidentRecord, SiteFormat,
    SiteRecord,
};
use crate::density::{sample_candidates, score_all, write_candidates_csv, CandidateSite, SiteIndex};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_plan, sweep, EvaluationReport, SweepResult};
use crate::explain::{explain_cells, rank_features, share_to_sites, BackgroundSet, ShapAttribution, SiteShareMap};
use crate::geogrid::{HexGrid, ProjectedPoint, Projection};
use crate::optimizer::{build_conflicts, solve, DeploymentPlan};
use crate::riskmodel::{split_cells, train, FitReport, TrainHyper, TrainedRiskModel};
use crate::seed::derive_seed;

/// An error raised while running the named stage.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait Tag<T> {
    fn stage(self, stage: &'static str) -> StageResult<T>;
}

impl<T> Tag<T> for Result<T> {
    fn stage(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

pub struct GridStage {
    pub grid: HexGrid,
    pub projection: Projection,
    pub catalog: FeatureCatalog,
}

#[derive(Serialize)]
struct IngestSummary {
    sites: usize,
    incidents: usize,
    sites_skipped_unknown: usize,
    sites_skipped_unparsable: usize,
    sites_out_of_bounds: usize,
    incidents_excluded: usize,
    incidents_skipped_unparsable: usize,
}

pub struct IngestStage {
    pub sites: Vec<SiteRecord>,
    pub incidents: Vec<IncidentRecord>,
    pub matrix: FeatureMatrix,
}

pub struct TrainStage {
    pub model: TrainedRiskModel,
    pub report: Option<FitReport>,
    /// Grid positions of the cells where AEDs are deployed and evaluated.
    pub deploy_cells: Vec<usize>,
}

pub struct ExplainStage {
    pub attribution: ShapAttribution,
    pub shares: SiteShareMap,
}

pub struct Pipeline {
    cfg: RunConfig,
    meta: ArtifactMeta,
    out_dir: PathBuf,
    grid: Option<GridStage>,
    ingest: Option<IngestStage>,
    train: Option<TrainStage>,
    explain: Option<ExplainStage>,
    candidates: Option<Vec<Vec<CandidateSite>>>,
    plans: Option<Vec<DeploymentPlan>>,
}

fn site_format(path: &Path) -> SiteFormat {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("geojson") | Some("json") => SiteFormat::GeoJson,
        _ => SiteFormat::Csv,
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))
}

/// Reads a model document, with or without the metadata wrapper.
pub fn read_model(path: &Path) -> Result<TrainedRiskModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    let inner = match doc.get("data") {
        Some(data) if doc.get("meta").is_some() => data.to_string(),
        _ => text,
    };
    TrainedRiskModel::from_json(&inner)
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Self {
        let meta = ArtifactMeta::new(cfg.hash(), cfg.seed);
        let out_dir = cfg.out_dir.clone();
        Self { cfg, meta, out_dir, grid: None, ingest: None, train: None, explain: None, candidates: None, plans: None }
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn meta(&self) -> &ArtifactMeta {
        &self.meta
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    fn seed(&self, label: &str, index: u64) -> u64 {
        derive_seed(self.cfg.seed, label, index)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(BufWriter::new(File::create(self.out_dir.join(name))?))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        fs::write(self.out_dir.join(name), to_json_with_meta(&self.meta, value)?)?;
        Ok(())
    }

    pub fn grid(&mut self) -> StageResult<&GridStage> {
        if self.grid.is_none() {
            let stage = (|| {
                let grid = self.cfg.region.build_grid()?;
                let projection = self.cfg.region.projection()?;
                let catalog = self.cfg.catalog.build()?;
                self.write_json("grid.geojson", &grid.to_geojson(&projection))?;
                log::info!("grid: {} cells of edge {} m", grid.len(), grid.edge_len());
                Ok(GridStage { grid, projection, catalog })
            })()
            .stage("grid")?;
            self.grid = Some(stage);
        }
        Ok(self.grid.as_ref().unwrap())
    }

    /// Writes a synthetic city to the configured site and incident paths, or
    /// into the output directory when those are unset.
    pub fn synth(&mut self) -> StageResult<(PathBuf, PathBuf)> {
        self.grid()?;
        let g = self.grid.as_ref().unwrap();
        (|| {
            let params = RunConfig::require(&self.cfg.synth, "synth")?;
            let city = synth_city(self.seed("synth", 0), &g.grid, &g.catalog, params, &g.projection)?;
            let sites = self.cfg.paths.sites.clone().unwrap_or_else(|| self.out_dir.join("synth_sites.csv"));
            let incidents =
                self.cfg.paths.incidents.clone().unwrap_or_else(|| self.out_dir.join("synth_incidents.csv"));
            for p in [&sites, &incidents] {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
            }
            city.write_sites_csv(BufWriter::new(File::create(&sites)?), &g.catalog, &self.meta)?;
            city.write_incidents_csv(BufWriter::new(File::create(&incidents)?), &self.meta)?;
            self.write_json("ground_truth.json", &city.truth)?;
            log::info!("synth: {} sites, {} incidents", city.sites.len(), city.incidents.len());
            Ok((sites, incidents))
        })()
        .stage("synth")
    }

    pub fn ingest(&mut self) -> StageResult<&IngestStage> {
        if self.ingest.is_none() {
            self.grid()?;
            let g = self.grid.as_ref().unwrap();
            let stage = (|| {
                let sites_path = RunConfig::require(&self.cfg.paths.sites, "paths.sites")?;
                let incidents_path = RunConfig::require(&self.cfg.paths.incidents, "paths.incidents")?;
                let s = ingest_sites(open(sites_path)?, site_format(sites_path), &g.catalog, &g.grid, &g.projection)?;
                let inc = ingest_incidents(open(incidents_path)?, &g.grid, &g.projection)?;
                let matrix = FeatureMatrix::assemble(&g.grid, &g.catalog, s.counts, inc.y)?;
                matrix.write_csv(self.create("feature_matrix.csv")?, &self.meta)?;
                self.write_json(
                    "ingest_summary.json",
                    &IngestSummary {
                        sites: s.sites.len(),
                        incidents: inc.incidents.len(),
                        sites_skipped_unknown: s.skipped_unknown,
                        sites_skipped_unparsable: s.skipped_unparsable,
                        sites_out_of_bounds: s.out_of_bounds,
                        incidents_excluded: inc.excluded,
                        incidents_skipped_unparsable: inc.skipped_unparsable,
                    },
                )?;
                Ok(IngestStage { sites: s.sites, incidents: inc.incidents, matrix })
            })()
            .stage("ingest")?;
            self.ingest = Some(stage);
        }
        Ok(self.ingest.as_ref().unwrap())
    }

    pub fn train(&mut self) -> StageResult<&TrainStage> {
        if self.train.is_none() {
            self.ingest()?;
            let g = self.grid.as_ref().unwrap();
            let ing = self.ingest.as_ref().unwrap();
            let stage = (|| {
                let (model, report) = match &self.cfg.paths.model {
                    Some(path) => {
                        let model = read_model(path)?;
                        if model.feature_names != ing.matrix.feature_names {
                            return Err(Error::Consistency("loaded model uses a different feature catalog".into()));
                        }
                        (model, None)
                    }
                    None => {
                        let split = split_cells(&g.grid, &self.cfg.split)?;
                        let hyper = TrainHyper { seed: self.seed("train", self.cfg.train.seed), ..self.cfg.train.clone() };
                        let (model, report) = train(&ing.matrix, &split, &hyper)?;
                        log::info!(
                            "train: R² train {:.3}, test {}",
                            report.train_r2,
                            report.test_r2.map_or("n/a".into(), |v| format!("{v:.3}"))
                        );
                        self.write_json("fit_report.json", &report)?;
                        (model, Some(report))
                    }
                };
                self.write_json("model.json", &model)?;
                let deploy_ids = match self.cfg.candidates.area {
                    DeployArea::Test => model.split.test.clone(),
                    DeployArea::All => g.grid.cells().iter().map(|c| c.id).collect(),
                };
                let mut deploy_cells = deploy_ids
                    .iter()
                    .map(|id| g.grid.index_of(*id).ok_or_else(|| Error::Consistency(format!("cell {id} not in grid"))))
                    .collect::<Result<Vec<_>>>()?;
                deploy_cells.sort_unstable();
                if deploy_cells.is_empty() {
                    return Err(Error::EmptyInput("deployment area has no cells".into()));
                }
                Ok(TrainStage { model, report, deploy_cells })
            })()
            .stage("train")?;
            self.train = Some(stage);
        }
        Ok(self.train.as_ref().unwrap())
    }

    pub fn explain(&mut self) -> StageResult<&ExplainStage> {
        if self.explain.is_none() {
            self.train()?;
            let ing = self.ingest.as_ref().unwrap();
            let tr = self.train.as_ref().unwrap();
            let g = self.grid.as_ref().unwrap();
            let stage = (|| {
                let train_rows: Vec<Vec<f64>> = tr
                    .model
                    .split
                    .train
                    .iter()
                    .filter_map(|id| g.grid.index_of(*id))
                    .map(|i| ing.matrix.row_f64(i))
                    .collect();
                let bg = BackgroundSet::sample(&train_rows, self.cfg.explain.background, self.seed("background", 0))?;
                let rows: Vec<Vec<f64>> = tr.deploy_cells.iter().map(|&i| ing.matrix.row_f64(i)).collect();
                let ids: Vec<_> = tr.deploy_cells.iter().map(|&i| ing.matrix.cell_ids[i]).collect();
                let attribution = explain_cells(
                    &tr.model,
                    &rows,
                    &tr.deploy_cells,
                    &ids,
                    &ing.matrix.feature_names,
                    &bg,
                    self.cfg.explain.method,
                    self.seed("explain", 0),
                )?;
                let shares = share_to_sites(&attribution, &ing.matrix.counts, &ing.sites)?;
                attribution.write_csv(self.create("shap_cells.csv")?, &self.meta)?;
                shares.write_csv(self.create("site_shares.csv")?, &ing.sites, &ing.matrix.feature_names, &self.meta)?;
                let ranking = rank_features(&attribution)?;
                let mut wtr = csv_writer(self.create("feature_ranking.csv")?, &self.meta)?;
                wtr.write_record(["rank", "feature", "mean_abs_phi"])?;
                for (r, f) in ranking.iter().enumerate() {
                    wtr.write_record([(r + 1).to_string(), f.feature.clone(), f.mean_abs_phi.to_string()])?;
                }
                wtr.flush()?;
                Ok(ExplainStage { attribution, shares })
            })()
            .stage("explain")?;
            self.explain = Some(stage);
        }
        Ok(self.explain.as_ref().unwrap())
    }

    /// Samples and scores every candidate set.
    pub fn score(&mut self) -> StageResult<&[Vec<CandidateSite>]> {
        if self.candidates.is_none() {
            self.explain()?;
            let g = self.grid.as_ref().unwrap();
            let ing = self.ingest.as_ref().unwrap();
            let tr = self.train.as_ref().unwrap();
            let ex = self.explain.as_ref().unwrap();
            let sets = (|| {
                let index = SiteIndex::new(&g.grid, &ing.sites, &ex.shares)?;
                let deploy: HashSet<usize> = tr.deploy_cells.iter().copied().collect();
                let pool: Vec<SiteRecord> = ing.sites.iter().filter(|s| deploy.contains(&s.cell)).cloned().collect();
                let c = &self.cfg.candidates;
                let mut sets = Vec::with_capacity(c.sets);
                for j in 0..c.sets {
                    let cands = sample_candidates(&pool, c.count, c.radius_m, self.seed("candidates", j as u64))?;
                    let scored = score_all(&cands, &g.grid, &index)?;
                    write_candidates_csv(self.create(&format!("candidates_{j}.csv"))?, &scored, &self.meta)?;
                    sets.push(scored);
                }
                Ok(sets)
            })()
            .stage("score")?;
            self.candidates = Some(sets);
        }
        Ok(self.candidates.as_deref().unwrap())
    }

    /// Plans for the first candidate set at the configured N and D_min.
    pub fn optimize(&mut self) -> StageResult<&[DeploymentPlan]> {
        if self.plans.is_none() {
            self.score()?;
            let cands = &self.candidates.as_ref().unwrap()[0];
            let plans = (|| {
                let o = &self.cfg.optimize;
                let graph = build_conflicts(cands, o.d_min_m)?;
                let scores: Vec<f64> = cands.iter().map(|c| c.score).collect();
                let mut plans = Vec::new();
                for &solver in &o.solvers {
                    let plan = solve(solver, &graph, &scores, o.n, self.seed("plan", 0))?;
                    self.write_json(&format!("plan_{}.json", solver.name()), &plan.export(cands))?;
                    plans.push(plan);
                }
                Ok(plans)
            })()
            .stage("optimize")?;
            self.plans = Some(plans);
        }
        Ok(self.plans.as_deref().unwrap())
    }

    fn deploy_incidents(&self) -> Vec<ProjectedPoint> {
        let tr = self.train.as_ref().unwrap();
        let deploy: HashSet<usize> = tr.deploy_cells.iter().copied().collect();
        self.ingest
            .as_ref()
            .unwrap()
            .incidents
            .iter()
            .filter(|h| deploy.contains(&h.cell))
            .map(|h| h.location)
            .collect()
    }

    pub fn evaluate(&mut self) -> StageResult<Vec<EvaluationReport>> {
        self.optimize()?;
        let incidents = self.deploy_incidents();
        let cands = &self.candidates.as_ref().unwrap()[0];
        let plans = self.plans.as_ref().unwrap();
        (|| {
            let mut reports = Vec::new();
            let mut wtr = csv_writer(self.create("evaluation_summary.csv")?, &self.meta)?;
            wtr.write_record(["solver", "n", "d_min_m", "aeds", "incidents", "coverage", "coverage_fraction", "survival_mean"])?;
            for plan in plans {
                let r = evaluate_plan(plan, cands, &incidents, self.cfg.coverage_radius_m, &self.cfg.survival)?;
                self.write_json(&format!("evaluation_{}.json", r.solver), &r)?;
                wtr.write_record([
                    r.solver.clone(),
                    r.n.to_string(),
                    r.d_min_m.to_string(),
                    r.aeds.to_string(),
                    r.incidents.to_string(),
                    r.coverage_count.to_string(),
                    r.coverage_fraction.to_string(),
                    r.mean_survival.to_string(),
                ])?;
                reports.push(r);
            }
            wtr.flush()?;
            Ok(reports)
        })()
        .stage("evaluate")
    }

    pub fn sweep(&mut self) -> StageResult<SweepResult> {
        self.score()?;
        let incidents = self.deploy_incidents();
        let sets = self.candidates.as_ref().unwrap();
        (|| {
            let result = sweep(sets, &incidents, &self.cfg.sweep_spec(), self.seed("sweep", 0))?;
            result.write_summary_csv(self.create("sweep_summary.csv")?, &self.meta)?;
            result.write_long_csv(self.create("sweep_long.csv")?, &self.meta)?;
            Ok(result)
        })()
        .stage("sweep")
    }

    /// grid → ingest → train → explain → score → optimize → evaluate.
    pub fn run_all(&mut self) -> StageResult<Vec<EvaluationReport>> {
        self.evaluate()
    }
}

//! Spacing-constrained selection of AED sites.
//!
//! Maximize `Σ S_k z_k` subject to `Σ z_k ≤ N` and `z_k + z_l ≤ 1` for every
//! pair closer than `D_min`. Feasible plans are independent sets of the
//! conflict graph.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::density::CandidateSite;
use crate::error::{Error, Result};
use crate::geogrid::ProjectedPoint;
use crate::seed::rng_from_seed;

/// Largest candidate count accepted by [`solve_exact`].
pub const EXACT_CANDIDATE_LIMIT: usize = 200;
pub const DEFAULT_NODE_BUDGET: u64 = 20_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictGraph {
    pub ids: Vec<usize>,
    pub locations: Vec<ProjectedPoint>,
    pub d_min: f64,
    /// Sorted neighbor positions for each candidate position.
    pub adjacency: Vec<Vec<usize>>,
}

impl ConflictGraph {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn conflicts(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Whether no two positions in `selection` conflict.
    pub fn is_independent(&self, selection: &[usize]) -> bool {
        selection
            .iter()
            .enumerate()
            .all(|(i, &a)| selection[i + 1..].iter().all(|&b| !self.conflicts(a, b)))
    }
}

/// Edges join pairs with `D_kl < d_min`; equal distance is not a conflict.
pub fn build_conflicts(candidates: &[CandidateSite], d_min: f64) -> Result<ConflictGraph> {
    if !(d_min.is_finite() && d_min >= 0.0) {
        return Err(Error::InvalidInput(format!("d_min must be non-negative, got {d_min}")));
    }
    let n = candidates.len();
    let mut adjacency = vec![Vec::new(); n];
    if d_min > 0.0 && n > 1 {
        let key = |p: &ProjectedPoint| ((p.x / d_min).floor() as i64, (p.y / d_min).floor() as i64);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, c) in candidates.iter().enumerate() {
            buckets.entry(key(&c.location)).or_default().push(i);
        }
        for (i, c) in candidates.iter().enumerate() {
            let (bx, by) = key(&c.location);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(bucket) = buckets.get(&(bx + dx, by + dy)) else { continue };
                    for &j in bucket {
                        if j != i && c.location.distance(&candidates[j].location) < d_min {
                            adjacency[i].push(j);
                        }
                    }
                }
            }
            adjacency[i].sort_unstable();
        }
    }
    Ok(ConflictGraph {
        ids: candidates.iter().map(|c| c.id).collect(),
        locations: candidates.iter().map(|c| c.location).collect(),
        d_min,
        adjacency,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exact,
    Greedy,
    Random,
    /// Exact when the instance is within the exact limits, greedy otherwise.
    Sip,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Exact => "exact",
            SolverKind::Greedy => "greedy",
            SolverKind::Random => "random",
            SolverKind::Sip => "sip",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(SolverKind::Exact),
            "greedy" => Ok(SolverKind::Greedy),
            "random" => Ok(SolverKind::Random),
            "sip" => Ok(SolverKind::Sip),
            other => Err(Error::InvalidInput(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    /// Algorithm that produced the selection.
    pub solver: SolverKind,
    pub n: usize,
    pub d_min: f64,
    /// Positions in the candidate list, ascending.
    pub selected: Vec<usize>,
    pub selected_ids: Vec<usize>,
    pub objective: f64,
    pub spacing_feasible: bool,
    pub within_cardinality: bool,
    /// Search nodes, for the exact solver.
    pub nodes: Option<u64>,
}

impl DeploymentPlan {
    fn finish(
        solver: SolverKind,
        graph: &ConflictGraph,
        scores: &[f64],
        n: usize,
        mut selected: Vec<usize>,
        nodes: Option<u64>,
    ) -> Self {
        selected.sort_unstable();
        Self {
            solver,
            n,
            d_min: graph.d_min,
            selected_ids: selected.iter().map(|&i| graph.ids[i]).collect(),
            objective: selected.iter().map(|&i| scores[i]).sum(),
            spacing_feasible: graph.is_independent(&selected),
            within_cardinality: selected.len() <= n,
            selected,
            nodes,
        }
    }

    pub fn locations(&self, candidates: &[CandidateSite]) -> Vec<ProjectedPoint> {
        self.selected.iter().map(|&i| candidates[i].location).collect()
    }

    pub fn export(&self, candidates: &[CandidateSite]) -> PlanExport {
        PlanExport {
            solver: self.solver.name().to_string(),
            n: self.n,
            d_min_m: self.d_min,
            objective: self.objective,
            spacing_feasible: self.spacing_feasible,
            within_cardinality: self.within_cardinality,
            selected: self
                .selected
                .iter()
                .map(|&i| {
                    let c = &candidates[i];
                    SelectedSite { candidate_id: c.id, lat: c.lat, lon: c.lon, s_k: c.score }
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedSite {
    pub candidate_id: usize,
    pub lat: f64,
    pub lon: f64,
    pub s_k: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanExport {
    pub solver: String,
    pub n: usize,
    pub d_min_m: f64,
    pub objective: f64,
    pub spacing_feasible: bool,
    pub within_cardinality: bool,
    pub selected: Vec<SelectedSite>,
}

fn check_scores(graph: &ConflictGraph, scores: &[f64]) -> Result<()> {
    if scores.len() != graph.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores for {} candidates",
            scores.len(),
            graph.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    Ok(())
}

/// Positions with positive score, by descending score then ascending id.
fn positive_order(graph: &ConflictGraph, scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..graph.len()).filter(|&i| scores[i] > 0.0).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(graph.ids[a].cmp(&graph.ids[b])));
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactOptions {
    pub node_budget: u64,
    pub max_candidates: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self { node_budget: DEFAULT_NODE_BUDGET, max_candidates: EXACT_CANDIDATE_LIMIT }
    }
}

struct Search<'a> {
    order: &'a [usize],
    /// Scores in `order` position.
    weight: Vec<f64>,
    /// Conflicts between `order` positions.
    adj: Vec<Vec<usize>>,
    /// Same conflicts as bitsets of `words` words each.
    bits: Vec<u64>,
    words: usize,
    blocked: Vec<u32>,
    chosen: Vec<usize>,
    best: Vec<usize>,
    best_value: f64,
    nodes: u64,
    budget: u64,
    root_bound: f64,
    /// Member bitsets of the cliques built by `bound`, reused across calls.
    cliques: Vec<u64>,
}

impl Search<'_> {
    fn row(&self, p: usize) -> &[u64] {
        &self.bits[p * self.words..(p + 1) * self.words]
    }

    /// Clique-cover bound on what `slots` more picks from `from..` can add.
    /// Unblocked positions are scanned in score order; each joins the first
    /// clique it fully conflicts with, or leads a new one. A plan takes at most
    /// one member per clique, so the first `slots` leaders bound it.
    fn bound(&mut self, from: usize, slots: usize) -> f64 {
        let w = self.words;
        let mut cliques = std::mem::take(&mut self.cliques);
        cliques.clear();
        let mut total = 0.0;
        let mut leaders = 0;
        for p in from..self.order.len() {
            if leaders == slots {
                break;
            }
            if self.blocked[p] != 0 {
                continue;
            }
            let row = self.row(p);
            let home = (0..leaders).find(|&c| {
                cliques[c * w..(c + 1) * w].iter().zip(row).all(|(m, r)| m & !r == 0)
            });
            let c = match home {
                Some(c) => c,
                None => {
                    total += self.weight[p];
                    leaders += 1;
                    cliques.resize(leaders * w, 0);
                    leaders - 1
                }
            };
            cliques[c * w + p / 64] |= 1 << (p % 64);
        }
        self.cliques = cliques;
        total
    }

    fn run(&mut self, from: usize, value: f64, slots: usize) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded {
                nodes: self.budget,
                incumbent: self.best_value,
                bound: self.root_bound,
                best_selection: self.best.iter().map(|&p| self.order[p]).collect(),
            });
        }
        if value > self.best_value {
            self.best_value = value;
            self.best = self.chosen.clone();
        }
        if slots == 0 {
            return Ok(());
        }
        let Some(p) = (from..self.order.len()).find(|&p| self.blocked[p] == 0) else {
            return Ok(());
        };
        if value + self.bound(p, slots) <= self.best_value {
            return Ok(());
        }
        // Include p.
        for i in 0..self.adj[p].len() {
            self.blocked[self.adj[p][i]] += 1;
        }
        self.chosen.push(p);
        let r = self.run(p + 1, value + self.weight[p], slots - 1);
        self.chosen.pop();
        for i in 0..self.adj[p].len() {
            self.blocked[self.adj[p][i]] -= 1;
        }
        r?;
        // Exclude p.
        self.blocked[p] += 1;
        let r = self.run(p + 1, value, slots);
        self.blocked[p] -= 1;
        r
    }
}

/// Branch-and-bound optimum. Starts from the greedy plan, branches on the
/// heaviest undecided candidate (include first) and prunes with a
/// clique-cover bound on the remaining candidates.
pub fn solve_exact(graph: &ConflictGraph, scores: &[f64], n: usize) -> Result<DeploymentPlan> {
    solve_exact_with(graph, scores, n, ExactOptions::default())
}

pub fn solve_exact_with(
    graph: &ConflictGraph,
    scores: &[f64],
    n: usize,
    opts: ExactOptions,
) -> Result<DeploymentPlan> {
    check_scores(graph, scores)?;
    if graph.len() > opts.max_candidates {
        return Err(Error::InvalidInput(format!(
            "{} candidates exceed the exact solver limit of {}",
            graph.len(),
            opts.max_candidates
        )));
    }
    let order = positive_order(graph, scores);
    let mut rank = vec![usize::MAX; graph.len()];
    for (p, &i) in order.iter().enumerate() {
        rank[i] = p;
    }
    let adj: Vec<Vec<usize>> = order
        .iter()
        .map(|&i| graph.adjacency[i].iter().map(|&j| rank[j]).filter(|&q| q != usize::MAX).collect())
        .collect();
    let words = order.len().div_ceil(64).max(1);
    let mut bits = vec![0u64; order.len() * words];
    for (p, qs) in adj.iter().enumerate() {
        for &q in qs {
            bits[p * words + q / 64] |= 1 << (q % 64);
        }
    }
    let weight: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let greedy = solve_greedy(graph, scores, n)?;
    let mut search = Search {
        order: &order,
        weight,
        adj,
        bits,
        words,
        blocked: vec![0; order.len()],
        chosen: Vec::new(),
        best: greedy.selected.iter().map(|&i| rank[i]).collect(),
        best_value: greedy.selected.iter().map(|&i| scores[i]).sum(),
        nodes: 0,
        budget: opts.node_budget,
        root_bound: 0.0,
        cliques: Vec::new(),
    };
    search.root_bound = search.bound(0, n);
    search.run(0, 0.0, n)?;
    let nodes = search.nodes;
    let selected = search.best.iter().map(|&p| order[p]).collect();
    Ok(DeploymentPlan::finish(SolverKind::Exact, graph, scores, n, selected, Some(nodes)))
}

/// Takes the heaviest feasible positive candidate until `n` are chosen.
pub fn solve_greedy(graph: &ConflictGraph, scores: &[f64], n: usize) -> Result<DeploymentPlan> {
    check_scores(graph, scores)?;
    let mut blocked = vec![false; graph.len()];
    let mut selected = Vec::new();
    for i in positive_order(graph, scores) {
        if selected.len() == n {
            break;
        }
        if blocked[i] {
            continue;
        }
        selected.push(i);
        for &j in &graph.adjacency[i] {
            blocked[j] = true;
        }
    }
    Ok(DeploymentPlan::finish(SolverKind::Greedy, graph, scores, n, selected, None))
}

/// Uniform `n`-subset with no spacing constraint.
pub fn solve_random(graph: &ConflictGraph, scores: &[f64], n: usize, seed: u64) -> Result<DeploymentPlan> {
    check_scores(graph, scores)?;
    if n > graph.len() {
        return Err(Error::InvalidInput(format!(
            "cannot pick {n} of {} candidates",
            graph.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let selected = rand::seq::index::sample(&mut rng, graph.len(), n).into_vec();
    Ok(DeploymentPlan::finish(SolverKind::Random, graph, scores, n, selected, None))
}

/// Dispatches by solver kind. `Sip` uses the exact solver when the instance
/// fits its limits and falls back to greedy otherwise.
pub fn solve(kind: SolverKind, graph: &ConflictGraph, scores: &[f64], n: usize, seed: u64) -> Result<DeploymentPlan> {
    match kind {
        SolverKind::Exact => solve_exact(graph, scores, n),
        SolverKind::Greedy => solve_greedy(graph, scores, n),
        SolverKind::Random => solve_random(graph, scores, n, seed),
        SolverKind::Sip => {
            let plan = if graph.len() <= EXACT_CANDIDATE_LIMIT {
                match solve_exact(graph, scores, n) {
                    Ok(p) => p,
                    Err(Error::BudgetExceeded { .. }) => {
                        log::warn!("exact search budget exhausted; using greedy selection");
                        solve_greedy(graph, scores, n)?
                    }
                    Err(e) => return Err(e),
                }
            } else {
                solve_greedy(graph, scores, n)?
            };
            Ok(DeploymentPlan { solver: SolverKind::Sip, ..plan })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cand(id: usize, x: f64, y: f64, score: f64) -> CandidateSite {
        CandidateSite {
            id,
            site_id: None,
            lat: 0.0,
            lon: 0.0,
            location: ProjectedPoint::new(x, y),
            radius: 960.0,
            score,
        }
    }

    fn random_instance(rng: &mut ChaCha8Rng, k: usize, extent: f64) -> Vec<CandidateSite> {
        (0..k)
            .map(|i| cand(i, rng.random_range(0.0..extent), rng.random_range(0.0..extent), rng.random_range(-1.0..10.0)))
            .collect()
    }

    fn scores(c: &[CandidateSite]) -> Vec<f64> {
        c.iter().map(|c| c.score).collect()
    }

    fn brute_force(graph: &ConflictGraph, scores: &[f64], n: usize) -> f64 {
        let k = graph.len();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << k) {
            if mask.count_ones() as usize > n {
                continue;
            }
            let sel: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
            if graph.is_independent(&sel) {
                best = best.max(sel.iter().map(|&i| scores[i]).sum());
            }
        }
        best
    }

    /// Path a–b–c as candidates spaced 1000 m apart with D_min 1200 m.
    fn path3() -> (ConflictGraph, Vec<f64>) {
        let c = vec![cand(1, 0.0, 0.0, 5.0), cand(2, 1000.0, 0.0, 4.0), cand(3, 2000.0, 0.0, 3.0)];
        (build_conflicts(&c, 1200.0).unwrap(), scores(&c))
    }

    #[test]
    fn conflict_threshold_is_strict() {
        let c = vec![cand(0, 0.0, 0.0, 1.0), cand(1, 1000.0, 0.0, 1.0)];
        assert!(build_conflicts(&c, 1200.0).unwrap().conflicts(0, 1));
        assert_eq!(build_conflicts(&c, 1000.0).unwrap().edge_count(), 0);
        assert_eq!(build_conflicts(&c, 0.0).unwrap().edge_count(), 0);
        assert!(build_conflicts(&c, -1.0).is_err());
    }

    #[test]
    fn bucketed_edges_match_all_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = random_instance(&mut rng, 100, 10_000.0);
        for d_min in [300.0, 960.0, 2500.0] {
            let g = build_conflicts(&c, d_min).unwrap();
            for a in 0..100 {
                for b in 0..100 {
                    let expect = a != b && c[a].location.distance(&c[b].location) < d_min;
                    assert_eq!(g.conflicts(a, b), expect);
                }
            }
        }
    }

    #[test]
    fn three_node_path() {
        let (g, s) = path3();
        let exact = solve_exact(&g, &s, 2).unwrap();
        assert_eq!(exact.selected_ids, vec![1, 3]);
        assert_eq!(exact.objective, 8.0);
        assert_eq!(solve_greedy(&g, &s, 2).unwrap().selected_ids, vec![1, 3]);
    }

    #[test]
    fn unconstrained_selects_everything_positive() {
        let c: Vec<_> = (0..6).map(|i| cand(i, i as f64, 0.0, 1.0 + i as f64)).collect();
        let g = build_conflicts(&c, 0.0).unwrap();
        let plan = solve_exact(&g, &scores(&c), 10).unwrap();
        assert_eq!(plan.selected.len(), 6);
        assert_eq!(plan.objective, 21.0);
        let top = solve_greedy(&g, &scores(&c), 2).unwrap();
        assert_eq!(top.selected_ids, vec![4, 5]);
    }

    #[test]
    fn non_positive_scores_are_never_selected() {
        let c = vec![cand(0, 0.0, 0.0, -1.0), cand(1, 5000.0, 0.0, 0.0), cand(2, 9000.0, 0.0, 2.0)];
        let g = build_conflicts(&c, 1000.0).unwrap();
        assert_eq!(solve_exact(&g, &scores(&c), 3).unwrap().selected_ids, vec![2]);
        assert_eq!(solve_greedy(&g, &scores(&c), 3).unwrap().selected_ids, vec![2]);
    }

    #[test]
    fn exact_matches_enumeration_and_dominates_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let k = rng.random_range(1..=14);
            let n = rng.random_range(0..=6);
            let c = random_instance(&mut rng, k, 4000.0);
            let g = build_conflicts(&c, rng.random_range(0.0..2000.0)).unwrap();
            let s = scores(&c);
            let exact = solve_exact(&g, &s, n).unwrap();
            assert!((exact.objective - brute_force(&g, &s, n)).abs() < 1e-9);
            assert!(exact.spacing_feasible && exact.within_cardinality);
            let greedy = solve_greedy(&g, &s, n).unwrap();
            assert!(greedy.spacing_feasible && greedy.selected.len() <= n);
            assert!(greedy.objective <= exact.objective + 1e-9);
        }
    }

    #[test]
    fn budget_exhaustion_reports_incumbent() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = random_instance(&mut rng, 60, 6000.0);
        let g = build_conflicts(&c, 900.0).unwrap();
        let opts = ExactOptions { node_budget: 5, ..ExactOptions::default() };
        match solve_exact_with(&g, &scores(&c), 20, opts) {
            Err(Error::BudgetExceeded { nodes: 5, incumbent, bound, .. }) => assert!(incumbent <= bound),
            other => panic!("unexpected {other:?}"),
        }
        let small = ExactOptions { max_candidates: 10, ..ExactOptions::default() };
        assert!(matches!(solve_exact_with(&g, &scores(&c), 3, small), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn random_is_seeded_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let c = random_instance(&mut rng, 30, 5000.0);
        let g = build_conflicts(&c, 1000.0).unwrap();
        let s = scores(&c);
        assert_eq!(solve_random(&g, &s, 7, 3).unwrap(), solve_random(&g, &s, 7, 3).unwrap());
        assert_eq!(solve_random(&g, &s, 30, 3).unwrap().selected.len(), 30);
        assert!(matches!(solve_random(&g, &s, 31, 3), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn random_baseline_trails_the_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let c: Vec<_> = (0..30)
            .map(|i| cand(i, rng.random_range(0.0..8000.0), rng.random_range(0.0..8000.0), 1.0 + i as f64 * 0.37))
            .collect();
        let g = build_conflicts(&c, 800.0).unwrap();
        let s = scores(&c);
        let exact = solve_exact(&g, &s, 8).unwrap().objective;
        let mean: f64 = (0..1000).map(|seed| solve_random(&g, &s, 8, seed).unwrap().objective).sum::<f64>() / 1000.0;
        assert!(mean < exact);
    }

    #[test]
    fn plan_export_lists_selected_sites() {
        let (g, s) = path3();
        let c = vec![cand(1, 0.0, 0.0, 5.0), cand(2, 1000.0, 0.0, 4.0), cand(3, 2000.0, 0.0, 3.0)];
        let plan = solve_exact(&g, &s, 2).unwrap();
        let export = plan.export(&c);
        assert_eq!(export.solver, "exact");
        assert_eq!(export.selected.iter().map(|s| s.candidate_id).collect::<Vec<_>>(), vec![1, 3]);
        assert!(serde_json::to_string(&export).unwrap().contains("\"d_min_m\":1200"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn exact_is_monotone_and_scale_invariant(seed in 0u64..10_000, c_scale in 0.1f64..50.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let c = random_instance(&mut rng, 16, 5000.0);
                let s = scores(&c);
                let g = build_conflicts(&c, 1000.0).unwrap();
                let mut prev = 0.0;
                for n in 0..8 {
                    let v = solve_exact(&g, &s, n).unwrap().objective;
                    prop_assert!(v >= prev - 1e-12);
                    prev = v;
                }
                let mut prev = f64::INFINITY;
                for d in [0.0, 400.0, 800.0, 1200.0, 1600.0] {
                    let v = solve_exact(&build_conflicts(&c, d).unwrap(), &s, 5).unwrap().objective;
                    prop_assert!(v <= prev + 1e-12);
                    prev = v;
                }
                let scaled: Vec<f64> = s.iter().map(|v| v * c_scale).collect();
                prop_assert_eq!(
                    solve_exact(&g, &s, 5).unwrap().selected,
                    solve_exact(&g, &scaled, 5).unwrap().selected
                );
            }
        }
    }
}

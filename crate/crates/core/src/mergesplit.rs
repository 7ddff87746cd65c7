//! Merge-split Markov chain over plans.
//!
//! Each step merges a uniformly chosen pair of adjacent districts, draws a
//! uniform spanning tree on the union, and re-splits it at a uniformly
//! chosen balanced edge. Proposals are accepted by Metropolis-Hastings
//! against the same target as the SMC sampler:
//! `Π τ(D_k) · exp(-compactness · cut_edges - vra · shortfall)`.
//!
//! The forward and reverse proposal probabilities differ by the number of
//! adjacent district pairs, the number of edges joining the two districts,
//! and the expected reciprocal count of balanced cuts over trees that
//! induce each split. The last factor is estimated with one tree per side,
//! drawn uniformly among trees inducing that split.

use std::collections::BTreeMap;

use rand::Rng;
use serde_json::json;

use crate::ensemble::{ConstraintConfig, PlanEnsemble, Provenance};
use crate::error::{Error, Result};
use crate::graph::{validate_plan, Plan, PopulationScenario, RaceCounts, RegionGraph};
use crate::metrics::{cut_edge_count, mmd_count, parity_deviation};
use crate::par::{self, Execution};
use crate::rng::{derive_seed, stream_rng, SimRng};
use crate::smc::CountyIndex;
use crate::tree::{balanced_cut_edges, SpanningTree, SplitTarget, Subgraph};

const TAG_CHAIN: u64 = 0x4348_4149;

/// How the split edge is chosen on the merged region's tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutSelection {
    /// Uniform among balanced edges; the acceptance ratio carries a
    /// one-tree estimate of the balanced-cut-count correction.
    #[default]
    Balanced,
    /// Uniform among all tree edges, staying put when the edge is not
    /// balanced. Exact for the target, at a lower move rate.
    UniformEdge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOptions {
    /// Leading fraction of steps discarded before recording.
    pub burn_in_fraction: f64,
    pub cut_selection: CutSelection,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            burn_in_fraction: 0.1,
            cut_selection: CutSelection::Balanced,
        }
    }
}

/// Counters and mixing summaries for one chain.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct ChainDiagnostics {
    pub steps: usize,
    pub burn_in: usize,
    pub recorded: usize,
    pub accepted: usize,
    pub no_balanced_cut: usize,
    pub ess_cut_edges: f64,
    pub ess_mmd_count: f64,
}

/// Effective sample size of a scalar series from its autocorrelations,
/// summing consecutive pairs while they stay positive.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return n as f64;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| -> f64 {
        (0..n - lag)
            .map(|t| (series[t] - mean) * (series[t + lag] - mean))
            .sum::<f64>()
            / (n as f64 * var)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau.max(1.0)).min(n as f64)
}

struct ChainState {
    labels: Vec<u32>,
    members: Vec<Vec<usize>>,
    energy: f64,
}

/// Edge counts between district pairs, indexed `lo * (n_d + 1) + hi` with
/// 1-based labels.
struct PairCounts {
    stride: usize,
    counts: Vec<usize>,
}

impl PairCounts {
    fn new(graph: &RegionGraph, labels: &[u32], n_d: u32) -> Self {
        let stride = n_d as usize + 1;
        let mut counts = vec![0; stride * stride];
        for &(a, b) in graph.edges() {
            let (da, db) = (labels[a] as usize, labels[b] as usize);
            if da != db {
                counts[da.min(db) * stride + da.max(db)] += 1;
            }
        }
        PairCounts { stride, counts }
    }

    fn get(&self, lo: u32, hi: u32) -> usize {
        self.counts[lo as usize * self.stride + hi as usize]
    }

    /// Adjacent pairs `(lo, hi)` in lexicographic order.
    fn pairs(&self) -> Vec<(u32, u32)> {
        let n = self.stride as u32;
        (1..n)
            .flat_map(|lo| (lo + 1..n).map(move |hi| (lo, hi)))
            .filter(|&(lo, hi)| self.get(lo, hi) > 0)
            .collect()
    }
}

struct Step<'a> {
    graph: &'a RegionGraph,
    scenario: &'a PopulationScenario,
    config: &'a ConstraintConfig,
    counties: CountyIndex,
    target: SplitTarget,
    selection: CutSelection,
}

impl Step<'_> {
    fn energy(&self, labels: &[u32], n_d: u32) -> f64 {
        let mut e = 0.0;
        if self.config.compactness_weight != 0.0 {
            let cut = self
                .graph
                .edges()
                .iter()
                .filter(|&&(a, b)| labels[a] != labels[b])
                .count();
            e += self.config.compactness_weight * cut as f64;
        }
        if self.config.uses_vra() {
            let mut counts = vec![RaceCounts::default(); n_d as usize];
            for (v, &d) in labels.iter().enumerate() {
                let c = &mut counts[(d - 1) as usize].0;
                for (x, y) in c.iter_mut().zip(self.scenario.race[v].0) {
                    *x += y;
                }
            }
            let mmds = counts
                .iter()
                .filter(|c| self.config.mmd_definition.is_mmd(c))
                .count() as u32;
            e += self.config.vra_weight * self.config.mmd_shortfall(mmds) as f64;
        }
        e
    }

    /// A uniform spanning tree of `a ∪ b` among those whose only edge
    /// across the split is a single crossing edge.
    fn conditional_tree(&self, a: &[usize], b: &[usize], rng: &mut SimRng) -> Result<SpanningTree> {
        let ta = Subgraph::induced(self.graph, a)?.random_spanning_tree(rng);
        let tb = Subgraph::induced(self.graph, b)?.random_spanning_tree(rng);
        let mut in_b = vec![false; self.graph.len()];
        for &v in b {
            in_b[v] = true;
        }
        let crossing: Vec<(usize, usize)> = a
            .iter()
            .flat_map(|&u| self.graph.neighbors(u).iter().map(move |&v| (u, v)))
            .filter(|&(_, v)| in_b[v])
            .collect();
        let (ua, vb) = crossing[rng.random_range(0..crossing.len())];
        // Keep a's root; re-root b's tree at vb by reversing the path from
        // vb to b's root, then hang vb off ua.
        let offset = ta.len();
        let mut nodes = ta.nodes().to_vec();
        nodes.extend_from_slice(tb.nodes());
        let mut parent: Vec<Option<usize>> = ta.parents().to_vec();
        parent.extend(tb.parents().iter().map(|p| p.map(|p| p + offset)));
        let local = |v: usize, nodes: &[usize]| nodes.iter().position(|&x| x == v).expect("node in tree");
        let mut prev = local(ua, &nodes[..offset]);
        let mut cur = offset + local(vb, &nodes[offset..]);
        loop {
            let next = parent[cur];
            parent[cur] = Some(prev);
            match next {
                Some(n) => {
                    prev = cur;
                    cur = n;
                }
                None => break,
            }
        }
        Ok(SpanningTree::from_parents_unchecked(nodes, parent, ta.root_local()))
    }

    fn cut_count(&self, tree: &SpanningTree) -> usize {
        balanced_cut_edges(tree, &self.scenario.population, self.target, self.config.pop_tolerance)
            .len()
    }

    /// One Metropolis-Hastings step. Returns whether the proposal was
    /// accepted, or `None` when the drawn tree had no balanced cut.
    fn advance(&self, state: &mut ChainState, n_d: u32, rng: &mut SimRng) -> Result<Option<bool>> {
        let pairs = PairCounts::new(self.graph, &state.labels, n_d);
        let keys = pairs.pairs();
        let (di, dj) = keys[rng.random_range(0..keys.len())];
        let old_a = state.members[(di - 1) as usize].clone();
        let old_b = state.members[(dj - 1) as usize].clone();
        let mut merged: Vec<usize> = old_a.iter().chain(&old_b).copied().collect();
        merged.sort_unstable();

        let tree = Subgraph::induced(self.graph, &merged)?.random_spanning_tree(rng);
        let cuts = balanced_cut_edges(&tree, &self.scenario.population, self.target, self.config.pop_tolerance);
        if cuts.is_empty() {
            return Ok(None);
        }
        let cut = match self.selection {
            CutSelection::Balanced => cuts[rng.random_range(0..cuts.len())],
            CutSelection::UniformEdge => {
                let edges = tree.edges();
                let pick = edges[rng.random_range(0..edges.len())];
                match cuts.iter().find(|c| c.edge() == pick) {
                    Some(c) => *c,
                    None => return Ok(Some(false)),
                }
            }
        };
        let (mut new_a, mut new_b) = tree.split(&cut);
        if rng.random::<bool>() {
            std::mem::swap(&mut new_a, &mut new_b);
        }

        let mut proposed = state.labels.clone();
        for &v in &new_a {
            proposed[v] = di;
        }
        for &v in &new_b {
            proposed[v] = dj;
        }
        if let Some(cap) = self.config.max_county_splits {
            if self.counties.splits(&proposed) > cap as usize {
                return Ok(Some(false));
            }
        }

        let k_ratio = match self.selection {
            CutSelection::Balanced => {
                let k_old = self.cut_count(&self.conditional_tree(&old_a, &old_b, rng)?);
                let k_new = self.cut_count(&self.conditional_tree(&new_a, &new_b, rng)?);
                (k_new as f64).ln() - (k_old as f64).ln()
            }
            CutSelection::UniformEdge => 0.0,
        };
        let new_pairs = PairCounts::new(self.graph, &proposed, n_d);
        let new_energy = self.energy(&proposed, n_d);
        let log_ratio = state.energy - new_energy
            + (keys.len() as f64).ln()
            - (new_pairs.pairs().len() as f64).ln()
            + (pairs.get(di, dj) as f64).ln()
            - (new_pairs.get(di, dj) as f64).ln()
            + k_ratio;
        let u: f64 = rng.random();
        if u.ln() < log_ratio {
            state.labels = proposed;
            state.energy = new_energy;
            state.members[(di - 1) as usize] = new_a;
            state.members[(dj - 1) as usize] = new_b;
            Ok(Some(true))
        } else {
            Ok(Some(false))
        }
    }
}

fn check_initial(
    graph: &RegionGraph,
    scenario: &PopulationScenario,
    plan: &Plan,
    config: &ConstraintConfig,
) -> Result<()> {
    if plan.n_districts() < 2 {
        return Err(Error::InvalidPlan(
            "merge-split needs at least two districts to merge".into(),
        ));
    }
    validate_plan(graph, plan)?;
    let dev = parity_deviation(plan, scenario)?.max_deviation;
    if dev > config.pop_tolerance {
        return Err(Error::InvalidPlan(format!(
            "initial plan deviates {dev} from parity, tolerance is {}",
            config.pop_tolerance
        )));
    }
    if let Some(cap) = config.max_county_splits {
        let splits = crate::metrics::county_splits(plan, graph);
        if splits > cap as usize {
            return Err(Error::InvalidPlan(format!(
                "initial plan splits {splits} counties, cap is {cap}"
            )));
        }
    }
    Ok(())
}

/// Runs one chain with default options.
pub fn mergesplit_chain(
    graph: &RegionGraph,
    scenario: &PopulationScenario,
    initial: &Plan,
    config: &ConstraintConfig,
    n_steps: usize,
    thin: usize,
    seed: u64,
) -> Result<PlanEnsemble> {
    mergesplit_chain_with(
        graph,
        scenario,
        initial,
        config,
        n_steps,
        thin,
        seed,
        &ChainOptions::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn mergesplit_chain_with(
    graph: &RegionGraph,
    scenario: &PopulationScenario,
    initial: &Plan,
    config: &ConstraintConfig,
    n_steps: usize,
    thin: usize,
    seed: u64,
    opts: &ChainOptions,
) -> Result<PlanEnsemble> {
    config.validate()?;
    scenario.check_covers(graph)?;
    check_initial(graph, scenario, initial, config)?;
    if thin == 0 {
        return Err(Error::InvalidConfig("thinning interval must be positive".into()));
    }
    if !(0.0..1.0).contains(&opts.burn_in_fraction) {
        return Err(Error::InvalidConfig(format!(
            "burn-in fraction {} outside [0, 1)",
            opts.burn_in_fraction
        )));
    }
    let burn_in = (opts.burn_in_fraction * n_steps as f64).floor() as usize;
    if (n_steps - burn_in) / thin == 0 {
        return Err(Error::InvalidConfig(format!(
            "{n_steps} steps with burn-in {burn_in} and thinning {thin} record no states"
        )));
    }

    let n_d = initial.n_districts();
    let step = Step {
        graph,
        scenario,
        config,
        counties: CountyIndex::new(graph),
        target: SplitTarget {
            district_pop: scenario.total() as f64 / n_d as f64,
            n_districts: 2,
        },
        selection: opts.cut_selection,
    };
    let mut rng = stream_rng(seed, &[TAG_CHAIN]);
    let mut state = ChainState {
        labels: initial.assignment().to_vec(),
        members: initial.districts(),
        energy: step.energy(initial.assignment(), n_d),
    };
    let mut diag = ChainDiagnostics {
        steps: n_steps,
        burn_in,
        ..Default::default()
    };
    let mut plans = Vec::new();
    for t in 1..=n_steps {
        match step.advance(&mut state, n_d, &mut rng)? {
            None => diag.no_balanced_cut += 1,
            Some(true) => diag.accepted += 1,
            Some(false) => {}
        }
        if t > burn_in && (t - burn_in).is_multiple_of(thin) {
            plans.push(Plan::new(n_d, state.labels.clone())?);
        }
    }
    diag.recorded = plans.len();
    let cut_series: Vec<f64> = plans.iter().map(|p| cut_edge_count(p, graph) as f64).collect();
    let mmd_series: Vec<f64> = plans
        .iter()
        .map(|p| mmd_count(p, scenario, &config.mmd_definition) as f64)
        .collect();
    diag.ess_cut_edges = effective_sample_size(&cut_series);
    diag.ess_mmd_count = effective_sample_size(&mmd_series);

    let mut extra = BTreeMap::new();
    extra.insert("n_steps".into(), json!(n_steps));
    extra.insert("thin".into(), json!(thin));
    extra.insert("burn_in".into(), json!(burn_in));
    extra.insert("cut_selection".into(), serde_json::to_value(opts.cut_selection)?);
    extra.insert("diagnostics".into(), serde_json::to_value(&diag)?);
    let provenance = Provenance {
        sampler: "mergesplit".into(),
        scenario_id: scenario.id.clone(),
        n_districts: n_d,
        tolerance: config.pop_tolerance,
        constraints: config.clone(),
        seed,
        extra,
    };
    PlanEnsemble::uniform(plans, provenance)
}

/// Runs independent chains (seeds derived from `seed`) and pools them with
/// equal weight per chain.
#[allow(clippy::too_many_arguments)]
pub fn mergesplit_chains(
    graph: &RegionGraph,
    scenario: &PopulationScenario,
    initial: &Plan,
    config: &ConstraintConfig,
    n_steps: usize,
    thin: usize,
    seed: u64,
    n_chains: usize,
    execution: Execution,
) -> Result<PlanEnsemble> {
    if n_chains == 0 {
        return Err(Error::InvalidConfig("need at least one chain".into()));
    }
    let parts = par::map_range(execution, n_chains, |c| {
        mergesplit_chain(
            graph,
            scenario,
            initial,
            config,
            n_steps,
            thin,
            derive_seed(seed, &[c as u64]),
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut provenance = parts[0].provenance.clone();
    provenance.seed = seed;
    provenance.extra.insert("n_chains".into(), json!(n_chains));
    provenance.extra.remove("diagnostics");
    let diags: Vec<serde_json::Value> = parts
        .iter()
        .filter_map(|p| p.provenance.extra.get("diagnostics").cloned())
        .collect();
    provenance.extra.insert("chain_diagnostics".into(), json!(diags));
    PlanEnsemble::merge(parts, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_graphs::grid;
    use crate::graph::RaceCounts;

    fn unit(graph: &RegionGraph) -> PopulationScenario {
        PopulationScenario::from_race_counts("unit", vec![RaceCounts([1, 0, 0, 0, 0]); graph.len()])
    }

    #[test]
    fn unique_plan_never_moves() {
        let g = grid(1, 4);
        let init = Plan::new(2, vec![1, 1, 2, 2]).unwrap();
        let e = mergesplit_chain(&g, &unit(&g), &init, &ConstraintConfig::with_tolerance(0.0), 500, 1, 3)
            .unwrap();
        assert_eq!(e.len(), 450);
        let canon = crate::smc::district_labels_canonicalize(&init);
        assert!(e
            .plans()
            .iter()
            .all(|p| crate::smc::district_labels_canonicalize(p) == canon));
    }

    #[test]
    fn rejects_bad_initial_plans() {
        let g = grid(1, 4);
        let s = unit(&g);
        let cfg = ConstraintConfig::with_tolerance(0.0);
        let one = Plan::new(1, vec![1; 4]).unwrap();
        assert!(matches!(
            mergesplit_chain(&g, &s, &one, &cfg, 10, 1, 1),
            Err(Error::InvalidPlan(_))
        ));
        let unbalanced = Plan::new(2, vec![1, 2, 2, 2]).unwrap();
        assert!(mergesplit_chain(&g, &s, &unbalanced, &cfg, 10, 1, 1).is_err());
        let broken = Plan::new(2, vec![1, 2, 1, 2]).unwrap();
        assert!(mergesplit_chain(&g, &s, &broken, &ConstraintConfig::with_tolerance(1.0), 10, 1, 1).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let g = grid(3, 4);
        let s = unit(&g);
        let init = Plan::new(3, vec![1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 3, 3]).unwrap();
        let cfg = ConstraintConfig::with_tolerance(0.0);
        let a = mergesplit_chain(&g, &s, &init, &cfg, 300, 3, 77).unwrap();
        let b = mergesplit_chain(&g, &s, &init, &cfg, 300, 3, 77).unwrap();
        assert_eq!(a.plans(), b.plans());
        assert_eq!(a.len(), 90);
        for p in a.plans() {
            validate_plan(&g, p).unwrap();
            assert_eq!(parity_deviation(p, &s).unwrap().max_deviation, 0.0);
        }
    }

    #[test]
    fn ess_of_white_noise_and_constant() {
        let mut rng = stream_rng(1, &[]);
        let noise: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let ess = effective_sample_size(&noise);
        assert!(ess > 1500.0, "{ess}");
        let sticky: Vec<f64> = (0..2000).map(|i| (i / 100) as f64).collect();
        assert!(effective_sample_size(&sticky) < 100.0);
        assert_eq!(effective_sample_size(&[3.0; 50]), 50.0);
    }

    #[test]
    fn strong_vra_weight_concentrates_on_the_mmd_plan() {
        let g = grid(2, 2);
        let left = RaceCounts([40, 60, 0, 0, 0]);
        let right = RaceCounts([100, 0, 0, 0, 0]);
        let s = PopulationScenario::from_race_counts("vra", vec![left, right, left, right]);
        let cfg = ConstraintConfig {
            vra_weight: 12.0,
            vra_target_mmds: Some(1),
            ..ConstraintConfig::with_tolerance(0.0)
        };
        let horizontal = Plan::new(2, vec![1, 1, 2, 2]).unwrap();
        let e = mergesplit_chain(&g, &s, &horizontal, &cfg, 20_000, 1, 9).unwrap();
        let hits = e
            .plans()
            .iter()
            .filter(|p| mmd_count(p, &s, &cfg.mmd_definition) == 1)
            .count();
        assert!(hits as f64 / e.len() as f64 > 0.99, "{hits} of {}", e.len());
    }

    #[test]
    fn pooled_chains_match_across_execution_modes() {
        let g = grid(3, 4);
        let s = unit(&g);
        let init = Plan::new(3, vec![1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 3, 3]).unwrap();
        let cfg = ConstraintConfig::with_tolerance(0.0);
        let run = |exec| mergesplit_chains(&g, &s, &init, &cfg, 200, 2, 5, 4, exec).unwrap();
        let seq = run(Execution::Sequential);
        let par = run(Execution::Parallel);
        assert_eq!(seq.plans(), par.plans());
        assert_eq!(seq.len(), 360);
    }

    #[test]
    fn two_by_two_frequencies_are_even() {
        let g = grid(2, 2);
        let init = Plan::new(2, vec![1, 1, 2, 2]).unwrap();
        let e = mergesplit_chain(&g, &unit(&g), &init, &ConstraintConfig::with_tolerance(0.0), 20_000, 1, 4)
            .unwrap();
        let horizontal = crate::smc::district_labels_canonicalize(&init);
        let share = e
            .plans()
            .iter()
            .filter(|p| crate::smc::district_labels_canonicalize(p) == horizontal)
            .count() as f64
            / e.len() as f64;
        assert!((share - 0.5).abs() < 0.03, "{share}");
    }
}

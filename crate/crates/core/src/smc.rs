//! Sequential Monte Carlo plan sampler.
//!
//! Each particle peels one district at a time off its unassigned remainder:
//! draw a uniform spanning tree on the remainder, pick a balanced cut edge
//! uniformly, and reweight. Particles are resampled systematically when the
//! effective sample size drops below a threshold.
//!
//! The weighted ensemble targets plans with probability proportional to
//! `Π τ(D_k) · exp(-compactness · cut_edges - vra · shortfall)`, where
//! `τ(D)` counts spanning trees of district `D`. The per-split weight
//! `p̂ · |C(T)| / cut(D, R')` is unbiased for `τ(D) τ(R') / τ(R)`, with
//! `p̂` estimating the chance that a tree draw yields a usable cut.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde_json::json;

use crate::ensemble::{ConstraintConfig, PlanEnsemble, Provenance};
use crate::error::{Error, Result};
use crate::graph::{Plan, PopulationScenario, RegionGraph};
use crate::metrics::mmd_count;
use crate::par::{self, Execution};
use crate::rng::{stream_rng, SimRng};
use crate::tree::{balanced_cut_edges, SplitTarget, Subgraph};

const TAG_SPLIT: u64 = 0x5350_4c49;
const TAG_RESAMPLE: u64 = 0x5245_5341;

/// Peel-order corrections are exact up to this many districts.
pub const MAX_ORDER_CORRECTION_DISTRICTS: u32 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SmcOptions {
    /// Tree draws allowed per particle per split.
    pub retry_budget: usize,
    /// Resample when ESS falls below this fraction of the particle count.
    pub resample_threshold: f64,
    pub execution: Execution,
}

impl Default for SmcOptions {
    fn default() -> Self {
        SmcOptions {
            retry_budget: 1000,
            resample_threshold: 0.5,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct Particle {
    /// 0 marks the unassigned remainder.
    labels: Vec<u32>,
    remainder: Vec<usize>,
    log_weight: f64,
}

/// County number per node, for fast split counting.
pub(crate) struct CountyIndex {
    of: Vec<usize>,
    n: usize,
}

impl CountyIndex {
    pub(crate) fn new(graph: &RegionGraph) -> Self {
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let of = graph
            .nodes()
            .iter()
            .map(|n| {
                let next = ids.len();
                *ids.entry(n.county.as_str()).or_insert(next)
            })
            .collect();
        CountyIndex { of, n: ids.len() }
    }

    /// Counties whose nodes carry more than one distinct label.
    pub(crate) fn splits(&self, labels: &[u32]) -> usize {
        let mut first = vec![u32::MAX; self.n];
        let mut split = vec![false; self.n];
        for (i, &l) in labels.iter().enumerate() {
            let c = self.of[i];
            if first[c] == u32::MAX {
                first[c] = l;
            } else if first[c] != l {
                split[c] = true;
            }
        }
        split.iter().filter(|&&s| s).count()
    }
}

struct SplitContext<'a> {
    graph: &'a RegionGraph,
    scenario: &'a PopulationScenario,
    config: &'a ConstraintConfig,
    counties: &'a CountyIndex,
    district_pop: f64,
    retry_budget: usize,
}

/// Number of edges from `district` (already labeled) into the unassigned
/// remainder.
fn boundary_edges(graph: &RegionGraph, labels: &[u32], district: &[usize]) -> usize {
    district
        .iter()
        .flat_map(|&v| graph.neighbors(v))
        .filter(|&&w| labels[w] == 0)
        .count()
}

impl SplitContext<'_> {
    /// Splits one district labeled `label` off the particle's remainder,
    /// which must end up holding `k` districts. Returns `false` if the
    /// particle died.
    fn split(&self, particle: &mut Particle, k: u32, label: u32, rng: &mut SimRng) -> Result<bool> {
        let sub = Subgraph::induced(self.graph, &particle.remainder)?;
        let target = SplitTarget {
            district_pop: self.district_pop,
            n_districts: k,
        };
        let mut draws = 0usize;
        let mut successes = 0usize;
        let mut chosen: Option<(Vec<usize>, Vec<usize>, usize)> = None;
        let mut labels = particle.labels.clone();
        while draws < self.retry_budget && successes < 2 {
            draws += 1;
            let tree = sub.random_spanning_tree(rng);
            let cuts = balanced_cut_edges(
                &tree,
                &self.scenario.population,
                target,
                self.config.pop_tolerance,
            );
            if cuts.is_empty() {
                continue;
            }
            let cut = cuts[rng.random_range(0..cuts.len())];
            let (district, rest) = tree.split(&cut);
            if let Some(cap) = self.config.max_county_splits {
                for &v in &district {
                    labels[v] = label;
                }
                let over = self.counties.splits(&labels) > cap as usize;
                for &v in &district {
                    labels[v] = 0;
                }
                if over {
                    continue;
                }
            }
            successes += 1;
            if chosen.is_none() {
                chosen = Some((district, rest, cuts.len()));
            }
        }
        let Some((district, rest, n_cuts)) = chosen else {
            particle.log_weight = f64::NEG_INFINITY;
            return Ok(false);
        };
        // Negative-binomial estimate of the per-draw success probability.
        let p_hat = if successes >= 2 {
            1.0 / (draws - 1) as f64
        } else {
            1.0 / self.retry_budget as f64
        };
        for &v in &district {
            particle.labels[v] = label;
        }
        let boundary = boundary_edges(self.graph, &particle.labels, &district);
        particle.log_weight += p_hat.ln() + (n_cuts as f64).ln()
            - (boundary as f64).ln()
            - self.config.compactness_weight * boundary as f64;
        if k == 2 {
            for &v in &rest {
                particle.labels[v] = label + 1;
            }
            particle.remainder.clear();
        } else {
            particle.remainder = rest;
        }
        Ok(true)
    }
}

fn normalized(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Systematic resampling: one uniform offset, `n` evenly spaced pointers.
pub(crate) fn systematic_resample(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut j = 0;
    for i in 0..n {
        let point = (u + i as f64) / n as f64;
        while (point > cum || weights[j] == 0.0) && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

fn resample(particles: &mut Vec<Particle>, weights: &[f64], seed: u64, stage: u64) {
    let u: f64 = stream_rng(seed, &[TAG_RESAMPLE, stage]).random();
    let picks = systematic_resample(weights, u);
    let next: Vec<Particle> = picks
        .into_iter()
        .map(|j| Particle {
            log_weight: 0.0,
            ..particles[j].clone()
        })
        .collect();
    *particles = next;
}

/// Number of orders in which a plan's districts can be peeled off one at a
/// time with every intermediate remainder connected.
pub(crate) fn peel_orders(graph: &RegionGraph, plan: &Plan) -> f64 {
    let n = plan.n_districts() as usize;
    let mut adj = vec![0u32; n];
    for &(a, b) in graph.edges() {
        let (da, db) = (plan.district_of(a) as usize - 1, plan.district_of(b) as usize - 1);
        if da != db {
            adj[da] |= 1 << db;
            adj[db] |= 1 << da;
        }
    }
    let connected = |set: u32| -> bool {
        let start = set.trailing_zeros();
        let mut seen = 1u32 << start;
        let mut frontier = seen;
        while frontier != 0 {
            let mut next = 0;
            let mut f = frontier;
            while f != 0 {
                let d = f.trailing_zeros() as usize;
                f &= f - 1;
                next |= adj[d];
            }
            next &= set & !seen;
            seen |= next;
            frontier = next;
        }
        seen == set
    };
    fn count(set: u32, memo: &mut HashMap<u32, f64>, connected: &dyn Fn(u32) -> bool) -> f64 {
        if set.count_ones() <= 2 {
            return 1.0;
        }
        if let Some(&v) = memo.get(&set) {
            return v;
        }
        let mut total = 0.0;
        let mut rest = set;
        while rest != 0 {
            let d = rest.trailing_zeros();
            rest &= rest - 1;
            let remaining = set & !(1 << d);
            if connected(remaining) {
                total += count(remaining, memo, connected);
            }
        }
        memo.insert(set, total);
        total
    }
    let full = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    count(full, &mut HashMap::new(), &connected)
}

/// Relabels districts in order of their first node, so plans that differ
/// only by a label permutation compare equal.
pub fn district_labels_canonicalize(plan: &Plan) -> Plan {
    let mut map = vec![0u32; plan.n_districts() as usize + 1];
    let mut next = 0;
    let assignment = plan
        .assignment()
        .iter()
        .map(|&d| {
            if map[d as usize] == 0 {
                next += 1;
                map[d as usize] = next;
            }
            map[d as usize]
        })
        .collect();
    Plan::new(plan.n_districts(), assignment).expect("relabeling preserves validity")
}

/// Samples `n_plans` weighted plans with default options.
pub fn sample_plans_smc(
    graph: &RegionGraph,
    scenario: &PopulationScenario,
    n_districts: u32,
    config: &ConstraintConfig,
    n_plans: usize,
    seed: u64,
) -> Result<PlanEnsemble> {
    sample_plans_smc_with(
        graph,
        scenario,
        n_districts,
        config,
        n_plans,
        seed,
        &SmcOptions::default(),
    )
}

pub fn sample_plans_smc_with(
    graph: &RegionGraph,
    scenario: &PopulationScenario,
    n_districts: u32,
    config: &ConstraintConfig,
    n_plans: usize,
    seed: u64,
    opts: &SmcOptions,
) -> Result<PlanEnsemble> {
    config.validate()?;
    scenario.check_covers(graph)?;
    if n_districts < 2 || n_districts as usize > graph.len() {
        return Err(Error::InvalidDistrictCount(n_districts));
    }
    if n_plans == 0 {
        return Err(Error::InvalidConfig("n_plans must be positive".into()));
    }
    if opts.retry_budget == 0 {
        return Err(Error::InvalidConfig("retry budget must be positive".into()));
    }
    let total = scenario.total();
    if total == 0 {
        return Err(Error::ZeroPopulation);
    }

    let counties = CountyIndex::new(graph);
    let ctx = SplitContext {
        graph,
        scenario,
        config,
        counties: &counties,
        district_pop: total as f64 / n_districts as f64,
        retry_budget: opts.retry_budget,
    };
    let all: Vec<usize> = (0..graph.len()).collect();
    let mut particles = vec![
        Particle {
            labels: vec![0; graph.len()],
            remainder: all,
            log_weight: 0.0,
        };
        n_plans
    ];
    let mut resamples = 0usize;

    for stage in 0..(n_districts - 1) {
        let k = n_districts - stage;
        let label = stage + 1;
        let outcomes = {
            let ctx = &ctx;
            let mut results: Vec<Result<bool>> = (0..n_plans).map(|_| Ok(true)).collect();
            let mut paired: Vec<(&mut Particle, &mut Result<bool>)> =
                particles.iter_mut().zip(results.iter_mut()).collect();
            par::for_each_mut(opts.execution, &mut paired, |i, (p, out)| {
                let mut rng = stream_rng(seed, &[TAG_SPLIT, stage as u64, i as u64]);
                **out = ctx.split(p, k, label, &mut rng);
            });
            drop(paired);
            results
        };
        let mut alive = 0;
        for o in outcomes {
            if o? {
                alive += 1;
            }
        }
        if alive == 0 {
            return Err(Error::Infeasible(format!(
                "no particle found a balanced split for district {label} of {n_districts} \
                 within {} tree draws (tolerance {})",
                opts.retry_budget, config.pop_tolerance
            )));
        }
        let is_final = k == 2;
        if !is_final {
            let log_w: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
            let w = normalized(&log_w);
            if alive < n_plans || ess(&w) < opts.resample_threshold * n_plans as f64 {
                resample(&mut particles, &w, seed, stage as u64);
                resamples += 1;
            }
        }
    }

    let plans: Vec<Option<Plan>> = par::map_slice(opts.execution, &particles, |_, p| {
        p.log_weight
            .is_finite()
            .then(|| Plan::new(n_districts, p.labels.clone()).expect("sampler labels are complete"))
    });
    let correct_order = n_districts <= MAX_ORDER_CORRECTION_DISTRICTS;
    let final_log_w: Vec<f64> = par::map_slice(opts.execution, &particles, |i, p| {
        let Some(plan) = &plans[i] else {
            return f64::NEG_INFINITY;
        };
        let mut lw = p.log_weight;
        if correct_order {
            lw -= peel_orders(graph, plan).ln();
        }
        if config.uses_vra() {
            let short = config.mmd_shortfall(mmd_count(plan, scenario, &config.mmd_definition));
            lw -= config.vra_weight * short as f64;
        }
        lw
    });
    let mut weights = normalized(&final_log_w);
    let weight_ess = ess(&weights);
    let mut plans: Vec<Plan> = if plans.iter().any(Option::is_none) {
        let u: f64 = stream_rng(seed, &[TAG_RESAMPLE, n_districts as u64]).random();
        let picks = systematic_resample(&weights, u);
        resamples += 1;
        weights = vec![1.0; n_plans];
        picks
            .into_iter()
            .map(|j| plans[j].clone().expect("resampling skips dead particles"))
            .collect()
    } else {
        plans.into_iter().map(|p| p.expect("all particles alive")).collect()
    };
    plans.shrink_to_fit();

    let mut extra = BTreeMap::new();
    extra.insert("retry_budget".into(), json!(opts.retry_budget));
    extra.insert("resample_threshold".into(), json!(opts.resample_threshold));
    extra.insert("resampling_steps".into(), json!(resamples));
    extra.insert("peel_order_correction".into(), json!(correct_order));
    extra.insert("effective_sample_size".into(), json!(weight_ess));
    let provenance = Provenance {
        sampler: "smc".into(),
        scenario_id: scenario.id.clone(),
        n_districts,
        tolerance: config.pop_tolerance,
        constraints: config.clone(),
        seed,
        extra,
    };
    PlanEnsemble::new(plans, weights, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_graphs::grid;
    use crate::graph::{contiguity_check, RaceCounts};
    use crate::metrics::parity_deviation;

    fn unit(graph: &RegionGraph) -> PopulationScenario {
        PopulationScenario::from_race_counts("unit", vec![RaceCounts([1, 0, 0, 0, 0]); graph.len()])
    }

    #[test]
    fn canonicalize_examples() {
        let p = Plan::new(2, vec![2, 2, 1, 1]).unwrap();
        assert_eq!(district_labels_canonicalize(&p).assignment(), &[1, 1, 2, 2]);
        let c = Plan::new(3, vec![1, 2, 2, 3]).unwrap();
        assert_eq!(district_labels_canonicalize(&c), c);
        let q = Plan::new(3, vec![3, 1, 1, 2]).unwrap();
        assert_eq!(district_labels_canonicalize(&q), c);
    }

    #[test]
    fn systematic_resampling_counts() {
        let picks = systematic_resample(&[0.5, 0.0, 0.25, 0.25], 0.5);
        assert_eq!(picks, vec![0, 0, 2, 3]);
        let picks = systematic_resample(&[0.0, 1.0], 0.99);
        assert_eq!(picks, vec![1, 1]);
    }

    #[test]
    fn peel_order_counts() {
        let g = grid(3, 3);
        // Rows: the middle row cannot go first.
        let rows = Plan::new(3, vec![1, 1, 1, 2, 2, 2, 3, 3, 3]).unwrap();
        assert_eq!(peel_orders(&g, &rows), 2.0);
        // An L, a bar and an L: all three have connected complements.
        let mixed = Plan::new(3, vec![1, 1, 2, 1, 3, 2, 3, 3, 2]).unwrap();
        assert_eq!(peel_orders(&g, &mixed), 3.0);
        let two = Plan::new(2, vec![1, 1, 1, 1, 1, 2, 2, 2, 2]).unwrap();
        assert_eq!(peel_orders(&g, &two), 1.0);
        // Four columns on a 1x4 path: only the ends can be peeled, twice.
        let path = grid(1, 4);
        let singles = Plan::new(4, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(peel_orders(&path, &singles), 4.0);
    }

    #[test]
    fn path_of_four_unique_split() {
        let g = grid(1, 4);
        let e = sample_plans_smc(&g, &unit(&g), 2, &ConstraintConfig::with_tolerance(0.0), 200, 9)
            .unwrap();
        for p in e.plans() {
            assert_eq!(district_labels_canonicalize(p).assignment(), &[1, 1, 2, 2]);
        }
    }

    #[test]
    fn path_of_three_infeasible() {
        let g = grid(1, 3);
        let err = sample_plans_smc(&g, &unit(&g), 2, &ConstraintConfig::with_tolerance(0.0), 20, 1)
            .unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn invalid_district_counts() {
        let g = grid(1, 3);
        let cfg = ConstraintConfig::with_tolerance(0.5);
        assert!(matches!(
            sample_plans_smc(&g, &unit(&g), 1, &cfg, 5, 1),
            Err(Error::InvalidDistrictCount(1))
        ));
        assert!(matches!(
            sample_plans_smc(&g, &unit(&g), 4, &cfg, 5, 1),
            Err(Error::InvalidDistrictCount(4))
        ));
    }

    #[test]
    fn plans_valid_and_deterministic() {
        let g = grid(4, 4);
        let s = unit(&g);
        let cfg = ConstraintConfig::with_tolerance(0.0);
        let a = sample_plans_smc(&g, &s, 4, &cfg, 300, 42).unwrap();
        for p in a.plans() {
            assert!(contiguity_check(&g, p).unwrap().iter().all(|&c| c));
            assert_eq!(parity_deviation(p, &s).unwrap().max_deviation, 0.0);
        }
        let seq = SmcOptions {
            execution: Execution::Sequential,
            ..SmcOptions::default()
        };
        let b = sample_plans_smc_with(&g, &s, 4, &cfg, 300, 42, &seq).unwrap();
        assert_eq!(a.plans(), b.plans());
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn county_cap_respected() {
        let base = grid(4, 4);
        // Counties are 2x2 blocks.
        let nodes = base
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| crate::graph::PrecinctAttributes {
                county: format!("{}-{}", (i / 4) / 2, (i % 4) / 2),
                ..n.clone()
            })
            .collect();
        let g = RegionGraph::new(nodes, base.edges().to_vec()).unwrap();
        let mut cfg = ConstraintConfig::with_tolerance(0.0);
        cfg.max_county_splits = Some(0);
        let e = sample_plans_smc(&g, &unit(&g), 4, &cfg, 200, 5).unwrap();
        for p in e.plans() {
            assert_eq!(crate::metrics::county_splits(p, &g), 0);
        }
    }
}

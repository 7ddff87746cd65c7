//! Plan-level and ensemble-level measures.
//!
//! All functions are pure. Majority thresholds are strict: a district at
//! exactly 50% is never a majority.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::ensemble::PlanEnsemble;
use crate::error::{Error, Result};
use crate::graph::{Plan, PopulationScenario, Race, RaceCounts, RegionGraph};
use crate::par::{self, Execution};

/// |pop - target| / target.
pub fn relative_deviation(pop: f64, target: f64) -> f64 {
    (pop - target).abs() / target
}

/// Per-district populations, indexed by `label - 1`.
pub fn district_populations(plan: &Plan, scenario: &PopulationScenario) -> Vec<u64> {
    let mut pops = vec![0u64; plan.n_districts() as usize];
    for (i, &d) in plan.assignment().iter().enumerate() {
        pops[(d - 1) as usize] += scenario.population[i];
    }
    pops
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityResult {
    pub per_district: Vec<f64>,
    pub max_deviation: f64,
}

/// Deviation from parity: for each district |P_k - P̄| / P̄ with
/// P̄ = total / n_d, and the maximum over districts.
pub fn parity_deviation(plan: &Plan, scenario: &PopulationScenario) -> Result<ParityResult> {
    if plan.len() != scenario.population.len() {
        return Err(Error::LengthMismatch(plan.len(), scenario.population.len()));
    }
    let pops = district_populations(plan, scenario);
    let total: u64 = pops.iter().sum();
    if total == 0 {
        return Err(Error::ZeroPopulation);
    }
    let target = total as f64 / plan.n_districts() as f64;
    let per_district: Vec<f64> = pops
        .iter()
        .map(|&p| relative_deviation(p as f64, target))
        .collect();
    let max_deviation = per_district.iter().copied().fold(0.0, f64::max);
    Ok(ParityResult {
        per_district,
        max_deviation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reevaluation {
    pub max_deviations: Vec<f64>,
    /// Weighted share of plans whose deviation exceeds the tolerance.
    pub invalid_fraction: f64,
}

/// Recomputes parity of every plan under another scenario.
pub fn reevaluate_ensemble(
    ensemble: &PlanEnsemble,
    other: &PopulationScenario,
    tolerance: f64,
) -> Result<Reevaluation> {
    if ensemble.plans()[0].len() != other.population.len() {
        return Err(Error::ScenarioMismatch {
            scenario: other.id.clone(),
            precinct: String::new(),
            reason: format!(
                "covers {} precincts, ensemble plans cover {}",
                other.population.len(),
                ensemble.plans()[0].len()
            ),
        });
    }
    let devs = par::map_slice(Execution::default(), ensemble.plans(), |_, p| {
        parity_deviation(p, other).map(|r| r.max_deviation)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let invalid_fraction = devs
        .iter()
        .zip(ensemble.weights())
        .filter(|(d, _)| **d > tolerance)
        .map(|(_, w)| *w)
        .sum();
    Ok(Reevaluation {
        max_deviations: devs,
        invalid_fraction,
    })
}

/// Number of counties whose precincts touch more than one district.
pub fn county_splits(plan: &Plan, graph: &RegionGraph) -> usize {
    let mut first: BTreeMap<&str, u32> = BTreeMap::new();
    let mut split: HashSet<&str> = HashSet::new();
    for (i, node) in graph.nodes().iter().enumerate() {
        let d = plan.district_of(i);
        match first.get(node.county.as_str()) {
            None => {
                first.insert(&node.county, d);
            }
            Some(&d0) if d0 != d => {
                split.insert(&node.county);
            }
            _ => {}
        }
    }
    split.len()
}

/// Number of edges whose endpoints lie in different districts.
pub fn cut_edge_count(plan: &Plan, graph: &RegionGraph) -> usize {
    graph
        .edges()
        .iter()
        .filter(|&&(a, b)| plan.district_of(a) != plan.district_of(b))
        .count()
}

/// Cut-edge fraction; lower is more compact.
pub fn compactness_cut_edges(plan: &Plan, graph: &RegionGraph) -> f64 {
    if graph.edges().is_empty() {
        return 0.0;
    }
    cut_edge_count(plan, graph) as f64 / graph.edges().len() as f64
}

/// Districts where the Democratic two-party share strictly exceeds 1/2.
pub fn dem_majority_seats(plan: &Plan, graph: &RegionGraph) -> Result<u32> {
    let n = plan.n_districts() as usize;
    let mut dem = vec![0u64; n];
    let mut rep = vec![0u64; n];
    for (i, node) in graph.nodes().iter().enumerate() {
        let d = (plan.district_of(i) - 1) as usize;
        dem[d] += node.votes_dem;
        rep[d] += node.votes_rep;
    }
    let mut seats = 0;
    for k in 0..n {
        if dem[k] + rep[k] == 0 {
            return Err(Error::ZeroTwoPartyVote(k as u32 + 1));
        }
        // dem / (dem + rep) > 1/2  <=>  dem > rep
        if dem[k] > rep[k] {
            seats += 1;
        }
    }
    Ok(seats)
}

/// Which races count toward a majority-minority district, and the share
/// they must strictly exceed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdDefinition {
    pub races: Vec<Race>,
    pub threshold: f64,
}

impl MmdDefinition {
    /// Black population majority.
    pub fn black() -> Self {
        MmdDefinition {
            races: vec![Race::Black],
            threshold: 0.5,
        }
    }

    /// Combined Black and Hispanic majority.
    pub fn black_hispanic() -> Self {
        MmdDefinition {
            races: vec![Race::Black, Race::Hispanic],
            threshold: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.races.is_empty() || !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!(
                "MMD definition needs at least one race and a threshold in [0, 1), got {:?}",
                self
            )));
        }
        Ok(())
    }

    /// Whether a district with these counts qualifies.
    pub fn is_mmd(&self, counts: &RaceCounts) -> bool {
        let total = counts.total();
        if total == 0 {
            return false;
        }
        let minority: u64 = self.races.iter().map(|&r| counts[r]).sum();
        minority as f64 > self.threshold * total as f64
    }
}

/// Summed race counts per district, indexed by `label - 1`.
pub fn district_race_counts(plan: &Plan, scenario: &PopulationScenario) -> Vec<RaceCounts> {
    let mut out = vec![RaceCounts::default(); plan.n_districts() as usize];
    for (i, &d) in plan.assignment().iter().enumerate() {
        out[(d - 1) as usize] += scenario.race[i];
    }
    out
}

/// Per-district MMD indicator, indexed by `label - 1`.
pub fn mmd_flags(plan: &Plan, scenario: &PopulationScenario, def: &MmdDefinition) -> Vec<bool> {
    district_race_counts(plan, scenario)
        .iter()
        .map(|c| def.is_mmd(c))
        .collect()
}

pub fn mmd_count(plan: &Plan, scenario: &PopulationScenario, def: &MmdDefinition) -> u32 {
    mmd_flags(plan, scenario, def).iter().filter(|&&f| f).count() as u32
}

/// Racial Herfindahl-Hirschman index in percent: 100 × Σ share².
pub fn hhi(counts: &RaceCounts) -> Result<f64> {
    let shares = counts.shares().ok_or(Error::ZeroPopulation)?;
    Ok(100.0 * shares.iter().map(|s| s * s).sum::<f64>())
}

/// Weighted probability, per precinct, of lying in an MMD.
pub fn mmd_membership_prob(
    ensemble: &PlanEnsemble,
    scenario: &PopulationScenario,
    def: &MmdDefinition,
) -> Vec<f64> {
    let flags = par::map_slice(Execution::default(), ensemble.plans(), |_, p| {
        mmd_flags(p, scenario, def)
    });
    let mut prob = vec![0.0; ensemble.plans()[0].len()];
    for ((plan, w), flags) in ensemble.iter().zip(&flags) {
        for (i, &d) in plan.assignment().iter().enumerate() {
            if flags[(d - 1) as usize] {
                prob[i] += w;
            }
        }
    }
    prob
}

/// `a - b` per precinct.
pub fn prob_difference(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Weighted, normalized histogram of an integer plan metric.
pub fn seats_histogram<F>(ensemble: &PlanEnsemble, metric: F) -> Result<BTreeMap<u32, f64>>
where
    F: Fn(&Plan) -> Result<u32> + Sync + Send,
{
    let values = par::map_slice(Execution::default(), ensemble.plans(), |_, p| metric(p))
        .into_iter()
        .collect::<Result<Vec<u32>>>()?;
    let mut hist = BTreeMap::new();
    for (v, w) in values.into_iter().zip(ensemble.weights()) {
        *hist.entry(v).or_insert(0.0) += w;
    }
    Ok(hist)
}

/// Joint distribution of MMD counts under two scenarios, row-normalized to
/// percentages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionTable {
    /// MMD count of the first row/column; labels run consecutively.
    pub first_label: u32,
    /// `cells[i][j]`: percent of plans with `first_label + i` MMDs under
    /// scenario A that have `first_label + j` under scenario B.
    pub cells: Vec<Vec<f64>>,
    /// Total weight in each row; rows with zero mass are all-zero.
    pub row_mass: Vec<f64>,
}

impl ConfusionTable {
    pub fn labels(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.cells.len() as u32).map(move |i| self.first_label + i)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("mmd_a");
        for l in self.labels() {
            out.push_str(&format!(",b_{l}"));
        }
        out.push('\n');
        for (l, row) in self.labels().zip(&self.cells) {
            out.push_str(&l.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn mmd_confusion(
    ensemble: &PlanEnsemble,
    scenario_a: &PopulationScenario,
    scenario_b: &PopulationScenario,
    def: &MmdDefinition,
) -> ConfusionTable {
    let pairs = par::map_slice(Execution::default(), ensemble.plans(), |_, p| {
        (mmd_count(p, scenario_a, def), mmd_count(p, scenario_b, def))
    });
    let lo = pairs.iter().map(|&(a, b)| a.min(b)).min().unwrap_or(0);
    let hi = pairs.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0);
    let n = (hi - lo + 1) as usize;
    let mut mass = vec![vec![0.0; n]; n];
    for (&(a, b), w) in pairs.iter().zip(ensemble.weights()) {
        mass[(a - lo) as usize][(b - lo) as usize] += w;
    }
    let row_mass: Vec<f64> = mass.iter().map(|r| r.iter().sum()).collect();
    let cells = mass
        .into_iter()
        .zip(&row_mass)
        .map(|(row, &m)| {
            if m > 0.0 {
                row.into_iter().map(|v| 100.0 * v / m).collect()
            } else {
                row
            }
        })
        .collect();
    ConfusionTable {
        first_label: lo,
        cells,
        row_mass,
    }
}

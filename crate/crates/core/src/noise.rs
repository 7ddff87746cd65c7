//! Hierarchical integer noise for population tables, and binned summaries
//! of the resulting precinct errors.
//!
//! Noise is two-sided geometric, `P(k) ∝ α^|k|` with `α = exp(-1/scale)`,
//! drawn as the difference of two floored exponentials so that, for a fixed
//! random stream, every draw's magnitude is nondecreasing in `scale`.
//! County totals are perturbed first and re-allocated to their precincts;
//! precinct cells are then perturbed individually. Post-processing clips to
//! zero, restores the grand total by largest-remainder rounding, and
//! recomputes populations from race counts.
//!
//! This is a simple stand-in for a production disclosure-avoidance system:
//! it reproduces the shape of the perturbation (integer, nonnegative,
//! total-preserving), not its optimization-based post-processing.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{PopulationScenario, Race, RaceCounts, RegionGraph};
use crate::metrics::hhi;
use crate::par::{self, Execution};
use crate::rng::{derive_seed, stream_rng, SimRng};

const TAG_COUNTY: u64 = 0x434f_554e;
const TAG_PRECINCT: u64 = 0x5052_4543;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLevel {
    County,
    Precinct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Noise scale; larger means noisier. Acts as `1/ε`.
    pub scale: f64,
    /// Levels at which noise is injected, outermost first.
    pub levels: Vec<NoiseLevel>,
    pub total_population_exact: bool,
    /// Must stay `true`: scenarios hold unsigned counts.
    pub nonnegative_counts: bool,
    /// Halve the precinct-level scale on each precinct's plurality race.
    pub protect_plurality: bool,
    /// Inject precinct-level noise only where the true racial HHI (percent)
    /// is below this value.
    pub mixed_only_below_hhi: Option<f64>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(scale: f64, seed: u64) -> Self {
        NoiseSpec {
            scale,
            levels: vec![NoiseLevel::County, NoiseLevel::Precinct],
            total_population_exact: true,
            nonnegative_counts: true,
            protect_plurality: false,
            mixed_only_below_hhi: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise scale {} must be positive and finite",
                self.scale
            )));
        }
        if !self.nonnegative_counts {
            return Err(Error::InvalidConfig(
                "population counts are unsigned; nonnegative_counts cannot be disabled".into(),
            ));
        }
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "noise levels must be nonempty, distinct, and ordered county before precinct"
                    .into(),
            ));
        }
        if let Some(t) = self.mixed_only_below_hhi {
            if !(0.0..=100.0).contains(&t) {
                return Err(Error::InvalidConfig(format!("HHI threshold {t} outside [0, 100]")));
            }
        }
        Ok(())
    }
}

/// One two-sided geometric draw with parameter `exp(-1/scale)`.
pub fn two_sided_geometric(scale: f64, rng: &mut SimRng) -> i64 {
    let a: f64 = rng.sample(Exp1);
    let b: f64 = rng.sample(Exp1);
    (scale * a).floor() as i64 - (scale * b).floor() as i64
}

/// Splits `total` into integers proportional to `weights`: floors first,
/// then one extra unit to each of the largest remainders (earlier index
/// wins ties). Zero weights everywhere split evenly.
pub fn largest_remainder(weights: &[u64], total: u64) -> Vec<u64> {
    if weights.is_empty() {
        return Vec::new();
    }
    let ones;
    let weights = if weights.iter().all(|&w| w == 0) {
        ones = vec![1u64; weights.len()];
        &ones
    } else {
        weights
    };
    let denom: u128 = weights.iter().map(|&w| w as u128).sum();
    let mut out = Vec::with_capacity(weights.len());
    let mut rems = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let num = w as u128 * total as u128;
        out.push((num / denom) as u64);
        rems.push((num % denom, i));
    }
    let assigned: u64 = out.iter().sum();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rems.iter().take((total - assigned) as usize) {
        out[i] += 1;
    }
    out
}

fn county_groups(graph: &RegionGraph) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, n) in graph.nodes().iter().enumerate() {
        groups.entry(n.county.as_str()).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Returns a perturbed copy of `scenario` with id `<id>-noisy`.
pub fn perturb_scenario(
    graph: &RegionGraph,
    scenario: &PopulationScenario,
    spec: &NoiseSpec,
) -> Result<PopulationScenario> {
    spec.validate()?;
    scenario.validate(graph)?;
    let mut cells: Vec<[i64; 5]> = scenario.race.iter().map(|r| r.0.map(|c| c as i64)).collect();

    if spec.levels.contains(&NoiseLevel::County) {
        for (c, members) in county_groups(graph).iter().enumerate() {
            let mut rng = stream_rng(spec.seed, &[TAG_COUNTY, c as u64]);
            for r in 0..5 {
                let current: Vec<u64> = members.iter().map(|&i| cells[i][r] as u64).collect();
                let total = current.iter().sum::<u64>() as i64;
                let noisy = (total + two_sided_geometric(spec.scale, &mut rng)).max(0) as u64;
                for (&i, v) in members.iter().zip(largest_remainder(&current, noisy)) {
                    cells[i][r] = v as i64;
                }
            }
        }
    }

    if spec.levels.contains(&NoiseLevel::Precinct) {
        for (i, cell) in cells.iter_mut().enumerate() {
            let truth = &scenario.race[i];
            if let Some(limit) = spec.mixed_only_below_hhi {
                if hhi(truth).map_or(true, |h| h >= limit) {
                    continue;
                }
            }
            let plurality = truth.plurality().index();
            let mut rng = stream_rng(spec.seed, &[TAG_PRECINCT, i as u64]);
            for (r, v) in cell.iter_mut().enumerate() {
                let s = if spec.protect_plurality && r == plurality {
                    spec.scale / 2.0
                } else {
                    spec.scale
                };
                *v += two_sided_geometric(s, &mut rng);
            }
        }
    }

    let mut flat: Vec<u64> = cells.iter().flatten().map(|&v| v.max(0) as u64).collect();
    if spec.total_population_exact {
        let target = scenario.total();
        let current: u64 = flat.iter().sum();
        if current != target {
            let weights = if current == 0 {
                scenario.race.iter().flat_map(|r| r.0).collect()
            } else {
                flat
            };
            flat = largest_remainder(&weights, target);
        }
    }
    let race: Vec<RaceCounts> = flat
        .chunks_exact(5)
        .map(|c| RaceCounts([c[0], c[1], c[2], c[3], c[4]]))
        .collect();
    Ok(PopulationScenario::from_race_counts(
        format!("{}-noisy", scenario.id),
        race,
    ))
}

/// Independent replicates; replicate `k` uses seed
/// `derive_seed(spec.seed, [k])` and id `<id>-noisy-<k>`.
pub fn perturb_replicates(
    graph: &RegionGraph,
    scenario: &PopulationScenario,
    spec: &NoiseSpec,
    n: usize,
    execution: Execution,
) -> Result<Vec<PopulationScenario>> {
    par::map_range(execution, n, |k| {
        let spec = NoiseSpec {
            seed: derive_seed(spec.seed, &[k as u64]),
            ..spec.clone()
        };
        perturb_scenario(graph, scenario, &spec).map(|mut s| {
            s.id = format!("{}-noisy-{k}", scenario.id);
            s
        })
    })
    .into_iter()
    .collect()
}

/// Mean of `|noisy - true| / true` over precincts with positive true
/// population.
pub fn mean_relative_error(truth: &PopulationScenario, noisy: &PopulationScenario) -> Result<f64> {
    if truth.population.len() != noisy.population.len() {
        return Err(Error::LengthMismatch(truth.population.len(), noisy.population.len()));
    }
    let (sum, n) = truth
        .population
        .iter()
        .zip(&noisy.population)
        .filter(|(&t, _)| t > 0)
        .fold((0.0, 0usize), |(s, n), (&t, &y)| {
            (s + (y as f64 - t as f64).abs() / t as f64, n + 1)
        });
    if n == 0 {
        return Err(Error::ZeroPopulation);
    }
    Ok(sum / n as f64)
}

/// Mean absolute difference over every precinct-by-race cell.
pub fn mean_absolute_count_error(
    truth: &PopulationScenario,
    noisy: &PopulationScenario,
) -> Result<f64> {
    if truth.race.len() != noisy.race.len() || truth.race.is_empty() {
        return Err(Error::LengthMismatch(truth.race.len(), noisy.race.len()));
    }
    let sum: u64 = truth
        .race
        .iter()
        .zip(&noisy.race)
        .flat_map(|(a, b)| a.0.iter().zip(b.0).map(|(&x, y)| x.abs_diff(y)))
        .sum();
    Ok(sum as f64 / (5 * truth.race.len()) as f64)
}

/// Finds the scale whose mean relative precinct error, averaged over
/// `replicates` fixed-seed perturbations, is closest to `target` (bisection
/// on log scale).
pub fn calibrate_scale(
    graph: &RegionGraph,
    scenario: &PopulationScenario,
    template: &NoiseSpec,
    target: f64,
    replicates: usize,
    execution: Execution,
) -> Result<f64> {
    if !(target > 0.0 && target.is_finite()) || replicates == 0 {
        return Err(Error::InvalidConfig(
            "calibration needs a positive target error and at least one replicate".into(),
        ));
    }
    let error_at = |scale: f64| -> Result<f64> {
        let spec = NoiseSpec {
            scale,
            ..template.clone()
        };
        let reps = perturb_replicates(graph, scenario, &spec, replicates, execution)?;
        let errs = reps
            .iter()
            .map(|r| mean_relative_error(scenario, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(errs.iter().sum::<f64>() / errs.len() as f64)
    };
    let (mut lo, mut hi) = (1e-3f64, 1.0f64);
    while error_at(hi)? < target {
        lo = hi;
        hi *= 4.0;
        if hi > 1e9 {
            return Err(Error::InvalidConfig(format!(
                "target error {target} is unreachable"
            )));
        }
    }
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        if error_at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    DemShare,
    Turnout,
    /// Share of the true population that is not White.
    MinorityShare,
    Hhi,
}

impl Covariate {
    pub fn parse(s: &str) -> Option<Covariate> {
        match s {
            "dem_share" => Some(Covariate::DemShare),
            "turnout" => Some(Covariate::Turnout),
            "minority_share" => Some(Covariate::MinorityShare),
            "hhi" => Some(Covariate::Hhi),
            _ => None,
        }
    }

    fn value(self, graph: &RegionGraph, truth: &PopulationScenario, i: usize) -> Option<f64> {
        let counts = &truth.race[i];
        match self {
            Covariate::DemShare => graph.node(i).dem_share(),
            Covariate::Turnout => Some(graph.node(i).turnout),
            Covariate::MinorityShare => counts.shares().map(|s| 1.0 - s[Race::White.index()]),
            Covariate::Hhi => hhi(counts).ok(),
        }
    }
}

/// One equal-width covariate bin. `mean_error` is `None` for empty bins and
/// `sd_error` (sample standard deviation) for bins with fewer than two
/// precincts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
    pub mean_error: Option<f64>,
    pub sd_error: Option<f64>,
}

/// Bins precincts by a covariate of the true data and summarizes the
/// population error `noisy - true` in each bin. Precincts where the
/// covariate is undefined (no votes, no people) are left out.
pub fn error_summary(
    graph: &RegionGraph,
    truth: &PopulationScenario,
    noisy: &PopulationScenario,
    covariate: Covariate,
    n_bins: usize,
) -> Result<Vec<ErrorBin>> {
    if n_bins < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 bins, got {n_bins}")));
    }
    truth.check_covers(graph)?;
    noisy.check_covers(graph)?;
    let points: Vec<(f64, f64)> = (0..graph.len())
        .filter_map(|i| {
            let x = covariate.value(graph, truth, i)?;
            Some((x, noisy.population[i] as f64 - truth.population[i] as f64))
        })
        .collect();
    if points.is_empty() {
        return Err(Error::InvalidConfig(
            "covariate is undefined for every precinct".into(),
        ));
    }
    let min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / n_bins as f64;
    let mut groups = vec![Vec::new(); n_bins];
    for &(x, e) in &points {
        let b = if width > 0.0 {
            (((x - min) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        groups[b].push(e);
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(b, errs)| {
            let n = errs.len();
            let mean = (n > 0).then(|| errs.iter().sum::<f64>() / n as f64);
            let sd = mean.filter(|_| n > 1).map(|m| {
                (errs.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (n - 1) as f64).sqrt()
            });
            ErrorBin {
                bin_low: min + width * b as f64,
                bin_high: if b + 1 == n_bins { max } else { min + width * (b + 1) as f64 },
                count: n,
                mean_error: mean,
                sd_error: sd,
            }
        })
        .collect())
}

/// `bin_low,bin_high,count,mean_error,sd_error`; undefined values are
/// written as `NA`.
pub fn error_summary_csv(bins: &[ErrorBin]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    let mut out = String::from("bin_low,bin_high,count,mean_error,sd_error\n");
    for b in bins {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            b.bin_low,
            b.bin_high,
            b.count,
            fmt(b.mean_error),
            fmt(b.sd_error)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_graphs::grid;

    fn mixed(g: &RegionGraph) -> PopulationScenario {
        PopulationScenario::from_race_counts(
            "truth",
            (0..g.len())
                .map(|i| RaceCounts([400 + 7 * i as u64, 300, 200 + i as u64, 50, 50]))
                .collect(),
        )
    }

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(&[1, 1, 1], 10), vec![4, 3, 3]);
        assert_eq!(largest_remainder(&[0, 0], 3), vec![2, 1]);
        assert_eq!(largest_remainder(&[5, 0, 5], 10), vec![5, 0, 5]);
        assert_eq!(largest_remainder(&[2, 1], 2), vec![1, 1]);
        assert!(largest_remainder(&[], 5).is_empty());
    }

    #[test]
    fn tiny_scale_is_identity() {
        let g = grid(3, 3);
        let s = mixed(&g);
        let out = perturb_scenario(&g, &s, &NoiseSpec::new(1e-3, 4)).unwrap();
        assert_eq!(out.race, s.race);
        assert_eq!(out.population, s.population);
    }

    #[test]
    fn totals_exact_and_same_seed_same_output() {
        let g = grid(4, 4);
        let s = mixed(&g);
        let spec = NoiseSpec::new(40.0, 8);
        let a = perturb_scenario(&g, &s, &spec).unwrap();
        let b = perturb_scenario(&g, &s, &spec).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.race, s.race);
        assert_eq!(a.total(), s.total());
        a.validate(&g).unwrap();
        let loose = NoiseSpec {
            total_population_exact: false,
            ..spec
        };
        let c = perturb_scenario(&g, &s, &loose).unwrap();
        c.validate(&g).unwrap();
    }

    #[test]
    fn invalid_specs() {
        let g = grid(2, 2);
        let s = mixed(&g);
        for spec in [
            NoiseSpec::new(0.0, 1),
            NoiseSpec {
                nonnegative_counts: false,
                ..NoiseSpec::new(1.0, 1)
            },
            NoiseSpec {
                levels: vec![NoiseLevel::Precinct, NoiseLevel::County],
                ..NoiseSpec::new(1.0, 1)
            },
        ] {
            assert!(matches!(
                perturb_scenario(&g, &s, &spec),
                Err(Error::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn mixed_only_leaves_homogeneous_precincts_alone() {
        let g = grid(2, 2);
        let s = PopulationScenario::from_race_counts(
            "t",
            vec![
                RaceCounts([500, 0, 0, 0, 0]),
                RaceCounts([250, 250, 0, 0, 0]),
                RaceCounts([0, 500, 0, 0, 0]),
                RaceCounts([250, 250, 0, 0, 0]),
            ],
        );
        let spec = NoiseSpec {
            levels: vec![NoiseLevel::Precinct],
            total_population_exact: false,
            mixed_only_below_hhi: Some(90.0),
            ..NoiseSpec::new(30.0, 2)
        };
        let out = perturb_scenario(&g, &s, &spec).unwrap();
        assert_eq!(out.race[0], s.race[0]);
        assert_eq!(out.race[2], s.race[2]);
        assert!(out.race[1] != s.race[1] || out.race[3] != s.race[3]);
    }

    #[test]
    fn geometric_draws_are_symmetric_with_expected_spread() {
        let mut rng = stream_rng(3, &[]);
        let scale = 5.0;
        let n = 200_000;
        let draws: Vec<i64> = (0..n).map(|_| two_sided_geometric(scale, &mut rng)).collect();
        let mean = draws.iter().sum::<i64>() as f64 / n as f64;
        let var = draws.iter().map(|&d| (d as f64 - mean).powi(2)).sum::<f64>() / n as f64;
        let a = (-1.0f64 / scale).exp();
        let expected_var = 2.0 * a / (1.0 - a).powi(2);
        assert!(mean.abs() < 0.05, "{mean}");
        assert!((var / expected_var - 1.0).abs() < 0.03, "{var} vs {expected_var}");
    }

    #[test]
    fn calibration_hits_target() {
        let g = grid(4, 4);
        let s = mixed(&g);
        let spec = NoiseSpec::new(1.0, 5);
        let scale = calibrate_scale(&g, &s, &spec, 0.01, 8, Execution::Sequential).unwrap();
        let reps = perturb_replicates(&g, &s, &NoiseSpec { scale, ..spec }, 8, Execution::Sequential)
            .unwrap();
        let err: f64 =
            reps.iter().map(|r| mean_relative_error(&s, r).unwrap()).sum::<f64>() / 8.0;
        assert!((err - 0.01).abs() < 0.002, "{err} at scale {scale}");
    }

    #[test]
    fn error_summary_constructed_halves() {
        let g = grid(2, 2);
        let mut nodes: Vec<_> = g.nodes().to_vec();
        for (i, n) in nodes.iter_mut().enumerate() {
            n.turnout = if i < 2 { 0.3 } else { 0.8 };
        }
        let g = RegionGraph::new(nodes, g.edges().to_vec()).unwrap();
        let truth = PopulationScenario::from_race_counts("t", vec![RaceCounts([100, 0, 0, 0, 0]); 4]);
        let noisy = PopulationScenario::from_race_counts(
            "n",
            vec![
                RaceCounts([95, 0, 0, 0, 0]),
                RaceCounts([95, 0, 0, 0, 0]),
                RaceCounts([105, 0, 0, 0, 0]),
                RaceCounts([105, 0, 0, 0, 0]),
            ],
        );
        let bins = error_summary(&g, &truth, &noisy, Covariate::Turnout, 4).unwrap();
        assert_eq!(bins[0].mean_error, Some(-5.0));
        assert_eq!(bins[3].mean_error, Some(5.0));
        assert_eq!(bins[1].count, 0);
        assert_eq!(bins[1].mean_error, None);
        assert_eq!(bins[0].sd_error, Some(0.0));
        let same = error_summary(&g, &truth, &truth, Covariate::Turnout, 2).unwrap();
        assert!(same.iter().all(|b| b.mean_error == Some(0.0)));
        assert!(error_summary(&g, &truth, &noisy, Covariate::Turnout, 1).is_err());
        let csv = error_summary_csv(&bins);
        assert!(csv.starts_with("bin_low,bin_high,count,mean_error,sd_error\n0.3,"));
        assert!(csv.contains(",0,NA,NA\n"));
    }
}

//! Synthetic geographies, name tables, and voter files.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bisg::{NameTable, NameTables, VoterRecord};
use crate::error::{Error, Result};
use crate::graph::{PopulationScenario, PrecinctAttributes, Race, RaceCounts, RegionGraph};
use crate::io::Region;
use crate::rng::stream_rng;

const TAG_GRID: u64 = 0x4752_4944;
const TAG_NAMES: u64 = 0x4e41_4d45;
const TAG_VOTERS: u64 = 0x564f_5445;

/// Spatial pattern of the minority (Black) population share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Same expected share everywhere.
    Uniform,
    /// A minority neighborhood on the west side, a transition band of mixed
    /// precincts, and a White east side.
    Segregated,
    /// Alternating minority and White 2x2 blocks.
    Checkerboard,
}

impl Layout {
    pub fn parse(s: &str) -> Option<Layout> {
        match s {
            "uniform" => Some(Layout::Uniform),
            "segregated" => Some(Layout::Segregated),
            "checkerboard" => Some(Layout::Checkerboard),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Counties are square blocks of this many precincts per side.
    pub county_block: usize,
    pub layout: Layout,
    /// Inclusive range of precinct populations.
    pub pop_min: u64,
    pub pop_max: u64,
    /// Fraction of columns (from the west) in the minority neighborhood,
    /// for [`Layout::Segregated`].
    pub minority_fraction: f64,
    /// Width in columns of the mixed band centered on that edge.
    pub band_columns: f64,
    pub seed: u64,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, layout: Layout, seed: u64) -> Self {
        GridSpec {
            rows,
            cols,
            county_block: 5,
            layout,
            pop_min: 800,
            pop_max: 1200,
            minority_fraction: 0.3,
            band_columns: 2.0,
            seed,
        }
    }
}

fn minority_share(spec: &GridSpec, r: usize, c: usize) -> f64 {
    match spec.layout {
        Layout::Uniform => 0.25,
        Layout::Checkerboard => {
            if (r / 2 + c / 2).is_multiple_of(2) {
                0.8
            } else {
                0.1
            }
        }
        Layout::Segregated => {
            let edge = spec.minority_fraction * spec.cols as f64;
            let x = c as f64 + 0.5;
            let half = spec.band_columns / 2.0;
            if x < edge - half {
                0.85
            } else if x < edge + half {
                0.5
            } else {
                0.05
            }
        }
    }
}

/// Row-major grid with ids `p{row}-{col}`, counties `k{i}-{j}`, one
/// scenario `census` equal to the node attributes.
pub fn grid_region(spec: &GridSpec) -> Result<Region> {
    if spec.rows == 0 || spec.cols == 0 || spec.county_block == 0 {
        return Err(Error::InvalidConfig("grid dimensions must be positive".into()));
    }
    if spec.pop_min > spec.pop_max {
        return Err(Error::InvalidConfig("pop_min exceeds pop_max".into()));
    }
    let mut rng = stream_rng(spec.seed, &[TAG_GRID]);
    let mut nodes = Vec::with_capacity(spec.rows * spec.cols);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let pop = rng.random_range(spec.pop_min..=spec.pop_max);
            let jitter: f64 = rng.random_range(-0.03..0.03);
            let black_share = (minority_share(spec, r, c) + jitter).clamp(0.0, 1.0);
            let black = (black_share * pop as f64).round() as u64;
            let rest = pop - black;
            let hispanic = rest * 6 / 100;
            let asian = rest * 3 / 100;
            let other = rest * 2 / 100;
            let white = rest - hispanic - asian - other;
            let turnout: f64 = rng.random_range(0.35..0.75);
            let voters = (turnout * pop as f64).round() as u64;
            let dem_share = (0.25 + 0.6 * black_share + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0);
            let votes_dem = (dem_share * voters as f64).round() as u64;
            nodes.push(PrecinctAttributes {
                id: format!("p{r}-{c}"),
                county: format!("k{}-{}", r / spec.county_block, c / spec.county_block),
                race: RaceCounts([white, black, hispanic, asian, other]),
                votes_dem,
                votes_rep: voters - votes_dem,
                turnout,
            });
        }
    }
    let mut edges = Vec::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let i = r * spec.cols + c;
            if c + 1 < spec.cols {
                edges.push((i, i + 1));
            }
            if r + 1 < spec.rows {
                edges.push((i, i + spec.cols));
            }
        }
    }
    let graph = RegionGraph::new(nodes, edges)?;
    let census = PopulationScenario::from_attributes(&graph, "census");
    Ok(Region {
        graph,
        scenarios: vec![census],
    })
}

/// Synthetic name tables. Each table has `per_race` names per home race;
/// a name is five times as likely under its home race as under any other,
/// with random variation, and every race's column sums to one.
pub fn synthetic_name_tables(per_race: usize, seed: u64) -> NameTables {
    let mut rng = stream_rng(seed, &[TAG_NAMES]);
    let mut make = |prefix: &str| {
        let n = per_race * 5;
        let raw: Vec<[f64; 5]> = (0..n)
            .map(|k| {
                let home = k % 5;
                std::array::from_fn(|r| {
                    let base = if r == home { 5.0 } else { 1.0 };
                    base * rng.random_range(0.5..1.5)
                })
            })
            .collect();
        let col_sums: [f64; 5] = std::array::from_fn(|r| raw.iter().map(|v| v[r]).sum());
        let mut table = NameTable::new();
        for (k, v) in raw.iter().enumerate() {
            let p = std::array::from_fn(|r| v[r] / col_sums[r]);
            table
                .insert(&format!("{prefix}{k:03}"), p)
                .expect("likelihoods are positive");
        }
        table
    };
    NameTables {
        surname: make("SUR"),
        first: make("FIR"),
        middle: make("MID"),
    }
}

/// Draws `per_precinct` voters in every precinct with positive population:
/// true race from the scenario's race shares, each name from its table's
/// `P(name | race)`. About a quarter of voters have no middle name.
pub fn synthetic_voters(
    graph: &RegionGraph,
    scenario: &PopulationScenario,
    tables: &NameTables,
    per_precinct: usize,
    seed: u64,
) -> Result<Vec<VoterRecord>> {
    scenario.check_covers(graph)?;
    let sampler = |t: &NameTable| -> Result<(Vec<String>, Vec<WeightedIndex<f64>>)> {
        let entries = t.sorted();
        let names = entries.iter().map(|e| e.0.to_string()).collect();
        let dists = (0..5)
            .map(|r| {
                WeightedIndex::new(entries.iter().map(|e| e.1[r]))
                    .map_err(|e| Error::InvalidConfig(format!("name table unusable: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((names, dists))
    };
    let (surnames, sur_d) = sampler(&tables.surname)?;
    let (firsts, first_d) = sampler(&tables.first)?;
    let (middles, mid_d) = sampler(&tables.middle)?;
    let mut out = Vec::new();
    for (i, node) in graph.nodes().iter().enumerate() {
        let counts = &scenario.race[i];
        if counts.total() == 0 {
            continue;
        }
        let race_d = WeightedIndex::new(counts.0).expect("positive total");
        let mut rng = stream_rng(seed, &[TAG_VOTERS, i as u64]);
        for k in 0..per_precinct {
            let r = race_d.sample(&mut rng);
            let middle = if rng.random_bool(0.75) {
                Some(middles[mid_d[r].sample(&mut rng)].clone())
            } else {
                None
            };
            out.push(VoterRecord {
                voter_id: format!("{}-{k}", node.id),
                surname: surnames[sur_d[r].sample(&mut rng)].clone(),
                first: Some(firsts[first_d[r].sample(&mut rng)].clone()),
                middle,
                geography_id: node.id.clone(),
                true_race: Race::from_index(r),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::hhi;

    #[test]
    fn grid_is_valid_and_deterministic() {
        let spec = GridSpec::new(6, 8, Layout::Segregated, 3);
        let a = grid_region(&spec).unwrap();
        let b = grid_region(&spec).unwrap();
        assert_eq!(a.graph.nodes(), b.graph.nodes());
        assert_eq!(a.graph.len(), 48);
        assert_eq!(a.graph.edges().len(), 6 * 7 + 5 * 8);
        a.scenarios[0].validate(&a.graph).unwrap();
        for n in a.graph.nodes() {
            assert!((800..=1200).contains(&n.race.total()));
        }
        // West side mostly Black, east side mostly White.
        assert_eq!(a.graph.node(0).race.plurality(), Race::Black);
        assert_eq!(a.graph.node(7).race.plurality(), Race::White);
    }

    #[test]
    fn segregated_layout_has_mixed_band() {
        let a = grid_region(&GridSpec::new(4, 10, Layout::Segregated, 1)).unwrap();
        let h: Vec<f64> = (0..10).map(|c| hhi(&a.graph.node(c).race).unwrap()).collect();
        assert!(h[0] > 70.0 && h[9] > 70.0);
        assert!(h[3] < 60.0, "{h:?}");
    }

    #[test]
    fn name_tables_are_column_stochastic() {
        let t = synthetic_name_tables(4, 2);
        assert_eq!(t.surname.len(), 20);
        for r in 0..5 {
            let s: f64 = t.first.sorted().iter().map(|e| e.1[r]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn voters_follow_the_scenario() {
        let region = grid_region(&GridSpec::new(2, 2, Layout::Uniform, 4)).unwrap();
        let t = synthetic_name_tables(3, 1);
        let v = synthetic_voters(&region.graph, &region.scenarios[0], &t, 50, 9).unwrap();
        assert_eq!(v.len(), 200);
        assert!(v.iter().all(|r| r.true_race.is_some() && t.surname.get(&r.surname).is_some()));
        let v2 = synthetic_voters(&region.graph, &region.scenarios[0], &t, 50, 9).unwrap();
        assert_eq!(v, v2);
    }
}

//! Shared fixtures and independent oracles for the integration suites.
//!
//! Nothing here calls into the samplers: plan enumeration uses restricted
//! growth strings and flood fill, tree counts use Kirchhoff's theorem.

#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use redistrict_core::graph::{Plan, PopulationScenario, PrecinctAttributes, RaceCounts, RegionGraph};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn attrs(id: String, county: String) -> PrecinctAttributes {
    PrecinctAttributes {
        id,
        county,
        race: RaceCounts([1, 0, 0, 0, 0]),
        votes_dem: 1,
        votes_rep: 1,
        turnout: 0.5,
    }
}

pub fn grid(rows: usize, cols: usize) -> RegionGraph {
    let nodes = (0..rows * cols)
        .map(|i| attrs(format!("r{}c{}", i / cols, i % cols), "c".into()))
        .collect();
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((i, i + 1));
            }
            if r + 1 < rows {
                edges.push((i, i + cols));
            }
        }
    }
    RegionGraph::new(nodes, edges).unwrap()
}

pub fn cycle(n: usize) -> RegionGraph {
    let nodes = (0..n).map(|i| attrs(format!("v{i}"), "c".into())).collect();
    let edges = (0..n).map(|i| (i, (i + 1) % n)).collect();
    RegionGraph::new(nodes, edges).unwrap()
}

pub fn unit_scenario(g: &RegionGraph) -> PopulationScenario {
    PopulationScenario::from_race_counts("unit", vec![RaceCounts([1, 0, 0, 0, 0]); g.len()])
}

fn flood_connected(g: &RegionGraph, members: &[usize]) -> bool {
    if members.is_empty() {
        return false;
    }
    let mut inside = vec![false; g.len()];
    for &m in members {
        inside[m] = true;
    }
    let mut seen = vec![false; g.len()];
    let mut q = VecDeque::from([members[0]]);
    seen[members[0]] = true;
    let mut count = 1;
    while let Some(u) = q.pop_front() {
        for &v in g.neighbors(u) {
            if inside[v] && !seen[v] {
                seen[v] = true;
                count += 1;
                q.push_back(v);
            }
        }
    }
    count == members.len()
}

/// Independent contiguity oracle: flood fill per district label.
pub fn oracle_contiguity(g: &RegionGraph, labels: &[u32], n_d: u32) -> Vec<bool> {
    (1..=n_d)
        .map(|d| {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == d).collect();
            flood_connected(g, &members)
        })
        .collect()
}

/// Spanning-tree count of the subgraph induced by `members`
/// (determinant of the reduced Laplacian).
pub fn tree_count(g: &RegionGraph, members: &[usize]) -> f64 {
    let n = members.len();
    if n <= 1 {
        return 1.0;
    }
    let pos: BTreeMap<usize, usize> = members.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut lap = vec![vec![0.0f64; n]; n];
    for (i, &v) in members.iter().enumerate() {
        for &w in g.neighbors(v) {
            if let Some(&j) = pos.get(&w) {
                lap[i][j] -= 1.0;
                lap[i][i] += 1.0;
            }
        }
    }
    // Drop the last row and column, then Gaussian elimination.
    let m = n - 1;
    let mut a: Vec<Vec<f64>> = lap.into_iter().take(m).map(|r| r[..m].to_vec()).collect();
    let mut det = 1.0;
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        if a[piv][col].abs() < 1e-12 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            for c in col..m {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    det.round()
}

/// Every valid plan (contiguous, within tolerance) in canonical labeling,
/// with its spanning-forest weight Π τ(D_k).
pub fn enumerate_plans(
    g: &RegionGraph,
    pops: &[u64],
    n_d: u32,
    tolerance: f64,
) -> Vec<(Vec<u32>, f64)> {
    let n = g.len();
    let total: u64 = pops.iter().sum();
    let target = total as f64 / n_d as f64;
    let mut out = Vec::new();
    let mut labels = vec![0u32; n];
    fn rec(
        i: usize,
        max_used: u32,
        labels: &mut Vec<u32>,
        n_d: u32,
        out: &mut Vec<Vec<u32>>,
    ) {
        if i == labels.len() {
            if max_used == n_d {
                out.push(labels.clone());
            }
            return;
        }
        let remaining = (labels.len() - i) as u32;
        if max_used + remaining < n_d {
            return;
        }
        for d in 1..=(max_used + 1).min(n_d) {
            labels[i] = d;
            rec(i + 1, max_used.max(d), labels, n_d, out);
        }
    }
    let mut all = Vec::new();
    rec(0, 0, &mut labels, n_d, &mut all);
    for labels in all {
        if !oracle_contiguity(g, &labels, n_d).iter().all(|&c| c) {
            continue;
        }
        let mut dpop = vec![0u64; n_d as usize];
        for (i, &d) in labels.iter().enumerate() {
            dpop[(d - 1) as usize] += pops[i];
        }
        if dpop
            .iter()
            .any(|&p| (p as f64 - target).abs() / target > tolerance)
        {
            continue;
        }
        let weight: f64 = (1..=n_d)
            .map(|d| {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == d).collect();
                tree_count(g, &members)
            })
            .product();
        out.push((labels, weight));
    }
    out
}

/// Canonical relabeling by first appearance, computed independently of the
/// library's canonicalizer.
pub fn canonical(labels: &[u32]) -> Vec<u32> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&d| {
            let next = map.len() as u32 + 1;
            *map.entry(d).or_insert(next)
        })
        .collect()
}

/// Pearson chi-square p-value of observed counts against expected
/// probabilities.
pub fn chi_square_p(observed: &[f64], expected_prob: &[f64]) -> f64 {
    let n: f64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected_prob)
        .map(|(&o, &p)| {
            let e = n * p;
            (o - e) * (o - e) / e
        })
        .sum();
    let dof = (observed.len() - 1) as f64;
    if dof == 0.0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// Goodness of fit of a weighted ensemble to enumerated plan weights.
/// Effective counts are `weight × n_samples`.
pub fn ensemble_fit_p(
    plans: &[Plan],
    weights: &[f64],
    enumerated: &[(Vec<u32>, f64)],
    n_samples: f64,
) -> f64 {
    let z: f64 = enumerated.iter().map(|(_, w)| w).sum();
    let index: BTreeMap<&Vec<u32>, usize> =
        enumerated.iter().enumerate().map(|(i, (l, _))| (l, i)).collect();
    let mut obs = vec![0.0; enumerated.len()];
    for (p, &w) in plans.iter().zip(weights) {
        let c = canonical(p.assignment());
        let i = *index.get(&c).unwrap_or_else(|| panic!("sampled plan {c:?} not enumerated"));
        obs[i] += w * n_samples;
    }
    let probs: Vec<f64> = enumerated.iter().map(|(_, w)| w / z).collect();
    chi_square_p(&obs, &probs)
}

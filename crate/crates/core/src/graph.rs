//! Precinct graphs, population scenarios, and districting plans.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five race/ethnicity categories carried by every count table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Race {
    White,
    Black,
    Hispanic,
    Asian,
    Other,
}

impl Race {
    /// All categories in their fixed order. This order is also the
    /// classification tie-break order.
    pub const ALL: [Race; 5] = [
        Race::White,
        Race::Black,
        Race::Hispanic,
        Race::Asian,
        Race::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Race> {
        Race::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Race::White => "white",
            Race::Black => "black",
            Race::Hispanic => "hispanic",
            Race::Asian => "asian",
            Race::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Race> {
        Race::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Person counts for each [`Race`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct RaceCounts(pub [u64; 5]);

impl RaceCounts {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn shares(&self) -> Option<[f64; 5]> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        Some(self.0.map(|c| c as f64 / total as f64))
    }

    /// The most common race, ties going to the earlier category.
    pub fn plurality(&self) -> Race {
        let mut best = 0;
        for i in 1..5 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Race::ALL[best]
    }
}

impl Index<Race> for RaceCounts {
    type Output = u64;
    fn index(&self, r: Race) -> &u64 {
        &self.0[r.index()]
    }
}

impl IndexMut<Race> for RaceCounts {
    fn index_mut(&mut self, r: Race) -> &mut u64 {
        &mut self.0[r.index()]
    }
}

impl std::ops::AddAssign for RaceCounts {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..5 {
            self.0[i] += rhs.0[i];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecinctAttributes {
    pub id: String,
    pub county: String,
    pub race: RaceCounts,
    pub votes_dem: u64,
    pub votes_rep: u64,
    pub turnout: f64,
}

impl PrecinctAttributes {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.turnout) {
            return Err(Error::InvalidAttribute {
                precinct: self.id.clone(),
                reason: format!("turnout {} outside [0, 1]", self.turnout),
            });
        }
        Ok(())
    }

    /// Two-party Democratic share, if any two-party votes were cast.
    pub fn dem_share(&self) -> Option<f64> {
        let two_party = self.votes_dem + self.votes_rep;
        (two_party > 0).then(|| self.votes_dem as f64 / two_party as f64)
    }
}

/// A connected precinct adjacency graph.
///
/// Nodes are addressed by their position in [`RegionGraph::nodes`]; the
/// string ids are kept for I/O. Edges are stored once each as `(lo, hi)`.
#[derive(Debug, Clone)]
pub struct RegionGraph {
    nodes: Vec<PrecinctAttributes>,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl RegionGraph {
    /// Builds and validates a graph from node attributes and index pairs.
    pub fn new(nodes: Vec<PrecinctAttributes>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            node.validate()?;
            if index.insert(node.id.clone(), i).is_some() {
                return Err(Error::DuplicatePrecinct(node.id.clone()));
            }
        }
        if nodes.is_empty() {
            return Err(Error::Parse("region has no precincts".into()));
        }

        let mut seen = HashSet::with_capacity(edges.len());
        let mut adj = vec![Vec::new(); nodes.len()];
        let mut stored = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            let n = nodes.len();
            if a >= n || b >= n {
                return Err(Error::UnknownPrecinct(format!("#{}", a.max(b))));
            }
            if a == b {
                return Err(Error::SelfLoop(nodes[a].id.clone()));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge(
                    nodes[key.0].id.clone(),
                    nodes[key.1].id.clone(),
                ));
            }
            adj[a].push(b);
            adj[b].push(a);
            stored.push(key);
        }
        for list in &mut adj {
            list.sort_unstable();
        }

        let graph = RegionGraph {
            nodes,
            edges: stored,
            adj,
            index,
        };
        let reach = graph.reachable_from(0, |_| true);
        if let Some(missing) = reach.iter().position(|&r| !r) {
            return Err(Error::Disconnected(
                graph.nodes[missing].id.clone(),
                graph.nodes[0].id.clone(),
            ));
        }
        Ok(graph)
    }

    /// Builds a graph from edges given as precinct-id pairs.
    pub fn from_id_edges(nodes: Vec<PrecinctAttributes>, edges: &[(String, String)]) -> Result<Self> {
        let lookup: HashMap<&str, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        let resolve = |id: &String| {
            lookup
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownPrecinct(id.clone()))
        };
        let mut idx = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b {
                return Err(Error::SelfLoop(a.clone()));
            }
            idx.push((resolve(a)?, resolve(b)?));
        }
        RegionGraph::new(nodes, idx)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[PrecinctAttributes] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &PrecinctAttributes {
        &self.nodes[i]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require_index(&self, id: &str) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::UnknownPrecinct(id.to_string()))
    }

    /// Flood fill from `start` over nodes accepted by `keep`.
    pub(crate) fn reachable_from(&self, start: usize, keep: impl Fn(usize) -> bool) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if !seen[v] && keep(v) {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Whether the subgraph induced by `subset` is connected.
    /// The empty set is not.
    pub fn is_connected_subset(&self, subset: &[usize]) -> bool {
        let Some(&start) = subset.first() else {
            return false;
        };
        let mut member = vec![false; self.len()];
        for &v in subset {
            member[v] = true;
        }
        let seen = self.reachable_from(start, |v| member[v]);
        subset.iter().all(|&v| seen[v])
    }
}

/// A named per-precinct population table, aligned with a graph's node order.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationScenario {
    pub id: String,
    pub population: Vec<u64>,
    pub race: Vec<RaceCounts>,
}

impl PopulationScenario {
    /// Builds a scenario whose race counts are the graph's own attributes.
    pub fn from_attributes(graph: &RegionGraph, id: impl Into<String>) -> Self {
        let race: Vec<RaceCounts> = graph.nodes().iter().map(|n| n.race).collect();
        PopulationScenario {
            id: id.into(),
            population: race.iter().map(RaceCounts::total).collect(),
            race,
        }
    }

    /// Builds a scenario from race counts, deriving population by summation.
    pub fn from_race_counts(id: impl Into<String>, race: Vec<RaceCounts>) -> Self {
        PopulationScenario {
            id: id.into(),
            population: race.iter().map(RaceCounts::total).collect(),
            race,
        }
    }

    pub fn total(&self) -> u64 {
        self.population.iter().sum()
    }

    pub fn validate(&self, graph: &RegionGraph) -> Result<()> {
        let mismatch = |precinct: String, reason: String| Error::ScenarioMismatch {
            scenario: self.id.clone(),
            precinct,
            reason,
        };
        if self.population.len() != graph.len() || self.race.len() != graph.len() {
            return Err(mismatch(
                String::new(),
                format!(
                    "covers {} precincts, graph has {}",
                    self.population.len().min(self.race.len()),
                    graph.len()
                ),
            ));
        }
        for (i, (pop, race)) in self.population.iter().zip(&self.race).enumerate() {
            if race.total() != *pop {
                return Err(mismatch(
                    graph.node(i).id.clone(),
                    format!("race counts sum to {} but population is {}", race.total(), pop),
                ));
            }
        }
        Ok(())
    }

    /// Errors unless this scenario has one entry per graph node.
    pub fn check_covers(&self, graph: &RegionGraph) -> Result<()> {
        if self.population.len() != graph.len() {
            return Err(Error::ScenarioMismatch {
                scenario: self.id.clone(),
                precinct: String::new(),
                reason: format!(
                    "covers {} precincts, graph has {}",
                    self.population.len(),
                    graph.len()
                ),
            });
        }
        Ok(())
    }
}

/// A districting plan: a 1-based district label for every node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Plan {
    n_districts: u32,
    assignment: Vec<u32>,
}

impl Plan {
    /// Builds a plan, checking labels lie in `1..=n_districts` and every
    /// district is nonempty. Contiguity is checked separately.
    pub fn new(n_districts: u32, assignment: Vec<u32>) -> Result<Self> {
        if n_districts == 0 {
            return Err(Error::InvalidDistrictCount(0));
        }
        let mut used = vec![false; n_districts as usize];
        for (i, &d) in assignment.iter().enumerate() {
            if d == 0 || d > n_districts {
                return Err(Error::InvalidPlan(format!(
                    "node #{i} has district {d}, expected 1..={n_districts}"
                )));
            }
            used[(d - 1) as usize] = true;
        }
        if let Some(empty) = used.iter().position(|&u| !u) {
            return Err(Error::InvalidPlan(format!("district {} is empty", empty + 1)));
        }
        Ok(Plan {
            n_districts,
            assignment,
        })
    }

    /// Builds a plan from `(precinct_id, district)` pairs; every precinct
    /// of the graph must appear exactly once.
    pub fn from_pairs(graph: &RegionGraph, pairs: &[(String, u32)]) -> Result<Self> {
        let mut assignment = vec![0u32; graph.len()];
        for (id, d) in pairs {
            let i = graph.require_index(id)?;
            if assignment[i] != 0 {
                return Err(Error::InvalidPlan(format!("precinct {id:?} assigned twice")));
            }
            if *d == 0 {
                return Err(Error::InvalidPlan(format!("precinct {id:?} has district 0")));
            }
            assignment[i] = *d;
        }
        if let Some(i) = assignment.iter().position(|&d| d == 0) {
            return Err(Error::InvalidPlan(format!(
                "precinct {:?} is unassigned",
                graph.node(i).id
            )));
        }
        let n_d = assignment.iter().copied().max().unwrap_or(0);
        Plan::new(n_d, assignment)
    }

    pub fn n_districts(&self) -> u32 {
        self.n_districts
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// District label (1-based) of node `i`.
    pub fn district_of(&self, i: usize) -> u32 {
        self.assignment[i]
    }

    /// Node lists per district, indexed by `label - 1`.
    pub fn districts(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_districts as usize];
        for (i, &d) in self.assignment.iter().enumerate() {
            out[(d - 1) as usize].push(i);
        }
        out
    }

    pub(crate) fn check_covers(&self, graph: &RegionGraph) -> Result<()> {
        if self.assignment.len() != graph.len() {
            return Err(Error::InvalidPlan(format!(
                "plan covers {} precincts, graph has {}",
                self.assignment.len(),
                graph.len()
            )));
        }
        Ok(())
    }
}

/// Per-district contiguity: entry `k - 1` is true iff district `k` induces a
/// connected subgraph.
pub fn contiguity_check(graph: &RegionGraph, plan: &Plan) -> Result<Vec<bool>> {
    plan.check_covers(graph)?;
    Ok(plan
        .districts()
        .iter()
        .map(|nodes| graph.is_connected_subset(nodes))
        .collect())
}

/// Errors unless every district of `plan` is contiguous.
pub fn validate_plan(graph: &RegionGraph, plan: &Plan) -> Result<()> {
    let ok = contiguity_check(graph, plan)?;
    if let Some(k) = ok.iter().position(|&c| !c) {
        return Err(Error::InvalidPlan(format!("district {} is not contiguous", k + 1)));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_graphs {
    use super::*;

    pub fn attrs(id: &str) -> PrecinctAttributes {
        PrecinctAttributes {
            id: id.to_string(),
            county: "c".to_string(),
            race: RaceCounts([1, 0, 0, 0, 0]),
            votes_dem: 1,
            votes_rep: 1,
            turnout: 0.5,
        }
    }

    /// Row-major grid with ids `r{row}c{col}`.
    pub fn grid(rows: usize, cols: usize) -> RegionGraph {
        let nodes = (0..rows * cols)
            .map(|i| attrs(&format!("r{}c{}", i / cols, i % cols)))
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
}

#[cfg(test)]
mod tests {
    use super::test_graphs::*;
    use super::*;

    #[test]
    fn rejects_self_loop_and_duplicates() {
        let nodes = vec![attrs("a"), attrs("b")];
        let err = RegionGraph::from_id_edges(nodes.clone(), &[("a".into(), "a".into())]).unwrap_err();
        assert!(matches!(err, Error::SelfLoop(ref id) if id == "a"));
        let err = RegionGraph::from_id_edges(
            nodes,
            &[("a".into(), "b".into()), ("b".into(), "a".into())],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateEdge(..)));
    }

    #[test]
    fn rejects_disconnected_and_bad_turnout() {
        let nodes = vec![attrs("a"), attrs("b"), attrs("c")];
        let err = RegionGraph::from_id_edges(nodes, &[("a".into(), "b".into())]).unwrap_err();
        assert!(matches!(err, Error::Disconnected(ref id, _) if id == "c"));

        let mut bad = attrs("x");
        bad.turnout = 1.5;
        assert!(matches!(
            RegionGraph::new(vec![bad], vec![]),
            Err(Error::InvalidAttribute { .. })
        ));
    }

    #[test]
    fn path_contiguity() {
        let g = grid(1, 4);
        let plan = Plan::new(2, vec![1, 1, 2, 2]).unwrap();
        assert_eq!(contiguity_check(&g, &plan).unwrap(), vec![true, true]);
        let plan = Plan::new(2, vec![1, 2, 1, 2]).unwrap();
        assert_eq!(contiguity_check(&g, &plan).unwrap(), vec![false, false]);
    }

    #[test]
    fn grid_corners_not_contiguous() {
        let g = grid(3, 3);
        let mut a = vec![2u32; 9];
        for corner in [0, 2, 6, 8] {
            a[corner] = 1;
        }
        let plan = Plan::new(2, a).unwrap();
        assert_eq!(contiguity_check(&g, &plan).unwrap(), vec![false, true]);
    }

    #[test]
    fn plan_errors() {
        let g = grid(1, 3);
        assert!(Plan::new(2, vec![1, 1, 1]).is_err());
        assert!(Plan::new(2, vec![1, 3, 2]).is_err());
        let err = Plan::from_pairs(&g, &[("zz".into(), 1)]).unwrap_err();
        assert!(matches!(err, Error::UnknownPrecinct(ref id) if id == "zz"));
        let short = Plan::new(1, vec![1, 1]).unwrap();
        assert!(contiguity_check(&g, &short).is_err());
    }

    #[test]
    fn scenario_race_sum_mismatch() {
        let g = grid(1, 2);
        let mut s = PopulationScenario::from_attributes(&g, "census");
        s.validate(&g).unwrap();
        s.population[1] = 2;
        assert!(matches!(
            s.validate(&g),
            Err(Error::ScenarioMismatch { ref precinct, .. }) if precinct == "r0c1"
        ));
    }
}

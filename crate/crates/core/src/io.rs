//! File formats: region JSON, plan and ensemble CSV, provenance sidecars.
//!
//! Writers are deterministic: the same value always serializes to the same
//! bytes (JSON maps are emitted with sorted keys).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::{PlanEnsemble, Provenance};
use crate::error::{Error, Result};
use crate::graph::{Plan, PopulationScenario, PrecinctAttributes, RaceCounts, RegionGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RaceJson {
    white: u64,
    black: u64,
    hispanic: u64,
    asian: u64,
    other: u64,
}

impl From<RaceJson> for RaceCounts {
    fn from(r: RaceJson) -> Self {
        RaceCounts([r.white, r.black, r.hispanic, r.asian, r.other])
    }
}

impl From<RaceCounts> for RaceJson {
    fn from(r: RaceCounts) -> Self {
        let [white, black, hispanic, asian, other] = r.0;
        RaceJson {
            white,
            black,
            hispanic,
            asian,
            other,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeJson {
    id: String,
    county: String,
    race: RaceJson,
    votes_dem: u64,
    votes_rep: u64,
    turnout: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioJson {
    id: String,
    population: BTreeMap<String, u64>,
    race: BTreeMap<String, RaceJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegionJson {
    nodes: Vec<NodeJson>,
    edges: Vec<(String, String)>,
    #[serde(default)]
    scenarios: Vec<ScenarioJson>,
}

/// A precinct graph together with the population scenarios stored with it.
#[derive(Debug, Clone)]
pub struct Region {
    pub graph: RegionGraph,
    pub scenarios: Vec<PopulationScenario>,
}

/// Id given to the scenario built from node attributes when a region file
/// carries no scenarios.
pub const ATTRIBUTE_SCENARIO: &str = "attributes";

impl Region {
    /// Looks up a scenario by id. With `None`, returns the first stored
    /// scenario, or one built from the node attributes if none are stored.
    pub fn scenario(&self, id: Option<&str>) -> Result<PopulationScenario> {
        match id {
            Some(id) => self
                .scenarios
                .iter()
                .find(|s| s.id == id)
                .cloned()
                .or_else(|| {
                    (id == ATTRIBUTE_SCENARIO)
                        .then(|| PopulationScenario::from_attributes(&self.graph, id))
                })
                .ok_or_else(|| Error::InvalidConfig(format!("no scenario named {id:?}"))),
            None => Ok(self
                .scenarios
                .first()
                .cloned()
                .unwrap_or_else(|| PopulationScenario::from_attributes(&self.graph, ATTRIBUTE_SCENARIO))),
        }
    }

    /// Appends a scenario after validating it; ids must be unique.
    pub fn add_scenario(&mut self, scenario: PopulationScenario) -> Result<()> {
        if self.scenarios.iter().any(|s| s.id == scenario.id) {
            return Err(Error::InvalidConfig(format!(
                "scenario id {:?} already exists",
                scenario.id
            )));
        }
        scenario.validate(&self.graph)?;
        self.scenarios.push(scenario);
        Ok(())
    }
}

fn scenario_from_json(graph: &RegionGraph, s: ScenarioJson) -> Result<PopulationScenario> {
    let mismatch = |precinct: &str, reason: &str| Error::ScenarioMismatch {
        scenario: s.id.clone(),
        precinct: precinct.to_string(),
        reason: reason.to_string(),
    };
    for id in s.population.keys().chain(s.race.keys()) {
        if graph.index_of(id).is_none() {
            return Err(mismatch(id, "not a precinct of the graph"));
        }
    }
    let mut population = Vec::with_capacity(graph.len());
    let mut race = Vec::with_capacity(graph.len());
    for node in graph.nodes() {
        let pop = *s
            .population
            .get(&node.id)
            .ok_or_else(|| mismatch(&node.id, "missing population"))?;
        let counts = *s
            .race
            .get(&node.id)
            .ok_or_else(|| mismatch(&node.id, "missing race counts"))?;
        population.push(pop);
        race.push(counts.into());
    }
    let scenario = PopulationScenario {
        id: s.id.clone(),
        population,
        race,
    };
    scenario.validate(graph)?;
    Ok(scenario)
}

/// Parses and validates a region document.
pub fn parse_region(text: &str) -> Result<Region> {
    let raw: RegionJson = serde_json::from_str(text)?;
    let nodes = raw
        .nodes
        .into_iter()
        .map(|n| PrecinctAttributes {
            id: n.id,
            county: n.county,
            race: n.race.into(),
            votes_dem: n.votes_dem,
            votes_rep: n.votes_rep,
            turnout: n.turnout,
        })
        .collect();
    let graph = RegionGraph::from_id_edges(nodes, &raw.edges)?;
    let mut region = Region {
        graph,
        scenarios: Vec::new(),
    };
    let mut seen = HashSet::new();
    for s in raw.scenarios {
        if !seen.insert(s.id.clone()) {
            return Err(Error::InvalidConfig(format!("duplicate scenario id {:?}", s.id)));
        }
        let scenario = scenario_from_json(&region.graph, s)?;
        region.scenarios.push(scenario);
    }
    Ok(region)
}

/// Serializes a region; node and edge order are preserved.
pub fn region_to_json(region: &Region) -> Result<String> {
    let g = &region.graph;
    let raw = RegionJson {
        nodes: g
            .nodes()
            .iter()
            .map(|n| NodeJson {
                id: n.id.clone(),
                county: n.county.clone(),
                race: n.race.into(),
                votes_dem: n.votes_dem,
                votes_rep: n.votes_rep,
                turnout: n.turnout,
            })
            .collect(),
        edges: g
            .edges()
            .iter()
            .map(|&(a, b)| (g.node(a).id.clone(), g.node(b).id.clone()))
            .collect(),
        scenarios: region
            .scenarios
            .iter()
            .map(|s| ScenarioJson {
                id: s.id.clone(),
                population: g
                    .nodes()
                    .iter()
                    .zip(&s.population)
                    .map(|(n, &p)| (n.id.clone(), p))
                    .collect(),
                race: g
                    .nodes()
                    .iter()
                    .zip(&s.race)
                    .map(|(n, &r)| (n.id.clone(), r.into()))
                    .collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&raw)?;
    text.push('\n');
    Ok(text)
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_region_graph(path: impl AsRef<Path>) -> Result<Region> {
    parse_region(&read_file(path.as_ref())?)
}

pub fn save_region(path: impl AsRef<Path>, region: &Region) -> Result<()> {
    write_file(path.as_ref(), region_to_json(region)?.as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanRow {
    precinct_id: String,
    district: u32,
}

pub fn write_plan_csv<W: Write>(out: W, graph: &RegionGraph, plan: &Plan) -> Result<()> {
    plan.check_covers(graph)?;
    let mut w = csv::Writer::from_writer(out);
    for (node, &d) in graph.nodes().iter().zip(plan.assignment()) {
        w.serialize(PlanRow {
            precinct_id: node.id.clone(),
            district: d,
        })?;
    }
    w.flush().map_err(|e| Error::io("<plan csv>", e))
}

pub fn read_plan_csv<R: Read>(input: R, graph: &RegionGraph) -> Result<Plan> {
    let mut r = csv::Reader::from_reader(input);
    let pairs = r
        .deserialize::<PlanRow>()
        .map(|row| row.map(|p| (p.precinct_id, p.district)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Plan::from_pairs(graph, &pairs)
}

pub fn load_plan(path: impl AsRef<Path>, graph: &RegionGraph) -> Result<Plan> {
    read_plan_csv(read_file(path.as_ref())?.as_bytes(), graph)
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleRow {
    plan_index: usize,
    weight: f64,
    precinct_id: String,
    district: u32,
}

/// Provenance sidecar written next to an ensemble CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSidecar {
    pub n_plans: usize,
    pub n_precincts: usize,
    pub provenance: Provenance,
}

/// `ensemble.csv` → `ensemble.provenance.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("provenance.json")
}

pub fn write_ensemble_csv<W: Write>(out: W, graph: &RegionGraph, ensemble: &PlanEnsemble) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (k, (plan, weight)) in ensemble.iter().enumerate() {
        plan.check_covers(graph)?;
        for (node, &d) in graph.nodes().iter().zip(plan.assignment()) {
            w.serialize(EnsembleRow {
                plan_index: k,
                weight,
                precinct_id: node.id.clone(),
                district: d,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io("<ensemble csv>", e))
}

pub fn read_ensemble_csv<R: Read>(
    input: R,
    graph: &RegionGraph,
    provenance: Provenance,
) -> Result<PlanEnsemble> {
    let mut r = csv::Reader::from_reader(input);
    let mut groups: BTreeMap<usize, (f64, Vec<(String, u32)>)> = BTreeMap::new();
    for row in r.deserialize::<EnsembleRow>() {
        let row = row?;
        let entry = groups.entry(row.plan_index).or_insert((row.weight, Vec::new()));
        if entry.0 != row.weight {
            return Err(Error::Parse(format!(
                "plan {} lists conflicting weights",
                row.plan_index
            )));
        }
        entry.1.push((row.precinct_id, row.district));
    }
    let mut plans = Vec::with_capacity(groups.len());
    let mut weights = Vec::with_capacity(groups.len());
    for (k, (w, pairs)) in groups {
        let plan = Plan::from_pairs(graph, &pairs)?;
        if plan.n_districts() != provenance.n_districts {
            return Err(Error::InvalidPlan(format!(
                "plan {k} has {} districts, provenance says {}",
                plan.n_districts(),
                provenance.n_districts
            )));
        }
        plans.push(plan);
        weights.push(w);
    }
    PlanEnsemble::new(plans, weights, provenance)
}

/// Writes `path` and its provenance sidecar.
pub fn save_ensemble(path: impl AsRef<Path>, graph: &RegionGraph, ensemble: &PlanEnsemble) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_ensemble_csv(&mut buf, graph, ensemble)?;
    write_file(path, &buf)?;
    let sidecar = EnsembleSidecar {
        n_plans: ensemble.len(),
        n_precincts: graph.len(),
        provenance: ensemble.provenance.clone(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    write_file(&sidecar_path(path), text.as_bytes())
}

pub fn load_ensemble(path: impl AsRef<Path>, graph: &RegionGraph) -> Result<PlanEnsemble> {
    let path = path.as_ref();
    let sidecar: EnsembleSidecar = serde_json::from_str(&read_file(&sidecar_path(path))?)?;
    let ensemble = read_ensemble_csv(read_file(path)?.as_bytes(), graph, sidecar.provenance)?;
    if ensemble.len() != sidecar.n_plans {
        return Err(Error::Parse(format!(
            "sidecar lists {} plans, file holds {}",
            sidecar.n_plans,
            ensemble.len()
        )));
    }
    Ok(ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::test_provenance;

    const GRID: &str = r#"{
      "nodes": [
        {"id": "a", "county": "x", "race": {"white": 3, "black": 1, "hispanic": 0, "asian": 0, "other": 0}, "votes_dem": 5, "votes_rep": 4, "turnout": 0.5},
        {"id": "b", "county": "x", "race": {"white": 2, "black": 2, "hispanic": 0, "asian": 0, "other": 0}, "votes_dem": 3, "votes_rep": 6, "turnout": 0.4},
        {"id": "c", "county": "y", "race": {"white": 4, "black": 0, "hispanic": 0, "asian": 0, "other": 0}, "votes_dem": 1, "votes_rep": 1, "turnout": 0.6},
        {"id": "d", "county": "y", "race": {"white": 0, "black": 4, "hispanic": 0, "asian": 0, "other": 0}, "votes_dem": 7, "votes_rep": 2, "turnout": 0.7}
      ],
      "edges": [["a", "b"], ["c", "d"], ["a", "c"], ["b", "d"]],
      "scenarios": [{
        "id": "census",
        "population": {"a": 4, "b": 4, "c": 4, "d": 4},
        "race": {
          "a": {"white": 3, "black": 1, "hispanic": 0, "asian": 0, "other": 0},
          "b": {"white": 2, "black": 2, "hispanic": 0, "asian": 0, "other": 0},
          "c": {"white": 4, "black": 0, "hispanic": 0, "asian": 0, "other": 0},
          "d": {"white": 0, "black": 4, "hispanic": 0, "asian": 0, "other": 0}
        }
      }]
    }"#;

    #[test]
    fn loads_two_by_two_fixture() {
        let r = parse_region(GRID).unwrap();
        assert_eq!(r.graph.len(), 4);
        assert_eq!(r.graph.edges().len(), 4);
        assert_eq!(r.scenarios.len(), 1);
        assert_eq!(r.scenarios[0].population, vec![4, 4, 4, 4]);
    }

    #[test]
    fn self_loop_names_precinct() {
        let text = GRID.replace(r#"["a", "b"]"#, r#"["a", "a"]"#);
        let err = parse_region(&text).unwrap_err();
        assert!(matches!(&err, Error::SelfLoop(id) if id == "a"), "{err}");
    }

    #[test]
    fn race_sum_mismatch_is_reported() {
        let text = GRID.replace(r#""a": 4, "b""#, r#""a": 5, "b""#);
        match parse_region(&text).unwrap_err() {
            Error::ScenarioMismatch { precinct, .. } => assert_eq!(precinct, "a"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn fractional_counts_are_rejected() {
        let text = GRID.replace(r#""a": 4, "b""#, r#""a": 4.5, "b""#);
        assert!(matches!(parse_region(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn unknown_and_missing_scenario_precincts() {
        let text = GRID.replace(r#""d": 4}"#, r#""z": 4}"#);
        assert!(matches!(parse_region(&text), Err(Error::ScenarioMismatch { .. })));
        let text = GRID.replace(r#", "d": 4}"#, "}");
        match parse_region(&text).unwrap_err() {
            Error::ScenarioMismatch { precinct, .. } => assert_eq!(precinct, "d"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let r = parse_region(GRID).unwrap();
        let text = region_to_json(&r).unwrap();
        let back = parse_region(&text).unwrap();
        assert_eq!(back.graph.nodes(), r.graph.nodes());
        assert_eq!(back.graph.edges(), r.graph.edges());
        assert_eq!(back.scenarios, r.scenarios);
        assert_eq!(region_to_json(&back).unwrap(), text);
    }

    #[test]
    fn attribute_scenario_fallback() {
        let mut r = parse_region(GRID).unwrap();
        r.scenarios.clear();
        let s = r.scenario(None).unwrap();
        assert_eq!(s.id, ATTRIBUTE_SCENARIO);
        assert_eq!(s.population, vec![4, 4, 4, 4]);
        assert!(r.scenario(Some("nope")).is_err());
    }

    #[test]
    fn plan_csv_round_trip() {
        let r = parse_region(GRID).unwrap();
        let plan = Plan::new(2, vec![1, 2, 1, 2]).unwrap();
        let mut buf = Vec::new();
        write_plan_csv(&mut buf, &r.graph, &plan).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("precinct_id,district\na,1\n"));
        assert_eq!(read_plan_csv(buf.as_slice(), &r.graph).unwrap(), plan);
        let bad = "precinct_id,district\na,1\nb,2\nc,1\nq,2\n";
        assert!(matches!(
            read_plan_csv(bad.as_bytes(), &r.graph),
            Err(Error::UnknownPrecinct(_))
        ));
    }

    #[test]
    fn ensemble_round_trip_with_sidecar() {
        let r = parse_region(GRID).unwrap();
        let plans = vec![
            Plan::new(2, vec![1, 2, 1, 2]).unwrap(),
            Plan::new(2, vec![1, 1, 2, 2]).unwrap(),
        ];
        let e = PlanEnsemble::new(plans, vec![0.25, 0.75], test_provenance(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ens.csv");
        save_ensemble(&path, &r.graph, &e).unwrap();
        assert!(dir.path().join("ens.provenance.json").exists());
        let back = load_ensemble(&path, &r.graph).unwrap();
        assert_eq!(back.plans(), e.plans());
        assert_eq!(back.weights(), e.weights());
        assert_eq!(back.provenance, e.provenance);
    }
}

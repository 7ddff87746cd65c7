//! Bayesian Improved Surname Geocoding.
//!
//! The race posterior for a voter is proportional to the geographic prior
//! times the likelihood of each available name (surname, first, middle),
//! names being conditionally independent given race. Names missing from
//! their table contribute a factor of one.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{PopulationScenario, Race, RegionGraph};
use crate::par::{self, Execution};

/// Canonical form used for name lookups: trimmed, upper case.
pub fn normalize_name(name: &str) -> String {
    name.trim().to_uppercase()
}

/// `P(name | race)` for one name field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NameTable {
    entries: HashMap<String, [f64; 5]>,
}

impl NameTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, likelihood: [f64; 5]) -> Result<()> {
        if likelihood.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "name {name:?} has a negative or non-finite likelihood"
            )));
        }
        let key = normalize_name(name);
        if key.is_empty() {
            return Err(Error::InvalidConfig("empty name in table".into()));
        }
        self.entries.insert(key, likelihood);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[f64; 5]> {
        self.entries.get(&normalize_name(name))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by name.
    pub fn sorted(&self) -> Vec<(&str, [f64; 5])> {
        let mut v: Vec<(&str, [f64; 5])> = self.entries.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NameTables {
    pub surname: NameTable,
    pub first: NameTable,
    pub middle: NameTable,
}

/// `P(race | geography)` per geography id.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoPrior {
    priors: HashMap<String, [f64; 5]>,
    /// Geographies with no population, given a uniform prior.
    pub uniform_fallback: Vec<String>,
}

impl GeoPrior {
    /// Builds a prior from explicit vectors, each normalized to a simplex.
    pub fn from_vectors<I: IntoIterator<Item = (String, [f64; 5])>>(items: I) -> Result<Self> {
        let mut priors = HashMap::new();
        for (id, v) in items {
            let s: f64 = v.iter().sum();
            if v.iter().any(|p| !p.is_finite() || *p < 0.0) || s <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "prior for {id:?} is not a nonnegative nonzero vector"
                )));
            }
            priors.insert(id, v.map(|p| p / s));
        }
        Ok(GeoPrior {
            priors,
            uniform_fallback: Vec::new(),
        })
    }

    pub fn get(&self, geography: &str) -> Option<&[f64; 5]> {
        self.priors.get(geography)
    }

    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }
}

/// Per-precinct race shares. Precincts with no population receive a
/// uniform prior and are listed in `uniform_fallback`.
pub fn build_geo_prior(graph: &RegionGraph, scenario: &PopulationScenario) -> Result<GeoPrior> {
    scenario.check_covers(graph)?;
    let mut priors = HashMap::with_capacity(graph.len());
    let mut fallback = Vec::new();
    for (node, counts) in graph.nodes().iter().zip(&scenario.race) {
        let shares = match counts.shares() {
            Some(s) => s,
            None => {
                log::warn!("precinct {:?} has no population; using a uniform prior", node.id);
                fallback.push(node.id.clone());
                [0.2; 5]
            }
        };
        priors.insert(node.id.clone(), shares);
    }
    Ok(GeoPrior {
        priors,
        uniform_fallback: fallback,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoterRecord {
    pub voter_id: String,
    pub surname: String,
    pub first: Option<String>,
    pub middle: Option<String>,
    pub geography_id: String,
    pub true_race: Option<Race>,
}

/// A probability vector over races in [`Race::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RacePosterior(pub [f64; 5]);

impl RacePosterior {
    pub fn prob(&self, race: Race) -> f64 {
        self.0[race.index()]
    }
}

/// Posterior race probabilities for one voter.
pub fn posterior_race(
    record: &VoterRecord,
    tables: &NameTables,
    prior: &GeoPrior,
) -> Result<RacePosterior> {
    if record.surname.trim().is_empty() {
        return Err(Error::InvalidConfig(format!(
            "voter {:?} has an empty surname",
            record.voter_id
        )));
    }
    let geo = prior
        .get(&record.geography_id)
        .ok_or_else(|| Error::UnknownPrecinct(record.geography_id.clone()))?;
    let factors = [
        tables.surname.get(&record.surname),
        record.first.as_deref().and_then(|n| tables.first.get(n)),
        record.middle.as_deref().and_then(|n| tables.middle.get(n)),
    ];
    let mut logp = geo.map(f64::ln);
    for lik in factors.into_iter().flatten() {
        for (lp, l) in logp.iter_mut().zip(lik) {
            *lp += l.ln();
        }
    }
    let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::ZeroPosterior {
            voter: record.voter_id.clone(),
            reason: format!(
                "prior for {:?} and name likelihoods share no race with positive mass",
                record.geography_id
            ),
        });
    }
    let w = logp.map(|l| (l - max).exp());
    let total: f64 = w.iter().sum();
    Ok(RacePosterior(w.map(|x| x / total)))
}

/// Scores every record; the output is in input order regardless of
/// execution mode.
pub fn score_voters(
    voters: &[VoterRecord],
    tables: &NameTables,
    prior: &GeoPrior,
    execution: Execution,
) -> Result<Vec<RacePosterior>> {
    par::map_slice(execution, voters, |_, v| posterior_race(v, tables, prior))
        .into_iter()
        .collect()
}

/// Most probable race; ties go to the earlier race in
/// White, Black, Hispanic, Asian, Other order.
pub fn classify(posterior: &RacePosterior) -> Race {
    let mut best = 0;
    for i in 1..5 {
        if posterior.0[i] > posterior.0[best] {
            best = i;
        }
    }
    Race::ALL[best]
}

/// Area under the ROC curve via the Mann-Whitney statistic with average
/// ranks, so tied scores count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidConfig("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels(format!(
            "{n_pos} positive and {n_neg} negative labels; need both"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

pub fn misclassification_rate(predictions: &[Race], truth: &[Race]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch(predictions.len(), truth.len()));
    }
    if truth.is_empty() {
        return Err(Error::InvalidConfig("no records to score".into()));
    }
    let wrong = predictions.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / truth.len() as f64)
}

#[derive(Debug, Serialize, Deserialize)]
struct NameRow {
    name: String,
    p_white: f64,
    p_black: f64,
    p_hispanic: f64,
    p_asian: f64,
    p_other: f64,
}

/// Reads `name,p_white,p_black,p_hispanic,p_asian,p_other`.
pub fn read_name_table<R: Read>(input: R) -> Result<NameTable> {
    let mut table = NameTable::new();
    for row in csv::Reader::from_reader(input).deserialize::<NameRow>() {
        let r = row?;
        table.insert(&r.name, [r.p_white, r.p_black, r.p_hispanic, r.p_asian, r.p_other])?;
    }
    Ok(table)
}

pub fn write_name_table<W: Write>(out: W, table: &NameTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (name, p) in table.sorted() {
        w.serialize(NameRow {
            name: name.to_string(),
            p_white: p[0],
            p_black: p[1],
            p_hispanic: p[2],
            p_asian: p[3],
            p_other: p[4],
        })?;
    }
    w.flush().map_err(|e| Error::io("<name table>", e))
}

#[derive(Debug, Serialize, Deserialize)]
struct VoterRow {
    voter_id: String,
    surname: String,
    first: String,
    middle: String,
    geography_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_race: Option<String>,
}

fn nonempty(s: String) -> Option<String> {
    (!s.trim().is_empty()).then_some(s)
}

/// Reads `voter_id,surname,first,middle,geography_id[,true_race]`; empty
/// first or middle fields mean the name is unknown.
pub fn read_voters<R: Read>(input: R) -> Result<Vec<VoterRecord>> {
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize::<VoterRow>() {
        let r = row?;
        let true_race = match r.true_race.and_then(nonempty) {
            Some(s) => Some(Race::parse(&s).ok_or_else(|| {
                Error::Parse(format!("voter {:?}: unknown race {s:?}", r.voter_id))
            })?),
            None => None,
        };
        if r.surname.trim().is_empty() {
            return Err(Error::Parse(format!("voter {:?} has an empty surname", r.voter_id)));
        }
        out.push(VoterRecord {
            voter_id: r.voter_id,
            surname: r.surname,
            first: nonempty(r.first),
            middle: nonempty(r.middle),
            geography_id: r.geography_id,
            true_race,
        });
    }
    Ok(out)
}

pub fn write_voters<W: Write>(out: W, voters: &[VoterRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let labelled = voters.iter().any(|v| v.true_race.is_some());
    for v in voters {
        w.serialize(VoterRow {
            voter_id: v.voter_id.clone(),
            surname: v.surname.clone(),
            first: v.first.clone().unwrap_or_default(),
            middle: v.middle.clone().unwrap_or_default(),
            geography_id: v.geography_id.clone(),
            true_race: labelled.then(|| v.true_race.map(|r| r.name().to_string()).unwrap_or_default()),
        })?;
    }
    w.flush().map_err(|e| Error::io("<voters>", e))
}

#[derive(Debug, Serialize)]
struct PredictionRow<'a> {
    voter_id: &'a str,
    p_white: f64,
    p_black: f64,
    p_hispanic: f64,
    p_asian: f64,
    p_other: f64,
    label: &'static str,
}

/// Writes one row per voter: the posterior vector and its classification.
pub fn write_predictions<W: Write>(
    out: W,
    voters: &[VoterRecord],
    posteriors: &[RacePosterior],
) -> Result<()> {
    if voters.len() != posteriors.len() {
        return Err(Error::LengthMismatch(voters.len(), posteriors.len()));
    }
    let mut w = csv::Writer::from_writer(out);
    for (v, p) in voters.iter().zip(posteriors) {
        w.serialize(PredictionRow {
            voter_id: &v.voter_id,
            p_white: p.0[0],
            p_black: p.0[1],
            p_hispanic: p.0[2],
            p_asian: p.0[3],
            p_other: p.0[4],
            label: classify(p).name(),
        })?;
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))
}

//! Desk-scale replications: parity validity across scenarios, partisan
//! seat distributions, MMD analyses under a VRA constraint, and BISG
//! accuracy under alternative geographic priors.
//!
//! Every experiment is a pure function of its inputs and seed; reports are
//! byte-identical across runs and execution modes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bisg::{auroc, build_geo_prior, classify, misclassification_rate, score_voters, NameTables, VoterRecord};
use crate::ensemble::{ConstraintConfig, PlanEnsemble};
use crate::error::{Error, Result};
use crate::graph::{Plan, PopulationScenario, Race, RaceCounts, RegionGraph};
use crate::io::{region_to_json, Region};
use crate::mergesplit::{mergesplit_chains, CutSelection};
use crate::metrics::{
    dem_majority_seats, mmd_confusion, mmd_count, mmd_membership_prob, prob_difference, reevaluate_ensemble,
    seats_histogram, MmdDefinition,
};
use crate::noise::{mean_relative_error, perturb_scenario, NoiseSpec};
use crate::par::Execution;
use crate::report::MetricReport;
use crate::rng::derive_seed;
use crate::smc::{sample_plans_smc_with, SmcOptions};

/// Population deviation of the enacted Mississippi State Senate plan, used
/// as a tolerance preset.
pub const MISSISSIPPI_SENATE_TOLERANCE: f64 = 0.0498;

/// Reference study scales: office, districts, precincts, simulated plans.
pub const SCALE_PRESETS: &[(&str, u32, usize, usize)] = &[
    ("pa-us-house", 18, 9_256, 30_000),
    ("la-state-senate", 39, 3_668, 60_000),
    ("la-state-house-baton-rouge", 15, 361, 1_700_000),
    ("nc-us-house", 13, 2_692, 30_000),
    ("sc-us-house", 7, 2_122, 30_000),
    ("sc-state-house", 124, 2_122, 30_000),
    ("ms-state-senate", 9, 310, 30_000),
    ("ny-school-board", 9, 1_207, 10_000),
];

fn smc(
    graph: &RegionGraph,
    scenario: &PopulationScenario,
    n_districts: u32,
    tolerance: f64,
    n_plans: usize,
    seed: u64,
    execution: Execution,
) -> Result<PlanEnsemble> {
    let opts = SmcOptions {
        execution,
        ..SmcOptions::default()
    };
    sample_plans_smc_with(
        graph,
        scenario,
        n_districts,
        &ConstraintConfig::with_tolerance(tolerance),
        n_plans,
        seed,
        &opts,
    )
}

/// Region scenarios followed by one perturbed copy of the first scenario
/// per noise scale, named `noisy-<scale>`.
fn scenarios_with_noise(
    region: &Region,
    noise_scales: &[f64],
    seed: u64,
) -> Result<Vec<PopulationScenario>> {
    let base = region.scenario(None)?;
    let mut out = if region.scenarios.is_empty() {
        vec![base.clone()]
    } else {
        region.scenarios.clone()
    };
    for (k, &scale) in noise_scales.iter().enumerate() {
        let spec = NoiseSpec::new(scale, derive_seed(seed, &[0x4e4f_4953, k as u64]));
        let mut s = perturb_scenario(&region.graph, &base, &spec)?;
        s.id = format!("noisy-{scale}");
        if out.iter().any(|o| o.id == s.id) {
            return Err(Error::InvalidConfig(format!("scenario id {:?} already exists", s.id)));
        }
        out.push(s);
    }
    Ok(out)
}

fn add_noise_summary(report: &mut MetricReport, scenarios: &[PopulationScenario]) -> Result<()> {
    let base = &scenarios[0];
    let mut errs = BTreeMap::new();
    for s in &scenarios[1..] {
        errs.insert(s.id.clone(), json!(mean_relative_error(base, s)?));
    }
    report
        .summary
        .insert("mean_relative_precinct_error".into(), json!(errs));
    Ok(())
}

fn new_report(name: &str, seed: u64, config: &impl Serialize, region: &Region) -> Result<MetricReport> {
    let mut r = MetricReport::new(name, seed, serde_json::to_value(config)?);
    r.add_input("region", region_to_json(region)?.as_bytes());
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityConfig {
    pub n_plans: usize,
    pub n_districts: u32,
    pub tolerances: Vec<f64>,
    pub noise_scales: Vec<f64>,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

/// Samples under each scenario and tolerance, then re-measures every plan
/// under every scenario.
pub fn run_parity_experiment(region: &Region, cfg: &ParityConfig) -> Result<MetricReport> {
    if cfg.tolerances.is_empty() {
        return Err(Error::InvalidConfig("no tolerances given".into()));
    }
    let scenarios = scenarios_with_noise(region, &cfg.noise_scales, cfg.seed)?;
    let mut report = new_report("parity", cfg.seed, cfg, region)?;
    add_noise_summary(&mut report, &scenarios)?;
    let mut table = String::from("generating,evaluated,tolerance,invalid_fraction,mean_max_deviation\n");
    let mut fractions = Vec::new();
    for (gi, gen) in scenarios.iter().enumerate() {
        for (ti, &tol) in cfg.tolerances.iter().enumerate() {
            let seed = derive_seed(cfg.seed, &[gi as u64, ti as u64]);
            let ens = smc(&region.graph, gen, cfg.n_districts, tol, cfg.n_plans, seed, cfg.execution)?;
            for eval in &scenarios {
                let re = reevaluate_ensemble(&ens, eval, tol)?;
                let mean_dev: f64 = re
                    .max_deviations
                    .iter()
                    .zip(ens.weights())
                    .map(|(d, w)| d * w)
                    .sum();
                for (k, d) in re.max_deviations.iter().enumerate() {
                    report.push(Some(k), format!("max_deviation/{}/{}/{tol}", gen.id, eval.id), *d);
                }
                table.push_str(&format!(
                    "{},{},{tol},{},{mean_dev}\n",
                    gen.id, eval.id, re.invalid_fraction
                ));
                fractions.push(json!({
                    "generating": gen.id,
                    "evaluated": eval.id,
                    "tolerance": tol,
                    "invalid_fraction": re.invalid_fraction,
                }));
            }
        }
    }
    report.tables.insert("invalid_fractions".into(), table);
    report.summary.insert("invalid_fractions".into(), Value::Array(fractions));
    Ok(report)
}

/// Invalid fraction for one (generating, evaluated, tolerance) triple of a
/// parity report.
pub fn invalid_fraction(report: &MetricReport, generating: &str, evaluated: &str, tolerance: f64) -> Option<f64> {
    report.summary.get("invalid_fractions")?.as_array()?.iter().find_map(|v| {
        (v["generating"] == generating && v["evaluated"] == evaluated && v["tolerance"].as_f64() == Some(tolerance))
            .then(|| v["invalid_fraction"].as_f64())
            .flatten()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartisanConfig {
    pub n_plans: usize,
    pub n_districts: u32,
    pub tolerance: f64,
    pub noise_scales: Vec<f64>,
    pub seed: u64,
    #[serde(skip)]
    pub enacted: Option<Plan>,
    #[serde(skip)]
    pub execution: Execution,
}

/// Democratic-majority seat histograms per scenario. Every scenario is
/// sampled with the same seed, so identical scenarios give identical
/// histograms.
pub fn run_partisan_experiment(region: &Region, cfg: &PartisanConfig) -> Result<MetricReport> {
    let scenarios = scenarios_with_noise(region, &cfg.noise_scales, cfg.seed)?;
    let mut report = new_report("partisan", cfg.seed, cfg, region)?;
    add_noise_summary(&mut report, &scenarios)?;
    if let Some(plan) = &cfg.enacted {
        let mut bytes = Vec::new();
        crate::io::write_plan_csv(&mut bytes, &region.graph, plan)?;
        report.add_input("enacted_plan", &bytes);
        report
            .summary
            .insert("enacted_dem_seats".into(), json!(dem_majority_seats(plan, &region.graph)?));
    }
    let mut table = String::from("scenario,seats,frequency\n");
    let mut hists = BTreeMap::new();
    for s in &scenarios {
        let ens = smc(&region.graph, s, cfg.n_districts, cfg.tolerance, cfg.n_plans, cfg.seed, cfg.execution)?;
        for (k, p) in ens.plans().iter().enumerate() {
            report.push(Some(k), format!("dem_seats/{}", s.id), dem_majority_seats(p, &region.graph)? as f64);
        }
        let hist = seats_histogram(&ens, |p| dem_majority_seats(p, &region.graph))?;
        for (seats, f) in &hist {
            table.push_str(&format!("{},{seats},{f}\n", s.id));
        }
        hists.insert(s.id.clone(), json!(hist));
    }
    report.tables.insert("seats_histogram".into(), table);
    report.summary.insert("seats_histogram".into(), json!(hists));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub n_districts: u32,
    pub tolerance: f64,
    pub n_steps: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub vra_weights: Vec<f64>,
    pub vra_target_mmds: u32,
    pub compactness_weight: f64,
    pub definition: MmdDefinition,
    /// Adds one perturbed copy of the first scenario when set.
    pub noise: Option<NoiseSpec>,
    pub cut_selection: CutSelection,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl MmdConfig {
    pub fn new(n_districts: u32, tolerance: f64, vra_weights: Vec<f64>, vra_target_mmds: u32, seed: u64) -> Self {
        MmdConfig {
            n_districts,
            tolerance,
            n_steps: 2_000,
            thin: 2,
            n_chains: 4,
            vra_weights,
            vra_target_mmds,
            compactness_weight: 0.0,
            definition: MmdDefinition::black(),
            noise: None,
            cut_selection: CutSelection::default(),
            seed,
            execution: Execution::default(),
        }
    }
}

/// Merge-split chains per scenario and VRA weight. Every scenario reuses
/// the same random streams (common random numbers), so differences between
/// scenarios are not swamped by chain-to-chain noise. Reports MMD histograms,
/// confusion tables of the first scenario against each other one, and
/// per-precinct MMD-membership differences.
///
/// Two difference maps are emitted per weight: `own` compares each
/// scenario's membership under its own ensemble; `cross` measures the
/// first scenario's ensemble under both scenarios.
pub fn run_mmd_experiment(region: &Region, cfg: &MmdConfig) -> Result<MetricReport> {
    if cfg.vra_weights.is_empty() {
        return Err(Error::InvalidConfig("no VRA weights given".into()));
    }
    let mut scenarios = if region.scenarios.is_empty() {
        vec![region.scenario(None)?]
    } else {
        region.scenarios.clone()
    };
    if let Some(spec) = &cfg.noise {
        let mut s = perturb_scenario(&region.graph, &scenarios[0], spec)?;
        s.id = format!("noisy-{}", spec.scale);
        scenarios.push(s);
    }
    let mut report = new_report("mmd", cfg.seed, cfg, region)?;
    add_noise_summary(&mut report, &scenarios)?;

    let graph = &region.graph;
    let mut ensembles: Vec<Vec<PlanEnsemble>> = Vec::new();
    let mut hist_table = String::from("scenario,vra_weight,mmds,frequency\n");
    for s in &scenarios {
        let start = smc(
            graph,
            s,
            cfg.n_districts,
            cfg.tolerance,
            1,
            derive_seed(cfg.seed, &[0x5354_4152]),
            Execution::Sequential,
        )?
        .plans()[0]
        .clone();
        let mut per_weight = Vec::new();
        for (wi, &w) in cfg.vra_weights.iter().enumerate() {
            let config = ConstraintConfig {
                compactness_weight: cfg.compactness_weight,
                vra_weight: w,
                vra_target_mmds: Some(cfg.vra_target_mmds),
                mmd_definition: cfg.definition.clone(),
                ..ConstraintConfig::with_tolerance(cfg.tolerance)
            };
            let seed = derive_seed(cfg.seed, &[wi as u64]);
            let ens = chains(graph, s, &start, &config, cfg, seed)?;
            let hist = seats_histogram(&ens, |p| Ok(mmd_count(p, s, &cfg.definition)))?;
            for (m, f) in &hist {
                hist_table.push_str(&format!("{},{w},{m},{f}\n", s.id));
            }
            for (k, p) in ens.plans().iter().enumerate() {
                report.push(Some(k), format!("mmds/{}/{w}", s.id), mmd_count(p, s, &cfg.definition) as f64);
            }
            report
                .summary
                .insert(format!("mmd_histogram/{}/{w}", s.id), json!(hist));
            per_weight.push(ens);
        }
        ensembles.push(per_weight);
    }
    report.tables.insert("mmd_histogram".into(), hist_table);

    let base = &scenarios[0];
    let mut map = String::from("precinct_id,vra_weight,scenario,own_difference,cross_difference\n");
    let mut max_diffs = Vec::new();
    let mut confusions = Vec::new();
    for (wi, &w) in cfg.vra_weights.iter().enumerate() {
        let base_ens = &ensembles[0][wi];
        let p_base = mmd_membership_prob(base_ens, base, &cfg.definition);
        for (si, other) in scenarios.iter().enumerate().skip(1) {
            let table = mmd_confusion(base_ens, base, other, &cfg.definition);
            report
                .tables
                .insert(format!("confusion_{}_{}_w{w}", base.id, other.id), table.to_csv());
            confusions.push(json!({
                "vra_weight": w,
                "scenario": other.id,
                "table": table,
            }));
            let p_own = mmd_membership_prob(&ensembles[si][wi], other, &cfg.definition);
            let p_cross = mmd_membership_prob(base_ens, other, &cfg.definition);
            let own = prob_difference(&p_base, &p_own)?;
            let cross = prob_difference(&p_base, &p_cross)?;
            for (i, node) in graph.nodes().iter().enumerate() {
                map.push_str(&format!("{},{w},{},{},{}\n", node.id, other.id, own[i], cross[i]));
            }
            let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            max_diffs.push(json!({
                "vra_weight": w,
                "scenario": other.id,
                "max_abs_own_difference": max_abs(&own),
                "max_abs_cross_difference": max_abs(&cross),
            }));
        }
    }
    report.tables.insert("prob_difference".into(), map);
    report.summary.insert("max_abs_difference".into(), Value::Array(max_diffs));
    report.summary.insert("confusion".into(), Value::Array(confusions));
    Ok(report)
}

fn chains(
    graph: &RegionGraph,
    scenario: &PopulationScenario,
    start: &Plan,
    config: &ConstraintConfig,
    cfg: &MmdConfig,
    seed: u64,
) -> Result<PlanEnsemble> {
    if cfg.cut_selection == CutSelection::default() {
        return mergesplit_chains(
            graph,
            scenario,
            start,
            config,
            cfg.n_steps,
            cfg.thin,
            seed,
            cfg.n_chains,
            cfg.execution,
        );
    }
    let opts = crate::mergesplit::ChainOptions {
        cut_selection: cfg.cut_selection,
        ..Default::default()
    };
    let parts = crate::par::map_range(cfg.execution, cfg.n_chains.max(1), |c| {
        crate::mergesplit::mergesplit_chain_with(
            graph,
            scenario,
            start,
            config,
            cfg.n_steps,
            cfg.thin,
            derive_seed(seed, &[c as u64]),
            &opts,
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let provenance = parts[0].provenance.clone();
    PlanEnsemble::merge(parts, provenance)
}

/// Maximum |own difference| per VRA weight (over non-base scenarios) from
/// an MMD report.
pub fn max_abs_differences(report: &MetricReport, cross: bool) -> Vec<(f64, f64)> {
    let key = if cross {
        "max_abs_cross_difference"
    } else {
        "max_abs_own_difference"
    };
    let mut out: Vec<(f64, f64)> = Vec::new();
    for v in report
        .summary
        .get("max_abs_difference")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
    {
        let (w, d) = (v["vra_weight"].as_f64().unwrap_or(f64::NAN), v[key].as_f64().unwrap_or(f64::NAN));
        match out.iter_mut().find(|(x, _)| *x == w) {
            Some(e) => e.1 = e.1.max(d),
            None => out.push((w, d)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisgConfig {
    pub seed: u64,
    /// Plans sampled (under the first scenario) for the MMD confusion of
    /// registered-voter race counts.
    pub n_plans: usize,
    pub n_districts: u32,
    pub tolerance: f64,
    pub definition: MmdDefinition,
    pub noise_scales: Vec<f64>,
    #[serde(skip)]
    pub execution: Execution,
}

/// Per-precinct counts of voters by race label.
fn registered_counts(graph: &RegionGraph, voters: &[VoterRecord], labels: &[Race]) -> Result<Vec<RaceCounts>> {
    let mut counts = vec![RaceCounts::default(); graph.len()];
    for (v, r) in voters.iter().zip(labels) {
        let i = graph.require_index(&v.geography_id)?;
        counts[i].0[r.index()] += 1;
    }
    Ok(counts)
}

/// Scores voters under a prior built from each scenario. Reports per-race
/// AUROC and misclassification per scenario, and MMD confusion tables
/// comparing registered-voter race counts from true labels against counts
/// from each scenario's imputed labels.
pub fn run_bisg_experiment(
    region: &Region,
    voters: &[VoterRecord],
    tables: &NameTables,
    cfg: &BisgConfig,
) -> Result<MetricReport> {
    let truth: Vec<Race> = voters
        .iter()
        .map(|v| {
            v.true_race
                .ok_or_else(|| Error::DegenerateLabels(format!("voter {:?} has no true race", v.voter_id)))
        })
        .collect::<Result<_>>()?;
    if truth.is_empty() {
        return Err(Error::DegenerateLabels("voter file is empty".into()));
    }
    let degenerate: Vec<Race> = Race::ALL
        .into_iter()
        .filter(|r| truth.iter().all(|t| t == r) || !truth.contains(r))
        .collect();
    if degenerate.len() == Race::ALL.len() {
        return Err(Error::DegenerateLabels(format!(
            "every voter is labelled {}; no race has both positive and negative examples",
            truth[0]
        )));
    }

    let scenarios = scenarios_with_noise(region, &cfg.noise_scales, cfg.seed)?;
    let mut report = new_report("bisg", cfg.seed, cfg, region)?;
    {
        let mut bytes = Vec::new();
        crate::bisg::write_voters(&mut bytes, voters)?;
        report.add_input("voters", &bytes);
        for (name, t) in [("surnames", &tables.surname), ("first_names", &tables.first), ("middle_names", &tables.middle)] {
            let mut bytes = Vec::new();
            crate::bisg::write_name_table(&mut bytes, t)?;
            report.add_input(name, &bytes);
        }
    }
    add_noise_summary(&mut report, &scenarios)?;
    report.summary.insert(
        "races_without_both_labels".into(),
        json!(degenerate.iter().map(|r| r.name()).collect::<Vec<_>>()),
    );

    let true_scenario = PopulationScenario::from_race_counts(
        "registered-true",
        registered_counts(&region.graph, voters, &truth)?,
    );
    let ens = smc(
        &region.graph,
        &scenarios[0],
        cfg.n_districts,
        cfg.tolerance,
        cfg.n_plans,
        derive_seed(cfg.seed, &[0x4249_5347]),
        cfg.execution,
    )?;

    let mut auroc_table = String::from("scenario,race,auroc\n");
    let mut miss_table = String::from("scenario,misclassification_rate\n");
    let mut summary_auroc = BTreeMap::new();
    for s in &scenarios {
        let prior = build_geo_prior(&region.graph, s)?;
        let post = score_voters(voters, tables, &prior, cfg.execution)?;
        let mut per_race = BTreeMap::new();
        for race in Race::ALL {
            if degenerate.contains(&race) {
                auroc_table.push_str(&format!("{},{},NA\n", s.id, race.name()));
                continue;
            }
            let scores: Vec<f64> = post.iter().map(|p| p.prob(race)).collect();
            let labels: Vec<bool> = truth.iter().map(|&t| t == race).collect();
            let a = auroc(&scores, &labels)?;
            auroc_table.push_str(&format!("{},{},{a}\n", s.id, race.name()));
            report.push(None, format!("auroc/{}/{}", s.id, race.name()), a);
            per_race.insert(race.name(), a);
        }
        summary_auroc.insert(s.id.clone(), json!(per_race));
        let predicted: Vec<Race> = post.iter().map(classify).collect();
        let miss = misclassification_rate(&predicted, &truth)?;
        miss_table.push_str(&format!("{},{miss}\n", s.id));
        report.push(None, format!("misclassification/{}", s.id), miss);

        let imputed = PopulationScenario::from_race_counts(
            format!("registered-imputed-{}", s.id),
            registered_counts(&region.graph, voters, &predicted)?,
        );
        let table = mmd_confusion(&ens, &true_scenario, &imputed, &cfg.definition);
        report
            .tables
            .insert(format!("confusion_registered_true_vs_imputed_{}", s.id), table.to_csv());
    }
    report.tables.insert("auroc".into(), auroc_table);
    report.tables.insert("misclassification".into(), miss_table);
    report.summary.insert("auroc".into(), json!(summary_auroc));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{grid_region, synthetic_name_tables, synthetic_voters, GridSpec, Layout};

    fn small_region() -> Region {
        grid_region(&GridSpec {
            county_block: 2,
            ..GridSpec::new(4, 4, Layout::Segregated, 7)
        })
        .unwrap()
    }

    #[test]
    fn parity_single_scenario_is_always_valid() {
        let r = small_region();
        let cfg = ParityConfig {
            n_plans: 50,
            n_districts: 2,
            tolerances: vec![0.05, 0.2],
            noise_scales: vec![],
            seed: 1,
            execution: Execution::Parallel,
        };
        let rep = run_parity_experiment(&r, &cfg).unwrap();
        for tol in [0.05, 0.2] {
            assert_eq!(invalid_fraction(&rep, "census", "census", tol), Some(0.0));
        }
        let seq = run_parity_experiment(&r, &ParityConfig { execution: Execution::Sequential, ..cfg }).unwrap();
        assert_eq!(seq.rows_csv(), rep.rows_csv());
        assert_eq!(seq.summary_json().unwrap(), rep.summary_json().unwrap());
    }

    #[test]
    fn partisan_identical_scenarios_give_identical_histograms() {
        let mut r = small_region();
        let mut twin = r.scenarios[0].clone();
        twin.id = "twin".into();
        r.add_scenario(twin).unwrap();
        let cfg = PartisanConfig {
            n_plans: 40,
            n_districts: 2,
            tolerance: 0.1,
            noise_scales: vec![],
            seed: 3,
            enacted: None,
            execution: Execution::Parallel,
        };
        let rep = run_partisan_experiment(&r, &cfg).unwrap();
        let h = &rep.summary["seats_histogram"];
        assert_eq!(h["census"], h["twin"]);
        let total: f64 = h["census"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mmd_identical_scenarios_have_zero_difference() {
        let mut r = small_region();
        let mut twin = r.scenarios[0].clone();
        twin.id = "twin".into();
        r.add_scenario(twin).unwrap();
        let mut cfg = MmdConfig::new(2, 0.1, vec![0.0], 1, 5);
        cfg.n_steps = 200;
        cfg.n_chains = 2;
        let rep = run_mmd_experiment(&r, &cfg).unwrap();
        // Same scenario data but a different chain seed: the cross map is
        // exactly zero.
        assert_eq!(max_abs_differences(&rep, true), vec![(0.0, 0.0)]);
        let conf = rep.tables.keys().find(|k| k.starts_with("confusion_")).unwrap();
        for line in rep.tables[conf].lines().skip(1) {
            let s: f64 = line.split(',').skip(1).map(|x| x.parse::<f64>().unwrap()).sum();
            assert!(s == 0.0 || (s - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bisg_identical_scenarios_identical_auroc_and_degenerate_error() {
        let mut r = small_region();
        let mut twin = r.scenarios[0].clone();
        twin.id = "twin".into();
        r.add_scenario(twin).unwrap();
        let tables = synthetic_name_tables(3, 1);
        let voters = synthetic_voters(&r.graph, &r.scenarios[0], &tables, 20, 2).unwrap();
        let cfg = BisgConfig {
            seed: 4,
            n_plans: 20,
            n_districts: 2,
            tolerance: 0.1,
            definition: MmdDefinition::black_hispanic(),
            noise_scales: vec![],
            execution: Execution::Parallel,
        };
        let rep = run_bisg_experiment(&r, &voters, &tables, &cfg).unwrap();
        assert_eq!(rep.summary["auroc"]["census"], rep.summary["auroc"]["twin"]);

        let mono: Vec<VoterRecord> = voters
            .iter()
            .cloned()
            .map(|mut v| {
                v.true_race = Some(Race::White);
                v
            })
            .collect();
        assert!(matches!(
            run_bisg_experiment(&r, &mono, &tables, &cfg),
            Err(Error::DegenerateLabels(_))
        ));
    }
}

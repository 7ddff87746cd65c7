use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use redistrict_core::bisg::{
    auroc, build_geo_prior, read_name_table, read_voters, score_voters, write_name_table, write_predictions,
    write_voters, NameTable, NameTables,
};
use redistrict_core::ensemble::ConstraintConfig;
use redistrict_core::experiments::{
    run_bisg_experiment, run_mmd_experiment, run_parity_experiment, run_partisan_experiment, BisgConfig, MmdConfig,
    ParityConfig, PartisanConfig,
};
use redistrict_core::fixtures::{grid_region, synthetic_name_tables, synthetic_voters, GridSpec, Layout};
use redistrict_core::graph::{Plan, Race};
use redistrict_core::io::{load_ensemble, load_plan, load_region_graph, parse_region, save_ensemble, save_region};
use redistrict_core::mergesplit::{mergesplit_chains, ChainOptions, CutSelection};
use redistrict_core::metrics::{
    county_splits, cut_edge_count, dem_majority_seats, mmd_confusion, mmd_count, parity_deviation, MmdDefinition,
};
use redistrict_core::noise::{
    calibrate_scale, error_summary, error_summary_csv, mean_relative_error, perturb_scenario, Covariate, NoiseLevel,
    NoiseSpec,
};
use redistrict_core::par::Execution;
use redistrict_core::report::MetricReport;
use redistrict_core::smc::{sample_plans_smc_with, SmcOptions};
use redistrict_core::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "redistrict-lab", version, about = "Redistricting ensembles under census noise")]
struct Cli {
    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a region file and write it back in canonical form.
    Ingest {
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic grid region, optionally with name tables and voters.
    Generate(GenerateArgs),
    /// Append a noisy copy of a scenario to a region file.
    Perturb(PerturbArgs),
    /// Sample an ensemble of plans.
    Sample(SampleArgs),
    /// Score an ensemble or a single plan under one or more scenarios.
    Metrics(MetricsArgs),
    /// Predict voter race from names and geography.
    Bisg(BisgArgs),
    /// Run a packaged experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 10)]
    rows: usize,
    #[arg(long, default_value_t = 10)]
    cols: usize,
    #[arg(long, default_value = "uniform")]
    layout: String,
    #[arg(long, default_value_t = 5)]
    county_block: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Region JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Also write name tables and a labelled voter file to this directory.
    #[arg(long)]
    voters_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    voters_per_precinct: usize,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    region: PathBuf,
    /// Scenario to perturb; defaults to the first one.
    #[arg(long)]
    scenario: Option<String>,
    /// Noise scale. Exactly one of --scale and --target-error is required.
    #[arg(long)]
    scale: Option<f64>,
    /// Calibrate the scale to this mean relative precinct error.
    #[arg(long)]
    target_error: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated levels among county, precinct.
    #[arg(long, value_delimiter = ',', default_value = "county,precinct")]
    levels: Vec<String>,
    #[arg(long)]
    mixed_only_below_hhi: Option<f64>,
    #[arg(long)]
    protect_plurality: bool,
    /// Id of the new scenario.
    #[arg(long)]
    id: Option<String>,
    /// Region file to write; defaults to updating --region in place.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a binned error summary against this covariate.
    #[arg(long)]
    error_summary: Option<PathBuf>,
    #[arg(long, default_value = "minority_share")]
    covariate: String,
    #[arg(long, default_value_t = 10)]
    bins: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampler {
    Smc,
    Mergesplit,
}

#[derive(Args)]
struct Constraints {
    #[arg(long, default_value_t = 5)]
    districts: u32,
    #[arg(long, default_value_t = 0.01)]
    tolerance: f64,
    #[arg(long)]
    max_county_splits: Option<u32>,
    #[arg(long, default_value_t = 0.0)]
    compactness_weight: f64,
    #[arg(long, default_value_t = 0.0)]
    vra_weight: f64,
    #[arg(long)]
    vra_target: Option<u32>,
    /// Count Black and Hispanic residents together toward MMDs.
    #[arg(long)]
    coalition: bool,
}

impl Constraints {
    fn definition(&self) -> MmdDefinition {
        if self.coalition {
            MmdDefinition::black_hispanic()
        } else {
            MmdDefinition::black()
        }
    }

    fn config(&self) -> ConstraintConfig {
        ConstraintConfig {
            max_county_splits: self.max_county_splits,
            compactness_weight: self.compactness_weight,
            vra_weight: self.vra_weight,
            vra_target_mmds: self.vra_target,
            mmd_definition: self.definition(),
            ..ConstraintConfig::with_tolerance(self.tolerance)
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    region: PathBuf,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_enum, default_value_t = Sampler::Smc)]
    sampler: Sampler,
    #[command(flatten)]
    constraints: Constraints,
    /// Plans for SMC; chain steps per chain for merge-split.
    #[arg(long, default_value_t = 1000)]
    n_plans: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Starting plan for merge-split; drawn by SMC when absent.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Split uniformly over all tree edges instead of balanced ones.
    #[arg(long)]
    uniform_edge: bool,
    /// Ensemble CSV path; the provenance sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    region: PathBuf,
    /// Ensemble CSV (with sidecar).
    #[arg(long, conflicts_with = "plan", required_unless_present = "plan")]
    ensemble: Option<PathBuf>,
    /// Single plan CSV.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Scenarios to evaluate under; repeat or comma-separate. Defaults to
    /// the first one.
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<String>,
    #[arg(long, default_value_t = 0.01)]
    tolerance: f64,
    #[arg(long)]
    coalition: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NameArgs {
    #[arg(long)]
    voters: PathBuf,
    #[arg(long)]
    surnames: PathBuf,
    #[arg(long)]
    first_names: Option<PathBuf>,
    #[arg(long)]
    middle_names: Option<PathBuf>,
}

impl NameArgs {
    fn load(&self) -> Result<(Vec<redistrict_core::bisg::VoterRecord>, NameTables)> {
        let table = |p: &Option<PathBuf>| -> Result<NameTable> {
            match p {
                Some(p) => Ok(read_name_table(open(p)?)?),
                None => Ok(NameTable::new()),
            }
        };
        let tables = NameTables {
            surname: read_name_table(open(&self.surnames)?)?,
            first: table(&self.first_names)?,
            middle: table(&self.middle_names)?,
        };
        Ok((read_voters(open(&self.voters)?)?, tables))
    }
}

#[derive(Args)]
struct BisgArgs {
    #[arg(long)]
    region: PathBuf,
    /// Scenario supplying the geographic prior.
    #[arg(long)]
    scenario: Option<String>,
    #[command(flatten)]
    names: NameArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory: predictions.csv, plus an AUROC report when voters
    /// carry true labels.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentName {
    Parity,
    Partisan,
    Mmd,
    Bisg,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentName,
    #[arg(long)]
    region: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n_plans: usize,
    #[arg(long, default_value_t = 5)]
    districts: u32,
    /// Comma-separated; parity uses all, the others the first.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.05")]
    tolerance: Vec<f64>,
    /// Comma-separated noise scales; each adds a perturbed scenario.
    #[arg(long, value_delimiter = ',')]
    noise_scale: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Enacted plan for the partisan experiment.
    #[arg(long)]
    enacted: Option<PathBuf>,
    /// VRA weights for the MMD experiment.
    #[arg(long, value_delimiter = ',', default_value = "0,2,20")]
    vra_weights: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    vra_target: u32,
    /// Chain steps per chain for the MMD experiment.
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    /// Restrict MMD-experiment noise to precincts below this racial HHI.
    #[arg(long)]
    mixed_only_below_hhi: Option<f64>,
    #[arg(long)]
    coalition: bool,
    #[arg(long)]
    voters: Option<PathBuf>,
    #[arg(long)]
    surnames: Option<PathBuf>,
    #[arg(long)]
    first_names: Option<PathBuf>,
    #[arg(long)]
    middle_names: Option<PathBuf>,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::Io { path: path.into(), source: e }.into())
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    fs::File::create(path).map_err(|e| Error::Io { path: path.into(), source: e }.into())
}

fn invalid(msg: String) -> anyhow::Error {
    Error::InvalidConfig(msg).into()
}

fn write_report(report: &MetricReport, dir: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv => report.write_csv_dir(dir)?,
        Format::Json => report.write_json_dir(dir)?,
    }
    log::info!("wrote {} report to {}", report.provenance.experiment, dir.display());
    Ok(())
}

fn ingest(region: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(region).map_err(|e| Error::Io { path: region.into(), source: e })?;
    let r = parse_region(&text).with_context(|| format!("reading {}", region.display()))?;
    for s in &r.scenarios {
        s.validate(&r.graph)?;
    }
    println!(
        "{} precincts, {} edges, {} scenarios",
        r.graph.len(),
        r.graph.edges().len(),
        r.scenarios.len()
    );
    if let Some(out) = out {
        save_region(out, &r)?;
    }
    Ok(())
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let layout = Layout::parse(&a.layout).ok_or_else(|| invalid(format!("unknown layout {:?}", a.layout)))?;
    let spec = GridSpec {
        county_block: a.county_block,
        ..GridSpec::new(a.rows, a.cols, layout, a.seed)
    };
    let region = grid_region(&spec)?;
    save_region(&a.out, &region)?;
    if let Some(dir) = &a.voters_dir {
        let tables = synthetic_name_tables(8, a.seed);
        let voters = synthetic_voters(&region.graph, &region.scenarios[0], &tables, a.voters_per_precinct, a.seed)?;
        write_name_table(create(&dir.join("surnames.csv"))?, &tables.surname)?;
        write_name_table(create(&dir.join("first_names.csv"))?, &tables.first)?;
        write_name_table(create(&dir.join("middle_names.csv"))?, &tables.middle)?;
        write_voters(create(&dir.join("voters.csv"))?, &voters)?;
    }
    Ok(())
}

fn perturb(a: &PerturbArgs, exec: Execution) -> Result<()> {
    let mut region = load_region_graph(&a.region)?;
    let base = region.scenario(a.scenario.as_deref())?;
    let levels = a
        .levels
        .iter()
        .map(|l| match l.as_str() {
            "county" => Ok(NoiseLevel::County),
            "precinct" => Ok(NoiseLevel::Precinct),
            other => Err(invalid(format!("unknown noise level {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let template = NoiseSpec {
        levels,
        mixed_only_below_hhi: a.mixed_only_below_hhi,
        protect_plurality: a.protect_plurality,
        ..NoiseSpec::new(1.0, a.seed)
    };
    let scale = match (a.scale, a.target_error) {
        (Some(s), None) => s,
        (None, Some(t)) => calibrate_scale(&region.graph, &base, &template, t, 20, exec)?,
        _ => return Err(invalid("give exactly one of --scale and --target-error".into())),
    };
    let spec = NoiseSpec { scale, ..template };
    let mut noisy = perturb_scenario(&region.graph, &base, &spec)?;
    if let Some(id) = &a.id {
        noisy.id = id.clone();
    }
    let err = mean_relative_error(&base, &noisy)?;
    println!("scenario {} at scale {scale}: mean relative precinct error {err:.6}", noisy.id);
    if let Some(path) = &a.error_summary {
        let cov = Covariate::parse(&a.covariate)
            .ok_or_else(|| invalid(format!("unknown covariate {:?}", a.covariate)))?;
        let bins = error_summary(&region.graph, &base, &noisy, cov, a.bins)?;
        fs::write(path, error_summary_csv(&bins)).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    }
    region.add_scenario(noisy)?;
    save_region(a.out.as_ref().unwrap_or(&a.region), &region)?;
    Ok(())
}

fn sample(a: &SampleArgs, exec: Execution) -> Result<()> {
    let region = load_region_graph(&a.region)?;
    let scenario = region.scenario(a.scenario.as_deref())?;
    let config = a.constraints.config();
    let n_d = a.constraints.districts;
    let smc_opts = SmcOptions {
        execution: exec,
        ..SmcOptions::default()
    };
    let ensemble = match a.sampler {
        Sampler::Smc => sample_plans_smc_with(&region.graph, &scenario, n_d, &config, a.n_plans, a.seed, &smc_opts)?,
        Sampler::Mergesplit => {
            let init = match &a.init {
                Some(p) => load_plan(p, &region.graph)?,
                None => {
                    let start = sample_plans_smc_with(
                        &region.graph,
                        &scenario,
                        n_d,
                        &ConstraintConfig::with_tolerance(config.pop_tolerance),
                        1,
                        a.seed,
                        &smc_opts,
                    )?;
                    start.plans()[0].clone()
                }
            };
            if a.uniform_edge {
                let opts = ChainOptions {
                    cut_selection: CutSelection::UniformEdge,
                    ..ChainOptions::default()
                };
                if a.chains != 1 {
                    return Err(invalid("--uniform-edge runs a single chain".into()));
                }
                redistrict_core::mergesplit::mergesplit_chain_with(
                    &region.graph,
                    &scenario,
                    &init,
                    &config,
                    a.n_plans,
                    a.thin,
                    a.seed,
                    &opts,
                )?
            } else {
                mergesplit_chains(
                    &region.graph,
                    &scenario,
                    &init,
                    &config,
                    a.n_plans,
                    a.thin,
                    a.seed,
                    a.chains,
                    exec,
                )?
            }
        }
    };
    save_ensemble(&a.out, &region.graph, &ensemble)?;
    println!("{} plans, effective sample size {:.1}", ensemble.len(), ensemble.effective_sample_size());
    Ok(())
}

fn metrics(a: &MetricsArgs, format: Format) -> Result<()> {
    let region = load_region_graph(&a.region)?;
    let scenarios = if a.scenario.is_empty() {
        vec![region.scenario(None)?]
    } else {
        a.scenario
            .iter()
            .map(|id| region.scenario(Some(id)))
            .collect::<Result<Vec<_>, _>>()?
    };
    let def = if a.coalition {
        MmdDefinition::black_hispanic()
    } else {
        MmdDefinition::black()
    };
    let (plans, weights, bytes): (Vec<Plan>, Vec<f64>, Vec<u8>) = match (&a.ensemble, &a.plan) {
        (Some(p), _) => {
            let e = load_ensemble(p, &region.graph)?;
            let bytes = fs::read(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            (e.plans().to_vec(), e.weights().to_vec(), bytes)
        }
        (None, Some(p)) => {
            let plan = load_plan(p, &region.graph)?;
            let bytes = fs::read(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            (vec![plan], vec![1.0], bytes)
        }
        (None, None) => bail!(invalid("give --ensemble or --plan".into())),
    };
    let config = json!({
        "scenarios": a.scenario,
        "tolerance": a.tolerance,
        "mmd_definition": def,
    });
    let mut report = MetricReport::new("metrics", a.seed, config);
    report.add_input("plans", &bytes);
    let has_votes = region.graph.nodes().iter().any(|n| n.votes_dem + n.votes_rep > 0);
    for (k, (plan, w)) in plans.iter().zip(&weights).enumerate() {
        report.push(Some(k), "weight", *w);
        report.push(Some(k), "county_splits", county_splits(plan, &region.graph) as f64);
        report.push(Some(k), "cut_edges", cut_edge_count(plan, &region.graph) as f64);
        if has_votes {
            report.push(Some(k), "dem_seats", dem_majority_seats(plan, &region.graph)? as f64);
        }
        for s in &scenarios {
            let dev = parity_deviation(plan, s)?.max_deviation;
            report.push(Some(k), format!("max_deviation/{}", s.id), dev);
            report.push(Some(k), format!("mmd_count/{}", s.id), mmd_count(plan, s, &def) as f64);
        }
    }
    for s in &scenarios {
        let invalid: f64 = plans
            .iter()
            .zip(&weights)
            .map(|(p, w)| Ok(if parity_deviation(p, s)?.max_deviation > a.tolerance { *w } else { 0.0 }))
            .sum::<Result<f64>>()?;
        report.push(None, format!("invalid_fraction/{}", s.id), invalid);
    }
    if scenarios.len() > 1 {
        let ensemble = input_ensemble(&plans, &weights)?;
        for other in &scenarios[1..] {
            let table = mmd_confusion(&ensemble, &scenarios[0], other, &def);
            report
                .tables
                .insert(format!("confusion_{}_{}", scenarios[0].id, other.id), table.to_csv());
        }
    }
    write_report(&report, &a.out, format)
}

/// Wraps plans read from a file so ensemble metrics can take them.
fn input_ensemble(plans: &[Plan], weights: &[f64]) -> Result<redistrict_core::ensemble::PlanEnsemble> {
    let provenance = redistrict_core::ensemble::Provenance {
        sampler: "input".into(),
        scenario_id: String::new(),
        n_districts: plans[0].n_districts(),
        tolerance: 0.0,
        constraints: ConstraintConfig::with_tolerance(0.0),
        seed: 0,
        extra: Default::default(),
    };
    Ok(redistrict_core::ensemble::PlanEnsemble::new(plans.to_vec(), weights.to_vec(), provenance)?)
}

fn bisg(a: &BisgArgs, format: Format, exec: Execution) -> Result<()> {
    let region = load_region_graph(&a.region)?;
    let scenario = region.scenario(a.scenario.as_deref())?;
    let (voters, tables) = a.names.load()?;
    let prior = build_geo_prior(&region.graph, &scenario)?;
    let posteriors = score_voters(&voters, &tables, &prior, exec)?;
    write_predictions(create(&a.out.join("predictions.csv"))?, &voters, &posteriors)?;
    if voters.iter().all(|v| v.true_race.is_some()) && !voters.is_empty() {
        let mut report = MetricReport::new("bisg", a.seed, json!({ "scenario": scenario.id }));
        report.add_input("voters", &fs::read(&a.names.voters).unwrap_or_default());
        for race in Race::ALL {
            let labels: Vec<bool> = voters.iter().map(|v| v.true_race == Some(race)).collect();
            let scores: Vec<f64> = posteriors.iter().map(|p| p.prob(race)).collect();
            match auroc(&scores, &labels) {
                Ok(v) => report.push(None, format!("auroc/{}", race.name()), v),
                Err(Error::DegenerateLabels(_)) => {
                    log::warn!("no AUROC for {}: labels are all one class", race.name())
                }
                Err(e) => return Err(e.into()),
            }
        }
        write_report(&report, &a.out, format)?;
    }
    Ok(())
}

fn experiment(a: &ExperimentArgs, format: Format, exec: Execution) -> Result<()> {
    let region = load_region_graph(&a.region)?;
    let tol = *a.tolerance.first().ok_or_else(|| invalid("no tolerance given".into()))?;
    let def = if a.coalition {
        MmdDefinition::black_hispanic()
    } else {
        MmdDefinition::black()
    };
    let report = match a.name {
        ExperimentName::Parity => run_parity_experiment(
            &region,
            &ParityConfig {
                n_plans: a.n_plans,
                n_districts: a.districts,
                tolerances: a.tolerance.clone(),
                noise_scales: a.noise_scale.clone(),
                seed: a.seed,
                execution: exec,
            },
        )?,
        ExperimentName::Partisan => {
            let enacted = a.enacted.as_ref().map(|p| load_plan(p, &region.graph)).transpose()?;
            run_partisan_experiment(
                &region,
                &PartisanConfig {
                    n_plans: a.n_plans,
                    n_districts: a.districts,
                    tolerance: tol,
                    noise_scales: a.noise_scale.clone(),
                    seed: a.seed,
                    enacted,
                    execution: exec,
                },
            )?
        }
        ExperimentName::Mmd => {
            if a.noise_scale.len() > 1 {
                return Err(invalid("the MMD experiment takes at most one noise scale".into()));
            }
            let mut cfg = MmdConfig::new(a.districts, tol, a.vra_weights.clone(), a.vra_target, a.seed);
            cfg.n_steps = a.steps;
            cfg.n_chains = a.chains;
            cfg.definition = def;
            cfg.execution = exec;
            cfg.noise = a.noise_scale.first().map(|&s| {
                let mut spec = NoiseSpec::new(s, a.seed);
                if let Some(h) = a.mixed_only_below_hhi {
                    spec.levels = vec![NoiseLevel::Precinct];
                    spec.mixed_only_below_hhi = Some(h);
                }
                spec
            });
            run_mmd_experiment(&region, &cfg)?
        }
        ExperimentName::Bisg => {
            let (Some(voters), Some(surnames)) = (&a.voters, &a.surnames) else {
                return Err(invalid("the BISG experiment needs --voters and --surnames".into()));
            };
            let names = NameArgs {
                voters: voters.clone(),
                surnames: surnames.clone(),
                first_names: a.first_names.clone(),
                middle_names: a.middle_names.clone(),
            };
            let (voters, tables) = names.load()?;
            run_bisg_experiment(
                &region,
                &voters,
                &tables,
                &BisgConfig {
                    seed: a.seed,
                    n_plans: a.n_plans,
                    n_districts: a.districts,
                    tolerance: tol,
                    definition: def,
                    noise_scales: a.noise_scale.clone(),
                    execution: exec,
                },
            )?
        }
    };
    write_report(&report, &a.out, format)
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match &cli.command {
        Command::Ingest { region, out } => ingest(region, out.as_deref()),
        Command::Generate(a) => generate(a),
        Command::Perturb(a) => perturb(a, exec),
        Command::Sample(a) => sample(a, exec),
        Command::Metrics(a) => metrics(a, cli.format),
        Command::Bisg(a) => bisg(a, cli.format, exec),
        Command::Experiment(a) => experiment(a, cli.format, exec),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()).map(Error::kind) {
        Some(ErrorKind::Infeasible) => 3,
        Some(ErrorKind::Io) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

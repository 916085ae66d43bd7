//! The `provex` command line.
//!
//! Exit codes: 0 ok, 1 error, 2 early stop, 3 insufficient, 4 uncertain,
//! 5 the two algorithms disagreed in `bench`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info, warn};
use rayon::prelude::*;

use provex_core::explain::Explanation;
use provex_core::fixtures::{self, FixtureSpec};
use provex_core::{
    check_concrete, explain_abstraction_refinement, explain_baseline, oracle_check, order_features, AbstractionBounds,
    ActivationKind, Backend, CandidateConfig, Clock, ConcreteNetwork, ExplainOptions, ExplanationStatus,
    FeatureGrouping, OracleVerdict, OrderingPolicy, ReductionSchedule, SufficiencyQuery, Verdict,
};

use crate::format::{load_network, save_network};
use crate::instance::{self, ImageShape, Instance};
use crate::report::{self, ConfigDoc, Report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_EARLY_STOP: i32 = 2;
pub const EXIT_INSUFFICIENT: i32 = 3;
pub const EXIT_UNCERTAIN: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;

/// Magenta marks freed pixels in rendered overlays.
pub const FLAG_COLOR: [u8; 3] = [255, 0, 255];

#[derive(Debug, Parser)]
#[command(name = "provex", version, about = "Provably sufficient explanations for feed-forward networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain one instance and write report.json plus masks.
    Explain(ExplainArgs),
    /// Check whether a feature subset is sufficient.
    Verify(VerifyArgs),
    /// Run both algorithms over many instances and compare them.
    Bench(BenchArgs),
    /// Draw mask overlays and the per-rate grid from a report.
    Render(RenderArgs),
    /// Write a fixture network and instances.
    Fixture(FixtureArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Order {
    Sensitivity,
    InOrder,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Groups {
    None,
    Rgb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Enclosure,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Refine,
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundsArg {
    Query,
    Ball,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FixtureKind {
    RunningExample,
    Random,
    MnistShape,
}

#[derive(Clone, Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = Order::Sensitivity)]
    pub order: Order,
    #[arg(long, value_enum, default_value_t = Groups::None)]
    pub groups: Groups,
    /// Comma-separated, strictly increasing, ending at 1.0.
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    pub schedule: String,
    /// Seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long, value_enum, default_value_t = BackendArg::Enclosure)]
    pub backend: BackendArg,
    /// Branch-and-bound split budget for the oracle backend.
    #[arg(long, default_value_t = 4096)]
    pub budget: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Box the merge bounds are computed over.
    #[arg(long, value_enum, default_value_t = BoundsArg::Query)]
    pub abstraction_bounds: BoundsArg,
    /// Random counterexample candidates per query.
    #[arg(long, default_value_t = 64)]
    pub random_candidates: usize,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `refine`, or `baseline` with the oracle backend.
    #[arg(long, value_enum)]
    pub algorithm: Option<Algorithm>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated 1-based feature indices; empty for no features.
    #[arg(long, default_value = "")]
    pub subset: String,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = BackendArg::Enclosure)]
    pub backend: BackendArg,
    #[arg(long, default_value_t = 4096)]
    pub budget: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub random_candidates: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub search: SearchArgs,
    /// One instance per file; may be repeated.
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// Headerless CSV with one instance per row.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Defaults to the input recorded in the report.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, value_enum)]
    pub kind: FixtureKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub instances: usize,
    #[arg(long, default_value_t = 8)]
    pub inputs: usize,
    /// Comma-separated hidden widths.
    #[arg(long, default_value = "16,16")]
    pub hidden: String,
    #[arg(long, default_value_t = 3)]
    pub outputs: usize,
    #[arg(long, default_value = "relu")]
    pub activation: String,
    #[arg(long)]
    pub out: PathBuf,
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn elapsed(&self) -> Duration {
        self.0.elapsed()
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Explain(a) => cmd_explain(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Render(a) => cmd_render(&a),
        Command::Fixture(a) => cmd_fixture(&a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        EXIT_ERROR
    })
}

pub fn parse_schedule(text: &str) -> anyhow::Result<ReductionSchedule> {
    let rates = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("schedule: {s:?} is not a number")))
        .collect::<anyhow::Result<Vec<f64>>>()?;
    ReductionSchedule::new(rates).context("schedule")
}

fn parse_list<T: std::str::FromStr>(field: &str, text: &str) -> anyhow::Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| anyhow!("{field}: {s:?} is not valid")))
        .collect()
}

fn check_epsilon(epsilon: f64) -> anyhow::Result<()> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        bail!("epsilon: must be a finite non-negative number");
    }
    Ok(())
}

fn load_pair(network: &Path, input: &Path) -> anyhow::Result<(ConcreteNetwork, Instance)> {
    let net = load_network(network).with_context(|| format!("network {}", network.display()))?;
    let inst = instance::load_instance(input).with_context(|| format!("input {}", input.display()))?;
    if inst.values.len() != net.input_dim() {
        bail!(
            "input: {} values but the network expects {}",
            inst.values.len(),
            net.input_dim()
        );
    }
    Ok((net, inst))
}

fn grouping_for(mode: Groups, n: usize, shape: Option<ImageShape>) -> anyhow::Result<FeatureGrouping> {
    match mode {
        Groups::None => Ok(FeatureGrouping::singletons(n)),
        Groups::Rgb => match shape {
            Some(s) if s.channels == 3 => Ok(FeatureGrouping::pixels(3, s.pixels())?),
            _ => bail!("groups: rgb grouping needs a PPM (RGB) instance"),
        },
    }
}

fn policy_for(order: Order, seed: u64) -> OrderingPolicy {
    match order {
        Order::Sensitivity => OrderingPolicy::SensitivityAscending,
        Order::InOrder => OrderingPolicy::InOrder,
        Order::Random => OrderingPolicy::Random(seed),
    }
}

fn options_for(s: &SearchArgs) -> anyhow::Result<ExplainOptions> {
    let timeout = match s.timeout {
        None => None,
        Some(t) if t >= 0.0 && t.is_finite() => Some(Duration::from_secs_f64(t)),
        Some(_) => bail!("timeout: must be a non-negative number of seconds"),
    };
    Ok(ExplainOptions {
        candidates: CandidateConfig {
            random_points: s.random_candidates,
            seed: s.seed,
            ..CandidateConfig::default()
        },
        timeout,
        bounds: match s.abstraction_bounds {
            BoundsArg::Query => AbstractionBounds::QueryBox,
            BoundsArg::Ball => AbstractionBounds::Ball,
        },
    })
}

fn value_name<T: ValueEnum>(v: T) -> String {
    v.to_possible_value().expect("no skipped variants").get_name().to_string()
}

fn config_doc(s: &SearchArgs, input: &Path, schedule: &ReductionSchedule, algorithm: Algorithm) -> ConfigDoc {
    ConfigDoc {
        network: s.network.display().to_string(),
        input: input.display().to_string(),
        epsilon: s.epsilon,
        order: value_name(s.order),
        groups: value_name(s.groups),
        schedule: schedule.rates().to_vec(),
        timeout: s.timeout,
        backend: value_name(s.backend),
        budget: s.budget,
        seed: s.seed,
        algorithm: value_name(algorithm),
        abstraction_bounds: value_name(s.abstraction_bounds),
        random_candidates: s.random_candidates,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_algorithm(
    algorithm: Algorithm,
    net: &ConcreteNetwork,
    x: &[f64],
    s: &SearchArgs,
    grouping: &FeatureGrouping,
    schedule: &ReductionSchedule,
    options: &ExplainOptions,
    clock: &dyn Clock,
) -> anyhow::Result<Explanation> {
    let ordering = order_features(net, x, grouping, policy_for(s.order, s.seed))?;
    let backend = match s.backend {
        BackendArg::Enclosure => Backend::Enclosure,
        BackendArg::Oracle => Backend::Oracle { budget: s.budget },
    };
    Ok(match algorithm {
        Algorithm::Baseline => explain_baseline(net, x, s.epsilon, grouping, &ordering, backend, options, clock)?,
        Algorithm::Refine => {
            if backend != Backend::Enclosure {
                bail!("backend: the refinement algorithm runs on the enclosure backend only");
            }
            explain_abstraction_refinement(net, x, s.epsilon, grouping, &ordering, schedule, options, clock)?
        }
    })
}

fn rate_tag(rho: f64) -> String {
    format!("{rho:.3}")
}

/// Features freed (not in the explanation), as a per-feature mask.
fn freed_features(grouping: &FeatureGrouping, kept_groups: &[usize]) -> Vec<bool> {
    let mut freed = vec![true; grouping.feature_count()];
    for f in grouping.features_of(kept_groups) {
        freed[f] = false;
    }
    freed
}

/// A pixel is freed when every one of its channels is.
fn freed_pixels(freed: &[bool], shape: ImageShape) -> Vec<bool> {
    freed.chunks(shape.channels).map(|c| c.iter().all(|&f| f)).collect()
}

fn write_mask(dir: &Path, name: &str, freed: &[bool], shape: Option<ImageShape>) -> anyhow::Result<()> {
    match shape {
        Some(shape) => {
            let px: Vec<u8> = freed_pixels(freed, shape).iter().map(|&f| if f { 255 } else { 0 }).collect();
            let gray = ImageShape { channels: 1, ..shape };
            instance::save_pnm(&dir.join(format!("{name}.pgm")), gray, &px)?;
        }
        None => {
            let row: Vec<f64> = freed.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
            instance::save_csv_row(&dir.join(format!("{name}.csv")), &row)?;
        }
    }
    Ok(())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("out: cannot create {}", dir.display()))
}

pub fn cmd_explain(a: &ExplainArgs) -> anyhow::Result<i32> {
    let s = &a.search;
    check_epsilon(s.epsilon)?;
    let schedule = parse_schedule(&s.schedule)?;
    let options = options_for(s)?;
    let (net, inst) = load_pair(&s.network, &a.input)?;
    let grouping = grouping_for(s.groups, net.input_dim(), inst.shape)?;
    let algorithm = a.algorithm.unwrap_or(match s.backend {
        BackendArg::Enclosure => Algorithm::Refine,
        BackendArg::Oracle => Algorithm::Baseline,
    });
    let class = net.predict(&inst.values)?;
    info!("explaining class {} of {} ({})", class + 1, a.input.display(), net.describe());

    let clock = WallClock(Instant::now());
    let e = run_algorithm(algorithm, &net, &inst.values, s, &grouping, &schedule, &options, &clock)?;
    let wall = clock.elapsed().as_secs_f64();
    for step in &e.trace.steps {
        debug!("group {} rho {} {:?} -> {:?}", step.group + 1, step.rho, step.verdict, step.outcome);
    }

    create_dir(&a.out)?;
    let config = config_doc(s, &a.input, &schedule, algorithm);
    let rep = report::build_report(&e, &value_name(algorithm), class, net.input_dim(), wall, config);
    crate::write_file(&a.out.join("report.json"), &report::to_json(&rep))?;
    for snap in &e.trace.snapshots {
        let name = format!("mask_rho_{}", rate_tag(snap.rho));
        write_mask(&a.out, &name, &freed_features(&grouping, &snap.groups), inst.shape)?;
    }
    write_mask(&a.out, "mask_final", &freed_features(&grouping, &e.groups), inst.shape)?;

    println!("explanation ({} of {} groups): [{}]", e.groups.len(), grouping.len(), rep.final_set.join(","));
    Ok(match e.status() {
        ExplanationStatus::MinimalSufficient => EXIT_OK,
        ExplanationStatus::SufficientEarlyStop => {
            warn!("timed out; the explanation is sufficient but may not be minimal");
            EXIT_EARLY_STOP
        }
    })
}

pub fn cmd_verify(a: &VerifyArgs) -> anyhow::Result<i32> {
    check_epsilon(a.epsilon)?;
    let (net, inst) = load_pair(&a.network, &a.input)?;
    let labels: Vec<usize> = parse_list("subset", &a.subset)?;
    let n = net.input_dim();
    let subset = labels
        .iter()
        .map(|&l| match l {
            1.. if l <= n => Ok(l - 1),
            _ => Err(anyhow!("subset: feature {l} is outside 1..={n}")),
        })
        .collect::<anyhow::Result<Vec<usize>>>()?;
    let q = SufficiencyQuery::from_indices(&net, inst.values.clone(), &subset, a.epsilon)?;
    let cfg = CandidateConfig {
        random_points: a.random_candidates,
        seed: a.seed,
        ..CandidateConfig::default()
    };
    let (verdict, witness) = match a.backend {
        BackendArg::Enclosure => match check_concrete(&net, &q, &cfg)? {
            Verdict::Sufficient => ("sufficient", None),
            Verdict::Uncertain => ("uncertain", None),
            Verdict::InsufficientWitness(w) => ("insufficient", Some(w)),
        },
        BackendArg::Oracle => match oracle_check(&net, &q, a.budget)? {
            OracleVerdict::ProvedSufficient => ("sufficient", None),
            OracleVerdict::Exhausted => ("uncertain", None),
            OracleVerdict::Witness(w) => ("insufficient", Some(w)),
        },
    };
    println!("{verdict}");
    if let Some(w) = witness {
        let text: Vec<String> = w.iter().map(|v| v.to_string()).collect();
        println!("witness: {}", text.join(","));
        println!("witness class: {}", net.predict(&w)? + 1);
    }
    Ok(match verdict {
        "sufficient" => EXIT_OK,
        "insufficient" => EXIT_INSUFFICIENT,
        _ => EXIT_UNCERTAIN,
    })
}

struct BenchRow {
    instance: usize,
    algorithm: Algorithm,
    explanation: Explanation,
    wall_time: f64,
}

pub const BENCH_HEADER: [&str; 7] = [
    "instance",
    "algorithm",
    "explanation_size",
    "queries",
    "refinements",
    "neuron_evaluations",
    "wall_time",
];

pub const RATES_HEADER: [&str; 6] = ["instance", "algorithm", "rho", "queries", "neuron_evaluations", "mean_query_seconds"];

pub fn cmd_bench(a: &BenchArgs) -> anyhow::Result<i32> {
    let s = &a.search;
    check_epsilon(s.epsilon)?;
    if s.backend != BackendArg::Enclosure {
        bail!("backend: bench compares both algorithms on the enclosure backend");
    }
    let schedule = parse_schedule(&s.schedule)?;
    let options = options_for(s)?;
    let net = load_network(&s.network).with_context(|| format!("network {}", s.network.display()))?;
    let mut instances: Vec<Instance> = Vec::new();
    for p in &a.input {
        instances.push(instance::load_instance(p).with_context(|| format!("input {}", p.display()))?);
    }
    if let Some(p) = &a.instances {
        let rows = instance::load_instances_csv(p).with_context(|| format!("instances {}", p.display()))?;
        instances.extend(rows.into_iter().map(|values| Instance { values, shape: None }));
    }
    for (i, inst) in instances.iter().enumerate() {
        if inst.values.len() != net.input_dim() {
            bail!("input {i}: {} values but the network expects {}", inst.values.len(), net.input_dim());
        }
    }
    if a.workers == 0 {
        bail!("workers: must be at least 1");
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.workers).build()?;
    info!("bench: {} instances on {} workers", instances.len(), a.workers);

    let results: Vec<anyhow::Result<[BenchRow; 2]>> = pool.install(|| {
        instances
            .par_iter()
            .enumerate()
            .map(|(i, inst)| {
                let grouping = grouping_for(s.groups, net.input_dim(), inst.shape)?;
                let run = |algorithm| -> anyhow::Result<BenchRow> {
                    let clock = WallClock(Instant::now());
                    let e = run_algorithm(algorithm, &net, &inst.values, s, &grouping, &schedule, &options, &clock)?;
                    Ok(BenchRow {
                        instance: i,
                        algorithm,
                        wall_time: clock.elapsed().as_secs_f64(),
                        explanation: e,
                    })
                };
                Ok([run(Algorithm::Baseline)?, run(Algorithm::Refine)?])
            })
            .collect()
    });

    create_dir(&a.out)?;
    let mut bench = csv::Writer::from_writer(Vec::new());
    bench.write_record(BENCH_HEADER)?;
    let mut rates = csv::Writer::from_writer(Vec::new());
    rates.write_record(RATES_HEADER)?;
    let mut mismatches = 0;
    for pair in results {
        let pair = pair?;
        for row in &pair {
            let w = provex_core::count_work(&row.explanation.trace);
            bench.write_record([
                row.instance.to_string(),
                value_name(row.algorithm),
                row.explanation.groups.len().to_string(),
                w.queries.to_string(),
                w.refinements.to_string(),
                w.neuron_evaluations.to_string(),
                row.wall_time.to_string(),
            ])?;
            for r in &w.per_rate {
                rates.write_record([
                    row.instance.to_string(),
                    value_name(row.algorithm),
                    r.rho.to_string(),
                    r.queries.to_string(),
                    r.neuron_evaluations.to_string(),
                    r.mean_query_time.as_secs_f64().to_string(),
                ])?;
            }
        }
        if pair[0].explanation.groups != pair[1].explanation.groups {
            mismatches += 1;
            log::error!("instance {}: the algorithms returned different explanations", pair[0].instance);
        }
    }
    crate::write_file(&a.out.join("bench.csv"), &bench.into_inner()?)?;
    crate::write_file(&a.out.join("rates.csv"), &rates.into_inner()?)?;
    println!("{} instances, {} mismatches", instances.len(), mismatches);
    Ok(if mismatches == 0 { EXIT_OK } else { EXIT_MISMATCH })
}

pub fn cmd_render(a: &RenderArgs) -> anyhow::Result<i32> {
    let bytes = crate::read_file(&a.report)?;
    let rep: Report = serde_json::from_slice(&bytes).with_context(|| format!("report {}", a.report.display()))?;
    let input = a.input.clone().unwrap_or_else(|| PathBuf::from(&rep.config.input));
    let inst = instance::load_instance(&input).with_context(|| format!("input {}", input.display()))?;
    let shape = inst
        .shape
        .ok_or_else(|| anyhow!("input: {} is not an image; render needs a PGM or PPM instance", input.display()))?;
    if inst.values.len() != rep.trace.input_dim {
        bail!("input: {} values but the report covers {}", inst.values.len(), rep.trace.input_dim);
    }
    let groups = match rep.config.groups.as_str() {
        "rgb" => Groups::Rgb,
        _ => Groups::None,
    };
    let grouping = grouping_for(groups, rep.trace.input_dim, inst.shape)?;
    let parse = |labels: &[String]| report::parse_labels(labels).map_err(|e| anyhow!("report: {e}"));

    let mut panels: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, snap) in rep.trace.snapshots.iter().enumerate() {
        panels.push((format!("panel_{i:02}_rho_{}", rate_tag(snap.rho)), parse(&snap.explanation)?));
    }
    panels.push(("panel_final".into(), parse(&rep.final_set)?));
    let panels: Vec<(String, Vec<bool>)> = panels
        .into_iter()
        .map(|(name, kept)| {
            if kept.iter().any(|&g| g >= grouping.len()) {
                bail!("report: label outside the {} groups", grouping.len());
            }
            Ok((name, freed_pixels(&freed_features(&grouping, &kept), shape)))
        })
        .collect::<anyhow::Result<_>>()?;

    let source = instance::to_bytes(&inst.values);
    let rgb: Vec<[u8; 3]> = source
        .chunks(shape.channels)
        .map(|c| if shape.channels == 3 { [c[0], c[1], c[2]] } else { [c[0]; 3] })
        .collect();
    create_dir(&a.out)?;
    let color = ImageShape { channels: 3, ..shape };
    let overlay = |freed: &[bool]| -> Vec<u8> {
        rgb.iter()
            .zip(freed)
            .flat_map(|(px, &f)| if f { FLAG_COLOR } else { *px })
            .collect()
    };
    const GAP: usize = 2;
    let grid_w = panels.len() * shape.width + (panels.len() - 1) * GAP;
    let mut grid = vec![255u8; grid_w * shape.height * 3];
    for (p, (name, freed)) in panels.iter().enumerate() {
        let img = overlay(freed);
        instance::save_pnm(&a.out.join(format!("{name}.ppm")), color, &img)?;
        for y in 0..shape.height {
            let src = &img[y * shape.width * 3..(y + 1) * shape.width * 3];
            let x0 = p * (shape.width + GAP);
            let dst = (y * grid_w + x0) * 3;
            grid[dst..dst + src.len()].copy_from_slice(src);
        }
        println!("{name}: {} freed pixels", freed.iter().filter(|&&f| f).count());
    }
    let grid_shape = ImageShape {
        width: grid_w,
        height: shape.height,
        channels: 3,
    };
    instance::save_pnm(&a.out.join("grid.ppm"), grid_shape, &grid)?;
    Ok(EXIT_OK)
}

pub fn cmd_fixture(a: &FixtureArgs) -> anyhow::Result<i32> {
    let spec = match a.kind {
        FixtureKind::RunningExample => FixtureSpec::RunningExample,
        FixtureKind::MnistShape => FixtureSpec::MnistShape { seed: a.seed },
        FixtureKind::Random => FixtureSpec::Random {
            inputs: a.inputs,
            hidden: parse_list("hidden", &a.hidden)?,
            outputs: a.outputs,
            activation: a
                .activation
                .parse::<ActivationKind>()
                .map_err(|_| anyhow!("activation: unknown activation {:?}", a.activation))?,
            seed: a.seed,
        },
    };
    let (net, xs) = fixtures::make_fixture(&spec, a.instances)?;
    create_dir(&a.out)?;
    save_network(&net, &a.out.join("network.json"))?;
    for (i, x) in xs.iter().enumerate() {
        if a.kind == FixtureKind::MnistShape {
            let shape = ImageShape {
                width: 28,
                height: 28,
                channels: 1,
            };
            instance::save_pnm(&a.out.join(format!("instance_{i:03}.pgm")), shape, &instance::to_bytes(x))?;
        } else {
            instance::save_csv_row(&a.out.join(format!("instance_{i:03}.csv")), x)?;
        }
    }
    println!("wrote network.json ({}) and {} instances to {}", net.describe(), xs.len(), a.out.display());
    Ok(EXIT_OK)
}

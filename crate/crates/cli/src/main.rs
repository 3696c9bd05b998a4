use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use nettack::attack::{
    apply_perturbations, fgsm_baseline, rnd_baseline, run_nettack, select_influencers, AttackConfig,
    FeatureScoring,
};
use nettack::dataset::{
    extract_lcc, load_bundle, load_bundle_with_report, make_split, save_bundle, DataSplit, PlantedPartition,
};
use nettack::harness::{
    degree_bucket_report, read_results, run_experiment, table_csv, to_csv, ExperimentPlan,
};
use nettack::normalized::NormalizedAdjacency;
use nettack::surrogate::{train_surrogate, SurrogateConfig, SurrogateModel};
use nettack::unnoticeability::{replay_constraints, DegreeTestConfig, LogLikForm};
use nettack::victim::{evasion_eval, poisoning_eval, train_gcn, GcnConfig};
use nettack::{AttributedGraph, Perturbation};

#[derive(Parser)]
#[command(name = "nettack", version, about = "Targeted adversarial perturbations on attributed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rewrite a bundle in canonical form and report what was cleaned up.
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep only the largest connected component.
    Lcc {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a labeled/unlabeled split.
    Split {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a planted-partition bundle.
    Synth(SynthArgs),
    /// Fit the linearized two-layer surrogate.
    TrainSurrogate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 500)]
        max_epochs: usize,
        #[arg(long, default_value_t = 20)]
        patience: usize,
    },
    /// Attack one target node.
    Attack(AttackArgs),
    /// Score targets with a GCN trained on the clean or on the perturbed graph.
    Evaluate(EvaluateArgs),
    /// Run a full experiment plan.
    Experiment {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a results table from an experiment directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "3")]
        table: String,
        #[arg(long, default_value_t = 0.004)]
        tau: f64,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 200)]
    features: usize,
    #[arg(long, default_value_t = 5.0)]
    mean_degree: f64,
    #[arg(long, default_value_t = 0.85)]
    homophily: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Direct,
    Influencer,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineArg {
    Rnd,
    Fgsm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScoringArg {
    Exact,
    Gradient,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Checked against the graph; a warning is logged for training targets.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    target: usize,
    /// Defaults to the target degree plus two.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_enum, default_value = "direct")]
    mode: ModeArg,
    /// Comma-separated attacker nodes for influencer mode.
    #[arg(long, value_delimiter = ',')]
    attackers: Vec<usize>,
    /// Number of attackers to draw when none are given.
    #[arg(long, default_value_t = 5)]
    influencers: usize,
    #[arg(long, conflicts_with = "features_only")]
    structure_only: bool,
    #[arg(long)]
    features_only: bool,
    #[arg(long)]
    unconstrained: bool,
    #[arg(long, default_value_t = 2)]
    d_min: usize,
    #[arg(long, default_value_t = 0.004)]
    tau: f64,
    /// Use the alternative sign convention in the power-law log-likelihood.
    #[arg(long, alias = "eq7-as-printed")]
    printed_loglik_signs: bool,
    #[arg(long, value_enum, default_value = "exact")]
    feature_scoring: ScoringArg,
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the perturbed graph as a bundle.
    #[arg(long)]
    graph_out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalModeArg {
    Evasion,
    Poisoning,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Comma-separated node ids, or a file of ids.
    #[arg(long)]
    targets: String,
    #[arg(long, value_enum)]
    mode: EvalModeArg,
    /// Attack results whose perturbations are applied to the graph.
    #[arg(long)]
    perturbations: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_split(path: &Path, g: &AttributedGraph) -> Result<DataSplit> {
    let split: DataSplit = read_json(path)?;
    if split.n_nodes() != g.n_nodes() {
        bail!("split {} covers {} nodes, graph has {}", path.display(), split.n_nodes(), g.n_nodes());
    }
    Ok(split)
}

fn parse_targets(spec: &str) -> Result<Vec<usize>> {
    let path = Path::new(spec);
    let text = if path.is_file() {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    } else {
        spec.to_string()
    };
    let ids: Vec<usize> = text
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().with_context(|| format!("bad target id {s:?}")))
        .collect::<Result<_>>()?;
    if ids.is_empty() {
        bail!("no targets given");
    }
    Ok(ids)
}

fn read_perturbations(path: &Path) -> Result<Vec<Perturbation>> {
    let mut value: serde_json::Value = read_json(path)?;
    let log = value
        .get_mut("result")
        .and_then(|r| r.get_mut("perturbations"))
        .map(serde_json::Value::take)
        .with_context(|| format!("{} holds no perturbation log", path.display()))?;
    Ok(serde_json::from_value(log)?)
}

fn attack(args: AttackArgs) -> Result<()> {
    let g = load_bundle(&args.graph)?;
    let model: SurrogateModel = read_json(&args.model)?;
    if model.n_features != g.n_features() || model.n_classes != g.n_classes() {
        bail!("model shape does not match the graph");
    }
    if let Some(path) = &args.split {
        let split = read_split(path, &g)?;
        if split.train.contains(&args.target) {
            log::warn!("target {} is a training node", args.target);
        }
    }
    if args.target >= g.n_nodes() {
        bail!("target {} outside a graph of {} nodes", args.target, g.n_nodes());
    }
    let budget = args.budget.unwrap_or(g.deg(args.target) + 2);
    let mut cfg = match args.mode {
        ModeArg::Direct => AttackConfig::direct(args.target, budget),
        ModeArg::Influencer => {
            let attackers = if args.attackers.is_empty() {
                select_influencers(&g, args.target, args.influencers, args.seed)?
            } else {
                args.attackers.clone()
            };
            AttackConfig::influencer(args.target, attackers, budget)
        }
    };
    if args.structure_only {
        cfg = cfg.structure_only();
    }
    if args.features_only {
        cfg = cfg.features_only();
    }
    if args.unconstrained {
        cfg = cfg.unconstrained();
    }
    cfg.degree_test = DegreeTestConfig {
        d_min: args.d_min,
        tau: args.tau,
        form: if args.printed_loglik_signs {
            LogLikForm::PrintedSigns
        } else {
            LogLikForm::Standard
        },
    };
    cfg.feature_scoring = match args.feature_scoring {
        ScoringArg::Exact => FeatureScoring::Exact,
        ScoringArg::Gradient => FeatureScoring::Gradient,
    };
    cfg.seed = args.seed;
    let (method, result) = match args.baseline {
        None => ("nettack", run_nettack(&g, &model, &cfg)?),
        Some(BaselineArg::Rnd) => ("rnd", rnd_baseline(&g, &model, &cfg)?),
        Some(BaselineArg::Fgsm) => ("fgsm", fgsm_baseline(&g, &model, &cfg)?),
    };
    if result.starved {
        log::warn!("only {} of {} perturbations were possible", result.perturbations.len(), budget);
    }
    let audit = replay_constraints(&g, &result.perturbations, &cfg.degree_test)?;
    if let Some(dir) = &args.graph_out {
        save_bundle(&apply_perturbations(&g, &result.perturbations)?, dir)?;
    }
    write_json(
        &args.out,
        &json!({ "method": method, "config": cfg, "result": result, "constraint_audit": audit }),
    )
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let clean = load_bundle(&args.graph)?;
    let split = read_split(&args.split, &clean)?;
    let targets = parse_targets(&args.targets)?;
    let mut log = Vec::new();
    for path in &args.perturbations {
        log.extend(read_perturbations(path)?);
    }
    let attacked = apply_perturbations(&clean, &log)?;
    let cfg = GcnConfig::default();
    let report = match args.mode {
        EvalModeArg::Evasion => {
            let (model, _) = train_gcn(&clean, &split, args.seed, &cfg)?;
            evasion_eval(&model, &attacked, &targets)?
        }
        EvalModeArg::Poisoning => poisoning_eval(&attacked, &split, &targets, args.runs, args.seed, &cfg)?,
    };
    write_json(&args.out, &report)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Convert { input, out } => {
            let (g, report) = load_bundle_with_report(&input)?;
            save_bundle(&g, &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Lcc { input, out } => {
            let g = load_bundle(&input)?;
            let (sub, mapping) = extract_lcc(&g)?;
            save_bundle(&sub, &out)?;
            let mut text = String::from("new_id\toriginal_id\n");
            for (new, old) in mapping.iter().enumerate() {
                text.push_str(&format!("{new}\t{old}\n"));
            }
            fs::write(out.join("mapping.tsv"), text)?;
            log::info!("kept {} of {} nodes", sub.n_nodes(), g.n_nodes());
        }
        Command::Split { graph, seed, out } => {
            let g = load_bundle(&graph)?;
            write_json(&out, &make_split(&g, seed)?)?;
        }
        Command::Synth(a) => {
            let g = PlantedPartition {
                n_nodes: a.nodes,
                n_classes: a.classes,
                n_features: a.features,
                mean_degree: a.mean_degree,
                homophily: a.homophily,
                seed: a.seed,
                ..Default::default()
            }
            .generate()?;
            save_bundle(&g, &a.out)?;
        }
        Command::TrainSurrogate {
            graph,
            split,
            out,
            lr,
            max_epochs,
            patience,
        } => {
            let g = load_bundle(&graph)?;
            let split = read_split(&split, &g)?;
            let cfg = SurrogateConfig {
                learning_rate: lr,
                max_epochs,
                patience,
            };
            let (model, report) = train_surrogate(&g, &NormalizedAdjacency::build(&g), &split, &cfg)?;
            log::info!(
                "surrogate stopped after {} epochs, best epoch {}",
                report.epochs_run,
                report.best_epoch
            );
            write_json(&out, &model)?;
        }
        Command::Attack(args) => attack(args)?,
        Command::Evaluate(args) => evaluate(args)?,
        Command::Experiment { plan, out } => {
            let plan = ExperimentPlan::load(&plan)?;
            let summary = run_experiment(&plan, &out)?;
            log::info!("{} runs, {} failed", summary.runs, summary.failed);
        }
        Command::Report { input, table, tau } => {
            let text = match table.as_str() {
                "3" => table_csv(&input, tau)?,
                "degree-buckets" => to_csv(&degree_bucket_report(&read_results(&input)?))?,
                other => bail!("unknown table {other:?}; expected 3 or degree-buckets"),
            };
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run(Cli::parse())
}

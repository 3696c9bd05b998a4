//! End-to-end experiments: splits, target selection, attacks, victim
//! evaluation and report files.

mod limited;
mod report;
mod targets;

pub use limited::{lift_perturbations, limited_knowledge_subgraph, DEFAULT_FRACTIONS};
pub use report::{
    degree_bucket_report, read_results, summarize, table_csv, to_csv, BucketRow, ResultRow, SummaryRow,
    DEGREE_BUCKETS,
};
pub use targets::{select_targets, TargetGroup, TargetRule, TargetSelection};

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{
    apply_perturbations, fgsm_baseline, rnd_baseline, run_nettack_with, select_influencers, AttackConfig,
    AttackResult,
};
use crate::dataset::{self, extract_lcc, make_split, DataSplit, PlantedPartition};
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::normalized::NormalizedAdjacency;
use crate::surrogate::{train_surrogate, SurrogateConfig, SurrogateModel};
use crate::unnoticeability::{CooccurrenceIndex, DegreeTestConfig};
use crate::victim::{margin, poisoning_eval, train_gcn, GcnConfig, GcnModel, TargetMargin};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const BUCKETS_FILE: &str = "degree_buckets.csv";
pub const TRACES_FILE: &str = "traces.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUNS_DIR: &str = "runs";
/// Attack name used for the unperturbed reference rows.
pub const CLEAN: &str = "clean";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Direct greedy attack on structure and features, constrained.
    Nettack,
    /// Greedy attack through neighboring attacker nodes.
    NettackIn,
    /// Random cross-class edge insertions.
    Rnd,
    /// Gradient-sign flips on the target's edges and features.
    Fgsm,
    /// Direct greedy attack without the unnoticeability tests.
    NettackU,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] = [
        AttackKind::Nettack,
        AttackKind::NettackIn,
        AttackKind::Rnd,
        AttackKind::Fgsm,
        AttackKind::NettackU,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Nettack => "nettack",
            AttackKind::NettackIn => "nettack_in",
            AttackKind::Rnd => "rnd",
            AttackKind::Fgsm => "fgsm",
            AttackKind::NettackU => "nettack_u",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Directory holding an on-disk bundle.
    Bundle(PathBuf),
    Synthetic(PlantedPartition),
}

fn default_split_seeds() -> Vec<u64> {
    (1..=5).collect()
}

fn default_attacks() -> Vec<AttackKind> {
    AttackKind::ALL.to_vec()
}

const fn default_true() -> bool {
    true
}

const fn default_budget_offset() -> usize {
    2
}

const fn default_influencers() -> usize {
    5
}

const fn default_runs() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub dataset: DatasetSource,
    #[serde(default = "default_true")]
    pub largest_component: bool,
    #[serde(default = "default_split_seeds")]
    pub split_seeds: Vec<u64>,
    #[serde(default)]
    pub targets: TargetRule,
    /// Budget per target is its clean degree plus this offset.
    #[serde(default = "default_budget_offset")]
    pub budget_offset: usize,
    #[serde(default = "default_attacks")]
    pub attacks: Vec<AttackKind>,
    #[serde(default = "default_influencers")]
    pub influencers: usize,
    #[serde(default)]
    pub degree_test: DegreeTestConfig,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub victim: GcnConfig,
    #[serde(default = "default_runs")]
    pub poisoning_runs: usize,
    #[serde(default = "default_true")]
    pub poisoning: bool,
    /// Observed fractions for direct attacks with limited knowledge; none by
    /// default.
    #[serde(default)]
    pub knowledge_fractions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentPlan {
    pub fn new(dataset: DatasetSource) -> Self {
        ExperimentPlan {
            dataset,
            largest_component: true,
            split_seeds: default_split_seeds(),
            targets: TargetRule::default(),
            budget_offset: 2,
            attacks: default_attacks(),
            influencers: 5,
            degree_test: DegreeTestConfig::default(),
            surrogate: SurrogateConfig::default(),
            victim: GcnConfig::default(),
            poisoning_runs: 10,
            poisoning: true,
            knowledge_fractions: Vec::new(),
            output: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn validate(&self) -> Result<()> {
        if self.split_seeds.is_empty() {
            return Err(Error::InvalidConfig("plan has no split seeds".into()));
        }
        if self.poisoning && self.poisoning_runs == 0 {
            return Err(Error::InvalidConfig("poisoning needs at least one run".into()));
        }
        if let Some(f) = self.knowledge_fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::InvalidConfig(format!("knowledge fraction {f} outside (0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub runs: usize,
    pub failed: usize,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug, Clone, Serialize)]
struct RunRecord<'a> {
    row: &'a ResultRow,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attack: Option<&'a AttackResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    poisoning: Option<&'a TargetMargin>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    plan: &'a ExperimentPlan,
    plan_sha256: String,
    input_sha256: String,
    graph: GraphStats,
    runs: Vec<ManifestRun<'a>>,
}

#[derive(Debug, Serialize)]
struct GraphStats {
    nodes: usize,
    edges: usize,
    features: usize,
    classes: usize,
}

#[derive(Debug, Serialize)]
struct ManifestRun<'a> {
    run_id: &'a str,
    split_seed: u64,
    status: &'a str,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads the plan's graph and a content hash of its inputs.
pub fn load_dataset(source: &DatasetSource, largest_component: bool) -> Result<(AttributedGraph, String)> {
    let (g, hash) = match source {
        DatasetSource::Bundle(dir) => {
            let mut h = Sha256::new();
            for name in [dataset::META_FILE, dataset::EDGES_FILE, dataset::FEATURES_FILE, dataset::LABELS_FILE] {
                let path = dir.join(name);
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                h.update(name.as_bytes());
                h.update((bytes.len() as u64).to_le_bytes());
                h.update(&bytes);
            }
            let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
            (dataset::load_bundle(dir)?, hash)
        }
        DatasetSource::Synthetic(pp) => (pp.generate()?, sha256_hex(&serde_json::to_vec(pp)?)),
    };
    if largest_component {
        let (lcc, _) = extract_lcc(&g)?;
        Ok((lcc, hash))
    } else {
        Ok((g, hash))
    }
}

/// Worker count from `NETTACK_WORKERS`, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var("NETTACK_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
}

fn evaluation_seed(split_seed: u64) -> u64 {
    split_seed.wrapping_mul(1_000_003)
}

fn attack_seed(split_seed: u64, target: usize) -> u64 {
    split_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ target as u64
}

/// Shared, read-only state for the jobs of one split.
struct SplitContext<'a> {
    plan: &'a ExperimentPlan,
    g: &'a AttributedGraph,
    index: &'a CooccurrenceIndex,
    split: DataSplit,
    seed: u64,
    surrogate: SurrogateModel,
    clean_model: GcnModel,
    clean_poisoning: Vec<Option<TargetMargin>>,
}

#[derive(Debug, Clone, Copy)]
enum JobKind {
    Clean,
    Attack(AttackKind),
    Limited(f64),
}

struct Job {
    kind: JobKind,
    slot: usize,
    target: usize,
    group: TargetGroup,
}

struct JobOutput {
    row: ResultRow,
    error: Option<String>,
    attack: Option<AttackResult>,
    poisoning: Option<TargetMargin>,
}

impl SplitContext<'_> {
    fn attack_config(&self, kind: AttackKind, target: usize, budget: usize) -> Result<AttackConfig> {
        let mut cfg = match kind {
            AttackKind::NettackIn => {
                let attackers =
                    select_influencers(self.g, target, self.plan.influencers, attack_seed(self.seed, target))?;
                if attackers.is_empty() {
                    return Err(Error::InvalidConfig(format!("target {target} has no attacker candidates")));
                }
                AttackConfig::influencer(target, attackers, budget)
            }
            _ => AttackConfig::direct(target, budget),
        };
        cfg.constrained = kind != AttackKind::NettackU;
        cfg.degree_test = self.plan.degree_test.clone();
        cfg.seed = attack_seed(self.seed, target);
        Ok(cfg)
    }

    fn run_attack(&self, kind: JobKind, target: usize, budget: usize) -> Result<(AttackResult, AttributedGraph)> {
        let g = self.g;
        match kind {
            JobKind::Attack(k) => {
                let cfg = self.attack_config(k, target, budget)?;
                let result = match k {
                    AttackKind::Rnd => rnd_baseline(g, &self.surrogate, &cfg)?,
                    AttackKind::Fgsm => fgsm_baseline(g, &self.surrogate, &cfg)?,
                    _ => run_nettack_with(g, &self.surrogate, self.index, &cfg)?,
                };
                let attacked = apply_perturbations(g, &result.perturbations)?;
                Ok((result, attacked))
            }
            JobKind::Limited(fraction) => {
                let (sub, mapping) = limited_knowledge_subgraph(g, target, fraction)?;
                let local = mapping.binary_search(&target).expect("target is in its own ball");
                let mut cfg = self.attack_config(AttackKind::Nettack, local, budget)?;
                cfg.class = g.label(target);
                let sub_index = CooccurrenceIndex::build(&sub);
                let mut result = run_nettack_with(&sub, &self.surrogate, &sub_index, &cfg)?;
                result.perturbations = lift_perturbations(&result.perturbations, &mapping)?;
                result.target = target;
                let attacked = apply_perturbations(g, &result.perturbations)?;
                Ok((result, attacked))
            }
            JobKind::Clean => unreachable!("clean rows have no attack"),
        }
    }

    fn run_job(&self, job: &Job) -> JobOutput {
        let g = self.g;
        let v0 = job.target;
        let degree = g.deg(v0);
        let budget = degree + self.plan.budget_offset;
        let (attack, fraction) = match job.kind {
            JobKind::Clean => (CLEAN.to_string(), None),
            JobKind::Attack(k) => (k.name().to_string(), None),
            JobKind::Limited(f) => (format!("nettack_limited_{f}"), Some(f)),
        };
        let class = g.label(v0).expect("targets are labeled");
        let clean_evasion = margin(&self.clean_model, g, v0, class).ok();
        let clean_p = self.clean_poisoning[job.slot].as_ref();
        let mut row = ResultRow {
            run_id: format!("s{}-{}-{}", self.seed, attack, v0),
            split_seed: self.seed,
            attack,
            target: v0,
            group: format!("{:?}", job.group).to_lowercase(),
            degree,
            budget,
            knowledge_fraction: fraction,
            status: "ok".into(),
            n_perturbations: None,
            n_structure: None,
            n_features: None,
            starved: None,
            initial_loss: None,
            final_loss: None,
            steps_to_positive: None,
            final_lambda: None,
            clean_evasion_margin: clean_evasion,
            evasion_margin: None,
            clean_poisoning_margin: clean_p.map(|t| t.mean_margin),
            clean_poisoning_correct: clean_p.map(|t| t.fraction_correct),
            poisoning_margin: None,
            poisoning_correct: None,
        };
        if let JobKind::Clean = job.kind {
            row.n_perturbations = Some(0);
            row.evasion_margin = clean_evasion;
            row.poisoning_margin = row.clean_poisoning_margin;
            row.poisoning_correct = row.clean_poisoning_correct;
            return JobOutput {
                row,
                error: None,
                attack: None,
                poisoning: clean_p.cloned(),
            };
        }
        let outcome = (|| -> Result<(AttackResult, Option<TargetMargin>, f64)> {
            let (result, attacked) = self.run_attack(job.kind, v0, budget)?;
            let evasion = margin(&self.clean_model, &attacked, v0, class)?;
            let poisoning = if self.plan.poisoning {
                let report = poisoning_eval(
                    &attacked,
                    &self.split,
                    &[v0],
                    self.plan.poisoning_runs,
                    evaluation_seed(self.seed) + 1,
                    &self.plan.victim,
                )?;
                report.targets.into_iter().next()
            } else {
                None
            };
            Ok((result, poisoning, evasion))
        })();
        match outcome {
            Ok((result, poisoning, evasion)) => {
                row.n_perturbations = Some(result.perturbations.len());
                row.n_structure = Some(result.n_structure());
                row.n_features = Some(result.n_features());
                row.starved = Some(result.starved);
                row.initial_loss = Some(result.initial_loss);
                row.final_loss = Some(result.final_loss());
                row.steps_to_positive = result.steps_to_positive_loss();
                row.final_lambda = Some(result.final_lambda());
                row.evasion_margin = Some(evasion);
                row.poisoning_margin = poisoning.as_ref().map(|t| t.mean_margin);
                row.poisoning_correct = poisoning.as_ref().map(|t| t.fraction_correct);
                JobOutput {
                    row,
                    error: None,
                    attack: Some(result),
                    poisoning,
                }
            }
            Err(e) => {
                log::error!("run {} failed: {e}", row.run_id);
                row.status = "error".into();
                JobOutput {
                    row,
                    error: Some(e.to_string()),
                    attack: None,
                    poisoning: None,
                }
            }
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct TraceRow<'a> {
    run_id: &'a str,
    step: usize,
    loss: f64,
    lambda: Option<f64>,
}

fn run_split(
    plan: &ExperimentPlan,
    g: &AttributedGraph,
    index: &CooccurrenceIndex,
    seed: u64,
) -> Result<Vec<JobOutput>> {
    let split = make_split(g, seed)?;
    let na = NormalizedAdjacency::build(g);
    let (surrogate, report) = train_surrogate(g, &na, &split, &plan.surrogate)?;
    log::info!("split {seed}: surrogate trained for {} epochs", report.epochs_run);
    let selection = select_targets(&surrogate, g, &split, seed, &plan.targets)?;
    let targets = selection.all();
    let ids: Vec<usize> = targets.iter().map(|&(u, _)| u).collect();
    let (clean_model, _) = train_gcn(g, &split, evaluation_seed(seed), &plan.victim)?;
    let clean_poisoning = if plan.poisoning {
        poisoning_eval(g, &split, &ids, plan.poisoning_runs, evaluation_seed(seed) + 1, &plan.victim)?
            .targets
            .into_iter()
            .map(Some)
            .collect()
    } else {
        vec![None; ids.len()]
    };
    let ctx = SplitContext {
        plan,
        g,
        index,
        split,
        seed,
        surrogate,
        clean_model,
        clean_poisoning,
    };
    let kinds = std::iter::once(JobKind::Clean)
        .chain(plan.attacks.iter().map(|&k| JobKind::Attack(k)))
        .chain(plan.knowledge_fractions.iter().map(|&f| JobKind::Limited(f)));
    let jobs: Vec<Job> = kinds
        .flat_map(|kind| {
            targets.iter().enumerate().map(move |(slot, &(target, group))| Job {
                kind,
                slot,
                target,
                group,
            })
        })
        .collect();
    log::info!("split {seed}: {} targets, {} runs", ids.len(), jobs.len());
    Ok(jobs.par_iter().map(|job| ctx.run_job(job)).collect())
}

/// Runs every split of the plan and writes all artifacts into `out`.
/// A failing run is recorded and the remaining runs continue; a failing
/// split (for example one that cannot be trained) aborts.
pub fn run_experiment(plan: &ExperimentPlan, out: &Path) -> Result<ExperimentSummary> {
    plan.validate()?;
    let (g, input_sha256) = load_dataset(&plan.dataset, plan.largest_component)?;
    let index = CooccurrenceIndex::build(&g);
    let work = || -> Result<Vec<JobOutput>> {
        let mut all = Vec::new();
        for &seed in &plan.split_seeds {
            all.extend(run_split(plan, &g, &index, seed)?);
        }
        Ok(all)
    };
    let outputs = match workers_from_env() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(work)?,
        None => work()?,
    };

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut traces = Vec::new();
    for o in &outputs {
        let record = RunRecord {
            row: &o.row,
            error: o.error.as_deref(),
            attack: o.attack.as_ref(),
            poisoning: o.poisoning.as_ref(),
        };
        let path = out
            .join(RUNS_DIR)
            .join(format!("s{}", o.row.split_seed))
            .join(&o.row.attack)
            .join(format!("{}.json", o.row.target));
        write_file(&path, pretty_json(&record)?)?;
        if let Some(a) = &o.attack {
            traces.push(TraceRow {
                run_id: &o.row.run_id,
                step: 0,
                loss: a.initial_loss,
                lambda: None,
            });
            for (i, (&loss, &lambda)) in a.loss_trace.iter().zip(&a.lambda_trace).enumerate() {
                traces.push(TraceRow {
                    run_id: &o.row.run_id,
                    step: i + 1,
                    loss,
                    lambda: Some(lambda),
                });
            }
        }
    }
    let rows: Vec<ResultRow> = outputs.iter().map(|o| o.row.clone()).collect();
    let summary = summarize(&rows, plan.degree_test.tau);
    write_file(&out.join(RESULTS_FILE), to_csv(&rows)?)?;
    write_file(&out.join(SUMMARY_FILE), to_csv(&summary)?)?;
    write_file(&out.join(BUCKETS_FILE), to_csv(&degree_bucket_report(&rows))?)?;
    write_file(&out.join(TRACES_FILE), to_csv(&traces)?)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        plan,
        plan_sha256: sha256_hex(&serde_json::to_vec(plan)?),
        input_sha256,
        graph: GraphStats {
            nodes: g.n_nodes(),
            edges: g.n_edges(),
            features: g.n_features(),
            classes: g.n_classes(),
        },
        runs: rows
            .iter()
            .map(|r| ManifestRun {
                run_id: &r.run_id,
                split_seed: r.split_seed,
                status: &r.status,
            })
            .collect(),
    };
    write_file(&out.join(MANIFEST_FILE), pretty_json(&manifest)?)?;
    let failed = rows.iter().filter(|r| !r.ok()).count();
    Ok(ExperimentSummary {
        runs: rows.len(),
        failed,
        summary,
    })
}

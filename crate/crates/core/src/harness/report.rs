use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of `results.csv`: a single (split, attack, target) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub split_seed: u64,
    pub attack: String,
    pub target: usize,
    pub group: String,
    pub degree: usize,
    pub budget: usize,
    pub knowledge_fraction: Option<f64>,
    pub status: String,
    pub n_perturbations: Option<usize>,
    pub n_structure: Option<usize>,
    pub n_features: Option<usize>,
    pub starved: Option<bool>,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub steps_to_positive: Option<usize>,
    pub final_lambda: Option<f64>,
    pub clean_evasion_margin: Option<f64>,
    pub evasion_margin: Option<f64>,
    pub clean_poisoning_margin: Option<f64>,
    pub clean_poisoning_correct: Option<f64>,
    pub poisoning_margin: Option<f64>,
    pub poisoning_correct: Option<f64>,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Aggregate over all successful runs of one attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub attack: String,
    pub runs: usize,
    pub failed: usize,
    pub evasion_fraction_correct: Option<f64>,
    pub poisoning_fraction_correct: Option<f64>,
    pub evasion_mean_margin: Option<f64>,
    pub poisoning_mean_margin: Option<f64>,
    pub mean_perturbations: Option<f64>,
    /// Mean number of perturbations until the surrogate loss turned positive,
    /// over the runs where it did.
    pub mean_steps_to_positive: Option<f64>,
    pub reached_positive: usize,
    pub final_lambda_above_tau: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Attack names in first-seen order.
fn attack_order(rows: &[ResultRow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r.attack) {
            out.push(r.attack.clone());
        }
    }
    out
}

/// Per-attack fractions of correctly classified targets and margins. Evasion
/// correctness is the sign of the margin; poisoning correctness is averaged
/// over the retrained models first.
pub fn summarize(rows: &[ResultRow], tau: f64) -> Vec<SummaryRow> {
    attack_order(rows)
        .into_iter()
        .map(|attack| {
            let all: Vec<&ResultRow> = rows.iter().filter(|r| r.attack == attack).collect();
            let ok: Vec<&ResultRow> = all.iter().copied().filter(|r| r.ok()).collect();
            let steps: Vec<f64> = ok.iter().filter_map(|r| r.steps_to_positive).map(|s| s as f64).collect();
            SummaryRow {
                runs: ok.len(),
                failed: all.len() - ok.len(),
                evasion_fraction_correct: mean(
                    ok.iter().filter_map(|r| r.evasion_margin).map(|m| (m > 0.0) as u8 as f64),
                ),
                poisoning_fraction_correct: mean(ok.iter().filter_map(|r| r.poisoning_correct)),
                evasion_mean_margin: mean(ok.iter().filter_map(|r| r.evasion_margin)),
                poisoning_mean_margin: mean(ok.iter().filter_map(|r| r.poisoning_margin)),
                mean_perturbations: mean(ok.iter().filter_map(|r| r.n_perturbations).map(|n| n as f64)),
                mean_steps_to_positive: mean(steps.iter().copied()),
                reached_positive: steps.len(),
                final_lambda_above_tau: ok.iter().filter(|r| r.final_lambda.is_some_and(|l| l >= tau)).count(),
                attack,
            }
        })
        .collect()
}

/// Degree ranges used to break results down by target degree.
pub const DEGREE_BUCKETS: [(usize, Option<usize>); 5] =
    [(1, Some(5)), (6, Some(10)), (11, Some(20)), (21, Some(100)), (101, None)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub attack: String,
    pub bucket: String,
    pub targets: usize,
    pub clean_evasion: Option<f64>,
    pub attacked_evasion: Option<f64>,
    pub clean_poisoning: Option<f64>,
    pub attacked_poisoning: Option<f64>,
}

fn bucket_label(lo: usize, hi: Option<usize>) -> String {
    match hi {
        Some(hi) => format!("[{lo};{hi}]"),
        None => format!("[{lo};inf)"),
    }
}

/// Fraction of correctly classified targets per degree bucket, clean versus
/// attacked, for every attack. Empty buckets are left out.
pub fn degree_bucket_report(rows: &[ResultRow]) -> Vec<BucketRow> {
    let sign = |m: f64| (m > 0.0) as u8 as f64;
    let mut out = Vec::new();
    for attack in attack_order(rows) {
        if attack == super::CLEAN {
            continue;
        }
        for (lo, hi) in DEGREE_BUCKETS {
            let inside: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.attack == attack && r.ok())
                .filter(|r| r.degree >= lo && hi.is_none_or(|h| r.degree <= h))
                .collect();
            if inside.is_empty() {
                continue;
            }
            out.push(BucketRow {
                attack: attack.clone(),
                bucket: bucket_label(lo, hi),
                targets: inside.len(),
                clean_evasion: mean(inside.iter().filter_map(|r| r.clean_evasion_margin).map(sign)),
                attacked_evasion: mean(inside.iter().filter_map(|r| r.evasion_margin).map(sign)),
                clean_poisoning: mean(inside.iter().filter_map(|r| r.clean_poisoning_correct)),
                attacked_poisoning: mean(inside.iter().filter_map(|r| r.poisoning_correct)),
            });
        }
    }
    out
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidConfig(e.to_string()))
}

pub fn read_results(dir: &Path) -> Result<Vec<ResultRow>> {
    let path = dir.join(super::RESULTS_FILE);
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Table of fraction-correct per attack, rows in the order attacks appear.
pub fn table_csv(dir: &Path, tau: f64) -> Result<String> {
    to_csv(&summarize(&read_results(dir)?, tau))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(attack: &str, degree: usize, evasion: f64, poisoning: f64) -> ResultRow {
        ResultRow {
            run_id: format!("{attack}-{degree}"),
            split_seed: 1,
            attack: attack.into(),
            target: degree,
            group: "random".into(),
            degree,
            budget: degree + 2,
            knowledge_fraction: None,
            status: "ok".into(),
            n_perturbations: Some(degree + 2),
            n_structure: Some(1),
            n_features: Some(degree + 1),
            starved: Some(false),
            initial_loss: Some(-1.0),
            final_loss: Some(0.5),
            steps_to_positive: Some(2),
            final_lambda: Some(0.001),
            clean_evasion_margin: Some(0.5),
            evasion_margin: Some(evasion),
            clean_poisoning_margin: Some(0.5),
            clean_poisoning_correct: Some(1.0),
            poisoning_margin: Some(poisoning),
            poisoning_correct: Some((poisoning > 0.0) as u8 as f64),
        }
    }

    #[test]
    fn buckets_and_summary() {
        let rows = vec![
            row("nettack", 3, -0.5, -0.4),
            row("nettack", 4, 0.2, 0.1),
            row("nettack", 150, -0.1, -0.2),
            row("rnd", 7, 0.3, 0.3),
        ];
        let b = degree_bucket_report(&rows);
        assert_eq!(b.len(), 3);
        assert_eq!(b[0].bucket, "[1;5]");
        assert_eq!(b[0].targets, 2);
        assert_eq!(b[0].attacked_evasion, Some(0.5));
        assert_eq!(b[1].bucket, "[101;inf)");
        assert_eq!(b[2].attack, "rnd");
        assert!(b.iter().all(|r| r.attacked_poisoning <= r.clean_poisoning));
        let s = summarize(&rows, 0.004);
        assert_eq!(s[0].attack, "nettack");
        assert_eq!(s[0].runs, 3);
        assert!((s[0].poisoning_fraction_correct.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s[0].mean_steps_to_positive, Some(2.0));
    }

    #[test]
    fn csv_round_trip() {
        let mut rows = vec![row("nettack", 3, -0.5, -0.4)];
        rows[0].steps_to_positive = None;
        rows[0].knowledge_fraction = Some(0.25);
        let text = to_csv(&rows).unwrap();
        let back: Vec<ResultRow> = csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        assert_eq!(back, rows);
    }
}

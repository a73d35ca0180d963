//! Scoring of model predictions against gold labels: confusion matrix,
//! per-label precision/recall/F1, macro averages, accuracy, and markdown
//! rendering of the overall and label-by-label tables.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{EntailmentLabel, GoldLabel, Outcome, Prediction};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("prediction for pair {0:?} has no gold label")]
    MissingGold(String),
    #[error("pair {0:?} has more than one prediction")]
    DuplicatePrediction(String),
    #[error("pair {0:?} has more than one gold label")]
    DuplicateGold(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    /// Tied gold pairs are left out and counted in `n_excluded_ties`.
    #[default]
    Exclude,
    /// A prediction matching any tied label is scored as correct.
    CreditEither,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnparseablePolicy {
    /// Counted against the gold row with no diagonal credit.
    #[default]
    CountWrong,
    Exclude,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringPolicy {
    pub ties: TiePolicy,
    pub unparseable: UnparseablePolicy,
}

/// Counts indexed `[gold][predicted]` in canonical label order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
    /// Unparseable predictions kept in scoring, by gold label.
    pub unparseable_by_gold: [u64; 3],
    /// All unparseable predictions seen, scored or not.
    pub unparseable_count: u64,
    pub n_excluded_ties: u64,
}

impl ConfusionMatrix {
    /// Builds a matrix directly from aligned gold/predicted labels. `None`
    /// predictions are unparseable and handled per `policy`.
    pub fn from_labels(
        gold: &[EntailmentLabel],
        pred: &[Option<EntailmentLabel>],
        policy: UnparseablePolicy,
    ) -> Self {
        assert_eq!(gold.len(), pred.len(), "gold and predictions must align");
        let mut matrix = ConfusionMatrix::default();
        for (&g, &p) in gold.iter().zip(pred) {
            matrix.record(g, p, policy);
        }
        matrix
    }

    fn record(
        &mut self,
        gold: EntailmentLabel,
        pred: Option<EntailmentLabel>,
        policy: UnparseablePolicy,
    ) {
        match pred {
            Some(p) => self.counts[gold.index()][p.index()] += 1,
            None => {
                self.unparseable_count += 1;
                if policy == UnparseablePolicy::CountWrong {
                    self.unparseable_by_gold[gold.index()] += 1;
                }
            }
        }
    }

    pub fn n_scored(&self) -> u64 {
        self.counts.iter().flatten().sum::<u64>() + self.unparseable_by_gold.iter().sum::<u64>()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn true_positives(&self, label: EntailmentLabel) -> u64 {
        let i = label.index();
        self.counts[i][i]
    }

    pub fn false_positives(&self, label: EntailmentLabel) -> u64 {
        let i = label.index();
        (0..3).filter(|&g| g != i).map(|g| self.counts[g][i]).sum()
    }

    pub fn false_negatives(&self, label: EntailmentLabel) -> u64 {
        let i = label.index();
        let row: u64 = self.counts[i].iter().sum::<u64>() + self.unparseable_by_gold[i];
        row - self.counts[i][i]
    }
}

/// Joins predictions to gold labels by pair id and tallies the matrix.
/// Gold pairs without a prediction are not scored.
pub fn confusion_matrix(
    gold: &[GoldLabel],
    predictions: &[Prediction],
    policy: ScoringPolicy,
) -> Result<ConfusionMatrix, EvalError> {
    let mut gold_by_pair: HashMap<&str, &Outcome> = HashMap::with_capacity(gold.len());
    for g in gold {
        if gold_by_pair
            .insert(g.pair_id.as_str(), &g.outcome)
            .is_some()
        {
            return Err(EvalError::DuplicateGold(g.pair_id.clone()));
        }
    }
    let mut seen = std::collections::HashSet::with_capacity(predictions.len());
    let mut matrix = ConfusionMatrix::default();
    for pred in predictions {
        if !seen.insert(pred.pair_id.as_str()) {
            return Err(EvalError::DuplicatePrediction(pred.pair_id.clone()));
        }
        let outcome = gold_by_pair
            .get(pred.pair_id.as_str())
            .ok_or_else(|| EvalError::MissingGold(pred.pair_id.clone()))?;
        match outcome {
            Outcome::Decided(g) => matrix.record(*g, pred.label, policy.unparseable),
            Outcome::Tie(tied) => match policy.ties {
                TiePolicy::Exclude => matrix.n_excluded_ties += 1,
                TiePolicy::CreditEither => {
                    let effective = match pred.label {
                        Some(p) if tied.contains(&p) => p,
                        _ => *tied.first().expect("ties carry labels"),
                    };
                    matrix.record(effective, pred.label, policy.unparseable);
                }
            },
        }
    }
    Ok(matrix)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn per_class_metrics(matrix: &ConfusionMatrix) -> BTreeMap<EntailmentLabel, ClassMetrics> {
    EntailmentLabel::ALL
        .into_iter()
        .map(|label| {
            let tp = matrix.true_positives(label);
            let precision = ratio(tp, tp + matrix.false_positives(label));
            let recall = ratio(tp, tp + matrix.false_negatives(label));
            (
                label,
                ClassMetrics {
                    precision,
                    recall,
                    f1: harmonic(precision, recall),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub accuracy: f64,
}

pub fn overall_metrics(matrix: &ConfusionMatrix) -> OverallMetrics {
    let per_class = per_class_metrics(matrix);
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.values().map(f).sum::<f64>() / 3.0;
    OverallMetrics {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        accuracy: ratio(matrix.trace(), matrix.n_scored()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: BTreeMap<EntailmentLabel, ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub accuracy: f64,
    pub n_scored: u64,
    pub n_excluded_ties: u64,
    pub n_unparseable: u64,
}

impl EvalReport {
    pub fn from_matrix(matrix: &ConfusionMatrix) -> Self {
        let overall = overall_metrics(matrix);
        Self {
            per_class: per_class_metrics(matrix),
            macro_precision: overall.macro_precision,
            macro_recall: overall.macro_recall,
            accuracy: overall.accuracy,
            n_scored: matrix.n_scored(),
            n_excluded_ties: matrix.n_excluded_ties,
            n_unparseable: matrix.unparseable_count,
        }
    }

    pub fn f1(&self, label: EntailmentLabel) -> f64 {
        self.per_class.get(&label).map_or(0.0, |m| m.f1)
    }
}

pub fn evaluate(
    gold: &[GoldLabel],
    predictions: &[Prediction],
    policy: ScoringPolicy,
) -> Result<EvalReport, EvalError> {
    confusion_matrix(gold, predictions, policy).map(|m| EvalReport::from_matrix(&m))
}

/// A report tagged with the model that produced the predictions and the
/// model that generated its fine-tuning data (`None` for a pre-trained model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    pub model: String,
    pub train_set_from: Option<String>,
    pub report: EvalReport,
}

/// Two decimals, half-up, without the leading zero: 0.725 -> ".73".
pub fn format_metric(value: f64) -> String {
    let hundredths = (value * 100.0 + 0.5 + 1e-9).floor() as i64;
    if hundredths >= 100 {
        format!("{}.{:02}", hundredths / 100, hundredths % 100)
    } else {
        format!(".{hundredths:02}")
    }
}

pub const REPORT_FOOTER: &str = "Precision and recall are macro-averaged over the three labels; \
accuracy is the fraction of all scored pairs predicted correctly.";

pub fn render_report(reports: &[NamedReport]) -> String {
    let mut out = String::new();
    out.push_str("### Overall performance\n\n");
    out.push_str("| Model | Train Set From | Precision | Recall | Accuracy |\n");
    out.push_str("|---|---|---:|---:|---:|\n");
    for named in reports {
        let r = &named.report;
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            named.model,
            named.train_set_from.as_deref().unwrap_or("---"),
            format_metric(r.macro_precision),
            format_metric(r.macro_recall),
            format_metric(r.accuracy),
        ));
    }
    out.push_str("\n### Label-by-label performance\n\n");
    out.push_str("| Model | Train Set From | F1 ENTAILMENT | F1 NEUTRAL | F1 CONTRADICTION |\n");
    out.push_str("|---|---|---:|---:|---:|\n");
    for named in reports {
        let r = &named.report;
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            named.model,
            named.train_set_from.as_deref().unwrap_or("---"),
            format_metric(r.f1(EntailmentLabel::Entailment)),
            format_metric(r.f1(EntailmentLabel::Neutral)),
            format_metric(r.f1(EntailmentLabel::Contradiction)),
        ));
    }
    out.push('\n');
    out.push_str(REPORT_FOOTER);
    out.push('\n');
    out
}

//! Majority-vote aggregation of annotator labels and the label distribution
//! table for an annotated test set.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{EntailmentLabel, GoldLabel, Outcome, VoteSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("pair {0:?} has no votes")]
    EmptyVotes(String),
}

/// Unique argmax of the vote counts, or the set of labels sharing the maximum.
pub fn aggregate_votes(vote_set: &VoteSet) -> Result<GoldLabel, AggregateError> {
    if vote_set.votes.is_empty() {
        return Err(AggregateError::EmptyVotes(vote_set.pair_id.clone()));
    }
    let mut counts = [0usize; 3];
    for vote in &vote_set.votes {
        counts[vote.label.index()] += 1;
    }
    let max = *counts.iter().max().expect("three counts");
    let leaders: BTreeSet<EntailmentLabel> = EntailmentLabel::ALL
        .into_iter()
        .filter(|label| counts[label.index()] == max)
        .collect();
    let outcome = if leaders.len() == 1 {
        Outcome::Decided(*leaders.first().expect("one leader"))
    } else {
        Outcome::Tie(leaders)
    };
    Ok(GoldLabel {
        pair_id: vote_set.pair_id.clone(),
        outcome,
    })
}

pub fn aggregate_all(vote_sets: &[VoteSet]) -> Result<Vec<GoldLabel>, AggregateError> {
    vote_sets.iter().map(aggregate_votes).collect()
}

pub const TWO_WAY_TIES: &str = "(Two-way ties)";
pub const THREE_WAY_TIES: &str = "(Three-way ties)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub label: String,
    pub count: usize,
    /// Percentage in tenths of a percent, rounded half-up.
    pub tenths: u64,
}

impl DistributionRow {
    pub fn percentage(&self) -> f64 {
        self.tenths as f64 / 10.0
    }

    pub fn rendered_percentage(&self) -> String {
        format!("{}.{}%", self.tenths / 10, self.tenths % 10)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub rows: Vec<DistributionRow>,
    pub total: usize,
}

/// `count / total` as tenths of a percent, half-up, in exact integer arithmetic.
pub fn percent_tenths(count: usize, total: usize) -> u64 {
    if total == 0 {
        return 0;
    }
    let (count, total) = (count as u64, total as u64);
    (count * 2000 + total) / (2 * total)
}

pub fn distribution_report(gold_labels: &[GoldLabel]) -> DistributionReport {
    let mut decided = [0usize; 3];
    let mut two_way = 0;
    let mut three_way = 0;
    for gold in gold_labels {
        match &gold.outcome {
            Outcome::Decided(label) => decided[label.index()] += 1,
            Outcome::Tie(labels) if labels.len() >= 3 => three_way += 1,
            Outcome::Tie(_) => two_way += 1,
        }
    }
    let total = gold_labels.len();
    let row = |label: &str, count: usize| DistributionRow {
        label: label.to_string(),
        count,
        tenths: percent_tenths(count, total),
    };
    let mut rows: Vec<_> = EntailmentLabel::ALL
        .into_iter()
        .map(|label| row(label.as_str(), decided[label.index()]))
        .collect();
    rows.push(row(TWO_WAY_TIES, two_way));
    if three_way > 0 {
        rows.push(row(THREE_WAY_TIES, three_way));
    }
    DistributionReport { rows, total }
}

impl DistributionReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Label | Count | Percentage |\n|---|---:|---:|\n");
        for row in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {} |\n",
                row.label,
                row.count,
                row.rendered_percentage()
            ));
        }
        let total_pct = if self.total == 0 { "0.0%" } else { "100.0%" };
        out.push_str(&format!("| TOTAL | {} | {} |\n", self.total, total_pct));
        out
    }
}

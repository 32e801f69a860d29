//! Entity-level precision, recall and F1 with exact span and label matching.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::corpus::{tags_to_chunks, LabeledChunk, TagScheme};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Counts {
    /// Precision in percent; 0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        percent(self.true_positives, self.predicted)
    }

    /// Recall in percent; 0 when there is no gold chunk.
    pub fn recall(&self) -> f64 {
        percent(self.true_positives, self.gold)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn add(&mut self, other: Counts) {
        self.true_positives += other.true_positives;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub per_label: BTreeMap<String, Counts>,
    pub overall: Counts,
}

impl EvalReport {
    pub fn precision(&self) -> f64 {
        self.overall.precision()
    }

    pub fn recall(&self) -> f64 {
        self.overall.recall()
    }

    pub fn f1(&self) -> f64 {
        self.overall.f1()
    }

    /// Aligned table, one row per label then `overall`, percentages to 2 places.
    ///
    /// ```text
    /// label      tp  pred  gold  precision  recall      f1
    /// LOC         1     1     1     100.00  100.00  100.00
    /// overall     1     1     1     100.00  100.00  100.00
    /// ```
    pub fn to_table(&self) -> String {
        let width = self.per_label.keys().map(|l| l.len()).chain([7]).max().unwrap_or(7);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$} {:>5} {:>5} {:>5} {:>10} {:>7} {:>7}",
            "label", "tp", "pred", "gold", "precision", "recall", "f1"
        );
        let rows = self.per_label.iter().map(|(l, c)| (l.as_str(), c)).chain([("overall", &self.overall)]);
        for (label, c) in rows {
            let _ = writeln!(
                out,
                "{label:<width$} {:>5} {:>5} {:>5} {:>10.2} {:>7.2} {:>7.2}",
                c.true_positives,
                c.predicted,
                c.gold,
                c.precision(),
                c.recall(),
                c.f1()
            );
        }
        out
    }

    /// `key=value` lines: `overall.f1=100.00`, `LOC.tp=1`, and so on.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let rows = [("overall", &self.overall)].into_iter().chain(self.per_label.iter().map(|(l, c)| (l.as_str(), c)));
        for (label, c) in rows {
            let _ = writeln!(out, "{label}.tp={}", c.true_positives);
            let _ = writeln!(out, "{label}.predicted={}", c.predicted);
            let _ = writeln!(out, "{label}.gold={}", c.gold);
            let _ = writeln!(out, "{label}.precision={:.2}", c.precision());
            let _ = writeln!(out, "{label}.recall={:.2}", c.recall());
            let _ = writeln!(out, "{label}.f1={:.2}", c.f1());
        }
        out
    }
}

/// Scores predicted chunks against gold, sentence by sentence.
pub fn evaluate(pred: &[Vec<LabeledChunk>], gold: &[Vec<LabeledChunk>]) -> Result<EvalReport> {
    if pred.len() != gold.len() {
        return Err(Error::Usage(format!("{} predicted sentences for {} gold", pred.len(), gold.len())));
    }
    let mut per_label: BTreeMap<String, Counts> = BTreeMap::new();
    for (p, g) in pred.iter().zip(gold) {
        let mut unmatched: BTreeSet<&LabeledChunk> = g.iter().collect();
        for c in g {
            per_label.entry(c.label.clone()).or_default().gold += 1;
        }
        for c in p {
            let entry = per_label.entry(c.label.clone()).or_default();
            entry.predicted += 1;
            if unmatched.remove(c) {
                entry.true_positives += 1;
            }
        }
    }
    let mut overall = Counts::default();
    for c in per_label.values() {
        overall.add(*c);
    }
    Ok(EvalReport { per_label, overall })
}

/// [`evaluate`] on chunks read from tag sequences valid under `scheme`.
pub fn evaluate_tags<S: AsRef<str>>(pred: &[Vec<S>], gold: &[Vec<S>], scheme: TagScheme) -> Result<EvalReport> {
    if pred.len() != gold.len() {
        return Err(Error::Usage(format!("{} predicted sentences for {} gold", pred.len(), gold.len())));
    }
    let read = |seqs: &[Vec<S>]| -> Result<Vec<Vec<LabeledChunk>>> {
        seqs.iter()
            .map(|s| {
                let tags: Vec<&str> = s.iter().map(|t| t.as_ref()).collect();
                tags_to_chunks(&tags, scheme)
            })
            .collect()
    };
    evaluate(&read(pred)?, &read(gold)?)
}

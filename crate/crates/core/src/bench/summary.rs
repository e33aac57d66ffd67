use std::collections::{BTreeMap, BTreeSet};

use crate::stats::{bonferroni, wilcoxon_signed_rank};

use super::{BenchError, EvaluationRecord};

/// Mean/std of one metric for one method within a group.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub n: usize,
    pub n_missing: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation (n - 1); 0 for a single value.
    pub std: Option<f64>,
    pub best: bool,
    /// `None` when the group has fewer than two methods or this method is
    /// not the best.
    pub significant: Option<bool>,
    /// Bonferroni-adjusted p-values against each other method, for the best
    /// method only.
    pub adjusted_p: BTreeMap<String, f64>,
}

/// One method within a (dataset, sequence, region) group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub sequence: String,
    pub region: String,
    pub method: String,
    pub dice: MetricSummary,
    pub hd95: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    /// True when some group compares at least two methods.
    pub has_significance: bool,
}

pub(crate) fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

type Scores = BTreeMap<String, BTreeMap<String, Option<f64>>>;

/// Per method: subject → value (None when missing).
fn summarize_metric(scores: &Scores, higher_is_better: bool, alpha: f64) -> Result<BTreeMap<String, MetricSummary>, BenchError> {
    let mut out: BTreeMap<String, MetricSummary> = scores
        .iter()
        .map(|(method, by_subject)| {
            let values: Vec<f64> = by_subject.values().flatten().copied().collect();
            let (mean, std) = mean_std(&values);
            let summary = MetricSummary {
                n: values.len(),
                n_missing: by_subject.len() - values.len(),
                mean,
                std,
                best: false,
                significant: None,
                adjusted_p: BTreeMap::new(),
            };
            (method.clone(), summary)
        })
        .collect();

    let means: Vec<(String, f64)> = out.iter().filter_map(|(m, s)| s.mean.map(|v| (m.clone(), v))).collect();
    let Some(best_value) = means
        .iter()
        .map(|(_, v)| *v)
        .reduce(|a, b| if higher_is_better { a.max(b) } else { a.min(b) })
    else {
        return Ok(out);
    };
    let best: Vec<String> = means.iter().filter(|(_, v)| *v == best_value).map(|(m, _)| m.clone()).collect();
    for m in &best {
        out.get_mut(m).expect("present").best = true;
    }
    if scores.len() < 2 {
        return Ok(out);
    }
    for b in &best {
        let others: Vec<&String> = scores.keys().filter(|m| *m != b).collect();
        let mut p_values = Vec::with_capacity(others.len());
        for other in &others {
            let (mut x, mut y) = (Vec::new(), Vec::new());
            for (subject, v) in &scores[b] {
                if let (Some(v), Some(Some(w))) = (v, scores[*other].get(subject)) {
                    x.push(*v);
                    y.push(*w);
                }
            }
            let p = if x.is_empty() { 1.0 } else { wilcoxon_signed_rank(&x, &y)?.p_value };
            p_values.push(p);
        }
        let decisions = bonferroni(&p_values, alpha);
        let entry = out.get_mut(b).expect("present");
        entry.significant = Some(decisions.iter().all(|d| d.significant));
        entry.adjusted_p = others
            .iter()
            .zip(&decisions)
            .map(|(m, d)| ((*m).clone(), d.adjusted_p))
            .collect();
    }
    Ok(out)
}

/// Groups records by (dataset, sequence, region) and summarises each method.
/// The best mean Dice (lowest mean HD95) is flagged; it is marked
/// significant when its paired Wilcoxon test against every other method is
/// significant after Bonferroni correction over those comparisons.
pub fn summarize(records: &[EvaluationRecord], alpha: f64) -> Result<SummaryTable, BenchError> {
    let mut groups: BTreeMap<(String, String, String), (Scores, Scores)> = BTreeMap::new();
    for r in records {
        let (dice, hd) = groups
            .entry((r.dataset.clone(), r.sequence.clone(), r.region.clone()))
            .or_default();
        dice.entry(r.method.clone()).or_default().insert(r.subject.clone(), r.dice);
        hd.entry(r.method.clone()).or_default().insert(r.subject.clone(), r.hd95_mm);
    }
    let mut table = SummaryTable::default();
    for ((dataset, sequence, region), (dice, hd)) in groups {
        table.has_significance |= dice.len() >= 2;
        let mut d = summarize_metric(&dice, true, alpha)?;
        let mut h = summarize_metric(&hd, false, alpha)?;
        let methods: BTreeSet<String> = dice.keys().cloned().collect();
        for method in methods {
            table.rows.push(SummaryRow {
                dataset: dataset.clone(),
                sequence: sequence.clone(),
                region: region.clone(),
                dice: d.remove(&method).expect("present"),
                hd95: h.remove(&method).expect("present"),
                method,
            });
        }
    }
    Ok(table)
}

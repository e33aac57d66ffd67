use std::collections::{BTreeMap, BTreeSet};

use crate::stats::{friedman, TestResult};

use super::{BenchError, EvaluationRecord};

/// Predicted volume (mL) of one region for one subject and method, per
/// sequence. Missing records and zero volumes are gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub region: String,
    pub method: String,
    pub subject: String,
    pub volumes: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FriedmanRow {
    pub region: String,
    pub method: String,
    /// "dice" or "volume".
    pub measure: &'static str,
    /// Subjects with a value for every sequence.
    pub n_subjects: usize,
    pub n_dropped: usize,
    /// `None` when fewer than two complete subjects remain.
    pub result: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatabilityReport {
    pub dataset: String,
    /// Sorted.
    pub sequences: Vec<String>,
    pub trajectories: Vec<Trajectory>,
    pub friedman: Vec<FriedmanRow>,
}

fn friedman_row(
    region: &str,
    method: &str,
    measure: &'static str,
    rows: &BTreeMap<String, Vec<Option<f64>>>,
) -> Result<FriedmanRow, BenchError> {
    let complete: Vec<Vec<f64>> = rows
        .values()
        .filter(|r| r.iter().all(Option::is_some))
        .map(|r| r.iter().map(|v| v.expect("complete")).collect())
        .collect();
    let result = if complete.len() >= 2 { Some(friedman(&complete)?) } else { None };
    Ok(FriedmanRow {
        region: region.to_string(),
        method: method.to_string(),
        measure,
        n_subjects: complete.len(),
        n_dropped: rows.len() - complete.len(),
        result,
    })
}

/// One report per dataset with at least two sequences.
pub fn repeatability_report(records: &[EvaluationRecord]) -> Result<Vec<RepeatabilityReport>, BenchError> {
    let mut datasets: BTreeMap<&str, Vec<&EvaluationRecord>> = BTreeMap::new();
    for r in records {
        datasets.entry(&r.dataset).or_default().push(r);
    }
    let mut reports = Vec::new();
    for (dataset, recs) in datasets {
        let sequences: Vec<String> = recs
            .iter()
            .map(|r| r.sequence.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if sequences.len() < 2 {
            continue;
        }
        let seq_index: BTreeMap<&str, usize> = sequences.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        type Grid = BTreeMap<(String, String), BTreeMap<String, Vec<Option<f64>>>>;
        let mut volumes: Grid = BTreeMap::new();
        let mut dice: Grid = BTreeMap::new();
        let subjects: BTreeSet<&str> = recs.iter().map(|r| r.subject.as_str()).collect();
        let keys: BTreeSet<(String, String)> = recs.iter().map(|r| (r.region.clone(), r.method.clone())).collect();
        for key in &keys {
            for s in &subjects {
                volumes.entry(key.clone()).or_default().insert(s.to_string(), vec![None; sequences.len()]);
                dice.entry(key.clone()).or_default().insert(s.to_string(), vec![None; sequences.len()]);
            }
        }
        for r in &recs {
            let key = (r.region.clone(), r.method.clone());
            let i = seq_index[r.sequence.as_str()];
            if r.pred_volume_ml > 0.0 {
                volumes.get_mut(&key).unwrap().get_mut(&r.subject).unwrap()[i] = Some(r.pred_volume_ml);
            }
            dice.get_mut(&key).unwrap().get_mut(&r.subject).unwrap()[i] = r.dice;
        }
        // Subjects with no record at all for a (region, method) are not plotted.
        let mut trajectories = Vec::new();
        let mut tests = Vec::new();
        for ((region, method), by_subject) in &mut volumes {
            let present: BTreeSet<&str> = recs
                .iter()
                .filter(|r| &r.region == region && &r.method == method)
                .map(|r| r.subject.as_str())
                .collect();
            by_subject.retain(|s, _| present.contains(s.as_str()));
            let d = dice.get_mut(&(region.clone(), method.clone())).unwrap();
            d.retain(|s, _| present.contains(s.as_str()));
            for (subject, v) in by_subject.iter() {
                trajectories.push(Trajectory {
                    region: region.clone(),
                    method: method.clone(),
                    subject: subject.clone(),
                    volumes: v.clone(),
                });
            }
            tests.push(friedman_row(region, method, "dice", d)?);
            tests.push(friedman_row(region, method, "volume", by_subject)?);
        }
        reports.push(RepeatabilityReport {
            dataset: dataset.to_string(),
            sequences,
            trajectories,
            friedman: tests,
        });
    }
    Ok(reports)
}

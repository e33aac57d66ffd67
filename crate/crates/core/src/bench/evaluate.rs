use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::metrics::RegionMetrics;
use crate::volume::{read_nifti, resample, Interpolation, LabelMap, SPACING_TOLERANCE};

use super::manifest::{Case, EvaluationPlan};
use super::{sort_records, BenchError, EvaluationRecord};

/// Rewrites mapped labels to their canonical ids; unmapped labels become
/// background.
pub fn harmonize_labels(labels: &LabelMap, mapping: &BTreeMap<u32, u32>) -> LabelMap {
    let max = labels.labels().iter().copied().max().unwrap_or(0) as usize;
    let mut lut = vec![0u32; max + 1];
    for (&src, &dst) in mapping.range(..=max as u32) {
        lut[src as usize] = dst;
    }
    let out = labels.labels().iter().map(|&l| lut[l as usize]).collect();
    LabelMap::new(labels.geometry().clone(), out).expect("same geometry")
}

/// Metrics for each canonical region in `regions`. `pred` is resampled onto
/// `gt`'s grid by nearest neighbour when the geometries differ.
pub fn evaluate_case(
    gt: &LabelMap,
    pred: &LabelMap,
    regions: &[u32],
) -> Result<Vec<(u32, RegionMetrics)>, BenchError> {
    let resampled;
    let pred = if pred.geometry().approx_eq(gt.geometry(), SPACING_TOLERANCE) {
        pred
    } else {
        log::info!(
            "resampling prediction {:?} onto ground-truth grid {:?}",
            pred.geometry().shape(),
            gt.geometry().shape()
        );
        resampled = resample(pred, gt.geometry(), Interpolation::Nearest)?;
        &resampled
    };
    regions
        .iter()
        .map(|&r| Ok((r, RegionMetrics::compute(&gt.mask(r), &pred.mask(r))?)))
        .collect()
}

fn run_case(plan: &EvaluationPlan, case: &Case) -> Result<Vec<EvaluationRecord>, BenchError> {
    let gt = read_nifti(&case.gt)?.into_labels()?;
    let pred = read_nifti(&case.pred)?.into_labels()?;
    let gt = harmonize_labels(&gt, &case.mapping.gt);
    let pred = harmonize_labels(&pred, &case.mapping.pred);
    let metrics = evaluate_case(&gt, &pred, &case.mapping.regions)?;
    Ok(metrics
        .into_iter()
        .map(|(r, m)| EvaluationRecord {
            dataset: case.dataset.clone(),
            subject: case.subject.clone(),
            sequence: case.sequence.clone(),
            method: case.method.clone(),
            region: plan.region_name(r).to_string(),
            dice: m.dice,
            hd95_mm: m.hd95_mm,
            gt_volume_ml: m.gt_volume_ml,
            pred_volume_ml: m.pred_volume_ml,
        })
        .collect())
}

/// Evaluates every case on a pool of `workers` threads and returns the
/// records sorted by key.
pub fn run_evaluation(plan: &EvaluationPlan, workers: usize) -> Result<Vec<EvaluationRecord>, BenchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let per_case: Vec<Vec<EvaluationRecord>> = pool.install(|| {
        plan.cases
            .par_iter()
            .map(|case| {
                run_case(plan, case).map_err(|e| BenchError::Case {
                    case: format!("{} (line {})", case.key(), case.line),
                    source: Box::new(e),
                })
            })
            .collect::<Result<_, _>>()
    })?;
    let mut records: Vec<EvaluationRecord> = per_case.into_iter().flatten().collect();
    sort_records(&mut records);
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn map(shape: [usize; 3], f: impl Fn(usize, usize, usize) -> u32) -> LabelMap {
        LabelMap::from_fn(Geometry::with_spacing(shape, [1.0; 3]).unwrap(), f).unwrap()
    }

    #[test]
    fn harmonize_identity_merge_and_drop() {
        let lm = map([6, 1, 1], |x, _, _| x as u32);
        let id: BTreeMap<u32, u32> = (1..6).map(|l| (l, l)).collect();
        assert_eq!(harmonize_labels(&lm, &id), lm);

        let merged = harmonize_labels(&lm, &BTreeMap::from([(2, 2), (3, 2), (1, 1)]));
        assert_eq!(merged.count(2), lm.count(2) + lm.count(3));
        assert_eq!(merged.foreground_count(), 3);
        assert_eq!(merged.count(4) + merged.count(5), 0);
    }

    #[test]
    fn perfect_prediction() {
        let gt = map([8, 8, 8], |x, y, _| if x < 4 { 1 } else if y < 3 { 2 } else { 0 });
        let out = evaluate_case(&gt, &gt, &[1, 2]).unwrap();
        for (_, m) in out {
            assert_eq!((m.dice, m.hd95_mm), (Some(1.0), Some(0.0)));
            assert_eq!(m.gt_volume_ml, m.pred_volume_ml);
        }
    }

    #[test]
    fn absent_region_is_missing() {
        let gt = map([4, 4, 4], |x, _, _| (x < 2) as u32);
        let pred = map([4, 4, 4], |_, _, _| 0);
        let (_, m) = evaluate_case(&gt, &pred, &[1]).unwrap()[0];
        assert_eq!((m.dice, m.hd95_mm, m.pred_volume_ml), (None, None, 0.0));
    }

    #[test]
    fn shifted_cube_half_overlap() {
        let gt = map([10, 6, 6], |x, y, z| ((1..5).contains(&x) && (1..5).contains(&y) && (1..5).contains(&z)) as u32);
        let pred = map([10, 6, 6], |x, y, z| ((3..7).contains(&x) && (1..5).contains(&y) && (1..5).contains(&z)) as u32);
        let (_, m) = evaluate_case(&gt, &pred, &[1]).unwrap()[0];
        assert_eq!(m.dice, Some(0.5));
    }

    #[test]
    fn prediction_on_other_grid_is_resampled() {
        let gt = map([8, 8, 8], |x, _, _| (x >= 4) as u32);
        let coarse = LabelMap::from_fn(
            Geometry::with_spacing([4, 4, 4], [2.0; 3]).unwrap().shifted([4, 4, 4], [0.25, 0.25, 0.25]).unwrap(),
            |x, _, _| (x >= 2) as u32,
        )
        .unwrap();
        let (_, m) = evaluate_case(&gt, &coarse, &[1]).unwrap()[0];
        assert_eq!(m.dice, Some(1.0));
    }
}

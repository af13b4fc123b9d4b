use std::collections::BTreeMap;
use std::io::Write;

use autochunk::fwi::FwiOutcome;
use autochunk::tuner::TuningResult;

use crate::record::{CellKey, RunRecord};
use crate::BenchError;

/// Median; the middle order statistic for odd counts, the mean of the two
/// middle ones for even counts. `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// `(t_base - t_cand) / t_cand` in percent.
pub fn speedup_percent(t_base: f64, t_cand: f64) -> f64 {
    (t_base - t_cand) / t_cand * 100.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub cell: CellKey,
    pub runs: usize,
    pub median_seconds: Option<f64>,
    /// Speedup against each baseline scheduler on the same model, thread
    /// count and shot count.
    pub speedups: Vec<(String, Option<f64>)>,
    pub flag: Option<String>,
}

/// Medians and speedups per cell. Cells listed in `expected` without
/// records, or with fewer than `repetitions` of them, are flagged; a
/// baseline without records yields no speedup for that column.
pub fn summarize(records: &[RunRecord], baselines: &[String], expected: &[CellKey], repetitions: usize) -> Vec<SummaryRow> {
    let mut by_cell: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    for k in expected {
        by_cell.entry(k.clone()).or_default();
    }
    for r in records {
        by_cell.entry(r.cell()).or_default().push(r.seconds);
    }
    let medians: BTreeMap<CellKey, f64> = by_cell.iter().filter_map(|(k, v)| median(v).map(|m| (k.clone(), m))).collect();
    by_cell
        .iter()
        .map(|(cell, times)| {
            let med = median(times);
            let speedups = baselines
                .iter()
                .map(|b| {
                    let base = CellKey { scheduler: b.clone(), ..cell.clone() };
                    let s = match (medians.get(&base), med) {
                        (Some(&tb), Some(tc)) => Some(speedup_percent(tb, tc)),
                        _ => None,
                    };
                    (b.clone(), s)
                })
                .collect();
            let flag = if times.is_empty() {
                Some("missing".to_string())
            } else if times.len() < repetitions {
                Some(format!("incomplete {}/{repetitions}", times.len()))
            } else {
                None
            };
            SummaryRow { cell: cell.clone(), runs: times.len(), median_seconds: med, speedups, flag }
        })
        .collect()
}

/// `scheduler,n1,n2,n3,threads,shots,runs,median_seconds,speedup_vs_<b>...,flag`
pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow], baselines: &[String]) -> Result<(), BenchError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["scheduler", "n1", "n2", "n3", "threads", "shots", "runs", "median_seconds"].map(String::from).to_vec();
    header.extend(baselines.iter().map(|b| format!("speedup_vs_{b}")));
    header.push("flag".into());
    wtr.write_record(&header)?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
    for r in rows {
        let c = &r.cell;
        let mut row = vec![
            c.scheduler.clone(),
            c.dims[0].to_string(),
            c.dims[1].to_string(),
            c.dims[2].to_string(),
            c.threads.to_string(),
            c.shots.to_string(),
            r.runs.to_string(),
            opt(r.median_seconds),
        ];
        row.extend(r.speedups.iter().map(|(_, s)| opt(*s)));
        row.push(r.flag.clone().unwrap_or_default());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotRow {
    pub shot: usize,
    pub scheduler: String,
    /// Gradient time of the shot summed over iterations, tuning excluded.
    pub seconds: f64,
    pub tuning_seconds: f64,
}

/// One row per shot. Tuning time is reported separately on shot 0.
pub fn per_shot_report(outcome: &FwiOutcome, scheduler: &str) -> Vec<ShotRow> {
    let n = outcome.timing.shot_seconds.first().map_or(0, Vec::len);
    (0..n)
        .map(|shot| ShotRow {
            shot,
            scheduler: scheduler.to_string(),
            seconds: outcome.timing.shot_seconds.iter().map(|it| it[shot]).sum(),
            tuning_seconds: if shot == 0 { outcome.timing.tuning_seconds } else { 0.0 },
        })
        .collect()
}

pub fn write_per_shot<W: Write>(w: W, rows: &[ShotRow]) -> Result<(), BenchError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["shot", "scheduler", "seconds", "tuning_seconds"])?;
    for r in rows {
        wtr.write_record([r.shot.to_string(), r.scheduler.clone(), r.seconds.to_string(), r.tuning_seconds.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Share of the run spent tuning.
pub fn overhead_fraction(tuning_seconds: f64, total_seconds: f64) -> f64 {
    if tuning_seconds <= 0.0 || total_seconds <= 0.0 {
        0.0
    } else {
        tuning_seconds / total_seconds
    }
}

/// Expected tuning cost from the number of probes: each probe runs the
/// first step `repeat_discard + 1` times.
pub fn overhead_prediction(result: &TuningResult, first_step_seconds: f64, repeat_discard: usize) -> f64 {
    result.evaluations.len() as f64 * (repeat_discard + 1) as f64 * first_step_seconds
}

/// Relative gap between the tuner's wall time and the sum of its timed
/// parts (kept and discarded executions, scratch resets).
pub fn accounting_gap(result: &TuningResult) -> f64 {
    let parts = result.measured_seconds + result.discarded_seconds + result.reset_seconds;
    (result.tuning_wall_time - parts).abs() / result.tuning_wall_time
}

//! Observability over finished (or running) campaigns: state timelines,
//! overhead distributions, runtime tables, and speedup figures, all
//! reconstructed offline from the event logs and run records.

pub mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{RunRecord, RunState};
use crate::executor::{DispatchEvent, DispatchEventKind};
use crate::worker::{WorkerEvent, WorkerEventKind};

/// Nearest-rank quantile on a sorted slice: the smallest element whose rank
/// is at least `q * n`. No interpolation, so results are reproducible across
/// implementations.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Default timeline resolution.
pub const DEFAULT_TICK_MS: f64 = 100.0;
const OVERHEAD_BIN_MS: f64 = 100.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no completed records")]
    NoData,
}

/// Client-side state counts sampled on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub tick_ms: f64,
    pub ticks: Vec<TimelineTick>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineTick {
    pub t_ms: f64,
    pub queued: usize,
    pub submitted: usize,
    pub completed: usize,
    pub failed: usize,
}

impl TimelineTick {
    pub fn total(&self) -> usize {
        self.queued + self.submitted + self.completed + self.failed
    }
}

/// Replays dispatch events onto a regular grid. At every tick the four
/// counts sum to the number of enqueued runs.
pub fn build_timeline(events: &[DispatchEvent], tick_ms: f64) -> Timeline {
    assert!(tick_ms > 0.0);
    let mut sorted: Vec<&DispatchEvent> = events.iter().collect();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let max_t = sorted.last().map(|e| e.t).unwrap_or(0.0);

    let mut ticks = Vec::new();
    let (mut queued, mut submitted, mut completed, mut failed) = (0usize, 0, 0, 0);
    let mut cursor = 0usize;
    let mut t = 0.0;
    loop {
        while cursor < sorted.len() && sorted[cursor].t <= t {
            match sorted[cursor].kind {
                DispatchEventKind::Enqueued => queued += 1,
                DispatchEventKind::Sent => {
                    queued -= 1;
                    submitted += 1;
                }
                DispatchEventKind::RetryScheduled => {
                    submitted -= 1;
                    queued += 1;
                }
                DispatchEventKind::Completed => {
                    submitted -= 1;
                    completed += 1;
                }
                DispatchEventKind::Failed => {
                    submitted -= 1;
                    failed += 1;
                }
            }
            cursor += 1;
        }
        ticks.push(TimelineTick {
            t_ms: t,
            queued,
            submitted,
            completed,
            failed,
        });
        if t >= max_t {
            break;
        }
        t += tick_ms;
    }
    Timeline { tick_ms, ticks }
}

/// Maximum number of requests simultaneously in flight (from `SENT` to the
/// matching terminal or retry event).
pub fn peak_in_flight(events: &[DispatchEvent]) -> usize {
    let mut sorted: Vec<&DispatchEvent> = events.iter().collect();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut in_flight = 0usize;
    let mut peak = 0usize;
    for e in sorted {
        match e.kind {
            DispatchEventKind::Sent => {
                in_flight += 1;
                peak = peak.max(in_flight);
            }
            DispatchEventKind::RetryScheduled
            | DispatchEventKind::Completed
            | DispatchEventKind::Failed => in_flight -= 1,
            DispatchEventKind::Enqueued => {}
        }
    }
    peak
}

/// Provider-side active/completed counts on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderTimeline {
    pub tick_ms: f64,
    pub ticks: Vec<ProviderTick>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProviderTick {
    pub t_ms: f64,
    pub active: usize,
    pub completed: usize,
}

pub fn provider_timeline(events: &[WorkerEvent], tick_ms: f64) -> ProviderTimeline {
    assert!(tick_ms > 0.0);
    let mut sorted: Vec<&WorkerEvent> = events.iter().collect();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let max_t = sorted.last().map(|e| e.t).unwrap_or(0.0);

    let mut ticks = Vec::new();
    let (mut active, mut completed) = (0usize, 0usize);
    let mut cursor = 0usize;
    let mut t = 0.0;
    loop {
        while cursor < sorted.len() && sorted[cursor].t <= t {
            match sorted[cursor].kind {
                WorkerEventKind::Started => active += 1,
                WorkerEventKind::Finished => {
                    active -= 1;
                    completed += 1;
                }
                _ => {}
            }
            cursor += 1;
        }
        ticks.push(ProviderTick {
            t_ms: t,
            active,
            completed,
        });
        if t >= max_t {
            break;
        }
        t += tick_ms;
    }
    ProviderTimeline { tick_ms, ticks }
}

/// Maximum number of simultaneously executing model runs on the provider.
pub fn peak_active(events: &[WorkerEvent]) -> usize {
    let mut sorted: Vec<&WorkerEvent> = events.iter().collect();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut active = 0usize;
    let mut peak = 0usize;
    for e in sorted {
        match e.kind {
            WorkerEventKind::Started => {
                active += 1;
                peak = peak.max(active);
            }
            WorkerEventKind::Finished => active -= 1,
            _ => {}
        }
    }
    peak
}

/// Per-run communication overhead distribution (`wall - sim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub bin_width_ms: f64,
    /// Histogram rows `(bin lower edge, count)`.
    pub bins: Vec<(f64, usize)>,
}

/// Overheads of completed records with nearest-rank quantiles and a
/// fixed-width histogram.
pub fn overhead_stats(records: &[RunRecord]) -> Result<OverheadStats, MetricsError> {
    let mut overheads: Vec<f64> = records
        .iter()
        .filter(|r| r.state == RunState::Completed)
        .filter_map(|r| r.overhead_ms())
        .collect();
    if overheads.is_empty() {
        return Err(MetricsError::NoData);
    }
    overheads.sort_by(f64::total_cmp);
    let count = overheads.len();
    let mean = overheads.iter().sum::<f64>() / count as f64;
    let max = *overheads.last().unwrap();

    let n_bins = (max / OVERHEAD_BIN_MS).floor() as usize + 1;
    let mut bins = vec![0usize; n_bins];
    for &o in &overheads {
        bins[(o / OVERHEAD_BIN_MS).floor() as usize] += 1;
    }
    Ok(OverheadStats {
        count,
        mean_ms: mean,
        p50_ms: nearest_rank(&overheads, 0.50),
        p90_ms: nearest_rank(&overheads, 0.90),
        p99_ms: nearest_rank(&overheads, 0.99),
        max_ms: max,
        bin_width_ms: OVERHEAD_BIN_MS,
        bins: bins
            .into_iter()
            .enumerate()
            .map(|(i, c)| (i as f64 * OVERHEAD_BIN_MS, c))
            .collect(),
    })
}

/// One provider-side execution: when the request arrived, when the model
/// started, when it finished.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub run_id: u64,
    pub received_ms: f64,
    pub start_ms: f64,
    pub end_ms: f64,
}

/// Per-execution runtime rows sorted by request arrival. Requests that never
/// started (throttled or failed before execution) are excluded.
pub fn runtime_table(events: &[WorkerEvent]) -> Vec<RuntimeRow> {
    let mut sorted: Vec<&WorkerEvent> = events.iter().collect();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut open: std::collections::HashMap<u64, (f64, Option<f64>)> =
        std::collections::HashMap::new();
    let mut rows = Vec::new();
    for e in sorted {
        match e.kind {
            WorkerEventKind::Received => {
                open.insert(e.run_id, (e.t, None));
            }
            WorkerEventKind::Started => {
                if let Some(entry) = open.get_mut(&e.run_id) {
                    entry.1 = Some(e.t);
                }
            }
            WorkerEventKind::Finished => {
                if let Some((received, Some(start))) = open.remove(&e.run_id) {
                    rows.push(RuntimeRow {
                        run_id: e.run_id,
                        received_ms: received,
                        start_ms: start,
                        end_ms: e.t,
                    });
                }
            }
            WorkerEventKind::Throttled | WorkerEventKind::InjectedFailure => {
                open.remove(&e.run_id);
            }
            WorkerEventKind::InstanceColdStarted => {}
        }
    }
    rows.sort_by(|a, b| a.received_ms.total_cmp(&b.received_ms));
    rows
}

/// Parallel speedup: the simulation time the campaign paid for, divided by
/// the wall time it took.
pub fn speedup(records: &[RunRecord], wall_time_ms: f64) -> f64 {
    if wall_time_ms <= 0.0 {
        return 0.0;
    }
    records
        .iter()
        .filter(|r| r.state == RunState::Completed)
        .filter_map(|r| r.sim_time_ms)
        .sum::<f64>()
        / wall_time_ms
}

pub fn timeline_csv(timeline: &Timeline) -> String {
    let mut out = String::from("t_ms,queued,submitted,completed,failed\n");
    for tick in &timeline.ticks {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            tick.t_ms, tick.queued, tick.submitted, tick.completed, tick.failed
        );
    }
    out
}

pub fn provider_timeline_csv(timeline: &ProviderTimeline) -> String {
    let mut out = String::from("t_ms,active,completed\n");
    for tick in &timeline.ticks {
        let _ = writeln!(out, "{},{},{}", tick.t_ms, tick.active, tick.completed);
    }
    out
}

pub fn overhead_csv(stats: &OverheadStats) -> String {
    let mut out = String::from("bin_lo_ms,count\n");
    for (lo, count) in &stats.bins {
        let _ = writeln!(out, "{lo},{count}");
    }
    out
}

pub fn runtime_csv(rows: &[RuntimeRow]) -> String {
    let mut out = String::from("run_id,received_ms,start_ms,end_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.run_id, r.received_ms, r.start_ms, r.end_ms
        );
    }
    out
}

/// Summary figures recomputed offline from logs and records (the analog of
/// the executor's [`crate::executor::RunSummary`] for a stored campaign).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineSummary {
    pub total: usize,
    pub completed: usize,
    pub failed: usize,
    pub retries_total: usize,
    pub retried_run_ids: Vec<u64>,
    pub wall_time_ms: f64,
    pub sum_sim_time_ms: f64,
    pub speedup: f64,
    pub overhead: Option<OverheadStats>,
}

pub fn summarize(events: &[DispatchEvent], records: &[RunRecord]) -> OfflineSummary {
    let wall = events.iter().map(|e| e.t).fold(0.0f64, f64::max);
    let sum_sim: f64 = records
        .iter()
        .filter(|r| r.state == RunState::Completed)
        .filter_map(|r| r.sim_time_ms)
        .sum();
    let mut retried: Vec<u64> = events
        .iter()
        .filter(|e| e.kind == DispatchEventKind::RetryScheduled)
        .map(|e| e.run_id)
        .collect();
    retried.sort_unstable();
    let retries_total = retried.len();
    retried.dedup();
    OfflineSummary {
        total: records.len(),
        completed: records
            .iter()
            .filter(|r| r.state == RunState::Completed)
            .count(),
        failed: records
            .iter()
            .filter(|r| r.state == RunState::Failed)
            .count(),
        retries_total,
        retried_run_ids: retried,
        wall_time_ms: wall,
        sum_sim_time_ms: sum_sim,
        speedup: speedup(records, wall),
        overhead: overhead_stats(records).ok(),
    }
}

/// Writes the full report bundle into `dir` and returns the files written:
/// `timeline_client.csv`, `timeline_provider.csv`, `overhead.csv`,
/// `runtime.csv`, `summary.json`, `report.svg`.
pub fn write_report(
    dir: &Path,
    events: &[DispatchEvent],
    worker_events: Option<&[WorkerEvent]>,
    records: &[RunRecord],
    tick_ms: f64,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, contents: String| -> std::io::Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };

    let client = build_timeline(events, tick_ms);
    emit("timeline_client.csv", timeline_csv(&client))?;

    let provider = provider_timeline(worker_events.unwrap_or(&[]), tick_ms);
    emit("timeline_provider.csv", provider_timeline_csv(&provider))?;

    let overhead = overhead_stats(records).ok();
    emit(
        "overhead.csv",
        overhead
            .as_ref()
            .map(overhead_csv)
            .unwrap_or_else(|| "bin_lo_ms,count\n".to_string()),
    )?;

    let runtime = runtime_table(worker_events.unwrap_or(&[]));
    emit("runtime.csv", runtime_csv(&runtime))?;

    let summary = summarize(events, records);
    emit(
        "summary.json",
        serde_json::to_string_pretty(&summary).expect("summary serialization") + "\n",
    )?;

    let mut panels = vec![svg::LinePanel {
        title: "Client-side sample states".into(),
        series: ["queued", "submitted", "completed", "failed"]
            .iter()
            .enumerate()
            .map(|(i, name)| {
                (
                    name.to_string(),
                    client
                        .ticks
                        .iter()
                        .map(|t| {
                            let v = [t.queued, t.submitted, t.completed, t.failed][i];
                            (t.t_ms, v as f64)
                        })
                        .collect(),
                )
            })
            .collect(),
    }];
    if worker_events.is_some() {
        panels.push(svg::LinePanel {
            title: "Provider-side sample states".into(),
            series: vec![
                (
                    "active".into(),
                    provider
                        .ticks
                        .iter()
                        .map(|t| (t.t_ms, t.active as f64))
                        .collect(),
                ),
                (
                    "completed".into(),
                    provider
                        .ticks
                        .iter()
                        .map(|t| (t.t_ms, t.completed as f64))
                        .collect(),
                ),
            ],
        });
    }
    if let Some(stats) = &overhead {
        panels.push(svg::LinePanel {
            title: "Overhead histogram (ms)".into(),
            series: vec![(
                "count".into(),
                stats.bins.iter().map(|&(lo, c)| (lo, c as f64)).collect(),
            )],
        });
    }
    emit("report.svg", svg::line_chart(&panels))?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use indexmap::IndexMap;

    fn event(t: f64, run_id: u64, kind: DispatchEventKind) -> DispatchEvent {
        DispatchEvent {
            t,
            run_id,
            kind,
            detail: None,
        }
    }

    fn completed_record(run_id: u64, sim: f64, wall: f64) -> RunRecord {
        RunRecord {
            run_id,
            state: RunState::Completed,
            inputs: IndexMap::new(),
            outputs: Some(IndexMap::new()),
            sim_time_ms: Some(sim),
            wall_time_ms: Some(wall),
            attempts: 1,
            reason: None,
        }
    }

    fn sequential_log(n: u64) -> Vec<DispatchEvent> {
        let mut events = Vec::new();
        for i in 0..n {
            events.push(event(0.0, i, DispatchEventKind::Enqueued));
        }
        for i in 0..n {
            let base = 10.0 + i as f64 * 20.0;
            events.push(event(base, i, DispatchEventKind::Sent));
            events.push(event(base + 10.0, i, DispatchEventKind::Completed));
        }
        events
    }

    #[test]
    fn timeline_conserves_total_and_tracks_peak() {
        let events = sequential_log(5);
        let timeline = build_timeline(&events, 10.0);
        for tick in &timeline.ticks {
            assert_eq!(tick.total(), 5, "at t={}", tick.t_ms);
        }
        assert_eq!(peak_in_flight(&events), 1);
        assert_eq!(timeline.ticks.last().unwrap().completed, 5);
        // completed counts never decrease
        let mut last = 0;
        for tick in &timeline.ticks {
            assert!(tick.completed >= last);
            last = tick.completed;
        }
    }

    #[test]
    fn retry_events_requeue_in_timeline() {
        let events = vec![
            event(0.0, 0, DispatchEventKind::Enqueued),
            event(1.0, 0, DispatchEventKind::Sent),
            event(2.0, 0, DispatchEventKind::RetryScheduled),
            event(5.0, 0, DispatchEventKind::Sent),
            event(6.0, 0, DispatchEventKind::Failed),
        ];
        let timeline = build_timeline(&events, 1.0);
        for tick in &timeline.ticks {
            assert_eq!(tick.total(), 1);
        }
        assert_eq!(timeline.ticks.last().unwrap().failed, 1);
        assert_eq!(peak_in_flight(&events), 1);

        let summary = summarize(&events, &[]);
        assert_eq!(summary.retries_total, 1);
        assert_eq!(summary.retried_run_ids, vec![0]);
    }

    #[test]
    fn overhead_quantiles_nearest_rank() {
        let records: Vec<RunRecord> = (0..10).map(|i| completed_record(i, 100.0, 200.0)).collect();
        let stats = overhead_stats(&records).unwrap();
        assert_eq!(stats.count, 10);
        assert_eq!(stats.p50_ms, 100.0);
        assert_eq!(stats.p99_ms, 100.0);
        assert_eq!(stats.max_ms, 100.0);
        assert_eq!(stats.bins, vec![(0.0, 0), (100.0, 10)]);

        assert!(matches!(overhead_stats(&[]), Err(MetricsError::NoData)));
    }

    #[test]
    fn cold_start_fixture_yields_bimodal_histogram() {
        // Half the runs hit a warm instance (tiny overhead), half pay a 2 s
        // cold start: the histogram shows two separated modes.
        let mut records = Vec::new();
        for i in 0..20u64 {
            records.push(completed_record(i, 100.0, 100.0 + 5.0 + i as f64));
        }
        for i in 20..40u64 {
            records.push(completed_record(i, 100.0, 100.0 + 2000.0 + i as f64));
        }
        let stats = overhead_stats(&records).unwrap();
        let occupied: Vec<f64> = stats
            .bins
            .iter()
            .filter(|(_, c)| *c > 0)
            .map(|(lo, _)| *lo)
            .collect();
        assert!(occupied.iter().any(|&lo| lo < 200.0));
        assert!(occupied.iter().any(|&lo| lo >= 2000.0));
        assert!(occupied
            .iter()
            .all(|&lo| lo < 200.0 || (2000.0..2200.0).contains(&lo)));
        assert_eq!(stats.count, 40);
        assert!(stats.p99_ms > 2000.0 && stats.p50_ms < 2100.0);
    }

    #[test]
    fn runtime_table_sorts_and_skips_throttled() {
        let we = |t: f64, run_id: u64, kind: WorkerEventKind| WorkerEvent {
            t,
            run_id,
            kind,
            instance_id: Some(0),
        };
        let events = vec![
            we(5.0, 1, WorkerEventKind::Received),
            we(6.0, 1, WorkerEventKind::Started),
            we(9.0, 1, WorkerEventKind::Finished),
            we(1.0, 0, WorkerEventKind::Received),
            we(2.0, 0, WorkerEventKind::Started),
            we(8.0, 0, WorkerEventKind::Finished),
            we(3.0, 2, WorkerEventKind::Received),
            we(3.5, 2, WorkerEventKind::Throttled),
        ];
        let rows = runtime_table(&events);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].run_id, 0);
        assert_eq!(rows[1].run_id, 1);
        assert!(rows
            .windows(2)
            .all(|w| w[0].received_ms <= w[1].received_ms));
    }

    #[test]
    fn speedup_is_sim_over_wall() {
        let records: Vec<RunRecord> = (0..64)
            .map(|i| completed_record(i, 1000.0, 1010.0))
            .collect();
        let s = speedup(&records, 1100.0);
        assert!((s - 64000.0 / 1100.0).abs() < 1e-9);
        assert_eq!(speedup(&records, 0.0), 0.0);
    }

    #[test]
    fn report_bundle_writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let events = sequential_log(3);
        let records: Vec<RunRecord> = (0..3).map(|i| completed_record(i, 10.0, 15.0)).collect();
        let written = write_report(dir.path(), &events, None, &records, 10.0).unwrap();
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            vec![
                "timeline_client.csv",
                "timeline_provider.csv",
                "overhead.csv",
                "runtime.csv",
                "summary.json",
                "report.svg"
            ]
        );
        let svg_text = std::fs::read_to_string(dir.path().join("report.svg")).unwrap();
        svg::assert_well_formed(&svg_text);
        let summary: OfflineSummary = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("summary.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(summary.completed, 3);

        // Golden shape for a fixed fixture log.
        let csv = std::fs::read_to_string(dir.path().join("timeline_client.csv")).unwrap();
        let first_lines: Vec<&str> = csv.lines().take(3).collect();
        assert_eq!(first_lines[0], "t_ms,queued,submitted,completed,failed");
        assert_eq!(first_lines[1], "0,3,0,0,0");
        assert_eq!(first_lines[2], "10,2,1,0,0");
    }

    #[test]
    fn empty_campaign_report_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        write_report(dir.path(), &[], None, &[], 100.0).unwrap();
        let svg_text = std::fs::read_to_string(dir.path().join("report.svg")).unwrap();
        svg::assert_well_formed(&svg_text);
    }
}

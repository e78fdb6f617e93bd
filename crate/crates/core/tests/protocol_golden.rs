//! Byte-exact checks of every externally visible serialization against
//! committed fixtures: the wire protocol, the run store lines, the manifest,
//! and both event-log formats.

use indexmap::IndexMap;
use uqfarm_core::campaign::{
    CampaignManifest, DesignMeta, Distribution, ParameterSpec, RunRecord, RunState,
};
use uqfarm_core::executor::{DispatchEvent, DispatchEventKind};
use uqfarm_core::protocol::{
    parse_request, parse_response, serialize_request, serialize_response, WireRequest, WireResponse,
};
use uqfarm_core::worker::{WorkerEvent, WorkerEventKind};

fn golden(name: &str) -> Vec<u8> {
    std::fs::read(format!(
        "{}/tests/golden/{name}",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap()
}

fn golden_str(name: &str) -> String {
    String::from_utf8(golden(name)).unwrap()
}

#[test]
fn request_bytes_match_fixture() {
    let request = WireRequest {
        run_id: 0,
        inputs: [("x".to_string(), 1.5)].into_iter().collect(),
    };
    assert_eq!(serialize_request(&request), golden("request.json"));
    assert_eq!(parse_request(&golden("request.json")).unwrap(), request);
}

#[test]
fn response_bytes_match_fixture() {
    let response = WireResponse {
        run_id: 0,
        outputs: [("y".to_string(), 2.25)].into_iter().collect(),
        sim_time_ms: 150.0,
    };
    assert_eq!(serialize_response(&response), golden("response.json"));
    assert_eq!(
        parse_response(&golden("response.json"), 0).unwrap(),
        response
    );
}

#[test]
fn run_store_lines_match_fixture() {
    let records = vec![
        RunRecord {
            run_id: 0,
            state: RunState::Queued,
            inputs: [("x1".to_string(), 0.5)].into_iter().collect(),
            outputs: None,
            sim_time_ms: None,
            wall_time_ms: None,
            attempts: 0,
            reason: None,
        },
        RunRecord {
            run_id: 7,
            state: RunState::Completed,
            inputs: [("x1".to_string(), 0.5)].into_iter().collect(),
            outputs: Some(
                [("q_out".to_string(), 1.25)]
                    .into_iter()
                    .collect::<IndexMap<_, _>>(),
            ),
            sim_time_ms: Some(150.0),
            wall_time_ms: Some(480.0),
            attempts: 1,
            reason: None,
        },
        RunRecord {
            run_id: 3,
            state: RunState::Failed,
            inputs: [("x1".to_string(), 0.5)].into_iter().collect(),
            outputs: None,
            sim_time_ms: None,
            wall_time_ms: None,
            attempts: 5,
            reason: Some("max retries exceeded".to_string()),
        },
    ];
    let mut lines = String::new();
    for r in &records {
        lines.push_str(&serde_json::to_string(r).unwrap());
        lines.push('\n');
    }
    assert_eq!(lines, golden_str("runs.ndjson"));

    // and they parse back
    for (line, want) in golden_str("runs.ndjson").lines().zip(&records) {
        let got: RunRecord = serde_json::from_str(line).unwrap();
        assert_eq!(&got, want);
    }
}

#[test]
fn manifest_matches_fixture() {
    let manifest = CampaignManifest {
        name: "demo".to_string(),
        parameters: vec![ParameterSpec::new(
            "x1",
            Distribution::Uniform { lo: -1.0, hi: 1.0 },
            0.0,
        )],
        output_names: Some(vec!["y".to_string()]),
        design: Some(DesignMeta::Saltelli {
            base_count: 8,
            varied_names: vec!["x1".to_string()],
        }),
        created_at: "2026-01-02T03:04:05.678Z".to_string(),
    };
    let pretty = serde_json::to_string_pretty(&manifest).unwrap() + "\n";
    assert_eq!(pretty, golden_str("campaign.json"));
    let parsed: CampaignManifest = serde_json::from_str(&golden_str("campaign.json")).unwrap();
    assert_eq!(parsed, manifest);
}

#[test]
fn event_lines_match_fixture() {
    let events = [
        DispatchEvent {
            t: 12.5,
            run_id: 3,
            kind: DispatchEventKind::RetryScheduled,
            detail: Some("HTTP 429".to_string()),
        },
        DispatchEvent {
            t: 1.5,
            run_id: 0,
            kind: DispatchEventKind::Sent,
            detail: None,
        },
    ];
    let lines: String = events
        .iter()
        .map(|e| serde_json::to_string(e).unwrap() + "\n")
        .collect();
    assert_eq!(lines, golden_str("events.ndjson"));
}

#[test]
fn worker_event_lines_match_fixture() {
    let events = [
        WorkerEvent {
            t: 1.5,
            run_id: 0,
            kind: WorkerEventKind::Started,
            instance_id: Some(2),
        },
        WorkerEvent {
            t: 0.5,
            run_id: 9,
            kind: WorkerEventKind::Throttled,
            instance_id: None,
        },
    ];
    let lines: String = events
        .iter()
        .map(|e| serde_json::to_string(e).unwrap() + "\n")
        .collect();
    assert_eq!(lines, golden_str("worker_events.ndjson"));
}

#[test]
fn campaign_store_writes_fixture_shaped_lines() {
    // End to end through the store: the persisted line for a completion is
    // exactly the fixture's completed line.
    let dir = tempfile::tempdir().unwrap();
    let campaign = uqfarm_core::campaign::Campaign::create(
        "demo",
        vec![ParameterSpec::new(
            "x1",
            Distribution::Uniform { lo: -1.0, hi: 1.0 },
            0.0,
        )],
        dir.path().join("camp"),
    )
    .unwrap();
    campaign
        .add_samples(&[uqfarm_core::campaign::Sample {
            run_id: 7,
            inputs: [("x1".to_string(), 0.5)].into_iter().collect(),
        }])
        .unwrap();
    campaign
        .record_result(
            7,
            [("q_out".to_string(), 1.25)].into_iter().collect(),
            150.0,
            480.0,
            1,
        )
        .unwrap();
    let stored = std::fs::read_to_string(dir.path().join("camp/runs.ndjson")).unwrap();
    let completed_line = stored.lines().nth(1).unwrap();
    let fixture = golden_str("runs.ndjson");
    assert_eq!(completed_line, fixture.lines().nth(1).unwrap());
}

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use linkrot::pipeline::{Overrides, Pipeline, PipelineConfig, PipelineError, Stage};
use linkrot::transport::{Canned, CountingTransport, ReplayStore, Request, Response, Transport, TransportError};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/replay_run")
}

/// Copies the shipped fixture (without any previous output) into a temp dir.
fn fresh_copy() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let src = fixture_dir();
    for name in ["pipeline.toml", "corpus.snap", "replay.json", "stoplist.txt"] {
        fs::copy(src.join(name), dir.path().join(name)).unwrap();
    }
    fs::create_dir(dir.path().join("events")).unwrap();
    for entry in fs::read_dir(src.join("events")).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), dir.path().join("events").join(entry.file_name())).unwrap();
    }
    let cfg = dir.path().join("pipeline.toml");
    (dir, cfg)
}

fn load(cfg: &Path) -> PipelineConfig {
    PipelineConfig::load_with_env(cfg, &Overrides::default(), |_| None).unwrap()
}

fn ran(runs: &[linkrot::pipeline::StageRun]) -> Vec<String> {
    runs.iter()
        .filter(|r| r.ran)
        .map(|r| match &r.event {
            Some(e) => format!("{e}/{}", r.stage),
            None => r.stage.to_string(),
        })
        .collect()
}

#[test]
fn replay_run_is_byte_identical() {
    let (a, cfg_a) = fresh_copy();
    let (b, cfg_b) = fresh_copy();
    Pipeline::new(load(&cfg_a)).run_all().unwrap();
    Pipeline::new(load(&cfg_b)).run_all().unwrap();

    let out_a = a.path().join("out");
    let out_b = b.path().join("out");
    for name in ["report.md", "events.csv", "split.csv", "series.csv", "model.json", "analysis.json"] {
        assert_eq!(
            fs::read(out_a.join(name)).unwrap(),
            fs::read(out_b.join(name)).unwrap(),
            "{name} differs"
        );
    }
    for name in ["live.jsonl", "archive.jsonl", "resources.json", "aliases.csv"] {
        let p = Path::new("events/quake").join(name);
        assert_eq!(fs::read(out_a.join(&p)).unwrap(), fs::read(out_b.join(&p)).unwrap(), "{name}");
    }

    // forcing a full rerun in place reproduces the report too
    let first = fs::read(out_a.join("report.md")).unwrap();
    Pipeline::new(load(&cfg_a)).force(true).run_all().unwrap();
    assert_eq!(first, fs::read(out_a.join("report.md")).unwrap());
}

#[test]
fn manifest_skips_up_to_date_stages() {
    let (dir, cfg) = fresh_copy();
    let runs = Pipeline::new(load(&cfg)).run_all().unwrap();
    assert_eq!(ran(&runs).len(), 16);
    let report = fs::read(dir.path().join("out/report.md")).unwrap();

    assert!(ran(&Pipeline::new(load(&cfg)).run_all().unwrap()).is_empty());

    fs::remove_file(dir.path().join("out/split.csv")).unwrap();
    fs::remove_file(dir.path().join("out/model.json")).unwrap();
    let runs = Pipeline::new(load(&cfg)).run_all().unwrap();
    assert_eq!(ran(&runs), ["analyze", "report"]);
    assert_eq!(report, fs::read(dir.path().join("out/report.md")).unwrap());

    // a parameter change reruns the stage and everything downstream of it
    let event = dir.path().join("events/summit.toml");
    let text = fs::read_to_string(&event).unwrap().replace("sample_seed = 5", "sample_seed = 6");
    fs::write(&event, text).unwrap();
    let runs = Pipeline::new(load(&cfg)).run_all().unwrap();
    assert_eq!(
        ran(&runs),
        [
            "summit/sample",
            "summit/resolve",
            "summit/audit-live",
            "summit/audit-archive",
            "analyze",
            "report"
        ]
    );
}

#[test]
fn missing_replay_entry_names_the_uri() {
    let (dir, cfg) = fresh_copy();
    Pipeline::new(load(&cfg)).run_all().unwrap();

    let replay = dir.path().join("replay.json");
    let mut store = ReplayStore::load(&replay).unwrap();
    let kept: Vec<_> = store
        .entries()
        .iter()
        .filter(|e| !e.url.starts_with("http://paywall.example.com/"))
        .cloned()
        .collect();
    store = ReplayStore::new();
    for e in kept {
        store.insert(e);
    }
    store.save(&replay).unwrap();

    let err = Pipeline::new(load(&cfg))
        .force(true)
        .run(&[Stage::AuditLive], Some("quake"))
        .unwrap_err();
    assert!(matches!(err, PipelineError::NotRecorded { .. }), "{err:?}");
    assert!(err.to_string().contains("http://paywall.example.com/article"), "{err}");
}

#[test]
fn stages_demand_their_inputs() {
    let (_dir, cfg) = fresh_copy();
    let err = Pipeline::new(load(&cfg)).run(&[Stage::Resolve], None).unwrap_err();
    assert!(err.to_string().contains("run stage `sample` first"), "{err}");
    let err = Pipeline::new(load(&cfg)).run(&[Stage::Report], None).unwrap_err();
    assert!(err.to_string().contains("run stage `analyze` first"), "{err}");
    let err = Pipeline::new(load(&cfg)).run(&[Stage::Ingest], Some("nope")).unwrap_err();
    assert!(matches!(err, PipelineError::UnknownEvent(_)));
}

/// Answers from a store but refuses after `budget` requests, like a crash.
struct Budgeted {
    store: ReplayStore,
    budget: usize,
    used: AtomicUsize,
}

impl Transport for Budgeted {
    fn send(&self, request: &Request) -> Result<Response, TransportError> {
        if self.used.fetch_add(1, Ordering::SeqCst) >= self.budget {
            return Err(TransportError::NotRecorded {
                method: request.method,
                url: request.url.clone(),
            });
        }
        self.store.send(request)
    }
}

#[test]
fn interrupted_audit_resumes_from_journal() {
    let upto_resolve = [Stage::Ingest, Stage::Filter, Stage::Sample, Stage::Resolve];
    let store = ReplayStore::load(fixture_dir().join("replay.json")).unwrap();
    let audit = |cfg: &Path, transport: Box<dyn Transport>| {
        Pipeline::new(load(cfg))
            .with_transport(transport)
            .run(&[Stage::AuditLive], Some("summit"))
    };

    let (clean_dir, clean_cfg) = fresh_copy();
    Pipeline::new(load(&clean_cfg)).run(&upto_resolve, Some("summit")).unwrap();
    let counter = Arc::new(CountingTransport::new(store.clone()));
    audit(&clean_cfg, Box::new(counter.clone())).unwrap();
    let full = counter.requests();

    // crash on the very last request, which belongs to the final round
    let (dir, cfg) = fresh_copy();
    Pipeline::new(load(&cfg)).run(&upto_resolve, Some("summit")).unwrap();
    let crash = Budgeted {
        store: store.clone(),
        budget: full - 1,
        used: AtomicUsize::new(0),
    };
    let err = audit(&cfg, Box::new(crash)).unwrap_err();
    assert!(matches!(err, PipelineError::NotRecorded { .. }));
    let journals = |d: &Path| {
        fs::read_dir(d.join("out/events/summit"))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".journal.jsonl"))
            .count()
    };
    assert_eq!(journals(dir.path()), 1);

    let counter = Arc::new(CountingTransport::new(store));
    audit(&cfg, Box::new(counter.clone())).unwrap();
    assert!(counter.requests() < full / 2, "{} of {full}", counter.requests());
    assert_eq!(journals(dir.path()), 0);

    let a = fs::read(dir.path().join("out/events/summit/live.jsonl")).unwrap();
    let b = fs::read(clean_dir.path().join("out/events/summit/live.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn uri_list_event_without_tags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("uris.txt"), "http://a.example/\nhttp://b.example/x\nnot a uri\n").unwrap();
    fs::write(
        dir.path().join("list.toml"),
        "label = \"list\"\ninputs = [\"uris.txt\"]\nformat = \"uri-list\"\nlist_date = \"2012-01-01\"\ncentroids = [\"2012-01-01\"]\n",
    )
    .unwrap();
    let mut store = ReplayStore::new();
    store
        .add("http://a.example/", Canned::status(200).with_body("hello there"))
        .add("http://a.example/*", Canned::status(404))
        .add("http://b.example/x", Canned::status(404))
        .add("http://tm/*", Canned::status(404));
    store.save(dir.path().join("replay.json")).unwrap();
    fs::write(
        dir.path().join("pipeline.toml"),
        "events = [\"list.toml\"]\naudit_date = \"2012-04-01\"\n[memento]\nendpoint = \"http://tm/{uri}\"\n[transport]\nreplay_file = \"replay.json\"\n",
    )
    .unwrap();
    let cfg = load(&dir.path().join("pipeline.toml"));
    Pipeline::new(cfg).run_all().unwrap();
    let events = fs::read_to_string(dir.path().join("out/events.csv")).unwrap();
    let row = events.lines().nth(1).unwrap();
    assert!(row.starts_with("list,2,2,100.00,0,0.00,0,0.00,1,50.00,1,50.00,1,50.00,0,0.00"), "{row}");
    let skipped = fs::read_to_string(dir.path().join("out/events/list/skipped.csv")).unwrap();
    assert_eq!(skipped.lines().count(), 2);
    let report = fs::read_to_string(dir.path().join("out/report.md")).unwrap();
    assert!(report.contains("No model fitted"), "{report}");
}

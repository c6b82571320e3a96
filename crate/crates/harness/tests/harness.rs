use std::process::Command;

use ringrc_harness::export::{self, BandwidthCsv, NoiseCsv};
use ringrc_harness::scan::{self, length_outcomes};
use ringrc_harness::{
    bandwidth_scan, noise_sweep, pattern_length_scan, replay, run_cell, ExperimentConfig,
    HarnessError, RunRecord,
};

fn small_frequency() -> ExperimentConfig {
    let mut c = ExperimentConfig::frequency();
    c.reservoir.n_neurons = 30;
    c.reservoir.latency_prefix = 5;
    c.train_length = 300;
    c.washout = 50;
    c.autonomous_length = 1024;
    c.masks = 3;
    c.task.nus = vec![0.3, 0.6, 1.0];
    c
}

fn small_pattern() -> ExperimentConfig {
    let mut c = ExperimentConfig::noise_sweep();
    c.reservoir.n_neurons = 20;
    c.reservoir.latency_prefix = 3;
    c.reservoir.alpha = 0.9;
    c.reservoir.beta = 2.0;
    c.train_length = 300;
    c.washout = 50;
    c.autonomous_length = 400;
    c.patterns = 3;
    c.task.max_length = 6;
    c.task.lengths = vec![2, 3, 4];
    c.task.sigmas = vec![0.0, 1e-3, 1e-2];
    c
}

/// Records without their wall-clock field.
fn timeless(records: &[RunRecord]) -> Vec<RunRecord> {
    records
        .iter()
        .cloned()
        .map(|mut r| {
            r.duration_secs = 0.0;
            r
        })
        .collect()
}

#[test]
fn scans_are_reproducible() {
    let c = small_frequency();
    let (a, b) = (bandwidth_scan(&c).unwrap(), bandwidth_scan(&c).unwrap());
    assert_eq!(a.rows, b.rows);
    assert_eq!(timeless(&a.records), timeless(&b.records));

    let p = small_pattern();
    let (a, b) = (pattern_length_scan(&p).unwrap(), pattern_length_scan(&p).unwrap());
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.curves, b.curves);
}

#[test]
fn worker_count_does_not_change_results() {
    let mut c = small_frequency();
    c.workers = 1;
    let one = bandwidth_scan(&c).unwrap();
    c.workers = 3;
    let three = bandwidth_scan(&c).unwrap();
    assert_eq!(timeless(&one.records), timeless(&three.records));
}

#[test]
fn removing_a_cell_leaves_the_rest_alone() {
    let c = small_frequency();
    let full = bandwidth_scan(&c).unwrap();
    let mut fewer = c.clone();
    fewer.task.nus.remove(1);
    let part = bandwidth_scan(&fewer).unwrap();
    for r in &part.records {
        let nu = match &r.spec.task {
            ringrc_harness::CellTask::Frequency(t) => t.nu,
            _ => unreachable!(),
        };
        let twin = full
            .records
            .iter()
            .find(|f| match &f.spec.task {
                ringrc_harness::CellTask::Frequency(t) => t.nu == nu && f.cell[1] == r.cell[1],
                _ => false,
            })
            .unwrap();
        assert_eq!(twin.seeds, r.seeds);
        assert_eq!(twin.outcome, r.outcome);
        assert_eq!(twin.metrics, r.metrics);
    }
}

#[test]
fn master_seed_changes_masks() {
    let c = small_frequency();
    let mut d = c.clone();
    d.master_seed += 1;
    let (a, b) = (bandwidth_scan(&c).unwrap(), bandwidth_scan(&d).unwrap());
    assert_ne!(a.records[0].seeds, b.records[0].seeds);
}

#[test]
fn empty_grid_gives_empty_table() {
    let mut c = small_frequency();
    c.task.nus.clear();
    let s = bandwidth_scan(&c).unwrap();
    assert!(s.rows.is_empty() && s.records.is_empty());
}

#[test]
fn record_round_trip_and_replay() {
    let mut c = small_frequency();
    c.store_outputs = true;
    c.hardware.noise_sigma = 1e-3;
    let (rec, _) = scan::frequency_cell(&c, "t", vec![0], 0.3, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = export::write_record(dir.path(), &rec).unwrap();
    let back = export::read_record(&path).unwrap();
    assert_eq!(back, rec);
    let ex = replay(&back).unwrap();
    let stored = back.outputs.as_ref().unwrap();
    assert!(stored.iter().zip(&ex.outputs).all(|(a, b)| a.to_bits() == b.to_bits()));

    let mut tampered = back.clone();
    tampered.seeds.noise ^= 1;
    assert!(matches!(replay(&tampered), Err(HarnessError::Replay(_))));
}

#[test]
fn pattern_record_replays_without_stored_outputs() {
    let p = small_pattern();
    let (rec, series) = scan::pattern_cell(&p, "t", vec![0], 3, 0, 0, 1e-3, 0).unwrap();
    assert!(rec.outputs.is_none());
    assert_eq!(series.len(), rec.metrics.as_ref().unwrap().steps);
    let text = serde_json::to_string(&rec).unwrap();
    let back: RunRecord = serde_json::from_str(&text).unwrap();
    replay(&back).unwrap();
}

#[test]
fn broken_cell_is_recorded_not_fatal() {
    let c = small_frequency();
    let (rec, _) = scan::frequency_cell(&c, "t", vec![0], 0.3, 0).unwrap();
    let mut spec = rec.spec.clone();
    spec.train_length = spec.washout;
    let (bad, _) = run_cell("t", vec![0], spec, rec.seeds, false);
    assert!(!bad.outcome.success);
    assert!(bad.error.is_some());
    assert!(bad.metrics.is_none());
}

#[test]
fn lambda_grid_selects_from_grid() {
    let mut c = small_frequency();
    c.lambda_grid = vec![1e-9, 1e-6, 1e-3];
    let (rec, _) = scan::frequency_cell(&c, "t", vec![0], 0.6, 1).unwrap();
    let chosen = rec.metrics.as_ref().unwrap().lambda;
    assert!(c.lambda_grid.contains(&chosen));
    replay(&rec).unwrap();
}

#[test]
fn bandwidth_table_schema_and_round_trip() {
    let c = small_frequency();
    let s = bandwidth_scan(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bw.csv");
    export::write_bandwidth(&path, &s.rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "nu,mask_seed_base,successes,trials");
    let back: Vec<BandwidthCsv> = export::read_table(&path).unwrap();
    assert_eq!(back, s.rows.iter().map(BandwidthCsv::from).collect::<Vec<_>>());
}

#[test]
fn noise_sweep_matches_exhaustive_search() {
    let p = small_pattern();
    let sweep = noise_sweep(&p).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noise.csv");
    export::write_noise(&path, &sweep.rows).unwrap();
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("sigma,max_L,trials_per_L"));
    let back: Vec<NoiseCsv> = export::read_table(&path).unwrap();
    assert_eq!(back.len(), p.task.sigmas.len());

    let lengths: Vec<usize> = (2..=p.task.max_length).collect();
    for row in sweep.rows.iter().filter(|r| !r.rerun) {
        let all = length_outcomes(&p, row.sigma, &lengths, 0).unwrap();
        let exhaustive = all
            .iter()
            .take_while(|(_, ok)| *ok)
            .last()
            .map_or(0, |(l, _)| *l);
        assert_eq!(row.max_l, exhaustive, "sigma {}", row.sigma);
        assert!(row.max_l <= p.reservoir.n_neurons);
    }
}

#[test]
fn pattern_scan_shapes() {
    let p = small_pattern();
    let s = pattern_length_scan(&p).unwrap();
    assert_eq!(s.rows.len(), 3);
    assert!(s.rows.iter().all(|r| r.cells == p.masks * p.patterns));
    let per_length = p.autonomous_length.div_ceil(p.curve_stride);
    assert_eq!(s.curves.len(), 3 * per_length);
    assert!(s.max_all_success_length() <= 4);
}

#[test]
fn noise_floor_without_feedback_matches_sigma() {
    let mut c = ExperimentConfig::frequency();
    c.reservoir.alpha = 0.0;
    c.hardware.highpass = false;
    let f = scan::noise_floor(&c, 2e-3, 0.1, 2000).unwrap();
    // ADC step 2^-13 adds ~3.5e-5 of quantization spread.
    assert!((f.zero_input_std - 2e-3).abs() < 1e-4, "{}", f.zero_input_std);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ringrc"))
}

#[test]
fn cli_exit_codes_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "train_length = 300\nwashout = 50\nautonomous_length = 512\nmasks = 2\n[reservoir]\nn_neurons = 30\nlatency_prefix = 5\n[task]\nnus = [0.5, 0.01]\n",
    )
    .unwrap();
    let status = cli()
        .args(["scan-bandwidth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    // The 0.01 row fails as a task; the command still succeeds.
    assert!(status.success());
    let rows: Vec<BandwidthCsv> = export::read_table(&out.join("bandwidth.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(std::fs::read_dir(out.join("records")).unwrap().count(), 4);

    let record = out.join("records").join("bandwidth-0-0.json");
    assert!(cli().arg("replay").arg(&record).status().unwrap().success());
    let runs = dir.path().join("runs.csv");
    assert!(cli()
        .arg("export")
        .arg(out.join("records"))
        .arg("--out")
        .arg(&runs)
        .status()
        .unwrap()
        .success());
    assert_eq!(std::fs::read_to_string(&runs).unwrap().lines().count(), 5);

    let bad = cli()
        .args(["scan-bandwidth", "--n-neurons", "1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(!bad.status.success());
    let missing = cli().args(["replay", "/nonexistent/record.json"]).output().unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/record.json"));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trackfold::aggregation::{aggregate, aggregate_posterior_set};
use trackfold::clustering::{online_cluster, purity, ClusteringConfig, Linkage};
use trackfold::dissimilarity::TrackDistanceMethod;
use trackfold::evaluation::{calibrate_threshold, kfold_report, EvalReport, ScoredPair, VerificationPair};
use trackfold::feature::{Track, TrackDataset};
use trackfold::io;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trackfold"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("data");
    let mut args = vec!["synth", "--out-dir", p(&out)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn synth_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = synth(a.path(), &["--seed", "7"]);
    let db = synth(b.path(), &["--seed", "7"]);
    for f in [
        "tracks.csv",
        "labels.csv",
        "posteriors.csv",
        "pairs.csv",
        "demographics.csv",
    ] {
        let x = fs::read(da.join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(db.join(f)).unwrap(), "{f}");
    }
    let dataset = io::read_tracks(da.join("tracks.csv")).unwrap();
    assert_eq!(dataset.track_count(), 150);
    assert_eq!(dataset.dim(), Some(64));
}

#[test]
fn synth_rejects_zero_identities() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--identities", "0", "--out-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("identities"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["eval", "--unknown-flag"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn missing_input_exits_two() {
    let o = run(&[
        "calibrate",
        "--tracks",
        "/nonexistent/t.csv",
        "--pairs",
        "/nonexistent/p.csv",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_input_exits_one_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.csv");
    fs::write(&t, "track_id,frame_index,v0,v1\na,0,1,2\na,1,1\n").unwrap();
    let o = run(&[
        "aggregate",
        "--tracks",
        p(&t),
        "--method",
        "avepool",
        "--out",
        p(&dir.path().join("r.csv")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
}

#[test]
fn aggregate_single_unit_frame() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.csv");
    let ds = TrackDataset::new(vec![Track::from_rows("a", vec![vec![0.6, 0.8]]).unwrap()]);
    io::write_tracks(&ds, &t).unwrap();
    let out = dir.path().join("r.csv");
    let o = run(&[
        "aggregate",
        "--tracks",
        p(&t),
        "--method",
        "avepool-l2",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reps = io::read_representations(&out).unwrap();
    assert_eq!(reps[0].vector.as_slice(), &[0.6, 0.8]);
}

#[test]
fn aggregate_methods_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(
        dir.path(),
        &[
            "--identities",
            "5",
            "--dim",
            "8",
            "--frames",
            "3",
            "--frames-max",
            "9",
            "--same-pairs",
            "5",
            "--diff-pairs",
            "5",
            "--folds",
            "2",
        ],
    );
    let tracks = data.join("tracks.csv");
    let dataset = io::read_tracks(&tracks).unwrap();
    for m in TrackDistanceMethod::TABLE_ROWS {
        let out = dir.path().join(format!("{}.csv", m.name()));
        let o = run(&[
            "aggregate",
            "--tracks",
            p(&tracks),
            "--method",
            m.name(),
            "--out",
            p(&out),
        ]);
        match m.aggregation() {
            Some(agg) => {
                assert!(o.status.success(), "{}", stderr(&o));
                let got = io::read_representations(&out).unwrap();
                for (r, t) in got.iter().zip(dataset.tracks()) {
                    let want = aggregate(t, agg).unwrap();
                    assert_eq!(r.track_id, want.track_id);
                    assert_eq!(r.vector, want.vector);
                }
            }
            None => assert_eq!(o.status.code(), Some(1)),
        }
    }
    let o = run(&[
        "aggregate",
        "--tracks",
        p(&tracks),
        "--method",
        "median",
        "--out",
        p(&dir.path().join("x.csv")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    for m in TrackDistanceMethod::TABLE_ROWS {
        assert!(msg.contains(m.name()), "{msg}");
    }
}

/// One-dimensional single-frame tracks: track `o` at 0 and `p{i}` at `i`.
/// Different pairs join `o` to `p{first_diff}..=p100`.
fn line_fixture(dir: &Path, first_diff: usize, same: &[(usize, usize)]) -> (PathBuf, PathBuf) {
    let mut tracks = vec![Track::from_rows("o", vec![vec![0.0]]).unwrap()];
    tracks.extend((1..=100).map(|i| Track::from_rows(format!("p{i:03}"), vec![vec![i as f64]]).unwrap()));
    let mut pairs: Vec<VerificationPair> = (first_diff..=100)
        .map(|i| VerificationPair {
            track_a: "o".into(),
            track_b: format!("p{i:03}"),
            same: false,
            fold: 0,
        })
        .collect();
    pairs.extend(same.iter().map(|(a, b)| VerificationPair {
        track_a: format!("p{a:03}"),
        track_b: format!("p{b:03}"),
        same: true,
        fold: 0,
    }));
    let t = dir.join("line_tracks.csv");
    let pp = dir.join("line_pairs.csv");
    io::write_tracks(&TrackDataset::new(tracks), &t).unwrap();
    io::write_pairs(&pairs, &pp).unwrap();
    (t, pp)
}

#[test]
fn calibrate_examples() {
    let dir = tempfile::tempdir().unwrap();
    let (t, pp) = line_fixture(dir.path(), 1, &[]);
    let o = run(&[
        "calibrate",
        "--tracks",
        p(&t),
        "--pairs",
        p(&pp),
        "--method",
        "avepool",
        "--far",
        "0.01",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "1");
    let o = run(&[
        "calibrate",
        "--tracks",
        p(&t),
        "--pairs",
        p(&pp),
        "--method",
        "avepool",
        "--far",
        "1.0",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn calibrate_matches_library_on_synth() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--seed", "3"]);
    let o = run(&[
        "calibrate",
        "--tracks",
        p(&data.join("tracks.csv")),
        "--pairs",
        p(&data.join("pairs.csv")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got: f64 = stdout(&o).trim().parse().unwrap();
    let dataset = io::read_tracks(data.join("tracks.csv")).unwrap();
    let pairs = io::read_pairs(data.join("pairs.csv")).unwrap();
    let scored = trackfold::score_pairs(&dataset, &pairs, TrackDistanceMethod::parse("avepool-l2").unwrap()).unwrap();
    let labelled: Vec<(bool, f64)> = scored.iter().map(ScoredPair::labelled).collect();
    assert_eq!(got, calibrate_threshold(&labelled, 0.01).unwrap());
}

#[test]
fn eval_separable_single_fold() {
    let dir = tempfile::tempdir().unwrap();
    let (t, pp) = line_fixture(dir.path(), 2, &[(1, 2), (50, 51), (99, 100)]);
    let report = dir.path().join("r.json");
    let o = run(&[
        "eval",
        "--tracks",
        p(&t),
        "--pairs",
        p(&pp),
        "--method",
        "avepool,raw-pairwise",
        "--report",
        p(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert_eq!(table.matches("100.0±0.0").count(), 2, "{table}");
    assert_eq!(fs::read_to_string(dir.path().join("r.txt")).unwrap(), table);
    let r = io::read_report(&report).unwrap();
    for row in &r.rows {
        assert_eq!(row.report.folds.len(), 1);
        assert_eq!(
            (row.report.auc_std, row.report.eer_std, row.report.frr_at_far_std),
            (0.0, 0.0, 0.0)
        );
    }
}

#[test]
fn eval_matches_library_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--seed", "11"]);
    let report = dir.path().join("r.json");
    let o = run(&[
        "eval",
        "--tracks",
        p(&data.join("tracks.csv")),
        "--pairs",
        p(&data.join("pairs.csv")),
        "--report",
        p(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got: EvalReport = io::read_report(&report).unwrap();
    let dataset = io::read_tracks(data.join("tracks.csv")).unwrap();
    let pairs = io::read_pairs(data.join("pairs.csv")).unwrap();
    assert_eq!(got.rows.len(), 7);
    for (row, m) in got.rows.iter().zip(TrackDistanceMethod::TABLE_ROWS) {
        assert_eq!(row.method, m.name());
        let want = kfold_report(&dataset, &pairs, m, 0.01).unwrap();
        assert_eq!(row.report, want);
        assert_eq!(row.report.folds.len(), 10);
    }
    let o = run(&[
        "eval",
        "--features",
        "age-gender",
        "--distance",
        "kl",
        "--posteriors",
        p(&data.join("posteriors.csv")),
        "--pairs",
        p(&data.join("pairs.csv")),
        "--method",
        "avepool",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn cluster_threshold_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(
        dir.path(),
        &[
            "--identities",
            "6",
            "--dim",
            "8",
            "--frames",
            "4",
            "--same-pairs",
            "6",
            "--diff-pairs",
            "6",
            "--folds",
            "2",
        ],
    );
    let tracks = data.join("tracks.csv");
    let out = dir.path().join("c.jsonl");
    for (threshold, mode, want) in [
        ("0", "online", 18),
        ("10", "online", 1),
        ("0", "hac", 18),
        ("10", "hac", 1),
    ] {
        let o = run(&[
            "cluster",
            "--tracks",
            p(&tracks),
            "--threshold",
            threshold,
            "--mode",
            mode,
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let clusters = io::read_clusters(&out).unwrap();
        assert_eq!(clusters.len(), want, "{threshold} {mode}");
        assert_eq!(clusters.iter().map(|c| c.track_ids.len()).sum::<usize>(), 18);
    }
    let o = run(&["cluster", "--tracks", p(&tracks), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn cluster_matches_library_on_synth() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--seed", "5"]);
    let out = dir.path().join("c.jsonl");
    let o = run(&[
        "cluster",
        "--tracks",
        p(&data.join("tracks.csv")),
        "--posteriors",
        p(&data.join("posteriors.csv")),
        "--auto-far",
        "0.01",
        "--train-pairs",
        p(&data.join("pairs.csv")),
        "--labels",
        p(&data.join("labels.csv")),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got = io::read_clusters(&out).unwrap();

    let dataset = io::read_tracks(data.join("tracks.csv")).unwrap();
    let pairs = io::read_pairs(data.join("pairs.csv")).unwrap();
    let method = TrackDistanceMethod::parse("avepool-l2").unwrap();
    let scored = trackfold::score_pairs(&dataset, &pairs, method).unwrap();
    let labelled: Vec<(bool, f64)> = scored.iter().map(ScoredPair::labelled).collect();
    let threshold = calibrate_threshold(&labelled, 0.01).unwrap();
    let mut order: Vec<&Track> = dataset.tracks().iter().collect();
    order.sort_by_key(|t| (t.start_frame, t.track_id.clone()));
    let reps: Vec<_> = order
        .iter()
        .map(|t| aggregate(t, method.aggregation().unwrap()).unwrap())
        .collect();
    let posts = aggregate_posterior_set(&io::read_posteriors(data.join("posteriors.csv")).unwrap()).unwrap();
    let cfg = ClusteringConfig {
        threshold,
        method: method.aggregation().unwrap(),
        linkage: Linkage::NearestCluster,
    };
    let want = online_cluster(&reps, Some(&posts), &cfg).unwrap();
    let want_records: Vec<io::ClusterRecord> = want.iter().map(io::ClusterRecord::from).collect();
    assert_eq!(got, want_records);
    let labels = io::read_labels(data.join("labels.csv")).unwrap();
    let pr = purity(&want, &labels).unwrap();
    assert!(
        stderr(&o).contains(&format!("purity {:.4}", pr.purity)),
        "{}",
        stderr(&o)
    );
}

#[test]
fn bench_counts_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("b.json");
    let o = run(&[
        "bench",
        "--frames-per-track",
        "50",
        "--dim",
        "8",
        "--pairs",
        "3",
        "--methods",
        "l2-pairwise,avepool-l2",
        "--json",
        p(&json),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["rows"][0]["evaluations_per_pair"], 2500);
    assert_eq!(v["rows"][1]["evaluations_per_pair"], 1);
    assert!(stdout(&o).contains("AvePool (3) -> L2-norm"));
    assert_eq!(run(&["bench", "--pairs", "0"]).status.code(), Some(1));
}

#[test]
fn thread_env_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("TRACKFOLD_THREADS", "many")
        .args(["synth", "--identities", "2", "--out-dir", p(dir.path())])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin()
        .env("TRACKFOLD_THREADS", "2")
        .args([
            "synth",
            "--identities",
            "2",
            "--same-pairs",
            "2",
            "--diff-pairs",
            "2",
            "--folds",
            "2",
            "--out-dir",
            p(dir.path()),
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

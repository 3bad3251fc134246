use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use trackfold::aggregation::{aggregate_posterior_set, aggregate_with, AggregationMethod};
use trackfold::bench::{format_bench_table, run_bench, BenchConfig};
use trackfold::clustering::{hac_cluster, online_cluster, purity, ClusteringConfig, Linkage};
use trackfold::dissimilarity::{DistanceKind, TrackDistanceMethod};
use trackfold::evaluation::{
    calibrate_threshold, format_table, kfold_report_scored, score_pairs_with, score_posterior_pairs, EvalReport,
    PosteriorFeature, ReportRow, ScoredPair,
};
use trackfold::feature::{validate_dataset, Track, TrackDataset};
use trackfold::io;
use trackfold::synth::{generate, make_pairs, SynthConfig};
use trackfold::{Error, Result};

const THREADS_ENV: &str = "TRACKFOLD_THREADS";

#[derive(Parser)]
#[command(
    name = "trackfold",
    version,
    about = "Aggregate, match and cluster face-track embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Write one aggregated representation per track.
    Aggregate(AggregateArgs),
    /// K-fold verification report for one or more methods.
    Eval(EvalArgs),
    /// Print the distance threshold that meets a FAR target on training pairs.
    Calibrate(CalibrateArgs),
    /// Group tracks into clusters.
    Cluster(ClusterArgs),
    /// Time pairwise matching against representation matching.
    Bench(BenchArgs),
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 50)]
    identities: usize,
    #[arg(long, default_value_t = 3)]
    tracks_per_id: usize,
    /// Frames per track; with --frames-max, the minimum.
    #[arg(long, default_value_t = 20)]
    frames: usize,
    #[arg(long)]
    frames_max: Option<usize>,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 0.5)]
    gain_spread: f64,
    #[arg(long, default_value_t = 0.1)]
    demographics_noise: f64,
    #[arg(long, default_value_t = 150)]
    same_pairs: usize,
    #[arg(long, default_value_t = 150)]
    diff_pairs: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(clap::Args)]
struct AggregateArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    method: String,
    #[arg(long, value_enum, default_value_t = Metric::Euclidean)]
    distance: Metric,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Euclidean,
    Kl,
}

impl From<Metric> for DistanceKind {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Euclidean => DistanceKind::Euclidean,
            Metric::Kl => DistanceKind::KlSymmetric,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Features {
    Embeddings,
    Age,
    Gender,
    AgeGender,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Tracks file; required unless posterior features are scored.
    #[arg(long)]
    tracks: Option<PathBuf>,
    #[arg(long)]
    pairs: PathBuf,
    /// Method name; repeat or comma-separate. Defaults to all seven.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    #[arg(long, default_value_t = 0.01)]
    far: f64,
    #[arg(long, value_enum, default_value_t = Features::Embeddings)]
    features: Features,
    /// Posteriors file used with --features age|gender|age-gender.
    #[arg(long)]
    posteriors: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Metric::Euclidean)]
    distance: Metric,
    /// JSON report path; the text table is written next to it as .txt.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CalibrateArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value = "avepool-l2")]
    method: String,
    #[arg(long, default_value_t = 0.01)]
    far: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Online,
    Hac,
}

#[derive(clap::Args)]
struct ClusterArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    posteriors: Option<PathBuf>,
    #[arg(long, default_value = "avepool-l2")]
    method: String,
    #[arg(long, conflicts_with = "auto_far", required_unless_present = "auto_far")]
    threshold: Option<f64>,
    /// Calibrate the threshold at this FAR on --train-pairs.
    #[arg(long, requires = "train_pairs")]
    auto_far: Option<f64>,
    #[arg(long)]
    train_pairs: Option<PathBuf>,
    /// Tracks referenced by --train-pairs; defaults to --tracks.
    #[arg(long)]
    train_tracks: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Online)]
    mode: Mode,
    /// Labels file; when given, purity is reported on stderr.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 50)]
    frames_per_track: usize,
    #[arg(long, default_value_t = 256)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    pairs: usize,
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn parse_methods(names: &[String]) -> Result<Vec<TrackDistanceMethod>> {
    if names.is_empty() {
        return Ok(TrackDistanceMethod::TABLE_ROWS.to_vec());
    }
    names.iter().map(|n| TrackDistanceMethod::parse(n)).collect()
}

fn representation_method(name: &str) -> Result<AggregationMethod> {
    TrackDistanceMethod::parse(name)?.aggregation().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "method '{name}' compares frames pairwise and has no per-track representation"
        ))
    })
}

fn load_tracks(path: &Path) -> Result<TrackDataset> {
    let dataset = io::read_tracks(path)?;
    let report = validate_dataset(&dataset);
    if let Some(first) = report.findings.first() {
        return Err(Error::InvalidArgument(format!("{}: {first}", path.display())));
    }
    Ok(dataset)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: a.seed,
        dim: a.dim,
        identities: a.identities,
        tracks_per_identity: a.tracks_per_id,
        frames_min: a.frames,
        frames_max: a.frames_max.unwrap_or(a.frames),
        noise_sigma: a.noise,
        gain_spread: a.gain_spread,
        demographics_noise: a.demographics_noise,
    };
    let data = generate(&cfg)?;
    let pairs = make_pairs(&data.labels, a.same_pairs, a.diff_pairs, a.folds, a.seed)?;
    fs::create_dir_all(&a.out_dir).map_err(|source| Error::Io {
        path: a.out_dir.display().to_string(),
        source,
    })?;
    io::write_tracks(&data.dataset, a.out_dir.join("tracks.csv"))?;
    io::write_labels(&data.labels, a.out_dir.join("labels.csv"))?;
    io::write_posteriors(&data.posteriors, a.out_dir.join("posteriors.csv"))?;
    io::write_pairs(&pairs, a.out_dir.join("pairs.csv"))?;
    io::write_demographics(&data.identities, a.out_dir.join("demographics.csv"))?;
    eprintln!(
        "wrote {} tracks ({} frames) and {} pairs to {}",
        data.dataset.track_count(),
        data.dataset.total_frames(),
        pairs.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_aggregate(a: &AggregateArgs) -> Result<()> {
    let method = representation_method(&a.method)?;
    let dataset = load_tracks(&a.tracks)?;
    let kind = a.distance.into();
    let reps = dataset
        .tracks()
        .iter()
        .map(|t| aggregate_with(t, method, kind))
        .collect::<Result<Vec<_>>>()?;
    io::write_representations(&reps, &a.out)
}

fn score(
    a: &EvalArgs,
    method: TrackDistanceMethod,
    pairs: &[trackfold::VerificationPair],
    data: &EvalData,
) -> Result<Vec<ScoredPair>> {
    let kind = a.distance.into();
    match data {
        EvalData::Tracks(d) => score_pairs_with(d, pairs, method, kind),
        EvalData::Posteriors(p, feature) => score_posterior_pairs(p, pairs, *feature, method, kind),
    }
}

enum EvalData {
    Tracks(TrackDataset),
    Posteriors(trackfold::PosteriorSet, PosteriorFeature),
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let methods = parse_methods(&a.method)?;
    let pairs = io::read_pairs(&a.pairs)?;
    let data = match a.features {
        Features::Embeddings => {
            let path = a
                .tracks
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("--tracks is required for embedding features".into()))?;
            EvalData::Tracks(load_tracks(path)?)
        }
        f => {
            let path = a
                .posteriors
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("--posteriors is required for posterior features".into()))?;
            let feature = match f {
                Features::Age => PosteriorFeature::Age,
                Features::Gender => PosteriorFeature::Gender,
                _ => PosteriorFeature::AgeGender,
            };
            EvalData::Posteriors(io::read_posteriors(path)?, feature)
        }
    };
    let rows = methods
        .iter()
        .map(|m| {
            let scored = score(a, *m, &pairs, &data)?;
            Ok(ReportRow {
                method: m.name().into(),
                label: m.label().into(),
                report: kfold_report_scored(&scored, a.far)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport {
        far_target: a.far,
        rows,
    };
    let table = match &a.report {
        Some(path) => io::write_report(&report, path)?,
        None => format_table(&report),
    };
    print!("{table}");
    Ok(())
}

fn calibrated_threshold(
    tracks: &TrackDataset,
    pairs_path: &Path,
    method: TrackDistanceMethod,
    far: f64,
) -> Result<f64> {
    let pairs = io::read_pairs(pairs_path)?;
    let scored = score_pairs_with(tracks, &pairs, method, DistanceKind::Euclidean)?;
    let labelled: Vec<(bool, f64)> = scored.iter().map(ScoredPair::labelled).collect();
    calibrate_threshold(&labelled, far)
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<()> {
    let method = TrackDistanceMethod::parse(&a.method)?;
    let tracks = load_tracks(&a.tracks)?;
    let theta = calibrated_threshold(&tracks, &a.pairs, method, a.far)?;
    println!("{theta}");
    Ok(())
}

/// Tracks in arrival order: by first frame, then by id.
fn arrival_order(dataset: &TrackDataset) -> Vec<&Track> {
    let mut tracks: Vec<&Track> = dataset.tracks().iter().collect();
    tracks.sort_by(|a, b| (a.start_frame, &a.track_id).cmp(&(b.start_frame, &b.track_id)));
    tracks
}

fn cmd_cluster(a: &ClusterArgs) -> Result<()> {
    let method = representation_method(&a.method)?;
    let dataset = load_tracks(&a.tracks)?;
    let threshold = match (a.threshold, a.auto_far, &a.train_pairs) {
        (Some(t), _, _) => t,
        (None, Some(far), Some(train)) => {
            let train_tracks = match &a.train_tracks {
                Some(p) => load_tracks(p)?,
                None => dataset.clone(),
            };
            let theta = calibrated_threshold(&train_tracks, train, TrackDistanceMethod::Representation(method), far)?;
            eprintln!("calibrated threshold {theta} at FAR {far}");
            theta
        }
        _ => {
            return Err(Error::InvalidArgument(
                "give --threshold or --auto-far with --train-pairs".into(),
            ))
        }
    };
    let posteriors = match &a.posteriors {
        Some(p) => Some(aggregate_posterior_set(&io::read_posteriors(p)?)?),
        None => None,
    };
    let reps = arrival_order(&dataset)
        .into_iter()
        .map(|t| aggregate_with(t, method, DistanceKind::Euclidean))
        .collect::<Result<Vec<_>>>()?;
    let linkage = match a.mode {
        Mode::Online => Linkage::NearestCluster,
        Mode::Hac => Linkage::AverageLinkage,
    };
    let cfg = ClusteringConfig {
        threshold,
        method,
        linkage,
    };
    let clusters = match a.mode {
        Mode::Online => online_cluster(&reps, posteriors.as_ref(), &cfg)?,
        Mode::Hac => hac_cluster(&reps, posteriors.as_ref(), &cfg)?,
    };
    io::write_clusters(&clusters, &a.out)?;
    eprintln!("{} tracks in {} clusters", reps.len(), clusters.len());
    if let Some(path) = &a.labels {
        let labels: BTreeMap<String, String> = io::read_labels(path)?;
        let p = purity(&clusters, &labels)?;
        eprintln!("purity {:.4} ({} impure clusters)", p.purity, p.impure_clusters);
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        frames_per_track: a.frames_per_track,
        dim: a.dim,
        pairs: a.pairs,
        methods: parse_methods(&a.methods)?,
        seed: a.seed,
    };
    let report = run_bench(&cfg)?;
    print!("{}", format_bench_table(&report));
    if let Some(path) = &a.json {
        write_file(path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a non-negative integer, got '{value}'")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

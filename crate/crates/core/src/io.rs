//! CSV and JSON Lines formats for tracks, labels, pairs, posteriors,
//! representations, clusters and evaluation reports.
//!
//! All text is UTF-8 with `\n` line endings. Floats are written with 17
//! significant digits so every `f64` survives a round trip. Readers reject
//! anything malformed with the offending line number and never repair.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationMethod, TrackRepresentation};
use crate::clustering::{estimate_demographics, Cluster, Demographics, Gender};
use crate::error::{Error, Result};
use crate::evaluation::{format_table, EvalReport, VerificationPair};
use crate::feature::{
    FeatureVector, PosteriorSet, Posteriors, ProbabilityVector, Track, TrackDataset, TrackPosteriors, AGE_CATEGORIES,
    GENDER_CATEGORIES,
};
use crate::synth::Identity;

/// Track id to subject id.
pub type Labels = BTreeMap<String, String>;

/// Per-row sum tolerance for posterior blocks read from disk.
pub const POSTERIOR_FILE_TOL: f64 = 1e-4;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn source_name(path: &Path) -> String {
    path.display().to_string()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| Error::Io {
        path: source_name(path),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: source_name(path),
        source,
    })
}

fn io_err(source: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: source.to_string(),
        source: e,
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn csv_err(source: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io {
            path: source.to_string(),
            source: io,
        },
        other => Error::Parse {
            path: source.to_string(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, source: &str, row: &[String]) -> Result<()> {
    w.write_record(row).map_err(|e| csv_err(source, e))
}

fn finish<W: Write>(w: csv::Writer<W>, source: &str) -> Result<()> {
    let mut inner = w.into_inner().map_err(|e| Error::Io {
        path: source.to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    inner.flush().map_err(io_err(source))
}

/// Row-by-row CSV reader that tracks line numbers and checks the header.
struct Rows<R: Read> {
    reader: csv::Reader<R>,
    source: String,
    record: csv::StringRecord,
    line: u64,
}

impl<R: Read> Rows<R> {
    fn new(r: R, source: &str) -> Self {
        Rows {
            reader: csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .from_reader(r),
            source: source.to_string(),
            record: csv::StringRecord::new(),
            line: 0,
        }
    }

    fn next(&mut self) -> Result<bool> {
        let more = self
            .reader
            .read_record(&mut self.record)
            .map_err(|e| csv_err(&self.source, e))?;
        if more {
            self.line = self.record.position().map(|p| p.line()).unwrap_or(self.line + 1);
        }
        Ok(more)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    fn header(&mut self) -> Result<Vec<String>> {
        if !self.next()? {
            return Err(Error::Parse {
                path: self.source.clone(),
                line: 1,
                message: "missing header".into(),
            });
        }
        Ok(self.record.iter().map(str::to_string).collect())
    }

    fn expect_header(&mut self, want: &[String]) -> Result<()> {
        let got = self.header()?;
        if got != want {
            return Err(self.err(format!(
                "expected header '{}', found '{}'",
                want.join(","),
                got.join(",")
            )));
        }
        Ok(())
    }

    fn expect_fields(&self, n: usize) -> Result<()> {
        if self.record.len() != n {
            return Err(self.err(format!("expected {n} fields, found {}", self.record.len())));
        }
        Ok(())
    }

    fn field(&self, i: usize) -> &str {
        &self.record[i]
    }

    fn text(&self, i: usize, what: &str) -> Result<String> {
        let s = self.field(i);
        if s.is_empty() {
            return Err(self.err(format!("empty {what}")));
        }
        Ok(s.to_string())
    }

    fn int<T: std::str::FromStr>(&self, i: usize, what: &str) -> Result<T> {
        self.field(i)
            .parse()
            .map_err(|_| self.err(format!("invalid {what} '{}'", self.field(i))))
    }

    fn float(&self, i: usize) -> Result<f64> {
        let s = self.field(i);
        match s.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(self.err(format!("invalid number '{s}' in column {}", i + 1))),
        }
    }

    fn floats(&self, from: usize) -> Result<Vec<f64>> {
        (from..self.record.len()).map(|i| self.float(i)).collect()
    }
}

fn indexed_header(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

/// Checks that frame rows arrive sorted by track id with contiguous frame
/// indices. Returns true when the row opens a new track.
struct FrameOrder {
    current: Option<(String, i64)>,
    seen: HashSet<String>,
}

impl FrameOrder {
    fn new() -> Self {
        FrameOrder {
            current: None,
            seen: HashSet::new(),
        }
    }

    fn advance<R: Read>(&mut self, rows: &Rows<R>, track: &str, frame: i64) -> Result<bool> {
        match &mut self.current {
            Some((id, last)) if id == track => {
                if frame == *last {
                    return Err(Error::DuplicateFrame {
                        path: rows.source.clone(),
                        line: rows.line,
                        track: track.to_string(),
                        frame,
                    });
                }
                if frame != *last + 1 {
                    return Err(rows.err(format!("frame {frame} of track '{track}' does not follow frame {last}")));
                }
                *last = frame;
                Ok(false)
            }
            current => {
                if self.seen.contains(track) {
                    return Err(rows.err(format!("rows of track '{track}' are not contiguous")));
                }
                if let Some((prev, _)) = current {
                    if track < prev.as_str() {
                        return Err(rows.err(format!("track '{track}' follows '{prev}'; rows must be sorted")));
                    }
                }
                self.seen.insert(track.to_string());
                *current = Some((track.to_string(), frame));
                Ok(true)
            }
        }
    }
}

pub fn write_tracks_to<W: Write>(dataset: &TrackDataset, w: W, source: &str) -> Result<()> {
    let dim = dataset.dim().unwrap_or(0);
    let mut out = csv_writer(w);
    let header: Vec<String> = ["track_id".to_string(), "frame_index".to_string()]
        .into_iter()
        .chain(indexed_header("v", dim))
        .collect();
    write_row(&mut out, source, &header)?;
    let mut tracks: Vec<&Track> = dataset.tracks().iter().collect();
    tracks.sort_by(|a, b| a.track_id.cmp(&b.track_id));
    for t in tracks {
        for (i, f) in t.frames.iter().enumerate() {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: f.dim(),
                });
            }
            let mut row = Vec::with_capacity(dim + 2);
            row.push(t.track_id.clone());
            row.push((t.start_frame + i as i64).to_string());
            row.extend(f.as_slice().iter().map(|x| fmt_f64(*x)));
            write_row(&mut out, source, &row)?;
        }
    }
    finish(out, source)
}

pub fn write_tracks(dataset: &TrackDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_tracks_to(dataset, create(path)?, &source_name(path))
}

pub fn read_tracks_from<R: Read>(r: R, source: &str) -> Result<TrackDataset> {
    let mut rows = Rows::new(r, source);
    let header = rows.header()?;
    if header.len() < 3 || header[0] != "track_id" || header[1] != "frame_index" {
        return Err(rows.err("header must be 'track_id,frame_index,v0,...'"));
    }
    let dim = header.len() - 2;
    if !header[2..]
        .iter()
        .eq(indexed_header("v", dim).collect::<Vec<_>>().iter())
    {
        return Err(rows.err("feature columns must be named v0, v1, ..."));
    }
    let mut order = FrameOrder::new();
    let mut tracks: Vec<Track> = Vec::new();
    while rows.next()? {
        if rows.record.len() < 2 {
            return Err(rows.err("row has fewer than two fields"));
        }
        if rows.record.len() != dim + 2 {
            return Err(Error::FileDimensionMismatch {
                path: source.to_string(),
                line: rows.line,
                expected: dim,
                found: rows.record.len() - 2,
            });
        }
        let id = rows.text(0, "track id")?;
        let frame: i64 = rows.int(1, "frame index")?;
        let values = FeatureVector::new_unchecked(rows.floats(2)?);
        if order.advance(&rows, &id, frame)? {
            tracks.push(Track::new(id, frame, vec![values]));
        } else if let Some(t) = tracks.last_mut() {
            t.frames.push(values);
        }
    }
    Ok(TrackDataset::new(tracks))
}

pub fn read_tracks(path: impl AsRef<Path>) -> Result<TrackDataset> {
    let path = path.as_ref();
    read_tracks_from(open(path)?, &source_name(path))
}

pub fn write_labels_to<W: Write>(labels: &Labels, w: W, source: &str) -> Result<()> {
    let mut out = csv_writer(w);
    write_row(&mut out, source, &["track_id".into(), "subject_id".into()])?;
    for (t, s) in labels {
        write_row(&mut out, source, &[t.clone(), s.clone()])?;
    }
    finish(out, source)
}

pub fn write_labels(labels: &Labels, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_labels_to(labels, create(path)?, &source_name(path))
}

pub fn read_labels_from<R: Read>(r: R, source: &str) -> Result<Labels> {
    let mut rows = Rows::new(r, source);
    rows.expect_header(&["track_id".into(), "subject_id".into()])?;
    let mut labels = Labels::new();
    while rows.next()? {
        rows.expect_fields(2)?;
        let t = rows.text(0, "track id")?;
        let s = rows.text(1, "subject id")?;
        if labels.insert(t.clone(), s).is_some() {
            return Err(rows.err(format!("duplicate track id '{t}'")));
        }
    }
    Ok(labels)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Labels> {
    let path = path.as_ref();
    read_labels_from(open(path)?, &source_name(path))
}

const PAIR_HEADER: [&str; 4] = ["track_a", "track_b", "same", "fold"];

pub fn write_pairs_to<W: Write>(pairs: &[VerificationPair], w: W, source: &str) -> Result<()> {
    let mut out = csv_writer(w);
    write_row(&mut out, source, &PAIR_HEADER.map(String::from))?;
    for p in pairs {
        let row = [
            p.track_a.clone(),
            p.track_b.clone(),
            u8::from(p.same).to_string(),
            p.fold.to_string(),
        ];
        write_row(&mut out, source, &row)?;
    }
    finish(out, source)
}

pub fn write_pairs(pairs: &[VerificationPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_pairs_to(pairs, create(path)?, &source_name(path))
}

pub fn read_pairs_from<R: Read>(r: R, source: &str) -> Result<Vec<VerificationPair>> {
    let mut rows = Rows::new(r, source);
    rows.expect_header(&PAIR_HEADER.map(String::from))?;
    let mut pairs = Vec::new();
    while rows.next()? {
        rows.expect_fields(4)?;
        let same = match rows.field(2) {
            "0" => false,
            "1" => true,
            other => return Err(rows.err(format!("same must be 0 or 1, found '{other}'"))),
        };
        let pair = VerificationPair {
            track_a: rows.text(0, "track id")?,
            track_b: rows.text(1, "track id")?,
            same,
            fold: rows.int(3, "fold")?,
        };
        if pair.track_a == pair.track_b {
            return Err(rows.err(format!("track '{}' paired with itself", pair.track_a)));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<VerificationPair>> {
    let path = path.as_ref();
    read_pairs_from(open(path)?, &source_name(path))
}

fn posterior_header() -> Vec<String> {
    ["track_id".to_string(), "frame_index".to_string()]
        .into_iter()
        .chain(indexed_header("age", AGE_CATEGORIES))
        .chain(indexed_header("gender", GENDER_CATEGORIES))
        .collect()
}

pub fn write_posteriors_to<W: Write>(set: &PosteriorSet, w: W, source: &str) -> Result<()> {
    let mut out = csv_writer(w);
    write_row(&mut out, source, &posterior_header())?;
    for (id, tp) in set {
        for (i, p) in tp.frames.iter().enumerate() {
            let mut row = vec![id.clone(), (tp.start_frame + i as i64).to_string()];
            row.extend(p.age.as_slice().iter().chain(p.gender.as_slice()).map(|x| fmt_f64(*x)));
            write_row(&mut out, source, &row)?;
        }
    }
    finish(out, source)
}

pub fn write_posteriors(set: &PosteriorSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_posteriors_to(set, create(path)?, &source_name(path))
}

pub fn read_posteriors_from<R: Read>(r: R, source: &str) -> Result<PosteriorSet> {
    let mut rows = Rows::new(r, source);
    rows.expect_header(&posterior_header())?;
    let width = 2 + AGE_CATEGORIES + GENDER_CATEGORIES;
    let mut order = FrameOrder::new();
    let mut set = PosteriorSet::new();
    let mut current: Option<String> = None;
    while rows.next()? {
        rows.expect_fields(width)?;
        let id = rows.text(0, "track id")?;
        let frame: i64 = rows.int(1, "frame index")?;
        let values = rows.floats(2)?;
        let block = |v: &[f64], what: &str| {
            ProbabilityVector::with_tolerance(v.to_vec(), POSTERIOR_FILE_TOL)
                .map_err(|e| rows.err(format!("{what} block: {e}")))
        };
        let age = block(&values[..AGE_CATEGORIES], "age")?;
        let gender = block(&values[AGE_CATEGORIES..], "gender")?;
        let post = Posteriors::new(age, gender)?;
        if order.advance(&rows, &id, frame)? {
            set.insert(
                id.clone(),
                TrackPosteriors {
                    start_frame: frame,
                    frames: vec![post],
                },
            );
            current = Some(id);
        } else if let Some(tp) = current.as_ref().and_then(|c| set.get_mut(c)) {
            tp.frames.push(post);
        }
    }
    Ok(set)
}

pub fn read_posteriors(path: impl AsRef<Path>) -> Result<PosteriorSet> {
    let path = path.as_ref();
    read_posteriors_from(open(path)?, &source_name(path))
}

pub fn write_representations_to<W: Write>(reps: &[TrackRepresentation], w: W, source: &str) -> Result<()> {
    let dim = reps.first().map_or(0, |r| r.vector.dim());
    let mut out = csv_writer(w);
    let header: Vec<String> = ["track_id", "method", "frame_count"]
        .into_iter()
        .map(String::from)
        .chain(indexed_header("v", dim))
        .collect();
    write_row(&mut out, source, &header)?;
    let mut sorted: Vec<&TrackRepresentation> = reps.iter().collect();
    sorted.sort_by(|a, b| a.track_id.cmp(&b.track_id));
    for r in sorted {
        if r.vector.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.vector.dim(),
            });
        }
        let mut row = vec![
            r.track_id.clone(),
            r.method.name().to_string(),
            r.frame_count.to_string(),
        ];
        row.extend(r.vector.as_slice().iter().map(|x| fmt_f64(*x)));
        write_row(&mut out, source, &row)?;
    }
    finish(out, source)
}

pub fn write_representations(reps: &[TrackRepresentation], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_representations_to(reps, create(path)?, &source_name(path))
}

/// Reads representations; `pooled` is set equal to the stored vector.
pub fn read_representations_from<R: Read>(r: R, source: &str) -> Result<Vec<TrackRepresentation>> {
    let mut rows = Rows::new(r, source);
    let header = rows.header()?;
    if header.len() < 4 || header[..3] != ["track_id", "method", "frame_count"] {
        return Err(rows.err("header must be 'track_id,method,frame_count,v0,...'"));
    }
    let dim = header.len() - 3;
    let mut reps = Vec::new();
    let mut seen = HashSet::new();
    while rows.next()? {
        if rows.record.len() != dim + 3 {
            return Err(Error::FileDimensionMismatch {
                path: source.to_string(),
                line: rows.line,
                expected: dim,
                found: rows.record.len().saturating_sub(3),
            });
        }
        let id = rows.text(0, "track id")?;
        if !seen.insert(id.clone()) {
            return Err(rows.err(format!("duplicate track id '{id}'")));
        }
        let method = AggregationMethod::from_name(rows.field(1))
            .ok_or_else(|| rows.err(format!("unknown aggregation method '{}'", rows.field(1))))?;
        let frames: usize = rows.int(2, "frame count")?;
        let vector = FeatureVector::new_unchecked(rows.floats(3)?);
        reps.push(TrackRepresentation::new(id, vector, method, frames));
    }
    Ok(reps)
}

pub fn read_representations(path: impl AsRef<Path>) -> Result<Vec<TrackRepresentation>> {
    let path = path.as_ref();
    read_representations_from(open(path)?, &source_name(path))
}

const DEMOGRAPHICS_HEADER: [&str; 3] = ["subject_id", "gender", "age_category"];

/// Ground-truth demographics per subject.
pub fn write_demographics_to<W: Write>(identities: &[Identity], w: W, source: &str) -> Result<()> {
    let mut out = csv_writer(w);
    write_row(&mut out, source, &DEMOGRAPHICS_HEADER.map(String::from))?;
    let mut sorted: Vec<&Identity> = identities.iter().collect();
    sorted.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    for i in sorted {
        let row = [
            i.subject_id.clone(),
            i.gender.name().to_string(),
            i.age_category.to_string(),
        ];
        write_row(&mut out, source, &row)?;
    }
    finish(out, source)
}

pub fn write_demographics(identities: &[Identity], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_demographics_to(identities, create(path)?, &source_name(path))
}

/// Subject id to (gender, age category).
pub fn read_demographics_from<R: Read>(r: R, source: &str) -> Result<BTreeMap<String, Demographics>> {
    let mut rows = Rows::new(r, source);
    rows.expect_header(&DEMOGRAPHICS_HEADER.map(String::from))?;
    let mut out = BTreeMap::new();
    while rows.next()? {
        rows.expect_fields(3)?;
        let subject = rows.text(0, "subject id")?;
        let gender = Gender::from_name(rows.field(1))
            .ok_or_else(|| rows.err(format!("gender must be 'male' or 'female', found '{}'", rows.field(1))))?;
        let age_category: usize = rows.int(2, "age category")?;
        if age_category >= AGE_CATEGORIES {
            return Err(rows.err(format!("age category {age_category} out of range")));
        }
        if out
            .insert(subject.clone(), Demographics { gender, age_category })
            .is_some()
        {
            return Err(rows.err(format!("duplicate subject id '{subject}'")));
        }
    }
    Ok(out)
}

pub fn read_demographics(path: impl AsRef<Path>) -> Result<BTreeMap<String, Demographics>> {
    let path = path.as_ref();
    read_demographics_from(open(path)?, &source_name(path))
}

/// One line of a clusters file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub cluster_id: usize,
    pub track_ids: Vec<String>,
    pub total_frames: usize,
    pub gender: Option<Gender>,
    pub age_category: Option<usize>,
    pub representation: Vec<f64>,
}

impl From<&Cluster> for ClusterRecord {
    fn from(c: &Cluster) -> Self {
        let demo = estimate_demographics(c).ok();
        ClusterRecord {
            cluster_id: c.cluster_id,
            track_ids: c.track_ids.clone(),
            total_frames: c.total_frames,
            gender: demo.map(|d| d.gender),
            age_category: demo.map(|d| d.age_category),
            representation: c.representation.as_slice().to_vec(),
        }
    }
}

pub fn write_cluster_records_to<W: Write>(records: &[ClusterRecord], mut w: W, source: &str) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(io_err(source))?;
    }
    w.flush().map_err(io_err(source))
}

pub fn write_clusters(clusters: &[Cluster], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let records: Vec<ClusterRecord> = clusters.iter().map(ClusterRecord::from).collect();
    write_cluster_records_to(&records, create(path)?, &source_name(path))
}

/// Reads a clusters file, checking that no track belongs to two clusters.
pub fn read_clusters_from<R: Read>(r: R, source: &str) -> Result<Vec<ClusterRecord>> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text).map_err(io_err(source))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let parse_err = |message: String| Error::Parse {
            path: source.to_string(),
            line: i as u64 + 1,
            message,
        };
        let rec: ClusterRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        for t in &rec.track_ids {
            if !seen.insert(t.clone()) {
                return Err(parse_err(format!("track '{t}' appears in more than one cluster")));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_clusters(path: impl AsRef<Path>) -> Result<Vec<ClusterRecord>> {
    let path = path.as_ref();
    read_clusters_from(open(path)?, &source_name(path))
}

/// Writes the report as pretty JSON to `path` and the text table next to it
/// with a `.txt` extension. Returns the table.
pub fn write_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let source = source_name(path);
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n").map_err(io_err(&source))?;
    w.flush().map_err(io_err(&source))?;
    let table = format_table(report);
    let table_path = path.with_extension("txt");
    std::fs::write(&table_path, &table).map_err(io_err(&source_name(&table_path)))?;
    Ok(table)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    Ok(serde_json::from_reader(open(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::aggregate;
    use crate::clustering::{online_cluster, ClusteringConfig, Linkage};
    use crate::synth::{generate, make_pairs, SynthConfig};

    fn roundtrip_bytes<T>(x: &T, write: impl Fn(&T, &mut Vec<u8>) -> Result<()>) -> Vec<u8> {
        let mut buf = Vec::new();
        write(x, &mut buf).unwrap();
        buf
    }

    fn small() -> crate::synth::SynthData {
        generate(&SynthConfig {
            identities: 4,
            dim: 5,
            frames_min: 2,
            frames_max: 6,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn err_line(e: Error) -> u64 {
        match e {
            Error::Parse { line, .. }
            | Error::FileDimensionMismatch { line, .. }
            | Error::DuplicateFrame { line, .. } => line,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn tracks_roundtrip() {
        let data = small();
        let bytes = roundtrip_bytes(&data.dataset, |d, b| write_tracks_to(d, b, "mem"));
        let back = read_tracks_from(&bytes[..], "mem").unwrap();
        let mut expect = data.dataset.clone().into_tracks();
        for t in &mut expect {
            t.subject_id = None;
        }
        assert_eq!(back.tracks(), &expect[..]);
        assert_eq!(roundtrip_bytes(&back, |d, b| write_tracks_to(d, b, "mem")), bytes);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("track_id,frame_index,v0,v1,v2,v3,v4\n"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn tracks_exact_floats() {
        let vals = vec![
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            f64::MAX,
            f64::MIN_POSITIVE,
            123_456_789.123_456_79,
        ];
        let d = TrackDataset::new(vec![Track::from_rows("a", vec![vals.clone()]).unwrap()]);
        let bytes = roundtrip_bytes(&d, |d, b| write_tracks_to(d, b, "mem"));
        let back = read_tracks_from(&bytes[..], "mem").unwrap();
        assert_eq!(back.tracks()[0].frames[0].as_slice(), &vals[..]);
    }

    #[test]
    fn tracks_malformed() {
        let varying = "track_id,frame_index,v0,v1\na,0,1,2\na,1,1,2,3\n";
        let e = read_tracks_from(varying.as_bytes(), "f").unwrap_err();
        assert!(
            matches!(
                e,
                Error::FileDimensionMismatch {
                    line: 3,
                    expected: 2,
                    found: 3,
                    ..
                }
            ),
            "{e}"
        );

        let dup = "track_id,frame_index,v0\na,0,1\na,0,2\n";
        assert!(matches!(
            read_tracks_from(dup.as_bytes(), "f").unwrap_err(),
            Error::DuplicateFrame { line: 3, frame: 0, .. }
        ));

        for (text, line) in [
            ("track_id,frame_index,v0\na,0,x\n", 2),
            ("track_id,frame_index,v0\na,0,1\na,2,1\n", 3),
            ("track_id,frame_index,v0\nb,0,1\na,0,1\n", 3),
            ("track_id,frame_index,v0\na,0,1\nb,0,1\na,1,1\n", 4),
            ("track_id,frame_index,v0\na,zero,1\n", 2),
            ("track_id,frame_index,v0\na,0,NaN\n", 2),
            ("track_id,frame_index,v0\n,0,1\n", 2),
            ("id,frame,v0\na,0,1\n", 1),
            ("", 1),
        ] {
            let e = read_tracks_from(text.as_bytes(), "f").unwrap_err();
            assert_eq!(err_line(e), line, "{text:?}");
        }
    }

    #[test]
    fn tracks_missing_file_is_io() {
        assert!(read_tracks("/nonexistent/tracks.csv").unwrap_err().is_io());
    }

    #[test]
    fn labels_roundtrip_and_malformed() {
        let data = small();
        let bytes = roundtrip_bytes(&data.labels, |l, b| write_labels_to(l, b, "mem"));
        assert_eq!(read_labels_from(&bytes[..], "mem").unwrap(), data.labels);
        let dup = "track_id,subject_id\na,x\na,y\n";
        assert_eq!(err_line(read_labels_from(dup.as_bytes(), "f").unwrap_err()), 3);
        let short = "track_id,subject_id\na\n";
        assert_eq!(err_line(read_labels_from(short.as_bytes(), "f").unwrap_err()), 2);
    }

    #[test]
    fn pairs_roundtrip_and_malformed() {
        let data = small();
        let pairs = make_pairs(&data.labels, 5, 5, 2, 1).unwrap();
        let bytes = roundtrip_bytes(&pairs, |p, b| write_pairs_to(p, b, "mem"));
        assert_eq!(read_pairs_from(&bytes[..], "mem").unwrap(), pairs);
        for text in [
            "track_a,track_b,same,fold\na,b,2,0\n",
            "track_a,track_b,same,fold\na,b,1,-1\n",
            "track_a,track_b,same,fold\na,a,1,0\n",
        ] {
            assert_eq!(err_line(read_pairs_from(text.as_bytes(), "f").unwrap_err()), 2);
        }
    }

    #[test]
    fn posteriors_roundtrip_and_malformed() {
        let data = small();
        let bytes = roundtrip_bytes(&data.posteriors, |p, b| write_posteriors_to(p, b, "mem"));
        assert_eq!(read_posteriors_from(&bytes[..], "mem").unwrap(), data.posteriors);
        let header = posterior_header().join(",");
        let bad_sum = format!("{header}\na,0,0.5,0,0,0,0,0,0,0,0.5,0.5\n");
        let e = read_posteriors_from(bad_sum.as_bytes(), "f").unwrap_err();
        assert_eq!(err_line(e), 2);
        let near = format!("{header}\na,0,0.99995,0,0,0,0,0,0,0,0.5,0.5\n");
        assert!(read_posteriors_from(near.as_bytes(), "f").is_ok());
        let negative = format!("{header}\na,0,1.2,-0.2,0,0,0,0,0,0,0.5,0.5\n");
        assert_eq!(err_line(read_posteriors_from(negative.as_bytes(), "f").unwrap_err()), 2);
    }

    #[test]
    fn demographics_roundtrip_and_malformed() {
        let data = small();
        let bytes = roundtrip_bytes(&data.identities, |i, b| write_demographics_to(i, b, "mem"));
        let back = read_demographics_from(&bytes[..], "mem").unwrap();
        assert_eq!(back.len(), data.identities.len());
        for i in &data.identities {
            assert_eq!(
                back[&i.subject_id],
                Demographics {
                    gender: i.gender,
                    age_category: i.age_category
                }
            );
        }
        let bad = "subject_id,gender,age_category\nx,other,1\n";
        assert_eq!(err_line(read_demographics_from(bad.as_bytes(), "f").unwrap_err()), 2);
        let range = "subject_id,gender,age_category\nx,male,8\n";
        assert_eq!(err_line(read_demographics_from(range.as_bytes(), "f").unwrap_err()), 2);
    }

    #[test]
    fn representations_roundtrip() {
        let data = small();
        for m in AggregationMethod::ALL {
            let reps: Vec<_> = data.dataset.tracks().iter().map(|t| aggregate(t, m).unwrap()).collect();
            let bytes = roundtrip_bytes(&reps, |r, b| write_representations_to(r, b, "mem"));
            let back = read_representations_from(&bytes[..], "mem").unwrap();
            assert_eq!(back.len(), reps.len());
            for (a, b) in back.iter().zip(&reps) {
                assert_eq!(
                    (&a.track_id, &a.vector, a.method, a.frame_count),
                    (&b.track_id, &b.vector, b.method, b.frame_count)
                );
            }
        }
        let bad = "track_id,method,frame_count,v0\na,median,3,1\n";
        assert_eq!(err_line(read_representations_from(bad.as_bytes(), "f").unwrap_err()), 2);
    }

    #[test]
    fn clusters_roundtrip_and_partition() {
        let data = small();
        let m = AggregationMethod::ALL[5];
        let reps: Vec<_> = data.dataset.tracks().iter().map(|t| aggregate(t, m).unwrap()).collect();
        let posts = crate::aggregation::aggregate_posterior_set(&data.posteriors).unwrap();
        let cfg = ClusteringConfig {
            threshold: 0.8,
            method: m,
            linkage: Linkage::NearestCluster,
        };
        let clusters = online_cluster(&reps, Some(&posts), &cfg).unwrap();
        let records: Vec<ClusterRecord> = clusters.iter().map(ClusterRecord::from).collect();
        let bytes = roundtrip_bytes(&records, |r, b| write_cluster_records_to(r, b, "mem"));
        assert_eq!(read_clusters_from(&bytes[..], "mem").unwrap(), records);
        assert!(records.iter().all(|r| r.gender.is_some()));

        let overlap = "{\"cluster_id\":0,\"track_ids\":[\"a\"],\"total_frames\":1,\"gender\":null,\"age_category\":null,\"representation\":[1.0]}\n\
                       {\"cluster_id\":1,\"track_ids\":[\"a\"],\"total_frames\":1,\"gender\":null,\"age_category\":null,\"representation\":[1.0]}\n";
        assert_eq!(err_line(read_clusters_from(overlap.as_bytes(), "f").unwrap_err()), 2);
        assert_eq!(
            err_line(read_clusters_from("{not json\n".as_bytes(), "f").unwrap_err()),
            1
        );
    }

    #[test]
    fn report_roundtrip() {
        use crate::dissimilarity::TrackDistanceMethod;
        use crate::evaluation::{kfold_report, ReportRow};
        let data = small();
        let pairs = make_pairs(&data.labels, 6, 6, 2, 3).unwrap();
        let rows = TrackDistanceMethod::TABLE_ROWS
            .iter()
            .map(|m| ReportRow {
                method: m.name().into(),
                label: m.label().into(),
                report: kfold_report(&data.dataset, &pairs, *m, 0.01).unwrap(),
            })
            .collect();
        let report = EvalReport { far_target: 0.01, rows };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let table = write_report(&report, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), report);
        assert_eq!(std::fs::read_to_string(dir.path().join("report.txt")).unwrap(), table);
        let first = std::fs::read(&path).unwrap();
        write_report(&report, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }
}

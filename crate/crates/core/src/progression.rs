//! Progression files and chord-annotation corpora.
//!
//! A progression file lists one `<label> <sixteenths>` pair per line; `#`
//! starts a comment and ` / ` may separate several pairs on one line.
//!
//! Corpus files are timed segment lists, one `<start> <end> <label>` per
//! line with times in seconds, optionally preceded by headers such as
//! `# tempo: 96` and `# metre: 3/4`. Labels `N` and `X` mark segments without
//! a chord and are skipped.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::chord::{timeline_steps, Chord};
use crate::contour::{Meter, STEPS_PER_BEAT};

pub const DEFAULT_CORPUS_TEMPO: f64 = 120.0;

#[derive(Debug, Error)]
pub enum ProgressionError {
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("progression lasts {found} steps, phrase needs {expected}")]
    DurationMismatch { expected: usize, found: usize },
    #[error("no annotation files found in {0}")]
    NoFilesFound(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = ProgressionError> = std::result::Result<T, E>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| ProgressionError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses progression text. An input without any chord is an error.
pub fn parse_progression(text: &str) -> Result<Vec<Chord>> {
    let mut chords = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        for item in content.split(" / ").map(str::trim).filter(|s| !s.is_empty()) {
            let err = |reason: String| ProgressionError::ParseError { line, reason };
            let mut parts = item.split_whitespace();
            let (Some(label), Some(dur), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(format!("expected `<label> <duration>`, found `{item}`")));
            };
            let duration: u32 = dur.parse().map_err(|_| err(format!("bad duration `{dur}`")))?;
            chords.push(Chord::parse(label, duration).map_err(|e| err(e.to_string()))?);
        }
    }
    if chords.is_empty() {
        return Err(ProgressionError::ParseError {
            line: 0,
            reason: "no chords found".into(),
        });
    }
    Ok(chords)
}

/// Checks that a progression fills exactly `n` steps.
pub fn check_phrase_length(chords: &[Chord], n: usize) -> Result<()> {
    let found = timeline_steps(chords);
    if found != n {
        return Err(ProgressionError::DurationMismatch { expected: n, found });
    }
    Ok(())
}

/// Reads a progression file, optionally checking its length.
pub fn load_progression(path: &Path, expected_steps: Option<usize>) -> Result<Vec<Chord>> {
    let chords = parse_progression(&read(path)?)?;
    if let Some(n) = expected_steps {
        check_phrase_length(&chords, n)?;
    }
    Ok(chords)
}

/// Renders a progression in the file format.
pub fn render_progression(chords: &[Chord]) -> String {
    chords
        .iter()
        .map(|c| format!("{} {}\n", c.symbol(), c.duration()))
        .collect()
}

/// One annotation file turned into chords.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSong {
    pub chords: Vec<Chord>,
    pub meter: Meter,
    pub tempo: f64,
    pub skipped_labels: usize,
}

fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let rest = line.trim_start_matches('#').trim();
    let (k, v) = rest.split_once(':')?;
    k.trim().eq_ignore_ascii_case(key).then(|| v.trim())
}

/// Parses one timed annotation. Unparseable labels and segments shorter
/// than half a step are skipped and counted.
pub fn parse_annotation(text: &str, default_tempo: f64) -> Result<AnnotatedSong> {
    let mut tempo = default_tempo;
    let mut meter = Meter::COMMON;
    let mut chords = Vec::new();
    let mut skipped = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            if let Some(v) = header_value(trimmed, "tempo") {
                tempo = v.parse().ok().filter(|t: &f64| *t > 0.0).ok_or_else(|| ProgressionError::ParseError {
                    line,
                    reason: format!("bad tempo `{v}`"),
                })?;
            } else if let Some(v) = header_value(trimmed, "metre").or_else(|| header_value(trimmed, "meter")) {
                let beats = v
                    .split('/')
                    .next()
                    .and_then(|b| b.trim().parse::<usize>().ok())
                    .filter(|&b| b > 0)
                    .ok_or_else(|| ProgressionError::ParseError {
                        line,
                        reason: format!("bad metre `{v}`"),
                    })?;
                meter = Meter { beats_per_bar: beats };
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let times = (fields.len() >= 3)
            .then(|| Some((fields[0].parse::<f64>().ok()?, fields[1].parse::<f64>().ok()?)))
            .flatten();
        let Some((start, end)) = times.filter(|(s, e)| e > s && s.is_finite() && e.is_finite()) else {
            return Err(ProgressionError::ParseError {
                line,
                reason: "expected `<start> <end> <label>`".into(),
            });
        };
        let label = fields[2];
        if label == "N" || label == "X" {
            continue;
        }
        let steps = ((end - start) * tempo / 60.0 * STEPS_PER_BEAT as f64).round();
        if steps < 1.0 {
            skipped += 1;
            continue;
        }
        match Chord::parse(label, steps as u32) {
            Ok(c) => chords.push(c),
            Err(e) => {
                log::debug!("line {line}: skipping `{label}`: {e}");
                skipped += 1;
            }
        }
    }
    Ok(AnnotatedSong {
        chords,
        meter,
        tempo,
        skipped_labels: skipped,
    })
}

/// Result of reading a corpus directory.
#[derive(Debug, Default)]
pub struct Corpus {
    pub songs: Vec<(PathBuf, AnnotatedSong)>,
    pub skipped_labels: usize,
    pub failed_files: Vec<(PathBuf, String)>,
}

impl Corpus {
    pub fn progressions(&self) -> Vec<Vec<Chord>> {
        self.songs.iter().map(|(_, s)| s.chords.clone()).collect()
    }
}

fn is_annotation(path: &Path) -> bool {
    path.is_file()
        && matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("lab") | Some("txt")
        )
}

/// Reads every `.lab`/`.txt` file in `dir`, in file-name order. Files that
/// fail to parse or contain no chord are recorded and skipped.
pub fn ingest_chord_corpus(dir: &Path, default_tempo: f64) -> Result<Corpus> {
    let entries = fs::read_dir(dir).map_err(|source| ProgressionError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_annotation(p))
        .collect();
    if paths.is_empty() {
        return Err(ProgressionError::NoFilesFound(dir.to_path_buf()));
    }
    paths.sort();
    let mut corpus = Corpus::default();
    for path in paths {
        let parsed = fs::read(&path)
            .map_err(|e| e.to_string())
            .map(|bytes| String::from_utf8_lossy(&bytes).into_owned())
            .and_then(|text| parse_annotation(&text, default_tempo).map_err(|e| e.to_string()));
        match parsed {
            Ok(song) if !song.chords.is_empty() => {
                corpus.skipped_labels += song.skipped_labels;
                corpus.songs.push((path, song));
            }
            Ok(_) => corpus.failed_files.push((path, "no chords".into())),
            Err(e) => corpus.failed_files.push((path, e)),
        }
    }
    if corpus.skipped_labels > 0 {
        log::info!("skipped {} unusable chord labels", corpus.skipped_labels);
    }
    for (path, e) in &corpus.failed_files {
        log::warn!("{}: {e}", path.display());
    }
    Ok(corpus)
}

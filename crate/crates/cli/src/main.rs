use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use popgen::chord::ChangeWeights;
use popgen::contour::{melody_to_pitch_curve, MelodyTrack, Meter, PitchCurve};
use popgen::generators::{simplify, GeneratedLine, MelodyKind, SimplifyConfig};
use popgen::harmony::{decorate_progression, DecorationHmm, StyleWeights};
use popgen::midi::{
    notes_to_melody, read_midi, write_smf, MidiTrack, DEFAULT_TEMPO_BPM, LEAD_VELOCITY,
};
use popgen::persist;
use popgen::pipeline::{
    assemble, generate_kind, generate_lines, prepare, run_pipeline, Lines, PipelineConfig, PipelineOutput,
};
use popgen::progression::{ingest_chord_corpus, load_progression, render_progression, DEFAULT_CORPUS_TEMPO};
use popgen::sarma::SeriesStats;

#[derive(Parser)]
#[command(name = "popgen", version, about = "Chord-conditioned melody and accompaniment generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Lead,
    Secondary,
    Harmonic,
}

impl From<Kind> for MelodyKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Lead => MelodyKind::Lead,
            Kind::Secondary => MelodyKind::Secondary,
            Kind::Harmonic => MelodyKind::Harmonic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a decoration model from a directory of chord annotations.
    TrainHmm {
        corpus_dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Additive smoothing constant.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Tempo assumed for files without a tempo header.
        #[arg(long, default_value_t = DEFAULT_CORPUS_TEMPO)]
        tempo: f64,
    },
    /// Decorate a progression file with a trained model.
    Decorate {
        progression: PathBuf,
        #[arg(short, long)]
        model: PathBuf,
        #[arg(long, default_value = "pop")]
        style: String,
        #[arg(short = 'n', long = "top-n", default_value_t = 10)]
        top_n: usize,
        /// Write the decorated progression here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate one melody line as a single-track MIDI file.
    Generate {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(short, long, default_value = "line.mid")]
        output: PathBuf,
    },
    /// Thin out a melody read from a MIDI file.
    Simplify {
        midi_in: PathBuf,
        /// Track to read; defaults to the first track with notes.
        #[arg(long)]
        track: Option<usize>,
        #[arg(long)]
        density: Option<f64>,
        #[arg(short, long, default_value = "simplified.mid")]
        output: PathBuf,
    },
    /// Integrate lines into an arrangement. Lines not given as MIDI files
    /// are generated from the config.
    Integrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lead: Option<PathBuf>,
        #[arg(long)]
        secondary: Option<PathBuf>,
        #[arg(long)]
        simplified: Option<PathBuf>,
        #[arg(long)]
        harmonic: Option<PathBuf>,
        #[arg(short, long, default_value = "arrangement.mid")]
        output: PathBuf,
        /// Report path; defaults to the output with a `.json` extension.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run every stage and write MIDI plus a JSON report.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(short, long, default_value = "out.mid")]
        output: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Overrides the master seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print sample ACF and PACF of a series as CSV.
    AnalyzeAcf {
        /// CSV with one numeric column, or a MIDI file.
        input: PathBuf,
        #[arg(long, default_value_t = 16)]
        max_lag: usize,
        /// MIDI track to analyse.
        #[arg(long)]
        track: Option<usize>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainHmm {
            corpus_dir,
            output,
            alpha,
            tempo,
        } => {
            let corpus = ingest_chord_corpus(&corpus_dir, tempo)?;
            let model = DecorationHmm::train(&corpus.progressions(), alpha)?;
            fs::write(&output, persist::to_json(&model)).with_context(|| output.display().to_string())?;
            eprintln!(
                "{} songs, {} labels skipped, {} files failed, {} states",
                corpus.songs.len(),
                corpus.skipped_labels,
                corpus.failed_files.len(),
                model.state_count()
            );
        }
        Command::Decorate {
            progression,
            model,
            style,
            top_n,
            output,
        } => {
            let chords = load_progression(&progression, None)?;
            let text = fs::read_to_string(&model).with_context(|| model.display().to_string())?;
            let model: DecorationHmm = persist::from_json(&text)?;
            let weights = StyleWeights::profile(&style).with_context(|| format!("unknown style `{style}`"))?;
            let out = decorate_progression(&model, &chords, top_n, &weights, &ChangeWeights::default())?;
            let rendered = render_progression(&out.chords);
            match output {
                Some(path) => fs::write(&path, rendered).with_context(|| path.display().to_string())?,
                None => io::stdout().write_all(rendered.as_bytes())?,
            }
            eprintln!(
                "rank {} of {}, style score {:.4}, log-likelihood {:.4}",
                out.rank, out.candidates, out.style_score, out.log_likelihood
            );
        }
        Command::Generate {
            kind,
            config,
            seed,
            output,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let prep = prepare(&cfg)?;
            let line = generate_kind(&prep, kind.into(), seed, &cfg.simplify)?;
            write_line(&output, &line.track, cfg.tempo_bpm)?;
            eprintln!("layer seeds: {:?}", line.layer_seeds);
        }
        Command::Simplify {
            midi_in,
            track,
            density,
            output,
        } => {
            let (melody, tempo) = read_melody(&midi_in, track, None)?;
            let mut cfg = SimplifyConfig::default();
            if let Some(d) = density {
                cfg.density = d;
            }
            let simple = simplify(&melody, &cfg)?;
            write_line(&output, &simple, tempo.unwrap_or(DEFAULT_TEMPO_BPM))?;
            eprintln!("{} onsets kept of {}", simple.onsets().len(), melody.onsets().len());
        }
        Command::Integrate {
            config,
            lead,
            secondary,
            simplified,
            harmonic,
            output,
            report,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let prep = prepare(&cfg)?;
            let n = cfg.phrase.n();
            let read = |p: &Option<PathBuf>| -> Result<Option<GeneratedLine>> {
                p.as_ref()
                    .map(|path| {
                        let (track, _) = read_melody(path, None, Some((n, cfg.phrase.meter())))?;
                        Ok(imported_line(track))
                    })
                    .transpose()
            };
            let (lead, secondary, harmonic) = (read(&lead)?, read(&secondary)?, read(&harmonic)?);
            let simplified = read(&simplified)?;
            let generated = match (&lead, &secondary, &harmonic) {
                (Some(_), Some(_), Some(_)) => None,
                _ => Some(generate_lines(&cfg, &prep)?),
            };
            let fill = |own: Option<GeneratedLine>, pick: fn(&Lines) -> &GeneratedLine| {
                own.or_else(|| generated.as_ref().map(|g| pick(g).clone()))
                    .context("line neither given nor generated")
            };
            let lead = fill(lead, |g| &g.lead)?;
            let simplified = match simplified {
                Some(s) => s.track,
                None => simplify(&lead.track, &cfg.simplify)?,
            };
            let lines = Lines {
                secondary: fill(secondary, |g| &g.secondary)?,
                harmonic: fill(harmonic, |g| &g.harmonic)?,
                lead,
                simplified,
            };
            let out = assemble(&cfg, &prep, lines)?;
            write_outputs(&out, &output, report.as_deref())?;
        }
        Command::Pipeline {
            config,
            output,
            report,
            seed,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let out = run_pipeline(&cfg)?;
            write_outputs(&out, &output, report.as_deref())?;
        }
        Command::AnalyzeAcf { input, max_lag, track } => {
            let series = read_series(&input, track)?;
            let stats = SeriesStats::of(&series, max_lag)?;
            let mut w = csv::Writer::from_writer(io::stdout());
            w.write_record(["lag", "acf", "pacf"])?;
            for h in 1..=max_lag {
                w.write_record([h.to_string(), stats.acf[h].to_string(), stats.pacf[h].to_string()])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn imported_line(track: MelodyTrack) -> GeneratedLine {
    let contour = melody_to_pitch_curve(&track).unwrap_or_else(|_| PitchCurve(vec![0.0; track.len()]));
    GeneratedLine {
        track,
        contour,
        layer_seeds: Vec::new(),
    }
}

fn write_line(path: &Path, track: &MelodyTrack, tempo: f64) -> Result<()> {
    let midi = write_smf(
        &[MidiTrack::from_melody("line", 0, LEAD_VELOCITY, track)],
        tempo,
        track.meter(),
    )?;
    fs::write(path, midi).with_context(|| path.display().to_string())
}

fn write_outputs(out: &PipelineOutput, midi: &Path, report: Option<&Path>) -> Result<()> {
    fs::write(midi, &out.midi).with_context(|| midi.display().to_string())?;
    let report = report.map(Path::to_path_buf).unwrap_or_else(|| midi.with_extension("json"));
    fs::write(&report, &out.report_json).with_context(|| report.display().to_string())?;
    eprintln!("wrote {} and {}", midi.display(), report.display());
    Ok(())
}

/// Reads a monophonic line from a MIDI file. `shape` fixes length and meter.
fn read_melody(
    path: &Path,
    track: Option<usize>,
    shape: Option<(usize, Meter)>,
) -> Result<(MelodyTrack, Option<f64>)> {
    let midi = read_midi(path)?;
    let chosen = match track {
        Some(i) => midi.tracks.get(i).with_context(|| format!("no track {i} in {}", path.display()))?,
        None => midi
            .tracks
            .iter()
            .find(|t| !t.notes.is_empty())
            .with_context(|| format!("{} has no notes", path.display()))?,
    };
    let meter = shape.map(|s| s.1).unwrap_or(Meter {
        beats_per_bar: midi.beats_per_bar.unwrap_or(4),
    });
    let len = match shape {
        Some((n, _)) => n,
        None => {
            let end = chosen.notes.iter().map(|n| n.start + n.length).max().unwrap_or(0);
            end.div_ceil(meter.steps_per_bar()) * meter.steps_per_bar()
        }
    };
    if let Some(late) = chosen.notes.iter().find(|n| n.start >= len) {
        bail!("{}: note at step {} lies past the phrase end {len}", path.display(), late.start);
    }
    Ok((notes_to_melody(&chosen.notes, Some(len), meter)?, midi.tempo_bpm))
}

fn read_series(path: &Path, track: Option<usize>) -> Result<Vec<f64>> {
    let is_midi = matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("mid") | Some("midi")
    );
    if is_midi {
        let (melody, _) = read_melody(path, track, None)?;
        return Ok(melody_to_pitch_curve(&melody)?.0);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| path.display().to_string())?;
    let mut values = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let Some(field) = rec.get(0) else { continue };
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => bail!("{}: row {}: `{field}` is not a number", path.display(), i + 1),
        }
    }
    Ok(values)
}

//! End-to-end pipeline: progression to decorated chords to four melody lines
//! to an arrangement, a MIDI file and a JSON report.
//!
//! Every random stream is seeded from the master seed through
//! [`seed::derive`], so a config and seed always give byte-identical output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chord::{timeline_steps, ChangeWeights, Chord};
use crate::contour::{check_divisible, MelodyTrack, Meter, STEPS_PER_BEAT};
use crate::generators::{
    generate_harmonic, generate_lead, generate_secondary, simplify, GeneratedLine, GeneratorProfile, MelodyKind,
    PatternSpec, SimplifyConfig,
};
use crate::harmony::{decorate_progression, DecorationHmm, StyleWeights};
use crate::integration::{integrate, Arrangement, BarDecision, ColumnChordPolicy, DEFAULT_TAU};
use crate::midi::{arrangement_to_smf, DEFAULT_TEMPO_BPM};
use crate::persist;
use crate::progression::{check_phrase_length, ingest_chord_corpus, load_progression, DEFAULT_CORPUS_TEMPO};
use crate::quantize::PitchContextModel;
use crate::seed;

pub const CONFIG_VERSION: u32 = 1;
pub const REPORT_VERSION: u32 = 1;
pub const RULE_BASED: &str = "rule-based";

const LEAD_STREAM: u64 = 1;
const SECONDARY_STREAM: u64 = 2;
const HARMONIC_STREAM: u64 = 3;
const COLUMN_STREAM: u64 = 4;

/// Pipeline stage, used to label failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    Progression,
    Harmony,
    Decoration,
    PitchContext,
    Lead,
    Secondary,
    Harmonic,
    Simplify,
    Integration,
    Export,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Progression => "progression",
            Stage::Harmony => "harmony model",
            Stage::Decoration => "decoration",
            Stage::PitchContext => "pitch context",
            Stage::Lead => "lead melody",
            Stage::Secondary => "secondary melody",
            Stage::Harmonic => "harmonic melody",
            Stage::Simplify => "simplified melody",
            Stage::Integration => "integration",
            Stage::Export => "export",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn fail<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        message: e.to_string(),
    }
}

fn config_err(message: impl Into<String>) -> PipelineError {
    PipelineError {
        stage: Stage::Config,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhraseConfig {
    pub bars: usize,
    pub beats_per_bar: usize,
    /// Number of stochastic layers; defaults to the largest `p` with `2^p | n`.
    #[serde(default)]
    pub p: Option<u32>,
}

impl Default for PhraseConfig {
    fn default() -> Self {
        PhraseConfig {
            bars: 4,
            beats_per_bar: 4,
            p: None,
        }
    }
}

impl PhraseConfig {
    pub fn meter(&self) -> Meter {
        Meter {
            beats_per_bar: self.beats_per_bar,
        }
    }

    pub fn n(&self) -> usize {
        self.bars * self.beats_per_bar * STEPS_PER_BEAT
    }

    pub fn p(&self) -> u32 {
        self.p.unwrap_or_else(|| self.n().trailing_zeros())
    }
}

/// A named style profile or explicit weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StyleChoice {
    Named(String),
    Weights(StyleWeights),
}

impl Default for StyleChoice {
    fn default() -> Self {
        StyleChoice::Named("pop".into())
    }
}

impl StyleChoice {
    pub fn weights(&self) -> Result<StyleWeights> {
        match self {
            StyleChoice::Named(name) => {
                StyleWeights::profile(name).ok_or_else(|| config_err(format!("unknown style profile `{name}`")))
            }
            StyleChoice::Weights(w) => Ok(*w),
        }
    }
}

/// A pattern from the library by name, or written out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatternChoice {
    Named(String),
    Spec(PatternSpec),
}

impl Default for PatternChoice {
    fn default() -> Self {
        PatternChoice::Named("alberti".into())
    }
}

/// Built-in accompaniment figures.
pub fn builtin_pattern(name: &str) -> Option<PatternSpec> {
    let offsets: &[Option<i32>] = match name {
        "alberti" => &[Some(0), Some(7), Some(4), Some(7)],
        "arpeggio" => &[Some(0), Some(4), Some(7), Some(12)],
        "root-fifth" => &[Some(0), None, Some(7), None],
        "octave" => &[Some(0), Some(12), Some(0), Some(12)],
        _ => return None,
    };
    Some(PatternSpec {
        offsets: offsets.to_vec(),
    })
}

fn default_top_n() -> usize {
    10
}

fn default_alpha() -> f64 {
    1.0
}

fn default_corpus_tempo() -> f64 {
    DEFAULT_CORPUS_TEMPO
}

fn default_context() -> String {
    RULE_BASED.into()
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_tempo() -> f64 {
    DEFAULT_TEMPO_BPM
}

/// The whole pipeline configuration. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default)]
    pub phrase: PhraseConfig,
    pub progression: PathBuf,
    #[serde(default)]
    pub style: StyleChoice,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default)]
    pub change_weights: ChangeWeights,
    /// Trained decoration model. Mutually exclusive with `hmm_corpus`.
    #[serde(default)]
    pub hmm_model: Option<PathBuf>,
    /// Annotation directory to train the decoration model from.
    #[serde(default)]
    pub hmm_corpus: Option<PathBuf>,
    #[serde(default = "default_alpha")]
    pub hmm_alpha: f64,
    #[serde(default = "default_corpus_tempo")]
    pub corpus_tempo: f64,
    /// `"rule-based"` or a path to a trained pitch-context model.
    #[serde(default = "default_context")]
    pub pitch_context: String,
    #[serde(default)]
    pub lead: Option<GeneratorProfile>,
    #[serde(default)]
    pub secondary: Option<GeneratorProfile>,
    #[serde(default)]
    pub harmonic: Option<GeneratorProfile>,
    #[serde(default)]
    pub pattern: PatternChoice,
    /// JSON file mapping pattern names to pattern specs.
    #[serde(default)]
    pub pattern_library: Option<PathBuf>,
    #[serde(default)]
    pub simplify: SimplifyConfig,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub column_chords: ColumnChordPolicy,
    #[serde(default = "default_tempo")]
    pub tempo_bpm: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    /// Defaults around a progression file.
    pub fn new(progression: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            phrase: PhraseConfig::default(),
            progression: progression.into(),
            style: StyleChoice::default(),
            top_n: default_top_n(),
            change_weights: ChangeWeights::default(),
            hmm_model: None,
            hmm_corpus: None,
            hmm_alpha: default_alpha(),
            corpus_tempo: default_corpus_tempo(),
            pitch_context: default_context(),
            lead: None,
            secondary: None,
            harmonic: None,
            pattern: PatternChoice::default(),
            pattern_library: None,
            simplify: SimplifyConfig::default(),
            tau: default_tau(),
            column_chords: ColumnChordPolicy::default(),
            tempo_bpm: default_tempo(),
            master_seed: 0,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = serde_json::from_str(text).map_err(fail(Stage::Config))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn context_path(&self) -> Option<PathBuf> {
        (self.pitch_context != RULE_BASED).then(|| self.resolve(Path::new(&self.pitch_context)))
    }

    /// Checks every setting and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(config_err(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let n = self.phrase.n();
        let p = self.phrase.p();
        check_divisible(n, p).map_err(fail(Stage::Config))?;
        self.style.weights()?;
        if self.top_n == 0 {
            return Err(config_err("top_n must be at least 1"));
        }
        if self.hmm_model.is_some() && self.hmm_corpus.is_some() {
            return Err(config_err("set at most one of hmm_model and hmm_corpus"));
        }
        if !(self.hmm_alpha > 0.0 && self.hmm_alpha.is_finite()) {
            return Err(config_err("hmm_alpha must be positive"));
        }
        if !(self.corpus_tempo > 0.0 && self.corpus_tempo.is_finite()) {
            return Err(config_err("corpus_tempo must be positive"));
        }
        if !(self.tempo_bpm > 0.0 && self.tempo_bpm.is_finite()) {
            return Err(config_err("tempo_bpm must be positive"));
        }
        if self.tau.is_nan() {
            return Err(config_err("tau must be a number"));
        }
        if !(self.simplify.density > 0.0 && self.simplify.density <= 1.0) {
            return Err(config_err("simplify.density must lie in (0, 1]"));
        }
        self.column_chords.validate().map_err(fail(Stage::Config))?;
        let mut paths = vec![self.resolve(&self.progression)];
        paths.extend(self.hmm_model.iter().map(|p| self.resolve(p)));
        paths.extend(self.hmm_corpus.iter().map(|p| self.resolve(p)));
        paths.extend(self.pattern_library.iter().map(|p| self.resolve(p)));
        paths.extend(self.context_path());
        for path in paths {
            if !path.exists() {
                return Err(config_err(format!("{} does not exist", path.display())));
            }
        }
        for profile in self.profiles()?.values() {
            profile.validate().map_err(fail(Stage::Config))?;
            if profile.p() != p {
                return Err(config_err(format!(
                    "{:?} profile has {} layers, phrase needs {p}",
                    profile.kind,
                    profile.p()
                )));
            }
        }
        Ok(())
    }

    pub fn pattern_spec(&self) -> Result<PatternSpec> {
        match &self.pattern {
            PatternChoice::Spec(spec) => Ok(spec.clone()),
            PatternChoice::Named(name) => {
                if let Some(lib) = &self.pattern_library {
                    let path = self.resolve(lib);
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                    let lib: BTreeMap<String, PatternSpec> = serde_json::from_str(&text)
                        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                    if let Some(p) = lib.get(name) {
                        return Ok(p.clone());
                    }
                }
                builtin_pattern(name).ok_or_else(|| config_err(format!("unknown pattern `{name}`")))
            }
        }
    }

    /// Generator profiles, filling in defaults for the phrase.
    pub fn profiles(&self) -> Result<BTreeMap<&'static str, GeneratorProfile>> {
        let p = self.phrase.p();
        let harmonic = match &self.harmonic {
            Some(h) => h.clone(),
            None => GeneratorProfile::harmonic(p, self.pattern_spec()?),
        };
        Ok(BTreeMap::from([
            ("lead", self.lead.clone().unwrap_or_else(|| GeneratorProfile::lead(p))),
            (
                "secondary",
                self.secondary.clone().unwrap_or_else(|| GeneratorProfile::secondary(p)),
            ),
            ("harmonic", harmonic),
        ]))
    }

    pub fn lead_seed(&self) -> u64 {
        seed::derive(self.master_seed, LEAD_STREAM, 0)
    }

    pub fn secondary_seed(&self) -> u64 {
        seed::derive(self.master_seed, SECONDARY_STREAM, 0)
    }

    pub fn harmonic_seed(&self) -> u64 {
        seed::derive(self.master_seed, HARMONIC_STREAM, 0)
    }

    pub fn column_seed(&self) -> u64 {
        seed::derive(self.master_seed, COLUMN_STREAM, self.column_chords.seed)
    }
}

/// Summary of the decoration step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecorationSummary {
    pub rank: usize,
    pub candidates: usize,
    pub style_score: f64,
    pub log_likelihood: f64,
    pub style: StyleWeights,
}

/// Chords and models ready for generation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub input: Vec<Chord>,
    pub chords: Vec<Chord>,
    pub decoration: Option<DecorationSummary>,
    pub context: PitchContextModel,
    pub profiles: BTreeMap<&'static str, GeneratorProfile>,
    pub meter: Meter,
}

/// Loads the decoration model named by the config, if any.
pub fn load_harmony_model(cfg: &PipelineConfig) -> Result<Option<DecorationHmm>> {
    if let Some(path) = &cfg.hmm_model {
        let path = cfg.resolve(path);
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError {
            stage: Stage::Harmony,
            message: format!("{}: {e}", path.display()),
        })?;
        return persist::from_json(&text).map(Some).map_err(fail(Stage::Harmony));
    }
    if let Some(dir) = &cfg.hmm_corpus {
        let corpus = ingest_chord_corpus(&cfg.resolve(dir), cfg.corpus_tempo).map_err(fail(Stage::Harmony))?;
        let model = DecorationHmm::train(&corpus.progressions(), cfg.hmm_alpha).map_err(fail(Stage::Harmony))?;
        return Ok(Some(model));
    }
    Ok(None)
}

/// Loads and decorates the progression and loads the pitch-context model.
pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    cfg.validate()?;
    let n = cfg.phrase.n();
    let input = load_progression(&cfg.resolve(&cfg.progression), Some(n)).map_err(fail(Stage::Progression))?;
    prepare_with(cfg, input)
}

/// As [`prepare`] with the progression given directly.
pub fn prepare_with(cfg: &PipelineConfig, input: Vec<Chord>) -> Result<Prepared> {
    let n = cfg.phrase.n();
    check_phrase_length(&input, n).map_err(fail(Stage::Progression))?;
    let style = cfg.style.weights()?;

    let (chords, decoration) = match load_harmony_model(cfg)? {
        Some(model) => {
            let out = decorate_progression(&model, &input, cfg.top_n, &style, &cfg.change_weights)
                .map_err(fail(Stage::Decoration))?;
            let summary = DecorationSummary {
                rank: out.rank,
                candidates: out.candidates,
                style_score: out.style_score,
                log_likelihood: out.log_likelihood,
                style,
            };
            (out.chords, Some(summary))
        }
        None => (input.clone(), None),
    };
    let preserved = chords.len() == input.len()
        && chords.iter().zip(&input).all(|(a, b)| {
            a.root() == b.root() && a.chord_type() == b.chord_type() && a.bass() == b.bass() && a.duration() == b.duration()
        });
    if !preserved || timeline_steps(&chords) != n {
        return Err(PipelineError {
            stage: Stage::Decoration,
            message: "decoration changed the chord skeleton".into(),
        });
    }

    let context = match cfg.context_path() {
        None => PitchContextModel::rule_based(),
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| PipelineError {
                stage: Stage::PitchContext,
                message: format!("{}: {e}", path.display()),
            })?;
            persist::from_json(&text).map_err(fail(Stage::PitchContext))?
        }
    };
    Ok(Prepared {
        input,
        chords,
        decoration,
        context,
        profiles: cfg.profiles()?,
        meter: cfg.phrase.meter(),
    })
}

fn check_line(line: &GeneratedLine, n: usize, stage: Stage) -> Result<()> {
    line.track.validate().map_err(fail(stage))?;
    if line.track.len() != n {
        return Err(PipelineError {
            stage,
            message: format!("line has {} steps, phrase has {n}", line.track.len()),
        });
    }
    Ok(())
}

/// Generates one line kind with an explicit seed.
pub fn generate_kind(prep: &Prepared, kind: MelodyKind, seed: u64, simplify_cfg: &SimplifyConfig) -> Result<GeneratedLine> {
    let n = timeline_steps(&prep.chords);
    let (stage, line) = match kind {
        MelodyKind::Lead => (
            Stage::Lead,
            generate_lead(&prep.profiles["lead"], &prep.chords, prep.meter, &prep.context, seed),
        ),
        MelodyKind::Secondary => (
            Stage::Secondary,
            generate_secondary(&prep.profiles["secondary"], &prep.chords, prep.meter, &prep.context, seed),
        ),
        MelodyKind::Harmonic => (
            Stage::Harmonic,
            generate_harmonic(&prep.profiles["harmonic"], &prep.chords, prep.meter, &prep.context, seed),
        ),
        MelodyKind::Simplified => {
            let lead = generate_kind(prep, MelodyKind::Lead, seed, simplify_cfg)?;
            let track = simplify(&lead.track, simplify_cfg).map_err(fail(Stage::Simplify))?;
            let line = GeneratedLine { track, ..lead };
            check_line(&line, n, Stage::Simplify)?;
            return Ok(line);
        }
    };
    let line = line.map_err(fail(stage))?;
    check_line(&line, n, stage)?;
    Ok(line)
}

/// The four generated lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Lines {
    pub lead: GeneratedLine,
    pub secondary: GeneratedLine,
    pub harmonic: GeneratedLine,
    pub simplified: MelodyTrack,
}

/// Generates lead, secondary and harmonic lines concurrently, then the
/// simplified line from the lead.
pub fn generate_lines(cfg: &PipelineConfig, prep: &Prepared) -> Result<Lines> {
    let none = SimplifyConfig::default();
    let (lead, secondary, harmonic) = std::thread::scope(|s| {
        let l = s.spawn(|| generate_kind(prep, MelodyKind::Lead, cfg.lead_seed(), &none));
        let sec = s.spawn(|| generate_kind(prep, MelodyKind::Secondary, cfg.secondary_seed(), &none));
        let h = s.spawn(|| generate_kind(prep, MelodyKind::Harmonic, cfg.harmonic_seed(), &none));
        (
            l.join().expect("lead thread"),
            sec.join().expect("secondary thread"),
            h.join().expect("harmonic thread"),
        )
    });
    let lead = lead?;
    let simplified = simplify(&lead.track, &cfg.simplify).map_err(fail(Stage::Simplify))?;
    simplified.validate().map_err(fail(Stage::Simplify))?;
    Ok(Lines {
        lead,
        secondary: secondary?,
        harmonic: harmonic?,
        simplified,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineSeeds {
    pub seed: u64,
    pub layer_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedReport {
    pub master: u64,
    pub lead: LineSeeds,
    pub secondary: LineSeeds,
    pub harmonic: LineSeeds,
    pub column_chords: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnsetCounts {
    pub lead: usize,
    pub secondary: usize,
    pub simplified: usize,
    pub harmonic: usize,
    pub right_hand_notes: usize,
}

/// Audit record of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub version: u32,
    pub steps: usize,
    pub layers: u32,
    pub beats_per_bar: usize,
    pub tempo_bpm: f64,
    pub input_progression: Vec<String>,
    pub decorated_progression: Vec<String>,
    pub decoration: Option<DecorationSummary>,
    pub seeds: SeedReport,
    pub bars: Vec<BarDecision>,
    pub column_chord_notes: usize,
    pub onsets: OnsetCounts,
    /// Choices this implementation makes that the input does not fix.
    pub implementation_choices: BTreeMap<&'static str, String>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub arrangement: Arrangement,
    pub lines: Lines,
    pub midi: Vec<u8>,
    pub report: PipelineReport,
    pub report_json: String,
}

fn labels(chords: &[Chord]) -> Vec<String> {
    chords.iter().map(|c| format!("{} {}", c.symbol(), c.duration())).collect()
}

/// Runs every stage from the config's progression file.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let prep = prepare(cfg)?;
    run_prepared(cfg, prep)
}

/// Runs generation, integration and export on prepared inputs.
pub fn run_prepared(cfg: &PipelineConfig, prep: Prepared) -> Result<PipelineOutput> {
    let lines = generate_lines(cfg, &prep)?;
    assemble(cfg, &prep, lines)
}

/// Integrates finished lines and exports MIDI and the report. Lines read
/// from files carry empty layer-seed lists.
pub fn assemble(cfg: &PipelineConfig, prep: &Prepared, lines: Lines) -> Result<PipelineOutput> {
    let n = cfg.phrase.n();
    for (track, stage) in [
        (&lines.lead.track, Stage::Lead),
        (&lines.secondary.track, Stage::Secondary),
        (&lines.harmonic.track, Stage::Harmonic),
        (&lines.simplified, Stage::Simplify),
    ] {
        track.validate().map_err(fail(stage))?;
        if track.len() != n {
            return Err(PipelineError {
                stage,
                message: format!("line has {} steps, phrase has {n}", track.len()),
            });
        }
    }
    let policy = ColumnChordPolicy {
        seed: cfg.column_seed(),
        ..cfg.column_chords
    };
    let (arrangement, integration) = integrate(
        &lines.lead.track,
        &lines.secondary.track,
        &lines.simplified,
        &lines.harmonic.track,
        &prep.chords,
        cfg.tau,
        &policy,
    )
    .map_err(fail(Stage::Integration))?;
    arrangement.validate().map_err(fail(Stage::Integration))?;
    let midi = arrangement_to_smf(&arrangement, cfg.tempo_bpm).map_err(fail(Stage::Export))?;

    let seeds = |seed: u64, line: &GeneratedLine| LineSeeds {
        seed,
        layer_seeds: line.layer_seeds.clone(),
    };
    let report = PipelineReport {
        version: REPORT_VERSION,
        steps: cfg.phrase.n(),
        layers: cfg.phrase.p(),
        beats_per_bar: cfg.phrase.beats_per_bar,
        tempo_bpm: cfg.tempo_bpm,
        input_progression: labels(&prep.input),
        decorated_progression: labels(&prep.chords),
        decoration: prep.decoration.clone(),
        seeds: SeedReport {
            master: cfg.master_seed,
            lead: seeds(cfg.lead_seed(), &lines.lead),
            secondary: seeds(cfg.secondary_seed(), &lines.secondary),
            harmonic: seeds(cfg.harmonic_seed(), &lines.harmonic),
            column_chords: policy.seed,
        },
        bars: integration.bars,
        column_chord_notes: integration.column_chord_notes,
        onsets: OnsetCounts {
            lead: lines.lead.track.onsets().len(),
            secondary: lines.secondary.track.onsets().len(),
            simplified: lines.simplified.onsets().len(),
            harmonic: lines.harmonic.track.onsets().len(),
            right_hand_notes: arrangement.right_hand.notes().len(),
        },
        implementation_choices: BTreeMap::from([
            ("key", "taken from the input progression; no transposition".to_string()),
            ("sections", "one phrase per run".to_string()),
            ("tempo", format!("{} bpm from config", cfg.tempo_bpm)),
            (
                "decoration",
                if prep.decoration.is_some() {
                    "decoration model applied".to_string()
                } else {
                    "no decoration model configured; input chords used as given".to_string()
                },
            ),
        ]),
    };
    let report_json = serde_json::to_string_pretty(&report).map_err(fail(Stage::Export))?;
    Ok(PipelineOutput {
        arrangement,
        lines,
        midi,
        report,
        report_json,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_prog(dir: &Path) -> PathBuf {
        let path = dir.join("prog.txt");
        fs::write(&path, "C:maj 16\nA:min 16\nF:maj 16\nG:maj 16\n").unwrap();
        path
    }

    #[test]
    fn phrase_defaults() {
        let p = PhraseConfig::default();
        assert_eq!((p.n(), p.p()), (64, 6));
        let three = PhraseConfig { bars: 3, ..p };
        assert_eq!((three.n(), three.p()), (48, 4));
    }

    #[test]
    fn config_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_prog(dir.path());
        let text = r#"{"version": 1, "progression": "prog.txt", "master_seed": 7}"#;
        let cfg = PipelineConfig::from_json(text, dir.path()).unwrap();
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.tau, DEFAULT_TAU);
        let again = PipelineConfig::from_json(&serde_json::to_string(&cfg).unwrap(), dir.path()).unwrap();
        assert_eq!(again, cfg);

        let bad_version = r#"{"version": 9, "progression": "prog.txt"}"#;
        assert_eq!(PipelineConfig::from_json(bad_version, dir.path()).unwrap_err().stage, Stage::Config);
        let missing = r#"{"version": 1, "progression": "nope.txt"}"#;
        assert!(PipelineConfig::from_json(missing, dir.path()).is_err());
        let unknown = r#"{"version": 1, "progression": "prog.txt", "bogus": 1}"#;
        assert!(PipelineConfig::from_json(unknown, dir.path()).is_err());
        let style = r#"{"version": 1, "progression": "prog.txt", "style": "metal"}"#;
        assert!(PipelineConfig::from_json(style, dir.path()).is_err());
        let weights = r#"{"version": 1, "progression": "prog.txt", "style": {"w_ll": 1, "w_change": 0, "w_rep": 0}}"#;
        assert!(PipelineConfig::from_json(weights, dir.path()).is_ok());
    }

    #[test]
    fn runs_and_repeats() {
        let dir = tempfile::tempdir().unwrap();
        let prog = write_prog(dir.path());
        let cfg = PipelineConfig {
            master_seed: 3,
            ..PipelineConfig::new(prog)
        };
        let a = run_pipeline(&cfg).unwrap();
        let b = run_pipeline(&cfg).unwrap();
        assert_eq!(a.midi, b.midi);
        assert_eq!(a.report_json, b.report_json);
        assert_eq!(a.arrangement.len(), 64);
        assert_eq!(a.report.bars.len(), 4);
    }

    #[test]
    fn zero_sigma_lead_is_held() {
        let dir = tempfile::tempdir().unwrap();
        let prog = write_prog(dir.path());
        let mut cfg = PipelineConfig::new(prog);
        cfg.lead = Some(GeneratorProfile::lead(6).without_noise());
        cfg.secondary = Some(GeneratorProfile::secondary(6).without_noise());
        cfg.harmonic = Some(GeneratorProfile::harmonic(6, PatternSpec::alberti()).without_noise());
        let out = run_pipeline(&cfg).unwrap();
        assert_eq!(out.arrangement.lead.onsets(), vec![0]);
    }

    #[test]
    fn progression_length_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.txt");
        fs::write(&path, "C:maj 16\nG:maj 12\n").unwrap();
        let err = run_pipeline(&PipelineConfig::new(path)).unwrap_err();
        assert_eq!(err.stage, Stage::Progression);
    }

    #[test]
    fn layer_count_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::new(write_prog(dir.path()));
        cfg.lead = Some(GeneratorProfile::lead(4));
        assert_eq!(cfg.validate().unwrap_err().stage, Stage::Config);
    }

    #[test]
    fn patterns() {
        assert_eq!(builtin_pattern("alberti"), Some(PatternSpec::alberti()));
        assert!(builtin_pattern("polka").is_none());
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::new(write_prog(dir.path()));
        fs::write(dir.path().join("lib.json"), r#"{"stride": {"offsets": [0, null, 12, null]}}"#).unwrap();
        cfg.pattern_library = Some("lib.json".into());
        cfg.pattern = PatternChoice::Named("stride".into());
        cfg.base_dir = dir.path().to_path_buf();
        assert_eq!(cfg.pattern_spec().unwrap().offsets, vec![Some(0), None, Some(12), None]);
    }
}

//! The four melody generators: lead, secondary, harmonic and simplified.
//!
//! Lead, secondary and harmonic lines share one recipe: a trend `s^(0)`,
//! stochastic layers `s^(1)..s^(p)` drawn on the dyadic grids, and
//! quantization of their sum under chord context. The simplified line is
//! derived from the lead by deleting unimportant notes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chord::{chord_index_per_step, timeline_steps, Chord};
use crate::contour::{check_divisible, ContourError, MelodyTrack, Meter, PitchCurve, StepState, STEPS_PER_BEAT};
use crate::quantize::{quantize_with_rests, PitchContextModel, QuantizeConfig, QuantizeError, QuantizeMode};
use crate::sarma::{self, SarmaError, SarmaParams};
use crate::seed;

const LAYER_STREAM: u64 = 0x4c41_5945;
const QUANTIZE_STREAM: u64 = 0x5155_414e;

/// Default lead layer coefficients.
pub const LEAD_PHI: f64 = 0.5;
pub const LEAD_THETA: f64 = 0.3;
pub const LEAD_SEASONAL_PHI: f64 = 0.4;
pub const LEAD_SEASONAL_THETA: f64 = 0.2;
pub const LEAD_SEASON: usize = 4;
pub const LEAD_ANCHOR: f64 = 67.0;
pub const SECONDARY_SCALE: f64 = 0.5;
pub const HARMONIC_NOISE_SIGMA: f64 = 0.3;
pub const BASS_REGISTER: u8 = 36;
pub const DEFAULT_DENSITY: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("profile is for {found:?} melodies, expected {expected:?}")]
    WrongKind { expected: MelodyKind, found: MelodyKind },
    #[error("profile has {layers} layers but the phrase uses p = {p}")]
    LayerCount { layers: usize, p: u32 },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("empty chord timeline")]
    EmptyTimeline,
    #[error("no pattern samples")]
    EmptySamples,
    #[error("pattern samples differ in length ({0} vs {1})")]
    PeriodMismatch(usize, usize),
    #[error("step {0} is not a note onset")]
    NotAnOnset(usize),
    #[error("track has no steps")]
    EmptyTrack,
    #[error("target density must lie in (0, 1], got {0}")]
    BadDensity(f64),
    #[error(transparent)]
    Sarma(#[from] SarmaError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Contour(#[from] ContourError),
}

pub type Result<T, E = GeneratorError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MelodyKind {
    Lead,
    Secondary,
    Harmonic,
    Simplified,
}

/// How one stochastic layer is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum LayerModel {
    Sarma(SarmaParams),
    WhiteNoise { sigma: f64 },
    Zero,
}

impl LayerModel {
    fn scaled(self, factor: f64) -> Self {
        match self {
            LayerModel::Sarma(p) => LayerModel::Sarma(p.with_sigma(p.sigma * factor)),
            LayerModel::WhiteNoise { sigma } => LayerModel::WhiteNoise { sigma: sigma * factor },
            LayerModel::Zero => LayerModel::Zero,
        }
    }
}

/// Accompaniment figure as semitone offsets above the chord bass.
/// `None` marks a rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub offsets: Vec<Option<i32>>,
}

impl PatternSpec {
    pub fn new(offsets: Vec<Option<i32>>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(GeneratorError::InvalidProfile("pattern has no steps".into()));
        }
        Ok(PatternSpec { offsets })
    }

    /// Broken-chord figure bass, fifth, third, fifth, one note per step.
    pub fn alberti() -> Self {
        PatternSpec {
            offsets: vec![Some(0), Some(7), Some(4), Some(7)],
        }
    }

    pub fn period(&self) -> usize {
        self.offsets.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrendSpec {
    Constant { anchor: f64 },
    BassPlusPattern { pattern: PatternSpec, bass_register: u8 },
    CopyOfLead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorProfile {
    pub kind: MelodyKind,
    pub layers: Vec<LayerModel>,
    pub trend: TrendSpec,
    pub quantize: QuantizeConfig,
}

/// Innovation sigma of lead layer `k` (1-based): coarse layers move most.
pub fn lead_layer_sigma(k: u32) -> f64 {
    2.0 * 0.7f64.powi(k as i32 - 1)
}

impl GeneratorProfile {
    pub fn lead(p: u32) -> Self {
        let layers = (1..=p)
            .map(|k| {
                LayerModel::Sarma(SarmaParams {
                    phi: LEAD_PHI,
                    theta: LEAD_THETA,
                    seasonal_phi: LEAD_SEASONAL_PHI,
                    seasonal_theta: LEAD_SEASONAL_THETA,
                    season: LEAD_SEASON,
                    sigma: lead_layer_sigma(k),
                    burn_in: 200,
                })
            })
            .collect();
        GeneratorProfile {
            kind: MelodyKind::Lead,
            layers,
            trend: TrendSpec::Constant { anchor: LEAD_ANCHOR },
            quantize: QuantizeConfig::melody(),
        }
    }

    pub fn secondary(p: u32) -> Self {
        let lead = Self::lead(p);
        GeneratorProfile {
            kind: MelodyKind::Secondary,
            layers: lead.layers.iter().map(|l| l.scaled(SECONDARY_SCALE)).collect(),
            ..lead
        }
    }

    pub fn harmonic(p: u32, pattern: PatternSpec) -> Self {
        GeneratorProfile {
            kind: MelodyKind::Harmonic,
            layers: vec![LayerModel::WhiteNoise { sigma: HARMONIC_NOISE_SIGMA }; p as usize],
            trend: TrendSpec::BassPlusPattern {
                pattern,
                bass_register: BASS_REGISTER,
            },
            quantize: QuantizeConfig::harmonic(),
        }
    }

    pub fn simplified(p: u32) -> Self {
        GeneratorProfile {
            kind: MelodyKind::Simplified,
            layers: vec![LayerModel::Zero; p as usize],
            trend: TrendSpec::CopyOfLead,
            quantize: QuantizeConfig::melody(),
        }
    }

    /// Same profile with every stochastic layer silenced.
    pub fn without_noise(mut self) -> Self {
        self.layers = self.layers.iter().map(|l| l.scaled(0.0)).collect();
        self
    }

    pub fn p(&self) -> u32 {
        self.layers.len() as u32
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(GeneratorError::InvalidProfile("at least one layer is required".into()));
        }
        let trend_ok = match self.kind {
            MelodyKind::Lead | MelodyKind::Secondary => matches!(self.trend, TrendSpec::Constant { .. }),
            MelodyKind::Harmonic => matches!(self.trend, TrendSpec::BassPlusPattern { .. }),
            MelodyKind::Simplified => matches!(self.trend, TrendSpec::CopyOfLead),
        };
        if !trend_ok {
            return Err(GeneratorError::InvalidProfile(format!(
                "{:?} profile cannot use this trend",
                self.kind
            )));
        }
        if self.kind == MelodyKind::Simplified && self.layers.iter().any(|l| *l != LayerModel::Zero) {
            return Err(GeneratorError::InvalidProfile("simplified layers must all be zero".into()));
        }
        if let TrendSpec::Constant { anchor } = self.trend {
            if !anchor.is_finite() {
                return Err(GeneratorError::InvalidProfile("anchor must be finite".into()));
            }
        }
        for l in &self.layers {
            match l {
                LayerModel::Sarma(p) => p.validate()?,
                LayerModel::WhiteNoise { sigma } if !(*sigma >= 0.0 && sigma.is_finite()) => {
                    return Err(GeneratorError::InvalidProfile("noise sigma must be >= 0".into()))
                }
                _ => {}
            }
        }
        self.quantize.validate()?;
        Ok(())
    }

    fn expect(&self, kind: MelodyKind) -> Result<()> {
        if self.kind != kind {
            return Err(GeneratorError::WrongKind {
                expected: kind,
                found: self.kind,
            });
        }
        self.validate()
    }
}

/// A generated line with the intermediate values kept for reports.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedLine {
    pub track: MelodyTrack,
    pub contour: PitchCurve,
    pub layer_seeds: Vec<u64>,
}

/// Seed of layer `k` (1-based) under a generator seed.
pub fn layer_seed(seed: u64, k: u32) -> u64 {
    seed::derive(seed, LAYER_STREAM, k as u64)
}

fn stochastic_sum(layers: &[LayerModel], n: usize, seed: u64) -> Result<(Vec<f64>, Vec<u64>)> {
    let p = layers.len() as u32;
    check_divisible(n, p)?;
    let mut sum = vec![0.0; n];
    let mut seeds = Vec::with_capacity(layers.len());
    for (i, model) in layers.iter().enumerate() {
        let k = i as u32 + 1;
        let s = layer_seed(seed, k);
        seeds.push(s);
        let layer = match model {
            LayerModel::Sarma(params) => sarma::generate_layer(params, p, n, k, s)?,
            LayerModel::WhiteNoise { sigma } => sarma::generate_layer(&SarmaParams::white_noise(*sigma), p, n, k, s)?,
            LayerModel::Zero => continue,
        };
        sum.iter_mut().zip(&layer).for_each(|(a, b)| *a += b);
    }
    Ok((sum, seeds))
}

fn quantize_cfg(cfg: &QuantizeConfig, seed: u64) -> QuantizeConfig {
    let mut out = *cfg;
    if let QuantizeMode::Stochastic { seed: user } = cfg.mode {
        out.mode = QuantizeMode::Stochastic {
            seed: seed::derive(seed, QUANTIZE_STREAM, user),
        };
    }
    out
}

fn generate_line(
    profile: &GeneratorProfile,
    chords: &[Chord],
    meter: Meter,
    model: &PitchContextModel,
    seed: u64,
) -> Result<GeneratedLine> {
    let n = timeline_steps(chords);
    if n == 0 {
        return Err(GeneratorError::EmptyTimeline);
    }
    let (trend, rests) = match &profile.trend {
        TrendSpec::Constant { anchor } => (vec![*anchor; n], None),
        TrendSpec::BassPlusPattern { pattern, bass_register } => {
            let (t, r) = bass_plus_pattern(chords, pattern, *bass_register);
            (t, Some(r))
        }
        TrendSpec::CopyOfLead => unreachable!("simplified lines are derived with simplify"),
    };
    let (noise, layer_seeds) = stochastic_sum(&profile.layers, n, seed)?;
    let contour = PitchCurve(trend.iter().zip(&noise).map(|(a, b)| a + b).collect());
    let cfg = quantize_cfg(&profile.quantize, seed);
    let track = quantize_with_rests(&contour, chords, meter, model, &cfg, rests.as_deref())?;
    Ok(GeneratedLine {
        track,
        contour,
        layer_seeds,
    })
}

/// Lead melody: constant anchor plus SARMA layers.
pub fn generate_lead(
    profile: &GeneratorProfile,
    chords: &[Chord],
    meter: Meter,
    model: &PitchContextModel,
    seed: u64,
) -> Result<GeneratedLine> {
    profile.expect(MelodyKind::Lead)?;
    generate_line(profile, chords, meter, model, seed)
}

/// Secondary melody: the lead recipe with smaller layer magnitudes.
pub fn generate_secondary(
    profile: &GeneratorProfile,
    chords: &[Chord],
    meter: Meter,
    model: &PitchContextModel,
    seed: u64,
) -> Result<GeneratedLine> {
    profile.expect(MelodyKind::Secondary)?;
    generate_line(profile, chords, meter, model, seed)
}

/// Harmonic melody: bass plus pattern trend with white-noise layers.
pub fn generate_harmonic(
    profile: &GeneratorProfile,
    chords: &[Chord],
    meter: Meter,
    model: &PitchContextModel,
    seed: u64,
) -> Result<GeneratedLine> {
    profile.expect(MelodyKind::Harmonic)?;
    generate_line(profile, chords, meter, model, seed)
}

/// Nearest realized chord tone to `pitch`, lower on ties.
fn snap_to_chord(pitch: i32, chord: &Chord) -> i32 {
    let mask = chord.pitch_class_mask();
    (0..=6)
        .flat_map(|d| [pitch - d, pitch + d])
        .find(|p| mask & (1 << p.rem_euclid(12)) != 0)
        .unwrap_or(pitch)
}

/// Harmonic trend and its rest mask. Pattern steps that land off the chord
/// snap to the nearest chord tone.
pub fn bass_plus_pattern(chords: &[Chord], pattern: &PatternSpec, bass_register: u8) -> (Vec<f64>, Vec<bool>) {
    let index = chord_index_per_step(chords);
    let mut trend = Vec::with_capacity(index.len());
    let mut rests = Vec::with_capacity(index.len());
    for (t, &ci) in index.iter().enumerate() {
        let chord = &chords[ci];
        let bass = bass_register as i32 + chord.bass().value() as i32;
        match pattern.offsets[t % pattern.period()] {
            Some(off) => {
                trend.push(snap_to_chord(bass + off, chord) as f64);
                rests.push(false);
            }
            None => {
                trend.push(bass as f64);
                rests.push(true);
            }
        }
    }
    (trend, rests)
}

/// One bar-aligned accompaniment excerpt over a single chord.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSample {
    pub steps: Vec<StepState>,
    pub chord: Chord,
}

/// Mean offsets above the bass across samples, rounded; majority-silent
/// steps become rests.
///
/// The bass reference of a sample is the highest pitch of the chord's bass
/// class at or below the sample's lowest note.
pub fn estimate_pattern(samples: &[PatternSample]) -> Result<PatternSpec> {
    let first = samples.first().ok_or(GeneratorError::EmptySamples)?;
    let period = first.steps.len();
    if period == 0 {
        return Err(GeneratorError::EmptyTrack);
    }
    let mut sums = vec![0.0; period];
    let mut sounding = vec![0usize; period];
    for s in samples {
        if s.steps.len() != period {
            return Err(GeneratorError::PeriodMismatch(period, s.steps.len()));
        }
        let track = MelodyTrack::new(s.steps.clone(), Meter::COMMON)?;
        let pitches: Vec<Option<u8>> = (0..period).map(|i| track.sounding_pitch(i)).collect();
        let Some(lowest) = pitches.iter().flatten().min().copied() else {
            continue;
        };
        let bass_pc = s.chord.bass().value() as i32;
        let lowest = lowest as i32;
        let reference = lowest - (lowest - bass_pc).rem_euclid(12);
        for (t, p) in pitches.iter().enumerate() {
            if let Some(p) = p {
                sums[t] += (*p as i32 - reference) as f64;
                sounding[t] += 1;
            }
        }
    }
    let offsets = (0..period)
        .map(|t| {
            let silent = samples.len() - sounding[t];
            (sounding[t] > 0 && silent * 2 <= samples.len()).then(|| (sums[t] / sounding[t] as f64).round() as i32)
        })
        .collect();
    Ok(PatternSpec { offsets })
}

/// Weights of the note-importance features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceWeights {
    pub downbeat: f64,
    pub duration: f64,
    pub extremum: f64,
    pub passing: f64,
    pub repetition: f64,
}

impl Default for ImportanceWeights {
    fn default() -> Self {
        ImportanceWeights {
            downbeat: 1.0,
            duration: 0.25,
            extremum: 0.5,
            passing: 0.75,
            repetition: 0.5,
        }
    }
}

/// Feature values of one note.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoteFeatures {
    /// 2 on a bar start, 1 on another beat, else 0.
    pub beat_level: u8,
    pub duration: usize,
    pub extremum: bool,
    pub passing: bool,
    pub repetition: bool,
}

impl NoteFeatures {
    pub fn score(&self, w: &ImportanceWeights) -> f64 {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        w.downbeat * self.beat_level as f64 + w.duration * self.duration as f64 + w.extremum * flag(self.extremum)
            - w.passing * flag(self.passing)
            - w.repetition * flag(self.repetition)
    }
}

fn onset_pitch(track: &MelodyTrack, onset: usize) -> i32 {
    track.steps()[onset].pitch().expect("onset index") as i32
}

/// Features of the note starting at `onset`. Neighbours are the adjacent
/// onsets in the track, rests ignored.
pub fn note_features(track: &MelodyTrack, onset: usize) -> Result<NoteFeatures> {
    if !track.steps().get(onset).is_some_and(|s| s.is_onset()) {
        return Err(GeneratorError::NotAnOnset(onset));
    }
    let onsets = track.onsets();
    let pos = onsets.binary_search(&onset).expect("onset listed");
    let pitch_at = |offset: isize| -> Option<i32> {
        let j = pos as isize + offset;
        (j >= 0 && (j as usize) < onsets.len()).then(|| onset_pitch(track, onsets[j as usize]))
    };
    let cur = onset_pitch(track, onset);
    let (prev, next) = (pitch_at(-1), pitch_at(1));

    let beat_level = if onset.is_multiple_of(track.meter().steps_per_bar()) {
        2
    } else if onset.is_multiple_of(STEPS_PER_BEAT) {
        1
    } else {
        0
    };
    let (extremum, passing) = match (prev, next) {
        (Some(a), Some(b)) => {
            let up = cur - a;
            let down = b - cur;
            let stepwise = |d: i32| (1..=2).contains(&d.abs());
            (
                (cur > a && cur > b) || (cur < a && cur < b),
                stepwise(up) && stepwise(down) && up.signum() == down.signum(),
            )
        }
        _ => (false, false),
    };
    let trill = |near: Option<i32>, far: Option<i32>| match (near, far) {
        (Some(n), Some(f)) => f == cur && n != cur && (n - cur).abs() <= 2,
        _ => false,
    };
    let repetition =
        prev == Some(cur) || next == Some(cur) || trill(prev, pitch_at(-2)) || trill(next, pitch_at(2));
    Ok(NoteFeatures {
        beat_level,
        duration: track.note_length(onset),
        extremum,
        passing,
        repetition,
    })
}

pub fn note_importance(track: &MelodyTrack, onset: usize, weights: &ImportanceWeights) -> Result<f64> {
    Ok(note_features(track, onset)?.score(weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplifyConfig {
    pub density: f64,
    #[serde(default)]
    pub weights: ImportanceWeights,
}

impl Default for SimplifyConfig {
    fn default() -> Self {
        SimplifyConfig {
            density: DEFAULT_DENSITY,
            weights: ImportanceWeights::default(),
        }
    }
}

/// Onsets to delete, in deletion order.
pub fn deletion_order(track: &MelodyTrack, target: usize, weights: &ImportanceWeights) -> Result<Vec<usize>> {
    let onsets = track.onsets();
    let mut ranked = onsets
        .iter()
        .map(|&o| Ok((o, note_features(track, o)?)))
        .collect::<Result<Vec<_>>>()?;
    // extrema last; lower score first; later note first on ties
    ranked.sort_by(|a, b| {
        a.1.extremum
            .cmp(&b.1.extremum)
            .then(a.1.score(weights).total_cmp(&b.1.score(weights)))
            .then(b.0.cmp(&a.0))
    });
    let delete = onsets.len().saturating_sub(target);
    Ok(ranked.into_iter().take(delete).map(|(o, _)| o).collect())
}

/// Keeps the most important notes of `lead`.
///
/// `max(1, floor(density * onsets))` onsets survive. A deleted note extends
/// the previous note, or becomes a rest if nothing sounds before it. When a
/// deleted note sat on a beat, the next kept onset within that beat moves
/// onto the beat.
pub fn simplify(lead: &MelodyTrack, cfg: &SimplifyConfig) -> Result<MelodyTrack> {
    if lead.is_empty() {
        return Err(GeneratorError::EmptyTrack);
    }
    if !(cfg.density > 0.0 && cfg.density <= 1.0) {
        return Err(GeneratorError::BadDensity(cfg.density));
    }
    let total = lead.onsets().len();
    let target = ((cfg.density * total as f64).floor() as usize).max(1);
    let mut deleted = deletion_order(lead, target, &cfg.weights)?;
    deleted.sort_unstable();

    let mut out = lead.steps().to_vec();
    for &i in &deleted {
        let fill = if i > 0 && out[i - 1] != StepState::Silence {
            StepState::Sustain
        } else {
            StepState::Silence
        };
        let len = lead.note_length(i);
        out[i..i + len].iter_mut().for_each(|s| *s = fill);
    }
    for &i in &deleted {
        if i % STEPS_PER_BEAT != 0 {
            continue;
        }
        let beat_end = (i + STEPS_PER_BEAT).min(out.len());
        if let Some(k) = (i + 1..beat_end).find(|&k| out[k].is_onset()) {
            out[i] = out[k];
            out[i + 1..=k].iter_mut().for_each(|s| *s = StepState::Sustain);
        }
    }
    Ok(MelodyTrack::new(out, lead.meter())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::StepState::{Pitch as P, Silence as R, Sustain as S};

    fn cafg(n: u32) -> Vec<Chord> {
        ["C:maj", "A:min", "F:maj", "G:maj"]
            .iter()
            .map(|l| Chord::parse(l, n).unwrap())
            .collect()
    }

    fn track(steps: Vec<StepState>) -> MelodyTrack {
        MelodyTrack::new(steps, Meter::COMMON).unwrap()
    }

    fn rule() -> PitchContextModel {
        PitchContextModel::rule_based()
    }

    #[test]
    fn sigma_schedule_decreases() {
        assert_eq!(lead_layer_sigma(1), 2.0);
        assert!((lead_layer_sigma(2) - 1.4).abs() < 1e-12);
        assert!(lead_layer_sigma(6) < lead_layer_sigma(5));
    }

    #[test]
    fn zero_sigma_lead_holds_one_note() {
        let chords = cafg(16);
        let profile = GeneratorProfile::lead(6).without_noise();
        let line = generate_lead(&profile, &chords, Meter::COMMON, &rule(), 3).unwrap();
        let steps = line.track.steps();
        assert!(steps[0].is_onset());
        assert!(steps[1..].iter().all(|s| *s == S));
    }

    #[test]
    fn lead_deterministic_and_valid() {
        let chords = cafg(16);
        let profile = GeneratorProfile::lead(6);
        for seed in 0..200 {
            let a = generate_lead(&profile, &chords, Meter::COMMON, &rule(), seed).unwrap();
            assert_eq!(a.track.len(), 64);
            assert!(a.track.steps()[0].is_onset());
            for s in a.track.steps() {
                if let Some(p) = s.pitch() {
                    assert!((48..=84).contains(&p));
                }
            }
            if seed < 5 {
                let b = generate_lead(&profile, &chords, Meter::COMMON, &rule(), seed).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn wrong_kind_rejected() {
        let chords = cafg(16);
        let e = generate_secondary(&GeneratorProfile::lead(6), &chords, Meter::COMMON, &rule(), 0);
        assert!(matches!(e, Err(GeneratorError::WrongKind { .. })));
        let bad = GeneratorProfile {
            trend: TrendSpec::CopyOfLead,
            ..GeneratorProfile::lead(6)
        };
        assert!(matches!(bad.validate(), Err(GeneratorError::InvalidProfile(_))));
    }

    #[test]
    fn secondary_moves_less_than_lead() {
        let chords = cafg(16);
        let lead = GeneratorProfile::lead(6);
        let sec = GeneratorProfile::secondary(6);
        let mean_step = |c: &PitchCurve| c.0.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / 63.0;
        let wins = (0..200)
            .filter(|&seed| {
                let a = generate_lead(&lead, &chords, Meter::COMMON, &rule(), seed).unwrap();
                let b = generate_secondary(&sec, &chords, Meter::COMMON, &rule(), seed + 10_000).unwrap();
                mean_step(&b.contour) < mean_step(&a.contour)
            })
            .count();
        assert!(wins >= 190, "secondary smoother in {wins}/200");
    }

    #[test]
    fn alberti_trend() {
        let chords = vec![Chord::parse("C:maj", 16).unwrap()];
        let (trend, rests) = bass_plus_pattern(&chords, &PatternSpec::alberti(), 36);
        assert_eq!(&trend[..4], &[36.0, 43.0, 40.0, 43.0]);
        assert!(rests.iter().all(|r| !r));
    }

    #[test]
    fn trend_jumps_by_bass_difference() {
        let chords = vec![Chord::parse("C:maj", 8).unwrap(), Chord::parse("F:maj", 8).unwrap()];
        let pattern = PatternSpec::new(vec![Some(0); 4]).unwrap();
        let (trend, _) = bass_plus_pattern(&chords, &pattern, 36);
        assert_eq!(trend[8] - trend[7], 5.0);
    }

    #[test]
    fn harmonic_emits_chord_tones() {
        let chords = vec![
            Chord::parse("C:maj", 16).unwrap(),
            Chord::parse("A:min", 16).unwrap(),
            Chord::parse("F:maj7", 16).unwrap(),
            Chord::parse("G:7/B", 16).unwrap(),
        ];
        let profile = GeneratorProfile::harmonic(6, PatternSpec::alberti()).without_noise();
        let line = generate_harmonic(&profile, &chords, Meter::COMMON, &rule(), 1).unwrap();
        let index = chord_index_per_step(&chords);
        for i in 0..line.track.len() {
            let p = line.track.sounding_pitch(i).unwrap();
            assert!(chords[index[i]].contains(crate::chord::PitchClass::new(p as i32)), "step {i}");
        }
    }

    #[test]
    fn harmonic_rests() {
        let chords = vec![Chord::parse("C:maj", 8).unwrap()];
        let pattern = PatternSpec::new(vec![Some(0), None, Some(7), Some(7)]).unwrap();
        let profile = GeneratorProfile::harmonic(3, pattern).without_noise();
        let line = generate_harmonic(&profile, &chords, Meter::COMMON, &rule(), 1).unwrap();
        assert_eq!(line.track.steps(), &[P(36), R, P(43), S, P(36), R, P(43), S]);
    }

    fn sample(steps: Vec<StepState>) -> PatternSample {
        PatternSample {
            steps,
            chord: Chord::parse("C:maj", 4).unwrap(),
        }
    }

    #[test]
    fn pattern_estimation() {
        let alberti = sample(vec![P(48), P(55), P(52), P(55)]);
        let p = estimate_pattern(&[alberti.clone(), alberti.clone()]).unwrap();
        assert_eq!(p.offsets, vec![Some(0), Some(7), Some(4), Some(7)]);
        let lo = sample(vec![P(48), P(55), P(51), P(55)]);
        let hi = sample(vec![P(48), P(55), P(53), P(55)]);
        assert_eq!(estimate_pattern(&[lo, hi]).unwrap().offsets[2], Some(4));
        assert_eq!(estimate_pattern(&[alberti]).unwrap(), PatternSpec::alberti());
        assert_eq!(estimate_pattern(&[]), Err(GeneratorError::EmptySamples));
        let short = sample(vec![P(48)]);
        assert_eq!(
            estimate_pattern(&[sample(vec![P(48); 4]), short]),
            Err(GeneratorError::PeriodMismatch(4, 1))
        );
    }

    #[test]
    fn pattern_majority_rest() {
        let a = sample(vec![P(48), R, P(52), S]);
        let b = sample(vec![P(48), R, P(52), P(55)]);
        let c = sample(vec![P(48), P(55), P(52), P(55)]);
        let p = estimate_pattern(&[a, b, c]).unwrap();
        assert_eq!(p.offsets, vec![Some(0), None, Some(4), Some(6)]);
    }

    #[test]
    fn importance_bonuses() {
        // bar-start peak lasting 8 steps
        let t = track(vec![P(60), S, S, S, P(62), S, S, S, P(72), S, S, S, S, S, S, S, P(64), S, S, S]);
        let f = note_features(&t, 8).unwrap();
        assert_eq!(f.beat_level, 1);
        let t2 = track(vec![
            P(60), S, S, S, S, S, S, S, S, S, S, S, S, S, S, P(62),
            P(72), S, S, S, S, S, S, S, P(64), S, S, S, S, S, S, S,
        ]);
        let f = note_features(&t2, 16).unwrap();
        assert_eq!(f.beat_level, 2);
        assert!(f.extremum);
        assert_eq!(f.duration, 8);
        let w = ImportanceWeights::default();
        assert!((f.score(&w) - (2.0 + 0.25 * 8.0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn passing_note_negative() {
        let t = track(vec![P(60), S, S, S, S, P(62), P(64), S, S, S, S, S]);
        let f = note_features(&t, 5).unwrap();
        assert!(f.passing && !f.extremum && f.beat_level == 0 && f.duration == 1);
        assert!(note_importance(&t, 5, &ImportanceWeights::default()).unwrap() < 0.0);
        assert_eq!(note_features(&t, 1), Err(GeneratorError::NotAnOnset(1)));
    }

    #[test]
    fn identical_contexts_identical_scores() {
        let t = track(vec![P(60), S, P(64), S, P(60), S, P(64), S]);
        let w = ImportanceWeights::default();
        assert_eq!(note_importance(&t, 0, &w).unwrap(), note_importance(&t, 0, &w).unwrap());
        let f = note_features(&t, 2).unwrap();
        assert!(f.extremum);
    }

    #[test]
    fn trill_detected() {
        let t = track(vec![P(60), P(62), P(60), P(62), P(67)]);
        assert!(note_features(&t, 2).unwrap().repetition);
        let r = track(vec![P(60), P(65), P(65)]);
        assert!(note_features(&r, 1).unwrap().repetition);
    }

    #[test]
    fn full_density_is_identity() {
        let t = track(vec![P(60), P(62), S, P(64), R, P(65), S, S]);
        let out = simplify(&t, &SimplifyConfig { density: 1.0, ..Default::default() }).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn passing_note_deleted_first() {
        // C (beat) - D passing - E (beat)
        let t = track(vec![P(60), S, P(62), S, P(64), S, S, S]);
        let out = simplify(&t, &SimplifyConfig { density: 0.67, ..Default::default() }).unwrap();
        assert_eq!(out.steps(), &[P(60), S, S, S, P(64), S, S, S]);
    }

    #[test]
    fn onset_moves_to_beat() {
        // the repeated note on beat 2 is deleted; the next onset in that beat moves up
        let t = track(vec![P(60), S, S, S, P(60), P(67), S, S, S, P(72), S, S, P(60), S, S, S]);
        let order = deletion_order(&t, 4, &ImportanceWeights::default()).unwrap();
        assert_eq!(order, vec![4]);
        let out = simplify(&t, &SimplifyConfig { density: 0.8, ..Default::default() }).unwrap();
        assert_eq!(out.steps()[4], P(67));
        assert_eq!(out.steps()[5], S);
        assert_eq!(out.onsets(), vec![0, 4, 9, 12]);
    }

    #[test]
    fn leading_deleted_note_becomes_rest() {
        let t = track(vec![R, P(61), P(64), S, S, S, S, S]);
        let out = simplify(&t, &SimplifyConfig { density: 0.5, ..Default::default() }).unwrap();
        assert_eq!(out.steps(), &[R, R, P(64), S, S, S, S, S]);
        let t = track(vec![P(62), S, P(63), S, P(64), S, P(75), S]);
        let out = simplify(&t, &SimplifyConfig { density: 0.25, ..Default::default() }).unwrap();
        assert_eq!(out.onsets().len(), 1);
    }

    #[test]
    fn simplify_errors() {
        let t = track(vec![P(60)]);
        assert_eq!(
            simplify(&t, &SimplifyConfig { density: 0.0, ..Default::default() }),
            Err(GeneratorError::BadDensity(0.0))
        );
    }
}

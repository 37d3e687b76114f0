//! Arrangement of the generated lines into lead plus two piano hands.
//!
//! The right hand takes each bar from the secondary melody when the lead is
//! smooth there and from the simplified melody otherwise, then gains random
//! column chords under its onsets. The harmonic melody is the left hand.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chord::{chord_index_per_step, timeline_steps, Chord};
use crate::contour::{ContourError, MelodyTrack, Meter, StepState, STEPS_PER_BEAT};
use crate::seed;

pub const DEFAULT_TAU: f64 = -3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("bar {bar} is outside a track of {bars} bars")]
    BarOutOfRange { bar: usize, bars: usize },
    #[error("track lengths differ: {0:?}")]
    LengthMismatch(Vec<usize>),
    #[error("meters differ between tracks")]
    MeterMismatch,
    #[error("invalid polyphonic track at step {step}: {reason}")]
    InvalidPoly { step: usize, reason: &'static str },
    #[error("invalid column-chord policy: {0}")]
    InvalidPolicy(&'static str),
    #[error(transparent)]
    Contour(#[from] ContourError),
}

pub type Result<T, E = IntegrationError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoteState {
    Onset,
    Sustain,
}

/// A sounding note reconstructed from a track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Note {
    pub start: usize,
    pub pitch: u8,
    pub length: usize,
}

/// Step grid where each step holds any number of distinct pitches.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PolyDoc")]
pub struct PolyTrack {
    steps: Vec<BTreeMap<u8, NoteState>>,
    meter: Meter,
}

#[derive(Deserialize)]
struct PolyDoc {
    steps: Vec<BTreeMap<u8, NoteState>>,
    meter: Meter,
}

impl TryFrom<PolyDoc> for PolyTrack {
    type Error = IntegrationError;

    fn try_from(doc: PolyDoc) -> Result<Self> {
        PolyTrack::new(doc.steps, doc.meter)
    }
}

impl PolyTrack {
    pub fn new(steps: Vec<BTreeMap<u8, NoteState>>, meter: Meter) -> Result<Self> {
        let t = PolyTrack { steps, meter };
        t.validate()?;
        Ok(t)
    }

    pub fn from_melody(track: &MelodyTrack) -> Self {
        let mut steps: Vec<BTreeMap<u8, NoteState>> = Vec::with_capacity(track.len());
        for (i, s) in track.steps().iter().enumerate() {
            let mut m = BTreeMap::new();
            match *s {
                StepState::Pitch(p) => {
                    m.insert(p, NoteState::Onset);
                }
                StepState::Sustain => {
                    if let Some(p) = track.sounding_pitch(i) {
                        m.insert(p, NoteState::Sustain);
                    }
                }
                StepState::Silence => {}
            }
            steps.push(m);
        }
        PolyTrack {
            steps,
            meter: track.meter(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(ContourError::EmptyTrack.into());
        }
        for (i, step) in self.steps.iter().enumerate() {
            for (&pitch, &state) in step {
                if pitch > 127 {
                    return Err(IntegrationError::InvalidPoly {
                        step: i,
                        reason: "pitch above 127",
                    });
                }
                if state == NoteState::Sustain && (i == 0 || !self.steps[i - 1].contains_key(&pitch)) {
                    return Err(IntegrationError::InvalidPoly {
                        step: i,
                        reason: "sustain of a pitch that is not sounding",
                    });
                }
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> &[BTreeMap<u8, NoteState>] {
        &self.steps
    }

    pub fn meter(&self) -> Meter {
        self.meter
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// All notes ordered by start, then pitch.
    pub fn notes(&self) -> Vec<Note> {
        let mut out = Vec::new();
        for (i, step) in self.steps.iter().enumerate() {
            for (&pitch, &state) in step {
                if state == NoteState::Onset {
                    let length = 1 + self.steps[i + 1..]
                        .iter()
                        .take_while(|s| s.get(&pitch) == Some(&NoteState::Sustain))
                        .count();
                    out.push(Note { start: i, pitch, length });
                }
            }
        }
        out
    }
}

/// Notes of a monophonic track.
pub fn melody_notes(track: &MelodyTrack) -> Vec<Note> {
    track
        .onsets()
        .into_iter()
        .map(|i| Note {
            start: i,
            pitch: track.steps()[i].pitch().expect("onset"),
            length: track.note_length(i),
        })
        .collect()
}

/// Negative mean absolute interval between consecutive onsets of a bar;
/// zero when the bar has fewer than two onsets.
pub fn bar_smoothness(track: &MelodyTrack, bar: usize) -> Result<f64> {
    let bars = track.bar_count();
    if bar >= bars {
        return Err(IntegrationError::BarOutOfRange { bar, bars });
    }
    let per_bar = track.meter().steps_per_bar();
    let end = ((bar + 1) * per_bar).min(track.len());
    let pitches: Vec<i32> = track.steps()[bar * per_bar..end]
        .iter()
        .filter_map(|s| s.pitch())
        .map(i32::from)
        .collect();
    if pitches.len() < 2 {
        return Ok(0.0);
    }
    let total: i32 = pitches.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(-(total as f64) / (pitches.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarSource {
    Secondary,
    Simplified,
}

/// Per-bar gate decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarDecision {
    pub bar: usize,
    pub smoothness: f64,
    pub source: BarSource,
}

fn check_lengths(tracks: &[&MelodyTrack]) -> Result<()> {
    let lens: Vec<usize> = tracks.iter().map(|t| t.len()).collect();
    if lens.windows(2).any(|w| w[0] != w[1]) {
        return Err(IntegrationError::LengthMismatch(lens));
    }
    if tracks.windows(2).any(|w| w[0].meter() != w[1].meter()) {
        return Err(IntegrationError::MeterMismatch);
    }
    Ok(())
}

/// Right-hand line chosen bar by bar, with the decisions taken.
pub fn assemble_right_hand(
    lead: &MelodyTrack,
    secondary: &MelodyTrack,
    simplified: &MelodyTrack,
    tau: f64,
) -> Result<(MelodyTrack, Vec<BarDecision>)> {
    check_lengths(&[lead, secondary, simplified])?;
    let per_bar = lead.meter().steps_per_bar();
    let mut out: Vec<StepState> = Vec::with_capacity(lead.len());
    let mut decisions = Vec::with_capacity(lead.bar_count());
    for bar in 0..lead.bar_count() {
        let smoothness = bar_smoothness(lead, bar)?;
        let (source, track) = if smoothness > tau {
            (BarSource::Secondary, secondary)
        } else {
            (BarSource::Simplified, simplified)
        };
        let start = bar * per_bar;
        let end = (start + per_bar).min(lead.len());
        let switched = decisions
            .last()
            .is_some_and(|d: &BarDecision| d.source != source);
        out.extend_from_slice(&track.steps()[start..end]);
        if switched && out[start] == StepState::Sustain {
            let held = track.sounding_pitch(start - 1).expect("sustain follows a note");
            out[start] = StepState::Pitch(held);
        }
        decisions.push(BarDecision { bar, smoothness, source });
    }
    Ok((MelodyTrack::new(out, lead.meter())?, decisions))
}

/// Random column chords under melody onsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnChordPolicy {
    pub w_pitch: f64,
    pub w_metric: f64,
    pub bias: f64,
    pub max_added_notes: usize,
    pub seed: u64,
    /// Pitches mapped to 0 and 1 for the pitch term.
    #[serde(default = "default_pitch_range")]
    pub pitch_range: [u8; 2],
    /// Strength at bar start, beat, eighth and sixteenth positions.
    #[serde(default = "default_metric_strengths")]
    pub metric_strengths: [f64; 4],
}

fn default_pitch_range() -> [u8; 2] {
    [48, 84]
}

fn default_metric_strengths() -> [f64; 4] {
    [1.0, 0.75, 0.5, 0.25]
}

impl Default for ColumnChordPolicy {
    fn default() -> Self {
        ColumnChordPolicy {
            w_pitch: 0.3,
            w_metric: 0.5,
            bias: 0.0,
            max_added_notes: 2,
            seed: 0,
            pitch_range: default_pitch_range(),
            metric_strengths: default_metric_strengths(),
        }
    }
}

impl ColumnChordPolicy {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.w_pitch, self.w_metric, self.bias]
            .iter()
            .chain(&self.metric_strengths)
            .all(|v| v.is_finite());
        if !finite {
            return Err(IntegrationError::InvalidPolicy("weights must be finite"));
        }
        if self.pitch_range[0] >= self.pitch_range[1] {
            return Err(IntegrationError::InvalidPolicy("pitch range is empty"));
        }
        Ok(())
    }

    pub fn metric_strength(&self, step: usize, meter: Meter) -> f64 {
        let level = if step.is_multiple_of(meter.steps_per_bar()) {
            0
        } else if step.is_multiple_of(STEPS_PER_BEAT) {
            1
        } else if step.is_multiple_of(2) {
            2
        } else {
            3
        };
        self.metric_strengths[level]
    }

    /// Probability that the onset at `step` with `pitch` gets a column chord.
    pub fn acceptance(&self, pitch: u8, step: usize, meter: Meter) -> f64 {
        let [low, high] = self.pitch_range;
        let pitch_norm = (pitch as f64 - low as f64) / (high as f64 - low as f64);
        (self.bias + self.w_pitch * pitch_norm + self.w_metric * self.metric_strength(step, meter)).clamp(0.0, 1.0)
    }
}

/// Chord tones strictly between `pitch - 12` and `pitch`, highest first.
pub fn column_candidates(pitch: u8, chord: &Chord) -> Vec<u8> {
    let low = pitch.saturating_sub(11);
    (low..pitch)
        .rev()
        .filter(|&q| chord.contains(crate::chord::PitchClass::new(q as i32)))
        .collect()
}

/// Adds up to `max_added_notes` chord tones under accepted onsets. Added
/// notes last as long as the melody note above them. One uniform draw is
/// consumed per onset.
pub fn add_column_chords(track: &MelodyTrack, chords: &[Chord], policy: &ColumnChordPolicy) -> Result<PolyTrack> {
    policy.validate()?;
    let total = timeline_steps(chords);
    if total != track.len() {
        return Err(IntegrationError::LengthMismatch(vec![track.len(), total]));
    }
    let index = chord_index_per_step(chords);
    let mut poly = PolyTrack::from_melody(track);
    let mut rng = seed::rng(policy.seed);
    for note in melody_notes(track) {
        let p = policy.acceptance(note.pitch, note.start, track.meter());
        let u: f64 = rng.random();
        if u >= p {
            continue;
        }
        let chord = &chords[index[note.start]];
        for q in column_candidates(note.pitch, chord).into_iter().take(policy.max_added_notes) {
            poly.steps[note.start].insert(q, NoteState::Onset);
            for s in &mut poly.steps[note.start + 1..note.start + note.length] {
                s.insert(q, NoteState::Sustain);
            }
        }
    }
    poly.validate()?;
    Ok(poly)
}

/// Lead, both piano hands and the chords they follow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Arrangement {
    pub lead: MelodyTrack,
    pub right_hand: PolyTrack,
    pub left_hand: MelodyTrack,
    pub chords: Vec<Chord>,
    pub meter: Meter,
}

impl Arrangement {
    pub fn len(&self) -> usize {
        self.lead.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lead.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.lead.validate()?;
        self.left_hand.validate()?;
        self.right_hand.validate()?;
        let lens = vec![
            self.lead.len(),
            self.right_hand.len(),
            self.left_hand.len(),
            timeline_steps(&self.chords),
        ];
        if lens.windows(2).any(|w| w[0] != w[1]) {
            return Err(IntegrationError::LengthMismatch(lens));
        }
        if self.lead.meter() != self.meter || self.left_hand.meter() != self.meter || self.right_hand.meter() != self.meter {
            return Err(IntegrationError::MeterMismatch);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrationReport {
    pub bars: Vec<BarDecision>,
    pub column_chord_notes: usize,
}

/// Builds the arrangement: harmonic line as left hand, gated and embellished
/// right hand, lead passed through.
pub fn integrate(
    lead: &MelodyTrack,
    secondary: &MelodyTrack,
    simplified: &MelodyTrack,
    harmonic: &MelodyTrack,
    chords: &[Chord],
    tau: f64,
    policy: &ColumnChordPolicy,
) -> Result<(Arrangement, IntegrationReport)> {
    check_lengths(&[lead, secondary, simplified, harmonic])?;
    let (rh, bars) = assemble_right_hand(lead, secondary, simplified, tau)?;
    let right_hand = add_column_chords(&rh, chords, policy)?;
    let melody_count = melody_notes(&rh).len();
    let arrangement = Arrangement {
        lead: lead.clone(),
        right_hand,
        left_hand: harmonic.clone(),
        chords: chords.to_vec(),
        meter: lead.meter(),
    };
    arrangement.validate()?;
    let column_chord_notes = arrangement.right_hand.notes().len() - melody_count;
    Ok((
        arrangement,
        IntegrationReport {
            bars,
            column_chord_notes,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::StepState::{Pitch as P, Silence as R, Sustain as S};

    fn track(steps: Vec<StepState>) -> MelodyTrack {
        MelodyTrack::new(steps, Meter::COMMON).unwrap()
    }

    fn bar(pitches: [u8; 4]) -> Vec<StepState> {
        pitches.iter().flat_map(|&p| [P(p), S, S, S]).collect()
    }

    fn c_major(n: u32) -> Vec<Chord> {
        vec![Chord::parse("C:maj", n).unwrap()]
    }

    #[test]
    fn smoothness_examples() {
        let t = track(bar([60, 62, 64, 65]));
        assert!((bar_smoothness(&t, 0).unwrap() + 5.0 / 3.0).abs() < 1e-12);
        let t = track(bar([60, 72, 60, 72]));
        assert_eq!(bar_smoothness(&t, 0).unwrap(), -12.0);
        let mut one = vec![P(60)];
        one.extend(vec![S; 15]);
        assert_eq!(bar_smoothness(&track(one), 0).unwrap(), 0.0);
        assert_eq!(
            bar_smoothness(&t, 1),
            Err(IntegrationError::BarOutOfRange { bar: 1, bars: 1 })
        );
    }

    fn two_bar_sources() -> (MelodyTrack, MelodyTrack, MelodyTrack) {
        let lead = track([bar([60, 61, 62, 63]), bar([60, 72, 60, 72])].concat());
        let secondary = track([bar([64, 65, 67, 65]), bar([64, 64, 65, 67])].concat());
        let simplified = track([bar([60, 60, 62, 62]), bar([60, 60, 72, 72])].concat());
        (lead, secondary, simplified)
    }

    #[test]
    fn gate_selects_per_bar() {
        let (lead, sec, simp) = two_bar_sources();
        assert_eq!(bar_smoothness(&lead, 0).unwrap(), -1.0);
        let (rh, d) = assemble_right_hand(&lead, &sec, &simp, DEFAULT_TAU).unwrap();
        assert_eq!(d[0].source, BarSource::Secondary);
        assert_eq!(d[1].source, BarSource::Simplified);
        assert_eq!(&rh.steps()[..16], &sec.steps()[..16]);
        assert_eq!(&rh.steps()[16..], &simp.steps()[16..]);
    }

    #[test]
    fn infinite_tau() {
        let (lead, sec, simp) = two_bar_sources();
        let (rh, _) = assemble_right_hand(&lead, &sec, &simp, f64::NEG_INFINITY).unwrap();
        assert_eq!(rh, sec);
        let (rh, _) = assemble_right_hand(&lead, &sec, &simp, f64::INFINITY).unwrap();
        assert_eq!(rh, simp);
    }

    #[test]
    fn boundary_sustain_repaired() {
        let lead = track([bar([60, 61, 62, 63]), bar([60, 72, 60, 72])].concat());
        let sec = track([bar([64, 65, 67, 65]), vec![S; 16]].concat());
        let simp = track([vec![P(55), S, S, S, S, S, S, S, S, S, S, S, S, S, S, S], vec![S; 16]].concat());
        // bar 0 from simplified, bar 1 from secondary
        let lead = track([lead.steps()[16..].to_vec(), lead.steps()[..16].to_vec()].concat());
        let (rh, d) = assemble_right_hand(&lead, &sec, &simp, DEFAULT_TAU).unwrap();
        assert_eq!(d[0].source, BarSource::Simplified);
        assert_eq!(d[1].source, BarSource::Secondary);
        assert_eq!(rh.steps()[16], P(65));
        assert_eq!(&rh.steps()[17..], &sec.steps()[17..]);
    }

    #[test]
    fn length_mismatch() {
        let a = track(bar([60, 61, 62, 63]));
        let b = track(vec![P(60)]);
        assert!(matches!(
            assemble_right_hand(&a, &b, &a, 0.0),
            Err(IntegrationError::LengthMismatch(_))
        ));
    }

    #[test]
    fn column_chords_clamped() {
        let t = track(bar([72, 76, 79, 84]));
        let chords = c_major(16);
        let none = ColumnChordPolicy { bias: -10.0, ..Default::default() };
        let poly = add_column_chords(&t, &chords, &none).unwrap();
        assert_eq!(poly, PolyTrack::from_melody(&t));

        let all = ColumnChordPolicy { bias: 10.0, ..Default::default() };
        let poly = add_column_chords(&t, &chords, &all).unwrap();
        for n in melody_notes(&t) {
            let added: Vec<u8> = poly.steps()[n.start].keys().copied().filter(|&q| q != n.pitch).collect();
            assert_eq!(added.len(), 2);
            for q in added {
                assert!(q < n.pitch && q > n.pitch - 12);
                assert!(chords[0].contains(crate::chord::PitchClass::new(q as i32)));
            }
        }
        // melody events untouched
        for (i, s) in t.steps().iter().enumerate() {
            if let Some(p) = t.sounding_pitch(i) {
                let want = if s.is_onset() { NoteState::Onset } else { NoteState::Sustain };
                assert_eq!(poly.steps()[i].get(&p), Some(&want));
            }
        }
    }

    #[test]
    fn metric_strength_monotone() {
        let policy = ColumnChordPolicy::default();
        let m = Meter::COMMON;
        assert!(policy.acceptance(70, 0, m) > policy.acceptance(70, 1, m));
        let s: Vec<f64> = [0, 4, 2, 1].iter().map(|&i| policy.metric_strength(i, m)).collect();
        assert_eq!(s, vec![1.0, 0.75, 0.5, 0.25]);
        assert!(policy.acceptance(80, 3, m) > policy.acceptance(50, 3, m));
    }

    #[test]
    fn column_chords_seeded() {
        let t = track([bar([72, 76, 79, 84]), bar([74, 77, 81, 79])].concat());
        let chords = c_major(32);
        let p = ColumnChordPolicy { seed: 5, ..Default::default() };
        assert_eq!(
            add_column_chords(&t, &chords, &p).unwrap(),
            add_column_chords(&t, &chords, &p).unwrap()
        );
    }

    #[test]
    fn poly_validation() {
        let mut step = BTreeMap::new();
        step.insert(60, NoteState::Sustain);
        assert!(matches!(
            PolyTrack::new(vec![step], Meter::COMMON),
            Err(IntegrationError::InvalidPoly { step: 0, .. })
        ));
    }

    #[test]
    fn poly_notes() {
        let t = track(vec![P(60), S, R, P(62), S, S]);
        let notes = PolyTrack::from_melody(&t).notes();
        assert_eq!(
            notes,
            vec![
                Note { start: 0, pitch: 60, length: 2 },
                Note { start: 3, pitch: 62, length: 3 }
            ]
        );
        assert_eq!(notes, melody_notes(&t));
    }

    #[test]
    fn integrate_passes_left_hand_through() {
        let (lead, sec, simp) = two_bar_sources();
        let harm = track([bar([36, 43, 40, 43]), bar([36, 43, 40, 43])].concat());
        let chords = c_major(32);
        let (arr, report) = integrate(&lead, &sec, &simp, &harm, &chords, DEFAULT_TAU, &Default::default()).unwrap();
        assert_eq!(arr.left_hand, harm);
        assert_eq!(arr.lead, lead);
        assert_eq!(arr.right_hand.len(), 32);
        assert_eq!(report.bars.len(), 2);
        arr.validate().unwrap();
    }
}

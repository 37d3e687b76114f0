//! Step-state melodies, real-valued pitch curves and the dyadic layered
//! decomposition of a curve.
//!
//! A phrase of `n` sixteenth steps is split into `p + 1` layers. Layer 0 is a
//! constant holding the first value. Layer `k` carries what changes when the
//! curve is sampled at `2^k` evenly spaced points instead of `2^(k-1)`, with
//! each sample held (zero-order hold) until the next grid point. The finest
//! layer is always sampled at every step so the layers sum back to the curve
//! exactly. On the grid of the previous layer a layer is exactly zero.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STEPS_PER_BEAT: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContourError {
    #[error("melody track is empty")]
    EmptyTrack,
    #[error("melody track starts with a sustain")]
    LeadingSustain,
    #[error("sustain at step {0} follows a silence")]
    SustainAfterSilence(usize),
    #[error("pitch {0} at step {1} outside MIDI range")]
    PitchOutOfRange(u8, usize),
    #[error("melody contains no pitched step")]
    AllSilence,
    #[error("curve length {n} not divisible by 2^{p}")]
    LengthNotDivisible { n: usize, p: u32 },
    #[error("layer count must be at least 1")]
    ZeroLayers,
    #[error("layer index {k} outside 1..={p}")]
    BadLayerIndex { k: u32, p: u32 },
    #[error("layer lengths differ")]
    LengthMismatch,
    #[error("curve contains a non-finite value at {0}")]
    NonFinite(usize),
}

pub type Result<T, E = ContourError> = std::result::Result<T, E>;

/// State of one sixteenth-note step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepState {
    Pitch(u8),
    Silence,
    Sustain,
}

impl StepState {
    pub fn pitch(self) -> Option<u8> {
        match self {
            StepState::Pitch(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_onset(self) -> bool {
        matches!(self, StepState::Pitch(_))
    }
}

impl fmt::Display for StepState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepState::Pitch(p) => write!(f, "{p}"),
            StepState::Silence => f.write_str("."),
            StepState::Sustain => f.write_str("-"),
        }
    }
}

/// Time signature; the step grid is always four steps per beat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Meter {
    pub beats_per_bar: usize,
}

impl Meter {
    pub const COMMON: Meter = Meter { beats_per_bar: 4 };

    pub fn steps_per_bar(self) -> usize {
        self.beats_per_bar * STEPS_PER_BEAT
    }
}

impl Default for Meter {
    fn default() -> Self {
        Meter::COMMON
    }
}

/// A monophonic line at sixteenth-note resolution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TrackDoc")]
pub struct MelodyTrack {
    steps: Vec<StepState>,
    meter: Meter,
}

#[derive(Deserialize)]
struct TrackDoc {
    steps: Vec<StepState>,
    meter: Meter,
}

impl TryFrom<TrackDoc> for MelodyTrack {
    type Error = ContourError;

    fn try_from(doc: TrackDoc) -> Result<Self> {
        MelodyTrack::new(doc.steps, doc.meter)
    }
}

impl MelodyTrack {
    pub fn new(steps: Vec<StepState>, meter: Meter) -> Result<Self> {
        let track = MelodyTrack { steps, meter };
        track.validate()?;
        Ok(track)
    }

    /// Checks the track invariants.
    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(ContourError::EmptyTrack);
        }
        if self.steps[0] == StepState::Sustain {
            return Err(ContourError::LeadingSustain);
        }
        for (i, pair) in self.steps.windows(2).enumerate() {
            if pair[0] == StepState::Silence && pair[1] == StepState::Sustain {
                return Err(ContourError::SustainAfterSilence(i + 1));
            }
        }
        for (i, s) in self.steps.iter().enumerate() {
            if let StepState::Pitch(p) = *s {
                if p > 127 {
                    return Err(ContourError::PitchOutOfRange(p, i));
                }
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> &[StepState] {
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

    pub fn bar_count(&self) -> usize {
        self.steps.len().div_ceil(self.meter.steps_per_bar())
    }

    /// Indices of pitched steps.
    pub fn onsets(&self) -> Vec<usize> {
        (0..self.steps.len())
            .filter(|&i| self.steps[i].is_onset())
            .collect()
    }

    /// Pitch sounding at step `i`, following sustains back to their onset.
    pub fn sounding_pitch(&self, i: usize) -> Option<u8> {
        for s in self.steps[..=i].iter().rev() {
            match *s {
                StepState::Pitch(p) => return Some(p),
                StepState::Silence => return None,
                StepState::Sustain => continue,
            }
        }
        None
    }

    /// Number of steps the note starting at `onset` lasts.
    pub fn note_length(&self, onset: usize) -> usize {
        1 + self.steps[onset + 1..]
            .iter()
            .take_while(|s| **s == StepState::Sustain)
            .count()
    }

    pub fn into_steps(self) -> Vec<StepState> {
        self.steps
    }
}

impl fmt::Display for MelodyTrack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let per_bar = self.meter.steps_per_bar();
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(if i % per_bar == 0 { " | " } else { " " })?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Real-valued pitch curve, one value per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchCurve(pub Vec<f64>);

impl PitchCurve {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ContourError::NonFinite(i));
        }
        Ok(PitchCurve(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Converts a melody to a pitch curve. Sustains and silences hold the
/// previous value; leading silences take the first pitch.
pub fn melody_to_pitch_curve(track: &MelodyTrack) -> Result<PitchCurve> {
    let first = track
        .steps()
        .iter()
        .find_map(|s| s.pitch())
        .ok_or(ContourError::AllSilence)?;
    let mut current = first as f64;
    let values = track
        .steps()
        .iter()
        .map(|s| {
            if let StepState::Pitch(p) = *s {
                current = p as f64;
            }
            current
        })
        .collect();
    Ok(PitchCurve(values))
}

/// Dyadic decomposition of a curve: `layers[0]` is the constant trend,
/// `layers[1..=p]` the detail layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredSignals {
    p: u32,
    layers: Vec<Vec<f64>>,
}

impl LayeredSignals {
    pub fn new(p: u32, layers: Vec<Vec<f64>>) -> Result<Self> {
        if p == 0 {
            return Err(ContourError::ZeroLayers);
        }
        if layers.len() != p as usize + 1 {
            return Err(ContourError::LengthMismatch);
        }
        let n = layers[0].len();
        if layers.iter().any(|l| l.len() != n) {
            return Err(ContourError::LengthMismatch);
        }
        check_divisible(n, p)?;
        Ok(LayeredSignals { p, layers })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn len(&self) -> usize {
        self.layers[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layer(&self, k: usize) -> &[f64] {
        &self.layers[k]
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }
}

/// Checks that `n` steps split into `2^p` equal parts.
pub fn check_divisible(n: usize, p: u32) -> Result<()> {
    if p == 0 {
        return Err(ContourError::ZeroLayers);
    }
    if n == 0 || p >= usize::BITS || !n.is_multiple_of(1usize << p) {
        return Err(ContourError::LengthNotDivisible { n, p });
    }
    Ok(())
}

/// Sampling stride of layer `k` (0..=p) on a phrase of `n` steps.
///
/// Layers below `p` are sampled at `2^k` points; layer `p` always at every step.
pub fn layer_stride(p: u32, n: usize, k: u32) -> usize {
    if k >= p {
        1
    } else {
        n >> k
    }
}

/// Zero-order-hold resampling of `values` at the given stride.
fn hold(values: &[f64], stride: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| values[(i / stride) * stride])
        .collect()
}

pub fn decompose(curve: &PitchCurve, p: u32) -> Result<LayeredSignals> {
    let n = curve.len();
    check_divisible(n, p)?;
    let values = curve.values();
    let mut layers = Vec::with_capacity(p as usize + 1);
    let mut previous = vec![values[0]; n];
    layers.push(previous.clone());
    for k in 1..=p {
        let x = hold(values, layer_stride(p, n, k));
        layers.push(x.iter().zip(&previous).map(|(a, b)| a - b).collect());
        previous = x;
    }
    Ok(LayeredSignals { p, layers })
}

pub fn reconstruct(signals: &LayeredSignals) -> Result<PitchCurve> {
    let n = signals.len();
    if signals.layers.iter().any(|l| l.len() != n) {
        return Err(ContourError::LengthMismatch);
    }
    let mut out = vec![0.0; n];
    for layer in &signals.layers {
        for (o, v) in out.iter_mut().zip(layer) {
            *o += v;
        }
    }
    PitchCurve::new(out)
}

/// Marks the indices where layer `k` must be zero: the grid of layer `k - 1`.
pub fn overlap_zero_mask(p: u32, n: usize, k: u32) -> Result<Vec<bool>> {
    if k == 0 || k > p {
        return Err(ContourError::BadLayerIndex { k, p });
    }
    check_divisible(n, p)?;
    let stride = layer_stride(p, n, k - 1);
    Ok((0..n).map(|i| i % stride == 0).collect())
}

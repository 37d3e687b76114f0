//! Structured chords: root, reduced chord type, decorations and bass.
//!
//! A chord label such as `C:maj7(9)/G` is broken into four parts. The chord
//! type is always one of ten triads or seventh chords; everything richer than
//! that (ninths, sixths, suspensions, power chords) is expressed through the
//! decoration sets `add` (9th/11th/13th with a semitone offset) and `omit`
//! (1st/3rd/5th).
//!
//! Labels follow a subset of Harte syntax:
//!
//! ```text
//! <note>[:type][(ext{,ext})][/note]
//! note = A..G followed by any number of '#' or 'b'
//! type = maj | min | dim | aug | maj7 | min7 | 7 | dim7 | hdim7 | minmaj7 | sus2 | sus4
//! ext  = 9 | b9 | #9 | 11 | #11 | 13 | b13 | omit1 | omit3 | omit5
//! ```
//!
//! Rendering always produces the canonical form with sharps only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest semitone offset an added degree may carry.
pub const MAX_ADD_OFFSET: i8 = 2;

const SHARP_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChordError {
    #[error("malformed chord symbol {symbol:?}: {reason}")]
    MalformedSymbol { symbol: String, reason: String },
    #[error("unsupported chord type {0:?}")]
    UnsupportedChordType(String),
    #[error("degree {0} is not valid for this operation")]
    InvalidDegree(Degree),
    #[error("add offset {0} outside [-{MAX_ADD_OFFSET}, {MAX_ADD_OFFSET}]")]
    OffsetOutOfRange(i8),
    #[error("chord duration must be at least one step")]
    ZeroDuration,
    #[error("decorations leave the chord without any sounding pitch class")]
    EmptyChord,
    #[error("chords differ in root or chord type")]
    RootOrTypeMismatch,
}

pub type Result<T, E = ChordError> = std::result::Result<T, E>;

/// One of the twelve pitch classes, 0 = C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PitchClass(u8);

impl PitchClass {
    pub const C: PitchClass = PitchClass(0);

    /// Wraps any integer into the 0..12 range.
    pub fn new(value: i32) -> Self {
        PitchClass(value.rem_euclid(12) as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn transpose(self, semitones: i32) -> Self {
        Self::new(self.0 as i32 + semitones)
    }

    /// Interval from `self` up to `other`, in 0..12.
    pub fn interval_to(self, other: PitchClass) -> u8 {
        (other.0 + 12 - self.0) % 12
    }

    pub fn name(self) -> &'static str {
        SHARP_NAMES[self.0 as usize]
    }

    fn parse_note(text: &str) -> Option<PitchClass> {
        let mut chars = text.chars();
        let base = match chars.next()? {
            'C' => 0,
            'D' => 2,
            'E' => 4,
            'F' => 5,
            'G' => 7,
            'A' => 9,
            'B' => 11,
            _ => return None,
        };
        let mut shift = 0;
        for c in chars {
            match c {
                '#' => shift += 1,
                'b' => shift -= 1,
                _ => return None,
            }
        }
        Some(PitchClass::new(base + shift))
    }
}

impl TryFrom<u8> for PitchClass {
    type Error = String;

    fn try_from(value: u8) -> std::result::Result<Self, Self::Error> {
        if value < 12 {
            Ok(PitchClass(value))
        } else {
            Err(format!("pitch class {value} out of range"))
        }
    }
}

impl From<PitchClass> for u8 {
    fn from(pc: PitchClass) -> u8 {
        pc.0
    }
}

impl fmt::Display for PitchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reduced chord vocabulary: the triads and seventh chords.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChordType {
    Maj,
    Min,
    Dim,
    Aug,
    Maj7,
    Min7,
    Dom7,
    Dim7,
    Hdim7,
    Minmaj7,
}

impl ChordType {
    pub const ALL: [ChordType; 10] = [
        ChordType::Maj,
        ChordType::Min,
        ChordType::Dim,
        ChordType::Aug,
        ChordType::Maj7,
        ChordType::Min7,
        ChordType::Dom7,
        ChordType::Dim7,
        ChordType::Hdim7,
        ChordType::Minmaj7,
    ];

    /// Semitone intervals above the root.
    pub fn intervals(self) -> &'static [u8] {
        match self {
            ChordType::Maj => &[0, 4, 7],
            ChordType::Min => &[0, 3, 7],
            ChordType::Dim => &[0, 3, 6],
            ChordType::Aug => &[0, 4, 8],
            ChordType::Maj7 => &[0, 4, 7, 11],
            ChordType::Min7 => &[0, 3, 7, 10],
            ChordType::Dom7 => &[0, 4, 7, 10],
            ChordType::Dim7 => &[0, 3, 6, 9],
            ChordType::Hdim7 => &[0, 3, 6, 10],
            ChordType::Minmaj7 => &[0, 3, 7, 11],
        }
    }

    pub fn third(self) -> u8 {
        self.intervals()[1]
    }

    pub fn fifth(self) -> u8 {
        self.intervals()[2]
    }

    pub fn index(self) -> usize {
        ChordType::ALL.iter().position(|&t| t == self).unwrap()
    }

    pub fn label(self) -> &'static str {
        match self {
            ChordType::Maj => "maj",
            ChordType::Min => "min",
            ChordType::Dim => "dim",
            ChordType::Aug => "aug",
            ChordType::Maj7 => "maj7",
            ChordType::Min7 => "min7",
            ChordType::Dom7 => "7",
            ChordType::Dim7 => "dim7",
            ChordType::Hdim7 => "hdim7",
            ChordType::Minmaj7 => "minmaj7",
        }
    }

    /// Seventh chord obtained by adding a seventh `interval` semitones above the
    /// root, if the triad admits one.
    fn with_seventh(self, interval: u8) -> Option<ChordType> {
        match (self, interval) {
            (ChordType::Maj, 11) => Some(ChordType::Maj7),
            (ChordType::Maj, 10) => Some(ChordType::Dom7),
            (ChordType::Min, 10) => Some(ChordType::Min7),
            (ChordType::Min, 11) => Some(ChordType::Minmaj7),
            (ChordType::Dim, 9) => Some(ChordType::Dim7),
            (ChordType::Dim, 10) => Some(ChordType::Hdim7),
            (t, i) if t.intervals().len() == 4 && t.intervals()[3] == i => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for ChordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Chord degrees addressed by the decoration operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Degree {
    First,
    Third,
    Fifth,
    Seventh,
    Ninth,
    Eleventh,
    Thirteenth,
}

impl Degree {
    pub fn number(self) -> u8 {
        match self {
            Degree::First => 1,
            Degree::Third => 3,
            Degree::Fifth => 5,
            Degree::Seventh => 7,
            Degree::Ninth => 9,
            Degree::Eleventh => 11,
            Degree::Thirteenth => 13,
        }
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Degrees that can be added on top of the chord type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AddDegree {
    Ninth,
    Eleventh,
    Thirteenth,
}

impl AddDegree {
    pub const ALL: [AddDegree; 3] = [AddDegree::Ninth, AddDegree::Eleventh, AddDegree::Thirteenth];

    /// Pitch-class interval of the default (major 9th, perfect 11th, major 13th) degree.
    pub fn default_interval(self) -> u8 {
        match self {
            AddDegree::Ninth => 2,
            AddDegree::Eleventh => 5,
            AddDegree::Thirteenth => 9,
        }
    }

    pub fn number(self) -> u8 {
        Degree::from(self).number()
    }
}

impl From<AddDegree> for Degree {
    fn from(d: AddDegree) -> Degree {
        match d {
            AddDegree::Ninth => Degree::Ninth,
            AddDegree::Eleventh => Degree::Eleventh,
            AddDegree::Thirteenth => Degree::Thirteenth,
        }
    }
}

impl TryFrom<Degree> for AddDegree {
    type Error = ChordError;

    fn try_from(d: Degree) -> Result<Self> {
        match d {
            Degree::Ninth => Ok(AddDegree::Ninth),
            Degree::Eleventh => Ok(AddDegree::Eleventh),
            Degree::Thirteenth => Ok(AddDegree::Thirteenth),
            other => Err(ChordError::InvalidDegree(other)),
        }
    }
}

/// Degrees of the base chord that can be omitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmitDegree {
    First,
    Third,
    Fifth,
}

impl OmitDegree {
    pub const ALL: [OmitDegree; 3] = [OmitDegree::First, OmitDegree::Third, OmitDegree::Fifth];

    fn interval(self, chord_type: ChordType) -> u8 {
        match self {
            OmitDegree::First => 0,
            OmitDegree::Third => chord_type.third(),
            OmitDegree::Fifth => chord_type.fifth(),
        }
    }

    pub fn number(self) -> u8 {
        Degree::from(self).number()
    }
}

impl From<OmitDegree> for Degree {
    fn from(d: OmitDegree) -> Degree {
        match d {
            OmitDegree::First => Degree::First,
            OmitDegree::Third => Degree::Third,
            OmitDegree::Fifth => Degree::Fifth,
        }
    }
}

impl TryFrom<Degree> for OmitDegree {
    type Error = ChordError;

    fn try_from(d: Degree) -> Result<Self> {
        match d {
            Degree::First => Ok(OmitDegree::First),
            Degree::Third => Ok(OmitDegree::Third),
            Degree::Fifth => Ok(OmitDegree::Fifth),
            other => Err(ChordError::InvalidDegree(other)),
        }
    }
}

/// The `(add, omit)` decoration tuple of a chord.
///
/// Ordering and hashing are structural, so decorations can key state
/// inventories directly. The serialized form is the extension list used in
/// chord labels, e.g. `"9,omit3"`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decorations {
    add: BTreeMap<AddDegree, i8>,
    omit: BTreeSet<OmitDegree>,
}

impl Decorations {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.add.is_empty() && self.omit.is_empty()
    }

    pub fn adds(&self) -> impl Iterator<Item = (AddDegree, i8)> + '_ {
        self.add.iter().map(|(&d, &o)| (d, o))
    }

    pub fn omits(&self) -> impl Iterator<Item = OmitDegree> + '_ {
        self.omit.iter().copied()
    }

    pub fn add_offset(&self, degree: AddDegree) -> Option<i8> {
        self.add.get(&degree).copied()
    }

    pub fn omits_degree(&self, degree: OmitDegree) -> bool {
        self.omit.contains(&degree)
    }

    /// Inserts or replaces the add entry for `degree`.
    pub fn with_add(mut self, degree: AddDegree, offset: i8) -> Result<Self> {
        if offset.abs() > MAX_ADD_OFFSET {
            return Err(ChordError::OffsetOutOfRange(offset));
        }
        self.add.insert(degree, offset);
        Ok(self)
    }

    pub fn with_omit(mut self, degree: OmitDegree) -> Self {
        self.omit.insert(degree);
        self
    }

    pub fn without_add(mut self, degree: AddDegree) -> Self {
        self.add.remove(&degree);
        self
    }

    /// Extension tokens in canonical order: adds by degree, then omits.
    pub fn tokens(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.add.len() + self.omit.len());
        for (&degree, &offset) in &self.add {
            let accidental = if offset >= 0 {
                "#".repeat(offset as usize)
            } else {
                "b".repeat(offset.unsigned_abs() as usize)
            };
            out.push(format!("{accidental}{}", degree.number()));
        }
        for &degree in &self.omit {
            out.push(format!("omit{}", degree.number()));
        }
        out
    }

    /// Parses a comma-separated extension list (the text inside the parentheses).
    pub fn parse_extensions(text: &str) -> Result<Self> {
        let mut deco = Decorations::new();
        if text.trim().is_empty() {
            return Ok(deco);
        }
        for token in text.split(',') {
            match Extension::parse(token.trim())? {
                Extension::Add(d, o) => deco = deco.with_add(d, o)?,
                Extension::Omit(d) => deco = deco.with_omit(d),
                Extension::Seventh(_) | Extension::Present(_) => {
                    return Err(ChordError::UnsupportedChordType(token.trim().to_string()))
                }
            }
        }
        Ok(deco)
    }
}

impl fmt::Display for Decorations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens().join(","))
    }
}

impl Serialize for Decorations {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Decorations {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Decorations::parse_extensions(&text).map_err(serde::de::Error::custom)
    }
}

/// A single parenthesised extension token.
enum Extension {
    Add(AddDegree, i8),
    Omit(OmitDegree),
    /// A seventh given as an interval above the root (`7`, `b7`, `bb7`).
    Seventh(u8),
    /// A chord tone that is already implied (`1`, `3`, `5`).
    Present(u8),
}

impl Extension {
    fn parse(token: &str) -> Result<Extension> {
        let malformed = |reason: &str| ChordError::MalformedSymbol {
            symbol: token.to_string(),
            reason: reason.to_string(),
        };
        if let Some(rest) = token.strip_prefix("omit").or_else(|| token.strip_prefix('*')) {
            return match rest {
                "1" => Ok(Extension::Omit(OmitDegree::First)),
                "3" => Ok(Extension::Omit(OmitDegree::Third)),
                "5" => Ok(Extension::Omit(OmitDegree::Fifth)),
                _ => Err(ChordError::UnsupportedChordType(token.to_string())),
            };
        }
        let digits_at = token
            .find(|c: char| c.is_ascii_digit())
            .ok_or_else(|| malformed("missing degree number"))?;
        let (accidentals, number) = token.split_at(digits_at);
        let mut offset: i32 = 0;
        for c in accidentals.chars() {
            match c {
                '#' => offset += 1,
                'b' => offset -= 1,
                _ => return Err(malformed("unexpected character in extension")),
            }
        }
        let number: u8 = number.parse().map_err(|_| malformed("bad degree number"))?;
        let degree = match number {
            2 | 9 => AddDegree::Ninth,
            4 | 11 => AddDegree::Eleventh,
            6 | 13 => AddDegree::Thirteenth,
            7 => {
                return match offset {
                    0 => Ok(Extension::Seventh(11)),
                    -1 => Ok(Extension::Seventh(10)),
                    -2 => Ok(Extension::Seventh(9)),
                    _ => Err(ChordError::UnsupportedChordType(token.to_string())),
                }
            }
            1 | 3 | 5 if offset == 0 => return Ok(Extension::Present(number)),
            _ => return Err(ChordError::UnsupportedChordType(token.to_string())),
        };
        if offset.abs() > MAX_ADD_OFFSET as i32 {
            return Err(ChordError::OffsetOutOfRange(offset.clamp(-100, 100) as i8));
        }
        Ok(Extension::Add(degree, offset as i8))
    }
}

/// Weights used to measure how far a decoration set has moved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChangeWeights {
    pub omit_first: f64,
    pub omit_third: f64,
    pub omit_fifth: f64,
    pub add_ninth: f64,
    pub add_eleventh: f64,
    pub add_thirteenth: f64,
}

impl Default for ChangeWeights {
    fn default() -> Self {
        Self {
            omit_first: 1.0,
            omit_third: 0.6,
            omit_fifth: 0.6,
            add_ninth: 0.4,
            add_eleventh: 0.3,
            add_thirteenth: 0.2,
        }
    }
}

impl ChangeWeights {
    pub fn omit(&self, degree: OmitDegree) -> f64 {
        match degree {
            OmitDegree::First => self.omit_first,
            OmitDegree::Third => self.omit_third,
            OmitDegree::Fifth => self.omit_fifth,
        }
    }

    pub fn add(&self, degree: AddDegree) -> f64 {
        match degree {
            AddDegree::Ninth => self.add_ninth,
            AddDegree::Eleventh => self.add_eleventh,
            AddDegree::Thirteenth => self.add_thirteenth,
        }
    }

    /// Weighted size of the symmetric difference between two decoration sets.
    /// An add present on both sides with different offsets counts once.
    pub fn distance(&self, a: &Decorations, b: &Decorations) -> f64 {
        let adds: f64 = AddDegree::ALL
            .iter()
            .filter(|&&d| a.add_offset(d) != b.add_offset(d))
            .map(|&d| self.add(d))
            .sum();
        let omits: f64 = OmitDegree::ALL
            .iter()
            .filter(|&&d| a.omits_degree(d) != b.omits_degree(d))
            .map(|&d| self.omit(d))
            .sum();
        adds + omits
    }
}

/// A chord with its duration in sixteenth-note steps.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chord {
    root: PitchClass,
    chord_type: ChordType,
    decorations: Decorations,
    bass: PitchClass,
    duration: u32,
}

impl Chord {
    pub fn new(
        root: PitchClass,
        chord_type: ChordType,
        decorations: Decorations,
        bass: PitchClass,
        duration: u32,
    ) -> Result<Self> {
        if duration == 0 {
            return Err(ChordError::ZeroDuration);
        }
        let chord = Chord {
            root,
            chord_type,
            decorations,
            bass,
            duration,
        };
        if chord.pitch_class_mask() == 0 {
            return Err(ChordError::EmptyChord);
        }
        Ok(chord)
    }

    /// Undecorated chord whose bass is its root.
    pub fn simple(root: PitchClass, chord_type: ChordType, duration: u32) -> Result<Self> {
        Self::new(root, chord_type, Decorations::new(), root, duration)
    }

    pub fn root(&self) -> PitchClass {
        self.root
    }

    pub fn chord_type(&self) -> ChordType {
        self.chord_type
    }

    pub fn decorations(&self) -> &Decorations {
        &self.decorations
    }

    pub fn bass(&self) -> PitchClass {
        self.bass
    }

    pub fn duration(&self) -> u32 {
        self.duration
    }

    pub fn with_duration(&self, duration: u32) -> Result<Self> {
        Self::new(self.root, self.chord_type, self.decorations.clone(), self.bass, duration)
    }

    /// Same chord with its decoration set replaced.
    pub fn with_decorations(&self, decorations: Decorations) -> Result<Self> {
        Self::new(self.root, self.chord_type, decorations, self.bass, self.duration)
    }

    /// Bit `i` set when the pitch class `(root + i) mod 12` sounds.
    pub fn relative_mask(&self) -> u16 {
        let mut mask = 0u16;
        for &i in self.chord_type.intervals() {
            mask |= 1 << i;
        }
        for d in self.decorations.omits() {
            mask &= !(1 << d.interval(self.chord_type));
        }
        for (d, offset) in self.decorations.adds() {
            let interval = (d.default_interval() as i32 + offset as i32).rem_euclid(12);
            mask |= 1 << interval;
        }
        mask
    }

    /// Bit `pc` set when absolute pitch class `pc` sounds.
    pub fn pitch_class_mask(&self) -> u16 {
        let rel = self.relative_mask() as u32;
        let r = self.root.value() as u32;
        (((rel << r) | (rel >> (12 - r))) & 0x0fff) as u16
    }

    /// The realized pitch-class set of the chord.
    pub fn pitch_classes(&self) -> BTreeSet<PitchClass> {
        let mask = self.pitch_class_mask();
        (0..12)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| PitchClass(i as u8))
            .collect()
    }

    pub fn contains(&self, pc: PitchClass) -> bool {
        self.pitch_class_mask() & (1 << pc.value()) != 0
    }

    /// Adds `degree` at `offset` semitones from its default interval,
    /// replacing any existing entry for that degree.
    pub fn apply_add(&self, degree: Degree, offset: i8) -> Result<Self> {
        let degree = AddDegree::try_from(degree)?;
        self.with_decorations(self.decorations.clone().with_add(degree, offset)?)
    }

    /// Omits `degree`. Omitting an add degree that is not present leaves the
    /// chord unchanged; omitting one that is present removes it.
    pub fn apply_omit(&self, degree: Degree) -> Result<Self> {
        let deco = match degree {
            Degree::First | Degree::Third | Degree::Fifth => {
                self.decorations.clone().with_omit(OmitDegree::try_from(degree)?)
            }
            Degree::Ninth | Degree::Eleventh | Degree::Thirteenth => {
                self.decorations.clone().without_add(AddDegree::try_from(degree)?)
            }
            Degree::Seventh => return Err(ChordError::InvalidDegree(degree)),
        };
        self.with_decorations(deco)
    }

    /// Weighted decoration change between two chords sharing root and type.
    pub fn decoration_distance(&self, other: &Chord, weights: &ChangeWeights) -> Result<f64> {
        if self.root != other.root || self.chord_type != other.chord_type {
            return Err(ChordError::RootOrTypeMismatch);
        }
        Ok(weights.distance(&self.decorations, &other.decorations))
    }

    /// Parses a chord label and attaches a duration in sixteenth steps.
    pub fn parse(label: &str, duration: u32) -> Result<Self> {
        let parsed = parse_label(label)?;
        Chord::new(parsed.root, parsed.chord_type, parsed.decorations, parsed.bass, duration)
    }

    /// Canonical label, without the duration.
    pub fn symbol(&self) -> String {
        let mut out = format!("{}:{}", self.root.name(), self.chord_type.label());
        if !self.decorations.is_empty() {
            out.push('(');
            out.push_str(&self.decorations.to_string());
            out.push(')');
        }
        if self.bass != self.root {
            out.push('/');
            out.push_str(self.bass.name());
        }
        out
    }
}

impl fmt::Display for Chord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.symbol())
    }
}

/// Chord label with no duration attached.
#[derive(Debug, Clone, PartialEq, Eq)]
struct ParsedLabel {
    root: PitchClass,
    chord_type: ChordType,
    decorations: Decorations,
    bass: PitchClass,
}

impl FromStr for Chord {
    type Err = ChordError;

    /// Parses a label with a duration of one bar of 4/4 (16 steps).
    fn from_str(s: &str) -> Result<Self> {
        Chord::parse(s, 16)
    }
}

#[derive(Serialize, Deserialize)]
struct ChordDoc {
    label: String,
    duration: u32,
}

/// Serialized as `{"label": "C:maj7", "duration": 16}`.
impl Serialize for Chord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ChordDoc {
            label: self.symbol(),
            duration: self.duration,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Chord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ChordDoc::deserialize(d)?;
        Chord::parse(&doc.label, doc.duration).map_err(serde::de::Error::custom)
    }
}

/// Total length of a chord timeline in steps.
pub fn timeline_steps(chords: &[Chord]) -> usize {
    chords.iter().map(|c| c.duration() as usize).sum()
}

/// Index of the active chord at every step of the timeline.
pub fn chord_index_per_step(chords: &[Chord]) -> Vec<usize> {
    chords
        .iter()
        .enumerate()
        .flat_map(|(i, c)| std::iter::repeat_n(i, c.duration() as usize))
        .collect()
}

/// Convenience wrapper matching the label grammar.
pub fn parse_chord_symbol(label: &str, duration: u32) -> Result<Chord> {
    Chord::parse(label, duration)
}

pub fn render_chord_symbol(chord: &Chord) -> String {
    chord.symbol()
}

fn parse_label(label: &str) -> Result<ParsedLabel> {
    let malformed = |reason: &str| ChordError::MalformedSymbol {
        symbol: label.to_string(),
        reason: reason.to_string(),
    };
    let text = label.trim();
    if text.is_empty() {
        return Err(malformed("empty label"));
    }

    // Split off the bass after the last '/' that is outside parentheses.
    let (body, bass_text) = match text.rfind('/') {
        Some(i) if !text[i..].contains(')') => (&text[..i], Some(&text[i + 1..])),
        _ => (text, None),
    };

    let (head, ext_text) = match body.find('(') {
        Some(open) => {
            let close = body.rfind(')').ok_or_else(|| malformed("unclosed '('"))?;
            if close != body.len() - 1 || close < open {
                return Err(malformed("text after ')'"));
            }
            (&body[..open], Some(&body[open + 1..close]))
        }
        None => {
            if body.contains(')') {
                return Err(malformed("unmatched ')'"));
            }
            (body, None)
        }
    };

    let (root_text, type_text) = match head.split_once(':') {
        Some((r, t)) => (r, Some(t)),
        None => (head, None),
    };
    let root = PitchClass::parse_note(root_text).ok_or_else(|| malformed("bad root note"))?;

    let (mut chord_type, mut deco) = match type_text {
        None => (ChordType::Maj, Decorations::new()),
        Some(t) if t.is_empty() && ext_text.is_some() => (ChordType::Maj, Decorations::new()),
        Some(t) => canonical_type(t)?,
    };

    if let Some(exts) = ext_text {
        for token in exts.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match Extension::parse(token)? {
                Extension::Add(d, o) => deco = deco.with_add(d, o)?,
                Extension::Omit(d) => deco = deco.with_omit(d),
                Extension::Seventh(interval) => {
                    chord_type = chord_type
                        .with_seventh(interval)
                        .ok_or_else(|| ChordError::UnsupportedChordType(label.to_string()))?;
                }
                Extension::Present(1) if deco.omits_degree(OmitDegree::First) => {
                    return Err(ChordError::UnsupportedChordType(label.to_string()))
                }
                Extension::Present(_) => {}
            }
        }
    }

    let bass = match bass_text {
        None => root,
        Some(b) => parse_bass(b, root).ok_or_else(|| malformed("bad bass"))?,
    };

    Ok(ParsedLabel {
        root,
        chord_type,
        decorations: deco,
        bass,
    })
}

/// Bass given either as a note name or as a Harte interval degree (`/3`, `/b7`).
fn parse_bass(text: &str, root: PitchClass) -> Option<PitchClass> {
    if let Some(pc) = PitchClass::parse_note(text) {
        return Some(pc);
    }
    let digits_at = text.find(|c: char| c.is_ascii_digit())?;
    let (acc, number) = text.split_at(digits_at);
    let mut shift = 0i32;
    for c in acc.chars() {
        match c {
            '#' => shift += 1,
            'b' => shift -= 1,
            _ => return None,
        }
    }
    let major_scale = [0, 2, 4, 5, 7, 9, 11];
    let n: usize = number.parse().ok()?;
    if n == 0 {
        return None;
    }
    let base = major_scale[(n - 1) % 7];
    Some(root.transpose(base + shift))
}

/// Maps a type shorthand onto the reduced vocabulary plus decorations.
fn canonical_type(text: &str) -> Result<(ChordType, Decorations)> {
    let plain = |t| Ok((t, Decorations::new()));
    let with = |t, adds: &[AddDegree], omits: &[OmitDegree]| {
        let mut d = Decorations::new();
        for &a in adds {
            d = d.with_add(a, 0)?;
        }
        for &o in omits {
            d = d.with_omit(o);
        }
        Ok((t, d))
    };
    use AddDegree::*;
    match text {
        "maj" => plain(ChordType::Maj),
        "min" => plain(ChordType::Min),
        "dim" => plain(ChordType::Dim),
        "aug" => plain(ChordType::Aug),
        "maj7" => plain(ChordType::Maj7),
        "min7" => plain(ChordType::Min7),
        "7" | "dom7" => plain(ChordType::Dom7),
        "dim7" => plain(ChordType::Dim7),
        "hdim7" => plain(ChordType::Hdim7),
        "minmaj7" => plain(ChordType::Minmaj7),
        "sus2" => with(ChordType::Maj, &[Ninth], &[OmitDegree::Third]),
        "sus4" => with(ChordType::Maj, &[Eleventh], &[OmitDegree::Third]),
        "maj6" | "6" => with(ChordType::Maj, &[Thirteenth], &[]),
        "min6" => with(ChordType::Min, &[Thirteenth], &[]),
        "9" => with(ChordType::Dom7, &[Ninth], &[]),
        "maj9" => with(ChordType::Maj7, &[Ninth], &[]),
        "min9" => with(ChordType::Min7, &[Ninth], &[]),
        "11" => with(ChordType::Dom7, &[Ninth, Eleventh], &[]),
        "min11" => with(ChordType::Min7, &[Ninth, Eleventh], &[]),
        "13" => with(ChordType::Dom7, &[Ninth, Thirteenth], &[]),
        "maj13" => with(ChordType::Maj7, &[Ninth, Thirteenth], &[]),
        "min13" => with(ChordType::Min7, &[Ninth, Thirteenth], &[]),
        "5" => with(ChordType::Maj, &[], &[OmitDegree::Third]),
        "1" => with(ChordType::Maj, &[], &[OmitDegree::Third, OmitDegree::Fifth]),
        other => Err(ChordError::UnsupportedChordType(other.to_string())),
    }
}

//! Standard MIDI file export and import.
//!
//! Export writes format-1 files at 480 ticks per quarter, so one sixteenth
//! step is 120 ticks. The first track carries the tempo and time signature.
//! Import goes through `midly`.

use std::collections::HashMap;
use std::path::Path;

use midly::{MetaMessage, MidiMessage, Smf, Timing, TrackEventKind};
use thiserror::Error;

use crate::contour::{MelodyTrack, Meter, StepState};
use crate::integration::{melody_notes, Arrangement, Note};

pub const PPQ: u16 = 480;
pub const TICKS_PER_STEP: u32 = PPQ as u32 / 4;
pub const LEAD_VELOCITY: u8 = 80;
pub const ACCOMPANIMENT_VELOCITY: u8 = 64;
pub const DEFAULT_TEMPO_BPM: f64 = 90.0;

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unreadable MIDI data: {0}")]
    Parse(String),
    #[error("unsupported MIDI file: {0}")]
    Unsupported(&'static str),
    #[error("track {0} does not exist")]
    NoSuchTrack(usize),
    #[error("track has no notes")]
    Empty,
    #[error("tempo must be positive, got {0}")]
    BadTempo(f64),
}

pub type Result<T, E = MidiError> = std::result::Result<T, E>;

/// Notes of one output track.
#[derive(Debug, Clone, PartialEq)]
pub struct MidiTrack {
    pub name: String,
    pub channel: u8,
    pub velocity: u8,
    pub notes: Vec<Note>,
}

impl MidiTrack {
    pub fn from_melody(name: &str, channel: u8, velocity: u8, track: &MelodyTrack) -> Self {
        MidiTrack {
            name: name.into(),
            channel,
            velocity,
            notes: melody_notes(track),
        }
    }
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 4];
    let mut i = 3;
    buf[i] = (value & 0x7f) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = (value & 0x7f) as u8 | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

fn push_meta(out: &mut Vec<u8>, kind: u8, data: &[u8]) {
    push_vlq(out, 0);
    out.extend_from_slice(&[0xff, kind]);
    push_vlq(out, data.len() as u32);
    out.extend_from_slice(data);
}

fn track_chunk(track: &MidiTrack, conductor: Option<(f64, Meter)>) -> Vec<u8> {
    let mut body = Vec::new();
    push_meta(&mut body, 0x03, track.name.as_bytes());
    if let Some((bpm, meter)) = conductor {
        let us = (60_000_000.0 / bpm).round().clamp(1.0, 16_777_215.0) as u32;
        push_meta(&mut body, 0x51, &us.to_be_bytes()[1..]);
        push_meta(&mut body, 0x58, &[meter.beats_per_bar as u8, 2, 24, 8]);
    }
    // (tick, 0 = off / 1 = on, pitch)
    let mut events: Vec<(u32, u8, u8)> = Vec::with_capacity(track.notes.len() * 2);
    for n in &track.notes {
        let start = n.start as u32 * TICKS_PER_STEP;
        events.push((start, 1, n.pitch));
        events.push((start + n.length as u32 * TICKS_PER_STEP, 0, n.pitch));
    }
    events.sort_unstable();
    let ch = track.channel & 0x0f;
    let mut now = 0;
    for (tick, on, pitch) in events {
        push_vlq(&mut body, tick - now);
        now = tick;
        if on == 1 {
            body.extend_from_slice(&[0x90 | ch, pitch & 0x7f, track.velocity & 0x7f]);
        } else {
            body.extend_from_slice(&[0x80 | ch, pitch & 0x7f, 0]);
        }
    }
    push_meta(&mut body, 0x2f, &[]);

    let mut chunk = Vec::with_capacity(body.len() + 8);
    chunk.extend_from_slice(b"MTrk");
    chunk.extend_from_slice(&(body.len() as u32).to_be_bytes());
    chunk.extend_from_slice(&body);
    chunk
}

/// Serializes tracks as a format-1 file; the first track holds tempo and
/// time signature.
pub fn write_smf(tracks: &[MidiTrack], tempo_bpm: f64, meter: Meter) -> Result<Vec<u8>> {
    if !(tempo_bpm > 0.0 && tempo_bpm.is_finite()) {
        return Err(MidiError::BadTempo(tempo_bpm));
    }
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(tracks.len() as u16).to_be_bytes());
    out.extend_from_slice(&PPQ.to_be_bytes());
    for (i, t) in tracks.iter().enumerate() {
        out.extend(track_chunk(t, (i == 0).then_some((tempo_bpm, meter))));
    }
    Ok(out)
}

/// The three arrangement tracks: lead on channel 0, right hand on 1, left
/// hand on 2.
pub fn arrangement_tracks(arr: &Arrangement) -> Vec<MidiTrack> {
    vec![
        MidiTrack::from_melody("lead", 0, LEAD_VELOCITY, &arr.lead),
        MidiTrack {
            name: "right hand".into(),
            channel: 1,
            velocity: ACCOMPANIMENT_VELOCITY,
            notes: arr.right_hand.notes(),
        },
        MidiTrack::from_melody("left hand", 2, ACCOMPANIMENT_VELOCITY, &arr.left_hand),
    ]
}

pub fn arrangement_to_smf(arr: &Arrangement, tempo_bpm: f64) -> Result<Vec<u8>> {
    write_smf(&arrangement_tracks(arr), tempo_bpm, arr.meter)
}

pub fn export_midi(arr: &Arrangement, path: &Path, tempo_bpm: f64) -> Result<()> {
    let bytes = arrangement_to_smf(arr, tempo_bpm)?;
    std::fs::write(path, bytes).map_err(|source| MidiError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One track read back from a file, in steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImportedTrack {
    pub name: Option<String>,
    pub notes: Vec<Note>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportedMidi {
    pub tracks: Vec<ImportedTrack>,
    pub tempo_bpm: Option<f64>,
    pub beats_per_bar: Option<usize>,
}

fn ticks_to_steps(ticks: u64, ppq: u64) -> usize {
    ((ticks * 4 + ppq / 2) / ppq) as usize
}

/// Parses a MIDI file into notes on the sixteenth grid (rounded).
pub fn import_midi(bytes: &[u8]) -> Result<ImportedMidi> {
    let smf = Smf::parse(bytes).map_err(|e| MidiError::Parse(e.to_string()))?;
    let ppq = match smf.header.timing {
        Timing::Metrical(t) => t.as_int() as u64,
        Timing::Timecode(..) => return Err(MidiError::Unsupported("timecode timing")),
    };
    if ppq == 0 {
        return Err(MidiError::Unsupported("zero ticks per quarter"));
    }
    let mut tempo_bpm = None;
    let mut beats_per_bar = None;
    let mut tracks = Vec::with_capacity(smf.tracks.len());
    for events in &smf.tracks {
        let mut now: u64 = 0;
        let mut open: HashMap<(u8, u8), Vec<u64>> = HashMap::new();
        let mut out = ImportedTrack::default();
        let mut raw: Vec<(u64, u64, u8)> = Vec::new();
        for ev in events {
            now += ev.delta.as_int() as u64;
            match ev.kind {
                TrackEventKind::Meta(MetaMessage::TrackName(name)) => {
                    out.name = Some(String::from_utf8_lossy(name).into_owned());
                }
                TrackEventKind::Meta(MetaMessage::Tempo(us)) if tempo_bpm.is_none() => {
                    tempo_bpm = Some(60_000_000.0 / us.as_int() as f64);
                }
                TrackEventKind::Meta(MetaMessage::TimeSignature(num, ..)) if beats_per_bar.is_none() => {
                    beats_per_bar = Some(num as usize);
                }
                TrackEventKind::Midi { channel, message } => {
                    let ch = channel.as_int();
                    match message {
                        MidiMessage::NoteOn { key, vel } if vel.as_int() > 0 => {
                            open.entry((ch, key.as_int())).or_default().push(now);
                        }
                        MidiMessage::NoteOn { key, .. } | MidiMessage::NoteOff { key, .. } => {
                            let starts = open.entry((ch, key.as_int())).or_default();
                            if !starts.is_empty() {
                                let start = starts.remove(0);
                                raw.push((start, now, key.as_int()));
                            }
                        }
                        _ => {}
                    }
                }
                _ => {}
            }
        }
        raw.sort_unstable();
        out.notes = raw
            .into_iter()
            .filter_map(|(s, e, pitch)| {
                let start = ticks_to_steps(s, ppq);
                let end = ticks_to_steps(e, ppq);
                (end > start).then_some(Note {
                    start,
                    pitch,
                    length: end - start,
                })
            })
            .collect();
        out.notes.sort();
        tracks.push(out);
    }
    Ok(ImportedMidi {
        tracks,
        tempo_bpm,
        beats_per_bar,
    })
}

pub fn read_midi(path: &Path) -> Result<ImportedMidi> {
    let bytes = std::fs::read(path).map_err(|source| MidiError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    import_midi(&bytes)
}

/// Monophonic reduction of notes onto `len` steps (or up to the last note
/// end). A step where notes start takes the highest of them; otherwise the
/// current note is sustained while it lasts.
pub fn notes_to_melody(notes: &[Note], len: Option<usize>, meter: Meter) -> Result<MelodyTrack> {
    if notes.is_empty() {
        return Err(MidiError::Empty);
    }
    let len = len.unwrap_or_else(|| notes.iter().map(|n| n.start + n.length).max().unwrap_or(0));
    let mut steps = Vec::with_capacity(len);
    let mut sounding_until = 0;
    for i in 0..len {
        let start = notes.iter().filter(|n| n.start == i).max_by_key(|n| n.pitch);
        let state = match start {
            Some(n) => {
                sounding_until = i + n.length;
                StepState::Pitch(n.pitch)
            }
            None if i < sounding_until => StepState::Sustain,
            None => StepState::Silence,
        };
        steps.push(state);
    }
    MelodyTrack::new(steps, meter).map_err(|_| MidiError::Empty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chord::Chord;
    use crate::contour::StepState::{Pitch as P, Silence as R, Sustain as S};
    use crate::integration::PolyTrack;

    fn melody(steps: Vec<StepState>) -> MelodyTrack {
        MelodyTrack::new(steps, Meter::COMMON).unwrap()
    }

    #[test]
    fn vlq_encoding() {
        let enc = |v| {
            let mut o = Vec::new();
            push_vlq(&mut o, v);
            o
        };
        assert_eq!(enc(0), vec![0x00]);
        assert_eq!(enc(0x7f), vec![0x7f]);
        assert_eq!(enc(0x80), vec![0x81, 0x00]);
        assert_eq!(enc(240), vec![0x81, 0x70]);
        assert_eq!(enc(0x0fff_ffff), vec![0xff, 0xff, 0xff, 0x7f]);
    }

    #[test]
    fn single_note_bytes() {
        let t = MidiTrack::from_melody("x", 0, 80, &melody(vec![P(60), S]));
        let bytes = write_smf(&[t], 120.0, Meter::COMMON).unwrap();
        assert_eq!(&bytes[..14], &[b'M', b'T', b'h', b'd', 0, 0, 0, 6, 0, 1, 0, 1, 0x01, 0xe0]);
        let tail = &bytes[bytes.len() - 13..];
        // on at delta 0, off after 240 ticks, end of track
        assert_eq!(tail, &[0x00, 0x90, 60, 80, 0x81, 0x70, 0x80, 60, 0, 0x00, 0xff, 0x2f, 0x00][..]);
        let parsed = import_midi(&bytes).unwrap();
        assert_eq!(parsed.tracks[0].notes, vec![Note { start: 0, pitch: 60, length: 2 }]);
        assert_eq!(parsed.tempo_bpm, Some(120.0));
    }

    #[test]
    fn silent_track_has_only_meta() {
        let t = MidiTrack::from_melody("rest", 2, 64, &melody(vec![R, R, R]));
        let bytes = write_smf(&[t], 90.0, Meter::COMMON).unwrap();
        let smf = Smf::parse(&bytes).unwrap();
        assert!(smf.tracks[0]
            .iter()
            .all(|e| matches!(e.kind, TrackEventKind::Meta(_))));
    }

    #[test]
    fn arrangement_round_trip() {
        let lead = melody(vec![P(67), S, P(69), R, P(72), S, S, S]);
        let left = melody(vec![P(36), P(43), P(40), P(43), P(36), P(43), P(40), P(43)]);
        let mut rh = PolyTrack::from_melody(&melody(vec![P(64), S, S, S, P(65), S, P(67), S]))
            .steps()
            .to_vec();
        rh[0].insert(60, crate::integration::NoteState::Onset);
        rh[1].insert(60, crate::integration::NoteState::Sustain);
        let arr = Arrangement {
            lead: lead.clone(),
            right_hand: PolyTrack::new(rh, Meter::COMMON).unwrap(),
            left_hand: left.clone(),
            chords: vec![Chord::parse("C:maj", 8).unwrap()],
            meter: Meter::COMMON,
        };
        let bytes = arrangement_to_smf(&arr, DEFAULT_TEMPO_BPM).unwrap();
        let back = import_midi(&bytes).unwrap();
        assert_eq!(back.tracks.len(), 3);
        assert_eq!(back.tracks[0].notes, melody_notes(&lead));
        assert_eq!(back.tracks[1].notes, arr.right_hand.notes());
        assert_eq!(back.tracks[2].notes, melody_notes(&left));
        assert_eq!(notes_to_melody(&back.tracks[0].notes, Some(8), Meter::COMMON).unwrap(), lead);
        assert_eq!(back.beats_per_bar, Some(4));
    }

    #[test]
    fn bad_input() {
        assert!(matches!(import_midi(b"nope"), Err(MidiError::Parse(_))));
        assert!(matches!(write_smf(&[], 0.0, Meter::COMMON), Err(MidiError::BadTempo(_))));
        assert!(matches!(notes_to_melody(&[], None, Meter::COMMON), Err(MidiError::Empty)));
    }
}

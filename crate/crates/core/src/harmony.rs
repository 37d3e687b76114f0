//! Decoration HMM: re-decorates a chord progression.
//!
//! Hidden states are the `(add, omit)` decoration tuples seen in training.
//! Each chord emits three observed factors given its decoration: the chord
//! type, a bucketed duration, and the joint pair of root intervals to its
//! neighbours. Decoding returns the exact N best state paths, which are then
//! re-ranked by a style score that trades likelihood against how much the
//! input chords change.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chord::{ChangeWeights, Chord, ChordError, ChordType, Decorations, PitchClass};

/// Duration buckets in sixteenths: 1-2, 3-4, 5-8, 9-16, >16.
pub const DURATION_BUCKETS: usize = 5;
/// Folded intervals -5..=6 plus the boundary symbol.
pub const INTERVAL_SYMBOLS: usize = 13;
pub const CONNECTION_SYMBOLS: usize = INTERVAL_SYMBOLS * INTERVAL_SYMBOLS;

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarmonyError {
    #[error("progression is empty")]
    EmptyProgression,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("observation sequence is empty")]
    EmptyObservation,
    #[error("smoothing alpha must be positive and finite")]
    BadAlpha,
    #[error("n must be at least 1")]
    ZeroN,
    #[error("unknown decoration state {0}")]
    UnknownState(String),
    #[error("length mismatch: {0} chords vs {1} decorations")]
    LengthMismatch(usize, usize),
    #[error("invalid model table: {0}")]
    InvalidTable(String),
    #[error("no decoded candidate yields valid chords")]
    NoValidCandidate,
    #[error(transparent)]
    Chord(#[from] ChordError),
}

pub type Result<T, E = HarmonyError> = std::result::Result<T, E>;

/// Signed pitch-class difference folded to -5..=6 (a tritone folds to +6).
pub fn fold_interval(diff: i32) -> i8 {
    let d = diff.rem_euclid(12);
    if d > 6 {
        (d - 12) as i8
    } else {
        d as i8
    }
}

pub fn duration_bucket(steps: u32) -> usize {
    match steps {
        0..=2 => 0,
        3..=4 => 1,
        5..=8 => 2,
        9..=16 => 3,
        _ => 4,
    }
}

fn interval_symbol(interval: Option<i8>) -> usize {
    match interval {
        None => 0,
        Some(i) => (i as i32 + 6) as usize,
    }
}

/// What the HMM sees of one chord.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChordObservation {
    pub root: PitchClass,
    pub chord_type: ChordType,
    pub duration: u32,
    pub prev_root_interval: Option<i8>,
    pub next_root_interval: Option<i8>,
}

impl ChordObservation {
    pub fn duration_bucket(&self) -> usize {
        duration_bucket(self.duration)
    }

    /// Joint index of the (previous, next) interval pair.
    pub fn connection_symbol(&self) -> usize {
        interval_symbol(self.prev_root_interval) * INTERVAL_SYMBOLS
            + interval_symbol(self.next_root_interval)
    }
}

/// Observations and decoration states of a progression.
pub fn extract_observation_sequence(
    progression: &[Chord],
) -> Result<(Vec<ChordObservation>, Vec<Decorations>)> {
    if progression.is_empty() {
        return Err(HarmonyError::EmptyProgression);
    }
    let interval = |a: &Chord, b: &Chord| fold_interval(b.root().value() as i32 - a.root().value() as i32);
    let obs = progression
        .iter()
        .enumerate()
        .map(|(i, c)| ChordObservation {
            root: c.root(),
            chord_type: c.chord_type(),
            duration: c.duration(),
            prev_root_interval: (i > 0).then(|| interval(&progression[i - 1], c)),
            next_root_interval: progression.get(i + 1).map(|next| interval(c, next)),
        })
        .collect();
    let states = progression.iter().map(|c| c.decorations().clone()).collect();
    Ok((obs, states))
}

/// A decoration tuple and its index in a trained inventory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecorationState {
    pub id: usize,
    pub deco: Decorations,
}

/// One decoded path with its total log score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredPath {
    pub states: Vec<usize>,
    pub log_score: f64,
}

/// Trained decoration HMM. All tables hold probabilities; rows sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HmmTables", into = "HmmTables")]
pub struct DecorationHmm {
    states: Vec<Decorations>,
    index: BTreeMap<Decorations, usize>,
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    emit_type: Vec<Vec<f64>>,
    emit_duration: Vec<Vec<f64>>,
    emit_connection: Vec<Vec<f64>>,
    smoothing_alpha: f64,
}

impl crate::persist::Persist for DecorationHmm {
    const FORMAT: &'static str = "decoration-hmm";
}

/// Serialized layout of [`DecorationHmm`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HmmTables {
    pub states: Vec<Decorations>,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emit_type: Vec<Vec<f64>>,
    pub emit_duration: Vec<Vec<f64>>,
    pub emit_connection: Vec<Vec<f64>>,
    pub smoothing_alpha: f64,
}

impl TryFrom<HmmTables> for DecorationHmm {
    type Error = HarmonyError;

    fn try_from(t: HmmTables) -> Result<Self> {
        DecorationHmm::from_tables(t)
    }
}

impl From<DecorationHmm> for HmmTables {
    fn from(m: DecorationHmm) -> Self {
        HmmTables {
            states: m.states,
            initial: m.initial,
            transition: m.transition,
            emit_type: m.emit_type,
            emit_duration: m.emit_duration,
            emit_connection: m.emit_connection,
            smoothing_alpha: m.smoothing_alpha,
        }
    }
}

fn check_row(name: &str, row: &[f64], width: usize) -> Result<()> {
    if row.len() != width {
        return Err(HarmonyError::InvalidTable(format!(
            "{name}: expected {width} columns, found {}",
            row.len()
        )));
    }
    if row.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(HarmonyError::InvalidTable(format!("{name}: non-positive entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(HarmonyError::InvalidTable(format!("{name}: row sums to {sum}")));
    }
    Ok(())
}

fn smoothed(counts: &[f64], alpha: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + alpha * counts.len() as f64;
    counts.iter().map(|c| (c + alpha) / total).collect()
}

impl DecorationHmm {
    /// Builds a model from explicit tables, validating every row.
    pub fn from_tables(t: HmmTables) -> Result<Self> {
        let s = t.states.len();
        if s == 0 {
            return Err(HarmonyError::InvalidTable("empty state inventory".into()));
        }
        let index: BTreeMap<Decorations, usize> =
            t.states.iter().cloned().enumerate().map(|(i, d)| (d, i)).collect();
        if index.len() != s {
            return Err(HarmonyError::InvalidTable("duplicate states".into()));
        }
        if !(t.smoothing_alpha > 0.0 && t.smoothing_alpha.is_finite()) {
            return Err(HarmonyError::BadAlpha);
        }
        check_row("initial", &t.initial, s)?;
        for (name, table, width) in [
            ("transition", &t.transition, s),
            ("emit_type", &t.emit_type, ChordType::ALL.len()),
            ("emit_duration", &t.emit_duration, DURATION_BUCKETS),
            ("emit_connection", &t.emit_connection, CONNECTION_SYMBOLS),
        ] {
            if table.len() != s {
                return Err(HarmonyError::InvalidTable(format!("{name}: expected {s} rows")));
            }
            for row in table {
                check_row(name, row, width)?;
            }
        }
        Ok(DecorationHmm {
            states: t.states,
            index,
            initial: t.initial,
            transition: t.transition,
            emit_type: t.emit_type,
            emit_duration: t.emit_duration,
            emit_connection: t.emit_connection,
            smoothing_alpha: t.smoothing_alpha,
        })
    }

    /// Add-`alpha` smoothed relative frequencies over the corpus.
    pub fn train(corpus: &[Vec<Chord>], alpha: f64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(HarmonyError::EmptyCorpus);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(HarmonyError::BadAlpha);
        }
        let sequences = corpus
            .iter()
            .map(|p| extract_observation_sequence(p))
            .collect::<Result<Vec<_>>>()?;

        let mut inventory: BTreeSet<Decorations> = BTreeSet::new();
        inventory.insert(Decorations::new());
        for (_, states) in &sequences {
            inventory.extend(states.iter().cloned());
        }
        // BTreeSet order puts the empty decoration first.
        let states: Vec<Decorations> = inventory.into_iter().collect();
        let index: BTreeMap<Decorations, usize> =
            states.iter().cloned().enumerate().map(|(i, d)| (d, i)).collect();
        let s = states.len();

        let mut initial = vec![0.0; s];
        let mut transition = vec![vec![0.0; s]; s];
        let mut emit_type = vec![vec![0.0; ChordType::ALL.len()]; s];
        let mut emit_duration = vec![vec![0.0; DURATION_BUCKETS]; s];
        let mut emit_connection = vec![vec![0.0; CONNECTION_SYMBOLS]; s];

        for (obs, decos) in &sequences {
            let ids: Vec<usize> = decos.iter().map(|d| index[d]).collect();
            initial[ids[0]] += 1.0;
            for pair in ids.windows(2) {
                transition[pair[0]][pair[1]] += 1.0;
            }
            for (o, &id) in obs.iter().zip(&ids) {
                emit_type[id][o.chord_type.index()] += 1.0;
                emit_duration[id][o.duration_bucket()] += 1.0;
                emit_connection[id][o.connection_symbol()] += 1.0;
            }
        }

        let smooth_all = |t: Vec<Vec<f64>>| t.iter().map(|r| smoothed(r, alpha)).collect::<Vec<_>>();
        Ok(DecorationHmm {
            index,
            initial: smoothed(&initial, alpha),
            transition: smooth_all(transition),
            emit_type: smooth_all(emit_type),
            emit_duration: smooth_all(emit_duration),
            emit_connection: smooth_all(emit_connection),
            smoothing_alpha: alpha,
            states,
        })
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> impl Iterator<Item = DecorationState> + '_ {
        self.states
            .iter()
            .enumerate()
            .map(|(id, d)| DecorationState { id, deco: d.clone() })
    }

    pub fn decorations(&self, id: usize) -> Option<&Decorations> {
        self.states.get(id)
    }

    pub fn state_id(&self, deco: &Decorations) -> Option<usize> {
        self.index.get(deco).copied()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn emit_type(&self) -> &[Vec<f64>] {
        &self.emit_type
    }

    pub fn emit_duration(&self) -> &[Vec<f64>] {
        &self.emit_duration
    }

    pub fn emit_connection(&self) -> &[Vec<f64>] {
        &self.emit_connection
    }

    pub fn smoothing_alpha(&self) -> f64 {
        self.smoothing_alpha
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.states.len() {
            return Err(HarmonyError::UnknownState(format!("#{state}")));
        }
        Ok(())
    }

    /// log p(type|d) + log p(duration bucket|d) + log p(connection|d)
    pub fn emission_log_prob(&self, obs: &ChordObservation, state: usize) -> Result<f64> {
        self.check_state(state)?;
        Ok(self.emission_unchecked(obs, state))
    }

    fn emission_unchecked(&self, obs: &ChordObservation, state: usize) -> f64 {
        self.emit_type[state][obs.chord_type.index()].ln()
            + self.emit_duration[state][obs.duration_bucket()].ln()
            + self.emit_connection[state][obs.connection_symbol()].ln()
    }

    /// Log joint probability of a state path and the observations.
    pub fn path_log_prob(&self, obs: &[ChordObservation], path: &[usize]) -> Result<f64> {
        if obs.len() != path.len() {
            return Err(HarmonyError::LengthMismatch(obs.len(), path.len()));
        }
        if obs.is_empty() {
            return Err(HarmonyError::EmptyObservation);
        }
        for &s in path {
            self.check_state(s)?;
        }
        let mut score = self.initial[path[0]].ln();
        for (t, (o, &s)) in obs.iter().zip(path).enumerate() {
            if t > 0 {
                score += self.transition[path[t - 1]][s].ln();
            }
            score += self.emission_unchecked(o, s);
        }
        Ok(score)
    }

    /// The `n` highest-scoring state paths, best first.
    pub fn viterbi_top_n(&self, obs: &[ChordObservation], n: usize) -> Result<Vec<ScoredPath>> {
        if obs.is_empty() {
            return Err(HarmonyError::EmptyObservation);
        }
        if n == 0 {
            return Err(HarmonyError::ZeroN);
        }
        let log_init: Vec<f64> = self.initial.iter().map(|p| p.ln()).collect();
        let log_trans: Vec<Vec<f64>> = self
            .transition
            .iter()
            .map(|r| r.iter().map(|p| p.ln()).collect())
            .collect();
        let log_emit: Vec<Vec<f64>> = obs
            .iter()
            .map(|o| (0..self.states.len()).map(|s| self.emission_unchecked(o, s)).collect())
            .collect();
        Ok(list_viterbi(&log_init, &log_trans, &log_emit, n))
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    score: f64,
    prev_state: usize,
    prev_rank: usize,
}

/// Exact N-best Viterbi. Each (step, state) keeps its `n` best partial paths;
/// every kept entry extends a distinct prefix, so final paths are distinct.
fn list_viterbi(
    log_init: &[f64],
    log_trans: &[Vec<f64>],
    log_emit: &[Vec<f64>],
    n: usize,
) -> Vec<ScoredPath> {
    let s = log_init.len();
    let len = log_emit.len();
    let mut lattice: Vec<Vec<Vec<Entry>>> = Vec::with_capacity(len);
    lattice.push(
        (0..s)
            .map(|j| {
                vec![Entry {
                    score: log_init[j] + log_emit[0][j],
                    prev_state: usize::MAX,
                    prev_rank: usize::MAX,
                }]
            })
            .collect(),
    );

    let by_score = |a: &Entry, b: &Entry| {
        b.score
            .total_cmp(&a.score)
            .then(a.prev_state.cmp(&b.prev_state))
            .then(a.prev_rank.cmp(&b.prev_rank))
    };

    for t in 1..len {
        let prev = &lattice[t - 1];
        let column: Vec<Vec<Entry>> = (0..s)
            .map(|j| {
                let mut cands: Vec<Entry> = Vec::new();
                for (i, entries) in prev.iter().enumerate() {
                    for (r, e) in entries.iter().enumerate() {
                        cands.push(Entry {
                            score: e.score + log_trans[i][j] + log_emit[t][j],
                            prev_state: i,
                            prev_rank: r,
                        });
                    }
                }
                cands.sort_by(by_score);
                cands.truncate(n);
                cands
            })
            .collect();
        lattice.push(column);
    }

    let mut finals: Vec<(usize, usize, f64)> = lattice[len - 1]
        .iter()
        .enumerate()
        .flat_map(|(j, entries)| entries.iter().enumerate().map(move |(r, e)| (j, r, e.score)))
        .collect();
    finals.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    finals.truncate(n);

    finals
        .into_iter()
        .map(|(mut state, mut rank, log_score)| {
            let mut states = vec![0; len];
            for t in (0..len).rev() {
                states[t] = state;
                let e = lattice[t][state][rank];
                state = e.prev_state;
                rank = e.prev_rank;
            }
            ScoredPath { states, log_score }
        })
        .collect()
}

/// Weights of the selection score used to pick among decoded paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleWeights {
    pub w_ll: f64,
    pub w_change: f64,
    pub w_rep: f64,
}

impl StyleWeights {
    pub const POP: StyleWeights = StyleWeights {
        w_ll: 1.0,
        w_change: 0.5,
        w_rep: 0.2,
    };
    pub const JAZZ: StyleWeights = StyleWeights {
        w_ll: 1.0,
        w_change: 0.1,
        w_rep: 0.3,
    };

    pub fn profile(name: &str) -> Option<StyleWeights> {
        match name {
            "pop" => Some(Self::POP),
            "jazz" => Some(Self::JAZZ),
            _ => None,
        }
    }
}

/// Higher is better: weighted likelihood minus change and repetition penalties.
pub fn style_fit_score(
    progression: &[Chord],
    decorated: &[Decorations],
    model: &DecorationHmm,
    weights: &StyleWeights,
    change: &ChangeWeights,
) -> Result<f64> {
    if progression.len() != decorated.len() {
        return Err(HarmonyError::LengthMismatch(progression.len(), decorated.len()));
    }
    let (obs, _) = extract_observation_sequence(progression)?;
    let path = decorated
        .iter()
        .map(|d| model.state_id(d).ok_or_else(|| HarmonyError::UnknownState(d.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let ll = model.path_log_prob(&obs, &path)?;
    Ok(score_path(progression, decorated, ll, weights, change))
}

fn score_path(
    progression: &[Chord],
    decorated: &[Decorations],
    log_likelihood: f64,
    weights: &StyleWeights,
    change: &ChangeWeights,
) -> f64 {
    let total_change: f64 = progression
        .iter()
        .zip(decorated)
        .map(|(c, d)| change.distance(c.decorations(), d))
        .sum();
    let repeats = decorated.windows(2).filter(|w| w[0] == w[1]).count() as f64;
    weights.w_ll * log_likelihood - weights.w_change * total_change - weights.w_rep * repeats
}

/// Result of re-decorating a progression.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoratedProgression {
    pub chords: Vec<Chord>,
    /// Rank of the chosen path in the Viterbi list (0 = most likely).
    pub rank: usize,
    pub style_score: f64,
    pub log_likelihood: f64,
    pub candidates: usize,
}

/// Decodes the top `n` decoration paths, re-scores them with the style
/// weights, and applies the winner to the input chords.
pub fn decorate_progression(
    model: &DecorationHmm,
    progression: &[Chord],
    n: usize,
    weights: &StyleWeights,
    change: &ChangeWeights,
) -> Result<DecoratedProgression> {
    let (obs, _) = extract_observation_sequence(progression)?;
    let paths = model.viterbi_top_n(&obs, n)?;
    let candidates = paths.len();
    let mut best: Option<DecoratedProgression> = None;
    for (rank, path) in paths.into_iter().enumerate() {
        let decos: Vec<Decorations> = path.states.iter().map(|&s| model.states[s].clone()).collect();
        let chords: std::result::Result<Vec<Chord>, ChordError> = progression
            .iter()
            .zip(&decos)
            .map(|(c, d)| c.with_decorations(d.clone()))
            .collect();
        let Ok(chords) = chords else {
            log::debug!("skipping path rank {rank}: decorations empty a chord");
            continue;
        };
        let score = score_path(progression, &decos, path.log_score, weights, change);
        if best.as_ref().is_none_or(|b| score > b.style_score) {
            best = Some(DecoratedProgression {
                chords,
                rank,
                style_score: score,
                log_likelihood: path.log_score,
                candidates,
            });
        }
    }
    best.ok_or(HarmonyError::NoValidCandidate)
}

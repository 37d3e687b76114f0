//! Chord-conditioned pop-song generation.

pub mod chord;
pub mod contour;
pub mod generators;
pub mod harmony;
pub mod integration;
pub mod midi;
pub mod persist;
pub mod pipeline;
pub mod progression;
pub mod quantize;
pub mod sarma;
pub mod seed;

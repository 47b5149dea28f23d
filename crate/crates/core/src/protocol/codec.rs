//! Clock-command codec: low-duty-cycle optical pulse words that tell the
//! receiver which phase of the sequence to run.
//!
//! Words are fixed-length binary symbol patterns (pulse / no-pulse) at a
//! 5 MHz slot rate, each preceded by a framing trigger pulse. The dominant
//! channel failure is pulse loss (a pulse arriving as no-pulse), so the
//! codebook enforces two properties:
//!
//! 1. pairwise Hamming distance >= 2, and
//! 2. disjoint single-deletion neighbourhoods, so a word with one lost pulse
//!    is always either uniquely recovered or flagged as an erasure, never
//!    silently decoded as a different command.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slot period of the command symbols (5 MHz repetition rate).
pub const CLOCK_SLOT_PERIOD_S: f64 = 200e-9;
/// Optical pulse duration inside one slot.
pub const CLOCK_PULSE_DURATION_S: f64 = 100e-9;

/// What a decoded clock word instructs the receiver to do.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommandMeaning {
    DataTransmission,
    PolarizationReference,
    TdiReference,
    Idle,
}

impl CommandMeaning {
    pub const ALL: [CommandMeaning; 4] = [
        CommandMeaning::DataTransmission,
        CommandMeaning::PolarizationReference,
        CommandMeaning::TdiReference,
        CommandMeaning::Idle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CommandMeaning::DataTransmission => "data",
            CommandMeaning::PolarizationReference => "polarization-reference",
            CommandMeaning::TdiReference => "tdi-reference",
            CommandMeaning::Idle => "idle",
        }
    }
}

/// One fixed-length clock command word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClockCommandWord {
    bits: u64,
    length: usize,
    pub meaning: CommandMeaning,
}

impl ClockCommandWord {
    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn length(&self) -> usize {
        self.length
    }

    /// Symbols in transmission order; index 0 is sent first.
    pub fn symbols(&self) -> Vec<bool> {
        (0..self.length)
            .map(|i| self.bits >> (self.length - 1 - i) & 1 == 1)
            .collect()
    }

    pub fn pulse_count(&self) -> u32 {
        self.bits.count_ones()
    }

    /// All words reachable by losing exactly one pulse.
    pub fn single_deletions(&self) -> Vec<u64> {
        (0..self.length)
            .filter(|&i| self.bits >> i & 1 == 1)
            .map(|i| self.bits & !(1u64 << i))
            .collect()
    }
}

pub fn hamming_distance(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

/// A complete codebook sharing one word length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Codebook {
    words: Vec<ClockCommandWord>,
    word_length: usize,
}

/// Decode outcome of a received symbol pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decoded {
    /// The pattern matched a codeword exactly.
    Exact(CommandMeaning),
    /// The pattern matched no codeword, but exactly one codeword reaches it
    /// by losing a single pulse.
    Recovered(CommandMeaning),
    /// No codeword or more than one candidate; the word is discarded.
    Erasure,
}

impl Decoded {
    pub fn meaning(&self) -> Option<CommandMeaning> {
        match self {
            Decoded::Exact(m) | Decoded::Recovered(m) => Some(*m),
            Decoded::Erasure => None,
        }
    }
}

/// Builds a codebook by deterministic lexicographic greedy search.
///
/// Candidates are scanned in ascending numeric order (first symbol most
/// significant) and accepted when they keep pairwise Hamming distance >= 2
/// and pairwise-disjoint single-deletion neighbourhoods. Meanings are
/// assigned in [`CommandMeaning::ALL`] order; words past the fourth reuse
/// `Idle`.
pub fn build_codebook(n_words: usize, word_length: usize) -> Result<Codebook> {
    if word_length == 0 || word_length > 24 {
        return Err(Error::CapacityExceeded(format!(
            "word length {word_length} outside supported range 1..=24"
        )));
    }
    let mut accepted: Vec<u64> = Vec::with_capacity(n_words);
    let mut deletion_sets: Vec<Vec<u64>> = Vec::with_capacity(n_words);
    for candidate in 0..(1u64 << word_length) {
        if accepted.len() == n_words {
            break;
        }
        let cand_deletions: Vec<u64> = (0..word_length)
            .filter(|&i| candidate >> i & 1 == 1)
            .map(|i| candidate & !(1u64 << i))
            .collect();
        let compatible = accepted.iter().zip(&deletion_sets).all(|(&w, dels)| {
            hamming_distance(w, candidate) >= 2
                && !dels.iter().any(|d| cand_deletions.contains(d))
        });
        if compatible {
            accepted.push(candidate);
            deletion_sets.push(cand_deletions);
        }
    }
    if accepted.len() < n_words {
        return Err(Error::CapacityExceeded(format!(
            "only {} of {n_words} requested words fit in {word_length} symbols",
            accepted.len()
        )));
    }
    let words = accepted
        .into_iter()
        .enumerate()
        .map(|(i, bits)| ClockCommandWord {
            bits,
            length: word_length,
            meaning: CommandMeaning::ALL[i.min(CommandMeaning::ALL.len() - 1)],
        })
        .collect();
    Ok(Codebook {
        words,
        word_length,
    })
}

impl Codebook {
    /// The shipped session codebook: four commands in eight symbols.
    pub fn default_session() -> Codebook {
        build_codebook(4, 8).expect("4 words fit in 8 symbols")
    }

    pub fn words(&self) -> &[ClockCommandWord] {
        &self.words
    }

    pub fn word_length(&self) -> usize {
        self.word_length
    }

    pub fn word_for(&self, meaning: CommandMeaning) -> Option<&ClockCommandWord> {
        self.words.iter().find(|w| w.meaning == meaning)
    }

    fn bits_of(&self, received: &[bool]) -> Result<u64> {
        if received.len() != self.word_length {
            return Err(Error::LengthMismatch {
                expected: self.word_length,
                got: received.len(),
            });
        }
        Ok(received
            .iter()
            .fold(0u64, |acc, &b| (acc << 1) | u64::from(b)))
    }

    /// Decodes a received pattern: exact match, unique single-loss recovery,
    /// or erasure.
    pub fn decode(&self, received: &[bool]) -> Result<Decoded> {
        let bits = self.bits_of(received)?;
        if let Some(word) = self.words.iter().find(|w| w.bits == bits) {
            return Ok(Decoded::Exact(word.meaning));
        }
        let mut candidates = self
            .words
            .iter()
            .filter(|w| w.bits & !bits == (w.bits ^ bits) && (w.bits ^ bits).count_ones() == 1);
        match (candidates.next(), candidates.next()) {
            (Some(word), None) => Ok(Decoded::Recovered(word.meaning)),
            _ => Ok(Decoded::Erasure),
        }
    }
}

/// Free-function form of [`Codebook::decode`].
pub fn decode_command(received: &[bool], codebook: &Codebook) -> Result<Decoded> {
    codebook.decode(received)
}

//! One-round radio channel semantics.
//!
//! Every node either transmits a message or listens. A listener receives a
//! message iff exactly one of its neighbors transmits; zero or two-plus
//! transmitting neighbors are indistinguishable and both yield silence (`⊥`).
//! The channel is half-duplex: a transmitting node always receives silence.
//! There is no collision detection of any kind.

use crate::graph::StaticGraph;

/// Identifier of a broadcast payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageId(pub u32);

/// A node's choice for one round. Only nodes that already hold the message
/// may transmit; the broadcast runner enforces this before reaching the
/// channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Transmit(MessageId),
    Listen,
}

impl Decision {
    pub fn is_transmit(&self) -> bool {
        matches!(self, Decision::Transmit(_))
    }
}

/// What one node hears in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    /// Exactly one neighbor transmitted; the payload and its sender.
    Message { payload: MessageId, sender: u32 },
    /// Silence: no transmitting neighbor, a collision, or own transmission.
    Bottom,
}

/// Resolves one round of the radio channel.
///
/// A listening node `v` receives `Message(m, u)` iff `u` is its unique
/// transmitting neighbor; otherwise it receives [`Reception::Bottom`].
/// Transmitters receive `Bottom` unconditionally.
pub fn resolve_round(g: &StaticGraph, decisions: &[Decision]) -> Vec<Reception> {
    assert_eq!(decisions.len(), g.n(), "one decision per node");
    let words = g.word_count();
    let mut tx_mask = vec![0u64; words];
    for (v, d) in decisions.iter().enumerate() {
        if d.is_transmit() {
            tx_mask[v / 64] |= 1 << (v % 64);
        }
    }
    (0..g.n() as u32)
        .map(|v| {
            if decisions[v as usize].is_transmit() {
                return Reception::Bottom;
            }
            let row = g.row(v);
            let mut transmitting_neighbors =
                row.iter().zip(&tx_mask).map(|(r, t)| r & t).enumerate().filter(|(_, w)| *w != 0);
            match (transmitting_neighbors.next(), transmitting_neighbors.next()) {
                (Some((word, bits)), None) if bits.count_ones() == 1 => {
                    let sender = word as u32 * 64 + bits.trailing_zeros();
                    match decisions[sender as usize] {
                        Decision::Transmit(payload) => Reception::Message { payload, sender },
                        Decision::Listen => unreachable!("sender taken from transmit mask"),
                    }
                }
                _ => Reception::Bottom,
            }
        })
        .collect()
}

/// The round's sole transmitter, if exactly one node in the whole network
/// transmits. The notion is global: a lone transmitter reaches every
/// listening neighbor, and no other node hears anything but silence.
pub fn is_isolated(g: &StaticGraph, decisions: &[Decision]) -> Option<u32> {
    assert_eq!(decisions.len(), g.n(), "one decision per node");
    let mut transmitters = decisions.iter().enumerate().filter(|(_, d)| d.is_transmit());
    match (transmitters.next(), transmitters.next()) {
        (Some((v, _)), None) => Some(v as u32),
        _ => None,
    }
}

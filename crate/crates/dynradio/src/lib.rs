//! Deterministic simulator for single-message broadcast in dynamic radio
//! networks under adversarial topology control.
//!
//! The model: `n` nodes communicate in synchronous rounds over a graph that
//! an adversary re-chooses every round, subject to an interval-connectivity
//! guarantee. A listening node receives a message only when exactly one of
//! its neighbors transmits; collisions are indistinguishable from silence.
//! The crate provides:
//!
//! - [`graph`]: bit-matrix graphs, dynamic traces, vertex connectivity via
//!   max-flow, interval-connectivity certification, and the clique blow-up.
//! - [`radio`]: the collision-channel semantics for one round.
//! - [`protocol`]: the phased randomized broadcast protocol (uniform first
//!   half, harmonic-decay second half) and the instrumented trial runner.
//! - [`adversary`]: static, random-churn, permanently-dark-set, and
//!   hitting-game-reduction adversaries behind one trait with an explicit
//!   information barrier.
//! - [`hitting_game`]: the periodic hitting game, its referee, and players.
//! - [`experiments`]: TOML-configured batches, CSV aggregation, scaling
//!   sweeps, and the isolation Monte Carlo.
//! - [`rng`]: counter-based per-(node, round) randomness with draw
//!   overrides for replay experiments, plus seed-derivation helpers.
//!
//! Every run is a pure function of its parameters and seed; see the module
//! docs for the determinism and replay guarantees.

pub mod adversary;
pub mod experiments;
pub mod graph;
pub mod hitting_game;
pub mod protocol;
pub mod radio;
pub mod rng;

pub use adversary::{
    make_impossibility_adversary, make_random_churn_adversary, make_reduction_adversary, Adversary,
    AdversaryError, AdversaryView, HaltReason, RandomDisclosure, StaticAdversary,
};
pub use graph::{
    brute_force_connectivity, clique_blowup, has_connectivity_at_least, intersection_graph,
    is_interval_k_connected, vertex_connectivity, ConnectivityReport, DynamicTrace, GraphError,
    StaticGraph,
};
pub use hitting_game::{
    informed_player, play_game, referee_step, uniform_player, GameError, GameOutcome, GameParams,
    GameState, Player, WinCause,
};
pub use protocol::{
    run_broadcast, run_broadcast_with, Outcome, ProtocolError, ProtocolParams, RunOptions, Tau,
    TrialRecord,
};
pub use radio::{is_isolated, resolve_round, Decision, MessageId, Reception};

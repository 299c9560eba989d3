//! Phased randomized broadcast over an adversarial dynamic radio network.
//!
//! Round 1 is deterministic: the source transmits alone. From then on a phase
//! clock `t = round − 1` drives phases of `ψ` rounds each. In the first half
//! of a phase every informed node transmits with probability `1/n`; in the
//! second half only nodes informed during the current phase transmit, with a
//! harmonically decaying probability `1/(1 + ⌊(t − t̂_v − 1)/𝒯⌋)` that starts
//! at 1 and halves its rank every `𝒯` rounds. Uninformed nodes are always
//! silent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{Adversary, AdversaryView, HaltReason, RandomDisclosure};
use crate::graph::{DynamicTrace, StaticGraph};
use crate::radio::{is_isolated, resolve_round, Decision, MessageId, Reception};
use crate::rng::NodeRandomness;

/// The single payload every broadcast run distributes.
pub const BROADCAST_MESSAGE: MessageId = MessageId(0);

/// Adversary obliviousness: how far in the past the node randomness visible
/// to the adversary ends. `Finite(τ)` reveals draws up to round `r − τ` when
/// scheduling round `r`; `Unbounded` reveals nothing (a fully oblivious
/// adversary).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tau {
    Finite(u64),
    Unbounded,
}

impl Tau {
    /// Latest round whose node randomness is visible when scheduling `round`.
    pub fn disclosure_cutoff(self, round: u64) -> u64 {
        match self {
            Tau::Finite(tau) => round.saturating_sub(tau),
            Tau::Unbounded => 0,
        }
    }
}

impl std::fmt::Display for Tau {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tau::Finite(t) => write!(f, "{t}"),
            Tau::Unbounded => write!(f, "unbounded"),
        }
    }
}

/// Errors from parameter validation and broadcast execution.
#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("broadcast needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("connectivity parameter k={k} must satisfy 1 ≤ k ≤ n−1 = {max}")]
    BadK { k: usize, max: usize },
    #[error("source node {node} out of range for n={n}")]
    SourceOutOfRange { node: u32, n: usize },
    #[error("tau must be at least 1; a 0-oblivious adversary sees current coin flips")]
    ZeroTau,
    #[error("interval-connectivity window T must be at least 1")]
    ZeroWindow,
    #[error("epsilon must lie strictly between 0 and 1, got {0}")]
    BadEpsilon(f64),
    #[error("decay step {given} is below the isolation requirement ⌈12·ln(n/ε)⌉ = {minimum}")]
    ScriptTTooSmall { given: u64, minimum: u64 },
    #[error("adversary emitted a graph on {actual} nodes at round {round}, expected {expected}")]
    AdversaryNodeCount { round: u64, expected: usize, actual: usize },
}

/// Phase length `ψ = min{τ, T, ⌊n/2k⌋}`, clamped below at 1 so that small
/// instances stay runnable.
pub fn compute_psi(tau: Tau, t_window: u64, n: usize, k: usize) -> u64 {
    assert!(t_window >= 1 && n >= 1 && k >= 1, "compute_psi arguments must be ≥ 1");
    let budget = (n / (2 * k)) as u64;
    let base = t_window.min(budget);
    match tau {
        Tau::Finite(tau) => {
            assert!(tau >= 1, "compute_psi arguments must be ≥ 1");
            tau.min(base)
        }
        Tau::Unbounded => base,
    }
    .max(1)
}

/// Which half of its phase a round belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    First,
    Second,
}

/// Phase index `j = ⌈t/ψ⌉` and half of phase-clock time `t ≥ 1`. Phase `j`
/// consists of rounds `(j−1)ψ+1 .. jψ`; the first half is the leading
/// `⌈ψ/2⌉` of them.
pub fn phase_of(t: u64, psi: u64) -> (u64, Half) {
    assert!(t >= 1 && psi >= 1, "phase clock starts at 1");
    let j = t.div_ceil(psi);
    let offset = t - (j - 1) * psi;
    let half = if offset <= psi.div_ceil(2) { Half::First } else { Half::Second };
    (j, half)
}

/// Validated broadcast parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Node count.
    pub n: usize,
    /// Vertex connectivity the adversary is assumed to maintain.
    pub k: usize,
    /// Adversary obliviousness.
    pub tau: Tau,
    /// Interval-connectivity window length.
    pub t_window: u64,
    /// Phase length `ψ = min{τ, T, ⌊n/2k⌋}`, clamped to ≥ 1.
    pub psi: u64,
    /// Decay step `𝒯 ≥ ⌈12·ln(n/ε)⌉`.
    pub script_t: u64,
    /// Per-run isolation-failure budget ε.
    pub epsilon: f64,
    /// The node that initially holds the message.
    pub source: u32,
}

impl ProtocolParams {
    /// Parameters with the default budget `ε = 1/n`, hence `𝒯 = ⌈24·ln n⌉`.
    pub fn new(
        n: usize,
        k: usize,
        tau: Tau,
        t_window: u64,
        source: u32,
    ) -> Result<Self, ProtocolError> {
        Self::with_epsilon(n, k, tau, t_window, source, 1.0 / n as f64)
    }

    /// Parameters with an explicit isolation budget ε.
    pub fn with_epsilon(
        n: usize,
        k: usize,
        tau: Tau,
        t_window: u64,
        source: u32,
        epsilon: f64,
    ) -> Result<Self, ProtocolError> {
        if n < 2 {
            return Err(ProtocolError::TooFewNodes(n));
        }
        if k == 0 || k > n - 1 {
            return Err(ProtocolError::BadK { k, max: n - 1 });
        }
        if source as usize >= n {
            return Err(ProtocolError::SourceOutOfRange { node: source, n });
        }
        if matches!(tau, Tau::Finite(0)) {
            return Err(ProtocolError::ZeroTau);
        }
        if t_window == 0 {
            return Err(ProtocolError::ZeroWindow);
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(ProtocolError::BadEpsilon(epsilon));
        }
        let psi = compute_psi(tau, t_window, n, k);
        let cube = (n as f64).ln().powi(3);
        if (psi as f64) < cube {
            log::warn!(
                "phase length ψ={psi} is below ln³n ≈ {cube:.1}; \
                 the isolation guarantees degrade on instances this small"
            );
        }
        Ok(Self {
            n,
            k,
            tau,
            t_window,
            psi,
            script_t: Self::min_script_t(n, epsilon),
            epsilon,
            source,
        })
    }

    /// Smallest admissible decay step for the given budget: `⌈12·ln(n/ε)⌉`.
    pub fn min_script_t(n: usize, epsilon: f64) -> u64 {
        (12.0 * (n as f64 / epsilon).ln()).ceil() as u64
    }

    /// Replaces the decay step, keeping the isolation precondition intact.
    pub fn with_script_t(mut self, script_t: u64) -> Result<Self, ProtocolError> {
        let minimum = Self::min_script_t(self.n, self.epsilon);
        if script_t < minimum {
            return Err(ProtocolError::ScriptTTooSmall { given: script_t, minimum });
        }
        self.script_t = script_t;
        Ok(self)
    }
}

/// Per-node protocol state.
///
/// `t_v` is the phase-clock time at which the node first received the
/// message (0 for the source and the deterministic round-1 recipients).
/// A node is `NewlyInformed` while the phase in which it was informed is
/// still running, then `PreviouslyInformed` forever after.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeState {
    Uninformed,
    NewlyInformed { t_v: u64 },
    PreviouslyInformed { t_v: u64 },
}

impl NodeState {
    pub fn is_informed(&self) -> bool {
        !matches!(self, NodeState::Uninformed)
    }

    /// Phase-clock time the message arrived, if it has.
    pub fn t_v(&self) -> Option<u64> {
        match self {
            NodeState::Uninformed => None,
            NodeState::NewlyInformed { t_v } | NodeState::PreviouslyInformed { t_v } => Some(*t_v),
        }
    }

    /// Effective staircase start `t̂_v` when evaluated at time `t`: a node
    /// informed during the first half of the current phase starts at the
    /// half boundary, any other informed node starts at its own `t_v`.
    pub fn t_hat(&self, t: u64, psi: u64) -> Option<u64> {
        assert!(t >= 1, "phase clock starts at 1");
        let t_v = self.t_v()?;
        if let NodeState::NewlyInformed { .. } = self {
            let phase_start = (t.div_ceil(psi) - 1) * psi; // exclusive
            let half_boundary = phase_start + psi.div_ceil(2);
            if t_v > phase_start && t_v <= half_boundary {
                return Some(half_boundary);
            }
        }
        Some(t_v)
    }
}

/// Transmission probability of one node at phase-clock time `t`.
///
/// Uninformed nodes are silent. In the first half of a phase every informed
/// node transmits with probability `1/n`. In the second half previously
/// informed nodes are silent and newly informed nodes follow the harmonic
/// staircase `1/(1 + ⌊(t − t̂_v − 1)/𝒯⌋)`.
pub fn transmit_probability(state: &NodeState, t: u64, params: &ProtocolParams) -> f64 {
    let (_, half) = phase_of(t, params.psi);
    match (state, half) {
        (NodeState::Uninformed, _) => 0.0,
        (_, Half::First) => 1.0 / params.n as f64,
        (NodeState::PreviouslyInformed { .. }, Half::Second) => 0.0,
        (NodeState::NewlyInformed { .. }, Half::Second) => {
            let t_hat = state.t_hat(t, params.psi).expect("newly informed node has t_v");
            assert!(
                t > t_hat,
                "newly informed node scheduled before its effective start \
                 (t={t}, t̂_v={t_hat}): phase bookkeeping bug"
            );
            1.0 / (1 + (t - t_hat - 1) / params.script_t) as f64
        }
    }
}

/// Busy/free status of one round: busy iff the probability mass `P(t) ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundClass {
    Busy,
    Free,
}

/// Everything recorded about one executed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    /// Global round index (round 1 is the deterministic source round).
    pub round: u64,
    /// Probability mass `P(t) = Σ_v p_v(t)` of this round.
    pub p_t: f64,
    pub classification: RoundClass,
    /// The network-wide sole transmitter, if there was exactly one.
    pub isolated_node: Option<u32>,
    /// State census at the start of the round (after phase promotions).
    pub newly_informed_count: usize,
    pub previously_informed_count: usize,
    pub uninformed_count: usize,
}

/// How a broadcast run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    /// Every node was informed after this round.
    Completed { round: u64 },
    /// The round budget ran out with nodes still uninformed.
    NotCompleted { max_rounds: u64, uninformed: usize },
    /// The adversary asked to stop (its declared objective was decided).
    Halted { round: u64, reason: HaltReason },
}

impl Outcome {
    pub fn is_completed(&self) -> bool {
        matches!(self, Outcome::Completed { .. })
    }

    /// Completion round, if the broadcast finished.
    pub fn completion_round(&self) -> Option<u64> {
        match self {
            Outcome::Completed { round } => Some(*round),
            _ => None,
        }
    }
}

/// Full record of one broadcast trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub params: ProtocolParams,
    /// Label of the adversary that scheduled the graphs.
    pub adversary: String,
    pub seed: u64,
    pub outcome: Outcome,
    /// Per-node phase-clock arrival times (`None` = never informed).
    pub inform_times: Vec<Option<u64>>,
    /// Per-round diagnostics (empty if recording was disabled).
    pub diagnostics: Vec<RoundDiagnostics>,
    /// Transmitter lists per round, when requested.
    pub transmitters: Option<Vec<Vec<u32>>>,
    /// The emitted dynamic graph sequence, when requested.
    pub trace: Option<DynamicTrace>,
    /// Whether the adversary flagged the execution as outside its good-case
    /// assumptions (e.g. an improbable transmitter burst).
    pub bad_execution: bool,
}

impl TrialRecord {
    /// Serializes the record as one JSON document.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("trial record serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Writes the per-round diagnostics as flat CSV.
    pub fn write_diagnostics_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            round: u64,
            p_t: f64,
            busy: bool,
            isolated_node: Option<u32>,
            newly_informed: usize,
            previously_informed: usize,
            uninformed: usize,
            adversary: &'a str,
        }
        let mut w = csv::Writer::from_writer(out);
        for d in &self.diagnostics {
            w.serialize(Row {
                round: d.round,
                p_t: d.p_t,
                busy: d.classification == RoundClass::Busy,
                isolated_node: d.isolated_node,
                newly_informed: d.newly_informed_count,
                previously_informed: d.previously_informed_count,
                uninformed: d.uninformed_count,
                adversary: &self.adversary,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Optional recording / replay knobs for a broadcast run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep the emitted graph of every round in the record.
    pub record_trace: bool,
    /// Keep the transmitter list of every round in the record.
    pub record_transmitters: bool,
    /// Skip per-round diagnostics (for very long bulk runs).
    pub skip_diagnostics: bool,
    /// Pin individual node draws to fixed values: `(node, round, raw draw)`.
    /// Used by replay experiments probing the information barrier.
    pub draw_overrides: Vec<(u32, u64, u64)>,
}

/// Runs one broadcast trial with default recording (diagnostics only).
pub fn run_broadcast(
    adversary: &mut dyn Adversary,
    params: &ProtocolParams,
    seed: u64,
    max_rounds: u64,
) -> Result<TrialRecord, ProtocolError> {
    run_broadcast_with(adversary, params, seed, max_rounds, RunOptions::default())
}

/// Runs one broadcast trial.
///
/// Round 1: the source transmits deterministically. Rounds `r ≥ 2` follow the
/// phased protocol on the clock `t = r − 1`. Each round the adversary first
/// sees its τ-limited view (never the current round's coin flips for τ ≥ 1),
/// then commits the round's graph, and only then does the channel resolve.
/// The run is a pure function of `(params, adversary, seed)`.
pub fn run_broadcast_with(
    adversary: &mut dyn Adversary,
    params: &ProtocolParams,
    seed: u64,
    max_rounds: u64,
    opts: RunOptions,
) -> Result<TrialRecord, ProtocolError> {
    assert!(max_rounds >= 1, "need at least one round");
    let n = params.n;
    let mut draws = NodeRandomness::new(seed);
    for &(node, round, value) in &opts.draw_overrides {
        draws.override_draw(node, round, value);
    }
    adversary.begin(seed);
    let tau = adversary.declared_tau();
    let sees_previous_round = matches!(tau, Tau::Finite(t) if t <= 1);
    let sees_current_round = matches!(tau, Tau::Finite(0));

    let mut states = vec![NodeState::Uninformed; n];
    states[params.source as usize] = NodeState::PreviouslyInformed { t_v: 0 };
    let mut uninformed = n - 1;

    let mut diagnostics = Vec::new();
    let mut transmitters = opts.record_transmitters.then(Vec::new);
    let mut trace = opts.record_trace.then(|| DynamicTrace::new(n));
    let mut prev_decisions: Option<Vec<Decision>> = None;
    let mut probs = vec![0.0f64; n];
    let mut outcome = None;

    // Per-phase accounting for the probability-mass bound: the second-half
    // mass of any phase is at most κ·𝒯·(ln⌈ψ/(2𝒯)⌉ + 1), where κ counts the
    // nodes informed during that phase.
    let mut half_mass = 0.0f64;
    let mut phase_newly = 0usize;
    let ceil_psi_2t = params.psi.div_ceil(2 * params.script_t).max(1);
    let mass_bound_per_node = params.script_t as f64 * ((ceil_psi_2t as f64).ln() + 1.0);

    for r in 1..=max_rounds {
        let t = r - 1; // phase clock
        let mut half = Half::First;
        if r >= 2 {
            if (t - 1) % params.psi == 0 {
                // Phase boundary: whoever was newly informed has now seen its
                // phase end and goes into the long-lived informed pool.
                for s in states.iter_mut() {
                    if let NodeState::NewlyInformed { t_v } = *s {
                        *s = NodeState::PreviouslyInformed { t_v };
                    }
                }
            }
            half = phase_of(t, params.psi).1;
        }

        let mut newly = 0;
        let mut previously = 0;
        for s in &states {
            match s {
                NodeState::NewlyInformed { .. } => newly += 1,
                NodeState::PreviouslyInformed { .. } => previously += 1,
                NodeState::Uninformed => {}
            }
        }

        let decisions: Vec<Decision>;
        let p_t: f64;
        if r == 1 {
            probs.fill(0.0);
            probs[params.source as usize] = 1.0;
            p_t = 1.0;
            decisions = (0..n)
                .map(|v| {
                    if v == params.source as usize {
                        Decision::Transmit(BROADCAST_MESSAGE)
                    } else {
                        Decision::Listen
                    }
                })
                .collect();
        } else {
            for (v, s) in states.iter().enumerate() {
                probs[v] = transmit_probability(s, t, params);
            }
            p_t = probs.iter().sum();
            decisions = probs
                .iter()
                .enumerate()
                .map(|(v, &p)| {
                    if p > 0.0 && draws.draw_unit(v as u32, r) < p {
                        Decision::Transmit(BROADCAST_MESSAGE)
                    } else {
                        Decision::Listen
                    }
                })
                .collect();
        }
        let classification = if p_t >= 1.0 { RoundClass::Busy } else { RoundClass::Free };

        let view = AdversaryView {
            round: r,
            n,
            params,
            history: trace.as_ref(),
            disclosure: RandomDisclosure::new(&draws, tau.disclosure_cutoff(r)),
            prior_decisions: if sees_previous_round { prev_decisions.as_deref() } else { None },
            current_decisions: if sees_current_round { Some(&decisions) } else { None },
            current_probabilities: if sees_previous_round { Some(&probs) } else { None },
        };
        let g = adversary.next_graph(&view);
        if g.n() != n {
            return Err(ProtocolError::AdversaryNodeCount { round: r, expected: n, actual: g.n() });
        }

        let receptions = resolve_round(&g, &decisions);
        let isolated = is_isolated(&g, &decisions);
        if half == Half::Second {
            half_mass += p_t;
        }

        for (v, rec) in receptions.iter().enumerate() {
            if let (NodeState::Uninformed, Reception::Message { .. }) = (&states[v], rec) {
                states[v] = if r == 1 {
                    NodeState::PreviouslyInformed { t_v: 0 }
                } else {
                    phase_newly += 1;
                    NodeState::NewlyInformed { t_v: t }
                };
                uninformed -= 1;
            }
        }

        if !opts.skip_diagnostics {
            diagnostics.push(RoundDiagnostics {
                round: r,
                p_t,
                classification,
                isolated_node: isolated,
                newly_informed_count: newly,
                previously_informed_count: previously,
                uninformed_count: n - newly - previously,
            });
        }
        if let Some(tx) = transmitters.as_mut() {
            tx.push(
                decisions
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| d.is_transmit())
                    .map(|(v, _)| v as u32)
                    .collect(),
            );
        }
        if let Some(tr) = trace.as_mut() {
            tr.push(g).expect("adversary graph node count already validated");
        }

        if r >= 2 && t % params.psi == 0 {
            // End of a full phase: check the second-half probability mass.
            if phase_newly >= 1 {
                let bound = phase_newly as f64 * mass_bound_per_node;
                assert!(
                    half_mass <= bound * (1.0 + 1e-12) + 1e-9,
                    "second-half probability mass {half_mass} exceeds {bound} \
                     (κ={phase_newly}) at round {r}: decay bookkeeping bug"
                );
            }
            half_mass = 0.0;
            phase_newly = 0;
        }

        adversary.note_decisions(r, &decisions);
        prev_decisions = Some(decisions);

        if uninformed == 0 {
            outcome = Some(Outcome::Completed { round: r });
            break;
        }
        if let Some(reason) = adversary.halt_requested() {
            outcome = Some(Outcome::Halted { round: r, reason });
            break;
        }
    }

    Ok(TrialRecord {
        params: params.clone(),
        adversary: adversary.label(),
        seed,
        outcome: outcome.unwrap_or(Outcome::NotCompleted { max_rounds, uninformed }),
        inform_times: states.iter().map(NodeState::t_v).collect(),
        diagnostics,
        transmitters,
        trace,
        bad_execution: adversary.bad_execution(),
    })
}

/// Balance times `θ_0, …, θ_m` of one phase, in phase-clock units.
///
/// `θ_0 = jψ − ⌊ψ/2⌋` is the last round of the first half. Each later `θ_i`
/// is the earliest time after `θ_{i−1}` such that the rounds
/// `θ_{i−1}+1 .. θ_i` contain equally many busy and free rounds; the scan
/// stops at the phase end. `diagnostics` must cover exactly one full phase.
pub fn compute_thetas(diagnostics: &[RoundDiagnostics], psi: u64) -> Vec<u64> {
    assert!(psi >= 1 && diagnostics.len() as u64 == psi, "diagnostics must cover one full phase");
    let t0 = diagnostics[0].round - 1;
    assert!(t0 >= 1 && (t0 - 1).is_multiple_of(psi), "diagnostics must start at a phase boundary");
    let j = (t0 - 1) / psi + 1;
    let theta_0 = j * psi - psi / 2;
    let mut thetas = vec![theta_0];
    let mut balance = 0i64;
    for d in diagnostics {
        let t = d.round - 1;
        debug_assert_eq!(
            t,
            t0 + (d.round - diagnostics[0].round),
            "diagnostics must be contiguous"
        );
        if t <= theta_0 {
            continue;
        }
        balance += match d.classification {
            RoundClass::Busy => 1,
            RoundClass::Free => -1,
        };
        if balance == 0 {
            thetas.push(t);
        }
    }
    thetas
}

/// Connected components of `backbone` induced on the nodes that were still
/// uninformed when the current phase started, keeping only components that
/// contain at least one node informed during the first half.
///
/// `states` is the node census at the end of a first half, so "uninformed at
/// phase start" means currently `Uninformed` or `NewlyInformed`. Components
/// are returned sorted, each listing its nodes in increasing order.
pub fn available_components(backbone: &StaticGraph, states: &[NodeState]) -> Vec<Vec<u32>> {
    assert_eq!(states.len(), backbone.n(), "one state per node");
    let eligible: Vec<bool> =
        states.iter().map(|s| !matches!(s, NodeState::PreviouslyInformed { .. })).collect();
    let mut seen = vec![false; backbone.n()];
    let mut components = Vec::new();
    for start in 0..backbone.n() as u32 {
        if !eligible[start as usize] || seen[start as usize] {
            continue;
        }
        let mut component = vec![start];
        let mut stack = vec![start];
        seen[start as usize] = true;
        while let Some(u) = stack.pop() {
            for v in backbone.neighbors(u) {
                if eligible[v as usize] && !seen[v as usize] {
                    seen[v as usize] = true;
                    component.push(v);
                    stack.push(v);
                }
            }
        }
        component.sort_unstable();
        if component.iter().any(|&v| matches!(states[v as usize], NodeState::NewlyInformed { .. }))
        {
            components.push(component);
        }
    }
    components
}

//! The (β, ℓ, φ)-periodic hitting game.
//!
//! A referee maintains a hidden target set `X(t)` inside the selection set
//! `S = {1, …, β}`. Time is split into phases of `φ` rounds. At each phase
//! start the referee samples a fresh uniform ℓ-subset `Y_j` of `S`, admits it
//! into the target set, and expires the elements of `Y_{j−2} ∖ Y_{j−1}`;
//! mid-phase, the previous guess is simply removed. The player only learns a
//! per-round success bit and wins by either accumulating β successes or
//! emptying the target set's overlap with one of the two live `Y` sets.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_rng, labels};

/// Errors from game configuration and refereeing.
#[derive(Debug, Error)]
pub enum GameError {
    #[error("beta must be at least 1")]
    ZeroBeta,
    #[error("ell must be at least 1")]
    ZeroEll,
    #[error("phi must be at least 1")]
    ZeroPhi,
    #[error("ell={ell} cannot exceed beta={beta}")]
    EllTooLarge { ell: u32, beta: u32 },
    #[error("guess {guess} outside the selection set 1..={beta}")]
    GuessOutOfRange { guess: u32, beta: u32 },
    #[error("the game is already won")]
    GameAlreadyWon,
}

/// Validated game parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameParams {
    /// Size of the selection set `S = 1..=beta`.
    pub beta: u32,
    /// Fresh elements admitted per phase.
    pub ell: u32,
    /// Rounds per phase.
    pub phi: u64,
    /// Referee seed (the `Y_j` sampling stream).
    pub seed: u64,
}

impl GameParams {
    pub fn new(beta: u32, ell: u32, phi: u64, seed: u64) -> Result<Self, GameError> {
        if beta == 0 {
            return Err(GameError::ZeroBeta);
        }
        if ell == 0 {
            return Err(GameError::ZeroEll);
        }
        if phi == 0 {
            return Err(GameError::ZeroPhi);
        }
        if ell > beta {
            return Err(GameError::EllTooLarge { ell, beta });
        }
        if phi > (beta / 3) as u64 {
            log::warn!(
                "phi={phi} exceeds beta/3={}; the game's lower-bound regime assumes phi ≤ beta/3",
                beta / 3
            );
        }
        Ok(Self { beta, ell, phi, seed })
    }
}

/// Why a game ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WinCause {
    /// The β-th successful guess landed.
    BetaSuccesses,
    /// The target set no longer meets one of the two live `Y` sets.
    EmptyIntersection,
}

/// Which live set a successful guess belonged to (oracle mode only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuccessOrigin {
    /// The element is in the current phase's fresh set `Y_j`.
    FromCurrentY,
    /// The element survives only from the previous phase's `Y_{j−1}`.
    FromPreviousY,
}

/// Result of refereeing one guess.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    /// The round just played.
    pub round: u64,
    pub success: bool,
    /// Set attribution of a successful guess.
    pub origin: Option<SuccessOrigin>,
    /// A win detected after this round, if any.
    pub win: Option<WinCause>,
}

/// Full referee state.
#[derive(Debug, Clone)]
pub struct GameState {
    params: GameParams,
    rng: ChaCha8Rng,
    /// Completed rounds; the next guess plays round `round + 1`.
    round: u64,
    target: BTreeSet<u32>,
    y_prev: BTreeSet<u32>,
    y_cur: BTreeSet<u32>,
    /// `y_prev` holds a sampled set (as opposed to the conventional empty
    /// `Y_0`), so the empty-intersection win check may consult it.
    y_prev_is_real: bool,
    successes: u32,
    last_guess: Option<u32>,
    won: Option<WinCause>,
    #[cfg(test)]
    forced_next_y: Option<BTreeSet<u32>>,
}

impl GameState {
    /// Fresh game: phase 1 starts immediately with `X(1) = Y_1`.
    pub fn new(params: &GameParams) -> Self {
        let mut state = Self {
            params: params.clone(),
            rng: derive_rng(params.seed, labels::GAME_REFEREE),
            round: 0,
            target: BTreeSet::new(),
            y_prev: BTreeSet::new(),
            y_cur: BTreeSet::new(),
            y_prev_is_real: false,
            successes: 0,
            last_guess: None,
            won: None,
            #[cfg(test)]
            forced_next_y: None,
        };
        state.y_cur = state.sample_y();
        state.target = state.y_cur.clone();
        state
    }

    fn sample_y(&mut self) -> BTreeSet<u32> {
        #[cfg(test)]
        if let Some(y) = self.forced_next_y.take() {
            return y;
        }
        rand::seq::index::sample(&mut self.rng, self.params.beta as usize, self.params.ell as usize)
            .iter()
            .map(|i| i as u32 + 1)
            .collect()
    }

    pub fn params(&self) -> &GameParams {
        &self.params
    }

    /// Completed rounds so far.
    pub fn round(&self) -> u64 {
        self.round
    }

    /// Phase index of the next round to be played.
    pub fn phase_of_next_round(&self) -> u64 {
        self.round / self.params.phi + 1
    }

    /// The current target set `X(round + 1)`.
    pub fn target(&self) -> &BTreeSet<u32> {
        &self.target
    }

    pub fn y_prev(&self) -> &BTreeSet<u32> {
        &self.y_prev
    }

    pub fn y_cur(&self) -> &BTreeSet<u32> {
        &self.y_cur
    }

    pub fn successes(&self) -> u32 {
        self.successes
    }

    pub fn last_guess(&self) -> Option<u32> {
        self.last_guess
    }

    pub fn won(&self) -> Option<WinCause> {
        self.won
    }

    #[cfg(test)]
    fn force_next_y(&mut self, y: impl IntoIterator<Item = u32>) {
        self.forced_next_y = Some(y.into_iter().collect());
    }
}

/// Referees one guess: evaluates success against `X(t)`, advances the target
/// set to `X(t+1)` (mid-phase removal or the phase-boundary renewal), and
/// checks the win conditions.
pub fn referee_step(state: &mut GameState, guess: u32) -> Result<StepOutcome, GameError> {
    if state.won.is_some() {
        return Err(GameError::GameAlreadyWon);
    }
    if guess == 0 || guess > state.params.beta {
        return Err(GameError::GuessOutOfRange { guess, beta: state.params.beta });
    }
    let round = state.round + 1;
    let success = state.target.contains(&guess);
    let origin = success.then(|| {
        if state.y_cur.contains(&guess) {
            SuccessOrigin::FromCurrentY
        } else {
            SuccessOrigin::FromPreviousY
        }
    });
    if success {
        state.successes += 1;
    }

    if round.is_multiple_of(state.params.phi) {
        // Round `round + 1` opens a new phase: admit a fresh Y, drop the
        // guess, and expire whatever survives only from two phases ago.
        let fresh = state.sample_y();
        let expired: BTreeSet<u32> = state.y_prev.difference(&state.y_cur).copied().collect();
        state.target.remove(&guess);
        state.target = state.target.difference(&expired).copied().collect();
        state.target.extend(fresh.iter().copied());
        state.y_prev = std::mem::replace(&mut state.y_cur, fresh);
        state.y_prev_is_real = true;
    } else {
        state.target.remove(&guess);
    }

    state.round = round;
    state.last_guess = Some(guess);
    debug_assert!(state.target.len() <= 2 * state.params.ell as usize, "|X| must stay ≤ 2ℓ");
    debug_assert!(
        state.target.iter().all(|x| state.y_prev.contains(x) || state.y_cur.contains(x)),
        "X must stay inside Y_prev ∪ Y_cur"
    );

    state.won = check_win(state);
    Ok(StepOutcome { round, success, origin, win: state.won })
}

/// Win conditions on the state after a referee step, i.e. with `X(r+1)` and
/// the `Y` sets of round `r+1`'s phase in place.
///
/// Priority: the β-th success first, then empty intersection with `Y_{j−1}`
/// or `Y_j`. The conventional empty sets `Y_0`/`Y_{−1}` of the first two
/// phases never trigger the intersection condition.
pub fn check_win(state: &GameState) -> Option<WinCause> {
    if state.successes >= state.params.beta {
        return Some(WinCause::BetaSuccesses);
    }
    if state.y_prev_is_real && state.target.is_disjoint(&state.y_prev) {
        return Some(WinCause::EmptyIntersection);
    }
    if state.target.is_disjoint(&state.y_cur) {
        return Some(WinCause::EmptyIntersection);
    }
    None
}

/// A guessing strategy. The referee calls `next_guess` once per round and
/// reports back only the success bit (plus the set attribution when the game
/// runs in oracle mode).
pub trait Player {
    /// Called once before round 1.
    fn begin(&mut self, _params: &GameParams) {}
    /// The guess for this round, an element of `1..=beta`.
    fn next_guess(&mut self, round: u64) -> u32;
    /// Feedback for the round just played.
    fn feedback(&mut self, _round: u64, _success: bool, _origin: Option<SuccessOrigin>) {}
}

/// How a played game ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GameOutcome {
    Won { round: u64, cause: WinCause },
    NotWon { max_rounds: u64 },
}

impl GameOutcome {
    pub fn win_round(&self) -> Option<u64> {
        match self {
            GameOutcome::Won { round, .. } => Some(*round),
            GameOutcome::NotWon { .. } => None,
        }
    }
}

/// One transcript line per round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRow {
    pub round: u64,
    pub guess: u32,
    pub success: bool,
    /// `|X|` after the round's update.
    pub x_size: usize,
    /// Phase index of the round played.
    pub phase: u64,
    pub win: bool,
}

/// Complete record of one played game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameRun {
    pub params: GameParams,
    pub outcome: GameOutcome,
    /// Rounds in which a guess succeeded.
    pub success_rounds: Vec<u64>,
    pub transcript: Vec<TranscriptRow>,
}

impl GameRun {
    /// Writes the per-round transcript as flat CSV.
    pub fn write_transcript_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.transcript {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Plays a full game without the success-attribution oracle.
pub fn play_game(
    player: &mut dyn Player,
    params: &GameParams,
    max_rounds: u64,
) -> Result<GameRun, GameError> {
    play_game_with_oracle(player, params, max_rounds, false)
}

/// Plays a full game; with `oracle` set, successful rounds also tell the
/// player whether the hit element came from `Y_{j−1}` or `Y_j`.
pub fn play_game_with_oracle(
    player: &mut dyn Player,
    params: &GameParams,
    max_rounds: u64,
    oracle: bool,
) -> Result<GameRun, GameError> {
    assert!(max_rounds >= 1, "need at least one round");
    let mut state = GameState::new(params);
    player.begin(params);
    let mut success_rounds = Vec::new();
    let mut transcript = Vec::new();
    let mut outcome = GameOutcome::NotWon { max_rounds };
    for round in 1..=max_rounds {
        let guess = player.next_guess(round);
        let step = referee_step(&mut state, guess)?;
        debug_assert_eq!(step.round, round);
        if step.success {
            success_rounds.push(round);
        }
        transcript.push(TranscriptRow {
            round,
            guess,
            success: step.success,
            x_size: state.target().len(),
            phase: (round - 1) / params.phi + 1,
            win: step.win.is_some(),
        });
        player.feedback(round, step.success, if oracle { step.origin } else { None });
        if let Some(cause) = step.win {
            outcome = GameOutcome::Won { round, cause };
            break;
        }
    }
    Ok(GameRun { params: params.clone(), outcome, success_rounds, transcript })
}

/// Player guessing uniformly over the selection set every round.
pub struct UniformPlayer {
    rng: ChaCha8Rng,
    beta: u32,
}

/// A uniform random player.
pub fn uniform_player(seed: u64) -> UniformPlayer {
    UniformPlayer { rng: derive_rng(seed, labels::GAME_PLAYER), beta: 1 }
}

impl Player for UniformPlayer {
    fn begin(&mut self, params: &GameParams) {
        self.beta = params.beta;
    }

    fn next_guess(&mut self, _round: u64) -> u32 {
        self.rng.gen_range(1..=self.beta)
    }
}

/// Player that never repeats a guess within a phase and prefers elements it
/// has not guessed in the previous phase either, using only the success bit.
pub struct InformedPlayer {
    rng: ChaCha8Rng,
    params: Option<GameParams>,
    guessed_prev_phase: BTreeSet<u32>,
    guessed_this_phase: BTreeSet<u32>,
}

/// A player mirroring the obvious "avoid your own recent guesses" strategy.
pub fn informed_player(seed: u64) -> InformedPlayer {
    InformedPlayer {
        rng: derive_rng(seed, labels::GAME_PLAYER),
        params: None,
        guessed_prev_phase: BTreeSet::new(),
        guessed_this_phase: BTreeSet::new(),
    }
}

impl Player for InformedPlayer {
    fn begin(&mut self, params: &GameParams) {
        self.params = Some(params.clone());
        self.guessed_prev_phase.clear();
        self.guessed_this_phase.clear();
    }

    fn next_guess(&mut self, round: u64) -> u32 {
        let params = self.params.as_ref().expect("begin() runs before the first round");
        if (round - 1).is_multiple_of(params.phi) && round > 1 {
            self.guessed_prev_phase = std::mem::take(&mut self.guessed_this_phase);
        }
        let fresh: Vec<u32> = (1..=params.beta)
            .filter(|x| {
                !self.guessed_this_phase.contains(x) && !self.guessed_prev_phase.contains(x)
            })
            .collect();
        let pool: Vec<u32> = if !fresh.is_empty() {
            fresh
        } else {
            (1..=params.beta).filter(|x| !self.guessed_this_phase.contains(x)).collect()
        };
        let guess = if pool.is_empty() {
            // Every element already guessed this phase (φ > β): repeat uniformly.
            self.rng.gen_range(1..=params.beta)
        } else {
            pool[self.rng.gen_range(0..pool.len())]
        };
        self.guessed_this_phase.insert(guess);
        guess
    }
}

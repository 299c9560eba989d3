//! Shared helpers for the integration suite.
//!
//! The centerpiece is [`OracleReferee`], an independent re-derivation of the
//! periodic hitting game used to cross-check the production referee: it
//! evolves the target set with plain set algebra and re-checks both win
//! conditions from scratch. It shares only the `Y_j` sampling stream with the
//! real referee (same seed derivation, same sampler), so the two can be run
//! in lockstep on identical draws.

use std::collections::BTreeSet;

use dynradio::rng::{derive_rng, labels};
use rand_chacha::ChaCha8Rng;

/// Which win condition fired, in the oracle's own vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleWin {
    /// The player accumulated β successful guesses.
    AllSuccesses,
    /// The target set lost every element of a live sample set.
    DisjointFromY,
}

/// Direct set-algebra recomputation of the (β, ℓ, φ)-periodic hitting game.
pub struct OracleReferee {
    beta: u32,
    ell: u32,
    phi: u64,
    rng: ChaCha8Rng,
    /// Completed rounds.
    pub round: u64,
    /// The target set `X(round + 1)`.
    pub x: BTreeSet<u32>,
    /// Sample set of the previous phase (`Y_{j−1}`).
    pub y_prev: BTreeSet<u32>,
    /// Sample set of the current phase (`Y_j`).
    pub y_cur: BTreeSet<u32>,
    /// Whether `y_prev` holds a sampled set rather than the conventional
    /// empty set that stands in before the second phase.
    pub y_prev_sampled: bool,
    pub successes: u32,
    pub won: Option<OracleWin>,
}

impl OracleReferee {
    pub fn new(beta: u32, ell: u32, phi: u64, seed: u64) -> Self {
        assert!(beta >= 1 && ell >= 1 && ell <= beta && phi >= 1);
        let mut rng = derive_rng(seed, labels::GAME_REFEREE);
        let y1 = sample_set(&mut rng, beta, ell);
        OracleReferee {
            beta,
            ell,
            phi,
            rng,
            round: 0,
            x: y1.clone(),
            y_prev: BTreeSet::new(),
            y_cur: y1,
            y_prev_sampled: false,
            successes: 0,
            won: None,
        }
    }

    /// Referees one guess and returns its success bit.
    ///
    /// Mid-phase the update is plain removal, `X ← X ∖ {g}`. On a boundary
    /// round (`round % φ == 0`) it is the renewal
    /// `X ← Y_new ∪ [X ∖ ({g} ∪ (Y_prev ∖ Y_cur))]` followed by the shift
    /// `Y_prev ← Y_cur ← Y_new`. Wins: β accumulated successes take
    /// precedence; otherwise the game ends when `X` becomes disjoint from a
    /// sampled `Y_prev` or from `Y_cur`.
    pub fn step(&mut self, guess: u32) -> bool {
        assert!(self.won.is_none(), "oracle stepped after a win");
        assert!(guess >= 1 && guess <= self.beta, "guess outside the selection set");
        self.round += 1;
        let success = self.x.contains(&guess);
        if success {
            self.successes += 1;
        }

        if self.round.is_multiple_of(self.phi) {
            let fresh = sample_set(&mut self.rng, self.beta, self.ell);
            let mut next: BTreeSet<u32> = self
                .x
                .iter()
                .copied()
                .filter(|&e| e != guess)
                .filter(|e| !(self.y_prev.contains(e) && !self.y_cur.contains(e)))
                .collect();
            next.extend(fresh.iter().copied());
            self.x = next;
            self.y_prev = std::mem::replace(&mut self.y_cur, fresh);
            self.y_prev_sampled = true;
        } else {
            self.x.remove(&guess);
        }

        self.won = if self.successes >= self.beta {
            Some(OracleWin::AllSuccesses)
        } else if (self.y_prev_sampled && self.x.is_disjoint(&self.y_prev))
            || self.x.is_disjoint(&self.y_cur)
        {
            Some(OracleWin::DisjointFromY)
        } else {
            None
        };
        success
    }
}

impl Clone for OracleReferee {
    fn clone(&self) -> Self {
        OracleReferee {
            beta: self.beta,
            ell: self.ell,
            phi: self.phi,
            rng: self.rng.clone(),
            round: self.round,
            x: self.x.clone(),
            y_prev: self.y_prev.clone(),
            y_cur: self.y_cur.clone(),
            y_prev_sampled: self.y_prev_sampled,
            successes: self.successes,
            won: self.won,
        }
    }
}

/// ℓ uniform draws without replacement from `1..=β`, via the same sampler
/// the production referee uses, so shared streams stay in lockstep.
pub fn sample_set(rng: &mut ChaCha8Rng, beta: u32, ell: u32) -> BTreeSet<u32> {
    rand::seq::index::sample(rng, beta as usize, ell as usize)
        .iter()
        .map(|i| i as u32 + 1)
        .collect()
}

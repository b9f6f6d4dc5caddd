use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Progressive sparsification schedule.
///
/// The target sparsity at round `t` is
///
/// ```text
/// s_t = S_T + (S_0 - S_T) * (1 - (F*floor(t/F) - t_0) / (T - t_0))^n
/// ```
///
/// clamped to `[S_0, S_T]`, so the share of newly pruned parameters shrinks every round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SparsitySchedule {
    /// `S_0`
    pub initial_sparsity: f64,
    /// `S_T`
    pub final_sparsity: f64,
    /// `T`
    pub total_rounds: u32,
    /// `t_0`, the first round at which pruning starts.
    pub start_round: u32,
    /// `F`, prune every `F` rounds.
    pub frequency: u32,
    /// `n`
    pub exponent: f64,
}

impl Default for SparsitySchedule {
    fn default() -> Self {
        SparsitySchedule {
            initial_sparsity: 0.0,
            final_sparsity: 0.95,
            total_rounds: 40,
            start_round: 1,
            frequency: 1,
            exponent: 3.0,
        }
    }
}

impl SparsitySchedule {
    /// Default schedule (n = 3, F = 1, t0 = 1, S0 = 0) ending at `final_sparsity` after `rounds`.
    pub fn new(final_sparsity: f64, rounds: u32) -> Self {
        SparsitySchedule {
            final_sparsity,
            total_rounds: rounds,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSchedule(m));
        let (s0, st) = (self.initial_sparsity, self.final_sparsity);
        if !(s0.is_finite() && st.is_finite() && 0.0 <= s0 && s0 <= st && st <= 1.0) {
            return bad(format!("need 0 <= initial ({s0}) <= final ({st}) <= 1"));
        }
        if self.start_round < 1 || self.start_round >= self.total_rounds {
            return bad(format!(
                "need 1 <= start_round ({}) < total_rounds ({})",
                self.start_round, self.total_rounds
            ));
        }
        if self.frequency == 0 {
            return bad("frequency must be positive".into());
        }
        if !(self.exponent.is_finite() && self.exponent > 0.0) {
            return bad(format!("exponent must be positive, got {}", self.exponent));
        }
        Ok(())
    }

    /// Target sparsity for round `t` (1-based).
    pub fn sparsity_at_round(&self, t: u32) -> Result<f64> {
        self.validate()?;
        if t == 0 || t > self.total_rounds {
            return Err(Error::RoundOutOfRange {
                round: t,
                total: self.total_rounds,
            });
        }
        let (s0, st) = (self.initial_sparsity, self.final_sparsity);
        if t == self.total_rounds {
            return Ok(st);
        }
        let stepped = self.frequency * (t / self.frequency);
        let progress = (stepped as f64 - self.start_round as f64)
            / (self.total_rounds - self.start_round) as f64;
        if progress <= 0.0 {
            return Ok(s0);
        }
        if progress >= 1.0 {
            return Ok(st);
        }
        let s = st + (s0 - st) * (1.0 - progress).powf(self.exponent);
        Ok(s.clamp(s0, st))
    }

    /// Targets for rounds `1..=T`.
    pub fn targets(&self) -> Result<Vec<f64>> {
        (1..=self.total_rounds)
            .map(|t| self.sparsity_at_round(t))
            .collect()
    }
}

pub fn sparsity_at_round(schedule: &SparsitySchedule, t: u32) -> Result<f64> {
    schedule.sparsity_at_round(t)
}

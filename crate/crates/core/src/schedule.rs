//! Discrete noise schedule `γ_1..γ_N` and its prefix sums `γ̄_0..γ̄_N`.
//!
//! Prefix sums are the primary representation: step sizes are recovered as
//! `γ_k = γ̄_k - γ̄_{k-1}`, so that identity holds bit-for-bit. Step `k` of the
//! reference chain adds Gaussian noise with variance `2 γ_k`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSchedule {
    gammas: Vec<f64>,
    gamma_bars: Vec<f64>,
}

/// Serializable description of a schedule, as it appears in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ScheduleSpec {
    Constant {
        n: usize,
        gamma: f64,
        #[serde(default = "default_true")]
        normalize: bool,
    },
    Symmetric {
        n: usize,
        gamma_min: f64,
        gamma_max: f64,
        #[serde(default = "default_true")]
        normalize: bool,
    },
}

fn default_true() -> bool {
    true
}

impl Default for ScheduleSpec {
    /// 20 steps, symmetric triangle with `γ_max / γ_min = 10`, normalized.
    fn default() -> Self {
        ScheduleSpec::Symmetric {
            n: 20,
            gamma_min: 0.1,
            gamma_max: 1.0,
            normalize: true,
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<GammaSchedule> {
        match *self {
            ScheduleSpec::Constant { n, gamma, normalize } => {
                GammaSchedule::constant(n, gamma, normalize)
            }
            ScheduleSpec::Symmetric {
                n,
                gamma_min,
                gamma_max,
                normalize,
            } => GammaSchedule::symmetric(n, gamma_min, gamma_max, normalize),
        }
    }
}

impl GammaSchedule {
    /// Builds a schedule from explicit step sizes.
    pub fn from_gammas(gammas: &[f64], normalize: bool) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::invalid(format!("step size {g} is not positive")));
        }
        let mut bars = Vec::with_capacity(gammas.len() + 1);
        let mut acc = 0.0f64;
        bars.push(0.0);
        for g in gammas {
            acc += g;
            bars.push(acc);
        }
        let sched = Self::from_bars(bars)?;
        Ok(if normalize { sched.normalized() } else { sched })
    }

    /// Builds a schedule from its prefix sums `γ̄_0 = 0 < γ̄_1 < ... < γ̄_N`.
    pub fn from_gamma_bars(bars: &[f64]) -> Result<Self> {
        if bars.len() < 2 || bars[0] != 0.0 {
            return Err(Error::invalid("prefix sums must start at 0 and have N >= 1"));
        }
        if bars.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("prefix sums must be finite"));
        }
        Self::from_bars(bars.to_vec())
    }

    fn from_bars(bars: Vec<f64>) -> Result<Self> {
        let gammas: Vec<f64> = bars.windows(2).map(|w| w[1] - w[0]).collect();
        if gammas.iter().any(|&g| g <= 0.0) {
            return Err(Error::invalid("prefix sums must be strictly increasing"));
        }
        Ok(Self {
            gammas,
            gamma_bars: bars,
        })
    }

    /// Every step equal to `gamma`; with `normalize`, each becomes `1/n`.
    pub fn constant(n: usize, gamma: f64, normalize: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("schedule needs n >= 1"));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid(format!("gamma {gamma} must be positive")));
        }
        Self::from_gammas(&vec![gamma; n], normalize)
    }

    /// Triangular profile: rises linearly from `gamma_min` to `gamma_max` over the
    /// first `ceil(n/2)` steps and mirrors back down, so `γ_k = γ_{n+1-k}`.
    pub fn symmetric(n: usize, gamma_min: f64, gamma_max: f64, normalize: bool) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("symmetric schedule needs n >= 2"));
        }
        if !(gamma_min.is_finite() && gamma_min > 0.0) {
            return Err(Error::invalid(format!("gamma_min {gamma_min} must be positive")));
        }
        if !(gamma_max.is_finite() && gamma_min <= gamma_max) {
            return Err(Error::invalid(format!(
                "gamma_min {gamma_min} exceeds gamma_max {gamma_max}"
            )));
        }
        let half = n.div_ceil(2);
        let rising: Vec<f64> = (0..half)
            .map(|i| {
                if half == 1 {
                    gamma_min
                } else {
                    gamma_min + (gamma_max - gamma_min) * i as f64 / (half - 1) as f64
                }
            })
            .collect();
        let gammas: Vec<f64> = (0..n)
            .map(|i| if i < half { rising[i] } else { rising[n - 1 - i] })
            .collect();
        Self::from_gammas(&gammas, normalize)
    }

    /// Rescales so that `γ̄_N = 1` exactly. Idempotent.
    pub fn normalized(&self) -> Self {
        let total = *self.gamma_bars.last().unwrap();
        let mut bars: Vec<f64> = self.gamma_bars.iter().map(|b| b / total).collect();
        *bars.last_mut().unwrap() = 1.0;
        Self::from_bars(bars).expect("scaling preserves monotonicity")
    }

    pub fn n_steps(&self) -> usize {
        self.gammas.len()
    }

    /// True when `γ̄_N = 1`.
    pub fn is_normalized(&self) -> bool {
        *self.gamma_bars.last().unwrap() == 1.0
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn gamma_bars(&self) -> &[f64] {
        &self.gamma_bars
    }

    /// `γ_k` for `k` in `1..=N`.
    pub fn gamma(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.n_steps() {
            return Err(Error::invalid(format!(
                "gamma index {k} outside 1..={}",
                self.n_steps()
            )));
        }
        Ok(self.gammas[k - 1])
    }

    /// `γ̄_k` for `k` in `0..=N`.
    pub fn gamma_bar(&self, k: usize) -> Result<f64> {
        self.gamma_bars.get(k).copied().ok_or_else(|| {
            Error::invalid(format!("gamma_bar index {k} outside 0..={}", self.n_steps()))
        })
    }

    /// `Σ_{i=k+1..N} γ_i`, which equals `1 - γ̄_k` on a normalized schedule.
    pub fn remaining(&self, k: usize) -> Result<f64> {
        if k > self.n_steps() {
            return Err(Error::invalid(format!(
                "remaining index {k} outside 0..={}",
                self.n_steps()
            )));
        }
        // an empty float sum is -0.0
        Ok(self.gammas[k..].iter().rev().sum::<f64>() + 0.0)
    }

    /// Stable identifier of the step sizes.
    pub fn hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.n_steps() as u64).to_le_bytes());
        for b in &self.gamma_bars {
            h.update(b.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_prefix_sums() {
        let s = GammaSchedule::constant(4, 0.25, false).unwrap();
        assert_eq!(s.gamma_bars(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn constant_normalized() {
        let s = GammaSchedule::constant(2, 5.0, true).unwrap();
        assert_eq!(s.gammas(), &[0.5, 0.5]);
        assert!(s.is_normalized());
    }

    #[test]
    fn single_step() {
        let s = GammaSchedule::constant(1, 1.0, false).unwrap();
        assert_eq!(s.gamma_bars(), &[0.0, 1.0]);
    }

    #[test]
    fn constant_rejects_bad_input() {
        assert!(GammaSchedule::constant(0, 1.0, false).is_err());
        assert!(GammaSchedule::constant(3, 0.0, false).is_err());
        assert!(GammaSchedule::constant(3, -1.0, true).is_err());
    }

    #[test]
    fn symmetric_odd_and_even() {
        let s = GammaSchedule::symmetric(3, 1.0, 2.0, false).unwrap();
        assert_eq!(s.gammas(), &[1.0, 2.0, 1.0]);
        let s = GammaSchedule::symmetric(4, 1.0, 3.0, false).unwrap();
        assert_eq!(s.gammas(), &[1.0, 3.0, 3.0, 1.0]);
    }

    #[test]
    fn symmetric_degenerate_matches_constant() {
        let a = GammaSchedule::symmetric(7, 0.3, 0.3, true).unwrap();
        let b = GammaSchedule::constant(7, 0.3, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn symmetric_rejects_inverted_range() {
        assert!(GammaSchedule::symmetric(4, 2.0, 1.0, false).is_err());
        assert!(GammaSchedule::symmetric(1, 1.0, 1.0, false).is_err());
    }

    #[test]
    fn gamma_bar_endpoints() {
        let s = ScheduleSpec::default().build().unwrap();
        assert_eq!(s.gamma_bar(0).unwrap(), 0.0);
        assert_eq!(s.gamma_bar(s.n_steps()).unwrap(), 1.0);
        assert!(s.gamma_bar(s.n_steps() + 1).is_err());
    }

    #[test]
    fn default_schedule_shape() {
        let s = ScheduleSpec::default().build().unwrap();
        assert_eq!(s.n_steps(), 20);
        let g = s.gammas();
        let ratio = g.iter().cloned().fold(0.0, f64::max) / g.iter().cloned().fold(f64::MAX, f64::min);
        assert!((ratio - 10.0).abs() < 1e-9);
    }

    #[test]
    fn hash_distinguishes_schedules() {
        let a = GammaSchedule::constant(10, 1.0, true).unwrap();
        let b = GammaSchedule::symmetric(10, 1.0, 2.0, true).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }

    proptest! {
        #[test]
        fn schedule_invariants(n in 2usize..40, lo in 0.01f64..1.0, span in 1.0f64..20.0, norm in any::<bool>()) {
            let s = GammaSchedule::symmetric(n, lo, lo * span, norm).unwrap();
            let bars = s.gamma_bars();
            prop_assert_eq!(bars[0], 0.0);
            for k in 1..=n {
                prop_assert!(bars[k] > bars[k - 1]);
                prop_assert_eq!(bars[k] - bars[k - 1], s.gammas()[k - 1]);
                prop_assert!(s.gammas()[k - 1] > 0.0);
                let mirror = s.gammas()[n - k];
                prop_assert!((s.gammas()[k - 1] - mirror).abs() <= 1e-12 * mirror.max(1.0));
            }
            if norm {
                prop_assert_eq!(bars[n], 1.0);
                for k in 0..=n {
                    prop_assert!((1.0 - bars[k] - s.remaining(k).unwrap()).abs() < 1e-12);
                }
            }
            let once = s.normalized();
            prop_assert_eq!(once.normalized(), once);
        }
    }
}

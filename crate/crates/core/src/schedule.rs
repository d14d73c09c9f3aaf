//! Noise schedules for the diffusion chain.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

/// Schedule family. The cosine schedule follows the squared-cosine
/// cumulative form with offset 0.008; the linear schedule spaces betas
/// evenly over the given range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    Linear { beta_start: f64, beta_end: f64 },
    Cosine,
}

impl ScheduleKind {
    /// Default linear range, scaled for short desk-scale chains.
    pub fn linear_default() -> Self {
        ScheduleKind::Linear {
            beta_start: 1e-4,
            beta_end: 0.35,
        }
    }
}

/// Per-step noise fractions and their cumulative products.
///
/// Indexing follows the chain convention: `beta(i)` is defined for
/// `1 <= i <= n`, and `alpha_bar(0) == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    kind: ScheduleKind,
    n: usize,
    beta: Vec<f64>,      // beta[i-1] holds step i
    alpha: Vec<f64>,     // 1 - beta
    alpha_bar: Vec<f64>, // cumulative product, alpha_bar[i-1] holds step i
}

/// Build a schedule of `n` steps.
pub fn make_schedule(kind: ScheduleKind, n: usize) -> Result<DiffusionSchedule> {
    if n == 0 {
        return Err(CoreError::Config("diffusion step count must be >= 1".into()));
    }
    let beta: Vec<f64> = match kind {
        ScheduleKind::Linear { beta_start, beta_end } => {
            if !(0.0 < beta_start && beta_start < 1.0 && 0.0 < beta_end && beta_end < 1.0) {
                return Err(CoreError::Config(format!(
                    "linear beta range ({beta_start}, {beta_end}) outside (0, 1)"
                )));
            }
            (1..=n)
                .map(|i| {
                    if n == 1 {
                        beta_start
                    } else {
                        beta_start + (beta_end - beta_start) * (i - 1) as f64 / (n - 1) as f64
                    }
                })
                .collect()
        }
        ScheduleKind::Cosine => {
            let f = |i: usize| {
                let x = (i as f64 / n as f64 + 0.008) / 1.008;
                let c = libm::cos(x * core::f64::consts::PI / 2.0);
                c * c
            };
            let f0 = f(0);
            let mut prev_bar = 1.0;
            (1..=n)
                .map(|i| {
                    let bar = f(i) / f0;
                    let b = (1.0 - bar / prev_bar).clamp(1e-8, 0.999);
                    prev_bar = bar;
                    b
                })
                .collect()
        }
    };

    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(n);
    let mut prod = 1.0;
    for a in &alpha {
        prod *= a;
        alpha_bar.push(prod);
    }
    let sched = DiffusionSchedule {
        kind,
        n,
        beta,
        alpha,
        alpha_bar,
    };
    sched.check_invariants()?;
    Ok(sched)
}

impl DiffusionSchedule {
    fn check_invariants(&self) -> Result<()> {
        let mut prev = 1.0;
        for i in 1..=self.n {
            let b = self.beta(i);
            if !(0.0 < b && b < 1.0) {
                return Err(CoreError::Config(format!("beta[{i}] = {b} outside (0, 1)")));
            }
            let bar = self.alpha_bar(i);
            if bar >= prev {
                return Err(CoreError::Config(format!(
                    "alpha_bar not strictly decreasing at step {i}"
                )));
            }
            prev = bar;
        }
        Ok(())
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.n
    }

    fn check_step(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n {
            return Err(CoreError::Index {
                index: i,
                limit: self.n,
            });
        }
        Ok(())
    }

    pub fn beta(&self, i: usize) -> f64 {
        self.beta[i - 1]
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alpha[i - 1]
    }

    /// Cumulative product of alphas; `alpha_bar(0) == 1` by definition.
    pub fn alpha_bar(&self, i: usize) -> f64 {
        if i == 0 {
            1.0
        } else {
            self.alpha_bar[i - 1]
        }
    }

    /// Closed-form marginal coefficients for noising to step `i`:
    /// `(sqrt(alpha_bar_i), sqrt(1 - alpha_bar_i))`.
    pub fn marginal_coeffs(&self, i: usize) -> Result<(f64, f64)> {
        self.check_step(i)?;
        let bar = self.alpha_bar(i);
        Ok((libm::sqrt(bar), libm::sqrt(1.0 - bar)))
    }

    /// Posterior-mean coefficients `(c_current, c_clean)` of
    /// `mu = c_current * x_i + c_clean * x_hat_0` at step `i`.
    pub fn posterior_coeffs(&self, i: usize) -> Result<(f64, f64)> {
        self.check_step(i)?;
        let a = self.alpha(i);
        let bar_prev = self.alpha_bar(i - 1);
        let bar = self.alpha_bar(i);
        let denom = 1.0 - bar;
        let c_current = libm::sqrt(a) * (1.0 - bar_prev) / denom;
        let c_clean = libm::sqrt(bar_prev) * self.beta(i) / denom;
        Ok((c_current, c_clean))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_linear_step_gives_alpha_bar_point_nine() {
        let s = make_schedule(
            ScheduleKind::Linear {
                beta_start: 0.1,
                beta_end: 0.1,
            },
            1,
        )
        .unwrap();
        assert_eq!(s.alpha_bar(1), 0.9);
        assert_eq!(s.alpha_bar(0), 1.0);
    }

    #[test]
    fn zero_steps_is_a_config_error() {
        assert!(matches!(
            make_schedule(ScheduleKind::Cosine, 0),
            Err(CoreError::Config(_))
        ));
    }

    #[test]
    fn alpha_bar_strictly_decreasing_for_both_kinds() {
        for kind in [ScheduleKind::Cosine, ScheduleKind::linear_default()] {
            let s = make_schedule(kind, 50).unwrap();
            let mut prev = 1.0;
            for i in 1..=50 {
                assert!(s.alpha_bar(i) < prev);
                prev = s.alpha_bar(i);
            }
        }
    }

    #[test]
    fn cosine_alpha_bar_matches_direct_formula() {
        let n = 20;
        let s = make_schedule(ScheduleKind::Cosine, n).unwrap();
        let f = |i: usize| {
            let x = (i as f64 / n as f64 + 0.008) / 1.008;
            let c = libm::cos(x * core::f64::consts::PI / 2.0);
            c * c
        };
        // Betas derive from ratios of f, so alpha_bar reproduces f(i)/f(0)
        // wherever no clamping kicked in.
        for i in 1..=n {
            let expect = f(i) / f(0);
            let got = s.alpha_bar(i);
            assert!(
                (got - expect).abs() < 1e-12 || s.beta(i) == 0.999,
                "step {i}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn posterior_coeffs_collapse_at_first_step() {
        let s = make_schedule(ScheduleKind::Cosine, 10).unwrap();
        let (c_current, c_clean) = s.posterior_coeffs(1).unwrap();
        assert!((c_current - 0.0).abs() < 1e-15);
        assert!((c_clean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_zero_is_an_index_error() {
        let s = make_schedule(ScheduleKind::Cosine, 5).unwrap();
        assert!(matches!(
            s.posterior_coeffs(0),
            Err(CoreError::Index { .. })
        ));
        assert!(matches!(s.marginal_coeffs(6), Err(CoreError::Index { .. })));
    }
}

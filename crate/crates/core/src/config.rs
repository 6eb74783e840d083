use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every tunable constant used by the samplers and pipelines.
///
/// The seed determines every random draw made with this configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchConfig {
    /// Target accuracy of the final sample, in `(0, 1)`.
    pub epsilon: f64,
    /// Oversampling constant in `p_i = min{1, α u_i c ln d}`.
    pub c: f64,
    /// Undersampling rate in `(0, 1]`.
    pub alpha: f64,
    /// JL distortion exponent in `(0, 1]`; estimates are within `d^θ`.
    pub theta: f64,
    pub seed: u64,
    /// Recursion stops once `n ≤ base_rows_multiplier · d · ln d`.
    pub base_rows_multiplier: f64,
    /// Refinement stops once `‖τ̃‖₁ ≤ stop_multiplier · d`.
    pub stop_multiplier: f64,
    /// Gaussian sketch rows `k = ceil(jl_constant / θ)`.
    pub jl_constant: f64,
    pub kernel_probes: usize,
    /// Relative singular value cutoff for numerical rank.
    pub rank_tol: f64,
    /// Relative kernel component above which a row counts as outside the row space.
    pub kernel_tol: f64,
}

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
pub const DEFAULT_KERNEL_TOL: f64 = 1e-8;

impl Default for SketchConfig {
    fn default() -> Self {
        SketchConfig {
            epsilon: 0.5,
            c: 12.0,
            alpha: 1.0,
            theta: 0.25,
            seed: DEFAULT_SEED,
            base_rows_multiplier: 20.0,
            stop_multiplier: 20.0,
            jl_constant: 64.0,
            kernel_probes: 3,
            rank_tol: DEFAULT_RANK_TOL,
            kernel_tol: DEFAULT_KERNEL_TOL,
        }
    }
}

impl SketchConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        SketchConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let half_open = |v: f64| v > 0.0 && v <= 1.0;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let checks = [
            (open_unit(self.epsilon), "epsilon must lie in (0, 1)"),
            (positive(self.c), "c must be positive"),
            (half_open(self.alpha), "alpha must lie in (0, 1]"),
            (half_open(self.theta), "theta must lie in (0, 1]"),
            (
                positive(self.base_rows_multiplier),
                "base_rows_multiplier must be positive",
            ),
            (positive(self.stop_multiplier), "stop_multiplier must be positive"),
            (positive(self.jl_constant), "jl_constant must be positive"),
            (self.kernel_probes >= 1, "kernel_probes must be at least 1"),
            (open_unit(self.rank_tol), "rank_tol must lie in (0, 1)"),
            (positive(self.kernel_tol), "kernel_tol must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidArgument(msg.into()));
            }
        }
        Ok(())
    }

    /// Number of Gaussian sketch rows for distortion exponent `theta`.
    pub fn sketch_rows(&self, theta: f64) -> usize {
        (self.jl_constant / theta).ceil().max(1.0) as usize
    }

    /// `base_rows_multiplier · d · ln d`, rounded up.
    pub fn base_rows(&self, d: usize) -> usize {
        (self.base_rows_multiplier * d as f64 * log_d(d)).ceil() as usize
    }
}

/// `ln(max(d, 2))`.
pub fn log_d(d: usize) -> f64 {
    (d.max(2) as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SketchConfig::default().validate().unwrap();
    }

    #[test]
    fn out_of_range_fields_are_rejected() {
        let bad = [
            SketchConfig {
                epsilon: 1.0,
                ..Default::default()
            },
            SketchConfig {
                alpha: 0.0,
                ..Default::default()
            },
            SketchConfig {
                theta: 1.5,
                ..Default::default()
            },
            SketchConfig {
                kernel_probes: 0,
                ..Default::default()
            },
            SketchConfig {
                c: f64::NAN,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn log_d_avoids_zero() {
        assert_eq!(log_d(1), 2f64.ln());
        assert_eq!(log_d(16), 16f64.ln());
    }

    #[test]
    fn sketch_rows_round_up() {
        let cfg = SketchConfig::default();
        assert_eq!(cfg.sketch_rows(1.0), 64);
        assert_eq!(cfg.sketch_rows(0.3), 214);
    }
}

//! Separable space-time test functions `v(t, x) = scale · g(t) · e_k(x)`
//! with `g(T) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Time profile `g` on `[0, T]`; every profile vanishes at `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeProfile {
    /// `T − t`
    Linear,
    /// `(T − t)²`
    Quadratic,
    /// `cos(πt / 2T)`
    CosRamp,
}

impl TimeProfile {
    pub fn g(self, t: f64, horizon: f64) -> f64 {
        match self {
            TimeProfile::Linear => horizon - t,
            TimeProfile::Quadratic => (horizon - t).powi(2),
            TimeProfile::CosRamp => (std::f64::consts::FRAC_PI_2 * t / horizon).cos(),
        }
    }

    pub fn dg(self, t: f64, horizon: f64) -> f64 {
        match self {
            TimeProfile::Linear => -1.0,
            TimeProfile::Quadratic => -2.0 * (horizon - t),
            TimeProfile::CosRamp => {
                let w = std::f64::consts::FRAC_PI_2 / horizon;
                -w * (w * t).sin()
            }
        }
    }

    pub fn d2g(self, t: f64, horizon: f64) -> f64 {
        match self {
            TimeProfile::Linear => 0.0,
            TimeProfile::Quadratic => 2.0,
            TimeProfile::CosRamp => {
                let w = std::f64::consts::FRAC_PI_2 / horizon;
                -w * w * (w * t).cos()
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TimeProfile::Linear => "linear",
            TimeProfile::Quadratic => "quadratic",
            TimeProfile::CosRamp => "cos_ramp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction {
    pub mode: usize,
    pub profile: TimeProfile,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl TestFunction {
    pub fn new(mode: usize, profile: TimeProfile) -> Self {
        Self {
            mode,
            profile,
            scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn g(&self, t: f64, horizon: f64) -> f64 {
        self.scale * self.profile.g(t, horizon)
    }

    pub fn dg(&self, t: f64, horizon: f64) -> f64 {
        self.scale * self.profile.dg(t, horizon)
    }

    pub fn d2g(&self, t: f64, horizon: f64) -> f64 {
        self.scale * self.profile.d2g(t, horizon)
    }

    /// Checks `g(T) = 0`, finite values, and the mode range.
    pub fn validate(&self, horizon: f64, modes: usize) -> Result<()> {
        if self.mode >= modes {
            return Err(invalid(format!(
                "test function mode {} outside the {modes} retained modes",
                self.mode
            )));
        }
        if !self.scale.is_finite() {
            return Err(invalid("test function scale must be finite"));
        }
        if self.g(horizon, horizon).abs() > 1e-12 {
            return Err(invalid("test function must vanish at the horizon"));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("k={} g={}", self.mode, self.profile.name())
    }
}

/// The default battery: modes 1..=3 against each profile.
pub fn default_battery() -> Vec<TestFunction> {
    let mut out = Vec::new();
    for mode in 1..=3 {
        for profile in [TimeProfile::Linear, TimeProfile::Quadratic, TimeProfile::CosRamp] {
            out.push(TestFunction::new(mode, profile));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn profiles_vanish_at_horizon() {
        for v in default_battery() {
            assert!(v.validate(0.5, 8).is_ok());
            assert!(v.validate(0.5, v.mode).is_err());
        }
    }

    proptest! {
        #[test]
        fn derivatives_match_differences(t in 0.01f64..0.49) {
            let h = 1e-6;
            for p in [TimeProfile::Linear, TimeProfile::Quadratic, TimeProfile::CosRamp] {
                let d1 = (p.g(t + h, 0.5) - p.g(t - h, 0.5)) / (2.0 * h);
                let d2 = (p.dg(t + h, 0.5) - p.dg(t - h, 0.5)) / (2.0 * h);
                prop_assert!((d1 - p.dg(t, 0.5)).abs() < 1e-7);
                prop_assert!((d2 - p.d2g(t, 0.5)).abs() < 1e-6);
            }
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Which local nonlinearity the drift uses.
///
/// `Linearized` freezes the cubic at zero, so `F′(s) = −s`; with a constant
/// kernel and no convection every mode is then an Ornstein–Uhlenbeck process.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialMode {
    #[default]
    Quartic,
    Linearized,
}

impl PotentialMode {
    pub fn value(self, s: f64) -> f64 {
        match self {
            PotentialMode::Quartic => 0.25 * s.powi(4) - 0.5 * s * s,
            PotentialMode::Linearized => -0.5 * s * s,
        }
    }

    pub fn derivative(self, s: f64) -> f64 {
        match self {
            PotentialMode::Quartic => s * s * s - s,
            PotentialMode::Linearized => -s,
        }
    }

    pub fn second_derivative(self, s: f64) -> f64 {
        match self {
            PotentialMode::Quartic => 3.0 * s * s - 1.0,
            PotentialMode::Linearized => -1.0,
        }
    }
}

/// `F(s) = s⁴/4 − s²/2` and its first two derivatives.
pub fn potential_eval(s: f64, order: u8) -> Result<f64> {
    let mode = PotentialMode::Quartic;
    match order {
        0 => Ok(mode.value(s)),
        1 => Ok(mode.derivative(s)),
        2 => Ok(mode.second_derivative(s)),
        _ => Err(invalid(format!("potential derivative order {order} not in 0..=2"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        assert_eq!(potential_eval(0.0, 1).unwrap(), 0.0);
        assert_eq!(potential_eval(1.0, 1).unwrap(), 0.0);
        assert_eq!(potential_eval(-1.0, 1).unwrap(), 0.0);
        assert_eq!(potential_eval(1.0, 0).unwrap(), -0.25);
        assert_eq!(potential_eval(2.0, 2).unwrap(), 11.0);
        assert!(potential_eval(0.0, 3).is_err());
    }

    proptest! {
        #[test]
        fn derivatives_are_consistent(s in -3.0f64..3.0) {
            let h = 1e-5;
            for mode in [PotentialMode::Quartic, PotentialMode::Linearized] {
                let d1 = (mode.value(s + h) - mode.value(s - h)) / (2.0 * h);
                let d2 = (mode.derivative(s + h) - mode.derivative(s - h)) / (2.0 * h);
                prop_assert!((d1 - mode.derivative(s)).abs() < 1e-8);
                prop_assert!((d2 - mode.second_derivative(s)).abs() < 1e-8);
                prop_assert!(mode.second_derivative(s) >= -1.0);
            }
        }
    }
}

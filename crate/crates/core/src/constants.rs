use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Unit system a detector configuration is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnitSystem {
    #[default]
    Si,
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub boltzmann: f64,
    pub electron_charge: f64,
    pub planck: f64,
}

impl PhysicalConstants {
    /// CODATA 2018 exact SI values.
    pub const SI: Self = Self {
        hbar: 1.054_571_817e-34,
        boltzmann: 1.380_649e-23,
        electron_charge: 1.602_176_634e-19,
        planck: 6.626_070_15e-34,
    };

    /// `hbar = k_B = e = 1`, hence `h = 2 pi`.
    pub const NATURAL: Self = Self {
        hbar: 1.0,
        boltzmann: 1.0,
        electron_charge: 1.0,
        planck: TAU,
    };

    pub fn for_units(units: UnitSystem) -> Self {
        match units {
            UnitSystem::Si => Self::SI,
            UnitSystem::Natural => Self::NATURAL,
        }
    }

    /// Conductance quantum per spin-resolved channel, `e^2 / h`.
    pub fn conductance_quantum(&self) -> f64 {
        self.electron_charge * self.electron_charge / self.planck
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn si_is_consistent() {
        let c = PhysicalConstants::SI;
        assert!((c.planck / TAU - c.hbar).abs() / c.hbar < 1e-9);
        // e^2/h = 3.874045865e-5 S
        assert!((c.conductance_quantum() - 3.874_045_864_5e-5).abs() < 1e-14);
    }

    #[test]
    fn natural_units() {
        let c = PhysicalConstants::for_units(UnitSystem::Natural);
        assert_eq!(c.hbar, 1.0);
        assert_eq!(c.boltzmann, 1.0);
        assert_eq!(c.planck, TAU);
    }
}

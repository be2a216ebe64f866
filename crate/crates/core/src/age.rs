//! Age bands with their population shares and COVID-19 outcome rates.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeBand {
    #[serde(rename = "0-17")]
    Under18,
    #[serde(rename = "18-44")]
    Adult18To44,
    #[serde(rename = "45-64")]
    Adult45To64,
    #[serde(rename = "65-74")]
    Senior65To74,
    #[serde(rename = "75+")]
    Senior75Plus,
}

/// Hospitalization fraction `h`, community mortality `d` and in-hospital
/// mortality `d'` for one age band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRates {
    pub hospitalization: f64,
    pub community_death: f64,
    pub hospital_death: f64,
}

impl AgeBand {
    pub const ALL: [AgeBand; 5] = [
        AgeBand::Under18,
        AgeBand::Adult18To44,
        AgeBand::Adult45To64,
        AgeBand::Senior65To74,
        AgeBand::Senior75Plus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeBand::Under18 => "0-17",
            AgeBand::Adult18To44 => "18-44",
            AgeBand::Adult45To64 => "45-64",
            AgeBand::Senior65To74 => "65-74",
            AgeBand::Senior75Plus => "75+",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.label() == label)
    }

    /// Share of the NYC population in this band.
    pub fn population_share(self) -> f64 {
        POPULATION_SHARE[self.index()]
    }

    pub fn outcome_rates(self) -> OutcomeRates {
        let i = self.index();
        OutcomeRates {
            hospitalization: HOSPITALIZATION[i],
            community_death: COMMUNITY_DEATH[i],
            hospital_death: HOSPITAL_DEATH[i],
        }
    }
}

const POPULATION_SHARE: [f64; 5] = [0.207, 0.400, 0.245, 0.083, 0.065];
const HOSPITALIZATION: [f64; 5] = [0.002, 0.010, 0.040, 0.076, 0.160];
const COMMUNITY_DEATH: [f64; 5] = [0.000_001, 0.000_01, 0.001, 0.007, 0.015];
const HOSPITAL_DEATH: [f64; 5] = [0.019, 0.073, 0.193, 0.327, 0.512];

/// Band weights used for the general community.
pub fn community_age_weights() -> [f64; 5] {
    POPULATION_SHARE
}

/// Band weights for healthcare workers: working-age bands only, in proportion
/// to their community shares.
pub fn healthcare_worker_age_weights() -> [f64; 5] {
    let mut w = [0.0; 5];
    w[AgeBand::Adult18To44.index()] = POPULATION_SHARE[1];
    w[AgeBand::Adult45To64.index()] = POPULATION_SHARE[2];
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shares_sum_to_one() {
        let total: f64 = AgeBand::ALL.iter().map(|b| b.population_share()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn labels_round_trip() {
        for band in AgeBand::ALL {
            assert_eq!(AgeBand::from_label(band.label()), Some(band));
            assert_eq!(AgeBand::from_index(band.index()), Some(band));
        }
    }
}

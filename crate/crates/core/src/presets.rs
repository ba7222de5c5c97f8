//! Reference three-regime S&P 500 parameter sets (daily units).
//!
//! Regimes are listed as bull (low volatility), neutral and bear.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::model::{daily_from_annual_percent, ArhmmModel};

/// Annualized % mean, AR coefficient, annualized % volatility.
const AR1_PARAMS: [(f64, f64, f64); 3] = [
    (34.89, -0.14, 3.34),
    (6.99, 0.03, 11.03),
    (-21.60, -0.19, 18.95),
];
const AR1_Q: [f64; 9] = [0.0, 0.96, 0.04, 0.32, 0.68, 0.0, 0.0, 0.04, 0.96];

const HMM_PARAMS: [(f64, f64, f64); 3] = [
    (31.41, 0.0, 2.18),
    (13.88, 0.0, 10.09),
    (-17.23, 0.0, 18.02),
];
const HMM_Q: [f64; 9] = [0.0, 0.92, 0.08, 0.17, 0.83, 0.0, 0.0, 0.03, 0.97];

fn build(params: &[(f64, f64, f64)], q: &[f64]) -> Result<ArhmmModel> {
    let daily: Vec<(f64, f64, f64)> = params
        .iter()
        .map(|&(m, phi, s)| {
            let (md, sd) = daily_from_annual_percent(m, s);
            (md, phi, sd)
        })
        .collect();
    ArhmmModel::univariate(&daily, DMatrix::from_row_slice(3, 3, q))
}

/// Three-regime ARHMM fitted to S&P 500 daily log-returns.
pub fn sp500_arhmm() -> ArhmmModel {
    build(&AR1_PARAMS, &AR1_Q).expect("preset is valid")
}

/// Three-regime HMM (no autoregression) fitted to the same data.
pub fn sp500_hmm() -> ArhmmModel {
    build(&HMM_PARAMS, &HMM_Q).expect("preset is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::stationary_regime_dist;

    #[test]
    fn presets_build_and_are_ergodic() {
        for m in [sp500_arhmm(), sp500_hmm()] {
            assert_eq!(m.num_regimes(), 3);
            let nu = stationary_regime_dist(m.q()).unwrap();
            assert!((nu.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn arhmm_regime_occupancy_near_published_rounding() {
        let nu = stationary_regime_dist(sp500_arhmm().q()).unwrap();
        for (got, want) in nu.iter().zip([0.19, 0.63, 0.18]) {
            assert!((got - want).abs() < 0.025, "{got} vs {want}");
        }
    }
}

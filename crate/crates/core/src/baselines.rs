//! Fixed-position comparison schemes: NOMA on a half-wavelength planar array,
//! and equal-slot TDMA on the same array.

use serde::{Deserialize, Serialize};

use crate::channel::{channels, AntennaPositionVector, ChannelGeometry, HALF_WAVELENGTH};
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::optimizer::{run_best_order, RunOptions, RunStatus, SolveRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    MaNoma,
    FpaNoma,
    OmaFpa,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::MaNoma, Scheme::FpaNoma, Scheme::OmaFpa];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::MaNoma => "ma-noma",
            Scheme::FpaNoma => "fpa-noma",
            Scheme::OmaFpa => "oma-fpa",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub scheme: Scheme,
    pub sum_rate: f64,
    pub per_user_rates: Vec<f64>,
    pub status: RunStatus,
    /// Optimizer record for the NOMA scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<SolveRecord>,
}

/// Centered planar array with `ceil(sqrt(M))` columns at half-wavelength spacing.
pub fn upa(cfg: &ScenarioConfig) -> Result<AntennaPositionVector> {
    AntennaPositionVector::centered_grid(cfg.num_antennas, HALF_WAVELENGTH, cfg.region_side)
}

/// NOMA with the antennas frozen on the planar array; otherwise the same
/// optimizer and order policy as the movable-antenna scheme.
pub fn fpa_noma(
    cfg: &ScenarioConfig,
    geoms: &[ChannelGeometry],
    options: &RunOptions,
) -> Result<BaselineResult> {
    let apv = upa(cfg)?;
    let opts = RunOptions {
        freeze_positions: true,
        ..*options
    };
    let rec = run_best_order(cfg, geoms, Some(&apv), &opts)?.best;
    Ok(BaselineResult {
        scheme: Scheme::FpaNoma,
        sum_rate: if rec.is_feasible() {
            rec.objective()
        } else {
            0.0
        },
        per_user_rates: rec.final_rates.own.clone(),
        status: rec.status,
        record: Some(rec),
    })
}

/// Equal-length TDMA slots, each with full power and a matched filter:
/// `(1/K) sum_k log2(1 + P_s ||h_k||^2 / sigma^2)`. Ignores `R_min`.
pub fn oma_fpa(cfg: &ScenarioConfig, geoms: &[ChannelGeometry]) -> Result<BaselineResult> {
    let ch = channels(&upa(cfg)?, geoms)?;
    let k = ch.len() as f64;
    let power = cfg.power_mw();
    let noise = cfg.noise_mw();
    let per_user_rates: Vec<f64> = ch
        .iter()
        .map(|h| (1.0 + power * h.norm_squared() / noise).log2() / k)
        .collect();
    Ok(BaselineResult {
        scheme: Scheme::OmaFpa,
        sum_rate: per_user_rates.iter().sum(),
        per_user_rates,
        status: RunStatus::Converged,
        record: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_geometry, PathAngles};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn cfg(m: usize, k: usize) -> ScenarioConfig {
        ScenarioConfig {
            num_antennas: m,
            num_users: k,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn oma_single_user_is_mrt_rate() {
        let c = cfg(4, 1);
        let geoms = sample_geometry(&c, 9, 0);
        let h = channels(&upa(&c).unwrap(), &geoms).unwrap().remove(0);
        let r = oma_fpa(&c, &geoms).unwrap();
        assert_relative_eq!(
            r.sum_rate,
            (1.0 + c.power_mw() * h.norm_squared() / c.noise_mw()).log2(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn oma_identical_users_average_to_single_rate() {
        let c = cfg(2, 2);
        let g = ChannelGeometry::new(
            vec![PathAngles::new(0.4, 1.0), PathAngles::new(2.0, 2.2)],
            vec![Complex64::new(2e-5, 1e-5), Complex64::new(-1e-5, 3e-5)],
            60.0,
        )
        .unwrap();
        let single = oma_fpa(&cfg(2, 1), &[g.clone()]).unwrap().sum_rate;
        let pair = oma_fpa(&c, &[g.clone(), g]).unwrap().sum_rate;
        assert_relative_eq!(pair, single, max_relative = 1e-12);
    }

    #[test]
    fn fpa_single_user_matches_mrt() {
        let c = cfg(4, 1);
        let geoms = sample_geometry(&c, 5, 2);
        let h = channels(&upa(&c).unwrap(), &geoms).unwrap().remove(0);
        let r = fpa_noma(&c, &geoms, &RunOptions::default()).unwrap();
        let expected = (1.0 + c.power_mw() * h.norm_squared() / c.noise_mw()).log2();
        assert_relative_eq!(r.sum_rate, expected, max_relative = 1e-6);
        assert_eq!(r.record.unwrap().final_apv, upa(&c).unwrap());
    }

    #[test]
    fn scheme_names() {
        assert_eq!(
            serde_json::to_string(&Scheme::FpaNoma).unwrap(),
            "\"fpa-noma\""
        );
        assert_eq!(Scheme::OmaFpa.to_string(), "oma-fpa");
    }
}

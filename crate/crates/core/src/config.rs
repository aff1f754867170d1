//! Scenario configuration.
//!
//! Field names in the on-disk TOML document match the symbols used throughout
//! the documentation (`M`, `K`, `P_s`, ...). Power quantities are in dBm and
//! are converted to milliwatts internally; geometry is in carrier wavelengths.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default decoding-order enumeration cap (K! grows quickly).
pub const DEFAULT_ENUMERATION_CAP: usize = 4;

/// How the SIC decoding order is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderPolicy {
    /// Enumerate all orders when `K <= 3`, otherwise use the heuristic.
    Auto,
    /// Always enumerate all `K!` orders (subject to the enumeration cap).
    Enumerate,
    /// Decode weaker users (smaller channel norm at the initial APV) first.
    Heuristic,
}

impl OrderPolicy {
    /// Whether this policy enumerates every order for `k` users.
    pub fn enumerates(self, k: usize) -> bool {
        match self {
            OrderPolicy::Auto => k <= 3,
            OrderPolicy::Enumerate => true,
            OrderPolicy::Heuristic => false,
        }
    }
}

/// Numerical tolerances shared by the solver layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Interior-point gap / feasibility tolerance.
    pub solver: f64,
    /// Acceptance tolerance for conic constraint residuals.
    pub constraint: f64,
    /// Allowed decrease between consecutive objective values.
    pub monotonicity: f64,
    /// Allowed decrease of the true objective within a single block update.
    pub block_update: f64,
    /// Tolerance for SIC, QoS, power and geometry feasibility checks.
    pub feasibility: f64,
    /// Rank-one defect `lambda_2 / lambda_1` above which randomization is applied.
    pub rank_one: f64,
    /// Number of Gaussian randomization samples.
    pub randomization_samples: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solver: 1e-8,
            constraint: 1e-7,
            monotonicity: 1e-6,
            block_update: 1e-8,
            feasibility: 1e-9,
            rank_one: 1e-4,
            randomization_samples: 100,
        }
    }
}

/// All physical and algorithmic parameters of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Number of movable antennas at the base station.
    #[serde(rename = "M")]
    pub num_antennas: usize,
    /// Number of single-antenna users.
    #[serde(rename = "K")]
    pub num_users: usize,
    /// Number of transmit paths per user.
    #[serde(rename = "L")]
    pub num_paths: usize,
    /// Side length of the square moving region, in wavelengths.
    #[serde(rename = "A")]
    pub region_side: f64,
    /// Minimum inter-antenna distance, in wavelengths.
    #[serde(rename = "D")]
    pub min_distance: f64,
    /// Transmit power budget in dBm.
    #[serde(rename = "P_s")]
    pub power_dbm: f64,
    /// Noise power per user in dBm.
    #[serde(rename = "sigma2")]
    pub noise_dbm: f64,
    /// Per-user minimum rate in bps/Hz.
    #[serde(rename = "R_min")]
    pub rate_min: f64,
    /// Path loss at the 1 m reference distance, in dB (negative).
    pub pathloss_ref_db: f64,
    pub pathloss_exponent: f64,
    /// User distance range in meters, sampled uniformly.
    pub distance_range_m: (f64, f64),
    pub trials: usize,
    pub seed: u64,
    pub order_policy: OrderPolicy,
    pub enumeration_cap: usize,
    /// Fractional-increase stopping threshold.
    pub eps: f64,
    #[serde(rename = "T_max")]
    pub max_iterations: usize,
    pub tolerances: Tolerances,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_antennas: 4,
            num_users: 3,
            num_paths: 5,
            region_side: 3.0,
            min_distance: 0.5,
            power_dbm: 10.0,
            noise_dbm: -80.0,
            rate_min: 0.25,
            pathloss_ref_db: -30.0,
            pathloss_exponent: 2.8,
            distance_range_m: (50.0, 100.0),
            trials: 50,
            seed: 2024,
            order_policy: OrderPolicy::Auto,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            eps: 1e-3,
            max_iterations: 150,
            tolerances: Tolerances::default(),
        }
    }
}

fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

impl ScenarioConfig {
    /// Parse a TOML document; missing fields take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.num_antennas == 0 || self.num_users == 0 || self.num_paths == 0 {
            return fail("M, K and L must be at least 1");
        }
        if !(self.region_side > 0.0 && self.region_side.is_finite()) {
            return fail("A must be positive and finite");
        }
        if !(self.min_distance > 0.0 && self.min_distance.is_finite()) {
            return fail("D must be positive and finite");
        }
        if !self.power_dbm.is_finite() {
            return fail("P_s must be finite");
        }
        if !self.noise_dbm.is_finite() {
            return fail("sigma2 must be finite");
        }
        if !(self.rate_min.is_finite() && self.rate_min >= 0.0) {
            return fail("R_min must be a finite nonnegative rate");
        }
        let (dmin, dmax) = self.distance_range_m;
        if !(dmin > 0.0 && dmax >= dmin && dmax.is_finite()) {
            return fail("distance_range_m must satisfy 0 < min <= max");
        }
        if !self.pathloss_ref_db.is_finite() || !self.pathloss_exponent.is_finite() {
            return fail("path-loss parameters must be finite");
        }
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        if !(self.eps > 0.0) || self.max_iterations == 0 {
            return fail("eps must be positive and T_max at least 1");
        }
        Ok(())
    }

    /// Transmit power budget in mW.
    pub fn power_mw(&self) -> f64 {
        dbm_to_mw(self.power_dbm)
    }

    /// Noise power in mW.
    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(self.noise_dbm)
    }

    /// Per-user noise powers in mW.
    pub fn noise_vec(&self) -> Vec<f64> {
        vec![self.noise_mw(); self.num_users]
    }

    /// Linear path-loss gain at the reference distance.
    pub fn pathloss_ref(&self) -> f64 {
        10f64.powf(self.pathloss_ref_db / 10.0)
    }

    /// Hex digest of the canonical serialization. Field order in the source
    /// document does not matter; any semantic change alters the digest.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

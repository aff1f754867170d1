//! The two convex subproblems solved in every outer iteration: the
//! beamforming SDP at fixed antenna positions, and the single-antenna position
//! program at fixed beamformers. Both share the rate block built here.
//!
//! All quantities handed to the solver are noise-normalized: received powers
//! are divided by the noise power of the receiving user, so `alpha` and `beta`
//! are dimensionless and of moderate magnitude.

mod beamforming;
mod extract;
mod position;

pub use beamforming::{solve_beamforming, BeamformingInput, SdpSolution, SdpStatus};
pub use extract::{extract_beamformers, Extraction};
pub use position::{solve_position, PositionInput, PositionSolution};

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::conic::{AffineExpr, ConicProblem, Var};
use crate::error::Result;
use crate::noma::{DecodingOrder, SlackPoint};
use crate::surrogate::ThetaLinearization;

/// What the subproblem maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubproblemObjective {
    /// Sum of own rates subject to QoS and SIC.
    SumRate,
    /// Largest common margin `tau` by which every QoS and SIC constraint
    /// holds; feasible at any tangent point.
    Restoration,
}

/// Settings shared by both subproblems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSettings {
    pub solver_tol: f64,
    pub constraint_tol: f64,
    /// Keep the own-signal slack pair tight (see [`add_rate_block`]).
    pub sic_guard: bool,
}

impl Default for SubproblemSettings {
    fn default() -> Self {
        Self {
            solver_tol: 1e-8,
            constraint_tol: 1e-7,
            sic_guard: true,
        }
    }
}

/// Solver variables of the rate block, indexed `[k][i]` for pairs with
/// `s(k) <= s(i)`. The slack variables are relative to the expansion point:
/// `alpha = alpha_t * a`, `beta = beta_t * b`, so both are 1 at the center.
#[derive(Debug, Clone)]
pub(crate) struct RateBlock {
    pub alpha_t: Vec<Vec<f64>>,
    pub beta_t: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<Option<Var>>>,
    pub beta: Vec<Vec<Option<Var>>>,
    pub rate: Vec<Vec<Option<Var>>>,
    /// SIC-side pair `(a_bar, b_bar)` per user with later users, present
    /// with the SIC guard; relative to `(alpha_t, beta_t)` of the own pair.
    pub sic_pair: Vec<Option<(Var, Var)>>,
    pub margin: Option<Var>,
}

impl RateBlock {
    pub fn sum_rate(&self, x: &[f64]) -> f64 {
        (0..self.rate.len())
            .map(|k| x[self.rate[k][k].expect("own rate").0])
            .sum()
    }

    fn extract(&self, x: &[f64], which: &[Vec<Option<Var>>]) -> Vec<Vec<Option<f64>>> {
        which
            .iter()
            .map(|row| row.iter().map(|v| v.map(|v| x[v.0])).collect())
            .collect()
    }

    pub fn rates(&self, x: &[f64]) -> Vec<Vec<Option<f64>>> {
        self.extract(x, &self.rate)
    }

    /// Denormalized `(alpha, beta)`, with `+inf` for unused pairs.
    pub fn slack(&self, x: &[f64], noise: &[f64]) -> SlackPoint {
        let n = noise.len();
        let mut alpha = vec![vec![f64::INFINITY; n]; n];
        let mut beta = vec![vec![f64::INFINITY; n]; n];
        for k in 0..n {
            for i in 0..n {
                if let (Some(a), Some(b)) = (self.alpha[k][i], self.beta[k][i]) {
                    alpha[k][i] = self.alpha_t[k][i] * x[a.0] / noise[i];
                    beta[k][i] = self.beta_t[k][i] * x[b.0] * noise[i];
                }
            }
        }
        SlackPoint { alpha, beta }
    }
}

/// Normalize a slack point: `alpha * noise_i`, `beta / noise_i`.
pub(crate) fn normalize_slack(sp: &SlackPoint, noise: &[f64]) -> SlackPoint {
    let n = noise.len();
    let mut out = sp.clone();
    for k in 0..n {
        for i in 0..n {
            out.alpha[k][i] *= noise[i];
            out.beta[k][i] /= noise[i];
        }
    }
    out
}

/// Variables and constraints common to both subproblems, given the
/// normalized expansion point:
///
/// * `R_{k,i} <= theta_{k,i}(alpha_{k,i}, beta_{k,i})` (linearized rate cap),
/// * `R_{k,i} >= log2(1 + 1/(alpha_{k,k} beta_{k,k}))` for `s(k) < s(i)`,
///   kept exact through exponential cones,
/// * `R_{k,k} >= R_min`,
/// * `beta_{k,i} >= 1` (noise floor).
///
/// The caller adds the channel-dependent links `1/alpha <= Gamma` and
/// `beta >= Upsilon`, scaled by `alpha_t` and `1/beta_t`.
///
/// With `sic_guard`, the SIC epigraph uses a separate pair
/// `(alpha_bar, beta_bar)` for which the caller imposes
/// `Gamma_{k,k} <= 2/alpha_t - alpha_bar/alpha_t^2 <= 1/alpha_bar` and
/// `beta_bar <= Upsilon_{k,k}`. The exact own rate is then at most
/// `log2(1 + 1/(alpha_bar beta_bar))`, so the SIC inequality holds for the
/// exact rates and not only for the slack rates.
pub(crate) fn add_rate_block(
    p: &mut ConicProblem,
    order: &DecodingOrder,
    expansion: &SlackPoint,
    rate_min: f64,
    objective: SubproblemObjective,
    sic_guard: bool,
) -> Result<RateBlock> {
    let n = order.num_users();
    let mut alpha = vec![vec![None; n]; n];
    let mut beta = vec![vec![None; n]; n];
    let mut rate = vec![vec![None; n]; n];
    for (k, i) in order.pairs() {
        alpha[k][i] = Some(p.add_var(format!("alpha[{k},{i}]")));
        beta[k][i] = Some(p.add_var(format!("beta[{k},{i}]")));
        rate[k][i] = Some(p.add_var(format!("R[{k},{i}]")));
    }
    let margin = match objective {
        SubproblemObjective::SumRate => None,
        SubproblemObjective::Restoration => Some(p.add_var("tau")),
    };
    for (k, i) in order.pairs() {
        let (a, b, r) = (
            alpha[k][i].unwrap(),
            beta[k][i].unwrap(),
            rate[k][i].unwrap(),
        );
        let lin = ThetaLinearization::new(expansion.alpha[k][i], expansion.beta[k][i])?;
        // theta(alpha, beta) - R >= 0
        p.nonneg(
            AffineExpr::constant(
                lin.value - lin.slope_alpha * lin.alpha_t - lin.slope_beta * lin.beta_t,
            )
            .term(a, lin.slope_alpha * lin.alpha_t)
            .term(b, lin.slope_beta * lin.beta_t)
            .term(r, -1.0),
        );
        p.nonneg(AffineExpr::var(b).scaled(lin.beta_t).plus(-1.0));
    }
    let mut sic_pair = vec![None; n];
    for k in 0..n {
        let own = rate[k][k].unwrap();
        if order.later(k).next().is_some() {
            let (sa, sb) = if sic_guard {
                let pair = (
                    p.add_var(format!("alpha_bar[{k}]")),
                    p.add_var(format!("beta_bar[{k}]")),
                );
                sic_pair[k] = Some(pair);
                pair
            } else {
                (alpha[k][k].unwrap(), beta[k][k].unwrap())
            };
            // E ln 2 >= softplus(x1 + x2), x1 >= -ln alpha, x2 >= -ln beta.
            let e = p.add_var(format!("E[{k}]"));
            let x1 = p.add_var(format!("x1[{k}]"));
            let x2 = p.add_var(format!("x2[{k}]"));
            let u1 = p.add_var(format!("u1[{k}]"));
            let u2 = p.add_var(format!("u2[{k}]"));
            let z = AffineExpr::var(e).scaled(LN_2);
            let (at, bt) = (expansion.alpha[k][k], expansion.beta[k][k]);
            p.exp_le(
                AffineExpr::var(x1).scaled(-1.0).plus(-at.ln()),
                AffineExpr::var(sa),
            );
            p.exp_le(
                AffineExpr::var(x2).scaled(-1.0).plus(-bt.ln()),
                AffineExpr::var(sb),
            );
            p.exp_le(z.clone().scaled(-1.0), AffineExpr::var(u1));
            p.exp_le(
                AffineExpr::var(x1).term(x2, 1.0).add_expr(&z, -1.0),
                AffineExpr::var(u2),
            );
            p.nonneg(AffineExpr::constant(1.0).term(u1, -1.0).term(u2, -1.0));
            for i in order.later(k) {
                let mut sic = AffineExpr::var(rate[k][i].unwrap()).term(e, -1.0);
                if let Some(t) = margin {
                    sic = sic.term(t, -1.0);
                }
                p.nonneg(sic);
            }
        }
        let mut qos = AffineExpr::var(own).plus(-rate_min);
        if let Some(t) = margin {
            qos = qos.term(t, -1.0);
        }
        p.nonneg(qos);
    }
    match margin {
        Some(t) => p.minimize_term(t, -1.0),
        None => {
            for k in 0..n {
                p.minimize_term(rate[k][k].unwrap(), -1.0);
            }
        }
    }
    Ok(RateBlock {
        alpha_t: expansion.alpha.clone(),
        beta_t: expansion.beta.clone(),
        alpha,
        beta,
        rate,
        sic_pair,
        margin,
    })
}

/// `alpha_t * (2/alpha_t - alpha/alpha_t^2) = 2 - a`: scaled tangent
/// minorant of `1/alpha` in the relative variable `a`.
pub(crate) fn inverse_tangent(a: Var) -> AffineExpr {
    AffineExpr::constant(2.0).term(a, -1.0)
}

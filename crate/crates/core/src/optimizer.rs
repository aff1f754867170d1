//! Alternating optimization over the beamformers and each antenna position.
//!
//! Every recorded iterate is checked against the exact constraints (power,
//! region, spacing, QoS, SIC). Candidates from a subproblem that fail the
//! check, or lose objective beyond the block tolerance, are discarded and the
//! previous state is kept; each discard is logged as an event.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    channels, AntennaPosition, AntennaPositionVector, ChannelGeometry, HALF_WAVELENGTH,
};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::noma::{
    enumerate_orders, heuristic_order, rates, sic_feasible, slack_from_primal, BeamformerSet,
    Channel, DecodingOrder, NomaRates, SlackPoint,
};
use crate::subproblems::{
    extract_beamformers, solve_beamforming, solve_position, BeamformingInput, PositionInput,
    SdpStatus, SubproblemObjective, SubproblemSettings,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EventKind {
    /// The beamforming subproblem did not return an optimal point.
    BeamformingSolverFailure {
        status: SdpStatus,
    },
    /// A beamforming candidate failed the exact checks or lost objective.
    BeamformingRejected {
        objective_change: f64,
        feasible: bool,
    },
    /// Gaussian randomization was used; `defect` is the largest rank-one defect.
    Randomized {
        defect: f64,
    },
    PositionSolverFailure {
        antenna: usize,
        status: SdpStatus,
    },
    PositionRejected {
        antenna: usize,
        objective_change: f64,
        feasible: bool,
    },
    /// One restoration step; `margin` is the exact worst-case slack after it.
    Restoration {
        margin: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub iteration: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Wall time per outer iteration. Not serialized, so dumps stay reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IterationTiming {
    pub beamforming_s: f64,
    pub position_s: f64,
}

/// State after one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateSnapshot {
    pub apv: AntennaPositionVector,
    pub bf: BeamformerSet,
    pub rates: NomaRates,
    pub slack: SlackPoint,
    pub rank_one_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    /// Sum rate of the first feasible state followed by one entry per
    /// outer iteration.
    pub objective_trace: Vec<f64>,
    pub final_rates: NomaRates,
    pub final_apv: AntennaPositionVector,
    pub final_bf: BeamformerSet,
    pub order: DecodingOrder,
    pub iterations: usize,
    pub status: RunStatus,
    /// Restoration steps needed before the first feasible state.
    pub restoration_steps: usize,
    pub events: Vec<Event>,
    /// Filled only when [`RunOptions::keep_snapshots`] is set; entry 0 is the
    /// first feasible state.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<IterateSnapshot>,
    #[serde(skip)]
    pub timing: Vec<IterationTiming>,
}

impl SolveRecord {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }

    pub fn is_feasible(&self) -> bool {
        self.status != RunStatus::Infeasible
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Skip the position loop (fixed-position array).
    pub freeze_positions: bool,
    pub sic_guard: bool,
    pub max_restoration_steps: usize,
    pub keep_snapshots: bool,
    /// Seed of the randomization stream used by rank-one extraction.
    pub randomization_seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            freeze_positions: false,
            sic_guard: true,
            max_restoration_steps: 30,
            keep_snapshots: false,
            randomization_seed: 0,
        }
    }
}

/// Matched-filter beamformers `h_k/||h_k|| sqrt(P_s/K)`.
pub fn matched_filter(channels: &[Channel], power: f64) -> Result<BeamformerSet> {
    let k = channels.len() as f64;
    let vectors = channels
        .iter()
        .enumerate()
        .map(|(user, h)| {
            let n = h.norm();
            if n > 0.0 {
                Ok(h.scale((power / k).sqrt() / n))
            } else {
                Err(Error::DegenerateChannel {
                    beamformer: user,
                    user,
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BeamformerSet::new(vectors))
}

/// Centered grid at half-wavelength spacing (or `D` when larger).
pub fn initial_grid(cfg: &ScenarioConfig) -> Result<AntennaPositionVector> {
    AntennaPositionVector::centered_grid(
        cfg.num_antennas,
        cfg.min_distance.max(HALF_WAVELENGTH),
        cfg.region_side,
    )
}

/// Centered half-wavelength grid and equal-power matched filters.
pub fn initialize(
    cfg: &ScenarioConfig,
    geoms: &[ChannelGeometry],
    order: &DecodingOrder,
) -> Result<(AntennaPositionVector, BeamformerSet, SlackPoint)> {
    let apv = initial_grid(cfg)?;
    let ch = channels(&apv, geoms)?;
    let bf = matched_filter(&ch, cfg.power_mw())?;
    let slack = slack_from_primal(&ch, &bf, order, &cfg.noise_vec())?;
    Ok((apv, bf, slack))
}

/// Smallest exact slack over all QoS and SIC constraints.
fn exact_margin(r: &NomaRates, order: &DecodingOrder, rate_min: f64) -> f64 {
    let mut m = f64::INFINITY;
    for k in 0..r.own.len() {
        m = m.min(r.own[k] - rate_min);
        for i in order.later(k) {
            m = m.min(r.cross[k][i].unwrap_or(f64::NEG_INFINITY) - r.own[k]);
        }
    }
    m
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    geoms: &'a [ChannelGeometry],
    order: &'a DecodingOrder,
    noise: Vec<f64>,
    power: f64,
    settings: SubproblemSettings,
    options: RunOptions,
    rng: ChaCha12Rng,
    events: Vec<Event>,
}

#[derive(Clone)]
struct State {
    apv: AntennaPositionVector,
    bf: BeamformerSet,
    channels: Vec<Channel>,
    rates: NomaRates,
    defect: f64,
}

impl State {
    fn objective(&self) -> f64 {
        self.rates.sum_rate()
    }
}

impl<'a> Runner<'a> {
    fn state(&self, apv: AntennaPositionVector, bf: BeamformerSet, defect: f64) -> Result<State> {
        let ch = channels(&apv, self.geoms)?;
        let r = rates(&ch, &bf, self.order, &self.noise);
        Ok(State {
            apv,
            bf,
            channels: ch,
            rates: r,
            defect,
        })
    }

    fn margin(&self, r: &NomaRates) -> f64 {
        exact_margin(r, self.order, self.cfg.rate_min)
    }

    fn feasible(&self, s: &State) -> bool {
        let tol = self.cfg.tolerances.feasibility;
        s.bf.total_power() <= self.power * (1.0 + 1e-12) + 1e-300
            && s.apv
                .is_feasible(self.cfg.region_side, self.cfg.min_distance, tol)
            && sic_feasible(&s.rates, self.order, self.cfg.rate_min, tol).is_feasible()
    }

    fn log(&mut self, iteration: usize, kind: EventKind) {
        log::debug!("iteration {iteration}: {kind:?}");
        self.events.push(Event { iteration, kind });
    }

    /// Solve the beamforming subproblem and extract a candidate state.
    fn beamforming_candidate(
        &mut self,
        s: &State,
        objective: SubproblemObjective,
        iteration: usize,
    ) -> Result<Option<State>> {
        let slack = slack_from_primal(&s.channels, &s.bf, self.order, &self.noise)?;
        let input = BeamformingInput {
            channels: &s.channels,
            order: self.order,
            noise: &self.noise,
            power: self.power,
            rate_min: self.cfg.rate_min,
            expansion: &slack,
        };
        let sol = solve_beamforming(&input, objective, &self.settings)?;
        if sol.status != SdpStatus::Optimal {
            self.log(
                iteration,
                EventKind::BeamformingSolverFailure { status: sol.status },
            );
            return Ok(None);
        }
        let tol = self.cfg.tolerances.clone();
        let (ch, order, noise, rmin) = (&s.channels, self.order, &self.noise, self.cfg.rate_min);
        let score = |bf: &BeamformerSet| {
            let r = rates(ch, bf, order, noise);
            match objective {
                SubproblemObjective::SumRate
                    if sic_feasible(&r, order, rmin, tol.feasibility).is_feasible() =>
                {
                    r.sum_rate()
                }
                SubproblemObjective::SumRate => f64::NEG_INFINITY,
                SubproblemObjective::Restoration => exact_margin(&r, order, rmin),
            }
        };
        let ex = extract_beamformers(
            &sol.w,
            tol.rank_one,
            tol.randomization_samples,
            &mut self.rng,
            score,
        )?;
        let defect = ex.defects.iter().copied().fold(0.0, f64::max);
        if ex.randomized {
            self.log(iteration, EventKind::Randomized { defect });
        }
        let mut bf = ex.beamformers;
        let total = bf.total_power();
        if total > self.power {
            bf = bf.scaled((self.power / total).sqrt());
        }
        Ok(Some(self.state(s.apv.clone(), bf, defect)?))
    }

    /// Push antenna `m` out of any neighbour's exclusion disc and back into
    /// the region; used to absorb solver round-off on active constraints.
    fn repair(&self, apv: &mut AntennaPositionVector, m: usize) {
        let side = self.cfg.region_side;
        let d = self.cfg.min_distance;
        for _ in 0..4 {
            let mut u = apv.positions[m];
            for (n, v) in apv.positions.iter().enumerate() {
                if n == m {
                    continue;
                }
                let dist = u.distance(v);
                if dist < d && dist > 0.0 {
                    let s = d * (1.0 + 1e-12) / dist;
                    u = AntennaPosition::new(v.x + (u.x - v.x) * s, v.y + (u.y - v.y) * s);
                }
            }
            u.x = u.x.clamp(0.0, side);
            u.y = u.y.clamp(0.0, side);
            apv.positions[m] = u;
            if apv.is_feasible(side, d, 0.0) {
                break;
            }
        }
    }

    fn position_candidate(
        &mut self,
        s: &State,
        m: usize,
        objective: SubproblemObjective,
        iteration: usize,
    ) -> Result<Option<State>> {
        let slack = slack_from_primal(&s.channels, &s.bf, self.order, &self.noise)?;
        let input = PositionInput {
            m,
            apv: &s.apv,
            geoms: self.geoms,
            bf: &s.bf,
            order: self.order,
            noise: &self.noise,
            rate_min: self.cfg.rate_min,
            region_side: self.cfg.region_side,
            min_distance: self.cfg.min_distance,
            expansion: &slack,
        };
        let sol = solve_position(&input, objective, &self.settings)?;
        if sol.status != SdpStatus::Optimal {
            self.log(
                iteration,
                EventKind::PositionSolverFailure {
                    antenna: m,
                    status: sol.status,
                },
            );
            return Ok(None);
        }
        let mut apv = s.apv.clone();
        apv.positions[m] = sol.position;
        self.repair(&mut apv, m);
        Ok(Some(self.state(apv, s.bf.clone(), s.defect)?))
    }

    /// Accept `candidate` if it is exactly feasible and does not lose
    /// objective beyond the block tolerance.
    fn accept(&self, current: &State, candidate: &State) -> (bool, f64, bool) {
        let change = candidate.objective() - current.objective();
        let feasible = self.feasible(candidate);
        (
            feasible && change >= -self.cfg.tolerances.block_update,
            change,
            feasible,
        )
    }

    fn restore(&mut self, mut s: State) -> Result<(State, usize, bool)> {
        if self.feasible(&s) {
            return Ok((s, 0, true));
        }
        if let Some(c) = self.beamforming_candidate(&s, SubproblemObjective::SumRate, 0)? {
            if self.feasible(&c) {
                return Ok((c, 0, true));
            }
        }
        // Each step raises the exact worst-case slack with one beamforming
        // and, unless positions are frozen, one pass of position updates.
        let mut margin = self.margin(&s.rates);
        for step in 1..=self.options.max_restoration_steps {
            let start = margin;
            if let Some(c) = self.beamforming_candidate(&s, SubproblemObjective::Restoration, 0)? {
                let m = self.margin(&c.rates);
                self.log(0, EventKind::Restoration { margin: m });
                if self.feasible(&c) {
                    return Ok((c, step, true));
                }
                if m > margin + 1e-9 {
                    margin = m;
                    s = c;
                }
            }
            if !self.options.freeze_positions {
                for ant in 0..self.cfg.num_antennas {
                    let Some(c) =
                        self.position_candidate(&s, ant, SubproblemObjective::Restoration, 0)?
                    else {
                        continue;
                    };
                    let m = self.margin(&c.rates);
                    if self.feasible(&c) {
                        self.log(0, EventKind::Restoration { margin: m });
                        return Ok((c, step, true));
                    }
                    if m > margin + 1e-9
                        && c.apv.is_feasible(
                            self.cfg.region_side,
                            self.cfg.min_distance,
                            self.cfg.tolerances.feasibility,
                        )
                    {
                        self.log(0, EventKind::Restoration { margin: m });
                        margin = m;
                        s = c;
                    }
                }
            }
            if margin <= start + 1e-9 {
                return Ok((s, step, false));
            }
        }
        Ok((s, self.options.max_restoration_steps, false))
    }

    fn snapshot(&self, s: &State) -> Result<IterateSnapshot> {
        Ok(IterateSnapshot {
            apv: s.apv.clone(),
            bf: s.bf.clone(),
            rates: s.rates.clone(),
            slack: slack_from_primal(&s.channels, &s.bf, self.order, &self.noise)?,
            rank_one_defect: s.defect,
        })
    }

    fn finish(self, s: State, trace: Vec<f64>, status: RunStatus, extra: Extra) -> SolveRecord {
        SolveRecord {
            iterations: trace.len().saturating_sub(1),
            objective_trace: trace,
            final_rates: s.rates,
            final_apv: s.apv,
            final_bf: s.bf,
            order: self.order.clone(),
            status,
            restoration_steps: extra.restoration_steps,
            events: self.events,
            snapshots: extra.snapshots,
            timing: extra.timing,
        }
    }
}

#[derive(Default)]
struct Extra {
    restoration_steps: usize,
    snapshots: Vec<IterateSnapshot>,
    timing: Vec<IterationTiming>,
}

/// Run the alternating optimization from `initial_apv` (the centered grid
/// when `None`) under a fixed decoding order.
pub fn run(
    cfg: &ScenarioConfig,
    geoms: &[ChannelGeometry],
    order: &DecodingOrder,
    initial_apv: Option<&AntennaPositionVector>,
    options: &RunOptions,
) -> Result<SolveRecord> {
    cfg.validate()?;
    if geoms.len() != cfg.num_users || order.num_users() != cfg.num_users {
        return Err(Error::InvalidInput(format!(
            "{} geometries and an order over {} users for K = {}",
            geoms.len(),
            order.num_users(),
            cfg.num_users
        )));
    }
    let apv = match initial_apv {
        Some(a) => a.clone(),
        None => initial_grid(cfg)?,
    };
    let mut runner = Runner {
        cfg,
        geoms,
        order,
        noise: cfg.noise_vec(),
        power: cfg.power_mw(),
        settings: SubproblemSettings {
            solver_tol: cfg.tolerances.solver,
            constraint_tol: cfg.tolerances.constraint,
            sic_guard: options.sic_guard,
        },
        options: *options,
        rng: ChaCha12Rng::seed_from_u64(options.randomization_seed),
        events: Vec::new(),
    };

    let ch = channels(&apv, geoms)?;
    if runner.power <= 0.0 {
        let bf = BeamformerSet::new(ch.iter().map(|h| h.scale(0.0)).collect());
        let s = runner.state(apv, bf, 0.0)?;
        let status = if cfg.rate_min <= 0.0 {
            RunStatus::Converged
        } else {
            RunStatus::Infeasible
        };
        let trace = if status == RunStatus::Converged {
            vec![0.0]
        } else {
            Vec::new()
        };
        return Ok(runner.finish(s, trace, status, Extra::default()));
    }
    let bf = matched_filter(&ch, runner.power)?;
    let init = runner.state(apv, bf, 0.0)?;
    let (mut s, restoration_steps, ok) = runner.restore(init)?;
    let mut extra = Extra {
        restoration_steps,
        ..Extra::default()
    };
    if !ok {
        return Ok(runner.finish(s, Vec::new(), RunStatus::Infeasible, extra));
    }
    if options.keep_snapshots {
        extra.snapshots.push(runner.snapshot(&s)?);
    }
    let mut trace = vec![s.objective()];
    let mut status = RunStatus::MaxIter;
    for t in 1..=cfg.max_iterations {
        let prev = s.objective();
        let start = Instant::now();
        if let Some(c) = runner.beamforming_candidate(&s, SubproblemObjective::SumRate, t)? {
            let (ok, change, feasible) = runner.accept(&s, &c);
            if ok {
                s = c;
            } else {
                runner.log(
                    t,
                    EventKind::BeamformingRejected {
                        objective_change: change,
                        feasible,
                    },
                );
            }
        }
        let mid = Instant::now();
        if !options.freeze_positions {
            for m in 0..cfg.num_antennas {
                if let Some(c) =
                    runner.position_candidate(&s, m, SubproblemObjective::SumRate, t)?
                {
                    let (ok, change, feasible) = runner.accept(&s, &c);
                    if ok {
                        s = c;
                    } else {
                        runner.log(
                            t,
                            EventKind::PositionRejected {
                                antenna: m,
                                objective_change: change,
                                feasible,
                            },
                        );
                    }
                }
            }
        }
        extra.timing.push(IterationTiming {
            beamforming_s: (mid - start).as_secs_f64(),
            position_s: mid.elapsed().as_secs_f64(),
        });
        trace.push(s.objective());
        if options.keep_snapshots {
            extra.snapshots.push(runner.snapshot(&s)?);
        }
        if (s.objective() - prev) / prev.max(1e-12) < cfg.eps {
            status = RunStatus::Converged;
            break;
        }
    }
    Ok(runner.finish(s, trace, status, extra))
}

/// Outcome of one decoding order inside [`run_best_order`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderOutcome {
    pub order: DecodingOrder,
    pub objective: f64,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestOrderRecord {
    pub best: SolveRecord,
    pub candidates: Vec<OrderOutcome>,
}

/// Orders tried under the configured policy.
pub fn candidate_orders(
    cfg: &ScenarioConfig,
    geoms: &[ChannelGeometry],
    apv: &AntennaPositionVector,
) -> Result<Vec<DecodingOrder>> {
    if cfg.order_policy.enumerates(cfg.num_users) {
        enumerate_orders(cfg.num_users, cfg.enumeration_cap)
    } else {
        Ok(vec![heuristic_order(&channels(apv, geoms)?)])
    }
}

/// Run every candidate order and keep the best feasible record. Ties go to
/// the lexicographically smallest order. When no order is feasible the
/// first record is returned with status `Infeasible`.
pub fn run_best_order(
    cfg: &ScenarioConfig,
    geoms: &[ChannelGeometry],
    initial_apv: Option<&AntennaPositionVector>,
    options: &RunOptions,
) -> Result<BestOrderRecord> {
    let apv = match initial_apv {
        Some(a) => a.clone(),
        None => initial_grid(cfg)?,
    };
    let mut orders = candidate_orders(cfg, geoms, &apv)?;
    orders.sort_by(|a, b| a.sequence().cmp(b.sequence()));
    let mut best: Option<SolveRecord> = None;
    let mut first: Option<SolveRecord> = None;
    let mut candidates = Vec::with_capacity(orders.len());
    for order in &orders {
        let rec = run(cfg, geoms, order, Some(&apv), options)?;
        candidates.push(OrderOutcome {
            order: order.clone(),
            objective: rec.objective(),
            status: rec.status,
        });
        if rec.is_feasible()
            && best
                .as_ref()
                .map_or(true, |b| rec.objective() > b.objective() + 1e-9)
        {
            best = Some(rec);
        } else if first.is_none() {
            first = Some(rec);
        }
    }
    let best = best
        .or(first)
        .ok_or_else(|| Error::InvalidInput("no decoding order to try".into()))?;
    Ok(BestOrderRecord { best, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_geometry, PathAngles};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn cfg(m: usize, k: usize, l: usize) -> ScenarioConfig {
        ScenarioConfig {
            num_antennas: m,
            num_users: k,
            num_paths: l,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn initialization_splits_power_equally() {
        let c = cfg(4, 3, 5);
        let geoms = sample_geometry(&c, 1, 0);
        let (apv, bf, _) = initialize(&c, &geoms, &DecodingOrder::identity(3)).unwrap();
        assert_relative_eq!(bf.total_power(), c.power_mw(), max_relative = 1e-12);
        assert!(apv.is_feasible(c.region_side, c.min_distance, 1e-12));
        for w in &bf.vectors {
            assert_relative_eq!(w.norm_squared(), c.power_mw() / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn grid_that_does_not_fit_is_a_config_error() {
        let c = cfg(100, 2, 5);
        let geoms = sample_geometry(&c, 1, 0);
        assert!(matches!(
            initialize(&c, &geoms, &DecodingOrder::identity(2)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_user_single_path_reaches_closed_form() {
        let c = cfg(1, 1, 1);
        let g = ChannelGeometry::new(
            vec![PathAngles::new(0.7, 1.9)],
            vec![Complex64::new(3e-5, -1e-5)],
            70.0,
        )
        .unwrap();
        let rec = run(
            &c,
            &[g.clone()],
            &DecodingOrder::identity(1),
            None,
            &RunOptions::default(),
        )
        .unwrap();
        let expected = (1.0 + c.power_mw() * g.prv[0].norm_sqr() / c.noise_mw()).log2();
        assert_eq!(rec.status, RunStatus::Converged);
        assert!(rec.iterations <= 2);
        assert_relative_eq!(rec.objective(), expected, max_relative = 1e-6);
    }

    #[test]
    fn huge_eps_stops_after_one_iteration() {
        let c = ScenarioConfig {
            eps: 10.0,
            ..cfg(2, 2, 3)
        };
        let geoms = sample_geometry(&c, 3, 0);
        let rec = run_best_order(&c, &geoms, None, &RunOptions::default())
            .unwrap()
            .best;
        if rec.is_feasible() {
            assert_eq!(rec.iterations, 1);
            assert_eq!(rec.objective_trace.len(), 2);
        }
    }
}

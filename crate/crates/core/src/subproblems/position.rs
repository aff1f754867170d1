use super::{
    add_rate_block, inverse_tangent, normalize_slack, SdpStatus, SubproblemObjective,
    SubproblemSettings,
};
use crate::channel::{AntennaPosition, AntennaPositionVector, ChannelGeometry};
use crate::conic::{conic_solve, AffineExpr, ConicProblem, ConicSettings, ConicStatus, Var};
use crate::error::{Error, Result};
use crate::noma::{BeamformerSet, DecodingOrder, SlackPoint};
use crate::surrogate::{expansion_table, gamma_lb, upsilon_ub, BoundSide, QuadraticSurrogate};

#[derive(Debug, Clone, Copy)]
pub struct PositionInput<'a> {
    /// Index of the antenna being moved.
    pub m: usize,
    pub apv: &'a AntennaPositionVector,
    pub geoms: &'a [ChannelGeometry],
    pub bf: &'a BeamformerSet,
    pub order: &'a DecodingOrder,
    pub noise: &'a [f64],
    pub rate_min: f64,
    pub region_side: f64,
    pub min_distance: f64,
    /// Expansion point `(alpha^t, beta^t)` in physical units.
    pub expansion: &'a SlackPoint,
}

#[derive(Debug, Clone)]
pub struct PositionSolution {
    pub status: SdpStatus,
    pub reduced_accuracy: bool,
    pub position: AntennaPosition,
    pub rates: Vec<Vec<Option<f64>>>,
    pub slack: SlackPoint,
    pub objective: f64,
    pub margin: Option<f64>,
}

struct Offset {
    x: Var,
    y: Var,
    center: AntennaPosition,
}

impl Offset {
    fn dx(&self) -> AffineExpr {
        AffineExpr::var(self.x).plus(-self.center.x)
    }
    fn dy(&self) -> AffineExpr {
        AffineExpr::var(self.y).plus(-self.center.y)
    }
    /// First-order part `v + g^T d` of a surrogate, scaled.
    fn linear(&self, q: &QuadraticSurrogate, scale: f64) -> AffineExpr {
        AffineExpr::constant(scale * q.value_at_center)
            .add_expr(&self.dx(), scale * q.gradient[0])
            .add_expr(&self.dy(), scale * q.gradient[1])
    }
}

/// `r - (c/2) ||d||^2 >= 0`, as `||(r - 1, sqrt(2c) d)|| <= r + 1`.
fn quadratic_slack(p: &mut ConicProblem, r: AffineExpr, curvature: f64, d: &Offset) {
    if curvature <= 0.0 {
        p.nonneg(r);
        return;
    }
    let s = (2.0 * curvature).sqrt();
    p.soc(
        r.clone().plus(1.0),
        vec![r.plus(-1.0), d.dx().scaled(s), d.dy().scaled(s)],
    );
}

/// Solve the position program for antenna `m` with all other antennas and
/// the beamformers fixed. Channel gains enter through their quadratic
/// surrogates around the current position.
pub fn solve_position(
    input: &PositionInput<'_>,
    objective: SubproblemObjective,
    settings: &SubproblemSettings,
) -> Result<PositionSolution> {
    let k_users = input.order.num_users();
    if input.m >= input.apv.len() {
        return Err(Error::InvalidInput(format!(
            "antenna {} out of {}",
            input.m,
            input.apv.len()
        )));
    }
    if input.geoms.len() != k_users
        || input.bf.vectors.len() != k_users
        || input.noise.len() != k_users
    {
        return Err(Error::InvalidInput("user counts disagree".into()));
    }
    let center = input.apv.positions[input.m];
    let table = expansion_table(input.m, input.apv, input.geoms, input.bf);
    let expansion = normalize_slack(input.expansion, input.noise);

    let mut p = ConicProblem::new();
    let offset = Offset {
        x: p.add_var("x"),
        y: p.add_var("y"),
        center,
    };
    let block = add_rate_block(
        &mut p,
        input.order,
        &expansion,
        input.rate_min,
        objective,
        settings.sic_guard,
    )?;

    for (k, i) in input.order.pairs() {
        let scale = 1.0 / input.noise[i];
        let a = block.alpha[k][i].unwrap();
        let b = block.beta[k][i].unwrap();
        let (at, bt) = (block.alpha_t[k][i], block.beta_t[k][i]);
        let lb = gamma_lb(&table[k][i], &center);
        let ub = upsilon_ub(
            input.order.later(k).map(|j| &table[j][i]),
            input.noise[i],
            &center,
        );
        // s = alpha_t * Gamma, so a s >= 1 and s <= alpha_t Gamma^lb.
        let s = p.add_var(format!("s[{k},{i}]"));
        p.hyperbolic(AffineExpr::var(a), AffineExpr::var(s));
        quadratic_slack(
            &mut p,
            offset.linear(&lb, scale * at).term(s, -1.0),
            scale * at * lb.curvature,
            &offset,
        );
        quadratic_slack(
            &mut p,
            offset.linear(&ub, scale / bt).scaled(-1.0).term(b, 1.0),
            scale / bt * ub.curvature,
            &offset,
        );

        if let (true, Some((sa, sb))) = (k == i, block.sic_pair[k]) {
            let gamma_ub = QuadraticSurrogate {
                side: BoundSide::Upper,
                ..lb
            };
            let upsilon_lb = QuadraticSurrogate {
                side: BoundSide::Lower,
                ..ub
            };
            quadratic_slack(
                &mut p,
                inverse_tangent(sa).add_expr(&offset.linear(&gamma_ub, scale * at), -1.0),
                scale * at * gamma_ub.curvature,
                &offset,
            );
            quadratic_slack(
                &mut p,
                offset.linear(&upsilon_lb, scale / bt).term(sb, -1.0),
                scale / bt * upsilon_lb.curvature,
                &offset,
            );
        }
    }

    for (n, u_n) in input.apv.positions.iter().enumerate() {
        if n == input.m {
            continue;
        }
        let ex = center.x - u_n.x;
        let ey = center.y - u_n.y;
        p.nonneg(
            AffineExpr::constant(ex * ex + ey * ey - input.min_distance * input.min_distance)
                .add_expr(&offset.dx(), 2.0 * ex)
                .add_expr(&offset.dy(), 2.0 * ey),
        );
    }
    for v in [offset.x, offset.y] {
        p.nonneg(AffineExpr::var(v));
        p.nonneg(AffineExpr::constant(input.region_side).term(v, -1.0));
    }

    let sol = conic_solve(
        &p,
        &ConicSettings {
            tol: settings.solver_tol,
            ..ConicSettings::default()
        },
    );
    let status = match sol.status {
        ConicStatus::Optimal => SdpStatus::Optimal,
        ConicStatus::Infeasible => SdpStatus::Infeasible,
        ConicStatus::Unbounded | ConicStatus::NumericalFailure => SdpStatus::NumericalFailure,
    };
    if status != SdpStatus::Optimal {
        return Ok(PositionSolution {
            status,
            reduced_accuracy: false,
            position: center,
            rates: vec![vec![None; k_users]; k_users],
            slack: input.expansion.clone(),
            objective: f64::NAN,
            margin: None,
        });
    }
    let x = &sol.x;
    Ok(PositionSolution {
        status,
        reduced_accuracy: sol.reduced_accuracy,
        position: AntennaPosition::new(x[offset.x.0], x[offset.y.0]),
        rates: block.rates(x),
        slack: block.slack(x, input.noise),
        objective: block.sum_rate(x),
        margin: block.margin.map(|t| x[t.0]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{channels, PathAngles};
    use crate::noma::{rates, sic_feasible, slack_from_primal};
    use nalgebra::DVector;
    use num_complex::Complex64;

    fn instance() -> (
        AntennaPositionVector,
        Vec<ChannelGeometry>,
        BeamformerSet,
        DecodingOrder,
        Vec<f64>,
    ) {
        let apv = AntennaPositionVector::centered_grid(2, 0.5, 3.0).unwrap();
        let g0 = ChannelGeometry::new(
            vec![
                PathAngles::new(0.3, 1.1),
                PathAngles::new(1.2, 2.0),
                PathAngles::new(2.5, 0.4),
            ],
            vec![
                Complex64::new(1.0, 0.2),
                Complex64::new(-0.4, 0.6),
                Complex64::new(0.3, -0.5),
            ],
            60.0,
        )
        .unwrap();
        let g1 = ChannelGeometry::new(
            g0.paths.clone(),
            vec![
                Complex64::new(0.4, 0.1),
                Complex64::new(-0.15, 0.25),
                Complex64::new(0.1, -0.2),
            ],
            80.0,
        )
        .unwrap();
        let geoms = vec![g0, g1];
        let ch = channels(&apv, &geoms).unwrap();
        let bf = BeamformerSet::new(
            ch.iter()
                .map(|h| h.scale(0.5f64.sqrt() / h.norm()))
                .collect::<Vec<DVector<_>>>(),
        );
        let noise = vec![0.05, 0.05];
        let order = [vec![0, 1], vec![1, 0]]
            .into_iter()
            .map(|s| DecodingOrder::new(s).unwrap())
            .find(|o| sic_feasible(&rates(&ch, &bf, o, &noise), o, 0.0, 0.0).is_feasible())
            .expect("some order is feasible at MRT");
        (apv, geoms, bf, order, noise)
    }

    #[test]
    fn move_stays_feasible_and_does_not_lose_rate() {
        let (apv, geoms, bf, order, noise) = instance();
        let ch = channels(&apv, &geoms).unwrap();
        let before = rates(&ch, &bf, &order, &noise);
        let sp = slack_from_primal(&ch, &bf, &order, &noise).unwrap();
        let input = PositionInput {
            m: 0,
            apv: &apv,
            geoms: &geoms,
            bf: &bf,
            order: &order,
            noise: &noise,
            rate_min: 0.0,
            region_side: 3.0,
            min_distance: 0.5,
            expansion: &sp,
        };
        let sol = solve_position(
            &input,
            SubproblemObjective::SumRate,
            &SubproblemSettings::default(),
        )
        .unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.position.in_region(3.0, 1e-7));
        assert!(sol.position.distance(&apv.positions[1]) >= 0.5 - 1e-7);
        let mut moved = apv.clone();
        moved.positions[0] = sol.position;
        let after = rates(&channels(&moved, &geoms).unwrap(), &bf, &order, &noise);
        assert!(after.sum_rate() >= sol.objective - 1e-6);
        assert!(sol.objective >= before.sum_rate() - 1e-6);
    }

    #[test]
    fn bad_antenna_index_is_rejected() {
        let (apv, geoms, bf, order, noise) = instance();
        let ch = channels(&apv, &geoms).unwrap();
        let sp = slack_from_primal(&ch, &bf, &order, &noise).unwrap();
        let input = PositionInput {
            m: 5,
            apv: &apv,
            geoms: &geoms,
            bf: &bf,
            order: &order,
            noise: &noise,
            rate_min: 0.0,
            region_side: 3.0,
            min_distance: 0.5,
            expansion: &sp,
        };
        assert!(solve_position(
            &input,
            SubproblemObjective::SumRate,
            &SubproblemSettings::default()
        )
        .is_err());
    }
}

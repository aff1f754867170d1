use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    add_rate_block, inverse_tangent, normalize_slack, SubproblemObjective, SubproblemSettings,
};
use crate::conic::{conic_solve, AffineExpr, ConicProblem, ConicSettings, ConicStatus, Var};
use crate::error::{Error, Result};
use crate::noma::{Channel, DecodingOrder, SlackPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy)]
pub struct BeamformingInput<'a> {
    pub channels: &'a [Channel],
    pub order: &'a DecodingOrder,
    /// Per-user noise power (mW).
    pub noise: &'a [f64],
    /// Transmit power budget (mW).
    pub power: f64,
    pub rate_min: f64,
    /// Expansion point `(alpha^t, beta^t)` in physical units.
    pub expansion: &'a SlackPoint,
}

/// Solution of the relaxed beamforming SDP. `w` holds the covariance
/// matrices in mW; `rates` are the solver's rate variables.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub reduced_accuracy: bool,
    pub w: Vec<DMatrix<Complex64>>,
    pub rates: Vec<Vec<Option<f64>>>,
    pub slack: SlackPoint,
    pub objective: f64,
    pub margin: Option<f64>,
    pub solver_iterations: u32,
}

impl SdpSolution {
    fn empty(status: SdpStatus, k: usize, m: usize) -> Self {
        Self {
            status,
            reduced_accuracy: false,
            w: vec![DMatrix::zeros(m, m); k],
            rates: vec![vec![None; k]; k],
            slack: SlackPoint {
                alpha: vec![vec![f64::INFINITY; k]; k],
                beta: vec![vec![f64::INFINITY; k]; k],
            },
            objective: 0.0,
            margin: None,
            solver_iterations: 0,
        }
    }
}

/// Real variables of one Hermitian `M x M` matrix.
struct HermitianVars {
    diag: Vec<Var>,
    re: Vec<Vec<Option<Var>>>,
    im: Vec<Vec<Option<Var>>>,
}

impl HermitianVars {
    fn new(p: &mut ConicProblem, k: usize, m: usize) -> Self {
        let diag = (0..m)
            .map(|a| p.add_var(format!("W{k}[{a},{a}]")))
            .collect();
        let mut re = vec![vec![None; m]; m];
        let mut im = vec![vec![None; m]; m];
        for a in 0..m {
            for b in a + 1..m {
                re[a][b] = Some(p.add_var(format!("W{k}re[{a},{b}]")));
                im[a][b] = Some(p.add_var(format!("W{k}im[{a},{b}]")));
            }
        }
        Self { diag, re, im }
    }

    fn real(&self, a: usize, b: usize) -> AffineExpr {
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => AffineExpr::var(self.diag[a]),
            std::cmp::Ordering::Less => AffineExpr::var(self.re[a][b].unwrap()),
            std::cmp::Ordering::Greater => AffineExpr::var(self.re[b][a].unwrap()),
        }
    }

    fn imag(&self, a: usize, b: usize) -> AffineExpr {
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => AffineExpr::constant(0.0),
            std::cmp::Ordering::Less => AffineExpr::var(self.im[a][b].unwrap()),
            std::cmp::Ordering::Greater => AffineExpr::var(self.im[b][a].unwrap()).scaled(-1.0),
        }
    }

    /// `[[X, -Y], [Y, X]]` entry, for `row <= col`.
    fn lifted(&self, m: usize, row: usize, col: usize) -> AffineExpr {
        match (row < m, col < m) {
            (true, true) => self.real(row, col),
            (false, false) => self.real(row - m, col - m),
            (true, false) => self.imag(row, col - m).scaled(-1.0),
            (false, true) => unreachable!("lower triangle"),
        }
    }

    fn trace(&self) -> AffineExpr {
        self.diag
            .iter()
            .fold(AffineExpr::constant(0.0), |e, &v| e.term(v, 1.0))
    }

    /// `scale * h^H W h`.
    fn quad_form(&self, h: &Channel, scale: f64) -> AffineExpr {
        let m = h.len();
        let mut e = AffineExpr::constant(0.0);
        for a in 0..m {
            e = e.term(self.diag[a], scale * h[a].norm_sqr());
            for b in a + 1..m {
                let hab = h[a] * h[b].conj();
                e = e.term(self.re[a][b].unwrap(), 2.0 * scale * hab.re);
                e = e.term(self.im[a][b].unwrap(), 2.0 * scale * hab.im);
            }
        }
        e
    }

    fn value(&self, x: &[f64], scale: f64) -> DMatrix<Complex64> {
        let m = self.diag.len();
        DMatrix::from_fn(m, m, |a, b| {
            let re = self.real(a, b).eval(x);
            let im = self.imag(a, b).eval(x);
            Complex64::new(re, im) * scale
        })
    }
}

/// Solve the relaxed beamforming problem at fixed positions.
///
/// Covariances are scaled by the power budget, so the solver sees
/// `Tr(sum W) <= 1` and unit noise.
pub fn solve_beamforming(
    input: &BeamformingInput<'_>,
    objective: SubproblemObjective,
    settings: &SubproblemSettings,
) -> Result<SdpSolution> {
    let k_users = input.order.num_users();
    if input.channels.len() != k_users || input.noise.len() != k_users {
        return Err(Error::InvalidInput(format!(
            "{} channels and {} noise powers for {} users",
            input.channels.len(),
            input.noise.len(),
            k_users
        )));
    }
    let m = input.channels.first().map_or(0, |h| h.len());
    if input.power <= 0.0 {
        let status = if input.rate_min <= 0.0 {
            SdpStatus::Optimal
        } else {
            SdpStatus::Infeasible
        };
        let mut sol = SdpSolution::empty(status, k_users, m);
        if status == SdpStatus::Optimal {
            sol.rates = (0..k_users)
                .map(|k| {
                    (0..k_users)
                        .map(|i| input.order.needs_pair(k, i).then_some(0.0))
                        .collect()
                })
                .collect();
        }
        return Ok(sol);
    }

    let expansion = normalize_slack(input.expansion, input.noise);
    let mut p = ConicProblem::new();
    let w: Vec<HermitianVars> = (0..k_users)
        .map(|k| HermitianVars::new(&mut p, k, m))
        .collect();
    let block = add_rate_block(
        &mut p,
        input.order,
        &expansion,
        input.rate_min,
        objective,
        settings.sic_guard,
    )?;
    let gain =
        |k: usize, i: usize| w[k].quad_form(&input.channels[i], input.power / input.noise[i]);
    let interference = |k: usize, i: usize| {
        input
            .order
            .later(k)
            .fold(AffineExpr::constant(1.0), |e, j| {
                e.add_expr(&gain(j, i), 1.0)
            })
    };

    for (k, i) in input.order.pairs() {
        let a = block.alpha[k][i].unwrap();
        let b = block.beta[k][i].unwrap();
        let (at, bt) = (block.alpha_t[k][i], block.beta_t[k][i]);
        p.hyperbolic(AffineExpr::var(a), gain(k, i).scaled(at));
        p.nonneg(AffineExpr::var(b).add_expr(&interference(k, i), -1.0 / bt));
    }
    for k in 0..k_users {
        if let Some((sa, sb)) = block.sic_pair[k] {
            let (at, bt) = (block.alpha_t[k][k], block.beta_t[k][k]);
            p.nonneg(inverse_tangent(sa).add_expr(&gain(k, k), -at));
            p.nonneg(interference(k, k).scaled(1.0 / bt).term(sb, -1.0));
        }
    }
    let total = w.iter().fold(AffineExpr::constant(1.0), |e, wk| {
        e.add_expr(&wk.trace(), -1.0)
    });
    p.nonneg(total);
    for wk in &w {
        p.psd(2 * m, |r, c| wk.lifted(m, r, c));
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
        let mut out = SdpSolution::empty(status, k_users, m);
        out.solver_iterations = sol.iterations;
        return Ok(out);
    }
    let x = &sol.x;
    Ok(SdpSolution {
        status,
        reduced_accuracy: sol.reduced_accuracy,
        w: w.iter().map(|wk| wk.value(x, input.power)).collect(),
        rates: block.rates(x),
        slack: block.slack(x, input.noise),
        objective: block.sum_rate(x),
        margin: block.margin.map(|t| x[t.0]),
        solver_iterations: sol.iterations,
    })
}

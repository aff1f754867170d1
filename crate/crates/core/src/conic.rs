//! Solver-facing canonical conic form.
//!
//! A [`ConicProblem`] minimizes `c^T x` subject to a list of blocks, each
//! requiring a vector of affine expressions of `x` to lie in a cone. The
//! interior-point engine behind [`conic_solve`] is Clarabel; callers only see
//! this module's types.
//!
//! Text dump format (see [`ConicProblem::dump`]):
//!
//! ```text
//! conic-problem v1
//! vars <n>
//! rows <m>
//! cones <count>
//! cone <kind> <dim>          # kind: zero | nonneg | soc | exp | psd (dim = matrix order)
//! c <j> <value>              # nonzero objective coefficients
//! A <i> <j> <value>          # row i of the slack is b_i - sum_j A_ij x_j
//! b <i> <value>
//! ```

use std::fmt::Write as _;
use std::sync::Once;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

/// Index of a scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub usize);

/// `constant + sum coef * x_var`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: Var) -> Self {
        Self {
            terms: vec![(v.0, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, v: Var, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((v.0, coef));
        }
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add_expr(mut self, other: &AffineExpr, scale: f64) -> Self {
        self.constant += scale * other.constant;
        self.terms
            .extend(other.terms.iter().map(|&(j, c)| (j, c * scale)));
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.constant *= s;
        for t in &mut self.terms {
            t.1 *= s;
        }
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    /// All entries zero.
    Zero(usize),
    /// All entries nonnegative.
    NonNeg(usize),
    /// `(t, z)` with `||z|| <= t`; the argument is the full length.
    SecondOrder(usize),
    /// `(a, b, c)` with `b exp(a / b) <= c`, `b > 0`.
    Exponential,
    /// Scaled upper-triangular (column-major) vectorization of an order-`n`
    /// positive-semidefinite matrix.
    Psd(usize),
}

impl Cone {
    pub fn rows(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::NonNeg(n) | Cone::SecondOrder(n) => n,
            Cone::Exponential => 3,
            Cone::Psd(n) => n * (n + 1) / 2,
        }
    }

    fn tag(&self) -> (&'static str, usize) {
        match *self {
            Cone::Zero(n) => ("zero", n),
            Cone::NonNeg(n) => ("nonneg", n),
            Cone::SecondOrder(n) => ("soc", n),
            Cone::Exponential => ("exp", 3),
            Cone::Psd(n) => ("psd", n),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConicProblem {
    num_vars: usize,
    names: Vec<String>,
    objective: Vec<f64>,
    blocks: Vec<(Cone, Vec<AffineExpr>)>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> Var {
        self.names.push(name.into());
        self.objective.push(0.0);
        self.num_vars += 1;
        Var(self.num_vars - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn var_name(&self, v: Var) -> &str {
        &self.names[v.0]
    }

    /// Add `coef * v` to the minimized objective.
    pub fn minimize_term(&mut self, v: Var, coef: f64) {
        self.objective[v.0] += coef;
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    pub fn add(&mut self, cone: Cone, rows: Vec<AffineExpr>) {
        assert_eq!(
            cone.rows(),
            rows.len(),
            "cone {cone:?} needs {} rows",
            cone.rows()
        );
        self.blocks.push((cone, rows));
    }

    pub fn nonneg(&mut self, e: AffineExpr) {
        self.add(Cone::NonNeg(1), vec![e]);
    }

    pub fn equal(&mut self, e: AffineExpr) {
        self.add(Cone::Zero(1), vec![e]);
    }

    /// `||z|| <= t`.
    pub fn soc(&mut self, t: AffineExpr, z: Vec<AffineExpr>) {
        let mut rows = Vec::with_capacity(z.len() + 1);
        rows.push(t);
        rows.extend(z);
        self.add(Cone::SecondOrder(rows.len()), rows);
    }

    /// `exp(a) <= c`.
    pub fn exp_le(&mut self, a: AffineExpr, c: AffineExpr) {
        self.add(Cone::Exponential, vec![a, AffineExpr::constant(1.0), c]);
    }

    /// `p q >= 1` with `p, q >= 0`, as `||(p - q, 2)|| <= p + q`.
    pub fn hyperbolic(&mut self, p: AffineExpr, q: AffineExpr) {
        let sum = p.clone().add_expr(&q, 1.0);
        let diff = p.add_expr(&q, -1.0);
        self.soc(sum, vec![diff, AffineExpr::constant(2.0)]);
    }

    /// The symmetric matrix with upper-triangle entries `entry(row, col)`
    /// (row <= col) is positive semidefinite.
    pub fn psd(&mut self, n: usize, entry: impl Fn(usize, usize) -> AffineExpr) {
        let mut rows = Vec::with_capacity(n * (n + 1) / 2);
        for col in 0..n {
            for row in 0..=col {
                let e = entry(row, col);
                rows.push(if row == col {
                    e
                } else {
                    e.scaled(std::f64::consts::SQRT_2)
                });
            }
        }
        self.add(Cone::Psd(n), rows);
    }

    pub fn num_rows(&self) -> usize {
        self.blocks.iter().map(|(c, _)| c.rows()).sum()
    }

    /// Canonical `(A, b)` triplets with slack `s = b - A x`.
    fn triplets(&self) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
        let mut a = Vec::new();
        let mut b = Vec::with_capacity(self.num_rows());
        for (_, rows) in &self.blocks {
            for e in rows {
                let i = b.len();
                b.push(e.constant);
                for &(j, c) in &e.terms {
                    a.push((i, j, -c));
                }
            }
        }
        (a, b)
    }

    /// Render the documented text format.
    pub fn dump(&self) -> String {
        let (a, b) = self.triplets();
        let mut out = String::new();
        let _ = writeln!(out, "conic-problem v1");
        let _ = writeln!(out, "vars {}", self.num_vars);
        let _ = writeln!(out, "rows {}", b.len());
        let _ = writeln!(out, "cones {}", self.blocks.len());
        for (cone, _) in &self.blocks {
            let (kind, dim) = cone.tag();
            let _ = writeln!(out, "cone {kind} {dim}");
        }
        for (j, c) in self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
        {
            let _ = writeln!(out, "c {j} {c:e}");
        }
        for (i, j, v) in a {
            let _ = writeln!(out, "A {i} {j} {v:e}");
        }
        for (i, v) in b.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            let _ = writeln!(out, "b {i} {v:e}");
        }
        out
    }

    /// Largest violation of the cone constraints at `x` (0 if feasible).
    /// PSD blocks report the negated smallest eigenvalue.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (cone, rows) in &self.blocks {
            let v: Vec<f64> = rows.iter().map(|e| e.eval(x)).collect();
            let viol = match *cone {
                Cone::Zero(_) => v.iter().fold(0.0f64, |a, x| a.max(x.abs())),
                Cone::NonNeg(_) => v.iter().fold(0.0f64, |a, x| a.max(-x)),
                Cone::SecondOrder(_) => {
                    (v[1..].iter().map(|z| z * z).sum::<f64>().sqrt() - v[0]).max(0.0)
                }
                Cone::Exponential => {
                    if v[1] > 0.0 {
                        (v[1] * (v[0] / v[1]).exp() - v[2]).max(0.0)
                    } else {
                        (-v[1]).max(0.0)
                    }
                }
                Cone::Psd(n) => {
                    let mut m = nalgebra::DMatrix::zeros(n, n);
                    let mut idx = 0;
                    for col in 0..n {
                        for row in 0..=col {
                            let val = if row == col {
                                v[idx]
                            } else {
                                v[idx] / std::f64::consts::SQRT_2
                            };
                            m[(row, col)] = val;
                            m[(col, row)] = val;
                            idx += 1;
                        }
                    }
                    (-m.symmetric_eigenvalues().min()).max(0.0)
                }
            };
            worst = worst.max(viol);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: ConicStatus,
    /// Optimal at the requested accuracy, or only at reduced accuracy.
    pub reduced_accuracy: bool,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct ConicSettings {
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for ConicSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

extern "C" {
    fn openblas_set_num_threads(num_threads: std::os::raw::c_int);
}

static BLAS_INIT: Once = Once::new();

fn single_threaded_blas() {
    // Trials already run in parallel; BLAS on tiny matrices must not spawn threads.
    BLAS_INIT.call_once(|| unsafe { openblas_set_num_threads(1) });
}

/// Solve with the embedded interior-point engine. Deterministic for identical input.
pub fn conic_solve(p: &ConicProblem, settings: &ConicSettings) -> ConicSolution {
    single_threaded_blas();
    let n = p.num_vars;
    let (trip, b) = p.triplets();
    let m = b.len();
    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    for (i, j, v) in trip {
        rows.push(i);
        cols.push(j);
        vals.push(v);
    }
    let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
    let pmat = CscMatrix::<f64>::zeros((n, n));
    let cones: Vec<SupportedConeT<f64>> = p
        .blocks
        .iter()
        .map(|(c, _)| match *c {
            Cone::Zero(d) => SupportedConeT::ZeroConeT(d),
            Cone::NonNeg(d) => SupportedConeT::NonnegativeConeT(d),
            Cone::SecondOrder(d) => SupportedConeT::SecondOrderConeT(d),
            Cone::Exponential => SupportedConeT::ExponentialConeT(),
            Cone::Psd(d) => SupportedConeT::PSDTriangleConeT(d),
        })
        .collect();
    let cfg = DefaultSettingsBuilder::default()
        .verbose(std::env::var_os("MA_NOMA_SOLVER_VERBOSE").is_some())
        .max_iter(settings.max_iter)
        .tol_gap_abs(settings.tol)
        .tol_gap_rel(settings.tol)
        .tol_feas(settings.tol)
        .build()
        .expect("valid solver settings");
    let failure = |iterations| ConicSolution {
        status: ConicStatus::NumericalFailure,
        reduced_accuracy: false,
        x: vec![f64::NAN; n],
        objective: f64::NAN,
        iterations,
    };
    let mut solver = match DefaultSolver::new(&pmat, &p.objective, &a, &b, &cones, cfg) {
        Ok(s) => s,
        Err(_) => return failure(0),
    };
    solver.solve();
    let sol = &solver.solution;
    let (status, reduced) = match sol.status {
        SolverStatus::Solved => (ConicStatus::Optimal, false),
        SolverStatus::AlmostSolved => (ConicStatus::Optimal, true),
        SolverStatus::PrimalInfeasible => (ConicStatus::Infeasible, false),
        SolverStatus::AlmostPrimalInfeasible => (ConicStatus::Infeasible, true),
        SolverStatus::DualInfeasible => (ConicStatus::Unbounded, false),
        SolverStatus::AlmostDualInfeasible => (ConicStatus::Unbounded, true),
        _ => return failure(sol.iterations),
    };
    ConicSolution {
        status,
        reduced_accuracy: reduced,
        x: sol.x.clone(),
        objective: p.objective_value(&sol.x),
        iterations: sol.iterations,
    }
}

//! Successive-convex-approximation machinery.
//!
//! * [`theta_bound`]: first-order lower bound of `log2(1 + 1/(alpha beta))`.
//! * [`GammaExpansionTerms`]: `Gamma_{k,i}(u_m) = |h_i^H w_k|^2` as a function
//!   of a single antenna position, written as a sum of cosines of affine phase
//!   functions. Value, gradient and Hessian follow from that form in closed
//!   form, and replacing every cosine/sine by its maximum modulus gives a
//!   curvature bound valid for every position.
//! * [`QuadraticSurrogate`]: concave lower / convex upper quadratic bounds
//!   built from a value, a gradient and a global curvature bound.
//! * [`distance_lb`]: tangent lower bound of a squared distance.

use std::f64::consts::{LOG2_E, PI};

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{
    propagation_difference, AntennaPosition, AntennaPositionVector, ChannelGeometry,
};
use crate::error::{Error, Result};
use crate::noma::{slack_rate, BeamformerSet, DecodingOrder};

const TWO_PI: f64 = 2.0 * PI;

/// Affine minorant of `log2(1 + 1/(alpha beta))` around `(alpha_t, beta_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaLinearization {
    pub alpha_t: f64,
    pub beta_t: f64,
    /// Function value at the expansion point.
    pub value: f64,
    /// Derivative with respect to alpha (negative).
    pub slope_alpha: f64,
    /// Derivative with respect to beta (negative).
    pub slope_beta: f64,
}

impl ThetaLinearization {
    pub fn new(alpha_t: f64, beta_t: f64) -> Result<Self> {
        if !(alpha_t > 0.0 && beta_t > 0.0) || !alpha_t.is_finite() || !beta_t.is_finite() {
            return Err(Error::Contract(format!(
                "expansion point must be positive and finite, got ({alpha_t}, {beta_t})"
            )));
        }
        Ok(Self {
            alpha_t,
            beta_t,
            value: slack_rate(alpha_t, beta_t),
            slope_alpha: -LOG2_E / (alpha_t + alpha_t * alpha_t * beta_t),
            slope_beta: -LOG2_E / (beta_t + beta_t * beta_t * alpha_t),
        })
    }

    pub fn eval(&self, alpha: f64, beta: f64) -> f64 {
        self.value
            + self.slope_alpha * (alpha - self.alpha_t)
            + self.slope_beta * (beta - self.beta_t)
    }
}

/// Evaluate the affine bound at `(alpha, beta)` for the expansion point
/// `(alpha_t, beta_t)`. All four arguments must be positive.
pub fn theta_bound(alpha: f64, beta: f64, alpha_t: f64, beta_t: f64) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::Contract(format!(
            "theta bound needs positive arguments, got ({alpha}, {beta})"
        )));
    }
    Ok(ThetaLinearization::new(alpha_t, beta_t)?.eval(alpha, beta))
}

/// Expansion of `Gamma_{k,i}` in the position of antenna `m`, all other
/// antennas and the beamformer `w_k` held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaExpansionTerms {
    /// `|w_{k,m}|^2 f_i f_i^H`.
    pub b: DMatrix<Complex64>,
    /// `2 conj(w_{k,m}) zeta f_i`.
    pub c: DVector<Complex64>,
    /// Contribution of the other antennas, `sum_{n != m} f_i^H g_i(u_n) w_{k,n}`.
    pub zeta: Complex64,
    pub residual_power: f64,
    /// Per-path `(sin(theta)cos(phi), cos(theta))` of user `i`.
    directions: Vec<(f64, f64)>,
}

impl GammaExpansionTerms {
    pub fn new(
        m: usize,
        apv: &AntennaPositionVector,
        geom_i: &ChannelGeometry,
        w_k: &DVector<Complex64>,
    ) -> Self {
        let f = &geom_i.prv;
        let l = f.len();
        let mut zeta = Complex64::new(0.0, 0.0);
        for (n, u) in apv.positions.iter().enumerate() {
            if n == m {
                continue;
            }
            // f^H g(u_n)
            let fhg: Complex64 = geom_i
                .paths
                .iter()
                .zip(f)
                .map(|(p, fl)| {
                    fl.conj() * Complex64::from_polar(1.0, TWO_PI * propagation_difference(u, p))
                })
                .sum();
            zeta += fhg * w_k[n];
        }
        let wm = w_k[m];
        let b = DMatrix::from_fn(l, l, |a, b| f[a] * f[b].conj() * wm.norm_sqr());
        let c = DVector::from_fn(l, |a, _| 2.0 * wm.conj() * zeta * f[a]);
        Self {
            b,
            c,
            zeta,
            residual_power: zeta.norm_sqr(),
            directions: geom_i.paths.iter().map(|p| p.direction()).collect(),
        }
    }

    fn num_paths(&self) -> usize {
        self.directions.len()
    }

    fn rho(&self, u: &AntennaPosition, l: usize) -> f64 {
        let (dx, dy) = self.directions[l];
        u.x * dx + u.y * dy
    }

    /// `arg(B_{l1,l2}) + 2 pi (rho_{l2}(u) - rho_{l1}(u))`.
    fn omega(&self, u: &AntennaPosition, l1: usize, l2: usize) -> f64 {
        self.b[(l1, l2)].arg() + TWO_PI * (self.rho(u, l2) - self.rho(u, l1))
    }

    /// `-arg(c_l) + 2 pi rho_l(u)`.
    fn kappa(&self, u: &AntennaPosition, l: usize) -> f64 {
        -self.c[l].arg() + TWO_PI * self.rho(u, l)
    }

    /// Visit every cosine term with its magnitude, phase and the two
    /// components of its phase gradient divided by `2 pi`.
    fn for_each_term(&self, u: &AntennaPosition, mut visit: impl FnMut(f64, f64, f64, f64)) {
        let l = self.num_paths();
        for l1 in 0..l {
            for l2 in 0..l {
                let mag = self.b[(l1, l2)].norm();
                if mag == 0.0 {
                    continue;
                }
                let (ax, ay) = self.directions[l1];
                let (bx, by) = self.directions[l2];
                visit(mag, self.omega(u, l1, l2), bx - ax, by - ay);
            }
        }
        for l3 in 0..l {
            let mag = self.c[l3].norm();
            if mag == 0.0 {
                continue;
            }
            let (dx, dy) = self.directions[l3];
            visit(mag, self.kappa(u, l3), dx, dy);
        }
    }

    pub fn value(&self, u: &AntennaPosition) -> f64 {
        let mut acc = self.residual_power;
        self.for_each_term(u, |mag, phase, _, _| acc += mag * phase.cos());
        acc
    }

    pub fn gradient(&self, u: &AntennaPosition) -> Vector2<f64> {
        let mut g = Vector2::zeros();
        self.for_each_term(u, |mag, phase, gx, gy| {
            let s = -TWO_PI * mag * phase.sin();
            g[0] += s * gx;
            g[1] += s * gy;
        });
        g
    }

    pub fn hessian(&self, u: &AntennaPosition) -> Matrix2<f64> {
        let mut h = Matrix2::zeros();
        self.for_each_term(u, |mag, phase, gx, gy| {
            let s = -TWO_PI * TWO_PI * mag * phase.cos();
            h[(0, 0)] += s * gx * gx;
            h[(0, 1)] += s * gx * gy;
            h[(1, 1)] += s * gy * gy;
        });
        h[(1, 0)] = h[(0, 1)];
        h
    }

    /// Frobenius norm of the Hessian at `u` (diagnostic only; not a global bound).
    pub fn hessian_frobenius(&self, u: &AntennaPosition) -> f64 {
        self.hessian(u).norm()
    }

    /// Position-independent curvature bound: the Frobenius norm of the
    /// entry-wise sums of term magnitudes. Dominates the Hessian's spectral
    /// norm everywhere.
    pub fn curvature_bound(&self) -> f64 {
        let mut bxx = 0.0;
        let mut bxy = 0.0;
        let mut byy = 0.0;
        self.for_each_term(&AntennaPosition::default(), |mag, _, gx, gy| {
            let s = TWO_PI * TWO_PI * mag;
            bxx += s * gx * gx;
            bxy += s * (gx * gy).abs();
            byy += s * gy * gy;
        });
        (bxx * bxx + 2.0 * bxy * bxy + byy * byy).sqrt()
    }
}

/// `Gamma_{k,i}(u)` with antenna `m` moved to `u`.
pub fn gamma_value(
    m: usize,
    u: &AntennaPosition,
    apv: &AntennaPositionVector,
    geoms: &[ChannelGeometry],
    bf: &BeamformerSet,
    i: usize,
    k: usize,
) -> f64 {
    GammaExpansionTerms::new(m, apv, &geoms[i], &bf.vectors[k]).value(u)
}

pub fn gamma_gradient(
    m: usize,
    u: &AntennaPosition,
    apv: &AntennaPositionVector,
    geoms: &[ChannelGeometry],
    bf: &BeamformerSet,
    i: usize,
    k: usize,
) -> Vector2<f64> {
    GammaExpansionTerms::new(m, apv, &geoms[i], &bf.vectors[k]).gradient(u)
}

pub fn gamma_hessian(
    m: usize,
    u: &AntennaPosition,
    apv: &AntennaPositionVector,
    geoms: &[ChannelGeometry],
    bf: &BeamformerSet,
    i: usize,
    k: usize,
) -> Matrix2<f64> {
    GammaExpansionTerms::new(m, apv, &geoms[i], &bf.vectors[k]).hessian(u)
}

/// Global curvature bound `delta_{k,i}` for antenna `m`.
pub fn delta_bound(
    m: usize,
    apv: &AntennaPositionVector,
    geoms: &[ChannelGeometry],
    bf: &BeamformerSet,
    i: usize,
    k: usize,
) -> f64 {
    GammaExpansionTerms::new(m, apv, &geoms[i], &bf.vectors[k]).curvature_bound()
}

/// `psi_{k,i} = sum_{s(j) > s(k)} delta_{j,i}`.
pub fn psi_bound(
    m: usize,
    apv: &AntennaPositionVector,
    geoms: &[ChannelGeometry],
    bf: &BeamformerSet,
    order: &DecodingOrder,
    i: usize,
    k: usize,
) -> f64 {
    order
        .later(k)
        .map(|j| delta_bound(m, apv, geoms, bf, i, j))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSide {
    /// Concave minorant: curvature subtracted.
    Lower,
    /// Convex majorant: curvature added.
    Upper,
}

/// `value + g^T (u - center) -/+ (curvature / 2) ||u - center||^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSurrogate {
    pub value_at_center: f64,
    pub gradient: [f64; 2],
    pub curvature: f64,
    pub center: AntennaPosition,
    pub side: BoundSide,
}

impl QuadraticSurrogate {
    pub fn eval(&self, u: &AntennaPosition) -> f64 {
        let dx = u.x - self.center.x;
        let dy = u.y - self.center.y;
        let lin = self.value_at_center + self.gradient[0] * dx + self.gradient[1] * dy;
        let quad = 0.5 * self.curvature * (dx * dx + dy * dy);
        match self.side {
            BoundSide::Lower => lin - quad,
            BoundSide::Upper => lin + quad,
        }
    }
}

/// Concave quadratic minorant of `Gamma_{k,i}` around the center.
pub fn gamma_lb(terms: &GammaExpansionTerms, center: &AntennaPosition) -> QuadraticSurrogate {
    let g = terms.gradient(center);
    QuadraticSurrogate {
        value_at_center: terms.value(center),
        gradient: [g[0], g[1]],
        curvature: terms.curvature_bound(),
        center: *center,
        side: BoundSide::Lower,
    }
}

/// Convex quadratic majorant of `Upsilon_{k,i} = sum_j Gamma_{j,i} + noise`,
/// where `interferers` holds the expansions of `Gamma_{j,i}` for every
/// user `j` decoded after `k`.
pub fn upsilon_ub<'a>(
    interferers: impl IntoIterator<Item = &'a GammaExpansionTerms>,
    noise: f64,
    center: &AntennaPosition,
) -> QuadraticSurrogate {
    let mut value = noise;
    let mut grad = Vector2::zeros();
    let mut curvature = 0.0;
    for t in interferers {
        value += t.value(center);
        grad += t.gradient(center);
        curvature += t.curvature_bound();
    }
    QuadraticSurrogate {
        value_at_center: value,
        gradient: [grad[0], grad[1]],
        curvature,
        center: *center,
        side: BoundSide::Upper,
    }
}

/// Tangent minorant of `||u_m - u_n||^2` around `u_m_t`.
pub fn distance_lb(u_m: &AntennaPosition, u_m_t: &AntennaPosition, u_n: &AntennaPosition) -> f64 {
    let ex = u_m_t.x - u_n.x;
    let ey = u_m_t.y - u_n.y;
    ex * ex + ey * ey + 2.0 * (ex * (u_m.x - u_m_t.x) + ey * (u_m.y - u_m_t.y))
}

/// Expansions of every `Gamma_{k,i}` for one antenna, indexed `[k][i]`.
pub fn expansion_table(
    m: usize,
    apv: &AntennaPositionVector,
    geoms: &[ChannelGeometry],
    bf: &BeamformerSet,
) -> Vec<Vec<GammaExpansionTerms>> {
    bf.vectors
        .iter()
        .map(|w_k| {
            geoms
                .iter()
                .map(|g| GammaExpansionTerms::new(m, apv, g, w_k))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{channel_vector, PathAngles};
    use crate::noma::received_power;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Instance {
        apv: AntennaPositionVector,
        geoms: Vec<ChannelGeometry>,
        bf: BeamformerSet,
    }

    fn random_instance(rng: &mut ChaCha8Rng, m: usize, k: usize, l: usize) -> Instance {
        let apv = AntennaPositionVector::new(
            (0..m)
                .map(|_| AntennaPosition::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)))
                .collect(),
        );
        let geoms = (0..k)
            .map(|_| {
                let paths = (0..l)
                    .map(|_| PathAngles::new(rng.gen_range(0.0..PI), rng.gen_range(0.0..PI)))
                    .collect();
                let prv = (0..l)
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                ChannelGeometry::new(paths, prv, 60.0).unwrap()
            })
            .collect();
        let bf = BeamformerSet::new(
            (0..k)
                .map(|_| {
                    DVector::from_fn(m, |_, _| {
                        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    })
                })
                .collect(),
        );
        Instance { apv, geoms, bf }
    }

    fn direct_gamma(inst: &Instance, m: usize, u: &AntennaPosition, i: usize, k: usize) -> f64 {
        let mut apv = inst.apv.clone();
        apv.positions[m] = *u;
        received_power(
            &channel_vector(&apv, &inst.geoms[i]).unwrap(),
            &inst.bf.vectors[k],
        )
    }

    #[test]
    fn theta_tangency_and_unit_point() {
        let t = ThetaLinearization::new(1.0, 1.0).unwrap();
        assert_relative_eq!(t.eval(1.0, 1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(t.slope_alpha, -LOG2_E / 2.0, epsilon = 1e-15);
        assert_relative_eq!(t.slope_beta, -LOG2_E / 2.0, epsilon = 1e-15);
        assert_relative_eq!(
            theta_bound(0.3, 4.0, 0.3, 4.0).unwrap(),
            slack_rate(0.3, 4.0),
            epsilon = 1e-14
        );
        assert!(theta_bound(-1.0, 1.0, 1.0, 1.0).is_err());
        assert!(theta_bound(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn theta_is_a_global_minorant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let log_unif = |rng: &mut ChaCha8Rng| 10f64.powf(rng.gen_range(-2.0..2.0));
        for _ in 0..10_000 {
            let (at, bt) = (log_unif(&mut rng), log_unif(&mut rng));
            let (a, b) = (log_unif(&mut rng), log_unif(&mut rng));
            assert!(theta_bound(a, b, at, bt).unwrap() <= slack_rate(a, b) + 1e-12);
        }
    }

    #[test]
    fn expansion_matches_direct_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 3, 2, 4);
            for m in 0..3 {
                let u = AntennaPosition::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
                for (k, i) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let v = gamma_value(m, &u, &inst.apv, &inst.geoms, &inst.bf, i, k);
                    let d = direct_gamma(&inst, m, &u, i, k);
                    assert!((v - d).abs() <= 1e-10 * d.max(1e-300), "{v} vs {d}");
                }
            }
        }
    }

    #[test]
    fn zero_weight_antenna_decouples_position() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut inst = random_instance(&mut rng, 3, 1, 4);
        inst.bf.vectors[0][1] = Complex64::new(0.0, 0.0);
        let t = GammaExpansionTerms::new(1, &inst.apv, &inst.geoms[0], &inst.bf.vectors[0]);
        let u = AntennaPosition::new(0.7, 2.2);
        assert_relative_eq!(t.value(&u), t.residual_power, epsilon = 1e-14);
        assert_eq!(t.gradient(&u), Vector2::zeros());
        assert_eq!(t.hessian(&u), Matrix2::zeros());
        assert_eq!(t.curvature_bound(), 0.0);
    }

    #[test]
    fn single_path_single_antenna_is_flat() {
        let geom = ChannelGeometry::new(
            vec![PathAngles::new(0.9, 0.4)],
            vec![Complex64::new(0.5, -0.3)],
            50.0,
        )
        .unwrap();
        let apv = AntennaPositionVector::new(vec![AntennaPosition::new(1.0, 1.0)]);
        let w = DVector::from_vec(vec![Complex64::new(0.8, 0.6)]);
        let t = GammaExpansionTerms::new(0, &apv, &geom, &w);
        for u in [
            AntennaPosition::new(0.0, 0.0),
            AntennaPosition::new(2.3, 1.1),
        ] {
            assert_relative_eq!(
                t.value(&u),
                geom.prv[0].norm_sqr() * w[0].norm_sqr(),
                epsilon = 1e-14
            );
            assert!(t.gradient(&u).norm() < 1e-14);
            assert!(t.hessian(&u).norm() < 1e-14);
        }
        assert_eq!(t.curvature_bound(), 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 4, 2, 5);
            let m = rng.gen_range(0..4);
            let (k, i) = (rng.gen_range(0..2), rng.gen_range(0..2));
            let t = GammaExpansionTerms::new(m, &inst.apv, &inst.geoms[i], &inst.bf.vectors[k]);
            let u = AntennaPosition::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
            let f = |x: f64, y: f64| direct_gamma(&inst, m, &AntennaPosition::new(x, y), i, k);
            let fd = Vector2::new(
                (f(u.x + h, u.y) - f(u.x - h, u.y)) / (2.0 * h),
                (f(u.x, u.y + h) - f(u.x, u.y - h)) / (2.0 * h),
            );
            let g = t.gradient(&u);
            assert!((g - fd).norm() <= 1e-5 * g.norm().max(1.0), "{g} vs {fd}");
            let hs = 1e-4;
            let gx = |x: f64, y: f64| t.gradient(&AntennaPosition::new(x, y));
            let col0 = (gx(u.x + hs, u.y) - gx(u.x - hs, u.y)) / (2.0 * hs);
            let col1 = (gx(u.x, u.y + hs) - gx(u.x, u.y - hs)) / (2.0 * hs);
            let fdh = Matrix2::from_columns(&[col0, col1]);
            let hm = t.hessian(&u);
            assert_eq!(hm[(0, 1)], hm[(1, 0)]);
            assert!((hm - fdh).norm() <= 1e-3 * hm.norm().max(1.0));
        }
    }

    #[test]
    fn curvature_bound_dominates_spectral_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let inst = random_instance(&mut rng, 3, 2, 5);
            let t = GammaExpansionTerms::new(0, &inst.apv, &inst.geoms[1], &inst.bf.vectors[0]);
            let delta = t.curvature_bound();
            assert!(delta >= 0.0);
            for _ in 0..1000 {
                let u = AntennaPosition::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
                let eig = t.hessian(&u).symmetric_eigenvalues();
                assert!(eig.amax() <= delta + 1e-9);
            }
        }
    }

    #[test]
    fn single_path_multi_antenna_bound_is_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = random_instance(&mut rng, 3, 1, 1);
        let t = GammaExpansionTerms::new(2, &inst.apv, &inst.geoms[0], &inst.bf.vectors[0]);
        let delta = t.curvature_bound();
        assert!(delta > 0.0);
        for _ in 0..1000 {
            let u = AntennaPosition::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
            assert!(t.hessian(&u).symmetric_eigenvalues().amax() <= delta + 1e-12);
        }
    }

    #[test]
    fn psi_with_one_later_user_equals_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let inst = random_instance(&mut rng, 2, 2, 3);
        let order = DecodingOrder::new(vec![0, 1]).unwrap();
        let psi = psi_bound(1, &inst.apv, &inst.geoms, &inst.bf, &order, 0, 0);
        assert_eq!(psi, delta_bound(1, &inst.apv, &inst.geoms, &inst.bf, 0, 1));
        assert_eq!(
            psi_bound(1, &inst.apv, &inst.geoms, &inst.bf, &order, 0, 1),
            0.0
        );
    }

    #[test]
    fn surrogates_are_tangent_and_dominate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let inst = random_instance(&mut rng, 3, 3, 4);
            let m = 1;
            let center = inst.apv.positions[m];
            let table = expansion_table(m, &inst.apv, &inst.geoms, &inst.bf);
            let lb = gamma_lb(&table[0][2], &center);
            let ub = upsilon_ub([&table[1][2], &table[2][2]], 0.3, &center);
            assert_relative_eq!(
                lb.eval(&center),
                table[0][2].value(&center),
                epsilon = 1e-12
            );
            let ups = |u: &AntennaPosition| table[1][2].value(u) + table[2][2].value(u) + 0.3;
            assert_relative_eq!(ub.eval(&center), ups(&center), epsilon = 1e-12);
            for _ in 0..1000 {
                let u = AntennaPosition::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
                assert!(lb.eval(&u) <= table[0][2].value(&u) + 1e-9);
                assert!(ub.eval(&u) >= ups(&u) - 1e-9);
            }
        }
    }

    #[test]
    fn flat_gamma_gives_pure_quadratic_penalty() {
        let t = GammaExpansionTerms {
            b: DMatrix::from_element(1, 1, Complex64::new(0.0, 0.0)),
            c: DVector::from_element(1, Complex64::new(0.0, 0.0)),
            zeta: Complex64::new(0.0, 0.0),
            residual_power: 2.0,
            directions: vec![(0.3, 0.4)],
        };
        let center = AntennaPosition::new(1.0, 1.0);
        let mut s = gamma_lb(&t, &center);
        s.curvature = 3.0;
        let u = AntennaPosition::new(1.5, 0.0);
        assert_relative_eq!(s.eval(&u), 2.0 - 1.5 * (0.25 + 1.0), epsilon = 1e-14);
    }

    #[test]
    fn distance_bound_properties() {
        let a = AntennaPosition::new(1.0, 2.0);
        let n = AntennaPosition::new(0.2, 0.5);
        assert_relative_eq!(distance_lb(&a, &a, &n), a.distance_sq(&n), epsilon = 1e-14);
        assert_eq!(distance_lb(&AntennaPosition::new(2.0, 0.0), &n, &n), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let p = |rng: &mut ChaCha8Rng| {
                AntennaPosition::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0))
            };
            let (u, ut, un) = (p(&mut rng), p(&mut rng), p(&mut rng));
            assert!(distance_lb(&u, &ut, &un) <= u.distance_sq(&un) + 1e-12);
        }
    }
}

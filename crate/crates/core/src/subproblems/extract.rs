use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::noma::BeamformerSet;

/// Beamformers recovered from covariance matrices.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub beamformers: BeamformerSet,
    /// `lambda_2 / lambda_1` per user; zero for a zero or 1x1 matrix.
    pub defects: Vec<f64>,
    pub randomized: bool,
}

struct Decomposition {
    vectors: DMatrix<Complex64>,
    values: Vec<f64>,
    trace: f64,
}

impl Decomposition {
    fn new(w: &DMatrix<Complex64>) -> Self {
        let herm = (w + w.adjoint()).scale(0.5);
        let eig = herm.symmetric_eigen();
        let values: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
        let trace = w.trace().re.max(0.0);
        Self {
            vectors: eig.eigenvectors,
            values,
            trace,
        }
    }

    fn principal_index(&self) -> usize {
        (0..self.values.len()).fold(0, |best, i| {
            if self.values[i] > self.values[best] {
                i
            } else {
                best
            }
        })
    }

    fn defect(&self) -> f64 {
        let mut sorted = self.values.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        match sorted.as_slice() {
            [l1, l2, ..] if *l1 > 0.0 => l2 / l1,
            _ => 0.0,
        }
    }

    /// Principal eigenvector scaled to power `Tr(W)`.
    fn principal(&self) -> DVector<Complex64> {
        let m = self.vectors.nrows();
        if self.values.is_empty() || self.trace <= 0.0 {
            return DVector::zeros(m);
        }
        let v = self.vectors.column(self.principal_index()).into_owned();
        rescale(v, self.trace)
    }

    /// `V diag(sqrt(lambda)) z` with `z ~ CN(0, I)`, scaled to power `Tr(W)`.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<Complex64> {
        let m = self.vectors.nrows();
        let mut out = DVector::zeros(m);
        for (j, &lambda) in self.values.iter().enumerate() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(re, im) * (0.5 * lambda).sqrt();
            out += self.vectors.column(j) * z;
        }
        rescale(out, self.trace)
    }
}

fn rescale(v: DVector<Complex64>, power: f64) -> DVector<Complex64> {
    let n = v.norm();
    if n > 0.0 {
        v.scale(power.sqrt() / n)
    } else {
        v
    }
}

/// Recover one beamformer per covariance. Rank-one inputs (defect at most
/// `tol`) give their principal eigenvector exactly. Otherwise `samples`
/// Gaussian draws are scored, together with the principal candidate, and
/// the best one is returned. Every candidate keeps `||w_k||^2 = Tr(W_k)`.
pub fn extract_beamformers<R, F>(
    w: &[DMatrix<Complex64>],
    tol: f64,
    samples: usize,
    rng: &mut R,
    score: F,
) -> Result<Extraction>
where
    R: Rng + ?Sized,
    F: Fn(&BeamformerSet) -> f64,
{
    if let Some(bad) = w.iter().find(|wk| !wk.is_square()) {
        return Err(Error::InvalidInput(format!(
            "covariance of shape {}x{} is not square",
            bad.nrows(),
            bad.ncols()
        )));
    }
    let decomp: Vec<Decomposition> = w.iter().map(Decomposition::new).collect();
    let defects: Vec<f64> = decomp.iter().map(Decomposition::defect).collect();
    let principal = BeamformerSet::new(decomp.iter().map(Decomposition::principal).collect());
    let needs: Vec<bool> = defects.iter().map(|&d| d > tol).collect();
    if !needs.iter().any(|&b| b) {
        return Ok(Extraction {
            beamformers: principal,
            defects,
            randomized: false,
        });
    }
    let mut best_score = score(&principal);
    let mut best = principal.clone();
    for _ in 0..samples {
        let candidate = BeamformerSet::new(
            decomp
                .iter()
                .zip(&needs)
                .zip(&principal.vectors)
                .map(|((d, &n), p)| if n { d.sample(rng) } else { p.clone() })
                .collect(),
        );
        let s = score(&candidate);
        if s > best_score || !best_score.is_finite() && s.is_finite() {
            best_score = s;
            best = candidate;
        }
    }
    Ok(Extraction {
        beamformers: best,
        defects,
        randomized: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rank_one_is_recovered_up_to_phase() {
        let w = DVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.3), c(0.0, -1.0)]);
        let cov = &w * w.adjoint();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex = extract_beamformers(&[cov.clone()], 1e-4, 100, &mut rng, |_| 0.0).unwrap();
        assert!(!ex.randomized);
        assert!(ex.defects[0] < 1e-12);
        let v = &ex.beamformers.vectors[0];
        let back = v * v.adjoint();
        assert!((back - cov).norm() < 1e-10);
    }

    #[test]
    fn identity_triggers_randomization_and_keeps_power() {
        let cov = DMatrix::<Complex64>::identity(4, 4).scale(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ex =
            extract_beamformers(&[cov], 1e-4, 100, &mut rng, |b| b.vectors[0][0].norm()).unwrap();
        assert!(ex.randomized);
        assert_relative_eq!(ex.defects[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            ex.beamformers.vectors[0].norm_squared(),
            2.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn randomization_picks_the_best_score() {
        let cov = DMatrix::<Complex64>::identity(3, 3);
        let score = |b: &BeamformerSet| b.vectors[0][2].norm();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ex = extract_beamformers(&[cov.clone()], 1e-4, 100, &mut rng, score).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let few = extract_beamformers(&[cov], 1e-4, 1, &mut rng, score).unwrap();
        assert!(score(&ex.beamformers) >= score(&few.beamformers));
    }

    #[test]
    fn defect_is_second_to_first_eigenvalue() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(0.1, 0.0),
            c(4.0, 0.0),
            c(1.0, 0.0),
        ]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ex = extract_beamformers(&[cov], 1.0, 10, &mut rng, |_| 0.0).unwrap();
        assert!(!ex.randomized);
        assert_relative_eq!(ex.defects[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(
            ex.beamformers.vectors[0][1].norm_sqr(),
            5.1,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_matrix_gives_zero_beamformer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex = extract_beamformers(&[DMatrix::zeros(2, 2)], 1e-4, 10, &mut rng, |_| 0.0).unwrap();
        assert_eq!(ex.defects[0], 0.0);
        assert_eq!(ex.beamformers.vectors[0].norm(), 0.0);
    }
}

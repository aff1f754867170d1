//! Far-field multipath channel model driven by per-path field responses.
//!
//! All array geometry is expressed in carrier wavelengths, so the phase of
//! path `l` at position `u` is `2*pi*rho_l(u)`. User distances stay in meters.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::rng::user_stream;

/// Elevation and azimuth angle of departure of one path, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathAngles {
    pub theta: f64,
    pub phi: f64,
}

impl PathAngles {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    /// Direction cosines `(sin(theta)cos(phi), cos(theta))`: the gradient of
    /// the propagation difference with respect to `(x, y)`.
    pub fn direction(&self) -> (f64, f64) {
        (self.theta.sin() * self.phi.cos(), self.theta.cos())
    }
}

/// Antenna coordinates in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AntennaPosition {
    pub x: f64,
    pub y: f64,
}

impl AntennaPosition {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &AntennaPosition) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(&self, other: &AntennaPosition) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Inside `[0, side] x [0, side]` up to `tol`.
    pub fn in_region(&self, side: f64, tol: f64) -> bool {
        self.x >= -tol && self.y >= -tol && self.x <= side + tol && self.y <= side + tol
    }
}

/// Stacked positions of all antennas.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AntennaPositionVector {
    pub positions: Vec<AntennaPosition>,
}

impl AntennaPositionVector {
    pub fn new(positions: Vec<AntennaPosition>) -> Self {
        Self { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Smallest pairwise distance, `+inf` for fewer than two antennas.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (a, pa) in self.positions.iter().enumerate() {
            for pb in &self.positions[a + 1..] {
                best = best.min(pa.distance(pb));
            }
        }
        best
    }

    /// Box and minimum-distance feasibility.
    pub fn is_feasible(&self, side: f64, min_distance: f64, tol: f64) -> bool {
        self.positions.iter().all(|p| p.in_region(side, tol))
            && self.min_pairwise_distance() >= min_distance - tol
    }

    /// Planar grid with `ceil(sqrt(count))` columns and the given spacing,
    /// filled row by row, with its bounding box centered in the square region.
    pub fn centered_grid(count: usize, spacing: f64, side: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("antenna count must be positive".into()));
        }
        let cols = (count as f64).sqrt().ceil() as usize;
        let rows = count.div_ceil(cols);
        let width = (cols - 1) as f64 * spacing;
        let height = (rows - 1) as f64 * spacing;
        if width > side + 1e-12 || height > side + 1e-12 {
            return Err(Error::Config(format!(
                "{count} antennas at spacing {spacing} do not fit in a {side} x {side} region"
            )));
        }
        let cx = side / 2.0;
        let positions = (0..count)
            .map(|i| {
                let (r, c) = (i / cols, i % cols);
                AntennaPosition::new(
                    cx - width / 2.0 + c as f64 * spacing,
                    cx - height / 2.0 + r as f64 * spacing,
                )
            })
            .collect();
        Ok(Self { positions })
    }
}

/// Fixed-array element spacing, in wavelengths.
pub const HALF_WAVELENGTH: f64 = 0.5;

/// Random multipath realization for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    pub paths: Vec<PathAngles>,
    /// Path-response coefficients, one per path.
    pub prv: Vec<Complex64>,
    pub distance_m: f64,
}

impl ChannelGeometry {
    pub fn new(paths: Vec<PathAngles>, prv: Vec<Complex64>, distance_m: f64) -> Result<Self> {
        if paths.is_empty() || paths.len() != prv.len() {
            return Err(Error::InvalidInput(format!(
                "geometry needs matching, nonempty path and PRV lists (got {} and {})",
                paths.len(),
                prv.len()
            )));
        }
        Ok(Self {
            paths,
            prv,
            distance_m,
        })
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }
}

/// `x sin(theta) cos(phi) + y cos(theta)`, in wavelengths.
pub fn propagation_difference(u: &AntennaPosition, p: &PathAngles) -> f64 {
    let (dx, dy) = p.direction();
    u.x * dx + u.y * dy
}

/// Unit-modulus per-path phase responses at position `u`.
pub fn field_response_vector(
    u: &AntennaPosition,
    paths: &[PathAngles],
) -> Result<DVector<Complex64>> {
    if paths.is_empty() {
        return Err(Error::InvalidInput(
            "field response needs at least one path".into(),
        ));
    }
    Ok(DVector::from_iterator(
        paths.len(),
        paths
            .iter()
            .map(|p| Complex64::from_polar(1.0, 2.0 * PI * propagation_difference(u, p))),
    ))
}

/// Channel `h = G^H f` from all antennas to the user described by `geom`.
pub fn channel_vector(
    apv: &AntennaPositionVector,
    geom: &ChannelGeometry,
) -> Result<DVector<Complex64>> {
    if geom.paths.len() != geom.prv.len() || geom.paths.is_empty() {
        return Err(Error::InvalidInput(
            "geometry path/PRV length mismatch".into(),
        ));
    }
    if apv.is_empty() {
        return Err(Error::InvalidInput("empty antenna position vector".into()));
    }
    let mut h = DVector::zeros(apv.len());
    for (m, u) in apv.positions.iter().enumerate() {
        let g = field_response_vector(u, &geom.paths)?;
        h[m] = g.iter().zip(&geom.prv).map(|(gl, fl)| gl.conj() * fl).sum();
    }
    Ok(h)
}

/// Channels of every user at the given APV.
pub fn channels(
    apv: &AntennaPositionVector,
    geoms: &[ChannelGeometry],
) -> Result<Vec<DVector<Complex64>>> {
    geoms.iter().map(|g| channel_vector(apv, g)).collect()
}

/// Draw one user's geometry: AoDs uniform on `[0, pi]`, distance uniform on
/// the configured range, PRV entries CSCG with variance `rho d^-alpha / L`.
pub fn sample_user_geometry<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> ChannelGeometry {
    let l = cfg.num_paths;
    let angle = Uniform::new_inclusive(0.0, PI);
    let (dmin, dmax) = cfg.distance_range_m;
    let distance_m = if dmax > dmin {
        rng.sample(Uniform::new(dmin, dmax))
    } else {
        dmin
    };
    let paths = (0..l)
        .map(|_| PathAngles::new(angle.sample(rng), angle.sample(rng)))
        .collect();
    let variance = cfg.pathloss_ref() * distance_m.powf(-cfg.pathloss_exponent) / l as f64;
    let normal = Normal::new(0.0, (variance / 2.0).sqrt()).expect("finite variance");
    let prv = (0..l)
        .map(|_| Complex64::new(normal.sample(rng), normal.sample(rng)))
        .collect();
    ChannelGeometry {
        paths,
        prv,
        distance_m,
    }
}

/// Geometries of all `K` users for one trial, each from its own stream.
pub fn sample_geometry(cfg: &ScenarioConfig, master_seed: u64, trial: u64) -> Vec<ChannelGeometry> {
    (0..cfg.num_users)
        .map(|k| sample_user_geometry(cfg, &mut user_stream(master_seed, trial, k as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_geometry(rng: &mut ChaCha8Rng, l: usize) -> ChannelGeometry {
        let paths = (0..l)
            .map(|_| PathAngles::new(rng.gen_range(0.0..PI), rng.gen_range(0.0..PI)))
            .collect();
        let prv = (0..l)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ChannelGeometry::new(paths, prv, 60.0).unwrap()
    }

    #[test]
    fn propagation_difference_special_angles() {
        let p = PathAngles::new(1.1, 0.3);
        assert_eq!(
            propagation_difference(&AntennaPosition::new(0.0, 0.0), &p),
            0.0
        );
        let u = AntennaPosition::new(1.7, -0.4);
        assert_relative_eq!(
            propagation_difference(&u, &PathAngles::new(PI / 2.0, 0.0)),
            1.7,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            propagation_difference(&u, &PathAngles::new(0.0, 2.0)),
            -0.4,
            epsilon = 1e-15
        );
    }

    #[test]
    fn frv_reference_point_and_half_wavelength() {
        let paths = vec![
            PathAngles::new(0.2, 0.3),
            PathAngles::new(1.0, 2.0),
            PathAngles::new(2.5, 0.1),
        ];
        let g = field_response_vector(&AntennaPosition::default(), &paths).unwrap();
        for e in g.iter() {
            assert_relative_eq!(e.re, 1.0, epsilon = 1e-15);
            assert_relative_eq!(e.im, 0.0, epsilon = 1e-15);
        }
        let g = field_response_vector(
            &AntennaPosition::new(0.5, 0.0),
            &[PathAngles::new(PI / 2.0, 0.0)],
        )
        .unwrap();
        assert_relative_eq!(g[0].re, -1.0, epsilon = 1e-12);
        assert_relative_eq!(g[0].im, 0.0, epsilon = 1e-12);
        assert!(field_response_vector(&AntennaPosition::default(), &[]).is_err());
    }

    #[test]
    fn frv_phases_match_scalar_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let geom = random_geometry(&mut rng, 3);
            let u = AntennaPosition::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
            let g = field_response_vector(&u, &geom.paths).unwrap();
            for (l, p) in geom.paths.iter().enumerate() {
                let phase = 2.0 * PI * (u.x * p.theta.sin() * p.phi.cos() + u.y * p.theta.cos());
                assert_relative_eq!(g[l].re, phase.cos(), epsilon = 1e-12);
                assert_relative_eq!(g[l].im, phase.sin(), epsilon = 1e-12);
                assert_relative_eq!(g[l].norm(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn channel_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let geom = random_geometry(&mut rng, 4);
        let apv = AntennaPositionVector::new(vec![
            AntennaPosition::new(0.3, 1.2),
            AntennaPosition::new(2.1, 0.7),
            AntennaPosition::new(1.4, 2.9),
        ]);
        let h = channel_vector(&apv, &geom).unwrap();
        for (m, u) in apv.positions.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..geom.num_paths() {
                let (t, p) = (geom.paths[l].theta, geom.paths[l].phi);
                let rho = u.x * t.sin() * p.cos() + u.y * t.cos();
                acc += geom.prv[l] * Complex64::new(0.0, -2.0 * PI * rho).exp();
            }
            assert_relative_eq!((h[m] - acc).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_path_magnitude_is_position_independent() {
        let geom = ChannelGeometry::new(
            vec![PathAngles::new(0.7, 1.9)],
            vec![Complex64::new(0.3, -0.8)],
            70.0,
        )
        .unwrap();
        for (x, y) in [(0.0, 0.0), (1.3, 2.2), (2.9, 0.1)] {
            let h = channel_vector(
                &AntennaPositionVector::new(vec![AntennaPosition::new(x, y)]),
                &geom,
            )
            .unwrap();
            assert_relative_eq!(h[0].norm(), geom.prv[0].norm(), epsilon = 1e-14);
        }
    }

    #[test]
    fn coincident_antennas_share_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let geom = random_geometry(&mut rng, 5);
        let u = AntennaPosition::new(1.0, 1.5);
        let h = channel_vector(&AntennaPositionVector::new(vec![u, u]), &geom).unwrap();
        assert_eq!(h[0], h[1]);
    }

    #[test]
    fn channel_is_periodic_in_integer_phase_shifts() {
        // Broadside-in-x single path: shifting x by one wavelength changes rho by 1.
        let geom = ChannelGeometry::new(
            vec![PathAngles::new(PI / 2.0, 0.0)],
            vec![Complex64::new(0.4, 0.9)],
            60.0,
        )
        .unwrap();
        let a = channel_vector(
            &AntennaPositionVector::new(vec![AntennaPosition::new(0.3, 0.2)]),
            &geom,
        )
        .unwrap();
        let b = channel_vector(
            &AntennaPositionVector::new(vec![AntennaPosition::new(1.3, 1.7)]),
            &geom,
        )
        .unwrap();
        assert_relative_eq!((a[0] - b[0]).norm(), 0.0, epsilon = 1e-12);
        // Endfire-in-y path: only y matters.
        let geom = ChannelGeometry::new(
            vec![PathAngles::new(0.0, 1.0)],
            vec![Complex64::new(-0.2, 0.5)],
            60.0,
        )
        .unwrap();
        let a = channel_vector(
            &AntennaPositionVector::new(vec![AntennaPosition::new(0.3, 0.2)]),
            &geom,
        )
        .unwrap();
        let b = channel_vector(
            &AntennaPositionVector::new(vec![AntennaPosition::new(2.8, 2.2)]),
            &geom,
        )
        .unwrap();
        assert_relative_eq!((a[0] - b[0]).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let bad = ChannelGeometry {
            paths: vec![PathAngles::new(0.1, 0.1)],
            prv: vec![],
            distance_m: 50.0,
        };
        assert!(channel_vector(
            &AntennaPositionVector::new(vec![AntennaPosition::default()]),
            &bad
        )
        .is_err());
        assert!(ChannelGeometry::new(vec![], vec![], 50.0).is_err());
    }

    #[test]
    fn sampling_shape_and_determinism() {
        let cfg = ScenarioConfig {
            num_users: 3,
            num_paths: 5,
            ..Default::default()
        };
        let a = sample_geometry(&cfg, 42, 0);
        let b = sample_geometry(&cfg, 42, 0);
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        for g in &a {
            assert_eq!(g.paths.len(), 5);
            assert_eq!(g.prv.len(), 5);
            assert!((50.0..=100.0).contains(&g.distance_m));
            for p in &g.paths {
                assert!((0.0..=PI).contains(&p.theta) && (0.0..=PI).contains(&p.phi));
            }
        }
        let c = sample_geometry(&cfg, 42, 1);
        assert_ne!(a, c);
    }

    #[test]
    fn users_are_nested_across_k() {
        let cfg2 = ScenarioConfig {
            num_users: 2,
            ..Default::default()
        };
        let cfg3 = ScenarioConfig {
            num_users: 3,
            ..Default::default()
        };
        let a = sample_geometry(&cfg2, 3, 4);
        let b = sample_geometry(&cfg3, 3, 4);
        assert_eq!(a[..], b[..2]);
    }

    #[test]
    fn prv_variance_matches_pathloss_model() {
        // Fixed distance of 50 m: variance should be 1e-3 * 50^-2.8 / 5.
        let cfg = ScenarioConfig {
            num_paths: 5,
            distance_range_m: (50.0, 50.0),
            ..Default::default()
        };
        let expected = 1e-3 * 50f64.powf(-2.8) / 5.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let draws = 20_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let g = sample_user_geometry(&cfg, &mut rng);
            acc += g.prv.iter().map(|f| f.norm_sqr()).sum::<f64>();
        }
        let var = acc / (draws * 5) as f64;
        assert!(
            (var / expected - 1.0).abs() < 0.02,
            "sample variance {var:e} vs {expected:e}"
        );
    }

    #[test]
    fn mean_channel_power_matches_pathloss() {
        let cfg = ScenarioConfig {
            num_paths: 5,
            distance_range_m: (70.0, 70.0),
            ..Default::default()
        };
        let apv = AntennaPositionVector::centered_grid(4, 0.5, 3.0).unwrap();
        let expected = 4.0 * 1e-3 * 70f64.powf(-2.8);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let g = sample_user_geometry(&cfg, &mut rng);
            acc += channel_vector(&apv, &g).unwrap().norm_squared();
        }
        let mean = acc / draws as f64;
        assert!(
            (mean / expected - 1.0).abs() < 0.05,
            "mean {mean:e} vs {expected:e}"
        );
    }

    #[test]
    fn centered_grid_layouts() {
        let g = AntennaPositionVector::centered_grid(4, 0.5, 3.0).unwrap();
        let xs: Vec<(f64, f64)> = g.positions.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(
            xs,
            vec![(1.25, 1.25), (1.75, 1.25), (1.25, 1.75), (1.75, 1.75)]
        );
        assert!(g.is_feasible(3.0, 0.5, 1e-12));
        let one = AntennaPositionVector::centered_grid(1, 0.5, 3.0).unwrap();
        assert_eq!(one.positions, vec![AntennaPosition::new(1.5, 1.5)]);
        assert!(AntennaPositionVector::centered_grid(64, 0.5, 3.0).is_err());
    }
}

//! Gaussian atomic cloud: pair distances, optical depth, density and the
//! geometric double-excitation proxy.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure, Result};
use crate::interactions::{BlockadeThreshold, PairModel};
use crate::seed::{rng_from_seed, stream_rng};

/// Probe wavelength, µm.
pub const PROBE_WAVELENGTH: f64 = 0.78;

/// Trap and temperature figures kept for provenance only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrapMetadata {
    /// Waists of the two dipole-trap beams, µm.
    pub trap_waists_um: Option<[f64; 2]>,
    /// Individual trap depths U/h, MHz.
    pub trap_depths_mhz: Option<[f64; 2]>,
    /// (x, y, z) vibration frequencies, kHz.
    pub trap_frequencies_khz: Option<[f64; 3]>,
    pub temperature_uk: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudGeometry {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
    pub n_atoms: u64,
    /// Angle of the probe from the y axis, in the xy plane, rad.
    pub probe_angle_xy: f64,
    pub cross_section_reduction: f64,
    /// µm.
    pub wavelength: f64,
    #[serde(default)]
    pub metadata: TrapMetadata,
}

impl CloudGeometry {
    pub fn measured() -> Self {
        Self {
            sigma_x: 2.4,
            sigma_y: 4.6,
            sigma_z: 2.9,
            n_atoms: 440,
            probe_angle_xy: 16f64.to_radians(),
            cross_section_reduction: 0.5,
            wavelength: PROBE_WAVELENGTH,
            metadata: TrapMetadata {
                trap_waists_um: Some([10.0, 20.0]),
                trap_depths_mhz: Some([2.0, 20.0]),
                trap_frequencies_khz: Some([5.7, 3.0, 4.8]),
                temperature_uk: Some(80.0),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.sigma_x > 0.0, "sigma_x", "must be > 0")?;
        ensure(self.sigma_y > 0.0, "sigma_y", "must be > 0")?;
        ensure(self.sigma_z > 0.0, "sigma_z", "must be > 0")?;
        ensure(self.n_atoms >= 1, "n_atoms", "must be >= 1")?;
        ensure(
            self.cross_section_reduction > 0.0 && self.cross_section_reduction <= 1.0,
            "cross_section_reduction",
            "must lie in (0, 1]",
        )?;
        ensure(self.wavelength > 0.0, "wavelength", "must be > 0")?;
        ensure(self.probe_angle_xy.is_finite(), "probe_angle_xy", "must be finite")
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(
            self.sigma_x.powi(2),
            self.sigma_y.powi(2),
            self.sigma_z.powi(2),
        ))
    }

    /// Unit probe direction; also the quantization axis.
    pub fn probe_direction(&self) -> Vector3<f64> {
        let (s, c) = self.probe_angle_xy.sin_cos();
        Vector3::new(s, c, 0.0)
    }

    /// Resonant two-level cross section 3λ²/2π, µm².
    pub fn resonant_cross_section(&self) -> f64 {
        3.0 * self.wavelength.powi(2) / (2.0 * PI)
    }
}

/// d0 = √(2(σx² + σy² + σz²)).
pub fn rms_pair_distance(geom: &CloudGeometry) -> f64 {
    (2.0 * (geom.sigma_x.powi(2) + geom.sigma_y.powi(2) + geom.sigma_z.powi(2))).sqrt()
}

pub fn sample_positions(geom: &CloudGeometry, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = rng_from_seed(seed);
    (0..geom.n_atoms)
        .map(|_| draw_point(geom, &mut rng))
        .collect()
}

fn draw_point<R: Rng>(geom: &CloudGeometry, rng: &mut R) -> [f64; 3] {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    let z: f64 = rng.sample(StandardNormal);
    [geom.sigma_x * x, geom.sigma_y * y, geom.sigma_z * z]
}

/// Peak column optical depth N·σ/(2π√(det Σ · uᵀΣ⁻¹u)) for a Gaussian cloud
/// of covariance Σ probed along unit vector u through its centre.
pub fn column_optical_depth(
    n_atoms: f64,
    cross_section: f64,
    covariance: &Matrix3<f64>,
    direction: &Vector3<f64>,
) -> Result<f64> {
    let inv = covariance
        .try_inverse()
        .ok_or_else(|| crate::Error::Domain("singular cloud covariance".into()))?;
    let u = direction.normalize();
    let quad = (u.transpose() * inv * u)[0];
    Ok(n_atoms * cross_section / (2.0 * PI * (covariance.determinant() * quad).sqrt()))
}

pub fn peak_optical_depth(geom: &CloudGeometry) -> Result<f64> {
    geom.validate()?;
    column_optical_depth(
        geom.n_atoms as f64,
        geom.resonant_cross_section() * geom.cross_section_reduction,
        &geom.covariance(),
        &geom.probe_direction(),
    )
}

/// Density-weighted mean N/(8π^{3/2}σxσyσz), cm⁻³.
pub fn mean_density(geom: &CloudGeometry) -> f64 {
    let per_um3 =
        geom.n_atoms as f64 / (8.0 * PI.powf(1.5) * geom.sigma_x * geom.sigma_y * geom.sigma_z);
    per_um3 * 1e12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFraction {
    pub fraction: f64,
    /// Binomial standard error √(p(1−p)/n).
    pub std_error: f64,
    pub n_pairs: u64,
}

const PAIR_CHUNK: u64 = 4096;

/// Fraction of random atom pairs whose shift lies below the threshold, i.e.
/// pairs the blockade does not protect against double excitation. Pair angles
/// are measured from the probe direction.
pub fn double_excitation_fraction(
    geom: &CloudGeometry,
    model: &PairModel,
    thr: &BlockadeThreshold,
    n_pairs: u64,
    seed: u64,
) -> Result<PairFraction> {
    geom.validate()?;
    ensure(n_pairs >= 1, "n_pairs", "must be >= 1")?;
    let axis = geom.probe_direction();
    let nu = thr.energy();
    let chunks = n_pairs.div_ceil(PAIR_CHUNK);
    let counts: Vec<u64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, "double-excitation", c);
            let todo = PAIR_CHUNK.min(n_pairs - c * PAIR_CHUNK);
            let mut hits = 0u64;
            for _ in 0..todo {
                let a = draw_point(geom, &mut rng);
                let b = draw_point(geom, &mut rng);
                let d = Vector3::new(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
                let r = d.norm();
                if r == 0.0 {
                    hits += 1;
                    continue;
                }
                let theta = (d.dot(&axis) / r).clamp(-1.0, 1.0).acos();
                let v = crate::interactions::pair_potential(model, r, theta)
                    .expect("positive separation");
                if v.abs() < nu {
                    hits += 1;
                }
            }
            hits
        })
        .collect();
    let hits: u64 = counts.iter().sum();
    let p = hits as f64 / n_pairs as f64;
    Ok(PairFraction {
        fraction: p,
        std_error: (p * (1.0 - p) / n_pairs as f64).sqrt(),
        n_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interactions::ThresholdConvention;
    use proptest::prelude::*;

    fn cloud() -> CloudGeometry {
        CloudGeometry::measured()
    }

    #[test]
    fn rms_distance_examples() {
        assert!((rms_pair_distance(&cloud()) - 8.41).abs() < 0.005);
        let mut g = cloud();
        g.sigma_x = 3.0;
        g.sigma_y = 3.0;
        g.sigma_z = 3.0;
        assert!((rms_pair_distance(&g) - 3.0 * 6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rms_distance_matches_sampling() {
        let mut g = cloud();
        g.n_atoms = 200_000;
        let pts = sample_positions(&g, 11);
        let ms: f64 = pts
            .chunks(2)
            .map(|p| {
                (0..3).map(|k| (p[0][k] - p[1][k]).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / (pts.len() / 2) as f64;
        let d0 = rms_pair_distance(&g);
        assert!((ms.sqrt() / d0 - 1.0).abs() < 0.01, "{} vs {d0}", ms.sqrt());
    }

    #[test]
    fn sampling_is_deterministic_with_correct_variances() {
        let mut g = cloud();
        g.n_atoms = 10_000;
        let a = sample_positions(&g, 42);
        assert_eq!(a, sample_positions(&g, 42));
        assert_ne!(a, sample_positions(&g, 43));
        let sig = [g.sigma_x, g.sigma_y, g.sigma_z];
        for k in 0..3 {
            let mean = a.iter().map(|p| p[k]).sum::<f64>() / a.len() as f64;
            let var = a.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / (a.len() - 1) as f64;
            assert!((var / sig[k].powi(2) - 1.0).abs() < 0.05, "axis {k}");
        }
        g.n_atoms = 1;
        assert_eq!(sample_positions(&g, 1).len(), 1);
    }

    #[test]
    fn optical_depth_along_y_matches_hand_value() {
        let mut g = cloud();
        g.probe_angle_xy = 0.0;
        let od = peak_optical_depth(&g).unwrap();
        let sigma0 = 3.0 * 0.78f64.powi(2) / (2.0 * PI) * 0.5;
        let hand = 440.0 * sigma0 / (2.0 * PI * 2.4 * 2.9);
        assert!((od - hand).abs() < 1e-12);
        assert!(od > 1.4 && od < 1.5, "{od}");
        // The tilted probe sees a slightly longer path through the wider axis.
        let tilted = peak_optical_depth(&cloud()).unwrap();
        assert!(tilted < od && tilted > 1.0);
    }

    #[test]
    fn optical_depth_is_linear() {
        let base = peak_optical_depth(&cloud()).unwrap();
        let mut g = cloud();
        g.cross_section_reduction = 1.0;
        assert!((peak_optical_depth(&g).unwrap() - 2.0 * base).abs() < 1e-12);
        let mut g = cloud();
        g.n_atoms *= 2;
        assert!((peak_optical_depth(&g).unwrap() - 2.0 * base).abs() < 1e-12);
    }

    #[test]
    fn column_depth_matches_numerical_line_integral() {
        let g = cloud();
        let cov = g.covariance();
        let u = g.probe_direction();
        let inv = cov.try_inverse().unwrap();
        let norm = 1.0 / ((2.0 * PI).powf(1.5) * cov.determinant().sqrt());
        let h = 1e-3;
        let column: f64 = (-40_000..=40_000)
            .map(|i| {
                let p = u * (i as f64 * h);
                norm * (-0.5 * (p.transpose() * inv * p)[0]).exp() * h
            })
            .sum();
        let sigma = g.resonant_cross_section() * g.cross_section_reduction;
        let od = peak_optical_depth(&g).unwrap();
        assert!((od - 440.0 * sigma * column).abs() < 1e-9);
    }

    #[test]
    fn density_examples() {
        let n = mean_density(&cloud());
        assert!((n - 3.1e11).abs() < 0.05e11, "{n}");
        assert!(n / 2e11 < 2.0 && n / 2e11 > 0.5);
        let mut g = cloud();
        g.sigma_x *= 2.0;
        g.sigma_y *= 2.0;
        g.sigma_z *= 2.0;
        assert!((mean_density(&g) - n / 8.0).abs() < 1e-3);
    }

    #[test]
    fn density_matches_sampling() {
        let mut g = cloud();
        g.n_atoms = 100_000;
        let pts = sample_positions(&g, 5);
        let norm = 440.0 / ((2.0 * PI).powf(1.5) * g.sigma_x * g.sigma_y * g.sigma_z);
        let mean: f64 = pts
            .iter()
            .map(|p| {
                let q = (p[0] / g.sigma_x).powi(2)
                    + (p[1] / g.sigma_y).powi(2)
                    + (p[2] / g.sigma_z).powi(2);
                norm * (-0.5 * q).exp()
            })
            .sum::<f64>()
            / pts.len() as f64
            * 1e12;
        assert!((mean / mean_density(&cloud()) - 1.0).abs() < 0.02);
    }

    #[test]
    fn double_excitation_limits_and_reproducibility() {
        let g = cloud();
        let m = PairModel::rprime_rprime();
        let small = BlockadeThreshold::new(1e-9, ThresholdConvention::FullLinewidth).unwrap();
        let huge = BlockadeThreshold::new(1e12, ThresholdConvention::FullLinewidth).unwrap();
        assert!(double_excitation_fraction(&g, &m, &small, 10_000, 1).unwrap().fraction < 1e-3);
        assert_eq!(
            double_excitation_fraction(&g, &m, &huge, 10_000, 1).unwrap().fraction,
            1.0
        );
        let thr = BlockadeThreshold::preparation();
        let a = double_excitation_fraction(&g, &m, &thr, 50_000, 9).unwrap();
        let b = double_excitation_fraction(&g, &m, &thr, 50_000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.fraction < 0.05, "{a:?}");
    }

    #[test]
    fn double_excitation_matches_direct_count() {
        // Oracle: pairs from an independently sampled cloud, closed-form radii.
        let g = cloud();
        let m = PairModel::rprime_rprime();
        let thr = BlockadeThreshold::preparation();
        let mut big = g.clone();
        big.n_atoms = 400_000;
        let pts = sample_positions(&big, 77);
        let axis = g.probe_direction();
        let outside = pts
            .chunks(2)
            .filter(|p| {
                let d = Vector3::new(p[0][0] - p[1][0], p[0][1] - p[1][1], p[0][2] - p[1][2]);
                let cos = d.dot(&axis) / d.norm();
                let c6 = 1.94e6 * (cos * cos + 1.6f64.powi(6) * (1.0 - cos * cos));
                d.norm() > (c6 / 0.6).powf(1.0 / 6.0)
            })
            .count() as f64
            / 200_000.0;
        let f = double_excitation_fraction(&g, &m, &thr, 200_000, 3).unwrap();
        let se = (2.0 * outside * (1.0 - outside) / 200_000.0).sqrt();
        assert!((f.fraction - outside).abs() < 5.0 * se + 1e-4, "{f:?} vs {outside}");
    }

    proptest! {
        #[test]
        fn d0_identity(sx in 0.1f64..20.0, sy in 0.1f64..20.0, sz in 0.1f64..20.0) {
            let mut g = cloud();
            g.sigma_x = sx; g.sigma_y = sy; g.sigma_z = sz;
            let d0 = rms_pair_distance(&g);
            prop_assert!((d0 * d0 - 2.0 * (sx * sx + sy * sy + sz * sz)).abs() < 1e-9 * d0 * d0);
        }

        #[test]
        fn optical_depth_rotation_invariant(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
            let g = cloud();
            let rot = nalgebra::Rotation3::from_euler_angles(a, b, c).into_inner();
            let cov = g.covariance();
            let u = g.probe_direction();
            let sigma = g.resonant_cross_section();
            let base = column_optical_depth(440.0, sigma, &cov, &u).unwrap();
            let turned = column_optical_depth(440.0, sigma, &(rot * cov * rot.transpose()), &(rot * u)).unwrap();
            prop_assert!((turned / base - 1.0).abs() < 1e-10);
        }

        #[test]
        fn double_excitation_monotone_in_linewidth(lw in 0.05f64..5.0, factor in 1.0f64..4.0) {
            let g = cloud();
            let m = PairModel::rprime_rprime();
            let lo = BlockadeThreshold::new(lw, ThresholdConvention::FullLinewidth).unwrap();
            let hi = BlockadeThreshold::new(lw * factor, ThresholdConvention::FullLinewidth).unwrap();
            let a = double_excitation_fraction(&g, &m, &lo, 5000, 4).unwrap().fraction;
            let b = double_excitation_fraction(&g, &m, &hi, 5000, 4).unwrap().fraction;
            prop_assert!(b >= a);
        }
    }
}

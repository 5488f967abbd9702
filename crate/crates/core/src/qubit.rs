//! Microwave qubit dynamics between |↑⟩ = r′ and |↓⟩ = r, the measurement
//! error channel, and Rabi/Ramsey curve fits.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::CloudGeometry;
use crate::error::{ensure, Error, Result};
use crate::estimate::{least_squares_fit, Bound, MinimizeOptions};
use crate::interactions::{pair_potential, PairModel};
use crate::seed::{rng_from_seed, stream_rng};

/// Bohr magneton, MHz/G.
pub const BOHR_MAGNETON: f64 = 1.39962;
pub const G_P32: f64 = 4.0 / 3.0;
pub const G_S12: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiConfig {
    /// Rabi frequency Ω/2π, MHz.
    pub omega: f64,
    /// Microwave carrier, MHz. Metadata only.
    pub mw_frequency: f64,
    /// Detuning of the spectator Zeeman level, MHz.
    pub spectator_detuning: f64,
    /// Amplitude suppression of the spectator coupling.
    pub spectator_suppression: f64,
    pub include_spectator: bool,
    pub n_repetitions: u64,
}

impl Default for RabiConfig {
    fn default() -> Self {
        Self {
            omega: 5.3,
            mw_frequency: 4814.2,
            spectator_detuning: 17.0,
            spectator_suppression: 10.0,
            include_spectator: false,
            n_repetitions: 150,
        }
    }
}

impl RabiConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.omega.is_finite() && self.omega > 0.0,
            "omega",
            "must be finite and > 0",
        )?;
        ensure(
            self.spectator_suppression.is_finite() && self.spectator_suppression >= 1.0,
            "spectator_suppression",
            "must be >= 1",
        )?;
        ensure(
            self.spectator_detuning.is_finite(),
            "spectator_detuning",
            "must be finite",
        )?;
        ensure(self.n_repetitions >= 1, "n_repetitions", "must be >= 1")
    }

    /// Duration of a π rotation, µs.
    pub fn pi_time(&self) -> f64 {
        0.5 / self.omega
    }

    /// Hamiltonian in {↑, ↓, spectator}, MHz (ordinary frequency).
    pub fn hamiltonian(&self) -> Matrix3<f64> {
        let half = 0.5 * self.omega;
        let (side, det) = if self.include_spectator {
            (half / self.spectator_suppression, -self.spectator_detuning)
        } else {
            (0.0, 0.0)
        };
        Matrix3::new(0.0, half, 0.0, half, 0.0, side, 0.0, side, det)
    }
}

/// Propagator exp(−2πiHt) of a constant real symmetric Hamiltonian.
pub struct Propagator {
    eigen: SymmetricEigen<f64, nalgebra::U3>,
}

impl Propagator {
    pub fn new(h: &Matrix3<f64>) -> Self {
        Self {
            eigen: SymmetricEigen::new(*h),
        }
    }

    pub fn evolve(&self, psi0: &[Complex64; 3], t: f64) -> [Complex64; 3] {
        let v = &self.eigen.eigenvectors;
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for k in 0..3 {
            let proj: Complex64 = (0..3).map(|j| psi0[j] * v[(j, k)]).sum();
            let phase = Complex64::from_polar(1.0, -2.0 * PI * self.eigen.eigenvalues[k] * t);
            for (i, o) in out.iter_mut().enumerate() {
                *o += v[(i, k)] * phase * proj;
            }
        }
        out
    }
}

fn up_state() -> [Complex64; 3] {
    [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
    ]
}

/// Populations of (↑, ↓, spectator) at time t after starting in |↑⟩.
pub fn rabi_populations(cfg: &RabiConfig, t: f64) -> Result<[f64; 3]> {
    cfg.validate()?;
    ensure(t.is_finite() && t >= 0.0, "t", "must be finite and >= 0")?;
    let psi = Propagator::new(&cfg.hamiltonian()).evolve(&up_state(), t);
    Ok(psi.map(|c| c.norm_sqr()))
}

/// P(↑) at time t. Without the spectator this is cos²(πΩt).
pub fn rabi_population(cfg: &RabiConfig, t: f64) -> Result<f64> {
    if !cfg.include_spectator {
        cfg.validate()?;
        ensure(t.is_finite() && t >= 0.0, "t", "must be finite and >= 0")?;
        return Ok((PI * cfg.omega * t).cos().powi(2));
    }
    Ok(rabi_populations(cfg, t)?[0])
}

/// Largest spectator population over a time grid.
pub fn spectator_leakage(cfg: &RabiConfig, times: &[f64]) -> Result<f64> {
    let cfg = RabiConfig {
        include_spectator: true,
        ..cfg.clone()
    };
    times
        .iter()
        .map(|&t| rabi_populations(&cfg, t).map(|p| p[2]))
        .try_fold(0.0f64, |m, p| p.map(|p| m.max(p)))
}

/// Two-level estimate (Ω/k)²/((Ω/k)² + Δ²) of the spectator leakage scale.
pub fn leakage_scale(cfg: &RabiConfig) -> f64 {
    let c = (cfg.omega / cfg.spectator_suppression).powi(2);
    c / (c + cfg.spectator_detuning.powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeemanSplittings {
    pub p32_mhz: f64,
    pub s12_mhz: f64,
}

/// Splitting between neighbouring m_J sublevels at field B (gauss).
pub fn zeeman_splittings(b_gauss: f64) -> Result<ZeemanSplittings> {
    ensure(
        b_gauss.is_finite() && b_gauss >= 0.0,
        "b_gauss",
        "must be finite and >= 0",
    )?;
    Ok(ZeemanSplittings {
        p32_mhz: G_P32 * BOHR_MAGNETON * b_gauss,
        s12_mhz: G_S12 * BOHR_MAGNETON * b_gauss,
    })
}

/// 1/|V(d0)|, µs, for the pair shift at the rms pair distance.
pub fn washout_timescale(model: &PairModel, geom: &CloudGeometry) -> Result<f64> {
    let d0 = crate::ensemble::rms_pair_distance(geom);
    let v = pair_potential(model, d0, 0.0)?;
    ensure(v != 0.0, "model", "pair shift vanishes at d0")?;
    Ok(1.0 / v.abs())
}

const CONTRAST_CHUNK: u64 = 1024;

/// Ensemble envelope |⟨exp(2πi·V(R)·t)⟩| over random pairs drawn from the
/// cloud. Pair angles are measured from the probe direction. The envelope
/// does not depend on Ω in this phase model; Ω is validated only.
pub fn two_excitation_contrast(
    model: &PairModel,
    geom: &CloudGeometry,
    omega: f64,
    t_grid: &[f64],
    n_pairs: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    ensure(
        model.c6_parallel.is_finite() && model.c3.is_finite(),
        "model",
        "coefficients must be finite",
    )?;
    geom.validate()?;
    ensure(omega.is_finite() && omega > 0.0, "omega", "must be > 0")?;
    ensure(n_pairs >= 1000, "n_pairs", "must be >= 1000")?;
    ensure(
        t_grid.iter().all(|t| t.is_finite() && *t >= 0.0),
        "t_grid",
        "times must be finite and >= 0",
    )?;
    let axis = geom.probe_direction();
    let s = SQRT_2 * Vector3::new(geom.sigma_x, geom.sigma_y, geom.sigma_z);
    let chunks = n_pairs.div_ceil(CONTRAST_CHUNK);
    let partial: Vec<Vec<Complex64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, "washout", c);
            let todo = CONTRAST_CHUNK.min(n_pairs - c * CONTRAST_CHUNK);
            let mut acc = vec![Complex64::new(0.0, 0.0); t_grid.len()];
            let mut done = 0;
            while done < todo {
                let d = Vector3::new(
                    s.x * rng.sample::<f64, _>(StandardNormal),
                    s.y * rng.sample::<f64, _>(StandardNormal),
                    s.z * rng.sample::<f64, _>(StandardNormal),
                );
                let r = d.norm();
                if r == 0.0 {
                    continue;
                }
                let theta = (d.dot(&axis) / r).clamp(-1.0, 1.0).acos();
                let v = pair_potential(model, r, theta).expect("positive separation");
                for (a, &t) in acc.iter_mut().zip(t_grid) {
                    *a += Complex64::from_polar(1.0, 2.0 * PI * v * t);
                }
                done += 1;
            }
            acc
        })
        .collect();
    let mut total = vec![Complex64::new(0.0, 0.0); t_grid.len()];
    for p in &partial {
        for (t, a) in total.iter_mut().zip(p) {
            *t += a;
        }
    }
    Ok(total.iter().map(|z| z.norm() / n_pairs as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementChannel {
    pub f_prep: f64,
    pub f_det: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub p: f64,
    pub out_of_range: bool,
}

impl MeasurementChannel {
    pub fn new(f_prep: f64, f_det: f64) -> Result<Self> {
        let ch = Self { f_prep, f_det };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<()> {
        ensure((0.0..=1.0).contains(&self.f_prep), "f_prep", "must lie in [0, 1]")?;
        ensure((0.0..=1.0).contains(&self.f_det), "f_det", "must lie in [0, 1]")
    }

    /// Range [F_p(1−F_d), F_p·F_d] of observable fractions.
    pub fn range(&self) -> (f64, f64) {
        (self.f_prep * (1.0 - self.f_det), self.f_prep * self.f_det)
    }

    /// p̃ = F_p[(1−F_d) + (2F_d−1)p].
    pub fn apply(&self, p: f64) -> Result<f64> {
        self.validate()?;
        ensure((0.0..=1.0).contains(&p), "p", "must lie in [0, 1]")?;
        Ok(self.f_prep * ((1.0 - self.f_det) + (2.0 * self.f_det - 1.0) * p))
    }

    pub fn invert(&self, observed: f64) -> Result<Inversion> {
        self.validate()?;
        ensure(self.f_det > 0.5, "f_det", "must exceed 0.5 for inversion")?;
        ensure(self.f_prep > 0.0, "f_prep", "must be > 0 for inversion")?;
        ensure(observed.is_finite(), "observed", "must be finite")?;
        let p = (observed / self.f_prep - (1.0 - self.f_det)) / (2.0 * self.f_det - 1.0);
        let (lo, hi) = self.range();
        let out_of_range = observed < lo || observed > hi;
        Ok(Inversion {
            p: if out_of_range { p.clamp(0.0, 1.0) } else { p },
            out_of_range,
        })
    }
}

/// Two reference measurements bracketing a data set: the observed fraction
/// with the qubit left in ↑ and after a calibrated π pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftReference {
    pub up: f64,
    pub down: f64,
}

/// Maps observed fractions affinely so that the references land on the
/// channel's nominal end points.
pub fn correct_drift(
    ch: &MeasurementChannel,
    reference: &DriftReference,
    observed: &[f64],
) -> Result<Vec<f64>> {
    ensure(
        reference.up.is_finite() && reference.down.is_finite() && reference.up != reference.down,
        "reference",
        "up and down references must differ",
    )?;
    let up = ch.apply(1.0)?;
    let down = ch.apply(0.0)?;
    Ok(observed
        .iter()
        .map(|&y| down + (up - down) * (y - reference.down) / (reference.up - reference.down))
        .collect())
}

/// Binomially sampled, channel-degraded P(↑) on a time grid.
pub fn synthetic_rabi(
    cfg: &RabiConfig,
    ch: &MeasurementChannel,
    times: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let q = ch.apply(rabi_population(cfg, t)?.clamp(0.0, 1.0))?;
            let mut rng = stream_rng(seed, "rabi", i as u64);
            let k = Binomial::new(cfg.n_repetitions, q)
                .map_err(|e| Error::Domain(e.to_string()))?
                .sample(&mut rng);
            Ok(k as f64 / cfg.n_repetitions as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiFit {
    /// MHz.
    pub omega: f64,
    pub contrast: f64,
    /// Fractional contrast loss per 2π rotation.
    pub contrast_decay_per_2pi: f64,
    pub residual_sum_squares: f64,
    pub converged: bool,
    /// Observed points outside the channel range, clamped on inversion.
    pub n_clamped: usize,
}

/// ½(1 + C₀(1−δC)^{Ωt} cos 2πΩt).
pub fn rabi_model(omega: f64, contrast: f64, decay: f64, t: f64) -> f64 {
    0.5 * (1.0 + contrast * (1.0 - decay).powf(omega * t) * (2.0 * PI * omega * t).cos())
}

/// Inverts the channel on each point, then fits the damped-cosine model.
/// Ω is seeded by a grid scan over frequencies resolvable on the time grid.
pub fn fit_rabi(times: &[f64], observed: &[f64], ch: &MeasurementChannel) -> Result<RabiFit> {
    if times.len() != observed.len() {
        return Err(Error::Domain(format!(
            "{} times but {} observations",
            times.len(),
            observed.len()
        )));
    }
    if times.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "{} points, need at least 8",
            times.len()
        )));
    }
    let mut ps = Vec::with_capacity(observed.len());
    let mut n_clamped = 0;
    for &y in observed {
        let inv = ch.invert(y)?;
        n_clamped += usize::from(inv.out_of_range);
        ps.push(inv.p);
    }
    let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = t_max - t_min;
    ensure(span > 0.0, "times", "must span a non-zero interval")?;
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min_step = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let f_lo = 1.0 / span;
    let f_hi = 0.5 / min_step;
    let sse = |omega: f64| -> f64 {
        times
            .iter()
            .zip(&ps)
            .map(|(&t, &p)| (p - rabi_model(omega, 1.0, 0.0, t)).powi(2))
            .sum()
    };
    let n_grid = 4000;
    let omega0 = (0..=n_grid)
        .map(|i| f_lo + (f_hi - f_lo) * i as f64 / n_grid as f64)
        .min_by(|a, b| sse(*a).total_cmp(&sse(*b)))
        .expect("non-empty grid");
    if span * omega0 < 2.0 {
        return Err(Error::InsufficientData(format!(
            "data span {span} µs covers fewer than two periods at Ω = {omega0} MHz"
        )));
    }
    let fit = least_squares_fit(
        |q: &[f64], t: f64| rabi_model(q[0], q[1], q[2], t),
        times,
        &ps,
        &[omega0, 0.95, 0.0],
        vec![
            Bound::Positive,
            Bound::Interval(0.0, 1.5),
            Bound::Interval(-0.1, 0.5),
        ],
        &MinimizeOptions::default(),
    )?;
    Ok(RabiFit {
        omega: fit.fit.point[0],
        contrast: fit.fit.point[1],
        contrast_decay_per_2pi: fit.fit.point[2],
        residual_sum_squares: fit.residual_sum_squares,
        converged: fit.fit.converged,
        n_clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyConfig {
    /// µs.
    pub t2_star: f64,
    pub amplitude: f64,
    /// Phases of the second π/2 pulse, rad.
    pub phase_grid: Vec<f64>,
}

impl Default for RamseyConfig {
    fn default() -> Self {
        Self {
            t2_star: 15.0,
            amplitude: 0.88,
            phase_grid: (0..12).map(|k| 2.0 * PI * k as f64 / 12.0).collect(),
        }
    }
}

impl RamseyConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.t2_star.is_finite() && self.t2_star > 0.0,
            "t2_star",
            "must be finite and > 0",
        )?;
        ensure(
            (0.0..=1.0).contains(&self.amplitude),
            "amplitude",
            "must lie in [0, 1]",
        )?;
        ensure(
            self.phase_grid.iter().all(|p| p.is_finite()),
            "phase_grid",
            "phases must be finite",
        )
    }

    /// Standard deviation of the static detuning, rad/µs. Gives a contrast
    /// envelope exp(−(τ/T2*)²).
    pub fn detuning_sigma(&self) -> f64 {
        SQRT_2 / self.t2_star
    }
}

/// A·exp(−(τ/T2*)²).
pub fn ramsey_contrast(cfg: &RamseyConfig, tau: f64) -> f64 {
    cfg.amplitude * (-(tau / cfg.t2_star).powi(2)).exp()
}

/// Expected fraction ½(1 + A·exp(−(τ/T2*)²)·cos φ).
pub fn ramsey_expected(cfg: &RamseyConfig, tau: f64, phase: f64) -> f64 {
    0.5 * (1.0 + ramsey_contrast(cfg, tau) * phase.cos())
}

/// Fraction of n_shots outcomes in ↑. Each shot has its own static detuning.
pub fn ramsey_signal(
    cfg: &RamseyConfig,
    tau: f64,
    phase: f64,
    n_shots: u64,
    seed: u64,
) -> Result<f64> {
    cfg.validate()?;
    ensure(tau.is_finite() && tau >= 0.0, "tau", "must be finite and >= 0")?;
    ensure(n_shots >= 1, "n_shots", "must be >= 1")?;
    let sigma = cfg.detuning_sigma();
    let mut rng = rng_from_seed(seed);
    let mut ups = 0u64;
    for _ in 0..n_shots {
        let delta = sigma * rng.sample::<f64, _>(StandardNormal);
        let p = 0.5 * (1.0 + cfg.amplitude * (delta * tau + phase).cos());
        ups += u64::from(rng.random::<f64>() < p);
    }
    Ok(ups as f64 / n_shots as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fringe {
    pub tau: f64,
    pub phases: Vec<f64>,
    pub fractions: Vec<f64>,
    pub offset: f64,
    pub contrast: f64,
}

/// Linear least squares of fractions on [1, cos φ, sin φ]; contrast is
/// 2√(a² + b²).
pub fn fit_fringe(tau: f64, phases: &[f64], fractions: &[f64]) -> Result<Fringe> {
    ensure(
        phases.len() == fractions.len() && phases.len() >= 3,
        "phases",
        "need at least three (phase, fraction) pairs",
    )?;
    let n = phases.len();
    let design = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => phases[i].cos(),
        _ => phases[i].sin(),
    });
    let y = DVector::from_column_slice(fractions);
    let coef = design
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::Domain(e.to_string()))?;
    Ok(Fringe {
        tau,
        phases: phases.to_vec(),
        fractions: fractions.to_vec(),
        offset: coef[0],
        contrast: 2.0 * coef[1].hypot(coef[2]),
    })
}

/// Simulated phase scans at each τ, each fitted to a fringe.
pub fn ramsey_scan(
    cfg: &RamseyConfig,
    taus: &[f64],
    shots_per_phase: u64,
    seed: u64,
) -> Result<Vec<Fringe>> {
    cfg.validate()?;
    let np = cfg.phase_grid.len() as u64;
    taus.par_iter()
        .enumerate()
        .map(|(i, &tau)| {
            let fractions = cfg
                .phase_grid
                .iter()
                .enumerate()
                .map(|(j, &phase)| {
                    let s = crate::seed::seed_derive(seed, "ramsey", i as u64 * np + j as u64);
                    ramsey_signal(cfg, tau, phase, shots_per_phase, s)
                })
                .collect::<Result<Vec<_>>>()?;
            fit_fringe(tau, &cfg.phase_grid, &fractions)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyFit {
    pub amplitude: f64,
    /// µs.
    pub t2_star: f64,
    pub residual_sum_squares: f64,
    pub converged: bool,
    /// T2* ≥ 10× the longest τ: no decay resolved.
    pub no_decay: bool,
}

/// Least squares on A·exp(−(τ/T2*)²).
pub fn fit_ramsey(taus: &[f64], contrasts: &[f64]) -> Result<RamseyFit> {
    if taus.len() != contrasts.len() {
        return Err(Error::Domain(format!(
            "{} delays but {} contrasts",
            taus.len(),
            contrasts.len()
        )));
    }
    if taus.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "{} delays, need at least 5",
            taus.len()
        )));
    }
    let tau_max = taus.iter().cloned().fold(0.0f64, f64::max);
    ensure(tau_max > 0.0, "taus", "need a positive delay")?;
    let a0 = contrasts
        .iter()
        .zip(taus)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(c, _)| c.max(1e-3))
        .expect("non-empty");
    let fit = least_squares_fit(
        |q: &[f64], tau: f64| q[0] * (-(tau / q[1]).powi(2)).exp(),
        taus,
        contrasts,
        &[a0, tau_max],
        vec![Bound::Positive, Bound::Positive],
        &MinimizeOptions::default(),
    )?;
    let t2 = fit.fit.point[1];
    Ok(RamseyFit {
        amplitude: fit.fit.point[0],
        t2_star: t2,
        residual_sum_squares: fit.residual_sum_squares,
        converged: fit.fit.converged,
        no_decay: t2 >= 10.0 * tau_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interactions::Branch;
    use proptest::prelude::*;

    fn rk4_populations(h: &Matrix3<f64>, t: f64, steps: usize) -> [f64; 3] {
        let rhs = |psi: &[Complex64; 3]| -> [Complex64; 3] {
            let mut out = [Complex64::new(0.0, 0.0); 3];
            for i in 0..3 {
                for j in 0..3 {
                    out[i] += Complex64::new(0.0, -2.0 * PI * h[(i, j)]) * psi[j];
                }
            }
            out
        };
        let add = |a: &[Complex64; 3], b: &[Complex64; 3], s: f64| -> [Complex64; 3] {
            [a[0] + b[0] * s, a[1] + b[1] * s, a[2] + b[2] * s]
        };
        let dt = t / steps as f64;
        let mut psi = up_state();
        for _ in 0..steps {
            let k1 = rhs(&psi);
            let k2 = rhs(&add(&psi, &k1, dt / 2.0));
            let k3 = rhs(&add(&psi, &k2, dt / 2.0));
            let k4 = rhs(&add(&psi, &k3, dt));
            for i in 0..3 {
                psi[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
            }
        }
        psi.map(|c| c.norm_sqr())
    }

    #[test]
    fn starts_up() {
        let cfg = RabiConfig::default();
        assert_eq!(rabi_population(&cfg, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn pi_time_near_ninety_ns() {
        let cfg = RabiConfig::default();
        let t_pi = cfg.pi_time();
        assert!((t_pi - 0.0943).abs() < 1e-4);
        assert!((t_pi - 0.090).abs() < 0.006);
        assert!(rabi_population(&cfg, t_pi).unwrap() < 1e-24);
    }

    #[test]
    fn period_from_argmin_spacing() {
        let cfg = RabiConfig::default();
        // Ternary search for the first two minima.
        let argmin = |mut a: f64, mut b: f64| {
            for _ in 0..200 {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                if rabi_population(&cfg, m1).unwrap() < rabi_population(&cfg, m2).unwrap() {
                    b = m2;
                } else {
                    a = m1;
                }
            }
            0.5 * (a + b)
        };
        let t1 = argmin(0.05, 0.14);
        let t2 = argmin(0.24, 0.33);
        assert!((t2 - t1 - 1.0 / cfg.omega).abs() < 1e-9);
    }

    #[test]
    fn spectator_matches_rk4_oracle() {
        let cfg = RabiConfig {
            include_spectator: true,
            ..Default::default()
        };
        let h = cfg.hamiltonian();
        for &t in &[0.05, 0.2, 0.5, 1.0] {
            let exact = rabi_populations(&cfg, t).unwrap();
            let oracle = rk4_populations(&h, t, 20_000);
            for k in 0..3 {
                assert!((exact[k] - oracle[k]).abs() < 1e-6, "t={t} k={k}");
            }
        }
    }

    #[test]
    fn spectator_leakage_in_two_level_band() {
        let cfg = RabiConfig {
            include_spectator: true,
            ..Default::default()
        };
        let grid: Vec<f64> = (0..=4000).map(|i| i as f64 * 5e-4).collect();
        let leak = spectator_leakage(&cfg, &grid).unwrap();
        let scale = leakage_scale(&cfg);
        assert!(leak > 0.2 * scale && leak < 5.0 * scale, "{leak} vs {scale}");
        assert!(leak < 0.03);
    }

    #[test]
    fn zeeman_values() {
        let z = zeeman_splittings(9.0).unwrap();
        assert!((z.p32_mhz - 16.795).abs() < 1e-3);
        assert!((z.s12_mhz - 25.193).abs() < 1e-3);
        assert_eq!(
            zeeman_splittings(0.0).unwrap(),
            ZeemanSplittings {
                p32_mhz: 0.0,
                s12_mhz: 0.0
            }
        );
        assert!(zeeman_splittings(-1.0).is_err());
    }

    #[test]
    fn washout_bracket() {
        let geom = CloudGeometry::measured();
        let fast = washout_timescale(&PairModel::r_rprime(Branch::Plus), &geom).unwrap();
        let slow = washout_timescale(&PairModel::r_rprime(Branch::Minus), &geom).unwrap();
        // Hand evaluation: d0 = √(2(2.4² + 4.6² + 2.9²)).
        let d0 = (2.0f64 * (2.4 * 2.4 + 4.6 * 4.6 + 2.9 * 2.9)).sqrt();
        let vdw = 6.31e6 / d0.powi(6);
        let dd = 2.36e4 / d0.powi(3);
        assert!((fast - 1.0 / (vdw + dd)).abs() < 1e-12);
        assert!((slow - 1.0 / (dd - vdw).abs()).abs() < 1e-12);
        assert!(fast > 0.017 && slow < 0.046, "{fast} {slow}");
    }

    #[test]
    fn contrast_without_interaction() {
        let model = PairModel {
            c6_parallel: 0.0,
            c3: 0.0,
            ..PairModel::r_rprime(Branch::Plus)
        };
        let t: Vec<f64> = (0..10).map(|i| i as f64 * 0.05).collect();
        let c = two_excitation_contrast(&model, &CloudGeometry::measured(), 5.3, &t, 2000, 1)
            .unwrap();
        assert!(c.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn contrast_washes_out() {
        let model = PairModel::r_rprime(Branch::Minus);
        let t: Vec<f64> = (0..=50).map(|i| i as f64 * 0.01).collect();
        let c = two_excitation_contrast(&model, &CloudGeometry::measured(), 5.3, &t, 20_000, 3)
            .unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!(c.iter().any(|&x| x <= 0.5));
    }

    #[test]
    fn contrast_needs_pairs() {
        let model = PairModel::r_rprime(Branch::Plus);
        assert!(
            two_excitation_contrast(&model, &CloudGeometry::measured(), 5.3, &[0.0], 999, 1)
                .is_err()
        );
    }

    #[test]
    fn channel_values() {
        let ch = MeasurementChannel::new(0.93, 0.92).unwrap();
        assert!((ch.apply(1.0).unwrap() - 0.8556).abs() < 1e-12);
        assert!((ch.apply(0.5).unwrap() - 0.465).abs() < 1e-12);
        let id = MeasurementChannel::new(1.0, 1.0).unwrap();
        assert_eq!(id.apply(0.3).unwrap(), 0.3);
        let top = ch.invert(0.93 * 0.92).unwrap();
        assert!((top.p - 1.0).abs() < 1e-12 && !top.out_of_range);
        let zero = ch.invert(0.0).unwrap();
        assert!(zero.out_of_range);
        assert_eq!(zero.p, 0.0);
        assert!(MeasurementChannel::new(0.9, 0.5).unwrap().invert(0.3).is_err());
        assert!(MeasurementChannel::new(1.1, 0.9).is_err());
    }

    #[test]
    fn noiseless_rabi_fit() {
        let cfg = RabiConfig::default();
        let ch = MeasurementChannel::new(0.93, 0.92).unwrap();
        let t: Vec<f64> = (0..60).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&t| ch.apply(rabi_population(&cfg, t).unwrap()).unwrap())
            .collect();
        let fit = fit_rabi(&t, &y, &ch).unwrap();
        assert!((fit.omega - 5.3).abs() < 1e-4, "{fit:?}");
        assert!(fit.contrast_decay_per_2pi.abs() <= 1e-3, "{fit:?}");
    }

    #[test]
    fn rabi_fit_needs_two_periods() {
        let ch = MeasurementChannel::new(1.0, 1.0).unwrap();
        let t: Vec<f64> = (0..10).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = t.iter().map(|t| (PI * 5.3 * t).cos().powi(2)).collect();
        assert!(matches!(
            fit_rabi(&t, &y, &ch),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn ramsey_analytic_points() {
        let cfg = RamseyConfig::default();
        assert_eq!(ramsey_contrast(&cfg, 0.0), 0.88);
        assert!((ramsey_contrast(&cfg, 15.0) - 0.88 / std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn ramsey_without_dephasing() {
        let cfg = RamseyConfig {
            t2_star: f64::INFINITY,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        // Very long T2* stands in for σ = 0.
        let cfg = RamseyConfig {
            t2_star: 1e12,
            amplitude: 1.0,
            ..Default::default()
        };
        assert_eq!(ramsey_signal(&cfg, 20.0, 0.0, 500, 4).unwrap(), 1.0);
    }

    #[test]
    fn fringe_fit_exact() {
        let phases: Vec<f64> = (0..12).map(|k| 2.0 * PI * k as f64 / 12.0).collect();
        let y: Vec<f64> = phases
            .iter()
            .map(|p| 0.5 * (1.0 + 0.6 * (p + 0.4).cos()))
            .collect();
        let f = fit_fringe(1.0, &phases, &y).unwrap();
        assert!((f.contrast - 0.6).abs() < 1e-12);
        assert!((f.offset - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ramsey_fit_exact_and_flat() {
        let cfg = RamseyConfig::default();
        let taus: Vec<f64> = (0..8).map(|i| 3.0 * i as f64).collect();
        let c: Vec<f64> = taus.iter().map(|&t| ramsey_contrast(&cfg, t)).collect();
        let fit = fit_ramsey(&taus, &c).unwrap();
        assert!((fit.t2_star - 15.0).abs() < 1e-4 && (fit.amplitude - 0.88).abs() < 1e-6);
        assert!(!fit.no_decay);
        let flat = vec![0.88; taus.len()];
        assert!(fit_ramsey(&taus, &flat).unwrap().no_decay);
        assert!(fit_ramsey(&taus[..4], &c[..4]).is_err());
    }

    proptest! {
        #[test]
        fn propagator_is_unitary(omega in 0.1f64..20.0, k in 1.0f64..50.0, det in -40.0f64..40.0, t in 0.0f64..5.0) {
            let cfg = RabiConfig {
                omega,
                spectator_suppression: k,
                spectator_detuning: det,
                include_spectator: true,
                ..Default::default()
            };
            let p = rabi_populations(&cfg, t).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn channel_round_trip(fp in 0.01f64..=1.0, fd in 0.5001f64..=1.0, p in 0.0f64..=1.0) {
            let ch = MeasurementChannel::new(fp, fd).unwrap();
            let inv = ch.invert(ch.apply(p).unwrap()).unwrap();
            prop_assert!((inv.p - p).abs() < 1e-12);
        }

        #[test]
        fn washout_scale_invariance(a in 0.2f64..5.0) {
            let model = PairModel::r_rprime(Branch::Minus);
            let scaled = PairModel::exchange_plus_vdw(model.c6_parallel * a, model.c3 * a, Branch::Minus).unwrap();
            let t = [0.0, 0.01, 0.03, 0.08];
            let ts: Vec<f64> = t.iter().map(|x| x / a).collect();
            let geom = CloudGeometry::measured();
            let c1 = two_excitation_contrast(&model, &geom, 5.3, &t, 1000, 9).unwrap();
            let c2 = two_excitation_contrast(&scaled, &geom, 5.3, &ts, 1000, 9).unwrap();
            for (x, y) in c1.iter().zip(&c2) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn zeeman_linear(b in 0.0f64..100.0) {
            let z1 = zeeman_splittings(b).unwrap();
            let z2 = zeeman_splittings(2.0 * b).unwrap();
            prop_assert!((z2.p32_mhz - 2.0 * z1.p32_mhz).abs() < 1e-9);
            prop_assert!((z2.s12_mhz - 2.0 * z1.s12_mhz).abs() < 1e-9);
        }
    }
}

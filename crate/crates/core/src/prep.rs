//! Three-photon preparation of the r′ state: a four-level ladder
//! g ↔ e ↔ r ↔ r′ driven by probe, control and microwave fields.
//!
//! Amplitudes obey da/dt = −2πi·H(t)·a with H in MHz and t in µs.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure, Error, Result};

/// Natural linewidth of the 5P3/2 intermediate state, MHz.
pub const GAMMA_E_RB: f64 = 6.07;
/// Default integration step, µs.
pub const DEFAULT_DT: f64 = 1e-3;
/// Largest final-population change tolerated when the step is halved.
pub const CONVERGENCE_TOL: f64 = 1e-6;

pub const G: usize = 0;
pub const E: usize = 1;
pub const R: usize = 2;
pub const RP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RampShape {
    Constant,
    SinSquaredOn,
    SinSquaredOff,
    /// Linear rise from 0 to the amplitude.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseRamp {
    pub shape: RampShape,
    pub t_start: f64,
    pub t_end: f64,
    /// Peak Rabi frequency, MHz.
    pub amplitude: f64,
}

impl PulseRamp {
    pub fn new(shape: RampShape, t_start: f64, t_end: f64, amplitude: f64) -> Self {
        Self {
            shape,
            t_start,
            t_end,
            amplitude,
        }
    }

    fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t <= self.t_end
    }

    pub fn value(&self, t: f64) -> f64 {
        if !self.contains(t) {
            return 0.0;
        }
        let x = (t - self.t_start) / (self.t_end - self.t_start);
        let a = self.amplitude;
        match self.shape {
            RampShape::Constant => a,
            RampShape::SinSquaredOn => a * (0.5 * PI * x).sin().powi(2),
            RampShape::SinSquaredOff => a * (0.5 * PI * x).cos().powi(2),
            RampShape::Linear => a * x,
        }
    }
}

/// Piecewise envelope; the first segment covering t wins, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Envelope(pub Vec<PulseRamp>);

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        self.0
            .iter()
            .find(|s| s.contains(t))
            .map_or(0.0, |s| s.value(t))
    }

    pub fn constant(amplitude: f64, duration: f64) -> Self {
        Envelope(vec![PulseRamp::new(RampShape::Constant, 0.0, duration, amplitude)])
    }

    fn validate(&self, name: &'static str, duration: f64) -> Result<()> {
        for s in &self.0 {
            ensure(
                s.t_start < s.t_end && s.t_start >= 0.0 && s.t_end <= duration + 1e-12,
                name,
                "segments need t_start < t_end inside [0, duration]",
            )?;
            ensure(s.amplitude >= 0.0, name, "amplitudes must be >= 0")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelopes {
    pub probe: Envelope,
    pub control: Envelope,
    pub microwave: Envelope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    /// Detuning of e, MHz.
    pub delta_e: f64,
    /// Detuning of r from two-photon resonance, MHz.
    pub delta_r: f64,
    /// +1 places r below the two-photon resonance, −1 above.
    pub delta_r_sign: f64,
    pub omega_p_peak: f64,
    pub omega_c_peak: f64,
    pub omega_mw: f64,
    /// µs.
    pub duration: f64,
    pub three_photon_detuning: f64,
    /// Decay rate of e, MHz; zero keeps the evolution unitary.
    pub gamma_e: f64,
    /// Rise and fall time of the optical ramps, µs.
    pub ramp_time: f64,
    /// Duration of the closing microwave ramp-down, µs.
    pub mw_ramp_time: f64,
    pub mw_rampdown: bool,
    /// Replaces the built-in sequence when set.
    #[serde(default)]
    pub custom: Option<Envelopes>,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            delta_e: 100.0,
            delta_r: 100.0,
            delta_r_sign: 1.0,
            omega_p_peak: 40.0,
            omega_c_peak: 6.5,
            omega_mw: 40.0,
            duration: 3.0,
            three_photon_detuning: 0.0,
            gamma_e: 0.0,
            ramp_time: 0.3,
            mw_ramp_time: 0.3,
            mw_rampdown: true,
            custom: None,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.duration > 0.0, "duration", "must be > 0")?;
        ensure(self.omega_p_peak >= 0.0, "omega_p_peak", "must be >= 0")?;
        ensure(self.omega_c_peak >= 0.0, "omega_c_peak", "must be >= 0")?;
        ensure(self.omega_mw >= 0.0, "omega_mw", "must be >= 0")?;
        ensure(self.gamma_e >= 0.0, "gamma_e", "must be >= 0")?;
        ensure(
            self.delta_r_sign == 1.0 || self.delta_r_sign == -1.0,
            "delta_r_sign",
            "must be +1 or -1",
        )?;
        ensure(self.mw_ramp_time >= 0.0, "mw_ramp_time", "must be >= 0")?;
        if self.custom.is_none() {
            ensure(
                self.ramp_time > 0.0 && 4.0 * self.ramp_time <= self.duration,
                "ramp_time",
                "must be > 0 and fit four times into the duration",
            )?;
            ensure(
                self.mw_ramp_time <= self.duration,
                "mw_ramp_time",
                "must not exceed the duration",
            )?;
        }
        let env = self.envelopes();
        env.probe.validate("probe", self.duration)?;
        env.control.validate("control", self.duration)?;
        env.microwave.validate("microwave", self.duration)
    }

    /// Probe rises first and stays on, the control pulse follows and closes
    /// before the end, and the microwave is on throughout except for an
    /// optional final ramp-down.
    pub fn envelopes(&self) -> Envelopes {
        if let Some(custom) = &self.custom {
            return custom.clone();
        }
        let (t, tr) = (self.duration, self.ramp_time);
        use RampShape::*;
        let probe = Envelope(vec![
            PulseRamp::new(SinSquaredOn, 0.0, tr, self.omega_p_peak),
            PulseRamp::new(Constant, tr, t, self.omega_p_peak),
        ]);
        let control = Envelope(vec![
            PulseRamp::new(SinSquaredOn, tr, 2.0 * tr, self.omega_c_peak),
            PulseRamp::new(Constant, 2.0 * tr, t - 2.0 * tr, self.omega_c_peak),
            PulseRamp::new(SinSquaredOff, t - 2.0 * tr, t - tr, self.omega_c_peak),
        ]);
        let down = self.mw_ramp_time;
        let microwave = if self.mw_rampdown && down > 0.0 {
            Envelope(vec![
                PulseRamp::new(Constant, 0.0, t - down, self.omega_mw),
                PulseRamp::new(SinSquaredOff, t - down, t, self.omega_mw),
            ])
        } else {
            Envelope::constant(self.omega_mw, t)
        };
        Envelopes {
            probe,
            control,
            microwave,
        }
    }
}

fn ladder(
    cfg: &PrepConfig,
    p: f64,
    c: f64,
    m: f64,
) -> Matrix4<Complex64> {
    let re = |x: f64| Complex64::new(x, 0.0);
    let mut h = Matrix4::<Complex64>::zeros();
    h[(E, E)] = Complex64::new(-cfg.delta_e, -0.5 * cfg.gamma_e);
    h[(R, R)] = re(-cfg.delta_r_sign * cfg.delta_r);
    h[(RP, RP)] = re(-cfg.three_photon_detuning);
    h[(G, E)] = re(0.5 * p);
    h[(E, G)] = re(0.5 * p);
    h[(E, R)] = re(0.5 * c);
    h[(R, E)] = re(0.5 * c);
    h[(R, RP)] = re(0.5 * m);
    h[(RP, R)] = re(0.5 * m);
    h
}

fn hamiltonian_with(cfg: &PrepConfig, env: &Envelopes, t: f64) -> Matrix4<Complex64> {
    ladder(
        cfg,
        env.probe.value(t),
        env.control.value(t),
        env.microwave.value(t),
    )
}

/// Rotating-frame Hamiltonian in MHz at time t.
pub fn build_hamiltonian(cfg: &PrepConfig, t: f64) -> Result<Matrix4<Complex64>> {
    if !(0.0..=cfg.duration).contains(&t) {
        return Err(Error::TimeOutOfRange {
            t,
            duration: cfg.duration,
        });
    }
    Ok(hamiltonian_with(cfg, &cfg.envelopes(), t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelState {
    pub amplitudes: [Complex64; 4],
}

impl LevelState {
    pub fn ground() -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self {
            amplitudes: [Complex64::new(1.0, 0.0), z, z, z],
        }
    }

    pub fn populations(&self) -> [f64; 4] {
        self.amplitudes.map(|a| a.norm_sqr())
    }

    pub fn norm(&self) -> f64 {
        self.populations().iter().sum()
    }

    fn vector(&self) -> Vector4<Complex64> {
        Vector4::from_column_slice(&self.amplitudes)
    }

    fn from_vector(v: &Vector4<Complex64>) -> Self {
        Self {
            amplitudes: [v[0], v[1], v[2], v[3]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Integrator {
    /// Exact propagator of H at the step midpoint; unitary for γe = 0.
    #[default]
    ExponentialMidpoint,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub populations: Vec<[f64; 4]>,
    pub final_state: LevelState,
    /// Largest population reached by each level along the way.
    pub max_population: [f64; 4],
}

impl Trajectory {
    pub fn final_populations(&self) -> [f64; 4] {
        self.final_state.populations()
    }
}

/// Integrates from the ground state over [0, duration] with a fixed step
/// no larger than `dt`.
pub fn evolve(cfg: &PrepConfig, dt: f64, integrator: Integrator) -> Result<Trajectory> {
    cfg.validate()?;
    ensure(dt > 0.0 && dt <= cfg.duration, "dt", "must lie in (0, duration]")?;
    let env = cfg.envelopes();
    let n = (cfg.duration / dt).ceil() as usize;
    let h = cfg.duration / n as f64;
    let mut a = LevelState::ground().vector();
    let mut times = Vec::with_capacity(n + 1);
    let mut pops = Vec::with_capacity(n + 1);
    let record = |a: &Vector4<Complex64>| [0, 1, 2, 3].map(|k| a[k].norm_sqr());
    times.push(0.0);
    pops.push(record(&a));
    let mut max_pop = record(&a);
    let minus_two_pi_i = Complex64::new(0.0, -2.0 * PI);
    for k in 0..n {
        let t0 = k as f64 * h;
        a = match integrator {
            Integrator::ExponentialMidpoint => {
                let gen = hamiltonian_with(cfg, &env, t0 + 0.5 * h) * (minus_two_pi_i * h);
                gen.exp() * a
            }
            Integrator::Rk4 => {
                let f = |t: f64, y: &Vector4<Complex64>| {
                    hamiltonian_with(cfg, &env, t) * y * minus_two_pi_i
                };
                let k1 = f(t0, &a);
                let k2 = f(t0 + 0.5 * h, &(a + k1 * Complex64::from(0.5 * h)));
                let k3 = f(t0 + 0.5 * h, &(a + k2 * Complex64::from(0.5 * h)));
                let k4 = f(t0 + h, &(a + k3 * Complex64::from(h)));
                a + (k1 + k2 * Complex64::from(2.0) + k3 * Complex64::from(2.0) + k4)
                    * Complex64::from(h / 6.0)
            }
        };
        let p = record(&a);
        for (m, v) in max_pop.iter_mut().zip(p) {
            *m = m.max(v);
        }
        times.push((k + 1) as f64 * h);
        pops.push(p);
    }
    Ok(Trajectory {
        times,
        populations: pops,
        final_state: LevelState::from_vector(&a),
        max_population: max_pop,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// Largest final-population change between dt and dt/2.
    pub max_change: f64,
    pub converged: bool,
}

/// Step-doubling check on the final populations.
pub fn convergence(cfg: &PrepConfig, dt: f64, integrator: Integrator) -> Result<Convergence> {
    let coarse = evolve(cfg, dt, integrator)?.final_populations();
    let fine = evolve(cfg, 0.5 * dt, integrator)?.final_populations();
    let max_change = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(Convergence {
        max_change,
        converged: max_change <= CONVERGENCE_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineshape {
    pub detunings: Vec<f64>,
    pub p_rprime: Vec<f64>,
    pub p_r: Vec<f64>,
    pub p_e: Vec<f64>,
    pub peak_mhz: f64,
    /// Width of the central lobe at half its maximum; None if it does not
    /// fall to half maximum on both sides within the grid.
    pub fwhm_mhz: Option<f64>,
}

pub fn scan_three_photon(cfg: &PrepConfig, detuning_grid: &[f64], dt: f64) -> Result<Lineshape> {
    ensure(!detuning_grid.is_empty(), "detuning_grid", "must not be empty")?;
    let finals: Vec<[f64; 4]> = detuning_grid
        .par_iter()
        .map(|&d| {
            let c = PrepConfig {
                three_photon_detuning: d,
                ..cfg.clone()
            };
            evolve(&c, dt, Integrator::default()).map(|t| t.final_populations())
        })
        .collect::<Result<_>>()?;
    let p_rprime: Vec<f64> = finals.iter().map(|p| p[RP]).collect();
    let (peak_idx, peak) = p_rprime
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        });
    let half = 0.5 * peak;
    let x = detuning_grid;
    let left = (1..=peak_idx).rev().find_map(|i| {
        (p_rprime[i - 1] < half).then(|| {
            x[i - 1] + (half - p_rprime[i - 1]) / (p_rprime[i] - p_rprime[i - 1]) * (x[i] - x[i - 1])
        })
    });
    let right = (peak_idx..x.len() - 1).find_map(|i| {
        (p_rprime[i + 1] < half).then(|| {
            x[i] + (p_rprime[i] - half) / (p_rprime[i] - p_rprime[i + 1]) * (x[i + 1] - x[i])
        })
    });
    Ok(Lineshape {
        detunings: x.to_vec(),
        p_r: finals.iter().map(|p| p[R]).collect(),
        p_e: finals.iter().map(|p| p[E]).collect(),
        p_rprime,
        peak_mhz: x[peak_idx],
        fwhm_mhz: left.zip(right).map(|(l, r)| r - l),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampdownComparison {
    pub p_r_with: f64,
    pub p_r_without: f64,
    pub p_rprime_with: f64,
    pub p_rprime_without: f64,
}

/// Residual r population at the end with and without the microwave ramp-down.
pub fn mw_rampdown_comparison(cfg: &PrepConfig, dt: f64) -> Result<RampdownComparison> {
    let with = evolve(
        &PrepConfig {
            mw_rampdown: true,
            ..cfg.clone()
        },
        dt,
        Integrator::default(),
    )?
    .final_populations();
    let without = evolve(
        &PrepConfig {
            mw_rampdown: false,
            ..cfg.clone()
        },
        dt,
        Integrator::default(),
    )?
    .final_populations();
    Ok(RampdownComparison {
        p_r_with: with[R],
        p_r_without: without[R],
        p_rprime_with: with[RP],
        p_rprime_without: without[RP],
    })
}

/// Adiabatic-elimination estimate ΩpΩcΩmw/(4Δeδr) of the g–r′ coupling.
pub fn effective_coupling(cfg: &PrepConfig) -> f64 {
    cfg.omega_p_peak * cfg.omega_c_peak * cfg.omega_mw / (4.0 * cfg.delta_e * cfg.delta_r)
}

/// Minimum splitting of the two dressed levels adiabatically connected to g
/// and r′, found by scanning the three-photon detuning. With constant peak
/// couplings this is the generalized Rabi frequency on resonance.
pub fn dressed_rabi_frequency(cfg: &PrepConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    ensure(cfg.gamma_e == 0.0, "gamma_e", "dressed splitting needs gamma_e = 0")?;
    let splitting = |d3: f64| {
        let c = PrepConfig {
            three_photon_detuning: d3,
            ..cfg.clone()
        };
        let h = ladder(&c, cfg.omega_p_peak, cfg.omega_c_peak, cfg.omega_mw).map(|z| z.re);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        (ev[0] - ev[1]).abs()
    };
    let span = 2.0 + (cfg.omega_p_peak.powi(2) + cfg.omega_mw.powi(2)) / cfg.delta_e.min(cfg.delta_r);
    let n = 400;
    let mut best = (0.0, f64::INFINITY);
    for i in 0..=n {
        let d = -span + 2.0 * span * i as f64 / n as f64;
        let s = splitting(d);
        if s < best.1 {
            best = (d, s);
        }
    }
    let step = 2.0 * span / n as f64;
    let (mut lo, mut hi) = (best.0 - step, best.0 + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if splitting(a) < splitting(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let d = 0.5 * (lo + hi);
    Ok((d, splitting(d)))
}

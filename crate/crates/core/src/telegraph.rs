//! Single-switch random-telegraph model of detected probe photon counts.
//!
//! An atom in r′ blocks the EIT transmission and the count rate sits at
//! `r_low`; the atom may be lost at rate `gamma_loss`, after which the rate
//! jumps to `r_high`. A transparent ensemble may instead create a stationary
//! impurity at rate `gamma_imp`, dropping the rate to `r_low`. At most one
//! switch happens per shot and its clock starts at the end of preparation.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::estimate::{poisson_pmf_into, GaussLegendre};
use crate::seed::{rng_from_seed, seed_derive};

pub const R_HIGH: f64 = 8.0;
pub const GAMMA_LOSS: f64 = 0.035;
pub const GAMMA_IMP: f64 = 0.015;
pub const F_PREP: f64 = 0.93;
pub const COLLECTION_EFF: f64 = 0.90;
pub const DETECTION_EFF: f64 = 0.47;
pub const WINDOW_LEN: f64 = 6.0;
/// Photoionization rate of r′ (340 s⁻¹), µs⁻¹; reference value only.
pub const GAMMA_PHOTOIONIZATION: f64 = 340e-6;
/// Blockaded rate for which the 6 µs balanced detection fidelity at
/// `r_high` = 8 µs⁻¹, with preparation error removed, equals 0.92.
pub const CALIBRATED_R_LOW: f64 = 3.4194;
/// Width of the time bins in simulated traces, µs.
pub const BIN_WIDTH: f64 = 0.5;
/// Gauss–Legendre nodes over the switch time inside one window.
pub const QUADRATURE_NODES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelegraphParams {
    /// Detected rate with an EIT-transparent ensemble, µs⁻¹.
    pub r_high: f64,
    /// Detected rate with a blocking Rydberg atom, µs⁻¹.
    pub r_low: f64,
    /// Blocked → transparent rate, µs⁻¹.
    pub gamma_loss: f64,
    /// Transparent → blocked rate, µs⁻¹.
    pub gamma_imp: f64,
    pub f_prep: f64,
    pub collection_eff: f64,
    pub detection_eff: f64,
    /// Whether the shots of a prepared run that lack the atom can still
    /// create an impurity.
    pub impurity_in_unprepared_fraction: bool,
}

impl Default for TelegraphParams {
    fn default() -> Self {
        Self {
            r_high: R_HIGH,
            r_low: CALIBRATED_R_LOW,
            gamma_loss: GAMMA_LOSS,
            gamma_imp: GAMMA_IMP,
            f_prep: F_PREP,
            collection_eff: COLLECTION_EFF,
            detection_eff: DETECTION_EFF,
            impurity_in_unprepared_fraction: true,
        }
    }
}

impl TelegraphParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.r_low >= 0.0, "r_low", "must be >= 0")?;
        ensure(self.r_high >= self.r_low, "r_high", "must be >= r_low")?;
        ensure(self.gamma_loss >= 0.0, "gamma_loss", "must be >= 0")?;
        ensure(self.gamma_imp >= 0.0, "gamma_imp", "must be >= 0")?;
        ensure((0.0..=1.0).contains(&self.f_prep), "f_prep", "must lie in [0, 1]")?;
        ensure(
            self.collection_eff > 0.0 && self.collection_eff <= 1.0,
            "collection_eff",
            "must lie in (0, 1]",
        )?;
        ensure(
            self.detection_eff > 0.0 && self.detection_eff <= 1.0,
            "detection_eff",
            "must lie in (0, 1]",
        )
    }

    /// The weighted branches that make up a run.
    pub fn branches(&self, prepared: bool) -> Vec<(f64, Branch)> {
        let transparent = Branch {
            rate_before: self.r_high,
            rate_after: self.r_low,
            switch_rate: self.gamma_imp,
        };
        if !prepared {
            return vec![(1.0, transparent)];
        }
        let blocked = Branch {
            rate_before: self.r_low,
            rate_after: self.r_high,
            switch_rate: self.gamma_loss,
        };
        let missing = if self.impurity_in_unprepared_fraction {
            transparent
        } else {
            Branch {
                switch_rate: 0.0,
                ..transparent
            }
        };
        vec![(self.f_prep, blocked), (1.0 - self.f_prep, missing)]
    }
}

/// One initial state: rate `rate_before` until an Exp(`switch_rate`) time
/// measured from t = 0, `rate_after` from then on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub rate_before: f64,
    pub rate_after: f64,
    pub switch_rate: f64,
}

impl Branch {
    fn survival(&self, t: f64) -> f64 {
        (-self.switch_rate * t).exp()
    }

    /// Expected time spent before the switch inside [a, a + T].
    pub fn time_before_switch(&self, w: &Window) -> f64 {
        let g = self.switch_rate;
        if g == 0.0 {
            w.t_len
        } else {
            self.survival(w.t_start) * -(-g * w.t_len).exp_m1() / g
        }
    }

    /// Integrated intensity over `w` for a switch at `tau`.
    pub fn intensity(&self, w: &Window, tau: f64) -> f64 {
        let before = (tau - w.t_start).clamp(0.0, w.t_len);
        self.rate_before * before + self.rate_after * (w.t_len - before)
    }

    pub fn mean_count(&self, w: &Window) -> f64 {
        let s = self.time_before_switch(w);
        self.rate_before * s + self.rate_after * (w.t_len - s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    /// Delay since the end of preparation, µs.
    pub t_start: f64,
    pub t_len: f64,
}

impl Window {
    pub fn new(t_start: f64, t_len: f64) -> Result<Self> {
        let w = Self { t_start, t_len };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.t_start >= 0.0, "t_start", "must be >= 0")?;
        ensure(self.t_len > 0.0, "t_len", "must be > 0")
    }

    pub fn end(&self) -> f64 {
        self.t_start + self.t_len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountPmf {
    pub probs: Vec<f64>,
}

impl CountPmf {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - m).powi(2) * p)
            .sum()
    }

    /// P(n ≤ k).
    pub fn cdf(&self, k: usize) -> f64 {
        self.probs.iter().take(k + 1).sum()
    }

    /// Empirical PMF of a count sample.
    pub fn from_counts(counts: &[u64]) -> Self {
        let hist = histogram(counts);
        let n = counts.len().max(1) as f64;
        Self {
            probs: hist.iter().map(|&h| h as f64 / n).collect(),
        }
    }

    pub fn total_variation(&self, other: &CountPmf) -> f64 {
        let n = self.len().max(other.len());
        0.5 * (0..n).map(|k| (self.get(k) - other.get(k)).abs()).sum::<f64>()
    }
}

pub fn histogram(counts: &[u64]) -> Vec<u64> {
    let max = counts.iter().copied().max().unwrap_or(0) as usize;
    let mut h = vec![0u64; max + 1];
    for &c in counts {
        h[c as usize] += 1;
    }
    h
}

/// Support size that leaves a Poisson tail below 1e-12 for mean `lambda`.
pub fn support_size(lambda: f64) -> usize {
    (lambda + 12.0 * lambda.sqrt() + 30.0).ceil() as usize
}

fn window_support(p: &TelegraphParams, w: &Window) -> usize {
    support_size(p.r_high.max(p.r_low) * w.t_len)
}

/// Adds weight·P_branch(n) into `out` using `nodes` quadrature points.
fn accumulate_branch(b: &Branch, w: &Window, weight: f64, nodes: usize, out: &mut [f64]) {
    if weight == 0.0 {
        return;
    }
    let mut buf = vec![0.0; out.len()];
    let mut add = |lambda: f64, mass: f64, out: &mut [f64]| {
        if mass == 0.0 {
            return;
        }
        poisson_pmf_into(lambda, &mut buf);
        for (o, q) in out.iter_mut().zip(&buf) {
            *o += mass * q;
        }
    };
    if b.switch_rate == 0.0 {
        add(b.rate_before * w.t_len, weight, out);
        return;
    }
    let g = b.switch_rate;
    add(b.rate_after * w.t_len, weight * -(-g * w.t_start).exp_m1(), out);
    add(b.rate_before * w.t_len, weight * b.survival(w.end()), out);
    for (tau, wt) in quadrature_nodes(w.t_start, w.end(), nodes) {
        add(b.intensity(w, tau), weight * wt * g * b.survival(tau), out);
    }
}

fn quadrature_nodes(a: f64, b: f64, nodes: usize) -> Vec<(f64, f64)> {
    const ORDER: usize = 16;
    if nodes >= ORDER && nodes % ORDER == 0 {
        GaussLegendre::new(ORDER).composite_nodes(a, b, nodes / ORDER)
    } else {
        GaussLegendre::new(nodes.max(1)).mapped(a, b).collect()
    }
}

/// Count distribution of a single branch on `support` counts.
pub fn branch_pmf(b: &Branch, w: &Window, support: usize) -> CountPmf {
    let mut probs = vec![0.0; support];
    accumulate_branch(b, w, 1.0, QUADRATURE_NODES, &mut probs);
    CountPmf { probs }
}

/// Count distribution for one window, marginalized over the initial state
/// and the switch time.
pub fn exact_pmf(p: &TelegraphParams, w: &Window, prepared: bool) -> Result<CountPmf> {
    exact_pmf_with_nodes(p, w, prepared, QUADRATURE_NODES)
}

pub fn exact_pmf_with_nodes(
    p: &TelegraphParams,
    w: &Window,
    prepared: bool,
    nodes: usize,
) -> Result<CountPmf> {
    exact_pmf_impl(p, w, prepared, nodes, 0)
}

/// As [`exact_pmf`], with the support extended to at least `min_support`
/// counts.
pub fn exact_pmf_sized(
    p: &TelegraphParams,
    w: &Window,
    prepared: bool,
    min_support: usize,
) -> Result<CountPmf> {
    exact_pmf_impl(p, w, prepared, QUADRATURE_NODES, min_support)
}

fn exact_pmf_impl(
    p: &TelegraphParams,
    w: &Window,
    prepared: bool,
    nodes: usize,
    min_support: usize,
) -> Result<CountPmf> {
    p.validate()?;
    w.validate()?;
    let mut probs = vec![0.0; window_support(p, w).max(min_support)];
    for (weight, b) in p.branches(prepared) {
        accumulate_branch(&b, w, weight, nodes, &mut probs);
    }
    Ok(CountPmf { probs })
}

/// Mean count from the expected time spent in each state.
pub fn closed_form_mean(p: &TelegraphParams, w: &Window, prepared: bool) -> f64 {
    p.branches(prepared)
        .iter()
        .map(|(weight, b)| weight * b.mean_count(w))
        .sum()
}

/// Expected detected rate at each time, µs⁻¹.
pub fn mean_rate_curve(p: &TelegraphParams, prepared: bool, t_grid: &[f64]) -> Result<Vec<f64>> {
    p.validate()?;
    ensure(
        t_grid.windows(2).all(|w| w[0] <= w[1]),
        "t_grid",
        "must be sorted",
    )?;
    let branches = p.branches(prepared);
    Ok(t_grid
        .iter()
        .map(|&t| {
            branches
                .iter()
                .map(|(weight, b)| {
                    let s = b.survival(t);
                    weight * (s * b.rate_before + (1.0 - s) * b.rate_after)
                })
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    /// Switch time since preparation; None when the branch cannot switch.
    pub switch_time: Option<f64>,
    pub counts: u64,
    /// Counts per [`BIN_WIDTH`] bin; the last bin may be shorter.
    pub binned_counts: Vec<u64>,
}

fn draw_branch<R: Rng>(p: &TelegraphParams, prepared: bool, rng: &mut R) -> (Branch, Option<f64>) {
    let branches = p.branches(prepared);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = branches[branches.len() - 1].1;
    for (weight, b) in &branches {
        acc += weight;
        if u < acc {
            chosen = *b;
            break;
        }
    }
    let tau = (chosen.switch_rate > 0.0).then(|| {
        Exp::new(chosen.switch_rate)
            .expect("positive rate")
            .sample(rng)
    });
    (chosen, tau)
}

fn draw_poisson<R: Rng>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        0
    } else {
        Poisson::new(lambda).expect("positive mean").sample(rng) as u64
    }
}

fn intensity_between(b: &Branch, tau: Option<f64>, t0: f64, t1: f64) -> f64 {
    let w = Window {
        t_start: t0,
        t_len: t1 - t0,
    };
    b.intensity(&w, tau.unwrap_or(f64::INFINITY))
}

/// One shot over window `w`, deterministic in `seed`.
pub fn simulate_trajectory(
    p: &TelegraphParams,
    w: &Window,
    prepared: bool,
    seed: u64,
) -> TrajectorySample {
    let mut rng = rng_from_seed(seed);
    let (b, tau) = draw_branch(p, prepared, &mut rng);
    let n_bins = (w.t_len / BIN_WIDTH - 1e-9).ceil().max(1.0) as usize;
    let binned: Vec<u64> = (0..n_bins)
        .map(|k| {
            let t0 = w.t_start + k as f64 * BIN_WIDTH;
            let t1 = (t0 + BIN_WIDTH).min(w.end());
            draw_poisson(intensity_between(&b, tau, t0, t1), &mut rng)
        })
        .collect();
    TrajectorySample {
        switch_time: tau,
        counts: binned.iter().sum(),
        binned_counts: binned,
    }
}

fn stream_label(prepared: bool) -> &'static str {
    if prepared {
        "telegraph/prepared"
    } else {
        "telegraph/unprepared"
    }
}

/// `n` independent shots; shot i is seeded from (master, i).
pub fn simulate_trajectories(
    p: &TelegraphParams,
    w: &Window,
    prepared: bool,
    n: usize,
    master_seed: u64,
) -> Result<Vec<TrajectorySample>> {
    p.validate()?;
    w.validate()?;
    let label = stream_label(prepared);
    Ok((0..n)
        .into_par_iter()
        .map(|i| simulate_trajectory(p, w, prepared, seed_derive(master_seed, label, i as u64)))
        .collect())
}

pub fn simulate_counts(
    p: &TelegraphParams,
    w: &Window,
    prepared: bool,
    n: usize,
    master_seed: u64,
) -> Result<Vec<u64>> {
    Ok(simulate_trajectories(p, w, prepared, n, master_seed)?
        .into_iter()
        .map(|t| t.counts)
        .collect())
}

fn check_consecutive(w1: &Window, w2: &Window) -> Result<()> {
    w1.validate()?;
    w2.validate()?;
    if w2.t_start < w1.end() {
        return Err(Error::OverlappingWindows {
            first_end: w1.end(),
            second_start: w2.t_start,
        });
    }
    Ok(())
}

/// Counts in two windows of the same shots; each shot has one switch time
/// shared by both windows.
pub fn two_window_joint(
    p: &TelegraphParams,
    w1: &Window,
    w2: &Window,
    prepared: bool,
    n_shots: usize,
    seed: u64,
) -> Result<Vec<(u64, u64)>> {
    p.validate()?;
    check_consecutive(w1, w2)?;
    let label = if prepared {
        "joint/prepared"
    } else {
        "joint/unprepared"
    };
    Ok((0..n_shots)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(seed_derive(seed, label, i as u64));
            let (b, tau) = draw_branch(p, prepared, &mut rng);
            let c1 = draw_poisson(intensity_between(&b, tau, w1.t_start, w1.end()), &mut rng);
            let c2 = draw_poisson(intensity_between(&b, tau, w2.t_start, w2.end()), &mut rng);
            (c1, c2)
        })
        .collect())
}

/// Exact joint count distribution of two consecutive windows, indexed
/// `[n1][n2]`.
pub fn exact_joint_pmf(
    p: &TelegraphParams,
    w1: &Window,
    w2: &Window,
    prepared: bool,
) -> Result<Vec<Vec<f64>>> {
    p.validate()?;
    check_consecutive(w1, w2)?;
    let n1 = window_support(p, w1);
    let n2 = window_support(p, w2);
    let mut joint = vec![vec![0.0; n2]; n1];
    let mut a = vec![0.0; n1];
    let mut c = vec![0.0; n2];
    let mut add = |l1: f64, l2: f64, mass: f64, joint: &mut Vec<Vec<f64>>| {
        if mass == 0.0 {
            return;
        }
        poisson_pmf_into(l1, &mut a);
        poisson_pmf_into(l2, &mut c);
        for (row, pa) in joint.iter_mut().zip(&a) {
            let s = mass * pa;
            for (cell, pc) in row.iter_mut().zip(&c) {
                *cell += s * pc;
            }
        }
    };
    for (weight, b) in p.branches(prepared) {
        if weight == 0.0 {
            continue;
        }
        let lam = |w: &Window, tau: f64| b.intensity(w, tau);
        if b.switch_rate == 0.0 {
            add(lam(w1, f64::INFINITY), lam(w2, f64::INFINITY), weight, &mut joint);
            continue;
        }
        let g = b.switch_rate;
        // Switch before, between and after the windows.
        add(lam(w1, 0.0), lam(w2, 0.0), weight * -(-g * w1.t_start).exp_m1(), &mut joint);
        add(
            lam(w1, w1.end()),
            lam(w2, w1.end()),
            weight * (b.survival(w1.end()) - b.survival(w2.t_start)),
            &mut joint,
        );
        add(
            lam(w1, f64::INFINITY),
            lam(w2, f64::INFINITY),
            weight * b.survival(w2.end()),
            &mut joint,
        );
        for w in [w1, w2] {
            for (tau, wt) in quadrature_nodes(w.t_start, w.end(), QUADRATURE_NODES) {
                add(lam(w1, tau), lam(w2, tau), weight * wt * g * b.survival(tau), &mut joint);
            }
        }
    }
    Ok(joint)
}

//! Threshold classification, fidelity, maximum-likelihood histogram fits,
//! repeated-measurement statistics, transistor gain and rate sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::estimate::{
    covariance, minimize, poisson_histogram_loglik, Bound, MinimizeOptions, Objective,
};
use crate::telegraph::{
    exact_joint_pmf, exact_pmf, exact_pmf_sized, two_window_joint, CountPmf, TelegraphParams,
    Window,
};

/// Threshold used for the published operating point, counts.
pub const NOMINAL_THRESHOLD: u64 = 30;
pub const TARGET_FD: f64 = 0.92;
/// Fidelity tolerance of [`calibrate_r_low`].
pub const CALIBRATION_TOL: f64 = 0.002;

/// Counts at or below the threshold are read as ↑ (blocked ensemble).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub threshold: u64,
    pub window: Window,
}

impl Classifier {
    pub fn detects_up(&self, counts: u64) -> bool {
        counts <= self.threshold
    }
}

/// Balanced fidelity ½[P(n ≤ θ | up) + P(n > θ | down)] at threshold θ.
pub fn fidelity_at(up: &CountPmf, down: &CountPmf, threshold: usize) -> f64 {
    0.5 * (up.cdf(threshold) + 1.0 - down.cdf(threshold))
}

/// Best threshold and its balanced fidelity; the smallest θ wins ties.
pub fn optimal_threshold(up: &CountPmf, down: &CountPmf) -> (u64, f64) {
    let n = up.len().max(down.len()).max(1);
    let (mut cu, mut cd) = (0.0, 0.0);
    let mut best = (0u64, f64::NEG_INFINITY);
    for k in 0..n {
        cu += up.get(k);
        cd += down.get(k);
        let f = 0.5 * (cu + 1.0 - cd);
        if f > best.1 {
            best = (k as u64, f);
        }
    }
    best
}

/// Up PMF with the preparation error removed, and the down PMF.
pub fn separated_pmfs(p: &TelegraphParams, w: &Window) -> Result<(CountPmf, CountPmf)> {
    let clean = TelegraphParams { f_prep: 1.0, ..*p };
    Ok((exact_pmf(&clean, w, true)?, exact_pmf(p, w, false)?))
}

/// Optimal threshold and detection fidelity, preparation error removed.
pub fn detection_operating_point(p: &TelegraphParams, w: &Window) -> Result<(u64, f64)> {
    let (up, down) = separated_pmfs(p, w)?;
    Ok(optimal_threshold(&up, &down))
}

/// Blockaded rate at which the detection fidelity equals `target_fd`,
/// holding every other parameter of `fixed` constant.
pub fn calibrate_r_low(target_fd: f64, fixed: &TelegraphParams, w: &Window) -> Result<f64> {
    fixed.validate()?;
    let fd = |r_low: f64| -> Result<f64> {
        detection_operating_point(&TelegraphParams { r_low, ..*fixed }, w).map(|x| x.1)
    };
    let best = fd(0.0)?;
    if !(0.5..=best).contains(&target_fd) {
        return Err(Error::Unreachable {
            target: target_fd,
            min: 0.5,
            max: best,
        });
    }
    if target_fd == 0.5 {
        return Ok(fixed.r_high);
    }
    let (mut lo, mut hi) = (0.0, fixed.r_high);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fd(mid)? > target_fd {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let r = 0.5 * (lo + hi);
    let reached = fd(r)?;
    if (reached - target_fd).abs() > CALIBRATION_TOL {
        return Err(Error::Domain(format!(
            "fidelity is not continuous near r_low = {r}: reached {reached}, wanted {target_fd}"
        )));
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowHistogram {
    pub window: Window,
    /// occurrences[n] = number of shots with n counts.
    pub occurrences: Vec<u64>,
}

impl WindowHistogram {
    pub fn from_counts(window: Window, counts: &[u64]) -> Self {
        Self {
            window,
            occurrences: crate::telegraph::histogram(counts),
        }
    }

    pub fn shots(&self) -> u64 {
        self.occurrences.iter().sum()
    }

    fn single_valued(&self) -> bool {
        self.occurrences.iter().filter(|&&h| h > 0).count() <= 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub fit_gamma_imp: bool,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            fit_gamma_imp: false,
            restarts: 8,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelegraphErrors {
    pub r_high: f64,
    pub r_low: f64,
    pub gamma_loss: f64,
    pub f_prep: f64,
    pub gamma_imp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelegraphFit {
    pub r_high: f64,
    pub r_low: f64,
    pub gamma_loss: f64,
    pub f_prep: f64,
    pub gamma_imp: f64,
    pub gamma_imp_fitted: bool,
    pub log_likelihood: f64,
    pub converged: bool,
    /// Restart that produced the reported optimum (0 = first run).
    pub n_restarts_used: usize,
    pub evaluations: usize,
    /// Curvature-based standard errors; None if the Hessian is singular.
    pub std_errors: Option<TelegraphErrors>,
    /// Some histogram had all its mass at a single count.
    pub low_rank: bool,
}

impl TelegraphFit {
    pub fn params(&self, template: &TelegraphParams) -> TelegraphParams {
        TelegraphParams {
            r_high: self.r_high,
            r_low: self.r_low,
            gamma_loss: self.gamma_loss,
            f_prep: self.f_prep,
            gamma_imp: self.gamma_imp,
            ..*template
        }
    }
}

fn total_loglik(p: &TelegraphParams, data: &[WindowHistogram], prepared: bool) -> f64 {
    let mut ll = 0.0;
    for h in data {
        match exact_pmf_sized(p, &h.window, prepared, h.occurrences.len()) {
            Ok(pmf) => ll += poisson_histogram_loglik(&pmf.probs, &h.occurrences),
            Err(_) => return f64::NEG_INFINITY,
        }
    }
    ll
}

/// Maximum-likelihood fit of (r_high, r_low, gamma_loss, f_prep), and
/// optionally gamma_imp, to histograms recorded in several windows.
///
/// Internally r_low is carried as the ratio r_low/r_high ∈ (0, 1).
pub fn fit_histograms(
    data: &[WindowHistogram],
    init: &TelegraphParams,
    prepared: bool,
    opts: &FitOptions,
) -> Result<TelegraphFit> {
    init.validate()?;
    let mut starts: Vec<f64> = data.iter().map(|h| h.window.t_start).collect();
    starts.sort_by(f64::total_cmp);
    starts.dedup();
    if starts.len() < 2 {
        return Err(Error::InsufficientData(
            "need histograms from at least two distinct window start times".into(),
        ));
    }
    if data.iter().any(|h| h.shots() == 0) {
        return Err(Error::InsufficientData("empty histogram".into()));
    }
    let low_rank = data.iter().any(WindowHistogram::single_valued);

    let unpack = |x: &[f64]| TelegraphParams {
        r_high: x[0],
        r_low: x[0] * x[1],
        gamma_loss: x[2],
        f_prep: x[3],
        gamma_imp: if opts.fit_gamma_imp { x[4] } else { init.gamma_imp },
        ..*init
    };
    let mut bounds = vec![
        Bound::Positive,
        Bound::Interval(0.0, 1.0),
        Bound::Positive,
        Bound::Interval(0.0, 1.0),
    ];
    let ratio = if init.r_high > 0.0 {
        init.r_low / init.r_high
    } else {
        0.5
    };
    let mut x0 = vec![
        init.r_high.max(1e-6),
        ratio,
        init.gamma_loss.max(1e-6),
        init.f_prep,
    ];
    if opts.fit_gamma_imp {
        bounds.push(Bound::Positive);
        x0.push(init.gamma_imp.max(1e-6));
    }
    let obj = Objective::new(|x: &[f64]| -total_loglik(&unpack(x), data, prepared), bounds);
    let mopts = MinimizeOptions {
        restarts: opts.restarts,
        seed: opts.seed,
        ..MinimizeOptions::default()
    };
    let res = minimize(&obj, &x0, &mopts)?;
    let best = unpack(&res.point);
    let std_errors = covariance(&obj, &res.point).map(|c| {
        let (rh, q) = (res.point[0], res.point[1]);
        let var_low = q * q * c[(0, 0)] + rh * rh * c[(1, 1)] + 2.0 * q * rh * c[(0, 1)];
        TelegraphErrors {
            r_high: c[(0, 0)].sqrt(),
            r_low: var_low.max(0.0).sqrt(),
            gamma_loss: c[(2, 2)].sqrt(),
            f_prep: c[(3, 3)].sqrt(),
            gamma_imp: opts.fit_gamma_imp.then(|| c[(4, 4)].sqrt()),
        }
    });
    Ok(TelegraphFit {
        r_high: best.r_high,
        r_low: best.r_low,
        gamma_loss: best.gamma_loss,
        f_prep: best.f_prep,
        gamma_imp: best.gamma_imp,
        gamma_imp_fitted: opts.fit_gamma_imp,
        log_likelihood: -res.value,
        converged: res.converged && res.value.is_finite(),
        n_restarts_used: res.restart_index,
        evaluations: res.evaluations,
        std_errors,
        low_rank,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpurityFit {
    pub r_high: f64,
    pub gamma_imp: f64,
    pub gamma_imp_std_error: Option<f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    /// False when the two count rates are too close for a switch to be
    /// visible, or the curvature is singular.
    pub identifiable: bool,
}

/// Fits (r_high, gamma_imp) to a histogram taken without preparation,
/// holding r_low at `init.r_low`.
pub fn fit_impurity(
    hist: &WindowHistogram,
    init: &TelegraphParams,
    opts: &FitOptions,
) -> Result<ImpurityFit> {
    init.validate()?;
    ensure(hist.shots() > 0, "histogram", "must contain shots")?;
    let data = std::slice::from_ref(hist);
    let unpack = |x: &[f64]| TelegraphParams {
        r_high: x[0].max(init.r_low),
        gamma_imp: x[1],
        ..*init
    };
    let obj = Objective::new(
        |x: &[f64]| {
            if x[0] < init.r_low {
                return f64::INFINITY;
            }
            -total_loglik(&unpack(x), data, false)
        },
        vec![Bound::Positive, Bound::Positive],
    );
    let x0 = [init.r_high.max(init.r_low).max(1e-6), init.gamma_imp.max(1e-6)];
    let mopts = MinimizeOptions {
        restarts: opts.restarts,
        seed: opts.seed,
        ..MinimizeOptions::default()
    };
    let res = minimize(&obj, &x0, &mopts)?;
    let se = covariance(&obj, &res.point).map(|c| c[(1, 1)].sqrt());
    let gap = (res.point[0] - init.r_low) / res.point[0].max(1e-12);
    Ok(ImpurityFit {
        r_high: res.point[0],
        gamma_imp: res.point[1],
        gamma_imp_std_error: se,
        log_likelihood: -res.value,
        converged: res.converged,
        identifiable: gap > 0.05 && se.is_some_and(f64::is_finite),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TableNormalization {
    /// Prepared shots include the preparation error.
    Raw,
    /// Prepared shots evaluated at f_prep = 1.
    PreparationCorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub prepared_detect_up: f64,
    pub prepared_no_detect: f64,
    pub unprepared_detect_up: f64,
    pub unprepared_no_detect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedTable {
    pub normalization: TableNormalization,
    pub first: TableRow,
    pub second: TableRow,
    /// P(first outcome, second outcome), index 0 = ↑ detected.
    pub joint_prepared: [[f64; 2]; 2],
    pub joint_unprepared: [[f64; 2]; 2],
    /// P(second = first | first = ↑) and P(second = first | first = ↓) of
    /// the pooled (equal-weight) prepared and unprepared shots, averaged.
    pub agreement: f64,
    pub agreement_prepared: f64,
    pub agreement_unprepared: f64,
    /// ½[second-window P(detect ↑ | prepared) + P(no detection | unprepared)],
    /// the second-row diagonal mean. Not a conditional probability.
    pub second_row_mean: f64,
    /// Shots per ensemble; None for the exact evaluation.
    pub n_shots: Option<usize>,
}

fn conditional_agreement(j: &[[f64; 2]; 2]) -> f64 {
    let up = j[0][0] / (j[0][0] + j[0][1]);
    let down = j[1][1] / (j[1][0] + j[1][1]);
    0.5 * (up + down)
}

fn assemble_table(
    normalization: TableNormalization,
    jp: [[f64; 2]; 2],
    ju: [[f64; 2]; 2],
    n_shots: Option<usize>,
) -> RepeatedTable {
    let row = |a: f64, b: f64| TableRow {
        prepared_detect_up: a,
        prepared_no_detect: 1.0 - a,
        unprepared_detect_up: b,
        unprepared_no_detect: 1.0 - b,
    };
    let pooled = [
        [0.5 * (jp[0][0] + ju[0][0]), 0.5 * (jp[0][1] + ju[0][1])],
        [0.5 * (jp[1][0] + ju[1][0]), 0.5 * (jp[1][1] + ju[1][1])],
    ];
    let second = row(jp[0][0] + jp[1][0], ju[0][0] + ju[1][0]);
    RepeatedTable {
        normalization,
        first: row(jp[0][0] + jp[0][1], ju[0][0] + ju[0][1]),
        second_row_mean: 0.5 * (second.prepared_detect_up + second.unprepared_no_detect),
        second,
        joint_prepared: jp,
        joint_unprepared: ju,
        agreement: conditional_agreement(&pooled),
        agreement_prepared: conditional_agreement(&jp),
        agreement_unprepared: conditional_agreement(&ju),
        n_shots,
    }
}

fn normalized(p: &TelegraphParams, n: TableNormalization) -> TelegraphParams {
    match n {
        TableNormalization::Raw => *p,
        TableNormalization::PreparationCorrected => TelegraphParams { f_prep: 1.0, ..*p },
    }
}

fn second_window(cls: &Classifier) -> Window {
    Window {
        t_start: cls.window.end(),
        t_len: cls.window.t_len,
    }
}

/// Simulated two-window table for prepared and unprepared runs.
pub fn repeated_measurement_table(
    p: &TelegraphParams,
    cls: &Classifier,
    normalization: TableNormalization,
    n_shots: usize,
    seed: u64,
) -> Result<RepeatedTable> {
    ensure(n_shots > 0, "n_shots", "must be > 0")?;
    let q = normalized(p, normalization);
    let w2 = second_window(cls);
    let tally = |prepared: bool| -> Result<[[f64; 2]; 2]> {
        let pairs = two_window_joint(&q, &cls.window, &w2, prepared, n_shots, seed)?;
        let mut m = [[0.0; 2]; 2];
        for (c1, c2) in pairs {
            let i = usize::from(!cls.detects_up(c1));
            let j = usize::from(!cls.detects_up(c2));
            m[i][j] += 1.0;
        }
        Ok(m.map(|r| r.map(|v| v / n_shots as f64)))
    };
    Ok(assemble_table(normalization, tally(true)?, tally(false)?, Some(n_shots)))
}

/// The same table from the exact joint count distribution.
pub fn exact_repeated_table(
    p: &TelegraphParams,
    cls: &Classifier,
    normalization: TableNormalization,
) -> Result<RepeatedTable> {
    let q = normalized(p, normalization);
    let w2 = second_window(cls);
    let cells = |prepared: bool| -> Result<[[f64; 2]; 2]> {
        let joint = exact_joint_pmf(&q, &cls.window, &w2, prepared)?;
        let mut m = [[0.0; 2]; 2];
        for (n1, row) in joint.iter().enumerate() {
            let i = usize::from(!cls.detects_up(n1 as u64));
            for (n2, v) in row.iter().enumerate() {
                m[i][usize::from(!cls.detects_up(n2 as u64))] += v;
            }
        }
        Ok(m)
    };
    Ok(assemble_table(normalization, cells(true)?, cells(false)?, None))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    /// Detected-photon difference between unprepared and prepared shots.
    pub gain: f64,
    /// Gain referred to the ensemble output (divided by the collection and
    /// detection efficiencies).
    pub gain_input: f64,
}

pub fn transistor_gain(p: &TelegraphParams, w: &Window) -> Result<Gain> {
    let (up, down) = separated_pmfs(p, w)?;
    let gain = down.mean() - up.mean();
    Ok(Gain {
        gain,
        gain_input: gain / (p.collection_eff * p.detection_eff),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub r_high: f64,
    pub r_low: f64,
    pub gamma_imp: f64,
    pub window_len: f64,
    pub threshold: u64,
    pub f_d: f64,
}

/// Best detection fidelity per probe rate with gamma_imp = beta·r_high and
/// r_low scaled with r_high at the ratio of `base`. The window length is
/// optimized over `window_grid`.
pub fn fidelity_vs_rate(
    base: &TelegraphParams,
    rates: &[f64],
    beta: f64,
    window_grid: &[f64],
) -> Result<Vec<RatePoint>> {
    ensure(beta >= 0.0, "beta", "must be >= 0")?;
    ensure(!window_grid.is_empty(), "window_grid", "must not be empty")?;
    base.validate()?;
    let ratio = if base.r_high > 0.0 {
        base.r_low / base.r_high
    } else {
        1.0
    };
    rates
        .par_iter()
        .map(|&r_high| {
            ensure(r_high >= 0.0, "rates", "must be >= 0")?;
            let p = TelegraphParams {
                r_high,
                r_low: ratio * r_high,
                gamma_imp: beta * r_high,
                ..*base
            };
            let mut best: Option<RatePoint> = None;
            for &len in window_grid {
                let (threshold, f_d) = detection_operating_point(&p, &Window::new(0.0, len)?)?;
                if best.is_none_or(|b| f_d > b.f_d) {
                    best = Some(RatePoint {
                        r_high,
                        r_low: p.r_low,
                        gamma_imp: p.gamma_imp,
                        window_len: len,
                        threshold,
                        f_d,
                    });
                }
            }
            Ok(best.expect("non-empty window grid"))
        })
        .collect()
}

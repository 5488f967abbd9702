//! Rydberg pair potentials and blockade radii.
//!
//! Two channels are modelled. Preparation pairs (r′r′) interact through an
//! anisotropic van der Waals potential C6(θ)/R⁶, with θ measured from the
//! quantization axis. Detection pairs (rr′) are split by dipolar exchange
//! into two branches C6/R⁶ ± C3/R³. All energies are ordinary frequencies
//! in MHz, lengths in µm.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{ensure, Error, Result};
use crate::estimate::GaussLegendre;

/// C6(θ = 0) of the r′r′ pair, MHz·µm⁶.
pub const RPRIME_C6_AXIAL: f64 = 1.94e6;
/// Blockade ellipsoid aspect ratio r_B(90°)/r_B(0°) for r′r′.
pub const RPRIME_ANISOTROPY: f64 = 1.6;
/// van der Waals coefficient of the rr′ pair, MHz·µm⁶.
pub const RRPRIME_C6: f64 = 6.31e6;
/// Exchange coefficient of the rr′ pair, MHz·µm³.
pub const RRPRIME_C3: f64 = 2.36e4;
/// FWHM of the three-photon preparation resonance, MHz.
pub const THREE_PHOTON_LINEWIDTH: f64 = 0.6;
/// Plus-branch blockade radius used to calibrate the EIT threshold, µm.
pub const PLUS_BRANCH_RADIUS: f64 = 12.7;

/// Inner edge of every radial scan, µm.
pub const R_MIN: f64 = 0.5;
/// Outer edge of the blockade-radius scan, µm.
pub const R_MAX: f64 = 100.0;
const RADIUS_GRID: usize = 512;
const CROSSING_GRID: usize = 4096;
const BISECTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairKind {
    VdwAnisotropic,
    ExchangePlusVdw,
}

impl PairKind {
    fn name(self) -> &'static str {
        match self {
            PairKind::VdwAnisotropic => "VdwAnisotropic",
            PairKind::ExchangePlusVdw => "ExchangePlusVdw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub kind: PairKind,
    /// C6 along the quantization axis (anisotropic) or isotropic C6, MHz·µm⁶.
    pub c6_parallel: f64,
    /// MHz·µm³; zero for the anisotropic van der Waals model.
    pub c3: f64,
    /// r_B(90°)/r_B(0°); only used by the anisotropic model.
    pub anisotropy_ratio: f64,
    pub branch: Branch,
}

impl PairModel {
    /// Anisotropic van der Waals pair (preparation channel).
    pub fn anisotropic_vdw(c6_parallel: f64, anisotropy_ratio: f64) -> Result<Self> {
        let m = Self {
            kind: PairKind::VdwAnisotropic,
            c6_parallel,
            c3: 0.0,
            anisotropy_ratio,
            branch: Branch::NotApplicable,
        };
        m.validate()?;
        Ok(m)
    }

    /// Exchange plus van der Waals pair (detection channel).
    pub fn exchange_plus_vdw(c6: f64, c3: f64, branch: Branch) -> Result<Self> {
        let m = Self {
            kind: PairKind::ExchangePlusVdw,
            c6_parallel: c6,
            c3,
            anisotropy_ratio: 1.0,
            branch,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn rprime_rprime() -> Self {
        Self::anisotropic_vdw(RPRIME_C6_AXIAL, RPRIME_ANISOTROPY).expect("valid constants")
    }

    pub fn r_rprime(branch: Branch) -> Self {
        Self::exchange_plus_vdw(RRPRIME_C6, RRPRIME_C3, branch).expect("valid constants")
    }

    pub fn with_branch(self, branch: Branch) -> Self {
        Self { branch, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.c6_parallel > 0.0, "c6_parallel", "must be > 0")?;
        ensure(self.c3 >= 0.0, "c3", "must be >= 0")?;
        ensure(self.anisotropy_ratio >= 1.0, "anisotropy_ratio", "must be >= 1")?;
        if self.kind == PairKind::ExchangePlusVdw {
            ensure(self.c3 > 0.0, "c3", "exchange model requires c3 > 0")?;
            ensure(
                matches!(self.branch, Branch::Plus | Branch::Minus),
                "branch",
                "exchange model requires the Plus or Minus branch",
            )?;
        }
        Ok(())
    }

    /// C6(θ) = C6(0)·(cos²θ + k·sin²θ) with k = ratio⁶, so that r_B scales
    /// from r_B(0) on axis to ratio·r_B(0) in the transverse plane.
    pub fn c6_at(&self, theta: f64) -> f64 {
        match self.kind {
            PairKind::ExchangePlusVdw => self.c6_parallel,
            PairKind::VdwAnisotropic => {
                let k = self.anisotropy_ratio.powi(6);
                let (s, c) = theta.sin_cos();
                self.c6_parallel * (c * c + k * s * s)
            }
        }
    }

    fn potential_unchecked(&self, r: f64, theta: f64) -> f64 {
        let r3 = r * r * r;
        let vdw = self.c6_at(theta) / (r3 * r3);
        match (self.kind, self.branch) {
            (PairKind::ExchangePlusVdw, Branch::Plus) => vdw + self.c3 / r3,
            (PairKind::ExchangePlusVdw, Branch::Minus) => vdw - self.c3 / r3,
            _ => vdw,
        }
    }
}

/// Signed pair shift in MHz at separation `r` (µm) and polar angle `theta`.
pub fn pair_potential(model: &PairModel, r: f64, theta: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("pair separation must be > 0, got {r}")));
    }
    Ok(model.potential_unchecked(r, theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdConvention {
    /// Blockade where |V| = h·linewidth/2.
    HalfLinewidth,
    /// Blockade where |V| = h·linewidth.
    FullLinewidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockadeThreshold {
    /// FWHM, MHz.
    pub linewidth: f64,
    pub convention: ThresholdConvention,
}

impl BlockadeThreshold {
    pub fn new(linewidth: f64, convention: ThresholdConvention) -> Result<Self> {
        ensure(linewidth > 0.0, "linewidth", "must be > 0")?;
        Ok(Self {
            linewidth,
            convention,
        })
    }

    /// Three-photon linewidth, full-linewidth convention (r′r′ default).
    pub fn preparation() -> Self {
        Self {
            linewidth: THREE_PHOTON_LINEWIDTH,
            convention: ThresholdConvention::FullLinewidth,
        }
    }

    /// Threshold shift in MHz.
    pub fn energy(&self) -> f64 {
        match self.convention {
            ThresholdConvention::HalfLinewidth => 0.5 * self.linewidth,
            ThresholdConvention::FullLinewidth => self.linewidth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossingDirection {
    /// |V| climbs above the threshold with increasing R.
    Rising,
    /// |V| drops below the threshold with increasing R.
    Falling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub radius: f64,
    pub direction: CrossingDirection,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Root of g on [lo, hi] given a sign change, to [`BISECTION_TOL`].
fn bisect<G: Fn(f64) -> f64>(g: G, mut lo: f64, mut hi: f64) -> f64 {
    let g_lo = g(lo);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == (g_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn crossings_on_grid(model: &PairModel, nu: f64, theta: f64, grid: &[f64]) -> Vec<Crossing> {
    let excess = |r: f64| model.potential_unchecked(r, theta).abs() - nu;
    let mut out = Vec::new();
    for w in grid.windows(2) {
        let (a, b) = (excess(w[0]), excess(w[1]));
        if (a >= 0.0) != (b >= 0.0) {
            out.push(Crossing {
                radius: bisect(excess, w[0], w[1]),
                direction: if a >= 0.0 {
                    CrossingDirection::Falling
                } else {
                    CrossingDirection::Rising
                },
            });
        }
    }
    out
}

/// Every radius in [R_MIN, r_max] where |V| equals the threshold shift,
/// ordered outward and tagged with the direction of the crossing.
pub fn threshold_crossings(
    model: &PairModel,
    thr: &BlockadeThreshold,
    theta: f64,
    r_max: f64,
) -> Result<Vec<Crossing>> {
    ensure(r_max > 0.0, "r_max", "must be > 0")?;
    if r_max <= R_MIN {
        return Ok(Vec::new());
    }
    let grid = log_grid(R_MIN, r_max, CROSSING_GRID);
    Ok(crossings_on_grid(model, thr.energy(), theta, &grid))
}

/// Innermost radius at which |V| falls below the threshold shift.
pub fn blockade_radius(model: &PairModel, thr: &BlockadeThreshold, theta: f64) -> Result<f64> {
    model.validate()?;
    let nu = thr.energy();
    let excess = |r: f64| model.potential_unchecked(r, theta).abs() - nu;

    // Very large thresholds put the crossing inside R_MIN; walk inward.
    let mut lo = R_MIN;
    while excess(lo) < 0.0 {
        if lo < 1e-6 {
            return Err(Error::Unblockaded {
                threshold_mhz: nu,
                r_max_um: R_MAX,
            });
        }
        let inner = 0.5 * lo;
        if excess(inner) >= 0.0 {
            return Ok(bisect(excess, inner, lo));
        }
        lo = inner;
    }

    let grid = log_grid(R_MIN, R_MAX, RADIUS_GRID);
    crossings_on_grid(model, nu, theta, &grid)
        .into_iter()
        .find(|c| c.direction == CrossingDirection::Falling)
        .map(|c| c.radius)
        .ok_or(Error::Unblockaded {
            threshold_mhz: nu,
            r_max_um: R_MAX,
        })
}

/// Threshold whose innermost blockade radius equals `target_radius`.
pub fn calibrate_threshold(
    model: &PairModel,
    target_radius: f64,
    theta: f64,
    convention: ThresholdConvention,
) -> Result<BlockadeThreshold> {
    model.validate()?;
    let shift = pair_potential(model, target_radius, theta)?.abs();
    let linewidth = match convention {
        ThresholdConvention::HalfLinewidth => 2.0 * shift,
        ThresholdConvention::FullLinewidth => shift,
    };
    BlockadeThreshold::new(linewidth, convention)
}

/// Detection-channel threshold calibrated so the Plus branch blocks out to
/// 12.7 µm, expressed as an EIT linewidth with the half-linewidth convention.
pub fn detection_threshold() -> BlockadeThreshold {
    calibrate_threshold(
        &PairModel::r_rprime(Branch::Plus),
        PLUS_BRANCH_RADIUS,
        0.0,
        ThresholdConvention::HalfLinewidth,
    )
    .expect("valid constants")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AverageConvention {
    /// ½∫ r_B(θ) sinθ dθ over the sphere (anisotropic model).
    SolidAngleMean,
    /// (r_B+ + r_B−)/2 (exchange model).
    BranchMean,
    /// Mean of the three ellipsoid semi-axes (anisotropic model).
    ArithmeticAxesMean,
    /// Geometric mean of the three semi-axes (anisotropic model).
    GeometricAxesMean,
}

impl AverageConvention {
    fn name(self) -> &'static str {
        match self {
            AverageConvention::SolidAngleMean => "SolidAngleMean",
            AverageConvention::BranchMean => "BranchMean",
            AverageConvention::ArithmeticAxesMean => "ArithmeticAxesMean",
            AverageConvention::GeometricAxesMean => "GeometricAxesMean",
        }
    }
}

pub fn blockade_average(
    model: &PairModel,
    thr: &BlockadeThreshold,
    convention: AverageConvention,
) -> Result<f64> {
    model.validate()?;
    let incompatible = || Error::IncompatibleConvention {
        convention: convention.name(),
        kind: model.kind.name(),
    };
    match (convention, model.kind) {
        (AverageConvention::BranchMean, PairKind::ExchangePlusVdw) => {
            let plus = blockade_radius(&model.with_branch(Branch::Plus), thr, 0.0)?;
            let minus = blockade_radius(&model.with_branch(Branch::Minus), thr, 0.0)?;
            Ok(0.5 * (plus + minus))
        }
        (AverageConvention::SolidAngleMean, PairKind::VdwAnisotropic) => {
            let rule = GaussLegendre::new(64);
            let mut acc = 0.0;
            for (theta, w) in rule.mapped(0.0, std::f64::consts::PI) {
                acc += w * blockade_radius(model, thr, theta)? * theta.sin();
            }
            Ok(0.5 * acc)
        }
        (AverageConvention::ArithmeticAxesMean, PairKind::VdwAnisotropic) => {
            let axial = blockade_radius(model, thr, 0.0)?;
            let transverse = blockade_radius(model, thr, FRAC_PI_2)?;
            Ok((axial + 2.0 * transverse) / 3.0)
        }
        (AverageConvention::GeometricAxesMean, PairKind::VdwAnisotropic) => {
            let axial = blockade_radius(model, thr, 0.0)?;
            let transverse = blockade_radius(model, thr, FRAC_PI_2)?;
            Ok((axial * transverse * transverse).cbrt())
        }
        _ => Err(incompatible()),
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("threshold of {threshold_mhz} MHz is never crossed for R in (0, {r_max_um}] µm")]
    Unblockaded { threshold_mhz: f64, r_max_um: f64 },

    #[error("averaging convention {convention} does not apply to a {kind} pair model")]
    IncompatibleConvention {
        convention: &'static str,
        kind: &'static str,
    },

    #[error("non-finite integrand value at x = {x}")]
    NonFiniteIntegrand { x: f64 },

    #[error("target fidelity {target} unreachable, achievable range is [{min}, {max}]")]
    Unreachable { target: f64, min: f64, max: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("windows overlap: second window starts at {second_start} µs before first ends at {first_end} µs")]
    OverlappingWindows { first_end: f64, second_start: f64 },

    #[error("time {t} µs outside evolution window [0, {duration}] µs")]
    TimeOutOfRange { t: f64, duration: f64 },
}

pub(crate) fn ensure(cond: bool, name: &'static str, reason: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: reason.into(),
        })
    }
}

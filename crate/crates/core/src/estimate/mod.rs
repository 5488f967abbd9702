//! Shared numerical machinery: quadrature, bounded simplex minimisation,
//! Poisson likelihoods and least-squares curve fitting.

mod likelihood;
mod quadrature;
mod simplex;

pub use likelihood::{ln_factorial, poisson_histogram_loglik, poisson_pmf_into, LOG_FLOOR};
pub use quadrature::{composite_gauss_legendre, quadrature, GaussLegendre};
pub use simplex::{
    covariance, least_squares_fit, minimize, standard_errors, Bound, FitResult, LeastSquaresFit,
    MinimizeOptions, Objective,
};

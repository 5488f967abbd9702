/// Floor applied to probabilities before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

pub fn ln_factorial(n: usize) -> f64 {
    // Exact summation is fast enough for the count ranges in play and avoids
    // a gamma-function dependency.
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Writes Poisson(λ) probabilities for n = 0..out.len() into `out`.
pub fn poisson_pmf_into(lambda: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    if lambda <= 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
        return;
    }
    if lambda < 600.0 {
        let mut p = (-lambda).exp();
        out[0] = p;
        for (n, slot) in out.iter_mut().enumerate().skip(1) {
            p *= lambda / n as f64;
            *slot = p;
        }
    } else {
        let ln_l = lambda.ln();
        let mut ln_fact = 0.0;
        for (n, slot) in out.iter_mut().enumerate() {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            *slot = (n as f64 * ln_l - lambda - ln_fact).exp();
        }
    }
}

/// Σₙ hist(n)·ln pmf(n), with pmf values floored at [`LOG_FLOOR`] and counts
/// beyond the pmf support charged the floor.
pub fn poisson_histogram_loglik(pmf: &[f64], hist: &[u64]) -> f64 {
    hist.iter()
        .enumerate()
        .filter(|(_, &h)| h > 0)
        .map(|(n, &h)| {
            let p = pmf.get(n).copied().unwrap_or(0.0).max(LOG_FLOOR);
            h as f64 * p.ln()
        })
        .sum()
}

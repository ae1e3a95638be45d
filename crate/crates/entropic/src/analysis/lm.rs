//! Damped least squares (Levenberg-Marquardt) with numeric Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step changes chi^2 by less than this fraction.
    pub tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 500, tolerance: 1e-10, initial_damping: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub chi2: f64,
    /// (J^T J)^{-1} at the solution, pseudo-inverse when singular.
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The normal matrix is (numerically) singular: some combination of
    /// parameters is unconstrained.
    pub degenerate: bool,
}

/// Central-difference Jacobian of the residual vector.
pub fn numeric_jacobian<F: Fn(&[f64]) -> Vec<f64>>(residuals: &F, p: &[f64]) -> DMatrix<f64> {
    let r0 = residuals(p);
    let mut j = DMatrix::zeros(r0.len(), p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-6 * p[k].abs().max(1e-3);
        q[k] = p[k] + h;
        let rp = residuals(&q);
        q[k] = p[k] - h;
        let rm = residuals(&q);
        q[k] = p[k];
        for i in 0..r0.len() {
            j[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    j
}

fn chi2(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Minimizes sum_i r_i(p)^2, where `residuals` returns error-weighted
/// residuals. Non-convergence is reported through `converged`, with the
/// last iterate.
pub fn levenberg_marquardt<F: Fn(&[f64]) -> Vec<f64>>(residuals: F, start: &[f64], opts: LmOptions) -> Result<LmOutcome> {
    let mut p = start.to_vec();
    let mut r = residuals(&p);
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Fit("residuals not finite at the starting point".into()));
    }
    if r.len() < p.len() {
        return Err(Error::Fit(format!("{} data points for {} parameters", r.len(), p.len())));
    }
    let mut c2 = chi2(&r);
    let mut lambda = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let j = numeric_jacobian(&residuals, &p);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * DVector::from_vec(r.clone());
        if g.amax() < 1e-300 || c2 < 1e-300 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..p.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = residuals(&trial);
            let ct = chi2(&rt);
            if ct.is_finite() && ct <= c2 {
                let rel = (c2 - ct) / c2.max(1e-300);
                p = trial;
                r = rt;
                c2 = ct;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if rel < opts.tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: a minimum to working precision
            converged = true;
        }
        if converged {
            break;
        }
    }
    let j = numeric_jacobian(&residuals, &p);
    let (covariance, degenerate) = covariance_of(&(j.transpose() * &j));
    Ok(LmOutcome { params: p, chi2: c2, covariance, iterations, converged, degenerate })
}

/// Inverse of a symmetric normal matrix; falls back to the SVD
/// pseudo-inverse when its condition number exceeds 1e12.
pub fn covariance_of(jtj: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = jtj.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    let svd = jtj.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let degenerate = !(smax > 0.0) || smin <= 1e-12 * smax;
    let cov = if degenerate {
        svd.pseudo_inverse(1e-12 * smax.max(f64::MIN_POSITIVE)).unwrap_or_else(|_| DMatrix::zeros(n, n))
    } else {
        match jtj.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => svd.pseudo_inverse(0.0).unwrap_or_else(|_| DMatrix::zeros(n, n)),
        }
    };
    // symmetrize away rounding
    let cov = (&cov + cov.transpose()) * 0.5;
    (cov, degenerate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_model_exact() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let res = |p: &[f64]| xs.iter().map(|&x| p[0] + p[1] * x - (1.5 - 0.25 * x)).collect::<Vec<_>>();
        let out = levenberg_marquardt(res, &[0.0, 0.0], LmOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 1.5).abs() < 1e-9 && (out.params[1] + 0.25).abs() < 1e-9);
        assert!(!out.degenerate);
    }

    #[test]
    fn degenerate_direction_flagged() {
        let res = |p: &[f64]| vec![p[0] + p[1] - 1.0, p[0] + p[1] - 1.0];
        let out = levenberg_marquardt(res, &[0.0, 0.0], LmOptions::default()).unwrap();
        assert!(out.degenerate);
        assert!((out.params[0] + out.params[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_points() {
        assert!(levenberg_marquardt(|p: &[f64]| vec![p[0]], &[0.0, 1.0], LmOptions::default()).is_err());
    }
}

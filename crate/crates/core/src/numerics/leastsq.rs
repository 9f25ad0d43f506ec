//! Damped least squares (Levenberg-Marquardt) over a caller-supplied
//! residual function.
//!
//! The caller packs everything model-specific — data, weights, model shape —
//! into a closure that fills `residuals[i]` for the current parameter vector.
//! The engine owns the Jacobian (forward differences), the damping schedule
//! and the covariance estimate. All accumulations run in fixed index order,
//! so identical inputs give bitwise-identical outputs.

use crate::error::{Error, Result};
use crate::numerics::linalg::{invert, solve};

/// Stopping rules and damping seed for [`least_squares`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Hard cap on outer iterations.
    pub max_iterations: usize,
    /// Converged when the largest relative parameter step drops below this.
    pub param_tol: f64,
    /// Converged when the relative decrease of the residual sum drops below
    /// this.
    pub rss_tol: f64,
    /// Initial Levenberg damping factor.
    pub lambda_init: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            param_tol: 1e-10,
            rss_tol: 1e-12,
            lambda_init: 1e-3,
        }
    }
}

/// Result of a least-squares minimisation.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    /// Best parameter vector found.
    pub params: Vec<f64>,
    /// Parameter covariance, `rss/(n-p) * (JᵀJ)⁻¹`; NaN-filled when the
    /// normal matrix is singular.
    pub covariance: Vec<Vec<f64>>,
    /// Residual sum of squares at `params`.
    pub rss: f64,
    /// `rss / (n - p)`; NaN when the fit is not over-determined.
    pub reduced_chi_square: f64,
    /// Number of residuals.
    pub n_points: usize,
    /// Number of free parameters.
    pub n_params: usize,
    /// False when iteration hit the cap or the normal matrix was singular.
    pub converged: bool,
    /// Outer iterations actually performed.
    pub iterations: usize,
}

impl LeastSquaresFit {
    /// 1-sigma uncertainty of parameter `j` from the covariance diagonal.
    pub fn param_sigma(&self, j: usize) -> f64 {
        self.covariance[j][j].max(0.0).sqrt()
    }
}

/// Minimises `Σ residuals²` over the parameters, starting from `init`.
///
/// `residual` must fill its output slice (length `n_residuals`) for any
/// parameter vector; returning an error rejects the trial step, except at
/// `init` where it aborts the fit. Weighting is the caller's business:
/// divide each residual by its sigma before returning it.
pub fn least_squares<F>(
    residual: F,
    n_residuals: usize,
    init: &[f64],
    opts: &FitOptions,
) -> Result<LeastSquaresFit>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let n_params = init.len();
    if n_params == 0 {
        return Err(Error::domain("least squares needs at least one parameter"));
    }
    if n_residuals < n_params {
        return Err(Error::domain(format!(
            "under-determined fit: {n_residuals} residuals for {n_params} parameters"
        )));
    }

    let mut params = init.to_vec();
    let mut res = vec![0.0; n_residuals];
    residual(&params, &mut res)?;
    let mut rss = sum_sq(&res);
    if !rss.is_finite() {
        return Err(Error::numerical(format!(
            "residuals are not finite at the initial parameters {params:?}"
        )));
    }

    let mut lambda = opts.lambda_init;
    let mut converged = false;
    let mut singular = false;
    let mut iterations = 0;

    'outer: for iter in 1..=opts.max_iterations {
        iterations = iter;
        let jac = forward_jacobian(&residual, &params, &res)?;
        let (jtj, jtr) = normal_system(&jac, &res, n_params);

        let mut accepted = false;
        while lambda < 1e15 {
            let damped = damp(&jtj, lambda);
            let rhs: Vec<f64> = jtr.iter().map(|g| -g).collect();
            let step = match solve(&damped, &rhs) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };

            let trial: Vec<f64> = params
                .iter()
                .zip(&step)
                .map(|(p, d)| p + d)
                .collect();
            let mut trial_res = vec![0.0; n_residuals];
            let trial_rss = match residual(&trial, &mut trial_res) {
                Ok(()) => sum_sq(&trial_res),
                Err(_) => f64::INFINITY,
            };

            if trial_rss.is_finite() && trial_rss <= rss {
                let param_change = step
                    .iter()
                    .zip(&trial)
                    .map(|(d, p)| d.abs() / p.abs().max(1.0))
                    .fold(0.0_f64, f64::max);
                let rss_change = (rss - trial_rss) / rss.max(f64::MIN_POSITIVE);

                params = trial;
                res = trial_res;
                rss = trial_rss;
                lambda = (lambda * 0.1).max(1e-14);
                accepted = true;

                if param_change < opts.param_tol || rss_change < opts.rss_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }

        if !accepted {
            // No downhill step even under heavy damping: either a (local)
            // minimum with a degenerate normal matrix or a stalled search.
            singular = true;
            break 'outer;
        }
        if converged {
            break 'outer;
        }
    }

    // Covariance from the normal matrix at the final parameters.
    let jac = forward_jacobian(&residual, &params, &res)?;
    let (jtj, _) = normal_system(&jac, &res, n_params);
    let reduced_chi_square = if n_residuals > n_params {
        rss / (n_residuals - n_params) as f64
    } else {
        f64::NAN
    };
    let covariance = match invert(&jtj) {
        Some(inv) => {
            let scale = if reduced_chi_square.is_finite() {
                reduced_chi_square
            } else {
                1.0
            };
            inv.into_iter()
                .map(|row| row.into_iter().map(|v| v * scale).collect())
                .collect()
        }
        None => {
            singular = true;
            vec![vec![f64::NAN; n_params]; n_params]
        }
    };

    Ok(LeastSquaresFit {
        params,
        covariance,
        rss,
        reduced_chi_square,
        n_points: n_residuals,
        n_params,
        converged: converged && !singular,
        iterations,
    })
}

fn sum_sq(v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for x in v {
        acc += x * x;
    }
    acc
}

/// Forward-difference Jacobian, step `sqrt(eps) * max(|p_j|, 1)`.
fn forward_jacobian<F>(residual: &F, params: &[f64], res_at_p: &[f64]) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let n = res_at_p.len();
    let n_params = params.len();
    let mut jac = vec![vec![0.0; n_params]; n];
    let mut shifted = vec![0.0; n];
    for j in 0..n_params {
        let step = f64::EPSILON.sqrt() * params[j].abs().max(1.0);
        let mut p = params.to_vec();
        p[j] += step;
        residual(&p, &mut shifted).map_err(|e| {
            Error::numerical(format!(
                "residual evaluation failed while differencing parameter {j}: {e}"
            ))
        })?;
        for i in 0..n {
            jac[i][j] = (shifted[i] - res_at_p[i]) / step;
        }
    }
    Ok(jac)
}

/// JᵀJ and Jᵀr accumulated in row order.
fn normal_system(jac: &[Vec<f64>], res: &[f64], n_params: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut jtj = vec![vec![0.0; n_params]; n_params];
    let mut jtr = vec![0.0; n_params];
    for (row, r) in jac.iter().zip(res) {
        for j in 0..n_params {
            jtr[j] += row[j] * r;
            for k in 0..n_params {
                jtj[j][k] += row[j] * row[k];
            }
        }
    }
    (jtj, jtr)
}

/// Marquardt damping: scale the diagonal, with a floor so a flat direction
/// still gets a ridge.
fn damp(jtj: &[Vec<f64>], lambda: f64) -> Vec<Vec<f64>> {
    let n = jtj.len();
    let diag_scale = (0..n)
        .map(|j| jtj[j][j].abs())
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    let mut out = jtj.to_vec();
    for j in 0..n {
        out[j][j] += lambda * jtj[j][j].abs().max(1e-12 * diag_scale);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line_data() -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..12).map(|i| 0.5 + 0.4 * i as f64).collect();
        // y = 1.7 + 0.8 x plus a fixed, reproducible wiggle.
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| 1.7 + 0.8 * x + 0.05 * ((i * 7 % 5) as f64 - 2.0))
            .collect();
        (xs, ys)
    }

    fn line_residual<'a>(
        xs: &'a [f64],
        ys: &'a [f64],
    ) -> impl Fn(&[f64], &mut [f64]) -> Result<()> + 'a {
        move |p: &[f64], out: &mut [f64]| {
            for i in 0..xs.len() {
                out[i] = p[0] + p[1] * xs[i] - ys[i];
            }
            Ok(())
        }
    }

    /// For a model linear in its parameters the minimiser must land on the
    /// textbook normal-equation solution, computed here independently.
    #[test]
    fn linear_model_matches_closed_form() {
        let (xs, ys) = line_data();
        let n = xs.len() as f64;
        let mean_x = xs.iter().sum::<f64>() / n;
        let mean_y = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
        let sxy: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mean_x) * (y - mean_y))
            .sum();
        let slope = sxy / sxx;
        let intercept = mean_y - slope * mean_x;

        let fit = least_squares(
            line_residual(&xs, &ys),
            xs.len(),
            &[0.0, 0.0],
            &FitOptions::default(),
        )
        .unwrap();

        assert!(fit.converged);
        assert_relative_eq!(fit.params[0], intercept, max_relative = 1e-9);
        assert_relative_eq!(fit.params[1], slope, max_relative = 1e-9);

        // Covariance against the closed-form simple-regression variances.
        let sigma2 = fit.rss / (xs.len() - 2) as f64;
        let var_slope = sigma2 / sxx;
        let var_intercept = sigma2 * (1.0 / n + mean_x * mean_x / sxx);
        assert_relative_eq!(fit.covariance[1][1], var_slope, max_relative = 1e-6);
        assert_relative_eq!(fit.covariance[0][0], var_intercept, max_relative = 1e-6);
        assert_relative_eq!(
            fit.reduced_chi_square,
            fit.rss / (xs.len() - 2) as f64,
            max_relative = 1e-14
        );
    }

    #[test]
    fn recovers_exponential_decay_without_noise() {
        let xs: Vec<f64> = (0..20).map(|i| 0.2 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 2.5 * (-0.7 * x).exp()).collect();
        let fit = least_squares(
            |p, out| {
                for i in 0..xs.len() {
                    out[i] = p[0] * (-p[1] * xs[i]).exp() - ys[i];
                }
                Ok(())
            },
            xs.len(),
            &[1.0, 1.0],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.params[0], 2.5, max_relative = 1e-8);
        assert_relative_eq!(fit.params[1], 0.7, max_relative = 1e-8);
        assert!(fit.rss < 1e-18, "rss = {}", fit.rss);
    }

    /// Shuffling data rows must not change the answer, and re-running on
    /// identical input must reproduce it bit for bit.
    #[test]
    fn row_order_does_not_matter() {
        let (xs, ys) = line_data();
        let opts = FitOptions::default();
        let fit_a = least_squares(line_residual(&xs, &ys), xs.len(), &[0.0, 0.0], &opts).unwrap();
        let fit_b = least_squares(line_residual(&xs, &ys), xs.len(), &[0.0, 0.0], &opts).unwrap();
        assert_eq!(fit_a.params[0].to_bits(), fit_b.params[0].to_bits());
        assert_eq!(fit_a.params[1].to_bits(), fit_b.params[1].to_bits());

        let mut xr = xs.clone();
        let mut yr = ys.clone();
        xr.reverse();
        yr.reverse();
        // Reversed rows change the floating-point accumulation path, so
        // agreement is only up to the optimiser's own stopping tolerance.
        let fit_c = least_squares(line_residual(&xr, &yr), xr.len(), &[0.0, 0.0], &opts).unwrap();
        assert_relative_eq!(fit_a.params[0], fit_c.params[0], max_relative = 1e-9);
        assert_relative_eq!(fit_a.params[1], fit_c.params[1], max_relative = 1e-9);
    }

    /// A model where two parameters enter only as their sum has a singular
    /// normal matrix; the fit must flag that instead of fabricating a
    /// covariance.
    #[test]
    fn degenerate_parameters_flagged_not_converged() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let fit = least_squares(
            |p, out| {
                for i in 0..xs.len() {
                    out[i] = (p[0] + p[1]) * xs[i] - 3.0 * xs[i];
                }
                Ok(())
            },
            xs.len(),
            &[1.0, 1.0],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(!fit.converged);
        assert!(fit.covariance[0][0].is_nan());
        // The sum should still have been driven to the right value.
        assert_relative_eq!(fit.params[0] + fit.params[1], 3.0, max_relative = 1e-6);
    }

    #[test]
    fn iteration_cap_reported() {
        let xs: Vec<f64> = (0..10).map(|i| 0.3 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| (1.3 * x).sin() + 0.2 * x).collect();
        let fit = least_squares(
            |p, out| {
                for i in 0..xs.len() {
                    out[i] = (p[0] * xs[i]).sin() + p[1] * xs[i] - ys[i];
                }
                Ok(())
            },
            xs.len(),
            &[0.9, 0.1],
            &FitOptions {
                max_iterations: 1,
                param_tol: 0.0,
                rss_tol: 0.0,
                ..FitOptions::default()
            },
        )
        .unwrap();
        assert_eq!(fit.iterations, 1);
        assert!(!fit.converged);
    }

    #[test]
    fn under_determined_fit_is_an_error() {
        let err = least_squares(|_, _| Ok(()), 1, &[0.0, 0.0], &FitOptions::default());
        assert!(err.is_err());
    }
}

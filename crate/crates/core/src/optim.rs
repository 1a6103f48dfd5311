//! Quasi-Newton minimization for smooth unconstrained objectives.

/// Why a minimization run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Gradient norm fell below tolerance.
    Gradient,
    /// Relative objective change between accepted steps fell below tolerance.
    Objective,
    /// No descent step could be found at working precision.
    Stalled,
    MaxIterations,
}

impl Termination {
    /// Gradient and objective criteria count as convergence; a stall means the
    /// run reached working precision and is counted as well.
    pub fn converged(self) -> bool {
        !matches!(self, Termination::MaxIterations)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub objective_tol: f64,
    pub gradient_tol: f64,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// BFGS with an Armijo backtracking line search. `f` returns the objective
/// and writes the gradient into its second argument.
pub fn bfgs<F>(mut f: F, x0: Vec<f64>, opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut h = identity(n);
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut dir = vec![0.0; n];

    for iter in 0..opts.max_iter {
        let gnorm = norm(&g);
        if gnorm < opts.gradient_tol {
            return Minimum {
                x,
                value: fx,
                gradient_norm: gnorm,
                iterations: iter,
                termination: Termination::Gradient,
            };
        }

        let mut reset_done = false;
        let (step_f, s, y) = loop {
            for i in 0..n {
                dir[i] = -dot(&h[i], &g);
            }
            let mut slope = dot(&dir, &g);
            if !(slope < 0.0) {
                // Lost positive definiteness; fall back to steepest descent.
                h = identity(n);
                dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
                slope = -gnorm * gnorm;
            }
            // Cap the first trial step so a bad curvature estimate cannot
            // throw the iterate far away.
            let dnorm = norm(&dir);
            let mut step = if dnorm > 10.0 { 10.0 / dnorm } else { 1.0 };
            let mut accepted = None;
            for _ in 0..60 {
                for i in 0..n {
                    trial[i] = x[i] + step * dir[i];
                }
                let ft = f(&trial, &mut g_trial);
                if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                    accepted = Some(ft);
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some(ft) => {
                    let s: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
                    let y: Vec<f64> = (0..n).map(|i| g_trial[i] - g[i]).collect();
                    break (ft, s, y);
                }
                None if !reset_done => {
                    h = identity(n);
                    reset_done = true;
                }
                None => {
                    return Minimum {
                        x,
                        value: fx,
                        gradient_norm: gnorm,
                        iterations: iter,
                        termination: Termination::Stalled,
                    };
                }
            }
        };

        let df = fx - step_f;
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_trial);
        fx = step_f;
        if df.abs() < opts.objective_tol * fx.abs() {
            return Minimum {
                x,
                value: fx,
                gradient_norm: norm(&g),
                iterations: iter + 1,
                termination: Termination::Objective,
            };
        }

        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
    }
    let gnorm = norm(&g);
    Minimum { x, value: fx, gradient_norm: gnorm, iterations: opts.max_iter, termination: Termination::MaxIterations }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

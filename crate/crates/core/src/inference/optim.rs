//! Derivative-free Nelder–Mead minimisation with dimension-adaptive
//! coefficients and restarts from the incumbent.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Converged when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// ...and every vertex is within this distance (max norm) of the best.
    pub x_tol: f64,
    pub initial_step: f64,
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evaluations: 3000, f_tol: 1e-7, x_tol: 1e-5, initial_step: 0.5, restarts: 2 }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimise `f` from `x0`. Non-finite values are treated as `+∞`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult {
    let mut obj = Counted { f, evaluations: 0 };
    let n = x0.len();
    if n == 0 {
        let v = obj.call(x0);
        return NelderMeadResult { x: Vec::new(), f: v, evaluations: 1, iterations: 0, converged: true };
    }
    let mut best_x = x0.to_vec();
    let mut best_f = obj.call(x0);
    let mut iterations = 0;
    let mut converged = false;
    for round in 0..=opts.restarts {
        let before = best_f;
        let (x, fx, it, conv) = run(&mut obj, &best_x, best_f, opts);
        iterations += it;
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        converged = conv;
        if !conv || obj.evaluations >= opts.max_evaluations {
            break;
        }
        // A restart that no longer improves confirms the optimum.
        if round > 0 && before - best_f <= opts.f_tol {
            break;
        }
    }
    NelderMeadResult { x: best_x, f: best_f, evaluations: obj.evaluations, iterations, converged }
}

fn run<F: FnMut(&[f64]) -> f64>(
    obj: &mut Counted<F>,
    start: &[f64],
    f_start: f64,
    opts: &NelderMeadOptions,
) -> (Vec<f64>, f64, usize, bool) {
    let n = start.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), f_start));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += opts.initial_step;
        let fx = obj.call(&x);
        simplex.push((x, fx));
    }

    let mut iterations = 0;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;
        let spread = if f_best.is_finite() && f_worst.is_finite() { f_worst - f_best } else { f64::INFINITY };
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol && size <= opts.x_tol {
            return (simplex[0].0.clone(), f_best, iterations, true);
        }
        if obj.evaluations >= opts.max_evaluations {
            return (simplex[0].0.clone(), f_best, iterations, false);
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect() };

        let xr = along(alpha);
        let fr = obj.call(&xr);
        if fr < simplex[0].1 {
            let xe = along(alpha * gamma);
            let fe = obj.call(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(alpha * rho);
            let fc = obj.call(&xc);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = obj.call(&xc);
            (xc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // Shrink towards the best vertex.
        let best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + sigma * (x - b)).collect();
            let fx = obj.call(&x);
            *v = (x, fx);
        }
    }
}

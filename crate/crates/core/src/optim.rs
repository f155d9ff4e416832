//! Derivative-free minimization: Nelder–Mead followed by a compass search
//! that stops only when no coordinate step of the final size improves the
//! objective.

#[derive(Debug, Clone)]
pub struct Options {
    pub max_evals: usize,
    pub initial_step: f64,
    pub ftol: f64,
    /// Compass search halts once its step drops below this.
    pub min_step: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            max_evals: 20_000,
            initial_step: 0.1,
            ftol: 1e-12,
            min_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &Options) -> Minimum {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        finite_or_inf(f(x))
    };
    if n == 0 {
        let fx = eval(x0, &mut evals);
        return Minimum {
            x: Vec::new(),
            fx,
            evals,
            converged: true,
        };
    }

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut x = x0.to_vec();
        let step = if x[i].abs() > 1e-8 {
            opts.initial_step * x[i].abs().max(0.05)
        } else {
            opts.initial_step
        };
        x[i] += step;
        simplex.push(x);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let nm_budget = opts.max_evals * 3 / 4;
    let mut nm_converged = false;
    while evals < nm_budget {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fvals = order.iter().map(|&i| fvals[i]).collect();

        let spread = (fvals[n] - fvals[0]).abs();
        if spread.is_finite() && spread <= opts.ftol * (1.0 + fvals[0].abs()) {
            let size = simplex[1..]
                .iter()
                .flat_map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if size < 1e-9 || spread == 0.0 {
                nm_converged = true;
                break;
            }
        }

        let mut centroid = vec![0.0; n];
        for x in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let toward = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid.iter().zip(from).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = toward(-alpha, &simplex[n]);
        let fr = eval(&xr, &mut evals);
        if fr < fvals[0] {
            let xe = toward(-gamma, &simplex[n]);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                fvals[n] = fe;
            } else {
                simplex[n] = xr;
                fvals[n] = fr;
            }
        } else if fr < fvals[n - 1] {
            simplex[n] = xr;
            fvals[n] = fr;
        } else {
            let (xc, fc) = if fr < fvals[n] {
                let xc = toward(-rho, &simplex[n]);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = toward(rho, &simplex[n]);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < fvals[n].min(fr) {
                simplex[n] = xc;
                fvals[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = best
                        .iter()
                        .zip(&simplex[i])
                        .map(|(b, x)| b + sigma * (x - b))
                        .collect();
                    fvals[i] = eval(&simplex[i], &mut evals);
                }
            }
        }
    }

    let best_i = (0..=n).min_by(|&a, &b| fvals[a].total_cmp(&fvals[b])).unwrap();
    let mut x = simplex[best_i].clone();
    let mut fx = fvals[best_i];

    // Compass polish.
    let mut step = simplex
        .iter()
        .flat_map(|s| s.iter().zip(&x).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
        .clamp(opts.min_step * 16.0, opts.initial_step);
    let mut polished = false;
    while evals < opts.max_evals {
        let mut improved = false;
        for i in 0..n {
            for dir in [1.0, -1.0] {
                let mut trial = x.clone();
                trial[i] += dir * step;
                let ft = eval(&trial, &mut evals);
                // Negligible gains count as no gain so crawling along a
                // constraint boundary terminates.
                if ft < fx - opts.ftol * (1.0 + fx.abs()) {
                    x = trial;
                    fx = ft;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            if step <= opts.min_step {
                polished = true;
                break;
            }
            step *= 0.5;
        }
    }

    Minimum {
        x,
        fx,
        evals,
        converged: polished && (nm_converged || fx.is_finite()),
    }
}

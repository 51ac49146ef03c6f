//! Derivative-free Nelder–Mead simplex minimization.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Converged once every vertex lies within `xtol` (max-norm) of the best.
    pub xtol: f64,
    pub max_iter: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            xtol: 1e-8,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fval: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Simplex size (max-norm distance from the best vertex) at exit.
    pub final_step: f64,
}

fn eval(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimize `f` from `x0` with initial per-coordinate simplex offsets `step`.
/// After a first convergence the simplex is rebuilt once around the optimum
/// to guard against collapse on a ridge.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    opts: NelderMeadOptions,
) -> NelderMeadResult {
    let mut total_iter = 0;
    let mut start = x0.to_vec();
    let mut restarted = false;
    loop {
        let mut res = run(&mut f, &start, step, opts.xtol, opts.max_iter - total_iter);
        total_iter += res.iterations;
        res.iterations = total_iter;
        if !res.converged || restarted || total_iter >= opts.max_iter {
            return res;
        }
        restarted = true;
        start = res.x;
    }
}

fn run(
    f: &mut impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    xtol: f64,
    max_iter: usize,
) -> NelderMeadResult {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let dim = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += if step[i] != 0.0 { step[i] } else { 0.05 };
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| eval(f, v)).collect();

    let size = |simplex: &[Vec<f64>]| {
        simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };

    let mut iter = 0;
    loop {
        // order vertices, best first
        let mut idx: Vec<usize> = (0..=dim).collect();
        idx.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        fvals = idx.iter().map(|&i| fvals[i]).collect();

        let s = size(&simplex);
        if s < xtol || iter >= max_iter {
            return NelderMeadResult {
                x: simplex[0].clone(),
                fval: fvals[0],
                iterations: iter,
                converged: s < xtol,
                final_step: s,
            };
        }
        iter += 1;

        let mut centroid = vec![0.0; dim];
        for v in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / dim as f64;
            }
        }
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim])
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let xr = along(ALPHA);
        let fr = eval(f, &xr);
        if fr < fvals[0] {
            let xe = along(GAMMA);
            let fe = eval(f, &xe);
            if fe < fr {
                simplex[dim] = xe;
                fvals[dim] = fe;
            } else {
                simplex[dim] = xr;
                fvals[dim] = fr;
            }
            continue;
        }
        if fr < fvals[dim - 1] {
            simplex[dim] = xr;
            fvals[dim] = fr;
            continue;
        }
        let (xc, fc) = if fr < fvals[dim] {
            let xc = along(RHO * ALPHA);
            let fc = eval(f, &xc);
            (xc, fc)
        } else {
            let xc = along(-RHO);
            let fc = eval(f, &xc);
            (xc, fc)
        };
        if fc < fvals[dim].min(fr) {
            simplex[dim] = xc;
            fvals[dim] = fc;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].clone();
        for i in 1..=dim {
            for (x, b) in simplex[i].iter_mut().zip(&best) {
                *x = b + SIGMA * (*x - b);
            }
            fvals[i] = eval(f, &simplex[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let res = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.1, 0.1],
            NelderMeadOptions {
                xtol: 1e-10,
                max_iter: 5000,
            },
        );
        assert!(res.converged);
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reports_non_convergence() {
        let res = nelder_mead(
            |x| x.iter().map(|v| v * v).sum(),
            &[5.0; 6],
            &[1.0; 6],
            NelderMeadOptions {
                xtol: 1e-12,
                max_iter: 20,
            },
        );
        assert!(!res.converged);
        assert_eq!(res.iterations, 20);
        assert!(res.final_step > 0.0);
    }

    #[test]
    fn nan_treated_as_infinite() {
        let res = nelder_mead(
            |x| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) },
            &[1.0],
            &[0.5],
            NelderMeadOptions::default(),
        );
        assert!((res.x[0] - 2.0).abs() < 1e-7);
    }
}

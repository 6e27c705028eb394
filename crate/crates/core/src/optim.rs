//! Derivative-free and quasi-Newton optimizers used by the fitting and
//! calibration code.
//!
//! `bfgs_minimize` minimizes; the two derivative-free routines maximize, since
//! they are only used on objective functions that are to be maximized.

/// Outcome of an unconstrained minimization.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Relative change of the objective between iterations.
    pub rel_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-8,
        }
    }
}

/// Central-difference gradient with a step scaled to each coordinate.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS with inverse-Hessian updates and Armijo backtracking.
///
/// `grad` may return non-finite entries, in which case a central-difference
/// gradient of `f` is used for that iterate instead.
pub fn bfgs_minimize<F, G>(f: F, grad: G, x0: &[f64], opts: BfgsOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let gradient = |x: &[f64]| {
        let g = grad(x);
        if g.iter().all(|v| v.is_finite()) {
            g
        } else {
            numeric_gradient(&f, x)
        }
    };
    let identity = |h: &mut Vec<f64>| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
    };

    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Minimum {
            x,
            value: fx,
            iterations: 0,
            converged: false,
        };
    }
    let mut g = gradient(&x);
    let mut h = vec![0.0; n * n];
    identity(&mut h);

    let mut calm_steps = 0;
    for iter in 1..=opts.max_iter {
        let mut p: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>())
            .collect();
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            identity(&mut h);
            p = g.iter().map(|v| -v).collect();
            slope = dot(&g, &p);
        }
        if slope == 0.0 {
            return Minimum {
                x,
                value: fx,
                iterations: iter,
                converged: true,
            };
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + alpha * pi).collect();
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // no descent possible along any direction we can compute
            let converged = g.iter().all(|v| v.abs() <= 1e-6 * fx.abs().max(1.0));
            return Minimum {
                x,
                value: fx,
                iterations: iter,
                converged,
            };
        };

        let g_new = gradient(&x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }

        let rel_change = (fx - f_new).abs() / fx.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;

        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if rel_change <= opts.rel_tol {
            calm_steps += 1;
        } else {
            calm_steps = 0;
        }
        if (calm_steps >= 2 && gmax <= opts.rel_tol.sqrt() * fx.abs().max(1.0)) || gmax <= 1e-10 * fx.abs().max(1.0) {
            return Minimum {
                x,
                value: fx,
                iterations: iter,
                converged: true,
            };
        }
    }
    Minimum {
        x,
        value: fx,
        iterations: opts.max_iter,
        converged: false,
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// A point visited by a maximizer.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Evaluated {
    pub x: Vec<f64>,
    pub value: f64,
}

/// Golden-section search for the maximum of a unimodal function on
/// `[lo, hi]`, stopping once the bracket is narrower than `tol`. Every
/// evaluation is reported to `visit`.
pub fn golden_section_max<F, V>(mut f: F, lo: f64, hi: f64, tol: f64, mut visit: V)
where
    F: FnMut(f64) -> f64,
    V: FnMut(f64, f64),
{
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    visit(c, fc);
    let mut fd = f(d);
    visit(d, fd);
    while (b - a).abs() > tol {
        // ties move towards the lower end
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            visit(c, fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            visit(d, fd);
        }
    }
}

/// Nelder–Mead maximization inside the box `[lower, upper]`; trial points are
/// projected onto the box. Stops when the simplex diameter, measured relative
/// to the box width in each coordinate, falls below `tol`.
#[allow(clippy::too_many_arguments)]
pub fn nelder_mead_max<F, V>(
    mut f: F,
    start: &[f64],
    step: &[f64],
    lower: &[f64],
    upper: &[f64],
    tol: f64,
    max_iter: usize,
    mut visit: V,
) where
    F: FnMut(&[f64]) -> f64,
    V: FnMut(&[f64], f64),
{
    let dim = start.len();
    let project = |x: &mut Vec<f64>| {
        for i in 0..dim {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut eval = |x: &[f64]| {
        let v = f(x);
        visit(x, v);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((start.to_vec(), eval(start)));
    for i in 0..dim {
        let mut v = start.to_vec();
        v[i] += step[i];
        if v[i] > upper[i] {
            v[i] = start[i] - step[i];
        }
        project(&mut v);
        let fv = eval(&v);
        simplex.push((v, fv));
    }

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| {
                (0..dim)
                    .map(|i| (v[i] - simplex[0].0[i]).abs() / (upper[i] - lower[i]).max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < tol {
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|i| simplex[..dim].iter().map(|(v, _)| v[i]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();
        let along = |t: f64| {
            let mut p: Vec<f64> = (0..dim).map(|i| centroid[i] + t * (worst.0[i] - centroid[i])).collect();
            project(&mut p);
            p
        };

        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr > simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe);
            simplex[dim] = if fe > fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr > simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        let outside = fr > worst.1;
        let xc = along(if outside { -0.5 } else { 0.5 });
        let fc = eval(&xc);
        if (outside && fc >= fr) || (!outside && fc > worst.1) {
            simplex[dim] = (xc, fc);
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut v: Vec<f64> = (0..dim).map(|i| best[i] + 0.5 * (vertex.0[i] - best[i])).collect();
            project(&mut v);
            let fv = eval(&v);
            *vertex = (v, fv);
        }
    }
}

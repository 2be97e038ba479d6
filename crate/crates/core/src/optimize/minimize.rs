//! Small dense minimizers for constant fitting: BFGS and Nelder-Mead.

use crate::Scalar;

#[derive(Debug, Clone)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub f: T,
    pub converged: bool,
    pub iterations: usize,
}

/// Central-difference gradient with step `1e-6 * max(1, |x_i|)`.
pub fn fd_gradient<T: Scalar, F: FnMut(&[T]) -> T>(f: &mut F, x: &[T]) -> Vec<T> {
    let mut probe = x.to_vec();
    let rel = T::of(1e-6);
    (0..x.len())
        .map(|i| {
            let h = rel * T::one().max(x[i].abs());
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (h + h)
        })
        .collect()
}

/// A function to minimize. Plain closures get central-difference gradients.
pub trait Objective<T> {
    fn value(&mut self, x: &[T]) -> T;

    /// Value at `x`, writing the gradient into `g`.
    fn value_and_gradient(&mut self, x: &[T], g: &mut [T]) -> T;
}

impl<T: Scalar, F: FnMut(&[T]) -> T> Objective<T> for F {
    fn value(&mut self, x: &[T]) -> T {
        self(x)
    }

    fn value_and_gradient(&mut self, x: &[T], g: &mut [T]) -> T {
        g.copy_from_slice(&fd_gradient(self, x));
        self(x)
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn inf_norm<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
}

pub struct BfgsSettings<T> {
    pub max_iter: usize,
    /// Stop once the gradient's infinity norm drops below this.
    pub gtol: T,
    /// Stop once the objective reaches this value.
    pub f_target: T,
}

pub fn bfgs<T: Scalar, O: Objective<T> + ?Sized>(
    f: &mut O,
    x0: &[T],
    settings: &BfgsSettings<T>,
) -> Minimum<T> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![T::zero(); n];
    let mut fx = f.value_and_gradient(&x, &mut g);
    if !fx.is_finite() {
        return Minimum {
            x,
            f: T::infinity(),
            converged: false,
            iterations: 0,
        };
    }
    // inverse Hessian approximation, row-major
    let identity = |h: &mut Vec<T>| {
        h.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..n {
            h[i * n + i] = T::one();
        }
    };
    let mut h = vec![T::zero(); n * n];
    identity(&mut h);
    let c1 = T::of(1e-4);
    let half = T::of(0.5);
    let mut converged = false;
    let mut iterations = 0;
    let mut stalls = 0;

    while iterations < settings.max_iter {
        if fx <= settings.f_target || inf_norm(&g) <= settings.gtol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut p: Vec<T> = (0..n)
            .map(|i| -(0..n).fold(T::zero(), |acc, j| acc + h[i * n + j] * g[j]))
            .collect();
        let mut slope = dot(&g, &p);
        if !(slope < T::zero()) {
            identity(&mut h);
            p = g.iter().map(|&v| -v).collect();
            slope = dot(&g, &p);
        }
        // backtracking line search on the Armijo condition
        let mut alpha = T::one();
        let mut accepted = None;
        let mut trial = vec![T::zero(); n];
        for _ in 0..50 {
            for i in 0..n {
                trial[i] = x[i] + alpha * p[i];
            }
            let ft = f.value(&trial);
            if ft.is_finite() && ft <= fx + c1 * alpha * slope {
                accepted = Some(ft);
                break;
            }
            alpha = alpha * half;
        }
        let Some(f_new) = accepted else {
            // no descent along p: retry once from steepest descent
            if stalls == 0 {
                stalls += 1;
                identity(&mut h);
                continue;
            }
            break;
        };
        stalls = 0;
        let mut g_new = vec![T::zero(); n];
        f.value_and_gradient(&trial, &mut g_new);
        let s: Vec<T> = (0..n).map(|i| trial[i] - x[i]).collect();
        let y: Vec<T> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        let rel_change = (fx - f_new).abs() / (T::one() + fx.abs());
        x.clone_from(&trial);
        let f_old = fx;
        fx = f_new;
        g = g_new;
        if sy > T::epsilon() * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > T::zero() {
            let rho = T::one() / sy;
            let hy: Vec<T> = (0..n)
                .map(|i| (0..n).fold(T::zero(), |acc, j| acc + h[i * n + j] * y[j]))
                .collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = h[i * n + j] - rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        if rel_change <= T::epsilon() && f_old - fx <= T::epsilon() * fx.abs() {
            converged = true;
            break;
        }
    }
    if fx <= settings.f_target || inf_norm(&g) <= settings.gtol {
        converged = true;
    }
    Minimum {
        x,
        f: fx,
        converged,
        iterations,
    }
}

pub fn nelder_mead<T: Scalar, F: FnMut(&[T]) -> T>(
    mut f: F,
    x0: &[T],
    max_iter: usize,
    f_target: T,
) -> Minimum<T> {
    let n = x0.len();
    let clean = |v: T| if v.is_finite() { v } else { T::infinity() };
    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), clean(f(x0))));
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = if v[i].abs() > T::of(1e-8) {
            v[i] * T::of(0.05)
        } else {
            T::of(0.00025)
        };
        v[i] = v[i] + step;
        let fv = clean(f(&v));
        simplex.push((v, fv));
    }
    let (alpha, gamma, rho, sigma) = (T::one(), T::of(2.0), T::of(0.5), T::of(0.5));
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best <= f_target || (worst - best).abs() <= T::of(1e-14) * (T::one() + best.abs()) {
            converged = best.is_finite();
            break;
        }
        iterations += 1;
        let centroid: Vec<T> = (0..n)
            .map(|j| simplex[..n].iter().fold(T::zero(), |a, (v, _)| a + v[j]) / T::of(n as f64))
            .collect();
        let along = |coef: T, from: &[T]| -> Vec<T> {
            (0..n).map(|j| centroid[j] + coef * (from[j] - centroid[j])).collect()
        };
        let xr = along(-alpha, &simplex[n].0);
        let fr = clean(f(&xr));
        if fr < simplex[0].1 {
            let xe = along(-gamma, &simplex[n].0);
            let fe = clean(f(&xe));
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(rho, &xr);
                let fc = clean(f(&xc));
                (xc, fc)
            } else {
                let xc = along(rho, &simplex[n].0);
                let fc = clean(f(&xc));
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let v: Vec<T> = (0..n)
                        .map(|j| x_best[j] + sigma * (item.0[j] - x_best[j]))
                        .collect();
                    let fv = clean(f(&v));
                    *item = (v, fv);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, fx) = simplex.swap_remove(0);
    Minimum {
        x,
        f: fx,
        converged,
        iterations,
    }
}

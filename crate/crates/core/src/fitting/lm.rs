//! Bounded damped least squares.
//!
//! Parameters flagged `log` are optimized as ln x, so lifetimes and rates
//! spanning decades get well-conditioned steps. Steps are projected back onto
//! the box after each solve. Damping follows Marquardt's diagonal scaling,
//! which makes the iteration invariant to rescaling individual parameters.

use nalgebra::{DMatrix, DVector};

use crate::exec::Exec;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub unit: String,
    pub lo: f64,
    pub hi: f64,
    pub log: bool,
}

impl ParamSpec {
    pub fn new(name: &str, unit: &str, lo: f64, hi: f64, log: bool) -> Self {
        ParamSpec { name: name.to_string(), unit: unit.to_string(), lo, hi, log }
    }

    fn to_internal(&self, x: f64) -> f64 {
        if self.log {
            x.ln()
        } else {
            x
        }
    }

    fn to_external(&self, u: f64) -> f64 {
        if self.log {
            u.exp()
        } else {
            u
        }
    }

    fn internal_bounds(&self) -> (f64, f64) {
        (self.to_internal(self.lo), self.to_internal(self.hi))
    }

    /// dx/du at `x`.
    fn jacobian_factor(&self, x: f64) -> f64 {
        if self.log {
            x
        } else {
            1.0
        }
    }
}

/// A least-squares objective: residual vector as a function of the external
/// parameters.
pub trait Residuals: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn residuals(&self, x: &[f64], out: &mut [f64]);

    fn rss(&self, x: &[f64]) -> f64 {
        let mut r = vec![0.0; self.len()];
        self.residuals(x, &mut r);
        r.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub gtol: f64,
    /// Number of lattice starts added after any explicit guesses.
    pub lattice_starts: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iter: 400,
            ftol: 1e-15,
            xtol: 1e-13,
            gtol: 1e-14,
            lattice_starts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the start that produced this outcome.
    pub start: usize,
}

fn eval(obj: &dyn Residuals, specs: &[ParamSpec], u: &[f64], out: &mut [f64]) {
    let x: Vec<f64> = specs.iter().zip(u).map(|(s, &v)| s.to_external(v)).collect();
    obj.residuals(&x, out);
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Central-difference Jacobian in internal coordinates, one-sided at bounds.
fn jacobian(obj: &dyn Residuals, specs: &[ParamSpec], u: &[f64]) -> DMatrix<f64> {
    let m = obj.len();
    let p = u.len();
    let mut jac = DMatrix::zeros(m, p);
    let mut up = vec![0.0; m];
    let mut dn = vec![0.0; m];
    let mut work = u.to_vec();
    for j in 0..p {
        let (lo, hi) = specs[j].internal_bounds();
        let h = if specs[j].log {
            1e-6
        } else {
            1e-6 * u[j].abs().max(1e-3 * (hi - lo))
        };
        let a = (u[j] - h).max(lo);
        let b = (u[j] + h).min(hi);
        work[j] = b;
        eval(obj, specs, &work, &mut up);
        work[j] = a;
        eval(obj, specs, &work, &mut dn);
        work[j] = u[j];
        let span = b - a;
        if span > 0.0 {
            for i in 0..m {
                jac[(i, j)] = (up[i] - dn[i]) / span;
            }
        }
    }
    jac
}

fn clamp(u: &mut [f64], specs: &[ParamSpec]) {
    for (v, s) in u.iter_mut().zip(specs) {
        let (lo, hi) = s.internal_bounds();
        *v = v.clamp(lo, hi);
    }
}

/// One damped least-squares descent from `x0` (external coordinates).
pub fn minimize(obj: &dyn Residuals, specs: &[ParamSpec], x0: &[f64], cfg: &LmConfig) -> Outcome {
    let p = specs.len();
    let m = obj.len();
    let mut u: Vec<f64> = specs.iter().zip(x0).map(|(s, &x)| s.to_internal(x)).collect();
    clamp(&mut u, specs);
    let mut r = vec![0.0; m];
    eval(obj, specs, &u, &mut r);
    let mut rss = sum_sq(&r);
    let mut lambda = 1e-3;
    let mut nu = 2.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; m];

    'outer: while iterations < cfg.max_iter {
        iterations += 1;
        if !rss.is_finite() {
            break;
        }
        if rss == 0.0 {
            converged = true;
            break;
        }
        let jac = jacobian(obj, specs, &u);
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_column_slice(&r);
        if g.amax() <= cfg.gtol * rss.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        let diag_floor = 1e-12 * (0..p).map(|i| a[(i, i)]).fold(0.0, f64::max);
        loop {
            let mut damped = a.clone();
            for i in 0..p {
                damped[(i, i)] += lambda * a[(i, i)].max(diag_floor).max(f64::MIN_POSITIVE);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= nu;
                    nu *= 2.0;
                    if lambda > 1e20 {
                        converged = true;
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut u_new: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp(&mut u_new, specs);
            let delta = DVector::from_iterator(p, u_new.iter().zip(&u).map(|(a, b)| a - b));
            let unorm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if delta.norm() <= cfg.xtol * (unorm + cfg.xtol) {
                converged = true;
                break 'outer;
            }
            eval(obj, specs, &u_new, &mut trial);
            let rss_new = sum_sq(&trial);
            let predicted = -(2.0 * g.dot(&delta) + (delta.transpose() * &a * &delta)[(0, 0)]);
            if rss_new.is_finite() && rss_new < rss {
                let rho = if predicted > 0.0 { (rss - rss_new) / predicted } else { 1.0 };
                lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                let gain = rss - rss_new;
                u = u_new;
                std::mem::swap(&mut r, &mut trial);
                rss = rss_new;
                if gain <= cfg.ftol * rss {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e20 {
                // no downhill step left at any damping: a (constrained) minimum
                converged = true;
                break 'outer;
            }
        }
    }

    Outcome {
        x: specs.iter().zip(&u).map(|(s, &v)| s.to_external(v)).collect(),
        rss,
        iterations,
        converged,
        start: 0,
    }
}

/// Deterministic start lattice: start s puts coordinate i at the
/// ((s·a_i mod n) + ½)/n quantile of its internal range, a_i cycling over
/// odd generators so each coordinate visits every level once.
pub fn lattice(specs: &[ParamSpec], n: usize) -> Vec<Vec<f64>> {
    const GENERATORS: [usize; 4] = [1, 3, 5, 7];
    (0..n)
        .map(|s| {
            specs
                .iter()
                .enumerate()
                .map(|(i, spec)| {
                    let a = GENERATORS[i % GENERATORS.len()];
                    let q = (((s * a) % n) as f64 + 0.5) / n as f64;
                    let (lo, hi) = spec.internal_bounds();
                    spec.to_external(lo + q * (hi - lo))
                })
                .collect()
        })
        .collect()
}

/// Runs every explicit guess and then the lattice; keeps the lowest RSS,
/// earliest start on ties.
pub fn multistart(
    obj: &dyn Residuals,
    specs: &[ParamSpec],
    guesses: &[Vec<f64>],
    cfg: &LmConfig,
    exec: Exec,
) -> Outcome {
    let mut starts: Vec<Vec<f64>> = guesses.to_vec();
    starts.extend(lattice(specs, cfg.lattice_starts));
    let outcomes = exec.map(starts.len(), |i| {
        let mut o = minimize(obj, specs, &starts[i], cfg);
        o.start = i;
        o
    });
    outcomes
        .into_iter()
        .filter(|o| o.rss.is_finite())
        .min_by(|a, b| a.rss.total_cmp(&b.rss).then(a.start.cmp(&b.start)))
        .unwrap_or_else(|| Outcome {
            x: starts[0].clone(),
            rss: f64::INFINITY,
            iterations: 0,
            converged: false,
            start: 0,
        })
}

/// 1-σ uncertainties from σ²(JᵀJ)⁻¹ at `x`. `variance` is the residual
/// variance; directions the data cannot resolve get an infinite uncertainty.
pub fn uncertainties(obj: &dyn Residuals, specs: &[ParamSpec], x: &[f64], variance: f64) -> Vec<f64> {
    let p = specs.len();
    let u: Vec<f64> = specs.iter().zip(x).map(|(s, &v)| s.to_internal(v)).collect();
    let jac = jacobian(obj, specs, &u);
    let norms: Vec<f64> = (0..p).map(|j| jac.column(j).norm()).collect();
    let mut scaled = jac.clone();
    for (j, n) in norms.iter().enumerate() {
        if *n > 0.0 {
            scaled.column_mut(j).scale_mut(1.0 / n);
        }
    }
    let a = scaled.transpose() * &scaled;
    let svd = a.svd(true, true);
    let v = svd.v_t.expect("requested").transpose();
    let smax = svd.singular_values.max();
    let mut out = vec![0.0; p];
    for i in 0..p {
        if norms[i] == 0.0 {
            out[i] = f64::INFINITY;
            continue;
        }
        let mut var = 0.0;
        for k in 0..p {
            let s = svd.singular_values[k];
            let w = v[(i, k)] * v[(i, k)];
            if s <= 1e-12 * smax {
                if w > 1e-8 {
                    var = f64::INFINITY;
                    break;
                }
            } else {
                var += w / s;
            }
        }
        let sigma_u = (variance * var).sqrt() / norms[i];
        out[i] = sigma_u * specs[i].jacobian_factor(x[i]).abs();
    }
    out
}

/// Least-squares coefficients for y ≈ Σ c_k·columns_k.
pub(crate) fn linear_lstsq(columns: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let m = y.len();
    let k = columns.len();
    let a = DMatrix::from_fn(m, k, |i, j| columns[j][i]);
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let x = svd.solve(&b, 1e-12).ok()?;
    Some(x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Line {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl Residuals for Line {
        fn len(&self) -> usize {
            self.t.len()
        }
        fn residuals(&self, x: &[f64], out: &mut [f64]) {
            for ((o, t), y) in out.iter_mut().zip(&self.t).zip(&self.y) {
                *o = y - x[0] * (-t / x[1]).exp();
            }
        }
    }

    fn decay(a: f64, tau: f64) -> Line {
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|t| a * (-t / tau).exp()).collect();
        Line { t, y }
    }

    fn specs() -> Vec<ParamSpec> {
        vec![
            ParamSpec::new("a", "", 0.0, 10.0, false),
            ParamSpec::new("tau", "s", 1e-3, 100.0, true),
        ]
    }

    #[test]
    fn recovers_exact_model() {
        let obj = decay(2.0, 0.7);
        let o = minimize(&obj, &specs(), &[1.0, 5.0], &LmConfig::default());
        assert!(o.converged);
        assert!((o.x[0] - 2.0).abs() < 1e-9 && (o.x[1] - 0.7).abs() < 1e-9, "{:?}", o.x);
    }

    #[test]
    fn respects_bounds() {
        let obj = decay(2.0, 0.7);
        let mut s = specs();
        s[0].hi = 1.5;
        let o = minimize(&obj, &s, &[1.0, 5.0], &LmConfig::default());
        assert!(o.x[0] <= 1.5);
        assert!((o.x[0] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn lattice_is_inside_bounds_and_covers_each_level() {
        let s = specs();
        let pts = lattice(&s, 8);
        assert_eq!(pts.len(), 8);
        let mut levels: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        levels.sort_by(f64::total_cmp);
        for (k, v) in levels.iter().enumerate() {
            assert!((v - (k as f64 + 0.5) * 10.0 / 8.0).abs() < 1e-12);
        }
        assert!(pts.iter().all(|p| p[1] > 1e-3 && p[1] < 100.0));
    }

    #[test]
    fn multistart_is_deterministic_across_strategies() {
        let obj = decay(3.0, 0.2);
        let a = multistart(&obj, &specs(), &[], &LmConfig::default(), Exec::Sequential);
        let b = multistart(&obj, &specs(), &[], &LmConfig::default(), Exec::Parallel);
        assert_eq!(a, b);
    }

    #[test]
    fn unresolvable_direction_has_infinite_uncertainty() {
        struct Flat;
        impl Residuals for Flat {
            fn len(&self) -> usize {
                4
            }
            fn residuals(&self, x: &[f64], out: &mut [f64]) {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = i as f64 - x[0];
                }
            }
        }
        let s = vec![
            ParamSpec::new("c", "", -10.0, 10.0, false),
            ParamSpec::new("unused", "", -10.0, 10.0, false),
        ];
        let sig = uncertainties(&Flat, &s, &[1.5, 0.0], 1.0);
        assert!((sig[0] - 0.5).abs() < 1e-9);
        assert!(sig[1].is_infinite());
    }

    #[test]
    fn lstsq_solves_overdetermined_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.5 + 2.0 * v).collect();
        let c = linear_lstsq(&[vec![1.0; 4], x.to_vec()], &y).unwrap();
        assert!((c[0] - 1.5).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12);
    }
}

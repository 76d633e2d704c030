//! Parameter recovery from traces: hole decay, echo decays, spectral
//! diffusion and hole broadening, plus a brute-force grid oracle.

pub mod broadening;
pub mod echo;
pub mod lm;
pub mod multiexp;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use lm::Residuals;
pub use lm::{LmConfig, ParamSpec};

pub use broadening::{fit_hole_broadening, fit_hole_width, HoleBroadeningFit, HoleWidthOptions};
pub use echo::{
    fit_3ppe_spectral_diffusion, fit_two_pulse, AmplitudeMode, LinewidthPoint, ThreePulseFit,
    ThreePulseOptions,
};
pub use multiexp::{fit_multiexponential, MultiExpOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    /// Σ a_k e^{−t/τ_k} (+ offset); parameters a₁, τ₁, a₂, τ₂, … [, offset].
    MultiExponential { components: usize, offset: bool },
    /// I₀ e^{−4πΓ_h t₁₂}; parameters Γ_h, I₀.
    TwoPulse,
    /// Γ_eff(t₂₃) at per-point t₁₂; parameters Γ₀ [, γ_TLS], Γ_SD, R_SD [, L].
    /// L is a log-intensity scale error entering as −L/(4πt₁₂).
    EffectiveLinewidth {
        t12: Vec<f64>,
        t0: f64,
        tls: bool,
        scale_term: bool,
    },
    /// 2Γ₀ + Γ_SD(1 − e^{−R_SD t}); parameters 2Γ₀, Γ_SD, R_SD.
    HoleWidth,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::MultiExponential { .. } => "multiexponential",
            Model::TwoPulse => "two_pulse",
            Model::EffectiveLinewidth { .. } => "effective_linewidth",
            Model::HoleWidth => "hole_width",
        }
    }

    /// Length of the full parameter vector, free and fixed together.
    pub fn n_params(&self) -> usize {
        match self {
            Model::MultiExponential { components, offset } => 2 * components + usize::from(*offset),
            Model::TwoPulse => 2,
            Model::EffectiveLinewidth { tls, scale_term, .. } => {
                3 + usize::from(*tls) + usize::from(*scale_term)
            }
            Model::HoleWidth => 3,
        }
    }

    pub fn eval(&self, p: &[f64], x: f64, i: usize) -> f64 {
        match self {
            Model::MultiExponential { components, offset } => {
                let sum: f64 = (0..*components)
                    .map(|k| p[2 * k] * (-x / p[2 * k + 1]).exp())
                    .sum();
                if *offset {
                    sum + p[2 * components]
                } else {
                    sum
                }
            }
            Model::TwoPulse => p[1] * (-4.0 * PI * p[0] * x).exp(),
            Model::EffectiveLinewidth { t12, t0, tls, scale_term } => {
                let t12 = t12[i];
                let mut k = 0;
                let mut next = || {
                    k += 1;
                    p[k - 1]
                };
                let gamma0 = next();
                let tls_term = if *tls { next() * (x / t0).ln() } else { 0.0 };
                let gamma_sd = next();
                let r = next();
                let scale = if *scale_term { next() / (4.0 * PI * t12) } else { 0.0 };
                gamma0 + tls_term + 0.5 * gamma_sd * (r * t12 - (-r * x).exp_m1()) - scale
            }
            Model::HoleWidth => p[0] - p[1] * (-p[2] * x).exp_m1(),
        }
    }
}

/// Whether residuals are taken on the data or on its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    Linear,
    Log,
}

/// Everything a fit needs: model, data, weights, bounds and start policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub model: Model,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub weights: Vec<f64>,
    pub space: Space,
    pub params: Vec<ParamSpec>,
    /// Held parameters as (position in the model's layout, value).
    pub fixed: Vec<(usize, f64)>,
    /// Explicit starts tried before the lattice.
    pub guesses: Vec<Vec<f64>>,
    /// Known residual standard deviation; estimated from the fit otherwise.
    pub noise_sigma: Option<f64>,
}

impl FitProblem {
    pub fn new(
        model: Model,
        x: Vec<f64>,
        y: Vec<f64>,
        space: Space,
        params: Vec<ParamSpec>,
    ) -> Result<Self> {
        FitProblem::partial(model, x, y, space, params, Vec::new())
    }

    /// Problem with some model parameters held: `fixed` lists (position in
    /// the model's layout, value) and `params` fill the remaining positions
    /// in order.
    pub fn partial(
        model: Model,
        x: Vec<f64>,
        y: Vec<f64>,
        space: Space,
        params: Vec<ParamSpec>,
        mut fixed: Vec<(usize, f64)>,
    ) -> Result<Self> {
        fixed.sort_by_key(|f| f.0);
        let n = x.len();
        let problem = FitProblem {
            model,
            x,
            y,
            weights: vec![1.0; n],
            space,
            params,
            fixed,
            guesses: Vec::new(),
            noise_sigma: None,
        };
        problem.check()?;
        Ok(problem)
    }

    /// Full model parameter vector from the free values.
    pub fn full(&self, free: &[f64]) -> Vec<f64> {
        if self.fixed.is_empty() {
            return free.to_vec();
        }
        let n = self.model.n_params();
        let mut out = Vec::with_capacity(n);
        let mut free = free.iter();
        let mut fixed = self.fixed.iter().peekable();
        for pos in 0..n {
            match fixed.peek() {
                Some((p, v)) if *p == pos => {
                    out.push(*v);
                    fixed.next();
                }
                _ => out.push(*free.next().expect("layout checked")),
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        if self.x.len() != self.y.len() || self.weights.len() != self.x.len() {
            return Err(Error::invalid("data", "x, y and weights differ in length"));
        }
        if self.params.is_empty() {
            return Err(Error::invalid("params", "need at least one free parameter"));
        }
        if self.params.len() + self.fixed.len() != self.model.n_params()
            || self.fixed.iter().any(|f| f.0 >= self.model.n_params())
        {
            return Err(Error::invalid(
                "params",
                format!("{} model takes {} parameters", self.model.name(), self.model.n_params()),
            ));
        }
        if self.x.len() <= self.params.len() {
            return Err(Error::invalid(
                "data",
                format!("{} points for {} free parameters", self.x.len(), self.params.len()),
            ));
        }
        for p in &self.params {
            if !(p.lo.is_finite() && p.hi.is_finite() && p.lo < p.hi) {
                return Err(Error::invalid("bounds", format!("{}: bounds must be finite and ordered", p.name)));
            }
            if p.log && !(p.lo > 0.0) {
                return Err(Error::invalid("bounds", format!("{}: log-scaled bounds must be > 0", p.name)));
            }
        }
        if self.space == Space::Log && self.y.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("y", "log-space objective needs positive data"));
        }
        if self.y.iter().chain(&self.x).any(|v| !v.is_finite()) {
            return Err(Error::invalid("data", "must be finite"));
        }
        Ok(())
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.weights = weights;
        self.check()?;
        Ok(self)
    }

    pub fn predict(&self, p: &[f64]) -> Vec<f64> {
        let p = self.full(p);
        let p = p.as_slice();
        self.x
            .iter()
            .enumerate()
            .map(|(i, &x)| self.model.eval(p, x, i))
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }
}

impl Residuals for FitProblem {
    fn len(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let p = self.full(p);
        for (i, &x) in self.x.iter().enumerate() {
            let m = self.model.eval(&p, x, i);
            let r = match self.space {
                Space::Linear => self.y[i] - m,
                Space::Log => self.y[i].ln() - m.max(1e-300).ln(),
            };
            out[i] = self.weights[i] * r;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub uncertainty: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub estimates: Vec<Estimate>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Points excluded before fitting (e.g. non-positive intensities).
    pub dropped_points: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    /// Value of a named estimate; panics on an unknown name.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name)
            .unwrap_or_else(|| panic!("no estimate named {name}"))
            .value
    }

    pub fn uncertainty(&self, name: &str) -> f64 {
        self.get(name)
            .unwrap_or_else(|| panic!("no estimate named {name}"))
            .uncertainty
    }

    pub(crate) fn push(&mut self, name: &str, value: f64, uncertainty: f64, unit: &str) {
        self.estimates.push(Estimate {
            name: name.to_string(),
            value,
            uncertainty,
            unit: unit.to_string(),
        });
    }
}

/// Raw optimizer output for a problem, before family-specific relabelling.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFit {
    pub x: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn solve(problem: &FitProblem, cfg: &LmConfig, exec: Exec) -> Result<RawFit> {
    problem.check()?;
    let best = lm::multistart(problem, &problem.params, &problem.guesses, cfg, exec);
    let dof = problem.x.len() - problem.params.len();
    let variance = match problem.noise_sigma {
        Some(s) => s * s,
        None => best.rss / dof as f64,
    };
    let sigma = if best.rss.is_finite() {
        lm::uncertainties(problem, &problem.params, &best.x, variance)
    } else {
        vec![f64::INFINITY; problem.params.len()]
    };
    Ok(RawFit {
        x: best.x,
        sigma,
        rss: best.rss,
        iterations: best.iterations,
        converged: best.converged && best.rss.is_finite(),
    })
}

/// Optimizes `problem` and reports every parameter under its own name.
pub fn fit(problem: &FitProblem, cfg: &LmConfig, exec: Exec) -> Result<FitResult> {
    let raw = solve(problem, cfg, exec)?;
    let mut out = FitResult {
        model: problem.model.name().to_string(),
        estimates: Vec::new(),
        rss: raw.rss,
        iterations: raw.iterations,
        converged: raw.converged,
        dropped_points: 0,
        warnings: Vec::new(),
    };
    for (i, p) in problem.params.iter().enumerate() {
        out.push(&p.name, raw.x[i], raw.sigma[i], &p.unit);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub x: Vec<f64>,
    pub rss: f64,
    pub evaluations: u128,
}

pub const ORACLE_BUDGET: u128 = 10_000_000;

/// Knot `k` of `n` along a parameter's range: log-spaced for log-scaled
/// parameters, linear otherwise.
pub fn grid_knot(spec: &ParamSpec, k: usize, n: usize) -> f64 {
    if n == 1 {
        return if spec.log { (spec.lo * spec.hi).sqrt() } else { 0.5 * (spec.lo + spec.hi) };
    }
    let q = k as f64 / (n - 1) as f64;
    if spec.log {
        (spec.lo.ln() + q * (spec.hi.ln() - spec.lo.ln())).exp()
    } else {
        spec.lo + q * (spec.hi - spec.lo)
    }
}

/// Exhaustive evaluation over a `points_per_axis`^p grid inside the bounds.
pub fn grid_oracle(problem: &FitProblem, points_per_axis: usize, exec: Exec) -> Result<OracleResult> {
    problem.check()?;
    let p = problem.params.len();
    if p > 5 {
        return Err(Error::invalid("params", "grid oracle handles at most 5 free parameters"));
    }
    if points_per_axis == 0 {
        return Err(Error::invalid("points_per_axis", "must be >= 1"));
    }
    let evaluations = (points_per_axis as u128).pow(p as u32);
    if evaluations > ORACLE_BUDGET {
        return Err(Error::GridBudget { evaluations, budget: ORACLE_BUDGET });
    }
    let knots: Vec<Vec<f64>> = problem
        .params
        .iter()
        .map(|s| (0..points_per_axis).map(|k| grid_knot(s, k, points_per_axis)).collect())
        .collect();
    // the first axis is split across tasks; each task scans the rest in order
    let inner = evaluations as usize / points_per_axis;
    let per_slice = exec.map(points_per_axis, |first| {
        let mut x = vec![0.0; p];
        let mut r = vec![0.0; problem.x.len()];
        let mut best = (f64::INFINITY, Vec::new());
        for flat in 0..inner {
            x[0] = knots[0][first];
            let mut rem = flat;
            for axis in (1..p).rev() {
                x[axis] = knots[axis][rem % points_per_axis];
                rem /= points_per_axis;
            }
            problem.residuals(&x, &mut r);
            let rss: f64 = r.iter().map(|v| v * v).sum();
            if rss < best.0 {
                best = (rss, x.clone());
            }
        }
        best
    });
    let (rss, x) = per_slice
        .into_iter()
        .fold((f64::INFINITY, Vec::new()), |acc, b| if b.0 < acc.0 { b } else { acc });
    if x.is_empty() {
        return Err(Error::Domain("objective is not finite anywhere on the grid".into()));
    }
    Ok(OracleResult { x, rss, evaluations })
}

/// Smallest positive gap between consecutive abscissae.
pub(crate) fn min_spacing(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_hits_a_knot_exactly() {
        let spec = ParamSpec::new("gamma_h", "Hz", 10.0, 1e4, true);
        let truth = grid_knot(&spec, 7, 13);
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 1e-4).collect();
        let y = x.iter().map(|t| (-4.0 * PI * truth * t).exp()).collect();
        let problem =
            FitProblem::partial(Model::TwoPulse, x, y, Space::Log, vec![spec], vec![(1, 1.0)]).unwrap();
        let oracle = grid_oracle(&problem, 13, Exec::Sequential).unwrap();
        assert_eq!(oracle.x, vec![truth]);
        assert_eq!(oracle.evaluations, 13);
        assert!(oracle.rss < 1e-28);
    }

    #[test]
    fn oracle_budget_is_enforced() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y = vec![1.0; 20];
        let params = (0..5)
            .map(|k| ParamSpec::new(&format!("p{k}"), "", 0.0, 1.0, false))
            .collect();
        let p = FitProblem::new(
            Model::MultiExponential { components: 2, offset: true },
            x,
            y,
            Space::Linear,
            params,
        )
        .unwrap();
        assert!(matches!(
            grid_oracle(&p, 30, Exec::Sequential),
            Err(Error::GridBudget { .. })
        ));
    }

    #[test]
    fn problem_invariants() {
        let bad = FitProblem::new(
            Model::TwoPulse,
            vec![0.0, 1.0],
            vec![1.0, 0.5],
            Space::Log,
            vec![ParamSpec::new("g", "Hz", 1.0, 0.5, true), ParamSpec::new("i0", "", 0.1, 2.0, true)],
        );
        assert!(bad.is_err());
        let too_few = FitProblem::new(
            Model::TwoPulse,
            vec![0.0, 1.0],
            vec![1.0, 0.5],
            Space::Log,
            vec![ParamSpec::new("g", "Hz", 0.1, 5.0, true), ParamSpec::new("i0", "", 0.1, 2.0, true)],
        );
        assert!(too_few.is_err());
    }
}

//! Conjugate gradient on matrix-free symmetric operators, the lagged-diffusivity
//! fixed point for TV-regularized least squares, and a dual projection solver
//! for pure denoising.

use crate::error::{invalid, Error, Result};
use crate::functionals::{fidelity, tv_fro, tv_l1_smoothed, SmoothingAlpha, TvOperator, TvVariant};
use crate::grid::{convolve, convolve_adjoint, distance, divergence, dot, gradient, BoundaryRule, Field, Kernel, VectorField};
use crate::scalar::Real;

/// Starting image of the outer fixed-point loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitialGuess {
    /// Start from the observation.
    #[default]
    Observation,
    /// Start from a flat image at the observation's mean intensity.
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig<T> {
    /// Outer loop stops once `‖f_{k+1} − f_k‖₂ < tol_outer`.
    pub tol_outer: T,
    pub max_outer: usize,
    /// Relative residual `‖Ax − b‖ / ‖b‖` at which CG stops.
    pub tol_cg: T,
    pub max_cg: usize,
    pub init: InitialGuess,
}

impl<T: Real> SolverConfig<T> {
    pub fn new(tol_outer: T, max_outer: usize, tol_cg: T, max_cg: usize) -> Result<Self> {
        let cfg = Self { tol_outer, max_outer, tol_cg, max_cg, init: InitialGuess::Observation };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults for a `width`×`height` problem: `ε = 1e-4·√(MN)`, `K = 50`,
    /// CG tolerance `1e-8` with at most 500 iterations.
    pub fn for_grid(width: usize, height: usize) -> Self {
        Self {
            tol_outer: T::lit(1e-4 * ((width * height) as f64).sqrt()),
            max_outer: 50,
            tol_cg: T::lit(1e-8),
            max_cg: 500,
            init: InitialGuess::Observation,
        }
    }

    pub fn with_init(mut self, init: InitialGuess) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_outer > T::zero()) || !(self.tol_cg > T::zero()) {
            return invalid("solver tolerances must be positive");
        }
        if self.max_outer == 0 || self.max_cg == 0 {
            return invalid("solver iteration caps must be at least 1");
        }
        Ok(())
    }
}

/// Convergence history of an outer iteration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub outer_iterations: usize,
    pub converged: bool,
    /// Objective before the first iteration.
    pub initial_objective: f64,
    pub objective_history: Vec<f64>,
    pub step_norm_history: Vec<f64>,
    /// CG iterations spent in each outer iteration.
    pub cg_iterations: Vec<usize>,
    pub cg_iterations_total: usize,
    /// Outer iterations (0-based) whose objective rose by more than the monitoring slack.
    pub objective_increases: Vec<usize>,
    /// Outer iterations (0-based) whose step norm rose by more than the monitoring slack.
    pub step_norm_increases: Vec<usize>,
}

/// Relative slack used when monitoring descent.
pub const DESCENT_SLACK: f64 = 1e-9;

impl SolveReport {
    pub(crate) fn start(initial_objective: f64) -> Self {
        Self { initial_objective, ..Self::default() }
    }

    pub(crate) fn record(&mut self, objective: f64, step_norm: f64, cg_iters: usize) {
        let k = self.outer_iterations;
        let prev_obj = self.objective_history.last().copied().unwrap_or(self.initial_objective);
        if objective > prev_obj + DESCENT_SLACK * prev_obj.abs().max(1.0) {
            self.objective_increases.push(k);
        }
        if let Some(&prev_step) = self.step_norm_history.last() {
            if step_norm > prev_step + DESCENT_SLACK * prev_step.max(1.0) {
                self.step_norm_increases.push(k);
            }
        }
        self.objective_history.push(objective);
        self.step_norm_history.push(step_norm);
        self.cg_iterations.push(cg_iters);
        self.cg_iterations_total += cg_iters;
        self.outer_iterations += 1;
    }

    pub fn final_objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(self.initial_objective)
    }

    /// Whether the objective never rose beyond [`DESCENT_SLACK`].
    pub fn monotone_descent(&self) -> bool {
        self.objective_increases.is_empty()
    }
}

/// Result of a conjugate-gradient solve on flat vectors.
#[derive(Clone, Debug)]
pub struct CgOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖r_k‖` after each iteration, starting with the initial residual.
    pub residual_history: Vec<T>,
}

/// Conjugate gradient for `A x = b` with `A` symmetric positive (semi-)definite.
///
/// `apply(x, y)` must write `A x` into `y`. Stops once `‖r‖ ≤ tol·‖b‖`.
pub fn cg_solve<T: Real>(
    mut apply: impl FnMut(&[T], &mut [T]),
    b: &[T],
    x0: &[T],
    tol: T,
    max_iter: usize,
) -> Result<CgOutcome<T>> {
    let n = b.len();
    assert_eq!(x0.len(), n, "initial guess length");
    let b_norm = dot(b, b).sqrt();
    if b_norm == T::zero() {
        return Ok(CgOutcome { x: vec![T::zero(); n], iterations: 0, converged: true, residual_history: vec![T::zero()] });
    }
    let threshold = tol * b_norm;

    let mut x = x0.to_vec();
    let mut ap = vec![T::zero(); n];
    apply(&x, &mut ap);
    let mut r: Vec<T> = b.iter().zip(&ap).map(|(&bi, &ai)| bi - ai).collect();
    let mut rr = dot(&r, &r);
    if !rr.is_finite() {
        return Err(Error::CgDiverged { iteration: 0 });
    }
    let mut history = vec![rr.sqrt()];
    if rr.sqrt() <= threshold {
        return Ok(CgOutcome { x, iterations: 0, converged: true, residual_history: history });
    }
    let mut p = r.clone();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap < T::zero() {
            return Err(Error::CgDiverged { iteration: iterations + 1 });
        }
        if pap == T::zero() {
            break;
        }
        iterations += 1;
        let step = rr / pap;
        for k in 0..n {
            x[k] += step * p[k];
            r[k] -= step * ap[k];
        }
        let rr_next = dot(&r, &r);
        if !rr_next.is_finite() {
            return Err(Error::CgDiverged { iteration: iterations });
        }
        history.push(rr_next.sqrt());
        if rr_next.sqrt() <= threshold {
            converged = true;
            break;
        }
        let beta = rr_next / rr;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_next;
    }
    Ok(CgOutcome { x, iterations, converged, residual_history: history })
}

/// Field-level conjugate gradient. Returns `(x, iterations, converged)`.
pub fn conjugate_gradient<T: Real>(
    apply: impl Fn(&Field<T>) -> Field<T>,
    b: &Field<T>,
    x0: &Field<T>,
    cfg: &SolverConfig<T>,
) -> Result<(Field<T>, usize, bool)> {
    b.check_shape(x0)?;
    let (w, h) = (b.width(), b.height());
    let out = cg_solve(
        |x, y| {
            let xf = Field::new(w, h, x.to_vec()).expect("CG iterate stays finite");
            y.copy_from_slice(apply(&xf).values());
        },
        b.values(),
        x0.values(),
        cfg.tol_cg,
        cfg.max_cg,
    )?;
    Ok((Field::new(w, h, out.x)?, out.iterations, out.converged))
}

/// Normal-equations operator `x ↦ Hᵀ H x`.
pub(crate) fn normal_operator<'a, T: Real>(h: &'a Kernel<T>) -> impl Fn(&Field<T>) -> Field<T> + 'a {
    move |x| convolve_adjoint(&convolve(x, h, BoundaryRule::Replicate), h, BoundaryRule::Replicate)
}

fn check_lambda<T: Real>(lambda: T) -> Result<()> {
    if lambda >= T::zero() && lambda.is_finite() {
        Ok(())
    } else {
        invalid(format!("lambda must be a finite nonnegative number, got {lambda}"))
    }
}

/// One lagged step: solves `[HᵀH + λ L(f_k)] f = Hᵀ g` warm-started at `f_k`.
/// Returns the new iterate and the CG iteration count.
pub(crate) fn lagged_step<T: Real>(
    f_k: &Field<T>,
    hty: &Field<T>,
    h: &Kernel<T>,
    lambda: T,
    a: SmoothingAlpha<T>,
    variant: TvVariant,
    cfg: &SolverConfig<T>,
) -> Result<(Field<T>, usize)> {
    let hth = normal_operator(h);
    let (x, iters, _) = if lambda == T::zero() {
        conjugate_gradient(&hth, hty, f_k, cfg)?
    } else {
        let l = TvOperator::for_variant(f_k, a, variant)?;
        conjugate_gradient(|v| hth(v).add(&l.apply(v).scale(lambda)), hty, f_k, cfg)?
    };
    Ok((x, iters))
}

/// `f_{k+1} = [HᵀH + λ L(f_k)]⁻¹ Hᵀ g`, solved by CG from `f_k`.
pub fn lagged_diffusivity_step<T: Real>(
    f_k: &Field<T>,
    g: &Field<T>,
    h: &Kernel<T>,
    lambda: T,
    a: SmoothingAlpha<T>,
    cfg: &SolverConfig<T>,
) -> Result<Field<T>> {
    f_k.check_shape(g)?;
    check_lambda(lambda)?;
    let hty = convolve_adjoint(g, h, BoundaryRule::Replicate);
    Ok(lagged_step(f_k, &hty, h, lambda, a, TvVariant::Fro, cfg)?.0)
}

/// Iterates [`lagged_diffusivity_step`] from `cfg.init` until the step norm falls
/// below `cfg.tol_outer` or `cfg.max_outer` steps were taken.
pub fn tv_restore_fixed_point<T: Real>(
    g: &Field<T>,
    h: &Kernel<T>,
    lambda: T,
    a: SmoothingAlpha<T>,
    cfg: &SolverConfig<T>,
) -> Result<(Field<T>, SolveReport)> {
    restore_tv(g, h, lambda, a, TvVariant::Fro, cfg, None)
}

/// Objective monitored by the outer loop for a given variant.
pub(crate) fn variant_objective<T: Real>(
    f: &Field<T>,
    g: &Field<T>,
    h: &Kernel<T>,
    lambda: T,
    a: SmoothingAlpha<T>,
    variant: TvVariant,
) -> T {
    let reg = match variant {
        TvVariant::AnisoL1 => tv_l1_smoothed(f, a),
        _ => tv_fro(f, a),
    };
    fidelity(f, g, h) + lambda * reg
}

/// Outer lagged-diffusivity loop. `start` overrides `cfg.init` when given.
pub(crate) fn restore_tv<T: Real>(
    g: &Field<T>,
    h: &Kernel<T>,
    lambda: T,
    a: SmoothingAlpha<T>,
    variant: TvVariant,
    cfg: &SolverConfig<T>,
    start: Option<&Field<T>>,
) -> Result<(Field<T>, SolveReport)> {
    check_lambda(lambda)?;
    cfg.validate()?;
    if let TvVariant::Spectral(_) = variant {
        return invalid("spectral TV is an energy only; restoration supports Fro and AnisoL1");
    }
    let mut f = match (start, cfg.init) {
        (Some(s), _) => {
            s.check_shape(g)?;
            s.clone()
        }
        (None, InitialGuess::Observation) => g.clone(),
        (None, InitialGuess::Mean) => Field::constant(g.width(), g.height(), g.mean()),
    };
    let hty = convolve_adjoint(g, h, BoundaryRule::Replicate);
    let mut report = SolveReport::start(variant_objective(&f, g, h, lambda, a, variant).as_f64());

    for outer in 0..cfg.max_outer {
        let (next, cg_iters) = match lagged_step(&f, &hty, h, lambda, a, variant, cfg) {
            Ok(v) => v,
            Err(e) => {
                return Err(Error::OuterFailure { outer, source: Box::new(e), report: Box::new(report) });
            }
        };
        let step = distance(&next, &f)?;
        f = next;
        report.record(variant_objective(&f, g, h, lambda, a, variant).as_f64(), step.as_f64(), cg_iters);
        if step < cfg.tol_outer {
            report.converged = true;
            break;
        }
    }
    Ok((f, report))
}

/// Dual projection iteration for `min ½‖f − g‖² + λ TV(f)` with the unsmoothed
/// isotropic TV. Returns `g − λ div p` after `steps` updates of the dual field `p`.
pub fn dual_projection_denoise<T: Real>(g: &Field<T>, lambda: T, steps: usize) -> Result<Field<T>> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return invalid(format!("dual projection needs lambda > 0, got {lambda}"));
    }
    let tau = T::lit(0.125);
    let (w, h) = (g.width(), g.height());
    let mut p = VectorField::zeros(w, h);
    let g_scaled = g.scale(lambda.recip());
    for _ in 0..steps {
        let q = gradient(&divergence(&p).sub(&g_scaled));
        let mag = q.u.zip_map(&q.v, |a, b| T::one() + tau * (a * a + b * b).sqrt());
        let u = p.u.zip_map(&q.u, |pi, qi| pi + tau * qi).zip_map(&mag, |n, d| n / d);
        let v = p.v.zip_map(&q.v, |pi, qi| pi + tau * qi).zip_map(&mag, |n, d| n / d);
        p = VectorField { u, v };
    }
    Ok(g.sub(&divergence(&p).scale(lambda)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(w: usize, h: usize, seed: u64) -> Field<f64> {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        Field::from_fn(w, h, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 100_000) as f64 / 100_000.0
        })
    }

    fn cfg() -> SolverConfig<f64> {
        SolverConfig::new(1e-10, 50, 1e-12, 1000).unwrap()
    }

    /// Dense Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            b.swap(c, piv);
            for r in c + 1..n {
                let m = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= m * a[c][k];
                }
                b[r] -= m * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.0, 5, 1e-8, 10).is_err());
        assert!(SolverConfig::new(1e-3, 0, 1e-8, 10).is_err());
        let d = SolverConfig::<f64>::for_grid(16, 16);
        assert!((d.tol_outer - 1.6e-3).abs() < 1e-15);
        assert_eq!((d.max_outer, d.max_cg), (50, 500));
    }

    #[test]
    fn cg_identity_one_iteration() {
        let b = noise(4, 3, 1);
        let (x, it, ok) = conjugate_gradient(|v| v.clone(), &b, &Field::zeros(4, 3), &cfg()).unwrap();
        assert_eq!(it, 1);
        assert!(ok);
        assert_eq!(x, b);
    }

    #[test]
    fn cg_diagonal() {
        let d = [1.0, 2.0, 3.0];
        let b = Field::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let (x, _, ok) = conjugate_gradient(
            |v| Field::from_fn(3, 1, |i, _| d[i] * v.get(i, 0)),
            &b,
            &Field::zeros(3, 1),
            &cfg(),
        )
        .unwrap();
        assert!(ok);
        for i in 0..3 {
            assert!((x.get(i, 0) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_matches_dense_spd_solve() {
        let m = noise(8, 8, 5);
        let mat = |i: usize, j: usize| m.get(j, i) - 0.5;
        let mut a = vec![vec![0.0; 8]; 8];
        for i in 0..8 {
            for j in 0..8 {
                a[i][j] = (0..8).map(|k| mat(k, i) * mat(k, j)).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        let b: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let oracle = dense_solve(a.clone(), b.clone());
        let out = cg_solve(
            |x, y| {
                for i in 0..8 {
                    y[i] = (0..8).map(|j| a[i][j] * x[j]).sum();
                }
            },
            &b,
            &[0.0; 8],
            1e-14,
            100,
        )
        .unwrap();
        for i in 0..8 {
            assert!((out.x[i] - oracle[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn cg_rejects_indefinite_operator() {
        let b = Field::new(2, 1, vec![1.0, 1.0]).unwrap();
        let r = conjugate_gradient(|v| v.scale(-1.0), &b, &Field::zeros(2, 1), &cfg());
        assert!(matches!(r, Err(Error::CgDiverged { iteration: 1 })));
    }

    #[test]
    fn lagged_step_without_regularization_returns_observation() {
        let g = noise(5, 5, 2);
        let f_k = noise(5, 5, 3);
        let a = SmoothingAlpha::new(1e-3).unwrap();
        let next = lagged_diffusivity_step(&f_k, &g, &Kernel::delta(), 0.0, a, &cfg()).unwrap();
        assert!(distance(&next, &g).unwrap() < 1e-14);
        // independent of alpha and f_k
        let other = lagged_diffusivity_step(&g, &g, &Kernel::delta(), 0.0, SmoothingAlpha::new(0.5).unwrap(), &cfg()).unwrap();
        assert!(distance(&next, &other).unwrap() < 1e-14);
    }

    #[test]
    fn lagged_step_fixed_point() {
        let g = noise(6, 6, 4);
        let h = Kernel::box_filter(3).unwrap();
        let a = SmoothingAlpha::new(1e-2).unwrap();
        let f1 = lagged_diffusivity_step(&g, &g, &h, 0.05, a, &cfg()).unwrap();
        // Solve again with the operator frozen at f1: f at the fixed point of its own system.
        let hty = convolve_adjoint(&g, &h, BoundaryRule::Replicate);
        let l = TvOperator::isotropic(&f1, a);
        let hth = normal_operator(&h);
        let rhs = hth(&f1).add(&l.apply(&f1).scale(0.05));
        let (again, _, _) = conjugate_gradient(|v| hth(v).add(&l.apply(v).scale(0.05)), &rhs, &f1, &cfg()).unwrap();
        assert!(distance(&again, &f1).unwrap() < 1e-10);
        assert!(hty.is_finite());
    }

    #[test]
    fn restore_without_regularization_converges_immediately() {
        let g = noise(6, 5, 7);
        let c = SolverConfig::for_grid(6, 5);
        let (f, rep) = tv_restore_fixed_point(&g, &Kernel::delta(), 0.0, SmoothingAlpha::default(), &c).unwrap();
        assert_eq!(f, g);
        assert_eq!(rep.outer_iterations, 1);
        assert!(rep.converged);
    }

    #[test]
    fn mean_initialization_reaches_same_fixed_point() {
        let g = Field::from_fn(12, 12, |i, j| if i < 6 { 0.2 } else { 0.8 } + 0.05 * ((i * 7 + j * 3) % 5) as f64 / 5.0);
        let a = SmoothingAlpha::new(1e-2).unwrap();
        let c = SolverConfig::new(1e-9, 300, 1e-12, 1000).unwrap();
        let (f1, _) = tv_restore_fixed_point(&g, &Kernel::delta(), 0.05, a, &c).unwrap();
        let (f2, _) = tv_restore_fixed_point(&g, &Kernel::delta(), 0.05, a, &c.with_init(InitialGuess::Mean)).unwrap();
        assert!(distance(&f1, &f2).unwrap() < 1e-5);
    }

    #[test]
    fn outer_loop_respects_iteration_cap() {
        let g = noise(8, 8, 8);
        let c = SolverConfig::new(1e-300, 3, 1e-10, 100).unwrap();
        let (_, rep) = tv_restore_fixed_point(&g, &Kernel::delta(), 0.1, SmoothingAlpha::default(), &c).unwrap();
        assert_eq!(rep.outer_iterations, 3);
        assert!(!rep.converged);
        assert_eq!(rep.objective_history.len(), 3);
        assert_eq!(rep.step_norm_history.len(), 3);
    }

    #[test]
    fn dual_projection_trivial_cases() {
        let c = Field::constant(7, 5, 0.3);
        assert_eq!(dual_projection_denoise(&c, 0.2, 50).unwrap(), c);
        let g = noise(8, 8, 9);
        let f = dual_projection_denoise(&g, 1e-6, 100).unwrap();
        assert!(f.values().iter().zip(g.values()).all(|(a, b)| (a - b).abs() < 1e-3));
        assert!(dual_projection_denoise(&g, 0.0, 5).is_err());
    }
}

//! Two-frame variational optical flow with image-driven anisotropic (AN) or
//! flow-driven total-variation (TV) smoothness.
//!
//! Both variants linearize brightness constancy once, around zero motion, and
//! solve the Euler-Lagrange system
//!
//! ```text
//! fx² u + fx fy v + fx ft − λ L u = 0
//! fx fy u + fy² v + fy ft − λ L v = 0
//! ```
//!
//! as a single symmetric positive definite CG problem on the stacked `(u, v)`.
//! For AN, `L z = div(D(∇f₁) ∇z)`; for TV, `L z = div(∇z / √(|∇u|² + |∇v|² + ε²))`
//! with the weight frozen at the previous outer iterate.

use crate::error::{invalid, Result};
use crate::grid::{divergence, gradient, BoundaryRule, Field, VectorField};
use crate::scalar::Real;
use crate::solvers::{cg_solve, SolveReport, SolverConfig};

/// Two consecutive frames of equal size.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePair<T> {
    pub f1: Field<T>,
    pub f2: Field<T>,
}

impl<T: Real> FramePair<T> {
    pub fn new(f1: Field<T>, f2: Field<T>) -> Result<Self> {
        f1.check_shape(&f2)?;
        Ok(Self { f1, f2 })
    }

    pub fn width(&self) -> usize {
        self.f1.width()
    }

    pub fn height(&self) -> usize {
        self.f1.height()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FlowVariant {
    /// Image-driven anisotropic smoothness; one linear solve.
    #[default]
    An,
    /// Flow-driven TV smoothness; lagged outer loop.
    Tv,
}

#[derive(Clone, Copy, Debug)]
pub struct FlowParams<T> {
    pub lambda: T,
    pub eps: T,
    pub variant: FlowVariant,
    pub solver: SolverConfig<T>,
}

impl<T: Real> FlowParams<T> {
    pub fn new(lambda: T, eps: T, variant: FlowVariant, width: usize, height: usize) -> Self {
        Self { lambda, eps, variant, solver: SolverConfig::for_grid(width, height) }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return invalid(format!("flow lambda must be positive, got {}", self.lambda));
        }
        if !(self.eps > T::zero()) || !self.eps.is_finite() {
            return invalid(format!("flow eps must be positive, got {}", self.eps));
        }
        self.solver.validate()
    }
}

/// Spatial and temporal image derivatives.
#[derive(Clone, Debug)]
pub struct Derivatives<T> {
    pub fx: Field<T>,
    pub fy: Field<T>,
    pub ft: Field<T>,
}

/// Per-pixel symmetric tensor `[[a, b], [b, c]]`.
#[derive(Clone, Debug)]
pub struct DiffusionTensorField<T> {
    pub a: Field<T>,
    pub b: Field<T>,
    pub c: Field<T>,
}

/// Centered differences of `(f1 + f2)/2` for `fx`, `fy`; `ft = f2 − f1`.
pub fn image_derivatives<T: Real>(p: &FramePair<T>) -> Derivatives<T> {
    let avg = p.f1.add(&p.f2).scale(T::lit(0.5));
    let half = T::lit(0.5);
    let r = BoundaryRule::Replicate;
    let fx = Field::from_fn(avg.width(), avg.height(), |i, j| {
        let (i, j) = (i as isize, j as isize);
        (avg.sample(i + 1, j, r) - avg.sample(i - 1, j, r)) * half
    });
    let fy = Field::from_fn(avg.width(), avg.height(), |i, j| {
        let (i, j) = (i as isize, j as isize);
        (avg.sample(i, j + 1, r) - avg.sample(i, j - 1, r)) * half
    });
    Derivatives { fx, fy, ft: p.f2.sub(&p.f1) }
}

/// Bilinear sample at a real position, clamping to the grid.
pub fn bilinear<T: Real>(f: &Field<T>, x: T, y: T) -> T {
    let max_x = T::from_usize(f.width() - 1).unwrap();
    let max_y = T::from_usize(f.height() - 1).unwrap();
    let x = x.max(T::zero()).min(max_x);
    let y = y.max(T::zero()).min(max_y);
    let x0 = x.floor();
    let y0 = y.floor();
    let tx = x - x0;
    let ty = y - y0;
    let i0 = x0.to_usize().unwrap();
    let j0 = y0.to_usize().unwrap();
    let i1 = (i0 + 1).min(f.width() - 1);
    let j1 = (j0 + 1).min(f.height() - 1);
    let top = f.get(i0, j0) * (T::one() - tx) + f.get(i1, j0) * tx;
    let bottom = f.get(i0, j1) * (T::one() - tx) + f.get(i1, j1) * tx;
    top * (T::one() - ty) + bottom * ty
}

/// Displaced frame difference `f2(x+u, y+v) − f1(x, y)`.
pub fn dfd<T: Real>(p: &FramePair<T>, w: &VectorField<T>) -> Result<Field<T>> {
    p.f1.check_shape(&w.u)?;
    Ok(Field::from_fn(p.width(), p.height(), |i, j| {
        let x = T::from_usize(i).unwrap() + w.u.get(i, j);
        let y = T::from_usize(j).unwrap() + w.v.get(i, j);
        bilinear(&p.f2, x, y) - p.f1.get(i, j)
    }))
}

/// Optic flow constraint residual `fx·u + fy·v + ft`.
pub fn ofc_residual<T: Real>(fx: &Field<T>, fy: &Field<T>, ft: &Field<T>, w: &VectorField<T>) -> Result<Field<T>> {
    fx.check_shape(fy)?;
    fx.check_shape(ft)?;
    fx.check_shape(&w.u)?;
    Ok(Field::from_fn(fx.width(), fx.height(), |i, j| {
        fx.get(i, j) * w.u.get(i, j) + fy.get(i, j) * w.v.get(i, j) + ft.get(i, j)
    }))
}

/// `D = [[fy² + ε², −fx fy], [−fx fy, fx² + ε²]] / (|∇f|² + 2ε²)` per pixel.
pub fn diffusion_tensor<T: Real>(fgrad: &VectorField<T>, eps: T) -> Result<DiffusionTensorField<T>> {
    if !(eps > T::zero()) {
        return invalid(format!("diffusion tensor eps must be positive, got {eps}"));
    }
    let e2 = eps * eps;
    let two = T::lit(2.0);
    let denom = fgrad.u.zip_map(&fgrad.v, |x, y| x * x + y * y + two * e2);
    Ok(DiffusionTensorField {
        a: fgrad.v.zip_map(&denom, |y, d| (y * y + e2) / d),
        b: fgrad.u.zip_map(&fgrad.v, |x, y| -x * y).zip_map(&denom, |n, d| n / d),
        c: fgrad.u.zip_map(&denom, |x, d| (x * x + e2) / d),
    })
}

/// `div(D ∇z)` with forward-difference gradient and its adjoint divergence.
pub fn apply_l_an<T: Real>(z: &Field<T>, tensor: &DiffusionTensorField<T>) -> Result<Field<T>> {
    z.check_shape(&tensor.a)?;
    Ok(apply_tensor(z, tensor))
}

fn apply_tensor<T: Real>(z: &Field<T>, d: &DiffusionTensorField<T>) -> Field<T> {
    let g = gradient(z);
    let (w, h) = (z.width(), z.height());
    let mut qu = Field::zeros(w, h);
    let mut qv = Field::zeros(w, h);
    for k in 0..z.len() {
        let (gx, gy) = (g.u.values()[k], g.v.values()[k]);
        let (a, b, c) = (d.a.values()[k], d.b.values()[k], d.c.values()[k]);
        qu.values_mut()[k] = a * gx + b * gy;
        qv.values_mut()[k] = b * gx + c * gy;
    }
    divergence(&VectorField { u: qu, v: qv })
}

fn apply_scalar_weight<T: Real>(z: &Field<T>, weight: &Field<T>) -> Field<T> {
    let g = gradient(z);
    divergence(&VectorField { u: g.u.zip_map(weight, |a, b| a * b), v: g.v.zip_map(weight, |a, b| a * b) })
}

/// `1/√(|∇u|² + |∇v|² + ε²)` per pixel.
pub fn tv_flow_weights<T: Real>(w: &VectorField<T>, eps: T) -> Result<Field<T>> {
    if !(eps > T::zero()) {
        return invalid(format!("flow weight eps must be positive, got {eps}"));
    }
    let gu = gradient(&w.u);
    let gv = gradient(&w.v);
    let e2 = eps * eps;
    Ok(Field::from_fn(w.width(), w.height(), |i, j| {
        let s = gu.u.get(i, j).powi(2) + gu.v.get(i, j).powi(2) + gv.u.get(i, j).powi(2) + gv.v.get(i, j).powi(2);
        (s + e2).sqrt().recip()
    }))
}

/// Solves the stacked data + `λ·(−L)` system from `x0`; returns the flow and CG iterations.
fn solve_block<T: Real>(
    d: &Derivatives<T>,
    smooth: impl Fn(&Field<T>) -> Field<T>,
    lambda: T,
    x0: &VectorField<T>,
    cfg: &SolverConfig<T>,
) -> Result<(VectorField<T>, usize)> {
    let (w, h) = (d.fx.width(), d.fx.height());
    let n = w * h;
    let (fx, fy, ft) = (d.fx.values(), d.fy.values(), d.ft.values());
    let mut b = Vec::with_capacity(2 * n);
    b.extend((0..n).map(|k| -fx[k] * ft[k]));
    b.extend((0..n).map(|k| -fy[k] * ft[k]));
    let mut start = x0.u.values().to_vec();
    start.extend_from_slice(x0.v.values());

    let out = cg_solve(
        |x, y| {
            let (xu, xv) = x.split_at(n);
            let u = Field::new(w, h, xu.to_vec()).expect("finite flow iterate");
            let v = Field::new(w, h, xv.to_vec()).expect("finite flow iterate");
            let lu = smooth(&u);
            let lv = smooth(&v);
            for k in 0..n {
                let data = fx[k] * xu[k] + fy[k] * xv[k];
                y[k] = fx[k] * data - lambda * lu.values()[k];
                y[n + k] = fy[k] * data - lambda * lv.values()[k];
            }
        },
        &b,
        &start,
        cfg.tol_cg,
        cfg.max_cg,
    )?;
    let (u, v) = out.x.split_at(n);
    Ok((VectorField { u: Field::new(w, h, u.to_vec())?, v: Field::new(w, h, v.to_vec())? }, out.iterations))
}

fn data_energy<T: Real>(d: &Derivatives<T>, w: &VectorField<T>) -> T {
    let r = ofc_residual(&d.fx, &d.fy, &d.ft, w).expect("matching shapes");
    T::lit(0.5) * r.values().iter().map(|&x| x * x).sum::<T>()
}

fn an_objective<T: Real>(d: &Derivatives<T>, tensor: &DiffusionTensorField<T>, lambda: T, w: &VectorField<T>) -> T {
    let quad = |z: &Field<T>| -> T {
        let g = gradient(z);
        (0..z.len())
            .map(|k| {
                let (gx, gy) = (g.u.values()[k], g.v.values()[k]);
                tensor.a.values()[k] * gx * gx + T::lit(2.0) * tensor.b.values()[k] * gx * gy + tensor.c.values()[k] * gy * gy
            })
            .sum()
    };
    data_energy(d, w) + T::lit(0.5) * lambda * (quad(&w.u) + quad(&w.v))
}

fn tv_objective<T: Real>(d: &Derivatives<T>, lambda: T, eps: T, w: &VectorField<T>) -> T {
    let weights = tv_flow_weights(w, eps).expect("eps validated");
    data_energy(d, w) + lambda * weights.values().iter().map(|&x| x.recip()).sum::<T>()
}

/// AN flow from precomputed derivatives and tensor.
pub fn solve_an<T: Real>(
    d: &Derivatives<T>,
    tensor: &DiffusionTensorField<T>,
    lambda: T,
    cfg: &SolverConfig<T>,
) -> Result<(VectorField<T>, SolveReport)> {
    d.fx.check_shape(&tensor.a)?;
    let zero = VectorField::zeros(d.fx.width(), d.fx.height());
    let mut report = SolveReport::start(an_objective(d, tensor, lambda, &zero).as_f64());
    let (w, iters) = solve_block(d, |z| apply_tensor(z, tensor), lambda, &zero, cfg)?;
    let step = w.inner(&w)?.sqrt();
    report.record(an_objective(d, tensor, lambda, &w).as_f64(), step.as_f64(), iters);
    report.converged = true;
    Ok((w, report))
}

/// TV flow from precomputed derivatives: lagged weights, one linear solve per outer step.
///
/// The iteration starts from the quadratic (unit-weight) solution; the report's
/// initial objective is taken there.
pub fn solve_tv<T: Real>(
    d: &Derivatives<T>,
    lambda: T,
    eps: T,
    cfg: &SolverConfig<T>,
) -> Result<(VectorField<T>, SolveReport)> {
    let (width, height) = (d.fx.width(), d.fx.height());
    let unit = Field::constant(width, height, T::one());
    let zero = VectorField::zeros(width, height);
    let (mut w, _) = solve_block(d, |z| apply_scalar_weight(z, &unit), lambda, &zero, cfg)?;
    let mut report = SolveReport::start(tv_objective(d, lambda, eps, &w).as_f64());
    for outer in 0..cfg.max_outer {
        let weight = tv_flow_weights(&w, eps)?;
        let (next, iters) = solve_block(d, |z| apply_scalar_weight(z, &weight), lambda, &w, cfg).map_err(|e| {
            crate::error::Error::OuterFailure { outer, source: Box::new(e), report: Box::new(report.clone()) }
        })?;
        let du = crate::grid::distance(&next.u, &w.u)?;
        let dv = crate::grid::distance(&next.v, &w.v)?;
        let step = (du * du + dv * dv).sqrt();
        w = next;
        report.record(tv_objective(d, lambda, eps, &w).as_f64(), step.as_f64(), iters);
        if step < cfg.tol_outer {
            report.converged = true;
            break;
        }
    }
    Ok((w, report))
}

/// AN optical flow with the tensor steered by the forward-difference gradient of frame 1.
pub fn flow_an<T: Real>(p: &FramePair<T>, params: &FlowParams<T>) -> Result<(VectorField<T>, SolveReport)> {
    params.validate()?;
    let d = image_derivatives(p);
    let tensor = diffusion_tensor(&gradient(&p.f1), params.eps)?;
    solve_an(&d, &tensor, params.lambda, &params.solver)
}

/// TV optical flow.
pub fn flow_tv<T: Real>(p: &FramePair<T>, params: &FlowParams<T>) -> Result<(VectorField<T>, SolveReport)> {
    params.validate()?;
    let d = image_derivatives(p);
    solve_tv(&d, params.lambda, params.eps, &params.solver)
}

/// Dispatches on `params.variant`.
pub fn estimate_flow<T: Real>(p: &FramePair<T>, params: &FlowParams<T>) -> Result<(VectorField<T>, SolveReport)> {
    match params.variant {
        FlowVariant::An => flow_an(p, params),
        FlowVariant::Tv => flow_tv(p, params),
    }
}

/// Mean and maximum of `√((u−u*)² + (v−v*)²)`.
pub fn endpoint_error<T: Real>(w: &VectorField<T>, gt: &VectorField<T>) -> Result<(T, T)> {
    w.u.check_shape(&gt.u)?;
    let mut sum = T::zero();
    let mut max = T::zero();
    for k in 0..w.u.len() {
        let du = w.u.values()[k] - gt.u.values()[k];
        let dv = w.v.values()[k] - gt.v.values()[k];
        let e = (du * du + dv * dv).sqrt();
        sum += e;
        max = max.max(e);
    }
    Ok((sum / T::from_usize(w.u.len()).unwrap(), max))
}

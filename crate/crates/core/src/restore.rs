//! Problem-level estimators for `g = H f + n` and image-quality metrics.

use crate::error::{invalid, Error, Result};
use crate::functionals::{fidelity, tv_fro, SmoothingAlpha, TvOperator, TvVariant};
use crate::grid::{convolve, convolve_adjoint, distance, BoundaryRule, Field, Kernel};
use crate::scalar::Real;
use crate::solvers::{cg_solve, conjugate_gradient, normal_operator, restore_tv, SolveReport, SolverConfig};

/// Parameters of TV denoising and deconvolution.
#[derive(Clone, Copy, Debug)]
pub struct RestoreParams<T> {
    pub lambda: T,
    pub alpha: SmoothingAlpha<T>,
    pub variant: TvVariant,
    pub solver: SolverConfig<T>,
}

impl<T: Real> RestoreParams<T> {
    /// Isotropic TV with default smoothing and solver settings for the grid.
    pub fn new(lambda: T, width: usize, height: usize) -> Self {
        Self {
            lambda,
            alpha: SmoothingAlpha::default(),
            variant: TvVariant::Fro,
            solver: SolverConfig::for_grid(width, height),
        }
    }
}

/// Parameters of alternating-minimization blind deconvolution.
#[derive(Clone, Debug)]
pub struct BlindParams<T> {
    /// TV weight on the image.
    pub lambda_f: T,
    /// TV weight on the kernel.
    pub lambda_h: T,
    /// Odd side length of the estimated kernel.
    pub kernel_size: usize,
    pub alpha: SmoothingAlpha<T>,
    /// Outer AM loop settings; `max_outer` caps AM sweeps.
    pub solver: SolverConfig<T>,
    /// Lagged-diffusivity iterations inside each image or kernel sub-step.
    pub inner_iterations: usize,
    /// Starting kernel; a centered delta when `None`.
    pub initial_kernel: Option<Kernel<T>>,
}

impl<T: Real> BlindParams<T> {
    pub fn new(lambda_f: T, lambda_h: T, kernel_size: usize, width: usize, height: usize) -> Self {
        Self {
            lambda_f,
            lambda_h,
            kernel_size,
            alpha: SmoothingAlpha::default(),
            solver: SolverConfig::for_grid(width, height),
            inner_iterations: 5,
            initial_kernel: None,
        }
    }
}

fn check_nonneg<T: Real>(name: &str, v: T) -> Result<()> {
    if v >= T::zero() && v.is_finite() {
        Ok(())
    } else {
        invalid(format!("{name} must be finite and nonnegative, got {v}"))
    }
}

/// Least-squares estimate: CG on `HᵀH f = Hᵀ g` from zero.
pub fn ls_estimate<T: Real>(g: &Field<T>, h: &Kernel<T>, cfg: &SolverConfig<T>) -> Result<Field<T>> {
    rls_estimate(g, h, T::zero(), cfg)
}

/// Regularized least squares with `Q = λI`: solves `(HᵀH + λ²I) f = Hᵀ g`.
pub fn rls_estimate<T: Real>(g: &Field<T>, h: &Kernel<T>, q_lambda: T, cfg: &SolverConfig<T>) -> Result<Field<T>> {
    check_nonneg("q_lambda", q_lambda)?;
    let hty = convolve_adjoint(g, h, BoundaryRule::Replicate);
    let hth = normal_operator(h);
    let q2 = q_lambda * q_lambda;
    let zero = Field::zeros(g.width(), g.height());
    Ok(conjugate_gradient(|v| hth(v).add(&v.scale(q2)), &hty, &zero, cfg)?.0)
}

/// Generalized Tikhonov estimate `f₀ + (HᵀPH + λ²I)⁻¹ HᵀP (g − H f₀)` with diagonal `P`.
pub fn gtr_estimate<T: Real>(
    g: &Field<T>,
    f0: &Field<T>,
    h: &Kernel<T>,
    p_weight: &Field<T>,
    q_lambda: T,
    cfg: &SolverConfig<T>,
) -> Result<Field<T>> {
    g.check_shape(f0)?;
    g.check_shape(p_weight)?;
    check_nonneg("q_lambda", q_lambda)?;
    if let Some(k) = p_weight.values().iter().position(|&p| !(p > T::zero())) {
        return invalid(format!("data weight P must be strictly positive, entry {k} is not"));
    }
    let rule = BoundaryRule::Replicate;
    let weighted = |v: &Field<T>| v.zip_map(p_weight, |a, b| a * b);
    let residual = g.sub(&convolve(f0, h, rule));
    let rhs = convolve_adjoint(&weighted(&residual), h, rule);
    let q2 = q_lambda * q_lambda;
    let zero = Field::zeros(g.width(), g.height());
    let (delta, _, _) = conjugate_gradient(
        |v| convolve_adjoint(&weighted(&convolve(v, h, rule)), h, rule).add(&v.scale(q2)),
        &rhs,
        &zero,
        cfg,
    )?;
    Ok(f0.add(&delta))
}

/// TV denoising: the lagged fixed point with `H = I`.
pub fn tv_denoise<T: Real>(g: &Field<T>, params: &RestoreParams<T>) -> Result<(Field<T>, SolveReport)> {
    tv_deconvolve(g, &Kernel::delta(), params)
}

/// TV deconvolution with a known kernel.
pub fn tv_deconvolve<T: Real>(
    g: &Field<T>,
    h: &Kernel<T>,
    params: &RestoreParams<T>,
) -> Result<(Field<T>, SolveReport)> {
    restore_tv(g, h, params.lambda, params.alpha, params.variant, &params.solver, None)
}

/// Linear map `k ↦ f ⋆ k` from kernel weights to an image.
fn image_operator<T: Real>(f: &Field<T>, size: usize, k: &[T]) -> Field<T> {
    let kernel = Kernel::new(size, size, k.to_vec()).expect("odd kernel");
    convolve(f, &kernel, BoundaryRule::Replicate)
}

/// Adjoint of [`image_operator`]: `(a, b) ↦ Σ r(i,j) f(i+a−c, j+b−c)`.
fn image_operator_adjoint<T: Real>(f: &Field<T>, size: usize, r: &Field<T>) -> Vec<T> {
    let c = (size / 2) as isize;
    let mut out = Vec::with_capacity(size * size);
    for b in 0..size {
        for a in 0..size {
            let mut acc = T::zero();
            for j in 0..f.height() {
                for i in 0..f.width() {
                    let x = i as isize + a as isize - c;
                    let y = j as isize + b as isize - c;
                    acc += r.get(i, j) * f.sample(x, y, BoundaryRule::Replicate);
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Clips negative weights and rescales to unit sum.
pub fn project_kernel<T: Real>(h: &Kernel<T>) -> Result<Kernel<T>> {
    let clipped = h.map(|w| w.max(T::zero()));
    let s = clipped.sum();
    if !(s > T::zero()) || !s.is_finite() {
        return Err(Error::DegenerateKernel);
    }
    Ok(clipped.map(|w| w / s))
}

/// Kernel sub-step: TV-regularized least squares for `h` with the image fixed,
/// followed by projection onto nonnegative unit-sum kernels.
fn kernel_step<T: Real>(f: &Field<T>, g: &Field<T>, h: &Kernel<T>, params: &BlindParams<T>) -> Result<(Kernel<T>, usize)> {
    let size = params.kernel_size;
    let rhs = image_operator_adjoint(f, size, g);
    let mut current = h.to_field();
    let mut cg_total = 0;
    for _ in 0..params.inner_iterations.max(1) {
        let l = TvOperator::isotropic(&current, params.alpha);
        let lam = params.lambda_h;
        let out = cg_solve(
            |x, y| {
                let hx = image_operator(f, size, x);
                let ata = image_operator_adjoint(f, size, &hx);
                let xf = Field::new(size, size, x.to_vec()).expect("finite kernel iterate");
                let reg = l.apply(&xf);
                for k in 0..y.len() {
                    y[k] = ata[k] + lam * reg.values()[k];
                }
            },
            &rhs,
            current.values(),
            params.solver.tol_cg,
            params.solver.max_cg,
        )?;
        cg_total += out.iterations;
        current = Field::new(size, size, out.x)?;
    }
    Ok((project_kernel(&Kernel::from_field(&current)?)?, cg_total))
}

fn blind_objective<T: Real>(f: &Field<T>, g: &Field<T>, h: &Kernel<T>, params: &BlindParams<T>) -> T {
    fidelity(f, g, h) + params.lambda_f * tv_fro(f, params.alpha) + params.lambda_h * tv_fro(&h.to_field(), params.alpha)
}

/// Alternating minimization of `½‖h ⋆ f − g‖² + λ_f TV(f) + λ_h TV(h)`.
///
/// Each sweep solves for the kernel with the image fixed, projects it onto
/// nonnegative unit-sum kernels, then runs the lagged TV solver for the image.
/// Stops once the image moves less than `solver.tol_outer` or after `solver.max_outer` sweeps.
pub fn blind_deconvolve_am<T: Real>(
    g: &Field<T>,
    params: &BlindParams<T>,
) -> Result<(Field<T>, Kernel<T>, SolveReport)> {
    let size = params.kernel_size;
    if size.is_multiple_of(2) || size < 3 {
        return invalid(format!("kernel size must be odd and at least 3, got {size}"));
    }
    check_nonneg("lambda_f", params.lambda_f)?;
    check_nonneg("lambda_h", params.lambda_h)?;
    params.solver.validate()?;
    let mut h = match &params.initial_kernel {
        Some(k) if k.width() == size && k.height() == size => project_kernel(k)?,
        Some(k) => {
            return invalid(format!("initial kernel is {}x{}, expected {size}x{size}", k.width(), k.height()));
        }
        None => Kernel::centered_delta(size)?,
    };
    let mut f = g.clone();
    let mut report = SolveReport::start(blind_objective(&f, g, &h, params).as_f64());
    let inner = SolverConfig { max_outer: params.inner_iterations.max(1), ..params.solver };

    for outer in 0..params.solver.max_outer {
        let fail = |e: Error, report: &SolveReport| Error::OuterFailure {
            outer,
            source: Box::new(e),
            report: Box::new(report.clone()),
        };
        let (h_next, kernel_cg) = kernel_step(&f, g, &h, params).map_err(|e| fail(e, &report))?;
        let (f_next, image_report) =
            restore_tv(g, &h_next, params.lambda_f, params.alpha, TvVariant::Fro, &inner, Some(&f))
                .map_err(|e| fail(e, &report))?;
        let step = distance(&f_next, &f)?;
        f = f_next;
        h = h_next;
        report.record(
            blind_objective(&f, g, &h, params).as_f64(),
            step.as_f64(),
            kernel_cg + image_report.cg_iterations_total,
        );
        if step < params.solver.tol_outer {
            report.converged = true;
            break;
        }
    }
    Ok((f, h, report))
}

/// Upper bound on `‖HᵀH‖₂` from `‖H‖₁‖H‖∞`, exact for the replicate boundary.
pub fn normal_operator_bound<T: Real>(h: &Kernel<T>, width: usize, height: usize) -> T {
    let abs_h = h.map(|w| w.abs());
    let row = abs_h.sum();
    let col = convolve_adjoint(&Field::constant(width, height, T::one()), &abs_h, BoundaryRule::Replicate).max_value();
    row * col
}

#[inline]
fn soft_threshold<T: Real>(x: T, t: T) -> T {
    x.signum() * (x.abs() - t).max(T::zero())
}

/// `½‖h ⋆ f − g‖² + t‖f‖₁`.
pub fn lasso_objective<T: Real>(f: &Field<T>, g: &Field<T>, h: &Kernel<T>, t_penalty: T) -> T {
    fidelity(f, g, h) + t_penalty * f.values().iter().map(|v| v.abs()).sum::<T>()
}

/// Iterative soft thresholding from `f = 0`; returns the estimate and the objective after every step.
pub fn lasso_ista<T: Real>(g: &Field<T>, h: &Kernel<T>, t_penalty: T, steps: usize) -> Result<(Field<T>, Vec<T>)> {
    if !(t_penalty > T::zero()) || !t_penalty.is_finite() {
        return invalid(format!("LASSO penalty must be positive, got {t_penalty}"));
    }
    let lip = normal_operator_bound(h, g.width(), g.height());
    if !(lip > T::zero()) {
        return invalid("LASSO kernel must be nonzero");
    }
    let step = lip.recip();
    let thresh = t_penalty * step;
    let rule = BoundaryRule::Replicate;
    let mut f = Field::zeros(g.width(), g.height());
    let mut history = Vec::with_capacity(steps);
    for _ in 0..steps {
        let grad = convolve_adjoint(&convolve(&f, h, rule).sub(g), h, rule);
        f = f.zip_map(&grad, |fi, gi| soft_threshold(fi - step * gi, thresh));
        history.push(lasso_objective(&f, g, h, t_penalty));
    }
    Ok((f, history))
}

/// Minimizer of `½‖h ⋆ f − g‖² + t‖f‖₁` by `steps` ISTA iterations.
pub fn lasso_estimate<T: Real>(g: &Field<T>, h: &Kernel<T>, t_penalty: T, steps: usize) -> Result<Field<T>> {
    Ok(lasso_ista(g, h, t_penalty, steps)?.0)
}

/// Cap reported for identical images.
pub const PSNR_CAP_DB: f64 = 300.0;

/// `10·log10(peak²·MN / ‖f − ref‖²)` in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr<T: Real>(f: &Field<T>, reference: &Field<T>, peak: T) -> Result<T> {
    f.check_shape(reference)?;
    if !(peak > T::zero()) {
        return invalid("PSNR peak must be positive");
    }
    let sq: T = f.values().iter().zip(reference.values()).map(|(&a, &b)| (a - b) * (a - b)).sum();
    let cap = T::lit(PSNR_CAP_DB);
    if sq == T::zero() {
        return Ok(cap);
    }
    let n = T::from_usize(f.len()).unwrap();
    Ok((T::lit(10.0) * (peak * peak * n / sq).log10()).min(cap))
}

/// Pearson correlation of two equally sized weight sets, e.g. an estimated and a true kernel.
pub fn normalized_cross_correlation<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() || a.is_empty() {
        return invalid("correlation needs two non-empty sequences of equal length");
    }
    let n = T::from_usize(a.len()).unwrap();
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == T::zero() || sbb == T::zero() {
        return Ok(if saa == sbb { T::one() } else { T::zero() });
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(w: usize, h: usize, seed: u64) -> Field<f64> {
        let mut s = seed.wrapping_mul(0x2545_F491_4F6C_DD1D) | 1;
        Field::from_fn(w, h, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 100_000) as f64 / 100_000.0
        })
    }

    fn tight() -> SolverConfig<f64> {
        SolverConfig::new(1e-10, 50, 1e-13, 2000).unwrap()
    }

    #[test]
    fn ls_with_delta_is_identity() {
        let g = noise(5, 4, 1);
        assert_eq!(ls_estimate(&g, &Kernel::delta(), &tight()).unwrap(), g);
    }

    #[test]
    fn ls_residual_no_worse_than_observation() {
        let g = noise(8, 8, 2);
        let h = Kernel::box_filter(3).unwrap();
        let f = ls_estimate(&g, &h, &tight()).unwrap();
        let d = Kernel::delta();
        assert!(fidelity(&f, &g, &h) <= fidelity(&g, &g, &h) + 1e-12);
        assert!(fidelity(&g, &g, &d) == 0.0);
    }

    #[test]
    fn rls_with_delta_is_shrinkage() {
        let g = noise(6, 3, 3);
        let f = rls_estimate(&g, &Kernel::delta(), 0.7, &tight()).unwrap();
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b / 1.49).abs() < 1e-10);
        }
        assert!(rls_estimate(&g, &Kernel::delta(), -1.0, &tight()).is_err());
    }

    #[test]
    fn gtr_reduces_to_rls_and_keeps_consistent_prior() {
        let g = noise(5, 5, 4);
        let h = Kernel::box_filter(3).unwrap();
        let ones = Field::constant(5, 5, 1.0);
        let zero = Field::zeros(5, 5);
        let a = gtr_estimate(&g, &zero, &h, &ones, 0.3, &tight()).unwrap();
        let b = rls_estimate(&g, &h, 0.3, &tight()).unwrap();
        assert_eq!(a, b);

        let truth = noise(5, 5, 5);
        let consistent = convolve(&truth, &h, BoundaryRule::Replicate);
        let p = noise(5, 5, 6).map(|x| 0.5 + x);
        let c = gtr_estimate(&consistent, &truth, &h, &p, 0.2, &tight()).unwrap();
        assert_eq!(c, truth);

        let bad = p.map(|x| x - 0.6);
        assert!(gtr_estimate(&g, &zero, &h, &bad, 0.2, &tight()).is_err());
    }

    #[test]
    fn projection_keeps_simplex() {
        let k = Kernel::<f64>::new(3, 3, vec![-0.2, 0.4, 0.1, 0.0, 1.0, -3.0, 0.2, 0.2, 0.1]).unwrap();
        let p = project_kernel(&k).unwrap();
        assert!(p.weights().iter().all(|&w| w >= 0.0));
        assert!((p.sum() - 1.0).abs() < 1e-12);
        let neg = Kernel::new(3, 3, vec![-1.0; 9]).unwrap();
        assert!(matches!(project_kernel(&neg), Err(Error::DegenerateKernel)));
    }

    #[test]
    fn image_operator_adjoint_identity() {
        let f = noise(7, 6, 7);
        let r = noise(7, 6, 8);
        let k: Vec<f64> = noise(3, 3, 9).into_values();
        let lhs: f64 = image_operator(&f, 3, &k).values().iter().zip(r.values()).map(|(a, b)| a * b).sum();
        let adj = image_operator_adjoint(&f, 3, &r);
        let rhs: f64 = k.iter().zip(&adj).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn blind_rejects_bad_sizes() {
        let g = noise(8, 8, 1);
        assert!(blind_deconvolve_am(&g, &BlindParams::new(0.01, 0.01, 4, 8, 8)).is_err());
        assert!(blind_deconvolve_am(&g, &BlindParams::new(0.01, 0.01, 1, 8, 8)).is_err());
    }

    #[test]
    fn blind_on_constant_image_terminates() {
        let g = Field::<f64>::constant(10, 10, 0.4);
        let mut p = BlindParams::new(0.01, 0.01, 3, 10, 10);
        p.solver.max_outer = 4;
        let (f, h, rep) = blind_deconvolve_am(&g, &p).unwrap();
        assert!(rep.outer_iterations <= 4);
        assert!((h.sum() - 1.0).abs() < 1e-12);
        assert!(f.values().iter().all(|v| (v - 0.4).abs() < 1e-9));
    }

    #[test]
    fn lasso_with_delta_is_soft_threshold() {
        let g = noise(6, 6, 10).map(|x| x - 0.5);
        let f = lasso_estimate(&g, &Kernel::delta(), 0.1, 1).unwrap();
        for (a, b) in f.values().iter().zip(g.values()) {
            assert_eq!(*a, b.signum() * (b.abs() - 0.1).max(0.0));
        }
        let z = lasso_estimate(&g, &Kernel::delta(), 1e6, 5).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        assert!(lasso_estimate(&g, &Kernel::delta(), 0.0, 5).is_err());
    }

    #[test]
    fn lasso_objective_is_monotone() {
        let g = noise(8, 8, 11);
        let h = Kernel::new(3, 3, vec![0.0, 0.1, 0.0, 0.2, 0.5, 0.0, 0.0, 0.2, 0.0]).unwrap();
        let (_, hist) = lasso_ista(&g, &h, 0.02, 200).unwrap();
        for w in hist.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn operator_bound_dominates_power_iteration() {
        let h = Kernel::new(3, 3, vec![0.6, 0.1, 0.0, 0.1, 0.1, 0.0, 0.0, 0.0, 0.1]).unwrap();
        let bound = normal_operator_bound(&h, 9, 7);
        let hth = normal_operator(&h);
        let mut v = noise(9, 7, 3);
        let mut est = 0.0;
        for _ in 0..300 {
            let w = hth(&v);
            est = crate::grid::norm2(&w) / crate::grid::norm2(&v);
            v = w.scale(1.0 / crate::grid::norm2(&w));
        }
        assert!(est <= bound * (1.0 + 1e-9), "{est} > {bound}");
    }

    #[test]
    fn psnr_values() {
        let r = noise(4, 4, 12);
        assert_eq!(psnr(&r, &r, 1.0).unwrap(), 300.0);
        let off = r.map(|x| x + 0.1);
        assert!((psnr(&off, &r, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let f = noise(4, 4, 13);
        let mse: f64 = f.sub(&r).values().iter().map(|x| x * x).sum::<f64>() / 16.0;
        assert!((psnr(&f, &r, 2.0).unwrap() - 10.0 * (4.0 / mse).log10()).abs() < 1e-10);
        assert!(psnr(&f, &r, 0.0).is_err());
    }

    #[test]
    fn ncc_bounds() {
        let a = [0.0f64, 1.0, 2.0, 3.0];
        assert!((normalized_cross_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((normalized_cross_correlation(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
    }
}

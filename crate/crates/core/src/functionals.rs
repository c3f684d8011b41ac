//! Total-variation energies, the smoothing profile Ψ, and the lagged TV operator.
//!
//! The smoothed isotropic energy is `Σ √((Dˣf)² + (Dʸf)² + α²)`, which equals
//! `½ Σ Ψ((Dˣf)² + (Dʸf)²)` with `Ψ(t) = 2√(t + α²)`. Its gradient is
//! `L(f) f` where `L(f) = Dˣᵀ diag(Ψ′) Dˣ + Dʸᵀ diag(Ψ′) Dʸ`.

use rustfft::num_complex::Complex;
use rustfft::{FftNum, FftPlanner};

use crate::error::{invalid, Result};
use crate::grid::{convolve, divergence, gradient, BoundaryRule, Field, Kernel, VectorField};
use crate::scalar::Real;

/// Smoothing constant `α > 0` that makes TV differentiable at zero gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingAlpha<T>(T);

impl<T: Real> SmoothingAlpha<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if alpha > T::zero() && alpha.is_finite() {
            Ok(Self(alpha))
        } else {
            invalid(format!("smoothing alpha must be positive and finite, got {alpha}"))
        }
    }

    #[inline]
    pub fn get(self) -> T {
        self.0
    }
}

impl<T: Real> Default for SmoothingAlpha<T> {
    /// `1e-3`, sized for images in `[0, 1]`.
    fn default() -> Self {
        Self(T::lit(1e-3))
    }
}

/// TV discretization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[derive(Default)]
pub enum TvVariant {
    /// Isotropic forward-difference TV.
    #[default]
    Fro,
    /// Anisotropic sum of absolute axis differences.
    AnisoL1,
    /// TV of the trigonometric interpolate sampled on an `n`× finer grid.
    Spectral(u32),
}


/// `Ψ(t) = 2√(t + α²)`.
#[inline]
pub fn psi<T: Real>(t: T, a: SmoothingAlpha<T>) -> T {
    T::lit(2.0) * (t + a.0 * a.0).sqrt()
}

/// `Ψ′(t) = 1/√(t + α²)`.
#[inline]
pub fn psi_prime<T: Real>(t: T, a: SmoothingAlpha<T>) -> T {
    (t + a.0 * a.0).sqrt().recip()
}

/// `Σ √((f(i+1,j)−f(i,j))² + (f(i,j+1)−f(i,j))² + α²)`.
pub fn tv_fro<T: Real>(f: &Field<T>, a: SmoothingAlpha<T>) -> T {
    let g = gradient(f);
    let a2 = a.0 * a.0;
    g.u.values().iter().zip(g.v.values()).map(|(&dx, &dy)| (dx * dx + dy * dy + a2).sqrt()).sum()
}

/// `MNα + Σ (|f(i+1,j)−f(i,j)| + |f(i,j+1)−f(i,j)|)`.
pub fn tv_l1<T: Real>(f: &Field<T>, a: SmoothingAlpha<T>) -> T {
    let g = gradient(f);
    let n = T::from_usize(f.len()).unwrap();
    let jumps: T = g.u.values().iter().zip(g.v.values()).map(|(dx, dy)| dx.abs() + dy.abs()).sum();
    n * a.0 + jumps
}

/// Differentiable surrogate of [`tv_l1`]: `Σ √((Dˣf)² + α²) + √((Dʸf)² + α²)`.
///
/// This is the energy the anisotropic lagged-diffusivity iteration decreases.
pub fn tv_l1_smoothed<T: Real>(f: &Field<T>, a: SmoothingAlpha<T>) -> T {
    let g = gradient(f);
    let a2 = a.0 * a.0;
    g.u.values()
        .iter()
        .zip(g.v.values())
        .map(|(&dx, &dy)| (dx * dx + a2).sqrt() + (dy * dy + a2).sqrt())
        .sum()
}

/// Frozen TV diffusivities defining the linear operator `L(f_lin)`.
#[derive(Clone, Debug)]
pub enum TvOperator<T> {
    /// One weight `Ψ′(|∇f|²)` per pixel shared by both axes.
    Isotropic(Field<T>),
    /// Separate weights `Ψ′((Dˣf)²)`, `Ψ′((Dʸf)²)` per axis.
    Anisotropic(Field<T>, Field<T>),
}

impl<T: Real> TvOperator<T> {
    pub fn isotropic(f_lin: &Field<T>, a: SmoothingAlpha<T>) -> Self {
        let g = gradient(f_lin);
        TvOperator::Isotropic(g.u.zip_map(&g.v, |dx, dy| psi_prime(dx * dx + dy * dy, a)))
    }

    pub fn anisotropic(f_lin: &Field<T>, a: SmoothingAlpha<T>) -> Self {
        let g = gradient(f_lin);
        TvOperator::Anisotropic(g.u.map(|dx| psi_prime(dx * dx, a)), g.v.map(|dy| psi_prime(dy * dy, a)))
    }

    /// Linearization for a restoration variant; the spectral variant has no lagged operator.
    pub fn for_variant(f_lin: &Field<T>, a: SmoothingAlpha<T>, variant: TvVariant) -> Result<Self> {
        match variant {
            TvVariant::Fro => Ok(Self::isotropic(f_lin, a)),
            TvVariant::AnisoL1 => Ok(Self::anisotropic(f_lin, a)),
            TvVariant::Spectral(_) => {
                invalid("spectral TV is an energy only; restoration supports Fro and AnisoL1")
            }
        }
    }

    /// `Dˣᵀ diag(wx) Dˣ v + Dʸᵀ diag(wy) Dʸ v`, i.e. `−div(W ∇v)`.
    pub fn apply(&self, v: &Field<T>) -> Field<T> {
        let g = gradient(v);
        let flux = match self {
            TvOperator::Isotropic(w) => VectorField { u: g.u.zip_map(w, |a, b| a * b), v: g.v.zip_map(w, |a, b| a * b) },
            TvOperator::Anisotropic(wx, wy) => {
                VectorField { u: g.u.zip_map(wx, |a, b| a * b), v: g.v.zip_map(wy, |a, b| a * b) }
            }
        };
        divergence(&flux).map(|x| -x)
    }
}

/// Matrix-free `L(f_lin) v`.
pub fn apply_l<T: Real>(f_lin: &Field<T>, v: &Field<T>, a: SmoothingAlpha<T>) -> Result<Field<T>> {
    f_lin.check_shape(v)?;
    Ok(TvOperator::isotropic(f_lin, a).apply(v))
}

/// Gradient of [`tv_fro`]: `L(f) f`.
pub fn tv_gradient<T: Real>(f: &Field<T>, a: SmoothingAlpha<T>) -> Field<T> {
    TvOperator::isotropic(f, a).apply(f)
}

/// Regularizer energy used for objective monitoring.
pub fn tv_energy<T: Real + FftNum>(f: &Field<T>, a: SmoothingAlpha<T>, variant: TvVariant) -> Result<T> {
    match variant {
        TvVariant::Fro => Ok(tv_fro(f, a)),
        TvVariant::AnisoL1 => Ok(tv_l1_smoothed(f, a)),
        TvVariant::Spectral(n) => spectral_tv(f, n),
    }
}

/// `½‖h ⋆ f − g‖² + λ·tv_fro(f)`.
pub fn objective_jtv<T: Real>(
    f: &Field<T>,
    g: &Field<T>,
    h: &Kernel<T>,
    lambda: T,
    a: SmoothingAlpha<T>,
) -> Result<T> {
    f.check_shape(g)?;
    Ok(fidelity(f, g, h) + lambda * tv_fro(f, a))
}

/// `½‖h ⋆ f − g‖²`.
pub fn fidelity<T: Real>(f: &Field<T>, g: &Field<T>, h: &Kernel<T>) -> T {
    let hf = convolve(f, h, BoundaryRule::Replicate);
    let r: T = hf.values().iter().zip(g.values()).map(|(&a, &b)| (a - b) * (a - b)).sum();
    T::lit(0.5) * r
}

/// Spectral TV of order `n`: the Riemann sum, with step `1/n`, of the gradient
/// magnitude of the trigonometric interpolate.
///
/// Derivatives are taken on the symmetric spectrum. A Nyquist coefficient is
/// split evenly between `±N/2` so the interpolate stays real, and carries zero
/// derivative weight along its own axis.
pub fn spectral_tv<T: Real + FftNum>(f: &Field<T>, n: u32) -> Result<T> {
    if n < 1 {
        return invalid("spectral TV oversampling factor must be at least 1");
    }
    let n = n as usize;
    let (w, h) = (f.width(), f.height());
    let mut planner = FftPlanner::<T>::new();

    let base = f.values()[0];
    let mut spec: Vec<Complex<T>> = f.values().iter().map(|&v| Complex::new(v - base, T::zero())).collect();
    fft2(&mut planner, &mut spec, w, h, false);

    let (nw, nh) = (n * w, n * h);
    let mut dx = vec![Complex::new(T::zero(), T::zero()); nw * nh];
    let mut dy = dx.clone();
    let two_pi = T::lit(2.0 * std::f64::consts::PI);

    for q in 0..h {
        let (fy, ny) = signed_frequency(q, h);
        for p in 0..w {
            let (fx, nyq_x) = signed_frequency(p, w);
            let c = spec[q * w + p];
            let i_unit = Complex::new(T::zero(), T::one());
            let wx = if nyq_x { T::zero() } else { two_pi * T::from_isize(fx).unwrap() / T::from_usize(w).unwrap() };
            let wy = if ny { T::zero() } else { two_pi * T::from_isize(fy).unwrap() / T::from_usize(h).unwrap() };
            let cx = c * i_unit * wx;
            let cy = c * i_unit * wy;
            for (px, sx) in placements(fx, nyq_x, nw) {
                for (py, sy) in placements(fy, ny, nh) {
                    let s = sx * sy;
                    dx[py * nw + px] += cx * T::lit(s);
                    dy[py * nw + px] += cy * T::lit(s);
                }
            }
        }
    }

    fft2(&mut planner, &mut dx, nw, nh, true);
    fft2(&mut planner, &mut dy, nw, nh, true);

    let norm = T::from_usize(w * h).unwrap();
    let total: T = dx
        .iter()
        .zip(&dy)
        .map(|(a, b)| {
            let gx = a.re / norm;
            let gy = b.re / norm;
            (gx * gx + gy * gy).sqrt()
        })
        .sum();
    Ok(total / T::from_usize(n * n).unwrap())
}

/// Signed frequency of DFT bin `k` of an `n`-point transform, and whether it is the Nyquist bin.
fn signed_frequency(k: usize, n: usize) -> (isize, bool) {
    if 2 * k == n {
        (k as isize, true)
    } else if 2 * k < n {
        (k as isize, false)
    } else {
        (k as isize - n as isize, false)
    }
}

/// Bins of the padded `padded`-point spectrum receiving frequency `freq`, with weights.
fn placements(freq: isize, nyquist: bool, padded: usize) -> Vec<(usize, f64)> {
    let wrap = |f: isize| f.rem_euclid(padded as isize) as usize;
    if nyquist {
        vec![(wrap(freq), 0.5), (wrap(-freq), 0.5)]
    } else {
        vec![(wrap(freq), 1.0)]
    }
}

fn fft2<T: FftNum>(planner: &mut FftPlanner<T>, data: &mut [Complex<T>], w: usize, h: usize, inverse: bool) {
    let row = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for r in data.chunks_exact_mut(w) {
        row.process(r);
    }
    let col = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut buf = vec![Complex::new(T::zero(), T::zero()); h];
    for i in 0..w {
        for j in 0..h {
            buf[j] = data[j * w + i];
        }
        col.process(&mut buf);
        for j in 0..h {
            data[j * w + i] = buf[j];
        }
    }
}

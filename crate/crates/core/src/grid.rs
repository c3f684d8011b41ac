//! Discrete 2D fields, forward-difference operators and spatial convolution.
//!
//! Pixels are addressed as `(i, j)` with `i` the column (x) and `j` the row
//! (y). Storage is row-major, so pixel `(i, j)` lives at `j * width + i`.
//! Grid spacing is 1 in both directions.

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// How samples outside the grid are synthesized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BoundaryRule {
    /// Clamp coordinates to the nearest edge pixel.
    #[default]
    Replicate,
}

impl BoundaryRule {
    #[inline]
    fn index(self, k: isize, n: usize) -> usize {
        match self {
            BoundaryRule::Replicate => k.clamp(0, n as isize - 1) as usize,
        }
    }
}

/// Real-valued 2D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    /// Builds a field from row-major values, rejecting bad lengths and non-finite entries.
    pub fn new(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid(format!("field dimensions must be positive, got {width}x{height}"));
        }
        if values.len() != width * height {
            return invalid(format!(
                "field {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            ));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, T::zero())
    }

    pub fn constant(width: usize, height: usize, c: T) -> Self {
        assert!(width > 0 && height > 0, "field dimensions must be positive");
        Self { width, height, values: vec![c; width * height] }
    }

    /// Evaluates `f(i, j)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "field dimensions must be positive");
        let mut values = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                values.push(f(i, j));
            }
        }
        Self { width, height, values }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[j * self.width + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.values[j * self.width + i] = value;
    }

    /// Sample with boundary extension for out-of-range coordinates.
    #[inline]
    pub fn sample(&self, i: isize, j: isize, rule: BoundaryRule) -> T {
        self.get(rule.index(i, self.width), rule.index(j, self.height))
    }

    pub fn same_shape(&self, other: &Field<T>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_shape(&self, other: &Field<T>) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            })
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixelwise combination. Panics on shape mismatch.
    pub fn zip_map(&self, other: &Field<T>, f: impl Fn(T, T) -> T) -> Self {
        assert!(self.same_shape(other), "zip_map on fields of different shape");
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Field<T>) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field<T>) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_usize(self.len()).unwrap()
    }

    /// Population variance.
    pub fn variance(&self) -> T {
        let m = self.mean();
        let ss: T = self.values.iter().map(|&v| (v - m) * (v - m)).sum();
        ss / T::from_usize(self.len()).unwrap()
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        Self::from_fn(w, self.height, |i, j| self.get(w - 1 - i, j))
    }

    /// Mirror top-bottom.
    pub fn flip_vertical(&self) -> Self {
        let h = self.height;
        Self::from_fn(self.width, h, |i, j| self.get(i, h - 1 - j))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Pair of equally sized scalar fields: a gradient or a flow `(u, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<T> {
    pub u: Field<T>,
    pub v: Field<T>,
}

impl<T: Real> VectorField<T> {
    pub fn new(u: Field<T>, v: Field<T>) -> Result<Self> {
        u.check_shape(&v)?;
        Ok(Self { u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { u: Field::zeros(width, height), v: Field::zeros(width, height) }
    }

    pub fn constant(width: usize, height: usize, u: T, v: T) -> Self {
        Self { u: Field::constant(width, height, u), v: Field::constant(width, height, v) }
    }

    pub fn width(&self) -> usize {
        self.u.width()
    }

    pub fn height(&self) -> usize {
        self.u.height()
    }

    pub fn same_shape(&self, other: &VectorField<T>) -> bool {
        self.u.same_shape(&other.u)
    }

    /// `Σ u·u' + v·v'`.
    pub fn inner(&self, other: &VectorField<T>) -> Result<T> {
        Ok(inner(&self.u, &other.u)? + inner(&self.v, &other.v)?)
    }
}

/// Small odd-sized 2D point spread function anchored at its center.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel<T> {
    width: usize,
    height: usize,
    weights: Vec<T>,
}

impl<T: Real> Kernel<T> {
    pub fn new(width: usize, height: usize, weights: Vec<T>) -> Result<Self> {
        if width.is_multiple_of(2) || height.is_multiple_of(2) {
            return invalid(format!("kernel dimensions must be odd, got {width}x{height}"));
        }
        if weights.len() != width * height {
            return invalid(format!(
                "kernel {width}x{height} needs {} weights, got {}",
                width * height,
                weights.len()
            ));
        }
        if let Some(k) = weights.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self { width, height, weights })
    }

    /// Identity kernel of size 1×1.
    pub fn delta() -> Self {
        Self { width: 1, height: 1, weights: vec![T::one()] }
    }

    /// `size`×`size` kernel with a single unit weight at the center.
    pub fn centered_delta(size: usize) -> Result<Self> {
        let mut w = vec![T::zero(); size * size];
        if size % 2 == 1 {
            w[(size / 2) * size + size / 2] = T::one();
        }
        Self::new(size, size, w)
    }

    /// Normalized `size`×`size` box filter.
    pub fn box_filter(size: usize) -> Result<Self> {
        let n = T::from_usize(size * size).unwrap();
        Self::new(size, size, vec![T::one() / n; size * size])
    }

    /// Reinterprets a field as kernel weights. The field must have odd dimensions.
    pub fn from_field(f: &Field<T>) -> Result<Self> {
        Self::new(f.width(), f.height(), f.values().to_vec())
    }

    pub fn to_field(&self) -> Field<T> {
        Field { width: self.width, height: self.height, values: self.weights.clone() }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> T {
        self.weights[b * self.width + a]
    }

    #[inline]
    pub fn radius_x(&self) -> usize {
        self.width / 2
    }

    #[inline]
    pub fn radius_y(&self) -> usize {
        self.height / 2
    }

    pub fn sum(&self) -> T {
        self.weights.iter().copied().sum()
    }

    pub fn abs_sum(&self) -> T {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            weights: self.weights.iter().map(|&w| f(w)).collect(),
        }
    }
}

/// Forward differences `(f(i+1,j) − f(i,j), f(i,j+1) − f(i,j))`, zero on the last column/row.
pub fn gradient<T: Real>(f: &Field<T>) -> VectorField<T> {
    let (w, h) = (f.width(), f.height());
    let u = Field::from_fn(w, h, |i, j| if i + 1 < w { f.get(i + 1, j) - f.get(i, j) } else { T::zero() });
    let v = Field::from_fn(w, h, |i, j| if j + 1 < h { f.get(i, j + 1) - f.get(i, j) } else { T::zero() });
    VectorField { u, v }
}

/// Backward-difference divergence, the negative adjoint of [`gradient`].
pub fn divergence<T: Real>(p: &VectorField<T>) -> Field<T> {
    let (w, h) = (p.width(), p.height());
    Field::from_fn(w, h, |i, j| {
        let mut d = T::zero();
        if i + 1 < w {
            d += p.u.get(i, j);
        }
        if i > 0 {
            d -= p.u.get(i - 1, j);
        }
        if j + 1 < h {
            d += p.v.get(i, j);
        }
        if j > 0 {
            d -= p.v.get(i, j - 1);
        }
        d
    })
}

/// Correlation-style application of `h`: `out(i,j) = Σ h(a,b) f(i+a−rx, j+b−ry)`.
pub fn convolve<T: Real>(f: &Field<T>, h: &Kernel<T>, rule: BoundaryRule) -> Field<T> {
    if h.width() == 1 && h.height() == 1 && h.get(0, 0) == T::one() {
        return f.clone();
    }
    let (rx, ry) = (h.radius_x() as isize, h.radius_y() as isize);
    Field::from_fn(f.width(), f.height(), |i, j| {
        let mut acc = T::zero();
        for b in 0..h.height() {
            let y = j as isize + b as isize - ry;
            for a in 0..h.width() {
                let x = i as isize + a as isize - rx;
                acc += h.get(a, b) * f.sample(x, y, rule);
            }
        }
        acc
    })
}

/// Exact adjoint of [`convolve`] under the same boundary rule.
pub fn convolve_adjoint<T: Real>(g: &Field<T>, h: &Kernel<T>, rule: BoundaryRule) -> Field<T> {
    if h.width() == 1 && h.height() == 1 && h.get(0, 0) == T::one() {
        return g.clone();
    }
    let (w, ht) = (g.width(), g.height());
    let (rx, ry) = (h.radius_x() as isize, h.radius_y() as isize);
    let mut out = Field::zeros(w, ht);
    for j in 0..ht {
        for i in 0..w {
            let gij = g.get(i, j);
            for b in 0..h.height() {
                let y = rule.index(j as isize + b as isize - ry, ht);
                for a in 0..h.width() {
                    let x = rule.index(i as isize + a as isize - rx, w);
                    out.values[y * w + x] += h.get(a, b) * gij;
                }
            }
        }
    }
    out
}

/// `Σ f·g`.
pub fn inner<T: Real>(f: &Field<T>, g: &Field<T>) -> Result<T> {
    f.check_shape(g)?;
    Ok(dot(f.values(), g.values()))
}

/// Euclidean norm `√Σf²`.
pub fn norm2<T: Real>(f: &Field<T>) -> T {
    dot(f.values(), f.values()).sqrt()
}

/// Manhattan norm `Σ|f|`.
pub fn norm1<T: Real>(f: &Field<T>) -> T {
    f.values().iter().map(|v| v.abs()).sum()
}

/// `‖f − g‖₂`.
pub fn distance<T: Real>(f: &Field<T>, g: &Field<T>) -> Result<T> {
    f.check_shape(g)?;
    Ok(f.values().iter().zip(g.values()).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt())
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_random(w: usize, h: usize, seed: u64) -> Field<f64> {
        let mut s = seed;
        Field::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = gradient(&Field::constant(5, 4, 0.3));
        assert!(g.u.values().iter().chain(g.v.values()).all(|&x| x == 0.0));
    }

    #[test]
    fn ramp_gradient() {
        let f = Field::from_fn(6, 3, |i, _| i as f64);
        let g = gradient(&f);
        for j in 0..3 {
            for i in 0..6 {
                assert_eq!(g.u.get(i, j), if i < 5 { 1.0 } else { 0.0 });
                assert_eq!(g.v.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn gradient_matches_index_loop() {
        let f = pseudo_random(5, 5, 3);
        let g = gradient(&f);
        let vals = f.values();
        for j in 0..5 {
            for i in 0..5 {
                let k = j * 5 + i;
                let ux = if i < 4 { vals[k + 1] - vals[k] } else { 0.0 };
                let vy = if j < 4 { vals[k + 5] - vals[k] } else { 0.0 };
                assert_eq!(g.u.values()[k], ux);
                assert_eq!(g.v.values()[k], vy);
            }
        }
    }

    #[test]
    fn divergence_of_zero_is_zero() {
        let d = divergence(&VectorField::<f64>::zeros(4, 4));
        assert!(d.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn divergence_is_negative_adjoint() {
        let f = pseudo_random(6, 4, 11);
        let p = VectorField::new(pseudo_random(6, 4, 12), pseudo_random(6, 4, 13)).unwrap();
        let lhs = gradient(&f).inner(&p).unwrap();
        let rhs = inner(&f, &divergence(&p)).unwrap();
        assert!((lhs + rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn laplacian_of_ramp_vanishes_inside() {
        let f = Field::from_fn(7, 5, |i, _| 0.5 * i as f64);
        let d = divergence(&gradient(&f));
        for j in 0..5 {
            for i in 1..6 {
                assert_eq!(d.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn delta_convolution_is_identity() {
        let f = pseudo_random(5, 6, 1);
        assert_eq!(convolve(&f, &Kernel::delta(), BoundaryRule::Replicate), f);
        let d3 = Kernel::centered_delta(3).unwrap();
        assert_eq!(convolve(&f, &d3, BoundaryRule::Replicate), f);
        assert_eq!(convolve_adjoint(&f, &d3, BoundaryRule::Replicate), f);
    }

    #[test]
    fn box_preserves_constants() {
        let f = Field::<f64>::constant(6, 6, 0.4);
        let out = convolve(&f, &Kernel::box_filter(3).unwrap(), BoundaryRule::Replicate);
        assert!(out.values().iter().all(|&x| (x - 0.4).abs() < 1e-15));
    }

    #[test]
    fn convolution_matches_quadruple_loop() {
        let f = pseudo_random(7, 7, 5);
        let h = Kernel::from_field(&pseudo_random(3, 3, 6)).unwrap();
        let out = convolve(&f, &h, BoundaryRule::Replicate);
        for j in 0..7i64 {
            for i in 0..7i64 {
                let mut acc = 0.0;
                for b in 0..3i64 {
                    for a in 0..3i64 {
                        let x = (i + a - 1).clamp(0, 6) as usize;
                        let y = (j + b - 1).clamp(0, 6) as usize;
                        acc += h.weights()[(b * 3 + a) as usize] * f.values()[y * 7 + x];
                    }
                }
                assert!((acc - out.get(i as usize, j as usize)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_kernel_is_self_adjoint_in_interior() {
        let h = Kernel::new(3, 3, vec![0.05, 0.1, 0.05, 0.1, 0.4, 0.1, 0.05, 0.1, 0.05]).unwrap();
        let f = Field::from_fn(8, 8, |i, j| if (2..6).contains(&i) && (2..6).contains(&j) { (i * j) as f64 } else { 0.0 });
        let a = convolve(&f, &h, BoundaryRule::Replicate);
        let b = convolve_adjoint(&f, &h, BoundaryRule::Replicate);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn convolve_adjoint_identity() {
        let f = pseudo_random(8, 8, 21);
        let g = pseudo_random(8, 8, 22);
        let h = Kernel::from_field(&pseudo_random(3, 5, 23)).unwrap();
        let lhs = inner(&convolve(&f, &h, BoundaryRule::Replicate), &g).unwrap();
        let rhs = inner(&f, &convolve_adjoint(&g, &h, BoundaryRule::Replicate)).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn norms_of_three_four() {
        let f = Field::new(2, 1, vec![3.0, -4.0]).unwrap();
        assert_eq!(norm1(&f), 7.0);
        assert_eq!(norm2(&f), 5.0);
        assert_eq!(inner(&f, &f).unwrap(), 25.0);
    }

    #[test]
    fn norms_match_summation() {
        let f = pseudo_random(4, 9, 30);
        let g = pseudo_random(4, 9, 31);
        let mut s = 0.0;
        let mut s1 = 0.0;
        for k in 0..36 {
            s += f.values()[k] * g.values()[k];
            s1 += f.values()[k].abs();
        }
        assert!((inner(&f, &g).unwrap() - s).abs() < 1e-12);
        assert!((norm1(&f) - s1).abs() < 1e-12);
    }

    #[test]
    fn inner_rejects_mismatched_shapes() {
        let f = Field::<f64>::zeros(3, 2);
        let g = Field::<f64>::zeros(2, 3);
        assert!(matches!(inner(&f, &g), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn constructors_validate() {
        assert!(Field::new(2, 2, vec![0.0f64; 3]).is_err());
        assert!(matches!(Field::new(1, 2, vec![0.0, f64::NAN]), Err(Error::NonFinite(1))));
        assert!(Kernel::new(2, 3, vec![0.0f64; 6]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let f = Field::<f32>::from_fn(4, 4, |i, j| (i + 2 * j) as f32);
        let p = gradient(&f);
        let lhs = p.inner(&p).unwrap();
        let rhs = -inner(&f, &divergence(&p)).unwrap();
        assert!((lhs - rhs).abs() < 1e-4);
    }
}

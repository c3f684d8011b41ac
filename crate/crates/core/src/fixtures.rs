//! Deterministic synthetic fixtures: ground truth plus degraded observations.
//!
//! Noise comes from [`SplitMix64`] followed by a single-output Box-Muller
//! transform, so any implementation of those two steps reproduces the same
//! samples for a given seed:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! next_u64 = z ^ (z >> 31)                      (all arithmetic mod 2^64)
//! uniform = (next_u64 >> 11) * 2^-53             in [0, 1)
//! gaussian = sqrt(-2 ln(1 - u1)) * cos(2π u2)    u1, u2 consecutive uniforms
//! ```
//!
//! Pixels receive noise in row-major order.

use crate::grid::{convolve, BoundaryRule, Field, Kernel, VectorField};
use crate::flow::FramePair;
use crate::scalar::Real;

/// SplitMix64 generator.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal sample.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma`.
pub fn add_gaussian_noise<T: Real>(f: &Field<T>, sigma: f64, seed: u64) -> Field<T> {
    let mut rng = SplitMix64::new(seed);
    Field::from_fn(f.width(), f.height(), |i, j| f.get(i, j) + T::lit(sigma * rng.next_gaussian()))
}

/// Fixture names understood by [`Fixture::from_name`].
pub const FIXTURE_NAMES: [&str; 4] = ["step32", "piecewise64", "ramp-shift", "split-motion"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fixture {
    Step32,
    Piecewise64,
    RampShift,
    SplitMotion,
}

impl Fixture {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "step32" => Some(Fixture::Step32),
            "piecewise64" => Some(Fixture::Piecewise64),
            "ramp-shift" => Some(Fixture::RampShift),
            "split-motion" => Some(Fixture::SplitMotion),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Step32 => "step32",
            Fixture::Piecewise64 => "piecewise64",
            Fixture::RampShift => "ramp-shift",
            Fixture::SplitMotion => "split-motion",
        }
    }
}

/// Noise level of the image fixtures.
pub const FIXTURE_SIGMA: f64 = 0.05;

/// 32×32: left 16 columns at 0.25, right 16 at 0.75.
pub fn step32<T: Real>() -> Field<T> {
    Field::from_fn(32, 32, |i, _| T::lit(if i < 16 { 0.25 } else { 0.75 }))
}

/// 64×64 piecewise-constant scene: background 0.2, a 0.8 rectangle and a 0.5 square.
pub fn piecewise64<T: Real>() -> Field<T> {
    Field::from_fn(64, 64, |i, j| {
        let v = if (36..56).contains(&i) && (38..58).contains(&j) {
            0.5
        } else if (10..44).contains(&i) && (8..34).contains(&j) {
            0.8
        } else {
            0.2
        };
        T::lit(v)
    })
}

/// Size of the flow fixtures.
pub const FLOW_SIZE: usize = 32;

/// Smooth texture with a gentle ramp, defined on the continuous plane.
pub fn flow_texture(x: f64, y: f64) -> f64 {
    use std::f64::consts::PI;
    0.3 + 0.008 * x
        + 0.12 * (2.0 * PI * x / 11.0).sin() * (2.0 * PI * y / 13.0).cos()
        + 0.08 * (2.0 * PI * (x + 0.6 * y) / 9.0).sin()
        + 0.05 * (2.0 * PI * y / 7.0).sin()
}

/// Textured frame pair translated by one pixel to the right, with its ground-truth flow.
pub fn ramp_shift<T: Real>() -> (FramePair<T>, VectorField<T>) {
    let n = FLOW_SIZE;
    let f1 = Field::from_fn(n, n, |i, j| T::lit(flow_texture(i as f64, j as f64)));
    let f2 = Field::from_fn(n, n, |i, j| T::lit(flow_texture(i as f64 - 1.0, j as f64)));
    (FramePair { f1, f2 }, VectorField::constant(n, n, T::one(), T::zero()))
}

/// Left half translates by `(1, 0)`, right half is static.
pub fn split_motion<T: Real>() -> (FramePair<T>, VectorField<T>) {
    let n = FLOW_SIZE;
    let half = n / 2;
    let f1 = Field::from_fn(n, n, |i, j| T::lit(flow_texture(i as f64, j as f64)));
    let f2 = Field::from_fn(n, n, |i, j| {
        let x = if i < half { i as f64 - 1.0 } else { i as f64 };
        T::lit(flow_texture(x, j as f64))
    });
    let u = Field::from_fn(n, n, |i, _| if i < half { T::one() } else { T::zero() });
    (FramePair { f1, f2 }, VectorField { u, v: Field::zeros(n, n) })
}

/// 3×3 horizontal motion blur: the middle row averages three pixels.
pub fn motion_kernel3<T: Real>() -> Kernel<T> {
    let t = T::lit(1.0 / 3.0);
    let z = T::zero();
    Kernel::new(3, 3, vec![z, z, z, t, t, t, z, z, z]).expect("odd kernel")
}

/// 3×3 diagonal motion blur along the main diagonal.
pub fn diagonal_kernel3<T: Real>() -> Kernel<T> {
    let t = T::lit(1.0 / 3.0);
    let z = T::zero();
    Kernel::new(3, 3, vec![t, z, z, z, t, z, z, z, t]).expect("odd kernel")
}

/// Blurs `f` with `h` under the replicate boundary.
pub fn blur<T: Real>(f: &Field<T>, h: &Kernel<T>) -> Field<T> {
    convolve(f, h, BoundaryRule::Replicate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::dfd;

    #[test]
    fn splitmix_reference_values() {
        // Reference outputs for seed 1234567.
        let mut r = SplitMix64::new(1234567);
        assert_eq!(r.next_u64(), 6457827717110365317);
        assert_eq!(r.next_u64(), 3203168211198807973);
    }

    #[test]
    fn gaussian_moments() {
        let mut r = SplitMix64::new(7);
        let xs: Vec<f64> = (0..20000).map(|_| r.next_gaussian()).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
        assert!(m.abs() < 0.03);
        assert!((v - 1.0).abs() < 0.05);
    }

    #[test]
    fn noise_is_deterministic() {
        let f = step32::<f64>();
        assert_eq!(add_gaussian_noise(&f, 0.05, 3), add_gaussian_noise(&f, 0.05, 3));
        assert_ne!(add_gaussian_noise(&f, 0.05, 3), add_gaussian_noise(&f, 0.05, 4));
    }

    #[test]
    fn step32_definition() {
        let f = step32::<f64>();
        assert_eq!((f.width(), f.height()), (32, 32));
        for j in 0..32 {
            for i in 0..32 {
                assert_eq!(f.get(i, j), if i < 16 { 0.25 } else { 0.75 });
            }
        }
    }

    #[test]
    fn ramp_shift_truth_is_consistent() {
        let (pair, gt) = ramp_shift::<f64>();
        let r = dfd(&pair, &gt).unwrap();
        for j in 0..FLOW_SIZE {
            for i in 0..FLOW_SIZE - 1 {
                assert!(r.get(i, j).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for n in FIXTURE_NAMES {
            assert_eq!(Fixture::from_name(n).unwrap().name(), n);
        }
        assert!(Fixture::from_name("nope").is_none());
    }
}

//! Fixture generation for the `synth` command.
//!
//! Image fixtures write `<name>_truth.pgm`, `<name>_noisy.pgm` (noise seeded
//! with `seed`), `<name>_blurred.pgm` (the `motion3` kernel plus noise seeded
//! with `seed + 1`) and `<name>_kernel.txt`. Flow fixtures write
//! `<name>_frame1.pgm`, `<name>_frame2.pgm` and `<name>_gt.flo`; their frames
//! are noise-free unless a noise level is requested, in which case the frames
//! use seeds `seed` and `seed + 1`.

use std::path::{Path, PathBuf};

use tvreg::fixtures::{
    add_gaussian_noise, blur, motion_kernel3, piecewise64, ramp_shift, split_motion, step32, Fixture, FIXTURE_NAMES,
    FIXTURE_SIGMA,
};

use crate::error::{CliError, CliResult};
use crate::flo::write_flo;
use crate::kernel_file::write_kernel;
use crate::pgm::write_pgm;

/// Generates `fixture` into `dir` and returns the written paths.
pub fn synth(name: &str, seed: u64, dir: &Path, sigma: Option<f64>, maxval: u32) -> CliResult<Vec<PathBuf>> {
    let fixture = Fixture::from_name(name)
        .ok_or_else(|| CliError::Usage(format!("unknown fixture {name:?}; expected one of {}", FIXTURE_NAMES.join(", "))))?;
    if let Some(s) = sigma {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(CliError::Usage(format!("noise level must be finite and nonnegative, got {s}")));
        }
    }
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("output directory {} does not exist", dir.display())));
    }
    let path = |suffix: &str| dir.join(format!("{name}_{suffix}"));
    let mut written = Vec::new();
    match fixture {
        Fixture::Step32 | Fixture::Piecewise64 => {
            let truth = if fixture == Fixture::Step32 { step32() } else { piecewise64() };
            let sigma = sigma.unwrap_or(FIXTURE_SIGMA);
            let kernel = motion_kernel3();
            let noisy = add_gaussian_noise(&truth, sigma, seed);
            let blurred = add_gaussian_noise(&blur(&truth, &kernel), sigma, seed.wrapping_add(1));
            for (suffix, f) in [("truth.pgm", &truth), ("noisy.pgm", &noisy), ("blurred.pgm", &blurred)] {
                write_pgm(&path(suffix), f, maxval)?;
                written.push(path(suffix));
            }
            write_kernel(&path("kernel.txt"), &kernel)?;
            written.push(path("kernel.txt"));
        }
        Fixture::RampShift | Fixture::SplitMotion => {
            let (pair, gt) = if fixture == Fixture::RampShift { ramp_shift() } else { split_motion() };
            let sigma = sigma.unwrap_or(0.0);
            let (f1, f2) = if sigma > 0.0 {
                (add_gaussian_noise(&pair.f1, sigma, seed), add_gaussian_noise(&pair.f2, sigma, seed.wrapping_add(1)))
            } else {
                (pair.f1, pair.f2)
            };
            write_pgm(&path("frame1.pgm"), &f1, maxval)?;
            write_pgm(&path("frame2.pgm"), &f2, maxval)?;
            write_flo(&path("gt.flo"), &gt)?;
            written.extend([path("frame1.pgm"), path("frame2.pgm"), path("gt.flo")]);
        }
    }
    Ok(written)
}

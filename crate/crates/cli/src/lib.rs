//! Batch front end for `tvreg`: netpbm and `.flo` I/O, CSV convergence
//! reports, fixture synthesis and job dispatch.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flo;
pub mod job;
pub mod kernel_file;
pub mod pgm;
pub mod report;
pub mod synth;

pub use error::{CliError, CliResult};
pub use job::{main_with_args, run, JobSpec};

//! Blind SAR image formation from raw echo data.
//!
//! Recovers focused radar images with no knowledge of the system parameters:
//! the sample pulse-repetition interval is estimated from the 1-D stream, a
//! reference point echo is estimated by principal-component maximization over
//! energy-normalized data blocks, matched filtering with that echo forms the
//! image, and a range-varying azimuth FM-rate fit corrects the residual
//! quadratic phase. A physics-faithful simulator supplies ground truth for
//! the test suites.

pub mod azfocus;
pub mod dsp;
pub mod error;
pub mod lowrank;
pub mod pcm;
pub mod pgm;
pub mod pipeline;
pub mod pri;
pub mod raw;
pub mod scene_file;
pub mod sim;

pub use dsp::{ComplexMatrix, ComplexVector};
pub use error::{Error, Result};

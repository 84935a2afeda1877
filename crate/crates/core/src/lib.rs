//! Numerical toolkit for directional antiderivatives, line-integral
//! convolutions and the propagation of wavefront sets through them.
//!
//! Fields are sampled on uniform grids ([`grid`]), built from analytic
//! phantoms ([`phantoms`]), transformed by [`antiderivative`] and
//! [`line_convolution`], analysed by [`wavefront`] and compared against the
//! predictions of [`propagation`]. [`pipeline`] wires the stages together.

pub mod antiderivative;
pub mod error;
pub mod fft;
pub mod grid;
pub mod io;
pub mod line_convolution;
pub mod phantoms;
pub mod pipeline;
pub mod propagation;
pub mod quadrature;
pub mod wavefront;

pub use error::{Error, Result};
pub use grid::{make_grid, Direction, GridSpec, PhaseSpaceSample, SampledField, WavefrontSet};

//! Deterministic arbitrary-precision numerics.
//!
//! Three layers, used by every other module:
//!
//! - [`fixed`] — global-scale fixed-point reals (`mantissa · 2^{−B}`), one
//!   round-half-even per operation; `i128` mantissas with exact 256-bit
//!   intermediates on the fast path, `BigInt` beyond.
//! - [`complex`]/[`fft`] — componentwise complex fixed-point and a radix-2
//!   FFT with a documented worst-case rounding bound, bit-deterministic.
//! - [`dyadic`] — directed-rounding big-float bounds kernel (`mantissa · 2^e`)
//!   for certified comparisons of analytic quantities (`β`, `e^{−2β}`,
//!   aliasing tails) whose magnitudes are far outside fixed-point range.

pub mod complex;
pub mod dyadic;
pub mod fft;
pub mod fixed;

pub use complex::ComplexFixed;
pub use dyadic::Dyadic;
pub use fixed::{Fixed, Precision};

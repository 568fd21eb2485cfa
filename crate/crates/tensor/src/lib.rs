//! Dense `f64` tensors and a tape for reverse-mode differentiation.
//!
//! Values are recorded on a [`Tape`] as operations execute; [`Tape::backward`]
//! walks the tape in reverse to produce gradients of a scalar output.
//!
//! ```
//! use stiffssm_tensor::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::scalar(3.0));
//! let y = tape.mul(x, x).unwrap();
//! assert_eq!(tape.value(y).item().unwrap(), 9.0);
//! let g = tape.backward(y, &[x]).unwrap();
//! assert_eq!(g[0].item().unwrap(), 6.0);
//! ```

mod error;
pub mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use tape::{Backward, Tape, Var};
pub use tensor::Tensor;

//! Anatomical plausibility checks and guaranteed repair for multi-class
//! cardiac short-axis segmentation maps.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every algorithm:
//! the sixteen validity metrics, the adversarial VAE, Parzen-window
//! rejection sampling of valid latent codes, the exact nearest-neighbour
//! index and the bisection repair along the latent segment towards the
//! nearest valid code. File formats, model/index persistence and the
//! command line live in the `anatomy-warden` companion crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod anatomy;
pub mod augment;
mod error;
pub mod eval;
pub mod grid;
pub mod latent;
pub mod nn;
pub mod repair;
pub mod segmap;
pub mod synth;
pub mod vae;

pub use error::{Error, Result};
pub use grid::{Class, Mask};
pub use latent::{LatentVector, LATENT_DIM};
pub use segmap::{Phase, RegistrationMode, SegMap, Transform};

//! Activation-pattern frame selection for LiDAR 3D detection, with the
//! alignment, schedule and evaluation utilities around it.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod align;
pub mod bank;
pub mod cli;
pub mod diversity;
pub mod error;
pub mod io;
pub mod layer_select;
pub mod metrics;
pub mod patterns;
pub mod schedules;

pub use error::{Error, Result};

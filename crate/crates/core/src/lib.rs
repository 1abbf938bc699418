// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod data;
pub mod detection;
pub mod error;
pub mod lasso;
pub mod precision;
pub mod process;
pub mod rng;
pub mod segmentation;
pub mod simlab;

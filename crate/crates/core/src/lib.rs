#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod bootstrap;
pub mod casestudy;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod mesh;
pub mod mvn;
pub mod normality;
pub mod numeric;
pub mod quantile;
pub mod rng;
pub mod simulation;
pub mod stats;
pub mod tolerance;

pub use error::{Error, Result};

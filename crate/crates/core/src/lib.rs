//! Velocity-surface reconstruction over (time × thickness) from sparse
//! velocimetry series, using ε-insensitive support vector regression.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`, which is what the command-line tool uses.

pub mod cache;
pub mod data;
pub mod dataset_io;
pub mod error;
pub mod features;
pub mod io_util;
pub mod kernel;
pub mod model_io;
pub mod preprocess;
pub mod scalar;
pub mod selection;
pub mod solver;
pub mod surface;
pub mod svr;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ExperimentSeries = data::ExperimentSeries<f64>;
pub type RawDataset = data::RawDataset<f64>;
pub type AlignedDataset = preprocess::AlignedDataset<f64>;
pub type ScaledDataset = preprocess::ScaledDataset<f64>;
pub type AxisScaler = preprocess::AxisScaler<f64>;
pub type Kernel = kernel::Kernel<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type DualSolution = solver::DualSolution<f64>;
pub type HyperParams = svr::HyperParams<f64>;
pub type SvrModel = svr::SvrModel<f64>;
pub type Grid = selection::Grid<f64>;
pub type ErrorTable = selection::ErrorTable<f64>;
pub type SurfaceGrid = surface::SurfaceGrid<f64>;
pub type OutlierReport = surface::OutlierReport<f64>;
pub type SynthConfig = synth::SynthConfig<f64>;

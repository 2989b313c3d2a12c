//! Rough paths, controlled paths and rough integrals on discrete grids, with
//! numerical checks of the Itô–Wentzell formula and rough transport equations.

pub mod characteristics;
pub mod cli;
pub mod controlled;
pub mod convergence;
pub mod error;
pub mod grid;
pub mod integrate;
pub mod io;
pub mod lifts;
pub mod pairing;
pub mod rde;
pub mod rough_path;
pub mod scenarios;
pub mod tensor;
pub mod wentzell;

pub use controlled::{compose_chain_rule, ControlledPath, FieldFunction};
pub use convergence::ConvergenceReport;
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use integrate::{controlled_integral, rough_integral, young_bracket_integral, IntegralResult};
pub use rde::{solve_flow, solve_rde, FlowResult, VectorField};
pub use rough_path::{HoelderReport, NormMode, RoughPath};
pub use tensor::Tensor2;

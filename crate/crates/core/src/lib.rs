//! Finite element simulator for a Lie splitting scheme coupling a
//! Navier–Stokes fluid in an annulus with a Biot poroelastic disk through a
//! thin plate interface and a mollified (δ-regularized) interface geometry.

// Index loops mirror the element formulas; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod biot_fluid;
pub mod config;
pub mod diagnostics;
pub mod discretization;
pub mod driver;
pub mod error;
pub mod geometry;
pub mod interface;
pub mod mesh;
pub mod plate;
pub mod quadrature;
pub mod regularizer;
pub mod space;
pub mod sparse;
pub mod verification;

pub use error::{FpsiError, Result};
pub use interface::{InterfaceGrid, PlateField};
pub use mesh::{build_annulus_mesh, build_disk_mesh, BoundaryTag, Mesh2D, PointLocator};
pub use quadrature::QuadRule;
pub use space::{assemble_mass_stiffness, FeSpace, SpaceKind};
pub use sparse::{CsrMatrix, Triplets};
pub use biot_fluid::{BiotState, FluidState, PhysicalParams, StepGeometry};
pub use discretization::{Discretization, DiscretizationParams};
pub use config::RunConfig;
pub use driver::{kinematic_drift, reconstruct, run_config, Driver, InitialData, LevelState, Outcome, Reconstruction, StepRecord, StressDatum, Trajectory};

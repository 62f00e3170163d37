//! Simulation and verification toolkit for exceedance processes of planar
//! point processes: nearest-neighbour distances in the Gauss-Poisson process
//! and small angles of the Poisson-Delaunay tessellation, together with their
//! Poisson and compound Poisson limits.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod analytic;
pub mod assignment;
pub mod delaunay;
pub mod exceedances;
pub mod experiments;
pub mod geometry;
pub mod metrics;
pub mod quadrature;
pub mod sampling;
pub mod stats;

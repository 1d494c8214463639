//! hp finite elements for −ε²∇·(A∇u) + cu = f on spectral boundary layer
//! meshes, with balanced-norm and maximum-norm error analysis.

pub mod analysis;
pub mod basis;
pub mod exec;
pub mod geometry;
pub mod mesh;
pub mod probes;
pub mod space;
pub mod study;
pub mod system;

pub use exec::Exec;

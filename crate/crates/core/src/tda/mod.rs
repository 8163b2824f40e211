//! Alpha-complex persistence and persistence landscapes of planar point
//! clouds.

mod delaunay;
mod filtration;
mod landscape;
mod persistence;

pub use delaunay::{delaunay2, PointCloud2, Triangulation};
pub use filtration::{alpha_filtration, Filtration, Simplex};
pub use landscape::*;
pub use persistence::{persistence_indexed, persistence_pairs, IndexedPairs, PersistenceDiagram};

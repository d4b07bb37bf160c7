//! Brute-force reference procedures used to cross-check the exact pipeline.

mod cone;
mod duality;
mod random;
mod sampling;
mod walk;

pub use cone::{diamond_distance, liminf_contains};
pub use duality::primal_feasible_by_vertices;
pub use random::{random_architecture, random_network};
pub use sampling::boundary_samples;
pub use walk::{boundary_regions_by_adjacency, regions_by_adjacency};

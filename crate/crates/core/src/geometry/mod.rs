//! Point-cloud and mesh primitives.

mod cloud;
mod io;
mod kdtree;
mod mesh;
mod normals;
mod transform;

pub use cloud::{crop_roi, BoundingBox, PointCloud};
pub use io::{load_mesh, read_obj, read_ply, write_ply_cloud, write_ply_mesh};
pub use kdtree::{KdTree, Neighbor};
pub use mesh::{sample_surface, sample_surface_detailed, Mesh, SurfaceSample};
pub use normals::{estimate_normals, NormalEstimate, Orientation};
pub use transform::RigidTransform;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

//! Rigid registration of 3D point clouds with a two-stage genetic algorithm.
//!
//! The optimizer searches either all six motion parameters or, when the
//! rotation between the views is already known, only the translation. The
//! crate also provides an exact KD-tree, a closed-form rigid fit with ICP
//! refinement for building ground truth, synthetic scan pairs for
//! benchmarking, and point-cloud file formats.

pub mod error;
pub mod fitness;
pub mod ga;
pub mod geometry;
pub mod icp;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};
pub use fitness::{evaluate_motion, overlap_threshold_default, FitnessKind, FitnessReport};
pub use ga::{Chromosome, FitnessTrace, GaConfig, Population, SearchMode};
pub use geometry::{
    apply_motion, bounding_box, centroid, downsample, euler_to_matrix, inverse, matrix_to_euler,
    Aabb, EulerAngles, Point3, PointCloud, RigidMotion,
};
pub use icp::{fit_rigid, icp_refine, CorrespondencePair, IcpConfig, IcpOutcome};
pub use io::{load_cloud, save_cloud, CloudFormat};
pub use pipeline::{register, Registration, RegistrationConfig, RegistrationResult};
pub use report::RunManifest;
pub use spatial::{Neighbor, SpatialIndex};

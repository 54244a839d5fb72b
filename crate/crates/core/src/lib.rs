//! Road segmentation from dense disparity maps by disparity transformation.
//!
//! The pipeline has three stages:
//!
//! 1. **Roll estimation** ([`rollest`]): the stereo rig's roll angle is the
//!    rotation that makes every row of the disparity map best explained by a
//!    single quadratic road profile. The fitting energy is minimized with a
//!    golden section search.
//! 2. **Road profile** ([`roadmodel`]): the v-disparity histogram of the
//!    roll-corrected map ([`vdisparity`]) is searched with dynamic programming
//!    for the road path, and a parabola is fitted to the path with RANSAC.
//! 3. **Transformation** ([`transform`]): every disparity is replaced by its
//!    offset from the road profile plus a constant, which flattens road pixels
//!    to a near-constant value that Otsu thresholding separates from potholes
//!    and obstacles.
//!
//! [`synth`] builds synthetic ground-truth scenes and runs accuracy sweeps;
//! [`pipeline`] chains the stages end to end.

pub mod error;
pub mod image;
pub mod lsq;
pub mod model;
pub mod pipeline;
pub mod roadmodel;
pub mod rollest;
pub mod rotation;
pub mod synth;
pub mod transform;
pub mod vdisparity;

pub use crate::error::{Error, Result};
pub use crate::image::{DisparityImage, SegmentationMask};
pub use crate::model::QuadraticRoadModel;
pub use crate::pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
pub use crate::roadmodel::{extract_path_dp, ransac_parabola, OptimalPath, RansacConfig, RansacFit};
pub use crate::rollest::{energy_at_gamma, estimate_roll_gss, scan_energy_curve, GssConfig, RollEnergy, RollEstimate};
pub use crate::rotation::{rotate_coords, rotate_map};
pub use crate::synth::{add_noise, generate_ground_truth, run_accuracy_sweep, SweepReport, SyntheticSpec};
pub use crate::transform::{otsu_threshold, segment_road, transform_map, transform_rotated_map};
pub use crate::vdisparity::{build_vdisparity, VDisparityHistogram};

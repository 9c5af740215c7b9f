//! Voxel grids: sampling, isosurfacing, distance transforms, voxelization and
//! volume file formats.

mod edt;
mod features;
mod grid;
mod io;
mod marching_cubes;
mod nifti;
mod sample;
mod voxelize;

pub use edt::{distance_to_foreground, signed_distance};
pub use features::{build_feature_volume, channel, gaussian_smooth};
pub use grid::{BinaryMask, FeatureVolume, GridGeometry, VoxelGrid};
pub use io::{read_volume, write_volume, DType, RawVolHeader};
pub use marching_cubes::marching_cubes;
pub use nifti::read_nifti;
pub use sample::trilinear_sample;
pub use voxelize::voxelize;

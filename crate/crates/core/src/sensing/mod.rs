//! Bistatic RSRP imaging and angle estimation; monostatic delay profiles,
//! ranging, angle-range images and self-interference filtering.

mod angles;
mod bistatic;
mod export;
mod monostatic;

pub use angles::{assemble_panorama, estimate_angles, parabolic_offset, AngleEstimate, PeakConfig};
pub use bistatic::{BistaticScanner, LinkBudget, RsrpImage, RsrpMethod, UeScanRequest};
pub use export::{cloud_to_csv, image_to_pgm, matrix_to_csv};
pub use monostatic::{
    estimate_range, filter_self_interference, mainlobe_width, AngleRangeImage, CirTransform, CloudPoint,
    MonostaticConfig, MonostaticScanner, PowerDelayProfile,
};

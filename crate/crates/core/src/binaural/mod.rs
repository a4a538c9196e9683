//! Binaural room impulse responses: listener filters, spatial
//! decomposition of array responses and rendering to two ears.
//!
//! Azimuths are in degrees, counter-clockwise from the listener's front, so
//! positive angles are on the left.

mod hrir;
mod render;
mod sdm;

pub use hrir::{
    load_hrir_pack, pack_file_name, synth_hrir, woodworth_itd, write_hrir_pack, HrirOrigin, HrirSet,
    PackManifest, DEFAULT_HEAD_RADIUS, HRIR_BULK_DELAY, HRIR_LEN,
};
pub use render::{distance_scale, render_brir, Brir};
pub use sdm::{sdm_analyze, DoaTrack, SDM_WINDOW};

/// The 37 frontal azimuths, -90..=90 in 5 degree steps.
pub fn frontal_azimuths() -> impl Iterator<Item = i32> {
    (-18..=18).map(|i| i * 5)
}

pub const FRONTAL_COUNT: usize = 37;

/// Nearest frontal grid azimuth. Directions behind the listener clamp to
/// the +-90 edge on their side.
pub fn snap_to_grid(azimuth_deg: f64) -> i32 {
    let clamped = azimuth_deg.clamp(-90.0, 90.0);
    ((clamped / 5.0).round() as i32) * 5
}

/// True for multiples of 5 within [-90, 90].
pub fn is_grid_azimuth(az: i32) -> bool {
    (-90..=90).contains(&az) && az % 5 == 0
}

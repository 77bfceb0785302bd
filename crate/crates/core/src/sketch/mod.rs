//! Trajectory sketches: project a recorded path through a pinhole camera,
//! draw it as a color-graded polyline with start/end markers, and overlay it
//! on the final frame.

mod camera;
mod encode;
mod image;
mod raster;

pub use camera::{pinhole, CameraBasis, CameraModel, Z_NEAR};
pub use encode::{decode_png, decode_ppm, encode_image, encode_png, encode_ppm, ImageFormat};
pub use image::{Image, Rgb};
pub use raster::{color_at, draw_line, rasterize_lines, rasterize_polyline, Canvas, PixelSet, SketchStyle};

use crate::envs::{world_path, EnvSpec, TrackedBody};
use crate::error::{Error, Result};
use crate::model::{EpisodeId, TrajectorySegment};

/// Final frame plus the composed overlay.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchedObservation {
    pub final_frame: Image,
    pub polyline_px: Vec<Option<[f64; 2]>>,
    pub composed: Image,
    pub episode_id: EpisodeId,
}

/// Overlays the segment's tracked-body path (including its final state) on
/// a copy of `final_frame`.
pub fn compose_sketch(
    spec: &EnvSpec,
    camera: &CameraModel,
    style: &SketchStyle,
    final_frame: &Image,
    segment: &TrajectorySegment,
    body: TrackedBody,
) -> Result<SketchedObservation> {
    if final_frame.size() != camera.image_size {
        return Err(Error::ImageSize {
            expected: camera.image_size,
            actual: final_frame.size(),
        });
    }
    let points = world_path(spec, segment, body)?;
    let polyline_px = camera.project_trajectory(&points);
    let mut composed = final_frame.clone();
    rasterize_polyline(&mut composed, &polyline_px, style)?;
    Ok(SketchedObservation {
        final_frame: final_frame.clone(),
        polyline_px,
        composed,
        episode_id: segment.episode_id,
    })
}

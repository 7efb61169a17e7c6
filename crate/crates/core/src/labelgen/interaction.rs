use crate::error::{Error, Result};
use crate::teachers::DetectionFrame;
use crate::video_data::BlobCategory;

/// Hand and object maps over a `t x h x w` grid, row-major `[t][i][j]`
/// with `i` the row (y) and `j` the column (x).
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMap {
    pub grid_shape: [usize; 3],
    pub hand_map: Vec<f32>,
    pub object_map: Vec<f32>,
}

impl InteractionMap {
    pub fn zeros(grid_shape: [usize; 3]) -> Self {
        let n = grid_shape.iter().product();
        InteractionMap {
            grid_shape,
            hand_map: vec![0.0; n],
            object_map: vec![0.0; n],
        }
    }

    pub fn index(&self, t: usize, i: usize, j: usize) -> usize {
        let [_, h, w] = self.grid_shape;
        (t * h + i) * w + j
    }

    /// Copies the temporal cells `cells` into a new map of `cells.len()`
    /// steps.
    pub fn select_time(&self, cells: &[usize]) -> InteractionMap {
        let [_, h, w] = self.grid_shape;
        let plane = h * w;
        let mut out = InteractionMap::zeros([cells.len(), h, w]);
        for (dst, &src) in cells.iter().enumerate() {
            out.hand_map[dst * plane..(dst + 1) * plane]
                .copy_from_slice(&self.hand_map[src * plane..(src + 1) * plane]);
            out.object_map[dst * plane..(dst + 1) * plane]
                .copy_from_slice(&self.object_map[src * plane..(src + 1) * plane]);
        }
        out
    }
}

/// Temporal cell of frame `k` when `frames` frames map onto `t` cells.
pub fn temporal_cell(k: usize, t: usize, frames: usize) -> usize {
    k * t / frames
}

/// Index range of grid cells along one axis that meet `[lo, hi]` with
/// positive length.
fn overlapping_cells(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = usize> {
    let nf = n as f64;
    (0..n).filter(move |&c| {
        let a = (c as f64 / nf).max(lo);
        let b = ((c + 1) as f64 / nf).min(hi);
        a < b
    })
}

/// Builds hand and object maps from per-frame detections.
///
/// Boxes scoring below `threshold` are dropped. Frame `k` lands in
/// temporal cell `floor(k * t / T)`. A box touches a spatial cell when the
/// two rectangles intersect with strictly positive area. Each cell holds
/// the highest score among touching boxes of its category, or 0.
pub fn interaction_map(
    detections: &[DetectionFrame],
    grid_shape: [usize; 3],
    frame_count: usize,
    threshold: f64,
) -> Result<InteractionMap> {
    let [t, h, w] = grid_shape;
    if t == 0 || h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid shape {grid_shape:?} must be positive"
        )));
    }
    if frame_count < t {
        return Err(Error::InvalidArgument(format!(
            "{frame_count} frames cannot fill {t} temporal cells"
        )));
    }
    let mut map = InteractionMap::zeros(grid_shape);
    for frame in detections {
        if frame.frame_index >= frame_count {
            return Err(Error::InvalidArgument(format!(
                "frame index {} outside 0..{frame_count}",
                frame.frame_index
            )));
        }
        let tc = temporal_cell(frame.frame_index, t, frame_count);
        for b in &frame.boxes {
            b.validate()?;
            if b.score < threshold {
                continue;
            }
            let score = b.score as f32;
            let target = match b.category {
                BlobCategory::Hand => &mut map.hand_map,
                BlobCategory::Object => &mut map.object_map,
            };
            for i in overlapping_cells(b.y1, b.y2, h) {
                for j in overlapping_cells(b.x1, b.x2, w) {
                    let cell = &mut target[(tc * h + i) * w + j];
                    if score > *cell {
                        *cell = score;
                    }
                }
            }
        }
    }
    Ok(map)
}

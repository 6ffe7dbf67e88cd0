//! Pupil detection: 3x3 box-averaged intensity minimum inside the iris
//! circle, refined to sub-pixel precision by a darkness-weighted centroid.

use serde::{Deserialize, Serialize};

use crate::circle::CircleFit;
use crate::error::GeometryError;
use crate::Result;

/// Row-major grayscale grid; `(x, y)` indexes column then row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityGrid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl IntensityGrid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "grid data size");
        IntensityGrid {
            width,
            height,
            data,
        }
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Self {
        IntensityGrid::new(width, height, bytes.iter().map(|&b| b as f64).collect())
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Mean intensity over the in-bounds part of the 3x3 window at `(x, y)`.
    fn box3(&self, x: usize, y: usize) -> f64 {
        let mut sum = 0.0;
        let mut count = 0;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height {
                    sum += self.get(nx as usize, ny as usize);
                    count += 1;
                }
            }
        }
        sum / count as f64
    }
}

/// Locate the pupil as the darkest box-averaged pixel strictly inside the
/// iris circle, then refine with the darkness-weighted centroid of its 3x3
/// neighborhood. Ties resolve to the smallest `(y, x)`. The result always
/// lies strictly inside the circle.
pub fn detect_pupil(grid: &IntensityGrid, iris: &CircleFit) -> Result<(f64, f64)> {
    let r2 = iris.r * iris.r;
    let inside = |x: f64, y: f64| -> bool {
        let dx = x - iris.cx;
        let dy = y - iris.cy;
        dx * dx + dy * dy < r2
    };

    let x_lo = ((iris.cx - iris.r).ceil().max(0.0)) as usize;
    let x_hi = ((iris.cx + iris.r).floor().min(grid.width as f64 - 1.0)) as i64;
    let y_lo = ((iris.cy - iris.r).ceil().max(0.0)) as usize;
    let y_hi = ((iris.cy + iris.r).floor().min(grid.height as f64 - 1.0)) as i64;

    let mut best: Option<(usize, usize, f64)> = None;
    if x_hi >= 0 && y_hi >= 0 {
        for y in y_lo..=(y_hi as usize) {
            for x in x_lo..=(x_hi as usize) {
                if !inside(x as f64, y as f64) {
                    continue;
                }
                let avg = grid.box3(x, y);
                // strict less-than keeps the first (smallest y, then x) on ties
                if best.map_or(true, |(_, _, b)| avg < b) {
                    best = Some((x, y, avg));
                }
            }
        }
    }
    let (px, py, _) = best.ok_or(GeometryError::EmptyIrisInterior)?;

    // darkness-weighted centroid of the 3x3 neighborhood
    let mut local_max = f64::NEG_INFINITY;
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let nx = px as i64 + dx;
            let ny = py as i64 + dy;
            if nx >= 0 && ny >= 0 && (nx as usize) < grid.width && (ny as usize) < grid.height {
                local_max = local_max.max(grid.get(nx as usize, ny as usize));
            }
        }
    }
    let mut wsum = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let nx = px as i64 + dx;
            let ny = py as i64 + dy;
            if nx >= 0 && ny >= 0 && (nx as usize) < grid.width && (ny as usize) < grid.height {
                let w = local_max - grid.get(nx as usize, ny as usize);
                wsum += w;
                cx += w * nx as f64;
                cy += w * ny as f64;
            }
        }
    }
    let (mut rx, mut ry) = if wsum > 0.0 {
        (cx / wsum, cy / wsum)
    } else {
        (px as f64, py as f64)
    };

    // keep the refined point strictly inside the circle
    if !inside(rx, ry) {
        let dx = rx - iris.cx;
        let dy = ry - iris.cy;
        let d = (dx * dx + dy * dy).sqrt();
        let shrink = iris.r * (1.0 - 1e-9) / d;
        rx = iris.cx + dx * shrink;
        ry = iris.cy + dy * shrink;
        if !inside(rx, ry) {
            rx = px as f64;
            ry = py as f64;
        }
    }
    Ok((rx, ry))
}

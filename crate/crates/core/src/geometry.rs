//! Axis-aligned bounding boxes in pixel space.
//!
//! The internal canon is the corner form `(x_min, y_min, x_max, y_max)`.
//! COCO stores `[x, y, width, height]`; KITTI and Pascal VOC store corners.
//! All arithmetic is generic over the coordinate scalar so the same code
//! serves `f64` ingest paths and `f32` display paths.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Coordinate scalar: `f32` or `f64`.
pub trait Coord: Float + FromPrimitive + Debug + Display + Default + 'static {}

impl Coord for f32 {}
impl Coord for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct BoundingBox<S> {
    pub x_min: S,
    pub y_min: S,
    pub x_max: S,
    pub y_max: S,
}

impl<S: Coord> BoundingBox<S> {
    pub fn from_corners(x_min: S, y_min: S, x_max: S, y_max: S) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    /// Converts a COCO `[x, y, w, h]` box.
    pub fn from_xywh(x: S, y: S, w: S, h: S) -> Self {
        Self { x_min: x, y_min: y, x_max: x + w, y_max: y + h }
    }

    /// Back-converts to COCO `[x, y, w, h]`.
    pub fn to_xywh(&self) -> [S; 4] {
        [self.x_min, self.y_min, self.width(), self.height()]
    }

    pub fn width(&self) -> S {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> S {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> S {
        self.width() * self.height()
    }

    /// Strictly positive extent on both axes, all coordinates finite.
    pub fn is_proper(&self) -> bool {
        self.corners().iter().all(|c| c.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    /// Whether the box lies inside `[0, width] x [0, height]`.
    pub fn fits_within(&self, width: S, height: S) -> bool {
        let zero = S::zero();
        self.x_min >= zero && self.y_min >= zero && self.x_max <= width && self.y_max <= height
    }

    pub fn corners(&self) -> [S; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Scales every coordinate independently per axis, e.g. for drawing a box
    /// over an image displayed at a different size.
    pub fn scaled(&self, sx: S, sy: S) -> Self {
        Self {
            x_min: self.x_min * sx,
            y_min: self.y_min * sy,
            x_max: self.x_max * sx,
            y_max: self.y_max * sy,
        }
    }

    /// Maps a box on a `src` sized image onto a `dst` sized display.
    pub fn rescale(&self, src: (S, S), dst: (S, S)) -> Self {
        self.scaled(dst.0 / src.0, dst.1 / src.1)
    }

    pub fn cast<T: Coord>(&self) -> Option<BoundingBox<T>> {
        Some(BoundingBox {
            x_min: T::from(self.x_min)?,
            y_min: T::from(self.y_min)?,
            x_max: T::from(self.x_max)?,
            y_max: T::from(self.y_max)?,
        })
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.corners()
            .iter()
            .zip(other.corners().iter())
            .map(|(a, b)| (*a - *b).abs())
            .fold(S::zero(), S::max)
    }
}

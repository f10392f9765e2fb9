//! Small planar geometry helpers shared by the shape and tracking modules.

use serde::{Deserialize, Serialize};

use crate::real::Real;

/// 2D point / vector in pixel coordinates (x rightward, y downward).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z component of the cross product.
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Self) -> T {
        self.sub(o).norm()
    }

    /// Direction angle of the vector, atan2 convention.
    pub fn angle(self) -> T {
        self.y.atan2(self.x)
    }

    pub fn from_angle(a: T) -> Self {
        Self::new(a.cos(), a.sin())
    }

    pub fn rotate(self, a: T) -> Self {
        let (s, c) = a.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle<T: Real>(a: T) -> T {
    let tau = T::TAU();
    let mut a = a % tau;
    if a <= -T::PI() {
        a += tau;
    } else if a > T::PI() {
        a -= tau;
    }
    a
}

/// Wrap an undirected orientation into [0, pi).
pub fn wrap_orientation<T: Real>(a: T) -> T {
    let pi = T::PI();
    let mut a = a % pi;
    if a < T::zero() {
        a += pi;
    }
    // `a % pi` can round to pi itself for inputs just below a multiple of pi.
    if a >= pi {
        a -= pi;
    }
    a
}

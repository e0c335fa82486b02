//! RGB spectrum in linear space.

use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, MulAssign, Sub};

use serde::{Deserialize, Serialize};

/// Linear RGB triple. Used for both reflectance (unitless) and radiance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl Spectrum {
    pub const ZERO: Spectrum = Spectrum::splat(0.0);
    pub const ONE: Spectrum = Spectrum::splat(1.0);

    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Self { r, g, b }
    }

    pub const fn splat(v: f64) -> Self {
        Self { r: v, g: v, b: v }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(f(self.r), f(self.g), f(self.b))
    }

    pub fn zip(self, o: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::new(f(self.r, o.r), f(self.g, o.g), f(self.b, o.b))
    }

    /// Rec. 709 luminance weights.
    pub const LUMINANCE: Spectrum = Spectrum {
        r: 0.2126,
        g: 0.7152,
        b: 0.0722,
    };

    /// Rec. 709 luminance.
    pub fn luminance(self) -> f64 {
        0.2126 * self.r + 0.7152 * self.g + 0.0722 * self.b
    }

    pub fn is_finite(self) -> bool {
        self.r.is_finite() && self.g.is_finite() && self.b.is_finite()
    }

    pub fn is_non_negative(self) -> bool {
        self.r >= 0.0 && self.g >= 0.0 && self.b >= 0.0
    }

    pub fn max_component(self) -> f64 {
        self.r.max(self.g).max(self.b)
    }

    pub fn min_component(self) -> f64 {
        self.r.min(self.g).min(self.b)
    }

    pub fn lerp(self, o: Self, t: f64) -> Self {
        self * (1.0 - t) + o * t
    }

    pub fn dot(self, o: Self) -> f64 {
        self.r * o.r + self.g * o.g + self.b * o.b
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Self {
        self.map(|v| v.clamp(lo, hi))
    }
}

impl Index<usize> for Spectrum {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.r,
            1 => &self.g,
            2 => &self.b,
            _ => panic!("spectrum channel {i} out of range"),
        }
    }
}

impl IndexMut<usize> for Spectrum {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        match i {
            0 => &mut self.r,
            1 => &mut self.g,
            2 => &mut self.b,
            _ => panic!("spectrum channel {i} out of range"),
        }
    }
}

impl Add for Spectrum {
    type Output = Spectrum;
    fn add(self, o: Self) -> Self {
        self.zip(o, |a, b| a + b)
    }
}

impl AddAssign for Spectrum {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for Spectrum {
    type Output = Spectrum;
    fn sub(self, o: Self) -> Self {
        self.zip(o, |a, b| a - b)
    }
}

impl Mul for Spectrum {
    type Output = Spectrum;
    fn mul(self, o: Self) -> Self {
        self.zip(o, |a, b| a * b)
    }
}

impl Mul<f64> for Spectrum {
    type Output = Spectrum;
    fn mul(self, s: f64) -> Self {
        self.map(|a| a * s)
    }
}

impl Mul<Spectrum> for f64 {
    type Output = Spectrum;
    fn mul(self, s: Spectrum) -> Spectrum {
        s * self
    }
}

impl MulAssign<f64> for Spectrum {
    fn mul_assign(&mut self, s: f64) {
        *self = *self * s;
    }
}

impl Div<f64> for Spectrum {
    type Output = Spectrum;
    fn div(self, s: f64) -> Self {
        self.map(|a| a / s)
    }
}

//! Small fixed-size vector helpers and orthorhombic periodic geometry.

use crate::error::{ReaxError, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm2(a: Vec3) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn add_assign(a: &mut Vec3, b: Vec3) {
    a[0] += b[0];
    a[1] += b[1];
    a[2] += b[2];
}

#[inline]
pub fn sub_assign(a: &mut Vec3, b: Vec3) {
    a[0] -= b[0];
    a[1] -= b[1];
    a[2] -= b[2];
}

/// Outer product `a ⊗ b`.
#[inline]
pub fn outer(a: Vec3, b: Vec3) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for (r, row) in m.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = a[r] * b[c];
        }
    }
    m
}

/// Orthorhombic simulation box. Lengths in Å.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimBox {
    pub lengths: Vec3,
    pub periodic: [bool; 3],
}

impl SimBox {
    pub fn new(lengths: Vec3, periodic: [bool; 3]) -> Result<Self> {
        if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(ReaxError::InvalidParameter(format!(
                "box lengths must be positive, got {lengths:?}"
            )));
        }
        Ok(SimBox { lengths, periodic })
    }

    pub fn periodic(lengths: Vec3) -> Result<Self> {
        Self::new(lengths, [true; 3])
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Checks that every periodic axis is at least twice the cutoff, which
    /// makes the minimum image unique within the cutoff sphere.
    pub fn check_cutoff(&self, cutoff: f64) -> Result<()> {
        for axis in 0..3 {
            if self.periodic[axis] && self.lengths[axis] < 2.0 * cutoff {
                return Err(ReaxError::BoxTooSmall {
                    axis,
                    length: self.lengths[axis],
                    required: 2.0 * cutoff,
                });
            }
        }
        Ok(())
    }

    /// Minimum-image displacement. Periodic components land in the half-open
    /// interval `[-L/2, L/2)`; values already inside are returned unchanged.
    #[inline]
    pub fn min_image(&self, dr: Vec3) -> Vec3 {
        let mut out = dr;
        for axis in 0..3 {
            if self.periodic[axis] {
                out[axis] = wrap_half_open(dr[axis], self.lengths[axis]);
            }
        }
        out
    }

    /// Displacement from `a` to `b` under the minimum-image convention.
    #[inline]
    pub fn delta(&self, a: Vec3, b: Vec3) -> Vec3 {
        self.min_image(sub(b, a))
    }

    /// Maps a position into `[0, L)` on every periodic axis.
    #[inline]
    pub fn wrap(&self, mut x: Vec3) -> Vec3 {
        for axis in 0..3 {
            if self.periodic[axis] {
                let l = self.lengths[axis];
                if !(0.0..l).contains(&x[axis]) {
                    x[axis] -= l * (x[axis] / l).floor();
                    // floor rounding can leave x == l
                    if x[axis] >= l {
                        x[axis] -= l;
                    }
                    if x[axis] < 0.0 {
                        x[axis] = 0.0;
                    }
                }
            }
        }
        x
    }
}

#[inline]
fn wrap_half_open(x: f64, l: f64) -> f64 {
    let half = 0.5 * l;
    if (-half..half).contains(&x) {
        return x;
    }
    let mut y = x - l * (x / l + 0.5).floor();
    if y >= half {
        y -= l;
    } else if y < -half {
        y += l;
    }
    y
}

/// Free-function form of [`SimBox::min_image`].
pub fn min_image(dr: Vec3, sim_box: &SimBox) -> Vec3 {
    sim_box.min_image(dr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cube(l: f64) -> SimBox {
        SimBox::periodic([l, l, l]).unwrap()
    }

    #[test]
    fn min_image_examples() {
        let b = cube(10.0);
        assert_eq!(b.min_image([0.0, 0.0, 0.0]), [0.0, 0.0, 0.0]);
        assert_eq!(b.min_image([9.0, 0.0, 0.0]), [-1.0, 0.0, 0.0]);
        // half-open: -L/2 stays, +L/2 maps to -L/2
        assert_eq!(b.min_image([-5.0, 0.0, 0.0]), [-5.0, 0.0, 0.0]);
        assert_eq!(b.min_image([5.0, 0.0, 0.0]), [-5.0, 0.0, 0.0]);
    }

    #[test]
    fn non_periodic_axis_untouched() {
        let b = SimBox::new([10.0, 10.0, 10.0], [true, false, true]).unwrap();
        assert_eq!(b.min_image([9.0, 9.0, -9.0]), [-1.0, 9.0, 1.0]);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(SimBox::periodic([0.0, 1.0, 1.0]).is_err());
        assert!(SimBox::periodic([1.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn cutoff_check() {
        assert!(cube(20.0).check_cutoff(10.0).is_ok());
        assert!(matches!(
            cube(19.9).check_cutoff(10.0),
            Err(ReaxError::BoxTooSmall { axis: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn min_image_idempotent_and_in_range(
            l in 0.5f64..100.0,
            x in -1e4f64..1e4,
            y in -1e4f64..1e4,
            z in -1e4f64..1e4,
        ) {
            let b = cube(l);
            let once = b.min_image([x, y, z]);
            prop_assert_eq!(b.min_image(once), once);
            for c in once {
                prop_assert!(c >= -0.5 * l && c < 0.5 * l);
            }
        }

        #[test]
        fn wrap_lands_inside(l in 0.5f64..100.0, x in -1e4f64..1e4) {
            let b = cube(l);
            let w = b.wrap([x, 0.0, 0.0]);
            prop_assert!(w[0] >= 0.0 && w[0] < l);
        }
    }
}

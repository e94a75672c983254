//! Flat torus `T^d = R^d / Z^d` with fundamental domain `[0,1)^d`.

use serde::{Deserialize, Serialize};

use crate::error::{DynError, Result};

/// A point of the flat torus, stored as its representative in `[0,1)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    /// Builds a point from arbitrary real coordinates, reducing each mod 1.
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        let mut coords = coords.into();
        normalize(&mut coords);
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

impl From<&[f64]> for TorusPoint {
    fn from(c: &[f64]) -> Self {
        TorusPoint::new(c.to_vec())
    }
}

/// Reduces a coordinate to `[0,1)`.
#[inline]
pub fn wrap01(v: f64) -> f64 {
    let r = v - v.floor();
    // `v - floor(v)` can round up to exactly 1.0 for tiny negative v.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Reduces a displacement to the symmetric interval `[-1/2, 1/2)`.
#[inline]
pub fn wrap_signed(v: f64) -> f64 {
    v - (v + 0.5).floor()
}

pub fn normalize(coords: &mut [f64]) {
    for c in coords.iter_mut() {
        *c = wrap01(*c);
    }
}

/// Squared flat distance between two coordinate slices of equal length.
#[inline]
pub fn torus_distance_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = wrap_signed(a - b);
            d * d
        })
        .sum()
}

#[inline]
pub fn torus_distance_raw(x: &[f64], y: &[f64]) -> f64 {
    torus_distance_sq(x, y).sqrt()
}

/// Euclidean distance minimised over integer translates.
pub fn torus_distance(x: &TorusPoint, y: &TorusPoint) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(DynError::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    Ok(torus_distance_raw(x.coords(), y.coords()))
}

/// Representative of `y` in the unit cube centred at `anchor` (shortest displacement).
pub fn lift_near(anchor: &[f64], y: &[f64]) -> Vec<f64> {
    anchor
        .iter()
        .zip(y)
        .map(|(a, b)| a + wrap_signed(b - a))
        .collect()
}

/// Positive root of `x^(d+1) = x + 1`; the generalized golden ratio of the R_d lattice.
fn generalized_golden(d: usize) -> f64 {
    let mut x = 2.0_f64;
    for _ in 0..64 {
        x = (1.0 + x).powf(1.0 / (d as f64 + 1.0));
    }
    x
}

/// Golden-ratio (Kronecker) lattice: `frac(offset + k * alpha)` with `alpha_j = phi_d^{-j}`.
///
/// The seed selects the offset deterministically, so equal seeds give identical point sets.
pub fn quasi_random_points(dim: usize, count: usize, seed: u64) -> Vec<TorusPoint> {
    let phi = generalized_golden(dim);
    let alpha: Vec<f64> = (1..=dim).map(|j| phi.powi(-(j as i32))).collect();
    let base = 0.5 + (seed as f64) * 0.618_033_988_749_894_9;
    (0..count)
        .map(|k| {
            let c: Vec<f64> = alpha
                .iter()
                .map(|a| wrap01(base + (k as f64 + 1.0) * a))
                .collect();
            TorusPoint::new(c)
        })
        .collect()
}

/// Quasi-random points inside the Euclidean ball of radius `radius` around the origin.
pub fn quasi_random_ball(dim: usize, count: usize, radius: f64) -> Vec<Vec<f64>> {
    let cube = quasi_random_points(dim, count * 4 * (1 << dim) + 16, 7);
    cube.into_iter()
        .map(|p| {
            p.coords()
                .iter()
                .map(|c| 2.0 * c - 1.0)
                .collect::<Vec<f64>>()
        })
        .filter(|v| v.iter().map(|c| c * c).sum::<f64>() <= 1.0)
        .take(count)
        .map(|v| v.into_iter().map(|c| c * radius).collect())
        .collect()
}

/// Uniform grid with `per_axis` points per coordinate, in lexicographic order.
pub fn uniform_grid(dim: usize, per_axis: usize) -> Vec<TorusPoint> {
    let total = per_axis.pow(dim as u32);
    let h = 1.0 / per_axis as f64;
    (0..total)
        .map(|mut idx| {
            let mut c = vec![0.0; dim];
            for j in (0..dim).rev() {
                c[j] = (idx % per_axis) as f64 * h;
                idx /= per_axis;
            }
            TorusPoint::new(c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> TorusPoint {
        TorusPoint::new(c.to_vec())
    }

    #[test]
    fn distance_examples() {
        assert_eq!(
            torus_distance(&p(&[0.0, 0.0]), &p(&[0.0, 0.0])).unwrap(),
            0.0
        );
        let d = torus_distance(&p(&[0.1, 0.0]), &p(&[0.9, 0.0])).unwrap();
        assert!((d - 0.2).abs() < 1e-12);
        let d = torus_distance(&p(&[0.25, 0.25]), &p(&[0.5, 0.5])).unwrap();
        assert!((d - 0.125f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        assert!(matches!(
            torus_distance(&p(&[0.1]), &p(&[0.1, 0.2])),
            Err(DynError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn normalization_lands_in_unit_interval() {
        let q = p(&[-1e-20, 1.0, 3.75, -0.25]);
        for c in q.coords() {
            assert!((0.0..1.0).contains(c));
        }
        assert_eq!(q.coords()[2], 0.75);
        assert_eq!(q.coords()[3], 0.75);
    }

    #[test]
    fn quasi_random_is_deterministic_and_seeded() {
        let a = quasi_random_points(3, 10, 1);
        let b = quasi_random_points(3, 10, 1);
        let c = quasi_random_points(3, 10, 2);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn ball_samples_respect_radius() {
        let pts = quasi_random_ball(3, 50, 0.05);
        assert_eq!(pts.len(), 50);
        for v in pts {
            assert!(v.iter().map(|c| c * c).sum::<f64>().sqrt() <= 0.05 + 1e-15);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-3.0f64..3.0, d)
        }

        proptest! {
            #[test]
            fn metric_axioms(x in point(3), y in point(3), z in point(3)) {
                let (x, y, z) = (p(&x), p(&y), p(&z));
                let dxy = torus_distance(&x, &y).unwrap();
                let dyx = torus_distance(&y, &x).unwrap();
                let dxz = torus_distance(&x, &z).unwrap();
                let dzy = torus_distance(&z, &y).unwrap();
                prop_assert!((dxy - dyx).abs() < 1e-15);
                prop_assert!(dxy <= dxz + dzy + 1e-12);
                prop_assert!(dxy <= 3f64.sqrt() / 2.0 + 1e-12);
                prop_assert_eq!(torus_distance(&x, &x).unwrap(), 0.0);
            }
        }
    }
}

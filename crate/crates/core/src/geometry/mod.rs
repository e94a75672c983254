//! Central curves, Bowen-ball containment, curve entropy and affine plaques.

mod checks;
mod plaque;

pub use checks::{
    check_central_segment_in_gamma, curve_entropy_zero_check, verify_gamma_in_curve,
    CurveEntropyReport, CurveVerdict, GammaCase, GammaCurveOptions, GammaCurveReport,
    SegmentReport, SegmentStatus,
};
pub use plaque::{plaque_intersection, PlaqueSpec};

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, DynError, Result};
use crate::linalg::orient;
use crate::splitting::{flags_for, BundleField};
use crate::system::SystemSpec;
use crate::torus::{torus_distance_raw, wrap01, TorusPoint};

/// Largest admissible curve radius.
pub const RHO_CAP: f64 = 0.25;

/// Arc-length parameterized curve through `base`, stored in lifted coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralCurve {
    pub base: TorusPoint,
    /// Position of the tangent factor in the splitting (0 is `E^s`).
    pub factor: usize,
    pub rho: f64,
    pub h_curve: f64,
    /// Lifted node coordinates, ordered by arc length.
    pub nodes: Vec<Vec<f64>>,
    /// Signed arc length of each node (0 at `base`).
    pub arclen: Vec<f64>,
    pub tangents: Vec<Vec<f64>>,
}

impl CentralCurve {
    /// Straight segment `base + s·dir`, `|s| ≤ rho`.
    pub fn straight(base: &TorusPoint, dir: &[f64], rho: f64, h_curve: f64) -> Result<Self> {
        if dir.len() != base.dim() {
            return Err(DynError::DimensionMismatch {
                expected: base.dim(),
                got: dir.len(),
            });
        }
        let n = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(invalid("dir", "must be non-zero"));
        }
        let u: Vec<f64> = dir.iter().map(|c| c / n).collect();
        let (steps, h) = step_count(rho, h_curve)?;
        let mut nodes = Vec::new();
        let mut arclen = Vec::new();
        for k in -(steps as i64)..=(steps as i64) {
            let s = k as f64 * h;
            nodes.push(
                base.coords()
                    .iter()
                    .zip(&u)
                    .map(|(b, v)| b + s * v)
                    .collect(),
            );
            arclen.push(s);
        }
        let tangents = vec![u; nodes.len()];
        Ok(Self {
            base: base.clone(),
            factor: 0,
            rho,
            h_curve: h,
            nodes,
            arclen,
            tangents,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Polyline length.
    pub fn length(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }

    /// Nodes reduced to the fundamental domain.
    pub fn points(&self) -> Vec<TorusPoint> {
        self.nodes
            .iter()
            .map(|n| TorusPoint::new(n.clone()))
            .collect()
    }

    pub fn center_index(&self) -> usize {
        self.arclen
            .iter()
            .position(|&s| s == 0.0)
            .unwrap_or(self.nodes.len() / 2)
    }

    /// Nodes with signed arc length in `[s0, s1]` (keeps `base` as reference point).
    pub fn sub_arc(&self, s0: f64, s1: f64) -> Self {
        let tol = 1e-12;
        let keep: Vec<usize> = (0..self.len())
            .filter(|&k| self.arclen[k] >= s0 - tol && self.arclen[k] <= s1 + tol)
            .collect();
        Self {
            base: self.base.clone(),
            factor: self.factor,
            rho: s0.abs().max(s1.abs()).min(self.rho),
            h_curve: self.h_curve,
            nodes: keep.iter().map(|&k| self.nodes[k].clone()).collect(),
            arclen: keep.iter().map(|&k| self.arclen[k]).collect(),
            tangents: keep.iter().map(|&k| self.tangents[k].clone()).collect(),
        }
    }

    /// Distance from a lifted point to the polyline.
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        if self.nodes.len() == 1 {
            return dist(p, &self.nodes[0]);
        }
        self.nodes
            .windows(2)
            .map(|w| segment_distance(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV polyline with header `arclen,x1,..,xd`.
    pub fn to_csv(&self) -> String {
        let d = self.base.dim();
        let mut out = String::from("arclen");
        for j in 1..=d {
            let _ = write!(out, ",x{j}");
        }
        out.push('\n');
        for (s, n) in self.arclen.iter().zip(&self.nodes) {
            out.push_str(&fmt_sig(*s));
            for c in n {
                out.push(',');
                out.push_str(&fmt_sig(*c));
            }
            out.push('\n');
        }
        out
    }
}

/// Float with 12 significant digits, trailing zeros trimmed.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() {
            "0".into()
        } else {
            v.to_string()
        };
    }
    let s = format!("{:.*e}", 11, v);
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let e: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&e) {
        let decimals = (11 - e).max(0) as usize;
        let f = format!("{:.*}", decimals, v);
        if f.contains('.') {
            f.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            f
        }
    } else {
        let m = mant.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{e}")
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let l2: f64 = ab.iter().map(|c| c * c).sum();
    if l2 == 0.0 {
        return dist(p, a);
    }
    let t = (p
        .iter()
        .zip(a)
        .zip(&ab)
        .map(|((p, a), d)| (p - a) * d)
        .sum::<f64>()
        / l2)
        .clamp(0.0, 1.0);
    let q: Vec<f64> = a.iter().zip(&ab).map(|(a, d)| a + t * d).collect();
    dist(p, &q)
}

fn step_count(rho: f64, h_curve: f64) -> Result<(usize, f64)> {
    if !(rho >= 0.0) {
        return Err(invalid("rho", "must be non-negative"));
    }
    if !(h_curve > 0.0) {
        return Err(invalid("h_curve", "must be positive"));
    }
    if rho == 0.0 {
        return Ok((0, h_curve));
    }
    let steps = ((rho / h_curve).round() as usize).max(1);
    Ok((steps, rho / steps as f64))
}

/// Unit vector spanning factor `i` at `y`, with the sign closest to `prev`.
fn field_at(
    sys: &SystemSpec,
    field: &BundleField,
    i: usize,
    y: &[f64],
    prev: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let wrapped: Vec<f64> = y.iter().map(|&c| wrap01(c)).collect();
    let fl = flags_for(sys, &wrapped, &field.dims, &field.options, 0, 0)?;
    let (factors, _) = fl.factors(0, &field.dims);
    let mut v: DMatrix<f64> = factors[i].clone();
    match prev {
        Some(p) => {
            let dot: f64 = v.iter().zip(p).map(|(a, b)| a * b).sum();
            if dot < 0.0 {
                v.neg_mut();
            }
        }
        None => orient(&mut v),
    }
    Ok(v.iter().copied().collect())
}

/// Fourth-order integration of the unit field spanning factor `i` from `x`, `rho` of arc
/// length each way.
pub fn integrate_central_curve(
    sys: &SystemSpec,
    field: &BundleField,
    x: &TorusPoint,
    i: usize,
    rho: f64,
    h_curve: f64,
) -> Result<CentralCurve> {
    if x.dim() != sys.dim {
        return Err(DynError::DimensionMismatch {
            expected: sys.dim,
            got: x.dim(),
        });
    }
    if i >= field.dims.len() || field.dims[i] != 1 {
        return Err(DynError::Precondition(format!(
            "factor {i} is not a one-dimensional factor of {:?}",
            field.dims
        )));
    }
    if rho > RHO_CAP {
        return Err(invalid("rho", format!("exceeds the cap {RHO_CAP}")));
    }
    let (steps, h) = step_count(rho, h_curve)?;
    let t0 = field_at(sys, field, i, x.coords(), None)?;
    let mut halves: [Vec<(Vec<f64>, Vec<f64>)>; 2] = [Vec::new(), Vec::new()];
    for (side, sign) in [1.0f64, -1.0].into_iter().enumerate() {
        let mut y = x.coords().to_vec();
        let mut t: Vec<f64> = t0.iter().map(|c| sign * c).collect();
        for _ in 0..steps {
            let add = |y: &[f64], k: &[f64], s: f64| -> Vec<f64> {
                y.iter().zip(k).map(|(a, b)| a + s * b).collect()
            };
            let k1 = field_at(sys, field, i, &y, Some(&t))?;
            let k2 = field_at(sys, field, i, &add(&y, &k1, h / 2.0), Some(&k1))?;
            let k3 = field_at(sys, field, i, &add(&y, &k2, h / 2.0), Some(&k2))?;
            let k4 = field_at(sys, field, i, &add(&y, &k3, h), Some(&k3))?;
            for j in 0..y.len() {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            t = field_at(sys, field, i, &y, Some(&k4))?;
            halves[side].push((y.clone(), t.clone()));
        }
    }
    let mut nodes = Vec::with_capacity(2 * steps + 1);
    let mut tangents = Vec::with_capacity(2 * steps + 1);
    let mut arclen = Vec::with_capacity(2 * steps + 1);
    for (k, (y, t)) in halves[1].iter().enumerate().rev() {
        nodes.push(y.clone());
        tangents.push(t.iter().map(|c| -c).collect());
        arclen.push(-((k + 1) as f64) * h);
    }
    nodes.push(x.coords().to_vec());
    tangents.push(t0);
    arclen.push(0.0);
    for (k, (y, t)) in halves[0].iter().enumerate() {
        nodes.push(y.clone());
        tangents.push(t.clone());
        arclen.push((k + 1) as f64 * h);
    }
    Ok(CentralCurve {
        base: x.clone(),
        factor: i,
        rho,
        h_curve: h,
        nodes,
        arclen,
        tangents,
    })
}

/// Polyline length of `f^n(curve)` for `n = 0..=n_max`, node by node on the torus.
pub fn iterate_lengths(sys: &SystemSpec, curve: &CentralCurve, n_max: usize) -> Vec<f64> {
    let d = sys.dim;
    let mut pts: Vec<Vec<f64>> = curve
        .nodes
        .iter()
        .map(|n| n.iter().map(|&c| wrap01(c)).collect())
        .collect();
    let mut scratch = vec![0.0; d];
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            for p in pts.iter_mut() {
                sys.forward_in_place(p, &mut scratch);
            }
        }
        out.push(
            pts.windows(2)
                .map(|w| torus_distance_raw(&w[0], &w[1]))
                .sum(),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::angle_to_subspace;
    use crate::splitting::compute_bundles;
    use crate::system::{cat2, cat3, cat3skew, default_alpha, DEFAULT_KAPPA};
    use crate::torus::quasi_random_points;

    fn field(sys: &SystemSpec) -> BundleField {
        let dims = if sys.dim == 2 {
            vec![1, 1]
        } else {
            vec![1, 1, 1]
        };
        compute_bundles(sys, &quasi_random_points(sys.dim, 4, 0), &dims, 40).unwrap()
    }

    #[test]
    fn cat3_center_curve_is_fiber_arc() {
        let sys = cat3(default_alpha());
        let f = field(&sys);
        let x = TorusPoint::new(vec![0.2, 0.4, 0.6]);
        let c = integrate_central_curve(&sys, &f, &x, 1, 0.1, 0.01).unwrap();
        assert_eq!(c.len(), 21);
        for (n, s) in c.nodes.iter().zip(&c.arclen) {
            assert!((n[0] - 0.2).abs() < 1e-10 && (n[1] - 0.4).abs() < 1e-10);
            assert!((n[2] - 0.6 - s).abs() < 1e-10);
        }
        assert!((c.length() - 0.2).abs() < 1e-10);
    }

    #[test]
    fn cat2_stable_curve_is_straight() {
        let sys = cat2();
        let f = field(&sys);
        let x = TorusPoint::new(vec![0.3, 0.1]);
        let c = integrate_central_curve(&sys, &f, &x, 0, 0.1, 0.005).unwrap();
        let es = sys.analytic_splitting.as_ref().unwrap()[0].matrix(2);
        for n in &c.nodes {
            let v = DMatrix::from_fn(2, 1, |r, _| n[r] - x.coords()[r]);
            assert!(angle_to_subspace(&es, &v) < 1e-9);
        }
    }

    #[test]
    fn cat3skew_curve_tangents_and_spacing() {
        let sys = cat3skew(default_alpha(), DEFAULT_KAPPA);
        let f = field(&sys);
        let x = TorusPoint::new(vec![0.7, 0.15, 0.5]);
        let c = integrate_central_curve(&sys, &f, &x, 1, 0.05, 0.005).unwrap();
        let e3 = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        for (k, t) in c.tangents.iter().enumerate() {
            let v = DMatrix::from_column_slice(3, 1, t);
            assert!(angle_to_subspace(&e3, &v) < 0.05);
            let exact = field_at(&sys, &f, 1, &c.nodes[k], Some(t)).unwrap();
            let e = DMatrix::from_column_slice(3, 1, &exact);
            assert!(angle_to_subspace(&e, &v) < 1e-4);
        }
        for w in c.nodes.windows(2) {
            assert!((dist(&w[0], &w[1]) / c.h_curve - 1.0).abs() < 0.01);
        }
        // restarting from a node reproduces the same points
        let k = c.center_index() + 4;
        let y = TorusPoint::new(c.nodes[k].clone());
        let c2 = integrate_central_curve(&sys, &f, &y, 1, 0.02, 0.005).unwrap();
        for n in &c2.nodes {
            let lifted: Vec<f64> = n
                .iter()
                .zip(&c.nodes[k])
                .map(|(a, b)| b + crate::torus::wrap_signed(a - wrap01(*b)))
                .collect();
            assert!(c.distance_to(&lifted) < 10.0 * c.h_curve * c.h_curve);
        }
    }

    #[test]
    fn rho_above_cap_is_rejected() {
        let sys = cat3(default_alpha());
        let f = field(&sys);
        let x = TorusPoint::new(vec![0.2, 0.4, 0.6]);
        assert!(integrate_central_curve(&sys, &f, &x, 1, 0.3, 0.01).is_err());
        let single = integrate_central_curve(&sys, &f, &x, 1, 0.0, 0.01).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn csv_export() {
        let x = TorusPoint::new(vec![0.5, 0.25]);
        let c = CentralCurve::straight(&x, &[1.0, 0.0], 0.1, 0.1).unwrap();
        assert_eq!(
            c.to_csv(),
            "arclen,x1,x2\n-0.1,0.4,0.25\n0,0.5,0.25\n0.1,0.6,0.25\n"
        );
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(2.5e-9), "2.5e-9");
    }
}

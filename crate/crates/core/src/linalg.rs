//! Small dense helpers on top of nalgebra for `d ≤ 8` bundles.

use nalgebra::DMatrix;

/// Thin QR with positive diagonal. Returns the orthonormal factor and `log |R_jj|`.
pub fn qr_positive(m: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let k = m.ncols();
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    let mut logs = Vec::with_capacity(k);
    for j in 0..k {
        let rjj = r[(j, j)];
        if rjj < 0.0 {
            q.column_mut(j).neg_mut();
        }
        logs.push(rjj.abs().ln());
    }
    (q, logs)
}

pub fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    qr_positive(m).0
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.ncols() == 1 {
        return vec![m.norm()];
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

/// Operator norm (largest singular value).
pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    singular_values(m).into_iter().fold(0.0, f64::max)
}

/// Smallest singular value of a tall matrix (conorm of the map it represents).
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    singular_values(m).into_iter().fold(f64::INFINITY, f64::min)
}

/// Largest principal angle between the column spans of two orthonormal bases of equal rank.
pub fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let resid = b - a * (a.transpose() * b);
    sigma_max(&resid).clamp(0.0, 1.0).asin()
}

/// Angle between the span of `a` (orthonormal) and the vector `v`.
pub fn angle_to_subspace(a: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let n = v.norm();
    if n == 0.0 {
        return 0.0;
    }
    let resid = v - a * (a.transpose() * v);
    (resid.norm() / n).clamp(0.0, 1.0).asin()
}

/// Unit vector spanning the (one-dimensional) intersection of two spans, with the
/// residual `1 - σ_max(Aᵀ B)` that is zero for an exact intersection.
pub fn intersect_line(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let c = a.transpose() * b;
    if b.ncols() == 1 {
        let s = c.norm();
        return (b.clone(), 1.0 - s);
    }
    let svd = c.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let (mut best, mut s_best) = (0, f64::NEG_INFINITY);
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > s_best {
            best = k;
            s_best = *s;
        }
    }
    let w = vt.row(best).transpose();
    let v = b * w;
    let n = v.norm();
    (
        DMatrix::from_column_slice(v.nrows(), 1, v.as_slice()) / n,
        1.0 - s_best,
    )
}

/// Fixed, generic orthonormal frame used to seed flag iterations.
pub fn generic_frame(d: usize) -> DMatrix<f64> {
    let g = 0.618_033_988_749_894_9_f64;
    let m = DMatrix::from_fn(d, d, |r, c| {
        let k = (r * d + c + 1) as f64;
        let v = (k * g + 0.5 * k * k * 0.414_213_562_373_095).fract();
        v - 0.5 + if r == c { 1.5 } else { 0.0 }
    });
    orthonormalize(m)
}

/// Orients a unit column so that its dot product with `(1, 1/2, 1/3, …)` is non-negative;
/// exact ties fall back to the first non-zero component being positive.
pub fn orient(v: &mut DMatrix<f64>) {
    let dot: f64 = (0..v.nrows()).map(|r| v[(r, 0)] / (r as f64 + 1.0)).sum();
    let flip = if dot.abs() > 1e-14 {
        dot < 0.0
    } else {
        v.iter().find(|c| c.abs() > 1e-14).is_some_and(|c| *c < 0.0)
    };
    if flip {
        v.neg_mut();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generic_frame_is_orthonormal() {
        for d in 1..=4 {
            let q = generic_frame(d);
            let e = (q.transpose() * &q - DMatrix::identity(d, d)).norm();
            assert!(e < 1e-12);
        }
    }

    #[test]
    fn intersection_of_planes() {
        // span(e1, e2) ∩ span(e2, e3) = e2
        let a = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let b = DMatrix::from_column_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let (v, res) = intersect_line(&a, &b);
        assert!(res.abs() < 1e-12);
        assert!((v[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn angles() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b = DMatrix::from_column_slice(2, 1, &[s, s]);
        assert!((principal_angle(&a, &b) - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!((angle_to_subspace(&a, &b) - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }
}

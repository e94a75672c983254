use nalgebra::DMatrix;
use serde::Serialize;

use super::{cs_dim, cu_dim, flags_for, BundleField, Composite, OrbitFlags};
use crate::error::{invalid, DynError, Result};
use crate::linalg::{sigma_max, sigma_min};
use crate::system::SystemSpec;
use crate::torus::{quasi_random_ball, wrap01, TorusPoint};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitProducts {
    pub index: usize,
    pub base: TorusPoint,
    /// `values[n-1] = ‖Df^n|E^{cs,i}(x)‖ · ‖Df^{-n}|E^{cu,i+1}(f^n x)‖`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationReport {
    pub pair: usize,
    pub n_max: usize,
    pub lambda: f64,
    pub c: f64,
    pub pass: bool,
    /// Orbit attaining the constant `C`.
    pub worst_orbit: usize,
    pub products: Vec<OrbitProducts>,
}

/// One-step restriction `B(f^{j+1}x)ᵀ Df(f^j x) B(f^j x)` of `Df` to an invariant bundle.
pub(crate) fn forward_step(sys: &SystemSpec, fl: &OrbitFlags, j: i64, dim: usize) -> DMatrix<f64> {
    fl.cs_basis(j + 1, dim).transpose() * sys.jacobian_raw(fl.point(j)) * fl.cs_basis(j, dim)
}

/// One-step restriction `B(f^j x)ᵀ Df^{-1}(f^{j+1}x) B(f^{j+1}x)` of `Df^{-1}` to a cu bundle.
pub(crate) fn backward_step(sys: &SystemSpec, fl: &OrbitFlags, j: i64, dim: usize) -> DMatrix<f64> {
    fl.cu_basis(j, dim).transpose()
        * sys.inverse_jacobian_raw(fl.point(j + 1))
        * fl.cu_basis(j + 1, dim)
}

/// Products `P_n` for `n = 1..=n_max` along the flags' window starting at `j = 0`.
pub(crate) fn pair_products(
    sys: &SystemSpec,
    fl: &OrbitFlags,
    dims: &[usize],
    i: usize,
    n_max: usize,
) -> Vec<f64> {
    let dcs = cs_dim(dims, i);
    let dcu = cu_dim(dims, i + 1);
    let mut fwd = DMatrix::identity(dcs, dcs);
    let mut bwd = DMatrix::identity(dcu, dcu);
    (0..n_max as i64)
        .map(|j| {
            fwd = forward_step(sys, fl, j, dcs) * &fwd;
            bwd = &bwd * backward_step(sys, fl, j, dcu);
            sigma_max(&fwd) * sigma_max(&bwd)
        })
        .collect()
}

/// Least-squares `λ` with `C = max(1, sup P_n / λ^n)` over all orbits.
fn fit(products: &[OrbitProducts]) -> (f64, f64, usize) {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut k = 0.0;
    for o in products {
        for (n, v) in o.values.iter().enumerate() {
            sx += (n + 1) as f64;
            sy += v.ln();
            k += 1.0;
        }
    }
    let (mx, my) = (sx / k, sy / k);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for o in products {
        for (n, v) in o.values.iter().enumerate() {
            let dx = (n + 1) as f64 - mx;
            sxx += dx * dx;
            sxy += dx * (v.ln() - my);
        }
    }
    let slope = if sxx > 0.0 {
        sxy / sxx
    } else {
        products[0].values[0].ln()
    };
    let lambda = slope.exp();
    let mut c = 1.0f64;
    let mut worst = 0;
    for o in products {
        for (n, v) in o.values.iter().enumerate() {
            let r = v / lambda.powi(n as i32 + 1);
            if r > c {
                c = r;
                worst = o.index;
            }
        }
    }
    (lambda, c, worst)
}

pub(crate) fn check_field(field: &BundleField) -> Result<()> {
    if !field.converged() {
        return Err(DynError::Precondition(format!(
            "bundle field not converged (invariance residual {:.3e})",
            field.invariance_residual
        )));
    }
    Ok(())
}

/// Domination reports for several pairs, sharing one flag computation per sample.
pub fn domination_reports(
    sys: &SystemSpec,
    field: &BundleField,
    pairs: &[usize],
    n_max: usize,
) -> Result<Vec<DominationReport>> {
    check_field(field)?;
    let k = field.central_count();
    if let Some(&i) = pairs.iter().find(|&&i| i > k) {
        return Err(invalid(
            "pair",
            format!("{i} exceeds the number of central factors {k}"),
        ));
    }
    if n_max == 0 {
        return Err(invalid("n_max", "must be at least 1"));
    }
    let idx: Vec<usize> = (0..field.samples.len()).collect();
    let per_sample = crate::par::par_map(&idx, |&p| -> Result<Vec<Vec<f64>>> {
        let x = field.samples[p].point.coords();
        let fl = flags_for(sys, x, &field.dims, &field.options, 0, n_max as i64)?;
        Ok(pairs
            .iter()
            .map(|&i| pair_products(sys, &fl, &field.dims, i, n_max))
            .collect())
    });
    let mut by_pair: Vec<Vec<OrbitProducts>> = vec![Vec::new(); pairs.len()];
    for (p, r) in per_sample.into_iter().enumerate() {
        for (slot, values) in r?.into_iter().enumerate() {
            by_pair[slot].push(OrbitProducts {
                index: p,
                base: field.samples[p].point.clone(),
                values,
            });
        }
    }
    Ok(pairs
        .iter()
        .zip(by_pair)
        .map(|(&i, products)| {
            let (lambda, c, worst_orbit) = fit(&products);
            DominationReport {
                pair: i,
                n_max,
                lambda,
                c,
                pass: lambda < 1.0 - 1e-9,
                worst_orbit,
                products,
            }
        })
        .collect())
}

/// Products `‖Df^n|E^{cs,i}‖·‖Df^{-n}|E^{cu,i+1}‖` along each sample orbit with the fitted
/// `C·λ^n` bound.
pub fn verify_domination(
    sys: &SystemSpec,
    field: &BundleField,
    i: usize,
    n_max: usize,
) -> Result<DominationReport> {
    Ok(domination_reports(sys, field, &[i], n_max)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeReport {
    pub selector: Composite,
    pub radius: f64,
    /// Radius of the neighbourhood where the splitting is extended as locally constant.
    pub neighborhood: f64,
    pub evaluations: usize,
    /// Worst `a'/a` over all evaluations.
    pub worst_factor: f64,
    pub worst_point: TorusPoint,
    pub certified: bool,
}

/// Cone axis `F` and complement `G` for a selector, or an error for the full space.
fn cone_parts(field: &BundleField, sel: Composite) -> Result<(Composite, Composite)> {
    let k = field.central_count();
    match sel {
        Composite::Cu(i) if (1..=k + 1).contains(&i) => Ok((sel, Composite::Cs(i - 1))),
        Composite::Cs(i) if i <= k => Ok((sel, Composite::Cu(i + 1))),
        _ => Err(invalid(
            "selector",
            "cone axis must be a proper composite bundle",
        )),
    }
}

/// Worst slope ratio for a map `m` written in `[F | G]` coordinates at both ends.
fn slope_factor(m: &DMatrix<f64>, p: usize, a: f64) -> f64 {
    let q = m.nrows() - p;
    let ff = m.view((0, 0), (p, p)).into_owned();
    let fg = m.view((0, p), (p, q)).into_owned();
    let gf = m.view((p, 0), (q, p)).into_owned();
    let gg = m.view((p, p), (q, q)).into_owned();
    let den = sigma_min(&ff) - a * sigma_max(&fg);
    if den <= 0.0 {
        return f64::INFINITY;
    }
    (sigma_max(&gf) + a * sigma_max(&gg)) / den / a
}

fn frame(field: &BundleField, fl: &OrbitFlags, j: i64, f: Composite, g: Composite) -> DMatrix<f64> {
    let bf = fl.composite(j, &field.dims, f);
    let bg = fl.composite(j, &field.dims, g);
    let mut m = DMatrix::zeros(bf.nrows(), bf.ncols() + bg.ncols());
    m.columns_mut(0, bf.ncols()).copy_from(&bf);
    m.columns_mut(bf.ncols(), bg.ncols()).copy_from(&bg);
    m
}

/// `Df` (cu cones) or `Df^{-1}` (cs cones) maps the cone of radius `a` about the selected
/// bundle into a cone of radius `a'`; reports the worst `a'/a` over the samples.
pub fn cone_invariance(
    sys: &SystemSpec,
    field: &BundleField,
    sel: Composite,
    radius: f64,
) -> Result<ConeReport> {
    cone_invariance_near(sys, field, sel, radius, 0.0, 0)
}

/// As [`cone_invariance`], also at `per_point` points within `neighborhood` of each
/// sample, with the splitting extended as locally constant.
pub fn cone_invariance_near(
    sys: &SystemSpec,
    field: &BundleField,
    sel: Composite,
    radius: f64,
    neighborhood: f64,
    per_point: usize,
) -> Result<ConeReport> {
    if !(radius > 0.0 && radius < 1.0) {
        return Err(invalid("radius", "must lie in (0, 1)"));
    }
    if neighborhood < 0.0 {
        return Err(invalid("neighborhood", "must be non-negative"));
    }
    let (f, g) = cone_parts(field, sel)?;
    let d = field.dim();
    let mut offsets = vec![vec![0.0; d]];
    if neighborhood > 0.0 {
        offsets.extend(quasi_random_ball(d, per_point, neighborhood));
    }
    let p = match f {
        Composite::Cs(i) => cs_dim(&field.dims, i),
        Composite::Cu(i) => cu_dim(&field.dims, i),
    };
    let idx: Vec<usize> = (0..field.samples.len()).collect();
    let rows = crate::par::par_map(&idx, |&s| -> Result<(f64, Vec<f64>)> {
        let x = field.samples[s].point.coords();
        let fl = flags_for(sys, x, &field.dims, &field.options, 0, 1)?;
        let at0 = frame(field, &fl, 0, f, g);
        let at1 = frame(field, &fl, 1, f, g);
        let (src, dst, from) = match sel {
            Composite::Cu(_) => (&at0, &at1, fl.point(0)),
            Composite::Cs(_) => (&at1, &at0, fl.point(1)),
        };
        let dst_inv = dst
            .clone()
            .try_inverse()
            .ok_or_else(|| DynError::Precondition("degenerate splitting frame".into()))?;
        let mut worst = (f64::NEG_INFINITY, from.to_vec());
        for off in &offsets {
            let y: Vec<f64> = from.iter().zip(off).map(|(a, b)| wrap01(a + b)).collect();
            let jac = match sel {
                Composite::Cu(_) => sys.jacobian_raw(&y),
                Composite::Cs(_) => sys.inverse_jacobian_raw(&y),
            };
            let m = &dst_inv * jac * src;
            let r = slope_factor(&m, p, radius);
            if r > worst.0 {
                worst = (r, y);
            }
        }
        Ok(worst)
    });
    let mut worst = (f64::NEG_INFINITY, Vec::new());
    for r in rows {
        let r = r?;
        if r.0 > worst.0 {
            worst = r;
        }
    }
    Ok(ConeReport {
        selector: sel,
        radius,
        neighborhood,
        evaluations: field.samples.len() * offsets.len(),
        worst_factor: worst.0,
        worst_point: TorusPoint::new(worst.1),
        certified: worst.0 < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splitting::{compute_bundles, compute_bundles_with, BundleOptions};
    use crate::system::{cat2, cat3, cat3skew, default_alpha, identity2, DEFAULT_KAPPA};
    use crate::torus::quasi_random_points;

    const RATIO: f64 = 0.145_898_033_750_315_4; // ((3-√5)/2)²
    const INV_PHI2: f64 = 0.381_966_011_250_105_1; // (3-√5)/2

    fn identity_field() -> BundleField {
        let mut opts = BundleOptions::new(5);
        opts.gap_tolerance = 0.0;
        compute_bundles_with(&identity2(), &quasi_random_points(2, 5, 0), &[1, 1], &opts).unwrap()
    }

    #[test]
    fn cat2_products_are_exact_powers() {
        let sys = cat2();
        let f = compute_bundles(&sys, &quasi_random_points(2, 8, 0), &[1, 1], 10).unwrap();
        let r = verify_domination(&sys, &f, 0, 15).unwrap();
        assert!((r.lambda - RATIO).abs() / RATIO < 1e-6);
        assert!((r.c - 1.0).abs() < 1e-6);
        assert!(r.pass);
        for o in &r.products {
            for (n, v) in o.values.iter().enumerate() {
                assert!((v / RATIO.powi(n as i32 + 1) - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cat3_pairs() {
        let sys = cat3(default_alpha());
        let f = compute_bundles(&sys, &quasi_random_points(3, 8, 0), &[1, 1, 1], 30).unwrap();
        for i in 0..2 {
            let r = verify_domination(&sys, &f, i, 20).unwrap();
            assert!(
                (r.lambda - INV_PHI2).abs() / INV_PHI2 < 0.01,
                "{i}: {}",
                r.lambda
            );
        }
        assert!(verify_domination(&sys, &f, 2, 20).is_err());
    }

    #[test]
    fn identity_is_not_dominated() {
        let f = identity_field();
        let r = verify_domination(&identity2(), &f, 0, 10).unwrap();
        assert!(!r.pass);
        assert!((r.lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn products_are_submultiplicative() {
        let sys = cat3skew(default_alpha(), DEFAULT_KAPPA);
        let f = compute_bundles(&sys, &quasi_random_points(3, 4, 5), &[1, 1, 1], 40).unwrap();
        for s in &f.samples {
            let fl = flags_for(&sys, s.point.coords(), &f.dims, &f.options, 0, 12).unwrap();
            let whole = pair_products(&sys, &fl, &f.dims, 1, 12);
            for n in 1..12usize {
                let m = 12 - n;
                let shifted = flags_for(
                    &sys,
                    &sys.iterate(s.point.coords(), n as i64),
                    &f.dims,
                    &f.options,
                    0,
                    m as i64,
                )
                .unwrap();
                let tail = pair_products(&sys, &shifted, &f.dims, 1, m);
                assert!(whole[11] <= whole[n - 1] * tail[m - 1] * (1.0 + 1e-9) + 1e-12);
            }
        }
    }

    #[test]
    fn cat2_cone_factor() {
        let sys = cat2();
        let f = compute_bundles(&sys, &quasi_random_points(2, 20, 0), &[1, 1], 10).unwrap();
        let r = cone_invariance(&sys, &f, Composite::Cu(1), 0.5).unwrap();
        assert!(r.certified);
        assert!((r.worst_factor - RATIO).abs() < 1e-8);
        assert!(r.worst_factor <= INV_PHI2);
        let s = cone_invariance(&sys, &f, Composite::Cs(0), 0.5).unwrap();
        assert!((s.worst_factor - RATIO).abs() < 1e-8);
        assert!(cone_invariance(&sys, &f, Composite::Cu(1), 1.0).is_err());
        assert!(cone_invariance(&sys, &f, Composite::Cu(0), 0.5).is_err());
    }

    #[test]
    fn identity_cone_is_not_certified() {
        let f = identity_field();
        let r = cone_invariance(&identity2(), &f, Composite::Cu(1), 0.5).unwrap();
        assert!((r.worst_factor - 1.0).abs() < 1e-9);
        assert!(!r.certified);
    }

    #[test]
    fn cone_certification_is_monotone_in_radius() {
        let sys = cat3skew(default_alpha(), DEFAULT_KAPPA);
        let f = compute_bundles(&sys, &quasi_random_points(3, 30, 2), &[1, 1, 1], 40).unwrap();
        let big = cone_invariance(&sys, &f, Composite::Cu(2), 0.2).unwrap();
        assert!(big.certified);
        for a in [0.1, 0.05, 0.01] {
            let small = cone_invariance(&sys, &f, Composite::Cu(2), a).unwrap();
            assert!(small.worst_factor <= big.worst_factor + 1e-9);
        }
    }
}

//! Finite-time invariant bundles, domination constants, cone fields and adapted metrics.

mod adapted;
pub(crate) mod domination;

pub use adapted::{
    build_adapted_metric, uniformity_bounds, AdaptedMetric, PairWeights, UniformityReport,
};
pub use domination::{
    cone_invariance, cone_invariance_near, domination_reports, verify_domination, ConeReport,
    DominationReport, OrbitProducts,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, DynError, Result};
use crate::linalg::{generic_frame, intersect_line, orient, principal_angle, qr_positive};
use crate::system::SystemSpec;
use crate::torus::TorusPoint;

/// Minimal gap (nats per iterate) between adjacent finite-time rates.
pub const GAP_TOLERANCE: f64 = 0.05;
/// Horizon cap for the adaptive flag iteration.
pub const MAX_HORIZON: usize = 1000;
const PILOT_STEPS: usize = 24;
const CONVERGED_RESIDUAL: f64 = 1e-6;

/// Composite bundle selector: `Cs(i) = E^s ⊕ E_1 ⊕ … ⊕ E_i`, `Cu(i) = E_i ⊕ … ⊕ E_k ⊕ E^u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Composite {
    Cs(usize),
    Cu(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleOptions {
    pub horizon: usize,
    pub gap_tolerance: f64,
    pub max_horizon: usize,
}

impl BundleOptions {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            gap_tolerance: GAP_TOLERANCE,
            max_horizon: MAX_HORIZON,
        }
    }
}

/// Bundles at one sample point.
#[derive(Debug, Clone)]
pub struct SampleBundles {
    pub point: TorusPoint,
    /// Flag horizon actually used at this point.
    pub horizon: usize,
    /// Finite-time rates per factor (mean of its exponents), from stable to unstable.
    pub rates: Vec<f64>,
    /// Orthonormal basis per factor.
    pub factors: Vec<DMatrix<f64>>,
    cs_flag: DMatrix<f64>,
    cu_flag: DMatrix<f64>,
}

/// Sampled splitting `E^s ⊕ E_1 ⊕ … ⊕ E_k ⊕ E^u`.
#[derive(Debug, Clone)]
pub struct BundleField {
    pub dims: Vec<usize>,
    pub options: BundleOptions,
    pub samples: Vec<SampleBundles>,
    /// Largest angle between `Df(E_j(x))` and `E_j(f x)` over samples and factors.
    pub invariance_residual: f64,
    /// Largest `1 - cos` of the flag intersections defining the central factors.
    pub intersection_residual: f64,
}

impl BundleField {
    pub fn dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Number `k` of one-dimensional central factors.
    pub fn central_count(&self) -> usize {
        self.dims.len() - 2
    }

    pub fn converged(&self) -> bool {
        self.invariance_residual < CONVERGED_RESIDUAL
    }

    /// Orthonormal basis of a composite bundle at sample `p`.
    pub fn composite(&self, p: usize, sel: Composite) -> DMatrix<f64> {
        let s = &self.samples[p];
        match sel {
            Composite::Cs(i) => s.cs_flag.columns(0, cs_dim(&self.dims, i)).into_owned(),
            Composite::Cu(i) => s.cu_flag.columns(0, cu_dim(&self.dims, i)).into_owned(),
        }
    }

    pub fn factor(&self, p: usize, j: usize) -> &DMatrix<f64> {
        &self.samples[p].factors[j]
    }

    /// Mean finite-time rate of each factor over all samples.
    pub fn mean_rates(&self) -> Vec<f64> {
        let n = self.samples.len() as f64;
        (0..self.dims.len())
            .map(|j| self.samples.iter().map(|s| s.rates[j]).sum::<f64>() / n)
            .collect()
    }

    pub fn points(&self) -> Vec<TorusPoint> {
        self.samples.iter().map(|s| s.point.clone()).collect()
    }
}

pub fn factor_name(dims: &[usize], j: usize) -> String {
    if j == 0 {
        "E^s".into()
    } else if j == dims.len() - 1 {
        "E^u".into()
    } else {
        format!("E_{j}")
    }
}

pub(crate) fn cs_dim(dims: &[usize], i: usize) -> usize {
    dims[..=i].iter().sum()
}

pub(crate) fn cu_dim(dims: &[usize], i: usize) -> usize {
    dims[i..].iter().sum()
}

fn validate_dims(sys: &SystemSpec, dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(invalid(
            "dims",
            "need at least a stable and an unstable factor",
        ));
    }
    if dims.contains(&0) {
        return Err(invalid("dims", "factor dimensions must be positive"));
    }
    if dims[1..dims.len() - 1].iter().any(|&k| k != 1) {
        return Err(invalid("dims", "central factors must be one-dimensional"));
    }
    let total: usize = dims.iter().sum();
    if total != sys.dim {
        return Err(DynError::DimensionMismatch {
            expected: sys.dim,
            got: total,
        });
    }
    Ok(())
}

/// Flags along the orbit window `f^a(x), …, f^b(x)`.
pub(crate) struct OrbitFlags {
    pub a: i64,
    pub points: Vec<Vec<f64>>,
    /// Columns ordered from most contracting; the first `j` span `E^{cs}` of dimension `j`.
    pub cs: Vec<DMatrix<f64>>,
    /// Columns ordered from most expanding; the first `j` span `E^{cu}` of dimension `j`.
    pub cu: Vec<DMatrix<f64>>,
    /// Finite-time exponents in decreasing order.
    pub exponents: Vec<f64>,
    pub horizon: usize,
}

impl OrbitFlags {
    pub fn point(&self, j: i64) -> &[f64] {
        &self.points[(j - self.a) as usize]
    }

    pub fn cs_basis(&self, j: i64, dim: usize) -> DMatrix<f64> {
        self.cs[(j - self.a) as usize].columns(0, dim).into_owned()
    }

    pub fn cu_basis(&self, j: i64, dim: usize) -> DMatrix<f64> {
        self.cu[(j - self.a) as usize].columns(0, dim).into_owned()
    }

    pub fn composite(&self, j: i64, dims: &[usize], sel: Composite) -> DMatrix<f64> {
        match sel {
            Composite::Cs(i) => self.cs_basis(j, cs_dim(dims, i)),
            Composite::Cu(i) => self.cu_basis(j, cu_dim(dims, i)),
        }
    }

    /// Factor bases at `f^j(x)`, with intersection residuals of the central ones.
    pub fn factors(&self, j: i64, dims: &[usize]) -> (Vec<DMatrix<f64>>, f64) {
        let last = dims.len() - 1;
        let mut out = Vec::with_capacity(dims.len());
        let mut worst = 0.0f64;
        for f in 0..=last {
            let mut b = if f == 0 {
                self.cs_basis(j, dims[0])
            } else if f == last {
                self.cu_basis(j, dims[last])
            } else {
                let (v, res) = intersect_line(
                    &self.cs_basis(j, cs_dim(dims, f)),
                    &self.cu_basis(j, cu_dim(dims, f)),
                );
                worst = worst.max(res);
                v
            };
            if b.ncols() == 1 {
                orient(&mut b);
            }
            out.push(b);
        }
        (out, worst)
    }

    /// Per-factor rates from the decreasing exponents.
    pub fn factor_rates(&self, dims: &[usize]) -> Vec<f64> {
        let mut asc = self.exponents.clone();
        asc.reverse();
        let mut start = 0;
        dims.iter()
            .map(|&k| {
                let r = asc[start..start + k].iter().sum::<f64>() / k as f64;
                start += k;
                r
            })
            .collect()
    }

    /// Fails when two adjacent factors are not separated by `tol`.
    pub fn check_gaps(&self, dims: &[usize], tol: f64) -> Result<()> {
        let mut asc = self.exponents.clone();
        asc.reverse();
        let mut boundary = 0;
        for f in 0..dims.len() - 1 {
            boundary += dims[f];
            let gap = asc[boundary] - asc[boundary - 1];
            if gap < tol {
                return Err(DynError::NoSplitting {
                    lower: factor_name(dims, f),
                    upper: factor_name(dims, f + 1),
                    gap,
                    tolerance: tol,
                });
            }
        }
        Ok(())
    }
}

fn orbit_points(sys: &SystemSpec, x: &[f64], lo: i64, hi: i64) -> Vec<Vec<f64>> {
    let d = x.len();
    let mut scratch = vec![0.0; d];
    let mut back = Vec::new();
    let mut cur = x.to_vec();
    for _ in lo..0 {
        sys.inverse_in_place(&mut cur, &mut scratch);
        back.push(cur.clone());
    }
    back.reverse();
    let mut out = back;
    let mut cur = x.to_vec();
    out.push(cur.clone());
    for _ in 0..hi.max(0) {
        sys.forward_in_place(&mut cur, &mut scratch);
        out.push(cur.clone());
    }
    out
}

/// Finite-time exponents from pushing a generic frame `steps` times starting at `x`.
fn pilot_exponents(sys: &SystemSpec, x: &[f64], steps: usize) -> Vec<f64> {
    let d = x.len();
    let pts = orbit_points(sys, x, 0, steps as i64);
    let mut q = generic_frame(d);
    let mut sums = vec![0.0; d];
    for p in pts.iter().take(steps) {
        let (nq, logs) = qr_positive(sys.jacobian_raw(p) * q);
        q = nq;
        for (s, l) in sums.iter_mut().zip(logs) {
            *s += l;
        }
    }
    sums.iter().map(|s| s / steps as f64).collect()
}

fn min_gap(exponents: &[f64], dims: &[usize]) -> f64 {
    let mut asc = exponents.to_vec();
    asc.reverse();
    let mut boundary = 0;
    let mut g = f64::INFINITY;
    for &k in &dims[..dims.len() - 1] {
        boundary += k;
        g = g.min(asc[boundary] - asc[boundary - 1]);
    }
    g
}

/// Horizon used at `x`: at least `requested`, long enough for flags to converge to
/// machine precision at the observed gap (`e^{-gap·T} ≈ 1e-14`).
pub(crate) fn effective_horizon(
    sys: &SystemSpec,
    x: &[f64],
    dims: &[usize],
    opts: &BundleOptions,
) -> usize {
    let ex = pilot_exponents(sys, x, PILOT_STEPS.max(opts.horizon.min(opts.max_horizon)));
    let gap = min_gap(&ex, dims);
    let floor = opts.horizon.max(PILOT_STEPS);
    if gap >= opts.gap_tolerance.max(1e-3) {
        floor
            .max((33.0 / gap).ceil() as usize)
            .min(opts.max_horizon.max(opts.horizon))
    } else {
        floor
    }
}

/// Flags at `f^j(x)` for `a ≤ j ≤ b` from a forward push over `[a - T, b]` and a
/// backward pull over `[a, b + T]`.
pub(crate) fn orbit_flags(sys: &SystemSpec, x: &[f64], a: i64, b: i64, t: usize) -> OrbitFlags {
    let d = x.len();
    let ti = t as i64;
    let lo = a - ti;
    let hi = b + ti;
    let pts = orbit_points(sys, x, lo.min(0), hi.max(0));
    let base = lo.min(0);
    let at = |j: i64| &pts[(j - base) as usize];

    let mut q = generic_frame(d);
    let mut sums = vec![0.0; d];
    let burn_start = lo + ti / 2;
    let mut cu = Vec::with_capacity((b - a + 1) as usize);
    for j in lo..b {
        if j >= a {
            cu.push(q.clone());
        }
        let (nq, logs) = qr_positive(sys.jacobian_raw(at(j)) * q);
        q = nq;
        if j >= burn_start && j < a {
            for (s, l) in sums.iter_mut().zip(logs) {
                *s += l;
            }
        }
    }
    cu.push(q);
    let counted = (a - burn_start).max(1) as f64;
    let exponents = sums.iter().map(|s| s / counted).collect();

    // reversed seed so that degenerate (isometric) cocycles still give complementary flags
    let g = generic_frame(d);
    let mut q = DMatrix::from_fn(d, d, |r, c| g[(r, d - 1 - c)]);
    let mut cs_rev = Vec::with_capacity((b - a + 1) as usize);
    for j in ((a + 1)..=hi).rev() {
        if j <= b {
            cs_rev.push(q.clone());
        }
        q = qr_positive(sys.inverse_jacobian_raw(at(j)) * q).0;
    }
    cs_rev.push(q);
    cs_rev.reverse();

    OrbitFlags {
        a,
        points: (a..=b).map(|j| at(j).clone()).collect(),
        cs: cs_rev,
        cu,
        exponents,
        horizon: t,
    }
}

/// Flags along `[a, b]` at `x` with the field's horizon rule; checks the rate gaps.
pub(crate) fn flags_for(
    sys: &SystemSpec,
    x: &[f64],
    dims: &[usize],
    opts: &BundleOptions,
    a: i64,
    b: i64,
) -> Result<OrbitFlags> {
    let t = effective_horizon(sys, x, dims, opts);
    let fl = orbit_flags(sys, x, a, b, t);
    fl.check_gaps(dims, opts.gap_tolerance)?;
    Ok(fl)
}

/// Finite-time splitting at each sample point with the default gap tolerance.
pub fn compute_bundles(
    sys: &SystemSpec,
    points: &[TorusPoint],
    dims: &[usize],
    horizon: usize,
) -> Result<BundleField> {
    compute_bundles_with(sys, points, dims, &BundleOptions::new(horizon))
}

pub fn compute_bundles_with(
    sys: &SystemSpec,
    points: &[TorusPoint],
    dims: &[usize],
    opts: &BundleOptions,
) -> Result<BundleField> {
    validate_dims(sys, dims)?;
    if opts.horizon == 0 {
        return Err(invalid("horizon", "must be at least 1"));
    }
    if points.is_empty() {
        return Err(invalid("sample_points", "must be non-empty"));
    }
    if let Some(p) = points.iter().find(|p| p.dim() != sys.dim) {
        return Err(DynError::DimensionMismatch {
            expected: sys.dim,
            got: p.dim(),
        });
    }
    let results = crate::par::par_map(points, |p| -> Result<(SampleBundles, f64, f64)> {
        let fl = flags_for(sys, p.coords(), dims, opts, 0, 1)?;
        let (f0, r0) = fl.factors(0, dims);
        let (f1, r1) = fl.factors(1, dims);
        let jac = sys.jacobian_raw(fl.point(0));
        let inv = f0
            .iter()
            .zip(&f1)
            .map(|(b0, b1)| principal_angle(&qr_positive(&jac * b0).0, b1))
            .fold(0.0, f64::max);
        let sample = SampleBundles {
            point: p.clone(),
            horizon: fl.horizon,
            rates: fl.factor_rates(dims),
            factors: f0,
            cs_flag: fl.cs[0].clone(),
            cu_flag: fl.cu[0].clone(),
        };
        Ok((sample, inv, r0.max(r1)))
    });
    let mut samples = Vec::with_capacity(points.len());
    let mut inv = 0.0f64;
    let mut inter = 0.0f64;
    for r in results {
        let (s, i, x) = r?;
        samples.push(s);
        inv = inv.max(i);
        inter = inter.max(x);
    }
    Ok(BundleField {
        dims: dims.to_vec(),
        options: opts.clone(),
        samples,
        invariance_residual: inv,
        intersection_residual: inter,
    })
}

/// Largest principal angle between computed factors and the analytic splitting.
pub fn analytic_angle(sys: &SystemSpec, field: &BundleField) -> Result<f64> {
    let exact = sys
        .analytic_splitting
        .as_ref()
        .ok_or_else(|| DynError::Unsupported {
            system: sys.name.clone(),
            reason: "no analytic splitting".into(),
        })?;
    let mats: Vec<DMatrix<f64>> = grouped(exact, &field.dims, sys.dim)?;
    let mut worst = 0.0f64;
    for s in &field.samples {
        for (b, e) in s.factors.iter().zip(&mats) {
            worst = worst.max(principal_angle(b, e));
        }
    }
    Ok(worst)
}

/// Analytic factors regrouped to match `dims` (factors listed by increasing rate).
fn grouped(
    exact: &[crate::system::InvariantFactor],
    dims: &[usize],
    d: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let cols: Vec<Vec<f64>> = exact.iter().flat_map(|f| f.basis.iter().cloned()).collect();
    let mut out = Vec::new();
    let mut start = 0;
    for &k in dims {
        if start + k > cols.len() {
            return Err(invalid("dims", "do not match the analytic splitting"));
        }
        out.push(DMatrix::from_fn(d, k, |r, c| cols[start + c][r]));
        start += k;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{cat2, cat3, cat3skew, cat4, default_alpha, identity2, DEFAULT_KAPPA};
    use crate::torus::quasi_random_points;

    #[test]
    fn cat2_matches_eigendirections_for_every_horizon() {
        let sys = cat2();
        let pts = quasi_random_points(2, 20, 1);
        for t in [1, 2, 5, 30] {
            let f = compute_bundles(&sys, &pts, &[1, 1], t).unwrap();
            assert!(analytic_angle(&sys, &f).unwrap() < 1e-8, "T={t}");
            assert!(f.converged());
        }
    }

    #[test]
    fn cat3_product_factors() {
        let sys = cat3(default_alpha());
        let pts = quasi_random_points(3, 20, 2);
        let f = compute_bundles(&sys, &pts, &[1, 1, 1], 30).unwrap();
        assert!(analytic_angle(&sys, &f).unwrap() < 1e-8);
        for s in &f.samples {
            let c = &s.factors[1];
            assert!((c[(2, 0)] - 1.0).abs() < 1e-10);
        }
        let r = f.mean_rates();
        assert!(
            (r[0] + 0.9624236501).abs() < 0.05
                && r[1].abs() < 0.05
                && (r[2] - 0.9624236501).abs() < 0.05
        );
    }

    #[test]
    fn cat3skew_center_is_near_fiber() {
        let sys = cat3skew(default_alpha(), DEFAULT_KAPPA);
        let pts = quasi_random_points(3, 50, 3);
        let f = compute_bundles(&sys, &pts, &[1, 1, 1], 60).unwrap();
        assert!(f.invariance_residual < 1e-6, "{}", f.invariance_residual);
        let e3 = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        for s in &f.samples {
            assert!(principal_angle(&s.factors[1], &e3) < 0.05);
        }
        // doubling the horizon leaves the field unchanged
        let g = compute_bundles(&sys, &pts, &[1, 1, 1], 120).unwrap();
        for (a, b) in f.samples.iter().zip(&g.samples) {
            for (x, y) in a.factors.iter().zip(&b.factors) {
                let ang = principal_angle(x, y);
                assert!(ang < 1e-8, "{ang}");
            }
        }
    }

    #[test]
    fn cat4_two_dimensional_bundles() {
        let sys = cat4();
        let pts = quasi_random_points(4, 10, 4);
        let f = compute_bundles(&sys, &pts, &[2, 2], 10).unwrap();
        assert!(analytic_angle(&sys, &f).unwrap() < 1e-8);
        let b = f.composite(0, Composite::Cu(1));
        assert_eq!(b.ncols(), 2);
        assert!((b.transpose() * &b - DMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn identity_has_no_splitting() {
        let sys = identity2();
        let pts = quasi_random_points(2, 3, 0);
        match compute_bundles(&sys, &pts, &[1, 1], 10) {
            Err(DynError::NoSplitting { lower, upper, .. }) => {
                assert_eq!((lower.as_str(), upper.as_str()), ("E^s", "E^u"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cat3_with_two_factors_names_the_pair() {
        // dims (1,2): rates -0.96 | 0, 0.96 is fine; (2,1) groups 0 with -0.96, also fine;
        // (1,1,1) on cat2 is a dimension error
        let sys = cat3(default_alpha());
        let pts = quasi_random_points(3, 2, 0);
        assert!(compute_bundles(&sys, &pts, &[1, 2], 10).is_ok());
        assert!(matches!(
            compute_bundles(&cat2(), &pts[..0], &[1, 1], 10),
            Err(DynError::InvalidInput { .. })
        ));
        assert!(compute_bundles(&sys, &pts, &[1, 1], 10).is_err());
        assert!(compute_bundles(&sys, &pts, &[1, 1, 1], 0).is_err());
    }
}

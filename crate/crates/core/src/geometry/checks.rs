use nalgebra::DMatrix;
use serde::Serialize;

use super::{integrate_central_curve, iterate_lengths, CentralCurve, RHO_CAP};
use crate::entropy::{gamma_set, small_set_rate, SetCounts, ZERO_RATE_THRESHOLD};
use crate::error::{invalid, DynError, Result};
use crate::linalg::orthonormalize;
use crate::splitting::BundleField;
use crate::system::SystemSpec;
use crate::torus::{torus_distance_raw, wrap01, TorusPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentStatus {
    Pass,
    Fail,
    HypothesisNotMet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentReport {
    pub status: SegmentStatus,
    pub delta: f64,
    pub horizon: usize,
    pub length: f64,
    pub length_ok: bool,
    /// Node with the largest orbit distance to the base orbit, and that distance.
    pub worst_node: usize,
    pub worst_iterate: i64,
    pub worst_distance: f64,
}

/// Largest `d(f^n z, f^n x)` over `|n| ≤ horizon`, with the iterate attaining it.
fn orbit_gap(sys: &SystemSpec, x: &[f64], z: &[f64], horizon: usize) -> (f64, i64) {
    let d = x.len();
    let mut best = (torus_distance_raw(x, z), 0i64);
    let mut s = vec![0.0; d];
    for backward in [false, true] {
        let mut a = x.to_vec();
        let mut b = z.to_vec();
        for n in 1..=horizon as i64 {
            if backward {
                sys.inverse_in_place(&mut a, &mut s);
                sys.inverse_in_place(&mut b, &mut s);
            } else {
                sys.forward_in_place(&mut a, &mut s);
                sys.forward_in_place(&mut b, &mut s);
            }
            let dist = torus_distance_raw(&a, &b);
            if dist > best.0 {
                best = (dist, if backward { -n } else { n });
            }
        }
    }
    best
}

fn wrapped(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&c| wrap01(c)).collect()
}

/// For a curve from `x = base` whose end nodes lie in `Γ_δ(x)`: checks `ℓ(γ) < 2δ` and
/// that every node stays in `Γ_{2δ}(x)` for `|n| ≤ horizon`.
pub fn check_central_segment_in_gamma(
    sys: &SystemSpec,
    curve: &CentralCurve,
    delta: f64,
    horizon: usize,
) -> Result<SegmentReport> {
    if !(delta > 0.0) {
        return Err(invalid("delta", "must be positive"));
    }
    let x = curve.base.coords();
    let length = curve.length();
    let mut report = SegmentReport {
        status: SegmentStatus::Pass,
        delta,
        horizon,
        length,
        length_ok: length < 2.0 * delta,
        worst_node: curve.center_index(),
        worst_iterate: 0,
        worst_distance: 0.0,
    };
    if curve.len() <= 1 {
        report.length_ok = true;
        return Ok(report);
    }
    for end in [&curve.nodes[0], &curve.nodes[curve.len() - 1]] {
        if orbit_gap(sys, x, &wrapped(end), horizon).0 > delta {
            report.status = SegmentStatus::HypothesisNotMet;
            return Ok(report);
        }
    }
    for (k, node) in curve.nodes.iter().enumerate() {
        let (g, n) = orbit_gap(sys, x, &wrapped(node), horizon);
        if g > report.worst_distance {
            report.worst_distance = g;
            report.worst_node = k;
            report.worst_iterate = n;
        }
    }
    if !report.length_ok || report.worst_distance > 2.0 * delta {
        report.status = SegmentStatus::Fail;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveVerdict {
    ZeroEntropy,
    PositiveRate,
    /// Some iterate is longer than the cap, so bounded-length reasoning does not apply.
    Inapplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveEntropyReport {
    pub verdict: CurveVerdict,
    pub length_cap: f64,
    /// `ℓ(f^n γ)` for `n = 0..=n_max` (truncated at the first violation).
    pub lengths: Vec<f64>,
    pub rate: Option<f64>,
    pub counts: Option<SetCounts>,
    pub threshold: f64,
    pub eps_inner: f64,
}

/// Growth rate of the node set of a curve whose iterates stay shorter than `length_cap`.
pub fn curve_entropy_zero_check(
    sys: &SystemSpec,
    curve: &CentralCurve,
    eps_inner: f64,
    n_max: usize,
    length_cap: f64,
) -> Result<CurveEntropyReport> {
    if !(eps_inner > 0.0) {
        return Err(invalid("eps_inner", "must be positive"));
    }
    if n_max < 3 {
        return Err(invalid("n_max", "need at least 3 horizons"));
    }
    let mut lengths = iterate_lengths(sys, curve, n_max);
    let mut report = CurveEntropyReport {
        verdict: CurveVerdict::Inapplicable,
        length_cap,
        lengths: Vec::new(),
        rate: None,
        counts: None,
        threshold: ZERO_RATE_THRESHOLD,
        eps_inner,
    };
    if let Some(k) = lengths.iter().position(|&l| l > length_cap) {
        lengths.truncate(k + 1);
        report.lengths = lengths;
        return Ok(report);
    }
    report.lengths = lengths;
    let pts: Vec<Vec<f64>> = curve.nodes.iter().map(|n| wrapped(n)).collect();
    let (rate, counts) = small_set_rate(sys, &pts, n_max, eps_inner)?;
    report.rate = Some(rate);
    report.counts = Some(counts);
    report.verdict = if rate <= ZERO_RATE_THRESHOLD {
        CurveVerdict::ZeroEntropy
    } else {
        CurveVerdict::PositiveRate
    };
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GammaCase {
    /// Every member within one grid cell of the base point.
    Singleton,
    /// Every member within the tube around the central curve of this factor.
    Curve {
        factor: usize,
    },
    Neither,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaCurveOptions {
    pub tube_cells: f64,
    /// Curve step as a fraction of the grid resolution.
    pub curve_step_cells: f64,
}

impl Default for GammaCurveOptions {
    fn default() -> Self {
        Self {
            tube_cells: 2.0,
            curve_step_cells: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaCurveReport {
    pub base: TorusPoint,
    pub delta: f64,
    pub horizon: usize,
    pub grid_res: f64,
    pub members: usize,
    pub case: GammaCase,
    /// Largest member distance to the base (singleton) or to the curve (curve case).
    pub excess: f64,
    pub excess_cells: f64,
    pub offending: Option<TorusPoint>,
    /// Members on the transverse plaque through an interior curve point reduce to that
    /// point (linear systems only).
    pub corollary: Option<bool>,
    pub pass: bool,
    #[serde(skip)]
    pub curve: Option<CentralCurve>,
    #[serde(skip)]
    pub gamma_points: Vec<TorusPoint>,
}

/// Builds the bilateral `Γ_δ(x)` and tests that it is a single grid cell or lies in the
/// tube around a central curve through `x`.
pub fn verify_gamma_in_curve(
    sys: &SystemSpec,
    field: &BundleField,
    x: &TorusPoint,
    delta: f64,
    horizon: usize,
    grid_res: f64,
    opts: &GammaCurveOptions,
) -> Result<GammaCurveReport> {
    let g = gamma_set(sys, x, delta, horizon, grid_res, true)?;
    let cheb = |o: &Vec<f64>| o.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let single = g.offsets.iter().map(cheb).fold(0.0, f64::max);
    let mut report = GammaCurveReport {
        base: x.clone(),
        delta,
        horizon,
        grid_res,
        members: g.len(),
        case: GammaCase::Neither,
        excess: single,
        excess_cells: single / grid_res,
        offending: None,
        corollary: None,
        pass: false,
        curve: None,
        gamma_points: g.members.clone(),
    };
    if single <= grid_res * (1.0 + 1e-9) {
        report.case = GammaCase::Singleton;
        report.pass = true;
        return Ok(report);
    }
    let tube = opts.tube_cells * grid_res;
    let rho = (delta + tube).min(RHO_CAP);
    let mut best: Option<(f64, usize, CentralCurve)> = None;
    for i in 1..field.dims.len() - 1 {
        let curve =
            integrate_central_curve(sys, field, x, i, rho, opts.curve_step_cells * grid_res)?;
        let mut worst = (0.0f64, 0usize);
        for (k, o) in g.offsets.iter().enumerate() {
            let p: Vec<f64> = x.coords().iter().zip(o).map(|(a, b)| a + b).collect();
            let dd = curve.distance_to(&p);
            if dd > worst.0 {
                worst = (dd, k);
            }
        }
        if best.as_ref().is_none_or(|b| worst.0 < b.0) {
            best = Some((worst.0, worst.1, curve));
        }
    }
    let Some((excess, k, curve)) = best else {
        report.offending = g
            .members
            .iter()
            .zip(&g.offsets)
            .max_by(|a, b| cheb(a.1).total_cmp(&cheb(b.1)))
            .map(|(m, _)| m.clone());
        return Ok(report);
    };
    report.excess = excess;
    report.excess_cells = excess / grid_res;
    if excess <= tube * (1.0 + 1e-9) {
        report.case = GammaCase::Curve {
            factor: curve.factor,
        };
        report.pass = true;
        if sys.is_linear() {
            report.corollary = Some(corollary_check(
                sys, field, x, &g.offsets, &curve, grid_res,
            )?);
            report.pass = report.corollary == Some(true);
        }
    } else {
        report.offending = Some(g.members[k].clone());
    }
    report.curve = Some(curve);
    Ok(report)
}

/// Members within half a cell of the affine plaque transverse to the curve's factor,
/// through the interior node nearest arc length `δ/2`, must all be within two cells of it.
fn corollary_check(
    sys: &SystemSpec,
    field: &BundleField,
    x: &TorusPoint,
    offsets: &[Vec<f64>],
    curve: &CentralCurve,
    grid_res: f64,
) -> Result<bool> {
    let exact = sys
        .analytic_splitting
        .as_ref()
        .ok_or_else(|| DynError::Unsupported {
            system: sys.name.clone(),
            reason: "no explicit laminations".into(),
        })?;
    let cols: Vec<Vec<f64>> = exact.iter().flat_map(|f| f.basis.iter().cloned()).collect();
    let d = sys.dim;
    let i = curve.factor;
    let start: usize = field.dims[..i].iter().sum();
    let axis = DMatrix::from_fn(d, 1, |r, _| cols[start][r]);
    let transverse: Vec<usize> = (0..d).filter(|&c| c != start).collect();
    let plane = orthonormalize(DMatrix::from_fn(d, transverse.len(), |r, c| {
        cols[transverse[c]][r]
    }));
    let target = curve
        .arclen
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 - 0.25 * curve.rho)
                .abs()
                .total_cmp(&(b.1 - 0.25 * curve.rho).abs())
        })
        .map(|(k, _)| k)
        .unwrap_or(0);
    let z: Vec<f64> = curve.nodes[target]
        .iter()
        .zip(x.coords())
        .map(|(a, b)| a - b)
        .collect();
    // oblique projection along the plane onto the axis
    let mut basis = DMatrix::zeros(d, d);
    basis.columns_mut(0, 1).copy_from(&axis);
    basis.columns_mut(1, d - 1).copy_from(&plane);
    let inv = basis.try_inverse().ok_or(DynError::IllConditioned(0.0))?;
    for o in offsets {
        let diff = DMatrix::from_fn(d, 1, |r, _| o[r] - z[r]);
        let coef = &inv * &diff;
        if coef[(0, 0)].abs() <= 0.5 * grid_res && diff.norm() > 2.0 * grid_res {
            return Ok(false);
        }
    }
    Ok(true)
}

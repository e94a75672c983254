//! Bowen metrics, spanning and separated counts, growth-rate fits, Bowen balls and tail entropy.

mod gamma;
mod index;
mod tail;

pub use gamma::{gamma_set, GammaSet};
pub use tail::{tail_entropy, BaseRate, EpsilonRow, TailEntropyConfig, TailEntropyReport};

use serde::Serialize;

use crate::error::{invalid, DynError, Result};
use crate::system::SystemSpec;
use crate::torus::{torus_distance_raw, uniform_grid, TorusPoint};
use index::{CellGrid, DynamicIndex, OrbitTable, StaticIndex};

/// Default threshold (nats per iterate) below which a rate counts as zero.
pub const ZERO_RATE_THRESHOLD: f64 = 0.02;

/// `d_n(x, y) = max_{0 ≤ i < n} d(f^i x, f^i y)`.
pub fn dn_distance(sys: &SystemSpec, x: &TorusPoint, y: &TorusPoint, n: usize) -> Result<f64> {
    for p in [x, y] {
        if p.dim() != sys.dim {
            return Err(DynError::DimensionMismatch {
                expected: sys.dim,
                got: p.dim(),
            });
        }
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let mut a = x.coords().to_vec();
    let mut b = y.coords().to_vec();
    let mut s = vec![0.0; sys.dim];
    let mut best = 0.0f64;
    for i in 0..n {
        if i > 0 {
            sys.forward_in_place(&mut a, &mut s);
            sys.forward_in_place(&mut b, &mut s);
        }
        best = best.max(torus_distance_raw(&a, &b));
    }
    Ok(best)
}

/// Greedy maximal set with pairwise `d_n ≥ ε`, scanning in input order.
///
/// Such a set is also `(n, ε)`-spanning: every rejected point is within `d_n < ε`
/// of a kept one.
fn greedy_separated(table: &OrbitTable, n: usize, eps: f64) -> usize {
    let grid = CellGrid::new_for(table, eps, n);
    let eps_sq = eps * eps;
    let mut index = DynamicIndex::new();
    let mut buf = Vec::new();
    let mut kept = 0;
    for p in 0..table.count() {
        if !index.any_within(table, &grid, p, eps_sq, &mut buf) {
            index.insert(table, &grid, p, &mut buf);
            kept += 1;
        }
    }
    kept
}

/// Greedy cover: the first uncovered point `p` (input order) is covered by the last
/// point (input order) within `d_n < ε` of it, which then covers its own neighbourhood.
/// On a sorted one-dimensional grid this is the classical optimal interval cover.
fn greedy_cover(table: &OrbitTable, n: usize, eps: f64) -> usize {
    let grid = CellGrid::new_for(table, eps, n);
    let eps_sq = eps * eps;
    let index = StaticIndex::build(table, &grid);
    let mut covered = vec![false; table.count()];
    let mut buf = Vec::new();
    let mut nb = Vec::new();
    let mut centers = 0;
    for p in 0..table.count() {
        if covered[p] {
            continue;
        }
        index.neighbors(table, &grid, p, eps_sq, &mut buf, &mut nb);
        let c = nb.iter().copied().max().unwrap_or(p as u32) as usize;
        index.neighbors(table, &grid, c, eps_sq, &mut buf, &mut nb);
        for &q in &nb {
            covered[q as usize] = true;
        }
        centers += 1;
    }
    centers
}

impl CellGrid {
    fn new_for(table: &OrbitTable, eps: f64, n: usize) -> Self {
        let d = table.iterate(0, 0).len();
        CellGrid::new(d, eps, n)
    }
}

fn check_counts_input(sys: &SystemSpec, ys: &[TorusPoint], n: usize, eps: f64) -> Result<()> {
    if ys.is_empty() {
        return Err(invalid("Y", "point set must be non-empty"));
    }
    if !(eps > 0.0) {
        return Err(invalid("eps", "must be positive"));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if let Some(p) = ys.iter().find(|p| p.dim() != sys.dim) {
        return Err(DynError::DimensionMismatch {
            expected: sys.dim,
            got: p.dim(),
        });
    }
    Ok(())
}

fn raw(ys: &[TorusPoint]) -> Vec<Vec<f64>> {
    ys.iter().map(|p| p.coords().to_vec()).collect()
}

/// Size of a greedy `(n, ε)`-spanning subset of `Y`: the smaller of the greedy cover and
/// the greedy maximal separated set (both are spanning).
pub fn spanning_number(sys: &SystemSpec, ys: &[TorusPoint], n: usize, eps: f64) -> Result<usize> {
    check_counts_input(sys, ys, n, eps)?;
    let table = OrbitTable::build(sys, &raw(ys), n);
    Ok(greedy_cover(&table, n, eps).min(greedy_separated(&table, n, eps)))
}

/// Size of a greedy maximal `(n, ε)`-separated subset of `Y` (pairwise `d_n ≥ ε`).
pub fn separated_number(sys: &SystemSpec, ys: &[TorusPoint], n: usize, eps: f64) -> Result<usize> {
    check_counts_input(sys, ys, n, eps)?;
    let table = OrbitTable::build(sys, &raw(ys), n);
    Ok(greedy_separated(&table, n, eps))
}

/// Least-squares fit of `log count` against `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Slope clamped below at zero (nats per iterate).
    pub rate: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

/// Slope of `log(count)` against `n` over `n ∈ [window.0, window.1]`, clamped at 0.
pub fn entropy_rate(counts: &[(usize, f64)], window: (usize, usize)) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = counts
        .iter()
        .filter(|(n, _)| *n >= window.0 && *n <= window.1)
        .map(|&(n, c)| (n as f64, c))
        .collect();
    if pts.len() < 3 {
        return Err(invalid(
            "fit_window",
            format!("needs at least 3 points, got {}", pts.len()),
        ));
    }
    if pts.iter().any(|(_, c)| !(*c > 0.0)) {
        return Err(invalid("counts", "counts must be positive"));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("fit_window", "degenerate window (all n equal)"));
    }
    let sxy: f64 = pts
        .iter()
        .zip(&ys)
        .map(|(p, y)| (p.0 - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts
        .iter()
        .zip(&ys)
        .map(|(p, y)| (y - intercept - slope * p.0).powi(2))
        .sum();
    Ok(RateFit {
        rate: slope.max(0.0),
        slope,
        intercept,
        residual: (ss / k).sqrt(),
    })
}

/// Upper half of an increasing list of horizons (at least three entries when available).
pub fn default_fit_window(n_values: &[usize]) -> (usize, usize) {
    let len = n_values.len();
    let start = (len / 2).min(len.saturating_sub(3));
    (n_values[start], n_values[len - 1])
}

/// Upper half of the horizons not exceeding `resolved`; falls back to the first three
/// horizons when fewer than three are resolved.
pub fn resolved_fit_window(n_values: &[usize], resolved: Option<usize>) -> (usize, usize) {
    let usable: Vec<usize> = n_values
        .iter()
        .copied()
        .filter(|&n| resolved.is_none_or(|r| n <= r))
        .collect();
    if usable.len() >= 3 {
        default_fit_window(&usable)
    } else {
        let k = n_values.len().min(3);
        (n_values[0], n_values[k - 1])
    }
}

/// Largest `n` at which a `d_n` ball of radius `eps` is still at least two grid cells wide
/// in every direction, using the derivative bound `e^L` per iterate. `None` when `L ≤ 0`.
pub fn grid_resolved_horizon(sys: &SystemSpec, eps: f64, spacing: f64) -> Option<usize> {
    let l = sys.derivative_log_bound();
    if l <= 1e-12 {
        return None;
    }
    let steps = ((eps / (2.0 * spacing)).ln() / l).floor();
    Some(if steps < 0.0 { 0 } else { steps as usize + 1 })
}

/// Spanning/separated counts over a list of horizons with a fitted growth rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyScan {
    pub epsilon: f64,
    pub n_values: Vec<usize>,
    pub r_span: Vec<usize>,
    pub s_sep: Vec<usize>,
    /// Separated counts at `2ε`, the lower side of the sandwich check.
    pub s_sep_double: Vec<usize>,
    pub rate: f64,
    pub fit_window: (usize, usize),
    pub fit_residual: f64,
    /// Largest horizon the sample resolves at this `ε` (grid scans only).
    pub resolved_n_max: Option<usize>,
    pub sample_size: usize,
}

impl EntropyScan {
    /// Indices `n` where `s_sep(2ε) ≤ r_span(ε) ≤ s_sep(ε)` fails.
    pub fn sandwich_violations(&self) -> Vec<usize> {
        (0..self.n_values.len())
            .filter(|&k| {
                !(self.s_sep_double[k] <= self.r_span[k] && self.r_span[k] <= self.s_sep[k])
            })
            .map(|k| self.n_values[k])
            .collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.n_values.len()).map(|k| (self.n_values[k], self.r_span[k], self.s_sep[k]))
    }
}

fn running_max(v: &mut [usize]) {
    for k in 1..v.len() {
        v[k] = v[k].max(v[k - 1]);
    }
}

/// Counts `Y` at every horizon in `n_values` and fits the growth rate.
///
/// Counts are made monotone in `n` by a running maximum: a set that is `(n-1, ε)`-separated
/// is also `(n, ε)`-separated, and the larger of two upper estimates of a nondecreasing
/// quantity is still an upper estimate.
pub fn entropy_scan(
    sys: &SystemSpec,
    ys: &[TorusPoint],
    eps: f64,
    n_values: &[usize],
    fit_window: Option<(usize, usize)>,
) -> Result<EntropyScan> {
    scan(sys, ys, eps, n_values, fit_window, None)
}

fn scan(
    sys: &SystemSpec,
    ys: &[TorusPoint],
    eps: f64,
    n_values: &[usize],
    fit_window: Option<(usize, usize)>,
    resolved_n_max: Option<usize>,
) -> Result<EntropyScan> {
    if n_values.is_empty() || n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("n_values", "must be a non-empty increasing list"));
    }
    let n_max = *n_values.last().unwrap();
    check_counts_input(sys, ys, n_max, eps)?;
    if n_values[0] == 0 {
        return Err(invalid("n_values", "horizons start at 1"));
    }
    let table = OrbitTable::build(sys, &raw(ys), n_max);
    let jobs: Vec<(usize, f64)> = n_values
        .iter()
        .flat_map(|&n| [(n, eps), (n, 2.0 * eps)])
        .collect();
    let results = crate::par::par_map(&jobs, |&(n, e)| {
        let sep = greedy_separated(&table, n, e);
        let cover = if e == eps {
            greedy_cover(&table, n, e)
        } else {
            sep
        };
        (cover.min(sep), sep)
    });
    let mut r_span = Vec::new();
    let mut s_sep = Vec::new();
    let mut s_sep_double = Vec::new();
    for pair in results.chunks(2) {
        r_span.push(pair[0].0);
        s_sep.push(pair[0].1);
        s_sep_double.push(pair[1].1);
    }
    running_max(&mut r_span);
    running_max(&mut s_sep);
    running_max(&mut s_sep_double);
    let window = fit_window.unwrap_or_else(|| resolved_fit_window(n_values, resolved_n_max));
    let pairs: Vec<(usize, f64)> = n_values
        .iter()
        .zip(&r_span)
        .map(|(&n, &c)| (n, c as f64))
        .collect();
    let fit = entropy_rate(&pairs, window)?;
    Ok(EntropyScan {
        epsilon: eps,
        n_values: n_values.to_vec(),
        r_span,
        s_sep,
        s_sep_double,
        rate: fit.rate,
        fit_window: window,
        fit_residual: fit.residual,
        resolved_n_max,
        sample_size: ys.len(),
    })
}

/// Full-space scan on the uniform grid with `per_axis^d` points.
///
/// Unless a window is given, the rate is fitted over horizons the grid resolves
/// (see [`grid_resolved_horizon`]); counts past that point measure the grid, not the map.
pub fn grid_scan(
    sys: &SystemSpec,
    per_axis: usize,
    eps: f64,
    n_values: &[usize],
    fit_window: Option<(usize, usize)>,
) -> Result<EntropyScan> {
    if per_axis < 2 {
        return Err(invalid("grid", "need at least 2 points per axis"));
    }
    let ys = uniform_grid(sys.dim, per_axis);
    let resolved = grid_resolved_horizon(sys, eps, 1.0 / per_axis as f64);
    scan(sys, &ys, eps, n_values, fit_window, resolved)
}

/// Counts of a finite set at every `n ∈ 1..=n_max`: spanning at `ε`, separated at `ε`
/// and at `2ε` (used for Bowen-ball and curve rates).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SetCounts {
    pub span: Vec<usize>,
    pub sep: Vec<usize>,
    pub sep_double: Vec<usize>,
}

impl SetCounts {
    /// Horizons `n` (1-based) where `sep(2ε) ≤ span(ε) ≤ sep(ε)` fails.
    pub fn sandwich_violations(&self) -> Vec<usize> {
        (0..self.span.len())
            .filter(|&k| !(self.sep_double[k] <= self.span[k] && self.span[k] <= self.sep[k]))
            .map(|k| k + 1)
            .collect()
    }
}

pub(crate) fn small_set_counts(
    sys: &SystemSpec,
    pts: &[Vec<f64>],
    n_max: usize,
    eps: f64,
) -> SetCounts {
    let table = OrbitTable::build(sys, pts, n_max);
    let mut sep: Vec<usize> = (1..=n_max)
        .map(|n| greedy_separated(&table, n, eps))
        .collect();
    let mut span: Vec<usize> = (1..=n_max)
        .map(|n| greedy_cover(&table, n, eps).min(sep[n - 1]))
        .collect();
    let mut sep_double: Vec<usize> = (1..=n_max)
        .map(|n| greedy_separated(&table, n, 2.0 * eps))
        .collect();
    running_max(&mut span);
    running_max(&mut sep);
    running_max(&mut sep_double);
    SetCounts {
        span,
        sep,
        sep_double,
    }
}

/// Rate of a finite set at scale `eps` over horizons `1..=n_max`, upper-half fit.
pub(crate) fn small_set_rate(
    sys: &SystemSpec,
    pts: &[Vec<f64>],
    n_max: usize,
    eps: f64,
) -> Result<(f64, SetCounts)> {
    let counts = small_set_counts(sys, pts, n_max, eps);
    let ns: Vec<usize> = (1..=n_max).collect();
    let pairs: Vec<(usize, f64)> = ns
        .iter()
        .zip(&counts.span)
        .map(|(&n, &c)| (n, c as f64))
        .collect();
    let fit = entropy_rate(&pairs, default_fit_window(&ns))?;
    Ok((fit.rate, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{cat2, default_alpha, identity2, rot1};

    fn circle_grid(k: usize) -> Vec<TorusPoint> {
        uniform_grid(1, k)
    }

    #[test]
    fn dn_examples() {
        let sys = cat2();
        let x = TorusPoint::new(vec![0.0, 0.0]);
        let y = TorusPoint::new(vec![0.01, 0.0]);
        let d = dn_distance(&sys, &x, &y, 2).unwrap();
        assert!((d - (0.02f64.powi(2) + 0.01f64.powi(2)).sqrt()).abs() < 1e-12);
        assert!((d - 0.022360).abs() < 1e-6);
        assert_eq!(dn_distance(&sys, &x, &x, 5).unwrap(), 0.0);
        let id = identity2();
        let d1 = dn_distance(&id, &x, &y, 1).unwrap();
        assert_eq!(dn_distance(&id, &x, &y, 9).unwrap(), d1);
        assert!(dn_distance(&id, &x, &y, 0).is_err());
    }

    #[test]
    fn circle_counts() {
        // 4096-point circle grid, ε = 0.1: a d-ball covers 819 grid points, so the minimum
        // cover is ⌈4096/819⌉ = 6; a maximal set with gaps ≥ 410 cells has ⌊4096/410⌋ = 9.
        let sys = rot1(default_alpha());
        let ys = circle_grid(4096);
        assert_eq!(spanning_number(&sys, &ys, 3, 0.1).unwrap(), 6);
        assert_eq!(separated_number(&sys, &ys, 3, 0.1).unwrap(), 9);
        let id = SystemSpec::affine("id1", 1, vec![1], vec![0.0], vec![]).unwrap();
        assert_eq!(spanning_number(&id, &ys, 7, 0.1).unwrap(), 6);
    }

    #[test]
    fn trivial_counts() {
        let sys = cat2();
        let ys: Vec<TorusPoint> = (0..5)
            .map(|k| TorusPoint::new(vec![0.1 + 0.001 * k as f64, 0.2]))
            .collect();
        assert_eq!(spanning_number(&sys, &ys, 1, 0.5).unwrap(), 1);
        assert_eq!(separated_number(&sys, &ys[..1], 4, 0.01).unwrap(), 1);
        assert_eq!(separated_number(&sys, &ys, 1, 1e-9).unwrap(), 5);
        assert!(spanning_number(&sys, &[], 1, 0.1).is_err());
        assert!(spanning_number(&sys, &ys, 1, 0.0).is_err());
    }

    #[test]
    fn rate_examples() {
        let exact: Vec<(usize, f64)> = (4..=12).map(|n| (n, 2f64.powi(n as i32))).collect();
        let fit = entropy_rate(&exact, (4, 12)).unwrap();
        assert!((fit.rate - 2f64.ln()).abs() < 1e-9);
        let flat: Vec<(usize, f64)> = (1..=6).map(|n| (n, 17.0)).collect();
        assert_eq!(entropy_rate(&flat, (1, 6)).unwrap().rate, 0.0);
        assert!(entropy_rate(&flat, (1, 2)).is_err());
        let shrinking: Vec<(usize, f64)> = (1..=6).map(|n| (n, 100.0 / n as f64)).collect();
        assert_eq!(entropy_rate(&shrinking, (1, 6)).unwrap().rate, 0.0);
    }

    #[test]
    fn default_window_is_upper_half() {
        assert_eq!(default_fit_window(&[4, 5, 6, 7, 8, 9, 10]), (7, 10));
        assert_eq!(default_fit_window(&[1, 2, 3]), (1, 3));
        assert_eq!(
            resolved_fit_window(&[1, 2, 3, 4, 5, 6, 7, 8], Some(4)),
            (2, 4)
        );
        assert_eq!(resolved_fit_window(&[1, 2, 3, 4, 5, 6], None), (4, 6));
        assert_eq!(resolved_fit_window(&[1, 2, 3, 4], Some(1)), (1, 3));
    }

    #[test]
    fn cat2_grid_resolution() {
        // ball width 0.05·2.618^-(n-1) against two cells of 1/1024
        let sys = cat2();
        assert_eq!(grid_resolved_horizon(&sys, 0.05, 1.0 / 1024.0), Some(4));
        assert_eq!(grid_resolved_horizon(&rot1(0.3), 0.05, 1.0 / 1024.0), None);
    }

    #[test]
    fn isometry_scan_has_zero_rate() {
        let sys = crate::system::cat3(default_alpha());
        let _ = sys;
        let rot = rot1(default_alpha());
        for eps in [0.05, 0.1, 0.2] {
            let scan = grid_scan(&rot, 512, eps, &[1, 2, 3, 4, 5, 6], None).unwrap();
            assert!(scan.rate <= ZERO_RATE_THRESHOLD, "{eps}: {:?}", scan);
            assert!(scan.sandwich_violations().is_empty());
        }
    }
}

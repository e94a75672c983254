//! Hyperbolic times of log-growth sequences and the central expansion check.

use serde::Serialize;

use crate::error::{invalid, DynError, Result};
use crate::geometry::CentralCurve;
use crate::linalg::sigma_max;
use crate::splitting::domination::{backward_step, check_field, domination_reports, forward_step};
use crate::splitting::{cs_dim, cu_dim, flags_for, BundleField, Composite};
use crate::system::SystemSpec;
use crate::torus::{torus_distance_raw, wrap01, TorusPoint};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceSource {
    pub system: String,
    pub base: TorusPoint,
    pub selector: Composite,
    /// `forward` for `Df` on a cs bundle, `backward` for `Df⁻¹` on a cu bundle.
    pub direction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogGrowthSequence {
    pub values: Vec<f64>,
    pub source: Option<SequenceSource>,
    /// Bound on `|a_m|`; defaults to the largest observed magnitude.
    pub bound: Option<f64>,
}

impl LogGrowthSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("values", "sequence is empty"));
        }
        if let Some(m) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid("values", format!("entry {m} is not finite")));
        }
        Ok(Self {
            values,
            source: None,
            bound: None,
        })
    }

    /// One value per line; blank lines and `#` comments are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let field = t.split(',').next().unwrap_or("").trim();
            let v: f64 = field
                .parse()
                .map_err(|_| invalid("input", format!("line {}: `{t}` is not a number", k + 1)))?;
            values.push(v);
        }
        Self::new(values)
    }

    /// `a_m = log ‖Df|E^{cs,i}(f^m x)‖` or `a_m = log ‖Df⁻¹|E^{cu,i}(f^{-m} x)‖`, `m < n`.
    pub fn along_orbit(
        sys: &SystemSpec,
        field: &BundleField,
        x: &TorusPoint,
        selector: Composite,
        n: usize,
    ) -> Result<Self> {
        check_field(field)?;
        if n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        let dims = &field.dims;
        let k = dims.len() - 2;
        let n = n as i64;
        let (values, direction) = match selector {
            Composite::Cs(i) if i <= k => {
                let fl = flags_for(sys, x.coords(), dims, &field.options, 0, n)?;
                let d = cs_dim(dims, i);
                let v = (0..n)
                    .map(|m| sigma_max(&forward_step(sys, &fl, m, d)).ln())
                    .collect();
                (v, "forward")
            }
            Composite::Cu(i) if (1..=k + 1).contains(&i) => {
                let fl = flags_for(sys, x.coords(), dims, &field.options, -n, 0)?;
                let d = cu_dim(dims, i);
                let v = (0..n)
                    .map(|m| sigma_max(&backward_step(sys, &fl, -m - 1, d)).ln())
                    .collect();
                (v, "backward")
            }
            _ => return Err(invalid("selector", "outside the splitting")),
        };
        let mut seq = Self::new(values)?;
        seq.source = Some(SequenceSource {
            system: sys.name.clone(),
            base: x.clone(),
            selector,
            direction: direction.into(),
        });
        seq.bound = Some(sys.derivative_log_bound());
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn magnitude_bound(&self) -> f64 {
        let seen = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.bound.map_or(seen, |b| b.max(seen))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperbolicTimesReport {
    pub lambda1: f64,
    pub lambda2: f64,
    pub n: usize,
    pub indices: Vec<usize>,
    pub density: f64,
    /// Bound `A` on `|a_m|` used for the density constant.
    pub bound: f64,
    pub c_bound: f64,
    pub n_min: usize,
    /// `Σ a_m ≤ n log λ₁`.
    pub hypothesis_met: bool,
    /// Hypothesis met, `n ≥ n_min` and `density ≥ c_bound`.
    pub guarantee_holds: bool,
}

impl HyperbolicTimesReport {
    /// Re-checks every index by direct summation.
    pub fn verify(&self, seq: &LogGrowthSequence) -> bool {
        let l2 = self.lambda2.ln();
        self.indices.iter().all(|&r| {
            let mut s = 0.0;
            (r..seq.len()).all(|h| {
                s += seq.values[h];
                s <= (h - r) as f64 * l2
            })
        })
    }
}

fn check_thresholds(lambda1: f64, lambda2: f64) -> Result<()> {
    if !(0.0 < lambda1 && lambda1 < lambda2 && lambda2 < 1.0) {
        return Err(invalid(
            "lambda",
            format!("need 0 < λ₁ < λ₂ < 1, got {lambda1}, {lambda2}"),
        ));
    }
    Ok(())
}

/// `c = (log λ₂ − log λ₁)/(A − log λ₁)` for sequences with `|a_m| ≤ A`.
pub fn pliss_density_bound(lambda1: f64, lambda2: f64, a: f64) -> Result<f64> {
    check_thresholds(lambda1, lambda2)?;
    let (l1, l2) = (lambda1.ln(), lambda2.ln());
    if !(a > l2) {
        return Err(invalid("A", format!("bound {a} must exceed log λ₂ = {l2}")));
    }
    Ok(((l2 - l1) / (a - l1)).min(1.0))
}

/// Indices `r` with `Σ_{m=r}^{h} a_m ≤ (h − r) log λ₂` for every `r ≤ h < n`.
pub fn pliss_times(
    seq: &LogGrowthSequence,
    lambda1: f64,
    lambda2: f64,
) -> Result<HyperbolicTimesReport> {
    check_thresholds(lambda1, lambda2)?;
    let (l1, l2) = (lambda1.ln(), lambda2.ln());
    let n = seq.len();
    // best[r] = max over h ≥ r of Σ_{r..=h} (a_m − L₂)
    let mut flags = vec![false; n];
    let mut best = f64::NEG_INFINITY;
    for r in (0..n).rev() {
        best = seq.values[r] - l2 + best.max(0.0);
        flags[r] = best <= -l2;
    }
    let indices: Vec<usize> = (0..n).filter(|&r| flags[r]).collect();
    let density = indices.len() as f64 / n as f64;
    let bound = seq.magnitude_bound();
    let c_bound = if bound > l2 {
        pliss_density_bound(lambda1, lambda2, bound)?
    } else {
        1.0
    };
    let n_min = (1.0 / c_bound).ceil() as usize;
    let hypothesis_met = seq.values.iter().sum::<f64>() <= n as f64 * l1;
    Ok(HyperbolicTimesReport {
        lambda1,
        lambda2,
        n,
        density,
        bound,
        c_bound,
        n_min,
        hypothesis_met,
        guarantee_holds: hypothesis_met && n >= n_min && density >= c_bound,
        indices,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub factor: usize,
    pub lambda1: f64,
    /// Largest fitted domination rate over the pairs of the field.
    pub lambda: f64,
    pub lambda1_in_range: bool,
    pub n0_search: usize,
    pub samples: usize,
    /// Least `n₀` such that both products exceed `λ₁^n` for `n₀ < n ≤ n0_search`.
    pub n0: Option<usize>,
    /// `min_{y'} log(product) − n log λ₁` over both products, for `n = 0..=n0_search`.
    pub margins: Vec<f64>,
    pub worst_point: Option<TorusPoint>,
}

/// Lower bounds on `Df` along `E^{cs,i}` over backward orbits and on `Df⁻¹` along
/// `E^{cu,i}` over forward orbits, for the nodes of a central segment.
pub fn verify_central_expansion(
    sys: &SystemSpec,
    field: &BundleField,
    segment: &CentralCurve,
    n0_search: usize,
    lambda1: f64,
) -> Result<ExpansionReport> {
    check_field(field)?;
    let dims = &field.dims;
    let k = dims.len() - 2;
    let i = segment.factor;
    if !(1..=k).contains(&i) {
        return Err(invalid("segment", format!("factor {i} is not central")));
    }
    if !(0.0 < lambda1 && lambda1 < 1.0) {
        return Err(invalid("lambda1", "must lie in (0, 1)"));
    }
    if n0_search == 0 {
        return Err(invalid("n0_search", "must be at least 1"));
    }
    let near = field
        .samples
        .iter()
        .map(|s| torus_distance_raw(s.point.coords(), segment.base.coords()))
        .fold(f64::INFINITY, f64::min);
    if near > segment.rho.max(1e-12) {
        return Err(DynError::Precondition(format!(
            "segment base is {near:.3e} away from the sampled set"
        )));
    }
    let pairs: Vec<usize> = (0..=k).collect();
    let lambda = domination_reports(sys, field, &pairs, 20)?
        .iter()
        .fold(0.0f64, |m, r| m.max(r.lambda));
    let mut report = ExpansionReport {
        factor: i,
        lambda1,
        lambda,
        lambda1_in_range: lambda < lambda1 && lambda1 < lambda.sqrt(),
        n0_search,
        samples: segment.len(),
        n0: Some(0),
        margins: Vec::new(),
        worst_point: None,
    };
    if segment.len() <= 1 {
        return Ok(report);
    }
    let (dcs, dcu) = (cs_dim(dims, i), cu_dim(dims, i));
    let l1 = lambda1.ln();
    let reach = n0_search as i64 + 1;
    let mut margins = vec![f64::INFINITY; n0_search + 1];
    let mut worst = vec![0usize; n0_search + 1];
    for (node, y) in segment.nodes.iter().enumerate() {
        let y: Vec<f64> = y.iter().map(|&c| wrap01(c)).collect();
        let fl = flags_for(sys, &y, dims, &field.options, -reach, reach)?;
        let mut cs = sigma_max(&forward_step(sys, &fl, 0, dcs)).ln();
        let mut cu = sigma_max(&backward_step(sys, &fl, -1, dcu)).ln();
        for n in 0..=n0_search {
            if n > 0 {
                cs += sigma_max(&forward_step(sys, &fl, -(n as i64), dcs)).ln();
                cu += sigma_max(&backward_step(sys, &fl, n as i64 - 1, dcu)).ln();
            }
            let m = cs.min(cu) - n as f64 * l1;
            if m < margins[n] {
                margins[n] = m;
                worst[n] = node;
            }
        }
    }
    let n0 = match (1..=n0_search).rev().find(|&n| margins[n] <= 0.0) {
        None => Some(1),
        Some(n) if n < n0_search => Some(n),
        Some(_) => None,
    };
    let blame = worst[n0_search];
    report.n0 = n0;
    report.worst_point = Some(TorusPoint::new(
        segment.nodes[blame]
            .iter()
            .map(|&c| wrap01(c))
            .collect::<Vec<f64>>(),
    ));
    report.margins = margins;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct SplitMix(u64);

    impl SplitMix {
        fn next(&mut self) -> u64 {
            self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = self.0;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^ (z >> 31)
        }

        fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
            lo + (hi - lo) * (self.next() >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    fn brute(values: &[f64], l2: f64) -> Vec<usize> {
        (0..values.len())
            .filter(|&r| {
                (r..values.len()).all(|h| values[r..=h].iter().sum::<f64>() <= (h - r) as f64 * l2)
            })
            .collect()
    }

    fn seq(v: Vec<f64>) -> LogGrowthSequence {
        LogGrowthSequence::new(v).unwrap()
    }

    #[test]
    fn constant_sequences() {
        let r = pliss_times(&seq(vec![0.5f64.ln(); 100]), 0.6, 0.8).unwrap();
        assert_eq!(r.indices, (0..100).collect::<Vec<_>>());
        assert_eq!(r.density, 1.0);
        // only the one-term window at the end stays below log λ₂ = 0 steps
        let r = pliss_times(&seq(vec![0.9f64.ln(); 100]), 0.6, 0.8).unwrap();
        assert_eq!(r.indices, vec![99]);
        assert!(r.verify(&seq(vec![0.9f64.ln(); 100])));
    }

    #[test]
    fn alternating_sequence() {
        let v: Vec<f64> = (0..64)
            .map(|m| if m % 2 == 0 { 0.25f64.ln() } else { 0.0 })
            .collect();
        let r = pliss_times(&seq(v.clone()), 0.5, 0.6).unwrap();
        assert_eq!(r.indices, brute(&v, 0.6f64.ln()));
        // odd starts qualify too: every window holds at least as many log 0.25 terms as steps/2
        assert_eq!(r.indices, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn density_constant() {
        let c = pliss_density_bound(0.5, 0.7, 2f64.ln()).unwrap();
        assert!((c - 0.242_713_5).abs() < 1e-6);
        assert!(pliss_density_bound(0.5, 0.5000001, 2f64.ln()).unwrap() < 1e-6);
        assert!(pliss_density_bound(0.5, 0.7, 3.0).unwrap() < c);
        assert!(pliss_density_bound(0.5, 0.7, 0.7f64.ln()).is_err());
        assert!(pliss_density_bound(0.7, 0.5, 1.0).is_err());
        assert!(pliss_times(&seq(vec![0.0]), 0.8, 0.8).is_err());
    }

    #[test]
    fn scan_matches_brute_force() {
        let mut rng = SplitMix(7);
        for _ in 0..1000 {
            let n = 1 + (rng.next() % 512) as usize;
            let l2 = rng.uniform(0.05, 0.95).ln();
            let v: Vec<f64> = (0..n).map(|_| rng.uniform(-1.5, 1.0)).collect();
            let r = pliss_times(&seq(v.clone()), l2.exp() * 0.5, l2.exp()).unwrap();
            assert_eq!(r.indices, brute(&v, l2));
        }
    }

    fn admissible(rng: &mut SplitMix, n: usize, a: f64, l1: f64) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.uniform(-a, a)).collect();
        for _ in 0..64 {
            let excess = v.iter().sum::<f64>() - n as f64 * l1;
            if excess <= 0.0 {
                break;
            }
            let free = v.iter().filter(|&&x| x > -a).count().max(1);
            for x in v.iter_mut() {
                *x = (*x - excess / free as f64).max(-a);
            }
        }
        v
    }

    #[test]
    fn density_guarantee() {
        let mut rng = SplitMix(11);
        let mut checked = 0;
        for _ in 0..10_000 {
            let lambda1 = rng.uniform(0.2, 0.85);
            let lambda2 = rng.uniform(lambda1 + 0.01, 0.97);
            let a = -lambda1.ln() + rng.uniform(0.05, 2.0);
            let c = pliss_density_bound(lambda1, lambda2, a).unwrap();
            let n_min = (1.0 / c).ceil() as usize;
            let n = n_min + (rng.next() % 400) as usize;
            let v = admissible(&mut rng, n, a, lambda1.ln());
            if v.iter().sum::<f64>() > n as f64 * lambda1.ln() {
                continue;
            }
            let mut s = seq(v);
            s.bound = Some(a);
            let r = pliss_times(&s, lambda1, lambda2).unwrap();
            assert!(r.hypothesis_met);
            assert!(r.density >= c, "density {} below {c} (n = {n})", r.density);
            assert!(r.guarantee_holds);
            checked += 1;
        }
        assert!(checked > 9_000);
    }

    #[test]
    fn extension_only_removes() {
        let mut rng = SplitMix(3);
        let l2 = 0.7f64.ln();
        for _ in 0..200 {
            let n = 1 + (rng.next() % 100) as usize;
            let v: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 0.5)).collect();
            let base = pliss_times(&seq(v.clone()), 0.5, 0.7).unwrap().indices;
            let mut flat = v.clone();
            flat.extend(std::iter::repeat_n(l2, n));
            let r = pliss_times(&seq(flat), 0.5, 0.7).unwrap();
            let head: Vec<usize> = r.indices.into_iter().filter(|&i| i < n).collect();
            assert_eq!(head, base);
            let mut twice = v.clone();
            twice.extend_from_slice(&v);
            let r = pliss_times(&seq(twice), 0.5, 0.7).unwrap();
            assert!(r
                .indices
                .iter()
                .filter(|&&i| i < n)
                .all(|i| base.contains(i)));
        }
    }

    #[test]
    fn csv_input() {
        let s = LogGrowthSequence::from_csv("# a_m\n-0.5\n\n0.25, extra\n-1e-1\n").unwrap();
        assert_eq!(s.values, vec![-0.5, 0.25, -0.1]);
        assert!(LogGrowthSequence::from_csv("0.1\nabc\n").is_err());
        assert!(LogGrowthSequence::from_csv("").is_err());
        assert!(LogGrowthSequence::new(vec![f64::NAN]).is_err());
    }

    mod expansion {
        use super::super::*;
        use crate::geometry::integrate_central_curve;
        use crate::splitting::compute_bundles;
        use crate::system::{cat3, cat3skew, default_alpha, DEFAULT_KAPPA};
        use crate::torus::quasi_random_points;

        fn field(sys: &SystemSpec) -> BundleField {
            compute_bundles(sys, &quasi_random_points(3, 4, 0), &[1, 1, 1], 40).unwrap()
        }

        #[test]
        fn cat3_fiber_norms_are_one() {
            let sys = cat3(default_alpha());
            let f = field(&sys);
            let x = f.samples[0].point.clone();
            let c = integrate_central_curve(&sys, &f, &x, 1, 0.02, 0.005).unwrap();
            let r = verify_central_expansion(&sys, &f, &c, 30, 0.5).unwrap();
            assert_eq!(r.n0, Some(1));
            assert!(r.lambda1_in_range);
            assert!((r.lambda - 0.381966).abs() < 1e-4);
            for n in 1..=30 {
                assert!((r.margins[n] + n as f64 * 0.5f64.ln()).abs() < 1e-9);
            }
            let r = verify_central_expansion(&sys, &f, &c, 30, 0.7).unwrap();
            assert!(!r.lambda1_in_range);
        }

        #[test]
        fn single_point_is_vacuous() {
            let sys = cat3(default_alpha());
            let f = field(&sys);
            let x = f.samples[1].point.clone();
            let c = CentralCurve {
                base: x.clone(),
                factor: 1,
                rho: 0.0,
                h_curve: 0.01,
                nodes: vec![x.coords().to_vec()],
                arclen: vec![0.0],
                tangents: vec![vec![0.0, 0.0, 1.0]],
            };
            assert_eq!(
                verify_central_expansion(&sys, &f, &c, 10, 0.5).unwrap().n0,
                Some(0)
            );
            let far = CentralCurve {
                base: TorusPoint::new(vec![0.01, 0.93, 0.5]),
                ..c
            };
            assert!(matches!(
                verify_central_expansion(&sys, &f, &far, 10, 0.5),
                Err(DynError::Precondition(_))
            ));
        }

        #[test]
        fn cat3skew_stable_under_refinement() {
            let sys = cat3skew(default_alpha(), DEFAULT_KAPPA);
            let f = field(&sys);
            let x = f.samples[2].point.clone();
            let coarse = integrate_central_curve(&sys, &f, &x, 1, 0.02, 0.005).unwrap();
            let fine = integrate_central_curve(&sys, &f, &x, 1, 0.02, 0.0025).unwrap();
            let a = verify_central_expansion(&sys, &f, &coarse, 50, 0.7).unwrap();
            let b = verify_central_expansion(&sys, &f, &fine, 50, 0.7).unwrap();
            assert!(a.n0.is_some());
            assert_eq!(a.n0, b.n0);
        }
    }
}

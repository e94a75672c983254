use nalgebra::DMatrix;
use serde::Serialize;

use super::domination::{backward_step, check_field, domination_reports, forward_step};
use super::{cs_dim, cu_dim, flags_for, BundleField};
use crate::error::{invalid, DynError, Result};
use crate::linalg::sigma_max;
use crate::system::SystemSpec;
use crate::torus::{quasi_random_ball, wrap01, TorusPoint};

/// Orbit points past the sample used to re-fit the domination constant.
const REFIT_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairWeights {
    /// Scale of `E^{cs,i}` at the sample.
    pub cs: f64,
    /// Scale of `E^{cu,i+1}` at the sample.
    pub cu: f64,
}

/// Scalar rescaling of each composite bundle, `|v|₀ = w(x)·|v|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptedMetric {
    pub lambda0: f64,
    pub horizon: usize,
    /// Centre rate `c_i` of each pair (midpoint between the cs and cu rates).
    pub pair_rates: Vec<f64>,
    /// Fitted `λ` of each pair in the original metric.
    pub pair_lambdas: Vec<f64>,
    pub samples: Vec<TorusPoint>,
    /// `weights[sample][pair]`.
    pub weights: Vec<Vec<PairWeights>>,
    /// `one_step[sample][pair] = ‖Df|E^{cs,i}(x)‖₀ · ‖Df^{-1}|E^{cu,i+1}(f x)‖₀`.
    pub one_step: Vec<Vec<f64>>,
    pub max_one_step: f64,
    /// Fraction of samples where every pair satisfies the one-step inequality.
    pub fraction_ok: f64,
    /// Largest one-step product over the orbit windows used for the re-fit.
    pub lambda_step: f64,
    /// `max P⁰_n / lambda_step^n` over samples and `1 ≤ n ≤ 10`.
    pub refit_c: f64,
}

impl AdaptedMetric {
    /// Adapted length of a vector of `E^{cs,i}` at sample `p`.
    pub fn cs_norm(&self, p: usize, i: usize, v: &[f64]) -> f64 {
        self.weights[p][i].cs * v.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Adapted length of a vector of `E^{cu,i+1}` at sample `p`.
    pub fn cu_norm(&self, p: usize, i: usize, v: &[f64]) -> f64 {
        self.weights[p][i].cu * v.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

struct PairData {
    weights: PairWeights,
    one_step: f64,
    max_step: f64,
    /// `P⁰_n` for `n = 1..=REFIT_STEPS`.
    refit: Vec<f64>,
}

/// Weights `w(f^t x)` for `t = 0..=REFIT_STEPS` and the derived one-step and n-step products.
fn pair_data(
    sys: &SystemSpec,
    fl: &super::OrbitFlags,
    dims: &[usize],
    i: usize,
    m: usize,
    mu: f64,
    nu: f64,
) -> PairData {
    let dcs = cs_dim(dims, i);
    let dcu = cu_dim(dims, i + 1);
    let mi = m as i64;
    let r = REFIT_STEPS as i64;
    // steps[j + m] covers j ∈ [-m, m + r)
    let fsteps: Vec<DMatrix<f64>> = (-mi..mi + r)
        .map(|j| forward_step(sys, fl, j, dcs))
        .collect();
    let bsteps: Vec<DMatrix<f64>> = (-mi..mi + r)
        .map(|j| backward_step(sys, fl, j, dcu))
        .collect();
    let fs = |j: i64| &fsteps[(j + mi) as usize];
    let bs = |j: i64| &bsteps[(j + mi) as usize];

    let w_cs = |t: i64| {
        let mut prod = DMatrix::identity(dcs, dcs);
        let mut acc = 1.0;
        for l in 1..mi {
            prod = fs(t + l - 1) * &prod;
            acc += (sigma_max(&prod) / mu.powi(l as i32)).powi(2);
        }
        acc.sqrt()
    };
    let w_cu = |t: i64| {
        let mut prod = DMatrix::identity(dcu, dcu);
        let mut acc = 1.0;
        for l in 1..mi {
            prod = bs(t - l) * &prod;
            acc += (sigma_max(&prod) / nu.powi(l as i32)).powi(2);
        }
        acc.sqrt()
    };
    let wc: Vec<f64> = (0..=r).map(w_cs).collect();
    let wu: Vec<f64> = (0..=r).map(w_cu).collect();
    let step = |t: i64| {
        let t_ = t as usize;
        (wc[t_ + 1] / wc[t_]) * sigma_max(fs(t)) * (wu[t_] / wu[t_ + 1]) * sigma_max(bs(t))
    };
    let steps: Vec<f64> = (0..r).map(step).collect();
    let mut fwd = DMatrix::identity(dcs, dcs);
    let mut bwd = DMatrix::identity(dcu, dcu);
    let refit = (0..r)
        .map(|j| {
            fwd = fs(j) * &fwd;
            bwd = &bwd * bs(j);
            let n = (j + 1) as usize;
            (wc[n] / wc[0]) * sigma_max(&fwd) * (wu[0] / wu[n]) * sigma_max(&bwd)
        })
        .collect();
    PairData {
        weights: PairWeights {
            cs: wc[0],
            cu: wu[0],
        },
        one_step: steps[0],
        max_step: steps.iter().copied().fold(0.0, f64::max),
        refit,
    }
}

/// Rescales each composite bundle by a finite averaging sum so that the one-step product
/// `‖Df|E^{cs,i}‖₀·‖Df^{-1}|E^{cu,i+1}‖₀` drops below `λ₀` everywhere on the samples.
///
/// For pair `i` with centre rate `c`, the cs weight is
/// `(Σ_{j<m} (‖Df^j|E^{cs,i}(x)‖ / (e^c √λ₀)^j)²)^{1/2}` and the cu weight uses `Df^{-j}`
/// with `e^{-c} √λ₀`.
pub fn build_adapted_metric(
    sys: &SystemSpec,
    field: &BundleField,
    lambda0: f64,
    m: usize,
) -> Result<AdaptedMetric> {
    if !(lambda0 > 0.0 && lambda0 < 1.0) {
        return Err(invalid("lambda0", "must lie in (0, 1)"));
    }
    if m < 1 {
        return Err(invalid("horizon", "must be at least 1"));
    }
    let k = field.central_count();
    let pairs: Vec<usize> = (0..=k).collect();
    let reports = domination_reports(sys, field, &pairs, m.max(REFIT_STEPS))?;
    for r in &reports {
        if !r.pass || r.lambda >= lambda0 * lambda0 {
            return Err(DynError::Precondition(format!(
                "pair {} not dominated below λ₀² = {:.6} (fitted λ = {:.6})",
                r.pair,
                lambda0 * lambda0,
                r.lambda
            )));
        }
    }
    let rates = field.mean_rates();
    let centre: Vec<f64> = pairs
        .iter()
        .map(|&i| {
            let cs = rates[..=i]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let cu = rates[i + 1..].iter().copied().fold(f64::INFINITY, f64::min);
            0.5 * (cs + cu)
        })
        .collect();
    let root = lambda0.sqrt();
    let idx: Vec<usize> = (0..field.samples.len()).collect();
    let per_sample = crate::par::par_map(&idx, |&p| -> Result<Vec<PairData>> {
        let x = field.samples[p].point.coords();
        let (mi, r) = (m as i64, REFIT_STEPS as i64);
        let fl = flags_for(sys, x, &field.dims, &field.options, -mi, mi + r)?;
        Ok(pairs
            .iter()
            .map(|&i| {
                let c = centre[i];
                pair_data(
                    sys,
                    &fl,
                    &field.dims,
                    i,
                    m,
                    c.exp() * root,
                    (-c).exp() * root,
                )
            })
            .collect())
    });
    let mut weights = Vec::new();
    let mut one_step = Vec::new();
    let mut refits = Vec::new();
    let mut lambda_step = 0.0f64;
    let mut worst = (0.0f64, 0usize);
    let mut ok = 0usize;
    for (p, r) in per_sample.into_iter().enumerate() {
        let r = r?;
        let steps: Vec<f64> = r.iter().map(|d| d.one_step).collect();
        let local = r.iter().map(|d| d.max_step).fold(0.0, f64::max);
        lambda_step = lambda_step.max(local);
        if local > worst.0 {
            worst = (local, p);
        }
        if steps.iter().all(|s| *s < lambda0) {
            ok += 1;
        }
        weights.push(r.iter().map(|d| d.weights).collect());
        one_step.push(steps);
        refits.push(r.into_iter().map(|d| d.refit).collect::<Vec<_>>());
    }
    if worst.0 >= lambda0 {
        return Err(DynError::HorizonTooSmall {
            horizon: m,
            ratio: worst.0,
            target: lambda0,
            point: field.samples[worst.1].point.coords().to_vec(),
        });
    }
    let mut refit_c = 0.0f64;
    for per_pair in &refits {
        for seq in per_pair {
            for (n, v) in seq.iter().enumerate() {
                refit_c = refit_c.max(v / lambda_step.powi(n as i32 + 1));
            }
        }
    }
    let max_one_step = one_step.iter().flatten().copied().fold(0.0, f64::max);
    Ok(AdaptedMetric {
        lambda0,
        horizon: m,
        pair_rates: centre,
        pair_lambdas: reports.iter().map(|r| r.lambda).collect(),
        samples: field.points(),
        weights,
        one_step,
        max_one_step,
        fraction_ok: ok as f64 / field.samples.len() as f64,
        lambda_step,
        refit_c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityReport {
    pub nu: f64,
    pub tau: f64,
    /// Largest fitted domination `λ` over the pairs.
    pub lambda: f64,
    pub check: bool,
    pub evaluations: usize,
}

/// Oscillation `τ` of the one-step norms `‖Df|Ẽ^{cs,i}‖`, `‖Df^{-1}|Ẽ^{cu,i+1}‖` over the
/// `5ν`-balls around the samples, with `Ẽ` the splitting at the sample; checks
/// `(1+τ)√λ < 1`.
pub fn uniformity_bounds(
    sys: &SystemSpec,
    field: &BundleField,
    nu: f64,
) -> Result<UniformityReport> {
    if !(nu > 0.0) {
        return Err(invalid("nu", "must be positive"));
    }
    check_field(field)?;
    let k = field.central_count();
    let pairs: Vec<usize> = (0..=k).collect();
    let lambda = domination_reports(sys, field, &pairs, 20)?
        .iter()
        .map(|r| r.lambda)
        .fold(0.0, f64::max);
    let d = field.dim();
    let mut offsets = vec![vec![0.0; d]];
    offsets.extend(quasi_random_ball(d, 32, 5.0 * nu));
    let idx: Vec<usize> = (0..field.samples.len()).collect();
    let taus = crate::par::par_map(&idx, |&p| {
        let x = field.samples[p].point.coords();
        let mut tau = 0.0f64;
        for &i in &pairs {
            let bcs = field.composite(p, super::Composite::Cs(i));
            let bcu = field.composite(p, super::Composite::Cu(i + 1));
            let (mut lo_s, mut hi_s, mut lo_u, mut hi_u) =
                (f64::INFINITY, 0.0f64, f64::INFINITY, 0.0f64);
            for off in &offsets {
                let y: Vec<f64> = x.iter().zip(off).map(|(a, b)| wrap01(a + b)).collect();
                let s = sigma_max(&(sys.jacobian_raw(&y) * &bcs));
                let u = sigma_max(&(sys.inverse_jacobian_raw(&y) * &bcu));
                lo_s = lo_s.min(s);
                hi_s = hi_s.max(s);
                lo_u = lo_u.min(u);
                hi_u = hi_u.max(u);
            }
            tau = tau.max(hi_s / lo_s - 1.0).max(hi_u / lo_u - 1.0);
        }
        tau
    });
    let tau = taus.into_iter().fold(0.0, f64::max);
    Ok(UniformityReport {
        nu,
        tau,
        lambda,
        check: (1.0 + tau) * lambda.sqrt() < 1.0,
        evaluations: field.samples.len() * offsets.len() * pairs.len(),
    })
}

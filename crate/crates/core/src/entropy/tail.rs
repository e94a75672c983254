use serde::Serialize;

use super::{gamma_set, small_set_rate, SetCounts, ZERO_RATE_THRESHOLD};
use crate::error::{invalid, Result};
use crate::system::SystemSpec;
use crate::torus::{quasi_random_points, TorusPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct TailEntropyConfig {
    pub eps_list: Vec<f64>,
    pub base_samples: usize,
    /// Bowen-ball horizon `N`.
    pub horizon: usize,
    pub grid_res: f64,
    pub inner_eps: f64,
    /// Largest `n` used when counting inside each Bowen ball.
    pub count_horizon: usize,
    pub threshold: f64,
    pub bilateral: bool,
    pub seed: u64,
}

impl TailEntropyConfig {
    pub fn new(eps_list: Vec<f64>, grid_res: f64, inner_eps: f64) -> Self {
        Self {
            eps_list,
            base_samples: 16,
            horizon: 40,
            grid_res,
            inner_eps,
            count_horizon: 12,
            threshold: ZERO_RATE_THRESHOLD,
            bilateral: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaseRate {
    pub index: usize,
    pub base: TorusPoint,
    pub members: usize,
    pub rate: f64,
    pub counts: SetCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub sup_rate: f64,
    pub argmax_index: usize,
    pub argmax_base: TorusPoint,
    pub bases: Vec<BaseRate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEntropyReport {
    pub system: String,
    pub epsilon_values: Vec<f64>,
    pub per_epsilon: Vec<EpsilonRow>,
    pub inner_eps: f64,
    pub horizon: usize,
    pub grid_res: f64,
    pub threshold: f64,
    /// Every supremum is below the threshold.
    pub verdict: bool,
    /// Largest tested `ε` whose supremum is below the threshold.
    pub largest_passing_epsilon: Option<f64>,
    /// `(ε, base index, n)` where the count sandwich fails.
    pub sandwich_violations: Vec<(f64, usize, usize)>,
}

/// Sup over quasi-random bases of the growth rate of `Γ_ε(x)` at scale `inner_eps`.
pub fn tail_entropy(sys: &SystemSpec, cfg: &TailEntropyConfig) -> Result<TailEntropyReport> {
    if cfg.eps_list.is_empty() {
        return Err(invalid("eps_list", "must be non-empty"));
    }
    if cfg.base_samples == 0 {
        return Err(invalid("base_samples", "must be positive"));
    }
    let min_eps = cfg.eps_list.iter().copied().fold(f64::INFINITY, f64::min);
    if !(cfg.inner_eps > 0.0 && cfg.inner_eps < min_eps) {
        return Err(invalid("inner_eps", "must lie in (0, min eps)"));
    }
    if cfg.count_horizon < 3 {
        return Err(invalid(
            "count_horizon",
            "need at least 3 horizons to fit a rate",
        ));
    }
    let bases = quasi_random_points(sys.dim, cfg.base_samples, cfg.seed);
    let jobs: Vec<(usize, usize)> = (0..cfg.eps_list.len())
        .flat_map(|e| (0..bases.len()).map(move |b| (e, b)))
        .collect();
    let results = crate::par::par_map(&jobs, |&(e, b)| -> Result<BaseRate> {
        let g = gamma_set(
            sys,
            &bases[b],
            cfg.eps_list[e],
            cfg.horizon,
            cfg.grid_res,
            cfg.bilateral,
        )?;
        let pts: Vec<Vec<f64>> = g.members.iter().map(|p| p.coords().to_vec()).collect();
        let (rate, counts) = small_set_rate(sys, &pts, cfg.count_horizon, cfg.inner_eps)?;
        Ok(BaseRate {
            index: b,
            base: bases[b].clone(),
            members: g.len(),
            rate,
            counts,
        })
    });
    let mut rows: Vec<EpsilonRow> = Vec::new();
    let mut it = results.into_iter();
    for &eps in &cfg.eps_list {
        let mut per_base = Vec::with_capacity(bases.len());
        for _ in 0..bases.len() {
            per_base.push(it.next().expect("one result per job")?);
        }
        let (mut arg, mut sup) = (0, f64::NEG_INFINITY);
        for r in &per_base {
            if r.rate > sup {
                sup = r.rate;
                arg = r.index;
            }
        }
        rows.push(EpsilonRow {
            epsilon: eps,
            sup_rate: sup,
            argmax_index: arg,
            argmax_base: bases[arg].clone(),
            bases: per_base,
        });
    }
    let sandwich_violations = rows
        .iter()
        .flat_map(|r| {
            r.bases.iter().flat_map(move |b| {
                b.counts
                    .sandwich_violations()
                    .into_iter()
                    .map(move |n| (r.epsilon, b.index, n))
            })
        })
        .collect();
    let verdict = rows.iter().all(|r| r.sup_rate < cfg.threshold);
    let largest_passing_epsilon = rows
        .iter()
        .filter(|r| r.sup_rate < cfg.threshold)
        .map(|r| r.epsilon)
        .fold(None, |acc: Option<f64>, e| {
            Some(acc.map_or(e, |a| a.max(e)))
        });
    Ok(TailEntropyReport {
        system: sys.name.clone(),
        epsilon_values: cfg.eps_list.clone(),
        per_epsilon: rows,
        inner_eps: cfg.inner_eps,
        horizon: cfg.horizon,
        grid_res: cfg.grid_res,
        threshold: cfg.threshold,
        verdict,
        largest_passing_epsilon,
        sandwich_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{cat2, identity2};

    #[test]
    fn identity_has_zero_tail_entropy() {
        let mut cfg = TailEntropyConfig::new(vec![0.05], 1.0 / 256.0, 0.01);
        cfg.base_samples = 3;
        cfg.horizon = 10;
        let r = tail_entropy(&identity2(), &cfg).unwrap();
        assert!(r.verdict);
        assert_eq!(r.per_epsilon[0].sup_rate, 0.0);
        assert_eq!(r.largest_passing_epsilon, Some(0.05));
    }

    #[test]
    fn sup_matches_table() {
        let mut cfg = TailEntropyConfig::new(vec![0.03, 0.05], 1.0 / 512.0, 0.01);
        cfg.base_samples = 4;
        let r = tail_entropy(&cat2(), &cfg).unwrap();
        for row in &r.per_epsilon {
            let m = row
                .bases
                .iter()
                .map(|b| b.rate)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(m, row.sup_rate);
            assert!(row.sup_rate >= 0.0 && row.sup_rate <= 0.02);
            assert_eq!(row.bases[row.argmax_index].rate, row.sup_rate);
            for b in &row.bases {
                assert!(b.counts.sandwich_violations().is_empty());
            }
        }
    }

    #[test]
    fn inner_eps_must_be_smaller() {
        let cfg = TailEntropyConfig::new(vec![0.05], 1.0 / 256.0, 0.05);
        assert!(tail_entropy(&cat2(), &cfg).is_err());
    }
}

use serde::Serialize;

use crate::error::{invalid, DynError, Result};
use crate::system::SystemSpec;
use crate::torus::{torus_distance_raw, wrap01, TorusPoint};

/// Grid sample of the points whose orbit stays `ε`-close to the orbit of `base`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaSet {
    pub base: TorusPoint,
    pub epsilon: f64,
    pub horizon: usize,
    pub bilateral: bool,
    pub grid_res: f64,
    pub members: Vec<TorusPoint>,
    /// Lifted displacement `y - x` of each member (same order as `members`).
    pub offsets: Vec<Vec<f64>>,
    /// Number of grid seeds in the closed `ε`-ball.
    pub seeds: usize,
}

impl GammaSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Largest `|y - x|` over members.
    pub fn radius(&self) -> f64 {
        self.offsets
            .iter()
            .map(|o| o.iter().map(|c| c * c).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Recomputes every orbit and confirms the membership condition.
    pub fn verify(&self, sys: &SystemSpec) -> bool {
        let x = self.base.coords();
        let lo = if self.bilateral {
            -(self.horizon as i64)
        } else {
            0
        };
        self.members.iter().all(|y| {
            (lo..=self.horizon as i64).all(|n| {
                torus_distance_raw(&sys.iterate(x, n), &sys.iterate(y.coords(), n))
                    <= self.epsilon + 1e-12
            })
        })
    }
}

fn ball_offsets(dim: usize, eps: f64, h: f64) -> Vec<Vec<f64>> {
    let k = (eps / h).floor() as i64;
    let side = (2 * k + 1) as usize;
    let total = side.pow(dim as u32);
    let mut out = Vec::new();
    for mut idx in 0..total {
        let mut v = vec![0.0; dim];
        for j in (0..dim).rev() {
            v[j] = ((idx % side) as i64 - k) as f64 * h;
            idx /= side;
        }
        if v.iter().map(|c| c * c).sum::<f64>().sqrt() <= eps * (1.0 + 1e-12) {
            out.push(v);
        }
    }
    out
}

/// Seeds the grid `x + h·k` inside the closed `ε`-ball and keeps the points whose
/// iterates `f^i` stay within `ε` of `f^i(x)` for `0 ≤ i ≤ N` (and `-N ≤ i` when bilateral).
pub fn gamma_set(
    sys: &SystemSpec,
    x: &TorusPoint,
    eps: f64,
    horizon: usize,
    grid_res: f64,
    bilateral: bool,
) -> Result<GammaSet> {
    if x.dim() != sys.dim {
        return Err(DynError::DimensionMismatch {
            expected: sys.dim,
            got: x.dim(),
        });
    }
    if !(grid_res > 0.0) || !(eps > 2.0 * grid_res) {
        return Err(invalid(
            "grid_res",
            format!("resolution {grid_res} does not refine the {eps}-ball (need eps > 2 grid_res)"),
        ));
    }
    if eps >= 0.5 {
        return Err(invalid("eps", "must be below 1/2"));
    }
    let d = sys.dim;
    let base = x.coords();
    let fwd = orbit(sys, base, horizon, false);
    let bwd = if bilateral {
        orbit(sys, base, horizon, true)
    } else {
        Vec::new()
    };
    let seeds = ball_offsets(d, eps, grid_res);
    let n_seeds = seeds.len();
    let eps_sq = eps * eps * (1.0 + 1e-12);
    let mut cur = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut members = Vec::new();
    let mut offsets = Vec::new();
    'seed: for off in seeds {
        let start: Vec<f64> = base.iter().zip(&off).map(|(b, o)| wrap01(b + o)).collect();
        cur.copy_from_slice(&start);
        for target in fwd.iter().skip(1) {
            sys.forward_in_place(&mut cur, &mut scratch);
            if crate::torus::torus_distance_sq(&cur, target) > eps_sq {
                continue 'seed;
            }
        }
        cur.copy_from_slice(&start);
        for target in bwd.iter().skip(1) {
            sys.inverse_in_place(&mut cur, &mut scratch);
            if crate::torus::torus_distance_sq(&cur, target) > eps_sq {
                continue 'seed;
            }
        }
        members.push(TorusPoint::new(start));
        offsets.push(off);
    }
    Ok(GammaSet {
        base: x.clone(),
        epsilon: eps,
        horizon,
        bilateral,
        grid_res,
        members,
        offsets,
        seeds: n_seeds,
    })
}

fn orbit(sys: &SystemSpec, x: &[f64], n: usize, backward: bool) -> Vec<Vec<f64>> {
    let mut cur = x.to_vec();
    let mut scratch = vec![0.0; x.len()];
    let mut out = vec![cur.clone()];
    for _ in 0..n {
        if backward {
            sys.inverse_in_place(&mut cur, &mut scratch);
        } else {
            sys.forward_in_place(&mut cur, &mut scratch);
        }
        out.push(cur.clone());
    }
    out
}

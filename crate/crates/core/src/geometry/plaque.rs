use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, DynError, Result};
use crate::linalg::{orthonormalize, sigma_min};
use crate::splitting::{cs_dim, cu_dim, Composite};
use crate::system::SystemSpec;
use crate::torus::{lift_near, torus_distance_raw, TorusPoint};

const CONDITION_FLOOR: f64 = 1e-8;

/// Affine plaque family tangent to a composite bundle (systems with linear laminations).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaqueSpec {
    pub base: TorusPoint,
    pub selector: Composite,
    /// Outer, working and inner radii `R > r > r₁ > 0`.
    pub radii: (f64, f64, f64),
    /// Orthonormal directions of the plaques, one per column.
    #[serde(skip)]
    pub directions: DMatrix<f64>,
}

impl PlaqueSpec {
    /// Plaques parallel to the exact composite bundle of a linear system.
    pub fn affine(
        sys: &SystemSpec,
        dims: &[usize],
        base: &TorusPoint,
        selector: Composite,
        radii: (f64, f64, f64),
    ) -> Result<Self> {
        let (big, r, r1) = radii;
        if !(big > r && r > r1 && r1 > 0.0) {
            return Err(invalid("radii", "need R > r > r1 > 0"));
        }
        let exact = match (&sys.analytic_splitting, sys.is_linear()) {
            (Some(e), true) => e,
            _ => {
                return Err(DynError::Unsupported {
                    system: sys.name.clone(),
                    reason: "plaques need explicit affine laminations".into(),
                })
            }
        };
        let cols: Vec<Vec<f64>> = exact.iter().flat_map(|f| f.basis.iter().cloned()).collect();
        let total: usize = dims.iter().sum();
        if total != sys.dim || cols.len() != total {
            return Err(invalid("dims", "do not match the system"));
        }
        let k = dims.len() - 2;
        let range = match selector {
            Composite::Cs(i) if i <= k => 0..cs_dim(dims, i),
            Composite::Cu(i) if (1..=k + 1).contains(&i) => total - cu_dim(dims, i)..total,
            _ => return Err(invalid("selector", "outside the splitting")),
        };
        let picked: Vec<&Vec<f64>> = cols[range].iter().collect();
        let directions =
            orthonormalize(DMatrix::from_fn(sys.dim, picked.len(), |r, c| picked[c][r]));
        Ok(Self {
            base: base.clone(),
            selector,
            radii,
            directions,
        })
    }
}

/// The single point of `Ŵ^{cs,i}_p(x) ∩ Ŵ^{cu,i+1}_p(y)`, from the affine system
/// `x + B_cs s = y + B_cu t` with `y` lifted next to `x`.
pub fn plaque_intersection(
    p: &TorusPoint,
    spec_cs: &PlaqueSpec,
    spec_cu: &PlaqueSpec,
    x: &TorusPoint,
    y: &TorusPoint,
) -> Result<TorusPoint> {
    match (spec_cs.selector, spec_cu.selector) {
        (Composite::Cs(i), Composite::Cu(j)) if j == i + 1 => {}
        _ => return Err(invalid("selector", "need a (cs,i) and a (cu,i+1) plaque")),
    }
    let d = p.dim();
    let (a, b) = (&spec_cs.directions, &spec_cu.directions);
    if a.ncols() + b.ncols() != d {
        return Err(invalid(
            "selector",
            "plaque dimensions must add up to the ambient one",
        ));
    }
    let r = spec_cs.radii.1.min(spec_cu.radii.1);
    for (name, q) in [("x", x), ("y", y)] {
        if torus_distance_raw(q.coords(), p.coords()) > r {
            return Err(invalid(
                if name == "x" { "x" } else { "y" },
                format!("farther than r = {r} from the plaque centre"),
            ));
        }
    }
    let mut m = DMatrix::zeros(d, d);
    m.columns_mut(0, a.ncols()).copy_from(a);
    m.columns_mut(a.ncols(), b.ncols()).copy_from(&(-b));
    let smin = sigma_min(&m);
    if smin < CONDITION_FLOOR {
        return Err(DynError::IllConditioned(smin));
    }
    let yl = lift_near(x.coords(), y.coords());
    let rhs = DMatrix::from_fn(d, 1, |r, _| yl[r] - x.coords()[r]);
    let sol = m.lu().solve(&rhs).ok_or(DynError::IllConditioned(smin))?;
    let s = sol.rows(0, a.ncols()).into_owned();
    let z = a * s;
    Ok(TorusPoint::new(
        x.coords()
            .iter()
            .enumerate()
            .map(|(r, c)| c + z[(r, 0)])
            .collect::<Vec<f64>>(),
    ))
}

//! Torus diffeomorphisms of affine-plus-shear type, their orbits and the built-in registry.
//!
//! Every system is `f(x) = A · S_m ∘ … ∘ S_1(x) + t (mod 1)` where `A` is a unimodular
//! integer matrix and each `S_j` is a shear
//! `x[target] += amplitude / (2π) · sin(2π · frequency · x[source])` with
//! `source != target`. Each shear is invertible in closed form, so the whole map is.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, DynError, Result};
use crate::torus::{wrap01, TorusPoint};

pub const DEFAULT_KAPPA: f64 = 0.05;

pub fn default_alpha() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShearTerm {
    pub amplitude: f64,
    pub frequency: i64,
    pub source: usize,
    pub target: usize,
}

/// One block of an exact invariant splitting: orthonormal basis columns and growth rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantFactor {
    pub basis: Vec<Vec<f64>>,
    pub rate: f64,
}

impl InvariantFactor {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn matrix(&self, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, self.basis.len(), |r, c| self.basis[c][r])
    }
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub name: String,
    pub dim: usize,
    matrix: Vec<i64>,
    inverse: Vec<i64>,
    translation: Vec<f64>,
    shears: Vec<ShearTerm>,
    /// Exact splitting ordered by increasing rate; present for linear systems only.
    pub analytic_splitting: Option<Vec<InvariantFactor>>,
    pub params: BTreeMap<String, f64>,
}

fn int_inverse(dim: usize, m: &[i64]) -> Option<Vec<i64>> {
    let a = DMatrix::from_fn(dim, dim, |r, c| m[r * dim + c] as f64);
    let inv = a.try_inverse()?;
    let out: Vec<i64> = (0..dim * dim)
        .map(|k| inv[(k / dim, k % dim)].round() as i64)
        .collect();
    // exact integer check: m * out == I
    for r in 0..dim {
        for c in 0..dim {
            let s: i64 = (0..dim).map(|k| m[r * dim + k] * out[k * dim + c]).sum();
            if s != i64::from(r == c) {
                return None;
            }
        }
    }
    Some(out)
}

impl SystemSpec {
    /// Builds an affine-plus-shear system. `matrix` is row-major `dim × dim`.
    pub fn affine(
        name: impl Into<String>,
        dim: usize,
        matrix: Vec<i64>,
        translation: Vec<f64>,
        shears: Vec<ShearTerm>,
    ) -> Result<Self> {
        if dim == 0 || dim > 8 {
            return Err(invalid("dim", format!("must be in 1..=8, got {dim}")));
        }
        if matrix.len() != dim * dim {
            return Err(invalid(
                "matrix",
                format!("expected {} entries, got {}", dim * dim, matrix.len()),
            ));
        }
        if translation.len() != dim {
            return Err(DynError::DimensionMismatch {
                expected: dim,
                got: translation.len(),
            });
        }
        for s in &shears {
            if s.source >= dim || s.target >= dim {
                return Err(invalid("terms", "coordinate index out of range"));
            }
            if s.source == s.target {
                return Err(invalid("terms", "source and target coordinate must differ"));
            }
            if !s.amplitude.is_finite() {
                return Err(invalid("terms", "amplitude must be finite"));
            }
        }
        let inverse = int_inverse(dim, &matrix)
            .ok_or_else(|| invalid("matrix", "integer matrix must have determinant ±1"))?;
        let mut sys = SystemSpec {
            name: name.into(),
            dim,
            matrix,
            inverse,
            translation,
            shears,
            analytic_splitting: None,
            params: BTreeMap::new(),
        };
        if sys.shears.is_empty() {
            sys.analytic_splitting = sys.linear_splitting();
        }
        Ok(sys)
    }

    fn with_param(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.to_string(), v);
        self
    }

    /// Row-major integer matrix `A`.
    pub fn matrix(&self) -> &[i64] {
        &self.matrix
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    pub fn shears(&self) -> &[ShearTerm] {
        &self.shears
    }

    pub fn is_linear(&self) -> bool {
        self.shears.is_empty()
    }

    pub fn linear_part(&self) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |r, c| self.matrix[r * d + c] as f64)
    }

    /// Exact eigen-splitting of a symmetric linear part, grouped by equal growth rate.
    fn linear_splitting(&self) -> Option<Vec<InvariantFactor>> {
        let a = self.linear_part();
        if (&a - a.transpose()).abs().max() > 0.0 {
            return None;
        }
        let eig = SymmetricEigen::new(a);
        let mut pairs: Vec<(f64, DVector<f64>)> = (0..self.dim)
            .map(|k| {
                (
                    eig.eigenvalues[k].abs().ln(),
                    eig.eigenvectors.column(k).into_owned(),
                )
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut factors: Vec<InvariantFactor> = Vec::new();
        for (rate, v) in pairs {
            let col = v.normalize().iter().copied().collect::<Vec<_>>();
            match factors.last_mut() {
                Some(f) if (f.rate - rate).abs() < 1e-9 => f.basis.push(col),
                _ => factors.push(InvariantFactor {
                    basis: vec![col],
                    rate,
                }),
            }
        }
        Some(factors)
    }

    #[inline]
    fn apply_shears(&self, y: &mut [f64]) {
        for s in &self.shears {
            let f = s.frequency as f64;
            y[s.target] += s.amplitude / TAU * (TAU * f * y[s.source]).sin();
        }
    }

    /// In-place forward map on raw coordinates (result normalized to `[0,1)`).
    #[inline]
    pub fn forward_in_place(&self, x: &mut [f64], scratch: &mut [f64]) {
        let d = self.dim;
        self.apply_shears(x);
        for ((out, row), t) in scratch
            .iter_mut()
            .zip(self.matrix.chunks_exact(d))
            .zip(&self.translation)
        {
            *out = t + row
                .iter()
                .zip(x.iter())
                .map(|(&m, &v)| m as f64 * v)
                .sum::<f64>();
        }
        for (v, s) in x.iter_mut().zip(scratch.iter()) {
            *v = wrap01(*s);
        }
    }

    #[inline]
    pub fn inverse_in_place(&self, z: &mut [f64], scratch: &mut [f64]) {
        let d = self.dim;
        for (out, row) in scratch.iter_mut().zip(self.inverse.chunks_exact(d)) {
            *out = row
                .iter()
                .zip(z.iter().zip(&self.translation))
                .map(|(&m, (&v, t))| m as f64 * (v - t))
                .sum();
        }
        for s in self.shears.iter().rev() {
            let f = s.frequency as f64;
            scratch[s.target] -= s.amplitude / TAU * (TAU * f * scratch[s.source]).sin();
        }
        for r in 0..d {
            z[r] = wrap01(scratch[r]);
        }
    }

    pub fn forward(&self, x: &TorusPoint) -> TorusPoint {
        let mut c = x.coords().to_vec();
        let mut s = vec![0.0; self.dim];
        self.forward_in_place(&mut c, &mut s);
        TorusPoint::new(c)
    }

    pub fn inverse(&self, x: &TorusPoint) -> TorusPoint {
        let mut c = x.coords().to_vec();
        let mut s = vec![0.0; self.dim];
        self.inverse_in_place(&mut c, &mut s);
        TorusPoint::new(c)
    }

    /// `f^n(x)` for any integer `n`.
    pub fn iterate(&self, x: &[f64], n: i64) -> Vec<f64> {
        let mut c = x.to_vec();
        let mut s = vec![0.0; self.dim];
        for _ in 0..n.unsigned_abs() {
            if n > 0 {
                self.forward_in_place(&mut c, &mut s);
            } else {
                self.inverse_in_place(&mut c, &mut s);
            }
        }
        c
    }

    /// `Df(x)`.
    pub fn jacobian_raw(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let mut y = x.to_vec();
        let mut j = DMatrix::<f64>::identity(d, d);
        for s in &self.shears {
            let f = s.frequency as f64;
            let c = s.amplitude * f * (TAU * f * y[s.source]).cos();
            // row_target += c * row_source
            let src = j.row(s.source).into_owned();
            let mut tgt = j.row_mut(s.target);
            tgt += src * c;
            y[s.target] += s.amplitude / TAU * (TAU * f * y[s.source]).sin();
        }
        self.linear_part() * j
    }

    pub fn jacobian(&self, x: &TorusPoint) -> DMatrix<f64> {
        self.jacobian_raw(x.coords())
    }

    /// `D(f^{-1})(z)`, composed from the inverse shears in closed form.
    pub fn inverse_jacobian_raw(&self, z: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let ainv = DMatrix::from_fn(d, d, |r, c| self.inverse[r * d + c] as f64);
        let mut y: Vec<f64> = (0..d)
            .map(|r| {
                (0..d)
                    .map(|c| self.inverse[r * d + c] as f64 * (z[c] - self.translation[c]))
                    .sum()
            })
            .collect();
        let mut j = ainv;
        for s in self.shears.iter().rev() {
            let f = s.frequency as f64;
            let c = s.amplitude * f * (TAU * f * y[s.source]).cos();
            let src = j.row(s.source).into_owned();
            let mut tgt = j.row_mut(s.target);
            tgt -= src * c;
            y[s.target] -= s.amplitude / TAU * (TAU * f * y[s.source]).sin();
        }
        j
    }

    pub fn inverse_jacobian(&self, z: &TorusPoint) -> DMatrix<f64> {
        self.inverse_jacobian_raw(z.coords())
    }

    /// Largest `log ||Df||` or `log ||Df^{-1}||` bound implied by the matrix and shear amplitudes
    /// (used as the two-sided bound on log-growth sequences).
    pub fn derivative_log_bound(&self) -> f64 {
        let shear: f64 = self
            .shears
            .iter()
            .map(|s| s.amplitude.abs() * s.frequency.unsigned_abs() as f64)
            .sum();
        let a = self.linear_part();
        let ai = DMatrix::from_fn(self.dim, self.dim, |r, c| {
            self.inverse[r * self.dim + c] as f64
        });
        let na = a.norm();
        let ni = ai.norm();
        (na.max(ni) * (1.0 + shear)).ln()
    }
}

/// Orbit window `f^{n_min}(x), …, f^{n_max}(x)` with the Jacobian cocycle along it.
#[derive(Debug, Clone)]
pub struct OrbitSegment {
    pub base: TorusPoint,
    pub n_min: i64,
    pub n_max: i64,
    pub points: Vec<TorusPoint>,
    /// `cocycle[k] = Df(points[k])`, one per step of the window.
    pub cocycle: Vec<DMatrix<f64>>,
}

impl OrbitSegment {
    /// Point `f^n(x)` for `n` inside the window.
    pub fn at(&self, n: i64) -> &TorusPoint {
        &self.points[(n - self.n_min) as usize]
    }
}

pub fn make_orbit(
    sys: &SystemSpec,
    x: &TorusPoint,
    n_min: i64,
    n_max: i64,
) -> Result<OrbitSegment> {
    if x.dim() != sys.dim {
        return Err(DynError::DimensionMismatch {
            expected: sys.dim,
            got: x.dim(),
        });
    }
    if n_min > 0 || n_max < 0 {
        return Err(invalid(
            "window",
            format!("need n_min <= 0 <= n_max, got [{n_min}, {n_max}]"),
        ));
    }
    let mut back = Vec::with_capacity((-n_min) as usize);
    let mut p = x.clone();
    for _ in 0..(-n_min) {
        p = sys.inverse(&p);
        back.push(p.clone());
    }
    back.reverse();
    let mut points = back;
    points.push(x.clone());
    let mut p = x.clone();
    for _ in 0..n_max {
        p = sys.forward(&p);
        points.push(p.clone());
    }
    let steps = (n_max - n_min) as usize;
    let cocycle = points[..steps].iter().map(|q| sys.jacobian(q)).collect();
    Ok(OrbitSegment {
        base: x.clone(),
        n_min,
        n_max,
        points,
        cocycle,
    })
}

fn cat_block() -> [i64; 4] {
    [2, 1, 1, 1]
}

pub fn identity2() -> SystemSpec {
    SystemSpec::affine("identity2", 2, vec![1, 0, 0, 1], vec![0.0, 0.0], vec![]).unwrap()
}

pub fn rot1(alpha: f64) -> SystemSpec {
    SystemSpec::affine("rot1", 1, vec![1], vec![alpha], vec![])
        .unwrap()
        .with_param("alpha", alpha)
}

pub fn cat2() -> SystemSpec {
    SystemSpec::affine("cat2", 2, cat_block().to_vec(), vec![0.0, 0.0], vec![]).unwrap()
}

fn cat3_matrix() -> Vec<i64> {
    let c = cat_block();
    vec![c[0], c[1], 0, c[2], c[3], 0, 0, 0, 1]
}

pub fn cat3(alpha: f64) -> SystemSpec {
    SystemSpec::affine("cat3", 3, cat3_matrix(), vec![0.0, 0.0, alpha], vec![])
        .unwrap()
        .with_param("alpha", alpha)
}

/// `(x, y, θ) ↦ (A(x, y), θ + α + κ/(2π) · sin(2πx))`.
pub fn cat3skew(alpha: f64, kappa: f64) -> SystemSpec {
    let shear = ShearTerm {
        amplitude: kappa,
        frequency: 1,
        source: 0,
        target: 2,
    };
    SystemSpec::affine(
        "cat3skew",
        3,
        cat3_matrix(),
        vec![0.0, 0.0, alpha],
        vec![shear],
    )
    .unwrap()
    .with_param("alpha", alpha)
    .with_param("kappa", kappa)
}

pub fn cat4() -> SystemSpec {
    let c = cat_block();
    let m = vec![
        c[0], c[1], 0, 0, //
        c[2], c[3], 0, 0, //
        0, 0, c[0], c[1], //
        0, 0, c[2], c[3],
    ];
    SystemSpec::affine("cat4", 4, m, vec![0.0; 4], vec![]).unwrap()
}

/// Registry with explicit rotation number and skew coupling.
pub fn registry_with(alpha: f64, kappa: f64) -> Vec<SystemSpec> {
    vec![
        identity2(),
        rot1(alpha),
        cat2(),
        cat3(alpha),
        cat3skew(alpha, kappa),
        cat4(),
    ]
}

pub fn registry() -> Vec<SystemSpec> {
    registry_with(default_alpha(), DEFAULT_KAPPA)
}

pub fn lookup(name: &str) -> Result<SystemSpec> {
    registry()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| DynError::UnknownSystem(name.to_string()))
}

/// Golden mean `(3+√5)/2`, the expanding eigenvalue of the cat block.
pub fn cat_eigenvalue() -> f64 {
    (3.0 + 5f64.sqrt()) / 2.0
}

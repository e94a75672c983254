use anyhow::{bail, Context, Result};
use dynlab::entropy::{gamma_set, grid_scan, tail_entropy, TailEntropyConfig};
use dynlab::geometry::{
    check_central_segment_in_gamma, curve_entropy_zero_check, fmt_sig, integrate_central_curve,
    verify_gamma_in_curve, CentralCurve, CurveVerdict, GammaCurveOptions, SegmentStatus,
};
use dynlab::pliss::{pliss_times, verify_central_expansion, LogGrowthSequence};
use dynlab::splitting::{
    build_adapted_metric, compute_bundles_with, cone_invariance, domination_reports,
    uniformity_bounds, BundleField, BundleOptions, Composite,
};
use dynlab::system::registry;
use dynlab::torus::quasi_random_points;
use dynlab::{DynError, SystemSpec, TorusPoint};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::opts::{CurveOpts, DominationOpts, EntropyOpts, GammaOpts, PlissOpts, Resolved};
use crate::output::{Outcome, Table};

const CURVE_LENGTH_CAP: f64 = 0.5;

fn config(r: &Resolved, extra: Value) -> Result<Value> {
    let mut v = serde_json::to_value(r)?;
    if let (Some(m), Value::Object(e)) = (v.as_object_mut(), extra) {
        m.extend(e);
    }
    Ok(v)
}

fn grid_res(r: &Resolved) -> f64 {
    1.0 / r.grid.unwrap_or(256) as f64
}

fn default_dims(sys: &SystemSpec) -> Vec<usize> {
    match &sys.analytic_splitting {
        Some(f) if f.len() >= 2 => f.iter().map(|f| f.dim()).collect(),
        _ => vec![1; sys.dim],
    }
}

fn dims(sys: &SystemSpec, r: &Resolved) -> Vec<usize> {
    r.dims.clone().unwrap_or_else(|| default_dims(sys))
}

fn base_point(sys: &SystemSpec, r: &Resolved) -> Result<TorusPoint> {
    match &r.point {
        Some(p) if p.len() != sys.dim => {
            bail!(
                "invalid input `point`: expected {} coordinates, got {}",
                sys.dim,
                p.len()
            )
        }
        Some(p) => Ok(TorusPoint::new(p.clone())),
        None => Ok(quasi_random_points(sys.dim, 1, r.seed).remove(0)),
    }
}

fn field_summary(field: &BundleField) -> Value {
    json!({
        "dims": field.dims,
        "samples": field.samples.len(),
        "horizons": field.samples.iter().map(|s| s.horizon).collect::<Vec<_>>(),
        "mean_rates": field.mean_rates(),
        "invariance_residual": field.invariance_residual,
        "intersection_residual": field.intersection_residual,
    })
}

fn point_table(name: &str, dim: usize, points: impl Iterator<Item = Vec<f64>>) -> Table {
    let header: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
    let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut t = Table::new(name, &refs);
    for p in points {
        t.push_floats(&p);
    }
    t
}

fn curve_table(name: &str, curve: &CentralCurve) -> Table {
    let d = curve.base.dim();
    let mut header = vec!["arclen".to_string()];
    header.extend((1..=d).map(|k| format!("x{k}")));
    let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut t = Table::new(name, &refs);
    for (s, p) in curve.arclen.iter().zip(&curve.nodes) {
        let mut row = vec![*s];
        row.extend_from_slice(p);
        t.push_floats(&row);
    }
    t
}

pub fn systems() -> Result<Outcome> {
    let list: Vec<Value> = registry()
        .iter()
        .map(|s| {
            json!({
                "name": s.name,
                "dim": s.dim,
                "linear": s.is_linear(),
                "matrix": s.matrix(),
                "translation": s.translation(),
                "shears": s.shears(),
                "params": s.params,
                "derivative_log_bound": s.derivative_log_bound(),
                "exact_rates": s.analytic_splitting.as_ref().map(|f| f.iter().map(|f| f.rate).collect::<Vec<_>>()),
            })
        })
        .collect();
    Outcome::new("systems", json!({}), json!({ "systems": list }))
}

/// Sum of the positive exact rates counted with multiplicity.
fn reference_rate(sys: &SystemSpec) -> Option<f64> {
    sys.analytic_splitting
        .as_ref()
        .map(|f| f.iter().map(|f| f.dim() as f64 * f.rate.max(0.0)).sum())
}

pub fn entropy(sys: &SystemSpec, r: &Resolved, o: &EntropyOpts) -> Result<Outcome> {
    let per_axis = r.grid.unwrap_or_else(|| {
        if sys.dim <= 2 {
            1024
        } else {
            (f64::powf((1u64 << 20) as f64, 1.0 / sys.dim as f64)).floor() as usize
        }
    });
    let n_max = r.n_max.unwrap_or(8);
    let ns: Vec<usize> = (1..=n_max).collect();
    let fit = match o.fit.as_deref() {
        None => None,
        Some([lo, hi]) => Some((*lo, *hi)),
        Some(_) => bail!("invalid input `fit`: expected two values lo,hi"),
    };
    let mut scans = Vec::new();
    let mut tables = Vec::new();
    for &eps in &r.eps {
        let scan = grid_scan(sys, per_axis, eps, &ns, fit)?;
        let mut t = Table::new(
            format!("scan_eps{}", fmt_sig(eps)),
            &["n", "r_span", "s_sep"],
        );
        for (n, a, b) in scan.rows() {
            t.push(vec![n.to_string(), a.to_string(), b.to_string()]);
        }
        tables.push(t);
        scans.push(scan);
    }
    let violations: usize = scans.iter().map(|s| s.sandwich_violations().len()).sum();
    let reference = reference_rate(sys);
    let payload = json!({
        "system": sys.name,
        "scans": scans,
        "reference_rate": reference,
        "relative_error": reference.filter(|&h| h > 0.0).map(|h| scans.iter().map(|s| (s.rate - h) / h).collect::<Vec<_>>()),
        "sandwich_violations": violations,
    });
    let cfg = config(r, json!({ "grid": per_axis, "n_max": n_max, "fit": o.fit }))?;
    let mut out = Outcome::new("entropy", cfg, payload)?.judge(
        violations == 0,
        "counts consistent",
        "spanning/separated sandwich violated",
    );
    out.tables = tables;
    Ok(out)
}

pub fn gamma(sys: &SystemSpec, r: &Resolved, o: &GammaOpts) -> Result<Outcome> {
    let x = base_point(sys, r)?;
    let bilateral = !o.forward_only.unwrap_or(false);
    let g = gamma_set(sys, &x, r.delta, r.horizon, grid_res(r), bilateral)?;
    let verified = g.verify(sys);
    let table = point_table(
        "members",
        sys.dim,
        g.members.iter().map(|p| p.coords().to_vec()),
    );
    let payload = json!({
        "system": sys.name,
        "members": g.len(),
        "radius": g.radius(),
        "singleton": g.len() == 1,
        "verified": verified,
        "gamma": g,
    });
    let cfg = config(
        r,
        json!({ "grid_res": grid_res(r), "bilateral": bilateral, "point": x }),
    )?;
    let mut out = Outcome::new("gamma", cfg, payload)?.judge(
        verified,
        "orbit distances verified",
        "member leaves the Bowen ball",
    );
    out.tables.push(table);
    Ok(out)
}

fn tail_config(r: &Resolved, eps: Vec<f64>) -> TailEntropyConfig {
    let mut cfg = TailEntropyConfig::new(eps, grid_res(r), r.inner_eps);
    cfg.base_samples = r.samples;
    cfg.horizon = r.horizon;
    cfg.count_horizon = r.n_max.unwrap_or(12);
    cfg.seed = r.seed;
    cfg
}

pub fn tail(sys: &SystemSpec, r: &Resolved) -> Result<Outcome> {
    let cfg = tail_config(r, r.eps.clone());
    let rep = tail_entropy(sys, &cfg)?;
    let mut t = Table::new("tail", &["epsilon", "base", "members", "rate"]);
    let mut singletons = Vec::new();
    for row in &rep.per_epsilon {
        for b in &row.bases {
            t.push(vec![
                fmt_sig(row.epsilon),
                b.index.to_string(),
                b.members.to_string(),
                fmt_sig(b.rate),
            ]);
        }
        let n = row.bases.iter().filter(|b| b.members == 1).count();
        singletons.push(n as f64 / row.bases.len() as f64);
    }
    let pass = rep.verdict && rep.sandwich_violations.is_empty();
    let payload = json!({ "report": rep, "singleton_fraction": singletons });
    let cfg_echo = config(
        r,
        json!({ "grid_res": cfg.grid_res, "count_horizon": cfg.count_horizon, "threshold": cfg.threshold }),
    )?;
    let mut out = Outcome::new("tail-entropy", cfg_echo, payload)?.judge(
        pass,
        "h-expansive at resolution",
        "positive tail entropy at resolution",
    );
    out.tables.push(t);
    Ok(out)
}

/// Field over the sample points; a missing splitting is retried with no gap check and
/// reported.
fn field_or_degenerate(
    sys: &SystemSpec,
    points: &[TorusPoint],
    dims: &[usize],
    horizon: usize,
) -> Result<(BundleField, Option<String>)> {
    let mut opts = BundleOptions::new(horizon);
    match compute_bundles_with(sys, points, dims, &opts) {
        Ok(f) => Ok((f, None)),
        Err(e @ DynError::NoSplitting { .. }) => {
            opts.gap_tolerance = 0.0;
            Ok((
                compute_bundles_with(sys, points, dims, &opts)?,
                Some(e.to_string()),
            ))
        }
        Err(e) => Err(e.into()),
    }
}

fn selectors(k: usize) -> Vec<Composite> {
    (0..=k)
        .map(Composite::Cs)
        .chain((1..=k + 1).map(Composite::Cu))
        .collect()
}

pub fn domination(sys: &SystemSpec, r: &Resolved, o: &DominationOpts) -> Result<Outcome> {
    let dims = dims(sys, r);
    let points = quasi_random_points(sys.dim, r.samples, r.seed);
    let (field, splitting_error) = field_or_degenerate(sys, &points, &dims, r.horizon)?;
    let n_max = r.n_max.unwrap_or(20);
    let k = field.central_count();
    let pairs: Vec<usize> = (0..=k).collect();
    let reports = domination_reports(sys, &field, &pairs, n_max)?;
    let lambda = reports.iter().fold(0.0f64, |m, d| m.max(d.lambda));
    let dominated = splitting_error.is_none() && reports.iter().all(|d| d.pass);
    let mut t = Table::new("domination", &["pair", "lambda", "c", "pass"]);
    let mut products = Table::new("products", &["pair", "orbit", "n", "value"]);
    for d in &reports {
        t.push(vec![
            d.pair.to_string(),
            fmt_sig(d.lambda),
            fmt_sig(d.c),
            d.pass.to_string(),
        ]);
        for o in &d.products {
            for (n, v) in o.values.iter().enumerate() {
                products.push(vec![
                    d.pair.to_string(),
                    o.index.to_string(),
                    (n + 1).to_string(),
                    fmt_sig(*v),
                ]);
            }
        }
    }
    let lambda0 = o
        .lambda0
        .unwrap_or_else(|| 0.7f64.max((1.0 + lambda.sqrt()) / 2.0));
    let m = o.adapted_m.unwrap_or(20);
    let radius = o.cone_radius.unwrap_or(0.1);
    let nu = o.nu.unwrap_or(0.01);
    let mut adapted = Value::Null;
    let mut uniformity = Value::Null;
    let mut cones = Vec::new();
    let mut extras_ok = true;
    if dominated {
        adapted = match build_adapted_metric(sys, &field, lambda0, m) {
            Ok(a) => json!({
                "lambda0": a.lambda0,
                "horizon": a.horizon,
                "pair_rates": a.pair_rates,
                "pair_lambdas": a.pair_lambdas,
                "max_one_step": a.max_one_step,
                "fraction_ok": a.fraction_ok,
                "lambda_step": a.lambda_step,
                "refit_c": a.refit_c,
            }),
            Err(e) => {
                extras_ok = false;
                json!({ "error": e.to_string() })
            }
        };
        uniformity = serde_json::to_value(uniformity_bounds(sys, &field, nu)?)?;
        for sel in selectors(k) {
            let c = cone_invariance(sys, &field, sel, radius)?;
            extras_ok &= c.certified;
            cones.push(c);
        }
    }
    let payload = json!({
        "system": sys.name,
        "field": field_summary(&field),
        "splitting_error": splitting_error,
        "lambda": lambda,
        "reports": reports,
        "adapted_metric": adapted,
        "uniformity": uniformity,
        "cones": cones,
    });
    let cfg = config(
        r,
        json!({ "dims": dims, "n_max": n_max, "lambda0": lambda0, "adapted_m": m, "cone_radius": radius, "nu": nu }),
    )?;
    let mut out = Outcome::new("domination", cfg, payload)?.judge(
        dominated && extras_ok,
        "dominated",
        "domination not established",
    );
    out.tables.push(t);
    out.tables.push(products);
    Ok(out)
}

fn parse_selector(s: &str) -> Result<Composite> {
    let (kind, i) = s
        .split_once(':')
        .with_context(|| format!("invalid input `selector`: expected cs:i or cu:i, got `{s}`"))?;
    let i: usize = i
        .trim()
        .parse()
        .with_context(|| format!("invalid input `selector`: bad index in `{s}`"))?;
    match kind.trim() {
        "cs" => Ok(Composite::Cs(i)),
        "cu" => Ok(Composite::Cu(i)),
        _ => bail!("invalid input `selector`: expected cs:i or cu:i, got `{s}`"),
    }
}

pub fn pliss(sys: Option<&SystemSpec>, r: &Resolved, o: &PlissOpts) -> Result<Outcome> {
    let l1 = o.l1.unwrap_or(0.5);
    let l2 = o.l2.unwrap_or(0.7);
    let mut seq = match (&o.input, sys) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("input: cannot read {}", path.display()))?;
            LogGrowthSequence::from_csv(&text)?
        }
        (None, Some(sys)) => {
            let x = base_point(sys, r)?;
            let sel = parse_selector(o.selector.as_deref().unwrap_or("cs:0"))?;
            let dims = dims(sys, r);
            let field = compute_bundles_with(
                sys,
                std::slice::from_ref(&x),
                &dims,
                &BundleOptions::new(r.horizon),
            )?;
            LogGrowthSequence::along_orbit(sys, &field, &x, sel, o.length.unwrap_or(200))?
        }
        (None, None) => bail!("invalid input `input`: give --input FILE or --system NAME"),
    };
    if let Some(b) = o.bound {
        seq.bound = Some(b);
    }
    let rep = pliss_times(&seq, l1, l2)?;
    let verified = rep.verify(&seq);
    let falsified = rep.hypothesis_met && rep.n >= rep.n_min && rep.density < rep.c_bound;
    let mut t = Table::new("times", &["index"]);
    for i in &rep.indices {
        t.push(vec![i.to_string()]);
    }
    let payload = json!({
        "report": rep,
        "source": seq.source,
        "values": seq.values,
        "verified": verified,
    });
    let cfg = config(
        r,
        json!({ "l1": l1, "l2": l2, "input": o.input, "selector": o.selector, "length": o.length, "bound": o.bound }),
    )?;
    let mut out = Outcome::new("pliss", cfg, payload)?.judge(
        verified && !falsified,
        "hyperbolic times verified",
        "hyperbolic-time check failed",
    );
    out.tables.push(t);
    Ok(out)
}

pub fn curve(sys: &SystemSpec, r: &Resolved, o: &CurveOpts) -> Result<Outcome> {
    let x = base_point(sys, r)?;
    let dims = dims(sys, r);
    let field = compute_bundles_with(
        sys,
        std::slice::from_ref(&x),
        &dims,
        &BundleOptions::new(r.horizon),
    )?;
    let factor = o.factor.unwrap_or(1);
    let rho = o.rho.unwrap_or(0.5 * r.delta);
    let h = o.h_curve.unwrap_or(0.5 * grid_res(r));
    let cap = o.length_cap.unwrap_or(CURVE_LENGTH_CAP);
    let n_max = r.n_max.unwrap_or(12);
    let curve = integrate_central_curve(sys, &field, &x, factor, rho, h)?;
    let segment = check_central_segment_in_gamma(sys, &curve, r.delta, r.horizon)?;
    let ent = curve_entropy_zero_check(sys, &curve, r.inner_eps, n_max, cap)?;
    let lambda1 = o.lambda1.unwrap_or(0.7);
    let n0_search = o.n0_search.unwrap_or(50);
    let expansion = if (1..=field.central_count()).contains(&factor) {
        Some(verify_central_expansion(
            sys, &field, &curve, n0_search, lambda1,
        )?)
    } else {
        None
    };
    let sandwich_ok = ent
        .counts
        .as_ref()
        .is_none_or(|c| c.sandwich_violations().is_empty());
    let pass = segment.status != SegmentStatus::Fail
        && ent.verdict != CurveVerdict::PositiveRate
        && sandwich_ok;
    let payload = json!({
        "system": sys.name,
        "curve": { "base": curve.base, "factor": curve.factor, "rho": curve.rho, "h_curve": curve.h_curve, "nodes": curve.len(), "length": curve.length() },
        "segment": segment,
        "entropy": ent,
        "expansion": expansion,
    });
    let cfg = config(
        r,
        json!({ "point": x, "dims": dims, "factor": factor, "rho": rho, "h_curve": h, "length_cap": cap, "n_max": n_max, "lambda1": lambda1, "n0_search": n0_search }),
    )?;
    let mut out = Outcome::new("curve", cfg, payload)?.judge(
        pass,
        "curve checks passed",
        "curve check failed",
    );
    out.tables.push(curve_table("curve", &curve));
    Ok(out)
}

pub fn verify_theorem(sys: &SystemSpec, r: &Resolved, o: &CurveOpts) -> Result<Outcome> {
    let dims = dims(sys, r);
    let points = quasi_random_points(sys.dim, r.samples, r.seed);
    let (field, splitting_error) = field_or_degenerate(sys, &points, &dims, r.horizon)?;
    let k = field.central_count();
    let pairs: Vec<usize> = (0..=k).collect();
    let reports = domination_reports(sys, &field, &pairs, 20)?;
    let lambda = reports.iter().fold(0.0f64, |m, d| m.max(d.lambda));
    let dom_ok = splitting_error.is_none() && reports.iter().all(|d| d.pass);
    let grid_res = grid_res(r);
    let cap = o.length_cap.unwrap_or(CURVE_LENGTH_CAP);
    let count_n = r.n_max.unwrap_or(12);
    let cfg = config(
        r,
        json!({ "dims": dims, "grid_res": grid_res, "length_cap": cap, "n_max": count_n, "domination_n_max": 20 }),
    )?;
    let dom_payload = json!({
        "splitting_error": splitting_error,
        "field": field_summary(&field),
        "lambda": lambda,
        "pairs": reports.iter().map(|d| json!({ "pair": d.pair, "lambda": d.lambda, "c": d.c, "pass": d.pass })).collect::<Vec<_>>(),
        "pass": dom_ok,
    });
    if !dom_ok {
        let payload = json!({ "system": sys.name, "domination": dom_payload, "stages": { "domination": false } });
        return Ok(Outcome::new("verify-theorem", cfg, payload)?.judge(
            false,
            "",
            "no dominated splitting",
        ));
    }

    let gopts = GammaCurveOptions::default();
    let gammas = points
        .par_iter()
        .map(|x| verify_gamma_in_curve(sys, &field, x, r.delta, r.horizon, grid_res, &gopts))
        .collect::<Result<Vec<_>, _>>()?;
    let gamma_ok = gammas.iter().all(|g| g.pass);
    let curves: Vec<(usize, &CentralCurve)> = gammas
        .iter()
        .enumerate()
        .filter_map(|(b, g)| g.curve.as_ref().map(|c| (b, c)))
        .collect();
    let entropies = curves
        .par_iter()
        .map(|(b, c)| curve_entropy_zero_check(sys, c, r.inner_eps, count_n, cap).map(|e| (*b, e)))
        .collect::<Result<Vec<_>, _>>()?;
    let curve_ok = entropies.iter().all(|(_, e)| {
        e.verdict == CurveVerdict::ZeroEntropy
            && e.counts
                .as_ref()
                .is_none_or(|c| c.sandwich_violations().is_empty())
    });
    let tail = tail_entropy(sys, &tail_config(r, vec![r.delta]))?;
    let tail_ok = tail.verdict && tail.sandwich_violations.is_empty();

    let mut gt = Table::new(
        "gamma",
        &["base", "members", "case", "excess_cells", "pass"],
    );
    for (b, g) in gammas.iter().enumerate() {
        let case = serde_json::to_value(g.case)?["kind"]
            .as_str()
            .unwrap_or("")
            .to_string();
        gt.push(vec![
            b.to_string(),
            g.members.to_string(),
            case,
            fmt_sig(g.excess_cells),
            g.pass.to_string(),
        ]);
    }
    let payload = json!({
        "system": sys.name,
        "domination": dom_payload,
        "gamma_in_curve": gammas,
        "curve_entropy": entropies.iter().map(|(b, e)| json!({ "base": b, "report": e })).collect::<Vec<_>>(),
        "tail_entropy": tail,
        "stages": { "domination": dom_ok, "gamma_in_curve": gamma_ok, "curve_entropy": curve_ok, "tail_entropy": tail_ok },
    });
    let mut out = Outcome::new("verify-theorem", cfg, payload)?.judge(
        gamma_ok && curve_ok && tail_ok,
        "h-expansive at resolution",
        "not certified at resolution",
    );
    out.tables.push(gt);
    Ok(out)
}

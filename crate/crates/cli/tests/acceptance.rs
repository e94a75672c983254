//! End-to-end acceptance run. Prints one line per criterion and fails if any criterion
//! fails.

use std::process::Command;
use std::time::{Duration, Instant};

use dynlab::pliss::{pliss_density_bound, pliss_times, LogGrowthSequence};
use dynlab::splitting::{build_adapted_metric, compute_bundles};
use dynlab::system::{cat3skew, default_alpha, DEFAULT_KAPPA};
use dynlab::torus::quasi_random_points;
use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    json: Value,
    elapsed: Duration,
}

fn dyn_lab(args: &[&str]) -> Run {
    let t = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_dyn-lab"))
        .args(args)
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8(out.stdout).expect("utf-8 report");
    let json = serde_json::from_str(&stdout).unwrap_or(Value::Null);
    if json.is_null() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout,
        json,
        elapsed: t.elapsed(),
    }
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn counts(v: &Value) -> Vec<u64> {
    v.as_array()
        .map(|a| a.iter().filter_map(|x| x.as_u64()).collect())
        .unwrap_or_default()
}

/// Re-checks `sep(2ε) ≤ span(ε) ≤ sep(ε)` on every recorded row of a report.
fn sandwich_failures(report: &Value, rows: &mut usize) -> usize {
    let mut bad = 0;
    let mut check = |d: &[u64], s: &[u64], p: &[u64]| {
        assert!(d.len() == s.len() && s.len() == p.len());
        for k in 0..s.len() {
            *rows += 1;
            if !(d[k] <= s[k] && s[k] <= p[k]) {
                bad += 1;
            }
        }
    };
    match report {
        Value::Object(m) => {
            if let (Some(s), Some(p), Some(d)) =
                (m.get("r_span"), m.get("s_sep"), m.get("s_sep_double"))
            {
                check(&counts(d), &counts(s), &counts(p));
            }
            if let (Some(s), Some(p), Some(d)) = (m.get("span"), m.get("sep"), m.get("sep_double"))
            {
                check(&counts(d), &counts(s), &counts(p));
            }
            for v in m.values() {
                bad += sandwich_failures(v, rows);
            }
        }
        Value::Array(a) => {
            for v in a {
                bad += sandwich_failures(v, rows);
            }
        }
        _ => {}
    }
    bad
}

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

fn brute_times(v: &[f64], l2: f64) -> Vec<usize> {
    (0..v.len())
        .filter(|&r| {
            let mut s = 0.0;
            (r..v.len()).all(|h| {
                s += v[h];
                s <= (h - r) as f64 * l2
            })
        })
        .collect()
}

/// Uniform entries in `[-a, a]`, pushed down (clamped at `-a`) until `Σ a_m ≤ n·l1`.
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

fn report(n: usize, name: &str, pass: bool, detail: String) -> bool {
    println!(
        "criterion {n} [{name}]: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn cat_map_entropy(runs: &mut Vec<Run>) -> bool {
    let truth = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    let r = dyn_lab(&[
        "entropy", "--system", "cat2", "--eps", "0.05", "--grid", "1024",
    ]);
    let rate = f(&r.json["payload"]["scans"][0]["rate"]);
    let n_max = r.json["config"]["n_max"].as_u64().unwrap_or(0);
    let pass = r.code == 0
        && (rate - truth).abs() <= 0.15 * truth
        && n_max <= 10
        && r.elapsed <= Duration::from_secs(120);
    let detail = format!(
        "rate {rate:.4} vs {truth:.4}, n <= {n_max}, {:.1} s",
        r.elapsed.as_secs_f64()
    );
    runs.push(r);
    report(1, "cat-map entropy", pass, detail)
}

fn expansive_control(runs: &mut Vec<Run>) -> bool {
    let r = dyn_lab(&[
        "tail-entropy",
        "--system",
        "cat2",
        "--eps",
        "0.05",
        "--samples",
        "32",
    ]);
    let sup = f(&r.json["payload"]["report"]["per_epsilon"][0]["sup_rate"]);
    let singles = f(&r.json["payload"]["singleton_fraction"][0]);
    let bases = r.json["payload"]["report"]["per_epsilon"][0]["bases"]
        .as_array()
        .map_or(0, |b| b.len());
    let pass = r.code == 0 && sup <= 0.02 && singles >= 0.95 && bases == 32;
    let detail = format!("sup {sup:.4}, singleton fraction {singles:.3} over {bases} bases");
    runs.push(r);
    report(2, "expansive control", pass, detail)
}

fn theorem_run(system: &str) -> Run {
    dyn_lab(&[
        "verify-theorem",
        "--system",
        system,
        "--delta",
        "0.05",
        "--horizon",
        "40",
        "--grid",
        "256",
    ])
}

fn theorem(n: usize, system: &str, expected_lambda: f64, runs: &mut Vec<Run>) -> bool {
    let r = theorem_run(system);
    let p = &r.json["payload"];
    let lambda = f(&p["domination"]["lambda"]);
    let gammas = p["gamma_in_curve"].as_array().cloned().unwrap_or_default();
    let in_curve = gammas
        .iter()
        .filter(|g| g["case"]["kind"] == "curve" && f(&g["excess_cells"]) <= 2.0)
        .count();
    let sup = f(&p["tail_entropy"]["per_epsilon"][0]["sup_rate"]);
    let pass = r.code == 0
        && r.json["summary"]["verdict"] == "h-expansive at resolution"
        && (lambda - expected_lambda).abs() <= 0.05 * expected_lambda
        && gammas.len() == 32
        && in_curve == 32
        && sup <= 0.02
        && r.elapsed <= Duration::from_secs(600);
    let detail = format!(
        "lambda {lambda:.6}, {in_curve}/{} bases in curve tube, tail sup {sup:.4}, {:.1} s",
        gammas.len(),
        r.elapsed.as_secs_f64()
    );
    runs.push(r);
    report(n, &format!("main theorem, {system}"), pass, detail)
}

fn adapted_metric() -> bool {
    let sys = cat3skew(default_alpha(), DEFAULT_KAPPA);
    let pts = quasi_random_points(3, 10_000, 0);
    let outcome = compute_bundles(&sys, &pts, &[1, 1, 1], 40)
        .and_then(|f| build_adapted_metric(&sys, &f, 0.7, 20));
    match outcome {
        Ok(a) => {
            let pass = a.fraction_ok == 1.0
                && (a.refit_c - 1.0).abs() <= 0.01
                && a.samples.len() == 10_000;
            report(
                5,
                "adapted metric",
                pass,
                format!(
                    "one-step fraction {}, refit C {:.4}",
                    a.fraction_ok, a.refit_c
                ),
            )
        }
        Err(e) => report(5, "adapted metric", false, e.to_string()),
    }
}

fn pliss_suite() -> bool {
    let t = Instant::now();
    let mut rng = SplitMix(2024);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = 1 + (rng.next() % 512) as usize;
        let lambda2 = rng.uniform(0.1, 0.95);
        let v: Vec<f64> = (0..n).map(|_| rng.uniform(-1.5, 1.0)).collect();
        let seq = LogGrowthSequence::new(v.clone()).unwrap();
        let r = pliss_times(&seq, lambda2 / 2.0, lambda2).unwrap();
        if r.indices != brute_times(&v, lambda2.ln()) {
            mismatches += 1;
        }
    }
    let mut violations = 0;
    let mut admitted = 0;
    while admitted < 10_000 {
        let lambda1 = rng.uniform(0.2, 0.85);
        let lambda2 = rng.uniform(lambda1 + 0.01, 0.97);
        let (l1, a) = (lambda1.ln(), -lambda1.ln() + rng.uniform(0.05, 2.0));
        let c = pliss_density_bound(lambda1, lambda2, a).unwrap();
        let n = (1.0 / c).ceil() as usize + (rng.next() % 400) as usize;
        let v = admissible(&mut rng, n, a, l1);
        if v.iter().sum::<f64>() > n as f64 * l1 {
            continue;
        }
        admitted += 1;
        let mut seq = LogGrowthSequence::new(v).unwrap();
        seq.bound = Some(a);
        let r = pliss_times(&seq, lambda1, lambda2).unwrap();
        if r.density < c {
            violations += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = mismatches == 0 && violations == 0 && secs <= 60.0;
    report(
        6,
        "Pliss suite",
        pass,
        format!("{mismatches} oracle mismatches in 1000, {violations} density violations in {admitted}, {secs:.1} s"),
    )
}

fn bounded_curves(runs: &mut Vec<Run>) -> bool {
    let mut worst = 0.0f64;
    let mut fiber_ok = true;
    for point in ["0.2,0.4,0.6", "0.71,0.13,0.52", "0.05,0.9,0.33"] {
        let r = dyn_lab(&[
            "curve", "--system", "cat3", "--factor", "1", "--point", point,
        ]);
        let e = &r.json["payload"]["entropy"];
        let rate = f(&e["rate"]);
        worst = worst.max(rate);
        fiber_ok &= r.code == 0 && e["verdict"] == "zero_entropy" && rate <= 0.02;
        runs.push(r);
    }
    let r = dyn_lab(&[
        "curve", "--system", "cat2", "--factor", "1", "--point", "0.3,0.6",
    ]);
    let unstable = r.json["payload"]["entropy"]["verdict"].clone();
    let pass = fiber_ok && unstable == "inapplicable";
    runs.push(r);
    report(
        7,
        "bounded-curve entropy",
        pass,
        format!("cat3 fiber worst rate {worst:.4}, cat2 unstable verdict {unstable}"),
    )
}

fn determinism(first: &Run) -> bool {
    let second = theorem_run("cat3");
    let same = !first.stdout.is_empty() && first.stdout == second.stdout;
    report(
        8,
        "determinism",
        same,
        format!("{} vs {} bytes", first.stdout.len(), second.stdout.len()),
    )
}

fn sandwich(runs: &[Run]) -> bool {
    let mut rows = 0;
    let bad: usize = runs
        .iter()
        .map(|r| sandwich_failures(&r.json, &mut rows))
        .sum();
    report(
        9,
        "oracle sandwich",
        bad == 0 && rows > 0,
        format!("{bad} violations in {rows} recorded (n, eps) rows"),
    )
}

fn main() {
    let mut runs = Vec::new();
    let mut results = Vec::new();
    results.push(cat_map_entropy(&mut runs));
    results.push(expansive_control(&mut runs));
    results.push(theorem(3, "cat3", 0.381966, &mut runs));
    let cat3_run = runs.len() - 1;
    results.push(theorem(4, "cat3skew", 0.381966, &mut runs));
    results.push(adapted_metric());
    results.push(pliss_suite());
    results.push(bounded_curves(&mut runs));
    results.push(determinism(&runs[cat3_run]));
    results.push(sandwich(&runs));
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs under `cargo test` (no libtest harness).

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use seqrank::bounds::{iterate_recurrence, unroll_recurrence, wedin_check, weyl_check};
use seqrank::datagen::{generate_w_star, make_dataset, sample_x};
use seqrank::linalg::svd;
use seqrank::solver::reconstruct_w;
use seqrank::{AllocationStrategy, DenseMatrix, Design, GdConfig, NoiseSpec, Profile};
use seqrank_harness::table::{ParsedCsv, NOT_REACHED};
use seqrank_harness::{run_experiment, ExperimentConfig, ExperimentKind};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config(kind: ExperimentKind, toml: &str, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::parse(toml, Path::new("acceptance.toml")).expect("acceptance config parses");
    cfg.experiment = kind;
    cfg.output_dir = out.join(kind.label()).to_string_lossy().into_owned();
    cfg
}

fn run_csv(cfg: &ExperimentConfig) -> Result<ParsedCsv, String> {
    let out = run_experiment(cfg).map_err(|e| e.to_string())?;
    if out.failures > 0 {
        return Err(format!("{} failed trial(s)", out.failures));
    }
    Ok(ParsedCsv::parse(&out.csv))
}

fn num(csv: &ParsedCsv, row: &[String], col: &str) -> f64 {
    csv.get(row, col).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)
}

fn summaries<'a>(csv: &'a ParsedCsv) -> impl Iterator<Item = &'a Vec<String>> {
    csv.rows.iter().filter(|r| csv.get(r, "row_kind") == Some("summary"))
}

/// Mean recon error per value of `key` over summary rows.
fn summary_means(csv: &ParsedCsv, key: &str) -> BTreeMap<String, f64> {
    summaries(csv)
        .map(|r| (csv.get(r, key).unwrap_or("").to_string(), num(csv, r, "recon_err")))
        .collect()
}

fn fmt_means(pairs: &[(&str, f64)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v:.4e}")).collect::<Vec<_>>().join(" ")
}

/// Noiseless instances `m=100, d=200, n=400, r=r*=10`, five seeds per profile.
fn exact_instances() -> Vec<(Profile, u64, DenseMatrix, DenseMatrix, DenseMatrix)> {
    let mut out = Vec::new();
    for p in Profile::ALL {
        for seed in 0..5u64 {
            let gt = generate_w_star(100, 200, 10, p, 100.0, 1000 + seed).unwrap();
            let ds = make_dataset(&gt, 400, NoiseSpec::noiseless(), 2000 + seed).unwrap();
            out.push((p, seed, gt.w_star, ds.x, ds.y));
        }
    }
    out
}

fn exact_recovery() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (p, seed, w, x, y) in exact_instances() {
        let design = match Design::new(&x) {
            Ok(d) => d,
            Err(e) => return outcome(false, format!("{p} seed {seed}: {e}")),
        };
        let trace = match design.solve_exact(&y, 10) {
            Ok(t) => t,
            Err(e) => return outcome(false, format!("{p} seed {seed}: {e}")),
        };
        let w_hat = reconstruct_w(&trace).unwrap();
        worst = worst.max(w_hat.sub(&w).unwrap().frobenius_norm() / w.frobenius_norm());
    }
    // 15 instances; the time limit applies per batch of 5.
    let per_five = start.elapsed() / 3;
    outcome(
        worst <= 1e-8 && per_five < Duration::from_secs(10),
        format!("max rel error {worst:.2e} (tol 1e-8), {:.2?} per 5 trials", per_five),
    )
}

fn lemma1_spectrum() -> Outcome {
    let mut worst: f64 = 0.0;
    for (p, seed, _, x, y) in exact_instances() {
        let s = y.singular_values().unwrap();
        let design = Design::new(&x).unwrap();
        let (_, hist) = match design.solve_exact_recorded(&y, 10) {
            Ok(v) => v,
            Err(e) => return outcome(false, format!("{p} seed {seed}: {e}")),
        };
        for k in 0..9 {
            let top = hist[k + 1].spectral_norm().unwrap();
            worst = worst.max((top - s[k + 1]).abs() / s[k + 1]);
        }
    }
    outcome(worst <= 1e-8, format!("max rel mismatch {worst:.2e} (tol 1e-8)"))
}

const BOUNDS_TOML: &str = r#"
m = 50
d = 100
n = 200
r_star = 5
r = 5
profile = "power_law"
total_budget = 20000
strategies = ["equal"]
trials = 20
base_seed = 0
"#;

struct BoundsRows {
    flagged: usize,
    total: usize,
    thm31_fail: usize,
    thm41_fail: usize,
    worst31: f64,
    worst41: f64,
}

fn bounds_rows(csv: &ParsedCsv) -> BoundsRows {
    let mut b = BoundsRows {
        flagged: 0,
        total: 0,
        thm31_fail: 0,
        thm41_fail: 0,
        worst31: f64::INFINITY,
        worst41: f64::INFINITY,
    };
    let rows = csv
        .rows
        .iter()
        .filter(|r| csv.get(r, "row_kind") == Some("trial") && csv.get(r, "variant") == Some("inexact"));
    for r in rows {
        b.total += 1;
        if csv.get(r, "conditions_hold") != Some("true") {
            continue;
        }
        b.flagged += 1;
        let m31 = num(csv, r, "thm31_margin");
        let m41 = num(csv, r, "thm41_total_margin").min(num(csv, r, "thm41_component_margin"));
        b.worst31 = b.worst31.min(m31);
        b.worst41 = b.worst41.min(m41);
        if !(m31 >= -1e-8) {
            b.thm31_fail += 1;
        }
        if !(m41 >= -1e-8) {
            b.thm41_fail += 1;
        }
    }
    b
}

fn thm31(csv: &Result<ParsedCsv, String>) -> Outcome {
    match csv {
        Err(e) => outcome(false, e.clone()),
        Ok(csv) => {
            let b = bounds_rows(csv);
            outcome(
                b.total == 20 && b.flagged >= 10 && b.thm31_fail == 0,
                format!(
                    "{}/{} instances pass the condition flags; bound holds on {}/{} (min margin {:.2e})",
                    b.flagged,
                    b.total,
                    b.flagged - b.thm31_fail,
                    b.flagged,
                    b.worst31
                ),
            )
        }
    }
}

fn thm41(csv: &Result<ParsedCsv, String>) -> Outcome {
    match csv {
        Err(e) => outcome(false, e.clone()),
        Ok(csv) => {
            let b = bounds_rows(csv);
            outcome(
                b.flagged >= 10 && b.thm41_fail == 0,
                format!(
                    "component and total bounds hold on {}/{} flagged instances (min margin {:.2e})",
                    b.flagged - b.thm41_fail,
                    b.flagged,
                    b.worst41
                ),
            )
        }
    }
}

const ALLOC_TOML: &str = r#"
m = 500
d = 1000
n = 2000
r_star = 20
profile = "power_law"
total_budget = 10000
strategies = ["more_first", "equal", "less_first"]
trials = 5
"#;

fn allocation_ordering(out: &Path) -> Outcome {
    let start = Instant::now();
    let cfg = config(ExperimentKind::Alloc, ALLOC_TOML, out);
    let csv = match run_csv(&cfg) {
        Ok(c) => c,
        Err(e) => return outcome(false, e),
    };
    let took = start.elapsed();
    let m = summary_means(&csv, "strategy");
    let (mf, eq, lf) = (m["more_first"], m["equal"], m["less_first"]);
    outcome(
        mf < eq && eq < lf && took < Duration::from_secs(15 * 60),
        format!(
            "{} in {:.0?}",
            fmt_means(&[("more_first", mf), ("equal", eq), ("less_first", lf)]),
            took
        ),
    )
}

const SMALL_TOML: &str = r#"
m = 100
d = 200
n = 400
r_star = 10
trials = 5
"#;

fn profile_ordering(out: &Path) -> Outcome {
    let toml = format!("{SMALL_TOML}total_budget = 8000\nstrategies = [\"equal\"]\n");
    let csv = match run_csv(&config(ExperimentKind::Profile, &toml, out)) {
        Ok(c) => c,
        Err(e) => return outcome(false, e),
    };
    let m = summary_means(&csv, "profile");
    let (pl, ed, un) = (m["power_law"], m["exponential_decay"], m["uniform"]);
    outcome(
        pl < ed && ed < un,
        fmt_means(&[("power_law", pl), ("exponential_decay", ed), ("uniform", un)]),
    )
}

fn noise_monotonicity(out: &Path) -> Outcome {
    let toml = format!(
        "{SMALL_TOML}total_budget = 8000\nstrategies = [\"more_first\"]\n\
         gaussian_kappas = [0.0, 0.01, 0.05, 0.1]\nsparse_kappas = [1.0, 10.0]\n"
    );
    let csv = match run_csv(&config(ExperimentKind::Noise, &toml, out)) {
        Ok(c) => c,
        Err(e) => return outcome(false, e),
    };
    let mut families: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in summaries(&csv) {
        families
            .entry(csv.get(r, "noise_kind").unwrap().to_string())
            .or_default()
            .push((num(&csv, r, "kappa"), num(&csv, r, "recon_err")));
    }
    let mut pass = families.len() == 2;
    let mut detail = Vec::new();
    for (kind, mut pts) in families {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pass &= pts.windows(2).all(|w| w[0].1 <= w[1].1);
        let list: Vec<String> = pts.iter().map(|(k, e)| format!("{k}:{e:.3e}")).collect();
        detail.push(format!("{kind}[{}]", list.join(" ")));
    }
    outcome(pass, detail.join(" "))
}

fn threshold_efficiency(out: &Path) -> Outcome {
    let toml = format!(
        "{SMALL_TOML}strategies = [\"more_first\", \"equal\", \"less_first\"]\n\
         thresholds = [2.5, 2.0, 1.5, 1.0]\nbudget_cap = 10000\n"
    );
    let csv = match run_csv(&config(ExperimentKind::Threshold, &toml, out)) {
        Ok(c) => c,
        Err(e) => return outcome(false, e),
    };
    // threshold -> strategy -> mean iterations (infinite when not reached)
    let mut table: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for r in summaries(&csv) {
        let it = csv.get(r, "iterations").unwrap();
        let v = if it == NOT_REACHED { f64::INFINITY } else { it.parse().unwrap_or(f64::NAN) };
        table
            .entry(csv.get(r, "threshold").unwrap().to_string())
            .or_default()
            .insert(csv.get(r, "strategy").unwrap().to_string(), v);
    }
    let label = |s: AllocationStrategy| s.label().to_string();
    let mut ordered = 0;
    let mut detail = Vec::new();
    for (thr, m) in &table {
        let mf = m[&label(AllocationStrategy::MoreFirst)];
        let eq = m[&label(AllocationStrategy::Equal)];
        let lf = m[&label(AllocationStrategy::LessFirst)];
        if mf <= eq && eq <= lf {
            ordered += 1;
        }
        let t: f64 = thr.parse().unwrap();
        detail.push(format!("{t}:{mf}/{eq}/{lf}"));
    }
    outcome(
        table.len() == 4 && ordered >= 3,
        format!("{ordered}/4 thresholds ordered (more_first/equal/less_first) {}", detail.join(" ")),
    )
}

/// Orthonormal `rows × k` block from a Gaussian draw.
fn orthonormal(rows: usize, k: usize, seed: u64) -> DenseMatrix {
    svd(&sample_x(k, rows, seed).unwrap().transpose()).unwrap().left_vectors
}

fn perturbation_suites() -> Outcome {
    let start = Instant::now();
    let mut weyl_ok = 0;
    let mut worst_weyl = f64::NEG_INFINITY;
    for i in 0..100u64 {
        let m = sample_x(20, 30, 10 * i).unwrap().scaled(5.0).unwrap();
        let delta = sample_x(20, 30, 10 * i + 1).unwrap().scaled(0.1 + 0.01 * i as f64).unwrap();
        let v = weyl_check(&m, &delta).unwrap();
        worst_weyl = worst_weyl.max(v);
        if v <= 1e-10 {
            weyl_ok += 1;
        }
    }
    let sigmas = [10.0, 1.0, 0.8, 0.6, 0.4, 0.2];
    let (mut wedin_applied, mut wedin_ok) = (0, 0);
    for i in 0..100u64 {
        let u = orthonormal(20, 6, 10 * i + 2);
        let v = orthonormal(30, 6, 10 * i + 3);
        let mut m = DenseMatrix::zeros(20, 30);
        for (j, s) in sigmas.iter().enumerate() {
            m.add_outer(*s, &u.column(j), &v.column(j)).unwrap();
        }
        let raw = sample_x(20, 30, 10 * i + 4).unwrap();
        let scale = 0.5 * (1 + i % 5) as f64 / 5.0;
        let delta = raw.scaled(scale / raw.spectral_norm().unwrap()).unwrap();
        let w = wedin_check(&m, &delta, 1).unwrap();
        if w.applies() {
            wedin_applied += 1;
            if w.holds() {
                wedin_ok += 1;
            }
        }
    }
    let mut rec_ok = 0;
    let mut worst_rec: f64 = 0.0;
    for i in 0..100u64 {
        let draw = sample_x(2, 10, 10 * i + 5).unwrap();
        let a: Vec<f64> = draw.row(0).iter().map(|v| 5.0 * v.abs()).collect();
        let b: Vec<f64> = draw.row(1).iter().map(|v| v.abs()).collect();
        let closed = unroll_recurrence(&a, &b).unwrap();
        let iter = iterate_recurrence(&a, &b).unwrap();
        let rel = closed
            .iter()
            .zip(&iter)
            .map(|(c, it)| (c - it).abs() / it.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        worst_rec = worst_rec.max(rel);
        if rel <= 1e-12 {
            rec_ok += 1;
        }
    }
    let took = start.elapsed();
    outcome(
        weyl_ok == 100 && wedin_applied == 100 && wedin_ok == 100 && rec_ok == 100 && took < Duration::from_secs(60),
        format!(
            "weyl {weyl_ok}/100 (max violation {worst_weyl:.1e}), wedin {wedin_ok}/{wedin_applied}, \
             recurrence {rec_ok}/100 (max rel {worst_rec:.1e}), {took:.2?}"
        ),
    )
}

fn delta_convergence() -> Outcome {
    let gt = generate_w_star(10, 20, 5, Profile::PowerLaw, 100.0, 21).unwrap();
    let ds = make_dataset(&gt, 2000, NoiseSpec::noiseless(), 22).unwrap();
    let design = Design::new(&ds.x).unwrap();
    let mut deltas = Vec::new();
    for i in 4..=14 {
        let cfg = GdConfig {
            max_iters: 1 << i,
            ..GdConfig::default()
        };
        match design.rank1_gd(&ds.y, &cfg, 8) {
            Ok(out) => deltas.push(design.measure_delta(&ds.y, &out.a, &out.b).unwrap()),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let monotone = deltas.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let last = *deltas.last().unwrap();
    outcome(
        monotone && last <= 1e-6,
        format!(
            "delta at 2^4..2^14: {} (final tol 1e-6, 10% slack per step)",
            deltas.iter().map(|d| format!("{d:.1e}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn determinism(out: &Path) -> Outcome {
    let tiny = "m = 12\nd = 16\nn = 40\nr_star = 4\ntotal_budget = 400\ntrials = 2\n\
                thresholds = [60.0, 5.0]\nbudget_cap = 400\n";
    let mut mismatched = Vec::new();
    for kind in [
        ExperimentKind::Alloc,
        ExperimentKind::Profile,
        ExperimentKind::Noise,
        ExperimentKind::Threshold,
        ExperimentKind::Bounds,
    ] {
        let mut a = config(kind, tiny, &out.join("det_a"));
        let mut b = config(kind, tiny, &out.join("det_b"));
        a.workers = 1;
        b.workers = 2;
        match (run_experiment(&a), run_experiment(&b)) {
            (Ok(x), Ok(y)) => {
                if ParsedCsv::parse(&x.csv).without_timing() != ParsedCsv::parse(&y.csv).without_timing() {
                    mismatched.push(kind.label());
                }
            }
            (Err(e), _) | (_, Err(e)) => return outcome(false, format!("{}: {e}", kind.label())),
        }
    }
    outcome(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "5/5 experiments reproduce their CSV (timing excluded)".into()
        } else {
            format!("differs: {}", mismatched.join(", "))
        },
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!(
            "{} {name}: {} [{:.1?}]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed()
        );
        results.push((name, o));
    };

    record("exact_recovery", &mut exact_recovery);
    record("lemma1_spectrum", &mut lemma1_spectrum);
    let bounds_csv = run_csv(&config(ExperimentKind::Bounds, BOUNDS_TOML, out));
    record("thm31_validity", &mut || thm31(&bounds_csv));
    record("thm41_validity", &mut || thm41(&bounds_csv));
    record("allocation_ordering", &mut || allocation_ordering(out));
    record("profile_ordering", &mut || profile_ordering(out));
    record("noise_monotonicity", &mut || noise_monotonicity(out));
    record("threshold_efficiency", &mut || threshold_efficiency(out));
    record("perturbation_suites", &mut perturbation_suites);
    record("delta_convergence", &mut delta_convergence);
    record("determinism", &mut || determinism(out));

    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Seeded experiment suites. Each writes one CSV into the configured output
//! directory and returns its contents.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use seqrank::bounds::{lemma2_check, BoundError, BoundInputs, BoundReport, Observed};
use seqrank::datagen::{generate_w_star, make_dataset, Dataset, GroundTruth, NoiseSpec, Profile};
use seqrank::linalg::singular_gap_tk;
use seqrank::rng::{stream_seed, Stream};
use seqrank::solver::{make_allocation, product_distance, reconstruct_w, AllocationStrategy, Design, SolveTrace};
use seqrank::DenseMatrix;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::table::{
    fmt_list_f64, fmt_list_usize, mean_std, sanitize, Row, Table, NOT_REACHED, SCHEMA_VERSION,
};

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub csv_path: PathBuf,
    pub csv: String,
    /// Other files written next to the CSV.
    pub extra_files: Vec<PathBuf>,
    /// Trial rows recorded as failures.
    pub failures: usize,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match cfg.experiment {
        ExperimentKind::Alloc => run_alloc_experiment(cfg),
        ExperimentKind::Profile => run_profile_experiment(cfg),
        ExperimentKind::Noise => run_noise_experiment(cfg),
        ExperimentKind::Threshold => run_threshold_experiment(cfg),
        ExperimentKind::Bounds => run_bounds_experiment(cfg),
    }
}

/// Seed of trial `t`.
pub fn trial_seed(cfg: &ExperimentConfig, trial: usize) -> u64 {
    cfg.base_seed.wrapping_add(trial as u64)
}

/// Runs `f` on `0..count` over `workers` threads; results keep index order.
fn par_map<T: Send>(count: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if workers <= 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..count).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.min(count) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let v = f(i);
                *slots[i].lock().unwrap() = Some(v);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().unwrap()).collect()
}

fn write_output(cfg: &ExperimentConfig, table: &Table, failures: usize) -> Result<ExperimentOutput> {
    let dir = cfg.output_path();
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let csv_path = dir.join(format!("{}.csv", cfg.experiment.label()));
    let csv = table.to_csv();
    std::fs::write(&csv_path, &csv).map_err(|e| HarnessError::io(&csv_path, e))?;
    Ok(ExperimentOutput {
        csv_path,
        csv,
        extra_files: Vec::new(),
        failures,
    })
}

/// Ground truth, data and prepared design for one trial.
struct Instance {
    gt: GroundTruth,
    ds: Dataset,
}

fn instance(cfg: &ExperimentConfig, seed: u64, profile: Profile, noise: NoiseSpec) -> Result<Instance> {
    let gt = generate_w_star(
        cfg.m,
        cfg.d,
        cfg.r_star,
        profile,
        cfg.target_fro,
        stream_seed(seed, Stream::GroundTruth),
    )?;
    let ds = make_dataset(&gt, cfg.n(), noise, seed)?;
    Ok(Instance { gt, ds })
}

fn recon_error(trace: &SolveTrace, w_star: &DenseMatrix) -> Result<f64> {
    Ok(reconstruct_w(trace)?.sub(w_star)?.frobenius_norm())
}

fn common_cells(row: &mut Row<'_>, cfg: &ExperimentConfig, hash: &str, kind: &str) {
    row.set("schema_version", SCHEMA_VERSION.to_string())
        .set("config_hash", hash)
        .set("experiment", cfg.experiment.label())
        .set("row_kind", kind)
        .set("m", cfg.m.to_string())
        .set("d", cfg.d.to_string())
        .set("n", cfg.n().to_string())
        .set("r_star", cfg.r_star.to_string())
        .set("r", cfg.r().to_string());
}

fn elapsed_ms(start: Instant) -> String {
    start.elapsed().as_millis().to_string()
}

// ---------------------------------------------------------------------------
// alloc / profile / noise

#[derive(Debug, Clone)]
struct Variant {
    label: String,
    strategy: AllocationStrategy,
    profile: Profile,
    noise: NoiseSpec,
}

#[derive(Debug, Clone)]
struct RunResult {
    budgets: Vec<usize>,
    iters: Vec<usize>,
    deltas: Vec<f64>,
    training_err: f64,
    recon_err: f64,
    rel_recon_err: f64,
    tk_star: Vec<f64>,
    sigma_w_rel_diff: Option<f64>,
    corrupted_entries: usize,
}

const RUN_COLUMNS: &[&str] = &[
    "schema_version",
    "config_hash",
    "experiment",
    "row_kind",
    "variant",
    "trial",
    "seed",
    "strategy",
    "profile",
    "noise_kind",
    "kappa",
    "m",
    "d",
    "n",
    "r_star",
    "r",
    "total_budget",
    "budgets",
    "iters_used",
    "delta_fros",
    "training_err",
    "training_err_std",
    "recon_err",
    "recon_err_std",
    "rel_recon_err",
    "rel_recon_err_std",
    "n_trials_ok",
];

fn run_columns(kind: ExperimentKind) -> Vec<&'static str> {
    let mut cols = RUN_COLUMNS.to_vec();
    match kind {
        ExperimentKind::Profile => cols.extend(["tk_star", "sigma_w_rel_diff"]),
        ExperimentKind::Noise => cols.push("corrupted_entries"),
        _ => {}
    }
    cols.extend(["error", "wall_ms"]);
    cols
}

fn run_variant(
    cfg: &ExperimentConfig,
    design: &Design,
    inst: &Instance,
    v: &Variant,
    seed: u64,
    check_sigmas: bool,
) -> Result<RunResult> {
    let r = cfg.r();
    let plan = make_allocation(v.strategy, r, cfg.total_budget)?;
    let trace = design.solve_inexact(&inst.ds.y, r, &plan, &cfg.gd, stream_seed(seed, Stream::GdInit))?;
    let recon_err = recon_error(&trace, &inst.gt.w_star)?;
    let w_fro = inst.gt.w_star.frobenius_norm();
    let tk_star = (1..=r.min(inst.gt.sigmas.len()))
        .map(|k| singular_gap_tk(&inst.gt.sigmas, k))
        .collect::<Result<Vec<_>, _>>()?;
    let sigma_w_rel_diff = if check_sigmas {
        let measured = inst.gt.w_star.singular_values()?;
        Some(
            inst.gt
                .sigmas
                .iter()
                .zip(&measured)
                .map(|(p, m)| (p - m).abs() / p)
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    Ok(RunResult {
        budgets: plan.budgets,
        iters: trace.iters(),
        deltas: trace.deltas(),
        training_err: trace.training_error(),
        recon_err,
        rel_recon_err: recon_err / w_fro,
        tk_star,
        sigma_w_rel_diff,
        corrupted_entries: inst.ds.corrupted_entries,
    })
}

fn run_suite(cfg: &ExperimentConfig, variants: Vec<Variant>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    let check_sigmas = cfg.experiment == ExperimentKind::Profile;

    type TrialOut = Vec<(std::result::Result<RunResult, String>, String)>;
    let per_trial: Vec<TrialOut> = par_map(cfg.trials, cfg.workers, |t| {
        let seed = trial_seed(cfg, t);
        let mut design: Option<std::result::Result<Design, String>> = None;
        let mut cache: HashMap<(Profile, String), Instance> = HashMap::new();
        variants
            .iter()
            .map(|v| {
                let start = Instant::now();
                let res = (|| -> Result<RunResult> {
                    let key = (v.profile, format!("{:?}", v.noise));
                    if !cache.contains_key(&key) {
                        cache.insert(key.clone(), instance(cfg, seed, v.profile, v.noise)?);
                    }
                    let inst = &cache[&key];
                    // X depends only on the trial seed, so one factorization
                    // serves every variant.
                    let design = design
                        .get_or_insert_with(|| Design::new(&inst.ds.x).map_err(|e| e.to_string()))
                        .as_ref()
                        .map_err(|e| HarnessError::Config(e.clone()))?;
                    run_variant(cfg, design, inst, v, seed, check_sigmas)
                })()
                .map_err(|e| e.to_string());
                (res, elapsed_ms(start))
            })
            .collect()
    });

    let mut table = Table::new(run_columns(cfg.experiment));
    let mut failures = 0;
    let mut ok: Vec<Vec<RunResult>> = vec![Vec::new(); variants.len()];
    for (t, results) in per_trial.iter().enumerate() {
        for (vi, (res, ms)) in results.iter().enumerate() {
            let v = &variants[vi];
            let mut row = table.row();
            common_cells(&mut row, cfg, &hash, "trial");
            variant_cells(&mut row, cfg, v);
            row.set("trial", t.to_string())
                .set("seed", trial_seed(cfg, t).to_string())
                .set("wall_ms", ms.clone());
            match res {
                Ok(rr) => {
                    row.set("budgets", fmt_list_usize(&rr.budgets))
                        .set("iters_used", fmt_list_usize(&rr.iters))
                        .set("delta_fros", fmt_list_f64(&rr.deltas))
                        .f64("training_err", rr.training_err)
                        .f64("recon_err", rr.recon_err)
                        .f64("rel_recon_err", rr.rel_recon_err);
                    match cfg.experiment {
                        ExperimentKind::Profile => {
                            row.set("tk_star", fmt_list_f64(&rr.tk_star))
                                .f64("sigma_w_rel_diff", rr.sigma_w_rel_diff.unwrap_or(f64::NAN));
                        }
                        ExperimentKind::Noise => {
                            row.set("corrupted_entries", rr.corrupted_entries.to_string());
                        }
                        _ => {}
                    }
                    ok[vi].push(rr.clone());
                }
                Err(msg) => {
                    failures += 1;
                    row.set("row_kind", "failure").set("error", sanitize(msg));
                }
            }
            let cells = row.finish();
            table.push(cells);
        }
    }
    for (vi, v) in variants.iter().enumerate() {
        let runs = &ok[vi];
        let mut row = table.row();
        common_cells(&mut row, cfg, &hash, "summary");
        variant_cells(&mut row, cfg, v);
        let stat = |f: fn(&RunResult) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
        let (tm, ts) = stat(|r| r.training_err);
        let (rm, rs) = stat(|r| r.recon_err);
        let (qm, qs) = stat(|r| r.rel_recon_err);
        row.f64("training_err", tm)
            .f64("training_err_std", ts)
            .f64("recon_err", rm)
            .f64("recon_err_std", rs)
            .f64("rel_recon_err", qm)
            .f64("rel_recon_err_std", qs)
            .set("n_trials_ok", runs.len().to_string());
        if let Some(first) = runs.first() {
            row.set("budgets", fmt_list_usize(&first.budgets));
            if cfg.experiment == ExperimentKind::Profile {
                row.set("tk_star", fmt_list_f64(&first.tk_star));
            }
        }
        let cells = row.finish();
        table.push(cells);
    }
    write_output(cfg, &table, failures)
}

fn variant_cells(row: &mut Row<'_>, cfg: &ExperimentConfig, v: &Variant) {
    row.set("variant", v.label.clone())
        .set("strategy", v.strategy.label())
        .set("profile", v.profile.label())
        .set("noise_kind", v.noise.kind.to_string())
        .f64("kappa", v.noise.kappa)
        .set("total_budget", cfg.total_budget.to_string());
}

/// Strategies side by side on shared data.
pub fn run_alloc_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let variants = cfg
        .strategies
        .iter()
        .map(|&s| Variant {
            label: s.label().into(),
            strategy: s,
            profile: cfg.profile,
            noise: cfg.noise,
        })
        .collect();
    run_suite(cfg, variants)
}

/// Singular-value profiles at matched Frobenius norm.
pub fn run_profile_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let variants = cfg
        .profiles
        .iter()
        .map(|&p| Variant {
            label: p.label().into(),
            strategy: cfg.primary_strategy(),
            profile: p,
            noise: cfg.noise,
        })
        .collect();
    run_suite(cfg, variants)
}

/// Gaussian then sparse noise levels.
pub fn run_noise_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let variants = cfg
        .noise_sweep()
        .into_iter()
        .map(|noise| Variant {
            label: format!("{}:{}", noise.kind, noise.kappa),
            strategy: cfg.primary_strategy(),
            profile: cfg.profile,
            noise,
        })
        .collect();
    run_suite(cfg, variants)
}

// ---------------------------------------------------------------------------
// threshold

/// Total budgets `2^i · r` for `i = 0..=13`, capped and deduplicated.
pub fn budget_grid(r: usize, cap: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (0..=13u32)
        .map(|i| r.saturating_mul(1usize << i).min(cap))
        .collect();
    grid.dedup();
    grid
}

const THRESHOLD_COLUMNS: &[&str] = &[
    "schema_version",
    "config_hash",
    "experiment",
    "row_kind",
    "trial",
    "seed",
    "strategy",
    "threshold",
    "iterations",
    "iterations_std",
    "reached",
    "n_reached",
    "recon_err",
    "profile",
    "noise_kind",
    "kappa",
    "m",
    "d",
    "n",
    "r_star",
    "r",
    "budget_cap",
    "error",
    "wall_ms",
];

/// First grid budget at which each threshold was met, with the error there.
type Hits = Vec<Option<(usize, f64)>>;

fn threshold_trial(cfg: &ExperimentConfig, seed: u64, strategy: AllocationStrategy) -> Result<(Hits, f64)> {
    let inst = instance(cfg, seed, cfg.profile, cfg.noise)?;
    let design = Design::new(&inst.ds.x)?;
    let r = cfg.r();
    let grid = budget_grid(r, cfg.budget_cap);
    let w_fro = inst.gt.w_star.frobenius_norm();
    let mut hits: Hits = cfg
        .thresholds
        .iter()
        .map(|&t| (t >= w_fro).then_some((grid[0], w_fro)))
        .collect();
    let mut last_err = w_fro;
    for &budget in &grid {
        if hits.iter().all(Option::is_some) {
            break;
        }
        let plan = make_allocation(strategy, r, budget)?;
        let trace = design.solve_inexact(&inst.ds.y, r, &plan, &cfg.gd, stream_seed(seed, Stream::GdInit))?;
        let err = recon_error(&trace, &inst.gt.w_star)?;
        last_err = err;
        for (hit, &thr) in hits.iter_mut().zip(&cfg.thresholds) {
            if hit.is_none() && err <= thr {
                *hit = Some((budget, err));
            }
        }
    }
    Ok((hits, last_err))
}

/// Iterations needed to bring the reconstruction error under each threshold.
pub fn run_threshold_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    let strategies = cfg.strategies.clone();
    let per_trial = par_map(cfg.trials, cfg.workers, |t| {
        strategies
            .iter()
            .map(|&s| {
                let start = Instant::now();
                let res = threshold_trial(cfg, trial_seed(cfg, t), s).map_err(|e| e.to_string());
                (res, elapsed_ms(start))
            })
            .collect::<Vec<_>>()
    });

    let mut table = Table::new(THRESHOLD_COLUMNS.to_vec());
    let mut failures = 0;
    let base = |row: &mut Row<'_>, kind: &str, s: AllocationStrategy, thr: f64| {
        common_cells(row, cfg, &hash, kind);
        row.set("strategy", s.label())
            .f64("threshold", thr)
            .set("profile", cfg.profile.label())
            .set("noise_kind", cfg.noise.kind.to_string())
            .f64("kappa", cfg.noise.kappa)
            .set("budget_cap", cfg.budget_cap.to_string());
    };
    // (strategy, threshold) -> per-trial hit
    let mut collected: Vec<Vec<Vec<Option<usize>>>> = vec![vec![Vec::new(); cfg.thresholds.len()]; strategies.len()];
    for (t, results) in per_trial.iter().enumerate() {
        for (si, (res, ms)) in results.iter().enumerate() {
            let s = strategies[si];
            match res {
                Ok((hits, last_err)) => {
                    for (ti, &thr) in cfg.thresholds.iter().enumerate() {
                        let mut row = table.row();
                        base(&mut row, "trial", s, thr);
                        row.set("trial", t.to_string())
                            .set("seed", trial_seed(cfg, t).to_string())
                            .set("wall_ms", ms.clone());
                        match hits[ti] {
                            Some((b, err)) => {
                                row.set("iterations", b.to_string()).set("reached", "true").f64("recon_err", err);
                            }
                            None => {
                                row.set("iterations", NOT_REACHED)
                                    .set("reached", "false")
                                    .f64("recon_err", *last_err);
                            }
                        }
                        collected[si][ti].push(hits[ti].map(|h| h.0));
                        let cells = row.finish();
                        table.push(cells);
                    }
                }
                Err(msg) => {
                    failures += 1;
                    let mut row = table.row();
                    base(&mut row, "failure", s, f64::NAN);
                    row.set("threshold", "")
                        .set("trial", t.to_string())
                        .set("seed", trial_seed(cfg, t).to_string())
                        .set("error", sanitize(msg))
                        .set("wall_ms", ms.clone());
                    let cells = row.finish();
                    table.push(cells);
                }
            }
        }
    }
    for (si, &s) in strategies.iter().enumerate() {
        for (ti, &thr) in cfg.thresholds.iter().enumerate() {
            let hits = &collected[si][ti];
            let reached: Vec<f64> = hits.iter().flatten().map(|&b| b as f64).collect();
            let mut row = table.row();
            base(&mut row, "summary", s, thr);
            row.set("n_reached", reached.len().to_string());
            if !hits.is_empty() && reached.len() == hits.len() {
                let (m, sd) = mean_std(&reached);
                row.f64("iterations", m).f64("iterations_std", sd).set("reached", "true");
            } else {
                row.set("iterations", NOT_REACHED).set("reached", "false");
            }
            let cells = row.finish();
            table.push(cells);
        }
    }
    write_output(cfg, &table, failures)
}

// ---------------------------------------------------------------------------
// bounds

const BOUNDS_COLUMNS: &[&str] = &[
    "schema_version",
    "config_hash",
    "experiment",
    "row_kind",
    "variant",
    "trial",
    "seed",
    "profile",
    "noise_kind",
    "kappa",
    "m",
    "d",
    "n",
    "r_star",
    "r",
    "strategy",
    "total_budget",
    "applicable",
    "conditions_hold",
    "delta_fros",
    "tk_star",
    "e_of_k",
    "training_err",
    "training_err_std",
    "thm31_rhs",
    "thm31_margin",
    "recon_err",
    "recon_err_std",
    "thm41_total_rhs",
    "thm41_total_margin",
    "thm41_component_margin",
    "thm42_teal_rhs",
    "lemma2_margin",
    "n_applicable",
    "n_conditions_hold",
    "n_bounds_hold",
    "error",
    "wall_ms",
];

/// Margins at or above this count as the bound holding.
pub const MARGIN_TOL: f64 = -1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct BoundsRecord {
    pub trial: usize,
    pub seed: u64,
    pub variant: String,
    pub applicable: bool,
    pub reason: Option<String>,
    pub report: Option<BoundReport>,
    pub lemma2_margin: Option<f64>,
}

impl BoundsRecord {
    pub fn bounds_hold(&self) -> bool {
        self.report.as_ref().is_some_and(|r| {
            r.thm31_margin() >= MARGIN_TOL
                && r.thm41_total_margin() >= MARGIN_TOL
                && r.thm41_component_margin() >= MARGIN_TOL
        })
    }
}

fn bounds_trial(cfg: &ExperimentConfig, t: usize) -> Result<Vec<BoundsRecord>> {
    let seed = trial_seed(cfg, t);
    let inst = instance(cfg, seed, cfg.profile, cfg.noise)?;
    let design = Design::new(&inst.ds.x)?;
    let r = cfg.r();
    let y = &inst.ds.y;
    let (exact, eh) = design.solve_exact_recorded(y, r)?;
    let plan = make_allocation(cfg.primary_strategy(), r, cfg.total_budget)?;
    let (inexact, ih) = design.solve_inexact_recorded(y, r, &plan, &cfg.gd, stream_seed(seed, Stream::GdInit))?;
    let sigmas_y = y.singular_values()?;

    let planted_degenerate = (1..=r.min(inst.gt.sigmas.len()))
        .map(|k| singular_gap_tk(&inst.gt.sigmas, k))
        .collect::<Result<Vec<_>, _>>()?
        .iter()
        .position(|&g| g == 0.0);

    let mut out = Vec::new();
    for (variant, trace, hist) in [("exact", &exact, &eh), ("inexact", &inexact, &ih)] {
        let mut rec = BoundsRecord {
            trial: t,
            seed,
            variant: variant.into(),
            applicable: false,
            reason: None,
            report: None,
            lemma2_margin: None,
        };
        if let Some(k) = planted_degenerate {
            rec.reason = Some(format!("planted spectrum has a zero gap at index {}", k + 1));
            out.push(rec);
            continue;
        }
        let inputs = BoundInputs::from_trace(
            sigmas_y.clone(),
            trace,
            design.sigma_max(),
            design.sigma_min(),
            inst.gt.sigmas.clone(),
        );
        let component_errs = exact
            .components
            .iter()
            .zip(&trace.components)
            .map(|(e, c)| product_distance(&e.a, &e.b, &c.a, &c.b))
            .collect::<Result<Vec<_>, _>>()?;
        let observed = Observed {
            training_err: trace.training_error(),
            recon_err: recon_error(trace, &inst.gt.w_star)?,
            component_errs,
        };
        match BoundReport::evaluate(&inputs, observed, cfg.noise.kappa, cfg.n()) {
            Ok(report) => {
                let margins = lemma2_check(&design, (&exact, &eh), (trace, hist), &sigmas_y)?;
                rec.lemma2_margin = Some(margins.iter().map(|m| m.propagation).fold(f64::INFINITY, f64::min));
                rec.applicable = true;
                rec.report = Some(report);
            }
            Err(e @ (BoundError::DegenerateGap { .. } | BoundError::Inconsistent(_))) => {
                rec.reason = Some(e.to_string());
            }
            Err(e) => return Err(e.into()),
        }
        out.push(rec);
    }
    Ok(out)
}

/// Paired exact and inexact runs with every bound evaluated next to the
/// observed errors. Also writes `bounds_reports.json`.
pub fn run_bounds_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    let per_trial = par_map(cfg.trials, cfg.workers, |t| {
        let start = Instant::now();
        (bounds_trial(cfg, t).map_err(|e| e.to_string()), elapsed_ms(start))
    });

    let mut table = Table::new(BOUNDS_COLUMNS.to_vec());
    let mut failures = 0;
    let mut records = Vec::new();
    let base = |row: &mut Row<'_>, kind: &str, variant: &str| {
        common_cells(row, cfg, &hash, kind);
        row.set("variant", variant)
            .set("profile", cfg.profile.label())
            .set("noise_kind", cfg.noise.kind.to_string())
            .f64("kappa", cfg.noise.kappa)
            .set("strategy", cfg.primary_strategy().label())
            .set("total_budget", cfg.total_budget.to_string());
    };
    for (t, (res, ms)) in per_trial.into_iter().enumerate() {
        match res {
            Ok(recs) => {
                for rec in recs {
                    let mut row = table.row();
                    base(&mut row, "trial", &rec.variant);
                    row.set("trial", t.to_string())
                        .set("seed", rec.seed.to_string())
                        .set("applicable", rec.applicable.to_string())
                        .set("wall_ms", ms.clone());
                    if let Some(rep) = &rec.report {
                        row.set("conditions_hold", rep.conditions_hold().to_string())
                            .set("tk_star", fmt_list_f64(&rep.tk_star))
                            .set("e_of_k", fmt_list_f64(&rep.e_of_k))
                            .f64("training_err", rep.observed_training_err)
                            .f64("thm31_rhs", rep.thm31_rhs)
                            .f64("thm31_margin", rep.thm31_margin())
                            .f64("recon_err", rep.observed_recon_err)
                            .f64("thm41_total_rhs", rep.thm41_total_rhs)
                            .f64("thm41_total_margin", rep.thm41_total_margin())
                            .f64("thm41_component_margin", rep.thm41_component_margin())
                            .f64("thm42_teal_rhs", rep.thm42_teal_rhs)
                            .f64("lemma2_margin", rec.lemma2_margin.unwrap_or(f64::NAN));
                    }
                    if let Some(reason) = &rec.reason {
                        row.set("error", sanitize(reason));
                    }
                    let cells = row.finish();
                    table.push(cells);
                    records.push(rec);
                }
            }
            Err(msg) => {
                failures += 1;
                let mut row = table.row();
                base(&mut row, "failure", "");
                row.set("trial", t.to_string())
                    .set("seed", trial_seed(cfg, t).to_string())
                    .set("error", sanitize(&msg))
                    .set("wall_ms", ms);
                let cells = row.finish();
                table.push(cells);
            }
        }
    }
    for variant in ["exact", "inexact"] {
        let recs: Vec<&BoundsRecord> = records.iter().filter(|r| r.variant == variant).collect();
        let reports: Vec<&BoundReport> = recs.iter().filter_map(|r| r.report.as_ref()).collect();
        let (tm, ts) = mean_std(&reports.iter().map(|r| r.observed_training_err).collect::<Vec<_>>());
        let (rm, rs) = mean_std(&reports.iter().map(|r| r.observed_recon_err).collect::<Vec<_>>());
        let mut row = table.row();
        base(&mut row, "summary", variant);
        row.f64("training_err", tm)
            .f64("training_err_std", ts)
            .f64("recon_err", rm)
            .f64("recon_err_std", rs)
            .set("n_applicable", reports.len().to_string())
            .set(
                "n_conditions_hold",
                reports.iter().filter(|r| r.conditions_hold()).count().to_string(),
            )
            .set(
                "n_bounds_hold",
                recs.iter()
                    .filter(|r| r.report.as_ref().is_some_and(|p| p.conditions_hold()) && r.bounds_hold())
                    .count()
                    .to_string(),
            );
        let cells = row.finish();
        table.push(cells);
    }
    let mut out = write_output(cfg, &table, failures)?;
    let json_path = cfg.output_path().join("bounds_reports.json");
    let json = serde_json::to_string_pretty(&records).expect("reports serialize");
    std::fs::write(&json_path, json).map_err(|e| HarnessError::io(&json_path, e))?;
    out.extra_files.push(json_path);
    Ok(out)
}

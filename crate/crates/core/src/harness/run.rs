use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::output::{Cell, Csv, OutputDir, Report};
use super::{
    validate_config, CouplingParams, Experiment, ExperimentConfig, FlowCheckParams, LocationParams, StabilisationParams,
    SweepParams, ValidateParams,
};
use crate::density::{solve_fixed_point, FixedPointConfig};
use crate::error::{Error, Result};
use crate::exit::{exit_location_stats, kramers_sweep, Domain, ExitRecord, KramersResult};
use crate::occupation::{stabilisation_curve, StabilisationCurve, StabilisationEstimate};
use crate::potentials::{validate_assumptions, PotentialKind, PotentialSpec, SampleGrid};
use crate::sde::{
    deterministic_flow, frozen_flow, simulate_coupled, FlowConfig, FlowPath, GapBoundCheck, SimConfig, BROWNIAN_TAG,
};
use crate::seed::derive_seed;

/// Seeds of the Brownian streams of one group of replicas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedGroup {
    pub label: String,
    pub stream_seed: u64,
    pub replica_seeds: Vec<u64>,
}

impl SeedGroup {
    fn brownian(label: String, stream_seed: u64, replicas: usize) -> Self {
        Self {
            label,
            stream_seed,
            replica_seeds: (0..replicas as u64).map(|r| derive_seed(stream_seed, BROWNIAN_TAG, r)).collect(),
        }
    }
}

/// What a run produced. Written to `manifest.json` next to the outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub artifact_version: String,
    /// SHA-256 of `config.resolved.toml`.
    pub config_hash: String,
    pub master_seed: u64,
    pub experiment_seed: u64,
    pub estimated_steps: f64,
    /// SHA-256 of every output file except the manifest itself.
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub workers: usize,
    /// All PASS/FAIL checks of `report.txt` passed.
    pub checks_passed: bool,
    pub replica_seeds: Vec<SeedGroup>,
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Err(Error::Config("worker count must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

struct Ctx<'a> {
    v: &'a PotentialSpec,
    w: &'a PotentialSpec,
    seed: u64,
    budget: f64,
}

struct Sink {
    out: OutputDir,
    report: Report,
    seeds: Vec<SeedGroup>,
}

/// Validates `config`, runs it on the current rayon pool and writes every
/// output into `out_dir`. Failed checks go to `report.txt`; only hard errors
/// are returned as `Err`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let val = validate_config(config)?;
    let resolved = val.config.to_toml_string()?;
    let mut sink = Sink {
        out: OutputDir::create(out_dir)?,
        report: Report::default(),
        seeds: Vec::new(),
    };
    sink.out.write("config.resolved.toml", resolved.as_bytes())?;
    let ctx = Ctx {
        v: &val.v,
        w: &val.w,
        seed: val.experiment_seed,
        budget: config.step_budget,
    };
    let tag = config.experiment.tag();
    let outcome = match &val.config.experiment {
        Experiment::ValidateAssumptions(p) => run_validate(&ctx, p, &mut sink),
        Experiment::FlowCheck(p) => run_flow(&ctx, p, &mut sink),
        Experiment::InvariantFixedPoint(p) => run_fixed_point(&ctx, p, &mut sink),
        Experiment::Stabilisation(p) => run_stabilisation(&ctx, p, &mut sink),
        Experiment::CouplingGap(p) => run_coupling(&ctx, p, &mut sink),
        Experiment::Kramers(p) => run_kramers(&ctx, p, &mut sink).map(|_| ()),
        Experiment::ExitLocation(p) => run_location(&ctx, p, &mut sink),
    };
    outcome.map_err(|e| context(tag, e))?;
    sink.out.write("report.txt", sink.report.render().as_bytes())?;

    let manifest = RunManifest {
        experiment: tag.to_string(),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: super::sha256_hex(resolved.as_bytes()),
        master_seed: config.master_seed,
        experiment_seed: val.experiment_seed,
        estimated_steps: val.estimated_steps,
        outputs: sink.out.checksums().clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        workers: rayon::current_num_threads(),
        checks_passed: sink.report.all_passed(),
        replica_seeds: sink.seeds,
    };
    sink.out.write_json("manifest.json", &manifest)?;
    Ok(manifest)
}

fn context(tag: &str, e: Error) -> Error {
    match e {
        Error::Config(s) => Error::Config(format!("{tag}: {s}")),
        Error::Usage(s) => Error::Usage(format!("{tag}: {s}")),
        Error::GridCoverage(s) => Error::GridCoverage(format!("{tag}: {s}")),
        other => other,
    }
}

fn run_validate(ctx: &Ctx, p: &ValidateParams, sink: &mut Sink) -> Result<()> {
    let grid = SampleGrid::rays(ctx.v.minimizer(), p.grid_radius, p.n_radii, p.n_directions);
    let rep = validate_assumptions(ctx.v, ctx.w, &grid)?;
    for c in &rep.checks {
        sink.report.check(c.name, c.passed, c.detail.clone());
    }
    sink.out.write_json("validation.json", &rep)
}

/// Per-axis decay rates when the flow is an explicit exponential.
fn closed_form_rates(v: &PotentialSpec, w: &PotentialSpec, frozen: bool) -> Option<Vec<f64>> {
    let PotentialKind::Quadratic { curvature: c, .. } = &v.kind else {
        return None;
    };
    match &w.kind {
        PotentialKind::Zero { .. } => Some(c.clone()),
        PotentialKind::Quadratic { curvature: a, .. } if frozen => Some(c.iter().zip(a).map(|(x, y)| x + y).collect()),
        _ => None,
    }
}

fn closed_form_deviation(path: &FlowPath, start: &[f64], m: &[f64], rates: &[f64]) -> f64 {
    let mut dev: f64 = 0.0;
    for (i, &t) in path.times.iter().enumerate() {
        for (j, x) in path.point(i).iter().enumerate() {
            let exact = m[j] + (start[j] - m[j]) * (-rates[j] * t).exp();
            dev = dev.max((x - exact).abs());
        }
    }
    dev
}

fn flow_csv(path: &FlowPath) -> Csv {
    let mut header = vec!["t".to_string()];
    header.extend((1..=path.dim).map(|i| format!("x_{i}")));
    let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for (i, &t) in path.times.iter().enumerate() {
        let mut cells = vec![Cell::F(t)];
        cells.extend(path.point(i).iter().map(|x| Cell::F(*x)));
        csv.row(&cells);
    }
    csv
}

fn flow_summary(path: &FlowPath) -> serde_json::Value {
    json!({
        "finest_dt": path.dt,
        "halvings": path.halvings,
        "refinement_difference": path.refinement_difference,
        "terminal_distance": path.terminal_distance,
        "final_point": path.final_point(),
    })
}

fn run_flow(ctx: &Ctx, p: &FlowCheckParams, sink: &mut Sink) -> Result<()> {
    let fc = FlowConfig {
        t_end: p.t_end,
        dt: p.dt,
        tol: p.tol,
        max_halvings: p.max_halvings,
        warmup_steps: p.warmup_steps,
    };
    let m = ctx.v.minimizer();
    let y0 = p.frozen_x0.clone().unwrap_or_else(|| p.x0.clone());
    let phi = deterministic_flow(ctx.v, ctx.w, &p.x0, &fc, None)?;
    let rho = frozen_flow(ctx.v, ctx.w, &m, &y0, &fc, None)?;
    let mut summary = json!({
        "deterministic": flow_summary(&phi),
        "frozen": flow_summary(&rho),
        "tol": p.tol,
    });
    for (name, path, start, frozen) in [("deterministic", &phi, &p.x0, false), ("frozen", &rho, &y0, true)] {
        match closed_form_rates(ctx.v, ctx.w, frozen) {
            Some(rates) => {
                let dev = closed_form_deviation(path, start, &m, &rates);
                summary[name]["closed_form_max_deviation"] = json!(dev);
                sink.report.check(
                    &format!("{name} flow vs closed form"),
                    dev <= p.tol,
                    format!("max deviation {dev:.3e} (tol {:.1e}, {} halvings)", p.tol, path.halvings),
                );
            }
            None => sink.report.note(format!(
                "{name} flow has no closed form for these potentials; terminal distance {:.3e}",
                path.terminal_distance
            )),
        }
    }
    sink.out.write_csv("flow.csv", flow_csv(&phi))?;
    sink.out.write_csv("frozen_flow.csv", flow_csv(&rho))?;
    sink.out.write_json("flow.json", &summary)
}

fn run_fixed_point(ctx: &Ctx, p: &FixedPointConfig, sink: &mut Sink) -> Result<()> {
    let (rho, diag) = solve_fixed_point(ctx.v, ctx.w, p)?;
    let mut csv = Csv::new(&["x", "rho"]);
    for (i, r) in rho.values.iter().enumerate() {
        csv.row(&[Cell::F(rho.grid.x(i)), Cell::F(*r)]);
    }
    sink.out.write_csv("density.csv", csv)?;
    let last = diag.residuals.last().copied().unwrap_or(f64::NAN);
    sink.report.check(
        "fixed-point residual",
        last <= p.tol,
        format!("{last:.3e} after {} iterations (tol {:.1e})", diag.iterations, p.tol),
    );
    if diag.damping_warning {
        sink.report.note("residual increased during the iteration; consider a smaller damping");
    }
    let variance = rho.variance();
    let mut oracle = serde_json::Value::Null;
    if let (PotentialKind::Quadratic { curvature: c, .. }, PotentialKind::Quadratic { curvature: a, .. }) =
        (&ctx.v.kind, &ctx.w.kind)
    {
        let exact = p.sigma * p.sigma / (2.0 * (c[0] + a[0]));
        let rel = (variance - exact).abs() / exact;
        sink.report.check(
            "variance vs Gaussian fixed point",
            rel <= 0.01,
            format!("variance {variance:.6e}, exact {exact:.6e}, relative error {rel:.2e}"),
        );
        oracle = json!(exact);
    }
    sink.out.write_json(
        "diagnostics.json",
        &json!({
            "iterations": diag.iterations,
            "residuals": diag.residuals,
            "damping_warning": diag.damping_warning,
            "sigma": diag.sigma,
            "grid": diag.grid,
            "mean": rho.mean(),
            "variance": variance,
            "variance_oracle": oracle,
        }),
    )
}

fn start_point(x0: &Option<Vec<f64>>, v: &PotentialSpec) -> Vec<f64> {
    x0.clone().unwrap_or_else(|| v.minimizer())
}

fn stabilisation_rows(csv: &mut Csv, curve: &StabilisationCurve, est: &StabilisationEstimate) {
    let t_hat = est.t_hat.unwrap_or(f64::INFINITY);
    for c in 0..curve.checkpoints.len() {
        csv.row(&[
            Cell::F(curve.checkpoints[c]),
            Cell::F(curve.mean[c]),
            Cell::F(curve.stderr[c]),
            Cell::F(est.kappa),
            Cell::F(curve.sigma),
            Cell::F(t_hat),
        ]);
    }
}

const STABILISATION_HEADER: [&str; 6] = ["checkpoint_t", "mean_dist", "stderr", "kappa", "sigma", "t_hat"];

/// `t_hat` may not grow by more than this factor when σ decreases.
pub const T_HAT_GROWTH_TOLERANCE: f64 = 1.25;

fn run_stabilisation(ctx: &Ctx, p: &StabilisationParams, sink: &mut Sink) -> Result<()> {
    let cps = p.checkpoints.resolve()?;
    let x0 = start_point(&p.x0, ctx.v);
    let mut csv = Csv::new(&STABILISATION_HEADER);
    let mut t_hats = Vec::new();
    let mut summaries = Vec::new();
    for (i, &sigma) in p.sigmas.iter().enumerate() {
        let seed = derive_seed(ctx.seed, "sigma", i as u64);
        let mut cfg = SimConfig::new(sigma, p.dt, *cps.last().unwrap(), x0.clone(), seed).with_auto_stride();
        cfg.warmup_steps = p.warmup_steps;
        let curve = stabilisation_curve(ctx.v, ctx.w, &cfg, p.replicas, &cps)?;
        let est = curve.estimate(p.kappa);
        stabilisation_rows(&mut csv, &curve, &est);
        sink.seeds.push(SeedGroup::brownian(format!("sigma={sigma}"), seed, p.replicas));
        let bad = curve.stderr_inversions(p.monotone_from);
        sink.report.check(
            &format!("sigma={sigma} mean distance non-increasing after t={}", p.monotone_from),
            bad == 0,
            format!(
                "{bad} rises beyond one stderr, {} rises in total",
                curve.raw_inversions(p.monotone_from)
            ),
        );
        sink.report.check(
            &format!("sigma={sigma} t_hat(kappa={}) finite", p.kappa),
            est.t_hat.is_some(),
            match est.t_hat {
                Some(t) => format!("t_hat = {t}"),
                None => format!("last mean {:.4} > kappa", est.trailing_mean),
            },
        );
        t_hats.push(est.t_hat);
        summaries.push(json!({ "curve": curve, "estimate": est }));
    }
    for (i, pair) in t_hats.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        let ok = matches!((a, b), (Some(a), Some(b)) if b <= T_HAT_GROWTH_TOLERANCE * a);
        sink.report.check(
            &format!("t_hat trend sigma={} -> {}", p.sigmas[i], p.sigmas[i + 1]),
            ok,
            format!("{a:?} -> {b:?} (growth tolerance {T_HAT_GROWTH_TOLERANCE})"),
        );
    }
    sink.out.write_csv("stabilisation.csv", csv)?;
    sink.out.write_json("stabilisation.json", &summaries)
}

fn path_header(dim: usize) -> Vec<String> {
    let mut h = vec!["replica".to_string(), "t".to_string()];
    h.extend((1..=dim).map(|i| format!("x_{i}")));
    h
}

struct CoupledSummary {
    check: GapBoundCheck,
    gap: Vec<(f64, f64)>,
    x: Option<(Vec<f64>, Vec<f64>)>,
    y: Option<(Vec<f64>, Vec<f64>)>,
}

fn thin<T: Copy>(v: &[T], every: usize) -> impl Iterator<Item = (usize, T)> + '_ {
    let last = v.len().saturating_sub(1);
    v.iter().copied().enumerate().filter(move |(i, _)| i % every == 0 || *i == last)
}

fn thin_path(times: &[f64], points: &[f64], dim: usize, keep: usize) -> (Vec<f64>, Vec<f64>) {
    let every = times.len().div_ceil(keep.max(1)).max(1);
    let mut t = Vec::new();
    let mut x = Vec::new();
    for (i, ti) in thin(times, every) {
        t.push(ti);
        x.extend_from_slice(&points[i * dim..(i + 1) * dim]);
    }
    (t, x)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    crate::occupation::quantile(&xs, 0.5)
}

fn run_coupling(ctx: &Ctx, p: &CouplingParams, sink: &mut Sink) -> Result<()> {
    let cps = p.checkpoints.resolve()?;
    let m = ctx.v.minimizer();
    let d = m.len();
    let x0 = start_point(&p.x0, ctx.v);
    let mut stab = Csv::new(&STABILISATION_HEADER);
    let mut summary = Csv::new(&[
        "sigma", "replica", "t_switch", "horizon", "sup_gap", "sup_w2k", "sup_y_pow", "constant", "bound", "ratio", "holds",
    ]);
    let mut medians = Vec::new();
    let mut json_rows = Vec::new();
    for (i, &sigma) in p.sigmas.iter().enumerate() {
        let s_seed = derive_seed(ctx.seed, "stabilisation-sigma", i as u64);
        let mut cfg = SimConfig::new(sigma, p.dt, *cps.last().unwrap(), x0.clone(), s_seed).with_auto_stride();
        cfg.warmup_steps = p.warmup_steps;
        let curve = stabilisation_curve(ctx.v, ctx.w, &cfg, p.replicas, &cps)?;
        let est = curve.estimate(p.kappa);
        stabilisation_rows(&mut stab, &curve, &est);
        sink.seeds.push(SeedGroup::brownian(format!("stabilisation sigma={sigma}"), s_seed, p.replicas));
        let Some(t_hat) = est.t_hat else {
            sink.report.check(
                &format!("sigma={sigma} stabilised"),
                false,
                format!("mean distance {:.4} > kappa at the last checkpoint", est.trailing_mean),
            );
            medians.push(f64::NAN);
            continue;
        };

        let c_seed = derive_seed(ctx.seed, "coupled-sigma", i as u64);
        let horizon = p.horizon_factor * t_hat;
        let mut run_cfg = SimConfig::new(sigma, p.dt, horizon, x0.clone(), c_seed).with_auto_stride();
        run_cfg.warmup_steps = p.warmup_steps;
        sink.seeds.push(SeedGroup::brownian(format!("coupled sigma={sigma}"), c_seed, p.replicas));
        let runs: Vec<CoupledSummary> = (0..p.replicas as u64)
            .into_par_iter()
            .map(|r| {
                let run = simulate_coupled(ctx.v, ctx.w, &m, &run_cfg, t_hat, r)?;
                let every = run.gap.times.len().div_ceil(p.record_points).max(1);
                let gap = thin(&run.gap.times, every).map(|(j, t)| (t, run.gap.gap_sq[j])).collect();
                let dump = (r as usize) < p.dump_replicas;
                Ok(CoupledSummary {
                    check: run.check,
                    gap,
                    x: dump.then(|| thin_path(&run.x.times, &run.x.points, d, p.record_points)),
                    y: dump.then(|| thin_path(&run.y.times, &run.y.points, d, p.record_points)),
                })
            })
            .collect::<Result<_>>()?;

        let header = path_header(d);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut gap_csv = Csv::new(&["replica", "t", "gap_sq"]);
        let mut xs = Csv::new(&header);
        let mut ys = Csv::new(&header);
        for (r, s) in runs.iter().enumerate() {
            for &(t, g) in &s.gap {
                gap_csv.row(&[Cell::U(r as u64), Cell::F(t), Cell::F(g)]);
            }
            for (csv, path) in [(&mut xs, &s.x), (&mut ys, &s.y)] {
                if let Some((t, pts)) = path {
                    for (j, tj) in t.iter().enumerate() {
                        let mut cells = vec![Cell::U(r as u64), Cell::F(*tj)];
                        cells.extend(pts[j * d..(j + 1) * d].iter().map(|x| Cell::F(*x)));
                        csv.row(&cells);
                    }
                }
            }
            let c = &s.check;
            summary.row(&[
                Cell::F(sigma),
                Cell::U(r as u64),
                Cell::F(t_hat),
                Cell::F(horizon),
                Cell::F(c.sup_gap),
                Cell::F(c.sup_w2k),
                Cell::F(c.sup_y_pow),
                Cell::F(c.constant),
                Cell::F(c.bound),
                Cell::F(c.ratio),
                Cell::B(c.holds),
            ]);
        }
        sink.out.write_csv(&format!("gap_sigma_{i}.csv"), gap_csv)?;
        if p.dump_replicas > 0 {
            sink.out.write_csv(&format!("trajectory_x_sigma_{i}.csv"), xs)?;
            sink.out.write_csv(&format!("trajectory_y_sigma_{i}.csv"), ys)?;
        }
        let holds = runs.iter().filter(|s| s.check.holds).count() as f64 / runs.len() as f64;
        let med = median(runs.iter().map(|s| s.check.sup_gap).collect());
        medians.push(med);
        sink.report.check(
            &format!("sigma={sigma} pathwise gap bound"),
            holds >= p.bound_fraction,
            format!("holds for {:.1}% of replicas (need {:.1}%)", 100.0 * holds, 100.0 * p.bound_fraction),
        );
        json_rows.push(json!({
            "sigma": sigma,
            "t_hat": t_hat,
            "horizon": horizon,
            "median_sup_gap": med,
            "bound_fraction": holds,
        }));
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    sink.report.check(
        "median sup-gap decreases with sigma",
        decreasing,
        format!("medians {medians:?}"),
    );
    sink.out.write_csv("stabilisation.csv", stab)?;
    sink.out.write_csv("coupling.csv", summary)?;
    sink.out.write_json("coupling.json", &json_rows)
}

fn write_sweep(ctx: &Ctx, res: &KramersResult, master: u64, sink: &mut Sink) -> Result<()> {
    let mut csv = Csv::new(&[
        "sigma",
        "replicas",
        "median_tau",
        "mean_tau",
        "q10",
        "q90",
        "rate",
        "H",
        "window_delta",
        "in_window_fraction",
        "timed_out_count",
    ]);
    for r in &res.rows {
        csv.row(&[
            Cell::F(r.sigma),
            Cell::U(r.replicas as u64),
            Cell::F(r.median_tau),
            Cell::F(r.mean_tau),
            Cell::F(r.q10),
            Cell::F(r.q90),
            Cell::F(r.rate),
            Cell::F(r.h),
            Cell::F(r.window_delta),
            Cell::F(r.in_window_fraction),
            Cell::U(r.timed_out_count as u64),
        ]);
    }
    sink.out.write_csv("sweep.csv", csv)?;

    let d = ctx.v.dim();
    let mut header = vec!["sigma", "replica", "tau", "timed_out", "degenerate_start"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend((1..=d).map(|i| format!("exit_{i}")));
    let mut exits = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for (i, (row, recs)) in res.rows.iter().zip(&res.records).enumerate() {
        for rec in recs {
            let mut cells = vec![
                Cell::F(row.sigma),
                Cell::U(rec.replica),
                Cell::F(rec.tau),
                Cell::B(rec.timed_out),
                Cell::B(rec.degenerate_start),
            ];
            cells.extend(rec.exit_point.iter().map(|x| Cell::F(*x)));
            exits.row(&cells);
        }
        let seed = derive_seed(master, "kramers-row", i as u64);
        sink.seeds.push(SeedGroup::brownian(format!("sigma={}", row.sigma), seed, row.replicas));
    }
    sink.out.write_csv("exits.csv", exits)?;
    sink.out.write_json("sweep.json", res)?;

    let fc = &res.flow_check;
    sink.report.check(
        "zero-noise flow checks",
        fc.passed,
        format!(
            "flow terminal distance {:.2e}, worst frozen contraction {:.3} on {} boundary points ({})",
            fc.flow_terminal_distance, fc.frozen_worst_contraction, fc.boundary_points, fc.note
        ),
    );
    for r in &res.rows {
        sink.report.check(
            &format!("sigma={} row usable", r.sigma),
            r.usable,
            format!(
                "rate {:.4} vs H {:.4}, in-window {:.3}, {} timed out",
                r.rate, r.h, r.in_window_fraction, r.timed_out_count
            ),
        );
    }
    sink.report.check(
        "gap |rate - H| non-increasing up to one inversion",
        res.gap_trend_ok,
        format!("{:?}", res.rows.iter().map(|r| (r.rate - r.h).abs()).collect::<Vec<_>>()),
    );
    sink.report.check(
        "in-window fraction non-decreasing",
        res.window_trend_ok,
        format!("{:?}", res.rows.iter().map(|r| r.in_window_fraction).collect::<Vec<_>>()),
    );
    if res.cost.flagged {
        sink.report.note(format!(
            "sampled boundary cost {:.6} undercuts the optimizer value {:.6}",
            res.cost.sampled_min.unwrap_or(f64::NAN),
            res.cost.h
        ));
    }
    Ok(())
}

fn run_kramers(ctx: &Ctx, p: &SweepParams, sink: &mut Sink) -> Result<KramersResult> {
    let kc = p.kramers_config(ctx.seed, ctx.budget);
    let res = kramers_sweep(ctx.v, ctx.w, &p.domain, &kc)?;
    write_sweep(ctx, &res, kc.master_seed, sink)?;
    Ok(res)
}

fn run_location(ctx: &Ctx, p: &LocationParams, sink: &mut Sink) -> Result<()> {
    let res = run_kramers(ctx, &p.sweep, sink)?;
    let m = ctx.v.minimizer();
    let domain = Domain::new(p.sweep.domain.clone(), ctx.v, ctx.w, &m)?;
    let rows: Vec<(f64, &[ExitRecord])> = res.rows.iter().zip(&res.records).map(|(r, recs)| (r.sigma, recs.as_slice())).collect();
    let stats = exit_location_stats(&rows, &domain, p.margin, p.bins)?;
    let mut csv = Csv::new(&["sigma", "exit_cost_bin", "count", "frac_in_N"]);
    for row in &stats.rows {
        for (lo, _, count) in &row.histogram {
            csv.row(&[Cell::F(row.sigma), Cell::F(*lo), Cell::U(*count as u64), Cell::F(row.frac_in_n)]);
        }
    }
    sink.out.write_csv("location.csv", csv)?;
    sink.out.write_json("location.json", &stats)?;
    sink.report.check(
        &format!("fraction of exits in N (margin {}) non-increasing", p.margin),
        stats.trend_ok,
        format!("{:?}", stats.rows.iter().map(|r| r.frac_in_n).collect::<Vec<_>>()),
    );
    if let Some(last) = stats.rows.last() {
        let f = last.near_minimizer_fraction;
        sink.report.check(
            &format!("sigma={} exits near a cost minimizer", last.sigma),
            f >= p.near_fraction,
            format!("{:.3} within {} degrees (need {:.2})", f, crate::exit::NEAR_ANGLE_DEG, p.near_fraction),
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ExperimentConfig;

    const FLOW: &str = r#"
experiment = "flow_check"
master_seed = 3
x0 = [2.0]
t_end = 5.0

[v]
kind = "quadratic"
center = [0.5]
curvature = [1.0]

[w]
kind = "zero"
dim = 1
"#;

    #[test]
    fn flow_check_matches_closed_form() {
        let dir = tempfile::tempdir().unwrap();
        let c = ExperimentConfig::from_toml_str(FLOW).unwrap();
        let man = run_experiment(&c, dir.path()).unwrap();
        let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
        assert!(man.checks_passed, "{report}");
        assert!(report.contains("PASS deterministic flow vs closed form"));
        for f in ["flow.csv", "frozen_flow.csv", "config.resolved.toml", "report.txt", "flow.json"] {
            assert!(man.outputs.contains_key(f), "{f}");
        }
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn rerun_gives_identical_checksums() {
        let text = r#"
experiment = "stabilisation"
master_seed = 11
sigmas = [0.5, 0.3]
kappa = 0.3
replicas = 30
dt = 0.01
x0 = [1.0]
checkpoint_every = 1.0
t_end = 5.0

[v]
kind = "quadratic"
center = [0.0]
curvature = [1.0]

[w]
kind = "quadratic"
center = [0.0]
curvature = [1.0]
"#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m1 = with_workers(1, || run_experiment(&c, a.path())).unwrap().unwrap();
        let m2 = with_workers(4, || run_experiment(&c, b.path())).unwrap().unwrap();
        assert_eq!(m1.outputs, m2.outputs);
        assert_eq!(m1.config_hash, m2.config_hash);
        assert_eq!(m1.replica_seeds, m2.replica_seeds);
    }
}

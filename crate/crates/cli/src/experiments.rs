//! Typed experiment plans and their execution.
//!
//! [`plan`] checks a parsed config against the simulation contracts without
//! running anything; [`execute`] runs a plan and collects its tables and
//! statistics.

use collapsim_core::csl::{
    diffusion_correspondence, evolve_1d, evolve_two_state, importance_check, CslMode, ImportanceOptions, Recording,
    SmearedOperator, TwoStateCslParams,
};
use collapsim_core::ensemble::try_run_streams;
use collapsim_core::grw::{mean_collapse_time, simulate_pointer, total_hit_rate, Branch, GrwParams, PointerModel};
use collapsim_core::reality::{
    flow_balance, flow_convergence, hydrogen_stuff_bound, stuff_report, Region, QUOTED_HYDROGEN_LOG10,
};
use collapsim_core::rng::derive_seed;
use collapsim_core::ruin::{evolve_diffusion, play_game, ruin_probability, DensityProfile, GameConfig, Player};
use collapsim_core::stats::{binomial_sigma, fit_exponential_rate, summarize, Histogram};
use collapsim_core::{
    sample_noise, uniform_steps, Grid1D, NoiseSpec, Packet, RngStream, TwoStateVector, WaveFunction,
};
use num_complex::Complex64;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;
use crate::output::{RunOutput, Table};

#[derive(Debug, Clone)]
pub enum Plan {
    RuinGames { game: GameConfig, trajectories: usize, bins: usize },
    RuinSolve { stake: f64, points: usize },
    Diffusion(DiffusionPlan),
    GrwPointer { params: GrwParams, model: PointerModel, trajectories: usize, bins: usize },
    GrwRate { params: GrwParams, grid: Grid1D, states: usize },
    CslCooked(CslCookedPlan),
    CslImportance(CslImportancePlan),
    CslCorrespondence { p: TwoStateCslParams, x0: f64, trajectories: usize, times: Vec<f64>, lambda_diff: f64 },
    CslField(CslFieldPlan),
    Stuff(StuffPlan),
    Flow(FlowPlan),
}

#[derive(Debug, Clone)]
pub struct DiffusionPlan {
    initial: DensityProfile,
    dt: f64,
    checkpoints: Vec<f64>,
    refine: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct CslCookedPlan {
    p: TwoStateCslParams,
    c0: TwoStateVector,
    dt: f64,
    t_end: f64,
    trajectories: usize,
    record_every: usize,
    bins: usize,
}

#[derive(Debug, Clone)]
pub struct CslImportancePlan {
    p: TwoStateCslParams,
    x0: f64,
    dt: f64,
    t_end: f64,
    trajectories: usize,
    opts: ImportanceOptions,
}

#[derive(Debug, Clone)]
pub struct CslFieldPlan {
    params: GrwParams,
    psi: WaveFunction,
    split: usize,
    dt: f64,
    t_end: f64,
    trajectories: usize,
}

#[derive(Debug, Clone)]
pub struct StuffPlan {
    psi: WaveFunction,
    region: Region,
    epsilon: f64,
    r_v: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FlowPlan {
    psi: WaveFunction,
    region: Region,
    lambda: f64,
    a: f64,
    noise: NoiseSpec,
    dt: f64,
    t_end: f64,
    convergence: bool,
}

/// Collects diagnostics while building a plan.
#[derive(Default)]
struct Checks(Vec<String>);

impl Checks {
    fn core<T>(&mut self, r: collapsim_core::Result<T>) -> Option<T> {
        r.map_err(|e| self.0.push(e.to_string())).ok()
    }

    fn fail(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    fn positive(&mut self, name: &str, v: f64) -> bool {
        if v > 0.0 {
            true
        } else {
            self.fail(format!("`{name}` must be > 0, got {v}"));
            false
        }
    }

    fn whole_steps(&mut self, dt: f64, t_end: f64) {
        let ratio = t_end / dt;
        if dt > 0.0 && t_end > 0.0 && (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            self.fail(format!("t_end = {t_end} is not a whole number of steps dt = {dt}"));
        }
    }

    fn step_bound(&mut self, dt: f64, bound: f64, formula: &str) {
        if dt > bound * (1.0 + 1e-12) {
            self.fail(format!("dt = {dt} exceeds the stability bound {formula} = {bound:e}"));
        }
    }

    fn finish<T>(self, plan: Option<T>) -> Result<T, Vec<String>> {
        match plan {
            Some(p) if self.0.is_empty() => Ok(p),
            _ => Err(self.0),
        }
    }
}

fn grid(c: &mut Checks, cfg: &ExperimentConfig) -> Option<Grid1D> {
    let (lo, hi, n) = (cfg.num("x_min"), cfg.num("x_max"), cfg.count("n_cells"));
    if hi <= lo {
        c.fail(format!("x_max = {hi} must exceed x_min = {lo}"));
        return None;
    }
    c.core(Grid1D::spanning(lo, hi, n))
}

fn packets(c: &mut Checks, cfg: &ExperimentConfig, with_weights: bool) -> Option<Vec<Packet>> {
    let centers = cfg.list("centers");
    let widths = cfg.list("widths");
    let weights = if with_weights { cfg.list("weights") } else { vec![1.0; centers.len()] };
    if centers.len() != widths.len() || centers.len() != weights.len() {
        c.fail("`centers`, `widths` and `weights` must have the same length");
        return None;
    }
    if widths.iter().any(|w| *w <= 0.0) || weights.iter().any(|w| *w < 0.0) {
        c.fail("packet widths must be > 0 and weights >= 0");
        return None;
    }
    Some(centers.iter().zip(&widths).zip(&weights).map(|((&x, &s), &w)| Packet::new(x, s, w)).collect())
}

fn checkpoints(c: &mut Checks, times: &[f64]) -> bool {
    if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        c.fail("`checkpoints` must be positive and strictly increasing");
        return false;
    }
    true
}

fn two_state(c: &mut Checks, cfg: &ExperimentConfig) -> Option<(TwoStateCslParams, TwoStateVector)> {
    let p = c.core(TwoStateCslParams::new(cfg.num("lambda"), cfg.num("a_L"), cfg.num("a_R")));
    let c0 = c.core(TwoStateVector::from_fraction(cfg.num("x0")));
    Some((p?, c0?))
}

/// Builds a plan, or every reason the config cannot run.
pub fn plan(cfg: &ExperimentConfig) -> Result<Plan, Vec<String>> {
    let mut c = Checks::default();
    let plan = match (cfg.experiment, cfg.mode.as_str()) {
        (Experiment::Ruin, "games") => {
            let halving = cfg.flag("halving");
            let game = GameConfig {
                x0: cfg.num("x0"),
                stake: cfg.num("stake"),
                halving,
                max_steps: cfg.has("max_steps").then(|| cfg.count("max_steps") as u64),
                record: false,
            };
            c.core(game.validate()).map(|_| Plan::RuinGames {
                game,
                trajectories: cfg.count("trajectories"),
                bins: cfg.count_or("bins", 50),
            })
        }
        (Experiment::Ruin, "solve") => {
            let stake = cfg.num("stake");
            let units = 1.0 / stake;
            if !(stake > 0.0 && stake <= 0.5) || (units - units.round()).abs() > 1e-9 * units {
                c.fail(format!("`stake` = {stake} must divide the total money into at least two units"));
            }
            Some(Plan::RuinSolve {
                stake,
                points: cfg.count_or("points", 20),
            })
        }
        (Experiment::Diffusion, _) => {
            let t_end = cfg.num("t_end");
            c.positive("t_end", t_end);
            let r = cfg.count("r");
            if r > 2 {
                c.fail(format!("`r` must be 1 or 2, got {r}"));
            }
            let initial = c.core(DensityProfile::delta(cfg.count("n_cells"), cfg.num("lambda"), r as u32, cfg.num("x0")));
            let times = if cfg.has("checkpoints") { cfg.list("checkpoints") } else { vec![t_end] };
            if checkpoints(&mut c, &times) && times.last() != Some(&t_end) {
                c.fail("the last checkpoint must equal `t_end`");
            }
            initial.map(|initial| {
                let bound = initial.stability_bound();
                let dt = cfg.num_or("dt", bound);
                if c.positive("dt", dt) {
                    c.step_bound(dt, bound, "h²/(2λ·max D)");
                }
                Plan::Diffusion(DiffusionPlan {
                    initial,
                    dt,
                    checkpoints: times,
                    refine: cfg.has("refine").then(|| cfg.count("refine")),
                })
            })
        }
        (Experiment::Grw, "pointer") => {
            let params = c.core(GrwParams::new(cfg.num("a"), cfg.num("lambda")));
            let wl = cfg.num("weight_left");
            let model = PointerModel {
                n: cfg.num("n"),
                branch_separation: cfg.num("separation"),
                branch_weights: (wl, 1.0 - wl),
            };
            params.and_then(|params| {
                c.core(model.validate(&params))?;
                Some(Plan::GrwPointer {
                    params,
                    model,
                    trajectories: cfg.count("trajectories"),
                    bins: cfg.count_or("bins", 50),
                })
            })
        }
        (Experiment::Grw, "rate") => {
            let params = c.core(GrwParams::new(cfg.num("a"), cfg.num("lambda")));
            let g = grid(&mut c, cfg);
            match (params, g) {
                (Some(params), Some(grid)) => {
                    if grid.dx() > params.a / 4.0 {
                        c.fail(format!("grid spacing {} does not resolve a = {} (need dx <= a/4)", grid.dx(), params.a));
                    }
                    Some(Plan::GrwRate {
                        params,
                        grid,
                        states: cfg.count("states"),
                    })
                }
                _ => None,
            }
        }
        (Experiment::Csl, "cooked") => {
            let (dt, t_end) = (cfg.num("dt"), cfg.num("t_end"));
            let ts = two_state(&mut c, cfg);
            if c.positive("dt", dt) && c.positive("t_end", t_end) {
                c.whole_steps(dt, t_end);
            }
            ts.map(|(p, c0)| {
                c.step_bound(dt, p.step_bound(), "1e-2/(λ(a_L-a_R)²)");
                let n_steps = (t_end / dt).round().max(1.0) as usize;
                Plan::CslCooked(CslCookedPlan {
                    p,
                    c0,
                    dt,
                    t_end,
                    trajectories: cfg.count("trajectories"),
                    record_every: cfg.count_or("record_every", (n_steps / 100).max(1)),
                    bins: cfg.count_or("bins", 20),
                })
            })
        }
        (Experiment::Csl, "importance") => {
            let (dt, t_end) = (cfg.num("dt"), cfg.num("t_end"));
            let ts = two_state(&mut c, cfg);
            if c.positive("dt", dt) && c.positive("t_end", t_end) {
                c.whole_steps(dt, t_end);
            }
            let m = cfg.count("trajectories");
            let defaults = ImportanceOptions::default();
            let opts = ImportanceOptions {
                batches: cfg.count_or("batches", defaults.batches),
                resample_below: if cfg.has("resample_below") {
                    Some(cfg.num("resample_below")).filter(|f| *f > 0.0)
                } else {
                    defaults.resample_below
                },
            };
            if m < 1000 {
                c.fail(format!("`trajectories` must be at least 1000 for the importance check, got {m}"));
            }
            if opts.batches < 2 || !m.is_multiple_of(opts.batches) {
                c.fail(format!("`batches` = {} must be at least 2 and divide `trajectories` = {m}", opts.batches));
            }
            ts.map(|(p, _)| {
                c.step_bound(dt, p.step_bound(), "1e-2/(λ(a_L-a_R)²)");
                Plan::CslImportance(CslImportancePlan {
                    p,
                    x0: cfg.num("x0"),
                    dt,
                    t_end,
                    trajectories: m,
                    opts,
                })
            })
        }
        (Experiment::Csl, "correspondence") => {
            let ts = two_state(&mut c, cfg);
            let times = cfg.list("checkpoints");
            checkpoints(&mut c, &times);
            let m = cfg.count("trajectories");
            if m < 10_000 {
                c.fail(format!("`trajectories` must be at least 10000 for the correspondence, got {m}"));
            }
            ts.map(|(p, _)| {
                let lambda_diff = cfg.num_or("lambda_diff", p.decoherence_rate());
                c.positive("lambda_diff", lambda_diff);
                Plan::CslCorrespondence {
                    p,
                    x0: cfg.num("x0"),
                    trajectories: m,
                    times,
                    lambda_diff,
                }
            })
        }
        (Experiment::Csl, "field") => {
            let params = c.core(GrwParams::new(cfg.num("a"), cfg.num("lambda")));
            let g = grid(&mut c, cfg);
            let pk = packets(&mut c, cfg, true);
            let (dt, t_end) = (cfg.num("dt"), cfg.num("t_end"));
            if c.positive("dt", dt) && c.positive("t_end", t_end) {
                c.whole_steps(dt, t_end);
            }
            match (params, g, pk) {
                (Some(params), Some(g), Some(pk)) => {
                    if let Some(op) = c.core(SmearedOperator::new(g, params.a)) {
                        c.step_bound(dt, op.step_bound(params.lambda), "1e-2/(λ·range²)");
                    }
                    let split_at = if cfg.has("split") {
                        cfg.num("split")
                    } else if pk.len() >= 2 {
                        0.5 * (pk[0].center + pk[1].center)
                    } else {
                        0.5 * (g.x_min() + g.x_max())
                    };
                    let split = (0..g.n_cells()).take_while(|&i| g.center(i) < split_at).count();
                    c.core(WaveFunction::packets(g, &pk)).map(|psi| {
                        Plan::CslField(CslFieldPlan {
                            params,
                            psi,
                            split,
                            dt,
                            t_end,
                            trajectories: cfg.count("trajectories"),
                        })
                    })
                }
                _ => None,
            }
        }
        (Experiment::Stuff, _) => {
            let g = grid(&mut c, cfg);
            let particles = cfg.count("particles");
            let with_weights = cfg.has("weights");
            let pk = packets(&mut c, cfg, with_weights);
            let epsilon = cfg.num_or("epsilon", collapsim_core::reality::DEFAULT_EPSILON);
            if !(0.0..1.0).contains(&epsilon) {
                c.fail(format!("`epsilon` must lie in [0, 1), got {epsilon}"));
            }
            let r_v = cfg.has("r_v").then(|| cfg.num("r_v"));
            if let Some(r) = r_v {
                c.positive("r_v", r);
            }
            match (g, pk) {
                (Some(g), Some(pk)) => {
                    let region = c.core(Region::from_positions(&g, cfg.num("region_lo"), cfg.num("region_hi")));
                    let psi = match particles {
                        1 => c.core(WaveFunction::packets(g, &pk)),
                        2 if pk.len() == 2 && !with_weights => {
                            let a = c.core(WaveFunction::gaussian_packet(g, pk[0].center, pk[0].width));
                            let b = c.core(WaveFunction::gaussian_packet(g, pk[1].center, pk[1].width));
                            a.zip(b).and_then(|(a, b)| c.core(WaveFunction::symmetrized_product(&a, &b)))
                        }
                        2 => {
                            c.fail("two particles take exactly two packets and no `weights`");
                            None
                        }
                        n => {
                            c.fail(format!("`particles` must be 1 or 2, got {n}"));
                            None
                        }
                    };
                    region.zip(psi).map(|(region, psi)| {
                        Plan::Stuff(StuffPlan {
                            psi,
                            region,
                            epsilon,
                            r_v,
                        })
                    })
                }
                _ => None,
            }
        }
        (Experiment::Flow, _) => {
            let g = grid(&mut c, cfg);
            let pk = packets(&mut c, cfg, false);
            let (lambda, a) = (cfg.num("lambda"), cfg.num("a"));
            let (dt, t_end, noise_dt) = (cfg.num("dt"), cfg.num("t_end"), cfg.num("noise_dt"));
            if lambda < 0.0 {
                c.fail(format!("`lambda` must be >= 0, got {lambda}"));
            }
            if c.positive("dt", dt) && c.positive("t_end", t_end) {
                c.whole_steps(dt, t_end);
            }
            c.positive("noise_dt", noise_dt);
            match (g, pk) {
                (Some(g), Some(pk)) if pk.len() == 2 => {
                    let op = c.core(SmearedOperator::new(g, a));
                    let region = c.core(Region::from_positions(&g, cfg.num("region_lo"), cfg.num("region_hi")));
                    let left = c.core(WaveFunction::gaussian_packet(g, pk[0].center, pk[0].width));
                    let right = c.core(WaveFunction::gaussian_packet(g, pk[1].center, pk[1].width));
                    let psi = left.zip(right).and_then(|(l, r)| c.core(WaveFunction::symmetrized_product(&l, &r)));
                    match (op, region, psi) {
                        (Some(op), Some(region), Some(psi)) if noise_dt > 0.0 && t_end > 0.0 => {
                            let n_noise = (t_end / noise_dt).ceil() as usize;
                            Some(Plan::Flow(FlowPlan {
                                psi,
                                region,
                                lambda,
                                a,
                                noise: NoiseSpec::field(*op.noise_grid(), lambda, noise_dt, n_noise),
                                dt,
                                t_end,
                                convergence: cfg.flag("convergence"),
                            }))
                        }
                        _ => None,
                    }
                }
                (Some(_), Some(_)) => {
                    c.fail("flow takes exactly two packets, one per particle");
                    None
                }
                _ => None,
            }
        }
        (e, m) => {
            c.fail(format!("no mode `{m}` for {e}"));
            None
        }
    };
    c.finish(plan)
}

pub fn execute(plan: &Plan, seed: u64) -> Result<RunOutput, CliError> {
    let mut out = RunOutput::default();
    match plan {
        Plan::RuinGames { game, trajectories, bins } => ruin_games(&mut out, game, *trajectories, *bins, seed)?,
        Plan::RuinSolve { stake, points } => ruin_solve(&mut out, *stake, *points)?,
        Plan::Diffusion(p) => diffusion(&mut out, p)?,
        Plan::GrwPointer {
            params,
            model,
            trajectories,
            bins,
        } => grw_pointer(&mut out, params, model, *trajectories, *bins, seed)?,
        Plan::GrwRate { params, grid, states } => grw_rate(&mut out, params, *grid, *states, seed)?,
        Plan::CslCooked(p) => csl_cooked(&mut out, p, seed)?,
        Plan::CslImportance(p) => csl_importance(&mut out, p, seed)?,
        Plan::CslCorrespondence {
            p,
            x0,
            trajectories,
            times,
            lambda_diff,
        } => {
            let r = diffusion_correspondence(p, *x0, *trajectories, times, seed, *lambda_diff)?;
            let mut t = Table::new(
                "correspondence",
                &[
                    "time",
                    "sde_mean",
                    "sde_mean_se",
                    "sde_moment",
                    "sde_moment_se",
                    "pde_mean",
                    "pde_moment",
                    "pde_moment_at_generator_rate",
                    "min_ln_tail",
                ],
            );
            let mut worst = 0.0f64;
            for row in &r.rows {
                worst = worst.max(row.relative_gap());
                t.push(vec![
                    row.t.into(),
                    row.sde_mean.into(),
                    row.sde_mean_se.into(),
                    row.sde_moment.into(),
                    row.sde_moment_se.into(),
                    row.pde_mean.into(),
                    row.pde_moment.into(),
                    row.pde_moment_at_generator.into(),
                    row.min_ln_tail.into(),
                ]);
            }
            out.tables.push(t);
            out.stat("gamma", r.gamma, "correspondence");
            out.stat("lambda_diff", r.lambda_diff, "correspondence");
            out.stat("measured_lambda_diff", r.measured_lambda_diff, "correspondence");
            out.stat("max_relative_gap", worst, "correspondence");
        }
        Plan::CslField(p) => csl_field(&mut out, p, seed)?,
        Plan::Stuff(p) => stuff(&mut out, p)?,
        Plan::Flow(p) => flow(&mut out, p, seed)?,
    }
    Ok(out)
}

fn ruin_games(out: &mut RunOutput, game: &GameConfig, m: usize, bins: usize, seed: u64) -> Result<(), CliError> {
    let records = try_run_streams(seed, m, |_, rng| play_game(game, rng))?;
    let mut t = Table::new("games", &["trajectory", "winner", "steps", "final_fraction_left", "final_ln_tail"]);
    for (i, r) in records.iter().enumerate() {
        let winner = match r.winner {
            Some(Player::L) => "L",
            Some(Player::R) => "R",
            None => "none",
        };
        t.push(vec![
            i.into(),
            winner.into(),
            r.steps.into(),
            r.final_purse.fraction_left().into(),
            r.final_purse.ln_tail().into(),
        ]);
    }
    out.tables.push(t);
    let wins = records.iter().filter(|r| r.winner == Some(Player::L)).count() as f64 / m as f64;
    out.stat_se("l_win_fraction", wins, binomial_sigma(wins, m), "games");
    let steps: Vec<f64> = records.iter().map(|r| r.steps as f64).collect();
    let s = summarize(&steps);
    out.stat_se("mean_steps", s.mean, s.stderr, "games");
    let hi = steps.iter().cloned().fold(1.0, f64::max);
    out.add_histogram(Table::histogram("steps_histogram", &Histogram::from_samples(0.0, hi + 1.0, bins, &steps)?));
    if game.halving {
        let fr: Vec<f64> = records.iter().map(|r| r.final_purse.fraction_left()).collect();
        let s = summarize(&fr);
        out.stat_se("mean_final_fraction_left", s.mean, s.stderr, "games");
    }
    Ok(())
}

fn ruin_solve(out: &mut RunOutput, stake: f64, points: usize) -> Result<(), CliError> {
    let units = (1.0 / stake).round();
    let mut t = Table::new("ruin_probability", &["x0", "probability", "abs_error"]);
    let mut worst = 0.0f64;
    for k in 0..points {
        let x0 = (k as f64 * units / points as f64).round() * stake;
        let p = ruin_probability(x0, stake)?;
        worst = worst.max((p - x0).abs());
        t.push(vec![x0.into(), p.into(), (p - x0).abs().into()]);
    }
    out.tables.push(t);
    out.stat("max_abs_error", worst, "ruin_probability");
    Ok(())
}

fn diffusion(out: &mut RunOutput, plan: &DiffusionPlan) -> Result<(), CliError> {
    let solve = |initial: &DensityProfile, dt_max: f64| -> Result<Vec<DensityProfile>, CliError> {
        let mut p = initial.clone();
        let mut snaps = Vec::new();
        for &t in &plan.checkpoints {
            let (_, dt) = uniform_steps(t - p.time(), dt_max);
            p = evolve_diffusion(&p, dt, t)?;
            snaps.push(p.clone());
        }
        Ok(snaps)
    };
    let snaps = solve(&plan.initial, plan.dt)?;
    let p0 = &plan.initial;
    let closed = p0.moment();
    let mut t = Table::new(
        "moments",
        &[
            "time",
            "mass",
            "mean",
            "moment",
            "moment_r1_closed_form",
            "interior_mass",
            "endpoint_mass",
            "left_boundary",
            "right_boundary",
        ],
    );
    for s in &snaps {
        let (b0, b1) = s.boundary_mass();
        let exact = if p0.r() == 1 { closed * (-2.0 * p0.lambda() * s.time()).exp() } else { f64::NAN };
        t.push(vec![
            s.time().into(),
            s.mass().into(),
            s.mean().into(),
            s.moment().into(),
            exact.into(),
            s.mass_in(0.25, 0.75).into(),
            (s.mass_in(0.0, 0.25) + s.mass_in(0.75, 1.0)).into(),
            b0.into(),
            b1.into(),
        ]);
    }
    out.tables.push(t);
    let last = snaps.last().expect("at least one checkpoint");
    let mut d = Table::new("density", &["x", "rho"]);
    for (i, r) in last.rho().iter().enumerate() {
        d.push(vec![last.node(i).into(), (*r).into()]);
    }
    out.tables.push(d);
    out.stat("final_mass", last.mass(), "moments");
    out.stat("final_mean", last.mean(), "moments");
    out.stat("final_moment", last.moment(), "moments");
    let interior = last.mass_in(0.25, 0.75);
    let ends = last.mass_in(0.0, 0.25) + last.mass_in(0.75, 1.0);
    out.stat("final_interior_mass", interior, "moments");
    out.stat("final_endpoint_mass", ends, "moments");

    if let Some(k) = plan.refine {
        let fine0 = DensityProfile::delta(p0.n_x() * k, p0.lambda(), p0.r(), p0.node(p0.rho().iter().position(|r| *r > 0.0).unwrap_or(0)))?;
        let fine = solve(&fine0, fine0.stability_bound())?;
        let mut r = Table::new("reference", &["time", "interior_mass", "endpoint_mass", "moment"]);
        for s in &fine {
            r.push(vec![
                s.time().into(),
                s.mass_in(0.25, 0.75).into(),
                (s.mass_in(0.0, 0.25) + s.mass_in(0.75, 1.0)).into(),
                s.moment().into(),
            ]);
        }
        let f = fine.last().expect("at least one checkpoint");
        out.tables.push(r);
        out.stat("reference_interior_rel_diff", (interior / f.mass_in(0.25, 0.75) - 1.0).abs(), "reference");
        out.stat(
            "reference_endpoint_rel_diff",
            (ends / (f.mass_in(0.0, 0.25) + f.mass_in(0.75, 1.0)) - 1.0).abs(),
            "reference",
        );
    }
    Ok(())
}

fn grw_pointer(
    out: &mut RunOutput,
    params: &GrwParams,
    model: &PointerModel,
    m: usize,
    bins: usize,
    seed: u64,
) -> Result<(), CliError> {
    let runs = try_run_streams(seed, m, |_, rng| simulate_pointer(model, params, rng))?;
    let mut t = Table::new("runs", &["trajectory", "collapse_time", "hit_center", "outcome", "ln_tail"]);
    for (i, r) in runs.iter().enumerate() {
        let o = if r.outcome == Branch::Left { "L" } else { "R" };
        t.push(vec![i.into(), r.collapse_time.into(), r.hit.center.into(), o.into(), r.state.ln_tail().into()]);
    }
    out.tables.push(t);
    let left = runs.iter().filter(|r| r.outcome == Branch::Left).count() as f64 / m as f64;
    out.stat_se("left_fraction", left, binomial_sigma(left, m), "runs");
    let times: Vec<f64> = runs.iter().map(|r| r.collapse_time).collect();
    let s = summarize(&times);
    let expect = mean_collapse_time(model.n, params.lambda);
    out.stat_se("mean_collapse_time", s.mean, s.stderr, "runs");
    out.stat("expected_collapse_time", expect, "runs");
    out.stat("min_ln_tail", runs.iter().map(|r| r.state.ln_tail()).fold(f64::INFINITY, f64::min), "runs");
    out.add_histogram(Table::histogram("collapse_time_histogram", &Histogram::from_samples(0.0, 5.0 * expect, bins, &times)?));
    Ok(())
}

fn grw_rate(out: &mut RunOutput, params: &GrwParams, grid: Grid1D, states: usize, seed: u64) -> Result<(), CliError> {
    let mut rng = RngStream::new(seed, 0);
    let mut t = Table::new("rates", &["state", "total_rate", "rel_error"]);
    let mut worst = 0.0f64;
    for k in 0..states {
        let amps = (0..grid.n_cells()).map(|_| Complex64::new(rng.standard_normal(), rng.standard_normal())).collect();
        let psi = WaveFunction::one_particle(grid, amps)?.normalize()?;
        let rate = total_hit_rate(&psi, params)?;
        let rel = (rate / params.lambda - 1.0).abs();
        worst = worst.max(rel);
        t.push(vec![k.into(), rate.into(), rel.into()]);
    }
    out.tables.push(t);
    out.stat("max_rel_error", worst, "rates");
    Ok(())
}

fn csl_cooked(out: &mut RunOutput, p: &CslCookedPlan, seed: u64) -> Result<(), CliError> {
    let trajs = try_run_streams(seed, p.trajectories, |_, rng| {
        evolve_two_state(p.c0, &p.p, p.dt, p.t_end, CslMode::Cooked(rng), Recording::every(p.record_every))
    })?;
    let m = trajs.len();
    let times = trajs[0].times.clone();
    let x0 = p.c0.fraction_left();
    let mut ens = Table::new("ensemble", &["time", "mean_x", "mean_x_se", "moment", "moment_se", "coherence_abs"]);
    let mut worst_z = 0.0f64;
    let mut coh = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let xs: Vec<f64> = trajs.iter().map(|tr| tr.states[k].fraction_left()).collect();
        let s = summarize(&xs);
        let mom = summarize(&xs.iter().map(|x| x * (1.0 - x)).collect::<Vec<_>>());
        let c = trajs.iter().map(|tr| tr.states[k].coherence()).sum::<Complex64>().norm() / m as f64;
        if k > 0 && s.stderr > 0.0 {
            worst_z = worst_z.max((s.mean - x0).abs() / s.stderr);
        }
        coh.push(c);
        ens.push(vec![t.into(), s.mean.into(), s.stderr.into(), mom.mean.into(), mom.stderr.into(), c.into()]);
    }
    out.tables.push(ens);

    let mut fin = Table::new("final", &["trajectory", "x", "min_ln_tail"]);
    let finals: Vec<f64> = trajs.iter().map(|tr| tr.last().fraction_left()).collect();
    for (i, tr) in trajs.iter().enumerate() {
        fin.push(vec![i.into(), finals[i].into(), tr.min_ln_tail().into()]);
    }
    out.tables.push(fin);

    let gamma = p.p.decoherence_rate();
    out.stat("gamma", gamma, "ensemble");
    let fit_upto = times.iter().position(|&t| t > 2.0 / gamma + 1e-9).unwrap_or(times.len());
    if fit_upto >= 3 && coh[0] > 0.0 {
        if let Ok(rate) = fit_exponential_rate(&times[..fit_upto], &coh[..fit_upto]) {
            out.stat("fitted_gamma", rate, "ensemble");
        }
    }
    out.stat("martingale_max_z", worst_z, "ensemble");
    let born = finals.iter().filter(|&&x| x > 0.5).count() as f64 / m as f64;
    out.stat_se("born_fraction_left", born, binomial_sigma(born, m), "final");
    out.stat("min_ln_tail", trajs.iter().map(|tr| tr.min_ln_tail()).fold(f64::INFINITY, f64::min), "final");
    out.add_histogram(Table::histogram("final_x_histogram", &Histogram::from_samples(0.0, 1.0, p.bins, &finals)?));
    Ok(())
}

fn csl_importance(out: &mut RunOutput, p: &CslImportancePlan, seed: u64) -> Result<(), CliError> {
    let r = importance_check(p.x0, &p.p, p.dt, p.t_end, p.trajectories, seed, p.opts)?;
    let mut t = Table::new("divergence", &["quantity", "weighted", "weighted_se", "cooked", "cooked_se", "z"]);
    t.push(vec!["mean_x".into(), r.weighted_mean.into(), r.weighted_mean_se.into(), r.cooked_mean.into(), r.cooked_mean_se.into(), r.mean_z().into()]);
    t.push(vec![
        "second_moment".into(),
        r.weighted_second.into(),
        r.weighted_second_se.into(),
        r.cooked_second.into(),
        r.cooked_second_se.into(),
        r.second_z().into(),
    ]);
    t.push(vec!["born_fraction".into(), r.weighted_born.into(), r.weighted_born_se.into(), r.cooked_born.into(), r.cooked_born_se.into(), r.born_z().into()]);
    out.tables.push(t);
    let mut s = Table::new("weights", &["quantity", "value"]);
    for (name, v) in [
        ("gamma_t", r.gamma_t),
        ("ess", r.ess),
        ("resamplings", r.resamplings as f64),
        ("norm_estimate", r.norm_estimate),
        ("norm_estimate_se", r.norm_estimate_se),
        ("ks_distance", r.ks_distance),
        ("ks_critical", r.ks_critical),
        ("min_ln_tail", r.min_ln_tail),
    ] {
        s.push(vec![name.into(), v.into()]);
    }
    out.tables.push(s);
    out.stat("mean_z", r.mean_z(), "divergence");
    out.stat("second_moment_z", r.second_z(), "divergence");
    out.stat_se("weighted_born_fraction", r.weighted_born, r.weighted_born_se, "divergence");
    out.stat("ess", r.ess, "weights");
    out.stat("ks_distance", r.ks_distance, "weights");
    out.stat("min_ln_tail", r.min_ln_tail, "weights");
    Ok(())
}

fn csl_field(out: &mut RunOutput, p: &CslFieldPlan, seed: u64) -> Result<(), CliError> {
    let n = p.psi.grid().n_cells();
    let runs = try_run_streams(seed, p.trajectories, |_, rng| {
        let tr = evolve_1d(&p.psi, &p.params, p.dt, p.t_end, CslMode::Cooked(rng), Recording::ends_only())?;
        let end = tr.last();
        Ok::<_, collapsim_core::Error>((end.weight_in(0..p.split), end.weight_in(p.split..n), p.psi.fidelity(end)?))
    })?;
    let mut t = Table::new("final", &["trajectory", "left_weight", "right_weight", "fidelity"]);
    for (i, r) in runs.iter().enumerate() {
        t.push(vec![i.into(), r.0.into(), r.1.into(), r.2.into()]);
    }
    out.tables.push(t);
    let m = runs.len();
    let left = runs.iter().filter(|r| r.0 > r.1).count() as f64 / m as f64;
    out.stat_se("left_fraction", left, binomial_sigma(left, m), "final");
    let fid = summarize(&runs.iter().map(|r| r.2).collect::<Vec<_>>());
    out.stat_se("mean_fidelity", fid.mean, fid.stderr, "final");
    Ok(())
}

fn stuff(out: &mut RunOutput, p: &StuffPlan) -> Result<(), CliError> {
    let r = stuff_report(&p.psi, &p.region, p.epsilon)?;
    let mut t = Table::new("stuff", &["n", "value", "objective"]);
    for (n, v) in r.values.iter().enumerate() {
        t.push(vec![n.into(), (*v).into(), if *v >= 1.0 - p.epsilon { "true" } else { "false" }.into()]);
    }
    out.tables.push(t);
    out.stat("objective_n", r.objective_n.map_or(-1.0, |n| n as f64), "stuff");
    out.stat("sum_of_values", r.values.iter().sum(), "stuff");
    if let Some(r_v) = p.r_v {
        let v = hydrogen_stuff_bound(r_v)?;
        let mut h = Table::new("hydrogen", &["r_v_cm", "log10_p_outside", "quoted_log10"]);
        h.push(vec![r_v.into(), v.into(), QUOTED_HYDROGEN_LOG10.into()]);
        out.tables.push(h);
        out.stat("hydrogen_log10_p_outside", v, "hydrogen");
    }
    Ok(())
}

fn flow(out: &mut RunOutput, p: &FlowPlan, seed: u64) -> Result<(), CliError> {
    let mut rng = RngStream::new(derive_seed(seed, 11), 0);
    let noise = sample_noise(p.noise, &mut rng, None)?;
    let r = flow_balance(&p.psi, &p.region, p.lambda, p.a, &noise, p.dt, p.t_end)?;
    let mut t = Table::new("flow", &["time", "stuff_1", "source", "current"]);
    for k in 0..r.times.len() {
        t.push(vec![r.times[k].into(), r.stuff_series[k].into(), r.source_series[k].into(), r.current_series[k].into()]);
    }
    out.tables.push(t);
    out.stat("residual", r.residual, "flow");
    out.stat("initial_source", r.source_series[0], "flow");
    if p.convergence {
        let c = flow_convergence(&p.psi, &p.region, p.lambda, p.a, &noise, p.dt, p.t_end)?;
        let mut ct = Table::new("convergence", &["dt", "residual"]);
        ct.push(vec![p.dt.into(), c.residual_dt.into()]);
        ct.push(vec![(0.5 * p.dt).into(), c.residual_half_dt.into()]);
        out.tables.push(ct);
        out.stat("residual_ratio", c.ratio, "convergence");
    }
    Ok(())
}

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::args::{Cli, ColorInputs, Command, MultiInputs, Opts, PairInputs, SourceInput};
use super::checkpoint::{icnn_to_bytes, write_atomic, Checkpoint};
use super::color::{transfer, ImageDistribution};
use super::config::RunConfig;
use super::distfile;
use super::report::{svg_plot, write_csv, write_json, write_trace, ReportRow};
use crate::bench::{evaluate, multi_problem, pair_problem, EvalReport, GroundTruthPair};
use crate::embedder::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::icnn::IcnnParams;
use crate::sampler::Sampler;
use crate::solvers::{RawSolver, SolverConfig, SolverKind, TraceRecord};
use crate::trainer::{
    ablate_embedding, finetune, predict, train_multi, train_pair, HotetModel, TrainConfig, TrainMode,
};

const DEFAULT_OUT: &str = "hotet-out";
/// Seed offset for the probe samples used to embed evaluation distributions.
const PROBE_SEED: u64 = 0x9e37_79b9;

struct Ctx {
    cfg: RunConfig,
    opts: Opts,
    out: PathBuf,
}

impl Ctx {
    fn new(opts: &Opts) -> Result<Self> {
        let mut cfg = RunConfig::resolve(opts.config.as_deref(), opts.seed)?;
        if let Some(s) = opts.solver {
            cfg.train.solver = s.into();
            cfg.multi.solver = s.into();
        }
        Ok(Self {
            cfg,
            opts: opts.clone(),
            out: opts.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        })
    }

    fn seed(&self) -> u64 {
        self.cfg.seed()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn checkpoint_out(&self) -> PathBuf {
        self.opts.checkpoint.clone().unwrap_or_else(|| self.path("model.ckpt"))
    }

    fn load_checkpoint(&self, verb: &str) -> Result<Checkpoint> {
        let path = self
            .opts
            .checkpoint
            .as_deref()
            .ok_or_else(|| Error::Config(format!("{verb} needs --checkpoint")))?;
        Checkpoint::load(path)
    }

    fn first_dim(&self, fallback: usize) -> usize {
        self.opts
            .dims
            .as_ref()
            .and_then(|d| d.first().copied())
            .unwrap_or(fallback)
    }

    fn multi_train_config(&self, ablated: bool) -> TrainConfig {
        TrainConfig {
            solver: self.cfg.multi.solver,
            mode: if ablated { TrainMode::Ablation } else { TrainMode::Multi },
            ..self.cfg.train.clone()
        }
    }

    fn embed_points(&self, ck: &Checkpoint) -> usize {
        ck.config
            .as_ref()
            .map_or(self.cfg.train.embed_points, |c| c.embed_points)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(&cli.opts)?;
    match &cli.command {
        Command::Benchmark => cmd_benchmark(&ctx),
        Command::TrainPair(i) => cmd_train_pair(&ctx, i),
        Command::TrainMulti(i) => cmd_train_multi(&ctx, i),
        Command::Predict(i) => cmd_predict(&ctx, i),
        Command::Finetune(i) => cmd_finetune(&ctx, i),
        Command::ColorTransfer(i) => cmd_color_transfer(&ctx, i),
        Command::Embed(i) => cmd_embed(&ctx, i),
        Command::Eval => cmd_eval(&ctx),
    }
}

fn probe(s: &dyn Sampler, n: usize, seed: u64) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::uniform(s.sample(&mut ChaCha8Rng::seed_from_u64(seed ^ PROBE_SEED), n))
}

/// Metrics of a pair-mode model on a generated pair.
pub fn eval_pair_model(
    model: &HotetModel,
    pair: &GroundTruthPair,
    points: usize,
    embed_points: usize,
    n_eval: usize,
    seed: u64,
) -> Result<EvalReport> {
    let mu = probe(&pair.source(), points, seed)?;
    let nu = probe(&pair.target(), points, seed.wrapping_add(1))?;
    let maps = model.pair_maps(&mu, &nu, embed_points)?;
    evaluate(&maps.forward, &maps.inverse, pair, n_eval, seed)
}

/// Per-pair metrics of zero-shot predictions from a multi-trained model.
pub fn eval_predictions(
    model: &HotetModel,
    pairs: &[GroundTruthPair],
    points: usize,
    embed_points: usize,
    n_eval: usize,
    seed: u64,
) -> Result<Vec<EvalReport>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let s = seed.wrapping_add(i as u64);
            let mu = probe(&p.source(), points, s)?;
            let maps = predict(model, &mu, embed_points)?;
            evaluate(&maps.forward, &maps.inverse, p, n_eval, s)
        })
        .collect()
}

pub fn mean_report(reports: &[EvalReport]) -> EvalReport {
    let n = reports.len().max(1) as f64;
    let avg = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    EvalReport {
        uvp_fwd: avg(|r| r.uvp_fwd),
        uvp_inv: avg(|r| r.uvp_inv),
        cs_fwd: avg(|r| r.cs_fwd),
        cs_inv: avg(|r| r.cs_inv),
        n_eval: reports.first().map_or(0, |r| r.n_eval),
        seed: reports.first().map_or(0, |r| r.seed),
        wall_time_s: reports.iter().map(|r| r.wall_time_s).sum(),
    }
}

fn print_rows(rows: &[ReportRow]) {
    println!(
        "{:>4} {:<10} {:<6} {:>9} {:>9} {:>7} {:>7} {:>9}",
        "dim", "method", "split", "uvp_fwd%", "uvp_inv%", "cs_fwd", "cs_inv", "train_s"
    );
    for r in rows {
        println!(
            "{:>4} {:<10} {:<6} {:>9.3} {:>9.3} {:>7.3} {:>7.3} {:>9.1}",
            r.dim, r.method, r.split, r.uvp_fwd, r.uvp_inv, r.cs_fwd, r.cs_inv, r.train_time_s
        );
    }
}

fn batch_for_dim(b: usize, d: usize) -> usize {
    if d >= 32 {
        b.min(256)
    } else {
        b
    }
}

#[derive(Serialize)]
struct DimReport<'a> {
    dim: usize,
    mmb: &'a EvalReport,
    hotet: &'a EvalReport,
}

fn cmd_benchmark(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let dims = ctx.opts.dims.clone().unwrap_or_else(|| cfg.benchmark.dims.clone());
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Config("--dims must list positive dimensions".into()));
    }
    let seed = ctx.seed();
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for &d in &dims {
        let pair = pair_problem(d, seed)?;
        let spec = cfg.model.spec(d)?;
        let batch = batch_for_dim(cfg.train.batch_size, d);

        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = IcnnParams::random(&spec.icnn, &mut rng, 0.1);
        let g = IcnnParams::random(&spec.icnn, &mut rng, 0.1);
        let solver_cfg = SolverConfig {
            kind: SolverKind::Mmb,
            batch_size: batch,
            inner_iters: cfg.train.inner_iters,
            lr: cfg.train.lr,
        };
        let mut raw = RawSolver::new(f, g, solver_cfg)?;
        let raw_trace = raw.train(
            &pair.source(),
            &pair.target(),
            &mut rng,
            cfg.benchmark.baseline_iterations,
        )?;
        let raw_time = start.elapsed().as_secs_f64();
        let raw_report = evaluate(&raw.f, &raw.g, &pair, cfg.benchmark.n_eval, seed)?;

        let start = Instant::now();
        let tcfg = TrainConfig {
            batch_size: batch,
            mode: TrainMode::Pair,
            ..cfg.train.clone()
        };
        let model = HotetModel::init(&spec, seed)?;
        let (model, trace) = train_pair(model, &pair.source(), &pair.target(), &tcfg)?;
        let hotet_time = start.elapsed().as_secs_f64();
        let hotet_report = eval_pair_model(
            &model,
            &pair,
            cfg.multi.points,
            tcfg.embed_points,
            cfg.benchmark.n_eval,
            seed,
        )?;

        write_json(
            &ctx.path(&format!("report_d{d}.json")),
            &DimReport {
                dim: d,
                mmb: &raw_report,
                hotet: &hotet_report,
            },
        )?;
        write_trace(&ctx.path(&format!("trace_d{d}_mmb.jsonl")), &raw_trace)?;
        write_trace(&ctx.path(&format!("trace_d{d}_hotet.jsonl")), &trace)?;
        rows.push(ReportRow::new(d, "mmb", "pair", &raw_report, raw_time));
        rows.push(ReportRow::new(d, "hotet", "pair", &hotet_report, hotet_time));
        series.push((format!("mmb d={d}"), raw_trace));
        series.push((format!("hotet d={d}"), trace));
    }
    write_csv(&ctx.path("summary.csv"), &rows)?;
    if cfg.benchmark.plot {
        write_atomic(&ctx.path("loss.svg"), svg_plot(&series).as_bytes())?;
    }
    print_rows(&rows);
    Ok(())
}

fn save_model(ctx: &Ctx, model: HotetModel, cfg: &TrainConfig, trace: &[TraceRecord]) -> Result<PathBuf> {
    let path = ctx.checkpoint_out();
    Checkpoint {
        model,
        config: Some(cfg.clone()),
        seed: ctx.seed(),
    }
    .save(&path)?;
    write_trace(&ctx.path("trace.jsonl"), trace)?;
    println!("checkpoint written to {}", path.display());
    Ok(path)
}

fn cmd_train_pair(ctx: &Ctx, inputs: &PairInputs) -> Result<()> {
    let cfg = &ctx.cfg;
    let seed = ctx.seed();
    let tcfg = TrainConfig {
        mode: TrainMode::Pair,
        ..cfg.train.clone()
    };
    if let (Some(s), Some(t)) = (&inputs.source, &inputs.target) {
        let mu = distfile::read(s)?;
        let nu = distfile::read(t)?;
        let model = HotetModel::init(&cfg.model.spec(mu.dim())?, seed)?;
        let (model, trace) = train_pair(model, &mu, &nu, &tcfg)?;
        save_model(ctx, model, &tcfg, &trace)?;
        return Ok(());
    }
    let d = ctx.first_dim(2);
    let pair = pair_problem(d, seed)?;
    let start = Instant::now();
    let model = HotetModel::init(&cfg.model.spec(d)?, seed)?;
    let (model, trace) = train_pair(model, &pair.source(), &pair.target(), &tcfg)?;
    let secs = start.elapsed().as_secs_f64();
    let report = eval_pair_model(
        &model,
        &pair,
        cfg.multi.points,
        tcfg.embed_points,
        cfg.benchmark.n_eval,
        seed,
    )?;
    save_model(ctx, model, &tcfg, &trace)?;
    let rows = [ReportRow::new(d, "hotet", "pair", &report, secs)];
    write_json(&ctx.path("eval.json"), &report)?;
    write_csv(&ctx.path("eval.csv"), &rows)?;
    print_rows(&rows);
    Ok(())
}

fn multi_rows(
    ctx: &Ctx,
    model: &HotetModel,
    train: &[GroundTruthPair],
    test: &[GroundTruthPair],
    embed_points: usize,
    secs: f64,
) -> Result<Vec<ReportRow>> {
    let cfg = &ctx.cfg;
    let d = model.spec().dim();
    let method = if model.is_ablated() { "no-embed" } else { "hotet" };
    let mut rows = Vec::new();
    for (split, pairs) in [("train", train), ("test", test)] {
        if pairs.is_empty() {
            continue;
        }
        let reports = eval_predictions(
            model,
            pairs,
            cfg.multi.points,
            embed_points,
            cfg.benchmark.n_eval,
            ctx.seed(),
        )?;
        rows.push(ReportRow::new(d, method, split, &mean_report(&reports), secs));
    }
    Ok(rows)
}

fn cmd_train_multi(ctx: &Ctx, inputs: &MultiInputs) -> Result<()> {
    let cfg = &ctx.cfg;
    let seed = ctx.seed();
    let tcfg = ctx.multi_train_config(ctx.opts.ablate_embedding);
    let init = |d: usize| -> Result<HotetModel> {
        let m = HotetModel::init(&cfg.model.spec(d)?, seed)?;
        Ok(if ctx.opts.ablate_embedding {
            ablate_embedding(&m, seed)
        } else {
            m
        })
    };
    if !inputs.source.is_empty() {
        let target = inputs
            .target
            .as_ref()
            .ok_or_else(|| Error::Config("--target is required with --source".into()))?;
        let sources = inputs
            .source
            .iter()
            .map(|p| distfile::read(p))
            .collect::<Result<Vec<_>>>()?;
        let nu = distfile::read(target)?;
        let refs: Vec<&dyn Sampler> = sources.iter().map(|s| s as &dyn Sampler).collect();
        let (model, trace) = train_multi(init(nu.dim())?, &refs, &nu, &tcfg)?;
        save_model(ctx, model, &tcfg, &trace)?;
        return Ok(());
    }
    let d = ctx.first_dim(cfg.multi.dim);
    let problem = multi_problem(d, cfg.multi.n_train, cfg.multi.n_test, seed)?;
    let sides: Vec<_> = problem.train.iter().map(|p| p.source()).collect();
    let refs: Vec<&dyn Sampler> = sides.iter().map(|s| s as &dyn Sampler).collect();
    let start = Instant::now();
    let (model, trace) = train_multi(init(d)?, &refs, &problem.reference, &tcfg)?;
    let secs = start.elapsed().as_secs_f64();
    let rows = multi_rows(ctx, &model, &problem.train, &problem.test, tcfg.embed_points, secs)?;
    save_model(ctx, model, &tcfg, &trace)?;
    write_csv(&ctx.path("eval.csv"), &rows)?;
    print_rows(&rows);
    Ok(())
}

fn write_maps(ctx: &Ctx, forward: &IcnnParams, inverse: &IcnnParams) -> Result<()> {
    write_atomic(&ctx.path("forward.icnn"), &icnn_to_bytes(forward, ctx.seed())?)?;
    write_atomic(&ctx.path("inverse.icnn"), &icnn_to_bytes(inverse, ctx.seed())?)
}

fn cmd_predict(ctx: &Ctx, input: &SourceInput) -> Result<()> {
    let ck = ctx.load_checkpoint("predict")?;
    let k = ctx.embed_points(&ck);
    if let Some(src) = &input.source {
        let mu = distfile::read(src)?;
        let maps = predict(&ck.model, &mu, k)?;
        write_maps(ctx, &maps.forward, &maps.inverse)?;
        let pushed = EmpiricalDistribution::new(maps.forward.transport_map(mu.points())?, mu.weights().to_vec())?;
        distfile::write(&ctx.path("pushed.txt"), &pushed)?;
        println!("maps written to {}", ctx.out.display());
        return Ok(());
    }
    if !matches!(ck.model.trained, Some(TrainMode::Multi | TrainMode::Ablation)) {
        return Err(Error::Config("prediction needs a model trained in multi mode".into()));
    }
    let cfg = &ctx.cfg;
    let d = ck.model.spec().dim();
    let problem = multi_problem(d, cfg.multi.n_train, cfg.multi.n_test, ck.seed)?;
    let rows = multi_rows(ctx, &ck.model, &[], &problem.test, k, 0.0)?;
    write_csv(&ctx.path("predict.csv"), &rows)?;
    print_rows(&rows);
    Ok(())
}

fn cmd_finetune(ctx: &Ctx, inputs: &PairInputs) -> Result<()> {
    let ck = ctx.load_checkpoint("finetune")?;
    let steps = ctx.opts.finetune.unwrap_or(ctx.cfg.color.finetune_steps);
    let tcfg = TrainConfig {
        seed: ctx.seed(),
        ..ck.config.clone().unwrap_or_else(|| ctx.cfg.train.clone())
    };
    let (model, trace) = if let (Some(s), Some(t)) = (&inputs.source, &inputs.target) {
        let mu = distfile::read(s)?;
        let nu = distfile::read(t)?;
        finetune(ck.model, &mu, &nu, steps, &tcfg)?
    } else {
        let cfg = &ctx.cfg;
        let d = ck.model.spec().dim();
        let problem = multi_problem(d, cfg.multi.n_train, cfg.multi.n_test.max(1), ck.seed)?;
        let pair = problem.test.first().expect("at least one test pair");
        let k = tcfg.embed_points;
        let before = eval_predictions(
            &ck.model,
            std::slice::from_ref(pair),
            cfg.multi.points,
            k,
            cfg.benchmark.n_eval,
            ck.seed,
        )?;
        let (model, trace) = finetune(ck.model, &pair.source(), &problem.reference, steps, &tcfg)?;
        let after = eval_predictions(
            &model,
            std::slice::from_ref(pair),
            cfg.multi.points,
            k,
            cfg.benchmark.n_eval,
            ck.seed,
        )?;
        let rows = [
            ReportRow::new(d, "zero-shot", "test", &before[0], 0.0),
            ReportRow::new(d, "finetuned", "test", &after[0], 0.0),
        ];
        write_csv(&ctx.path("finetune.csv"), &rows)?;
        print_rows(&rows);
        (model, trace)
    };
    let path = ctx.path("finetuned.ckpt");
    Checkpoint {
        model,
        config: Some(tcfg),
        seed: ck.seed,
    }
    .save(&path)?;
    write_trace(&ctx.path("finetune_trace.jsonl"), &trace)?;
    println!("{steps} warm-up steps; checkpoint written to {}", path.display());
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

fn cmd_color_transfer(ctx: &Ctx, inputs: &ColorInputs) -> Result<()> {
    let cfg = &ctx.cfg;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
    let target = ImageDistribution::load(&inputs.target, cfg.color.subsample, &mut rng)?;
    let sources = inputs
        .source
        .iter()
        .map(|p| ImageDistribution::load(p, cfg.color.subsample, &mut rng))
        .collect::<Result<Vec<_>>>()?;

    let (models, k): (Vec<HotetModel>, usize) = if let Some(steps) = ctx.opts.finetune {
        let ck = ctx.load_checkpoint("color-transfer --finetune")?;
        let tcfg = TrainConfig {
            seed: ctx.seed(),
            ..ck.config.clone().unwrap_or_else(|| cfg.train.clone())
        };
        let models = sources
            .iter()
            .map(|s| Ok(finetune(ck.model.clone(), &s.samples, &target.samples, steps, &tcfg)?.0))
            .collect::<Result<Vec<_>>>()?;
        (models, tcfg.embed_points)
    } else {
        let spec = cfg.model.spec(3)?;
        let mut model = HotetModel::init(&spec, ctx.seed())?;
        let (tcfg, trained) = if sources.len() == 1 {
            let tcfg = TrainConfig {
                mode: TrainMode::Pair,
                ..cfg.train.clone()
            };
            let (m, trace) = train_pair(model, &sources[0].samples, &target.samples, &tcfg)?;
            (tcfg, (m, trace))
        } else {
            if ctx.opts.ablate_embedding {
                model = ablate_embedding(&model, ctx.seed());
            }
            let tcfg = ctx.multi_train_config(ctx.opts.ablate_embedding);
            let refs: Vec<&dyn Sampler> = sources.iter().map(|s| &s.samples as &dyn Sampler).collect();
            let r = train_multi(model, &refs, &target.samples, &tcfg)?;
            (tcfg, r)
        };
        let (model, trace) = trained;
        save_model(ctx, model.clone(), &tcfg, &trace)?;
        (vec![model; sources.len()], tcfg.embed_points)
    };

    let want = target.image.mean();
    for (src, model) in sources.iter().zip(&models) {
        let map = model.forward_potential(&src.samples, k)?;
        let out = transfer(&map, &src.image)?;
        let path = ctx.path(&format!("{}_to_{}.png", stem(&src.source), stem(&inputs.target)));
        out.save(&path)?;
        let got = out.mean();
        println!(
            "{} -> {}: mean rgb ({:.3}, {:.3}, {:.3}), target ({:.3}, {:.3}, {:.3})",
            src.source.display(),
            path.display(),
            got[0],
            got[1],
            got[2],
            want[0],
            want[1],
            want[2]
        );
    }
    Ok(())
}

/// Context vector as one line of floats.
pub fn format_context(ctx: &crate::diffcore::Tensor) -> String {
    let vals: Vec<String> = ctx.data().iter().map(|v| format!("{v:?}")).collect();
    vals.join(" ") + "\n"
}

fn cmd_embed(ctx: &Ctx, input: &SourceInput) -> Result<()> {
    let ck = ctx.load_checkpoint("embed")?;
    let src = input
        .source
        .as_ref()
        .ok_or_else(|| Error::Config("embed needs --source".into()))?;
    let dist = distfile::read(src)?;
    let z = ck.model.context(&dist, ctx.embed_points(&ck))?;
    let path = ctx.path("context.txt");
    write_atomic(&path, format_context(&z).as_bytes())?;
    println!("{} floats written to {}", z.len(), path.display());
    Ok(())
}

fn cmd_eval(ctx: &Ctx) -> Result<()> {
    let ck = ctx.load_checkpoint("eval")?;
    let cfg = &ctx.cfg;
    let d = ck.model.spec().dim();
    let k = ctx.embed_points(&ck);
    let seed = ctx.opts.seed.unwrap_or(ck.seed);
    let rows = match ck.model.trained {
        Some(TrainMode::Pair) => {
            let pair = pair_problem(d, seed)?;
            let r = eval_pair_model(&ck.model, &pair, cfg.multi.points, k, cfg.benchmark.n_eval, seed)?;
            vec![ReportRow::new(d, "hotet", "pair", &r, 0.0)]
        }
        Some(_) => {
            let problem = multi_problem(d, cfg.multi.n_train, cfg.multi.n_test, seed)?;
            multi_rows(ctx, &ck.model, &problem.train, &problem.test, k, 0.0)?
        }
        None => return Err(Error::Config("checkpoint holds an untrained model".into())),
    };
    write_csv(&ctx.path("eval.csv"), &rows)?;
    print_rows(&rows);
    Ok(())
}

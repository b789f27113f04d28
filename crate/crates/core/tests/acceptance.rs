//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! ```text
//! cargo test --test acceptance
//! cargo test --test acceptance -- 3 11     # a subset
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use hotet::bench::{
    discrete_ot_oracle, gaussian_ot_map, l2_uvp, matching_cost, multi_problem, pair_problem, squared_distances,
    Gaussian, GaussianMixture, GroundTruthPair, PointMap, N_EVAL,
};
use hotet::cli::{distfile, eval_pair_model, transfer, Checkpoint, ImageDistribution, RgbImage};
use hotet::diffcore::{Tape, Tensor, Var};
use hotet::embedder::{ContextVector, EmpiricalDistribution, TransformerParams, TransformerSpec};
use hotet::hypernet::{generate, HypernetParams, HypernetSpec};
use hotet::icnn::{Icnn, IcnnParams, IcnnSpec};
use hotet::params::{leaves, leaves_mut, vars};
use hotet::sampler::Sampler;
use hotet::solvers::{
    conjugate_argmax, dual_objective_estimate, mmb_forward_loss, mmb_loss, mmv2_inner_loss, mmv2_outer_loss, RawSolver,
    SolverConfig, SolverKind,
};
use hotet::trainer::{
    ablate_embedding, context_of, finetune, predict, train_multi, train_pair, Hotet, HotetModel, ModelSpec, TrainConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria = [
        Criterion {
            id: 1,
            name: "gradient suite",
            budget: Duration::from_secs(60),
            run: gradients,
        },
        Criterion {
            id: 2,
            name: "convexity and monotonicity",
            budget: Duration::from_secs(60),
            run: convexity,
        },
        Criterion {
            id: 3,
            name: "embedding invariance",
            budget: Duration::from_secs(60),
            run: invariance,
        },
        Criterion {
            id: 4,
            name: "oracle equivalence",
            budget: Duration::from_secs(120),
            run: oracles,
        },
        Criterion {
            id: 5,
            name: "gaussian closed form",
            budget: Duration::from_secs(600),
            run: gaussian,
        },
        Criterion {
            id: 6,
            name: "pair mode d=2",
            budget: Duration::from_secs(900),
            run: pair_mode,
        },
        Criterion {
            id: 7,
            name: "prediction generalization",
            budget: Duration::from_secs(1800),
            run: generalization,
        },
        Criterion {
            id: 8,
            name: "ablation direction",
            budget: Duration::from_secs(1800),
            run: ablation,
        },
        Criterion {
            id: 9,
            name: "near-identity initialization",
            budget: Duration::from_secs(60),
            run: near_identity,
        },
        Criterion {
            id: 10,
            name: "color transfer",
            budget: Duration::from_secs(900),
            run: color,
        },
        Criterion {
            id: 11,
            name: "determinism and persistence",
            budget: Duration::from_secs(60),
            run: determinism,
        },
    ];
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over the time budget")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {:2} {:<28} {}  {detail}  [{:.1}s / {}s]",
            c.id,
            c.name,
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| normal(rng)).collect()).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

// ---------------------------------------------------------------- criterion 1

type Op = Box<dyn for<'t> Fn(&[Var<'t>]) -> Var<'t>>;

fn op<F: for<'t> Fn(&[Var<'t>]) -> Var<'t> + 'static>(f: F) -> Op {
    Box::new(f)
}

struct Case {
    inputs: Vec<Tensor>,
    op: Op,
}

fn contracted<'t>(tape: &'t Tape, op: &Op, xs: &[Var<'t>], r: &Tensor) -> Var<'t> {
    (op(xs) * tape.constant(r.clone())).sum()
}

/// First- and second-order relative errors against central differences.
fn primitive_errors(case: &Case, rng: &mut ChaCha8Rng) -> (f64, f64) {
    const H: f64 = 1e-5;
    let tape = Tape::new();
    let xs: Vec<Var> = case.inputs.iter().map(|t| tape.param(t.clone())).collect();
    let shape = (case.op)(&xs).shape();
    let r = random_tensor(rng, shape[0], shape[1]);
    let r2: Vec<Tensor> = case
        .inputs
        .iter()
        .map(|t| random_tensor(rng, t.rows(), t.cols()))
        .collect();

    let first = |inputs: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let xs: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        contracted(&tape, &case.op, &xs, &r).item()
    };
    let second = |tape: &Tape, inputs: &[Tensor]| -> (f64, Vec<Tensor>, Vec<Tensor>) {
        let xs: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let s = contracted(tape, &case.op, &xs, &r);
        let g = tape.grad(s, &xs).unwrap();
        let mut s2 = tape.scalar(0.0);
        for (gk, rk) in g.iter().zip(&r2) {
            s2 = s2 + (*gk * tape.constant(rk.clone())).sum();
        }
        let h = tape.grad(s2, &xs).unwrap();
        (
            s2.item(),
            g.iter().map(|v| (*v.value()).clone()).collect(),
            h.iter().map(|v| (*v.value()).clone()).collect(),
        )
    };
    let tape = Tape::new();
    let (_, grads, hvps) = second(&tape, &case.inputs);

    let (mut a1, mut n1, mut a2, mut n2) = (vec![], vec![], vec![], vec![]);
    for k in 0..case.inputs.len() {
        for e in 0..case.inputs[k].len() {
            let mut plus = case.inputs.clone();
            let mut minus = case.inputs.clone();
            plus[k].data_mut()[e] += H;
            minus[k].data_mut()[e] -= H;
            a1.push(grads[k].data()[e]);
            n1.push((first(&plus) - first(&minus)) / (2.0 * H));
            let (sp, ..) = second(&Tape::new(), &plus);
            let (sm, ..) = second(&Tape::new(), &minus);
            a2.push(hvps[k].data()[e]);
            n2.push((sp - sm) / (2.0 * H));
        }
    }
    (rel_err(&a1, &n1), rel_err(&a2, &n2))
}

/// Entries pushed at least `m` away from zero.
fn away_from_zero(t: Tensor, m: f64) -> Tensor {
    t.map(|v| if v.abs() < m { m.copysign(v) } else { v })
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..=5), rng.random_range(1..=5))
}

fn primitive_cases() -> Vec<(&'static str, fn(&mut ChaCha8Rng) -> Case)> {
    vec![
        ("add", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c), random_tensor(rng, r, c)],
                op: op(|v| v[0] + v[1]),
            }
        }),
        ("add broadcast row", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c), random_tensor(rng, 1, c)],
                op: op(|v| v[0] + v[1]),
            }
        }),
        ("sub", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c), random_tensor(rng, r, c)],
                op: op(|v| v[0] - v[1]),
            }
        }),
        ("sub broadcast column", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, 1), random_tensor(rng, r, c)],
                op: op(|v| v[0] - v[1]),
            }
        }),
        ("mul", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c), random_tensor(rng, r, c)],
                op: op(|v| v[0] * v[1]),
            }
        }),
        ("mul broadcast scalar", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c), random_tensor(rng, 1, 1)],
                op: op(|v| v[0] * v[1]),
            }
        }),
        ("neg", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(|v| -v[0]),
            }
        }),
        ("scale", |rng| {
            let (r, c) = dims(rng);
            let k = normal(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(move |v| v[0].scale(k)),
            }
        }),
        ("add_scalar", |rng| {
            let (r, c) = dims(rng);
            let k = normal(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(move |v| v[0].add_scalar(k) * v[0]),
            }
        }),
        ("matmul", |rng| {
            let (r, c) = dims(rng);
            let k = rng.random_range(1..=5);
            Case {
                inputs: vec![random_tensor(rng, r, k), random_tensor(rng, k, c)],
                op: op(|v| v[0].matmul(v[1])),
            }
        }),
        ("matmul_t", |rng| {
            let (r, c) = dims(rng);
            let k = rng.random_range(1..=5);
            let (ta, tb) = (rng.random::<bool>(), rng.random::<bool>());
            let a = if ta {
                random_tensor(rng, k, r)
            } else {
                random_tensor(rng, r, k)
            };
            let b = if tb {
                random_tensor(rng, c, k)
            } else {
                random_tensor(rng, k, c)
            };
            Case {
                inputs: vec![a, b],
                op: op(move |v| v[0].matmul_t(v[1], ta, tb)),
            }
        }),
        ("exp", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(|v| v[0].exp()),
            }
        }),
        ("ln", |rng| {
            let (r, c) = dims(rng);
            let x = random_tensor(rng, r, c).map(|v| v.abs() + 0.5);
            Case {
                inputs: vec![x],
                op: op(|v| v[0].ln()),
            }
        }),
        ("powf", |rng| {
            let (r, c) = dims(rng);
            let k = [-1.0, -0.5, 0.5, 1.5, 2.0, 3.0][rng.random_range(0..6)];
            let x = random_tensor(rng, r, c).map(|v| v.abs() + 0.5);
            Case {
                inputs: vec![x],
                op: op(move |v| v[0].powf(k)),
            }
        }),
        ("softplus", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c).map(|v| 3.0 * v)],
                op: op(|v| v[0].softplus()),
            }
        }),
        ("sigmoid", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c).map(|v| 3.0 * v)],
                op: op(|v| v[0].sigmoid()),
            }
        }),
        ("relu", |rng| {
            let (r, c) = dims(rng);
            let x = away_from_zero(random_tensor(rng, r, c), 1e-2);
            Case {
                inputs: vec![x],
                op: op(|v| v[0].relu() * v[0]),
            }
        }),
        ("step", |rng| {
            let (r, c) = dims(rng);
            let x = away_from_zero(random_tensor(rng, r, c), 1e-2);
            Case {
                inputs: vec![x],
                op: op(|v| v[0].step() * v[0]),
            }
        }),
        ("sum", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(|v| (v[0] * v[0]).sum()),
            }
        }),
        ("mean", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(|v| (v[0] * v[0]).mean()),
            }
        }),
        ("sum_rows", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(|v| (v[0] * v[0]).sum_rows()),
            }
        }),
        ("sum_cols", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(|v| (v[0] * v[0]).sum_cols()),
            }
        }),
        ("sum_to", |rng| {
            let (r, c) = dims(rng);
            let target = if rng.random::<bool>() { [1, c] } else { [r, 1] };
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(move |v| (v[0] * v[0]).sum_to(target)),
            }
        }),
        ("broadcast_to", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, 1, c)],
                op: op(move |v| (v[0] * v[0]).broadcast_to([r, c])),
            }
        }),
        ("gather_rows", |rng| {
            let (r, c) = dims(rng);
            let idx: Vec<usize> = (0..rng.random_range(1..=8)).map(|_| rng.random_range(0..r)).collect();
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(move |v| (v[0] * v[0]).gather_rows(&idx)),
            }
        }),
        ("scatter_rows", |rng| {
            let (r, c) = dims(rng);
            let rows = r + rng.random_range(0..4);
            let idx: Vec<usize> = (0..r).map(|_| rng.random_range(0..rows)).collect();
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(move |v| (v[0] * v[0]).scatter_rows(&idx, rows)),
            }
        }),
        ("slice_cols", |rng| {
            let (r, c) = dims(rng);
            let start = rng.random_range(0..c);
            let len = rng.random_range(1..=c - start);
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(move |v| (v[0] * v[0]).slice_cols(start, len)),
            }
        }),
        ("pad_cols", |rng| {
            let (r, c) = dims(rng);
            let start = rng.random_range(0..3);
            let total = c + start + rng.random_range(0..3);
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(move |v| (v[0] * v[0]).pad_cols(start, total)),
            }
        }),
        ("reshape", |rng| {
            let (r, c) = dims(rng);
            Case {
                inputs: vec![random_tensor(rng, r, c)],
                op: op(move |v| (v[0] * v[0]).reshape(c, r)),
            }
        }),
    ]
}

fn flat(ts: &[&Tensor]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().to_vec()).collect()
}

/// Relative error of the gradient of `loss` in the parameters of the
/// potentials selected by `wrt` against central differences of its value.
fn pair_param_errors<F>(f: &IcnnParams, g: &IcnnParams, wrt: [bool; 2], loss: F) -> f64
where
    F: for<'t> Fn(&Icnn<Var<'t>>, &Icnn<Var<'t>>) -> Var<'t>,
{
    const H: f64 = 1e-6;
    let tape = Tape::new();
    let bind = |p: &IcnnParams, trained: bool| {
        if trained {
            p.bind_params(&tape)
        } else {
            p.bind_constant(&tape)
        }
    };
    let (fb, gb) = (bind(f, wrt[0]), bind(g, wrt[1]));
    let mut xs = Vec::new();
    for (b, on) in [(&fb, wrt[0]), (&gb, wrt[1])] {
        if on {
            xs.extend(vars(b));
        }
    }
    let grads = tape.grad(loss(&fb, &gb), &xs).unwrap();
    let auto: Vec<f64> = grads.iter().flat_map(|v| v.value().data().to_vec()).collect();
    let value = |f: &IcnnParams, g: &IcnnParams| {
        let tape = Tape::new();
        loss(&f.bind_constant(&tape), &g.bind_constant(&tape)).item()
    };
    let mut numeric = Vec::with_capacity(auto.len());
    for which in (0..2).filter(|&w| wrt[w]) {
        let n = flat(&leaves(if which == 0 { f } else { g })).len();
        for e in 0..n {
            let shifted = |delta: f64| {
                let (mut f2, mut g2) = (f.clone(), g.clone());
                let target = if which == 0 { &mut f2 } else { &mut g2 };
                *flat_entry(target, e) += delta;
                value(&f2, &g2)
            };
            numeric.push((shifted(H) - shifted(-H)) / (2.0 * H));
        }
    }
    rel_err(&auto, &numeric)
}

fn flat_entry<P: hotet::params::ParamTree<Tensor>>(p: &mut P, mut e: usize) -> &mut f64 {
    for t in leaves_mut(p) {
        if e < t.len() {
            return &mut t.data_mut()[e];
        }
        e -= t.len();
    }
    panic!("entry out of range")
}

/// Like [`pair_param_errors`] for every parameter of a whole model.
fn model_param_errors<F>(model: &HotetModel, loss: F) -> f64
where
    F: for<'t> Fn(&Hotet<Var<'t>>) -> Var<'t>,
{
    const H: f64 = 1e-6;
    let tape = Tape::new();
    let bound = model.bind_params(&tape);
    let grads = tape.grad(loss(&bound), &vars(&bound)).unwrap();
    let auto: Vec<f64> = grads.iter().flat_map(|v| v.value().data().to_vec()).collect();
    let numeric: Vec<f64> = (0..auto.len())
        .map(|i| {
            let shifted = |delta: f64| {
                let mut m = model.clone();
                *flat_entry(&mut m, i) += delta;
                let tape = Tape::new();
                loss(&m.bind_constant(&tape)).item()
            };
            (shifted(H) - shifted(-H)) / (2.0 * H)
        })
        .collect();
    rel_err(&auto, &numeric)
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: (f64, &str) = (0.0, "");
    let mut checks = 0;
    for (name, gen) in primitive_cases() {
        for _ in 0..100 {
            let case = gen(&mut rng);
            let (e1, e2) = primitive_errors(&case, &mut rng);
            checks += 1;
            for e in [e1, e2] {
                if !(e <= worst.0) {
                    worst = (e, name);
                }
            }
        }
    }

    let mut losses = [
        ("mmb", 0.0),
        ("mmv2 inner", 0.0),
        ("mmv2 outer", 0.0),
        ("embed+hypernet", 0.0),
    ];
    for trial in 0..100 {
        let d = rng.random_range(1..=4);
        let b = rng.random_range(2..=10);
        let spec = IcnnSpec::new(d, vec![rng.random_range(2..=6), rng.random_range(2..=6)]).unwrap();
        let f = IcnnParams::random(&spec, &mut rng, 1.0);
        let g = IcnnParams::random(&spec, &mut rng, 1.0);
        let x = random_tensor(&mut rng, b, d);
        let y = random_tensor(&mut rng, b, d).map(|v| 1.5 * v + 0.5);

        let e = pair_param_errors(&f, &g, [true, true], |f, g| mmb_loss(f, g, &x, &y).unwrap());
        losses[0].1 = f64::max(losses[0].1, e);
        let e = pair_param_errors(&f, &g, [false, true], |f, g| mmv2_inner_loss(g, f, &y).unwrap());
        losses[1].1 = f64::max(losses[1].1, e);
        let e = pair_param_errors(&f, &g, [true, false], |f, g| mmv2_outer_loss(f, g, &x, &y).unwrap());
        losses[2].1 = f64::max(losses[2].1, e);

        let mspec = ModelSpec {
            icnn: spec.clone(),
            transformer: TransformerSpec {
                input_dim: d,
                blocks: 2,
                heads: 2,
                head_dim: 2,
                ffn_hidden: 4,
                ctx_dim: 3,
            },
            hyper_hidden: vec![4],
            init_variance: 0.5,
        };
        let mut model = HotetModel::init(&mspec, trial).unwrap();
        for t in leaves_mut(&mut model) {
            t.data_mut().iter_mut().for_each(|v| *v += 0.1 * normal(&mut rng));
        }
        let n_pts = rng.random_range(1..=6);
        let pts = random_tensor(&mut rng, n_pts, d);
        let w: Vec<f64> = (0..pts.rows()).map(|_| rng.random_range(0.1..1.0)).collect();
        let e = model_param_errors(&model, |m| {
            let z = context_of(m, &pts, &w).unwrap();
            let f = generate(&m.hyper_fwd, z);
            let g = g.bind_constant(z.tape());
            mmb_forward_loss(&f, &x, &y).unwrap() + mmv2_outer_loss(&f, &g, &x, &y).unwrap()
        });
        losses[3].1 = f64::max(losses[3].1, e);
    }
    let loss_worst = losses.iter().fold(0.0f64, |a, (_, e)| a.max(*e));
    let ok = worst.0 < 1e-5 && loss_worst < 1e-5;
    let detail = format!(
        "{checks} primitive trials, worst first/second-order rel err {:.1e} ({}); losses: {}",
        worst.0,
        worst.1,
        losses
            .iter()
            .map(|(n, e)| format!("{n} {e:.1e}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    check(ok, detail)
}

// ---------------------------------------------------------------- criterion 2

fn rows_mid(x: &Tensor, y: &Tensor) -> Tensor {
    Tensor::new(
        x.rows(),
        x.cols(),
        x.data().iter().zip(y.data()).map(|(a, b)| 0.5 * (a + b)).collect(),
    )
    .unwrap()
}

fn convexity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut conv, mut mono) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in 0..20 {
        let d = [2, 3, 8, 16][k % 4];
        let spec = HypernetSpec {
            init_variance: if k < 10 { 0.1 } else { 1.0 },
            ..HypernetSpec::new(16, IcnnSpec::for_dim(d))
        };
        let hyper = HypernetParams::init(&spec, &mut rng).map_err(|e| e.to_string())?;
        let z = ContextVector((0..16).map(|_| 2.0 * normal(&mut rng)).collect());
        let f = hyper.generate(&z).map_err(|e| e.to_string())?;
        f.validate().map_err(|e| e.to_string())?;
        let x = random_tensor(&mut rng, 1000, d).map(|v| 3.0 * v);
        let y = random_tensor(&mut rng, 1000, d).map(|v| 3.0 * v);
        let (fx, fy) = (f.forward(&x).unwrap(), f.forward(&y).unwrap());
        let fm = f.forward(&rows_mid(&x, &y)).unwrap();
        let (gx, gy) = (f.transport_map(&x).unwrap(), f.transport_map(&y).unwrap());
        for i in 0..1000 {
            let (a, b, m) = (fx.get(i, 0), fy.get(i, 0), fm.get(i, 0));
            conv = conv.max((m - 0.5 * (a + b)) / (1.0 + a.abs() + b.abs()));
            let inner: f64 = (0..d)
                .map(|c| (gx.get(i, c) - gy.get(i, c)) * (x.get(i, c) - y.get(i, c)))
                .sum();
            let scale =
                1.0 + norm(gx.row_slice(i)) * norm(x.row_slice(i)) + norm(gy.row_slice(i)) * norm(y.row_slice(i));
            mono = mono.max(-inner / scale);
        }
    }
    check(
        conv <= 1e-12 && mono <= 1e-12,
        format!("20 generated ICNNs × 1000 pairs; worst scaled midpoint excess {conv:.1e}, worst scaled monotonicity deficit {mono:.1e}"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn affine_rows(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let mut out = x.matmul_t(w, false, true);
    for r in 0..out.rows() {
        for (o, bias) in out.row_slice_mut(r).iter_mut().zip(b.data()) {
            *o += bias;
        }
    }
    out
}

fn layer_norm_rows(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_slice_mut(r);
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        for (i, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) / (var + 1e-5).sqrt() * gain.data()[i] + bias.data()[i];
        }
    }
    out
}

/// Ordinary softmax set attention with mean pooling.
fn plain_embedding(w: &TransformerParams, points: &Tensor) -> Vec<f64> {
    let spec = w.spec();
    let p = spec.head_dim;
    let mut h = affine_rows(points, &w.lift, &w.lift_bias);
    for (bi, block) in w.blocks.iter().enumerate() {
        let u = layer_norm_rows(&h, &block.norm1_gain, &block.norm1_bias);
        let q = affine_rows(&u, &block.query, &block.query_bias);
        let k = affine_rows(&u, &block.key, &block.key_bias);
        let v = affine_rows(&u, &block.value, &block.value_bias);
        let n = h.rows();
        let mut concat = Tensor::zeros(n, spec.heads * p);
        for head in 0..spec.heads {
            for i in 0..n {
                let scores: Vec<f64> = (0..n)
                    .map(|j| {
                        (0..p)
                            .map(|c| q.get(i, head * p + c) * k.get(j, head * p + c))
                            .sum::<f64>()
                            / (p as f64).sqrt()
                    })
                    .collect();
                let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
                let total: f64 = e.iter().sum();
                for c in 0..p {
                    let o: f64 = (0..n).map(|j| e[j] * v.get(j, head * p + c)).sum::<f64>() / total;
                    concat.set(i, head * p + c, o);
                }
            }
        }
        let attn = affine_rows(&concat, &block.out, &block.out_bias);
        let mut x = h.clone();
        x.axpy(1.0, &attn);
        let u = layer_norm_rows(&x, &block.norm2_gain, &block.norm2_bias);
        let ffn = affine_rows(
            &affine_rows(&u, &block.ffn_in, &block.ffn_in_bias).map(|v| v.max(0.0)),
            &block.ffn_out,
            &block.ffn_out_bias,
        );
        h = if bi + 1 == w.blocks.len() {
            ffn
        } else {
            x.axpy(1.0, &ffn);
            x
        };
    }
    (0..h.cols())
        .map(|c| (0..h.rows()).map(|r| h.get(r, c)).sum::<f64>() / h.rows() as f64)
        .collect()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 3];
    for t in 0..100 {
        let d = if t % 2 == 0 { 2 } else { 8 };
        let n = rng.random_range(1..=64);
        let w = TransformerParams::init(&TransformerSpec::for_dim(d), &mut rng).unwrap();
        let pts = random_tensor(&mut rng, n, d).map(|v| 2.0 * v);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let dist = EmpiricalDistribution::normalized(pts.clone(), weights).unwrap();
        let base = w.embed(&dist).unwrap().0;

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        worst[0] = worst[0].max(max_abs(&base, &w.embed(&dist.permuted(&perm).unwrap()).unwrap().0));

        let uniform = EmpiricalDistribution::uniform(pts.clone()).unwrap();
        worst[1] = worst[1].max(max_abs(&w.embed(&uniform).unwrap().0, &plain_embedding(&w, &pts)));

        let j = rng.random_range(0..n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.push(j);
        let mut split_w = dist.weights().to_vec();
        split_w[j] *= 0.5;
        split_w.push(split_w[j]);
        let split = EmpiricalDistribution::normalized(pts.gather_rows(&idx), split_w).unwrap();
        worst[2] = worst[2].max(max_abs(&base, &w.embed(&split).unwrap().0));
    }
    check(
        worst.iter().all(|e| *e < 1e-9),
        format!(
            "100 distributions; max deviation: permutation {:.1e}, uniform reduction {:.1e}, atom split {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn brute_argmax(x: &Tensor, pot: &[f64], y: &Tensor) -> Vec<usize> {
    (0..y.rows())
        .map(|j| {
            let score = |i: usize| -> f64 {
                x.row_slice(i)
                    .iter()
                    .zip(y.row_slice(j))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    - pot[i]
            };
            let mut best = 0;
            for i in 1..x.rows() {
                if score(i) > score(best) {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// True when the residual graph of `perm` has no negative cycle, which
/// certifies the matching as optimal.
fn certified_optimal(cost: &Tensor, perm: &[usize]) -> bool {
    let n = perm.len();
    let mut dist = vec![0.0f64; 2 * n];
    for _ in 0..=2 * n {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if perm[i] == j {
                    let cand = dist[n + j] - cost.get(i, j);
                    if cand < dist[i] - 1e-9 {
                        dist[i] = cand;
                        changed = true;
                    }
                } else {
                    let cand = dist[i] + cost.get(i, j);
                    if cand < dist[n + j] - 1e-9 {
                        dist[n + j] = cand;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return true;
        }
    }
    false
}

fn instance(rng: &mut ChaCha8Rng, rows: usize, d: usize, grid: bool) -> Tensor {
    if grid {
        Tensor::new(
            rows,
            d,
            (0..rows * d).map(|_| f64::from(rng.random_range(-1i32..=1))).collect(),
        )
        .unwrap()
    } else {
        random_tensor(rng, rows, d)
    }
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut argmax_cases, mut oracle_cases, mut bad) = (0, 0, Vec::new());
    for n in 1..=8 {
        for b in 1..=8 {
            for rep in 0..6 {
                let d = rng.random_range(1..=3);
                let grid = rep % 2 == 1;
                let x = instance(&mut rng, n, d, grid);
                let y = instance(&mut rng, b, d, grid);
                let pot: Vec<f64> = if grid {
                    vec![0.0; n]
                } else {
                    (0..n).map(|_| normal(&mut rng)).collect()
                };
                argmax_cases += 1;
                if conjugate_argmax(&x, &pot, &y) != brute_argmax(&x, &pot, &y) {
                    bad.push(format!("argmax n={n} b={b}"));
                }
            }
        }
        let perms = permutations(n);
        for rep in 0..20 {
            let d = rng.random_range(1..=3);
            let x = instance(&mut rng, n, d, rep % 2 == 1);
            let y = instance(&mut rng, n, d, rep % 2 == 1);
            let (perm, cost) = discrete_ot_oracle(&x, &y).unwrap();
            let best = perms
                .iter()
                .map(|p| matching_cost(&x, &y, p))
                .fold(f64::INFINITY, f64::min);
            oracle_cases += 1;
            if (cost - best).abs() > 1e-12 * (1.0 + best) || (matching_cost(&x, &y, &perm) - cost).abs() > 1e-12 {
                bad.push(format!("oracle n={n}: {cost} vs brute force {best}"));
            }
        }
    }
    for _ in 0..200 {
        let n = rng.random_range(1..=128);
        let b = rng.random_range(1..=128);
        let d = rng.random_range(1..=4);
        let x = random_tensor(&mut rng, n, d);
        let y = random_tensor(&mut rng, b, d);
        let pot: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        argmax_cases += 1;
        if conjugate_argmax(&x, &pot, &y) != brute_argmax(&x, &pot, &y) {
            bad.push(format!("argmax n={n} b={b}"));
        }
        let y = random_tensor(&mut rng, n, d);
        let (perm, _) = discrete_ot_oracle(&x, &y).unwrap();
        oracle_cases += 1;
        let mut seen = vec![false; n];
        let is_perm = perm.len() == n && perm.iter().all(|&j| j < n && !std::mem::replace(&mut seen[j], true));
        if !is_perm || !certified_optimal(&squared_distances(&x, &y), &perm) {
            bad.push(format!("oracle n={n} not certified"));
        }
    }
    check(
        bad.is_empty(),
        format!(
            "{argmax_cases} argmax and {oracle_cases} matching instances; {} mismatches{}",
            bad.len(),
            bad.first().map(|b| format!(" (first: {b})")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn gaussian() -> Outcome {
    let mu = Gaussian::standard(2);
    let nu = Gaussian::new(vec![1.0, 0.0], vec![4.0, 0.0, 0.0, 1.0]).unwrap();
    let exact = gaussian_ot_map(&mu, &nu).unwrap();
    let pair = GroundTruthPair::new(
        GaussianMixture::single(mu).unwrap(),
        PointMap::Identity,
        PointMap::Affine(exact),
        0,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spec = IcnnSpec::for_dim(2);
    let f = IcnnParams::random(&spec, &mut rng, 0.1);
    let g = IcnnParams::random(&spec, &mut rng, 0.1);
    let cfg = SolverConfig {
        kind: SolverKind::Mmb,
        batch_size: 256,
        lr: 1e-2,
        ..SolverConfig::default()
    };
    let iterations = 2000;
    let mut solver = RawSolver::new(f, g, cfg).unwrap();
    solver
        .train(&pair.source(), &pair.target(), &mut rng, iterations)
        .map_err(|e| e.to_string())?;
    let uvp = l2_uvp(&solver.f, &pair, N_EVAL, 1).unwrap();
    check(
        uvp < 2.0,
        format!("{iterations} MM-B iterations, L2-UVP {uvp:.3}% (< 2%)"),
    )
}

// ---------------------------------------------------------------- criterion 6

fn pair_mode() -> Outcome {
    let pair = pair_problem(2, 7).unwrap();
    let cfg = TrainConfig {
        iterations: 1000,
        batch_size: 256,
        embed_points: 128,
        solver: SolverKind::Mmb,
        ..TrainConfig::default()
    };
    let model = HotetModel::init(&ModelSpec::for_dim(2), 0).unwrap();
    let (model, _) = train_pair(model, &pair.source(), &pair.target(), &cfg).map_err(|e| e.to_string())?;
    let r = eval_pair_model(&model, &pair, 512, 128, N_EVAL, 3).unwrap();
    check(
        r.uvp_fwd <= 10.0 && r.cs_fwd >= 0.9,
        format!(
            "{} iterations, forward UVP {:.2}% (≤ 10), CS {:.3} (≥ 0.9); inverse UVP {:.2}%, CS {:.3}",
            cfg.iterations, r.uvp_fwd, r.cs_fwd, r.uvp_inv, r.cs_inv
        ),
    )
}

// ------------------------------------------------------------ criteria 7 and 8

const MULTI_ITERATIONS: usize = 250;

fn multi_setup() -> (hotet::bench::MultiProblem, HotetModel, TrainConfig) {
    let problem = multi_problem(2, 50, 10, 3).unwrap();
    let spec = ModelSpec {
        icnn: IcnnSpec::new(2, vec![32, 32]).unwrap(),
        ..ModelSpec::for_dim(2)
    };
    let cfg = TrainConfig {
        iterations: MULTI_ITERATIONS,
        batch_size: 256,
        embed_points: 128,
        dist_batch: 8,
        solver: SolverKind::Mmv2,
        ..TrainConfig::default()
    };
    (problem, HotetModel::init(&spec, 0).unwrap(), cfg)
}

fn mean_predict_uvp(model: &HotetModel, pairs: &[GroundTruthPair]) -> f64 {
    let mut total = 0.0;
    for (i, p) in pairs.iter().enumerate() {
        let pts = p.source().sample(&mut ChaCha8Rng::seed_from_u64(100 + i as u64), 512);
        let maps = predict(model, &EmpiricalDistribution::uniform(pts).unwrap(), 128).unwrap();
        total += l2_uvp(&maps.forward, p, N_EVAL, 5).unwrap();
    }
    total / pairs.len() as f64
}

fn train_family(model: HotetModel) -> Result<(f64, f64), String> {
    let (problem, _, cfg) = multi_setup();
    let sides: Vec<_> = problem.train.iter().map(|p| p.source()).collect();
    let sources: Vec<&dyn Sampler> = sides.iter().map(|s| s as &dyn Sampler).collect();
    let (m, _) = train_multi(model, &sources, &problem.reference, &cfg).map_err(|e| e.to_string())?;
    Ok((
        mean_predict_uvp(&m, &problem.train),
        mean_predict_uvp(&m, &problem.test),
    ))
}

static FULL: std::sync::OnceLock<Result<(f64, f64), String>> = std::sync::OnceLock::new();

fn full_model() -> Result<(f64, f64), String> {
    FULL.get_or_init(|| train_family(multi_setup().1)).clone()
}

fn generalization() -> Outcome {
    let (train, test) = full_model()?;
    check(
        test <= 2.0 * train && train <= 15.0 && test <= 15.0,
        format!(
            "{MULTI_ITERATIONS} MMv2 iterations; mean UVP train {train:.2}%, unseen {test:.2}% (ratio {:.2} ≤ 2)",
            test / train
        ),
    )
}

fn ablation() -> Outcome {
    let (_, full) = full_model()?;
    let (_, ablated) = train_family(ablate_embedding(&multi_setup().1, 1))?;
    check(
        ablated >= 1.5 * full,
        format!(
            "unseen UVP without embedding {ablated:.2}% vs full {full:.2}% (factor {:.1} ≥ 1.5)",
            ablated / full
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

fn near_identity() -> Outcome {
    let mut worst = Vec::new();
    for d in [2usize, 8, 32] {
        let mut m_d = 0.0f64;
        for seed in 0..3 {
            let model = HotetModel::init(&ModelSpec::for_dim(d), seed).unwrap();
            let std = GaussianMixture::single(Gaussian::standard(d)).unwrap();
            let mu = std.sample_empirical(512, 100 + seed).unwrap();
            let f = model.forward_potential(&mu, 256).unwrap();
            let x = std.sample(&mut ChaCha8Rng::seed_from_u64(9 + seed), 2000);
            let y = f.transport_map(&x).unwrap();
            let mean = (0..x.rows())
                .map(|r| norm(&diff(x.row_slice(r), y.row_slice(r))) / (1.0 + norm(x.row_slice(r))))
                .sum::<f64>()
                / x.rows() as f64;
            m_d = m_d.max(mean);
        }
        worst.push((d, m_d));
    }
    check(
        worst.iter().all(|(_, m)| *m <= 0.1),
        format!(
            "mean ‖T(x)−x‖/(1+‖x‖) over 3 seeds: {}",
            worst
                .iter()
                .map(|(d, m)| format!("d={d} {m:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

// --------------------------------------------------------------- criterion 10

const WARM: [[f64; 3]; 3] = [[0.9, 0.5, 0.2], [0.7, 0.3, 0.1], [0.95, 0.8, 0.4]];
const COOL: [[f64; 3]; 3] = [[0.1, 0.3, 0.7], [0.2, 0.6, 0.8], [0.05, 0.15, 0.4]];

fn color() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let warm = RgbImage::synthetic(256, 256, &WARM, 1).unwrap();
    let cool = RgbImage::synthetic(256, 256, &COOL, 2).unwrap();
    let src = ImageDistribution::new("warm".into(), warm, 16384, &mut rng).unwrap();
    let tgt = ImageDistribution::new("cool".into(), cool, 16384, &mut rng).unwrap();
    let spec = ModelSpec::for_dim(3);
    let cfg = TrainConfig {
        iterations: 300,
        batch_size: 512,
        embed_points: 128,
        ..TrainConfig::default()
    };
    let (m, _) =
        train_pair(HotetModel::init(&spec, 0).unwrap(), &src.samples, &tgt.samples, &cfg).map_err(|e| e.to_string())?;
    let out = transfer(&m.forward_potential(&src.samples, 128).unwrap(), &src.image).unwrap();
    let (got, want) = (out.mean(), tgt.image.mean());
    let gap = max_abs(&got, &want);

    let palettes = [
        [[0.9, 0.4, 0.4], [0.6, 0.2, 0.3], [0.8, 0.6, 0.6]],
        [[0.3, 0.8, 0.3], [0.5, 0.9, 0.2], [0.2, 0.5, 0.2]],
        [[0.8, 0.8, 0.2], [0.6, 0.5, 0.1], [0.9, 0.7, 0.3]],
        [[0.5, 0.5, 0.5], [0.9, 0.9, 0.9], [0.2, 0.2, 0.2]],
    ];
    let family: Vec<ImageDistribution> = palettes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let img = RgbImage::synthetic(256, 256, p, 20 + i as u64).unwrap();
            ImageDistribution::new(format!("train{i}").into(), img, 16384, &mut rng).unwrap()
        })
        .collect();
    let sources: Vec<&dyn Sampler> = family.iter().map(|s| &s.samples as &dyn Sampler).collect();
    let mcfg = TrainConfig {
        iterations: 75,
        dist_batch: 4,
        solver: SolverKind::Mmv2,
        ..cfg.clone()
    };
    let (multi, _) =
        train_multi(HotetModel::init(&spec, 0).unwrap(), &sources, &tgt.samples, &mcfg).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("multi.ckpt");
    Checkpoint {
        model: multi,
        config: Some(mcfg.clone()),
        seed: 0,
    }
    .save(&path)
    .unwrap();
    let loaded = Checkpoint::load(&path).unwrap();

    let x = src.samples.sample(&mut ChaCha8Rng::seed_from_u64(5), 4096);
    let y = tgt.samples.sample(&mut ChaCha8Rng::seed_from_u64(6), 4096);
    let zero_shot = predict(&loaded.model, &src.samples, 128).unwrap().forward;
    let before = dual_objective_estimate(&zero_shot, &x, &y).unwrap();
    let (tuned, _) = finetune(loaded.model, &src.samples, &tgt.samples, 50, &mcfg).map_err(|e| e.to_string())?;
    let after = dual_objective_estimate(&tuned.forward_potential(&src.samples, 128).unwrap(), &x, &y).unwrap();
    check(
        gap <= 0.08 && after < before,
        format!(
            "pushforward mean ({:.3}, {:.3}, {:.3}) vs target ({:.3}, {:.3}, {:.3}), max gap {gap:.3} (≤ 0.08); dual estimate zero-shot {before:.5} → 50-step finetune {after:.5}",
            got[0], got[1], got[2], want[0], want[1], want[2]
        ),
    )
}

// --------------------------------------------------------------- criterion 11

fn bytes_of(model: &HotetModel, cfg: &TrainConfig) -> Vec<u8> {
    Checkpoint {
        model: model.clone(),
        config: Some(cfg.clone()),
        seed: cfg.seed,
    }
    .to_bytes()
    .unwrap()
}

const TINY: &str = r#"
seed = 3
[train]
iterations = 20
batch_size = 64
embed_points = 32
dist_batch = 2
[model]
icnn_hidden = [16, 16]
hyper_hidden = [64, 64]
[benchmark]
dims = [2]
baseline_iterations = 30
n_eval = 256
plot = true
[multi]
n_train = 4
n_test = 2
points = 64
[color]
subsample = 512
"#;

fn hotet(args: &[&str], config: &Path, out: &Path) -> Result<i32, String> {
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_hotet"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    Ok(output.status.code().unwrap_or(-1))
}

fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.retain(|k, _| !k.ends_with("time_s"));
            m.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// File contents with wall-clock fields removed.
fn normalized(path: &Path) -> Vec<u8> {
    let raw = std::fs::read(path).unwrap();
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let mut v: serde_json::Value = serde_json::from_slice(&raw).unwrap();
            strip_timing(&mut v);
            v.to_string().into_bytes()
        }
        Some("csv") => {
            let mut rdr = csv::Reader::from_reader(raw.as_slice());
            let headers = rdr.headers().unwrap().clone();
            let keep: Vec<usize> = (0..headers.len())
                .filter(|&i| !headers[i].ends_with("time_s"))
                .collect();
            let mut out = String::new();
            for rec in rdr.records() {
                let rec = rec.unwrap();
                out += &keep.iter().map(|&i| &rec[i]).collect::<Vec<_>>().join(",");
                out.push('\n');
            }
            out.into_bytes()
        }
        _ => raw,
    }
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), normalized(&p));
            }
        }
    }
    out
}

fn cli_session(inputs: &Path, out: &Path) -> Result<Vec<(String, i32)>, String> {
    let cfg = inputs.join("tiny.toml");
    let i = |name: &str| inputs.join(name).to_string_lossy().into_owned();
    let o = |name: &str| out.join(name).to_string_lossy().into_owned();
    let (a, b, c) = (i("a.txt"), i("b.txt"), i("c.txt"));
    let (warm, cool, mid) = (i("warm.png"), i("cool.png"), i("mid.png"));
    let (pair, multi, abl, color) = (o("pair.ckpt"), o("multi.ckpt"), o("ablated.ckpt"), o("color.ckpt"));
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("benchmark", vec!["benchmark"]),
        ("train-pair", vec!["train-pair", "--checkpoint", &pair]),
        (
            "train-pair-files",
            vec!["train-pair", "--source", &a, "--target", &b, "--checkpoint", &abl],
        ),
        ("eval-pair", vec!["eval", "--checkpoint", &pair]),
        (
            "train-multi",
            vec!["train-multi", "--checkpoint", &multi, "--solver", "mmv2"],
        ),
        (
            "train-multi-files",
            vec!["train-multi", "--source", &a, &c, "--target", &b, "--checkpoint", &abl],
        ),
        (
            "train-multi-ablated",
            vec![
                "train-multi",
                "--ablate-embedding",
                "--solver",
                "mmb",
                "--checkpoint",
                &abl,
            ],
        ),
        ("predict", vec!["predict", "--checkpoint", &multi]),
        ("predict-file", vec!["predict", "--checkpoint", &multi, "--source", &a]),
        ("eval-multi", vec!["eval", "--checkpoint", &multi]),
        ("finetune", vec!["finetune", "--checkpoint", &multi, "--finetune", "3"]),
        (
            "finetune-files",
            vec![
                "finetune",
                "--checkpoint",
                &multi,
                "--source",
                &a,
                "--target",
                &b,
                "--finetune",
            ],
        ),
        ("embed", vec!["embed", "--checkpoint", &multi, "--source", &a]),
        (
            "color-pair",
            vec![
                "color-transfer",
                "--source",
                &warm,
                "--target",
                &cool,
                "--checkpoint",
                &color,
            ],
        ),
        (
            "color-multi",
            vec![
                "color-transfer",
                "--source",
                &warm,
                &mid,
                "--target",
                &cool,
                "--checkpoint",
                &color,
            ],
        ),
        (
            "color-finetune",
            vec![
                "color-transfer",
                "--source",
                &mid,
                "--target",
                &cool,
                "--checkpoint",
                &color,
                "--finetune",
                "3",
            ],
        ),
    ];
    let mut codes = Vec::new();
    for (name, args) in runs {
        codes.push((name.to_string(), hotet(&args, &cfg, &out.join(name))?));
    }
    Ok(codes)
}

fn determinism() -> Outcome {
    let pair = pair_problem(2, 1).unwrap();
    let spec = ModelSpec {
        icnn: IcnnSpec::new(2, vec![8, 8]).unwrap(),
        hyper_hidden: vec![32, 32],
        ..ModelSpec::for_dim(2)
    };
    let cfg = TrainConfig {
        iterations: 5,
        batch_size: 64,
        embed_points: 32,
        seed: 11,
        ..TrainConfig::default()
    };
    let train = || {
        train_pair(
            HotetModel::init(&spec, 4).unwrap(),
            &pair.source(),
            &pair.target(),
            &cfg,
        )
        .unwrap()
        .0
    };
    let (m1, m2) = (train(), train());
    let same_training = bytes_of(&m1, &cfg) == bytes_of(&m2, &cfg);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let ck = Checkpoint {
        model: m1.clone(),
        config: Some(cfg.clone()),
        seed: cfg.seed,
    };
    ck.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let round_trip = loaded.to_bytes().unwrap() == std::fs::read(&path).unwrap()
        && leaves(&loaded.model)
            .iter()
            .zip(leaves(&m1))
            .all(|(a, b)| a.bitwise_eq(b))
        && loaded.model.trained == m1.trained
        && loaded.config == ck.config;

    let inputs = dir.path().join("inputs");
    std::fs::create_dir_all(&inputs).unwrap();
    std::fs::write(inputs.join("tiny.toml"), TINY).unwrap();
    for (name, shift, seed) in [("a.txt", 0.0, 1), ("b.txt", 3.0, 2), ("c.txt", -2.0, 3)] {
        let g = Gaussian::new(vec![shift, 0.0], vec![1.0, 0.3, 0.3, 0.5]).unwrap();
        let dist = GaussianMixture::single(g).unwrap().sample_empirical(120, seed).unwrap();
        distfile::write(&inputs.join(name), &dist).unwrap();
    }
    for (name, palette, seed) in [
        ("warm.png", WARM, 1),
        ("cool.png", COOL, 2),
        ("mid.png", [[0.5, 0.6, 0.4]; 3], 3),
    ] {
        RgbImage::synthetic(32, 32, &palette, seed)
            .unwrap()
            .save(&inputs.join(name))
            .unwrap();
    }
    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    let codes = cli_session(&inputs, &out_a)?;
    cli_session(&inputs, &out_b)?;
    let failed: Vec<&str> = codes.iter().filter(|(_, c)| *c != 0).map(|(n, _)| n.as_str()).collect();
    let (ta, tb) = (tree(&out_a), tree(&out_b));
    let differing: Vec<String> = ta
        .iter()
        .filter(|(k, v)| tb.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .chain(
            tb.keys()
                .filter(|k| !ta.contains_key(*k))
                .map(|k| k.display().to_string()),
        )
        .collect();

    let cfg_path = inputs.join("tiny.toml");
    let mut future = std::fs::read(out_a.join("multi.ckpt")).unwrap();
    let at = future.windows(11).position(|w| w == b"\"version\":1").unwrap();
    future[at + 10] = b'7';
    std::fs::write(dir.path().join("future.ckpt"), &future).unwrap();
    std::fs::write(dir.path().join("diverge.toml"), "[train]\niterations = 5\nlr = 1e300\n").unwrap();
    let future_path = dir.path().join("future.ckpt").to_string_lossy().into_owned();
    let pair_path = out_a.join("pair.ckpt").to_string_lossy().into_owned();
    let scratch = dir.path().join("scratch");
    let exits = [
        (
            "missing config",
            hotet(&["eval"], &dir.path().join("absent.toml"), &scratch)?,
            2,
        ),
        (
            "future checkpoint",
            hotet(&["eval", "--checkpoint", &future_path], &cfg_path, &scratch)?,
            2,
        ),
        (
            "predict from pair model",
            hotet(&["predict", "--checkpoint", &pair_path], &cfg_path, &scratch)?,
            2,
        ),
        (
            "divergence",
            hotet(&["train-pair"], &dir.path().join("diverge.toml"), &scratch)?,
            3,
        ),
    ];
    let wrong_exit: Vec<String> = exits
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(n, got, want)| format!("{n}: exit {got}, expected {want}"))
        .collect();

    check(
        same_training && round_trip && failed.is_empty() && differing.is_empty() && wrong_exit.is_empty(),
        format!(
            "repeat training bitwise {}; save/load bitwise {}; {} CLI runs twice, {} artifacts compared, {} differ, {} failed; exit codes {}",
            if same_training { "equal" } else { "DIFFERENT" },
            if round_trip { "equal" } else { "DIFFERENT" },
            codes.len(),
            ta.len(),
            differing.len(),
            failed.len(),
            if wrong_exit.is_empty() { "as specified".to_string() } else { wrong_exit.join("; ") }
        ),
    )
}

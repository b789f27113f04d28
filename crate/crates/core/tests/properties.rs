use hotet::bench::{cos_sim, l2_uvp, TransportMap};
use hotet::bench::{discrete_ot_oracle, matching_cost, multi_problem, pair_problem, random_spd};
use hotet::cli::{distfile, transfer, Checkpoint, RgbImage, RunConfig};
use hotet::diffcore::{grad_params, Tape, Tensor};
use hotet::embedder::{ContextVector, EmpiricalDistribution, TransformerSpec};
use hotet::hypernet::{HypernetParams, HypernetSpec};
use hotet::icnn::{gradient, potential, IcnnParams, IcnnSpec};
use hotet::params::{leaves, leaves_mut, vars};
use hotet::solvers::{mmb_loss_value, mmv2_inner_loss, mmv2_outer_loss};
use hotet::trainer::{aggregate_loss, HotetModel, ModelSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sd: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            sd * v
        })
        .collect();
    Tensor::new(rows, cols, data).unwrap()
}

fn small_icnn(d: usize, rng: &mut ChaCha8Rng) -> IcnnParams {
    let w = rng.random_range(2..6);
    IcnnParams::random(&IcnnSpec::new(d, vec![w, w]).unwrap(), rng, 1.0)
}

fn tiny_model(d: usize, seed: u64) -> HotetModel {
    let spec = ModelSpec {
        icnn: IcnnSpec::new(d, vec![4, 4]).unwrap(),
        transformer: TransformerSpec {
            input_dim: d,
            blocks: 1,
            heads: 2,
            head_dim: 2,
            ffn_hidden: 4,
            ctx_dim: 3,
        },
        hyper_hidden: vec![5],
        init_variance: 0.1,
    };
    HotetModel::init(&spec, seed).unwrap()
}

fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn tensor_accepts_exactly_full_finite_data(rows in 0usize..6, cols in 0usize..6, extra in 0usize..3, bad in any::<bool>()) {
        let n = rows * cols + extra;
        let mut data: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        if bad && n > 0 {
            data[n / 2] = f64::NAN;
        }
        let ok = Tensor::new(rows, cols, data).is_ok();
        prop_assert_eq!(ok, extra == 0 && !(bad && n > 0));
    }

    #[test]
    fn tape_replay_is_bitwise(seed in any::<u64>(), d in 1usize..5, n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = small_icnn(d, &mut rng);
        let x = normal_tensor(&mut rng, n, d, 1.0);
        let run = || {
            let tape = Tape::new();
            let f = net.bind_params(&tape);
            let xv = tape.input(x.clone());
            let t = gradient(&f, xv).unwrap();
            let loss = (t * xv).sum();
            let g = grad_params(loss, &vars(&f)).unwrap();
            (loss.item().to_bits(), g)
        };
        let (a, ga) = run();
        let (b, gb) = run();
        prop_assert_eq!(a, b);
        for (u, v) in ga.iter().zip(&gb) {
            prop_assert!(u.bitwise_eq(v));
        }
    }

    #[test]
    fn gradient_is_linear_in_the_loss(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = small_icnn(2, &mut rng);
        let x = normal_tensor(&mut rng, 5, 2, 1.0);
        let grads = |wa: f64, wb: f64| {
            let tape = Tape::new();
            let f = net.bind_params(&tape);
            let xv = tape.input(x.clone());
            let l1 = potential(&f, xv).sum();
            let l2 = (gradient(&f, xv).unwrap() * xv).sum();
            grad_params(l1.scale(wa) + l2.scale(wb), &vars(&f)).unwrap()
        };
        let (g1, g2, g) = (grads(1.0, 0.0), grads(0.0, 1.0), grads(a, b));
        for ((u, v), w) in g1.iter().zip(&g2).zip(&g) {
            for ((p, q), r) in u.data().iter().zip(v.data()).zip(w.data()) {
                let want = a * p + b * q;
                prop_assert!((want - r).abs() <= 1e-10 * (1.0 + want.abs()), "{want} vs {r}");
            }
        }
    }

    #[test]
    fn transport_map_is_monotone(seed in any::<u64>(), d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = small_icnn(d, &mut rng);
        let x = normal_tensor(&mut rng, 16, d, 2.0);
        let y = normal_tensor(&mut rng, 16, d, 2.0);
        let (tx, ty) = (net.transport_map(&x).unwrap(), net.transport_map(&y).unwrap());
        for r in 0..16 {
            let s: f64 = (0..d).map(|c| (tx.get(r, c) - ty.get(r, c)) * (x.get(r, c) - y.get(r, c))).sum();
            prop_assert!(s >= -1e-12, "{s}");
        }
    }

    #[test]
    fn zero_weights_give_the_identity(d in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let net = IcnnParams::zeros(&IcnnSpec::new(d, vec![w, w]).unwrap());
        let x = normal_tensor(&mut ChaCha8Rng::seed_from_u64(seed), 7, d, 3.0);
        prop_assert!(net.transport_map(&x).unwrap().bitwise_eq(&x));
    }

    #[test]
    fn generated_icnns_are_valid(seed in any::<u64>(), d in 1usize..5, ctx in 1usize..6, var in 0.01f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = IcnnSpec::new(d, vec![3, 4]).unwrap();
        let spec = HypernetSpec { ctx_dim: ctx, hidden: vec![6], target: target.clone(), init_variance: var };
        let hyper = HypernetParams::init(&spec, &mut rng).unwrap();
        prop_assert_eq!(hyper.output_len(), target.param_count());
        let z = ContextVector((0..ctx).map(|_| 3.0 * rng.random::<f64>() - 1.5).collect());
        let p = hyper.generate(&z).unwrap();
        prop_assert!(p.validate().is_ok());
        prop_assert_eq!(leaves(&p).iter().map(|t| t.len()).sum::<usize>(), target.param_count());
        prop_assert_eq!(hyper.generate(&z).unwrap(), p);
    }

    #[test]
    fn normalized_weights_sum_to_one(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = normal_tensor(&mut rng, n, 2, 1.0);
        let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        w[0] += 0.1;
        let dist = EmpiricalDistribution::normalized(points, w).unwrap();
        prop_assert!((dist.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(dist.weights().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn thinning_ignores_storage_order(seed in any::<u64>(), n in 1usize..60, m in 1usize..70) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = EmpiricalDistribution::uniform(normal_tensor(&mut rng, n, 3, 1.0)).unwrap();
        let perm = shuffled(n, &mut rng);
        let a = dist.thinned(m).unwrap();
        let b = dist.permuted(&perm).unwrap().thinned(m).unwrap();
        prop_assert_eq!(a.len(), m.min(n));
        if m < n {
            prop_assert!(a.points().bitwise_eq(b.points()));
            prop_assert_eq!(a.weights(), b.weights());
        }
    }

    #[test]
    fn distribution_files_round_trip(seed in any::<u64>(), n in 1usize..20, d in 1usize..5, weighted in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = normal_tensor(&mut rng, n, d, 5.0);
        let dist = if weighted {
            let w = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            EmpiricalDistribution::normalized(points, w).unwrap()
        } else {
            EmpiricalDistribution::uniform(points).unwrap()
        };
        let back = distfile::parse(&distfile::format(&dist)).unwrap();
        prop_assert!(back.points().bitwise_eq(dist.points()));
        for (a, b) in back.weights().iter().zip(dist.weights()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn mmb_loss_ignores_row_order(seed in any::<u64>(), d in 1usize..4, n in 2usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, g) = (small_icnn(d, &mut rng), small_icnn(d, &mut rng));
        let x = normal_tensor(&mut rng, n, d, 1.5);
        let y = normal_tensor(&mut rng, n, d, 1.5);
        let perm = shuffled(n, &mut rng);
        let a = mmb_loss_value(&f, &g, &x, &y).unwrap();
        let b = mmb_loss_value(&f, &g, &x.gather_rows(&perm), &y.gather_rows(&perm)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn mmv2_losses_freeze_the_other_potential(seed in any::<u64>(), d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (fp, gp) = (small_icnn(d, &mut rng), small_icnn(d, &mut rng));
        let x = normal_tensor(&mut rng, 6, d, 1.0);
        let y = normal_tensor(&mut rng, 6, d, 1.0);
        let tape = Tape::new();
        let (f, g) = (fp.bind_params(&tape), gp.bind_params(&tape));
        let inner = mmv2_inner_loss(&g, &f, &y).unwrap();
        for t in grad_params(inner, &vars(&f)).unwrap() {
            prop_assert!(t.data().iter().all(|&v| v == 0.0));
        }
        let outer = mmv2_outer_loss(&f, &g, &x, &y).unwrap();
        for t in grad_params(outer, &vars(&g)).unwrap() {
            prop_assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn aggregate_is_the_symmetrized_mean(fwd in prop::collection::vec(-1e3f64..1e3, 1..10), shift in -1e3f64..1e3) {
        let inv: Vec<f64> = fwd.iter().map(|v| v + shift).collect();
        let want = (fwd.iter().sum::<f64>() + inv.iter().sum::<f64>()) / (2.0 * fwd.len() as f64);
        let got = aggregate_loss(&fwd, &inv);
        prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()));
    }

    #[test]
    fn oracle_beats_random_permutations(seed in any::<u64>(), n in 1usize..24, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normal_tensor(&mut rng, n, d, 1.0);
        let y = normal_tensor(&mut rng, n, d, 1.0);
        let (_, best) = discrete_ot_oracle(&x, &y).unwrap();
        for _ in 0..20 {
            let p = shuffled(n, &mut rng);
            prop_assert!(best <= matching_cost(&x, &y, &p) + 1e-9);
        }
    }

    #[test]
    fn one_dimensional_oracle_is_the_sorted_coupling(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normal_tensor(&mut rng, n, 1, 1.0);
        let y = normal_tensor(&mut rng, n, 1, 1.0);
        let (_, best) = discrete_ot_oracle(&x, &y).unwrap();
        let mut xs = x.data().to_vec();
        let mut ys = y.data().to_vec();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let sorted = Tensor::new(n, 1, ys).unwrap();
        let cost = matching_cost(&Tensor::new(n, 1, xs).unwrap(), &sorted, &(0..n).collect::<Vec<_>>());
        prop_assert!((best - cost).abs() <= 1e-9 * (1.0 + cost), "{best} vs {cost}");
    }

    #[test]
    fn random_spd_has_bounded_spectrum(seed in any::<u64>(), d in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_spd(d, 0.5, 2.0, &mut rng);
        prop_assert!((&s - s.transpose()).amax() == 0.0);
        for e in s.symmetric_eigenvalues().iter() {
            prop_assert!(*e >= 0.5 - 1e-9 && *e <= 2.0 + 1e-9, "{e}");
        }
    }

    #[test]
    fn checkpoints_round_trip_bitwise(seed in any::<u64>(), d in 1usize..4) {
        let mut model = tiny_model(d, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for t in leaves_mut(&mut model) {
            let noise = normal_tensor(&mut rng, t.rows(), t.cols(), 1.0);
            t.axpy(1.0, &noise);
        }
        let ck = Checkpoint { model, config: None, seed };
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        for (a, b) in leaves(&back.model).iter().zip(leaves(&ck.model)) {
            prop_assert!(a.bitwise_eq(b));
        }
    }

    #[test]
    fn config_round_trips_through_toml(seed in any::<u64>(), lr in 1e-5f64..1e-1, iters in 1usize..10_000) {
        let mut cfg = RunConfig::default();
        cfg.seed = Some(seed);
        cfg.train.lr = lr;
        cfg.train.iterations = iters;
        let text = toml::to_string(&cfg).unwrap();
        prop_assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn color_transfer_stays_in_gamut(seed in any::<u64>(), gain in -50.0f64..50.0, offset in -20.0f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<u8> = (0..3 * 36).map(|_| rng.random()).collect();
        let img = RgbImage::from_rgb8(6, 6, &raw).unwrap();
        let map = |x: &Tensor| Ok(x.map(|v| gain * v + offset));
        let out = transfer(&map, &img).unwrap();
        prop_assert!(out.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn metrics_are_in_range_and_exact_at_the_truth(seed in 0u64..1000, d in 1usize..4, a in -2.0f64..2.0) {
        let pair = pair_problem(d, seed).unwrap();
        let truth = pair.target_map().clone();
        prop_assert_eq!(l2_uvp(&truth, &pair, 256, seed).unwrap(), 0.0);
        let guess = |x: &Tensor| Ok(x.map(|v| a * v + 0.3));
        let uvp = l2_uvp(&guess, &pair, 256, seed).unwrap();
        let cs = cos_sim(&guess, &pair, 256, seed).unwrap();
        prop_assert!(uvp >= 0.0);
        prop_assert!((-1.0..=1.0).contains(&cs), "{cs}");
    }

    #[test]
    fn multi_problem_targets_are_the_reference(seed in 0u64..1000, d in 1usize..4) {
        let p = multi_problem(d, 2, 1, seed).unwrap();
        for pair in p.train.iter().chain(&p.test) {
            prop_assert_eq!(pair.latent(), &p.reference);
            let (x, y) = pair.sample_pairs(&mut ChaCha8Rng::seed_from_u64(seed), 64).unwrap();
            let back = pair.source_map().apply(&y).unwrap();
            prop_assert!(back.max_abs_diff(&x) <= 1e-12 * (1.0 + x.norm()));
        }
    }
}

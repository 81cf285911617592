//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test -p prefmorl-core --test acceptance -- 3 4`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use prefmorl::env::{MmsdEnv, MmsdParams, MoEnv};
use prefmorl::golden::GoldenSpec;
use prefmorl::moppo::Parallelism;
use prefmorl::policy::{
    compute_gae, surrogate_gradient, surrogate_objective, GaussianPolicy, RolloutBuffer,
    SurrogateSample, Transition,
};
use prefmorl::preference::{
    fit_map, simulated_dm_compare, translate, ComparisonRecord, KernelParams, Outcome, Source,
    TranslateConfig,
};
use prefmorl::session::{
    load_checkpoint, run_baseline, run_session, save_checkpoint, Phase, RunMode, Session,
    SessionConfig,
};
use prefmorl::task::PolicyTask;
use prefmorl::{das_dennis, nondominated_filter, ObjectiveVector, WeightVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ov(v: Vec<f64>) -> ObjectiveVector {
    ObjectiveVector::new(v).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// 1 ----------------------------------------------------------------------

fn lattice_counts() -> Check {
    for (m, h, want) in [(2, 5, 6), (3, 5, 21)] {
        let ws = das_dennis(m, h).map_err(|e| e.to_string())?;
        ensure(ws.len() == want, format!("m={m} H={h}: {} vectors, want {want}", ws.len()))?;
        for w in &ws {
            let on_grid = w.as_slice().iter().all(|x| {
                let k = x * h as f64;
                (k - k.round()).abs() < 1e-12
            });
            ensure(on_grid, format!("{w:?} is not on the 1/{h} grid"))?;
        }
    }
    Ok("(2,5) -> 6, (3,5) -> 21".into())
}

// 2 ----------------------------------------------------------------------

fn gradient_check() -> Check {
    let eps = 0.2;
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    // Every layout has more than 1000 parameters even at the smallest dims.
    let hidden_choices: [&[usize]; 3] = [&[64, 64], &[32, 32], &[40, 24]];
    for _config in 0..20 {
        let sd = rng.random_range(1..=6);
        let ad = rng.random_range(1..=3);
        let hidden = hidden_choices[rng.random_range(0..3)];
        let mut policy = GaussianPolicy::new(sd, ad, hidden, &mut rng);
        let mut flat = policy.flat_params();
        let n_net = flat.len() - ad;
        for x in &mut flat[n_net..] {
            *x = rng.random_range(-1.0..0.5);
        }
        policy.set_flat_params_unclamped(&flat);

        // Keep every ratio well away from the points where the min switches
        // branch, so the surrogate is smooth in a neighbourhood.
        let mut samples = Vec::new();
        while samples.len() < 16 {
            let state: Vec<f64> = (0..sd).map(|_| rng.random_range(-2.0..2.0)).collect();
            let action: Vec<f64> = (0..ad).map(|_| rng.random_range(-1.5..1.5)).collect();
            let lp = policy.log_prob(&state, &action);
            let old_log_prob = lp + rng.random_range(-0.4..0.4);
            let ratio = (lp - old_log_prob).exp();
            if (ratio - (1.0 + eps)).abs() < 0.02 || (ratio - (1.0 - eps)).abs() < 0.02 {
                continue;
            }
            let advantage = rng.random_range(-2.0..2.0);
            samples.push(SurrogateSample {
                state,
                action,
                old_log_prob,
                advantage,
            });
        }

        let analytic = surrogate_gradient(&policy, &samples, eps);
        let n = flat.len();
        let coords: Vec<usize> = if n > 1000 {
            rand::seq::index::sample(&mut rng, n, 1000).into_vec()
        } else {
            (0..n).collect()
        };
        let mut probe = policy.clone();
        for &i in &coords {
            let mut p = flat.clone();
            p[i] += h;
            probe.set_flat_params_unclamped(&p);
            let up = surrogate_objective(&probe, &samples, eps);
            p[i] -= 2.0 * h;
            probe.set_flat_params_unclamped(&p);
            let down = surrogate_objective(&probe, &samples, eps);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    ensure(worst < 1e-4, format!("max relative error {worst:.3e} over {checked} coordinates"))?;
    Ok(format!("max relative error {worst:.2e} over {checked} coordinates"))
}

// 3 ----------------------------------------------------------------------

/// `A_t = sum_k (gamma lambda)^k delta_{t+k}`, summed until the episode ends.
fn gae_by_definition(buf: &RolloutBuffer, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = buf.steps.len();
    let delta = |k: usize| {
        let s = &buf.steps[k];
        let next = if k + 1 < n { buf.steps[k + 1].value } else { buf.bootstrap_value };
        let cont = if s.done { 0.0 } else { 1.0 };
        s.scalarized_reward + gamma * next * cont - s.value
    };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for k in t..n {
                total += (gamma * lambda).powi((k - t) as i32) * delta(k);
                if buf.steps[k].done {
                    break;
                }
            }
            total
        })
        .collect()
}

fn gae_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=200);
        let steps = (0..n)
            .map(|_| Transition {
                state: vec![0.0],
                action: vec![0.0],
                reward_vector: vec![0.0, 0.0],
                scalarized_reward: rng.random_range(-3.0..3.0),
                log_prob: 0.0,
                value: rng.random_range(-5.0..5.0),
                done: rng.random_bool(0.08),
            })
            .collect();
        let buf = RolloutBuffer {
            steps,
            bootstrap_value: rng.random_range(-5.0..5.0),
        };
        let gamma = rng.random_range(0.8..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let got = compute_gae(&buf, gamma, lambda).map_err(|e| e.to_string())?;
        let want = gae_by_definition(&buf, gamma, lambda);
        for t in 0..n {
            worst = worst.max((got.advantages[t] - want[t]).abs());
            worst = worst.max((got.returns[t] - (want[t] + buf.steps[t].value)).abs());
        }
    }
    ensure(worst <= 1e-10, format!("max abs error {worst:.3e}"))?;
    Ok(format!("100 buffers, max abs error {worst:.2e}"))
}

// 4 ----------------------------------------------------------------------

fn exhaustive_front(points: &[ObjectiveVector]) -> Vec<usize> {
    let dom = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
    };
    (0..points.len())
        .filter(|&i| !(0..points.len()).any(|j| dom(points[j].values(), points[i].values())))
        .collect()
}

fn dominance_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut sizes = Vec::new();
    // Continuous points, a coarse grid with duplicates, and a grid on the
    // plane x + y + z = 12 where many points tie.
    for kind in 0..3 {
        let points: Vec<ObjectiveVector> = (0..1000)
            .map(|_| match kind {
                0 => ov((0..3).map(|_| rng.random_range(-1.0..1.0)).collect()),
                1 => ov((0..3).map(|_| rng.random_range(0..8) as f64).collect()),
                _ => {
                    let x = rng.random_range(0..7) as f64;
                    let y = rng.random_range(0..7) as f64;
                    let z = 12.0 - x - y - rng.random_range(0..2) as f64;
                    ov(vec![x, y, z])
                }
            })
            .collect();
        let got = nondominated_filter(&points).map_err(|e| e.to_string())?;
        let want = exhaustive_front(&points);
        ensure(got == want, format!("front mismatch: {} vs {} points", got.len(), want.len()))?;
        sizes.push(got.len());
    }
    Ok(format!("front sizes {sizes:?} match the O(n^2) check"))
}

// 5 ----------------------------------------------------------------------

fn gp_suite() -> Check {
    let golden = GoldenSpec::linear(vec![1.0, 0.0]);
    let point = |rng: &mut ChaCha8Rng| ov(vec![rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)]);
    let mut accs = Vec::new();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let data: Vec<ComparisonRecord> = (0..40)
            .map(|_| {
                let (a, b) = (point(&mut rng), point(&mut rng));
                let o = simulated_dm_compare(&golden, &a, &b);
                ComparisonRecord::new(a, b, o)
            })
            .collect();
        let model = fit_map(&data, KernelParams::default()).map_err(|e| e.to_string())?;
        let mut correct = 0;
        for _ in 0..200 {
            let (a, b) = (point(&mut rng), point(&mut rng));
            let (ua, _) = model.predict(a.values()).map_err(|e| e.to_string())?;
            let (ub, _) = model.predict(b.values()).map_err(|e| e.to_string())?;
            if (ua > ub) == (a.values()[0] > b.values()[0]) {
                correct += 1;
            }
        }
        accs.push(correct as f64 / 200.0);
    }
    let med = median(accs.clone());
    ensure(med >= 0.85, format!("median held-out accuracy {med:.3} ({accs:?})"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut single_ok = 0;
    for _ in 0..100 {
        let (a, b) = (point(&mut rng), point(&mut rng));
        let model = fit_map(&[ComparisonRecord::new(a.clone(), b.clone(), Outcome::ABetter)], KernelParams::default())
            .map_err(|e| e.to_string())?;
        let (ua, _) = model.predict(a.values()).map_err(|e| e.to_string())?;
        let (ub, _) = model.predict(b.values()).map_err(|e| e.to_string())?;
        if ua > ub {
            single_ok += 1;
        }
    }
    ensure(single_ok == 100, format!("single-pair fit ordered {single_ok}/100"))?;
    Ok(format!("median accuracy {med:.3}, single-pair {single_ok}/100"))
}

// 6 ----------------------------------------------------------------------

fn translation_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut calls = 0;
    let mut zero_step = 0;
    while calls < 1000 {
        let m = rng.random_range(2..=3);
        let n = rng.random_range(1..=20);
        let tasks: Vec<PolicyTask> = (0..n)
            .map(|i| {
                let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = raw.iter().sum();
                let w = WeightVector::new(raw.iter().map(|x| x / s).collect()).unwrap();
                let mut t = PolicyTask::new(i as u64, w, 2, 1, &[2], i as u64);
                t.objective_estimate = ov((0..m).map(|_| rng.random_range(-2.0..2.0)).collect());
                t
            })
            .collect();
        let data: Vec<ComparisonRecord> = (0..rng.random_range(1..=6))
            .map(|_| {
                let a = ov((0..m).map(|_| rng.random_range(-2.0..2.0)).collect());
                let b = ov((0..m).map(|_| rng.random_range(-2.0..2.0)).collect());
                ComparisonRecord::new(a, b, Outcome::ABetter)
            })
            .collect();
        let model = fit_map(&data, KernelParams::default()).map_err(|e| e.to_string())?;
        let kappa1_frac = rng.random_range(0.05..=1.0);
        let kappa2_frac = rng.random_range(0.0..=(1.0 - kappa1_frac));
        let want1 = ((kappa1_frac * n as f64).round() as usize).max(1);
        let want2 = (kappa2_frac * n as f64).round() as usize;
        let eta = if calls % 2 == 0 { 0.0 } else { rng.random_range(0.0..=1.0) };
        let cfg = TranslateConfig {
            kappa1_frac,
            kappa2_frac,
            eta,
            n_tilde: rng.random_range(want2.max(1)..=2 * n + 2),
            beta: rng.random_range(0.0..2.0),
        };
        let mut next_id = 1000;
        let t = translate(&tasks, &model, &cfg, &mut next_id, &mut rng).map_err(|e| e.to_string())?;
        ensure(
            t.tasks.len() == want1 + want2,
            format!("n={n}: size {} != {want1} + {want2}", t.tasks.len()),
        )?;
        for task in &t.tasks {
            let w = task.weight.as_slice();
            let sum: f64 = w.iter().sum();
            ensure(
                (sum - 1.0).abs() <= 1e-12 && w.iter().all(|x| *x >= 0.0),
                format!("weight {w:?} off the simplex"),
            )?;
        }
        if eta == 0.0 {
            ensure(t.shifted == t.lattice, "eta = 0 moved the lattice")?;
            zero_step += 1;
        }
        calls += 1;
    }
    Ok(format!("{calls} calls, {zero_step} with eta = 0"))
}

// 7 ----------------------------------------------------------------------

fn h_oracle(i: usize, l: f64) -> f64 {
    match i % 3 {
        0 => 0.01 * l * l - 0.12 * l + 0.26,
        1 => -0.01 * l * l + 0.13,
        _ => -0.01 * l * l + 0.02 * l + 0.08,
    }
}

fn u_oracle(p: f64, w: f64, alpha: f64) -> f64 {
    if p >= w / alpha {
        w / alpha
    } else {
        w * p - alpha * p * p / 2.0
    }
}

fn mmsd_fidelity() -> Check {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);

    // Spot values by hand.
    ensure((MmsdParams::demand_scale(0, 2.0) - 0.06).abs() < 1e-12, "h_1(2) != 0.06")?;
    ensure(((1.0 + MmsdParams::demand_scale(0, 2.0)) * 10.0 - 10.6).abs() < 1e-12, "p_d != 10.6")?;
    ensure((MmsdParams::default().utility(1.0, 4.0) - 3.0).abs() < 1e-12, "U(1; 4, 2) != 3")?;
    let mut p = MmsdParams::with_size(1, 1, 1);
    p.supply0 = vec![2.0];
    p.base_load = vec![vec![1.5 / (1.0 + MmsdParams::demand_scale(0, 2.0))]];
    p.generation = vec![vec![0.5]];
    let mut env = MmsdEnv::new(p).map_err(|e| e.to_string())?;
    env.reset();
    env.step(&[0.0, 0.0]).map_err(|e| e.to_string())?;
    ensure((env.state().storage[0] - 6.0).abs() < 1e-12, format!("storage {} != 6", env.state().storage[0]))?;

    let params = MmsdParams::default();
    let mut env = MmsdEnv::new(params.clone()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ns = params.storage_microgrids;
    for ep in 0..1000 {
        env.reset();
        let mut acc = [0.0; 3];
        let mut post = [0.0; 3];
        let mut prev_storage = env.state().storage.clone();
        for t in 0..params.horizon {
            let action: Vec<f64> = (0..=ns).map(|_| rng.random_range(-1.5..1.5)).collect();
            let out = env.step(&action).map_err(|e| e.to_string())?;
            for k in 0..3 {
                acc[k] += out.reward[k];
            }
            let s = env.state();
            let l = s.lambda;
            for i in 0..params.microgrids {
                let d = (1.0 + h_oracle(i, l)) * params.base_load[i][t];
                post[0] += u_oracle(d, params.utility_weight[i], params.alpha) - l * d;
            }
            let supply: f64 = s.supply.iter().sum();
            post[1] += l * supply - params.beta * supply * supply;
            for i in 0..ns {
                let si = s.storage[i];
                ensure(
                    si >= params.storage_min[i] && si <= params.storage_max[i],
                    format!("episode {ep} step {t}: storage {si} out of bounds"),
                )?;
                ensure(
                    (si - prev_storage[i]).abs() <= params.charge_rate[i] + 1e-12,
                    format!("episode {ep} step {t}: rate {} exceeded", (si - prev_storage[i]).abs()),
                )?;
            }
            prev_storage = s.storage.clone();
            if out.done {
                post[2] = s.storage.iter().sum();
            }
        }
        for k in 0..3 {
            ensure(
                close(acc[k], post[k]),
                format!("episode {ep}: component {k} {} vs {}", acc[k], post[k]),
            )?;
        }
        ensure(close(acc[0], env.state().grid_utility), "grid utility accumulator drifted")?;
        ensure(close(acc[1], env.state().microgrid_utility), "microgrid utility accumulator drifted")?;
    }
    Ok("spot values exact, 1000 episodes agree to 1e-9, constraints held".into())
}

// 8 ----------------------------------------------------------------------

fn directional() -> Check {
    let seeds: Vec<u64> = (0..5).collect();
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                s.spawn(move || {
                    let mut cfg = SessionConfig::example();
                    cfg.seed = seed;
                    let pref = run_session(cfg.clone()).map(|st| st.epsilons());
                    let base = run_baseline(cfg).map(|st| st.epsilons());
                    (seed, pref, base)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    let mut pe = (Vec::new(), Vec::new());
    let mut be = (Vec::new(), Vec::new());
    let mut lines = Vec::new();
    for (seed, pref, base) in results {
        let (ps, pb) = pref.map_err(|e| e.to_string())?.ok_or("no golden spec")?;
        let (bs, bb) = base.map_err(|e| e.to_string())?.ok_or("no golden spec")?;
        lines.push(format!("seed {seed}: pref eps*={ps:.4} eps_bar={pb:.4} | base eps*={bs:.4} eps_bar={bb:.4}"));
        pe.0.push(ps);
        pe.1.push(pb);
        be.0.push(bs);
        be.1.push(bb);
    }
    for l in &lines {
        println!("    {l}");
    }
    let (p_star, p_bar) = (median(pe.0), median(pe.1));
    let (b_star, b_bar) = (median(be.0), median(be.1));
    let summary = format!(
        "median eps_bar {p_bar:.4} vs {b_bar:.4}, median eps* {p_star:.4} vs {b_star:.4}"
    );
    ensure(p_bar < b_bar, format!("eps_bar not lower: {summary}"))?;
    ensure(p_star <= b_star * 1.05, format!("eps* worse than baseline + 5%: {summary}"))?;
    Ok(summary)
}

// 9 ----------------------------------------------------------------------

fn small_config() -> SessionConfig {
    let mut cfg = SessionConfig::example();
    cfg.seeding_steps = 8_000;
    cfg.total_steps = 40_000;
    cfg.interactions_budget = 5;
    cfg.seed = 9;
    cfg
}

fn bits(st: &prefmorl::session::SessionState) -> Vec<Vec<u64>> {
    st.objectives()
        .iter()
        .map(|f| f.values().iter().map(|x| x.to_bits()).collect())
        .collect()
}

fn determinism_and_resume() -> Check {
    let cfg = small_config();
    let a = run_session(cfg.clone()).map_err(|e| e.to_string())?;
    let b = run_session(cfg.clone()).map_err(|e| e.to_string())?;
    ensure(bits(&a) == bits(&b), "repeated runs differ")?;
    ensure(a == b, "repeated runs differ outside the objective vectors")?;

    let mut threaded = cfg.clone();
    threaded.parallelism = Parallelism::Workers(3);
    let c = run_session(threaded).map_err(|e| e.to_string())?;
    ensure(bits(&a) == bits(&c), "worker pool changed the result")?;

    // Stop after two answered queries, save, reload, finish.
    let golden = cfg.dm_mode.golden().cloned().ok_or("no golden spec")?;
    let mut s = Session::new(cfg.clone(), RunMode::Preference).map_err(|e| e.to_string())?;
    while s.state().comparisons.len() < 2 || s.phase() != Phase::AwaitingFeedback {
        match s.phase() {
            Phase::AwaitingFeedback => {
                let q = s.pending_query().cloned().ok_or("missing query")?;
                let o = simulated_dm_compare(&golden, &q.a, &q.b);
                s.submit_feedback(q.query_id, o, Source::Simulated).map_err(|e| e.to_string())?;
            }
            Phase::Finished => return Err("finished before the checkpoint".into()),
            _ => {
                s.advance().map_err(|e| e.to_string())?;
            }
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("mid.json");
    save_checkpoint(s.state(), &path).map_err(|e| e.to_string())?;
    drop(s);
    let mut resumed = Session::from_state(load_checkpoint(&path).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    resumed.run_simulated().map_err(|e| e.to_string())?;
    let r = resumed.into_state();
    ensure(bits(&a) == bits(&r), "resumed run differs from uninterrupted run")?;
    ensure(a == r, "resumed state differs from uninterrupted state")?;
    Ok(format!("{} tasks bit-identical across repeat, 3 workers and resume", a.archive.len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check, Duration); 9] = [
        (1, "lattice counts", lattice_counts, Duration::from_secs(1)),
        (2, "surrogate gradient check", gradient_check, Duration::from_secs(60)),
        (3, "GAE oracle", gae_oracle, Duration::from_secs(5)),
        (4, "dominance oracle", dominance_oracle, Duration::from_secs(5)),
        (5, "preference model", gp_suite, Duration::from_secs(60)),
        (6, "translation invariants", translation_invariants, Duration::from_secs(10)),
        (7, "MMSD fidelity", mmsd_fidelity, Duration::from_secs(30)),
        (8, "preference beats baseline", directional, Duration::from_secs(600)),
        (9, "determinism and resume", determinism_and_resume, Duration::from_secs(300)),
    ];
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, check, limit) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {p:?}")));
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= limit => (true, d),
            Ok(d) => (false, format!("{d}; took longer than {limit:?}")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id} [{}] {name}: {detail} ({:.2}s)",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}

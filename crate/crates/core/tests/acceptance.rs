//! Acceptance suite. Prints one line per criterion and exits nonzero if any fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p stonewalk-core --test acceptance -- 1 4 9`.
//! `STONEWALK_ACCEPT_ITERS` overrides the per-stage iteration count of the
//! training comparisons (10 and 11).

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stonewalk::env::{sample_command, Stage};
use stonewalk::foothold::{self, FootPrint, FootState, FootholdConfig, FootholdMode, FOOT_LENGTH, FOOT_WIDTH};
use stonewalk::geom::Pose2;
use stonewalk::harness::{
    self, read_episode_csv, run_ablation_matrix, run_eval, train, write_report, AblationConfig, Cell, RunConfig,
    TrainingCheckpoint,
};
use stonewalk::nn::{self, GaussianPolicy};
use stonewalk::rl::{compute_gae, fuse_advantages, normalize, Agent, CriticMode, Done, EndKind, PpoConfig, RolloutBuffer, Transition};
use stonewalk::rng::{stream, Purpose};
use stonewalk::sensor::{self, apply_noise, sample_map, MapNoiseConfig, SensorState, MAP_LEN, MAP_SIDE};
use stonewalk::terrain::{self, curriculum_params, HeightField, TerrainKind, TerrainSpec, GAP_DEPTH, MAX_LEVEL};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- 1

/// Advantage as the explicit discounted sum of residuals over the rest of the segment.
fn gae_double_sum(r: &[f64], v: &[f64], d: &[Done], boot: f64, gamma: f64, lam: f64) -> Vec<f64> {
    let n = r.len();
    let next_value = |t: usize| match d[t] {
        Done::Terminal => 0.0,
        Done::Truncated(b) => b,
        Done::No if t + 1 == n => boot,
        Done::No => v[t + 1],
    };
    let continues = |t: usize| matches!(d[t], Done::No) && t + 1 < n;
    let mut adv = vec![0.0; n];
    for t in 0..n {
        let mut end = t;
        while continues(end) {
            end += 1;
        }
        for k in t..=end {
            let delta = r[k] + gamma * next_value(k) - v[k];
            adv[t] += (gamma * lam).powi((k - t) as i32) * delta;
        }
    }
    adv
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=32);
        let gamma = [0.9, 0.99][rng.gen_range(0..2)];
        let lam = [0.9, 0.95][rng.gen_range(0..2)];
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let d: Vec<Done> = (0..n)
            .map(|_| match rng.gen_range(0..6) {
                0 => Done::Terminal,
                1 => Done::Truncated(rng.gen_range(-3.0..3.0)),
                _ => Done::No,
            })
            .collect();
        let boot = rng.gen_range(-3.0..3.0);
        let (adv, _) = compute_gae(&r, &v, &d, boot, gamma, lam).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&adv, &gae_double_sum(&r, &v, &d, boot, gamma, lam)));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-12, || format!("max abs error {worst:e}"))?;
    ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!("1000 episodes, max abs error {worst:.1e}, {secs:.3} s"))
}

// ---------------------------------------------------------------- 2

const OBS: usize = 12;
const ACT: usize = 3;
const HIDDEN: [usize; 2] = [16, 8];

fn agent(mode: CriticMode, seed: u64) -> Agent {
    Agent::new(OBS, ACT, &HIDDEN, mode, 1e-3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Buffer of random transitions sampled from the agent's current policy.
fn random_buffer(agent: &Agent, num_envs: usize, horizon: usize, rng: &mut ChaCha8Rng) -> RolloutBuffer {
    let mut buf = RolloutBuffer::new(num_envs, horizon, OBS, ACT);
    buf.log_std = agent.policy.log_std.clone();
    for t in 0..horizon {
        for e in 0..num_envs {
            let obs: Vec<f64> = (0..OBS).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let mean = agent.policy.net.predict_one(&obs).unwrap();
            let action = nn::sample(&mean, &buf.log_std, rng);
            let end = match rng.gen_range(0..10) {
                0 => EndKind::Terminal,
                1 => EndKind::Truncated,
                _ => EndKind::No,
            };
            let (v1, v2) = agent.values(ndarray::ArrayView2::from_shape((1, OBS), &obs).unwrap()).unwrap();
            let tr = Transition {
                obs: &obs,
                action: &action,
                mean: &mean,
                logp: nn::log_prob(&mean, &buf.log_std, &action),
                r1: rng.gen_range(-1.0..2.0),
                r2: if rng.gen_bool(0.3) { -rng.gen_range(0.0f64..16.0).floor() } else { 0.0 },
                v1: v1[0],
                v2: v2[0],
                end,
                next_v1: rng.gen_range(-1.0..1.0),
                next_v2: rng.gen_range(-1.0..1.0),
            };
            buf.set(t, e, &tr);
        }
    }
    for e in 0..num_envs {
        buf.bootstrap1[e] = rng.gen_range(-1.0..1.0);
        buf.bootstrap2[e] = rng.gen_range(-1.0..1.0);
    }
    buf
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares an analytic gradient with central differences of `f` at 20 probes.
/// The first `forced.len()` probes use the given indices, the rest are random.
fn fd_probes(
    p0: &[f64],
    grad: &[f64],
    forced: &[usize],
    rng: &mut ChaCha8Rng,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Result<f64, String> {
    let h = 1e-4;
    let mut worst = 0.0f64;
    for i in 0..20 {
        let k = forced.get(i).copied().unwrap_or_else(|| rng.gen_range(0..p0.len()));
        let mut p = p0.to_vec();
        p[k] += h;
        let up = f(&p);
        p[k] -= 2.0 * h;
        let down = f(&p);
        let fd = (up - down) / (2.0 * h);
        let e = rel_err(fd, grad[k]);
        ensure(e < 1e-4, || format!("param {k}: finite difference {fd} vs analytic {}", grad[k]))?;
        worst = worst.max(e);
    }
    Ok(worst)
}

fn log_prob_sum(policy: &GaussianPolicy, obs: &Array2<f64>, actions: &[Vec<f64>]) -> f64 {
    let means = policy.mean(obs.view()).unwrap();
    (0..actions.len())
        .map(|b| nn::log_prob(means.row(b).as_slice().unwrap(), &policy.log_std, &actions[b]))
        .sum()
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ag = agent(CriticMode::Double, 2);
    ag.policy.log_std = vec![-0.4, 0.1, 0.3];
    let n_net = ag.policy.net.num_params();
    let log_std_idx: Vec<usize> = (n_net..n_net + ACT).collect();
    let mut worst = BTreeMap::new();

    // log-probability of fixed actions under the batch means
    let batch = 8;
    let obs = Array2::from_shape_fn((batch, OBS), |_| rng.gen_range(-1.5..1.5));
    let actions: Vec<Vec<f64>> = (0..batch).map(|_| (0..ACT).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let (means, cache) = ag.policy.mean_with_cache(obs.view()).unwrap();
    let mut d_mean = Array2::zeros((batch, ACT));
    let mut d_ls = vec![0.0; ACT];
    for b in 0..batch {
        let mut row = vec![0.0; ACT];
        nn::log_prob_grads(means.row(b).as_slice().unwrap(), &ag.policy.log_std, &actions[b], 1.0, &mut row, &mut d_ls);
        for j in 0..ACT {
            d_mean[[b, j]] = row[j];
        }
    }
    let g = ag.policy.param_grads(&cache, d_mean.view(), &d_ls).unwrap();
    let p0 = ag.policy.flat_params();
    let mut probe = ag.policy.clone();
    let e = fd_probes(&p0, &g, &log_std_idx, &mut rng, |p| {
        probe.set_flat_params(p).unwrap();
        log_prob_sum(&probe, &obs, &actions)
    })?;
    worst.insert("log_prob", e);

    // entropy depends on log_std only
    let g = ag.policy.param_grads(&cache, Array2::zeros((batch, ACT)).view(), &[1.0; ACT]).unwrap();
    let mut probe = ag.policy.clone();
    let e = fd_probes(&p0, &g, &log_std_idx, &mut rng, |p| {
        probe.set_flat_params(p).unwrap();
        nn::entropy(&probe.log_std)
    })?;
    worst.insert("entropy", e);

    // clipped surrogate, off-policy so that some samples clip
    let buf = random_buffer(&ag, 4, 8, &mut rng);
    for p in ag.policy.net.params_mut() {
        *p += rng.gen_range(-0.1..0.1);
    }
    let cfg = PpoConfig { entropy_coef: 0.0, ..PpoConfig::default() };
    let idx: Vec<usize> = (0..buf.len()).collect();
    let obs = Array2::from_shape_vec((buf.len(), OBS), buf.obs.clone()).unwrap();
    let adv: Vec<f64> = (0..buf.len()).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let (_, _, _, g) = ag.policy_loss_and_grad(&buf, &idx, obs.view(), &adv, &cfg).unwrap();
    let p0 = ag.policy.flat_params();
    let mut probe = ag.clone();
    let e = fd_probes(&p0, &g, &log_std_idx, &mut rng, |p| {
        probe.policy.set_flat_params(p).unwrap();
        probe.policy_loss_and_grad(&buf, &idx, obs.view(), &adv, &cfg).unwrap().1
    })?;
    worst.insert("surrogate", e);

    // both value losses
    let targets: Vec<f64> = (0..buf.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
    for k in 0..2 {
        let (_, g) = ag.critic_loss_and_grad(k, obs.view(), &targets).unwrap();
        let p0 = ag.critics[k].params().to_vec();
        let mut probe = ag.clone();
        let e = fd_probes(&p0, &g, &[], &mut rng, |p| {
            probe.critics[k].set_params(p).unwrap();
            probe.critic_loss_and_grad(k, obs.view(), &targets).unwrap().0
        })?;
        worst.insert(if k == 0 { "value_loss1" } else { "value_loss2" }, e);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.2} s"))?;
    let parts: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    Ok(format!("20 probes each, worst relative error: {}; {secs:.2} s", parts.join(", ")))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_mean = 0.0f64;
    let mut worst_std = 0.0f64;
    for trial in 0..200 {
        let n = rng.gen_range(2..=512);
        let scale = 10f64.powi(rng.gen_range(-3..=3));
        let shift = rng.gen_range(-50.0..50.0);
        let mut x: Vec<f64> = (0..n).map(|_| shift + scale * rng.gen_range(-1.0..1.0)).collect();
        if trial % 5 == 0 {
            // sparse-style group: mostly zero with a few large penalties
            x = (0..n).map(|_| if rng.gen_bool(0.1) { -rng.gen_range(1.0..16.0) } else { 0.0 }).collect();
            x[0] = -1.0;
        }
        let z = normalize(&x).map_err(|e| e.to_string())?;
        let m = z.iter().sum::<f64>() / n as f64;
        let s = (z.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
        worst_mean = worst_mean.max(m.abs());
        worst_std = worst_std.max((s - 1.0).abs());
    }
    ensure(worst_mean < 1e-9 && worst_std < 1e-9, || format!("|mean| {worst_mean:e}, |std-1| {worst_std:e}"))?;

    let fused = fuse_advantages(&[3.0, -3.0], &[-0.5, 0.5], 1.0, 0.25).map_err(|e| e.to_string())?;
    ensure(fused[0] == 0.75 && fused[1] == -0.75, || format!("fused example gave {fused:?}"))?;

    // rescaling one stream, its recorded critic values included, leaves the fused advantage unchanged
    let ag = agent(CriticMode::Double, 3);
    let buf = random_buffer(&ag, 8, 16, &mut rng);
    let cfg = PpoConfig::default();
    let base = ag.fused_advantages(&buf, &cfg).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (group, s) in [(1, 7.5), (1, 0.01), (2, 0.03), (2, 40.0)] {
        let mut b = buf.clone();
        let fields = if group == 1 {
            [&mut b.r1, &mut b.v1, &mut b.next_v1, &mut b.bootstrap1]
        } else {
            [&mut b.r2, &mut b.v2, &mut b.next_v2, &mut b.bootstrap2]
        };
        for f in fields {
            f.iter_mut().for_each(|v| *v *= s);
        }
        let f = ag.fused_advantages(&b, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&base, &f));
    }
    ensure(worst < 1e-9, || format!("rescaling moved the fused advantage by {worst:e}"))?;
    Ok(format!(
        "|mean| {worst_mean:.1e}, |std-1| {worst_std:.1e}, (1,-1) -> {}, rescaling drift {worst:.1e}",
        fused[0]
    ))
}

// ---------------------------------------------------------------- 4

/// Bad-sample count computed directly from the raw height grid.
fn count_bad(field: &HeightField, x: f64, y: f64, yaw: f64, epsilon: f64) -> usize {
    let (c, s) = (yaw.cos(), yaw.sin());
    let cell = field.cell_size();
    let mut bad = 0;
    for j in 0..4 {
        for i in 0..4 {
            let fx = FOOT_LENGTH * (i as f64 / 3.0 - 0.5);
            let fy = FOOT_WIDTH * (j as f64 / 3.0 - 0.5);
            let wx = x + (c * fx - s * fy);
            let wy = y + (s * fx + c * fy);
            let below = if wx < 0.0 || wy < 0.0 {
                true
            } else {
                let (ix, iy) = ((wx / cell).floor() as usize, (wy / cell).floor() as usize);
                ix >= field.nx() || iy >= field.ny() || (field.heights()[iy * field.nx() + ix] as f64) < epsilon
            };
            bad += below as usize;
        }
    }
    bad
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let print = FootPrint::default();
    let mut fields = Vec::new();
    for i in 0..20u64 {
        let kind = TerrainKind::ALL[i as usize % TerrainKind::ALL.len()];
        let mut spec = TerrainSpec::new(kind, rng.gen_range(0..=MAX_LEVEL), i).unwrap();
        spec.surface_noise = if i % 2 == 0 { 0.04 } else { 0.0 };
        fields.push(terrain::generate(&spec).map_err(|e| e.to_string())?.task);
    }
    let percents = [30u8, 50, 70, 75, 90];
    let mut penalized = 0usize;
    for n in 0..10_000 {
        let field = &fields[n % fields.len()];
        let epsilon = [-0.1, -0.05, -0.5][rng.gen_range(0..3)];
        let mut feet = [FootState::default(); 2];
        let mut oracle_bad = [0usize; 2];
        for (k, f) in feet.iter_mut().enumerate() {
            let x = rng.gen_range(-0.2..field.extent_x() + 0.2);
            let y = rng.gen_range(-0.2..field.extent_y() + 0.2);
            let yaw = rng.gen_range(-3.2..3.2);
            *f = FootState { pose: Pose2::new(x, y, yaw), contact: rng.gen_bool(0.7), air_time: 0.0 };
            oracle_bad[k] = count_bad(field, x, y, yaw, epsilon);
        }
        let contacting: Vec<usize> = (0..2).filter(|&k| feet[k].contact).map(|k| oracle_bad[k]).collect();
        let cfg = FootholdConfig { epsilon, mode: FootholdMode::Continuous, support_threshold: 0.5 };
        let r = foothold::foothold_reward(&feet, &print, field, &cfg);
        let expect = -(contacting.iter().sum::<usize>() as f64);
        ensure(r == expect, || format!("placement {n}: reward {r} vs oracle {expect}"))?;
        penalized += (expect < 0.0) as usize;
        for p in percents {
            let cfg = FootholdConfig { mode: FootholdMode::BinaryPct(p), ..cfg };
            let r = foothold::foothold_reward(&feet, &print, field, &cfg);
            let expect = -(contacting.iter().filter(|&&b| b as f64 / 16.0 >= p as f64 / 100.0).count() as f64);
            ensure(r == expect, || format!("placement {n}, {p}%: reward {r} vs threshold recount {expect}"))?;
        }
    }

    // foothold error recount from written episode rows
    let dir = scratch("c4");
    let mut cfg = RunConfig::default();
    cfg.eval.episodes = 20;
    cfg.eval.seeds = vec![0, 1];
    cfg.eval.kinds = vec![TerrainKind::SteppingStones, TerrainKind::BalancingBeams, TerrainKind::StonesEverywhere];
    cfg.eval.levels = vec![0, 5];
    let mut ag = Agent::new(
        stonewalk::env::OBS_DIM,
        stonewalk::env::ACT_DIM,
        &cfg.hidden,
        CriticMode::Double,
        1e-3,
        &mut ChaCha8Rng::seed_from_u64(4),
    )
    .unwrap();
    // a wide random policy takes long, varied steps
    for p in ag.policy.net.params_mut() {
        *p *= 40.0;
    }
    let report = run_eval(&ag, &cfg).map_err(|e| e.to_string())?;
    write_report(&dir, &report).map_err(|e| e.to_string())?;
    let rows = read_episode_csv(&dir.join("eval.csv")).map_err(|e| e.to_string())?;
    let mut nonzero = 0;
    for s in &report.per_seed {
        let (episodes, successes, bad, sole) = harness::recount(&rows, s.kind, s.level, s.seed);
        let touchdowns: usize = rows
            .iter()
            .filter(|r| r.kind == s.kind && r.level == s.level && r.seed == s.seed)
            .map(|r| r.touchdowns)
            .sum();
        let e_foot = if sole == 0 { 0.0 } else { bad as f64 / sole as f64 };
        let m = &s.metrics;
        ensure(
            episodes == m.episodes && successes == m.successes && bad == m.bad_samples && touchdowns == m.touchdowns,
            || format!("{} level {} seed {}: counts differ", s.kind, s.level, s.seed),
        )?;
        ensure(e_foot.to_bits() == m.e_foot.to_bits(), || {
            format!("{} level {} seed {}: recount {e_foot} vs report {}", s.kind, s.level, s.seed, m.e_foot)
        })?;
        nonzero += (m.e_foot > 0.0) as usize;
    }
    ensure(nonzero > 0, || "every recounted cell had zero foothold error".into())?;
    Ok(format!(
        "10000 placements ({penalized} penalized) x continuous + {} binary thresholds exact; {} report cells recounted exactly",
        percents.len(),
        report.per_seed.len()
    ))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Check {
    use TerrainKind::*;
    let golden: [(TerrainKind, [f64; 9], [f64; 9], [f64; 9]); 3] = [
        (
            StonesEverywhere,
            [1.5, 1.35, 1.2, 1.05, 0.9, 0.75, 0.6, 0.45, 0.3],
            [0.0, 0.05, 0.05, 0.1, 0.1, 0.15, 0.15, 0.2, 0.2],
            [0.0, 0.05, 0.05, 0.1, 0.1, 0.15, 0.15, 0.2, 0.2],
        ),
        (
            SteppingStones,
            [0.8, 0.65, 0.5, 0.4, 0.35, 0.3, 0.25, 0.2, 0.2],
            [0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5],
            [0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5],
        ),
        (
            BalancingBeams,
            [0.3, 0.3, 0.3, 0.25, 0.25, 0.25, 0.2, 0.2, 0.2],
            [0.4, 0.35, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05, 0.0],
            [0.2, 0.2, 0.2, 0.25, 0.3, 0.35, 0.35, 0.4, 0.2],
        ),
    ];
    let mut checked = 0;
    for (kind, sizes, dx, dy) in golden {
        for l in 0..=MAX_LEVEL {
            let p = curriculum_params(kind, l).map_err(|e| e.to_string())?;
            let i = l as usize;
            for (name, got, want) in [("size", p.stone_size, sizes[i]), ("x distance", p.stone_gap_x, dx[i]), ("y distance", p.stone_gap_y, dy[i])] {
                ensure(got.to_bits() == want.to_bits(), || format!("{kind} level {l} {name}: {got} vs {want}"))?;
                checked += 1;
            }
        }
    }
    ensure(curriculum_params(SteppingStones, MAX_LEVEL + 1).is_err(), || "level 9 accepted".into())?;
    Ok(format!("{checked} values exact over levels 0..=8"))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cells = 0usize;
    let mut gaps = 0usize;
    for i in 0..100u64 {
        let kind = TerrainKind::ALL[i as usize % TerrainKind::ALL.len()];
        let level = (i / 5 % 9) as u8;
        let mut spec = TerrainSpec::new(kind, level, rng.gen()).unwrap();
        spec.surface_noise = if i % 3 == 0 { 0.03 } else { 0.0 };
        let pair = terrain::generate(&spec).map_err(|e| e.to_string())?;
        let (task, flat) = (&pair.task, &pair.flat);
        ensure(task.same_shape(flat), || format!("pair {i}: shapes differ"))?;
        for k in 0..task.heights().len() {
            let (t, f) = (task.heights()[k], flat.heights()[k]);
            ensure(flat.safe_mask()[k], || format!("pair {i} ({kind} {level}): flat cell {k} unsafe"))?;
            ensure((f as f64) > 0.5 * GAP_DEPTH, || format!("pair {i}: flat cell {k} at gap depth {f}"))?;
            if task.safe_mask()[k] {
                ensure(t.to_bits() == f.to_bits(), || format!("pair {i}: safe cell {k} task {t} flat {f}"))?;
            } else {
                gaps += 1;
            }
            cells += 1;
        }
        pair.check_twin()?;
    }
    Ok(format!("100 pairs, {cells} cells scanned, {gaps} task gap cells filled in the twin"))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Check {
    let mut rng = stream(7, Purpose::Command, 0);
    for _ in 0..10_000 {
        let c = sample_command(Stage::Two, &mut rng);
        ensure(c.vy.to_bits() == 0 && c.wyaw.to_bits() == 0, || format!("stage-2 command {c:?}"))?;
        ensure((-1.0..=1.0).contains(&c.vx), || format!("stage-2 vx {}", c.vx))?;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for _ in 0..10_000 {
        let c = sample_command(Stage::One, &mut rng);
        for (k, v) in [c.vx, c.vy, c.wyaw].into_iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    for k in 0..3 {
        ensure(lo[k] >= -1.0 && hi[k] <= 1.0, || format!("component {k} outside [-1, 1]"))?;
        ensure(lo[k] <= -0.99 && hi[k] >= 0.99, || format!("component {k} covers only [{}, {}]", lo[k], hi[k]))?;
    }
    Ok(format!(
        "stage 2 lateral and yaw exactly 0; stage 1 ranges vx [{:.4}, {:.4}] vy [{:.4}, {:.4}] wyaw [{:.4}, {:.4}]",
        lo[0], hi[0], lo[1], hi[1], lo[2], hi[2]
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Check {
    let spec = TerrainSpec::new(TerrainKind::SteppingStones, 4, 8).unwrap();
    let field = terrain::generate(&spec).map_err(|e| e.to_string())?.task;
    let pose_at = |k: usize| {
        let x = 0.3 + (k % 300) as f64 * 0.03;
        Pose2::new(x, 1.0 + 0.2 * (k as f64 * 0.1).sin(), 0.3 * (k as f64 * 0.05).cos())
    };

    let cfg = MapNoiseConfig::default();
    let mut rng = stream(8, Purpose::Env, 0);
    let mut state = SensorState::reset(&cfg, &mut rng);
    let (mut repeats, mut extensions) = (0usize, 0usize);
    let steps = 10_000;
    for k in 0..steps {
        let clean = sample_map(&field, pose_at(k));
        let (_, ev) = apply_noise(&clean, &field, &mut state, &cfg, &mut rng);
        repeats += ev.repeated as usize;
        extensions += ev.extension_triggered as usize;
    }
    // the first call has no previous map to repeat
    let repeat_rate = repeats as f64 / (steps - 1) as f64;
    let extension_rate = extensions as f64 / steps as f64;
    ensure((0.18..=0.22).contains(&repeat_rate), || format!("repeat rate {repeat_rate}"))?;
    ensure((0.58..=0.62).contains(&extension_rate), || format!("extension rate {extension_rate}"))?;

    let none = MapNoiseConfig::none();
    let mut state = SensorState::reset(&none, &mut rng);
    for k in 0..2000 {
        let clean = sample_map(&field, pose_at(k));
        let (out, _) = apply_noise(&clean, &field, &mut state, &none, &mut rng);
        let same = out.samples().iter().zip(clean.samples()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same && out.safe() == clean.safe(), || format!("zero-config noise changed the map at step {k}"))?;
    }

    let flat = HeightField::flat(200, 200, 0.05, 0.0);
    let mut worst = 0.0f64;
    for t in 0..200 {
        let (hx, hy) = (0.03 * ((t as f64) * 0.37).sin(), 0.03 * ((t as f64) * 0.61).cos());
        let mut st = SensorState { episode_rp_bias: (hx, hy), ..Default::default() };
        let clean = sample_map(&flat, Pose2::new(5.0, 5.0, 0.1 * t as f64));
        let (out, _) = apply_noise(&clean, &flat, &mut st, &none, &mut rng);
        for k in 0..MAP_LEN {
            let (row, col) = ((k / MAP_SIDE) as f64, (k % MAP_SIDE) as f64);
            let last = (MAP_SIDE - 1) as f64;
            let expect = (hx * (2.0 * col - last) + hy * (2.0 * row - last)) / last;
            worst = worst.max((out.samples()[k] - expect).abs());
        }
    }
    ensure(worst < 1e-12, || format!("ramp error {worst:e}"))?;
    let _ = sensor::ramp;
    Ok(format!(
        "repeat {repeat_rate:.4}, extension {extension_rate:.4} over {steps} steps; zero config bit-exact; ramp error {worst:.1e}"
    ))
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let cfg = PpoConfig { w2: 0.0, num_envs: 8, steps_per_iter: 16, ..PpoConfig::default() };
        let mut double = agent(CriticMode::Double, 90 + seed);
        let mut single = agent(CriticMode::Single, 90 + seed);
        ensure(double.policy == single.policy && double.critics[0] == single.critics[0], || {
            "initializations differ".into()
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..3 {
            let mut buf = random_buffer(&double, 8, 16, &mut rng);
            buf.r2.iter_mut().for_each(|r| *r = 0.0);
            let p0 = double.policy.flat_params();
            let c0 = double.critics[0].params().to_vec();
            let update_seed = rng.gen();
            double.update(&buf, &cfg, &mut ChaCha8Rng::seed_from_u64(update_seed)).map_err(|e| e.to_string())?;
            single.update(&buf, &cfg, &mut ChaCha8Rng::seed_from_u64(update_seed)).map_err(|e| e.to_string())?;
            let delta = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
            let dp = max_abs_diff(&delta(&double.policy.flat_params(), &p0), &delta(&single.policy.flat_params(), &p0));
            let dc = max_abs_diff(&delta(double.critics[0].params(), &c0), &delta(single.critics[0].params(), &c0));
            worst = worst.max(dp).max(dc);
            // continue from identical states so later updates compare like for like
            single.policy = double.policy.clone();
            single.critics[0] = double.critics[0].clone();
            single.policy_opt = double.policy_opt.clone();
            single.critic_opts[0] = double.critic_opts[0].clone();
        }
    }
    ensure(worst < 1e-12, || format!("parameter deltas differ by {worst:e}"))?;
    Ok(format!("15 updates, max parameter delta difference {worst:.1e}"))
}

// ---------------------------------------------------------------- 10 and 11

const SEEDS: [u64; 3] = [0, 1, 2];
const BUDGET: Duration = Duration::from_secs(60 * 60);

struct Campaign {
    /// (cell, seed) -> (R_succ, R_trav, E_foot) at the evaluated levels
    results: BTreeMap<(String, u64, u8), (f64, f64, f64)>,
    elapsed: Duration,
    iterations: usize,
    dir: PathBuf,
    errors: Vec<String>,
}

fn campaign() -> Campaign {
    let iterations = std::env::var("STONEWALK_ACCEPT_ITERS").ok().and_then(|v| v.parse().ok()).unwrap_or(400);
    let dir = scratch("campaign");
    let mut base = RunConfig::default();
    base.ppo.num_envs = 64;
    base.ppo.steps_per_iter = 25;
    base.checkpoint_every = iterations;
    base.eval.kinds = vec![TerrainKind::SteppingStones];
    base.eval.levels = vec![0, 4];
    base.eval.episodes = 100;
    let ab = AblationConfig {
        cells: vec![Cell::Ours, Cell::SingleCritic, Cell::NoSoft, Cell::Foothold(70)],
        seeds: SEEDS.to_vec(),
        stage1_iterations: iterations,
        stage2_iterations: iterations,
        stage1_kinds: vec![TerrainKind::StonesEverywhere],
        stage2_kinds: vec![TerrainKind::SteppingStones],
    };
    let start = Instant::now();
    let mut last = Instant::now();
    let mut progress = |cell: Cell, seed: u64, row: &harness::TrainRow| {
        if last.elapsed() > Duration::from_secs(60) {
            eprintln!(
                "  [{:>5.0} s] {cell} seed {seed} stage {} iteration {} level {:.2}",
                start.elapsed().as_secs_f64(),
                row.stage,
                row.iteration,
                row.mean_level
            );
            last = Instant::now();
        }
    };
    let mut results = BTreeMap::new();
    let mut errors = Vec::new();
    match run_ablation_matrix(&base, &ab, &dir, &mut progress) {
        Ok(cells) => {
            for c in cells {
                match c.outcome {
                    Ok(metrics) => {
                        for m in metrics {
                            let v = (m.metrics.r_succ, m.metrics.r_trav, m.metrics.e_foot);
                            results.insert((c.cell.to_string(), c.seed, m.level), v);
                        }
                    }
                    Err(e) => errors.push(format!("{} seed {}: {e}", c.cell, c.seed)),
                }
            }
        }
        Err(e) => errors.push(e.to_string()),
    }
    Campaign { results, elapsed: start.elapsed(), iterations, dir, errors }
}

impl Campaign {
    fn get(&self, cell: &str, seed: u64, level: u8) -> Result<(f64, f64, f64), String> {
        self.results
            .get(&(cell.to_string(), seed, level))
            .copied()
            .ok_or_else(|| format!("no result for {cell} seed {seed}; errors: {:?}", self.errors))
    }

    fn header(&self) -> String {
        format!(
            "{} iterations per stage, 64 envs x 25 steps, {:.0} s total, logs in {}",
            self.iterations,
            self.elapsed.as_secs_f64(),
            self.dir.display()
        )
    }

    fn within_budget(&self) -> Result<(), String> {
        ensure(self.elapsed <= BUDGET, || format!("campaign took {:.0} s, over the 3600 s budget", self.elapsed.as_secs_f64()))
    }
}

fn criterion_10(c: &Campaign) -> Check {
    c.within_budget()?;
    let mut lines = Vec::new();
    let mut wins = [0; 2];
    let mut all_zero = true;
    for &seed in &SEEDS {
        let (ours, ours_trav, _) = c.get("ours", seed, 4)?;
        let mut row = format!("seed {seed}: ours {ours:.2} (trav {ours_trav:.3})");
        for (k, other) in ["single_critic", "no_soft"].into_iter().enumerate() {
            let (succ, trav, _) = c.get(other, seed, 4)?;
            wins[k] += (ours >= succ) as usize;
            all_zero &= succ == 0.0;
            row.push_str(&format!(", {other} {succ:.2} (trav {trav:.3})"));
        }
        all_zero &= ours == 0.0;
        let (l0, _, _) = c.get("ours", seed, 0)?;
        let (s0, _, _) = c.get("single_critic", seed, 0)?;
        let (n0, _, _) = c.get("no_soft", seed, 0)?;
        row.push_str(&format!("; level 0 R_succ ours {l0:.2} single {s0:.2} no_soft {n0:.2}"));
        lines.push(row);
    }
    for l in &lines {
        println!("    {l}");
    }
    let summary = format!(
        "R_succ at level 4: ours >= single_critic in {}/3 seeds, ours >= no_soft in {}/3 seeds; {}",
        wins[0],
        wins[1],
        c.header()
    );
    ensure(wins[0] >= 2 && wins[1] >= 2, || summary.clone())?;
    if all_zero {
        Ok(format!("{summary}; every R_succ is 0, so the ordering holds only as a tie"))
    } else {
        Ok(summary)
    }
}

fn criterion_11(c: &Campaign) -> Check {
    c.within_budget()?;
    let mut wins = 0;
    for &seed in &SEEDS {
        let (_, _, cont) = c.get("ours", seed, 4)?;
        let (_, _, binary) = c.get("foothold_70", seed, 4)?;
        println!("    seed {seed}: E_foot continuous {cont:.4}, foothold_70 {binary:.4}");
        wins += (cont <= binary) as usize;
    }
    let summary = format!("E_foot continuous <= foothold_70 in {wins}/3 seeds; {}", c.header());
    ensure(wins >= 2, || summary.clone())?;
    Ok(summary)
}

// ---------------------------------------------------------------- 12

/// Every CSV and checkpoint under `dir`, keyed by relative path.
fn artifacts(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "bin" | "hgt")) {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs every pipeline step into `dir`.
fn pipeline(dir: &Path) -> Result<(), String> {
    let e = |e: harness::HarnessError| e.to_string();
    let mut cfg = RunConfig::default();
    cfg.ppo.num_envs = 6;
    cfg.ppo.steps_per_iter = 10;
    cfg.iterations = 3;
    cfg.checkpoint_every = 2;
    cfg.seed = 12;
    let s1 = train(&cfg, &dir.join("stage1"), None, None).map_err(e)?;
    let resumed = TrainingCheckpoint::load(&dir.join("stage1/ckpt_2.bin")).map_err(e)?;
    let mut more = cfg.clone();
    more.iterations = 4;
    train(&more, &dir.join("resumed"), Some(&resumed), None).map_err(e)?;
    let mut s2 = cfg.clone();
    s2.stage = Stage::Two;
    s2.init = Some(s1.checkpoint_path.clone());
    let s2 = train(&s2, &dir.join("stage2"), None, None).map_err(e)?;
    let mut ev = cfg.clone();
    ev.eval.episodes = 4;
    ev.eval.levels = vec![0, 3];
    ev.eval.seeds = vec![0, 1];
    write_report(&dir.join("eval"), &run_eval(&s2.checkpoint.agent, &ev).map_err(e)?).map_err(e)?;
    let ab = AblationConfig {
        cells: vec![Cell::Ours, Cell::NoSoft, Cell::SingleCritic, Cell::Naive, Cell::Foothold(70)],
        seeds: vec![3],
        stage1_iterations: 2,
        stage2_iterations: 2,
        ..AblationConfig::default()
    };
    ev.eval.levels = vec![2];
    run_ablation_matrix(&ev, &ab, &dir.join("ablate"), &mut |_, _, _| {}).map_err(e)?;
    let pair = terrain::generate(&TerrainSpec::new(TerrainKind::Gaps, 6, 5).unwrap()).map_err(|e| e.to_string())?;
    fs::create_dir_all(dir.join("terrain")).map_err(|e| e.to_string())?;
    for (name, field) in [("task", &pair.task), ("flat", &pair.flat)] {
        let f = fs::File::create(dir.join("terrain").join(format!("{name}.hgt"))).map_err(|e| e.to_string())?;
        terrain::io::write_binary(field, f).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn criterion_12() -> Check {
    let (a, b) = (scratch("c12a"), scratch("c12b"));
    pipeline(&a)?;
    pipeline(&b)?;
    let (fa, fb) = (artifacts(&a), artifacts(&b));
    ensure(fa.keys().eq(fb.keys()), || "the two runs wrote different file sets".into())?;
    for (path, bytes) in &fa {
        ensure(&fb[path] == bytes, || format!("{} differs", path.display()))?;
    }
    let csvs = fa.keys().filter(|p| p.extension().is_some_and(|e| e == "csv")).count();
    Ok(format!(
        "train, resume, stage 2, eval, ablate, terrain: {} files bit-identical ({csvs} CSVs)",
        fa.len()
    ))
}

// ---------------------------------------------------------------- driver

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(id: u32, name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(detail) => println!("criterion {id:>2} {name}: PASS ({secs:.1} s) {detail}"),
        Err(detail) => println!("criterion {id:>2} {name}: FAIL ({secs:.1} s) {detail}"),
    }
    outcome.is_ok()
}

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let on = |id: u32| wanted.is_empty() || wanted.contains(&id);
    let mut ok = true;
    let quick: [(u32, &str, fn() -> Check); 9] = [
        (1, "gae oracle", criterion_1),
        (2, "gradient checks", criterion_2),
        (3, "advantage fusion", criterion_3),
        (4, "foothold reward oracle", criterion_4),
        (5, "curriculum golden values", criterion_5),
        (6, "flat twin", criterion_6),
        (7, "command sampling", criterion_7),
        (8, "noise statistics", criterion_8),
        (9, "single-critic equivalence", criterion_9),
    ];
    for (id, name, f) in quick {
        if on(id) {
            ok &= run(id, name, f);
        }
    }
    if on(12) {
        ok &= run(12, "determinism", criterion_12);
    }
    if on(10) || on(11) {
        println!("criteria 10 and 11 share one training campaign (about 40 minutes on one core)");
        let c = campaign();
        if on(10) {
            ok &= run(10, "training ordering", || criterion_10(&c));
        }
        if on(11) {
            ok &= run(11, "foothold design ordering", || criterion_11(&c));
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

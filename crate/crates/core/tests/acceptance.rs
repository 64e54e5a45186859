//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to the
//! real stderr (bypassing the harness capture) before asserting.

use std::io::Write as _;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, Axis};
use omnidp::config::RunConfig;
use omnidp::encoder::{attention_weights, encode_points, encoder_backward, encoder_forward, Encoder, EncoderConfig};
use omnidp::harness::{
    ablation_suite, collect, evaluate, evaluate_expert, read_episode, train, write_episode, AblationConfig,
    SensorKind, TaskId, Variant,
};
use omnidp::ik::{ik_cost, reference_left_arm, solve_ik_restarts, IkProblem, IkWeights, HOME_ARM};
use omnidp::lidar_sim::{
    azimuth_deg, depth_image, depth_to_pointcloud, elevation_deg, DepthCameraModel, LidarModel, Primitive, Scene,
    Shape,
};
use omnidp::nn::{cosine_lr, relative_error, Adam, Parameterized};
use omnidp::plot::plot_csv;
use omnidp::pointcloud::{range_crop, temporal_aggregate, uniform_downsample, AggregatedCloud, PointCloudFrame, TimedPoint};
use omnidp::policy::{
    denoise_loss, read_checkpoint, sample, standard_normal, training_loss, write_checkpoint, ActionChunk, Denoiser,
    LossWeighting, NoiseSchedule, Observation,
};
use omnidp::rng::seeded;
use omnidp::{Transform, Vec3, ACTION_DIM, PROPRIO_DIM};
use rand::Rng;

// Tests share one lock so timed sections measure their own work.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(name: &str, ok: bool, detail: &str) {
    let mut e = std::io::stderr();
    let _ = writeln!(e, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn random_cloud(seed: u64, n: usize) -> AggregatedCloud {
    let mut rng = seeded(seed);
    AggregatedCloud {
        points: (0..n)
            .map(|_| TimedPoint {
                position: Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                t_rel: [0.0, 0.5, 1.0][rng.random_range(0..3)],
            })
            .collect(),
    }
}

fn random_frame(seed: u64, n: usize, spread: f64) -> PointCloudFrame {
    let mut rng = seeded(seed);
    let pts = (0..n)
        .map(|_| {
            Vec3::new(
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
            )
        })
        .collect();
    PointCloudFrame::new(0.0, pts)
}

/// Largest relative error between analytic gradient entries and central differences.
fn worst_fd(analytic: &[f64], base: &[f64], floor: f64, mut eval: impl FnMut(&[f64]) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut p = base.to_vec();
        p[i] += h;
        let up = eval(&p);
        p[i] -= 2.0 * h;
        let down = eval(&p);
        let fd = (up - down) / (2.0 * h);
        // Dead ReLU units can sit exactly on a kink.
        if fd == 0.0 && analytic[i] == 0.0 {
            continue;
        }
        worst = worst.max(relative_error(analytic[i], fd, floor));
    }
    worst
}

#[test]
fn gradient_exactness() {
    let _serial = serial();
    let t0 = Instant::now();
    let (mut enc_worst, mut den_worst, mut ik_worst) = (0.0f64, 0.0f64, 0.0f64);
    for draw in 0..20u64 {
        let cfg = EncoderConfig {
            widths: vec![8, 6],
            head_hidden: 4,
            ..EncoderConfig::default()
        };
        let mut enc = Encoder::new(&cfg, &mut seeded(100 + draw)).unwrap();
        let cloud = random_cloud(200 + draw, 10);
        let mut rng = seeded(300 + draw);
        let upstream: Array1<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic = encoder_backward(&enc, &cloud, upstream.view()).unwrap().flat();
        let base = enc.flat();
        let l0 = encoder_forward(&enc, &cloud).unwrap().dot(&upstream);
        let floor = 1e-6 * l0.abs().max(1.0);
        enc_worst = enc_worst.max(worst_fd(&analytic, &base, floor, |p| {
            enc.set_flat(p);
            encoder_forward(&enc, &cloud).unwrap().dot(&upstream)
        }));

        let sched = NoiseSchedule::default();
        let mut den = Denoiser::new(2, 4, &[16, 16], 8, &mut seeded(400 + draw)).unwrap();
        let mut rng = seeded(500 + draw);
        let obs = Observation::new(
            (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..PROPRIO_DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let a0 = ActionChunk::new(Array2::from_shape_fn((2, ACTION_DIM), |_| rng.random_range(-1.0..1.0))).unwrap();
        let (l0, grad, dfeat) = training_loss(&den, &sched, &obs, &a0, draw).unwrap();
        let floor = 1e-6 * l0.abs().max(1.0);
        let base = den.flat();
        den_worst = den_worst.max(worst_fd(&grad.flat(), &base, floor, |p| {
            den.set_flat(p);
            training_loss(&den, &sched, &obs, &a0, draw).unwrap().0
        }));
        den.set_flat(&base);
        den_worst = den_worst.max(worst_fd(&dfeat.to_vec(), &obs.feature.to_vec(), floor, |f| {
            let mut o = obs.clone();
            o.feature = Array1::from(f.to_vec());
            training_loss(&den, &sched, &o, &a0, draw).unwrap().0
        }));

        let arm = reference_left_arm();
        let (lo, hi) = (arm.lower(), arm.upper());
        let mut rng = seeded(600 + draw);
        let mut rand_q = || -> Vec<f64> { lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l + 0.05..*h - 0.05)).collect() };
        let target = arm.forward_kinematics(&rand_q()).unwrap();
        let problem = IkProblem::new(&arm, target, rand_q(), rand_q());
        let q = rand_q();
        let (c0, g) = ik_cost(&problem, &q).unwrap();
        let floor = 1e-6 * c0.abs().max(1.0);
        ik_worst = ik_worst.max(worst_fd(&g, &q, floor, |p| ik_cost(&problem, p).unwrap().0));
    }
    let elapsed = t0.elapsed();
    let ok = enc_worst < 1e-4 && den_worst < 1e-4 && ik_worst < 1e-4 && elapsed < Duration::from_secs(60);
    report(
        "gradient exactness",
        ok,
        &format!("max rel err encoder {enc_worst:.2e}, denoiser {den_worst:.2e}, ik {ik_worst:.2e} in {elapsed:.1?}"),
    );
}

#[test]
fn tap_properties() {
    let _serial = serial();
    let mut worst_sum = 0.0f64;
    let mut worst_perm = 0.0f64;
    let mut worst_mean = 0.0f64;
    for draw in 0..20u64 {
        let enc = Encoder::new(&EncoderConfig::default(), &mut seeded(draw)).unwrap();
        let cloud = random_cloud(50 + draw, 64);
        let w = attention_weights(&enc.head, &cloud).unwrap();
        worst_sum = worst_sum.max((w.sum() - 1.0).abs());

        let mut shuffled = cloud.clone();
        let mut rng = seeded(70 + draw);
        for i in (1..shuffled.points.len()).rev() {
            shuffled.points.swap(i, rng.random_range(0..=i));
        }
        let a = encoder_forward(&enc, &cloud).unwrap();
        let b = encoder_forward(&enc, &shuffled).unwrap();
        worst_perm = worst_perm.max((&a - &b).mapv(f64::abs).fold(0.0, |m: f64, &v| m.max(v)));

        let mut flat = cloud.clone();
        for p in &mut flat.points {
            p.t_rel = 0.5;
        }
        let pooled = encoder_forward(&enc, &flat).unwrap();
        let mean = encode_points(&enc.points, &flat).mean_axis(Axis(0)).unwrap();
        worst_mean = worst_mean.max((&pooled - &mean).mapv(f64::abs).fold(0.0, |m: f64, &v| m.max(v)));
    }
    let ok = worst_sum <= 1e-9 && worst_perm <= 1e-9 && worst_mean <= 1e-9;
    report(
        "tap properties",
        ok,
        &format!("|sum w - 1| {worst_sum:.1e}, permutation {worst_perm:.1e}, equal-time vs mean {worst_mean:.1e}"),
    );
}

#[test]
fn preprocessing_contracts() {
    let _serial = serial();
    let mut failures = Vec::new();
    for s in 0..20u64 {
        let f = random_frame(s, 500, 3.0);
        let once = range_crop(&f, 1.3);
        if range_crop(&once, 1.3) != once {
            failures.push(format!("crop not idempotent (seed {s})"));
        }
    }
    for n in [4096, 4097, 6000, 20_000] {
        let f = random_frame(n as u64, n, 1.0);
        let d = uniform_downsample(&f, 4096, 7).unwrap();
        if d.len() != 4096 {
            failures.push(format!("downsample of {n} gave {}", d.len()));
        }
        if uniform_downsample(&f, 4096, 7).unwrap() != d {
            failures.push(format!("downsample of {n} not deterministic"));
        }
    }
    let frames: Vec<PointCloudFrame> = (0..3).map(|i| PointCloudFrame::new(0.1 * i as f64, random_frame(i, 300, 1.0).points)).collect();
    let agg = temporal_aggregate(&frames, 600, 3, 5).unwrap();
    if temporal_aggregate(&frames, 600, 3, 5).unwrap() != agg {
        failures.push("aggregation not deterministic".into());
    }
    let mut times: Vec<f64> = agg.points.iter().map(|p| p.t_rel).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times != [0.0, 0.5, 1.0] {
        failures.push(format!("t_rel values {times:?}"));
    }
    report(
        "preprocessing contracts",
        failures.is_empty(),
        &if failures.is_empty() { "crop idempotent, 4096-point downsample, seeded determinism, t_rel {0, 0.5, 1}".into() } else { failures.join("; ") },
    );
}

#[test]
fn sensor_geometry() {
    let _serial = serial();
    let t0 = Instant::now();
    // Objects all around and above/below the sensor.
    let mut prims = Vec::new();
    for i in 0..12 {
        let az = (i as f64 * 30.0).to_radians();
        let c = Vec3::new(2.0 * az.cos(), 2.0 * az.sin(), [-1.0, 0.0, 1.5, 3.0][i % 4]);
        prims.push(Primitive::new(Shape::Sphere { center: c, radius: 0.6 }, i as u32 + 1));
    }
    prims.push(Primitive::new(
        Shape::Cuboid { min: Vec3::new(-6.0, -6.0, -3.0), max: Vec3::new(6.0, 6.0, -2.9) },
        100,
    ));
    let scene = Scene::new(prims).unwrap();
    let lidar = LidarModel::default();
    let mut total = 0usize;
    let mut outside = 0usize;
    for k in 0..5 {
        let f = lidar.frame(&scene, &Transform::identity(), k, 0.1 * k as f64);
        total += f.len();
        outside += f
            .points
            .iter()
            .filter(|p| {
                let e = elevation_deg(p);
                !(-7.0 - 1e-9..=52.0 + 1e-9).contains(&e)
            })
            .count();
    }

    let center = Vec3::new(0.1, -0.05, 1.5);
    let sphere = Scene::new(vec![Primitive::new(Shape::Sphere { center, radius: 0.3 }, 1)]).unwrap();
    let cam = DepthCameraModel::default();
    let img = depth_image(&sphere, &Transform::identity(), &cam);
    let cloud = depth_to_pointcloud(&img, &cam, 0.0).unwrap();
    let residual = cloud.points.iter().map(|p| ((p - center).norm() - 0.3).abs()).fold(0.0, f64::max);

    // Coverage of 10 x 10 degree cells by scan directions, for a sparse model too.
    let mut uncovered = Vec::new();
    for per_frame in [20_000usize, 500] {
        let m = LidarModel { points_per_frame: per_frame, ..LidarModel::default() };
        let rows = ((m.elevation_max_deg - m.elevation_min_deg) / 10.0).ceil() as usize;
        let mut hit = vec![false; 36 * rows];
        for k in 0..50 {
            for d in m.scan_directions(k) {
                let a = ((azimuth_deg(&d).rem_euclid(360.0)) / 10.0) as usize % 36;
                let r = (((elevation_deg(&d) - m.elevation_min_deg) / 10.0) as usize).min(rows - 1);
                hit[r * 36 + a] = true;
            }
        }
        let missing = hit.iter().filter(|h| !**h).count();
        if missing > 0 {
            uncovered.push(format!("{per_frame} rays/frame: {missing} cells missed"));
        }
    }
    let elapsed = t0.elapsed();
    let ok = total > 0 && outside == 0 && residual < 1e-4 && cloud.len() > 100 && uncovered.is_empty() && elapsed < Duration::from_secs(120);
    report(
        "sensor geometry",
        ok,
        &format!(
            "{outside}/{total} returns outside [-7, 52] deg, depth residual {residual:.1e} over {} px, coverage {} in {elapsed:.1?}",
            cloud.len(),
            if uncovered.is_empty() { "complete".to_string() } else { uncovered.join(", ") }
        ),
    );
}

#[test]
fn ik_reaches_fk_targets() {
    let _serial = serial();
    let t0 = Instant::now();
    let arm = reference_left_arm();
    let (lo, hi) = (arm.lower(), arm.upper());
    let home = HOME_ARM.to_vec();
    let mut rng = seeded(2024);
    let mut good = 0;
    let mut inside = true;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let q_true: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l..*h)).collect();
        let target = arm.forward_kinematics(&q_true).unwrap();
        let mut problem = IkProblem::new(&arm, target, home.clone(), home.clone());
        // Tracking terms only: the regularizers pull the optimum off the target.
        problem.weights = IkWeights { reg: 0.0, smooth: 0.0, ..IkWeights::default() };
        let res = solve_ik_restarts(&problem, &home, 20, 1e-12, 7).unwrap();
        let (dp, _) = arm.forward_kinematics(&res.q_star).unwrap().distance(&target);
        worst = worst.max(dp);
        good += usize::from(dp < 1e-3);
        inside &= res.q_star.iter().zip(lo.iter().zip(&hi)).all(|(q, (l, h))| l < q && q < h);
    }
    let elapsed = t0.elapsed();
    let ok = good >= 95 && inside && elapsed < Duration::from_secs(60);
    report(
        "ik on fk targets",
        ok,
        &format!("{good}/100 within 1e-3 m (worst {worst:.1e}), strictly inside bounds {inside}, {elapsed:.1?}"),
    );
}

#[test]
fn diffusion_sanity() {
    let _serial = serial();
    let t0 = Instant::now();
    let sched = NoiseSchedule::default();
    let mut rng = seeded(71);
    let obs = Observation::new(
        (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..PROPRIO_DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let a0 = ActionChunk::new(Array2::from_shape_fn((2, ACTION_DIM), |_| rng.random_range(-0.9..0.9))).unwrap();
    let mut den = Denoiser::new(2, 4, &[128, 128], 16, &mut seeded(70)).unwrap();
    let (steps, batch, lr) = (2000, 32, 5e-3);
    let mut adam = Adam::new(lr, den.param_count());
    let tile = |n: usize| {
        (
            a0.flatten().insert_axis(Axis(0)).broadcast((n, 2 * ACTION_DIM)).unwrap().to_owned(),
            obs.feature.view().insert_axis(Axis(0)).broadcast((n, 4)).unwrap().to_owned(),
            obs.proprio.view().insert_axis(Axis(0)).broadcast((n, PROPRIO_DIM)).unwrap().to_owned(),
        )
    };
    let (a0b, fb, pb) = tile(batch);
    for step in 0..steps {
        let ks: Vec<usize> = (0..batch).map(|_| rng.random_range(1..=sched.steps())).collect();
        let eps = standard_normal(batch, 2 * ACTION_DIM, &mut rng);
        let out = denoise_loss(&den, &sched, a0b.view(), fb.view(), pb.view(), &ks, eps.view(), LossWeighting::Noise).unwrap();
        adam.update_with_lr(&mut den, &out.grad, cosine_lr(lr, step, steps));
    }
    let n = 10 * sched.steps();
    let (a0b, fb, pb) = tile(n);
    let ks: Vec<usize> = (0..n).map(|i| 1 + i % sched.steps()).collect();
    let eps = standard_normal(n, 2 * ACTION_DIM, &mut rng);
    let loss = denoise_loss(&den, &sched, a0b.view(), fb.view(), pb.view(), &ks, eps.view(), LossWeighting::Noise)
        .unwrap()
        .loss;
    let recover = (0..5)
        .map(|s| (&sample(&den, &sched, &obs, s).unwrap().view() - &a0.view()).mapv(f64::abs).fold(0.0, |m: f64, &v| m.max(v)))
        .fold(0.0, f64::max);

    // Two-mode toy: a cue in the feature selects one of two chunks.
    let mode = |cue: bool| Array1::from_elem(2 * ACTION_DIM, if cue { 0.6 } else { -0.6 });
    let cue_obs = |cue: bool| {
        let mut f = Array1::zeros(4);
        f[0] = if cue { 1.0 } else { -1.0 };
        Observation::new(f, Array1::zeros(PROPRIO_DIM)).unwrap()
    };
    let mut toy = Denoiser::new(2, 4, &[64, 64], 16, &mut seeded(0)).unwrap();
    let mut adam = Adam::new(3e-3, toy.param_count());
    let mut rng = seeded(1);
    let (b, toy_steps) = (32, 1500);
    for step in 0..toy_steps {
        let mut a = Array2::zeros((b, 2 * ACTION_DIM));
        let mut f = Array2::zeros((b, 4));
        for r in 0..b {
            let c = rng.random_bool(0.5);
            a.row_mut(r).assign(&mode(c));
            f[[r, 0]] = if c { 1.0 } else { -1.0 };
        }
        let ks: Vec<usize> = (0..b).map(|_| rng.random_range(1..=sched.steps())).collect();
        let eps = standard_normal(b, 2 * ACTION_DIM, &mut rng);
        let p = Array2::zeros((b, PROPRIO_DIM));
        let out = denoise_loss(&toy, &sched, a.view(), f.view(), p.view(), &ks, eps.view(), LossWeighting::MinSnr(1.0)).unwrap();
        adam.update_with_lr(&mut toy, &out.grad, cosine_lr(3e-3, step, toy_steps));
    }
    let mut correct = 0;
    let draws = 50;
    for cue in [false, true] {
        for s in 0..draws {
            let x = sample(&toy, &sched, &cue_obs(cue), s).unwrap().flatten();
            let d_right = (&x - &mode(cue)).mapv(|v| v * v).sum();
            let d_wrong = (&x - &mode(!cue)).mapv(|v| v * v).sum();
            correct += usize::from(d_right < d_wrong);
        }
    }
    let frac = correct as f64 / (2 * draws) as f64;
    let elapsed = t0.elapsed();
    let ok = loss < 1e-3 && recover < 1e-2 && frac >= 0.9 && elapsed < Duration::from_secs(600);
    report(
        "diffusion sanity",
        ok,
        &format!("overfit loss {loss:.2e}, sample error {recover:.1e}, correct mode {:.0}% in {elapsed:.1?}", 100.0 * frac),
    );
}

fn bc_success(task: TaskId, sensor: SensorKind) -> (omnidp::harness::Metrics, omnidp::harness::Metrics) {
    let cfg = RunConfig {
        task,
        sensor,
        ..RunConfig::default()
    };
    let (episodes, _) = collect(&cfg.collect_config()).unwrap();
    assert_eq!(episodes.len(), cfg.episodes);
    let trained = train(&cfg.train_config(), &episodes).unwrap();
    let m = evaluate(&trained.policy, &cfg.task_spec(), sensor, &cfg.sensor_settings(), cfg.eval_trials, cfg.eval_seed).unwrap();
    let expert = evaluate_expert(
        &cfg.task_spec(),
        sensor,
        &cfg.sensor_settings(),
        &cfg.expert_config(),
        1,
        cfg.eval_trials,
        cfg.eval_seed,
    )
    .unwrap();
    (m, expert)
}

#[test]
fn ov_reproduction() {
    let _serial = serial();
    let t0 = Instant::now();
    let (ov_lidar, e1) = bc_success(TaskId::PickOv, SensorKind::Lidar);
    let (ov_depth, e2) = bc_success(TaskId::PickOv, SensorKind::DepthCam);
    let (iv_lidar, e3) = bc_success(TaskId::Pick, SensorKind::Lidar);
    let (iv_depth, e4) = bc_success(TaskId::Pick, SensorKind::DepthCam);
    let elapsed = t0.elapsed();
    let experts_ok = [e1, e2, e3, e4].iter().all(|e| e.successes >= 18);
    let ok = ov_lidar.success_rate() >= 0.7
        && ov_depth.success_rate() <= 0.1
        && iv_lidar.success_rate() >= 0.5
        && iv_depth.success_rate() >= 0.5
        && experts_ok
        && elapsed < Duration::from_secs(1800);
    report(
        "ov reproduction",
        ok,
        &format!(
            "pick-ov lidar {}/{}, depthcam {}/{}; pick lidar {}/{}, depthcam {}/{}; experts {}/{}/{}/{} in {elapsed:.0?}",
            ov_lidar.successes,
            ov_lidar.trials,
            ov_depth.successes,
            ov_depth.trials,
            iv_lidar.successes,
            iv_lidar.trials,
            iv_depth.successes,
            iv_depth.trials,
            e1.successes,
            e2.successes,
            e3.successes,
            e4.successes
        ),
    );
}

#[test]
fn obstacle_avoidance() {
    let _serial = serial();
    let (lidar, e1) = bc_success(TaskId::ObstacleOv, SensorKind::Lidar);
    let (depth, e2) = bc_success(TaskId::ObstacleOv, SensorKind::DepthCam);
    let experts_ok = e1.successes >= 18 && e1.collisions == 0 && e2.successes >= 18 && e2.collisions == 0;
    let ok = lidar.collision_rate() < depth.collision_rate() && depth.collision_rate() >= 0.7 && experts_ok;
    report(
        "obstacle avoidance",
        ok,
        &format!(
            "collisions lidar {}/{}, depthcam {}/{} (success {} / {}); experts {} / {} with {} / {} collisions",
            lidar.collisions,
            lidar.trials,
            depth.collisions,
            depth.trials,
            lidar.successes,
            depth.successes,
            e1.successes,
            e2.successes,
            e1.collisions,
            e2.collisions
        ),
    );
}

#[test]
fn ablation_ordering() {
    let _serial = serial();
    let cfg = RunConfig {
        task: TaskId::FlickerOv,
        ..RunConfig::default()
    };
    let acfg = AblationConfig {
        task: cfg.task_spec(),
        settings: cfg.sensor_settings(),
        expert: cfg.expert_config(),
        train: cfg.train_config(),
        episodes: cfg.episodes,
        collect_seed: cfg.seed,
        trials: cfg.eval_trials,
        eval_seed: cfg.eval_seed,
    };
    let rows = ablation_suite(&acfg).unwrap();
    let get = |v: Variant| rows.iter().find(|r| r.variant == v).unwrap().metrics;
    let (full, no_tap, no_omni) = (get(Variant::Full), get(Variant::NoTap), get(Variant::NoOmni));
    let ok = full.successes >= no_tap.successes && no_tap.successes > no_omni.successes && no_omni.success_rate() <= 0.1;
    report(
        "ablation ordering",
        ok,
        &format!(
            "flicker-ov success full {}/{}, no-tap {}/{}, no-omni {}/{}",
            full.successes, full.trials, no_tap.successes, no_tap.trials, no_omni.successes, no_omni.trials
        ),
    );
}

#[test]
fn format_round_trips() {
    let _serial = serial();
    let mut failures = Vec::new();

    let mut cc = RunConfig { task: TaskId::HandoverOv, episodes: 2, ..RunConfig::default() }.collect_config();
    cc.settings.lidar.points_per_frame = 2000;
    let (episodes, _) = collect(&cc).unwrap();
    for ep in &episodes {
        let mut bytes = Vec::new();
        write_episode(ep, &mut bytes).unwrap();
        let back = read_episode(bytes.as_slice()).unwrap();
        let mut again = Vec::new();
        write_episode(&back, &mut again).unwrap();
        if &back != ep || again != bytes {
            failures.push("episode".to_string());
        }
    }

    let cfg = RunConfig { train_steps: 5, batch: 4, ..RunConfig::default() };
    let trained = train(&cfg.train_config(), &episodes).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&trained.policy, &mut bytes).unwrap();
    let back = read_checkpoint(bytes.as_slice()).unwrap();
    let mut again = Vec::new();
    write_checkpoint(&back, &mut again).unwrap();
    if back != trained.policy || again != bytes {
        failures.push("checkpoint".into());
    }

    let custom = RunConfig {
        task: TaskId::ObstacleOv,
        sensor: SensorKind::DepthCam,
        horizon: 6,
        execute: 3,
        learning_rate: 2.5e-4,
        seed: 99,
        ..RunConfig::default()
    };
    for c in [RunConfig::default(), custom] {
        let text = c.render();
        let parsed = RunConfig::parse(&text).unwrap();
        if parsed != c || parsed.render() != text {
            failures.push("config".into());
        }
    }

    let csv = "label,trials,successes,collisions,success_rate,collision_rate\nfull,20,15,1,0.75,0.05\nno-omni,20,0,0,0,0\n";
    if plot_csv(csv).unwrap() != plot_csv(csv).unwrap() {
        failures.push("svg".into());
    }
    let losses = omnidp::harness::loss_csv(&trained.losses);
    if plot_csv(&losses).unwrap() != plot_csv(&losses).unwrap() {
        failures.push("loss svg".into());
    }
    report(
        "format round trips",
        failures.is_empty(),
        &if failures.is_empty() { "episode, checkpoint, config and svg byte-identical".into() } else { format!("mismatch: {}", failures.join(", ")) },
    );
}

//! Acceptance suite. Runs every criterion in order and prints one
//! `PASS`/`FAIL` line each; exits non-zero if any criterion fails.
//!
//! `cargo test --test acceptance -- <substring>` runs only the criteria whose
//! name contains the substring.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use prefrl_core::autodiff::Matrix;
use prefrl_core::envs::{EnvKind, TaskSpec};
use prefrl_core::harness::metrics::{strip_timestamps_csv, strip_timestamps_jsonl, METRICS_CSV, METRICS_JSONL};
use prefrl_core::harness::{
    eval_preference_accuracy, near_identical_final_state_pairs, random_policy_pairs, random_policy_return, run_varp,
    HarnessConfig, Labeler, MetricsRow, ProviderKind, RunObserver, RunOutcome, SketchContext, CHECKPOINT_DIR,
};
use prefrl_core::model::{
    segment_return_gt, ActionVec, EpisodeId, ReplayBuffer, StateVec, StepReward, TrainingBatch, TrajectorySegment,
    Transition,
};
use prefrl_core::nn::{Activation, Mlp, OutputActivation};
use prefrl_core::preference::{
    FinalStateTeacher, PreferenceLabel, PreferenceProvider, PreferenceRecord, LabelSource, ScriptedTeacher,
    TeacherConfig, VlmClient, VlmConfig,
};
use prefrl_core::reward::{
    bt_prob, bt_prob_from_returns, loss_agent, loss_vlm, varp_loss_and_grads, varp_loss_values, RewardModel,
};
use prefrl_core::sac::{standard_normal_matrix, SacAgent, SacConfig};
use prefrl_core::sketch::{pinhole, CameraModel, Z_NEAR};
use prefrl_core::{Error, Tape};
use prefrl_server::stub::CHAT_PATH;
use prefrl_server::{stub_router, BackgroundServer, Fault, StubConfig, StubState};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    standard_normal_matrix(1, n, r).into_vec()
}

fn random_segment(r: &mut ChaCha8Rng, len: usize, sd: usize, ad: usize, id: u64) -> TrajectorySegment {
    let mut s = normal_vec(r, sd);
    let ts = (0..len)
        .map(|_| {
            let a: Vec<f64> = (0..ad).map(|_| r.random_range(-1.0..1.0)).collect();
            let next = normal_vec(r, sd);
            Transition::new(
                StateVec(std::mem::replace(&mut s, next.clone())),
                ActionVec::new(a).unwrap(),
                StateVec(next),
                false,
                r.random_range(-1.0..1.0),
            )
        })
        .collect();
    TrajectorySegment::new(ts, EpisodeId(id), 0).unwrap()
}

/// Small random net with tanh or ReLU hidden layers.
fn small_net(r: &mut ChaCha8Rng, input: usize, output: usize, out_act: OutputActivation) -> Mlp<f64> {
    let act = if r.random_bool(0.5) { Activation::Tanh } else { Activation::Relu };
    let depth = r.random_range(1..=2);
    let mut sizes = vec![input];
    sizes.extend((0..depth).map(|_| r.random_range(2..=6)));
    sizes.push(output);
    Mlp::new(&sizes, act, out_act, r).unwrap()
}

// ---------------------------------------------------------------------------
// Bradley-Terry

struct Shifted<'a> {
    inner: &'a RewardModel,
    c: f64,
}

impl StepReward for Shifted<'_> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn evaluate_rows(&self, rows: &Matrix<f64>) -> prefrl_core::Result<Vec<f64>> {
        Ok(self.inner.evaluate_rows(rows)?.into_iter().map(|v| v + self.c).collect())
    }
}

fn bt_correctness() -> Outcome {
    let tie = bt_prob_from_returns(0.0f64, 0.0);
    let gap1 = bt_prob_from_returns(1.0f64, 0.0);
    let tie_shifted = bt_prob_from_returns(3.25f64, 3.25);
    let examples_ok = (tie - 0.5).abs() <= 1e-9 && (gap1 - 0.731058579).abs() <= 1e-9 && (tie_shifted - 0.5).abs() <= 1e-9;

    let mut r = rng(11);
    let mut worst_complement = 0.0f64;
    let mut worst_shift = 0.0f64;
    for i in 0..1000u64 {
        let (sd, ad) = (r.random_range(1..=4), r.random_range(1..=3));
        let model = RewardModel::new(sd, ad, &[r.random_range(2..=8)], Activation::Tanh, &mut r).unwrap();
        let len = r.random_range(1..=20);
        let a = random_segment(&mut r, len, sd, ad, 2 * i);
        let b = random_segment(&mut r, len, sd, ad, 2 * i + 1);
        let p_ab = bt_prob(&model, &a, &b).unwrap();
        let p_ba = bt_prob(&model, &b, &a).unwrap();
        worst_complement = worst_complement.max((p_ab + p_ba - 1.0).abs());
        let shifted = Shifted {
            inner: &model,
            c: r.random_range(-5.0..5.0),
        };
        let p_shift = bt_prob(&shifted, &a, &b).unwrap();
        worst_shift = worst_shift.max((p_shift - p_ab).abs());
    }
    check(
        examples_ok && worst_complement <= 1e-12 && worst_shift <= 1e-12,
        format!(
            "tie {tie:.12}, gap1 {gap1:.12}; 1000 pairs: max |P(a,b)+P(b,a)-1| {worst_complement:.2e}, max shift drift {worst_shift:.2e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// Gradients

const FD_STEP: f64 = 1e-6;

/// `‖g − fd‖∞ / ‖fd‖∞` (denominator floored at 1e-8).
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = numeric.iter().map(|n| n.abs()).fold(0.0, f64::max).max(1e-8);
    diff / scale
}

/// Central differences of `f` over every parameter of `net`.
fn fd_gradient(net: &mut Mlp<f64>, f: &mut dyn FnMut(&Mlp<f64>) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for b in 0..net.params().len() {
        for i in 0..net.params()[b].values.len() {
            let orig = net.params()[b].values[i];
            net.params_mut()[b].values[i] = orig + FD_STEP;
            let up = f(net);
            net.params_mut()[b].values[i] = orig - FD_STEP;
            let down = f(net);
            net.params_mut()[b].values[i] = orig;
            out.push((up - down) / (2.0 * FD_STEP));
        }
    }
    out
}

fn flat(mats: &[Matrix<f64>]) -> Vec<f64> {
    mats.iter().flat_map(|m| m.data().iter().copied()).collect()
}

struct RewardCase {
    model: RewardModel,
    sd: usize,
    prefs: Vec<PreferenceRecord>,
    trajs: Vec<TrajectorySegment>,
    lambda: f64,
}

fn reward_case(seed: u64) -> RewardCase {
    let mut r = rng(seed);
    let (sd, ad) = (r.random_range(1..=4), r.random_range(1..=3));
    let net = small_net(&mut r, sd + ad, 1, OutputActivation::Tanh);
    let model = RewardModel::from_net(net, sd).unwrap();
    let seg_len = r.random_range(1..=5);
    let prefs = (0..r.random_range(1..=4))
        .map(|k| PreferenceRecord {
            seg_a: Arc::new(random_segment(&mut r, seg_len, sd, ad, 2 * k)),
            seg_b: Arc::new(random_segment(&mut r, seg_len, sd, ad, 2 * k + 1)),
            y: r.random_range(0..=1),
            source: LabelSource::Scripted,
            created_at: 0.0,
        })
        .collect();
    let trajs = (0..r.random_range(1..=4))
        .map(|k| {
            let len = r.random_range(1..=6);
            random_segment(&mut r, len, sd, ad, 100 + k)
        })
        .collect();
    RewardCase {
        model,
        sd,
        prefs,
        trajs,
        lambda: r.random_range(0.05..1.0),
    }
}

fn grads_of(model: &RewardModel, tape: &Tape, loss: prefrl_core::autodiff::Var, vars: &prefrl_core::nn::MlpVars) -> Vec<f64> {
    let g = tape.backward(loss).unwrap();
    let mats: Vec<Matrix<f64>> = model
        .net()
        .params()
        .iter()
        .zip(vars.vars())
        .map(|(p, &v)| g.get_or_zeros(v, p.rows, p.cols))
        .collect();
    flat(&mats)
}

fn reward_fd(case: &RewardCase, value: impl Fn(&RewardModel) -> f64) -> Vec<f64> {
    let mut net = case.model.net().clone();
    let sd = case.sd;
    fd_gradient(&mut net, &mut |n| value(&RewardModel::from_net(n.clone(), sd).unwrap()))
}

fn sac_case(seed: u64) -> (SacAgent, TrainingBatch, Matrix<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let (sd, ad) = (r.random_range(1..=4), r.random_range(1..=3));
    let actor = small_net(&mut r, sd, 2 * ad, OutputActivation::None);
    let critics = [
        small_net(&mut r, sd + ad, 1, OutputActivation::None),
        small_net(&mut r, sd + ad, 1, OutputActivation::None),
    ];
    let cfg = SacConfig {
        init_log_alpha: r.random_range(-3.0..0.5),
        ..SacConfig::default()
    };
    let agent = SacAgent::from_parts(actor, critics, cfg, sd, ad).unwrap();
    let n = r.random_range(1..=6);
    let actions: Vec<f64> = (0..n * ad).map(|_| r.random_range(-1.0..1.0)).collect();
    let batch = TrainingBatch {
        states: standard_normal_matrix(n, sd, &mut r),
        actions: Matrix::from_vec(n, ad, actions).unwrap(),
        rewards: normal_vec(&mut r, n),
        next_states: standard_normal_matrix(n, sd, &mut r),
        dones: (0..n).map(|_| if r.random_bool(0.2) { 1.0 } else { 0.0 }).collect(),
    };
    let noise = standard_normal_matrix(n, ad, &mut r);
    let targets = normal_vec(&mut r, n);
    (agent, batch, noise, targets)
}

fn gradient_suite() -> Outcome {
    const CONFIGS: u64 = 100;
    let mut worst = [0.0f64; 5];
    for c in 0..CONFIGS {
        let case = reward_case(1000 + c);
        let prefs: Vec<&PreferenceRecord> = case.prefs.iter().collect();
        let trajs: Vec<&TrajectorySegment> = case.trajs.iter().collect();

        let mut tape = Tape::new();
        let vars = case.model.net().bind(&mut tape);
        let l = loss_vlm(&mut tape, &case.model, &vars, &prefs).unwrap();
        let g = grads_of(&case.model, &tape, l, &vars);
        let fd = reward_fd(&case, |m| varp_loss_values(m, &prefs, &trajs, 0.0).unwrap().vlm);
        worst[0] = worst[0].max(relative_error(&g, &fd));

        let mut tape = Tape::new();
        let vars = case.model.net().bind(&mut tape);
        let l = loss_agent(&mut tape, &case.model, &vars, &trajs, case.lambda).unwrap();
        let g = grads_of(&case.model, &tape, l, &vars);
        let fd = reward_fd(&case, |m| varp_loss_values(m, &prefs, &trajs, case.lambda).unwrap().agent);
        worst[1] = worst[1].max(relative_error(&g, &fd));

        let (_, mats) = varp_loss_and_grads(&case.model, &prefs, &trajs, case.lambda).unwrap();
        let fd = reward_fd(&case, |m| varp_loss_values(m, &prefs, &trajs, case.lambda).unwrap().total);
        worst[2] = worst[2].max(relative_error(&flat(&mats), &fd));

        let (mut agent, batch, noise, targets) = sac_case(5000 + c);

        let k = (c % 2) as usize;
        let mut tape = Tape::new();
        let vars = agent.critics[k].bind(&mut tape);
        let l = agent.critic_loss(&mut tape, k, &vars, &batch, &targets).unwrap();
        let g = tape.backward(l).unwrap();
        let analytic: Vec<f64> = agent.critics[k]
            .params()
            .iter()
            .zip(vars.vars())
            .flat_map(|(p, &v)| g.get_or_zeros(v, p.rows, p.cols).into_vec())
            .collect();
        let sa = Matrix::concat_cols(&[&batch.states, &batch.actions]);
        let fd = fd_gradient(&mut agent.critics[k], &mut |net| {
            let q = net.predict(&sa).unwrap();
            q.data().iter().zip(&targets).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / targets.len() as f64
        });
        worst[3] = worst[3].max(relative_error(&analytic, &fd));

        let mut tape = Tape::new();
        let vars = agent.actor.bind(&mut tape);
        let (l, _) = agent.actor_loss(&mut tape, &vars, &batch.states, &noise).unwrap();
        let g = tape.backward(l).unwrap();
        let analytic: Vec<f64> = agent
            .actor
            .params()
            .iter()
            .zip(vars.vars())
            .flat_map(|(p, &v)| g.get_or_zeros(v, p.rows, p.cols).into_vec())
            .collect();
        let mut actor = agent.actor.clone();
        let alpha = agent.alpha();
        let fd = fd_gradient(&mut actor, &mut |net| {
            agent.actor = net.clone();
            let (a, logp) = agent.sample_with_noise(&batch.states, &noise).unwrap();
            let sa = Matrix::concat_cols(&[&batch.states, &a]);
            let q1 = agent.critics[0].predict(&sa).unwrap();
            let q2 = agent.critics[1].predict(&sa).unwrap();
            let n = logp.len();
            (0..n).map(|i| alpha * logp[i] - q1.data()[i].min(q2.data()[i])).sum::<f64>() / n as f64
        });
        worst[4] = worst[4].max(relative_error(&analytic, &fd));
    }
    let names = ["loss_vlm", "loss_agent", "loss_varp", "critic", "actor"];
    let detail = names
        .iter()
        .zip(worst)
        .map(|(n, w)| format!("{n} {w:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(
        worst.iter().all(|&w| w < 1e-4),
        format!("max relative error over {CONFIGS} configs each: {detail}"),
    )
}

// ---------------------------------------------------------------------------
// Projection

/// Homogeneous `K [R | −R c]` projection, built without the crate's camera
/// code. Returns pixel coordinates and depth.
struct Oracle {
    p: [[f64; 4]; 3],
}

impl Oracle {
    fn new(cam: &CameraModel) -> Self {
        let c = cam.position;
        let mut f = [cam.look_at[0] - c[0], cam.look_at[1] - c[1], cam.look_at[2] - c[2]];
        let fl = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
        f.iter_mut().for_each(|v| *v /= fl);
        // Gram-Schmidt: the part of `up` orthogonal to the view axis.
        let d = cam.up[0] * f[0] + cam.up[1] * f[1] + cam.up[2] * f[2];
        let mut u = [cam.up[0] - d * f[0], cam.up[1] - d * f[1], cam.up[2] - d * f[2]];
        let ul = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        u.iter_mut().for_each(|v| *v /= ul);
        let r = [f[1] * u[2] - f[2] * u[1], f[2] * u[0] - f[0] * u[2], f[0] * u[1] - f[1] * u[0]];
        // Image v grows downward, so the second row of K negates camera-up.
        let rot = [r, u, f];
        let k = [
            [cam.focal_px, 0.0, cam.principal_point[0]],
            [0.0, -cam.focal_px, cam.principal_point[1]],
            [0.0, 0.0, 1.0],
        ];
        let mut rt = [[0.0; 4]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rt[i][j] = rot[i][j];
            }
            rt[i][3] = -(rot[i][0] * c[0] + rot[i][1] * c[1] + rot[i][2] * c[2]);
        }
        let mut p = [[0.0; 4]; 3];
        for i in 0..3 {
            for j in 0..4 {
                p[i][j] = (0..3).map(|m| k[i][m] * rt[m][j]).sum();
            }
        }
        Self { p }
    }

    fn project(&self, x: [f64; 3]) -> ([f64; 2], f64) {
        let h = [x[0], x[1], x[2], 1.0];
        let row = |i: usize| (0..4).map(|j| self.p[i][j] * h[j]).sum::<f64>();
        let w = row(2);
        ([row(0) / w, row(1) / w], w)
    }
}

fn random_camera(r: &mut ChaCha8Rng) -> CameraModel {
    loop {
        let cam = CameraModel {
            position: [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(0.2..3.0)],
            look_at: [r.random_range(-0.5..0.5), r.random_range(-0.5..0.5), 0.0],
            up: [0.0, 0.0, 1.0],
            focal_px: r.random_range(40.0..200.0),
            principal_point: [r.random_range(50.0..78.0), r.random_range(50.0..78.0)],
            image_size: (128, 128),
        };
        if cam.validate().is_ok() {
            return cam;
        }
    }
}

fn in_frame(px: [f64; 2], cam: &CameraModel) -> bool {
    px[0] >= 0.0 && px[1] >= 0.0 && px[0] < cam.image_size.0 as f64 && px[1] < cam.image_size.1 as f64
}

fn projection_oracle() -> Outcome {
    let mut r = rng(21);
    let mut worst_px = 0.0f64;
    let mut matched = 0;
    while matched < 1000 {
        let cam = if matched % 10 == 0 { CameraModel::oblique() } else { random_camera(&mut r) };
        let x = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-1.0..2.0)];
        let (want, depth) = Oracle::new(&cam).project(x);
        if depth <= Z_NEAR || !in_frame(want, &cam) {
            continue;
        }
        let Some(got) = cam.project_point(x) else {
            return Err(format!("in-frustum point {x:?} was culled"));
        };
        worst_px = worst_px.max((got[0] - want[0]).abs()).max((got[1] - want[1]).abs());
        matched += 1;
    }

    // Straight world lines stay straight.
    let mut worst_line = 0.0f64;
    let mut lines = 0;
    while lines < 200 {
        let cam = random_camera(&mut r);
        let a = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(0.0..1.0)];
        let b = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(0.0..1.0)];
        let pts: Vec<[f64; 3]> = (0..10)
            .map(|i| {
                let t = i as f64 / 9.0;
                [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
            })
            .collect();
        let proj: Option<Vec<[f64; 2]>> = cam.project_trajectory(&pts).into_iter().collect();
        let Some(proj) = proj else { continue };
        if !proj.iter().all(|&p| in_frame(p, &cam)) {
            continue;
        }
        let (p0, p1) = (proj[0], proj[9]);
        let (dx, dy) = (p1[0] - p0[0], p1[1] - p0[1]);
        let len = (dx * dx + dy * dy).sqrt();
        if len < 1.0 {
            continue;
        }
        for p in &proj[1..9] {
            let dist = ((p[0] - p0[0]) * dy - (p[1] - p0[1]) * dx).abs() / len;
            worst_line = worst_line.max(dist);
        }
        lines += 1;
    }

    // Culling: in front iff depth > Z_NEAR, checked on both sides of the camera.
    let mut cull_errors = 0;
    for _ in 0..1000 {
        let cam = random_camera(&mut r);
        let base = cam.basis();
        let depth = r.random_range(-2.0..2.0);
        let lateral = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let x: [f64; 3] = std::array::from_fn(|i| {
            cam.position[i] + depth * base.forward[i] + lateral[0] * base.right[i] + lateral[1] * base.up[i]
        });
        let (_, oracle_depth) = Oracle::new(&cam).project(x);
        if cam.project_point(x).is_some() != (oracle_depth > Z_NEAR) {
            cull_errors += 1;
        }
    }
    if cam_position_projects(&CameraModel::oblique()) {
        cull_errors += 1;
    }
    if pinhole([0.3, 0.1, -1.0], 100.0, [64.0, 64.0]).is_some() || pinhole([0.0, 0.0, 0.0], 100.0, [64.0, 64.0]).is_some() {
        cull_errors += 1;
    }

    check(
        worst_px <= 1e-9 && worst_line < 1e-9 && cull_errors == 0,
        format!(
            "1000 points max deviation {worst_px:.2e} px; 200 lines max collinearity residual {worst_line:.2e} px; culling mismatches {cull_errors}"
        ),
    )
}

fn cam_position_projects(cam: &CameraModel) -> bool {
    cam.project_point(cam.position).is_some()
}

// ---------------------------------------------------------------------------
// Teachers

fn scripted_teacher() -> Outcome {
    let spec = HarnessConfig::default().env_spec();
    let pairs = random_policy_pairs(&spec, 10_000, 31).map_err(|e| e.to_string())?;
    let gaps: Vec<f64> = pairs.iter().map(|(a, b)| segment_return_gt(a) - segment_return_gt(b)).collect();
    if gaps.contains(&0.0) {
        return Err("random pairs contained ground-truth ties".into());
    }
    let agree = |cfg: TeacherConfig| -> usize {
        let mut t = ScriptedTeacher::new(cfg).unwrap();
        pairs
            .iter()
            .zip(&gaps)
            .filter(|((a, b), &g)| {
                let want = if g > 0.0 { PreferenceLabel::PreferA } else { PreferenceLabel::PreferB };
                t.label(a, b).unwrap() == want
            })
            .count()
    };
    let exact = agree(TeacherConfig::default());
    let noisy = agree(TeacherConfig {
        flip_prob: 0.1,
        rng_seed: 32,
        ..TeacherConfig::default()
    });
    let flip = 1.0 - noisy as f64 / pairs.len() as f64;
    check(
        exact == pairs.len() && (0.08..=0.12).contains(&flip),
        format!("ε=0 agreement {exact}/{}; ε=0.1 flip fraction {flip:.4}", pairs.len()),
    )
}

fn information_gap() -> Outcome {
    let cfg = HarnessConfig::default();
    let spec = cfg.env_spec();
    let pairs = near_identical_final_state_pairs(&spec, 2000, 0.02, 41).map_err(|e| e.to_string())?;
    let mut full = ScriptedTeacher::new(TeacherConfig::default()).unwrap();
    let mut last = FinalStateTeacher::new(spec, TeacherConfig::default()).unwrap();
    let mut providers: [&mut dyn PreferenceProvider; 2] = [&mut full, &mut last];
    let report = eval_preference_accuracy(&mut providers, &pairs, None, &cfg.task_spec().unwrap(), 5)
        .map_err(|e| e.to_string())?;
    let acc = |i: usize| report[i].bin(0).and_then(|b| b.accuracy).unwrap_or(0.0);
    let (a_full, a_last) = (acc(0), acc(1));
    check(
        a_full - a_last >= 0.10,
        format!(
            "smallest-gap bin ({} pairs): full trajectory {:.1}% vs final state {:.1}% (+{:.1} points)",
            report[0].bin(0).map_or(0, |b| b.pairs),
            100.0 * a_full,
            100.0 * a_last,
            100.0 * (a_full - a_last)
        ),
    )
}

// ---------------------------------------------------------------------------
// Training runs

/// Budget shared by the long runs: 30 iterations × 10 episodes × 100 steps.
fn budget_config(kind: EnvKind, seed: u64, out: &Path) -> HarnessConfig {
    let mut cfg = HarnessConfig {
        seed,
        segment_len: Some(25),
        pairs_per_iter: 50,
        output_dir: out.to_path_buf(),
        ..HarnessConfig::default()
    };
    cfg.env.kind = kind;
    cfg.sac.batch_size = 128;
    cfg
}

/// Checks every relabel against a fresh evaluation of the reward.
#[derive(Default)]
struct RelabelProbe {
    checks: usize,
    compared: usize,
    mismatches: usize,
}

impl RunObserver for RelabelProbe {
    fn after_relabel(&mut self, it: usize, buffer: &ReplayBuffer, reward: Option<&RewardModel>) -> prefrl_core::Result<()> {
        let Some(reward) = reward else { return Ok(()) };
        let mut r = rng(0xACCE55 ^ it as u64);
        for i in index::sample(&mut r, buffer.len(), 50.min(buffer.len())) {
            let t = buffer.get(i).expect("sampled index");
            if t.learned_reward.to_bits() != reward.evaluate(&t.s, &t.a)?.to_bits() {
                self.mismatches += 1;
            }
            self.compared += 1;
        }
        self.checks += 1;
        Ok(())
    }
}

fn run_scripted(cfg: &HarnessConfig, observer: &mut dyn RunObserver) -> prefrl_core::Result<RunOutcome> {
    let mut teacher = ScriptedTeacher::new(cfg.teacher())?;
    run_varp(cfg, Labeler::Pairwise(&mut teacher), observer)
}

fn final_row(out: &RunOutcome) -> &MetricsRow {
    out.rows.last().expect("at least one iteration")
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let spec = HarnessConfig::default().env_spec();
    let random = random_policy_return(&spec, 100, 77).map_err(|e| e.to_string())?;
    let (mut succ, mut ret, mut steps) = (Vec::new(), Vec::new(), 0);
    let mut probe = RelabelProbe::default();
    for seed in 0..5 {
        let mut cfg = budget_config(EnvKind::PointReach, seed, &tmp.path().join(format!("s{seed}")));
        cfg.reward.lambda = 0.0;
        let out = run_scripted(&cfg, &mut probe).map_err(|e| e.to_string())?;
        let last = final_row(&out);
        succ.push(last.success_rate);
        ret.push(last.episode_return_gt);
        steps = steps.max(last.env_steps);
        println!(
            "    seed {seed}: success {:.2}, return {:.2}, misalignment {:.3}",
            last.success_rate, last.episode_return_gt, last.misalignment
        );
    }
    let (ms, mr) = (median(succ), median(ret));
    check(
        ms >= 0.8 && mr >= 3.0 * random && steps <= 100_000 && probe.mismatches == 0,
        format!(
            "median success {ms:.2}, median return {mr:.2} vs 3 x random {:.2} (random {random:.2}), {steps} env steps per run",
            3.0 * random
        ),
    )
}

fn regularization_direction() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut by_lambda = Vec::new();
    for lambda in [0.0, 0.1] {
        let mut mis = Vec::new();
        for seed in 0..5 {
            let mut cfg = budget_config(EnvKind::PushBox, seed, &tmp.path().join(format!("l{lambda}-s{seed}")));
            cfg.provider.kind = ProviderKind::Noisy;
            cfg.provider.flip_prob = Some(0.1);
            cfg.reward.lambda = lambda;
            let out = run_scripted(&cfg, &mut prefrl_core::harness::NoopObserver).map_err(|e| e.to_string())?;
            mis.push(final_row(&out).misalignment);
        }
        println!("    λ={lambda}: misalignment per seed {mis:.3?}");
        by_lambda.push(median(mis));
    }
    check(
        by_lambda[1] < by_lambda[0],
        format!("median misalignment λ=0.1 {:.3} vs λ=0 {:.3}", by_lambda[1], by_lambda[0]),
    )
}

fn relabel_consistency() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = budget_config(EnvKind::PushBox, 5, tmp.path());
    cfg.iterations = 6;
    cfg.sac.warmup_steps = 300;
    cfg.sac.updates_per_iter = Some(100);
    let mut probe = RelabelProbe::default();
    let out = run_scripted(&cfg, &mut probe).map_err(|e| e.to_string())?;
    let updates = out.rows.iter().filter(|r| r.get("loss_total") != 0.0).count();
    check(
        probe.checks == cfg.iterations && probe.compared == 50 * probe.checks && probe.mismatches == 0,
        format!(
            "{} relabels after {updates} reward updates, {} transitions compared, {} mismatches",
            probe.checks, probe.compared, probe.mismatches
        ),
    )
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for run in 0..2 {
        let mut cfg = budget_config(EnvKind::PointReach, 9, &tmp.path().join(format!("run{run}")));
        cfg.iterations = 4;
        cfg.episodes_per_iter = 4;
        cfg.sac.warmup_steps = 200;
        cfg.sac.updates_per_iter = Some(100);
        run_scripted(&cfg, &mut prefrl_core::harness::NoopObserver).map_err(|e| e.to_string())?;
        let read = |name: &str| std::fs::read_to_string(cfg.output_dir.join(name)).unwrap();
        let ckpt = std::fs::read(cfg.output_dir.join(CHECKPOINT_DIR).join("actor.json")).unwrap();
        texts.push((
            strip_timestamps_jsonl(&read(METRICS_JSONL)),
            strip_timestamps_csv(&read(METRICS_CSV)),
            ckpt,
        ));
    }
    let (a, b) = (&texts[0], &texts[1]);
    check(
        a.0 == b.0 && a.1 == b.1 && a.2 == b.2,
        format!(
            "jsonl identical {}, csv identical {}, actor checkpoint identical {} ({} bytes of metrics)",
            a.0 == b.0,
            a.1 == b.1,
            a.2 == b.2,
            a.0.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// Model labeler

fn vlm_client_contract() -> Outcome {
    let state = StubState::new(StubConfig::default());
    let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let server = BackgroundServer::start(addr, stub_router(state.clone())).map_err(|e| e.to_string())?;
    let vcfg = VlmConfig {
        endpoint_url: server.url(CHAT_PATH),
        max_retries: 2,
        timeout_secs: 5.0,
        ..VlmConfig::default()
    };
    let mut notes = Vec::new();

    // Parsing of every label value.
    let client = VlmClient::http(vcfg.clone()).map_err(|e| e.to_string())?;
    let obs = {
        let cfg = HarnessConfig::default();
        let ctx = SketchContext {
            spec: cfg.env_spec(),
            camera: cfg.camera.clone(),
            style: cfg.style.clone(),
            body: cfg.tracked_body,
        };
        let pairs = random_policy_pairs(&ctx.spec, 1, 3).map_err(|e| e.to_string())?;
        (ctx.sketch(&pairs[0].0).unwrap(), ctx.sketch(&pairs[0].1).unwrap())
    };
    let task = TaskSpec::for_env(EnvKind::PointReach);
    let mut parsed = Vec::new();
    for reply in ["Preference: 1", "Preference: 0", "Preference: -1"] {
        state.push_reply("analysis");
        state.push_reply(reply);
        parsed.push(client.query_two_stage(&obs.0, &obs.1, &task).map_err(|e| e.to_string())?.label.y());
    }
    let parse_ok = parsed == [1, 0, -1];
    notes.push(format!("parsed {parsed:?}"));

    // Retries on injected faults.
    state.push(Fault::Status(503));
    state.push(Fault::Status(429));
    let before = state.request_count();
    let out = client.query_two_stage(&obs.0, &obs.1, &task).map_err(|e| e.to_string())?;
    let retry_ok = out.retries == 2 && state.request_count() - before == 4;
    notes.push(format!("2 faults -> {} retries", out.retries));

    // −1 replies are discarded during a training run.
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = budget_config(EnvKind::PointReach, 3, tmp.path());
    cfg.iterations = 1;
    cfg.episodes_per_iter = 3;
    cfg.pairs_per_iter = 6;
    cfg.heldout_pairs = 20;
    cfg.eval_episodes = 2;
    cfg.vlm = vcfg.clone();
    cfg.provider.kind = ProviderKind::Vlm;
    let labels = ["Preference: 1", "Preference: -1", "Preference: 0", "Preference: -1", "Preference: 1", "Preference: 0"];
    for l in labels {
        state.push_reply("analysis");
        state.push_reply(l);
    }
    let mut provider = VlmClient::http(cfg.vlm.clone()).map_err(|e| e.to_string())?;
    let run = run_varp(&cfg, Labeler::Pairwise(&mut provider), &mut prefrl_core::harness::NoopObserver)
        .map_err(|e| e.to_string())?;
    let discard_ok = run.dataset.len() == 4 && run.dataset.discarded_count() == 2;
    notes.push(format!("run stored {} / discarded {}", run.dataset.len(), run.dataset.discarded_count()));

    // Egress: every request reached the loopback stub; remote endpoints are
    // refused before any connection is attempted.
    let expected = 3 * 2 + 4 + 2 * labels.len() as u64;
    let remote = VlmConfig {
        endpoint_url: "https://vlm.example.com/v1/chat/completions".into(),
        ..vcfg
    };
    let egress_ok = state.request_count() == expected
        && matches!(VlmClient::http(remote), Err(Error::RemoteEndpointBlocked(_)));
    notes.push(format!("{} requests, all to {}", state.request_count(), server.addr()));

    server.shutdown().map_err(|e| e.to_string())?;
    check(parse_ok && retry_ok && discard_ok && egress_ok, notes.join("; "))
}

// ---------------------------------------------------------------------------

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("bradley_terry_correctness", Duration::from_secs(5), bt_correctness),
        ("gradient_suite", Duration::from_secs(120), gradient_suite),
        ("projection_oracle", Duration::from_secs(5), projection_oracle),
        ("scripted_teacher_oracle", Duration::from_secs(10), scripted_teacher),
        ("information_gap", Duration::from_secs(60), information_gap),
        ("relabel_consistency", Duration::from_secs(300), relabel_consistency),
        ("determinism", Duration::from_secs(300), determinism),
        ("vlm_client_contract", Duration::from_secs(60), vlm_client_contract),
        ("end_to_end", Duration::from_secs(15 * 60), end_to_end),
        ("regularization_direction", Duration::from_secs(30 * 60), regularization_direction),
    ];
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (name, _, _) in criteria {
            println!("{name}: test");
        }
        return;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    // Panics are reported on the criterion's FAIL line.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for (name, limit, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = t0.elapsed();
        let in_time = elapsed <= limit;
        let (ok, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        let timing = format!("{:.1}s of {}s", elapsed.as_secs_f64(), limit.as_secs());
        println!("{} {name}: {detail} [{timing}]", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! the terminal (bypassing libtest capture) and then asserts.
//!
//! Criteria 5 to 7 and 9 share one desk-scale campaign over three seeds,
//! built on first use and kept under the cargo target temp directory.

mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use common::{gradient_check_shapes, gumbel_argmax_tv, mlp_gradient_error};
use slac_core::harness::{
    fit_factored_critic, presets, run, Ablations, ExperimentConfig, Overrides, Stage, TabularMdp, ORACLE_SHAPES,
};
use slac_core::numerics::{argmax, gumbel_softmax, softmax, RngStream};
use slac_core::skill::{safety_reward, SafetyWeights};
use slac_core::world::SafetySignals;

const SEEDS: [u64; 3] = [0, 1, 2];

fn report(id: u8, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("[acceptance] criterion {id} {verdict} {name}: {detail}\n");
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// Criterion 1: tabular oracle.

/// Exact policy evaluation by Gaussian elimination on `(I - gamma P_pi) v = r_pi`,
/// then `Q = r + gamma P v`.
fn exact_q(mdp: &TabularMdp, reward: &dyn Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
    let (ns, na) = (mdp.n_states, mdp.n_actions());
    let mut m = vec![vec![0.0; ns + 1]; ns];
    for s in 0..ns {
        m[s][s] += 1.0;
        for a in 0..na {
            let w = mdp.policy[s][a];
            m[s][ns] += w * reward(s, a);
            for t in 0..ns {
                m[s][t] -= mdp.gamma * w * mdp.p[s][a][t];
            }
        }
    }
    for c in 0..ns {
        let pivot = (c..ns).max_by(|&x, &y| m[x][c].abs().partial_cmp(&m[y][c].abs()).unwrap()).unwrap();
        m.swap(c, pivot);
        for r in 0..ns {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=ns {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    let v: Vec<f64> = (0..ns).map(|s| m[s][ns] / m[s][s]).collect();
    (0..ns)
        .map(|s| {
            (0..na)
                .map(|a| reward(s, a) + mdp.gamma * (0..ns).map(|t| mdp.p[s][a][t] * v[t]).sum::<f64>())
                .collect()
        })
        .collect()
}

#[test]
fn criterion_1_tabular_oracle() {
    let text = presets::get("oracle").unwrap();
    let config = ExperimentConfig::parse(text).unwrap();
    let o = &config.oracle;
    let start = Instant::now();
    let root = RngStream::new(config.seed, "acceptance/oracle");
    let (mut worst_decomp, mut worst_fit): (f64, f64) = (0.0, 0.0);
    for i in 0..o.mdps {
        let (n, sub, k) = ORACLE_SHAPES[i % ORACLE_SHAPES.len()];
        let mut rng = root.child(&format!("mdp/{i}"));
        let mdp = TabularMdp::random_factored(n, sub, k, o.gamma, &mut rng);
        let per_term: Vec<Vec<Vec<f64>>> = (0..mdp.m()).map(|t| exact_q(&mdp, &|s, a| mdp.r[t][s][a])).collect();
        let summed = exact_q(&mdp, &|s, a| (0..mdp.m()).map(|t| mdp.r[t][s][a]).sum());
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions() {
                let total: f64 = per_term.iter().map(|q| q[s][a]).sum();
                worst_decomp = worst_decomp.max((total - summed[s][a]).abs());
            }
        }
        let fitted = fit_factored_critic(&mdp, &o.fit(), &mut rng).unwrap();
        for (f, q) in fitted.iter().flatten().flatten().zip(per_term.iter().flatten().flatten()) {
            worst_fit = worst_fit.max((f - q).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "tabular oracle",
        worst_decomp <= 1e-6 && worst_fit <= 1e-2 && secs < 60.0,
        &format!(
            "{} MDPs, decomposition gap {worst_decomp:.2e} (<= 1e-6), critic gap {worst_fit:.2e} (<= 1e-2), {secs:.1}s (< 60s)",
            o.mdps
        ),
    );
}

// ---------------------------------------------------------------------------
// Criteria 2 to 4: numerics and reward arithmetic.

#[test]
fn criterion_2_mlp_gradients() {
    let mut rng = RngStream::new(2, "acceptance/fd");
    let shapes = gradient_check_shapes();
    let worst = shapes
        .iter()
        .map(|s| mlp_gradient_error(s, 4, &mut rng))
        .fold(0.0, f64::max);
    report(
        2,
        "finite-difference gradients",
        worst < 1e-4,
        &format!("{} MLPs, worst relative error {worst:.2e} (< 1e-4)", shapes.len()),
    );
}

#[test]
fn criterion_3_gumbel_softmax() {
    let mut rng = RngStream::new(3, "acceptance/gumbel");
    let mut worst_tv: f64 = 0.0;
    for v in 0..10 {
        let k = 2 + v % 5;
        let logits: Vec<f64> = (0..k).map(|_| 2.0 * rng.normal()).collect();
        worst_tv = worst_tv.max(gumbel_argmax_tv(&logits, 100_000, &mut rng));
    }
    // Cold limit: the relaxed sample collapses onto the perturbed argmax.
    let mut cold_ok = true;
    for _ in 0..1000 {
        let logits: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let (soft, noise) = gumbel_softmax(&logits, 1e-6, &mut rng).unwrap();
        let lse = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
        let perturbed: Vec<f64> = logits.iter().zip(&noise).map(|(l, g)| l - lse + g).collect();
        let hard = argmax(&perturbed);
        let mut gaps = perturbed.clone();
        gaps.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if gaps[0] - gaps[1] < 1e-3 {
            continue;
        }
        cold_ok &= soft.iter().enumerate().all(|(j, y)| (y - if j == hard { 1.0 } else { 0.0 }).abs() < 1e-9);
        cold_ok &= (softmax(&soft).iter().sum::<f64>() - 1.0).abs() < 1e-12;
    }
    report(
        3,
        "Gumbel-softmax sampling",
        worst_tv <= 0.02 && cold_ok,
        &format!("worst TV {worst_tv:.4} over 10 logit vectors x 1e5 (<= 0.02), cold limit hard argmax: {cold_ok}"),
    );
}

#[test]
fn criterion_4_safety_reward() {
    let w = SafetyWeights::default();
    let sig = |collision, over_force| SafetySignals {
        collision,
        over_force,
        ..Default::default()
    };
    // -0.01 * 4 - 0.2 = -0.24: four unit components, unchanged, colliding.
    let a = [1.0, -1.0, 1.0, -1.0];
    let r1 = safety_reward(&a, &a, &sig(true, false), &w);
    // -0.1 * |(0.6, 0.8)|^2 - 0.05 = -0.15: zero action after a unit step, over force.
    let r2 = safety_reward(&[0.0, 0.0], &[0.6, 0.8], &sig(false, true), &w);
    let mut rng = RngStream::new(4, "acceptance/safety");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a: Vec<f64> = (0..8).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let p: Vec<f64> = (0..8).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let (c, f) = (rng.uniform() < 0.5, rng.uniform() < 0.5);
        let mag: f64 = a.iter().map(|x| x * x).sum();
        let change: f64 = a.iter().zip(&p).map(|(x, y)| (x - y).powi(2)).sum();
        let by_hand = -0.01 * mag - 0.1 * change - if c { 0.2 } else { 0.0 } - if f { 0.05 } else { 0.0 };
        worst = worst.max((safety_reward(&a, &p, &sig(c, f), &w) - by_hand).abs());
    }
    let pass = (r1 + 0.24).abs() <= 1e-12 && (r2 + 0.15).abs() <= 1e-12 && worst <= 1e-12;
    report(
        4,
        "safety reward",
        pass,
        &format!("collision case {r1:.15}, over-force case {r2:.15}, worst random gap {worst:.1e} (<= 1e-12)"),
    );
}

// ---------------------------------------------------------------------------
// Shared desk-scale campaign for criteria 5 to 7 and 9.

#[derive(Clone, Debug)]
struct Curve {
    /// `(ll_steps, mean_return, success_rate)` per greedy evaluation.
    evals: Vec<(u64, f64, f64)>,
    ll_steps: u64,
    hl_steps: u64,
    violations: u64,
}

impl Curve {
    fn from_summary(s: &serde_json::Value) -> Curve {
        let evals = s["evals"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| {
                (
                    e["ll_steps"].as_u64().unwrap(),
                    e["report"]["mean_return"].as_f64().unwrap(),
                    e["report"]["success_rate"].as_f64().unwrap(),
                )
            })
            .collect();
        Curve {
            evals,
            ll_steps: s["ll_steps"].as_u64().unwrap(),
            hl_steps: s["hl_steps"].as_u64().unwrap_or(0),
            violations: s["safety_violations"].as_u64().unwrap(),
        }
    }

    fn final_return(&self) -> f64 {
        self.evals.last().unwrap().1
    }

    fn final_success(&self) -> f64 {
        self.evals.last().unwrap().2
    }

    fn best_return(&self) -> f64 {
        self.evals.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Low-level steps at the first evaluation from which every later
    /// evaluation stays at or above `threshold`; `None` if the curve never
    /// settles there.
    fn steps_to(&self, threshold: f64) -> Option<u64> {
        let tail = self.evals.iter().rev().take_while(|e| e.1 >= threshold).count();
        (tail > 0).then(|| self.evals[self.evals.len() - tail].0)
    }

    fn violations_per_1e3(&self) -> f64 {
        1e3 * self.violations as f64 / self.ll_steps.max(1) as f64
    }
}

#[derive(Debug)]
struct SeedRuns {
    stage1_env_steps: u64,
    probe_own: Vec<f64>,
    probe_other: Vec<f64>,
    full: Curve,
    no_decomp: Curve,
    no_temporal: Curve,
    no_disentangle: Curve,
    baseline: Curve,
}

fn campaign_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn resolve(preset: &str, seed: u64, outdir: &Path, decoder: Option<&Path>, ablation: Ablations) -> ExperimentConfig {
    let mut c = ExperimentConfig::parse(presets::get(preset).unwrap()).unwrap();
    c.decoder = decoder.map(Path::to_path_buf);
    c.stage = None;
    let stage = match preset {
        "desk_stage1" => Stage::Stage1,
        "desk_stage2" => Stage::Stage2,
        _ => Stage::Baseline,
    };
    let o = Overrides {
        stage: Some(stage),
        seed: Some(seed),
        outdir: Some(outdir.to_path_buf()),
        ablation,
    };
    c.resolve(&o).unwrap()
}

fn run_seed(seed: u64) -> SeedRuns {
    let dir = campaign_dir().join(format!("seed{seed}"));
    let none = Ablations::default();
    let no_dis = Ablations {
        no_disentangle: true,
        ..none
    };

    let s1 = run(&resolve("desk_stage1", seed, &dir.join("stage1"), None, none)).unwrap();
    let s1_nd = run(&resolve("desk_stage1", seed, &dir.join("stage1_no_disentangle"), None, no_dis)).unwrap();
    let decoder = s1.outdir.join("decoder.ckpt");
    let decoder_nd = s1_nd.outdir.join("decoder.ckpt");
    let probe = &s1.summary["probe"];
    let floats = |v: &serde_json::Value| v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();

    let stage2 = |name: &str, dec: &Path, ablation: Ablations| {
        let r = run(&resolve("desk_stage2", seed, &dir.join(name), Some(dec), ablation)).unwrap();
        Curve::from_summary(&r.summary)
    };
    let full = stage2("full", &decoder, none);
    let no_decomp = stage2(
        "no_decomp",
        &decoder,
        Ablations {
            no_decomp: true,
            ..none
        },
    );
    let no_temporal = stage2(
        "no_temporal",
        &decoder,
        Ablations {
            no_temporal: true,
            ..none
        },
    );
    let no_disentangle = stage2("no_disentangle", &decoder_nd, no_dis);
    let baseline = Curve::from_summary(&run(&resolve("desk_baseline", seed, &dir.join("baseline"), None, none)).unwrap().summary);

    let runs = SeedRuns {
        stage1_env_steps: s1.summary["env_steps"].as_u64().unwrap(),
        probe_own: floats(&probe["own"]),
        probe_other: floats(&probe["other"]),
        full,
        no_decomp,
        no_temporal,
        no_disentangle,
        baseline,
    };
    let line = format!(
        "[acceptance] seed {seed}: success {:.2} return {:.2} | no_decomp {:.2} | no_temporal {:.2} | no_disentangle {:.2} | baseline {:.2}\n",
        runs.full.final_success(),
        runs.full.final_return(),
        runs.no_decomp.final_return(),
        runs.no_temporal.final_return(),
        runs.no_disentangle.final_return(),
        runs.baseline.final_return(),
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    runs
}

fn campaign() -> &'static [SeedRuns] {
    static CAMPAIGN: OnceLock<Vec<SeedRuns>> = OnceLock::new();
    CAMPAIGN.get_or_init(|| SEEDS.iter().map(|&s| run_seed(s)).collect())
}

#[test]
fn criterion_5_task_success_and_baseline_gap() {
    let c = campaign();
    let success = median(c.iter().map(|r| r.full.final_success()).collect());
    let stage1_steps = c.iter().map(|r| r.stage1_env_steps).max().unwrap();
    let hl_steps = c.iter().map(|r| r.full.hl_steps).max().unwrap();
    let slac_return = mean(&c.iter().map(|r| r.full.final_return()).collect::<Vec<_>>());
    let flat_return = mean(&c.iter().map(|r| r.baseline.final_return()).collect::<Vec<_>>());
    let flat_ll = c.iter().map(|r| r.baseline.ll_steps).max().unwrap();
    let gap = slac_return > 0.0 && flat_return < 0.5 * slac_return;
    report(
        5,
        "task success",
        success >= 0.7 && stage1_steps <= 200_000 && hl_steps <= 2000 && flat_ll <= 100_000 && gap,
        &format!(
            "median success {success:.2} (>= 0.7) with {stage1_steps} sim steps and {hl_steps} hl steps; \
             flat return {flat_return:.2} vs two-stage {slac_return:.2} (< 50%) after {flat_ll} ll steps"
        ),
    );
}

#[test]
fn criterion_6_disentanglement_probe() {
    let c = campaign();
    let own = median(c.iter().flat_map(|r| r.probe_own.clone()).collect());
    let other = median(c.iter().flat_map(|r| r.probe_other.clone()).collect());
    report(
        6,
        "probe accuracy",
        own >= 0.70 && other <= 0.40,
        &format!("median own-state accuracy {own:.3} (>= 0.70), other-state accuracy {other:.3} (<= 0.40)"),
    );
}

#[test]
fn criterion_7_ablation_ordering() {
    let c = campaign();
    // Unreached thresholds count as infinitely late.
    let steps = |f: &dyn Fn(&SeedRuns) -> &Curve| -> f64 {
        median(
            c.iter()
                .map(|r| {
                    let threshold = 0.5 * r.full.best_return();
                    f(r).steps_to(threshold).map_or(f64::INFINITY, |s| s as f64)
                })
                .collect(),
        )
    };
    let full = steps(&|r| &r.full);
    let no_decomp = steps(&|r| &r.no_decomp);
    let no_temporal = steps(&|r| &r.no_temporal);
    let full_final = median(c.iter().map(|r| r.full.final_return()).collect());
    let nd_final = median(c.iter().map(|r| r.no_disentangle.final_return()).collect());
    let positive = c.iter().all(|r| r.full.best_return() > 0.0);
    report(
        7,
        "ablation ordering",
        positive && full < no_decomp && full < no_temporal && nd_final < full_final,
        &format!(
            "median ll steps to settle above half the best return: full {full}, no-decomp {no_decomp}, no-temporal {no_temporal}; \
             final return no-disentangle {nd_final:.2} vs full {full_final:.2}"
        ),
    );
}

#[test]
fn criterion_8_deterministic_logs() {
    let dir = campaign_dir().join("repeat");
    let once = |tag: &str| -> Vec<Vec<u8>> {
        let mut s1 = ExperimentConfig::parse(presets::get("desk_stage1").unwrap()).unwrap();
        s1.stage1.epochs = 12;
        s1.stage1.warmup = 2000;
        s1.stage1_probe = false;
        s1.stage = None;
        let out = dir.join(tag);
        let o = |stage, path: PathBuf| Overrides {
            stage: Some(stage),
            seed: Some(11),
            outdir: Some(path),
            ..Overrides::default()
        };
        let r1 = run(&s1.resolve(&o(Stage::Stage1, out.join("stage1"))).unwrap()).unwrap();
        let mut s2 = ExperimentConfig::parse(presets::get("desk_stage2").unwrap()).unwrap();
        s2.decoder = Some(r1.outdir.join("decoder.ckpt"));
        s2.stage2.hl_steps = 120;
        s2.stage = None;
        let r2 = run(&s2.resolve(&o(Stage::Stage2, out.join("stage2"))).unwrap()).unwrap();
        [r1.metrics_path(), r2.metrics_path()]
            .iter()
            .map(|p| std::fs::read(p).unwrap())
            .collect()
    };
    let a = once("a");
    let b = once("b");
    let nonempty = a.iter().all(|m| !m.is_empty());
    report(
        8,
        "deterministic replay",
        nonempty && a == b,
        &format!(
            "stage1 and stage2 metrics logs ({} and {} bytes) identical across two runs: {}",
            a[0].len(),
            a[1].len(),
            a == b
        ),
    );
}

#[test]
fn criterion_9_safety_violations() {
    let c = campaign();
    let slac = median(c.iter().map(|r| r.full.violations_per_1e3()).collect());
    let flat = median(c.iter().map(|r| r.baseline.violations_per_1e3()).collect());
    report(
        9,
        "safety violations",
        slac < flat,
        &format!("median violations per 1e3 ll steps: two-stage {slac:.2} vs flat {flat:.2}"),
    );
}

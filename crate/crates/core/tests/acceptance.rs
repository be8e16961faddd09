//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

mod oracles;

use std::time::Instant;

use oracles::{dual_barrier_oracle, random_instance, two_relay_instance, ModulusObjective};
use relaybf::bounds::{gaussian_tail_reports, tail1_closed_form, tail2_closed_form};
use relaybf::forms::{build_user_forms, sinr_value, ConstraintForm, ConstraintLabel, UserForms};
use relaybf::harness::{preset, run_bounds_lab, run_sweep, std_error, BoundsResult, Sweep, SweepResult};
use relaybf::matkernel::{c, std_complex_normal_vec, CMat};
use relaybf::network::{generate_channels, stream_rng, Architecture, ChannelRealization, NetworkConfig, UserId};
use relaybf::sdp::{solve, SdpStatus};
use relaybf::sdr::{solve_r1sdr, solve_r2sdr};
use relaybf::signalchain::{ber_run, empirical_sinr, q_function, RelayChain};

const UPPER_BOUND_SLACK: f64 = 1e-6;
const TRIALS: usize = 50;
const CANDIDATES: usize = 500;
const BER_TRIALS: usize = 30;
const BER_POINTS_DB: [f64; 4] = [4.0, 6.0, 8.0, 10.0];
const LEMMA1_RHO: [f64; 4] = [0.01, 0.02, 0.05, 0.1];
const LEMMA2_V: [f64; 3] = [2.0, 4.0, 8.0];
const TAIL_SAMPLES: usize = 100_000;
const BOUNDS_INSTANCES: usize = 10;
const GAUSS_SAMPLES: usize = 1_000_000;
const GAUSS_T: [f64; 4] = [0.1, 0.5, 1.0, 2.0];
const CHAIN_BLOCKS: usize = 1_000_000;
const CHAIN_INSTANCES: u64 = 5;
const CHAIN_REL_TOL: f64 = 0.03;
const SCALAR_TARGET: f64 = 2.0 / 3.0;
const SCALAR_TOL: f64 = 1e-3;
const GRID_REL_TOL: f64 = 1e-3;
const SDP_REL_TOL: f64 = 1e-4;
const AWGN_BER: f64 = 0.0786;
const AWGN_BLOCKS: usize = 250_000;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn sweep(name: &str, edit: impl FnOnce(&mut relaybf::harness::Scenario)) -> SweepResult {
    let mut s = preset(name).expect("preset exists");
    s.trials = TRIALS;
    s.candidates = CANDIDATES;
    edit(&mut s);
    run_sweep(&s).unwrap_or_else(|e| panic!("{name} sweep failed: {e}"))
}

fn upper_bound_law(results: &[&SweepResult]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut n = 0;
    for res in results {
        for p in &res.points {
            for r in &p.records {
                worst = worst.max(r.bf_rounded - r.r1sdr_obj).max(r.bfa_rounded - r.r2sdr_obj);
                n += 1;
            }
        }
    }
    outcome(worst <= UPPER_BOUND_SLACK, format!("{n} solved trials, largest rounded - relaxation = {worst:.3e}"))
}

fn bfa_dominates(res: &SweepResult) -> (bool, String) {
    let mut ok = true;
    let mut rows = Vec::new();
    for p in &res.points {
        let bf = p.mean_of(|r| r.bf_rounded);
        let bfa = p.mean_of(|r| r.bfa_rounded);
        ok &= bfa >= bf;
        rows.push(format!("{}: {bfa:.3} vs {bf:.3}", p.value));
    }
    (ok, rows.join(", "))
}

/// Each step may drop the mean gap by at most the pooled standard error of the two means.
fn gaps_diverge(res: &SweepResult, gap: impl Fn(&relaybf::harness::TrialRecord) -> f64) -> (bool, String) {
    let stats: Vec<(f64, f64)> = res
        .points
        .iter()
        .map(|p| {
            let g: Vec<f64> = p.records.iter().map(&gap).collect();
            (relaybf::harness::mean(g.iter().copied()), std_error(&g))
        })
        .collect();
    let ok = stats.windows(2).all(|w| w[1].0 >= w[0].0 - (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());
    let text = stats.iter().map(|(m, se)| format!("{m:.3}±{se:.3}")).collect::<Vec<_>>().join(" ");
    (ok, text)
}

fn divergence(res: &SweepResult) -> (bool, String) {
    let (ok1, t1) = gaps_diverge(res, |r| r.bf_gap());
    let (ok2, t2) = gaps_diverge(res, |r| r.bfa_gap());
    (ok1 && ok2, format!("BF gaps [{t1}], BFA gaps [{t2}]"))
}

fn fig2_trend(res: &SweepResult) -> Outcome {
    let (ok, text) = divergence(res);
    outcome(ok, text)
}

fn fig3_trend(res: &SweepResult) -> Outcome {
    let (ok1, t1) = divergence(res);
    let (ok2, t2) = bfa_dominates(res);
    outcome(ok1 && ok2, format!("{t1}; means {t2}"))
}

fn lemma1(res: &BoundsResult) -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    let mut margin = f64::INFINITY;
    for inst in &res.instances {
        for (u, rep) in inst.lemma1.iter().enumerate() {
            for k in 0..rep.grid.len() {
                checked += 1;
                let slack = rep.analytic[k] + rep.ci_halfwidth[k] - rep.empirical[k];
                margin = margin.min(slack);
                if slack < 0.0 {
                    bad.push(format!("trial {} user {u} rho {}", inst.trial, rep.grid[k]));
                }
            }
        }
    }
    outcome(bad.is_empty(), format!("{checked} (instance, user, rho) points, smallest slack {margin:.3e} {bad:?}"))
}

fn lemma2(res: &BoundsResult) -> Outcome {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for inst in &res.instances {
        let rep = &inst.lemma2;
        ok &= rep.violations().is_empty();
        ok &= rep.empirical.windows(2).all(|w| w[1] <= w[0]);
        worst = worst.max(rep.empirical[0]);
        ok &= matches!(inst.constraint, ConstraintLabel::Total);
    }
    outcome(ok, format!("{} instances, largest tail at v=2: {worst:.4}", res.instances.len()))
}

fn gaussian_tails() -> Outcome {
    let mut rng = stream_rng(11, &[]);
    let (one, two) = gaussian_tail_reports(&GAUSS_T, GAUSS_SAMPLES, &mut rng).expect("sampling");
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for rep in [&one, &two] {
        for k in 0..rep.grid.len() {
            let p = rep.analytic[k];
            let sigma = (p * (1.0 - p) / GAUSS_SAMPLES as f64).sqrt();
            let z = (rep.empirical[k] - p).abs() / sigma;
            worst = worst.max(z);
            ok &= z <= 3.0;
        }
    }
    let ineq = (1..=100).map(|i| 0.05 * i as f64).all(|t| tail2_closed_form(t) <= t * t / 2.0 && tail1_closed_form(t) <= t);
    outcome(ok && ineq, format!("largest deviation {worst:.2} sigma, inequalities on 100-point grid: {ineq}"))
}

fn detection_chain() -> Outcome {
    let mut worst: f64 = 0.0;
    for arch in [Architecture::Distributed, Architecture::Mimo] {
        for seed in 0..CHAIN_INSTANCES {
            let cfg = NetworkConfig::uniform(arch, 3, 2, 4, 1.0, 0.25, 0.25).unwrap();
            let r = generate_channels(&cfg, 100 + seed);
            let users = build_user_forms(&r, &cfg);
            let mut rng = stream_rng(200 + seed, &[arch as u64]);
            let n = cfg.weight_dim();
            let w1 = std_complex_normal_vec(n, &mut rng) * c(0.5, 0.0);
            let w2 = std_complex_normal_vec(n, &mut rng) * c(0.5, 0.0);
            let chain = RelayChain::new(&cfg, &r, &w1, &w2).unwrap();
            let emp = empirical_sinr(&chain, CHAIN_BLOCKS, &mut rng).unwrap();
            for (uf, e) in users.iter().zip(&emp) {
                let a = sinr_value(uf, &w1, &w2);
                worst = worst.max((e - a).abs() / a);
            }
        }
    }
    outcome(worst <= CHAIN_REL_TOL, format!("largest relative deviation {:.3}%", 100.0 * worst))
}

fn scalar_instance() -> (Vec<UserForms>, Vec<ConstraintForm>) {
    let one = CMat::from_element(1, 1, c(1.0, 0.0));
    let half = CMat::from_element(1, 1, c(0.5, 0.0));
    let uf = UserForms { user: UserId { group: 0, index: 0 }, a: one.clone(), abar: one.clone(), c: one.clone(), cbar: one };
    let cf = ConstraintForm { d: half.clone(), dbar: half, bound: 1.0, label: ConstraintLabel::Total };
    (vec![uf], vec![cf])
}

fn oracle_equivalence() -> Outcome {
    let (users, cons) = scalar_instance();
    let scalar = solve_r2sdr(&users, &cons, 1e-7).map(|s| s.gamma_star).unwrap_or(f64::NAN);
    let scalar_ok = (scalar - SCALAR_TARGET).abs() <= SCALAR_TOL;

    let mut grid_worst: f64 = 0.0;
    for seed in 0..5 {
        let (users, cons) = two_relay_instance(seed);
        let obj = ModulusObjective::new(&users[0], &cons[0]);
        let bfa = solve_r2sdr(&users, &cons, 1e-7).unwrap().gamma_star;
        let bf = solve_r1sdr(&users, &cons, 1e-7).unwrap().gamma_star;
        let (g2, g1) = (obj.grid_search(true), obj.grid_search(false));
        grid_worst = grid_worst.max((bfa - g2).abs() / g2).max((bf - g1).abs() / g1);
    }

    let mut sdp_worst: f64 = 0.0;
    let mut all_optimal = true;
    for seed in 0..20u64 {
        let inst = random_instance(seed, 3, if seed % 2 == 0 { 0 } else { 2 }, 3);
        let r = solve(&inst.problem, 1e-9);
        all_optimal &= r.status == SdpStatus::Optimal;
        let o = dual_barrier_oracle(&inst.oracle_cost, &inst.oracle_rows, &inst.oracle_rhs);
        sdp_worst = sdp_worst.max((r.objective - o).abs() / o.abs().max(1e-12));
    }
    outcome(
        scalar_ok && grid_worst <= GRID_REL_TOL && all_optimal && sdp_worst <= SDP_REL_TOL,
        format!("scalar {scalar:.6}, grid rel {grid_worst:.2e}, 20 SDPs rel {sdp_worst:.2e}"),
    )
}

fn awgn_ber() -> (bool, String) {
    let mut cfg = NetworkConfig::uniform(Architecture::Distributed, 1, 1, 1, 1.0, 1e-12, 0.5).unwrap();
    cfg.total_power_bound = Some(1.0);
    let one = relaybf::matkernel::CVec::from_element(1, c(1.0, 0.0));
    let r = ChannelRealization { f: vec![one.clone()], g: vec![one.clone()], q: vec![], seed: 0 };
    let ber = ber_run(&cfg, &r, &one, &relaybf::matkernel::CVec::zeros(0), AWGN_BLOCKS, &mut stream_rng(12, &[]))
        .unwrap()[0];
    let exact = q_function(2f64.sqrt());
    let sigma = (AWGN_BER * (1.0 - AWGN_BER) / (4.0 * AWGN_BLOCKS as f64)).sqrt();
    let ok = (ber - AWGN_BER).abs() <= 3.0 * sigma + (exact - AWGN_BER).abs();
    (ok, format!("AWGN BER {ber:.5} (closed form {exact:.5})"))
}

fn ber_sanity(res: &SweepResult) -> Outcome {
    let (ok1, t1) = awgn_ber();
    let mut ok2 = true;
    let mut rows = Vec::new();
    for p in &res.points {
        let bf = p.mean_of(|r| r.bf_ber.unwrap());
        let bfa = p.mean_of(|r| r.bfa_ber.unwrap());
        ok2 &= bfa <= bf;
        rows.push(format!("{} dB: {bfa:.4} vs {bf:.4}", p.value));
    }
    outcome(ok1 && ok2, format!("{t1}; worst-user BER BFA vs BF {}", rows.join(", ")))
}

fn main() {
    let started = Instant::now();
    let mut lines: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |k: usize, o: Outcome| {
        println!("{} criterion {k}: {} [{:.0}s]", if o.passed { "PASS" } else { "FAIL" }, o.detail, started.elapsed().as_secs_f64());
        lines.push((k, o));
    };

    report(9, oracle_equivalence());
    report(7, gaussian_tails());
    report(8, detection_chain());

    let mut bounds = preset("bounds").expect("preset");
    bounds.trials = BOUNDS_INSTANCES;
    bounds.sweep = Sweep::BoundsLab { rho: LEMMA1_RHO.to_vec(), v: LEMMA2_V.to_vec(), samples: TAIL_SAMPLES };
    let lab = run_bounds_lab(&bounds).expect("bounds lab");
    report(5, lemma1(&lab));
    report(6, lemma2(&lab));

    let fig1 = sweep("fig1", |_| {});
    let (ok, text) = bfa_dominates(&fig1);
    report(2, outcome(ok, format!("mean rounded BFA vs BF per P0 dB: {text}")));
    let fig2 = sweep("fig2", |_| {});
    report(3, fig2_trend(&fig2));
    let fig3 = sweep("fig3", |_| {});
    report(4, fig3_trend(&fig3));
    let fig4 = sweep("fig4", |s| {
        s.trials = BER_TRIALS;
        if let Sweep::BerPower { values_db, .. } = &mut s.sweep {
            *values_db = BER_POINTS_DB.to_vec();
        }
    });
    report(10, ber_sanity(&fig4));
    report(1, upper_bound_law(&[&fig1, &fig2, &fig3, &fig4]));

    lines.sort_by_key(|(k, _)| *k);
    let failed: Vec<usize> = lines.iter().filter(|(_, o)| !o.passed).map(|(k, _)| *k).collect();
    println!("acceptance: {} of {} criteria passed in {:.0}s", lines.len() - failed.len(), lines.len(), started.elapsed().as_secs_f64());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

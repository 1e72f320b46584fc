//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any failed.

use std::process::{Command, ExitCode};
use std::time::Instant;

use mdl_select::codes::{c_h, log_star, MicScheme};
use mdl_select::eval::{run_suite, summarize, SuiteConfig, SuiteSummary};
use mdl_select::fit::gaussian_code_bits;
use mdl_select::mic::{run_mic, MicSearchConfig};
use mdl_select::replay::rss_from_scratch;
use mdl_select::select::{select, SelectOptions};
use mdl_select::synth::{generate_transfer, ScenarioKind, TransferSpec};
use mdl_select::tpc::{nonuniform_savings, run_tpc, tpc_savings, uniform_savings, TpcConfig};
use mdl_select::transfer::{build_prior, run_transfer_tpc, PriorOptions, TransferPrior};
use mdl_select::{ClassMap, Dataset, Scheme, TransferSetting};
use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// 1. Cost table through the CLI.
fn cost_table() -> Outcome {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_mdl-select"))
        .args(["costs", "--m", "2000", "--h", "20", "--k", "1,5,20"])
        .output()
        .expect("run mdl-select costs");
    let elapsed = start.elapsed().as_secs_f64();
    if !out.status.success() {
        return outcome(false, format!("costs exited with {}", out.status));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<Vec<String>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('k'))
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect();
    // (k, partial, full, ric, bold)
    let expected = [
        (1, 18.4, 51.0, 13.0, "ric"),
        (5, 39.8, 51.0, 64.8, "partial-mic"),
        (20, 59.7, 51.0, 259.3, "full-mic"),
    ];
    let mut worst: f64 = 0.0;
    let mut pattern = true;
    if rows.len() != 3 {
        return outcome(false, format!("expected 3 rows, got {}", rows.len()));
    }
    for (row, (k, p, f, r, best)) in rows.iter().zip(expected) {
        let v = |i: usize| row[i].parse::<f64>().unwrap();
        assert_eq!(row[0], k.to_string());
        for (got, want) in [(v(1), p), (v(2), f), (v(3), r)] {
            worst = worst.max((got - want).abs());
        }
        pattern &= row[4] == best;
    }
    outcome(
        worst <= 0.2 && pattern && elapsed < 1.0,
        format!("max |error| {worst:.3} bits, argmin pattern {pattern}, {elapsed:.3}s"),
    )
}

fn find(s: &[SuiteSummary], kind: ScenarioKind, scheme: Scheme) -> &SuiteSummary {
    s.iter()
        .find(|x| x.kind == kind && x.scheme == scheme)
        .expect("summary row")
}

// 2. Scheme ordering on the full-size synthetic suite.
fn scheme_ordering(summary: &[SuiteSummary]) -> Outcome {
    use ScenarioKind::*;
    use Scheme::*;
    let e = |k, s| find(summary, k, s).error.mean;
    let (pp, pf) = (e(Partial, PartialMic), e(Partial, FullMic));
    let (fp, ff, fr) = (e(Full, PartialMic), e(Full, FullMic), e(Full, Ric));
    let (ip, i_f, ir) = (e(Independent, PartialMic), e(Independent, FullMic), e(Independent, Ric));
    let checks = [
        (0.06..=0.14).contains(&pp),
        pp < pf,
        (fp - ff).abs() <= 0.03,
        fp <= fr && ff <= fr,
        ir <= ip && ip <= i_f,
        i_f >= 0.25,
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "partial: P {pp:.3} F {pf:.3}; full: P {fp:.3} F {ff:.3} R {fr:.3}; independent: R {ir:.3} P {ip:.3} F {i_f:.3}"
        ),
    )
}

// 3. Precision/recall pattern on Full-scenario data.
fn precision_recall_pattern(summary: &[SuiteSummary]) -> Outcome {
    let p = find(summary, ScenarioKind::Full, Scheme::PartialMic);
    let f = find(summary, ScenarioKind::Full, Scheme::FullMic);
    let pass = p.coef_precision.mean >= 0.9
        && p.coef_recall.mean >= 0.95
        && f.feat_precision.mean >= 0.7
        && f.feat_recall.mean >= 0.9;
    outcome(
        pass,
        format!(
            "partial MIC coef P/R {:.2}/{:.2}; full MIC feature P/R {:.2}/{:.2}",
            p.coef_precision.mean, p.coef_recall.mean, f.feat_precision.mean, f.feat_recall.mean
        ),
    )
}

/// Index-plus-coefficient total cost of `q` features among `m`.
fn total_cost_scs(q: usize, m: usize) -> f64 {
    q as f64 * ((m as f64).log2() + 2.0)
}

/// Three-part total cost of `q` features spread over `big_q` of `k` classes.
fn total_cost_tpc(q: usize, big_q: usize, k: usize, selected_sizes: &[usize]) -> f64 {
    big_q as f64 * (k as f64).log2()
        + (q - big_q) as f64 * (big_q as f64).log2()
        + selected_sizes.iter().map(|&s| (s as f64).log2()).sum::<f64>()
        + 2.0 * q as f64
}

/// Random selection of `q` features touching exactly `big_q` classes.
fn random_selection(rng: &mut ChaCha8Rng, sizes: &[usize]) -> (usize, Vec<usize>) {
    let k = sizes.len();
    let big_q = rng.random_range(1..=k.min(30));
    let classes = index::sample(rng, k, big_q).into_vec();
    let mut chosen: Vec<usize> = classes.clone();
    let capacity: usize = classes.iter().map(|&c| sizes[c] - 1).sum();
    let extra = rng.random_range(0..=capacity.min(60));
    let mut left: Vec<usize> = classes.iter().map(|&c| sizes[c] - 1).collect();
    for _ in 0..extra {
        let open: Vec<usize> = (0..big_q).filter(|&i| left[i] > 0).collect();
        let i = open[rng.random_range(0..open.len())];
        left[i] -= 1;
        chosen.push(classes[i]);
    }
    (big_q, chosen)
}

// 4. Savings identity.
fn savings_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for uniform in [true, false] {
        for _ in 0..1000 {
            let k = rng.random_range(1..=200);
            let sizes: Vec<usize> = if uniform {
                vec![rng.random_range(1..=50); k]
            } else {
                (0..k).map(|_| rng.random_range(1..=50)).collect()
            };
            let m: usize = sizes.iter().sum();
            let (big_q, chosen) = random_selection(&mut rng, &sizes);
            let q = chosen.len();
            let selected_sizes: Vec<usize> = chosen.iter().map(|&c| sizes[c]).collect();
            let direct = total_cost_scs(q, m) - total_cost_tpc(q, big_q, k, &selected_sizes);
            let closed = if uniform {
                uniform_savings(q, big_q, k)
            } else {
                nonuniform_savings(q, big_q, k, m, &selected_sizes)
            };
            let library = tpc_savings(q, big_q, k, m, &sizes, &chosen).unwrap();
            worst = worst.max((direct - closed).abs()).max((direct - library).abs());
        }
    }
    outcome(worst <= 1e-9, format!("2000 configurations, max deviation {worst:.2e} bits"))
}

fn random_class_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let (n, m) = (rng.random_range(30..80), rng.random_range(10..60));
    let k = rng.random_range(1..=m.min(12));
    let mut class_of: Vec<usize> = (0..m).map(|j| if j < k { j } else { rng.random_range(0..k) }).collect();
    class_of.sort_unstable();
    let map = ClassMap::new(class_of, (0..k).map(|c| format!("c{c}")).collect()).unwrap();
    let x = DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal));
    let active = index::sample(rng, m, 3.min(m)).into_vec();
    let beta: Vec<f64> = active.iter().map(|_| rng.random_range(-1.5..1.5)).collect();
    let y = DMatrix::from_fn(n, 1, |i, _| {
        active.iter().zip(&beta).map(|(&j, b)| b * x[(i, j)]).sum::<f64>() + rng.sample::<f64, _>(StandardNormal)
    });
    Dataset::new(x, y).unwrap().with_class_map(map).unwrap()
}

// 5. Empty prior reproduces TPC.
fn no_transfer_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = TpcConfig::default();
    let prior = TransferPrior::uninformative();
    let mut mismatches = 0;
    let mut nonempty = 0;
    for _ in 0..100 {
        let data = random_class_dataset(&mut rng);
        let a = run_tpc(&data, &config).unwrap();
        let b = run_transfer_tpc(&data, &prior, TransferSetting::ClassAndFeature, &config).unwrap();
        nonempty += usize::from(!a.selected_features().is_empty());
        if a.selected_features() != b.selected_features() {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches}/100 differing selections ({nonempty} nonempty)"),
    )
}

fn recall(selected: &[usize], truth: &[usize]) -> f64 {
    truth.iter().filter(|j| selected.contains(j)).count() as f64 / truth.len() as f64
}

/// Upper tail P(X >= wins) of Binomial(n, 1/2).
fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut p = 0.0;
    let mut c = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            c = c * (n - k + 1) as f64 / k as f64;
        }
        if k >= wins {
            p += c;
        }
    }
    p / 2f64.powi(n as i32)
}

fn transfer_pair(spec: &TransferSpec) -> (f64, f64) {
    let inst = generate_transfer(spec).unwrap();
    let models: Vec<_> = inst
        .train
        .iter()
        .map(|d| select(d, Scheme::Tpc, &SelectOptions::default()).unwrap())
        .collect();
    let classes = inst.test.class_map.as_ref().unwrap();
    let prior = build_prior(&models, &inst.test.feature_names, classes, &PriorOptions::default()).unwrap();
    let config = TpcConfig::default();
    let plain = run_tpc(&inst.test, &config).unwrap();
    let transfer = run_transfer_tpc(&inst.test, &prior, TransferSetting::ClassAndFeature, &config).unwrap();
    (
        recall(&plain.selected_features(), &inst.support),
        recall(&transfer.selected_features(), &inst.support),
    )
}

// 6. Transfer benefit on related tasks, with adversarial priors reported.
fn transfer_benefit() -> Outcome {
    let (mut wins, mut losses, mut sum_tpc, mut sum_tr) = (0, 0, 0.0, 0.0);
    let mut degraded = 0;
    for seed in 0..50 {
        let (a, b) = transfer_pair(&TransferSpec::new(seed));
        sum_tpc += a;
        sum_tr += b;
        if b > a {
            wins += 1;
        } else if b < a {
            losses += 1;
        }
        let (a, b) = transfer_pair(&TransferSpec {
            adversarial: true,
            ..TransferSpec::new(1000 + seed)
        });
        degraded += usize::from(b < a);
    }
    let p = sign_test_p(wins, wins + losses);
    outcome(
        sum_tr > sum_tpc && p < 0.05,
        format!(
            "mean recall TPC {:.3} vs transfer {:.3}, {wins} wins/{losses} losses, sign test p = {p:.2e}; adversarial prior degraded {degraded}/50 runs",
            sum_tpc / 50.0,
            sum_tr / 50.0
        ),
    )
}

fn noise_tasks(rng: &mut ChaCha8Rng, n: usize, m: usize, h: usize, signal: usize) -> Dataset {
    let x = DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal));
    let beta = DMatrix::from_fn(m, h, |j, _| {
        if j < signal && rng.random_bool(0.6) {
            rng.random_range(-1.0..1.0)
        } else {
            0.0
        }
    });
    let noise = DMatrix::from_fn(n, h, |_, _| rng.sample::<f64, _>(StandardNormal));
    Dataset::new(x.clone(), &x * beta + noise).unwrap()
}

// 7. Code primitives and pruning equivalence.
fn code_primitives() -> Outcome {
    let mut worst_norm: f64 = 0.0;
    for h in 1..=1000u64 {
        let ch = c_h(h);
        let total: f64 = (1..=h).map(|k| 2f64.powf(-(log_star(k).unwrap() + ch))).sum();
        worst_norm = worst_norm.max((total - 1.0).abs());
    }
    let mut worst_log: f64 = 0.0;
    for k in 1..=5000u64 {
        let mut direct = 0.0;
        let mut v = (k as f64).log2();
        while v > 0.0 {
            direct += v;
            v = v.log2();
        }
        worst_log = worst_log.max((direct - log_star(k).unwrap()).abs());
    }
    let examples = (log_star(1).unwrap() == 0.0)
        && (log_star(2).unwrap() - 1.0).abs() < 1e-12
        && (log_star(16).unwrap() - (4.0 + 2.0 + 1.0)).abs() < 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut differ = 0;
    for _ in 0..30 {
        let data = noise_tasks(&mut rng, 40, 40, 6, 6);
        let mut pruned = MicSearchConfig::new(MicScheme::Partial);
        let mut full = pruned.clone();
        full.prune = false;
        pruned.top_t = 40;
        full.top_t = 40;
        if run_mic(&data, &pruned).unwrap() != run_mic(&data, &full).unwrap() {
            differ += 1;
        }
    }
    outcome(
        worst_norm <= 1e-12 && worst_log <= 1e-12 && examples && differ == 0,
        format!(
            "c_h normalization max error {worst_norm:.1e}, log* vs direct sum {worst_log:.1e}, pruned/unpruned differ on {differ}/30 suites"
        ),
    )
}

fn partial_cost(k: usize, m: usize, h: usize) -> f64 {
    mdl_select::codes::MicCostParams::new(m, h, 2.0)
        .unwrap()
        .model_cost(MicScheme::Partial, k)
        .unwrap()
}

/// Minimum TDL over every support pattern of a small problem.
fn exhaustive_tdl(data: &Dataset) -> f64 {
    let (m, h, n) = (data.m(), data.h(), data.n());
    let subsets = 1usize << m;
    let residual: Vec<Vec<f64>> = (0..h)
        .map(|t| {
            let y2: f64 = data.response(t).iter().map(|v| v * v).sum();
            (0..subsets)
                .map(|mask| {
                    let feats: Vec<usize> = (0..m).filter(|j| mask >> j & 1 == 1).collect();
                    let rss = rss_from_scratch(data, &feats, t).unwrap();
                    gaussian_code_bits(n, rss.max(1e-12 * y2))
                })
                .collect()
        })
        .collect();
    let cost: Vec<f64> = (0..=h).map(|k| if k == 0 { 0.0 } else { partial_cost(k, m, h) }).collect();
    let mut best = f64::INFINITY;
    let mut masks = vec![0usize; h];
    loop {
        let mut total: f64 = (0..h).map(|t| residual[t][masks[t]]).sum();
        for j in 0..m {
            let k = masks.iter().filter(|&&mk| mk >> j & 1 == 1).count();
            total += cost[k];
        }
        best = best.min(total);
        let mut t = 0;
        loop {
            if t == h {
                return best;
            }
            masks[t] += 1;
            if masks[t] < subsets {
                break;
            }
            masks[t] = 0;
            t += 1;
        }
    }
}

// 8. Greedy against exhaustive search.
fn search_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut close = 0;
    let mut below_optimum = 0;
    let mut worst_gap: f64 = 0.0;
    for i in 0..100 {
        let (m, h) = if i % 2 == 0 { (10, 2) } else { (7, 3) };
        let data = noise_tasks(&mut rng, 30, m, h, m);
        let opt = exhaustive_tdl(&data);
        let greedy = run_mic(&data, &MicSearchConfig::new(MicScheme::Partial)).unwrap().total_tdl;
        if greedy < opt - 1e-6 {
            below_optimum += 1;
        }
        let gap = (greedy - opt) / opt.abs();
        worst_gap = worst_gap.max(gap);
        close += usize::from(gap <= 0.05);
    }
    outcome(
        close >= 90 && below_optimum == 0,
        format!("{close}/100 within 5% of optimum, worst relative gap {worst_gap:.4}, greedy below optimum {below_optimum} times"),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let summary = summarize(&run_suite(&SuiteConfig::new(0)).expect("synthetic suite"));
    let suite_time = start.elapsed().as_secs_f64();

    let results = [
        ("1 cost table", cost_table()),
        ("2 scheme ordering", {
            let mut o = scheme_ordering(&summary);
            o.detail.push_str(&format!(" (m=2000, 5 replicates, {suite_time:.0}s)"));
            o
        }),
        ("3 precision/recall", precision_recall_pattern(&summary)),
        ("4 savings identity", savings_identity()),
        ("5 no-transfer reduction", no_transfer_reduction()),
        ("6 transfer benefit", transfer_benefit()),
        ("7 code primitives", code_primitives()),
        ("8 search oracle", search_oracle()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

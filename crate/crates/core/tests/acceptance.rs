//! Acceptance criteria. Each test prints one PASS/FAIL line to stdout
//! (written past the test harness capture) and then asserts it.

mod common;

use std::io::Write;
use std::sync::{Arc, OnceLock};

use common::{classification_fixture, permute};
use croms::cro::{solve_box_portfolio, solve_ellipsoid_portfolio, solve_finite, solve_finite_points, PgdConfig};
use croms::data::LabeledDataset;
use croms::grid::{GridConfig, LabelGrid};
use croms::harness::{self, preset, ExperimentConfig, Row, SweepConfig, SweepParam};
use croms::kernel::{Distance, KernelConfig, KernelFamily};
use croms::loss::{Decision, LossSpec};
use croms::quantile::{augmented_threshold, augmented_threshold_bounds, empirical_quantile, weighted_quantile};
use croms::score::{ConstantCovariance, LinearMean, ScoreModel};
use croms::select::{f_croims, f_croms_classification, f_croms_naive, FCroms, Problem};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, title: &str, pass: bool, detail: String) {
    let line = format!(
        "criterion {id:>2} [{}] {title}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    // bypass output capture so the verdicts show up in every test log
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "{}", line.trim_end());
}

fn mean_of(rows: &[Row], method: &str, param: Option<f64>, col: usize) -> f64 {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && param.map_or(true, |p| r.param_value == p))
        .map(|r| r.values[col].expect("metric present"))
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

const MISCOVERAGE: usize = 0;
const MISROBUSTNESS: usize = 1;
const AVG_LOSS: usize = 2;
const WC_MISCOVERAGE: usize = 3;

/// Averaged-case classification at n = 200, 5 penalties, m = 100, R = 200.
fn averaged_case_rows() -> &'static Vec<Row> {
    static ROWS: OnceLock<Vec<Row>> = OnceLock::new();
    ROWS.get_or_init(|| {
        let mut cfg = preset("averaged-case").unwrap();
        cfg.n = 200;
        cfg.m = 100;
        cfg.replications = 200;
        cfg.master_seed = 7_001;
        cfg.sweep = None;
        cfg.models[0].lambda_count = Some(5);
        cfg.methods = ["naive-cp", "e2e-0.75", "e-croms", "f-croms"].iter().map(|s| s.to_string()).collect();
        cfg.validate().unwrap();
        let (rows, err) = harness::run_rows(&cfg, None);
        assert!(err.is_none(), "{err:?}");
        rows
    })
}

#[test]
fn criterion_01_full_conformal_marginal_coverage() {
    let rows = averaged_case_rows();
    let mis = mean_of(rows, "f-croms", None, MISCOVERAGE);
    report(
        1,
        "F-CROMS marginal miscoverage in [0.07, 0.12]",
        (0.07..=0.12).contains(&mis),
        format!("pooled miscoverage {mis:.4} over 200 x 100 test points"),
    );
}

#[test]
fn criterion_02_misrobustness_below_miscoverage() {
    let rows = averaged_case_rows();
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| r.values[MISROBUSTNESS].unwrap() > r.values[MISCOVERAGE].unwrap())
        .map(|r| format!("{} rep {}", r.method, r.replication))
        .collect();
    report(
        2,
        "misrobustness <= miscoverage for every method and run",
        bad.is_empty(),
        format!("{} rows checked, {} violations {:?}", rows.len(), bad.len(), bad.iter().take(5).collect::<Vec<_>>()),
    );
}

#[test]
fn criterion_03_selection_efficiency() {
    let rows = averaged_case_rows();
    let naive = mean_of(rows, "naive-cp", None, AVG_LOSS);
    let e = mean_of(rows, "e-croms", None, AVG_LOSS);
    let f = mean_of(rows, "f-croms", None, AVG_LOSS);
    report(
        3,
        "E-CROMS and F-CROMS average loss <= Naive-CP",
        e <= naive && f <= naive,
        format!("naive-cp {naive:.4}, e-croms {e:.4}, f-croms {f:.4}"),
    );
}

#[test]
fn criterion_04_efficient_full_conformal_matches_naive() {
    let mut rng = ChaCha8Rng::seed_from_u64(4_004);
    let mut mismatches = Vec::new();
    let mut fixtures = 0;
    for seed in 0..100u64 {
        let n = rng.gen_range(1..=30);
        let k = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=4);
        let alpha = [0.05, 0.1, 0.2, 0.3][rng.gen_range(0..4)];
        let f = classification_fixture(40_000 + seed, n, k, m);
        let p = Problem::new(&f.models, &f.labeled, &f.loss, alpha).unwrap();
        let fast = f_croms_classification(&p, &f.test_x).unwrap();
        let slow = f_croms_naive(&p, &f.test_x, None).unwrap();
        fixtures += 1;
        if !fast.same_outcome(&slow) {
            mismatches.push(seed);
        }
    }
    let mut reg_fixtures = 0;
    for seed in 0..30u64 {
        let n = rng.gen_range(1..=30);
        let m = rng.gen_range(1..=4);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect();
        let ys: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| vec![x[0] + rng.gen_range(-1.0..1.0), 0.5 * x[0] + rng.gen_range(-1.0..1.0)])
            .collect();
        let models: Vec<ScoreModel> = (0..m)
            .map(|id| {
                let mean = Arc::new(LinearMean {
                    coef: (0..2).map(|_| vec![rng.gen_range(-0.5..0.5), rng.gen_range(0.0..1.0)]).collect(),
                });
                if id % 2 == 0 {
                    ScoreModel::box_model(id, mean)
                } else {
                    let c = rng.gen_range(-0.5..0.5);
                    ScoreModel::ellipsoid(id, mean, Arc::new(ConstantCovariance(vec![vec![1.0, c], vec![c, 1.0]])))
                }
            })
            .collect();
        let cfg = GridConfig {
            points_per_axis: 9,
            max_points: 81,
            ..GridConfig::default()
        };
        let grid = LabelGrid::from_labels(&ys, &cfg).unwrap();
        let data = LabeledDataset::regression(xs, ys).unwrap();
        let loss = LossSpec::BilinearPortfolio { dim: 2 };
        let p = Problem::new(&models, &data, &loss, [0.1, 0.2, 0.3][rng.gen_range(0..3)]).unwrap();
        let x = [rng.gen_range(-2.0..2.0)];
        let fast = FCroms::regression(&p, grid.clone()).unwrap().predict(&p, &x).unwrap();
        let slow = f_croms_naive(&p, &x, Some(&grid)).unwrap();
        reg_fixtures += 1;
        if !fast.same_outcome(&slow) {
            mismatches.push(1_000 + seed);
        }
    }
    report(
        4,
        "cached F-CROMS equals from-scratch recomputation",
        mismatches.is_empty(),
        format!(
            "{fixtures} classification fixtures (n <= 30, |Y| <= 6, |Lambda| <= 4) and {reg_fixtures} grid-regression fixtures, mismatching seeds {mismatches:?}"
        ),
    );
}

/// Sorted-multiset rank `ceil(num * n / den)` in integers, clamped to 1.
fn oracle_rank(num: u64, den: u64, n: u64) -> Option<usize> {
    let k = (num * n).div_ceil(den).max(1);
    (k <= n).then_some(k as usize)
}

fn oracle_at(values: &[f64], rank: Option<usize>) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    rank.map_or(f64::INFINITY, |k| s[k - 1])
}

#[test]
fn criterion_05_quantile_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(5_005);
    let instances = 10_000;
    let mut failures = Vec::new();
    for i in 0..instances {
        let n = rng.gen_range(1..=40usize);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0..12) as f64 * 0.5).collect();

        // empirical: level num/den, exact rank in integers
        let den = [4u64, 10, 20, 100][rng.gen_range(0..4)];
        let num = rng.gen_range(0..=den + 2);
        let got = empirical_quantile(&values, num as f64 / den as f64).unwrap();
        let want = oracle_at(&values, oracle_rank(num, den, n as u64));
        if got != want {
            failures.push(format!("empirical #{i}"));
        }

        // weighted: dyadic weights c_i / 1024, dyadic level
        let mut cuts: Vec<u64> = (0..n - 1).map(|_| rng.gen_range(0..=1024)).collect();
        cuts.push(0);
        cuts.push(1024);
        cuts.sort_unstable();
        let counts: Vec<u64> = cuts.windows(2).map(|w| w[1] - w[0]).collect();
        let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / 1024.0).collect();
        let j = rng.gen_range(0..=1030u64);
        let got = weighted_quantile(&values, &weights, j as f64 / 1024.0).unwrap();
        let want = if j > 1024 {
            f64::INFINITY
        } else {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let mut distinct: Vec<f64> = order.iter().map(|&o| values[o]).collect();
            distinct.dedup();
            *distinct
                .iter()
                .find(|&&v| (0..n).filter(|&t| values[t] <= v).map(|t| counts[t]).sum::<u64>() >= j)
                .expect("total mass reaches every level <= 1")
        };
        if got != want {
            failures.push(format!("weighted #{i}"));
        }

        // augmented: (1 - a/100) quantile of scores plus the test score
        let a = rng.gen_range(1..=60u64);
        let alpha = a as f64 / 100.0;
        let t = if rng.gen_bool(0.5) {
            values[rng.gen_range(0..n)]
        } else {
            rng.gen_range(-1.0..7.0)
        };
        let mut aug = values.clone();
        aug.push(t);
        let got = augmented_threshold(&values, t, alpha).unwrap();
        let want = oracle_at(&aug, oracle_rank(100 - a, 100, n as u64 + 1));
        if got != want {
            failures.push(format!("augmented #{i}"));
        }

        // public bounds at levels (1-a)(1+1/n) and (1-a)(1+1/n) - 1/n
        let (lo, hi) = augmented_threshold_bounds(&values, alpha).unwrap();
        let nn = n as u64;
        let want_hi = oracle_at(&values, oracle_rank((100 - a) * (nn + 1), 100 * nn, nn));
        let lo_num = ((100 - a) * (nn + 1)).saturating_sub(100);
        let want_lo = oracle_at(&values, oracle_rank(lo_num, 100 * nn, nn));
        if lo != want_lo || hi != want_hi {
            failures.push(format!("bounds #{i}"));
        }
    }
    report(
        5,
        "empirical / weighted / augmented quantiles equal sorted-multiset oracles",
        failures.is_empty(),
        format!("{instances} instances x 4 checks, {} mismatches {:?}", failures.len(), failures.iter().take(5).collect::<Vec<_>>()),
    );
}

fn segment_min(f: impl Fn(&[f64]) -> f64) -> f64 {
    let steps = 40_000;
    (0..=steps)
        .map(|i| {
            let t = i as f64 / steps as f64;
            f(&[t, 1.0 - t])
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_06_cro_solver_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(6_006);
    let mut notes = Vec::new();

    let mut finite_ok = 0;
    for _ in 0..2_000 {
        let rows = rng.gen_range(1..=8);
        let cols = rng.gen_range(1..=8);
        let m: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(0..6) as f64).collect()).collect();
        let mut set: Vec<usize> = (0..rows).filter(|_| rng.gen_bool(0.6)).collect();
        if set.is_empty() {
            set.push(rng.gen_range(0..rows));
        }
        let worst: Vec<f64> = (0..cols).map(|z| set.iter().map(|&y| m[y][z]).fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut best = 0;
        for z in 1..cols {
            if worst[z] < worst[best] {
                best = z;
            }
        }
        let sol = solve_finite(&m, &set).unwrap();
        if sol.decision == Decision::Index(best) && sol.worst_case_loss == worst[best] {
            finite_ok += 1;
        } else {
            notes.push("finite".to_string());
        }
    }

    let mut box_ok = 0;
    for _ in 0..500 {
        let p = rng.gen_range(1..=6);
        let mu: Vec<f64> = (0..p).map(|_| rng.gen_range(-5..5) as f64 * 0.5).collect();
        let q = rng.gen_range(0..8) as f64 * 0.25;
        let mut best = 0;
        for i in 1..p {
            if -mu[i] + q < -mu[best] + q {
                best = i;
            }
        }
        let mut e = vec![0.0; p];
        e[best] = 1.0;
        let sol = solve_box_portfolio(&mu, q).unwrap();
        if sol.decision == Decision::Weights(e) && sol.worst_case_loss == -mu[best] + q {
            box_ok += 1;
        } else {
            notes.push("box".to_string());
        }
    }

    let cfg = PgdConfig::default();
    let mut ell_err: f64 = 0.0;
    let unit = solve_ellipsoid_portfolio(&[0.0, 0.0], &vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0, &cfg).unwrap();
    let unit_err = (unit.worst_case_loss - 0.5f64.sqrt()).abs();
    for _ in 0..60 {
        let mu = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let a = [[rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)], [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)]];
        let sigma = vec![
            vec![a[0][0] * a[0][0] + a[0][1] * a[0][1] + 0.05, a[0][0] * a[1][0] + a[0][1] * a[1][1]],
            vec![a[0][0] * a[1][0] + a[0][1] * a[1][1], a[1][0] * a[1][0] + a[1][1] * a[1][1] + 0.05],
        ];
        let q = rng.gen_range(0.0..4.0);
        let oracle = segment_min(|z| {
            let quad = z[0] * z[0] * sigma[0][0] + 2.0 * z[0] * z[1] * sigma[0][1] + z[1] * z[1] * sigma[1][1];
            -(mu[0] * z[0] + mu[1] * z[1]) + (q * quad).sqrt()
        });
        let sol = solve_ellipsoid_portfolio(&mu, &sigma, q, &cfg).unwrap();
        ell_err = ell_err.max((sol.worst_case_loss - oracle).abs());
    }

    let mut pts_err: f64 = 0.0;
    for _ in 0..60 {
        let k = rng.gen_range(1..=12);
        let pts: Vec<Vec<f64>> = (0..k).map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect();
        let oracle = segment_min(|z| pts.iter().map(|y| -(y[0] * z[0] + y[1] * z[1])).fold(f64::NEG_INFINITY, f64::max));
        let sol = solve_finite_points(&pts, &cfg).unwrap();
        pts_err = pts_err.max((sol.worst_case_loss - oracle).abs());
    }

    let pass = finite_ok == 2_000 && box_ok == 500 && unit_err < 1e-3 && ell_err < 1e-3 && pts_err < 1e-3;
    report(
        6,
        "CRO solvers match enumeration and simplex-grid oracles",
        pass,
        format!(
            "finite {finite_ok}/2000 exact, box {box_ok}/500 exact, unit ellipsoid {:.5} (err {unit_err:.1e}), ellipsoid max err {ell_err:.1e}, points max err {pts_err:.1e}",
            unit.worst_case_loss
        ),
    );
}

#[test]
fn criterion_07_localized_conditional_behaviour() {
    let mut cfg: ExperimentConfig = preset("individualized").unwrap();
    cfg.m = 500;
    cfg.replications = 50;
    cfg.master_seed = 7_007;
    cfg.methods = vec!["naive-lcp".into(), "croims".into()];
    cfg.sweep = Some(SweepConfig {
        param: SweepParam::N,
        values: vec![100.0, 400.0],
    });
    cfg.validate().unwrap();
    let (rows, err) = harness::run_rows(&cfg, None);
    assert!(err.is_none(), "{err:?}");
    let wc100 = mean_of(&rows, "croims", Some(100.0), WC_MISCOVERAGE);
    let wc400 = mean_of(&rows, "croims", Some(400.0), WC_MISCOVERAGE);
    let loss_c = mean_of(&rows, "croims", Some(400.0), AVG_LOSS);
    let loss_l = mean_of(&rows, "naive-lcp", Some(400.0), AVG_LOSS);
    let alpha = cfg.alpha;
    let pass = wc400 <= wc100 + 0.01 && wc400 >= alpha - 0.05 && wc400 <= alpha + 0.08 && loss_c <= loss_l;
    report(
        7,
        "CROiMS worst-case conditional miscoverage and loss",
        pass,
        format!(
            "wc miscoverage n=100 {wc100:.4}, n=400 {wc400:.4} (band [{:.2}, {:.2}]); avg loss croims {loss_c:.4} vs naive-lcp {loss_l:.4}",
            alpha - 0.05,
            alpha + 0.08
        ),
    );
}

#[test]
fn criterion_08_permutation_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(8_008);
    let kernel = KernelConfig::new(KernelFamily::GaussianSq, 0.7)
        .unwrap()
        .with_distance(Distance::Features(vec![1]));
    let mut checked = 0;
    let mut failures = Vec::new();
    for fx in 0..10u64 {
        let n = rng.gen_range(5..=18);
        let k = rng.gen_range(2..=4);
        let f = classification_fixture(80_000 + fx, n, k, 3);
        let p = Problem::new(&f.models, &f.labeled, &f.loss, 0.2).unwrap();
        let base_fc = f_croms_classification(&p, &f.test_x).unwrap();
        let base_fi = f_croims(&p, &kernel, &f.test_x, 100_000).unwrap();
        for _ in 0..20 {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let data = permute(&f.labeled, &perm);
            let pp = Problem::new(&f.models, &data, &f.loss, 0.2).unwrap();
            let fc = f_croms_classification(&pp, &f.test_x).unwrap();
            if fc.lambda_hat_by_label != base_fc.lambda_hat_by_label || fc.set != base_fc.set {
                failures.push(format!("f-croms fixture {fx}"));
            }
            let fi = f_croims(&pp, &kernel, &f.test_x, 100_000).unwrap();
            let same = (0..k).all(|y| (0..n).all(|i| fi.per_label_selections[y][i] == base_fi.per_label_selections[y][perm[i]]));
            if !same || fi.result.set != base_fi.result.set {
                failures.push(format!("f-croims fixture {fx}"));
            }
            checked += 1;
        }
    }
    report(
        8,
        "full-conformal selections invariant under labeled-data permutation",
        failures.is_empty(),
        format!("{checked} permutations over 10 fixtures, {} failures {:?}", failures.len(), failures.iter().take(5).collect::<Vec<_>>()),
    );
}

#[test]
fn criterion_09_discretized_regression_coverage() {
    let base = {
        let mut c = preset("regression-shift").unwrap();
        c.n = 100;
        c.m = 100;
        c.replications = 200;
        c.master_seed = 9_009;
        c.sweep = None;
        c.methods = vec!["f-croms".into()];
        c.metrics.include = vec!["miscoverage".into(), "misrobustness".into(), "avg_loss".into()];
        c
    };
    let mut single = base.clone();
    single.models.truncate(1);
    let mut results = Vec::new();
    for (label, cfg) in [("1 candidate", single), ("4 candidates", base)] {
        cfg.validate().unwrap();
        let (rows, err) = harness::run_rows(&cfg, None);
        assert!(err.is_none(), "{err:?}");
        results.push((label, mean_of(&rows, "f-croms", None, MISCOVERAGE)));
    }
    report(
        9,
        "grid F-CROMS regression miscoverage <= 0.13",
        results.iter().all(|r| r.1 <= 0.13),
        results
            .iter()
            .map(|(l, v)| format!("{l}: {v:.4}"))
            .collect::<Vec<_>>()
            .join(", "),
    );
}

#[test]
fn criterion_10_determinism() {
    let mut cfg = preset("averaged-case").unwrap();
    cfg.replications = 4;
    cfg.m = 20;
    cfg.master_seed = 10_010;
    cfg.models[0].lambda_count = Some(4);
    cfg.sweep = Some(SweepConfig {
        param: SweepParam::N,
        values: vec![40.0, 80.0],
    });
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, jobs) in dirs.iter().zip([1, 1, 8]) {
        harness::run(&cfg, d.path(), Some(jobs)).unwrap();
    }
    let files = ["results.csv", "summary.csv", "miscoverage.svg", "avg_loss.svg"];
    let mut diffs = Vec::new();
    for f in files {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        for (i, d) in dirs.iter().enumerate().skip(1) {
            if std::fs::read(d.path().join(f)).unwrap() != a {
                diffs.push(format!("{f} run {i}"));
            }
        }
    }
    report(
        10,
        "byte-identical outputs across repeated and 1- vs 8-worker runs",
        diffs.is_empty(),
        format!("{} files x 3 runs compared, differences {diffs:?}", files.len()),
    );
}

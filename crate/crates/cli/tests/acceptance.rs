//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use facefatigue::cohort::{calibrate, classify, fit_gmm2, mixture_intersection, wald_ci_from_published, Component};
use facefatigue::descriptor::{
    dense_sift, region_descriptor_len, BLOCK_LEN, CHEEK_LEN, EYES_LEN, EYE_BOTTOMS_LEN, MOUTH_LEN,
};
use facefatigue::ensemble::{fit_ensemble, fit_tree, rmse, smape, Node};
use facefatigue::fatigue_model::{combine_cues, normalize_score};
use facefatigue::hyperopt::{optimize, SearchSpace};
use facefatigue::landmark_io::mock::{synthetic_face, MockConfig, MockProvider};
use facefatigue::landmark_io::{normalize_provider_payload, parse_landmark_file};
use facefatigue::roi::RegionBox;
use facefatigue::stats::chi2_quantile;
use facefatigue::{CueVector, DescriptorGroup, EnsembleConfig, Matrix, Method, RegionKind, RoiPatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("combiner oracle", combiner),
        ("smape and rmse oracles", metrics),
        ("published interval reconstruction", interval_reconstruction),
        ("chi-square quantiles", chi_square),
        ("mixture recovery", mixture_recovery),
        ("classification tail", classification_tail),
        ("ensemble identities", ensemble_identities),
        ("hyperparameter search", hyperparameter_search),
        ("dense SIFT properties", sift_properties),
        ("end-to-end planted signal", end_to_end),
        ("determinism", determinism),
        ("mock provider", mock_provider),
    ];
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    panic::set_hook(hook);
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn combiner() -> Outcome {
    let zero = combine_cues(&CueVector::uniform(0.0).unwrap());
    check!(zero == 44.41, "zero cues give {zero}");
    let full = combine_cues(&CueVector::uniform(100.0).unwrap());
    check!((full - 67.21).abs() <= 1e-12, "full cues give {full}");
    let (lo, hi) = (normalize_score(zero).unwrap(), normalize_score(full).unwrap());
    check!(
        lo.abs() <= 1e-12 && (hi - 100.0).abs() <= 1e-9,
        "normalized corners {lo}, {hi}"
    );
    Ok(format!("zero -> {zero}, full -> {full:.12}"))
}

fn metrics() -> Outcome {
    let s = smape(&[3.0], &[1.0]).unwrap();
    check!((s - 1.0).abs() <= 1e-12, "smape([3],[1]) = {s}");
    let v = [12.0, 40.5, 77.0, 3.25];
    let same = smape(&v, &v).unwrap();
    check!(same == 0.0, "smape of equal vectors = {same}");
    // 2/2 * (|2-1|/3 + |4-4|/8)
    let two = smape(&[2.0, 4.0], &[1.0, 4.0]).unwrap();
    check!((two - 1.0 / 3.0).abs() <= 1e-12, "two-point smape = {two}");
    let r = rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 5.0]).unwrap();
    check!((r - (4.0f64 / 3.0).sqrt()).abs() <= 1e-12, "rmse = {r}");
    check!(rmse(&v, &v).unwrap() == 0.0, "rmse of equal vectors is not 0");
    Ok("smape([3],[1]) = 1, equal vectors give 0".into())
}

fn interval_reconstruction() -> Outcome {
    let (lo, hi) = wald_ci_from_published(0.019, 0.013, 7, 0.05).unwrap();
    let (lo, hi) = (lo * 100.0, hi * 100.0);
    check!(
        (lo - 1.19).abs() <= 0.1 && (hi - 2.63).abs() <= 0.1,
        "row 1-2: [{lo:.3}, {hi:.3}]"
    );
    let (lo2, hi2) = wald_ci_from_published(0.021, 0.020, 7, 0.05).unwrap();
    let (lo2, hi2) = (lo2 * 100.0, hi2 * 100.0);
    check!(
        (lo2 - 1.05).abs() <= 0.15 && (hi2 - 3.24).abs() <= 0.15,
        "row 0-3: [{lo2:.3}, {hi2:.3}]"
    );
    Ok(format!("1-2 -> [{lo:.2}%, {hi:.2}%], 0-3 -> [{lo2:.2}%, {hi2:.2}%]"))
}

/// Chi-square density for even degrees of freedom.
fn chi2_pdf(x: f64, dof: u32) -> f64 {
    let k = dof / 2;
    let gamma: f64 = (1..k).map(f64::from).product();
    x.powi(k as i32 - 1) * (-x / 2.0).exp() / (2f64.powi(k as i32) * gamma)
}

fn simpson_cdf(q: f64, dof: u32) -> f64 {
    let n = 20_000;
    let h = q / n as f64;
    let mut s = chi2_pdf(0.0, dof) + chi2_pdf(q, dof);
    for i in 1..n {
        s += chi2_pdf(i as f64 * h, dof) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn integrated_quantile(p: f64, dof: u32) -> f64 {
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if simpson_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn chi_square() -> Outcome {
    let mut detail = Vec::new();
    for (dof, published) in [(2, 5.9915), (6, 12.5916)] {
        let q = chi2_quantile(0.95, dof);
        let oracle = integrated_quantile(0.95, dof);
        check!((q - oracle).abs() <= 1e-3, "dof {dof}: {q} vs integrated {oracle}");
        check!((q - published).abs() <= 1e-3, "dof {dof}: {q} vs {published}");
        detail.push(format!("dof {dof}: {q:.4} (integrated {oracle:.4})"));
    }
    Ok(detail.join(", "))
}

fn sample_mixture(comps: &[Component; 2], n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normals = comps.map(|c| Normal::new(c.mean, c.std).unwrap());
    (0..n)
        .map(|_| {
            let k = usize::from(rng.random::<f64>() >= comps[0].weight);
            normals[k].sample(&mut rng)
        })
        .collect()
}

fn bisect_intersection(c: &[Component; 2]) -> f64 {
    let g = |x: f64| {
        let d = |c: &Component| c.weight * (-0.5 * ((x - c.mean) / c.std).powi(2)).exp() / c.std;
        d(&c[0]) - d(&c[1])
    };
    let (mut lo, mut hi) = (c[0].mean, c[1].mean);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == (g(lo) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn mixture_recovery() -> Outcome {
    let truth = [
        Component {
            weight: 0.5,
            mean: 45.0,
            std: 3.0,
        },
        Component {
            weight: 0.5,
            mean: 60.0,
            std: 4.0,
        },
    ];
    let xs = sample_mixture(&truth, 50_000, 5);
    let start = Instant::now();
    let fit = fit_gmm2(&xs).map_err(|e| e.to_string())?;
    let threshold = mixture_intersection(&fit.components).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    for (f, t) in fit.components.iter().zip(&truth) {
        check!((f.mean - t.mean).abs() <= 0.5, "mean {} vs {}", f.mean, t.mean);
        check!((f.std - t.std).abs() <= 0.3, "std {} vs {}", f.std, t.std);
        check!(
            (f.weight - t.weight).abs() <= 0.05,
            "weight {} vs {}",
            f.weight,
            t.weight
        );
    }
    let oracle = bisect_intersection(&fit.components);
    check!(
        (threshold - oracle).abs() <= 1e-6,
        "threshold {threshold} vs bisection {oracle}"
    );
    let monotone = fit.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
    check!(monotone, "log-likelihood decreased");
    check!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    let [a, b] = &fit.components;
    Ok(format!(
        "means {:.3}/{:.3}, stds {:.3}/{:.3}, weights {:.3}/{:.3}, threshold {threshold:.6}, {} iterations in {elapsed:.2?}",
        a.mean, b.mean, a.std, b.std, a.weight, b.weight, fit.iterations
    ))
}

fn classification_tail() -> Outcome {
    let source = sample_mixture(
        &[
            Component {
                weight: 0.6,
                mean: 40.0,
                std: 7.0,
            },
            Component {
                weight: 0.4,
                mean: 62.0,
                std: 6.0,
            },
        ],
        20_000,
        6,
    );
    let cal = calibrate(&source).map_err(|e| e.to_string())?;
    let xs = sample_mixture(&cal.components, 100_000, 66);
    let c = classify(&xs, cal.threshold).map_err(|e| e.to_string())?;
    let analytic = cal.tail_mass();
    check!(
        (c.fraction - analytic).abs() <= 0.01,
        "empirical {} vs analytic {analytic}",
        c.fraction
    );
    Ok(format!(
        "threshold {:.3}: empirical {:.4} vs analytic {analytic:.4}",
        cal.threshold, c.fraction
    ))
}

fn cfg(method: Method, cycles: usize, rate: f64, leaf: usize, seed: u64) -> EnsembleConfig {
    EnsembleConfig {
        method,
        learn_cycles: cycles,
        learn_rate: rate,
        min_leaf_size: leaf,
        seed,
    }
}

fn ensemble_identities() -> Outcome {
    let start = Instant::now();
    let x = Matrix::from_rows((0..30).map(|i| vec![i as f64, (i * 7 % 11) as f64]).collect()).unwrap();
    let t = fit_tree(&x, &[42.0; 30], 1).map_err(|e| e.to_string())?;
    check!(
        matches!(t.nodes(), [Node::Leaf { .. }]),
        "constant target grew {} nodes",
        t.nodes().len()
    );

    let step: Vec<f64> = (0..30).map(|i| if i < 13 { 10.0 } else { 70.0 }).collect();
    let t = fit_tree(&x, &step, 1).map_err(|e| e.to_string())?;
    let pred: Vec<f64> = (0..30).map(|i| t.predict(x.row(i))).collect();
    let step_rmse = rmse(&pred, &step).unwrap();
    check!(step_rmse == 0.0, "step training rmse {step_rmse}");

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 5.0).unwrap();
    let rows: Vec<Vec<f64>> = (0..120)
        .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| (50.0 + 25.0 * (5.0 * r[0]).sin() + 10.0 * r[1] + noise.sample(&mut rng)).clamp(0.0, 100.0))
        .collect();
    let xb = Matrix::from_rows(rows).unwrap();
    let m = fit_ensemble(&xb, &y, &cfg(Method::LSBoost, 200, 0.1, 3, 0)).map_err(|e| e.to_string())?;
    let mut prev = f64::INFINITY;
    for cycles in 1..=200 {
        let mut partial = m.clone();
        partial.trees.truncate(cycles);
        let pred: Vec<f64> = (0..xb.rows()).map(|i| partial.raw_predict(xb.row(i))).collect();
        let e = rmse(&pred, &y).unwrap();
        check!(e <= prev + 1e-9, "boosting cycle {cycles}: {e} > {prev}");
        prev = e;
    }

    let mut wins = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let f = |a: f64, b: f64| 50.0 + 20.0 * (6.0 * a).sin() + 15.0 * b;
        let mut draw = |n: usize| {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
            let y: Vec<f64> = rows.iter().map(|r| f(r[0], r[1]) + noise.sample(&mut rng)).collect();
            (Matrix::from_rows(rows).unwrap(), y)
        };
        let (xt, yt) = draw(100);
        let (xh, yh) = draw(400);
        let single = fit_tree(&xt, &yt, 1).map_err(|e| e.to_string())?;
        let bag = fit_ensemble(&xt, &yt, &cfg(Method::Bag, 50, 1.0, 1, seed)).map_err(|e| e.to_string())?;
        let ps: Vec<f64> = (0..xh.rows()).map(|i| single.predict(xh.row(i))).collect();
        let pb: Vec<f64> = (0..xh.rows()).map(|i| bag.raw_predict(xh.row(i))).collect();
        if rmse(&pb, &yh).unwrap() < rmse(&ps, &yh).unwrap() {
            wins += 1;
        }
    }
    check!(wins >= 16, "bagging won {wins}/20");
    let elapsed = start.elapsed();
    check!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "single leaf, step rmse 0, boosting rmse {prev:.3} after 200 cycles, bagging won {wins}/20"
    ))
}

fn hyperparameter_search() -> Outcome {
    let space = SearchSpace {
        methods: vec![Method::Bag],
        learn_cycles: (50, 50),
        learn_rate: (0.1, 0.1),
        ..SearchSpace::default()
    };
    let objective = |c: &EnsembleConfig| Ok::<_, String>((c.min_leaf_size as f64 - 200.0).powi(2));
    let r = optimize(objective, &space, 30, 10, 0).map_err(|e| e.to_string())?;
    let err = (r.best.config.min_leaf_size as f64 - 200.0).abs();
    check!(err <= 20.0, "best min_leaf_size {}", r.best.config.min_leaf_size);

    let mut random: Vec<f64> = (0..50u64)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(5000 + s);
            (0..30)
                .map(|_| (space.sample(&mut rng).min_leaf_size as f64 - 200.0).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    random.sort_by(f64::total_cmp);
    let median = 0.5 * (random[24] + random[25]);
    check!(err < median, "search error {err} vs random median {median}");

    for seed in 0..5 {
        let h = optimize(objective, &space, 30, 10, seed)
            .map_err(|e| e.to_string())?
            .history;
        check!(
            h.iter().all(|t| space.contains(&t.config)),
            "seed {seed}: proposal out of bounds"
        );
        let full = optimize(
            |c: &EnsembleConfig| Ok::<_, String>(c.learn_cycles as f64 / c.min_leaf_size as f64),
            &SearchSpace::default(),
            30,
            10,
            seed,
        )
        .map_err(|e| e.to_string())?
        .history;
        check!(
            full.iter().all(|t| SearchSpace::default().contains(&t.config)),
            "seed {seed}: proposal out of bounds"
        );
    }
    let again = optimize(objective, &space, 30, 10, 0).map_err(|e| e.to_string())?;
    check!(again.history == r.history, "history differs on rerun");
    Ok(format!(
        "best min_leaf_size {} (error {err}), random median error {median}",
        r.best.config.min_leaf_size
    ))
}

fn patch(kind: RegionKind, f: impl Fn(usize, usize) -> f64) -> RoiPatch {
    let (w, h) = kind.patch_size();
    let pixels = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| f(x, y))
        .collect();
    RoiPatch {
        kind,
        width: w,
        height: h,
        pixels,
        source: RegionBox {
            x0: 0.0,
            y0: 0.0,
            x1: w as f64,
            y1: h as f64,
        },
    }
}

fn sift_properties() -> Outcome {
    let mut max_offset_diff = 0.0f64;
    for kind in RegionKind::ALL {
        let flat = dense_sift(&patch(kind, |_, _| 0.6));
        check!(
            flat.iter().all(|&v| v == 0.0),
            "{kind}: constant patch has a non-zero descriptor"
        );
        check!(
            flat.len() == region_descriptor_len(kind),
            "{kind}: length {}",
            flat.len()
        );

        let base = patch(kind, |x, y| ((x * 13 + y * 7 + x * y) % 101) as f64 / 256.0);
        let d = dense_sift(&base);
        for offset in [0.125, 0.25, 0.5] {
            let shifted = patch(kind, |x, y| base.get(x, y) + offset);
            check!(
                dense_sift(&shifted) == d,
                "{kind}: offset {offset} changed the descriptor"
            );
        }
        let shifted = patch(kind, |x, y| base.get(x, y) + 0.0731);
        for (a, b) in d.iter().zip(dense_sift(&shifted)) {
            max_offset_diff = max_offset_diff.max((a - b).abs());
        }
        for block in d.chunks(BLOCK_LEN) {
            let n = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            check!(n <= 1.0 + 1e-9, "{kind}: block norm {n}");
        }
    }
    check!(
        max_offset_diff <= 1e-12,
        "non-dyadic offset moved the descriptor by {max_offset_diff}"
    );
    let lengths = [
        (DescriptorGroup::Eyes, EYES_LEN),
        (DescriptorGroup::EyeBottoms, EYE_BOTTOMS_LEN),
        (DescriptorGroup::Cheek, CHEEK_LEN),
        (DescriptorGroup::Mouth, MOUTH_LEN),
    ];
    for (group, len) in lengths {
        let sum: usize = group.regions().iter().map(|&k| region_descriptor_len(k)).sum();
        check!(sum == len, "{group:?}: {sum} vs {len}");
    }
    Ok(format!(
        "lengths {EYES_LEN}/{EYE_BOTTOMS_LEN}/{CHEEK_LEN}/{MOUTH_LEN}; dyadic offsets bit-exact, other offsets within {max_offset_diff:.1e}"
    ))
}

/// Shared 60-face corpus and the first training run on it.
struct E2e {
    corpus: Corpus,
    model_dir: PathBuf,
    train_time: Duration,
}

fn e2e() -> &'static Result<E2e, String> {
    static CELL: std::sync::OnceLock<Result<E2e, String>> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        let root = scratch("e2e");
        let corpus = Corpus::synthesize(&root.join("corpus"), 60, 0);
        let model_dir = root.join("model-a");
        let start = Instant::now();
        let out = train(&corpus, &model_dir, "3");
        let train_time = start.elapsed();
        if code(&out) != 0 {
            return Err(format!("train exited {}: {}", code(&out), stderr(&out)));
        }
        Ok(E2e {
            corpus,
            model_dir,
            train_time,
        })
    })
}

fn train(corpus: &Corpus, out: &Path, jobs: &str) -> std::process::Output {
    let mut args: Vec<String> = vec!["--jobs".into(), jobs.into(), "train".into()];
    args.extend(corpus.rated_args());
    args.extend(["--folds", "5", "--bo-iters", "10", "--seed", "0", "--out"].map(String::from));
    args.push(out.display().to_string());
    run(&args)
}

fn end_to_end() -> Outcome {
    let e = e2e().as_ref()?;
    let report: Value =
        serde_json::from_str(&read(&e.model_dir.join("training_report.json"))).map_err(|e| e.to_string())?;
    let smape = report["composite_smape"].as_f64().ok_or("no composite_smape")?;
    check!(report["faces"] == 60, "trained on {} faces", report["faces"]);
    check!(smape < 0.05, "composite SMAPE {smape}");
    let mut worst = 0.0f64;
    for cue in report["cues"].as_array().ok_or("no cues")? {
        let (cv, base) = (cue["cv_rmse"].as_f64().unwrap(), cue["baseline_rmse"].as_f64().unwrap());
        check!(cv < 0.5 * base, "{}: cv rmse {cv} vs baseline {base}", cue["cue"]);
        worst = worst.max(cv / base);
    }
    check!(
        e.train_time < Duration::from_secs(300),
        "training took {:?}",
        e.train_time
    );
    Ok(format!(
        "SMAPE {smape:.4}, worst cue rmse/baseline {worst:.3}, train {:.0?}",
        e.train_time
    ))
}

fn determinism() -> Outcome {
    let e = e2e().as_ref()?;
    let dir = scratch("determinism");
    let rerun = dir.join("model-b");
    let out = train(&e.corpus, &rerun, "1");
    check!(code(&out) == 0, "rerun exited {}: {}", code(&out), stderr(&out));
    for file in ["model.json", "training_report.json", "rejects.jsonl"] {
        let (a, b) = (
            fs::read(e.model_dir.join(file)).unwrap(),
            fs::read(rerun.join(file)).unwrap(),
        );
        check!(a == b, "{file} differs between --jobs 3 and --jobs 1");
    }

    let mut outputs = Vec::new();
    for (i, jobs) in ["1", "4", "1"].into_iter().enumerate() {
        let path = dir.join(format!("scores-{i}.jsonl"));
        let out = run([
            "--jobs".as_ref(),
            jobs.as_ref(),
            "score-batch".as_ref(),
            "--model".as_ref(),
            e.model_dir.join("model.json").as_os_str(),
            "--landmarks".as_ref(),
            e.corpus.landmarks().as_os_str(),
            "--images".as_ref(),
            e.corpus.images().as_os_str(),
            "--out".as_ref(),
            path.as_os_str(),
        ]);
        check!(code(&out) == 0, "score-batch exited {}: {}", code(&out), stderr(&out));
        outputs.push(fs::read(&path).unwrap());
    }
    check!(outputs.iter().all(|o| *o == outputs[0]), "score-batch outputs differ");
    check!(
        json_lines(&String::from_utf8_lossy(&outputs[0])).len() == 60,
        "expected 60 score lines"
    );
    Ok("train (--jobs 3 vs 1) and score-batch (--jobs 1, 4, rerun) byte-identical".into())
}

fn mock_provider() -> Outcome {
    let dir = scratch("mock");
    let images = dir.join("images");
    fs::create_dir_all(&images).unwrap();
    let (w, h) = (240u32, 290u32);
    for i in 0..3u32 {
        image::GrayImage::from_fn(w, h, |x, y| image::Luma([((x + 2 * y + 50 * i) % 256) as u8]))
            .save(images.join(format!("img{i}.png")))
            .unwrap();
    }
    let faces = [synthetic_face(w, h), synthetic_face(180, 200)];
    let fixture = json!({"request_id": "fixture", "time_used": 12, "image_id": "x", "faces": faces});
    let mock = MockProvider::start(
        "127.0.0.1:0",
        MockConfig {
            fixture: Some(fixture),
            ..MockConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;

    let landmarks = |key: &str, out: &Path| {
        bin()
            .args(["landmarks", "--images"])
            .arg(&images)
            .args(["--endpoint", &mock.url(), "--out"])
            .arg(out)
            .env("FACE_API_KEY", key)
            .env("FACE_API_SECRET", "mock-secret")
            .output()
            .unwrap()
    };
    let out_path = dir.join("landmarks.jsonl");
    let out = landmarks("mock-key", &out_path);
    check!(code(&out) == 0, "landmarks exited {}: {}", code(&out), stderr(&out));
    let records = parse_landmark_file(&read(&out_path)).map_err(|e| e.to_string())?;
    check!(records.len() == 6, "{} records", records.len());
    for i in 0..3 {
        for (j, face) in faces.iter().enumerate() {
            let image = format!("img{i}.png");
            let expected = normalize_provider_payload("facepp", face, &format!("img{i}#{j}"), &image)
                .map_err(|e| e.to_string())?;
            check!(
                records[2 * i + j] == expected,
                "record {} does not match the fixture",
                2 * i + j
            );
            let demo = expected.attributes.as_ref().ok_or("fixture demographics dropped")?;
            check!(
                demo.age_years == 27 && demo.gender_confidence == Some(95.2),
                "demographics {demo:?}"
            );
        }
    }
    let served = mock.request_count();
    check!(served == 3, "{served} requests for 3 images");

    let start = Instant::now();
    let denied = landmarks("wrong-key", &dir.join("denied.jsonl"));
    let elapsed = start.elapsed();
    let retries = mock.request_count() - served;
    check!(
        code(&denied) == 3,
        "auth failure exited {}: {}",
        code(&denied),
        stderr(&denied)
    );
    check!(retries == 3, "auth failure made {retries} requests for 3 images");
    Ok(format!(
        "6 faces mapped from 3 images; auth failure exit 3 after {retries} requests in {elapsed:.2?}"
    ))
}

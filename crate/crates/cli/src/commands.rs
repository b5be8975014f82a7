use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use facefatigue::cohort::{calibrate as fit_calibration, demographic_report, histogram_csv, parse_score_records, Axis};
use facefatigue::fatigue_model::{evaluate_composite, train_composite, FatigueScore, TrainingOptions};
use facefatigue::hyperopt::{SearchSpace, DEFAULT_BUDGET, DEFAULT_INIT};
use facefatigue::landmark_io::mock::{MockConfig, MockProvider};
use facefatigue::landmark_io::{detect_batch, write_landmark_file, ProviderFormat, ServiceConfig};
use facefatigue::synthetic::{synthetic_corpus, write_corpus};
use facefatigue::{Calibration, Demographics, FaceRecord, GrayImage};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::inputs::*;
use crate::{
    AnalyzeArgs, CalibrateArgs, EvaluateArgs, LandmarksArgs, MockArgs, PredictArgs, RatedInputs, ScoreBatchArgs,
    SynthesizeArgs, TrainArgs,
};

pub fn landmarks(a: &LandmarksArgs, cfg: &FileConfig, jobs: usize) -> CliResult<()> {
    let provider: String = cfg.resolve(a.provider.clone(), "provider", "facepp".into())?;
    if provider == "file" {
        return landmarks_from_file(a);
    }
    let format: ProviderFormat = provider.parse()?;
    let credential = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
    let (Some(key), Some(secret)) = (credential("FACE_API_KEY"), credential("FACE_API_SECRET")) else {
        return Err(CliError::input(format!(
            "provider {provider} needs credentials: set FACE_API_KEY and FACE_API_SECRET"
        )));
    };
    let endpoint = cfg.get(a.endpoint.clone(), "endpoint")?.ok_or_else(|| {
        CliError::input(format!(
            "provider {provider} needs --endpoint (or endpoint in --config)"
        ))
    })?;

    let (base, paths) = match (&a.manifest, &a.images) {
        (Some(m), images) => {
            require_file(m, "manifest")?;
            let base = images
                .clone()
                .unwrap_or_else(|| m.parent().unwrap_or(Path::new(".")).to_path_buf());
            let mut refs: Vec<String> = Vec::new();
            for (i, line) in read_text(m)?.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let v: Value =
                    serde_json::from_str(line).map_err(|e| CliError::input(format!("manifest line {}: {e}", i + 1)))?;
                let image = v
                    .get("image")
                    .and_then(Value::as_str)
                    .ok_or_else(|| CliError::input(format!("manifest line {}: missing \"image\"", i + 1)))?;
                if !refs.iter().any(|r| r == image) {
                    refs.push(image.to_string());
                }
            }
            (base.clone(), refs.into_iter().map(|r| base.join(r)).collect())
        }
        (None, Some(dir)) => {
            require_dir(dir, "image directory")?;
            (dir.clone(), list_images(dir)?)
        }
        (None, None) => return Err(CliError::input("landmarks needs --images or --manifest")),
    };
    let mut batch = Vec::with_capacity(paths.len());
    for p in &paths {
        let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
        let name = p.strip_prefix(&base).unwrap_or(p).to_string_lossy().into_owned();
        batch.push((name, bytes));
    }

    let mut service = ServiceConfig::new(endpoint, key, secret);
    service.format = format;
    service.max_in_flight = jobs;
    if let Some(secs) = cfg.get::<u64>(None, "timeout_secs")? {
        service.timeout = Duration::from_secs(secs);
    }
    let mut records = Vec::new();
    let mut failures = 0;
    for ((name, _), result) in batch.iter().zip(detect_batch(&batch, &service)) {
        match result {
            Ok(faces) => records.extend(faces),
            Err(e) if e.is_service_failure() => return Err(e.into()),
            Err(e) => {
                log::warn!("{name}: {e}");
                failures += 1;
            }
        }
    }
    write_text(&a.out, &write_landmark_file(&records))?;
    eprintln!(
        "{} image(s), {} face(s) found, {failures} failure(s)",
        batch.len(),
        records.len()
    );
    Ok(())
}

fn landmarks_from_file(a: &LandmarksArgs) -> CliResult<()> {
    let from = a
        .from
        .as_ref()
        .ok_or_else(|| CliError::input("provider file needs --from <landmarks.jsonl>"))?;
    require_file(from, "landmark file")?;
    let records = load_landmarks(from)?;
    if let Some(dir) = &a.images {
        for r in &records {
            let path = dir.join(&r.image);
            let (w, h) =
                image::image_dimensions(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            if !r.rect.fits_within(w, h) {
                return Err(CliError::input(format!(
                    "{}: face rectangle exceeds the {w}x{h} image",
                    r.face_id
                )));
            }
        }
    }
    write_text(&a.out, &write_landmark_file(&records))?;
    eprintln!("{} face(s) found, 0 failure(s)", records.len());
    Ok(())
}

struct Rated {
    folds: usize,
    seed: u64,
    prepared: Prepared,
}

fn prepare_inputs(i: &RatedInputs, cfg: &FileConfig, dump: Option<&Path>) -> CliResult<Rated> {
    let folds = cfg.resolve(i.folds, "folds", 5)?;
    if folds < 2 {
        return Err(CliError::input(format!("--folds must be at least 2, got {folds}")));
    }
    let seed = cfg.resolve(i.seed, "seed", 0)?;
    require_file(&i.manifest, "manifest")?;
    require_file(&i.landmarks, "landmark file")?;
    require_dir(&i.images, "image directory")?;
    let manifest = load_manifest(&i.manifest)?;
    let records = load_landmarks(&i.landmarks)?;
    let prepared = prepare_rated(&manifest, &records, &i.images, dump);
    for r in &prepared.rejects {
        log::warn!("rejected {}: {}", r.face_id, r.reason);
    }
    Ok(Rated { folds, seed, prepared })
}

pub fn train(a: &TrainArgs, cfg: &FileConfig) -> CliResult<()> {
    let bo_budget = cfg.resolve(a.bo_iters, "bo_iters", DEFAULT_BUDGET)?;
    let bo_init = cfg.resolve(a.bo_init, "bo_init", DEFAULT_INIT)?.min(bo_budget);
    if bo_init < 2 {
        return Err(CliError::input("--bo-iters and --bo-init must be at least 2"));
    }
    let rated = prepare_inputs(&a.inputs, cfg, a.dump_rois.as_deref())?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let rejects = &rated.prepared.rejects;
    write_text(&a.out.join("rejects.jsonl"), &jsonl(rejects))?;

    let options = TrainingOptions {
        folds: rated.folds,
        bo_budget,
        bo_init,
        seed: rated.seed,
        space: SearchSpace::default(),
    };
    let (model, report) = train_composite(&rated.prepared.examples, rejects.len(), &options)?;
    write_text(&a.out.join("model.json"), &model.to_json())?;
    write_text(&a.out.join("training_report.json"), &pretty(&report))?;

    eprintln!("{} face(s) trained, {} rejected", report.faces, report.rejected);
    eprintln!(
        "{:<20} {:>7} {:>6} {:>10} {:>5} {:>8} {:>8}",
        "cue", "method", "cycles", "rate", "leaf", "cv_rmse", "baseline"
    );
    for c in &report.cues {
        let rate = c.learn_rate.map_or("-".to_string(), |r| format!("{r:.4}"));
        eprintln!(
            "{:<20} {:>7} {:>6} {:>10} {:>5} {:>8.3} {:>8.3}",
            c.cue.key(),
            c.method.to_string(),
            c.learn_cycles,
            rate,
            c.min_leaf_size,
            c.cv_rmse,
            c.baseline_rmse
        );
    }
    eprintln!("composite cv smape {:.4}", report.composite_smape);
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs, cfg: &FileConfig) -> CliResult<()> {
    require_file(&a.model, "model")?;
    let model = load_model(&a.model)?;
    let rated = prepare_inputs(&a.inputs, cfg, None)?;
    let eval = evaluate_composite(&model, &rated.prepared.examples, rated.folds, rated.seed)?;
    let text = pretty(&eval);
    match &a.out {
        Some(p) => write_text(p, &text),
        None => {
            println!("{}", text.trim_end());
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    face_id: &'a str,
    image: &'a str,
    #[serde(flatten)]
    score: FatigueScore,
    #[serde(skip_serializing_if = "Option::is_none")]
    demographics: Option<&'a Demographics>,
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    face_id: &'a str,
    image: &'a str,
    error: String,
}

fn score_line(
    model: &facefatigue::CompositeModel,
    image: &GrayImage,
    r: &FaceRecord,
    dump: Option<&Path>,
) -> Result<String, String> {
    let (patches, _) = describe_face(image, r, dump).map_err(|(_, detail)| detail)?;
    let score = model.predict_patches(&patches).map_err(|e| e.to_string())?;
    let line = ScoreLine {
        face_id: &r.face_id,
        image: &r.image,
        score,
        demographics: r.attributes.as_ref(),
    };
    Ok(serde_json::to_string(&line).expect("serializable"))
}

fn error_line(r: &FaceRecord, error: String) -> String {
    serde_json::to_string(&ErrorLine {
        face_id: &r.face_id,
        image: &r.image,
        error,
    })
    .expect("serializable")
}

pub fn predict(a: &PredictArgs) -> CliResult<()> {
    require_file(&a.model, "model")?;
    require_file(&a.image, "image")?;
    require_file(&a.landmarks, "landmark file")?;
    let model = load_model(&a.model)?;
    let records = load_landmarks(&a.landmarks)?;
    let file_name = a.image.file_name();
    let selected: Vec<&FaceRecord> = records
        .iter()
        .filter(|r| match &a.face_id {
            Some(id) => &r.face_id == id,
            None => Path::new(&r.image) == a.image || Path::new(&r.image).file_name() == file_name,
        })
        .collect();
    if selected.is_empty() {
        return Err(CliError::input(format!(
            "no landmarks for {} in {}",
            a.image.display(),
            a.landmarks.display()
        )));
    }
    let image = load_image(&a.image).map_err(CliError::input)?;
    let mut out = String::new();
    for r in selected {
        let line = score_line(&model, &image, r, a.dump_rois.as_deref())
            .map_err(|e| CliError::input(format!("{}: {e}", r.face_id)))?;
        out.push_str(&line);
        out.push('\n');
    }
    match &a.out {
        Some(p) => write_text(p, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

pub fn score_batch(a: &ScoreBatchArgs) -> CliResult<()> {
    require_file(&a.model, "model")?;
    require_file(&a.landmarks, "landmark file")?;
    require_dir(&a.images, "image directory")?;
    let model = load_model(&a.model)?;
    let records = load_landmarks(&a.landmarks)?;
    let mut names: Vec<&str> = records.iter().map(|r| r.image.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    let images: HashMap<&str, Result<GrayImage, String>> =
        names.par_iter().map(|&n| (n, load_image(&a.images.join(n)))).collect();
    let lines: Vec<Result<String, String>> = records
        .par_iter()
        .map(|r| match &images[r.image.as_str()] {
            Ok(img) => score_line(&model, img, r, a.dump_rois.as_deref()).map_err(|e| error_line(r, e)),
            Err(e) => Err(error_line(r, e.clone())),
        })
        .collect();
    let scored = lines.iter().filter(|l| l.is_ok()).count();
    let mut out = String::new();
    for l in &lines {
        out.push_str(match l {
            Ok(s) | Err(s) => s,
        });
        out.push('\n');
    }
    write_text(&a.out, &out)?;
    eprintln!("{scored} of {} face(s) scored", records.len());
    if scored == 0 && !records.is_empty() {
        return Err(CliError::input("no face could be scored"));
    }
    Ok(())
}

pub fn calibrate(a: &CalibrateArgs) -> CliResult<()> {
    require_file(&a.scores, "scores file")?;
    let (records, failed) = parse_score_records(&read_text(&a.scores)?)?;
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    let cal = fit_calibration(&scores)?;
    write_text(&a.out, &pretty(&cal))?;
    if failed > 0 {
        eprintln!("skipped {failed} failed score line(s)");
    }
    let [c1, c2] = &cal.components;
    eprintln!(
        "threshold {:.4}; components N({:.3}, {:.3}²)×{:.3} and N({:.3}, {:.3}²)×{:.3}; {:.2}% above",
        cal.threshold,
        c1.mean,
        c1.std,
        c1.weight,
        c2.mean,
        c2.std,
        c2.weight,
        100.0 * scores.iter().filter(|&&s| s > cal.threshold).count() as f64 / scores.len() as f64
    );
    Ok(())
}

pub fn analyze(a: &AnalyzeArgs, cfg: &FileConfig) -> CliResult<()> {
    let axes_spec: String = cfg.resolve(a.axes.clone(), "axes", "age,gender,race".into())?;
    let axes = axes_spec
        .split(',')
        .map(|s| s.trim().parse::<Axis>())
        .collect::<Result<Vec<_>, _>>()?;
    let alpha = cfg.resolve(a.alpha, "alpha", 0.05)?;
    require_file(&a.scores, "scores file")?;
    require_file(&a.calib, "calibration file")?;
    let (records, _) = parse_score_records(&read_text(&a.scores)?)?;
    let cal: Calibration = serde_json::from_str(&read_text(&a.calib)?)
        .map_err(|e| CliError::input(format!("{}: {e}", a.calib.display())))?;
    cal.validate()?;
    let report = demographic_report(&records, &cal, &axes, alpha)?;
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    write_text(&a.out.join("report.json"), &pretty(&report))?;
    write_text(&a.out.join("histogram.csv"), &histogram_csv(&scores))?;
    eprintln!(
        "{} of {} face(s) above threshold {:.4} ({:.2}%)",
        report.fatigued,
        report.total,
        report.threshold,
        100.0 * report.fatigue_fraction
    );
    for ax in &report.axes {
        if let Some(note) = &ax.note {
            eprintln!("{}: {note}", ax.axis);
        } else {
            let significant = ax.comparisons.iter().filter(|c| c.significant).count();
            eprintln!(
                "{}: {significant} of {} pair(s) significant",
                ax.axis,
                ax.comparisons.len()
            );
        }
    }
    Ok(())
}

pub fn mock_provider(a: &MockArgs) -> CliResult<()> {
    let fixture = match &a.fixture {
        Some(p) => Some(
            serde_json::from_str::<Value>(&read_text(p)?)
                .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let config = MockConfig {
        api_key: a.api_key.clone(),
        api_secret: a.api_secret.clone(),
        fixture,
        transient_failures: a.transient_failures,
    };
    let server = MockProvider::start(&a.bind, config).map_err(|e| CliError::input(format!("{}: {e}", a.bind)))?;
    println!("{}", server.url());
    server.wait();
    Ok(())
}

pub fn synthesize(a: &SynthesizeArgs, cfg: &FileConfig) -> CliResult<()> {
    let seed = cfg.resolve(a.seed, "seed", 0)?;
    write_corpus(&a.out, &synthetic_corpus(a.faces, seed)).map_err(|e| CliError::io(&a.out, e))?;
    eprintln!("{} face(s) written to {}", a.faces, a.out.display());
    Ok(())
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

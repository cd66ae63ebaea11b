mod args;

use std::fmt::{Debug, Display};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use args::{Arch, Cli, Command, CompensateArgs, CurveArgs, EvalArgs, GenDataArgs, Mode, RetrievalArgs, SearchArgs, TrainArgs};
use rotcomp::gpopt::{write_trace_csv, BoConfig, GpConfig};
use rotcomp::hogsvm::{HogConfig, SvmTrainConfig};
use rotcomp::pipeline::{
    compensate, evaluate, fraction_within, histogram, likelihood, record_metrics, retrieval_eval, write_histogram_csv,
    write_likelihood_csv, write_map_csv, write_metrics_csv, write_relevance_csv, Compensator, DescriptorProvider,
    EvalRecord, Estimator, RetrievalMode, RetrievalSet,
};
use rotcomp::raster::{read_image, write_image, Image};
use rotcomp::scorer::{
    build_training_set, load_scorer, median_curve, preprocess, save_scorer, train_hogsvm, write_curve_csv, ScorerModel,
};
use rotcomp::synthgen::{
    angle_grid, gen_retrieval_set, gen_scenes, load_dataset_dir, load_image_dir, write_dataset_dir, DatasetEntry, Labeling,
    MANIFEST_FILE, MIN_SIDE,
};
use rotcomp::tnet::{train, ConvSpec, TemplateNetConfig, TrainConfig};
use rotcomp::AngleDeg;

/// Usage problems exit with 2, failures while running with 1.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Display) -> CliError {
    CliError::Usage(msg.to_string())
}

fn runtime(msg: impl Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(runtime)?;
    }
    eprintln!("seed = {}", cli.seed);
    eprintln!("threads = {}", rayon::current_num_threads());
    match &cli.command {
        Command::GenData(a) => gen_data(a, cli.seed),
        Command::Train(a) => train_cmd(a, cli.seed),
        Command::Compensate(a) => compensate_cmd(a, cli.seed),
        Command::Eval(a) => eval_cmd(a, cli.seed),
        Command::Curve(a) => curve_cmd(a),
        Command::Retrieval(a) => retrieval_cmd(a, cli.seed),
    }
}

fn echo(label: &str, value: &impl Debug) {
    eprintln!("{label} = {value:?}");
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{} is not a directory", path.display())))
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{} does not exist", path.display())))
    }
}

fn load_model(path: &Path) -> Result<ScorerModel> {
    require_file(path)?;
    let bytes = fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    load_scorer(&bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Images of a dataset directory, in manifest order.
fn load_images(dir: &Path) -> Result<Vec<(String, Image)>> {
    require_dir(dir)?;
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(usage(format!("{} has no {MANIFEST_FILE}", dir.display())));
    }
    let entries = load_dataset_dir(dir).map_err(runtime)?;
    if entries.is_empty() {
        return Err(runtime(format!("{} lists no images", dir.display())));
    }
    Ok(entries.into_iter().map(|e| (e.filename, e.image)).collect())
}

/// Parses `0,±45,90`; `±a` yields `a` then `-a`.
fn parse_angles(text: &str) -> Result<Vec<AngleDeg>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (both, digits) = match part.strip_prefix('±').or_else(|| part.strip_prefix("+-")) {
            Some(rest) => (true, rest),
            None => (false, part),
        };
        let v: f64 = digits.parse().map_err(|_| usage(format!("bad angle `{part}`")))?;
        if !v.is_finite() {
            return Err(usage(format!("bad angle `{part}`")));
        }
        out.push(AngleDeg::new(v));
        if both && v != 0.0 {
            out.push(AngleDeg::new(-v));
        }
    }
    if out.is_empty() {
        return Err(usage("no angles given"));
    }
    Ok(out)
}

fn search_configs(s: &SearchArgs, seed: u64) -> Result<(BoConfig, GpConfig)> {
    let bo = BoConfig {
        grid_points: s.grid,
        max_evals: s.max_evals,
        threshold: s.threshold,
        xi: s.xi,
        seed,
        ..BoConfig::default()
    };
    let gp = GpConfig {
        lengthscale: s.lengthscale,
        signal_variance: s.signal_variance,
        noise_variance: s.noise_variance,
    };
    bo.validate().map_err(usage)?;
    gp.validate().map_err(usage)?;
    echo("bo", &bo);
    echo("gp", &gp);
    Ok((bo, gp))
}

fn gen_data(a: &GenDataArgs, seed: u64) -> Result<()> {
    echo("gen-data", a);
    if a.scenes == 0 {
        return Err(usage("--scenes must be at least 1"));
    }
    if a.side < MIN_SIDE {
        return Err(usage(format!("--side must be at least {MIN_SIDE}")));
    }
    let (images, groups) = match a.groups {
        None => (gen_scenes(a.scenes, a.side, seed).map_err(runtime)?, None),
        Some(g) => {
            if g == 0 || a.scenes % g != 0 || a.scenes / g < 2 {
                return Err(usage("--scenes must be a multiple of --groups with at least 2 scenes per group"));
            }
            let set = gen_retrieval_set(g, a.scenes / g, a.side, seed).map_err(runtime)?;
            let (imgs, ids): (Vec<Image>, Vec<usize>) = set.into_iter().unzip();
            (imgs, Some(ids))
        }
    };
    let entries: Vec<DatasetEntry> = images
        .into_iter()
        .enumerate()
        .map(|(i, image)| DatasetEntry {
            filename: format!("scene_{i:05}.png"),
            image,
            label: 0,
            true_angle: AngleDeg::ZERO,
        })
        .collect();
    write_dataset_dir(&a.out, &entries).map_err(runtime)?;
    if let Some(ids) = groups {
        let mut pairs = Vec::new();
        for (i, q) in entries.iter().enumerate() {
            for (j, r) in entries.iter().enumerate() {
                if i != j && ids[i] == ids[j] {
                    pairs.push((q.filename.clone(), r.filename.clone()));
                }
            }
        }
        write_relevance_csv(create(&a.out.join("groups.csv"))?, &pairs).map_err(runtime)?;
    }
    eprintln!("wrote {} scenes to {}", entries.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<()> {
    echo("train", a);
    let images: Vec<Image> = load_images(&a.data)?.into_iter().map(|p| p.1).collect();
    let labeling = if a.tolerant {
        if !(a.tolerance_deg >= 0.0 && a.tolerance_deg < 180.0) {
            return Err(usage("--tolerance-deg must lie in [0, 180)"));
        }
        Labeling::Tolerant {
            tolerance_deg: a.tolerance_deg,
        }
    } else {
        Labeling::Strict
    };
    echo("labeling", &labeling);
    let model = match a.arch {
        Arch::Tnet => {
            let layers = a
                .layers
                .split(',')
                .map(str::parse::<ConvSpec>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(usage)?;
            let netcfg = TemplateNetConfig {
                input_side: a.input_side,
                input_channels: 1,
                layers,
                use_pool2: !a.no_pool2,
            };
            netcfg.stage_shapes().map_err(usage)?;
            let cfg = TrainConfig {
                learning_rate: a.learning_rate,
                momentum: a.momentum,
                batch_size: a.batch_size,
                epochs: a.epochs,
                weight_decay: a.weight_decay,
                seed,
                parallel: true,
            };
            cfg.validate().map_err(usage)?;
            echo("network", &netcfg);
            echo("training", &cfg);
            let data = build_training_set(&images, a.input_side, a.rotations, labeling, seed).map_err(runtime)?;
            eprintln!("{} training samples", data.len());
            let report = train(&data, &cfg, &netcfg).map_err(runtime)?;
            for (i, l) in report.epoch_losses.iter().enumerate() {
                eprintln!("epoch {:>3}: loss {l:.6}", i + 1);
            }
            ScorerModel::TemplateNet(report.net)
        }
        Arch::Hogsvm => {
            let hog = HogConfig {
                input_side: a.input_side,
                ..HogConfig::default()
            };
            hog.validate().map_err(usage)?;
            let cfg = SvmTrainConfig {
                l2: a.svm_l2,
                epochs: a.svm_epochs,
                seed,
            };
            echo("hog", &hog);
            echo("svm", &cfg);
            let data = build_training_set(&images, a.input_side, a.rotations, labeling, seed).map_err(runtime)?;
            eprintln!("{} training samples", data.len());
            ScorerModel::HogSvm(train_hogsvm(&data, &cfg, hog).map_err(runtime)?)
        }
    };
    fs::write(&a.out, save_scorer(&model)).map_err(|e| runtime(format!("{}: {e}", a.out.display())))?;
    eprintln!("saved {} model to {}", model.arch(), a.out.display());
    Ok(())
}

fn compensate_cmd(a: &CompensateArgs, seed: u64) -> Result<()> {
    echo("compensate", a);
    let (bo, gp) = search_configs(&a.search, seed)?;
    let model = load_model(&a.model)?;
    require_file(&a.input)?;
    let img = read_image(&a.input).map_err(|e| runtime(format!("{}: {e}", a.input.display())))?;
    let r = compensate(&model, &img, &bo, &gp).map_err(runtime)?;
    write_image(&a.out, &r.corrected).map_err(|e| runtime(format!("{}: {e}", a.out.display())))?;
    if let Some(path) = &a.trace {
        write_trace_csv(create(path)?, &r.trace).map_err(runtime)?;
    }
    println!("theta_est_deg={} evaluations={}", r.theta_est.degrees(), r.evaluations);
    eprintln!("wall time {:.3} s", r.wall_time_s);
    Ok(())
}

fn eval_cmd(a: &EvalArgs, seed: u64) -> Result<()> {
    echo("eval", a);
    let angles = parse_angles(&a.angles)?;
    let (bo, gp) = search_configs(&a.search, seed)?;
    let model = load_model(&a.model)?;
    let images: Vec<Image> = load_images(&a.data)?
        .into_iter()
        .map(|(_, img)| preprocess(&img, model.input_side()))
        .collect();
    let testset = rotcomp::synthgen::build_eval_set(&images, &angles).map_err(runtime)?;
    let comp = Compensator::new(model, bo, gp);
    let records = evaluate(&comp, &testset).map_err(runtime)?;
    if let Some(path) = &a.hist {
        write_histogram_csv(create(path)?, &histogram(records.iter().map(EvalRecord::residual))).map_err(runtime)?;
    }
    if let Some(path) = &a.matrix {
        write_likelihood_csv(create(path)?, &likelihood(&records)).map_err(runtime)?;
    }
    if let Some(path) = &a.metrics {
        write_metrics_csv(create(path)?, &records).map_err(runtime)?;
    }
    let m = record_metrics(&records).map_err(runtime)?;
    eprintln!(
        "{} samples: {:.1}% within 10 deg, {:.2} evaluations and {:.4} s per image",
        records.len(),
        100.0 * fraction_within(&records, 10.0),
        m.mean_evaluations,
        m.mean_wall_time_s
    );
    Ok(())
}

fn curve_cmd(a: &CurveArgs) -> Result<()> {
    echo("curve", a);
    if !(a.step > 0.0 && a.step <= 360.0) {
        return Err(usage("--step must lie in (0, 360]"));
    }
    let model = load_model(&a.model)?;
    let images: Vec<Image> = load_images(&a.data)?.into_iter().map(|p| p.1).collect();
    let curve = median_curve(&model, &images, &angle_grid(-180.0, a.step)).map_err(runtime)?;
    write_curve_csv(create(&a.out)?, "median_score", &curve).map_err(runtime)?;
    eprintln!("wrote {} points to {}", curve.len(), a.out.display());
    Ok(())
}

fn retrieval_cmd(a: &RetrievalArgs, seed: u64) -> Result<()> {
    echo("retrieval", a);
    let angles = parse_angles(&a.angles)?;
    let (bo, gp) = search_configs(&a.search, seed)?;
    require_dir(&a.dataset)?;
    require_file(&a.groups)?;
    let named = if a.dataset.join(MANIFEST_FILE).is_file() {
        load_images(&a.dataset)?
    } else {
        load_image_dir(&a.dataset).map_err(runtime)?
    };
    let (names, images): (Vec<String>, Vec<Image>) = named.into_iter().unzip();
    let pairs = rotcomp::pipeline::load_relevance_csv(&a.groups).map_err(runtime)?;
    let set = RetrievalSet::from_pairs(names, images, &pairs).map_err(runtime)?;

    let model = match &a.model {
        Some(p) => Some(load_model(p)?),
        None => None,
    };
    let mode = match a.mode {
        Mode::Raw => RetrievalMode::Raw,
        Mode::Compensated => RetrievalMode::Compensated,
        Mode::Maxpooled => RetrievalMode::Maxpooled,
        Mode::Corotated => RetrievalMode::Corotated,
    };
    if matches!(mode, RetrievalMode::Compensated | RetrievalMode::Maxpooled) && model.is_none() {
        return Err(usage("--model is required for the compensated and maxpooled modes"));
    }
    let provider = if a.features == "hog" {
        let side = model.as_ref().map_or(64, ScorerModel::input_side);
        DescriptorProvider::Hog(HogConfig {
            input_side: side,
            ..HogConfig::default()
        })
    } else {
        let dir = Path::new(&a.features);
        require_dir(dir)?;
        DescriptorProvider::External(dir.to_path_buf())
    };
    let comp = model.map(|m| Compensator::new(m, bo, gp));
    let maps = retrieval_eval(&provider, &set, &angles, mode, comp.as_ref().map(|c| c as &dyn Estimator))
        .map_err(runtime)?;
    write_map_csv(create(&a.out)?, &maps).map_err(runtime)?;
    for (angle, map) in &maps {
        eprintln!("angle {:>6}: MAP {map:.4}", angle.degrees());
    }
    Ok(())
}

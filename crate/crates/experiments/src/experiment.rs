//! Running one configured experiment end to end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use morphlearn::datagen::{
    list_pgms, load_paired_dirs, psnr_from_mse, substream, synth_defects, synth_scene, Operator, PairStream, TaskSpec,
};
use morphlearn::imaging::{denormalize, load_pgm, normalize, save_pgm, Image};
use morphlearn::network::{load_params, save_params, Network};
use morphlearn::training::{train_online, CurvePoint, Sample};
use morphlearn::{Image64, Network64};

use crate::config::{DataSource, ExperimentConfig, Synth};
use crate::error::{AtStage, ExperimentError, Result, Stage};

/// Error of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetric {
    pub name: String,
    pub mse: f64,
    pub psnr: f64,
}

/// Per-image errors with their means. `mean_psnr` averages the per-image
/// PSNR values.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub images: Vec<ImageMetric>,
    pub mean_mse: f64,
    pub mean_psnr: f64,
}

impl Metrics {
    fn from_images(images: Vec<ImageMetric>) -> Self {
        let n = images.len().max(1) as f64;
        let mean_mse = images.iter().map(|m| m.mse).sum::<f64>() / n;
        let mean_psnr = images.iter().map(|m| m.psnr).sum::<f64>() / n;
        Self {
            images,
            mean_mse,
            mean_psnr,
        }
    }
}

/// A learned order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnedOrder {
    pub layer: usize,
    pub filter: usize,
    pub order: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub name: String,
    /// Provenance of the images, also written to the report header.
    pub data: String,
    /// Held-out metrics of the selected (best validation) snapshot.
    pub network: Metrics,
    pub network_final: Metrics,
    pub baseline: Option<Metrics>,
    /// Orders of the selected snapshot.
    pub orders: Vec<LearnedOrder>,
    pub best_sample: u64,
    pub samples: u64,
    pub stopped_early: bool,
    pub curve: Vec<CurvePoint>,
    pub best: Network64,
    pub final_net: Network64,
    pub output_dir: PathBuf,
}

/// Held-out pairs with their file stems. Inputs are full size (noise
/// already drawn); targets are cropped to the network output.
#[derive(Debug, Clone)]
pub struct HeldOut {
    pub names: Vec<String>,
    pub samples: Vec<Sample<f64>>,
}

/// Everything a run needs besides the network.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: PairStream<f64>,
    /// Snapshot-selection pairs; the held-out pairs when no separate
    /// validation images exist.
    pub validation: Vec<Sample<f64>>,
    pub held_out: HeldOut,
}

fn synth_image(kind: &Synth, width: usize, height: usize, seed: u64, index: u64) -> morphlearn::Result<Image64> {
    let mut rng = substream(seed, index);
    match kind {
        Synth::Scene(s) => synth_scene(width, height, s, &mut rng),
        Synth::Defects(d) => synth_defects(width, height, d, &mut rng),
    }
}

fn load_dir(dir: &Path) -> Result<(Vec<String>, Vec<Image64>)> {
    let names = list_pgms(dir).at(Stage::Data)?;
    if names.is_empty() {
        return Err(ExperimentError::invalid(Stage::Data, format!("no .pgm files in {}", dir.display())));
    }
    let images = names
        .iter()
        .map(|n| load_pgm::<f64>(dir.join(n)).map(|i| normalize(&i)))
        .collect::<morphlearn::Result<Vec<_>>>()
        .at(Stage::Data)?;
    Ok((names.iter().map(|n| stem(n)).collect(), images))
}

fn stem(file_name: &str) -> String {
    Path::new(file_name)
        .file_stem()
        .map_or_else(|| file_name.to_string(), |s| s.to_string_lossy().into_owned())
}

fn targets_for(op: &Operator, images: &[Image64]) -> Result<Vec<Image64>> {
    images
        .iter()
        .map(|f| {
            op.apply(f).at(Stage::Data)?.ok_or_else(|| {
                ExperimentError::invalid(Stage::Data, "operator `external` needs data.source = paired")
            })
        })
        .collect()
}

fn held_out_task(config: &ExperimentConfig, seed: u64) -> TaskSpec {
    TaskSpec {
        patch: None,
        seed,
        ..config.task.clone()
    }
}

/// Checks that every referenced directory exists and the output directory
/// can be created, before any work is done.
pub fn check_inputs(config: &ExperimentConfig) -> Result<()> {
    for dir in config.data.dirs() {
        if !dir.is_dir() {
            return Err(ExperimentError::invalid(
                Stage::Config,
                format!("input directory {} does not exist", dir.display()),
            ));
        }
    }
    if matches!(config.task.operator, Operator::External) != matches!(config.data, DataSource::Paired { .. }) {
        return Err(ExperimentError::invalid(
            Stage::Config,
            "task.operator = external goes together with data.source = paired",
        ));
    }
    config.network.validate().at(Stage::Config)?;
    Ok(())
}

/// Loads or synthesizes the training stream, validation and held-out pairs.
pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData> {
    let margin = config.network.margin().at(Stage::Build)?;
    let op = &config.task.operator;
    let (train_in, train_tg, val, eval_names, eval_in, eval_tg) = match &config.data {
        DataSource::Synthetic {
            kind,
            width,
            height,
            train,
            validation,
            eval,
            seed,
        } => {
            let total = (train + validation + eval) as u64;
            let images = (0..total)
                .map(|i| synth_image(kind, *width, *height, *seed, i))
                .collect::<morphlearn::Result<Vec<_>>>()
                .at(Stage::Data)?;
            let targets = targets_for(op, &images)?;
            let (tr, rest) = images.split_at(*train);
            let (va, ev) = rest.split_at(*validation);
            let (trt, restt) = targets.split_at(*train);
            let (vat, evt) = restt.split_at(*validation);
            let val = (!va.is_empty()).then(|| (va.to_vec(), vat.to_vec()));
            let names = (0..ev.len()).map(|j| format!("heldout_{j:03}")).collect();
            (tr.to_vec(), trt.to_vec(), val, names, ev.to_vec(), evt.to_vec())
        }
        DataSource::Files { train_dir, eval_dir } => {
            let (_, tr) = load_dir(train_dir)?;
            let (names, ev) = load_dir(eval_dir)?;
            let trt = targets_for(op, &tr)?;
            let evt = targets_for(op, &ev)?;
            (tr, trt, None, names, ev, evt)
        }
        DataSource::Paired {
            train_inputs,
            train_targets,
            eval_inputs,
            eval_targets,
        } => {
            let tr = load_paired_dirs::<f64>(train_inputs, train_targets).at(Stage::Data)?;
            let ev = load_paired_dirs::<f64>(eval_inputs, eval_targets).at(Stage::Data)?;
            if tr.is_empty() || ev.is_empty() {
                return Err(ExperimentError::invalid(Stage::Data, "paired directories contain no .pgm files"));
            }
            let (_, tri, trt): (Vec<_>, Vec<_>, Vec<_>) = unzip3(tr);
            let (names, evi, evt) = unzip3(ev);
            (tri, trt, None, names.iter().map(|n| stem(n)).collect(), evi, evt)
        }
    };
    if eval_in.is_empty() {
        return Err(ExperimentError::invalid(Stage::Data, "no held-out images"));
    }
    let train = PairStream::with_targets(train_in, train_tg, &config.task, margin).at(Stage::Data)?;
    let held = PairStream::with_targets(eval_in, eval_tg, &held_out_task(config, config.eval_seed), margin)
        .at(Stage::Data)?
        .full_pairs(config.eval_seed)
        .at(Stage::Data)?;
    let validation = match val {
        Some((vi, vt)) => {
            let seed = config.eval_seed.wrapping_add(1);
            PairStream::with_targets(vi, vt, &held_out_task(config, seed), margin)
                .at(Stage::Data)?
                .full_pairs(seed)
                .at(Stage::Data)?
        }
        None => held.clone(),
    };
    Ok(PreparedData {
        train,
        validation,
        held_out: HeldOut {
            names: eval_names,
            samples: held,
        },
    })
}

fn unzip3<A, B, C>(v: Vec<(A, B, C)>) -> (Vec<A>, Vec<B>, Vec<C>) {
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for (a, b, c) in v {
        out.0.push(a);
        out.1.push(b);
        out.2.push(c);
    }
    out
}

fn metric(name: &str, pred: &Image64, target: &Image64, stage: Stage) -> Result<ImageMetric> {
    let mse = morphlearn::datagen::mse(pred, target).at(stage)?;
    Ok(ImageMetric {
        name: name.to_string(),
        mse,
        psnr: psnr_from_mse(mse),
    })
}

/// Held-out metrics of `net`.
pub fn evaluate_network(net: &Network64, held: &HeldOut) -> Result<Metrics> {
    let preds = predict_all(net, held.samples.iter().map(|s| &s.input).collect())?;
    let images = held
        .names
        .iter()
        .zip(&held.samples)
        .zip(&preds)
        .map(|((n, s), p)| metric(n, p, &s.target, Stage::Evaluate))
        .collect::<Result<Vec<_>>>()?;
    Ok(Metrics::from_images(images))
}

fn predict_all(net: &Network64, inputs: Vec<&Image64>) -> Result<Vec<Image64>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = inputs.into_iter().map(|f| scope.spawn(move || net.predict(f))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prediction thread panicked").at(Stage::Evaluate))
            .collect()
    })
}

/// Applies the oracle `pipeline` (in order) to each held-out input and
/// scores it on the same cropped region as the network output.
pub fn eval_baseline(held: &HeldOut, pipeline: &[Operator]) -> Result<Metrics> {
    let images = held
        .names
        .iter()
        .zip(&held.samples)
        .map(|(name, s)| {
            let mut img = s.input.clone();
            for op in pipeline {
                img = op.apply(&img).at(Stage::Baseline)?.ok_or_else(|| {
                    ExperimentError::invalid(Stage::Baseline, "`external` cannot be part of a baseline pipeline")
                })?;
            }
            let (w, h) = s.target.dims();
            let cropped = img.center_crop(w, h).at(Stage::Baseline)?;
            metric(name, &cropped, &s.target, Stage::Baseline)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Metrics::from_images(images))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| ExperimentError::io(Stage::Write, path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| ExperimentError::io(Stage::Write, path, e))
}

/// Writes `values` (a `width`-wide grid) as a PGM stretched so the minimum
/// maps to 0 and the maximum to 255, with the mapping in `<file>.meta`.
pub fn write_stretched_pgm(values: &[f64], width: usize, path: &Path) -> Result<()> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let pixels: Vec<f64> = values
        .iter()
        .map(|&v| if span > 0.0 { 255.0 * (v - min) / span } else { 0.0 })
        .collect();
    let img = Image::new(width, values.len() / width.max(1), pixels).at(Stage::Write)?;
    save_pgm(&img, path).at(Stage::Write)?;
    let mut meta = path.as_os_str().to_owned();
    meta.push(".meta");
    write_file(
        Path::new(&meta),
        format!("affine: pixel = round(255 * (value - min) / (max - min)); min = {min}; max = {max}\n"),
    )
}

fn grid_csv(values: &[f64], width: usize) -> String {
    let mut out = String::new();
    for row in values.chunks(width.max(1)) {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Kernel images, raw CSVs and `orders.csv` for every PConv filter.
pub fn write_kernels(net: &Network64, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let mut orders = String::from("layer,filter,order\n");
    for (layer, filter, params) in net.pconv_filters() {
        let w = params.kernel.weights();
        let width = params.kernel.width();
        let log_w: Vec<f64> = w.iter().map(|v| v.ln()).collect();
        let base = format!("layer{layer}_filter{filter}");
        write_stretched_pgm(w, width, &dir.join(format!("{base}_w.pgm")))?;
        write_stretched_pgm(&log_w, width, &dir.join(format!("{base}_logw.pgm")))?;
        write_file(&dir.join(format!("{base}_w.csv")), grid_csv(w, width))?;
        write_file(&dir.join(format!("{base}_logw.csv")), grid_csv(&log_w, width))?;
        let _ = writeln!(orders, "{layer},{filter},{}", params.order);
    }
    write_file(&dir.join("orders.csv"), orders)
}

/// Runs `net` on normalized images and writes the denormalized outputs.
fn write_predictions(net: &Network64, names: &[String], inputs: &[&Image64], dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let preds = predict_all(net, inputs.to_vec())?;
    let mut paths = Vec::with_capacity(names.len());
    for (name, p) in names.iter().zip(&preds) {
        let path = dir.join(format!("{name}.pgm"));
        save_pgm(&denormalize(p), &path).at(Stage::Write)?;
        paths.push(path);
    }
    Ok(paths)
}

fn metrics_rows(out: &mut String, subject: &str, m: &Metrics) {
    for im in &m.images {
        let _ = writeln!(out, "{subject},{},{},{}", im.name, im.mse, im.psnr);
    }
    let _ = writeln!(out, "{subject},mean,{},{}", m.mean_mse, m.mean_psnr);
}

impl ExperimentReport {
    /// `report.csv` contents: `#` header lines, then
    /// `subject,image,mse,psnr` rows.
    pub fn to_csv(&self, config: &ExperimentConfig) -> String {
        let mut out = String::new();
        let layers: Vec<String> = config.network.layers.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "# experiment: {}", self.name);
        let _ = writeln!(out, "# data: {}", self.data);
        let _ = writeln!(out, "# task: operator {}, noise {}", config.task.operator, config.task.noise);
        let _ = writeln!(out, "# network: {}", layers.join("; "));
        let _ = writeln!(
            out,
            "# selection: snapshot at sample {} of {} (lowest validation MSE){}",
            self.best_sample,
            self.samples,
            if self.stopped_early { ", stopped early" } else { "" }
        );
        let orders: Vec<String> = self
            .orders
            .iter()
            .map(|o| format!("L{}F{}={}", o.layer, o.filter, o.order))
            .collect();
        let _ = writeln!(out, "# orders: {}", orders.join(" "));
        out.push_str("subject,image,mse,psnr\n");
        metrics_rows(&mut out, "network", &self.network);
        metrics_rows(&mut out, "network_final", &self.network_final);
        if let Some(b) = &self.baseline {
            metrics_rows(&mut out, "baseline", b);
        }
        out
    }
}

/// Trains, evaluates and writes every artifact under the output directory.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    check_inputs(config)?;
    let out = &config.output_dir;
    create_dir(out)?;
    let mut data = prepare_data(config)?;
    let mut net = Network::build(&config.network, config.train.seed).at(Stage::Build)?;
    let train = train_online(&mut net, &mut data.train, &data.validation, &config.train).at(Stage::Train)?;

    let network = evaluate_network(&train.best, &data.held_out)?;
    let network_final = evaluate_network(&net, &data.held_out)?;
    let baseline = match &config.baseline {
        Some(p) => Some(eval_baseline(&data.held_out, p)?),
        None => None,
    };
    let orders = train
        .best
        .pconv_filters()
        .map(|(layer, filter, p)| LearnedOrder {
            layer,
            filter,
            order: p.order,
        })
        .collect();
    let report = ExperimentReport {
        name: config.name.clone(),
        data: config.data.describe(),
        network,
        network_final,
        baseline,
        orders,
        best_sample: train.best_sample,
        samples: train.samples,
        stopped_early: train.stopped_early,
        curve: train.curve.clone(),
        best: train.best.clone(),
        final_net: net,
        output_dir: out.clone(),
    };

    let params = out.join("params");
    create_dir(&params)?;
    save_params(&report.final_net, params.join("final.txt")).at(Stage::Write)?;
    save_params(&report.best, params.join("best.txt")).at(Stage::Write)?;
    write_kernels(&report.best, &out.join("kernels"))?;
    let held = &data.held_out;
    let inputs: Vec<&Image64> = held.samples.iter().map(|s| &s.input).collect();
    let heldout_dir = out.join("heldout");
    create_dir(&heldout_dir)?;
    for (name, f) in held.names.iter().zip(&inputs) {
        save_pgm(&denormalize(f), heldout_dir.join(format!("{name}.pgm"))).at(Stage::Write)?;
    }
    write_predictions(&report.best, &held.names, &inputs, &out.join("pred"))?;
    write_file(&out.join("curves.csv"), train.curve_csv())?;
    write_file(&out.join("config.txt"), config.to_string())?;
    write_file(&out.join("report.csv"), report.to_csv(config))?;
    Ok(report)
}

/// Metrics of a saved parameter file on the configured held-out set.
pub fn eval(config: &ExperimentConfig, params: &Path) -> Result<(Metrics, Option<Metrics>)> {
    check_inputs(config)?;
    let net: Network64 = load_params(params).at(Stage::Apply)?;
    if net.spec() != &config.network {
        return Err(ExperimentError::invalid(
            Stage::Apply,
            format!("{} was trained for a different network than the config describes", params.display()),
        ));
    }
    let data = prepare_data(config)?;
    let metrics = evaluate_network(&net, &data.held_out)?;
    let baseline = match &config.baseline {
        Some(p) => Some(eval_baseline(&data.held_out, p)?),
        None => None,
    };
    Ok((metrics, baseline))
}

/// Runs a saved network on PGM files and writes `<out>/<file name>`.
pub fn apply(params: &Path, images: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    let net: Network64 = load_params(params).at(Stage::Apply)?;
    let mut names = Vec::with_capacity(images.len());
    let mut inputs = Vec::with_capacity(images.len());
    for path in images {
        inputs.push(normalize(&load_pgm::<f64>(path).at(Stage::Apply)?));
        names.push(path.file_name().map_or_else(|| "image".into(), |n| stem(&n.to_string_lossy())));
    }
    for f in &inputs {
        net.output_dims(f.dims()).at(Stage::Apply)?;
    }
    write_predictions(&net, &names, &inputs.iter().collect::<Vec<_>>(), out)
}

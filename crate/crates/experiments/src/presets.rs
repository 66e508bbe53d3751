//! Built-in experiment configurations.
//!
//! A preset is config text with a `{seed}`-derived block appended, so
//! `morphlearn preset <name>` and a config file written by hand behave the
//! same. From a master seed `s`: images use `s`, training noise and patches
//! `s + 1`, held-out noise `s + 2`, network initialization `s + 3`.

use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::ConfigResult;

const SCENE_SINGLE: &str = "\
network.layer.0 = pconv k=11 filters=1 p=random in=input
task.patch = 48
train.lr0 = 0.01
train.order_lr_scale = 3000
train.decay_tau = 20000
train.momentum = 0.9
train.grad_clip = 1
train.max_samples = 30000
train.eval_every = 1000
data.kind = scene
data.width = 128
data.height = 128
data.train_images = 2
data.validation_images = 1
data.eval_images = 2
";

const DILATE_SQUARE5: &str = "task.operator = dilate:square:5\n";
const ERODE_SQUARE5: &str = "task.operator = erode:square:5\n";
const DILATE_LINE15_45: &str = "task.operator = dilate:line:15:45\n";
const ERODE_LINE15_45: &str = "task.operator = erode:line:15:45\n";
const DILATE_DIAMOND5: &str = "task.operator = dilate:diamond:5\n";
const ERODE_DIAMOND5: &str = "task.operator = erode:diamond:5\n";

const OPEN_SQUARE5: &str = "\
task.operator = open:square:5
network.layer.0 = pconv k=11 filters=1 p=random in=input
network.layer.1 = pconv k=11 filters=1 p=random in=0
task.patch = 64
train.lr0 = 0.01
train.order_lr_scale = 3000
train.decay_tau = 20000
train.grad_clip = 1
train.max_samples = 40000
train.eval_every = 1000
train.alternate = every:1
train.epoch_len = 2000
data.kind = scene
data.train_images = 2
data.validation_images = 1
data.eval_images = 2
";

const CLOSE_LINE10_45: &str = "\
task.operator = close:line:10:45
network.layer.0 = pconv k=11 filters=1 p=random in=input
network.layer.1 = pconv k=11 filters=1 p=random in=0
task.patch = 64
train.lr0 = 0.01
train.order_lr_scale = 3000
train.decay_tau = 20000
train.grad_clip = 1
train.max_samples = 40000
train.eval_every = 1000
train.alternate = every:1
train.epoch_len = 2000
data.kind = scene
data.train_images = 2
data.validation_images = 1
data.eval_images = 2
";

const TOPHAT_COMMON: &str = "\
task.operator = white_top_hat:disk:5
task.patch = 64
train.max_samples = 30000
train.eval_every = 1000
train.decay_tau = 20000
train.grad_clip = 1
data.kind = defects
data.defects.lines = 0
data.train_images = 2
data.validation_images = 1
data.eval_images = 2
";

const TOPHAT_DISK5: &str = "\
network.layer.0 = pconv k=11 filters=1 p=- in=input
network.layer.1 = pconv k=11 filters=1 p=+ in=0
network.layer.2 = absdiff in=input,1
train.lr0 = 0.01
train.order_lr_scale = 3000
";

const TOPHAT_DISK5_CNN: &str = "\
network.layer.0 = conv k=11 out=1 act=relu in=input
network.layer.1 = conv k=11 out=1 act=relu in=0
network.layer.2 = absdiff in=input,1
train.lr0 = 0.01
";

const DUAL_TOPHAT: &str = "\
task.operator = dual_top_hat:disk:5+line:10:0
network.layer.0 = pconv k=11 filters=2 p=-/+ in=input
network.layer.1 = pconv k=11 filters=2 p=+/- in=0
network.layer.2 = conv k=1 out=1 in=input,1
network.layer.3 = absdiff in=input,2
task.patch = 64
train.lr0 = 0.01
train.order_lr_scale = 3000
train.decay_tau = 20000
train.grad_clip = 1
train.max_samples = 40000
train.eval_every = 1000
data.kind = defects
data.defects.orientation = 90
data.train_images = 2
data.validation_images = 1
data.eval_images = 2
";

const DENOISE_BINOMIAL: &str = "\
task.operator = identity
task.noise = binomial:0.1
network.layer.0 = pconv k=5 filters=1 p=random in=input
network.layer.1 = pconv k=5 filters=1 p=random in=0
task.patch = 48
train.lr0 = 0.01
train.order_lr_scale = 10
train.decay_tau = 20000
train.grad_clip = 1
train.max_samples = 30000
train.eval_every = 1000
data.kind = scene
data.train_images = 2
data.validation_images = 1
data.eval_images = 2
baseline.pipeline = close:square:2
";

const DENOISE_SALTPEPPER: &str = "\
task.operator = identity
task.noise = salt_pepper:0.1
network.layer.0 = pconv k=5 filters=1 p=random in=input
network.layer.1 = pconv k=5 filters=1 p=random in=0
network.layer.2 = pconv k=5 filters=1 p=random in=1
network.layer.3 = pconv k=5 filters=1 p=random in=2
task.patch = 48
train.lr0 = 0.01
train.order_lr_scale = 10
train.decay_tau = 40000
train.grad_clip = 1
train.max_samples = 100000
train.eval_every = 1000
data.kind = scene
data.train_images = 2
data.validation_images = 1
data.eval_images = 2
baseline.pipeline = close:square:2, open:square:2
";

const TV_APPROX: &str = "\
task.operator = external
task.noise = none
network.layer.0 = pconv k=11 filters=2 p=random in=input
network.layer.1 = pconv k=11 filters=2 p=random in=0
network.layer.2 = average in=1
task.patch = 64
train.lr0 = 0.01
train.order_lr_scale = 3000
train.decay_tau = 20000
train.grad_clip = 1
train.max_samples = 20000
train.eval_every = 1000
data.source = paired
data.train_inputs = tv/train/inputs
data.train_targets = tv/train/targets
data.eval_inputs = tv/eval/inputs
data.eval_targets = tv/eval/targets
";

/// Every preset name with its one-line description.
pub const PRESETS: &[(&str, &str)] = &[
    ("dilate-square5", "single 11x11 PConv learning dilation by a 5x5 square"),
    ("erode-square5", "single 11x11 PConv learning erosion by a 5x5 square"),
    ("dilate-line15-45", "single 15x15 PConv learning dilation by a 15-pixel line at 45 degrees"),
    ("erode-line15-45", "single 15x15 PConv learning erosion by a 15-pixel line at 45 degrees"),
    ("dilate-diamond5", "single 11x11 PConv learning dilation by a diamond of side 5"),
    ("erode-diamond5", "single 11x11 PConv learning erosion by a diamond of side 5"),
    ("open-square5", "two PConv layers learning opening by a 5x5 square"),
    ("close-line10-45", "two PConv layers learning closing by a 10-pixel line at 45 degrees"),
    ("tophat-disk5", "PConv, PConv, AbsDiff learning the white top-hat by a disk of size 5"),
    ("tophat-disk5-cnn", "the tophat-disk5 topology with Conv+relu in place of PConv"),
    ("dual-tophat", "two 2-filter PConv layers, Conv, AbsDiff learning white plus black top-hats"),
    ("denoise-binomial", "two 5x5 PConv layers removing 10% binomial noise, against close(square 2)"),
    ("denoise-saltpepper", "four 5x5 PConv layers removing 10% salt-and-pepper noise, against open(close(square 2))"),
    ("tv-approx", "two 2-filter PConv layers plus averaging, trained on external TV-restored targets"),
];

fn body(name: &str) -> Option<String> {
    let single = |op: &str, k: Option<usize>| {
        let mut s = format!("{op}{SCENE_SINGLE}");
        if let Some(k) = k {
            s = s
                .replace("pconv k=11", &format!("pconv k={k}"))
                .replace("task.patch = 48", "task.patch = 64");
        }
        s
    };
    Some(match name {
        "dilate-square5" => single(DILATE_SQUARE5, None),
        "erode-square5" => single(ERODE_SQUARE5, None),
        "dilate-line15-45" => single(DILATE_LINE15_45, Some(15)),
        "erode-line15-45" => single(ERODE_LINE15_45, Some(15)),
        "dilate-diamond5" => single(DILATE_DIAMOND5, None),
        "erode-diamond5" => single(ERODE_DIAMOND5, None),
        "open-square5" => OPEN_SQUARE5.to_string(),
        "close-line10-45" => CLOSE_LINE10_45.to_string(),
        "tophat-disk5" => format!("{TOPHAT_COMMON}{TOPHAT_DISK5}"),
        "tophat-disk5-cnn" => format!("{TOPHAT_COMMON}{TOPHAT_DISK5_CNN}"),
        "dual-tophat" => DUAL_TOPHAT.to_string(),
        "denoise-binomial" => DENOISE_BINOMIAL.to_string(),
        "denoise-saltpepper" => DENOISE_SALTPEPPER.to_string(),
        "tv-approx" => TV_APPROX.to_string(),
        _ => return None,
    })
}

/// Config text of preset `name` for master seed `seed`, writing under
/// `output_dir`. `None` for unknown names.
pub fn preset_text(name: &str, seed: u64, output_dir: &Path) -> Option<String> {
    let mut text = body(name)?;
    text.push_str(&format!(
        "experiment.name = {name}\ntask.seed = {}\ntask.eval_seed = {}\ntrain.seed = {}\nio.output_dir = {}\n",
        seed.wrapping_add(1),
        seed.wrapping_add(2),
        seed.wrapping_add(3),
        output_dir.display()
    ));
    if !text.contains("data.source = paired") {
        text.push_str(&format!("data.seed = {seed}\n"));
    }
    Some(text)
}

/// Parsed preset. Relative data paths resolve against `data_root`.
pub fn preset(name: &str, seed: u64, output_dir: &Path, data_root: &Path) -> Option<ConfigResult<ExperimentConfig>> {
    preset_text(name, seed, output_dir).map(|t| ExperimentConfig::parse(&t, data_root))
}

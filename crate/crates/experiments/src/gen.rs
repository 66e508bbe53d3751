//! Writing synthetic datasets to disk.

use std::fs;
use std::path::{Path, PathBuf};

use morphlearn::datagen::{substream, synth_defects, synth_scene, NoiseModel, Operator};
use morphlearn::imaging::{denormalize, save_pgm};
use morphlearn::Image64;

use crate::config::Synth;
use crate::error::{AtStage, ExperimentError, Result, Stage};

/// Writes `count` images to `<out>/inputs/img_NNN.pgm`, corrupted by
/// `noise`, and the operator applied to the clean image to
/// `<out>/targets/img_NNN.pgm` when an operator is given. Image `i` uses
/// substream `i` of `seed`; its noise uses substream `i` of `seed + 1`.
pub fn generate(
    kind: &Synth,
    count: usize,
    (width, height): (usize, usize),
    seed: u64,
    operator: Option<&Operator>,
    noise: NoiseModel,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let inputs = out.join("inputs");
    let targets = out.join("targets");
    fs::create_dir_all(&inputs).map_err(|e| ExperimentError::io(Stage::Write, &inputs, e))?;
    if operator.is_some() {
        fs::create_dir_all(&targets).map_err(|e| ExperimentError::io(Stage::Write, &targets, e))?;
    }
    let mut written = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = substream(seed, i as u64);
        let clean: Image64 = match kind {
            Synth::Scene(s) => synth_scene(width, height, s, &mut rng),
            Synth::Defects(d) => synth_defects(width, height, d, &mut rng),
        }
        .at(Stage::Data)?;
        let name = format!("img_{i:03}.pgm");
        let noisy = noise
            .apply(&clean, &mut substream(seed.wrapping_add(1), i as u64))
            .at(Stage::Data)?;
        let path = inputs.join(&name);
        save_pgm(&denormalize(&noisy), &path).at(Stage::Write)?;
        written.push(path);
        if let Some(op) = operator {
            let t = op.apply(&clean).at(Stage::Data)?.ok_or_else(|| {
                ExperimentError::invalid(Stage::Data, "operator `external` cannot generate targets")
            })?;
            save_pgm(&denormalize(&t), targets.join(&name)).at(Stage::Write)?;
        }
    }
    Ok(written)
}

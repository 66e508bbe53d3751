//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! experiment.name = dilate-square5
//! task.operator = dilate:square:5
//! network.layer.0 = pconv k=11 filters=1 p=random in=input
//! train.lr0 = 0.01
//! baseline.pipeline = close:square:2, open:square:2
//! ```
//!
//! Keys are `section.key`; list values are comma separated. Unknown keys are
//! errors so typos never silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use morphlearn::datagen::{DefectSpec, NoiseModel, Operator, SceneSpec, TaskSpec};
use morphlearn::network::{LayerSpec, NetworkSpec};
use morphlearn::training::{Alternation, TrainConfig};

use crate::error::{ConfigError, ConfigResult};

/// Synthetic image family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Synth {
    Scene(SceneSpec),
    Defects(DefectSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Generated from `seed`: image `i` of the concatenated train,
    /// validation and held-out sets uses substream `i`.
    Synthetic {
        kind: Synth,
        width: usize,
        height: usize,
        train: usize,
        /// Images used to select the best snapshot; 0 selects on the
        /// held-out set.
        validation: usize,
        eval: usize,
        seed: u64,
    },
    /// Clean PGM images from two directories.
    Files { train_dir: PathBuf, eval_dir: PathBuf },
    /// Input/target PGM pairs matched by file name.
    Paired {
        train_inputs: PathBuf,
        train_targets: PathBuf,
        eval_inputs: PathBuf,
        eval_targets: PathBuf,
    },
}

impl DataSource {
    /// Short description recorded in every report header.
    pub fn describe(&self) -> String {
        match self {
            DataSource::Synthetic {
                kind,
                width,
                height,
                train,
                validation,
                eval,
                seed,
            } => {
                let family = match kind {
                    Synth::Scene(_) => "scene",
                    Synth::Defects(_) => "defect",
                };
                format!(
                    "synthetic {family} images ({train} train + {validation} validation + {eval} held-out, {width}x{height}, seed {seed}); \
                     no natural image corpus was used"
                )
            }
            DataSource::Files { train_dir, eval_dir } => {
                format!("images from {} (train) and {} (held-out)", train_dir.display(), eval_dir.display())
            }
            DataSource::Paired {
                train_inputs,
                eval_inputs,
                ..
            } => format!(
                "paired files from {} (train) and {} (held-out)",
                train_inputs.display(),
                eval_inputs.display()
            ),
        }
    }

    /// Directories the source reads from.
    pub fn dirs(&self) -> Vec<&Path> {
        match self {
            DataSource::Synthetic { .. } => Vec::new(),
            DataSource::Files { train_dir, eval_dir } => vec![train_dir, eval_dir],
            DataSource::Paired {
                train_inputs,
                train_targets,
                eval_inputs,
                eval_targets,
            } => vec![train_inputs, train_targets, eval_inputs, eval_targets],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: TaskSpec,
    /// Seed of the noise drawn on held-out inputs.
    pub eval_seed: u64,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub data: DataSource,
    /// Oracle operators applied in order to the held-out inputs.
    pub baseline: Option<Vec<Operator>>,
    pub output_dir: PathBuf,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> ConfigResult<T> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> ConfigResult<Option<T>> {
    if value.trim() == "none" {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

fn fmt_optional<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

fn parse_pair(key: &str, value: &str) -> ConfigResult<(f64, f64)> {
    let (a, b) = value.split_once(',').ok_or_else(|| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })?;
    Ok((parse_value(key, a)?, parse_value(key, b)?))
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key).map(|(_, v)| v)
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> ConfigResult<T> {
        match self.take(key) {
            Some(v) => parse_value(key, &v),
            None => Ok(default),
        }
    }

    fn require(&mut self, key: &str) -> ConfigResult<String> {
        self.take(key).ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn path(&mut self, key: &str, base: &Path) -> ConfigResult<PathBuf> {
        let p = PathBuf::from(self.require(key)?.trim());
        Ok(if p.is_relative() { base.join(p) } else { p })
    }
}

impl ExperimentConfig {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> ConfigResult<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: n + 1, text: raw.to_string() })?;
            let key = key.trim().to_string();
            if let Some((first, _)) = map.insert(key.clone(), (n + 1, value.trim().to_string())) {
                return Err(ConfigError::Duplicate { key, first, second: n + 1 });
            }
        }
        let mut e = Entries { map };

        let name = e.get("experiment.name", "experiment".to_string())?;
        let mut task = TaskSpec::new(parse_value("task.operator", &e.require("task.operator")?)?);
        task.noise = e.get("task.noise", NoiseModel::None)?;
        task.seed = e.get("task.seed", 0)?;
        task.patch = match e.take("task.patch") {
            Some(v) => parse_optional("task.patch", &v)?,
            None => None,
        };
        let eval_seed = e.get("task.eval_seed", task.seed.wrapping_add(1))?;

        let mut layer_keys: Vec<(usize, String)> = e
            .map
            .keys()
            .filter_map(|k| k.strip_prefix("network.layer.").map(|i| (i, k.clone())))
            .map(|(i, k)| parse_value::<usize>(&k, i).map(|i| (i, k)))
            .collect::<ConfigResult<_>>()?;
        layer_keys.sort();
        let mut layers = Vec::with_capacity(layer_keys.len());
        for (pos, (i, key)) in layer_keys.into_iter().enumerate() {
            if i != pos {
                return Err(ConfigError::Missing(format!("network.layer.{pos}")));
            }
            let text = e.take(&key).unwrap_or_default();
            layers.push(
                text.parse::<LayerSpec>()
                    .map_err(|err| ConfigError::Invalid(format!("{key}: {err}")))?,
            );
        }
        if layers.is_empty() {
            return Err(ConfigError::Missing("network.layer.0".into()));
        }
        let network = NetworkSpec::new(layers);

        let d = TrainConfig::default();
        let alternate = match e.take("train.alternate").as_deref().map(str::trim) {
            None | Some("off") => Alternation::Off,
            Some(v) => match v.strip_prefix("every:") {
                Some(k) => Alternation::EveryEpochs(parse_value("train.alternate", k)?),
                None => {
                    return Err(ConfigError::BadValue {
                        key: "train.alternate".into(),
                        value: v.into(),
                    })
                }
            },
        };
        let train = TrainConfig {
            lr0: e.get("train.lr0", d.lr0)?,
            decay_tau: match e.take("train.decay_tau") {
                Some(v) => parse_optional("train.decay_tau", &v)?,
                None => d.decay_tau,
            },
            momentum: e.get("train.momentum", d.momentum)?,
            max_samples: e.get("train.max_samples", d.max_samples)?,
            alternate,
            grad_clip: match e.take("train.grad_clip") {
                Some(v) => parse_optional("train.grad_clip", &v)?,
                None => d.grad_clip,
            },
            seed: e.get("train.seed", d.seed)?,
            eval_every: e.get("train.eval_every", d.eval_every)?,
            patience: match e.take("train.patience") {
                Some(v) => parse_optional("train.patience", &v)?,
                None => d.patience,
            },
            epoch_len: match e.take("train.epoch_len") {
                Some(v) => parse_optional("train.epoch_len", &v)?,
                None => d.epoch_len,
            },
            order_lr_scale: e.get("train.order_lr_scale", d.order_lr_scale)?,
        };
        train
            .validate()
            .map_err(|err| ConfigError::Invalid(err.to_string()))?;

        let source = e.get("data.source", "synthetic".to_string())?;
        let data = match source.as_str() {
            "synthetic" => {
                let kind = match e.get("data.kind", "scene".to_string())?.as_str() {
                    "scene" => {
                        let s = SceneSpec::default();
                        Synth::Scene(SceneSpec {
                            shape_density: e.get("data.scene.shape_density", s.shape_density)?,
                            speck_density: e.get("data.scene.speck_density", s.speck_density)?,
                            levels: match e.take("data.scene.levels") {
                                Some(v) => parse_pair("data.scene.levels", &v)?,
                                None => s.levels,
                            },
                            shading: e.get("data.scene.shading", s.shading)?,
                            texture: e.get("data.scene.texture", s.texture)?,
                        })
                    }
                    "defects" => {
                        let s = DefectSpec::default();
                        Synth::Defects(DefectSpec {
                            n_spots: e.get("data.defects.spots", s.n_spots)?,
                            spot_radius: e.get("data.defects.spot_radius", s.spot_radius)?,
                            n_lines: e.get("data.defects.lines", s.n_lines)?,
                            line_len: e.get("data.defects.line_len", s.line_len)?,
                            orientation: e.get("data.defects.orientation", s.orientation)?,
                        })
                    }
                    other => {
                        return Err(ConfigError::BadValue {
                            key: "data.kind".into(),
                            value: other.into(),
                        })
                    }
                };
                DataSource::Synthetic {
                    kind,
                    width: e.get("data.width", 128)?,
                    height: e.get("data.height", 128)?,
                    train: e.get("data.train_images", 2)?,
                    validation: e.get("data.validation_images", 1)?,
                    eval: e.get("data.eval_images", 1)?,
                    seed: e.get("data.seed", 0)?,
                }
            }
            "files" => DataSource::Files {
                train_dir: e.path("data.train_dir", base)?,
                eval_dir: e.path("data.eval_dir", base)?,
            },
            "paired" => DataSource::Paired {
                train_inputs: e.path("data.train_inputs", base)?,
                train_targets: e.path("data.train_targets", base)?,
                eval_inputs: e.path("data.eval_inputs", base)?,
                eval_targets: e.path("data.eval_targets", base)?,
            },
            other => {
                return Err(ConfigError::BadValue {
                    key: "data.source".into(),
                    value: other.into(),
                })
            }
        };

        let baseline = match e.take("baseline.pipeline") {
            None => None,
            Some(v) if v.trim() == "none" => None,
            Some(v) => Some(
                v.split(',')
                    .map(|op| parse_value("baseline.pipeline", op))
                    .collect::<ConfigResult<Vec<Operator>>>()?,
            ),
        };
        let output_dir = match e.take("io.output_dir") {
            Some(p) => {
                let p = PathBuf::from(p.trim());
                if p.is_relative() {
                    base.join(p)
                } else {
                    p
                }
            }
            None => base.join("out").join(&name),
        };

        if let Some((key, (line, _))) = e.map.into_iter().next() {
            return Err(ConfigError::UnknownKey { key, line });
        }
        Ok(Self {
            name,
            task,
            eval_seed,
            network,
            train,
            data,
            baseline,
            output_dir,
        })
    }

    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let t = &self.train;
        let _ = writeln!(s, "experiment.name = {}", self.name);
        let _ = writeln!(s, "task.operator = {}", self.task.operator);
        let _ = writeln!(s, "task.noise = {}", self.task.noise);
        let _ = writeln!(s, "task.seed = {}", self.task.seed);
        let _ = writeln!(s, "task.eval_seed = {}", self.eval_seed);
        let _ = writeln!(s, "task.patch = {}", fmt_optional(&self.task.patch));
        for (i, l) in self.network.layers.iter().enumerate() {
            let _ = writeln!(s, "network.layer.{i} = {l}");
        }
        let _ = writeln!(s, "train.lr0 = {}", t.lr0);
        let _ = writeln!(s, "train.decay_tau = {}", fmt_optional(&t.decay_tau));
        let _ = writeln!(s, "train.momentum = {}", t.momentum);
        let _ = writeln!(s, "train.max_samples = {}", t.max_samples);
        let alt = match t.alternate {
            Alternation::Off => "off".to_string(),
            Alternation::EveryEpochs(k) => format!("every:{k}"),
        };
        let _ = writeln!(s, "train.alternate = {alt}");
        let _ = writeln!(s, "train.grad_clip = {}", fmt_optional(&t.grad_clip));
        let _ = writeln!(s, "train.seed = {}", t.seed);
        let _ = writeln!(s, "train.eval_every = {}", t.eval_every);
        let _ = writeln!(s, "train.patience = {}", fmt_optional(&t.patience));
        let _ = writeln!(s, "train.epoch_len = {}", fmt_optional(&t.epoch_len));
        let _ = writeln!(s, "train.order_lr_scale = {}", t.order_lr_scale);
        match &self.data {
            DataSource::Synthetic {
                kind,
                width,
                height,
                train,
                validation,
                eval,
                seed,
            } => {
                let _ = writeln!(s, "data.source = synthetic");
                match kind {
                    Synth::Scene(sc) => {
                        let _ = writeln!(s, "data.kind = scene");
                        let _ = writeln!(s, "data.scene.shape_density = {}", sc.shape_density);
                        let _ = writeln!(s, "data.scene.speck_density = {}", sc.speck_density);
                        let _ = writeln!(s, "data.scene.levels = {},{}", sc.levels.0, sc.levels.1);
                        let _ = writeln!(s, "data.scene.shading = {}", sc.shading);
                        let _ = writeln!(s, "data.scene.texture = {}", sc.texture);
                    }
                    Synth::Defects(d) => {
                        let _ = writeln!(s, "data.kind = defects");
                        let _ = writeln!(s, "data.defects.spots = {}", d.n_spots);
                        let _ = writeln!(s, "data.defects.spot_radius = {}", d.spot_radius);
                        let _ = writeln!(s, "data.defects.lines = {}", d.n_lines);
                        let _ = writeln!(s, "data.defects.line_len = {}", d.line_len);
                        let _ = writeln!(s, "data.defects.orientation = {}", d.orientation);
                    }
                }
                let _ = writeln!(s, "data.width = {width}");
                let _ = writeln!(s, "data.height = {height}");
                let _ = writeln!(s, "data.train_images = {train}");
                let _ = writeln!(s, "data.validation_images = {validation}");
                let _ = writeln!(s, "data.eval_images = {eval}");
                let _ = writeln!(s, "data.seed = {seed}");
            }
            DataSource::Files { train_dir, eval_dir } => {
                let _ = writeln!(s, "data.source = files");
                let _ = writeln!(s, "data.train_dir = {}", train_dir.display());
                let _ = writeln!(s, "data.eval_dir = {}", eval_dir.display());
            }
            DataSource::Paired {
                train_inputs,
                train_targets,
                eval_inputs,
                eval_targets,
            } => {
                let _ = writeln!(s, "data.source = paired");
                let _ = writeln!(s, "data.train_inputs = {}", train_inputs.display());
                let _ = writeln!(s, "data.train_targets = {}", train_targets.display());
                let _ = writeln!(s, "data.eval_inputs = {}", eval_inputs.display());
                let _ = writeln!(s, "data.eval_targets = {}", eval_targets.display());
            }
        }
        if let Some(ops) = &self.baseline {
            let list: Vec<String> = ops.iter().map(ToString::to_string).collect();
            let _ = writeln!(s, "baseline.pipeline = {}", list.join(", "));
        }
        let _ = writeln!(s, "io.output_dir = {}", self.output_dir.display());
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "task.operator = dilate:square:5\nnetwork.layer.0 = pconv k=11 filters=1 p=random in=input\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::parse(MINIMAL, Path::new("/tmp/x")).unwrap();
        assert_eq!(c.name, "experiment");
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.output_dir, PathBuf::from("/tmp/x/out/experiment"));
        assert!(matches!(c.data, DataSource::Synthetic { train: 2, eval: 1, .. }));
    }

    #[test]
    fn display_round_trips() {
        let text = format!(
            "{MINIMAL}experiment.name = t\ntask.noise = salt_pepper:0.1\ntask.patch = 32\ntrain.alternate = every:2\n\
             train.grad_clip = none\nbaseline.pipeline = close:square:2, open:square:2\nnetwork.layer.1 = pconv k=5 filters=1 p=- in=0\n"
        );
        let c = ExperimentConfig::parse(&text, Path::new("/base")).unwrap();
        let again = ExperimentConfig::parse(&c.to_string(), Path::new("/elsewhere")).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.train.alternate, Alternation::EveryEpochs(2));
        assert_eq!(c.baseline.as_ref().map(Vec::len), Some(2));
    }

    #[test]
    fn errors_name_the_problem() {
        let cases = [
            ("network.layer.0 = pconv k=3 in=input\n", "task.operator"),
            (&format!("{MINIMAL}train.lr0 = fast\n"), "train.lr0"),
            (&format!("{MINIMAL}train.speed = 3\n"), "train.speed"),
            (&format!("{MINIMAL}network.layer.2 = average in=0\n"), "network.layer.1"),
            (&format!("{MINIMAL}task.seed = 1\ntask.seed = 2\n"), "task.seed"),
            ("task.operator = dilate:square:5\nthis is not a key value line\n", "line 2"),
        ];
        for (text, needle) in cases {
            let err = ExperimentConfig::parse(text, Path::new(".")).unwrap_err().to_string();
            assert!(err.contains(needle), "{err:?} should mention {needle}");
        }
    }
}

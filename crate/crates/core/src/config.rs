//! Flat `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown keys are errors.

use std::path::Path;

use crate::adversary::AdversaryOutput;
use crate::error::{Error, Result};
use crate::fewshot::Head;
use crate::trainer::{DatasetSpec, Precision, TrainConfig, TrainMode};

/// Every accepted key, in canonical output order.
pub const KEYS: &[&str] = &[
    "mode",
    "lambda",
    "dropout_rate",
    "theta0",
    "eps_s",
    "translate",
    "lr_cls",
    "lr_adv",
    "lr_halve_every",
    "episodes",
    "eval_every",
    "val_episodes",
    "test_episodes",
    "n_way",
    "k_shot",
    "q_query",
    "seed",
    "precision",
    "head",
    "temperature",
    "blocks",
    "filters",
    "h_dim",
    "adv_filters",
    "adv_output",
    "freeze_classifier",
    "freeze_adversary",
    "image_size",
    "dataset",
    "train_classes",
    "val_classes",
    "test_classes",
    "per_class",
    "data_seed",
    "test_dir",
    "invert",
    "rotate_classes",
    "log_wall_clock",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{value}`"))),
    }
}

/// Dataset keys are collected first and resolved together, since their
/// meaning depends on `dataset`.
#[derive(Debug, Clone, Default)]
struct DatasetKeys {
    dataset: Option<String>,
    train_classes: Option<usize>,
    val_classes: Option<usize>,
    test_classes: Option<usize>,
    per_class: Option<usize>,
    data_seed: Option<u64>,
    test_dir: Option<String>,
    invert: Option<bool>,
    temperature: Option<f64>,
    head: Option<String>,
}

/// Parses config text on top of [`TrainConfig::default`], then applies
/// `overrides` (same `key`, `value` form) in order.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<TrainConfig> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config(
                format!("line {}", n + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    pairs.extend(overrides.iter().cloned());
    config_from_pairs(&pairs)
}

pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    parse_config(&text, overrides)
}

pub fn config_from_pairs(pairs: &[(String, String)]) -> Result<TrainConfig> {
    let mut c = TrainConfig::default();
    let mut d = DatasetKeys::default();
    if let DatasetSpec::Synthetic {
        train_classes,
        val_classes,
        test_classes,
        per_class,
        seed,
    } = c.dataset
    {
        d.train_classes = Some(train_classes);
        d.val_classes = Some(val_classes);
        d.test_classes = Some(test_classes);
        d.per_class = Some(per_class);
        d.data_seed = Some(seed);
    }
    for (key, value) in pairs {
        let (k, v) = (key.as_str(), value.as_str());
        match k {
            "mode" => c.mode = v.parse::<TrainMode>()?,
            "lambda" => c.lambda = parse(k, v)?,
            "dropout_rate" => c.dropout_rate = parse(k, v)?,
            "theta0" => c.theta0 = parse(k, v)?,
            "eps_s" => c.eps_s = parse(k, v)?,
            "translate" => c.translate = if v == "auto" { None } else { Some(parse(k, v)?) },
            "lr_cls" => c.lr_cls = parse(k, v)?,
            "lr_adv" => c.lr_adv = parse(k, v)?,
            "lr_halve_every" => c.lr_halve_every = parse(k, v)?,
            "episodes" => c.episodes = parse(k, v)?,
            "eval_every" => c.eval_every = parse(k, v)?,
            "val_episodes" => c.val_episodes = parse(k, v)?,
            "test_episodes" => c.test_episodes = parse(k, v)?,
            "n_way" => c.n_way = parse(k, v)?,
            "k_shot" => c.k_shot = parse(k, v)?,
            "q_query" => c.q_query = parse(k, v)?,
            "seed" => c.seed = parse(k, v)?,
            "precision" => {
                c.precision = match v {
                    "f64" => Precision::F64,
                    "f32" => Precision::F32,
                    _ => return Err(Error::config(k, format!("expected f64 or f32, got `{v}`"))),
                }
            }
            "head" => d.head = Some(v.to_string()),
            "temperature" => d.temperature = Some(parse(k, v)?),
            "blocks" => c.blocks = parse(k, v)?,
            "filters" => c.filters = parse(k, v)?,
            "h_dim" => c.h_dim = parse(k, v)?,
            "adv_filters" => c.adv_filters = parse(k, v)?,
            "adv_output" => {
                c.adv_output = match v {
                    "similarity" => AdversaryOutput::Similarity,
                    "full-affine" => AdversaryOutput::FullAffine,
                    _ => {
                        return Err(Error::config(
                            k,
                            format!("expected similarity or full-affine, got `{v}`"),
                        ))
                    }
                }
            }
            "freeze_classifier" => c.freeze_classifier = parse_bool(k, v)?,
            "freeze_adversary" => c.freeze_adversary = parse_bool(k, v)?,
            "image_size" => c.image_size = parse(k, v)?,
            "dataset" => d.dataset = Some(v.to_string()),
            "train_classes" => d.train_classes = Some(parse(k, v)?),
            "val_classes" => d.val_classes = Some(parse(k, v)?),
            "test_classes" => d.test_classes = Some(parse(k, v)?),
            "per_class" => d.per_class = Some(parse(k, v)?),
            "data_seed" => d.data_seed = Some(parse(k, v)?),
            "test_dir" => d.test_dir = Some(v.to_string()),
            "invert" => d.invert = Some(parse_bool(k, v)?),
            "rotate_classes" => c.rotate_classes = parse_bool(k, v)?,
            "log_wall_clock" => c.log_wall_clock = parse_bool(k, v)?,
            _ => return Err(Error::config(k, "unknown key")),
        }
    }
    c.head = match d.head.as_deref().unwrap_or("euclidean") {
        "euclidean" => Head::Euclidean,
        "cosine" => Head::Cosine {
            temperature: d.temperature.unwrap_or(10.0),
        },
        other => {
            return Err(Error::config(
                "head",
                format!("expected euclidean or cosine, got `{other}`"),
            ))
        }
    };
    c.dataset = match d.dataset.as_deref().unwrap_or("synthetic") {
        "synthetic" => DatasetSpec::Synthetic {
            train_classes: d.train_classes.unwrap_or(50),
            val_classes: d.val_classes.unwrap_or(20),
            test_classes: d.test_classes.unwrap_or(20),
            per_class: d.per_class.unwrap_or(20),
            seed: d.data_seed.unwrap_or(0),
        },
        dir => DatasetSpec::Directory {
            train_dir: dir.to_string(),
            test_dir: d.test_dir,
            val_classes: d.val_classes.unwrap_or(20),
            invert: d.invert.unwrap_or(true),
        },
    };
    c.validate()?;
    Ok(c)
}

/// Canonical text form: every key, fixed order, round-trips through
/// [`parse_config`].
pub fn to_config_text(c: &TrainConfig) -> String {
    let mut out = Vec::new();
    let mut put = |k: &str, v: String| out.push(format!("{k} = {v}"));
    put("mode", c.mode.to_string());
    put("lambda", c.lambda.to_string());
    put("dropout_rate", c.dropout_rate.to_string());
    put("theta0", c.theta0.to_string());
    put("eps_s", c.eps_s.to_string());
    put("translate", c.translate.map_or("auto".into(), |t| t.to_string()));
    put("lr_cls", c.lr_cls.to_string());
    put("lr_adv", c.lr_adv.to_string());
    put("lr_halve_every", c.lr_halve_every.to_string());
    put("episodes", c.episodes.to_string());
    put("eval_every", c.eval_every.to_string());
    put("val_episodes", c.val_episodes.to_string());
    put("test_episodes", c.test_episodes.to_string());
    put("n_way", c.n_way.to_string());
    put("k_shot", c.k_shot.to_string());
    put("q_query", c.q_query.to_string());
    put("seed", c.seed.to_string());
    put(
        "precision",
        match c.precision {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        }
        .into(),
    );
    match c.head {
        Head::Euclidean => put("head", "euclidean".into()),
        Head::Cosine { temperature } => {
            put("head", "cosine".into());
            put("temperature", temperature.to_string());
        }
    }
    put("blocks", c.blocks.to_string());
    put("filters", c.filters.to_string());
    put("h_dim", c.h_dim.to_string());
    put("adv_filters", c.adv_filters.to_string());
    put(
        "adv_output",
        match c.adv_output {
            AdversaryOutput::Similarity => "similarity",
            AdversaryOutput::FullAffine => "full-affine",
        }
        .into(),
    );
    put("freeze_classifier", c.freeze_classifier.to_string());
    put("freeze_adversary", c.freeze_adversary.to_string());
    put("image_size", c.image_size.to_string());
    match &c.dataset {
        DatasetSpec::Synthetic {
            train_classes,
            val_classes,
            test_classes,
            per_class,
            seed,
        } => {
            put("dataset", "synthetic".into());
            put("train_classes", train_classes.to_string());
            put("val_classes", val_classes.to_string());
            put("test_classes", test_classes.to_string());
            put("per_class", per_class.to_string());
            put("data_seed", seed.to_string());
        }
        DatasetSpec::Directory {
            train_dir,
            test_dir,
            val_classes,
            invert,
        } => {
            put("dataset", train_dir.clone());
            if let Some(t) = test_dir {
                put("test_dir", t.clone());
            }
            put("val_classes", val_classes.to_string());
            put("invert", invert.to_string());
        }
    }
    put("rotate_classes", c.rotate_classes.to_string());
    put("log_wall_clock", c.log_wall_clock.to_string());
    out.join("\n") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = parse_config("", &[]).unwrap();
        assert_eq!(c, TrainConfig::default());
        assert_eq!(parse_config(&to_config_text(&c), &[]).unwrap(), c);
    }

    #[test]
    fn every_key_round_trips() {
        let text = "mode = standard-aug\nlambda = 0.25 # comment\n\nhead = cosine\ntemperature = 5\n\
                    dataset = /tmp/omni\ntest_dir = /tmp/eval\ninvert = false\ntranslate = 1.5\n\
                    adv_output = full-affine\nprecision = f32\nfreeze_adversary = true\n";
        let c = parse_config(text, &[]).unwrap();
        assert_eq!(c.mode, TrainMode::StandardAug);
        assert_eq!(c.head, Head::Cosine { temperature: 5.0 });
        assert_eq!(c.translate, Some(1.5));
        assert_eq!(parse_config(&to_config_text(&c), &[]).unwrap(), c);
        for line in to_config_text(&c).lines() {
            let key = line.split(" = ").next().unwrap();
            assert!(KEYS.contains(&key), "{key}");
        }
    }

    #[test]
    fn overrides_win() {
        let c = parse_config("lambda = 1\nseed = 3", &[("lambda".into(), "0.5".into())]).unwrap();
        assert_eq!((c.lambda, c.seed), (0.5, 3));
    }

    #[test]
    fn errors_name_the_key() {
        for (text, key) in [
            ("lamda = 1", "lamda"),
            ("episodes = 0", "episodes"),
            ("mode = fancy", "mode"),
            ("dropout_rate = x", "dropout_rate"),
            ("just words", "line 1"),
        ] {
            match parse_config(text, &[]) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}

//! Training hyperparameter bundle: emitted as TOML for an external
//! trainer and validated when read back.

use std::fmt::{self, Write as _};

use serde::Serialize;
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    #[default]
    CosineAnnealing,
}

impl Scheduler {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheduler::CosineAnnealing => "cosine_annealing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    #[serde(rename = "adamw")]
    AdamW,
}

impl Optimizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Optimizer::AdamW => "adamw",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub scheduler: Scheduler,
    pub grad_clip_threshold: f64,
    pub max_input_tokens: u32,
    pub max_response_tokens: u32,
    pub lora_rank: u32,
    pub dropout: f64,
    pub half_precision: bool,
    pub zero_stage: u8,
    pub validation_fraction: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            scheduler: Scheduler::CosineAnnealing,
            grad_clip_threshold: 1.0,
            max_input_tokens: 512,
            max_response_tokens: 4096,
            lora_rank: 8,
            dropout: 0.1,
            half_precision: true,
            zero_stage: 2,
            validation_fraction: 0.10,
            optimizer: Optimizer::AdamW,
        }
    }
}

/// Keys in emission order.
pub const KEYS: [&str; 11] = [
    "learning_rate",
    "scheduler",
    "grad_clip_threshold",
    "max_input_tokens",
    "max_response_tokens",
    "lora_rank",
    "dropout",
    "half_precision",
    "zero_stage",
    "validation_fraction",
    "optimizer",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfigViolation {
    Syntax {
        message: String,
    },
    UnknownKey {
        key: String,
        suggestion: Option<String>,
    },
    WrongType {
        key: String,
        expected: String,
    },
    OutOfRange {
        key: String,
        message: String,
    },
    BadOverride {
        text: String,
    },
}

impl ConfigViolation {
    /// The key the violation is about, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigViolation::UnknownKey { key, .. }
            | ConfigViolation::WrongType { key, .. }
            | ConfigViolation::OutOfRange { key, .. } => Some(key),
            _ => None,
        }
    }
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigViolation::Syntax { message } => write!(f, "syntax error: {message}"),
            ConfigViolation::UnknownKey {
                key,
                suggestion: Some(s),
            } => {
                write!(f, "unknown key {key:?}; did you mean {s:?}?")
            }
            ConfigViolation::UnknownKey {
                key,
                suggestion: None,
            } => write!(f, "unknown key {key:?}"),
            ConfigViolation::WrongType { key, expected } => write!(f, "{key}: expected {expected}"),
            ConfigViolation::OutOfRange { key, message } => write!(f, "{key}: {message}"),
            ConfigViolation::BadOverride { text } => {
                write!(f, "override {text:?} is not key=value")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ConfigErrors(pub Vec<ConfigViolation>);

fn nearest_key(key: &str) -> Option<String> {
    KEYS.iter()
        .map(|k| (strsim::levenshtein(key, k), *k))
        .filter(|(d, _)| *d <= 3)
        .min()
        .map(|(_, k)| k.to_string())
}

/// Shortest round-tripping decimal, switching to `1e-05` style exponent
/// notation for small and large magnitudes.
fn format_float(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e6) {
        let s = format!("{v:e}");
        let (mant, exp) = s.split_once('e').expect("exponent form");
        let (sign, digits) = exp.strip_prefix('-').map_or(("", exp), |d| ("-", d));
        format!("{mant}e{sign}{digits:0>2}")
    } else {
        format!("{v:?}")
    }
}

impl TrainConfig {
    pub fn to_toml(&self) -> String {
        let mut s = String::from("# Training hyperparameters for an external trainer.\n");
        let _ = writeln!(s, "learning_rate = {}", format_float(self.learning_rate));
        let _ = writeln!(s, "scheduler = \"{}\"", self.scheduler.as_str());
        let _ = writeln!(
            s,
            "grad_clip_threshold = {}",
            format_float(self.grad_clip_threshold)
        );
        let _ = writeln!(s, "max_input_tokens = {}", self.max_input_tokens);
        let _ = writeln!(s, "max_response_tokens = {}", self.max_response_tokens);
        let _ = writeln!(s, "lora_rank = {}", self.lora_rank);
        s.push_str("# Unresolved: whether dropout applies to the adapter input or elsewhere.\n");
        let _ = writeln!(s, "dropout = {}", format_float(self.dropout));
        let _ = writeln!(s, "half_precision = {}", self.half_precision);
        let _ = writeln!(s, "zero_stage = {}", self.zero_stage);
        let _ = writeln!(
            s,
            "validation_fraction = {}",
            format_float(self.validation_fraction)
        );
        let _ = writeln!(s, "optimizer = \"{}\"", self.optimizer.as_str());
        s
    }

    fn from_table(table: &Table) -> Result<Self, ConfigErrors> {
        let mut cfg = TrainConfig::default();
        let mut errs = Vec::new();
        for (key, value) in table {
            let wrong = |expected: &str| ConfigViolation::WrongType {
                key: key.clone(),
                expected: expected.into(),
            };
            let range = |message: &str| ConfigViolation::OutOfRange {
                key: key.clone(),
                message: message.into(),
            };
            let float = || match value {
                Value::Float(f) => Some(*f),
                Value::Integer(i) => Some(*i as f64),
                _ => None,
            };
            let int = |max: u32| match value {
                Value::Integer(i) if (1..=max as i64).contains(i) => Ok(*i as u32),
                Value::Integer(_) => Err(range(&format!("must be in 1..={max}"))),
                _ => Err(wrong("an integer")),
            };
            let result: Result<(), ConfigViolation> = match key.as_str() {
                "learning_rate" => match float() {
                    Some(f) if f.is_finite() && f > 0.0 => {
                        cfg.learning_rate = f;
                        Ok(())
                    }
                    Some(_) => Err(range("must be positive")),
                    None => Err(wrong("a number")),
                },
                "grad_clip_threshold" => match float() {
                    Some(f) if f.is_finite() && f > 0.0 => {
                        cfg.grad_clip_threshold = f;
                        Ok(())
                    }
                    Some(_) => Err(range("must be positive")),
                    None => Err(wrong("a number")),
                },
                "dropout" => match float() {
                    Some(f) if (0.0..1.0).contains(&f) => {
                        cfg.dropout = f;
                        Ok(())
                    }
                    Some(_) => Err(range("must be in [0, 1)")),
                    None => Err(wrong("a number")),
                },
                "validation_fraction" => match float() {
                    Some(f) if f > 0.0 && f < 1.0 => {
                        cfg.validation_fraction = f;
                        Ok(())
                    }
                    Some(_) => Err(range("must be in (0, 1)")),
                    None => Err(wrong("a number")),
                },
                "max_input_tokens" => int(1 << 20).map(|v| {
                    cfg.max_input_tokens = v;
                }),
                "max_response_tokens" => int(1 << 20).map(|v| {
                    cfg.max_response_tokens = v;
                }),
                "lora_rank" => int(4096).map(|v| {
                    cfg.lora_rank = v;
                }),
                "zero_stage" => match value {
                    Value::Integer(i) if (0..=3).contains(i) => {
                        cfg.zero_stage = *i as u8;
                        Ok(())
                    }
                    Value::Integer(_) => Err(range("must be in 0..=3")),
                    _ => Err(wrong("an integer")),
                },
                "half_precision" => match value {
                    Value::Boolean(b) => {
                        cfg.half_precision = *b;
                        Ok(())
                    }
                    _ => Err(wrong("a boolean")),
                },
                "scheduler" => match value.as_str() {
                    Some("cosine_annealing") => {
                        cfg.scheduler = Scheduler::CosineAnnealing;
                        Ok(())
                    }
                    Some(_) => Err(range("supported: \"cosine_annealing\"")),
                    None => Err(wrong("a string")),
                },
                "optimizer" => match value.as_str() {
                    Some(s) if s.eq_ignore_ascii_case("adamw") => {
                        cfg.optimizer = Optimizer::AdamW;
                        Ok(())
                    }
                    Some(_) => Err(range("supported: \"adamw\"")),
                    None => Err(wrong("a string")),
                },
                _ => Err(ConfigViolation::UnknownKey {
                    key: key.clone(),
                    suggestion: nearest_key(key),
                }),
            };
            if let Err(e) = result {
                errs.push(e);
            }
        }
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigErrors(errs))
        }
    }
}

/// Parse and range-check a config file. Missing keys take their defaults.
pub fn validate_config(text: &str) -> Result<TrainConfig, ConfigErrors> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigErrors(vec![ConfigViolation::Syntax {
            message: e.message().to_string(),
        }])
    })?;
    TrainConfig::from_table(&table)
}

fn override_value(raw: &str) -> Value {
    let raw = raw.trim();
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Defaults with `key=value` overrides applied, as TOML text.
pub fn emit_config<S: AsRef<str>>(overrides: &[S]) -> Result<String, ConfigErrors> {
    let mut table = Table::new();
    let mut errs = Vec::new();
    for o in overrides {
        match o.as_ref().split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => {
                table.insert(k.trim().to_string(), override_value(v));
            }
            _ => errs.push(ConfigViolation::BadOverride {
                text: o.as_ref().to_string(),
            }),
        }
    }
    match TrainConfig::from_table(&table) {
        Ok(cfg) if errs.is_empty() => Ok(cfg.to_toml()),
        Ok(_) => Err(ConfigErrors(errs)),
        Err(ConfigErrors(mut more)) => {
            errs.append(&mut more);
            Err(ConfigErrors(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line<'a>(text: &'a str, key: &str) -> &'a str {
        text.lines()
            .find(|l| l.starts_with(&format!("{key} = ")))
            .unwrap()
    }

    #[test]
    fn defaults_emitted_verbatim() {
        let t = emit_config::<&str>(&[]).unwrap();
        assert_eq!(line(&t, "learning_rate"), "learning_rate = 5e-05");
        assert_eq!(line(&t, "scheduler"), "scheduler = \"cosine_annealing\"");
        assert_eq!(line(&t, "grad_clip_threshold"), "grad_clip_threshold = 1.0");
        assert_eq!(line(&t, "max_input_tokens"), "max_input_tokens = 512");
        assert_eq!(
            line(&t, "max_response_tokens"),
            "max_response_tokens = 4096"
        );
        assert_eq!(line(&t, "lora_rank"), "lora_rank = 8");
        assert_eq!(line(&t, "dropout"), "dropout = 0.1");
        assert_eq!(line(&t, "validation_fraction"), "validation_fraction = 0.1");
        assert_eq!(line(&t, "optimizer"), "optimizer = \"adamw\"");
        assert_eq!(line(&t, "zero_stage"), "zero_stage = 2");
        assert_eq!(line(&t, "half_precision"), "half_precision = true");
        let order: Vec<&str> = t
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split(" = ").next().unwrap())
            .collect();
        assert_eq!(order, KEYS);
    }

    #[test]
    fn round_trip_is_identity() {
        let t = emit_config::<&str>(&[]).unwrap();
        assert_eq!(validate_config(&t).unwrap(), TrainConfig::default());
        assert_eq!(validate_config("").unwrap(), TrainConfig::default());
    }

    #[test]
    fn override_changes_only_that_key() {
        let base = emit_config::<&str>(&[]).unwrap();
        let t = emit_config(&["validation_fraction=0.2"]).unwrap();
        let diff: Vec<(&str, &str)> = base
            .lines()
            .zip(t.lines())
            .filter(|(a, b)| a != b)
            .collect();
        assert_eq!(
            diff,
            vec![("validation_fraction = 0.1", "validation_fraction = 0.2")]
        );
    }

    #[test]
    fn range_errors_name_the_key() {
        let e = emit_config(&["dropout=1.5"]).unwrap_err();
        assert_eq!(e.0[0].key(), Some("dropout"));
        assert!(e.to_string().contains("dropout"));
        let e = emit_config(&["validation_fraction=1"]).unwrap_err();
        assert_eq!(e.0[0].key(), Some("validation_fraction"));
        assert!(emit_config(&["lora_rank=0"]).is_err());
        assert!(emit_config(&["nonsense"]).is_err());
    }

    #[test]
    fn unknown_key_suggests_nearest() {
        let e = validate_config("learning_rte = 1e-4\n").unwrap_err();
        assert_eq!(
            e.0,
            vec![ConfigViolation::UnknownKey {
                key: "learning_rte".into(),
                suggestion: Some("learning_rate".into())
            }]
        );
        let e = validate_config("zzzzzzzzzzzz = 1\n").unwrap_err();
        assert!(matches!(
            &e.0[0],
            ConfigViolation::UnknownKey {
                suggestion: None,
                ..
            }
        ));
    }

    #[test]
    fn type_errors() {
        let e = validate_config("lora_rank = \"eight\"\nhalf_precision = 1\n").unwrap_err();
        assert_eq!(e.0.len(), 2);
        assert!(e
            .0
            .iter()
            .all(|v| matches!(v, ConfigViolation::WrongType { .. })));
        assert!(matches!(
            validate_config("lora_rank = ").unwrap_err().0[0],
            ConfigViolation::Syntax { .. }
        ));
    }

    #[test]
    fn float_formatting() {
        assert_eq!(format_float(5e-5), "5e-05");
        assert_eq!(format_float(1.5e-4), "1.5e-04");
        assert_eq!(format_float(2e-10), "2e-10");
        assert_eq!(format_float(1.0), "1.0");
        assert_eq!(format_float(0.0), "0.0");
        assert_eq!(format_float(3e7), "3e07");
    }

    proptest! {
        #[test]
        fn emit_validate_round_trip(
            lr in 1e-9f64..1.0, clip in 1e-3f64..100.0, inp in 1u32..100_000, out in 1u32..100_000,
            rank in 1u32..256, dropout in 0.0f64..0.999, half in any::<bool>(), zero in 0u8..=3, vf in 0.001f64..0.999,
        ) {
            let cfg = TrainConfig {
                learning_rate: lr, grad_clip_threshold: clip, max_input_tokens: inp, max_response_tokens: out,
                lora_rank: rank, dropout, half_precision: half, zero_stage: zero, validation_fraction: vf,
                ..TrainConfig::default()
            };
            prop_assert_eq!(validate_config(&cfg.to_toml()).unwrap(), cfg);
        }
    }
}

//! Plain-text system configuration files.
//!
//! The format is `key = value`, one setting per line, `#` comments. DG units
//! are numbered from 1 (`dg1.a = 0.0034`); the unit count is inferred from
//! the highest index present. Keys that are omitted keep their default
//! values; a file that adds any `dgN.*` key must specify all seven fields of
//! that unit.

use std::collections::BTreeMap;
use std::path::Path;

use super::{DGUnit, SocMode, SystemConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {reason}")]
    InvalidValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("dg{unit} is missing field `{field}`")]
    MissingDgField { unit: usize, field: &'static str },
    #[error(transparent)]
    Invalid(#[from] super::EnvError),
}

/// Reads a system configuration, starting from defaults and applying the
/// file's overrides. The result is validated.
pub fn load_system_config(path: impl AsRef<Path>) -> Result<SystemConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_system_config(&text)
}

pub fn parse_system_config(text: &str) -> Result<SystemConfig, ConfigError> {
    let mut cfg = SystemConfig::default();
    // unit index -> field -> (line, value text)
    let mut dg_fields: BTreeMap<usize, BTreeMap<String, (usize, String)>> = BTreeMap::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            text: raw_line.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();

        if let Some(rest) = key.strip_prefix("dg") {
            if let Some((num, field)) = rest.split_once('.') {
                let unit: usize = num.parse().map_err(|_| ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })?;
                if unit == 0 {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    });
                }
                dg_fields
                    .entry(unit)
                    .or_default()
                    .insert(field.to_string(), (line, value.to_string()));
                continue;
            }
        }

        let parse_f64 = |value: &str| -> Result<f64, ConfigError> {
            value.parse::<f64>().map_err(|e| ConfigError::InvalidValue {
                line,
                key: key.to_string(),
                reason: e.to_string(),
            })
        };
        match key {
            "delta_t" => cfg.delta_t = parse_f64(value)?,
            "sigma1" => cfg.sigma1 = parse_f64(value)?,
            "sigma2" => cfg.sigma2 = parse_f64(value)?,
            "horizon" => {
                cfg.horizon = value.parse().map_err(|e| ConfigError::InvalidValue {
                    line,
                    key: key.to_string(),
                    reason: format!("{e}"),
                })?
            }
            "commit_threshold" => cfg.commit_threshold = parse_f64(value)?,
            "include_time_feature" => {
                cfg.include_time_feature =
                    value.parse().map_err(|e| ConfigError::InvalidValue {
                        line,
                        key: key.to_string(),
                        reason: format!("{e}"),
                    })?
            }
            "pv_scale" => cfg.pv_scale = parse_f64(value)?,
            "load_scale" => cfg.load_scale = parse_f64(value)?,
            "ess.p_limit" => cfg.ess.p_limit = parse_f64(value)?,
            "ess.e_min" => cfg.ess.e_min = parse_f64(value)?,
            "ess.e_max" => cfg.ess.e_max = parse_f64(value)?,
            "ess.efficiency" => cfg.ess.efficiency = parse_f64(value)?,
            "ess.soc_mode" => {
                cfg.ess.soc_mode = match value {
                    "literal" => SocMode::Literal,
                    "physical" => SocMode::Physical,
                    other => {
                        return Err(ConfigError::InvalidValue {
                            line,
                            key: key.to_string(),
                            reason: format!("expected `literal` or `physical`, got `{other}`"),
                        })
                    }
                }
            }
            "grid.p_exchange_max" => cfg.grid.p_exchange_max = parse_f64(value)?,
            "grid.sell_coefficient" => cfg.grid.sell_coefficient = parse_f64(value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }

    if !dg_fields.is_empty() {
        let mut units = Vec::new();
        let max_unit = *dg_fields.keys().max().unwrap();
        for unit in 1..=max_unit {
            let fields = dg_fields
                .get(&unit)
                .ok_or(ConfigError::MissingDgField { unit, field: "a" })?;
            let get = |field: &'static str| -> Result<f64, ConfigError> {
                let (line, text) = fields
                    .get(field)
                    .ok_or(ConfigError::MissingDgField { unit, field })?;
                text.parse::<f64>().map_err(|e| ConfigError::InvalidValue {
                    line: *line,
                    key: format!("dg{unit}.{field}"),
                    reason: e.to_string(),
                })
            };
            for field in fields.keys() {
                if !["a", "b", "c", "p_min", "p_max", "ramp_up", "ramp_down"]
                    .contains(&field.as_str())
                {
                    let (line, _) = fields[field];
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: format!("dg{unit}.{field}"),
                    });
                }
            }
            units.push(DGUnit {
                a: get("a")?,
                b: get("b")?,
                c: get("c")?,
                p_min: get("p_min")?,
                p_max: get("p_max")?,
                ramp_up: get("ramp_up")?,
                ramp_down: get("ramp_down")?,
            });
        }
        cfg.dg_units = units;
    }

    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_system_config("").unwrap();
        assert_eq!(cfg, SystemConfig::default());
    }

    #[test]
    fn overrides_and_comments() {
        let text = "\
# reward shaping
sigma2 = 100   # heavier penalty
ess.efficiency = 0.95
grid.p_exchange_max = 200
";
        let cfg = parse_system_config(text).unwrap();
        assert_eq!(cfg.sigma2, 100.0);
        assert_eq!(cfg.ess.efficiency, 0.95);
        assert_eq!(cfg.grid.p_exchange_max, 200.0);
        assert_eq!(cfg.dg_units.len(), 3);
    }

    #[test]
    fn custom_dg_set() {
        let text = "\
dg1.a = 0.01
dg1.b = 2
dg1.c = 5
dg1.p_min = 20
dg1.p_max = 80
dg1.ramp_up = 60
dg1.ramp_down = 60
";
        let cfg = parse_system_config(text).unwrap();
        assert_eq!(cfg.dg_units.len(), 1);
        assert_eq!(cfg.dg_units[0].p_max, 80.0);
    }

    #[test]
    fn missing_dg_field_is_reported() {
        let text = "dg1.a = 0.01\ndg1.b = 2\n";
        assert!(matches!(
            parse_system_config(text).unwrap_err(),
            ConfigError::MissingDgField { unit: 1, .. }
        ));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            parse_system_config("frobnicate = 1").unwrap_err(),
            ConfigError::UnknownKey { line: 1, .. }
        ));
    }

    #[test]
    fn invalid_result_rejected() {
        assert!(matches!(
            parse_system_config("sigma1 = -3").unwrap_err(),
            ConfigError::Invalid(_)
        ));
    }
}

//! Layered runtime settings for the command-line tool.
//!
//! Every tunable resolves through a fixed precedence, weakest first:
//! built-in default, config file (`--config`, TOML with one `[section]` per
//! subcommand), command-line flag, then a `BAVIT_<SECTION>_<KEY>`
//! environment variable. The environment wins so a wrapper script or CI job
//! can pin a value without rewriting every invocation it launches.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::labeling::OverlapMode;

use super::CliError;

/// The parsed config file (possibly empty) plus the resolution logic.
#[derive(Debug)]
pub struct Settings {
    table: toml::Table,
}

impl Settings {
    pub fn empty() -> Self {
        Self {
            table: toml::Table::new(),
        }
    }

    /// Reads the optional config file. A missing or unparseable file is a
    /// data error; a file that parses but holds a wrongly-typed value only
    /// surfaces (as a usage error) when that key is resolved.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::empty());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;
        Ok(Self { table })
    }

    /// Resolves one setting: `default`, overridden by `[section] key` from
    /// the config file, overridden by the flag value when the flag was given,
    /// overridden by the `BAVIT_<SECTION>_<KEY>` environment variable.
    pub fn resolve<T>(
        &self,
        section: &str,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T, CliError>
    where
        T: FromToml + FromStr,
        T::Err: Display,
    {
        let mut value = default;
        if let Some(raw) = self.table.get(section).and_then(|s| s.get(key)) {
            value = T::from_toml(raw).ok_or_else(|| {
                CliError::Usage(format!("config key {section}.{key}: cannot use {raw} here"))
            })?;
        }
        if let Some(v) = flag {
            value = v;
        }
        let var = env_name(section, key);
        if let Ok(raw) = std::env::var(&var) {
            value = raw
                .parse::<T>()
                .map_err(|e| CliError::Usage(format!("{var}={raw:?}: {e}")))?;
        }
        Ok(value)
    }
}

/// Environment variable for a setting: `BAVIT_TRAIN_STEP_SIZE` for
/// `[train] step_size`.
pub fn env_name(section: &str, key: &str) -> String {
    format!(
        "BAVIT_{}_{}",
        section.to_ascii_uppercase(),
        key.to_ascii_uppercase()
    )
}

/// Conversion out of a parsed TOML value; `None` means the value's type
/// does not fit the setting.
pub trait FromToml: Sized {
    fn from_toml(value: &toml::Value) -> Option<Self>;
}

impl FromToml for f64 {
    fn from_toml(value: &toml::Value) -> Option<Self> {
        value
            .as_float()
            .or_else(|| value.as_integer().map(|i| i as f64))
    }
}

impl FromToml for u64 {
    fn from_toml(value: &toml::Value) -> Option<Self> {
        value.as_integer().and_then(|i| u64::try_from(i).ok())
    }
}

impl FromToml for u32 {
    fn from_toml(value: &toml::Value) -> Option<Self> {
        value.as_integer().and_then(|i| u32::try_from(i).ok())
    }
}

impl FromToml for usize {
    fn from_toml(value: &toml::Value) -> Option<Self> {
        value.as_integer().and_then(|i| usize::try_from(i).ok())
    }
}

impl FromToml for String {
    fn from_toml(value: &toml::Value) -> Option<Self> {
        value.as_str().map(str::to_owned)
    }
}

impl FromToml for OverlapMode {
    fn from_toml(value: &toml::Value) -> Option<Self> {
        value.as_str().and_then(|s| s.parse().ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_config(text: &str) -> Settings {
        Settings {
            table: text.parse().unwrap(),
        }
    }

    #[test]
    fn default_survives_when_nothing_overrides() {
        let st = Settings::empty();
        let v: u64 = st.resolve("train", "epochs", None, 100).unwrap();
        assert_eq!(v, 100);
    }

    #[test]
    fn config_beats_default() {
        let st = with_config("[train]\nepochs = 7\n");
        let v: u64 = st.resolve("train", "epochs", None, 100).unwrap();
        assert_eq!(v, 7);
    }

    #[test]
    fn flag_beats_config() {
        let st = with_config("[train]\nepochs = 7\n");
        let v: u64 = st.resolve("train", "epochs", Some(3), 100).unwrap();
        assert_eq!(v, 3);
    }

    #[test]
    fn environment_beats_flag() {
        // A key name no other test uses, since the environment is
        // process-global.
        std::env::set_var("BAVIT_TESTSECTION_ALPHA", "0.25");
        let st = with_config("[testsection]\nalpha = 0.5\n");
        let v: f64 = st.resolve("testsection", "alpha", Some(0.75), 0.1).unwrap();
        std::env::remove_var("BAVIT_TESTSECTION_ALPHA");
        assert_eq!(v, 0.25);
    }

    #[test]
    fn unparseable_environment_value_is_a_usage_error() {
        std::env::set_var("BAVIT_TESTSECTION_BETA", "not-a-number");
        let st = Settings::empty();
        let err = st
            .resolve::<f64>("testsection", "beta", None, 0.1)
            .unwrap_err();
        std::env::remove_var("BAVIT_TESTSECTION_BETA");
        assert!(matches!(err, CliError::Usage(_)));
    }

    #[test]
    fn wrongly_typed_config_value_is_a_usage_error() {
        let st = with_config("[train]\nepochs = \"many\"\n");
        let err = st.resolve::<u64>("train", "epochs", None, 100).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
    }

    #[test]
    fn integers_satisfy_float_settings() {
        let st = with_config("[train]\nlr = 1\n");
        let v: f64 = st.resolve("train", "lr", None, 1e-3).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn negative_integer_rejected_for_unsigned_setting() {
        let st = with_config("[train]\nepochs = -3\n");
        assert!(st.resolve::<u64>("train", "epochs", None, 1).is_err());
    }

    #[test]
    fn overlap_mode_resolves_from_text() {
        let st = with_config("[annotate]\nmode = \"jaccard\"\n");
        let v: OverlapMode = st
            .resolve("annotate", "mode", None, OverlapMode::PatchCoverage)
            .unwrap();
        assert_eq!(v, OverlapMode::Jaccard);
    }

    #[test]
    fn env_names_follow_the_documented_pattern() {
        assert_eq!(env_name("train", "step_size"), "BAVIT_TRAIN_STEP_SIZE");
        assert_eq!(
            env_name("prune_report", "detector_tokens"),
            "BAVIT_PRUNE_REPORT_DETECTOR_TOKENS"
        );
    }

    #[test]
    fn missing_config_file_is_a_data_error() {
        let err = Settings::load(Some(Path::new("/definitely/not/here.toml"))).unwrap_err();
        assert!(matches!(err, CliError::Data(_)));
    }
}

//! Study-config parsing with field-path error reporting.

use anyhow::{bail, Context, Result};
use volbreak::mcstudy::{GarchStudyConfig, IntroStudyConfig, StudyConfig};

/// Parse a TOML study config. Schema violations are reported with the path
/// of the offending field.
pub fn parse_study_config(text: &str) -> Result<StudyConfig> {
    let value: toml::Value = text.parse().context("TOML syntax error")?;
    let kind = value
        .get("kind")
        .and_then(|v| v.as_str())
        .context("config needs kind = \"garch\" or kind = \"intro\"")?
        .to_string();
    let mut value = value;
    value
        .as_table_mut()
        .context("config root must be a table")?
        .remove("kind");
    let at_path = |e: serde_path_to_error::Error<toml::de::Error>| {
        anyhow::anyhow!("at `{}`: {}", e.path(), e.inner().message())
    };
    match kind.as_str() {
        "garch" => {
            let cfg: GarchStudyConfig =
                serde_path_to_error::deserialize(value).map_err(at_path)?;
            Ok(StudyConfig::Garch(cfg))
        }
        "intro" => {
            let cfg: IntroStudyConfig =
                serde_path_to_error::deserialize(value).map_err(at_path)?;
            Ok(StudyConfig::Intro(cfg))
        }
        other => bail!("unknown study kind {other:?} (expected \"garch\" or \"intro\")"),
    }
}

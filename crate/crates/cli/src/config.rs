//! Optional TOML configuration file.
//!
//! Values are resolved as command-line flag, then environment variable,
//! then this file. Relative paths in the file are taken relative to the
//! file's directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ontorag_core::llm::ProviderConfig;
use ontorag_core::reasoner::StrategyKind;
use serde::Deserialize;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub store: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub decision_log: Option<PathBuf>,
    pub assessment_cache: Option<PathBuf>,
    pub export_path: Option<PathBuf>,
    pub format: Option<String>,
    pub provider: Option<ProviderConfig>,
    #[serde(default)]
    pub strategy: StrategyDefaults,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyDefaults {
    pub kind: Option<StrategyKind>,
    pub temperature: Option<f64>,
    pub workers: Option<usize>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: CliConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        fix(&mut config.store);
        fix(&mut config.manifest);
        fix(&mut config.decision_log);
        fix(&mut config.assessment_cache);
        fix(&mut config.export_path);
        if let Some(provider) = config.provider.as_mut() {
            fix(&mut provider.script);
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<CliConfig>("stor = \"x\"").is_err());
        assert!(toml::from_str::<CliConfig>("[strategy]\nkind = \"cot\"\nbogus = 1").is_err());
        assert!(toml::from_str::<CliConfig>("[provider]\nkind = \"scripted-mock\"\napi_key = \"k\"").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ontorag.toml");
        std::fs::write(
            &path,
            "store = \"kg.nq\"\n[provider]\nkind = \"scripted-mock\"\nscript = \"mock.json\"\n[strategy]\nkind = \"few-shot\"\ntemperature = 0.6\n",
        )
        .unwrap();
        let c = CliConfig::load(&path).unwrap();
        assert_eq!(c.store.unwrap(), dir.path().join("kg.nq"));
        assert_eq!(c.provider.unwrap().script.unwrap(), dir.path().join("mock.json"));
        assert_eq!(c.strategy.kind, Some(StrategyKind::FewShot));
        assert_eq!(c.strategy.temperature, Some(0.6));
    }
}

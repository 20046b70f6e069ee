//! Text forms of configuration values shared by the CLI and manifests.

use std::str::FromStr;

use mrp_core::{BlockSize, NmPattern, Pattern, SparsityConfig, Strategy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl From<mrp_core::Error> for ConfigError {
    fn from(e: mrp_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

pub fn parse_pattern(text: &str) -> Result<NmPattern, ConfigError> {
    let (n, m) = text
        .split_once(':')
        .ok_or_else(|| ConfigError(format!("pattern {text:?} is not of the form N:M")))?;
    let parse = |s: &str| {
        s.trim().parse::<usize>().map_err(|_| ConfigError(format!("pattern {text:?} is not of the form N:M")))
    };
    Ok(NmPattern::new(parse(n)?, parse(m)?)?)
}

pub fn parse_block_size(text: &str) -> Result<BlockSize, ConfigError> {
    if text.eq_ignore_ascii_case("all") {
        return Ok(BlockSize::All);
    }
    match text.parse::<usize>() {
        Ok(0) | Err(_) => Err(ConfigError(format!("block size {text:?} must be a positive integer or 'all'"))),
        Ok(s) => Ok(BlockSize::Cols(s)),
    }
}

pub fn parse_strategy(text: &str) -> Result<Strategy, ConfigError> {
    match text {
        "s" | "S" => Ok(Strategy::S),
        "m" | "M" => Ok(Strategy::M),
        _ => Err(ConfigError(format!("strategy {text:?} must be 's' or 'm'"))),
    }
}

/// Comma-separated list of values.
pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>, ConfigError> {
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| ConfigError(format!("bad list entry {s:?} in {text:?}"))))
        .collect()
}

/// Block size as it appears in JSON: a column count or `"all"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockSizeSpec {
    Cols(usize),
    Named(NamedBlockSize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedBlockSize {
    All,
}

impl From<BlockSize> for BlockSizeSpec {
    fn from(b: BlockSize) -> Self {
        match b {
            BlockSize::All => BlockSizeSpec::Named(NamedBlockSize::All),
            BlockSize::Cols(s) => BlockSizeSpec::Cols(s),
        }
    }
}

impl From<BlockSizeSpec> for BlockSize {
    fn from(b: BlockSizeSpec) -> Self {
        match b {
            BlockSizeSpec::Named(NamedBlockSize::All) => BlockSize::All,
            BlockSizeSpec::Cols(s) => BlockSize::Cols(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    S,
    M,
}

impl From<StrategyName> for Strategy {
    fn from(s: StrategyName) -> Self {
        match s {
            StrategyName::S => Strategy::S,
            StrategyName::M => Strategy::M,
        }
    }
}

/// Partial configuration attached to a manifest entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<StrategyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comp: Option<StrategyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_size: Option<BlockSizeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damp: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, base: &SparsityConfig) -> Result<SparsityConfig, ConfigError> {
        let mut cfg = *base;
        match (self.sparsity, &self.pattern) {
            (Some(_), Some(_)) => return Err(ConfigError("overrides set both sparsity and pattern".into())),
            (Some(alpha), None) => cfg.pattern = Pattern::Unstructured { alpha },
            (None, Some(p)) => cfg.pattern = Pattern::SemiStructured(parse_pattern(p)?),
            (None, None) => {}
        }
        if let Some(s) = self.mask {
            cfg.combo.mask = s.into();
        }
        if let Some(s) = self.comp {
            cfg.combo.comp = s.into();
        }
        if let Some(b) = self.block_size {
            cfg.block_size = b.into();
        }
        if let Some(d) = self.damp {
            cfg.gamma_rel = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Pattern as written in reports: `"2:4"` or `"unstructured"`.
pub fn pattern_label(p: &Pattern) -> String {
    match p {
        Pattern::Unstructured { .. } => "unstructured".into(),
        Pattern::SemiStructured(nm) => nm.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mrp_core::StrategyCombo;

    #[test]
    fn parses_text_forms() {
        assert_eq!(parse_pattern("2:4").unwrap(), NmPattern { n: 2, m: 4 });
        assert!(parse_pattern("4:4").is_err());
        assert!(parse_pattern("24").is_err());
        assert_eq!(parse_block_size("ALL").unwrap(), BlockSize::All);
        assert_eq!(parse_block_size("128").unwrap(), BlockSize::Cols(128));
        assert!(parse_block_size("0").is_err());
        assert_eq!(parse_strategy("m").unwrap(), Strategy::M);
        assert!(parse_strategy("x").is_err());
        assert_eq!(parse_list::<f64>("0.001, 0.01,0.1").unwrap(), vec![0.001, 0.01, 0.1]);
        assert!(parse_list::<usize>("32,x").is_err());
    }

    #[test]
    fn overrides_apply_and_validate() {
        let base = SparsityConfig::unstructured(0.5, BlockSize::All, StrategyCombo::SM);
        let o: Overrides =
            serde_json::from_str(r#"{"pattern": "2:4", "mask": "m", "block_size": 8, "damp": 0.1}"#).unwrap();
        let cfg = o.apply(&base).unwrap();
        assert_eq!(cfg.pattern, Pattern::SemiStructured(NmPattern { n: 2, m: 4 }));
        assert_eq!(cfg.combo, StrategyCombo::MM);
        assert_eq!(cfg.block_size, BlockSize::Cols(8));
        assert_eq!(cfg.gamma_rel, 0.1);

        let all: Overrides = serde_json::from_str(r#"{"block_size": "all"}"#).unwrap();
        assert_eq!(all.block_size, Some(BlockSizeSpec::Named(NamedBlockSize::All)));

        let bad: Overrides = serde_json::from_str(r#"{"mask": "m"}"#).unwrap();
        assert!(bad.apply(&base).is_err());
        let both = Overrides { sparsity: Some(0.5), pattern: Some("2:4".into()), ..Default::default() };
        assert!(both.apply(&base).is_err());
        assert!(serde_json::from_str::<Overrides>(r#"{"alpha": 0.5}"#).is_err());
    }
}

//! Flat `key = value` configuration files with `#` comments.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::backbone::{BackboneConfig, NUM_STAGES};
use crate::complexity::StageSpec;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvConfig {
    values: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::config(format!("line {}: empty key", i + 1)));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::config(format!(
                    "line {}: duplicate key `{k}`",
                    i + 1
                )));
            }
        }
        Ok(KvConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::config(format!("`{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::config(format!("missing required key `{key}`")))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.values
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<T>()
                            .map_err(|_| Error::config(format!("`{key}`: cannot parse `{s}`")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Rejects keys outside `allowed`.
    pub fn only(&self, allowed: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::config(format!(
                "unknown key `{k}` (expected one of: {})",
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

pub const BACKBONE_KEYS: &[&str] = &[
    "tau",
    "stage_blocks",
    "height",
    "width",
    "in_channels",
    "ir_channels",
    "num_classes",
];

/// Starts from the classifier defaults and overrides what the file sets.
pub fn backbone_from_kv(kv: &KvConfig) -> Result<BackboneConfig> {
    let mut cfg = BackboneConfig::classification();
    cfg.tau = kv.get_or("tau", cfg.tau)?;
    if let Some(b) = kv.list::<usize>("stage_blocks")? {
        cfg.stage_blocks = b.try_into().map_err(|b: Vec<usize>| {
            Error::config(format!(
                "`stage_blocks` needs {NUM_STAGES} entries, got {}",
                b.len()
            ))
        })?;
    }
    cfg.height = kv.get_or("height", cfg.height)?;
    cfg.width = kv.get_or("width", cfg.width)?;
    cfg.in_channels = kv.get_or("in_channels", cfg.in_channels)?;
    cfg.ir_channels = kv.get_or("ir_channels", cfg.ir_channels)?;
    cfg.validate()?;
    Ok(cfg)
}

pub const STAGE_KEYS: &[&str] = &[
    "h",
    "w",
    "j",
    "k",
    "c_in",
    "c_out",
    "n",
    "wavelet_len",
    "batch",
];

pub fn stage_spec_from_kv(kv: &KvConfig) -> Result<StageSpec> {
    let h: usize = kv.require("h")?;
    let spec = StageSpec {
        h,
        w: kv.get_or("w", h)?,
        j: kv.get_or("j", 0)?,
        k: kv.get_or("k", 3)?,
        c_in: kv.require("c_in")?,
        c_out: kv.require("c_out")?,
        n: kv.get_or("n", 1)?,
        wavelet_len: kv.get_or("wavelet_len", 2)?,
    };
    spec.validate()?;
    Ok(spec)
}

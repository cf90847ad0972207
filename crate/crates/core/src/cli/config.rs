//! Flat INI configuration: `[section]` headers, `key = value` lines, `#` or
//! `;` comments, comma-separated lists.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::catalog;
use crate::fiber::{FiberKind, FiberSystem};
use crate::ifs::IfsSpec;
use crate::measure::FiberSpace;
use crate::symbolic::SubshiftSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line of the offending entry, when there is one.
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), message: message.into() }
    }

    pub fn general(message: impl Into<String>) -> Self {
        Self { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed configuration keyed by `section.key`. Command-line overrides are
/// stored with line 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
}

/// Parses numbers written as decimals, `p/q` fractions or `b^e` powers.
pub fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let bad = || format!("{t:?} is not a number");
    if let Some((b, e)) = t.split_once('^') {
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        let e: f64 = e.trim().parse().map_err(|_| bad())?;
        return Ok(b.powf(e));
    }
    if let Some((p, q)) = t.split_once('/') {
        let p: f64 = p.trim().parse().map_err(|_| bad())?;
        let q: f64 = q.trim().parse().map_err(|_| bad())?;
        if q == 0.0 {
            return Err(bad());
        }
        return Ok(p / q);
    }
    let v: f64 = t.parse().map_err(|_| bad())?;
    if v.is_finite() { Ok(v) } else { Err(bad()) }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split(['#', ';']).next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line, "unterminated section header"))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(ConfigError::at(line, format!("invalid section name {name:?}")));
                }
                section = Some(name.to_ascii_lowercase());
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, found {body:?}")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::at(line, "empty key"));
            }
            let section = section
                .as_deref()
                .ok_or_else(|| ConfigError::at(line, "key outside of any section"))?;
            let full = format!("{section}.{}", key.to_ascii_lowercase());
            if entries.contains_key(&full) {
                return Err(ConfigError::at(line, format!("duplicate key {full}")));
            }
            entries.insert(full, Entry { value: value.trim().to_string(), line });
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), Entry { value: value.into(), line: 0 });
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn has_section(&self, section: &str) -> bool {
        let prefix = format!("{section}.");
        self.entries.keys().any(|k| k.starts_with(&prefix))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let message = format!("{key}: {}", message.into());
        match self.entries.get(key) {
            Some(e) if e.line > 0 => ConfigError::at(e.line, message),
            _ => ConfigError::general(message),
        }
    }

    /// An error attributed to the line of `key`.
    pub fn error_for(&self, key: &str, message: impl Into<String>) -> ConfigError {
        self.err(key, message)
    }

    pub fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(key).map(|v| parse_number(v).map_err(|m| self.err(key, m))).transpose()
    }

    pub fn number_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.number(key)?.unwrap_or(default))
    }

    pub fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.raw(key)
            .map(|v| v.trim().parse::<usize>().map_err(|_| self.err(key, format!("{v:?} is not a nonnegative integer"))))
            .transpose()
    }

    pub fn count_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.count(key)?.unwrap_or(default))
    }

    pub fn seed(&self) -> Result<Option<u64>, ConfigError> {
        self.raw("run.seed")
            .map(|v| v.trim().parse::<u64>().map_err(|_| self.err("run.seed", format!("{v:?} is not a seed"))))
            .transpose()
    }

    pub fn numbers(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_number(s).map_err(|m| self.err(key, m)))
                    .collect()
            })
            .transpose()
    }

    fn required_numbers(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        self.numbers(key)?.ok_or_else(|| ConfigError::general(format!("missing key {key}")))
    }

    /// Every entry as `section.key → value`, for echoing into summaries.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .filter(|(k, _)| !k.starts_with("output."))
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect()
    }

    /// The system named by `system.catalog`, or the one described by the
    /// `subshift` and `fiber` sections.
    pub fn system(&self) -> Result<FiberSystem, ConfigError> {
        if let Some(name) = self.raw("system.catalog") {
            return catalog::by_name(name.trim())
                .ok_or_else(|| self.err("system.catalog", format!("unknown catalog system {name:?}")));
        }
        let spec = Arc::new(self.subshift()?);
        let n = spec.alphabet();
        let kind_key = "fiber.kind";
        let kind = self.raw(kind_key).ok_or_else(|| ConfigError::general("missing key fiber.kind"))?;
        let space_name = self.raw("fiber.space").unwrap_or("interval").trim().to_ascii_lowercase();
        let space = match space_name.as_str() {
            "interval" => {
                let lo = self.number_or("fiber.lo", 0.0)?;
                let hi = self.number_or("fiber.hi", 1.0)?;
                FiberSpace::interval(lo, hi).map_err(|e| self.err("fiber.space", e.to_string()))?
            }
            "finite" => {
                let dist = self.required_numbers("fiber.dist")?;
                let m = (dist.len() as f64).sqrt().round() as usize;
                if m * m != dist.len() {
                    return Err(self.err("fiber.dist", "distance matrix is not square"));
                }
                let rows = dist.chunks(m).map(<[f64]>::to_vec).collect();
                FiberSpace::finite(rows).map_err(|e| self.err("fiber.dist", e.to_string()))?
            }
            other => return Err(self.err("fiber.space", format!("unknown space {other:?}"))),
        };
        let kind = match kind.trim().to_ascii_lowercase().as_str() {
            "first_symbol_affine" | "affine" => FiberKind::FirstSymbolAffine {
                a: self.required_numbers("fiber.a")?,
                b: self.required_numbers("fiber.b")?,
            },
            "sequence_affine" => FiberKind::SequenceAffine {
                a: self.number("fiber.a")?.ok_or_else(|| ConfigError::general("missing key fiber.a"))?,
                c0: self.number("fiber.c0")?.ok_or_else(|| ConfigError::general("missing key fiber.c0"))?,
            },
            "table" => {
                let flat = self.required_numbers("fiber.maps")?;
                if flat.is_empty() || flat.len() % n != 0 || flat.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
                    return Err(self.err("fiber.maps", format!("need {n} rows of point indices")));
                }
                let idx: Vec<usize> = flat.iter().map(|&v| v as usize).collect();
                FiberKind::Table { maps: idx.chunks(flat.len() / n).map(<[usize]>::to_vec).collect() }
            }
            other => return Err(self.err(kind_key, format!("unknown fiber kind {other:?}"))),
        };
        let alpha = self.number("fiber.alpha")?;
        let h = self.number("fiber.h")?;
        FiberSystem::new(spec, Arc::new(space), kind, alpha, h).map_err(|e| self.err(kind_key, e.to_string()))
    }

    fn subshift(&self) -> Result<SubshiftSpec, ConfigError> {
        let n = self
            .count("subshift.alphabet")?
            .ok_or_else(|| ConfigError::general("missing key subshift.alphabet"))?;
        let square = |key: &str, v: Vec<f64>| -> Result<Vec<Vec<f64>>, ConfigError> {
            if v.len() != n * n {
                return Err(self.err(key, format!("expected {} entries, found {}", n * n, v.len())));
            }
            Ok(v.chunks(n).map(<[f64]>::to_vec).collect())
        };
        let transition: Vec<Vec<u8>> = match self.numbers("subshift.transition")? {
            Some(v) => {
                if v.iter().any(|&x| x != 0.0 && x != 1.0) {
                    return Err(self.err("subshift.transition", "entries must be 0 or 1"));
                }
                square("subshift.transition", v)?
                    .into_iter()
                    .map(|r| r.into_iter().map(|x| x as u8).collect())
                    .collect()
            }
            None => vec![vec![1; n]; n],
        };
        let stochastic = match self.numbers("subshift.stochastic")? {
            Some(v) => square("subshift.stochastic", v)?,
            None => transition
                .iter()
                .map(|row| {
                    let k = row.iter().filter(|&&a| a == 1).count().max(1) as f64;
                    row.iter().map(|&a| f64::from(a) / k).collect()
                })
                .collect(),
        };
        let stationary = self.numbers("subshift.stationary")?;
        let theta = self.number_or("subshift.theta", 0.5)?;
        SubshiftSpec::new(transition, stochastic, stationary, theta).map_err(|e| self.err("subshift.alphabet", e.to_string()))
    }

    /// The `ifs` section, or `None` when absent.
    pub fn ifs(&self) -> Result<Option<IfsSpec>, ConfigError> {
        if !self.has_section("ifs") {
            return Ok(None);
        }
        let maps = self.required_numbers("ifs.maps")?;
        if maps.len() % 2 != 0 {
            return Err(self.err("ifs.maps", "maps are listed as a, b pairs"));
        }
        let pairs: Vec<(f64, f64)> = maps.chunks(2).map(|c| (c[0], c[1])).collect();
        let p = match self.numbers("ifs.p")? {
            Some(p) => p,
            None => vec![1.0 / pairs.len() as f64; pairs.len()],
        };
        IfsSpec::new(pairs, p).map(Some).map_err(|e| self.err("ifs.maps", e.to_string()))
    }
}

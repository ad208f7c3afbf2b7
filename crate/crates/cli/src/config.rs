//! Flat `key = value` configuration files.
//!
//! One setting per line; `#` starts a comment; blank lines are ignored.
//! Keys are case-sensitive and may appear once. Views are declared in file
//! order with `view.<name> = <path>` and `view.<name>.family = <family>`.
//! Relative paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use sib_core::Family;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: Vec<Entry>,
    base_dir: PathBuf,
    source: String,
}

/// A declared view: name, data file and family tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSpec {
    pub name: String,
    pub path: PathBuf,
    pub family: Family,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base, &path.display().to_string())
    }

    pub fn parse(text: &str, base_dir: PathBuf, source: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{source}:{line}: expected `key = value`")))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(CliError::Config(format!("{source}:{line}: invalid key {key:?}")));
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(CliError::Config(format!(
                    "{source}:{line}: key {key:?} already set on line {}",
                    prev.line
                )));
            }
            entries.push(Entry { key: key.to_string(), value: value.trim().to_string(), line });
        }
        Ok(Self { entries, base_dir, source: source.to_string() })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.value.as_str())
    }

    fn located(&self, key: &str) -> String {
        match self.entries.iter().find(|e| e.key == key) {
            Some(e) => format!("{}:{}", self.source, e.line),
            None => self.source.clone(),
        }
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("{}: {key} = {v:?}: {e}", self.located(key))))
            })
            .transpose()
    }

    pub fn value_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse_value(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(CliError::Config(format!("{}: {key} = {v:?} is not a boolean", self.located(key)))),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|e| CliError::Config(format!("{}: {key}: {s:?}: {e}", self.located(key))))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| self.resolve(v))
    }

    pub fn resolve(&self, value: &str) -> PathBuf {
        let p = Path::new(value);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn family(&self, key: &str) -> Result<Option<Family>> {
        self.parse_value::<Family>(key)
    }

    /// Views in declaration order.
    pub fn views(&self) -> Result<Vec<ViewSpec>> {
        let mut views = Vec::new();
        for entry in &self.entries {
            let Some(name) = entry.key.strip_prefix("view.") else { continue };
            if name.contains('.') {
                continue;
            }
            if name.is_empty() {
                return Err(CliError::Config(format!("{}:{}: empty view name", self.source, entry.line)));
            }
            let family = self
                .family(&format!("view.{name}.family"))?
                .ok_or_else(|| CliError::Config(format!("{}: view {name:?} has no family", self.source)))?;
            views.push(ViewSpec { name: name.to_string(), path: self.resolve(&entry.value), family });
        }
        for entry in &self.entries {
            if let Some(name) = entry.key.strip_prefix("view.").and_then(|k| k.strip_suffix(".family")) {
                if !views.iter().any(|v| v.name == name) {
                    return Err(CliError::Config(format!(
                        "{}:{}: family given for undeclared view {name:?}",
                        self.source, entry.line
                    )));
                }
            }
        }
        Ok(views)
    }

    /// Rejects keys outside `allowed`; a trailing `*` in a pattern matches
    /// any suffix.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for entry in &self.entries {
            let ok = allowed.iter().any(|pat| match pat.strip_suffix('*') {
                Some(prefix) => entry.key.starts_with(prefix),
                None => entry.key == *pat,
            });
            if !ok {
                return Err(CliError::Config(format!(
                    "{}:{}: unknown key {:?}",
                    self.source, entry.line, entry.key
                )));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config> {
        Config::parse(text, PathBuf::from("/data"), "test.conf")
    }

    #[test]
    fn parses_values_comments_and_lists() {
        let c = parse("# header\nk = 3\nlambda = 0.1, 0.2 # grid\n\nname = a=b\n").unwrap();
        assert_eq!(c.value_or::<usize>("k", 1).unwrap(), 3);
        assert_eq!(c.list::<f64>("lambda").unwrap(), Some(vec![0.1, 0.2]));
        assert_eq!(c.get("name"), Some("a=b"));
        assert_eq!(c.value_or::<f64>("rho", 0.5).unwrap(), 0.5);
    }

    #[test]
    fn views_keep_declaration_order_and_resolve_paths() {
        let c = parse(
            "view.lipid = lipid.csv\nview.image = /abs/image.csv\nview.image.family = gaussian\nview.lipid.family = bernoulli\n",
        )
        .unwrap();
        let views = c.views().unwrap();
        assert_eq!(views[0].name, "lipid");
        assert_eq!(views[0].path, PathBuf::from("/data/lipid.csv"));
        assert_eq!(views[0].family, Family::Bernoulli);
        assert_eq!(views[1].path, PathBuf::from("/abs/image.csv"));
    }

    #[test]
    fn malformed_files_are_config_errors() {
        assert!(parse("k 3").is_err());
        assert!(parse("k = 3\nk = 4").is_err());
        assert!(parse("view.a = a.csv").unwrap().views().is_err());
        assert!(parse("view.a.family = gaussian").unwrap().views().is_err());
        let c = parse("k = three").unwrap();
        let err = c.value_or::<usize>("k", 1).unwrap_err();
        assert!(err.to_string().contains("test.conf:1"));
        assert!(parse("kk = 3").unwrap().check_keys(&["k", "view.*"]).is_err());
        assert!(parse("view.a = x").unwrap().check_keys(&["k", "view.*"]).is_ok());
        assert!(parse("flag = maybe").unwrap().bool_or("flag", false).is_err());
    }
}

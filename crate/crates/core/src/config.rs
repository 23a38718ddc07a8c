//! Flat `key = value` configuration files.
//!
//! `#` starts a comment, `include = path` splices another file (relative to
//! the including file) at that point, and a key may repeat: scalar lookups
//! take the last value, list lookups take all of them in order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::reg::{MmConfig, ParamRule};
use crate::wbipm::{PreconditionerPolicy, SolveConfig};

const MAX_INCLUDE_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub path: PathBuf,
    pub line: usize,
}

/// Parsed key/value pairs. Typed getters consume keys so that leftovers can
/// be reported as unknown.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, Vec<Entry>>,
}

impl ConfigMap {
    pub fn load(path: &Path) -> Result<Self> {
        let mut map = ConfigMap::default();
        map.load_into(path, 0)?;
        Ok(map)
    }

    /// Parse text; includes resolve relative to `origin`'s directory.
    pub fn parse_str(text: &str, origin: &Path) -> Result<Self> {
        let mut map = ConfigMap::default();
        map.parse_into(text, origin, 0)?;
        Ok(map)
    }

    fn load_into(&mut self, path: &Path, depth: usize) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.parse_into(&text, path, depth)
    }

    fn parse_into(&mut self, text: &str, origin: &Path, depth: usize) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: no + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(perr("empty key".into()));
            }
            if key == "include" {
                if depth >= MAX_INCLUDE_DEPTH {
                    return Err(perr("includes nested too deeply (cycle?)".into()));
                }
                let base = origin.parent().unwrap_or(Path::new(""));
                self.load_into(&base.join(value), depth + 1)?;
                continue;
            }
            self.entries.entry(key.to_string()).or_default().push(Entry {
                value: value.to_string(),
                path: origin.to_path_buf(),
                line: no + 1,
            });
        }
        Ok(())
    }

    /// Set or override a key, as if appended at the end of the file.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.entry(key.to_string()).or_default().push(Entry {
            value: value.to_string(),
            path: PathBuf::from("<override>"),
            line: 0,
        });
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn take_str(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key).and_then(|mut v| v.pop())
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take_str(key) {
            None => Ok(None),
            Some(e) => parse_entry(key, &e).map(Some),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// All values of a repeated key, in file order.
    pub fn take_all(&mut self, key: &str) -> Vec<Entry> {
        self.entries.remove(key).unwrap_or_default()
    }

    /// Whitespace- or comma-separated list value.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.take_str(key) {
            None => Ok(None),
            Some(e) => split_list(&e.value)
                .map(|tok| {
                    tok.parse::<T>().map_err(|_| Error::Parse {
                        path: e.path.clone(),
                        line: e.line,
                        msg: format!("{key}: cannot parse list item {tok:?}"),
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Error listing every key that no getter consumed.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let keys: Vec<String> = self
            .entries
            .iter()
            .map(|(k, v)| {
                let e = v.last().expect("non-empty entry list");
                format!("{k} ({}:{})", e.path.display(), e.line)
            })
            .collect();
        Err(Error::validation(format!("unknown config keys: {}", keys.join(", "))))
    }
}

impl FromStr for ParamRule {
    type Err = Error;

    /// `wgcv` or a fixed non-negative number.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "wgcv" => Ok(ParamRule::Wgcv),
            t => t
                .parse::<f64>()
                .map(ParamRule::Fixed)
                .map_err(|_| Error::validation(format!("expected `wgcv` or a number, got {t:?}"))),
        }
    }
}

impl FromStr for PreconditionerPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "complement" => Ok(PreconditionerPolicy::Complement),
            "full" => Ok(PreconditionerPolicy::Full),
            "identity" => Ok(PreconditionerPolicy::Identity),
            t => Err(Error::validation(format!(
                "preconditioner must be complement, full or identity, got {t:?}"
            ))),
        }
    }
}

impl SolveConfig {
    /// Read `solver.*` keys, consuming them. Missing keys keep their defaults.
    pub fn take_from(map: &mut ConfigMap) -> Result<Self> {
        let d = SolveConfig::default();
        let mm = MmConfig {
            epsilon: map.take_or("solver.epsilon", d.mm.epsilon)?,
            lambda_rule: map.take_or("solver.lambda", d.mm.lambda_rule)?,
            alpha_rule: map.take_or("solver.alpha", d.mm.alpha_rule)?,
            omega: map.take_or("solver.omega", d.mm.omega)?,
            adaptive_omega: map.take_or("solver.adaptive_omega", d.mm.adaptive_omega)?,
            max_outer: map.take_or("solver.max_outer", d.mm.max_outer)?,
            stagnation_tol: map.take_or("solver.stagnation_tol", d.mm.stagnation_tol)?,
            stagnation_window: map.take_or("solver.stagnation_window", d.mm.stagnation_window)?,
        };
        let cfg = SolveConfig {
            mm,
            preconditioner: map.take_or("solver.preconditioner", d.preconditioner)?,
            snapshots: map.take_list("solver.snapshots")?.unwrap_or(d.snapshots),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty())
}

pub fn parse_entry<T: FromStr>(key: &str, e: &Entry) -> Result<T> {
    e.value.parse::<T>().map_err(|_| Error::Parse {
        path: e.path.clone(),
        line: e.line,
        msg: format!("{key}: cannot parse {:?}", e.value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_comments_and_repeats() {
        let text = "# header\n a = 1.5 \nb=hello # trailing\n\nc = 1\nc = 2\nlist = 0.05, 0.1 0.2\n";
        let mut m = ConfigMap::parse_str(text, Path::new("x.cfg")).unwrap();
        assert_eq!(m.take::<f64>("a").unwrap(), Some(1.5));
        assert_eq!(m.take_str("b").unwrap().value, "hello");
        assert_eq!(m.take_list::<f64>("list").unwrap(), Some(vec![0.05, 0.1, 0.2]));
        let mut m2 = m.clone();
        assert_eq!(m.take::<u32>("c").unwrap(), Some(2));
        assert_eq!(m2.take_all("c").len(), 2);
        assert!(m.finish().is_ok());
    }

    #[test]
    fn unknown_keys_reported() {
        let m = ConfigMap::parse_str("foo = 1\nbar = 2\n", Path::new("x.cfg")).unwrap();
        let err = m.finish().unwrap_err().to_string();
        assert!(err.contains("foo") && err.contains("bar"));
    }

    #[test]
    fn syntax_and_type_errors() {
        assert!(matches!(
            ConfigMap::parse_str("novalue\n", Path::new("x.cfg")),
            Err(Error::Parse { line: 1, .. })
        ));
        let mut m = ConfigMap::parse_str("\na = abc\n", Path::new("x.cfg")).unwrap();
        assert!(matches!(m.take::<f64>("a"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn includes_resolve_relative_and_detect_cycles() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("sub/base.cfg"), "a = 1\nb = 2\n").unwrap();
        fs::write(dir.path().join("main.cfg"), "include = sub/base.cfg\nb = 3\n").unwrap();
        let mut m = ConfigMap::load(&dir.path().join("main.cfg")).unwrap();
        assert_eq!(m.take::<i32>("a").unwrap(), Some(1));
        assert_eq!(m.take::<i32>("b").unwrap(), Some(3));

        fs::write(dir.path().join("loop.cfg"), "include = loop.cfg\n").unwrap();
        assert!(ConfigMap::load(&dir.path().join("loop.cfg")).is_err());
    }

    #[test]
    fn solver_keys() {
        let text = "solver.lambda = 0.5\nsolver.alpha = wgcv\nsolver.preconditioner = full\nsolver.snapshots = 20, 50\n";
        let mut m = ConfigMap::parse_str(text, Path::new("x.cfg")).unwrap();
        let cfg = SolveConfig::take_from(&mut m).unwrap();
        m.finish().unwrap();
        assert_eq!(cfg.mm.lambda_rule, ParamRule::Fixed(0.5));
        assert_eq!(cfg.mm.alpha_rule, ParamRule::Wgcv);
        assert_eq!(cfg.preconditioner, PreconditionerPolicy::Full);
        assert_eq!(cfg.snapshots, vec![20, 50]);
        assert_eq!(cfg.mm.max_outer, 120);

        let mut m = ConfigMap::parse_str("solver.omega = 2\n", Path::new("x.cfg")).unwrap();
        assert!(SolveConfig::take_from(&mut m).unwrap_err().is_validation());
        let mut m = ConfigMap::parse_str("solver.lambda = auto\n", Path::new("x.cfg")).unwrap();
        assert!(SolveConfig::take_from(&mut m).is_err());
    }
}

//! Plain `key = value` text blocks used by configs, checkpoint headers and reports.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{config_err, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are skipped;
    /// duplicate keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err!("line {}: expected key = value, got {raw:?}", lineno + 1))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(config_err!("line {}: empty key", lineno + 1));
            }
            if kv.get(k).is_some() {
                return Err(config_err!("line {}: duplicate key {k:?}", lineno + 1));
            }
            kv.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(kv)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Inserts or replaces.
    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in other.iter() {
            self.set(k, v);
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    pub fn reader(&self) -> KvReader<'_> {
        KvReader {
            kv: self,
            used: BTreeSet::new(),
        }
    }
}

/// Typed access that remembers which keys were read, so leftovers can be rejected.
pub struct KvReader<'a> {
    kv: &'a KeyValues,
    used: BTreeSet<&'a str>,
}

impl<'a> KvReader<'a> {
    pub fn opt<T: FromStr>(&mut self, key: &'a str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.kv.get(key) {
            None => Ok(None),
            Some(raw) => {
                self.used.insert(key);
                raw.parse::<T>()
                    .map(Some)
                    .map_err(|e| config_err!("key {key}: cannot parse {raw:?}: {e}"))
            }
        }
    }

    pub fn or<T: FromStr>(&mut self, key: &'a str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    pub fn req<T: FromStr>(&mut self, key: &'a str) -> Result<T>
    where
        T::Err: Display,
    {
        self.opt(key)?
            .ok_or_else(|| config_err!("missing required key {key}"))
    }

    pub fn list<T: FromStr>(&mut self, key: &'a str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some(raw) = self.kv.get(key) else {
            return Ok(None);
        };
        self.used.insert(key);
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| config_err!("key {key}: cannot parse {s:?}: {e}"))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Errors on any key that was never read.
    pub fn finish(self) -> Result<()> {
        let unknown: Vec<&str> = self
            .kv
            .keys()
            .filter(|k| !self.used.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(config_err!("unknown keys: {}", unknown.join(", ")))
        }
    }
}

pub fn join_list<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_read() {
        let kv = KeyValues::parse("# comment\na = 1\n\nb=x, y ,z  # trailing\n").unwrap();
        let mut r = kv.reader();
        assert_eq!(r.req::<u32>("a").unwrap(), 1);
        assert_eq!(
            r.list::<String>("b").unwrap().unwrap(),
            vec!["x", "y", "z"]
        );
        assert_eq!(r.or("c", 5u8).unwrap(), 5);
        r.finish().unwrap();
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        let kv = KeyValues::parse("a = 1\nzzz = 2").unwrap();
        let mut r = kv.reader();
        r.req::<u32>("a").unwrap();
        let err = r.finish().unwrap_err().to_string();
        assert!(err.contains("zzz"), "{err}");
        assert!(KeyValues::parse("a=1\na=2").is_err());
        assert!(KeyValues::parse("novalue").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut kv = KeyValues::new();
        kv.set("x", 1.5);
        kv.set("name", "abc");
        kv.set("x", 2.5);
        assert_eq!(KeyValues::parse(&kv.to_text()).unwrap(), kv);
    }
}

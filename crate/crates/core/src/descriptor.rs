//! Plain-text descriptors of the form `name:key=value,key=value`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Descriptor {
    pub name: String,
    params: BTreeMap<String, String>,
    source: String,
}

impl Descriptor {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (name, rest) = match text.split_once(':') {
            Some((n, r)) => (n.trim(), Some(r)),
            None => (text, None),
        };
        if name.is_empty() {
            return Err(err(text, "empty name"));
        }
        let mut params = BTreeMap::new();
        if let Some(rest) = rest {
            for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| err(text, &format!("`{pair}` is not key=value")))?;
                let k = k.trim().to_string();
                if params.insert(k.clone(), v.trim().to_string()).is_some() {
                    return Err(err(text, &format!("duplicate key `{k}`")));
                }
            }
        }
        Ok(Descriptor {
            name: name.to_string(),
            params,
            source: text.to_string(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn has(&self, key: &str) -> bool {
        self.params.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.params.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| err(&self.source, &format!("cannot parse `{key}={v}`"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| err(&self.source, &format!("missing required key `{key}`")))
    }

    /// Rejects keys outside `allowed`.
    pub fn expect_keys(&self, allowed: &[&str]) -> Result<()> {
        for k in self.params.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(err(&self.source, &format!("unexpected key `{k}`")));
            }
        }
        Ok(())
    }

    /// Replaces or adds a key, refreshing the canonical text.
    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self.source = self.to_string();
        self
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            write!(f, "{}{k}={v}", if i == 0 { ":" } else { "," })?;
        }
        Ok(())
    }
}

impl FromStr for Descriptor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Descriptor::parse(s)
    }
}

fn err(descriptor: &str, reason: &str) -> Error {
    Error::Descriptor {
        descriptor: descriptor.to_string(),
        reason: reason.to_string(),
    }
}

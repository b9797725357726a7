//! `name:key=value,key=value` specification strings.

use crate::error::{LcpError, Result};

pub(crate) struct SpecString<'a> {
    input: &'a str,
    pub name: &'a str,
    params: Vec<(&'a str, &'a str)>,
}

impl<'a> SpecString<'a> {
    pub fn parse(input: &'a str) -> Result<Self> {
        let input_trim = input.trim();
        let (name, rest) = match input_trim.split_once(':') {
            Some((n, r)) => (n, r),
            None => (input_trim, ""),
        };
        if name.is_empty() {
            return Err(LcpError::parse(input, "missing name"));
        }
        let mut params = Vec::new();
        for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| LcpError::parse(input, format!("expected key=value, got `{part}`")))?;
            params.push((k.trim(), v.trim()));
        }
        Ok(Self { input, name, params })
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let raw = self.raw(key)?;
        raw.parse::<f64>()
            .map_err(|_| LcpError::parse(self.input, format!("`{key}` is not a number: `{raw}`")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let raw = self.raw(key)?;
        raw.parse::<usize>()
            .map_err(|_| LcpError::parse(self.input, format!("`{key}` is not a nonnegative integer: `{raw}`")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        if self.has(key) {
            self.usize(key)
        } else {
            Ok(default)
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.params.iter().any(|(k, _)| *k == key)
    }

    fn raw(&self, key: &str) -> Result<&'a str> {
        self.params
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| LcpError::parse(self.input, format!("missing parameter `{key}`")))
    }

    /// Rejects parameters outside `allowed`.
    pub fn only(&self, allowed: &[&str]) -> Result<()> {
        match self.params.iter().find(|(k, _)| !allowed.contains(k)) {
            Some((k, _)) => Err(LcpError::parse(self.input, format!("unknown parameter `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn error(&self, reason: impl Into<String>) -> LcpError {
        LcpError::parse(self.input, reason)
    }
}

//! Option resolution: command-line flag, then config file, then default.
//!
//! The config file is TOML. Keys in a table named after the subcommand
//! (`[sample-paths]`) take precedence over top-level keys. Keys may be
//! written with dashes or underscores.

use std::cell::RefCell;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::CliError;

#[derive(Debug, Default)]
pub struct Settings {
    section: toml::Table,
    global: toml::Table,
    resolved: RefCell<serde_json::Map<String, serde_json::Value>>,
}

impl Settings {
    pub fn load(path: Option<&Path>, subcommand: &str) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Settings::parse(&text, subcommand).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str, subcommand: &str) -> Result<Self, String> {
        let mut global: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        let section = match global.remove(subcommand) {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(format!("`{subcommand}` must be a table")),
            None => toml::Table::new(),
        };
        // Other subcommands' tables never apply here.
        global.retain(|_, v| !v.is_table());
        Ok(Settings {
            section,
            global,
            resolved: RefCell::default(),
        })
    }

    fn lookup(&self, key: &str) -> Option<&toml::Value> {
        let alt = key.replace('-', "_");
        [&self.section, &self.global]
            .into_iter()
            .find_map(|t| t.get(key).or_else(|| t.get(&alt)))
    }

    fn config_value<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.lookup(key) {
            None => Ok(None),
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}"))),
        }
    }

    pub(crate) fn record<T: Serialize>(&self, key: &str, value: &T) {
        if let Ok(v) = serde_json::to_value(value) {
            self.resolved.borrow_mut().insert(key.to_string(), v);
        }
    }

    pub fn opt<T: DeserializeOwned + Serialize>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.config_value(key)?,
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn pick<T: DeserializeOwned + Serialize>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        let v = self.opt(flag, key)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    pub fn require<T: DeserializeOwned + Serialize>(&self, flag: Option<T>, key: &str) -> Result<T, CliError> {
        self.opt(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("--{key} is required (flag or config key)")))
    }

    /// Boolean switch: a present flag wins, else config, else false.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        self.pick(flag.then_some(true), key, false)
    }

    /// Every value resolved so far, for the run manifest.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::Value::Object(self.resolved.borrow().clone())
    }
}

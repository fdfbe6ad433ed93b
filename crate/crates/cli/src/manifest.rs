//! Run manifest: ordered `key = value` lines.

use std::fmt::Display;
use std::path::Path;

use anyhow::Context;

use crate::config::ExperimentConfig;

#[derive(Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(subcommand: &str, cfg: &ExperimentConfig) -> Self {
        let mut m = Manifest::default();
        m.set("subcommand", subcommand);
        m.set("clanwalk_version", env!("CARGO_PKG_VERSION"));
        m.set("core_version", clanwalk_core::VERSION);
        m.set("config_sha256", &cfg.hash);
        m.set("seed", cfg.seed);
        m.set("replicas", cfg.replicas);
        m.set("rho", cfg.rho);
        m.set("pattern", cfg.pattern.label());
        m.set("epsilon", cfg.epsilon);
        m.set("oracle_tolerance", crate::run::ORACLE_TOL);
        m
    }

    /// Sets a key, replacing an earlier value.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let v = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = v,
            None => self.entries.push((key.to_string(), v)),
        }
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join("manifest.txt");
        std::fs::write(&path, self.render()).with_context(|| format!("writing {}", path.display()))
    }
}

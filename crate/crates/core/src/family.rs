//! RunSets that share caps and differ only in their aux tape.
//!
//! Conditional quantities such as m̂(b|a) or m̂(a|φ) need one RunSet per
//! conditioning string. A family builds them on demand, optionally backed by
//! a content-addressed cache directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::bits::Bits;
use crate::enumerate::{cache_file_name, explore_with, load_runset, save_runset, ExploreOptions, RunSet};
use crate::error::{Error, Result};
use crate::machine::MachineConfig;

#[derive(Clone, Debug)]
pub enum CachePolicy {
    /// Enumerate in memory only.
    InMemory,
    /// Read caches from the directory; fail if one is missing.
    ReadOnly(PathBuf),
    /// Read caches from the directory, building and storing missing ones.
    Build(PathBuf),
}

#[derive(Debug)]
pub struct RunSetFamily {
    base: MachineConfig,
    options: ExploreOptions,
    policy: CachePolicy,
    sets: Mutex<BTreeMap<Bits, Arc<RunSet>>>,
}

impl RunSetFamily {
    pub fn new(depth_cap: usize, step_cap: u64, options: ExploreOptions, policy: CachePolicy) -> Result<Self> {
        Ok(RunSetFamily {
            base: MachineConfig::unconditional(depth_cap, step_cap)?,
            options,
            policy,
            sets: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn in_memory(depth_cap: usize, step_cap: u64) -> Result<Self> {
        Self::new(depth_cap, step_cap, ExploreOptions::default(), CachePolicy::InMemory)
    }

    pub fn depth_cap(&self) -> usize {
        self.base.depth_cap()
    }

    pub fn step_cap(&self) -> u64 {
        self.base.step_cap()
    }

    /// Seeds the family with an already built RunSet (e.g. loaded by the caller).
    pub fn insert(&self, rs: RunSet) -> Result<Arc<RunSet>> {
        if rs.depth_cap() != self.depth_cap() || rs.step_cap() != self.step_cap() {
            return Err(Error::CacheMismatch(format!(
                "RunSet caps (depth {}, steps {}) differ from family caps (depth {}, steps {})",
                rs.depth_cap(),
                rs.step_cap(),
                self.depth_cap(),
                self.step_cap()
            )));
        }
        let rs = Arc::new(rs);
        self.sets
            .lock()
            .expect("family lock")
            .insert(rs.config().aux_tape().clone(), rs.clone());
        Ok(rs)
    }

    pub fn unconditional(&self) -> Result<Arc<RunSet>> {
        self.get(&Bits::new())
    }

    pub fn get(&self, aux: &Bits) -> Result<Arc<RunSet>> {
        if let Some(rs) = self.sets.lock().expect("family lock").get(aux) {
            return Ok(rs.clone());
        }
        let config = self.base.with_aux(aux.clone());
        let rs = Arc::new(self.obtain(&config)?);
        Ok(self
            .sets
            .lock()
            .expect("family lock")
            .entry(aux.clone())
            .or_insert(rs)
            .clone())
    }

    fn obtain(&self, config: &MachineConfig) -> Result<RunSet> {
        match &self.policy {
            CachePolicy::InMemory => explore_with(config, &self.options),
            CachePolicy::ReadOnly(dir) => load_checked(&dir.join(cache_file_name(config)), config),
            CachePolicy::Build(dir) => {
                let path = dir.join(cache_file_name(config));
                if path.exists() {
                    load_checked(&path, config)
                } else {
                    let rs = explore_with(config, &self.options)?;
                    save_runset(&rs, &path)?;
                    Ok(rs)
                }
            }
        }
    }
}

/// Loads a cache and checks that it was built for exactly `config`.
pub fn load_checked(path: &Path, config: &MachineConfig) -> Result<RunSet> {
    if !path.exists() {
        return Err(Error::CacheMismatch(format!(
            "missing cache {} (depth {}, steps {}, aux \"{}\")",
            path.display(),
            config.depth_cap(),
            config.step_cap(),
            config.aux_tape()
        )));
    }
    let rs = load_runset(path)?;
    if rs.config() != config {
        return Err(Error::CacheMismatch(format!(
            "{} holds depth {}, steps {}, aux \"{}\"",
            path.display(),
            rs.depth_cap(),
            rs.step_cap(),
            rs.config().aux_tape()
        )));
    }
    Ok(rs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::bits;

    #[test]
    fn builds_once_and_reuses() {
        let fam = RunSetFamily::in_memory(9, 20).unwrap();
        let a = fam.get(&bits("10")).unwrap();
        let b = fam.get(&bits("10")).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(a.config().aux_tape(), &bits("10"));
        assert!(fam.unconditional().unwrap().is_unconditional());
    }

    #[test]
    fn cache_policies() {
        let dir = tempfile::tempdir().unwrap();
        let ro = RunSetFamily::new(
            6,
            10,
            ExploreOptions::default(),
            CachePolicy::ReadOnly(dir.path().into()),
        )
        .unwrap();
        assert!(matches!(ro.unconditional(), Err(Error::CacheMismatch(_))));
        let build = RunSetFamily::new(6, 10, ExploreOptions::default(), CachePolicy::Build(dir.path().into())).unwrap();
        let built = build.unconditional().unwrap();
        let ro = RunSetFamily::new(
            6,
            10,
            ExploreOptions::default(),
            CachePolicy::ReadOnly(dir.path().into()),
        )
        .unwrap();
        assert_eq!(*ro.unconditional().unwrap(), *built);
    }
}

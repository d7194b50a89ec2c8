//! Two-tier staging namespace over a slow tier and a fast disk pool.
//!
//! Datasets are registered under location-independent names pointing at
//! slow-tier paths. A request stages the file into the pool (a plain
//! copy, so the staged bytes are identical to the original), evicting the
//! stalest unpinned files first when the pool would overflow. Pinned
//! names are never evicted. [`Namespace::sweep`] additionally drops
//! unpinned files that have not been accessed within the eviction age
//! (default three days). An optional artificial per-file latency stands
//! in for the cost of the slow tier in benchmarks.
//!
//! The namespace is persisted as a text manifest of (name, slow path,
//! pinned, last access); staging state is runtime-only, so a reloaded
//! namespace starts with a cold pool and re-stages on demand.
//!
//! All mutation goes through `&mut self`; share a namespace between
//! threads behind a mutex, which also makes concurrent requests for the
//! same unstaged name wait for the one staging copy.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use thiserror::Error;

/// Default eviction age: three days.
pub const DEFAULT_EVICTION_AGE: Duration = Duration::from_secs(3 * 24 * 3600);

#[derive(Debug, Error)]
pub enum FilestoreError {
    #[error("name already registered: {0:?}")]
    DuplicateName(String),
    #[error("unknown name: {0:?}")]
    UnknownName(String),
    #[error("slow-tier path does not exist: {0}")]
    MissingSource(PathBuf),
    #[error("staging {needed} bytes cannot fit the pool capacity of {capacity}")]
    CapacityExceeded { needed: u64, capacity: u64 },
    #[error("invalid name {0:?}: names must not contain tabs or newlines")]
    BadName(String),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: u32, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pool sizing and behavior knobs.
#[derive(Debug, Clone)]
pub struct PoolConfig {
    /// Fast-tier capacity in bytes; must be positive.
    pub capacity: u64,
    /// Unpinned files idle longer than this are swept.
    pub eviction_age: Duration,
    /// Artificial delay applied once per staged file.
    pub stage_latency: Duration,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            capacity: u64::MAX,
            eviction_age: DEFAULT_EVICTION_AGE,
            stage_latency: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone)]
struct Staged {
    fast_path: PathBuf,
    size: u64,
}

/// One registered dataset.
#[derive(Debug, Clone)]
pub struct Entry {
    pub slow_path: PathBuf,
    pub pinned: bool,
    pub last_access: SystemTime,
    staged: Option<Staged>,
}

impl Entry {
    pub fn is_staged(&self) -> bool {
        self.staged.is_some()
    }

    pub fn fast_path(&self) -> Option<&Path> {
        self.staged.as_ref().map(|s| s.fast_path.as_path())
    }
}

/// The staging namespace.
pub struct Namespace {
    pool_dir: PathBuf,
    config: PoolConfig,
    entries: BTreeMap<String, Entry>,
    staged_bytes: u64,
    slow_bytes_read: u64,
}

impl Namespace {
    /// Creates a namespace staging into `pool_dir` (created if missing).
    pub fn new(pool_dir: &Path, config: PoolConfig) -> Result<Namespace, FilestoreError> {
        assert!(config.capacity > 0, "pool capacity must be positive");
        fs::create_dir_all(pool_dir)?;
        Ok(Namespace {
            pool_dir: pool_dir.to_path_buf(),
            config,
            entries: BTreeMap::new(),
            staged_bytes: 0,
            slow_bytes_read: 0,
        })
    }

    /// Registers `name` for the file at `slow_path`. Pinned names are
    /// never evicted from the pool.
    pub fn register(
        &mut self,
        name: &str,
        slow_path: &Path,
        pinned: bool,
    ) -> Result<(), FilestoreError> {
        if name.is_empty() || name.contains('\t') || name.contains('\n') {
            return Err(FilestoreError::BadName(name.to_string()));
        }
        if self.entries.contains_key(name) {
            return Err(FilestoreError::DuplicateName(name.to_string()));
        }
        if !slow_path.exists() {
            return Err(FilestoreError::MissingSource(slow_path.to_path_buf()));
        }
        self.entries.insert(
            name.to_string(),
            Entry {
                slow_path: slow_path.to_path_buf(),
                pinned,
                last_access: UNIX_EPOCH,
                staged: None,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Bytes currently staged in the pool.
    pub fn staged_bytes(&self) -> u64 {
        self.staged_bytes
    }

    /// Total bytes copied from the slow tier so far (the staging cost).
    pub fn slow_bytes_read(&self) -> u64 {
        self.slow_bytes_read
    }

    /// Resolves `name` to a fast-tier path, staging it first if needed.
    pub fn request(&mut self, name: &str) -> Result<PathBuf, FilestoreError> {
        self.request_at(name, SystemTime::now())
    }

    /// [`Self::request`] with an explicit access time.
    pub fn request_at(&mut self, name: &str, now: SystemTime) -> Result<PathBuf, FilestoreError> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| FilestoreError::UnknownName(name.to_string()))?;

        if let Some(staged) = &entry.staged {
            entry.last_access = now;
            return Ok(staged.fast_path.clone());
        }

        let size = fs::metadata(&entry.slow_path)
            .map_err(|_| FilestoreError::MissingSource(entry.slow_path.clone()))?
            .len();

        // Make room: stalest unpinned staged files go first.
        while self.staged_bytes + size > self.config.capacity {
            let victim = self
                .entries
                .iter()
                .filter(|(_, e)| e.staged.is_some() && !e.pinned)
                .min_by_key(|(n, e)| (e.last_access, n.to_string()))
                .map(|(n, _)| n.clone());
            match victim {
                Some(victim) => self.evict(&victim)?,
                None => {
                    return Err(FilestoreError::CapacityExceeded {
                        needed: size,
                        capacity: self.config.capacity,
                    })
                }
            }
        }

        if !self.config.stage_latency.is_zero() {
            std::thread::sleep(self.config.stage_latency);
        }
        let fast_path = self.pool_dir.join(fast_name(name));
        let entry = self.entries.get_mut(name).expect("entry checked above");
        fs::copy(&entry.slow_path, &fast_path)?;
        self.slow_bytes_read += size;
        self.staged_bytes += size;
        entry.staged = Some(Staged {
            fast_path: fast_path.clone(),
            size,
        });
        entry.last_access = now;
        Ok(fast_path)
    }

    fn evict(&mut self, name: &str) -> Result<(), FilestoreError> {
        let entry = self.entries.get_mut(name).expect("evicting known name");
        if let Some(staged) = entry.staged.take() {
            self.staged_bytes -= staged.size;
            match fs::remove_file(&staged.fast_path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    /// Evicts every unpinned staged file idle longer than the eviction
    /// age at time `now`; returns the evicted names in order.
    pub fn sweep(&mut self, now: SystemTime) -> Result<Vec<String>, FilestoreError> {
        let stale: Vec<String> = self
            .entries
            .iter()
            .filter(|(_, e)| e.staged.is_some() && !e.pinned)
            .filter(|(_, e)| {
                now.duration_since(e.last_access).unwrap_or(Duration::ZERO)
                    > self.config.eviction_age
            })
            .map(|(n, _)| n.clone())
            .collect();
        for name in &stale {
            self.evict(name)?;
        }
        Ok(stale)
    }

    /// Writes the manifest: one tab-separated line per name with the slow
    /// path, pin flag and last access time (nanoseconds since the epoch).
    pub fn save(&self, path: &Path) -> Result<(), FilestoreError> {
        let mut out = String::from("format 1\n");
        for (name, e) in &self.entries {
            let nanos = e
                .last_access
                .duration_since(UNIX_EPOCH)
                .unwrap_or(Duration::ZERO)
                .as_nanos() as u64;
            out.push_str(&format!(
                "{name}\t{}\t{}\t{nanos}\n",
                e.slow_path.display(),
                u8::from(e.pinned),
            ));
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Loads a manifest written by [`Self::save`]. The pool starts cold:
    /// nothing counts as staged until requested again.
    pub fn load(
        manifest: &Path,
        pool_dir: &Path,
        config: PoolConfig,
    ) -> Result<Namespace, FilestoreError> {
        let mut ns = Namespace::new(pool_dir, config)?;
        let text = fs::read_to_string(manifest)?;
        for (i, raw) in text.lines().enumerate() {
            let line = i as u32 + 1;
            if raw.trim().is_empty() {
                continue;
            }
            if line == 1 {
                if raw != "format 1" {
                    return Err(FilestoreError::Manifest {
                        line,
                        msg: format!("unsupported manifest header {raw:?}"),
                    });
                }
                continue;
            }
            let parts: Vec<&str> = raw.split('\t').collect();
            if parts.len() != 4 {
                return Err(FilestoreError::Manifest {
                    line,
                    msg: format!("expected 4 tab-separated fields, got {}", parts.len()),
                });
            }
            let pinned = match parts[2] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(FilestoreError::Manifest {
                        line,
                        msg: format!("bad pin flag {other:?}"),
                    })
                }
            };
            let nanos: u64 = parts[3].parse().map_err(|_| FilestoreError::Manifest {
                line,
                msg: "bad last-access timestamp".into(),
            })?;
            ns.entries.insert(
                parts[0].to_string(),
                Entry {
                    slow_path: PathBuf::from(parts[1]),
                    pinned,
                    last_access: UNIX_EPOCH + Duration::from_nanos(nanos),
                    staged: None,
                },
            );
        }
        Ok(ns)
    }
}

/// Pool file name for a dataset name: path separators flattened, with a
/// disambiguating hash when flattening changed anything.
fn fast_name(name: &str) -> String {
    let flat: String = name
        .chars()
        .map(|c| if c == '/' || c == '\\' { '_' } else { c })
        .collect();
    if flat == name {
        flat
    } else {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        for b in name.bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
        }
        format!("{flat}_{:08x}", hash as u32)
    }
}

//! Bounded parallelism with per-host serialization and rate limiting.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use url::Url;

/// Serializes requests to the same host and spaces them at least
/// `1 / per_host_rps` apart. Distinct hosts proceed independently.
#[derive(Debug, Default)]
pub struct HostGate {
    min_interval: Option<Duration>,
    hosts: Mutex<HashMap<String, Arc<Mutex<Option<Instant>>>>>,
}

impl HostGate {
    /// `per_host_rps <= 0` disables spacing but keeps per-host serialization.
    pub fn new(per_host_rps: f64) -> Self {
        let min_interval = (per_host_rps > 0.0).then(|| Duration::from_secs_f64(1.0 / per_host_rps));
        HostGate {
            min_interval,
            hosts: Mutex::new(HashMap::new()),
        }
    }

    /// No serialization and no spacing; for replayed traffic.
    pub fn unrestricted() -> Self {
        HostGate {
            min_interval: None,
            hosts: Mutex::new(HashMap::new()),
        }
    }

    pub fn min_interval(&self) -> Option<Duration> {
        self.min_interval
    }

    /// Runs `work` while holding the slot for `uri`'s host.
    pub fn run<R>(&self, uri: &str, work: impl FnOnce() -> R) -> R {
        let Some(interval) = self.min_interval else {
            return work();
        };
        let host = host_of(uri);
        let slot = {
            let mut hosts = self.hosts.lock().expect("host table lock");
            hosts.entry(host).or_default().clone()
        };
        let mut last = slot.lock().expect("host slot lock");
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < interval {
                std::thread::sleep(interval - elapsed);
            }
        }
        let out = work();
        *last = Some(Instant::now());
        out
    }
}

pub fn host_of(uri: &str) -> String {
    Url::parse(uri)
        .ok()
        .and_then(|u| u.host_str().map(str::to_ascii_lowercase))
        .unwrap_or_default()
}

/// Maps `f` over `items` on at most `concurrency` threads, keeping input order.
pub fn run_bounded<T, R, F>(items: &[T], concurrency: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if concurrency <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(concurrency).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(err) => {
            log::warn!("thread pool unavailable ({err}); running sequentially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_preserves_order() {
        let items: Vec<u32> = (0..200).collect();
        let out = run_bounded(&items, 8, |x| x * 2);
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn gate_spaces_same_host() {
        let gate = HostGate::new(50.0);
        let start = Instant::now();
        for _ in 0..3 {
            gate.run("http://a.com/x", || ());
        }
        assert!(start.elapsed() >= Duration::from_millis(40));
        assert_eq!(host_of("HTTP://WWW.CNN.com:80/a"), "www.cnn.com");
    }
}

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Millisecond time source for ledger timestamps.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Shared logical clock; the simulator advances it, everyone else reads it.
#[derive(Debug, Default, Clone)]
pub struct LogicalClock(Arc<AtomicU64>);

impl LogicalClock {
    pub fn new(start: u64) -> Self {
        LogicalClock(Arc::new(AtomicU64::new(start)))
    }

    pub fn set(&self, t: u64) {
        self.0.store(t, Ordering::SeqCst);
    }

    pub fn tick(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst) + 1
    }
}

impl Clock for LogicalClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

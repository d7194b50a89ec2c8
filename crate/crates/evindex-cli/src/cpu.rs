//! CPU-time measurement for benchmark scenarios.
//!
//! Scenarios are single-threaded, so the executing thread's CPU clock is
//! the scenario's CPU cost and stays unpolluted by anything else the
//! process does (e.g. a parallel test runner). Wall time is recorded
//! alongside; acceptance checks use CPU-time ratios only.

use std::time::{Duration, Instant};

fn clock(which: libc::clockid_t) -> Duration {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    let rc = unsafe { libc::clock_gettime(which, &mut ts) };
    assert_eq!(rc, 0, "clock_gettime failed");
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

/// CPU time consumed by the calling thread.
pub fn thread_cpu_time() -> Duration {
    clock(libc::CLOCK_THREAD_CPUTIME_ID)
}

/// CPU time consumed by the whole process.
pub fn process_cpu_time() -> Duration {
    clock(libc::CLOCK_PROCESS_CPUTIME_ID)
}

/// Measures thread CPU time and wall time over a region.
pub struct CpuTimer {
    cpu0: Duration,
    wall0: Instant,
}

impl CpuTimer {
    pub fn start() -> CpuTimer {
        CpuTimer {
            cpu0: thread_cpu_time(),
            wall0: Instant::now(),
        }
    }

    /// Returns (cpu, wall) elapsed since start.
    pub fn elapsed(&self) -> (Duration, Duration) {
        (
            thread_cpu_time().saturating_sub(self.cpu0),
            self.wall0.elapsed(),
        )
    }
}

//! Heap high-water-mark accounting through a counting global allocator.
//!
//! A binary opts in with
//!
//! ```ignore
//! #[global_allocator]
//! static ALLOC: rsmote::metrics::TrackingAllocator = rsmote::metrics::TrackingAllocator;
//! ```
//!
//! Without it every query reports the probe as unavailable rather than zero.
//! Counters are process-wide, so only one probed region may be active at a time.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use crate::error::{Error, Result};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static ACTIVE: AtomicBool = AtomicBool::new(false);

/// System allocator that tracks live and peak heap bytes.
pub struct TrackingAllocator;

fn grew(by: usize) {
    let now = CURRENT.fetch_add(by, Ordering::Relaxed) + by;
    PEAK.fetch_max(now, Ordering::Relaxed);
    ACTIVE.store(true, Ordering::Relaxed);
}

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            grew(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            grew(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            if new_size >= layout.size() {
                grew(new_size - layout.size());
            } else {
                CURRENT.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        p
    }
}

/// Whether a [`TrackingAllocator`] is serving this process.
pub fn tracking_active() -> bool {
    if !ACTIVE.load(Ordering::Relaxed) {
        // one allocation settles the question
        drop(std::hint::black_box(Box::new(0u64)));
    }
    ACTIVE.load(Ordering::Relaxed)
}

fn require() -> Result<()> {
    if tracking_active() {
        Ok(())
    } else {
        Err(Error::ProbeUnavailable("no tracking allocator installed in this process".into()))
    }
}

pub fn current_bytes() -> Result<usize> {
    require()?;
    Ok(CURRENT.load(Ordering::Relaxed))
}

/// Resets the high-water mark to the current level and returns that level.
pub fn reset_peak() -> Result<usize> {
    require()?;
    let now = CURRENT.load(Ordering::Relaxed);
    PEAK.store(now, Ordering::Relaxed);
    Ok(now)
}

/// Peak bytes above `baseline` since the last [`reset_peak`].
pub fn peak_since(baseline: usize) -> Result<u64> {
    require()?;
    Ok(PEAK.load(Ordering::Relaxed).saturating_sub(baseline) as u64)
}

/// Runs `f` and reports the heap high-water mark it reached above the level
/// at entry.
pub fn peak_memory_probe<R>(f: impl FnOnce() -> R) -> Result<(R, u64)> {
    let baseline = reset_peak()?;
    let out = f();
    let peak = peak_since(baseline)?;
    Ok((out, peak))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unavailable_without_allocator() {
        assert!(!tracking_active());
        assert!(matches!(peak_memory_probe(|| ()), Err(Error::ProbeUnavailable(_))));
    }
}

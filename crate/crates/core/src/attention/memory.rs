use std::ops::{Deref, DerefMut};
use std::sync::atomic::{AtomicUsize, Ordering};

/// Counts live and peak elements of the working buffers an algorithm
/// allocates through it.
#[derive(Debug, Default)]
pub struct AllocTracker {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl AllocTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc<T: Clone>(&self, len: usize, fill: T) -> Tracked<'_, T> {
        self.charge(len);
        Tracked {
            data: vec![fill; len],
            tracker: self,
        }
    }

    /// Records `len` elements held outside a [`Tracked`] buffer.
    pub fn charge(&self, len: usize) {
        let now = self.current.fetch_add(len, Ordering::Relaxed) + len;
        self.peak.fetch_max(now, Ordering::Relaxed);
    }

    pub fn release(&self, len: usize) {
        self.current.fetch_sub(len, Ordering::Relaxed);
    }

    pub fn current(&self) -> usize {
        self.current.load(Ordering::Relaxed)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }
}

/// A vector whose length is charged to an [`AllocTracker`] until dropped.
pub struct Tracked<'a, T> {
    data: Vec<T>,
    tracker: &'a AllocTracker,
}

impl<T> Deref for Tracked<'_, T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.data
    }
}

impl<T> DerefMut for Tracked<'_, T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

impl<T> Drop for Tracked<'_, T> {
    fn drop(&mut self) {
        self.tracker.release(self.data.len());
    }
}

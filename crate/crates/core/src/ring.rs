//! Fixed-capacity history buffers used by the recurrent stages.

use alloc::collections::VecDeque;

/// Keeps the most recent `capacity` items; index 0 is the newest.
#[derive(Clone, Debug)]
pub struct RingBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T> RingBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        RingBuffer {
            items: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Inserts `item` as the newest entry, evicting the oldest when full.
    pub fn push(&mut self, item: T) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_back();
        }
        self.items.push_front(item);
    }

    /// `back == 1` is the previous item, `back == 2` the one before it.
    pub fn back(&self, back: usize) -> Option<&T> {
        back.checked_sub(1).and_then(|i| self.items.get(i))
    }

    /// Newest first.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> RingBuffer<U> {
        RingBuffer {
            items: self.items.iter().map(f).collect(),
            capacity: self.capacity,
        }
    }
}

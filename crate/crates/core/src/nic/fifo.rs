//! Byte FIFO sized for two maximum-length Ethernet frames.

use std::collections::VecDeque;

/// 1518-byte maximum frame (header, 1500-byte payload, FCS).
pub const MAX_FRAME_ON_WIRE: usize = 1518;
pub const FIFO_CAPACITY: usize = 2 * MAX_FRAME_ON_WIRE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushOutcome {
    Accepted,
    Overflow,
}

/// Frames are stored whole: a frame that does not fit is refused and the
/// buffer is left untouched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteFifo {
    buffer: VecDeque<u8>,
    boundaries: VecDeque<usize>,
    capacity: usize,
}

impl ByteFifo {
    pub fn new(capacity: usize) -> Self {
        ByteFifo {
            buffer: VecDeque::with_capacity(capacity),
            boundaries: VecDeque::new(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn buffered_bytes(&self) -> usize {
        self.buffer.len()
    }

    pub fn frames(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    pub fn push(&mut self, frame: &[u8]) -> PushOutcome {
        if self.buffer.len() + frame.len() > self.capacity {
            return PushOutcome::Overflow;
        }
        self.buffer.extend(frame.iter().copied());
        self.boundaries.push_back(frame.len());
        PushOutcome::Accepted
    }

    pub fn pop(&mut self) -> Option<Vec<u8>> {
        let len = self.boundaries.pop_front()?;
        Some(self.buffer.drain(..len).collect())
    }
}

impl Default for ByteFifo {
    fn default() -> Self {
        ByteFifo::new(FIFO_CAPACITY)
    }
}

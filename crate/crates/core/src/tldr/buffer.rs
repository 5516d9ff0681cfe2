use crate::rng::RngStream;
use crate::set_array::Owner;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct BufferedLine {
    pub line: u64,
    pub entry: usize,
    pub owner: Owner,
}

/// Result of offering a line to the buffer.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum BufferInsert {
    Hit,
    Inserted,
    /// Inserted after dropping the returned line.
    Overflow(BufferedLine),
}

/// Small fully associative store for fills through oversubscribed entries.
#[derive(Clone, Debug)]
pub struct VictimBuffer {
    capacity: usize,
    contents: Vec<BufferedLine>,
    /// Highest occupancy since the last [`VictimBuffer::reset_peak`].
    peak: usize,
}

impl VictimBuffer {
    pub fn new(capacity: usize) -> Self {
        VictimBuffer {
            capacity,
            contents: Vec::with_capacity(capacity),
            peak: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.contents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }

    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn reset_peak(&mut self) {
        self.peak = self.contents.len();
    }

    pub fn contents(&self) -> &[BufferedLine] {
        &self.contents
    }

    pub fn contains(&self, line: u64) -> bool {
        self.contents.iter().any(|b| b.line == line)
    }

    /// Look `line` up and insert it on a miss, dropping a uniform random
    /// occupant when full.
    pub fn check_insert(&mut self, item: BufferedLine, rng: &mut RngStream) -> BufferInsert {
        if self.contains(item.line) {
            return BufferInsert::Hit;
        }
        assert!(self.capacity > 0, "insert into a disabled buffer");
        let result = if self.contents.len() == self.capacity {
            let victim = self.contents.swap_remove(rng.uniform(self.capacity));
            BufferInsert::Overflow(victim)
        } else {
            BufferInsert::Inserted
        };
        self.contents.push(item);
        self.peak = self.peak.max(self.contents.len());
        result
    }

    pub fn remove(&mut self, line: u64) -> Option<BufferedLine> {
        let pos = self.contents.iter().position(|b| b.line == line)?;
        Some(self.contents.swap_remove(pos))
    }

    /// Remove every line placed through `entry`.
    pub fn drain_entry(&mut self, entry: usize) -> Vec<BufferedLine> {
        let mut out = Vec::new();
        self.contents.retain(|b| {
            if b.entry == entry {
                out.push(*b);
                false
            } else {
                true
            }
        });
        out
    }
}

/// Fixed array ring buffer with a head index, the classic way.
#[derive(Debug, Clone)]
pub struct Ring<T> {
    slots: Vec<Option<T>>,
    head: usize,
    len: usize,
}

impl<T: Clone> Ring<T> {
    pub fn new(capacity: usize) -> Self {
        Ring {
            slots: vec![None; capacity],
            head: 0,
            len: 0,
        }
    }

    /// Writes `v`; returns the overwritten oldest value when full.
    pub fn push(&mut self, v: T) -> Option<T> {
        let cap = self.slots.len();
        let tail = (self.head + self.len) % cap;
        if self.len == cap {
            let old = self.slots[self.head].replace(v);
            self.head = (self.head + 1) % cap;
            old
        } else {
            self.slots[tail] = Some(v);
            self.len += 1;
            None
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Oldest first.
    pub fn contents(&self) -> Vec<T> {
        let cap = self.slots.len();
        (0..self.len)
            .map(|i| self.slots[(self.head + i) % cap].clone().unwrap())
            .collect()
    }
}

use std::collections::VecDeque;
use std::fmt;
use std::sync::RwLock;

use thiserror::Error;

use crate::corelog::{to_jsonl, TransferLog};

/// Default number of logs kept on the device.
pub const LOG_BUFFER_CAPACITY: usize = 10_000;
/// Maximum logs per upload.
pub const FLUSH_BATCH: usize = 500;

/// Fixed-capacity log store; when full, the oldest log is overwritten.
///
/// Every log gets a sequence number so an upload can acknowledge exactly the
/// logs it sent even if newer logs arrived meanwhile.
pub struct LogBuffer {
    capacity: usize,
    inner: RwLock<Inner>,
}

struct Inner {
    next_seq: u64,
    logs: VecDeque<(u64, TransferLog)>,
}

impl LogBuffer {
    pub fn new(capacity: usize) -> Self {
        LogBuffer {
            capacity: capacity.max(1),
            inner: RwLock::new(Inner {
                next_seq: 0,
                logs: VecDeque::new(),
            }),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("buffer lock").logs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends `log`, returning the evicted oldest log when full.
    pub fn push(&self, log: TransferLog) -> Option<TransferLog> {
        let mut inner = self.inner.write().expect("buffer lock");
        let evicted = if inner.logs.len() >= self.capacity {
            inner.logs.pop_front().map(|e| e.1)
        } else {
            None
        };
        let seq = inner.next_seq;
        inner.next_seq += 1;
        inner.logs.push_back((seq, log));
        evicted
    }

    /// Up to `max` oldest logs and the sequence number of the last one.
    pub fn peek_batch(&self, max: usize) -> Option<(u64, Vec<TransferLog>)> {
        let inner = self.inner.read().expect("buffer lock");
        let batch: Vec<_> = inner.logs.iter().take(max).collect();
        let last = batch.last()?.0;
        Some((last, batch.into_iter().map(|e| e.1.clone()).collect()))
    }

    /// Drops every log with sequence number `<= upto`.
    pub fn ack(&self, upto: u64) -> usize {
        let mut inner = self.inner.write().expect("buffer lock");
        let before = inner.logs.len();
        while inner.logs.front().is_some_and(|e| e.0 <= upto) {
            inner.logs.pop_front();
        }
        before - inner.logs.len()
    }

    /// Copy of the buffered logs, oldest first.
    pub fn snapshot(&self) -> Vec<TransferLog> {
        let inner = self.inner.read().expect("buffer lock");
        inner.logs.iter().map(|e| e.1.clone()).collect()
    }
}

impl Default for LogBuffer {
    fn default() -> Self {
        LogBuffer::new(LOG_BUFFER_CAPACITY)
    }
}

impl fmt::Debug for LogBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LogBuffer")
            .field("capacity", &self.capacity)
            .field("len", &self.len())
            .finish()
    }
}

/// Destination for JSONL log batches.
pub trait LogTransport {
    type Error: fmt::Display;

    fn send(&mut self, jsonl: &str) -> Result<(), Self::Error>;
}

impl<E: fmt::Display, F: FnMut(&str) -> Result<(), E>> LogTransport for F {
    type Error = E;

    fn send(&mut self, jsonl: &str) -> Result<(), E> {
        self(jsonl)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("log upload failed after {sent} logs: {message}")]
pub struct FlushError {
    /// Logs delivered before the failing batch.
    pub sent: usize,
    pub message: String,
}

/// Sends buffered logs oldest first in batches of at most [`FLUSH_BATCH`].
/// Delivered logs leave the buffer; a failed batch stays buffered.
pub fn log_flush(buffer: &LogBuffer, transport: &mut impl LogTransport) -> Result<usize, FlushError> {
    let mut sent = 0;
    while let Some((upto, batch)) = buffer.peek_batch(FLUSH_BATCH) {
        if let Err(e) = transport.send(&to_jsonl(&batch)) {
            return Err(FlushError {
                sent,
                message: e.to_string(),
            });
        }
        buffer.ack(upto);
        sent += batch.len();
    }
    Ok(sent)
}

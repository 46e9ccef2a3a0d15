//! Client-side producer model: record batching bounded by batch size,
//! buffer-memory accounting with blocking backpressure, and the bounded
//! dispatch window that limits how many requests sit in the network and
//! disk queues at once.
//!
//! A producer is owned by exactly one sender. `send` reserves the record's
//! bytes in the buffer (blocking the sender when full), routes the record
//! into the open batch for its partition, and resolves a delivery receipt at
//! the configured acks point, which is when the reserved bytes free again.

use std::collections::VecDeque;

use thiserror::Error;

use crate::domain::{AcksLevel, Nanos, ProducerProps, Record};

/// Requests a producer may have in flight (dispatched but not yet appended
/// by the leader). Further sealed batches wait in the accumulator. The small
/// window is what keeps broker-side disk queues shallow; the buffer memory
/// bound is enforced separately and independently of this.
pub const MAX_IN_FLIGHT_BATCHES: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProducerError {
    #[error("producer closed")]
    ProducerClosed,
    #[error("record of {0} bytes exceeds buffer memory {1}")]
    RecordExceedsBuffer(u64, u64),
}

/// Outcome of offering a record to a batch.
#[derive(Debug, PartialEq, Eq)]
pub enum AddResult {
    /// Record joined the batch.
    Added,
    /// The batch sealed instead; the record is handed back to start the
    /// next batch.
    Sealed(Record),
}

/// One message package under construction.
#[derive(Debug, Clone)]
pub struct Batch {
    pub records: Vec<Record>,
    pub bytes: u64,
    pub sealed: bool,
    pub target: (String, u32),
}

impl Batch {
    pub fn new(topic: impl Into<String>, partition: u32) -> Self {
        Batch {
            records: Vec::new(),
            bytes: 0,
            sealed: false,
            target: (topic.into(), partition),
        }
    }

    /// Offer `record` to this batch under the `batch_size` byte cap.
    ///
    /// A record that no longer fits seals the batch and starts the next one.
    /// An oversize record arriving at an empty batch forms a single-record
    /// batch that seals immediately.
    pub fn try_add(&mut self, record: Record, batch_size: u64) -> AddResult {
        debug_assert!(!self.sealed, "try_add on a sealed batch");
        if self.records.is_empty() {
            self.bytes = record.size_bytes;
            if self.bytes > batch_size {
                self.sealed = true;
            }
            self.records.push(record);
            return AddResult::Added;
        }
        if self.bytes + record.size_bytes <= batch_size {
            self.bytes += record.size_bytes;
            self.records.push(record);
            AddResult::Added
        } else {
            self.sealed = true;
            AddResult::Sealed(record)
        }
    }
}

/// Buffer-memory ledger. `in_use` covers every record byte between reserve
/// (at send) and release (at the batch's receipt condition).
#[derive(Debug, Clone)]
pub struct BufferAccount {
    capacity: u64,
    in_use: u64,
}

impl BufferAccount {
    pub fn new(capacity: u64) -> Self {
        BufferAccount {
            capacity,
            in_use: 0,
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn in_use(&self) -> u64 {
        self.in_use
    }

    pub fn available(&self) -> u64 {
        self.capacity - self.in_use
    }

    /// Reserve `n` bytes; `false` means the caller must block until space
    /// frees.
    pub fn try_reserve(&mut self, n: u64) -> bool {
        if self.in_use + n <= self.capacity {
            self.in_use += n;
            true
        } else {
            false
        }
    }

    pub fn release(&mut self, n: u64) {
        debug_assert!(n <= self.in_use, "release of bytes never reserved");
        self.in_use = self.in_use.saturating_sub(n);
    }
}

/// A fill run: `count` records contiguous in both source-ring position and
/// send time (fixed stride). The compressed form of batch contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchRun {
    pub ring_start: u64,
    pub start_ts: Nanos,
    pub count: u32,
    pub stride: Nanos,
}

impl BatchRun {
    pub fn ts_at(&self, i: u32) -> Nanos {
        self.start_ts + self.stride * i as u64
    }

    /// Whether `next` continues this run seamlessly.
    fn extends(&self, next: &BatchRun) -> bool {
        self.stride == next.stride
            && self.ring_start + self.count as u64 == next.ring_start
            && self.start_ts + self.stride * self.count as u64 == next.start_ts
    }
}

/// A sealed batch in compressed form: its records are described by one or
/// more fill runs (several when backpressure split the fill, or when
/// round-robin partitioning interleaves the source stream).
#[derive(Debug, Clone)]
pub struct PlannedBatch {
    pub partition: u32,
    pub count: u32,
    pub bytes: u64,
    pub runs: Vec<BatchRun>,
    pub seal_ts: Nanos,
}

/// Resolved delivery information for one dispatched batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchReceipt {
    pub seal_ts: Nanos,
    /// When the request went onto the socket (acks=0 resolution point).
    pub enqueue_ts: Nanos,
    /// When the configured acks condition was met.
    pub ack_ts: Nanos,
    pub base_offset: u64,
    pub records: u32,
    pub acks: AcksLevel,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProducerStats {
    pub records_sent: u64,
    pub bytes_sent: u64,
    pub batches_sealed: u64,
    pub batches_dispatched: u64,
    pub records_acked: u64,
}

/// Producer state as driven by the simulation: buffer ledger, the open
/// batch per partition, the FIFO of sealed batches awaiting a dispatch
/// window slot, and delivery bookkeeping.
#[derive(Debug)]
pub struct SimProducer {
    pub props: ProducerProps,
    pub buffer: BufferAccount,
    open: Vec<Option<OpenBatch>>,
    accumulator: VecDeque<PlannedBatch>,
    pub in_flight: usize,
    pub stats: ProducerStats,
    receipts: Option<Vec<BatchReceipt>>,
    closed: bool,
    rr_next: u32,
}

#[derive(Debug, Clone)]
struct OpenBatch {
    count: u32,
    bytes: u64,
    runs: Vec<BatchRun>,
}

impl SimProducer {
    pub fn new(props: ProducerProps, partitions: u32) -> Self {
        let buffer = BufferAccount::new(props.buffer_memory_bytes);
        SimProducer {
            props,
            buffer,
            open: vec![None; partitions as usize],
            accumulator: VecDeque::new(),
            in_flight: 0,
            stats: ProducerStats::default(),
            receipts: None,
            closed: false,
            rr_next: 0,
        }
    }

    /// Retain per-batch receipts for inspection (tests); off by default so
    /// long runs stay O(1) in memory per in-flight batch.
    pub fn keep_receipts(&mut self) {
        self.receipts = Some(Vec::new());
    }

    pub fn receipts(&self) -> Option<&[BatchReceipt]> {
        self.receipts.as_deref()
    }

    pub fn record_receipt(&mut self, receipt: BatchReceipt) {
        self.stats.records_acked += receipt.records as u64;
        if let Some(r) = self.receipts.as_mut() {
            r.push(receipt);
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Sends are only legal on an open producer.
    pub fn guard_open(&self) -> Result<(), ProducerError> {
        if self.closed {
            Err(ProducerError::ProducerClosed)
        } else {
            Ok(())
        }
    }

    /// A record larger than the whole buffer memory could never reserve.
    pub fn guard_record_size(&self, size: u64) -> Result<(), ProducerError> {
        if size > self.buffer.capacity() {
            Err(ProducerError::RecordExceedsBuffer(
                size,
                self.buffer.capacity(),
            ))
        } else {
            Ok(())
        }
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    /// Round-robin partition for the next record; everything goes to
    /// partition 0 on single-partition topics.
    pub fn next_partition(&mut self, partitions: u32) -> u32 {
        if partitions <= 1 {
            return 0;
        }
        let p = self.rr_next % partitions;
        self.rr_next = self.rr_next.wrapping_add(1);
        p
    }

    pub fn open_bytes(&self, partition: u32) -> u64 {
        self.open[partition as usize]
            .as_ref()
            .map_or(0, |b| b.bytes)
    }

    pub fn open_is_empty(&self, partition: u32) -> bool {
        self.open[partition as usize].is_none()
    }

    /// Append a run of already-reserved records to the open batch.
    pub fn extend_open(&mut self, partition: u32, run: BatchRun, bytes: u64) {
        debug_assert!(run.count > 0);
        self.stats.records_sent += run.count as u64;
        self.stats.bytes_sent += bytes;
        let slot = &mut self.open[partition as usize];
        match slot {
            Some(open) => {
                open.count += run.count;
                open.bytes += bytes;
                match open.runs.last_mut() {
                    Some(last) if last.extends(&run) => last.count += run.count,
                    _ => open.runs.push(run),
                }
            }
            None => {
                *slot = Some(OpenBatch {
                    count: run.count,
                    bytes,
                    runs: vec![run],
                });
            }
        }
    }

    /// Seal the open batch for `partition` into the accumulator. No-op when
    /// the batch is empty.
    pub fn seal_open(&mut self, partition: u32, seal_ts: Nanos) -> bool {
        let Some(open) = self.open[partition as usize].take() else {
            return false;
        };
        self.stats.batches_sealed += 1;
        self.accumulator.push_back(PlannedBatch {
            partition,
            count: open.count,
            bytes: open.bytes,
            runs: open.runs,
            seal_ts,
        });
        true
    }

    pub fn seal_all_open(&mut self, seal_ts: Nanos) {
        for p in 0..self.open.len() as u32 {
            self.seal_open(p, seal_ts);
        }
    }

    pub fn accumulated(&self) -> usize {
        self.accumulator.len()
    }

    /// Take the next batch for dispatch if the in-flight window has room.
    pub fn next_dispatch(&mut self) -> Option<PlannedBatch> {
        if self.in_flight >= MAX_IN_FLIGHT_BATCHES {
            return None;
        }
        let batch = self.accumulator.pop_front()?;
        self.in_flight += 1;
        self.stats.batches_dispatched += 1;
        Some(batch)
    }

    /// All work dispatched and acknowledged.
    pub fn is_drained(&self) -> bool {
        self.accumulator.is_empty()
            && self.in_flight == 0
            && self.open.iter().all(|o| o.is_none())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bytes::Bytes;
    use proptest::prelude::*;

    fn rec(n: usize) -> Record {
        Record::new(None, Bytes::from(vec![b'r'; n]), 0).unwrap()
    }

    #[test]
    fn default_batch_fits_81_records_of_200_bytes() {
        // 81 * 200 = 16_200 <= 16_384; the 82nd record seals the batch.
        let mut b = Batch::new("t", 0);
        for i in 0..81 {
            assert_eq!(b.try_add(rec(200), 16_384), AddResult::Added, "record {i}");
        }
        assert_eq!(b.bytes, 16_200);
        assert!(!b.sealed);
        match b.try_add(rec(200), 16_384) {
            AddResult::Sealed(r) => assert_eq!(r.size_bytes, 200),
            other => panic!("expected seal, got {other:?}"),
        }
        assert!(b.sealed);
        assert_eq!(b.records.len(), 81);
    }

    #[test]
    fn quadrupled_batch_fits_327_records_of_200_bytes() {
        // floor(65_540 / 200) = 327 fit before the 328th seals.
        let mut b = Batch::new("t", 0);
        for _ in 0..327 {
            assert_eq!(b.try_add(rec(200), 65_540), AddResult::Added);
        }
        assert!(matches!(
            b.try_add(rec(200), 65_540),
            AddResult::Sealed(_)
        ));
        assert_eq!(b.records.len(), 327);
    }

    #[test]
    fn oversize_record_forms_single_sealed_batch() {
        let mut b = Batch::new("t", 0);
        assert_eq!(b.try_add(rec(20_000), 16_384), AddResult::Added);
        assert!(b.sealed);
        assert_eq!(b.records.len(), 1);
        assert_eq!(b.bytes, 20_000);
    }

    #[test]
    fn batch_bytes_equals_sum_of_members() {
        let mut b = Batch::new("t", 3);
        for n in [100, 250, 33] {
            b.try_add(rec(n), 16_384);
        }
        assert_eq!(b.bytes, 383);
        assert_eq!(
            b.records.iter().map(|r| r.size_bytes).sum::<u64>(),
            b.bytes
        );
    }

    #[test]
    fn buffer_reserve_and_release_balance() {
        let mut buf = BufferAccount::new(1_000);
        assert!(buf.try_reserve(600));
        assert!(!buf.try_reserve(600));
        assert_eq!(buf.in_use(), 600);
        buf.release(600);
        assert!(buf.try_reserve(1_000));
        assert_eq!(buf.available(), 0);
        buf.release(1_000);
        assert_eq!(buf.in_use(), 0);
    }

    #[test]
    fn sealing_an_empty_open_batch_is_a_no_op() {
        let mut p = SimProducer::new(ProducerProps::default(), 1);
        assert!(!p.seal_open(0, 5));
        assert_eq!(p.accumulated(), 0);
        assert!(p.is_drained());
    }

    #[test]
    fn producer_window_limits_dispatch() {
        let mut p = SimProducer::new(ProducerProps::default(), 1);
        for i in 0..(MAX_IN_FLIGHT_BATCHES as u64 + 3) {
            p.extend_open(
                0,
                BatchRun {
                    ring_start: i * 10,
                    start_ts: i * 1_000,
                    count: 10,
                    stride: 100,
                },
                2_150,
            );
            p.seal_open(0, i * 1_000 + 999);
        }
        let mut dispatched = 0;
        while p.next_dispatch().is_some() {
            dispatched += 1;
        }
        assert_eq!(dispatched, MAX_IN_FLIGHT_BATCHES);
        assert_eq!(p.accumulated(), 3);
        p.in_flight -= 1;
        assert!(p.next_dispatch().is_some());
    }

    #[test]
    fn closed_producer_refuses_sends() {
        let mut p = SimProducer::new(ProducerProps::default(), 1);
        assert!(p.guard_open().is_ok());
        p.close();
        assert_eq!(p.guard_open(), Err(ProducerError::ProducerClosed));
    }

    #[test]
    fn record_beyond_buffer_memory_is_rejected_up_front() {
        let props = ProducerProps {
            buffer_memory_bytes: 100,
            ..ProducerProps::default()
        };
        let p = SimProducer::new(props, 1);
        assert_eq!(
            p.guard_record_size(215),
            Err(ProducerError::RecordExceedsBuffer(215, 100))
        );
        assert!(p.guard_record_size(100).is_ok());
    }

    #[test]
    fn round_robin_covers_partitions_in_order() {
        let mut p = SimProducer::new(ProducerProps::default(), 3);
        let order: Vec<u32> = (0..6).map(|_| p.next_partition(3)).collect();
        assert_eq!(order, vec![0, 1, 2, 0, 1, 2]);
        let mut single = SimProducer::new(ProducerProps::default(), 1);
        assert_eq!(single.next_partition(1), 0);
        assert_eq!(single.next_partition(1), 0);
    }

    // Greedy sealing means a bigger batch size can never produce more
    // batches for the same record stream.
    proptest! {
        #[test]
        fn batch_count_nonincreasing_in_batch_size(
            sizes in proptest::collection::vec(1u64..3_000, 1..120),
            base in 64u64..2_048,
        ) {
            // Dispatched batches for the stream: sealed ones plus a final
            // flush of a non-empty open batch.
            let count_batches = |cap: u64| {
                let mut sealed = 0u64;
                let mut b = Batch::new("t", 0);
                for s in &sizes {
                    let mut record = rec(*s as usize);
                    loop {
                        match b.try_add(record, cap) {
                            AddResult::Added => {
                                if b.sealed {
                                    // oversize single-record batch
                                    sealed += 1;
                                    b = Batch::new("t", 0);
                                }
                                break;
                            }
                            AddResult::Sealed(r) => {
                                sealed += 1;
                                b = Batch::new("t", 0);
                                record = r;
                            }
                        }
                    }
                }
                sealed + u64::from(!b.records.is_empty())
            };
            let small = count_batches(base);
            let big = count_batches(base * 4);
            prop_assert!(big <= small, "{big} > {small}");
        }
    }
}

//! Data senders: source rings with iterator vs. in-memory read modes, the
//! fixed-delay rate scheduler arithmetic, and the synthetic record generator.
//!
//! A sender issues one send per scheduled execution. The execution period is
//! the configured inter-send delay, except that a send never starts before
//! the previous one finished: per-record read latency (iterator mode) and
//! producer backpressure stretch the period instead of queueing catch-up
//! work, so missed slots are dropped rather than back-filled.

use std::io::BufRead;
use std::path::PathBuf;

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::domain::{Nanos, ProducerProps, Record, NANOS_PER_SEC};

/// Records in a synthetic source ring. The generated stream wraps to the
/// first record after the last, like a file source does.
pub const SYNTHETIC_RING_RECORDS: usize = 8_192;

/// Columns in a synthetic record.
pub const SYNTHETIC_COLUMNS: u32 = 66;

/// Calibrated per-record read latency of iterator mode, ns. This is what
/// caps a non-preloading sender at roughly 220K messages/second.
pub const DEFAULT_READ_LATENCY_NS: u64 = 4_500;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoadgenError {
    #[error("inter-send delay must be >= 1 ns")]
    InvalidDelay,
    #[error("source error: {0}")]
    SourceError(String),
}

/// Messages per second produced by a fixed inter-send delay.
pub fn rate_from_delay(delay_ns: u64) -> Result<f64, LoadgenError> {
    if delay_ns == 0 {
        return Err(LoadgenError::InvalidDelay);
    }
    Ok(NANOS_PER_SEC as f64 / delay_ns as f64)
}

/// Inverse of [`rate_from_delay`]; exact when `mps` divides 10^9, rounded to
/// the nearest nanosecond otherwise.
pub fn delay_for_rate(mps: u64) -> Result<u64, LoadgenError> {
    if mps == 0 {
        return Err(LoadgenError::InvalidDelay);
    }
    let delay = (NANOS_PER_SEC + mps / 2) / mps;
    if delay == 0 {
        return Err(LoadgenError::InvalidDelay);
    }
    Ok(delay)
}

/// Where a sender runs relative to the broker that stores the topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Locality {
    /// On the leader broker's host; traffic uses the loopback interface.
    Local,
    /// On the given host (another broker or an external host); traffic
    /// crosses eth0.
    Remote(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceKind {
    /// One record per line, fields separated by `delimiter`, UTF-8, no
    /// header line. The whole file is loaded at open.
    DelimitedFile { path: PathBuf, delimiter: char },
    /// Deterministic generated records: 66 delimited numeric/boolean fields.
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSourceSpec {
    pub kind: SourceKind,
    /// Per-record read cost in iterator mode (`read_in_ram = false`).
    pub read_latency_ns: u64,
}

/// One data sender: target rate expressed as an inter-send delay, source and
/// read mode, placement, and the producer properties it applies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SenderSpec {
    pub delay_ns: u64,
    pub duration_s: u64,
    pub read_in_ram: bool,
    pub locality: Locality,
    pub producer: ProducerProps,
    pub source: DataSourceSpec,
}

impl SenderSpec {
    /// Effective time between consecutive sends when nothing downstream
    /// blocks: reading is sequential with sending, so a slower-than-delay
    /// read stretches the period.
    pub fn stride_ns(&self) -> Nanos {
        if self.read_in_ram {
            self.delay_ns
        } else {
            self.delay_ns.max(self.source.read_latency_ns)
        }
    }

    pub fn configured_mps(&self) -> f64 {
        NANOS_PER_SEC as f64 / self.delay_ns as f64
    }
}

/// Counters returned by a finished sender.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SenderStats {
    /// Scheduled executions, including slots that passed while blocked.
    pub attempted: u64,
    /// Sends actually issued.
    pub sent: u64,
    /// Total time spent waiting on buffer backpressure.
    pub blocked_ns: u64,
}

/// An opened source: a fixed ring of records with byte prefix sums, so a
/// burst of n consecutive reads costs O(log n) to size.
#[derive(Debug)]
pub struct SourceRing {
    records: Vec<Record>,
    /// prefix[i] = total bytes of records[0..i].
    prefix: Vec<u64>,
}

impl SourceRing {
    pub fn from_records(records: Vec<Record>) -> Result<Self, LoadgenError> {
        if records.is_empty() {
            return Err(LoadgenError::SourceError("source holds no records".into()));
        }
        let mut prefix = Vec::with_capacity(records.len() + 1);
        let mut acc = 0u64;
        prefix.push(0);
        for r in &records {
            acc += r.size_bytes;
            prefix.push(acc);
        }
        Ok(SourceRing { records, prefix })
    }

    pub fn open(spec: &DataSourceSpec) -> Result<Self, LoadgenError> {
        match &spec.kind {
            SourceKind::Synthetic { seed } => {
                Self::from_records(gen_synthetic(*seed, SYNTHETIC_RING_RECORDS))
            }
            SourceKind::DelimitedFile { path, .. } => {
                let file = std::fs::File::open(path).map_err(|e| {
                    LoadgenError::SourceError(format!("{}: {e}", path.display()))
                })?;
                let mut records = Vec::new();
                for line in std::io::BufReader::new(file).lines() {
                    let line =
                        line.map_err(|e| LoadgenError::SourceError(format!("read: {e}")))?;
                    if line.is_empty() {
                        continue;
                    }
                    records.push(
                        Record::new(None, Bytes::from(line.into_bytes()), 0)
                            .expect("non-empty line"),
                    );
                }
                Self::from_records(records)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        *self.prefix.last().unwrap()
    }

    /// Record at stream position `pos` (wraps around the ring).
    pub fn record(&self, pos: u64) -> &Record {
        &self.records[(pos % self.records.len() as u64) as usize]
    }

    pub fn size_at(&self, pos: u64) -> u64 {
        self.record(pos).size_bytes
    }

    /// Total bytes of `count` records starting at stream position `start`.
    pub fn span_bytes(&self, start: u64, count: u64) -> u64 {
        let n = self.records.len() as u64;
        let s = start % n;
        let cycles = count / n;
        let rem = count % n;
        let partial = if s + rem <= n {
            self.prefix[(s + rem) as usize] - self.prefix[s as usize]
        } else {
            (self.total_bytes() - self.prefix[s as usize]) + self.prefix[(s + rem - n) as usize]
        };
        cycles * self.total_bytes() + partial
    }

    /// Largest k such that `span_bytes(start, k) <= budget`.
    pub fn max_fit(&self, start: u64, budget: u64) -> u64 {
        let n = self.records.len() as u64;
        let cycles = budget / self.total_bytes();
        let rem = budget - cycles * self.total_bytes();
        // Binary search the partial span inside one ring cycle.
        let mut lo = 0u64;
        let mut hi = n;
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if self.span_bytes(start, mid) <= rem {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        cycles * n + lo
    }
}

/// Deterministic synthetic records: 66 tab-delimited fields (an id column,
/// booleans and integers), mean serialized size calibrated to ~215 bytes.
pub fn gen_synthetic(seed: u64, n: usize) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut line = String::with_capacity(230);
        // Fixed-width id column.
        line.push_str(&format!("{}", 100_000 + (i as u64 % 900_000)));
        // 39 boolean columns.
        for _ in 0..39 {
            line.push('\t');
            line.push(if rng.gen::<bool>() { '1' } else { '0' });
        }
        // 26 integer columns, 2..=6 digits each.
        for _ in 0..26 {
            line.push('\t');
            let digits: u32 = rng.gen_range(2..=6);
            let lo = 10u64.pow(digits - 1);
            let hi = 10u64.pow(digits);
            line.push_str(&format!("{}", rng.gen_range(lo..hi)));
        }
        out.push(Record::new(None, Bytes::from(line.into_bytes()), 0).expect("non-empty"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rate_from_delay_matches_examples() {
        assert_eq!(rate_from_delay(10_000).unwrap(), 100_000.0);
        assert_eq!(rate_from_delay(1_000_000_000).unwrap(), 1.0);
        assert_eq!(rate_from_delay(0), Err(LoadgenError::InvalidDelay));
    }

    #[test]
    fn delay_for_rate_is_exact_for_divisors() {
        assert_eq!(delay_for_rate(100_000).unwrap(), 10_000);
        assert_eq!(delay_for_rate(250_000).unwrap(), 4_000);
        assert_eq!(delay_for_rate(1).unwrap(), 1_000_000_000);
        assert_eq!(
            rate_from_delay(delay_for_rate(1_000_000).unwrap()).unwrap(),
            1_000_000.0
        );
    }

    #[test]
    fn ring_wraps_to_first_record() {
        let records = vec![
            Record::new(None, Bytes::from_static(b"one"), 0).unwrap(),
            Record::new(None, Bytes::from_static(b"two"), 0).unwrap(),
            Record::new(None, Bytes::from_static(b"three"), 0).unwrap(),
        ];
        let ring = SourceRing::from_records(records).unwrap();
        let reads: Vec<_> = (0..4).map(|i| ring.record(i).payload.clone()).collect();
        assert_eq!(reads[0], Bytes::from_static(b"one"));
        assert_eq!(reads[3], Bytes::from_static(b"one"));
    }

    #[test]
    fn stride_is_max_of_delay_and_read_latency() {
        let mut spec = SenderSpec {
            delay_ns: 4_000,
            duration_s: 600,
            read_in_ram: false,
            locality: Locality::Local,
            producer: ProducerProps::default(),
            source: DataSourceSpec {
                kind: SourceKind::Synthetic { seed: 1 },
                read_latency_ns: 4_500,
            },
        };
        // Iterator mode cannot exceed 10^9 / 4_500 ~= 222K sends/s.
        assert_eq!(spec.stride_ns(), 4_500);
        spec.read_in_ram = true;
        assert_eq!(spec.stride_ns(), 4_000);
        spec.read_in_ram = false;
        spec.source.read_latency_ns = 100;
        assert_eq!(spec.stride_ns(), 4_000);
    }

    #[test]
    fn gen_synthetic_empty_and_deterministic() {
        assert!(gen_synthetic(7, 0).is_empty());
        let a = gen_synthetic(42, 100);
        let b = gen_synthetic(42, 100);
        assert_eq!(a, b);
        let c = gen_synthetic(43, 100);
        assert_ne!(a, c);
    }

    #[test]
    fn gen_synthetic_has_66_columns_and_calibrated_mean() {
        let records = gen_synthetic(1, 10_000);
        for r in records.iter().take(50) {
            let cols = r.payload.split(|&b| b == b'\t').count();
            assert_eq!(cols, SYNTHETIC_COLUMNS as usize);
        }
        let mean =
            records.iter().map(|r| r.size_bytes).sum::<u64>() as f64 / records.len() as f64;
        assert!(
            (mean - 215.0).abs() <= 11.0,
            "mean record size {mean} out of calibration"
        );
    }

    #[test]
    fn file_source_loads_lines_and_errors_at_open() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.tsv");
        std::fs::write(&path, "a\t1\nbb\t2\n\nccc\t3\n").unwrap();
        let ring = SourceRing::open(&DataSourceSpec {
            kind: SourceKind::DelimitedFile {
                path: path.clone(),
                delimiter: '\t',
            },
            read_latency_ns: 0,
        })
        .unwrap();
        assert_eq!(ring.len(), 3); // empty line skipped
        assert_eq!(ring.record(0).payload, Bytes::from_static(b"a\t1"));

        let missing = SourceRing::open(&DataSourceSpec {
            kind: SourceKind::DelimitedFile {
                path: dir.path().join("nope.tsv"),
                delimiter: '\t',
            },
            read_latency_ns: 0,
        });
        assert!(matches!(missing, Err(LoadgenError::SourceError(_))));
    }

    proptest! {
        // Prefix-sum span and fit agree with brute force over the wrap.
        #[test]
        fn span_and_fit_match_brute_force(
            sizes in proptest::collection::vec(1u64..400, 1..40),
            start in 0u64..100,
            count in 0u64..200,
        ) {
            let records: Vec<Record> = sizes
                .iter()
                .map(|s| Record::new(None, Bytes::from(vec![b'x'; *s as usize]), 0).unwrap())
                .collect();
            let ring = SourceRing::from_records(records).unwrap();

            let brute: u64 = (0..count).map(|i| ring.size_at(start + i)).sum();
            prop_assert_eq!(ring.span_bytes(start, count), brute);

            let budget = brute;
            let fit = ring.max_fit(start, budget);
            prop_assert!(fit >= count);
            prop_assert!(ring.span_bytes(start, fit) <= budget);
            prop_assert!(ring.span_bytes(start, fit + 1) > budget);
        }
    }
}

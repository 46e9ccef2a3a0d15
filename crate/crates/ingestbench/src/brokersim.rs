//! Broker-cluster model: partitioned commit logs, leader/follower replica
//! sets, per-broker disk write queues, bandwidth-limited interface links,
//! and the host accounting behind the system-load metric.
//!
//! State transitions here are synchronous and local; the event loop in
//! [`crate::runtime`] sequences them in virtual time. Appends happen when a
//! write job completes disk service, so the ingest meters can never exceed
//! the disk ceiling. Fetch follows the strictly-greater-offset contract: a
//! consumer passing offset k receives all records with offset > k (real
//! brokers serve offset >= k; the stricter reading is intentional here, with
//! -1 reading from the beginning).
//!
//! Commit logs store appended batches as run-length segments referencing the
//! sender's source ring, so a multi-hundred-million-record run costs memory
//! per batch, not per record; `fetch` reconstructs full records on demand.
//!
//! System load counts tasks that are ready to run or waiting for disk I/O:
//! each live sender contributes one runnable task plus its CPU
//! core-equivalents (`cpu_cost_per_msg` x send rate), the broker appender
//! contributes its core-equivalents, and every queued disk job contributes
//! one io-waiting task at sample time. When a host's task count exceeds its
//! core count, disk service on that host degrades by `cores / tasks` until
//! the next sample: an over-utilized host cannot keep its disk fed.

use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

use crate::domain::{Nanos, Record, ResourceProfile, TimestampType, TopicConfig};
use crate::loadgen::SourceRing;
use crate::metrics::{LoadAvg, RateMeter};
use crate::producer::{BatchRun, PlannedBatch};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BrokerSimError {
    #[error("topic already exists: {0}")]
    TopicExists(String),
    #[error("replication factor {0} exceeds broker count {1}")]
    InvalidReplication(u32, u32),
    #[error("fetch offset must be >= -1, got {0}")]
    InvalidOffset(i64),
    #[error("in-sync replica count {0} below required minimum {1}")]
    NotEnoughReplicas(u32, u32),
    #[error("unknown topic: {0}")]
    UnknownTopic(String),
}

/// Packets needed to carry `bytes` across an interface with the given MTU.
pub fn packets_for(bytes: u64, mtu: u64) -> u64 {
    bytes.div_ceil(mtu.max(1))
}

/// Acknowledgment timestamp for a request whose write completions are known.
///
/// acks=0 resolves at socket-buffer enqueue, acks=1 at the leader's local
/// log write, acks=all at the latest in-sync replica write. With a single
/// replica the all-replicas point coincides with the leader point.
pub fn ack_point(
    acks: crate::domain::AcksLevel,
    enqueue_ts: Nanos,
    leader_append_ts: Nanos,
    follower_append_ts: &[Nanos],
) -> Nanos {
    use crate::domain::AcksLevel::*;
    match acks {
        Acks0 => enqueue_ts,
        Acks1 => leader_append_ts,
        AcksAll => follower_append_ts
            .iter()
            .copied()
            .fold(leader_append_ts, Nanos::max),
    }
}

/// Guard for acks=all sends.
pub fn check_insync(in_sync: u32, min_insync: u32) -> Result<(), BrokerSimError> {
    if in_sync < min_insync {
        Err(BrokerSimError::NotEnoughReplicas(in_sync, min_insync))
    } else {
        Ok(())
    }
}

/// Leader and followers for one partition; `in_sync` is the acknowledging
/// subset (everything, since broker failure is out of scope).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicaSet {
    pub leader: u32,
    pub followers: Vec<u32>,
    pub in_sync: Vec<u32>,
}

/// One record as returned by fetch.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub offset: u64,
    pub record: Record,
    pub stored_ts: Nanos,
}

#[derive(Debug)]
enum Segment {
    /// A single directly-appended record.
    Inline {
        base_offset: u64,
        record: Record,
        stored_ts: Nanos,
    },
    /// `count` consecutive source-ring records appended as one batch run.
    Run {
        base_offset: u64,
        count: u32,
        source: u16,
        ring_start: u64,
        first_create_ts: Nanos,
        stride: Nanos,
        append_ts: Nanos,
    },
}

impl Segment {
    fn base(&self) -> u64 {
        match self {
            Segment::Inline { base_offset, .. } => *base_offset,
            Segment::Run { base_offset, .. } => *base_offset,
        }
    }

    fn len(&self) -> u64 {
        match self {
            Segment::Inline { .. } => 1,
            Segment::Run { count, .. } => *count as u64,
        }
    }
}

/// Ordered, immutable, offset-indexed record sequence for one partition
/// replica. Offsets are dense: entry i has offset i.
#[derive(Debug)]
pub struct PartitionLog {
    pub topic: String,
    pub partition_id: u32,
    pub timestamp_type: TimestampType,
    segments: Vec<Segment>,
    next_offset: u64,
    total_bytes: u64,
}

impl PartitionLog {
    pub fn new(topic: impl Into<String>, partition_id: u32, timestamp_type: TimestampType) -> Self {
        PartitionLog {
            topic: topic.into(),
            partition_id,
            timestamp_type,
            segments: Vec::new(),
            next_offset: 0,
            total_bytes: 0,
        }
    }

    pub fn next_offset(&self) -> u64 {
        self.next_offset
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    /// Append a single record. Returns its offset and the stored timestamp.
    pub fn append(&mut self, record: Record, broker_clock: Nanos) -> (u64, Nanos) {
        let stored_ts = match self.timestamp_type {
            TimestampType::LogAppendTime => broker_clock,
            TimestampType::CreateTime => record.create_ts,
        };
        let offset = self.next_offset;
        self.total_bytes += record.size_bytes;
        self.next_offset += 1;
        self.segments.push(Segment::Inline {
            base_offset: offset,
            record,
            stored_ts,
        });
        (offset, stored_ts)
    }

    /// Append one fill run of a batch as a compressed segment. Returns the
    /// base offset of the run.
    pub fn append_run(
        &mut self,
        source: u16,
        run: BatchRun,
        bytes: u64,
        broker_clock: Nanos,
    ) -> u64 {
        debug_assert!(run.count > 0);
        let base_offset = self.next_offset;
        self.segments.push(Segment::Run {
            base_offset,
            count: run.count,
            source,
            ring_start: run.ring_start,
            first_create_ts: run.start_ts,
            stride: run.stride,
            append_ts: broker_clock,
        });
        self.next_offset += run.count as u64;
        self.total_bytes += bytes;
        base_offset
    }

    /// All entries with offset strictly greater than `after_offset`, in
    /// offset order. `-1` reads from the beginning.
    pub fn fetch<'a>(
        &'a self,
        after_offset: i64,
        sources: &'a [Arc<SourceRing>],
    ) -> Result<LogIter<'a>, BrokerSimError> {
        if after_offset < -1 {
            return Err(BrokerSimError::InvalidOffset(after_offset));
        }
        let start = (after_offset + 1) as u64;
        let seg = self
            .segments
            .partition_point(|s| s.base() + s.len() <= start);
        let within = if seg < self.segments.len() {
            start.saturating_sub(self.segments[seg].base())
        } else {
            0
        };
        Ok(LogIter {
            log: self,
            sources,
            seg,
            within,
        })
    }

    /// Check the density invariant: offsets are exactly 0..next_offset-1.
    pub fn verify_dense(&self) -> bool {
        let mut expect = 0u64;
        for s in &self.segments {
            if s.base() != expect {
                return false;
            }
            expect += s.len();
        }
        expect == self.next_offset
    }
}

/// Streaming iterator over log entries; records in run segments are
/// reconstructed from the source ring on demand.
pub struct LogIter<'a> {
    log: &'a PartitionLog,
    sources: &'a [Arc<SourceRing>],
    seg: usize,
    within: u64,
}

impl Iterator for LogIter<'_> {
    type Item = LogEntry;

    fn next(&mut self) -> Option<LogEntry> {
        let segment = self.log.segments.get(self.seg)?;
        let entry = match segment {
            Segment::Inline {
                base_offset,
                record,
                stored_ts,
            } => LogEntry {
                offset: *base_offset,
                record: record.clone(),
                stored_ts: *stored_ts,
            },
            Segment::Run {
                base_offset,
                source,
                ring_start,
                first_create_ts,
                stride,
                append_ts,
                ..
            } => {
                let i = self.within;
                let template = self.sources[*source as usize].record(ring_start + i);
                let create_ts = first_create_ts + stride * i;
                let stored_ts = match self.log.timestamp_type {
                    TimestampType::LogAppendTime => *append_ts,
                    TimestampType::CreateTime => create_ts,
                };
                LogEntry {
                    offset: base_offset + i,
                    record: Record {
                        key: template.key.clone(),
                        payload: template.payload.clone(),
                        create_ts,
                        size_bytes: template.size_bytes,
                    },
                    stored_ts,
                }
            }
        };
        self.within += 1;
        if self.within >= segment.len() {
            self.seg += 1;
            self.within = 0;
        }
        Some(entry)
    }
}

/// A produce request in transit: one dispatched batch plus routing state.
#[derive(Debug)]
pub struct Request {
    pub sender: u32,
    pub producer: u32,
    pub topic: u32,
    pub source: u16,
    pub batch: PlannedBatch,
    /// Socket-buffer admission time; the acks=0 resolution point.
    pub enqueue_ts: Nanos,
    pub src_host: u32,
    pub dest_broker: u32,
}

/// Replicated batch waiting for a follower's disk.
#[derive(Debug)]
pub struct FollowerJob {
    pub topic: u32,
    pub partition: u32,
    pub source: u16,
    pub runs: Vec<BatchRun>,
    pub bytes: u64,
    /// Index into the runtime's pending-ack table when acks=all cares.
    pub pending_ack: Option<u32>,
}

#[derive(Debug)]
pub enum DiskJob {
    LeaderWrite(Request),
    FollowerWrite(FollowerJob),
}

impl DiskJob {
    pub fn bytes(&self) -> u64 {
        match self {
            DiskJob::LeaderWrite(r) => r.batch.bytes,
            DiskJob::FollowerWrite(f) => f.bytes,
        }
    }
}

/// FIFO write queue of one broker's disk. Service time is decided when a
/// job starts service (bytes / effective bandwidth, degraded by the host
/// throttle sampled on the tick grid).
#[derive(Debug, Default)]
pub struct DiskQueue {
    queue: VecDeque<DiskJob>,
    serving: bool,
}

impl DiskQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns true when the disk was idle and the caller should start
    /// service for the queue head.
    pub fn enqueue(&mut self, job: DiskJob) -> bool {
        self.queue.push_back(job);
        !self.serving
    }

    /// Mark the head as being written; returns its byte size.
    pub fn start_service(&mut self) -> u64 {
        debug_assert!(!self.serving && !self.queue.is_empty());
        self.serving = true;
        self.queue.front().unwrap().bytes()
    }

    /// Finish the in-service job. Returns it plus whether more work waits.
    pub fn complete(&mut self) -> (DiskJob, bool) {
        debug_assert!(self.serving);
        let job = self.queue.pop_front().expect("completing empty disk queue");
        self.serving = false;
        (job, !self.queue.is_empty())
    }

    /// Jobs queued or in service: the io-waiting task count of this disk.
    pub fn depth(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        !self.serving && self.queue.is_empty()
    }
}

/// A FIFO serialization link: one interface direction carrying requests at
/// a fixed bandwidth. Concurrent senders on the same link share it by
/// queueing behind each other.
#[derive(Debug)]
pub struct Link {
    pub bw: f64,
    queue: VecDeque<Request>,
    serving: bool,
}

impl Link {
    pub fn new(bw: f64) -> Self {
        Link {
            bw,
            queue: VecDeque::new(),
            serving: false,
        }
    }

    pub fn service_ns(&self, bytes: u64) -> Nanos {
        ((bytes as f64) * 1e9 / self.bw).round() as Nanos
    }

    /// Returns true when the link was idle and the caller should schedule
    /// the head's completion.
    pub fn enqueue(&mut self, req: Request) -> bool {
        self.queue.push_back(req);
        !self.serving
    }

    pub fn start_service(&mut self) -> u64 {
        debug_assert!(!self.serving && !self.queue.is_empty());
        self.serving = true;
        self.queue.front().unwrap().batch.bytes
    }

    pub fn complete(&mut self) -> (Request, bool) {
        debug_assert!(self.serving);
        let req = self.queue.pop_front().expect("completing empty link");
        self.serving = false;
        (req, !self.queue.is_empty())
    }
}

/// Received-traffic counters for one interface, plus the one-minute packet
/// rate meter behind the `if_packets.rx` series.
#[derive(Debug, Default)]
pub struct InterfaceCounters {
    pub bytes_rx: u64,
    pub packets_rx: u64,
    pub packet_meter: RateMeter,
}

impl InterfaceCounters {
    pub fn on_arrival(&mut self, bytes: u64, packets: u64) {
        self.bytes_rx += bytes;
        self.packets_rx += packets;
        if packets > 0 {
            let _ = self.packet_meter.mark(packets);
        }
    }
}

/// One machine: optionally a broker, always a pair of interfaces and a
/// load average. `throttle` is the CPU over-utilization factor applied to
/// disk service started on this host (1.0 = no degradation).
#[derive(Debug)]
pub struct Host {
    pub name: String,
    pub broker: Option<u32>,
    pub eth0: InterfaceCounters,
    pub lo: InterfaceCounters,
    pub load: LoadAvg,
    pub throttle: f64,
}

impl Host {
    fn new(name: String, broker: Option<u32>) -> Self {
        Host {
            name,
            broker,
            eth0: InterfaceCounters::default(),
            lo: InterfaceCounters::default(),
            load: LoadAvg::new(),
            throttle: 1.0,
        }
    }
}

#[derive(Debug)]
pub struct PartitionState {
    pub replicas: ReplicaSet,
    /// Logs by replica, leader first.
    pub logs: Vec<(u32, PartitionLog)>,
}

impl PartitionState {
    pub fn leader_log(&self) -> &PartitionLog {
        &self.logs[0].1
    }

    pub fn leader_log_mut(&mut self) -> &mut PartitionLog {
        &mut self.logs[0].1
    }

    pub fn replica_log_mut(&mut self, broker: u32) -> Option<&mut PartitionLog> {
        self.logs
            .iter_mut()
            .find(|(b, _)| *b == broker)
            .map(|(_, l)| l)
    }
}

#[derive(Debug)]
pub struct Topic {
    pub config: TopicConfig,
    pub partitions: Vec<PartitionState>,
}

/// The simulated cluster: brokers with disks, hosts (broker hosts plus any
/// external sender hosts), topics, and the cluster-wide ingest meters.
pub struct Cluster {
    pub profile: ResourceProfile,
    pub hosts: Vec<Host>,
    pub broker_count: u32,
    pub disks: Vec<DiskQueue>,
    pub topics: Vec<Topic>,
    pub messages_in: RateMeter,
    pub bytes_in: RateMeter,
    pub sources: Vec<Arc<SourceRing>>,
}

impl Cluster {
    pub fn new(profile: ResourceProfile, broker_count: u32) -> Self {
        let hosts = (1..=broker_count)
            .map(|id| Host::new(format!("broker{id}"), Some(id)))
            .collect();
        Cluster {
            profile,
            hosts,
            broker_count,
            disks: (0..broker_count).map(|_| DiskQueue::new()).collect(),
            topics: Vec::new(),
            messages_in: RateMeter::new(),
            bytes_in: RateMeter::new(),
            sources: Vec::new(),
        }
    }

    /// Ensure a non-broker host with the given 1-based id exists (sender
    /// placement may name hosts beyond the brokers).
    pub fn ensure_host(&mut self, host_id: u32) {
        while (self.hosts.len() as u32) < host_id {
            let id = self.hosts.len() as u32 + 1;
            self.hosts.push(Host::new(format!("host{id}"), None));
        }
    }

    pub fn host(&self, host_id: u32) -> &Host {
        &self.hosts[(host_id - 1) as usize]
    }

    pub fn host_mut(&mut self, host_id: u32) -> &mut Host {
        &mut self.hosts[(host_id - 1) as usize]
    }

    pub fn register_source(&mut self, ring: Arc<SourceRing>) -> u16 {
        self.sources.push(ring);
        (self.sources.len() - 1) as u16
    }

    /// Create a topic: partition 0 lands on broker 1, further partitions
    /// round-robin across brokers, followers on the next brokers cyclically.
    pub fn create_topic(&mut self, config: TopicConfig) -> Result<u32, BrokerSimError> {
        if self.topics.iter().any(|t| t.config.name == config.name) {
            return Err(BrokerSimError::TopicExists(config.name));
        }
        if config.replication_factor > self.broker_count {
            return Err(BrokerSimError::InvalidReplication(
                config.replication_factor,
                self.broker_count,
            ));
        }
        let mut partitions = Vec::with_capacity(config.partitions as usize);
        for p in 0..config.partitions {
            let leader = (p % self.broker_count) + 1;
            let followers: Vec<u32> = (1..config.replication_factor)
                .map(|i| ((leader - 1 + i) % self.broker_count) + 1)
                .collect();
            let mut in_sync = vec![leader];
            in_sync.extend(&followers);
            let mut logs = vec![(
                leader,
                PartitionLog::new(&config.name, p, config.timestamp_type),
            )];
            for f in &followers {
                logs.push((*f, PartitionLog::new(&config.name, p, config.timestamp_type)));
            }
            partitions.push(PartitionState {
                replicas: ReplicaSet {
                    leader,
                    followers,
                    in_sync,
                },
                logs,
            });
        }
        self.topics.push(Topic { config, partitions });
        Ok(self.topics.len() as u32 - 1)
    }

    pub fn topic_by_name(&self, name: &str) -> Result<u32, BrokerSimError> {
        self.topics
            .iter()
            .position(|t| t.config.name == name)
            .map(|i| i as u32)
            .ok_or_else(|| BrokerSimError::UnknownTopic(name.into()))
    }

    /// Append a completed leader write to the leader log and mark the
    /// ingest meters. Returns the base offset of the batch.
    pub fn append_leader(
        &mut self,
        topic: u32,
        source: u16,
        batch: &PlannedBatch,
        now: Nanos,
    ) -> u64 {
        let ring = Arc::clone(&self.sources[source as usize]);
        let part = &mut self.topics[topic as usize].partitions[batch.partition as usize];
        let log = part.leader_log_mut();
        let base = log.next_offset();
        for run in &batch.runs {
            let bytes = ring.span_bytes(run.ring_start, run.count as u64);
            log.append_run(source, *run, bytes, now);
        }
        let _ = self.messages_in.mark(batch.count as u64);
        let _ = self.bytes_in.mark(batch.bytes);
        base
    }

    /// Append a replicated batch to a follower's log (no topic meters; the
    /// leader already counted the ingest).
    pub fn append_follower(&mut self, job: &FollowerJob, broker: u32, now: Nanos) {
        let part = &mut self.topics[job.topic as usize].partitions[job.partition as usize];
        let ring = Arc::clone(&self.sources[job.source as usize]);
        let log = part
            .replica_log_mut(broker)
            .expect("follower log for replica");
        for run in &job.runs {
            let bytes = ring.span_bytes(run.ring_start, run.count as u64);
            log.append_run(job.source, *run, bytes, now);
        }
    }

    /// Disk service duration for `bytes` on `broker`, at its host's current
    /// throttle factor.
    pub fn disk_service_ns(&self, broker: u32, bytes: u64) -> Nanos {
        let throttle = self.host(broker).throttle;
        let bw = self.profile.effective_disk_bw * throttle;
        ((bytes as f64) * 1e9 / bw).round() as Nanos
    }

    /// Sum of next_offset over all leader partitions of a topic.
    pub fn topic_next_offsets(&self, topic: u32) -> u64 {
        self.topics[topic as usize]
            .partitions
            .iter()
            .map(|p| p.leader_log().next_offset())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AcksLevel;
    use bytes::Bytes;
    use proptest::prelude::*;

    fn rec(payload: &str, create_ts: Nanos) -> Record {
        Record::new(None, Bytes::from(payload.as_bytes().to_vec()), create_ts).unwrap()
    }

    #[test]
    fn create_topic_places_partition_zero_on_broker_one() {
        let mut c = Cluster::new(ResourceProfile::paper_hw(), 3);
        let t = c
            .create_topic(TopicConfig {
                name: "bench".into(),
                partitions: 1,
                replication_factor: 1,
                timestamp_type: TimestampType::CreateTime,
            })
            .unwrap();
        let part = &c.topics[t as usize].partitions[0];
        assert_eq!(part.replicas.leader, 1);
        assert!(part.replicas.followers.is_empty());
        assert_eq!(part.replicas.in_sync, vec![1]);
    }

    #[test]
    fn create_topic_two_partitions_are_independent_logs() {
        let mut c = Cluster::new(ResourceProfile::paper_hw(), 3);
        let t = c
            .create_topic(TopicConfig {
                name: "two".into(),
                partitions: 2,
                replication_factor: 1,
                ..TopicConfig::default()
            })
            .unwrap();
        let topic = &c.topics[t as usize];
        assert_eq!(topic.partitions.len(), 2);
        assert_eq!(topic.partitions[0].replicas.leader, 1);
        assert_eq!(topic.partitions[1].replicas.leader, 2);
        assert_eq!(topic.partitions[0].logs.len(), 1);
    }

    #[test]
    fn create_topic_rejects_duplicates_and_over_replication() {
        let mut c = Cluster::new(ResourceProfile::paper_hw(), 3);
        c.create_topic(TopicConfig::default()).unwrap();
        assert!(matches!(
            c.create_topic(TopicConfig::default()),
            Err(BrokerSimError::TopicExists(_))
        ));
        assert!(matches!(
            c.create_topic(TopicConfig {
                name: "wide".into(),
                replication_factor: 4,
                ..TopicConfig::default()
            }),
            Err(BrokerSimError::InvalidReplication(4, 3))
        ));
    }

    #[test]
    fn replication_assigns_followers_and_insync() {
        let mut c = Cluster::new(ResourceProfile::paper_hw(), 3);
        let t = c
            .create_topic(TopicConfig {
                name: "r".into(),
                replication_factor: 2,
                ..TopicConfig::default()
            })
            .unwrap();
        let part = &c.topics[t as usize].partitions[0];
        assert_eq!(part.replicas.leader, 1);
        assert_eq!(part.replicas.followers, vec![2]);
        assert_eq!(part.replicas.in_sync, vec![1, 2]);
        assert_eq!(part.logs.len(), 2);
    }

    #[test]
    fn append_to_empty_log_yields_offset_zero() {
        let mut log = PartitionLog::new("t", 0, TimestampType::CreateTime);
        let (offset, _) = log.append(rec("first", 1), 10);
        assert_eq!(offset, 0);
        assert_eq!(log.next_offset(), 1);
    }

    #[test]
    fn log_append_time_stores_broker_clock() {
        let mut log = PartitionLog::new("t", 0, TimestampType::LogAppendTime);
        let (_, stored) = log.append(rec("r", 100), 250);
        assert_eq!(stored, 250);
    }

    #[test]
    fn create_time_stores_producer_clock() {
        let mut log = PartitionLog::new("t", 0, TimestampType::CreateTime);
        let (_, stored) = log.append(rec("r", 100), 250);
        assert_eq!(stored, 100);
    }

    fn five_record_log() -> PartitionLog {
        let mut log = PartitionLog::new("t", 0, TimestampType::CreateTime);
        for i in 0..5 {
            log.append(rec(&format!("r{i}"), i), 100 + i);
        }
        log
    }

    #[test]
    fn fetch_returns_strictly_greater_offsets() {
        let log = five_record_log();
        let got: Vec<u64> = log.fetch(1, &[]).unwrap().map(|e| e.offset).collect();
        assert_eq!(got, vec![2, 3, 4]);
    }

    #[test]
    fn fetch_past_end_is_empty() {
        let log = five_record_log();
        assert_eq!(log.fetch(4, &[]).unwrap().count(), 0);
    }

    #[test]
    fn fetch_minus_one_reads_from_beginning() {
        let log = five_record_log();
        let got: Vec<u64> = log.fetch(-1, &[]).unwrap().map(|e| e.offset).collect();
        assert_eq!(got, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn fetch_below_minus_one_is_invalid() {
        let log = five_record_log();
        assert!(matches!(
            log.fetch(-2, &[]).err(),
            Some(BrokerSimError::InvalidOffset(-2))
        ));
    }

    #[test]
    fn run_segments_reconstruct_records_and_timestamps() {
        let ring = Arc::new(
            SourceRing::from_records(vec![rec("aaa", 0), rec("bbbb", 0), rec("ccccc", 0)])
                .unwrap(),
        );
        let sources = vec![Arc::clone(&ring)];
        let mut log = PartitionLog::new("t", 0, TimestampType::CreateTime);
        let run = BatchRun {
            ring_start: 0,
            start_ts: 1_000,
            count: 5,
            stride: 10,
        };
        let bytes = ring.span_bytes(0, 5);
        log.append_run(0, run, bytes, 9_999);

        let entries: Vec<LogEntry> = log.fetch(-1, &sources).unwrap().collect();
        assert_eq!(entries.len(), 5);
        assert_eq!(entries[0].record.payload, Bytes::from_static(b"aaa"));
        assert_eq!(entries[3].record.payload, Bytes::from_static(b"aaa")); // ring wrap
        assert_eq!(entries[2].record.create_ts, 1_020);
        assert_eq!(entries[2].stored_ts, 1_020);
        assert_eq!(log.total_bytes(), bytes);
        assert!(log.verify_dense());
    }

    #[test]
    fn ack_point_matches_acks_semantics() {
        // acks=0 resolves at enqueue regardless of disk completion times.
        assert_eq!(ack_point(AcksLevel::Acks0, 10, 500, &[900]), 10);
        assert_eq!(ack_point(AcksLevel::Acks1, 10, 500, &[900]), 500);
        assert_eq!(ack_point(AcksLevel::AcksAll, 10, 500, &[900, 700]), 900);
        // Single replica: all-replicas point equals the leader point.
        assert_eq!(
            ack_point(AcksLevel::AcksAll, 10, 500, &[]),
            ack_point(AcksLevel::Acks1, 10, 500, &[])
        );
    }

    #[test]
    fn acks_are_monotone_per_request() {
        let follower = [700, 900];
        let t0 = ack_point(AcksLevel::Acks0, 10, 500, &follower);
        let t1 = ack_point(AcksLevel::Acks1, 10, 500, &follower);
        let tall = ack_point(AcksLevel::AcksAll, 10, 500, &follower);
        assert!(t0 <= t1 && t1 <= tall);
        assert!(tall > t1, "positive replication delay orders acks");
    }

    #[test]
    fn insync_guard() {
        assert!(check_insync(1, 1).is_ok());
        assert!(matches!(
            check_insync(1, 2),
            Err(BrokerSimError::NotEnoughReplicas(1, 2))
        ));
    }

    #[test]
    fn packet_counts_follow_mtu_ceiling() {
        assert_eq!(packets_for(1_500, 1_500), 1);
        assert_eq!(packets_for(1_501, 1_500), 2);
        assert_eq!(packets_for(1, 1_500), 1);
        assert_eq!(packets_for(16_340, 1_500), 11);
    }

    #[test]
    fn disk_queue_is_fifo_and_tracks_depth() {
        let mut d = DiskQueue::new();
        let job = |n: u64| {
            DiskJob::FollowerWrite(FollowerJob {
                topic: 0,
                partition: 0,
                source: 0,
                runs: vec![],
                bytes: n,
                pending_ack: None,
            })
        };
        assert!(d.enqueue(job(100)));
        assert_eq!(d.start_service(), 100);
        assert!(!d.enqueue(job(200)));
        assert_eq!(d.depth(), 2);
        let (done, more) = d.complete();
        assert_eq!(done.bytes(), 100);
        assert!(more);
        assert_eq!(d.start_service(), 200);
        let (_, more) = d.complete();
        assert!(!more);
        assert!(d.is_idle());
    }

    #[test]
    fn throttle_slows_disk_service() {
        let mut c = Cluster::new(ResourceProfile::paper_hw(), 1);
        let base = c.disk_service_ns(1, 16_384);
        c.host_mut(1).throttle = 0.5;
        assert_eq!(c.disk_service_ns(1, 16_384), base * 2);
    }

    proptest! {
        // Density and the fetch partition: fetch(k) is exactly the suffix
        // with offsets > k, and together with the prefix covers the log.
        #[test]
        fn fetch_partitions_the_log(
            n in 0usize..40,
            k in -1i64..45,
        ) {
            let mut log = PartitionLog::new("t", 0, TimestampType::CreateTime);
            for i in 0..n {
                log.append(rec(&format!("r{i}"), i as u64), i as u64);
            }
            prop_assert!(log.verify_dense());
            let suffix: Vec<u64> = log.fetch(k, &[]).unwrap().map(|e| e.offset).collect();
            let expected: Vec<u64> = (0..n as u64).filter(|o| (*o as i64) > k).collect();
            prop_assert_eq!(suffix, expected);
        }
    }
}

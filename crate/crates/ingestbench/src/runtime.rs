//! The composed simulation: senders, producers, links, disks and meters
//! wired onto one event loop.
//!
//! Senders are event-compressed: between two scheduling decisions (a batch
//! sealing, a buffer-capacity boundary, the run end) all sends happen at a
//! fixed stride, so the loop handles one event per batch instead of one per
//! record. The per-record semantics are preserved exactly — reserves, seal
//! instants and creation timestamps all land on the same nanosecond they
//! would in a record-at-a-time walk — because a producer is owned by a
//! single sender and releases only ever add capacity between decisions.
//!
//! Request path: seal -> accumulator -> dispatch window -> interface link(s)
//! -> broker disk FIFO -> append. Appends mark the ingest meters, resolve
//! acknowledgment receipts, release buffer bytes per the acks contract and
//! refill the dispatch window. Local traffic takes the host loopback link;
//! remote traffic takes the sender host's uplink and then the receiving
//! broker's eth0, both FIFO-shared.

use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::brokersim::{
    packets_for, BrokerSimError, Cluster, DiskJob, FollowerJob, Link, Request,
};
use crate::clock::{EventClass, EventQueue, SimClock, TimeMode};
use crate::domain::{AcksLevel, Nanos, ResourceProfile, TopicConfig, NANOS_PER_SEC};
use crate::loadgen::{Locality, LoadgenError, SenderSpec, SenderStats, SourceRing};
use crate::metrics::{
    path_if_packets, path_load, MetricPoint, SeriesStore, PATH_BYTES_IN, PATH_MESSAGES_IN,
    TICK_INTERVAL_SECS,
};
use crate::producer::{BatchReceipt, BatchRun, ProducerStats, SimProducer};

/// Epoch of run start in exported metric timestamps. A fixed base keeps
/// exports byte-deterministic across wall-clock reruns.
pub const EXPORT_EPOCH_BASE: u64 = 1_565_000_000;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Broker(#[from] BrokerSimError),
    #[error(transparent)]
    Source(#[from] LoadgenError),
    #[error(transparent)]
    Profile(#[from] crate::domain::DomainError),
    #[error("sender {sender}: {source}")]
    Producer {
        sender: usize,
        source: crate::producer::ProducerError,
    },
}

/// Everything needed to run one scenario.
#[derive(Debug, Clone)]
pub struct SimSpec {
    pub profile: ResourceProfile,
    pub brokers: u32,
    pub topic: TopicConfig,
    pub senders: Vec<SenderSpec>,
    pub duration_s: u64,
    pub mode: TimeMode,
}

/// Final state of a run: the collected series, the cluster (logs, counters,
/// meters) and the conservation audit.
pub struct SimOutcome {
    pub store: SeriesStore,
    pub cluster: Cluster,
    pub audit: RunAudit,
}

#[derive(Debug, Clone)]
pub struct RunAudit {
    pub sender_stats: Vec<SenderStats>,
    pub producer_stats: Vec<ProducerStats>,
    /// Cumulative MessagesIn counter at run end.
    pub messages_in_total: u64,
    /// Cumulative BytesIn counter at run end.
    pub bytes_in_total: u64,
    /// Sum of next_offset over the topic's leader partitions.
    pub next_offsets: u64,
    /// Buffer bytes still reserved per producer (zero after a clean drain).
    pub final_in_use: Vec<u64>,
    /// Virtual time when the last event completed.
    pub drained_at_ns: Nanos,
}

enum Ev {
    SenderWake(u32),
    LinkDone(u32),
    DiskDone(u32),
    ReplicaArrive(u32, Box<FollowerJob>),
    Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Running,
    Blocked { since: Nanos },
    Finished,
}

struct SenderState {
    spec: SenderSpec,
    host: u32,
    source: u16,
    ring_pos: u64,
    next_slot: Nanos,
    stride: Nanos,
    end_ns: Nanos,
    phase: Phase,
    stats: SenderStats,
    skipped: u64,
    sent_window: u64,
}

struct PendingAck {
    producer: u32,
    bytes: u64,
    records: u32,
    remaining: u32,
    enqueue_ts: Nanos,
    seal_ts: Nanos,
    base_offset: u64,
    latest_ts: Nanos,
}

struct Simulation {
    clock: SimClock,
    queue: EventQueue<Ev>,
    cluster: Cluster,
    topic: u32,
    producers: Vec<SimProducer>,
    senders: Vec<SenderState>,
    links: Vec<Link>,
    lo_of: Vec<u32>,
    up_of: Vec<u32>,
    rx_of: Vec<u32>,
    pending_acks: Vec<PendingAck>,
    duration_ns: Nanos,
    store: SeriesStore,
    /// Records appended per host since the last tick (broker CPU cost).
    append_window: Vec<u64>,
}

/// Build and run the scenario to completion (all queues drained).
pub fn run(spec: &SimSpec) -> Result<SimOutcome, RuntimeError> {
    let mut sim = Simulation::build(spec)?;
    sim.run_loop(spec.mode);
    Ok(sim.into_outcome())
}

impl Simulation {
    fn build(spec: &SimSpec) -> Result<Simulation, RuntimeError> {
        spec.profile.validate()?;
        let mut cluster = Cluster::new(spec.profile.clone(), spec.brokers);
        let topic = cluster.create_topic(spec.topic.clone())?;

        // Hosts: brokers first, then any external sender hosts.
        for s in &spec.senders {
            if let Locality::Remote(h) = s.locality {
                cluster.ensure_host(h);
            }
        }
        let host_count = cluster.hosts.len();

        // One link set per host: loopback, eth0 uplink, eth0 receive.
        let mut links = Vec::with_capacity(host_count * 3);
        let mut lo_of = Vec::with_capacity(host_count);
        let mut up_of = Vec::with_capacity(host_count);
        let mut rx_of = Vec::with_capacity(host_count);
        for _ in 0..host_count {
            lo_of.push(links.len() as u32);
            links.push(Link::new(spec.profile.loopback_bw));
            up_of.push(links.len() as u32);
            links.push(Link::new(spec.profile.nic_bw));
            rx_of.push(links.len() as u32);
            links.push(Link::new(spec.profile.nic_bw));
        }

        let duration_ns = spec.duration_s * NANOS_PER_SEC;
        let mut producers = Vec::with_capacity(spec.senders.len());
        let mut senders = Vec::with_capacity(spec.senders.len());
        let mut queue = EventQueue::new();

        for (i, sspec) in spec.senders.iter().enumerate() {
            let ring = Arc::new(SourceRing::open(&sspec.source)?);
            let producer = SimProducer::new(sspec.producer.clone(), spec.topic.partitions);
            let max_record = (0..ring.len() as u64)
                .map(|p| ring.size_at(p))
                .max()
                .unwrap_or(0);
            producer
                .guard_record_size(max_record)
                .map_err(|source| RuntimeError::Producer {
                    sender: i + 1,
                    source,
                })?;
            if sspec.producer.acks == AcksLevel::AcksAll {
                let in_sync = spec.topic.replication_factor;
                crate::brokersim::check_insync(in_sync, sspec.producer.min_insync_replicas)?;
            }
            let source = cluster.register_source(ring);
            let host = match sspec.locality {
                Locality::Local => 1,
                Locality::Remote(h) => h,
            };
            let stride = sspec.stride_ns();
            let first_slot = if sspec.read_in_ram {
                0
            } else {
                sspec.source.read_latency_ns
            };
            let end_ns = (sspec.duration_s * NANOS_PER_SEC).min(duration_ns);
            producers.push(producer);
            senders.push(SenderState {
                spec: sspec.clone(),
                host,
                source,
                ring_pos: 0,
                next_slot: first_slot,
                stride,
                end_ns,
                phase: Phase::Running,
                stats: SenderStats::default(),
                skipped: 0,
                sent_window: 0,
            });
            // First send, plus a guaranteed finish even if blocked at the end.
            queue.push(first_slot, EventClass::SenderWake, i as u32, Ev::SenderWake(i as u32));
            queue.push(end_ns, EventClass::SenderWake, i as u32, Ev::SenderWake(i as u32));
        }

        let tick_ns = TICK_INTERVAL_SECS * NANOS_PER_SEC;
        queue.push(tick_ns, EventClass::Tick, 0, Ev::Tick);

        let append_window = vec![0; host_count];
        Ok(Simulation {
            clock: SimClock::new(spec.mode),
            queue,
            cluster,
            topic,
            producers,
            senders,
            links,
            lo_of,
            up_of,
            rx_of,
            pending_acks: Vec::new(),
            duration_ns,
            store: SeriesStore::new(),
            append_window,
        })
    }

    fn run_loop(&mut self, mode: TimeMode) {
        let wall_start = Instant::now();
        while let Some((at, ev)) = self.queue.pop() {
            if mode == TimeMode::RealTime {
                let target = wall_start + Duration::from_nanos(at);
                let now = Instant::now();
                if target > now {
                    std::thread::sleep(target - now);
                }
            }
            self.clock.advance_to(at);
            match ev {
                Ev::SenderWake(s) => self.on_sender_wake(s),
                Ev::LinkDone(l) => self.on_link_done(l),
                Ev::DiskDone(b) => self.on_disk_done(b),
                Ev::ReplicaArrive(b, job) => self.on_replica_arrive(b, *job),
                Ev::Tick => self.on_tick(),
            }
        }
    }

    fn into_outcome(self) -> SimOutcome {
        let audit = RunAudit {
            sender_stats: self.senders.iter().map(|s| s.stats).collect(),
            producer_stats: self.producers.iter().map(|p| p.stats).collect(),
            messages_in_total: self.cluster.messages_in.total(),
            bytes_in_total: self.cluster.bytes_in.total(),
            next_offsets: self.cluster.topic_next_offsets(self.topic),
            final_in_use: self.producers.iter().map(|p| p.buffer.in_use()).collect(),
            drained_at_ns: self.clock.now(),
        };
        SimOutcome {
            store: self.store,
            cluster: self.cluster,
            audit,
        }
    }

    // ---- sender production ------------------------------------------------

    fn on_sender_wake(&mut self, s: u32) {
        let now = self.clock.now();
        let si = s as usize;
        match self.senders[si].phase {
            Phase::Finished => return,
            Phase::Blocked { since } => {
                if now >= self.senders[si].end_ns {
                    let gap = self.senders[si].end_ns - since;
                    self.senders[si].stats.blocked_ns += gap;
                    self.senders[si].skipped += gap / self.senders[si].stride;
                    self.finish_sender(si);
                }
                return;
            }
            Phase::Running => {}
        }
        if now >= self.senders[si].end_ns {
            self.finish_sender(si);
            return;
        }
        // Stale wake from before a block-resume; the resume wake follows.
        if now < self.senders[si].next_slot {
            return;
        }
        self.produce(si, now);
    }

    /// One scheduling decision for sender `si` at its due slot `now`:
    /// seal if the pending record overflows the open batch, block if it
    /// cannot reserve, otherwise take the longest decision-free run of sends.
    fn produce(&mut self, si: usize, now: Nanos) {
        debug_assert_eq!(self.senders[si].next_slot, now);
        if self.producers[si].guard_open().is_err() {
            return;
        }
        let partitions = self.cluster.topics[self.topic as usize].config.partitions;
        let single = partitions == 1;

        let pos = self.senders[si].ring_pos;
        let size = {
            let src = self.senders[si].source;
            self.cluster.sources[src as usize].size_at(pos)
        };
        let batch_size = self.producers[si].props.batch_size_bytes;

        // Buffer reserve precedes batch routing: a full buffer delays the
        // seal of the open batch too.
        if self.producers[si].buffer.available() < size {
            self.senders[si].phase = Phase::Blocked { since: now };
            return;
        }

        // Partition of this record; the compressed path requires a single
        // partition (multi-partition topics step record by record).
        let partition = if single {
            0
        } else {
            self.producers[si].next_partition(partitions)
        };

        // Seal on overflow: the arriving record seals the batch and starts
        // the next one.
        let open = self.producers[si].open_bytes(partition);
        if open > 0 && open + size > batch_size {
            self.producers[si].seal_open(partition, now);
            self.try_dispatch(si as u32);
        }

        let stride = self.senders[si].stride;
        let end_ns = self.senders[si].end_ns;
        let src = self.senders[si].source;
        let ring = Arc::clone(&self.cluster.sources[src as usize]);

        let open = self.producers[si].open_bytes(partition);
        let oversize = open == 0 && size > batch_size;
        let k = if oversize || !single {
            1
        } else {
            let k_fit = ring.max_fit(pos, batch_size - open);
            let k_cap = ring.max_fit(pos, self.producers[si].buffer.available());
            let k_time = (end_ns - now).div_ceil(stride);
            k_fit.min(k_cap).min(k_time).max(1)
        };

        let bytes = ring.span_bytes(pos, k);
        let reserved = self.producers[si].buffer.try_reserve(bytes);
        debug_assert!(reserved);
        self.producers[si].extend_open(
            partition,
            BatchRun {
                ring_start: pos,
                start_ts: now,
                count: k as u32,
                stride,
            },
            bytes,
        );
        self.senders[si].stats.sent += k;
        self.senders[si].sent_window += k;
        self.senders[si].ring_pos += k;
        self.senders[si].next_slot = now + k * stride;

        if oversize {
            self.producers[si].seal_open(partition, now);
            self.try_dispatch(si as u32);
        }

        let next = self.senders[si].next_slot;
        if next < end_ns {
            self.queue
                .push(next, EventClass::SenderWake, si as u32, Ev::SenderWake(si as u32));
        }
        // Otherwise the finish wake scheduled at end_ns takes over.
    }

    /// Run end for a sender: seal whatever is open and let the pipeline
    /// drain (flush semantics — the producer returns via the drained queue).
    fn finish_sender(&mut self, si: usize) {
        let end = self.senders[si].end_ns;
        self.senders[si].phase = Phase::Finished;
        let stride = self.senders[si].stride;
        let first = if self.senders[si].spec.read_in_ram {
            0
        } else {
            self.senders[si].spec.source.read_latency_ns
        };
        let span = end.saturating_sub(first);
        self.senders[si].stats.attempted = span.div_ceil(stride.max(1));
        self.producers[si].seal_all_open(end);
        self.producers[si].close();
        self.try_dispatch(si as u32);
    }

    /// Move sealed batches into the pipeline while the dispatch window has
    /// room. acks=0 resolves (and frees buffer bytes) at this socket-buffer
    /// admission point.
    fn try_dispatch(&mut self, producer: u32) {
        let now = self.clock.now();
        let pi = producer as usize;
        let mut released = false;
        while let Some(batch) = self.producers[pi].next_dispatch() {
            if self.producers[pi].props.acks == AcksLevel::Acks0 {
                self.producers[pi].buffer.release(batch.bytes);
                released = true;
            }
            let dest_broker = self.cluster.topics[self.topic as usize].partitions
                [batch.partition as usize]
                .replicas
                .leader;
            let src_host = self.senders[pi].host;
            let req = Request {
                sender: producer,
                producer,
                topic: self.topic,
                source: self.senders[pi].source,
                batch,
                enqueue_ts: now,
                src_host,
                dest_broker,
            };
            let link = if src_host == dest_broker {
                self.lo_of[(src_host - 1) as usize]
            } else {
                self.up_of[(src_host - 1) as usize]
            };
            self.link_enqueue(link, req);
        }
        if released {
            self.maybe_wake(producer);
        }
    }

    fn link_enqueue(&mut self, link: u32, req: Request) {
        let l = &mut self.links[link as usize];
        if l.enqueue(req) {
            let bytes = l.start_service();
            let done = self.clock.now() + l.service_ns(bytes);
            self.queue.push(done, EventClass::LinkDone, link, Ev::LinkDone(link));
        }
    }

    fn on_link_done(&mut self, link: u32) {
        let now = self.clock.now();
        let (req, more) = self.links[link as usize].complete();
        if more {
            let l = &mut self.links[link as usize];
            let bytes = l.start_service();
            let done = now + l.service_ns(bytes);
            self.queue.push(done, EventClass::LinkDone, link, Ev::LinkDone(link));
        }

        let dest_host = req.dest_broker;
        let remote = req.src_host != dest_host;
        let was_uplink = remote && link == self.up_of[(req.src_host - 1) as usize];
        if was_uplink {
            // Second hop: the receiving broker's eth0.
            let rx = self.rx_of[(dest_host - 1) as usize];
            self.link_enqueue(rx, req);
            return;
        }

        // Arrival at the broker host: count interface traffic, then queue
        // the write job.
        let mtu = self.cluster.profile.mtu_bytes;
        let packets = packets_for(req.batch.bytes, mtu);
        let host = self.cluster.host_mut(dest_host);
        if remote {
            host.eth0.on_arrival(req.batch.bytes, packets);
        } else {
            host.lo.on_arrival(req.batch.bytes, packets);
        }
        let broker = req.dest_broker;
        self.disk_enqueue(broker, DiskJob::LeaderWrite(req));
    }

    fn disk_enqueue(&mut self, broker: u32, job: DiskJob) {
        let d = &mut self.cluster.disks[(broker - 1) as usize];
        if d.enqueue(job) {
            let bytes = d.start_service();
            let done = self.clock.now() + self.cluster.disk_service_ns(broker, bytes);
            self.queue.push(done, EventClass::DiskDone, broker, Ev::DiskDone(broker));
        }
    }

    fn on_disk_done(&mut self, broker: u32) {
        let now = self.clock.now();
        let (job, more) = self.cluster.disks[(broker - 1) as usize].complete();
        if more {
            let bytes = self.cluster.disks[(broker - 1) as usize].start_service();
            let done = now + self.cluster.disk_service_ns(broker, bytes);
            self.queue.push(done, EventClass::DiskDone, broker, Ev::DiskDone(broker));
        }
        match job {
            DiskJob::LeaderWrite(req) => self.on_leader_append(req, broker, now),
            DiskJob::FollowerWrite(fj) => self.on_follower_append(fj, broker, now),
        }
    }

    fn on_leader_append(&mut self, req: Request, broker: u32, now: Nanos) {
        let base_offset = self
            .cluster
            .append_leader(req.topic, req.source, &req.batch, now);
        self.append_window[(broker - 1) as usize] += req.batch.count as u64;

        let pi = req.producer as usize;
        self.producers[pi].in_flight -= 1;

        let followers = self.cluster.topics[req.topic as usize].partitions
            [req.batch.partition as usize]
            .replicas
            .followers
            .clone();

        let acks = self.producers[pi].props.acks;
        let mut pending_ack = None;
        match acks {
            AcksLevel::Acks0 => {
                // Bytes were released at socket enqueue; the receipt is
                // still recorded against the append for conservation checks.
                self.producers[pi].record_receipt(BatchReceipt {
                    seal_ts: req.batch.seal_ts,
                    enqueue_ts: req.enqueue_ts,
                    ack_ts: req.enqueue_ts,
                    base_offset,
                    records: req.batch.count,
                    acks,
                });
            }
            AcksLevel::Acks1 => {
                self.producers[pi].buffer.release(req.batch.bytes);
                self.producers[pi].record_receipt(BatchReceipt {
                    seal_ts: req.batch.seal_ts,
                    enqueue_ts: req.enqueue_ts,
                    ack_ts: now,
                    base_offset,
                    records: req.batch.count,
                    acks,
                });
            }
            AcksLevel::AcksAll => {
                if followers.is_empty() {
                    // Single replica: the all-replicas point is the leader
                    // write completion, identical to acks=1.
                    self.producers[pi].buffer.release(req.batch.bytes);
                    self.producers[pi].record_receipt(BatchReceipt {
                        seal_ts: req.batch.seal_ts,
                        enqueue_ts: req.enqueue_ts,
                        ack_ts: now,
                        base_offset,
                        records: req.batch.count,
                        acks,
                    });
                } else {
                    self.pending_acks.push(PendingAck {
                        producer: req.producer,
                        bytes: req.batch.bytes,
                        records: req.batch.count,
                        remaining: followers.len() as u32,
                        enqueue_ts: req.enqueue_ts,
                        seal_ts: req.batch.seal_ts,
                        base_offset,
                        latest_ts: now,
                    });
                    pending_ack = Some(self.pending_acks.len() as u32 - 1);
                }
            }
        }

        // Followers replicate every batch regardless of the acks level.
        if !followers.is_empty() {
            let delay = self.cluster.profile.replication_delay;
            for f in followers {
                let fj = FollowerJob {
                    topic: req.topic,
                    partition: req.batch.partition,
                    source: req.source,
                    runs: req.batch.runs.clone(),
                    bytes: req.batch.bytes,
                    pending_ack,
                };
                self.queue.push(
                    now + delay,
                    EventClass::ReplicaArrive,
                    f,
                    Ev::ReplicaArrive(f, Box::new(fj)),
                );
            }
        }

        self.try_dispatch(req.producer);
        self.maybe_wake(req.producer);
    }

    fn on_replica_arrive(&mut self, broker: u32, job: FollowerJob) {
        self.disk_enqueue(broker, DiskJob::FollowerWrite(job));
    }

    fn on_follower_append(&mut self, fj: FollowerJob, broker: u32, now: Nanos) {
        self.cluster.append_follower(&fj, broker, now);
        self.append_window[(broker - 1) as usize] +=
            fj.runs.iter().map(|r| r.count as u64).sum::<u64>();
        if let Some(pa) = fj.pending_ack {
            let done = {
                let p = &mut self.pending_acks[pa as usize];
                p.remaining -= 1;
                p.latest_ts = p.latest_ts.max(now);
                p.remaining == 0
            };
            if done {
                let p = &self.pending_acks[pa as usize];
                let (producer, bytes, receipt) = (
                    p.producer,
                    p.bytes,
                    BatchReceipt {
                        seal_ts: p.seal_ts,
                        enqueue_ts: p.enqueue_ts,
                        ack_ts: p.latest_ts,
                        base_offset: p.base_offset,
                        records: p.records,
                        acks: AcksLevel::AcksAll,
                    },
                );
                self.producers[producer as usize].buffer.release(bytes);
                self.producers[producer as usize].record_receipt(receipt);
                self.try_dispatch(producer);
                self.maybe_wake(producer);
            }
        }
    }

    /// Resume a sender blocked on buffer backpressure once its pending
    /// record fits again. The skipped slots during the block are counted
    /// but never back-filled.
    fn maybe_wake(&mut self, producer: u32) {
        let now = self.clock.now();
        let si = producer as usize;
        let Phase::Blocked { since } = self.senders[si].phase else {
            return;
        };
        let pos = self.senders[si].ring_pos;
        let size = self.cluster.sources[self.senders[si].source as usize].size_at(pos);
        if self.producers[si].buffer.available() < size {
            return;
        }
        let gap = now - since;
        self.senders[si].stats.blocked_ns += gap;
        self.senders[si].skipped += gap / self.senders[si].stride;
        self.senders[si].phase = Phase::Running;
        self.senders[si].next_slot = now;
        self.queue
            .push(now, EventClass::SenderWake, producer, Ev::SenderWake(producer));
    }

    // ---- sampling ----------------------------------------------------------

    fn on_tick(&mut self) {
        let now = self.clock.now();
        let now_secs = now / NANOS_PER_SEC;
        let ts = EXPORT_EPOCH_BASE + now_secs;
        let interval = TICK_INTERVAL_SECS as f64;
        let cpu_ns = self.cluster.profile.cpu_cost_per_msg as f64;
        let cores = self.cluster.profile.cores as f64;

        // Host task counts: live senders (one runnable plus CPU
        // core-equivalents of their send rate), the broker appender's
        // core-equivalents, and one io-waiting task per queued disk job.
        let host_count = self.cluster.hosts.len();
        let mut tasks = vec![0.0f64; host_count];
        for s in &self.senders {
            if s.phase != Phase::Finished {
                let rate = s.sent_window as f64 / interval;
                tasks[(s.host - 1) as usize] += 1.0 + cpu_ns * rate / 1e9;
            }
        }
        for (h, t) in tasks.iter_mut().enumerate() {
            if let Some(b) = self.cluster.hosts[h].broker {
                let append_rate = self.append_window[h] as f64 / interval;
                *t += cpu_ns * append_rate / 1e9;
                *t += self.cluster.disks[(b - 1) as usize].depth() as f64;
            }
        }

        let mut points: Vec<MetricPoint> = Vec::with_capacity(4 + host_count * 3);
        for (h, t) in tasks.iter().enumerate() {
            let host = &mut self.cluster.hosts[h];
            let load = host.load.sample(*t);
            host.throttle = if *t > cores { cores / *t } else { 1.0 };
            points.push(MetricPoint::new(path_load(&host.name), load, ts).unwrap());
            let eth0 = host.eth0.packet_meter.tick();
            let lo = host.lo.packet_meter.tick();
            points.push(MetricPoint::new(path_if_packets(&host.name, "eth0"), eth0, ts).unwrap());
            points.push(MetricPoint::new(path_if_packets(&host.name, "lo"), lo, ts).unwrap());
        }
        let mps = self.cluster.messages_in.tick();
        let bps = self.cluster.bytes_in.tick();
        points.push(MetricPoint::new(PATH_MESSAGES_IN, mps, ts).unwrap());
        points.push(MetricPoint::new(PATH_BYTES_IN, bps, ts).unwrap());
        for p in &points {
            self.store.ingest(p);
        }

        for s in &mut self.senders {
            s.sent_window = 0;
        }
        for w in &mut self.append_window {
            *w = 0;
        }

        if now < self.duration_ns {
            self.queue.push(
                now + TICK_INTERVAL_SECS * NANOS_PER_SEC,
                EventClass::Tick,
                0,
                Ev::Tick,
            );
        }
    }
}

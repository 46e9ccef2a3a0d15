//! Monitoring pipeline: one-minute-rate meters, cumulative counters, the
//! Graphite plaintext protocol (emit and ingest), a fixed-interval series
//! store, and TSV export of stored series.
//!
//! The one-minute rate is an exponentially weighted moving average ticked on
//! a 5 s grid with `alpha = 1 - e^(-5/60)` — the standard meter behind the
//! `OneMinuteRate` KPI brokers expose over JMX. Metric paths mirror a
//! jmxtrans/collectd stack so existing Graphite dashboards attach unchanged:
//!
//! - `kafka.server.BrokerTopicMetrics.MessagesInPerSec.OneMinuteRate`
//! - `kafka.server.BrokerTopicMetrics.BytesInPerSec.OneMinuteRate`
//! - `collectd.<host>.load.load.shortterm`
//! - `collectd.<host>.interface-<if>.if_packets.rx`

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use thiserror::Error;

/// Meter tick interval, seconds.
pub const TICK_INTERVAL_SECS: u64 = 5;
/// One-minute EWMA smoothing constant for the 5 s tick grid.
pub fn one_minute_alpha() -> f64 {
    1.0 - (-(TICK_INTERVAL_SECS as f64) / 60.0).exp()
}

/// Default Graphite plaintext ingest port.
pub const DEFAULT_GRAPHITE_PORT: u16 = 2003;

/// Default series retention: 24 h of 5 s points.
pub const DEFAULT_RETENTION_POINTS: usize = 17_280;

pub const PATH_MESSAGES_IN: &str = "kafka.server.BrokerTopicMetrics.MessagesInPerSec.OneMinuteRate";
pub const PATH_BYTES_IN: &str = "kafka.server.BrokerTopicMetrics.BytesInPerSec.OneMinuteRate";

pub fn path_load(host: &str) -> String {
    format!("collectd.{host}.load.load.shortterm")
}

pub fn path_if_packets(host: &str, iface: &str) -> String {
    format!("collectd.{host}.interface-{iface}.if_packets.rx")
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("mark count must be >= 1")]
    InvalidMark,
    #[error("malformed metric line: {0}")]
    MalformedLine(String),
    #[error("invalid metric path: {0}")]
    InvalidPath(String),
    #[error("unknown series: {0}")]
    UnknownSeries(String),
}

/// EWMA meter yielding the one-minute events/second rate.
///
/// `mark` accumulates counts; `tick` folds the accumulated count into the
/// rate once per 5 s window. The first tick initializes the rate to the
/// instantaneous window rate instead of averaging from zero.
#[derive(Debug, Clone)]
pub struct RateMeter {
    count_since_tick: u64,
    one_minute_rate: f64,
    initialized: bool,
    alpha: f64,
    /// Cumulative count over the meter's whole life.
    total: u64,
}

impl RateMeter {
    pub fn new() -> Self {
        RateMeter {
            count_since_tick: 0,
            one_minute_rate: 0.0,
            initialized: false,
            alpha: one_minute_alpha(),
            total: 0,
        }
    }

    pub fn mark(&mut self, n: u64) -> Result<(), MetricsError> {
        if n == 0 {
            return Err(MetricsError::InvalidMark);
        }
        self.count_since_tick += n;
        self.total += n;
        Ok(())
    }

    /// Fold the current 5 s window into the rate and reset the window count.
    pub fn tick(&mut self) -> f64 {
        let inst = self.count_since_tick as f64 / TICK_INTERVAL_SECS as f64;
        self.count_since_tick = 0;
        if self.initialized {
            self.one_minute_rate += self.alpha * (inst - self.one_minute_rate);
        } else {
            self.one_minute_rate = inst;
            self.initialized = true;
        }
        self.one_minute_rate
    }

    pub fn one_minute_rate(&self) -> f64 {
        self.one_minute_rate
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }
}

impl Default for RateMeter {
    fn default() -> Self {
        Self::new()
    }
}

/// One-minute system-load average on the same 5 s grid:
/// `load' = load * e^(-5/60) + tasks * (1 - e^(-5/60))`.
#[derive(Debug, Clone, Default)]
pub struct LoadAvg {
    load_1m: f64,
}

impl LoadAvg {
    pub fn new() -> Self {
        LoadAvg { load_1m: 0.0 }
    }

    pub fn sample(&mut self, tasks: f64) -> f64 {
        let alpha = one_minute_alpha();
        self.load_1m += alpha * (tasks - self.load_1m);
        self.load_1m
    }

    pub fn value(&self) -> f64 {
        self.load_1m
    }
}

/// One sample on the wire: dot-separated path, finite value, epoch seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricPoint {
    pub path: String,
    pub value: f64,
    pub ts: u64,
}

impl MetricPoint {
    pub fn new(path: impl Into<String>, value: f64, ts: u64) -> Result<Self, MetricsError> {
        let path = path.into();
        if path.is_empty() || path.contains(char::is_whitespace) {
            return Err(MetricsError::InvalidPath(path));
        }
        if !value.is_finite() {
            return Err(MetricsError::InvalidPath(format!(
                "non-finite value for {path}"
            )));
        }
        Ok(MetricPoint { path, value, ts })
    }
}

/// Render a value the way the exports do: shortest decimal that round-trips.
fn render_value(v: f64) -> String {
    format!("{v}")
}

/// Encode a point as one Graphite plaintext line: `<path> <value> <ts>\n`.
pub fn encode_line(point: &MetricPoint) -> String {
    format!(
        "{} {} {}\n",
        point.path,
        render_value(point.value),
        point.ts
    )
}

/// Parse one plaintext line. The trailing newline is optional; fields are
/// separated by single spaces.
pub fn parse_line(line: &str) -> Result<MetricPoint, MetricsError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let mut fields = line.split(' ');
    let (path, value, ts) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
        (Some(p), Some(v), Some(t), None) if !p.is_empty() => (p, v, t),
        _ => return Err(MetricsError::MalformedLine(line.into())),
    };
    let value: f64 = value
        .parse()
        .map_err(|_| MetricsError::MalformedLine(line.into()))?;
    if !value.is_finite() {
        return Err(MetricsError::MalformedLine(line.into()));
    }
    let ts: u64 = ts
        .parse()
        .map_err(|_| MetricsError::MalformedLine(line.into()))?;
    MetricPoint::new(path, value, ts)
}

/// Fixed-resolution time-series store, one bounded ring per path.
///
/// Ingested timestamps snap down to the 5 s grid; writing a timestamp that
/// already exists overwrites the stored value, and timestamps older than the
/// newest stored point are dropped.
#[derive(Debug)]
pub struct SeriesStore {
    series: HashMap<String, Vec<(u64, f64)>>,
    retention: usize,
    resolution: u64,
}

impl SeriesStore {
    pub fn new() -> Self {
        Self::with_retention(DEFAULT_RETENTION_POINTS)
    }

    pub fn with_retention(points: usize) -> Self {
        SeriesStore {
            series: HashMap::new(),
            retention: points.max(1),
            resolution: TICK_INTERVAL_SECS,
        }
    }

    pub fn ingest(&mut self, point: &MetricPoint) {
        let ts = point.ts - point.ts % self.resolution;
        let ring = self.series.entry(point.path.clone()).or_default();
        match ring.last() {
            Some(&(last, _)) if ts == last => {
                ring.last_mut().unwrap().1 = point.value;
            }
            Some(&(last, _)) if ts < last => {} // stale, dropped
            _ => {
                ring.push((ts, point.value));
                if ring.len() > self.retention {
                    let excess = ring.len() - self.retention;
                    ring.drain(..excess);
                }
            }
        }
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(|s| s.as_str())
    }

    pub fn points(&self, path: &str) -> Option<&[(u64, f64)]> {
        self.series.get(path).map(|v| v.as_slice())
    }

    /// Export one series over `[t0, t1]` (epoch seconds, inclusive) as a
    /// two-column tab-separated document. Time is rendered relative to `t0`.
    pub fn export_tsv(&self, path: &str, t0: u64, t1: u64) -> Result<String, MetricsError> {
        let ring = self
            .series
            .get(path)
            .ok_or_else(|| MetricsError::UnknownSeries(path.into()))?;
        let mut out = String::from("Time\tValue\n");
        for &(ts, value) in ring {
            if ts >= t0 && ts <= t1 {
                out.push_str(&format!("{}\t{}\n", ts - t0, render_value(value)));
            }
        }
        Ok(out)
    }
}

impl Default for SeriesStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Plaintext-protocol TCP listener feeding a shared [`SeriesStore`].
///
/// Malformed lines are counted and dropped; they never terminate a
/// connection or the accept loop.
pub struct GraphiteServer {
    addr: std::net::SocketAddr,
    store: Arc<Mutex<SeriesStore>>,
    malformed: Arc<AtomicU64>,
    shutdown: Arc<AtomicBool>,
    accept_handle: Option<JoinHandle<()>>,
}

impl GraphiteServer {
    /// Bind to `addr` (use port 0 for an ephemeral port) and start serving.
    pub fn bind(addr: &str, store: Arc<Mutex<SeriesStore>>) -> std::io::Result<GraphiteServer> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let malformed = Arc::new(AtomicU64::new(0));
        let shutdown = Arc::new(AtomicBool::new(false));

        let accept_store = Arc::clone(&store);
        let accept_malformed = Arc::clone(&malformed);
        let accept_shutdown = Arc::clone(&shutdown);
        let accept_handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let store = Arc::clone(&accept_store);
                let malformed = Arc::clone(&accept_malformed);
                std::thread::spawn(move || serve_connection(stream, store, malformed));
            }
        });

        Ok(GraphiteServer {
            addr,
            store,
            malformed,
            shutdown,
            accept_handle: Some(accept_handle),
        })
    }

    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.addr
    }

    pub fn malformed_count(&self) -> u64 {
        self.malformed.load(Ordering::SeqCst)
    }

    pub fn store(&self) -> Arc<Mutex<SeriesStore>> {
        Arc::clone(&self.store)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Kick the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept_handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for GraphiteServer {
    fn drop(&mut self) {
        if self.accept_handle.is_some() {
            self.stop();
        }
    }
}

fn serve_connection(stream: TcpStream, store: Arc<Mutex<SeriesStore>>, malformed: Arc<AtomicU64>) {
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(point) => store.lock().unwrap().ingest(&point),
            Err(_) => {
                malformed.fetch_add(1, Ordering::SeqCst);
            }
        }
    }
}

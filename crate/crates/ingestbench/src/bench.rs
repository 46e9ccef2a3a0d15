//! Run orchestrator and analyst: parses run configs, provisions the topic
//! and senders, executes the protocol on the virtual or real clock, detects
//! steady input rates and emits the summary report.
//!
//! Config files are flat, line-oriented `key = value` text under `[section]`
//! headers. Sections: `topic`, `producer`, `resources`, `senders.N` (1-based,
//! consecutive) and `run`. Unknown keys are a hard error naming the key and
//! line. Producer and topic defaults are the stock values, so an empty
//! section is a valid way to say "defaults".
//!
//! A steady rate is the central-window mean of the one-minute rate when the
//! window's coefficient of variation stays under a threshold: the first
//! `ramp_skip` seconds (meter ramp) and last `tail_skip` seconds (shutdown
//! edge) are excluded, and steadiness means `stdev/mean <= cv_max`. The
//! defaults (120 s, 60 s, 0.05) formalize what is otherwise judged visually
//! on a dashboard, and the config can override them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::clock::TimeMode;
use crate::domain::{AcksLevel, ProducerProps, ResourceProfile, TimestampType, TopicConfig};
use crate::loadgen::{
    DataSourceSpec, Locality, SenderSpec, SourceKind, DEFAULT_READ_LATENCY_NS,
};
use crate::metrics::{PATH_BYTES_IN, PATH_MESSAGES_IN};
use crate::runtime::{self, RuntimeError, SimOutcome, SimSpec, EXPORT_EPOCH_BASE};

/// Environment variable pointing at a directory of `<name>.profile` files.
pub const PROFILE_DIR_ENV: &str = "INGESTBENCH_PROFILE_DIR";

pub const DEFAULT_RAMP_SKIP_S: u64 = 120;
pub const DEFAULT_TAIL_SKIP_S: u64 = 60;
pub const DEFAULT_CV_MAX: f64 = 0.05;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("line {line}: {message}")]
    TypeMismatch { line: usize, message: String },
    #[error("series spans {span_s} s; steadiness needs more than {need_s} s")]
    InsufficientData { span_s: u64, need_s: u64 },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("{0}")]
    Io(String),
}

impl BenchError {
    /// Process exit code: 2 for configuration problems, 3 for runtime ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::UnknownKey { .. }
            | BenchError::MissingSection(_)
            | BenchError::TypeMismatch { .. } => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyParams {
    pub ramp_skip_s: u64,
    pub tail_skip_s: u64,
    pub cv_max: f64,
}

impl Default for SteadyParams {
    fn default() -> Self {
        SteadyParams {
            ramp_skip_s: DEFAULT_RAMP_SKIP_S,
            tail_skip_s: DEFAULT_TAIL_SKIP_S,
            cv_max: DEFAULT_CV_MAX,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSettings {
    pub duration_s: u64,
    pub mode: TimeMode,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub label: Option<String>,
    pub steady: SteadyParams,
}

/// A fully-resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub topic: TopicConfig,
    pub producer: ProducerProps,
    pub resources: ResourceProfile,
    pub profile_name: String,
    pub brokers: u32,
    pub senders: Vec<SenderSpec>,
    pub run: RunSettings,
}

/// Summary fields of one executed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub label: String,
    pub configured_mps: f64,
    pub steady: bool,
    pub steady_rate: f64,
    pub steady_bytes: f64,
    pub peak_rate: f64,
}

/// A finished run: the report row plus everything the run produced.
pub struct RunOutcome {
    pub result: RunResult,
    pub sim: SimOutcome,
    pub config_echo: String,
}

// ---------------------------------------------------------------------------
// config parsing

struct RawItem {
    line: usize,
    key: String,
    value: String,
}

type Sections = BTreeMap<String, Vec<RawItem>>;

fn split_sections(text: &str) -> Result<Sections, BenchError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(BenchError::TypeMismatch {
                    line,
                    message: format!("malformed section header `{trimmed}`"),
                });
            };
            let name = name.trim().to_string();
            let known = matches!(name.as_str(), "topic" | "producer" | "resources" | "run")
                || parse_sender_section(&name).is_some();
            if !known {
                return Err(BenchError::UnknownKey {
                    key: format!("[{name}]"),
                    line,
                });
            }
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(BenchError::TypeMismatch {
                line,
                message: format!("expected `key = value`, got `{trimmed}`"),
            });
        };
        let Some(section) = current.clone() else {
            return Err(BenchError::TypeMismatch {
                line,
                message: "key before any [section] header".into(),
            });
        };
        sections.entry(section).or_default().push(RawItem {
            line,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(sections)
}

fn parse_sender_section(name: &str) -> Option<u32> {
    let n = name.strip_prefix("senders.")?;
    n.parse::<u32>().ok().filter(|n| *n >= 1)
}

fn parse_u64(item: &RawItem) -> Result<u64, BenchError> {
    item.value.parse().map_err(|_| BenchError::TypeMismatch {
        line: item.line,
        message: format!("`{}` expects an integer, got `{}`", item.key, item.value),
    })
}

fn parse_u32(item: &RawItem) -> Result<u32, BenchError> {
    item.value.parse().map_err(|_| BenchError::TypeMismatch {
        line: item.line,
        message: format!("`{}` expects an integer, got `{}`", item.key, item.value),
    })
}

fn parse_f64(item: &RawItem) -> Result<f64, BenchError> {
    item.value.parse().map_err(|_| BenchError::TypeMismatch {
        line: item.line,
        message: format!("`{}` expects a number, got `{}`", item.key, item.value),
    })
}

fn parse_bool(item: &RawItem) -> Result<bool, BenchError> {
    match item.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(BenchError::TypeMismatch {
            line: item.line,
            message: format!("`{}` expects true/false, got `{other}`", item.key),
        }),
    }
}

/// Look up a named resource profile: the built-in `paper-hw`, else a
/// `<name>.profile` file in `$INGESTBENCH_PROFILE_DIR` holding flat
/// `key = value` resource lines.
fn resolve_profile(name: &str, line: usize) -> Result<(ResourceProfile, u64), BenchError> {
    if name == "paper-hw" {
        return Ok((ResourceProfile::paper_hw(), DEFAULT_READ_LATENCY_NS));
    }
    let dir = std::env::var(PROFILE_DIR_ENV).map_err(|_| BenchError::TypeMismatch {
        line,
        message: format!("unknown profile `{name}` and {PROFILE_DIR_ENV} is not set"),
    })?;
    let path = Path::new(&dir).join(format!("{name}.profile"));
    let text = std::fs::read_to_string(&path).map_err(|e| BenchError::TypeMismatch {
        line,
        message: format!("profile `{name}`: {}: {e}", path.display()),
    })?;
    let mut profile = ResourceProfile::paper_hw();
    let mut read_latency = DEFAULT_READ_LATENCY_NS;
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(BenchError::TypeMismatch {
                line: i + 1,
                message: format!("profile `{name}`: expected `key = value`"),
            });
        };
        let item = RawItem {
            line: i + 1,
            key: key.trim().into(),
            value: value.trim().into(),
        };
        if !apply_resource_key(&mut profile, &mut read_latency, &item)? {
            return Err(BenchError::UnknownKey {
                key: item.key,
                line: item.line,
            });
        }
    }
    Ok((profile, read_latency))
}

fn apply_resource_key(
    profile: &mut ResourceProfile,
    read_latency: &mut u64,
    item: &RawItem,
) -> Result<bool, BenchError> {
    match item.key.as_str() {
        "disk_write_bw" => profile.disk_write_bw = parse_f64(item)?,
        "effective_disk_bw" => profile.effective_disk_bw = parse_f64(item)?,
        "nic_bw" => profile.nic_bw = parse_f64(item)?,
        "loopback_bw" => profile.loopback_bw = parse_f64(item)?,
        "cores" => profile.cores = parse_u32(item)?,
        "cpu_cost_per_msg" => profile.cpu_cost_per_msg = parse_u64(item)?,
        "mtu" => profile.mtu_bytes = parse_u64(item)?,
        "replication_delay" => profile.replication_delay = parse_u64(item)?,
        "read_latency" => *read_latency = parse_u64(item)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Command-line overrides applied on top of the config file. The seed
/// override applies before sender source seeds are derived from it.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<TimeMode>,
    pub out_dir: Option<PathBuf>,
}

/// Parse a run configuration. Defaults are applied per section; unknown
/// keys and malformed values are hard errors carrying the line number.
pub fn parse_config(text: &str) -> Result<RunConfig, BenchError> {
    parse_config_with(text, &Overrides::default())
}

pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<RunConfig, BenchError> {
    let sections = split_sections(text)?;

    // [run]
    let mut run = RunSettings {
        duration_s: 600,
        mode: TimeMode::VirtualTime,
        seed: 1,
        out_dir: None,
        label: None,
        steady: SteadyParams::default(),
    };
    if let Some(items) = sections.get("run") {
        for item in items {
            match item.key.as_str() {
                "duration" => run.duration_s = parse_u64(item)?,
                "mode" => {
                    run.mode = TimeMode::parse(&item.value).ok_or(BenchError::TypeMismatch {
                        line: item.line,
                        message: format!("`mode` is virtual or realtime, got `{}`", item.value),
                    })?
                }
                "seed" => run.seed = parse_u64(item)?,
                "out_dir" => run.out_dir = Some(PathBuf::from(&item.value)),
                "label" => run.label = Some(item.value.clone()),
                "steady_ramp_skip" => run.steady.ramp_skip_s = parse_u64(item)?,
                "steady_tail_skip" => run.steady.tail_skip_s = parse_u64(item)?,
                "steady_cv_max" => run.steady.cv_max = parse_f64(item)?,
                _ => {
                    return Err(BenchError::UnknownKey {
                        key: item.key.clone(),
                        line: item.line,
                    })
                }
            }
        }
    }
    if let Some(seed) = overrides.seed {
        run.seed = seed;
    }
    if let Some(mode) = overrides.mode {
        run.mode = mode;
    }
    if let Some(out_dir) = &overrides.out_dir {
        run.out_dir = Some(out_dir.clone());
    }

    // [topic]
    let mut topic = TopicConfig::default();
    if let Some(items) = sections.get("topic") {
        for item in items {
            match item.key.as_str() {
                "name" => topic.name = item.value.clone(),
                "partitions" => topic.partitions = parse_u32(item)?,
                "replication_factor" => topic.replication_factor = parse_u32(item)?,
                "timestamp_type" => {
                    topic.timestamp_type = match item.value.as_str() {
                        "CreateTime" => TimestampType::CreateTime,
                        "LogAppendTime" => TimestampType::LogAppendTime,
                        other => {
                            return Err(BenchError::TypeMismatch {
                                line: item.line,
                                message: format!(
                                    "`timestamp_type` is CreateTime or LogAppendTime, got `{other}`"
                                ),
                            })
                        }
                    }
                }
                _ => {
                    return Err(BenchError::UnknownKey {
                        key: item.key.clone(),
                        line: item.line,
                    })
                }
            }
        }
    }

    // [producer] — stock defaults when the section is empty or absent.
    let mut producer = ProducerProps::default();
    if let Some(items) = sections.get("producer") {
        for item in items {
            match item.key.as_str() {
                "batch_size" => producer.batch_size_bytes = parse_u64(item)?,
                "buffer_memory" => producer.buffer_memory_bytes = parse_u64(item)?,
                "acks" => {
                    producer.acks =
                        AcksLevel::parse(&item.value).ok_or(BenchError::TypeMismatch {
                            line: item.line,
                            message: format!("`acks` is 0, 1 or all, got `{}`", item.value),
                        })?
                }
                "min_insync_replicas" => producer.min_insync_replicas = parse_u32(item)?,
                _ => {
                    return Err(BenchError::UnknownKey {
                        key: item.key.clone(),
                        line: item.line,
                    })
                }
            }
        }
    }

    // [resources]
    let mut profile_name = "paper-hw".to_string();
    let mut profile_line = 0;
    let mut brokers = 3u32;
    let mut overrides: Vec<&RawItem> = Vec::new();
    if let Some(items) = sections.get("resources") {
        for item in items {
            match item.key.as_str() {
                "profile" => {
                    profile_name = item.value.clone();
                    profile_line = item.line;
                }
                "brokers" => brokers = parse_u32(item)?,
                _ => overrides.push(item),
            }
        }
    }
    let (mut resources, mut default_read_latency) = resolve_profile(&profile_name, profile_line)?;
    for item in &overrides {
        if !apply_resource_key(&mut resources, &mut default_read_latency, item)? {
            return Err(BenchError::UnknownKey {
                key: item.key.clone(),
                line: item.line,
            });
        }
    }
    resources.validate().map_err(|e| BenchError::TypeMismatch {
        line: profile_line,
        message: e.to_string(),
    })?;

    if topic.replication_factor > brokers {
        return Err(BenchError::TypeMismatch {
            line: 0,
            message: format!(
                "replication_factor {} exceeds broker count {brokers}",
                topic.replication_factor
            ),
        });
    }
    if topic.partitions == 0 || topic.replication_factor == 0 {
        return Err(BenchError::TypeMismatch {
            line: 0,
            message: "partitions and replication_factor must be >= 1".into(),
        });
    }

    // [senders.N] — consecutive from 1.
    let mut numbered: BTreeMap<u32, &Vec<RawItem>> = BTreeMap::new();
    for (name, items) in &sections {
        if let Some(n) = parse_sender_section(name) {
            numbered.insert(n, items);
        }
    }
    let max = numbered.keys().max().copied().unwrap_or(0);
    if max == 0 {
        return Err(BenchError::MissingSection("senders.1".into()));
    }
    let mut senders = Vec::with_capacity(max as usize);
    for n in 1..=max {
        let Some(items) = numbered.get(&n) else {
            return Err(BenchError::MissingSection(format!("senders.{n}")));
        };
        senders.push(parse_sender(
            n,
            items,
            &run,
            &producer,
            brokers,
            default_read_latency,
        )?);
    }

    Ok(RunConfig {
        topic,
        producer,
        resources,
        profile_name,
        brokers,
        senders,
        run,
    })
}

fn parse_sender(
    n: u32,
    items: &[RawItem],
    run: &RunSettings,
    producer: &ProducerProps,
    _brokers: u32,
    default_read_latency: u64,
) -> Result<SenderSpec, BenchError> {
    let mut delay_ns: Option<u64> = None;
    let mut rate: Option<u64> = None;
    let mut duration_s = run.duration_s;
    let mut read_in_ram = true;
    let mut locality = Locality::Local;
    let mut source_kind: Option<(SourceKind, usize)> = None;
    let mut read_latency = default_read_latency;
    let mut delimiter = '\t';
    let mut last_line = 0;

    for item in items {
        last_line = item.line;
        match item.key.as_str() {
            "delay_ns" => delay_ns = Some(parse_u64(item)?),
            "rate" => rate = Some(parse_u64(item)?),
            "duration" => duration_s = parse_u64(item)?,
            "read_in_ram" => read_in_ram = parse_bool(item)?,
            "read_latency" => read_latency = parse_u64(item)?,
            "delimiter" => {
                delimiter = match item.value.as_str() {
                    "tab" => '\t',
                    s if s.chars().count() == 1 => s.chars().next().unwrap(),
                    other => {
                        return Err(BenchError::TypeMismatch {
                            line: item.line,
                            message: format!("`delimiter` is `tab` or one character, got `{other}`"),
                        })
                    }
                }
            }
            "locality" => {
                locality = match item.value.as_str() {
                    "local" => Locality::Local,
                    other => match other.strip_prefix("remote:") {
                        Some(h) => {
                            let host: u32 =
                                h.parse().map_err(|_| BenchError::TypeMismatch {
                                    line: item.line,
                                    message: format!("`locality` remote host id `{h}` is not an integer"),
                                })?;
                            if host <= 1 {
                                return Err(BenchError::TypeMismatch {
                                    line: item.line,
                                    message:
                                        "remote host 1 is the leader host; use `local`".into(),
                                });
                            }
                            Locality::Remote(host)
                        }
                        None => {
                            return Err(BenchError::TypeMismatch {
                                line: item.line,
                                message: format!(
                                    "`locality` is local or remote:<host>, got `{other}`"
                                ),
                            })
                        }
                    },
                }
            }
            "source" => {
                let v = &item.value;
                let kind = if v == "synthetic" {
                    SourceKind::Synthetic {
                        seed: run.seed.wrapping_add(n as u64 - 1),
                    }
                } else if let Some(seed) = v.strip_prefix("synthetic:") {
                    SourceKind::Synthetic {
                        seed: seed.parse().map_err(|_| BenchError::TypeMismatch {
                            line: item.line,
                            message: format!("synthetic seed `{seed}` is not an integer"),
                        })?,
                    }
                } else if let Some(path) = v.strip_prefix("file:") {
                    SourceKind::DelimitedFile {
                        path: PathBuf::from(path),
                        delimiter,
                    }
                } else {
                    return Err(BenchError::TypeMismatch {
                        line: item.line,
                        message: format!(
                            "`source` is synthetic, synthetic:<seed> or file:<path>, got `{v}`"
                        ),
                    });
                };
                source_kind = Some((kind, item.line));
            }
            _ => {
                return Err(BenchError::UnknownKey {
                    key: item.key.clone(),
                    line: item.line,
                })
            }
        }
    }

    let delay_ns = match (delay_ns, rate) {
        (Some(_), Some(_)) => {
            return Err(BenchError::TypeMismatch {
                line: last_line,
                message: format!("senders.{n}: give `rate` or `delay_ns`, not both"),
            })
        }
        (Some(d), None) if d >= 1 => d,
        (None, Some(r)) if r >= 1 => {
            crate::loadgen::delay_for_rate(r).map_err(|e| BenchError::TypeMismatch {
                line: last_line,
                message: format!("senders.{n}: {e}"),
            })?
        }
        _ => {
            return Err(BenchError::TypeMismatch {
                line: last_line,
                message: format!("senders.{n}: needs a positive `rate` or `delay_ns`"),
            })
        }
    };

    // A file delimiter given after `source` should still apply.
    let kind = match source_kind {
        Some((SourceKind::DelimitedFile { path, .. }, _)) => {
            SourceKind::DelimitedFile { path, delimiter }
        }
        Some((kind, _)) => kind,
        None => SourceKind::Synthetic {
            seed: run.seed.wrapping_add(n as u64 - 1),
        },
    };

    Ok(SenderSpec {
        delay_ns,
        duration_s,
        read_in_ram,
        locality,
        producer: producer.clone(),
        source: DataSourceSpec {
            kind,
            read_latency_ns: read_latency,
        },
    })
}

/// Canonical `key = value` rendering of a parsed config.
pub fn render_config(config: &RunConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[topic]");
    let _ = writeln!(out, "name = {}", config.topic.name);
    let _ = writeln!(out, "partitions = {}", config.topic.partitions);
    let _ = writeln!(
        out,
        "replication_factor = {}",
        config.topic.replication_factor
    );
    let _ = writeln!(
        out,
        "timestamp_type = {}",
        match config.topic.timestamp_type {
            TimestampType::CreateTime => "CreateTime",
            TimestampType::LogAppendTime => "LogAppendTime",
        }
    );
    let _ = writeln!(out, "\n[producer]");
    let _ = writeln!(out, "batch_size = {}", config.producer.batch_size_bytes);
    let _ = writeln!(
        out,
        "buffer_memory = {}",
        config.producer.buffer_memory_bytes
    );
    let _ = writeln!(out, "acks = {}", config.producer.acks.as_str());
    let _ = writeln!(
        out,
        "min_insync_replicas = {}",
        config.producer.min_insync_replicas
    );
    let _ = writeln!(out, "\n[resources]");
    let _ = writeln!(out, "profile = {}", config.profile_name);
    let _ = writeln!(out, "brokers = {}", config.brokers);
    let r = &config.resources;
    let _ = writeln!(out, "disk_write_bw = {}", r.disk_write_bw);
    let _ = writeln!(out, "effective_disk_bw = {}", r.effective_disk_bw);
    let _ = writeln!(out, "nic_bw = {}", r.nic_bw);
    let _ = writeln!(out, "loopback_bw = {}", r.loopback_bw);
    let _ = writeln!(out, "cores = {}", r.cores);
    let _ = writeln!(out, "cpu_cost_per_msg = {}", r.cpu_cost_per_msg);
    let _ = writeln!(out, "mtu = {}", r.mtu_bytes);
    let _ = writeln!(out, "replication_delay = {}", r.replication_delay);
    for (i, s) in config.senders.iter().enumerate() {
        let _ = writeln!(out, "\n[senders.{}]", i + 1);
        let _ = writeln!(out, "delay_ns = {}", s.delay_ns);
        let _ = writeln!(out, "duration = {}", s.duration_s);
        let _ = writeln!(out, "read_in_ram = {}", s.read_in_ram);
        let _ = writeln!(
            out,
            "locality = {}",
            match s.locality {
                Locality::Local => "local".to_string(),
                Locality::Remote(h) => format!("remote:{h}"),
            }
        );
        let _ = writeln!(
            out,
            "source = {}",
            match &s.source.kind {
                SourceKind::Synthetic { seed } => format!("synthetic:{seed}"),
                SourceKind::DelimitedFile { path, .. } => format!("file:{}", path.display()),
            }
        );
        let _ = writeln!(out, "read_latency = {}", s.source.read_latency_ns);
    }
    let _ = writeln!(out, "\n[run]");
    let _ = writeln!(out, "duration = {}", config.run.duration_s);
    let _ = writeln!(out, "mode = {}", config.run.mode.as_str());
    let _ = writeln!(out, "seed = {}", config.run.seed);
    let _ = writeln!(out, "steady_ramp_skip = {}", config.run.steady.ramp_skip_s);
    let _ = writeln!(out, "steady_tail_skip = {}", config.run.steady.tail_skip_s);
    let _ = writeln!(out, "steady_cv_max = {}", config.run.steady.cv_max);
    out
}

// ---------------------------------------------------------------------------
// steadiness

/// Mean, population stdev and size of the central window of `series`
/// (relative-seconds, value) after dropping the ramp and tail skips.
fn window_stats(
    series: &[(u64, f64)],
    params: &SteadyParams,
) -> Result<(f64, f64, usize), BenchError> {
    let (Some(&(t_first, _)), Some(&(t_last, _))) = (series.first(), series.last()) else {
        return Err(BenchError::InsufficientData {
            span_s: 0,
            need_s: params.ramp_skip_s + params.tail_skip_s + 60,
        });
    };
    let span = t_last - t_first;
    let need = params.ramp_skip_s + params.tail_skip_s + 60;
    if span <= need {
        return Err(BenchError::InsufficientData {
            span_s: span,
            need_s: need,
        });
    }
    let lo = t_first + params.ramp_skip_s;
    let hi = t_last - params.tail_skip_s;
    let window: Vec<f64> = series
        .iter()
        .filter(|(t, _)| *t >= lo && *t <= hi)
        .map(|(_, v)| *v)
        .collect();
    let n = window.len();
    let mean = window.iter().sum::<f64>() / n as f64;
    let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Ok((mean, var.sqrt(), n))
}

/// Steady-rate detection: central-window mean and the CV test.
pub fn detect_steady(
    series: &[(u64, f64)],
    params: &SteadyParams,
) -> Result<(bool, f64), BenchError> {
    let (mean, stdev, _) = window_stats(series, params)?;
    let steady = if mean == 0.0 {
        stdev == 0.0
    } else {
        stdev / mean.abs() <= params.cv_max
    };
    Ok((steady, mean))
}

// ---------------------------------------------------------------------------
// execution

/// Run a configured scenario end to end: create the topic, start the
/// senders, run for the configured duration, flush, detect steadiness and
/// export everything to the output directory (when one is set).
pub fn execute(config: &RunConfig) -> Result<RunOutcome, BenchError> {
    let spec = SimSpec {
        profile: config.resources.clone(),
        brokers: config.brokers,
        topic: config.topic.clone(),
        senders: config.senders.clone(),
        duration_s: config.run.duration_s,
        mode: config.run.mode,
    };
    let sim = runtime::run(&spec)?;

    let mps_series = relative_series(&sim, PATH_MESSAGES_IN);
    let bytes_series = relative_series(&sim, PATH_BYTES_IN);

    let (steady, steady_rate, steady_bytes) =
        match detect_steady(&mps_series, &config.run.steady) {
            Ok((steady, rate)) => {
                let bytes = window_stats(&bytes_series, &config.run.steady)
                    .map(|(m, _, _)| m)
                    .unwrap_or(0.0);
                (steady, rate, bytes)
            }
            // Short runs cannot establish steadiness; report the plain mean
            // flagged unsteady.
            Err(BenchError::InsufficientData { .. }) => {
                let mean = |s: &[(u64, f64)]| {
                    if s.is_empty() {
                        0.0
                    } else {
                        s.iter().map(|(_, v)| *v).sum::<f64>() / s.len() as f64
                    }
                };
                (false, mean(&mps_series), mean(&bytes_series))
            }
            Err(e) => return Err(e),
        };
    let peak_rate = mps_series.iter().map(|(_, v)| *v).fold(0.0, f64::max);

    let label = config
        .run
        .label
        .clone()
        .or_else(|| {
            config.run.out_dir.as_ref().map(|d| {
                d.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "run".into())
            })
        })
        .unwrap_or_else(|| "run".into());
    let configured_mps = config.senders.iter().map(|s| s.configured_mps()).sum();

    let result = RunResult {
        label,
        configured_mps,
        steady,
        steady_rate,
        steady_bytes,
        peak_rate,
    };
    let config_echo = render_config(config);
    let outcome = RunOutcome {
        result,
        sim,
        config_echo,
    };

    if let Some(dir) = &config.run.out_dir {
        write_outputs(dir, config, &outcome).inspect_err(|_| {
            let _ = std::fs::remove_dir_all(dir.join("series"));
        })?;
    }
    Ok(outcome)
}

fn relative_series(sim: &SimOutcome, path: &str) -> Vec<(u64, f64)> {
    sim.store
        .points(path)
        .map(|pts| {
            pts.iter()
                .map(|(ts, v)| (ts - EXPORT_EPOCH_BASE, *v))
                .collect()
        })
        .unwrap_or_default()
}

fn write_outputs(dir: &Path, config: &RunConfig, outcome: &RunOutcome) -> Result<(), BenchError> {
    let io = |e: std::io::Error| BenchError::Io(e.to_string());
    let series_dir = dir.join("series");
    std::fs::create_dir_all(&series_dir).map_err(io)?;

    let t0 = EXPORT_EPOCH_BASE;
    let t1 = EXPORT_EPOCH_BASE + config.run.duration_s;
    let mut paths: Vec<&str> = outcome.sim.store.paths().collect();
    paths.sort_unstable();
    for path in paths {
        let doc = outcome
            .sim
            .store
            .export_tsv(path, t0, t1)
            .map_err(|e| BenchError::Io(e.to_string()))?;
        std::fs::write(series_dir.join(format!("{path}.tsv")), doc).map_err(io)?;
    }

    std::fs::write(dir.join("summary.tsv"), summary_tsv(std::slice::from_ref(&outcome.result))).map_err(io)?;
    std::fs::write(dir.join("config.echo"), &outcome.config_echo).map_err(io)?;

    let meta = format!(
        "seed = {}\nmode = {}\nduration_s = {}\nbrokers = {}\nprofile = {}\nepoch_base = {}\nversion = {}\n",
        config.run.seed,
        config.run.mode.as_str(),
        config.run.duration_s,
        config.brokers,
        config.profile_name,
        EXPORT_EPOCH_BASE,
        env!("CARGO_PKG_VERSION"),
    );
    std::fs::write(dir.join("run.meta"), meta).map_err(io)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// reports

const SUMMARY_HEADER: &str = "label\tconfigured_mps\tsteady\tsteady_rate\tsteady_bytes\tpeak_rate";

/// Machine-readable rows, one per run, sorted descending by steady rate.
pub fn summary_tsv(results: &[RunResult]) -> String {
    let mut rows: Vec<&RunResult> = results.iter().collect();
    rows.sort_by(|a, b| b.steady_rate.total_cmp(&a.steady_rate));
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.label,
            r.configured_mps,
            if r.steady { "yes" } else { "no" },
            r.steady_rate,
            r.steady_bytes,
            r.peak_rate
        );
    }
    out
}

/// Plain-text table over the same rows and order as [`summary_tsv`].
pub fn summary_table(results: &[RunResult]) -> String {
    let mut rows: Vec<&RunResult> = results.iter().collect();
    rows.sort_by(|a, b| b.steady_rate.total_cmp(&a.steady_rate));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:>14} {:>7} {:>13} {:>14} {:>13}",
        "label", "configured", "steady", "steady_rate", "steady_bytes", "peak_rate"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<28} {:>14.0} {:>7} {:>13.1} {:>14.0} {:>13.1}",
            r.label,
            r.configured_mps,
            if r.steady { "yes" } else { "no" },
            r.steady_rate,
            r.steady_bytes,
            r.peak_rate
        );
    }
    out
}

/// Parse rows back from a `summary.tsv` document.
pub fn parse_summary_tsv(text: &str) -> Result<Vec<RunResult>, BenchError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SUMMARY_HEADER => {}
        other => {
            return Err(BenchError::Io(format!(
                "not a summary.tsv (header {other:?})"
            )))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(BenchError::Io(format!("summary row {} malformed", i + 2)));
        }
        let num = |s: &str| -> Result<f64, BenchError> {
            s.parse()
                .map_err(|_| BenchError::Io(format!("summary row {}: bad number `{s}`", i + 2)))
        };
        out.push(RunResult {
            label: fields[0].to_string(),
            configured_mps: num(fields[1])?,
            steady: fields[2] == "yes",
            steady_rate: num(fields[3])?,
            steady_bytes: num(fields[4])?,
            peak_rate: num(fields[5])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "[senders.1]\nrate = 1000\n";

    #[test]
    fn empty_producer_section_yields_stock_defaults() {
        let text = "[producer]\n\n[senders.1]\nrate = 1000\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.producer.batch_size_bytes, 16_384);
        assert_eq!(cfg.producer.buffer_memory_bytes, 33_554_432);
        assert_eq!(cfg.producer.acks, AcksLevel::Acks0);
        assert_eq!(cfg.producer.min_insync_replicas, 1);
        // And the topic defaults too.
        assert_eq!(cfg.topic.partitions, 1);
        assert_eq!(cfg.topic.replication_factor, 1);
    }

    #[test]
    fn acks_2_is_a_type_mismatch() {
        let text = "[producer]\nacks = 2\n\n[senders.1]\nrate = 1000\n";
        match parse_config(text) {
            Err(BenchError::TypeMismatch { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("acks"), "{message}");
            }
            other => panic!("expected TypeMismatch, got {other:?}", other = other.err()),
        }
    }

    #[test]
    fn missing_senders_section_is_reported() {
        assert!(matches!(
            parse_config("[producer]\n"),
            Err(BenchError::MissingSection(s)) if s == "senders.1"
        ));
        let gap = "[senders.1]\nrate = 10\n[senders.3]\nrate = 10\n";
        assert!(matches!(
            parse_config(gap),
            Err(BenchError::MissingSection(s)) if s == "senders.2"
        ));
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let text = "[producer]\nbatch_sizee = 1\n\n[senders.1]\nrate = 1000\n";
        match parse_config(text) {
            Err(BenchError::UnknownKey { key, line }) => {
                assert_eq!(key, "batch_sizee");
                assert_eq!(line, 2);
            }
            other => panic!("expected UnknownKey, got {other:?}", other = other.err()),
        }
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(matches!(
            parse_config("[produxer]\n"),
            Err(BenchError::UnknownKey { key, line: 1 }) if key == "[produxer]"
        ));
    }

    #[test]
    fn rate_and_delay_are_mutually_exclusive() {
        let text = "[senders.1]\nrate = 1000\ndelay_ns = 100\n";
        assert!(matches!(
            parse_config(text),
            Err(BenchError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn rate_converts_to_exact_delay_for_divisors() {
        let cfg = parse_config("[senders.1]\nrate = 100000\n").unwrap();
        assert_eq!(cfg.senders[0].delay_ns, 10_000);
        let cfg = parse_config("[senders.1]\ndelay_ns = 4000\n").unwrap();
        assert_eq!(cfg.senders[0].configured_mps(), 250_000.0);
    }

    #[test]
    fn remote_host_one_is_rejected() {
        let text = "[senders.1]\nrate = 10\nlocality = remote:1\n";
        assert!(matches!(
            parse_config(text),
            Err(BenchError::TypeMismatch { .. })
        ));
        let cfg = parse_config("[senders.1]\nrate = 10\nlocality = remote:2\n").unwrap();
        assert_eq!(cfg.senders[0].locality, Locality::Remote(2));
    }

    #[test]
    fn replication_beyond_brokers_fails_at_parse() {
        let text = "[topic]\nreplication_factor = 4\n\n[senders.1]\nrate = 10\n";
        assert!(matches!(
            parse_config(text),
            Err(BenchError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn sender_seeds_derive_from_run_seed_and_index() {
        let text = "[run]\nseed = 40\n\n[senders.1]\nrate = 10\n\n[senders.2]\nrate = 10\n";
        let cfg = parse_config(text).unwrap();
        let seeds: Vec<u64> = cfg
            .senders
            .iter()
            .map(|s| match s.source.kind {
                SourceKind::Synthetic { seed } => seed,
                _ => panic!(),
            })
            .collect();
        assert_eq!(seeds, vec![40, 41]);
    }

    #[test]
    fn config_echo_reparses_to_same_config() {
        let text = "[producer]\nacks = 1\nbatch_size = 65540\n\n[senders.1]\nrate = 250000\nlocality = remote:3\nread_in_ram = false\n\n[run]\nduration = 300\nseed = 9\n";
        let cfg = parse_config(text).unwrap();
        let echo = render_config(&cfg);
        let cfg2 = parse_config(&echo).unwrap();
        assert_eq!(cfg.producer, cfg2.producer);
        assert_eq!(cfg.senders, cfg2.senders);
        assert_eq!(cfg.run.duration_s, cfg2.run.duration_s);
        assert_eq!(cfg.run.seed, cfg2.run.seed);
    }

    #[test]
    fn exit_codes_distinguish_config_from_runtime() {
        assert_eq!(parse_config("[produxer]\n").unwrap_err().exit_code(), 2);
        assert!(parse_config(MINIMAL).is_ok());
        assert_eq!(BenchError::Io("x".into()).exit_code(), 3);
    }

    // -- steadiness ---------------------------------------------------------

    fn grid(values: impl Iterator<Item = f64>) -> Vec<(u64, f64)> {
        values
            .enumerate()
            .map(|(i, v)| (i as u64 * 5, v))
            .collect()
    }

    #[test]
    fn constant_series_is_steady_at_its_value() {
        let series = grid(std::iter::repeat_n(250_000.0, 121)); // 600 s
        let (steady, rate) = detect_steady(&series, &SteadyParams::default()).unwrap();
        assert!(steady);
        assert_eq!(rate, 250_000.0);
    }

    #[test]
    fn alternating_series_fails_the_cv_test() {
        // Alternating 300K/420K: mean 360K, stdev 60K, CV 1/6 > 0.05.
        let series = grid((0..121).map(|i| if i % 2 == 0 { 300_000.0 } else { 420_000.0 }));
        let (steady, rate) = detect_steady(&series, &SteadyParams::default()).unwrap();
        assert!(!steady);
        assert!((rate - 360_000.0).abs() < 1_500.0, "rate {rate}");
    }

    #[test]
    fn ramp_to_plateau_is_steady_after_skip() {
        // One-minute EWMA ramp to a plateau: 86.5% converged at the 120 s
        // skip, so the central window sits near the plateau.
        let r = 100_000.0;
        let series = grid((0..121).map(|i| {
            let t = i as f64 * 5.0;
            r * (1.0 - (-t / 60.0).exp())
        }));
        let (steady, rate) = detect_steady(&series, &SteadyParams::default()).unwrap();
        assert!(steady);
        assert!((rate - r).abs() / r < 0.025, "rate {rate}");
    }

    #[test]
    fn short_series_is_insufficient() {
        let series = grid(std::iter::repeat_n(10.0, 40)); // 195 s < 240 s
        assert!(matches!(
            detect_steady(&series, &SteadyParams::default()),
            Err(BenchError::InsufficientData { .. })
        ));
    }

    #[test]
    fn zero_series_is_steady_zero() {
        let series = grid(std::iter::repeat_n(0.0, 121));
        let (steady, rate) = detect_steady(&series, &SteadyParams::default()).unwrap();
        assert!(steady);
        assert_eq!(rate, 0.0);
    }

    proptest! {
        // Scaling all values by c > 0 preserves steadiness and scales the
        // rate by c.
        #[test]
        fn detect_steady_is_scale_equivariant(
            base in proptest::collection::vec(1.0f64..1.0e6, 61..100),
            c in 0.001f64..1000.0,
        ) {
            let series = grid(base.iter().copied());
            let scaled = grid(base.iter().map(|v| v * c));
            let p = SteadyParams::default();
            let (s1, r1) = detect_steady(&series, &p).unwrap();
            let (s2, r2) = detect_steady(&scaled, &p).unwrap();
            prop_assert_eq!(s1, s2);
            prop_assert!(((r2 - r1 * c) / (r1 * c)).abs() < 1e-9);
        }
    }

    // -- reports --------------------------------------------------------------

    fn result(label: &str, steady: bool, rate: f64) -> RunResult {
        RunResult {
            label: label.into(),
            configured_mps: 1_000_000.0,
            steady,
            steady_rate: rate,
            steady_bytes: rate * 215.0,
            peak_rate: rate + 36_000.0,
        }
    }

    #[test]
    fn report_sorts_descending_by_steady_rate() {
        let results = vec![
            result("acks1-b65", true, 340_000.0),
            result("two-remote", true, 421_000.0),
            result("acks0-b65", true, 294_000.0),
            result("acksall", true, 338_000.0),
        ];
        let tsv = summary_tsv(&results);
        let rows: Vec<&str> = tsv.lines().skip(1).collect();
        assert!(rows[0].starts_with("two-remote\t"));
        assert!(rows[3].starts_with("acks0-b65\t"));
        let table = summary_table(&results);
        assert!(table.lines().nth(1).unwrap().starts_with("two-remote"));
    }

    #[test]
    fn single_run_report_has_one_row() {
        let tsv = summary_tsv(&[result("only", true, 100.0)]);
        assert_eq!(tsv.lines().count(), 2);
    }

    #[test]
    fn unsteady_run_is_flagged_and_keeps_peak() {
        let r = result("wobbly", false, 360_000.0);
        let tsv = summary_tsv(&[r]);
        let row = tsv.lines().nth(1).unwrap();
        assert!(row.contains("\tno\t"));
        assert!(row.ends_with("396000"));
    }

    #[test]
    fn summary_round_trips_through_tsv() {
        let results = vec![
            result("a", true, 421_000.0),
            result("b", false, 294_000.0),
        ];
        let parsed = parse_summary_tsv(&summary_tsv(&results)).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].label, "a");
        assert!(!parsed[1].steady);
        // Re-rendering parsed rows is byte-identical: report idempotence.
        assert_eq!(summary_tsv(&parsed), summary_tsv(&results));
    }
}

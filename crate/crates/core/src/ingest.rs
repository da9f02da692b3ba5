//! Message-log ingestion: per-user trajectories and city-pair flux matrices.
//!
//! A message log is reduced in three steps: per-user sorting, run compression
//! (consecutive posts from the same city collapse to the run's last post) and
//! trajectory cutting into adjacent city transitions. Summing transitions over
//! all users yields the directed flux f_ij and the undirected flux
//! F_ij = f_ij + f_ji.

use std::collections::BTreeMap;
use std::io::BufRead;

use crate::error::{Error, Result};

pub type CityId = String;

/// One geotagged post.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeoMessage {
    pub message_id: String,
    pub user_id: String,
    /// Seconds since epoch, UTC.
    pub timestamp: i64,
    pub city_id: CityId,
}

/// A timestamped city visit within one user's sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocationEvent {
    pub timestamp: i64,
    pub city_id: CityId,
}

/// A single inter-city move. `origin != destination` always.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub origin: CityId,
    pub destination: CityId,
}

/// Maps raw location strings/codes to canonical city ids. Exact match only.
#[derive(Debug, Clone, Default)]
pub struct CityRegistry {
    map: BTreeMap<String, CityId>,
}

impl CityRegistry {
    pub fn new(map: BTreeMap<String, CityId>) -> Self {
        Self { map }
    }

    /// Loads a registry CSV with header `raw,city_id`.
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "raw" || &headers[1] != "city_id" {
            return Err(Error::Format(format!(
                "registry header must be `raw,city_id`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut map = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            map.insert(record[0].to_string(), record[1].to_string());
        }
        Ok(Self { map })
    }

    pub fn resolve(&self, raw: &str) -> Option<&CityId> {
        self.map.get(raw)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }
}

/// Why a log row was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RejectReason {
    Malformed,
    UnknownCity,
    OutOfWindow,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Malformed => "malformed",
            RejectReason::UnknownCity => "unknown_city",
            RejectReason::OutOfWindow => "out_of_window",
        }
    }
}

/// Per-reason counts of dropped rows. Silent drops are forbidden.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionReport {
    pub malformed: u64,
    pub unknown_city: u64,
    pub out_of_window: u64,
}

impl RejectionReport {
    pub fn bump(&mut self, reason: RejectReason) {
        match reason {
            RejectReason::Malformed => self.malformed += 1,
            RejectReason::UnknownCity => self.unknown_city += 1,
            RejectReason::OutOfWindow => self.out_of_window += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.malformed + self.unknown_city + self.out_of_window
    }
}

/// Inclusive time interval in epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    pub start: i64,
    pub end: i64,
}

impl TimeWindow {
    pub fn contains(&self, t: i64) -> bool {
        t >= self.start && t <= self.end
    }
}

/// Timestamp encoding of a log file, detected once per file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimestampMode {
    EpochSeconds,
    Iso8601,
}

fn parse_timestamp(field: &str, mode: TimestampMode) -> Option<i64> {
    match mode {
        TimestampMode::EpochSeconds => field.trim().parse::<i64>().ok(),
        TimestampMode::Iso8601 => chrono::DateTime::parse_from_rfc3339(field.trim())
            .ok()
            .map(|dt| dt.timestamp()),
    }
}

fn detect_mode(field: &str) -> Option<TimestampMode> {
    if field.trim().parse::<i64>().is_ok() {
        Some(TimestampMode::EpochSeconds)
    } else if chrono::DateTime::parse_from_rfc3339(field.trim()).is_ok() {
        Some(TimestampMode::Iso8601)
    } else {
        None
    }
}

/// Parses a message-log CSV (`message_id,user_id,timestamp,city_id`), keeping
/// rows inside `window` whose city resolves against `registry`.
///
/// A malformed header is fatal; malformed rows are skipped and counted.
pub fn parse_messages<R: BufRead>(
    reader: R,
    registry: &CityRegistry,
    window: TimeWindow,
) -> Result<(Vec<GeoMessage>, RejectionReport)> {
    if registry.is_empty() {
        return Err(Error::Data("city registry is empty".into()));
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["message_id", "user_id", "timestamp", "city_id"];
    if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Format(format!(
            "message log header must be `{}`, got `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut messages = Vec::new();
    let mut report = RejectionReport::default();
    let mut mode: Option<TimestampMode> = None;

    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                report.bump(RejectReason::Malformed);
                continue;
            }
        };
        if record.len() != 4 {
            report.bump(RejectReason::Malformed);
            continue;
        }
        // Timestamp encoding is fixed by the first row that declares one.
        let m = match mode {
            Some(m) => m,
            None => match detect_mode(&record[2]) {
                Some(m) => {
                    mode = Some(m);
                    m
                }
                None => {
                    report.bump(RejectReason::Malformed);
                    continue;
                }
            },
        };
        let timestamp = match parse_timestamp(&record[2], m) {
            Some(t) => t,
            None => {
                report.bump(RejectReason::Malformed);
                continue;
            }
        };
        let city_id = match registry.resolve(&record[3]) {
            Some(c) => c.clone(),
            None => {
                report.bump(RejectReason::UnknownCity);
                continue;
            }
        };
        if !window.contains(timestamp) {
            report.bump(RejectReason::OutOfWindow);
            continue;
        }
        messages.push(GeoMessage {
            message_id: record[0].to_string(),
            user_id: record[1].to_string(),
            timestamp,
            city_id,
        });
    }
    Ok((messages, report))
}

/// Groups messages by user and sorts each sequence by timestamp, breaking
/// ties by message_id ascending.
pub fn user_sequences(messages: Vec<GeoMessage>) -> BTreeMap<String, Vec<LocationEvent>> {
    let mut by_user: BTreeMap<String, Vec<GeoMessage>> = BTreeMap::new();
    for msg in messages {
        by_user.entry(msg.user_id.clone()).or_default().push(msg);
    }
    by_user
        .into_iter()
        .map(|(user, mut msgs)| {
            msgs.sort_by(|a, b| {
                a.timestamp
                    .cmp(&b.timestamp)
                    .then_with(|| a.message_id.cmp(&b.message_id))
            });
            let events = msgs
                .into_iter()
                .map(|m| LocationEvent {
                    timestamp: m.timestamp,
                    city_id: m.city_id,
                })
                .collect();
            (user, events)
        })
        .collect()
}

/// Collapses consecutive runs of the same city to the run's last event.
///
/// Input must be sorted by timestamp ascending; output has no two adjacent
/// equal cities.
pub fn compress_runs(events: &[LocationEvent]) -> Vec<LocationEvent> {
    let mut out: Vec<LocationEvent> = Vec::new();
    for event in events {
        match out.last_mut() {
            Some(last) if last.city_id == event.city_id => *last = event.clone(),
            _ => out.push(event.clone()),
        }
    }
    out
}

/// Cuts a compressed sequence into its n-1 adjacent transitions.
pub fn cut_trajectory(events: &[LocationEvent]) -> Result<Vec<Transition>> {
    let mut transitions = Vec::new();
    for pair in events.windows(2) {
        if pair[0].city_id == pair[1].city_id {
            return Err(Error::Contract(
                "adjacent equal cities; input is not run-compressed".into(),
            ));
        }
        transitions.push(Transition {
            origin: pair[0].city_id.clone(),
            destination: pair[1].city_id.clone(),
        });
    }
    Ok(transitions)
}

/// Sparse city-pair migration counts. Zero-count pairs are absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FluxMatrix {
    pub directed: bool,
    entries: BTreeMap<(CityId, CityId), u64>,
}

impl FluxMatrix {
    pub fn new(directed: bool) -> Self {
        Self {
            directed,
            entries: BTreeMap::new(),
        }
    }

    /// Canonical storage key: ordered pair if directed, lexicographically
    /// smaller id first if undirected.
    pub fn key(&self, a: &str, b: &str) -> (CityId, CityId) {
        if self.directed || a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        }
    }

    pub fn add(&mut self, a: &str, b: &str, count: u64) {
        if count == 0 {
            return;
        }
        let key = self.key(a, b);
        *self.entries.entry(key).or_insert(0) += count;
    }

    pub fn get(&self, a: &str, b: &str) -> u64 {
        self.entries.get(&self.key(a, b)).copied().unwrap_or(0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(CityId, CityId), &u64)> {
        self.entries.iter()
    }

    pub fn pair_count(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    pub fn cities(&self) -> std::collections::BTreeSet<&CityId> {
        self.entries
            .keys()
            .flat_map(|(a, b)| [a, b])
            .collect()
    }

    pub fn city_count(&self) -> usize {
        self.cities().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_entries<I>(directed: bool, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (CityId, CityId, u64)>,
    {
        let mut flux = FluxMatrix::new(directed);
        for (a, b, count) in entries {
            if a == b {
                return Err(Error::Contract(format!("self-pair {a}")));
            }
            if count == 0 {
                return Err(Error::Contract(format!("zero count for pair ({a},{b})")));
            }
            flux.add(&a, &b, count);
        }
        Ok(flux)
    }
}

/// Counts transitions into a directed or undirected flux matrix.
pub fn build_flux<'a, I>(transitions: I, directed: bool) -> FluxMatrix
where
    I: IntoIterator<Item = &'a Transition>,
{
    let mut flux = FluxMatrix::new(directed);
    for t in transitions {
        debug_assert_ne!(t.origin, t.destination);
        flux.add(&t.origin, &t.destination, 1);
    }
    flux
}

/// Full extraction result for one message log.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub directed: FluxMatrix,
    pub undirected: FluxMatrix,
    pub rejections: RejectionReport,
    /// Users whose in-window posts all came from one city.
    pub stationary_users: u64,
    pub users: u64,
    pub in_window_messages: u64,
    /// Events remaining after run compression, over all users.
    pub compressed_events: u64,
    /// Total transitions, equal to the directed flux total.
    pub transitions: u64,
}

/// Runs the whole pipeline: parse, sort per user, compress, cut, count.
pub fn extract<R: BufRead>(
    reader: R,
    registry: &CityRegistry,
    window: TimeWindow,
) -> Result<Extraction> {
    let (messages, rejections) = parse_messages(reader, registry, window)?;
    let in_window_messages = messages.len() as u64;
    let sequences = user_sequences(messages);
    let users = sequences.len() as u64;

    let mut all_transitions = Vec::new();
    let mut stationary_users = 0u64;
    let mut compressed_events = 0u64;
    for events in sequences.values() {
        let compressed = compress_runs(events);
        compressed_events += compressed.len() as u64;
        let transitions = cut_trajectory(&compressed)?;
        if transitions.is_empty() {
            stationary_users += 1;
        }
        all_transitions.extend(transitions);
    }

    let directed = build_flux(all_transitions.iter(), true);
    let undirected = build_flux(all_transitions.iter(), false);
    Ok(Extraction {
        directed,
        undirected,
        rejections,
        stationary_users,
        users,
        in_window_messages,
        compressed_events,
        transitions: all_transitions.len() as u64,
    })
}

//! Text event files.
//!
//! ```text
//! # dlcz-events v1
//! # config_digest: <sha256 of the generating run config>
//! # splitter: pair
//! # trial_period_ns: 4000.000
//! # trials_per_run: 1000000
//! # columns: trial_index,detector,time_ns
//! 0,D1,201.337
//! 0,D2,604.021
//! ```
//!
//! Times carry exactly three decimals (picosecond resolution), so a file
//! read back and written again is byte-identical.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{ns_to_ps, Detector, DetectionEvent, RunConfig, SplitterMode};
use crate::io::config::run_digest;

pub const EVENT_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "dlcz-events";
const COLUMNS: &str = "trial_index,detector,time_ns";

#[derive(Debug, Error)]
pub enum EventFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("unsupported event format version {found} (expected {EVENT_FORMAT_VERSION})")]
    Version { found: String },
    #[error("bad header at line {line}: {message}")]
    Header { line: usize, message: String },
    #[error("malformed record at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsorted at line {line}")]
    Unsorted { line: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventHeader {
    pub version: u32,
    pub config_digest: String,
    pub splitter: SplitterMode,
    pub trial_period_ns: f64,
    pub trials_per_run: u64,
}

impl EventHeader {
    pub fn for_run(cfg: &RunConfig) -> Self {
        Self {
            version: EVENT_FORMAT_VERSION,
            config_digest: run_digest(cfg),
            splitter: cfg.splitter,
            trial_period_ns: cfg.timing.trial_period_ns,
            trials_per_run: cfg.timing.trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventFile {
    pub header: EventHeader,
    pub events: Vec<DetectionEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadEvents {
    pub file: EventFile,
    /// The header digest differs from the expected one.
    pub digest_mismatch: bool,
}

fn format_ps(ps: i64, out: &mut String) {
    let sign = if ps < 0 { "-" } else { "" };
    let a = ps.unsigned_abs();
    let _ = write!(out, "{sign}{}.{:03}", a / 1000, a % 1000);
}

pub fn encode_events<W: Write>(mut w: W, file: &EventFile) -> io::Result<()> {
    let h = &file.header;
    let mut period = String::new();
    format_ps(ns_to_ps(h.trial_period_ns), &mut period);
    writeln!(w, "# {MAGIC} v{}", h.version)?;
    writeln!(w, "# config_digest: {}", h.config_digest)?;
    writeln!(w, "# splitter: {}", h.splitter)?;
    writeln!(w, "# trial_period_ns: {period}")?;
    writeln!(w, "# trials_per_run: {}", h.trials_per_run)?;
    writeln!(w, "# columns: {COLUMNS}")?;
    let mut line = String::with_capacity(32);
    for e in &file.events {
        line.clear();
        let _ = write!(line, "{},{},", e.trial_index, e.detector);
        format_ps(e.time_ps, &mut line);
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()
}

fn parse_time_ps(s: &str) -> Option<i64> {
    let (int, frac) = s.split_once('.')?;
    if int.is_empty()
        || frac.len() != 3
        || !int.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let int: i64 = int.parse().ok()?;
    let frac: i64 = frac.parse().ok()?;
    int.checked_mul(1000)?.checked_add(frac)
}

fn header_value<'a>(line: &'a str, key: &str, n: usize) -> Result<&'a str, EventFileError> {
    line.strip_prefix("# ")
        .and_then(|rest| rest.strip_prefix(key))
        .and_then(|rest| rest.strip_prefix(": "))
        .ok_or_else(|| EventFileError::Header {
            line: n,
            message: format!("expected `# {key}: ...`"),
        })
}

type NumberedLines<R> = std::iter::Enumerate<io::Lines<R>>;

fn stream_err(source: io::Error) -> EventFileError {
    EventFileError::Io {
        path: PathBuf::from("<stream>"),
        source,
    }
}

fn take_line<R: BufRead>(
    lines: &mut NumberedLines<R>,
    what: &str,
) -> Result<(usize, String), EventFileError> {
    match lines.next() {
        Some((i, line)) => Ok((i + 1, line.map_err(stream_err)?)),
        None => Err(EventFileError::Header {
            line: 0,
            message: format!("missing `{what}` header"),
        }),
    }
}

fn take_header<R: BufRead>(
    lines: &mut NumberedLines<R>,
    key: &str,
) -> Result<(usize, String), EventFileError> {
    let (n, line) = take_line(lines, key)?;
    Ok((n, header_value(&line, key, n)?.to_string()))
}

pub fn decode_events<R: BufRead>(r: R) -> Result<EventFile, EventFileError> {
    let mut lines = r.lines().enumerate();
    let (_, first) = take_line(&mut lines, MAGIC)?;
    let found = first
        .strip_prefix("# ")
        .and_then(|rest| rest.strip_prefix(MAGIC))
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or(EventFileError::Header {
            line: 1,
            message: format!("not a {MAGIC} file"),
        })?;
    let version: u32 = found
        .strip_prefix('v')
        .and_then(|v| v.parse().ok())
        .filter(|&v| v == EVENT_FORMAT_VERSION)
        .ok_or_else(|| EventFileError::Version {
            found: found.to_string(),
        })?;
    let (_, config_digest) = take_header(&mut lines, "config_digest")?;
    let (n, splitter) = take_header(&mut lines, "splitter")?;
    let splitter = SplitterMode::parse(&splitter).ok_or(EventFileError::Header {
        line: n,
        message: format!("unknown splitter `{splitter}`"),
    })?;
    let (n, period) = take_header(&mut lines, "trial_period_ns")?;
    let period_ps = parse_time_ps(&period)
        .filter(|&p| p > 0)
        .ok_or(EventFileError::Header {
            line: n,
            message: format!("bad trial period `{period}`"),
        })?;
    let (n, trials) = take_header(&mut lines, "trials_per_run")?;
    let trials_per_run: u64 = trials.parse().map_err(|_| EventFileError::Header {
        line: n,
        message: format!("bad trial count `{trials}`"),
    })?;
    let (n, columns) = take_header(&mut lines, "columns")?;
    if columns != COLUMNS {
        return Err(EventFileError::Header {
            line: n,
            message: format!("expected columns `{COLUMNS}`"),
        });
    }

    let mut events = Vec::new();
    let mut prev: Option<(u64, i64)> = None;
    for (i, line) in lines {
        let n = i + 1;
        let line = line.map_err(stream_err)?;
        let malformed = |message: &str| EventFileError::Malformed {
            line: n,
            message: message.to_string(),
        };
        let mut fields = line.split(',');
        let (Some(trial), Some(det), Some(time), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(malformed("expected three comma-separated fields"));
        };
        let trial_index: u64 = trial
            .parse()
            .ok()
            .filter(|t: &u64| t.to_string() == trial)
            .ok_or_else(|| malformed("bad trial index"))?;
        let detector = match det {
            "D1" => Detector::D1,
            "D2" => Detector::D2,
            _ => return Err(malformed("detector must be D1 or D2")),
        };
        let time_ps = parse_time_ps(time).ok_or_else(|| malformed("time must have exactly three decimals"))?;
        if trial_index >= trials_per_run {
            return Err(malformed("trial index beyond trials_per_run"));
        }
        if time_ps >= period_ps {
            return Err(malformed("time outside the trial period"));
        }
        let key = (trial_index, time_ps);
        if prev.is_some_and(|p| key < p) {
            return Err(EventFileError::Unsorted { line: n });
        }
        prev = Some(key);
        events.push(DetectionEvent {
            trial_index,
            detector,
            time_ps,
        });
    }

    Ok(EventFile {
        header: EventHeader {
            version,
            config_digest,
            splitter,
            trial_period_ns: period_ps as f64 / 1000.0,
            trials_per_run,
        },
        events,
    })
}

pub fn write_events(path: &Path, file: &EventFile) -> Result<(), EventFileError> {
    let io_err = |source| EventFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let f = File::create(path).map_err(io_err)?;
    encode_events(BufWriter::new(f), file).map_err(io_err)
}

/// Reads an event file. When `expected_digest` is given and differs from
/// the header, the file is still returned with `digest_mismatch` set.
pub fn read_events(
    path: &Path,
    expected_digest: Option<&str>,
) -> Result<ReadEvents, EventFileError> {
    let f = File::open(path).map_err(|source| EventFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file = decode_events(BufReader::new(f)).map_err(|e| match e {
        EventFileError::Io { source, .. } => EventFileError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })?;
    let digest_mismatch = expected_digest.is_some_and(|d| d != file.header.config_digest);
    Ok(ReadEvents {
        file,
        digest_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> EventHeader {
        EventHeader {
            version: EVENT_FORMAT_VERSION,
            config_digest: "abc123".into(),
            splitter: SplitterMode::Auto1,
            trial_period_ns: 4000.0,
            trials_per_run: 10,
        }
    }

    fn encode(file: &EventFile) -> String {
        let mut buf = Vec::new();
        encode_events(&mut buf, file).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_stream_round_trips() {
        let file = EventFile {
            header: header(),
            events: vec![],
        };
        let text = encode(&file);
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().all(|l| l.starts_with('#')));
        assert_eq!(decode_events(text.as_bytes()).unwrap(), file);
    }

    #[test]
    fn records_round_trip() {
        let file = EventFile {
            header: header(),
            events: vec![
                DetectionEvent {
                    trial_index: 0,
                    detector: Detector::D1,
                    time_ps: 200_007,
                },
                DetectionEvent {
                    trial_index: 9,
                    detector: Detector::D2,
                    time_ps: 3_999_999,
                },
            ],
        };
        let text = encode(&file);
        assert!(text.contains("0,D1,200.007\n9,D2,3999.999\n"));
        let back = decode_events(text.as_bytes()).unwrap();
        assert_eq!(back, file);
        assert_eq!(encode(&back), text);
    }

    #[test]
    fn shuffled_lines_are_unsorted() {
        let text = encode(&EventFile {
            header: header(),
            events: vec![],
        }) + "3,D1,10.000\n1,D2,10.000\n";
        assert!(matches!(
            decode_events(text.as_bytes()),
            Err(EventFileError::Unsorted { line: 8 })
        ));
        let msg = decode_events(text.as_bytes()).unwrap_err().to_string();
        assert_eq!(msg, "unsorted at line 8");
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let base = encode(&EventFile {
            header: header(),
            events: vec![],
        });
        for bad in ["1,D3,10.000", "1,D1,10.0", "x,D1,10.000", "1,D1", "1,D1,4000.000", "10,D1,1.000"] {
            let text = format!("{base}{bad}\n");
            match decode_events(text.as_bytes()) {
                Err(EventFileError::Malformed { line, .. }) => assert_eq!(line, 7, "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn version_mismatch() {
        let text = encode(&EventFile {
            header: header(),
            events: vec![],
        })
        .replace("v1", "v9");
        assert!(matches!(
            decode_events(text.as_bytes()),
            Err(EventFileError::Version { .. })
        ));
    }

    #[test]
    fn digest_mismatch_is_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.events");
        let file = EventFile {
            header: header(),
            events: vec![],
        };
        write_events(&path, &file).unwrap();
        let ok = read_events(&path, Some("abc123")).unwrap();
        assert!(!ok.digest_mismatch);
        let bad = read_events(&path, Some("other")).unwrap();
        assert!(bad.digest_mismatch);
        assert_eq!(bad.file, file);
    }

    #[test]
    fn missing_file_names_path() {
        let e = read_events(Path::new("/nonexistent/missing.events"), None).unwrap_err();
        assert!(e.to_string().contains("missing.events"));
    }
}

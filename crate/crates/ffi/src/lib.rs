//! C interface to `dlcz`.
//!
//! Objects are opaque handles returned through out-pointers by
//! `dlcz_scenario_from_*`, `dlcz_simulate`, `dlcz_events_read`, `dlcz_run`
//! and `dlcz_analyze`, and released with the matching `*_free`. Every fallible call
//! returns a [`DlczStatus`]; on failure `dlcz_last_error` describes the
//! problem until the next failing call on the same thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dlcz::engine::{self, DetectionEvent, Detector, SplitterMode};
use dlcz::io::config::{parse_config, Scenario};
use dlcz::io::events::{read_events, write_events, EventFile, EventHeader};
use dlcz::io::presets;
use dlcz::io::report::{export_report, ReportDocument, ReportFormat};
use dlcz::pipeline::{analyze_streams, in_pool, predict, run_scenario, ModeStreams};
use dlcz::stats::{ideal_cs_ratio_model, ideal_cs_ratio_paper, Verdict};
use dlcz::tia::{CorrelationReport, GEstimate};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlczStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Simulation = 4,
    Analysis = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlczMode {
    Pair = 0,
    Auto1 = 1,
    Auto2 = 2,
}

impl From<DlczMode> for SplitterMode {
    fn from(m: DlczMode) -> Self {
        match m {
            DlczMode::Pair => SplitterMode::Pair,
            DlczMode::Auto1 => SplitterMode::Auto1,
            DlczMode::Auto2 => SplitterMode::Auto2,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlczCorrelation {
    G11 = 0,
    G22 = 1,
    G12 = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlczVerdict {
    Satisfied = 0,
    Violated = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlczFormat {
    Json = 0,
    Csv = 1,
}

/// One detection: detector 1 or 2, time in picoseconds from trial start.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DlczEvent {
    pub trial_index: u64,
    pub detector: u8,
    pub time_ps: i64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlczEstimate {
    pub value: f64,
    pub sigma: f64,
}

/// Analytic moments; undefined values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlczMoments {
    pub mean1: f64,
    pub mean2: f64,
    pub g11: f64,
    pub g22: f64,
    pub g12: f64,
    pub ratio: f64,
}

pub struct DlczScenario(Scenario);

pub struct DlczEvents(EventFile);

pub struct DlczReport {
    doc: ReportDocument,
    report: CorrelationReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: DlczStatus, msg: impl ToString) -> DlczStatus {
    let msg = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    status
}

fn guard(f: impl FnOnce() -> DlczStatus) -> DlczStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(DlczStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, DlczStatus> {
    if p.is_null() {
        return Err(fail(DlczStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DlczStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, name: &str) -> Result<&'a T, DlczStatus> {
    p.as_ref().ok_or_else(|| fail(DlczStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, DlczStatus> {
    p.as_mut().ok_or_else(|| fail(DlczStatus::NullPointer, format!("{name} is null")))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn dlcz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn dlcz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_scenario_from_preset(name: *const c_char, out: *mut *mut DlczScenario) -> DlczStatus {
    guard(|| {
        let out = tri!(out_arg(out, "out"));
        let name = tri!(str_arg(name, "name"));
        match presets::get(name) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(DlczScenario(s)));
                DlczStatus::Ok
            }
            Err(e) => fail(DlczStatus::Config, e),
        }
    })
}

/// Parses a single-scenario TOML document.
#[no_mangle]
pub unsafe extern "C" fn dlcz_scenario_from_toml(text: *const c_char, out: *mut *mut DlczScenario) -> DlczStatus {
    guard(|| {
        let out = tri!(out_arg(out, "out"));
        let text = tri!(str_arg(text, "text"));
        match parse_config(text) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(DlczScenario(s)));
                DlczStatus::Ok
            }
            Err(e) => fail(DlczStatus::Config, e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_scenario_free(s: *mut DlczScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

unsafe fn edit_scenario(s: *mut DlczScenario, f: impl FnOnce(Scenario) -> Scenario) -> DlczStatus {
    guard(|| {
        let s = tri!(out_arg(s, "scenario"));
        let next = f(s.0.clone());
        match next.validate() {
            Ok(()) => {
                s.0 = next;
                DlczStatus::Ok
            }
            Err(e) => fail(DlczStatus::InvalidArgument, e),
        }
    })
}

/// Seeds above `INT64_MAX` are rejected.
#[no_mangle]
pub unsafe extern "C" fn dlcz_scenario_set_seed(s: *mut DlczScenario, seed: u64) -> DlczStatus {
    edit_scenario(s, |sc| sc.with_seed(seed))
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_scenario_set_trials(s: *mut DlczScenario, trials: u64) -> DlczStatus {
    edit_scenario(s, |sc| sc.with_trials(trials))
}

/// Changes the gate width, scaling per-gate backgrounds to keep rates fixed.
#[no_mangle]
pub unsafe extern "C" fn dlcz_scenario_set_gate_width(s: *mut DlczScenario, gate_width_ns: f64) -> DlczStatus {
    edit_scenario(s, |mut sc| {
        if gate_width_ns > 0.0 {
            sc.run = sc.run.with_gate_width(gate_width_ns);
        } else {
            sc.run.timing.gate_width_ns = gate_width_ns;
        }
        sc
    })
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_scenario_set_dead_time(s: *mut DlczScenario, dead_time_ns: f64) -> DlczStatus {
    edit_scenario(s, |mut sc| {
        sc.run.dead_time_ns = dead_time_ns;
        sc
    })
}

/// Analytic per-gate moments the simulation converges to.
#[no_mangle]
pub unsafe extern "C" fn dlcz_predict(s: *const DlczScenario, out: *mut DlczMoments) -> DlczStatus {
    guard(|| {
        let s = tri!(obj(s, "scenario"));
        let out = tri!(out_arg(out, "out"));
        match predict(&s.0) {
            Ok(m) => {
                *out = DlczMoments {
                    mean1: m.mean1,
                    mean2: m.mean2,
                    g11: m.g2_11.unwrap_or(f64::NAN),
                    g22: m.g2_22.unwrap_or(f64::NAN),
                    g12: m.g2_12.unwrap_or(f64::NAN),
                    ratio: m.cs_ratio().unwrap_or(f64::NAN),
                };
                DlczStatus::Ok
            }
            Err(e) => fail(DlczStatus::InvalidArgument, e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_ideal_ratio_paper(p: f64, out: *mut f64) -> DlczStatus {
    guard(|| {
        let out = tri!(out_arg(out, "out"));
        match ideal_cs_ratio_paper(p) {
            Ok(r) => {
                *out = r;
                DlczStatus::Ok
            }
            Err(e) => fail(DlczStatus::InvalidArgument, e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_ideal_ratio_model(p: f64, out: *mut f64) -> DlczStatus {
    guard(|| {
        let out = tri!(out_arg(out, "out"));
        match ideal_cs_ratio_model(p) {
            Ok(r) => {
                *out = r;
                DlczStatus::Ok
            }
            Err(e) => fail(DlczStatus::InvalidArgument, e),
        }
    })
}

fn workers(n: u32) -> Option<usize> {
    (n > 0).then_some(n as usize)
}

/// Simulates one splitter setting. `n_workers == 0` uses every core; the
/// result does not depend on it.
#[no_mangle]
pub unsafe extern "C" fn dlcz_simulate(
    s: *const DlczScenario,
    mode: DlczMode,
    n_workers: u32,
    out: *mut *mut DlczEvents,
) -> DlczStatus {
    guard(|| {
        let s = tri!(obj(s, "scenario"));
        let out = tri!(out_arg(out, "out"));
        let cfg = s.0.run.for_mode(mode.into());
        match in_pool(workers(n_workers), || engine::simulate(&cfg)) {
            Ok(Ok(events)) => {
                let file = EventFile {
                    header: EventHeader::for_run(&cfg),
                    events,
                };
                *out = Box::into_raw(Box::new(DlczEvents(file)));
                DlczStatus::Ok
            }
            Ok(Err(e)) => fail(DlczStatus::Simulation, e),
            Err(e) => fail(DlczStatus::Simulation, e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_events_free(e: *mut DlczEvents) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Number of events; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn dlcz_events_len(e: *const DlczEvents) -> usize {
    e.as_ref().map_or(0, |e| e.0.events.len())
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_events_mode(e: *const DlczEvents, out: *mut DlczMode) -> DlczStatus {
    guard(|| {
        let e = tri!(obj(e, "events"));
        let out = tri!(out_arg(out, "out"));
        *out = match e.0.header.splitter {
            SplitterMode::Pair => DlczMode::Pair,
            SplitterMode::Auto1 => DlczMode::Auto1,
            SplitterMode::Auto2 => DlczMode::Auto2,
        };
        DlczStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_events_get(e: *const DlczEvents, index: usize, out: *mut DlczEvent) -> DlczStatus {
    guard(|| {
        let e = tri!(obj(e, "events"));
        let out = tri!(out_arg(out, "out"));
        match e.0.events.get(index) {
            Some(ev) => {
                *out = DlczEvent {
                    trial_index: ev.trial_index,
                    detector: match ev.detector {
                        Detector::D1 => 1,
                        Detector::D2 => 2,
                    },
                    time_ps: ev.time_ps,
                };
                DlczStatus::Ok
            }
            None => fail(
                DlczStatus::InvalidArgument,
                format!("index {index} out of range ({} events)", e.0.events.len()),
            ),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_events_write(e: *const DlczEvents, path: *const c_char) -> DlczStatus {
    guard(|| {
        let e = tri!(obj(e, "events"));
        let path = tri!(str_arg(path, "path"));
        match write_events(Path::new(path), &e.0) {
            Ok(()) => DlczStatus::Ok,
            Err(err) => fail(DlczStatus::Io, err),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_events_read(path: *const c_char, out: *mut *mut DlczEvents) -> DlczStatus {
    guard(|| {
        let out = tri!(out_arg(out, "out"));
        let path = tri!(str_arg(path, "path"));
        match read_events(Path::new(path), None) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(DlczEvents(r.file)));
                DlczStatus::Ok
            }
            Err(err) => fail(DlczStatus::Io, err),
        }
    })
}

fn new_report(s: &Scenario, report: CorrelationReport) -> *mut DlczReport {
    let prediction = predict(s).ok();
    let doc = ReportDocument::new(s, &report, prediction.as_ref());
    Box::into_raw(Box::new(DlczReport { doc, report }))
}

/// Simulates the pair, auto1 and auto2 settings and analyzes them.
#[no_mangle]
pub unsafe extern "C" fn dlcz_run(s: *const DlczScenario, n_workers: u32, out: *mut *mut DlczReport) -> DlczStatus {
    guard(|| {
        let s = tri!(obj(s, "scenario"));
        let out = tri!(out_arg(out, "out"));
        match in_pool(workers(n_workers), || run_scenario(&s.0)) {
            Ok(Ok(run)) => {
                *out = new_report(&s.0, run.report);
                DlczStatus::Ok
            }
            Ok(Err(e)) => fail(DlczStatus::Analysis, e),
            Err(e) => fail(DlczStatus::Analysis, e),
        }
    })
}

/// Analyzes three event streams recorded with the pair, auto1 and auto2
/// settings of `s`.
#[no_mangle]
pub unsafe extern "C" fn dlcz_analyze(
    s: *const DlczScenario,
    pair: *const DlczEvents,
    auto1: *const DlczEvents,
    auto2: *const DlczEvents,
    out: *mut *mut DlczReport,
) -> DlczStatus {
    guard(|| {
        let s = tri!(obj(s, "scenario"));
        let out = tri!(out_arg(out, "out"));
        let mut streams: [Vec<DetectionEvent>; 3] = Default::default();
        for (slot, (ptr, want)) in streams.iter_mut().zip([
            (pair, SplitterMode::Pair),
            (auto1, SplitterMode::Auto1),
            (auto2, SplitterMode::Auto2),
        ]) {
            let e = tri!(obj(ptr, want.as_str()));
            if e.0.header.splitter != want {
                return fail(
                    DlczStatus::InvalidArgument,
                    format!("expected {want} events, got {}", e.0.header.splitter),
                );
            }
            slot.clone_from(&e.0.events);
        }
        let [pair, auto1, auto2] = streams;
        let streams = ModeStreams { pair, auto1, auto2 };
        match analyze_streams(&s.0, &streams) {
            Ok(report) => {
                *out = new_report(&s.0, report);
                DlczStatus::Ok
            }
            Err(e) => fail(DlczStatus::Analysis, e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_report_free(r: *mut DlczReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_report_g(
    r: *const DlczReport,
    which: DlczCorrelation,
    out: *mut DlczEstimate,
) -> DlczStatus {
    guard(|| {
        let r = tri!(obj(r, "report"));
        let out = tri!(out_arg(out, "out"));
        let g: &GEstimate = match which {
            DlczCorrelation::G11 => &r.doc.g11,
            DlczCorrelation::G22 => &r.doc.g22,
            DlczCorrelation::G12 => &r.doc.g12,
        };
        *out = DlczEstimate {
            value: g.value,
            sigma: g.sigma,
        };
        DlczStatus::Ok
    })
}

/// `R = g12^2 / (g11 g22)` with its propagated error.
#[no_mangle]
pub unsafe extern "C" fn dlcz_report_ratio(r: *const DlczReport, out: *mut DlczEstimate) -> DlczStatus {
    guard(|| {
        let r = tri!(obj(r, "report"));
        let out = tri!(out_arg(out, "out"));
        let m = r.doc.cauchy_schwarz.ratio;
        *out = DlczEstimate {
            value: m.value,
            sigma: m.sigma,
        };
        DlczStatus::Ok
    })
}

/// `(R - 1) / sigma_R`; fails when sigma_R is zero.
#[no_mangle]
pub unsafe extern "C" fn dlcz_report_significance(r: *const DlczReport, out: *mut f64) -> DlczStatus {
    guard(|| {
        let r = tri!(obj(r, "report"));
        let out = tri!(out_arg(out, "out"));
        match r.doc.cauchy_schwarz.significance {
            Some(s) => {
                *out = s;
                DlczStatus::Ok
            }
            None => fail(DlczStatus::Analysis, "significance undefined (zero error)"),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn dlcz_report_verdict(r: *const DlczReport, out: *mut DlczVerdict) -> DlczStatus {
    guard(|| {
        let r = tri!(obj(r, "report"));
        let out = tri!(out_arg(out, "out"));
        *out = match r.doc.cauchy_schwarz.verdict {
            Verdict::Satisfied => DlczVerdict::Satisfied,
            Verdict::Violated => DlczVerdict::Violated,
        };
        DlczStatus::Ok
    })
}

/// JSON report; release with `dlcz_string_free`.
#[no_mangle]
pub unsafe extern "C" fn dlcz_report_to_json(r: *const DlczReport, out: *mut *mut c_char) -> DlczStatus {
    guard(|| {
        let r = tri!(obj(r, "report"));
        let out = tri!(out_arg(out, "out"));
        *out = CString::new(r.doc.to_json()).map_or(ptr::null_mut(), CString::into_raw);
        DlczStatus::Ok
    })
}

/// Writes the report and histogram CSVs into `dir`.
#[no_mangle]
pub unsafe extern "C" fn dlcz_report_export(r: *const DlczReport, dir: *const c_char, format: DlczFormat) -> DlczStatus {
    guard(|| {
        let r = tri!(obj(r, "report"));
        let dir = tri!(str_arg(dir, "dir"));
        let format = match format {
            DlczFormat::Json => ReportFormat::Json,
            DlczFormat::Csv => ReportFormat::Csv,
        };
        match export_report(Path::new(dir), &r.doc, &r.report, format) {
            Ok(_) => DlczStatus::Ok,
            Err(e) => fail(DlczStatus::Io, e),
        }
    })
}

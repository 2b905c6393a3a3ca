//! Motion-capture marker data: the 13-marker glove layout, a reader and
//! writer for tab-separated exports (Qualisys style), gap filling, and the
//! hand frame from the three back-of-hand markers.
//!
//! Export layout: `KEY<TAB>value...` header lines (`FREQUENCY` and
//! `MARKER_NAMES` are required), an optional column line starting with
//! `Frame`, then one row per frame. With the column line present, rows start
//! with frame number and time; otherwise time is `row / FREQUENCY`. Each
//! marker contributes X, Y, Z in millimeters. Empty cells or an exact
//! `0, 0, 0` triplet mean the marker was not seen.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::hand_model::FingerId;
use crate::se3::{frame_from_two_vectors, FrameError, Transform, Vec3};

pub const MARKER_COUNT: usize = 13;
pub const DEFAULT_MAX_GAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MarkerLabel {
    HandFront,
    HandLeft,
    HandRight,
    Mid(FingerId),
    Tip(FingerId),
}

impl MarkerLabel {
    /// Canonical order: back-of-hand markers, then mid/tip per finger.
    pub fn all() -> [MarkerLabel; MARKER_COUNT] {
        let mut out = [MarkerLabel::HandFront; MARKER_COUNT];
        out[1] = MarkerLabel::HandLeft;
        out[2] = MarkerLabel::HandRight;
        for f in FingerId::ALL {
            out[3 + 2 * f.index()] = MarkerLabel::Mid(f);
            out[4 + 2 * f.index()] = MarkerLabel::Tip(f);
        }
        out
    }

    pub fn slot(self) -> usize {
        match self {
            MarkerLabel::HandFront => 0,
            MarkerLabel::HandLeft => 1,
            MarkerLabel::HandRight => 2,
            MarkerLabel::Mid(f) => 3 + 2 * f.index(),
            MarkerLabel::Tip(f) => 4 + 2 * f.index(),
        }
    }

    pub fn name(self) -> String {
        match self {
            MarkerLabel::HandFront => "hand_front".into(),
            MarkerLabel::HandLeft => "hand_left".into(),
            MarkerLabel::HandRight => "hand_right".into(),
            MarkerLabel::Mid(f) => format!("{f}_mid"),
            MarkerLabel::Tip(f) => format!("{f}_tip"),
        }
    }

    pub fn parse(s: &str) -> Option<MarkerLabel> {
        MarkerLabel::all().into_iter().find(|l| l.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerFrame {
    pub timestamp: f64,
    /// Indexed by [`MarkerLabel::slot`].
    pub markers: [Option<Vec3>; MARKER_COUNT],
}

impl MarkerFrame {
    pub fn empty(timestamp: f64) -> Self {
        MarkerFrame {
            timestamp,
            markers: [None; MARKER_COUNT],
        }
    }

    pub fn get(&self, label: MarkerLabel) -> Option<Vec3> {
        self.markers[label.slot()]
    }

    pub fn set(&mut self, label: MarkerLabel, p: Option<Vec3>) {
        self.markers[label.slot()] = p;
    }

    /// Mid and tip markers of a finger if both are present.
    pub fn finger(&self, f: FingerId) -> Option<[Vec3; 2]> {
        Some([self.get(MarkerLabel::Mid(f))?, self.get(MarkerLabel::Tip(f))?])
    }

    /// Applies a rigid transform to every present marker.
    pub fn transformed(&self, t: &Transform) -> MarkerFrame {
        MarkerFrame {
            timestamp: self.timestamp,
            markers: self.markers.map(|m| m.map(|p| t.transform_point(&p))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSequence {
    pub frames: Vec<MarkerFrame>,
    pub nominal_rate: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MocapError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unknown marker label '{0}'")]
    UnknownMarkerLabel(String),
    #[error("line {line}: expected {expected} fields, got {got}")]
    RowArityMismatch { line: usize, expected: usize, got: usize },
    #[error("line {line}: timestamp does not increase")]
    NonMonotoneTimestamps { line: usize },
    #[error("line {line}: invalid number '{text}'")]
    InvalidNumber { line: usize, text: String },
    #[error("hand markers missing")]
    MissingHandMarkers,
    #[error(transparent)]
    DegenerateFrame(#[from] FrameError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParseOptions {
    /// Foreign label → canonical label, applied before validation.
    pub label_map: BTreeMap<String, String>,
    /// Reject bad rows (and report them) instead of failing.
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: MocapError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMocap {
    pub sequence: MarkerSequence,
    /// Data rows seen, including rejected ones.
    pub rows_in: usize,
    pub rejected: Vec<RejectedRow>,
}

fn is_header_key(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_uppercase()) && s.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// Parses with default options (strict).
pub fn parse_mocap_tsv(text: &str) -> Result<MarkerSequence, MocapError> {
    Ok(parse_mocap_tsv_with(text, &ParseOptions::default())?.sequence)
}

pub fn parse_mocap_tsv_with(text: &str, opts: &ParseOptions) -> Result<ParsedMocap, MocapError> {
    let mut frequency = None;
    let mut names: Option<Vec<String>> = None;
    let mut declared_markers = None;
    let mut with_time = false;
    let mut lines = text.lines().enumerate().peekable();

    while let Some(&(_, raw)) = lines.peek() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            lines.next();
            continue;
        }
        let mut fields = line.split('\t');
        let key = fields.next().unwrap_or_default().trim();
        if key == "Frame" {
            with_time = true;
            lines.next();
            break;
        }
        if !is_header_key(key) {
            break;
        }
        let values: Vec<&str> = fields.map(str::trim).filter(|v| !v.is_empty()).collect();
        match key {
            "FREQUENCY" => {
                let f: f64 = values
                    .first()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| MocapError::MalformedHeader("FREQUENCY needs a number".into()))?;
                if !(f > 0.0 && f.is_finite()) {
                    return Err(MocapError::MalformedHeader("FREQUENCY must be positive".into()));
                }
                frequency = Some(f);
            }
            "MARKER_NAMES" => names = Some(values.iter().map(|s| s.to_string()).collect()),
            "NO_OF_MARKERS" => {
                declared_markers = Some(
                    values
                        .first()
                        .and_then(|v| v.parse::<usize>().ok())
                        .ok_or_else(|| MocapError::MalformedHeader("NO_OF_MARKERS needs a count".into()))?,
                )
            }
            _ => {}
        }
        lines.next();
    }

    let frequency = frequency.ok_or_else(|| MocapError::MalformedHeader("missing FREQUENCY".into()))?;
    let names = names.ok_or_else(|| MocapError::MalformedHeader("missing MARKER_NAMES".into()))?;
    if let Some(n) = declared_markers {
        if n != names.len() {
            return Err(MocapError::MalformedHeader(format!(
                "NO_OF_MARKERS is {n} but MARKER_NAMES lists {}",
                names.len()
            )));
        }
    }
    let mut columns = Vec::with_capacity(names.len());
    for name in &names {
        let canonical = opts.label_map.get(name).map(String::as_str).unwrap_or(name);
        let label = MarkerLabel::parse(canonical).ok_or_else(|| MocapError::UnknownMarkerLabel(name.clone()))?;
        if columns.contains(&label) {
            return Err(MocapError::MalformedHeader(format!("marker '{canonical}' listed twice")));
        }
        columns.push(label);
    }

    let lead = if with_time { 2 } else { 0 };
    let expected = lead + 3 * columns.len();
    let mut frames: Vec<MarkerFrame> = Vec::new();
    let mut rejected = Vec::new();
    let mut rows_in = 0;
    for (idx, raw) in lines {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        rows_in += 1;
        let lineno = idx + 1;
        let row = parse_row(line, lineno, expected, with_time, &columns, frames.len(), frequency).and_then(|f| {
            match frames.last() {
                Some(prev) if !(f.timestamp > prev.timestamp) => Err(MocapError::NonMonotoneTimestamps { line: lineno }),
                _ => Ok(f),
            }
        });
        match row {
            Ok(f) => frames.push(f),
            Err(e) if opts.lenient => rejected.push(RejectedRow { line: lineno, reason: e }),
            Err(e) => return Err(e),
        }
    }
    Ok(ParsedMocap {
        sequence: MarkerSequence {
            frames,
            nominal_rate: frequency,
        },
        rows_in,
        rejected,
    })
}

fn parse_row(
    line: &str,
    lineno: usize,
    expected: usize,
    with_time: bool,
    columns: &[MarkerLabel],
    index: usize,
    frequency: f64,
) -> Result<MarkerFrame, MocapError> {
    let mut fields: Vec<&str> = line.split('\t').collect();
    // exporters commonly end rows with a tab
    if fields.len() == expected + 1 && fields.last().is_some_and(|f| f.trim().is_empty()) {
        fields.pop();
    }
    if fields.len() != expected {
        return Err(MocapError::RowArityMismatch {
            line: lineno,
            expected,
            got: fields.len(),
        });
    }
    let number = |s: &str| -> Result<Option<f64>, MocapError> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(None);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(MocapError::InvalidNumber {
                line: lineno,
                text: s.to_string(),
            }),
        }
    };
    let timestamp = if with_time {
        number(fields[1])?.ok_or_else(|| MocapError::InvalidNumber {
            line: lineno,
            text: String::new(),
        })?
    } else {
        index as f64 / frequency
    };
    let lead = if with_time { 2 } else { 0 };
    let mut frame = MarkerFrame::empty(timestamp);
    for (k, label) in columns.iter().enumerate() {
        let cells = &fields[lead + 3 * k..lead + 3 * k + 3];
        let xyz = [number(cells[0])?, number(cells[1])?, number(cells[2])?];
        let p = match xyz {
            [Some(x), Some(y), Some(z)] if !(x == 0.0 && y == 0.0 && z == 0.0) => Some(Vec3::new(x, y, z) / 1000.0),
            _ => None,
        };
        frame.set(*label, p);
    }
    Ok(frame)
}

/// Writes the format read by [`parse_mocap_tsv`]: all 13 markers in
/// canonical order, millimeters with three decimals, time with six.
pub fn write_mocap_tsv(seq: &MarkerSequence) -> String {
    let labels = MarkerLabel::all();
    let mut out = String::new();
    let _ = writeln!(out, "NO_OF_FRAMES\t{}", seq.frames.len());
    let _ = writeln!(out, "NO_OF_CAMERAS\t0");
    let _ = writeln!(out, "NO_OF_MARKERS\t{MARKER_COUNT}");
    let _ = writeln!(out, "FREQUENCY\t{}", seq.nominal_rate);
    let _ = writeln!(out, "NO_OF_ANALOG\t0");
    let _ = writeln!(out, "ANALOG_FREQUENCY\t0");
    let _ = writeln!(out, "DESCRIPTION\t--");
    let _ = writeln!(out, "TIME_STAMP\t--");
    let _ = writeln!(out, "DATA_INCLUDED\t3D");
    out.push_str("MARKER_NAMES");
    for l in labels {
        let _ = write!(out, "\t{}", l.name());
    }
    out.push('\n');
    out.push_str("Frame\tTime");
    for l in labels {
        let n = l.name();
        let _ = write!(out, "\t{n} X\t{n} Y\t{n} Z");
    }
    out.push('\n');
    for (i, f) in seq.frames.iter().enumerate() {
        let _ = write!(out, "{}\t{:.6}", i + 1, f.timestamp);
        for m in &f.markers {
            match m {
                Some(p) => {
                    let mm = p * 1000.0;
                    let _ = write!(out, "\t{:.3}\t{:.3}\t{:.3}", mm.x, mm.y, mm.z);
                }
                None => out.push_str("\t\t\t"),
            }
        }
        out.push('\n');
    }
    out
}

/// Linearly interpolates (in time) interior gaps of at most `max_gap`
/// frames. Leading, trailing and longer gaps stay absent.
pub fn fill_gaps(seq: &MarkerSequence, max_gap: usize) -> MarkerSequence {
    let mut out = seq.clone();
    let n = seq.frames.len();
    for slot in 0..MARKER_COUNT {
        let mut last_seen: Option<usize> = None;
        for i in 0..n {
            if seq.frames[i].markers[slot].is_none() {
                continue;
            }
            if let Some(a) = last_seen {
                let gap = i - a - 1;
                if gap > 0 && gap <= max_gap {
                    let (fa, fb) = (&seq.frames[a], &seq.frames[i]);
                    let (pa, pb) = (fa.markers[slot].unwrap(), fb.markers[slot].unwrap());
                    for k in a + 1..i {
                        let s = (seq.frames[k].timestamp - fa.timestamp) / (fb.timestamp - fa.timestamp);
                        out.frames[k].markers[slot] = Some(pa + (pb - pa) * s);
                    }
                }
            }
            last_seen = Some(i);
        }
    }
    out
}

/// Glove frame (world ← hand): approach from the right to the front marker,
/// orientation along the normal of the marker plane, origin at the centroid.
pub fn estimate_hand_frame(frame: &MarkerFrame) -> Result<Transform, MocapError> {
    let (Some(front), Some(left), Some(right)) = (
        frame.get(MarkerLabel::HandFront),
        frame.get(MarkerLabel::HandLeft),
        frame.get(MarkerLabel::HandRight),
    ) else {
        return Err(MocapError::MissingHandMarkers);
    };
    let approach = front - right;
    let normal = (left - right).cross(&(front - right));
    let centroid = (front + left + right) / 3.0;
    Ok(frame_from_two_vectors(&approach, &normal, &centroid)?)
}

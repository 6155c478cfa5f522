//! Text file formats.
//!
//! Track files (`det.txt`, `gt.txt`, tracker output) hold one box per line:
//!
//! ```text
//! frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z
//! ```
//!
//! `frame` is 1-based. Raw detections use `id = -1`. The trailing `x,y,z`
//! are ignored on input and written as `-1,-1,-1`. Written boxes use two
//! decimals; confidence uses the shortest exact representation. Tracker
//! output rows for forecast (unobserved) positions carry confidence `0`.
//!
//! Feature files hold one appearance vector per detection:
//!
//! ```text
//! frame,det_index,f_1,...,f_d
//! ```
//!
//! `det_index` is the 0-based position of the detection among the rows of
//! the same frame in the detection file, in file order. Values are written
//! in shortest round-trip form and normalized to unit length when loaded.
//!
//! `seqinfo.toml` describes a sequence: `name`, `fps`, `width`, `height`,
//! `frames`.
//!
//! Lines that are empty or start with `#` are skipped.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_matching;
use crate::error::{Error, Result};
use crate::tracker::TrackRow;
use crate::types::{iou, BoundingBox, Detection, Sequence};

pub const DETECTIONS_FILE: &str = "det.txt";
pub const FEATURES_FILE: &str = "features.txt";
pub const GROUND_TRUTH_FILE: &str = "gt.txt";
pub const SEQINFO_FILE: &str = "seqinfo.toml";

/// One line of a track file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRow {
    pub frame: u32,
    pub id: i64,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl fmt::Display for MotRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.bbox;
        write!(
            f,
            "{},{},{:.2},{:.2},{:.2},{:.2},{},-1,-1,-1",
            self.frame, self.id, b.x, b.y, b.w, b.h, self.confidence
        )
    }
}

impl From<&TrackRow> for MotRow {
    fn from(r: &TrackRow) -> Self {
        Self {
            frame: r.frame,
            id: r.id as i64,
            bbox: r.bbox,
            confidence: r.confidence,
        }
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn field<T: std::str::FromStr>(fields: &[&str], k: usize, name: &str, path: &Path, line: usize) -> Result<T> {
    fields
        .get(k)
        .ok_or_else(|| parse_error(path, line, format!("missing field `{name}`")))?
        .trim()
        .parse()
        .map_err(|_| parse_error(path, line, format!("invalid `{name}`: `{}`", fields[k].trim())))
}

/// Parses track-file text; `path` is only used in error messages.
pub fn parse_mot(text: &str, path: &Path) -> Result<Vec<MotRow>> {
    let mut rows = Vec::new();
    for (n, line) in content_lines(text) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 7 {
            return Err(parse_error(path, n, format!("expected at least 7 fields, found {}", f.len())));
        }
        let frame: u32 = field(&f, 0, "frame", path, n)?;
        if frame == 0 {
            return Err(parse_error(path, n, "frame numbers start at 1"));
        }
        let id: f64 = field(&f, 1, "id", path, n)?;
        if id.fract() != 0.0 {
            return Err(parse_error(path, n, "id must be an integer"));
        }
        let [x, y, w, h, conf] = [
            field::<f64>(&f, 2, "bb_left", path, n)?,
            field::<f64>(&f, 3, "bb_top", path, n)?,
            field::<f64>(&f, 4, "bb_width", path, n)?,
            field::<f64>(&f, 5, "bb_height", path, n)?,
            field::<f64>(&f, 6, "conf", path, n)?,
        ];
        let bbox = BoundingBox::new(x, y, w, h).map_err(|e| parse_error(path, n, e.to_string()))?;
        rows.push(MotRow {
            frame,
            id: id as i64,
            bbox,
            confidence: conf,
        });
    }
    Ok(rows)
}

pub fn read_mot(path: &Path) -> Result<Vec<MotRow>> {
    parse_mot(&fs::read_to_string(path)?, path)
}

pub fn format_mot(rows: &[MotRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(s, "{r}");
    }
    s
}

/// Feature vectors keyed by `(frame, det_index)`.
pub type FeatureMap = BTreeMap<(u32, usize), Vec<f64>>;

pub fn parse_features(text: &str, path: &Path) -> Result<FeatureMap> {
    let mut map = FeatureMap::new();
    let mut dim = None;
    for (n, line) in content_lines(text) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 3 {
            return Err(parse_error(path, n, "expected frame, det_index and at least one feature value"));
        }
        let frame: u32 = field(&f, 0, "frame", path, n)?;
        let idx: usize = field(&f, 1, "det_index", path, n)?;
        let v = (2..f.len())
            .map(|k| field::<f64>(&f, k, "feature", path, n))
            .collect::<Result<Vec<_>>>()?;
        if *dim.get_or_insert(v.len()) != v.len() {
            return Err(parse_error(path, n, format!("feature has {} values, expected {}", v.len(), dim.unwrap_or(0))));
        }
        if map.insert((frame, idx), v).is_some() {
            return Err(parse_error(path, n, format!("duplicate feature for frame {frame} detection {idx}")));
        }
    }
    Ok(map)
}

pub fn read_features(path: &Path) -> Result<FeatureMap> {
    parse_features(&fs::read_to_string(path)?, path)
}

pub fn format_features(map: &FeatureMap) -> String {
    let mut s = String::new();
    for ((frame, idx), v) in map {
        let _ = write!(s, "{frame},{idx}");
        for x in v {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeqInfo {
    pub name: String,
    pub fps: f64,
    pub width: f64,
    pub height: f64,
    pub frames: u32,
}

pub fn read_seqinfo(path: &Path) -> Result<SeqInfo> {
    toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Detections of `info.frames` frames with their features; labelled with
/// ground-truth identities when `gt` is given (IoU >= 0.5 assignment per frame).
pub fn assemble_sequence(info: &SeqInfo, det: &[MotRow], features: &FeatureMap, gt: Option<&[MotRow]>) -> Result<Sequence> {
    let last_frame = det.iter().map(|r| r.frame).max().unwrap_or(0).max(info.frames);
    let mut frames: Vec<Vec<Detection>> = vec![Vec::new(); last_frame as usize];
    for r in det {
        let slot = &mut frames[r.frame as usize - 1];
        let idx = slot.len();
        let feature = features.get(&(r.frame, idx)).ok_or_else(|| {
            Error::InvalidArgument(format!("no feature for frame {} detection {idx}", r.frame))
        })?;
        slot.push(Detection::new(r.frame, r.bbox, r.confidence, feature.clone())?);
    }
    if let Some(gt) = gt {
        let mut by_frame: BTreeMap<u32, Vec<&MotRow>> = BTreeMap::new();
        for g in gt {
            by_frame.entry(g.frame).or_default().push(g);
        }
        for (t, dets) in frames.iter_mut().enumerate() {
            let Some(gs) = by_frame.get(&(t as u32 + 1)) else { continue };
            let w: Vec<Vec<f64>> = dets.iter().map(|d| gs.iter().map(|g| iou(&d.bbox, &g.bbox)).collect()).collect();
            for (di, gi) in max_weight_matching(&w, 0.5) {
                dets[di].gt_id = Some(gs[gi].id as u64);
            }
        }
    }
    Ok(Sequence {
        name: info.name.clone(),
        fps: info.fps,
        width: info.width,
        height: info.height,
        frames,
    })
}

/// Loads `det.txt`, `features.txt`, `seqinfo.toml` and, when present and
/// `with_gt` is set, `gt.txt` from a sequence directory.
pub fn load_sequence_dir(dir: &Path, with_gt: bool) -> Result<Sequence> {
    let info = read_seqinfo(&dir.join(SEQINFO_FILE))?;
    let det = read_mot(&dir.join(DETECTIONS_FILE))?;
    let features = read_features(&dir.join(FEATURES_FILE))?;
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    let gt = if with_gt && gt_path.exists() { Some(read_mot(&gt_path)?) } else { None };
    assemble_sequence(&info, &det, &features, gt.as_deref())
}

/// Detection rows and features of a sequence, in the on-disk order.
pub fn sequence_rows(seq: &Sequence) -> (Vec<MotRow>, FeatureMap) {
    let mut rows = Vec::new();
    let mut features = FeatureMap::new();
    for dets in &seq.frames {
        for (k, d) in dets.iter().enumerate() {
            rows.push(MotRow {
                frame: d.frame,
                id: -1,
                bbox: d.bbox,
                confidence: d.confidence,
            });
            features.insert((d.frame, k), d.feature.clone());
        }
    }
    (rows, features)
}

/// Writes files so that either all appear or none: each is written to a
/// temporary sibling first and renamed once every write succeeded.
pub fn write_files_atomically<C: AsRef<[u8]>>(files: &[(PathBuf, C)]) -> Result<()> {
    let mut staged = Vec::new();
    let result = (|| -> Result<()> {
        for (path, content) in files {
            let tmp = tmp_path(path);
            staged.push(tmp.clone());
            fs::write(&tmp, content.as_ref())?;
        }
        for (path, _) in files {
            fs::rename(tmp_path(path), path)?;
        }
        Ok(())
    })();
    if result.is_err() {
        for tmp in staged {
            let _ = fs::remove_file(tmp);
        }
    }
    result
}

pub(crate) fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mot_round_trip() {
        let text = "1,-1,10.5,20,30,60,0.9,-1,-1,-1\n# comment\n\n2,3,11.25,21,30,60,1,-1,-1,-1\n";
        let rows = parse_mot(text, Path::new("det.txt")).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].id, 3);
        assert_eq!(format_mot(&rows), "1,-1,10.50,20.00,30.00,60.00,0.9,-1,-1,-1\n2,3,11.25,21.00,30.00,60.00,1,-1,-1,-1\n");
        assert_eq!(parse_mot(&format_mot(&rows), Path::new("x")).unwrap(), rows);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let err = parse_mot("1,-1,0,0,5,5,1\n2,-1,abc,0,5,5,1\n", Path::new("det.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_mot("1,-1,0,0,5\n", Path::new("det.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_mot("1,-1,0,0,-5,5,1\n", Path::new("det.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_features("1,0,0.5,0.5\n1,1,0.5\n", Path::new("f.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn features_round_trip_exactly() {
        let mut map = FeatureMap::new();
        map.insert((1, 0), vec![0.1, 1.0 / 3.0, -2e-17]);
        map.insert((2, 0), vec![0.6, 0.8, 0.0]);
        let back = parse_features(&format_features(&map), Path::new("f")).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn ground_truth_labels_by_overlap() {
        let info = SeqInfo {
            name: "s".into(),
            fps: 10.0,
            width: 100.0,
            height: 100.0,
            frames: 1,
        };
        let det = parse_mot("1,-1,0,0,10,10,1\n1,-1,50,50,10,10,1\n1,-1,80,0,10,10,1\n", Path::new("d")).unwrap();
        let gt = parse_mot("1,7,1,0,10,10,1\n1,8,50,51,10,10,1\n", Path::new("g")).unwrap();
        let features = parse_features("1,0,1,0\n1,1,0,2\n1,2,1,1\n", Path::new("f")).unwrap();
        let seq = assemble_sequence(&info, &det, &features, Some(&gt)).unwrap();
        let ids: Vec<_> = seq.frames[0].iter().map(|d| d.gt_id).collect();
        assert_eq!(ids, vec![Some(7), Some(8), None]);
        assert_eq!(seq.frames[0][1].feature, vec![0.0, 1.0]);
    }

    #[test]
    fn atomic_write_leaves_nothing_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let ok = dir.path().join("a.txt");
        let bad = dir.path().join("missing").join("b.txt");
        assert!(write_files_atomically(&[(ok.clone(), "x"), (bad, "y")]).is_err());
        assert!(!ok.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}

//! Track files: header `track_id,frame,cx,cy,w,h,interpolated`, one row per
//! state, `interpolated` is 0 or 1.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BBox;

use super::{StateSource, TrackState, Tracklet};

const COLUMNS: [&str; 7] = ["track_id", "frame", "cx", "cy", "w", "h", "interpolated"];

pub fn write_tracks(path: &Path, tracks: &[Tracklet]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tracks_to(file, tracks).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_tracks_to<W: Write>(out: W, tracks: &[Tracklet]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<tracks>", io),
        other => Error::InvalidInput(format!("{other:?}")),
    };
    w.write_record(COLUMNS).map_err(io_err)?;
    for tr in tracks {
        for s in &tr.states {
            w.write_record([
                tr.id.to_string(),
                s.frame.to_string(),
                s.bbox.cx.to_string(),
                s.bbox.cy.to_string(),
                s.bbox.w.to_string(),
                s.bbox.h.to_string(),
                (if s.is_detected() { "0" } else { "1" }).to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<tracks>", e))
}

pub fn read_tracks(path: &Path) -> Result<Vec<Tracklet>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tracks_from(file, &path.display().to_string())
}

/// Parses a track file; tracklets come back ordered by id with states
/// ordered by frame.
pub fn read_tracks_from<R: Read>(reader: R, name: &str) -> Result<Vec<Tracklet>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut by_id: BTreeMap<u64, Vec<TrackState>> = BTreeMap::new();
    let mut saw_header = false;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::format(name, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !saw_header {
            let fields: Vec<&str> = record.iter().collect();
            if fields[..] != COLUMNS[..] {
                return Err(Error::format(
                    name,
                    line,
                    format!("expected header `{}`", COLUMNS.join(",")),
                ));
            }
            saw_header = true;
            continue;
        }
        if record.len() != COLUMNS.len() {
            return Err(Error::format(
                name,
                line,
                format!("expected {} fields, found {}", COLUMNS.len(), record.len()),
            ));
        }
        let field_err = |i: usize| Error::format(name, line, format!("{}: cannot parse {:?}", COLUMNS[i], &record[i]));
        let id: u64 = record[0].parse().map_err(|_| field_err(0))?;
        let frame: usize = record[1].parse().map_err(|_| field_err(1))?;
        let mut nums = [0.0f64; 4];
        for (k, v) in nums.iter_mut().enumerate() {
            *v = record[k + 2].parse().map_err(|_| field_err(k + 2))?;
        }
        let source = match &record[6] {
            "0" => StateSource::Detected,
            "1" => StateSource::Interpolated,
            _ => return Err(field_err(6)),
        };
        by_id.entry(id).or_default().push(TrackState {
            frame,
            bbox: BBox::new(nums[0], nums[1], nums[2], nums[3]),
            source,
            detection: None,
        });
    }
    let mut tracks = Vec::with_capacity(by_id.len());
    for (id, mut states) in by_id {
        states.sort_by_key(|s| s.frame);
        if states.windows(2).any(|w| w[0].frame == w[1].frame) {
            return Err(Error::format(name, 0, format!("track {id} repeats a frame")));
        }
        let hits = states.iter().filter(|s| s.is_detected()).count();
        tracks.push(Tracklet {
            id,
            states,
            age_since_update: 0,
            hits,
            hit_streak: 0,
        });
    }
    Ok(tracks)
}

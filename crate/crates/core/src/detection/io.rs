//! Detection files: header `frame,cx,cy,w,h,confidence`, one row per
//! detection, pixel coordinates with the origin at the top-left and y
//! downward. Merged stage files append a `level` column.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BBox;

use super::{Detection, DetectionSet, Level};

const COLUMNS: [&str; 6] = ["frame", "cx", "cy", "w", "h", "confidence"];

/// Whether a written detection file carries the trailing `level` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelColumn {
    Omit,
    Include,
}

pub fn read_detections(path: &Path, level: Level) -> Result<DetectionSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_detections_from(file, &path.display().to_string(), level)
}

/// Parses a detection file. Rows are tagged with `level` unless the file
/// carries its own `level` column.
pub fn read_detections_from<R: Read>(reader: R, name: &str, level: Level) -> Result<DetectionSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut set = DetectionSet::new();
    let mut has_level = None;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(name, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let Some(with_level) = has_level else {
            has_level = Some(parse_header(&record, name, line)?);
            continue;
        };
        let expected = if with_level { 7 } else { 6 };
        if record.len() != expected {
            return Err(Error::format(
                name,
                line,
                format!("expected {expected} fields, found {}", record.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = record[i].parse().map_err(|_| {
                Error::format(name, line, format!("{}: cannot parse {:?}", COLUMNS[i], &record[i]))
            })?;
            if !v.is_finite() {
                return Err(Error::format(name, line, format!("{} is not finite", COLUMNS[i])));
            }
            Ok(v)
        };
        let frame: usize = record[0]
            .parse()
            .map_err(|_| Error::format(name, line, format!("frame: cannot parse {:?}", &record[0])))?;
        let (cx, cy, w, h, confidence) = (num(1)?, num(2)?, num(3)?, num(4)?, num(5)?);
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::format(name, line, format!("box size {w}x{h} must be positive")));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::format(
                name,
                line,
                format!("confidence {confidence} outside [0, 1]"),
            ));
        }
        let row_level = if with_level {
            record[6]
                .parse()
                .map_err(|e: Error| Error::format(name, line, e.to_string()))?
        } else {
            level
        };
        set.push(Detection::new(frame, BBox::new(cx, cy, w, h), confidence, row_level));
    }
    Ok(set)
}

fn parse_header(record: &csv::StringRecord, name: &str, line: u64) -> Result<bool> {
    let fields: Vec<&str> = record.iter().collect();
    if fields[..] == COLUMNS[..] {
        Ok(false)
    } else if fields.len() == 7 && fields[..6] == COLUMNS[..] && fields[6] == "level" {
        Ok(true)
    } else {
        Err(Error::format(
            name,
            line,
            format!("expected header `{}`, found `{}`", COLUMNS.join(","), fields.join(",")),
        ))
    }
}

fn csv_error(name: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::format(name, line, e.to_string())
}

pub fn write_detections(path: &Path, set: &DetectionSet, level: LevelColumn) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_detections_to(&mut file, set, level).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Floats are written in shortest round-trip form, so reading the output
/// back reproduces every value exactly.
pub fn write_detections_to<W: Write>(out: W, set: &DetectionSet, level: LevelColumn) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<detections>", io),
        other => Error::InvalidInput(format!("{other:?}")),
    };
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if level == LevelColumn::Include {
        header.push("level");
    }
    w.write_record(&header).map_err(to_err)?;
    for d in set.iter() {
        let mut row = vec![
            d.frame.to_string(),
            d.bbox.cx.to_string(),
            d.bbox.cy.to_string(),
            d.bbox.w.to_string(),
            d.bbox.h.to_string(),
            d.confidence.to_string(),
        ];
        if level == LevelColumn::Include {
            row.push(d.level.to_string());
        }
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("<detections>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, level: Level) -> Result<DetectionSet> {
        read_detections_from(text.as_bytes(), "test.csv", level)
    }

    #[test]
    fn empty_file_is_empty_set() {
        assert!(parse("", Level::Low).unwrap().is_empty());
        assert!(parse("frame,cx,cy,w,h,confidence\n", Level::Low).unwrap().is_empty());
    }

    #[test]
    fn parses_single_row() {
        let s = parse("frame,cx,cy,w,h,confidence\n12,100.5,80.0,30,30,0.97\n", Level::High).unwrap();
        assert_eq!(s.len(), 1);
        let d = s.frame(12)[0];
        assert_eq!(d.frame, 12);
        assert_eq!(d.bbox, BBox::new(100.5, 80.0, 30.0, 30.0));
        assert_eq!(d.confidence, 0.97);
        assert_eq!(d.level, Level::High);
    }

    #[test]
    fn level_column_overrides_tag() {
        let s = parse(
            "frame,cx,cy,w,h,confidence,level\n0,1,2,3,4,0.5,medium\n",
            Level::Low,
        )
        .unwrap();
        assert_eq!(s.frame(0)[0].level, Level::Medium);
    }

    #[test]
    fn malformed_rows_report_line() {
        let err = parse("frame,cx,cy,w,h,confidence\n0,1,2,3,4,0.5\n1,x,2,3,4,0.5\n", Level::Low)
            .unwrap_err();
        match err {
            Error::Format { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let err = parse("frame,cx,cy,w,h,confidence\n0,1,2,3,4,1.5\n", Level::Low).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err:?}");
        let err = parse("frame,cx,cy,w,h,confidence\n0,1,2,3\n", Level::Low).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err:?}");
        assert!(parse("frame,x,y,w,h,confidence\n", Level::Low).is_err());
        assert!(parse("frame,cx,cy,w,h,confidence\n-1,1,2,3,4,0.5\n", Level::Low).is_err());
        assert!(parse("frame,cx,cy,w,h,confidence\n0,1,2,0,4,0.5\n", Level::Low).is_err());
    }

    fn arb_set() -> impl Strategy<Value = DetectionSet> {
        prop::collection::vec(
            (0usize..20, -50.0..600.0f64, -50.0..600.0f64, 0.1..80.0f64, 0.1..80.0f64, 0.0..=1.0f64),
            0..40,
        )
        .prop_map(|rows| {
            let mut s = DetectionSet::new();
            for (f, cx, cy, w, h, c) in rows {
                s.push(Detection::new(f, BBox::new(cx, cy, w, h), c, Level::Medium));
            }
            s
        })
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(set in arb_set(), with_level in any::<bool>()) {
            let mode = if with_level { LevelColumn::Include } else { LevelColumn::Omit };
            let mut buf = Vec::new();
            write_detections_to(&mut buf, &set, mode).unwrap();
            let mut back = read_detections_from(buf.as_slice(), "mem", Level::Medium).unwrap();
            back.ensure_frames(set.num_frames());
            prop_assert_eq!(back, set);
        }
    }
}

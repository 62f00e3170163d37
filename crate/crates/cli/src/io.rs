//! Point-file input and CSV output.

use std::io::Write;
use std::path::Path;

use cpgeom::experiments::Aggregate;
use cpgeom::geometry::Point;
use cpgeom::sampling::CountingMeasure;
use serde::Deserialize;

use crate::{invalid, CliResult};

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonPoint {
    Pair([f64; 2]),
    Named { x: f64, y: f64 },
}

fn checked(points: Vec<(f64, f64)>) -> CliResult<CountingMeasure> {
    points
        .into_iter()
        .map(|(x, y)| Point::try_new(x, y).map_err(invalid))
        .collect::<CliResult<Vec<Point>>>()
        .map(CountingMeasure::new)
}

/// Reads points from CSV (`x,y` header, by extension) or JSON.
pub fn read_points(path: &Path) -> CliResult<CountingMeasure> {
    let err = |e: &dyn std::fmt::Display| invalid(format!("{}: {e}", path.display()));
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mut reader = csv::Reader::from_path(path).map_err(|e| err(&e))?;
        let rows = reader
            .deserialize::<(f64, f64)>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(&e))?;
        return checked(rows);
    }
    let text = std::fs::read_to_string(path).map_err(|e| err(&e))?;
    let pts: Vec<JsonPoint> = serde_json::from_str(&text).map_err(|e| err(&e))?;
    checked(
        pts.into_iter()
            .map(|p| match p {
                JsonPoint::Pair([x, y]) => (x, y),
                JsonPoint::Named { x, y } => (x, y),
            })
            .collect(),
    )
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `name,value,se,reference`, one row per aggregate.
pub fn write_summary_csv(path: &Path, rows: &[Aggregate]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["name", "value", "se", "reference"])?;
    for a in rows {
        w.write_record([a.name.clone(), a.value.to_string(), opt(a.se), opt(a.reference)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn is_broken_pipe(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe)
}

/// Numeric rows as CSV to `path`, or to standard output.
pub fn write_rows(path: Option<&Path>, header: &[&str], rows: &[Vec<f64>]) -> Result<(), csv::Error> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

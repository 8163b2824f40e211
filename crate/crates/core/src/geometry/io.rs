//! Tessellation exchange formats.
//!
//! JSON: `{"window": [w, h], "cells": [{"vertices": [[x, y], ...], "visibility": "complete"|"clipped"}]}`
//! with the window's lower-left corner at the origin. CSV: one vertex per row
//! (`cell_id,x,y`) plus a `<file>.header.json` sidecar holding the window,
//! the per-cell visibility and the periodic flag.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::polygon::polygon_area;
use super::{Cell, Rect, SectionTessellation, Visibility};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub vertices: Vec<[f64; 2]>,
    pub visibility: Visibility,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TessellationFile {
    pub window: [f64; 2],
    pub cells: Vec<CellRecord>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub periodic: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CsvHeader {
    window: [f64; 2],
    visibility: Vec<Visibility>,
    #[serde(default)]
    periodic: bool,
}

impl From<&SectionTessellation> for TessellationFile {
    fn from(t: &SectionTessellation) -> Self {
        let (x0, y0) = (t.window.x0, t.window.y0);
        Self {
            window: [t.window.width(), t.window.height()],
            cells: t
                .cells
                .iter()
                .map(|c| CellRecord {
                    vertices: c.vertices.iter().map(|v| [v[0] - x0, v[1] - y0]).collect(),
                    visibility: c.visibility,
                })
                .collect(),
            periodic: t.periodic,
        }
    }
}

impl TryFrom<TessellationFile> for SectionTessellation {
    type Error = Error;

    fn try_from(f: TessellationFile) -> Result<Self> {
        let [w, h] = f.window;
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(invalid(format!("window must have positive size, got {:?}", f.window)));
        }
        if f.cells.is_empty() {
            return Err(Error::EmptyTessellation);
        }
        let cells = f
            .cells
            .into_iter()
            .enumerate()
            .map(|(i, rec)| {
                let mut vertices = rec.vertices;
                if vertices.len() < 3 || vertices.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(invalid(format!("cell {i} needs at least 3 finite vertices")));
                }
                if polygon_area(&vertices) < 0.0 {
                    vertices.reverse();
                }
                Ok(Cell { vertices, generator_id: i, visibility: rec.visibility, neighbors: vec![] })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SectionTessellation { cells, window: Rect::from_size(w, h), periodic: f.periodic, degenerate: false })
    }
}

pub fn write_tessellation_json(t: &SectionTessellation, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &TessellationFile::from(t))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_tessellation_json(path: &Path) -> Result<SectionTessellation> {
    let f: TessellationFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    f.try_into()
}

fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".header.json");
    PathBuf::from(s)
}

pub fn write_tessellation_csv(t: &SectionTessellation, path: &Path) -> Result<()> {
    let file = TessellationFile::from(t);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cell_id", "x", "y"])?;
    for (i, c) in file.cells.iter().enumerate() {
        for v in &c.vertices {
            w.write_record([i.to_string(), v[0].to_string(), v[1].to_string()])?;
        }
    }
    w.flush()?;
    let header = CsvHeader {
        window: file.window,
        visibility: file.cells.iter().map(|c| c.visibility).collect(),
        periodic: file.periodic,
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(header_path(path))?), &header)?;
    Ok(())
}

pub fn read_tessellation_csv(path: &Path) -> Result<SectionTessellation> {
    let header: CsvHeader = serde_json::from_reader(BufReader::new(File::open(header_path(path))?))?;
    let mut cells: Vec<Vec<[f64; 2]>> = vec![Vec::new(); header.visibility.len()];
    let mut r = csv::Reader::from_path(path)?;
    for rec in r.deserialize() {
        let (id, x, y): (usize, f64, f64) = rec?;
        cells
            .get_mut(id)
            .ok_or_else(|| invalid(format!("cell id {id} not declared in header")))?
            .push([x, y]);
    }
    TessellationFile {
        window: header.window,
        cells: cells
            .into_iter()
            .zip(header.visibility)
            .map(|(vertices, visibility)| CellRecord { vertices, visibility })
            .collect(),
        periodic: header.periodic,
    }
    .try_into()
}

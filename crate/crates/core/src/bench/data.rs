//! CSV data formats for the benchmark problems.
//!
//! Every file starts with a header row. Numbers use `.` as the decimal
//! separator; lines starting with `#` are ignored.
//!
//! | file          | header                              |
//! |---------------|-------------------------------------|
//! | image frames  | `frame,row,c0,c1,...`               |
//! | localizations | `frame,x_nm,y_nm,intensity`         |
//! | ratings       | `user,item,rating` (0-based)        |
//! | input/output  | `u,y`                               |

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub x: f64,
    pub y: f64,
    pub intensity: f64,
}

/// A stack of equally sized images, each stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameStack {
    pub grid_w: usize,
    pub grid_h: usize,
    pub frames: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatingsData {
    pub rows: usize,
    pub cols: usize,
    pub train: Vec<Rating>,
    pub test: Vec<Rating>,
    pub train_mean: f64,
}

impl RatingsData {
    /// Checks indices against the shape and computes the training mean.
    pub fn new(rows: usize, cols: usize, train: Vec<Rating>, test: Vec<Rating>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidInput("no training ratings".into()));
        }
        for r in train.iter().chain(&test) {
            if r.user >= rows || r.item >= cols {
                return Err(Error::InvalidInput(format!(
                    "rating ({}, {}) outside a {rows}x{cols} matrix",
                    r.user, r.item
                )));
            }
        }
        let train_mean = train.iter().map(|r| r.rating).sum::<f64>() / train.len() as f64;
        Ok(RatingsData { rows, cols, train, test, train_mean })
    }

    pub fn omega(&self) -> Vec<(usize, usize)> {
        self.train.iter().map(|r| (r.user, r.item)).collect()
    }

    /// Training ratings minus the training mean, in `omega` order.
    pub fn centered(&self) -> Vec<f64> {
        self.train.iter().map(|r| r.rating - self.train_mean).collect()
    }
}

/// An input/output record; the first `t_train` samples are for fitting.
#[derive(Clone, Debug, PartialEq)]
pub struct IOSequence {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub t_train: usize,
}

impl IOSequence {
    pub fn new(u: Vec<f64>, y: Vec<f64>, t_train: usize) -> Result<Self> {
        if u.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: u.len(), got: y.len() });
        }
        if t_train == 0 || t_train >= u.len() {
            return Err(Error::InvalidInput(format!(
                "t_train must lie in 1..{}, got {t_train}",
                u.len()
            )));
        }
        Ok(IOSequence { u, y, t_train })
    }

    pub fn train_input(&self) -> &[f64] {
        &self.u[..self.t_train]
    }

    pub fn train_output(&self) -> &[f64] {
        &self.y[..self.t_train]
    }

    pub fn test_output(&self) -> &[f64] {
        &self.y[self.t_train..]
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::parse(path, 1, "missing header row"));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(Table { header, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

fn expect_header(path: &Path, table: &Table, expected: &[&str]) -> Result<()> {
    if table.header.len() != expected.len() || table.header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::parse(
            path,
            1,
            format!("expected header {:?}, found {:?}", expected.join(","), table.header.join(",")),
        ));
    }
    Ok(())
}

fn parse_f64(path: &Path, line: u64, field: &str, name: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(Error::parse(path, line, format!("{name}: {field:?} is not a finite number"))),
    }
}

fn parse_index(path: &Path, line: u64, field: &str, name: &str) -> Result<usize> {
    field
        .parse::<usize>()
        .map_err(|_| Error::parse(path, line, format!("{name}: {field:?} is not a nonnegative integer")))
}

/// Reads an image stack. Every `(frame, row)` pair must appear exactly once.
pub fn load_frames(path: impl AsRef<Path>) -> Result<FrameStack> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let grid_w = table.header.len().saturating_sub(2);
    let mut expected = vec!["frame".to_string(), "row".to_string()];
    expected.extend((0..grid_w).map(|c| format!("c{c}")));
    let expected: Vec<&str> = expected.iter().map(String::as_str).collect();
    expect_header(path, &table, &expected)?;
    if grid_w == 0 {
        return Err(Error::parse(path, 1, "no pixel columns"));
    }

    let mut cells = Vec::with_capacity(table.rows.len());
    let mut seen = HashSet::new();
    let (mut n_frames, mut grid_h) = (0, 0);
    for (line, fields) in &table.rows {
        let frame = parse_index(path, *line, &fields[0], "frame")?;
        let row = parse_index(path, *line, &fields[1], "row")?;
        if !seen.insert((frame, row)) {
            return Err(Error::parse(path, *line, format!("duplicate frame {frame} row {row}")));
        }
        let values = fields[2..]
            .iter()
            .enumerate()
            .map(|(c, f)| parse_f64(path, *line, f, &format!("c{c}")))
            .collect::<Result<Vec<_>>>()?;
        n_frames = n_frames.max(frame + 1);
        grid_h = grid_h.max(row + 1);
        cells.push((frame, row, values));
    }
    if cells.is_empty() {
        return Err(Error::parse(path, 2, "no image rows"));
    }
    if cells.len() != n_frames * grid_h {
        return Err(Error::parse(
            path,
            0,
            format!("expected {n_frames} frames of {grid_h} rows, found {} rows", cells.len()),
        ));
    }
    let mut frames = vec![vec![0.0; grid_w * grid_h]; n_frames];
    for (frame, row, values) in cells {
        frames[frame][row * grid_w..(row + 1) * grid_w].copy_from_slice(&values);
    }
    Ok(FrameStack { grid_w, grid_h, frames })
}

/// Reads per-frame localizations; the result has `n_frames` entries.
pub fn load_localizations(path: impl AsRef<Path>, n_frames: Option<usize>) -> Result<Vec<Vec<Localization>>> {
    let path = path.as_ref();
    let table = read_table(path)?;
    expect_header(path, &table, &["frame", "x_nm", "y_nm", "intensity"])?;
    let mut out: Vec<Vec<Localization>> = vec![Vec::new(); n_frames.unwrap_or(0)];
    for (line, fields) in &table.rows {
        let frame = parse_index(path, *line, &fields[0], "frame")?;
        let loc = Localization {
            x: parse_f64(path, *line, &fields[1], "x_nm")?,
            y: parse_f64(path, *line, &fields[2], "y_nm")?,
            intensity: parse_f64(path, *line, &fields[3], "intensity")?,
        };
        match n_frames {
            Some(n) if frame >= n => {
                return Err(Error::parse(path, *line, format!("frame {frame} beyond the {n} frames of the stack")));
            }
            None if frame >= out.len() => out.resize(frame + 1, Vec::new()),
            _ => {}
        }
        out[frame].push(loc);
    }
    Ok(out)
}

/// Reads `user,item,rating` triples, rejecting repeated `(user, item)` pairs.
pub fn load_ratings(path: impl AsRef<Path>) -> Result<Vec<Rating>> {
    let path = path.as_ref();
    let table = read_table(path)?;
    expect_header(path, &table, &["user", "item", "rating"])?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        let user = parse_index(path, *line, &fields[0], "user")?;
        let item = parse_index(path, *line, &fields[1], "item")?;
        if !seen.insert((user, item)) {
            return Err(Error::parse(path, *line, format!("duplicate rating for ({user}, {item})")));
        }
        let rating = parse_f64(path, *line, &fields[2], "rating")?;
        out.push(Rating { user, item, rating });
    }
    Ok(out)
}

/// Reads an input/output record with header `u,y`.
pub fn load_io(path: impl AsRef<Path>, t_train: usize) -> Result<IOSequence> {
    let path = path.as_ref();
    let table = read_table(path)?;
    expect_header(path, &table, &["u", "y"])?;
    let mut u = Vec::with_capacity(table.rows.len());
    let mut y = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        u.push(parse_f64(path, *line, &fields[0], "u")?);
        y.push(parse_f64(path, *line, &fields[1], "y")?);
    }
    IOSequence::new(u, y, t_train).map_err(|e| Error::parse(path, 0, e.to_string()))
}

/// Reads one numeric column, chosen by the first matching header name.
pub fn load_column(path: impl AsRef<Path>, names: &[&str]) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let Some(col) = names.iter().find_map(|n| table.header.iter().position(|h| h == n)) else {
        return Err(Error::parse(path, 1, format!("no column named any of {names:?}")));
    };
    table
        .rows
        .iter()
        .map(|(line, fields)| parse_f64(path, *line, &fields[col], names[0]))
        .collect()
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_frames(path: impl AsRef<Path>, stack: &FrameStack) -> Result<()> {
    let mut s = String::from("frame,row");
    for c in 0..stack.grid_w {
        let _ = write!(s, ",c{c}");
    }
    s.push('\n');
    for (f, image) in stack.frames.iter().enumerate() {
        for (r, row) in image.chunks(stack.grid_w).enumerate() {
            let _ = write!(s, "{f},{r}");
            for x in row {
                let _ = write!(s, ",{x}");
            }
            s.push('\n');
        }
    }
    write_text(path.as_ref(), &s)
}

pub fn write_localizations(path: impl AsRef<Path>, per_frame: &[Vec<Localization>]) -> Result<()> {
    let mut s = String::from("frame,x_nm,y_nm,intensity\n");
    for (f, locs) in per_frame.iter().enumerate() {
        for l in locs {
            let _ = writeln!(s, "{f},{},{},{}", l.x, l.y, l.intensity);
        }
    }
    write_text(path.as_ref(), &s)
}

pub fn write_ratings(path: impl AsRef<Path>, ratings: &[Rating]) -> Result<()> {
    let mut s = String::from("user,item,rating\n");
    for r in ratings {
        let _ = writeln!(s, "{},{},{}", r.user, r.item, r.rating);
    }
    write_text(path.as_ref(), &s)
}

pub fn write_io(path: impl AsRef<Path>, u: &[f64], y: &[f64]) -> Result<()> {
    let mut s = String::from("u,y\n");
    for (a, b) in u.iter().zip(y) {
        let _ = writeln!(s, "{a},{b}");
    }
    write_text(path.as_ref(), &s)
}

//! Text checkpoints, fields separated by tabs:
//!
//! ```text
//! vulnkg-tucker  1
//! dims  <n_entities>  <n_relations>  <d_e>  <d_r>
//! entities  <sha256 of entities.tsv>
//! relations  <sha256 of relations.tsv>
//! standardizer  0|1
//! E
//! <one row per entity>
//! R
//! <one row per relation>
//! W
//! <one row per (i, j), d_e values over k>
//! S
//! <mean row>
//! <variance row>
//! end
//! ```
//!
//! Values are space separated in shortest round-trip form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Array3};

use super::{Standardizer, TuckerParams};
use crate::error::{Error, Result};
use crate::kg::Index;

const MAGIC: &str = "vulnkg-tucker\t1";

fn write_row<'a, W: Write>(out: &mut W, row: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    let mut first = true;
    for v in row {
        if !first {
            out.write_all(b" ")?;
        }
        write!(out, "{v}")?;
        first = false;
    }
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_checkpoint<W: Write>(
    mut out: W,
    params: &TuckerParams,
    entities: &Index,
    relations: &Index,
) -> Result<()> {
    if entities.len() != params.n_entities() || relations.len() != params.n_relations() {
        return Err(Error::Checkpoint("index sizes do not match the parameters".into()));
    }
    writeln!(out, "{MAGIC}")?;
    writeln!(
        out,
        "dims\t{}\t{}\t{}\t{}",
        params.n_entities(),
        params.n_relations(),
        params.edim(),
        params.rdim()
    )?;
    writeln!(out, "entities\t{}", entities.digest())?;
    writeln!(out, "relations\t{}", relations.digest())?;
    writeln!(out, "standardizer\t{}", params.standardizer.is_some() as u8)?;
    writeln!(out, "E")?;
    for row in params.e.rows() {
        write_row(&mut out, row)?;
    }
    writeln!(out, "R")?;
    for row in params.r.rows() {
        write_row(&mut out, row)?;
    }
    writeln!(out, "W")?;
    for plane in params.w.outer_iter() {
        for row in plane.rows() {
            write_row(&mut out, row)?;
        }
    }
    if let Some(s) = &params.standardizer {
        writeln!(out, "S")?;
        write_row(&mut out, &s.mean)?;
        write_row(&mut out, &s.var)?;
    }
    writeln!(out, "end")?;
    Ok(())
}

struct Lines<R: BufRead> {
    inner: std::io::Lines<R>,
    lineno: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        self.lineno += 1;
        match self.inner.next() {
            Some(line) => Ok(line?),
            None => Err(Error::format(self.lineno, "unexpected end of checkpoint")),
        }
    }

    fn header(&mut self, key: &str) -> Result<Vec<String>> {
        let line = self.next()?;
        let mut cols = line.split('\t');
        if cols.next() != Some(key) {
            return Err(Error::format(self.lineno, format!("expected `{key}`")));
        }
        Ok(cols.map(str::to_string).collect())
    }

    fn marker(&mut self, m: &str) -> Result<()> {
        if self.next()? != m {
            return Err(Error::format(self.lineno, format!("expected block `{m}`")));
        }
        Ok(())
    }

    fn row(&mut self, width: usize) -> Result<Vec<f64>> {
        let line = self.next()?;
        let row: Vec<f64> = line
            .split(' ')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(self.lineno, "bad number"))?;
        if row.len() != width {
            return Err(Error::format(
                self.lineno,
                format!("expected {width} values, got {}", row.len()),
            ));
        }
        Ok(row)
    }

    fn block(&mut self, rows: usize, width: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(rows * width);
        for _ in 0..rows {
            out.extend(self.row(width)?);
        }
        Ok(out)
    }
}

/// Reads a checkpoint, refusing it unless it was written against the same
/// entity and relation indexes.
pub fn read_checkpoint<R: Read>(
    input: R,
    entities: &Index,
    relations: &Index,
) -> Result<TuckerParams> {
    let mut lines = Lines {
        inner: BufReader::new(input).lines(),
        lineno: 0,
    };
    if lines.next()? != MAGIC {
        return Err(Error::Checkpoint("not a TuckER checkpoint".into()));
    }
    let dims: Vec<usize> = lines
        .header("dims")?
        .iter()
        .map(|d| d.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(2, "bad dims"))?;
    let [n_e, n_r, de, dr] = dims[..] else {
        return Err(Error::format(2, "expected four dims"));
    };
    if lines.header("entities")? != [entities.digest()] {
        return Err(Error::IndexMismatch { which: "entity" });
    }
    if lines.header("relations")? != [relations.digest()] {
        return Err(Error::IndexMismatch { which: "relation" });
    }
    let standardized = lines.header("standardizer")? == ["1"];

    lines.marker("E")?;
    let e = Array2::from_shape_vec((n_e, de), lines.block(n_e, de)?).expect("sized block");
    lines.marker("R")?;
    let r = Array2::from_shape_vec((n_r, dr), lines.block(n_r, dr)?).expect("sized block");
    lines.marker("W")?;
    let w = Array3::from_shape_vec((de, dr, de), lines.block(de * dr, de)?).expect("sized block");
    let standardizer = if standardized {
        lines.marker("S")?;
        Some(Standardizer {
            mean: Array1::from(lines.row(de)?),
            var: Array1::from(lines.row(de)?),
        })
    } else {
        None
    };
    lines.marker("end")?;
    let params = TuckerParams {
        e,
        r,
        w,
        standardizer,
    };
    if !params.is_finite() {
        return Err(Error::Checkpoint("non-finite parameters".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(
    path: &Path,
    params: &TuckerParams,
    entities: &Index,
    relations: &Index,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut out, params, entities, relations)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, entities: &Index, relations: &Index) -> Result<TuckerParams> {
    read_checkpoint(File::open(path)?, entities, relations)
}

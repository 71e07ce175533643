//! `x,cdf,pdf` text export with full double precision.

use super::{GridDistribution, Kind};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

pub const HEADER: &str = "x,cdf,pdf";

/// 17 significant digits, so a parse of the text gives back the same bits.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_csv_string(d: &GridDistribution) -> Result<String> {
    let (cdf, pdf) = match d.kind() {
        Kind::Cdf => (d.clone(), d.cdf_to_pdf()?),
        Kind::Pdf => (d.pdf_to_cdf()?, d.clone()),
    };
    let mut out = String::with_capacity(64 * d.len());
    out.push_str(HEADER);
    out.push('\n');
    for i in 0..d.len() {
        let _ = writeln!(out, "{},{},{}", fmt(d.positions()[i]), fmt(cdf.values()[i]), fmt(pdf.values()[i]));
    }
    Ok(out)
}

pub fn write_csv(d: &GridDistribution, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_csv_string(d)?)?;
    Ok(())
}

/// Reads the `x` and `cdf` columns back into a CDF distribution.
pub fn from_csv_str(text: &str) -> Result<GridDistribution> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        Some((_, h)) => return Err(Error::Parse { line: 1, msg: format!("expected header `{HEADER}`, got `{h}`") }),
        None => return Err(Error::Parse { line: 1, msg: "empty input".into() }),
    }
    let mut xs = Vec::new();
    let mut fs = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse { line: i + 1, msg: format!("expected 3 fields, got {}", fields.len()) });
        }
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| Error::Parse { line: i + 1, msg: format!("`{s}`: {e}") })
        };
        xs.push(parse(fields[0])?);
        fs.push(parse(fields[1])?);
        parse(fields[2])?;
    }
    let top = fs.iter().cloned().fold(0.0, f64::max);
    // a CDF topping out well below 1 is a sub-probability (knocked-out) distribution
    let mass = if top > 0.0 && top < 1.0 - 1e-6 { top } else { 1.0 };
    GridDistribution::with_mass(xs, fs, Kind::Cdf, mass)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<GridDistribution> {
    from_csv_str(&std::fs::read_to_string(path)?)
}

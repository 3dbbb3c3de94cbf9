//! CSV matrix and PGM heatmap writers.
//!
//! CSV layout: an empty first cell, the Doppler axis (Hz) across the first
//! row, the delay axis (s) down the first column, magnitudes in the body.
//! Every number is printed with nine significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::HarnessError;

/// A labelled real matrix, `values[tau_index][fd_index]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub tau_axis_sec: Vec<f64>,
    pub fd_axis_hz: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

fn num(out: &mut String, v: f64) {
    write!(out, "{v:.8e}").expect("writing to a String cannot fail");
}

pub fn csv_string(m: &Matrix) -> String {
    let mut out = String::new();
    for f in &m.fd_axis_hz {
        out.push(',');
        num(&mut out, *f);
    }
    out.push('\n');
    for (tau, row) in m.tau_axis_sec.iter().zip(&m.values) {
        num(&mut out, *tau);
        for v in row {
            out.push(',');
            num(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

/// Parses the layout written by [`csv_string`].
pub fn parse_csv(text: &str) -> Result<Matrix, HarnessError> {
    let bad = |line: usize, msg: &str| HarnessError::Parse(format!("csv line {line}: {msg}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let mut cells = header.split(',');
    if cells.next() != Some("") {
        return Err(bad(1, "first cell must be empty"));
    }
    let fd_axis_hz = cells
        .map(|c| c.parse::<f64>().map_err(|e| bad(1, &e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut tau_axis_sec = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let nums = line
            .split(',')
            .map(|c| c.parse::<f64>().map_err(|e| bad(i + 2, &e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if nums.len() != fd_axis_hz.len() + 1 {
            return Err(bad(i + 2, "wrong number of columns"));
        }
        tau_axis_sec.push(nums[0]);
        values.push(nums[1..].to_vec());
    }
    Ok(Matrix { tau_axis_sec, fd_axis_hz, values })
}

/// ASCII graymap, rows = delay, columns = Doppler, dB relative to the
/// matrix maximum clipped to `[−60, 0]` and mapped onto `0..=255`.
pub fn pgm_string(m: &Matrix) -> String {
    const FLOOR_DB: f64 = -60.0;
    let rows = m.values.len();
    let cols = m.values.first().map_or(0, Vec::len);
    let peak = m.values.iter().flatten().copied().fold(0.0, f64::max);
    let mut out = format!("P2\n{cols} {rows}\n255\n");
    let mut line = String::new();
    for v in m.values.iter().flatten() {
        let db = if peak > 0.0 && *v > 0.0 { 20.0 * (v / peak).log10() } else { FLOOR_DB };
        let level = ((db.clamp(FLOOR_DB, 0.0) - FLOOR_DB) / -FLOOR_DB * 255.0).round() as u8;
        let cell = level.to_string();
        if !line.is_empty() && line.len() + 1 + cell.len() > 70 {
            out.push_str(&line);
            out.push('\n');
            line.clear();
        }
        if !line.is_empty() {
            line.push(' ');
        }
        line.push_str(&cell);
    }
    if !line.is_empty() {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Matrix {
        Matrix {
            tau_axis_sec: vec![0.0, 1.0416666666666666e-6],
            fd_axis_hz: vec![-1875.0, 0.0, 1875.0],
            values: vec![vec![0.1, 1.0, 0.123456789123], vec![1e-9, 0.0, 0.5]],
        }
    }

    #[test]
    fn csv_layout() {
        let text = csv_string(&sample());
        let first = text.lines().next().unwrap();
        assert_eq!(first, ",-1.87500000e3,0.00000000e0,1.87500000e3");
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    #[test]
    fn csv_round_trip_at_printed_precision() {
        let text = csv_string(&sample());
        let back = parse_csv(&text).unwrap();
        assert_eq!(csv_string(&back), text);
        assert_eq!(back.values[0][2], 1.23456789e-1);
    }

    #[test]
    fn pgm_levels() {
        let text = pgm_string(&sample());
        let mut tokens = text.split_whitespace();
        assert_eq!(tokens.next(), Some("P2"));
        let body: Vec<u32> = tokens.skip(3).map(|t| t.parse().unwrap()).collect();
        // −20 dB sits two thirds of the way up; −6.02 dB maps to 229.
        assert_eq!(body, vec![170, 255, 178, 0, 0, 229]);
        assert!(text.lines().all(|l| l.len() <= 70));
    }
}

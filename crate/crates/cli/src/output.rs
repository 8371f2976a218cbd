//! File writers. Floats are printed as shortest round-trip decimals, so
//! identical results give identical bytes.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use qfsim_core::stats::EnsembleSummary;
use qfsim_core::CMat;

/// Column names of a `dim × dim` state in row-major order.
pub fn state_columns(dim: usize) -> Vec<String> {
    let label = |i: usize| -> String {
        if dim == 2 {
            ["e", "g"][i].to_string()
        } else {
            i.to_string()
        }
    };
    let mut out = Vec::with_capacity(2 * dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            let name = if dim == 2 {
                format!("rho_{}{}", label(i), label(j))
            } else {
                format!("rho_{}_{}", label(i), label(j))
            };
            out.push(format!("{name}_re"));
            out.push(format!("{name}_im"));
        }
    }
    out
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}

fn push_entries(line: &mut String, m: &CMat) {
    for z in m.as_slice() {
        line.push(',');
        line.push_str(&fmt_float(z.re));
        line.push(',');
        line.push_str(&fmt_float(z.im));
    }
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// `t` followed by the state entries, one row per time.
pub fn write_states(path: &Path, dim: usize, times: &[f64], states: &[CMat]) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,{}", state_columns(dim).join(","))?;
    for (t, m) in times.iter().zip(states) {
        let mut line = fmt_float(*t);
        push_entries(&mut line, m);
        writeln!(w, "{line}")?;
    }
    w.flush()
}

/// Mean state and componentwise standard errors; header only when `summary`
/// is absent.
pub fn write_ensemble(path: &Path, dim: usize, summary: Option<&EnsembleSummary>) -> io::Result<()> {
    let mut w = create(path)?;
    let cols = state_columns(dim);
    let se: Vec<String> = cols.iter().map(|c| format!("{c}_se")).collect();
    writeln!(w, "t,{},{}", cols.join(","), se.join(","))?;
    if let Some(s) = summary {
        for ((t, m), e) in s.times.iter().zip(&s.mean).zip(&s.stderr) {
            let mut line = fmt_float(*t);
            push_entries(&mut line, m);
            push_entries(&mut line, e);
            writeln!(w, "{line}")?;
        }
    }
    w.flush()
}

/// Generic CSV table from a header and rows of floats.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt_float(x)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> io::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()
}

pub fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()
}

//! word2vec-compatible text format.
//!
//! ```text
//! <count> <dims>
//! <channel_id> <v1> ... <vdims>
//! ```
//!
//! Values are written with 6 significant digits, like C's `%g`.

use std::io::Write;
use std::path::Path;

use super::EmbeddingSet;
use crate::error::{Error, Result};
use crate::util;

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Format like C's `%g`: 6 significant digits, trailing zeros removed,
/// scientific notation outside `1e-4 <= |x| < 1e6`.
pub fn format_sig6(x: f32) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let x = x as f64;
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

pub fn write_text(set: &EmbeddingSet, w: &mut impl Write) -> Result<()> {
    let io = |e| Error::io("<embeddings>", e);
    writeln!(w, "{} {}", set.len(), set.dims()).map_err(io)?;
    let mut line = String::new();
    for (id, v) in set.iter() {
        line.clear();
        line.push_str(id);
        for &x in v {
            line.push(' ');
            line.push_str(&format_sig6(x));
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    Ok(())
}

pub fn read_text(path: &Path) -> Result<EmbeddingSet> {
    let text = util::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::format(path, 1, "missing header"))?;
    let mut head = header.split_whitespace().map(str::parse::<usize>);
    let (count, dims) = match (head.next(), head.next(), head.next()) {
        (Some(Ok(c)), Some(Ok(d)), None) if d > 0 => (c, d),
        _ => return Err(Error::format(path, 1, "header must be `<count> <dims>`")),
    };
    let mut entries = Vec::with_capacity(count);
    for (i, line) in lines {
        let mut parts = line.split_whitespace();
        let id = parts.next().expect("non-empty line").to_string();
        let v: Vec<f32> = parts
            .map(|p| p.parse::<f32>().map_err(|e| Error::format(path, i + 1, format!("{p:?}: {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != dims {
            return Err(Error::format(path, i + 1, format!("expected {dims} values, found {}", v.len())));
        }
        entries.push((id, v));
    }
    if entries.len() != count {
        return Err(Error::format(
            path,
            1,
            format!("header says {count} vectors, file has {}", entries.len()),
        ));
    }
    EmbeddingSet::new(dims, entries).map_err(|e| Error::format(path, 1, e.to_string()))
}

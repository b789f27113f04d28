//! Plain-text distributions: a header line `n d`, then `n` rows of `d`
//! coordinates, each optionally followed by a weight. Without weights the
//! distribution is uniform.

use std::fmt::Write as _;
use std::path::Path;

use crate::diffcore::Tensor;
use crate::embedder::EmpiricalDistribution;
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Distribution(format!("line {line}: {msg}"))
}

pub fn parse(text: &str) -> Result<EmpiricalDistribution> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| Error::Distribution("empty file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| parse_err(hl, format!("bad header {t:?}: {e}"))))
        .collect::<Result<_>>()?;
    let [n, d] = dims[..] else {
        return Err(parse_err(hl, "header must be `n d`"));
    };
    if n == 0 || d == 0 {
        return Err(parse_err(hl, "n and d must be positive"));
    }
    let mut points = Vec::with_capacity(n * d);
    let mut weights = Vec::with_capacity(n);
    let mut weighted: Option<bool> = None;
    for (ln, line) in lines {
        if weights.len() == n {
            return Err(parse_err(ln, format!("more than {n} rows")));
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| parse_err(ln, format!("{t:?}: {e}"))))
            .collect::<Result<_>>()?;
        let has_w = match vals.len() {
            c if c == d => false,
            c if c == d + 1 => true,
            c => return Err(parse_err(ln, format!("expected {d} or {} values, found {c}", d + 1))),
        };
        if *weighted.get_or_insert(has_w) != has_w {
            return Err(parse_err(ln, "weight column present on some rows only"));
        }
        points.extend_from_slice(&vals[..d]);
        weights.push(if has_w { vals[d] } else { 1.0 });
    }
    if weights.len() != n {
        return Err(Error::Distribution(format!(
            "header promises {n} rows, found {}",
            weights.len()
        )));
    }
    let points = Tensor::new(n, d, points).map_err(|e| Error::Distribution(e.to_string()))?;
    if weighted == Some(true) {
        EmpiricalDistribution::normalized(points, weights)
    } else {
        EmpiricalDistribution::uniform(points)
    }
}

pub fn read(path: &Path) -> Result<EmpiricalDistribution> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Distribution(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

/// Text form; weights are written only when not uniform. Values use the
/// shortest representation that parses back exactly.
pub fn format(dist: &EmpiricalDistribution) -> String {
    let p = dist.points();
    let mut s = format!("{} {}\n", p.rows(), p.cols());
    let uniform = dist.is_uniform();
    for r in 0..p.rows() {
        let mut row: Vec<String> = p.row_slice(r).iter().map(|v| format!("{v:?}")).collect();
        if !uniform {
            row.push(format!("{:?}", dist.weights()[r]));
        }
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

pub fn write(path: &Path, dist: &EmpiricalDistribution) -> Result<()> {
    super::checkpoint::write_atomic(path, format(dist).as_bytes())
}

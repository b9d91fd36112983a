//! Text file formats: tensors, factor matrices, observations, and simple
//! `key = value` configuration files.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::sampling::{Observations, SampleSet};
use crate::tensor::Tensor3;

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_str(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Tensor file: line 1 = `n1 n2 n3`, then whitespace-separated values in
/// linear order (`i + j*n1 + k*n1*n2`).
pub fn write_tensor(path: &Path, t: &Tensor3) -> Result<()> {
    let mut out = String::new();
    let (n1, n2, n3) = t.dims();
    out.push_str(&format!("{} {} {}\n", n1, n2, n3));
    for chunk in t.values().chunks(n1.max(1)) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{:?}", v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    write_str(path, &out)
}

pub fn read_tensor(path: &Path) -> Result<Tensor3> {
    let text = read_to_string(path)?;
    let mut tokens = text.split_whitespace();
    let ctx = path.display().to_string();
    let mut dim = || -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::parse(&ctx, "missing dimension"))?
            .parse()
            .map_err(|e| Error::parse(&ctx, format!("bad dimension: {}", e)))
    };
    let dims = (dim()?, dim()?, dim()?);
    let mut rest = text.split_whitespace().skip(3);
    let mut values = Vec::with_capacity(dims.0 * dims.1 * dims.2);
    for _ in 0..dims.0 * dims.1 * dims.2 {
        let tok = rest
            .next()
            .ok_or_else(|| Error::parse(&ctx, "too few tensor values"))?;
        values.push(
            tok.parse()
                .map_err(|e| Error::parse(&ctx, format!("bad value {:?}: {}", tok, e)))?,
        );
    }
    if rest.next().is_some() {
        return Err(Error::parse(&ctx, "trailing tokens after tensor values"));
    }
    Tensor3::new(dims, values)
}

/// Factor file: line 1 = `rows F`, then row-major values.
pub fn write_factor(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{:?}", v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    write_str(path, &out)
}

pub fn read_factor(path: &Path) -> Result<Array2<f64>> {
    let text = read_to_string(path)?;
    let ctx = path.display().to_string();
    let mut tokens = text.split_whitespace();
    let rows: usize = tokens
        .next()
        .ok_or_else(|| Error::parse(&ctx, "missing row count"))?
        .parse()
        .map_err(|e| Error::parse(&ctx, format!("bad row count: {}", e)))?;
    let cols: usize = tokens
        .next()
        .ok_or_else(|| Error::parse(&ctx, "missing column count"))?
        .parse()
        .map_err(|e| Error::parse(&ctx, format!("bad column count: {}", e)))?;
    let values: Vec<f64> = tokens
        .map(|t| {
            t.parse()
                .map_err(|e| Error::parse(&ctx, format!("bad value {:?}: {}", t, e)))
        })
        .collect::<Result<_>>()?;
    if values.len() != rows * cols {
        return Err(Error::parse(
            &ctx,
            format!("expected {} values, got {}", rows * cols, values.len()),
        ));
    }
    Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::parse(&ctx, format!("shape error: {}", e)))
}

/// Observations file: line 1 = `n1 n2 n3 sigma`, then one `i j k y` line per
/// sample.
pub fn write_observations(path: &Path, obs: &Observations) -> Result<()> {
    let (n1, n2, n3) = obs.dims();
    let mut out = format!("{} {} {} {:?}\n", n1, n2, n3, obs.sigma);
    for (&(i, j, k), y) in obs.sample_set.indices().iter().zip(&obs.values) {
        out.push_str(&format!("{} {} {} {:?}\n", i, j, k, y));
    }
    write_str(path, &out)
}

pub fn read_observations(path: &Path) -> Result<Observations> {
    let text = read_to_string(path)?;
    let ctx = path.display().to_string();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(&ctx, "empty observations file"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 4 {
        return Err(Error::parse(&ctx, "header must be `n1 n2 n3 sigma`"));
    }
    let parse_dim = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|e| Error::parse(&ctx, format!("bad dimension {:?}: {}", s, e)))
    };
    let dims = (
        parse_dim(head[0])?,
        parse_dim(head[1])?,
        parse_dim(head[2])?,
    );
    let sigma: f64 = head[3]
        .parse()
        .map_err(|e| Error::parse(&ctx, format!("bad sigma: {}", e)))?;
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(Error::parse(&ctx, format!("bad sample line {:?}", line)));
        }
        indices.push((
            parse_dim(parts[0])?,
            parse_dim(parts[1])?,
            parse_dim(parts[2])?,
        ));
        values.push(
            parts[3]
                .parse()
                .map_err(|e| Error::parse(&ctx, format!("bad value: {}", e)))?,
        );
    }
    let set = SampleSet::new(dims, indices)?;
    Observations::new(set, values, sigma)
}

/// Parses `key = value` lines ('#' starts a comment; '=' optional, the first
/// token is the key and the remainder the value).
pub fn parse_key_values(text: &str, ctx: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => line
                .split_once(char::is_whitespace)
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(ctx, format!("bad config line {:?}", raw)))?,
        };
        if key.is_empty() || value.is_empty() {
            return Err(Error::parse(ctx, format!("bad config line {:?}", raw)));
        }
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let text = read_to_string(path)?;
    parse_key_values(&text, &path.display().to_string())
}

/// Appends per-iteration solver history as CSV.
pub fn write_history_csv(path: &Path, history: &[crate::solver::IterationRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let ctx = path.display().to_string();
    let io_err = |e: std::io::Error| Error::io(ctx.clone(), e);
    writeln!(w, "t,delta1,delta2,objective,rho").map_err(io_err)?;
    for rec in history {
        writeln!(
            w,
            "{},{:?},{:?},{:?},{:?}",
            rec.t, rec.delta1, rec.delta2, rec.objective, rec.rho
        )
        .map_err(|e| Error::io(ctx.clone(), e))?;
    }
    Ok(())
}

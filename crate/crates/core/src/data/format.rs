//! FCTRAJ v1, a line-oriented text format:
//!
//! ```text
//! FCTRAJ v1 d_s=<int> d_a=<int> dt=<float>
//! <d_s + d_a floats separated by single spaces>   one line per step
//!                                                 blank line between trajectories
//! ```
//!
//! Floats are written with 17 significant digits so parsing restores the
//! exact bits. Only states, actions and `dt` are stored; `meta` and
//! `rewards` are not part of the format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::Trajectory;
use crate::error::{Error, Result};

const HEADER: &str = "FCTRAJ v1";

fn write_float(out: &mut String, v: f64) {
    // `{:.16e}` is 17 significant digits.
    let _ = write!(out, "{v:.16e}");
}

pub fn serialize(trajs: &[Trajectory]) -> String {
    let mut out = String::new();
    for (i, traj) in trajs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "{HEADER} d_s={} d_a={} dt=", traj.d_s(), traj.d_a());
        write_float(&mut out, traj.dt);
        out.push('\n');
        for t in 0..traj.len() {
            let row = traj.states.row(t).into_iter().chain(traj.actions.row(t));
            for (j, &v) in row.enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                write_float(&mut out, v);
            }
            out.push('\n');
        }
    }
    out
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

fn header_field<'a>(tok: Option<&'a str>, key: &str, line: usize) -> Result<&'a str> {
    tok.and_then(|t| t.strip_prefix(key)).and_then(|t| t.strip_prefix('=')).ok_or_else(|| parse_err(line, format!("expected {key}=<value>")))
}

pub fn parse(text: &str) -> Result<Vec<Trajectory>> {
    let mut trajs = Vec::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
    loop {
        while matches!(lines.peek(), Some((_, l)) if l.is_empty()) {
            lines.next();
        }
        let Some((ln, header)) = lines.next() else { break };
        let rest = header.strip_prefix(HEADER).ok_or_else(|| parse_err(ln, "expected FCTRAJ v1 header"))?;
        let mut toks = rest.split_whitespace();
        let int = |tok, key| -> Result<usize> {
            header_field(tok, key, ln)?.parse().map_err(|e| parse_err(ln, format!("{key}: {e}")))
        };
        let d_s = int(toks.next(), "d_s")?;
        let d_a = int(toks.next(), "d_a")?;
        let dt: f64 = header_field(toks.next(), "dt", ln)?.parse().map_err(|e| parse_err(ln, format!("dt: {e}")))?;
        if toks.next().is_some() {
            return Err(parse_err(ln, "trailing header fields"));
        }
        let width = d_s + d_a;
        let mut values = Vec::new();
        let mut steps = 0;
        while let Some(&(ln, line)) = lines.peek() {
            if line.is_empty() || line.starts_with(HEADER) {
                break;
            }
            lines.next();
            let before = values.len();
            for tok in line.split(' ') {
                values.push(tok.parse::<f64>().map_err(|e| parse_err(ln, format!("{tok:?}: {e}")))?);
            }
            if values.len() - before != width {
                return Err(parse_err(ln, format!("expected {width} values, found {}", values.len() - before)));
            }
            steps += 1;
        }
        let rows = Array2::from_shape_vec((steps, width), values).expect("row widths checked");
        let states = rows.slice(ndarray::s![.., ..d_s]).to_owned();
        let actions = rows.slice(ndarray::s![.., d_s..]).to_owned();
        trajs.push(Trajectory::new(states, actions, dt).map_err(|e| parse_err(ln, e))?);
    }
    Ok(trajs)
}

pub fn write_trajectories(path: impl AsRef<Path>, trajs: &[Trajectory]) -> Result<()> {
    fs::write(path, serialize(trajs))?;
    Ok(())
}

pub fn read_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    parse(&fs::read_to_string(path)?)
}

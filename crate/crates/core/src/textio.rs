//! Line-based text formats for MDPs, dense matrices and edge lists.
//!
//! Blank lines and `#` comments are ignored. Numbers are written with 17
//! significant digits so a write/read round trip is exact.
//!
//! MDP:
//!
//! ```text
//! states 3
//! agents 2
//! gamma 0.9
//! reward_bound 1
//! transition
//! <S rows of S numbers>
//! rewards 0
//! <S rows of S numbers>
//! rewards 1
//! ...
//! ```
//!
//! Matrix: a `rows cols` header followed by the rows. Edge list: an
//! `agents N` header followed by one `u v` pair per line.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::fmt17;
use crate::mdp::{MarkovChain, MultiAgentMdp};
use crate::network::CommGraph;

struct Lines<'a> {
    path: &'a str,
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, path: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
                .filter(|(_, l)| !l.is_empty()),
        );
        Self { path, inner: it.peekable(), last: 0 }
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_string(), line, msg: msg.into() }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some((n, l)) => {
                self.last = n;
                Ok((n, l))
            }
            None => Err(self.err(self.last + 1, format!("unexpected end of input, expected {what}"))),
        }
    }

    fn at_end(&mut self) -> bool {
        self.inner.peek().is_none()
    }

    /// `key value` on one line.
    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (n, line) = self.next(key)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(n, format!("expected `{key} <value>`")));
        }
        let value = parts.next().ok_or_else(|| self.err(n, format!("missing value for `{key}`")))?;
        if parts.next().is_some() {
            return Err(self.err(n, format!("trailing tokens after `{key}`")));
        }
        value.parse().map_err(|_| self.err(n, format!("cannot parse `{value}` for `{key}`")))
    }

    fn keyword(&mut self, key: &str) -> Result<()> {
        let (n, line) = self.next(key)?;
        if line != key {
            return Err(self.err(n, format!("expected `{key}`, found `{line}`")));
        }
        Ok(())
    }

    fn row(&mut self, cols: usize) -> Result<Vec<f64>> {
        let (n, line) = self.next("a matrix row")?;
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(n, format!("not a number: `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != cols {
            return Err(self.err(n, format!("expected {cols} entries, found {}", row.len())));
        }
        Ok(row)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.row(cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn finish(&mut self) -> Result<()> {
        match self.inner.next() {
            Some((n, _)) => Err(self.err(n, "unexpected trailing content")),
            None => Ok(()),
        }
    }
}

fn push_matrix(out: &mut String, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|x| fmt17(*x)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

pub fn write_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    push_matrix(&mut out, m);
    out
}

pub fn parse_matrix(text: &str, path: &str) -> Result<DMatrix<f64>> {
    let mut lines = Lines::new(text, path);
    let (n, header) = lines.next("a `rows cols` header")?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| lines.err(n, format!("bad dimension `{t}`"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(lines.err(n, "header must be `rows cols`"));
    };
    let m = lines.matrix(rows, cols)?;
    lines.finish()?;
    Ok(m)
}

pub fn write_mdp(mdp: &MultiAgentMdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "states {}", mdp.num_states());
    let _ = writeln!(out, "agents {}", mdp.num_agents());
    let _ = writeln!(out, "gamma {}", fmt17(mdp.gamma()));
    let _ = writeln!(out, "reward_bound {}", fmt17(mdp.reward_bound()));
    out.push_str("transition\n");
    push_matrix(&mut out, mdp.chain().transition());
    for (v, r) in mdp.rewards().iter().enumerate() {
        let _ = writeln!(out, "rewards {v}");
        push_matrix(&mut out, r);
    }
    out
}

/// Parses and validates an MDP. Component validation errors are reported
/// against the line of the offending block.
pub fn parse_mdp(text: &str, path: &str) -> Result<MultiAgentMdp> {
    let mut lines = Lines::new(text, path);
    let s: usize = lines.keyed("states")?;
    let n: usize = lines.keyed("agents")?;
    let gamma: f64 = lines.keyed("gamma")?;
    let gamma_line = lines.last;
    let bound: f64 = lines.keyed("reward_bound")?;
    lines.keyword("transition")?;
    let p_line = lines.last;
    let p = lines.matrix(s, s)?;
    let chain = MarkovChain::new(p).map_err(|e| lines.err(p_line, e.to_string()))?;
    let mut rewards = Vec::with_capacity(n);
    for v in 0..n {
        let id: usize = lines.keyed("rewards")?;
        if id != v {
            return Err(lines.err(lines.last, format!("expected reward block {v}, found {id}")));
        }
        rewards.push(lines.matrix(s, s)?);
    }
    if !lines.at_end() {
        lines.finish()?;
    }
    MultiAgentMdp::new(chain, rewards, gamma, bound).map_err(|e| lines.err(gamma_line, e.to_string()))
}

pub fn write_edges(g: &CommGraph) -> String {
    let mut out = format!("agents {}\n", g.num_agents());
    for (u, v) in g.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

pub fn parse_edges(text: &str, path: &str) -> Result<CommGraph> {
    let mut lines = Lines::new(text, path);
    let n: usize = lines.keyed("agents")?;
    let mut edges = Vec::new();
    while !lines.at_end() {
        let (ln, line) = lines.next("an edge")?;
        let ends: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| lines.err(ln, format!("bad agent index `{t}`"))))
            .collect::<Result<_>>()?;
        let [u, v] = ends[..] else {
            return Err(lines.err(ln, "an edge is `u v`"));
        };
        if u >= n || v >= n || u == v {
            return Err(lines.err(ln, format!("invalid edge ({u}, {v}) for {n} agents")));
        }
        edges.push((u, v));
    }
    CommGraph::new(n, edges)
}

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

pub fn read_mdp(path: &Path) -> Result<MultiAgentMdp> {
    parse_mdp(&read(path)?, &path.display().to_string())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&read(path)?, &path.display().to_string())
}

pub fn read_edges(path: &Path) -> Result<CommGraph> {
    parse_edges(&read(path)?, &path.display().to_string())
}

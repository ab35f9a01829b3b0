//! Plain-text schedule format.
//!
//! ```text
//! next-schedule 1
//! agents 3
//! window 1
//! rule metropolis
//! floor 0.001
//! slots 1
//! slot 0
//! in 0: 1
//! in 1: 0 2
//! in 2: 1
//! w 0: 0.6666666666666667 0.3333333333333333 0
//! w 1: 0.3333333333333333 0.3333333333333333 0.3333333333333333
//! w 2: 0 0.3333333333333333 0.6666666666666667
//! end
//! ```
//!
//! `in i:` lists the in-neighbors of agent `i` (the directed snapshot, before
//! any symmetrization). `w i:` is row `i` of the weight matrix. Floats use the
//! shortest representation that round-trips exactly. Blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{Digraph, GraphError, GraphSchedule, WeightMatrix, WeightRule};

const MAGIC: &str = "next-schedule 1";

pub fn write_schedule(schedule: &GraphSchedule) -> String {
    let n = schedule.agent_count();
    let mut out = String::new();
    let floor = schedule.weights(0).floor();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "agents {n}").unwrap();
    writeln!(out, "window {}", schedule.window()).unwrap();
    writeln!(out, "rule {}", schedule.rule().as_str()).unwrap();
    writeln!(out, "floor {floor}").unwrap();
    writeln!(out, "slots {}", schedule.period()).unwrap();
    for k in 0..schedule.period() {
        writeln!(out, "slot {k}").unwrap();
        let snap = schedule.snapshot(k);
        for i in 0..n {
            let nb: Vec<String> = snap.in_neighbors(i).iter().map(|j| j.to_string()).collect();
            if nb.is_empty() {
                writeln!(out, "in {i}:").unwrap();
            } else {
                writeln!(out, "in {i}: {}", nb.join(" ")).unwrap();
            }
        }
        let w = schedule.weights(k);
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{}", w.get(i, j))).collect();
            writeln!(out, "w {i}: {}", row.join(" ")).unwrap();
        }
    }
    writeln!(out, "end").unwrap();
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
        );
        Self { inner: it.peekable() }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str), GraphError> {
        self.inner.next().ok_or(GraphError::Parse {
            line: 0,
            message: "unexpected end of input".into(),
        })
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str), GraphError> {
        let (no, line) = self.next_line()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok((no, rest.trim())),
            _ if line == key => Ok((no, "")),
            _ => Err(perr(no, format!("expected `{key}`, found `{line}`"))),
        }
    }

    fn keyed_num<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, GraphError> {
        let (no, rest) = self.keyed(key)?;
        rest.parse().map_err(|_| perr(no, format!("bad value for `{key}`: `{rest}`")))
    }
}

fn perr(line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line,
        message: message.into(),
    }
}

fn indexed<'a>(no: usize, rest: &'a str, expect: usize) -> Result<&'a str, GraphError> {
    let (idx, tail) = rest
        .split_once(':')
        .ok_or_else(|| perr(no, "missing `:` after agent index"))?;
    let idx: usize = idx.trim().parse().map_err(|_| perr(no, "bad agent index"))?;
    if idx != expect {
        return Err(perr(no, format!("expected agent {expect}, found {idx}")));
    }
    Ok(tail.trim())
}

pub fn parse_schedule(text: &str) -> Result<GraphSchedule, GraphError> {
    let mut lines = Lines::new(text);
    let (no, head) = lines.next_line()?;
    if head != MAGIC {
        return Err(perr(no, format!("expected header `{MAGIC}`")));
    }
    let agents: usize = lines.keyed_num("agents")?;
    let window: usize = lines.keyed_num("window")?;
    let (no, rule) = lines.keyed("rule")?;
    let rule = match rule {
        "metropolis" => WeightRule::Metropolis,
        "custom" => WeightRule::Custom,
        other => return Err(perr(no, format!("unknown weight rule `{other}`"))),
    };
    let floor: f64 = lines.keyed_num("floor")?;
    let slots: usize = lines.keyed_num("slots")?;
    let mut snapshots = Vec::with_capacity(slots);
    let mut weights = Vec::with_capacity(slots);
    for k in 0..slots {
        let (no, idx) = lines.keyed("slot")?;
        if idx.parse::<usize>().ok() != Some(k) {
            return Err(perr(no, format!("expected slot {k}")));
        }
        let mut edges = Vec::new();
        for i in 0..agents {
            let (no, rest) = lines.keyed("in")?;
            let tail = indexed(no, rest, i)?;
            for tok in tail.split_whitespace() {
                let j: usize = tok.parse().map_err(|_| perr(no, format!("bad neighbor `{tok}`")))?;
                edges.push((j, i));
            }
        }
        let snap = Digraph::new(agents, edges).map_err(|e| perr(no, e.to_string()))?;
        let mut w = DMatrix::zeros(agents, agents);
        let mut last = no;
        for i in 0..agents {
            let (no, rest) = lines.keyed("w")?;
            last = no;
            let tail = indexed(no, rest, i)?;
            let row: Vec<f64> = tail
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| perr(no, format!("bad weight `{t}`"))))
                .collect::<Result<_, _>>()?;
            if row.len() != agents {
                return Err(perr(no, format!("expected {agents} weights, found {}", row.len())));
            }
            for (j, v) in row.into_iter().enumerate() {
                w[(i, j)] = v;
            }
        }
        weights.push(WeightMatrix::new(w, floor).map_err(|e| perr(last, e.to_string()))?);
        snapshots.push(snap);
    }
    lines.keyed("end")?;
    GraphSchedule::from_parts(snapshots, weights, window, rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_b_connected_schedule;

    #[test]
    fn roundtrip_is_exact() {
        let base = Digraph::erdos_renyi(9, 0.35, 4).unwrap();
        let s = generate_b_connected_schedule(&base, 3, 9, 21).unwrap();
        let text = write_schedule(&s);
        let back = parse_schedule(&text).unwrap();
        assert_eq!(back.snapshots(), s.snapshots());
        for n in 0..s.period() {
            assert_eq!(back.weights(n), s.weights(n));
        }
        assert_eq!(write_schedule(&back), text);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let s = GraphSchedule::constant(Digraph::path(3).unwrap()).unwrap();
        let text = write_schedule(&s).replace("w 1:", "w 7:");
        match parse_schedule(&text) {
            Err(GraphError::Parse { line, .. }) => assert_eq!(line, 12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn doc_example_parses() {
        let text = "next-schedule 1\nagents 3\nwindow 1\nrule metropolis\nfloor 0.001\nslots 1\nslot 0\n\
                    in 0: 1\nin 1: 0 2\nin 2: 1\n\
                    w 0: 0.6666666666666667 0.3333333333333333 0\n\
                    w 1: 0.3333333333333333 0.3333333333333333 0.3333333333333333\n\
                    w 2: 0 0.3333333333333333 0.6666666666666667\nend\n";
        let s = parse_schedule(text).unwrap();
        assert_eq!(s.agent_count(), 3);
    }
}

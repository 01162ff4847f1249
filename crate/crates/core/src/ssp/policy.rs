//! Exported policy tables and their text format.
//!
//! ```text
//! # idnc policy
//! # M=2 N=2 eps=0.2,0.3 residual=0
//! 15 2 v(1,1) v(2,1)
//! ```
//!
//! Each body line is `<state-id> <k> v(i1,j1) ... v(ik,jk)`. The absorbing
//! state has no entry.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{PolicyAndValue, SspModel};
use crate::error::{IdncError, Result};
use crate::graph::{Clique, Vertex};
use crate::model::FeedbackMatrix;

/// State-id to clique mapping, replayable as a scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub num_receivers: usize,
    pub num_packets: usize,
    pub erasure_probs: Vec<f64>,
    pub residual: f64,
    pub entries: BTreeMap<u64, Clique>,
}

/// Turns a solved policy into a table keyed by state id.
pub fn export_policy(pv: &PolicyAndValue, model: &SspModel) -> Result<PolicyTable> {
    if pv.policy.len() != model.num_states() {
        return Err(IdncError::InvalidConfig(format!(
            "policy covers {} states, model has {}",
            pv.policy.len(),
            model.num_states()
        )));
    }
    let f0 = model.initial_matrix();
    let mut entries = BTreeMap::new();
    for (s, action) in pv.policy.iter().enumerate() {
        if let Some(k) = action {
            entries.insert(model.state_id(s), model.action(s, *k));
        }
    }
    Ok(PolicyTable {
        num_receivers: f0.num_receivers(),
        num_packets: f0.num_packets(),
        erasure_probs: model.erasure_probs().to_vec(),
        residual: pv.residual,
        entries,
    })
}

impl PolicyTable {
    /// Clique the policy sends in state `f`.
    pub fn select(&self, f: &FeedbackMatrix) -> Result<Clique> {
        let id = f.state_id()?;
        self.entries.get(&id).cloned().ok_or(IdncError::UnknownState(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let eps: Vec<String> = self.erasure_probs.iter().map(|e| e.to_string()).collect();
        let mut s = String::from("# idnc policy\n");
        let _ = writeln!(
            s,
            "# M={} N={} eps={} residual={:e}",
            self.num_receivers,
            self.num_packets,
            eps.join(","),
            self.residual
        );
        for (id, clique) in &self.entries {
            let _ = write!(s, "{id} {}", clique.len());
            for v in clique.vertices() {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut header: BTreeMap<String, String> = BTreeMap::new();
        let mut entries = BTreeMap::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some((k, v)) = tok.split_once('=') {
                        header.insert(k.to_string(), v.to_string());
                    }
                }
                continue;
            }
            let bad = |msg: &str| IdncError::Parse(format!("policy line {}: {msg}", lineno + 1));
            let mut toks = line.split_whitespace();
            let id: u64 = toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad state id"))?;
            let k: usize = toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad vertex count"))?;
            let vertices = toks.map(parse_vertex).collect::<Option<Vec<Vertex>>>().ok_or_else(|| bad("bad vertex"))?;
            if vertices.len() != k {
                return Err(bad("vertex count mismatch"));
            }
            entries.insert(id, Clique::new(vertices));
        }
        let get = |key: &str| header.get(key).ok_or_else(|| IdncError::Parse(format!("policy header lacks `{key}`")));
        let num = |key: &str| -> Result<usize> {
            get(key)?.parse().map_err(|_| IdncError::Parse(format!("bad `{key}` in policy header")))
        };
        let erasure_probs = get("eps")?
            .split(',')
            .map(|t| t.parse::<f64>().map_err(|_| IdncError::Parse(format!("bad erasure `{t}`"))))
            .collect::<Result<Vec<f64>>>()?;
        let residual = get("residual")?
            .parse()
            .map_err(|_| IdncError::Parse("bad residual in policy header".into()))?;
        Ok(PolicyTable { num_receivers: num("M")?, num_packets: num("N")?, erasure_probs, residual, entries })
    }
}

fn parse_vertex(tok: &str) -> Option<Vertex> {
    let inner = tok.strip_prefix("v(")?.strip_suffix(')')?;
    let (i, j) = inner.split_once(',')?;
    Some(Vertex::new(i.trim().parse().ok()?, j.trim().parse().ok()?))
}

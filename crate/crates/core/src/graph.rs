//! IDNC graph construction and maximal clique enumeration.
//!
//! A vertex `v(i,j)` exists for every packet `P_j` missing at `R_i`. Two
//! vertices of different receivers are adjacent when they ask for the same
//! packet, or when each asks for a packet the other receiver already holds.
//! A maximal clique is one instantly decodable XOR combination.
//!
//! Adjacency rows are dense bitsets laid out like the feedback matrix: one
//! block of words per receiver, bit `j - 1` of block `k` standing for
//! `v(k,j)`. Row lookups are O(1) and neighbourhood intersections are word
//! operations.

use std::fmt;

use crate::model::{BitIter, FeedbackMatrix};

/// Vertex `v(i,j)`: packet `P_j` missing at receiver `R_i` (both 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex {
    pub receiver: usize,
    pub packet: usize,
}

impl Vertex {
    pub fn new(receiver: usize, packet: usize) -> Self {
        Vertex { receiver, packet }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v({},{})", self.receiver, self.packet)
    }
}

/// A set of vertices sent as one XOR-coded packet, sorted by `(receiver, packet)`.
///
/// Uncoded initial-phase transmissions of `P_t` are represented the same way,
/// with one vertex per receiver still missing `P_t`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Clique {
    vertices: Vec<Vertex>,
}

impl Clique {
    pub fn new(mut vertices: Vec<Vertex>) -> Self {
        vertices.sort_unstable();
        vertices.dedup();
        Clique { vertices }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Targeted receivers `T(κ)`, ascending.
    pub fn targets(&self) -> Vec<usize> {
        self.vertices.iter().map(|v| v.receiver).collect()
    }

    /// `(receiver, packet)` pairs for [`FeedbackMatrix::apply_reception`].
    pub fn target_pairs(&self) -> Vec<(usize, usize)> {
        self.vertices.iter().map(|v| (v.receiver, v.packet)).collect()
    }

    /// Distinct source packets XORed together, ascending.
    pub fn packets(&self) -> Vec<usize> {
        let mut p: Vec<usize> = self.vertices.iter().map(|v| v.packet).collect();
        p.sort_unstable();
        p.dedup();
        p
    }

    /// Packet the clique delivers to `receiver`, if it targets it.
    pub fn packet_for(&self, receiver: usize) -> Option<usize> {
        self.vertices.iter().find(|v| v.receiver == receiver).map(|v| v.packet)
    }
}

impl fmt::Display for Clique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.vertices.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

const ABSENT: u32 = u32::MAX;

/// IDNC graph of one feedback matrix, or an induced subgraph of one.
#[derive(Debug, Clone)]
pub struct IdncGraph {
    num_receivers: usize,
    stride: usize,
    vertices: Vec<Vertex>,
    /// Cell `(i - 1) * stride * 64 + (j - 1)` to vertex index.
    cell_index: Vec<u32>,
    members: Vec<u64>,
    adjacency: Vec<u64>,
}

impl IdncGraph {
    /// Builds the graph of `f` from the two adjacency conditions.
    pub fn build(f: &FeedbackMatrix) -> Self {
        let m = f.num_receivers();
        let stride = f.words_per_row();
        let row_len = m * stride;

        let mut members = vec![0u64; row_len];
        for i in 0..m {
            members[i * stride..(i + 1) * stride].copy_from_slice(f.row_words(i));
        }

        let mut vertices = Vec::with_capacity(f.count_missing());
        let mut cell_index = vec![ABSENT; row_len * 64];
        for i in 0..m {
            for j in f.missing_iter(i) {
                cell_index[i * stride * 64 + j - 1] = vertices.len() as u32;
                vertices.push(Vertex::new(i + 1, j));
            }
        }

        let mut adjacency = vec![0u64; vertices.len() * row_len];
        for (a, v) in vertices.iter().enumerate() {
            let i = v.receiver - 1;
            let j = v.packet - 1;
            let row = &mut adjacency[a * row_len..(a + 1) * row_len];
            let wants_i = f.row_words(i);
            for k in (0..m).filter(|&k| k != i) {
                let block = &mut row[k * stride..(k + 1) * stride];
                if f.bit(k, j) {
                    // same missing packet; C2 cannot hold since P_j is not in H_k
                    block[j / 64] |= 1 << (j % 64);
                } else {
                    // W_k ∩ H_i
                    for (w, (&wk, &wi)) in f.row_words(k).iter().zip(wants_i).enumerate() {
                        block[w] = wk & !wi;
                    }
                }
            }
        }

        IdncGraph { num_receivers: m, stride, vertices, cell_index, members, adjacency }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.index_of(v).is_some()
    }

    fn row_len(&self) -> usize {
        self.num_receivers * self.stride
    }

    #[inline]
    fn cell(&self, v: Vertex) -> Option<usize> {
        if v.receiver == 0 || v.receiver > self.num_receivers || v.packet == 0 {
            return None;
        }
        let within = v.packet - 1;
        if within >= self.stride * 64 {
            return None;
        }
        Some((v.receiver - 1) * self.stride * 64 + within)
    }

    /// Position of `v` in [`IdncGraph::vertices`].
    pub fn index_of(&self, v: Vertex) -> Option<usize> {
        let c = self.cell(v)?;
        match self.cell_index[c] {
            ABSENT => None,
            idx => Some(idx as usize),
        }
    }

    /// Size of the cell space addressed by adjacency bits.
    pub(crate) fn cell_count(&self) -> usize {
        self.cell_index.len()
    }

    /// Cell of a vertex that lies in this graph's matrix bounds.
    pub(crate) fn cell_of(&self, v: Vertex) -> usize {
        self.cell(v).expect("vertex within matrix bounds")
    }

    pub(crate) fn row(&self, idx: usize) -> &[u64] {
        let len = self.row_len();
        &self.adjacency[idx * len..(idx + 1) * len]
    }

    /// Vertex index for a set bit at word `w`, bit `b` of a row.
    #[inline]
    pub(crate) fn vertex_at(&self, w: usize, b: usize) -> usize {
        self.cell_index[w * 64 + b] as usize
    }

    /// Iterates vertex indices whose bits are set in `mask`.
    pub(crate) fn iter_mask<'a>(&'a self, mask: &'a [u64]) -> impl Iterator<Item = usize> + 'a {
        mask.iter()
            .enumerate()
            .flat_map(move |(w, &word)| BitIter(word).map(move |b| self.vertex_at(w, b)))
    }

    /// Edge indicator `e_{ij,kl}`.
    pub fn adjacent(&self, a: Vertex, b: Vertex) -> bool {
        match (self.index_of(a), self.cell(b)) {
            (Some(ia), Some(cb)) if self.contains(b) => self.row(ia)[cb / 64] >> (cb % 64) & 1 == 1,
            _ => false,
        }
    }

    /// Neighbours of `v` within this graph, in vertex order.
    pub fn neighbors(&self, v: Vertex) -> Vec<Vertex> {
        match self.index_of(v) {
            Some(idx) => self.iter_mask(self.row(idx)).map(|u| self.vertices[u]).collect(),
            None => Vec::new(),
        }
    }

    pub fn degree(&self, v: Vertex) -> usize {
        match self.index_of(v) {
            Some(idx) => self.row(idx).iter().map(|w| w.count_ones() as usize).sum(),
            None => 0,
        }
    }

    /// All edges `(a, b)` with `a < b` in vertex order.
    pub fn edges(&self) -> Vec<(Vertex, Vertex)> {
        let mut out = Vec::new();
        for (a, &va) in self.vertices.iter().enumerate() {
            for b in self.iter_mask(self.row(a)) {
                if b > a {
                    out.push((va, self.vertices[b]));
                }
            }
        }
        out
    }

    /// Edge list, one `v(i,j) -- v(k,l)` per line.
    pub fn edge_list(&self) -> String {
        let mut s = String::new();
        for (a, b) in self.edges() {
            s.push_str(&format!("{a} -- {b}\n"));
        }
        s
    }

    /// Induced subgraph on the vertices whose bits are set in `mask`.
    pub(crate) fn induced(&self, mask: &[u64]) -> IdncGraph {
        let len = self.row_len();
        let mask: Vec<u64> = mask.iter().zip(&self.members).map(|(a, b)| a & b).collect();
        let mut vertices = Vec::new();
        let mut cell_index = vec![ABSENT; self.cell_index.len()];
        let mut adjacency = Vec::new();
        for old in self.iter_mask(&mask).collect::<Vec<_>>() {
            let v = self.vertices[old];
            cell_index[self.cell(v).expect("member vertex")] = vertices.len() as u32;
            vertices.push(v);
            adjacency.extend(self.row(old).iter().zip(&mask).map(|(r, m)| r & m));
        }
        debug_assert_eq!(adjacency.len(), vertices.len() * len);
        IdncGraph {
            num_receivers: self.num_receivers,
            stride: self.stride,
            vertices,
            cell_index,
            members: mask,
            adjacency,
        }
    }

    /// Subgraph of vertices outside `clique` that are adjacent to every vertex in it.
    ///
    /// Clique vertices are expected to belong to this graph; a vertex that does
    /// not has no known neighbours, so the result is then empty.
    pub fn candidate_subgraph(&self, clique: &[Vertex]) -> IdncGraph {
        let mut mask = self.members.clone();
        for &v in clique {
            match self.index_of(v) {
                Some(idx) => {
                    for (m, r) in mask.iter_mut().zip(self.row(idx)) {
                        *m &= r;
                    }
                }
                None => mask.iter_mut().for_each(|m| *m = 0),
            }
        }
        self.induced(&mask)
    }

    /// True if `vertices` are pairwise adjacent members of this graph.
    pub fn is_clique(&self, vertices: &[Vertex]) -> bool {
        vertices.iter().all(|&v| self.contains(v))
            && vertices.iter().enumerate().all(|(k, &a)| {
                vertices[k + 1..].iter().all(|&b| self.adjacent(a, b))
            })
    }

    /// True if `vertices` form a clique no other vertex can extend.
    pub fn is_maximal_clique(&self, vertices: &[Vertex]) -> bool {
        !vertices.is_empty() && self.is_clique(vertices) && self.candidate_subgraph(vertices).is_empty()
    }

    /// Every maximal clique, in canonical (lexicographic) order.
    ///
    /// Bron–Kerbosch recursion with Tomita pivoting over the bitset rows.
    pub fn maximal_cliques(&self) -> Vec<Clique> {
        let mut out = Vec::new();
        if self.vertices.is_empty() {
            return out;
        }
        let mut current = Vec::new();
        let excluded = vec![0u64; self.row_len()];
        self.bron_kerbosch(&mut current, self.members.clone(), excluded, &mut out);
        out.sort_unstable();
        out
    }

    fn bron_kerbosch(
        &self,
        current: &mut Vec<usize>,
        mut candidates: Vec<u64>,
        mut excluded: Vec<u64>,
        out: &mut Vec<Clique>,
    ) {
        if is_zero(&candidates) {
            if is_zero(&excluded) {
                out.push(Clique::new(current.iter().map(|&v| self.vertices[v]).collect()));
            }
            return;
        }
        let union: Vec<u64> = candidates.iter().zip(&excluded).map(|(a, b)| a | b).collect();
        let pivot = self
            .iter_mask(&union)
            .max_by_key(|&u| (and_count(self.row(u), &candidates), std::cmp::Reverse(u)))
            .expect("non-empty union");
        let branch: Vec<usize> = self
            .iter_mask(&candidates)
            .filter(|&v| {
                let cell = self.cell(self.vertices[v]).expect("member");
                self.row(pivot)[cell / 64] >> (cell % 64) & 1 == 0
            })
            .collect();
        for v in branch {
            let row = self.row(v);
            let next_c: Vec<u64> = candidates.iter().zip(row).map(|(a, b)| a & b).collect();
            let next_x: Vec<u64> = excluded.iter().zip(row).map(|(a, b)| a & b).collect();
            current.push(v);
            self.bron_kerbosch(current, next_c, next_x, out);
            current.pop();
            let cell = self.cell(self.vertices[v]).expect("member");
            candidates[cell / 64] &= !(1 << (cell % 64));
            excluded[cell / 64] |= 1 << (cell % 64);
        }
    }
}

fn is_zero(words: &[u64]) -> bool {
    words.iter().all(|&w| w == 0)
}

fn and_count(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum()
}

/// Builds the IDNC graph of `f`.
pub fn build_graph(f: &FeedbackMatrix) -> IdncGraph {
    IdncGraph::build(f)
}

/// Maximal cliques of `g` in canonical order.
pub fn enumerate_maximal_cliques(g: &IdncGraph) -> Vec<Clique> {
    g.maximal_cliques()
}

/// Induced subgraph on vertices adjacent to all of `clique`.
pub fn candidate_subgraph(g: &IdncGraph, clique: &[Vertex]) -> IdncGraph {
    g.candidate_subgraph(clique)
}

/// Splits the targeted receivers of `clique` into those served their next
/// needed packet and those served another missing packet.
pub fn partition_targets(f: &FeedbackMatrix, clique: &Clique) -> (Vec<usize>, Vec<usize>) {
    let mut next = Vec::new();
    let mut other = Vec::new();
    for v in clique.vertices() {
        let first = f.first_two_missing(v.receiver - 1).0;
        if first == Some(v.packet) {
            next.push(v.receiver);
        } else {
            other.push(v.receiver);
        }
    }
    (next, other)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: usize, j: usize) -> Vertex {
        Vertex::new(i, j)
    }

    fn example1() -> FeedbackMatrix {
        FeedbackMatrix::from_rows(&[[1, 0, 1, 0, 0, 0], [0, 0, 1, 1, 0, 1]]).unwrap()
    }

    #[test]
    fn example1_graph() {
        let g = build_graph(&example1());
        assert_eq!(g.vertices(), &[v(1, 1), v(1, 3), v(2, 3), v(2, 4), v(2, 6)]);
        assert_eq!(
            g.edges(),
            vec![(v(1, 1), v(2, 4)), (v(1, 1), v(2, 6)), (v(1, 3), v(2, 3))]
        );
        assert_eq!(
            g.edge_list(),
            "v(1,1) -- v(2,4)\nv(1,1) -- v(2,6)\nv(1,3) -- v(2,3)\n"
        );
        assert!(g.adjacent(v(2, 4), v(1, 1)));
        assert!(!g.adjacent(v(1, 1), v(1, 3)));
    }

    #[test]
    fn example1_cliques() {
        let g = build_graph(&example1());
        let cliques = enumerate_maximal_cliques(&g);
        let expected = vec![
            Clique::new(vec![v(1, 1), v(2, 4)]),
            Clique::new(vec![v(1, 1), v(2, 6)]),
            Clique::new(vec![v(1, 3), v(2, 3)]),
        ];
        assert_eq!(cliques, expected);
    }

    #[test]
    fn all_missing_2x2_only_same_packet_edges() {
        let g = build_graph(&FeedbackMatrix::all_missing(2, 2));
        assert_eq!(g.num_vertices(), 4);
        assert_eq!(g.edges(), vec![(v(1, 1), v(2, 1)), (v(1, 2), v(2, 2))]);
        assert_eq!(
            g.maximal_cliques(),
            vec![Clique::new(vec![v(1, 1), v(2, 1)]), Clique::new(vec![v(1, 2), v(2, 2)])]
        );
    }

    #[test]
    fn single_missing_entry() {
        let f = FeedbackMatrix::from_rows(&[[0, 1], [0, 0]]).unwrap();
        let g = build_graph(&f);
        assert_eq!(g.vertices(), &[v(1, 2)]);
        assert!(g.edges().is_empty());
        assert_eq!(g.maximal_cliques(), vec![Clique::new(vec![v(1, 2)])]);
    }

    #[test]
    fn edgeless_graph_gives_singletons() {
        let f = FeedbackMatrix::from_rows(&[[1, 1, 1]]).unwrap();
        let cliques = build_graph(&f).maximal_cliques();
        assert_eq!(cliques.len(), 3);
        assert!(cliques.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn candidate_subgraphs() {
        let g = build_graph(&example1());
        let sub = g.candidate_subgraph(&[v(1, 1)]);
        assert_eq!(sub.vertices(), &[v(2, 4), v(2, 6)]);
        assert!(sub.edges().is_empty());
        assert!(g.candidate_subgraph(&[v(1, 1), v(2, 4)]).is_empty());
        let whole = g.candidate_subgraph(&[]);
        assert_eq!(whole.vertices(), g.vertices());
        assert_eq!(whole.edges(), g.edges());
    }

    #[test]
    fn partition_example_actions() {
        let f = FeedbackMatrix::from_rows(&[[1, 0, 1, 0], [0, 0, 1, 1]]).unwrap();
        let a1 = Clique::new(vec![v(1, 1), v(2, 4)]);
        assert_eq!(partition_targets(&f, &a1), (vec![1], vec![2]));
        let a2 = Clique::new(vec![v(1, 3), v(2, 3)]);
        assert_eq!(partition_targets(&f, &a2), (vec![2], vec![1]));
        let both_next = Clique::new(vec![v(1, 1)]);
        assert_eq!(partition_targets(&f, &both_next), (vec![1], vec![]));
    }

    #[test]
    fn example_action_space() {
        let f = FeedbackMatrix::from_rows(&[[1, 0, 1, 0], [0, 0, 1, 1]]).unwrap();
        let cliques = build_graph(&f).maximal_cliques();
        assert_eq!(
            cliques,
            vec![Clique::new(vec![v(1, 1), v(2, 4)]), Clique::new(vec![v(1, 3), v(2, 3)])]
        );
    }

    #[test]
    fn maximality_checks() {
        let g = build_graph(&example1());
        assert!(g.is_maximal_clique(&[v(1, 1), v(2, 6)]));
        assert!(!g.is_maximal_clique(&[v(1, 1)]));
        assert!(!g.is_clique(&[v(1, 1), v(1, 3)]));
    }

    #[test]
    fn clique_display() {
        let c = Clique::new(vec![v(2, 4), v(1, 1)]);
        assert_eq!(c.to_string(), "v(1,1) v(2,4)");
        assert_eq!(c.packets(), vec![1, 4]);
        assert_eq!(c.packet_for(2), Some(4));
    }
}

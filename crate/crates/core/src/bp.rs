//! Tanner graphs and the flooding sum-product (belief propagation) decoder in
//! the LLR domain.

use crate::channel::LlrVector;
use crate::error::{Error, Result};
use crate::gf2::Gf2Matrix;

/// Default margin keeping `tanh` products strictly inside (−1, 1).
pub const BP_PRODUCT_CLAMP: f64 = 1e-12;

/// Bipartite variable/check graph of a parity-check matrix.
///
/// Edges are numbered row-major over `H`: all edges of check 0 by ascending
/// variable, then check 1, and so on. Adjacency lists hold edge indices in
/// ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TannerGraph {
    n_var: usize,
    n_check: usize,
    edges: Vec<(usize, usize)>,
    var_edges: Vec<Vec<usize>>,
    check_edges: Vec<Vec<usize>>,
}

impl TannerGraph {
    pub fn from_parity_check(h: &Gf2Matrix) -> Result<Self> {
        if h.is_zero() {
            return Err(Error::DegenerateGraph("parity-check matrix is all zero".into()));
        }
        let (n_check, n_var) = (h.rows(), h.cols());
        let mut edges = Vec::with_capacity(h.count_ones());
        let mut var_edges = vec![Vec::new(); n_var];
        let mut check_edges = vec![Vec::new(); n_check];
        for (c, check) in check_edges.iter_mut().enumerate() {
            for (v, var) in var_edges.iter_mut().enumerate() {
                if h.get(c, v) == 1 {
                    let e = edges.len();
                    edges.push((v, c));
                    var.push(e);
                    check.push(e);
                }
            }
        }
        if let Some(c) = check_edges.iter().position(Vec::is_empty) {
            return Err(Error::DegenerateGraph(format!("check {c} has no variables")));
        }
        if let Some(v) = var_edges.iter().position(Vec::is_empty) {
            return Err(Error::DegenerateGraph(format!("variable {v} is in no check")));
        }
        Ok(Self {
            n_var,
            n_check,
            edges,
            var_edges,
            check_edges,
        })
    }

    pub fn n_var(&self) -> usize {
        self.n_var
    }

    pub fn n_check(&self) -> usize {
        self.n_check
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// `(variable, check)` of edge `e`.
    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn var_edges(&self, v: usize) -> &[usize] {
        &self.var_edges[v]
    }

    pub fn check_edges(&self, c: usize) -> &[usize] {
        &self.check_edges[c]
    }

    pub fn var_degree(&self, v: usize) -> usize {
        self.var_edges[v].len()
    }

    /// Variables adjacent to check `c`, ascending.
    pub fn check_neighbors(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.check_edges[c].iter().map(|&e| self.edges[e].0)
    }

    /// True when every check sees an even number of ones in `bits`.
    pub fn satisfies(&self, bits: &[u8]) -> bool {
        self.check_edges
            .iter()
            .all(|es| es.iter().fold(0u8, |acc, &e| acc ^ bits[self.edges[e].0]) == 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpConfig {
    pub iterations: usize,
    /// Stop as soon as the hard decision satisfies every check.
    pub early_exit: bool,
    /// Products of `tanh` messages are clamped to `±(1 − clamp)`.
    pub clamp: f64,
}

impl BpConfig {
    pub fn new(iterations: usize) -> Self {
        Self {
            iterations,
            early_exit: true,
            clamp: BP_PRODUCT_CLAMP,
        }
    }

    pub fn without_early_exit(mut self) -> Self {
        self.early_exit = false;
        self
    }

    pub fn with_clamp(mut self, clamp: f64) -> Self {
        self.clamp = clamp;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpOutput {
    pub hard_bits: Vec<u8>,
    /// Posterior LLRs: channel LLR plus every incoming check message.
    pub posteriors: Vec<f64>,
    /// The hard decision satisfies all parity checks.
    pub converged: bool,
    pub iterations_run: usize,
}

/// Sum-product decoding with early termination and the default clamp.
pub fn bp_decode(llr: &LlrVector, graph: &TannerGraph, iterations: usize) -> Result<BpOutput> {
    bp_decode_with(llr, graph, &BpConfig::new(iterations))
}

pub fn bp_decode_with(llr: &LlrVector, graph: &TannerGraph, cfg: &BpConfig) -> Result<BpOutput> {
    if llr.len() != graph.n_var {
        return Err(Error::dim(graph.n_var, llr.len()));
    }
    if cfg.iterations == 0 {
        return Err(Error::Parameter("BP needs at least one iteration".into()));
    }
    let l = llr.values();
    let n_edges = graph.n_edges();
    let mut c2v = vec![0.0f64; n_edges];
    let mut half_tanh = vec![0.0f64; n_edges];
    let mut posteriors = l.to_vec();
    let mut hard_bits = llr.hard_decision();
    let limit = 1.0 - cfg.clamp;

    let mut iterations_run = 0;
    let mut converged = false;
    for _ in 0..cfg.iterations {
        iterations_run += 1;
        // variable → check
        for (e, &(v, _)) in graph.edges.iter().enumerate() {
            let mut s = l[v];
            for &other in &graph.var_edges[v] {
                if other != e {
                    s += c2v[other];
                }
            }
            half_tanh[e] = (0.5 * s).tanh();
        }
        // check → variable
        for (e, &(_, c)) in graph.edges.iter().enumerate() {
            let mut p = 1.0;
            for &other in &graph.check_edges[c] {
                if other != e {
                    p *= half_tanh[other];
                }
            }
            c2v[e] = 2.0 * p.clamp(-limit, limit).atanh();
        }
        for v in 0..graph.n_var {
            let mut s = l[v];
            for &e in &graph.var_edges[v] {
                s += c2v[e];
            }
            posteriors[v] = s;
            hard_bits[v] = u8::from(s < 0.0);
        }
        converged = graph.satisfies(&hard_bits);
        if converged && cfg.early_exit {
            break;
        }
    }
    Ok(BpOutput {
        hard_bits,
        posteriors,
        converged,
        iterations_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::build_bch;

    fn small_h() -> Gf2Matrix {
        Gf2Matrix::from_strs(&["01011001", "11100100", "00100111", "10011010"]).unwrap()
    }

    #[test]
    fn small_graph_structure() {
        let g = TannerGraph::from_parity_check(&small_h()).unwrap();
        assert_eq!(g.check_neighbors(0).collect::<Vec<_>>(), vec![1, 3, 4, 7]);
        assert_eq!(g.n_edges(), 16);
        assert_eq!((g.n_var(), g.n_check()), (8, 4));
    }

    #[test]
    fn identity_graph_has_one_edge_per_check() {
        let g = TannerGraph::from_parity_check(&Gf2Matrix::identity(5)).unwrap();
        assert_eq!(g.n_edges(), 5);
        for v in 0..5 {
            assert_eq!(g.var_degree(v), 1);
        }
    }

    #[test]
    fn adjacency_is_sorted_and_consistent() {
        let code = build_bch(4, 2).unwrap();
        let h = code.parity_check();
        let g = TannerGraph::from_parity_check(h).unwrap();
        assert_eq!(g.n_edges(), h.count_ones());
        for v in 0..g.n_var() {
            assert!(g.var_edges(v).windows(2).all(|w| w[0] < w[1]));
            for &e in g.var_edges(v) {
                let (ev, ec) = g.edge(e);
                assert_eq!(ev, v);
                assert_eq!(h.get(ec, ev), 1);
            }
        }
        for c in 0..g.n_check() {
            assert!(g.check_edges(c).windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn degenerate_matrices_are_rejected() {
        assert!(TannerGraph::from_parity_check(&Gf2Matrix::zeros(2, 3)).is_err());
        let empty_col = Gf2Matrix::from_strs(&["110", "100"]).unwrap();
        assert!(matches!(
            TannerGraph::from_parity_check(&empty_col),
            Err(Error::DegenerateGraph(_))
        ));
        let empty_row = Gf2Matrix::from_strs(&["111", "000"]).unwrap();
        assert!(TannerGraph::from_parity_check(&empty_row).is_err());
    }

    #[test]
    fn strong_codeword_llrs_converge_in_one_iteration() {
        let code = build_bch(3, 1).unwrap();
        let g = TannerGraph::from_parity_check(code.parity_check()).unwrap();
        for cw in code.codewords().unwrap() {
            let llr = LlrVector::new(cw.bits().iter().map(|&b| if b == 0 { 20.0 } else { -20.0 }).collect()).unwrap();
            let out = bp_decode(&llr, &g, 10).unwrap();
            assert_eq!(out.hard_bits, cw.bits());
            assert!(out.converged);
            assert_eq!(out.iterations_run, 1);
        }
    }

    #[test]
    fn length_mismatch() {
        let g = TannerGraph::from_parity_check(&small_h()).unwrap();
        let llr = LlrVector::new(vec![1.0; 7]).unwrap();
        assert!(matches!(bp_decode(&llr, &g, 3), Err(Error::Dimension { .. })));
    }

    #[test]
    fn no_early_exit_runs_every_iteration() {
        let g = TannerGraph::from_parity_check(&small_h()).unwrap();
        let llr = LlrVector::new(vec![3.0; 8]).unwrap();
        let out = bp_decode_with(&llr, &g, &BpConfig::new(4).without_early_exit()).unwrap();
        assert_eq!(out.iterations_run, 4);
        assert!(out.converged);
    }
}

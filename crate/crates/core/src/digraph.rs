//! Directed communication graphs, column-stochastic mixing matrices and
//! estimates of their mixing constants.
//!
//! Every node is implicitly its own in- and out-neighbor; the edge set only
//! stores off-diagonal links `(i, j)`, meaning `i` sends to `j`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, SeedStreams};

/// Column sums of a mixing matrix must equal one to this tolerance.
pub const COLUMN_SUM_TOLERANCE: f64 = 1e-12;

/// Default number of re-draws when sampling a strongly connected
/// Erdős–Rényi digraph.
pub const DEFAULT_ER_RETRIES: usize = 1000;

/// A static directed graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    out: Vec<BTreeSet<usize>>,
}

impl DirectedGraph {
    /// Build a graph from explicit edges. Self-loops in `edges` are accepted
    /// and ignored since they are always implied.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("graph must have at least one node"));
        }
        let mut out = vec![BTreeSet::new(); n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::invalid(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            if i != j {
                out[i].insert(j);
            }
        }
        Ok(Self { n, out })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Off-diagonal edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&j| (i, j)))
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(BTreeSet::len).sum()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i == j || self.out.get(i).is_some_and(|s| s.contains(&j))
    }

    /// Out-neighborhood of `i`, including `i` itself.
    pub fn out_neighbors(&self, i: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.out[i].iter().copied().collect();
        v.push(i);
        v.sort_unstable();
        v
    }

    /// In-neighborhood of `i`, including `i` itself.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.n)
            .filter(|&j| j == i || self.out[j].contains(&i))
            .collect();
        v.sort_unstable();
        v
    }

    /// Number of other nodes `i` sends to.
    pub fn out_degree(&self, i: usize) -> usize {
        self.out[i].len()
    }

    /// True iff every node reaches every other node along directed edges.
    pub fn is_strongly_connected(&self) -> bool {
        let reach_all = |adj: &dyn Fn(usize) -> Vec<usize>| {
            let mut seen = vec![false; self.n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            let mut count = 1;
            while let Some(u) = queue.pop_front() {
                for v in adj(u) {
                    if !seen[v] {
                        seen[v] = true;
                        count += 1;
                        queue.push_back(v);
                    }
                }
            }
            count == self.n
        };
        let mut rev = vec![Vec::new(); self.n];
        for (i, j) in self.edges() {
            rev[j].push(i);
        }
        reach_all(&|u| self.out[u].iter().copied().collect()) && reach_all(&|u| rev[u].clone())
    }

    /// Serialize as an edge list: a `n=<count>` header, then one `i j` line
    /// per edge.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n={}\n", self.n);
        for (i, j) in self.edges() {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    /// Parse the edge-list format written by [`DirectedGraph::to_edge_list`].
    /// Blank lines and lines starting with `#` are skipped.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse("edge list", "missing `n=<count>` header"))?;
        let n = header
            .strip_prefix("n=")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::parse("edge list", format!("bad header `{header}`")))?;
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let mut parts = line.split_whitespace();
            let parse = |p: Option<&str>| p.and_then(|v| v.parse::<usize>().ok());
            match (parse(parts.next()), parse(parts.next()), parts.next()) {
                (Some(i), Some(j), None) => edges.push((i, j)),
                _ => {
                    return Err(Error::parse(
                        "edge list",
                        format!("line {lineno}: expected `i j`, got `{line}`"),
                    ))
                }
            }
        }
        Self::new(n, edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_edge_list(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }
}

/// Directed ring `0 -> 1 -> ... -> n-1 -> 0`.
pub fn build_ring(n: usize) -> Result<DirectedGraph> {
    if n == 0 {
        return Err(Error::invalid("ring needs n >= 1"));
    }
    DirectedGraph::new(n, (0..n).map(|i| (i, (i + 1) % n)))
}

/// Directed complete graph on `n` nodes.
pub fn build_complete(n: usize) -> Result<DirectedGraph> {
    DirectedGraph::new(
        n,
        (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))),
    )
}

/// Strongly connected realization of a directed Erdős–Rényi graph, re-drawn
/// up to [`DEFAULT_ER_RETRIES`] times.
pub fn build_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<DirectedGraph> {
    build_erdos_renyi_with_retries(n, p, seed, DEFAULT_ER_RETRIES)
}

pub fn build_erdos_renyi_with_retries(
    n: usize,
    p: f64,
    seed: u64,
    retries: usize,
) -> Result<DirectedGraph> {
    if n == 0 {
        return Err(Error::invalid("Erdős–Rényi graph needs n >= 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("edge probability {p} outside [0, 1]")));
    }
    let streams = SeedStreams::new(seed);
    for attempt in 0..retries.max(1) {
        let mut rng = streams.stream(Purpose::Graph, attempt as u64, 0);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let g = DirectedGraph::new(n, edges)?;
        if g.is_strongly_connected() {
            return Ok(g);
        }
    }
    Err(Error::ConstructionFailure(format!(
        "no strongly connected Erdős–Rényi realization with n = {n}, p = {p} after {retries} draws; p is too small"
    )))
}

/// The `(log n) / n` edge probability used for the logistic-regression
/// benchmark graphs.
pub fn log_n_over_n(n: usize) -> f64 {
    if n <= 1 {
        1.0
    } else {
        ((n as f64).ln() / n as f64).min(1.0)
    }
}

/// A column-stochastic mixing matrix together with the sparse row view the
/// simulator iterates over.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    entries: DMatrix<f64>,
    beta: f64,
    /// Row `i`: `(j, W_ij)` for every nonzero entry, diagonal included.
    rows: Vec<Vec<(usize, f64)>>,
    /// Column `j`: number of off-diagonal nonzeros, i.e. directed links out of `j`.
    out_links: Vec<usize>,
}

impl MixingMatrix {
    /// Validate and wrap a dense matrix. Entries must lie in `[0, 1]` and
    /// every column must sum to one.
    pub fn from_dense(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::invalid("mixing matrix must be square and non-empty"));
        }
        if entries.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
            return Err(Error::invalid("mixing matrix entries must lie in [0, 1]"));
        }
        let dev = max_column_sum_deviation(&entries);
        if dev > COLUMN_SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "mixing matrix is not column stochastic (deviation {dev:e})"
            )));
        }
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| entries[(i, j)] != 0.0)
                    .map(|j| (j, entries[(i, j)]))
                    .collect()
            })
            .collect();
        let out_links = (0..n)
            .map(|j| (0..n).filter(|&i| i != j && entries[(i, j)] != 0.0).count())
            .collect();
        let beta = spectral_norm(&(&entries - DMatrix::identity(n, n)));
        Ok(Self {
            entries,
            beta,
            rows,
            out_links,
        })
    }

    /// `W_ij = 1/|N_j^+|` for every `(j, i)` edge and on the diagonal.
    pub fn out_degree(g: &DirectedGraph) -> Result<Self> {
        if !g.is_strongly_connected() {
            return Err(Error::invalid(
                "mixing matrix requires a strongly connected graph",
            ));
        }
        let n = g.n();
        let mut w = DMatrix::zeros(n, n);
        for j in 0..n {
            let share = 1.0 / (g.out_degree(j) + 1) as f64;
            w[(j, j)] = share;
            for i in g.out[j].iter() {
                w[(*i, j)] = share;
            }
        }
        Self::from_dense(w)
    }

    /// The lazy matrix `(1 - gamma) I + gamma W`.
    pub fn lazy(&self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let n = self.n();
        let b = DMatrix::identity(n, n) * (1.0 - gamma) + &self.entries * gamma;
        // Rounding can push a column sum a few ulps away from one; that stays
        // far inside the tolerance, so a failure here means a real bug.
        Self::from_dense(b)
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `‖W − I‖`, the largest singular value of `W − I`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Number of directed links leaving node `j` (self excluded).
    pub fn out_links(&self, j: usize) -> usize {
        self.out_links[j]
    }

    pub fn total_links(&self) -> usize {
        self.out_links.iter().sum()
    }

    /// `W v` using the sparse row view.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * v[j]).sum())
            .collect()
    }

    pub fn max_column_sum_deviation(&self) -> f64 {
        max_column_sum_deviation(&self.entries)
    }
}

/// Convenience wrapper matching the named operation.
pub fn out_degree_mixing(g: &DirectedGraph) -> Result<MixingMatrix> {
    MixingMatrix::out_degree(g)
}

pub fn lazy_matrix(w: &MixingMatrix, gamma: f64) -> Result<MixingMatrix> {
    w.lazy(gamma)
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "consensus stepsize {gamma} outside (0, 1]"
        )))
    }
}

fn max_column_sum_deviation(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| (c.sum() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Operator 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Estimated constants `(φ, δ, C, κ)` with `Wφ = φ`, `[Wᵗ1]_i ≥ κ` and
/// `‖Wᵗ − φ1ᵀ‖ ≤ C(1 − δ)ᵗ` on `0 ≤ t ≤ horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    pub phi: Vec<f64>,
    pub delta: f64,
    pub big_c: f64,
    pub kappa: f64,
    pub horizon: usize,
    /// `‖Wᵗ − φ1ᵀ‖` for `t = 0..=horizon`, kept for diagnostics.
    #[serde(skip)]
    pub deviation_norms: Vec<f64>,
}

impl SpectralProfile {
    /// `C(1 − δ)ᵗ`.
    pub fn envelope(&self, t: usize) -> f64 {
        self.big_c * (1.0 - self.delta).powi(t as i32)
    }
}

/// `max(2n, 200)`.
pub fn default_horizon(n: usize) -> usize {
    (2 * n).max(200)
}

/// Norms below this are treated as exact zeros when fitting the decay slope.
const NORM_FLOOR: f64 = 1e-280;

/// Estimate the mixing constants of `w` over `0..=horizon` matrix powers.
///
/// `φ` is found by power iteration accelerated with repeated squaring and
/// polished with plain steps. `δ` comes from a least-squares fit of
/// `log ‖Wᵗ − φ1ᵀ‖` over the tail half of the horizon and `C` is the
/// smallest constant making the envelope hold at every examined power.
pub fn spectral_profile(w: &MixingMatrix, horizon: usize) -> Result<SpectralProfile> {
    let n = w.n();
    if horizon < 2 * n {
        return Err(Error::invalid(format!(
            "horizon {horizon} must be at least 2n = {}",
            2 * n
        )));
    }
    let phi = perron_vector(w, 10 * horizon)?;

    let mut v = vec![1.0; n];
    let mut kappa = 1.0f64;
    for _ in 0..horizon {
        v = w.apply(&v);
        kappa = v.iter().copied().fold(kappa, f64::min);
    }

    // (W − φ1ᵀ)ᵗ = Wᵗ − φ1ᵀ for t ≥ 1, and computing the left side avoids
    // the cancellation floor of subtracting φ1ᵀ from Wᵗ.
    let phi_v = DVector::from_column_slice(&phi);
    let proj = &phi_v * DVector::from_element(n, 1.0).transpose();
    let d = w.entries() - &proj;
    let mut norms = Vec::with_capacity(horizon + 1);
    norms.push(spectral_norm(&(DMatrix::identity(n, n) - &proj)));
    let mut power = d.clone();
    for t in 1..=horizon {
        if t > 1 {
            power = &power * &d;
        }
        let nrm = spectral_norm(&power);
        norms.push(nrm);
        if nrm < NORM_FLOOR {
            norms.resize(horizon + 1, 0.0);
            break;
        }
    }

    let delta = fit_decay(&norms)?;
    let rate = 1.0 - delta;
    let big_c = norms
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(t, &x)| x / rate.powi(t as i32))
        .fold(0.0f64, f64::max);

    let profile = SpectralProfile {
        phi,
        delta,
        big_c,
        kappa,
        horizon,
        deviation_norms: norms,
    };
    check_profile(w, &profile)?;
    Ok(profile)
}

fn perron_vector(w: &MixingMatrix, max_iters: usize) -> Result<Vec<f64>> {
    let n = w.n();
    let mut iters = 0usize;
    let mut p = w.entries().clone();
    loop {
        let next = &p * &p;
        iters += 1;
        let change = (&next - &p).amax();
        p = next;
        if change < 1e-14 {
            break;
        }
        if iters >= max_iters || iters >= 200 {
            return Err(Error::numeric(
                "power iteration for the Perron vector did not converge; W may be periodic or reducible",
            ));
        }
    }
    let mut phi: Vec<f64> = (0..n).map(|i| p.row(i).sum() / n as f64).collect();
    normalize_sum(&mut phi);
    loop {
        let mut next = w.apply(&phi);
        normalize_sum(&mut next);
        let change = next
            .iter()
            .zip(&phi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        phi = next;
        iters += 1;
        if change <= 1e-15 {
            break;
        }
        if iters >= max_iters {
            return Err(Error::numeric(
                "power iteration for the Perron vector did not converge within 10·horizon iterations",
            ));
        }
    }
    let residual = w
        .apply(&phi)
        .iter()
        .zip(&phi)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    if residual > 1e-12 {
        return Err(Error::numeric(format!(
            "Perron vector residual {residual:e} above 1e-12"
        )));
    }
    Ok(phi)
}

fn normalize_sum(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

fn fit_decay(norms: &[f64]) -> Result<f64> {
    let horizon = norms.len() - 1;
    let positive = |lo: usize| -> Vec<(f64, f64)> {
        norms
            .iter()
            .enumerate()
            .skip(lo)
            .filter(|(_, &x)| x > 0.0)
            .map(|(t, &x)| (t as f64, x.ln()))
            .collect()
    };
    let mut pts = positive(horizon / 2);
    if pts.len() < 2 {
        pts = positive(0);
    }
    if pts.len() < 2 {
        // Wᵗ = φ1ᵀ from t = 1 on.
        return Ok(1.0);
    }
    let m = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_y)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let slope = sxy / sxx;
    if !slope.is_finite() || slope >= 0.0 {
        return Err(Error::numeric(format!(
            "‖Wᵗ − φ1ᵀ‖ does not decay over the horizon (slope {slope})"
        )));
    }
    Ok((1.0 - slope.exp()).clamp(f64::MIN_POSITIVE, 1.0))
}

fn check_profile(w: &MixingMatrix, p: &SpectralProfile) -> Result<()> {
    let wphi = w.apply(&p.phi);
    let residual = wphi
        .iter()
        .zip(&p.phi)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let sum: f64 = p.phi.iter().sum();
    if residual > 1e-10 || (sum - 1.0).abs() > 1e-12 || p.phi.iter().any(|&x| x <= 0.0) {
        return Err(Error::numeric("estimated Perron vector violates Wφ = φ"));
    }
    if !(p.kappa > 0.0) {
        return Err(Error::numeric("kappa must be positive"));
    }
    if !(p.delta > 0.0 && p.delta <= 1.0) {
        return Err(Error::numeric(format!("delta {} outside (0, 1]", p.delta)));
    }
    for (t, &nrm) in p.deviation_norms.iter().enumerate() {
        if nrm > p.envelope(t) * (1.0 + 1e-12) {
            return Err(Error::numeric(format!(
                "fitted envelope fails at t = {t}: {nrm:e} > {:e}",
                p.envelope(t)
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ring_edges() {
        let g = build_ring(3).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 0)]);
        for i in 0..3 {
            assert_eq!(g.out_neighbors(i).len(), 2);
            assert_eq!(g.in_neighbors(i).len(), 2);
        }
        assert!(g.out_neighbors(2).contains(&0));
    }

    #[test]
    fn single_node_ring() {
        let g = build_ring(1).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert!(g.is_strongly_connected());
        assert_eq!(g.out_neighbors(0), vec![0]);
    }

    #[test]
    fn zero_nodes_rejected() {
        assert!(matches!(build_ring(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            build_erdos_renyi(0, 0.5, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn strong_connectivity() {
        assert!(build_ring(4).unwrap().is_strongly_connected());
        assert!(build_ring(20).unwrap().is_strongly_connected());
        let disjoint = DirectedGraph::new(2, [(0, 0), (1, 1)]).unwrap();
        assert!(!disjoint.is_strongly_connected());
        let path = DirectedGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        assert!(!path.is_strongly_connected());
    }

    #[test]
    fn erdos_renyi_cases() {
        let g = build_erdos_renyi(2, 1.0, 3).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
        let g = build_erdos_renyi(100, log_n_over_n(100), 7).unwrap();
        assert!(g.is_strongly_connected());
        assert_eq!(g, build_erdos_renyi(100, log_n_over_n(100), 7).unwrap());
        assert!(matches!(
            build_erdos_renyi(5, 0.0, 1),
            Err(Error::ConstructionFailure(_))
        ));
        assert!(build_erdos_renyi(5, 1.5, 1).is_err());
    }

    #[test]
    fn mixing_matrix_single_node() {
        let w = out_degree_mixing(&build_ring(1).unwrap()).unwrap();
        assert_eq!(w.entries()[(0, 0)], 1.0);
        assert_eq!(w.beta(), 0.0);
    }

    #[test]
    fn ring_mixing_entries_are_halves() {
        let w = out_degree_mixing(&build_ring(3).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j || i == (j + 1) % 3 { 0.5 } else { 0.0 };
                assert_eq!(w.entries()[(i, j)], expected);
            }
        }
        assert!(w.max_column_sum_deviation() <= COLUMN_SUM_TOLERANCE);
        assert_eq!(w.out_links(0), 1);
    }

    #[test]
    fn complete_mixing_is_idempotent() {
        let w = out_degree_mixing(&build_complete(4).unwrap()).unwrap();
        assert!(w.entries().iter().all(|&x| x == 0.25));
        let w2 = w.entries() * w.entries();
        assert_abs_diff_eq!(w2, w.entries().clone(), epsilon = 1e-15);
    }

    #[test]
    fn mixing_requires_strong_connectivity() {
        let path = DirectedGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        assert!(matches!(
            out_degree_mixing(&path),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn lazy_matrix_cases() {
        let w = out_degree_mixing(&build_ring(3).unwrap()).unwrap();
        assert_eq!(lazy_matrix(&w, 1.0).unwrap().entries(), w.entries());
        let b = lazy_matrix(&w, 0.5).unwrap();
        for i in 0..3 {
            assert_eq!(b.entries()[(i, i)], 0.75);
            assert_eq!(b.entries()[((i + 1) % 3, i)], 0.25);
        }
        assert!(b.max_column_sum_deviation() <= COLUMN_SUM_TOLERANCE);
        let one = out_degree_mixing(&build_ring(1).unwrap()).unwrap();
        assert_eq!(lazy_matrix(&one, 0.5).unwrap().entries()[(0, 0)], 1.0);
        assert!(lazy_matrix(&w, 0.0).is_err());
        assert!(lazy_matrix(&w, 1.5).is_err());
    }

    #[test]
    fn from_dense_rejects_row_stochastic() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 1.0]);
        assert!(MixingMatrix::from_dense(m).is_err());
    }

    #[test]
    fn profile_single_node() {
        let w = out_degree_mixing(&build_ring(1).unwrap()).unwrap();
        let p = spectral_profile(&w, 200).unwrap();
        assert_eq!(p.phi, vec![1.0]);
        assert_eq!(p.kappa, 1.0);
        assert!(p.deviation_norms.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn profile_complete_graph() {
        let w = out_degree_mixing(&build_complete(4).unwrap()).unwrap();
        let p = spectral_profile(&w, 200).unwrap();
        for &x in &p.phi {
            assert_abs_diff_eq!(x, 0.25, epsilon = 1e-15);
        }
        assert!(p.deviation_norms[1..].iter().all(|&x| x <= 1e-15));
        assert!(p.delta > 0.9);
        assert_abs_diff_eq!(p.big_c, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn profile_rejects_short_horizon() {
        let w = out_degree_mixing(&build_ring(200).unwrap()).unwrap();
        assert!(spectral_profile(&w, 100).is_err());
    }

    #[test]
    fn periodic_matrix_fails() {
        // A bare 2-cycle without self weight is periodic.
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let w = MixingMatrix::from_dense(m).unwrap();
        assert!(matches!(
            spectral_profile(&w, 200),
            Err(Error::NumericFailure(_))
        ));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = build_erdos_renyi(12, 0.3, 5).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("n=12\n"));
        assert_eq!(DirectedGraph::from_edge_list(&text).unwrap(), g);
        assert!(DirectedGraph::from_edge_list("3\n0 1").is_err());
        assert!(DirectedGraph::from_edge_list("n=3\n0 5").is_err());
        assert!(DirectedGraph::from_edge_list("n=3\n0 1 2").is_err());
    }
}

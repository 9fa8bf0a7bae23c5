//! Page- and domain-level link graphs, in-link counting and PageRank.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::ingest::LinkRecord;
use crate::tsv::{self, ReadError};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("PageRank needs at least one node")]
    EmptyGraph,
    #[error("damping must be in (0, 1), got {0}")]
    BadDamping(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

/// Directed graph in compressed sparse row form. Node ids are dense and
/// assigned in lexicographic order of the node names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    names: Vec<String>,
    ids: HashMap<String, u32>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Graph {
    /// Builds a graph over `names` (deduplicated and sorted) from name pairs.
    /// Parallel edges collapse to one and self-loops are dropped.
    pub fn from_named_edges<'a, N, E>(names: N, edges: E) -> Graph
    where
        N: IntoIterator<Item = String>,
        E: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let names: Vec<String> = names.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let ids: HashMap<String, u32> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        let mut pairs: Vec<(u32, u32)> = edges
            .into_iter()
            .filter_map(|(s, t)| Some((*ids.get(s)?, *ids.get(t)?)))
            .filter(|(s, t)| s != t)
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        Self::from_sorted(names, ids, &pairs)
    }

    /// Builds a graph from dense ids; edges are sorted, deduplicated and
    /// stripped of self-loops.
    pub fn from_id_edges(names: Vec<String>, mut edges: Vec<(u32, u32)>) -> Graph {
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        edges.retain(|(s, t)| s != t);
        edges.sort_unstable();
        edges.dedup();
        Self::from_sorted(names, ids, &edges)
    }

    fn from_sorted(names: Vec<String>, ids: HashMap<String, u32>, pairs: &[(u32, u32)]) -> Graph {
        let n = names.len();
        let mut offsets = vec![0usize; n + 1];
        for &(s, _) in pairs {
            offsets[s as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Graph {
            names,
            ids,
            offsets,
            targets: pairs.iter().map(|&(_, t)| t).collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn out_edges(&self, id: u32) -> &[u32] {
        &self.targets[self.offsets[id as usize]..self.offsets[id as usize + 1]]
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.node_count() as u32)
            .flat_map(move |s| self.out_edges(s).iter().map(move |&t| (s, t)))
    }
}

/// Page graph over core URLs from content links.
pub fn build_page_graph(links: &[LinkRecord]) -> Graph {
    let names = links
        .iter()
        .flat_map(|l| [l.source_core().to_string(), l.target_core().to_string()]);
    let edges = links.iter().map(|l| (l.source_core(), l.target_core()));
    Graph::from_named_edges(names, edges)
}

/// Projects a page graph onto domains; intra-domain edges disappear.
pub fn project_domain_graph<F>(g: &Graph, domain_of: F) -> Graph
where
    F: Fn(&str) -> String,
{
    let node_domain: Vec<String> = g.names.iter().map(|n| domain_of(n)).collect();
    let edges: Vec<(&str, &str)> = g
        .edges()
        .map(|(s, t)| (node_domain[s as usize].as_str(), node_domain[t as usize].as_str()))
        .collect();
    Graph::from_named_edges(node_domain.iter().cloned(), edges)
}

/// How repeated links are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InlinkDedup {
    /// Identical links inside one source revision count once.
    PerRevisionUnique,
    /// Every link record counts.
    All,
}

fn revision_key(l: &LinkRecord) -> (&str, i64, &str, &str) {
    (
        l.source_full_url.as_str(),
        l.source_capture_time.0,
        l.target_core(),
        l.anchor_text.as_str(),
    )
}

/// In-links of one core URL.
pub fn inlink_count(links: &[LinkRecord], doc: &str, dedup: InlinkDedup) -> usize {
    let incoming = links.iter().filter(|l| l.target_core() == doc);
    match dedup {
        InlinkDedup::All => incoming.count(),
        InlinkDedup::PerRevisionUnique => incoming.map(revision_key).collect::<HashSet<_>>().len(),
    }
}

/// In-link counts of every linked core URL.
#[derive(Debug, Clone, Default)]
pub struct InlinkTable {
    counts: HashMap<String, usize>,
}

impl InlinkTable {
    pub fn build(links: &[LinkRecord], dedup: InlinkDedup) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut seen = HashSet::new();
        for l in links {
            if dedup == InlinkDedup::PerRevisionUnique && !seen.insert(revision_key(l)) {
                continue;
            }
            *counts.entry(l.target_core().to_string()).or_default() += 1;
        }
        InlinkTable { counts }
    }

    pub fn get(&self, doc: &str) -> usize {
        self.counts.get(doc).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRankParams {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        PageRankParams {
            damping: 0.85,
            tolerance: 1e-9,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    pub scores: Vec<f64>,
    pub damping: f64,
    pub iterations_run: usize,
    /// L1 change of the last iteration.
    pub residual: f64,
}

/// Power iteration with uniform teleport; the mass of dangling nodes is
/// spread uniformly in every iteration. Stops once the L1 change drops
/// below the tolerance or after `max_iterations`.
pub fn pagerank(g: &Graph, params: &PageRankParams) -> Result<RankVector, GraphError> {
    let n = g.node_count();
    if n == 0 {
        return Err(GraphError::EmptyGraph);
    }
    if !(params.damping > 0.0 && params.damping < 1.0) {
        return Err(GraphError::BadDamping(params.damping));
    }
    if !(params.tolerance > 0.0) {
        return Err(GraphError::BadTolerance(params.tolerance));
    }
    let d = params.damping;
    let nf = n as f64;
    let out_degree: Vec<usize> = (0..n as u32).map(|i| g.out_edges(i).len()).collect();
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;

    while iterations < params.max_iterations {
        let dangling: f64 = (0..n).filter(|&i| out_degree[i] == 0).map(|i| rank[i]).sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        next.iter_mut().for_each(|v| *v = base);
        for i in 0..n {
            if out_degree[i] == 0 {
                continue;
            }
            let share = d * rank[i] / out_degree[i] as f64;
            for &t in g.out_edges(i as u32) {
                next[t as usize] += share;
            }
        }
        residual = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        iterations += 1;
        if residual < params.tolerance {
            break;
        }
    }

    Ok(RankVector {
        scores: rank,
        damping: d,
        iterations_run: iterations,
        residual,
    })
}

/// Score lookup by node name; unknown names score 0.
#[derive(Debug, Clone, Default)]
pub struct NamedScores(HashMap<String, f64>);

impl NamedScores {
    pub fn new(g: &Graph, ranks: &RankVector) -> Self {
        NamedScores(
            g.names
                .iter()
                .cloned()
                .zip(ranks.scores.iter().copied())
                .collect(),
        )
    }

    /// Pairs `scores[i]` with node `i` of `g`.
    pub fn from_scores(g: &Graph, scores: &[f64]) -> Self {
        NamedScores(g.names.iter().cloned().zip(scores.iter().copied()).collect())
    }

    pub fn get(&self, name: &str) -> f64 {
        self.0.get(name).copied().unwrap_or(0.0)
    }
}

/// Writes `graph.tsv` (header then `src dst` id pairs) and `nodes.tsv` (`id name`).
pub fn write_graph(graph_out: &mut dyn Write, nodes_out: &mut dyn Write, g: &Graph) -> io::Result<()> {
    writeln!(graph_out, "#nodes {} #edges {}", g.node_count(), g.edge_count())?;
    for (s, t) in g.edges() {
        writeln!(graph_out, "{s}\t{t}")?;
    }
    for (i, name) in g.names.iter().enumerate() {
        writeln!(nodes_out, "{i}\t{name}")?;
    }
    Ok(())
}

pub fn read_graph(graph_path: &Path, nodes_path: &Path) -> Result<Graph, ReadError> {
    let mut names = Vec::new();
    for (no, line) in tsv::read_lines(nodes_path)? {
        let (id, name) = line
            .split_once('\t')
            .ok_or_else(|| ReadError::malformed(nodes_path, no, "expected id and name"))?;
        if id.parse::<usize>().ok() != Some(names.len()) {
            return Err(ReadError::malformed(nodes_path, no, "ids must be dense and ordered"));
        }
        names.push(name.to_string());
    }
    let lines = tsv::read_lines(graph_path)?;
    let mut declared = None;
    let mut edges = Vec::new();
    for (no, line) in lines {
        if let Some(header) = line.strip_prefix('#') {
            let parts: Vec<&str> = header.split_whitespace().collect();
            match parts.as_slice() {
                ["nodes", n, "#edges", m] => {
                    declared = Some((
                        n.parse::<usize>().map_err(|_| ReadError::malformed(graph_path, no, "bad node count"))?,
                        m.parse::<usize>().map_err(|_| ReadError::malformed(graph_path, no, "bad edge count"))?,
                    ));
                }
                _ => return Err(ReadError::malformed(graph_path, no, "bad header")),
            }
            continue;
        }
        let (s, t) = line
            .split_once('\t')
            .and_then(|(s, t)| Some((s.parse::<u32>().ok()?, t.parse::<u32>().ok()?)))
            .ok_or_else(|| ReadError::malformed(graph_path, no, "expected two node ids"))?;
        if s as usize >= names.len() || t as usize >= names.len() {
            return Err(ReadError::malformed(graph_path, no, "edge endpoint out of range"));
        }
        edges.push((s, t));
    }
    let g = Graph::from_id_edges(names, edges);
    match declared {
        Some((n, m)) if n == g.node_count() && m == g.edge_count() => Ok(g),
        _ => Err(ReadError::malformed(graph_path, 1, "header disagrees with contents")),
    }
}

pub fn write_ranks(w: &mut dyn Write, ranks: &RankVector) -> io::Result<()> {
    for (i, s) in ranks.scores.iter().enumerate() {
        writeln!(w, "{i}\t{s}")?;
    }
    Ok(())
}

pub fn read_ranks(path: &Path) -> Result<Vec<f64>, ReadError> {
    let mut scores = Vec::new();
    for (no, line) in tsv::read_lines(path)? {
        let (id, score) = line
            .split_once('\t')
            .ok_or_else(|| ReadError::malformed(path, no, "expected id and score"))?;
        if id.parse::<usize>().ok() != Some(scores.len()) {
            return Err(ReadError::malformed(path, no, "ids must be dense and ordered"));
        }
        scores.push(score.parse().map_err(|_| ReadError::malformed(path, no, "bad score"))?);
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Timestamp;
    use proptest::prelude::*;

    fn link(src: &str, t: i64, dst: &str, anchor: &str) -> LinkRecord {
        LinkRecord {
            source_full_url: src.into(),
            source_capture_time: Timestamp(t),
            target_url: dst.into(),
            tag_pattern: crate::ingest::TagPattern::AHref,
            anchor_text: anchor.into(),
        }
    }

    /// Dense transition-matrix power iteration with the same stopping rule.
    fn dense_pagerank(n: usize, edges: &[(u32, u32)], d: f64, tol: f64, max_iter: usize) -> Vec<f64> {
        let mut adj = vec![vec![0.0; n]; n];
        for &(s, t) in edges {
            adj[s as usize][t as usize] = 1.0;
        }
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            let deg: f64 = adj[i].iter().sum();
            for j in 0..n {
                m[j][i] = if deg == 0.0 { 1.0 / n as f64 } else { adj[i][j] / deg };
            }
        }
        let mut r = vec![1.0 / n as f64; n];
        for _ in 0..max_iter {
            let next: Vec<f64> = (0..n)
                .map(|j| (1.0 - d) / n as f64 + d * (0..n).map(|i| m[j][i] * r[i]).sum::<f64>())
                .collect();
            let delta: f64 = r.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            r = next;
            if delta < tol {
                break;
            }
        }
        r
    }

    #[test]
    fn page_graph_dedup() {
        let g = build_page_graph(&[
            link("http://a.de/", 1, "http://b.de/", ""),
            link("http://a.de/", 1, "http://b.de/", ""),
            link("http://b.de/", 1, "http://a.de/", ""),
        ]);
        assert_eq!((g.node_count(), g.edge_count()), (2, 2));
        assert_eq!(build_page_graph(&[]).node_count(), 0);
        let g = build_page_graph(&[
            link("http://a.de/?r=1", 1, "http://b.de/", ""),
            link("http://a.de/?r=2", 2, "http://b.de/", ""),
            link("http://a.de/", 3, "http://b.de/", ""),
        ]);
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
    }

    #[test]
    fn self_loops_dropped() {
        let g = build_page_graph(&[link("http://a.de/", 1, "http://a.de/?x=1", "")]);
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
    }

    #[test]
    fn domain_projection() {
        let domain = |u: &str| {
            crate::url_kit::domain_of(&crate::url_kit::normalize(u).unwrap())
        };
        let g = build_page_graph(&[link("http://a.x.de/1", 1, "http://b.y.de/2", "")]);
        let d = project_domain_graph(&g, domain);
        assert_eq!(d.names(), ["x.de", "y.de"]);
        assert_eq!(d.edges().collect::<Vec<_>>(), [(0, 1)]);

        let g = build_page_graph(&[
            link("http://x.de/1", 1, "http://x.de/2", ""),
            link("http://www.x.de/2", 1, "http://x.de/3", ""),
        ]);
        let d = project_domain_graph(&g, domain);
        assert_eq!((d.node_count(), d.edge_count()), (1, 0));

        let g = build_page_graph(&[
            link("http://x.de/1", 1, "http://y.de/1", ""),
            link("http://x.de/2", 1, "http://y.de/2", ""),
        ]);
        assert_eq!(project_domain_graph(&g, domain).edge_count(), 1);
    }

    #[test]
    fn inlink_modes() {
        let links = vec![
            link("http://s.de/1", 1, "http://t.de/", "x"),
            link("http://s.de/1", 1, "http://t.de/", "x"),
            link("http://s.de/2", 1, "http://t.de/", "y"),
        ];
        assert_eq!(inlink_count(&links, "http://none.de/", InlinkDedup::All), 0);
        assert_eq!(inlink_count(&links[..1], "http://t.de/", InlinkDedup::All), 1);
        assert_eq!(inlink_count(&links, "http://t.de/", InlinkDedup::PerRevisionUnique), 2);
        assert_eq!(inlink_count(&links, "http://t.de/", InlinkDedup::All), 3);
        let distinct = [links[0].clone(), links[2].clone()];
        for mode in [InlinkDedup::All, InlinkDedup::PerRevisionUnique] {
            assert_eq!(inlink_count(&distinct, "http://t.de/", mode), 2);
            assert_eq!(InlinkTable::build(&links, mode).get("http://t.de/"), inlink_count(&links, "http://t.de/", mode));
        }
    }

    #[test]
    fn pagerank_symmetric_cycles() {
        for d in [0.1, 0.5, 0.85, 0.99] {
            let params = PageRankParams { damping: d, ..Default::default() };
            let g = Graph::from_id_edges(vec!["a".into(), "b".into()], vec![(0, 1), (1, 0)]);
            let r = pagerank(&g, &params).unwrap();
            assert!((r.scores[0] - 0.5).abs() < 1e-12 && (r.scores[1] - 0.5).abs() < 1e-12);
            let g = Graph::from_id_edges(
                vec!["a".into(), "b".into(), "c".into()],
                vec![(0, 1), (1, 2), (2, 0)],
            );
            let r = pagerank(&g, &params).unwrap();
            for s in r.scores {
                assert!((s - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pagerank_star_matches_dense_oracle() {
        let edges = vec![(0, 2), (1, 2)];
        let g = Graph::from_id_edges(vec!["a".into(), "b".into(), "c".into()], edges.clone());
        let params = PageRankParams { damping: 0.85, tolerance: 1e-13, max_iterations: 1000 };
        let r = pagerank(&g, &params).unwrap();
        let oracle = dense_pagerank(3, &edges, 0.85, 1e-13, 1000);
        let l1: f64 = r.scores.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 < 1e-9, "l1 {l1}");
        assert!(r.scores[2] > r.scores[0]);
    }

    #[test]
    fn pagerank_errors() {
        let empty = Graph::from_id_edges(vec![], vec![]);
        assert_eq!(pagerank(&empty, &PageRankParams::default()), Err(GraphError::EmptyGraph));
        let g = Graph::from_id_edges(vec!["a".into()], vec![]);
        let bad = PageRankParams { damping: 1.0, ..Default::default() };
        assert!(matches!(pagerank(&g, &bad), Err(GraphError::BadDamping(_))));
    }

    #[test]
    fn graph_files_roundtrip() {
        let g = build_page_graph(&[
            link("http://a.de/", 1, "http://b.de/", ""),
            link("http://b.de/", 1, "http://c.de/", ""),
            link("http://c.de/", 1, "http://a.de/", ""),
        ]);
        let r = pagerank(&g, &PageRankParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (gp, np, rp) = (dir.path().join("graph.tsv"), dir.path().join("nodes.tsv"), dir.path().join("ranks.tsv"));
        let mut gbuf = Vec::new();
        let mut nbuf = Vec::new();
        write_graph(&mut gbuf, &mut nbuf, &g).unwrap();
        assert!(String::from_utf8_lossy(&gbuf).starts_with("#nodes 3 #edges 3\n"));
        std::fs::write(&gp, gbuf).unwrap();
        std::fs::write(&np, nbuf).unwrap();
        tsv::write_atomic(&rp, |w| write_ranks(w, &r)).unwrap();
        assert_eq!(read_graph(&gp, &np).unwrap(), g);
        assert_eq!(read_ranks(&rp).unwrap(), r.scores);
    }

    fn random_graph() -> impl Strategy<Value = (usize, Vec<(u32, u32)>)> {
        (1usize..=30).prop_flat_map(|n| {
            (Just(n), proptest::collection::vec((0..n as u32, 0..n as u32), 0..n * 3))
        })
    }

    proptest! {
        #[test]
        fn pagerank_conserves_mass_and_matches_oracle((n, edges) in random_graph(), d in 0.05f64..0.95) {
            let names: Vec<String> = (0..n).map(|i| format!("n{i:03}")).collect();
            let g = Graph::from_id_edges(names, edges);
            let params = PageRankParams { damping: d, tolerance: 1e-12, max_iterations: 500 };
            let r = pagerank(&g, &params).unwrap();
            let sum: f64 = r.scores.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(r.scores.iter().all(|&s| s >= 0.0));
            let kept: Vec<(u32, u32)> = g.edges().collect();
            let oracle = dense_pagerank(n, &kept, d, 1e-12, 500);
            let l1: f64 = r.scores.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).sum();
            prop_assert!(l1 < 1e-9, "l1 {}", l1);
        }

        #[test]
        fn pagerank_is_permutation_equivariant((n, edges) in random_graph(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<u32> = (0..n as u32).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let names: Vec<String> = (0..n).map(|i| format!("n{i:03}")).collect();
            let params = PageRankParams { tolerance: 1e-13, max_iterations: 1000, ..Default::default() };
            let a = pagerank(&Graph::from_id_edges(names.clone(), edges.clone()), &params).unwrap();
            let permuted: Vec<(u32, u32)> = edges.iter().map(|&(s, t)| (perm[s as usize], perm[t as usize])).collect();
            let b = pagerank(&Graph::from_id_edges(names, permuted), &params).unwrap();
            for i in 0..n {
                prop_assert!((a.scores[i] - b.scores[perm[i] as usize]).abs() < 1e-10);
            }
        }

        #[test]
        fn regular_symmetric_graphs_are_uniform(n in 3usize..40, k in 1usize..4) {
            // Circulant graph: i <-> i±1..k, every node has the same degree.
            let mut edges = Vec::new();
            for i in 0..n {
                for step in 1..=k.min((n - 1) / 2) {
                    edges.push((i as u32, ((i + step) % n) as u32));
                    edges.push((((i + step) % n) as u32, i as u32));
                }
            }
            let names: Vec<String> = (0..n).map(|i| format!("{i}")).collect();
            let r = pagerank(&Graph::from_id_edges(names, edges), &PageRankParams::default()).unwrap();
            for s in r.scores {
                prop_assert!((s - 1.0 / n as f64).abs() < 1e-9);
            }
        }
    }
}

//! Flat `section.key = value` run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::anchor_index::{Bm25Params, DedupStrategy};
use crate::features::EntityEncoding;
use crate::graph::{InlinkDedup, PageRankParams};
use crate::ltr::{default_grid, ForestParams, GridPoint, Mtry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// Inverse search-engine rank.
    Soft,
    /// Mean assessor grade.
    Manual,
}

impl FromStr for LabelSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "soft" => Ok(LabelSource::Soft),
            "manual" => Ok(LabelSource::Manual),
            _ => Err(format!("unknown label source {s:?} (soft or manual)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Key/value pairs as written, plus overrides; hashed into the manifest.
    pub raw: BTreeMap<String, String>,
    pub base_dir: PathBuf,
    pub archives_dir: PathBuf,
    pub suffixes: Option<PathBuf>,
    pub news_domains: Option<PathBuf>,
    pub search_words: Option<PathBuf>,
    pub queries: PathBuf,
    pub wiki_citations: Option<PathBuf>,
    pub serp_dir: PathBuf,
    pub judgments: Option<PathBuf>,
    pub label_source: LabelSource,
    pub dedup: DedupStrategy,
    pub inlink_dedup: InlinkDedup,
    pub pagerank: PageRankParams,
    pub bm25: Bm25Params,
    pub entity_encoding: EntityEncoding,
    pub max_candidates: usize,
    pub forest: ForestParams,
    pub grid: Vec<GridPoint>,
    pub folds: usize,
    pub sampling: (usize, usize),
    pub top_domains: usize,
    pub seed: u64,
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, PipelineError> {
    v.parse()
        .map_err(|_| PipelineError::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, PipelineError> {
    v.split(',').map(|x| parse(key, x.trim())).collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, base)
    }

    /// Parses `key = value` lines; `#` starts a comment line. Relative
    /// paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut raw = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected key = value", no + 1)))?;
            let k = k.trim().to_string();
            if raw.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(PipelineError::Config(format!("line {}: duplicate key {k}", no + 1)));
            }
        }
        RunConfig::from_pairs(raw, base_dir)
    }

    pub fn from_pairs(raw: BTreeMap<String, String>, base_dir: &Path) -> Result<Self, PipelineError> {
        let path = |v: &str| base_dir.join(v);
        let mut c = RunConfig {
            raw: raw.clone(),
            base_dir: base_dir.to_path_buf(),
            archives_dir: PathBuf::new(),
            suffixes: None,
            news_domains: None,
            search_words: None,
            queries: PathBuf::new(),
            wiki_citations: None,
            serp_dir: PathBuf::new(),
            judgments: None,
            label_source: LabelSource::Soft,
            dedup: DedupStrategy::UniquePerRevision,
            inlink_dedup: InlinkDedup::PerRevisionUnique,
            pagerank: PageRankParams::default(),
            bm25: Bm25Params::default(),
            entity_encoding: EntityEncoding::OneHot,
            max_candidates: 1000,
            forest: ForestParams::default(),
            grid: default_grid(),
            folds: 5,
            sampling: (20, 50),
            top_domains: 10,
            seed: 0,
        };
        let mut grid_leaf = vec![1, 5];
        let mut grid_mtry = vec![Mtry::Sqrt, Mtry::Third];
        let have = |k: &str| raw.contains_key(k);
        for required in ["archives.dir", "resources.queries", "labels.serp_dir"] {
            if !have(required) {
                return Err(PipelineError::Config(format!("missing required key {required}")));
            }
        }
        for (k, v) in &raw {
            let k = k.as_str();
            let v = v.as_str();
            match k {
                "archives.dir" => c.archives_dir = path(v),
                "resources.suffixes" => c.suffixes = Some(path(v)),
                "resources.news_domains" => c.news_domains = Some(path(v)),
                "resources.search_words" => c.search_words = Some(path(v)),
                "resources.queries" => c.queries = path(v),
                "resources.wiki_citations" => c.wiki_citations = Some(path(v)),
                "labels.serp_dir" => c.serp_dir = path(v),
                "labels.judgments" => c.judgments = Some(path(v)),
                "labels.source" => c.label_source = v.parse().map_err(PipelineError::Config)?,
                "index.dedup" => c.dedup = v.parse().map_err(PipelineError::Config)?,
                "graph.inlink_dedup" => {
                    c.inlink_dedup = match v.to_ascii_lowercase().as_str() {
                        "s1" | "unique_per_revision" => InlinkDedup::PerRevisionUnique,
                        "s2" | "all" => InlinkDedup::All,
                        _ => return Err(PipelineError::Config(format!("{k}: expected S1 or S2, got {v:?}"))),
                    }
                }
                "pagerank.damping" => c.pagerank.damping = parse(k, v)?,
                "pagerank.tolerance" => c.pagerank.tolerance = parse(k, v)?,
                "pagerank.max_iterations" => c.pagerank.max_iterations = parse(k, v)?,
                "bm25.k1" => c.bm25.k1 = parse(k, v)?,
                "bm25.b" => c.bm25.b = parse(k, v)?,
                "features.entity_encoding" => c.entity_encoding = v.parse().map_err(PipelineError::Config)?,
                "features.max_candidates" => c.max_candidates = parse(k, v)?,
                "rf.num_trees" => c.forest.num_trees = parse(k, v)?,
                "rf.bootstrap_fraction" => c.forest.bootstrap_fraction = parse(k, v)?,
                "rf.max_depth" => c.forest.max_depth = if v == "none" { None } else { Some(parse(k, v)?) },
                "rf.grid.min_leaf" => grid_leaf = parse_list(k, v)?,
                "rf.grid.features_per_split" => grid_mtry = parse_list(k, v)?,
                "cv.folds" => c.folds = parse(k, v)?,
                "sampling.min" => c.sampling.0 = parse(k, v)?,
                "sampling.max" => c.sampling.1 = parse(k, v)?,
                "stats.top_domains" => c.top_domains = parse(k, v)?,
                "seed" => c.seed = parse(k, v)?,
                _ => return Err(PipelineError::Config(format!("unknown key {k}"))),
            }
        }
        c.grid = grid_leaf
            .iter()
            .flat_map(|&min_leaf| {
                grid_mtry.iter().map(move |&features_per_split| GridPoint {
                    min_leaf,
                    features_per_split,
                })
            })
            .collect();
        if c.grid.is_empty() {
            return Err(PipelineError::Config("empty rf grid".into()));
        }
        if c.folds < 2 {
            return Err(PipelineError::Config(format!("cv.folds must be at least 2, got {}", c.folds)));
        }
        if c.sampling.0 == 0 || c.sampling.0 > c.sampling.1 {
            return Err(PipelineError::Config(format!(
                "sampling range {}..={} is empty",
                c.sampling.0, c.sampling.1
            )));
        }
        if c.label_source == LabelSource::Manual && c.judgments.is_none() {
            return Err(PipelineError::Config("labels.source = manual needs labels.judgments".into()));
        }
        Ok(c)
    }

    /// Replaces the seed, as `--seed` does.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.raw.insert("seed".into(), seed.to_string());
        self
    }

    /// Every referenced input must exist.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut paths = vec![&self.archives_dir, &self.queries, &self.serp_dir];
        paths.extend(
            [&self.suffixes, &self.news_domains, &self.search_words, &self.wiki_citations, &self.judgments]
                .into_iter()
                .flatten(),
        );
        for p in paths {
            if !p.exists() {
                return Err(PipelineError::Config(format!("input {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// SHA-256 of the sorted key/value pairs.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.raw {
            h.update(format!("{k}={v}\n"));
        }
        hex::encode(h.finalize())
    }

    /// Seed of one stage, derived from the run seed and the stage name.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        let digest = Sha256::digest(format!("{}:{stage}", self.seed));
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = "archives.dir = a\nresources.queries = q.tsv\nlabels.serp_dir = serp\n";

    #[test]
    fn defaults_and_paths() {
        let c = RunConfig::parse(MIN, Path::new("/data")).unwrap();
        assert_eq!(c.archives_dir, Path::new("/data/a"));
        assert_eq!(c.forest.num_trees, 300);
        assert_eq!(c.grid, default_grid());
        assert_eq!((c.folds, c.sampling, c.max_candidates), (5, (20, 50), 1000));
    }

    #[test]
    fn overrides_and_grid() {
        let text = format!("{MIN}# comment\nrf.grid.min_leaf = 2\nrf.grid.features_per_split = sqrt, 4\nindex.dedup = S2\nseed = 9\n");
        let c = RunConfig::parse(&text, Path::new(".")).unwrap();
        assert_eq!(c.grid.len(), 2);
        assert_eq!(c.grid[1].features_per_split, Mtry::Fixed(4));
        assert_eq!(c.dedup, DedupStrategy::All);
        assert_eq!(c.seed, 9);
        assert_ne!(c.stage_seed("train"), c.stage_seed("label"));
        let d = c.clone().with_seed(10);
        assert_ne!(c.hash(), d.hash());
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "archives.dir = a\n",
            &format!("{MIN}bogus = 1\n"),
            &format!("{MIN}seed = x\n"),
            &format!("{MIN}seed = 1\nseed = 2\n"),
            &format!("{MIN}labels.source = manual\n"),
            &format!("{MIN}sampling.min = 60\n"),
        ] {
            assert!(matches!(RunConfig::parse(bad, Path::new(".")), Err(PipelineError::Config(_))), "{bad}");
        }
    }
}

//! Run-directory stages from archives to evaluation, with a manifest of
//! what each stage read and wrote.

mod config;
mod manifest;
mod stages;

use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

pub use config::{LabelSource, RunConfig};
pub use manifest::{Manifest, StageEntry, FileDigest};

use crate::features::FeatureError;
use crate::graph::GraphError;
use crate::labeling::LabelError;
use crate::ltr::LtrError;
use crate::metrics::MetricError;
use crate::tsv::ReadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Graph,
    Index,
    Stats,
    Features,
    Label,
    Train,
    Rank,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Graph,
        Stage::Index,
        Stage::Stats,
        Stage::Features,
        Stage::Label,
        Stage::Train,
        Stage::Rank,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Graph => "graph",
            Stage::Index => "index",
            Stage::Stats => "stats",
            Stage::Features => "features",
            Stage::Label => "label",
            Stage::Train => "train",
            Stage::Rank => "rank",
            Stage::Eval => "eval",
        }
    }

    /// Files this stage writes, relative to the run directory.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &["revisions.tsv", "links.tsv", "ingest_report.json"],
            Stage::Graph => &[
                "graph.tsv",
                "nodes.tsv",
                "pagerank.tsv",
                "domain_graph.tsv",
                "domain_nodes.tsv",
                "domain_pagerank.tsv",
            ],
            Stage::Index => &["index/docs.tsv", "index/postings.tsv", "index/instances.tsv"],
            Stage::Stats => &["anchor_dist.csv", "anchor_dist_yearly.csv", "anchor_dist_top.csv", "evidence.csv"],
            Stage::Features => &["features.txt", "dataset_b.tsv"],
            Stage::Label => &["labels.tsv", "sample.tsv", "kappa.txt"],
            Stage::Train => &["forest.txt", "cv_report.tsv", "importance.tsv", "ig.tsv", "heldout.tsv"],
            Stage::Rank => &["runs.tsv"],
            Stage::Eval => &["eval.csv", "sig.csv"],
        }
    }

    /// Upstream artifacts read by this stage, nearest producer first.
    fn requires(self) -> &'static [(Stage, &'static str)] {
        const INGEST: [(Stage, &str); 2] = [(Stage::Ingest, "revisions.tsv"), (Stage::Ingest, "links.tsv")];
        match self {
            Stage::Ingest => &[],
            Stage::Graph | Stage::Index => &INGEST,
            Stage::Stats => &[
                (Stage::Index, "index/docs.tsv"),
                (Stage::Ingest, "revisions.tsv"),
                (Stage::Ingest, "links.tsv"),
            ],
            Stage::Features => &[
                (Stage::Index, "index/docs.tsv"),
                (Stage::Graph, "pagerank.tsv"),
                (Stage::Graph, "domain_pagerank.tsv"),
                (Stage::Ingest, "revisions.tsv"),
                (Stage::Ingest, "links.tsv"),
            ],
            Stage::Label => &[(Stage::Features, "features.txt"), (Stage::Features, "dataset_b.tsv")],
            Stage::Train => &[(Stage::Label, "labels.tsv"), (Stage::Features, "features.txt")],
            Stage::Rank => &[
                (Stage::Train, "heldout.tsv"),
                (Stage::Label, "labels.tsv"),
                (Stage::Features, "features.txt"),
                (Stage::Index, "index/docs.tsv"),
            ],
            Stage::Eval => &[(Stage::Rank, "runs.tsv"), (Stage::Label, "labels.tsv")],
        }
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing upstream artifact {path}; run stage `{stage}` first")]
    MissingUpstream { stage: &'static str, path: String },
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Ltr(#[from] LtrError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl PipelineError {
    /// 1 for validation problems, 2 for problems with the data.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::MissingUpstream { .. } => 1,
            _ => 2,
        }
    }
}

/// One configured run directory.
pub struct Run {
    pub config: RunConfig,
    pub dir: PathBuf,
}

impl Run {
    pub fn new(config: RunConfig, dir: &Path) -> Self {
        Run {
            config,
            dir: dir.to_path_buf(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn check_upstream(&self, stage: Stage) -> Result<(), PipelineError> {
        for (producer, rel) in stage.requires() {
            if !self.path(rel).exists() {
                return Err(PipelineError::MissingUpstream {
                    stage: producer.name(),
                    path: rel.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Runs one stage and records it in `manifest.json`.
    pub fn run_stage(&self, stage: Stage) -> Result<(), PipelineError> {
        self.config.validate()?;
        self.check_upstream(stage)?;
        std::fs::create_dir_all(&self.dir)?;
        let inputs = stages::run(self, stage)?;
        let entry = StageEntry::new(self, stage, &inputs)?;
        let path = self.path("manifest.json");
        let mut manifest = Manifest::load(&path).unwrap_or_default();
        manifest.record(&self.config, entry);
        manifest.save(&path)?;
        Ok(())
    }

    pub fn run_all(&self) -> Result<(), PipelineError> {
        for stage in Stage::ALL {
            self.run_stage(stage)?;
        }
        Ok(())
    }
}

//! Stage bodies. Each returns the input files it read, for the manifest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use rayon::prelude::*;

use super::{LabelSource, PipelineError, Run, Stage};
use crate::anchor_index::{
    anchor_distribution, build_surrogates, load_index, save_index, top_domains, write_distribution, AnchorIndex,
};
use crate::features::{
    self, evidence_summary, extract_features, feature_names, load_queries, load_wiki_citations, load_word_list,
    read_vectors, write_vectors, DocCatalog, FeatureContext, FeatureVector, QueryRecord, ResourceTables,
    BASE_FEATURES,
};
use crate::graph::{
    build_page_graph, pagerank, project_domain_graph, read_graph, read_ranks, write_graph, write_ranks,
    InlinkTable, NamedScores,
};
use crate::ingest::{
    filter_content_links, find_archives, read_links, read_revisions, write_links, write_revisions, Ingestor,
    LinkRecord, RevisionRecord,
};
use crate::labeling::{
    average_pairwise_kappa, intersect_with_index, load_judgments, load_snapshots, manual_labels, merge_snapshots,
    pool_with_positives, soft_label, stratified_sample, write_sample,
};
use crate::ltr::{
    baseline_score, cross_validate, information_gain_ranking, write_cv_report, write_forest, Baseline, Dataset,
    ForestParams,
};
use crate::metrics::{paired_t_test, write_eval_csv, write_sig_csv, PerQueryMetrics, RankedRun, SigRow, REPORTED_METRICS};
use crate::tsv::{self, write_atomic, ReadError};
use crate::url_kit::{self, SuffixTable};

pub(super) fn run(run: &Run, stage: Stage) -> Result<Vec<PathBuf>, PipelineError> {
    match stage {
        Stage::Ingest => ingest(run),
        Stage::Graph => graph(run),
        Stage::Index => index(run),
        Stage::Stats => stats(run),
        Stage::Features => features(run),
        Stage::Label => label(run),
        Stage::Train => train(run),
        Stage::Rank => rank(run),
        Stage::Eval => eval(run),
    }
}

const RF: &str = "rf";

fn suffixes(run: &Run) -> Result<SuffixTable, PipelineError> {
    Ok(match &run.config.suffixes {
        Some(p) => SuffixTable::load(p)?,
        None => SuffixTable::default(),
    })
}

fn domain_fn(table: &SuffixTable) -> impl Fn(&str) -> String + '_ {
    |u: &str| url_kit::normalize(u).map(|n| table.domain_of(&n)).unwrap_or_else(|_| u.to_string())
}

struct Ingested {
    revisions: Vec<RevisionRecord>,
    content_links: Vec<LinkRecord>,
}

fn load_ingested(run: &Run, inputs: &mut Vec<PathBuf>) -> Result<Ingested, PipelineError> {
    let rp = run.path("revisions.tsv");
    let lp = run.path("links.tsv");
    let revisions = read_revisions(&rp)?;
    let content_links = filter_content_links(&read_links(&lp)?);
    inputs.extend([rp, lp]);
    Ok(Ingested {
        revisions,
        content_links,
    })
}

fn load_anchor_index(run: &Run, revisions: &[RevisionRecord], inputs: &mut Vec<PathBuf>) -> Result<AnchorIndex, PipelineError> {
    let dir = run.path("index");
    inputs.extend(Stage::Index.outputs().iter().map(|rel| run.path(rel)));
    Ok(load_index(&dir, revisions)?)
}

/// Valid queries with their Wikipedia citation counts.
fn queries(run: &Run, inputs: &mut Vec<PathBuf>) -> Result<Vec<QueryRecord>, PipelineError> {
    let mut qs = load_queries(&run.config.queries)?;
    inputs.push(run.config.queries.clone());
    if let Some(p) = &run.config.wiki_citations {
        load_wiki_citations(p, &mut qs)?;
        inputs.push(p.clone());
    }
    qs.retain(|q| q.valid);
    qs.sort_by_key(|q| q.query_id);
    Ok(qs)
}

/// Merged search-engine ranks per query.
fn merged_snapshots(run: &Run, inputs: &mut Vec<PathBuf>) -> Result<BTreeMap<u32, BTreeMap<String, usize>>, PipelineError> {
    let snaps = load_snapshots(&run.config.serp_dir)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&run.config.serp_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    inputs.extend(files);
    Ok(snaps.iter().map(|(q, s)| (*q, merge_snapshots(s))).collect())
}

/// BM25 hits (at most `max_candidates`) plus dataset B, and dataset B itself.
fn candidates(
    run: &Run,
    q: &QueryRecord,
    index: &AnchorIndex,
    catalog: &DocCatalog,
    merged: Option<&BTreeMap<String, usize>>,
) -> (BTreeSet<String>, BTreeMap<String, usize>) {
    let b = merged
        .map(|m| intersect_with_index(m, |d| catalog.contains(d)))
        .unwrap_or_default();
    let mut docs: BTreeSet<String> = index
        .search(&q.terms(), &run.config.bm25)
        .into_iter()
        .take(run.config.max_candidates)
        .map(|(d, _)| d.to_string())
        .collect();
    docs.extend(b.keys().cloned());
    (docs, b)
}

fn ingest(run: &Run) -> Result<Vec<PathBuf>, PipelineError> {
    let files = find_archives(&run.config.archives_dir)?;
    if files.is_empty() {
        return Err(PipelineError::Data(format!(
            "no .warc/.arc files under {}",
            run.config.archives_dir.display()
        )));
    }
    let mut inputs = files.clone();
    let out = Ingestor::new(suffixes(run)?).ingest_paths(&files)?;
    write_atomic(&run.path("revisions.tsv"), |w| write_revisions(w, &out.revisions))?;
    write_atomic(&run.path("links.tsv"), |w| write_links(w, &out.links))?;
    let report = serde_json::to_string_pretty(&out.report).map_err(std::io::Error::other)?;
    write_atomic(&run.path("ingest_report.json"), |w| writeln!(w, "{report}"))?;
    if let Some(p) = &run.config.suffixes {
        inputs.push(p.clone());
    }
    Ok(inputs)
}

fn graph(run: &Run) -> Result<Vec<PathBuf>, PipelineError> {
    let mut inputs = Vec::new();
    let data = load_ingested(run, &mut inputs)?;
    let table = suffixes(run)?;
    let page = build_page_graph(&data.content_links);
    let domain = project_domain_graph(&page, domain_fn(&table));
    let page_ranks = pagerank(&page, &run.config.pagerank)?;
    let domain_ranks = pagerank(&domain, &run.config.pagerank)?;
    for (g, ranks, prefix) in [(&page, &page_ranks, ""), (&domain, &domain_ranks, "domain_")] {
        let mut nodes = Vec::new();
        write_atomic(&run.path(&format!("{prefix}graph.tsv")), |w| write_graph(w, &mut nodes, g))?;
        write_atomic(&run.path(&format!("{prefix}nodes.tsv")), |w| w.write_all(&nodes))?;
        write_atomic(&run.path(&format!("{prefix}pagerank.tsv")), |w| write_ranks(w, ranks))?;
    }
    Ok(inputs)
}

fn index(run: &Run) -> Result<Vec<PathBuf>, PipelineError> {
    let mut inputs = Vec::new();
    let data = load_ingested(run, &mut inputs)?;
    let set = build_surrogates(&data.content_links, &data.revisions, run.config.dedup);
    save_index(&run.path("index"), &AnchorIndex::build(set))?;
    Ok(inputs)
}

fn stats(run: &Run) -> Result<Vec<PathBuf>, PipelineError> {
    let mut inputs = Vec::new();
    let data = load_ingested(run, &mut inputs)?;
    let links = &data.content_links;
    let table = suffixes(run)?;
    let none = None::<(&_, fn(&str) -> String)>;
    write_atomic(&run.path("anchor_dist.csv"), |w| {
        write_distribution(w, &anchor_distribution(links, false, none))
    })?;
    write_atomic(&run.path("anchor_dist_yearly.csv"), |w| {
        write_distribution(w, &anchor_distribution(links, true, none))
    })?;
    let top = top_domains(&data.revisions, run.config.top_domains);
    write_atomic(&run.path("anchor_dist_top.csv"), |w| {
        write_distribution(w, &anchor_distribution(links, false, Some((&top, domain_fn(&table)))))
    })?;

    // evidence of dataset B against the rest of each query's candidates
    let index = load_anchor_index(run, &data.revisions, &mut inputs)?;
    let catalog = DocCatalog::build(&data.revisions);
    let qs = queries(run, &mut inputs)?;
    let merged = merged_snapshots(run, &mut inputs)?;
    let mut rows = Vec::new();
    for q in &qs {
        let (docs, b) = candidates(run, q, &index, &catalog, merged.get(&q.query_id));
        let terms = q.terms();
        let mut values: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
        for d in &docs {
            let Some(info) = catalog.get(d) else { continue };
            let set = if b.contains_key(d) { "B" } else { "other" };
            let depth = url_kit::normalize(&info.representative_url).map_or(0, |u| url_kit::url_depth(&u));
            let anchors = index.doc(d).map(|s| s.anchor_instances.as_slice()).unwrap_or(&[]);
            let freq = features::anchor_freq(&terms, anchors.iter().map(|a| a.text.as_str()));
            values.entry((set, "url_depth")).or_default().push(depth as f64);
            values.entry((set, "revision_count")).or_default().push(info.revision_times.len() as f64);
            values.entry((set, "anchor_query_freq")).or_default().push(freq);
        }
        for ((set, evidence), v) in values {
            let s = evidence_summary(&v)?;
            rows.push(format!(
                "{},{set},{evidence},{},{:.6},{:.6},{:.6},{:.6}",
                q.query_id,
                v.len(),
                s.mean,
                s.median,
                s.q1,
                s.q3
            ));
        }
    }
    write_atomic(&run.path("evidence.csv"), |w| {
        writeln!(w, "query_id,set,evidence,n,mean,median,q1,q3")?;
        for r in &rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;
    Ok(inputs)
}

fn features(run: &Run) -> Result<Vec<PathBuf>, PipelineError> {
    let mut inputs = Vec::new();
    let data = load_ingested(run, &mut inputs)?;
    let index = load_anchor_index(run, &data.revisions, &mut inputs)?;
    let catalog = DocCatalog::build(&data.revisions);
    let inlinks = InlinkTable::build(&data.content_links, run.config.inlink_dedup);
    let mut named = Vec::new();
    for prefix in ["", "domain_"] {
        let gp = run.path(&format!("{prefix}graph.tsv"));
        let np = run.path(&format!("{prefix}nodes.tsv"));
        let rp = run.path(&format!("{prefix}pagerank.tsv"));
        let g = read_graph(&gp, &np)?;
        let scores = read_ranks(&rp)?;
        if scores.len() != g.node_count() {
            return Err(PipelineError::Data(format!(
                "{} has {} scores for {} nodes",
                rp.display(),
                scores.len(),
                g.node_count()
            )));
        }
        named.push(NamedScores::from_scores(&g, &scores));
        inputs.extend([gp, np, rp]);
    }
    let mut resources = ResourceTables::default();
    if let Some(p) = &run.config.news_domains {
        resources.news_domains = load_word_list(p)?;
        inputs.push(p.clone());
    }
    if let Some(p) = &run.config.search_words {
        resources.search_words = load_word_list(p)?;
        inputs.push(p.clone());
    }
    let qs = queries(run, &mut inputs)?;
    let merged = merged_snapshots(run, &mut inputs)?;
    let ctx = FeatureContext {
        index: &index,
        catalog: &catalog,
        inlinks: &inlinks,
        page_ranks: &named[0],
        domain_ranks: &named[1],
        resources: &resources,
        encoding: run.config.entity_encoding,
    };
    let per_query: Vec<(Vec<FeatureVector>, BTreeMap<String, usize>)> = qs
        .par_iter()
        .map(|q| {
            let m = merged.get(&q.query_id);
            let (docs, b) = candidates(run, q, &index, &catalog, m);
            let mut vs = Vec::with_capacity(docs.len());
            for d in &docs {
                let mut v = extract_features(q, d, &ctx)?;
                v.label = m.map_or(0.0, |m| soft_label(d, m));
                vs.push(v);
            }
            Ok((vs, b))
        })
        .collect::<Result<_, PipelineError>>()?;

    let names = feature_names(run.config.entity_encoding);
    let vectors: Vec<FeatureVector> = per_query.iter().flat_map(|(v, _)| v.iter().cloned()).collect();
    write_atomic(&run.path("features.txt"), |w| write_vectors(w, &names, &vectors))?;
    write_atomic(&run.path("dataset_b.tsv"), |w| {
        for (q, (_, b)) in qs.iter().zip(&per_query) {
            for (doc, rank) in b {
                writeln!(w, "{}\t{doc}\t{rank}", q.query_id)?;
            }
        }
        Ok(())
    })?;
    Ok(inputs)
}

type Keyed<T> = BTreeMap<(u32, String), T>;

fn read_keyed<T: std::str::FromStr>(path: &std::path::Path) -> Result<Keyed<T>, ReadError> {
    let mut out = BTreeMap::new();
    for (no, line) in tsv::read_lines(path)? {
        let f: Vec<&str> = line.split('\t').collect();
        let parsed = match f.as_slice() {
            [q, d, v] => q.parse::<u32>().ok().zip(v.parse::<T>().ok()).map(|(q, v)| ((q, d.to_string()), v)),
            _ => None,
        };
        let (k, v) = parsed.ok_or_else(|| ReadError::malformed(path, no, "expected query_id, doc_id, value"))?;
        out.insert(k, v);
    }
    Ok(out)
}

fn label(run: &Run) -> Result<Vec<PathBuf>, PipelineError> {
    let fp = run.path("features.txt");
    let bp = run.path("dataset_b.tsv");
    let (_, vectors) = read_vectors(&fp)?;
    let b: Keyed<usize> = read_keyed(&bp)?;
    let mut inputs = vec![fp, bp];
    let judgments = match &run.config.judgments {
        Some(p) => {
            inputs.push(p.clone());
            load_judgments(p)?
        }
        None => Vec::new(),
    };

    let (lo, hi) = run.config.sampling;
    let mut pools = BTreeMap::new();
    for (qid, group) in features::group_by_query(&vectors) {
        let mut group = group;
        group.sort_by(|a, c| a.doc_id.cmp(&c.doc_id));
        let docs: Vec<String> = group.iter().map(|v| v.doc_id.clone()).collect();
        let sample = if docs.len() >= 3 {
            // small candidate sets shrink the draw to the partition size
            let cap = docs.len() / 3;
            let columns: Vec<Vec<f64>> = (0..BASE_FEATURES.len())
                .map(|f| group.iter().map(|v| v.values[f]).collect())
                .collect();
            let seed = run.config.stage_seed(&format!("label:{qid}"));
            stratified_sample(&docs, &columns, (lo.min(cap), hi.min(cap)), seed)?
        } else {
            BTreeSet::new()
        };
        let positives: Vec<String> = b.range((qid, String::new())..).take_while(|((q, _), _)| *q == qid).map(|((_, d), _)| d.clone()).collect();
        pools.insert(qid, pool_with_positives(&sample, &positives));
    }
    write_atomic(&run.path("sample.tsv"), |w| write_sample(w, &pools))?;

    let labels: Keyed<f64> = match run.config.label_source {
        LabelSource::Soft => vectors.iter().map(|v| ((v.query_id, v.doc_id.clone()), v.label)).collect(),
        LabelSource::Manual => {
            let grades = manual_labels(&judgments);
            pools
                .iter()
                .flat_map(|(q, pool)| pool.keys().map(move |d| (*q, d.clone())))
                .filter_map(|k| grades.get(&k).map(|g| (k, *g)))
                .collect()
        }
    };
    if labels.is_empty() {
        return Err(PipelineError::Data("no labeled (query, document) pairs".into()));
    }
    write_atomic(&run.path("labels.tsv"), |w| {
        for ((q, d), l) in &labels {
            writeln!(w, "{q}\t{d}\t{l}")?;
        }
        Ok(())
    })?;

    let kappa = if judgments.is_empty() { None } else { Some(average_pairwise_kappa(&judgments)?) };
    let assessors: BTreeSet<&str> = judgments.iter().map(|j| j.assessor_id.as_str()).collect();
    write_atomic(&run.path("kappa.txt"), |w| {
        writeln!(w, "label_source\t{}", match run.config.label_source {
            LabelSource::Soft => "soft",
            LabelSource::Manual => "manual",
        })?;
        writeln!(w, "assessors\t{}", assessors.len())?;
        writeln!(w, "judgments\t{}", judgments.len())?;
        match kappa {
            Some(k) => writeln!(w, "mean_pairwise_kappa\t{k:.6}"),
            None => writeln!(w, "mean_pairwise_kappa\tn/a"),
        }
    })?;
    Ok(inputs)
}

/// Feature vectors restricted to labeled pairs, carrying those labels.
fn labeled_dataset(run: &Run, inputs: &mut Vec<PathBuf>) -> Result<(Dataset, Vec<FeatureVector>), PipelineError> {
    let fp = run.path("features.txt");
    let lp = run.path("labels.tsv");
    let (names, vectors) = read_vectors(&fp)?;
    let labels: Keyed<f64> = read_keyed(&lp)?;
    inputs.extend([fp, lp]);
    let vectors: Vec<FeatureVector> = vectors
        .into_iter()
        .filter_map(|mut v| {
            let l = *labels.get(&(v.query_id, v.doc_id.clone()))?;
            v.label = l;
            Some(v)
        })
        .collect();
    Ok((Dataset::from_vectors(&names, &vectors), vectors))
}

fn train(run: &Run) -> Result<Vec<PathBuf>, PipelineError> {
    let mut inputs = Vec::new();
    let (data, _) = labeled_dataset(run, &mut inputs)?;
    let seed = run.config.stage_seed("train");
    let base = ForestParams {
        seed,
        ..run.config.forest
    };
    let (report, forest) = cross_validate(&data, &run.config.grid, &base, run.config.folds, seed)?;
    write_atomic(&run.path("forest.txt"), |w| write_forest(w, &forest))?;
    write_atomic(&run.path("cv_report.tsv"), |w| write_cv_report(w, &report))?;
    write_atomic(&run.path("importance.tsv"), |w| {
        for (name, v) in forest.ranked_importance() {
            writeln!(w, "{name}\t{v:.6}")?;
        }
        Ok(())
    })?;
    let ig = information_gain_ranking(&data.feature_names, &data.rows, &data.labels);
    write_atomic(&run.path("ig.tsv"), |w| {
        for (name, v) in &ig {
            writeln!(w, "{name}\t{v:.6}")?;
        }
        Ok(())
    })?;
    write_atomic(&run.path("heldout.tsv"), |w| {
        for i in 0..data.len() {
            writeln!(w, "{}\t{}\t{}", data.query_ids[i], data.doc_ids[i], report.heldout[i])?;
        }
        Ok(())
    })?;
    Ok(inputs)
}

fn rank(run: &Run) -> Result<Vec<PathBuf>, PipelineError> {
    let mut inputs = Vec::new();
    let (_, vectors) = labeled_dataset(run, &mut inputs)?;
    let hp = run.path("heldout.tsv");
    let heldout: Keyed<f64> = read_keyed(&hp)?;
    inputs.push(hp);
    let rp = run.path("revisions.tsv");
    let revisions = read_revisions(&rp)?;
    inputs.push(rp);
    let index = load_anchor_index(run, &revisions, &mut inputs)?;
    let terms: HashMap<u32, Vec<String>> = queries(run, &mut inputs)?.into_iter().map(|q| (q.query_id, q.terms())).collect();

    let mut runs: Vec<(&str, u32, Vec<(String, f64)>)> = Vec::new();
    for (qid, group) in features::group_by_query(&vectors) {
        let t = terms.get(&qid).map(Vec::as_slice).unwrap_or(&[]);
        let mut rf = Vec::with_capacity(group.len());
        for v in &group {
            let s = heldout.get(&(qid, v.doc_id.clone())).ok_or_else(|| {
                PipelineError::Data(format!("no held-out prediction for query {qid}, {}", v.doc_id))
            })?;
            rf.push((v.doc_id.clone(), *s));
        }
        runs.push((RF, qid, rf));
        for b in Baseline::ALL {
            let scored = group
                .iter()
                .map(|v| (v.doc_id.clone(), baseline_score(b, t, v, &index, &run.config.bm25)))
                .collect();
            runs.push((b.name(), qid, scored));
        }
    }
    let order = |s: &str| std::iter::once(RF).chain(Baseline::ALL.map(Baseline::name)).position(|n| n == s);
    runs.sort_by_key(|(s, q, _)| (order(s), *q));
    write_atomic(&run.path("runs.tsv"), |w| {
        for (system, qid, scored) in &runs {
            let ranked = RankedRun::new(*qid, scored.clone(), HashMap::new());
            for (i, (doc, score)) in ranked.docs.iter().enumerate() {
                writeln!(w, "{system}\t{qid}\t{}\t{doc}\t{score}", i + 1)?;
            }
        }
        Ok(())
    })?;
    Ok(inputs)
}

fn eval(run: &Run) -> Result<Vec<PathBuf>, PipelineError> {
    let rp = run.path("runs.tsv");
    let lp = run.path("labels.tsv");
    let labels: Keyed<f64> = read_keyed(&lp)?;
    let mut scored: BTreeMap<String, BTreeMap<u32, Vec<(String, f64)>>> = BTreeMap::new();
    for (no, line) in tsv::read_lines(&rp)? {
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || ReadError::malformed(&rp, no, "expected system, query_id, rank, doc_id, score");
        if f.len() != 5 {
            return Err(bad().into());
        }
        let qid: u32 = f[1].parse().map_err(|_| bad())?;
        let score: f64 = f[4].parse().map_err(|_| bad())?;
        scored.entry(f[0].to_string()).or_default().entry(qid).or_default().push((f[3].to_string(), score));
    }
    let mut per_query_labels: BTreeMap<u32, HashMap<String, f64>> = BTreeMap::new();
    for ((q, d), l) in &labels {
        per_query_labels.entry(*q).or_default().insert(d.clone(), *l);
    }
    let systems: Vec<&str> = std::iter::once(RF).chain(Baseline::ALL.map(Baseline::name)).collect();
    let mut table = Vec::new();
    for s in &systems {
        let runs: Vec<RankedRun> = per_query_labels
            .iter()
            .map(|(q, l)| {
                let docs = scored.get(*s).and_then(|m| m.get(q)).cloned().unwrap_or_default();
                RankedRun::new(*q, docs, l.clone())
            })
            .collect();
        table.push((s.to_string(), PerQueryMetrics::of(&runs)));
    }
    let mut sig = Vec::new();
    for (name, m) in &table[1..] {
        for metric in REPORTED_METRICS {
            let a = table[0].1.by_name(metric).unwrap_or(&[]);
            let b = m.by_name(metric).unwrap_or(&[]);
            sig.push(SigRow {
                system: RF.to_string(),
                baseline: name.clone(),
                metric: metric.to_string(),
                sig: paired_t_test(a, b)?,
            });
        }
    }
    write_atomic(&run.path("eval.csv"), |w| write_eval_csv(w, &table))?;
    write_atomic(&run.path("sig.csv"), |w| write_sig_csv(w, &sig))?;
    Ok(vec![rp, lp])
}

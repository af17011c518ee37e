//! Hashtag co-occurrence statistics and event filtration.
//!
//! The workflow is: count tags and tag pairs over a corpus, expand an initial
//! tag into its most frequent companions, then grow a selection set greedily
//! (each step restricted to posts carrying every tag chosen so far) and keep
//! only posts that contain the whole set. Oversized results are thinned with
//! a seeded uniform sample.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::Corpus;

#[derive(Debug, Error, PartialEq)]
pub enum TagError {
    #[error("tag #{0} does not occur in the frequency table")]
    UnknownTag(String),
    #[error("sample fraction {0} is outside (0, 1]")]
    BadFraction(f64),
    #[error("target size {target} is smaller than the seed selection ({seed})")]
    TargetTooSmall { target: usize, seed: usize },
}

/// Per-post tag counts and unordered pair counts.
///
/// Pairs are keyed `(min, max)` so each unordered pair is stored once.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TagFrequencyTable {
    counts: BTreeMap<String, u64>,
    cooccur: BTreeMap<(String, String), u64>,
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl TagFrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts every post in the corpus. Tags are counted once per post.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut table = Self::new();
        for post in &corpus.posts {
            table.add_tags(post.hashtags.iter().map(String::as_str));
        }
        table
    }

    /// Same as [`from_corpus`](Self::from_corpus) but counts `shards`
    /// contiguous chunks in parallel and merges the partial tables.
    pub fn from_corpus_sharded(corpus: &Corpus, shards: usize) -> Self {
        let shards = shards.max(1);
        let chunk = corpus.posts.len().div_ceil(shards).max(1);
        corpus
            .posts
            .par_chunks(chunk)
            .map(|posts| {
                let mut table = Self::new();
                for post in posts {
                    table.add_tags(post.hashtags.iter().map(String::as_str));
                }
                table
            })
            .reduce(Self::new, |mut a, b| {
                a.merge(&b);
                a
            })
    }

    /// Adds one post's tags. Duplicates within the iterator are collapsed.
    pub fn add_tags<'a>(&mut self, tags: impl IntoIterator<Item = &'a str>) {
        let set: BTreeSet<&str> = tags.into_iter().collect();
        let tags: Vec<&str> = set.into_iter().collect();
        for (i, a) in tags.iter().enumerate() {
            *self.counts.entry(a.to_string()).or_default() += 1;
            for b in &tags[i + 1..] {
                *self.cooccur.entry(pair_key(a, b)).or_default() += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &TagFrequencyTable) {
        for (tag, n) in &other.counts {
            *self.counts.entry(tag.clone()).or_default() += n;
        }
        for (pair, n) in &other.cooccur {
            *self.cooccur.entry(pair.clone()).or_default() += n;
        }
    }

    /// Sets a tag count directly, for tables assembled from published figures.
    pub fn with_count(mut self, tag: &str, n: u64) -> Self {
        self.counts.insert(tag.to_string(), n);
        self
    }

    /// Sets a pair count directly. Both tags are registered with at least `n`.
    pub fn with_pair(mut self, a: &str, b: &str, n: u64) -> Self {
        for tag in [a, b] {
            let count = self.counts.entry(tag.to_string()).or_default();
            *count = (*count).max(n);
        }
        self.cooccur.insert(pair_key(a, b), n);
        self
    }

    pub fn count(&self, tag: &str) -> u64 {
        self.counts.get(tag).copied().unwrap_or(0)
    }

    pub fn cooccur(&self, a: &str, b: &str) -> u64 {
        if a == b {
            return 0;
        }
        self.cooccur.get(&pair_key(a, b)).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.cooccur
            .iter()
            .map(|((a, b), n)| (a.as_str(), b.as_str(), *n))
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Writes `tag,count` rows.
    pub fn write_counts_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tag", "count"])?;
        for (tag, n) in &self.counts {
            w.write_record([tag.as_str(), &n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `tag_a,tag_b,count` rows.
    pub fn write_cooccur_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tag_a", "tag_b", "count"])?;
        for (a, b, n) in self.pairs() {
            w.write_record([a, b, &n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Stoplist used when an event does not name one.
pub const DEFAULT_STOPLIST: &str = include_str!("../data/stoplist.txt");

/// Reads a stoplist: one tag per line, `#` prefix and case ignored. Blank
/// lines and lines with inner whitespace (comments) are skipped.
pub fn read_stoplist<R: BufRead>(input: R) -> io::Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for line in input.lines() {
        let line = line?;
        let tag = line.trim().trim_start_matches('#').to_lowercase();
        if !tag.is_empty() && !tag.contains(char::is_whitespace) {
            out.insert(tag);
        }
    }
    Ok(out)
}

/// Sorts by descending frequency, ties broken lexicographically.
fn rank(candidates: &mut [(String, u64)]) {
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// Top-`k` companions of `initial` by pair count, excluding the stoplist.
pub fn expand_tags(
    table: &TagFrequencyTable,
    initial: &str,
    stoplist: &BTreeSet<String>,
    k: usize,
) -> Result<Vec<(String, u64)>, TagError> {
    let initial = initial.to_lowercase();
    if table.count(&initial) == 0 {
        return Err(TagError::UnknownTag(initial));
    }
    let mut candidates: Vec<(String, u64)> = table
        .counts
        .keys()
        .filter(|t| **t != initial && !stoplist.contains(*t))
        .map(|t| (t.clone(), table.cooccur(&initial, t)))
        .filter(|(_, n)| *n > 0)
        .collect();
    rank(&mut candidates);
    candidates.truncate(k);
    Ok(candidates)
}

/// Hashtags a post must all carry to belong to an event dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionSet {
    tags: Vec<String>,
    stoplist: BTreeSet<String>,
}

impl SelectionSet {
    /// Starts a set from its initial tag. The initial tag is exempt from the stoplist.
    pub fn new(initial: &str, stoplist: BTreeSet<String>) -> Self {
        SelectionSet {
            tags: vec![initial.trim_start_matches('#').to_lowercase()],
            stoplist,
        }
    }

    /// Appends a tag; returns false if it is already present or stoplisted.
    pub fn push(&mut self, tag: &str) -> bool {
        let tag = tag.trim_start_matches('#').to_lowercase();
        if tag.is_empty() || self.stoplist.contains(&tag) || self.tags.contains(&tag) {
            return false;
        }
        self.tags.push(tag);
        true
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn stoplist(&self) -> &BTreeSet<String> {
        &self.stoplist
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn matches(&self, tags: &BTreeSet<String>) -> bool {
        self.tags.iter().all(|t| tags.contains(t))
    }
}

/// Outcome of [`grow_selection_set`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Growth {
    pub selection: SelectionSet,
    /// Number of matching posts after each tag was appended, starting with the seed.
    pub matched: Vec<usize>,
    /// True when growth ended before `target_size` because no tag co-occurred
    /// with the whole set.
    pub stopped_early: bool,
}

/// Greedily appends the tag that co-occurs most often with every tag in the set.
pub fn grow_selection_set(
    corpus: &Corpus,
    seed: SelectionSet,
    target_size: usize,
) -> Result<Growth, TagError> {
    if target_size < seed.len() {
        return Err(TagError::TargetTooSmall {
            target: target_size,
            seed: seed.len(),
        });
    }
    let mut selection = seed;
    let count_matching =
        |sel: &SelectionSet| corpus.posts.iter().filter(|p| sel.matches(&p.hashtags)).count();
    let mut matched = vec![count_matching(&selection)];

    while selection.len() < target_size {
        let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
        for post in corpus.posts.iter().filter(|p| selection.matches(&p.hashtags)) {
            for tag in &post.hashtags {
                if !selection.stoplist.contains(tag) && !selection.tags.contains(tag) {
                    *freq.entry(tag.as_str()).or_default() += 1;
                }
            }
        }
        // BTreeMap iteration is lexicographic, so strict > keeps the first of equals.
        let best = freq
            .into_iter()
            .fold(None::<(&str, u64)>, |best, (tag, n)| match best {
                Some((_, m)) if m >= n => best,
                _ => Some((tag, n)),
            });
        match best {
            Some((tag, _)) => {
                let tag = tag.to_string();
                selection.push(&tag);
                matched.push(count_matching(&selection));
            }
            None => {
                return Ok(Growth {
                    selection,
                    matched,
                    stopped_early: true,
                })
            }
        }
    }
    Ok(Growth {
        selection,
        matched,
        stopped_early: false,
    })
}

/// Keeps posts carrying every selection tag (and at least one URI if `require_uri`).
pub fn filter_by_selection_set(corpus: &Corpus, sel: &SelectionSet, require_uri: bool) -> Corpus {
    Corpus {
        source_label: corpus.source_label.clone(),
        posts: corpus
            .posts
            .iter()
            .filter(|p| sel.matches(&p.hashtags) && (!require_uri || !p.uris.is_empty()))
            .cloned()
            .collect(),
    }
}

/// Uniform sample without replacement of `round(fraction * N)` posts,
/// deterministic in `seed`, preserving input order.
pub fn sample(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus, TagError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(TagError::BadFraction(fraction));
    }
    let n = corpus.posts.len();
    let k = ((fraction * n as f64).round() as usize).min(n);
    if k == n {
        return Ok(corpus.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(Corpus {
        source_label: corpus.source_label.clone(),
        posts: picked.into_iter().map(|i| corpus.posts[i].clone()).collect(),
    })
}

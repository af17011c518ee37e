//! Parsing of social-post corpora.
//!
//! Two input formats are supported:
//!
//! * the SNAP tweet dump: blank-line separated records of three lines
//!   prefixed `T\t` (timestamp), `U\t` (author URI) and `W\t` (post text);
//! * a plain URI list: one absolute URI per line, `#` starting a comment.
//!
//! Malformed records never abort a parse. They are reported as [`Skipped`]
//! entries carrying the line number so a multi-gigabyte dump can be
//! processed in one pass.

use std::collections::BTreeSet;
use std::io::{self, BufRead};
use std::sync::OnceLock;

use chrono::{DateTime, NaiveDateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use url::Url;

/// Timestamp layout of the SNAP `T` line.
pub const SNAP_TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// One social-media record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub created_at: DateTime<Utc>,
    pub author: String,
    pub text: String,
    /// Lowercased tags without the leading `#`.
    pub hashtags: BTreeSet<String>,
    /// User names without the leading `@`.
    pub mentions: BTreeSet<String>,
    /// Absolute URIs in order of appearance.
    pub uris: Vec<String>,
}

impl Post {
    /// A post that only carries a URI, as produced by URI-list ingest.
    pub fn bare(uri: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        Post {
            created_at,
            author: String::new(),
            text: String::new(),
            hashtags: BTreeSet::new(),
            mentions: BTreeSet::new(),
            uris: vec![uri.into()],
        }
    }

    /// Builds a post from its text the same way the SNAP parser does.
    pub fn from_text(created_at: DateTime<Utc>, author: impl Into<String>, text: &str) -> Self {
        let (uris, hashtags, mentions) = tokenize(text);
        Post {
            created_at,
            author: author.into(),
            text: text.to_string(),
            hashtags,
            mentions,
            uris,
        }
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.hashtags.contains(tag)
    }

    /// The `T` line timestamp text for this post.
    pub fn snap_timestamp(&self) -> String {
        format_snap_timestamp(&self.created_at)
    }

    /// Serializes the post as a SNAP record (without the trailing blank line).
    pub fn to_snap_record(&self) -> String {
        format!(
            "T\t{}\nU\thttp://twitter.com/{}\nW\t{}\n",
            self.snap_timestamp(),
            self.author,
            self.text
        )
    }
}

/// An ordered collection of posts from one source.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub source_label: String,
    pub posts: Vec<Post>,
}

impl Corpus {
    pub fn new(source_label: impl Into<String>, posts: Vec<Post>) -> Self {
        Corpus {
            source_label: source_label.into(),
            posts,
        }
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Total number of URI occurrences across all posts.
    pub fn uri_count(&self) -> usize {
        self.posts.iter().map(|p| p.uris.len()).sum()
    }

    /// Writes the corpus as JSON lines: a header object followed by one post per line.
    pub fn write_jsonl<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        let header = serde_json::json!({ "source_label": self.source_label });
        writeln!(out, "{header}")?;
        for post in &self.posts {
            serde_json::to_writer(&mut out, post)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<Corpus> {
        let mut lines = input.lines();
        let header: serde_json::Value = match lines.next() {
            Some(line) => serde_json::from_str(&line?)?,
            None => return Ok(Corpus::default()),
        };
        let source_label = header
            .get("source_label")
            .and_then(|v| v.as_str())
            .unwrap_or_default()
            .to_string();
        let mut posts = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            posts.push(serde_json::from_str(&line)?);
        }
        Ok(Corpus {
            source_label,
            posts,
        })
    }
}

/// A record or line that could not be turned into a [`Post`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    /// 1-based line number where the offending record starts.
    pub line: usize,
    pub reason: String,
}

/// Result of an ingest pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ingested {
    pub corpus: Corpus,
    pub skipped: Vec<Skipped>,
}

pub fn format_snap_timestamp(ts: &DateTime<Utc>) -> String {
    ts.format(SNAP_TIME_FORMAT).to_string()
}

/// Parses a SNAP timestamp. Timestamps are taken to be UTC.
pub fn parse_snap_timestamp(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s.trim(), SNAP_TIME_FORMAT)
        .ok()
        .map(|naive| naive.and_utc())
}

fn uri_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bhttps?://[^\s<>]+").unwrap())
}

fn tag_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|[^\w&/])#(\w+)").unwrap())
}

fn mention_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|[^\w])@(\w+)").unwrap())
}

const TRAILING_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?', '\'', '"', ')', ']', '}', '>'];

/// Splits post text into URIs, hashtags and mentions.
///
/// URIs are scheme-anchored (`http`/`https`) with trailing punctuation
/// removed. They are blanked out before tags and mentions are scanned so
/// that a fragment such as `#top` inside a URI is not taken for a tag.
pub fn tokenize(text: &str) -> (Vec<String>, BTreeSet<String>, BTreeSet<String>) {
    let mut uris = Vec::new();
    let mut rest = String::with_capacity(text.len());
    let mut last = 0;
    for m in uri_pattern().find_iter(text) {
        rest.push_str(&text[last..m.start()]);
        rest.push(' ');
        last = m.end();
        let candidate = m.as_str().trim_end_matches(TRAILING_PUNCT);
        if let Ok(parsed) = Url::parse(candidate) {
            if parsed.has_host() {
                uris.push(candidate.to_string());
            }
        }
    }
    rest.push_str(&text[last..]);

    let hashtags = tag_pattern()
        .captures_iter(&rest)
        .map(|c| c[1].to_lowercase())
        .collect();
    let mentions = mention_pattern()
        .captures_iter(&rest)
        .map(|c| c[1].to_string())
        .collect();
    (uris, hashtags, mentions)
}

/// Streaming SNAP parser yielding one item per record.
pub struct SnapReader<R> {
    input: R,
    line_no: usize,
    buf: Vec<u8>,
    done: bool,
}

impl<R: BufRead> SnapReader<R> {
    pub fn new(input: R) -> Self {
        SnapReader {
            input,
            line_no: 0,
            buf: Vec::new(),
            done: false,
        }
    }

    fn next_line(&mut self) -> io::Result<Option<String>> {
        self.buf.clear();
        if self.input.read_until(b'\n', &mut self.buf)? == 0 {
            return Ok(None);
        }
        self.line_no += 1;
        Ok(Some(String::from_utf8_lossy(&self.buf).into_owned()))
    }

    /// Collects the next blank-line separated group of lines.
    fn next_group(&mut self) -> io::Result<Option<(usize, Vec<String>)>> {
        let mut start = 0;
        let mut lines = Vec::new();
        while let Some(line) = self.next_line()? {
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() {
                if lines.is_empty() {
                    continue;
                }
                break;
            }
            if lines.is_empty() {
                start = self.line_no;
            }
            lines.push(trimmed.trim_start().to_string());
        }
        if lines.is_empty() {
            Ok(None)
        } else {
            Ok(Some((start, lines)))
        }
    }
}

fn parse_record(lines: &[String]) -> Result<Post, String> {
    let mut time = None;
    let mut user = None;
    let mut text = None;
    for line in lines {
        let (tag, value) = match line.split_once('\t') {
            Some((tag, value)) => (tag, value),
            None => (line.trim_end(), ""),
        };
        let slot = match tag {
            "T" => &mut time,
            "U" => &mut user,
            "W" => &mut text,
            _ => return Err(format!("unexpected line {:?}", truncate(line, 40))),
        };
        if slot.is_some() {
            return Err(format!("duplicate {tag} line"));
        }
        *slot = Some(value.trim_end());
    }
    let time = time.ok_or("missing T line")?;
    let user = user.ok_or("missing U line")?;
    let text = text.ok_or("missing W line")?;
    let created_at =
        parse_snap_timestamp(time).ok_or_else(|| format!("unparseable timestamp {time:?}"))?;
    let author = user
        .trim()
        .trim_end_matches('/')
        .rsplit('/')
        .next()
        .unwrap_or_default();
    Ok(Post::from_text(created_at, author, text))
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}

impl<R: BufRead> Iterator for SnapReader<R> {
    type Item = io::Result<Result<Post, Skipped>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_group() {
            Ok(Some((line, lines))) => Some(Ok(
                parse_record(&lines).map_err(|reason| Skipped { line, reason })
            )),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Parses a whole SNAP stream into a corpus plus skip diagnostics.
pub fn parse_snap_stream<R: BufRead>(input: R, source_label: &str) -> io::Result<Ingested> {
    let mut out = Ingested {
        corpus: Corpus::new(source_label, Vec::new()),
        skipped: Vec::new(),
    };
    for item in SnapReader::new(input) {
        match item? {
            Ok(post) => out.corpus.posts.push(post),
            Err(skip) => {
                log::debug!("skipping record at line {}: {}", skip.line, skip.reason);
                out.skipped.push(skip);
            }
        }
    }
    Ok(out)
}

/// Parses a list of URIs, one per line, each becoming a post dated `default_date`.
pub fn parse_uri_list<R: BufRead>(
    input: R,
    default_date: DateTime<Utc>,
    source_label: &str,
) -> io::Result<Ingested> {
    let mut out = Ingested {
        corpus: Corpus::new(source_label, Vec::new()),
        skipped: Vec::new(),
    };
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let entry = line.trim();
        if entry.is_empty() || entry.starts_with('#') {
            continue;
        }
        match Url::parse(entry) {
            Ok(url) if url.has_host() => out.corpus.posts.push(Post::bare(entry, default_date)),
            _ => out.skipped.push(Skipped {
                line: idx + 1,
                reason: format!("not an absolute URI: {:?}", truncate(entry, 60)),
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    const SAMPLE_RECORD: &str = "T\t2009-07-31 23:57:18\n\
U\thttp://Twitter.com/nickgotch\n\
W\tRT @rockingjude: December 21, 2009 Depopulation by Food Will Begin http://is.gd/1WMZb WHOA..BETTER WATCH RT plz #pwa #tcot\n";

    fn tags(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_example_record() {
        let parsed = parse_snap_stream(SAMPLE_RECORD.as_bytes(), "snap").unwrap();
        assert!(parsed.skipped.is_empty());
        assert_eq!(parsed.corpus.len(), 1);
        let post = &parsed.corpus.posts[0];
        assert_eq!(
            post.created_at,
            Utc.with_ymd_and_hms(2009, 7, 31, 23, 57, 18).unwrap()
        );
        assert_eq!(post.author, "nickgotch");
        assert_eq!(post.uris, vec!["http://is.gd/1WMZb"]);
        assert_eq!(post.hashtags, tags(&["pwa", "tcot"]));
        assert_eq!(post.mentions, tags(&["rockingjude"]));
        assert_eq!(post.snap_timestamp(), "2009-07-31 23:57:18");
    }

    #[test]
    fn empty_stream() {
        let parsed = parse_snap_stream("".as_bytes(), "x").unwrap();
        assert!(parsed.corpus.is_empty());
        assert!(parsed.skipped.is_empty());
    }

    #[test]
    fn two_uris_no_tags() {
        let input = "T\t2009-06-25 10:00:00\nU\thttp://twitter.com/a\nW\tsee http://a.com/x and https://b.org/y?z=1.\n";
        let parsed = parse_snap_stream(input.as_bytes(), "x").unwrap();
        let post = &parsed.corpus.posts[0];
        assert_eq!(post.uris, vec!["http://a.com/x", "https://b.org/y?z=1"]);
        assert!(post.hashtags.is_empty());
    }

    #[test]
    fn malformed_records_are_skipped_with_line_numbers() {
        let input = format!(
            "\n  {SAMPLE_RECORD}\nT\t2009-07-31\nU\thttp://twitter.com/b\nW\tbad time\n\nU\thttp://twitter.com/c\nW\tno time\n\n{SAMPLE_RECORD}"
        );
        let parsed = parse_snap_stream(input.as_bytes(), "x").unwrap();
        assert_eq!(parsed.corpus.len(), 2);
        assert_eq!(parsed.skipped.len(), 2);
        assert_eq!(parsed.skipped[0].line, 6);
        assert!(parsed.skipped[0].reason.contains("timestamp"));
        assert_eq!(parsed.skipped[1].line, 10);
        assert!(parsed.skipped[1].reason.contains("missing T"));
    }

    #[test]
    fn tag_tokenization() {
        let (uris, tags_found, mentions) =
            tokenize("#H1N1, #swine_flu! a#b http://x.com/#frag mail@host.com @Bob.");
        assert_eq!(uris, vec!["http://x.com/#frag"]);
        assert_eq!(tags_found, tags(&["h1n1", "swine_flu"]));
        assert_eq!(mentions, tags(&["Bob"]));
    }

    #[test]
    fn uri_list() {
        let date = Utc.with_ymd_and_hms(2011, 2, 11, 0, 0, 0).unwrap();
        let input = "# comment\nhttp://a.com/1\n\nhttps://b.com/2\nnot a uri\nhttp://c.com\n";
        let parsed = parse_uri_list(input.as_bytes(), date, "egypt").unwrap();
        assert_eq!(parsed.corpus.len(), 3);
        assert!(parsed.corpus.posts.iter().all(|p| p.created_at == date));
        assert!(parsed.corpus.posts.iter().all(|p| p.hashtags.is_empty() && p.text.is_empty()));
        assert_eq!(parsed.skipped.len(), 1);
        assert_eq!(parsed.skipped[0].line, 5);

        let comments = parse_uri_list("# a\n# b\n".as_bytes(), date, "x").unwrap();
        assert!(comments.corpus.is_empty());
    }

    #[test]
    fn jsonl_roundtrip() {
        let parsed = parse_snap_stream(SAMPLE_RECORD.as_bytes(), "snap").unwrap();
        let mut buf = Vec::new();
        parsed.corpus.write_jsonl(&mut buf).unwrap();
        let back = Corpus::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, parsed.corpus);
    }
}

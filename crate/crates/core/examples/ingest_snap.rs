//! Parse a SNAP-format stream, including a malformed record, and print the posts.

use std::io::Cursor;

use linkrot::ingest::parse_snap_stream;

const SNAP: &str = "\
T\t2009-07-31 23:57:18
U\thttp://twitter.com/nickgotch
W\tRT @rockingjude: There is a new Hot Topic Video http://is.gd/1WMZb #pwa #tcot

T\tnot a timestamp
U\thttp://twitter.com/someone
W\tbroken record

T\t2009-08-01 00:02:11
U\thttp://twitter.com/reader
W\ttwo links, no tags http://a.example/x and https://b.example/y?z=1.
";

fn main() -> std::io::Result<()> {
    let ingested = parse_snap_stream(Cursor::new(SNAP), "sample")?;
    for post in &ingested.corpus.posts {
        println!(
            "{} @{} uris={:?} tags={:?} mentions={:?}",
            post.created_at, post.author, post.uris, post.hashtags, post.mentions
        );
    }
    for skip in &ingested.skipped {
        println!("skipped record at line {}: {}", skip.line, skip.reason);
    }
    Ok(())
}

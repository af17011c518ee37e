//! Follow shortener redirects through a scripted transport and collapse the
//! aliases that lead to the same page.

use chrono::{TimeZone, Utc};
use linkrot::canonical::{dedupe, resolve_all, ResolveOptions};
use linkrot::politeness::HostGate;
use linkrot::transport::{Canned, ReplayStore};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut web = ReplayStore::new();
    let moved = |to: &str| Canned::status(301).with_header("Location", to);
    web.add("http://bit.ly/q1", moved("http://news.example.org/quake"))
        .add("http://goo.gl/q1", moved("http://t.co/x"))
        .add("http://t.co/x", moved("http://NEWS.example.org:80/quake#top"))
        .add("http://news.example.org/quake", Canned::status(200).with_body("story"))
        .add("http://NEWS.example.org:80/quake#top", Canned::status(200).with_body("story"))
        .add("http://loop.example/a", moved("http://loop.example/b"))
        .add("http://loop.example/b", moved("http://loop.example/a"));

    let uris: Vec<String> = ["http://bit.ly/q1", "http://goo.gl/q1", "http://news.example.org/quake", "http://loop.example/a"]
        .map(String::from)
        .to_vec();
    let at = Utc.with_ymd_and_hms(2012, 4, 1, 0, 0, 0).unwrap();
    let records = resolve_all(&uris, &web, &ResolveOptions::default(), at, 4, &HostGate::unrestricted())?;
    for r in &records {
        let hops: Vec<String> = r.chain.iter().map(|h| format!("{} {}", h.status, h.uri)).collect();
        println!("{} -> {:?} via [{}]", r.original, r.final_uri, hops.join(", "));
    }
    for group in dedupe(&records) {
        println!("{} (resolved: {}): {:?}", group.final_uri, group.resolved, group.members);
    }
    Ok(())
}

//! Look up TimeMaps through a scripted aggregator, including a paged TimeMap
//! and an aggregator outage that clears up in a later round.

use std::collections::HashMap;

use chrono::{TimeZone, Utc};
use linkrot::clock::VirtualClock;
use linkrot::memento::{archive_audit, ArchiveConfig, Endpoint};
use linkrot::politeness::HostGate;
use linkrot::transport::{Canned, ReplayStore};

const PAGE1: &str = r#"<http://news.example/>; rel="original",
<http://arch.example/20090625/http://news.example/>; rel="first memento"; datetime="Thu, 25 Jun 2009 10:00:00 GMT",
<http://agg.example/page2>; rel="timemap next"; type="application/link-format""#;

const PAGE2: &str = r#"<http://news.example/>; rel="original",
<http://arch.example/20100101/http://news.example/>; rel="last memento"; datetime="Fri, 01 Jan 2010 00:00:00 GMT""#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut agg = ReplayStore::new();
    agg.add("http://agg.example/timemap/link/http://news.example/", Canned::status(200).with_body(PAGE1))
        .add("http://agg.example/page2", Canned::status(200).with_body(PAGE2))
        .add_rounds(
            "http://agg.example/timemap/link/http://blog.example/",
            vec![Canned::status(503), Canned::status(200).with_body(PAGE2)],
        )
        .add("http://agg.example/timemap/link/*", Canned::status(404));

    let cfg = ArchiveConfig {
        endpoint: Endpoint::new("http://agg.example/timemap/link/{uri}")?,
        ..Default::default()
    };
    let uris: Vec<String> = ["http://news.example/", "http://blog.example/", "http://never.example/"]
        .map(String::from)
        .to_vec();
    let clock = VirtualClock::starting_at(Utc.with_ymd_and_hms(2012, 4, 1, 0, 0, 0).unwrap());
    let verdicts = archive_audit(&uris, &agg, &cfg, &clock, &HostGate::unrestricted(), HashMap::new(), |_, _| Ok(()))?;
    for v in verdicts {
        println!("{:<24} archived={} mementos={} rounds={}", v.uri, v.archived, v.mementos, v.rounds.len());
    }
    Ok(())
}

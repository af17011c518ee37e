//! Three audit rounds against a scripted web: a flaky host that recovers,
//! a soft 404, a dead domain and a plain 404.

use std::collections::HashMap;

use chrono::{TimeZone, Utc};
use linkrot::clock::VirtualClock;
use linkrot::liveness::{audit_rounds, LivenessConfig, LivenessSummary};
use linkrot::politeness::HostGate;
use linkrot::transport::{Canned, NetworkFailure, ReplayStore};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let parked = "This domain is parked. The page you requested could not be found on this server today.";
    let mut web = ReplayStore::new();
    web.add("http://ok.example/", Canned::status(200).with_body("a real article about the event"))
        .add("http://ok.example/*", Canned::status(404))
        .add("http://shop.example/item/7", Canned::status(200).with_body(parked))
        .add("http://shop.example/*", Canned::status(200).with_body(parked))
        .add("http://gone.example/", Canned::error(NetworkFailure::Dns))
        .add("http://dead.example/page", Canned::status(404))
        .add_rounds(
            "http://flaky.example/",
            vec![Canned::error(NetworkFailure::Timeout), Canned::status(200).with_body("back again")],
        )
        .add("http://flaky.example/*", Canned::status(404));

    let uris: Vec<String> = [
        "http://ok.example/",
        "http://shop.example/item/7",
        "http://gone.example/",
        "http://dead.example/page",
        "http://flaky.example/",
    ]
    .map(String::from)
    .to_vec();
    let clock = VirtualClock::starting_at(Utc.with_ymd_and_hms(2012, 4, 1, 0, 0, 0).unwrap());
    let cfg = LivenessConfig::default();
    let verdicts = audit_rounds(&uris, &web, &cfg, &clock, &HostGate::unrestricted(), HashMap::new(), |_, _| Ok(()))?;
    for v in &verdicts {
        let rounds: Vec<String> = v.rounds.iter().map(|r| r.reason.to_string()).collect();
        println!("{:<28} {:?} {} [{}]", v.uri, v.status, v.reason, rounds.join(", "));
    }
    println!("missing: {:.2}%", LivenessSummary::of(&verdicts).missing_percent());
    Ok(())
}

use std::collections::{BTreeSet, HashSet};

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use proptest::prelude::*;

use linkrot::analysis::{fit_linear, split_by_centroid, DatedResource, LinearModel};
use linkrot::canonical::{dedupe, normalize_uri, Hop, UriRecord};
use linkrot::ingest::{Corpus, Post};
use linkrot::liveness::{assemble_verdict, Reason, RoundOutcome, Status};
use linkrot::memento::{parse_link_format, serialize_link_format, LinkEntry};
use linkrot::memento::{Memento, TimeMap};
use linkrot::tagstats::{filter_by_selection_set, grow_selection_set, sample, SelectionSet, TagFrequencyTable};

const TAGS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2010, 1, 1, 0, 0, 0).unwrap()
}

fn corpus_strategy() -> impl Strategy<Value = Corpus> {
    prop::collection::vec((prop::collection::vec(0..TAGS.len(), 0..5), any::<bool>()), 0..40).prop_map(|rows| {
        let posts = rows
            .into_iter()
            .map(|(tags, link)| {
                let mut text: Vec<String> = tags.iter().map(|i| format!("#{}", TAGS[*i])).collect();
                if link {
                    text.push("http://x.example/p".into());
                }
                Post::from_text(t0(), "u", &text.join(" "))
            })
            .collect();
        Corpus::new("gen", posts)
    })
}

fn reason_strategy() -> impl Strategy<Value = Reason> {
    prop_oneof![
        Just(Reason::Ok),
        Just(Reason::Soft404),
        (400u16..500).prop_map(Reason::Http4xx),
        (500u16..600).prop_map(Reason::Http5xx),
        Just(Reason::RedirectLoop),
        Just(Reason::DnsFailure),
        Just(Reason::Timeout),
        Just(Reason::NoResponse),
    ]
}

fn outcome(round: u32, reason: Reason) -> RoundOutcome {
    RoundOutcome {
        round,
        at: t0() + Duration::days(2 * round as i64),
        reason,
        similarity: None,
    }
}

fn record_strategy() -> impl Strategy<Value = UriRecord> {
    let host = prop::sample::select(vec!["a.example", "B.example", "c.example:80"]);
    let path = prop::sample::select(vec!["", "/", "/x", "/x#frag", "/y?q=1"]);
    (host.clone(), path.clone(), prop::option::of((host, path))).prop_map(|(h, p, fin)| {
        let original = format!("http://{h}{p}");
        UriRecord {
            chain: vec![Hop {
                uri: original.clone(),
                status: if fin.is_some() { 200 } else { 0 },
            }],
            original,
            final_uri: fin.map(|(h, p)| format!("http://{h}{p}")),
            resolved_at: t0(),
            failure: None,
        }
    })
}

fn token() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_-]{0,8}"
}

proptest! {
    #[test]
    fn cooccurrence_symmetric_and_bounded(corpus in corpus_strategy()) {
        let table = TagFrequencyTable::from_corpus(&corpus);
        for a in TAGS {
            for b in TAGS {
                prop_assert_eq!(table.cooccur(a, b), table.cooccur(b, a));
                if a != b {
                    prop_assert!(table.cooccur(a, b) <= table.count(a).min(table.count(b)));
                }
            }
        }
    }

    #[test]
    fn sharding_does_not_change_counts(corpus in corpus_strategy(), shards in 1usize..7) {
        prop_assert_eq!(TagFrequencyTable::from_corpus_sharded(&corpus, shards), TagFrequencyTable::from_corpus(&corpus));
    }

    #[test]
    fn merge_is_commutative_and_associative(x in corpus_strategy(), y in corpus_strategy(), z in corpus_strategy()) {
        let (tx, ty, tz) = (TagFrequencyTable::from_corpus(&x), TagFrequencyTable::from_corpus(&y), TagFrequencyTable::from_corpus(&z));
        let mut xy = tx.clone();
        xy.merge(&ty);
        let mut yx = ty.clone();
        yx.merge(&tx);
        prop_assert_eq!(&xy, &yx);
        let mut left = xy;
        left.merge(&tz);
        let mut yz = ty.clone();
        yz.merge(&tz);
        let mut right = tx.clone();
        right.merge(&yz);
        prop_assert_eq!(left, right);
    }

    #[test]
    fn filtration_is_monotone(corpus in corpus_strategy(), extra in prop::collection::vec(0..TAGS.len(), 0..3), require_uri: bool) {
        let base = SelectionSet::new("a", BTreeSet::new());
        let mut bigger = base.clone();
        for i in extra {
            bigger.push(TAGS[i]);
        }
        let small = filter_by_selection_set(&corpus, &base, require_uri);
        let large = filter_by_selection_set(&corpus, &bigger, require_uri);
        prop_assert!(large.len() <= small.len());
        for p in &large.posts {
            prop_assert!(small.posts.contains(p));
        }
    }

    #[test]
    fn growth_keeps_seed_prefix(corpus in corpus_strategy(), target in 1usize..5, stop in prop::collection::btree_set(prop::sample::select(TAGS.to_vec()), 0..3)) {
        let stop: BTreeSet<String> = stop.into_iter().map(String::from).collect();
        let mut seed = SelectionSet::new("b", stop.clone());
        let target = target.max(seed.len());
        seed.push("c");
        let target = target.max(seed.len());
        let growth = grow_selection_set(&corpus, seed.clone(), target).unwrap();
        let tags = growth.selection.tags();
        prop_assert_eq!(&tags[..seed.len()], seed.tags());
        prop_assert!(tags.len() <= target);
        prop_assert_eq!(tags.iter().collect::<HashSet<_>>().len(), tags.len());
        for t in &tags[1..] {
            prop_assert!(!stop.contains(t));
        }
        prop_assert!(growth.matched.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn sample_size_and_order(corpus in corpus_strategy(), fraction in 0.01f64..=1.0, seed: u64) {
        let s = sample(&corpus, fraction, seed).unwrap();
        prop_assert_eq!(s.len(), (fraction * corpus.len() as f64).round() as usize);
        prop_assert_eq!(&s, &sample(&corpus, fraction, seed).unwrap());
    }

    #[test]
    fn dedupe_partitions_and_is_idempotent(records in prop::collection::vec(record_strategy(), 0..30)) {
        let groups = dedupe(&records);
        prop_assert!(groups.len() <= records.len());
        prop_assert_eq!(groups.iter().map(|g| g.records).sum::<usize>(), records.len());
        let mut seen = HashSet::new();
        for g in &groups {
            prop_assert!(!g.members.is_empty());
            for m in &g.members {
                prop_assert!(seen.insert((g.resolved, m.clone())) || records.iter().filter(|r| &r.original == m).count() > 1);
            }
        }
        // collapsing every group to one representative changes nothing
        let reps: Vec<UriRecord> = groups
            .iter()
            .map(|g| UriRecord {
                original: g.final_uri.clone(),
                chain: vec![],
                final_uri: g.resolved.then(|| g.final_uri.clone()),
                resolved_at: t0(),
                failure: None,
            })
            .collect();
        let again = dedupe(&reps);
        prop_assert_eq!(
            again.iter().map(|g| (&g.final_uri, g.resolved)).collect::<Vec<_>>(),
            groups.iter().map(|g| (&g.final_uri, g.resolved)).collect::<Vec<_>>()
        );
        for r in &records {
            let n = normalize_uri(&r.original);
            prop_assert_eq!(normalize_uri(&n), n);
        }
    }

    #[test]
    fn link_format_roundtrip(entries in prop::collection::vec(
        ("[a-z]{1,6}://[a-z0-9./?=&_-]{1,20}", prop::collection::vec((token(), "[ -~]{0,16}"), 0..4)),
        0..6,
    )) {
        let entries: Vec<LinkEntry> = entries
            .into_iter()
            .map(|(target, attrs)| attrs.into_iter().fold(LinkEntry::new(target), |e, (k, v)| e.with(&k, &v)))
            .collect();
        let text = serialize_link_format(&entries);
        prop_assert_eq!(parse_link_format(&text).unwrap(), entries);
    }

    #[test]
    fn timemap_roundtrip(offsets in prop::collection::vec(0i64..400_000_000, 0..12)) {
        let mementos = offsets
            .iter()
            .map(|s| {
                let at = Utc.with_ymd_and_hms(1996, 1, 1, 0, 0, 0).unwrap() + Duration::seconds(*s);
                Memento { uri_m: format!("http://arch.example/{}/http://a.example/", at.timestamp()), datetime: at, rel: vec!["memento".into()] }
            })
            .collect::<Vec<_>>();
        let tm = TimeMap::from_entries("http://a.example/", &[], t0()).map(|mut tm| { tm.mementos = mementos; tm.mementos.sort_by_key(|m| m.datetime); tm }).unwrap();
        let back = TimeMap::parse("http://a.example/", &tm.to_link_format(), t0()).unwrap();
        prop_assert_eq!(back.mementos.iter().map(|m| (&m.uri_m, m.datetime)).collect::<Vec<_>>(),
                        tm.mementos.iter().map(|m| (&m.uri_m, m.datetime)).collect::<Vec<_>>());
    }

    #[test]
    fn success_is_never_undone(reasons in prop::collection::vec(reason_strategy(), 1..5), extra in reason_strategy(), shuffle: u64) {
        let rounds: Vec<RoundOutcome> = reasons.iter().enumerate().map(|(i, r)| outcome(i as u32 + 1, *r)).collect();
        let before = assemble_verdict("u", rounds.clone());
        prop_assert_eq!(before.status == Status::Available, reasons.contains(&Reason::Ok));

        let mut more = rounds.clone();
        more.push(outcome(reasons.len() as u32 + 1, extra));
        let after = assemble_verdict("u", more);
        if before.status == Status::Available {
            prop_assert_eq!(after.status, Status::Available);
        }

        let mut shuffled = rounds;
        let n = shuffled.len();
        shuffled.rotate_left((shuffle as usize) % n);
        prop_assert_eq!(assemble_verdict("u", shuffled), before);
    }

    #[test]
    fn prediction_monotone_for_nonnegative_slope(slope in 0.0f64..1.0, intercept in -50.0f64..150.0, a in 0.0f64..5000.0, b in 0.0f64..5000.0) {
        let m = LinearModel { slope, intercept, r_squared: 1.0, points: vec![] };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(m.predict(lo) <= m.predict(hi));
        prop_assert!((0.0..=100.0).contains(&m.predict(hi)));
    }

    #[test]
    fn collinear_points_recovered(slope in -5.0f64..5.0, intercept in -100.0f64..100.0, xs in prop::collection::btree_set(0i32..2000, 2..20)) {
        let pts: Vec<(f64, f64)> = xs.iter().map(|x| (*x as f64, slope * *x as f64 + intercept)).collect();
        let m = fit_linear(&pts).unwrap();
        prop_assert!((m.slope - slope).abs() <= 1e-9 * slope.abs().max(1.0));
        prop_assert!((m.intercept - intercept).abs() <= 1e-9 * intercept.abs().max(1.0) * 100.0);
        prop_assert!((0.0..=1.0).contains(&m.r_squared));
    }

    #[test]
    fn split_preserves_count(days in prop::collection::vec(0i64..120, 0..60), c1 in 0i64..120, gap in 0i64..60, two: bool) {
        let base = NaiveDate::from_ymd_opt(2009, 6, 1).unwrap();
        let resources: Vec<DatedResource> = days
            .iter()
            .enumerate()
            .map(|(i, d)| DatedResource { uri: format!("u{i}"), shared_on: base + Duration::days(*d) })
            .collect();
        let mut centroids = vec![base + Duration::days(c1)];
        if two {
            centroids.push(base + Duration::days(c1 + gap + 1));
        }
        let split = split_by_centroid("e", &resources, &centroids);
        prop_assert_eq!(split.assignment.len(), resources.len());
        prop_assert_eq!(split.sizes().iter().sum::<usize>(), resources.len());
        for (r, a) in resources.iter().zip(&split.assignment) {
            let mine = (r.shared_on - split.centroids[*a]).num_days().abs();
            for c in &split.centroids {
                prop_assert!(mine <= (r.shared_on - *c).num_days().abs());
            }
        }
    }
}

//! Rank the hashtags that co-occur with a seed tag, grow a selection set and
//! filter the corpus down to matching posts that carry a link.

use chrono::{TimeZone, Utc};
use linkrot::ingest::{Corpus, Post};
use linkrot::tagstats::{expand_tags, filter_by_selection_set, grow_selection_set, SelectionSet, TagFrequencyTable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let at = Utc.with_ymd_and_hms(2009, 9, 11, 12, 0, 0).unwrap();
    let rows: [(&str, usize); 5] = [
        ("#h1n1 #swine #swineflu #news http://a.example/1", 40),
        ("#h1n1 #swine #flu http://a.example/2", 20),
        ("#h1n1 #flu #health", 25),
        ("#swineflu #pandemic http://a.example/3", 50),
        ("#h1n1 #swineflu #pandemic http://a.example/4", 10),
    ];
    let posts = rows
        .iter()
        .flat_map(|(text, n)| std::iter::repeat_with(move || Post::from_text(at, "u", text)).take(*n))
        .collect();
    let corpus = Corpus::new("h1n1", posts);

    let table = TagFrequencyTable::from_corpus(&corpus);
    let stoplist = ["news".to_string()].into_iter().collect();
    println!("companions of #h1n1:");
    for (tag, n) in expand_tags(&table, "h1n1", &stoplist, 5)? {
        println!("  {tag:<10} {n}");
    }

    let growth = grow_selection_set(&corpus, SelectionSet::new("h1n1", stoplist), 3)?;
    println!("selection {:?}, matches after each step {:?}", growth.selection.tags(), growth.matched);
    let filtered = filter_by_selection_set(&corpus, &growth.selection, true);
    println!("{} of {} posts kept", filtered.posts.len(), corpus.posts.len());
    Ok(())
}

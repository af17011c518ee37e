//! Record the responses another transport gives and replay them later from
//! the saved JSON, which is how fixtures for offline runs are made.
//!
//! The "upstream" here is a closure; with `--mode record` the CLI wraps the
//! real HTTP client the same way.

use linkrot::transport::{FnTransport, RecordingTransport, ReplayStore, Request, Response, Transport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let upstream = FnTransport(|req: &Request| {
        Ok(match req.url.as_str() {
            "http://short.example/a" => Response::new(301).with_header("Location", "http://site.example/a"),
            _ => Response::new(200).with_body(format!("page at {}", req.url)),
        })
    });
    let recorder = RecordingTransport::new(upstream);
    for url in ["http://short.example/a", "http://site.example/a"] {
        let resp = recorder.send(&Request::get(url))?;
        println!("live   {url} -> {}", resp.status);
    }

    let saved = recorder.snapshot().to_json();
    let replay = ReplayStore::from_json(&saved)?;
    for url in ["http://short.example/a", "http://site.example/a", "http://unseen.example/"] {
        match replay.send(&Request::get(url)) {
            Ok(resp) => println!("replay {url} -> {}", resp.status),
            Err(e) => println!("replay {url} -> {e}"),
        }
    }
    Ok(())
}

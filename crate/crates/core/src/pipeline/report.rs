use std::fmt::Write;

use crate::analysis::{age_days, fmt_pct, EventStats, LinearModel};

use super::Analysis;

/// Markdown summary of an analysis. Output depends only on `analysis`.
pub fn render_report(analysis: &Analysis) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "# Link rot and archive coverage\n");
    let _ = writeln!(w, "Audit date: {}\n", analysis.audit_date);

    let all: usize = analysis.events.iter().map(|e| e.all).sum();
    let unique: usize = analysis.events.iter().map(|e| e.unique).sum();
    let _ = writeln!(w, "Events: {}. All resources: {all}. Unique resources: {unique}.\n", analysis.events.len());

    let _ = writeln!(w, "## Events\n");
    for e in &analysis.events {
        event_block(w, e);
    }

    let _ = writeln!(w, "## Centroid splits\n");
    let rows: Vec<_> = analysis
        .splits
        .iter()
        .flat_map(|s| s.centroids.iter().zip(&s.stats).map(move |(c, st)| (s, c, st)))
        .collect();
    if rows.is_empty() {
        let _ = writeln!(w, "No centroids.\n");
    } else {
        let _ = writeln!(w, "| Event | Centroid | Age (days) | Unique | Missing | Archived |");
        let _ = writeln!(w, "|---|---|---:|---:|---:|---:|");
        for (split, centroid, st) in rows {
            let _ = writeln!(
                w,
                "| {} | {} | {} | {} | {}% | {}% |",
                split.event,
                centroid,
                age_days(*centroid, analysis.audit_date),
                st.unique,
                fmt_pct(st.missing_percent()),
                fmt_pct(st.archived_percent()),
            );
        }
        let _ = writeln!(w);
    }

    let _ = writeln!(w, "## Model\n");
    let m = &analysis.model;
    model_line(w, "Missing", m.missing.as_ref());
    model_line(w, "Archived", m.archived.as_ref());
    match m.predicted_loss_365 {
        Some(p) => {
            let _ = writeln!(w, "\nPredicted loss at 365 days: {}%", fmt_pct(p));
            let _ = writeln!(w, "(≈{}% lost after one year)", p.floor() as i64);
        }
        None => {
            let _ = writeln!(w, "\nNo model fitted: fewer than two centroid splits with distinct ages.");
        }
    }
    out
}

fn model_line(w: &mut String, name: &str, model: Option<&LinearModel>) {
    match model {
        Some(m) => {
            let _ = writeln!(
                w,
                "- {name} % = {:.4} × age in days + {:.2} (r² = {:.3}, {} points)",
                m.slope,
                m.intercept,
                m.r_squared,
                m.points.len()
            );
        }
        None => {
            let _ = writeln!(w, "- {name} %: no model fitted");
        }
    }
}

fn event_block(w: &mut String, e: &EventStats) {
    let _ = writeln!(w, "### {}\n", e.event);
    if e.unique == 0 {
        let _ = writeln!(w, "0 resources.\n");
        return;
    }
    let c = &e.cells;
    let cell = |n: usize| format!("{n} ({}%)", fmt_pct(e.pct(n)));
    let _ = writeln!(w, "All resources: {}. Unique: {} ({}%).\n", e.all, e.unique, fmt_pct(e.unique_percent()));
    let _ = writeln!(w, "| | Available | Missing | Total |");
    let _ = writeln!(w, "|---|---:|---:|---:|");
    let _ = writeln!(
        w,
        "| Archived | {} | {} | {} |",
        cell(c.archived_available),
        cell(c.archived_missing),
        cell(c.archived())
    );
    let _ = writeln!(
        w,
        "| Not archived | {} | {} | {} |",
        cell(c.unarchived_available),
        cell(c.unarchived_missing),
        cell(c.unarchived_available + c.unarchived_missing)
    );
    let _ = writeln!(
        w,
        "| Total | {} | {} | {} |\n",
        cell(c.available()),
        cell(c.missing()),
        e.unique
    );
}

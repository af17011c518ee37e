//! Fit the loss and archiving lines to per-split percentages and predict the
//! share of resources lost after one year.

use chrono::NaiveDate;
use linkrot::analysis::{age_days, fit_linear};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let audit = NaiveDate::from_ymd_opt(2012, 4, 1).unwrap();
    // centroid date, percent missing, percent archived
    let splits = [
        ("2009-06-25", 36.24, 39.45),
        ("2009-07-10", 31.62, 30.78),
        ("2009-06-13", 26.98, 43.08),
        ("2009-08-01", 24.47, 36.26),
        ("2009-09-11", 23.49, 41.65),
        ("2009-10-05", 25.64, 43.87),
        ("2009-10-09", 24.59, 47.87),
        ("2009-12-10", 26.15, 46.15),
        ("2011-02-11", 10.48, 20.18),
        ("2012-03-27", 7.04, 5.35),
    ];
    let mut missing = Vec::new();
    let mut archived = Vec::new();
    for (date, m, a) in splits {
        let age = age_days(date.parse()?, audit) as f64;
        missing.push((age, m));
        archived.push((age, a));
    }
    let loss = fit_linear(&missing)?;
    let kept = fit_linear(&archived)?;
    println!("missing  = {:.4} * age + {:.3}  (r2 {:.3})", loss.slope, loss.intercept, loss.r_squared);
    println!("archived = {:.4} * age + {:.3}  (r2 {:.3})", kept.slope, kept.intercept, kept.r_squared);
    println!("predicted loss after 365 days: {:.2}%", loss.predict(365.0));
    Ok(())
}

//! Plain-text tables for the terminal. Machine-readable output is the JSON
//! written with `--out`.

use std::fmt::Write;

use grex_core::dataset::{TaxonomyCounts, WordFrequency};
use grex_core::metrics::{DetReport, GregReport, SegReport};
use grex_rela::TrainTrace;

fn num(v: f64) -> String {
    format!("{v:.4}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), num)
}

/// Two aligned columns under a title.
pub fn key_values(title: &str, rows: &[(String, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = format!("{title}\n");
    for (k, v) in rows {
        let _ = writeln!(out, "  {k:<width$}  {v}");
    }
    out
}

pub fn seg_table(r: &SegReport) -> String {
    let mut rows = vec![
        ("samples".to_string(), format!("{} ({} no-target)", r.num_samples, r.num_no_target)),
        ("gIoU".to_string(), num(r.giou)),
        (
            "cIoU".to_string(),
            if r.ciou_degenerate { format!("{} (degenerate: zero union)", num(r.ciou)) } else { num(r.ciou) },
        ),
    ];
    rows.extend(r.pr_at.iter().map(|(k, v)| (format!("Pr@{k}"), num(*v))));
    rows.push(("N-acc".to_string(), opt(r.n_acc)));
    rows.push(("T-acc".to_string(), opt(r.t_acc)));
    key_values("GRES", &rows)
}

pub fn det_table(r: &DetReport) -> String {
    let mut rows = vec![
        ("samples".to_string(), format!("{} ({} no-target)", r.num_samples, r.num_no_target)),
        ("Pr@(F1=1, IoU>=0.5)".to_string(), num(r.pr_f1)),
        ("N-acc".to_string(), opt(r.n_acc)),
        ("T-acc".to_string(), opt(r.t_acc)),
    ];
    if let Some(ap) = &r.ap {
        rows.push(("AP".to_string(), num(ap.ap)));
    }
    key_values("GREC", &rows)
}

pub fn gen_table(r: &GregReport) -> String {
    let mut out = String::from("GREG\n  subset    count  METEOR  CIDEr\n");
    for (name, s) in [("single", &r.single_target), ("multi", &r.multi_target), ("overall", &r.overall)] {
        let _ = writeln!(out, "  {name:<8}  {:>5}  {:.4}  {:.4}", s.count, s.meteor, s.cider);
    }
    out
}

pub fn stats_table(counts: &TaxonomyCounts, words: &[WordFrequency]) -> String {
    let mut out = key_values(
        "samples",
        &[
            ("single-target".to_string(), counts.single_target.to_string()),
            ("multi-target".to_string(), counts.multi_target.to_string()),
            ("no-target".to_string(), counts.no_target.to_string()),
            ("total".to_string(), counts.total().to_string()),
        ],
    );
    out.push_str("top words\n");
    for w in words {
        let _ = writeln!(out, "  {:<12} {:>6}  {:.4}", w.word, w.count, w.frequency);
    }
    out
}

pub fn train_table(trace: &TrainTrace) -> String {
    let mut rows = vec![
        ("iterations".to_string(), trace.losses.len().to_string()),
        ("seconds".to_string(), format!("{:.1}", trace.seconds)),
    ];
    if let Some(l) = trace.losses.last() {
        rows.push(("final loss".to_string(), num(l.total)));
    }
    if let Some(e) = trace.last_eval() {
        rows.push(("train gIoU".to_string(), num(e.giou)));
        rows.push(("train Pr@F1".to_string(), num(e.pr_f1)));
        rows.push(("train N-acc".to_string(), opt(e.n_acc)));
        rows.push(("train T-acc".to_string(), opt(e.t_acc)));
    }
    key_values("training", &rows)
}

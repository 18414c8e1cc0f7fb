use std::path::Path;

use proptest::prelude::*;
use toneshift_core::corpus::{build_threads, read_corpus, Publication, PublicationKind};
use toneshift_core::threadsel::{select_all, RejectReason, DEFAULT_MAX_GAP_SECS};

fn toy() -> Vec<Publication> {
    read_corpus(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy_threads.jsonl")).unwrap()
}

#[test]
fn toy_example_selection() {
    let (segs, report) = select_all(&build_threads(toy()), DEFAULT_MAX_GAP_SECS);
    let decisions: Vec<_> = report.decisions.iter().map(|(t, d)| (t.as_str(), *d)).collect();
    assert_eq!(
        decisions,
        [
            ("T1", Ok(())),
            ("T2", Ok(())),
            ("T3", Err(RejectReason::CrossThreadOverlap)),
            ("T4", Err(RejectReason::GapExceeded)),
        ]
    );

    let t1 = &segs[0];
    let ids: Vec<_> = t1.messages.iter().map(|m| m.id.as_str()).collect();
    assert_eq!(ids, ["T1", "T1c1", "T1c2", "T1c3"]);
    assert_eq!(t1.target.id, "T1c4");
    assert!(!t1.cut_by_overlap);

    let t2 = &segs[1];
    let ids: Vec<_> = t2.messages.iter().map(|m| m.id.as_str()).collect();
    assert_eq!(ids, ["T2", "T2c1", "T2c2", "T2c3"]);
    assert_eq!(t2.target.id, "T2c4");
    assert!(t2.cut_by_overlap);
    for s in &segs {
        s.check(DEFAULT_MAX_GAP_SECS).unwrap();
    }
}

#[test]
fn thread_order_does_not_matter() {
    let mut pubs = toy();
    let reference = select_all(&build_threads(pubs.clone()), DEFAULT_MAX_GAP_SECS);
    pubs.reverse();
    assert_eq!(select_all(&build_threads(pubs), DEFAULT_MAX_GAP_SECS), reference);
}

/// Random small forums: few users, several threads, bursty timestamps.
fn corpus_strategy() -> impl Strategy<Value = Vec<Publication>> {
    let thread = (0u8..4, 0i64..200_000, prop::collection::vec((0u8..4, 1i64..60_000), 0..12));
    prop::collection::vec(thread, 1..8).prop_map(|threads| {
        let mut pubs = Vec::new();
        for (ti, (author, start, comments)) in threads.into_iter().enumerate() {
            let tid = format!("t{ti}");
            pubs.push(Publication {
                id: tid.clone(),
                parent_id: None,
                thread_id: tid.clone(),
                author: format!("u{author}"),
                created_utc: 1 + start,
                text: String::new(),
                subreddit: "s".into(),
                kind: PublicationKind::Post,
            });
            let mut t = 1 + start;
            for (ci, (a, dt)) in comments.into_iter().enumerate() {
                t += dt;
                pubs.push(Publication {
                    id: format!("{tid}c{ci:02}"),
                    parent_id: Some(tid.clone()),
                    thread_id: tid.clone(),
                    author: format!("u{a}"),
                    created_utc: t,
                    text: String::new(),
                    subreddit: "s".into(),
                    kind: PublicationKind::Comment,
                });
            }
        }
        pubs
    })
}

proptest! {
    #[test]
    fn segments_satisfy_invariants(pubs in corpus_strategy()) {
        let (segs, report) = select_all(&build_threads(pubs), DEFAULT_MAX_GAP_SECS);
        let rejected: usize = report.rejected.values().sum();
        prop_assert_eq!(report.segments + rejected, report.threads_considered);
        for s in &segs {
            prop_assert!(s.check(DEFAULT_MAX_GAP_SECS).is_ok(), "{:?}", s.check(DEFAULT_MAX_GAP_SECS));
        }
        // segments of one user never overlap in (time, id) order
        for a in &segs {
            for b in &segs {
                if a.segment_id < b.segment_id && a.author == b.author {
                    let span = |s: &toneshift_core::threadsel::ThreadSegment| {
                        ((s.messages[0].created_utc, s.messages[0].id.clone()), (s.target.created_utc, s.target.id.clone()))
                    };
                    let (a0, a1) = span(a);
                    let (b0, b1) = span(b);
                    prop_assert!(a1 < b0 || b1 < a0);
                }
            }
        }
    }
}

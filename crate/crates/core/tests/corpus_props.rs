use ceg_core::corpus::{CorpusError, DOCS_FILE, MANIFEST_FILE};
use ceg_core::{chunk_source, DocChunk, DocStore};
use proptest::prelude::*;

fn article() -> impl Strategy<Value = String> {
    let word = prop_oneof![
        "[a-zA-Z]{1,8}",
        "[a-zA-Z]{1,8}\\.",
        "[0-9]{1,3}(\\.[0-9])?",
        Just("Ünïcode".to_string()),
    ];
    let sep = prop_oneof![4 => Just(" ".to_string()), 1 => Just("\n".to_string()), 1 => Just("  \t".to_string())];
    prop::collection::vec((word, sep), 0..300)
        .prop_map(|parts| parts.into_iter().map(|(w, s)| w + &s).collect::<String>())
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

// The greedy packer's unit boundaries, recomputed from whitespace splitting.
fn unit_ends(text: &str) -> Vec<bool> {
    let toks: Vec<(usize, &str)> = text
        .split_whitespace()
        .map(|w| (w.as_ptr() as usize - text.as_ptr() as usize, w))
        .collect();
    toks.iter()
        .enumerate()
        .map(|(i, &(start, w))| {
            let end = start + w.len();
            w.ends_with('.') || toks.get(i + 1).is_none_or(|&(next, _)| text[end..next].contains('\n'))
        })
        .collect()
}

proptest! {
    #[test]
    fn chunks_reconstruct_the_article(text in article(), budget in 1usize..40) {
        let chunks = chunk_source(&text, "T", budget).unwrap();
        let joined: Vec<&str> = chunks.iter().flat_map(|c| words(&c.text)).collect();
        prop_assert_eq!(joined, words(&text));
        let chars: Vec<char> = text.chars().collect();
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.id, i as u64);
            prop_assert_eq!(c.word_count as usize, words(&c.text).len());
            let start = c.source_offset as usize;
            let slice: String = chars[start..start + c.text.chars().count()].iter().collect();
            prop_assert_eq!(&slice, &c.text);
        }
    }

    #[test]
    fn chunks_respect_budget_and_boundaries(text in article(), budget in 1usize..40) {
        let chunks = chunk_source(&text, "T", budget).unwrap();
        let ends = unit_ends(&text);
        let mut pos = 0;
        let mut units_per_chunk = Vec::new();
        for c in &chunks {
            let n = c.word_count as usize;
            // Chunks end exactly on a unit boundary.
            prop_assert!(ends[pos + n - 1]);
            let inner_units = ends[pos..pos + n].iter().filter(|&&e| e).count();
            if n > budget {
                prop_assert_eq!(inner_units, 1, "only a single oversized unit may exceed the budget");
            }
            units_per_chunk.push((pos, n));
            pos += n;
        }
        // Greedy: the next chunk's first unit would not have fit.
        for w in units_per_chunk.windows(2) {
            let (next_start, _) = w[1];
            let first_unit_len = ends[next_start..].iter().position(|&e| e).unwrap() + 1;
            prop_assert!(w[0].1 + first_unit_len > budget);
        }
    }

    #[test]
    fn chunking_is_deterministic(text in article()) {
        prop_assert_eq!(chunk_source(&text, "T", 100).unwrap(), chunk_source(&text, "T", 100).unwrap());
    }
}

#[test]
fn zero_budget_is_rejected() {
    assert!(matches!(chunk_source("a.", "T", 0), Err(CorpusError::InvalidBudget(0))));
}

fn synthetic_articles(n: usize) -> Vec<(String, String)> {
    (0..n)
        .map(|i| {
            let body = (0..(i % 7 + 1)).map(|s| format!("Sentence {s} of article {i} mentions item{}.", i * 31 + s)).collect::<Vec<_>>();
            (body.join(" "), format!("Article {i}"))
        })
        .collect()
}

#[test]
fn store_round_trips_a_thousand_chunks() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus");
    let mut store = DocStore::create(&path, 12, "synthetic").unwrap();
    let mut arts = synthetic_articles(400).into_iter();
    while store.len() < 1000 {
        let (body, title) = arts.next().unwrap();
        store.ingest(&body, &title).unwrap();
    }
    let reopened = DocStore::open(&path).unwrap();
    assert_eq!(reopened.chunks(), store.chunks());
    assert_eq!(reopened.manifest(), store.manifest());
    assert_eq!(reopened.manifest().chunk_count as usize, store.len());
    assert_eq!(reopened.manifest().format_version, 1);
    for id in [0u64, 1, 499, store.len() as u64 - 1] {
        assert_eq!(reopened.get_chunk(id).unwrap().id, id);
    }
    assert!(matches!(reopened.get_chunk(store.len() as u64), Err(CorpusError::NotFound { .. })));
}

#[test]
fn rebuild_is_byte_identical() {
    let build = |dir: &std::path::Path| {
        let mut store = DocStore::create(dir, 20, "synthetic").unwrap();
        for (body, title) in synthetic_articles(30) {
            store.ingest(&body, &title).unwrap();
        }
        std::fs::read(dir.join(DOCS_FILE)).unwrap()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(build(a.path()), build(b.path()));
    assert!(a.path().join(MANIFEST_FILE).exists());
}

#[test]
fn put_chunks_rejects_bad_ids_and_text() {
    let mut store = DocStore::in_memory(100, "t");
    let chunk = |id, text: &str| DocChunk { id, text: text.into(), source_title: "T".into(), source_offset: 0, word_count: 1 };
    assert!(matches!(store.put_chunks(vec![chunk(1, "x")]), Err(CorpusError::Integrity(_))));
    assert!(matches!(store.put_chunks(vec![chunk(0, " x")]), Err(CorpusError::Integrity(_))));
    assert!(matches!(store.put_chunks(vec![chunk(0, "")]), Err(CorpusError::Integrity(_))));
    store.put_chunks(vec![chunk(0, "x")]).unwrap();
    assert!(matches!(store.put_chunks(vec![chunk(0, "y")]), Err(CorpusError::Integrity(_))));
    assert_eq!(store.len(), 1);
}

#[test]
fn open_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = DocStore::create(dir.path(), 100, "t").unwrap();
    store.ingest("One. Two.", "T").unwrap();
    store.ingest("Three.", "U").unwrap();
    let docs = dir.path().join(DOCS_FILE);
    let body = std::fs::read_to_string(&docs).unwrap();
    let first_line_dropped: String = body.lines().skip(1).map(|l| format!("{l}\n")).collect();
    std::fs::write(&docs, first_line_dropped).unwrap();
    assert!(DocStore::open(dir.path()).is_err());
    std::fs::write(&docs, "not json\n").unwrap();
    assert!(matches!(DocStore::open(dir.path()), Err(CorpusError::Json { line: 1, .. })));
}

mod common;

use std::io::Write;

use proptest::prelude::*;

use saros::corpus::{
    chronological_split, load_interactions, read_records, stream_blocks, Corpus, InputFormat,
    Label, RawRecord, SplitSpec,
};
use saros::Error;

use common::{interaction, reference_blocks};

const FIXTURE: &str = "\
u2\ti9\t50\t1
u1\ti3\t20\t-1
u1\ti3\t20\t-1
u2\ti4\t10\t-1
u1\ti7\t5\t1
u3\ti3\t10\t1
u2\ti4\t10\t1
u1\ti3\t20\t1
u3\ti1\t10\t-1
u2\ti9\t50\t1
";

/// Tab-split rows; users ordered by earliest timestamp then first row;
/// rows within a user ordered by timestamp then file position.
fn reference_parse(text: &str) -> Vec<(String, String, i64, bool)> {
    let rows: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n, l.split('\t').collect()))
        .collect();
    let mut users: Vec<(&str, i64, usize)> = Vec::new();
    for (n, f) in &rows {
        let ts: i64 = f[2].parse().unwrap();
        match users.iter_mut().find(|u| u.0 == f[0]) {
            Some(u) => u.1 = u.1.min(ts),
            None => users.push((f[0], ts, *n)),
        }
    }
    users.sort_by_key(|u| (u.1, u.2));
    let mut out = Vec::new();
    for (user, _, _) in users {
        let mut mine: Vec<&(usize, Vec<&str>)> = rows.iter().filter(|r| r.1[0] == user).collect();
        mine.sort_by_key(|r| (r.1[2].parse::<i64>().unwrap(), r.0));
        for (_, f) in mine {
            out.push((f[0].to_string(), f[1].to_string(), f[2].parse().unwrap(), f[3] == "1"));
        }
    }
    out
}

#[test]
fn loader_matches_reference_parser_with_duplicates() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(FIXTURE.as_bytes()).unwrap();
    let corpus = load_interactions(file.path(), &InputFormat::default()).unwrap();
    let got: Vec<(String, String, i64, bool)> = corpus
        .interactions
        .iter()
        .map(|x| {
            (
                corpus.users.raw(x.user).unwrap().to_string(),
                corpus.items.raw(x.item).unwrap().to_string(),
                x.timestamp,
                x.label.is_positive(),
            )
        })
        .collect();
    assert_eq!(got.len(), 10);
    assert_eq!(got, reference_parse(FIXTURE));
    assert_eq!(corpus.n_users(), 3);
    assert_eq!(corpus.n_items(), 5);
}

#[test]
fn loader_error_paths() {
    let err = read_records("u\ti\t1\t1\nu\ti\tnoon\t1\n".as_bytes(), &InputFormat::default())
        .unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    assert!(err.to_string().contains("line 2"));

    let empty = tempfile::NamedTempFile::new().unwrap();
    assert!(matches!(
        load_interactions(empty.path(), &InputFormat::default()),
        Err(Error::EmptyCorpus(_))
    ));
    assert!(matches!(
        load_interactions(std::path::Path::new("/nonexistent/x.tsv"), &InputFormat::default()),
        Err(Error::File { .. })
    ));
}

fn corpus_from(streams: &[Vec<(u8, bool)>]) -> Corpus {
    let mut records = Vec::new();
    for (u, s) in streams.iter().enumerate() {
        for (t, &(item, pos)) in s.iter().enumerate() {
            records.push(RawRecord {
                user: format!("u{u}"),
                item: format!("i{item}"),
                timestamp: (u * 1000 + t) as i64,
                label: if pos { Label::Positive } else { Label::Negative },
            });
        }
    }
    Corpus::from_records(records).unwrap()
}

fn streams() -> impl Strategy<Value = Vec<Vec<(u8, bool)>>> {
    prop::collection::vec(prop::collection::vec((0u8..8, any::<bool>()), 1..25), 1..6)
}

proptest! {
    #[test]
    fn blocks_follow_the_emission_rule(stream in prop::collection::vec((0u32..6, any::<bool>()), 0..40)) {
        let xs: Vec<_> = stream
            .iter()
            .enumerate()
            .map(|(t, &(i, p))| interaction(0, i, t as i64, p))
            .collect();
        let blocks: Vec<_> = stream_blocks(&xs).collect();
        let reference = reference_blocks(&stream);
        prop_assert_eq!(blocks.len(), reference.len());
        for (t, (b, (neg, pos))) in blocks.iter().zip(&reference).enumerate() {
            prop_assert_eq!(b.index, t);
            prop_assert_eq!(&b.negatives, neg);
            prop_assert_eq!(&b.positives, pos);
            prop_assert!(!b.negatives.is_empty() && !b.positives.is_empty());
            prop_assert!(b.negatives.iter().all(|i| !b.positives.contains(i)));
        }

        let n_pos = stream.iter().filter(|x| x.1).count();
        let n_neg = stream.len() - n_pos;
        prop_assert!(blocks.len() <= n_pos.min(n_neg));

        // concatenated sides are subsequences of the stream's label-filtered items
        for side in [true, false] {
            let concat: Vec<u32> = blocks
                .iter()
                .flat_map(|b| if side { b.positives.clone() } else { b.negatives.clone() })
                .collect();
            let mut source = stream.iter().filter(|x| x.1 == side).map(|x| x.0);
            prop_assert!(concat.iter().all(|c| source.any(|s| s == *c)));
        }
    }

    #[test]
    fn split_counts_match_integer_ceiling(data in streams(), pct in 1u32..100) {
        let corpus = corpus_from(&data);
        let split = chronological_split(&corpus, SplitSpec::new(pct as f64 / 100.0).unwrap()).unwrap();
        for (u, s) in data.iter().enumerate() {
            let n = s.len() as u32;
            let expected = (pct * n).div_ceil(100) as usize;
            let idx = corpus.users.index_of(&format!("u{u}")).unwrap() as usize;
            prop_assert_eq!(split.train[idx].len(), expected);
            prop_assert_eq!(split.test[idx].len(), s.len() - expected);
            prop_assert!(split.test[idx].is_empty() || !split.train[idx].is_empty());
            let last_train = split.train[idx].last().map(|x| x.timestamp);
            let first_test = split.test[idx].first().map(|x| x.timestamp);
            if let (Some(a), Some(b)) = (last_train, first_test) {
                prop_assert!(a <= b);
            }
        }
    }

    #[test]
    fn split_is_deterministic_and_idempotent(data in streams(), f in 0.05f64..0.95) {
        let corpus = corpus_from(&data);
        let spec = SplitSpec::new(f).unwrap();
        let a = chronological_split(&corpus, spec).unwrap();
        let b = chronological_split(&corpus, spec).unwrap();
        prop_assert_eq!(&a.train, &b.train);
        prop_assert_eq!(&a.test, &b.test);

        // rebuilding the corpus from its own split reproduces the split
        let mut records = Vec::new();
        for u in 0..a.n_users {
            for x in a.train[u].iter().chain(&a.test[u]) {
                records.push(RawRecord {
                    user: corpus.users.raw(x.user).unwrap().to_string(),
                    item: corpus.items.raw(x.item).unwrap().to_string(),
                    timestamp: x.timestamp,
                    label: x.label,
                });
            }
        }
        let rebuilt = Corpus::from_records(records).unwrap();
        let c = chronological_split(&rebuilt, spec).unwrap();
        prop_assert_eq!(&a.train, &c.train);
        prop_assert_eq!(&a.test, &c.test);
    }
}

#[test]
fn corpus_writer_round_trips() {
    let corpus = corpus_from(&[vec![(1, true), (2, false)], vec![(2, true)]]);
    let mut buf = Vec::new();
    corpus.write_tsv(&mut buf).unwrap();
    let back = Corpus::from_records(read_records(buf.as_slice(), &InputFormat::default()).unwrap())
        .unwrap();
    assert_eq!(back.interactions, corpus.interactions);
}

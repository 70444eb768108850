use trendweave_core::analytics::embed_model;
use trendweave_core::corpus::{self, normalize, normalize_batch, Document, NormalizationConfig, SlicedCorpus, Vocabulary};
use trendweave_core::dtm::{self, DtmConfig};
use trendweave_core::incremental::{sequential_update, UpdateBatch};
use trendweave_core::sentiment::{aggregate, score_records, Lexicon};
use trendweave_core::synthetic::{generate, term_name, SyntheticSpec};

fn small() -> trendweave_core::synthetic::Synthetic {
    generate(&SyntheticSpec {
        num_slices: 3,
        docs_per_slice: 30,
        num_terms: 150,
        num_topics: 3,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn head(c: &SlicedCorpus, t: usize) -> SlicedCorpus {
    SlicedCorpus {
        documents: c.documents[..c.slices[t].start].to_vec(),
        slices: c.slices[..t].to_vec(),
        granularity: c.granularity,
    }
}

#[test]
fn corpus_and_model_files_round_trip() {
    let syn = small();
    let vocab = Vocabulary::from_parts(syn.terms.clone(), vec![1; syn.terms.len()]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus::export(&syn.corpus, &vocab, dir.path()).unwrap();
    let (back, v2) = corpus::import(dir.path()).unwrap();
    assert_eq!(back, syn.corpus);
    assert_eq!(v2.terms(), vocab.terms());

    let (model, report) = dtm::fit(&syn.corpus, 150, &DtmConfig::new(3)).unwrap();
    assert_eq!(report.bounds.len(), report.iterations);
    let path = dir.path().join("model.bin");
    dtm::write_model(&model, &path).unwrap();
    let read = dtm::read_model(&path).unwrap();
    assert_eq!(read, model);
    assert_eq!(dtm::serialize(&read), dtm::serialize(&model));

    let emb = embed_model(&model).unwrap();
    assert_eq!(emb.len(), 3);
    assert!(emb.iter().all(|e| e.topics.len() == 3));
}

#[test]
fn update_with_new_words_keeps_old_columns() {
    let syn = small();
    let base = head(&syn.corpus, 2);
    let cfg = DtmConfig::new(3);
    let (model, _) = dtm::fit(&base, 150, &cfg).unwrap();

    // The last slice plus two words never seen before.
    let mut docs: Vec<Document> = syn.corpus.slice_docs(2).to_vec();
    for d in docs.iter_mut().take(5) {
        d.counts.push((150, 2));
        d.counts.push((151, 1));
    }
    let batch = UpdateBatch {
        documents: docs,
        new_terms: 2,
    };
    let up = sequential_update(&model, &base, &batch, &cfg, None).unwrap();
    assert_eq!(up.model.num_terms, 152);
    assert_eq!(up.report.new_terms, 2);
    let s_old = &model.slices[0];
    let s_new = &up.model.slices[0];
    for k in 0..3 {
        for w in 0..150 {
            assert_eq!(s_new.obs[k * 152 + w].to_bits(), s_old.obs[k * 150 + w].to_bits());
            assert_eq!(s_new.mean[k * 152 + w].to_bits(), s_old.mean[k * 150 + w].to_bits());
        }
        // Both new words enter the old slice with one shared tail value.
        assert_eq!(s_new.mean[k * 152 + 150], up.report.long_tail.beta);
        assert_eq!(s_new.mean[k * 152 + 151], up.report.long_tail.beta);
    }
    assert!(up.model.slices.iter().all(|s| s.num_docs() == 30));
}

#[test]
fn text_pipeline_from_records() {
    let syn = small();
    let cfg = NormalizationConfig {
        min_frequency: 1,
        ..NormalizationConfig::default()
    };
    let (first, rest) = syn.records.split_at(60);
    let (mut vocab, docs) = normalize(first, &cfg).unwrap();
    let sliced = corpus::slice(&docs, syn.corpus.granularity).unwrap();
    assert_eq!(sliced.num_slices(), 2);
    assert!(vocab.id(&term_name(0)).is_some());

    let before = vocab.len();
    let (batch_docs, new_ids) = normalize_batch(rest, &cfg, &mut vocab).unwrap();
    assert_eq!(batch_docs.len(), 30);
    assert_eq!(vocab.len(), before + new_ids.len());

    let (model, _) = dtm::fit(&sliced, before, &DtmConfig::new(3)).unwrap();
    let sentences = score_records(first, &Lexicon::bundled());
    let report = aggregate(&model, &sliced, sentences).unwrap();
    assert_eq!(report.doc_ids.len(), 60);
    assert!(report.overall_topics.iter().all(|t| t.on_simplex(1e-9)));
}

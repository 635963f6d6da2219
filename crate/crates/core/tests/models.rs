use egsql::decoder::{eg_beam_decode, EgConfig, Scorer, SketchScorer};
use egsql::eval::Model;
use egsql::fixtures::{haugar_example, matches_table};
use egsql::scorers::{
    extract_templates, template_candidates, FineScorer, Hyper, SketchScorerModel, Template, TemplateScorerModel,
};
use egsql::sql::{canonical_equal, AggregateFn, Comparator, Condition, Query, Sketch};
use egsql::synth::{generate, SynthConfig};
use egsql::table::{Cell, Example, TableCatalog};

fn clean_corpus(n: usize, seed: u64) -> egsql::synth::SynthCorpus {
    generate(&SynthConfig {
        num_examples: n,
        fault_rate: 0.0,
        seed,
        ..SynthConfig::default()
    })
}

fn ex(id: &str, question: &str, gold: Query) -> Example {
    Example {
        id: id.into(),
        question: question.split_whitespace().map(String::from).collect(),
        table_id: "matches".into(),
        gold: Some(gold),
    }
}

/// Questions over the match table that share structure with the
/// "how many games against Haugar" question without containing it.
fn match_training() -> Vec<Example> {
    let opp = |v: &str| vec![Condition::new(0, Comparator::Eq, v)];
    let res = |v: &str| vec![Condition::new(1, Comparator::Eq, v)];
    vec![
        ex("m1", "how many games against Rosenborg", Query::new(AggregateFn::Count, 0, opp("Rosenborg"))),
        ex("m2", "how many games against Brann were played", Query::new(AggregateFn::Count, 0, opp("Brann"))),
        ex("m3", "what was the result against Brann", Query::new(AggregateFn::None, 1, opp("Brann"))),
        ex("m4", "what was the result against Rosenborg", Query::new(AggregateFn::None, 1, opp("Rosenborg"))),
        ex("m5", "which opponent had result 3:0", Query::new(AggregateFn::None, 0, res("3:0"))),
        ex("m6", "how many games ended 2:2", Query::new(AggregateFn::Count, 0, res("2:2"))),
        ex("m7", "total points against Brann", Query::new(AggregateFn::Sum, 2, opp("Brann"))),
        ex(
            "m8",
            "how many games had points more than 0",
            Query::new(AggregateFn::Count, 0, vec![Condition::new(2, Comparator::Gt, "0")]),
        ),
        ex("m9", "what is the highest points", Query::new(AggregateFn::Max, 2, vec![])),
        ex("m10", "how many games against Brann in the cup", Query::new(AggregateFn::Count, 0, opp("Brann"))),
        ex(
            "m11",
            "what was the result against Rosenborg in the league",
            Query::new(AggregateFn::None, 1, opp("Rosenborg")),
        ),
    ]
}

fn match_catalog() -> TableCatalog {
    [matches_table()].into_iter().collect()
}

#[test]
fn template_classifier_fits_its_training_set() {
    let corpus = clean_corpus(50, 5);
    let hyper = Hyper {
        epochs: 20,
        ..Hyper::default()
    };
    let model = TemplateScorerModel::train(&corpus.examples, &corpus.catalog(), &hyper).unwrap();
    let catalog = corpus.catalog();
    let hits = corpus
        .examples
        .iter()
        .filter(|e| {
            let t = catalog.table(&e.table_id).unwrap();
            model.rank_templates(e, t)[0].0 == Template::of(e.gold.as_ref().unwrap())
        })
        .count();
    let acc = hits as f64 / corpus.examples.len() as f64;
    assert!(acc >= 0.9, "template accuracy {acc}");
}

#[test]
fn single_template_is_certain() {
    let corpus = clean_corpus(60, 9);
    let one: Vec<Example> = corpus
        .examples
        .iter()
        .filter(|e| e.gold.as_ref().unwrap().conds.len() == 1 && e.gold.as_ref().unwrap().conds[0].op == Comparator::Eq)
        .cloned()
        .collect();
    assert!(one.len() >= 5);
    let model = TemplateScorerModel::train(&one, &corpus.catalog(), &Hyper::default()).unwrap();
    let catalog = corpus.catalog();
    for e in &one {
        let top = &model.rank_templates(e, catalog.table(&e.table_id).unwrap())[0];
        assert!(top.1.exp() >= 0.99);
    }
}

#[test]
fn zero_learning_rate_keeps_initial_model() {
    let corpus = clean_corpus(30, 2);
    let hyper = Hyper {
        learning_rate: 0.0,
        ..Hyper::default()
    };
    let model = TemplateScorerModel::train(&corpus.examples, &corpus.catalog(), &hyper).unwrap();
    let init = TemplateScorerModel::untrained(extract_templates(&corpus.examples).unwrap(), hyper);
    assert_eq!(model, init);
}

#[test]
fn haugar_gold_is_among_top_five_candidates() {
    let model = TemplateScorerModel::train(&match_training(), &match_catalog(), &Hyper::default()).unwrap();
    let (e, t) = (haugar_example(), matches_table());
    let cands = template_candidates(&model, &e, &t, 5).unwrap();
    assert!(cands.len() <= 5);
    assert!(cands.windows(2).all(|w| w[0].1 >= w[1].1));
    let gold = e.gold.as_ref().unwrap();
    assert!(cands.iter().any(|(q, _)| canonical_equal(q, gold, &t)), "{cands:?}");

}

#[test]
fn one_candidate_is_the_joint_argmax() {
    let train = match_training();
    let model = TemplateScorerModel::train(&train, &match_catalog(), &Hyper::default()).unwrap();
    let t = matches_table();
    let mut viable = 0;
    for e in &train {
        // with k = 1 the best tagging may have too few spans for the best template
        let Ok(top) = template_candidates(&model, e, &t, 1) else {
            continue;
        };
        viable += 1;
        let five = template_candidates(&model, e, &t, 5).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0], five[0]);
    }
    assert!(viable >= train.len() / 2);
}

#[test]
fn gold_sketch_ranks_in_top_three() {
    let model = SketchScorerModel::train(&match_training(), &match_catalog(), &Hyper::default()).unwrap();
    let (e, t) = (haugar_example(), matches_table());
    let ranked = model.sketch_rank(&e, &t).unwrap();
    assert_eq!(ranked.len(), model.sketches.len());
    assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));
    let gold = e.gold.as_ref().unwrap().sketch();
    assert!(ranked.iter().take(3).any(|(s, _)| *s == gold));
}

fn question(s: &str) -> Example {
    Example {
        id: "q".into(),
        question: s.split_whitespace().map(String::from).collect(),
        table_id: "matches".into(),
        gold: None,
    }
}

#[test]
fn delta_weights_reproduce_a_chosen_filling() {
    let mut model = SketchScorerModel::untrained(vec![Sketch::new(vec![Comparator::Eq])], Hyper::default());
    for f in ["fagg=NONE|bias", "fsel|first", "fcol|rank", "fval|left", "fval|len=1", "fval|op==|prev=is"] {
        model.fine.set_weight(f, 30.0);
    }
    let (e, t) = (question("what is the opponent when result is 1:2"), matches_table());
    let fine = FineScorer::new(&model, &model.sketches[0]);
    let r = eg_beam_decode(&fine, &e, &t, &EgConfig::unguided(1)).unwrap();
    let want = Query::new(AggregateFn::None, 0, vec![Condition::new(1, Comparator::Eq, "1:2")]);
    assert_eq!(r.program, Some(want));
}

#[test]
fn guidance_replaces_an_incompatible_aggregate_column_pair() {
    let mut model = SketchScorerModel::untrained(vec![Sketch::default()], Hyper::default());
    model.fine.set_weight("fagg=SUM|bias", 20.0);
    model.fine.set_weight("fsel|first", 20.0);
    model.fine.set_weight("fsel|type=real|agg=SUM", 10.0);
    let (e, t) = (question("what is the opponent total points"), matches_table());
    let fine = FineScorer::new(&model, &model.sketches[0]);

    let off = eg_beam_decode(&fine, &e, &t, &EgConfig::unguided(5)).unwrap();
    assert_eq!(off.program, Some(Query::new(AggregateFn::Sum, 0, vec![])));
    let on = eg_beam_decode(&fine, &e, &t, &EgConfig::default()).unwrap();
    assert_eq!(on.program, Some(Query::new(AggregateFn::Sum, 2, vec![])));
    assert!(on.pruned_counts.type_error >= 1);
}

#[test]
fn fine_distributions_sum_to_one_along_walks() {
    let model = SketchScorerModel::train(&match_training(), &match_catalog(), &Hyper::default()).unwrap();
    let (e, t) = (haugar_example(), matches_table());
    for sketch in &model.sketches {
        let fine = FineScorer::new(&model, sketch);
        let mut state = fine.init(&e, &t).unwrap();
        for step in 0.. {
            let dist = fine.step(&state).unwrap();
            if dist.is_empty() {
                break;
            }
            let total: f64 = dist.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-6);
            // walk along a different action each step
            state = fine.advance(&state, &dist[step % dist.len()].0);
            assert!(step < 20);
        }
    }
}

#[test]
fn unguided_decodes_ignore_row_contents() {
    let corpus = clean_corpus(80, 4);
    let catalog = corpus.catalog();
    let (train, test) = corpus.examples.split_at(60);
    let models = [
        Model::Template(TemplateScorerModel::train(train, &catalog, &Hyper::default()).unwrap()),
        Model::Sketch(SketchScorerModel::train(train, &catalog, &Hyper::default()).unwrap()),
    ];
    let cfg = EgConfig::unguided(5);
    for model in &models {
        for e in test {
            let t = catalog.table(&e.table_id).unwrap();
            let blank: Vec<Vec<Cell>> = t
                .rows()
                .iter()
                .rev()
                .map(|r| {
                    r.iter()
                        .map(|c| match c {
                            Cell::Text(_) => Cell::Text("zzz".into()),
                            Cell::Real(_) => Cell::Real(-1.0),
                        })
                        .collect()
                })
                .collect();
            let mutated = t.with_rows(blank).unwrap();
            let a = model.decode(e, t, &cfg).unwrap();
            let b = model.decode(e, &mutated, &cfg).unwrap();
            assert_eq!(a.program, b.program);
        }
    }
}

#[test]
fn models_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let hyper = Hyper::default();
    let t = TemplateScorerModel::train(&match_training(), &match_catalog(), &hyper).unwrap();
    let s = SketchScorerModel::train(&match_training(), &match_catalog(), &hyper).unwrap();
    t.save(dir.path().join("t.json")).unwrap();
    s.save(dir.path().join("s.json")).unwrap();
    assert_eq!(TemplateScorerModel::load(dir.path().join("t.json")).unwrap(), t);
    assert_eq!(SketchScorerModel::load(dir.path().join("s.json")).unwrap(), s);
    // a file of the other kind is rejected
    assert_eq!(
        TemplateScorerModel::load(dir.path().join("s.json")).unwrap_err().exit_code(),
        2
    );
}

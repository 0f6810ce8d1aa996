use xrguard::features::{window_summaries, window_truth};
use xrguard::signal::{parse_session, replay, serialize_session, Environment, Pacing, TaggedFrame};
use xrguard::synth::{generate_corpus, generate_session, DatasetSpec, EnvironmentProfile};

#[test]
fn generated_sessions_round_trip_through_jsonl() {
    for env in Environment::ALL {
        let profile = EnvironmentProfile::builtin(env).with_duration(60.0);
        let s = generate_session(&profile, 60.0, 11).unwrap();
        let bytes = serialize_session(&s);
        let back = parse_session(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(serialize_session(&back), bytes);
        back.validate().unwrap();
    }
}

#[test]
fn replay_of_generated_session_is_ordered_and_complete() {
    let profile = EnvironmentProfile::interactive().with_duration(30.0);
    let s = generate_session(&profile, 30.0, 4).unwrap();
    let frames: Vec<TaggedFrame<'_>> = replay(&s, Pacing::AsFastAsPossible).collect();
    assert_eq!(frames.len(), s.frame_count());
    assert!(frames.windows(2).all(|w| w[0].timestamp() <= w[1].timestamp()));
    let gaze = frames.iter().filter(|f| matches!(f, TaggedFrame::Gaze(_))).count();
    assert_eq!(gaze, s.gaze_stream.len());
}

#[test]
fn corpus_session_bytes_are_reproducible() {
    let spec = DatasetSpec { n_samples: 40, ..DatasetSpec::with_seed(8) };
    let a = generate_corpus(&spec, &EnvironmentProfile::builtins()).unwrap();
    let b = generate_corpus(&spec, &EnvironmentProfile::builtins()).unwrap();
    for (x, y) in a.sessions().zip(b.sessions()) {
        assert_eq!(serialize_session(&x), serialize_session(&y));
    }
}

#[test]
fn summaries_line_up_with_labels() {
    let spec = DatasetSpec { n_samples: 40, ..DatasetSpec::with_seed(3) };
    let corpus = generate_corpus(&spec, &EnvironmentProfile::builtins()).unwrap();
    let mut windows = 0;
    for s in corpus.sessions() {
        let summaries = window_summaries(&s, s.window_seconds).unwrap();
        assert_eq!(summaries.len(), s.labels.len());
        windows += summaries.len();
    }
    assert_eq!(windows, 40);
    assert_eq!(corpus.window_truth().len(), 40);
    assert_eq!(window_truth(&[corpus.session(0)]).len(), corpus.session(0).labels.len());
}

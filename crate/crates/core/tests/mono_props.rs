use mtkit_core::mono::{MonoPipeline, MonoPipelineConfig, DEFAULT_PUNCTUATION};
use mtkit_core::script::{classify, ScriptClass};
use proptest::prelude::*;

fn allowed(c: char) -> bool {
    c == ' ' || c.is_ascii_alphanumeric() || classify(c) == ScriptClass::Cjk || DEFAULT_PUNCTUATION.contains(c)
}

/// Paragraphs built from runs of ideographs, Latin words, digits, assorted
/// punctuation (whitelisted or not) and whitespace.
fn paragraph() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        4 => "[\u{4e00}-\u{4e80}]{1,40}",
        2 => "[a-zA-Z]{1,8}",
        1 => "[0-9０-９]{1,4}",
        2 => "[。！？；!?;.，、：“”‘’（）《》—…·,:'\"()\\[\\]%-]",
        1 => "[©®€£¥@#&*+=~^|<>/\\\\_]",
        1 => "[ \t\u{3000}\u{a0}]{1,3}",
        1 => "[\u{0400}-\u{0450}\u{0600}-\u{0650}é]{1,5}",
    ];
    proptest::collection::vec(piece, 0..40).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn outputs_satisfy_filters(paras in proptest::collection::vec(paragraph(), 1..4)) {
        let p = MonoPipeline::new(MonoPipelineConfig::default()).unwrap();
        let input: Vec<(String, String)> = paras.iter().enumerate().map(|(i, t)| (t.clone(), format!("p{i}"))).collect();
        let (out, report) = p.process(&input);
        for r in &out {
            let n = r.text.chars().count();
            prop_assert!((50..=250).contains(&n), "length {n}: {:?}", r.text);
            prop_assert!(r.text.chars().any(|c| classify(c) == ScriptClass::Cjk));
            prop_assert!(r.text.chars().all(allowed), "{:?}", r.text);
        }
        prop_assert!(report.is_balanced());
        prop_assert_eq!(report.outputs(), out.len() as u64);

        // a second pass over the output keeps every sentence unchanged
        let again: Vec<(String, String)> = out.iter().map(|r| (r.text.clone(), r.source_id.clone())).collect();
        let (out2, report2) = p.process(&again);
        prop_assert_eq!(report2.total_rejected(), 0);
        prop_assert_eq!(out2, out);
    }
}

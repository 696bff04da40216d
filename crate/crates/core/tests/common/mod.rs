use bestworst::design::Protocol;
use bestworst::prompting::{render_adapted_multiemotion, render_prompt, PromptBundle, RatingScaleSpec};

const TEXTS: [&str; 4] = [
    "Just got the job offer I've been waiting months for!!",
    "Stuck in traffic again, third time this week.",
    "My dog keeps stealing socks and honestly it's fine.",
    "Can't believe the {emo} of this game, 100% worth it #winning",
];

pub fn texts(n: usize) -> Vec<(String, String)> {
    TEXTS[..n]
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("t{}", i + 1), t.to_string()))
        .collect()
}

pub fn dims() -> Vec<String> {
    ["anger", "fear", "joy", "sadness", "disgust", "surprise"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Every prompt cell and scale variant, named after its golden file.
pub fn cases() -> Vec<(String, PromptBundle)> {
    let mut out = Vec::new();
    for scale in RatingScaleSpec::all_variants() {
        out.push((
            format!("rs_{scale}"),
            render_prompt(Protocol::Rs, &texts(1), "joy", Some(scale)).unwrap(),
        ));
        out.push((
            format!("rs_t_{scale}"),
            render_prompt(Protocol::RsT, &texts(4), "joy", Some(scale)).unwrap(),
        ));
        out.push((
            format!("adapted_rs_t_{scale}"),
            render_adapted_multiemotion(&texts(4), &dims(), Some(scale), Protocol::RsT).unwrap(),
        ));
    }
    out.push(("pc".into(), render_prompt(Protocol::Pc, &texts(2), "joy", None).unwrap()));
    out.push(("bws".into(), render_prompt(Protocol::Bws, &texts(4), "joy", None).unwrap()));
    out.push((
        "adapted_bws".into(),
        render_adapted_multiemotion(&texts(4), &dims(), None, Protocol::Bws).unwrap(),
    ));
    out
}

#[allow(dead_code)]
pub fn golden_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use facepress::plugins::{
    embed_with_plugin, parse_store, score_with_plugin, store_to_string, ItemFailure, PluginError, PluginSource,
    ScorerPlugin,
};
use facepress_core::budget::CodecId;
use facepress_core::trials::{EmbeddingKey, EmbeddingStore, EmbeddingVariant};

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
    p
}

fn command(p: &Path) -> PluginSource {
    PluginSource::Command(vec![p.to_string_lossy().into_owned()])
}

fn paths(n: usize) -> Vec<PathBuf> {
    (0..n).map(|i| PathBuf::from(format!("/data/img{i}.png"))).collect()
}

#[test]
fn constant_scorer_scores_every_image() {
    let dir = tempfile::tempdir().unwrap();
    let s = script(dir.path(), "half.sh", r#"while read p; do printf '%s\t0.5\n' "$p"; done"#);
    let plugin = ScorerPlugin {
        name: "half".into(),
        source: command(&s),
        expected_input_size: None,
    };
    let out = score_with_plugin(&plugin, &paths(4)).unwrap();
    assert_eq!(out.results.len(), 4);
    assert!(out.results.iter().all(|(_, r)| *r == Ok(0.5)));
}

#[test]
fn omitted_path_is_a_per_image_failure() {
    let dir = tempfile::tempdir().unwrap();
    let s = script(
        dir.path(),
        "skip.sh",
        r#"while read p; do case "$p" in *img1.png) ;; *) printf '%s\t0.25\n' "$p";; esac; done"#,
    );
    let plugin = ScorerPlugin {
        name: "skip".into(),
        source: command(&s),
        expected_input_size: None,
    };
    let out = score_with_plugin(&plugin, &paths(3)).unwrap();
    assert_eq!(out.results[0].1, Ok(0.25));
    assert_eq!(out.results[1].1, Err(ItemFailure::Missing));
    assert_eq!(out.results[2].1, Ok(0.25));
}

#[test]
fn output_order_does_not_matter_and_bad_lines_fail_items() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scores.tsv");
    std::fs::write(
        &file,
        "/data/img2.png\t0.3\n/data/img0.png\tnot-a-number\n/data/img1.png\t0.1\n/data/img1.png\t0.2\n/other.png\t1\n",
    )
    .unwrap();
    let plugin = ScorerPlugin {
        name: "pre".into(),
        source: PluginSource::Precomputed(file),
        expected_input_size: None,
    };
    let out = score_with_plugin(&plugin, &paths(3)).unwrap();
    assert!(matches!(out.results[0].1, Err(ItemFailure::Malformed(_))));
    assert_eq!(out.results[1].1, Err(ItemFailure::Duplicate(2)));
    assert_eq!(out.results[2].1, Ok(0.3));
    assert_eq!(out.unexpected, vec!["/other.png\t1".to_string()]);
}

#[test]
fn precomputed_file_is_read_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scores.tsv");
    std::fs::write(&file, "/data/img0.png\t0.125\n/data/img1.png\t-3.5\n/data/img2.png\t42\n").unwrap();
    let plugin = ScorerPlugin {
        name: "pre".into(),
        source: PluginSource::Precomputed(file),
        expected_input_size: None,
    };
    let out = score_with_plugin(&plugin, &paths(3)).unwrap();
    let values: Vec<f64> = out.results.into_iter().map(|(_, r)| r.unwrap()).collect();
    assert_eq!(values, vec![0.125, -3.5, 42.0]);
}

#[test]
fn precomputed_relative_paths_resolve_against_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scores.tsv");
    std::fs::write(&file, "a.png\t0.75\n").unwrap();
    let plugin = ScorerPlugin {
        name: "pre".into(),
        source: PluginSource::Precomputed(file),
        expected_input_size: None,
    };
    let out = score_with_plugin(&plugin, &[dir.path().join("a.png")]).unwrap();
    assert_eq!(out.results[0].1, Ok(0.75));
}

#[test]
fn launch_and_exit_failures_are_errors() {
    let plugin = ScorerPlugin {
        name: "nope".into(),
        source: PluginSource::Command(vec!["/nonexistent/scorer".into()]),
        expected_input_size: None,
    };
    assert!(matches!(score_with_plugin(&plugin, &paths(1)), Err(PluginError::Launch { .. })));
    let dir = tempfile::tempdir().unwrap();
    let s = script(dir.path(), "fail.sh", "echo broken >&2; exit 3");
    let plugin = ScorerPlugin {
        name: "fail".into(),
        source: command(&s),
        expected_input_size: None,
    };
    let err = score_with_plugin(&plugin, &paths(1)).unwrap_err();
    assert!(matches!(err, PluginError::Exit { ref stderr, .. } if stderr == "broken"));
}

#[test]
fn embedder_vectors_with_wrong_dimension_fail() {
    let dir = tempfile::tempdir().unwrap();
    let s = script(
        dir.path(),
        "emb.sh",
        r#"while read p; do case "$p" in *img2.png) printf '%s\t1,2\n' "$p";; *) printf '%s\t1,0,0\n' "$p";; esac; done"#,
    );
    let out = embed_with_plugin("emb", &command(&s), &paths(3)).unwrap();
    assert_eq!(out.results[0].1, Ok(vec![1.0, 0.0, 0.0]));
    assert!(matches!(out.results[2].1, Err(ItemFailure::Malformed(_))));
}

#[test]
fn embedding_store_round_trips() {
    let mut store = EmbeddingStore::new();
    store.insert(EmbeddingKey::new("a", EmbeddingVariant::Lossless), vec![0.1, -2.0, 1e-300]);
    store.insert(
        EmbeddingKey::new(
            "a",
            EmbeddingVariant::Lossy {
                codec: CodecId::JpegXl,
                target_bytes: 2200,
            },
        ),
        vec![1.0 / 3.0, 0.0, 5.0],
    );
    let text = store_to_string(&store);
    assert!(text.contains("a\t-\tLOSSLESS\t0.1,-2,"));
    assert!(text.contains("a\tjpegxl\t2200\t"));
    assert_eq!(parse_store(&text, Path::new("s.tsv")).unwrap(), store);
    assert!(parse_store("a\tjpeg\t10\n", Path::new("s.tsv")).is_err());
    assert!(parse_store("a\tmp3\t10\t1,2\n", Path::new("s.tsv")).is_err());
}

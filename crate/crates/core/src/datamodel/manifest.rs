//! JSONL manifests. Feature payloads live in a `features.bin` sidecar next to
//! the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    read_features, write_features, Corpus, MomentExample, MomentSample, QAExample, QaSample,
    Sample, SyntheticGroundTruth, VideoRecord,
};
use crate::error::{Error, Result};

/// File names inside a data directory.
pub struct CorpusFiles;

impl CorpusFiles {
    pub const QA: &'static str = "qa.jsonl";
    pub const MOMENT: &'static str = "moment.jsonl";
    pub const TRUTH: &'static str = "truth.jsonl";
    pub const FEATURES: &'static str = "features.bin";
}

fn sidecar_for(manifest: &Path) -> PathBuf {
    manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(CorpusFiles::FEATURES)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    rows: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row)?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn attach<E>(
    examples: Vec<E>,
    videos: &BTreeMap<String, Arc<VideoRecord>>,
    ids: impl Fn(&E) -> (&str, &str),
) -> Result<Vec<Sample<E>>> {
    examples
        .into_iter()
        .map(|example| {
            let (example_id, video_id) = ids(&example);
            let video = videos.get(video_id).cloned().ok_or_else(|| {
                Error::validation(example_id, format!("video {video_id} not in feature sidecar"))
            })?;
            Ok(Sample { video, example })
        })
        .collect()
}

fn load_videos(manifest: &Path) -> Result<BTreeMap<String, Arc<VideoRecord>>> {
    Ok(read_features(&sidecar_for(manifest))?
        .into_iter()
        .map(|(id, v)| (id, Arc::new(v)))
        .collect())
}

pub fn load_qa_manifest(path: &Path) -> Result<Vec<QaSample>> {
    let examples: Vec<QAExample> = read_jsonl(path)?;
    for ex in &examples {
        ex.validate()?;
    }
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    let videos = load_videos(path)?;
    attach(examples, &videos, |e| (&e.example_id, &e.video_id))
}

pub fn load_moment_manifest(path: &Path) -> Result<Vec<MomentSample>> {
    let examples: Vec<MomentExample> = read_jsonl(path)?;
    for ex in &examples {
        ex.validate(f64::INFINITY)?;
    }
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    let videos = load_videos(path)?;
    let samples = attach(examples, &videos, |e| (&e.example_id, &e.video_id))?;
    for s in &samples {
        s.example.validate(s.video.duration_s())?;
    }
    Ok(samples)
}

pub fn load_truth(path: &Path) -> Result<Vec<SyntheticGroundTruth>> {
    read_jsonl(path)
}

/// Writes every non-empty part of the corpus into `dir`.
pub fn save_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let videos = corpus.videos();
    write_features(
        &dir.join(CorpusFiles::FEATURES),
        videos.values().map(|v| v.as_ref()),
    )?;
    write_jsonl(
        &dir.join(CorpusFiles::QA),
        corpus.qa.iter().map(|s| &s.example),
    )?;
    write_jsonl(
        &dir.join(CorpusFiles::MOMENT),
        corpus.moment.iter().map(|s| &s.example),
    )?;
    if !corpus.truth.is_empty() {
        write_jsonl(&dir.join(CorpusFiles::TRUTH), &corpus.truth)?;
    }
    Ok(())
}

/// Loads whichever manifests exist in `dir`; video records are shared
/// between the QA and moment splits.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let features = dir.join(CorpusFiles::FEATURES);
    let videos: BTreeMap<String, Arc<VideoRecord>> = read_features(&features)?
        .into_iter()
        .map(|(id, v)| (id, Arc::new(v)))
        .collect();
    let mut corpus = Corpus::default();
    let qa_path = dir.join(CorpusFiles::QA);
    if qa_path.exists() {
        let examples: Vec<QAExample> = read_jsonl(&qa_path)?;
        for ex in &examples {
            ex.validate()?;
        }
        corpus.qa = attach(examples, &videos, |e| (&e.example_id, &e.video_id))?;
    }
    let moment_path = dir.join(CorpusFiles::MOMENT);
    if moment_path.exists() {
        let examples: Vec<MomentExample> = read_jsonl(&moment_path)?;
        corpus.moment = attach(examples, &videos, |e| (&e.example_id, &e.video_id))?;
        for s in &corpus.moment {
            s.example.validate(s.video.duration_s())?;
        }
    }
    let truth_path = dir.join(CorpusFiles::TRUTH);
    if truth_path.exists() {
        corpus.truth = load_truth(&truth_path)?;
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Fps, MomentAnnotation};

    fn write_video(dir: &Path, id: &str, n_frames: usize) -> VideoRecord {
        let v = VideoRecord::new(id, Fps::new(1, 2).unwrap(), 2, vec![0.5; 2 * n_frames]).unwrap();
        write_features(&dir.join(CorpusFiles::FEATURES), [&v]).unwrap();
        v
    }

    fn qa_line(id: &str, answer: usize) -> String {
        format!(
            r#"{{"example_id":"{id}","video_id":"v","question":"what?","options":["a","b","c","d"],"answer_index":{answer}}}"#
        )
    }

    #[test]
    fn loads_qa_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        write_video(dir.path(), "v", 4);
        let path = dir.path().join("qa.jsonl");
        let lines = [qa_line("e2", 0), qa_line("e0", 3), qa_line("e1", 1)];
        fs::write(&path, lines.join("\n")).unwrap();
        let rows = load_qa_manifest(&path).unwrap();
        let ids: Vec<_> = rows.iter().map(|r| r.example.example_id.as_str()).collect();
        assert_eq!(ids, ["e2", "e0", "e1"]);
        assert_eq!(rows[0].video.n_frames(), 4);
    }

    #[test]
    fn qa_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_video(dir.path(), "v", 4);
        let path = dir.path().join("qa.jsonl");

        fs::write(&path, format!("{}\n{}\n", qa_line("ok", 0), qa_line("bad5", 5))).unwrap();
        let err = load_qa_manifest(&path).unwrap_err();
        assert!(matches!(&err, Error::Validation { id, .. } if id == "bad5"), "{err}");

        fs::write(&path, format!("{}\n{{not json\n", qa_line("ok", 0))).unwrap();
        let err = load_qa_manifest(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        fs::write(&path, "").unwrap();
        assert!(load_qa_manifest(&path).unwrap().is_empty());

        let lonely = tempfile::tempdir().unwrap();
        let path = lonely.path().join("qa.jsonl");
        fs::write(&path, qa_line("x", 0)).unwrap();
        assert!(matches!(load_qa_manifest(&path), Err(Error::Io { .. })));
    }

    #[test]
    fn moment_manifest_spans() {
        let dir = tempfile::tempdir().unwrap();
        write_video(dir.path(), "v", 30);
        let path = dir.path().join("moment.jsonl");
        fs::write(
            &path,
            concat!(
                r#"{"example_id":"m1","video_id":"v","query":"q","spans":[[4.0,10.0]]}"#,
                "\n",
                r#"{"example_id":"m2","video_id":"v","query":"q","spans":[[20.0,22.0],[2.0,6.0]]}"#,
                "\n"
            ),
        )
        .unwrap();
        let rows = load_moment_manifest(&path).unwrap();
        assert_eq!(rows[0].example.spans, [MomentAnnotation::new(4.0, 10.0).unwrap()]);
        assert_eq!(rows[1].example.spans[0].start_s, 20.0);
        assert_eq!(rows[1].example.spans[1].start_s, 2.0);

        fs::write(
            &path,
            r#"{"example_id":"m3","video_id":"v","query":"q","spans":[[10.0,4.0]]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_moment_manifest(&path),
            Err(Error::Validation { id, .. }) if id == "m3"
        ));
    }
}

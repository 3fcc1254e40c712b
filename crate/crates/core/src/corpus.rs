//! Loading the deceptive opinion spam corpus and drawing train/test splits.
//!
//! The on-disk layout is
//!
//! ```text
//! <root>/<polarity>_polarity/<class>_from_<source>/fold<k>/<stem>.txt
//! ```
//!
//! with `polarity` one of `positive`/`negative`, `class` one of
//! `truthful`/`deceptive`, and `k` in `1..=5`. File stems look like
//! `d_hilton_3`; the middle segment is the hotel.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the marker file `make_fixture` drops into a synthetic corpus root.
pub const FIXTURE_MARKER: &str = ".opspam-fixture";

/// Class label, encoded as `Deceptive = 1`, `Truthful = 0` (also on the wire).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Truthful = 0,
    Deceptive = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Truthful),
            1 => Some(Label::Deceptive),
            _ => None,
        }
    }

    fn dir_word(self) -> &'static str {
        match self {
            Label::Truthful => "truthful",
            Label::Deceptive => "deceptive",
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_u8(v).ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_word())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    fn dir_word(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_word())
    }
}

impl std::str::FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            other => Err(Error::invalid(format!("unknown polarity `{other}`"))),
        }
    }
}

/// One review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub polarity: Polarity,
    pub source: String,
    pub hotel: String,
    pub fold: u8,
}

impl Document {
    /// Path of this document relative to a corpus root.
    pub fn relative_path(&self) -> PathBuf {
        PathBuf::from(format!("{}_polarity", self.polarity.dir_word()))
            .join(format!("{}_from_{}", self.label.dir_word(), self.source))
            .join(format!("fold{}", self.fold))
            .join(format!("{}.txt", self.id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<Document>,
    pub test: Vec<Document>,
    pub seed: u64,
    pub train_fraction: f64,
}

struct PathMeta {
    polarity: Polarity,
    label: Label,
    source: String,
    fold: u8,
    id: String,
    hotel: String,
}

fn parse_relative(rel: &Path, full: &Path) -> Result<PathMeta> {
    let bad = |reason: &str| Error::Corpus {
        path: full.to_path_buf(),
        reason: reason.to_string(),
    };
    let parts: Vec<&str> = rel
        .components()
        .map(|c| match c {
            Component::Normal(s) => s.to_str().ok_or_else(|| bad("non-UTF-8 path component")),
            _ => Err(bad("unexpected path component")),
        })
        .collect::<Result<_>>()?;
    if parts.len() != 4 {
        return Err(bad(
            "expected <polarity>_polarity/<class>_from_<source>/fold<k>/<file>.txt",
        ));
    }
    let polarity = parts[0]
        .strip_suffix("_polarity")
        .ok_or_else(|| bad("first component must end in `_polarity`"))?
        .parse::<Polarity>()
        .map_err(|_| bad("polarity must be `positive` or `negative`"))?;
    let (class, source) = parts[1]
        .split_once("_from_")
        .ok_or_else(|| bad("second component must look like <class>_from_<source>"))?;
    let label = match class {
        "truthful" => Label::Truthful,
        "deceptive" => Label::Deceptive,
        _ => return Err(bad("class must be `truthful` or `deceptive`")),
    };
    if source.is_empty() {
        return Err(bad("empty source"));
    }
    let fold = parts[2]
        .strip_prefix("fold")
        .and_then(|k| k.parse::<u8>().ok())
        .filter(|k| (1..=5).contains(k))
        .ok_or_else(|| bad("third component must be fold1..fold5"))?;
    let id = parts[3]
        .strip_suffix(".txt")
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad("file must be a non-empty *.txt name"))?;
    let hotel = match (id.find('_'), id.rfind('_')) {
        (Some(a), Some(b)) if a < b => id[a + 1..b].to_string(),
        _ => String::new(),
    };
    Ok(PathMeta {
        polarity,
        label,
        source: source.to_string(),
        fold,
        id: id.to_string(),
        hotel,
    })
}

fn is_hidden(entry: &walkdir::DirEntry) -> bool {
    entry.depth() > 0
        && entry
            .file_name()
            .to_str()
            .map(|s| s.starts_with('.') || s == "__MACOSX")
            .unwrap_or(false)
}

/// Load every review under `root`, sorted by full path.
pub fn load_corpus(root: &Path) -> Result<Vec<Document>> {
    if !root.is_dir() {
        return Err(Error::Corpus {
            path: root.to_path_buf(),
            reason: "corpus root does not exist or is not a directory".into(),
        });
    }
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root)
        .into_iter()
        .filter_entry(|e| !is_hidden(e))
    {
        let entry = entry.map_err(|e| Error::Corpus {
            path: e.path().map(Path::to_path_buf).unwrap_or_else(|| root.into()),
            reason: e.to_string(),
        })?;
        // Top-level files (README.txt and friends) are not reviews.
        if entry.file_type().is_file() && entry.depth() > 1 {
            let is_txt = entry.path().extension().map(|e| e == "txt").unwrap_or(false);
            if is_txt {
                files.push(entry.into_path());
            }
        }
    }
    files.sort();

    let loaded: Vec<Result<Option<Document>>> = files
        .par_iter()
        .map(|path| {
            let rel = path.strip_prefix(root).expect("walkdir yields paths under root");
            let meta = parse_relative(rel, path)?;
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let text = String::from_utf8_lossy(&bytes).into_owned();
            if text.trim().is_empty() {
                return Ok(None);
            }
            Ok(Some(Document {
                id: meta.id,
                text,
                label: meta.label,
                polarity: meta.polarity,
                source: meta.source,
                hotel: meta.hotel,
                fold: meta.fold,
            }))
        })
        .collect();

    let mut docs = Vec::with_capacity(files.len());
    let mut empty = Vec::new();
    for (path, res) in files.iter().zip(loaded) {
        match res? {
            Some(doc) => docs.push(doc),
            None => empty.push(path.clone()),
        }
    }
    if !empty.is_empty() {
        return Err(Error::EmptyDocuments(empty));
    }
    if docs.is_empty() {
        return Err(Error::Corpus {
            path: root.to_path_buf(),
            reason: "no review files found".into(),
        });
    }
    Ok(docs)
}

/// Keep only documents of the given polarity; `None` keeps everything.
pub fn filter_polarity(docs: Vec<Document>, polarity: Option<Polarity>) -> Vec<Document> {
    match polarity {
        None => docs,
        Some(p) => docs.into_iter().filter(|d| d.polarity == p).collect(),
    }
}

/// Label-stratified shuffled split.
///
/// Each class is shuffled and cut at `round(n_c * train_fraction)` (clamped so
/// both sides keep at least one document), then train and test are shuffled.
pub fn split(docs: &[Document], train_fraction: f64, seed: u64) -> Result<CorpusSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [Label::Truthful, Label::Deceptive] {
        let mut class: Vec<&Document> = docs.iter().filter(|d| d.label == label).collect();
        if class.len() < 2 {
            return Err(Error::invalid(format!(
                "class {label} has {} document(s); at least 2 are required",
                class.len()
            )));
        }
        class.shuffle(&mut rng);
        let n = class.len();
        let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
        train.extend(class[..n_train].iter().map(|d| (*d).clone()));
        test.extend(class[n_train..].iter().map(|d| (*d).clone()));
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(CorpusSplit {
        train,
        test,
        seed,
        train_fraction,
    })
}

/// Write documents as JSON Lines.
pub fn export_jsonl<W: Write>(docs: &[Document], mut out: W) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Words the synthetic corpus is built from. Every entry is a plain
/// lowercase word that survives preprocessing unchanged apart from stemming.
pub mod fixture_words {
    pub const NEUTRAL: &[&str] = &[
        "hotel", "room", "staff", "bed", "location", "breakfast", "lobby", "view", "service",
        "night", "desk", "floor", "bathroom", "shower", "elevator", "parking",
    ];
    pub const DECEPTIVE: &[&str] = &[
        "amazing", "luxury", "experience", "husband", "vacation", "family", "business", "trip",
        "recommend", "definitely", "chicago", "wife",
    ];
    pub const TRUTHFUL: &[&str] = &[
        "small", "price", "downtown", "walk", "minutes", "booked", "upgrade", "quiet", "noise",
        "rate", "block", "street",
    ];
    pub const POSITIVE: &[&str] = &["great", "excellent", "lovely", "comfortable", "friendly"];
    pub const NEGATIVE: &[&str] = &["terrible", "dirty", "rude", "awful", "broken"];
    /// Filler that preprocessing strips (stopwords) or neural models see as OOV.
    pub const FILLER: &[&str] = &["the", "was", "and", "we", "it", "very", "our", "a"];
    pub const HOTELS: &[&str] = &[
        "affinia", "allegro", "amalfi", "ambassador", "conrad", "fairmont", "hardrock", "hilton",
        "homewood", "hyatt", "intercontinental", "james", "knickerbocker", "monaco", "omni",
        "palmer", "sheraton", "sofitel", "swissotel", "talbott",
    ];

    /// All content words (the 50 tokens covered by the fixture embedding file).
    pub fn content_words() -> Vec<&'static str> {
        NEUTRAL
            .iter()
            .chain(DECEPTIVE)
            .chain(TRUTHFUL)
            .chain(POSITIVE)
            .chain(NEGATIVE)
            .copied()
            .collect()
    }
}

fn fixture_text(rng: &mut ChaCha8Rng, label: Label, polarity: Polarity) -> String {
    use fixture_words::*;
    let (own, other) = match label {
        Label::Deceptive => (DECEPTIVE, TRUTHFUL),
        Label::Truthful => (TRUTHFUL, DECEPTIVE),
    };
    let tone = match polarity {
        Polarity::Positive => POSITIVE,
        Polarity::Negative => NEGATIVE,
    };
    let n_words = rng.gen_range(25..60);
    let mut words: Vec<String> = Vec::with_capacity(n_words + 4);
    for i in 0..n_words {
        let r: f64 = rng.gen();
        let pool = if r < 0.25 {
            own
        } else if r < 0.30 {
            other
        } else if r < 0.45 {
            tone
        } else if r < 0.75 {
            NEUTRAL
        } else {
            FILLER
        };
        let mut w = pool[rng.gen_range(0..pool.len())].to_string();
        if i == 0 {
            let mut c = w.chars();
            if let Some(first) = c.next() {
                w = first.to_uppercase().collect::<String>() + c.as_str();
            }
        }
        words.push(w);
        if rng.gen_bool(0.05) {
            words.push(rng.gen_range(1..500).to_string());
        }
    }
    let mut text = words.join(" ");
    text.push_str(if rng.gen_bool(0.5) { "!" } else { "." });
    text.push('\n');
    text
}

/// Generate a synthetic corpus in the on-disk layout with `n_per_cell` reviews
/// per (polarity, class) cell. Deceptive and truthful reviews draw from two
/// distinct word distributions, so a classifier can separate them.
pub fn make_fixture(n_per_cell: usize, seed: u64, out_dir: &Path) -> Result<PathBuf> {
    if n_per_cell == 0 {
        return Err(Error::invalid("n_per_cell must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for polarity in [Polarity::Negative, Polarity::Positive] {
        for label in [Label::Deceptive, Label::Truthful] {
            let source = match (label, polarity) {
                (Label::Deceptive, _) => "MTurk",
                (Label::Truthful, Polarity::Positive) => "TripAdvisor",
                (Label::Truthful, Polarity::Negative) => "Web",
            };
            let prefix = if label == Label::Deceptive { "d" } else { "t" };
            for k in 0..n_per_cell {
                let hotel = fixture_words::HOTELS[k % fixture_words::HOTELS.len()];
                let doc = Document {
                    id: format!("{prefix}_{hotel}_{}", k / fixture_words::HOTELS.len() + 1),
                    text: fixture_text(&mut rng, label, polarity),
                    label,
                    polarity,
                    source: source.to_string(),
                    hotel: hotel.to_string(),
                    fold: (k % 5) as u8 + 1,
                };
                let path = out_dir.join(doc.relative_path());
                let dir = path.parent().expect("relative path has a parent");
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                fs::write(&path, &doc.text).map_err(|e| Error::io(&path, e))?;
            }
        }
    }
    let marker = out_dir.join(FIXTURE_MARKER);
    fs::write(&marker, format!("n_per_cell={n_per_cell}\nseed={seed}\n"))
        .map_err(|e| Error::io(&marker, e))?;
    Ok(out_dir.to_path_buf())
}

/// Write a GloVe-format embedding file for the fixture vocabulary.
pub fn write_fixture_embeddings(path: &Path, dim: usize, seed: u64) -> Result<()> {
    if dim == 0 {
        return Err(Error::invalid("embedding dim must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for word in fixture_words::content_words() {
        out.push_str(word);
        for _ in 0..dim {
            let v: f64 = rng.gen_range(-1.0..1.0);
            out.push_str(&format!(" {v:.6}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// True if `root` was produced by [`make_fixture`].
pub fn is_fixture(root: &Path) -> bool {
    root.join(FIXTURE_MARKER).exists()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, label: Label) -> Document {
        Document {
            id: id.into(),
            text: "x".into(),
            label,
            polarity: Polarity::Positive,
            source: "S".into(),
            hotel: "h".into(),
            fold: 1,
        }
    }

    #[test]
    fn single_file_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("negative_polarity/deceptive_from_MTurk/fold1");
        fs::create_dir_all(&p).unwrap();
        fs::write(p.join("d_hotel_1.txt"), "Some review.").unwrap();
        let docs = load_corpus(dir.path()).unwrap();
        assert_eq!(docs.len(), 1);
        let d = &docs[0];
        assert_eq!(d.label, Label::Deceptive);
        assert_eq!(d.polarity, Polarity::Negative);
        assert_eq!(d.source, "MTurk");
        assert_eq!(d.fold, 1);
        assert_eq!(d.hotel, "hotel");
        assert_eq!(d.id, "d_hotel_1");
        assert_eq!(
            d.relative_path(),
            PathBuf::from("negative_polarity/deceptive_from_MTurk/fold1/d_hotel_1.txt")
        );
    }

    #[test]
    fn empty_file_is_listed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("positive_polarity/truthful_from_TripAdvisor/fold2");
        fs::create_dir_all(&p).unwrap();
        fs::write(p.join("t_a_1.txt"), "  \n").unwrap();
        fs::write(p.join("t_a_2.txt"), "fine").unwrap();
        match load_corpus(dir.path()) {
            Err(Error::EmptyDocuments(v)) => {
                assert_eq!(v.len(), 1);
                assert!(v[0].ends_with("t_a_1.txt"));
            }
            other => panic!("expected empty-document error, got {other:?}"),
        }
    }

    #[test]
    fn bad_layout_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("positive_polarity/liar_from_X/fold1");
        fs::create_dir_all(&p).unwrap();
        fs::write(p.join("a.txt"), "text").unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(err.to_string().contains("liar_from_X"), "{err}");
    }

    #[test]
    fn missing_root() {
        assert!(matches!(
            load_corpus(Path::new("/nonexistent/opspam")),
            Err(Error::Corpus { .. })
        ));
    }

    #[test]
    fn invalid_utf8_is_replaced() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("positive_polarity/truthful_from_X/fold1");
        fs::create_dir_all(&p).unwrap();
        fs::write(p.join("t_a_1.txt"), b"caf\xff ok").unwrap();
        let docs = load_corpus(dir.path()).unwrap();
        assert_eq!(docs[0].text, "caf\u{fffd} ok");
    }

    #[test]
    fn full_size_split_counts() {
        let docs: Vec<Document> = (0..1600)
            .map(|i| doc(&i.to_string(), if i % 2 == 0 { Label::Truthful } else { Label::Deceptive }))
            .collect();
        let s = split(&docs, 0.8, 42).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1280, 320));
        let pos = s.train.iter().filter(|d| d.label == Label::Deceptive).count();
        assert_eq!(pos, 640);
    }

    #[test]
    fn small_split_counts() {
        let docs: Vec<Document> = (0..10)
            .map(|i| doc(&i.to_string(), if i < 5 { Label::Truthful } else { Label::Deceptive }))
            .collect();
        let s = split(&docs, 0.8, 0).unwrap();
        assert_eq!(s.train.len(), 8);
        assert_eq!(s.test.len(), 2);
        let pos = |v: &[Document]| v.iter().filter(|d| d.label == Label::Deceptive).count();
        assert_eq!(pos(&s.train), 4);
        assert_eq!(pos(&s.test), 1);
    }

    #[test]
    fn split_rejects_bad_input() {
        let docs = vec![doc("a", Label::Truthful), doc("b", Label::Deceptive)];
        assert!(split(&docs, 0.0, 1).is_err());
        assert!(split(&docs, 1.0, 1).is_err());
        assert!(split(&docs, 0.5, 1).is_err());
    }

    #[test]
    fn fixture_counts() {
        let dir = tempfile::tempdir().unwrap();
        make_fixture(5, 1, dir.path()).unwrap();
        let docs = load_corpus(dir.path()).unwrap();
        assert_eq!(docs.len(), 20);
        assert!(is_fixture(dir.path()));
        assert!(make_fixture(0, 1, dir.path()).is_err());
    }

    #[test]
    fn jsonl_lines() {
        let mut buf = Vec::new();
        export_jsonl(&[doc("a", Label::Deceptive)], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 1);
        let v: serde_json::Value = serde_json::from_str(s.trim()).unwrap();
        assert_eq!(v["label"], 1);
        assert_eq!(v["fold"], 1);
    }

    #[test]
    fn fixture_vocabulary_has_fifty_words() {
        assert_eq!(fixture_words::content_words().len(), 50);
    }
}

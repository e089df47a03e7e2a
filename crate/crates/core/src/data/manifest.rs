//! Dataset manifests, the 12-way class map and speaker-stable split assignment.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::error::{Error, Result};

pub const COMMANDS: [&str; 10] = ["yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go"];
pub const DIGITS: [&str; 10] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"];
pub const SYNTHETIC: [&str; 10] = ["syn0", "syn1", "syn2", "syn3", "syn4", "syn5", "syn6", "syn7", "syn8", "syn9"];

pub const SILENCE_CLASS: usize = 10;
pub const UNKNOWN_CLASS: usize = 11;
pub const SILENCE_WORD: &str = "_silence_";
pub const UNKNOWN_WORD: &str = "_unknown_";
pub const NOISE_DIR: &str = "_background_noise_";
pub const MANIFEST_SCHEMA: &str = "# subband-cnn manifest v1";

const MAX_PER_CLASS: u32 = (1 << 27) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Commands,
    Digits,
    Synthetic,
}

impl Task {
    pub fn keywords(self) -> [&'static str; 10] {
        match self {
            Task::Commands => COMMANDS,
            Task::Digits => DIGITS,
            Task::Synthetic => SYNTHETIC,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Commands => "commands",
            Task::Digits => "digits",
            Task::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "commands" => Ok(Task::Commands),
            "digits" => Ok(Task::Digits),
            "synthetic" => Ok(Task::Synthetic),
            _ => Err(Error::InvalidParameter(format!("unknown task {s:?} (commands, digits, synthetic)"))),
        }
    }
}

/// Keywords map to 0..10, silence to 10, everything else to 11.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    keywords: [&'static str; 10],
}

impl ClassMap {
    pub fn new(task: Task) -> Self {
        Self {
            keywords: task.keywords(),
        }
    }

    pub fn num_classes(&self) -> usize {
        12
    }

    pub fn keywords(&self) -> &[&'static str] {
        &self.keywords
    }

    pub fn class_of(&self, word: &str) -> usize {
        if word == SILENCE_WORD {
            return SILENCE_CLASS;
        }
        self.keywords.iter().position(|&k| k == word).unwrap_or(UNKNOWN_CLASS)
    }

    pub fn name(&self, class: usize) -> &'static str {
        match class {
            SILENCE_CLASS => SILENCE_WORD,
            UNKNOWN_CLASS => UNKNOWN_WORD,
            c => self.keywords[c],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub(crate) fn id(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidParameter(format!("unknown split {s:?}"))),
        }
    }
}

/// The part of a file's base name identifying its speaker.
pub fn speaker_token(file_name: &str) -> &str {
    let base = file_name.rsplit(['/', '\\']).next().unwrap_or(file_name);
    match base.find("_nohash_") {
        Some(i) => &base[..i],
        None => base,
    }
}

/// Position in `[0, 100)` of a file's speaker: SHA-1 of the speaker token,
/// low 27 bits, scaled by `100 / (2^27 - 1)`.
pub fn split_percentage(file_name: &str) -> f64 {
    let digest = Sha1::digest(speaker_token(file_name).as_bytes());
    let tail = u32::from_be_bytes([digest[16], digest[17], digest[18], digest[19]]);
    f64::from(tail % (MAX_PER_CLASS + 1)) * (100.0 / f64::from(MAX_PER_CLASS))
}

pub fn split_assign(file_name: &str, dev_pct: f64, test_pct: f64) -> Split {
    let p = split_percentage(file_name);
    if p < dev_pct {
        Split::Dev
    } else if p < dev_pct + test_pct {
        Split::Test
    } else {
        Split::Train
    }
}

pub fn check_split_percentages(dev_pct: f64, test_pct: f64) -> Result<()> {
    let ok = |p: f64| p > 0.0 && p < 100.0;
    if ok(dev_pct) && ok(test_pct) && dev_pct + test_pct < 100.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "split percentages must lie in (0, 100) and sum below 100, got dev={dev_pct} test={test_pct}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    /// Path relative to the dataset root, `/`-separated.
    pub path: String,
    pub word: String,
    pub class: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub task: Task,
    pub class_map: ClassMap,
    /// Sorted by path.
    pub entries: Vec<Entry>,
    /// Background-noise recordings, relative paths.
    pub noise: Vec<String>,
    pub dev_pct: f64,
    pub test_pct: f64,
}

impl DatasetManifest {
    /// Builds a manifest from `(path, word)` pairs, assigning classes and splits.
    pub fn from_files(
        task: Task,
        files: impl IntoIterator<Item = (String, String)>,
        noise: Vec<String>,
        dev_pct: f64,
        test_pct: f64,
    ) -> Result<Self> {
        check_split_percentages(dev_pct, test_pct)?;
        let class_map = ClassMap::new(task);
        let mut entries: Vec<Entry> = files
            .into_iter()
            .map(|(path, word)| Entry {
                class: class_map.class_of(&word),
                split: split_assign(&path, dev_pct, test_pct),
                path,
                word,
            })
            .collect();
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        let mut noise = noise;
        noise.sort();
        Ok(Self {
            task,
            class_map,
            entries,
            noise,
            dev_pct,
            test_pct,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Counts per split of keyword, unknown and silence entries.
    pub fn counts(&self, split: Split) -> SplitCounts {
        let mut c = SplitCounts::default();
        for e in self.split_entries(split) {
            match e.class {
                SILENCE_CLASS => c.silence += 1,
                UNKNOWN_CLASS => c.unknown += 1,
                _ => c.keyword += 1,
            }
        }
        c
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{MANIFEST_SCHEMA}\npath,word,class,split\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{},{}\n", e.path, e.word, e.class, e.split));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitCounts {
    pub keyword: usize,
    pub unknown: usize,
    pub silence: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.keyword + self.unknown + self.silence
    }
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut paths = Vec::new();
    for entry in rd {
        paths.push(entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?.path());
    }
    paths.sort();
    Ok(paths)
}

fn is_wav(p: &Path) -> bool {
    p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Walks `root/<word>/*.wav`; `root/_background_noise_/*.wav` supplies noise.
pub fn scan_dataset(root: &Path, task: Task, dev_pct: f64, test_pct: f64) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!("dataset root {} does not exist or is not a directory", root.display())));
    }
    let noise_dir = root.join(NOISE_DIR);
    if !noise_dir.is_dir() {
        return Err(Error::Dataset(format!(
            "no {NOISE_DIR} directory under {} (needed for silence samples)",
            root.display()
        )));
    }
    let noise: Vec<String> = read_dir_sorted(&noise_dir)?
        .into_iter()
        .filter(|p| is_wav(p))
        .map(|p| format!("{NOISE_DIR}/{}", p.file_name().unwrap().to_string_lossy()))
        .collect();
    if noise.is_empty() {
        return Err(Error::Dataset(format!("{} holds no WAV files", noise_dir.display())));
    }
    let mut files = Vec::new();
    for dir in read_dir_sorted(root)? {
        let word = dir.file_name().unwrap().to_string_lossy().into_owned();
        if !dir.is_dir() || word == NOISE_DIR || word.starts_with('.') {
            continue;
        }
        for f in read_dir_sorted(&dir)?.into_iter().filter(|p| is_wav(p)) {
            let name = f.file_name().unwrap().to_string_lossy().into_owned();
            files.push((format!("{word}/{name}"), word.clone()));
        }
    }
    if files.is_empty() {
        return Err(Error::Dataset(format!("no WAV files found under {}", root.display())));
    }
    DatasetManifest::from_files(task, files, noise, dev_pct, test_pct)
}

//! Append-only JSONL store of accepted annotations.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use cage_core::corpus::{annotation_from_json, annotation_to_json, Annotation};
use cage_core::{Error, Result};
use log::warn;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// The accepted-annotation file plus a side log of rejected records.
///
/// Each record is written with a single `write_all` of one complete line and
/// synced, so a crash leaves at most a partial final line, which [`Store::open`]
/// discards.
#[derive(Debug)]
pub struct Store {
    path: PathBuf,
    rejected_path: PathBuf,
    records: Vec<Annotation>,
}

impl Store {
    /// Opens (or creates) the store and returns it with every complete,
    /// parseable record in file order.
    pub fn open(path: impl Into<PathBuf>, rejected_path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let rejected_path = rejected_path.into();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io_err(&path))?;
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        if complete < text.len() {
            warn!("{}: discarding partial trailing record", path.display());
            file.set_len(complete as u64).map_err(io_err(&path))?;
            file.seek(SeekFrom::End(0)).map_err(io_err(&path))?;
        }
        let mut records = Vec::new();
        for (i, line) in text[..complete].lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match annotation_from_json(line) {
                Ok(a) => records.push(a),
                Err(e) => warn!("{}:{}: unreadable record skipped: {e}", path.display(), i + 1),
            }
        }
        Ok(Store { path, rejected_path, records })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn rejected_path(&self) -> &Path {
        &self.rejected_path
    }

    pub fn records(&self) -> &[Annotation] {
        &self.records
    }

    /// Appends one record as a single whole line.
    pub fn append(&mut self, annotation: Annotation) -> Result<()> {
        append_line(&self.path, &annotation_to_json(&annotation))?;
        self.records.push(annotation);
        Ok(())
    }

    /// Moves every record matching `predicate` to the rejected log and
    /// rewrites the store atomically. Returns the moved records.
    pub fn remove_where(&mut self, mut predicate: impl FnMut(&Annotation) -> bool) -> Result<Vec<Annotation>> {
        let (moved, kept): (Vec<Annotation>, Vec<Annotation>) =
            self.records.drain(..).partition(|a| predicate(a));
        self.records = kept;
        if moved.is_empty() {
            return Ok(moved);
        }
        for a in &moved {
            append_line(&self.rejected_path, &annotation_to_json(a))?;
        }
        self.rewrite()?;
        Ok(moved)
    }

    fn rewrite(&self) -> Result<()> {
        let tmp = self.path.with_extension("jsonl.tmp");
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            let mut body = String::new();
            for a in &self.records {
                body.push_str(&annotation_to_json(a));
                body.push('\n');
            }
            f.write_all(body.as_bytes()).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &self.path).map_err(io_err(&self.path))
    }
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new().append(true).create(true).open(path).map_err(io_err(path))?;
    let mut buf = String::with_capacity(line.len() + 1);
    buf.push_str(line);
    buf.push('\n');
    f.write_all(buf.as_bytes()).map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))
}

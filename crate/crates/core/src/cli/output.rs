use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub fn new() -> Self {
        Self { writer: csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new()) }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("writing to memory");
    }

    pub fn finish(self) -> Vec<u8> {
        self.writer.into_inner().expect("writing to memory")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Artifact {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Files collected in memory and written together with their manifest.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
        bytes.push(b'\n');
        self.add(name, bytes);
    }

    pub fn write(self, dir: &Path, mut manifest: serde_json::Value) -> io::Result<Vec<Artifact>> {
        fs::create_dir_all(dir)?;
        let mut artifacts = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
            artifacts.push(Artifact { file: name.clone(), bytes: bytes.len(), sha256: hex::encode(Sha256::digest(bytes)) });
        }
        manifest["artifacts"] = serde_json::to_value(&artifacts).expect("serializable");
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("serializable");
        bytes.push(b'\n');
        fs::write(dir.join("manifest.json"), bytes)?;
        Ok(artifacts)
    }
}

//! Line-delimited JSON metrics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Keeps every record in memory and optionally mirrors it to a file,
/// flushing after each line so a crashed run leaves a readable prefix.
#[derive(Debug, Default)]
pub struct MetricsLog {
    lines: Vec<String>,
    file: Option<BufWriter<File>>,
    schema: Option<String>,
}

impl MetricsLog {
    pub fn memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(MetricsLog {
            lines: Vec::new(),
            file: Some(BufWriter::new(File::create(path)?)),
            schema: None,
        })
    }

    /// Prefix every object record with a `"schema"` field.
    pub fn with_schema(mut self, schema: &str) -> Self {
        self.schema = Some(schema.to_string());
        self
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let mut line = serde_json::to_string(record).expect("metrics records serialize");
        if let (Some(schema), Some(rest)) = (&self.schema, line.strip_prefix('{')) {
            let tag = serde_json::to_string(schema).expect("strings serialize");
            let sep = if rest == "}" { "" } else { "," };
            line = format!("{{\"schema\":{tag}{sep}{rest}");
        }
        if let Some(f) = self.file.as_mut() {
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        self.lines.push(line);
        Ok(())
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn parse<T: serde::de::DeserializeOwned>(&self) -> Vec<T> {
        self.lines
            .iter()
            .map(|l| serde_json::from_str(l).expect("own records parse"))
            .collect()
    }
}

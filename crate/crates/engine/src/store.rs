//! On-disk sample store.
//!
//! Layout under the store root:
//!
//! ```text
//! <store>/table.csv        canonical copy of the ingested relation
//! <store>/schema.txt       column-role assignment
//! <store>/groups.txt       k-center grouping manifest (optional)
//! <store>/<group>/<delta>.sample
//! <store>/<group>/manifest.txt
//! ```
//!
//! A group directory holds one nested sample ladder: one self-describing
//! sample file per delta plus a manifest recording the weight source, seed,
//! delta ladder and the table's timestamp domain (so queries and window
//! rewriting never need the base table).

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use aggcast_core::sample::{
    read_sample, write_sample, GswSample, MultiLayerSamples, SampleError, WeightSource,
};
use aggcast_core::table::{LoadOptions, SchemaSpec, TableError, TimeSeriesTable};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("store has no ingested table at {0}")]
    NoTable(PathBuf),
    #[error("unknown sample group `{0}`")]
    UnknownGroup(String),
    #[error("group `{group}` has no layer with delta {delta}")]
    UnknownDelta { group: String, delta: f64 },
    #[error("malformed group manifest {path}: {reason}")]
    MalformedManifest { path: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Metadata of one stored sample group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupInfo {
    pub name: String,
    pub weight_source: WeightSource,
    pub seed: u64,
    pub deltas: Vec<f64>,
    pub timestamps: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct SampleStore {
    root: PathBuf,
}

impl SampleStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn table_path(&self) -> PathBuf {
        self.root.join("table.csv")
    }

    fn schema_path(&self) -> PathBuf {
        self.root.join("schema.txt")
    }

    pub fn groups_manifest_path(&self) -> PathBuf {
        self.root.join("groups.txt")
    }

    /// Ingests a CSV + schema pair: validates and writes canonical copies
    /// into the store.
    pub fn ingest(
        &self,
        csv_bytes: &[u8],
        schema_text: &str,
        options: &LoadOptions,
    ) -> Result<TimeSeriesTable, StoreError> {
        let schema = SchemaSpec::parse(schema_text)?;
        let table = TimeSeriesTable::load_csv(csv_bytes, &schema, options)?;
        let path = self.table_path();
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        table.write_csv(BufWriter::new(file))?;
        let spath = self.schema_path();
        fs::write(&spath, schema.to_text()).map_err(io_err(&spath))?;
        Ok(table)
    }

    /// Stores an already-built table (used by synthetic workloads).
    pub fn put_table(&self, table: &TimeSeriesTable) -> Result<(), StoreError> {
        let path = self.table_path();
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        table.write_csv(BufWriter::new(file))?;
        let mut roles = Vec::new();
        for d in table.dims() {
            roles.push(format!("{}=dim", d.name));
        }
        for m in table.measures() {
            roles.push(format!("{}=measure", m.name));
        }
        roles.push("ts=ts".to_string());
        let spath = self.schema_path();
        fs::write(&spath, roles.join("\n") + "\n").map_err(io_err(&spath))?;
        Ok(())
    }

    /// Loads the ingested table, if any.
    pub fn load_table(&self) -> Result<TimeSeriesTable, StoreError> {
        let path = self.table_path();
        if !path.exists() {
            return Err(StoreError::NoTable(path));
        }
        let schema_text =
            fs::read_to_string(self.schema_path()).map_err(io_err(&self.schema_path()))?;
        let schema = SchemaSpec::parse(&schema_text)?;
        let file = fs::File::open(&path).map_err(io_err(&path))?;
        Ok(TimeSeriesTable::load_csv(
            BufReader::new(file),
            &schema,
            &LoadOptions::default(),
        )?)
    }

    pub fn has_table(&self) -> bool {
        self.table_path().exists()
    }

    /// Writes a sample ladder as one group directory.
    pub fn write_group(
        &self,
        name: &str,
        layers: &[GswSample],
        timestamps: &[i64],
    ) -> Result<(), StoreError> {
        assert!(!layers.is_empty());
        let dir = self.root.join(name);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for layer in layers {
            let path = dir.join(format!("{}.sample", layer.delta));
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            write_sample(layer, BufWriter::new(file))?;
        }
        let manifest = dir.join("manifest.txt");
        let mut out = String::new();
        out.push_str(&format!("weight_source={}\n", layers[0].weight_source));
        out.push_str(&format!("seed={}\n", layers[0].seed));
        let deltas: Vec<String> = layers.iter().map(|l| l.delta.to_string()).collect();
        out.push_str(&format!("deltas={}\n", deltas.join(",")));
        let ts: Vec<String> = timestamps.iter().map(|t| t.to_string()).collect();
        out.push_str(&format!("timestamps={}\n", ts.join(",")));
        fs::write(&manifest, out).map_err(io_err(&manifest))?;
        Ok(())
    }

    fn read_group_info(&self, name: &str) -> Result<GroupInfo, StoreError> {
        let path = self.root.join(name).join("manifest.txt");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut weight_source = None;
        let mut seed = None;
        let mut deltas = None;
        let mut timestamps = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                StoreError::MalformedManifest {
                    path: path.clone(),
                    reason: format!("bad line `{line}`"),
                }
            })?;
            let bad = |reason: String| StoreError::MalformedManifest {
                path: path.clone(),
                reason,
            };
            match key {
                "weight_source" => {
                    weight_source =
                        Some(value.parse::<WeightSource>().map_err(|e| bad(e.to_string()))?)
                }
                "seed" => {
                    seed = Some(value.parse().map_err(|_| bad("bad seed".to_string()))?)
                }
                "deltas" => {
                    deltas = Some(
                        value
                            .split(',')
                            .map(|d| d.parse::<f64>())
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|_| bad("bad deltas".to_string()))?,
                    )
                }
                "timestamps" => {
                    timestamps = Some(
                        value
                            .split(',')
                            .filter(|s| !s.is_empty())
                            .map(|t| t.parse::<i64>())
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|_| bad("bad timestamps".to_string()))?,
                    )
                }
                _ => return Err(bad(format!("unknown key `{key}`"))),
            }
        }
        match (weight_source, seed, deltas, timestamps) {
            (Some(weight_source), Some(seed), Some(deltas), Some(timestamps)) => Ok(GroupInfo {
                name: name.to_string(),
                weight_source,
                seed,
                deltas,
                timestamps,
            }),
            _ => Err(StoreError::MalformedManifest {
                path,
                reason: "missing keys".to_string(),
            }),
        }
    }

    /// Lists sample groups sorted by name.
    pub fn list_groups(&self) -> Result<Vec<GroupInfo>, StoreError> {
        let mut out = Vec::new();
        let entries = fs::read_dir(&self.root).map_err(io_err(&self.root))?;
        for entry in entries {
            let entry = entry.map_err(io_err(&self.root))?;
            if entry.path().is_dir() && entry.path().join("manifest.txt").exists() {
                let name = entry.file_name().to_string_lossy().to_string();
                out.push(self.read_group_info(&name)?);
            }
        }
        out.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(out)
    }

    pub fn group(&self, name: &str) -> Result<GroupInfo, StoreError> {
        if !self.root.join(name).join("manifest.txt").exists() {
            return Err(StoreError::UnknownGroup(name.to_string()));
        }
        self.read_group_info(name)
    }

    /// Loads a single layer.
    pub fn load_layer(&self, group: &str, delta: f64) -> Result<GswSample, StoreError> {
        let path = self.root.join(group).join(format!("{delta}.sample"));
        if !path.exists() {
            return Err(StoreError::UnknownDelta {
                group: group.to_string(),
                delta,
            });
        }
        let file = fs::File::open(&path).map_err(io_err(&path))?;
        Ok(read_sample(BufReader::new(file))?)
    }

    /// Loads a whole group as a nested ladder.
    pub fn load_group(&self, name: &str) -> Result<MultiLayerSamples, StoreError> {
        let info = self.group(name)?;
        let mut deltas = info.deltas.clone();
        deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let layers = deltas
            .iter()
            .map(|d| self.load_layer(name, *d))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MultiLayerSamples::from_layers(layers)?)
    }

    /// Writes the k-center grouping manifest.
    pub fn write_groups_manifest(&self, text: &str) -> Result<(), StoreError> {
        let path = self.groups_manifest_path();
        let mut file = fs::File::create(&path).map_err(io_err(&path))?;
        file.write_all(text.as_bytes()).map_err(io_err(&path))?;
        Ok(())
    }
}

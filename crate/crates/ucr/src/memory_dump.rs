//! Inspection dump of the prototype and image memories.
//!
//! Layout (little-endian): `"UCRM"`, version `u32`, prototype count `u32`,
//! dim `u32`; per prototype its source domain `u32`, cluster `u32` and `dim`
//! values `f32`; then entry count `u32`, feature width `u32`, and per stored
//! image its prototype index, source domain, cluster and camera (`u32` each)
//! followed by its features as `f32`.

use std::path::Path;

use ucr_core::memory::StoredPrototype;
use ucr_core::{ImageMemory, PrototypeBank};

use crate::binary::{read_file, write_file, Reader, Writer};
use crate::error::Result;

pub const MAGIC: &[u8; 4] = b"UCRM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DumpEntry {
    pub prototype: usize,
    pub domain: usize,
    pub cluster: usize,
    pub camera: usize,
    pub features: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryDump {
    pub prototypes: Vec<(usize, usize, Vec<f32>)>,
    pub entries: Vec<DumpEntry>,
}

impl MemoryDump {
    pub fn capture(bank: &PrototypeBank, memory: &ImageMemory) -> Self {
        let prototypes = bank
            .old()
            .iter()
            .map(|p: &StoredPrototype| (p.domain, p.cluster, p.vector.iter().map(|&x| x as f32).collect()))
            .collect();
        let entries = memory
            .entries
            .iter()
            .map(|e| DumpEntry {
                prototype: e.prototype,
                domain: e.key.0,
                cluster: e.key.1,
                camera: e.sample.camera_id,
                features: e.sample.features.clone(),
            })
            .collect();
        MemoryDump { prototypes, entries }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        let dim = self.prototypes.first().map_or(0, |p| p.2.len());
        w.len(self.prototypes.len());
        w.len(dim);
        for (domain, cluster, v) in &self.prototypes {
            w.len(*domain);
            w.len(*cluster);
            v.iter().for_each(|&x| w.f32(x));
        }
        let width = self.entries.first().map_or(0, |e| e.features.len());
        w.len(self.entries.len());
        w.len(width);
        for e in &self.entries {
            for v in [e.prototype, e.domain, e.cluster, e.camera] {
                w.len(v);
            }
            e.features.iter().for_each(|&x| w.f32(x));
        }
        w.buf
    }

    pub fn decode(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(path, bytes, MAGIC, VERSION)?;
        let count = r.len()?;
        let dim = r.len()?;
        let mut prototypes = Vec::new();
        for _ in 0..count {
            let domain = r.len()?;
            let cluster = r.len()?;
            prototypes.push((domain, cluster, r.f32s(dim)?));
        }
        let n = r.len()?;
        let width = r.len()?;
        let mut entries = Vec::new();
        for _ in 0..n {
            let prototype = r.len()?;
            let domain = r.len()?;
            let cluster = r.len()?;
            let camera = r.len()?;
            entries.push(DumpEntry {
                prototype,
                domain,
                cluster,
                camera,
                features: r.f32s(width)?,
            });
        }
        r.finish()?;
        Ok(MemoryDump { prototypes, entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(path, &read_file(path)?)
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Feasible concurrency levels.
pub const CC_LEVELS: [u32; 6] = [1, 2, 4, 8, 16, 32];
/// Feasible parallelism levels.
pub const P_LEVELS: [u32; 6] = [1, 2, 4, 8, 16, 32];
/// Feasible I/O block sizes in bytes (1 KiB to 64 KiB).
pub const BS_LEVELS: [u32; 7] = [1024, 2048, 4096, 8192, 16384, 32768, 65536];
/// Number of nodes in the parameter lattice.
pub const LATTICE_SIZE: usize = CC_LEVELS.len() * P_LEVELS.len() * BS_LEVELS.len();

const KIB: u32 = 1024;

/// One of the three tunable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Concurrency,
    Parallelism,
    BlockSize,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Concurrency, Axis::Parallelism, Axis::BlockSize];

    pub fn index(self) -> usize {
        match self {
            Axis::Concurrency => 0,
            Axis::Parallelism => 1,
            Axis::BlockSize => 2,
        }
    }

    /// Number of feasible levels on this axis.
    pub fn level_count(self) -> usize {
        match self {
            Axis::Concurrency => CC_LEVELS.len(),
            Axis::Parallelism => P_LEVELS.len(),
            Axis::BlockSize => BS_LEVELS.len(),
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Axis::Concurrency => "cc",
            Axis::Parallelism => "p",
            Axis::BlockSize => "bs",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("concurrency {0} is not a power of two in 1..=32")]
    Concurrency(u32),
    #[error("parallelism {0} is not a power of two in 1..=32")]
    Parallelism(u32),
    #[error("block size {0} bytes is not a power of two in 1 KiB..=64 KiB")]
    BlockSize(u32),
    #[error("level index {index} out of range for {axis}")]
    LevelIndex { axis: Axis, index: usize },
}

/// A point of the parameter lattice: concurrency, parallelism and I/O block
/// size (bytes).
///
/// Construction validates the triple, so every `ParamSetting` in circulation
/// is feasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ParamSetting {
    cc: u32,
    p: u32,
    bs: u32,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    cc: u32,
    p: u32,
    bs: u32,
}

impl TryFrom<RawParams> for ParamSetting {
    type Error = ParamError;

    fn try_from(raw: RawParams) -> Result<Self, Self::Error> {
        ParamSetting::new(raw.cc, raw.p, raw.bs)
    }
}

impl From<ParamSetting> for RawParams {
    fn from(t: ParamSetting) -> Self {
        RawParams {
            cc: t.cc,
            p: t.p,
            bs: t.bs,
        }
    }
}

fn level_index(levels: &[u32], v: u32) -> Option<usize> {
    levels.iter().position(|&l| l == v)
}

impl ParamSetting {
    pub fn new(cc: u32, p: u32, bs: u32) -> Result<Self, ParamError> {
        if level_index(&CC_LEVELS, cc).is_none() {
            return Err(ParamError::Concurrency(cc));
        }
        if level_index(&P_LEVELS, p).is_none() {
            return Err(ParamError::Parallelism(p));
        }
        if level_index(&BS_LEVELS, bs).is_none() {
            return Err(ParamError::BlockSize(bs));
        }
        Ok(ParamSetting { cc, p, bs })
    }

    /// Like [`ParamSetting::new`] with the block size given in KiB.
    pub fn with_kib(cc: u32, p: u32, bs_kib: u32) -> Result<Self, ParamError> {
        Self::new(cc, p, bs_kib.saturating_mul(KIB))
    }

    /// Builds a setting from per-axis level indices (`log2` of cc, p and
    /// bs/1 KiB).
    pub fn from_indices(idx: [usize; 3]) -> Result<Self, ParamError> {
        let pick = |axis: Axis, levels: &[u32]| {
            levels
                .get(idx[axis.index()])
                .copied()
                .ok_or(ParamError::LevelIndex {
                    axis,
                    index: idx[axis.index()],
                })
        };
        Ok(ParamSetting {
            cc: pick(Axis::Concurrency, &CC_LEVELS)?,
            p: pick(Axis::Parallelism, &P_LEVELS)?,
            bs: pick(Axis::BlockSize, &BS_LEVELS)?,
        })
    }

    pub fn cc(&self) -> u32 {
        self.cc
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    /// Block size in bytes.
    pub fn bs(&self) -> u32 {
        self.bs
    }

    pub fn bs_kib(&self) -> u32 {
        self.bs / KIB
    }

    /// Total byte-range streams, `cc * p`.
    pub fn streams(&self) -> u32 {
        self.cc * self.p
    }

    /// Level indices on the three axes.
    pub fn indices(&self) -> [usize; 3] {
        [
            self.cc.trailing_zeros() as usize,
            self.p.trailing_zeros() as usize,
            (self.bs / KIB).trailing_zeros() as usize,
        ]
    }

    /// Coordinates used for interpolation: `log2` of cc, p and bs/1 KiB.
    pub fn log2_coords(&self) -> [f64; 3] {
        let i = self.indices();
        [i[0] as f64, i[1] as f64, i[2] as f64]
    }

    pub fn level(&self, axis: Axis) -> u32 {
        match axis {
            Axis::Concurrency => self.cc,
            Axis::Parallelism => self.p,
            Axis::BlockSize => self.bs,
        }
    }

    /// All 252 lattice nodes in lexicographic `(cc, p, bs)` order.
    pub fn lattice() -> impl Iterator<Item = ParamSetting> {
        CC_LEVELS.into_iter().flat_map(|cc| {
            P_LEVELS.into_iter().flat_map(move |p| {
                BS_LEVELS
                    .into_iter()
                    .map(move |bs| ParamSetting { cc, p, bs })
            })
        })
    }
}

impl fmt::Display for ParamSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(cc={}, p={}, bs={}KB)", self.cc, self.p, self.bs_kib())
    }
}

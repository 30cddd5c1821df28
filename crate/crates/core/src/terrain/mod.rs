//! Sparse-foothold terrains.
//!
//! A terrain is rasterized into a [`HeightField`] with a per-cell safety mask.
//! [`generate`] produces a [`TerrainPair`]: the task terrain with its gaps and a
//! flat twin in which every gap is filled to nominal ground while all safe
//! cells keep exactly the same heights.

mod generate;
pub mod io;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::generate;

/// Height of a gap cell relative to nominal ground.
pub const GAP_DEPTH: f64 = -1.0;
pub const NOMINAL_GROUND: f64 = 0.0;
/// Bound on the height variation of any load-bearing surface.
pub const SURFACE_VARIATION: f64 = 0.05;
pub const DEFAULT_CELL_SIZE: f64 = 0.05;
/// Length of the start/end platforms on strip terrains, and side of the
/// central platform on the open field.
pub const PLATFORM_LENGTH: f64 = 1.0;
pub const STRIP_WIDTH: f64 = 2.0;
/// Length of the sparse section of a strip, which is also the distance a
/// traversal has to cover.
pub const COURSE_LENGTH: f64 = 8.0;
pub const FIELD_SIDE: f64 = 8.0;
/// Radial distance from the field center that counts as a traversal.
pub const FIELD_GOAL_RADIUS: f64 = 3.5;
pub const MAX_LEVEL: u8 = 8;
pub const DEFAULT_GAP_COUNT: usize = 6;

const STEPPING_STONE_SIZES: [u32; 9] = [80, 65, 50, 40, 35, 30, 25, 20, 20];
const BEAM_LATERAL_DISTANCES: [u32; 9] = [20, 20, 20, 25, 30, 35, 35, 40, 20];

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("terrain level {0} outside 0..=8")]
    LevelOutOfRange(u8),
    #[error("invalid terrain spec: {0}")]
    InvalidSpec(String),
    #[error("malformed terrain file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    StonesEverywhere,
    SteppingStones,
    BalancingBeams,
    SteppingBeams,
    Gaps,
}

impl TerrainKind {
    pub const ALL: [TerrainKind; 5] = [
        TerrainKind::StonesEverywhere,
        TerrainKind::SteppingStones,
        TerrainKind::BalancingBeams,
        TerrainKind::SteppingBeams,
        TerrainKind::Gaps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TerrainKind::StonesEverywhere => "stones_everywhere",
            TerrainKind::SteppingStones => "stepping_stones",
            TerrainKind::BalancingBeams => "balancing_beams",
            TerrainKind::SteppingBeams => "stepping_beams",
            TerrainKind::Gaps => "gaps",
        }
    }

    pub fn is_strip(self) -> bool {
        self != TerrainKind::StonesEverywhere
    }
}

impl fmt::Display for TerrainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TerrainKind {
    type Err = TerrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TerrainKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TerrainError::InvalidSpec(format!("unknown terrain kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainSpec {
    pub kind: TerrainKind,
    pub level: u8,
    pub seed: u64,
    pub cell_size: f64,
    pub extent_x: f64,
    pub extent_y: f64,
    /// Number of gaps on the `Gaps` terrain; ignored by the other kinds.
    pub gap_count: usize,
    /// Half-width of the per-cell terrain height noise shared by both fields.
    pub surface_noise: f64,
}

impl TerrainSpec {
    /// Spec with the standard extents for `kind`.
    pub fn new(kind: TerrainKind, level: u8, seed: u64) -> Result<Self, TerrainError> {
        let (extent_x, extent_y) = if kind.is_strip() {
            (COURSE_LENGTH + 2.0 * PLATFORM_LENGTH, STRIP_WIDTH)
        } else {
            (FIELD_SIDE, FIELD_SIDE)
        };
        let spec = Self {
            kind,
            level,
            seed,
            cell_size: DEFAULT_CELL_SIZE,
            extent_x,
            extent_y,
            gap_count: DEFAULT_GAP_COUNT,
            surface_noise: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        if self.level > MAX_LEVEL {
            return Err(TerrainError::LevelOutOfRange(self.level));
        }
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return Err(TerrainError::InvalidSpec(format!(
                "cell_size must be positive, got {}",
                self.cell_size
            )));
        }
        for (name, extent) in [("extent_x", self.extent_x), ("extent_y", self.extent_y)] {
            if !(extent > 0.0) {
                return Err(TerrainError::InvalidSpec(format!("{name} must be positive")));
            }
            let cells = extent / self.cell_size;
            if (cells - cells.round()).abs() > 1e-6 {
                return Err(TerrainError::InvalidSpec(format!(
                    "{name} = {extent} is not a multiple of cell_size {}",
                    self.cell_size
                )));
            }
        }
        if !(self.surface_noise >= 0.0) {
            return Err(TerrainError::InvalidSpec("surface_noise must be >= 0".into()));
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        (self.extent_x / self.cell_size).round() as usize
    }

    pub fn ny(&self) -> usize {
        (self.extent_y / self.cell_size).round() as usize
    }
}

/// Geometry driving one curriculum level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumParams {
    /// Side of a stone, or longitudinal width of a beam.
    pub stone_size: f64,
    /// Longitudinal spacing; for `Gaps` the largest gap width.
    pub stone_gap_x: f64,
    /// Lateral spacing. Center-to-center line distance on balancing beams.
    pub stone_gap_y: f64,
    pub platform_length: f64,
}

/// Curriculum geometry for `kind` at difficulty `level`.
///
/// Values are computed as an exact integer numerator over 100, so each one
/// is the double nearest to its decimal value.
pub fn curriculum_params(kind: TerrainKind, level: u8) -> Result<CurriculumParams, TerrainError> {
    if level > MAX_LEVEL {
        return Err(TerrainError::LevelOutOfRange(level));
    }
    let l = level as u32;
    let cm = |v: u32| v as f64 / 100.0;
    let params = match kind {
        TerrainKind::StonesEverywhere => {
            // max{0.25, 1.5 (1 - 0.1 l)} and 0.05 ceil(l / 2)
            let size = (150 - 15 * l).max(25);
            let distance = 5 * l.div_ceil(2);
            CurriculumParams {
                stone_size: cm(size),
                stone_gap_x: cm(distance),
                stone_gap_y: cm(distance),
                platform_length: PLATFORM_LENGTH,
            }
        }
        TerrainKind::SteppingStones | TerrainKind::SteppingBeams => {
            let distance = 10 + 5 * l;
            CurriculumParams {
                stone_size: cm(STEPPING_STONE_SIZES[level as usize]),
                stone_gap_x: cm(distance),
                stone_gap_y: cm(distance),
                platform_length: PLATFORM_LENGTH,
            }
        }
        TerrainKind::BalancingBeams => CurriculumParams {
            stone_size: cm(30 - 5 * (l / 3)),
            stone_gap_x: cm(40 - 5 * l),
            stone_gap_y: cm(BEAM_LATERAL_DISTANCES[level as usize]),
            platform_length: PLATFORM_LENGTH,
        },
        TerrainKind::Gaps => CurriculumParams {
            stone_size: STRIP_WIDTH,
            stone_gap_x: cm(10 + 5 * l),
            stone_gap_y: 0.0,
            platform_length: PLATFORM_LENGTH,
        },
    };
    Ok(params)
}

/// Axis-aligned load-bearing rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stone {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    /// Rigid height offset of the whole stone.
    pub height: f64,
}

impl Stone {
    pub fn centered(cx: f64, cy: f64, size_x: f64, size_y: f64, height: f64) -> Self {
        Self {
            x0: cx - 0.5 * size_x,
            y0: cy - 0.5 * size_y,
            x1: cx + 0.5 * size_x,
            y1: cy + 0.5 * size_y,
            height,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Where a walker starts and what counts as a traversal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Course {
    /// Longitudinal strip: the sparse section spans `[start, end]` along x.
    Strip { start: f64, end: f64, center_y: f64 },
    /// Open field traversed radially from its central platform.
    Field { center_x: f64, center_y: f64, goal_radius: f64 },
}

/// Ground-truth description of what was rasterized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainLayout {
    /// Stones, beams, platforms and solid segments, in rasterization order.
    pub stones: Vec<Stone>,
    /// Rectangle that holds the sparse part of the terrain.
    pub region: (f64, f64, f64, f64),
    pub course: Course,
}

/// Result of a height query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightSample {
    pub height: f64,
    pub safe: bool,
    pub in_bounds: bool,
}

/// Rasterized terrain: heights in meters, row-major with rows along y.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    nx: usize,
    ny: usize,
    cell_size: f64,
    heights: Vec<f32>,
    safe: Vec<bool>,
}

impl HeightField {
    pub fn new(nx: usize, ny: usize, cell_size: f64, heights: Vec<f32>, safe: Vec<bool>) -> Result<Self, TerrainError> {
        if nx == 0 || ny == 0 {
            return Err(TerrainError::InvalidSpec("empty height field".into()));
        }
        if heights.len() != nx * ny || safe.len() != nx * ny {
            return Err(TerrainError::InvalidSpec(format!(
                "grid {nx}x{ny} needs {} cells, got {} heights / {} mask bits",
                nx * ny,
                heights.len(),
                safe.len()
            )));
        }
        if !(cell_size > 0.0) {
            return Err(TerrainError::InvalidSpec("cell_size must be positive".into()));
        }
        Ok(Self { nx, ny, cell_size, heights, safe })
    }

    /// Constant, fully safe field.
    pub fn flat(nx: usize, ny: usize, cell_size: f64, height: f32) -> Self {
        Self {
            nx,
            ny,
            cell_size,
            heights: vec![height; nx * ny],
            safe: vec![true; nx * ny],
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn extent_x(&self) -> f64 {
        self.nx as f64 * self.cell_size
    }

    pub fn extent_y(&self) -> f64 {
        self.ny as f64 * self.cell_size
    }

    pub fn heights(&self) -> &[f32] {
        &self.heights
    }

    pub fn safe_mask(&self) -> &[bool] {
        &self.safe
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn cell_height(&self, ix: usize, iy: usize) -> f64 {
        self.heights[self.index(ix, iy)] as f64
    }

    pub fn cell_safe(&self, ix: usize, iy: usize) -> bool {
        self.safe[self.index(ix, iy)]
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        ((ix as f64 + 0.5) * self.cell_size, (iy as f64 + 0.5) * self.cell_size)
    }

    pub fn set_cell(&mut self, ix: usize, iy: usize, height: f32, safe: bool) {
        let i = self.index(ix, iy);
        self.heights[i] = height;
        self.safe[i] = safe;
    }

    /// Containing cell of a world point, if inside the extents.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let ix = (x / self.cell_size).floor() as usize;
        let iy = (y / self.cell_size).floor() as usize;
        (ix < self.nx && iy < self.ny).then_some((ix, iy))
    }

    /// Nearest-cell height lookup. Points outside the extents read as a gap.
    pub fn height_at(&self, x: f64, y: f64) -> HeightSample {
        match self.cell_of(x, y) {
            Some((ix, iy)) => {
                let i = self.index(ix, iy);
                HeightSample {
                    height: self.heights[i] as f64,
                    safe: self.safe[i],
                    in_bounds: true,
                }
            }
            None => HeightSample {
                height: GAP_DEPTH,
                safe: false,
                in_bounds: false,
            },
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some()
    }

    pub fn same_shape(&self, other: &HeightField) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.cell_size == other.cell_size
    }
}

/// Task terrain, its gap-filled flat twin, and the generating spec.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainPair {
    pub task: HeightField,
    pub flat: HeightField,
    pub spec: TerrainSpec,
    pub layout: TerrainLayout,
}

impl TerrainPair {
    /// Checks the twin invariants with a full-grid scan.
    pub fn check_twin(&self) -> Result<(), String> {
        if !self.task.same_shape(&self.flat) {
            return Err("task and flat differ in shape".into());
        }
        for (i, (&safe, (&t, &f))) in self
            .task
            .safe
            .iter()
            .zip(self.task.heights.iter().zip(&self.flat.heights))
            .enumerate()
        {
            if !self.flat.safe[i] {
                return Err(format!("flat cell {i} is not safe"));
            }
            if safe && t.to_bits() != f.to_bits() {
                return Err(format!("safe cell {i}: task {t} != flat {f}"));
            }
            if !safe && (f as f64) < NOMINAL_GROUND - SURFACE_VARIATION - 1e-6 {
                return Err(format!("gap cell {i} not filled in flat twin: {f}"));
            }
        }
        Ok(())
    }
}

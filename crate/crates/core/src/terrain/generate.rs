use rand::Rng;

use super::{
    curriculum_params, Course, HeightField, Stone, TerrainError, TerrainKind, TerrainLayout, TerrainPair,
    TerrainSpec, GAP_DEPTH, NOMINAL_GROUND, PLATFORM_LENGTH, SURFACE_VARIATION,
};
use crate::rng::{self, Purpose};

/// Builds the task terrain and its flat twin. Pure function of `spec`.
pub fn generate(spec: &TerrainSpec) -> Result<TerrainPair, TerrainError> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Purpose::Terrain, spec.kind as u64);
    let layout = match spec.kind {
        TerrainKind::StonesEverywhere => stones_everywhere(spec, &mut rng)?,
        TerrainKind::SteppingStones => stepping_stones(spec, &mut rng)?,
        TerrainKind::BalancingBeams => balancing_beams(spec, &mut rng)?,
        TerrainKind::SteppingBeams => stepping_beams(spec, &mut rng)?,
        TerrainKind::Gaps => gaps(spec, &mut rng)?,
    };

    let (nx, ny) = (spec.nx(), spec.ny());
    let cell = spec.cell_size;
    let mut stone_height = vec![f64::NAN; nx * ny];
    for stone in &layout.stones {
        let Some((ix0, ix1)) = cell_span(stone.x0, stone.x1, cell, nx) else { continue };
        let Some((iy0, iy1)) = cell_span(stone.y0, stone.y1, cell, ny) else { continue };
        for iy in iy0..iy1 {
            for ix in ix0..ix1 {
                stone_height[iy * nx + ix] = stone.height;
            }
        }
    }

    // Per-cell roughness, shared by both fields so they stay in one-to-one correspondence.
    let roughness: Vec<f64> = if spec.surface_noise > 0.0 {
        (0..nx * ny)
            .map(|_| spec.surface_noise * (2.0 * rng.gen::<f64>() - 1.0))
            .collect()
    } else {
        vec![0.0; nx * ny]
    };

    let clamp = |h: f64| h.clamp(NOMINAL_GROUND - SURFACE_VARIATION, NOMINAL_GROUND + SURFACE_VARIATION) as f32;
    let mut task_h = Vec::with_capacity(nx * ny);
    let mut flat_h = Vec::with_capacity(nx * ny);
    let mut safe = Vec::with_capacity(nx * ny);
    for (sh, r) in stone_height.iter().zip(&roughness) {
        if sh.is_nan() {
            task_h.push(GAP_DEPTH as f32);
            flat_h.push(clamp(NOMINAL_GROUND + r));
            safe.push(false);
        } else {
            let h = clamp(NOMINAL_GROUND + sh + r);
            task_h.push(h);
            flat_h.push(h);
            safe.push(true);
        }
    }

    Ok(TerrainPair {
        task: HeightField::new(nx, ny, cell, task_h, safe)?,
        flat: HeightField::new(nx, ny, cell, flat_h, vec![true; nx * ny])?,
        spec: spec.clone(),
        layout,
    })
}

/// Cells whose centers fall in `[lo, hi)`, clipped to the grid.
fn cell_span(lo: f64, hi: f64, cell: f64, n: usize) -> Option<(usize, usize)> {
    let first = (lo / cell - 0.5).ceil().max(0.0);
    let end = ((hi / cell - 0.5).ceil()).min(n as f64);
    (end > first).then(|| (first as usize, end as usize))
}

fn stone_offset(rng: &mut impl Rng) -> f64 {
    SURFACE_VARIATION * (2.0 * rng.gen::<f64>() - 1.0)
}

/// Uniform draw in `[-half, half]`; always consumes one value.
fn jitter(rng: &mut impl Rng, half: f64) -> f64 {
    half * (2.0 * rng.gen::<f64>() - 1.0)
}

fn strip_platforms(spec: &TerrainSpec, rng: &mut impl Rng) -> Vec<Stone> {
    let w = spec.extent_y;
    vec![
        Stone { x0: 0.0, y0: 0.0, x1: PLATFORM_LENGTH, y1: w, height: stone_offset(rng) },
        Stone {
            x0: spec.extent_x - PLATFORM_LENGTH,
            y0: 0.0,
            x1: spec.extent_x,
            y1: w,
            height: stone_offset(rng),
        },
    ]
}

fn strip_course(spec: &TerrainSpec) -> Course {
    Course::Strip {
        start: PLATFORM_LENGTH,
        end: spec.extent_x - PLATFORM_LENGTH,
        center_y: 0.5 * spec.extent_y,
    }
}

fn require_strip(spec: &TerrainSpec) -> Result<f64, TerrainError> {
    let section = spec.extent_x - 2.0 * PLATFORM_LENGTH;
    if section <= 0.0 {
        return Err(TerrainError::InvalidSpec(format!(
            "strip of length {} leaves no room between platforms",
            spec.extent_x
        )));
    }
    Ok(section)
}

/// One stone per sub-square of side `size + distance`, jittered inside the margin.
fn stones_everywhere(spec: &TerrainSpec, rng: &mut impl Rng) -> Result<TerrainLayout, TerrainError> {
    let p = curriculum_params(spec.kind, spec.level)?;
    let pitch = p.stone_size + p.stone_gap_x;
    let cols = (spec.extent_x / pitch).ceil() as usize;
    let rows = (spec.extent_y / pitch).ceil() as usize;
    let mut stones = Vec::with_capacity(rows * cols + 1);
    for j in 0..rows {
        for i in 0..cols {
            let cx = (i as f64 + 0.5) * pitch + jitter(rng, 0.5 * p.stone_gap_x);
            let cy = (j as f64 + 0.5) * pitch + jitter(rng, 0.5 * p.stone_gap_y);
            stones.push(Stone::centered(cx, cy, p.stone_size, p.stone_size, stone_offset(rng)));
        }
    }
    let (cx, cy) = (0.5 * spec.extent_x, 0.5 * spec.extent_y);
    stones.push(Stone::centered(cx, cy, p.platform_length, p.platform_length, stone_offset(rng)));
    Ok(TerrainLayout {
        stones,
        region: (0.0, 0.0, spec.extent_x, spec.extent_y),
        course: Course::Field {
            center_x: cx,
            center_y: cy,
            goal_radius: super::FIELD_GOAL_RADIUS.min(0.5 * spec.extent_x.min(spec.extent_y) - 0.25),
        },
    })
}

/// Edge-to-edge gap along the course, uniform in `[d/2, d]` so `d` is never exceeded.
fn course_gap(rng: &mut impl Rng, d: f64) -> f64 {
    d * (0.5 + 0.5 * rng.gen::<f64>())
}

/// Two longitudinal lines of stones. Consecutive stones in a line are at most
/// `stone_gap_x` apart; lateral positions jitter by up to half that distance.
fn stepping_stones(spec: &TerrainSpec, rng: &mut impl Rng) -> Result<TerrainLayout, TerrainError> {
    let section = require_strip(spec)?;
    let p = curriculum_params(spec.kind, spec.level)?;
    let pitch = p.stone_size + p.stone_gap_x;
    let end = PLATFORM_LENGTH + section;
    let cy = 0.5 * spec.extent_y;
    let mut stones = strip_platforms(spec, rng);
    for line in [-0.5, 0.5] {
        let mut x0 = PLATFORM_LENGTH + course_gap(rng, p.stone_gap_x);
        while x0 < end {
            let y = cy + line * pitch + jitter(rng, 0.5 * p.stone_gap_y);
            let h = stone_offset(rng);
            stones.push(Stone::centered(x0 + 0.5 * p.stone_size, y, p.stone_size, p.stone_size, h));
            x0 += p.stone_size + course_gap(rng, p.stone_gap_x);
        }
    }
    Ok(TerrainLayout {
        stones,
        region: (PLATFORM_LENGTH, cy - pitch, end, cy + pitch),
        course: strip_course(spec),
    })
}

/// Two staggered lines of square stones, `stone_gap_y` apart center to
/// center; at the top level they merge into one continuous beam.
fn balancing_beams(spec: &TerrainSpec, rng: &mut impl Rng) -> Result<TerrainLayout, TerrainError> {
    let section = require_strip(spec)?;
    let p = curriculum_params(spec.kind, spec.level)?;
    let pitch = p.stone_size + p.stone_gap_x;
    let cy = 0.5 * spec.extent_y;
    let end = PLATFORM_LENGTH + section;
    let mut stones = strip_platforms(spec, rng);
    for (line, offset) in [(-0.5, 0.0), (0.5, 0.5 * pitch)] {
        let y = cy + line * p.stone_gap_y;
        let mut x = PLATFORM_LENGTH + 0.5 * p.stone_size + offset;
        while x + 0.5 * p.stone_size <= end + 1e-9 {
            stones.push(Stone::centered(x, y, p.stone_size, p.stone_size, stone_offset(rng)));
            x += pitch;
        }
    }
    let half = 0.5 * (p.stone_gap_y + p.stone_size);
    Ok(TerrainLayout {
        stones,
        region: (PLATFORM_LENGTH, cy - half, end, cy + half),
        course: strip_course(spec),
    })
}

/// Full-width beams whose width and spacing follow the stepping-stone law.
fn stepping_beams(spec: &TerrainSpec, rng: &mut impl Rng) -> Result<TerrainLayout, TerrainError> {
    let section = require_strip(spec)?;
    let p = curriculum_params(spec.kind, spec.level)?;
    let end = PLATFORM_LENGTH + section;
    let mut stones = strip_platforms(spec, rng);
    let mut x0 = PLATFORM_LENGTH + course_gap(rng, p.stone_gap_x);
    while x0 < end {
        stones.push(Stone {
            x0,
            y0: 0.0,
            x1: x0 + p.stone_size,
            y1: spec.extent_y,
            height: stone_offset(rng),
        });
        x0 += p.stone_size + course_gap(rng, p.stone_gap_x);
    }
    Ok(TerrainLayout {
        stones,
        region: (PLATFORM_LENGTH, 0.0, end, spec.extent_y),
        course: strip_course(spec),
    })
}

/// Solid strip cut by `gap_count` full-width gaps, one per equal segment of
/// the course, widths uniform in `[0.1, 0.1 + 0.05 l]`.
fn gaps(spec: &TerrainSpec, rng: &mut impl Rng) -> Result<TerrainLayout, TerrainError> {
    let section = require_strip(spec)?;
    let p = curriculum_params(spec.kind, spec.level)?;
    let min_width = 0.1;
    let segment = section / spec.gap_count.max(1) as f64;
    let mut cuts = Vec::with_capacity(spec.gap_count);
    for k in 0..spec.gap_count {
        let width = (min_width + (p.stone_gap_x - min_width) * rng.gen::<f64>()).min(segment);
        let start = PLATFORM_LENGTH + k as f64 * segment + (segment - width) * rng.gen::<f64>();
        cuts.push((start, start + width));
    }
    let mut stones = Vec::with_capacity(spec.gap_count + 1);
    let mut x = 0.0;
    for (g0, g1) in cuts {
        stones.push(Stone { x0: x, y0: 0.0, x1: g0, y1: spec.extent_y, height: stone_offset(rng) });
        x = g1;
    }
    stones.push(Stone { x0: x, y0: 0.0, x1: spec.extent_x, y1: spec.extent_y, height: stone_offset(rng) });
    Ok(TerrainLayout {
        stones,
        region: (PLATFORM_LENGTH, 0.0, PLATFORM_LENGTH + section, spec.extent_y),
        course: strip_course(spec),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::MAX_LEVEL;

    fn spec(kind: TerrainKind, level: u8, seed: u64) -> TerrainSpec {
        TerrainSpec::new(kind, level, seed).unwrap()
    }

    #[test]
    fn gaps_without_gaps_is_flat() {
        let mut s = spec(TerrainKind::Gaps, 5, 11);
        s.gap_count = 0;
        let pair = generate(&s).unwrap();
        assert!(pair.task.safe_mask().iter().all(|&b| b));
        assert_eq!(pair.task, pair.flat);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        for kind in TerrainKind::ALL {
            let a = generate(&spec(kind, 4, 99)).unwrap();
            let b = generate(&spec(kind, 4, 99)).unwrap();
            assert_eq!(a, b);
            let c = generate(&spec(kind, 4, 100)).unwrap();
            assert_ne!(a.task.heights(), c.task.heights());
        }
    }

    #[test]
    fn safe_cells_within_variation_and_gaps_at_depth() {
        for kind in TerrainKind::ALL {
            for level in [0, 4, MAX_LEVEL] {
                let mut s = spec(kind, level, 3);
                s.surface_noise = 0.02;
                let pair = generate(&s).unwrap();
                pair.check_twin().unwrap();
                for (&h, &safe) in pair.task.heights().iter().zip(pair.task.safe_mask()) {
                    if safe {
                        assert!((h as f64).abs() <= SURFACE_VARIATION + 1e-7);
                    } else {
                        assert_eq!(h as f64, GAP_DEPTH);
                    }
                }
            }
        }
    }

    #[test]
    fn stones_are_rigid_plateaus() {
        let pair = generate(&spec(TerrainKind::SteppingStones, 2, 8)).unwrap();
        let stone = pair.layout.stones[3];
        let (cx, cy) = stone.center();
        let h0 = pair.task.height_at(cx, cy).height;
        let h1 = pair.task.height_at(cx + 0.1, cy - 0.1).height;
        assert_eq!(h0, h1);
        assert_eq!(h0, stone.height as f32 as f64);
    }

    #[test]
    fn field_has_central_platform() {
        let pair = generate(&spec(TerrainKind::StonesEverywhere, 8, 1)).unwrap();
        for dx in [-0.45, 0.0, 0.45] {
            for dy in [-0.45, 0.0, 0.45] {
                assert!(pair.task.height_at(4.0 + dx, 4.0 + dy).safe);
            }
        }
    }

    #[test]
    fn top_level_beam_is_continuous() {
        let pair = generate(&spec(TerrainKind::BalancingBeams, 8, 5)).unwrap();
        let mut x = 1.2;
        while x < 8.8 {
            assert!(pair.task.height_at(x, 1.0).safe, "hole at x = {x}");
            x += 0.05;
        }
        // single beam 0.4 m wide, nothing further out
        assert!(!pair.task.height_at(5.0, 1.3).safe);
        assert!(!pair.task.height_at(5.0, 0.7).safe);
    }

    #[test]
    fn cell_span_clips() {
        assert_eq!(cell_span(-1.0, 0.1, 0.05, 10), Some((0, 2)));
        assert_eq!(cell_span(0.4, 9.0, 0.05, 10), Some((8, 10)));
        assert_eq!(cell_span(0.6, 0.9, 0.05, 10), None);
    }
}

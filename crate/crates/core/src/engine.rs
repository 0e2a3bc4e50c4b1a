//! Functional simulator of the convolution-engine ring.
//!
//! Each engine holds one 16x16 imagery tile and computes 3x3 convolutions at
//! the 14x14 interior positions, accumulating exactly into per-filter
//! partial grids. Engines exchange tiles over a cyclic shift network: every
//! rotation step each engine sends its resident tile to one neighbor and
//! receives from the other, so after `ne` steps every engine has seen every
//! set in the active imagery group.
//!
//! Simulation is per rotation step, not per clock cycle; timing lives in the
//! analytic performance model.

use std::fmt;

use crate::dsfp::{self, Accumulator, ActCode, FormatParams};
use crate::graph::{CoefBlock, QuantKernels};
use crate::layout::{LayoutPlan, Rotation};
use crate::{Error, Result};

/// Output positions per tile edge (M).
pub const OUTPUT_TILE: usize = 14;
/// Input tile edge including the one-pixel halo (M + 2).
pub const INPUT_TILE: usize = 16;

/// One imagery set's 16x16 tile, tagged with the set it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageryTile {
    pub set: usize,
    pub codes: Box<[[ActCode; INPUT_TILE]; INPUT_TILE]>,
}

impl ImageryTile {
    pub fn zero(set: usize) -> Self {
        ImageryTile {
            set,
            codes: Box::new([[ActCode::ZERO; INPUT_TILE]; INPUT_TILE]),
        }
    }

    /// Builds a tile by sampling `f(row, col)` over the 16x16 window.
    pub fn from_fn(set: usize, mut f: impl FnMut(usize, usize) -> ActCode) -> Self {
        let mut tile = ImageryTile::zero(set);
        for r in 0..INPUT_TILE {
            for c in 0..INPUT_TILE {
                tile.codes[r][c] = f(r, c);
            }
        }
        tile
    }
}

/// Partial sums for one output filter: a 14x14 accumulator grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialGrid {
    pub acc: [[Accumulator; OUTPUT_TILE]; OUTPUT_TILE],
}

impl PartialGrid {
    pub fn new() -> Self {
        PartialGrid {
            acc: [[Accumulator::ZERO; OUTPUT_TILE]; OUTPUT_TILE],
        }
    }
}

impl Default for PartialGrid {
    fn default() -> Self {
        Self::new()
    }
}

/// Accumulates one coefficient block over the resident tile: 9 MACs into
/// each of the 14x14 partial positions.
pub fn engine_conv_step(
    tile: &ImageryTile,
    block: &CoefBlock,
    partials: &mut PartialGrid,
) -> Result<()> {
    for r in 0..OUTPUT_TILE {
        for c in 0..OUTPUT_TILE {
            let mut acc = partials.acc[r][c];
            for (kr, block_row) in block.iter().enumerate() {
                let tile_row = &tile.codes[r + kr];
                for (kc, &coef) in block_row.iter().enumerate() {
                    acc = acc.mac(tile_row[c + kc], coef)?;
                }
            }
            partials.acc[r][c] = acc;
        }
    }
    Ok(())
}

/// The ring of engines: each slot holds at most one resident tile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingState {
    pub tiles: Vec<Option<ImageryTile>>,
    pub step: usize,
    rotation: Rotation,
}

impl RingState {
    /// Loads one imagery group: engine `e` stores the group's slot-`e` set.
    pub fn load_group(plan: &LayoutPlan, group: usize, tiles: &[ImageryTile]) -> Result<RingState> {
        let slots = plan
            .imagery_groups
            .get(group)
            .ok_or_else(|| Error::Layout(format!("imagery group {group} out of range")))?;
        let loaded = slots
            .iter()
            .map(|slot| match slot {
                Some(set) => {
                    let tile = tiles.get(*set).ok_or_else(|| {
                        Error::PlanMismatch(format!("no tile provided for imagery set {set}"))
                    })?;
                    if tile.set != *set {
                        return Err(Error::PlanMismatch(format!(
                            "tile at index {set} is tagged {}",
                            tile.set
                        )));
                    }
                    Ok(Some(tile.clone()))
                }
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RingState {
            tiles: loaded,
            step: 0,
            rotation: plan.rotation,
        })
    }

    /// One simultaneous exchange: every engine passes its tile to its
    /// neighbor. A pure permutation — nothing is duplicated or lost.
    pub fn rotate(&mut self) {
        match self.rotation {
            Rotation::Downstream => self.tiles.rotate_right(1),
            Rotation::Upstream => self.tiles.rotate_left(1),
        }
        self.step += 1;
    }
}

/// Knobs for [`ring_convolve`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RingOptions {
    pub relu: bool,
    pub pool: bool,
    pub trace: bool,
}

/// One output filter's finished tile: 14x14, or 7x7 after pooling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutTile {
    pub filter: usize,
    pub size: usize,
    pub codes: Vec<ActCode>,
}

impl OutTile {
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> ActCode {
        self.codes[r * self.size + c]
    }
}

/// One schedule-audit record (engine-step granularity).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub imagery_group: usize,
    pub filter_group: usize,
    pub step: usize,
    pub engine: usize,
    pub filter: Option<usize>,
    pub set: Option<usize>,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ig={} fg={} t={} engine={} filter={} set={}",
            self.imagery_group,
            self.filter_group,
            self.step,
            self.engine,
            self.filter.map_or("-".to_string(), |v| v.to_string()),
            self.set.map_or("-".to_string(), |v| v.to_string()),
        )
    }
}

/// Result of a full ring pass over one spatial tile position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingOutput {
    /// One finished tile per filter, ordered by filter index.
    pub filters: Vec<OutTile>,
    /// Number of (imagery group, filter group, rotation step) iterations.
    pub engine_steps: usize,
    pub trace: Vec<TraceRecord>,
}

/// Runs the scheduled convolution of `nim` imagery tiles against `nf`
/// filters on the ring, returning per-filter output tiles.
///
/// Iterates imagery groups, then filter groups, then the `ne` rotation
/// steps, letting every engine accumulate the coefficient block its
/// subgroup schedules for the resident tile. The result is bit-identical to
/// [`direct_convolve`] because integer accumulation is order-independent.
pub fn ring_convolve(
    plan: &LayoutPlan,
    tiles: &[ImageryTile],
    kernels: &QuantKernels,
    params: FormatParams,
    opts: RingOptions,
) -> Result<RingOutput> {
    if tiles.len() != plan.nim {
        return Err(Error::PlanMismatch(format!(
            "plan covers {} imagery sets, got {} tiles",
            plan.nim,
            tiles.len()
        )));
    }
    if kernels.in_channels != plan.nim || kernels.out_channels != plan.nf {
        return Err(Error::PlanMismatch(format!(
            "plan covers {}x{} (filters x sets), kernels are {}x{}",
            plan.nf, plan.nim, kernels.out_channels, kernels.in_channels
        )));
    }

    let mut partials: Vec<PartialGrid> = (0..plan.nf).map(|_| PartialGrid::new()).collect();
    let mut trace = Vec::new();
    let mut engine_steps = 0usize;

    for (gi, _) in plan.imagery_groups.iter().enumerate() {
        let mut ring = RingState::load_group(plan, gi, tiles)?;
        for (gf, fg) in plan.filter_groups.iter().enumerate() {
            for t in 0..plan.ne {
                engine_steps += 1;
                for e in 0..plan.ne {
                    let scheduled = fg.subgroups[gi].schedule[e][t];
                    let resident = ring.tiles[e].as_ref();
                    if opts.trace {
                        trace.push(TraceRecord {
                            imagery_group: gi,
                            filter_group: gf,
                            step: t,
                            engine: e,
                            filter: fg.filters[e],
                            set: resident.map(|tile| tile.set),
                        });
                    }
                    let Some(c) = scheduled else {
                        continue;
                    };
                    let f = fg.filters[e].ok_or_else(|| {
                        Error::PlanMismatch(format!(
                            "engine {e} step {t} schedules set {c} without a filter"
                        ))
                    })?;
                    let tile = resident.ok_or_else(|| {
                        Error::PlanMismatch(format!(
                            "engine {e} step {t} expects set {c} but holds nothing"
                        ))
                    })?;
                    if tile.set != c {
                        return Err(Error::PlanMismatch(format!(
                            "engine {e} step {t} expects set {c} but holds set {}",
                            tile.set
                        )));
                    }
                    engine_conv_step(tile, kernels.block(f, c), &mut partials[f])?;
                }
                ring.rotate();
            }
        }
    }

    let filters = finalize(&partials, kernels, params, opts.relu, opts.pool)?;
    Ok(RingOutput {
        filters,
        engine_steps,
        trace,
    })
}

/// Direct (no ring, no schedule) computation of the same tile convolution:
/// a plain loop over filters, sets, and taps using the identical exact MAC
/// arithmetic. This is the reference the ring path is checked against.
pub fn direct_convolve(
    tiles: &[ImageryTile],
    kernels: &QuantKernels,
    params: FormatParams,
    relu: bool,
    pool: bool,
) -> Result<Vec<OutTile>> {
    if kernels.in_channels != tiles.len() {
        return Err(Error::Shape(format!(
            "kernels expect {} input sets, got {}",
            kernels.in_channels,
            tiles.len()
        )));
    }
    let mut partials: Vec<PartialGrid> = (0..kernels.out_channels)
        .map(|_| PartialGrid::new())
        .collect();
    for (f, grid) in partials.iter_mut().enumerate() {
        for (c, tile) in tiles.iter().enumerate() {
            engine_conv_step(tile, kernels.block(f, c), grid)?;
        }
    }
    finalize(&partials, kernels, params, relu, pool)
}

fn finalize(
    partials: &[PartialGrid],
    kernels: &QuantKernels,
    params: FormatParams,
    relu: bool,
    pool: bool,
) -> Result<Vec<OutTile>> {
    let mut out = Vec::with_capacity(partials.len());
    for (f, grid) in partials.iter().enumerate() {
        let mut codes = Vec::with_capacity(OUTPUT_TILE * OUTPUT_TILE);
        for row in &grid.acc {
            for &acc in row {
                codes.push(dsfp::requantize(acc, kernels.bias[f], relu, params)?);
            }
        }
        let tile = if pool {
            let half = OUTPUT_TILE / 2;
            let mut pooled = Vec::with_capacity(half * half);
            for r in 0..half {
                for c in 0..half {
                    let quad = [
                        codes[2 * r * OUTPUT_TILE + 2 * c],
                        codes[2 * r * OUTPUT_TILE + 2 * c + 1],
                        codes[(2 * r + 1) * OUTPUT_TILE + 2 * c],
                        codes[(2 * r + 1) * OUTPUT_TILE + 2 * c + 1],
                    ];
                    pooled.push(max_code(&quad, params));
                }
            }
            OutTile {
                filter: f,
                size: half,
                codes: pooled,
            }
        } else {
            OutTile {
                filter: f,
                size: OUTPUT_TILE,
                codes,
            }
        };
        out.push(tile);
    }
    Ok(out)
}

/// Largest of a handful of codes by decoded value. Codes produced by
/// requantization are canonical, so equal values mean identical codes and
/// the choice is unambiguous.
pub(crate) fn max_code(codes: &[ActCode], params: FormatParams) -> ActCode {
    let mut best = codes[0];
    let mut best_v = best.value(params);
    for &c in &codes[1..] {
        let v = c.value(params);
        if v > best_v {
            best = c;
            best_v = v;
        }
    }
    best
}

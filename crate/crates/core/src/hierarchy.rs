//! Multi-scale encoder/decoder of Mamba block groups.
//!
//! Each group serializes the grid with the level's ordering, runs its blocks
//! over the sequence and scatters the result back onto the grid. Between
//! encoder groups the grid is average-pooled by 2 on every axis whose size is
//! even and larger than one, then mapped to the next level's width. The
//! decoder mirrors this: a group at the coarsest level, then for each finer
//! level nearest-neighbor unpooling, a channel map back to that level's width,
//! addition of the encoder skip, and that level's group.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::mamba::{BlockCache, MambaBlockParams, MambaConfig};
use crate::nn::{Linear, Parameters};
use crate::ordering::{build_ordering, Ordering, OrderingScheme};
use crate::tensor::{FeatureGrid, GridDims};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub groups: usize,
    pub blocks_per_group: usize,
    pub scheme: OrderingScheme,
    pub base_width: usize,
    /// One width per level; `widths[0] == base_width`.
    pub widths: Vec<usize>,
    pub state_dim: usize,
    pub conv_width: usize,
}

impl HierarchyConfig {
    /// Widths double per level, capped at four times the base.
    pub fn new(base_width: usize, groups: usize) -> Self {
        let widths = (0..groups).map(|l| base_width * (1usize << l.min(2))).collect();
        Self {
            groups,
            blocks_per_group: 2,
            scheme: OrderingScheme::default(),
            base_width,
            widths,
            state_dim: 16,
            conv_width: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.blocks_per_group == 0 {
            return Err(contract("groups and blocks_per_group must be at least 1"));
        }
        if self.widths.len() != self.groups || self.widths.first() != Some(&self.base_width) {
            return Err(contract(format!(
                "need {} level widths starting at {}, got {:?}",
                self.groups, self.base_width, self.widths
            )));
        }
        if self.widths.contains(&0) || self.state_dim == 0 || self.conv_width == 0 {
            return Err(contract("widths, state_dim and conv_width must be positive"));
        }
        Ok(())
    }

    fn block_config(&self, level: usize) -> MambaConfig {
        MambaConfig {
            model_dim: self.widths[level],
            expand_dim: 2 * self.widths[level],
            state_dim: self.state_dim,
            conv_width: self.conv_width,
        }
    }
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self::new(32, 4)
    }
}

/// Per-axis pooling factor: 2 where the size is even and above one.
pub fn pool_factors(dims: GridDims) -> [usize; 3] {
    let f = |n: usize| if n > 1 && n % 2 == 0 { 2 } else { 1 };
    [f(dims.w), f(dims.h), f(dims.d)]
}

fn pooled_dims(dims: GridDims) -> GridDims {
    let [fx, fy, fz] = pool_factors(dims);
    GridDims { w: dims.w / fx, h: dims.h / fy, d: dims.d / fz, c: dims.c }
}

/// Mean over each pooling window.
pub fn avg_pool(grid: &FeatureGrid) -> FeatureGrid {
    let src = grid.dims();
    let [fx, fy, fz] = pool_factors(src);
    let dst = pooled_dims(src);
    let c = src.c;
    let scale = 1.0 / (fx * fy * fz) as f64;
    let mut out = FeatureGrid::zeros(dst);
    for z in 0..src.d {
        for y in 0..src.h {
            for x in 0..src.w {
                let to = dst.linear(x / fx, y / fy, z / fz);
                let from = grid.voxel(src.linear(x, y, z));
                out.voxel_mut(to).iter_mut().zip(from).for_each(|(o, v)| *o += v * scale);
            }
        }
    }
    debug_assert_eq!(out.data().len(), dst.voxels() * c);
    out
}

fn avg_pool_backward(fine: GridDims, dout: &FeatureGrid) -> FeatureGrid {
    let [fx, fy, fz] = pool_factors(fine);
    let coarse = dout.dims();
    let scale = 1.0 / (fx * fy * fz) as f64;
    let mut din = FeatureGrid::zeros(fine.with_channels(coarse.c));
    for z in 0..fine.d {
        for y in 0..fine.h {
            for x in 0..fine.w {
                let from = dout.voxel(coarse.linear(x / fx, y / fy, z / fz));
                din.voxel_mut(fine.linear(x, y, z)).iter_mut().zip(from).for_each(|(o, v)| *o = v * scale);
            }
        }
    }
    din
}

/// Replicates each coarse voxel over its pooling window in `fine`.
fn unpool_nearest(coarse: &FeatureGrid, fine: GridDims) -> FeatureGrid {
    let [fx, fy, fz] = pool_factors(fine);
    let cd = coarse.dims();
    let mut out = FeatureGrid::zeros(fine.with_channels(cd.c));
    for z in 0..fine.d {
        for y in 0..fine.h {
            for x in 0..fine.w {
                let from = coarse.voxel(cd.linear(x / fx, y / fy, z / fz));
                out.voxel_mut(fine.linear(x, y, z)).copy_from_slice(from);
            }
        }
    }
    out
}

fn unpool_nearest_backward(coarse: GridDims, dout: &FeatureGrid) -> FeatureGrid {
    let fine = dout.dims();
    let [fx, fy, fz] = pool_factors(fine);
    let mut din = FeatureGrid::zeros(coarse.with_channels(fine.c));
    for z in 0..fine.d {
        for y in 0..fine.h {
            for x in 0..fine.w {
                let from = dout.voxel(fine.linear(x, y, z));
                din.voxel_mut(coarse.linear(x / fx, y / fy, z / fz))
                    .iter_mut()
                    .zip(from)
                    .for_each(|(o, v)| *o += v);
            }
        }
    }
    din
}

fn map_channels(grid: &FeatureGrid, map: &Linear) -> Result<FeatureGrid> {
    if grid.channels() != map.in_dim {
        return Err(contract(format!(
            "channel map expects {} channels, got {}",
            map.in_dim,
            grid.channels()
        )));
    }
    FeatureGrid::from_vec(grid.dims().with_channels(map.out_dim), map.forward(grid.data()))
}

/// Average pooling followed by the channel map.
pub fn downsample(grid: &FeatureGrid, channel_map: &Linear) -> Result<FeatureGrid> {
    map_channels(&avg_pool(grid), channel_map)
}

/// Nearest-neighbor unpooling to `skip`'s extent, channel map, then `+ skip`.
///
/// `skip` must be the grid whose pooling produced `grid`'s extent.
pub fn upsample(grid: &FeatureGrid, skip: &FeatureGrid, channel_map: &Linear) -> Result<FeatureGrid> {
    let (g, s) = (grid.dims(), skip.dims());
    if !pooled_dims(s).same_spatial(&g) {
        return Err(contract(format!("skip {s} does not pool down to {g}")));
    }
    if channel_map.out_dim != s.c {
        return Err(contract(format!(
            "channel map emits {} channels but skip has {}",
            channel_map.out_dim, s.c
        )));
    }
    // the map is per-voxel, so it commutes with replication
    let mut out = unpool_nearest(&map_channels(grid, channel_map)?, s);
    out.data_mut().iter_mut().zip(skip.data()).for_each(|(o, v)| *o += v);
    Ok(out)
}

fn check_group(grid: &FeatureGrid, blocks: &[MambaBlockParams], ordering: &Ordering) -> Result<()> {
    if !grid.dims().same_spatial(&ordering.dims()) {
        return Err(contract(format!(
            "grid {} does not match ordering {}",
            grid.dims(),
            ordering.dims()
        )));
    }
    if let Some(b) = blocks.iter().find(|b| b.model_dim != grid.channels()) {
        return Err(contract(format!(
            "block width {} does not match grid channels {}",
            b.model_dim,
            grid.channels()
        )));
    }
    Ok(())
}

/// Serialize, apply the blocks in turn, deserialize.
pub fn mamba_group(grid: &FeatureGrid, blocks: &[MambaBlockParams], ordering: &Ordering) -> Result<FeatureGrid> {
    check_group(grid, blocks, ordering)?;
    let c = grid.channels();
    let mut seq = ordering.gather(grid.data(), c);
    for block in blocks {
        seq = block.forward_sequence(&seq, None);
    }
    FeatureGrid::from_vec(grid.dims(), ordering.scatter(&seq, c))
}

#[derive(Default)]
struct GroupCache {
    inputs: Vec<Vec<f64>>,
    blocks: Vec<BlockCache>,
}

fn group_forward_cached(
    grid: &FeatureGrid,
    blocks: &[MambaBlockParams],
    ordering: &Ordering,
) -> Result<(FeatureGrid, GroupCache)> {
    check_group(grid, blocks, ordering)?;
    let c = grid.channels();
    let mut cache = GroupCache::default();
    let mut seq = ordering.gather(grid.data(), c);
    for block in blocks {
        let mut bc = BlockCache::default();
        let next = block.forward_sequence(&seq, Some(&mut bc));
        cache.inputs.push(std::mem::replace(&mut seq, next));
        cache.blocks.push(bc);
    }
    Ok((FeatureGrid::from_vec(grid.dims(), ordering.scatter(&seq, c))?, cache))
}

fn group_backward(
    dout: &FeatureGrid,
    blocks: &[MambaBlockParams],
    ordering: &Ordering,
    cache: &GroupCache,
    grads: &mut [MambaBlockParams],
) -> Result<FeatureGrid> {
    let c = dout.channels();
    let mut dseq = ordering.gather(dout.data(), c);
    for (i, block) in blocks.iter().enumerate().rev() {
        dseq = block.backward_sequence(&cache.inputs[i], &cache.blocks[i], &dseq, &mut grads[i]);
    }
    FeatureGrid::from_vec(dout.dims(), ordering.scatter(&dseq, c))
}

/// Per-level extents and orderings for one input extent.
#[derive(Clone, Debug)]
pub struct LevelPlan {
    dims: Vec<GridDims>,
    orderings: Vec<Ordering>,
}

impl LevelPlan {
    pub fn new(config: &HierarchyConfig, input: GridDims) -> Result<Self> {
        config.validate()?;
        let mut dims = Vec::with_capacity(config.groups);
        let mut cur = input.with_channels(config.widths[0]);
        for l in 0..config.groups {
            if l > 0 {
                cur = pooled_dims(cur).with_channels(config.widths[l]);
            }
            dims.push(cur);
        }
        let orderings = dims.iter().map(|d| build_ordering(config.scheme, *d)).collect::<Result<_>>()?;
        Ok(Self { dims, orderings })
    }

    /// Extent (with width) of every level, finest first.
    pub fn level_dims(&self) -> &[GridDims] {
        &self.dims
    }

    pub fn orderings(&self) -> &[Ordering] {
        &self.orderings
    }
}

/// Encoder skip features, finest level first.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyState {
    pub skips: Vec<FeatureGrid>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyParams {
    pub config: HierarchyConfig,
    pub encoder: Vec<Vec<MambaBlockParams>>,
    pub down: Vec<Linear>,
    pub decoder: Vec<Vec<MambaBlockParams>>,
    pub up: Vec<Linear>,
}

/// Saved activations of one training forward pass.
pub struct HierarchyCache {
    encoder: Vec<GroupCache>,
    pooled: Vec<FeatureGrid>,
    decoder: Vec<GroupCache>,
    coarse: Vec<FeatureGrid>,
}

impl HierarchyParams {
    pub fn init(config: HierarchyConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let g = config.groups;
        let group = |l: usize, rng: &mut _| -> Result<Vec<MambaBlockParams>> {
            (0..config.blocks_per_group).map(|_| MambaBlockParams::init(config.block_config(l), rng)).collect()
        };
        let mut encoder = Vec::with_capacity(g);
        let mut down = Vec::with_capacity(g - 1);
        for l in 0..g {
            encoder.push(group(l, rng)?);
            if l + 1 < g {
                down.push(Linear::init(config.widths[l], config.widths[l + 1], false, rng));
            }
        }
        let mut decoder = Vec::with_capacity(g);
        let mut up = Vec::with_capacity(g - 1);
        for l in 0..g {
            decoder.push(group(l, rng)?);
            if l + 1 < g {
                up.push(Linear::init(config.widths[l + 1], config.widths[l], false, rng));
            }
        }
        Ok(Self { config, encoder, down, decoder, up })
    }

    fn check_plan(&self, plan: &LevelPlan, grid: &FeatureGrid) -> Result<()> {
        if plan.dims.len() != self.config.groups || !plan.dims[0].same_spatial(&grid.dims()) {
            return Err(contract("level plan does not match the hierarchy or the input extent"));
        }
        if grid.channels() != self.config.base_width {
            return Err(contract(format!(
                "hierarchy expects {} input channels, got {}",
                self.config.base_width,
                grid.channels()
            )));
        }
        Ok(())
    }

    pub fn encoder_forward(&self, plan: &LevelPlan, grid: &FeatureGrid) -> Result<(FeatureGrid, HierarchyState)> {
        self.check_plan(plan, grid)?;
        let g = self.config.groups;
        let mut skips = Vec::with_capacity(g - 1);
        let mut x = grid.clone();
        for l in 0..g {
            x = mamba_group(&x, &self.encoder[l], &plan.orderings[l])?;
            if l + 1 < g {
                let next = downsample(&x, &self.down[l])?;
                skips.push(x);
                x = next;
            }
        }
        Ok((x, HierarchyState { skips }))
    }

    pub fn decoder_forward(
        &self,
        plan: &LevelPlan,
        latent: &FeatureGrid,
        state: &HierarchyState,
    ) -> Result<FeatureGrid> {
        let g = self.config.groups;
        if state.skips.len() != g - 1 {
            return Err(contract(format!("expected {} skips, got {}", g - 1, state.skips.len())));
        }
        let mut x = mamba_group(latent, &self.decoder[g - 1], &plan.orderings[g - 1])?;
        for l in (0..g - 1).rev() {
            x = upsample(&x, &state.skips[l], &self.up[l])?;
            x = mamba_group(&x, &self.decoder[l], &plan.orderings[l])?;
        }
        Ok(x)
    }

    /// `decoder(encoder(grid))`; output extent and width equal the input's.
    pub fn forward(&self, plan: &LevelPlan, grid: &FeatureGrid) -> Result<FeatureGrid> {
        let (latent, state) = self.encoder_forward(plan, grid)?;
        self.decoder_forward(plan, &latent, &state)
    }

    pub fn forward_cached(&self, plan: &LevelPlan, grid: &FeatureGrid) -> Result<(FeatureGrid, HierarchyCache)> {
        self.check_plan(plan, grid)?;
        let g = self.config.groups;
        let mut cache = HierarchyCache {
            encoder: Vec::with_capacity(g),
            pooled: Vec::with_capacity(g - 1),
            decoder: Vec::with_capacity(g),
            coarse: Vec::with_capacity(g - 1),
        };
        let mut skips = Vec::with_capacity(g - 1);
        let mut x = grid.clone();
        for l in 0..g {
            let (y, gc) = group_forward_cached(&x, &self.encoder[l], &plan.orderings[l])?;
            cache.encoder.push(gc);
            x = y;
            if l + 1 < g {
                let pooled = avg_pool(&x);
                let next = map_channels(&pooled, &self.down[l])?;
                cache.pooled.push(pooled);
                skips.push(x);
                x = next;
            }
        }
        let (mut x, gc) = group_forward_cached(&x, &self.decoder[g - 1], &plan.orderings[g - 1])?;
        let mut dec_caches = vec![gc];
        let mut coarse = Vec::with_capacity(g - 1);
        for l in (0..g - 1).rev() {
            let up = upsample(&x, &skips[l], &self.up[l])?;
            coarse.push(x);
            let (y, gc) = group_forward_cached(&up, &self.decoder[l], &plan.orderings[l])?;
            dec_caches.push(gc);
            x = y;
        }
        // store decoder caches and coarse inputs indexed by level
        dec_caches.reverse();
        coarse.reverse();
        cache.decoder = dec_caches;
        cache.coarse = coarse;
        Ok((x, cache))
    }

    /// Accumulates parameter gradients into `grad`; returns `dL/dinput`.
    pub fn backward(
        &self,
        plan: &LevelPlan,
        cache: &HierarchyCache,
        dout: &FeatureGrid,
        grad: &mut HierarchyParams,
    ) -> Result<FeatureGrid> {
        let g = self.config.groups;
        let mut dskips = Vec::with_capacity(g - 1);
        let mut dx = dout.clone();
        for l in 0..g - 1 {
            dx = group_backward(&dx, &self.decoder[l], &plan.orderings[l], &cache.decoder[l], &mut grad.decoder[l])?;
            let coarse = &cache.coarse[l];
            let dmapped = unpool_nearest_backward(coarse.dims().with_channels(self.up[l].out_dim), &dx);
            dskips.push(dx);
            dx = FeatureGrid::from_vec(coarse.dims(), self.up[l].backward(coarse.data(), dmapped.data(), &mut grad.up[l]))?;
        }
        dx = group_backward(&dx, &self.decoder[g - 1], &plan.orderings[g - 1], &cache.decoder[g - 1], &mut grad.decoder[g - 1])?;
        for l in (0..g).rev() {
            if l + 1 < g {
                let pooled = &cache.pooled[l];
                let dpooled = self.down[l].backward(pooled.data(), dx.data(), &mut grad.down[l]);
                let dpooled = FeatureGrid::from_vec(pooled.dims(), dpooled)?;
                let mut d = avg_pool_backward(plan.dims[l], &dpooled);
                d.data_mut().iter_mut().zip(dskips[l].data()).for_each(|(a, b)| *a += b);
                dx = d;
            }
            dx = group_backward(&dx, &self.encoder[l], &plan.orderings[l], &cache.encoder[l], &mut grad.encoder[l])?;
        }
        Ok(dx)
    }
}

impl Parameters for HierarchyParams {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        self.encoder.iter().flatten().for_each(|b| v.extend(b.params()));
        self.down.iter().for_each(|m| v.extend(m.params()));
        self.decoder.iter().flatten().for_each(|b| v.extend(b.params()));
        self.up.iter().for_each(|m| v.extend(m.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        self.encoder.iter_mut().flatten().for_each(|b| v.extend(b.params_mut()));
        self.down.iter_mut().for_each(|m| v.extend(m.params_mut()));
        self.decoder.iter_mut().flatten().for_each(|b| v.extend(b.params_mut()));
        self.up.iter_mut().for_each(|m| v.extend(m.params_mut()));
        v
    }
}

/// Builds the level plan for `grid` and runs the encoder.
pub fn encoder_forward(params: &HierarchyParams, grid: &FeatureGrid) -> Result<(FeatureGrid, HierarchyState)> {
    let plan = LevelPlan::new(&params.config, grid.dims())?;
    params.encoder_forward(&plan, grid)
}

/// Runs the decoder; the level plan is rebuilt from the finest skip (or the
/// latent when there is a single group).
pub fn decoder_forward(params: &HierarchyParams, latent: &FeatureGrid, state: &HierarchyState) -> Result<FeatureGrid> {
    let finest = state.skips.first().unwrap_or(latent).dims();
    let plan = LevelPlan::new(&params.config, finest)?;
    params.decoder_forward(&plan, latent, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordering::{apply_ordering, invert_ordering, Scheme};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(dims: GridDims, seed: u64) -> FeatureGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureGrid::from_vec(dims, crate::nn::uniform(&mut rng, dims.voxels() * dims.c, 1.0)).unwrap()
    }

    fn small_config(base: usize, groups: usize) -> HierarchyConfig {
        HierarchyConfig { state_dim: 4, ..HierarchyConfig::new(base, groups) }
    }

    #[test]
    fn default_widths() {
        let c = HierarchyConfig::new(8, 5);
        assert_eq!(c.widths, vec![8, 16, 32, 32, 32]);
        assert_eq!(c.blocks_per_group, 2);
        assert_eq!(HierarchyConfig::default().groups, 4);
    }

    #[test]
    fn zero_update_group_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random(GridDims::new(4, 3, 2, 4).unwrap(), 2);
        let mut blocks: Vec<_> = (0..2)
            .map(|_| MambaBlockParams::init(MambaConfig::new(4).with_state_dim(3), &mut rng).unwrap())
            .collect();
        blocks.iter_mut().for_each(|b| b.out_proj.weight.fill(0.0));
        let o = build_ordering(Scheme::Hilbert3d, g.dims()).unwrap();
        assert_eq!(mamba_group(&g, &blocks, &o).unwrap(), g);
    }

    #[test]
    fn group_matches_manual_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random(GridDims::new(2, 2, 2, 4).unwrap(), 4);
        let blocks: Vec<_> = (0..2)
            .map(|_| MambaBlockParams::init(MambaConfig::new(4).with_state_dim(2), &mut rng).unwrap())
            .collect();
        let o = build_ordering(Scheme::HeightPrioritizedHilbert2d, g.dims()).unwrap();
        let seq = apply_ordering(&g, &o).unwrap();
        let seq = crate::mamba::mamba_block_forward(&blocks[0], &seq).unwrap();
        let seq = crate::mamba::mamba_block_forward(&blocks[1], &seq).unwrap();
        let expected = invert_ordering(&seq, &o).unwrap();
        assert_eq!(mamba_group(&g, &blocks, &o).unwrap(), expected);
    }

    #[test]
    fn group_shape_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random(GridDims::new(8, 8, 4, 16).unwrap(), 6);
        let blocks = vec![MambaBlockParams::init(MambaConfig::new(16).with_state_dim(4), &mut rng).unwrap()];
        let o = build_ordering(Scheme::RasterXyz, g.dims()).unwrap();
        assert_eq!(mamba_group(&g, &blocks, &o).unwrap().dims(), g.dims());
        let wrong = build_ordering(Scheme::RasterXyz, GridDims::spatial(8, 8, 3).unwrap()).unwrap();
        assert!(mamba_group(&g, &blocks, &wrong).is_err());
        let narrow = random(GridDims::new(8, 8, 4, 8).unwrap(), 6);
        assert!(mamba_group(&narrow, &blocks, &o).is_err());
    }

    #[test]
    fn pooling_examples() {
        let constant = FeatureGrid::from_vec(GridDims::new(4, 6, 2, 2).unwrap(), vec![3.0; 96]).unwrap();
        let p = downsample(&constant, &Linear::identity(2)).unwrap();
        assert_eq!(p.dims(), GridDims::new(2, 3, 1, 2).unwrap());
        assert!(p.data().iter().all(|&v| v == 3.0));

        let block = FeatureGrid::from_vec(GridDims::new(2, 2, 2, 1).unwrap(), (0..8).map(f64::from).collect()).unwrap();
        assert_eq!(downsample(&block, &Linear::identity(1)).unwrap().data(), &[3.5]);

        let mut d = GridDims::spatial(16, 16, 8).unwrap();
        for _ in 0..3 {
            d = pooled_dims(d);
        }
        assert_eq!((d.w, d.h, d.d), (2, 2, 1));
        assert_eq!(pool_factors(GridDims::spatial(5, 1, 6).unwrap()), [1, 1, 2]);
    }

    #[test]
    fn upsample_adds_skip_and_checks_shapes() {
        let coarse = FeatureGrid::from_vec(GridDims::new(1, 1, 1, 1).unwrap(), vec![2.0]).unwrap();
        let skip = FeatureGrid::from_vec(GridDims::new(2, 2, 2, 1).unwrap(), (0..8).map(f64::from).collect()).unwrap();
        let up = upsample(&coarse, &skip, &Linear::identity(1)).unwrap();
        assert_eq!(up.data(), &(0..8).map(|v| v as f64 + 2.0).collect::<Vec<_>>()[..]);
        let bad = FeatureGrid::zeros(GridDims::new(4, 2, 2, 1).unwrap());
        assert!(upsample(&coarse, &bad, &Linear::identity(1)).is_err());
    }

    #[test]
    fn level_schedule() {
        let cfg = small_config(32, 4);
        let plan = LevelPlan::new(&cfg, GridDims::spatial(16, 16, 8).unwrap()).unwrap();
        let spatial: Vec<_> = plan.level_dims().iter().map(|d| (d.w, d.h, d.d)).collect();
        assert_eq!(spatial, vec![(16, 16, 8), (8, 8, 4), (4, 4, 2), (2, 2, 1)]);
        for (o, d) in plan.orderings().iter().zip(plan.level_dims()) {
            assert!(o.dims().same_spatial(d));
        }
    }

    #[test]
    fn encoder_decoder_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = HierarchyConfig { blocks_per_group: 1, ..small_config(8, 4) };
        let params = HierarchyParams::init(cfg, &mut rng).unwrap();
        let g = random(GridDims::new(16, 16, 8, 8).unwrap(), 8);
        let (latent, state) = encoder_forward(&params, &g).unwrap();
        assert_eq!((latent.dims().w, latent.dims().h, latent.dims().d), (2, 2, 1));
        let skip_dims: Vec<_> = state.skips.iter().map(|s| (s.dims().w, s.dims().h, s.dims().d)).collect();
        assert_eq!(skip_dims, vec![(16, 16, 8), (8, 8, 4), (4, 4, 2)]);
        assert_eq!(decoder_forward(&params, &latent, &state).unwrap().dims(), g.dims());

        let odd = random(GridDims::new(5, 6, 3, 8).unwrap(), 9);
        let plan = LevelPlan::new(&params.config, odd.dims()).unwrap();
        assert_eq!(params.forward(&plan, &odd).unwrap().dims(), odd.dims());
    }

    #[test]
    fn single_group_is_two_plain_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = HierarchyParams::init(small_config(4, 1), &mut rng).unwrap();
        let g = random(GridDims::new(3, 4, 2, 4).unwrap(), 12);
        let plan = LevelPlan::new(&params.config, g.dims()).unwrap();
        let out = params.forward(&plan, &g).unwrap();
        let o = &plan.orderings()[0];
        let expected = mamba_group(&mamba_group(&g, &params.encoder[0], o).unwrap(), &params.decoder[0], o).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn cached_forward_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = HierarchyParams::init(small_config(4, 3), &mut rng).unwrap();
        let g = random(GridDims::new(4, 6, 5, 4).unwrap(), 14);
        let plan = LevelPlan::new(&params.config, g.dims()).unwrap();
        let (cached, _) = params.forward_cached(&plan, &g).unwrap();
        assert_eq!(cached, params.forward(&plan, &g).unwrap());
    }

    #[test]
    fn deterministic_given_seed() {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            HierarchyParams::init(small_config(4, 2), &mut rng).unwrap()
        };
        let (a, b) = (build(), build());
        let g = random(GridDims::new(4, 4, 2, 4).unwrap(), 1);
        let plan = LevelPlan::new(&a.config, g.dims()).unwrap();
        let (ya, yb) = (a.forward(&plan, &g).unwrap(), b.forward(&plan, &g).unwrap());
        assert!(ya.data().iter().zip(yb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

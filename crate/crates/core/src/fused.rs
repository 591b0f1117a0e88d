//! Tiled single-pass kernel for the DROT plan update.
//!
//! One pass over the plan array computes
//!
//! ```text
//! x+_ij = max(x_ij + phi_i + varphi_j - rho c_ij, 0)
//! ```
//!
//! and, while each `x+_ij` is still in a register, accumulates the row sums,
//! column sums and `<C, X+>` needed by the vector recursions and the stopping
//! test. Every plan entry is read once and written once; the cost matrix is
//! read at most once, and not at all on the odd passes of the skip-cost
//! schedule, where the array holds `X - rho C` from the previous pass.
//!
//! The index space is cut into `bs x (ws * bs)` tiles. Workers own whole
//! column bands, so no two workers touch the same cells. Partial sums are
//! kept per tile and merged in tile order, which makes the result independent
//! of the worker count and of scheduling.

use std::ops::Range;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::OtError;
use crate::matrix::Matrix;
use crate::real::Real;

/// Tiling and threading knobs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileConfig {
    /// Rows per tile.
    pub bs: usize,
    /// Tile width in units of `bs` columns.
    pub ws: usize,
    pub workers: usize,
    /// Merge partial sums in a fixed order.
    pub deterministic: bool,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self { bs: 64, ws: 4, workers: 1, deterministic: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tile {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl Tile {
    pub fn cells(&self) -> usize {
        self.rows.len() * self.cols.len()
    }
}

/// A partition of the `m x n` index space into tiles.
///
/// Tiles are stored column band by column band; within a band, top to bottom.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TilePlan {
    pub m: usize,
    pub n: usize,
    pub bs: usize,
    pub ws: usize,
    pub workers: usize,
    pub tiles: Vec<Tile>,
    row_bands: usize,
    tile_cols: usize,
}

impl TilePlan {
    pub fn row_bands(&self) -> usize {
        self.row_bands
    }

    pub fn col_bands(&self) -> usize {
        if self.row_bands == 0 {
            0
        } else {
            self.tiles.len() / self.row_bands
        }
    }

    /// Columns per full tile (`ws * bs`).
    pub fn tile_cols(&self) -> usize {
        self.tile_cols
    }
}

/// Cuts an `m x n` matrix into `bs x (ws*bs)` tiles; corner tiles are smaller.
/// Zero-valued knobs are treated as one.
pub fn plan_tiles(m: usize, n: usize, bs: usize, ws: usize, workers: usize) -> TilePlan {
    let bs = bs.max(1);
    let ws = ws.max(1);
    let tile_cols = ws.saturating_mul(bs);
    let row_bands = m.div_ceil(bs);
    let mut tiles = Vec::with_capacity(row_bands * n.div_ceil(tile_cols));
    for c0 in (0..n).step_by(tile_cols) {
        let cols = c0..(c0 + tile_cols).min(n);
        for r0 in (0..m).step_by(bs) {
            tiles.push(Tile { rows: r0..(r0 + bs).min(m), cols: cols.clone() });
        }
    }
    TilePlan { m, n, bs, ws, workers: workers.max(1), tiles, row_bands, tile_cols }
}

/// What the array holds on entry and what the pass writes back.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PassMode {
    /// Holds `X`; reads `C`; writes `X+`.
    Plain,
    /// Holds `X`; reads `C`; writes `X+ - rho C`.
    FoldWrite,
    /// Holds `X - rho C`; does not read `C`; writes `X+`.
    FoldRead,
}

impl PassMode {
    pub fn reads_cost(self) -> bool {
        !matches!(self, PassMode::FoldRead)
    }

    fn input_is_plain(self) -> bool {
        !matches!(self, PassMode::FoldRead)
    }
}

/// Which reductions a pass computes besides the update and marginal sums.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Reductions {
    /// Everything in [`FusedPassOutput`].
    #[default]
    Full,
    /// Only `<C, X+>`; previous objective, dual residual and step norm are skipped.
    Lean,
}

/// Element counts of large-array traffic during one pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryTraffic {
    pub x_reads: u64,
    pub x_writes: u64,
    pub cost_reads: u64,
}

impl std::ops::AddAssign for MemoryTraffic {
    fn add_assign(&mut self, rhs: Self) {
        self.x_reads += rhs.x_reads;
        self.x_writes += rhs.x_writes;
        self.cost_reads += rhs.cost_reads;
    }
}

/// Reductions produced alongside the update.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedPassOutput<T> {
    /// `X+ e`
    pub row_sums: Vec<T>,
    /// `X+^T f`
    pub col_sums: Vec<T>,
    /// `<C, X+>`; `None` when the pass does not read `C`.
    pub cost_dot: Option<T>,
    /// `<C, X>` of the input plan, when the input is a plain plan and `C` is read.
    pub prev_cost_dot: Option<T>,
    /// `sum [phi_i/rho + varphi_j/rho - c_ij]_+^2` for the input duals.
    pub dual_residual_sq: Option<T>,
    /// `||X+ - X||_F^2` when the input is a plain plan and `C` is read.
    pub step_sq: Option<T>,
    /// Largest entry of `X+`.
    pub max_abs: T,
    pub traffic: MemoryTraffic,
}

impl<T: Real> FusedPassOutput<T> {
    fn empty(m: usize, n: usize, mode: PassMode, with_dual: bool, full: bool) -> Self {
        let reads = mode.reads_cost();
        let extras = reads && full && mode.input_is_plain();
        let zero = T::zero();
        Self {
            row_sums: vec![zero; m],
            col_sums: vec![zero; n],
            cost_dot: reads.then_some(zero),
            prev_cost_dot: extras.then_some(zero),
            dual_residual_sq: (reads && full && with_dual).then_some(zero),
            step_sq: extras.then_some(zero),
            max_abs: zero,
            traffic: MemoryTraffic::default(),
        }
    }
}

/// Scalars accumulated by one tile.
#[derive(Clone, Copy, Debug)]
struct TileScalars<T> {
    cost_dot: T,
    prev_cost_dot: T,
    dual_sq: T,
    step_sq: T,
    max_abs: T,
    probe: T,
}

impl<T: Real> TileScalars<T> {
    fn zero() -> Self {
        let z = T::zero();
        Self { cost_dot: z, prev_cost_dot: z, dual_sq: z, step_sq: z, max_abs: z, probe: z }
    }
}

/// Partial results for every tile of one column band, in tile order.
struct BandPartial<T> {
    /// Per row band: partial row sums of that band's rows.
    row_parts: Vec<Vec<T>>,
    /// Per row band: partial column sums over the band's columns.
    col_parts: Vec<Vec<T>>,
    scalars: Vec<TileScalars<T>>,
    traffic: MemoryTraffic,
}

/// Owns a tile plan and the worker pool that executes it.
pub struct FusedEngine {
    plan: TilePlan,
    config: TileConfig,
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for FusedEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FusedEngine").field("plan", &self.plan).field("config", &self.config).finish()
    }
}

impl FusedEngine {
    pub fn new(m: usize, n: usize, config: TileConfig) -> Result<Self, OtError> {
        let plan = plan_tiles(m, n, config.bs, config.ws, config.workers);
        let pool = if plan.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(plan.workers)
                    .build()
                    .map_err(|e| OtError::InvalidConfig(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self { plan, config, pool })
    }

    pub fn plan(&self) -> &TilePlan {
        &self.plan
    }

    /// One fused update in the given mode with every reduction.
    pub fn pass<T: Real>(
        &self,
        xy: &mut Matrix<T>,
        cost: &Matrix<T>,
        phi: &[T],
        varphi: &[T],
        rho: T,
        mode: PassMode,
    ) -> Result<FusedPassOutput<T>, OtError> {
        self.pass_with(xy, cost, phi, varphi, rho, mode, Reductions::Full)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn pass_with<T: Real>(
        &self,
        xy: &mut Matrix<T>,
        cost: &Matrix<T>,
        phi: &[T],
        varphi: &[T],
        rho: T,
        mode: PassMode,
        reductions: Reductions,
    ) -> Result<FusedPassOutput<T>, OtError> {
        let (m, n) = (self.plan.m, self.plan.n);
        xy.check_shape(m, n)?;
        cost.check_shape(m, n)?;
        if phi.len() != m || varphi.len() != n {
            return Err(OtError::ShapeMismatch { expected: (m, n), found: (phi.len(), varphi.len()) });
        }
        let full = reductions == Reductions::Full;
        let with_dual = full && rho > T::zero();
        let mu: Vec<T> = if with_dual { phi.iter().map(|&v| v / rho).collect() } else { Vec::new() };
        let nu: Vec<T> = if with_dual { varphi.iter().map(|&v| v / rho).collect() } else { Vec::new() };
        let ctx = KernelCtx {
            plan: &self.plan,
            cost,
            phi,
            varphi,
            mu: &mu,
            nu: &nu,
            rho,
            mode,
            full,
        };
        let mut out = FusedPassOutput::empty(m, n, mode, with_dual, full);
        if m == 0 || n == 0 {
            return Ok(out);
        }
        let band_len = m * self.plan.tile_cols;
        let data = xy.as_mut_slice();
        let probe = if self.config.deterministic {
            let run = |data: &mut [T]| -> Vec<BandPartial<T>> {
                data.par_chunks_mut(band_len)
                    .enumerate()
                    .map(|(band, chunk)| ctx.band(band, chunk))
                    .collect()
            };
            let parts = match &self.pool {
                Some(pool) => pool.install(|| run(data)),
                None => data
                    .chunks_mut(band_len)
                    .enumerate()
                    .map(|(band, chunk)| ctx.band(band, chunk))
                    .collect(),
            };
            merge_in_order(&self.plan, parts, &mut out)
        } else {
            let shared = Mutex::new((out, T::zero()));
            let run = |data: &mut [T]| {
                data.par_chunks_mut(band_len).enumerate().for_each(|(band, chunk)| {
                    let part = ctx.band(band, chunk);
                    let mut guard = shared.lock().expect("poisoned accumulator");
                    let (acc, probe) = &mut *guard;
                    *probe = *probe + merge_band(&self.plan, band, part, acc);
                });
            };
            match &self.pool {
                Some(pool) => pool.install(|| run(data)),
                None => run(data),
            }
            let (acc, probe) = shared.into_inner().expect("poisoned accumulator");
            out = acc;
            probe
        };
        if !probe.is_finite() || !out.max_abs.is_finite() {
            return Err(OtError::NonFiniteIterate { iteration: 0 });
        }
        Ok(out)
    }
}

struct KernelCtx<'a, T> {
    plan: &'a TilePlan,
    cost: &'a Matrix<T>,
    phi: &'a [T],
    varphi: &'a [T],
    mu: &'a [T],
    nu: &'a [T],
    rho: T,
    mode: PassMode,
    full: bool,
}

const LANES: usize = 4;

impl<T: Real> KernelCtx<'_, T> {
    /// Processes every tile of column band `band`; `chunk` is that band's
    /// slice of the column-major array.
    fn band(&self, band: usize, chunk: &mut [T]) -> BandPartial<T> {
        let m = self.plan.m;
        let col0 = band * self.plan.tile_cols;
        let ncols = chunk.len() / m;
        let bs = self.plan.bs;
        let bands: Vec<Range<usize>> = (0..m).step_by(bs).map(|r0| r0..(r0 + bs).min(m)).collect();
        let mut part = BandPartial {
            row_parts: bands.iter().map(|rows| vec![T::zero(); rows.len()]).collect(),
            col_parts: vec![vec![T::zero(); ncols]; bands.len()],
            scalars: vec![TileScalars::zero(); bands.len()],
            traffic: MemoryTraffic::default(),
        };
        // columns outer, row tiles inner; each tile's partials stay in column order
        for jl in 0..ncols {
            let j = col0 + jl;
            let (x_col, c_col) = (&mut chunk[jl * m..(jl + 1) * m], self.cost.col(j));
            for (t, rows) in bands.iter().enumerate() {
                let x = &mut x_col[rows.clone()];
                let c = &c_col[rows.clone()];
                part.col_parts[t][jl] = self.column(x, c, rows.clone(), j, &mut part.row_parts[t], &mut part.scalars[t]);
            }
        }
        let cells = (m * ncols) as u64;
        part.traffic = MemoryTraffic {
            x_reads: cells,
            x_writes: cells,
            cost_reads: if self.mode.reads_cost() { cells } else { 0 },
        };
        part
    }

    /// Updates one column segment of a tile and returns its column sum.
    #[inline]
    fn column(
        &self,
        x: &mut [T],
        c: &[T],
        rows: Range<usize>,
        j: usize,
        row_acc: &mut [T],
        sc: &mut TileScalars<T>,
    ) -> T {
        let vphi = self.varphi[j];
        let phi = &self.phi[rows.clone()];
        match self.mode {
            PassMode::FoldRead => fold_read_column(x, phi, vphi, row_acc, sc),
            PassMode::Plain | PassMode::FoldWrite => {
                let cell = CellCtx { rho: self.rho, vphi, nu_j: self.nu.get(j).copied().unwrap_or_else(T::zero) };
                let mu = if self.mu.is_empty() { phi } else { &self.mu[rows] };
                match (self.mode == PassMode::FoldWrite, self.full, !self.mu.is_empty()) {
                    (false, false, _) => plain_column::<T, false, false, false>(x, c, phi, mu, row_acc, sc, cell),
                    (false, true, false) => plain_column::<T, false, true, false>(x, c, phi, mu, row_acc, sc, cell),
                    (false, true, true) => plain_column::<T, false, true, true>(x, c, phi, mu, row_acc, sc, cell),
                    (true, false, _) => plain_column::<T, true, false, false>(x, c, phi, mu, row_acc, sc, cell),
                    (true, true, false) => plain_column::<T, true, true, false>(x, c, phi, mu, row_acc, sc, cell),
                    (true, true, true) => plain_column::<T, true, true, true>(x, c, phi, mu, row_acc, sc, cell),
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
struct CellCtx<T> {
    rho: T,
    vphi: T,
    nu_j: T,
}

/// Per-lane accumulators of one column segment.
struct Lanes<T> {
    col: [T; LANES],
    dot: [T; LANES],
    prev: [T; LANES],
    dual: [T; LANES],
    step: [T; LANES],
    probe: [T; LANES],
    maxv: [T; LANES],
}

impl<T: Real> Lanes<T> {
    fn zero() -> Self {
        let z = [T::zero(); LANES];
        Self { col: z, dot: z, prev: z, dual: z, step: z, probe: z, maxv: z }
    }

    #[inline(always)]
    #[allow(clippy::too_many_arguments, clippy::eq_op)]
    fn cell<const FOLD: bool, const FULL: bool, const DUAL: bool>(
        &mut self,
        k: usize,
        x: &mut T,
        cv: T,
        ph: T,
        mu: T,
        racc: &mut T,
        cell: CellCtx<T>,
    ) {
        let zero = T::zero();
        let xv = *x;
        let rc = cell.rho * cv;
        let t = (xv - rc) + ph + cell.vphi;
        let xp = t.max(zero);
        *x = if FOLD { xp - rc } else { xp };
        *racc = *racc + xp;
        self.col[k] = self.col[k] + xp;
        self.dot[k] = self.dot[k] + cv * xp;
        if FULL {
            self.prev[k] = self.prev[k] + cv * xv;
            let d = xp - xv;
            self.step[k] = self.step[k] + d * d;
        }
        if DUAL {
            let s = (mu + cell.nu_j - cv).max(zero);
            self.dual[k] = self.dual[k] + s * s;
        }
        self.probe[k] = self.probe[k] + (t - t);
        self.maxv[k] = self.maxv[k].max(xp);
    }
}

#[inline(always)]
fn plain_column<T: Real, const FOLD: bool, const FULL: bool, const DUAL: bool>(
    x: &mut [T],
    c: &[T],
    phi: &[T],
    mu: &[T],
    row_acc: &mut [T],
    sc: &mut TileScalars<T>,
    cell: CellCtx<T>,
) -> T {
    let mut lanes = Lanes::zero();
    let len = x.len();
    let body = len - len % LANES;
    let (xb, xt) = x.split_at_mut(body);
    let (rb, rt) = row_acc.split_at_mut(body);
    for (((xc, cc), (pc, mc)), rc) in xb
        .chunks_exact_mut(LANES)
        .zip(c[..body].chunks_exact(LANES))
        .zip(phi[..body].chunks_exact(LANES).zip(mu[..body].chunks_exact(LANES)))
        .zip(rb.chunks_exact_mut(LANES))
    {
        for k in 0..LANES {
            lanes.cell::<FOLD, FULL, DUAL>(k, &mut xc[k], cc[k], pc[k], mc[k], &mut rc[k], cell);
        }
    }
    for (l, (xv, racc)) in xt.iter_mut().zip(rt).enumerate() {
        let i = body + l;
        lanes.cell::<FOLD, FULL, DUAL>(0, xv, c[i], phi[i], mu[i], racc, cell);
    }
    sc.cost_dot = sc.cost_dot + lane_sum(lanes.dot);
    sc.prev_cost_dot = sc.prev_cost_dot + lane_sum(lanes.prev);
    sc.dual_sq = sc.dual_sq + lane_sum(lanes.dual);
    sc.step_sq = sc.step_sq + lane_sum(lanes.step);
    sc.probe = sc.probe + lane_sum(lanes.probe);
    sc.max_abs = lanes.maxv.iter().fold(sc.max_abs, |a, &b| a.max(b));
    lane_sum(lanes.col)
}

#[inline(always)]
#[allow(clippy::eq_op)]
fn fold_read_column<T: Real>(x: &mut [T], phi: &[T], vphi: T, row_acc: &mut [T], sc: &mut TileScalars<T>) -> T {
    let zero = T::zero();
    let mut col = [zero; LANES];
    let mut probe = [zero; LANES];
    let mut maxv = [zero; LANES];
    let mut step = |k: usize, xv: &mut T, ph: T, racc: &mut T| {
        let t = *xv + ph + vphi;
        let xp = t.max(zero);
        *xv = xp;
        *racc = *racc + xp;
        col[k] = col[k] + xp;
        probe[k] = probe[k] + (t - t);
        maxv[k] = maxv[k].max(xp);
    };
    let len = x.len();
    let body = len - len % LANES;
    let (xb, xt) = x.split_at_mut(body);
    let (rb, rt) = row_acc.split_at_mut(body);
    for ((xc, pc), rc) in xb.chunks_exact_mut(LANES).zip(phi[..body].chunks_exact(LANES)).zip(rb.chunks_exact_mut(LANES)) {
        for k in 0..LANES {
            step(k, &mut xc[k], pc[k], &mut rc[k]);
        }
    }
    for (l, (xv, racc)) in xt.iter_mut().zip(rt).enumerate() {
        step(0, xv, phi[body + l], racc);
    }
    sc.probe = sc.probe + lane_sum(probe);
    sc.max_abs = maxv.iter().fold(sc.max_abs, |a, &b| a.max(b));
    lane_sum(col)
}

#[inline]
fn lane_sum<T: Real>(lanes: [T; LANES]) -> T {
    let mut width = LANES;
    let mut l = lanes;
    while width > 1 {
        width /= 2;
        for k in 0..width {
            l[k] = l[k] + l[k + width];
        }
    }
    l[0]
}

/// Folds one band's partials into `out`; returns the band's probe sum.
fn merge_band<T: Real>(
    plan: &TilePlan,
    band: usize,
    part: BandPartial<T>,
    out: &mut FusedPassOutput<T>,
) -> T {
    let col0 = band * plan.tile_cols;
    let mut probe = T::zero();
    for (rb, ((rows, cols), sc)) in
        part.row_parts.into_iter().zip(part.col_parts).zip(part.scalars).enumerate()
    {
        let r0 = rb * plan.bs;
        for (acc, v) in out.row_sums[r0..r0 + rows.len()].iter_mut().zip(rows) {
            *acc = *acc + v;
        }
        for (acc, v) in out.col_sums[col0..col0 + cols.len()].iter_mut().zip(cols) {
            *acc = *acc + v;
        }
        if let Some(d) = out.cost_dot.as_mut() {
            *d = *d + sc.cost_dot;
        }
        if let Some(d) = out.prev_cost_dot.as_mut() {
            *d = *d + sc.prev_cost_dot;
        }
        if let Some(d) = out.dual_residual_sq.as_mut() {
            *d = *d + sc.dual_sq;
        }
        if let Some(d) = out.step_sq.as_mut() {
            *d = *d + sc.step_sq;
        }
        out.max_abs = out.max_abs.max(sc.max_abs);
        probe = probe + sc.probe;
    }
    out.traffic += part.traffic;
    probe
}

fn merge_in_order<T: Real>(
    plan: &TilePlan,
    parts: Vec<BandPartial<T>>,
    out: &mut FusedPassOutput<T>,
) -> T {
    let mut probe = T::zero();
    for (band, part) in parts.into_iter().enumerate() {
        probe = probe + merge_band(plan, band, part, out);
    }
    probe
}

/// Single fused update `X <- [X + phi e^T + f varphi^T - rho C]_+`.
pub fn fused_pass<T: Real>(
    xy: &mut Matrix<T>,
    cost: &Matrix<T>,
    phi: &[T],
    varphi: &[T],
    rho: T,
    plan: &TilePlan,
) -> Result<FusedPassOutput<T>, OtError> {
    engine_for(plan, true)?.pass(xy, cost, phi, varphi, rho, PassMode::Plain)
}

/// Skip-cost variant. `folded` states whether the array currently holds
/// `X - rho C`; it must match `state`, which is toggled on success.
/// Unfolded input is updated reading `C` and written back as `X+ - rho C`;
/// folded input is updated without touching `C` and written back as `X+`.
#[allow(clippy::too_many_arguments)]
pub fn fused_pass_skip_cost<T: Real>(
    xy: &mut Matrix<T>,
    cost: &Matrix<T>,
    phi: &[T],
    varphi: &[T],
    rho: T,
    plan: &TilePlan,
    state: &mut bool,
    folded: bool,
) -> Result<FusedPassOutput<T>, OtError> {
    if *state != folded {
        return Err(OtError::FoldStateMismatch { expected: folded, actual: *state });
    }
    let mode = if folded { PassMode::FoldRead } else { PassMode::FoldWrite };
    let out = engine_for(plan, true)?.pass(xy, cost, phi, varphi, rho, mode)?;
    *state = !*state;
    Ok(out)
}

fn engine_for(plan: &TilePlan, deterministic: bool) -> Result<FusedEngine, OtError> {
    FusedEngine::new(
        plan.m,
        plan.n,
        TileConfig { bs: plan.bs, ws: plan.ws, workers: plan.workers, deterministic },
    )
}

/// Unfused reference: update, row sums, column sums and `<C, X+>` as four
/// separate sweeps over the array.
pub fn unfused_pass<T: Real>(
    xy: &mut Matrix<T>,
    cost: &Matrix<T>,
    phi: &[T],
    varphi: &[T],
    rho: T,
) -> Result<FusedPassOutput<T>, OtError> {
    let (m, n) = cost.shape();
    xy.check_shape(m, n)?;
    if phi.len() != m || varphi.len() != n {
        return Err(OtError::ShapeMismatch { expected: (m, n), found: (phi.len(), varphi.len()) });
    }
    let zero = T::zero();
    let mut max_abs = zero;
    for j in 0..n {
        let vphi = varphi[j];
        for ((x, &c), &ph) in xy.col_mut(j).iter_mut().zip(cost.col(j)).zip(phi) {
            let t = (*x - rho * c) + ph + vphi;
            *x = if t > zero { t } else { zero };
            max_abs = max_abs.max(*x);
        }
    }
    let row_sums = xy.row_sums();
    let col_sums = xy.col_sums();
    let cost_dot = cost.dot(xy);
    if !xy.all_finite() {
        return Err(OtError::NonFiniteIterate { iteration: 0 });
    }
    let cells = (m * n) as u64;
    Ok(FusedPassOutput {
        row_sums,
        col_sums,
        cost_dot: Some(cost_dot),
        prev_cost_dot: None,
        dual_residual_sq: None,
        step_sq: None,
        max_abs,
        traffic: MemoryTraffic { x_reads: 4 * cells, x_writes: cells, cost_reads: 2 * cells },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn covers_exactly_once(plan: &TilePlan) -> bool {
        let mut seen = vec![0u8; plan.m * plan.n];
        for t in &plan.tiles {
            for j in t.cols.clone() {
                for i in t.rows.clone() {
                    seen[j * plan.m + i] += 1;
                }
            }
        }
        seen.iter().all(|&s| s == 1)
    }

    #[test]
    fn exact_partition() {
        let plan = plan_tiles(4, 4, 2, 1, 1);
        assert_eq!(plan.tiles.len(), 4);
        assert!(plan.tiles.iter().all(|t| t.rows.len() == 2 && t.cols.len() == 2));
        assert!(covers_exactly_once(&plan));
    }

    #[test]
    fn corner_tiles_are_smaller() {
        let plan = plan_tiles(5, 3, 2, 2, 1);
        assert!(covers_exactly_once(&plan));
        assert_eq!(plan.tiles.iter().map(Tile::cells).sum::<usize>(), 15);
        assert!(plan.tiles.iter().any(|t| t.rows.len() == 1));
        assert!(plan.tiles.iter().all(|t| t.cols.len() == 3));
    }

    #[test]
    fn large_tile_is_single() {
        let plan = plan_tiles(5, 7, 8, 1, 3);
        assert_eq!(plan.tiles, vec![Tile { rows: 0..5, cols: 0..7 }]);
    }

    #[test]
    fn identity_pass() {
        let x0 = Matrix::from_rows(&[[0.1, 0.2, 0.0], [0.3, 0.0, 0.4]]);
        let cost = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let mut x = x0.clone();
        let plan = plan_tiles(2, 3, 1, 1, 1);
        let out = fused_pass(&mut x, &cost, &[0.0; 2], &[0.0; 3], 0.0, &plan).unwrap();
        assert_eq!(x, x0);
        assert_eq!(out.row_sums, x0.row_sums());
        assert_eq!(out.col_sums, x0.col_sums());
        assert!(f64::abs(out.cost_dot.unwrap() - cost.dot(&x0)) < 1e-15);
        assert_eq!(out.dual_residual_sq, None);
    }

    #[test]
    fn full_clamp() {
        let mut x = Matrix::filled(3, 2, 0.1);
        let cost = Matrix::filled(3, 2, 1.0);
        let plan = plan_tiles(3, 2, 2, 1, 1);
        let out = fused_pass(&mut x, &cost, &[-0.5; 3], &[0.0; 2], 1.0, &plan).unwrap();
        assert!(x.as_slice().iter().all(|&v| v == 0.0));
        assert!(out.row_sums.iter().chain(&out.col_sums).all(|&v| v == 0.0));
        assert_eq!(out.cost_dot, Some(0.0));
    }

    #[test]
    fn wrong_fold_flag_is_rejected() {
        let mut x = Matrix::filled(2, 2, 0.25);
        let cost = Matrix::filled(2, 2, 1.0);
        let plan = plan_tiles(2, 2, 2, 1, 1);
        let mut state = false;
        let err = fused_pass_skip_cost(&mut x, &cost, &[0.0; 2], &[0.0; 2], 0.1, &plan, &mut state, true)
            .unwrap_err();
        assert_eq!(err, OtError::FoldStateMismatch { expected: true, actual: false });
        assert!(!state);
    }

    #[test]
    fn non_finite_input_is_reported() {
        let mut x = Matrix::filled(2, 2, 0.25);
        x.set(1, 1, f64::INFINITY);
        let cost = Matrix::filled(2, 2, 1.0);
        let plan = plan_tiles(2, 2, 1, 1, 1);
        assert!(matches!(
            fused_pass(&mut x, &cost, &[0.0; 2], &[0.0; 2], 0.1, &plan),
            Err(OtError::NonFiniteIterate { .. })
        ));
        let mut x = Matrix::filled(2, 2, 0.25);
        assert!(matches!(
            fused_pass(&mut x, &cost, &[f64::NAN, 0.0], &[0.0; 2], 0.1, &plan),
            Err(OtError::NonFiniteIterate { .. })
        ));
    }
}

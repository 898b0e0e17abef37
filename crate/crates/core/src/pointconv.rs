//! PointConv discriminator over coordinate/feature sets.
//!
//! A PointConv layer computes, at each query `x`,
//! `f_out(x) = Σ_{xᵢ ∈ N(x)} W(xᵢ − x) fᵢ`, where `N(x)` are the `k`
//! nearest points under an ℓp metric and `W` is a small MLP producing a
//! `c_out × c_in` matrix from the offset. The stack alternates such layers
//! with farthest-point downsampling, then averages the surviving points and
//! applies an affine head.
//!
//! Determinism: every neighbor search and sampling step breaks ties on the
//! point coordinates and finally on the row index, and [`DiscriminatorStack`]
//! first sorts each cloud's rows canonically, so reordering the rows of an
//! input cloud gives bitwise-identical outputs.

use std::cmp::Ordering;

use gasp_autodiff::nn::{batch_norm, linear, BatchNormState, ParamStore};
use gasp_autodiff::{Graph, Tensor, Var, LEAKY_RELU_SLOPE};

use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const WEIGHT_MLP_HIDDEN: [usize; 4] = [16, 16, 16, 16];

fn check_norm(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("ℓp exponent must be finite and ≥ 1, got {p}")));
    }
    Ok(())
}

/// `Σ |aᵢ − bᵢ|ᵖ`, which orders points exactly like the ℓp distance.
fn lp_power(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    } else if p == 1.0 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    } else {
        a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum()
    }
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn row(data: &[f64], d: usize, i: usize) -> &[f64] {
    &data[i * d..(i + 1) * d]
}

/// k-nearest neighbors on flat row-major buffers; returns `q·k` indices,
/// nearest first.
fn knn_rows(points: &[f64], queries: &[f64], d: usize, k: usize, p: f64) -> Vec<usize> {
    let n = points.len() / d;
    let q = queries.len() / d;
    let mut out = Vec::with_capacity(q * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for qi in 0..q {
        let query = row(queries, d, qi);
        cand.clear();
        cand.extend((0..n).map(|i| (lp_power(row(points, d, i), query, p), i)));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.total_cmp(&b.0)
                .then_with(|| lex(row(points, d, a.1), row(points, d, b.1)))
                .then(a.1.cmp(&b.1))
        };
        if k < n {
            cand.select_nth_unstable_by(k - 1, cmp);
        }
        let head = &mut cand[..k];
        head.sort_unstable_by(cmp);
        out.extend(head.iter().map(|&(_, i)| i));
    }
    out
}

fn check_rows(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    if t.ndim() != 2 {
        return Err(Error::dim(format!("{what} must be [rows, dim], got {:?}", t.shape())));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// Indices (`q × k`, row-major, nearest first) of each query's `k` nearest
/// points under the ℓp metric. Equal distances are broken by lexicographic
/// order of the point coordinates, then by index.
pub fn knn(points: &Tensor, queries: &Tensor, k: usize, norm_p: f64) -> Result<Vec<usize>> {
    check_norm(norm_p)?;
    let (n, d) = check_rows(points, "points")?;
    let (_, dq) = check_rows(queries, "queries")?;
    if d != dq {
        return Err(Error::dim(format!("points are {d}-D but queries are {dq}-D")));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} neighbors requested from {n} points")));
    }
    Ok(knn_rows(points.data(), queries.data(), d, k, norm_p))
}

/// Deterministic farthest-point sampling of `m` rows. The first pick is the
/// point nearest the centroid; each later pick maximizes the distance to
/// the picks so far. Ties go to the lexicographically smaller point, then
/// the smaller index.
pub fn farthest_point_sample(points: &Tensor, m: usize, norm_p: f64) -> Result<Vec<usize>> {
    check_norm(norm_p)?;
    let (n, d) = check_rows(points, "points")?;
    if m == 0 || m > n {
        return Err(Error::invalid(format!("cannot keep {m} of {n} points")));
    }
    Ok(fps_rows(points.data(), d, m, norm_p))
}

fn fps_rows(points: &[f64], d: usize, m: usize, p: f64) -> Vec<usize> {
    let n = points.len() / d;
    let mut centroid = vec![0.0; d];
    for i in 0..n {
        for (c, v) in centroid.iter_mut().zip(row(points, d, i)) {
            *c += v;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n as f64);

    // Picks the best candidate under `better`, ignoring chosen rows.
    let pick = |score: &dyn Fn(usize) -> f64, prefer_larger: bool, chosen: &[bool]| -> usize {
        let mut best: Option<usize> = None;
        for i in (0..n).filter(|&i| !chosen[i]) {
            let Some(b) = best else {
                best = Some(i);
                continue;
            };
            let mut ord = score(i).total_cmp(&score(b));
            if prefer_larger {
                ord = ord.reverse();
            }
            let ord = ord.then_with(|| lex(row(points, d, i), row(points, d, b))).then(i.cmp(&b));
            if ord == Ordering::Less {
                best = Some(i);
            }
        }
        best.expect("at least one unchosen point")
    };

    let mut chosen = vec![false; n];
    let first = pick(&|i| lp_power(row(points, d, i), &centroid, p), false, &chosen);
    chosen[first] = true;
    let mut picks = vec![first];
    let mut nearest: Vec<f64> = (0..n).map(|i| lp_power(row(points, d, i), row(points, d, first), p)).collect();
    while picks.len() < m {
        let next = pick(&|i| nearest[i], true, &chosen);
        chosen[next] = true;
        picks.push(next);
        for (i, slot) in nearest.iter_mut().enumerate() {
            *slot = slot.min(lp_power(row(points, d, i), row(points, d, next), p));
        }
    }
    picks
}

/// Sums kernel-weighted neighbor features. `neighbors` holds `q·k` global
/// row indices into `feats`; `offsets` are the matching `xᵢ − x`.
fn convolve<'g>(
    feats: Var<'g>,
    neighbors: &[usize],
    offsets: Tensor,
    k: usize,
    c_out: usize,
    kernel: impl FnOnce(Var<'g>) -> Result<Var<'g>>,
) -> Result<Var<'g>> {
    let graph = feats.graph();
    let c_in = feats.shape()[1];
    let rows = neighbors.len();
    let q = rows / k;
    let w = kernel(graph.constant(offsets))?;
    if w.shape() != [rows, c_out * c_in] {
        return Err(Error::dim(format!(
            "kernel must return [{rows}, {}], got {:?}",
            c_out * c_in,
            w.shape()
        )));
    }
    let w = w.reshape(&[rows, c_out, c_in])?;
    let f = feats.index_select(neighbors)?.reshape(&[rows, 1, c_in])?;
    let per_neighbor = w.mul(f)?.sum_axes(&[2], false)?;
    Ok(per_neighbor.reshape(&[q, k, c_out])?.sum_axes(&[1], false)?)
}

fn offsets_for(points: &[f64], queries: &[f64], d: usize, neighbors: &[usize], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(neighbors.len() * d);
    for (slot, &i) in neighbors.iter().enumerate() {
        let query = row(queries, d, slot / k);
        out.extend(row(points, d, i).iter().zip(query).map(|(a, b)| a - b));
    }
    out
}

/// PointConv with an arbitrary kernel `W`: `kernel` maps offsets
/// `[q·k, d]` to `[q·k, c_out·c_in]`. Returns `[q, c_out]`.
pub fn pointconv_with<'g>(
    points: &Tensor,
    feats: Var<'g>,
    queries: &Tensor,
    k: usize,
    norm_p: f64,
    c_out: usize,
    kernel: impl FnOnce(Var<'g>) -> Result<Var<'g>>,
) -> Result<Var<'g>> {
    let (neighbors, offsets) = neighborhoods(points, &feats, queries, k, norm_p)?;
    convolve(feats, &neighbors, offsets, k, c_out, kernel)
}

fn neighborhoods(
    points: &Tensor,
    feats: &Var<'_>,
    queries: &Tensor,
    k: usize,
    norm_p: f64,
) -> Result<(Vec<usize>, Tensor)> {
    let fs = feats.shape();
    if fs.len() != 2 || fs[0] != points.shape().first().copied().unwrap_or(0) {
        return Err(Error::dim(format!(
            "features {fs:?} do not match points {:?}",
            points.shape()
        )));
    }
    let neighbors = knn(points, queries, k, norm_p)?;
    let d = points.shape()[1];
    let offsets = offsets_for(points.data(), queries.data(), d, &neighbors, k);
    let offsets = Tensor::matrix(neighbors.len(), d, offsets)?;
    Ok((neighbors, offsets))
}

/// Same result as [`convolve`] for a kernel whose last step is the affine
/// map `h·A + b`, without materializing the `[rows, c_out·c_in]` kernel
/// matrices: the neighbor sum is pushed inside the final linear layer.
fn convolve_affine<'g>(
    feats: Var<'g>,
    neighbors: &[usize],
    hidden: Var<'g>,
    weight: Var<'g>,
    bias: Var<'g>,
    k: usize,
    c_out: usize,
) -> Result<Var<'g>> {
    let c_in = feats.shape()[1];
    let (rows, width) = (hidden.shape()[0], hidden.shape()[1]);
    let q = rows / k;
    let f = feats.index_select(neighbors)?.reshape(&[q, k, c_in])?;
    let h = hidden.reshape(&[q, k, width])?.transpose()?;
    // z[q, h, i] = Σ_r h[r, h] f[r, i]
    let z = h.matmul(f)?.reshape(&[q, width * c_in])?;
    let a = weight.reshape(&[width, c_out, c_in])?.transpose()?.reshape(&[width * c_in, c_out])?;
    let f_sum = f.sum_axes(&[1], false)?;
    let b = bias.reshape(&[c_out, c_in])?.transpose()?;
    Ok(z.matmul(a)?.add(f_sum.matmul(b)?)?)
}

/// One PointConv layer whose kernel is an MLP `ℝᵈ → ℝ^{c_out·c_in}` with
/// batch-normalized leaky-ReLU hidden layers. Its parameters live in a
/// shared [`ParamStore`] starting at [`PointConvLayer::param_offset`].
#[derive(Debug, Clone, PartialEq)]
pub struct PointConvLayer {
    pub coord_dim: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub k_neighbors: usize,
    pub norm_p: f64,
    hidden: Vec<usize>,
    offset: usize,
    bn: Vec<BatchNormState>,
}

impl PointConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        coord_dim: usize,
        c_in: usize,
        c_out: usize,
        k_neighbors: usize,
        norm_p: f64,
        hidden: &[usize],
        rng: &mut Rng,
    ) -> Result<Self> {
        check_norm(norm_p)?;
        if coord_dim == 0 || c_in == 0 || c_out == 0 || k_neighbors == 0 || hidden.contains(&0) {
            return Err(Error::invalid(format!(
                "PointConv sizes must be positive: d={coord_dim}, c_in={c_in}, c_out={c_out}, k={k_neighbors}"
            )));
        }
        let offset = store.len();
        let mut widths = vec![coord_dim];
        widths.extend_from_slice(hidden);
        widths.push(c_out * c_in);
        let last = widths.len() - 2;
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            store.push(
                format!("{name}.w{l}"),
                Tensor::matrix(fan_in, fan_out, rng::uniform_vec(rng, fan_in * fan_out, bound))?,
            );
            store.push(format!("{name}.b{l}"), Tensor::new(&[fan_out], rng::uniform_vec(rng, fan_out, bound))?);
            if l < last {
                store.push(format!("{name}.gamma{l}"), Tensor::ones(&[fan_out])?);
                store.push(format!("{name}.beta{l}"), Tensor::zeros(&[fan_out])?);
            }
        }
        Ok(Self {
            coord_dim,
            c_in,
            c_out,
            k_neighbors,
            norm_p,
            hidden: hidden.to_vec(),
            offset,
            bn: hidden.iter().map(|&w| BatchNormState::new(w)).collect(),
        })
    }

    pub fn param_offset(&self) -> usize {
        self.offset
    }

    pub fn num_params(&self) -> usize {
        4 * self.hidden.len() + 2
    }

    pub fn bn_states(&self) -> &[BatchNormState] {
        &self.bn
    }

    pub fn bn_states_mut(&mut self) -> &mut [BatchNormState] {
        &mut self.bn
    }

    /// Kernel matrices `[rows, c_out·c_in]` for offsets `[rows, d]`.
    pub fn kernel<'g>(&mut self, params: &[Var<'g>], offsets: Var<'g>, training: bool) -> Result<Var<'g>> {
        let h = self.kernel_hidden(params, offsets, training)?;
        let (w, b) = self.output_params(params);
        Ok(linear(h, w, b)?)
    }

    /// The kernel MLP up to, but not including, its final linear layer.
    fn kernel_hidden<'g>(&mut self, params: &[Var<'g>], offsets: Var<'g>, training: bool) -> Result<Var<'g>> {
        let p = &params[self.offset..self.offset + self.num_params()];
        let mut h = offsets;
        for l in 0..self.hidden.len() {
            let base = 4 * l;
            h = linear(h, p[base], p[base + 1])?;
            h = batch_norm(h, p[base + 2], p[base + 3], &mut self.bn[l], training)?;
            h = h.leaky_relu(LEAKY_RELU_SLOPE)?;
        }
        Ok(h)
    }

    fn output_params<'g>(&self, params: &[Var<'g>]) -> (Var<'g>, Var<'g>) {
        let base = self.offset + 4 * self.hidden.len();
        (params[base], params[base + 1])
    }

    /// `[q, c_out]` outputs at `queries` from `feats` carried by `points`.
    pub fn forward<'g>(
        &mut self,
        params: &[Var<'g>],
        points: &Tensor,
        feats: Var<'g>,
        queries: &Tensor,
        training: bool,
    ) -> Result<Var<'g>> {
        let k = self.k_neighbors;
        let (neighbors, offsets) = neighborhoods(points, &feats, queries, k, self.norm_p)?;
        let hidden = self.kernel_hidden(params, feats.graph().constant(offsets), training)?;
        let (w, b) = self.output_params(params);
        convolve_affine(feats, &neighbors, hidden, w, b, k, self.c_out)
    }
}

/// PointConv with a layer's MLP kernel.
pub fn pointconv_forward<'g>(
    layer: &mut PointConvLayer,
    params: &[Var<'g>],
    points: &Tensor,
    in_feats: Var<'g>,
    queries: &Tensor,
    training: bool,
) -> Result<Var<'g>> {
    layer.forward(params, points, in_feats, queries, training)
}

/// Keeps `ceil(n / factor)` points by farthest-point sampling and gives
/// each the mean feature of its `k` nearest input points (itself
/// included).
pub fn pool_downsample<'g>(
    points: &Tensor,
    feats: Var<'g>,
    factor: usize,
    k: usize,
    norm_p: f64,
) -> Result<(Tensor, Var<'g>)> {
    check_norm(norm_p)?;
    let (n, d) = check_rows(points, "points")?;
    if factor == 0 || k == 0 {
        return Err(Error::invalid("pooling factor and k must be positive"));
    }
    if feats.shape().first() != Some(&n) {
        return Err(Error::dim(format!(
            "features {:?} do not match {n} points",
            feats.shape()
        )));
    }
    let (coords, neighbors, m, k) = pool_plan(points.data(), d, factor, k, norm_p);
    let pooled = mean_of_neighbors(feats, &neighbors, m, k)?;
    Ok((Tensor::matrix(m, d, coords)?, pooled))
}

/// Survivor coordinates, neighbor indices, survivor count and effective k.
fn pool_plan(points: &[f64], d: usize, factor: usize, k: usize, p: f64) -> (Vec<f64>, Vec<usize>, usize, usize) {
    let n = points.len() / d;
    let m = n.div_ceil(factor);
    let k = k.min(n);
    let keep = fps_rows(points, d, m, p);
    let coords: Vec<f64> = keep.iter().flat_map(|&i| row(points, d, i).to_vec()).collect();
    let neighbors = knn_rows(points, &coords, d, k, p);
    (coords, neighbors, m, k)
}

fn mean_of_neighbors<'g>(feats: Var<'g>, neighbors: &[usize], m: usize, k: usize) -> Result<Var<'g>> {
    let c = feats.shape()[1];
    Ok(feats
        .index_select(neighbors)?
        .reshape(&[m, k, c])?
        .mean_axes(&[1], false)?)
}

/// Shape and search settings of a [`DiscriminatorStack`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub coord_dim: usize,
    pub feature_dim: usize,
    /// Output channels per layer; each entry doubles the previous one.
    pub channels: Vec<usize>,
    /// Neighbors per convolution and pooling step (`3ᵈ` by default).
    pub k_neighbors: usize,
    /// Points kept per pooling step are `1 / pool_factor` of the input
    /// (`2ᵈ` by default).
    pub pool_factor: usize,
    pub norm_p: f64,
    pub weight_hidden: Vec<usize>,
}

impl DiscriminatorConfig {
    pub fn new(coord_dim: usize, feature_dim: usize, channels: Vec<usize>) -> Self {
        Self {
            coord_dim,
            feature_dim,
            channels,
            k_neighbors: 3usize.pow(coord_dim as u32),
            pool_factor: 1 << coord_dim,
            norm_p: 2.0,
            weight_hidden: WEIGHT_MLP_HIDDEN.to_vec(),
        }
    }

    /// Neighborhood and pooling sizes for data on an `intrinsic_dim`-dimensional
    /// surface embedded in `coord_dim` dimensions, such as the unit sphere.
    pub fn for_surface(coord_dim: usize, intrinsic_dim: usize, feature_dim: usize, channels: Vec<usize>) -> Self {
        Self {
            k_neighbors: 3usize.pow(intrinsic_dim as u32),
            pool_factor: 1 << intrinsic_dim,
            ..Self::new(coord_dim, feature_dim, channels)
        }
    }
}

/// Batch-normalized leaky-ReLU PointConv layers with farthest-point pooling
/// between them, a global mean and an affine head with sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorStack {
    config: DiscriminatorConfig,
    params: ParamStore,
    layers: Vec<PointConvLayer>,
    /// Per layer: indices of the feature batch-norm `gamma`, `beta`.
    norm_params: Vec<(usize, usize)>,
    norm_states: Vec<BatchNormState>,
    head: (usize, usize),
}

impl DiscriminatorStack {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if config.channels.is_empty() || config.channels.contains(&0) {
            return Err(Error::invalid(format!("channel schedule {:?} is empty", config.channels)));
        }
        if config.channels.windows(2).any(|w| w[1] != 2 * w[0]) {
            return Err(Error::invalid(format!(
                "channels must double between layers, got {:?}",
                config.channels
            )));
        }
        if config.coord_dim == 0 || config.feature_dim == 0 {
            return Err(Error::invalid("coordinate and feature dimensions must be positive"));
        }
        if config.k_neighbors == 0 || config.pool_factor == 0 {
            return Err(Error::invalid("neighbor count and pooling factor must be positive"));
        }
        let mut rng = rng::seeded(seed);
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        let mut norm_params = Vec::new();
        let mut norm_states = Vec::new();
        let mut c_in = config.feature_dim;
        for (i, &c_out) in config.channels.iter().enumerate() {
            layers.push(PointConvLayer::new(
                &mut params,
                &format!("conv{i}"),
                config.coord_dim,
                c_in,
                c_out,
                config.k_neighbors,
                config.norm_p,
                &config.weight_hidden,
                &mut rng,
            )?);
            let g = params.push(format!("norm{i}.gamma"), Tensor::ones(&[c_out])?);
            let b = params.push(format!("norm{i}.beta"), Tensor::zeros(&[c_out])?);
            norm_params.push((g, b));
            norm_states.push(BatchNormState::new(c_out));
            c_in = c_out;
        }
        let bound = 1.0 / (c_in as f64).sqrt();
        let w = params.push("head.w", Tensor::matrix(c_in, 1, rng::uniform_vec(&mut rng, c_in, bound))?);
        let b = params.push("head.b", Tensor::zeros(&[1])?);
        Ok(Self {
            config,
            params,
            layers,
            norm_params,
            norm_states,
            head: (w, b),
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn layers(&self) -> &[PointConvLayer] {
        &self.layers
    }

    /// Every batch-norm state in a fixed order: each layer's kernel MLP
    /// states, then the feature normalizations.
    pub fn bn_states(&self) -> Vec<&BatchNormState> {
        self.layers
            .iter()
            .flat_map(|l| l.bn_states())
            .chain(&self.norm_states)
            .collect()
    }

    pub fn bn_states_mut(&mut self) -> Vec<&mut BatchNormState> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.bn_states_mut())
            .chain(self.norm_states.iter_mut())
            .collect()
    }

    /// Logits `[B]` for a batch of clouds. `coords[b]` is `[n_b, d]` and
    /// `features` stacks all clouds' feature rows, `[Σ n_b, k]`.
    pub fn logits<'g>(
        &mut self,
        params: &[Var<'g>],
        coords: &[Tensor],
        features: Var<'g>,
        training: bool,
    ) -> Result<Var<'g>> {
        let (d, kf) = (self.config.coord_dim, self.config.feature_dim);
        let total = check_batch(coords, features, d, kf)?;
        let graph = features.graph();

        let (perm, mut levels) = canonical_order(coords, &features.value(), d, kf);
        debug_assert_eq!(perm.len(), total);
        let mut h = features.index_select(&perm)?;

        let last = self.layers.len() - 1;
        let (factor, p) = (self.config.pool_factor, self.config.norm_p);
        for l in 0..self.layers.len() {
            let layer = &self.layers[l];
            let mut neighbors = Vec::new();
            let mut offsets = Vec::new();
            let mut base = 0;
            let mut k_eff = None;
            for pts in &levels {
                let n = pts.len() / d;
                let k = layer.k_neighbors.min(n);
                if *k_eff.get_or_insert(k) != k {
                    return Err(Error::dim("clouds in one batch must have equal sizes"));
                }
                let local = knn_rows(pts, pts, d, k, p);
                offsets.extend(offsets_for(pts, pts, d, &local, k));
                neighbors.extend(local.iter().map(|i| base + i));
                base += n;
            }
            let k = k_eff.expect("non-empty batch");
            let offsets = Tensor::matrix(neighbors.len(), d, offsets)?;
            let c_out = layer.c_out;
            let layer = &mut self.layers[l];
            let hidden = layer.kernel_hidden(params, graph.constant(offsets), training)?;
            let (w, b) = layer.output_params(params);
            h = convolve_affine(h, &neighbors, hidden, w, b, k, c_out)?;
            let (g, b) = self.norm_params[l];
            h = batch_norm(h, params[g], params[b], &mut self.norm_states[l], training)?;
            h = h.leaky_relu(LEAKY_RELU_SLOPE)?;

            if l < last {
                let mut pooled_neighbors = Vec::new();
                let mut next_levels = Vec::with_capacity(levels.len());
                let (mut base, mut out_rows) = (0, 0);
                let mut k_pool = 0;
                for pts in &levels {
                    let n = pts.len() / d;
                    let (survivors, local, m, k) = pool_plan(pts, d, factor, self.config.k_neighbors, p);
                    pooled_neighbors.extend(local.iter().map(|i| base + i));
                    next_levels.push(survivors);
                    base += n;
                    out_rows += m;
                    k_pool = k;
                }
                h = mean_of_neighbors(h, &pooled_neighbors, out_rows, k_pool)?;
                levels = next_levels;
            }
        }

        // Mean over each cloud's remaining points.
        let mut owner = Vec::new();
        let mut inv_counts = Vec::with_capacity(levels.len());
        for (b, pts) in levels.iter().enumerate() {
            let n = pts.len() / d;
            owner.extend(std::iter::repeat(b).take(n));
            inv_counts.push(1.0 / n as f64);
        }
        let batch = levels.len();
        let pooled = h
            .index_add(&owner, batch)?
            .mul(graph.constant(Tensor::matrix(batch, 1, inv_counts)?))?;
        let (w, b) = self.head;
        Ok(linear(pooled, params[w], params[b])?.reshape(&[batch])?)
    }

    /// Probability that `pc` comes from real data.
    pub fn discriminate(&mut self, pc: &PointCloud, training: bool) -> Result<f64> {
        let graph = Graph::new();
        let params = self.params.bind(&graph, false);
        let feats = graph.constant(pc.features().clone());
        let logit = self.logits(&params, &[pc.coords().clone()], feats, training)?;
        Ok(logit.sigmoid()?.value().data()[0])
    }
}

/// Validates a batch and returns the total row count.
/// Canonical row order of each cloud in a batch: by coordinates, then
/// features, then original index. Returns the global row permutation and
/// each cloud's coordinates in that order. Summing in this order makes
/// results bitwise independent of the input row order.
pub(crate) fn canonical_order(coords: &[Tensor], features: &Tensor, d: usize, kf: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
    let fvals = features.data();
    let mut perm = Vec::with_capacity(features.shape()[0]);
    let mut levels = Vec::with_capacity(coords.len());
    let mut start = 0;
    for c in coords {
        let n = c.shape()[0];
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            lex(row(c.data(), d, a), row(c.data(), d, b))
                .then_with(|| lex(row(fvals, kf, start + a), row(fvals, kf, start + b)))
                .then(a.cmp(&b))
        });
        levels.push(order.iter().flat_map(|&i| row(c.data(), d, i).to_vec()).collect());
        perm.extend(order.iter().map(|&i| start + i));
        start += n;
    }
    (perm, levels)
}

pub(crate) fn check_batch(coords: &[Tensor], features: Var<'_>, d: usize, k: usize) -> Result<usize> {
    if coords.is_empty() {
        return Err(Error::invalid("batch is empty"));
    }
    let mut total = 0;
    for c in coords {
        let (n, cd) = check_rows(c, "coordinates")?;
        if cd != d {
            return Err(Error::dim(format!("discriminator expects {d}-D coordinates, got {cd}-D")));
        }
        if n == 0 {
            return Err(Error::invalid("point clouds must be non-empty"));
        }
        total += n;
    }
    let fs = features.shape();
    if fs != [total, k] {
        return Err(Error::dim(format!("features must be [{total}, {k}], got {fs:?}")));
    }
    Ok(total)
}

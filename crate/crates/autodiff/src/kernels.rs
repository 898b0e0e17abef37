//! Raw numeric kernels on row-major buffers. Nothing here touches the graph.

use crate::error::{Result, TensorError};
use crate::tensor::{numel, Tensor};

/// Trailing-dimension (numpy-style) broadcast of two shapes.
pub(crate) fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = dim_from_right(a, rank - 1 - i);
        let db = dim_from_right(b, rank - 1 - i);
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::Dimension {
                    op,
                    lhs: a.to_vec(),
                    rhs: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}

fn dim_from_right(shape: &[usize], from_right: usize) -> usize {
    if from_right < shape.len() {
        shape[shape.len() - 1 - from_right]
    } else {
        1
    }
}

/// Whether `small` broadcasts to `big`.
pub(crate) fn broadcasts_to(small: &[usize], big: &[usize]) -> bool {
    small.len() <= big.len()
        && (0..small.len()).all(|i| {
            let s = dim_from_right(small, i);
            s == 1 || s == dim_from_right(big, i)
        })
}

/// Element strides of `shape` viewed inside the rank of `out`; broadcast
/// dimensions get stride 0.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..rank).rev() {
        let from_right = rank - 1 - i;
        let d = dim_from_right(shape, from_right);
        if from_right < shape.len() {
            strides[i] = if d == 1 && out[i] != 1 { 0 } else { acc };
            acc *= d;
        }
    }
    strides
}

/// Visits every row (all but the last dimension) of `out`, passing the
/// row's start offset in `out`, `a` and `b`.
fn walk_rows(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let rank = out.len();
    let inner = out[rank - 1];
    let rows = numel(&out[..rank - 1]);
    let mut index = vec![0usize; rank - 1];
    let (mut oa, mut ob) = (0usize, 0usize);
    for row in 0..rows {
        f(row * inner, oa, ob);
        // advance the multi-index, odometer style
        for axis in (0..rank - 1).rev() {
            index[axis] += 1;
            oa += sa[axis];
            ob += sb[axis];
            if index[axis] < out[axis] {
                break;
            }
            oa -= sa[axis] * out[axis];
            ob -= sb[axis] * out[axis];
            index[axis] = 0;
        }
    }
}

fn padded(shape: &[usize]) -> Vec<usize> {
    if shape.is_empty() {
        vec![1]
    } else {
        shape.to_vec()
    }
}

pub(crate) fn binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let (ad, bd) = (a.data(), b.data());
    if a.shape() == b.shape() {
        let data = ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Tensor::from_parts(a.shape().to_vec(), data));
    }
    let out_shape = broadcast_shape(op, a.shape(), b.shape())?;
    if bd.len() == 1 {
        let y = bd[0];
        let data = ad.iter().map(|&x| f(x, y)).collect();
        return Ok(Tensor::from_parts(out_shape, data));
    }
    if ad.len() == 1 {
        let x = ad[0];
        let data = bd.iter().map(|&y| f(x, y)).collect();
        return Ok(Tensor::from_parts(out_shape, data));
    }
    let out = padded(&out_shape);
    let sa = broadcast_strides(a.shape(), &out);
    let sb = broadcast_strides(b.shape(), &out);
    let inner = out[out.len() - 1];
    let (ia, ib) = (sa[out.len() - 1], sb[out.len() - 1]);
    let mut data = Vec::with_capacity(numel(&out));
    walk_rows(&out, &sa, &sb, |_, oa, ob| match (ia, ib) {
        (1, 1) => data.extend(ad[oa..oa + inner].iter().zip(&bd[ob..ob + inner]).map(|(&x, &y)| f(x, y))),
        (1, 0) => {
            let y = bd[ob];
            data.extend(ad[oa..oa + inner].iter().map(|&x| f(x, y)));
        }
        (0, 1) => {
            let x = ad[oa];
            data.extend(bd[ob..ob + inner].iter().map(|&y| f(x, y)));
        }
        _ => data.extend((0..inner).map(|j| f(ad[oa + j * ia], bd[ob + j * ib]))),
    });
    Ok(Tensor::from_parts(out_shape, data))
}

/// Sums `g` down to `target`, the inverse of broadcasting `target` up to
/// `g`'s shape.
pub(crate) fn sum_to(g: &Tensor, target: &[usize]) -> Result<Tensor> {
    if g.shape() == target {
        return Ok(g.clone());
    }
    if !broadcasts_to(target, g.shape()) {
        return Err(TensorError::Dimension {
            op: "sum_to",
            lhs: g.shape().to_vec(),
            rhs: target.to_vec(),
        });
    }
    let gd = g.data();
    let mut acc = vec![0.0; numel(target)];
    if acc.len() == 1 {
        acc[0] = gd.iter().sum();
        return Ok(Tensor::from_parts(target.to_vec(), acc));
    }
    let out = padded(g.shape());
    let sg = broadcast_strides(g.shape(), &out);
    let st = broadcast_strides(target, &out);
    let inner = out[out.len() - 1];
    let it = st[out.len() - 1];
    walk_rows(&out, &sg, &st, |o, _, ot| {
        let row = &gd[o..o + inner];
        if it == 1 {
            for (a, &v) in acc[ot..ot + inner].iter_mut().zip(row) {
                *a += v;
            }
        } else if it == 0 {
            acc[ot] += row.iter().sum::<f64>();
        } else {
            for (j, &v) in row.iter().enumerate() {
                acc[ot + j * it] += v;
            }
        }
    });
    Ok(Tensor::from_parts(target.to_vec(), acc))
}

pub(crate) fn broadcast_to(a: &Tensor, target: &[usize]) -> Result<Tensor> {
    if a.shape() == target {
        return Ok(a.clone());
    }
    if !broadcasts_to(a.shape(), target) {
        return Err(TensorError::Dimension {
            op: "broadcast_to",
            lhs: a.shape().to_vec(),
            rhs: target.to_vec(),
        });
    }
    let ad = a.data();
    if ad.len() == 1 {
        return Ok(Tensor::from_parts(target.to_vec(), vec![ad[0]; numel(target)]));
    }
    let out = padded(target);
    let sa = broadcast_strides(a.shape(), &out);
    let inner = out[out.len() - 1];
    let ia = sa[out.len() - 1];
    let mut data = Vec::with_capacity(numel(&out));
    walk_rows(&out, &sa, &sa, |_, oa, _| match ia {
        1 => data.extend_from_slice(&ad[oa..oa + inner]),
        0 => data.extend(std::iter::repeat_n(ad[oa], inner)),
        _ => data.extend((0..inner).map(|j| ad[oa + j * ia])),
    });
    Ok(Tensor::from_parts(target.to_vec(), data))
}

/// Batched matrix product over the last two dimensions; leading dimensions
/// must be identical.
pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    let err = || TensorError::Dimension {
        op: "matmul",
        lhs: sa.to_vec(),
        rhs: sb.to_vec(),
    };
    if sa.len() < 2 || sa.len() != sb.len() || sa[..sa.len() - 2] != sb[..sb.len() - 2] {
        return Err(err());
    }
    let r = sa.len();
    let (m, k, n) = (sa[r - 2], sa[r - 1], sb[r - 1]);
    if sb[r - 2] != k {
        return Err(err());
    }
    let batch = numel(&sa[..r - 2]);
    let mut out_shape = sa[..r - 2].to_vec();
    out_shape.extend([m, n]);
    let mut c = vec![0.0; batch * m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..batch {
        let pa = &ad[i * m * k..(i + 1) * m * k];
        let pb = &bd[i * k * n..(i + 1) * k * n];
        let pc = &mut c[i * m * n..(i + 1) * m * n];
        // SAFETY: the slices hold exactly m*k, k*n and m*n elements laid
        // out row-major with the strides given.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                pa.as_ptr(),
                k as isize,
                1,
                pb.as_ptr(),
                n as isize,
                1,
                0.0,
                pc.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    Ok(Tensor::from_parts(out_shape, c))
}

/// Swaps the last two dimensions.
pub(crate) fn transpose(a: &Tensor) -> Result<Tensor> {
    let s = a.shape();
    if s.len() < 2 {
        return Err(TensorError::InvalidAxis {
            op: "transpose",
            axis: 1,
            rank: s.len(),
        });
    }
    let r = s.len();
    let (m, n) = (s[r - 2], s[r - 1]);
    let batch = numel(&s[..r - 2]);
    let ad = a.data();
    let mut out = vec![0.0; ad.len()];
    for bi in 0..batch {
        let base = bi * m * n;
        for i in 0..m {
            for j in 0..n {
                out[base + j * m + i] = ad[base + i * n + j];
            }
        }
    }
    let mut shape = s.to_vec();
    shape.swap(r - 2, r - 1);
    Ok(Tensor::from_parts(shape, out))
}

fn row_width(shape: &[usize]) -> usize {
    numel(&shape[1..])
}

pub(crate) fn index_select(a: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let s = a.shape();
    if s.is_empty() {
        return Err(TensorError::InvalidAxis {
            op: "index_select",
            axis: 0,
            rank: 0,
        });
    }
    if indices.is_empty() {
        return Err(TensorError::EmptyDimension(vec![0]));
    }
    let w = row_width(s);
    let ad = a.data();
    let mut out = Vec::with_capacity(indices.len() * w);
    for &i in indices {
        if i >= s[0] {
            return Err(TensorError::IndexOutOfRange {
                op: "index_select",
                index: i,
                len: s[0],
            });
        }
        out.extend_from_slice(&ad[i * w..(i + 1) * w]);
    }
    let mut shape = s.to_vec();
    shape[0] = indices.len();
    Ok(Tensor::from_parts(shape, out))
}

/// Scatter-add of the rows of `g` into a zero tensor with `rows` rows.
pub(crate) fn index_add(g: &Tensor, indices: &[usize], rows: usize) -> Result<Tensor> {
    let s = g.shape();
    if s.is_empty() || s[0] != indices.len() {
        return Err(TensorError::Dimension {
            op: "index_add",
            lhs: s.to_vec(),
            rhs: vec![indices.len()],
        });
    }
    let w = row_width(s);
    let gd = g.data();
    let mut out = vec![0.0; rows * w];
    for (r, &i) in indices.iter().enumerate() {
        if i >= rows {
            return Err(TensorError::IndexOutOfRange {
                op: "index_add",
                index: i,
                len: rows,
            });
        }
        for j in 0..w {
            out[i * w + j] += gd[r * w + j];
        }
    }
    let mut shape = s.to_vec();
    shape[0] = rows;
    Ok(Tensor::from_parts(shape, out))
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (numel(&shape[..axis]), shape[axis], numel(&shape[axis + 1..]))
}

pub(crate) fn narrow(a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let s = a.shape();
    if axis >= s.len() {
        return Err(TensorError::InvalidAxis {
            op: "narrow",
            axis,
            rank: s.len(),
        });
    }
    if len == 0 || start + len > s[axis] {
        return Err(TensorError::IndexOutOfRange {
            op: "narrow",
            index: start + len,
            len: s[axis],
        });
    }
    let (outer, full, inner) = split_axis(s, axis);
    let ad = a.data();
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = o * full * inner + start * inner;
        out.extend_from_slice(&ad[base..base + len * inner]);
    }
    let mut shape = s.to_vec();
    shape[axis] = len;
    Ok(Tensor::from_parts(shape, out))
}

/// Embeds `a` into zeros of length `total` along `axis`, starting at `start`.
pub(crate) fn pad(a: &Tensor, axis: usize, start: usize, total: usize) -> Result<Tensor> {
    let s = a.shape();
    if axis >= s.len() {
        return Err(TensorError::InvalidAxis {
            op: "pad",
            axis,
            rank: s.len(),
        });
    }
    if start + s[axis] > total {
        return Err(TensorError::IndexOutOfRange {
            op: "pad",
            index: start + s[axis],
            len: total,
        });
    }
    let (outer, len, inner) = split_axis(s, axis);
    let ad = a.data();
    let mut out = vec![0.0; outer * total * inner];
    for o in 0..outer {
        let dst = o * total * inner + start * inner;
        out[dst..dst + len * inner].copy_from_slice(&ad[o * len * inner..(o + 1) * len * inner]);
    }
    let mut shape = s.to_vec();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, out))
}

//! Differentiable primitive ops over [`Tensor`].
//!
//! Every op validates shapes eagerly (panicking on programmer error), pushes
//! one node and registers the matching backward closure. Broadcasting is kept
//! explicit through dedicated ops (`expand_spatial`, `add_bias`, row/column
//! vector forms) so each backward stays a hand-derived expression.

use crate::graph::{Element, Graph, Tensor};
use ndarray::{azip, ArrayD, Axis, Ix1, Ix2, IxDyn};

pub(crate) fn same_graph<F: Element>(a: &Tensor<F>, b: &Tensor<F>) -> Graph<F> {
    assert!(a.graph().ptr_eq(b.graph()), "operands belong to different graphs");
    a.graph().clone()
}

macro_rules! assert_same_shape {
    ($a:expr, $b:expr, $op:literal) => {
        assert_eq!($a.shape(), $b.shape(), concat!($op, ": operand shapes differ"));
    };
}

// -- elementwise binary ------------------------------------------------------

pub fn add<F: Element>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    assert_same_shape!(a, b, "add");
    let g = same_graph(a, b);
    let v = &*a.value() + &*b.value();
    g.push_op(
        v,
        vec![a.id, b.id],
        Box::new(|grad, _| vec![Some(grad.clone()), Some(grad.clone())]),
    )
}

pub fn sub<F: Element>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    assert_same_shape!(a, b, "sub");
    let g = same_graph(a, b);
    let v = &*a.value() - &*b.value();
    g.push_op(
        v,
        vec![a.id, b.id],
        Box::new(|grad, _| vec![Some(grad.clone()), Some(grad.mapv(|x| -x))]),
    )
}

pub fn mul<F: Element>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    assert_same_shape!(a, b, "mul");
    let g = same_graph(a, b);
    let v = &*a.value() * &*b.value();
    g.push_op(
        v,
        vec![a.id, b.id],
        Box::new(|grad, args| {
            vec![Some(grad * args.parents[1]), Some(grad * args.parents[0])]
        }),
    )
}

pub fn div<F: Element>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    assert_same_shape!(a, b, "div");
    let g = same_graph(a, b);
    let v = &*a.value() / &*b.value();
    g.push_op(
        v,
        vec![a.id, b.id],
        Box::new(|grad, args| {
            let (av, bv) = (args.parents[0], args.parents[1]);
            let da = grad / bv;
            let mut db = ArrayD::zeros(bv.raw_dim());
            azip!((db in &mut db, &g in grad, &a in av, &b in bv) *db = -g * a / (b * b));
            vec![Some(da), Some(db)]
        }),
    )
}

// -- elementwise unary ---------------------------------------------------------

pub fn neg<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    scale(x, -F::one())
}

pub fn scale<F: Element>(x: &Tensor<F>, c: F) -> Tensor<F> {
    let g = x.graph().clone();
    let v = x.value().mapv(|a| a * c);
    g.push_op(
        v,
        vec![x.id],
        Box::new(move |grad, _| vec![Some(grad.mapv(|g| g * c))]),
    )
}

pub fn add_scalar<F: Element>(x: &Tensor<F>, c: F) -> Tensor<F> {
    let g = x.graph().clone();
    let v = x.value().mapv(|a| a + c);
    g.push_op(v, vec![x.id], Box::new(|grad, _| vec![Some(grad.clone())]))
}

fn unary<F: Element>(
    x: &Tensor<F>,
    fwd: impl Fn(F) -> F,
    back: impl Fn(F, F, F) -> F + 'static, // (grad, input, output) -> dinput
) -> Tensor<F> {
    let g = x.graph().clone();
    let v = x.value().mapv(&fwd);
    g.push_op(
        v,
        vec![x.id],
        Box::new(move |grad, args| {
            let xin = args.parents[0];
            let mut out = ArrayD::zeros(grad.raw_dim());
            azip!((o in &mut out, &g in grad, &x in xin, &y in args.out) *o = back(g, x, y));
            vec![Some(out)]
        }),
    )
}

pub fn relu<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    unary(
        x,
        |v| if v > F::zero() { v } else { F::zero() },
        |g, x, _| if x > F::zero() { g } else { F::zero() },
    )
}

pub fn leaky_relu<F: Element>(x: &Tensor<F>, slope: F) -> Tensor<F> {
    unary(
        x,
        move |v| if v > F::zero() { v } else { v * slope },
        move |g, x, _| if x > F::zero() { g } else { g * slope },
    )
}

pub fn tanh<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    unary(x, |v| v.tanh(), |g, _, y| g * (F::one() - y * y))
}

pub fn sigmoid<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    unary(
        x,
        |v| F::one() / (F::one() + (-v).exp()),
        |g, _, y| g * y * (F::one() - y),
    )
}

pub fn exp<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    unary(x, |v| v.exp(), |g, _, y| g * y)
}

pub fn ln<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    unary(x, |v| v.ln(), |g, x, _| g / x)
}

pub fn sqrt<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    let two = F::one() + F::one();
    unary(x, |v| v.sqrt(), move |g, _, y| g / (two * y))
}

pub fn recip<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    unary(x, |v| F::one() / v, |g, x, _| -g / (x * x))
}

/// |x| with subgradient 0 at the origin.
pub fn abs<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    unary(x, |v| v.abs(), |g, x, _| {
        if x > F::zero() {
            g
        } else if x < F::zero() {
            -g
        } else {
            F::zero()
        }
    })
}

/// Clamp into [lo, hi]; gradient passes only strictly inside the interval.
pub fn clamp<F: Element>(x: &Tensor<F>, lo: F, hi: F) -> Tensor<F> {
    unary(
        x,
        move |v| v.max(lo).min(hi),
        move |g, x, _| if x > lo && x < hi { g } else { F::zero() },
    )
}

// -- reductions ------------------------------------------------------------------

pub fn sum_all<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    let g = x.graph().clone();
    let s = x.value().sum();
    g.push_op(
        ArrayD::from_elem(IxDyn(&[]), s),
        vec![x.id],
        Box::new(|grad, args| {
            let gv = *grad.iter().next().expect("scalar grad");
            vec![Some(ArrayD::from_elem(args.parents[0].raw_dim(), gv))]
        }),
    )
}

pub fn mean_all<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    let n = F::from_f64(x.len() as f64);
    scale(&sum_all(x), F::one() / n)
}

/// Mean over spatial axes of a [B, C, H, W] tensor, yielding [B, C].
pub fn mean_spatial<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    assert_eq!(x.ndim(), 4, "mean_spatial expects [B, C, H, W]");
    let g = x.graph().clone();
    let (h, w) = (x.shape()[2], x.shape()[3]);
    let n = F::from_f64((h * w) as f64);
    let inv = F::one() / n;
    let v = x
        .value()
        .sum_axis(Axis(3))
        .sum_axis(Axis(2))
        .mapv(|s| s * inv)
        .into_dyn();
    g.push_op(
        v,
        vec![x.id],
        Box::new(move |grad, args| {
            let mut dx = ArrayD::zeros(args.parents[0].raw_dim());
            {
                let bc = grad.len();
                let hw = args.parents[0].len() / bc;
                let mut rows = dx
                    .view_mut()
                    .into_shape_with_order((bc, hw))
                    .expect("contiguous");
                for (mut row, &gv) in rows.rows_mut().into_iter().zip(grad.iter()) {
                    row.fill(gv * inv);
                }
            }
            vec![Some(dx)]
        }),
    )
}

/// Sum over rows of an [a, b] matrix -> [b].
pub fn sum_cols<F: Element>(m: &Tensor<F>) -> Tensor<F> {
    assert_eq!(m.ndim(), 2, "sum_cols expects 2-d");
    let g = m.graph().clone();
    let v = m.value().sum_axis(Axis(0)).into_dyn();
    g.push_op(
        v,
        vec![m.id],
        Box::new(|grad, args| {
            let rows = args.parents[0].shape()[0];
            let g1 = grad.view().into_dimensionality::<Ix1>().expect("1d");
            let mut dm = ndarray::Array2::<F>::zeros((rows, g1.len()));
            for mut row in dm.rows_mut() {
                row.assign(&g1);
            }
            vec![Some(dm.into_dyn())]
        }),
    )
}

/// Row sums of an [a, b] matrix -> [a].
pub fn sum_rows<F: Element>(m: &Tensor<F>) -> Tensor<F> {
    assert_eq!(m.ndim(), 2, "sum_rows expects 2-d");
    let g = m.graph().clone();
    let v = m.value().sum_axis(Axis(1)).into_dyn();
    g.push_op(
        v,
        vec![m.id],
        Box::new(|grad, args| {
            let (rows, cols) = (args.parents[0].shape()[0], args.parents[0].shape()[1]);
            let mut dm = ndarray::Array2::<F>::zeros((rows, cols));
            for (mut row, &gv) in dm.rows_mut().into_iter().zip(grad.iter()) {
                row.fill(gv);
            }
            vec![Some(dm.into_dyn())]
        }),
    )
}

/// Row minima of an [a, b] matrix -> [a]; gradient routes to the argmin
/// (first occurrence on ties).
pub fn min_rows<F: Element>(m: &Tensor<F>) -> Tensor<F> {
    arg_reduce_rows(m, true)
}

/// Column maxima of an [a, b] matrix -> [b]; gradient routes to the argmax.
pub fn max_cols<F: Element>(m: &Tensor<F>) -> Tensor<F> {
    let t = transpose2(m);
    arg_reduce_rows(&t, false)
}

fn arg_reduce_rows<F: Element>(m: &Tensor<F>, take_min: bool) -> Tensor<F> {
    assert_eq!(m.ndim(), 2, "reduce expects 2-d");
    let g = m.graph().clone();
    let (out, arg) = {
        let mv = m.value();
        let m2 = mv.view().into_dimensionality::<Ix2>().expect("2d");
        let mut out = ndarray::Array1::<F>::zeros(m2.nrows());
        let mut arg = vec![0usize; m2.nrows()];
        for (i, row) in m2.rows().into_iter().enumerate() {
            let mut best = row[0];
            let mut best_j = 0;
            for (j, &v) in row.iter().enumerate() {
                let better = if take_min { v < best } else { v > best };
                if better {
                    best = v;
                    best_j = j;
                }
            }
            out[i] = best;
            arg[i] = best_j;
        }
        (out, arg)
    };
    g.push_op(
        out.into_dyn(),
        vec![m.id],
        Box::new(move |grad, args| {
            let mut dm = ArrayD::zeros(args.parents[0].raw_dim());
            {
                let mut d2 = dm.view_mut().into_dimensionality::<Ix2>().expect("2d");
                for (i, &gv) in grad.iter().enumerate() {
                    d2[[i, arg[i]]] = gv;
                }
            }
            vec![Some(dm)]
        }),
    )
}

// -- broadcasting -------------------------------------------------------------

/// Broadcast a [B, C] tensor over spatial dims to [B, C, H, W].
pub fn expand_spatial<F: Element>(x: &Tensor<F>, h: usize, w: usize) -> Tensor<F> {
    assert_eq!(x.ndim(), 2, "expand_spatial expects [B, C]");
    let g = x.graph().clone();
    let (b, c) = (x.shape()[0], x.shape()[1]);
    let mut v = ArrayD::zeros(IxDyn(&[b, c, h, w]));
    {
        let src = x.value();
        let mut rows = v
            .view_mut()
            .into_shape_with_order((b * c, h * w))
            .expect("contiguous");
        for (mut row, &s) in rows.rows_mut().into_iter().zip(src.iter()) {
            row.fill(s);
        }
    }
    g.push_op(
        v,
        vec![x.id],
        Box::new(|grad, _| {
            vec![Some(grad.sum_axis(Axis(3)).sum_axis(Axis(2)).into_dyn())]
        }),
    )
}

/// x + b where b broadcasts along axis 1 (channels of [B,C,H,W] or features of [B,D]).
pub fn add_bias<F: Element>(x: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    assert_eq!(b.ndim(), 1, "bias must be a vector");
    assert!(x.ndim() >= 2, "add_bias expects a batched tensor");
    assert_eq!(x.shape()[1], b.shape()[0], "bias length must match axis 1");
    let g = same_graph(x, b);
    let batch = x.shape()[0];
    let c = x.shape()[1];
    let inner: usize = x.len() / (batch * c);
    let mut v = x.to_array();
    {
        let bv = b.value();
        let mut v3 = v
            .view_mut()
            .into_shape_with_order((batch, c, inner))
            .expect("contiguous");
        for bi in 0..batch {
            for ci in 0..c {
                let addend = bv[ci];
                v3.index_axis_mut(Axis(0), bi)
                    .index_axis_mut(Axis(0), ci)
                    .mapv_inplace(|t| t + addend);
            }
        }
    }
    g.push_op(
        v,
        vec![x.id, b.id],
        Box::new(move |grad, _| {
            let g3 = grad
                .view()
                .into_shape_with_order((batch, c, inner))
                .expect("contiguous");
            let db = g3.sum_axis(Axis(2)).sum_axis(Axis(0)).into_dyn();
            vec![Some(grad.clone()), Some(db)]
        }),
    )
}

/// out_ij = m_ij - v_j for m: [a, b], v: [b].
pub fn sub_rowvec<F: Element>(m: &Tensor<F>, v: &Tensor<F>) -> Tensor<F> {
    assert_eq!(m.ndim(), 2, "sub_rowvec expects 2-d matrix");
    assert_eq!(v.ndim(), 1, "sub_rowvec expects vector");
    assert_eq!(m.shape()[1], v.shape()[0], "column count mismatch");
    let g = same_graph(m, v);
    let mut out = m.to_array();
    {
        let vv = v.value();
        let v1 = vv.view().into_dimensionality::<Ix1>().expect("1d");
        let mut o2 = out.view_mut().into_dimensionality::<Ix2>().expect("2d");
        for mut row in o2.rows_mut() {
            row.zip_mut_with(&v1, |r, &s| *r = *r - s);
        }
    }
    g.push_op(
        out,
        vec![m.id, v.id],
        Box::new(|grad, _| {
            let dv = grad.sum_axis(Axis(0)).mapv(|x| -x).into_dyn();
            vec![Some(grad.clone()), Some(dv)]
        }),
    )
}

/// out_ij = m_ij / v_i for m: [a, b], v: [a].
pub fn div_colvec<F: Element>(m: &Tensor<F>, v: &Tensor<F>) -> Tensor<F> {
    assert_eq!(m.ndim(), 2, "div_colvec expects 2-d matrix");
    assert_eq!(v.ndim(), 1, "div_colvec expects vector");
    assert_eq!(m.shape()[0], v.shape()[0], "row count mismatch");
    let g = same_graph(m, v);
    let mut out = m.to_array();
    {
        let vv = v.value();
        let mut o2 = out.view_mut().into_dimensionality::<Ix2>().expect("2d");
        for (mut row, &d) in o2.rows_mut().into_iter().zip(vv.iter()) {
            row.mapv_inplace(|x| x / d);
        }
    }
    g.push_op(
        out,
        vec![m.id, v.id],
        Box::new(|grad, args| {
            let g2 = grad.view().into_dimensionality::<Ix2>().expect("2d");
            let m2 = args.parents[0].view().into_dimensionality::<Ix2>().expect("2d");
            let v1 = args.parents[1].view().into_dimensionality::<Ix1>().expect("1d");
            let mut dm = ndarray::Array2::<F>::zeros(g2.raw_dim());
            let mut dv = ndarray::Array1::<F>::zeros(v1.len());
            for i in 0..g2.nrows() {
                let d = v1[i];
                let mut acc = F::zero();
                for j in 0..g2.ncols() {
                    let gv = g2[[i, j]];
                    dm[[i, j]] = gv / d;
                    acc = acc + gv * m2[[i, j]];
                }
                dv[i] = -acc / (d * d);
            }
            vec![Some(dm.into_dyn()), Some(dv.into_dyn())]
        }),
    )
}

/// Outer product of u: [a] and v: [b] -> [a, b].
pub fn outer<F: Element>(u: &Tensor<F>, v: &Tensor<F>) -> Tensor<F> {
    assert_eq!(u.ndim(), 1, "outer expects vectors");
    assert_eq!(v.ndim(), 1, "outer expects vectors");
    let g = same_graph(u, v);
    let (a, b) = (u.shape()[0], v.shape()[0]);
    let mut out = ndarray::Array2::<F>::zeros((a, b));
    {
        let uv = u.value();
        let vv = v.value();
        for i in 0..a {
            for j in 0..b {
                out[[i, j]] = uv[i] * vv[j];
            }
        }
    }
    g.push_op(
        out.into_dyn(),
        vec![u.id, v.id],
        Box::new(|grad, args| {
            let g2 = grad.view().into_dimensionality::<Ix2>().expect("2d");
            let u1 = args.parents[0].view().into_dimensionality::<Ix1>().expect("1d");
            let v1 = args.parents[1].view().into_dimensionality::<Ix1>().expect("1d");
            let du = g2.dot(&v1).into_dyn();
            let dv = g2.t().dot(&u1).into_dyn();
            vec![Some(du), Some(dv)]
        }),
    )
}

// -- shape ops ---------------------------------------------------------------

pub fn reshape<F: Element>(x: &Tensor<F>, shape: &[usize]) -> Tensor<F> {
    assert_eq!(
        x.len(),
        shape.iter().product::<usize>(),
        "reshape must preserve element count"
    );
    let g = x.graph().clone();
    let v = x
        .to_array()
        .into_shape_with_order(IxDyn(shape))
        .expect("checked len");
    g.push_op(
        v,
        vec![x.id],
        Box::new(|grad, args| {
            let back = grad
                .to_owned()
                .into_shape_with_order(args.parents[0].raw_dim())
                .expect("same len");
            vec![Some(back)]
        }),
    )
}

/// Concatenate along axis 1.
pub fn concat_channels<F: Element>(parts: &[Tensor<F>]) -> Tensor<F> {
    assert!(!parts.is_empty(), "concat of zero tensors");
    let g = parts[0].graph().clone();
    let v = {
        let refs: Vec<_> = parts.iter().map(|t| t.value()).collect();
        let views: Vec<_> = refs.iter().map(|r| r.view()).collect();
        ndarray::concatenate(Axis(1), &views).expect("concat shapes")
    };
    let widths: Vec<usize> = parts.iter().map(|p| p.shape()[1]).collect();
    g.push_op(
        v,
        parts.iter().map(|p| p.id).collect(),
        Box::new(move |grad, _| {
            let mut out = Vec::with_capacity(widths.len());
            let mut start = 0;
            for &w in &widths {
                let piece = grad
                    .slice_axis(Axis(1), ndarray::Slice::from(start..start + w))
                    .to_owned();
                out.push(Some(piece));
                start += w;
            }
            out
        }),
    )
}

/// Slice `[start, stop)` along axis 1.
pub fn slice_channels<F: Element>(x: &Tensor<F>, start: usize, stop: usize) -> Tensor<F> {
    assert!(start < stop && stop <= x.shape()[1], "slice out of range");
    let g = x.graph().clone();
    let v = x
        .value()
        .slice_axis(Axis(1), ndarray::Slice::from(start..stop))
        .to_owned();
    g.push_op(
        v,
        vec![x.id],
        Box::new(move |grad, args| {
            let mut dx = ArrayD::zeros(args.parents[0].raw_dim());
            dx.slice_axis_mut(Axis(1), ndarray::Slice::from(start..stop))
                .assign(grad);
            vec![Some(dx)]
        }),
    )
}

pub fn transpose2<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    assert_eq!(x.ndim(), 2, "transpose2 expects 2-d");
    let g = x.graph().clone();
    let v = {
        let xv = x.value();
        let mut t = ndarray::Array2::<F>::zeros((x.shape()[1], x.shape()[0]));
        t.assign(&xv.t());
        t.into_dyn()
    };
    g.push_op(
        v,
        vec![x.id],
        Box::new(|grad, _| {
            let g2 = grad.view().into_dimensionality::<Ix2>().expect("2d");
            let mut t = ndarray::Array2::<F>::zeros((g2.ncols(), g2.nrows()));
            t.assign(&g2.t());
            vec![Some(t.into_dyn())]
        }),
    )
}

// -- linear algebra ------------------------------------------------------------

/// Matrix product of [m, k] x [k, n].
pub fn matmul<F: Element>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    assert_eq!(a.ndim(), 2, "matmul lhs must be 2-d");
    assert_eq!(b.ndim(), 2, "matmul rhs must be 2-d");
    assert_eq!(a.shape()[1], b.shape()[0], "matmul inner dims differ");
    let g = same_graph(a, b);
    let v = {
        let av = a.value();
        let bv = b.value();
        let a2 = av.view().into_dimensionality::<Ix2>().expect("2d");
        let b2 = bv.view().into_dimensionality::<Ix2>().expect("2d");
        a2.dot(&b2).into_dyn()
    };
    g.push_op(
        v,
        vec![a.id, b.id],
        Box::new(|grad, args| {
            let g2 = grad.view().into_dimensionality::<Ix2>().expect("2d");
            let a2 = args.parents[0].view().into_dimensionality::<Ix2>().expect("2d");
            let b2 = args.parents[1].view().into_dimensionality::<Ix2>().expect("2d");
            let da = g2.dot(&b2.t()).into_dyn();
            let db = a2.t().dot(&g2).into_dyn();
            vec![Some(da), Some(db)]
        }),
    )
}

// -- pooling ---------------------------------------------------------------------

/// 2x2 average pooling with stride 2 on [B, C, H, W] (H, W even).
pub fn avg_pool2<F: Element>(x: &Tensor<F>) -> Tensor<F> {
    assert_eq!(x.ndim(), 4, "avg_pool2 expects [B, C, H, W]");
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even spatial dims");
    let g = x.graph().clone();
    let quarter = F::from_f64(0.25);
    let out = {
        let xv = x.value();
        let x4 = xv.view().into_dimensionality::<ndarray::Ix4>().expect("4d");
        let mut out = ndarray::Array4::<F>::zeros((b, c, h / 2, w / 2));
        for bi in 0..b {
            for ci in 0..c {
                for y in 0..h / 2 {
                    for xw in 0..w / 2 {
                        let s = x4[[bi, ci, 2 * y, 2 * xw]]
                            + x4[[bi, ci, 2 * y, 2 * xw + 1]]
                            + x4[[bi, ci, 2 * y + 1, 2 * xw]]
                            + x4[[bi, ci, 2 * y + 1, 2 * xw + 1]];
                        out[[bi, ci, y, xw]] = s * quarter;
                    }
                }
            }
        }
        out
    };
    g.push_op(
        out.into_dyn(),
        vec![x.id],
        Box::new(move |grad, args| {
            let mut dx = ArrayD::zeros(args.parents[0].raw_dim());
            {
                let mut d4 = dx
                    .view_mut()
                    .into_dimensionality::<ndarray::Ix4>()
                    .expect("4d");
                let g4 = grad.view().into_dimensionality::<ndarray::Ix4>().expect("4d");
                for bi in 0..g4.shape()[0] {
                    for ci in 0..g4.shape()[1] {
                        for y in 0..g4.shape()[2] {
                            for xw in 0..g4.shape()[3] {
                                let gv = g4[[bi, ci, y, xw]] * quarter;
                                d4[[bi, ci, 2 * y, 2 * xw]] = gv;
                                d4[[bi, ci, 2 * y, 2 * xw + 1]] = gv;
                                d4[[bi, ci, 2 * y + 1, 2 * xw]] = gv;
                                d4[[bi, ci, 2 * y + 1, 2 * xw + 1]] = gv;
                            }
                        }
                    }
                }
            }
            vec![Some(dx)]
        }),
    )
}

// -- composites --------------------------------------------------------------------

/// Per-sample, per-channel normalization over spatial positions:
/// `(x - mean) / sqrt(var + eps)`, the statistics half of AdaIN.
pub fn instance_norm<F: Element>(x: &Tensor<F>, eps: F) -> Tensor<F> {
    let (h, w) = (x.shape()[2], x.shape()[3]);
    let mu = mean_spatial(x);
    let centered = sub(x, &expand_spatial(&mu, h, w));
    let var = mean_spatial(&mul(&centered, &centered));
    let rstd = recip(&sqrt(&add_scalar(&var, eps)));
    mul(&centered, &expand_spatial(&rstd, h, w))
}

/// Mean absolute difference between same-shaped tensors.
pub fn mean_abs_diff<F: Element>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    mean_all(&abs(&sub(a, b)))
}

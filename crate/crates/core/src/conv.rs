//! Strided 2-d convolution and transposed convolution with gradients.
//!
//! Both directions are expressed through one gather (`im2col`) and one
//! scatter-add (`col2im`) plus GEMM, so the forward/backward pairs are exact
//! adjoints of each other. Batch elements are independent and may be computed
//! in parallel without changing results.

use crate::graph::{Element, Tensor};
use crate::ops::same_graph;
use crate::util::par_map;
use ndarray::{Array2, Array3, ArrayD, ArrayView2, ArrayView3, Axis, Ix4};

/// Output size of a strided convolution along one axis.
pub fn conv_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Output size of a strided transposed convolution along one axis.
pub fn conv_transpose_out_size(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> usize {
    (input - 1) * stride + kernel + out_pad - 2 * pad
}

/// Gather patches of `img` ([C, H, W]) into a [C*kh*kw, ph*pw] matrix, where
/// position (py, px) reads pixel (py*s + ki - p, px*s + kj - p), zero outside.
fn im2col<F: Element>(
    img: ArrayView3<'_, F>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ph: usize,
    pw: usize,
) -> Array2<F> {
    let (c, h, w) = img.dim();
    let mut cols = Array2::<F>::zeros((c * kh * kw, ph * pw));
    let src = img.as_slice().expect("contiguous image");
    let dst = cols.as_slice_mut().expect("freshly allocated");
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let row_off = row * ph * pw;
                for py in 0..ph {
                    let y = (py * stride + ki) as isize - pad as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let src_row = (ci * h + y as usize) * w;
                    let dst_row = row_off + py * pw;
                    for px in 0..pw {
                        let x = (px * stride + kj) as isize - pad as isize;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        dst[dst_row + px] = src[src_row + x as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add a [C*kh*kw, ph*pw] matrix back into an
/// image of shape [C, H, W].
fn col2im<F: Element>(
    cols: ArrayView2<'_, F>,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ph: usize,
    pw: usize,
) -> Array3<F> {
    let mut img = Array3::<F>::zeros((c, h, w));
    let dst = img.as_slice_mut().expect("freshly allocated");
    let src = cols.as_slice().expect("contiguous cols");
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let row_off = row * ph * pw;
                for py in 0..ph {
                    let y = (py * stride + ki) as isize - pad as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let dst_row = (ci * h + y as usize) * w;
                    let src_row = row_off + py * pw;
                    for px in 0..pw {
                        let x = (px * stride + kj) as isize - pad as isize;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        let d = &mut dst[dst_row + x as usize];
                        *d = *d + src[src_row + px];
                    }
                }
            }
        }
    }
    img
}

/// 2-d convolution: x [B, C, H, W] * w [OC, C, KH, KW] -> [B, OC, OH, OW].
/// Bias is applied separately via [`crate::ops::add_bias`].
pub fn conv2d<F: Element>(x: &Tensor<F>, w: &Tensor<F>, stride: usize, pad: usize) -> Tensor<F> {
    assert_eq!(x.ndim(), 4, "conv2d input must be [B, C, H, W]");
    assert_eq!(w.ndim(), 4, "conv2d weight must be [OC, C, KH, KW]");
    assert_eq!(x.shape()[1], w.shape()[1], "conv2d channel mismatch");
    let g = same_graph(x, w);
    let (b, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oc, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let oh = conv_out_size(h, kh, stride, pad);
    let ow = conv_out_size(wd, kw, stride, pad);

    let out = {
        let xv = x.value();
        let wv = w.value();
        let x4 = xv.view().into_dimensionality::<Ix4>().expect("4d");
        let w2 = wv
            .view()
            .into_shape_with_order((oc, c * kh * kw))
            .expect("standard layout weight");
        let per_sample = par_map(b, |bi| {
            let cols = im2col(x4.index_axis(Axis(0), bi), kh, kw, stride, pad, oh, ow);
            w2.dot(&cols)
        });
        let mut out = ArrayD::<F>::zeros(ndarray::IxDyn(&[b, oc, oh, ow]));
        for (bi, m) in per_sample.into_iter().enumerate() {
            out.index_axis_mut(Axis(0), bi).assign(
                &m.into_shape_with_order((oc, oh, ow)).expect("conv out"),
            );
        }
        out
    };

    let needs_dx = x.requires_grad();
    let needs_dw = w.requires_grad();
    g.push_op(
        out,
        vec![x.id, w.id],
        Box::new(move |grad, args| {
            let x4 = args.parents[0].view().into_dimensionality::<Ix4>().expect("4d");
            let w2 = args.parents[1]
                .view()
                .into_shape_with_order((oc, c * kh * kw))
                .expect("standard layout weight");
            let g4 = grad.view().into_dimensionality::<Ix4>().expect("4d");
            let per_sample = par_map(g4.shape()[0], |bi| {
                let g2 = g4
                    .index_axis(Axis(0), bi)
                    .into_shape_with_order((oc, oh * ow))
                    .expect("contiguous grad");
                let dx = needs_dx.then(|| {
                    let cols = col2im(
                        w2.t().dot(&g2).view(),
                        c,
                        h,
                        wd,
                        kh,
                        kw,
                        stride,
                        pad,
                        oh,
                        ow,
                    );
                    cols
                });
                let dw = needs_dw.then(|| {
                    let cols = im2col(x4.index_axis(Axis(0), bi), kh, kw, stride, pad, oh, ow);
                    g2.dot(&cols.t())
                });
                (dx, dw)
            });
            let mut dx_total = needs_dx.then(|| ArrayD::<F>::zeros(args.parents[0].raw_dim()));
            let mut dw_total = needs_dw.then(|| Array2::<F>::zeros((oc, c * kh * kw)));
            for (bi, (dx, dw)) in per_sample.into_iter().enumerate() {
                if let (Some(total), Some(dx)) = (dx_total.as_mut(), dx) {
                    total.index_axis_mut(Axis(0), bi).assign(&dx);
                }
                if let (Some(total), Some(dw)) = (dw_total.as_mut(), dw) {
                    total.zip_mut_with(&dw, |a, &b| *a = *a + b);
                }
            }
            vec![
                dx_total,
                dw_total.map(|d| {
                    d.into_shape_with_order((oc, c, kh, kw))
                        .expect("weight shape")
                        .into_dyn()
                }),
            ]
        }),
    )
}

/// Transposed 2-d convolution: x [B, C, H, W] * w [C, OC, KH, KW] ->
/// [B, OC, OH, OW] with OH = (H-1)*stride + KH + out_pad - 2*pad.
pub fn conv_transpose2d<F: Element>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> Tensor<F> {
    assert_eq!(x.ndim(), 4, "conv_transpose2d input must be [B, C, H, W]");
    assert_eq!(w.ndim(), 4, "conv_transpose2d weight must be [C, OC, KH, KW]");
    assert_eq!(x.shape()[1], w.shape()[0], "conv_transpose2d channel mismatch");
    assert!(out_pad < stride, "output padding must be < stride");
    let g = same_graph(x, w);
    let (b, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oc, kh, kw) = (w.shape()[1], w.shape()[2], w.shape()[3]);
    let oh = conv_transpose_out_size(h, kh, stride, pad, out_pad);
    let ow = conv_transpose_out_size(wd, kw, stride, pad, out_pad);

    let out = {
        let xv = x.value();
        let wv = w.value();
        let x4 = xv.view().into_dimensionality::<Ix4>().expect("4d");
        let wf = wv
            .view()
            .into_shape_with_order((c, oc * kh * kw))
            .expect("standard layout weight");
        let per_sample = par_map(b, |bi| {
            let xf = x4
                .index_axis(Axis(0), bi)
                .into_shape_with_order((c, h * wd))
                .expect("contiguous input");
            let cols = wf.t().dot(&xf);
            col2im(cols.view(), oc, oh, ow, kh, kw, stride, pad, h, wd)
        });
        let mut out = ArrayD::<F>::zeros(ndarray::IxDyn(&[b, oc, oh, ow]));
        for (bi, m) in per_sample.into_iter().enumerate() {
            out.index_axis_mut(Axis(0), bi).assign(&m);
        }
        out
    };

    let needs_dx = x.requires_grad();
    let needs_dw = w.requires_grad();
    g.push_op(
        out,
        vec![x.id, w.id],
        Box::new(move |grad, args| {
            let x4 = args.parents[0].view().into_dimensionality::<Ix4>().expect("4d");
            let wf = args.parents[1]
                .view()
                .into_shape_with_order((c, oc * kh * kw))
                .expect("standard layout weight");
            let g4 = grad.view().into_dimensionality::<Ix4>().expect("4d");
            let per_sample = par_map(g4.shape()[0], |bi| {
                // Gathering grad patches at the input grid is the shared step
                // of both parent gradients.
                let cols = im2col(g4.index_axis(Axis(0), bi), kh, kw, stride, pad, h, wd);
                let dx = needs_dx.then(|| wf.dot(&cols));
                let dw = needs_dw.then(|| {
                    let xf = x4
                        .index_axis(Axis(0), bi)
                        .into_shape_with_order((c, h * wd))
                        .expect("contiguous input");
                    xf.dot(&cols.t())
                });
                (dx, dw)
            });
            let mut dx_total = needs_dx.then(|| ArrayD::<F>::zeros(args.parents[0].raw_dim()));
            let mut dw_total = needs_dw.then(|| Array2::<F>::zeros((c, oc * kh * kw)));
            for (bi, (dx, dw)) in per_sample.into_iter().enumerate() {
                if let (Some(total), Some(dx)) = (dx_total.as_mut(), dx) {
                    total.index_axis_mut(Axis(0), bi).assign(
                        &dx.into_shape_with_order((c, h, wd)).expect("input shape"),
                    );
                }
                if let (Some(total), Some(dw)) = (dw_total.as_mut(), dw) {
                    total.zip_mut_with(&dw, |a, &b| *a = *a + b);
                }
            }
            vec![
                dx_total,
                dw_total.map(|d| {
                    d.into_shape_with_order((c, oc, kh, kw))
                        .expect("weight shape")
                        .into_dyn()
                }),
            ]
        }),
    )
}

//! Corner-aligned bilinear resize for 8-bit images and sector masks.

use crate::recon::compress::round_half_up_u8;

/// Source coordinate of output index `i` under corner alignment.
#[inline]
fn src_pos(i: usize, src_len: usize, out_len: usize) -> f64 {
    if out_len > 1 {
        i as f64 * (src_len as f64 - 1.0) / (out_len as f64 - 1.0)
    } else {
        0.0
    }
}

#[inline]
fn split(pos: f64, src_len: usize) -> (usize, f64) {
    let lo = (pos.floor() as usize).min(src_len.saturating_sub(2));
    (lo, pos - lo as f64)
}

/// Bilinear resize with corner-aligned sample positions, rounded half up
/// to 8 bits. An identity-size resize is bit-identical to the input.
pub fn resize_bilinear(
    src: &[u8],
    src_h: usize,
    src_w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<u8> {
    assert!(src_h >= 2 && src_w >= 2, "source must be at least 2x2");
    assert_eq!(src.len(), src_h * src_w);
    assert!(out_h >= 1 && out_w >= 1);

    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let (r0, tr) = split(src_pos(i, src_h, out_h), src_h);
        for j in 0..out_w {
            let (c0, tc) = split(src_pos(j, src_w, out_w), src_w);
            let base = r0 * src_w + c0;
            let top = lerp(src[base] as f64, src[base + 1] as f64, tc);
            let bot = lerp(src[base + src_w] as f64, src[base + src_w + 1] as f64, tc);
            out.push(round_half_up_u8(lerp(top, bot, tr)));
        }
    }
    out
}

/// Resize a boolean in-sector mask along the same coordinate map: an output
/// pixel is in-sector when any source pixel with nonzero bilinear weight is.
pub fn resize_mask(
    src: &[bool],
    src_h: usize,
    src_w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<bool> {
    assert!(src_h >= 2 && src_w >= 2, "source must be at least 2x2");
    assert_eq!(src.len(), src_h * src_w);

    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let (r0, tr) = split(src_pos(i, src_h, out_h), src_h);
        for j in 0..out_w {
            let (c0, tc) = split(src_pos(j, src_w, out_w), src_w);
            let base = r0 * src_w + c0;
            let mut hit = false;
            for (dr, wr) in [(0usize, 1.0 - tr), (1, tr)] {
                for (dc, wc) in [(0usize, 1.0 - tc), (1, tc)] {
                    if wr * wc != 0.0 && src[base + dr * src_w + dc] {
                        hit = true;
                    }
                }
            }
            out.push(hit);
        }
    }
    out
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

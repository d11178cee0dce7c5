//! Seeded image augmentation operators and the Few/Extensive presets.
//!
//! Every operator is a pure function of (input, rng state, parameters) and
//! consumes a fixed number of RNG draws regardless of the values drawn, so a
//! sample's output depends only on its seed — never on which worker ran it
//! or what happened to other samples. Floating-point expressions are pinned:
//! two code paths that claim bitwise equality (fused vs composed ops, the
//! concurrent pipeline vs its reference) evaluate identical expressions.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::rng::SampleRng;
use crate::tensor::{Dtype, ImageTensor, PixelBuf};

/// Classic ImageNet-style normalization constants.
pub const DEFAULT_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const DEFAULT_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentOp {
    ResizeShortSide { target: u32 },
    RandomCrop { out_h: u32, out_w: u32 },
    RandomHFlip { p: f64 },
    ColorJitter { brightness: f64, contrast: f64, saturation: f64 },
    Normalize { mean: [f32; 3], std: [f32; 3] },
    FusedCropNormalize { out_h: u32, out_w: u32, mean: [f32; 3], std: [f32; 3] },
}

impl AugmentOp {
    /// How many RNG draws the op consumes — fixed per variant, never
    /// data-dependent.
    pub fn rng_draws(&self) -> u32 {
        match self {
            AugmentOp::ResizeShortSide { .. } => 0,
            AugmentOp::RandomCrop { .. } => 2,
            AugmentOp::RandomHFlip { .. } => 1,
            AugmentOp::ColorJitter { .. } => 3,
            AugmentOp::Normalize { .. } => 0,
            AugmentOp::FusedCropNormalize { .. } => 2,
        }
    }

    /// True for the ops that end a chain (at most one allowed, last).
    pub fn is_normalize_family(&self) -> bool {
        matches!(self, AugmentOp::Normalize { .. } | AugmentOp::FusedCropNormalize { .. })
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        match *self {
            AugmentOp::ResizeShortSide { target } => {
                if target == 0 {
                    return Err(CoreError::InvalidArgument("resize target must be ≥ 1"));
                }
            }
            AugmentOp::RandomCrop { out_h, out_w }
            | AugmentOp::FusedCropNormalize { out_h, out_w, .. } => {
                if out_h == 0 || out_w == 0 {
                    return Err(CoreError::InvalidArgument("crop dims must be ≥ 1"));
                }
            }
            AugmentOp::RandomHFlip { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(CoreError::InvalidArgument("flip probability must be in [0, 1]"));
                }
            }
            AugmentOp::ColorJitter { brightness, contrast, saturation } => {
                for s in [brightness, contrast, saturation] {
                    if !(s >= 0.0 && s.is_finite()) {
                        return Err(CoreError::InvalidArgument("jitter strengths must be ≥ 0"));
                    }
                }
            }
            AugmentOp::Normalize { .. } => {}
        }
        if let AugmentOp::Normalize { std, .. } | AugmentOp::FusedCropNormalize { std, .. } = *self
        {
            if std.iter().any(|&s| !(s > 0.0)) {
                return Err(CoreError::InvalidArgument("std components must be > 0"));
            }
        }
        Ok(())
    }
}

/// An ordered list of ops with at most one Normalize-family op, last.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentChain {
    ops: Vec<AugmentOp>,
}

impl AugmentChain {
    pub fn new(ops: Vec<AugmentOp>) -> Result<Self, CoreError> {
        for (i, op) in ops.iter().enumerate() {
            op.validate()?;
            if op.is_normalize_family() && i + 1 != ops.len() {
                return Err(CoreError::InvalidArgument("normalize op must be last in the chain"));
            }
        }
        Ok(AugmentChain { ops })
    }

    pub fn ops(&self) -> &[AugmentOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentPreset {
    Few,
    Extensive,
}

impl AugmentPreset {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "few" => Some(AugmentPreset::Few),
            "extensive" => Some(AugmentPreset::Extensive),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AugmentPreset::Few => "few",
            AugmentPreset::Extensive => "extensive",
        }
    }

    /// Few: resize-short-side 256 → random crop 224 → random hflip.
    /// Extensive: Few plus ColorJitter(0.4, 0.4, 0.4) before Normalize.
    pub fn chain(&self) -> AugmentChain {
        let mut ops = alloc::vec![
            AugmentOp::ResizeShortSide { target: 256 },
            AugmentOp::RandomCrop { out_h: 224, out_w: 224 },
            AugmentOp::RandomHFlip { p: 0.5 },
        ];
        if let AugmentPreset::Extensive = self {
            ops.push(AugmentOp::ColorJitter { brightness: 0.4, contrast: 0.4, saturation: 0.4 });
        }
        ops.push(AugmentOp::Normalize { mean: DEFAULT_MEAN, std: DEFAULT_STD });
        AugmentChain::new(ops).expect("presets are valid by construction")
    }
}

fn value_as_f32(buf: &PixelBuf, i: usize) -> f32 {
    match buf {
        PixelBuf::U8(v) => v[i] as f32,
        PixelBuf::F32(v) => v[i],
    }
}

/// Bilinear resize with the half-pixel-center convention:
/// `src = (dst + 0.5) × (src_dim / dst_dim) − 0.5`, clamped to
/// `[0, src_dim − 1]`. Blending uses the incremental form
/// `a + (b − a)·w`, which is exact when a = b, so constant images stay
/// constant and identity resizes return the input values bit-for-bit.
pub fn resize_bilinear(img: &ImageTensor, out_h: u32, out_w: u32) -> Result<ImageTensor, CoreError> {
    if out_h == 0 || out_w == 0 {
        return Err(CoreError::InvalidArgument("resize output dims must be ≥ 1"));
    }
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let axis = |out_dim: u32, src_dim: u32| -> Vec<(usize, usize, f32)> {
        let scale = src_dim as f64 / out_dim as f64;
        (0..out_dim)
            .map(|o| {
                let mut s = (o as f64 + 0.5) * scale - 0.5;
                if s < 0.0 {
                    s = 0.0;
                }
                let max = (src_dim - 1) as f64;
                if s > max {
                    s = max;
                }
                let lo = libm::floor(s) as usize;
                let hi = (lo + 1).min(src_dim as usize - 1);
                (lo, hi, (s - lo as f64) as f32)
            })
            .collect()
    };
    let rows = axis(out_h, h);
    let cols = axis(out_w, w);

    let cu = c as usize;
    let src_row = w as usize * cu;
    let buf = img.data();
    let mut out = Vec::with_capacity(out_h as usize * out_w as usize * cu);
    for &(y0, y1, wy) in &rows {
        for &(x0, x1, wx) in &cols {
            let base00 = y0 * src_row + x0 * cu;
            let base01 = y0 * src_row + x1 * cu;
            let base10 = y1 * src_row + x0 * cu;
            let base11 = y1 * src_row + x1 * cu;
            for ch in 0..cu {
                let v00 = value_as_f32(buf, base00 + ch);
                let v01 = value_as_f32(buf, base01 + ch);
                let v10 = value_as_f32(buf, base10 + ch);
                let v11 = value_as_f32(buf, base11 + ch);
                let top = v00 + (v01 - v00) * wx;
                let bottom = v10 + (v11 - v10) * wx;
                out.push(top + (bottom - top) * wy);
            }
        }
    }
    ImageTensor::from_f32(out_h, out_w, c, out)
}

/// Scale so the short side equals `target`; the long side becomes
/// `round(long × target / short)`.
pub fn resize_short_side(img: &ImageTensor, target: u32) -> Result<ImageTensor, CoreError> {
    if target == 0 {
        return Err(CoreError::InvalidArgument("resize target must be ≥ 1"));
    }
    let (h, w) = (img.height(), img.width());
    let scaled = |long: u32, short: u32| -> u32 {
        libm::round(long as f64 * target as f64 / short as f64) as u32
    };
    let (out_h, out_w) = if h <= w { (target, scaled(w, h)) } else { (scaled(h, w), target) };
    resize_bilinear(img, out_h, out_w)
}

fn check_crop(img: &ImageTensor, out_h: u32, out_w: u32) -> Result<(), CoreError> {
    if out_h == 0 || out_w == 0 {
        return Err(CoreError::InvalidArgument("crop dims must be ≥ 1"));
    }
    if out_h > img.height() || out_w > img.width() {
        return Err(CoreError::InvalidArgument("crop larger than image"));
    }
    Ok(())
}

/// Draw the crop corner: top first, then left — two draws, always.
fn draw_crop_corner(img: &ImageTensor, rng: &mut SampleRng, out_h: u32, out_w: u32) -> (u32, u32) {
    let top = rng.next_below((img.height() - out_h + 1) as u64) as u32;
    let left = rng.next_below((img.width() - out_w + 1) as u64) as u32;
    (top, left)
}

pub fn random_crop(
    img: &ImageTensor,
    rng: &mut SampleRng,
    out_h: u32,
    out_w: u32,
) -> Result<ImageTensor, CoreError> {
    check_crop(img, out_h, out_w)?;
    let (top, left) = draw_crop_corner(img, rng, out_h, out_w);
    let cu = img.channels() as usize;
    let src_row = img.width() as usize * cu;
    let row_bytes = out_w as usize * cu;
    match img.data() {
        PixelBuf::U8(v) => {
            let mut out = Vec::with_capacity(out_h as usize * row_bytes);
            for y in 0..out_h as usize {
                let start = (top as usize + y) * src_row + left as usize * cu;
                out.extend_from_slice(&v[start..start + row_bytes]);
            }
            ImageTensor::from_u8(out_h, out_w, img.channels(), out)
        }
        PixelBuf::F32(v) => {
            let mut out = Vec::with_capacity(out_h as usize * row_bytes);
            for y in 0..out_h as usize {
                let start = (top as usize + y) * src_row + left as usize * cu;
                out.extend_from_slice(&v[start..start + row_bytes]);
            }
            ImageTensor::from_f32(out_h, out_w, img.channels(), out)
        }
    }
}

/// Mirror horizontally: out[y][x] = in[y][width−1−x].
pub fn hflip(img: &ImageTensor) -> ImageTensor {
    let (h, w, c) = (img.height() as usize, img.width() as usize, img.channels() as usize);
    fn flip_into<T: Copy>(v: &[T], h: usize, w: usize, c: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(v.len());
        for y in 0..h {
            let row = y * w * c;
            for x in 0..w {
                let src = row + (w - 1 - x) * c;
                out.extend_from_slice(&v[src..src + c]);
            }
        }
        out
    }
    match img.data() {
        PixelBuf::U8(v) => ImageTensor::from_u8(img.height(), img.width(), img.channels(), flip_into(v, h, w, c))
            .expect("same dims as input"),
        PixelBuf::F32(v) => ImageTensor::from_f32(img.height(), img.width(), img.channels(), flip_into(v, h, w, c))
            .expect("same dims as input"),
    }
}

/// Flip with probability `p`: u = (next_u64 ≫ 11) × 2⁻⁵³, flip iff u < p.
/// Exactly one draw either way.
pub fn random_hflip(img: &ImageTensor, rng: &mut SampleRng, p: f64) -> ImageTensor {
    debug_assert!((0.0..=1.0).contains(&p));
    let u = rng.next_unit_f64();
    if u < p {
        hflip(img)
    } else {
        img.clone()
    }
}

/// Luma of one RGB pixel. Algebraically 0.299R + 0.587G + 0.114B, but
/// evaluated as R + 0.587(G−R) + 0.114(B−R) so that gray pixels (R=G=B)
/// yield L = R exactly — the saturation identity on gray images depends on
/// that exactness.
fn luma(r: f32, g: f32, b: f32) -> f32 {
    r + 0.587f32 * (g - r) + 0.114f32 * (b - r)
}

/// Apply fixed jitter factors in brightness → contrast → saturation order.
/// A factor of exactly 1.0 skips its pass outright: multiplication by 1.0
/// would be bit-exact anyway, but the contrast/saturation affine forms
/// (`m + (v−m)·f`) would not, and zero-strength jitter must be an identity.
pub fn apply_color_factors(
    img: &ImageTensor,
    f_brightness: f64,
    f_contrast: f64,
    f_saturation: f64,
) -> Result<ImageTensor, CoreError> {
    if img.channels() != 3 {
        return Err(CoreError::InvalidArgument("color jitter needs an RGB image"));
    }
    let mut data = match img.data() {
        PixelBuf::F32(v) => v.clone(),
        PixelBuf::U8(_) => return Err(CoreError::InvalidArgument("color jitter needs f32 input")),
    };

    if f_brightness != 1.0 {
        let f = f_brightness as f32;
        for v in data.iter_mut() {
            *v *= f;
        }
    }

    if f_contrast != 1.0 {
        let f = f_contrast as f32;
        // Scalar mean over the luma image, accumulated in f64 in pixel order.
        let mut sum = 0.0f64;
        for px in data.chunks_exact(3) {
            sum += luma(px[0], px[1], px[2]) as f64;
        }
        let mean_gray = (sum / (data.len() / 3) as f64) as f32;
        for v in data.iter_mut() {
            *v = mean_gray + (*v - mean_gray) * f;
        }
    }

    if f_saturation != 1.0 {
        let f = f_saturation as f32;
        for px in data.chunks_exact_mut(3) {
            let l = luma(px[0], px[1], px[2]);
            for v in px.iter_mut() {
                *v = l + (*v - l) * f;
            }
        }
    }

    ImageTensor::from_f32(img.height(), img.width(), img.channels(), data)
}

fn draw_jitter_factor(rng: &mut SampleRng, strength: f64) -> f64 {
    let lo = if 1.0 - strength > 0.0 { 1.0 - strength } else { 0.0 };
    let hi = 1.0 + strength;
    // strength 0 → lo = hi = 1 → factor exactly 1.0, draw still consumed.
    lo + rng.next_unit_f64() * (hi - lo)
}

/// Random brightness/contrast/saturation. Three factors drawn in that fixed
/// order, each uniform in [max(0, 1−s), 1+s]; one draw per factor even when
/// the strength is 0. No clamping — Normalize follows in real chains.
pub fn color_jitter(
    img: &ImageTensor,
    rng: &mut SampleRng,
    brightness: f64,
    contrast: f64,
    saturation: f64,
) -> Result<ImageTensor, CoreError> {
    let f_b = draw_jitter_factor(rng, brightness);
    let f_c = draw_jitter_factor(rng, contrast);
    let f_s = draw_jitter_factor(rng, saturation);
    apply_color_factors(img, f_b, f_c, f_s)
}

fn check_normalize(img: &ImageTensor, std: &[f32; 3]) -> Result<(), CoreError> {
    if img.channels() != 3 {
        return Err(CoreError::InvalidArgument("normalize needs a 3-channel image"));
    }
    if std.iter().any(|&s| s == 0.0) {
        return Err(CoreError::InvalidArgument("std components must be non-zero"));
    }
    Ok(())
}

/// Per channel: out = (f32(in) / 255.0 − mean) / std, in exactly that order.
pub fn normalize(img: &ImageTensor, mean: [f32; 3], std: [f32; 3]) -> Result<ImageTensor, CoreError> {
    check_normalize(img, &std)?;
    let n = img.value_count();
    let buf = img.data();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let ch = i % 3;
        out.push((value_as_f32(buf, i) / 255.0 - mean[ch]) / std[ch]);
    }
    ImageTensor::from_f32(img.height(), img.width(), img.channels(), out)
}

/// Crop and normalize in one pass over the window. Draw order matches
/// random_crop and the per-element arithmetic matches normalize exactly,
/// so the output is bitwise equal to `normalize(random_crop(..))` — the
/// fusion only removes the intermediate buffer.
pub fn fused_crop_normalize(
    img: &ImageTensor,
    rng: &mut SampleRng,
    out_h: u32,
    out_w: u32,
    mean: [f32; 3],
    std: [f32; 3],
) -> Result<ImageTensor, CoreError> {
    check_crop(img, out_h, out_w)?;
    check_normalize(img, &std)?;
    let (top, left) = draw_crop_corner(img, rng, out_h, out_w);
    let cu = img.channels() as usize;
    let src_row = img.width() as usize * cu;
    let buf = img.data();
    let mut out = Vec::with_capacity(out_h as usize * out_w as usize * cu);
    for y in 0..out_h as usize {
        let start = (top as usize + y) * src_row + left as usize * cu;
        for i in start..start + out_w as usize * cu {
            let ch = i % 3;
            out.push((value_as_f32(buf, i) / 255.0 - mean[ch]) / std[ch]);
        }
    }
    ImageTensor::from_f32(out_h, out_w, img.channels(), out)
}

/// Run one op against a shared RNG.
pub fn apply_op(img: &ImageTensor, op: &AugmentOp, rng: &mut SampleRng) -> Result<ImageTensor, CoreError> {
    match *op {
        AugmentOp::ResizeShortSide { target } => resize_short_side(img, target),
        AugmentOp::RandomCrop { out_h, out_w } => random_crop(img, rng, out_h, out_w),
        AugmentOp::RandomHFlip { p } => Ok(random_hflip(img, rng, p)),
        AugmentOp::ColorJitter { brightness, contrast, saturation } => {
            color_jitter(img, rng, brightness, contrast, saturation)
        }
        AugmentOp::Normalize { mean, std } => normalize(img, mean, std),
        AugmentOp::FusedCropNormalize { out_h, out_w, mean, std } => {
            fused_crop_normalize(img, rng, out_h, out_w, mean, std)
        }
    }
}

/// Apply a whole chain with one RNG seeded from `seed`; ops share the RNG in
/// order. Output is always f32 (a raw cast caps chains with no Normalize).
pub fn apply_chain(img: &ImageTensor, chain: &AugmentChain, seed: u64) -> Result<ImageTensor, CoreError> {
    let mut rng = SampleRng::new(seed);
    let mut cur = img.clone();
    for (index, op) in chain.ops().iter().enumerate() {
        cur = apply_op(&cur, op, &mut rng)
            .map_err(|source| CoreError::ChainOp { index, source: Box::new(source) })?;
    }
    if cur.dtype() == Dtype::U8 {
        cur = cur.into_f32();
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sample_seed;
    use alloc::vec;

    fn seeded_u8_image(h: u32, w: u32, seed: u64) -> ImageTensor {
        let mut rng = SampleRng::new(seed);
        let data: Vec<u8> = (0..h as usize * w as usize * 3).map(|_| rng.next_u64() as u8).collect();
        ImageTensor::from_u8(h, w, 3, data).unwrap()
    }

    fn seeded_f32_image(h: u32, w: u32, seed: u64) -> ImageTensor {
        seeded_u8_image(h, w, seed).into_f32()
    }

    fn advanced(mut rng: SampleRng, draws: u32) -> u64 {
        for _ in 0..draws {
            rng.next_u64();
        }
        rng.state()
    }

    #[test]
    fn resize_identity_at_same_dims() {
        let img = seeded_u8_image(5, 7, 1);
        let out = resize_bilinear(&img, 5, 7).unwrap();
        assert!(out.bitwise_eq(&img.clone().into_f32()));
    }

    #[test]
    fn resize_constant_image_stays_constant() {
        let img = ImageTensor::from_u8(3, 5, 3, vec![42; 45]).unwrap();
        for (oh, ow) in [(1, 1), (2, 9), (7, 3), (16, 16)] {
            let out = resize_bilinear(&img, oh, ow).unwrap();
            assert!(out.as_f32().unwrap().iter().all(|&v| v == 42.0), "{oh}x{ow}");
        }
    }

    #[test]
    fn resize_halfpixel_midpoint() {
        // 1×2 gray [0, 255] to 1×1: both sources weighted 0.5 → 127.5.
        let img = ImageTensor::from_u8(1, 2, 3, vec![0, 0, 0, 255, 255, 255]).unwrap();
        let out = resize_bilinear(&img, 1, 1).unwrap();
        assert_eq!(out.as_f32().unwrap(), &[127.5, 127.5, 127.5]);
    }

    #[test]
    fn resize_2x2_to_1x1_blend() {
        // Hand evaluation of the pinned incremental blend at wx = wy = 0.5:
        // top = 0 + (100−0)·0.5 = 50, bottom = 200 + (40−200)·0.5 = 120,
        // out = 50 + (120−50)·0.5 = 85.
        let img = ImageTensor::from_u8(
            2,
            2,
            3,
            vec![0, 0, 0, 100, 100, 100, 200, 200, 200, 40, 40, 40],
        )
        .unwrap();
        let out = resize_bilinear(&img, 1, 1).unwrap();
        assert_eq!(out.as_f32().unwrap(), &[85.0, 85.0, 85.0]);
    }

    #[test]
    fn resize_rejects_zero_dims() {
        let img = seeded_u8_image(2, 2, 3);
        assert!(matches!(resize_bilinear(&img, 0, 1), Err(CoreError::InvalidArgument(_))));
        assert!(matches!(resize_bilinear(&img, 1, 0), Err(CoreError::InvalidArgument(_))));
    }

    #[test]
    fn resize_short_side_dimensions() {
        let img = seeded_u8_image(256, 512, 4);
        let out = resize_short_side(&img, 256).unwrap();
        assert_eq!((out.height(), out.width()), (256, 512));
        // Values unchanged: identity mapping at equal dims.
        assert!(out.bitwise_eq(&img.clone().into_f32()));

        let img = seeded_u8_image(100, 200, 5);
        let out = resize_short_side(&img, 50).unwrap();
        assert_eq!((out.height(), out.width()), (50, 100));

        // round(200 × 50 / 99) = round(101.0101…) = 101.
        let img = seeded_u8_image(99, 200, 6);
        let out = resize_short_side(&img, 50).unwrap();
        assert_eq!((out.height(), out.width()), (50, 101));

        // Portrait orientation: width is the short side.
        let img = seeded_u8_image(200, 99, 6);
        let out = resize_short_side(&img, 50).unwrap();
        assert_eq!((out.height(), out.width()), (101, 50));
    }

    #[test]
    fn crop_full_size_is_identity_with_two_draws() {
        let img = seeded_u8_image(4, 6, 7);
        let mut rng = SampleRng::new(123);
        let out = random_crop(&img, &mut rng, 4, 6).unwrap();
        assert!(out.bitwise_eq(&img));
        assert_eq!(rng.state(), advanced(SampleRng::new(123), 2));
    }

    #[test]
    fn crop_corner_matches_pinned_draws() {
        // From state 0xDEADBEEF the first two draws are 0x4ADFB90F68C9EB9B
        // and 0xDE586A3141A10922; mod 2 they select top = 1, left = 0.
        let mut probe = SampleRng::new(0xDEAD_BEEF);
        assert_eq!(probe.next_u64(), 0x4ADF_B90F_68C9_EB9B);
        assert_eq!(probe.next_u64(), 0xDE58_6A31_41A1_0922);

        let img = ImageTensor::from_u8(2, 2, 3, (0..12).collect()).unwrap();
        let mut rng = SampleRng::new(0xDEAD_BEEF);
        let out = random_crop(&img, &mut rng, 1, 1).unwrap();
        // Pixel (y=1, x=0) holds bytes 6, 7, 8.
        assert_eq!(out.as_u8().unwrap(), &[6, 7, 8]);
    }

    #[test]
    fn crop_preserves_dtype_and_rejects_oversize() {
        let img = seeded_f32_image(3, 3, 8);
        let mut rng = SampleRng::new(0);
        let out = random_crop(&img, &mut rng, 2, 2).unwrap();
        assert_eq!(out.dtype(), Dtype::F32);
        assert!(matches!(
            random_crop(&img, &mut rng, 4, 3),
            Err(CoreError::InvalidArgument("crop larger than image"))
        ));
        assert!(matches!(random_crop(&img, &mut rng, 0, 1), Err(CoreError::InvalidArgument(_))));
    }

    #[test]
    fn hflip_involution_and_width_one() {
        let img = seeded_u8_image(3, 4, 9);
        assert!(hflip(&hflip(&img)).bitwise_eq(&img));

        let thin = seeded_u8_image(5, 1, 10);
        assert!(hflip(&thin).bitwise_eq(&thin));

        // 1×2 [[A],[B]] → [[B],[A]]
        let ab = ImageTensor::from_u8(1, 2, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(hflip(&ab).as_u8().unwrap(), &[4, 5, 6, 1, 2, 3]);
    }

    #[test]
    fn random_hflip_probability_extremes_and_pinned_draw() {
        let img = seeded_u8_image(2, 3, 11);
        for seed in 0..20u64 {
            let mut rng = SampleRng::new(seed);
            assert!(random_hflip(&img, &mut rng, 0.0).bitwise_eq(&img));
            let mut rng = SampleRng::new(seed);
            assert!(random_hflip(&img, &mut rng, 1.0).bitwise_eq(&hflip(&img)));
        }
        // u(0xDEADBEEF) = 0.29247624040798537 < 0.5 → flips.
        let mut rng = SampleRng::new(0xDEAD_BEEF);
        assert!(random_hflip(&img, &mut rng, 0.5).bitwise_eq(&hflip(&img)));
        // u(1) = 0.5665615751722809 ≥ 0.5 → stays.
        let mut rng = SampleRng::new(1);
        assert!(random_hflip(&img, &mut rng, 0.5).bitwise_eq(&img));
        // Exactly one draw either way.
        let mut rng = SampleRng::new(77);
        random_hflip(&img, &mut rng, 0.5);
        assert_eq!(rng.state(), advanced(SampleRng::new(77), 1));
    }

    #[test]
    fn jitter_zero_strength_is_identity_with_three_draws() {
        let img = seeded_f32_image(4, 4, 12);
        let mut rng = SampleRng::new(999);
        let out = color_jitter(&img, &mut rng, 0.0, 0.0, 0.0).unwrap();
        assert!(out.bitwise_eq(&img));
        assert_eq!(rng.state(), advanced(SampleRng::new(999), 3));
    }

    #[test]
    fn jitter_factors_match_pinned_draws() {
        // Three unit draws from state 99 give factors 0.5 + u for s = 0.5:
        let mut probe = SampleRng::new(99);
        let f_b = 0.5 + probe.next_unit_f64();
        let f_c = 0.5 + probe.next_unit_f64();
        let f_s = 0.5 + probe.next_unit_f64();
        assert_eq!(f_b, 0.7615304715693846);
        assert_eq!(f_c, 0.5316577610861849);
        assert_eq!(f_s, 1.3347597245449443);

        let img = seeded_f32_image(3, 5, 13);
        let mut rng = SampleRng::new(99);
        let jittered = color_jitter(&img, &mut rng, 0.5, 0.5, 0.5).unwrap();
        let direct = apply_color_factors(&img, f_b, f_c, f_s).unwrap();
        assert!(jittered.bitwise_eq(&direct));
        assert_eq!(rng.state(), probe.state());
    }

    #[test]
    fn brightness_factor_zero_blacks_out() {
        let img = seeded_f32_image(2, 2, 14);
        let out = apply_color_factors(&img, 0.0, 1.0, 1.0).unwrap();
        assert!(out.as_f32().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturation_leaves_gray_untouched() {
        let mut vals = Vec::new();
        for v in [0.0f32, 1.0, 17.25, 254.9, 255.0] {
            vals.extend_from_slice(&[v, v, v]);
        }
        let gray = ImageTensor::from_f32(1, 5, 3, vals).unwrap();
        for f_s in [0.0, 0.25, 1.4, 3.0] {
            let out = apply_color_factors(&gray, 1.0, 1.0, f_s).unwrap();
            assert!(out.bitwise_eq(&gray), "f_s = {f_s}");
        }
    }

    #[test]
    fn jitter_rejects_wrong_input() {
        let u8_img = seeded_u8_image(2, 2, 15);
        let mut rng = SampleRng::new(0);
        assert!(matches!(
            color_jitter(&u8_img, &mut rng, 0.1, 0.1, 0.1),
            Err(CoreError::InvalidArgument(_))
        ));
        let gray = ImageTensor::from_f32(1, 1, 1, vec![0.5]).unwrap();
        let mut rng = SampleRng::new(0);
        assert!(matches!(
            color_jitter(&gray, &mut rng, 0.1, 0.1, 0.1),
            Err(CoreError::InvalidArgument(_))
        ));
    }

    #[test]
    fn normalize_pinned_values() {
        // (255/255 − 1)/1 = 0
        let img = ImageTensor::from_u8(1, 1, 3, vec![255, 255, 255]).unwrap();
        let out = normalize(&img, [1.0; 3], [1.0; 3]).unwrap();
        assert_eq!(out.as_f32().unwrap(), &[0.0, 0.0, 0.0]);

        // (0/255 − 0.5)/0.5 = −1
        let img = ImageTensor::from_u8(1, 1, 3, vec![0, 0, 0]).unwrap();
        let out = normalize(&img, [0.5; 3], [0.5; 3]).unwrap();
        assert_eq!(out.as_f32().unwrap(), &[-1.0, -1.0, -1.0]);

        // mean 0, std 1 → in/255
        let img = ImageTensor::from_u8(1, 1, 3, vec![51, 102, 204]).unwrap();
        let out = normalize(&img, [0.0; 3], [1.0; 3]).unwrap();
        assert_eq!(out.as_f32().unwrap(), &[51.0 / 255.0, 102.0 / 255.0, 204.0 / 255.0]);
    }

    #[test]
    fn normalize_rejects_zero_std_and_non_rgb() {
        let img = seeded_u8_image(1, 1, 16);
        assert!(matches!(
            normalize(&img, [0.0; 3], [1.0, 0.0, 1.0]),
            Err(CoreError::InvalidArgument(_))
        ));
        let gray = ImageTensor::from_u8(1, 1, 1, vec![7]).unwrap();
        assert!(matches!(normalize(&gray, [0.0; 3], [1.0; 3]), Err(CoreError::InvalidArgument(_))));
    }

    #[test]
    fn fused_equals_composed_over_many_random_cases() {
        let mut case_rng = SampleRng::new(0xF00D);
        for case in 0..200 {
            let h = 1 + case_rng.next_below(16) as u32;
            let w = 1 + case_rng.next_below(16) as u32;
            let out_h = 1 + case_rng.next_below(h as u64) as u32;
            let out_w = 1 + case_rng.next_below(w as u64) as u32;
            let img_seed = case_rng.next_u64();
            let img = if case % 2 == 0 {
                seeded_u8_image(h, w, img_seed)
            } else {
                seeded_f32_image(h, w, img_seed)
            };
            let seed = case_rng.next_u64();

            let mut rng_a = SampleRng::new(seed);
            let fused =
                fused_crop_normalize(&img, &mut rng_a, out_h, out_w, DEFAULT_MEAN, DEFAULT_STD)
                    .unwrap();
            let mut rng_b = SampleRng::new(seed);
            let cropped = random_crop(&img, &mut rng_b, out_h, out_w).unwrap();
            let composed = normalize(&cropped, DEFAULT_MEAN, DEFAULT_STD).unwrap();

            assert!(fused.bitwise_eq(&composed), "case {case}: {h}x{w} → {out_h}x{out_w}");
            assert_eq!(rng_a.state(), rng_b.state(), "draw counts diverged");
        }
    }

    #[test]
    fn fused_full_size_mean0_std1_is_div255() {
        let img = seeded_u8_image(3, 4, 17);
        let mut rng = SampleRng::new(5);
        let out = fused_crop_normalize(&img, &mut rng, 3, 4, [0.0; 3], [1.0; 3]).unwrap();
        let expect: Vec<f32> = img.as_u8().unwrap().iter().map(|&b| b as f32 / 255.0).collect();
        assert_eq!(out.as_f32().unwrap(), expect.as_slice());
    }

    #[test]
    fn draw_accounting_per_op() {
        let img = seeded_u8_image(8, 8, 18);
        let f_img = seeded_f32_image(8, 8, 18);
        let cases: [(AugmentOp, &ImageTensor); 6] = [
            (AugmentOp::ResizeShortSide { target: 4 }, &img),
            (AugmentOp::RandomCrop { out_h: 3, out_w: 5 }, &img),
            (AugmentOp::RandomHFlip { p: 0.5 }, &img),
            (AugmentOp::ColorJitter { brightness: 0.4, contrast: 0.4, saturation: 0.4 }, &f_img),
            (AugmentOp::Normalize { mean: DEFAULT_MEAN, std: DEFAULT_STD }, &img),
            (
                AugmentOp::FusedCropNormalize {
                    out_h: 2,
                    out_w: 2,
                    mean: DEFAULT_MEAN,
                    std: DEFAULT_STD,
                },
                &img,
            ),
        ];
        for (op, input) in &cases {
            for seed in [0u64, 1, 0xFFFF_FFFF_FFFF_FFFF, 0x1234_5678] {
                let mut rng = SampleRng::new(seed);
                apply_op(input, op, &mut rng).unwrap();
                assert_eq!(
                    rng.state(),
                    advanced(SampleRng::new(seed), op.rng_draws()),
                    "{op:?} at seed {seed}"
                );
            }
        }
    }

    #[test]
    fn chain_validation() {
        // Normalize not last → invalid.
        assert!(AugmentChain::new(vec![
            AugmentOp::Normalize { mean: DEFAULT_MEAN, std: DEFAULT_STD },
            AugmentOp::RandomHFlip { p: 0.5 },
        ])
        .is_err());
        // Two normalize-family ops → invalid.
        assert!(AugmentChain::new(vec![
            AugmentOp::FusedCropNormalize { out_h: 2, out_w: 2, mean: DEFAULT_MEAN, std: DEFAULT_STD },
            AugmentOp::Normalize { mean: DEFAULT_MEAN, std: DEFAULT_STD },
        ])
        .is_err());
        // Bad op parameters → invalid.
        assert!(AugmentChain::new(vec![AugmentOp::RandomHFlip { p: 1.5 }]).is_err());
        assert!(AugmentChain::new(vec![AugmentOp::ColorJitter {
            brightness: -0.1,
            contrast: 0.0,
            saturation: 0.0
        }])
        .is_err());
        assert!(AugmentChain::new(vec![AugmentOp::RandomCrop { out_h: 0, out_w: 1 }]).is_err());
        // Empty chain is fine.
        assert!(AugmentChain::new(vec![]).is_ok());
    }

    #[test]
    fn apply_chain_empty_is_f32_cast() {
        let img = seeded_u8_image(2, 2, 19);
        let out = apply_chain(&img, &AugmentChain::new(vec![]).unwrap(), 42).unwrap();
        assert!(out.bitwise_eq(&img.clone().into_f32()));
    }

    #[test]
    fn apply_chain_deterministic() {
        let img = seeded_u8_image(40, 30, 20);
        let chain = AugmentPreset::Extensive.chain();
        // Short side 30 < 224 still resizes up fine; crop then needs 224 ≤ 224.
        let a = apply_chain(&img, &chain, 7).unwrap();
        let b = apply_chain(&img, &chain, 7).unwrap();
        assert!(a.bitwise_eq(&b));
        let c = apply_chain(&img, &chain, 8).unwrap();
        assert_eq!((c.height(), c.width(), c.channels()), (224, 224, 3));
    }

    #[test]
    fn apply_chain_attaches_op_index_on_failure() {
        let img = seeded_u8_image(4, 4, 21);
        let chain = AugmentChain::new(vec![
            AugmentOp::RandomHFlip { p: 0.5 },
            AugmentOp::RandomCrop { out_h: 10, out_w: 10 },
        ])
        .unwrap();
        match apply_chain(&img, &chain, 0) {
            Err(CoreError::ChainOp { index: 1, source }) => {
                assert!(matches!(*source, CoreError::InvalidArgument(_)));
            }
            other => panic!("expected ChainOp at index 1, got {other:?}"),
        }
    }

    #[test]
    fn presets_match_their_definitions() {
        let few = AugmentPreset::Few.chain();
        assert_eq!(few.len(), 4);
        assert!(matches!(few.ops()[0], AugmentOp::ResizeShortSide { target: 256 }));
        assert!(matches!(few.ops()[1], AugmentOp::RandomCrop { out_h: 224, out_w: 224 }));
        assert!(matches!(few.ops()[2], AugmentOp::RandomHFlip { p } if p == 0.5));
        assert!(matches!(few.ops()[3], AugmentOp::Normalize { .. }));

        let ext = AugmentPreset::Extensive.chain();
        assert_eq!(ext.len(), 5);
        assert!(matches!(ext.ops()[3], AugmentOp::ColorJitter { .. }));
        assert!(ext.ops()[4].is_normalize_family());

        assert_eq!(AugmentPreset::from_name("few"), Some(AugmentPreset::Few));
        assert_eq!(AugmentPreset::from_name("extensive"), Some(AugmentPreset::Extensive));
        assert_eq!(AugmentPreset::from_name("Some"), None);
    }

    #[test]
    fn preset_shape_contract() {
        for preset in [AugmentPreset::Few, AugmentPreset::Extensive] {
            for (h, w) in [(256, 256), (224, 224), (300, 500), (1000, 224)] {
                let img = seeded_u8_image(h, w, h as u64 * 31 + w as u64);
                let out = apply_chain(&img, &preset.chain(), sample_seed(1, 0, 0)).unwrap();
                assert_eq!((out.height(), out.width(), out.channels()), (224, 224, 3));
                assert_eq!(out.dtype(), Dtype::F32);
            }
        }
    }
}

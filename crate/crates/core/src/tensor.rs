//! The in-memory image type shared by the codec and augmentation layers.

use alloc::vec::Vec;

use crate::error::CoreError;

/// Pixel element type. Wire codes are part of the container format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    U8,
    F32,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::U8 => 0,
            Dtype::F32 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, CoreError> {
        match code {
            0 => Ok(Dtype::U8),
            1 => Ok(Dtype::F32),
            _ => Err(CoreError::Payload("unknown dtype code")),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PixelBuf {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

/// An H×W×C image, row-major with interleaved channels: the value at
/// (y, x, c) lives at index `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: u32,
    width: u32,
    channels: u32,
    data: PixelBuf,
}

impl ImageTensor {
    pub fn from_u8(height: u32, width: u32, channels: u32, data: Vec<u8>) -> Result<Self, CoreError> {
        Self::check_dims(height, width, channels, data.len())?;
        Ok(ImageTensor { height, width, channels, data: PixelBuf::U8(data) })
    }

    pub fn from_f32(height: u32, width: u32, channels: u32, data: Vec<f32>) -> Result<Self, CoreError> {
        Self::check_dims(height, width, channels, data.len())?;
        Ok(ImageTensor { height, width, channels, data: PixelBuf::F32(data) })
    }

    fn check_dims(height: u32, width: u32, channels: u32, len: usize) -> Result<(), CoreError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(CoreError::InvalidArgument("image dimensions must be positive"));
        }
        let expected = height as usize * width as usize * channels as usize;
        if len != expected {
            return Err(CoreError::DimMismatch { expected, got: len });
        }
        Ok(())
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    /// (height, width, channels) in one call.
    pub fn dims(&self) -> (u32, u32, u32) {
        (self.height, self.width, self.channels)
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            PixelBuf::U8(_) => Dtype::U8,
            PixelBuf::F32(_) => Dtype::F32,
        }
    }

    /// Number of scalar values (h·w·c).
    pub fn value_count(&self) -> usize {
        self.height as usize * self.width as usize * self.channels as usize
    }

    pub fn data(&self) -> &PixelBuf {
        &self.data
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            PixelBuf::U8(v) => Some(v),
            PixelBuf::F32(_) => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            PixelBuf::F32(v) => Some(v),
            PixelBuf::U8(_) => None,
        }
    }

    pub fn index(&self, y: u32, x: u32, c: u32) -> usize {
        debug_assert!(y < self.height && x < self.width && c < self.channels);
        (y as usize * self.width as usize + x as usize) * self.channels as usize + c as usize
    }

    /// Value at (y, x, c) widened to f32. Test and oracle convenience.
    pub fn get_f32(&self, y: u32, x: u32, c: u32) -> f32 {
        let i = self.index(y, x, c);
        match &self.data {
            PixelBuf::U8(v) => v[i] as f32,
            PixelBuf::F32(v) => v[i],
        }
    }

    /// Numeric cast to f32 with no scaling: a u8 255 becomes 255.0.
    pub fn into_f32(self) -> ImageTensor {
        let data = match self.data {
            PixelBuf::U8(v) => v.iter().map(|&b| b as f32).collect(),
            PixelBuf::F32(v) => v,
        };
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: PixelBuf::F32(data),
        }
    }

    /// Strict equality: same dims, same dtype, and bit-identical values.
    /// (`PartialEq` on f32 would treat 0.0 == -0.0; tests want bits.)
    pub fn bitwise_eq(&self, other: &ImageTensor) -> bool {
        if (self.height, self.width, self.channels) != (other.height, other.width, other.channels) {
            return false;
        }
        match (&self.data, &other.data) {
            (PixelBuf::U8(a), PixelBuf::U8(b)) => a == b,
            (PixelBuf::F32(a), PixelBuf::F32(b)) => {
                a.len() == b.len()
                    && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

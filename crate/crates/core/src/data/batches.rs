//! Seed-deterministic batch iteration with optional per-sample augmentation
//! (horizontal flip, 4-pixel pad-and-crop). The iterator owns its generator;
//! two iterators built from equal rng states yield identical streams.

use crate::data::Dataset;
use crate::numerics::rng::Rng;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AugmentFlags {
    pub flip: bool,
    pub crop: bool,
}

impl AugmentFlags {
    pub fn off() -> Self {
        AugmentFlags::default()
    }
    pub fn any(&self) -> bool {
        self.flip || self.crop
    }
}

const CROP_PAD: usize = 4;

pub struct BatchIter<'a, T: Scalar> {
    data: &'a Dataset<T>,
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: Rng,
    augment: AugmentFlags,
}

impl<'a, T: Scalar> BatchIter<'a, T> {
    /// Shuffles once up front; the remaining rng stream feeds augmentation
    /// draws in sample order (flip bit first, then crop offsets).
    pub fn new(data: &'a Dataset<T>, batch: usize, mut rng: Rng, augment: AugmentFlags) -> Self {
        assert!(batch >= 1, "batch size must be at least 1");
        let mut order: Vec<usize> = (0..data.len()).collect();
        rng.shuffle(&mut order);
        BatchIter {
            data,
            order,
            pos: 0,
            batch,
            rng,
            augment,
        }
    }

    fn augment_sample(&mut self, pixels: &mut [T], h: usize, w: usize, ch: usize) {
        if self.augment.flip && self.rng.next_u64() & 1 == 1 {
            for y in 0..h {
                for x in 0..w / 2 {
                    for c in 0..ch {
                        let a = (y * w + x) * ch + c;
                        let b = (y * w + (w - 1 - x)) * ch + c;
                        pixels.swap(a, b);
                    }
                }
            }
        }
        if self.augment.crop {
            let dy = self.rng.gen_range(2 * CROP_PAD + 1) as isize - CROP_PAD as isize;
            let dx = self.rng.gen_range(2 * CROP_PAD + 1) as isize - CROP_PAD as isize;
            if dy != 0 || dx != 0 {
                let src = pixels.to_vec();
                for y in 0..h as isize {
                    for x in 0..w as isize {
                        let (sy, sx) = (y + dy, x + dx);
                        for c in 0..ch {
                            let dst = ((y * w as isize + x) as usize) * ch + c;
                            pixels[dst] = if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize
                            {
                                src[((sy * w as isize + sx) as usize) * ch + c]
                            } else {
                                T::ZERO
                            };
                        }
                    }
                }
            }
        }
    }
}

impl<'a, T: Scalar> Iterator for BatchIter<'a, T> {
    type Item = (Tensor<T>, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let chunk = &self.order[self.pos..end];
        let (mut images, labels) = self.data.gather(chunk);
        self.pos = end;
        if self.augment.any() {
            let (h, w, ch) = self.data.dims();
            let stride = h * w * ch;
            for i in 0..labels.len() {
                let mut pixels = images.data()[i * stride..(i + 1) * stride].to_vec();
                self.augment_sample(&mut pixels, h, w, ch);
                images.data_mut()[i * stride..(i + 1) * stride].copy_from_slice(&pixels);
            }
        }
        Some((images, labels))
    }
}

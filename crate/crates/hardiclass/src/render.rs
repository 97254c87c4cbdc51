//! Binary PPM (P6) label images.

use hardiclass_core::{Label, LabelVolume};

pub const ERROR_COLOR: [u8; 3] = [255, 255, 255];
pub const CORRECT_COLOR: [u8; 3] = [0, 0, 0];
/// Separator column between panels.
const GAP_COLOR: [u8; 3] = [64, 64, 64];

pub fn label_color(label: Label) -> [u8; 3] {
    match label {
        Label::Csf => [0, 0, 255],
        Label::Gm => [128, 128, 128],
        Label::Wmsf => [0, 255, 0],
        Label::Wmcf => [255, 0, 0],
    }
}

/// RGB raster with a P6 encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        Self { width, height, pixels: vec![fill; width * height] }
    }

    pub fn set(&mut self, x: usize, y: usize, c: [u8; 3]) {
        self.pixels[y * self.width + x] = c;
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().flatten());
        out
    }
}

/// One slice as three panels left to right: predicted labels, ground truth,
/// and the error mask (white where they differ). Each voxel becomes a
/// `scale x scale` block; image rows run from the highest `y` down to `y = 0`.
pub fn render_slice(predicted: &LabelVolume, truth: &LabelVolume, z: usize, scale: usize) -> Image {
    let d = truth.dims();
    let scale = scale.max(1);
    let (pw, ph) = (d.nx * scale, d.ny * scale);
    let mut img = Image::new(3 * pw + 2, ph, GAP_COLOR);
    for y in 0..d.ny {
        for x in 0..d.nx {
            let (p, t) = (predicted.get(x, y, z), truth.get(x, y, z));
            let colors = [label_color(p), label_color(t), if p == t { CORRECT_COLOR } else { ERROR_COLOR }];
            for (panel, c) in colors.into_iter().enumerate() {
                let x0 = panel * (pw + 1) + x * scale;
                let y0 = (d.ny - 1 - y) * scale;
                for dy in 0..scale {
                    for dx in 0..scale {
                        img.set(x0 + dx, y0 + dy, c);
                    }
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use hardiclass_core::Dims;

    #[test]
    fn panels_and_header() {
        let d = Dims::new(2, 1, 1);
        let truth = LabelVolume::new(d, vec![Label::Csf, Label::Wmcf]).unwrap();
        let pred = LabelVolume::new(d, vec![Label::Csf, Label::Wmsf]).unwrap();
        let img = render_slice(&pred, &truth, 0, 1);
        assert_eq!((img.width, img.height), (8, 1));
        assert_eq!(img.get(1, 0), label_color(Label::Wmsf));
        assert_eq!(img.get(4, 0), label_color(Label::Wmcf));
        assert_eq!(img.get(6, 0), CORRECT_COLOR);
        assert_eq!(img.get(7, 0), ERROR_COLOR);
        let ppm = img.to_ppm();
        assert!(ppm.starts_with(b"P6\n8 1\n255\n"));
        assert_eq!(ppm.len(), 11 + 24);
    }
}

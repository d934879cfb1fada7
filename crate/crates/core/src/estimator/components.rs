//! Connected components of label images and Otsu binarization.

/// A 4-connected region of equal nonzero label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub label: u32,
    /// Linear pixel indices, row-major.
    pub pixels: Vec<usize>,
    /// `[x0, y0, x1, y1]` inclusive.
    pub bounds: [usize; 4],
}

impl Component {
    pub fn bbox(&self) -> [f64; 4] {
        let [x0, y0, x1, y1] = self.bounds;
        [x0 as f64, y0 as f64, (x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64]
    }
}

pub fn connected_components(labels: &[u32], width: usize, height: usize) -> Vec<Component> {
    let mut seen = vec![false; labels.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        let label = labels[start];
        if label == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        let mut bounds = [usize::MAX, usize::MAX, 0, 0];
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (x, y) = (i % width, i / width);
            bounds = [bounds[0].min(x), bounds[1].min(y), bounds[2].max(x), bounds[3].max(y)];
            let mut visit = |j: usize| {
                if !seen[j] && labels[j] == label {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        pixels.sort_unstable();
        out.push(Component { label, pixels, bounds });
    }
    out
}

/// Otsu threshold of an 8-bit histogram: pixels strictly above it are
/// foreground.
pub fn otsu_threshold(gray: &[u8]) -> u8 {
    let mut hist = [0u64; 256];
    for &g in gray {
        hist[g as usize] += 1;
    }
    let total = gray.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &h)| i as f64 * h as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best_t, mut best_var) = (0u8, -1.0);
    for (t, &h) in hist.iter().enumerate() {
        w0 += h as f64;
        sum0 += t as f64 * h as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    best_t
}

/// Foreground label image (1 above the Otsu threshold, else 0).
pub fn binarize(gray: &[u8]) -> Vec<u32> {
    let t = otsu_threshold(gray);
    gray.iter().map(|&g| u32::from(g > t)).collect()
}

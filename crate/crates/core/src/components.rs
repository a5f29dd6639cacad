//! 4-connected component labelling of 2-D masks.

use std::collections::VecDeque;

use crate::volume::Mask2D;

/// Component labels in row-major discovery order.
#[derive(Debug, Clone)]
pub struct Components {
    pub width: usize,
    pub height: usize,
    /// 0 for background, `1..=sizes.len()` for components.
    pub labels: Vec<u32>,
    /// `sizes[k]` is the pixel count of label `k + 1`.
    pub sizes: Vec<usize>,
}

impl Components {
    /// Label of the largest component; ties go to the first discovered.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(usize, usize)> = None;
        for (k, &s) in self.sizes.iter().enumerate() {
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((k, s));
            }
        }
        best.map(|(k, _)| k as u32 + 1)
    }

    pub fn mask_of(&self, label: u32) -> Mask2D {
        let data = self.labels.iter().map(|&l| (l == label) as u8).collect();
        Mask2D::new(self.width, self.height, data).expect("labels match mask dims")
    }
}

pub fn label_components(mask: &Mask2D) -> Components {
    let (w, h) = (mask.width(), mask.height());
    let fg = mask.data();
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if fg[start] == 0 || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if fg[j] != 0 && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    Components {
        width: w,
        height: h,
        labels,
        sizes,
    }
}

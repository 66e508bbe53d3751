//! Kernel inspection: thresholded supports and their overlap with a
//! structuring element.

use morphlearn::datagen::Operator;
use morphlearn::Result;

/// Cells whose weight exceeds `fraction * max(w)`.
pub fn support(weights: &[f64], fraction: f64) -> Vec<bool> {
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    weights.iter().map(|&w| w > fraction * max).collect()
}

/// Intersection over union of two masks of equal length; 1 when both are
/// empty.
pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len(), "mask lengths differ");
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Support a single `k x k` PConv kernel should learn for a dilation or
/// erosion target. The CHM is a correlation, so dilation by `B` appears as
/// the reflected element while erosion appears as `B` itself.
pub fn expected_support(op: &Operator, k: usize) -> Result<Option<Vec<bool>>> {
    Ok(match op {
        Operator::Dilate(se) => Some(se.build()?.reflect().embedded_mask(k)?),
        Operator::Erode(se) => Some(se.build()?.embedded_mask(k)?),
        _ => None,
    })
}

/// Text rendering of a mask, `#` for set cells.
pub fn render_mask(mask: &[bool], width: usize) -> String {
    mask.chunks(width)
        .map(|row| row.iter().map(|&m| if m { '#' } else { '.' }).collect::<String>())
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_cases() {
        assert_eq!(iou(&[true, true, false], &[true, false, false]), 0.5);
        assert_eq!(iou(&[false, false], &[false, false]), 1.0);
        assert_eq!(iou(&[true, false], &[false, true]), 0.0);
    }

    #[test]
    fn support_threshold_is_strict() {
        assert_eq!(support(&[1.0, 0.5, 0.51, 0.0], 0.5), vec![true, false, true, false]);
    }

    #[test]
    fn dilation_support_is_reflected() {
        let op: Operator = "dilate:line:3:45".parse().unwrap();
        let dil = expected_support(&op, 3).unwrap().unwrap();
        let ero = expected_support(&"erode:line:3:45".parse().unwrap(), 3).unwrap().unwrap();
        // A symmetric line through the centre reflects onto itself.
        assert_eq!(dil, ero);
        assert_eq!(dil.iter().filter(|&&m| m).count(), 3);
        assert!(expected_support(&"open:square:3".parse().unwrap(), 5).unwrap().is_none());
    }
}

use crate::error::{invalid, Result};

/// 1 where any in-bounds 4-neighbor differs in the (class, instance) pair.
pub fn compute_edge_map(semantic: &[u16], instance: &[u16], width: usize, height: usize) -> Result<Vec<u8>> {
    let n = width * height;
    if semantic.len() != n || instance.len() != n {
        return Err(invalid("edge map", format!("maps of {} and {} labels for {width}×{height}", semantic.len(), instance.len())));
    }
    let key = |p: usize| (semantic[p], instance[p]);
    let mut edges = vec![0u8; n];
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            let differs = (x > 0 && key(p - 1) != key(p))
                || (x + 1 < width && key(p + 1) != key(p))
                || (y > 0 && key(p - width) != key(p))
                || (y + 1 < height && key(p + width) != key(p));
            edges[p] = differs as u8;
        }
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_map_has_no_edges() {
        let e = compute_edge_map(&[2; 20], &[0; 20], 5, 4).unwrap();
        assert!(e.iter().all(|&v| v == 0));
    }

    #[test]
    fn vertical_split_marks_both_sides() {
        let (w, h, c) = (8, 3, 5);
        let sem: Vec<u16> = (0..w * h).map(|p| if p % w < c { 0 } else { 1 }).collect();
        let e = compute_edge_map(&sem, &vec![0; w * h], w, h).unwrap();
        for p in 0..w * h {
            assert_eq!(e[p] == 1, p % w == c - 1 || p % w == c, "pixel {p}");
        }
    }

    #[test]
    fn instance_change_alone_is_an_edge() {
        let e = compute_edge_map(&[4, 4], &[1, 2], 2, 1).unwrap();
        assert_eq!(e, vec![1, 1]);
    }
}

//! Zhang–Suen thinning.

use crate::raster::BinaryMask;

/// One-pixel-wide skeleton of `mask`.
///
/// Plain Zhang–Suen can erase a component completely (a 2x2 block vanishes in
/// the first sub-iteration). Any component that ends up empty keeps its first
/// pixel in raster order, so every component of the input survives.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let mut cur = mask.clone();
    let mut deletions = Vec::new();
    loop {
        let mut changed = false;
        for first_pass in [true, false] {
            deletions.clear();
            for y in 0..h {
                for x in 0..w {
                    if cur.get(x, y) && deletable(&cur, x, y, first_pass) {
                        deletions.push((x, y));
                    }
                }
            }
            changed |= !deletions.is_empty();
            for &(x, y) in &deletions {
                cur.set(x, y, false);
            }
        }
        if !changed {
            break;
        }
    }
    for component in components(mask) {
        if component.iter().all(|&(x, y)| !cur.get(x, y)) {
            let (x, y) = component[0];
            cur.set(x, y, true);
        }
    }
    cur
}

/// Neighbours P2..P9, clockwise from north.
fn neighbours(m: &BinaryMask, x: usize, y: usize) -> [bool; 8] {
    let at = |dx: isize, dy: isize| {
        let (nx, ny) = (x as isize + dx, y as isize + dy);
        nx >= 0
            && ny >= 0
            && (nx as usize) < m.width()
            && (ny as usize) < m.height()
            && m.get(nx as usize, ny as usize)
    };
    [at(0, -1), at(1, -1), at(1, 0), at(1, 1), at(0, 1), at(-1, 1), at(-1, 0), at(-1, -1)]
}

fn deletable(m: &BinaryMask, x: usize, y: usize, first_pass: bool) -> bool {
    let p = neighbours(m, x, y);
    let b = p.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
    if a != 1 {
        return false;
    }
    let [p2, _, p4, _, p6, _, p8, _] = p;
    if first_pass {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

/// 8-connected components, each listed in raster order.
pub fn components(mask: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || seen[y * w + x] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![(x, y)];
            seen[y * w + x] = true;
            while let Some((cx, cy)) = stack.pop() {
                comp.push((cx, cy));
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (nx, ny) = (cx as isize + dx, cy as isize + dy);
                        if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if mask.get(nx, ny) && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            comp.sort_by_key(|&(x, y)| (y, x));
            out.push(comp);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn thin_inputs_unchanged() {
        let mut single = BinaryMask::filled(5, 5, false);
        single.set(2, 2, true);
        assert_eq!(skeletonize(&single), single);
        let line = BinaryMask::filled(5, 1, true);
        assert_eq!(skeletonize(&line), line);
    }

    #[test]
    fn solid_block_thins_to_center() {
        // Hand-run Zhang–Suen on a 5x5 block inside a 7x7 frame: iteration 1
        // strips the corners, right and bottom edges, then the top and left
        // edges and the (3,3) interior corner; iteration 2 leaves the center.
        let block = BinaryMask::from_fn(7, 7, |x, y| (1..=5).contains(&x) && (1..=5).contains(&y));
        let mut expected = BinaryMask::filled(7, 7, false);
        expected.set(3, 3, true);
        assert_eq!(skeletonize(&block), expected);
    }

    #[test]
    fn two_by_two_block_survives() {
        let block = BinaryMask::from_fn(4, 4, |x, y| (1..=2).contains(&x) && (1..=2).contains(&y));
        let skel = skeletonize(&block);
        assert_eq!(skel.count(), 1);
        assert!(skel.get(1, 1));
    }

    #[test]
    fn thick_stroke_keeps_one_component() {
        // An L-shaped stroke three pixels thick.
        let m = BinaryMask::from_fn(20, 20, |x, y| {
            ((3..6).contains(&x) && (2..17).contains(&y)) || ((3..16).contains(&x) && (14..17).contains(&y))
        });
        let skel = skeletonize(&m);
        assert_eq!(components(&skel).len(), 1);
        assert!(skel.count() < m.count() / 2);
    }

    proptest! {
        #[test]
        fn skeleton_is_idempotent_subset(seed in any::<u64>(), density in 0.2f64..0.8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = BinaryMask::from_fn(14, 11, |_, _| rng.gen_bool(density));
            let s = skeletonize(&m);
            prop_assert!(s.is_subset_of(&m));
            prop_assert_eq!(skeletonize(&s), s.clone());
            for comp in components(&m) {
                prop_assert!(comp.iter().any(|&(x, y)| s.get(x, y)));
            }
        }
    }
}

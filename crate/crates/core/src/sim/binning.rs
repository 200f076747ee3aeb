/// Equal-width bin of `value` over `[lo, hi]` with `n` bins. A value on an
/// inner boundary belongs to the upper bin; `hi` itself belongs to the last
/// bin. Values outside the range are clamped into the end bins.
pub fn bin_index(value: f64, lo: f64, hi: f64, n: usize) -> usize {
    debug_assert!(n > 0 && hi > lo);
    if value >= hi {
        return n - 1;
    }
    if value <= lo {
        return 0;
    }
    let pos = (value - lo) / (hi - lo) * n as f64;
    let mut bin = (pos.floor() as usize).min(n - 1);
    // Undo rounding that pushed a value just below an inner edge up into the
    // next bin, or left a value sitting exactly on an edge one bin too low.
    let edge = |k: usize| lo + (hi - lo) * k as f64 / n as f64;
    if bin > 0 && value < edge(bin) {
        bin -= 1;
    } else if bin + 1 < n && value >= edge(bin + 1) {
        bin += 1;
    }
    bin
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries_go_to_the_upper_bin_except_the_last() {
        assert_eq!(bin_index(0.0, 0.0, 1.0, 10), 0);
        assert_eq!(bin_index(0.1, 0.0, 1.0, 10), 1);
        assert_eq!(bin_index(0.3, 0.0, 1.0, 10), 3);
        assert_eq!(bin_index(0.7, 0.0, 1.0, 10), 7);
        assert_eq!(bin_index(0.29999, 0.0, 1.0, 10), 2);
        assert_eq!(bin_index(1.0, 0.0, 1.0, 10), 9);
        assert_eq!(bin_index(-0.6, -1.0, 1.0, 10), 2);
        assert_eq!(bin_index(5.0, 0.0, 1.0, 10), 9);
        assert_eq!(bin_index(-5.0, 0.0, 1.0, 10), 0);
    }

    #[test]
    fn every_decimal_edge_lands_in_its_own_bin() {
        for k in 0..10 {
            let edge: f64 = format!("0.{k}").parse().unwrap();
            assert_eq!(bin_index(edge, 0.0, 1.0, 10), k);
        }
    }
}

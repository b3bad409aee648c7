use alloc::format;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};

/// Repeat row `i` of `hidden` `durations[i]` times, in order.
pub fn length_regulate(hidden: &Tensor, durations: &[usize]) -> Result<Tensor> {
    let (rows, d) = hidden.dims2()?;
    if durations.len() != rows {
        return Err(Error::Shape(format!("{} durations for {rows} rows", durations.len())));
    }
    let total: usize = durations.iter().sum();
    if total == 0 {
        return Err(Error::Shape("durations sum to zero".into()));
    }
    let mut data = Vec::with_capacity(total * d);
    for (r, &n) in durations.iter().enumerate() {
        for _ in 0..n {
            data.extend_from_slice(hidden.row(r));
        }
    }
    Tensor::from_vec(&[total, d], data)
}

/// Sum each run of expanded-row gradients back onto its source row.
pub fn length_regulate_backward(dy: &Tensor, durations: &[usize]) -> Result<Tensor> {
    let (total, d) = dy.dims2()?;
    if durations.iter().sum::<usize>() != total {
        return Err(Error::Shape(format!("durations do not sum to {total}")));
    }
    let mut out = Tensor::zeros(&[durations.len(), d]);
    let mut src = 0;
    for (r, &n) in durations.iter().enumerate() {
        for _ in 0..n {
            let g = &mut out.data_mut()[r * d..(r + 1) * d];
            g.iter_mut().zip(dy.row(src)).for_each(|(a, b)| *a += b);
            src += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::random;
    use super::*;
    use rand::RngExt;

    #[test]
    fn unit_durations_identity() {
        let h = random(&[4, 3], 1);
        assert_eq!(length_regulate(&h, &[1, 1, 1, 1]).unwrap(), h);
    }

    #[test]
    fn expands_in_order() {
        let h = Tensor::from_vec(&[2, 2], alloc::vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = length_regulate(&h, &[2, 3]).unwrap();
        assert_eq!(y.shape(), &[5, 2]);
        assert_eq!(y.data(), &[1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 4.0, 3.0, 4.0]);
    }

    #[test]
    fn random_durations_row_count() {
        let mut rng = crate::rng::stream(3, "durations");
        let durations: Vec<usize> = (0..17).map(|_| rng.random_range(0..6)).collect();
        let total: usize = durations.iter().sum();
        let y = length_regulate(&random(&[17, 5], 2), &durations).unwrap();
        assert_eq!(y.dims2().unwrap(), (total, 5));
        let back = length_regulate_backward(&Tensor::filled(&[total, 5], 1.0), &durations).unwrap();
        for (r, &n) in durations.iter().enumerate() {
            assert!(back.row(r).iter().all(|&v| v == n as f64));
        }
    }

    #[test]
    fn zero_durations_rejected() {
        assert!(length_regulate(&random(&[3, 2], 0), &[0, 0, 0]).is_err());
        assert!(length_regulate(&random(&[3, 2], 0), &[1, 1]).is_err());
    }
}

//! Shared fixed-step RK4 kernel over complex amplitude vectors.

use crate::error::Result;
use crate::C64;

pub(crate) struct Rk4Buffers {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    scratch: Vec<C64>,
}

impl Rk4Buffers {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            k1: vec![C64::ZERO; dim],
            k2: vec![C64::ZERO; dim],
            k3: vec![C64::ZERO; dim],
            k4: vec![C64::ZERO; dim],
            scratch: vec![C64::ZERO; dim],
        }
    }
}

/// One classical RK4 step of size `h` with exact stage times t, t + h/2, t + h.
/// `deriv(t, y, out)` must write dy/dt into `out`.
pub(crate) fn rk4_step<F>(
    y: &mut [C64],
    t: f64,
    h: f64,
    buf: &mut Rk4Buffers,
    mut deriv: F,
) -> Result<()>
where
    F: FnMut(f64, &[C64], &mut [C64]) -> Result<()>,
{
    let n = y.len();
    deriv(t, y, &mut buf.k1)?;
    for i in 0..n {
        buf.scratch[i] = y[i] + 0.5 * h * buf.k1[i];
    }
    deriv(t + 0.5 * h, &buf.scratch, &mut buf.k2)?;
    for i in 0..n {
        buf.scratch[i] = y[i] + 0.5 * h * buf.k2[i];
    }
    deriv(t + 0.5 * h, &buf.scratch, &mut buf.k3)?;
    for i in 0..n {
        buf.scratch[i] = y[i] + h * buf.k3[i];
    }
    deriv(t + h, &buf.scratch, &mut buf.k4)?;
    let w = h / 6.0;
    for i in 0..n {
        y[i] += w * (buf.k1[i] + 2.0 * buf.k2[i] + 2.0 * buf.k3[i] + buf.k4[i]);
    }
    Ok(())
}

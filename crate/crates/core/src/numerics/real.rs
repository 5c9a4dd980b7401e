use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point element type of tensors and model parameters.
///
/// Implemented for `f32` (training) and `f64` (gradient verification).
pub trait Real:
    Float + FromPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Tag stored in checkpoints.
    const DTYPE: &'static str;
    const BYTES: usize;

    fn erf(self) -> Self;

    /// `c = alpha * a·b + beta * c` with explicit row/column strides.
    ///
    /// Shapes: a is m×k, b is k×n, c is m×n.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: usize,
        csa: usize,
        b: &[Self],
        rsb: usize,
        csb: usize,
        beta: Self,
        c: &mut [Self],
        rsc: usize,
        csc: usize,
    );

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

/// Largest element index touched by a strided m×n access, plus one.
#[inline]
fn extent(m: usize, n: usize, rs: usize, cs: usize) -> usize {
    if m == 0 || n == 0 {
        0
    } else {
        (m - 1) * rs + (n - 1) * cs + 1
    }
}

macro_rules! impl_real {
    ($t:ty, $name:literal, $gemm:path, $erf:path) => {
        impl Real for $t {
            const DTYPE: &'static str = $name;
            const BYTES: usize = std::mem::size_of::<$t>();

            #[inline]
            fn erf(self) -> Self {
                $erf(self)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: usize,
                csa: usize,
                b: &[Self],
                rsb: usize,
                csb: usize,
                beta: Self,
                c: &mut [Self],
                rsc: usize,
                csc: usize,
            ) {
                assert!(a.len() >= extent(m, k, rsa, csa), "gemm: lhs too short");
                assert!(b.len() >= extent(k, n, rsb, csb), "gemm: rhs too short");
                assert!(c.len() >= extent(m, n, rsc, csc), "gemm: output too short");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every strided access stays within the extents asserted above.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        rsc as isize,
                        csc as isize,
                    );
                }
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                let mut buf = [0u8; std::mem::size_of::<$t>()];
                buf.copy_from_slice(&bytes[..std::mem::size_of::<$t>()]);
                <$t>::from_le_bytes(buf)
            }
        }
    };
}

impl_real!(f32, "f32", matrixmultiply::sgemm, libm::erff);
impl_real!(f64, "f64", matrixmultiply::dgemm, libm::erf);

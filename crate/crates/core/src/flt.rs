//! Scalar float helpers routed through num-traits so the crate builds
//! without std. Calls use the trait path explicitly to stay unambiguous
//! whether or not the inherent std methods are in scope.

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    num_traits::Float::sqrt(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    num_traits::Float::abs(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    num_traits::Float::cos(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    num_traits::Float::sin(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    num_traits::Float::ln(x)
}

#[inline]
pub(crate) fn max(a: f64, b: f64) -> f64 {
    if a > b {
        a
    } else {
        b
    }
}

#[inline]
pub(crate) fn is_finite(x: f64) -> bool {
    num_traits::Float::is_finite(x)
}

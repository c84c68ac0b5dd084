#[allow(unused_imports)]
pub(crate) use alloc::{boxed::Box, format, string::String, string::ToString, vec, vec::Vec};
#[allow(unused_imports)]
pub(crate) use num_traits::Float;

pub mod fft;
pub mod shearlet;
pub mod wavelet;

pub use shearlet::{
    build_shearlet_system, build_shearlet_system_with, sh_analyze, sh_synthesize,
    sh_synthesize_adjoint, CoeffStack, Cone, ShearletIndex, ShearletSystem,
};
pub use wavelet::{
    build_wavelet_basis, dwt_analyze, dwt_synthesize, PyramidLayout, WaveletBasis,
    WaveletPyramid, WaveletRep,
};

#pragma once

// Umbrella header for the FlexConv kernel library: continuous convolutional
// kernels generated by multiplicative anisotropic Gabor networks, sized by a
// learnable Gaussian mask, with analytic anti-aliasing control.

#include "flexkernel/autodiff.hpp"
#include "flexkernel/checkpoint.hpp"
#include "flexkernel/config.hpp"
#include "flexkernel/datasets.hpp"
#include "flexkernel/errors.hpp"
#include "flexkernel/fft.hpp"
#include "flexkernel/flexconv.hpp"
#include "flexkernel/flexnet.hpp"
#include "flexkernel/gradcheck.hpp"
#include "flexkernel/grid.hpp"
#include "flexkernel/io.hpp"
#include "flexkernel/kernelgen.hpp"
#include "flexkernel/nn_ops.hpp"
#include "flexkernel/optim.hpp"
#include "flexkernel/rng.hpp"
#include "flexkernel/spectral.hpp"
#include "flexkernel/tensor.hpp"
#include "flexkernel/training.hpp"
#include "flexkernel/verification.hpp"

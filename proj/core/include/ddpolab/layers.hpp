#pragma once

#include "ddpolab/tensor.hpp"

namespace ddpolab::nn {

// Pure forward/backward math for the fixed layer inventory. All inputs are
// {C,H,W} feature maps or flat vectors; values are stored as float32. The
// scalar loss bridges on the tape accumulate in double, layer kernels work
// in float.

// 3x3 convolution, stride 1, zero padding, output size = input size.
// w: {C_out, C_in, 3, 3}, b: {C_out}
Tensor conv3x3(const Tensor& x, const Tensor& w, const Tensor& b);
void conv3x3_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                      Tensor& gx, Tensor& gw, Tensor& gb);

// y = W x + b with W: {m, n}, x: {n}
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
void affine_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                     Tensor& gx, Tensor& gw, Tensor& gb);

Tensor silu(const Tensor& x);
void silu_backward(const Tensor& x, const Tensor& gy, Tensor& gx);

float sigmoid(float z);
Tensor sigmoid(const Tensor& x);

// nearest-neighbor 2x down/up sampling (even extents required)
Tensor nearest_down2(const Tensor& x);
void nearest_down2_backward(const Tensor& x, const Tensor& gy, Tensor& gx);
Tensor nearest_up2(const Tensor& x);
void nearest_up2_backward(const Tensor& x, const Tensor& gy, Tensor& gx);

// 2x2 average pooling
Tensor avgpool2(const Tensor& x);
void avgpool2_backward(const Tensor& x, const Tensor& gy, Tensor& gx);

Tensor add(const Tensor& a, const Tensor& b);

// a*x + b*y with double coefficients, elementwise
Tensor axpby(double a, const Tensor& x, double b, const Tensor& y);

// x: {C,H,W} plus per-channel bias {C}
Tensor channel_bias(const Tensor& x, const Tensor& b);
void channel_bias_backward(const Tensor& gy, Tensor& gx, Tensor& gb);

Tensor reshape(const Tensor& x, std::vector<int> shape);

// sinusoidal embedding of an integer step, dim must be even
Tensor time_embedding(int t, int dim);

}  // namespace ddpolab::nn

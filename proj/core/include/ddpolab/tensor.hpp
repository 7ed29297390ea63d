#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ddpolab::nn {

// Dense row-major float32 array. The universal value carrier: images are
// {1,16,16}, logits {6}, conv weights {C_out,C_in,3,3}, scalars {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<float> data);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, float value);
  static Tensor scalar(float value);

  const std::vector<int>& shape() const { return shape_; }
  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  std::size_t size() const { return data_.size(); }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[axis]; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  // for {C,H,W} tensors
  float at3(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  float& at3(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

std::size_t shape_numel(const std::vector<int>& shape);

// Throws std::invalid_argument naming `what` on mismatch.
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);
void check_finite(const Tensor& t, const char* what);

}  // namespace ddpolab::nn
